//! Versioned binary weight container.
//!
//! Layout (little-endian): magic, format version, schema hash, k, hidden
//! sizes, then each tensor with explicit dimensions. Floats are written as
//! raw f64 bits, so a load reproduces forward outputs bit for bit. The loader
//! refuses files whose schema hash does not match the schema it is given.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{CoreError, Result};
use crate::features::FeatureSchema;

use super::{Linear, Matrix, ModelParams, TensorSet};

const MAGIC: &[u8; 8] = b"FRNKMDL1";
pub const FORMAT_VERSION: u32 = 1;

/// Upper bound on any stored dimension; catches corrupt headers before they
/// turn into huge allocations.
const MAX_DIM: u32 = 1 << 24;

fn write_matrix(w: &mut impl Write, m: &Matrix) -> Result<()> {
    w.write_u32::<LittleEndian>(m.rows as u32)?;
    w.write_u32::<LittleEndian>(m.cols as u32)?;
    for &v in &m.data {
        w.write_f64::<LittleEndian>(v)?;
    }
    Ok(())
}

fn read_matrix(r: &mut impl Read) -> Result<Matrix> {
    let rows = r.read_u32::<LittleEndian>()?;
    let cols = r.read_u32::<LittleEndian>()?;
    if rows > MAX_DIM || cols > MAX_DIM {
        return Err(CoreError::ModelFile(format!(
            "implausible tensor shape {rows}x{cols}"
        )));
    }
    let mut data = vec![0.0; rows as usize * cols as usize];
    for v in &mut data {
        *v = r.read_f64::<LittleEndian>()?;
    }
    Ok(Matrix { rows: rows as usize, cols: cols as usize, data })
}

fn write_vec(w: &mut impl Write, v: &[f64]) -> Result<()> {
    w.write_u32::<LittleEndian>(v.len() as u32)?;
    for &x in v {
        w.write_f64::<LittleEndian>(x)?;
    }
    Ok(())
}

fn read_vec(r: &mut impl Read) -> Result<Vec<f64>> {
    let len = r.read_u32::<LittleEndian>()?;
    if len > MAX_DIM {
        return Err(CoreError::ModelFile(format!("implausible vector length {len}")));
    }
    let mut out = vec![0.0; len as usize];
    for x in &mut out {
        *x = r.read_f64::<LittleEndian>()?;
    }
    Ok(out)
}

fn write_linear(w: &mut impl Write, l: &Linear) -> Result<()> {
    write_matrix(w, &l.w)?;
    write_vec(w, &l.b)
}

fn read_linear(r: &mut impl Read) -> Result<Linear> {
    Ok(Linear { w: read_matrix(r)?, b: read_vec(r)? })
}

/// Write weights paired with the schema that defines their input layout.
pub fn save(params: &ModelParams, schema: &FeatureSchema, path: &Path) -> Result<()> {
    if params.schema_hash != schema.content_hash() {
        return Err(CoreError::ModelFile(
            "params were built against a different schema".into(),
        ));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
    w.write_all(&params.schema_hash)?;
    w.write_u32::<LittleEndian>(params.k as u32)?;
    w.write_u32::<LittleEndian>(params.hidden_sizes.len() as u32)?;
    for &h in &params.hidden_sizes {
        w.write_u32::<LittleEndian>(h as u32)?;
    }

    let t = &params.tensors;
    w.write_u32::<LittleEndian>(t.embeddings.len() as u32)?;
    for m in &t.embeddings {
        write_matrix(&mut w, m)?;
    }
    write_matrix(&mut w, &t.filter_embedding)?;
    w.write_u32::<LittleEndian>(t.trunk.len() as u32)?;
    for l in &t.trunk {
        write_linear(&mut w, l)?;
    }
    write_linear(&mut w, &t.engagement_head)?;
    write_linear(&mut w, &t.conversion_head)?;
    w.flush()?;
    Ok(())
}

/// Load weights, refusing version or schema mismatches and truncated files.
pub fn load(path: &Path, schema: &FeatureSchema) -> Result<ModelParams> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CoreError::ModelFile("not a model weight file".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != FORMAT_VERSION {
        return Err(CoreError::ModelFile(format!(
            "unsupported format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let mut schema_hash = [0u8; 32];
    r.read_exact(&mut schema_hash)?;
    if schema_hash != schema.content_hash() {
        return Err(CoreError::ModelFile(
            "schema hash mismatch: weights were trained against a different schema".into(),
        ));
    }
    let k = r.read_u32::<LittleEndian>()? as usize;
    let num_hidden = r.read_u32::<LittleEndian>()?;
    if num_hidden > 64 {
        return Err(CoreError::ModelFile("implausible trunk depth".into()));
    }
    let mut hidden_sizes = Vec::with_capacity(num_hidden as usize);
    for _ in 0..num_hidden {
        hidden_sizes.push(r.read_u32::<LittleEndian>()? as usize);
    }

    let num_emb = r.read_u32::<LittleEndian>()?;
    if num_emb > 1024 {
        return Err(CoreError::ModelFile("implausible embedding count".into()));
    }
    let embeddings = (0..num_emb)
        .map(|_| read_matrix(&mut r))
        .collect::<Result<Vec<_>>>()?;
    let filter_embedding = read_matrix(&mut r)?;
    let num_trunk = r.read_u32::<LittleEndian>()?;
    if num_trunk as usize != hidden_sizes.len() {
        return Err(CoreError::ModelFile("trunk depth disagrees with header".into()));
    }
    let trunk = (0..num_trunk)
        .map(|_| read_linear(&mut r))
        .collect::<Result<Vec<_>>>()?;
    let engagement_head = read_linear(&mut r)?;
    let conversion_head = read_linear(&mut r)?;

    let params = ModelParams {
        k,
        hidden_sizes,
        schema_hash,
        tensors: TensorSet {
            embeddings,
            filter_embedding,
            trunk,
            engagement_head,
            conversion_head,
        },
    };
    if params.tensors.engagement_head.w.rows != k {
        return Err(CoreError::ModelFile("engagement head shape disagrees with k".into()));
    }
    Ok(params)
}
