//! JSON-lines log files and single-object JSON artifacts.
//!
//! Log readers reject malformed lines individually and report a count instead
//! of aborting: a multi-day log with a few corrupt records must still load.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::Result;

/// Outcome of reading a JSON-lines file with per-line error tolerance.
#[derive(Debug)]
pub struct JsonlRead<T> {
    pub records: Vec<T>,
    pub rejected_lines: usize,
}

/// Read a JSON-lines file, skipping lines that fail to parse.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<JsonlRead<T>> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    let mut rejected_lines = 0usize;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<T>(&line) {
            Ok(rec) => records.push(rec),
            Err(_) => rejected_lines += 1,
        }
    }
    Ok(JsonlRead { records, rejected_lines })
}

/// Write records as one JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = File::create(path)?;
    let mut writer = BufWriter::new(file);
    for rec in records {
        serde_json::to_writer(&mut writer, rec)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

/// Write a single pretty-printed JSON artifact (catalog, world, schema, report).
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path)?;
    let mut writer = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut writer, value)?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path)?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    #[derive(Debug, PartialEq, serde::Serialize, serde::Deserialize)]
    struct Row {
        id: u32,
    }

    #[test]
    fn malformed_lines_are_counted_not_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.jsonl");
        let mut f = File::create(&path).unwrap();
        writeln!(f, "{{\"id\":1}}").unwrap();
        writeln!(f, "not json").unwrap();
        writeln!(f, "{{\"id\":2}}").unwrap();
        writeln!(f).unwrap();
        let read: JsonlRead<Row> = read_jsonl(&path).unwrap();
        assert_eq!(read.records, vec![Row { id: 1 }, Row { id: 2 }]);
        assert_eq!(read.rejected_lines, 1);
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.jsonl");
        let rows = vec![Row { id: 7 }, Row { id: 8 }];
        write_jsonl(&path, &rows).unwrap();
        let read: JsonlRead<Row> = read_jsonl(&path).unwrap();
        assert_eq!(read.records, rows);
        assert_eq!(read.rejected_lines, 0);
    }
}
