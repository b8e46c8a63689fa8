//! Filter catalog and the binary filter-state vector.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterCategory {
    Amenity,
    BookingOption,
    Policy,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterDef {
    pub filter_id: usize,
    pub name: String,
    pub category: FilterCategory,
}

/// The ordered set of candidate filters. Ids are dense `0..k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterCatalog {
    pub filters: Vec<FilterDef>,
}

impl FilterCatalog {
    /// Build a catalog after checking id density and name uniqueness.
    pub fn new(filters: Vec<FilterDef>) -> Result<Self> {
        if filters.is_empty() {
            return Err(CoreError::InvalidCatalog("catalog must have k >= 1".into()));
        }
        let mut names = HashSet::new();
        for (i, f) in filters.iter().enumerate() {
            if f.filter_id != i {
                return Err(CoreError::InvalidCatalog(format!(
                    "filter ids must be dense 0..k, found id {} at position {}",
                    f.filter_id, i
                )));
            }
            if !names.insert(f.name.as_str()) {
                return Err(CoreError::InvalidCatalog(format!(
                    "duplicate filter name {:?}",
                    f.name
                )));
            }
        }
        Ok(Self { filters })
    }

    /// Number of filter candidates.
    pub fn k(&self) -> usize {
        self.filters.len()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.filters.get(id).map(|f| f.name.as_str())
    }
}

/// Length-k binary vector of applied filters. The all-zeros value is the
/// no-filter state used as the conversion baseline.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FilterVector {
    pub bits: Vec<u8>,
}

impl FilterVector {
    /// The no-filter state for a k-filter catalog.
    pub fn none(k: usize) -> Self {
        Self { bits: vec![0; k] }
    }

    pub fn k(&self) -> usize {
        self.bits.len()
    }

    pub fn is_none_state(&self) -> bool {
        self.bits.iter().all(|&b| b == 0)
    }

    pub fn is_applied(&self, id: usize) -> bool {
        self.bits.get(id).is_some_and(|&b| b == 1)
    }

    /// Ids of the applied filters, ascending.
    pub fn applied_ids(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| (b == 1).then_some(i))
            .collect()
    }

    pub fn count_applied(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }

    /// Bitwise-or with another vector of the same length.
    pub fn union(&self, other: &FilterVector) -> Result<FilterVector> {
        if self.k() != other.k() {
            return Err(CoreError::ShapeMismatch(format!(
                "filter vector lengths differ: {} vs {}",
                self.k(),
                other.k()
            )));
        }
        Ok(FilterVector {
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(&a, &b)| a | b)
                .collect(),
        })
    }

    /// Every entry must be 0 or 1 and length must match the catalog.
    pub fn validate(&self, catalog: &FilterCatalog) -> Result<()> {
        if self.k() != catalog.k() {
            return Err(CoreError::ShapeMismatch(format!(
                "filter vector length {} does not match catalog k={}",
                self.k(),
                catalog.k()
            )));
        }
        if self.bits.iter().any(|&b| b > 1) {
            return Err(CoreError::InvalidCatalog(
                "filter vector entries must be 0 or 1".into(),
            ));
        }
        Ok(())
    }
}

/// Build a filter vector from a set of applied ids.
pub fn make_filter_vector(
    catalog: &FilterCatalog,
    applied_ids: &HashSet<usize>,
) -> Result<FilterVector> {
    let k = catalog.k();
    let mut bits = vec![0u8; k];
    for &id in applied_ids {
        if id >= k {
            return Err(CoreError::InvalidFilter { id, k });
        }
        bits[id] = 1;
    }
    Ok(FilterVector { bits })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn catalog(k: usize) -> FilterCatalog {
        FilterCatalog::new(
            (0..k)
                .map(|i| FilterDef {
                    filter_id: i,
                    name: format!("f{i}"),
                    category: FilterCategory::Amenity,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn empty_set_is_none_state() {
        let v = make_filter_vector(&catalog(4), &HashSet::new()).unwrap();
        assert_eq!(v.bits, vec![0, 0, 0, 0]);
        assert!(v.is_none_state());
        assert_eq!(v, FilterVector::none(4));
    }

    #[test]
    fn set_bits_match_applied_ids() {
        let v = make_filter_vector(&catalog(4), &HashSet::from([1, 3])).unwrap();
        assert_eq!(v.bits, vec![0, 1, 0, 1]);
        assert_eq!(v.applied_ids(), vec![1, 3]);
    }

    #[test]
    fn out_of_range_id_is_rejected() {
        let err = make_filter_vector(&catalog(4), &HashSet::from([7])).unwrap_err();
        assert!(matches!(err, CoreError::InvalidFilter { id: 7, k: 4 }));
    }

    #[test]
    fn round_trip_is_exact_for_all_subsets() {
        // Exhaustive over all subsets of a k=10 catalog.
        let cat = catalog(10);
        for mask in 0u32..1024 {
            let ids: HashSet<usize> = (0..10).filter(|i| mask & (1 << i) != 0).collect();
            let v = make_filter_vector(&cat, &ids).unwrap();
            let recovered: HashSet<usize> = v.applied_ids().into_iter().collect();
            assert_eq!(recovered, ids);
        }
    }

    #[test]
    fn none_state_is_or_identity() {
        let none = FilterVector::none(6);
        assert_eq!(none.union(&none).unwrap(), none);
        let v = make_filter_vector(&catalog(6), &HashSet::from([0, 5])).unwrap();
        assert_eq!(none.union(&v).unwrap(), v);
        assert_eq!(v.union(&none).unwrap(), v);
    }

    #[test]
    fn catalog_rejects_gaps_and_duplicates() {
        assert!(FilterCatalog::new(vec![]).is_err());
        let gap = vec![
            FilterDef { filter_id: 0, name: "a".into(), category: FilterCategory::Other },
            FilterDef { filter_id: 2, name: "b".into(), category: FilterCategory::Other },
        ];
        assert!(FilterCatalog::new(gap).is_err());
        let dup = vec![
            FilterDef { filter_id: 0, name: "a".into(), category: FilterCategory::Other },
            FilterDef { filter_id: 1, name: "a".into(), category: FilterCategory::Other },
        ];
        assert!(FilterCatalog::new(dup).is_err());
    }
}
