//! Log record formats: searches, bookings and the labeled training example.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::catalog::FilterVector;
use crate::query::Query;

/// One logged search: the query, the filters that were applied, the listings
/// shown, and per-filter facet counts (result counts if that filter were
/// additionally applied).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchEvent {
    pub user_id: u64,
    pub search_id: u64,
    pub query: Query,
    pub filters: FilterVector,
    pub result_listing_ids: Vec<u64>,
    pub facet_counts: Vec<u32>,
}

/// One logged booking. The cancellation flag is resolved by the log producer
/// against its M-day window, so attribution can treat it as final.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BookingEvent {
    pub user_id: u64,
    pub listing_id: u64,
    pub booking_date: NaiveDate,
    pub cancelled_within_m_days: bool,
}

/// One search turned into a labeled example.
///
/// `engagement_labels` always equals `filters` bitwise; the booking label is 1
/// iff an uncancelled booking was attributed to this search. `user_id` and
/// `search_id` are carried so downstream splits can group by user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub user_id: u64,
    pub search_id: u64,
    pub query: Query,
    pub filters: FilterVector,
    pub engagement_labels: Vec<u8>,
    pub booking_label: u8,
    #[serde(default = "default_weight")]
    pub weight: f64,
}

fn default_weight() -> f64 {
    1.0
}

impl TrainingExample {
    pub fn from_search(search: &SearchEvent, booking_label: bool) -> Self {
        Self {
            user_id: search.user_id,
            search_id: search.search_id,
            query: search.query.clone(),
            filters: search.filters.clone(),
            engagement_labels: search.filters.bits.clone(),
            booking_label: booking_label as u8,
            weight: 1.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::FilterVector;

    fn query() -> Query {
        Query {
            location_id: 1,
            num_adults: 2,
            num_children: 1,
            num_infants: 0,
            checkin_date: "2025-06-10".parse().unwrap(),
            checkout_date: "2025-06-12".parse().unwrap(),
            platform: "ios".into(),
            device_type: "mobile".into(),
            search_timestamp: "2025-06-01".parse().unwrap(),
        }
    }

    #[test]
    fn search_event_json_field_names() {
        let ev = SearchEvent {
            user_id: 9,
            search_id: 100,
            query: query(),
            filters: FilterVector { bits: vec![0, 1, 0] },
            result_listing_ids: vec![5, 6],
            facet_counts: vec![2, 2, 1],
        };
        let json = serde_json::to_value(&ev).unwrap();
        assert_eq!(json["filters"], serde_json::json!([0, 1, 0]));
        assert_eq!(json["query"]["checkin_date"], "2025-06-10");
        assert_eq!(json["result_listing_ids"], serde_json::json!([5, 6]));
        let back: SearchEvent = serde_json::from_value(json).unwrap();
        assert_eq!(back, ev);
    }

    #[test]
    fn example_labels_mirror_filters() {
        let ev = SearchEvent {
            user_id: 9,
            search_id: 100,
            query: query(),
            filters: FilterVector { bits: vec![1, 0, 1] },
            result_listing_ids: vec![5],
            facet_counts: vec![1, 0, 1],
        };
        let ex = TrainingExample::from_search(&ev, true);
        assert_eq!(ex.engagement_labels, ex.filters.bits);
        assert_eq!(ex.booking_label, 1);
        assert_eq!(ex.weight, 1.0);
    }
}
