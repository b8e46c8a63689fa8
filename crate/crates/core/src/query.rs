//! Search queries: the conditioning variable for both prediction tasks.

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// A search request. Dates are day-granular; platform and device are free-form
/// categorical strings whose vocabularies are learned at schema-fit time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub location_id: u64,
    pub num_adults: u32,
    pub num_children: u32,
    pub num_infants: u32,
    pub checkin_date: NaiveDate,
    pub checkout_date: NaiveDate,
    pub platform: String,
    pub device_type: String,
    pub search_timestamp: NaiveDate,
}

impl Query {
    /// Stay length in nights; at least 1 for a valid query.
    pub fn num_nights(&self) -> i64 {
        (self.checkout_date - self.checkin_date).num_days()
    }

    /// Days between the search and check-in; non-negative for a valid query.
    pub fn lead_time_days(&self) -> i64 {
        (self.checkin_date - self.search_timestamp).num_days()
    }

    pub fn total_guests(&self) -> u32 {
        self.num_adults + self.num_children + self.num_infants
    }

    /// Cyclical calendar components of a date: (month 1-12, day-of-month 1-31,
    /// day-of-week 1-7 with Monday = 1).
    pub fn calendar_parts(date: NaiveDate) -> (u32, u32, u32) {
        (date.month(), date.day(), date.weekday().number_from_monday())
    }
}

/// Check query invariants and return the query unchanged.
pub fn validate_query(q: Query) -> Result<Query> {
    if q.checkout_date <= q.checkin_date {
        return Err(CoreError::InvalidQuery(format!(
            "checkout {} must be after checkin {}",
            q.checkout_date, q.checkin_date
        )));
    }
    if q.checkin_date < q.search_timestamp {
        return Err(CoreError::InvalidQuery(format!(
            "checkin {} is before the search date {} (negative lead time)",
            q.checkin_date, q.search_timestamp
        )));
    }
    Ok(q)
}
