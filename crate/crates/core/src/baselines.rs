//! Comparison predictors: filter-conversion-rate statistics per
//! (destination, filter), and the legacy "necessity" heuristic that only asks
//! whether booked listings satisfied filters that were applied somewhere in
//! the journey.

use std::collections::{BTreeMap, HashMap};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::events::{BookingEvent, SearchEvent, TrainingExample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcrRow {
    pub destination_id: u64,
    pub filter_id: usize,
    pub applied_count: u64,
    pub converted_count: u64,
    /// Absent below `min_support` applications; never 0/0 or NaN.
    pub fcr: Option<f64>,
}

/// Filter conversion rates over a trailing window, with a deterministic
/// fallback chain for scoring: (destination, filter) rate, then the global
/// per-filter rate, then global prevalence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcrTable {
    pub window_days: u32,
    pub min_support: u64,
    pub rows: Vec<FcrRow>,
    /// Per-filter rates aggregated over all destinations.
    pub global_filter: Vec<FcrRow>,
    /// Share of attributed searches in the window that converted.
    pub global_prevalence: f64,
}

/// Conversion rate per (destination, filter) over the trailing
/// `window_days` ending at the newest search date in `examples`.
pub fn compute_fcr(
    examples: &[TrainingExample],
    window_days: u32,
    min_support: u64,
) -> Result<FcrTable> {
    if examples.is_empty() {
        return Err(CoreError::EmptyInput("no attributed examples".into()));
    }
    let max_date = examples
        .iter()
        .map(|e| e.query.search_timestamp)
        .max()
        .expect("non-empty");
    let cutoff = max_date - chrono::Days::new(window_days as u64);
    let in_window = |d: NaiveDate| d > cutoff;

    let mut counts: BTreeMap<(u64, usize), (u64, u64)> = BTreeMap::new();
    let mut global: BTreeMap<usize, (u64, u64)> = BTreeMap::new();
    let mut searches = 0u64;
    let mut converted = 0u64;
    for ex in examples {
        if !in_window(ex.query.search_timestamp) {
            continue;
        }
        searches += 1;
        converted += ex.booking_label as u64;
        for f in ex.filters.applied_ids() {
            let c = counts.entry((ex.query.location_id, f)).or_insert((0, 0));
            c.0 += 1;
            c.1 += ex.booking_label as u64;
            let g = global.entry(f).or_insert((0, 0));
            g.0 += 1;
            g.1 += ex.booking_label as u64;
        }
    }

    let to_row = |dest: u64, f: usize, applied: u64, conv: u64| FcrRow {
        destination_id: dest,
        filter_id: f,
        applied_count: applied,
        converted_count: conv,
        fcr: (applied >= min_support && applied > 0).then(|| conv as f64 / applied as f64),
    };
    let rows = counts
        .into_iter()
        .map(|((d, f), (a, c))| to_row(d, f, a, c))
        .collect();
    let global_filter = global
        .into_iter()
        .map(|(f, (a, c))| to_row(u64::MAX, f, a, c))
        .collect();

    Ok(FcrTable {
        window_days,
        min_support,
        rows,
        global_filter,
        global_prevalence: if searches == 0 {
            0.0
        } else {
            converted as f64 / searches as f64
        },
    })
}

impl FcrTable {
    /// Score one (destination, filter-token) row through the fallback chain.
    /// The no-filter token (and any unseen key) falls through to the global
    /// per-filter rate and finally to global prevalence.
    pub fn score(&self, destination: u64, token: usize, k: usize) -> f64 {
        if token < k {
            if let Some(f) = self
                .rows
                .iter()
                .find(|r| r.destination_id == destination && r.filter_id == token)
                .and_then(|r| r.fcr)
            {
                return f;
            }
            if let Some(f) = self
                .global_filter
                .iter()
                .find(|r| r.filter_id == token)
                .and_then(|r| r.fcr)
            {
                return f;
            }
        }
        self.global_prevalence
    }
}

/// Fast lookup wrapper over an [`FcrTable`].
pub struct FcrPredictor {
    by_key: HashMap<(u64, usize), f64>,
    by_filter: HashMap<usize, f64>,
    prevalence: f64,
    k: usize,
}

impl FcrPredictor {
    pub fn new(table: &FcrTable, k: usize) -> Self {
        let by_key = table
            .rows
            .iter()
            .filter_map(|r| r.fcr.map(|f| ((r.destination_id, r.filter_id), f)))
            .collect();
        let by_filter = table
            .global_filter
            .iter()
            .filter_map(|r| r.fcr.map(|f| (r.filter_id, f)))
            .collect();
        Self { by_key, by_filter, prevalence: table.global_prevalence, k }
    }

    pub fn score(&self, destination: u64, token: usize) -> f64 {
        if token < self.k {
            if let Some(&f) = self.by_key.get(&(destination, token)) {
                return f;
            }
            if let Some(&f) = self.by_filter.get(&token) {
                return f;
            }
        }
        self.prevalence
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NecessityRow {
    pub destination_id: u64,
    pub filter_id: usize,
    /// Booked journeys in which the filter was ever applied.
    pub journeys_applied: u64,
    /// Of those, journeys whose booked listing satisfies the filter.
    pub journeys_satisfied: u64,
    pub score: Option<f64>,
}

/// The production-style heuristic table. Scores are correlational on
/// purpose: a booked journey counts toward a filter whenever the filter was
/// applied at some point, whether or not the booking came from a filtered
/// search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NecessityTable {
    pub rows: Vec<NecessityRow>,
    pub global_filter: Vec<NecessityRow>,
    pub global_prevalence: f64,
}

/// Compute per (destination, filter) necessity over booked journeys. A
/// journey is a user's searches within `lookback_days` before one uncancelled
/// booking. `satisfies(listing, filter)` reads listing attributes.
pub fn necessity_scores(
    searches: &[SearchEvent],
    bookings: &[BookingEvent],
    lookback_days: u32,
    satisfies: &dyn Fn(u64, usize) -> bool,
    global_prevalence: f64,
) -> NecessityTable {
    let mut searches_by_user: BTreeMap<u64, Vec<&SearchEvent>> = BTreeMap::new();
    for s in searches {
        searches_by_user.entry(s.user_id).or_default().push(s);
    }

    let mut counts: BTreeMap<(u64, usize), (u64, u64)> = BTreeMap::new();
    let mut global: BTreeMap<usize, (u64, u64)> = BTreeMap::new();
    for b in bookings {
        if b.cancelled_within_m_days {
            continue;
        }
        let Some(user_searches) = searches_by_user.get(&b.user_id) else {
            continue;
        };
        let from = b.booking_date - chrono::Days::new(lookback_days as u64);
        // distinct (destination, filter) pairs applied during this journey
        let mut applied: BTreeMap<(u64, usize), ()> = BTreeMap::new();
        for s in user_searches {
            let d = s.query.search_timestamp;
            if d < from || d > b.booking_date {
                continue;
            }
            for f in s.filters.applied_ids() {
                applied.insert((s.query.location_id, f), ());
            }
        }
        for (dest, f) in applied.keys() {
            let sat = satisfies(b.listing_id, *f) as u64;
            let c = counts.entry((*dest, *f)).or_insert((0, 0));
            c.0 += 1;
            c.1 += sat;
            let g = global.entry(*f).or_insert((0, 0));
            g.0 += 1;
            g.1 += sat;
        }
    }

    let to_row = |dest: u64, f: usize, applied: u64, sat: u64| NecessityRow {
        destination_id: dest,
        filter_id: f,
        journeys_applied: applied,
        journeys_satisfied: sat,
        score: (applied > 0).then(|| sat as f64 / applied as f64),
    };
    NecessityTable {
        rows: counts
            .into_iter()
            .map(|((d, f), (a, s))| to_row(d, f, a, s))
            .collect(),
        global_filter: global
            .into_iter()
            .map(|(f, (a, s))| to_row(u64::MAX, f, a, s))
            .collect(),
        global_prevalence,
    }
}

/// Fast lookup wrapper over a [`NecessityTable`], with the same fallback
/// chain shape as the statistics predictor.
pub struct NecessityPredictor {
    by_key: HashMap<(u64, usize), f64>,
    by_filter: HashMap<usize, f64>,
    prevalence: f64,
    k: usize,
}

impl NecessityPredictor {
    pub fn new(table: &NecessityTable, k: usize) -> Self {
        let by_key = table
            .rows
            .iter()
            .filter_map(|r| r.score.map(|f| ((r.destination_id, r.filter_id), f)))
            .collect();
        let by_filter = table
            .global_filter
            .iter()
            .filter_map(|r| r.score.map(|f| (r.filter_id, f)))
            .collect();
        Self { by_key, by_filter, prevalence: table.global_prevalence, k }
    }

    pub fn score(&self, destination: u64, token: usize) -> f64 {
        if token < self.k {
            if let Some(&f) = self.by_key.get(&(destination, token)) {
                return f;
            }
            if let Some(&f) = self.by_filter.get(&token) {
                return f;
            }
        }
        self.prevalence
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::FilterVector;
    use crate::query::Query;

    fn example(dest: u64, bits: Vec<u8>, label: u8, day: &str) -> TrainingExample {
        let d: NaiveDate = day.parse().unwrap();
        TrainingExample {
            user_id: 0,
            search_id: 0,
            query: Query {
                location_id: dest,
                num_adults: 2,
                num_children: 0,
                num_infants: 0,
                checkin_date: d + chrono::Days::new(5),
                checkout_date: d + chrono::Days::new(7),
                platform: "web".into(),
                device_type: "desktop".into(),
                search_timestamp: d,
            },
            filters: FilterVector { bits: bits.clone() },
            engagement_labels: bits,
            booking_label: label,
            weight: 1.0,
        }
    }

    #[test]
    fn fcr_is_conversions_over_applications() {
        let mut exs = Vec::new();
        for i in 0..10 {
            exs.push(example(1, vec![1, 0], (i < 2) as u8, "2025-03-10"));
        }
        let table = compute_fcr(&exs, 30, 1).unwrap();
        let row = table
            .rows
            .iter()
            .find(|r| r.destination_id == 1 && r.filter_id == 0)
            .unwrap();
        assert_eq!(row.applied_count, 10);
        assert_eq!(row.converted_count, 2);
        assert_eq!(row.fcr, Some(0.2));
    }

    #[test]
    fn unapplied_filter_has_no_row_and_falls_back() {
        let exs = vec![example(1, vec![1, 0], 1, "2025-03-10")];
        let table = compute_fcr(&exs, 30, 1).unwrap();
        assert!(table.rows.iter().all(|r| r.filter_id != 1));
        // fallback chain ends in global prevalence
        assert_eq!(table.score(1, 1, 2), table.global_prevalence);
        assert_eq!(table.score(9, 0, 2), 1.0); // global filter rate for f0
    }

    #[test]
    fn below_min_support_rate_is_absent() {
        let exs = vec![
            example(1, vec![1, 0], 1, "2025-03-10"),
            example(1, vec![1, 0], 0, "2025-03-10"),
        ];
        let table = compute_fcr(&exs, 30, 20).unwrap();
        let row = &table.rows[0];
        assert_eq!(row.applied_count, 2);
        assert_eq!(row.fcr, None);
    }

    #[test]
    fn trailing_window_excludes_old_searches() {
        let exs = vec![
            example(1, vec![1, 0], 1, "2025-01-01"), // old
            example(1, vec![1, 0], 0, "2025-03-10"),
            example(1, vec![1, 0], 0, "2025-03-12"),
        ];
        let table = compute_fcr(&exs, 7, 1).unwrap();
        let row = table
            .rows
            .iter()
            .find(|r| (r.destination_id, r.filter_id) == (1, 0))
            .unwrap();
        assert_eq!(row.applied_count, 2);
        assert_eq!(row.fcr, Some(0.0));
    }

    #[test]
    fn fcr_predictor_matches_table_scoring() {
        let mut exs = Vec::new();
        for i in 0..30 {
            exs.push(example(i % 3, vec![(i % 2 == 0) as u8, 1], (i % 4 == 0) as u8, "2025-03-10"));
        }
        let table = compute_fcr(&exs, 30, 2).unwrap();
        let pred = FcrPredictor::new(&table, 2);
        for dest in 0..4 {
            for token in 0..3 {
                assert_eq!(pred.score(dest, token), table.score(dest, token, 2));
            }
        }
    }

    fn search(user: u64, dest: u64, day: &str, bits: Vec<u8>, results: Vec<u64>) -> SearchEvent {
        let ex = example(dest, bits, 0, day);
        SearchEvent {
            user_id: user,
            search_id: 0,
            query: ex.query,
            filters: ex.filters,
            result_listing_ids: results,
            facet_counts: vec![0, 0],
        }
    }

    #[test]
    fn necessity_counts_booked_journeys() {
        let searches = vec![
            search(1, 0, "2025-03-01", vec![1, 0], vec![10, 11]),
            search(1, 0, "2025-03-02", vec![0, 0], vec![10, 12]),
            search(2, 0, "2025-03-01", vec![1, 0], vec![20]),
        ];
        let bookings = vec![
            BookingEvent {
                user_id: 1,
                listing_id: 10,
                booking_date: "2025-03-03".parse().unwrap(),
                cancelled_within_m_days: false,
            },
            BookingEvent {
                user_id: 2,
                listing_id: 20,
                booking_date: "2025-03-02".parse().unwrap(),
                cancelled_within_m_days: false,
            },
        ];
        // listing 10 satisfies filter 0, listing 20 does not
        let satisfies = |l: u64, f: usize| f == 0 && l == 10;
        let table = necessity_scores(&searches, &bookings, 14, &satisfies, 0.05);
        let row = table
            .rows
            .iter()
            .find(|r| (r.destination_id, r.filter_id) == (0, 0))
            .unwrap();
        assert_eq!(row.journeys_applied, 2);
        assert_eq!(row.journeys_satisfied, 1);
        assert_eq!(row.score, Some(0.5));
        // filter 1 was never applied: absent
        assert!(table.rows.iter().all(|r| r.filter_id != 1));
        let pred = NecessityPredictor::new(&table, 2);
        assert_eq!(pred.score(0, 1), 0.05);
    }

    #[test]
    fn always_satisfied_filter_scores_one() {
        let searches = vec![search(1, 0, "2025-03-01", vec![1, 0], vec![10])];
        let bookings = vec![BookingEvent {
            user_id: 1,
            listing_id: 10,
            booking_date: "2025-03-01".parse().unwrap(),
            cancelled_within_m_days: false,
        }];
        let table = necessity_scores(&searches, &bookings, 14, &|_, _| true, 0.0);
        assert_eq!(table.rows[0].score, Some(1.0));
    }
}
