//! Retrospective booking attribution.
//!
//! A user journey is reconstructed by joining search and booking logs on the
//! user id. An uncancelled booking is attributed to every one of that user's
//! searches issued on the booking day or within the lookback window before
//! it, provided the booked listing was shown in that search's results. A
//! search whose filters excluded the booked listing therefore stays negative,
//! and one booking can label several searches positive.

use std::collections::{BTreeMap, HashSet};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::events::{BookingEvent, SearchEvent, TrainingExample};
use crate::rng;

const SPLIT_SALT: u64 = 0x5911_7000;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AttributionConfig {
    /// Searches up to this many days before a booking are attributable.
    pub lookback_days: u32,
    /// How long a booking must remain uncancelled to count. The booking log's
    /// cancellation flag is already resolved against this window by the log
    /// producer; the value is carried here so reports can state it.
    pub cancellation_days: u32,
}

impl Default for AttributionConfig {
    fn default() -> Self {
        // The windows are named in the source material without values;
        // these defaults are arbitrary and configurable.
        Self { lookback_days: 14, cancellation_days: 30 }
    }
}

/// Label every search: one training example per search event, in input order.
pub fn attribute(
    searches: &[SearchEvent],
    bookings: &[BookingEvent],
    cfg: &AttributionConfig,
) -> Vec<TrainingExample> {
    // (date, listing) pairs of uncancelled bookings, grouped per user and
    // sorted by date for window scans.
    let mut bookings_by_user: BTreeMap<u64, Vec<(NaiveDate, u64)>> = BTreeMap::new();
    for b in bookings {
        if !b.cancelled_within_m_days {
            bookings_by_user
                .entry(b.user_id)
                .or_default()
                .push((b.booking_date, b.listing_id));
        }
    }
    for list in bookings_by_user.values_mut() {
        list.sort_unstable();
    }

    let mut search_idx_by_user: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, s) in searches.iter().enumerate() {
        search_idx_by_user.entry(s.user_id).or_default().push(i);
    }

    let mut labels = vec![false; searches.len()];
    let labeled: Vec<(usize, bool)> = search_idx_by_user
        .par_iter()
        .flat_map_iter(|(user_id, idxs)| {
            let user_bookings = bookings_by_user.get(user_id);
            idxs.iter().map(move |&i| {
                let s = &searches[i];
                let label = user_bookings.is_some_and(|bs| {
                    let shown: HashSet<u64> = s.result_listing_ids.iter().copied().collect();
                    let from = s.query.search_timestamp;
                    let to = from + chrono::Days::new(cfg.lookback_days as u64);
                    let start = bs.partition_point(|&(d, _)| d < from);
                    bs[start..]
                        .iter()
                        .take_while(|&&(d, _)| d <= to)
                        .any(|&(_, listing)| shown.contains(&listing))
                });
                (i, label)
            })
        })
        .collect();
    for (i, label) in labeled {
        labels[i] = label;
    }

    searches
        .iter()
        .zip(labels)
        .map(|(s, label)| TrainingExample::from_search(s, label))
        .collect()
}

/// Split examples by user so no journey straddles the train/eval boundary.
/// The assignment is a pure function of (seed, user_id).
pub fn split_dataset(
    examples: &[TrainingExample],
    train_frac: f64,
    seed: u64,
) -> Result<(Vec<TrainingExample>, Vec<TrainingExample>)> {
    if examples.is_empty() {
        return Err(CoreError::EmptyInput("no examples to split".into()));
    }
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(CoreError::InvalidConfig(format!(
            "train_frac must be in (0,1), got {train_frac}"
        )));
    }
    let mut train = Vec::new();
    let mut eval = Vec::new();
    for ex in examples {
        if rng::keyed_fraction(seed, ex.user_id, SPLIT_SALT) < train_frac {
            train.push(ex.clone());
        } else {
            eval.push(ex.clone());
        }
    }
    Ok((train, eval))
}
