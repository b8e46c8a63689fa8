//! Log simulation: users issue searches, apply filters under (optionally
//! biased) engagement propensities, and book listings under the planted
//! conversion lifts.

use chrono::{Days, NaiveDate};
use rand::prelude::*;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::FilterVector;
use crate::error::{CoreError, Result};
use crate::events::{BookingEvent, SearchEvent};
use crate::query::Query;
use crate::rng;
use crate::synth::world::{rank_bonus, sigmoid, MarketplaceWorld};

/// Maximum listings shown per search result page.
const PAGE_SIZE: usize = 16;

fn default_journey_span() -> u32 {
    10
}
fn default_date_span() -> u32 {
    30
}
fn default_start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2025, 3, 1).expect("valid date")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub num_users: usize,
    pub searches_per_user_mean: f64,
    pub seed: u64,
    /// Display order used to bias which filters users apply. When empty the
    /// caller is expected to fill it with the world's heuristic order.
    pub presentation_order: Vec<usize>,
    /// Days of a user's journey over which their searches spread.
    #[serde(default = "default_journey_span")]
    pub journey_span_days: u32,
    /// Days over which journey start dates spread.
    #[serde(default = "default_date_span")]
    pub date_span_days: u32,
    #[serde(default = "default_start_date")]
    pub start_date: NaiveDate,
}

impl SimConfig {
    pub fn new(num_users: usize, searches_per_user_mean: f64, seed: u64) -> Self {
        Self {
            num_users,
            searches_per_user_mean,
            seed,
            presentation_order: Vec::new(),
            journey_span_days: default_journey_span(),
            date_span_days: default_date_span(),
            start_date: default_start_date(),
        }
    }

    /// Config with the world's legacy display order filled in.
    pub fn for_world(
        world: &MarketplaceWorld,
        num_users: usize,
        searches_per_user_mean: f64,
        seed: u64,
    ) -> Self {
        let mut cfg = Self::new(num_users, searches_per_user_mean, seed);
        cfg.presentation_order = world.legacy_presentation_order();
        cfg
    }
}

#[derive(Debug, Clone, Default)]
pub struct SimLogs {
    pub searches: Vec<SearchEvent>,
    pub bookings: Vec<BookingEvent>,
}

/// Knuth's poisson sampler; fine for the small means used here.
fn poisson(rng: &mut impl Rng, mean: f64) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    let limit = (-mean).exp();
    let mut k = 0u32;
    let mut p = 1.0;
    loop {
        p *= rng.gen::<f64>();
        if p <= limit {
            return k;
        }
        k += 1;
    }
}

pub(crate) fn sample_platform_device(rng: &mut impl Rng) -> (String, String) {
    let platform = match rng.gen::<f64>() {
        x if x < 0.40 => "web",
        x if x < 0.75 => "ios",
        _ => "android",
    };
    let device = if platform == "web" {
        match rng.gen::<f64>() {
            x if x < 0.80 => "desktop",
            x if x < 0.90 => "tablet",
            _ => "mobile",
        }
    } else {
        match rng.gen::<f64>() {
            x if x < 0.85 => "mobile",
            _ => "tablet",
        }
    };
    (platform.to_string(), device.to_string())
}

/// Simulate one user's journey; deterministic per (cfg.seed, user_id).
fn simulate_user(world: &MarketplaceWorld, cfg: &SimConfig, user_id: u64) -> SimLogs {
    let mut rng = rng::stream(cfg.seed, user_id);
    let k = world.k();

    let destination = rng.gen_range(0..world.destinations.count);
    let (platform, device) = sample_platform_device(&mut rng);
    let segment = world.sample_segment(destination, &device, &mut rng);

    let journey_start =
        cfg.start_date + Days::new(rng.gen_range(0..=cfg.date_span_days) as u64);
    let num_searches = (1 + poisson(&mut rng, cfg.searches_per_user_mean - 1.0)) as usize;
    let mut offsets: Vec<u64> = (0..num_searches)
        .map(|_| rng.gen_range(0..=cfg.journey_span_days) as u64)
        .collect();
    offsets.sort_unstable();

    let mut logs = SimLogs::default();
    for (i, offset) in offsets.into_iter().enumerate() {
        let search_date = journey_start + Days::new(offset);
        let (nights, adults, children, infants, lead) =
            world.sample_query_fields(segment, &mut rng);
        let checkin = search_date + Days::new(lead as u64);
        let query = Query {
            location_id: destination as u64,
            num_adults: adults,
            num_children: children,
            num_infants: infants,
            checkin_date: checkin,
            checkout_date: checkin + Days::new(nights as u64),
            platform: platform.clone(),
            device_type: device.clone(),
            search_timestamp: search_date,
        };

        // Filters are sampled independently per search.
        let mut bits = vec![0u8; k];
        for f in 0..k {
            let bonus = rank_bonus(&cfg.presentation_order, f, k);
            let p = sigmoid(
                world.engagement_logits[segment][f]
                    + world.presentation_bias_strength * bonus,
            );
            if rng.gen::<f64>() < p {
                bits[f] = 1;
            }
        }
        let filters = FilterVector { bits };
        let applied = filters.applied_ids();

        let full_set = world.filtered_pool(destination, &applied);
        let facet_counts = world.facet_counts(&full_set);
        let result_listing_ids = if full_set.len() <= PAGE_SIZE {
            full_set.clone()
        } else {
            let mut page = full_set.clone();
            page.partial_shuffle(&mut rng, PAGE_SIZE);
            let mut page: Vec<u64> = page.into_iter().take(PAGE_SIZE).collect();
            page.sort_unstable();
            page
        };

        if !result_listing_ids.is_empty() {
            let p_book = world.booking_prob(segment, &applied);
            if rng.gen::<f64>() < p_book {
                let listing_id =
                    result_listing_ids[rng.gen_range(0..result_listing_ids.len())];
                logs.bookings.push(BookingEvent {
                    user_id,
                    listing_id,
                    booking_date: search_date,
                    cancelled_within_m_days: rng.gen::<f64>() < world.cancel_rate,
                });
            }
        }

        logs.searches.push(SearchEvent {
            user_id,
            search_id: user_id * 1_000 + i as u64,
            query,
            filters,
            result_listing_ids,
            facet_counts,
        });
    }
    logs
}

/// Generate search and booking logs for a whole user population.
///
/// Users are sharded across workers; each user's stream is derived from
/// (seed, user_id) alone so the output is identical regardless of thread
/// count or scheduling.
pub fn simulate_logs(world: &MarketplaceWorld, cfg: &SimConfig) -> Result<SimLogs> {
    if cfg.num_users == 0 {
        return Err(CoreError::InvalidConfig("num_users must be positive".into()));
    }
    if cfg.searches_per_user_mean < 1.0 {
        return Err(CoreError::InvalidConfig(
            "searches_per_user_mean must be >= 1".into(),
        ));
    }
    if cfg.presentation_order.len() != world.k() {
        return Err(CoreError::InvalidConfig(format!(
            "presentation_order must list all {} filters, got {}",
            world.k(),
            cfg.presentation_order.len()
        )));
    }

    let per_user: Vec<SimLogs> = (0..cfg.num_users as u64)
        .into_par_iter()
        .map(|u| simulate_user(world, cfg, u))
        .collect();

    let mut logs = SimLogs::default();
    for mut user_logs in per_user {
        logs.searches.append(&mut user_logs.searches);
        logs.bookings.append(&mut user_logs.bookings);
    }
    Ok(logs)
}
