//! Simulated A/B tests: replay fresh synthetic users under two
//! recommendation policies against the known world and compare booking rates.
//!
//! Replayed guests accept at most one recommended filter. Walking the ranked
//! list, the filter at rank r is accepted with probability
//! `true_engagement / r`; the same uniform draws are shared between arms
//! (common random numbers), so an A/A comparison is exactly zero and A/B
//! variance shrinks. Bookings then follow the world's lifted probabilities.

use chrono::Days;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::query::Query;
use crate::ranking::RankedFilters;
use crate::rng;
use crate::synth::MarketplaceWorld;

const ACCEPT_STREAM: u64 = 0xACCE;
const BOOK_STREAM: u64 = 0xB001;
const BOOTSTRAP_STREAM: u64 = 0xB007;
/// Uniform draws pre-generated per user; bounds the ranked-list depth.
const MAX_LIST_DEPTH: usize = 16;

/// A recommendation policy under test.
pub trait Policy {
    fn name(&self) -> &str;
    fn recommend(&self, query: &Query, facet_counts: &[u32]) -> Result<RankedFilters>;
}

impl<F> Policy for (String, F)
where
    F: Fn(&Query, &[u32]) -> Result<RankedFilters>,
{
    fn name(&self) -> &str {
        &self.0
    }

    fn recommend(&self, query: &Query, facet_counts: &[u32]) -> Result<RankedFilters> {
        (self.1)(query, facet_counts)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AbConfig {
    pub num_users: usize,
    pub seed: u64,
    pub bootstrap_resamples: usize,
    /// Threshold for the low-inventory funnel diagnostic.
    pub low_inventory_threshold: u32,
}

impl Default for AbConfig {
    fn default() -> Self {
        Self {
            num_users: 20_000,
            seed: 0,
            bootstrap_resamples: 1000,
            low_inventory_threshold: 18,
        }
    }
}

/// Funnel metrics of one arm.
///
/// `searches_using_filters_rate`: share of replayed searches where a
/// recommended filter was accepted. `booked_with_filter_rate`: share of
/// bookings that came from a search with an accepted filter.
/// `low_inventory_rate`: share of searches whose accepted filter had a facet
/// count below the threshold (zero whenever the policy post-processes).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArmStats {
    pub policy: String,
    pub booking_rate: f64,
    pub searches_using_filters_rate: f64,
    pub booked_with_filter_rate: f64,
    pub low_inventory_rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AbReport {
    pub num_users: usize,
    pub seed: u64,
    /// Relative booking lift of policy B over policy A.
    pub relative_lift: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub arm_a: ArmStats,
    pub arm_b: ArmStats,
}

struct ReplayUser {
    segment: usize,
    destination: usize,
    query: Query,
}

fn replay_users(world: &MarketplaceWorld, cfg: &AbConfig) -> Vec<ReplayUser> {
    let start: chrono::NaiveDate = "2025-06-01".parse().expect("valid date");
    (0..cfg.num_users as u64)
        .map(|u| {
            let mut r = rng::stream(cfg.seed, u);
            let destination = r.gen_range(0..world.destinations.count);
            let (platform, device) = crate::synth::sample_platform_device(&mut r);
            let segment = world.sample_segment(destination, &device, &mut r);
            let search_date = start + Days::new(r.gen_range(0..30u64));
            let (nights, adults, children, infants, lead) =
                world.sample_query_fields(segment, &mut r);
            let checkin = search_date + Days::new(lead as u64);
            ReplayUser {
                segment,
                destination,
                query: Query {
                    location_id: destination as u64,
                    num_adults: adults,
                    num_children: children,
                    num_infants: infants,
                    checkin_date: checkin,
                    checkout_date: checkin + Days::new(nights as u64),
                    platform,
                    device_type: device,
                    search_timestamp: search_date,
                },
            }
        })
        .collect()
}

struct UserOutcome {
    booked: bool,
    accepted_filter: Option<usize>,
    accepted_inventory: Option<u32>,
}

fn replay_arm(
    world: &MarketplaceWorld,
    policy: &dyn Policy,
    users: &[ReplayUser],
    facet_by_destination: &[Vec<u32>],
    cfg: &AbConfig,
) -> Result<Vec<UserOutcome>> {
    let accept_seed = rng::derive_seed(cfg.seed, ACCEPT_STREAM);
    let book_seed = rng::derive_seed(cfg.seed, BOOK_STREAM);
    users
        .iter()
        .enumerate()
        .map(|(u, user)| {
            let ranked =
                policy.recommend(&user.query, &facet_by_destination[user.destination])?;
            let mut accept_rng = rng::stream(accept_seed, u as u64);
            let accept_draws: Vec<f64> =
                (0..MAX_LIST_DEPTH).map(|_| accept_rng.gen::<f64>()).collect();

            let mut accepted_filter = None;
            let mut accepted_inventory = None;
            for (pos, rec) in ranked.iter().take(MAX_LIST_DEPTH).enumerate() {
                let rank = (pos + 1) as f64;
                let p = world.true_engagement_prob(user.segment, rec.filter_id) / rank;
                if accept_draws[pos] < p {
                    accepted_filter = Some(rec.filter_id);
                    accepted_inventory = Some(rec.post_filter_inventory);
                    break;
                }
            }

            let applied: Vec<usize> = accepted_filter.into_iter().collect();
            let p_book = world.booking_prob(user.segment, &applied);
            let booked = rng::stream(book_seed, u as u64).gen::<f64>() < p_book;
            Ok(UserOutcome { booked, accepted_filter, accepted_inventory })
        })
        .collect()
}

fn arm_stats(policy: &str, outcomes: &[UserOutcome], low_threshold: u32) -> ArmStats {
    let n = outcomes.len() as f64;
    let bookings = outcomes.iter().filter(|o| o.booked).count() as f64;
    let with_filter = outcomes.iter().filter(|o| o.accepted_filter.is_some()).count() as f64;
    let booked_with_filter = outcomes
        .iter()
        .filter(|o| o.booked && o.accepted_filter.is_some())
        .count() as f64;
    let low_inventory = outcomes
        .iter()
        .filter(|o| o.accepted_inventory.is_some_and(|inv| inv < low_threshold))
        .count() as f64;
    ArmStats {
        policy: policy.to_string(),
        booking_rate: bookings / n,
        searches_using_filters_rate: with_filter / n,
        booked_with_filter_rate: if bookings > 0.0 { booked_with_filter / bookings } else { 0.0 },
        low_inventory_rate: low_inventory / n,
    }
}

/// Replay the same users under both policies and report the relative booking
/// lift of B over A with a paired-bootstrap 95% interval.
pub fn simulated_ab(
    world: &MarketplaceWorld,
    policy_a: &dyn Policy,
    policy_b: &dyn Policy,
    cfg: &AbConfig,
) -> Result<AbReport> {
    if cfg.num_users == 0 {
        return Err(CoreError::InvalidConfig("num_users must be positive".into()));
    }
    let users = replay_users(world, cfg);
    let facet_by_destination: Vec<Vec<u32>> = (0..world.destinations.count)
        .map(|d| {
            let pool: Vec<u64> = world.listing_pool(d).collect();
            world.facet_counts(&pool)
        })
        .collect();

    let outcomes_a = replay_arm(world, policy_a, &users, &facet_by_destination, cfg)?;
    let outcomes_b = replay_arm(world, policy_b, &users, &facet_by_destination, cfg)?;

    let a: Vec<f64> = outcomes_a.iter().map(|o| o.booked as u8 as f64).collect();
    let b: Vec<f64> = outcomes_b.iter().map(|o| o.booked as u8 as f64).collect();
    let n = a.len();
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let mean_a = mean(&a);
    if mean_a == 0.0 {
        return Err(CoreError::InvalidConfig(
            "baseline arm produced zero bookings; increase num_users".into(),
        ));
    }
    let relative_lift = mean(&b) / mean_a - 1.0;

    // paired bootstrap over users
    let mut boot = rng::stream(cfg.seed, BOOTSTRAP_STREAM);
    let mut lifts = Vec::with_capacity(cfg.bootstrap_resamples);
    for _ in 0..cfg.bootstrap_resamples {
        let mut sum_a = 0.0;
        let mut sum_b = 0.0;
        for _ in 0..n {
            let i = boot.gen_range(0..n);
            sum_a += a[i];
            sum_b += b[i];
        }
        if sum_a > 0.0 {
            lifts.push(sum_b / sum_a - 1.0);
        }
    }
    lifts.sort_by(|x, y| x.partial_cmp(y).expect("finite lifts"));
    let pct = |q: f64| {
        if lifts.is_empty() {
            f64::NAN
        } else {
            let idx = ((lifts.len() - 1) as f64 * q).round() as usize;
            lifts[idx]
        }
    };

    Ok(AbReport {
        num_users: cfg.num_users,
        seed: cfg.seed,
        relative_lift,
        ci_lower: pct(0.025),
        ci_upper: pct(0.975),
        arm_a: arm_stats(policy_a.name(), &outcomes_a, cfg.low_inventory_threshold),
        arm_b: arm_stats(policy_b.name(), &outcomes_b, cfg.low_inventory_threshold),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ranking::RankedFilter;
    use crate::synth::generate_world;

    fn fixed_policy(name: &str, ids: Vec<usize>) -> (String, impl Fn(&Query, &[u32]) -> Result<RankedFilters>) {
        (
            name.to_string(),
            move |_q: &Query, counts: &[u32]| {
                Ok(ids
                    .iter()
                    .map(|&f| RankedFilter {
                        filter_id: f,
                        score: 1.0,
                        p_engage: 0.5,
                        p_book: 0.5,
                        post_filter_inventory: counts[f],
                    })
                    .collect())
            },
        )
    }

    #[test]
    fn identical_policies_have_exactly_zero_lift() {
        let world = generate_world(8, 4, 3).unwrap();
        let cfg = AbConfig { num_users: 2000, seed: 5, bootstrap_resamples: 200, ..AbConfig::default() };
        let p1 = fixed_policy("a", vec![0, 1, 2]);
        let p2 = fixed_policy("b", vec![0, 1, 2]);
        let report = simulated_ab(&world, &p1, &p2, &cfg).unwrap();
        assert_eq!(report.relative_lift, 0.0);
        assert!(report.ci_lower <= 0.0 && report.ci_upper >= 0.0);
    }

    #[test]
    fn replay_is_deterministic_per_seed() {
        let world = generate_world(8, 4, 3).unwrap();
        let cfg = AbConfig { num_users: 1000, seed: 9, bootstrap_resamples: 100, ..AbConfig::default() };
        let p1 = fixed_policy("a", vec![0, 1]);
        let p2 = fixed_policy("b", vec![5, 6]);
        let r1 = simulated_ab(&world, &p1, &p2, &cfg).unwrap();
        let r2 = simulated_ab(&world, &p1, &p2, &cfg).unwrap();
        assert_eq!(
            serde_json::to_string(&r1).unwrap(),
            serde_json::to_string(&r2).unwrap()
        );
    }

    #[test]
    fn recommending_best_lift_filter_beats_worst() {
        let world = generate_world(8, 4, 3).unwrap();
        // find globally best / worst filters by average lift
        let avg = |f: usize| {
            (0..4)
                .map(|s| world.conversion_lift[s][f])
                .sum::<f64>()
                / 4.0
        };
        let best = (0..8).max_by(|&a, &b| avg(a).partial_cmp(&avg(b)).unwrap()).unwrap();
        let worst = (0..8).min_by(|&a, &b| avg(a).partial_cmp(&avg(b)).unwrap()).unwrap();
        let cfg = AbConfig { num_users: 30_000, seed: 1, bootstrap_resamples: 300, ..AbConfig::default() };
        let pw = fixed_policy("worst", vec![worst]);
        let pb = fixed_policy("best", vec![best]);
        let report = simulated_ab(&world, &pw, &pb, &cfg).unwrap();
        assert!(
            report.relative_lift > 0.0,
            "best-lift filter should outperform: {report:?}"
        );
    }
}
