//! Equivalence of the join-based attribution with an O(searches x bookings)
//! nested-loop reference, on randomized small logs, plus the class-imbalance
//! sanity check on default simulator settings.

use chrono::NaiveDate;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use filterank_core::attribution::{attribute, AttributionConfig};
use filterank_core::catalog::FilterVector;
use filterank_core::events::{BookingEvent, SearchEvent};
use filterank_core::query::Query;
use filterank_core::synth::{generate_world, simulate_logs, SimConfig};

/// Reference attributor: for every search, scan every booking.
fn brute_force_labels(
    searches: &[SearchEvent],
    bookings: &[BookingEvent],
    cfg: &AttributionConfig,
) -> Vec<u8> {
    searches
        .iter()
        .map(|s| {
            let from = s.query.search_timestamp;
            let to = from + chrono::Days::new(cfg.lookback_days as u64);
            let hit = bookings.iter().any(|b| {
                b.user_id == s.user_id
                    && !b.cancelled_within_m_days
                    && b.booking_date >= from
                    && b.booking_date <= to
                    && s.result_listing_ids.contains(&b.listing_id)
            });
            hit as u8
        })
        .collect()
}

fn random_log(seed: u64) -> (Vec<SearchEvent>, Vec<BookingEvent>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let num_users = rng.gen_range(5..=50);
    let base: NaiveDate = "2025-02-01".parse().unwrap();
    let mut searches = Vec::new();
    let mut bookings = Vec::new();
    for user in 0..num_users as u64 {
        let num_searches = rng.gen_range(1..=6);
        for i in 0..num_searches {
            let day = base + chrono::Days::new(rng.gen_range(0..25));
            let listing_count = rng.gen_range(0..6);
            let results: Vec<u64> = (0..listing_count).map(|_| rng.gen_range(0..30)).collect();
            let bits: Vec<u8> = (0..4).map(|_| rng.gen_bool(0.3) as u8).collect();
            searches.push(SearchEvent {
                user_id: user,
                search_id: i,
                query: Query {
                    location_id: rng.gen_range(0..3),
                    num_adults: 2,
                    num_children: 0,
                    num_infants: 0,
                    checkin_date: day + chrono::Days::new(7),
                    checkout_date: day + chrono::Days::new(9),
                    platform: "web".into(),
                    device_type: "desktop".into(),
                    search_timestamp: day,
                },
                filters: FilterVector { bits },
                result_listing_ids: results,
                facet_counts: vec![0; 4],
            });
        }
        let num_bookings = rng.gen_range(0..=2);
        for _ in 0..num_bookings {
            bookings.push(BookingEvent {
                user_id: user,
                listing_id: rng.gen_range(0..30),
                booking_date: base + chrono::Days::new(rng.gen_range(0..30)),
                cancelled_within_m_days: rng.gen_bool(0.2),
            });
        }
    }
    (searches, bookings)
}

#[test]
fn join_attribution_matches_nested_loop_on_random_small_logs() {
    for seed in 0..20u64 {
        let (searches, bookings) = random_log(seed * 31 + 7);
        let cfg = AttributionConfig {
            lookback_days: 3 + (seed % 15) as u32,
            cancellation_days: 30,
        };
        let expected = brute_force_labels(&searches, &bookings, &cfg);
        let actual: Vec<u8> = attribute(&searches, &bookings, &cfg)
            .iter()
            .map(|e| e.booking_label)
            .collect();
        assert_eq!(actual, expected, "label mismatch at seed {seed}");
        assert_eq!(actual.len(), searches.len());
    }
}

#[test]
fn positive_rate_is_below_ten_percent_on_default_settings() {
    let world = generate_world(32, 4, 0).unwrap();
    let cfg = SimConfig::for_world(&world, 4_000, 6.0, 0);
    let logs = simulate_logs(&world, &cfg).unwrap();
    let examples = attribute(
        &logs.searches,
        &logs.bookings,
        &AttributionConfig::default(),
    );
    let positives = examples.iter().filter(|e| e.booking_label == 1).count();
    let rate = positives as f64 / examples.len() as f64;
    assert!(
        rate < 0.10,
        "positive rate {rate:.4} should stay under 10% ({positives}/{})",
        examples.len()
    );
    assert!(rate > 0.01, "positive rate {rate:.4} suspiciously low");
}
