//! Latent world generation and the closed-form conversion-gain oracle.

use rand::prelude::*;
use rand_distr::{Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::catalog::{FilterCatalog, FilterCategory, FilterDef, FilterVector};
use crate::error::{CoreError, Result};
use crate::query::Query;
use crate::rng;

/// Salt for the listing-attribute hash stream, so listing attributes stay
/// independent of every other random draw made from the world seed.
const ATTR_SALT: u64 = 0x11E57_1A7;

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Sampling bands for the query fields of one segment archetype.
///
/// `fuzz` is the probability of sampling a field set from the global range
/// instead of the archetype band. At 0 the bands are disjoint and the segment
/// is exactly recoverable from the query; large values make query behavior a
/// weak signal so that location carries most of the segment information.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentBands {
    pub nights: (u32, u32),
    pub adults: (u32, u32),
    pub children: (u32, u32),
    pub infants: (u32, u32),
    pub lead_days: (u32, u32),
    pub fuzz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySegment {
    pub name: String,
    pub bands: SegmentBands,
}

/// Destination-side latent structure: listing pools, per-filter listing
/// attribute rates, and how segments mix within each destination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DestinationModel {
    pub count: usize,
    pub pool_size: usize,
    /// P(listing satisfies filter f), per filter.
    pub satisfy_probs: Vec<f64>,
    /// destination x segment mixing weights, rows sum to 1.
    pub segment_weights: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldConfig {
    pub k: usize,
    pub num_segments: usize,
    pub num_destinations: usize,
    pub seed: u64,
    pub presentation_bias_strength: f64,
    /// Concentrate segments per destination and blur the behavioral bands,
    /// so location dominates the other query features.
    pub location_dominant: bool,
    pub cancel_rate: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            k: 32,
            num_segments: 4,
            num_destinations: 8,
            seed: 0,
            presentation_bias_strength: 0.0,
            location_dominant: false,
            cancel_rate: 0.05,
        }
    }
}

/// The full latent state of the synthetic marketplace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarketplaceWorld {
    pub catalog: FilterCatalog,
    pub segments: Vec<QuerySegment>,
    /// segment x filter logit of the true propensity to apply.
    pub engagement_logits: Vec<Vec<f64>>,
    /// segment x filter additive booking-probability delta vs the no-filter state.
    pub conversion_lift: Vec<Vec<f64>>,
    pub base_booking_prob: Vec<f64>,
    pub presentation_bias_strength: f64,
    /// segment x filter expected result count after applying that filter alone.
    pub inventory_model: Vec<Vec<f64>>,
    pub destinations: DestinationModel,
    pub cancel_rate: f64,
    pub seed: u64,
}

const NAME_POOL: &[(&str, FilterCategory)] = &[
    ("wifi", FilterCategory::Amenity),
    ("washer", FilterCategory::Amenity),
    ("dryer", FilterCategory::Amenity),
    ("kitchen", FilterCategory::Amenity),
    ("free_parking", FilterCategory::Amenity),
    ("hot_tub", FilterCategory::Amenity),
    ("pool", FilterCategory::Amenity),
    ("air_conditioning", FilterCategory::Amenity),
    ("heating", FilterCategory::Amenity),
    ("dedicated_workspace", FilterCategory::Amenity),
    ("tv", FilterCategory::Amenity),
    ("hair_dryer", FilterCategory::Amenity),
    ("iron", FilterCategory::Amenity),
    ("crib", FilterCategory::Amenity),
    ("gym", FilterCategory::Amenity),
    ("breakfast", FilterCategory::Amenity),
    ("indoor_fireplace", FilterCategory::Amenity),
    ("barbecue_area", FilterCategory::Amenity),
    ("ev_charger", FilterCategory::Amenity),
    ("beachfront", FilterCategory::Amenity),
    ("waterfront", FilterCategory::Amenity),
    ("ski_in_out", FilterCategory::Amenity),
    ("smoke_alarm", FilterCategory::Amenity),
    ("carbon_monoxide_alarm", FilterCategory::Amenity),
    ("instant_book", FilterCategory::BookingOption),
    ("self_check_in", FilterCategory::BookingOption),
    ("allows_pets", FilterCategory::BookingOption),
    ("free_cancellation", FilterCategory::Policy),
    ("long_term_allowed", FilterCategory::Policy),
    ("smoking_allowed", FilterCategory::Policy),
    ("guest_favorite", FilterCategory::Other),
    ("accessible", FilterCategory::Other),
    ("luxe", FilterCategory::Other),
    ("top_rated", FilterCategory::Other),
];

/// Behavioral archetypes in classification priority order. The bands are
/// mutually exclusive under the rules in `segment_of_query`, so a query
/// sampled from band i always classifies back to segment i when fuzz is 0.
fn archetype(idx: usize) -> QuerySegment {
    let (name, nights, adults, children, infants, lead) = match idx {
        0 => ("long_stay", (28, 60), (1, 2), (0, 1), (0, 0), (4, 59)),
        1 => ("group_trip", (2, 14), (5, 8), (0, 3), (0, 1), (4, 59)),
        2 => ("short_lead", (1, 14), (1, 3), (0, 1), (0, 1), (0, 3)),
        3 => ("long_lead", (2, 14), (1, 3), (0, 1), (0, 0), (60, 180)),
        4 => ("family", (2, 14), (2, 2), (1, 2), (0, 1), (4, 59)),
        5 => ("couple", (1, 14), (1, 2), (0, 0), (0, 0), (4, 59)),
        _ => unreachable!("archetype index out of range"),
    };
    QuerySegment {
        name: name.to_string(),
        bands: SegmentBands {
            nights,
            adults,
            children,
            infants,
            lead_days: lead,
            fuzz: 0.0,
        },
    }
}

const MAX_SEGMENTS: usize = 6;

/// Global ranges used when a fuzzed segment samples outside its band.
const GLOBAL_BANDS: SegmentBands = SegmentBands {
    nights: (1, 45),
    adults: (1, 6),
    children: (0, 3),
    infants: (0, 1),
    lead_days: (0, 120),
    fuzz: 0.0,
};

fn sample_range(rng: &mut impl Rng, (lo, hi): (u32, u32)) -> u32 {
    if lo >= hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

impl MarketplaceWorld {
    pub fn k(&self) -> usize {
        self.catalog.k()
    }

    pub fn num_segments(&self) -> usize {
        self.segments.len()
    }

    /// Latent apply probability with no presentation bias.
    pub fn true_engagement_prob(&self, segment: usize, filter: usize) -> f64 {
        sigmoid(self.engagement_logits[segment][filter])
    }

    /// Apply probability under presentation bias. `rank_bonus` maps the top
    /// of the displayed order to +0.5 and the bottom to -0.5, so raising the
    /// bias strength skews usage without moving the average logit.
    pub fn biased_apply_prob(
        &self,
        segment: usize,
        filter: usize,
        presentation_order: &[usize],
    ) -> f64 {
        let bonus = rank_bonus(presentation_order, filter, self.k());
        sigmoid(self.engagement_logits[segment][filter] + self.presentation_bias_strength * bonus)
    }

    /// Booking probability for a set of applied filters: base plus the sum of
    /// the per-filter lifts, truncated to [0, 1].
    pub fn booking_prob(&self, segment: usize, applied: &[usize]) -> f64 {
        let base = self.base_booking_prob[segment];
        let lift: f64 = applied
            .iter()
            .map(|&f| self.conversion_lift[segment][f])
            .sum();
        (base + lift).clamp(0.0, 1.0)
    }

    /// Classify a query into its segment by fixed priority rules. Exact on
    /// crisp-band data; a coarse guess once bands are fuzzed.
    pub fn segment_of_query(&self, q: &Query) -> usize {
        let s = self.segments.len();
        let group = (q.num_adults + q.num_children) as i64;
        let rules = [
            q.num_nights() >= 28,
            group >= 5,
            q.lead_time_days() <= 3,
            q.lead_time_days() >= 60,
            q.num_children >= 1,
        ];
        for (idx, hit) in rules.iter().enumerate() {
            if idx < s && *hit {
                return idx;
            }
        }
        s - 1
    }

    /// Sample the behavioral query fields for a segment:
    /// (nights, adults, children, infants, lead_days).
    pub fn sample_query_fields(
        &self,
        segment: usize,
        rng: &mut impl Rng,
    ) -> (u32, u32, u32, u32, u32) {
        fn pick(rng: &mut impl Rng, band: (u32, u32), global: (u32, u32), fuzz: f64) -> u32 {
            if fuzz > 0.0 && rng.gen::<f64>() < fuzz {
                sample_range(rng, global)
            } else {
                sample_range(rng, band)
            }
        }
        let bands = &self.segments[segment].bands;
        let f = bands.fuzz;
        (
            pick(rng, bands.nights, GLOBAL_BANDS.nights, f),
            pick(rng, bands.adults, GLOBAL_BANDS.adults, f),
            pick(rng, bands.children, GLOBAL_BANDS.children, f),
            pick(rng, bands.infants, GLOBAL_BANDS.infants, f),
            pick(rng, bands.lead_days, GLOBAL_BANDS.lead_days, f),
        )
    }

    /// Sample a user's segment given destination and device. Mobile devices
    /// tilt toward the short-lead archetype and desktops toward long stays,
    /// which gives the device feature a small amount of real signal.
    pub fn sample_segment(&self, destination: usize, device: &str, rng: &mut impl Rng) -> usize {
        let mut weights = self.destinations.segment_weights[destination].clone();
        match device {
            "mobile" if weights.len() > 2 => weights[2] *= 1.35,
            "desktop" => weights[0] *= 1.25,
            _ => {}
        }
        let total: f64 = weights.iter().sum();
        let mut draw = rng.gen::<f64>() * total;
        for (i, w) in weights.iter().enumerate() {
            draw -= w;
            if draw <= 0.0 {
                return i;
            }
        }
        weights.len() - 1
    }

    /// Listing ids in a destination's pool.
    pub fn listing_pool(&self, destination: usize) -> impl Iterator<Item = u64> + '_ {
        let base = destination as u64 * 100_000;
        (0..self.destinations.pool_size as u64).map(move |i| base + i)
    }

    /// Whether a listing has the attribute a filter selects on. Pure function
    /// of the world seed, so no attribute table is stored.
    pub fn listing_satisfies(&self, listing_id: u64, filter: usize) -> bool {
        let attr_seed = rng::derive_seed(self.seed, ATTR_SALT);
        rng::keyed_fraction(attr_seed, listing_id, filter as u64)
            < self.destinations.satisfy_probs[filter]
    }

    /// Listings in the destination pool that satisfy every applied filter.
    pub fn filtered_pool(&self, destination: usize, applied: &[usize]) -> Vec<u64> {
        self.listing_pool(destination)
            .filter(|&l| applied.iter().all(|&f| self.listing_satisfies(l, f)))
            .collect()
    }

    /// Facet counts over a concrete result set: entry i is how many of these
    /// listings would remain if filter i were additionally applied.
    pub fn facet_counts(&self, listings: &[u64]) -> Vec<u32> {
        (0..self.k())
            .map(|f| {
                listings
                    .iter()
                    .filter(|&&l| self.listing_satisfies(l, f))
                    .count() as u32
            })
            .collect()
    }

    /// The legacy display order: a fixed arbitrary ranking of the filter
    /// panel, independent of the latent engagement propensities. Usage
    /// logged under this order inflates the apparent popularity of whatever
    /// it happens to put on top.
    pub fn legacy_presentation_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.k()).collect();
        order.shuffle(&mut rng::stream(self.seed, 6));
        order
    }

    /// Filters ranked by average engagement across segments, the
    /// "popularity" flavor of display heuristic.
    pub fn heuristic_presentation_order(&self) -> Vec<usize> {
        let k = self.k();
        let s = self.num_segments() as f64;
        let mut mean_logit: Vec<(usize, f64)> = (0..k)
            .map(|f| {
                let m = self.engagement_logits.iter().map(|row| row[f]).sum::<f64>() / s;
                (f, m)
            })
            .collect();
        mean_logit.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        mean_logit.into_iter().map(|(f, _)| f).collect()
    }

    fn validate(&self) -> Result<()> {
        let k = self.k();
        let s = self.num_segments();
        if self.engagement_logits.len() != s || self.conversion_lift.len() != s {
            return Err(CoreError::ShapeMismatch("latent matrices vs segments".into()));
        }
        if self.presentation_bias_strength < 0.0 {
            return Err(CoreError::InvalidConfig(
                "presentation_bias_strength must be >= 0".into(),
            ));
        }
        for seg in 0..s {
            if self.engagement_logits[seg].len() != k || self.conversion_lift[seg].len() != k {
                return Err(CoreError::ShapeMismatch("latent matrices vs k".into()));
            }
            let base = self.base_booking_prob[seg];
            let mut has_pos = false;
            let mut has_neg = false;
            for &lift in &self.conversion_lift[seg] {
                let p = base + lift;
                if !(0.0..=1.0).contains(&p) {
                    return Err(CoreError::InvalidConfig(format!(
                        "base + lift = {p} out of [0,1] in segment {seg}"
                    )));
                }
                has_pos |= lift > 0.0;
                has_neg |= lift < 0.0;
            }
            if !has_pos || !has_neg {
                return Err(CoreError::InvalidConfig(format!(
                    "segment {seg} must have both positive and negative lifts"
                )));
            }
        }
        Ok(())
    }
}

/// Position-dependent logit bonus: +0.5 at the top of the display order,
/// -0.5 at the bottom, linear in between.
pub fn rank_bonus(presentation_order: &[usize], filter: usize, k: usize) -> f64 {
    if k <= 1 {
        return 0.0;
    }
    let pos = presentation_order
        .iter()
        .position(|&f| f == filter)
        .unwrap_or(k - 1);
    0.5 - pos as f64 / (k - 1) as f64
}

/// Booking conversion gain of a filter state, from the latent parameters:
/// the joint probability that the applied filters would be applied, times the
/// booking-probability improvement over the no-filter baseline.
pub fn ground_truth_gain(world: &MarketplaceWorld, segment: usize, filters: &FilterVector) -> f64 {
    let applied = filters.applied_ids();
    let engagement: f64 = applied
        .iter()
        .map(|&f| world.true_engagement_prob(segment, f))
        .product();
    let bracket = world.booking_prob(segment, &applied) - world.booking_prob(segment, &[]);
    engagement * bracket
}

/// Generate a world with default shape parameters.
pub fn generate_world(k: usize, num_segments: usize, seed: u64) -> Result<MarketplaceWorld> {
    generate_world_with(&WorldConfig {
        k,
        num_segments,
        seed,
        ..WorldConfig::default()
    })
}

pub fn generate_world_with(cfg: &WorldConfig) -> Result<MarketplaceWorld> {
    if cfg.k < 4 {
        return Err(CoreError::InvalidConfig(format!(
            "k must be >= 4, got {}",
            cfg.k
        )));
    }
    if cfg.num_segments < 2 || cfg.num_segments > MAX_SEGMENTS {
        return Err(CoreError::InvalidConfig(format!(
            "num_segments must be in 2..={MAX_SEGMENTS}, got {}",
            cfg.num_segments
        )));
    }
    if cfg.num_destinations == 0 {
        return Err(CoreError::InvalidConfig("need at least one destination".into()));
    }
    if !(0.0..1.0).contains(&cfg.cancel_rate) {
        return Err(CoreError::InvalidConfig("cancel_rate must be in [0,1)".into()));
    }

    let k = cfg.k;
    let s = cfg.num_segments;

    let filters = (0..k)
        .map(|i| {
            let (name, category) = if i < NAME_POOL.len() {
                (NAME_POOL[i].0.to_string(), NAME_POOL[i].1)
            } else {
                (format!("amenity_{i}"), FilterCategory::Amenity)
            };
            FilterDef { filter_id: i, name, category }
        })
        .collect();
    let catalog = FilterCatalog::new(filters)?;

    let mut segments: Vec<QuerySegment> = (0..s).map(archetype).collect();
    if cfg.location_dominant {
        for seg in &mut segments {
            seg.bands.fuzz = 0.75;
        }
    }

    // Independent streams per latent block keep the world stable if one
    // block's sampling changes.
    let mut logit_rng = rng::stream(cfg.seed, 1);
    let normal = Normal::new(-2.8, 0.7).expect("valid normal");
    let engagement_logits: Vec<Vec<f64>> = (0..s)
        .map(|_| (0..k).map(|_| normal.sample(&mut logit_rng)).collect())
        .collect();

    // Lifts are a shuffled evenly spaced grid so per-segment filter rankings
    // are well separated (no near-ties to destabilize rank statistics).
    let conversion_lift: Vec<Vec<f64>> = (0..s)
        .map(|seg| {
            let mut grid: Vec<f64> = (0..k)
                .map(|i| -0.025 + 0.09 * i as f64 / (k - 1) as f64)
                .collect();
            grid.shuffle(&mut rng::stream(cfg.seed, 100 + seg as u64));
            grid
        })
        .collect();

    let mut base_rng = rng::stream(cfg.seed, 3);
    let base_booking_prob: Vec<f64> = (0..s).map(|_| base_rng.gen_range(0.028..0.048)).collect();

    let mut sat_rng = rng::stream(cfg.seed, 4);
    let satisfy_probs: Vec<f64> = (0..k).map(|_| sat_rng.gen_range(0.15..0.60)).collect();

    let mut weight_rng = rng::stream(cfg.seed, 5);
    let gamma = Gamma::new(2.0, 1.0).expect("valid gamma");
    let segment_weights: Vec<Vec<f64>> = (0..cfg.num_destinations)
        .map(|d| {
            let mut w: Vec<f64> = if cfg.location_dominant {
                let home = d % s;
                (0..s)
                    .map(|i| if i == home { 0.88 } else { 0.12 / (s - 1) as f64 })
                    .collect()
            } else {
                (0..s).map(|_| gamma.sample(&mut weight_rng)).collect()
            };
            let total: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= total);
            w
        })
        .collect();

    let pool_size = 120;
    let inventory_model: Vec<Vec<f64>> = (0..s)
        .map(|_| satisfy_probs.iter().map(|&p| pool_size as f64 * p).collect())
        .collect();

    let world = MarketplaceWorld {
        catalog,
        segments,
        engagement_logits,
        conversion_lift,
        base_booking_prob,
        presentation_bias_strength: cfg.presentation_bias_strength,
        inventory_model,
        destinations: DestinationModel {
            count: cfg.num_destinations,
            pool_size,
            satisfy_probs,
            segment_weights,
        },
        cancel_rate: cfg.cancel_rate,
        seed: cfg.seed,
    };
    world.validate()?;
    Ok(world)
}
