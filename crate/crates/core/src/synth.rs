//! Synthetic inputs with known ground truth.
//!
//! Planted-partition flow networks, worker populations with a prescribed
//! activity-pattern mixture, noisy volume series from known recurrence
//! parameters, and a small synthetic city tying all of them together.
//! Every generator is a pure function of its spec and seed.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::Arc;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, NaiveTime, Weekday};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activity::{PatternCode, PlaceRole};
use crate::community::Partition;
use crate::error::{Error, Result};
use crate::flowgraph::{DateTag, Division, FlowMatrix, PeriodTag, Station, StationIndex};
use crate::ingest::{parse_date, DayKind, StationId, TripRecord, WorkCalendar};
use crate::seeds;
use crate::spatial::{
    attraction, DistanceInput, DistanceMatrix, FacilityCounts, SpatialParams, StationProfile, TopicEmotion,
    TopicTable,
};
use crate::temporal::{simulate_volume_series, TemporalParams, VolumeSeries, EVENING_BINS};

// ---------------------------------------------------------------------------
// Planted networks

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub sizes: Vec<usize>,
    /// Mean trips per directed pair inside a community.
    pub within: f64,
    /// Mean trips per directed pair across communities.
    pub cross: f64,
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() || self.sizes.iter().any(|s| *s < 2) {
            return Err(Error::invalid("planted communities need at least one community, each of size >= 2"));
        }
        if !(self.within.is_finite() && self.within >= 0.0 && self.cross.is_finite() && self.cross >= 0.0) {
            return Err(Error::invalid("planted weights must be finite and non-negative"));
        }
        Ok(())
    }
}

pub fn station_ids(n: usize) -> Vec<StationId> {
    let width = n.saturating_sub(1).to_string().len().max(2);
    (0..n).map(|i| format!("S{i:0width$}")).collect()
}

fn poisson(mean: f64, rng: &mut ChaCha8Rng) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|p| p.sample(rng) as u64).unwrap_or(0)
}

/// Flow matrix with Poisson counts: mean `within` inside a block, `cross` across.
pub fn planted_flow(
    stations: &Arc<StationIndex>,
    blocks: &[usize],
    within: f64,
    cross: f64,
    date: DateTag,
    period: PeriodTag,
    rng: &mut ChaCha8Rng,
) -> Result<FlowMatrix> {
    let n = stations.len();
    if blocks.len() != n {
        return Err(Error::PartitionSize { partition: blocks.len(), graph: n });
    }
    let mut counts = vec![0u64; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                counts[i * n + j] = poisson(if blocks[i] == blocks[j] { within } else { cross }, rng);
            }
        }
    }
    FlowMatrix::from_counts(stations.clone(), counts, date, period)
}

/// Planted network and its true partition; stations are numbered block by block.
pub fn generate_planted_network(spec: &NetworkSpec, seed: u64) -> Result<(FlowMatrix, Partition)> {
    spec.validate()?;
    let n: usize = spec.sizes.iter().sum();
    let blocks: Vec<usize> = spec.sizes.iter().enumerate().flat_map(|(b, s)| std::iter::repeat_n(b, *s)).collect();
    let stations = StationIndex::new(station_ids(n))?;
    let mut rng = seeds::rng(seed);
    let flow = planted_flow(&stations, &blocks, spec.within, spec.cross, DateTag::Aggregate, PeriodTag::Day, &mut rng)?;
    Ok((flow, Partition::from_labels(&blocks)))
}

// ---------------------------------------------------------------------------
// Activity populations

/// The six main patterns, in the order used when spreading `other` mass.
pub const PATTERN_FAMILY: [&str; 6] = ["N2E2", "N3E2", "N3E3", "N4E3", "N3E4", "N4E4"];

/// Roles visited by each family pattern, as `(origin, destination)` per trip.
fn template(code: &str) -> Option<&'static [(PlaceRole, PlaceRole)]> {
    use PlaceRole::{Entertainment as E, Home as H, Work as W};
    Some(match code {
        "N2E2" => &[(H, W(1)), (W(1), H)],
        "N3E2" => &[(H, W(1)), (W(2), H)],
        "N3E3" => &[(H, W(1)), (W(1), E(1)), (E(1), H)],
        "N4E3" => &[(H, W(1)), (W(2), E(1)), (E(1), H)],
        "N3E4" => &[(H, W(1)), (W(1), H), (H, E(1)), (E(1), H)],
        "N4E4" => &[(H, W(1)), (W(1), E(1)), (E(1), E(2)), (E(2), H)],
        _ => return None,
    })
}

/// Pattern mixture over the family; parsed `other` mass is spread evenly over unlisted codes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mixture {
    weights: Vec<(PatternCode, f64)>,
    text: String,
}

impl Mixture {
    pub fn parse(text: &str) -> Result<Self> {
        let mut listed: Vec<(String, f64)> = Vec::new();
        let mut other = 0.0;
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (code, w) = part
                .split_once(':')
                .ok_or_else(|| Error::Parse(format!("mixture entry {part:?} is not code:weight")))?;
            let w: f64 = w.trim().parse().map_err(|e| Error::Parse(format!("bad mixture weight {w:?}: {e}")))?;
            if !(w >= 0.0) {
                return Err(Error::invalid(format!("negative mixture weight for {code}")));
            }
            let code = code.trim();
            if code == "other" {
                other += w;
            } else if template(code).is_some() {
                if listed.iter().any(|(c, _)| c == code) {
                    return Err(Error::invalid(format!("mixture lists {code} twice")));
                }
                listed.push((code.to_string(), w));
            } else {
                return Err(Error::invalid(format!("unsupported pattern {code:?}; expected one of {PATTERN_FAMILY:?} or other")));
            }
        }
        let total: f64 = listed.iter().map(|(_, w)| w).sum::<f64>() + other;
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("mixture weights sum to {total}, not 1")));
        }
        let rest: Vec<&str> = PATTERN_FAMILY.iter().copied().filter(|c| !listed.iter().any(|(l, _)| l == c)).collect();
        if other > 0.0 && rest.is_empty() {
            return Err(Error::invalid("mixture has other mass but lists every family pattern"));
        }
        let mut weights: Vec<(PatternCode, f64)> =
            listed.iter().map(|(c, w)| (c.parse().expect("family code"), *w)).collect();
        if other > 0.0 {
            for c in &rest {
                weights.push((c.parse().expect("family code"), other / rest.len() as f64));
            }
        }
        Ok(Mixture { weights, text: text.trim().to_string() })
    }

    pub fn weights(&self) -> &[(PatternCode, f64)] {
        &self.weights
    }

    pub fn as_text(&self) -> &str {
        &self.text
    }

    fn sampler(&self) -> WeightedIndex<f64> {
        WeightedIndex::new(self.weights.iter().map(|w| w.1)).expect("validated mixture")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub cards: usize,
    pub mixture: Mixture,
    pub date: NaiveDate,
}

/// Ground truth for one generated chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedChain {
    pub card_id: String,
    pub date: NaiveDate,
    pub code: PatternCode,
    /// Stations in the order their roles first appear.
    pub roles: Vec<(StationId, PlaceRole)>,
}

fn at(date: NaiveDate, minutes: f64) -> NaiveDateTime {
    date.and_time(NaiveTime::MIN) + Duration::seconds((minutes * 60.0).round() as i64)
}

/// Trip times for a chain of `trips` trips. The first starts in 06:00-09:30,
/// the second at `evening` minutes after midnight, later ones follow with short gaps.
fn chain_times(trips: usize, evening: f64, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(trips);
    let s0 = rng.random_range(360.0..570.0);
    out.push((s0, s0 + rng.random_range(10.0..40.0)));
    let mut start = evening;
    for _ in 1..trips {
        let end = start + rng.random_range(5.0..25.0);
        out.push((start, end));
        start = end + rng.random_range(10.0..30.0);
    }
    out
}

/// Builds one chain following `code`'s template. `pick` maps each new role to a station.
fn build_chain(
    card_id: &str,
    date: NaiveDate,
    code: PatternCode,
    evening_minutes: f64,
    mut pick: impl FnMut(PlaceRole, &[StationId]) -> StationId,
    rng: &mut ChaCha8Rng,
) -> (Vec<TripRecord>, GeneratedChain) {
    let tpl = template(&code.to_string()).expect("family pattern");
    let mut roles: Vec<(StationId, PlaceRole)> = Vec::new();
    let mut station_of = |role: PlaceRole, roles: &mut Vec<(StationId, PlaceRole)>| -> StationId {
        if let Some((s, _)) = roles.iter().find(|(_, r)| *r == role) {
            return s.clone();
        }
        let used: Vec<StationId> = roles.iter().map(|(s, _)| s.clone()).collect();
        let s = pick(role, &used);
        roles.push((s.clone(), role));
        s
    };
    let times = chain_times(tpl.len(), evening_minutes, rng);
    let mut trips = Vec::with_capacity(tpl.len());
    for (&(o, d), (s, e)) in tpl.iter().zip(times) {
        let origin = station_of(o, &mut roles);
        let destination = station_of(d, &mut roles);
        trips.push(TripRecord {
            card_id: card_id.to_string(),
            origin,
            destination,
            t_start: at(date, s),
            t_end: at(date, e),
        });
    }
    (trips, GeneratedChain { card_id: card_id.to_string(), date, code, roles })
}

/// Worker chains drawn from the mixture over a station list (at least four stations).
pub fn generate_trip_population(
    spec: &PopulationSpec,
    stations: &[StationId],
    seed: u64,
) -> Result<(Vec<TripRecord>, Vec<GeneratedChain>)> {
    if stations.len() < 4 {
        return Err(Error::invalid("population needs at least four stations"));
    }
    let sampler = spec.mixture.sampler();
    let width = spec.cards.to_string().len();
    let per_card: Vec<(Vec<TripRecord>, GeneratedChain)> = (0..spec.cards)
        .into_par_iter()
        .map(|k| {
            let mut rng = seeds::rng(seeds::indexed_seed(seed, k as u64));
            let code = spec.mixture.weights()[sampler.sample(&mut rng)].0;
            // Multi-stop evenings start before 21:00 so the chain ends the same day.
            let evening = if code.edges > 2 {
                rng.random_range(1020.0..1260.0)
            } else {
                rng.random_range(1020.0..1380.0)
            };
            let card = format!("C{k:0width$}");
            let mut pick_rng = seeds::rng(seeds::indexed_seed(seed ^ 0x5eed, k as u64));
            build_chain(
                &card,
                spec.date,
                code,
                evening,
                |_, used| loop {
                    let s = &stations[pick_rng.random_range(0..stations.len())];
                    if !used.contains(s) {
                        break s.clone();
                    }
                },
                &mut rng,
            )
        })
        .collect();
    let mut trips = Vec::new();
    let mut truth = Vec::with_capacity(per_card.len());
    for (t, g) in per_card {
        trips.extend(t);
        truth.push(g);
    }
    Ok((trips, truth))
}

// ---------------------------------------------------------------------------
// Temporal observations

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemporalRanges {
    /// Range of `μ N` (keeps the recurrence stable and non-oscillating in sign).
    pub mu_n: (f64, f64),
    pub c: (f64, f64),
    pub tau: (f64, f64),
    pub n_total: (u64, u64),
    /// `p0` is drawn up to this fraction of the equilibrium level.
    pub p0_fraction: f64,
}

impl Default for TemporalRanges {
    fn default() -> Self {
        TemporalRanges { mu_n: (0.5, 0.9), c: (0.1, 0.3), tau: (0.002, 0.01), n_total: (500, 2000), p0_fraction: 0.2 }
    }
}

pub fn draw_temporal_params(ranges: &TemporalRanges, rng: &mut ChaCha8Rng) -> TemporalParams {
    let n_total = rng.random_range(ranges.n_total.0..=ranges.n_total.1);
    let n = n_total as f64;
    let mu_n = rng.random_range(ranges.mu_n.0..ranges.mu_n.1);
    let c = rng.random_range(ranges.c.0..ranges.c.1);
    let tau = rng.random_range(ranges.tau.0..ranges.tau.1);
    // Equilibrium of the de-trended recurrence: Y = a + b t.
    let b = n * tau / (1.0 + mu_n);
    let a = (n * c + mu_n * b) / (1.0 + mu_n);
    let p0 = rng.random_range(0.0..=ranges.p0_fraction * a / n);
    TemporalParams { tau, mu: mu_n / n, c, p0, n_total }
}

/// Simulated series plus `N(0, sigma)` noise, truncated at 0. `sigma` is in volume units.
pub fn generate_temporal_observations(
    params: &[(String, TemporalParams)],
    sigma: f64,
    horizon: usize,
    seed: u64,
) -> Result<Vec<VolumeSeries>> {
    if !(sigma >= 0.0) {
        return Err(Error::invalid("noise level must be non-negative"));
    }
    params
        .iter()
        .enumerate()
        .map(|(k, (origin, p))| {
            let sim = simulate_volume_series(p, horizon)?;
            let mut values = sim.values;
            if sigma > 0.0 {
                let mut rng = seeds::rng(seeds::indexed_seed(seed, k as u64));
                let noise = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
                for v in values.iter_mut() {
                    *v = (*v + noise.sample(&mut rng)).max(0.0);
                }
            }
            Ok(VolumeSeries::evening(origin.clone(), values))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Synthetic city

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CitySpec {
    pub stations: usize,
    pub centre: usize,
    pub blocks: usize,
    pub topics: usize,
    pub workers: usize,
    pub midday: usize,
    pub night: usize,
    /// Travellers on non-working days (removed by the calendar filter).
    pub off_day: usize,
    pub first_day: NaiveDate,
    pub last_day: NaiveDate,
    pub holidays: Vec<NaiveDate>,
    /// Working days that follow the alternative community regime.
    pub outlier_days: Vec<NaiveDate>,
    /// Probability that a destination is drawn from outside the origin's block.
    pub cross_share: f64,
}

impl Default for CitySpec {
    fn default() -> Self {
        let d = |s: &str| parse_date(s).expect("valid date");
        CitySpec {
            stations: 20,
            centre: 8,
            blocks: 4,
            topics: 4,
            workers: 600,
            midday: 300,
            night: 200,
            off_day: 40,
            first_day: d("2015-04-01"),
            last_day: d("2015-04-27"),
            holidays: vec![d("2015-04-04"), d("2015-04-05"), d("2015-04-06")],
            outlier_days: vec![d("2015-04-07")],
            cross_share: 0.02,
        }
    }
}

impl CitySpec {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.blocks == 0 || self.stations < 4 * self.blocks {
            problems.push("city needs at least one block and four stations per block".to_string());
        }
        if self.centre > self.stations {
            problems.push("more centre stations than stations".to_string());
        }
        if self.topics == 0 {
            problems.push("city needs at least one topic".to_string());
        }
        if self.first_day > self.last_day {
            problems.push("first_day is after last_day".to_string());
        }
        if !(0.0..=1.0).contains(&self.cross_share) {
            problems.push("cross_share must lie in [0, 1]".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::invalid(problems.join("; ")))
        }
    }

    pub fn calendar(&self) -> WorkCalendar {
        WorkCalendar::for_range(self.first_day, self.last_day, &self.holidays)
    }
}

/// Known generating parameters of a synthetic city.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityTruth {
    pub spatial: SpatialParams,
    pub opportunities: Vec<f64>,
    /// Evening recurrence parameters per station (as workplace origin).
    pub temporal: Vec<TemporalParams>,
    /// Block of each station under the normal and the alternative regime.
    pub normal_blocks: Vec<usize>,
    pub outlier_blocks: Vec<usize>,
    pub chains: Vec<GeneratedChain>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityFixture {
    pub stations: Vec<Station>,
    pub calendar_days: Vec<(NaiveDate, DayKind)>,
    pub trips: Vec<TripRecord>,
    pub topic_table: TopicTable,
    pub emotion: BTreeMap<String, f64>,
    pub station_words: BTreeMap<String, Vec<(String, u64)>>,
    pub profiles: Vec<StationProfile>,
    pub truth: CityTruth,
}

impl CityFixture {
    pub fn calendar(&self) -> WorkCalendar {
        let mut cal = WorkCalendar::default();
        for (d, k) in &self.calendar_days {
            cal.insert(*d, *k).expect("generated calendar is consistent");
        }
        cal
    }
}

const CENTRE_LAT: f64 = 31.2304;
const CENTRE_LON: f64 = 121.4737;
const KM_PER_DEG_LAT: f64 = 111.195;

fn place(rng: &mut ChaCha8Rng, r_lo: f64, r_hi: f64) -> (f64, f64) {
    let r = rng.random_range(r_lo..r_hi);
    let a = rng.random_range(0.0..std::f64::consts::TAU);
    let lat = CENTRE_LAT + r * a.sin() / KM_PER_DEG_LAT;
    let lon = CENTRE_LON + r * a.cos() / (KM_PER_DEG_LAT * CENTRE_LAT.to_radians().cos());
    ((lat * 1e6).round() / 1e6, (lon * 1e6).round() / 1e6)
}

/// Balanced random block assignment.
fn blocks_for(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut blocks = vec![0; n];
    for (pos, s) in order.into_iter().enumerate() {
        blocks[s] = pos % k;
    }
    blocks
}

/// Temporal parameters as smooth functions of food count and distance to the centre.
///
/// `μN` rises then falls with the food count; `τ`, `C` and `p0` grow with distance.
pub fn city_temporal_params(food: u32, food_max: u32, distance_km: f64, n_total: u64) -> TemporalParams {
    let n = n_total as f64;
    let u = f64::from(food) / f64::from(food_max.max(1));
    let mu_n = 0.45 + 0.4 * (std::f64::consts::PI * u).sin();
    let tau = 0.003 + 0.0003 * distance_km;
    let c = 0.08 + 0.008 * distance_km;
    let b = n * tau / (1.0 + mu_n);
    let a = (n * c + mu_n * b) / (1.0 + mu_n);
    let p0 = (0.05 + 0.01 * distance_km).min(0.2) * a / n;
    TemporalParams { tau, mu: mu_n / n, c, p0, n_total }
}

pub fn generate_city(spec: &CitySpec, seed: u64) -> Result<CityFixture> {
    spec.validate()?;
    let n = spec.stations;
    let mut geo = seeds::rng(seeds::sub_seed(seed, "city.geography"));
    let ids = station_ids(n);
    let stations: Vec<Station> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let centre = i < spec.centre;
            let (lat, lon) = if centre { place(&mut geo, 0.3, 3.0) } else { place(&mut geo, 5.0, 15.0) };
            Station {
                id: id.clone(),
                name: format!("Station {i}"),
                lat,
                lon,
                division: if centre { Division::Centre } else { Division::Outer },
            }
        })
        .collect();
    let distances = DistanceMatrix::from_stations(&stations);

    // Topics: six words per topic, each mostly about its own topic.
    let m = spec.topics;
    let mut text = seeds::rng(seeds::sub_seed(seed, "city.text"));
    let mut probs = BTreeMap::new();
    let mut emotion = BTreeMap::new();
    let mut vocabulary = Vec::new();
    for t in 0..m {
        for w in 0..6 {
            let word = format!("t{t}w{w}");
            let mut p = vec![0.0; m];
            for (j, pj) in p.iter_mut().enumerate() {
                let v: f64 = if j == t { text.random_range(0.5..0.9) } else { text.random_range(0.0..0.1) };
                *pj = (v * 1000.0).round() / 1000.0;
            }
            probs.insert(word.clone(), p);
            let strength: f64 = text.random_range(-1.0..1.0) + t as f64 * 0.8;
            emotion.insert(word.clone(), (strength * 100.0).round() / 100.0);
            vocabulary.push((word, t));
        }
    }
    let topic_table = TopicTable::new(m, probs)?;
    let theta = TopicEmotion::from_tables(&topic_table, &emotion.iter().map(|(k, v)| (k.clone(), *v)).collect())
        .theta()?;

    // Station words and facilities; centre stations talk more and host more.
    let mut station_words = BTreeMap::new();
    let mut profiles = Vec::with_capacity(n);
    let mut opportunities = Vec::with_capacity(n);
    for (i, st) in stations.iter().enumerate() {
        let centre = st.division == Division::Centre;
        let affinity: Vec<f64> = (0..m).map(|_| text.random_range(0.1..1.0)).collect();
        let total = if centre { text.random_range(4..10) } else { text.random_range(0..4) };
        let pick = WeightedIndex::new(vocabulary.iter().map(|(_, t)| affinity[*t])).expect("positive affinities");
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        for _ in 0..total {
            *counts.entry(vocabulary[pick.sample(&mut text)].0.clone()).or_default() += 1;
        }
        let words: Vec<(String, u64)> = counts.into_iter().collect();
        let popularity = crate::spatial::topic_popularity(&topic_table, &words).values;
        if !words.is_empty() {
            station_words.insert(st.id.clone(), words);
        }
        let scale = if centre { 2.0 } else { 1.0 };
        let facilities = FacilityCounts {
            entertainment: (text.random_range(0.0..20.0) * scale) as u32,
            shopping: (text.random_range(0.0..20.0) * scale) as u32,
            food: (text.random_range(0.0..30.0) * scale) as u32,
        };
        let o = (text.random_range(50.0..150.0_f64) * scale).round();
        opportunities.push(o);
        profiles.push(StationProfile { station: st.clone(), facilities, topic_popularity: popularity, opportunities: Some(o) });
        let _ = i;
    }
    let spatial = SpatialParams { theta, theta_d: 0.1, epsilon: 0.0, distance: DistanceInput::Negated };
    spatial.validate()?;

    // Destination weights within the spatial model.
    let attract: Vec<Vec<f64>> = (0..n)
        .map(|s| {
            (0..n)
                .map(|i| {
                    if i == s {
                        0.0
                    } else {
                        attraction(opportunities[i], &profiles[i].topic_popularity, &spatial, distances.get(s, i))
                    }
                })
                .collect()
        })
        .collect();

    // Evening departure profiles per workplace.
    let food_max = profiles.iter().map(|p| p.facilities.food).max().unwrap_or(1);
    let centre_dist: Vec<f64> = stations
        .iter()
        .map(|s| crate::spatial::haversine_km(s.lat, s.lon, CENTRE_LAT, CENTRE_LON))
        .collect();
    let temporal: Vec<TemporalParams> = profiles
        .iter()
        .zip(&centre_dist)
        .map(|(p, d)| city_temporal_params(p.facilities.food, food_max, *d, 1000))
        .collect();
    let evening_weights: Vec<Vec<f64>> = temporal
        .iter()
        .map(|p| {
            simulate_volume_series(p, EVENING_BINS - 1)
                .map(|s| s.values.iter().map(|v| v.max(1e-9)).collect())
        })
        .collect::<Result<_>>()?;

    let mut regime = seeds::rng(seeds::sub_seed(seed, "city.regimes"));
    let normal_blocks = blocks_for(n, spec.blocks, &mut regime);
    let outlier_blocks = loop {
        let b = blocks_for(n, spec.blocks, &mut regime);
        if Partition::from_labels(&b) != Partition::from_labels(&normal_blocks) {
            break b;
        }
    };

    let calendar = spec.calendar();
    let days: Vec<(NaiveDate, DayKind)> = calendar.iter().collect();
    let mixture = Mixture::parse("N2E2:0.85,N3E2:0.10,other:0.05")?;
    let sampler = mixture.sampler();

    let mut trips = Vec::new();
    let mut chains = Vec::new();
    for (day_idx, (date, kind)) in days.iter().enumerate() {
        let mut rng = seeds::rng(seeds::indexed_seed(seeds::sub_seed(seed, "city.days"), day_idx as u64));
        let blocks = if spec.outlier_days.contains(date) { &outlier_blocks } else { &normal_blocks };
        let members: Vec<Vec<usize>> =
            (0..spec.blocks).map(|b| (0..n).filter(|s| blocks[*s] == b).collect()).collect();
        // Destination from `s`: inside its block by attraction, or anywhere with `cross_share`.
        let choose = |s: usize, used: &[usize], rng: &mut ChaCha8Rng| -> usize {
            let pool: Vec<usize> = if rng.random_bool(spec.cross_share) {
                (0..n).filter(|i| !used.contains(i)).collect()
            } else {
                members[blocks[s]].iter().copied().filter(|i| !used.contains(i)).collect()
            };
            let pool = if pool.is_empty() { (0..n).filter(|i| !used.contains(i)).collect() } else { pool };
            let w = WeightedIndex::new(pool.iter().map(|i| attract[s][*i].max(1e-12))).expect("non-empty pool");
            pool[w.sample(rng)]
        };
        let trip = |card: &str, o: usize, d: usize, s: f64, e: f64| TripRecord {
            card_id: card.to_string(),
            origin: ids[o].clone(),
            destination: ids[d].clone(),
            t_start: at(*date, s),
            t_end: at(*date, e),
        };

        if *kind != DayKind::Working {
            for k in 0..spec.off_day {
                let o = rng.random_range(0..n);
                let d = choose(o, &[o], &mut rng);
                let s = rng.random_range(600.0..1200.0);
                trips.push(trip(&format!("X{k:04}"), o, d, s, s + rng.random_range(10.0..40.0)));
            }
            continue;
        }

        for k in 0..spec.workers {
            let code = mixture.weights()[sampler.sample(&mut rng)].0;
            let home = rng.random_range(0..n);
            let mut used = vec![home];
            let mut station_for: Vec<(PlaceRole, usize)> = vec![(PlaceRole::Home, home)];
            let tpl = template(&code.to_string()).expect("family pattern");
            for &(a, b) in tpl {
                for role in [a, b] {
                    if !station_for.iter().any(|(r, _)| *r == role) {
                        let from = match role {
                            PlaceRole::Work(2) => station_for[1].1,
                            _ => home,
                        };
                        let s = choose(from, &used, &mut rng);
                        used.push(s);
                        station_for.push((role, s));
                    }
                }
            }
            // Evening departure bin from the evening origin's profile.
            let evening_origin = station_for.iter().find(|(r, _)| *r == tpl[1].0).expect("role").1;
            let weights = &evening_weights[evening_origin];
            let limit = if code.edges > 2 { 24 } else { EVENING_BINS };
            let bin = WeightedIndex::new(&weights[..limit]).expect("positive weights").sample(&mut rng);
            // Capped so the start never rounds into the next day.
            let evening = (1020.0 + 10.0 * bin as f64 + rng.random_range(0.0..10.0)).min(1439.0);
            let card = format!("C{k:05}");
            let (chain_trips, truth) = build_chain(
                &card,
                *date,
                code,
                evening,
                |role, _| ids[station_for.iter().find(|(r, _)| *r == role).expect("assigned").1].clone(),
                &mut rng,
            );
            trips.extend(chain_trips);
            chains.push(truth);
        }
        for k in 0..spec.midday {
            let a = rng.random_range(0..n);
            let b = choose(a, &[a], &mut rng);
            let s1 = rng.random_range(600.0..720.0);
            let s2 = rng.random_range(780.0..900.0);
            let card = format!("M{k:05}");
            trips.push(trip(&card, a, b, s1, s1 + rng.random_range(10.0..30.0)));
            trips.push(trip(&card, b, a, s2, s2 + rng.random_range(10.0..30.0)));
        }
        for k in 0..spec.night {
            let a = rng.random_range(0..n);
            let b = choose(a, &[a], &mut rng);
            let s = rng.random_range(1260.0..1400.0);
            trips.push(trip(&format!("N{k:05}"), a, b, s, s + rng.random_range(5.0..30.0)));
        }
    }
    trips.sort_by(|a, b| (&a.card_id, a.t_start).cmp(&(&b.card_id, b.t_start)));

    Ok(CityFixture {
        stations,
        calendar_days: days,
        trips,
        topic_table,
        emotion,
        station_words,
        profiles,
        truth: CityTruth { spatial, opportunities, temporal, normal_blocks, outlier_blocks, chains },
    })
}

// ---------------------------------------------------------------------------
// Spec file

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalSpec {
    pub origins: usize,
    /// Noise standard deviation as a fraction of each origin's total volume.
    pub sigma: f64,
    pub horizon: usize,
    pub ranges: TemporalRanges,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub network: NetworkSpec,
    pub population: PopulationSpec,
    pub temporal: TemporalSpec,
    pub city: CitySpec,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 1,
            network: NetworkSpec { sizes: vec![10, 10], within: 5.0, cross: 1.0 },
            population: PopulationSpec {
                cards: 10_000,
                mixture: Mixture::parse("N2E2:0.85,N3E2:0.10,other:0.05").expect("valid mixture"),
                date: parse_date("2015-04-07").expect("valid date"),
            },
            temporal: TemporalSpec { origins: 20, sigma: 0.01, horizon: EVENING_BINS - 1, ranges: TemporalRanges::default() },
            city: CitySpec::default(),
        }
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| Error::Parse(format!("{key}: bad value {s:?}: {e}"))))
        .collect()
}

fn parse_one<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| Error::Parse(format!("{key}: bad value {v:?}: {e}")))
}

fn parse_pair<T: std::str::FromStr>(key: &str, v: &str) -> Result<(T, T)>
where
    T::Err: std::fmt::Display,
{
    let mut xs: Vec<T> = parse_list(key, v)?;
    if xs.len() != 2 {
        return Err(Error::Parse(format!("{key}: expected two comma-separated values")));
    }
    let b = xs.pop().expect("two");
    let a = xs.pop().expect("two");
    Ok((a, b))
}

fn dates(key: &str, v: &str) -> Result<Vec<NaiveDate>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_date(s).map_err(|e| Error::Parse(format!("{key}: {e}"))))
        .collect()
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl SynthSpec {
    /// Parses `key = value` lines over the defaults. Every problem is reported, not just the first.
    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = SynthSpec::default();
        let mut problems = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                problems.push(format!("line {}: expected key = value", lineno + 1));
                continue;
            };
            let (key, v) = (key.trim(), value.trim());
            if let Err(e) = spec.set(key, v) {
                problems.push(format!("line {}: {e}", lineno + 1));
            }
        }
        for check in [spec.network.validate(), spec.city.validate()] {
            if let Err(e) = check {
                problems.push(e.to_string());
            }
        }
        if problems.is_empty() {
            Ok(spec)
        } else {
            Err(Error::invalid(problems.join("\n")))
        }
    }

    fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse_one(key, v)?,
            "network.sizes" => self.network.sizes = parse_list(key, v)?,
            "network.within" => self.network.within = parse_one(key, v)?,
            "network.cross" => self.network.cross = parse_one(key, v)?,
            "population.cards" => self.population.cards = parse_one(key, v)?,
            "population.mixture" => self.population.mixture = Mixture::parse(v)?,
            "population.date" => self.population.date = parse_date(v)?,
            "temporal.origins" => self.temporal.origins = parse_one(key, v)?,
            "temporal.sigma" => self.temporal.sigma = parse_one(key, v)?,
            "temporal.horizon" => self.temporal.horizon = parse_one(key, v)?,
            "temporal.mu_n" => self.temporal.ranges.mu_n = parse_pair(key, v)?,
            "temporal.c" => self.temporal.ranges.c = parse_pair(key, v)?,
            "temporal.tau" => self.temporal.ranges.tau = parse_pair(key, v)?,
            "temporal.n_total" => self.temporal.ranges.n_total = parse_pair(key, v)?,
            "temporal.p0_fraction" => self.temporal.ranges.p0_fraction = parse_one(key, v)?,
            "city.stations" => self.city.stations = parse_one(key, v)?,
            "city.centre" => self.city.centre = parse_one(key, v)?,
            "city.blocks" => self.city.blocks = parse_one(key, v)?,
            "city.topics" => self.city.topics = parse_one(key, v)?,
            "city.workers" => self.city.workers = parse_one(key, v)?,
            "city.midday" => self.city.midday = parse_one(key, v)?,
            "city.night" => self.city.night = parse_one(key, v)?,
            "city.off_day" => self.city.off_day = parse_one(key, v)?,
            "city.first_day" => self.city.first_day = parse_date(v)?,
            "city.last_day" => self.city.last_day = parse_date(v)?,
            "city.holidays" => self.city.holidays = dates(key, v)?,
            "city.outlier_days" => self.city.outlier_days = dates(key, v)?,
            "city.cross_share" => self.city.cross_share = parse_one(key, v)?,
            _ => return Err(Error::Parse(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn render(&self) -> String {
        let r = &self.temporal.ranges;
        let c = &self.city;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("seed", self.seed.to_string());
        kv("network.sizes", join(&self.network.sizes));
        kv("network.within", self.network.within.to_string());
        kv("network.cross", self.network.cross.to_string());
        kv("population.cards", self.population.cards.to_string());
        kv("population.mixture", self.population.mixture.as_text().to_string());
        kv("population.date", self.population.date.to_string());
        kv("temporal.origins", self.temporal.origins.to_string());
        kv("temporal.sigma", self.temporal.sigma.to_string());
        kv("temporal.horizon", self.temporal.horizon.to_string());
        kv("temporal.mu_n", format!("{},{}", r.mu_n.0, r.mu_n.1));
        kv("temporal.c", format!("{},{}", r.c.0, r.c.1));
        kv("temporal.tau", format!("{},{}", r.tau.0, r.tau.1));
        kv("temporal.n_total", format!("{},{}", r.n_total.0, r.n_total.1));
        kv("temporal.p0_fraction", r.p0_fraction.to_string());
        kv("city.stations", c.stations.to_string());
        kv("city.centre", c.centre.to_string());
        kv("city.blocks", c.blocks.to_string());
        kv("city.topics", c.topics.to_string());
        kv("city.workers", c.workers.to_string());
        kv("city.midday", c.midday.to_string());
        kv("city.night", c.night.to_string());
        kv("city.off_day", c.off_day.to_string());
        kv("city.first_day", c.first_day.to_string());
        kv("city.last_day", c.last_day.to_string());
        kv("city.holidays", join(&c.holidays));
        kv("city.outlier_days", join(&c.outlier_days));
        kv("city.cross_share", c.cross_share.to_string());
        s
    }
}

/// Dates of the month that are weekends, for building calendars by hand.
pub fn weekend_days(first: NaiveDate, last: NaiveDate) -> BTreeSet<NaiveDate> {
    first
        .iter_days()
        .take_while(|d| *d <= last)
        .filter(|d| matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activity::{build_daily_chains, chain_pattern, label_chain, pattern_distribution, select_workers};
    use crate::community::{contingency_correlation, louvain_partition};
    use crate::ingest::validate_trips;

    #[test]
    fn disconnected_blocks_are_recovered() {
        let spec = NetworkSpec { sizes: vec![5, 6, 4], within: 4.0, cross: 0.0 };
        for seed in 0..5 {
            let (flow, truth) = generate_planted_network(&spec, seed).unwrap();
            assert_eq!(louvain_partition(&flow, seed).unwrap(), truth);
        }
    }

    #[test]
    fn planted_blocks_correlate_with_truth() {
        let spec = NetworkSpec { sizes: vec![10, 10], within: 5.0, cross: 1.0 };
        let (flow, truth) = generate_planted_network(&spec, 3).unwrap();
        let found = louvain_partition(&flow, 3).unwrap();
        assert!(contingency_correlation(&found, &truth).unwrap() > 0.6);
    }

    #[test]
    fn single_community_stays_whole() {
        let spec = NetworkSpec { sizes: vec![8], within: 20.0, cross: 0.0 };
        let (flow, truth) = generate_planted_network(&spec, 2).unwrap();
        assert_eq!(truth.community_count(), 1);
        assert_eq!(louvain_partition(&flow, 2).unwrap().community_count(), 1);
    }

    #[test]
    fn degenerate_sizes_rejected() {
        assert!(generate_planted_network(&NetworkSpec { sizes: vec![5, 1], within: 1.0, cross: 0.0 }, 0).is_err());
        assert!(generate_planted_network(&NetworkSpec { sizes: vec![], within: 1.0, cross: 0.0 }, 0).is_err());
    }

    #[test]
    fn mixture_parsing() {
        let m = Mixture::parse("N2E2:0.85,N3E2:0.10,other:0.05").unwrap();
        assert_eq!(m.weights().len(), 6);
        assert!((m.weights()[2].1 - 0.0125).abs() < 1e-15);
        assert!(Mixture::parse("N2E2:0.5").is_err());
        assert!(Mixture::parse("N9E9:1.0").is_err());
    }

    fn population(mixture: &str, cards: usize) -> PopulationSpec {
        PopulationSpec { cards, mixture: Mixture::parse(mixture).unwrap(), date: parse_date("2015-04-07").unwrap() }
    }

    #[test]
    fn pure_mixture_round_trips() {
        let ids = station_ids(12);
        let (trips, truth) = generate_trip_population(&population("N2E2:1.0", 200), &ids, 4).unwrap();
        let (valid, stats) = validate_trips(trips);
        assert_eq!(stats, Default::default());
        let chains = select_workers(build_daily_chains(&valid).chains);
        assert_eq!(chains.len(), 200);
        assert!(chains.iter().all(|c| chain_pattern(c).to_string() == "N2E2"));
        assert_eq!(truth.len(), 200);
    }

    #[test]
    fn family_labels_round_trip() {
        let ids = station_ids(12);
        let mix = "N2E2:0.2,N3E2:0.2,N3E3:0.15,N4E3:0.15,N3E4:0.15,N4E4:0.15";
        let (trips, truth) = generate_trip_population(&population(mix, 600), &ids, 9).unwrap();
        let chains = select_workers(build_daily_chains(&trips).chains);
        assert_eq!(chains.len(), truth.len());
        let mut seen = BTreeSet::new();
        for (c, t) in chains.into_iter().zip(&truth) {
            let labeled = label_chain(c);
            assert_eq!(labeled.places, t.roles);
            assert_eq!(chain_pattern(&labeled.chain), t.code);
            seen.insert(t.code.to_string());
        }
        assert_eq!(seen.len(), 6);
    }

    #[test]
    fn mixture_fractions_are_recovered() {
        let ids = station_ids(15);
        let (trips, _) = generate_trip_population(&population("N2E2:0.85,N3E2:0.15", 10_000), &ids, 1).unwrap();
        let codes: Vec<PatternCode> = build_daily_chains(&trips).chains.iter().map(chain_pattern).collect();
        let d = pattern_distribution(&codes, 0.01).unwrap();
        assert!((d.fraction("N2E2") - 0.85).abs() < 0.02);
        assert!((d.fraction("N3E2") - 0.15).abs() < 0.02);
    }

    #[test]
    fn zero_noise_equals_simulation() {
        let p = TemporalParams { tau: 0.005, mu: 0.0007, c: 0.2, p0: 0.05, n_total: 1000 };
        let s = generate_temporal_observations(&[("A".into(), p)], 0.0, 41, 3).unwrap();
        assert_eq!(s[0].values, simulate_volume_series(&p, 41).unwrap().values);
    }

    #[test]
    fn noisy_mean_matches_simulation() {
        let p = TemporalParams { tau: 0.005, mu: 0.0007, c: 0.2, p0: 0.05, n_total: 1000 };
        let reps: Vec<(String, TemporalParams)> = (0..1000).map(|k| (format!("R{k}"), p)).collect();
        let sigma = 10.0;
        let s = generate_temporal_observations(&reps, sigma, 41, 5).unwrap();
        let truth = simulate_volume_series(&p, 41).unwrap().values;
        for t in 0..truth.len() {
            let mean: f64 = s.iter().map(|x| x.values[t]).sum::<f64>() / 1000.0;
            assert!((mean - truth[t]).abs() < 3.0 * sigma / 1000f64.sqrt(), "bin {t}");
        }
    }

    #[test]
    fn spec_round_trip_and_errors() {
        let spec = SynthSpec::default();
        assert_eq!(SynthSpec::parse(&spec.render()).unwrap(), spec);
        let err = SynthSpec::parse("seed = x\nnope = 1\nnetwork.sizes = 1\n").unwrap_err().to_string();
        assert!(err.contains("line 1") && err.contains("line 2") && err.contains("size >= 2"), "{err}");
    }

    #[test]
    fn city_is_deterministic_and_valid() {
        let spec = CitySpec { workers: 60, midday: 20, night: 10, ..Default::default() };
        let a = generate_city(&spec, 7).unwrap();
        let b = generate_city(&spec, 7).unwrap();
        assert_eq!(a, b);
        let (valid, stats) = validate_trips(a.trips.clone());
        assert_eq!(stats, Default::default());
        assert_eq!(valid.len(), a.trips.len());
        assert_eq!(a.calendar().working_days().count(), 18);
        let chains = select_workers(build_daily_chains(&a.trips).chains);
        assert_eq!(chains.len(), a.truth.chains.len());
    }
}
