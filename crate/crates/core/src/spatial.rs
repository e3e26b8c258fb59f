//! Destination choice: topic popularity, emotion weights, sigmoid attraction,
//! a gravity baseline and correlation against observed flows.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowgraph::{Division, FlowMatrix, Station};

pub const EARTH_RADIUS_KM: f64 = 6371.0088;
const Z95: f64 = 1.959_963_984_540_054;

pub fn haversine_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * a.sqrt().min(1.0).asin()
}

/// Dense symmetric distance matrix in km.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    n: usize,
    km: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_stations(stations: &[Station]) -> Self {
        let n = stations.len();
        let mut km = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = haversine_km(stations[i].lat, stations[i].lon, stations[j].lat, stations[j].lon);
                km[i * n + j] = d;
                km[j * n + i] = d;
            }
        }
        DistanceMatrix { n, km }
    }

    pub fn from_dense(n: usize, km: Vec<f64>) -> Result<Self> {
        if km.len() != n * n {
            return Err(Error::invalid("distance matrix is not n x n"));
        }
        if km.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::invalid("distances must be finite and non-negative"));
        }
        Ok(DistanceMatrix { n, km })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.km[i * self.n + j]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FacilityCounts {
    pub entertainment: u32,
    pub shopping: u32,
    pub food: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationProfile {
    pub station: Station,
    pub facilities: FacilityCounts,
    /// Popularity of each topic at this station.
    pub topic_popularity: Vec<f64>,
    /// Opportunities `o_i`; `None` means "use observed inflow".
    pub opportunities: Option<f64>,
}

pub const PROFILE_HEADER: [&str; 9] = [
    "station_id",
    "name",
    "lat",
    "lon",
    "division_group",
    "entertainment",
    "shopping",
    "food",
    "opportunities",
];

/// Profiles CSV. Topic popularity is not stored here; it comes from station words.
pub fn read_profiles<R: Read>(r: R) -> Result<Vec<StationProfile>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(r);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() < 8 {
            return Err(Error::Parse(format!("profile row has {} fields, expected 9", rec.len())));
        }
        let f = |k: usize| -> Result<f64> {
            rec[k].parse().map_err(|e| Error::Parse(format!("bad number {:?}: {e}", &rec[k])))
        };
        let c = |k: usize| -> Result<u32> {
            rec[k].parse().map_err(|e| Error::Parse(format!("bad facility count {:?}: {e}", &rec[k])))
        };
        let opportunities = match rec.get(8) {
            None | Some("") => None,
            Some(_) => {
                let o = f(8)?;
                if !(o >= 0.0) {
                    return Err(Error::Parse(format!("negative opportunities for {}", &rec[0])));
                }
                Some(o)
            }
        };
        out.push(StationProfile {
            station: Station {
                id: rec[0].to_string(),
                name: rec[1].to_string(),
                lat: f(2)?,
                lon: f(3)?,
                division: rec[4].parse()?,
            },
            facilities: FacilityCounts { entertainment: c(5)?, shopping: c(6)?, food: c(7)? },
            topic_popularity: Vec::new(),
            opportunities,
        });
    }
    Ok(out)
}

pub fn write_profiles<W: Write>(w: W, profiles: &[StationProfile]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(PROFILE_HEADER)?;
    for p in profiles {
        let s = &p.station;
        wtr.write_record([
            s.id.clone(),
            s.name.clone(),
            s.lat.to_string(),
            s.lon.to_string(),
            s.division.to_string(),
            p.facilities.entertainment.to_string(),
            p.facilities.shopping.to_string(),
            p.facilities.food.to_string(),
            p.opportunities.map_or_else(String::new, |o| o.to_string()),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Per-word topic probabilities `p_j^w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicTable {
    topics: usize,
    probs: BTreeMap<String, Vec<f64>>,
}

impl TopicTable {
    pub fn new(topics: usize, probs: BTreeMap<String, Vec<f64>>) -> Result<Self> {
        if topics == 0 {
            return Err(Error::invalid("topic table needs at least one topic"));
        }
        for (w, p) in &probs {
            if p.len() != topics {
                return Err(Error::invalid(format!("word {w:?} has {} topic probabilities", p.len())));
            }
            if p.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(Error::invalid(format!("word {w:?} has a probability outside [0, 1]")));
            }
        }
        Ok(TopicTable { topics, probs })
    }

    pub fn topics(&self) -> usize {
        self.topics
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.probs.get(word).map(Vec::as_slice)
    }

    pub fn words(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.probs.iter().map(|(w, p)| (w.as_str(), p.as_slice()))
    }

    /// CSV `word,topic_id,probability`; missing cells are 0. Topic ids are 0-based.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(r);
        let mut cells: Vec<(String, usize, f64)> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let t: usize = rec[1].parse().map_err(|e| Error::Parse(format!("bad topic id {:?}: {e}", &rec[1])))?;
            let p: f64 = rec[2].parse().map_err(|e| Error::Parse(format!("bad probability {:?}: {e}", &rec[2])))?;
            cells.push((rec[0].to_string(), t, p));
        }
        let topics = cells.iter().map(|c| c.1 + 1).max().unwrap_or(0);
        let mut probs: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for (w, t, p) in cells {
            probs.entry(w).or_insert_with(|| vec![0.0; topics])[t] = p;
        }
        TopicTable::new(topics, probs)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["word", "topic_id", "probability"])?;
        for (word, p) in &self.probs {
            for (t, v) in p.iter().enumerate() {
                if *v != 0.0 {
                    wtr.write_record([word.clone(), t.to_string(), v.to_string()])?;
                }
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Popularity {
    pub values: Vec<f64>,
    /// Word occurrences absent from the topic table.
    pub misses: u64,
}

/// `X_j = Σ p_j^w` over word occurrences (with multiplicity).
pub fn topic_popularity(table: &TopicTable, words: &[(String, u64)]) -> Popularity {
    let mut values = vec![0.0; table.topics()];
    let mut misses = 0;
    for (w, count) in words {
        match table.get(w) {
            Some(p) => {
                for (x, pj) in values.iter_mut().zip(p) {
                    *x += *count as f64 * pj;
                }
            }
            None => misses += count,
        }
    }
    Popularity { values, misses }
}

/// Station word counts, CSV `station_id,word,count`.
pub fn read_station_words<R: Read>(r: R) -> Result<BTreeMap<String, Vec<(String, u64)>>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(r);
    let mut out: BTreeMap<String, Vec<(String, u64)>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let c: u64 = rec[2].parse().map_err(|e| Error::Parse(format!("bad word count {:?}: {e}", &rec[2])))?;
        out.entry(rec[0].to_string()).or_default().push((rec[1].to_string(), c));
    }
    Ok(out)
}

pub fn write_station_words<W: Write>(w: W, words: &BTreeMap<String, Vec<(String, u64)>>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["station_id", "word", "count"])?;
    for (s, ws) in words {
        for (word, c) in ws {
            wtr.write_record([s.as_str(), word.as_str(), &c.to_string()])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Emotion strength per word, CSV `word,strength`.
pub fn read_emotion_dictionary<R: Read>(r: R) -> Result<HashMap<String, f64>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(r);
    let mut out = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let s: f64 = rec[1].parse().map_err(|e| Error::Parse(format!("bad strength {:?}: {e}", &rec[1])))?;
        out.insert(rec[0].to_string(), s);
    }
    Ok(out)
}

pub fn write_emotion_dictionary<W: Write>(w: W, dict: &BTreeMap<String, f64>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["word", "strength"])?;
    for (word, s) in dict {
        wtr.write_record([word.as_str(), &s.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Per-topic emotion strengths with normalisation bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicEmotion {
    pub strength: Vec<f64>,
    pub lb: f64,
    pub ub: f64,
}

impl TopicEmotion {
    /// `E_j = Σ_w p_j^w · s(w)` over dictionary words found in the topic table.
    pub fn from_tables(table: &TopicTable, dict: &HashMap<String, f64>) -> Self {
        let mut strength = vec![0.0; table.topics()];
        for (w, p) in table.words() {
            if let Some(s) = dict.get(w) {
                for (e, pj) in strength.iter_mut().zip(p) {
                    *e += pj * s;
                }
            }
        }
        Self::with_observed_bounds(strength)
    }

    /// Bounds default to the observed extremes, widened by 0.5 when they coincide.
    pub fn with_observed_bounds(strength: Vec<f64>) -> Self {
        let lb = strength.iter().copied().fold(f64::INFINITY, f64::min);
        let ub = strength.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (lb, ub) = if lb < ub { (lb, ub) } else { (lb - 0.5, ub + 0.5) };
        TopicEmotion { strength, lb, ub }
    }

    pub fn theta(&self) -> Result<Vec<f64>> {
        self.strength.iter().map(|e| normalize_emotion(*e, self.lb, self.ub)).collect()
    }
}

/// `(E - lb) / (ub - lb)`, with `E` clamped into `[lb, ub]`.
pub fn normalize_emotion(e: f64, lb: f64, ub: f64) -> Result<f64> {
    if !(lb < ub) {
        return Err(Error::invalid(format!("emotion bounds need lb < ub, got lb={lb}, ub={ub}")));
    }
    Ok((e.clamp(lb, ub) - lb) / (ub - lb))
}

/// How the distance enters the attraction exponent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum DistanceInput {
    /// `-d`: attraction falls with distance.
    #[default]
    Negated,
    /// `+d`: the exponent as literally written.
    Raw,
}

impl FromStr for DistanceInput {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "negated" => Ok(DistanceInput::Negated),
            "raw" => Ok(DistanceInput::Raw),
            _ => Err(Error::Parse(format!("unknown distance input {s:?} (negated|raw)"))),
        }
    }
}

impl fmt::Display for DistanceInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DistanceInput::Negated => "negated",
            DistanceInput::Raw => "raw",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialParams {
    pub theta: Vec<f64>,
    pub theta_d: f64,
    pub epsilon: f64,
    pub distance: DistanceInput,
}

impl SpatialParams {
    pub fn validate(&self) -> Result<()> {
        if self.theta.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::invalid("topic weights must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.theta_d) {
            return Err(Error::invalid("distance weight must lie in [0, 1]"));
        }
        if !self.epsilon.is_finite() {
            return Err(Error::invalid("residual term must be finite"));
        }
        Ok(())
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `o · sigmoid(Σ Θ_j X_j ± Θ_d d + ε)`.
pub fn attraction(opportunities: f64, popularity: &[f64], params: &SpatialParams, distance_km: f64) -> f64 {
    let signal: f64 = params.theta.iter().zip(popularity).map(|(t, x)| t * x).sum();
    let d = match params.distance {
        DistanceInput::Negated => -distance_km,
        DistanceInput::Raw => distance_km,
    };
    opportunities * sigmoid(signal + params.theta_d * d + params.epsilon)
}

/// Choice probabilities from `origin` to every station (0 at the origin itself).
pub fn destination_distribution(
    origin: usize,
    profiles: &[StationProfile],
    opportunities: &[f64],
    params: &SpatialParams,
    distances: &DistanceMatrix,
) -> Result<Vec<f64>> {
    let n = profiles.len();
    if n < 2 {
        return Err(Error::invalid("destination choice needs at least two stations"));
    }
    if opportunities.len() != n || distances.n() != n || origin >= n {
        return Err(Error::invalid("profiles, opportunities and distances disagree in size"));
    }
    let mut a: Vec<f64> = (0..n)
        .map(|i| {
            if i == origin {
                0.0
            } else {
                attraction(opportunities[i], &profiles[i].topic_popularity, params, distances.get(origin, i))
            }
        })
        .collect();
    let total: f64 = a.iter().sum();
    if !(total > 0.0) {
        return Err(Error::NoOpportunities(origin));
    }
    for x in a.iter_mut() {
        *x /= total;
    }
    Ok(a)
}

/// Row `s` holds the destination distribution of origin `s`.
pub fn predicted_matrix(
    profiles: &[StationProfile],
    opportunities: &[f64],
    params: &SpatialParams,
    distances: &DistanceMatrix,
) -> Result<Vec<Vec<f64>>> {
    params.validate()?;
    (0..profiles.len())
        .into_par_iter()
        .map(|s| destination_distribution(s, profiles, opportunities, params, distances))
        .collect()
}

/// Observed inflow per station, the default opportunities.
pub fn inflow_opportunities(flow: &FlowMatrix) -> Vec<f64> {
    flow.in_totals().into_iter().map(|x| x as f64).collect()
}

/// Row `s` is `m_i / d_si^β` normalised over destinations `i ≠ s`.
pub fn gravity_baseline(masses: &[f64], distances: &DistanceMatrix, beta: f64) -> Result<Vec<Vec<f64>>> {
    let n = masses.len();
    if distances.n() != n {
        return Err(Error::invalid("masses and distances disagree in size"));
    }
    if masses.iter().any(|m| !(*m >= 0.0)) {
        return Err(Error::invalid("gravity masses must be non-negative"));
    }
    let mut rows = Vec::with_capacity(n);
    for s in 0..n {
        let mut row = vec![0.0; n];
        for i in 0..n {
            if i == s {
                continue;
            }
            let d = distances.get(s, i);
            if d <= 0.0 {
                return Err(Error::ZeroDistance(s, i));
            }
            row[i] = masses[s] * masses[i] / d.powf(beta);
        }
        let total: f64 = row.iter().sum();
        if !(total > 0.0) {
            return Err(Error::NoOpportunities(s));
        }
        for x in row.iter_mut() {
            *x /= total;
        }
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Group {
    Centre,
    Outer,
    Both,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::Centre, Group::Outer, Group::Both];

    fn contains(self, d: Division) -> bool {
        match self {
            Group::Both => true,
            Group::Centre => d == Division::Centre,
            Group::Outer => d == Division::Outer,
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Group::Centre => "centre",
            Group::Outer => "outer",
            Group::Both => "both",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowCorrelation {
    pub r: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::invalid("pearson correlation needs two equal-length samples of size >= 2"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::DegenerateCorrelation("zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson r with a 95% Fisher-z interval. For `n <= 3` the interval is `(-1, 1)`.
pub fn fisher_interval(r: f64, n: usize) -> (f64, f64) {
    if r.abs() >= 1.0 - 1e-12 {
        return (r, r);
    }
    if n <= 3 {
        return (-1.0, 1.0);
    }
    let z = r.atanh();
    let h = Z95 / ((n - 3) as f64).sqrt();
    ((z - h).tanh(), (z + h).tanh())
}

/// Correlates predicted probabilities with observed per-origin shares over the
/// OD pairs whose origin lies in `group`. Origins without observed trips are skipped.
pub fn evaluate_flow_correlation(
    predicted: &[Vec<f64>],
    observed: &FlowMatrix,
    divisions: &[Division],
    group: Group,
) -> Result<FlowCorrelation> {
    let n = observed.n();
    if predicted.len() != n || divisions.len() != n || predicted.iter().any(|r| r.len() != n) {
        return Err(Error::invalid("prediction, observation and divisions disagree in size"));
    }
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for s in 0..n {
        if !group.contains(divisions[s]) {
            continue;
        }
        let row = observed.row(s);
        let total: u64 = row.iter().sum();
        if total == 0 {
            continue;
        }
        for i in 0..n {
            if i != s {
                xs.push(predicted[s][i]);
                ys.push(row[i] as f64 / total as f64);
            }
        }
    }
    if xs.len() < 3 {
        return Err(Error::invalid(format!("group {group} has {} OD pairs, need at least 3", xs.len())));
    }
    let r = pearson(&xs, &ys)?;
    let (ci_low, ci_high) = fisher_interval(r, xs.len());
    Ok(FlowCorrelation { r, ci_low, ci_high, n: xs.len() })
}

pub fn write_evaluation<W: Write>(w: W, rows: &[(String, FlowCorrelation)]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["group", "r", "ci_low", "ci_high", "n"])?;
    for (g, c) in rows {
        wtr.write_record([g.clone(), c.r.to_string(), c.ci_low.to_string(), c.ci_high.to_string(), c.n.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::community::tests::flow_from_arcs;
    use proptest::prelude::*;

    fn profile(id: usize, x: Vec<f64>) -> StationProfile {
        StationProfile {
            station: Station {
                id: format!("S{id}"),
                name: String::new(),
                lat: 31.2,
                lon: 121.4 + id as f64 * 0.01,
                division: Division::Centre,
            },
            facilities: FacilityCounts::default(),
            topic_popularity: x,
            opportunities: None,
        }
    }

    fn params(theta: Vec<f64>, theta_d: f64, epsilon: f64) -> SpatialParams {
        SpatialParams { theta, theta_d, epsilon, distance: DistanceInput::Negated }
    }

    #[test]
    fn popularity_sums_occurrences() {
        let mut probs = BTreeMap::new();
        probs.insert("w1".to_string(), vec![0.3]);
        probs.insert("w2".to_string(), vec![0.1]);
        let t = TopicTable::new(1, probs).unwrap();
        assert_eq!(topic_popularity(&t, &[]).values, vec![0.0]);
        let p = topic_popularity(&t, &[("w1".into(), 2), ("w2".into(), 1), ("zz".into(), 4)]);
        assert!((p.values[0] - 0.7).abs() < 1e-15);
        assert_eq!(p.misses, 4);
    }

    #[test]
    fn emotion_normalisation() {
        assert_eq!(normalize_emotion(-2.0, -2.0, 4.0).unwrap(), 0.0);
        assert_eq!(normalize_emotion(4.0, -2.0, 4.0).unwrap(), 1.0);
        assert_eq!(normalize_emotion(1.0, -2.0, 4.0).unwrap(), 0.5);
        assert_eq!(normalize_emotion(9.0, -2.0, 4.0).unwrap(), 1.0);
        assert!(normalize_emotion(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn attraction_examples() {
        assert_eq!(attraction(1.0, &[3.0], &params(vec![0.0], 0.0, 0.0), 5.0), 0.5);
        assert_eq!(attraction(0.0, &[3.0], &params(vec![1.0], 0.5, 0.0), 5.0), 0.0);
        let p = SpatialParams { distance: DistanceInput::Raw, ..params(vec![1.0], 0.5, -1.0) };
        let reference = 1.0 / (1.0 + (-2.0f64).exp());
        assert!((attraction(1.0, &[2.0], &p, 2.0) - reference).abs() < 1e-15);
        assert!((reference - 0.880797).abs() < 1e-6);
    }

    #[test]
    fn distribution_examples() {
        let profiles: Vec<_> = (0..4).map(|i| profile(i, vec![1.0])).collect();
        let d = DistanceMatrix::from_dense(4, (0..16).map(|k| if k % 5 == 0 { 0.0 } else { 2.0 }).collect()).unwrap();
        let p = params(vec![0.5], 0.2, 0.0);
        let dist = destination_distribution(1, &profiles, &[1.0; 4], &p, &d).unwrap();
        assert_eq!(dist[1], 0.0);
        for i in [0, 2, 3] {
            assert!((dist[i] - 1.0 / 3.0).abs() < 1e-15);
        }
        let dist = destination_distribution(0, &profiles, &[1.0, 1.0, 0.0, 2.0], &p, &d).unwrap();
        assert_eq!(dist[2], 0.0);
        assert!((dist[3] - 2.0 / 3.0).abs() < 1e-15);
        assert!(matches!(
            destination_distribution(0, &profiles, &[1.0, 0.0, 0.0, 0.0], &p, &d),
            Err(Error::NoOpportunities(0))
        ));
    }

    #[test]
    fn three_station_hand_case() {
        let profiles = vec![profile(0, vec![0.0]), profile(1, vec![1.0]), profile(2, vec![3.0])];
        let d = DistanceMatrix::from_dense(3, vec![0.0, 1.0, 2.0, 1.0, 0.0, 1.5, 2.0, 1.5, 0.0]).unwrap();
        let p = params(vec![0.5], 0.4, 0.1);
        let dist = destination_distribution(0, &profiles, &[1.0, 2.0, 1.0], &p, &d).unwrap();
        let s = |x: f64| 1.0 / (1.0 + (-x).exp());
        let a1 = 2.0 * s(0.5 - 0.4 + 0.1);
        let a2 = 1.0 * s(1.5 - 0.8 + 0.1);
        assert!((dist[1] - a1 / (a1 + a2)).abs() < 1e-15);
        assert!((dist[2] - a2 / (a1 + a2)).abs() < 1e-15);
    }

    #[test]
    fn gravity_examples() {
        let d = DistanceMatrix::from_dense(3, vec![0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0]).unwrap();
        let g = gravity_baseline(&[1.0, 2.0, 2.0], &d, 2.0).unwrap();
        assert_eq!(g[0], vec![0.0, 0.5, 0.5]);
        let g2 = gravity_baseline(&[2.0, 4.0, 4.0], &d, 2.0).unwrap();
        assert_eq!(g, g2);
        let u = gravity_baseline(&[1.0; 3], &d, 2.0).unwrap();
        assert_eq!(u[1], vec![0.5, 0.0, 0.5]);
        let z = DistanceMatrix::from_dense(2, vec![0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(gravity_baseline(&[1.0, 1.0], &z, 2.0), Err(Error::ZeroDistance(0, 1))));
    }

    #[test]
    fn fisher_interval_reference() {
        let (lo, hi) = fisher_interval(0.35, 2000);
        assert!((lo - 0.311).abs() < 5e-4, "{lo}");
        assert!((hi - 0.388).abs() < 5e-4, "{hi}");
        assert_eq!(fisher_interval(1.0, 50), (1.0, 1.0));
    }

    #[test]
    fn evaluation_extremes() {
        let flow = flow_from_arcs(3, &[(0, 1, 3), (0, 2, 1), (1, 0, 1), (1, 2, 1), (2, 0, 2), (2, 1, 6)]);
        let divs = [Division::Centre, Division::Centre, Division::Outer];
        let shares = vec![vec![0.0, 0.75, 0.25], vec![0.5, 0.0, 0.5], vec![0.25, 0.75, 0.0]];
        let c = evaluate_flow_correlation(&shares, &flow, &divs, Group::Both).unwrap();
        assert!((c.r - 1.0).abs() < 1e-12);
        let anti: Vec<Vec<f64>> = shares.iter().map(|r| r.iter().map(|x| 1.0 - 2.0 * x).collect()).collect();
        let c = evaluate_flow_correlation(&anti, &flow, &divs, Group::Both).unwrap();
        assert!((c.r + 1.0).abs() < 1e-12);
        assert!(evaluate_flow_correlation(&shares, &flow, &divs, Group::Outer).is_err());
        let flat = vec![vec![0.5; 3]; 3];
        assert!(matches!(
            evaluate_flow_correlation(&flat, &flow, &divs, Group::Both),
            Err(Error::DegenerateCorrelation(_))
        ));
    }

    #[test]
    fn haversine_one_degree_of_latitude() {
        let d = haversine_km(0.0, 0.0, 1.0, 0.0);
        assert!((d - EARTH_RADIUS_KM * std::f64::consts::PI / 180.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn distributions_normalise(
            xs in prop::collection::vec(0.0f64..5.0, 3..12),
            o in prop::collection::vec(0.1f64..10.0, 12),
            theta in 0.0f64..1.0,
            theta_d in 0.0f64..1.0,
        ) {
            let n = xs.len();
            let profiles: Vec<_> = xs.iter().enumerate().map(|(i, x)| profile(i, vec![*x])).collect();
            let stations: Vec<Station> = profiles.iter().map(|p| p.station.clone()).collect();
            let d = DistanceMatrix::from_stations(&stations);
            let p = params(vec![theta], theta_d, 0.0);
            let m = predicted_matrix(&profiles, &o[..n], &p, &d).unwrap();
            for (s, row) in m.iter().enumerate() {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                for (i, v) in row.iter().enumerate() {
                    let ok = if i == s { *v == 0.0 } else { *v > 0.0 && *v < 1.0 };
                    prop_assert!(ok);
                }
            }
        }

        #[test]
        fn attraction_monotone(x in 0.0f64..5.0, d in 0.0f64..20.0, theta in 0.01f64..1.0, theta_d in 0.01f64..1.0) {
            let h = 1e-3;
            let p = params(vec![theta], theta_d, 0.0);
            prop_assert!(attraction(1.0, &[x + h], &p, d) > attraction(1.0, &[x], &p, d));
            prop_assert!(attraction(1.0, &[x], &p, d + h) < attraction(1.0, &[x], &p, d));
            let raw = SpatialParams { distance: DistanceInput::Raw, ..p };
            prop_assert!(attraction(1.0, &[x], &raw, d + h) > attraction(1.0, &[x], &raw, d));
        }
    }
}
