//! Daily trip chains, H/W/E place labels and `NxEy` activity patterns.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use chrono::{NaiveDate, NaiveTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{format_timestamp, StationId, TripRecord};

/// Worker chains start their first trip strictly before this hour.
pub const MORNING_CUTOFF_HOUR: u32 = 10;
/// ... and make another trip starting at or after this hour.
pub const EVENING_START_HOUR: u32 = 17;
/// Default reporting floor for `pattern_distribution`.
pub const DEFAULT_FLOOR: f64 = 0.01;
pub const OTHER: &str = "other";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityChain {
    pub card_id: String,
    pub date: NaiveDate,
    pub trips: Vec<TripRecord>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainBuild {
    pub chains: Vec<ActivityChain>,
    /// Card-days dropped because two of their trips overlap in time.
    pub overlapping: usize,
}

/// Groups trips by card and start date, ordered by `(card_id, date)`.
pub fn build_daily_chains(trips: &[TripRecord]) -> ChainBuild {
    let mut groups: BTreeMap<(&str, NaiveDate), Vec<&TripRecord>> = BTreeMap::new();
    for t in trips {
        groups.entry((t.card_id.as_str(), t.date())).or_default().push(t);
    }
    let mut out = ChainBuild::default();
    for ((card, date), mut ts) in groups {
        ts.sort_by(|a, b| (a.t_start, a.t_end).cmp(&(b.t_start, b.t_end)));
        if ts.windows(2).any(|w| w[1].t_start < w[0].t_end) {
            out.overlapping += 1;
            continue;
        }
        out.chains.push(ActivityChain {
            card_id: card.to_string(),
            date,
            trips: ts.into_iter().cloned().collect(),
        });
    }
    out
}

fn evening_start() -> NaiveTime {
    NaiveTime::from_hms_opt(EVENING_START_HOUR, 0, 0).expect("valid hour")
}

/// Index of the first trip after the first one that starts in the evening.
pub fn first_evening_trip(chain: &ActivityChain) -> Option<usize> {
    chain
        .trips
        .iter()
        .enumerate()
        .skip(1)
        .find(|(_, t)| t.t_start.time() >= evening_start())
        .map(|(k, _)| k)
}

pub fn is_worker(chain: &ActivityChain) -> bool {
    match chain.trips.first() {
        Some(first) => first.t_start.hour() < MORNING_CUTOFF_HOUR && first_evening_trip(chain).is_some(),
        None => false,
    }
}

pub fn select_workers(chains: Vec<ActivityChain>) -> Vec<ActivityChain> {
    chains.into_iter().filter(is_worker).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PlaceRole {
    Home,
    Work(u8),
    Entertainment(u8),
}

impl fmt::Display for PlaceRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlaceRole::Home => f.write_str("H"),
            PlaceRole::Work(k) => write!(f, "W{k}"),
            PlaceRole::Entertainment(k) => write!(f, "E{k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledChain {
    pub chain: ActivityChain,
    /// Stations in the order their role was assigned.
    pub places: Vec<(StationId, PlaceRole)>,
}

impl LabeledChain {
    pub fn role(&self, station: &str) -> Option<PlaceRole> {
        self.places.iter().find(|(s, _)| s == station).map(|(_, r)| *r)
    }
}

/// Assigns roles in trip order; a station keeps the first role it receives.
///
/// H is the first origin and W1 the first destination. The origin of the first
/// evening trip becomes W2 when it has no role yet. Every other new station is
/// an E place, numbered by first visit.
pub fn label_chain(chain: ActivityChain) -> LabeledChain {
    let mut places: Vec<(StationId, PlaceRole)> = Vec::new();
    let mut ents = 0u8;
    let evening = first_evening_trip(&chain);
    {
        let mut assign = |station: &StationId, role: Option<PlaceRole>| {
            if places.iter().any(|(s, _)| s == station) {
                return;
            }
            let role = role.unwrap_or_else(|| {
                ents += 1;
                PlaceRole::Entertainment(ents)
            });
            places.push((station.clone(), role));
        };
        for (k, t) in chain.trips.iter().enumerate() {
            if k == 0 {
                assign(&t.origin, Some(PlaceRole::Home));
                assign(&t.destination, Some(PlaceRole::Work(1)));
                continue;
            }
            if Some(k) == evening {
                assign(&t.origin, Some(PlaceRole::Work(2)));
            }
            assign(&t.origin, None);
            assign(&t.destination, None);
        }
    }
    LabeledChain { chain, places }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PatternCode {
    pub nodes: usize,
    pub edges: usize,
}

impl fmt::Display for PatternCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "N{}E{}", self.nodes, self.edges)
    }
}

impl FromStr for PatternCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("bad pattern code {s:?}"));
        let rest = s.strip_prefix('N').ok_or_else(bad)?;
        let (n, e) = rest.split_once('E').ok_or_else(bad)?;
        Ok(PatternCode {
            nodes: n.parse().map_err(|_| bad())?,
            edges: e.parse().map_err(|_| bad())?,
        })
    }
}

pub fn chain_pattern(chain: &ActivityChain) -> PatternCode {
    let mut seen: Vec<&str> = Vec::new();
    for t in &chain.trips {
        for s in [&t.origin, &t.destination] {
            if !seen.contains(&s.as_str()) {
                seen.push(s);
            }
        }
    }
    PatternCode { nodes: seen.len(), edges: chain.trips.len() }
}

pub fn classify_pattern(chain: &LabeledChain) -> PatternCode {
    chain_pattern(&chain.chain)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternShare {
    pub code: String,
    pub count: u64,
    pub fraction: f64,
}

/// Shares sorted by count (descending, then code); `other` comes last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternDistribution {
    pub total: u64,
    pub shares: Vec<PatternShare>,
}

impl PatternDistribution {
    pub fn fraction(&self, code: &str) -> f64 {
        self.shares.iter().find(|s| s.code == code).map_or(0.0, |s| s.fraction)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["code", "count", "fraction"])?;
        for s in &self.shares {
            wtr.write_record([s.code.clone(), s.count.to_string(), s.fraction.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Fractions per code; codes whose fraction is below `floor` are pooled into `other`.
pub fn pattern_distribution(codes: &[PatternCode], floor: f64) -> Result<PatternDistribution> {
    if codes.is_empty() {
        return Err(Error::invalid("pattern distribution of an empty population"));
    }
    if !(0.0..1.0).contains(&floor) {
        return Err(Error::invalid(format!("reporting floor {floor} outside [0, 1)")));
    }
    let mut counts: HashMap<PatternCode, u64> = HashMap::new();
    for c in codes {
        *counts.entry(*c).or_default() += 1;
    }
    let total = codes.len() as u64;
    let mut kept: Vec<(PatternCode, u64)> = Vec::new();
    let mut other = 0u64;
    for (code, n) in counts {
        if (n as f64 / total as f64) < floor {
            other += n;
        } else {
            kept.push((code, n));
        }
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let share = |code: String, count: u64| PatternShare { code, count, fraction: count as f64 / total as f64 };
    let mut shares: Vec<PatternShare> = kept.into_iter().map(|(c, n)| share(c.to_string(), n)).collect();
    if other > 0 {
        shares.push(share(OTHER.to_string(), other));
    }
    Ok(PatternDistribution { total, shares })
}

pub const LABELED_CHAIN_HEADER: [&str; 9] = [
    "card_id",
    "date",
    "seq",
    "origin",
    "origin_label",
    "destination",
    "destination_label",
    "t_start",
    "t_end",
];

pub fn write_labeled_chains<W: Write>(w: W, chains: &[LabeledChain]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(LABELED_CHAIN_HEADER)?;
    for lc in chains {
        let label = |s: &str| lc.role(s).map_or_else(String::new, |r| r.to_string());
        for (k, t) in lc.chain.trips.iter().enumerate() {
            wtr.write_record([
                lc.chain.card_id.clone(),
                lc.chain.date.to_string(),
                k.to_string(),
                t.origin.clone(),
                label(&t.origin),
                t.destination.clone(),
                label(&t.destination),
                format_timestamp(&t.t_start),
                format_timestamp(&t.t_end),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_timestamp;
    use proptest::prelude::*;

    fn trip(card: &str, o: &str, d: &str, start: &str, end: &str) -> TripRecord {
        TripRecord {
            card_id: card.into(),
            origin: o.into(),
            destination: d.into(),
            t_start: parse_timestamp(&format!("2015-04-07 {start}")).unwrap(),
            t_end: parse_timestamp(&format!("2015-04-07 {end}")).unwrap(),
        }
    }

    fn chain(trips: Vec<TripRecord>) -> ActivityChain {
        let mut b = build_daily_chains(&trips);
        assert_eq!(b.chains.len(), 1);
        b.chains.remove(0)
    }

    #[test]
    fn chains_group_by_card_and_day() {
        let b = build_daily_chains(&[trip("a", "A", "B", "08:00", "08:30"), trip("b", "A", "B", "08:00", "08:30")]);
        assert_eq!(b.chains.len(), 2);
        let c = chain(vec![trip("a", "B", "A", "18:00", "18:30"), trip("a", "A", "B", "08:00", "08:30")]);
        assert_eq!(c.trips[0].t_start.time(), NaiveTime::from_hms_opt(8, 0, 0).unwrap());
        let b = build_daily_chains(&[trip("a", "A", "B", "08:00", "09:00"), trip("a", "C", "D", "08:30", "09:30")]);
        assert!(b.chains.is_empty());
        assert_eq!(b.overlapping, 1);
    }

    #[test]
    fn worker_selection() {
        let kept = chain(vec![trip("a", "A", "B", "07:50", "08:20"), trip("a", "B", "A", "18:00", "18:30")]);
        let late = chain(vec![trip("a", "A", "B", "11:00", "11:20"), trip("a", "B", "A", "18:00", "18:30")]);
        let single = chain(vec![trip("a", "A", "B", "07:50", "08:20")]);
        assert_eq!(select_workers(vec![kept.clone(), late, single]), vec![kept]);
    }

    #[test]
    fn labels_and_codes() {
        let c = label_chain(chain(vec![trip("a", "A", "B", "08:00", "08:30"), trip("a", "B", "A", "18:00", "18:30")]));
        assert_eq!(c.role("A"), Some(PlaceRole::Home));
        assert_eq!(c.role("B"), Some(PlaceRole::Work(1)));
        assert_eq!(classify_pattern(&c).to_string(), "N2E2");

        let c = label_chain(chain(vec![trip("a", "A", "B", "08:00", "08:30"), trip("a", "C", "A", "18:30", "19:00")]));
        assert_eq!(c.role("C"), Some(PlaceRole::Work(2)));
        assert_eq!(classify_pattern(&c).to_string(), "N3E2");

        let c = label_chain(chain(vec![
            trip("a", "A", "B", "08:00", "08:30"),
            trip("a", "B", "C", "18:00", "18:30"),
            trip("a", "C", "A", "21:00", "21:30"),
        ]));
        assert_eq!(c.role("B"), Some(PlaceRole::Work(1)));
        assert_eq!(c.role("C"), Some(PlaceRole::Entertainment(1)));
        assert_eq!(classify_pattern(&c).to_string(), "N3E3");
        assert_eq!(c.places.iter().filter(|p| p.1 == PlaceRole::Home).count(), 1);
    }

    #[test]
    fn code_parse_round_trip() {
        let c: PatternCode = "N4E3".parse().unwrap();
        assert_eq!(c, PatternCode { nodes: 4, edges: 3 });
        assert!("X4E3".parse::<PatternCode>().is_err());
    }

    #[test]
    fn distribution_examples() {
        let mut codes = vec![PatternCode { nodes: 2, edges: 2 }; 85];
        codes.extend(vec![PatternCode { nodes: 3, edges: 2 }; 15]);
        let d = pattern_distribution(&codes, DEFAULT_FLOOR).unwrap();
        assert_eq!(d.fraction("N2E2"), 0.85);
        assert_eq!(d.fraction("N3E2"), 0.15);
        let one = pattern_distribution(&codes[..1], DEFAULT_FLOOR).unwrap();
        assert_eq!(one.shares.len(), 1);
        assert_eq!(one.fraction("N2E2"), 1.0);
        assert!(pattern_distribution(&[], DEFAULT_FLOOR).is_err());
    }

    #[test]
    fn rare_codes_pool_into_other() {
        let mut codes = vec![PatternCode { nodes: 2, edges: 2 }; 995];
        codes.extend(vec![PatternCode { nodes: 5, edges: 6 }; 5]);
        let d = pattern_distribution(&codes, DEFAULT_FLOOR).unwrap();
        assert_eq!(d.shares.last().unwrap().code, OTHER);
        assert_eq!(d.fraction(OTHER), 0.005);
    }

    proptest! {
        #[test]
        fn fractions_sum_to_one(raw in prop::collection::vec((2usize..6, 1usize..6), 1..300), floor in 0.0f64..0.2) {
            let codes: Vec<PatternCode> = raw.iter().map(|&(n, e)| PatternCode { nodes: n, edges: e }).collect();
            let d = pattern_distribution(&codes, floor).unwrap();
            let s: f64 = d.shares.iter().map(|s| s.fraction).sum();
            prop_assert!((s - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn pattern_ignores_station_names(perm in Just(vec!["P", "Q", "R", "S"]).prop_shuffle()) {
            let trips = |n: &[&str]| vec![
                trip("a", n[0], n[1], "08:00", "08:30"),
                trip("a", n[1], n[2], "18:00", "18:30"),
                trip("a", n[2], n[3], "19:00", "19:30"),
                trip("a", n[3], n[0], "21:00", "21:30"),
            ];
            let base = classify_pattern(&label_chain(chain(trips(&["A", "B", "C", "D"]))));
            let renamed = classify_pattern(&label_chain(chain(trips(&perm))));
            prop_assert_eq!(base, renamed);
        }
    }
}
