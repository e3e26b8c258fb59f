//! Directed origin-destination count matrices.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{assign_period, PeriodTable, StationId, TripRecord};

/// Administrative grouping of a station.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Division {
    Centre,
    Outer,
}

impl std::str::FromStr for Division {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "centre" | "center" => Ok(Division::Centre),
            "outer" => Ok(Division::Outer),
            other => Err(Error::Parse(format!("unknown division group {other:?}"))),
        }
    }
}

impl fmt::Display for Division {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Division::Centre => "Centre",
            Division::Outer => "Outer",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub id: StationId,
    pub name: String,
    pub lat: f64,
    pub lon: f64,
    pub division: Division,
}

pub const STATIONS_HEADER: [&str; 5] = ["station_id", "name", "lat", "lon", "division_group"];

pub fn read_stations<R: Read>(r: R) -> Result<Vec<Station>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(r);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() < 5 {
            return Err(Error::Parse(format!("stations row has {} fields", rec.len())));
        }
        let num = |i: usize| {
            rec[i]
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("station {}: {e}", &rec[0])))
        };
        out.push(Station {
            id: rec[0].to_string(),
            name: rec[1].to_string(),
            lat: num(2)?,
            lon: num(3)?,
            division: rec[4].parse()?,
        });
    }
    Ok(out)
}

pub fn write_stations<W: Write>(w: W, stations: &[Station]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(STATIONS_HEADER)?;
    for s in stations {
        wtr.write_record([
            s.id.clone(),
            s.name.clone(),
            s.lat.to_string(),
            s.lon.to_string(),
            s.division.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Ordered, deduplicated station universe shared by matrices and partitions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StationIndex {
    ids: Vec<StationId>,
    positions: HashMap<StationId, usize>,
}

impl StationIndex {
    pub fn new(ids: Vec<StationId>) -> Result<Arc<Self>> {
        if ids.is_empty() {
            return Err(Error::InvalidStations("station list is empty".into()));
        }
        let mut positions = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if positions.insert(id.clone(), i).is_some() {
                return Err(Error::InvalidStations(format!("duplicate station {id:?}")));
            }
        }
        Ok(Arc::new(StationIndex { ids, positions }))
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[StationId] {
        &self.ids
    }

    pub fn position(&self, id: &str) -> Result<usize> {
        self.positions
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownStation(id.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DateTag {
    Date(NaiveDate),
    Aggregate,
}

impl fmt::Display for DateTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DateTag::Date(d) => write!(f, "{d}"),
            DateTag::Aggregate => f.write_str("aggregate"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PeriodTag {
    Period(String),
    Day,
}

impl fmt::Display for PeriodTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PeriodTag::Period(p) => f.write_str(p),
            PeriodTag::Day => f.write_str("day"),
        }
    }
}

/// Square trip-count matrix with a zero diagonal, row = origin, column = destination.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowMatrix {
    stations: Arc<StationIndex>,
    counts: Vec<u64>,
    pub date: DateTag,
    pub period: PeriodTag,
}

impl FlowMatrix {
    pub fn zeros(stations: Arc<StationIndex>, date: DateTag, period: PeriodTag) -> Self {
        let n = stations.len();
        FlowMatrix { stations, counts: vec![0; n * n], date, period }
    }

    /// Builds a matrix from row-major counts; the diagonal must be zero.
    pub fn from_counts(
        stations: Arc<StationIndex>,
        counts: Vec<u64>,
        date: DateTag,
        period: PeriodTag,
    ) -> Result<Self> {
        let n = stations.len();
        if counts.len() != n * n {
            return Err(Error::invalid(format!("expected {} counts, got {}", n * n, counts.len())));
        }
        if (0..n).any(|i| counts[i * n + i] != 0) {
            return Err(Error::invalid("flow matrix diagonal must be zero"));
        }
        Ok(FlowMatrix { stations, counts, date, period })
    }

    pub fn n(&self) -> usize {
        self.stations.len()
    }

    pub fn stations(&self) -> &Arc<StationIndex> {
        &self.stations
    }

    pub fn get(&self, origin: usize, destination: usize) -> u64 {
        self.counts[origin * self.n() + destination]
    }

    pub fn add(&mut self, origin: usize, destination: usize, count: u64) -> Result<()> {
        if origin == destination {
            return Err(Error::invalid("self-loop flow"));
        }
        let n = self.n();
        self.counts[origin * n + destination] += count;
        Ok(())
    }

    pub fn row(&self, origin: usize) -> &[u64] {
        let n = self.n();
        &self.counts[origin * n..(origin + 1) * n]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn out_totals(&self) -> Vec<u64> {
        (0..self.n()).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn in_totals(&self) -> Vec<u64> {
        let n = self.n();
        let mut t = vec![0; n];
        for i in 0..n {
            for (j, c) in self.row(i).iter().enumerate() {
                t[j] += c;
            }
        }
        t
    }

    /// Non-zero entries as `(origin, destination, count)`.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, u64)> + '_ {
        let n = self.n();
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, c)| **c > 0)
            .map(move |(k, c)| (k / n, k % n, *c))
    }

    pub fn metadata(&self) -> FlowMetadata {
        FlowMetadata {
            date: self.date.to_string(),
            period: self.period.to_string(),
            station_count: self.n(),
            total_trips: self.total(),
        }
    }

    pub fn write_triplets<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["origin", "destination", "count"])?;
        for (o, d, c) in self.triplets() {
            wtr.write_record([
                self.stations.ids[o].as_str(),
                self.stations.ids[d].as_str(),
                &c.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_triplets<R: Read>(
        r: R,
        stations: Arc<StationIndex>,
        date: DateTag,
        period: PeriodTag,
    ) -> Result<Self> {
        let mut m = FlowMatrix::zeros(stations, date, period);
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(r);
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != 3 {
                return Err(Error::Parse("triplet rows need origin,destination,count".into()));
            }
            let o = m.stations.position(&rec[0])?;
            let d = m.stations.position(&rec[1])?;
            let c: u64 = rec[2]
                .parse()
                .map_err(|e| Error::Parse(format!("bad count {:?}: {e}", &rec[2])))?;
            m.add(o, d, c)?;
        }
        Ok(m)
    }
}

/// Sidecar record written next to a triplet export.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowMetadata {
    pub date: String,
    pub period: String,
    pub station_count: usize,
    pub total_trips: u64,
}

/// Which trips of a date feed a matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeriodSelector<'a> {
    /// Trips whose start and end fall in the named period.
    Named(&'a str),
    /// Every trip starting on the date.
    WholeDay,
}

pub fn build_flow_matrix(
    trips: &[TripRecord],
    date: NaiveDate,
    period: PeriodSelector<'_>,
    table: &PeriodTable,
    stations: &Arc<StationIndex>,
) -> Result<FlowMatrix> {
    let tag = match period {
        PeriodSelector::Named(name) => {
            if table.get(name).is_none() {
                return Err(Error::invalid(format!("unknown period {name:?}")));
            }
            PeriodTag::Period(name.to_string())
        }
        PeriodSelector::WholeDay => PeriodTag::Day,
    };
    let mut m = FlowMatrix::zeros(Arc::clone(stations), DateTag::Date(date), tag);
    for t in trips {
        let o = stations.position(&t.origin)?;
        let d = stations.position(&t.destination)?;
        if t.date() != date {
            continue;
        }
        let selected = match period {
            PeriodSelector::Named(name) => assign_period(t, table).is_some_and(|p| p.name == name),
            PeriodSelector::WholeDay => true,
        };
        if selected {
            m.add(o, d, 1)?;
        }
    }
    Ok(m)
}

/// Entrywise sum. The result keeps the date when all inputs share it
/// (period becomes `day`); otherwise the date becomes `aggregate`.
pub fn aggregate(matrices: &[FlowMatrix]) -> Result<FlowMatrix> {
    let first = matrices
        .first()
        .ok_or_else(|| Error::invalid("nothing to aggregate"))?;
    let mut counts = vec![0u64; first.counts.len()];
    for m in matrices {
        if m.stations != first.stations && *m.stations != *first.stations {
            return Err(Error::StationIndexMismatch);
        }
        for (acc, c) in counts.iter_mut().zip(&m.counts) {
            *acc += c;
        }
    }
    let same_date = matrices.iter().all(|m| m.date == first.date);
    let (date, period) = if same_date {
        (first.date.clone(), PeriodTag::Day)
    } else {
        let same_period = matrices.iter().all(|m| m.period == first.period);
        (
            DateTag::Aggregate,
            if same_period { first.period.clone() } else { PeriodTag::Day },
        )
    };
    Ok(FlowMatrix { stations: Arc::clone(&first.stations), counts, date, period })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_timestamp;

    fn idx(ids: &[&str]) -> Arc<StationIndex> {
        StationIndex::new(ids.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    fn trip(o: &str, d: &str, s: &str, e: &str) -> TripRecord {
        TripRecord {
            card_id: "c".into(),
            origin: o.into(),
            destination: d.into(),
            t_start: parse_timestamp(s).unwrap(),
            t_end: parse_timestamp(e).unwrap(),
        }
    }

    fn date() -> NaiveDate {
        NaiveDate::from_ymd_opt(2015, 4, 7).unwrap()
    }

    #[test]
    fn counts_trips_in_period() {
        let st = idx(&["A", "B"]);
        let trips: Vec<_> = (0..3)
            .map(|_| trip("A", "B", "2015-04-07 08:00", "2015-04-07 08:30"))
            .collect();
        let m = build_flow_matrix(&trips, date(), PeriodSelector::Named("Morning"), &PeriodTable::default(), &st).unwrap();
        assert_eq!(m.get(0, 1), 3);
        assert_eq!(m.total(), 3);

        let empty = build_flow_matrix(&[], date(), PeriodSelector::Named("Morning"), &PeriodTable::default(), &st).unwrap();
        assert_eq!(empty.total(), 0);
    }

    #[test]
    fn period_filter_excludes_other_periods() {
        let st = idx(&["A", "B"]);
        let trips = vec![
            trip("A", "B", "2015-04-07 08:00", "2015-04-07 08:30"),
            trip("B", "A", "2015-04-07 18:00", "2015-04-07 18:30"),
        ];
        let m = build_flow_matrix(&trips, date(), PeriodSelector::Named("Morning"), &PeriodTable::default(), &st).unwrap();
        assert_eq!(m.get(0, 1), 1);
        assert_eq!(m.get(1, 0), 0);
    }

    #[test]
    fn unknown_station_is_named() {
        let st = idx(&["A", "B"]);
        let trips = vec![trip("A", "Z", "2015-04-07 08:00", "2015-04-07 08:30")];
        match build_flow_matrix(&trips, date(), PeriodSelector::WholeDay, &PeriodTable::default(), &st) {
            Err(Error::UnknownStation(s)) => assert_eq!(s, "Z"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn aggregate_identity_and_disjoint_cells() {
        let st = idx(&["A", "B", "C"]);
        let mut a = FlowMatrix::zeros(Arc::clone(&st), DateTag::Date(date()), PeriodTag::Period("Morning".into()));
        a.add(0, 1, 4).unwrap();
        let zero = FlowMatrix::zeros(Arc::clone(&st), DateTag::Date(date()), PeriodTag::Period("Night".into()));
        let sum = aggregate(&[a.clone(), zero]).unwrap();
        assert_eq!(sum.counts(), a.counts());
        assert_eq!(sum.period, PeriodTag::Day);

        let mut b = FlowMatrix::zeros(Arc::clone(&st), DateTag::Date(date()), PeriodTag::Period("Night".into()));
        b.add(2, 0, 1).unwrap();
        let both = aggregate(&[a, b]).unwrap();
        assert_eq!((both.get(0, 1), both.get(2, 0), both.total()), (4, 1, 5));
    }

    #[test]
    fn aggregate_rejects_mismatched_stations() {
        let a = FlowMatrix::zeros(idx(&["A", "B"]), DateTag::Aggregate, PeriodTag::Day);
        let b = FlowMatrix::zeros(idx(&["A", "C"]), DateTag::Aggregate, PeriodTag::Day);
        assert!(matches!(aggregate(&[a, b]), Err(Error::StationIndexMismatch)));
    }

    #[test]
    fn across_dates_becomes_aggregate() {
        let st = idx(&["A", "B"]);
        let a = FlowMatrix::zeros(Arc::clone(&st), DateTag::Date(date()), PeriodTag::Period("Evening".into()));
        let b = FlowMatrix::zeros(st, DateTag::Date(date().succ_opt().unwrap()), PeriodTag::Period("Evening".into()));
        let s = aggregate(&[a, b]).unwrap();
        assert_eq!(s.date, DateTag::Aggregate);
        assert_eq!(s.period, PeriodTag::Period("Evening".into()));
    }

    #[test]
    fn triplet_round_trip() {
        let st = idx(&["A", "B", "C"]);
        let mut m = FlowMatrix::zeros(Arc::clone(&st), DateTag::Aggregate, PeriodTag::Day);
        m.add(0, 2, 7).unwrap();
        m.add(1, 0, 2).unwrap();
        let mut buf = Vec::new();
        m.write_triplets(&mut buf).unwrap();
        let back = FlowMatrix::read_triplets(buf.as_slice(), st, DateTag::Aggregate, PeriodTag::Day).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn duplicate_stations_rejected() {
        assert!(StationIndex::new(vec!["A".into(), "A".into()]).is_err());
        assert!(StationIndex::new(vec![]).is_err());
    }
}
