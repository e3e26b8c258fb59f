//! Smart-card records: tap events, trips, daily periods and the work calendar.
//!
//! Two input shapes are accepted. Raw tap CSVs (`card_id,date,time,station_id,direction`)
//! are paired into trips per card; trip CSVs (`card_id,origin,destination,t_start,t_end`)
//! skip the pairing step. [`detect_input_kind`] tells them apart by header.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Read, Write};
use std::str::FromStr;

use chrono::{Datelike, NaiveDate, NaiveDateTime, NaiveTime, Timelike, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type StationId = String;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    CheckIn,
    CheckOut,
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "in" | "check_in" => Ok(Direction::CheckIn),
            "out" | "check_out" => Ok(Direction::CheckOut),
            other => Err(Error::Parse(format!("unknown tap direction {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TapEvent {
    pub card_id: String,
    pub station_id: StationId,
    pub timestamp: NaiveDateTime,
    pub direction: Direction,
}

/// One row of a tap CSV, before timestamp validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TapRow {
    pub card_id: String,
    pub date: String,
    pub time: String,
    pub station_id: String,
    pub direction: String,
}

impl TapRow {
    pub fn parse(&self) -> Result<TapEvent> {
        let date = parse_date(&self.date)?;
        let time = parse_time(&self.time)?;
        Ok(TapEvent {
            card_id: self.card_id.clone(),
            station_id: self.station_id.clone(),
            timestamp: date.and_time(time),
            direction: self.direction.parse()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TripRecord {
    pub card_id: String,
    pub origin: StationId,
    pub destination: StationId,
    pub t_start: NaiveDateTime,
    pub t_end: NaiveDateTime,
}

impl TripRecord {
    /// Trips are attributed to the date on which they start, including those crossing midnight.
    pub fn date(&self) -> NaiveDate {
        self.t_start.date()
    }
}

/// Counters for every tap event that did not end up in a trip.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropStats {
    pub malformed: usize,
    pub unmatched_check_in: usize,
    pub unmatched_check_out: usize,
    /// Pairs whose check-out is not strictly later than the check-in (two events each).
    pub non_positive_duration: usize,
    /// Pairs with origin equal to destination (two events each).
    pub same_station: usize,
}

impl DropStats {
    /// Individual events dropped, excluding those in same-station pairs.
    pub fn dropped_events(&self) -> usize {
        self.malformed
            + self.unmatched_check_in
            + self.unmatched_check_out
            + 2 * self.non_positive_duration
    }

    pub fn merge(&mut self, other: &DropStats) {
        self.malformed += other.malformed;
        self.unmatched_check_in += other.unmatched_check_in;
        self.unmatched_check_out += other.unmatched_check_out;
        self.non_positive_duration += other.non_positive_duration;
        self.same_station += other.same_station;
    }
}

/// Pairs tap events into trips with strict alternation per card.
///
/// Events are sorted per card; a check-in followed by another check-in drops
/// the first one, a check-out without a pending check-in is dropped. The
/// output is sorted by `(card_id, t_start)` and does not depend on input order.
pub fn pair_taps(mut events: Vec<TapEvent>) -> (Vec<TripRecord>, DropStats) {
    let mut stats = DropStats::default();
    events.sort_by(|a, b| {
        (&a.card_id, a.timestamp, a.direction, &a.station_id).cmp(&(
            &b.card_id,
            b.timestamp,
            b.direction,
            &b.station_id,
        ))
    });

    let mut trips = Vec::new();
    let mut pending: Option<&TapEvent> = None;
    let mut current_card: Option<&str> = None;
    for ev in &events {
        if current_card != Some(ev.card_id.as_str()) {
            if pending.take().is_some() {
                stats.unmatched_check_in += 1;
            }
            current_card = Some(&ev.card_id);
        }
        match ev.direction {
            Direction::CheckIn => {
                if pending.replace(ev).is_some() {
                    stats.unmatched_check_in += 1;
                }
            }
            Direction::CheckOut => match pending.take() {
                None => stats.unmatched_check_out += 1,
                Some(start) if start.station_id == ev.station_id => stats.same_station += 1,
                Some(start) if ev.timestamp <= start.timestamp => stats.non_positive_duration += 1,
                Some(start) => trips.push(TripRecord {
                    card_id: ev.card_id.clone(),
                    origin: start.station_id.clone(),
                    destination: ev.station_id.clone(),
                    t_start: start.timestamp,
                    t_end: ev.timestamp,
                }),
            },
        }
    }
    if pending.is_some() {
        stats.unmatched_check_in += 1;
    }
    (trips, stats)
}

/// Parses raw rows and pairs them; rows with malformed fields are counted, not fatal.
pub fn pair_tap_rows(rows: &[TapRow]) -> (Vec<TripRecord>, DropStats) {
    let mut malformed = 0;
    let events: Vec<TapEvent> = rows
        .iter()
        .filter_map(|r| match r.parse() {
            Ok(ev) => Some(ev),
            Err(_) => {
                malformed += 1;
                None
            }
        })
        .collect();
    let (trips, mut stats) = pair_taps(events);
    stats.malformed += malformed;
    (trips, stats)
}

/// Validation outcome for pre-paired trips.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripValidation {
    pub malformed: usize,
    pub same_station: usize,
    pub non_positive_duration: usize,
}

/// Drops same-station and non-positive-duration trips, counting each.
pub fn validate_trips(trips: Vec<TripRecord>) -> (Vec<TripRecord>, TripValidation) {
    let mut v = TripValidation::default();
    let kept = trips
        .into_iter()
        .filter(|t| {
            if t.origin == t.destination {
                v.same_station += 1;
                false
            } else if t.t_end <= t.t_start {
                v.non_positive_duration += 1;
                false
            } else {
                true
            }
        })
        .collect();
    (kept, v)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Period {
    pub name: String,
    /// Inclusive, minute resolution.
    pub start: NaiveTime,
    /// Inclusive, minute resolution.
    pub end: NaiveTime,
}

impl Period {
    pub fn new(name: &str, start: &str, end: &str) -> Result<Self> {
        Ok(Period {
            name: name.to_string(),
            start: parse_time(start)?,
            end: parse_time(end)?,
        })
    }

    fn contains_minute(&self, minute: u32) -> bool {
        minute_of_day(self.start) <= minute && minute <= minute_of_day(self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodTable {
    periods: Vec<Period>,
}

fn minute_of_day(t: NaiveTime) -> u32 {
    t.hour() * 60 + t.minute()
}

impl PeriodTable {
    pub fn new(periods: Vec<Period>) -> Result<Self> {
        if periods.is_empty() {
            return Err(Error::invalid("period table is empty"));
        }
        let mut sorted: Vec<&Period> = periods.iter().collect();
        sorted.sort_by_key(|p| p.start);
        for p in &sorted {
            if p.end < p.start {
                return Err(Error::invalid(format!("period {} ends before it starts", p.name)));
            }
        }
        for w in sorted.windows(2) {
            if minute_of_day(w[1].start) <= minute_of_day(w[0].end) {
                return Err(Error::invalid(format!(
                    "periods {} and {} overlap",
                    w[0].name, w[1].name
                )));
            }
        }
        let mut names: Vec<&str> = periods.iter().map(|p| p.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != periods.len() {
            return Err(Error::invalid("duplicate period names"));
        }
        Ok(PeriodTable { periods })
    }

    pub fn periods(&self) -> &[Period] {
        &self.periods
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.periods.iter().map(|p| p.name.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&Period> {
        self.periods.iter().find(|p| p.name == name)
    }

    /// Period containing a time of day.
    pub fn period_of(&self, t: NaiveTime) -> Option<&Period> {
        let m = minute_of_day(t);
        self.periods.iter().find(|p| p.contains_minute(m))
    }
}

impl Default for PeriodTable {
    /// The four working-day periods; 00:00-05:29 belongs to none.
    fn default() -> Self {
        PeriodTable {
            periods: vec![
                Period::new("Morning", "05:30", "09:59").unwrap(),
                Period::new("Morning/Afternoon", "10:00", "15:59").unwrap(),
                Period::new("Evening", "16:00", "20:59").unwrap(),
                Period::new("Night", "21:00", "23:59").unwrap(),
            ],
        }
    }
}

/// Period holding both the start and the end time of day of a trip.
pub fn assign_period<'a>(trip: &TripRecord, table: &'a PeriodTable) -> Option<&'a Period> {
    let start = table.period_of(trip.t_start.time())?;
    let end = table.period_of(trip.t_end.time())?;
    (start.name == end.name).then_some(start)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DayKind {
    Working,
    Weekend,
    Holiday,
}

impl fmt::Display for DayKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DayKind::Working => "working",
            DayKind::Weekend => "weekend",
            DayKind::Holiday => "holiday",
        })
    }
}

impl FromStr for DayKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "working" => Ok(DayKind::Working),
            "weekend" => Ok(DayKind::Weekend),
            "holiday" => Ok(DayKind::Holiday),
            other => Err(Error::Parse(format!("unknown calendar tag {other:?}"))),
        }
    }
}

/// Date classification; each date carries exactly one tag.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WorkCalendar {
    days: BTreeMap<NaiveDate, DayKind>,
}

impl WorkCalendar {
    /// Tags every date in `first..=last`: Saturdays and Sundays as weekend,
    /// listed holidays as holiday, the rest as working.
    pub fn for_range(first: NaiveDate, last: NaiveDate, holidays: &[NaiveDate]) -> Self {
        let mut days = BTreeMap::new();
        for d in first.iter_days().take_while(|d| *d <= last) {
            let kind = if holidays.contains(&d) {
                DayKind::Holiday
            } else if matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
                DayKind::Weekend
            } else {
                DayKind::Working
            };
            days.insert(d, kind);
        }
        WorkCalendar { days }
    }

    pub fn insert(&mut self, date: NaiveDate, kind: DayKind) -> Result<()> {
        match self.days.insert(date, kind) {
            Some(prev) if prev != kind => Err(Error::invalid(format!(
                "date {date} tagged both {prev} and {kind}"
            ))),
            _ => Ok(()),
        }
    }

    pub fn kind(&self, date: NaiveDate) -> Option<DayKind> {
        self.days.get(&date).copied()
    }

    pub fn is_working(&self, date: NaiveDate) -> Result<bool> {
        self.kind(date)
            .map(|k| k == DayKind::Working)
            .ok_or(Error::DateNotInCalendar(date))
    }

    pub fn working_days(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.days
            .iter()
            .filter(|(_, k)| **k == DayKind::Working)
            .map(|(d, _)| *d)
    }

    pub fn iter(&self) -> impl Iterator<Item = (NaiveDate, DayKind)> + '_ {
        self.days.iter().map(|(d, k)| (*d, *k))
    }

    /// Reads `date tag` lines (whitespace or comma separated); `#` starts a comment.
    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut cal = WorkCalendar::default();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty());
            let (Some(date), Some(tag), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::Parse(format!("calendar line {}: expected `date tag`", lineno + 1)));
            };
            cal.insert(parse_date(date)?, tag.parse()?)?;
        }
        Ok(cal)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for (d, k) in &self.days {
            writeln!(w, "{d} {k}")?;
        }
        Ok(())
    }
}

/// Keeps trips whose start date is a working day, preserving order.
pub fn filter_working_days(trips: Vec<TripRecord>, cal: &WorkCalendar) -> Result<Vec<TripRecord>> {
    let mut kept = Vec::with_capacity(trips.len());
    for t in trips {
        if cal.is_working(t.date())? {
            kept.push(t);
        }
    }
    Ok(kept)
}

pub fn parse_date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
        .map_err(|e| Error::Parse(format!("bad date {s:?}: {e}")))
}

pub fn parse_time(s: &str) -> Result<NaiveTime> {
    let s = s.trim();
    NaiveTime::parse_from_str(s, "%H:%M:%S")
        .or_else(|_| NaiveTime::parse_from_str(s, "%H:%M"))
        .map_err(|e| Error::Parse(format!("bad time {s:?}: {e}")))
}

pub fn parse_timestamp(s: &str) -> Result<NaiveDateTime> {
    let s = s.trim();
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M:%S", "%Y-%m-%d %H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .ok_or_else(|| Error::Parse(format!("bad timestamp {s:?}")))
}

pub fn format_timestamp(t: &NaiveDateTime) -> String {
    t.format("%Y-%m-%dT%H:%M:%S").to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputKind {
    Taps,
    Trips,
}

pub const TAP_HEADER: [&str; 5] = ["card_id", "date", "time", "station_id", "direction"];
pub const TRIP_HEADER: [&str; 5] = ["card_id", "origin", "destination", "t_start", "t_end"];

pub fn detect_input_kind(header: &csv::StringRecord) -> Result<InputKind> {
    let cols: Vec<&str> = header.iter().map(str::trim).collect();
    if cols == TAP_HEADER {
        Ok(InputKind::Taps)
    } else if cols == TRIP_HEADER {
        Ok(InputKind::Trips)
    } else {
        Err(Error::Parse(format!("unrecognised header {cols:?}")))
    }
}

/// Trips read from either input shape, with everything dropped on the way counted.
#[derive(Debug, Clone, Default)]
pub struct LoadedTrips {
    pub trips: Vec<TripRecord>,
    pub kind: Option<InputKind>,
    pub input_records: usize,
    pub taps: DropStats,
    pub validation: TripValidation,
}

pub fn read_trips_or_taps<R: Read>(reader: R) -> Result<LoadedTrips> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let kind = detect_input_kind(rdr.headers()?)?;
    let mut out = LoadedTrips { kind: Some(kind), ..Default::default() };
    match kind {
        InputKind::Taps => {
            let mut rows = Vec::new();
            for rec in rdr.records() {
                let rec = rec?;
                out.input_records += 1;
                if rec.len() != 5 {
                    out.taps.malformed += 1;
                    continue;
                }
                rows.push(TapRow {
                    card_id: rec[0].to_string(),
                    date: rec[1].to_string(),
                    time: rec[2].to_string(),
                    station_id: rec[3].to_string(),
                    direction: rec[4].to_string(),
                });
            }
            let (trips, stats) = pair_tap_rows(&rows);
            out.taps.merge(&stats);
            out.trips = trips;
        }
        InputKind::Trips => {
            let mut trips = Vec::new();
            for rec in rdr.records() {
                let rec = rec?;
                out.input_records += 1;
                let parsed = (rec.len() == 5)
                    .then(|| Ok::<_, Error>((parse_timestamp(&rec[3])?, parse_timestamp(&rec[4])?)));
                match parsed {
                    Some(Ok((t_start, t_end))) => trips.push(TripRecord {
                        card_id: rec[0].to_string(),
                        origin: rec[1].to_string(),
                        destination: rec[2].to_string(),
                        t_start,
                        t_end,
                    }),
                    _ => out.validation.malformed += 1,
                }
            }
            let (mut trips, v) = validate_trips(trips);
            trips.sort();
            out.validation.same_station += v.same_station;
            out.validation.non_positive_duration += v.non_positive_duration;
            out.trips = trips;
        }
    }
    Ok(out)
}

pub fn write_trips<W: Write>(w: W, trips: &[TripRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(TRIP_HEADER)?;
    for t in trips {
        wtr.write_record([
            t.card_id.as_str(),
            t.origin.as_str(),
            t.destination.as_str(),
            &format_timestamp(&t.t_start),
            &format_timestamp(&t.t_end),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_taps<W: Write>(w: W, taps: &[TapEvent]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(TAP_HEADER)?;
    for t in taps {
        wtr.write_record([
            t.card_id.as_str(),
            &t.timestamp.format("%Y-%m-%d").to_string(),
            &t.timestamp.format("%H:%M:%S").to_string(),
            t.station_id.as_str(),
            match t.direction {
                Direction::CheckIn => "in",
                Direction::CheckOut => "out",
            },
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(s: &str) -> NaiveDateTime {
        parse_timestamp(s).unwrap()
    }

    fn tap(card: &str, station: &str, t: &str, dir: Direction) -> TapEvent {
        TapEvent {
            card_id: card.into(),
            station_id: station.into(),
            timestamp: ts(t),
            direction: dir,
        }
    }

    fn trip(o: &str, d: &str, s: &str, e: &str) -> TripRecord {
        TripRecord {
            card_id: "X".into(),
            origin: o.into(),
            destination: d.into(),
            t_start: ts(s),
            t_end: ts(e),
        }
    }

    use Direction::*;

    #[test]
    fn single_matched_pair() {
        let (trips, stats) = pair_taps(vec![
            tap("X", "B", "2015-04-01 08:30", CheckOut),
            tap("X", "A", "2015-04-01 08:00", CheckIn),
        ]);
        assert_eq!(trips, vec![trip("A", "B", "2015-04-01 08:00", "2015-04-01 08:30")]);
        assert_eq!(stats, DropStats::default());
    }

    #[test]
    fn double_check_in_drops_the_first() {
        let (trips, stats) = pair_taps(vec![
            tap("X", "A", "2015-04-01 08:00", CheckIn),
            tap("X", "C", "2015-04-01 09:00", CheckIn),
            tap("X", "D", "2015-04-01 09:20", CheckOut),
        ]);
        assert_eq!(trips, vec![trip("C", "D", "2015-04-01 09:00", "2015-04-01 09:20")]);
        assert_eq!(stats.unmatched_check_in, 1);
        assert_eq!(stats.dropped_events(), 1);
    }

    #[test]
    fn same_station_pair_is_dropped() {
        let (trips, stats) = pair_taps(vec![
            tap("X", "A", "2015-04-01 08:00", CheckIn),
            tap("X", "A", "2015-04-01 08:05", CheckOut),
        ]);
        assert!(trips.is_empty());
        assert_eq!(stats.same_station, 1);
    }

    #[test]
    fn empty_input() {
        let (trips, stats) = pair_taps(vec![]);
        assert!(trips.is_empty());
        assert_eq!(stats, DropStats::default());
    }

    #[test]
    fn malformed_rows_are_counted() {
        let rows = vec![
            TapRow {
                card_id: "X".into(),
                date: "2015-04-01".into(),
                time: "25:61".into(),
                station_id: "A".into(),
                direction: "in".into(),
            },
            TapRow {
                card_id: "X".into(),
                date: "2015-04-01".into(),
                time: "08:30".into(),
                station_id: "B".into(),
                direction: "out".into(),
            },
        ];
        let (trips, stats) = pair_tap_rows(&rows);
        assert!(trips.is_empty());
        assert_eq!(stats.malformed, 1);
        assert_eq!(stats.unmatched_check_out, 1);
    }

    #[test]
    fn unmatched_events_at_card_boundaries() {
        let (trips, stats) = pair_taps(vec![
            tap("X", "A", "2015-04-01 08:00", CheckIn),
            tap("Y", "B", "2015-04-01 07:00", CheckOut),
            tap("Y", "B", "2015-04-01 07:30", CheckIn),
            tap("Y", "C", "2015-04-01 07:50", CheckOut),
        ]);
        assert_eq!(trips.len(), 1);
        assert_eq!(stats.unmatched_check_in, 1);
        assert_eq!(stats.unmatched_check_out, 1);
    }

    #[test]
    fn period_assignment_follows_default_table() {
        let table = PeriodTable::default();
        let name = |s, e| assign_period(&trip("A", "B", s, e), &table).map(|p| p.name.clone());
        assert_eq!(name("2015-04-01 08:00", "2015-04-01 08:30").as_deref(), Some("Morning"));
        assert_eq!(name("2015-04-01 09:50", "2015-04-01 10:10"), None);
        assert_eq!(name("2015-04-01 21:30", "2015-04-01 22:00").as_deref(), Some("Night"));
        assert_eq!(name("2015-04-01 09:59", "2015-04-01 09:59").as_deref(), Some("Morning"));
        assert_eq!(name("2015-04-01 05:00", "2015-04-01 05:20"), None);
        assert_eq!(name("2015-04-01 23:50", "2015-04-02 00:10"), None);
        assert_eq!(name("2015-04-01 16:00", "2015-04-01 20:59").as_deref(), Some("Evening"));
    }

    #[test]
    fn overlapping_periods_are_rejected() {
        let err = PeriodTable::new(vec![
            Period::new("a", "05:00", "10:00").unwrap(),
            Period::new("b", "10:00", "12:00").unwrap(),
        ]);
        assert!(err.is_err());
    }

    #[test]
    fn working_day_filter() {
        let d = |s| parse_date(s).unwrap();
        let cal = WorkCalendar::for_range(d("2015-04-01"), d("2015-04-30"), &[d("2015-04-06")]);
        let trips = vec![
            trip("A", "B", "2015-04-04 08:00", "2015-04-04 08:30"), // Saturday
            trip("A", "B", "2015-04-06 08:00", "2015-04-06 08:30"), // Qing-ming Monday
            trip("A", "B", "2015-04-07 08:00", "2015-04-07 08:30"), // Tuesday
        ];
        let kept = filter_working_days(trips.clone(), &cal).unwrap();
        assert_eq!(kept, vec![trips[2].clone()]);

        let outside = vec![trip("A", "B", "2015-05-04 08:00", "2015-05-04 08:30")];
        match filter_working_days(outside, &cal) {
            Err(Error::DateNotInCalendar(date)) => assert_eq!(date, d("2015-05-04")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn calendar_rejects_conflicting_tags() {
        let text = "2015-04-06 holiday\n2015-04-06 working\n";
        assert!(WorkCalendar::read(text.as_bytes()).is_err());
        let ok = WorkCalendar::read("2015-04-06 holiday # Qing-ming\n\n2015-04-07,working\n".as_bytes()).unwrap();
        assert_eq!(ok.working_days().count(), 1);
    }

    #[test]
    fn header_detection_and_round_trip() {
        let taps = "card_id,date,time,station_id,direction\nX,2015-04-07,08:00,A,in\nX,2015-04-07,08:30,B,out\nX,2015-04-07,bad,B,out\n";
        let loaded = read_trips_or_taps(taps.as_bytes()).unwrap();
        assert_eq!(loaded.kind, Some(InputKind::Taps));
        assert_eq!(loaded.trips.len(), 1);
        assert_eq!(loaded.taps.malformed, 1);

        let mut buf = Vec::new();
        write_trips(&mut buf, &loaded.trips).unwrap();
        let again = read_trips_or_taps(buf.as_slice()).unwrap();
        assert_eq!(again.kind, Some(InputKind::Trips));
        assert_eq!(again.trips, loaded.trips);

        assert!(read_trips_or_taps("a,b\n1,2\n".as_bytes()).is_err());
    }
}
