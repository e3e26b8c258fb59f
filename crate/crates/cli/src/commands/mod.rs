//! One module per stage, plus loaders shared between stages.

mod activity;
mod community;
mod ingest;
mod report;
mod spatial;
mod synth;
mod temporal;

use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::NaiveDate;
use utn_core::flowgraph::{read_stations, DateTag, FlowMatrix, PeriodTag, Station, StationIndex};
use utn_core::ingest::{parse_date, read_trips_or_taps, TripRecord};

use crate::artifacts::Context;
use crate::error::{CliError, CliResult};
use crate::Command;

pub use ingest::FLOWS;

pub(crate) const TRIPS: &str = "trips.csv";

/// Config problems plus inputs this command needs, all reported together.
pub fn validate(command: Command, ctx: &Context) -> CliResult<()> {
    let mut problems = ctx.config.problems();
    let i = &ctx.config.inputs;
    let needed: &[(&str, &Option<String>)] = match command {
        Command::Ingest => &[("trips", &i.trips), ("stations", &i.stations), ("calendar", &i.calendar)],
        Command::Flows | Command::Communities | Command::Variability => &[("stations", &i.stations)],
        Command::Spatial => &[
            ("stations", &i.stations),
            ("profiles", &i.profiles),
            ("topic_table", &i.topic_table),
            ("emotion", &i.emotion),
            ("station_words", &i.station_words),
        ],
        Command::Temporal => &[("stations", &i.stations), ("profiles", &i.profiles)],
        _ => &[],
    };
    for (key, value) in needed {
        match ctx.input(value) {
            None => problems.push(format!("inputs.{key} is not set")),
            Some(p) if !p.is_file() => problems.push(format!("inputs.{key}: {} does not exist", p.display())),
            Some(_) => {}
        }
    }
    if command == Command::Synth {
        problems.extend(synth::problems(ctx));
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(problems))
    }
}

pub fn execute(command: Command, ctx: &Context) -> CliResult<()> {
    match command {
        Command::Ingest => ingest::ingest(ctx),
        Command::Flows => ingest::flows(ctx),
        Command::Communities => community::communities(ctx),
        Command::Variability => community::variability(ctx),
        Command::Cluster => community::cluster(ctx),
        Command::Activity => activity::activity(ctx),
        Command::Spatial => spatial::spatial(ctx),
        Command::Temporal => temporal::temporal(ctx),
        Command::Simulate => temporal::simulate(ctx),
        Command::Synth => synth::synth(ctx),
        Command::Report => report::report(ctx),
        Command::Pipeline => unreachable!("pipeline is expanded into stages"),
    }
}

pub(crate) fn load_stations(ctx: &Context) -> CliResult<(Vec<Station>, Arc<StationIndex>)> {
    let stations = read_stations(&ctx.open_input("stations", &ctx.config.inputs.stations)?[..])?;
    let index = StationIndex::new(stations.iter().map(|s| s.id.clone()).collect())?;
    Ok((stations, index))
}

/// Working-day trips written by `ingest`.
pub(crate) fn load_trips(ctx: &Context) -> CliResult<Vec<TripRecord>> {
    Ok(read_trips_or_taps(&ctx.read(TRIPS, "ingest")?[..])?.trips)
}

/// Matrices written by `flows`, keyed by date (None for the aggregate) and period.
pub(crate) struct Flows {
    pub daily: BTreeMap<NaiveDate, Vec<FlowMatrix>>,
    pub aggregate: FlowMatrix,
}

pub(crate) fn load_flows(ctx: &Context, index: &Arc<StationIndex>, periods: &[String]) -> CliResult<Flows> {
    let bytes = ctx.read(FLOWS, "flows")?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(&bytes[..]);
    let mut daily: BTreeMap<NaiveDate, Vec<FlowMatrix>> = BTreeMap::new();
    let mut aggregate = FlowMatrix::zeros(index.clone(), DateTag::Aggregate, PeriodTag::Day);
    for rec in rdr.records() {
        let rec = rec?;
        let bad = || CliError::runtime(format!("{FLOWS}: malformed row {:?}", rec.iter().collect::<Vec<_>>()));
        if rec.len() != 5 {
            return Err(bad());
        }
        let o = index.position(&rec[2])?;
        let d = index.position(&rec[3])?;
        let count: u64 = rec[4].parse().map_err(|_| bad())?;
        if &rec[0] == "aggregate" {
            aggregate.add(o, d, count)?;
            continue;
        }
        let date = parse_date(&rec[0])?;
        let p = periods.iter().position(|p| p == &rec[1]).ok_or_else(bad)?;
        let mats = daily.entry(date).or_insert_with(|| {
            periods
                .iter()
                .map(|name| FlowMatrix::zeros(index.clone(), DateTag::Date(date), PeriodTag::Period(name.clone())))
                .collect()
        });
        mats[p].add(o, d, count)?;
    }
    Ok(Flows { daily, aggregate })
}

/// Records of a CSV artifact written by this tool, as string rows without the header.
pub(crate) fn read_rows(bytes: &[u8]) -> CliResult<Vec<Vec<String>>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(bytes);
    let mut rows = Vec::new();
    for rec in rdr.records() {
        rows.push(rec?.iter().map(str::to_string).collect());
    }
    Ok(rows)
}

pub(crate) fn parse_f64(s: &str, what: &str) -> CliResult<f64> {
    s.parse().map_err(|_| CliError::runtime(format!("{what}: {s:?} is not a number")))
}
