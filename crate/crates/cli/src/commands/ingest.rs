//! `ingest` and `flows`.

use std::collections::BTreeSet;

use serde::Serialize;
use utn_core::flowgraph::{build_flow_matrix, FlowMatrix, PeriodSelector};
use utn_core::ingest::{filter_working_days, read_trips_or_taps, write_trips, DropStats, WorkCalendar};

use super::{load_stations, load_trips, TRIPS};
use crate::artifacts::Context;
use crate::error::CliResult;

pub const FLOWS: &str = "flows.csv";

#[derive(Serialize)]
struct IngestSummary {
    input_kind: String,
    input_records: usize,
    tap_drops: DropStats,
    malformed_trips: usize,
    same_station_trips: usize,
    non_positive_duration_trips: usize,
    unknown_station_trips: usize,
    non_working_day_trips: usize,
    kept_trips: usize,
    working_days: usize,
}

pub fn ingest(ctx: &Context) -> CliResult<()> {
    let inputs = &ctx.config.inputs;
    let loaded = read_trips_or_taps(&ctx.open_input("trips", &inputs.trips)?[..])?;
    let (_, index) = load_stations(ctx)?;
    let calendar = WorkCalendar::read(&ctx.open_input("calendar", &inputs.calendar)?[..])?;

    let before = loaded.trips.len();
    let known: Vec<_> = loaded
        .trips
        .into_iter()
        .filter(|t| index.position(&t.origin).is_ok() && index.position(&t.destination).is_ok())
        .collect();
    let unknown = before - known.len();
    if unknown > 0 {
        ctx.warn(format!("{unknown} trips reference stations missing from the station list"));
    }
    let known_count = known.len();
    let kept = filter_working_days(known, &calendar)?;
    let days: BTreeSet<_> = kept.iter().map(|t| t.date()).collect();

    ctx.write_csv(TRIPS, |w| write_trips(w, &kept))?;
    ctx.write_json(
        "ingest.json",
        &IngestSummary {
            input_kind: loaded.kind.map(|k| format!("{k:?}").to_lowercase()).unwrap_or_default(),
            input_records: loaded.input_records,
            tap_drops: loaded.taps,
            malformed_trips: loaded.validation.malformed,
            same_station_trips: loaded.validation.same_station,
            non_positive_duration_trips: loaded.validation.non_positive_duration,
            unknown_station_trips: unknown,
            non_working_day_trips: known_count - kept.len(),
            kept_trips: kept.len(),
            working_days: days.len(),
        },
    )
}

#[derive(Serialize)]
struct FlowSummaryRow {
    date: String,
    period: String,
    total_trips: u64,
}

#[derive(Serialize)]
struct FlowSummary {
    periods: Vec<String>,
    matrices: Vec<FlowSummaryRow>,
}

fn write_rows<W: std::io::Write>(w: &mut csv::Writer<W>, date: &str, period: &str, m: &FlowMatrix) -> csv::Result<()> {
    let ids = m.stations().ids();
    for (o, d, c) in m.triplets() {
        w.write_record([date, period, &ids[o], &ids[d], &c.to_string()])?;
    }
    Ok(())
}

pub fn flows(ctx: &Context) -> CliResult<()> {
    let trips = load_trips(ctx)?;
    let (_, index) = load_stations(ctx)?;
    let table = ctx.config.period_table()?;
    let dates: BTreeSet<_> = trips.iter().map(|t| t.date()).collect();
    let mut matrices = Vec::new();
    let mut aggregate = Vec::new();
    for d in &dates {
        for p in table.names() {
            matrices.push((d.to_string(), p.to_string(), build_flow_matrix(&trips, *d, PeriodSelector::Named(p), &table, &index)?));
        }
        aggregate.push(build_flow_matrix(&trips, *d, PeriodSelector::WholeDay, &table, &index)?);
    }
    let total = if aggregate.is_empty() {
        FlowMatrix::zeros(index.clone(), utn_core::flowgraph::DateTag::Aggregate, utn_core::flowgraph::PeriodTag::Day)
    } else {
        utn_core::flowgraph::aggregate(&aggregate)?
    };
    ctx.write_csv(FLOWS, |w| {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["date", "period", "origin", "destination", "count"])?;
        for (d, p, m) in &matrices {
            write_rows(&mut wtr, d, p, m)?;
        }
        write_rows(&mut wtr, "aggregate", "day", &total)?;
        wtr.flush()?;
        Ok(())
    })?;
    let mut rows: Vec<FlowSummaryRow> = matrices
        .iter()
        .map(|(d, p, m)| FlowSummaryRow { date: d.clone(), period: p.clone(), total_trips: m.total() })
        .collect();
    rows.push(FlowSummaryRow { date: "aggregate".into(), period: "day".into(), total_trips: total.total() });
    ctx.write_json("flows.json", &FlowSummary { periods: table.names().map(String::from).collect(), matrices: rows })
}
