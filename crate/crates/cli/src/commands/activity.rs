//! `activity`: worker chains, place labels and the pattern distribution.

use serde::Serialize;
use utn_core::activity::{
    build_daily_chains, classify_pattern, label_chain, pattern_distribution, select_workers, write_labeled_chains,
    LabeledChain, PatternDistribution,
};

use super::load_trips;
use crate::artifacts::Context;
use crate::error::CliResult;

pub const PATTERNS: &str = "patterns.csv";

#[derive(Serialize)]
struct ActivitySummary {
    chains: usize,
    overlapping_dropped: usize,
    workers: usize,
    floor: f64,
    distribution: PatternDistribution,
}

pub fn activity(ctx: &Context) -> CliResult<()> {
    let trips = load_trips(ctx)?;
    let built = build_daily_chains(&trips);
    if built.overlapping > 0 {
        ctx.warn(format!("{} card-days dropped for overlapping trips", built.overlapping));
    }
    let chains = built.chains.len();
    let labeled: Vec<LabeledChain> = select_workers(built.chains).into_iter().map(label_chain).collect();
    let codes: Vec<_> = labeled.iter().map(classify_pattern).collect();
    let floor = ctx.config.activity.floor;
    let distribution = pattern_distribution(&codes, floor)?;
    ctx.write_csv("chains.csv", |w| write_labeled_chains(w, &labeled))?;
    ctx.write_csv(PATTERNS, |w| distribution.write_csv(w))?;
    ctx.write_json(
        "activity.json",
        &ActivitySummary { chains, overlapping_dropped: built.overlapping, workers: labeled.len(), floor, distribution },
    )
}
