//! `report`: correlation table, pattern shares, curve samples and a JSON summary.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::Serialize;

use super::activity::PATTERNS;
use super::community::{read_clusters, CLUSTERS};
use super::read_rows;
use super::spatial::SPATIAL_EVAL;
use super::temporal::{CURVES, SIGNIFICANCE};
use crate::artifacts::Context;
use crate::error::{CliError, CliResult};

#[derive(Serialize)]
struct Correlation {
    group: String,
    attraction_r: Option<String>,
    gravity_r: Option<String>,
}

#[derive(Serialize)]
struct Report {
    day_categories: Vec<Vec<NaiveDate>>,
    singleton_days: Vec<NaiveDate>,
    correlations: Vec<Correlation>,
    patterns: Vec<(String, String)>,
    significance: Vec<BTreeMap<String, String>>,
}

fn write_rows(ctx: &Context, rel: &str, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    ctx.write_csv(rel, |w| {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(header)?;
        for r in rows {
            wtr.write_record(r)?;
        }
        wtr.flush()?;
        Ok(())
    })
}

pub fn report(ctx: &Context) -> CliResult<()> {
    let required =
        [(CLUSTERS, "cluster"), (PATTERNS, "activity"), (SPATIAL_EVAL, "spatial"), (SIGNIFICANCE, "temporal"), (CURVES, "temporal")];
    let mut missing: Vec<String> = Vec::new();
    for (rel, cmd) in required {
        if !ctx.has(rel) && !missing.iter().any(|m| m == cmd) {
            missing.push(cmd.to_string());
        }
    }
    if !missing.is_empty() {
        return Err(CliError::MissingStages(missing));
    }

    let clusters = read_clusters(ctx)?;
    let k = clusters.iter().map(|c| c.1 + 1).max().unwrap_or(0);
    let mut day_categories = vec![Vec::new(); k];
    for (d, c) in &clusters {
        day_categories[*c].push(*d);
    }
    let singleton_days: Vec<NaiveDate> =
        day_categories.iter().filter(|c| c.len() == 1 && k > 1).map(|c| c[0]).collect();

    // model,group,r,ci_low,ci_high,n -> one row per group.
    let eval = read_rows(&ctx.read(SPATIAL_EVAL, "spatial")?)?;
    let mut groups: Vec<String> = Vec::new();
    let mut table: BTreeMap<(String, String), Vec<String>> = BTreeMap::new();
    for r in &eval {
        if r.len() != 6 {
            return Err(CliError::runtime(format!("{SPATIAL_EVAL}: malformed row {r:?}")));
        }
        if !groups.contains(&r[1]) {
            groups.push(r[1].clone());
        }
        table.insert((r[0].clone(), r[1].clone()), r[2..].to_vec());
    }
    let cell = |m: &str, g: &str, k: usize| table.get(&(m.to_string(), g.to_string())).map(|v| v[k].clone());
    let corr_rows: Vec<Vec<String>> = groups
        .iter()
        .map(|g| {
            let mut row = vec![g.clone()];
            for m in ["attraction", "gravity"] {
                for k in 0..3 {
                    row.push(cell(m, g, k).unwrap_or_default());
                }
            }
            row.push(cell("attraction", g, 3).unwrap_or_default());
            row
        })
        .collect();
    write_rows(
        ctx,
        "report/correlations.csv",
        &["group", "attraction_r", "attraction_ci_low", "attraction_ci_high", "gravity_r", "gravity_ci_low", "gravity_ci_high", "n"],
        &corr_rows,
    )?;

    let patterns = read_rows(&ctx.read(PATTERNS, "activity")?)?;
    write_rows(ctx, "report/patterns.csv", &["code", "count", "fraction"], &patterns)?;

    let curves: Vec<Vec<String>> =
        read_rows(&ctx.read(CURVES, "temporal")?)?.into_iter().filter(|r| r.first().is_some_and(|t| t == "mu")).collect();
    write_rows(ctx, "report/mu_curves.csv", &["target", "term", "x", "f", "ci_low", "ci_high"], &curves)?;

    let significance = read_rows(&ctx.read(SIGNIFICANCE, "temporal")?)?
        .into_iter()
        .map(|r| ["target", "term", "edf", "p_value"].iter().map(|h| h.to_string()).zip(r).collect())
        .collect();
    ctx.write_json(
        "report/summary.json",
        &Report {
            day_categories,
            singleton_days,
            correlations: groups
                .iter()
                .map(|g| Correlation { group: g.clone(), attraction_r: cell("attraction", g, 0), gravity_r: cell("gravity", g, 0) })
                .collect(),
            patterns: patterns.iter().filter(|r| r.len() == 3).map(|r| (r[0].clone(), r[2].clone())).collect(),
            significance,
        },
    )
}
