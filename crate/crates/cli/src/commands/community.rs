//! `communities`, `variability` and `cluster`.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use utn_core::community::{
    cluster_snapshots_gmm, consensus_partition, directed_modularity, snapshot_variability_matrix, CommunitySnapshot,
    ConsensusConfig, VariabilityMatrix,
};
use utn_core::ingest::parse_date;

use super::{load_flows, load_stations, read_rows};
use crate::artifacts::Context;
use crate::error::{CliError, CliResult};

pub const COMMUNITIES: &str = "communities.json";
pub const VARIABILITY: &str = "variability.csv";
pub const CLUSTERS: &str = "clusters.csv";

fn snapshot_file(date: NaiveDate) -> String {
    format!("snapshots/{date}.csv")
}

#[derive(Debug, Serialize, Deserialize)]
struct PeriodResult {
    date: NaiveDate,
    period: String,
    communities: usize,
    modularity: f64,
    converged: bool,
    iterations: usize,
    total_trips: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct CommunitySummary {
    dates: Vec<NaiveDate>,
    periods: Vec<String>,
    results: Vec<PeriodResult>,
}

pub fn communities(ctx: &Context) -> CliResult<()> {
    let (_, index) = load_stations(ctx)?;
    let periods: Vec<String> = ctx.config.period_table()?.names().map(String::from).collect();
    let flows = load_flows(ctx, &index, &periods)?;
    if flows.daily.is_empty() {
        return Err(CliError::runtime("no dated flow matrices; the ingest produced no working-day trips"));
    }
    let c = &ctx.config.community;
    let cfg = ConsensusConfig { runs: c.runs, threshold: c.threshold, max_iter: c.max_iter };
    let mut results = Vec::new();
    let mut unconverged = Vec::new();
    for (date, mats) in &flows.daily {
        let mut snapshot = CommunitySnapshot { date: *date, periods: Vec::new() };
        for (name, m) in periods.iter().zip(mats) {
            let seed = ctx.sub_seed(&format!("communities/{date}/{name}"));
            let r = consensus_partition(m, &cfg, seed)
                .map_err(|e| CliError::runtime(format!("{date} {name}: {e}")))?;
            if !r.converged {
                unconverged.push(format!("{date} {name}"));
            }
            results.push(PeriodResult {
                date: *date,
                period: name.clone(),
                communities: r.partition.community_count(),
                modularity: directed_modularity(m, &r.partition)?,
                converged: r.converged,
                iterations: r.iterations,
                total_trips: m.total(),
            });
            snapshot.periods.push((name.clone(), r.partition));
        }
        ctx.write_csv(&snapshot_file(*date), |w| snapshot.write_csv(w, &index))?;
    }
    ctx.write_json(
        COMMUNITIES,
        &CommunitySummary { dates: flows.daily.keys().copied().collect(), periods, results },
    )?;
    if unconverged.is_empty() {
        Ok(())
    } else {
        Err(CliError::NonConvergence(format!(
            "consensus did not settle within {} iterations for {}",
            c.max_iter,
            unconverged.join(", ")
        )))
    }
}

pub fn variability(ctx: &Context) -> CliResult<()> {
    let (_, index) = load_stations(ctx)?;
    let summary: CommunitySummary = ctx.read_json(COMMUNITIES, "communities")?;
    let snapshots = summary
        .dates
        .iter()
        .map(|d| {
            let bytes = ctx.read(&snapshot_file(*d), "communities")?;
            Ok(CommunitySnapshot::read_csv(&bytes[..], *d, &index)?)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let vm = snapshot_variability_matrix(&snapshots)?;
    ctx.write_csv(VARIABILITY, |w| vm.write_csv(w))
}

#[derive(Serialize)]
struct ClusterSummary {
    chosen_k: usize,
    bic: Vec<(usize, f64)>,
    regularized: bool,
    converged: bool,
    iterations: usize,
    weights: Vec<f64>,
    /// Dates per cluster, clusters in order of first appearance.
    categories: Vec<Vec<NaiveDate>>,
}

pub fn cluster(ctx: &Context) -> CliResult<()> {
    let vm = VariabilityMatrix::read_csv(&ctx.read(VARIABILITY, "variability")?[..])?;
    let mut k_max = ctx.config.community.k_max;
    if k_max > vm.len() {
        ctx.warn(format!("community.k_max = {k_max} exceeds the {} snapshots; using {}", vm.len(), vm.len()));
        k_max = vm.len();
    }
    let c = cluster_snapshots_gmm(&vm, k_max, ctx.sub_seed("cluster"))?;
    if c.regularized() {
        ctx.warn("some mixture components hold identical snapshots; their variances sit at the ridge");
    }
    ctx.write_csv(CLUSTERS, |w| {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["date", "cluster"])?;
        for (d, a) in c.dates.iter().zip(&c.assignment) {
            wtr.write_record([d.to_string(), a.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    })?;
    let mut categories = vec![Vec::new(); c.chosen_k];
    for (d, a) in c.dates.iter().zip(&c.assignment) {
        categories[*a].push(*d);
    }
    ctx.write_json(
        "cluster.json",
        &ClusterSummary {
            chosen_k: c.chosen_k,
            bic: c.bic_scores.clone(),
            regularized: c.regularized(),
            converged: c.model.converged,
            iterations: c.model.iterations,
            weights: c.model.weights.clone(),
            categories,
        },
    )?;
    if c.model.converged {
        Ok(())
    } else {
        Err(CliError::NonConvergence(format!("EM for k = {} hit the iteration cap", c.chosen_k)))
    }
}

/// `(date, cluster)` rows written by `cluster`.
pub fn read_clusters(ctx: &Context) -> CliResult<Vec<(NaiveDate, usize)>> {
    read_rows(&ctx.read(CLUSTERS, "cluster")?)?
        .into_iter()
        .map(|r| {
            let bad = || CliError::runtime(format!("{CLUSTERS}: malformed row {r:?}"));
            if r.len() != 2 {
                return Err(bad());
            }
            Ok((parse_date(&r[0])?, r[1].parse().map_err(|_| bad())?))
        })
        .collect()
}
