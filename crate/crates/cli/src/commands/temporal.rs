//! `temporal` and `simulate`.
//!
//! The evening series of an origin counts, per 10-minute bin from 17:00, the
//! first evening departures of worker chains leaving that station, summed over
//! all working days. Its total is the origin's evening volume `N`.

use rand::seq::SliceRandom;
use serde::Serialize;
use utn_core::activity::{build_daily_chains, first_evening_trip, select_workers};
use utn_core::seeds;
use utn_core::spatial::DistanceMatrix;
use utn_core::temporal::{
    evening_start, fit_gam, fit_recurrence_params, read_series, simulate_volume_series, write_series, GamConfig, Link,
    RecurrenceFit, TemporalParams, VolumeSeries, BIN_MINUTES, EVENING_BINS,
};
use utn_core::temporal::gam::{gam_term_significance, write_curves, write_significance, CurvePoint, TermSignificance};
use utn_core::temporal::recurrence::write_fits;
use utn_core::Error as CoreError;

use super::spatial::aligned_profiles;
use super::{load_flows, load_stations, load_trips, parse_f64, read_rows};
use crate::artifacts::Context;
use crate::config::TARGETS;
use crate::error::{CliError, CliResult};

pub const SERIES: &str = "series.csv";
pub const FITS: &str = "fits.csv";
pub const CURVES: &str = "gam_curves.csv";
pub const SIGNIFICANCE: &str = "gam_significance.csv";

pub const FEATURES: [&str; 4] = ["entertainment", "shopping", "food", "distance"];

#[derive(Serialize)]
struct Skipped {
    origin: String,
    reason: String,
}

#[derive(Serialize)]
struct TargetSummary {
    target: String,
    link: String,
    edf_total: f64,
    deviance: f64,
    gcv: f64,
    pirls_converged: bool,
    train: usize,
    test: usize,
    test_rmse: Option<f64>,
    clamped_test_rows: usize,
}

#[derive(Serialize)]
struct TemporalSummary {
    fitted: usize,
    refined: usize,
    skipped: Vec<Skipped>,
    fit_warnings: Vec<(String, String)>,
    train_origins: Vec<String>,
    test_origins: Vec<String>,
    models: Vec<TargetSummary>,
}

fn target_value(p: &TemporalParams, target: &str) -> f64 {
    match target {
        "tau" => p.tau,
        "mu" => p.mu,
        "c" => p.c,
        _ => p.p0,
    }
}

fn evening_series(ctx: &Context, ids: &[String]) -> CliResult<Vec<VolumeSeries>> {
    let trips = load_trips(ctx)?;
    let mut counts = vec![vec![0.0; EVENING_BINS]; ids.len()];
    let start = evening_start();
    for chain in select_workers(build_daily_chains(&trips).chains) {
        let Some(k) = first_evening_trip(&chain) else { continue };
        let t = &chain.trips[k];
        let bin = ((t.t_start.time() - start).num_minutes() / i64::from(BIN_MINUTES)) as usize;
        if bin < EVENING_BINS {
            if let Some(o) = ids.iter().position(|id| *id == t.origin) {
                counts[o][bin] += 1.0;
            }
        }
    }
    Ok(ids.iter().zip(counts).map(|(id, v)| VolumeSeries::evening(id.clone(), v)).collect())
}

pub fn temporal(ctx: &Context) -> CliResult<()> {
    let t = &ctx.config.temporal;
    let (stations, index) = load_stations(ctx)?;
    let ids = index.ids();
    let periods: Vec<String> = ctx.config.period_table()?.names().map(String::from).collect();
    let observed = load_flows(ctx, &index, &periods)?.aggregate;
    let profiles = aligned_profiles(ctx, ids)?;
    let distances = DistanceMatrix::from_stations(&stations);

    let series = evening_series(ctx, ids)?;
    ctx.write_csv(SERIES, |w| write_series(w, &series))?;

    let mut fits: Vec<(usize, RecurrenceFit)> = Vec::new();
    let mut skipped = Vec::new();
    let mut fit_warnings = Vec::new();
    for (o, s) in series.iter().enumerate() {
        let total: f64 = s.values.iter().sum();
        if (total as u64) < t.min_volume {
            skipped.push(Skipped { origin: s.origin.clone(), reason: format!("evening volume {total} below {}", t.min_volume) });
            continue;
        }
        match fit_recurrence_params(s, total as u64) {
            Ok(f) => {
                fit_warnings.extend(f.warnings.iter().map(|w| (s.origin.clone(), w.clone())));
                fits.push((o, f));
            }
            Err(e @ CoreError::Unidentifiable(_)) => skipped.push(Skipped { origin: s.origin.clone(), reason: e.to_string() }),
            Err(e) => return Err(e.into()),
        }
    }
    for w in &fit_warnings {
        ctx.warn(format!("{}: {}", w.0, w.1));
    }
    let named: Vec<(String, RecurrenceFit)> = fits.iter().map(|(o, f)| (ids[*o].clone(), f.clone())).collect();
    ctx.write_csv(FITS, |w| write_fits(w, &named))?;

    // Features: facility counts and the flow-weighted mean trip distance.
    let feature_rows: Vec<Vec<f64>> = fits
        .iter()
        .map(|(o, _)| {
            let f = &profiles[*o].facilities;
            let row = observed.row(*o);
            let total: u64 = row.iter().sum();
            let dist = if total == 0 {
                0.0
            } else {
                row.iter().enumerate().map(|(j, c)| *c as f64 * distances.get(*o, j)).sum::<f64>() / total as f64
            };
            vec![f64::from(f.entertainment), f64::from(f.shopping), f64::from(f.food), dist]
        })
        .collect();

    let mut order: Vec<usize> = (0..fits.len()).collect();
    order.shuffle(&mut seeds::rng(ctx.sub_seed("temporal.split")));
    let n_train = ((fits.len() as f64 * t.train_fraction).round() as usize).clamp(1.min(fits.len()), fits.len());
    let (train, test) = order.split_at(n_train);
    let (mut train, mut test) = (train.to_vec(), test.to_vec());
    train.sort_unstable();
    test.sort_unstable();

    ctx.write_csv("features.csv", |w| {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["origin"];
        header.extend(FEATURES);
        header.push("split");
        wtr.write_record(&header)?;
        for (k, (o, _)) in fits.iter().enumerate() {
            let mut rec = vec![ids[*o].clone()];
            rec.extend(feature_rows[k].iter().map(f64::to_string));
            rec.push(if train.contains(&k) { "train" } else { "test" }.into());
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    })?;

    let names: Vec<String> = FEATURES.iter().map(|s| s.to_string()).collect();
    let gam_config = GamConfig { interior_knots: t.interior_knots, ..GamConfig::default() };
    let x_train: Vec<Vec<f64>> = train.iter().map(|k| feature_rows[*k].clone()).collect();
    let x_test: Vec<Vec<f64>> = test.iter().map(|k| feature_rows[*k].clone()).collect();
    let mut significance: Vec<(String, TermSignificance)> = Vec::new();
    let mut curves: Vec<(String, String, CurvePoint)> = Vec::new();
    let mut models = Vec::new();
    for target in TARGETS {
        let y: Vec<f64> = train.iter().map(|k| target_value(&fits[*k].1.params, target)).collect();
        let mut link = ctx.config.link(target);
        let model = match fit_gam(&x_train, &names, &y, link, &gam_config) {
            Err(CoreError::NonPositiveTarget(v)) if link == Link::Log => {
                ctx.warn(format!("{target}: log link needs positive targets (found {v}); using the identity link"));
                link = Link::Identity;
                fit_gam(&x_train, &names, &y, link, &gam_config)?
            }
            other => other.map_err(|e| CliError::runtime(format!("additive model for {target}: {e}")))?,
        };
        if !model.pirls_converged {
            ctx.warn(format!("{target}: penalised IRLS hit its iteration cap"));
        }
        significance.extend(gam_term_significance(&model).into_iter().map(|s| (target.to_string(), s)));
        for (k, name) in names.iter().enumerate() {
            curves.extend(model.curve(k, t.curve_points).into_iter().map(|p| (target.to_string(), name.clone(), p)));
        }
        let (test_rmse, clamped) = if x_test.is_empty() {
            (None, 0)
        } else {
            let pred = model.predict(&x_test)?;
            let se: f64 = test
                .iter()
                .zip(&pred.values)
                .map(|(k, p)| (p - target_value(&fits[*k].1.params, target)).powi(2))
                .sum();
            (Some((se / test.len() as f64).sqrt()), pred.clamped)
        };
        models.push(TargetSummary {
            target: target.to_string(),
            link: link.to_string(),
            edf_total: model.edf_total,
            deviance: model.deviance,
            gcv: model.gcv,
            pirls_converged: model.pirls_converged,
            train: train.len(),
            test: test.len(),
            test_rmse,
            clamped_test_rows: clamped,
        });
    }
    ctx.write_csv(SIGNIFICANCE, |w| write_significance(w, &significance))?;
    ctx.write_csv(CURVES, |w| write_curves(w, &curves))?;
    ctx.write_json(
        "temporal.json",
        &TemporalSummary {
            fitted: fits.len(),
            refined: fits.iter().filter(|(_, f)| f.refined).count(),
            skipped,
            fit_warnings,
            train_origins: train.iter().map(|k| ids[fits[*k].0].clone()).collect(),
            test_origins: test.iter().map(|k| ids[fits[*k].0].clone()).collect(),
            models,
        },
    )
}

#[derive(Serialize)]
struct SimulationRow {
    origin: String,
    n_total: u64,
    rmse: f64,
    clamped_low: usize,
    clamped_high: usize,
}

#[derive(Serialize)]
struct SimulationSummary {
    origins: Vec<SimulationRow>,
}

pub fn simulate(ctx: &Context) -> CliResult<()> {
    let series = read_series(&ctx.read(SERIES, "temporal")?[..])?;
    let rows = read_rows(&ctx.read(FITS, "temporal")?)?;
    let mut out: Vec<(String, Vec<f64>, Vec<f64>)> = Vec::new();
    let mut summary = Vec::new();
    for r in rows {
        if r.len() != 6 {
            return Err(CliError::runtime(format!("{FITS}: malformed row {r:?}")));
        }
        let obs = series
            .iter()
            .find(|s| s.origin == r[0])
            .ok_or_else(|| CliError::runtime(format!("{FITS}: origin {} has no series", r[0])))?;
        let n_total = obs.values.iter().sum::<f64>() as u64;
        let params = TemporalParams {
            tau: parse_f64(&r[1], FITS)?,
            mu: parse_f64(&r[2], FITS)?,
            c: parse_f64(&r[3], FITS)?,
            p0: parse_f64(&r[4], FITS)?,
            n_total,
        };
        let sim = simulate_volume_series(&params, obs.values.len() - 1)?;
        let rmse = (sim.values.iter().zip(&obs.values).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            / obs.values.len() as f64)
            .sqrt();
        summary.push(SimulationRow {
            origin: r[0].clone(),
            n_total,
            rmse,
            clamped_low: sim.clamped_low,
            clamped_high: sim.clamped_high,
        });
        out.push((r[0].clone(), sim.values, obs.values.clone()));
    }
    ctx.write_csv("simulated.csv", |w| {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["origin", "bin_index", "simulated", "observed"])?;
        for (o, sim, obs) in &out {
            for (k, (s, y)) in sim.iter().zip(obs).enumerate() {
                wtr.write_record([o.clone(), k.to_string(), s.to_string(), y.to_string()])?;
            }
        }
        wtr.flush()?;
        Ok(())
    })?;
    ctx.write_json("simulate.json", &SimulationSummary { origins: summary })
}
