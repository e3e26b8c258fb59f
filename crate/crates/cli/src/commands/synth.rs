//! `synth`: a synthetic city written to the configured input paths, with its ground truth.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::Serialize;
use utn_core::flowgraph::write_stations;
use utn_core::ingest::write_trips;
use utn_core::spatial::{write_emotion_dictionary, write_profiles, write_station_words, SpatialParams};
use utn_core::synth::{
    draw_temporal_params, generate_city, generate_planted_network, generate_temporal_observations, station_ids,
    SynthSpec,
};
use utn_core::temporal::{write_series, TemporalParams};
use utn_core::{seeds, Error as CoreError};

use crate::artifacts::Context;
use crate::error::{CliError, CliResult};

fn spec_path(ctx: &Context) -> Option<PathBuf> {
    ctx.input(&ctx.config.synth.spec)
}

fn load_spec(ctx: &Context) -> CliResult<SynthSpec> {
    match spec_path(ctx) {
        None => Ok(SynthSpec::default()),
        Some(p) => {
            let text = std::fs::read_to_string(&p)
                .map_err(|e| CliError::Validation(vec![format!("synth.spec {}: {e}", p.display())]))?;
            SynthSpec::parse(&text).map_err(|e| CliError::Validation(vec![format!("synth.spec {}: {e}", p.display())]))
        }
    }
}

/// Output paths that must be configured, plus spec problems.
pub fn problems(ctx: &Context) -> Vec<String> {
    let i = &ctx.config.inputs;
    let mut p: Vec<String> = [
        ("trips", &i.trips),
        ("stations", &i.stations),
        ("calendar", &i.calendar),
        ("topic_table", &i.topic_table),
        ("emotion", &i.emotion),
        ("profiles", &i.profiles),
        ("station_words", &i.station_words),
    ]
    .into_iter()
    .filter(|(_, v)| v.is_none())
    .map(|(k, _)| format!("inputs.{k} must be set so synth knows where to write it"))
    .collect();
    if let Err(CliError::Validation(e)) = load_spec(ctx) {
        p.extend(e);
    }
    p
}

#[derive(Serialize)]
struct TemporalTruth {
    station: String,
    params: TemporalParams,
}

#[derive(Serialize)]
struct CityTruthSummary {
    spec: String,
    normal_blocks: BTreeMap<String, usize>,
    outlier_blocks: BTreeMap<String, usize>,
    outlier_days: Vec<String>,
    spatial: SpatialParams,
    opportunities: BTreeMap<String, f64>,
    temporal: Vec<TemporalTruth>,
    chains_by_pattern: BTreeMap<String, usize>,
}

pub fn synth(ctx: &Context) -> CliResult<()> {
    let spec = load_spec(ctx)?;
    let city = generate_city(&spec.city, ctx.sub_seed("synth.city"))?;
    let i = &ctx.config.inputs;
    let path = |v: &Option<String>| -> (PathBuf, String) {
        let s = v.clone().expect("validated");
        (ctx.loaded.resolve(&s), s)
    };

    let (p, l) = path(&i.trips);
    ctx.write_csv_at(&p, l, |w| write_trips(w, &city.trips))?;
    let (p, l) = path(&i.stations);
    ctx.write_csv_at(&p, l, |w| write_stations(w, &city.stations))?;
    let (p, l) = path(&i.calendar);
    ctx.write_csv_at(&p, l, |w| city.calendar().write(w))?;
    let (p, l) = path(&i.topic_table);
    ctx.write_csv_at(&p, l, |w| city.topic_table.write_csv(w))?;
    let (p, l) = path(&i.emotion);
    ctx.write_csv_at(&p, l, |w| write_emotion_dictionary(w, &city.emotion))?;
    let (p, l) = path(&i.profiles);
    ctx.write_csv_at(&p, l, |w| write_profiles(w, &city.profiles))?;
    let (p, l) = path(&i.station_words);
    ctx.write_csv_at(&p, l, |w| write_station_words(w, &city.station_words))?;

    let ids: Vec<String> = city.stations.iter().map(|s| s.id.clone()).collect();
    let by_id = |xs: &[usize]| ids.iter().cloned().zip(xs.iter().copied()).collect::<BTreeMap<_, _>>();
    let mut chains_by_pattern = BTreeMap::new();
    for c in &city.truth.chains {
        *chains_by_pattern.entry(c.code.to_string()).or_insert(0) += 1;
    }
    ctx.write_json(
        "synth/truth.json",
        &CityTruthSummary {
            spec: spec.render(),
            normal_blocks: by_id(&city.truth.normal_blocks),
            outlier_blocks: by_id(&city.truth.outlier_blocks),
            outlier_days: spec.city.outlier_days.iter().map(ToString::to_string).collect(),
            spatial: city.truth.spatial.clone(),
            opportunities: ids.iter().cloned().zip(city.truth.opportunities.iter().copied()).collect(),
            temporal: ids
                .iter()
                .zip(&city.truth.temporal)
                .map(|(s, p)| TemporalTruth { station: s.clone(), params: *p })
                .collect(),
            chains_by_pattern,
        },
    )?;

    // Standalone oracles: a planted network and noisy volume series.
    let (network, planted) = generate_planted_network(&spec.network, ctx.sub_seed("synth.network"))?;
    ctx.write_csv("synth/planted_network.csv", |w| network.write_triplets(w))?;
    ctx.write_csv("synth/planted_partition.csv", |w| planted.write_csv(w, network.stations()))?;

    let mut rng = seeds::rng(ctx.sub_seed("synth.temporal.params"));
    let params: Vec<(String, TemporalParams)> = station_ids(spec.temporal.origins)
        .into_iter()
        .map(|id| (id, draw_temporal_params(&spec.temporal.ranges, &mut rng)))
        .collect();
    let sigma = spec.temporal.sigma;
    let mut series = Vec::with_capacity(params.len());
    for (k, (id, p)) in params.iter().enumerate() {
        let one = generate_temporal_observations(
            &[(id.clone(), *p)],
            sigma * p.n_total as f64,
            spec.temporal.horizon,
            seeds::indexed_seed(ctx.sub_seed("synth.temporal.noise"), k as u64),
        )?;
        series.extend(one);
    }
    ctx.write_csv("synth/temporal_observations.csv", |w| write_series(w, &series))?;
    ctx.write_csv("synth/temporal_truth.csv", |w| {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["origin", "tau", "mu", "c", "p0", "n_total"])?;
        for (id, p) in &params {
            wtr.write_record([
                id.clone(),
                p.tau.to_string(),
                p.mu.to_string(),
                p.c.to_string(),
                p.p0.to_string(),
                p.n_total.to_string(),
            ])?;
        }
        wtr.flush().map_err(CoreError::from)?;
        Ok(())
    })
}
