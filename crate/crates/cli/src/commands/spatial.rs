//! `spatial`: attraction model against observed flows, with the gravity baseline.

use std::collections::HashMap;

use serde::Serialize;
use utn_core::spatial::{
    evaluate_flow_correlation, gravity_baseline, inflow_opportunities, predicted_matrix, read_emotion_dictionary,
    read_profiles, read_station_words, topic_popularity, DistanceMatrix, FlowCorrelation, Group, SpatialParams,
    StationProfile, TopicEmotion, TopicTable,
};

use super::{load_flows, load_stations};
use crate::artifacts::Context;
use crate::error::{CliError, CliResult};

pub const SPATIAL_EVAL: &str = "spatial_eval.csv";

/// Profiles in station-list order.
pub(crate) fn aligned_profiles(ctx: &Context, ids: &[String]) -> CliResult<Vec<StationProfile>> {
    let profiles = read_profiles(&ctx.open_input("profiles", &ctx.config.inputs.profiles)?[..])?;
    let mut by_id: HashMap<String, StationProfile> =
        profiles.into_iter().map(|p| (p.station.id.clone(), p)).collect();
    let missing: Vec<&str> = ids.iter().filter(|id| !by_id.contains_key(*id)).map(String::as_str).collect();
    if !missing.is_empty() {
        return Err(CliError::runtime(format!("profiles lack stations: {}", missing.join(", "))));
    }
    Ok(ids.iter().map(|id| by_id.remove(id).expect("checked")).collect())
}

#[derive(Serialize)]
struct SpatialSummary {
    params: SpatialParams,
    emotion: TopicEmotion,
    opportunities_source: String,
    unmatched_words: u64,
    beta: f64,
}

pub fn spatial(ctx: &Context) -> CliResult<()> {
    let s = &ctx.config.spatial;
    let inputs = &ctx.config.inputs;
    let (stations, index) = load_stations(ctx)?;
    let periods: Vec<String> = ctx.config.period_table()?.names().map(String::from).collect();
    let observed = load_flows(ctx, &index, &periods)?.aggregate;
    let table = TopicTable::read_csv(&ctx.open_input("topic_table", &inputs.topic_table)?[..])?;
    let dict = read_emotion_dictionary(&ctx.open_input("emotion", &inputs.emotion)?[..])?;
    let words = read_station_words(&ctx.open_input("station_words", &inputs.station_words)?[..])?;

    let mut profiles = aligned_profiles(ctx, index.ids())?;
    let mut unmatched = 0;
    for p in profiles.iter_mut() {
        let pop = topic_popularity(&table, words.get(&p.station.id).map_or(&[][..], Vec::as_slice));
        unmatched += pop.misses;
        p.topic_popularity = pop.values;
    }
    if unmatched > 0 {
        ctx.warn(format!("{unmatched} station word occurrences are not in the topic table"));
    }

    let mut emotion = TopicEmotion::from_tables(&table, &dict);
    if let (Some(lb), Some(ub)) = (s.emotion_lb, s.emotion_ub) {
        emotion.lb = lb;
        emotion.ub = ub;
    }
    let params = SpatialParams {
        theta: emotion.theta()?,
        theta_d: s.theta_d,
        epsilon: s.epsilon,
        distance: s.distance.parse()?,
    };
    let opportunities: Vec<f64> = if s.opportunities == "profile" {
        profiles
            .iter()
            .map(|p| p.opportunities.ok_or_else(|| CliError::runtime(format!("station {} has no opportunities value", p.station.id))))
            .collect::<CliResult<_>>()?
    } else {
        inflow_opportunities(&observed)
    };
    let distances = DistanceMatrix::from_stations(&stations);
    let predicted = predicted_matrix(&profiles, &opportunities, &params, &distances)?;
    let gravity = gravity_baseline(&inflow_opportunities(&observed), &distances, s.beta)?;

    let divisions: Vec<_> = stations.iter().map(|st| st.division).collect();
    let mut rows: Vec<(&str, Group, FlowCorrelation)> = Vec::new();
    for (model, matrix) in [("attraction", &predicted), ("gravity", &gravity)] {
        for g in Group::ALL {
            match evaluate_flow_correlation(matrix, &observed, &divisions, g) {
                Ok(c) => rows.push((model, g, c)),
                Err(e) => ctx.warn(format!("{model} / {g}: {e}")),
            }
        }
    }

    ctx.write_csv(SPATIAL_EVAL, |w| {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["model", "group", "r", "ci_low", "ci_high", "n"])?;
        for (m, g, c) in &rows {
            wtr.write_record([
                m.to_string(),
                g.to_string(),
                c.r.to_string(),
                c.ci_low.to_string(),
                c.ci_high.to_string(),
                c.n.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    })?;
    ctx.write_csv("predicted.csv", |w| {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["origin", "destination", "probability", "gravity_probability", "observed"])?;
        let ids = index.ids();
        for (s, row) in predicted.iter().enumerate() {
            for (i, p) in row.iter().enumerate() {
                if i != s {
                    wtr.write_record([
                        ids[s].clone(),
                        ids[i].clone(),
                        p.to_string(),
                        gravity[s][i].to_string(),
                        observed.get(s, i).to_string(),
                    ])?;
                }
            }
        }
        wtr.flush()?;
        Ok(())
    })?;
    ctx.write_json(
        "spatial.json",
        &SpatialSummary {
            params,
            emotion,
            opportunities_source: s.opportunities.clone(),
            unmatched_words: unmatched,
            beta: s.beta,
        },
    )
}
