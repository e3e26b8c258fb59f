//! Stage-to-stage run over a generated city, through the CSV readers and writers.

use std::collections::BTreeMap;

use utn_core::activity::{build_daily_chains, classify_pattern, label_chain, pattern_distribution, select_workers};
use utn_core::community::{contingency_correlation, louvain_partition, Partition};
use utn_core::flowgraph::{aggregate, build_flow_matrix, read_stations, write_stations, PeriodSelector, StationIndex};
use utn_core::ingest::{filter_working_days, read_trips_or_taps, write_trips, PeriodTable, WorkCalendar};
use utn_core::synth::{generate_city, CitySpec};

#[test]
fn generated_city_flows_through_every_stage() {
    let spec = CitySpec { workers: 300, midday: 100, night: 60, off_day: 20, ..Default::default() };
    let city = generate_city(&spec, 11).unwrap();

    let mut buf = Vec::new();
    write_stations(&mut buf, &city.stations).unwrap();
    let stations = read_stations(&buf[..]).unwrap();
    assert_eq!(stations, city.stations);

    let mut buf = Vec::new();
    write_trips(&mut buf, &city.trips).unwrap();
    let loaded = read_trips_or_taps(&buf[..]).unwrap();
    assert_eq!(loaded.trips.len(), city.trips.len(), "generated trips must pass validation untouched");
    assert_eq!(loaded.validation.same_station + loaded.validation.non_positive_duration + loaded.validation.malformed, 0);

    let mut buf = Vec::new();
    city.calendar().write(&mut buf).unwrap();
    let calendar = WorkCalendar::read(&buf[..]).unwrap();
    let kept = filter_working_days(loaded.trips, &calendar).unwrap();
    let off_day = city.trips.iter().filter(|t| t.card_id.starts_with('X')).count();
    assert_eq!(kept.len(), city.trips.len() - off_day);

    // Flows: per-day matrices add up to the aggregate.
    let index = StationIndex::new(stations.iter().map(|s| s.id.clone()).collect()).unwrap();
    let table = PeriodTable::default();
    let days: Vec<_> = calendar.working_days().collect();
    let daily: Vec<_> = days
        .iter()
        .map(|d| build_flow_matrix(&kept, *d, PeriodSelector::WholeDay, &table, &index).unwrap())
        .collect();
    let total = aggregate(&daily).unwrap();
    assert_eq!(total.total(), kept.len() as u64);

    // Communities on an ordinary day follow the planted blocks.
    let ordinary = days.iter().position(|d| !spec.outlier_days.contains(d)).unwrap();
    let found = louvain_partition(&daily[ordinary], 1).unwrap();
    let truth = Partition::from_labels(&city.truth.normal_blocks);
    assert!(contingency_correlation(&found, &truth).unwrap() > 0.6);

    // Activity: worker chains are labelled exactly as generated.
    let truth_codes: BTreeMap<(&str, _), _> =
        city.truth.chains.iter().map(|g| ((g.card_id.as_str(), g.date), g)).collect();
    let workers = select_workers(build_daily_chains(&kept).chains);
    assert_eq!(workers.len(), city.truth.chains.len());
    let mut codes = Vec::new();
    for chain in workers {
        let g = truth_codes[&(chain.card_id.as_str(), chain.date)];
        let labelled = label_chain(chain);
        assert_eq!(classify_pattern(&labelled), g.code);
        assert_eq!(labelled.places, g.roles);
        codes.push(g.code);
    }
    let dist = pattern_distribution(&codes, 0.01).unwrap();
    assert!((dist.fraction("N2E2") - 0.85).abs() < 0.03);
}
