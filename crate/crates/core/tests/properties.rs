//! Property tests for invariants that span several modules.

use std::sync::Arc;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use proptest::prelude::*;
use utn_core::community::{consensus_partition, louvain_partition, ConsensusConfig, Partition, WeightedDigraph};
use utn_core::flowgraph::{aggregate, build_flow_matrix, DateTag, FlowMatrix, PeriodSelector, PeriodTag, StationIndex};
use utn_core::ingest::{assign_period, pair_taps, Direction, PeriodTable, TapEvent, TripRecord};
use utn_core::synth::{generate_city, generate_planted_network, station_ids, CitySpec, NetworkSpec};
use utn_core::temporal::{fit_gam, GamConfig, Link};

fn day() -> NaiveDate {
    NaiveDate::from_ymd_opt(2015, 4, 8).unwrap()
}

fn at(minute: u32) -> NaiveDateTime {
    day().and_hms_opt(0, 0, 0).unwrap() + Duration::minutes(i64::from(minute))
}

fn tap_strategy() -> impl Strategy<Value = Vec<TapEvent>> {
    prop::collection::vec((0usize..4, 0usize..5, 0u32..1440, any::<bool>()), 0..60).prop_map(|raw| {
        raw.into_iter()
            .map(|(card, station, minute, check_in)| TapEvent {
                card_id: format!("C{card}"),
                station_id: format!("S{station}"),
                timestamp: at(minute),
                direction: if check_in { Direction::CheckIn } else { Direction::CheckOut },
            })
            .collect()
    })
}

fn index(n: usize) -> Arc<StationIndex> {
    StationIndex::new(station_ids(n)).unwrap()
}

fn matrix(n: usize, counts: &[u64]) -> FlowMatrix {
    let mut m = FlowMatrix::zeros(index(n), DateTag::Aggregate, PeriodTag::Day);
    for o in 0..n {
        for d in 0..n {
            if o != d && counts[o * n + d] > 0 {
                m.add(o, d, counts[o * n + d]).unwrap();
            }
        }
    }
    m
}

fn counts(n: usize) -> impl Strategy<Value = Vec<u64>> {
    prop::collection::vec(prop_oneof![3 => Just(0u64), 2 => 1u64..6], n * n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tap_pairing_ignores_input_order(events in tap_strategy(), rot in 0usize..60) {
        let (trips, stats) = pair_taps(events.clone());
        let mut shuffled = events.clone();
        shuffled.reverse();
        if !shuffled.is_empty() {
            let k = rot % shuffled.len();
            shuffled.rotate_left(k);
        }
        let (again, stats_again) = pair_taps(shuffled);
        prop_assert_eq!(&trips, &again);
        prop_assert_eq!(stats, stats_again);
        prop_assert_eq!(events.len(), 2 * trips.len() + stats.dropped_events() + 2 * stats.same_station);
        for t in &trips {
            prop_assert!(t.t_start < t.t_end);
            prop_assert_ne!(&t.origin, &t.destination);
        }
    }

    #[test]
    fn assigned_period_contains_both_endpoints(start in 0u32..1440, len in 1u32..300) {
        let table = PeriodTable::default();
        let trip = TripRecord {
            card_id: "C".into(),
            origin: "A".into(),
            destination: "B".into(),
            t_start: at(start),
            t_end: at(start + len),
        };
        if let Some(p) = assign_period(&trip, &table) {
            for t in [trip.t_start.time(), trip.t_end.time()] {
                prop_assert!(p.start <= t && t <= p.end + Duration::seconds(59));
            }
            prop_assert_eq!(trip.t_start.date(), trip.t_end.date());
        }
    }

    #[test]
    fn flow_matrix_total_counts_selected_trips(
        raw in prop::collection::vec((0usize..5, 1usize..5, 300u32..1400, 1u32..90), 0..80),
    ) {
        let table = PeriodTable::default();
        let idx = index(5);
        let trips: Vec<TripRecord> = raw
            .iter()
            .enumerate()
            .map(|(k, &(o, shift, s, len))| TripRecord {
                card_id: format!("C{k}"),
                origin: format!("S{:02}", o),
                destination: format!("S{:02}", (o + shift) % 5),
                t_start: at(s),
                t_end: at(s + len),
            })
            .collect();
        let whole = build_flow_matrix(&trips, day(), PeriodSelector::WholeDay, &table, &idx).unwrap();
        prop_assert_eq!(whole.total(), trips.len() as u64);
        let mut by_period = 0;
        for name in table.names() {
            let m = build_flow_matrix(&trips, day(), PeriodSelector::Named(name), &table, &idx).unwrap();
            let expected = trips.iter().filter(|t| assign_period(t, &table).is_some_and(|p| p.name == name)).count();
            prop_assert_eq!(m.total(), expected as u64);
            prop_assert!((0..5).all(|i| m.get(i, i) == 0));
            by_period += m.total();
        }
        prop_assert!(by_period <= whole.total());
    }

    #[test]
    fn aggregation_is_associative_and_commutative(a in counts(4), b in counts(4), c in counts(4)) {
        let (ma, mb, mc) = (matrix(4, &a), matrix(4, &b), matrix(4, &c));
        let left = aggregate(&[aggregate(&[ma.clone(), mb.clone()]).unwrap(), mc.clone()]).unwrap();
        let right = aggregate(&[ma.clone(), aggregate(&[mb.clone(), mc.clone()]).unwrap()]).unwrap();
        let swapped = aggregate(&[mc, mb, ma]).unwrap();
        prop_assert_eq!(left.counts(), right.counts());
        prop_assert_eq!(left.counts(), swapped.counts());
    }

    #[test]
    fn louvain_is_a_local_optimum(n in 3usize..30, raw in prop::collection::vec(0u64..4, 900), seed in 0u64..1000) {
        let cells: Vec<u64> = raw[..n * n].to_vec();
        prop_assume!(cells.iter().enumerate().any(|(k, w)| *w > 0 && k / n != k % n));
        let f = matrix(n, &cells);
        let p = louvain_partition(&f, seed).unwrap();
        let g = WeightedDigraph::from_flow(&f);
        let q = g.modularity(p.labels());
        let labels = p.labels();
        for i in 0..n {
            let neighbours: Vec<usize> = g.out_edges(i).iter().chain(g.in_edges(i)).map(|(j, _)| labels[*j]).collect();
            for c in neighbours {
                let mut moved = labels.to_vec();
                moved[i] = c;
                prop_assert!(g.modularity(&moved) <= q + 1e-12, "moving {} to {} raises Q", i, c);
            }
        }
        // Labels are canonical: contiguous and in order of first appearance.
        prop_assert_eq!(&Partition::from_labels(labels), &p);
    }

    #[test]
    fn consensus_is_idempotent(seed in 0u64..500) {
        let spec = NetworkSpec { sizes: vec![6, 5, 5], within: 4.0, cross: 0.5 };
        let (flow, _) = generate_planted_network(&spec, seed).unwrap();
        let cfg = ConsensusConfig { runs: 20, ..Default::default() };
        let first = consensus_partition(&flow, &cfg, seed).unwrap();
        prop_assert_eq!(&first, &consensus_partition(&flow, &cfg, seed).unwrap());
        // A flow matrix that already encodes the consensus as two-way arcs is a fixed point.
        let n = flow.n();
        let l = first.partition.labels();
        let cells: Vec<u64> = (0..n * n).map(|k| u64::from(k / n != k % n && l[k / n] == l[k % n])).collect();
        if cells.iter().any(|c| *c > 0) {
            let again = consensus_partition(&matrix(n, &cells), &cfg, seed + 1).unwrap();
            prop_assert_eq!(again.partition, first.partition);
        }
    }

    #[test]
    fn gam_fit_ignores_affine_feature_rescaling(
        xs in prop::collection::vec(0.0f64..1.0, 60),
        scale in 0.5f64..20.0,
        shift in -10.0f64..10.0,
    ) {
        let names = vec!["x".to_string()];
        let y: Vec<f64> = xs.iter().enumerate().map(|(i, x)| (6.0 * x).sin() + 0.05 * ((i * 7919) % 13) as f64 / 13.0).collect();
        let rows: Vec<Vec<f64>> = xs.iter().map(|x| vec![*x]).collect();
        let moved: Vec<Vec<f64>> = xs.iter().map(|x| vec![shift + scale * x]).collect();
        let cfg = GamConfig::default();
        let a = fit_gam(&rows, &names, &y, Link::Identity, &cfg).unwrap();
        let b = fit_gam(&moved, &names, &y, Link::Identity, &cfg).unwrap();
        let pa = a.predict(&rows).unwrap().values;
        let pb = b.predict(&moved).unwrap().values;
        for (u, v) in pa.iter().zip(&pb) {
            prop_assert!((u - v).abs() < 1e-6, "{} vs {}", u, v);
        }
    }
}

#[test]
fn generators_are_deterministic() {
    let spec = NetworkSpec { sizes: vec![4, 4], within: 3.0, cross: 1.0 };
    assert_eq!(generate_planted_network(&spec, 5).unwrap(), generate_planted_network(&spec, 5).unwrap());
    let city = CitySpec { workers: 50, midday: 20, night: 10, off_day: 5, ..Default::default() };
    assert_eq!(generate_city(&city, 3).unwrap(), generate_city(&city, 3).unwrap());
    assert_ne!(generate_city(&city, 3).unwrap().trips, generate_city(&city, 4).unwrap().trips);
}
