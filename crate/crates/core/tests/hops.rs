mod common;

use cgvm_core::dataset::Category;
use cgvm_core::hops::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn series(id: &str, values: Vec<f64>) -> MetricSeries {
    MetricSeries::new(id, "m", Some(Category::Nature), values)
}

/// Piecewise-linear interpolation on float positions `(K-1)/(T-1)`.
fn float_interp(values: &[f64], x: f64) -> f64 {
    if values.len() == 1 {
        return values[0];
    }
    let pos = x * (values.len() - 1) as f64;
    let k = (pos.floor() as usize).min(values.len() - 2);
    let t = pos - k as f64;
    values[k] * (1.0 - t) + values[k + 1] * t
}

#[test]
fn three_hops_onto_three_points_is_exact() {
    let n = normalize_hops(&series("s", vec![0.2, 0.9, 0.4]), 3).unwrap();
    assert_eq!(n.normalized, vec![(0.0, 0.2), (0.5, 0.9), (1.0, 0.4)]);
}

#[test]
fn single_hop_is_constant() {
    let n = normalize_hops(&series("s", vec![0.37]), DEFAULT_GRID_SIZE).unwrap();
    assert_eq!(n.normalized.len(), DEFAULT_GRID_SIZE);
    assert!(n.normalized.iter().all(|&(_, v)| v == 0.37));
}

#[test]
fn random_series_respect_envelope_and_monotonicity() {
    let mut rng = common::rng(200);
    for i in 0..200 {
        let t = rng.random_range(1..=12);
        let mut values: Vec<f64> = (0..t).map(|_| rng.random_range(-5.0..5.0)).collect();
        let monotone = i % 2 == 0;
        if monotone {
            values.sort_by(f64::total_cmp);
        }
        let grid = rng.random_range(2..=25);
        let n = normalize_hops(&series("s", values.clone()), grid).unwrap();
        let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        for &(g, v) in &n.normalized {
            assert!(v >= lo && v <= hi, "outside envelope");
            assert!((v - float_interp(&values, g)).abs() < 1e-9);
        }
        if monotone {
            assert!(n.normalized.windows(2).all(|w| w[0].1 <= w[1].1));
        }
        assert_eq!(n.normalized.first().unwrap().1, values[0]);
        assert_eq!(n.normalized.last().unwrap().1, values[t - 1]);
    }
}

#[test]
fn aggregation_matches_naive_statistics() {
    let all = vec![series("a", vec![1.0, 2.0, 3.0]), series("b", vec![4.0, f64::INFINITY]), series("c", vec![f64::NAN])];
    let rows = aggregate_lenient(&all, GroupBy::Corpus).rows;
    assert_eq!(rows.len(), 1);
    let r = &rows[0];
    let v = [1.0, 2.0, 3.0, 4.0];
    let mean = v.iter().sum::<f64>() / 4.0;
    let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0).sqrt();
    assert_eq!((r.mean, r.std, r.max, r.n), (mean, std, 4.0, 4));
    assert_eq!((r.excluded_infinite, r.excluded_undefined), (1, 1));

    let cat = aggregate_lenient(&all, GroupBy::Category);
    // final values: 3, inf, NaN
    assert_eq!((cat.rows[0].mean, cat.rows[0].n, cat.rows[0].excluded_infinite), (3.0, 1, 1));
}

#[test]
fn aggregation_ignores_series_order() {
    let mut rng = common::rng(5);
    let mut all: Vec<MetricSeries> = (0..30)
        .map(|i| {
            let t = rng.random_range(1..8);
            let s = series(&format!("s{i}"), (0..t).map(|_| rng.random_range(0.0..1.0)).collect());
            normalize_hops(&s, 7).unwrap()
        })
        .collect();
    let before: Vec<_> = [GroupBy::Corpus, GroupBy::Category, GroupBy::GridPoint].map(|g| aggregate(&all, g).unwrap()).into();
    all.shuffle(&mut rng);
    for (g, want) in [GroupBy::Corpus, GroupBy::Category, GroupBy::GridPoint].into_iter().zip(before) {
        let got = aggregate(&all, g).unwrap();
        assert_eq!(got.len(), want.len());
        for (a, b) in got.iter().zip(&want) {
            assert_eq!((a.n, a.max, a.grid_point), (b.n, b.max, b.grid_point));
            assert!((a.mean - b.mean).abs() < 1e-12 && (a.std - b.std).abs() < 1e-12);
        }
    }
}

#[test]
fn strict_aggregation_rejects_empty_groups() {
    assert!(matches!(aggregate(&[series("a", vec![f64::NAN])], GroupBy::Corpus), Err(HopError::EmptyGroup { .. })));
    assert!(matches!(normalize_hops(&series("a", vec![]), 5), Err(HopError::EmptySeries(_))));
    assert!(matches!(grid_points(1), Err(HopError::InvalidGrid(1))));
}

proptest! {
    #[test]
    fn hop_nodes_land_exactly(values in prop::collection::vec(-100.0..100.0f64, 2..8), mult in 1usize..4) {
        // With grid size m(T-1)+1 every hop sits on a grid node.
        let t = values.len();
        let grid = mult * (t - 1) + 1;
        let n = normalize_hops(&series("s", values.clone()), grid).unwrap();
        for (k, v) in values.iter().enumerate() {
            prop_assert_eq!(n.normalized[k * mult].1, *v);
        }
    }

    #[test]
    fn mean_inside_range(values in prop::collection::vec(-1e6..1e6f64, 1..50)) {
        let (mean, std, max) = summary_stats(&values);
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!(mean >= min && mean <= max);
        prop_assert!(std >= 0.0);
    }
}
