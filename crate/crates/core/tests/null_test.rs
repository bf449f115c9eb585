use hyptree_core::calibrate::{calibrate_correlation, calibrate_type1, noise_dataset, null_symmetry, pearson, Type1Setup};
use hyptree_core::data::build_bins;
use hyptree_core::loss::{self, GradHess, LossKind};
use hyptree_core::nulltest::{
    kept_positions, make_r_y, make_r_y_counted, null_draw, null_gain_draw, prune_tree, sample_cover_triples,
    split_test, DrawBudget, NodeStream, NullSplitRule, TestConfig, TouchCount, Verdict,
};
use hyptree_core::rng;
use hyptree_core::tree::{grow_tree, GrowParams, Node};
use proptest::prelude::*;

fn first_iteration(x: &[Vec<f64>], y: &[f64]) -> (GradHess, Vec<hyptree_core::BinnedColumn>) {
    let raw = vec![loss::base_score(LossKind::SquaredError, y).unwrap(); y.len()];
    let gh = loss::grad_hess(LossKind::SquaredError, y, &raw).unwrap();
    (gh, x.iter().map(|c| build_bins(c, 256).unwrap()).collect())
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

#[test]
fn cover_samples_are_without_replacement() {
    let y: Vec<f64> = (0..50).map(f64::from).collect();
    let gh = GradHess { g: y.iter().map(|v| -v).collect(), h: y.iter().map(|v| v + 1.0).collect() };
    let full = sample_cover_triples(&gh, &y, 50, &mut rng::stream(3, &[])).unwrap();
    assert_eq!(sorted(full.y.clone()), y);
    // triples stay paired
    for i in 0..50 {
        assert_eq!(full.g[i], -full.y[i]);
        assert_eq!(full.h[i], full.y[i] + 1.0);
    }
    let one = sample_cover_triples(&gh, &y, 1, &mut rng::stream(3, &[])).unwrap();
    assert_eq!(one.y.len(), 1);
    assert_eq!(
        sample_cover_triples(&gh, &y, 20, &mut rng::stream(8, &[])).unwrap(),
        sample_cover_triples(&gh, &y, 20, &mut rng::stream(8, &[])).unwrap()
    );
    assert!(sample_cover_triples(&gh, &y, 51, &mut rng::stream(3, &[])).is_err());
}

#[test]
fn r_y_examples() {
    let y: Vec<f64> = (0..1000).map(|i| f64::from(i).sin()).collect();
    assert_eq!(make_r_y(&y, 1.0, &mut rng::stream(1, &[])).unwrap(), y);
    assert_eq!(kept_positions(0.25, 100), 25);
    assert!(make_r_y(&y, 1.5, &mut rng::stream(1, &[])).is_err());
}

#[test]
fn null_gain_worked_values() {
    let mut r = rng::stream(0, &[]);
    let draw = null_gain_draw(&[1.0, -1.0], &[1.0, 1.0], &[0.0, 1.0], &mut r, 16).unwrap();
    assert_eq!((draw.threshold_used, draw.gain), (1.0, 2.0));
    let flat = null_gain_draw(&[1.0, -1.0, 2.0], &[1.0; 3], &[4.0; 3], &mut r, 5).unwrap();
    assert_eq!((flat.gain, flat.resamples), (0.0, 5));
    let zero = null_gain_draw(&[0.0; 4], &[1.0; 4], &[1.0, 2.0, 3.0, 4.0], &mut r, 16).unwrap();
    assert_eq!(zero.gain, 0.0);
}

#[test]
fn zero_candidate_always_fails() {
    let d = noise_dataset(100, 1, 4).unwrap();
    let (gh, _) = first_iteration(d.columns(), d.target());
    let stream = NodeStream { root_seed: 1, tree_index: 0, node_id: 0 };
    let t = split_test(0.0, 100, &gh, d.target(), &TestConfig::new(1, 0.0, 0), stream).unwrap();
    assert_eq!(t.verdict, Verdict::Fail);
}

#[test]
fn separable_stump_passes_every_draw() {
    let x: Vec<f64> = (0..100).map(f64::from).collect();
    let (gh, bins) = first_iteration(&[x.clone()], &x);
    let rows: Vec<usize> = (0..100).collect();
    let split = hyptree_core::tree::find_best_split(&rows, &bins, &gh, 1).unwrap();
    let config = TestConfig::new(6, 0.0, 11);
    let stream = NodeStream { root_seed: 5, tree_index: 0, node_id: 0 };
    let t = split_test(split.gain, 100, &gh, &x, &config, stream).unwrap();
    assert_eq!(t.draws.len(), 63);
    assert!(t.draws.iter().all(|d| d.gain < split.gain));
    assert_eq!(t.verdict, Verdict::Pass);
}

#[test]
fn strong_signal_tree_survives_twenty_draws() {
    let n = 400;
    let x: Vec<f64> = (0..n).map(|i| f64::from(i) / 40.0).collect();
    let y: Vec<f64> = x.iter().map(|v| v.floor()).collect();
    let (gh, bins) = first_iteration(&[x.clone()], &y);
    let rows: Vec<usize> = (0..n as usize).collect();
    let grown = grow_tree(&rows, &bins, &gh, &GrowParams { max_depth: 2, min_child_rows: 1, penalties: None }).unwrap();
    let config = TestConfig { budget: DrawBudget::KDraws, ..TestConfig::new(20, 0.0, 2) };
    let (pruned, report) = prune_tree(&grown, &gh, &y, &config, 9, 0).unwrap();
    assert_eq!(report.splits_pruned, 0);
    assert_eq!(report.tests_performed, grown.n_splits());
    for node in &report.nodes {
        assert!(node.null_gains.iter().all(|&g| g < node.gain));
    }
    assert_eq!(pruned, grown.compact());
}

#[test]
fn zero_gain_tree_is_fully_pruned() {
    let x: Vec<f64> = (0..20).map(f64::from).collect();
    let y = vec![3.0; 20];
    let (gh, bins) = first_iteration(&[x], &y);
    let rows: Vec<usize> = (0..20).collect();
    let grown = grow_tree(&rows, &bins, &gh, &GrowParams { max_depth: 3, min_child_rows: 1, penalties: None }).unwrap();
    let (pruned, report) = prune_tree(&grown, &gh, &y, &TestConfig::new(2, 0.0, 0), 0, 0).unwrap();
    assert!(report.tree_fully_pruned);
    assert_eq!(pruned.nodes.len(), 1);
    assert_eq!(pruned.predict(&[0.0]), 0.0);
}

#[test]
fn pruning_is_deterministic_and_collapses_to_parent_sums() {
    let d = noise_dataset(300, 3, 21).unwrap();
    let (gh, bins) = first_iteration(d.columns(), d.target());
    let rows: Vec<usize> = (0..300).collect();
    let grown = grow_tree(&rows, &bins, &gh, &GrowParams { max_depth: 4, min_child_rows: 1, penalties: None }).unwrap();
    let config = TestConfig::new(1, 0.0, 0);
    let a = prune_tree(&grown, &gh, d.target(), &config, 77, 3).unwrap();
    let b = prune_tree(&grown, &gh, d.target(), &config, 77, 3).unwrap();
    assert_eq!(a, b);
    let (pruned, report) = a;
    pruned.validate().unwrap();
    assert_eq!(report.tests_performed, report.splits_kept + report.splits_pruned);
    assert!(pruned.n_splits() <= grown.n_splits());
    for v in report.nodes.iter().filter(|v| v.verdict == Verdict::Fail) {
        let Node::Split { g_sum, h_sum, .. } = grown.nodes[v.node_id] else { panic!("tested a leaf") };
        // the collapsed leaf predicts the Newton step of its whole cover
        let leaf = -g_sum / h_sum;
        assert!(pruned.nodes.iter().any(|n| matches!(n, Node::Leaf { weight, .. } if *weight == leaf)));
    }
    assert_eq!(report.tree_index, 3);
}

#[test]
fn correlation_tracks_rho() {
    let rows = calibrate_correlation(4000, &[0.0, 0.25, 0.5, 0.75, 1.0], 30, 8).unwrap();
    for row in &rows {
        assert!((row.mean_correlation - row.rho).abs() < 0.03, "{row:?}");
    }
    assert_eq!(rows[4].mean_correlation, 1.0);
}

#[test]
fn kept_fraction_sets_correlation() {
    // 25 kept of 100 gives expected correlation 0.25
    let y: Vec<f64> = (0..100).map(|i| f64::from(i)).collect();
    let mean: f64 = (0..400)
        .map(|rep| pearson(&make_r_y(&y, 0.25, &mut rng::stream(rep, &[])).unwrap(), &y).unwrap())
        .sum::<f64>()
        / 400.0;
    assert!((mean - 0.25).abs() < 0.03, "{mean}");
}

#[test]
fn random_threshold_draws_are_symmetric() {
    let config = TestConfig { null_split: NullSplitRule::RandomThreshold, ..TestConfig::new(1, 0.0, 0) };
    let s = null_symmetry(200, 4000, &config, 5).unwrap();
    assert!((s.exceed_rate - 0.5).abs() < 0.03, "{s:?}");
    let best = null_symmetry(200, 2000, &TestConfig::new(1, 0.0, 0), 5).unwrap();
    assert!((best.exceed_rate - 0.5).abs() < 0.04, "{best:?}");
}

#[test]
fn type1_rates_near_nominal() {
    let rows = calibrate_type1(&Type1Setup::new(150, 0.0, 600, 12), &[1, 2, 3]).unwrap();
    for row in &rows {
        assert!((row.pass_rate - row.nominal_alpha).abs() <= 4.0 * row.std_error, "{row:?}");
        assert_eq!(row.null_draws, (1 << row.k_draws) - 1);
    }
}

#[test]
fn stronger_competitor_lowers_pass_rate() {
    let rate = |rho: f64| calibrate_type1(&Type1Setup::new(150, rho, 300, 3), &[1]).unwrap()[0].pass_rate;
    let (r0, r_small, r1) = (rate(0.0), rate(0.02), rate(1.0));
    assert!(r0 > r_small && r_small >= r1, "{r0} {r_small} {r1}");
    assert!(r1 < 0.02, "{r1}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn one_draw_touches_at_most_4n(n in 2usize..2000, rho in 0f64..=1.0, cover_frac in 0.01f64..=1.0, seed in any::<u64>()) {
        let cover = ((n as f64 * cover_frac) as usize).clamp(2, n);
        let y: Vec<f64> = (0..n).map(|i| (i % 17) as f64).collect();
        let gh = GradHess { g: y.iter().map(|v| v - 8.0).collect(), h: vec![1.0; n] };
        let mut touches = TouchCount::default();
        let config = TestConfig::new(1, rho, 0);
        null_draw(&gh, &y, cover, &config, &mut rng::stream(seed, &[]), &mut touches).unwrap();
        prop_assert!(touches.total() <= 4 * cover);
        let moved = cover - kept_positions(rho, cover);
        prop_assert_eq!(touches.index_draws, cover + if moved >= 2 { moved } else { 0 });
    }

    #[test]
    fn r_y_is_a_rearrangement(values in prop::collection::vec(-1e3f64..1e3, 1..300), rho in 0f64..=1.0, seed in any::<u64>()) {
        let mut touches = TouchCount::default();
        let r = make_r_y_counted(&values, rho, &mut rng::stream(seed, &[]), &mut touches).unwrap();
        prop_assert_eq!(sorted(r.clone()), sorted(values.clone()));
        let unchanged = r.iter().zip(&values).filter(|(a, b)| a == b).count();
        prop_assert!(unchanged >= kept_positions(rho, values.len()));
    }
}
