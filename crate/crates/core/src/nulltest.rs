//! Permutation null-gain test for individual splits, post-fit pruning and the
//! ensemble stopping rule.
//!
//! A null draw for a split with cover `C`:
//!
//! 1. sample `C` paired `(g, h, y)` triples without replacement from the full
//!    training vectors;
//! 2. build `R_Y` from the sampled targets by keeping `round(ρ·C)` positions
//!    and permuting the rest among themselves, which gives expected
//!    correlation `ρ` with the sampled targets;
//! 3. split the sampled `(g, h)` on `R_Y` and compute the gain.
//!
//! A candidate passes when its gain strictly exceeds every null draw. Under
//! the null hypothesis the candidate gain and the null gains are exchangeable,
//! so beating `m` independent draws has probability `1/(m+1)`; the default
//! budget therefore takes `m = 2^k − 1` draws to test at `α = 2^-k`.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{build_bins, DEFAULT_MAX_BINS};
use crate::error::{Error, Result};
use crate::loss::GradHess;
use crate::rng::{self, StreamRng};
use crate::tree::{find_best_split, gain_unchecked, leaf_weight, Node, Tree};

/// Largest `k` accepted with [`DrawBudget::MatchAlpha`] (about a million draws).
pub const MAX_MATCH_ALPHA_K: u32 = 20;

/// How the split on `R_Y` is chosen for one null draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullSplitRule {
    /// The gain-maximizing threshold on `R_Y` after quantile binning, i.e. the
    /// split the tree learner would pick if `R_Y` were a feature column.
    #[default]
    BestThreshold,
    /// One threshold drawn uniformly from the distinct values of `R_Y`
    /// (excluding the minimum).
    RandomThreshold,
}

/// Number of null draws taken for a test at `α = 2^-k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrawBudget {
    /// `2^k − 1` draws: pass probability exactly `2^-k` for exchangeable gains.
    #[default]
    MatchAlpha,
    /// `k` draws: pass probability `1/(k+1)` for exchangeable gains.
    KDraws,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub k_draws: u32,
    pub rho: f64,
    pub seed: u64,
    #[serde(default = "default_max_resample")]
    pub max_resample: u32,
    #[serde(default)]
    pub null_split: NullSplitRule,
    #[serde(default)]
    pub budget: DrawBudget,
    /// Bucket count used to bin `R_Y` for [`NullSplitRule::BestThreshold`].
    #[serde(default = "default_max_bins")]
    pub max_bins: usize,
}

fn default_max_resample() -> u32 {
    16
}

fn default_max_bins() -> usize {
    DEFAULT_MAX_BINS
}

impl Default for TestConfig {
    fn default() -> Self {
        TestConfig {
            k_draws: 3,
            rho: 0.0,
            seed: 0,
            max_resample: 16,
            null_split: NullSplitRule::default(),
            budget: DrawBudget::default(),
            max_bins: DEFAULT_MAX_BINS,
        }
    }
}

impl TestConfig {
    pub fn new(k_draws: u32, rho: f64, seed: u64) -> Self {
        TestConfig { k_draws, rho, seed, ..TestConfig::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_draws == 0 {
            return Err(Error::InvalidConfig("k_draws must be at least 1".into()));
        }
        if self.budget == DrawBudget::MatchAlpha && self.k_draws > MAX_MATCH_ALPHA_K {
            return Err(Error::InvalidConfig(format!(
                "k_draws above {MAX_MATCH_ALPHA_K} needs more than 2^{MAX_MATCH_ALPHA_K} null draws per split"
            )));
        }
        if self.max_bins < 2 {
            return Err(Error::InvalidConfig(format!("max_bins must be at least 2, got {}", self.max_bins)));
        }
        check_rho(self.rho)
    }

    /// Null draws per tested split.
    pub fn null_draws(&self) -> u32 {
        match self.budget {
            DrawBudget::MatchAlpha => (1u32 << self.k_draws) - 1,
            DrawBudget::KDraws => self.k_draws,
        }
    }

    /// Pass probability when candidate and null gains are exchangeable.
    pub fn exchangeable_pass_rate(&self) -> f64 {
        1.0 / (f64::from(self.null_draws()) + 1.0)
    }

    /// Nominal per-split type-1 error `2^-k`.
    pub fn alpha(&self) -> f64 {
        libm::exp2(-f64::from(self.k_draws))
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if (0.0..=1.0).contains(&rho) {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("rho must lie in [0, 1], got {rho}")))
    }
}

/// Counts of the elementary operations of one null draw: random indices
/// generated, paired training rows read while sampling, and target values read
/// while building `R_Y`. Evaluating the gain on the gathered sample is not
/// counted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TouchCount {
    pub index_draws: usize,
    pub row_reads: usize,
    pub target_reads: usize,
}

impl TouchCount {
    pub fn total(&self) -> usize {
        self.index_draws + self.row_reads + self.target_reads
    }
}

/// Paired sample of gradients, Hessians and targets.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverSample {
    pub g: Vec<f64>,
    pub h: Vec<f64>,
    pub y: Vec<f64>,
}

pub fn sample_cover_triples(gh: &GradHess, y: &[f64], cover: usize, rng: &mut StreamRng) -> Result<CoverSample> {
    sample_cover_triples_counted(gh, y, cover, rng, &mut TouchCount::default())
}

pub fn sample_cover_triples_counted(
    gh: &GradHess,
    y: &[f64],
    cover: usize,
    rng: &mut StreamRng,
    touches: &mut TouchCount,
) -> Result<CoverSample> {
    let n = y.len();
    if gh.g.len() != n || gh.h.len() != n {
        return Err(Error::LengthMismatch { what: "gradient/hessian", expected: n, got: gh.g.len().min(gh.h.len()) });
    }
    if cover == 0 {
        return Err(Error::Empty("cover sample"));
    }
    if cover > n {
        return Err(Error::CoverTooLarge { cover, n });
    }
    // partial Fisher-Yates: the first `cover` slots become the sample
    let mut pool: Vec<usize> = (0..n).collect();
    let mut sample = CoverSample {
        g: Vec::with_capacity(cover),
        h: Vec::with_capacity(cover),
        y: Vec::with_capacity(cover),
    };
    for i in 0..cover {
        let j = rng.random_range(i..n);
        pool.swap(i, j);
        let row = pool[i];
        sample.g.push(gh.g[row]);
        sample.h.push(gh.h[row]);
        sample.y.push(y[row]);
    }
    touches.index_draws += cover;
    touches.row_reads += cover;
    Ok(sample)
}

/// Number of positions kept unpermuted: `round(ρ·C)`, half away from zero.
pub fn kept_positions(rho: f64, c: usize) -> usize {
    (libm::round(rho * c as f64) as usize).min(c)
}

pub fn make_r_y(y_c: &[f64], rho: f64, rng: &mut StreamRng) -> Result<Vec<f64>> {
    make_r_y_counted(y_c, rho, rng, &mut TouchCount::default())
}

/// Keeps `round(ρ·C)` uniformly chosen positions of `y_c` and applies a
/// uniform random permutation to the values at the remaining positions.
pub fn make_r_y_counted(y_c: &[f64], rho: f64, rng: &mut StreamRng, touches: &mut TouchCount) -> Result<Vec<f64>> {
    check_rho(rho)?;
    let c = y_c.len();
    let moved = c - kept_positions(rho, c);
    let mut r_y = y_c.to_vec();
    touches.target_reads += c;
    if moved < 2 {
        return Ok(r_y);
    }
    // The first `moved` slots of a partial Fisher-Yates are a uniform subset in
    // uniform order; sending the i-th smallest selected position the value of
    // the i-th selected one is a uniform permutation of that subset.
    let mut positions: Vec<usize> = (0..c).collect();
    for i in 0..moved {
        let j = rng.random_range(i..c);
        positions.swap(i, j);
    }
    touches.index_draws += moved;
    let mut selected = vec![false; c];
    for &p in &positions[..moved] {
        selected[p] = true;
    }
    let targets = (0..c).filter(|&p| selected[p]);
    for (target, &source) in targets.zip(&positions[..moved]) {
        r_y[target] = y_c[source];
    }
    Ok(r_y)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullDraw {
    pub gain: f64,
    pub threshold_used: f64,
    pub resamples: u32,
}

fn check_sample(g_c: &[f64], h_c: &[f64], r_y: &[f64]) -> Result<()> {
    for (what, len) in [("hessian sample", h_c.len()), ("R_Y", r_y.len())] {
        if len != g_c.len() {
            return Err(Error::LengthMismatch { what, expected: g_c.len(), got: len });
        }
    }
    if g_c.len() < 2 {
        return Err(Error::InvalidConfig(format!("a null split needs at least 2 rows, got {}", g_c.len())));
    }
    Ok(())
}

fn sorted_distinct(values: &[f64]) -> Vec<f64> {
    let mut distinct = values.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    distinct
}

/// Gain of one uniformly chosen threshold on `r_y` (rows `< t` go left).
///
/// The minimum is never offered as a threshold, so both sides are non-empty
/// whenever `r_y` has two distinct values; a constant `r_y` exhausts
/// `max_resample` retries and yields gain 0.
pub fn null_gain_draw(g_c: &[f64], h_c: &[f64], r_y: &[f64], rng: &mut StreamRng, max_resample: u32) -> Result<NullDraw> {
    check_sample(g_c, h_c, r_y)?;
    let distinct = sorted_distinct(r_y);
    let thresholds = if distinct.len() >= 2 { &distinct[1..] } else { &distinct[..] };
    let mut resamples = 0;
    loop {
        let threshold = thresholds[rng.random_range(0..thresholds.len())];
        let (mut gl, mut hl, mut gr, mut hr) = (0.0, 0.0, 0.0, 0.0);
        let mut left = 0usize;
        for ((&g, &h), &r) in g_c.iter().zip(h_c).zip(r_y) {
            if r < threshold {
                gl += g;
                hl += h;
                left += 1;
            } else {
                gr += g;
                hr += h;
            }
        }
        if left > 0 && left < r_y.len() && hl > 0.0 && hr > 0.0 {
            return Ok(NullDraw { gain: gain_unchecked(gl, hl, gr, hr), threshold_used: threshold, resamples });
        }
        if resamples >= max_resample {
            return Ok(NullDraw { gain: 0.0, threshold_used: threshold, resamples });
        }
        resamples += 1;
    }
}

/// Largest gain over the histogram boundaries of `r_y` binned into at most
/// `max_bins` quantile buckets; gain 0 when `r_y` is constant.
pub fn best_null_gain(g_c: &[f64], h_c: &[f64], r_y: &[f64], max_bins: usize) -> Result<NullDraw> {
    check_sample(g_c, h_c, r_y)?;
    let binned = [build_bins(r_y, max_bins)?];
    let gh = GradHess { g: g_c.to_vec(), h: h_c.to_vec() };
    let rows: Vec<usize> = (0..r_y.len()).collect();
    Ok(match find_best_split(&rows, &binned, &gh, 1) {
        Some(split) => NullDraw { gain: split.gain, threshold_used: split.threshold, resamples: 0 },
        None => NullDraw { gain: 0.0, threshold_used: r_y[0], resamples: 0 },
    })
}

/// One complete null draw for a split with the given cover.
pub fn null_draw(
    gh: &GradHess,
    y: &[f64],
    cover: usize,
    config: &TestConfig,
    rng: &mut StreamRng,
    touches: &mut TouchCount,
) -> Result<NullDraw> {
    let sample = sample_cover_triples_counted(gh, y, cover, rng, touches)?;
    let r_y = make_r_y_counted(&sample.y, config.rho, rng, touches)?;
    match config.null_split {
        NullSplitRule::RandomThreshold => null_gain_draw(&sample.g, &sample.h, &r_y, rng, config.max_resample),
        NullSplitRule::BestThreshold => best_null_gain(&sample.g, &sample.h, &r_y, config.max_bins),
    }
}

/// Identifies the random sub-streams of one tested node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeStream {
    pub root_seed: u64,
    pub tree_index: u64,
    pub node_id: u64,
}

impl NodeStream {
    pub fn draw_rng(&self, draw: u32) -> StreamRng {
        rng::stream(self.root_seed, &[self.tree_index, self.node_id, u64::from(draw)])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitTest {
    pub verdict: Verdict,
    pub draws: Vec<NullDraw>,
}

/// Runs all [`TestConfig::null_draws`] null draws; the candidate passes iff
/// its gain is strictly greater than every null gain (ties fail).
pub fn split_test(
    candidate_gain: f64,
    cover: usize,
    gh: &GradHess,
    y: &[f64],
    config: &TestConfig,
    stream: NodeStream,
) -> Result<SplitTest> {
    config.validate()?;
    if !(candidate_gain >= 0.0) {
        return Err(Error::InvalidConfig(format!("candidate gain must be >= 0, got {candidate_gain}")));
    }
    if cover < 2 {
        return Err(Error::InvalidConfig(format!("a tested split needs cover >= 2, got {cover}")));
    }
    let draws = (0..config.null_draws())
        .map(|d| null_draw(gh, y, cover, config, &mut stream.draw_rng(d), &mut TouchCount::default()))
        .collect::<Result<Vec<_>>>()?;
    let verdict = if draws.iter().all(|d| candidate_gain > d.gain) { Verdict::Pass } else { Verdict::Fail };
    Ok(SplitTest { verdict, draws })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeVerdict {
    pub node_id: usize,
    pub gain: f64,
    pub cover: usize,
    pub null_gains: Vec<f64>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PruneReport {
    pub tree_index: u64,
    pub tests_performed: usize,
    pub splits_pruned: usize,
    pub splits_kept: usize,
    pub tree_fully_pruned: bool,
    pub nodes: Vec<NodeVerdict>,
}

/// Tests splits top-down (breadth-first). A failing split becomes a `−G/H`
/// leaf over its cover and its subtree is discarded untested.
///
/// Returns the compacted tree; node ids in the report refer to the tree as
/// grown. A tree whose root ends up a leaf (including one that never split)
/// is reported as fully pruned.
pub fn prune_tree(
    tree: &Tree,
    gh: &GradHess,
    y: &[f64],
    config: &TestConfig,
    root_seed: u64,
    tree_index: u64,
) -> Result<(Tree, PruneReport)> {
    config.validate()?;
    tree.validate()?;
    let mut pruned = tree.clone();
    let mut report = PruneReport { tree_index, ..PruneReport::default() };
    let mut queue = VecDeque::from([0usize]);
    while let Some(id) = queue.pop_front() {
        let Node::Split { left, right, gain, cover, g_sum, h_sum, .. } = tree.nodes[id] else {
            continue;
        };
        let stream = NodeStream { root_seed, tree_index, node_id: id as u64 };
        let outcome = split_test(gain, cover, gh, y, config, stream)?;
        report.tests_performed += 1;
        match outcome.verdict {
            Verdict::Pass => {
                report.splits_kept += 1;
                queue.push_back(left);
                queue.push_back(right);
            }
            Verdict::Fail => {
                report.splits_pruned += 1;
                let weight = leaf_weight(g_sum, h_sum, 0.0)?;
                pruned.nodes[id] = Node::Leaf { weight, cover, g_sum, h_sum };
            }
        }
        report.nodes.push(NodeVerdict {
            node_id: id,
            gain,
            cover,
            null_gains: outcome.draws.iter().map(|d| d.gain).collect(),
            verdict: outcome.verdict,
        });
    }
    report.tree_fully_pruned = pruned.nodes[0].is_leaf();
    Ok((pruned.compact(), report))
}

/// `true` means stop boosting.
pub fn stop_check(report: &PruneReport) -> bool {
    report.tree_fully_pruned
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::split_gain;

    fn rng(seed: u64) -> StreamRng {
        rng::stream(seed, &[])
    }

    fn toy(n: usize) -> (GradHess, Vec<f64>) {
        let y: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let gh = GradHess { g: y.iter().map(|v| -v).collect(), h: vec![1.0; n] };
        (gh, y)
    }

    #[test]
    fn full_cover_sample_is_a_permutation() {
        let (gh, y) = toy(20);
        let s = sample_cover_triples(&gh, &y, 20, &mut rng(1)).unwrap();
        let mut sorted = s.y.clone();
        sorted.sort_by(f64::total_cmp);
        assert_eq!(sorted, y);
        // pairing preserved
        assert!(s.g.iter().zip(&s.y).all(|(g, y)| *g == -y));
    }

    #[test]
    fn single_row_sample_and_determinism() {
        let (gh, y) = toy(20);
        let s = sample_cover_triples(&gh, &y, 1, &mut rng(2)).unwrap();
        assert_eq!(s.y.len(), 1);
        assert!(y.contains(&s.y[0]));
        assert_eq!(
            sample_cover_triples(&gh, &y, 7, &mut rng(3)).unwrap(),
            sample_cover_triples(&gh, &y, 7, &mut rng(3)).unwrap()
        );
        assert!(matches!(sample_cover_triples(&gh, &y, 21, &mut rng(3)), Err(Error::CoverTooLarge { .. })));
    }

    #[test]
    fn r_y_extremes() {
        let y: Vec<f64> = (0..50).map(f64::from).collect();
        assert_eq!(make_r_y(&y, 1.0, &mut rng(4)).unwrap(), y);
        let r = make_r_y(&y, 0.0, &mut rng(4)).unwrap();
        assert_ne!(r, y);
        let mut sorted = r.clone();
        sorted.sort_by(f64::total_cmp);
        assert_eq!(sorted, y);
        assert!(make_r_y(&y, 1.5, &mut rng(4)).is_err());
    }

    #[test]
    fn r_y_keeps_exactly_the_rounded_count_in_place() {
        let y: Vec<f64> = (0..1000).map(f64::from).collect();
        let r = make_r_y(&y, 0.25, &mut rng(5)).unwrap();
        let fixed = r.iter().zip(&y).filter(|(a, b)| a == b).count();
        // the permuted 750 can contribute a handful of accidental fixed points
        assert!((250..270).contains(&fixed), "{fixed}");
        assert_eq!(kept_positions(0.25, 10), 3);
        assert_eq!(kept_positions(0.05, 10), 1);
    }

    #[test]
    fn random_null_examples() {
        let d = null_gain_draw(&[1.0, -1.0, 2.0], &[1.0; 3], &[4.0; 3], &mut rng(6), 16).unwrap();
        assert_eq!((d.gain, d.resamples), (0.0, 16));
        let d = null_gain_draw(&[0.0; 4], &[1.0; 4], &[1.0, 2.0, 3.0, 4.0], &mut rng(6), 16).unwrap();
        assert_eq!(d.gain, 0.0);
        let d = null_gain_draw(&[1.0, -1.0], &[1.0, 1.0], &[0.0, 1.0], &mut rng(6), 16).unwrap();
        assert_eq!(d.threshold_used, 1.0);
        assert_eq!(d.gain, split_gain(1.0, 1.0, -1.0, 1.0).unwrap());
        assert_eq!(d.gain, 2.0);
        assert!(null_gain_draw(&[1.0], &[1.0], &[1.0], &mut rng(6), 16).is_err());
    }

    #[test]
    fn best_null_is_the_maximum() {
        let g = [1.0, 2.0, -3.0, 0.5];
        let h = [1.0; 4];
        let r = [3.0, 1.0, 4.0, 2.0];
        let best = best_null_gain(&g, &h, &r, 256).unwrap();
        // sorted by r: g = [2, 0.5, 1, -3]; brute force the three cuts
        let cuts = [(2.0, 1.0, -1.5, 3.0), (2.5, 2.0, -2.0, 2.0), (3.5, 3.0, -3.0, 1.0)];
        let max = cuts.iter().map(|&(a, b, c, d)| split_gain(a, b, c, d).unwrap()).fold(0.0, f64::max);
        assert!((best.gain - max).abs() < 1e-12);
        assert_eq!(best.threshold_used, 3.5);
        assert_eq!(best_null_gain(&g, &h, &[1.0; 4], 256).unwrap().gain, 0.0);
    }

    #[test]
    fn zero_candidate_fails() {
        let (gh, y) = toy(30);
        let stream = NodeStream { root_seed: 1, tree_index: 0, node_id: 0 };
        let t = split_test(0.0, 30, &gh, &y, &TestConfig::new(3, 0.0, 1), stream).unwrap();
        assert_eq!(t.verdict, Verdict::Fail);
        assert_eq!(t.draws.len(), 7);
        assert!(t.draws.iter().all(|d| d.gain >= 0.0));
    }

    #[test]
    fn split_test_input_errors() {
        let (gh, y) = toy(10);
        let stream = NodeStream { root_seed: 1, tree_index: 0, node_id: 0 };
        let cfg = TestConfig::new(2, 0.0, 0);
        assert!(split_test(1.0, 1, &gh, &y, &cfg, stream).is_err());
        assert!(split_test(-1.0, 5, &gh, &y, &cfg, stream).is_err());
        assert!(split_test(1.0, 5, &gh, &y, &TestConfig::new(0, 0.0, 0), stream).is_err());
        assert!(split_test(1.0, 5, &gh, &y, &TestConfig::new(1, -0.1, 0), stream).is_err());
    }

    #[test]
    fn zero_gain_tree_is_fully_pruned() {
        let tree = Tree {
            nodes: vec![
                Node::Split { feature: 0, threshold: 0.5, left: 1, right: 2, gain: 0.0, cover: 4, g_sum: 0.0, h_sum: 4.0 },
                Node::Leaf { weight: 0.0, cover: 2, g_sum: 0.0, h_sum: 2.0 },
                Node::Leaf { weight: 0.0, cover: 2, g_sum: 0.0, h_sum: 2.0 },
            ],
        };
        let (gh, y) = toy(4);
        let (pruned, report) = prune_tree(&tree, &gh, &y, &TestConfig::new(2, 0.0, 0), 0, 0).unwrap();
        assert_eq!(pruned.nodes.len(), 1);
        assert!(report.tree_fully_pruned && stop_check(&report));
        assert_eq!((report.tests_performed, report.splits_pruned, report.splits_kept), (1, 1, 0));
    }

    #[test]
    fn alpha_and_draw_budgets() {
        assert_eq!(TestConfig::new(1, 0.0, 0).alpha(), 0.5);
        let four = TestConfig::new(4, 0.0, 0);
        assert_eq!(four.alpha(), 0.0625);
        assert_eq!(four.null_draws(), 15);
        assert_eq!(four.exchangeable_pass_rate(), four.alpha());
        let literal = TestConfig { budget: DrawBudget::KDraws, ..four };
        assert_eq!(literal.null_draws(), 4);
        assert_eq!(literal.exchangeable_pass_rate(), 0.2);
        assert!(TestConfig::new(21, 0.0, 0).validate().is_err());
        assert!(TestConfig { k_draws: 30, ..literal }.validate().is_ok());
    }
}
