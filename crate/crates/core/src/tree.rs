//! Histogram split search and depth-wise tree growth.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::BinnedColumn;
use crate::error::{Error, Result};
use crate::loss::GradHess;

/// Unregularized second-order gain of splitting `(G, H)` into left and right.
///
/// Evaluated as `(G_L·H_R − G_R·H_L)² / (H_L·H_R·(H_L+H_R))`, which is
/// algebraically `G_L²/H_L + G_R²/H_R − (G_L+G_R)²/(H_L+H_R)` but cannot go
/// negative and is exactly zero when `G_L/H_L = G_R/H_R` holds in floating
/// point.
pub fn split_gain(g_left: f64, h_left: f64, g_right: f64, h_right: f64) -> Result<f64> {
    check_hessian(h_left)?;
    check_hessian(h_right)?;
    Ok(gain_unchecked(g_left, h_left, g_right, h_right))
}

#[inline]
pub(crate) fn gain_unchecked(g_left: f64, h_left: f64, g_right: f64, h_right: f64) -> f64 {
    let cross = g_left * h_right - g_right * h_left;
    let gain = cross * cross / (h_left * h_right * (h_left + h_right));
    // (x·x)/positive is never negative; this only guards against -0.0 and NaN.
    if gain > 0.0 {
        gain
    } else {
        0.0
    }
}

fn check_hessian(h: f64) -> Result<()> {
    if h > 0.0 {
        Ok(())
    } else {
        Err(Error::NonPositiveHessian(h))
    }
}

/// Baseline L2 / L1 / minimum-gain split penalties.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Penalties {
    pub lambda: f64,
    pub alpha_l1: f64,
    pub gamma: f64,
}

impl Penalties {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda", self.lambda), ("alpha_l1", self.alpha_l1), ("gamma", self.gamma)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(alloc::format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// L1 soft threshold.
    fn shrink(&self, g: f64) -> f64 {
        let magnitude = (g.abs() - self.alpha_l1).max(0.0);
        if g < 0.0 {
            -magnitude
        } else {
            magnitude
        }
    }

    fn score(&self, g: f64, h: f64) -> f64 {
        let s = self.shrink(g);
        s * s / (h + self.lambda)
    }

    fn gain_unchecked(&self, g_left: f64, h_left: f64, g_right: f64, h_right: f64) -> f64 {
        0.5 * (self.score(g_left, h_left) + self.score(g_right, h_right)
            - self.score(g_left + g_right, h_left + h_right))
            - self.gamma
    }

    /// Leaf value `−S(G)/(H+λ)`.
    pub fn leaf_weight(&self, g_sum: f64, h_sum: f64) -> Result<f64> {
        leaf_weight(self.shrink(g_sum), h_sum, self.lambda)
    }
}

/// Penalized gain; negative values mean the split is rejected.
pub fn regularized_gain(
    g_left: f64,
    h_left: f64,
    g_right: f64,
    h_right: f64,
    penalties: &Penalties,
) -> Result<f64> {
    check_hessian(h_left)?;
    check_hessian(h_right)?;
    penalties.validate()?;
    Ok(penalties.gain_unchecked(g_left, h_left, g_right, h_right))
}

/// Newton step `−G/(H+λ)`.
pub fn leaf_weight(g_sum: f64, h_sum: f64, lambda: f64) -> Result<f64> {
    let denominator = h_sum + lambda;
    if denominator > 0.0 {
        Ok(-g_sum / denominator)
    } else {
        Err(Error::NonPositiveHessian(denominator))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    /// Last bin routed left.
    pub bin: u16,
    /// Rows with `value < threshold` go left.
    pub threshold: f64,
    pub gain: f64,
    pub cover: usize,
    pub left_count: usize,
    pub right_count: usize,
    pub g_left: f64,
    pub h_left: f64,
    pub g_right: f64,
    pub h_right: f64,
}

#[derive(Clone, Copy)]
enum Scorer<'a> {
    Gain,
    Penalized(&'a Penalties),
}

impl Scorer<'_> {
    fn score(self, gl: f64, hl: f64, gr: f64, hr: f64) -> f64 {
        match self {
            Scorer::Gain => gain_unchecked(gl, hl, gr, hr),
            Scorer::Penalized(p) => p.gain_unchecked(gl, hl, gr, hr),
        }
    }
}

#[derive(Clone, Copy, Default)]
struct Bucket {
    g: f64,
    h: f64,
    count: usize,
}

/// Best split by score, together with its score.
fn best_split(
    rows: &[usize],
    binned: &[BinnedColumn],
    gh: &GradHess,
    min_child_rows: usize,
    scorer: Scorer<'_>,
) -> Option<(SplitCandidate, f64)> {
    let min_child = min_child_rows.max(1);
    if rows.len() < 2 * min_child {
        return None;
    }
    let mut best: Option<(SplitCandidate, f64)> = None;
    let mut histogram: Vec<Bucket> = Vec::new();
    for (feature, column) in binned.iter().enumerate() {
        let n_bins = column.n_bins();
        if n_bins < 2 {
            continue;
        }
        histogram.clear();
        histogram.resize(n_bins, Bucket::default());
        for &i in rows {
            let bucket = &mut histogram[column.codes[i] as usize];
            bucket.g += gh.g[i];
            bucket.h += gh.h[i];
            bucket.count += 1;
        }
        let total = histogram.iter().fold(Bucket::default(), |acc, b| Bucket {
            g: acc.g + b.g,
            h: acc.h + b.h,
            count: acc.count + b.count,
        });
        let mut left = Bucket::default();
        for (bin, bucket) in histogram[..n_bins - 1].iter().enumerate() {
            left.g += bucket.g;
            left.h += bucket.h;
            left.count += bucket.count;
            let right_count = total.count - left.count;
            if left.count < min_child || right_count < min_child {
                continue;
            }
            // an empty bucket repeats the previous partition
            if bucket.count == 0 {
                continue;
            }
            let (g_right, h_right) = (total.g - left.g, total.h - left.h);
            if !(left.h > 0.0 && h_right > 0.0) {
                continue;
            }
            let score = scorer.score(left.g, left.h, g_right, h_right);
            if best.as_ref().is_none_or(|(_, s)| score > *s) {
                best = Some((
                    SplitCandidate {
                        feature,
                        bin: bin as u16,
                        threshold: column.edges[bin],
                        gain: gain_unchecked(left.g, left.h, g_right, h_right),
                        cover: total.count,
                        left_count: left.count,
                        right_count,
                        g_left: left.g,
                        h_left: left.h,
                        g_right,
                        h_right,
                    },
                    score,
                ));
            }
        }
    }
    best
}

/// Split of `node_rows` with maximal unregularized gain.
///
/// Ties go to the lower feature index, then the lower threshold.
pub fn find_best_split(
    node_rows: &[usize],
    binned: &[BinnedColumn],
    gh: &GradHess,
    min_child_rows: usize,
) -> Option<SplitCandidate> {
    best_split(node_rows, binned, gh, min_child_rows, Scorer::Gain).map(|(c, _)| c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        gain: f64,
        cover: usize,
        g_sum: f64,
        h_sum: f64,
    },
    Leaf {
        weight: f64,
        cover: usize,
        g_sum: f64,
        h_sum: f64,
    },
}

impl Node {
    pub fn cover(&self) -> usize {
        match *self {
            Node::Split { cover, .. } | Node::Leaf { cover, .. } => cover,
        }
    }

    pub fn sums(&self) -> (f64, f64) {
        match *self {
            Node::Split { g_sum, h_sum, .. } | Node::Leaf { g_sum, h_sum, .. } => (g_sum, h_sum),
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, Node::Leaf { .. })
    }
}

/// Binary tree stored as a node array; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(weight: f64) -> Self {
        Tree { nodes: vec![Node::Leaf { weight, cover: 0, g_sum: 0.0, h_sum: 0.0 }] }
    }

    /// Leaf weight reached by a row whose feature `j` is `feature(j)`.
    pub fn predict_with(&self, feature: impl Fn(usize) -> f64) -> f64 {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                Node::Leaf { weight, .. } => return weight,
                Node::Split { feature: f, threshold, left, right, .. } => {
                    id = if feature(f) < threshold { left } else { right };
                }
            }
        }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.predict_with(|j| row[j])
    }

    pub fn n_splits(&self) -> usize {
        self.reachable().iter().filter(|&&id| !self.nodes[id].is_leaf()).count()
    }

    pub fn n_leaves(&self) -> usize {
        self.reachable().iter().filter(|&&id| self.nodes[id].is_leaf()).count()
    }

    /// Number of split levels on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Node ids reachable from the root, breadth-first.
    pub fn reachable(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut queue = VecDeque::from([0usize]);
        while let Some(id) = queue.pop_front() {
            order.push(id);
            if let Node::Split { left, right, .. } = self.nodes[id] {
                queue.push_back(left);
                queue.push_back(right);
            }
        }
        order
    }

    /// Drops unreachable nodes and renumbers the rest breadth-first.
    pub fn compact(&self) -> Tree {
        let order = self.reachable();
        let mut new_id = vec![usize::MAX; self.nodes.len()];
        for (new, &old) in order.iter().enumerate() {
            new_id[old] = new;
        }
        let nodes = order
            .iter()
            .map(|&old| match self.nodes[old].clone() {
                Node::Split { feature, threshold, left, right, gain, cover, g_sum, h_sum } => Node::Split {
                    feature,
                    threshold,
                    left: new_id[left],
                    right: new_id[right],
                    gain,
                    cover,
                    g_sum,
                    h_sum,
                },
                leaf => leaf,
            })
            .collect();
        Tree { nodes }
    }

    /// Checks array-tree structure: in-range children, single parent, no cycles.
    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Empty("tree nodes"));
        }
        let mut parents = vec![0usize; self.nodes.len()];
        for node in &self.nodes {
            if let Node::Split { left, right, .. } = *node {
                for child in [left, right] {
                    if child == 0 || child >= self.nodes.len() {
                        return Err(Error::InvalidConfig(alloc::format!("child index {child} out of range")));
                    }
                    parents[child] += 1;
                    if parents[child] > 1 {
                        return Err(Error::InvalidConfig(alloc::format!("node {child} has two parents")));
                    }
                }
            }
        }
        // one parent per node and a parentless root: nothing reachable can cycle
        Ok(())
    }
}

pub fn predict_tree(tree: &Tree, row: &[f64]) -> f64 {
    tree.predict(row)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowParams {
    pub max_depth: usize,
    pub min_child_rows: usize,
    /// `None` grows without any gain threshold and with `λ = 0` leaves.
    pub penalties: Option<Penalties>,
}

struct Grower<'a> {
    binned: &'a [BinnedColumn],
    gh: &'a GradHess,
    params: &'a GrowParams,
    nodes: Vec<Node>,
}

impl Grower<'_> {
    fn leaf_value(&self, g: f64, h: f64) -> Result<f64> {
        match &self.params.penalties {
            Some(p) => p.leaf_weight(g, h),
            None => leaf_weight(g, h, 0.0),
        }
    }

    fn choose(&self, rows: &[usize]) -> Option<SplitCandidate> {
        let min_child = self.params.min_child_rows;
        match &self.params.penalties {
            None => find_best_split(rows, self.binned, self.gh, min_child),
            Some(p) => best_split(rows, self.binned, self.gh, min_child, Scorer::Penalized(p))
                .filter(|(_, score)| *score > 0.0)
                .map(|(c, _)| c),
        }
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> Result<usize> {
        let (g_sum, h_sum) = self.gh.sums(&rows);
        let id = self.nodes.len();
        let cover = rows.len();
        self.nodes.push(Node::Leaf { weight: 0.0, cover, g_sum, h_sum });

        let candidate = if depth < self.params.max_depth { self.choose(&rows) } else { None };
        match candidate {
            Some(c) => {
                let codes = &self.binned[c.feature].codes;
                let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
                    rows.into_iter().partition(|&i| codes[i] <= c.bin);
                let left = self.grow(left_rows, depth + 1)?;
                let right = self.grow(right_rows, depth + 1)?;
                self.nodes[id] = Node::Split {
                    feature: c.feature,
                    threshold: c.threshold,
                    left,
                    right,
                    gain: c.gain,
                    cover,
                    g_sum,
                    h_sum,
                };
            }
            None => {
                let weight = self.leaf_value(g_sum, h_sum)?;
                self.nodes[id] = Node::Leaf { weight, cover, g_sum, h_sum };
            }
        }
        Ok(id)
    }
}

/// Greedy depth-first growth to `max_depth`.
///
/// Without penalties no split is ever rejected for its gain; every internal
/// node keeps its gain, cover and gradient sums for post-fit testing.
pub fn grow_tree(rows: &[usize], binned: &[BinnedColumn], gh: &GradHess, params: &GrowParams) -> Result<Tree> {
    if rows.is_empty() {
        return Err(Error::Empty("rows to grow a tree on"));
    }
    if let Some(p) = &params.penalties {
        p.validate()?;
    }
    let mut grower = Grower { binned, gh, params, nodes: Vec::new() };
    grower.grow(rows.to_vec(), 0)?;
    Ok(Tree { nodes: grower.nodes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::build_bins;

    fn gh(g: &[f64]) -> GradHess {
        GradHess { g: g.to_vec(), h: vec![1.0; g.len()] }
    }

    #[test]
    fn gain_examples() {
        assert_eq!(split_gain(1.0, 1.0, -1.0, 1.0).unwrap(), 2.0);
        assert_eq!(split_gain(2.0, 2.0, 3.0, 3.0).unwrap(), 0.0);
        let expected = 9.0 + 0.5 - 16.0 / 3.0;
        assert!((split_gain(3.0, 1.0, 1.0, 2.0).unwrap() - expected).abs() < 1e-12);
        assert!(split_gain(1.0, 0.0, 1.0, 1.0).is_err());
        assert!(split_gain(1.0, 1.0, 1.0, -2.0).is_err());
    }

    #[test]
    fn regularized_gain_examples() {
        let none = Penalties::default();
        assert_eq!(regularized_gain(1.0, 1.0, -1.0, 1.0, &none).unwrap(), 1.0);
        let gamma = Penalties { gamma: 5.0, ..none };
        assert_eq!(regularized_gain(1.0, 1.0, -1.0, 1.0, &gamma).unwrap(), -4.0);
        let lambda = Penalties { lambda: 1.0, ..none };
        assert_eq!(regularized_gain(2.0, 1.0, -2.0, 1.0, &lambda).unwrap(), 2.0);
        // alpha soft-thresholds each sum: S(2)=1, S(-2)=-1, S(0)=0
        let alpha = Penalties { alpha_l1: 1.0, ..none };
        assert_eq!(regularized_gain(2.0, 1.0, -2.0, 1.0, &alpha).unwrap(), 1.0);
        let bad = Penalties { lambda: -1.0, ..none };
        assert!(regularized_gain(2.0, 1.0, -2.0, 1.0, &bad).is_err());
    }

    #[test]
    fn leaf_weights() {
        assert_eq!(leaf_weight(-4.0, 2.0, 0.0).unwrap(), 2.0);
        assert_eq!(leaf_weight(0.0, 5.0, 0.0).unwrap(), 0.0);
        assert_eq!(leaf_weight(-4.0, 2.0, 2.0).unwrap(), 1.0);
        assert!(leaf_weight(1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn best_split_on_step() {
        let bins = [build_bins(&[1.0, 2.0, 3.0, 4.0], 256).unwrap()];
        let c = find_best_split(&[0, 1, 2, 3], &bins, &gh(&[1.0, 1.0, -1.0, -1.0]), 1).unwrap();
        assert_eq!(c.feature, 0);
        assert_eq!(c.threshold, 2.5);
        // G_L²/H_L + G_R²/H_R − G²/H = 4/2 + 4/2 − 0
        assert_eq!(c.gain, 4.0);
        assert_eq!((c.left_count, c.right_count, c.cover), (2, 2, 4));
    }

    #[test]
    fn no_split_on_constant_feature() {
        let bins = [build_bins(&[3.0; 4], 256).unwrap()];
        assert!(find_best_split(&[0, 1, 2, 3], &bins, &gh(&[1.0, 1.0, -1.0, -1.0]), 1).is_none());
    }

    #[test]
    fn zero_gradients_give_zero_gain() {
        let bins = [build_bins(&[1.0, 2.0, 3.0], 256).unwrap()];
        let c = find_best_split(&[0, 1, 2], &bins, &gh(&[0.0; 3]), 1).unwrap();
        assert_eq!(c.gain, 0.0);
        assert_eq!(c.threshold, 1.5);
    }

    #[test]
    fn min_child_rows_is_respected() {
        let bins = [build_bins(&[1.0, 2.0, 3.0, 4.0], 256).unwrap()];
        let g = gh(&[5.0, -1.0, -1.0, -1.0]);
        assert_eq!(find_best_split(&[0, 1, 2, 3], &bins, &g, 1).unwrap().left_count, 1);
        assert_eq!(find_best_split(&[0, 1, 2, 3], &bins, &g, 2).unwrap().left_count, 2);
        assert!(find_best_split(&[0, 1, 2, 3], &bins, &g, 3).is_none());
    }

    #[test]
    fn ties_prefer_lower_feature() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let bins = [build_bins(&x, 256).unwrap(), build_bins(&x, 256).unwrap()];
        let c = find_best_split(&[0, 1, 2, 3], &bins, &gh(&[1.0, 1.0, -1.0, -1.0]), 1).unwrap();
        assert_eq!(c.feature, 0);
    }

    #[test]
    fn depth_zero_is_a_single_leaf() {
        let bins = [build_bins(&[1.0, 2.0], 256).unwrap()];
        let params = GrowParams { max_depth: 0, min_child_rows: 1, penalties: None };
        let tree = grow_tree(&[0, 1], &bins, &gh(&[1.0, 3.0]), &params).unwrap();
        assert_eq!(tree.nodes.len(), 1);
        assert_eq!(tree.predict(&[0.0]), -2.0);
    }

    #[test]
    fn stump_leaves() {
        let bins = [build_bins(&[1.0, 2.0, 3.0, 4.0], 256).unwrap()];
        let params = GrowParams { max_depth: 1, min_child_rows: 1, penalties: None };
        let tree = grow_tree(&[0, 1, 2, 3], &bins, &gh(&[1.0, 1.0, -1.0, -1.0]), &params).unwrap();
        assert_eq!(tree.n_splits(), 1);
        assert_eq!(tree.predict(&[1.0]), -1.0);
        assert_eq!(tree.predict(&[4.0]), 1.0);
        // threshold 2.5: exact equality goes right
        assert_eq!(tree.predict(&[2.5]), 1.0);
    }

    #[test]
    fn penalties_reject_weak_splits() {
        let bins = [build_bins(&[1.0, 2.0, 3.0, 4.0], 256).unwrap()];
        let g = gh(&[1.0, 1.0, -1.0, -1.0]);
        let params = GrowParams {
            max_depth: 3,
            min_child_rows: 1,
            penalties: Some(Penalties { gamma: 10.0, ..Penalties::default() }),
        };
        let tree = grow_tree(&[0, 1, 2, 3], &bins, &g, &params).unwrap();
        assert_eq!(tree.n_splits(), 0);
    }

    #[test]
    fn empty_rows_error() {
        let params = GrowParams { max_depth: 1, min_child_rows: 1, penalties: None };
        assert!(grow_tree(&[], &[], &gh(&[]), &params).is_err());
    }

    #[test]
    fn compact_renumbers() {
        let tree = Tree {
            nodes: vec![
                Node::Split { feature: 0, threshold: 0.0, left: 2, right: 3, gain: 1.0, cover: 2, g_sum: 0.0, h_sum: 2.0 },
                Node::Leaf { weight: 9.0, cover: 0, g_sum: 0.0, h_sum: 0.0 },
                Node::Leaf { weight: -1.0, cover: 1, g_sum: 1.0, h_sum: 1.0 },
                Node::Leaf { weight: 1.0, cover: 1, g_sum: -1.0, h_sum: 1.0 },
            ],
        };
        tree.validate().unwrap();
        let c = tree.compact();
        assert_eq!(c.nodes.len(), 3);
        assert_eq!(c.predict(&[-1.0]), -1.0);
        assert_eq!(c.predict(&[1.0]), 1.0);
        assert_eq!(c.depth(), 1);
    }
}
