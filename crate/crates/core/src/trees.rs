//! Weighted least-squares regression trees used as the weak learner.
//!
//! Leaves predict the weighted mean label in the leaf, clamped to `[−M, M]`.
//! Numeric and Boolean columns split on midpoints between consecutive distinct
//! values; categorical columns split one category against the rest.

use crate::data::{ColumnKind, Dataset};
use crate::error::{Error, Result};

pub const MAX_DEPTH: usize = 3;
const MIN_LEAF_WEIGHT_FRACTION: f64 = 1e-9;

/// A dataset together with non-negative example weights.
#[derive(Debug, Clone, Copy)]
pub struct WeightedSample<'a> {
    data: &'a Dataset,
    weights: &'a [f64],
}

impl<'a> WeightedSample<'a> {
    pub fn new(data: &'a Dataset, weights: &'a [f64]) -> Result<Self> {
        if weights.len() != data.m() {
            return Err(Error::Precondition(format!(
                "{} weights for {} rows",
                weights.len(),
                data.m()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::Precondition(format!("invalid weight {w}")));
        }
        if !weights.iter().any(|&w| w > 0.0) {
            return Err(Error::Precondition("all weights are zero".into()));
        }
        Ok(Self { data, weights })
    }

    pub fn data(&self) -> &'a Dataset {
        self.data
    }

    pub fn weights(&self) -> &'a [f64] {
        self.weights
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SplitRule {
    /// `x <= threshold` goes left.
    Threshold(f64),
    /// `x == category` goes left. Categories never seen at this node during
    /// fitting go to the heavier child.
    Category {
        category: u32,
        seen: Vec<u32>,
        majority_left: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        rule: SplitRule,
        /// Weighted squared-error reduction achieved by the split.
        gain: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
    n_features: usize,
    max_abs: f64,
}

impl Tree {
    /// Builds a tree from explicit nodes; node 0 is the root.
    pub fn from_nodes(nodes: Vec<Node>, n_features: usize, max_abs: f64) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Precondition("a tree needs at least one node".into()));
        }
        for n in &nodes {
            match n {
                Node::Leaf { value } if value.abs() > max_abs => {
                    return Err(Error::Precondition(format!("leaf {value} exceeds bound {max_abs}")))
                }
                Node::Split {
                    feature, left, right, ..
                } if *feature >= n_features || *left >= nodes.len() || *right >= nodes.len() => {
                    return Err(Error::Precondition("split references a missing node or feature".into()))
                }
                _ => {}
            }
        }
        Ok(Self {
            nodes,
            n_features,
            max_abs,
        })
    }

    /// A single leaf predicting 0.
    pub fn zero(n_features: usize) -> Self {
        Self {
            nodes: vec![Node::Leaf { value: 0.0 }],
            n_features,
            max_abs: 1.0,
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Output bound `M`.
    pub fn max_abs(&self) -> f64 {
        self.max_abs
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], k: usize) -> usize {
            match &nodes[k] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }

    pub fn n_splits(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Split { .. })).count()
    }

    /// Leaf value for `row`, plus whether routing met an unseen category.
    pub fn predict_traced(&self, row: &[f64]) -> (f64, bool) {
        let mut k = 0;
        let mut unseen = false;
        loop {
            match &self.nodes[k] {
                Node::Leaf { value } => return (*value, unseen),
                Node::Split {
                    feature,
                    rule,
                    left,
                    right,
                    ..
                } => {
                    let x = row[*feature];
                    let go_left = match rule {
                        SplitRule::Threshold(t) => x <= *t,
                        SplitRule::Category {
                            category,
                            seen,
                            majority_left,
                        } => {
                            let c = x as u32;
                            if seen.binary_search(&c).is_ok() {
                                c == *category
                            } else {
                                unseen = true;
                                *majority_left
                            }
                        }
                    };
                    k = if go_left { *left } else { *right };
                }
            }
        }
    }

    #[inline]
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.predict_traced(row).0
    }

    pub fn predict_all(&self, ds: &Dataset) -> Vec<f64> {
        (0..ds.m()).map(|i| self.predict(ds.row(i))).collect()
    }
}

struct Candidate {
    feature: usize,
    rule: SplitRule,
    gain: f64,
}

struct Fitter<'a> {
    ws: WeightedSample<'a>,
    sorted: std::sync::Arc<Vec<Vec<u32>>>,
    max_abs: f64,
    min_leaf_weight: f64,
    in_node: Vec<bool>,
    nodes: Vec<Node>,
}

impl Fitter<'_> {
    fn sums(&self, rows: &[u32]) -> (f64, f64) {
        rows.iter().fold((0.0, 0.0), |(w, s), &i| {
            let wi = self.ws.weights[i as usize];
            (w + wi, s + wi * self.ws.data.y(i as usize))
        })
    }

    fn best_split(&mut self, rows: &[u32], total_w: f64, total_s: f64) -> Option<Candidate> {
        let ds = self.ws.data;
        let w = self.ws.weights;
        let parent = total_s * total_s / total_w;
        let tol = 1e-12 * total_w.max(f64::MIN_POSITIVE);
        for &i in rows {
            self.in_node[i as usize] = true;
        }
        let mut best: Option<Candidate> = None;
        let consider = |feature: usize, rule: SplitRule, gain: f64, best: &mut Option<Candidate>| {
            // gains within `tol` of the incumbent count as ties, so the first
            // candidate wins regardless of rounding
            if gain > tol && best.as_ref().is_none_or(|b| gain > b.gain + tol) {
                *best = Some(Candidate { feature, rule, gain });
            }
        };
        for j in 0..ds.d() {
            match ds.schema().kind(j) {
                ColumnKind::Numeric | ColumnKind::Boolean => {
                    let (mut wl, mut sl) = (0.0, 0.0);
                    let mut prev: Option<f64> = None;
                    for &i in self.sorted[j].iter() {
                        let i = i as usize;
                        if !self.in_node[i] {
                            continue;
                        }
                        let x = ds.value(i, j);
                        if let Some(px) = prev {
                            if x > px {
                                let (wr, sr) = (total_w - wl, total_s - sl);
                                if wl >= self.min_leaf_weight && wr >= self.min_leaf_weight {
                                    let gain = sl * sl / wl + sr * sr / wr - parent;
                                    consider(j, SplitRule::Threshold(0.5 * (px + x)), gain, &mut best);
                                }
                            }
                        }
                        wl += w[i];
                        sl += w[i] * ds.y(i);
                        prev = Some(x);
                    }
                }
                ColumnKind::Categorical { alphabet } => {
                    let mut cw = vec![0.0; alphabet.len()];
                    let mut cs = vec![0.0; alphabet.len()];
                    let mut present = vec![false; alphabet.len()];
                    for &i in rows {
                        let i = i as usize;
                        let c = ds.value(i, j) as usize;
                        present[c] = true;
                        cw[c] += w[i];
                        cs[c] += w[i] * ds.y(i);
                    }
                    let seen: Vec<u32> = (0..alphabet.len() as u32).filter(|&c| present[c as usize]).collect();
                    if seen.len() < 2 {
                        continue;
                    }
                    for &c in &seen {
                        let (wl, sl) = (cw[c as usize], cs[c as usize]);
                        let (wr, sr) = (total_w - wl, total_s - sl);
                        if wl >= self.min_leaf_weight && wr >= self.min_leaf_weight {
                            let gain = sl * sl / wl + sr * sr / wr - parent;
                            let rule = SplitRule::Category {
                                category: c,
                                seen: seen.clone(),
                                majority_left: wl > wr,
                            };
                            consider(j, rule, gain, &mut best);
                        }
                    }
                }
            }
        }
        for &i in rows {
            self.in_node[i as usize] = false;
        }
        best
    }

    fn leaf_value(&self, total_w: f64, total_s: f64) -> f64 {
        if total_w > 0.0 {
            (total_s / total_w).clamp(-self.max_abs, self.max_abs)
        } else {
            0.0
        }
    }

    fn grow(&mut self, rows: Vec<u32>, depth_left: usize) -> usize {
        let (tw, ts) = self.sums(&rows);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            value: self.leaf_value(tw, ts),
        });
        if depth_left == 0 {
            return id;
        }
        let Some(cand) = self.best_split(&rows, tw, ts) else {
            return id;
        };
        let ds = self.ws.data;
        let (lrows, rrows): (Vec<u32>, Vec<u32>) = rows.into_iter().partition(|&i| {
            let x = ds.value(i as usize, cand.feature);
            match &cand.rule {
                SplitRule::Threshold(t) => x <= *t,
                SplitRule::Category { category, .. } => x as u32 == *category,
            }
        });
        let left = self.grow(lrows, depth_left - 1);
        let right = self.grow(rrows, depth_left - 1);
        self.nodes[id] = Node::Split {
            feature: cand.feature,
            rule: cand.rule,
            gain: cand.gain,
            left,
            right,
        };
        id
    }
}

/// Greedy top-down weighted least-squares tree against the ±1 labels.
///
/// Ties between equally good splits go to the lowest feature index, then the
/// lowest threshold (or category index).
pub fn fit_tree(ws: &WeightedSample<'_>, depth: usize, max_abs: f64) -> Result<Tree> {
    let ds = ws.data;
    if ds.m() < 2 {
        return Err(Error::Precondition("need at least 2 rows to fit a tree".into()));
    }
    if !(1..=MAX_DEPTH).contains(&depth) {
        return Err(Error::Precondition(format!("tree depth must be 1..={MAX_DEPTH}, got {depth}")));
    }
    if !(max_abs > 0.0) {
        return Err(Error::Precondition(format!("output bound M must be positive, got {max_abs}")));
    }
    let total: f64 = ws.weights.iter().sum();
    let mut fitter = Fitter {
        ws: *ws,
        sorted: ds.sorted_rows(),
        max_abs,
        min_leaf_weight: MIN_LEAF_WEIGHT_FRACTION * total,
        in_node: vec![false; ds.m()],
        nodes: Vec::with_capacity(1 << (depth + 1)),
    };
    fitter.grow((0..ds.m() as u32).collect(), depth);
    Ok(Tree {
        nodes: fitter.nodes,
        n_features: ds.d(),
        max_abs,
    })
}

/// Per-feature split gain summed over the ensemble with weights `|β|`,
/// normalized to sum to 1. An ensemble without any split yields the uniform
/// profile (and a warning).
pub fn feature_importance(members: &[(Tree, f64)], n_features: usize) -> Vec<f64> {
    let mut imp = vec![0.0; n_features];
    for (tree, beta) in members {
        for node in &tree.nodes {
            if let Node::Split { feature, gain, .. } = node {
                imp[*feature] += beta.abs() * gain;
            }
        }
    }
    let total: f64 = imp.iter().sum();
    if total > 0.0 {
        imp.iter_mut().for_each(|v| *v /= total);
    } else {
        log::warn!("ensemble has no informative split; reporting a uniform importance profile");
        imp.iter_mut().for_each(|v| *v = 1.0 / n_features.max(1) as f64);
    }
    imp
}
