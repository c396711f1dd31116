//! Noise-rate and α₀ estimation.
//!
//! The tree-based estimator fits one shallow classification tree to the
//! (possibly noisy) training split and reads the extreme leaf posteriors;
//! under symmetric label noise at rate `p` these approach `p` and `1 − p`, so
//! `p̂ = √(η_min·(1 − η_max))`. α₀ then untwists the average posterior.

use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, Dataset, Label};
use crate::error::{Error, Result};
use crate::losses::{binary_entropy, is_bayes_blunting, sln_twist_posterior};
use crate::math::logit;

pub const ALPHA0_MIN: f64 = 1.0;
pub const ALPHA0_MAX: f64 = 8.0;
const P_HAT_MAX: f64 = 0.5 - 1e-6;
const MIN_ROWS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseEstimate {
    pub eta_min: f64,
    pub eta_max: f64,
    pub p_hat: f64,
    pub eta_c_avg: f64,
    pub alpha0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorRange {
    pub eta_min: f64,
    pub eta_max: f64,
    /// Example-weighted mean of the leaf posteriors.
    pub eta_c_avg: f64,
    pub leaves: usize,
}

struct LeafStats {
    rows: Vec<u32>,
    pos: usize,
}

impl LeafStats {
    fn posterior(&self) -> f64 {
        self.pos as f64 / self.rows.len() as f64
    }
}

struct SplitChoice {
    gain: f64,
    left: Vec<u32>,
    right: Vec<u32>,
}

fn entropy_mass(n: usize, pos: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        n as f64 * binary_entropy(pos as f64 / n as f64)
    }
}

/// Highest information-gain split of a leaf with both children at least
/// `min_leaf` rows; ties go to the lowest feature, then the lowest threshold.
fn best_split(ds: &Dataset, sorted: &[Vec<u32>], leaf: &LeafStats, min_leaf: usize, in_leaf: &mut [bool]) -> Option<SplitChoice> {
    let n = leaf.rows.len();
    if n < 2 * min_leaf {
        return None;
    }
    let parent = entropy_mass(n, leaf.pos);
    for &i in &leaf.rows {
        in_leaf[i as usize] = true;
    }
    // (gain, feature, rule) with rule = threshold or category
    let mut best: Option<(f64, usize, f64, bool)> = None;
    for j in 0..ds.d() {
        match ds.schema().kind(j) {
            ColumnKind::Numeric | ColumnKind::Boolean => {
                let (mut nl, mut pl) = (0usize, 0usize);
                let mut prev: Option<f64> = None;
                for &i in &sorted[j] {
                    let i = i as usize;
                    if !in_leaf[i] {
                        continue;
                    }
                    let x = ds.value(i, j);
                    if let Some(px) = prev {
                        if x > px && nl >= min_leaf && n - nl >= min_leaf {
                            let gain = parent - entropy_mass(nl, pl) - entropy_mass(n - nl, leaf.pos - pl);
                            if gain > 1e-12 && best.is_none_or(|b| gain > b.0) {
                                best = Some((gain, j, 0.5 * (px + x), false));
                            }
                        }
                    }
                    nl += 1;
                    pl += usize::from(ds.labels()[i] == Label::Pos);
                    prev = Some(x);
                }
            }
            ColumnKind::Categorical { alphabet } => {
                let mut cn = vec![0usize; alphabet.len()];
                let mut cp = vec![0usize; alphabet.len()];
                for &i in &leaf.rows {
                    let c = ds.value(i as usize, j) as usize;
                    cn[c] += 1;
                    cp[c] += usize::from(ds.labels()[i as usize] == Label::Pos);
                }
                for c in 0..alphabet.len() {
                    if cn[c] >= min_leaf && n - cn[c] >= min_leaf {
                        let gain = parent - entropy_mass(cn[c], cp[c]) - entropy_mass(n - cn[c], leaf.pos - cp[c]);
                        if gain > 1e-12 && best.is_none_or(|b| gain > b.0) {
                            best = Some((gain, j, c as f64, true));
                        }
                    }
                }
            }
        }
    }
    for &i in &leaf.rows {
        in_leaf[i as usize] = false;
    }
    let (gain, j, v, categorical) = best?;
    let (left, right) = leaf.rows.iter().partition(|&&i| {
        let x = ds.value(i as usize, j);
        if categorical {
            x == v
        } else {
            x <= v
        }
    });
    Some(SplitChoice { gain, left, right })
}

/// Fits one classification tree best-first with at most `⌈log₂ m⌉` leaves,
/// at least `⌈√m⌉` rows per leaf and information-gain splits, then reports the
/// extreme and average leaf posteriors `P(Y = +1 | leaf)`.
pub fn estimate_posterior_range(train: &Dataset) -> Result<PosteriorRange> {
    let m = train.m();
    if m < MIN_ROWS {
        return Err(Error::Precondition(format!("need at least {MIN_ROWS} rows, got {m}")));
    }
    let budget = (m as f64).log2().ceil() as usize;
    let min_leaf = (m as f64).sqrt().ceil() as usize;
    let sorted = train.sorted_rows();
    let mut in_leaf = vec![false; m];
    let root = LeafStats {
        rows: (0..m as u32).collect(),
        pos: train.labels().iter().filter(|&&y| y == Label::Pos).count(),
    };
    let mut leaves = vec![root];
    let mut pending: Vec<Option<SplitChoice>> = vec![best_split(train, &sorted, &leaves[0], min_leaf, &mut in_leaf)];
    while leaves.len() < budget {
        // best-first: expand the leaf whose split gains the most
        let pick = pending
            .iter()
            .enumerate()
            .filter_map(|(k, s)| s.as_ref().map(|s| (k, s.gain)))
            .fold(None, |acc: Option<(usize, f64)>, (k, g)| match acc {
                Some((_, bg)) if bg >= g => acc,
                _ => Some((k, g)),
            });
        let Some((k, _)) = pick else { break };
        let split = pending[k].take().expect("picked leaf has a split");
        let count = |rows: &[u32]| rows.iter().filter(|&&i| train.labels()[i as usize] == Label::Pos).count();
        let left = LeafStats {
            pos: count(&split.left),
            rows: split.left,
        };
        let right = LeafStats {
            pos: count(&split.right),
            rows: split.right,
        };
        pending[k] = best_split(train, &sorted, &left, min_leaf, &mut in_leaf);
        pending.push(best_split(train, &sorted, &right, min_leaf, &mut in_leaf));
        leaves[k] = left;
        leaves.push(right);
    }
    let posts: Vec<f64> = leaves.iter().map(LeafStats::posterior).collect();
    let eta_min = posts.iter().copied().fold(f64::INFINITY, f64::min);
    let eta_max = posts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let eta_c_avg = leaves.iter().map(|l| l.pos as f64).sum::<f64>() / m as f64;
    Ok(PosteriorRange {
        eta_min,
        eta_max,
        eta_c_avg,
        leaves: leaves.len(),
    })
}

/// `√(η_min·(1 − η_max))`, clamped to `[0, 1/2 − 1e−6]`.
pub fn estimate_sln_rate(eta_min: f64, eta_max: f64) -> Result<f64> {
    if !(0.0 <= eta_min && eta_min <= eta_max && eta_max <= 1.0) {
        return Err(Error::Precondition(format!(
            "invalid posterior range [{eta_min}, {eta_max}]"
        )));
    }
    Ok((eta_min * (1.0 - eta_max)).sqrt().clamp(0.0, P_HAT_MAX))
}

/// `α₀ = logit(η_c) / logit(η_t)` capped to `[1, 8]`, where `η_t` is given.
pub fn alpha0_from_posteriors(eta_c: f64, eta_t: f64) -> f64 {
    let (lc, lt) = (logit(eta_c), logit(eta_t));
    if lc == 0.0 || !lc.is_finite() {
        if lc == 0.0 {
            log::warn!("average posterior is 1/2; defaulting alpha0 to 1");
        }
        return ALPHA0_MIN;
    }
    if !is_bayes_blunting(eta_c, eta_t) {
        log::warn!("estimated twist ({eta_c} -> {eta_t}) is not Bayes blunting; alpha0 is outside the heuristic's scope");
    }
    let a = lc / lt;
    if a.is_nan() {
        ALPHA0_MAX
    } else {
        a.clamp(ALPHA0_MIN, ALPHA0_MAX)
    }
}

/// α₀ for symmetric label noise `p_hat` on the average posterior `eta_c_avg`.
pub fn estimate_alpha0(p_hat: f64, eta_c_avg: f64) -> Result<f64> {
    if !(0.0..0.5).contains(&p_hat) {
        return Err(Error::Domain {
            what: "p_hat",
            value: p_hat,
            domain: "[0, 1/2)",
        });
    }
    if !(eta_c_avg > 0.0 && eta_c_avg < 1.0) {
        return Err(Error::Domain {
            what: "eta_c_avg",
            value: eta_c_avg,
            domain: "(0, 1)",
        });
    }
    Ok(alpha0_from_posteriors(eta_c_avg, sln_twist_posterior(eta_c_avg, p_hat)))
}

/// Full tree-based pipeline on a training split.
pub fn estimate_noise(train: &Dataset) -> Result<NoiseEstimate> {
    let r = estimate_posterior_range(train)?;
    let p_hat = estimate_sln_rate(r.eta_min, r.eta_max)?;
    let alpha0 = if r.eta_c_avg > 0.0 && r.eta_c_avg < 1.0 {
        estimate_alpha0(p_hat, r.eta_c_avg)?
    } else {
        log::warn!("single-class training data; defaulting alpha0 to 1");
        ALPHA0_MIN
    };
    Ok(NoiseEstimate {
        eta_min: r.eta_min,
        eta_max: r.eta_max,
        p_hat,
        eta_c_avg: r.eta_c_avg,
        alpha0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionEstimate {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub p_hat: f64,
    pub eta_c_hat: f64,
    pub eta_t_hat: f64,
    pub alpha0: f64,
    /// Number of flip-rate terms dropped because their denominator was zero.
    pub dropped_terms: usize,
}

/// Oracle variant: needs clean validation labels. Flip rate
/// `avg(FP/(TP+FP), FN/(FN+TN))`, `η_c = (FN+TP)/N`, `η_t = (FP+TP)/N`.
pub fn estimate_from_confusion(predictions: &[Label], clean: &[Label]) -> Result<ConfusionEstimate> {
    if predictions.len() != clean.len() || clean.is_empty() {
        return Err(Error::Precondition(format!(
            "{} predictions for {} validation labels",
            predictions.len(),
            clean.len()
        )));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&p, &y) in predictions.iter().zip(clean) {
        match (p, y) {
            (Label::Pos, Label::Pos) => tp += 1,
            (Label::Pos, Label::Neg) => fp += 1,
            (Label::Neg, Label::Pos) => fn_ += 1,
            (Label::Neg, Label::Neg) => tn += 1,
        }
    }
    let mut terms = Vec::new();
    let mut dropped_terms = 0;
    for (num, den) in [(fp, tp + fp), (fn_, fn_ + tn)] {
        if den == 0 {
            log::warn!("empty confusion cells; dropping one flip-rate term");
            dropped_terms += 1;
        } else {
            terms.push(num as f64 / den as f64);
        }
    }
    let p_hat = if terms.is_empty() {
        0.0
    } else {
        terms.iter().sum::<f64>() / terms.len() as f64
    };
    let n = clean.len() as f64;
    let eta_c_hat = (fn_ + tp) as f64 / n;
    let eta_t_hat = (fp + tp) as f64 / n;
    Ok(ConfusionEstimate {
        tp,
        fp,
        fn_,
        tn,
        p_hat,
        eta_c_hat,
        eta_t_hat,
        alpha0: alpha0_from_posteriors(eta_c_hat, eta_t_hat),
        dropped_terms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_xd6, Column, Schema};
    use crate::losses::{bayes_tilted_estimate, AlphaParam};
    use crate::twisters::apply_class_noise;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sln_rate_examples() {
        assert!((estimate_sln_rate(0.1, 0.9).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(estimate_sln_rate(0.0, 1.0).unwrap(), 0.0);
        assert!((estimate_sln_rate(0.3, 0.6).unwrap() - 0.12f64.sqrt()).abs() < 1e-15);
        assert!((estimate_sln_rate(0.3, 0.6).unwrap() - 0.3464).abs() < 1e-4);
        assert_eq!(estimate_sln_rate(0.5, 0.5).unwrap(), P_HAT_MAX);
        assert!(estimate_sln_rate(0.6, 0.5).is_err());
    }

    #[test]
    fn alpha0_examples() {
        assert_eq!(estimate_alpha0(0.0, 0.8).unwrap(), 1.0);
        let a = estimate_alpha0(0.3, 0.9).unwrap();
        // η_t = 0.9·0.4 + 0.3 = 0.66
        let expect = logit(0.9) / logit(0.66);
        assert!((a - expect).abs() < 1e-12);
        assert!((a - 3.31).abs() < 0.01);
        // the chosen α₀ untwists the twisted posterior back to η_c
        let t = bayes_tilted_estimate(&AlphaParam::new(a).unwrap(), 0.66).unwrap().point().unwrap();
        assert!((t - 0.9).abs() < 1e-9);
        assert_eq!(estimate_alpha0(0.5 - 1e-9, 0.9).unwrap(), ALPHA0_MAX);
        assert_eq!(estimate_alpha0(0.2, 0.5).unwrap(), 1.0);
        assert!(estimate_alpha0(0.5, 0.9).is_err());
        assert!(estimate_alpha0(0.1, 1.0).is_err());
    }

    fn one_feature(x: Vec<f64>, y: Vec<Label>) -> Dataset {
        let schema = Schema::new(vec![Column {
            name: "x".into(),
            kind: ColumnKind::Numeric,
        }]);
        Dataset::new(schema, x, y).unwrap()
    }

    #[test]
    fn pure_leaves_give_full_range_and_unit_alpha() {
        let x: Vec<f64> = (0..200).map(f64::from).collect();
        let y = (0..200).map(|i| if i < 80 { Label::Neg } else { Label::Pos }).collect();
        let ds = one_feature(x, y);
        let r = estimate_posterior_range(&ds).unwrap();
        assert_eq!((r.eta_min, r.eta_max), (0.0, 1.0));
        assert!(r.leaves <= 8);
        let est = estimate_noise(&ds).unwrap();
        assert_eq!(est.p_hat, 0.0);
        assert_eq!(est.alpha0, 1.0);
    }

    #[test]
    fn independent_labels_give_flat_posteriors() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let base = synth_xd6(100_000, 17);
        let y = (0..base.m()).map(|_| if rng.gen_bool(0.5) { Label::Pos } else { Label::Neg }).collect();
        let ds = base.with_labels(y).unwrap();
        let r = estimate_posterior_range(&ds).unwrap();
        assert!((r.eta_min - 0.5).abs() <= 0.1 && (r.eta_max - 0.5).abs() <= 0.1, "{r:?}");
    }

    #[test]
    fn single_class_is_degenerate() {
        let ds = one_feature((0..20).map(f64::from).collect(), vec![Label::Pos; 20]);
        let r = estimate_posterior_range(&ds).unwrap();
        assert_eq!((r.eta_min, r.eta_max, r.eta_c_avg), (1.0, 1.0, 1.0));
        assert_eq!(estimate_noise(&ds).unwrap().alpha0, 1.0);
        let small = one_feature(vec![0.0; 5], vec![Label::Pos; 5]);
        assert!(estimate_posterior_range(&small).is_err());
    }

    #[test]
    fn xd6_with_label_noise() {
        let clean = synth_xd6(681, 23);
        let noisy = apply_class_noise(&clean, 0.15, &mut ChaCha8Rng::seed_from_u64(23)).unwrap();
        let est = estimate_noise(&noisy).unwrap();
        assert!((est.p_hat - 0.15).abs() <= 0.07, "{est:?}");
        assert!(est.alpha0 > 1.0);
    }

    #[test]
    fn confusion_examples() {
        use Label::{Neg, Pos};
        let clean = [Pos, Pos, Neg, Neg, Pos];
        let perfect = estimate_from_confusion(&clean, &clean).unwrap();
        assert_eq!(perfect.p_hat, 0.0);
        assert_eq!(perfect.alpha0, 1.0);

        let mut preds = Vec::new();
        let mut truth = Vec::new();
        for (p, y, n) in [(Pos, Pos, 35), (Pos, Neg, 15), (Neg, Pos, 15), (Neg, Neg, 35)] {
            preds.extend(std::iter::repeat(p).take(n));
            truth.extend(std::iter::repeat(y).take(n));
        }
        let c = estimate_from_confusion(&preds, &truth).unwrap();
        assert!((c.p_hat - 0.3).abs() < 1e-15);
        assert_eq!((c.tp, c.fp, c.fn_, c.tn), (35, 15, 15, 35));

        let all_pos = estimate_from_confusion(&[Pos; 5], &clean).unwrap();
        assert_eq!(all_pos.dropped_terms, 1);
        assert!((all_pos.p_hat - 0.4).abs() < 1e-15);
        assert!(estimate_from_confusion(&[Pos], &clean).is_err());
    }

    proptest! {
        #[test]
        fn alpha0_is_monotone_and_capped(eta in 0.51..0.99f64, p1 in 0.0..0.49f64, p2 in 0.0..0.49f64) {
            let (lo, hi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
            let a_lo = estimate_alpha0(lo, eta).unwrap();
            let a_hi = estimate_alpha0(hi, eta).unwrap();
            prop_assert!(a_lo <= a_hi + 1e-12);
            prop_assert!((ALPHA0_MIN..=ALPHA0_MAX).contains(&a_lo));
            prop_assert!((ALPHA0_MIN..=ALPHA0_MAX).contains(&a_hi));
        }

        #[test]
        fn alpha0_in_range_for_any_posterior(eta in 0.01..0.99f64, p in 0.0..0.4999f64) {
            let a = estimate_alpha0(p, eta).unwrap();
            prop_assert!((ALPHA0_MIN..=ALPHA0_MAX).contains(&a));
        }
    }
}
