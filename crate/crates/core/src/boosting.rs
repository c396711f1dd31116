//! PILBoost and the AdaBoost baseline, with per-iteration diagnostics and the
//! surrogate-risk convergence certificate.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Label};
use crate::error::{Error, Result};
use crate::links::{Link, SurrogateEval};
use crate::losses::AlphaParam;
use crate::math::quantile;
use crate::trees::{fit_tree, Tree, WeightedSample};

/// Finite-difference step for `F′`.
pub const FD_STEP: f64 = 1e-5;
/// Step of the second difference used for the curvature bound `F★`.
const CURVATURE_STEP: f64 = 5e-3;
const CURVATURE_POINTS: usize = 4001;
const EARLY_STOP_FRACTION: f64 = 1e-9;
const ADABOOST_DELTA: f64 = 1e-10;
/// Quantile of the final margins used as the default certificate target.
pub const DEFAULT_Z_STAR_QUANTILE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Algorithm {
    AdaBoost,
    /// PILBoost with the α pseudo-inverse link (sigmoid at α = 1).
    PilBoost { alpha: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostConfig {
    pub iterations: usize,
    pub a_f: f64,
    pub algorithm: Algorithm,
    pub tree_depth: usize,
    /// Output bound `M` of the weak learner.
    pub max_abs: f64,
    /// Weak learners here are deterministic; the seed is carried for
    /// reproducibility records and randomized learners.
    pub rng_seed: u64,
    /// Record surrogate risk, edge discrepancy and O1/O2 checks.
    pub diagnostics: bool,
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            a_f: 8.0,
            algorithm: Algorithm::PilBoost { alpha: 2.0 },
            tree_depth: 3,
            max_abs: 1.0,
            rng_seed: 0,
            diagnostics: true,
        }
    }
}

impl BoostConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if !(self.a_f > 0.0 && self.a_f.is_finite()) {
            return Err(Error::Config(format!("a_f must be positive, got {}", self.a_f)));
        }
        if !(self.max_abs > 0.0 && self.max_abs.is_finite()) {
            return Err(Error::Config(format!("M must be positive, got {}", self.max_abs)));
        }
        if let Algorithm::PilBoost { alpha } = self.algorithm {
            if !(alpha >= 1.0 && alpha.is_finite()) {
                return Err(Error::Config(format!("PILBoost needs a finite alpha >= 1, got {alpha}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    members: Vec<(Tree, f64)>,
    /// `None` for AdaBoost (exponential reweighting).
    link: Option<Link>,
}

impl Ensemble {
    pub fn new(link: Option<Link>) -> Self {
        Self {
            members: Vec::new(),
            link,
        }
    }

    pub fn push(&mut self, tree: Tree, beta: f64) {
        self.members.push((tree, beta));
    }

    pub fn members(&self) -> &[(Tree, f64)] {
        &self.members
    }

    pub fn link(&self) -> Option<&Link> {
        self.link.as_ref()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// `H(x) = Σⱼ βⱼ hⱼ(x)`.
    pub fn score(&self, row: &[f64]) -> f64 {
        self.members.iter().map(|(t, b)| b * t.predict(row)).sum()
    }

    pub fn scores(&self, ds: &Dataset) -> Vec<f64> {
        (0..ds.m()).map(|i| self.score(ds.row(i))).collect()
    }

    /// Sign of `H`; a zero score is classified positive.
    pub fn classify(&self, row: &[f64]) -> Label {
        if self.score(row) >= 0.0 {
            Label::Pos
        } else {
            Label::Neg
        }
    }

    pub fn accuracy(&self, ds: &Dataset) -> f64 {
        if ds.m() == 0 {
            return f64::NAN;
        }
        let hits = (0..ds.m()).filter(|&i| self.classify(ds.row(i)) == ds.labels()[i]).count();
        hits as f64 / ds.m() as f64
    }
}

/// The surrogate `F` whose empirical risk the diagnostics track.
#[derive(Debug, Clone)]
pub enum Surrogate {
    Numeric(SurrogateEval),
    /// `e^{−z}`, AdaBoost's surrogate.
    Exponential,
}

impl Surrogate {
    pub fn for_algorithm(alg: Algorithm) -> Result<Self> {
        match alg {
            Algorithm::AdaBoost => Ok(Surrogate::Exponential),
            Algorithm::PilBoost { alpha } => Ok(Surrogate::Numeric(SurrogateEval::for_alpha(AlphaParam::new(alpha)?)?)),
        }
    }

    pub fn value(&self, z: f64) -> f64 {
        match self {
            Surrogate::Numeric(f) => f.value(z),
            Surrogate::Exponential => (-z).min(700.0).exp(),
        }
    }

    /// `F′(z)`, central differences with step [`FD_STEP`].
    pub fn derivative(&self, z: f64) -> f64 {
        match self {
            Surrogate::Numeric(f) => f.derivative(z, FD_STEP),
            Surrogate::Exponential => -(-z).min(700.0).exp(),
        }
    }

    /// `sup F″` estimated by second differences; `None` when unbounded.
    pub fn curvature_bound(&self) -> Option<f64> {
        match self {
            Surrogate::Numeric(f) => {
                let span = match f.loss().kind {
                    crate::losses::LossKind::Alpha(a) if a.alpha() > 1.0 => a.conjugate() + 1.0,
                    _ => 10.0,
                };
                Some(f.curvature_sup(-span, span, CURVATURE_POINTS, CURVATURE_STEP))
            }
            Surrogate::Exponential => None,
        }
    }

    /// `inf F`, attained (or approached) for large positive arguments.
    pub fn infimum(&self) -> f64 {
        match self {
            Surrogate::Numeric(f) => f.value(1e3),
            Surrogate::Exponential => 0.0,
        }
    }

    pub fn empirical_risk(&self, margins: &[f64]) -> f64 {
        margins.iter().map(|&z| self.value(z)).sum::<f64>() / margins.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `η = (1/m)·Σ wᵢyᵢh(xᵢ)` on the raw weights.
    pub edge: f64,
    /// `η̃ = m·η / 1ᵀw`.
    pub normalized_edge: f64,
    /// `w̃ = 1ᵀw / m`.
    pub total_weight: f64,
    pub beta: f64,
    pub min_weight: f64,
    pub max_weight: f64,
    /// `max |h(xᵢ)|` of this round's tree.
    pub weak_bound: f64,
    pub wla_violation: bool,
    pub risk_before: Option<f64>,
    pub risk_after: Option<f64>,
    pub edge_discrepancy: Option<f64>,
    /// `Δ / η`, the smallest ζ for which O1 holds at this iteration.
    pub zeta: Option<f64>,
    /// `|a_f·F★·M²/(1−ζ) − 1|`, the smallest π for which O2 holds.
    pub pi: Option<f64>,
    pub o1: bool,
    pub o2: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostDiagnostics {
    pub algorithm: Algorithm,
    pub a_f: f64,
    pub max_abs: f64,
    pub m: usize,
    /// `F(0)`.
    pub risk_at_zero: Option<f64>,
    /// `sup F″`.
    pub f_star: Option<f64>,
    pub records: Vec<IterationRecord>,
    pub early_stopped: bool,
    pub stop_reason: Option<String>,
    /// Training margins `yᵢ·H(xᵢ)` of the final ensemble.
    pub final_margins: Vec<f64>,
}

impl BoostDiagnostics {
    pub fn z_star_default(&self) -> f64 {
        if self.final_margins.is_empty() {
            0.0
        } else {
            quantile(&self.final_margins, DEFAULT_Z_STAR_QUANTILE)
        }
    }

    pub fn max_zeta(&self) -> Option<f64> {
        self.records.iter().filter_map(|r| r.zeta).reduce(f64::max)
    }

    /// Smallest `|η̃| / M` over the run.
    pub fn min_gamma(&self) -> Option<f64> {
        self.records
            .iter()
            .map(|r| r.normalized_edge.abs() / self.max_abs)
            .reduce(f64::min)
    }
}

/// `Δ = |E[y·h·(−F′(y·H))] − η|`, the edge under the exact weights `−F′` vs
/// the edge `η` computed with the link's weights.
pub fn edge_discrepancy(ds: &Dataset, scores: &[f64], h: &[f64], eta: f64, surrogate: &Surrogate) -> f64 {
    let m = ds.m();
    let exact: f64 = (0..m)
        .map(|i| {
            let y = ds.y(i);
            y * h[i] * -surrogate.derivative(y * scores[i])
        })
        .sum::<f64>()
        / m as f64;
    (exact - eta).abs()
}

fn margins(ds: &Dataset, scores: &[f64]) -> Vec<f64> {
    (0..ds.m()).map(|i| ds.y(i) * scores[i]).collect()
}

struct Tracker {
    surrogate: Option<Surrogate>,
    f_star: Option<f64>,
    diag: BoostDiagnostics,
}

impl Tracker {
    fn new(cfg: &BoostConfig, m: usize) -> Result<Self> {
        let surrogate = if cfg.diagnostics {
            Some(Surrogate::for_algorithm(cfg.algorithm)?)
        } else {
            None
        };
        let f_star = surrogate.as_ref().and_then(Surrogate::curvature_bound);
        Ok(Self {
            diag: BoostDiagnostics {
                algorithm: cfg.algorithm,
                a_f: cfg.a_f,
                max_abs: cfg.max_abs,
                m,
                risk_at_zero: surrogate.as_ref().map(|s| s.value(0.0)),
                f_star,
                records: Vec::new(),
                early_stopped: false,
                stop_reason: None,
                final_margins: Vec::new(),
            },
            surrogate,
            f_star,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn record(
        &mut self,
        ds: &Dataset,
        scores_before: &[f64],
        h: &[f64],
        w: &[f64],
        edge: f64,
        normalized_edge: f64,
        beta: f64,
        a_f: f64,
    ) {
        let m = ds.m() as f64;
        let total: f64 = w.iter().sum();
        let weak_bound = h.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let mut rec = IterationRecord {
            iteration: self.diag.records.len(),
            edge,
            normalized_edge,
            total_weight: total / m,
            beta,
            min_weight: w.iter().copied().fold(f64::INFINITY, f64::min),
            max_weight: w.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            weak_bound,
            wla_violation: edge == 0.0,
            risk_before: None,
            risk_after: None,
            edge_discrepancy: None,
            zeta: None,
            pi: None,
            o1: false,
            o2: false,
        };
        if let Some(s) = &self.surrogate {
            let before = margins(ds, scores_before);
            let after: Vec<f64> = before
                .iter()
                .zip(h)
                .enumerate()
                .map(|(i, (z, hi))| z + beta * ds.y(i) * hi)
                .collect();
            rec.risk_before = Some(s.empirical_risk(&before));
            rec.risk_after = Some(s.empirical_risk(&after));
            let delta = edge_discrepancy(ds, scores_before, h, edge, s);
            rec.edge_discrepancy = Some(delta);
            if edge > 0.0 {
                let zeta = delta / edge;
                rec.zeta = Some(zeta);
                rec.o1 = zeta < 1.0;
                if let Some(fs) = self.f_star {
                    let pi = (a_f * fs * weak_bound * weak_bound / (1.0 - zeta) - 1.0).abs();
                    rec.pi = Some(pi);
                    rec.o2 = rec.o1 && pi < 1.0;
                }
            }
        }
        self.diag.records.push(rec);
    }

    fn finish(mut self, ds: &Dataset, scores: &[f64], keep: bool) -> BoostDiagnostics {
        if keep {
            self.diag.final_margins = margins(ds, scores);
        }
        self.diag
    }
}

fn check_inputs(ds: &Dataset, cfg: &BoostConfig) -> Result<()> {
    cfg.validate()?;
    if ds.m() < 2 {
        return Err(Error::Precondition("boosting needs at least 2 training rows".into()));
    }
    Ok(())
}

/// PILBoost: weights `f̃(−yH)`, edge `η = (1/m)Σ wᵢyᵢhⱼ(xᵢ)`, new member with
/// coefficient `a_f·η` every round.
pub fn pilboost_fit(ds: &Dataset, cfg: &BoostConfig) -> Result<(Ensemble, BoostDiagnostics)> {
    check_inputs(ds, cfg)?;
    let Algorithm::PilBoost { alpha } = cfg.algorithm else {
        return Err(Error::Config("pilboost_fit called with a non-PILBoost config".into()));
    };
    let link = Link::for_alpha(AlphaParam::for_training(alpha)?)?;
    let m = ds.m();
    let mut ens = Ensemble::new(Some(link));
    let mut tracker = Tracker::new(cfg, m)?;
    let mut scores = vec![0.0; m];
    let mut w = vec![0.0; m];
    let mut h = vec![0.0; m];
    for _ in 0..cfg.iterations {
        for i in 0..m {
            w[i] = link.eval(-ds.y(i) * scores[i]);
        }
        let total: f64 = w.iter().sum();
        if total < EARLY_STOP_FRACTION * m as f64 {
            tracker.diag.early_stopped = true;
            tracker.diag.stop_reason = Some("all weights saturated to zero".into());
            break;
        }
        let tree = fit_tree(&WeightedSample::new(ds, &w)?, cfg.tree_depth, cfg.max_abs)?;
        for i in 0..m {
            h[i] = tree.predict(ds.row(i));
        }
        let edge = (0..m).map(|i| w[i] * ds.y(i) * h[i]).sum::<f64>() / m as f64;
        let beta = cfg.a_f * edge;
        if edge == 0.0 {
            log::debug!("weak learner returned a zero edge");
        }
        if cfg.diagnostics {
            tracker.record(ds, &scores, &h, &w, edge, m as f64 * edge / total, beta, cfg.a_f);
        }
        for i in 0..m {
            scores[i] += beta * h[i];
        }
        ens.push(tree, beta);
    }
    let diag = tracker.finish(ds, &scores, cfg.diagnostics);
    Ok((ens, diag))
}

/// AdaBoost with confidence-rated trees: weights `∝ exp(−yH)`,
/// `β = ½·ln((1+η̃)/(1−η̃))` on the weighted correlation `η̃`.
pub fn adaboost_fit(ds: &Dataset, cfg: &BoostConfig) -> Result<(Ensemble, BoostDiagnostics)> {
    check_inputs(ds, cfg)?;
    if cfg.algorithm != Algorithm::AdaBoost {
        return Err(Error::Config("adaboost_fit called with a non-AdaBoost config".into()));
    }
    let m = ds.m();
    let mut ens = Ensemble::new(None);
    let mut tracker = Tracker::new(cfg, m)?;
    let mut scores = vec![0.0; m];
    let mut w = vec![0.0; m];
    let mut h = vec![0.0; m];
    for _ in 0..cfg.iterations {
        // shift by the largest exponent so the largest weight is 1
        let shift = (0..m).map(|i| -ds.y(i) * scores[i]).fold(f64::NEG_INFINITY, f64::max);
        for i in 0..m {
            w[i] = (-ds.y(i) * scores[i] - shift).exp();
        }
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        let tree = fit_tree(&WeightedSample::new(ds, &w)?, cfg.tree_depth, cfg.max_abs)?;
        for i in 0..m {
            h[i] = tree.predict(ds.row(i));
        }
        let corr: f64 = (0..m).map(|i| w[i] * ds.y(i) * h[i]).sum();
        let c = corr.clamp(-1.0 + ADABOOST_DELTA, 1.0 - ADABOOST_DELTA);
        let beta = 0.5 * ((1.0 + c) / (1.0 - c)).ln();
        if cfg.diagnostics {
            // raw exponential weights for the diagnostics, capped against overflow
            let raw: Vec<f64> = (0..m).map(|i| (-ds.y(i) * scores[i]).min(700.0).exp()).collect();
            let edge = (0..m).map(|i| raw[i] * ds.y(i) * h[i]).sum::<f64>() / m as f64;
            tracker.record(ds, &scores, &h, &raw, edge, corr, beta, cfg.a_f);
        }
        for i in 0..m {
            scores[i] += beta * h[i];
        }
        ens.push(tree, beta);
    }
    let diag = tracker.finish(ds, &scores, cfg.diagnostics);
    Ok((ens, diag))
}

/// Dispatches on `cfg.algorithm`.
pub fn fit(ds: &Dataset, cfg: &BoostConfig) -> Result<(Ensemble, BoostDiagnostics)> {
    match cfg.algorithm {
        Algorithm::AdaBoost => adaboost_fit(ds, cfg),
        Algorithm::PilBoost { .. } => pilboost_fit(ds, cfg),
    }
}

/// Inputs of [`convergence_certificate`]; `None` fields fall back to the
/// empirical values recorded in the diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CertificateParams {
    pub gamma: Option<f64>,
    pub zeta: Option<f64>,
    pub pi: Option<f64>,
    pub z_star: Option<f64>,
    pub theta: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCertificate {
    pub z_star: f64,
    pub gamma: f64,
    pub zeta: f64,
    pub pi: f64,
    pub f_star: f64,
    pub q: f64,
    pub risk_at_zero: f64,
    pub risk_at_z_star: f64,
    /// `Σ w̃ₜ²` over all recorded iterations.
    pub cumulative: f64,
    /// `Q·(F(0) − F(z★))`.
    pub threshold: f64,
    pub satisfied: bool,
    /// First iteration whose running `Σ w̃ₜ²` reached the threshold.
    pub crossed_at: Option<usize>,
    /// Whether `E[F(yH)] ≤ F(z★)` (up to 1e−6) at every iteration from the
    /// crossing on; `None` if the threshold was never reached.
    pub risk_bound_held: Option<bool>,
    pub theta: f64,
    pub epsilon: f64,
    /// Iterations required by the margin bound (may be infinite).
    pub margin_iterations_required: f64,
    pub margin_bound_met: bool,
    /// Observed fraction of training margins `≤ θ`.
    pub margin_fraction: f64,
}

pub const RISK_TOLERANCE: f64 = 1e-6;

/// Evaluates both parts of the surrogate-risk / margin convergence statement
/// against a recorded run.
pub fn convergence_certificate(
    diag: &BoostDiagnostics,
    surrogate: &Surrogate,
    params: &CertificateParams,
) -> Result<ConvergenceCertificate> {
    let f_star = diag
        .f_star
        .or_else(|| surrogate.curvature_bound())
        .unwrap_or(f64::INFINITY);
    let gamma = params.gamma.or_else(|| diag.min_gamma()).unwrap_or(0.0);
    let zeta = params.zeta.or_else(|| diag.max_zeta()).unwrap_or(0.0);
    let pi = params
        .pi
        .unwrap_or_else(|| (diag.a_f * f_star * diag.max_abs.powi(2) / (1.0 - zeta) - 1.0).abs());
    let z_star = params.z_star.unwrap_or_else(|| diag.z_star_default());
    if !(0.0..=1.0).contains(&params.epsilon) || params.theta < 0.0 {
        return Err(Error::Precondition("need theta >= 0 and epsilon in [0, 1]".into()));
    }
    let in_range = gamma > 0.0 && (0.0..1.0).contains(&zeta) && (0.0..1.0).contains(&pi) && f_star.is_finite();
    let q = if in_range {
        2.0 * f_star / (gamma * gamma * (1.0 - zeta).powi(2) * (1.0 - pi * pi))
    } else {
        f64::INFINITY
    };
    let f0 = surrogate.value(0.0);
    let fz = surrogate.value(z_star);
    let gap = f0 - fz;
    let threshold = if gap <= 0.0 { 0.0 } else { q * gap };

    let mut cumulative = 0.0;
    let mut crossed_at = None;
    if threshold == 0.0 {
        crossed_at = Some(0);
    }
    for r in &diag.records {
        cumulative += r.total_weight * r.total_weight;
        if crossed_at.is_none() && cumulative >= threshold {
            crossed_at = Some(r.iteration);
        }
    }
    let satisfied = cumulative >= threshold;
    let risk_bound_held = crossed_at.map(|t0| {
        if diag.records.is_empty() {
            f0 <= fz + RISK_TOLERANCE
        } else {
            diag.records[t0.min(diag.records.len() - 1)..]
                .iter()
                .all(|r| r.risk_after.is_some_and(|v| v <= fz + RISK_TOLERANCE))
        }
    });

    let (theta, eps) = (params.theta, params.epsilon);
    let f_eps_theta = (1.0 - eps) * surrogate.infimum() + eps * surrogate.value(theta);
    let link_weight = match diag.algorithm {
        Algorithm::PilBoost { alpha } => Link::for_alpha(AlphaParam::new(alpha)?)?.eval(-theta),
        Algorithm::AdaBoost => (theta).min(700.0).exp(),
    };
    let numerator = f0 - f_eps_theta;
    let margin_iterations_required = if numerator <= 0.0 {
        0.0
    } else if eps == 0.0 || link_weight == 0.0 {
        f64::INFINITY
    } else {
        q * numerator / (eps * eps * link_weight * link_weight)
    };
    let margin_fraction = if diag.final_margins.is_empty() {
        f64::NAN
    } else {
        diag.final_margins.iter().filter(|&&z| z <= theta).count() as f64 / diag.final_margins.len() as f64
    };
    Ok(ConvergenceCertificate {
        z_star,
        gamma,
        zeta,
        pi,
        f_star,
        q,
        risk_at_zero: f0,
        risk_at_z_star: fz,
        cumulative,
        threshold,
        satisfied,
        crossed_at,
        risk_bound_held,
        theta,
        epsilon: eps,
        margin_iterations_required,
        margin_bound_met: diag.records.len() as f64 >= margin_iterations_required,
        margin_fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_xd6, Column, ColumnKind, Schema};
    use crate::math::sigmoid;
    use proptest::prelude::*;

    fn stump_data() -> Dataset {
        let schema = Schema::new(vec![Column {
            name: "x".into(),
            kind: ColumnKind::Numeric,
        }]);
        let labels = [-1.0, -1.0, 1.0, 1.0].iter().map(|&s| Label::from_sign(s)).collect();
        Dataset::new(schema, vec![0.1, 0.4, 0.6, 0.9], labels).unwrap()
    }

    fn pil(alpha: f64, a_f: f64, t: usize, depth: usize) -> BoostConfig {
        BoostConfig {
            iterations: t,
            a_f,
            algorithm: Algorithm::PilBoost { alpha },
            tree_depth: depth,
            max_abs: 1.0,
            rng_seed: 0,
            diagnostics: true,
        }
    }

    #[test]
    fn one_round_hand_trace() {
        // all weights f̃(0) = 1/2, stump leaves ±1, η = (1/4)·4·(1/2) = 1/2
        let ds = stump_data();
        let (ens, diag) = pilboost_fit(&ds, &pil(2.0, 1.0, 1, 1)).unwrap();
        assert_eq!(ens.len(), 1);
        assert_eq!(ens.members()[0].1, 0.5);
        assert_eq!(ens.accuracy(&ds), 1.0);
        let r = &diag.records[0];
        assert_eq!(r.edge, 0.5);
        assert_eq!(r.total_weight, 0.5);
        assert_eq!(r.normalized_edge, 1.0);
    }

    #[test]
    fn identical_labels_fit_in_one_round() {
        let ds = stump_data().with_labels(vec![Label::Neg; 4]).unwrap();
        let (ens, _) = pilboost_fit(&ds, &pil(3.0, 1.0, 1, 2)).unwrap();
        assert_eq!(ens.accuracy(&ds), 1.0);
        let (ens, _) = adaboost_fit(&ds, &ada(1, 1)).unwrap();
        assert_eq!(ens.accuracy(&ds), 1.0);
    }

    fn ada(t: usize, depth: usize) -> BoostConfig {
        BoostConfig {
            algorithm: Algorithm::AdaBoost,
            iterations: t,
            tree_depth: depth,
            ..BoostConfig::default()
        }
    }

    #[test]
    fn adaboost_separable_and_clamped() {
        let ds = stump_data();
        let (ens, diag) = adaboost_fit(&ds, &ada(1, 1)).unwrap();
        assert_eq!(ens.accuracy(&ds), 1.0);
        let bound = 0.5 * ((2.0 - ADABOOST_DELTA) / ADABOOST_DELTA).ln();
        assert!((ens.members()[0].1 - bound).abs() < 1e-6);
        assert!(diag.f_star.is_none());
    }

    #[test]
    fn adaboost_on_coin_flips_is_near_chance() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let full = synth_xd6(1400, 21);
        let labels: Vec<Label> = (0..full.m()).map(|_| if rng.gen_bool(0.5) { Label::Pos } else { Label::Neg }).collect();
        let noisy = full.with_labels(labels).unwrap();
        let train = noisy.subset(&(0..1000).collect::<Vec<_>>());
        let test = noisy.subset(&(1000..1400).collect::<Vec<_>>());
        let mut cfg = ada(50, 1);
        cfg.diagnostics = false;
        let (ens, _) = adaboost_fit(&train, &cfg).unwrap();
        assert!((ens.accuracy(&test) - 0.5).abs() <= 0.1);
    }

    #[test]
    fn sigmoid_link_reproduces_logistic_weights() {
        let ds = synth_xd6(200, 4);
        let (ens, diag) = pilboost_fit(&ds, &pil(1.0, 2.0, 5, 2)).unwrap();
        // rebuild the weights of the last round from the first four members
        let mut partial = Ensemble::new(None);
        for (t, b) in &ens.members()[..4] {
            partial.push(t.clone(), *b);
        }
        let w: Vec<f64> = (0..ds.m())
            .map(|i| 1.0 / (1.0 + (ds.y(i) * partial.score(ds.row(i))).exp()))
            .collect();
        let total: f64 = w.iter().sum();
        assert!((diag.records[4].total_weight - total / ds.m() as f64).abs() < 1e-12);
        for (i, wi) in w.iter().enumerate() {
            assert!((wi - sigmoid(-ds.y(i) * partial.score(ds.row(i)))).abs() < 1e-15);
        }
        // exact link: only finite-difference error
        for r in &diag.records {
            assert!(r.edge_discrepancy.unwrap() <= 1e-4, "{r:?}");
        }
    }

    #[test]
    fn zero_tree_has_zero_discrepancy() {
        let ds = synth_xd6(50, 1);
        let s = Surrogate::for_algorithm(Algorithm::PilBoost { alpha: 3.0 }).unwrap();
        let scores: Vec<f64> = (0..50).map(|i| (i as f64 - 25.0) / 10.0).collect();
        assert_eq!(edge_discrepancy(&ds, &scores, &[0.0; 50], 0.0, &s), 0.0);
    }

    #[test]
    fn zero_beta_member_is_identity() {
        let ds = synth_xd6(80, 2);
        let (mut ens, _) = pilboost_fit(&ds, &pil(2.0, 4.0, 3, 3)).unwrap();
        let before = ens.scores(&ds);
        let extra = ens.members()[0].0.clone();
        ens.push(extra, 0.0);
        assert_eq!(before, ens.scores(&ds));
    }

    #[test]
    fn weights_stay_in_unit_interval_and_runs_are_deterministic() {
        let ds = synth_xd6(300, 9);
        let cfg = pil(4.0, 8.0, 40, 3);
        let (e1, d1) = pilboost_fit(&ds, &cfg).unwrap();
        let (e2, d2) = pilboost_fit(&ds, &cfg).unwrap();
        assert_eq!(e1, e2);
        assert_eq!(d1, d2);
        for r in &d1.records {
            assert!(r.min_weight >= 0.0 && r.max_weight <= 1.0);
            assert!((0.0..=1.0).contains(&r.total_weight));
        }
    }

    #[test]
    fn clean_xd6_is_fit_exactly() {
        let ds = synth_xd6(400, 12);
        let mut cfg = pil(2.0, 8.0, 300, 3);
        cfg.diagnostics = false;
        let (ens, diag) = pilboost_fit(&ds, &cfg).unwrap();
        assert_eq!(ens.accuracy(&ds), 1.0);
        assert!(diag.records.is_empty());
    }

    #[test]
    fn saturated_weights_stop_early() {
        // β = 8·(1/2) = 4 ≥ α′ = 2 puts every margin past saturation
        let ds = stump_data();
        let (ens, diag) = pilboost_fit(&ds, &pil(2.0, 8.0, 10, 1)).unwrap();
        assert_eq!(ens.len(), 1);
        assert!(diag.early_stopped);
        assert_eq!(diag.records.len(), 1);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let ds = stump_data();
        assert!(pilboost_fit(&ds, &pil(0.5, 1.0, 1, 1)).is_err());
        assert!(pilboost_fit(&ds, &pil(2.0, 0.0, 1, 1)).is_err());
        assert!(pilboost_fit(&ds, &pil(2.0, 1.0, 0, 1)).is_err());
        assert!(pilboost_fit(&ds, &ada(1, 1)).is_err());
    }

    #[test]
    fn certificate_edge_cases() {
        let ds = stump_data();
        let (_, mut diag) = pilboost_fit(&ds, &pil(2.0, 1.0, 1, 1)).unwrap();
        let s = Surrogate::for_algorithm(diag.algorithm).unwrap();
        diag.records.clear();
        let p = CertificateParams {
            gamma: Some(0.5),
            zeta: Some(0.1),
            pi: Some(0.2),
            z_star: Some(1.0),
            theta: 0.0,
            epsilon: 1.0,
        };
        let c = convergence_certificate(&diag, &s, &p).unwrap();
        assert_eq!(c.cumulative, 0.0);
        assert!(!c.satisfied);
        // F(z★) ≥ F(0): trivially satisfied
        let c = convergence_certificate(&diag, &s, &CertificateParams { z_star: Some(-0.5), ..p }).unwrap();
        assert!(c.satisfied);
        // θ = 0, ε = 1: the margin bound needs no iterations
        assert_eq!(c.margin_iterations_required, 0.0);
        assert!(c.margin_bound_met);
        assert!(convergence_certificate(&diag, &s, &CertificateParams { epsilon: 2.0, ..p }).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn descent_whenever_o1_and_o2_hold(seed in 0u64..500, alpha in 1.5..6.0f64) {
            let ds = synth_xd6(200, seed);
            let (_, diag) = pilboost_fit(&ds, &pil(alpha, 1.0, 30, 3)).unwrap();
            for r in &diag.records {
                if r.o1 && r.o2 {
                    prop_assert!(r.risk_after.unwrap() <= r.risk_before.unwrap() + 1e-9, "{:?}", r);
                }
            }
        }
    }
}
