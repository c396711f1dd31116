//! Pointwise loss theory for class-probability estimation.
//!
//! A CPE loss is a pair of partial losses `ℓ₁, ℓ₋₁ : [0,1] → ℝ≥0`; its pointwise
//! risk is `L(u, v) = v·ℓ₁(u) + (1−v)·ℓ₋₁(u)`. This module provides the α-loss
//! family (including the negative-α extension), the Bayes tilted estimate that
//! minimizes the pointwise risk, the pointwise untwisting hyperparameter α*,
//! and population-level cross-entropy / KL metrics over discrete scenarios.

use std::fmt;
use std::sync::Arc;

use crate::data::Label;
use crate::error::{check_unit, Error, Result};
use crate::math::{clamp_prob, logit, sigmoid, PROB_EPS};

/// Validated α hyperparameter together with its Hölder conjugate α′,
/// `1/α′ + 1/α = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaParam {
    alpha: f64,
    conjugate: f64,
}

impl AlphaParam {
    /// Any non-NaN value, including ±∞ and 0. Use [`AlphaParam::for_training`]
    /// where α = 0 must be excluded.
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha.is_nan() {
            return Err(Error::Unsupported("alpha is NaN".into()));
        }
        let conjugate = if alpha == 1.0 {
            f64::INFINITY
        } else if alpha.is_infinite() {
            1.0
        } else {
            alpha / (alpha - 1.0)
        };
        Ok(Self { alpha, conjugate })
    }

    pub fn for_training(alpha: f64) -> Result<Self> {
        let a = Self::new(alpha)?;
        if a.alpha == 0.0 {
            return Err(Error::Unsupported(
                "alpha = 0 gives an infinite loss and cannot be trained".into(),
            ));
        }
        Ok(a)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// α′ = α/(α−1); ∞ at α = 1 and 1 at α = ±∞.
    pub fn conjugate(&self) -> f64 {
        self.conjugate
    }
}

impl fmt::Display for AlphaParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.alpha)
    }
}

/// Hyperparameter of the focal loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocalSpec {
    gamma: f64,
}

impl FocalSpec {
    pub fn new(gamma: f64) -> Result<Self> {
        if gamma >= 0.0 && gamma.is_finite() {
            Ok(Self { gamma })
        } else {
            Err(Error::Domain {
                what: "gamma",
                value: gamma,
                domain: "[0, ∞)",
            })
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

pub type PartialFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum LossKind {
    Alpha(AlphaParam),
    Focal(FocalSpec),
    /// Brier / square loss, `ℓ₁(u) = (1−u)²`.
    Square,
    Custom { pos: PartialFn, neg: PartialFn },
}

impl fmt::Debug for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossKind::Alpha(a) => write!(f, "Alpha({a})"),
            LossKind::Focal(s) => write!(f, "Focal({})", s.gamma),
            LossKind::Square => f.write_str("Square"),
            LossKind::Custom { .. } => f.write_str("Custom"),
        }
    }
}

/// A CPE loss given by its two partial losses and declared properties.
#[derive(Debug, Clone)]
pub struct LossSpec {
    pub name: String,
    pub kind: LossKind,
    pub symmetric: bool,
    pub differentiable: bool,
}

fn alpha_partial_pos(alpha: f64, u: f64) -> f64 {
    if alpha < 0.0 {
        return alpha_partial_pos(-alpha, 1.0 - u);
    }
    if alpha == 1.0 {
        -u.max(PROB_EPS).ln()
    } else if alpha.is_infinite() {
        1.0 - u
    } else {
        let expo = (alpha - 1.0) / alpha;
        let base = if expo < 0.0 { u.max(PROB_EPS) } else { u };
        alpha / (alpha - 1.0) * (1.0 - base.powf(expo))
    }
}

impl LossSpec {
    pub fn custom(
        name: impl Into<String>,
        pos: impl Fn(f64) -> f64 + Send + Sync + 'static,
        neg: impl Fn(f64) -> f64 + Send + Sync + 'static,
        symmetric: bool,
    ) -> Self {
        Self {
            name: name.into(),
            kind: LossKind::Custom {
                pos: Arc::new(pos),
                neg: Arc::new(neg),
            },
            symmetric,
            differentiable: true,
        }
    }

    pub fn square() -> Self {
        Self {
            name: "square".into(),
            kind: LossKind::Square,
            symmetric: true,
            differentiable: true,
        }
    }

    /// `ℓ₁(u)`, without domain checks. Log-type singularities are clamped at
    /// `u = 1e-12` so the result stays finite.
    pub fn partial_pos(&self, u: f64) -> f64 {
        match &self.kind {
            LossKind::Alpha(a) => alpha_partial_pos(a.alpha, u),
            LossKind::Focal(s) => -(1.0 - u).powf(s.gamma) * u.max(PROB_EPS).ln(),
            LossKind::Square => (1.0 - u) * (1.0 - u),
            LossKind::Custom { pos, .. } => pos(u),
        }
    }

    /// `ℓ₋₁(u)`, without domain checks.
    pub fn partial_neg(&self, u: f64) -> f64 {
        match &self.kind {
            LossKind::Custom { neg, .. } => neg(u),
            LossKind::Square => u * u,
            _ => self.partial_pos(1.0 - u),
        }
    }

    /// Closed-form Bayes tilted estimate where one is known.
    pub fn tilted_closed_form(&self, v: f64) -> Option<f64> {
        match &self.kind {
            LossKind::Alpha(a) => bayes_tilted_estimate(a, v).ok()?.point(),
            LossKind::Square => Some(v),
            _ => None,
        }
    }

    /// Pointwise Bayes risk `L̲(v) = inf_u L(u, v)`, when the tilted estimate
    /// has a closed form.
    pub fn bayes_risk(&self, v: f64) -> Option<f64> {
        if let LossKind::Alpha(a) = &self.kind {
            if a.alpha == 1.0 {
                return Some(binary_entropy(v));
            }
        }
        let t = self.tilted_closed_form(v)?;
        Some(v * self.partial_pos(t) + (1.0 - v) * self.partial_neg(t))
    }
}

/// Partial loss of `spec` for label `y` at prediction `u`.
pub fn partial_loss(spec: &LossSpec, y: Label, u: f64) -> Result<f64> {
    check_unit("u", u)?;
    Ok(match y {
        Label::Pos => spec.partial_pos(u),
        Label::Neg => spec.partial_neg(u),
    })
}

/// The α-loss; α = 1 is the log-loss and α = ∞ the linear loss `1 − u`.
pub fn alpha_loss_spec(a: AlphaParam) -> Result<LossSpec> {
    if a.alpha == 0.0 {
        return Err(Error::Unsupported("the 0-loss is identically infinite".into()));
    }
    Ok(LossSpec {
        name: format!("alpha({})", a.alpha),
        kind: LossKind::Alpha(a),
        symmetric: true,
        differentiable: !a.alpha.is_infinite(),
    })
}

pub fn focal_loss_spec(f: FocalSpec) -> LossSpec {
    LossSpec {
        name: format!("focal({})", f.gamma),
        kind: LossKind::Focal(f),
        symmetric: true,
        differentiable: true,
    }
}

/// `L(u, v) = v·ℓ₁(u) + (1−v)·ℓ₋₁(u)`.
pub fn pointwise_risk(spec: &LossSpec, u: f64, v: f64) -> Result<f64> {
    check_unit("u", u)?;
    check_unit("v", v)?;
    Ok(risk_unchecked(spec, u, v))
}

#[inline]
fn risk_unchecked(spec: &LossSpec, u: f64, v: f64) -> f64 {
    // skip zero-weighted terms so an infinite partial never meets a zero weight
    let mut r = 0.0;
    if v > 0.0 {
        r += v * spec.partial_pos(u);
    }
    if v < 1.0 {
        r += (1.0 - v) * spec.partial_neg(u);
    }
    r
}

/// Value of a Bayes tilted estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tilted {
    Point(f64),
    /// Every `u ∈ [0,1]` minimizes the pointwise risk.
    WholeInterval,
}

impl Tilted {
    pub fn point(self) -> Option<f64> {
        match self {
            Tilted::Point(u) => Some(u),
            Tilted::WholeInterval => None,
        }
    }
}

/// `(t(v), 1 − t(v))` for the α-loss, each computed without cancellation.
fn tilted_pair(alpha: f64, v: f64) -> Option<(f64, f64)> {
    if alpha == 0.0 {
        return None;
    }
    if alpha.is_infinite() {
        if v == 0.5 {
            return None;
        }
        let t = if (v > 0.5) == (alpha > 0.0) { 1.0 } else { 0.0 };
        return Some((t, 1.0 - t));
    }
    if alpha == 1.0 {
        return Some((v, 1.0 - v));
    }
    let s = alpha * logit(v);
    Some((sigmoid(s), sigmoid(-s)))
}

/// Bayes tilted estimate of the α-loss, `v^α / (v^α + (1−v)^α)`.
///
/// At α = ±∞ the estimate is the hard decision `1[v > 1/2]` (flipped for
/// α = −∞); α = 0, and α = ±∞ with v = 1/2, give the whole interval.
pub fn bayes_tilted_estimate(a: &AlphaParam, v: f64) -> Result<Tilted> {
    check_unit("v", v)?;
    Ok(match tilted_pair(a.alpha, v) {
        Some((t, _)) => Tilted::Point(t),
        None => Tilted::WholeInterval,
    })
}

/// Grid minimizer of `L(·, v)` over `{0, 1/n, …, 1}`; ties go to the smallest `u`.
pub fn bayes_tilted_brute(spec: &LossSpec, v: f64, grid_n: usize) -> f64 {
    let n = grid_n.max(1);
    let mut best_u = 0.0;
    let mut best = f64::INFINITY;
    for k in 0..=n {
        let u = k as f64 / n as f64;
        let r = risk_unchecked(spec, u, v);
        if r < best {
            best = r;
            best_u = u;
        }
    }
    best_u
}

/// `α* = logit(η_c) / logit(η_t)`, the α whose tilted estimate maps η_t to η_c.
pub fn alpha_star_pointwise(eta_c: f64, eta_t: f64) -> Result<f64> {
    for (what, value) in [("eta_c", eta_c), ("eta_t", eta_t)] {
        if !(value > 0.0 && value < 1.0) {
            return Err(Error::Domain {
                what,
                value,
                domain: "(0, 1)",
            });
        }
    }
    if eta_t == 0.5 {
        return if eta_c == 0.5 {
            Ok(1.0)
        } else {
            Err(Error::NoFiniteAlpha { eta_c })
        };
    }
    Ok(logit(eta_c) / logit(eta_t))
}

/// Posterior after symmetric label noise with flip rate `p`.
pub fn sln_twist_posterior(eta_c: f64, p: f64) -> f64 {
    eta_c * (1.0 - p) + (1.0 - eta_c) * p
}

pub fn is_bayes_blunting(eta_c: f64, eta_t: f64) -> bool {
    (eta_c <= eta_t && eta_t <= 0.5) || (eta_c >= eta_t && eta_t >= 0.5)
}

pub fn is_strictly_bayes_blunting(eta_c: f64, eta_t: f64) -> bool {
    (eta_c < eta_t && eta_t <= 0.5) || (eta_c > eta_t && eta_t >= 0.5)
}

/// `H_b(u)` in nats, with `0·log 0 = 0`.
pub fn binary_entropy(u: f64) -> f64 {
    let xlogx = |x: f64| if x <= 0.0 { 0.0 } else { x * x.ln() };
    -xlogx(u) - xlogx(1.0 - u)
}

/// One support point of a discretized marginal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioPoint {
    pub weight: f64,
    pub eta_clean: f64,
    pub eta_twist: f64,
}

/// Discrete marginal with clean and twisted posteriors on each support point.
#[derive(Debug, Clone, PartialEq)]
pub struct TwistScenario {
    points: Vec<ScenarioPoint>,
}

impl TwistScenario {
    pub fn new(points: Vec<ScenarioPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Precondition("scenario has no support".into()));
        }
        let mut total = 0.0;
        for p in &points {
            if !(p.weight >= 0.0) {
                return Err(Error::Domain {
                    what: "weight",
                    value: p.weight,
                    domain: "[0, ∞)",
                });
            }
            check_unit("eta_clean", p.eta_clean)?;
            check_unit("eta_twist", p.eta_twist)?;
            total += p.weight;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Precondition(format!(
                "scenario weights sum to {total}, not 1"
            )));
        }
        Ok(Self { points })
    }

    /// Equal weights over the given posterior pairs.
    pub fn uniform(clean: &[f64], twist: &[f64]) -> Result<Self> {
        if clean.len() != twist.len() {
            return Err(Error::Precondition("clean/twist length mismatch".into()));
        }
        let n = clean.len() as f64;
        Self::new(
            clean
                .iter()
                .zip(twist)
                .map(|(&c, &t)| ScenarioPoint {
                    weight: 1.0 / n,
                    eta_clean: c,
                    eta_twist: t,
                })
                .collect(),
        )
    }

    pub fn points(&self) -> &[ScenarioPoint] {
        &self.points
    }

    /// `H(η_c) = E[H_b(η_c(X))]`.
    pub fn clean_entropy(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.weight * binary_entropy(p.eta_clean))
            .sum()
    }
}

fn cross_entropy_with(scenario: &TwistScenario, alpha_at: impl Fn(usize) -> f64) -> Result<f64> {
    let mut ce = 0.0;
    for (i, p) in scenario.points.iter().enumerate() {
        let alpha = alpha_at(i);
        let (t, t_neg) = tilted_pair(alpha, p.eta_twist).ok_or_else(|| {
            Error::Unsupported(format!(
                "tilted estimate is degenerate for alpha = {alpha} at eta_t = {}",
                p.eta_twist
            ))
        })?;
        let mut term = 0.0;
        if p.eta_clean > 0.0 {
            term -= p.eta_clean * clamp_prob(t).ln();
        }
        if p.eta_clean < 1.0 {
            term -= (1.0 - p.eta_clean) * clamp_prob(t_neg).ln();
        }
        ce += p.weight * term;
    }
    Ok(ce)
}

/// Averaged cross-entropy between the α-tilted twisted posterior and the
/// clean posterior.
pub fn cross_entropy_alpha(scenario: &TwistScenario, a: &AlphaParam) -> Result<f64> {
    cross_entropy_with(scenario, |_| a.alpha)
}

/// `CE(η_t, η_c; α) − H(η_c)`.
pub fn kl_alpha(scenario: &TwistScenario, a: &AlphaParam) -> Result<f64> {
    Ok(cross_entropy_alpha(scenario, a)? - scenario.clean_entropy())
}

/// KL divergence when each support point gets its own α.
pub fn kl_alpha_mapping(scenario: &TwistScenario, alphas: &[f64]) -> Result<f64> {
    if alphas.len() != scenario.points.len() {
        return Err(Error::Precondition("one alpha per support point required".into()));
    }
    Ok(cross_entropy_with(scenario, |i| alphas[i])? - scenario.clean_entropy())
}

/// Outcome of the constructive fixed-α correction for logit-clipped twists.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstructiveAlpha {
    /// Logit-edge `(1/B)·E[Y·logit(η_t(X))]`.
    pub logit_edge: f64,
    pub q: f64,
    pub alpha_star: f64,
    /// `H_b(q) − H(η_c)`.
    pub bound: f64,
    /// `None` when the logit-edge vanishes and α* = 0 is degenerate.
    pub kl_at_alpha_star: Option<f64>,
}

impl ConstructiveAlpha {
    pub fn is_degenerate(&self) -> bool {
        self.kl_at_alpha_star.is_none()
    }
}

/// Fixed α* = logit(q)/B from the logit-edge of a scenario whose twisted
/// logits all lie in `[−B, B]`, with the KL bound `H_b(q) − H(η_c)`.
pub fn constructive_alpha_star(scenario: &TwistScenario, b: f64) -> Result<ConstructiveAlpha> {
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::Domain {
            what: "B",
            value: b,
            domain: "(0, ∞)",
        });
    }
    let lo = 1.0 / (1.0 + b.exp());
    let hi = 1.0 / (1.0 + (-b).exp());
    let mut edge = 0.0;
    for p in scenario.points() {
        if p.weight > 0.0 && (p.eta_twist < lo - 1e-12 || p.eta_twist > hi + 1e-12) {
            return Err(Error::Precondition(format!(
                "eta_t = {} lies outside [{lo}, {hi}]; only fully clipped twists are supported",
                p.eta_twist
            )));
        }
        // E_Y[Y] = 2η_c − 1 under Y ~ Bernoulli(η_c) on {−1, +1}
        edge += p.weight * (2.0 * p.eta_clean - 1.0) * logit(p.eta_twist);
    }
    let logit_edge = (edge / b).clamp(-1.0, 1.0);
    let q = (1.0 + logit_edge) / 2.0;
    let bound = binary_entropy(q) - scenario.clean_entropy();
    if logit_edge == 0.0 {
        return Ok(ConstructiveAlpha {
            logit_edge,
            q,
            alpha_star: 0.0,
            bound,
            kl_at_alpha_star: None,
        });
    }
    let alpha_star = logit(q) / b;
    let kl = kl_alpha(scenario, &AlphaParam::new(alpha_star)?)?;
    if kl > bound + 1e-9 {
        return Err(Error::Precondition(format!(
            "KL at alpha* = {alpha_star} is {kl}, above the bound {bound}"
        )));
    }
    Ok(ConstructiveAlpha {
        logit_edge,
        q,
        alpha_star,
        bound,
        kl_at_alpha_star: Some(kl),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FocalWitness {
    pub max_ratio: f64,
    pub witness_holds: bool,
}

/// `f(u, γ) = u^γ·(γ(1−u)·log(1−u) − u)`, the stationarity term of the focal
/// pointwise risk.
fn focal_stationarity(u: f64, gamma: f64) -> f64 {
    u.powf(gamma) * (gamma * (1.0 - u) * (-u).ln_1p() - u)
}

/// Maximum of `f(u,γ)/f(1−u,γ)` over a γ-grid. When it stays below `k`, no
/// focal hyperparameter can map a twisted posterior `k/(1+k)` onto `u`.
pub fn focal_twist_improper_witness(u: f64, k: f64, gamma_grid: &[f64]) -> Result<FocalWitness> {
    if !(u > 0.0 && u <= 0.5) {
        return Err(Error::Domain {
            what: "u",
            value: u,
            domain: "(0, 1/2]",
        });
    }
    if gamma_grid.is_empty() {
        return Err(Error::Precondition("empty gamma grid".into()));
    }
    if !(k > u / (1.0 - u)) {
        return Err(Error::Precondition(format!(
            "K = {k} must exceed u/(1-u) = {}",
            u / (1.0 - u)
        )));
    }
    let mut max_ratio = f64::NEG_INFINITY;
    for &gamma in gamma_grid {
        FocalSpec::new(gamma)?;
        let ratio = focal_stationarity(u, gamma) / focal_stationarity(1.0 - u, gamma);
        max_ratio = max_ratio.max(ratio);
    }
    Ok(FocalWitness {
        max_ratio,
        witness_holds: max_ratio < k,
    })
}
