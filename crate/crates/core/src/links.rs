//! Surrogates and (pseudo-)inverse links.
//!
//! The surrogate of a CPE loss is `F(z) = (−L̲)★(−z) = sup_u {−z·u + L̲(u)}`,
//! where `L̲` is the pointwise Bayes risk. Boosting weights are `−F′(y·H)`,
//! i.e. the inverse of `−L̲′` evaluated at `−y·H`. That inverse has no closed
//! form for the α-loss, so boosting uses the clipped pseudo-inverse link
//! ([`PilTable`]) instead; [`exact_inverse_link`] is the bisection reference.

use crate::error::{Error, Result};
use crate::losses::{AlphaParam, LossKind, LossSpec};
use crate::math::{bisect_increasing, bisect_to_precision, sigmoid};

/// Default resolution of the `u`-grid used for the conjugate.
pub const SURROGATE_GRID: usize = 100_000;

const BISECT_ITERS: usize = 80;

/// Inverse canonical link of the log-loss.
pub fn sigmoid_link(z: f64) -> f64 {
    sigmoid(z)
}

/// Numeric surrogate `F` of a loss, computed as a supremum over a `u`-grid.
///
/// `L̲` is tabulated once at construction; each evaluation then binary-searches
/// the concave sequence `−z·u_k + L̲(u_k)` for its maximum, which returns the
/// same value as a full scan of the grid.
#[derive(Debug, Clone)]
pub struct SurrogateEval {
    loss: LossSpec,
    grid_n: usize,
    bayes: Vec<f64>,
    // forward slopes (L̲(u_{k+1}) − L̲(u_k)) / h, non-increasing in k
    slopes: Vec<f64>,
}

impl SurrogateEval {
    pub fn new(loss: LossSpec, grid_n: usize) -> Result<Self> {
        if grid_n < 2 {
            return Err(Error::Precondition("surrogate grid needs at least 2 cells".into()));
        }
        let inner = 10_000;
        let bayes: Vec<f64> = (0..=grid_n)
            .map(|k| {
                let v = k as f64 / grid_n as f64;
                loss.bayes_risk(v).unwrap_or_else(|| {
                    let u = crate::losses::bayes_tilted_brute(&loss, v, inner);
                    v * loss.partial_pos(u) + (1.0 - v) * loss.partial_neg(u)
                })
            })
            .collect();
        let h = 1.0 / grid_n as f64;
        let slopes = bayes.windows(2).map(|w| (w[1] - w[0]) / h).collect();
        Ok(Self {
            loss,
            grid_n,
            bayes,
            slopes,
        })
    }

    pub fn for_alpha(a: AlphaParam) -> Result<Self> {
        Self::new(crate::losses::alpha_loss_spec(a)?, SURROGATE_GRID)
    }

    pub fn loss(&self) -> &LossSpec {
        &self.loss
    }

    pub fn grid_n(&self) -> usize {
        self.grid_n
    }

    #[inline]
    fn objective(&self, k: usize, z: f64) -> f64 {
        -z * (k as f64 / self.grid_n as f64) + self.bayes[k]
    }

    /// `F(z) = max_k {−z·u_k + L̲(u_k)}`.
    pub fn value(&self, z: f64) -> f64 {
        // first k whose forward slope drops to z or below is the maximizer
        let k = self.slopes.partition_point(|&s| s > z);
        let lo = k.saturating_sub(1);
        let hi = (k + 1).min(self.grid_n);
        (lo..=hi)
            .map(|j| self.objective(j, z))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Central difference `F′(z)`.
    pub fn derivative(&self, z: f64, h: f64) -> f64 {
        (self.value(z + h) - self.value(z - h)) / (2.0 * h)
    }

    /// Largest second central difference of `F` over `n` points in `[lo, hi]`.
    pub fn curvature_sup(&self, lo: f64, hi: f64, n: usize, h: f64) -> f64 {
        (0..n)
            .map(|i| {
                let z = lo + (hi - lo) * i as f64 / (n.max(2) - 1) as f64;
                (self.value(z + h) - 2.0 * self.value(z) + self.value(z - h)) / (h * h)
            })
            .fold(0.0, f64::max)
    }
}

/// `−L̲′(u) = ℓ₋₁(t(u)) − ℓ₁(t(u))` for a loss with closed-form tilted estimate.
pub fn neg_bayes_risk_derivative(spec: &LossSpec, u: f64) -> Option<f64> {
    let t = spec.tilted_closed_form(u)?;
    Some(spec.partial_neg(t) - spec.partial_pos(t))
}

/// Exact inverse of `−L̲′` for the α-loss by 80-step bisection on `u ∈ [0,1]`.
pub fn exact_inverse_link(a: AlphaParam, z: f64) -> Result<f64> {
    let spec = crate::losses::alpha_loss_spec(a)?;
    if a.alpha() <= 1.0 {
        return Err(Error::Unsupported(format!(
            "exact link inversion needs alpha > 1, got {}",
            a.alpha()
        )));
    }
    Ok(bisect_increasing(0.0, 1.0, BISECT_ITERS, |u| {
        neg_bayes_risk_derivative(&spec, u).expect("alpha-loss has a closed-form tilt") - z
    }))
}

fn admissible_for_clipping(spec: &LossSpec) -> Result<()> {
    let ok = match &spec.kind {
        LossKind::Alpha(a) => a.alpha() > 1.0,
        LossKind::Square => true,
        LossKind::Focal(_) => false,
        LossKind::Custom { .. } => spec.tilted_closed_form(0.5).is_some(),
    };
    if !ok || !spec.symmetric {
        return Err(Error::Unsupported(format!(
            "clipped inverse link needs a symmetric loss with finite partial losses and a closed-form tilted estimate; '{}' is not",
            spec.name
        )));
    }
    let (l1_0, lm_1) = (spec.partial_pos(0.0), spec.partial_neg(1.0));
    if !(l1_0.is_finite() && l1_0 > 0.0 && lm_1.is_finite() && lm_1 > 0.0) {
        return Err(Error::Unsupported(format!(
            "'{}' has infinite or zero partial loss at the extremes",
            spec.name
        )));
    }
    Ok(())
}

/// Clipped inverse link of a general admissible loss.
///
/// Uses only `ℓ₁` for negative scores and only `ℓ₋₁` for positive ones, with
/// the affine rescaling that pins the link to 0, 1/2 and 1 at `−ℓ₁(0)`, 0 and
/// `ℓ₋₁(1)`. Inverses of the partial losses and of the tilted estimate are
/// computed by bisection to full precision.
pub fn clipped_inverse_link(spec: &LossSpec, z: f64) -> Result<f64> {
    admissible_for_clipping(spec)?;
    let l1_0 = spec.partial_pos(0.0);
    let l1_h = spec.partial_pos(0.5);
    let lm_1 = spec.partial_neg(1.0);
    let lm_h = spec.partial_neg(0.5);
    let tilt = |v: f64| spec.tilted_closed_form(v).expect("checked admissible");
    let inverse_tilt = |u: f64| bisect_to_precision(0.0, 1.0, |v| tilt(v) - u);

    if z < -l1_0 {
        Ok(0.0)
    } else if z < 0.0 {
        let target = (l1_h - l1_0) / l1_0 * z + l1_h;
        // ℓ₁ is decreasing
        let u = bisect_to_precision(0.0, 1.0, |u| target - spec.partial_pos(u));
        Ok(inverse_tilt(u))
    } else if z < lm_1 {
        let target = (lm_1 - lm_h) / lm_1 * z + lm_h;
        let u = bisect_to_precision(0.0, 1.0, |u| spec.partial_neg(u) - target);
        Ok(inverse_tilt(u))
    } else {
        Ok(1.0)
    }
}

/// Closed-form pseudo-inverse link of the α-loss, α > 1.
///
/// Saturates at 0 below `−α′` and at 1 above `α′`. Inside, with
/// `r = (α′ − |z|)/α′`, the link is `r^{1/(α−1)} / (r^{1/(α−1)} + (2 − r^{α′})^{1/α})`
/// for `z ≤ 0` and its reflection `1 − link(−z)` for `z ≥ 0`. The common factor
/// `α′^{1/(α−1)}` of the textbook form cancels, so there is no overflow as α → 1⁺.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PilTable {
    alpha: AlphaParam,
}

impl PilTable {
    pub fn new(alpha: AlphaParam) -> Result<Self> {
        let a = alpha.alpha();
        if !(a > 1.0 && a.is_finite()) {
            return Err(Error::Unsupported(format!(
                "the pseudo-inverse link needs a finite alpha > 1, got {a}"
            )));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> AlphaParam {
        self.alpha
    }

    pub fn saturation_lo(&self) -> f64 {
        -self.alpha.conjugate()
    }

    pub fn saturation_hi(&self) -> f64 {
        self.alpha.conjugate()
    }

    #[inline]
    pub fn eval(&self, z: f64) -> f64 {
        let a = self.alpha.alpha();
        let ap = self.alpha.conjugate();
        if z <= -ap {
            return 0.0;
        }
        if z >= ap {
            return 1.0;
        }
        let r = (ap - z.abs()) / ap;
        let near = r.powf(1.0 / (a - 1.0));
        let far = (2.0 - r.powf(ap)).powf(1.0 / a);
        if z <= 0.0 {
            near / (near + far)
        } else {
            far / (near + far)
        }
    }

    /// Forward map `f_ℓ(u)` whose inverse is [`PilTable::eval`].
    pub fn forward(&self, u: f64) -> f64 {
        let a = self.alpha.alpha();
        let ap = self.alpha.conjugate();
        let (ua, va) = (u.powf(a), (1.0 - u).powf(a));
        if u <= 0.5 {
            ap * ((2.0 * ua / (ua + va)).powf(1.0 / ap) - 1.0)
        } else {
            ap * (1.0 - (2.0 * va / (ua + va)).powf(1.0 / ap))
        }
    }
}

/// [`PilTable::eval`] for a one-off α.
pub fn pil_alpha(a: AlphaParam, z: f64) -> Result<f64> {
    Ok(PilTable::new(a)?.eval(z))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    pub max_horizontal_gap: f64,
    /// `|z|` range `α′·[1 − α⁻⁴, 1]` excluded from the comparison.
    pub forbidden_interval: (f64, f64),
    pub evaluated: usize,
    pub skipped: usize,
}

/// Largest `|pil(z) − exact(z)|` over grid points outside the forbidden band.
pub fn pil_gap_report(a: AlphaParam, grid: &[f64]) -> Result<GapReport> {
    if !(a.alpha() >= 1.2) {
        return Err(Error::Unsupported(format!(
            "the approximation bound applies for alpha >= 1.2, got {}",
            a.alpha()
        )));
    }
    let pil = PilTable::new(a)?;
    let ap = a.conjugate();
    let forbidden = (ap * (1.0 - a.alpha().powi(-4)), ap);
    let mut max_gap: f64 = 0.0;
    let mut evaluated = 0;
    let mut skipped = 0;
    for &z in grid {
        if z.abs() >= forbidden.0 && z.abs() <= forbidden.1 {
            skipped += 1;
            continue;
        }
        evaluated += 1;
        max_gap = max_gap.max((pil.eval(z) - exact_inverse_link(a, z)?).abs());
    }
    Ok(GapReport {
        max_horizontal_gap: max_gap,
        forbidden_interval: forbidden,
        evaluated,
        skipped,
    })
}

/// Weight function used in boosting's reweighting step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Link {
    /// Exact inverse link of the log-loss (α = 1).
    Sigmoid,
    Pil(PilTable),
}

impl Link {
    /// Sigmoid for α = 1, the α pseudo-inverse link for α > 1.
    pub fn for_alpha(a: AlphaParam) -> Result<Self> {
        if a.alpha() == 1.0 {
            Ok(Link::Sigmoid)
        } else {
            Ok(Link::Pil(PilTable::new(a)?))
        }
    }

    #[inline]
    pub fn eval(&self, z: f64) -> f64 {
        match self {
            Link::Sigmoid => sigmoid(z),
            Link::Pil(t) => t.eval(z),
        }
    }

    pub fn alpha(&self) -> f64 {
        match self {
            Link::Sigmoid => 1.0,
            Link::Pil(t) => t.alpha().alpha(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::alpha_loss_spec;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn alpha(a: f64) -> AlphaParam {
        AlphaParam::new(a).unwrap()
    }

    #[test]
    fn sigmoid_examples() {
        assert_eq!(sigmoid_link(0.0), 0.5);
        assert_eq!(sigmoid_link(1e6), 1.0);
        assert_abs_diff_eq!(sigmoid_link(3f64.ln()), 0.75, epsilon = 1e-15);
    }

    #[test]
    fn log_loss_surrogate_is_logistic() {
        let f = SurrogateEval::for_alpha(alpha(1.0)).unwrap();
        assert_abs_diff_eq!(f.value(0.0), std::f64::consts::LN_2, epsilon = 1e-9);
        assert_abs_diff_eq!(f.value(5.0), (1.0 + (-5f64).exp()).ln(), epsilon = 1e-7);
        assert_abs_diff_eq!(f.value(5.0), 0.00672, epsilon = 1e-5);
    }

    #[test]
    fn value_matches_full_grid_scan() {
        let f = SurrogateEval::new(alpha_loss_spec(alpha(2.0)).unwrap(), 2_000).unwrap();
        for &z in &[-3.0, -1.2, 0.0, 0.3, 1.9, 4.0] {
            let scan = (0..=2_000)
                .map(|k| f.objective(k, z))
                .fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(f.value(z), scan);
        }
    }

    #[test]
    fn surrogate_is_convex_and_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for a in [1.0, 2.0, 4.0] {
            let f = SurrogateEval::for_alpha(alpha(a)).unwrap();
            for _ in 0..200 {
                let mut z = [rng.gen_range(-6.0..6.0), rng.gen_range(-6.0..6.0), rng.gen_range(-6.0..6.0)];
                z.sort_by(f64::total_cmp);
                let [z1, z2, z3] = z;
                if z3 - z1 < 1e-9 {
                    continue;
                }
                let lam = (z3 - z2) / (z3 - z1);
                assert!(f.value(z2) <= lam * f.value(z1) + (1.0 - lam) * f.value(z3) + 1e-6);
                assert!(f.value(z3) <= f.value(z1) + 1e-12);
            }
        }
    }

    #[test]
    fn logistic_derivative_is_sigmoid() {
        let f = SurrogateEval::for_alpha(alpha(1.0)).unwrap();
        for &z in &[-3.0, -0.5, 0.0, 0.7, 2.0] {
            // −F′(z) = sigmoid(−z), up to grid resolution
            assert_abs_diff_eq!(-f.derivative(z, 1e-5), sigmoid_link(-z), epsilon = 2e-5);
        }
    }

    #[test]
    fn pil_examples() {
        let two = alpha(2.0);
        assert_eq!(pil_alpha(two, 0.0).unwrap(), 0.5);
        assert_eq!(pil_alpha(two, 2.0).unwrap(), 1.0);
        assert_eq!(pil_alpha(two, -2.0).unwrap(), 0.0);
        let s7 = 7f64.sqrt();
        let v = pil_alpha(two, 1.0).unwrap();
        assert_abs_diff_eq!(v, s7 / (1.0 + s7), epsilon = 1e-15);
        let table = PilTable::new(two).unwrap();
        assert_abs_diff_eq!(table.forward(v), 1.0, epsilon = 1e-12);
        for a in [0.5, 1.0, -2.0, f64::INFINITY] {
            assert!(pil_alpha(alpha(a), 0.3).is_err());
        }
    }

    #[test]
    fn pil_anchor_points_and_symmetry() {
        for a in [1.1, 1.5, 2.0, 4.0, 10.0] {
            let t = PilTable::new(alpha(a)).unwrap();
            let ap = alpha(a).conjugate();
            assert_eq!(t.eval(-ap), 0.0);
            assert_eq!(t.eval(0.0), 0.5);
            assert_eq!(t.eval(ap), 1.0);
            for k in 0..=400 {
                let z = -2.0 * ap + 4.0 * ap * k as f64 / 400.0;
                assert!((t.eval(-z) - (1.0 - t.eval(z))).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn pil_is_monotone_and_continuous() {
        for a in [1.1, 2.0, 4.0] {
            let t = PilTable::new(alpha(a)).unwrap();
            let ap = alpha(a).conjugate();
            let mut prev = -1.0;
            for k in 0..=10_000 {
                let z = -2.0 * ap + 4.0 * ap * k as f64 / 10_000.0;
                let v = t.eval(z);
                assert!(v >= prev);
                prev = v;
            }
            assert!((t.eval(1e-10) - t.eval(-1e-10)).abs() < 1e-8);
            // root-type onset at the saturation points: continuous, with infinite slope
            let h = 1e-15 * ap;
            assert!(t.eval(-ap + h) < 1e-4);
            assert!(t.eval(ap - h) > 1.0 - 1e-4);
        }
    }

    #[test]
    fn pil_is_inverse_of_forward_map() {
        let t = PilTable::new(alpha(3.0)).unwrap();
        for k in 1..100 {
            let u = k as f64 / 100.0;
            assert_abs_diff_eq!(t.eval(t.forward(u)), u, epsilon = 1e-10);
        }
    }

    #[test]
    fn clipped_link_matches_closed_form_pil() {
        for a in [1.5, 2.0, 5.0] {
            let spec = alpha_loss_spec(alpha(a)).unwrap();
            let t = PilTable::new(alpha(a)).unwrap();
            let ap = alpha(a).conjugate();
            for k in 0..=60 {
                let z = -1.5 * ap + 3.0 * ap * k as f64 / 60.0;
                assert_abs_diff_eq!(clipped_inverse_link(&spec, z).unwrap(), t.eval(z), epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn clipped_link_branches() {
        let sq = LossSpec::square();
        assert_abs_diff_eq!(clipped_inverse_link(&sq, 0.0).unwrap(), 0.5, epsilon = 1e-12);
        assert_eq!(clipped_inverse_link(&sq, -1.0 - 1e-9).unwrap(), 0.0);
        assert_eq!(clipped_inverse_link(&sq, 1.0).unwrap(), 1.0);
        assert_eq!(clipped_inverse_link(&sq, 7.0).unwrap(), 1.0);
        let log = alpha_loss_spec(alpha(1.0)).unwrap();
        assert!(matches!(clipped_inverse_link(&log, 0.1), Err(Error::Unsupported(_))));
    }

    #[test]
    fn clipped_link_matches_exact_link_at_anchors() {
        for spec in [LossSpec::square(), alpha_loss_spec(alpha(3.0)).unwrap()] {
            for u in [0.0, 0.5, 1.0] {
                let z = neg_bayes_risk_derivative(&spec, u).unwrap();
                assert_abs_diff_eq!(clipped_inverse_link(&spec, z).unwrap(), u, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn exact_link_agrees_with_surrogate_derivative() {
        let a = alpha(3.0);
        let f = SurrogateEval::for_alpha(a).unwrap();
        for &z in &[-1.0, -0.3, 0.0, 0.4, 1.2] {
            assert_abs_diff_eq!(-f.derivative(-z, 1e-5), exact_inverse_link(a, z).unwrap(), epsilon = 5e-5);
        }
    }

    #[test]
    fn gap_report_examples() {
        let a = alpha(5.0);
        let r = pil_gap_report(a, &[0.0]).unwrap();
        assert!(r.max_horizontal_gap < 1e-12);

        let a = alpha(10.0);
        let ap = a.conjugate();
        let edge = ap * (1.0 - 1e-4);
        let grid: Vec<f64> = (0..=2_000).map(|k| -edge + 2.0 * edge * k as f64 / 2_000.0).collect();
        let r = pil_gap_report(a, &grid).unwrap();
        assert!(r.max_horizontal_gap <= 0.02, "{r:?}");
        assert!(r.skipped > 0);

        let a = alpha(2.0);
        let grid: Vec<f64> = (0..=2_000).map(|k| -2.5 + 5.0 * k as f64 / 2_000.0).collect();
        let r = pil_gap_report(a, &grid).unwrap();
        assert!(r.max_horizontal_gap <= 0.1, "{r:?}");
        assert!(pil_gap_report(alpha(1.1), &grid).is_err());
    }

    #[test]
    fn link_selection() {
        assert_eq!(Link::for_alpha(alpha(1.0)).unwrap(), Link::Sigmoid);
        assert!(matches!(Link::for_alpha(alpha(2.0)).unwrap(), Link::Pil(_)));
        assert!(Link::for_alpha(alpha(0.5)).is_err());
        assert_eq!(Link::for_alpha(alpha(1.0)).unwrap().eval(0.0), 0.5);
    }
}
