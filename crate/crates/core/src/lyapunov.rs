//! Growth profiles and the Osgood-type functions built from them.
//!
//! * `ψ_ρ(ξ) = ∫₀^ξ ds / (s r(s) + ρ)` and `Φ_{ρ,λ}(ξ) = exp(λ ψ_ρ(ξ))`,
//! * the integral test `∫₀^a ds / (s r(s)) = ∞`,
//! * the exit profile `ψ(ξ) = ∫₀^ξ ds / (f(s) + 1)` with `f` equal to
//!   `−s log s` near zero and `s log s` at infinity,
//! * Stroock's tail bound for Itô processes with bounded coefficients,
//! * the sine-series bound `V(θ) ≤ C₁ θ log(1/θ)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quad::{simpson_split, QuadratureOptions};

/// Growth profile `r(s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GrowthProfile {
    /// `r(s) = log(1/s)` on `(0, 1)`.
    LogReciprocal,
    /// `r(s) = log s` on `[1, ∞)`.
    Log,
    /// `r(s) = log²(1/s)` on `(0, 1)`.
    LogSquared,
    /// `r(s) = value` on `(0, ∞)`; `value = 1` is the Lipschitz case.
    Constant { value: f64 },
    /// Piecewise-linear interpolation of `(s, r)` samples, constant outside.
    Tabulated { points: Vec<(f64, f64)> },
}

impl GrowthProfile {
    pub fn eval(&self, s: f64) -> f64 {
        match self {
            GrowthProfile::LogReciprocal => -s.ln(),
            GrowthProfile::Log => s.ln(),
            GrowthProfile::LogSquared => {
                let l = s.ln();
                l * l
            }
            GrowthProfile::Constant { value } => *value,
            GrowthProfile::Tabulated { points } => interpolate(points, s),
        }
    }

    /// `s · r(s)`, continuously extended by its limit at `s = 0`.
    pub fn s_times_r(&self, s: f64) -> f64 {
        if s == 0.0 {
            return 0.0;
        }
        s * self.eval(s)
    }

    /// Interval on which the profile is defined and positive.
    pub fn domain(&self) -> (f64, f64) {
        match self {
            GrowthProfile::LogReciprocal | GrowthProfile::LogSquared => (0.0, 1.0),
            GrowthProfile::Log => (1.0, f64::INFINITY),
            GrowthProfile::Constant { .. } => (0.0, f64::INFINITY),
            GrowthProfile::Tabulated { points } => (
                points.first().map_or(0.0, |p| p.0),
                points.last().map_or(0.0, |p| p.0),
            ),
        }
    }

    /// `s r'(s) / r(s)` by a central difference. Tends to zero for the
    /// built-in profiles at the relevant end of their domain.
    pub fn log_derivative_ratio(&self, s: f64) -> f64 {
        let h = 1e-6 * s;
        let d = (self.eval(s + h) - self.eval(s - h)) / (2.0 * h);
        s * d / self.eval(s)
    }
}

fn interpolate(points: &[(f64, f64)], s: f64) -> f64 {
    match points {
        [] => f64::NAN,
        [p] => p.1,
        _ => {
            if s <= points[0].0 {
                return points[0].1;
            }
            let last = points[points.len() - 1];
            if s >= last.0 {
                return last.1;
            }
            let i = points.partition_point(|p| p.0 <= s);
            let (a, b) = (points[i - 1], points[i]);
            a.1 + (b.1 - a.1) * (s - a.0) / (b.0 - a.0)
        }
    }
}

// ---------------------------------------------------------------------------
// ψ_ρ and Φ_{ρ,λ}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OsgoodEvaluator {
    pub profile: GrowthProfile,
    pub rho: f64,
    pub lambda: f64,
    pub tolerance: f64,
    /// Lower integration limit used when `rho == 0`.
    pub cutoff: Option<f64>,
}

impl OsgoodEvaluator {
    pub fn new(profile: GrowthProfile, rho: f64, lambda: f64) -> Result<Self> {
        if !(rho >= 0.0) || !rho.is_finite() {
            return invalid(format!("rho must be nonnegative, got {rho}"));
        }
        if !(lambda > 0.0) || !lambda.is_finite() {
            return invalid(format!("lambda must be positive, got {lambda}"));
        }
        Ok(Self {
            profile,
            rho,
            lambda,
            tolerance: 1e-10,
            cutoff: None,
        })
    }

    /// `r(s) = log(1/s)`, the log-Lipschitz case.
    pub fn log_lipschitz(rho: f64, lambda: f64) -> Result<Self> {
        Self::new(GrowthProfile::LogReciprocal, rho, lambda)
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tolerance = tol;
        self
    }

    pub fn with_cutoff(mut self, cutoff: f64) -> Self {
        self.cutoff = Some(cutoff);
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }
}

/// `ψ_ρ(ξ) = ∫₀^ξ ds / (s r(s) + ρ)`.
///
/// For `ρ > 0` the integrand is bounded by `1/ρ`; the interval is split at
/// `ξ·10^{-j}` so the quadrature resolves the transition near
/// `s r(s) ≈ ρ`. For `ρ = 0` the lower limit is the evaluator's cutoff, and
/// without one the integral is reported as divergent.
pub fn psi_rho(ev: &OsgoodEvaluator, xi: f64) -> Result<f64> {
    if !(xi >= 0.0) || !xi.is_finite() {
        return invalid(format!("xi must be finite and nonnegative, got {xi}"));
    }
    let (_, hi) = ev.profile.domain();
    if xi > hi {
        return invalid(format!("xi = {xi} lies outside the profile domain (max {hi})"));
    }
    if xi == 0.0 {
        return Ok(0.0);
    }
    let lower = if ev.rho > 0.0 {
        0.0
    } else {
        match ev.cutoff {
            Some(c) if c > 0.0 && c <= xi => c,
            Some(c) if c > xi => return Ok(0.0),
            _ => {
                return Err(Error::Divergent(
                    "ψ₀ with lower limit 0: supply a positive cutoff".into(),
                ))
            }
        }
    };
    let rho = ev.rho;
    let profile = &ev.profile;
    let integrand = |s: f64| 1.0 / (profile.s_times_r(s) + rho);
    let mut pts = vec![xi];
    let floor = if rho > 0.0 { (rho * 1e-4).min(xi) } else { lower };
    let mut p = xi;
    while p * 0.1 > floor.max(1e-300) {
        p *= 0.1;
        pts.push(p);
    }
    pts.push(lower);
    pts.reverse();
    pts.dedup();
    simpson_split(integrand, &pts, &QuadratureOptions::with_tol(ev.tolerance))
}

/// `Φ_{ρ,λ}(ξ) = exp(λ ψ_ρ(ξ))`; overflow is reported with the exponent.
pub fn phi_rho_lambda(ev: &OsgoodEvaluator, xi: f64) -> Result<f64> {
    let exponent = log_phi_rho_lambda(ev, xi)?;
    let v = exponent.exp();
    if !v.is_finite() {
        return Err(Error::Overflow { exponent });
    }
    Ok(v)
}

/// `log Φ_{ρ,λ}(ξ) = λ ψ_ρ(ξ)`, safe for large `λ`.
pub fn log_phi_rho_lambda(ev: &OsgoodEvaluator, xi: f64) -> Result<f64> {
    Ok(ev.lambda * psi_rho(ev, xi)?)
}

// ---------------------------------------------------------------------------
// Osgood integral test

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Diverges,
    Converges,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rung {
    pub delta: f64,
    pub integral: f64,
}

/// Diagnostic record of the integral test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OsgoodDiagnostic {
    pub verdict: Verdict,
    pub rungs: Vec<Rung>,
    pub tolerance: f64,
}

/// Cut-offs `exp(-2·2.5^k)`, `k = 0..6`. Each rung multiplies `log(1/δ)` by
/// 2.5, so `∫ ds/(s log(1/s))` gains a constant `log 2.5` per rung while
/// `∫ ds/(s log²(1/s))` gains a geometric factor `0.4`.
pub fn default_osgood_ladder() -> Vec<f64> {
    (0..7).map(|k| (-2.0 * 2.5f64.powi(k)).exp()).collect()
}

/// Evaluates `∫_δ^a ds/(s r(s))` at every rung of a decreasing ladder and
/// classifies the growth of the increments.
///
/// Diverges when each of the last three increments is at least half the
/// first one; converges when every successive increment ratio is at most
/// one half; inconclusive otherwise.
pub fn osgood_diverges(
    profile: &GrowthProfile,
    a: f64,
    ladder: &[f64],
) -> Result<OsgoodDiagnostic> {
    osgood_diverges_with(profile, a, ladder, 1e-10)
}

pub fn osgood_diverges_with(
    profile: &GrowthProfile,
    a: f64,
    ladder: &[f64],
    tolerance: f64,
) -> Result<OsgoodDiagnostic> {
    if !(a > 0.0 && a < 1.0) {
        return invalid(format!("upper limit a must lie in (0, 1), got {a}"));
    }
    if ladder.len() < 6 {
        return invalid("cutoff ladder needs at least 6 rungs");
    }
    if ladder.windows(2).any(|w| !(w[1] < w[0])) || !(ladder[ladder.len() - 1] > 0.0) {
        return invalid("cutoff ladder must be strictly decreasing and positive");
    }
    if !(ladder[0] < a) {
        return invalid("first cutoff must lie below the upper limit a");
    }
    // Substituting s = e^{-u} turns ds/(s r(s)) into du / r(e^{-u}), which
    // stays well scaled down to subnormal cutoffs.
    let g = |u: f64| 1.0 / profile.eval((-u).exp());
    let opts = QuadratureOptions::with_tol(tolerance / ladder.len() as f64);
    let mut rungs = Vec::with_capacity(ladder.len());
    let mut acc = 0.0;
    let mut prev_u = -a.ln();
    for &delta in ladder {
        let u = -delta.ln();
        let mut pts = vec![prev_u];
        // geometric sub-breakpoints in u keep panels well proportioned
        let mut p = prev_u.max(1e-3);
        while p * 2.0 < u {
            p *= 2.0;
            pts.push(p);
        }
        pts.push(u);
        acc += simpson_split(g, &pts, &opts)?;
        rungs.push(Rung {
            delta,
            integral: acc,
        });
        prev_u = u;
    }
    let inc: Vec<f64> = rungs
        .windows(2)
        .map(|w| w[1].integral - w[0].integral)
        .collect();
    let first = inc[0];
    let diverges = first > 0.0 && inc[inc.len() - 3..].iter().all(|&x| x >= 0.5 * first);
    let converges = inc.iter().all(|&x| x > 0.0) && inc.windows(2).all(|w| w[1] <= 0.5 * w[0]);
    let verdict = if diverges {
        Verdict::Diverges
    } else if converges {
        Verdict::Converges
    } else {
        Verdict::Inconclusive
    };
    Ok(OsgoodDiagnostic {
        verdict,
        rungs,
        tolerance,
    })
}

// ---------------------------------------------------------------------------
// Stroock bound

/// `P(sup_{t≤T} |ξ(t)| ≥ R) ≤ 2d exp(−(R − √d B T)² / (2 A² d T))` for
/// `ξ = ∫α dW + ∫β dt` with `||α|| ≤ A`, `|β| ≤ B`. Requires `√d B T < R`.
pub fn stroock_bound(a: f64, b: f64, t: f64, r: f64, d: usize) -> Result<f64> {
    if !(a >= 0.0 && b >= 0.0 && t > 0.0 && r > 0.0) || d == 0 {
        return invalid("stroock_bound needs A, B ≥ 0, T, R > 0 and d ≥ 1");
    }
    let df = d as f64;
    let shift = df.sqrt() * b * t;
    if !(shift < r) {
        return invalid(format!(
            "hypothesis violated: requires d^(1/2)·B·T < R, got {shift} ≥ {r}"
        ));
    }
    if a == 0.0 {
        return Ok(0.0);
    }
    let gap = r - shift;
    Ok(2.0 * df * (-(gap * gap) / (2.0 * a * a * df * t)).exp())
}

// ---------------------------------------------------------------------------
// Exit profile

/// The strictly positive C¹ profile `f` with `f(s) = −s log s` on
/// `[0, 1−δ₀]` and `f(s) = s log s` on `[1+δ₀, ∞)`, joined by the cubic
/// Hermite interpolant of both one-sided values and slopes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExitProfile {
    pub delta0: f64,
    pub tolerance: f64,
    left: (f64, f64),
    right: (f64, f64),
}

impl ExitProfile {
    pub fn new(delta0: f64) -> Result<Self> {
        if !(delta0 > 0.0 && delta0 < 0.5) {
            return invalid(format!("delta0 must lie in (0, 1/2), got {delta0}"));
        }
        let a = 1.0 - delta0;
        let b = 1.0 + delta0;
        Ok(Self {
            delta0,
            tolerance: 1e-10,
            left: (-a * a.ln(), -a.ln() - 1.0),
            right: (b * b.ln(), b.ln() + 1.0),
        })
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tolerance = tol;
        self
    }

    pub fn junctions(&self) -> (f64, f64) {
        (1.0 - self.delta0, 1.0 + self.delta0)
    }

    pub fn f(&self, s: f64) -> f64 {
        let (a, b) = self.junctions();
        if s <= 0.0 {
            0.0
        } else if s <= a {
            -s * s.ln()
        } else if s >= b {
            s * s.ln()
        } else {
            let h = b - a;
            let t = (s - a) / h;
            let t2 = t * t;
            let t3 = t2 * t;
            let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
            let h10 = t3 - 2.0 * t2 + t;
            let h01 = -2.0 * t3 + 3.0 * t2;
            let h11 = t3 - t2;
            h00 * self.left.0 + h10 * h * self.left.1 + h01 * self.right.0 + h11 * h * self.right.1
        }
    }
}

/// `ψ(R) = ∫₀^R ds / (f(s) + 1)`.
pub fn exit_profile_psi(p: &ExitProfile, r: f64) -> Result<f64> {
    if !(r >= 0.0) || !r.is_finite() {
        return invalid(format!("R must be finite and nonnegative, got {r}"));
    }
    if r == 0.0 {
        return Ok(0.0);
    }
    let (a, b) = p.junctions();
    let mut pts = vec![0.0];
    for q in [1e-6, 1e-4, 1e-2, a, b] {
        if q < r {
            pts.push(q);
        }
    }
    let mut q = 2.0 * b;
    while q < r {
        pts.push(q);
        q *= 2.0;
    }
    pts.push(r);
    simpson_split(
        |s| 1.0 / (p.f(s) + 1.0),
        &pts,
        &QuadratureOptions::with_tol(p.tolerance),
    )
}

// ---------------------------------------------------------------------------
// Sine-series bound

/// `2(π²/2 + 1)`, the constant obtained for `V(θ) ≤ C₁ θ log(1/θ)`.
pub const SINE_BOUND_CONSTANT: f64 =
    2.0 * (std::f64::consts::PI * std::f64::consts::PI / 2.0 + 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub theta: f64,
    /// Partial sum `V_K(θ)`.
    pub partial: f64,
    /// `V_K(θ) + 1/K`, an upper bound for `V(θ)`.
    pub upper: f64,
    /// `upper / (θ log(1/θ))`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub terms: usize,
    pub max_ratio: f64,
    pub witness_theta: f64,
    pub constant: f64,
    pub holds: bool,
    pub rows: Vec<BoundRow>,
}

/// `V_K(θ) = Σ_{k≤K} |sin kθ| / k²`, summed from the smallest term up.
pub fn abs_sine_partial(theta: f64, terms: usize) -> f64 {
    let mut acc = 0.0;
    for k in (1..=terms).rev() {
        let kf = k as f64;
        acc += (kf * theta).sin().abs() / (kf * kf);
    }
    acc
}

/// Checks `V(θ) ≤ 2(π²/2+1) θ log(1/θ)` on a grid in `(0, 1/e)`, bounding
/// the omitted tail by `Σ_{k>K} 1/k² < 1/K`.
pub fn sine_series_bound_check(theta_grid: &[f64], terms: usize) -> Result<BoundReport> {
    if terms == 0 {
        return invalid("K must be at least 1");
    }
    let limit = (-1.0f64).exp();
    if let Some(t) = theta_grid.iter().find(|&&t| !(t > 0.0 && t < limit)) {
        return invalid(format!("theta = {t} outside (0, 1/e)"));
    }
    if theta_grid.is_empty() {
        return invalid("theta grid is empty");
    }
    let tail = 1.0 / terms as f64;
    let rows: Vec<BoundRow> = theta_grid
        .par_iter()
        .map(|&theta| {
            let partial = abs_sine_partial(theta, terms);
            let upper = partial + tail;
            BoundRow {
                theta,
                partial,
                upper,
                ratio: upper / (theta * (1.0 / theta).ln()),
            }
        })
        .collect();
    let (max_ratio, witness_theta) = rows
        .iter()
        .fold((f64::NEG_INFINITY, f64::NAN), |acc, r| {
            if r.ratio > acc.0 {
                (r.ratio, r.theta)
            } else {
                acc
            }
        });
    Ok(BoundReport {
        terms,
        max_ratio,
        witness_theta,
        constant: SINE_BOUND_CONSTANT,
        holds: max_ratio <= SINE_BOUND_CONSTANT,
        rows,
    })
}

/// `count` log-spaced points strictly inside `(lo, hi)`: the interior
/// nodes of a uniform partition of `[ln lo, ln hi]` into `count + 1` cells.
pub fn open_log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (1..=count)
        .map(|i| (a + (b - a) * i as f64 / (count + 1) as f64).exp())
        .collect()
}

/// Log-spaced grid of `count` points in `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psi_at_zero() {
        for rho in [1e-3, 0.5, 4.0] {
            let ev = OsgoodEvaluator::log_lipschitz(rho, 1.0).unwrap();
            assert_eq!(psi_rho(&ev, 0.0).unwrap(), 0.0);
            assert_eq!(phi_rho_lambda(&ev, 0.0).unwrap(), 1.0);
        }
    }

    #[test]
    fn rho_zero_without_cutoff_is_divergent() {
        let ev = OsgoodEvaluator::log_lipschitz(0.0, 1.0).unwrap();
        assert!(matches!(psi_rho(&ev, 0.3), Err(Error::Divergent(_))));
        // with a cutoff the integral is log log(1/c) − log log(1/ξ)
        let ev = ev.with_cutoff(1e-6);
        let v = psi_rho(&ev, 0.3).unwrap();
        let exact = (1e6f64).ln().ln() - (1.0 / 0.3f64).ln().ln();
        assert!((v - exact).abs() < 1e-9, "{v} vs {exact}");
    }

    #[test]
    fn phi_overflow_reports_exponent() {
        let ev = OsgoodEvaluator::log_lipschitz(1e-3, 1e4).unwrap();
        match phi_rho_lambda(&ev, 0.3) {
            Err(Error::Overflow { exponent }) => assert!(exponent > 709.0),
            other => panic!("expected overflow, got {other:?}"),
        }
        assert!(log_phi_rho_lambda(&ev, 0.3).unwrap().is_finite());
    }

    #[test]
    fn stroock_example_value() {
        let v = stroock_bound(1.0, 0.0, 1.0, 3.0, 1).unwrap();
        assert!((v - 2.0 * (-4.5f64).exp()).abs() < 1e-15);
        assert!((v - 0.022_217_993_076_484_612).abs() < 1e-15);
    }

    #[test]
    fn stroock_hypothesis_violation() {
        let err = stroock_bound(1.0, 2.0, 1.0, 1.0, 1).unwrap_err();
        assert!(err.to_string().contains("d^(1/2)·B·T < R"));
        assert_eq!(stroock_bound(0.0, 0.5, 1.0, 1.0, 2).unwrap(), 0.0);
    }

    #[test]
    fn stroock_decreasing_in_radius() {
        let mut prev = f64::INFINITY;
        for r in [1.0, 2.0, 4.0, 8.0, 16.0, 32.0] {
            let v = stroock_bound(1.0, 0.1, 1.0, r, 2).unwrap();
            assert!(v < prev);
            prev = v;
        }
        assert!(prev < 1e-100);
    }

    #[test]
    fn exit_profile_zero() {
        let p = ExitProfile::new(0.25).unwrap();
        assert_eq!(exit_profile_psi(&p, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn exit_profile_rejects_bad_delta() {
        assert!(ExitProfile::new(0.0).is_err());
        assert!(ExitProfile::new(0.5).is_err());
    }

    #[test]
    fn sine_bound_rejects_outside_interval() {
        assert!(sine_series_bound_check(&[0.5], 100).is_err());
        assert!(sine_series_bound_check(&[0.0], 100).is_err());
        assert!(sine_series_bound_check(&[0.1], 0).is_err());
    }

    #[test]
    fn sine_bound_single_term_lower_sanity() {
        let theta = 0.05;
        let v = abs_sine_partial(theta, 1000);
        assert!(v >= theta.sin());
        let r = sine_series_bound_check(&[theta], 1000).unwrap();
        assert!(r.rows[0].ratio >= 1.0 / (1.0 / theta).ln());
    }

    #[test]
    fn log_profile_growth_condition() {
        // s r'(s)/r(s) → 0 at the singular end for the built-in profiles.
        let small = GrowthProfile::LogReciprocal.log_derivative_ratio(1e-12);
        assert!(small.abs() < 0.04);
        let large = GrowthProfile::Log.log_derivative_ratio(1e12);
        assert!(large.abs() < 0.04);
    }

    #[test]
    fn osgood_ladder_validation() {
        let p = GrowthProfile::LogReciprocal;
        assert!(osgood_diverges(&p, 0.5, &[0.1, 0.01, 0.001]).is_err());
        assert!(osgood_diverges(&p, 0.5, &[0.1, 0.2, 0.01, 1e-3, 1e-4, 1e-5]).is_err());
        assert!(osgood_diverges(&p, 1.5, &default_osgood_ladder()).is_err());
    }
}
