//! Coefficient fields `(b, σ)` for `dX = σ(X) dW + b(X) dt`.
//!
//! A [`CoefficientField`] stores the drift and diffusion as shared closures
//! that write into caller-provided buffers; the diffusion matrix is `d × m`
//! row-major. Fields are immutable once built and cheap to clone.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{self, Purpose};

/// `x ↦ value` written into the output slice.
pub type VectorFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Sum of `1/k²` over all `k ≥ 1`.
pub const BASEL: f64 = PI * PI / 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModulusClass {
    Lipschitz,
    LogLipschitz,
    Custom,
}

/// Uniform bounds `sup |b|` (Euclidean) and `sup ||σ||` (Frobenius).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldBounds {
    pub drift: f64,
    pub diffusion: f64,
}

/// Record of a truncation to the ball `|x| ≤ radius`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationSpec {
    pub radius: f64,
    /// Estimated `sup{|b(x)|, ||σ(x)|| : |x| ≤ radius}` including the safety factor.
    pub m_r: f64,
    /// Largest value actually observed on the probes.
    pub observed_sup: f64,
    pub probe_count: usize,
}

impl TruncationSpec {
    /// Components of the truncated field lie in `[-clip, clip]`.
    pub fn clip(&self) -> f64 {
        self.m_r + 1.0
    }
}

#[derive(Clone)]
pub struct CoefficientField {
    name: String,
    dim: usize,
    noise_dim: usize,
    drift: VectorFn,
    diffusion: VectorFn,
    modulus_class: ModulusClass,
    declared_constant: Option<f64>,
    bounds: Option<FieldBounds>,
    truncation: Option<TruncationSpec>,
    /// Drift / diffusion known not to depend on the state; solvers then
    /// evaluate them once.
    const_drift: bool,
    const_diffusion: bool,
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientField")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("noise_dim", &self.noise_dim)
            .field("modulus_class", &self.modulus_class)
            .field("bounds", &self.bounds)
            .field("truncation", &self.truncation)
            .finish()
    }
}

impl CoefficientField {
    /// Builds a field from drift and diffusion closures.
    ///
    /// `diffusion` must fill a `dim * noise_dim` row-major buffer.
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        noise_dim: usize,
        drift: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        diffusion: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        modulus_class: ModulusClass,
    ) -> Result<Self> {
        if dim == 0 || noise_dim == 0 {
            return invalid("state and noise dimensions must be positive");
        }
        Ok(Self {
            name: name.into(),
            dim,
            noise_dim,
            drift: Arc::new(drift),
            diffusion: Arc::new(diffusion),
            modulus_class,
            declared_constant: None,
            bounds: None,
            truncation: None,
            const_drift: false,
            const_diffusion: false,
        })
    }

    /// `b ≡ drift`, `σ ≡ diffusion` (row-major `d × m`).
    pub fn constant(drift: Vec<f64>, diffusion: Vec<f64>, noise_dim: usize) -> Result<Self> {
        let dim = drift.len();
        if noise_dim == 0 || diffusion.len() != dim * noise_dim {
            return Err(Error::DimensionMismatch {
                expected: dim * noise_dim,
                got: diffusion.len(),
            });
        }
        let bounds = FieldBounds {
            drift: crate::norm(&drift),
            diffusion: crate::norm(&diffusion),
        };
        let d = drift.clone();
        let s = diffusion.clone();
        Ok(Self::new(
            "constant",
            dim,
            noise_dim,
            move |_, out| out.copy_from_slice(&d),
            move |_, out| out.copy_from_slice(&s),
            ModulusClass::Lipschitz,
        )?
        .with_bounds(bounds)
        .with_declared_constant(0.0)
        .state_independent(true, true))
    }

    /// `b ≡ 0`, `σ ≡ scale · I` with `d = m = dim`.
    pub fn additive_noise(dim: usize, scale: f64) -> Result<Self> {
        Self::constant(vec![0.0; dim], scaled_identity(dim, dim, scale), dim)
    }

    /// `b(x) = A x` with constant diffusion.
    pub fn linear(matrix: Vec<f64>, diffusion: Vec<f64>, noise_dim: usize) -> Result<Self> {
        let dim = (matrix.len() as f64).sqrt().round() as usize;
        if dim == 0 || dim * dim != matrix.len() {
            return invalid("linear drift matrix must be square and non-empty");
        }
        if noise_dim == 0 || diffusion.len() != dim * noise_dim {
            return Err(Error::DimensionMismatch {
                expected: dim * noise_dim,
                got: diffusion.len(),
            });
        }
        let a = matrix.clone();
        let s = diffusion.clone();
        let op_norm = crate::norm(&matrix);
        Ok(Self::new(
            "linear",
            dim,
            noise_dim,
            move |x, out| {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = a[i * dim..(i + 1) * dim]
                        .iter()
                        .zip(x)
                        .map(|(aij, xj)| aij * xj)
                        .sum();
                }
            },
            move |_, out| out.copy_from_slice(&s),
            ModulusClass::Lipschitz,
        )?
        .with_declared_constant(op_norm)
        .state_independent(false, true))
    }

    /// `b(x) = x · log(max(|x|, e))`: the borderline growth `|x| log |x|` that
    /// still excludes explosion. Diffusion is `scale · I`.
    pub fn log_growth(dim: usize, scale: f64) -> Result<Self> {
        Ok(Self::new(
            "log_growth",
            dim,
            dim,
            |x, out| {
                let l = crate::norm(x).max(std::f64::consts::E).ln();
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = xi * l;
                }
            },
            diag_fill(dim, scale),
            ModulusClass::Custom,
        )?
        .state_independent(false, true))
    }

    /// `b(x) = x · log²(max(|x|, e))`: fails the Osgood test at infinity and
    /// blows up in finite time. Diffusion is `scale · I`.
    pub fn log_sq_growth(dim: usize, scale: f64) -> Result<Self> {
        Ok(Self::new(
            "log_sq_growth",
            dim,
            dim,
            |x, out| {
                let l = crate::norm(x).max(std::f64::consts::E).ln();
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = xi * l * l;
                }
            },
            diag_fill(dim, scale),
            ModulusClass::Custom,
        )?
        .state_independent(false, true))
    }

    pub fn with_bounds(mut self, bounds: FieldBounds) -> Self {
        self.bounds = Some(bounds);
        self
    }

    pub fn with_declared_constant(mut self, c: f64) -> Self {
        self.declared_constant = Some(c);
        self
    }

    pub(crate) fn state_independent(mut self, drift: bool, diffusion: bool) -> Self {
        self.const_drift = drift;
        self.const_diffusion = diffusion;
        self
    }

    pub(crate) fn constant_parts(&self) -> (bool, bool) {
        (self.const_drift, self.const_diffusion)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn modulus_class(&self) -> ModulusClass {
        self.modulus_class
    }

    pub fn declared_constant(&self) -> Option<f64> {
        self.declared_constant
    }

    /// Uniform bounds, present for fields known to be bounded.
    pub fn bounds(&self) -> Option<FieldBounds> {
        self.bounds
    }

    pub fn truncation(&self) -> Option<TruncationSpec> {
        self.truncation
    }

    /// Unchecked drift evaluation into `out` (length `d`).
    #[inline]
    pub fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        (self.drift)(x, out)
    }

    /// Unchecked diffusion evaluation into `out` (length `d·m`, row-major).
    #[inline]
    pub fn diffusion_into(&self, x: &[f64], out: &mut [f64]) {
        (self.diffusion)(x, out)
    }

    /// Evaluates `(b(x), σ(x))`, rejecting non-finite or mis-sized input.
    pub fn eval(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if let Some((index, &value)) = x.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { index, value });
        }
        let mut b = vec![0.0; self.dim];
        let mut s = vec![0.0; self.dim * self.noise_dim];
        self.drift_into(x, &mut b);
        self.diffusion_into(x, &mut s);
        Ok((b, s))
    }
}

/// Row-major `d × m` matrix with `scale` on the leading diagonal.
pub fn scaled_identity(d: usize, m: usize, scale: f64) -> Vec<f64> {
    let mut s = vec![0.0; d * m];
    for i in 0..d.min(m) {
        s[i * m + i] = scale;
    }
    s
}

fn diag_fill(dim: usize, scale: f64) -> impl Fn(&[f64], &mut [f64]) + Send + Sync {
    let s = scaled_identity(dim, dim, scale);
    move |_, out| out.copy_from_slice(&s)
}

// ---------------------------------------------------------------------------
// Sine-series example field

/// `Σ_{k≥1} cos(kθ)/k²`, closed form `π²/6 − πθ/2 + θ²/4` on `[0, 2π]`
/// extended by evenness and 2π-periodicity.
pub fn cosine_series_sum(theta: f64) -> f64 {
    // Even and 2π-periodic: fold into [0, π] so C(θ) and C(−θ) agree bitwise.
    let mut t = theta.abs().rem_euclid(2.0 * PI);
    if t > PI {
        t = 2.0 * PI - t;
    }
    BASEL - PI * t / 2.0 + t * t / 4.0
}

/// `f(x₁, x₂) = Σ_{k≥1} sin(k x₁) sin(k x₂) / k²` via the product-to-sum
/// identity and [`cosine_series_sum`].
pub fn sine_series_exact(x1: f64, x2: f64) -> f64 {
    0.5 * (cosine_series_sum(x1 - x2) - cosine_series_sum(x1 + x2))
}

/// K-term partial sum of the sine series, summed from the smallest term up.
pub fn sine_series_partial(x1: f64, x2: f64, terms: usize) -> f64 {
    let mut acc = 0.0;
    for k in (1..=terms).rev() {
        let kf = k as f64;
        acc += (kf * x1).sin() * (kf * x2).sin() / (kf * kf);
    }
    acc
}

/// Maps the scalar `f(x)` and the point `x` to a drift vector.
pub type LiftingFn = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;

/// How the scalar series becomes a two-dimensional drift.
#[derive(Clone, Default)]
pub enum SineLifting {
    /// `b(x) = (f(x), f(x))`.
    #[default]
    Copies,
    /// `b(x) = (f(x), 0)`.
    FirstComponent,
    Custom(LiftingFn),
}

impl fmt::Debug for SineLifting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SineLifting::Copies => write!(f, "Copies"),
            SineLifting::FirstComponent => write!(f, "FirstComponent"),
            SineLifting::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// The two-dimensional log-Lipschitz example field built from the sine series.
#[derive(Debug, Clone)]
pub struct SineSeriesField {
    terms: Option<usize>,
    diffusion_scale: f64,
    lifting: SineLifting,
    field: CoefficientField,
}

/// Default number of terms when a truncated series is requested.
pub const DEFAULT_SINE_TERMS: usize = 100_000;

/// K-term sine-series field with zero diffusion.
pub fn sine_series_field(terms: usize) -> Result<SineSeriesField> {
    if terms == 0 {
        return invalid("sine series needs at least one term");
    }
    SineSeriesField::build(Some(terms), 0.0, SineLifting::Copies)
}

impl SineSeriesField {
    /// The full series, evaluated in closed form.
    pub fn exact() -> Self {
        Self::build(None, 0.0, SineLifting::Copies).expect("valid defaults")
    }

    fn build(terms: Option<usize>, diffusion_scale: f64, lifting: SineLifting) -> Result<Self> {
        let scalar = move |x1: f64, x2: f64| match terms {
            Some(k) => sine_series_partial(x1, x2, k),
            None => sine_series_exact(x1, x2),
        };
        let lift = lifting.clone();
        let drift = move |x: &[f64], out: &mut [f64]| {
            let v = scalar(x[0], x[1]);
            match &lift {
                SineLifting::Copies => {
                    out[0] = v;
                    out[1] = v;
                }
                SineLifting::FirstComponent => {
                    out[0] = v;
                    out[1] = 0.0;
                }
                SineLifting::Custom(g) => g(v, x, out),
            }
        };
        let drift_bound = match lifting {
            SineLifting::Copies => 2f64.sqrt() * BASEL,
            SineLifting::FirstComponent => BASEL,
            SineLifting::Custom(_) => f64::INFINITY,
        };
        let mut field = CoefficientField::new(
            "sine_series",
            2,
            2,
            drift,
            diag_fill(2, diffusion_scale),
            ModulusClass::LogLipschitz,
        )?
        .state_independent(false, true);
        if drift_bound.is_finite() {
            field = field.with_bounds(FieldBounds {
                drift: drift_bound,
                diffusion: 2f64.sqrt() * diffusion_scale.abs(),
            });
        }
        Ok(Self {
            terms,
            diffusion_scale,
            lifting,
            field,
        })
    }

    /// Replaces the diffusion with `scale · I₂` (noise dimension 2).
    pub fn with_diffusion(self, scale: f64) -> Self {
        Self::build(self.terms, scale, self.lifting).expect("dimensions unchanged")
    }

    pub fn with_lifting(self, lifting: SineLifting) -> Self {
        Self::build(self.terms, self.diffusion_scale, lifting).expect("dimensions unchanged")
    }

    /// Number of series terms; `None` for the closed form.
    pub fn terms(&self) -> Option<usize> {
        self.terms
    }

    pub fn diffusion_scale(&self) -> f64 {
        self.diffusion_scale
    }

    /// Uniform bound on the evaluation error against the full series.
    pub fn tail_bound(&self) -> f64 {
        self.terms.map_or(0.0, |k| 1.0 / k as f64)
    }

    /// The scalar series value.
    pub fn f(&self, x1: f64, x2: f64) -> f64 {
        match self.terms {
            Some(k) => sine_series_partial(x1, x2, k),
            None => sine_series_exact(x1, x2),
        }
    }

    pub fn field(&self) -> &CoefficientField {
        &self.field
    }

    pub fn into_field(self) -> CoefficientField {
        self.field
    }
}

impl AsRef<CoefficientField> for SineSeriesField {
    fn as_ref(&self) -> &CoefficientField {
        &self.field
    }
}

impl From<SineSeriesField> for CoefficientField {
    fn from(s: SineSeriesField) -> Self {
        s.field
    }
}

// ---------------------------------------------------------------------------
// Truncation

/// Default multiplier applied to the probed supremum.
pub const TRUNCATION_SAFETY: f64 = 1.05;

/// Truncates to bounded coefficients with the default safety factor.
pub fn truncate_field(
    field: &CoefficientField,
    radius: f64,
    probe_count: usize,
) -> Result<CoefficientField> {
    truncate_field_with(field, radius, probe_count, TRUNCATION_SAFETY)
}

/// Clips every drift component and diffusion entry to `[-m_R-1, m_R+1]`,
/// where `m_R` is `safety` times the largest `|b|` or `||σ||` seen on a
/// Halton sample of the ball `|x| ≤ radius` plus the origin and the axis
/// points `±radius·e_i`.
pub fn truncate_field_with(
    field: &CoefficientField,
    radius: f64,
    probe_count: usize,
    safety: f64,
) -> Result<CoefficientField> {
    if !(radius > 0.0) || !radius.is_finite() {
        return invalid(format!("truncation radius must be positive, got {radius}"));
    }
    if probe_count == 0 {
        return invalid("probe_count must be at least 1");
    }
    if !(safety >= 1.0) {
        return invalid("safety factor must be at least 1");
    }
    let d = field.dim();
    let m = field.noise_dim();
    let mut b = vec![0.0; d];
    let mut s = vec![0.0; d * m];
    let mut observed: f64 = 0.0;
    let mut probe = |x: &[f64]| {
        field.drift_into(x, &mut b);
        field.diffusion_into(x, &mut s);
        observed = observed.max(crate::norm(&b)).max(crate::norm(&s));
    };
    for p in ball_probes(d, radius, probe_count) {
        probe(&p);
    }
    if !observed.is_finite() {
        return Err(Error::Unbounded(format!(
            "coefficients are not finite inside the ball of radius {radius}"
        )));
    }
    let spec = TruncationSpec {
        radius,
        m_r: safety * observed,
        observed_sup: observed,
        probe_count,
    };
    let clip = spec.clip();
    let base_d = field.clone();
    let base_s = field.clone();
    let mut out = CoefficientField::new(
        format!("truncated:{}:{}", field.name(), radius),
        d,
        m,
        move |x, out| {
            base_d.drift_into(x, out);
            for v in out.iter_mut() {
                *v = v.clamp(-clip, clip);
            }
        },
        move |x, out| {
            base_s.diffusion_into(x, out);
            for v in out.iter_mut() {
                *v = v.clamp(-clip, clip);
            }
        },
        field.modulus_class(),
    )?;
    let mut bounds = FieldBounds {
        drift: (d as f64).sqrt() * clip,
        diffusion: ((d * m) as f64).sqrt() * clip,
    };
    if let Some(inner) = field.bounds() {
        bounds.drift = bounds.drift.min(inner.drift);
        bounds.diffusion = bounds.diffusion.min(inner.diffusion);
    }
    out.bounds = Some(bounds);
    out.declared_constant = field.declared_constant();
    out.truncation = Some(spec);
    Ok(out)
}

/// Probe points used by [`truncate_field_with`]: origin, `±radius·e_i`, then
/// `probe_count` Halton points of `[-radius, radius]^d` that fall in the ball.
pub fn ball_probes(dim: usize, radius: f64, probe_count: usize) -> Vec<Vec<f64>> {
    let mut pts = Vec::with_capacity(probe_count + 2 * dim + 1);
    pts.push(vec![0.0; dim]);
    for i in 0..dim {
        for sgn in [1.0, -1.0] {
            let mut p = vec![0.0; dim];
            p[i] = sgn * radius;
            pts.push(p);
        }
    }
    let mut index = 1u64;
    let mut accepted = 0;
    while accepted < probe_count {
        let p: Vec<f64> = (0..dim)
            .map(|j| radius * (2.0 * halton(index, PRIMES[j % PRIMES.len()]) - 1.0))
            .collect();
        index += 1;
        if crate::norm(&p) <= radius {
            pts.push(p);
            accepted += 1;
        }
    }
    pts
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn halton(mut index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let b = base as f64;
    while index > 0 {
        f /= b;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

// ---------------------------------------------------------------------------
// Empirical modulus

/// Pair-sampling distribution for [`estimate_modulus`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairSampling {
    /// Centres are uniform in `[-center_half_width, center_half_width]^d`.
    pub center_half_width: f64,
    /// Offsets have log-uniform length in `[min_distance, max_distance)`.
    pub min_distance: f64,
    pub max_distance: f64,
}

impl Default for PairSampling {
    fn default() -> Self {
        Self {
            center_half_width: 2.0,
            min_distance: 1e-8,
            max_distance: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulusEstimate {
    /// `max ||σ(x)−σ(y)||² / (|x−y|² log(1/|x−y|))`.
    pub c_sigma: f64,
    /// `max |b(x)−b(y)| / (|x−y| log(1/|x−y|))`.
    pub c_drift: f64,
    pub pairs: usize,
    pub skipped: usize,
}

/// Largest observed log-Lipschitz ratios over `pair_count` seeded pairs with
/// `0 < |x−y| < 1`, using [`PairSampling::default`].
///
/// The `i`-th pair depends only on `(seed, i)`, so samples are nested in
/// `pair_count`. Ratios blow up as `|x−y| → 1` for any non-constant field
/// because `log(1/|x−y|) → 0`; this is a property of the modulus, not noise.
pub fn estimate_modulus(
    field: &CoefficientField,
    pair_count: usize,
    seed: u64,
) -> Result<ModulusEstimate> {
    estimate_modulus_with(field, pair_count, seed, &PairSampling::default())
}

pub fn estimate_modulus_with(
    field: &CoefficientField,
    pair_count: usize,
    seed: u64,
    sampling: &PairSampling,
) -> Result<ModulusEstimate> {
    if pair_count == 0 {
        return invalid("pair_count must be at least 1");
    }
    if !(sampling.min_distance > 0.0
        && sampling.min_distance < sampling.max_distance
        && sampling.max_distance <= 1.0)
    {
        return invalid("pair distances must satisfy 0 < min < max ≤ 1");
    }
    let d = field.dim();
    let m = field.noise_dim();
    let mut rng = rng::stream(seed, 0, 0, Purpose::ModulusPairs);
    let (lo, hi) = (sampling.min_distance.ln(), sampling.max_distance.ln());
    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    let mut dir = vec![0.0; d];
    let (mut bx, mut by) = (vec![0.0; d], vec![0.0; d]);
    let (mut sx, mut sy) = (vec![0.0; d * m], vec![0.0; d * m]);
    let mut est = ModulusEstimate {
        c_sigma: 0.0,
        c_drift: 0.0,
        pairs: 0,
        skipped: 0,
    };
    let w = sampling.center_half_width;
    for _ in 0..pair_count {
        // Resample until the realised distance lies in (0, 1).
        let delta = loop {
            for xi in x.iter_mut() {
                *xi = rng.random_range(-w..=w);
            }
            let mut n = 0.0;
            while n == 0.0 {
                for v in dir.iter_mut() {
                    *v = rng::normal(&mut rng);
                }
                n = crate::norm(&dir);
            }
            let r = (lo + (hi - lo) * rng.random::<f64>()).exp();
            for i in 0..d {
                y[i] = x[i] + r * dir[i] / n;
            }
            let delta = crate::dist(&x, &y);
            if delta == 0.0 {
                est.skipped += 1;
                continue;
            }
            if delta >= 1.0 {
                continue;
            }
            break delta;
        };
        field.drift_into(&x, &mut bx);
        field.drift_into(&y, &mut by);
        field.diffusion_into(&x, &mut sx);
        field.diffusion_into(&y, &mut sy);
        let log_inv = (1.0 / delta).ln();
        let db = crate::dist(&bx, &by);
        let ds2 = sx.iter().zip(&sy).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        est.c_drift = est.c_drift.max(db / (delta * log_inv));
        est.c_sigma = est.c_sigma.max(ds2 / (delta * delta * log_inv));
        est.pairs += 1;
    }
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_field_eval() {
        let f = CoefficientField::additive_noise(2, 1.0).unwrap();
        let (b, s) = f.eval(&[3.0, -1.0]).unwrap();
        assert_eq!(b, vec![0.0, 0.0]);
        assert_eq!(s, vec![1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn non_finite_input_names_coordinate() {
        let f = CoefficientField::additive_noise(3, 1.0).unwrap();
        let err = f.eval(&[0.0, f64::NAN, 1.0]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 1, .. }));
        assert!(err.to_string().contains("coordinate 1"));
    }

    #[test]
    fn sine_drift_vanishes_on_axis() {
        let s = SineSeriesField::exact();
        let (b, _) = s.field().eval(&[0.0, 5.7]).unwrap();
        assert_eq!(b[0], 0.0);
        let s = sine_series_field(1000).unwrap();
        let (b, _) = s.field().eval(&[0.0, 5.7]).unwrap();
        assert_eq!(b[0], 0.0);
    }

    #[test]
    fn sine_single_term() {
        let s = sine_series_field(1).unwrap();
        assert!((s.f(PI / 2.0, PI / 2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_terms_rejected() {
        assert!(sine_series_field(0).is_err());
    }

    #[test]
    fn closed_form_at_quarter_period() {
        assert!((sine_series_exact(PI / 2.0, PI / 2.0) - PI * PI / 8.0).abs() < 1e-14);
    }

    #[test]
    fn quadratic_truncation_example() {
        let f = CoefficientField::new(
            "square",
            1,
            1,
            |x, o| o[0] = x[0] * x[0],
            |_, o| o[0] = 0.0,
            ModulusClass::Custom,
        )
        .unwrap();
        let t = truncate_field_with(&f, 2.0, 64, 1.0).unwrap();
        assert_eq!(t.truncation().unwrap().m_r, 4.0);
        let (b, _) = t.eval(&[3.0]).unwrap();
        assert_eq!(b[0], 5.0);
        let (b, _) = t.eval(&[1.5]).unwrap();
        assert_eq!(b[0], 2.25);
        // default safety factor widens the clip band
        let t = truncate_field(&f, 2.0, 64).unwrap();
        let (b, _) = t.eval(&[3.0]).unwrap();
        assert!((b[0] - 5.2).abs() < 1e-12);
    }

    #[test]
    fn truncation_rejects_bad_radius() {
        let f = CoefficientField::additive_noise(1, 1.0).unwrap();
        assert!(truncate_field(&f, 0.0, 10).is_err());
        assert!(truncate_field(&f, -1.0, 10).is_err());
        assert!(truncate_field(&f, 1.0, 0).is_err());
    }

    #[test]
    fn constant_modulus_is_zero() {
        let f = CoefficientField::constant(vec![1.0, 2.0], scaled_identity(2, 2, 0.5), 2).unwrap();
        let e = estimate_modulus(&f, 1000, 3).unwrap();
        assert_eq!((e.c_sigma, e.c_drift), (0.0, 0.0));
    }

    #[test]
    fn linear_modulus_ratio() {
        // b(x) = 2x: ratio 2/log(1/δ), which equals 2 at δ = 1/e and
        // exceeds it for every δ > 1/e.
        let f = CoefficientField::linear(vec![2.0], vec![0.0], 1).unwrap();
        let e = estimate_modulus(&f, 10_000, 1).unwrap();
        assert!(e.c_drift.is_finite());
        assert!(e.c_drift >= 2.0);
        let narrow = PairSampling {
            max_distance: (-1.0f64).exp(),
            ..PairSampling::default()
        };
        let e = estimate_modulus_with(&f, 10_000, 1, &narrow).unwrap();
        assert!(e.c_drift <= 2.0 + 1e-9, "{}", e.c_drift);
        assert!(e.c_drift > 1.9);
    }
}
