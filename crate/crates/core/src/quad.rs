//! Adaptive Simpson quadrature with an absolute tolerance and a hard panel cap.

use crate::error::{Error, Result};

/// Quadrature settings shared by every integral in the crate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOptions {
    /// Absolute error target for the whole integral.
    pub abs_tol: f64,
    /// Maximum bisection depth of any panel.
    pub max_depth: u32,
    /// Maximum number of accepted panels before giving up.
    pub max_panels: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            max_depth: 60,
            max_panels: 4_000_000,
        }
    }
}

impl QuadratureOptions {
    pub fn with_tol(abs_tol: f64) -> Self {
        Self {
            abs_tol,
            ..Self::default()
        }
    }
}

struct State<'a, F> {
    f: &'a F,
    panels: usize,
    max_panels: usize,
    max_depth: u32,
}

impl<F: Fn(f64) -> f64> State<'_, F> {
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        &mut self,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64> {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = (self.f)(lm);
        let frm = (self.f)(rm);
        let h = b - a;
        let left = h / 12.0 * (fa + 4.0 * flm + fm);
        let right = h / 12.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if !delta.is_finite() {
            return Err(Error::Quadrature(format!(
                "non-finite integrand on [{a:e}, {b:e}]"
            )));
        }
        // Accept when the Richardson estimate is within tolerance, or when the
        // panel can no longer be split in floating point.
        let floor = 64.0 * f64::EPSILON * (left.abs() + right.abs());
        let unsplittable = lm == a || m == a || rm == b || m == b;
        if depth >= self.max_depth || delta.abs() <= 15.0 * tol.max(floor) || unsplittable {
            self.panels += 1;
            if self.panels > self.max_panels {
                return Err(Error::Quadrature(format!(
                    "panel cap {} exceeded",
                    self.max_panels
                )));
            }
            return Ok(left + right + delta / 15.0);
        }
        let l = self.recurse(a, m, fa, flm, fm, left, 0.5 * tol, depth + 1)?;
        let r = self.recurse(m, b, fm, frm, fb, right, 0.5 * tol, depth + 1)?;
        Ok(l + r)
    }
}

/// Integrates `f` over `[a, b]` with adaptive Simpson.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, opts: &QuadratureOptions) -> Result<f64> {
    simpson_split(f, &[a, b], opts)
}

/// Integrates over consecutive segments of `points`, spending the tolerance
/// evenly. Breakpoints are where the caller knows the integrand changes scale.
pub fn simpson_split<F: Fn(f64) -> f64>(
    f: F,
    points: &[f64],
    opts: &QuadratureOptions,
) -> Result<f64> {
    if points.len() < 2 {
        return Ok(0.0);
    }
    if points.iter().any(|p| !p.is_finite()) {
        return Err(Error::Quadrature("non-finite integration limit".into()));
    }
    let segments = points.len() - 1;
    let tol = opts.abs_tol / segments as f64;
    let mut state = State {
        f: &f,
        panels: 0,
        max_panels: opts.max_panels,
        max_depth: opts.max_depth,
    };
    let mut total = 0.0;
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a == b {
            continue;
        }
        let fa = f(a);
        let fb = f(b);
        let m = 0.5 * (a + b);
        let fm = f(m);
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        total += state.recurse(a, b, fa, fm, fb, whole, tol, 0)?;
    }
    Ok(total)
}
