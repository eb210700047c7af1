//! The controlled ODE `ẋ = b(x) + σ(x) ġ` and its Euler polygon.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeffs::CoefficientField;
use crate::error::{invalid, Error, Result};
use crate::paths::{energy, Control, ExitRecord, GridPath, TimeGrid, Trajectory};
use crate::rng::{self, Purpose};

/// A solution is declared exploded when its norm exceeds `max_norm`, when a
/// single step multiplies the norm by more than `max_growth`, or when it
/// stops being finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplosionGuard {
    pub max_norm: f64,
    pub max_growth: f64,
}

impl Default for ExplosionGuard {
    fn default() -> Self {
        Self {
            max_norm: 1e12,
            max_growth: 1e6,
        }
    }
}

impl ExplosionGuard {
    #[inline]
    pub fn breached(&self, prev_norm: f64, next_norm: f64) -> bool {
        !next_norm.is_finite()
            || next_norm > self.max_norm
            || next_norm > self.max_growth * prev_norm.max(1.0)
    }

    /// [`ExplosionGuard::breached`] on squared norms.
    #[inline]
    pub fn breached_sq(&self, prev_sq: f64, next_sq: f64) -> bool {
        !next_sq.is_finite()
            || next_sq > self.max_norm * self.max_norm
            || next_sq > self.max_growth * self.max_growth * prev_sq.max(1.0)
    }
}

/// Scratch buffers for coefficient evaluations. State-independent parts
/// are evaluated once, at creation.
pub(crate) struct Workspace {
    pub b: Vec<f64>,
    pub s: Vec<f64>,
    const_b: bool,
    const_s: bool,
}

impl Workspace {
    pub fn new(field: &CoefficientField) -> Self {
        let (const_b, const_s) = field.constant_parts();
        let mut ws = Self {
            b: vec![0.0; field.dim()],
            s: vec![0.0; field.dim() * field.noise_dim()],
            const_b,
            const_s,
        };
        let origin = vec![0.0; field.dim()];
        if const_b {
            field.drift_into(&origin, &mut ws.b);
        }
        if const_s {
            field.diffusion_into(&origin, &mut ws.s);
        }
        ws
    }

    #[inline]
    pub fn load(&mut self, field: &CoefficientField, x: &[f64]) {
        if !self.const_b {
            field.drift_into(x, &mut self.b);
        }
        if !self.const_s {
            field.diffusion_into(x, &mut self.s);
        }
    }
}

/// `out = x + b·h + σ·dw` with `b`, `σ` already loaded in `ws`. Every Euler
/// variant in the crate goes through this function so their arithmetic agrees.
#[inline]
pub(crate) fn polygon_point(x: &[f64], h: f64, ws: &Workspace, dw: &[f64], out: &mut [f64]) {
    let m = dw.len();
    for i in 0..x.len() {
        let mut acc = x[i] + ws.b[i] * h;
        let row = &ws.s[i * m..(i + 1) * m];
        for j in 0..m {
            acc += row[j] * dw[j];
        }
        out[i] = acc;
    }
}

fn check_start(field: &CoefficientField, x0: &[f64]) -> Result<()> {
    if x0.len() != field.dim() {
        return Err(Error::DimensionMismatch {
            expected: field.dim(),
            got: x0.len(),
        });
    }
    if let Some((index, &value)) = x0.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite { index, value });
    }
    Ok(())
}

fn check_driver(field: &CoefficientField, driver: &GridPath) -> Result<()> {
    if driver.dim() != field.noise_dim() {
        return Err(Error::DimensionMismatch {
            expected: field.noise_dim(),
            got: driver.dim(),
        });
    }
    Ok(())
}

/// Euler polygon `F_n(ω)` at the nodes of the driver's grid:
/// `x_{k+1} = x_k + b(x_k) T/n + σ(x_k)(ω(t_{k+1}) − ω(t_k))`.
pub fn euler_polygon(
    field: &CoefficientField,
    driver: &GridPath,
    x0: &[f64],
) -> Result<Trajectory> {
    euler_polygon_guarded(field, driver, x0, &ExplosionGuard::default())
}

pub fn euler_polygon_guarded(
    field: &CoefficientField,
    driver: &GridPath,
    x0: &[f64],
    guard: &ExplosionGuard,
) -> Result<Trajectory> {
    check_start(field, x0)?;
    check_driver(field, driver)?;
    let grid = *driver.grid();
    let d = field.dim();
    let h = grid.dt();
    let mut ws = Workspace::new(field);
    let mut dw = vec![0.0; field.noise_dim()];
    let mut states = Vec::with_capacity(grid.nodes() * d);
    states.extend_from_slice(x0);
    let mut next = vec![0.0; d];
    let mut prev_norm = crate::norm(x0);
    for k in 0..grid.steps() {
        let x = &states[k * d..(k + 1) * d];
        ws.load(field, x);
        let (a, b) = (driver.node(k), driver.node(k + 1));
        for j in 0..dw.len() {
            dw[j] = b[j] - a[j];
        }
        polygon_point(x, h, &ws, &dw, &mut next);
        let nn = crate::norm(&next);
        if guard.breached(prev_norm, nn) {
            let rec = ExitRecord {
                time: grid.t(k + 1),
                step: k + 1,
                norm: nn,
            };
            return Ok(Trajectory::from_parts(grid, d, states, Some(rec)));
        }
        states.extend_from_slice(&next);
        prev_norm = nn;
    }
    Ok(Trajectory::from_parts(grid, d, states, None))
}

/// Euler polygon with `substeps` polygon steps' worth of interior points:
/// the recursion runs on the coarse grid with `steps / substeps` steps and
/// each interior fine node is filled with
/// `x_k + b(x_k)(t − t_k) + σ(x_k)(ω(t) − ω(t_k))`.
///
/// Coarse node values are bitwise identical to [`euler_polygon`] applied to
/// the restricted driver.
pub fn euler_polygon_dense(
    field: &CoefficientField,
    fine_driver: &GridPath,
    x0: &[f64],
    substeps: usize,
    guard: &ExplosionGuard,
) -> Result<Trajectory> {
    check_start(field, x0)?;
    check_driver(field, fine_driver)?;
    let fine = *fine_driver.grid();
    if substeps == 0 || fine.steps() % substeps != 0 {
        return Err(Error::IncompatibleGrids(format!(
            "{} fine steps are not a multiple of {substeps}",
            fine.steps()
        )));
    }
    let coarse = TimeGrid::new(fine.horizon(), fine.steps() / substeps)?;
    let d = field.dim();
    let m = field.noise_dim();
    let h = coarse.dt();
    let hf = fine.dt();
    let mut ws = Workspace::new(field);
    let mut dw = vec![0.0; m];
    let mut states = Vec::with_capacity(fine.nodes() * d);
    states.extend_from_slice(x0);
    let mut xk = x0.to_vec();
    let mut next = vec![0.0; d];
    let mut prev_norm = crate::norm(x0);
    for k in 0..coarse.steps() {
        ws.load(field, &xk);
        let base = k * substeps;
        let a = fine_driver.node(base);
        for j in 1..=substeps {
            let b = fine_driver.node(base + j);
            for l in 0..m {
                dw[l] = b[l] - a[l];
            }
            if j == substeps {
                polygon_point(&xk, h, &ws, &dw, &mut next);
            } else {
                polygon_point(&xk, j as f64 * hf, &ws, &dw, &mut next);
            }
            let nn = crate::norm(&next);
            if guard.breached(prev_norm, nn) {
                let rec = ExitRecord {
                    time: fine.t(base + j),
                    step: base + j,
                    norm: nn,
                };
                return Ok(Trajectory::from_parts(fine, d, states, Some(rec)));
            }
            states.extend_from_slice(&next);
            if j == substeps {
                prev_norm = nn;
            }
        }
        xk.copy_from_slice(&next);
    }
    Ok(Trajectory::from_parts(fine, d, states, None))
}

// ---------------------------------------------------------------------------
// Skeleton ODE

#[derive(Debug, Clone)]
pub struct SkeletonProblem {
    pub field: CoefficientField,
    pub control: Control,
    pub x0: Vec<f64>,
    /// Solver mesh; its step count must be a multiple of the control's.
    pub grid: TimeGrid,
    pub guard: ExplosionGuard,
}

impl SkeletonProblem {
    pub fn new(field: CoefficientField, control: Control, x0: Vec<f64>, grid: TimeGrid) -> Self {
        Self {
            field,
            control,
            x0,
            grid,
            guard: ExplosionGuard::default(),
        }
    }
}

/// Solves `F(g)(t) = x₀ + ∫ b(F(g)) ds + ∫ σ(F(g)) ġ ds` with classical RK4.
/// `ġ` is constant on each control segment and the solver mesh refines the
/// control mesh, so every step sees a single control slope.
pub fn solve_skeleton(p: &SkeletonProblem) -> Result<Trajectory> {
    let field = &p.field;
    check_start(field, &p.x0)?;
    if p.control.dim() != field.noise_dim() {
        return Err(Error::DimensionMismatch {
            expected: field.noise_dim(),
            got: p.control.dim(),
        });
    }
    let Some(r) = p.control.grid().refinement_factor(&p.grid) else {
        return Err(Error::IncompatibleGrids(format!(
            "solver mesh ({} steps, T = {}) must refine the control mesh ({} steps, T = {})",
            p.grid.steps(),
            p.grid.horizon(),
            p.control.grid().steps(),
            p.control.grid().horizon()
        )));
    };
    let d = field.dim();
    let h = p.grid.dt();
    let mut ws = Workspace::new(field);
    let mut gdot = vec![0.0; field.noise_dim()];
    let mut k1 = vec![0.0; d];
    let mut k2 = vec![0.0; d];
    let mut k3 = vec![0.0; d];
    let mut k4 = vec![0.0; d];
    let mut tmp = vec![0.0; d];
    let mut states = Vec::with_capacity(p.grid.nodes() * d);
    states.extend_from_slice(&p.x0);
    let mut x = p.x0.clone();
    let mut prev_norm = crate::norm(&x);
    let zero = vec![0.0; d];
    let rhs = |ws: &mut Workspace, y: &[f64], g: &[f64], out: &mut [f64]| {
        ws.load(field, y);
        polygon_point(&zero, 1.0, ws, g, out);
    };
    for k in 0..p.grid.steps() {
        if k % r == 0 {
            p.control.slope(k / r, &mut gdot);
        }
        rhs(&mut ws, &x, &gdot, &mut k1);
        for i in 0..d {
            tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        rhs(&mut ws, &tmp, &gdot, &mut k2);
        for i in 0..d {
            tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        rhs(&mut ws, &tmp, &gdot, &mut k3);
        for i in 0..d {
            tmp[i] = x[i] + h * k3[i];
        }
        rhs(&mut ws, &tmp, &gdot, &mut k4);
        for i in 0..d {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let nn = crate::norm(&x);
        if p.guard.breached(prev_norm, nn) {
            let rec = ExitRecord {
                time: p.grid.t(k + 1),
                step: k + 1,
                norm: nn,
            };
            return Ok(Trajectory::from_parts(p.grid, d, states, Some(rec)));
        }
        states.extend_from_slice(&x);
        prev_norm = nn;
    }
    Ok(Trajectory::from_parts(p.grid, d, states, None))
}

/// Uncontrolled flow `ẋ = b(x)` on `grid`.
pub fn solve_ode(field: &CoefficientField, x0: &[f64], grid: TimeGrid) -> Result<Trajectory> {
    let control = Control::zero(TimeGrid::new(grid.horizon(), 1)?, field.noise_dim());
    solve_skeleton(&SkeletonProblem::new(
        field.clone(),
        control,
        x0.to_vec(),
        grid,
    ))
}

// ---------------------------------------------------------------------------
// Uniform convergence harness

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    /// `max_g sup_t |F_n(g)(t) − F(g)(t)|` over the sampled controls.
    pub sup_error: f64,
    /// `max_g sup_t |F_n(g)(t) − F_n(g)([nt]/n)|`.
    pub max_step_increment: f64,
    /// `C_α (T/n)^{1/2}` with `C_α = sup|b| + sup||σ|| α^{1/2}`.
    pub step_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// States the finite-sample nature of the supremum over controls.
    pub header: String,
    pub alpha: f64,
    pub controls: usize,
    pub reference_steps: usize,
    pub c_alpha: f64,
    pub rows: Vec<ConvergenceRow>,
    pub strictly_decreasing: bool,
    /// Set when the last error is not below the first.
    pub violation: bool,
    pub step_bound_holds: bool,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

/// Compares `F_n(g)` with a reference `F(g)` (RK4 on a mesh at least eight
/// times the finest `n`) for every sampled control.
pub fn uniform_convergence_report(
    field: &CoefficientField,
    controls: &[Control],
    alpha: f64,
    n_ladder: &[usize],
    x0: &[f64],
) -> Result<ConvergenceReport> {
    let Some(bounds) = field.bounds() else {
        return Err(Error::Unbounded(
            "uniform convergence needs bounded coefficients; truncate the field with truncate_field first"
                .into(),
        ));
    };
    if controls.is_empty() {
        return invalid("at least one control is required");
    }
    if n_ladder.is_empty() || n_ladder.windows(2).any(|w| w[1] <= w[0]) || n_ladder[0] == 0 {
        return invalid("n ladder must be strictly increasing and positive");
    }
    let horizon = controls[0].grid().horizon();
    for (i, g) in controls.iter().enumerate() {
        if g.grid().horizon() != horizon {
            return Err(Error::IncompatibleGrids("controls have different horizons".into()));
        }
        let e = energy(g);
        if e > alpha * (1.0 + 1e-12) {
            return invalid(format!("control {i} has energy {e} > alpha = {alpha}"));
        }
    }
    let max_n = *n_ladder.last().unwrap();
    let mut l = controls
        .iter()
        .fold(1, |acc, g| lcm(acc, g.grid().steps()));
    for &n in n_ladder {
        l = lcm(l, n);
    }
    let reference_steps = l * (8 * max_n).div_ceil(l);
    let ref_grid = TimeGrid::new(horizon, reference_steps)?;
    let guard = ExplosionGuard::default();
    let per_control: Vec<Vec<(f64, f64)>> = controls
        .par_iter()
        .map(|g| -> Result<Vec<(f64, f64)>> {
            let reference = solve_skeleton(&SkeletonProblem::new(
                field.clone(),
                g.clone(),
                x0.to_vec(),
                ref_grid,
            ))?;
            if let Some(e) = reference.explosion() {
                return Err(Error::Exploded { time: e.time });
            }
            let driver = g.sample_on(ref_grid)?;
            n_ladder
                .iter()
                .map(|&n| {
                    let s = reference_steps / n;
                    let poly = euler_polygon_dense(field, &driver, x0, s, &guard)?;
                    if let Some(e) = poly.explosion() {
                        return Err(Error::Exploded { time: e.time });
                    }
                    let mut err: f64 = 0.0;
                    let mut inc: f64 = 0.0;
                    for i in 0..poly.len() {
                        err = err.max(crate::dist(poly.node(i), reference.node(i)));
                        inc = inc.max(crate::dist(poly.node(i), poly.node(i / s * s)));
                    }
                    Ok((err, inc))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let c_alpha = bounds.drift + bounds.diffusion * alpha.sqrt();
    let rows: Vec<ConvergenceRow> = n_ladder
        .iter()
        .enumerate()
        .map(|(j, &n)| ConvergenceRow {
            n,
            sup_error: per_control.iter().map(|v| v[j].0).fold(0.0, f64::max),
            max_step_increment: per_control.iter().map(|v| v[j].1).fold(0.0, f64::max),
            step_bound: c_alpha * (horizon / n as f64).sqrt(),
        })
        .collect();
    let strictly_decreasing = rows.windows(2).all(|w| w[1].sup_error < w[0].sup_error);
    let violation = rows.len() > 1 && rows[rows.len() - 1].sup_error >= rows[0].sup_error;
    let step_bound_holds = rows
        .iter()
        .all(|r| r.max_step_increment <= r.step_bound * (1.0 + 1e-12));
    Ok(ConvergenceReport {
        header: format!(
            "supremum over {} sampled controls with e(g) <= {alpha}, not over the full energy ball",
            controls.len()
        ),
        alpha,
        controls: controls.len(),
        reference_steps,
        c_alpha,
        rows,
        strictly_decreasing,
        violation,
        step_bound_holds,
    })
}

/// `count` seeded controls on `grid` with energies `α·u`, `u ~ U(0, 1]`.
/// Directions are Gaussian increments, so the sample covers rough and
/// smooth shapes alike.
pub fn sample_controls(
    count: usize,
    grid: TimeGrid,
    m: usize,
    alpha: f64,
    seed: u64,
) -> Result<Vec<Control>> {
    (0..count as u64)
        .map(|i| {
            let mut rng = rng::stream(seed, i, 0, Purpose::Controls);
            let inc: Vec<f64> = (0..grid.steps() * m).map(|_| rng::normal(&mut rng)).collect();
            let target = alpha * (1.0 - rng.random::<f64>());
            let raw = Control::from_increments(grid, m, &inc)?;
            let e = energy(&raw);
            let scale = if e > 0.0 { (target / e).sqrt() } else { 0.0 };
            let scaled: Vec<f64> = inc.iter().map(|v| v * scale).collect();
            Control::from_increments(grid, m, &scaled)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Non-confluence

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Passed,
    Failed,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonconfluenceReport {
    pub min_separation: f64,
    pub argmin_time: f64,
    pub outcome: Outcome,
}

/// Solves the uncontrolled flow from `x0` and `y0` on the same mesh and
/// reports their smallest separation.
pub fn ode_nonconfluence(
    field: &CoefficientField,
    x0: &[f64],
    y0: &[f64],
    grid: TimeGrid,
) -> Result<NonconfluenceReport> {
    if x0 == y0 {
        return invalid("x0 and y0 must differ");
    }
    let a = solve_ode(field, x0, grid)?;
    let b = solve_ode(field, y0, grid)?;
    let shared = a.len().min(b.len());
    let (mut min, mut at) = (f64::INFINITY, 0.0);
    for k in 0..shared {
        let s = crate::dist(a.node(k), b.node(k));
        if s < min {
            min = s;
            at = grid.t(k);
        }
    }
    let outcome = if a.is_exploded() || b.is_exploded() {
        Outcome::Inconclusive
    } else if min > 0.0 {
        Outcome::Passed
    } else {
        Outcome::Failed
    };
    Ok(NonconfluenceReport {
        min_separation: min,
        argmin_time: at,
        outcome,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::scaled_identity;

    #[test]
    fn constant_derivative_control_is_exact() {
        let field = CoefficientField::additive_noise(2, 1.0).unwrap();
        let g = Control::linear(TimeGrid::unit(4).unwrap(), &[0.5, -2.0]);
        let p = SkeletonProblem::new(field, g, vec![1.0, 1.0], TimeGrid::unit(16).unwrap());
        let tr = solve_skeleton(&p).unwrap();
        for k in 0..tr.len() {
            let t = tr.grid().t(k);
            assert!((tr.node(k)[0] - (1.0 + 0.5 * t)).abs() < 1e-14);
            assert!((tr.node(k)[1] - (1.0 - 2.0 * t)).abs() < 1e-14);
        }
    }

    #[test]
    fn exponential_growth_rk4() {
        let field = CoefficientField::linear(vec![1.0], vec![0.0], 1).unwrap();
        let tr = solve_ode(&field, &[1.0], TimeGrid::unit(1024).unwrap()).unwrap();
        assert!((tr.last()[0] - std::f64::consts::E).abs() < 1e-8);
    }

    #[test]
    fn mesh_must_refine_control() {
        let field = CoefficientField::additive_noise(1, 1.0).unwrap();
        let g = Control::zero(TimeGrid::unit(3).unwrap(), 1);
        let p = SkeletonProblem::new(field, g, vec![0.0], TimeGrid::unit(8).unwrap());
        assert!(matches!(solve_skeleton(&p), Err(Error::IncompatibleGrids(_))));
    }

    #[test]
    fn polygon_constant_drift() {
        let field = CoefficientField::constant(vec![2.0, -1.0], vec![0.0; 2], 1).unwrap();
        let grid = TimeGrid::unit(10).unwrap();
        let tr = euler_polygon(&field, &GridPath::zeros(grid, 1), &[1.0, 0.0]).unwrap();
        for k in 0..tr.len() {
            let t = grid.t(k);
            assert!((tr.node(k)[0] - (1.0 + 2.0 * t)).abs() < 1e-14);
            assert!((tr.node(k)[1] + t).abs() < 1e-14);
        }
    }

    #[test]
    fn explosion_flagged() {
        let field = CoefficientField::linear(vec![50.0], vec![0.0], 1).unwrap();
        let grid = TimeGrid::unit(100).unwrap();
        let tr = euler_polygon(&field, &GridPath::zeros(grid, 1), &[1.0]).unwrap();
        let rec = tr.explosion().expect("should explode");
        assert!(rec.norm > 1e12);
        assert_eq!(tr.len(), rec.step);
    }

    #[test]
    fn unbounded_field_rejected_by_harness() {
        let field = CoefficientField::linear(vec![1.0], vec![1.0], 1).unwrap();
        let g = vec![Control::zero(TimeGrid::unit(4).unwrap(), 1)];
        let err = uniform_convergence_report(&field, &g, 1.0, &[4, 8], &[0.0]).unwrap_err();
        assert!(matches!(err, Error::Unbounded(ref m) if m.contains("truncate")));
    }

    #[test]
    fn constant_drift_harness_is_exact() {
        let field =
            CoefficientField::constant(vec![0.3, 0.1], scaled_identity(2, 2, 0.0), 2).unwrap();
        let g = vec![Control::zero(TimeGrid::unit(4).unwrap(), 2)];
        let r = uniform_convergence_report(&field, &g, 1.0, &[4, 8, 16], &[0.0, 0.0]).unwrap();
        for row in &r.rows {
            assert!(row.sup_error < 1e-15, "{row:?}");
        }
    }

    #[test]
    fn nonconfluence_frozen_and_contracting() {
        let zero = CoefficientField::additive_noise(2, 0.0).unwrap();
        let grid = TimeGrid::unit(64).unwrap();
        let r = ode_nonconfluence(&zero, &[0.0, 0.0], &[0.3, 0.4], grid).unwrap();
        assert!((r.min_separation - 0.5).abs() < 1e-15);
        assert_eq!(r.outcome, Outcome::Passed);

        let contract = CoefficientField::linear(vec![-1.0], vec![0.0], 1).unwrap();
        let grid = TimeGrid::unit(1024).unwrap();
        let r = ode_nonconfluence(&contract, &[1.0], &[1.5], grid).unwrap();
        assert!((r.min_separation - 0.5 * (-1.0f64).exp()).abs() < 1e-10);
        assert_eq!(r.argmin_time, 1.0);
        assert!(ode_nonconfluence(&contract, &[1.0], &[1.0], grid).is_err());
    }
}
