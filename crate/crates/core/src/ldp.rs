//! Large-deviations tools: path events, the rate functional `I = ½ e(g)`
//! minimized over controls, crude Monte Carlo estimates of `ε log P`, and
//! the exponential-closeness experiment for the Euler scheme.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeffs::CoefficientField;
use crate::error::{invalid, Error, Result};
use crate::paths::{sample_brownian, Control, GridPath, TimeGrid, Trajectory};
use crate::rng::{self, Purpose};
use crate::sde::{non_increasing_within, stream_coupled, Proportion};
use crate::skeleton::{euler_polygon_dense, euler_polygon_guarded, polygon_point, ExplosionGuard, Workspace};

// ---------------------------------------------------------------------------
// Events

/// A set of paths, decided from node values only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PathEvent {
    /// `|x(T) − target| ≤ tol`.
    TerminalHit { target: Vec<f64>, tol: f64 },
    /// `sup_t |x(t) − x(0)| > radius`.
    ExitBall { radius: f64 },
    /// `sup_t |x(t) − φ(t)| ≤ delta`, with `φ` linearly interpolated.
    Tube { center: GridPath, delta: f64 },
    /// `sup_t x_i(t) ≥ level`.
    LevelCrossing { coordinate: usize, level: f64 },
    /// Every path.
    Always,
}

impl PathEvent {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            PathEvent::TerminalHit { target, tol } => {
                if target.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: target.len(),
                    });
                }
                if !(*tol >= 0.0) {
                    return invalid("terminal tolerance must be non-negative");
                }
            }
            PathEvent::ExitBall { radius } if !(*radius > 0.0) => {
                return invalid("exit radius must be positive");
            }
            PathEvent::Tube { center, delta } => {
                if center.dim() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: center.dim(),
                    });
                }
                if !(*delta > 0.0) {
                    return invalid("tube width must be positive");
                }
                // Deserialized paths bypass the constructor checks.
                let g = center.grid();
                TimeGrid::new(g.horizon(), g.steps())?;
                GridPath::new(*g, dim, center.values().to_vec())?;
            }
            PathEvent::LevelCrossing { coordinate, level } => {
                if *coordinate >= dim {
                    return invalid(format!("coordinate {coordinate} out of range for dimension {dim}"));
                }
                if !level.is_finite() {
                    return invalid("level must be finite");
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Whether the trajectory lies in the event. An exploded trajectory
    /// counts as exiting every ball and as missing every other event that
    /// was not already decided before the explosion.
    pub fn holds(&self, traj: &Trajectory) -> bool {
        let mut mon = Monitor::new(self, traj.node(0));
        for k in 0..traj.len() {
            if !mon.observe(|| traj.grid().t(k), traj.node(k)) {
                break;
            }
        }
        if traj.is_exploded() {
            mon.on_explosion()
        } else {
            mon.verdict(traj.last())
        }
    }

    /// Amount by which the node values miss the event; zero inside it.
    pub fn residual(&self, grid: &TimeGrid, states: &[f64], dim: usize) -> f64 {
        self.penalty(grid, states, dim, 0.0, false).1
    }

    /// Sum of squared violations of the event tightened by `margin`, the
    /// largest single violation, and optionally the gradient of the former
    /// with respect to every node value.
    fn penalty(
        &self,
        grid: &TimeGrid,
        states: &[f64],
        d: usize,
        margin: f64,
        want_grad: bool,
    ) -> (f64, f64, Vec<f64>) {
        let nodes = states.len() / d;
        let mut grad = if want_grad { vec![0.0; states.len()] } else { Vec::new() };
        let node = |k: usize| &states[k * d..(k + 1) * d];
        match self {
            PathEvent::Always => (0.0, 0.0, grad),
            PathEvent::TerminalHit { target, tol } => {
                let x = node(nodes - 1);
                let dist = crate::dist(x, target);
                let r = dist - (tol - margin).max(0.0);
                if r <= 0.0 {
                    return (0.0, 0.0, grad);
                }
                if want_grad && dist > 0.0 {
                    for i in 0..d {
                        grad[(nodes - 1) * d + i] = 2.0 * r * (x[i] - target[i]) / dist;
                    }
                }
                (r * r, r, grad)
            }
            PathEvent::ExitBall { radius } => {
                let x0 = node(0);
                let (mut best, mut at) = (0.0, 0);
                for k in 0..nodes {
                    let s = crate::dist(node(k), x0);
                    if s >= best {
                        best = s;
                        at = k;
                    }
                }
                let r = radius + margin - best;
                if r <= 0.0 {
                    return (0.0, 0.0, grad);
                }
                if want_grad && at > 0 {
                    let x = node(at);
                    for i in 0..d {
                        let dir = if best > 0.0 {
                            (x[i] - x0[i]) / best
                        } else if i == 0 {
                            1.0
                        } else {
                            0.0
                        };
                        grad[at * d + i] = -2.0 * r * dir;
                    }
                }
                (r * r, r, grad)
            }
            PathEvent::LevelCrossing { coordinate, level } => {
                let (mut best, mut at) = (f64::NEG_INFINITY, 0);
                for k in 0..nodes {
                    let v = node(k)[*coordinate];
                    if v >= best {
                        best = v;
                        at = k;
                    }
                }
                let r = level + margin - best;
                if r <= 0.0 {
                    return (0.0, 0.0, grad);
                }
                if want_grad {
                    grad[at * d + coordinate] = -2.0 * r;
                }
                (r * r, r, grad)
            }
            PathEvent::Tube { center, delta } => {
                let mut phi = vec![0.0; d];
                let width = (delta - margin).max(0.0);
                let mut total = 0.0;
                let mut worst: f64 = 0.0;
                for k in 0..nodes {
                    center.value_at(grid.t(k), &mut phi);
                    let x = node(k);
                    let dist = crate::dist(x, &phi);
                    let r = dist - width;
                    if r > 0.0 {
                        total += r * r;
                        worst = worst.max(r);
                        if want_grad {
                            for i in 0..d {
                                grad[k * d + i] = 2.0 * r * (x[i] - phi[i]) / dist;
                            }
                        }
                    }
                }
                (total, worst, grad)
            }
        }
    }
}

/// Incremental event evaluation along a trajectory.
struct Monitor<'a> {
    event: &'a PathEvent,
    x0: Vec<f64>,
    decided: Option<bool>,
    phi: Vec<f64>,
}

impl<'a> Monitor<'a> {
    fn new(event: &'a PathEvent, x0: &[f64]) -> Self {
        let decided = matches!(event, PathEvent::Always).then_some(true);
        Self {
            event,
            x0: x0.to_vec(),
            decided,
            phi: vec![0.0; x0.len()],
        }
    }

    /// Returns `false` once the outcome is fixed.
    fn observe(&mut self, t: impl FnOnce() -> f64, x: &[f64]) -> bool {
        if self.decided.is_some() {
            return false;
        }
        match self.event {
            PathEvent::ExitBall { radius } => {
                if crate::dist(x, &self.x0) > *radius {
                    self.decided = Some(true);
                }
            }
            PathEvent::LevelCrossing { coordinate, level } => {
                if x[*coordinate] >= *level {
                    self.decided = Some(true);
                }
            }
            PathEvent::Tube { center, delta } => {
                center.value_at(t(), &mut self.phi);
                if crate::dist(x, &self.phi) > *delta {
                    self.decided = Some(false);
                }
            }
            PathEvent::TerminalHit { .. } | PathEvent::Always => {}
        }
        self.decided.is_none()
    }

    fn verdict(&self, last: &[f64]) -> bool {
        if let Some(v) = self.decided {
            return v;
        }
        match self.event {
            PathEvent::TerminalHit { target, tol } => crate::dist(last, target) <= *tol,
            PathEvent::Tube { .. } | PathEvent::Always => true,
            PathEvent::ExitBall { .. } | PathEvent::LevelCrossing { .. } => false,
        }
    }

    fn on_explosion(&self) -> bool {
        match self.decided {
            Some(v) => v,
            None => matches!(self.event, PathEvent::ExitBall { .. } | PathEvent::Always),
        }
    }
}

// ---------------------------------------------------------------------------
// Rate functional

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RateOptions {
    pub x0: Vec<f64>,
    pub horizon: f64,
    /// Control segments.
    pub knots: usize,
    /// Euler steps per control segment in the discrete skeleton.
    pub substeps: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Declared localization radius for unbounded fields.
    pub ball_radius: Option<f64>,
    pub penalty_start: f64,
    pub penalty_growth: f64,
    pub stages: usize,
    /// The event is tightened by this amount inside the penalty so that the
    /// returned control satisfies the untightened event exactly.
    pub margin: f64,
    pub residual_tol: f64,
    pub max_iterations: usize,
    /// Standard deviation of the whitened restart perturbations.
    pub restart_scale: f64,
}

impl Default for RateOptions {
    fn default() -> Self {
        Self {
            x0: Vec::new(),
            horizon: 1.0,
            knots: 32,
            substeps: 4,
            restarts: 4,
            seed: 0,
            ball_radius: None,
            penalty_start: 10.0,
            penalty_growth: 10.0,
            stages: 5,
            margin: 1e-4,
            residual_tol: 1e-4,
            max_iterations: 4000,
            restart_scale: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageTrace {
    pub penalty: f64,
    pub iterations: usize,
    pub action: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerTrace {
    pub restart: usize,
    pub knots: usize,
    pub substeps: usize,
    pub stages: Vec<StageTrace>,
    /// Per-restart final action, `None` where infeasible.
    pub restart_values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateResult {
    /// `½ e(g)` of the returned control.
    pub value: f64,
    pub control: Control,
    /// Violation of the (untightened) event by the returned control.
    pub residual: f64,
    /// The returned control lies in the event, so `value` bounds the
    /// discrete infimum from above.
    pub feasible: bool,
    /// `sup_t |F(g)(t)| ≤ R` for the declared localization radius.
    pub confined: Option<bool>,
    pub trace: OptimizerTrace,
}

struct Problem<'a> {
    field: &'a CoefficientField,
    event: &'a PathEvent,
    x0: &'a [f64],
    grid: TimeGrid,
    knots: usize,
    substeps: usize,
    scale: f64,
}

impl Problem<'_> {
    fn slopes(&self, u: &[f64]) -> Vec<f64> {
        u.iter().map(|v| v * self.scale).collect()
    }

    fn forward(&self, v: &[f64], ws: &mut Workspace) -> Vec<f64> {
        let d = self.field.dim();
        let m = self.field.noise_dim();
        let h = self.grid.dt();
        let mut states = Vec::with_capacity(self.grid.nodes() * d);
        states.extend_from_slice(self.x0);
        let mut dw = vec![0.0; m];
        let mut next = vec![0.0; d];
        for k in 0..self.grid.steps() {
            let j = k / self.substeps;
            for l in 0..m {
                dw[l] = v[j * m + l] * h;
            }
            let x = &states[k * d..(k + 1) * d];
            ws.load(self.field, x);
            polygon_point(x, h, ws, &dw, &mut next);
            states.extend_from_slice(&next);
        }
        states
    }

    /// Penalized objective `½|u|² + μ P(x(u))`.
    fn objective(&self, u: &[f64], mu: f64, margin: f64, ws: &mut Workspace) -> f64 {
        let states = self.forward(&self.slopes(u), ws);
        let (p, _, _) = self.event.penalty(&self.grid, &states, self.field.dim(), margin, false);
        let j = 0.5 * dot(u, u) + mu * p;
        if j.is_finite() {
            j
        } else {
            f64::INFINITY
        }
    }

    fn gradient(&self, u: &[f64], mu: f64, margin: f64, ws: &mut Workspace) -> (f64, Vec<f64>) {
        let d = self.field.dim();
        let m = self.field.noise_dim();
        let h = self.grid.dt();
        let v = self.slopes(u);
        let states = self.forward(&v, ws);
        let (p, _, dp) = self.event.penalty(&self.grid, &states, d, margin, true);
        let mut gv = vec![0.0; v.len()];
        let mut lam: Vec<f64> = dp[(self.grid.steps()) * d..].to_vec();
        let mut xp = vec![0.0; d];
        let mut fp = vec![0.0; d];
        let mut fm = vec![0.0; d];
        let mut next_lam = vec![0.0; d];
        for k in (0..self.grid.steps()).rev() {
            let j = k / self.substeps;
            let vj = &v[j * m..(j + 1) * m];
            let x = &states[k * d..(k + 1) * d];
            ws.load(self.field, x);
            for i in 0..d {
                let row = &ws.s[i * m..(i + 1) * m];
                for l in 0..m {
                    gv[j * m + l] += h * row[l] * lam[i];
                }
            }
            // λ_k = λ_{k+1} + h J_F(x_k)ᵀ λ_{k+1} + ∂P/∂x_k with F = b + σ v.
            for i in 0..d {
                let e = 1e-6 * x[i].abs().max(1.0);
                xp.copy_from_slice(x);
                xp[i] = x[i] + e;
                drift_plus(self.field, &xp, vj, ws, &mut fp);
                xp[i] = x[i] - e;
                drift_plus(self.field, &xp, vj, ws, &mut fm);
                let mut acc = 0.0;
                for r in 0..d {
                    acc += lam[r] * (fp[r] - fm[r]);
                }
                next_lam[i] = lam[i] + h * acc / (2.0 * e) + dp[k * d + i];
            }
            std::mem::swap(&mut lam, &mut next_lam);
        }
        let grad: Vec<f64> = u
            .iter()
            .zip(&gv)
            .map(|(ui, g)| ui + mu * self.scale * g)
            .collect();
        (0.5 * dot(u, u) + mu * p, grad)
    }

    fn to_control(&self, u: &[f64]) -> Result<Control> {
        let kg = TimeGrid::new(self.grid.horizon(), self.knots)?;
        let s = kg.dt().sqrt();
        let inc: Vec<f64> = u.iter().map(|v| v * s).collect();
        Control::from_increments(kg, self.field.noise_dim(), &inc)
    }
}

/// `out = b(x) + σ(x) v`.
fn drift_plus(field: &CoefficientField, x: &[f64], v: &[f64], ws: &mut Workspace, out: &mut [f64]) {
    ws.load(field, x);
    let m = v.len();
    for i in 0..out.len() {
        out[i] = ws.b[i] + dot(&ws.s[i * m..(i + 1) * m], v);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gradient descent with Barzilai–Borwein steps safeguarded by Armijo
/// backtracking. Returns the iteration count.
fn minimize(p: &Problem, u: &mut Vec<f64>, mu: f64, margin: f64, max_iter: usize) -> usize {
    let mut ws = Workspace::new(p.field);
    let (mut j, mut g) = p.gradient(u, mu, margin, &mut ws);
    let mut step = 1.0 / (1.0 + mu);
    let mut trial = vec![0.0; u.len()];
    for it in 0..max_iter {
        let gg = dot(&g, &g);
        if gg.sqrt() <= 1e-10 * (1.0 + dot(u, u).sqrt()) {
            return it;
        }
        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..u.len() {
                trial[i] = u[i] - step * g[i];
            }
            let jt = p.objective(&trial, mu, margin, &mut ws);
            if jt <= j - 1e-4 * step * gg {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return it;
        }
        let (jn, gn) = p.gradient(&trial, mu, margin, &mut ws);
        let mut ss = 0.0;
        let mut sy = 0.0;
        for i in 0..u.len() {
            let s = trial[i] - u[i];
            let y = gn[i] - g[i];
            ss += s * s;
            sy += s * y;
        }
        let done = (j - jn).abs() <= 1e-15 * j.abs().max(1.0);
        std::mem::swap(u, &mut trial);
        j = jn;
        g = gn;
        step = if sy > 0.0 { ss / sy } else { step * 2.0 };
        if done {
            return it + 1;
        }
    }
    max_iter
}

/// Minimizes `½ e(g)` over piecewise-linear controls whose discrete
/// skeleton (Euler polygon on `knots × substeps` steps) lies in `event`.
///
/// Quadratic-penalty continuation: the weight starts at `penalty_start`
/// and grows by `penalty_growth` for `stages` stages, each warm-started.
/// Restart 0 starts from the zero control, the others from seeded
/// perturbations of it; the smallest feasible action wins.
pub fn rate_functional(
    field: &CoefficientField,
    event: &PathEvent,
    opts: &RateOptions,
) -> Result<RateResult> {
    let d = field.dim();
    let m = field.noise_dim();
    if opts.x0.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: opts.x0.len(),
        });
    }
    event.validate(d)?;
    if field.bounds().is_none() && opts.ball_radius.is_none() {
        return Err(Error::Unbounded(
            "rate functional needs a bounded field or a declared ball radius".into(),
        ));
    }
    if opts.knots == 0 || opts.substeps == 0 || opts.restarts == 0 || opts.stages == 0 {
        return invalid("knots, substeps, restarts and stages must be positive");
    }
    if !(opts.penalty_start > 0.0 && opts.penalty_growth >= 1.0 && opts.margin >= 0.0) {
        return invalid("penalty schedule must be positive and non-decreasing");
    }
    let grid = TimeGrid::new(opts.horizon, opts.knots * opts.substeps)?;
    let kdt = opts.horizon / opts.knots as f64;
    let problem = Problem {
        field,
        event,
        x0: &opts.x0,
        grid,
        knots: opts.knots,
        substeps: opts.substeps,
        scale: 1.0 / kdt.sqrt(),
    };
    let runs: Vec<(Vec<f64>, Vec<StageTrace>, f64)> = (0..opts.restarts)
        .into_par_iter()
        .map(|r| {
            let mut u = vec![0.0; opts.knots * m];
            if r > 0 {
                let mut g = rng::stream(opts.seed, r as u64, 0, Purpose::OptimizerRestart);
                for v in u.iter_mut() {
                    *v = opts.restart_scale * rng::normal(&mut g);
                }
            }
            let mut mu = opts.penalty_start;
            let mut stages = Vec::with_capacity(opts.stages);
            let mut ws = Workspace::new(field);
            let mut residual = f64::INFINITY;
            for _ in 0..opts.stages {
                let iterations = minimize(&problem, &mut u, mu, opts.margin, opts.max_iterations);
                let states = problem.forward(&problem.slopes(&u), &mut ws);
                residual = event.residual(&grid, &states, d);
                stages.push(StageTrace {
                    penalty: mu,
                    iterations,
                    action: 0.5 * dot(&u, &u),
                    residual,
                });
                let (tight, _, _) = event.penalty(&grid, &states, d, opts.margin, false);
                if tight == 0.0 {
                    break;
                }
                mu *= opts.penalty_growth;
            }
            (u, stages, residual)
        })
        .collect();
    let restart_values: Vec<Option<f64>> = runs
        .iter()
        .map(|(u, _, res)| (*res <= opts.residual_tol).then(|| 0.5 * dot(u, u)))
        .collect();
    let best = restart_values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (i, v)))
        .fold(None, |acc: Option<(usize, f64)>, (i, v)| match acc {
            Some((_, bv)) if bv <= v => acc,
            _ => Some((i, v)),
        });
    let Some((best, _)) = best else {
        let residual = runs.iter().map(|r| r.2).fold(f64::INFINITY, f64::min);
        return Err(Error::Infeasible {
            residual,
            tolerance: opts.residual_tol,
        });
    };
    let (u, stages, residual) = runs[best].clone();
    let control = problem.to_control(&u)?;
    let value = 0.5 * crate::paths::energy(&control);
    let confined = opts.ball_radius.map(|r| {
        let mut ws = Workspace::new(field);
        let states = problem.forward(&problem.slopes(&u), &mut ws);
        states.chunks(d).all(|x| crate::norm(x) <= r)
    });
    Ok(RateResult {
        value,
        control,
        residual,
        feasible: residual == 0.0,
        confined,
        trace: OptimizerTrace {
            restart: best,
            knots: opts.knots,
            substeps: opts.substeps,
            stages,
            restart_values,
        },
    })
}

/// Node values of the discrete skeleton used by [`rate_functional`] for a
/// given control.
pub fn discrete_skeleton(
    field: &CoefficientField,
    control: &Control,
    x0: &[f64],
    substeps: usize,
) -> Result<Trajectory> {
    let grid = control.grid().refined(substeps);
    let driver = control.sample_on(grid)?;
    euler_polygon_guarded(field, &driver, x0, &ExplosionGuard::default())
}

// ---------------------------------------------------------------------------
// Monte Carlo

/// 95% two-sided normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `events / trials`.
pub fn wilson_interval(events: u64, trials: u64, z: f64) -> (f64, f64) {
    let n = trials as f64;
    let p = events as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let lo = if events == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if events == trials { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub epsilon: f64,
    pub x0: Vec<f64>,
    pub horizon: f64,
    pub steps: usize,
    pub trials: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub epsilon: f64,
    pub hits: Proportion,
    pub explosions: u64,
    pub p_hat: f64,
    /// `ε log P̂`; `None` when there are no hits.
    pub eps_log_p: Option<f64>,
    /// `ε log` of the Wilson 95% band; the lower end is `None` without hits.
    pub eps_log_lo: Option<f64>,
    pub eps_log_hi: f64,
    /// No hits: only the upper band is meaningful.
    pub below_resolution: bool,
    /// All or no trials hit, so the band is one-sided.
    pub degenerate: bool,
}

pub const MIN_TRIALS: u64 = 1000;

/// Crude Monte Carlo estimate of `P(X^ε ∈ event)` with one keyed Brownian
/// stream per trial. Counts are integers, so the result does not depend on
/// how trials are spread over threads.
pub fn mc_log_prob(
    field: &CoefficientField,
    event: &PathEvent,
    cfg: &McConfig,
) -> Result<McEstimate> {
    if cfg.trials < MIN_TRIALS {
        return invalid(format!("at least {MIN_TRIALS} trials are required, got {}", cfg.trials));
    }
    if !(cfg.epsilon > 0.0) {
        return invalid("epsilon must be positive");
    }
    if cfg.x0.len() != field.dim() {
        return Err(Error::DimensionMismatch {
            expected: field.dim(),
            got: cfg.x0.len(),
        });
    }
    event.validate(field.dim())?;
    let grid = TimeGrid::new(cfg.horizon, cfg.steps)?;
    let guard = ExplosionGuard::default();
    let starts = [cfg.x0.clone()];
    let outcomes: Vec<(bool, bool)> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let mut mon = Monitor::new(event, &cfg.x0);
            let mut last = cfg.x0.clone();
            let exit = stream_coupled(field, cfg.epsilon, &starts, grid, cfg.seed, trial, &guard, |k, x| {
                let go = mon.observe(|| grid.t(k), x);
                if k == grid.steps() {
                    last.copy_from_slice(x);
                }
                go
            });
            match exit {
                Some(_) => (mon.on_explosion(), true),
                None => (mon.verdict(&last), false),
            }
        })
        .collect();
    let events = outcomes.iter().filter(|o| o.0).count() as u64;
    let explosions = outcomes.iter().filter(|o| o.1).count() as u64;
    let hits = Proportion {
        trials: cfg.trials,
        events,
    };
    let (lo, hi) = wilson_interval(events, cfg.trials, Z95);
    let p_hat = hits.p();
    let e = cfg.epsilon;
    Ok(McEstimate {
        epsilon: e,
        hits,
        explosions,
        p_hat,
        eps_log_p: (events > 0).then(|| e * p_hat.ln()),
        eps_log_lo: (lo > 0.0).then(|| e * lo.ln()),
        eps_log_hi: e * hi.ln(),
        below_resolution: events == 0,
        degenerate: events == 0 || events == cfg.trials,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdpRow {
    pub estimate: McEstimate,
    pub neg_i: f64,
    /// `ε log P̂ − (−I)`; `None` below resolution.
    pub gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdpReport {
    pub rows: Vec<LdpRow>,
    pub rate: RateResult,
    /// `|gap|` is non-increasing down the ladder.
    pub gap_decreasing: bool,
}

/// Monte Carlo rows for every `ε` in `ladder` next to `−I` from the rate
/// functional. The ladder order is kept; the trend check reads it top-down.
pub fn ldp_gap_report(
    field: &CoefficientField,
    event: &PathEvent,
    ladder: &[f64],
    mc: &McConfig,
    rate: &RateOptions,
) -> Result<LdpReport> {
    if ladder.is_empty() {
        return invalid("epsilon ladder is empty");
    }
    let rate = rate_functional(field, event, rate)?;
    let neg_i = -rate.value;
    let rows = ladder
        .iter()
        .map(|&epsilon| {
            let estimate = mc_log_prob(field, event, &McConfig { epsilon, ..mc.clone() })?;
            Ok(LdpRow {
                gap: estimate.eps_log_p.map(|v| v - neg_i),
                estimate,
                neg_i,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let gap_decreasing = rows.iter().all(|r| r.gap.is_some())
        && rows
            .windows(2)
            .all(|w| w[1].gap.unwrap().abs() <= w[0].gap.unwrap().abs());
    Ok(LdpReport {
        rows,
        rate,
        gap_decreasing,
    })
}

// ---------------------------------------------------------------------------
// Exponential closeness of the Euler scheme

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosenessRow {
    pub n: usize,
    pub exceed: Proportion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosenessReport {
    pub epsilon: f64,
    pub delta: f64,
    pub reference_steps: usize,
    pub rows: Vec<ClosenessRow>,
    pub non_increasing: bool,
}

/// Fraction of trials with `sup_{t≤1} |X_ref(t) − X_n(t)| > δ` for each `n`.
///
/// The driver is sampled on the coarsest rung and refined by Brownian
/// bridges to `16 × max n`; `X_ref` is the Euler scheme on the finest mesh
/// and `X_n` is compared at every fine node through its interpolating
/// polygon. Rungs must be dyadic multiples of the first.
#[allow(clippy::too_many_arguments)]
pub fn euler_closeness(
    field: &CoefficientField,
    epsilon: f64,
    x0: &[f64],
    ladder: &[usize],
    delta: f64,
    trials: u64,
    seed: u64,
) -> Result<ClosenessReport> {
    if field.bounds().is_none() {
        return Err(Error::Unbounded(
            "closeness needs bounded coefficients; truncate the field with truncate_field first".into(),
        ));
    }
    if !(delta > 0.0 && delta < (-1.0f64).exp()) {
        return invalid(format!("delta must lie in (0, 1/e), got {delta}"));
    }
    if !(epsilon > 0.0) || trials == 0 {
        return invalid("epsilon and trial count must be positive");
    }
    if ladder.is_empty()
        || ladder[0] == 0
        || ladder.windows(2).any(|w| w[1] <= w[0])
        || ladder.iter().any(|&n| n % ladder[0] != 0 || !(n / ladder[0]).is_power_of_two())
    {
        return invalid("n ladder must be increasing dyadic multiples of its first rung");
    }
    let n_ref = 16 * ladder[ladder.len() - 1];
    let levels = (n_ref / ladder[0]).trailing_zeros();
    let base = TimeGrid::unit(ladder[0])?;
    let c = epsilon.sqrt();
    let guard = ExplosionGuard::default();
    let per_trial: Vec<Vec<bool>> = (0..trials)
        .into_par_iter()
        .map(|trial| -> Result<Vec<bool>> {
            let mut w = sample_brownian(field.noise_dim(), base, seed, trial);
            for _ in 0..levels {
                w = crate::paths::refine_brownian(&w);
            }
            let driver = w.path().scaled(c);
            let reference = euler_polygon_guarded(field, &driver, x0, &guard)?;
            ladder
                .iter()
                .map(|&n| {
                    let xn = euler_polygon_dense(field, &driver, x0, n_ref / n, &guard)?;
                    if reference.is_exploded() || xn.is_exploded() {
                        return Ok(true);
                    }
                    let sup = (0..xn.len())
                        .map(|k| crate::dist(xn.node(k), reference.node(k)))
                        .fold(0.0, f64::max);
                    Ok(sup > delta)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let rows: Vec<ClosenessRow> = ladder
        .iter()
        .enumerate()
        .map(|(i, &n)| ClosenessRow {
            n,
            exceed: Proportion {
                trials,
                events: per_trial.iter().filter(|v| v[i]).count() as u64,
            },
        })
        .collect();
    let props: Vec<Proportion> = rows.iter().map(|r| r.exceed).collect();
    Ok(ClosenessReport {
        epsilon,
        delta,
        reference_steps: n_ref,
        non_increasing: non_increasing_within(&props, 2.0),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::scaled_identity;

    fn brownian(scale: f64) -> CoefficientField {
        CoefficientField::constant(vec![0.0], scaled_identity(1, 1, scale), 1).unwrap()
    }

    fn opts() -> RateOptions {
        RateOptions {
            x0: vec![0.0],
            knots: 16,
            restarts: 2,
            ..RateOptions::default()
        }
    }

    #[test]
    fn straight_line_is_optimal() {
        let ev = PathEvent::TerminalHit { target: vec![1.0], tol: 0.0 };
        let r = rate_functional(&brownian(1.0), &ev, &opts()).unwrap();
        assert!((r.value - 0.5).abs() < 1e-3, "{}", r.value);
        let g = r.control.knots();
        for k in 0..g.grid().nodes() {
            assert!((g.node(k)[0] - g.grid().t(k)).abs() < 1e-3);
        }
    }

    #[test]
    fn trivial_hit_costs_nothing() {
        let ev = PathEvent::TerminalHit { target: vec![0.0], tol: 0.0 };
        let r = rate_functional(&brownian(1.0), &ev, &opts()).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.feasible);
    }

    #[test]
    fn level_crossing_from_rest() {
        let ev = PathEvent::LevelCrossing { coordinate: 0, level: 1.0 };
        let r = rate_functional(&brownian(1.0), &ev, &opts()).unwrap();
        assert!(r.feasible);
        assert!((r.value - 0.5).abs() < 1e-3, "{}", r.value);
    }

    #[test]
    fn unbounded_field_needs_radius() {
        let f = CoefficientField::log_growth(1, 1.0).unwrap();
        let ev = PathEvent::Always;
        assert!(matches!(rate_functional(&f, &ev, &opts()), Err(Error::Unbounded(_))));
        let o = RateOptions { ball_radius: Some(3.0), ..opts() };
        assert_eq!(rate_functional(&f, &ev, &o).unwrap().confined, Some(true));
    }

    #[test]
    fn wilson_band_contains_estimate() {
        let (lo, hi) = wilson_interval(25, 1000, Z95);
        assert!(lo < 0.025 && 0.025 < hi);
        assert_eq!(wilson_interval(0, 1000, Z95).0, 0.0);
        assert_eq!(wilson_interval(1000, 1000, Z95).1, 1.0);
    }

    #[test]
    fn certain_event() {
        let cfg = McConfig {
            epsilon: 0.3,
            x0: vec![0.0],
            horizon: 1.0,
            steps: 8,
            trials: 1000,
            seed: 1,
        };
        let e = mc_log_prob(&brownian(1.0), &PathEvent::Always, &cfg).unwrap();
        assert_eq!(e.p_hat, 1.0);
        assert_eq!(e.eps_log_p, Some(0.0));
        assert!(e.degenerate);
        let short = McConfig { trials: 999, ..cfg };
        assert!(mc_log_prob(&brownian(1.0), &PathEvent::Always, &short).is_err());
    }

    #[test]
    fn closeness_validation() {
        let f = brownian(1.0);
        assert!(euler_closeness(&f, 0.1, &[0.0], &[8, 32], 0.5, 10, 0).is_err());
        assert!(euler_closeness(&f, 0.1, &[0.0], &[8, 24], 0.1, 10, 0).is_err());
        let r = euler_closeness(&f, 0.1, &[0.0], &[8, 32], 0.1, 10, 0).unwrap();
        assert!(r.rows.iter().all(|row| row.exceed.events == 0));
    }
}
