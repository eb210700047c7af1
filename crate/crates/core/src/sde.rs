//! Euler–Maruyama for `dX = b(X) dt + ε^{1/2} σ(X) dW`, coupled runs and
//! explosion detection.
//!
//! The scheme is literally the Euler polygon of the skeleton equation driven
//! by `ε^{1/2} W`, so `X_n^ε = F_n(ε^{1/2} W)` holds bit for bit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeffs::CoefficientField;
use crate::error::{invalid, Error, Result};
use crate::paths::{
    sample_brownian, sup_distance, BrownianDriver, BrownianStream, ExitRecord, GridPath, TimeGrid,
    Trajectory,
};
use crate::skeleton::{euler_polygon_guarded, polygon_point, ExplosionGuard, Workspace};

#[derive(Debug, Clone)]
pub struct SdeRun {
    pub field: CoefficientField,
    pub epsilon: f64,
    pub x0: Vec<f64>,
    pub driver: BrownianDriver,
    pub guard: ExplosionGuard,
}

impl SdeRun {
    pub fn new(
        field: CoefficientField,
        epsilon: f64,
        x0: Vec<f64>,
        driver: BrownianDriver,
    ) -> Result<Self> {
        check_epsilon(epsilon)?;
        if driver.dim() != field.noise_dim() {
            return Err(Error::DimensionMismatch {
                expected: field.noise_dim(),
                got: driver.dim(),
            });
        }
        Ok(Self {
            field,
            epsilon,
            x0,
            driver,
            guard: ExplosionGuard::default(),
        })
    }

    pub fn with_guard(mut self, guard: ExplosionGuard) -> Self {
        self.guard = guard;
        self
    }
}

fn check_epsilon(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return invalid(format!("epsilon must be positive and finite, got {eps}"));
    }
    Ok(())
}

/// `x_{k+1} = x_k + b(x_k) T/n + ε^{1/2} σ(x_k) ΔW_k`.
pub fn euler_maruyama(run: &SdeRun) -> Result<Trajectory> {
    let scaled = run.driver.path().scaled(run.epsilon.sqrt());
    euler_polygon_guarded(&run.field, &scaled, &run.x0, &run.guard)
}

/// First node time at which `|x(t)| ≥ R`, for every `R` in `ladder`.
pub fn hitting_times(traj: &Trajectory, ladder: &[f64]) -> Vec<Option<f64>> {
    let mut out = vec![None; ladder.len()];
    let mut next = 0;
    for k in 0..traj.len() {
        let r = crate::norm(traj.node(k));
        while next < ladder.len() && r >= ladder[next] {
            out[next] = Some(traj.grid().t(k));
            next += 1;
        }
        if next == ladder.len() {
            break;
        }
    }
    out
}

/// Euler–Maruyama for several initial points driven by one Brownian path
/// that is generated on the fly (identical to [`sample_brownian`] with the
/// same key). `visit(k, states)` sees node `k` of all paths, laid out
/// consecutively; returning `false` stops the run early.
///
/// Returns the exit record of the first path that breaches `guard`.
#[allow(clippy::too_many_arguments)]
pub fn stream_coupled(
    field: &CoefficientField,
    epsilon: f64,
    starts: &[Vec<f64>],
    grid: TimeGrid,
    seed: u64,
    trial: u64,
    guard: &ExplosionGuard,
    mut visit: impl FnMut(usize, &[f64]) -> bool,
) -> Option<(usize, ExitRecord)> {
    let d = field.dim();
    let m = field.noise_dim();
    let p = starts.len();
    let c = epsilon.sqrt();
    let h = grid.dt();
    let mut ws = Workspace::new(field);
    let mut stream = BrownianStream::new(m, grid, seed, trial);
    let mut w_prev = vec![0.0; m];
    let mut w_next = vec![0.0; m];
    let mut dw = vec![0.0; m];
    let mut x: Vec<f64> = starts.iter().flatten().copied().collect();
    let mut y = vec![0.0; p * d];
    let mut norms: Vec<f64> = starts.iter().map(|s| norm_sq(s)).collect();
    if !visit(0, &x) {
        return None;
    }
    for k in 0..grid.steps() {
        stream.next_node(&w_prev, &mut w_next);
        for j in 0..m {
            dw[j] = c * w_next[j] - c * w_prev[j];
        }
        for i in 0..p {
            let xi = &x[i * d..(i + 1) * d];
            ws.load(field, xi);
            polygon_point(xi, h, &ws, &dw, &mut y[i * d..(i + 1) * d]);
            let nn = norm_sq(&y[i * d..(i + 1) * d]);
            if guard.breached_sq(norms[i], nn) {
                let rec = ExitRecord {
                    time: grid.t(k + 1),
                    step: k + 1,
                    norm: nn.sqrt(),
                };
                return Some((i, rec));
            }
            norms[i] = nn;
        }
        std::mem::swap(&mut x, &mut y);
        std::mem::swap(&mut w_prev, &mut w_next);
        if !visit(k + 1, &x) {
            return None;
        }
    }
    None
}

#[inline]
fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Two runs from `x0` and `y0` consuming the same increments.
pub fn coupled_pair(
    field: &CoefficientField,
    epsilon: f64,
    driver: &BrownianDriver,
    x0: &[f64],
    y0: &[f64],
) -> Result<(Trajectory, Trajectory)> {
    check_epsilon(epsilon)?;
    let scaled = driver.path().scaled(epsilon.sqrt());
    let guard = ExplosionGuard::default();
    Ok((
        euler_polygon_guarded(field, &scaled, x0, &guard)?,
        euler_polygon_guarded(field, &scaled, y0, &guard)?,
    ))
}

// ---------------------------------------------------------------------------
// Proportions with standard errors

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub trials: u64,
    pub events: u64,
}

impl Proportion {
    pub fn p(&self) -> f64 {
        self.events as f64 / self.trials as f64
    }

    /// Plug-in binomial standard error `(p(1−p)/N)^{1/2}`.
    pub fn se(&self) -> f64 {
        let p = self.p();
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }
}

/// `p_{i+1} ≤ p_i + k·(se_i² + se_{i+1}²)^{1/2}` for every consecutive pair.
pub fn non_increasing_within(ps: &[Proportion], k: f64) -> bool {
    ps.windows(2).all(|w| {
        let slack = k * (w[0].se().powi(2) + w[1].se().powi(2)).sqrt();
        w[1].p() <= w[0].p() + slack
    })
}

// ---------------------------------------------------------------------------
// Stability in the initial point

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub delta: f64,
    pub exceed: Proportion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub epsilon: f64,
    pub threshold: f64,
    pub steps: usize,
    pub rows: Vec<StabilityRow>,
    /// Non-increasing along the ladder up to two standard errors.
    pub non_increasing: bool,
}

/// For each `δ`, the fraction of coupled trials with
/// `sup_t |X(t, x₀ + δe₁) − X(t, x₀)| > threshold` on `[0, 1]`. An
/// explosion of either run counts as an exceedance.
#[allow(clippy::too_many_arguments)]
pub fn stability_probability(
    field: &CoefficientField,
    epsilon: f64,
    x0: &[f64],
    deltas: &[f64],
    threshold: f64,
    trials: u64,
    steps: usize,
    seed: u64,
) -> Result<StabilityReport> {
    check_epsilon(epsilon)?;
    if x0.len() != field.dim() {
        return Err(Error::DimensionMismatch {
            expected: field.dim(),
            got: x0.len(),
        });
    }
    if deltas.is_empty()
        || deltas.windows(2).any(|w| w[1] >= w[0])
        || deltas.iter().any(|&d| !(d >= 0.0 && d.is_finite()))
    {
        return invalid("delta ladder must be strictly decreasing and non-negative");
    }
    if !(threshold > 0.0) || trials == 0 {
        return invalid("threshold and trial count must be positive");
    }
    let grid = TimeGrid::unit(steps)?;
    let d = field.dim();
    let mut starts = vec![x0.to_vec()];
    for &delta in deltas {
        let mut y = x0.to_vec();
        y[0] += delta;
        starts.push(y);
    }
    let guard = ExplosionGuard::default();
    let per_trial: Vec<Vec<bool>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut sup = vec![0.0f64; deltas.len()];
            let exit = stream_coupled(field, epsilon, &starts, grid, seed, trial, &guard, |_, s| {
                let x = &s[..d];
                for (i, v) in sup.iter_mut().enumerate() {
                    *v = v.max(crate::dist(x, &s[(i + 1) * d..(i + 2) * d]));
                }
                true
            });
            match exit {
                // The base path exploding makes every rung an exceedance,
                // except identical starts, which explode together.
                Some((0, _)) => deltas.iter().map(|&d| d > 0.0).collect(),
                Some((i, _)) => {
                    let mut v: Vec<bool> = sup.iter().map(|&s| s > threshold).collect();
                    v[i - 1] = true;
                    v
                }
                None => sup.iter().map(|&s| s > threshold).collect(),
            }
        })
        .collect();
    let rows: Vec<StabilityRow> = deltas
        .iter()
        .enumerate()
        .map(|(i, &delta)| StabilityRow {
            delta,
            exceed: Proportion {
                trials,
                events: per_trial.iter().filter(|v| v[i]).count() as u64,
            },
        })
        .collect();
    let props: Vec<Proportion> = rows.iter().map(|r| r.exceed).collect();
    Ok(StabilityReport {
        epsilon,
        threshold,
        steps,
        non_increasing: non_increasing_within(&props, 2.0),
        rows,
    })
}

/// Median over trials of `sup_t |X_n − X_{2n}|` for each dyadic level,
/// where `X_{2n}` runs on the bridge refinement of the driver of `X_n`.
pub fn refinement_distances(
    field: &CoefficientField,
    epsilon: f64,
    x0: &[f64],
    base_steps: usize,
    levels: usize,
    trials: u64,
    seed: u64,
) -> Result<Vec<f64>> {
    check_epsilon(epsilon)?;
    if trials == 0 || levels == 0 {
        return invalid("levels and trials must be positive");
    }
    let grid = TimeGrid::unit(base_steps)?;
    let c = epsilon.sqrt();
    let guard = ExplosionGuard::default();
    let per_trial: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|trial| -> Result<Vec<f64>> {
            let mut w = sample_brownian(field.noise_dim(), grid, seed, trial);
            let mut coarse = euler_polygon_guarded(field, &w.path().scaled(c), x0, &guard)?;
            let mut out = Vec::with_capacity(levels);
            for _ in 0..levels {
                w = crate::paths::refine_brownian(&w);
                let fine = euler_polygon_guarded(field, &w.path().scaled(c), x0, &guard)?;
                out.push(sup_distance(&coarse, &fine)?);
                coarse = fine;
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok((0..levels)
        .map(|l| {
            let mut v: Vec<f64> = per_trial.iter().map(|r| r[l]).collect();
            median(&mut v)
        })
        .collect())
}

pub(crate) fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

// ---------------------------------------------------------------------------
// Lifetime

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifetimeRow {
    pub radius: f64,
    /// First node time with `|x| ≥ R`; `None` if not reached by the horizon.
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifetimeReport {
    pub horizon: f64,
    pub steps: usize,
    pub exploded: bool,
    /// Extrapolated lifetime when `exploded`.
    pub lifetime: Option<f64>,
    pub rows: Vec<LifetimeRow>,
    /// `L̄_k · Δτ_k / ΔL_k` with `L = ln R`, one entry per consecutive rung pair.
    pub scaled_slopes: Vec<f64>,
    /// State at the horizon when the run survives it.
    pub final_state: Option<Vec<f64>>,
}

/// Deterministic flow `ẋ = b(x)` by the Euler polygon, tracking when `|x|`
/// first reaches each radius of `ladder`.
///
/// Writing `L = ln R`, the run is declared explosive when every rung is hit
/// before the horizon and the scaled slopes `L̄ dτ/dL` are non-increasing
/// over the last three pairs and have at least halved from the first pair.
/// For `τ(L) = ζ − c/L` (iterated-logarithm blow-up) the scaled slope decays
/// like `1/L`; for growth that merely accelerates (`x log x`, exponential)
/// it stays flat or increases. The lifetime is extrapolated from the last two
/// rungs assuming `τ = ζ − c/L`.
pub fn detect_lifetime(
    field: &CoefficientField,
    x0: &[f64],
    horizon: f64,
    ladder: &[f64],
    steps: usize,
) -> Result<LifetimeReport> {
    if ladder.len() < 4 || ladder.windows(2).any(|w| w[1] <= w[0]) || ladder[0] <= 0.0 {
        return invalid("radius ladder must be positive, strictly increasing, with at least 4 rungs");
    }
    let grid = TimeGrid::new(horizon, steps)?;
    let guard = ExplosionGuard {
        max_norm: f64::MAX,
        max_growth: f64::INFINITY,
    };
    let driver = GridPath::zeros(grid, field.noise_dim());
    let traj = euler_polygon_guarded(field, &driver, x0, &guard)?;
    let taus = hitting_times(&traj, ladder);
    let rows: Vec<LifetimeRow> = ladder
        .iter()
        .zip(&taus)
        .map(|(&radius, &tau)| LifetimeRow { radius, tau })
        .collect();
    let all_hit = taus.iter().all(|t| t.is_some());
    let mut scaled_slopes = Vec::new();
    let mut exploded = false;
    let mut lifetime = None;
    if all_hit {
        let l: Vec<f64> = ladder.iter().map(|r| r.ln()).collect();
        let t: Vec<f64> = taus.iter().map(|t| t.unwrap()).collect();
        scaled_slopes = (0..l.len() - 1)
            .map(|k| 0.5 * (l[k] + l[k + 1]) * (t[k + 1] - t[k]) / (l[k + 1] - l[k]))
            .collect();
        let q = &scaled_slopes;
        let tail = &q[q.len() - 3..];
        exploded = tail.windows(2).all(|w| w[1] <= w[0])
            && q[0] > 0.0
            && q[q.len() - 1] <= 0.5 * q[0];
        if exploded {
            let k = l.len() - 1;
            lifetime = Some((l[k] * t[k] - l[k - 1] * t[k - 1]) / (l[k] - l[k - 1]));
        }
    }
    let final_state = (!traj.is_exploded() && traj.len() == grid.nodes()).then(|| traj.last().to_vec());
    Ok(LifetimeReport {
        horizon,
        steps,
        exploded,
        lifetime,
        rows,
        scaled_slopes,
        final_state,
    })
}
