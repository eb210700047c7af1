//! Manifest-driven experiment runner.
//!
//! A run reads a [`Manifest`], builds the coefficient field, executes one
//! experiment and writes CSV tables plus a `summary.json`, each stamped with
//! the SHA-256 digest of the canonical manifest.

pub mod fields;
pub mod manifest;
pub mod output;

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use loglip_core::coeffs::CoefficientField;
use loglip_core::ldp::{self, McConfig, RateOptions};
use loglip_core::lyapunov;
use loglip_core::paths::{sample_brownian, Control, GridPath, TimeGrid};
use loglip_core::sde;
use loglip_core::skeleton;
use loglip_core::Error;

pub use manifest::{Experiment, Manifest};
use manifest::{ControlSpec, OptimizerParams};
use output::{path_table, Artifacts, Table};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "LOGLIP_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "loglip-out";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{message}")]
    Numerical { kind: &'static str, message: String },
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Io(_) => 2,
            CliError::Numerical { .. } => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Validation(_) => "validation",
            CliError::Io(_) => "io",
            CliError::Numerical { kind, .. } => kind,
        }
    }

    pub fn diagnostic(&self, digest: Option<&str>) -> Value {
        json!({
            "status": "error",
            "exit_code": self.exit_code(),
            "kind": self.kind(),
            "message": self.to_string(),
            "manifest_sha256": digest,
        })
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let kind = match &e {
            Error::Divergent(_) => "divergent",
            Error::Overflow { .. } => "overflow",
            Error::Quadrature(_) => "quadrature",
            Error::Infeasible { .. } => "infeasible",
            Error::Exploded { .. } => "exploded",
            Error::Io(m) => return CliError::Io(m.clone()),
            _ => return CliError::Validation(e.to_string()),
        };
        CliError::Numerical {
            kind,
            message: e.to_string(),
        }
    }
}

/// Output directory: the explicit flag, then the environment, then the
/// manifest, then [`DEFAULT_OUT_DIR`].
pub fn resolve_out_dir(flag: Option<&Path>, manifest: &Manifest) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = std::env::var_os(OUT_DIR_ENV).filter(|s| !s.is_empty()) {
        return PathBuf::from(p);
    }
    manifest
        .output_dir
        .as_ref()
        .map_or_else(|| PathBuf::from(DEFAULT_OUT_DIR), PathBuf::from)
}

/// Validates a manifest without computing: parses it, builds its field and
/// checks the experiment's parameters.
pub fn validate(m: &Manifest) -> Result<(), CliError> {
    let field = m.field.as_ref().map(fields::build_field).transpose()?;
    check_params(m, field.as_ref())
}

fn check_dim(what: &str, got: usize, expected: usize) -> Result<(), CliError> {
    if got != expected {
        return Err(CliError::Validation(format!(
            "{what} has dimension {got}, the field has {expected}"
        )));
    }
    Ok(())
}

fn check_params(m: &Manifest, field: Option<&CoefficientField>) -> Result<(), CliError> {
    let d = field.map_or(0, |f| f.dim());
    match &m.experiment {
        Experiment::Simulate(p) => {
            check_dim("x0", p.x0.len(), d)?;
            TimeGrid::new(p.horizon, p.steps)?;
        }
        Experiment::Skeleton(p) => {
            check_dim("x0", p.x0.len(), d)?;
            build_control(&p.control, p.horizon, field.unwrap().noise_dim())?;
            TimeGrid::new(p.horizon, p.solver_steps)?;
        }
        Experiment::Converge(p) => check_dim("x0", p.x0.len(), d)?,
        Experiment::Lifetime(p) => check_dim("x0", p.x0.len(), d)?,
        Experiment::Stability(p) => check_dim("x0", p.x0.len(), d)?,
        Experiment::Rate(p) => {
            check_dim("x0", p.x0.len(), d)?;
            p.event.validate(d)?;
        }
        Experiment::Ldp(p) => {
            check_dim("x0", p.x0.len(), d)?;
            p.event.validate(d)?;
            if p.trials < ldp::MIN_TRIALS {
                return Err(CliError::Validation(format!(
                    "at least {} trials are required",
                    ldp::MIN_TRIALS
                )));
            }
            TimeGrid::new(p.horizon, p.steps)?;
        }
        Experiment::Closeness(p) => check_dim("x0", p.x0.len(), d)?,
        Experiment::Osgood(p) => {
            if p.profiles.is_empty() {
                return Err(CliError::Validation("no growth profiles given".into()));
            }
        }
        Experiment::SineBound(p) => {
            if !(p.lo > 0.0 && p.lo < p.hi && p.count > 0 && p.terms > 0) {
                return Err(CliError::Validation(
                    "sine_bound needs 0 < lo < hi, count > 0 and terms > 0".into(),
                ));
            }
        }
    }
    Ok(())
}

fn build_control(spec: &ControlSpec, horizon: f64, m: usize) -> Result<Control, CliError> {
    Ok(match spec {
        ControlSpec::Zero { steps } => Control::zero(TimeGrid::new(horizon, *steps)?, m),
        ControlSpec::Linear { steps, slope } => {
            check_dim("control slope", slope.len(), m)?;
            Control::linear(TimeGrid::new(horizon, *steps)?, slope)
        }
        ControlSpec::Knots { steps, values } => {
            let grid = TimeGrid::new(horizon, *steps)?;
            let mut all = vec![0.0; m];
            all.extend_from_slice(values);
            Control::new(GridPath::new(grid, m, all)?)?
        }
    })
}

fn rate_options(x0: &[f64], horizon: f64, seed: u64, o: &OptimizerParams) -> RateOptions {
    let d = RateOptions::default();
    RateOptions {
        x0: x0.to_vec(),
        horizon,
        seed,
        knots: o.knots.unwrap_or(d.knots),
        substeps: o.substeps.unwrap_or(d.substeps),
        restarts: o.restarts.unwrap_or(d.restarts),
        ball_radius: o.ball_radius.or(d.ball_radius),
        penalty_start: o.penalty_start.unwrap_or(d.penalty_start),
        penalty_growth: o.penalty_growth.unwrap_or(d.penalty_growth),
        stages: o.stages.unwrap_or(d.stages),
        margin: o.margin.unwrap_or(d.margin),
        residual_tol: o.residual_tol.unwrap_or(d.residual_tol),
        max_iterations: o.max_iterations.unwrap_or(d.max_iterations),
        restart_scale: o.restart_scale.unwrap_or(d.restart_scale),
    }
}

#[derive(Serialize)]
struct Summary<'a, T: Serialize> {
    manifest_sha256: &'a str,
    kind: &'a str,
    field: Option<&'a str>,
    status: &'a str,
    result: T,
}

/// Runs the manifest and writes its artifacts into `out`. Returns the paths
/// written.
pub fn run(m: &Manifest, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let field = m.field.as_ref().map(fields::build_field).transpose()?;
    check_params(m, field.as_ref())?;
    let digest = m.digest();
    let mut art = Artifacts::new(out)?;
    let result = execute(m, field.as_ref(), &digest, &mut art)?;
    let summary = Summary {
        manifest_sha256: &digest,
        kind: m.experiment.kind(),
        field: field.as_ref().map(|f| f.name()),
        status: "ok",
        result,
    };
    art.json("summary.json", &summary)?;
    Ok(art.written)
}

fn execute(
    m: &Manifest,
    field: Option<&CoefficientField>,
    digest: &str,
    art: &mut Artifacts,
) -> Result<Value, CliError> {
    match &m.experiment {
        Experiment::Simulate(p) => {
            let f = field.unwrap();
            let grid = TimeGrid::new(p.horizon, p.steps)?;
            let driver = sample_brownian(f.noise_dim(), grid, m.seed, p.trial);
            let run = sde::SdeRun::new(f.clone(), p.epsilon, p.x0.clone(), driver)?;
            let traj = sde::euler_maruyama(&run)?;
            let times: Vec<f64> = grid.times().take(traj.len()).collect();
            art.csv("trajectory.csv", &path_table(digest, "x", &times, traj.dim(), traj.states()))?;
            Ok(json!({
                "steps": p.steps,
                "nodes_written": traj.len(),
                "explosion": traj.explosion(),
                "max_norm": traj.max_norm(),
                "final_state": traj.last(),
            }))
        }
        Experiment::Skeleton(p) => {
            let f = field.unwrap();
            let control = build_control(&p.control, p.horizon, f.noise_dim())?;
            let grid = TimeGrid::new(p.horizon, p.solver_steps)?;
            let prob = skeleton::SkeletonProblem::new(f.clone(), control.clone(), p.x0.clone(), grid);
            let sol = skeleton::solve_skeleton(&prob)?;
            let times: Vec<f64> = grid.times().take(sol.len()).collect();
            art.csv("skeleton.csv", &path_table(digest, "x", &times, sol.dim(), sol.states()))?;
            let mut polygon_final = None;
            if let Some(n) = p.polygon_steps {
                let pg = TimeGrid::new(p.horizon, n)?;
                let poly = skeleton::euler_polygon(f, &control.sample_on(pg)?, &p.x0)?;
                let times: Vec<f64> = pg.times().take(poly.len()).collect();
                art.csv("polygon.csv", &path_table(digest, "x", &times, poly.dim(), poly.states()))?;
                polygon_final = Some(poly.last().to_vec());
            }
            Ok(json!({
                "energy": loglip_core::paths::energy(&control),
                "explosion": sol.explosion(),
                "final_state": sol.last(),
                "polygon_final_state": polygon_final,
            }))
        }
        Experiment::Converge(p) => {
            let f = field.unwrap();
            let cg = TimeGrid::new(p.horizon, p.control_steps)?;
            let controls = skeleton::sample_controls(p.controls, cg, f.noise_dim(), p.alpha, m.seed)?;
            let r = skeleton::uniform_convergence_report(f, &controls, p.alpha, &p.ladder, &p.x0)?;
            let mut t = Table::new(digest, &["n", "sup_error", "max_step_increment", "step_bound"]);
            for row in &r.rows {
                t.row(vec![
                    row.n.into(),
                    row.sup_error.into(),
                    row.max_step_increment.into(),
                    row.step_bound.into(),
                ]);
            }
            art.csv("convergence.csv", &t)?;
            Ok(to_value(&r))
        }
        Experiment::Lifetime(p) => {
            let f = field.unwrap();
            let r = sde::detect_lifetime(f, &p.x0, p.horizon, &p.radii, p.steps)?;
            let mut t = Table::new(digest, &["radius", "tau"]);
            for row in &r.rows {
                t.row(vec![row.radius.into(), row.tau.into()]);
            }
            art.csv("lifetime.csv", &t)?;
            Ok(to_value(&r))
        }
        Experiment::Stability(p) => {
            let f = field.unwrap();
            let r = sde::stability_probability(
                f, p.epsilon, &p.x0, &p.deltas, p.threshold, p.trials, p.steps, m.seed,
            )?;
            let mut t = Table::new(digest, &["delta", "trials", "exceed", "p_hat", "se"]);
            for row in &r.rows {
                t.row(vec![
                    row.delta.into(),
                    row.exceed.trials.into(),
                    row.exceed.events.into(),
                    row.exceed.p().into(),
                    row.exceed.se().into(),
                ]);
            }
            art.csv("stability.csv", &t)?;
            Ok(to_value(&r))
        }
        Experiment::Rate(p) => {
            let f = field.unwrap();
            let opts = rate_options(&p.x0, p.horizon, m.seed, &p.optimizer);
            let r = ldp::rate_functional(f, &p.event, &opts)?;
            write_rate(digest, art, &r)?;
            Ok(to_value(&r))
        }
        Experiment::Ldp(p) => {
            let f = field.unwrap();
            let opts = rate_options(&p.x0, p.horizon, m.seed, &p.optimizer);
            let mc = McConfig {
                epsilon: p.epsilons.first().copied().unwrap_or(1.0),
                x0: p.x0.clone(),
                horizon: p.horizon,
                steps: p.steps,
                trials: p.trials,
                seed: m.seed,
            };
            let r = ldp::ldp_gap_report(f, &p.event, &p.epsilons, &mc, &opts)?;
            let mut t = Table::new(
                digest,
                &["eps", "trials", "hits", "p_hat", "eps_log_p", "lo", "hi", "neg_I", "gap"],
            );
            for row in &r.rows {
                let e = &row.estimate;
                t.row(vec![
                    e.epsilon.into(),
                    e.hits.trials.into(),
                    e.hits.events.into(),
                    e.p_hat.into(),
                    e.eps_log_p.into(),
                    e.eps_log_lo.unwrap_or(f64::NEG_INFINITY).into(),
                    e.eps_log_hi.into(),
                    row.neg_i.into(),
                    row.gap.into(),
                ]);
            }
            art.csv("ldp.csv", &t)?;
            write_rate(digest, art, &r.rate)?;
            Ok(to_value(&r))
        }
        Experiment::Closeness(p) => {
            let f = field.unwrap();
            let r = ldp::euler_closeness(f, p.epsilon, &p.x0, &p.ladder, p.delta, p.trials, m.seed)?;
            let mut t = Table::new(digest, &["n", "trials", "exceed", "p_hat", "se"]);
            for row in &r.rows {
                t.row(vec![
                    row.n.into(),
                    row.exceed.trials.into(),
                    row.exceed.events.into(),
                    row.exceed.p().into(),
                    row.exceed.se().into(),
                ]);
            }
            art.csv("closeness.csv", &t)?;
            Ok(to_value(&r))
        }
        Experiment::Osgood(p) => {
            let ladder = p.ladder.clone().unwrap_or_else(lyapunov::default_osgood_ladder);
            let tol = p.tolerance.unwrap_or(1e-10);
            let mut t = Table::new(digest, &["profile", "delta", "integral"]);
            let mut verdicts = Vec::new();
            for (i, prof) in p.profiles.iter().enumerate() {
                let diag = lyapunov::osgood_diverges_with(prof, p.a, &ladder, tol)?;
                for rung in &diag.rungs {
                    t.row(vec![i.into(), rung.delta.into(), rung.integral.into()]);
                }
                verdicts.push(json!({"profile": prof, "diagnostic": diag}));
            }
            art.csv("osgood.csv", &t)?;
            Ok(json!({ "profiles": verdicts }))
        }
        Experiment::SineBound(p) => {
            let grid = lyapunov::open_log_grid(p.lo, p.hi, p.count);
            let r = lyapunov::sine_series_bound_check(&grid, p.terms)?;
            let mut t = Table::new(digest, &["theta", "partial", "upper", "ratio"]);
            for row in &r.rows {
                t.row(vec![row.theta.into(), row.partial.into(), row.upper.into(), row.ratio.into()]);
            }
            art.csv("sine_bound.csv", &t)?;
            Ok(json!({
                "terms": r.terms,
                "max_ratio": r.max_ratio,
                "witness_theta": r.witness_theta,
                "constant": r.constant,
                "holds": r.holds,
            }))
        }
    }
}

fn write_rate(digest: &str, art: &mut Artifacts, r: &ldp::RateResult) -> Result<(), CliError> {
    let mut t = Table::new(digest, &["knots", "substeps", "I", "residual", "feasible", "restart"]);
    t.row(vec![
        r.trace.knots.into(),
        r.trace.substeps.into(),
        r.value.into(),
        r.residual.into(),
        r.feasible.into(),
        r.trace.restart.into(),
    ]);
    art.csv("rate.csv", &t)?;
    let g = r.control.knots();
    let times: Vec<f64> = g.grid().times().collect();
    art.csv("control.csv", &path_table(digest, "g", &times, g.dim(), g.values()))
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report serializes")
}
