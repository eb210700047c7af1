//! Time grids, Brownian drivers, controls and trajectories.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{self, Purpose};

/// Uniform grid `t_k = kT/n`, `k = 0..=n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return invalid(format!("horizon must be positive, got {horizon}"));
        }
        if steps == 0 {
            return invalid("grid needs at least one step");
        }
        Ok(Self { horizon, steps })
    }

    /// `[0, 1]` with `steps` steps.
    pub fn unit(steps: usize) -> Result<Self> {
        Self::new(1.0, steps)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn nodes(&self) -> usize {
        self.steps + 1
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Node time; dyadic refinements reproduce coarse node times exactly.
    pub fn t(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            k as f64 * self.horizon / self.steps as f64
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(|k| self.t(k))
    }

    pub fn refined(&self, factor: usize) -> Self {
        Self {
            horizon: self.horizon,
            steps: self.steps * factor,
        }
    }

    /// `Some(r)` when `other` has `r` times as many steps over the same horizon.
    pub fn refinement_factor(&self, other: &TimeGrid) -> Option<usize> {
        if self.horizon != other.horizon || other.steps % self.steps != 0 {
            None
        } else {
            Some(other.steps / self.steps)
        }
    }

    /// Index of the grid node `[nt]/n` at or below `t`.
    pub fn floor_index(&self, t: f64) -> usize {
        let k = (t / self.horizon * self.steps as f64).floor();
        (k.max(0.0) as usize).min(self.steps)
    }
}

/// Values in `R^dim` at every node of a grid, stored node-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPath {
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
}

impl GridPath {
    pub fn new(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return invalid("path dimension must be positive");
        }
        if values.len() != grid.nodes() * dim {
            return Err(Error::DimensionMismatch {
                expected: grid.nodes() * dim,
                got: values.len(),
            });
        }
        Ok(Self { grid, dim, values })
    }

    pub fn zeros(grid: TimeGrid, dim: usize) -> Self {
        Self {
            grid,
            dim,
            values: vec![0.0; grid.nodes() * dim],
        }
    }

    pub fn from_fn(grid: TimeGrid, dim: usize, mut f: impl FnMut(f64, &mut [f64])) -> Self {
        let mut p = Self::zeros(grid, dim);
        for k in 0..grid.nodes() {
            let t = grid.t(k);
            f(t, &mut p.values[k * dim..(k + 1) * dim]);
        }
        p
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn node(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Pointwise `c · ω`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            grid: self.grid,
            dim: self.dim,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    /// Restriction to the coarser grid with `steps / factor` steps.
    pub fn restrict(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.grid.steps % factor != 0 {
            return Err(Error::IncompatibleGrids(format!(
                "{} steps are not divisible by {factor}",
                self.grid.steps
            )));
        }
        let grid = TimeGrid::new(self.grid.horizon, self.grid.steps / factor)?;
        let mut values = Vec::with_capacity(grid.nodes() * self.dim);
        for k in 0..grid.nodes() {
            values.extend_from_slice(self.node(k * factor));
        }
        Ok(Self {
            grid,
            dim: self.dim,
            values,
        })
    }

    /// Piecewise-linear interpolation between nodes.
    pub fn value_at(&self, t: f64, out: &mut [f64]) {
        let n = self.grid.steps;
        let k = self.grid.floor_index(t).min(n - 1);
        let t0 = self.grid.t(k);
        let w = ((t - t0) / self.grid.dt()).clamp(0.0, 1.0);
        let (a, b) = (self.node(k), self.node(k + 1));
        for i in 0..self.dim {
            out[i] = a[i] + w * (b[i] - a[i]);
        }
    }

    /// Writes `t,x1,…,xd` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_rows(w, &self.grid, self.dim, &self.values)
    }

    /// Compact binary dump; see [`BinaryHeader`].
    pub fn write_binary<W: Write>(&self, w: W, lineage: SeedLineage) -> Result<()> {
        write_binary(w, &self.grid, self.dim, &self.values, lineage, false)
    }

    pub fn read_binary<R: Read>(r: R) -> Result<(Self, SeedLineage)> {
        let (header, values) = read_binary(r)?;
        if values.len() != header.grid.nodes() * header.dim {
            return Err(Error::Io("binary path is truncated".into()));
        }
        Ok((Self::new(header.grid, header.dim, values)?, header.lineage))
    }
}

fn write_rows<W: Write>(mut w: W, grid: &TimeGrid, dim: usize, values: &[f64]) -> Result<()> {
    let mut line = String::from("t");
    for i in 1..=dim {
        line.push_str(&format!(",x{i}"));
    }
    writeln!(w, "{line}")?;
    for (k, row) in values.chunks(dim).enumerate() {
        line.clear();
        line.push_str(&format!("{}", grid.t(k)));
        for v in row {
            line.push_str(&format!(",{v}"));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Identifies the random stream a driver was built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SeedLineage {
    pub seed: u64,
    pub trial: u64,
    /// Number of bridge refinements applied to the base sample.
    pub level: u32,
}

/// Header of the binary dump: magic `LLPATH01`, then little-endian
/// `dim: u32`, `steps: u64`, `horizon: f64`, `seed: u64`, `trial: u64`,
/// `level: u32`, `flags: u32` (bit 0: exploded), `stored_nodes: u64`,
/// followed by `stored_nodes · dim` `f64` values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryHeader {
    pub grid: TimeGrid,
    pub dim: usize,
    pub lineage: SeedLineage,
    pub exploded: bool,
    pub stored_nodes: usize,
}

pub const BINARY_MAGIC: &[u8; 8] = b"LLPATH01";

fn write_binary<W: Write>(
    mut w: W,
    grid: &TimeGrid,
    dim: usize,
    values: &[f64],
    lineage: SeedLineage,
    exploded: bool,
) -> Result<()> {
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&(dim as u32).to_le_bytes())?;
    w.write_all(&(grid.steps as u64).to_le_bytes())?;
    w.write_all(&grid.horizon.to_le_bytes())?;
    w.write_all(&lineage.seed.to_le_bytes())?;
    w.write_all(&lineage.trial.to_le_bytes())?;
    w.write_all(&lineage.level.to_le_bytes())?;
    w.write_all(&u32::from(exploded).to_le_bytes())?;
    w.write_all(&((values.len() / dim) as u64).to_le_bytes())?;
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_binary<R: Read>(mut r: R) -> Result<(BinaryHeader, Vec<f64>)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != BINARY_MAGIC {
        return Err(Error::Io("bad magic in binary path".into()));
    }
    let dim = read_u32(&mut r)? as usize;
    let steps = read_u64(&mut r)? as usize;
    let horizon = f64::from_bits(read_u64(&mut r)?);
    let seed = read_u64(&mut r)?;
    let trial = read_u64(&mut r)?;
    let level = read_u32(&mut r)?;
    let flags = read_u32(&mut r)?;
    let stored = read_u64(&mut r)? as usize;
    let grid = TimeGrid::new(horizon, steps)?;
    if dim == 0 || stored > grid.nodes() {
        return Err(Error::Io("inconsistent binary header".into()));
    }
    let mut values = vec![0.0; stored * dim];
    for v in values.iter_mut() {
        *v = f64::from_bits(read_u64(&mut r)?);
    }
    Ok((
        BinaryHeader {
            grid,
            dim,
            lineage: SeedLineage { seed, trial, level },
            exploded: flags & 1 == 1,
            stored_nodes: stored,
        },
        values,
    ))
}

// ---------------------------------------------------------------------------
// Brownian drivers

/// A sampled Brownian path `W(t_k)` with its seed lineage.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianDriver {
    path: GridPath,
    lineage: SeedLineage,
}

impl BrownianDriver {
    pub fn path(&self) -> &GridPath {
        &self.path
    }

    pub fn into_path(self) -> GridPath {
        self.path
    }

    pub fn grid(&self) -> &TimeGrid {
        self.path.grid()
    }

    pub fn dim(&self) -> usize {
        self.path.dim()
    }

    pub fn lineage(&self) -> SeedLineage {
        self.lineage
    }

    /// `ΔW_k = W(t_{k+1}) − W(t_k)` written into `out`.
    pub fn increment(&self, k: usize, out: &mut [f64]) {
        let (a, b) = (self.path.node(k), self.path.node(k + 1));
        for i in 0..out.len() {
            out[i] = b[i] - a[i];
        }
    }
}

/// Samples `W` on `grid` from the stream keyed by `(seed, trial, level 0)`.
///
/// The unit-horizon path `U_k = Σ_{j<k} z_j √(1/n)` is built first and then
/// scaled by `√T`, so drivers for different horizons share their shape.
pub fn sample_brownian(m: usize, grid: TimeGrid, seed: u64, trial: u64) -> BrownianDriver {
    let mut stream = BrownianStream::new(m, grid, seed, trial);
    let mut values = vec![0.0; grid.nodes() * m];
    for k in 0..grid.steps() {
        let (head, tail) = values.split_at_mut((k + 1) * m);
        stream.next_node(&head[k * m..], &mut tail[..m]);
    }
    BrownianDriver {
        path: GridPath { grid, dim: m, values },
        lineage: SeedLineage {
            seed,
            trial,
            level: 0,
        },
    }
}

/// Streaming form of [`sample_brownian`]: produces the same node values one
/// step at a time without storing the path.
pub struct BrownianStream {
    rng: rand_chacha::ChaCha8Rng,
    unit: Vec<f64>,
    sqrt_t: f64,
    sqrt_inv_n: f64,
}

impl BrownianStream {
    pub fn new(m: usize, grid: TimeGrid, seed: u64, trial: u64) -> Self {
        Self {
            rng: rng::stream(seed, trial, 0, Purpose::BrownianIncrements),
            unit: vec![0.0; m],
            sqrt_t: grid.horizon().sqrt(),
            sqrt_inv_n: (1.0 / grid.steps() as f64).sqrt(),
        }
    }

    /// Advances one step; `next` receives `W(t_{k+1})`. `_prev` is accepted
    /// for symmetry with stored paths and is not read.
    pub fn next_node(&mut self, _prev: &[f64], next: &mut [f64]) {
        for (u, o) in self.unit.iter_mut().zip(next.iter_mut()) {
            *u += rng::normal(&mut self.rng) * self.sqrt_inv_n;
            *o = self.sqrt_t * *u;
        }
    }
}

/// Doubles the grid by Brownian-bridge midpoints
/// `W(t_mid) = (W(t_k) + W(t_{k+1}))/2 + ζ`, `ζ ~ N(0, (T/4n) I)`, drawn
/// from the stream keyed by the next refinement level. Coarse nodes are
/// copied bit for bit.
pub fn refine_brownian(w: &BrownianDriver) -> BrownianDriver {
    let grid = w.grid().refined(2);
    let m = w.dim();
    let level = w.lineage.level + 1;
    let mut rng = rng::stream(w.lineage.seed, w.lineage.trial, level, Purpose::BridgeMidpoints);
    let sd = (w.grid().dt() / 4.0).sqrt();
    let mut values = Vec::with_capacity(grid.nodes() * m);
    for k in 0..w.grid().steps() {
        let (a, b) = (w.path.node(k), w.path.node(k + 1));
        values.extend_from_slice(a);
        for i in 0..m {
            values.push(0.5 * (a[i] + b[i]) + sd * rng::normal(&mut rng));
        }
    }
    values.extend_from_slice(w.path.node(w.grid().steps()));
    BrownianDriver {
        path: GridPath { grid, dim: m, values },
        lineage: SeedLineage {
            level,
            ..w.lineage
        },
    }
}

// ---------------------------------------------------------------------------
// Controls

/// Piecewise-linear control with knots on a uniform grid and `g(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Control {
    knots: GridPath,
}

impl Control {
    pub fn new(knots: GridPath) -> Result<Self> {
        if knots.node(0).iter().any(|&v| v != 0.0) {
            return invalid("control must start at zero");
        }
        if knots.values.iter().any(|v| !v.is_finite()) {
            return invalid("control knots must be finite");
        }
        Ok(Self { knots })
    }

    pub fn zero(grid: TimeGrid, m: usize) -> Self {
        Self {
            knots: GridPath::zeros(grid, m),
        }
    }

    /// `g(t) = t · v`.
    pub fn linear(grid: TimeGrid, v: &[f64]) -> Self {
        Self {
            knots: GridPath::from_fn(grid, v.len(), |t, out| {
                for (o, vi) in out.iter_mut().zip(v) {
                    *o = t * vi;
                }
            }),
        }
    }

    /// Control from increments `Δg_j` (one `m`-vector per segment).
    pub fn from_increments(grid: TimeGrid, m: usize, increments: &[f64]) -> Result<Self> {
        if increments.len() != grid.steps() * m {
            return Err(Error::DimensionMismatch {
                expected: grid.steps() * m,
                got: increments.len(),
            });
        }
        let mut values = vec![0.0; grid.nodes() * m];
        for j in 0..grid.steps() {
            for i in 0..m {
                values[(j + 1) * m + i] = values[j * m + i] + increments[j * m + i];
            }
        }
        Self::new(GridPath::new(grid, m, values)?)
    }

    pub fn grid(&self) -> &TimeGrid {
        self.knots.grid()
    }

    pub fn dim(&self) -> usize {
        self.knots.dim()
    }

    pub fn knots(&self) -> &GridPath {
        &self.knots
    }

    /// Constant derivative on segment `j`, written into `out`.
    pub fn slope(&self, j: usize, out: &mut [f64]) {
        let dt = self.grid().dt();
        let (a, b) = (self.knots.node(j), self.knots.node(j + 1));
        for i in 0..out.len() {
            out[i] = (b[i] - a[i]) / dt;
        }
    }

    /// The control sampled at the nodes of `grid` (same horizon).
    pub fn sample_on(&self, grid: TimeGrid) -> Result<GridPath> {
        if grid.horizon() != self.grid().horizon() {
            return Err(Error::IncompatibleGrids(
                "control and grid horizons differ".into(),
            ));
        }
        if let Some(r) = self.grid().refinement_factor(&grid) {
            // exact knot values at shared nodes
            let m = self.dim();
            let mut values = vec![0.0; grid.nodes() * m];
            for k in 0..grid.nodes() {
                let j = (k / r).min(self.grid().steps() - 1);
                let w = (k - j * r) as f64 / r as f64;
                let (a, b) = (self.knots.node(j), self.knots.node(j + 1));
                for i in 0..m {
                    values[k * m + i] = if k % r == 0 {
                        self.knots.node(k / r)[i]
                    } else {
                        a[i] + w * (b[i] - a[i])
                    };
                }
            }
            return GridPath::new(grid, m, values);
        }
        let knots = &self.knots;
        Ok(GridPath::from_fn(grid, self.dim(), |t, out| knots.value_at(t, out)))
    }

    pub fn sup_norm(&self) -> f64 {
        self.knots
            .values
            .chunks(self.dim())
            .map(crate::norm)
            .fold(0.0, f64::max)
    }
}

/// `e(g) = ∫|ġ|² dt = Σ_k |g(t_{k+1}) − g(t_k)|² / (T/n)` for piecewise-linear `g`.
pub fn energy(g: &Control) -> f64 {
    let dt = g.grid().dt();
    let p = g.knots();
    (0..g.grid().steps())
        .map(|k| {
            let (a, b) = (p.node(k), p.node(k + 1));
            a.iter().zip(b).map(|(x, y)| (y - x) * (y - x)).sum::<f64>()
        })
        .sum::<f64>()
        / dt
}

// ---------------------------------------------------------------------------
// Trajectories

/// First exit of the explosion guard.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExitRecord {
    /// Time of the first node beyond the guard.
    pub time: f64,
    pub step: usize,
    pub norm: f64,
}

/// Solution values on a grid; truncated after an explosion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    grid: TimeGrid,
    dim: usize,
    states: Vec<f64>,
    explosion: Option<ExitRecord>,
}

impl Trajectory {
    pub(crate) fn from_parts(
        grid: TimeGrid,
        dim: usize,
        states: Vec<f64>,
        explosion: Option<ExitRecord>,
    ) -> Self {
        debug_assert_eq!(states.len() % dim, 0);
        Self {
            grid,
            dim,
            states,
            explosion,
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored nodes.
    pub fn len(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn node(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn last(&self) -> &[f64] {
        self.node(self.len() - 1)
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn explosion(&self) -> Option<ExitRecord> {
        self.explosion
    }

    pub fn is_exploded(&self) -> bool {
        self.explosion.is_some()
    }

    pub fn max_norm(&self) -> f64 {
        self.states.chunks(self.dim).map(crate::norm).fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_rows(w, &self.grid, self.dim, &self.states)
    }

    pub fn write_binary<W: Write>(&self, w: W, lineage: SeedLineage) -> Result<()> {
        write_binary(w, &self.grid, self.dim, &self.states, lineage, self.is_exploded())
    }

    /// Reads a dump written by [`Trajectory::write_binary`]. The exit record
    /// is not stored; an exploded dump yields an exit at the first missing node.
    pub fn read_binary<R: Read>(r: R) -> Result<(Self, SeedLineage)> {
        let (h, states) = read_binary(r)?;
        let explosion = h.exploded.then(|| {
            let step = h.stored_nodes;
            ExitRecord {
                time: h.grid.t(step.min(h.grid.steps())),
                step,
                norm: f64::INFINITY,
            }
        });
        Ok((
            Self {
                grid: h.grid,
                dim: h.dim,
                states,
                explosion,
            },
            h.lineage,
        ))
    }
}

/// `max_k |a(t_k) − b(t_k)|` over the nodes the two trajectories share.
///
/// Grids must have the same horizon and one step count must divide the
/// other; comparison stops at the shorter trajectory after an explosion.
pub fn sup_distance(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch {
            expected: a.dim,
            got: b.dim,
        });
    }
    let (coarse, fine, r) = if let Some(r) = a.grid.refinement_factor(&b.grid) {
        (a, b, r)
    } else if let Some(r) = b.grid.refinement_factor(&a.grid) {
        (b, a, r)
    } else {
        return Err(Error::IncompatibleGrids(format!(
            "{} and {} steps over horizons {} and {}",
            a.grid.steps, b.grid.steps, a.grid.horizon, b.grid.horizon
        )));
    };
    let shared = coarse.len().min((fine.len() - 1) / r + 1);
    Ok((0..shared)
        .map(|k| crate::dist(coarse.node(k), fine.node(k * r)))
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_nodes() {
        let g = TimeGrid::new(2.0, 8).unwrap();
        assert_eq!(g.t(0), 0.0);
        assert_eq!(g.t(8), 2.0);
        assert!(g.times().collect::<Vec<_>>().windows(2).all(|w| w[0] < w[1]));
        let f = g.refined(2);
        for k in 0..=8 {
            assert_eq!(g.t(k), f.t(2 * k));
        }
        assert!(TimeGrid::new(0.0, 3).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
    }

    #[test]
    fn brownian_starts_at_zero_and_is_deterministic() {
        let g = TimeGrid::unit(64).unwrap();
        let a = sample_brownian(2, g, 5, 9);
        let b = sample_brownian(2, g, 5, 9);
        let c = sample_brownian(2, g, 5, 10);
        assert_eq!(a.path().node(0), &[0.0, 0.0]);
        assert_eq!(a, b);
        assert_ne!(a.path(), c.path());
    }

    #[test]
    fn energy_examples() {
        let g = TimeGrid::unit(10).unwrap();
        assert!((energy(&Control::linear(g, &[1.0, 2.0])) - 5.0).abs() < 1e-12);
        assert_eq!(energy(&Control::zero(g, 3)), 0.0);
    }

    #[test]
    fn control_must_start_at_zero() {
        let g = TimeGrid::unit(1).unwrap();
        let p = GridPath::new(g, 1, vec![1.0, 2.0]).unwrap();
        assert!(Control::new(p).is_err());
    }

    #[test]
    fn sup_distance_shift() {
        let g = TimeGrid::unit(4).unwrap();
        let a = Trajectory::from_parts(g, 2, (0..10).map(|i| i as f64).collect(), None);
        let b = Trajectory::from_parts(
            g,
            2,
            a.states().chunks(2).flat_map(|p| [p[0] + 3.0, p[1] + 4.0]).collect(),
            None,
        );
        assert_eq!(sup_distance(&a, &a).unwrap(), 0.0);
        assert!((sup_distance(&a, &b).unwrap() - 5.0).abs() < 1e-12);
        let other = Trajectory::from_parts(TimeGrid::unit(3).unwrap(), 2, vec![0.0; 8], None);
        assert!(matches!(
            sup_distance(&a, &other),
            Err(Error::IncompatibleGrids(_))
        ));
    }

    #[test]
    fn binary_round_trip() {
        let g = TimeGrid::new(0.5, 16).unwrap();
        let w = sample_brownian(3, g, 1, 2);
        let mut buf = Vec::new();
        w.path().write_binary(&mut buf, w.lineage()).unwrap();
        assert_eq!(&buf[..8], BINARY_MAGIC);
        let (p, lin) = GridPath::read_binary(&buf[..]).unwrap();
        assert_eq!(&p, w.path());
        assert_eq!(lin, w.lineage());
        buf[0] = b'X';
        assert!(GridPath::read_binary(&buf[..]).is_err());
    }

    #[test]
    fn csv_layout() {
        let g = TimeGrid::unit(2).unwrap();
        let p = GridPath::new(g, 2, vec![0.0, 0.0, 0.5, -1.0, 1.0, 2.25]).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "t,x1,x2\n0,0,0\n0.5,0.5,-1\n1,1,2.25\n"
        );
    }
}
