//! Finite-box solvers for the catalyst-driven Cauchy problems
//!
//! ```text
//! ∂w/∂t = ρΔw + γ Σ_q δ_{X_q(t)} (w + 1),   w(·, 0) = 0,
//! ```
//!
//! its pinned counterpart `w̄` (all `p` walkers frozen at the origin), the
//! renewal (Volterra) equation for `w̄(0, ·)` and the Duhamel consistency
//! residual.
//!
//! Time stepping is explicit: over a step of length `dt` every site receives
//! `dt·ρΔw` plus `γ τ_q(x) (w + 1)`, where `τ_q(x)` is the exact time walker
//! `q` spends at `x` during the step. Steady states of the scheme coincide
//! with those of the lattice equation, and `dt ≤ 1/(4dρ)` keeps every update
//! coefficient nonnegative.

use serde::Serialize;

use crate::error::{PamError, Result};
use crate::lattice::{Dimension, ExtReal, LatticeField, Site, MAX_DIM};
use crate::lattice_green::{heat_kernel, return_probability, LatticeGreen};
use crate::quadrature::GlRule;
use crate::spectral::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Jump {
    pub time: f64,
    pub site: Site,
}

/// Piecewise-constant nearest-neighbour path on `[0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Path {
    pub start: Site,
    pub jumps: Vec<Jump>,
}

impl Path {
    pub fn constant(start: Site) -> Self {
        Path { start, jumps: Vec::new() }
    }

    /// Site occupied at time `t` (right-continuous).
    pub fn site_at(&self, t: f64) -> Site {
        let k = self.jumps.partition_point(|j| j.time <= t);
        if k == 0 {
            self.start
        } else {
            self.jumps[k - 1].site
        }
    }

    pub fn end_site(&self) -> Site {
        self.jumps.last().map_or(self.start, |j| j.site)
    }

    /// All sites visited, in order.
    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        std::iter::once(self.start).chain(self.jumps.iter().map(|j| j.site))
    }

    /// Maximal constant pieces `(site, a, b)` covering `[0, horizon]`.
    pub fn pieces(&self, horizon: f64) -> Vec<(Site, f64, f64)> {
        let mut out = Vec::with_capacity(self.jumps.len() + 1);
        let mut site = self.start;
        let mut a = 0.0;
        for j in &self.jumps {
            out.push((site, a, j.time));
            site = j.site;
            a = j.time;
        }
        out.push((site, a, horizon));
        out
    }
}

/// `p` walker paths on a common horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectorySet {
    dim: Dimension,
    horizon: f64,
    paths: Vec<Path>,
}

impl TrajectorySet {
    /// Validates jump ordering, neighbour steps and the horizon.
    pub fn new(dim: Dimension, horizon: f64, paths: Vec<Path>) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(PamError::domain("trajectory horizon must be positive and finite"));
        }
        if paths.is_empty() {
            return Err(PamError::domain("trajectory set needs at least one path"));
        }
        for (q, path) in paths.iter().enumerate() {
            if path.start.0[dim.get()..].iter().any(|&c| c != 0) {
                return Err(PamError::domain(format!("path {q} start has extra coordinates")));
            }
            let mut prev_t = 0.0;
            let mut prev_site = path.start;
            for j in &path.jumps {
                if !(j.time > prev_t) || j.time > horizon {
                    return Err(PamError::domain(format!(
                        "path {q}: jump times must increase strictly within (0, T]"
                    )));
                }
                if !prev_site.is_neighbor(&j.site) {
                    return Err(PamError::domain(format!("path {q}: non-neighbour jump")));
                }
                prev_t = j.time;
                prev_site = j.site;
            }
        }
        Ok(TrajectorySet { dim, horizon, paths })
    }

    /// `p` walkers frozen at `site`.
    pub fn pinned(dim: Dimension, p: usize, site: Site, horizon: f64) -> Result<Self> {
        Self::new(dim, horizon, vec![Path::constant(site); p])
    }

    /// Built by the sampler, whose paths are valid by construction.
    pub(crate) fn from_sampled(dim: Dimension, horizon: f64, paths: Vec<Path>) -> Self {
        TrajectorySet { dim, horizon, paths }
    }

    pub fn dim(&self) -> Dimension {
        self.dim
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// Largest sup-norm reached by any walker.
    pub fn max_excursion(&self) -> i32 {
        self.paths.iter().flat_map(|p| p.sites()).map(|s| s.sup_norm()).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Boundary {
    Absorbing,
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoxConfig {
    pub radius: i32,
    pub boundary: Boundary,
    /// Largest admissible step; the solver uses `T / ceil(T / dt)`.
    pub dt: f64,
}

impl BoxConfig {
    /// Radius `ceil(6 √(max(κ, ρ) T)) + 2`, absorbing boundary, step
    /// `1/(4dρ + 4pγ)`.
    pub fn default_for(params: &ModelParams, horizon: f64) -> Self {
        let spread = params.kappa.max(params.rho) * horizon;
        BoxConfig {
            radius: (6.0 * spread.sqrt()).ceil() as i32 + 2,
            boundary: Boundary::Absorbing,
            dt: default_dt(params),
        }
    }

    pub fn with_radius(mut self, radius: i32) -> Self {
        self.radius = radius;
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    fn validate(&self, params: &ModelParams) -> Result<()> {
        if self.radius < 1 {
            return Err(PamError::domain("box radius must be at least 1"));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(PamError::domain("dt must be positive"));
        }
        let guard = stability_guard(params);
        if self.dt > guard * (1.0 + 1e-12) {
            return Err(PamError::domain(format!(
                "dt={} exceeds the stability guard 1/(4 d rho) = {guard}",
                self.dt
            )));
        }
        Ok(())
    }
}

/// `1/(4dρ + 4pγ)`.
pub fn default_dt(params: &ModelParams) -> f64 {
    let d = params.d.get() as f64;
    1.0 / (4.0 * d * params.rho + 4.0 * params.p as f64 * params.gamma)
}

/// `1/(4dρ)`.
pub fn stability_guard(params: &ModelParams) -> f64 {
    1.0 / (4.0 * params.d.get() as f64 * params.rho)
}

/// Number of steps and effective step for a horizon.
pub fn step_count(horizon: f64, dt: f64) -> (usize, f64) {
    let n = ((horizon / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    (n, horizon / n as f64)
}

/// One constant piece of one walker inside one time step, with the solution
/// values at its site at the start and end of the step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WalkerSegment {
    pub walker: usize,
    pub site: Site,
    pub step_start: f64,
    pub step_end: f64,
    pub a: f64,
    pub b: f64,
    pub w_old: f64,
    pub w_new: f64,
}

impl WalkerSegment {
    /// Linear-in-time interpolation of `w` at the segment's site.
    pub fn w_at(&self, s: f64) -> f64 {
        let theta = (s - self.step_start) / (self.step_end - self.step_start);
        self.w_old + theta * (self.w_new - self.w_old)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveOptions {
    /// Keep a snapshot every this many steps (0: first and last only).
    pub snapshot_stride: usize,
    pub record_segments: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { snapshot_stride: 0, record_segments: false }
    }
}

impl SolveOptions {
    /// Snapshots only; what the Monte Carlo layer uses.
    pub fn minimal() -> Self {
        SolveOptions { snapshot_stride: 0, record_segments: false }
    }

    pub fn full(snapshot_stride: usize) -> Self {
        SolveOptions { snapshot_stride, record_segments: true }
    }
}

/// Output of [`solve_w`].
#[derive(Debug, Clone, Serialize)]
pub struct FieldTrace {
    pub times: Vec<f64>,
    pub fields: Vec<LatticeField>,
    /// `∫_0^T Σ_q w(X_q(s), s) ds`.
    pub running_time_integral_at_walkers: f64,
    pub dt: f64,
    pub steps: usize,
    #[serde(skip)]
    pub segments: Vec<WalkerSegment>,
}

impl FieldTrace {
    pub fn final_field(&self) -> &LatticeField {
        self.fields.last().expect("trace has at least one snapshot")
    }

    /// Snapshot index of the step `n`, if stored.
    pub fn snapshot_at_step(&self, n: usize) -> Option<&LatticeField> {
        let t = n as f64 * self.dt;
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-9 * t.max(1.0))
            .map(|i| &self.fields[i])
    }
}

/// Padded lattice array with one ghost layer per side.
#[derive(Debug, Clone)]
struct Grid {
    d: usize,
    strides: [usize; MAX_DIM],
    /// Coordinate of the first interior cell along every axis.
    lo: i32,
    /// Interior cells per axis.
    n: usize,
    len: usize,
    rows: Vec<usize>,
    ghosts: Vec<(usize, usize)>,
}

impl Grid {
    /// Full box `[-R, R]^d`.
    fn full(dim: Dimension, radius: i32, boundary: Boundary) -> Self {
        let n = 2 * radius as usize + 1;
        let mut g = Self::layout(dim.get(), -radius, n);
        if boundary == Boundary::Periodic {
            g.ghosts = g.face_pairs(|c| Some(c + n as i32), |c| Some(c - n as i32));
        }
        g
    }

    /// Octant `[0, R]^d` of a field symmetric under every reflection.
    fn octant(dim: Dimension, radius: i32, boundary: Boundary) -> Self {
        let n = radius as usize + 1;
        let mut g = Self::layout(dim.get(), 0, n);
        let periodic = boundary == Boundary::Periodic;
        g.ghosts = g.face_pairs(|_| Some(1), |c| if periodic { Some(c - 1) } else { None });
        g
    }

    fn layout(d: usize, lo: i32, n: usize) -> Self {
        let side = n + 2;
        let mut strides = [0usize; MAX_DIM];
        let mut s = 1;
        for stride in strides.iter_mut().take(d) {
            *stride = s;
            s *= side;
        }
        let len = s;
        let mut rows = Vec::new();
        let mut idx = vec![1usize; d];
        loop {
            rows.push((1..d).map(|a| idx[a] * strides[a]).sum::<usize>() + strides[0]);
            let mut a = 1;
            loop {
                if a >= d {
                    return Grid { d, strides, lo, n, len, rows, ghosts: Vec::new() };
                }
                idx[a] += 1;
                if idx[a] <= n {
                    break;
                }
                idx[a] = 1;
                a += 1;
            }
        }
    }

    /// Ghost/source pairs for the low and high faces of every axis. The
    /// closures map the ghost coordinate to the source coordinate.
    fn face_pairs(
        &self,
        low: impl Fn(i32) -> Option<i32>,
        high: impl Fn(i32) -> Option<i32>,
    ) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let first = self.lo;
        let last = self.lo + self.n as i32 - 1;
        for a in 0..self.d {
            for &row in &self.rows {
                for i in 0..self.n {
                    let cell = row + i;
                    let c = self.coord(cell, a);
                    if c == first {
                        if let Some(src) = low(first - 1) {
                            out.push((cell - self.strides[a], self.with_coord(cell, a, src)));
                        }
                    }
                    if c == last {
                        if let Some(src) = high(last + 1) {
                            out.push((cell + self.strides[a], self.with_coord(cell, a, src)));
                        }
                    }
                }
            }
        }
        out
    }

    fn coord(&self, cell: usize, a: usize) -> i32 {
        let side = self.n + 2;
        ((cell / self.strides[a]) % side) as i32 - 1 + self.lo
    }

    fn with_coord(&self, cell: usize, a: usize, c: i32) -> usize {
        let old = self.coord(cell, a);
        (cell as i64 + (c - old) as i64 * self.strides[a] as i64) as usize
    }

    fn index(&self, site: &Site) -> Option<usize> {
        let mut idx = 0;
        for a in 0..self.d {
            let k = site.0[a] - self.lo;
            if k < 0 || k >= self.n as i32 {
                return None;
            }
            idx += (k as usize + 1) * self.strides[a];
        }
        Some(idx)
    }

    fn fill_ghosts(&self, u: &mut [f64]) {
        for &(g, s) in &self.ghosts {
            u[g] = u[s];
        }
    }

    /// `next = cur + coef·Δcur` on interior cells.
    fn diffuse(&self, cur: &[f64], next: &mut [f64], coef: f64) {
        match self.d {
            1 => self.diffuse_d::<1>(cur, next, coef),
            2 => self.diffuse_d::<2>(cur, next, coef),
            3 => self.diffuse_d::<3>(cur, next, coef),
            4 => self.diffuse_d::<4>(cur, next, coef),
            _ => self.diffuse_d::<5>(cur, next, coef),
        }
    }

    fn diffuse_d<const D: usize>(&self, cur: &[f64], next: &mut [f64], coef: f64) {
        let mut st = [0usize; D];
        st.copy_from_slice(&self.strides[..D]);
        let centre = 2.0 * D as f64;
        for &row in &self.rows {
            for i in row..row + self.n {
                let mut s = -centre * cur[i];
                for &k in &st {
                    s += cur[i + k] + cur[i - k];
                }
                next[i] = cur[i] + coef * s;
            }
        }
    }

    fn to_field(&self, dim: Dimension, radius: i32, u: &[f64]) -> LatticeField {
        let mut field = LatticeField::zeros(dim, radius);
        for (k, v) in field.values_mut().iter_mut().enumerate() {
            let mut idx = 0;
            let mut rest = k;
            for a in 0..self.d {
                idx += (rest % self.n + 1) * self.strides[a];
                rest /= self.n;
            }
            *v = u[idx];
        }
        field
    }
}

/// Reusable buffers for repeated solves on one box shape.
#[derive(Debug, Clone)]
pub struct CauchyWorkspace {
    grid: Grid,
    dim: Dimension,
    radius: i32,
    boundary: Boundary,
    cur: Vec<f64>,
    next: Vec<f64>,
}

impl CauchyWorkspace {
    pub fn new(dim: Dimension, radius: i32, boundary: Boundary) -> Self {
        let grid = Grid::full(dim, radius, boundary);
        let len = grid.len;
        CauchyWorkspace { grid, dim, radius, boundary, cur: vec![0.0; len], next: vec![0.0; len] }
    }

    fn matches(&self, dim: Dimension, cfg: &BoxConfig) -> bool {
        self.dim == dim && self.radius == cfg.radius && self.boundary == cfg.boundary
    }
}

/// Solves the walker-driven problem from `w(·, 0) = 0`.
pub fn solve_w(
    traj: &TrajectorySet,
    params: &ModelParams,
    cfg: &BoxConfig,
    opts: &SolveOptions,
) -> Result<FieldTrace> {
    let mut ws = CauchyWorkspace::new(params.d, cfg.radius, cfg.boundary);
    solve_w_with(&mut ws, traj, params, cfg, opts, None)
}

/// As [`solve_w`], from a given initial field (zero outside its box).
pub fn solve_w_from(
    initial: &LatticeField,
    traj: &TrajectorySet,
    params: &ModelParams,
    cfg: &BoxConfig,
    opts: &SolveOptions,
) -> Result<FieldTrace> {
    let mut ws = CauchyWorkspace::new(params.d, cfg.radius, cfg.boundary);
    solve_w_with(&mut ws, traj, params, cfg, opts, Some(initial))
}

/// Workspace-reusing solver behind [`solve_w`] and [`solve_w_from`].
pub fn solve_w_with(
    ws: &mut CauchyWorkspace,
    traj: &TrajectorySet,
    params: &ModelParams,
    cfg: &BoxConfig,
    opts: &SolveOptions,
    initial: Option<&LatticeField>,
) -> Result<FieldTrace> {
    params.validate()?;
    cfg.validate(params)?;
    if traj.dim() != params.d {
        return Err(PamError::domain("trajectory dimension differs from model dimension"));
    }
    if !ws.matches(params.d, cfg) {
        *ws = CauchyWorkspace::new(params.d, cfg.radius, cfg.boundary);
    }
    for path in traj.paths() {
        for site in path.sites() {
            if site.sup_norm() > cfg.radius {
                return Err(PamError::BoxExit { site: site.coords(params.d).to_vec(), radius: cfg.radius });
            }
        }
    }
    let horizon = traj.horizon();
    let (steps, dt) = step_count(horizon, cfg.dt);
    let grid = &ws.grid;
    let cur = &mut ws.cur;
    let next = &mut ws.next;
    cur.iter_mut().for_each(|v| *v = 0.0);
    next.iter_mut().for_each(|v| *v = 0.0);
    if let Some(init) = initial {
        for (site, v) in init.iter() {
            if v < 0.0 {
                return Err(PamError::domain("initial field must be nonnegative"));
            }
            if let Some(i) = grid.index(&site) {
                cur[i] = v;
            }
        }
        grid.fill_ghosts(cur);
    }

    let coef = params.rho * dt;
    let gamma = params.gamma;
    let snapshot_due = |n: usize| {
        n == 0 || n == steps || (opts.snapshot_stride > 0 && n % opts.snapshot_stride == 0)
    };
    let mut times = vec![0.0];
    let mut fields = vec![grid.to_field(params.d, cfg.radius, cur)];
    let mut segments = Vec::new();
    let mut integral = 0.0;

    let paths = traj.paths();
    let mut cursor = vec![0usize; paths.len()];
    let mut here: Vec<Site> = paths.iter().map(|p| p.start).collect();
    // (walker, cell, site, a, b) pieces of the current step
    let mut pieces: Vec<(usize, usize, Site, f64, f64)> = Vec::new();

    for n in 0..steps {
        let t0 = n as f64 * dt;
        let t1 = if n + 1 == steps { horizon } else { (n + 1) as f64 * dt };
        pieces.clear();
        for (q, path) in paths.iter().enumerate() {
            let mut a = t0;
            while cursor[q] < path.jumps.len() && path.jumps[cursor[q]].time < t1 {
                let j = path.jumps[cursor[q]];
                if j.time > a {
                    pieces.push((q, grid.index(&here[q]).expect("checked"), here[q], a, j.time));
                    a = j.time;
                }
                here[q] = j.site;
                cursor[q] += 1;
            }
            pieces.push((q, grid.index(&here[q]).expect("checked"), here[q], a, t1));
        }
        let h = t1 - t0;
        grid.diffuse(cur, next, coef * h / dt);
        for &(_, cell, _, a, b) in &pieces {
            next[cell] += gamma * (b - a) * (cur[cell] + 1.0);
        }
        grid.fill_ghosts(next);
        for &(q, cell, site, a, b) in &pieces {
            let seg = WalkerSegment {
                walker: q,
                site,
                step_start: t0,
                step_end: t1,
                a,
                b,
                w_old: cur[cell],
                w_new: next[cell],
            };
            integral += (b - a) * seg.w_at(0.5 * (a + b));
            if opts.record_segments {
                segments.push(seg);
            }
        }
        std::mem::swap(cur, next);
        if snapshot_due(n + 1) {
            let field = grid.to_field(params.d, cfg.radius, cur);
            if field.min() < 0.0 {
                return Err(PamError::Numerical(format!("negative value at t={t1}; reduce dt")));
            }
            times.push(t1);
            fields.push(field);
        }
    }
    Ok(FieldTrace {
        times,
        fields,
        running_time_integral_at_walkers: integral,
        dt,
        steps,
        segments,
    })
}

/// `w̄(0, t)` on the step grid.
#[derive(Debug, Clone, Serialize)]
pub struct ScalarTrace {
    pub dt: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl ScalarTrace {
    pub fn last(&self) -> f64 {
        *self.values.last().expect("nonempty trace")
    }

    /// Trapezoidal `∫_0^T`.
    pub fn integral(&self) -> f64 {
        self.times
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
            .sum()
    }

    /// `(1/T) ∫_0^T`.
    pub fn time_average(&self) -> f64 {
        let horizon = *self.times.last().expect("nonempty trace");
        if horizon == 0.0 {
            0.0
        } else {
            self.integral() / horizon
        }
    }

    /// Linear interpolation at `t`.
    pub fn value_at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            return self.values[0];
        }
        if k == self.times.len() {
            return self.last();
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let th = (t - t0) / (t1 - t0);
        self.values[k - 1] + th * (self.values[k] - self.values[k - 1])
    }
}

/// `w̄(0, ·)` for all `p` walkers pinned at the origin, solved on the
/// reflection-symmetric octant of the box.
pub fn solve_w_bar(params: &ModelParams, horizon: f64, cfg: &BoxConfig) -> Result<ScalarTrace> {
    params.validate()?;
    cfg.validate(params)?;
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(PamError::domain("horizon must be finite and >= 0"));
    }
    if horizon == 0.0 {
        return Ok(ScalarTrace { dt: cfg.dt, times: vec![0.0], values: vec![0.0] });
    }
    let grid = Grid::octant(params.d, cfg.radius, cfg.boundary);
    let (steps, dt) = step_count(horizon, cfg.dt);
    let mut cur = vec![0.0; grid.len];
    let mut next = vec![0.0; grid.len];
    let origin = grid.index(&Site::ORIGIN).expect("origin in octant");
    let source = params.p as f64 * params.gamma * dt;
    let coef = params.rho * dt;
    let mut times = Vec::with_capacity(steps + 1);
    let mut values = Vec::with_capacity(steps + 1);
    times.push(0.0);
    values.push(0.0);
    for n in 0..steps {
        grid.diffuse(&cur, &mut next, coef);
        next[origin] += source * (cur[origin] + 1.0);
        grid.fill_ghosts(&mut next);
        std::mem::swap(&mut cur, &mut next);
        if cur[origin] < 0.0 {
            return Err(PamError::Numerical("negative value in pinned solve; reduce dt".into()));
        }
        times.push(if n + 1 == steps { horizon } else { (n + 1) as f64 * dt });
        values.push(cur[origin]);
    }
    Ok(ScalarTrace { dt, times, values })
}

/// `lim_{t→∞} w̄(0, t) = a/(r_d − a)` for `0 < a = pγ/ρ < r_d`, `+∞` otherwise
/// (and `0` when `γ = 0`).
pub fn w_bar_limit(params: &ModelParams, green: &LatticeGreen) -> Result<ExtReal> {
    params.validate()?;
    if params.d != green.dim() {
        return Err(PamError::domain("dimension mismatch"));
    }
    let a = params.ratio();
    if a == 0.0 {
        return Ok(ExtReal::Finite(0.0));
    }
    let r_d = green.r_d();
    if params.d.get() <= 2 || a >= r_d {
        return Ok(ExtReal::Infinite);
    }
    Ok(ExtReal::Finite(a / (r_d - a)))
}

/// Relative agreement demanded between the `dt` and `dt/2` Volterra runs.
pub const VOLTERRA_TOL: f64 = 1e-3;

/// Volterra solution with its self-check.
#[derive(Debug, Clone, Serialize)]
pub struct VolterraTrace {
    pub trace: ScalarTrace,
    /// Largest relative gap to the `dt/2` run on the common grid.
    pub halving_discrepancy: f64,
}

fn volterra_run(params: &ModelParams, horizon: f64, dt: f64) -> Result<ScalarTrace> {
    let (steps, h) = step_count(horizon, dt);
    let c = params.p as f64 * params.gamma;
    if c * h / 2.0 >= 1.0 {
        return Err(PamError::Numerical("Volterra step too coarse for the coupling".into()));
    }
    let kernel: Vec<f64> =
        (0..=steps).map(|j| return_probability(j as f64 * h, params.rho, params.d)).collect();
    let mut w = vec![0.0; steps + 1];
    for n in 1..=steps {
        let mut s = 0.5 * kernel[n] * (w[0] + 1.0);
        for j in 1..n {
            s += kernel[j] * (w[n - j] + 1.0);
        }
        let rhs = c * h * (0.5 * kernel[0] + s);
        w[n] = rhs / (1.0 - 0.5 * c * h * kernel[0]);
    }
    let times = (0..=steps).map(|j| if j == steps { horizon } else { j as f64 * h }).collect();
    Ok(ScalarTrace { dt: h, times, values: w })
}

/// Trapezoidal solution of `w̄(t) = pγ ∫_0^t p_ρ(0, s)(w̄(t − s) + 1) ds`,
/// checked against a run at half the step.
pub fn solve_w_bar_volterra(params: &ModelParams, horizon: f64, dt: f64) -> Result<VolterraTrace> {
    params.validate()?;
    if !(horizon >= 0.0) || !horizon.is_finite() || !(dt > 0.0) {
        return Err(PamError::domain("need horizon >= 0 and dt > 0"));
    }
    if horizon == 0.0 {
        let trace = ScalarTrace { dt, times: vec![0.0], values: vec![0.0] };
        return Ok(VolterraTrace { trace, halving_discrepancy: 0.0 });
    }
    let coarse = volterra_run(params, horizon, dt)?;
    let fine = volterra_run(params, horizon, coarse.dt / 2.0)?;
    let mut gap = 0.0f64;
    for (k, &v) in coarse.values.iter().enumerate() {
        let f = fine.values[2 * k];
        gap = gap.max((v - f).abs() / f.abs().max(1.0));
    }
    if gap > VOLTERRA_TOL {
        return Err(PamError::Numerical(format!(
            "Volterra dt too coarse: halving changes the trace by {gap:.3e}"
        )));
    }
    Ok(VolterraTrace { trace: coarse, halving_discrepancy: gap })
}

/// Largest `|lhs − rhs|` of the Duhamel representation
/// `w(x,t) = γ Σ_q ∫_0^t p_ρ(x − X_q(s), t − s)(w(X_q(s), s) + 1) ds`
/// over the stored snapshot times and a set of sample sites: the origin, the
/// walkers' final sites and their neighbours.
///
/// The right side uses the whole-lattice kernel and the recorded walker
/// segments, with `w` linear in time on each segment.
pub fn duhamel_residual(trace: &FieldTrace, traj: &TrajectorySet, params: &ModelParams) -> Result<f64> {
    if params.gamma == 0.0 && trace.fields.iter().all(|f| f.max() == 0.0) {
        return Ok(0.0);
    }
    if trace.segments.is_empty() {
        return Err(PamError::domain("trace was solved without recorded walker segments"));
    }
    let dim = params.d;
    let mut samples = vec![Site::ORIGIN];
    for path in traj.paths() {
        let end = path.end_site();
        samples.push(end);
        samples.extend(end.neighbors(dim));
    }
    samples.sort_by_key(|s| s.0);
    samples.dedup();
    let radius = trace.final_field().radius();
    samples.retain(|s| s.sup_norm() <= radius);
    let rule = GlRule::new(6);
    let mut worst = 0.0f64;
    for (ti, &t) in trace.times.iter().enumerate().skip(1) {
        let field = &trace.fields[ti];
        for x in &samples {
            let mut rhs = 0.0;
            for seg in trace.segments.iter().filter(|s| s.a < t) {
                let b = seg.b.min(t);
                let diff = x.offset(&seg.site.negated());
                for (s, w) in rule.mapped(seg.a, b) {
                    rhs += w * heat_kernel(&diff, t - s, params.rho, dim)? * (seg.w_at(s) + 1.0);
                }
            }
            worst = worst.max((field.get(x) - params.gamma * rhs).abs());
        }
    }
    Ok(worst)
}

/// Solver tolerance from a step-halving study: the largest change of `w` at
/// the Duhamel sample sites and final time when `dt` is halved.
pub fn dt_halving_tolerance(traj: &TrajectorySet, params: &ModelParams, cfg: &BoxConfig) -> Result<f64> {
    let opts = SolveOptions::minimal();
    let (_, dt) = step_count(traj.horizon(), cfg.dt);
    let a = solve_w(traj, params, cfg, &opts)?;
    let b = solve_w(traj, params, &cfg.with_dt(dt / 2.0), &opts)?;
    let (fa, fb) = (a.final_field(), b.final_field());
    Ok(fa.values().iter().zip(fb.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params3() -> ModelParams {
        ModelParams::new(3, 1, 1.0, 1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn trajectory_validation() {
        let d = Dimension::new(2).unwrap();
        let bad_time = Path { start: Site::ORIGIN, jumps: vec![Jump { time: 2.0, site: Site::from_coords(&[1, 0]) }] };
        assert!(TrajectorySet::new(d, 1.0, vec![bad_time]).is_err());
        let bad_step = Path { start: Site::ORIGIN, jumps: vec![Jump { time: 0.5, site: Site::from_coords(&[1, 1]) }] };
        assert!(TrajectorySet::new(d, 1.0, vec![bad_step]).is_err());
        let ok = Path { start: Site::ORIGIN, jumps: vec![Jump { time: 0.5, site: Site::from_coords(&[0, -1]) }] };
        let set = TrajectorySet::new(d, 1.0, vec![ok.clone()]).unwrap();
        assert_eq!(set.paths()[0].site_at(0.25), Site::ORIGIN);
        assert_eq!(set.paths()[0].site_at(0.5), Site::from_coords(&[0, -1]));
        assert_eq!(ok.pieces(1.0).len(), 2);
    }

    #[test]
    fn zero_coupling_gives_zero_trace() {
        let p = ModelParams { gamma: 0.0, ..params3() };
        let traj = TrajectorySet::pinned(p.d, 1, Site::ORIGIN, 1.0).unwrap();
        let cfg = BoxConfig::default_for(&p, 1.0);
        let tr = solve_w(&traj, &p, &cfg, &SolveOptions::full(4)).unwrap();
        assert!(tr.fields.iter().all(|f| f.max() == 0.0));
        assert_eq!(tr.running_time_integral_at_walkers, 0.0);
        assert_eq!(duhamel_residual(&tr, &traj, &p).unwrap(), 0.0);
    }

    #[test]
    fn box_exit_is_domain_error() {
        let p = params3();
        let far = Site::from_coords(&[9, 0, 0]);
        let traj = TrajectorySet::pinned(p.d, 1, far, 1.0).unwrap();
        let cfg = BoxConfig::default_for(&p, 1.0).with_radius(3);
        let err = solve_w(&traj, &p, &cfg, &SolveOptions::minimal()).unwrap_err();
        assert!(err.is_domain());
    }

    #[test]
    fn oversized_dt_rejected() {
        let p = params3();
        let cfg = BoxConfig::default_for(&p, 1.0).with_dt(0.5);
        assert!(solve_w_bar(&p, 1.0, &cfg).unwrap_err().is_domain());
    }

    #[test]
    fn pinned_walker_matches_octant_solver() {
        let p = params3();
        let horizon = 3.0;
        let cfg = BoxConfig::default_for(&p, horizon).with_radius(8);
        let traj = TrajectorySet::pinned(p.d, 1, Site::ORIGIN, horizon).unwrap();
        let tr = solve_w(&traj, &p, &cfg, &SolveOptions::full(1)).unwrap();
        let bar = solve_w_bar(&p, horizon, &cfg).unwrap();
        for (k, f) in tr.fields.iter().enumerate() {
            assert!((f.get(&Site::ORIGIN) - bar.values[k]).abs() < 1e-13);
        }
        assert!((tr.running_time_integral_at_walkers - bar.integral()).abs() < 1e-12);
    }

    #[test]
    fn periodic_octant_matches_full_box() {
        let p = ModelParams::new(2, 2, 0.0, 0.7, 1.3, 1.0).unwrap();
        let horizon = 4.0;
        let cfg = BoxConfig::default_for(&p, horizon).with_radius(3).with_boundary(Boundary::Periodic);
        let traj = TrajectorySet::pinned(p.d, 2, Site::ORIGIN, horizon).unwrap();
        let full = solve_w(&traj, &p, &cfg, &SolveOptions::minimal()).unwrap();
        let bar = solve_w_bar(&p, horizon, &cfg).unwrap();
        assert!((full.final_field().get(&Site::ORIGIN) - bar.last()).abs() < 1e-12);
        let absorbing = solve_w_bar(&p, horizon, &cfg.with_boundary(Boundary::Absorbing)).unwrap();
        assert!(bar.last() > absorbing.last());
    }

    #[test]
    fn volterra_small_time_linearization() {
        let p = params3();
        let t = 0.01;
        let v = solve_w_bar_volterra(&p, t, t / 50.0).unwrap();
        let rule = GlRule::new(20);
        let lin = rule.integrate(0.0, t, |s| return_probability(s, 1.0, p.d));
        assert!((v.trace.last() / lin - 1.0).abs() < 0.05);
    }

    #[test]
    fn limits() {
        let g = LatticeGreen::with_defaults(3).unwrap();
        let p = ModelParams::new(3, 1, 1.0, 1.0, 2.0, 1.0).unwrap();
        let v = w_bar_limit(&p, &g).unwrap().to_f64();
        assert!((v - 0.5 / (g.r_d() - 0.5)).abs() < 1e-15);
        assert!((v - 0.14465).abs() < 1e-5);
        let at = ModelParams { gamma: 2.0 * g.r_d(), ..p };
        assert!(w_bar_limit(&at, &g).unwrap().is_infinite());
        let g2 = LatticeGreen::with_defaults(2).unwrap();
        let p2 = ModelParams::new(2, 1, 1.0, 0.1, 1.0, 1.0).unwrap();
        assert!(w_bar_limit(&p2, &g2).unwrap().is_infinite());
    }

    #[test]
    fn zero_horizon_pinned() {
        let p = params3();
        let cfg = BoxConfig::default_for(&p, 1.0);
        assert_eq!(solve_w_bar(&p, 0.0, &cfg).unwrap().values, vec![0.0]);
        assert_eq!(solve_w_bar_volterra(&p, 0.0, 0.1).unwrap().trace.values, vec![0.0]);
    }
}
