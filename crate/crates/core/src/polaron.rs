//! Radial solver for the three-dimensional polaron (Choquard) problem
//!
//! ```text
//! 𝒫 = sup_{‖f‖₂ = 1} [ A(f) − B(f) ],
//! A(f) = ∫∫ f²(x) f²(y) / (4π|x − y|) dx dy,   B(f) = ‖∇f‖₂²,
//! ```
//!
//! its coupled form `sup [cA − B] = c²𝒫`, and the time-truncated kernel
//! `∫_{ερ}^{Kρ} p_G(x, t) dt` with the Gaussian kernel
//! `p_G(x, t) = (4πt)^{-3/2} e^{-|x|²/4t}`.
//!
//! Profiles live on a finite-volume radial grid: node `r_0 = 0`, cells
//! `[r_{i-½}, r_{i+½}]` with midpoint faces, a Dirichlet node at `r_max`.
//! For a coupling `c` the grid is laid out in units of `ℓ = 4π/c`, the length
//! scale of the maximizer, so one grid specification fits every coupling.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{PamError, Result};
use crate::spectral::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Spacing {
    Uniform,
    /// `r_i = r_max (e^{3i/n} − 1)/(e^3 − 1)`, denser near the origin.
    Graded,
}

/// Grid layout in units of `ℓ = 4π/c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub r_max: f64,
    pub n: usize,
    pub spacing: Spacing,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { r_max: 20.0, n: 2000, spacing: Spacing::Graded }
    }
}

impl GridSpec {
    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn with_r_max(mut self, r_max: f64) -> Self {
        self.r_max = r_max;
        self
    }

    pub fn with_spacing(mut self, spacing: Spacing) -> Self {
        self.spacing = spacing;
        self
    }
}

const GRADING: f64 = 3.0;

/// `ℓ = 4π/c`.
pub fn natural_length(coupling: f64) -> f64 {
    4.0 * PI / coupling
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialGrid {
    pub r_max: f64,
    pub spacing: Spacing,
    /// Unknown nodes `r_0 = 0 < r_1 < … < r_{n-1} < r_max`.
    nodes: Vec<f64>,
    /// Cell volumes `(4π/3)(r_{i+½}³ − r_{i−½}³)`.
    weights: Vec<f64>,
    /// Cell faces `r_{i+½}`, `i = 0..n`, the last one being `r_{n−½}`.
    faces: Vec<f64>,
}

impl RadialGrid {
    /// Grid of `n` unknowns on `[0, r_max)` in the units given.
    pub fn new(r_max: f64, n: usize, spacing: Spacing) -> Result<Self> {
        if !(r_max > 0.0) || !r_max.is_finite() || n < 8 {
            return Err(PamError::domain("radial grid needs r_max > 0 and n >= 8"));
        }
        let pos = |i: usize| match spacing {
            Spacing::Uniform => r_max * i as f64 / n as f64,
            Spacing::Graded => {
                r_max * ((GRADING * i as f64 / n as f64).exp() - 1.0) / (GRADING.exp() - 1.0)
            }
        };
        let all: Vec<f64> = (0..=n).map(pos).collect();
        let faces: Vec<f64> = all.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let mut weights = Vec::with_capacity(n);
        let mut inner = 0.0f64;
        for &outer in &faces {
            weights.push(4.0 * PI / 3.0 * (outer.powi(3) - inner.powi(3)));
            inner = outer;
        }
        Ok(RadialGrid { r_max, spacing, nodes: all[..n].to_vec(), weights, faces })
    }

    /// Grid for coupling `c`: `spec` scaled by `ℓ = 4π/c`.
    pub fn for_coupling(spec: &GridSpec, coupling: f64) -> Result<Self> {
        if !(coupling > 0.0) || !coupling.is_finite() {
            return Err(PamError::domain("coupling must be positive"));
        }
        Self::new(spec.r_max * natural_length(coupling), spec.n, spec.spacing)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Distance from node `i` to the next node (or the Dirichlet node).
    fn gap(&self, i: usize) -> f64 {
        let next = if i + 1 < self.len() { self.nodes[i + 1] } else { self.dirichlet_node() };
        next - self.nodes[i]
    }

    fn dirichlet_node(&self) -> f64 {
        2.0 * self.faces[self.len() - 1] - self.nodes[self.len() - 1]
    }

    /// Face conductances `4π r_{i+½}² / (r_{i+1} − r_i)`.
    fn conductances(&self) -> Vec<f64> {
        (0..self.len()).map(|i| 4.0 * PI * self.faces[i].powi(2) / self.gap(i)).collect()
    }

    /// Exact self-interaction `∫∫ 1/|x−y|` of a uniform unit mass on cell `i`.
    fn self_kernel(&self, i: usize) -> f64 {
        let a = if i == 0 { 0.0 } else { self.faces[i - 1] };
        let b = self.faces[i];
        let v = b.powi(3) - a.powi(3);
        6.0 * ((b.powi(5) - a.powi(5)) / 5.0 - a.powi(3) * (b * b - a * a) / 2.0) / (v * v)
    }
}

/// Sampled radial function.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialProfile {
    pub grid: RadialGrid,
    pub values: Vec<f64>,
}

impl RadialProfile {
    pub fn from_fn(grid: RadialGrid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes.iter().map(|&r| f(r)).collect();
        RadialProfile { grid, values }
    }

    /// `∫ 4πr² f² dr`.
    pub fn norm_sq(&self) -> f64 {
        self.values.iter().zip(&self.grid.weights).map(|(f, w)| w * f * f).sum()
    }

    pub fn normalize(&mut self) {
        let n = self.norm_sq().sqrt();
        if n > 0.0 {
            self.values.iter_mut().for_each(|v| *v /= n);
        }
    }

    pub fn normalized(mut self) -> Self {
        self.normalize();
        self
    }

    /// Linear interpolation; zero at and beyond the Dirichlet node.
    pub fn value_at(&self, r: f64) -> f64 {
        let nodes = &self.grid.nodes;
        let last = self.grid.dirichlet_node();
        if r >= last {
            return 0.0;
        }
        let k = nodes.partition_point(|&x| x <= r);
        let (r0, f0) = (nodes[k - 1], self.values[k - 1]);
        let (r1, f1) = if k < nodes.len() { (nodes[k], self.values[k]) } else { (last, 0.0) };
        f0 + (r - r0) / (r1 - r0) * (f1 - f0)
    }

    /// `f_λ(x) = λ^{3/2} f(λx)` resampled on the same grid.
    pub fn dilated(&self, lambda: f64) -> Self {
        let s = lambda.powf(1.5);
        let values = self.grid.nodes.iter().map(|&r| s * self.value_at(lambda * r)).collect();
        RadialProfile { grid: self.grid.clone(), values }
    }

    /// Nonincreasing in `r`, allowing one rising step of at most `tol`.
    pub fn is_nonincreasing(&self, tol: f64) -> bool {
        let rises = self.values.windows(2).filter(|w| w[1] > w[0] + tol).count();
        rises <= 1
    }
}

/// `B(f) = Σ 4π r_{i+½}² (f_{i+1} − f_i)² / (r_{i+1} − r_i)` with `f = 0` at
/// the Dirichlet node.
pub fn gradient_energy(f: &RadialProfile) -> f64 {
    let c = f.grid.conductances();
    let n = f.values.len();
    (0..n)
        .map(|i| {
            let next = if i + 1 < n { f.values[i + 1] } else { 0.0 };
            c[i] * (next - f.values[i]).powi(2)
        })
        .sum()
}

fn masses(f: &RadialProfile) -> Vec<f64> {
    f.values.iter().zip(&f.grid.weights).map(|(v, w)| w * v * v).collect()
}

/// Coulomb potential `Φ_i = (1/4π) Σ_j K_ij m_j` by Newton's shell theorem:
/// inner mass over `r_i` plus the outer shells' `m_j / r_j`.
fn coulomb_potential(grid: &RadialGrid, m: &[f64]) -> Vec<f64> {
    let n = m.len();
    let mut outer = vec![0.0; n + 1];
    for j in (0..n).rev() {
        outer[j] = outer[j + 1] + if j > 0 { m[j] / grid.nodes[j] } else { 0.0 };
    }
    let mut inner = 0.0;
    let mut phi = Vec::with_capacity(n);
    for i in 0..n {
        let below = if i > 0 { inner / grid.nodes[i] } else { 0.0 };
        phi.push((below + outer[i + 1] + grid.self_kernel(i) * m[i]) / (4.0 * PI));
        inner += m[i];
    }
    phi
}

/// `A(f) = ∫∫ f²(x) f²(y) / (4π|x − y|)`.
pub fn coulomb_energy(f: &RadialProfile) -> f64 {
    let m = masses(f);
    let phi = coulomb_potential(&f.grid, &m);
    m.iter().zip(&phi).map(|(a, b)| a * b).sum()
}

/// Dense matrix of the angular average of the truncated kernel
/// `k(u) = [erf(u/2√a) − erf(u/2√b)]/(4πu)`, `a = ερ`, `b = Kρ`.
#[derive(Debug, Clone)]
struct TruncatedKernel {
    n: usize,
    matrix: Vec<f64>,
}

impl TruncatedKernel {
    fn new(grid: &RadialGrid, a: f64, b: f64) -> Self {
        let ca = 2.0 * a.sqrt();
        let cb = 2.0 * b.sqrt();
        let sqrt_pi = PI.sqrt();
        // k(u) with its u → 0 limit
        let k = |u: f64| {
            if u < 1e-8 * ca {
                (1.0 / ca - 1.0 / cb) / (2.0 * PI * sqrt_pi)
            } else {
                (libm::erfc(u / cb) - libm::erfc(u / ca)) / (4.0 * PI * u)
            }
        };
        // H(u) = ∫ [erf(u/ca) − erf(u/cb)] du, with the linear parts cancelled
        let h = |u: f64| {
            u * (libm::erfc(u / cb) - libm::erfc(u / ca))
                + (ca * (-(u / ca).powi(2)).exp() - cb * (-(u / cb).powi(2)).exp()) / sqrt_pi
        };
        let r = grid.nodes();
        let n = r.len();
        let mut matrix = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let (lo, hi) = (r[j].min(r[i]), r[j].max(r[i]));
                let v = if lo < 1e-4 * hi || hi == 0.0 {
                    k(hi)
                } else {
                    (h(hi + lo) - h(hi - lo)) / (8.0 * PI * lo * hi)
                };
                matrix[i * n + j] = v;
                matrix[j * n + i] = v;
            }
        }
        TruncatedKernel { n, matrix }
    }

    fn potential(&self, m: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.matrix[i * self.n..(i + 1) * self.n].iter().zip(m).map(|(k, x)| k * x).sum())
            .collect()
    }
}

fn check_window(eps: f64, big_k: f64, rho: f64) -> Result<()> {
    if !(eps > 0.0) || !(big_k.is_finite()) || !(rho > 0.0) {
        return Err(PamError::domain("need eps > 0, finite K and rho > 0"));
    }
    if eps > big_k {
        return Err(PamError::domain(format!("eps={eps} exceeds K={big_k}")));
    }
    Ok(())
}

/// `∫∫ f²(x) f²(y) ∫_{ερ}^{Kρ} p_G(x − y, t) dt dx dy`; zero when `ε = K`.
pub fn truncated_kernel_energy(f: &RadialProfile, eps: f64, big_k: f64, rho: f64) -> Result<f64> {
    check_window(eps, big_k, rho)?;
    if eps == big_k {
        return Ok(0.0);
    }
    let kernel = TruncatedKernel::new(&f.grid, eps * rho, big_k * rho);
    let m = masses(f);
    Ok(m.iter().zip(kernel.potential(&m)).map(|(a, b)| a * b).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StartProfile {
    Gaussian,
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Relative first-order residual `‖Tg − ζg‖ / |ζ|` at which to stop.
    pub tol: f64,
    pub mixing: f64,
    pub start: StartProfile,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { max_iter: 5000, tol: 1e-9, mixing: 0.5, start: StartProfile::Gaussian }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PolaronResult {
    pub coupling: f64,
    /// `cA − B` at the returned profile.
    pub value: f64,
    pub coulomb_term: f64,
    pub gradient_term: f64,
    /// `|cA − 2B| / (cA)`.
    pub virial_residual: f64,
    pub grid: GridSpec,
    pub iterations: usize,
    pub residual: f64,
    pub eigenvalue: f64,
    #[serde(skip)]
    pub profile: RadialProfile,
}

impl PolaronResult {
    /// `4√π 𝒫`, meaningful for the unit-coupling problem.
    pub fn donsker_varadhan_constant(&self) -> f64 {
        4.0 * PI.sqrt() * self.value
    }
}

enum Kernel {
    Coulomb,
    Truncated(TruncatedKernel),
}

impl Kernel {
    fn potential(&self, grid: &RadialGrid, m: &[f64]) -> Vec<f64> {
        match self {
            Kernel::Coulomb => coulomb_potential(grid, m),
            Kernel::Truncated(k) => k.potential(m),
        }
    }
}

/// Number of eigenvalues below `x` of the symmetric tridiagonal matrix.
fn sturm_count(diag: &[f64], off: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = diag[0] - x;
    if q < 0.0 {
        count += 1;
    }
    for i in 1..diag.len() {
        let denom = if q == 0.0 { f64::EPSILON * (off[i - 1].abs() + 1e-300) } else { q };
        q = diag[i] - x - off[i - 1] * off[i - 1] / denom;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

fn lowest_eigenvalue(diag: &[f64], off: &[f64]) -> f64 {
    let n = diag.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { off[i - 1].abs() } else { 0.0 } + if i + 1 < n { off[i].abs() } else { 0.0 };
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 1e-15 * lo.abs().max(hi.abs()) {
            break;
        }
        if sturm_count(diag, off, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Solves `(T − σ) y = x` by the Thomas algorithm.
fn thomas(diag: &[f64], off: &[f64], sigma: f64, x: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut piv = diag[0] - sigma;
    c[0] = if n > 1 { off[0] / piv } else { 0.0 };
    d[0] = x[0] / piv;
    for i in 1..n {
        piv = diag[i] - sigma - off[i - 1] * c[i - 1];
        if piv == 0.0 {
            piv = 1e-300;
        }
        c[i] = if i + 1 < n { off[i] / piv } else { 0.0 };
        d[i] = (x[i] - off[i - 1] * d[i - 1]) / piv;
    }
    let mut y = vec![0.0; n];
    y[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        y[i] = d[i] - c[i] * y[i + 1];
    }
    y
}

fn unit(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let sign = if v.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    v.iter_mut().for_each(|x| *x *= sign / n);
}

fn start_profile(grid: RadialGrid, coupling: f64, start: StartProfile) -> RadialProfile {
    let ell = natural_length(coupling);
    match start {
        StartProfile::Gaussian => RadialProfile::from_fn(grid, |r| (-(r / ell).powi(2) / 8.0).exp()),
        StartProfile::Exponential => RadialProfile::from_fn(grid, |r| (-(r / ell) / 2.0).exp()),
    }
    .normalized()
}

/// Self-consistent ascent for `sup [c A_k(f) − B(f)]` with kernel `k`:
/// potential, ground state of `W^{-½} L W^{-½} − 2cΦ` (bisection plus inverse
/// iteration), renormalization and damping.
fn maximize(coupling: f64, kernel: &Kernel, grid: RadialGrid, spec: GridSpec, opts: &SolverOptions) -> Result<PolaronResult> {
    if !(opts.mixing > 0.0 && opts.mixing <= 1.0) || opts.max_iter == 0 || !(opts.tol > 0.0) {
        return Err(PamError::domain("solver needs 0 < mixing <= 1, max_iter >= 1, tol > 0"));
    }
    let n = grid.len();
    let cond = grid.conductances();
    let sw: Vec<f64> = grid.weights.iter().map(|w| w.sqrt()).collect();
    let lap_diag: Vec<f64> =
        (0..n).map(|i| (cond[i] + if i > 0 { cond[i - 1] } else { 0.0 }) / grid.weights[i]).collect();
    let off: Vec<f64> = (0..n - 1).map(|i| -cond[i] / (sw[i] * sw[i + 1])).collect();
    let mut f = start_profile(grid, coupling, opts.start);
    let mut g: Vec<f64> = f.values.iter().zip(&sw).map(|(v, s)| v * s).collect();
    let mut residual = f64::INFINITY;
    let mut eigenvalue = 0.0;
    let mut iterations = 0;
    for it in 1..=opts.max_iter {
        iterations = it;
        let m = masses(&f);
        let phi = kernel.potential(&f.grid, &m);
        let diag: Vec<f64> = (0..n).map(|i| lap_diag[i] - 2.0 * coupling * phi[i]).collect();
        // first-order residual of the current iterate
        let tg: Vec<f64> = (0..n)
            .map(|i| {
                let mut s = diag[i] * g[i];
                if i > 0 {
                    s += off[i - 1] * g[i - 1];
                }
                if i + 1 < n {
                    s += off[i] * g[i + 1];
                }
                s
            })
            .collect();
        let rq: f64 = tg.iter().zip(&g).map(|(a, b)| a * b).sum();
        residual = tg.iter().zip(&g).map(|(a, b)| (a - rq * b).powi(2)).sum::<f64>().sqrt() / rq.abs();
        eigenvalue = rq;
        if residual < opts.tol {
            break;
        }
        let zeta = lowest_eigenvalue(&diag, &off);
        let shift = zeta - 1e-12 * zeta.abs().max(1e-300);
        let mut y = g.clone();
        for _ in 0..3 {
            y = thomas(&diag, &off, shift, &y);
            unit(&mut y);
        }
        for (gi, yi) in g.iter_mut().zip(&y) {
            *gi = (1.0 - opts.mixing) * *gi + opts.mixing * yi;
        }
        unit(&mut g);
        for i in 0..n {
            f.values[i] = g[i] / sw[i];
        }
    }
    if !(residual < opts.tol) {
        return Err(PamError::NoConvergence { iterations, residual });
    }
    let m = masses(&f);
    let phi = kernel.potential(&f.grid, &m);
    let a: f64 = m.iter().zip(&phi).map(|(x, y)| x * y).sum();
    let b = gradient_energy(&f);
    let virial = if a > 0.0 { (coupling * a - 2.0 * b).abs() / (coupling * a) } else { f64::INFINITY };
    Ok(PolaronResult {
        coupling,
        value: coupling * a - b,
        coulomb_term: a,
        gradient_term: b,
        virial_residual: virial,
        grid: spec,
        iterations,
        residual,
        eigenvalue,
        profile: f,
    })
}

/// `𝒫 = sup [A − B]`.
pub fn maximize_p(spec: &GridSpec, opts: &SolverOptions) -> Result<PolaronResult> {
    maximize_coupled(1.0, spec, opts)
}

/// `sup [cA − B]`, maximized directly on the grid for coupling `c`.
pub fn maximize_coupled(coupling: f64, spec: &GridSpec, opts: &SolverOptions) -> Result<PolaronResult> {
    let grid = RadialGrid::for_coupling(spec, coupling)?;
    maximize(coupling, &Kernel::Coulomb, grid, *spec, opts)
}

/// `sup [c A_{ε,K}(f) − B(f)]` with `c = νγ²p/ρ` and the truncated kernel.
/// Returns `None` for `ε = K`, where the supremum `0` is not attained.
pub fn maximize_truncated(
    eps: f64,
    big_k: f64,
    params: &ModelParams,
    spec: &GridSpec,
    opts: &SolverOptions,
) -> Result<Option<PolaronResult>> {
    check_window(eps, big_k, params.rho)?;
    if eps == big_k {
        return Ok(None);
    }
    let c = params.polaron_coupling();
    let grid = RadialGrid::for_coupling(spec, c)?;
    let kernel = TruncatedKernel::new(&grid, eps * params.rho, big_k * params.rho);
    maximize(c, &Kernel::Truncated(kernel), grid, *spec, opts).map(Some)
}

/// `𝒫_p(ε, K; γ, ρ, ν)`. The supremum is at least `0` (spread-out profiles
/// approach it), so a negative grid maximum is reported as `0`.
pub fn polaron_p_truncated(
    eps: f64,
    big_k: f64,
    params: &ModelParams,
    spec: &GridSpec,
    opts: &SolverOptions,
) -> Result<f64> {
    Ok(maximize_truncated(eps, big_k, params, spec, opts)?.map_or(0.0, |r| r.value.max(0.0)))
}

#[derive(Debug, Clone, Serialize)]
pub struct PolaronPFull {
    pub coupling: f64,
    /// Returned value: `c² 𝒫`.
    pub value: f64,
    /// Direct maximization of `cA − B`.
    pub route_direct: f64,
    /// `c² 𝒫` from [`maximize_p`].
    pub route_scaling: f64,
    pub base_p: f64,
    pub relative_gap: f64,
}

/// `𝒫_p(γ, ρ, ν) = (νγ²p/ρ)² 𝒫`, with the direct maximization as a check.
/// The direct route runs on a grid 1.5 times wider with the same node count,
/// so the two routes never share a discretization.
pub fn polaron_p_full(params: &ModelParams, spec: &GridSpec, opts: &SolverOptions) -> Result<PolaronPFull> {
    params.validate()?;
    let c = params.polaron_coupling();
    let base = maximize_p(spec, opts)?;
    let wide = spec.with_r_max(1.5 * spec.r_max);
    let direct = maximize(c, &Kernel::Coulomb, RadialGrid::for_coupling(&wide, c)?, wide, opts)?;
    let scaled = c * c * base.value;
    Ok(PolaronPFull {
        coupling: c,
        value: scaled,
        route_direct: direct.value,
        route_scaling: scaled,
        base_p: base.value,
        relative_gap: (direct.value - scaled).abs() / scaled.abs(),
    })
}
