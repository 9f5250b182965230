//! Spectrum of `ℋ = Δ + rδ_0` and the closed-form exponent layer built on it:
//! `μ(r)`, the eigenfunction, `λ̂_p`, `λ_p(0)`, the large-`κ` asymptote, the
//! `κ`-bounds and regime classification.

use serde::Serialize;

use crate::error::{PamError, Result};
use crate::lattice::{Dimension, ExtReal, LatticeField, Site};
use crate::lattice_green::LatticeGreen;
use crate::special::in_scaled_sequence;

/// `(d, p, κ, γ, ρ, ν)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams {
    pub d: Dimension,
    pub p: u32,
    pub kappa: f64,
    pub gamma: f64,
    pub rho: f64,
    pub nu: f64,
}

impl ModelParams {
    /// Validated constructor. `γ = 0` is admitted as the catalyst-free limit.
    pub fn new(d: usize, p: u32, kappa: f64, gamma: f64, rho: f64, nu: f64) -> Result<Self> {
        let params = ModelParams { d: Dimension::new(d)?, p, kappa, gamma, rho, nu };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(PamError::domain("moment order p must be at least 1"));
        }
        let finite = [self.kappa, self.gamma, self.rho, self.nu].iter().all(|v| v.is_finite());
        if !finite || self.kappa < 0.0 || self.gamma < 0.0 || self.rho <= 0.0 || self.nu <= 0.0 {
            return Err(PamError::domain(
                "need kappa >= 0, gamma >= 0, rho > 0, nu > 0 (all finite)",
            ));
        }
        Ok(())
    }

    /// `pγ/ρ`.
    pub fn ratio(&self) -> f64 {
        self.p as f64 * self.gamma / self.rho
    }

    /// `νγ²p/ρ`, the coupling in front of the polaron functional.
    pub fn polaron_coupling(&self) -> f64 {
        self.nu * self.gamma * self.gamma * self.p as f64 / self.rho
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }

    pub fn with_p(mut self, p: u32) -> Self {
        self.p = p;
        self
    }
}

fn check_dim(params: &ModelParams, green: &LatticeGreen) -> Result<()> {
    if params.d != green.dim() {
        return Err(PamError::domain(format!(
            "parameter dimension {} does not match Green toolkit dimension {}",
            params.d,
            green.dim()
        )));
    }
    Ok(())
}

/// Closed interval with possibly infinite endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lo: ExtReal,
    pub hi: ExtReal,
}

/// Below this the bisection stops; `μ(r)` for small `r` in `d = 2` is
/// `~e^{-4π/r}` and underflows.
const MU_FLOOR: f64 = 1e-250;

/// Top of the spectrum of `Δ + rδ_0`.
///
/// Zero for `r ≤ r_d`; otherwise the root of `R(μ) = 1/r`, found by bisection
/// on `(0, r]` to relative width `1e-12`.
pub fn mu_of_r(r: f64, green: &LatticeGreen) -> Result<f64> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(PamError::domain(format!("mu_of_r needs finite r > 0, got {r}")));
    }
    if r <= green.r_d() {
        return Ok(0.0);
    }
    let target = 1.0 / r;
    let mut lo = 0.0;
    let mut hi = r;
    let mut expansions = 0;
    while green.resolvent_time(hi) > target {
        hi *= 2.0;
        expansions += 1;
        if expansions > 60 {
            return Err(PamError::Numerical(format!("mu_of_r: root not bracketed for r={r}")));
        }
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= 1e-12 * hi || mid == lo || mid == hi || hi < MU_FLOOR {
            break;
        }
        if green.resolvent_time(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Normalized eigenfunction `e = r(μ − Δ)^{-1}δ_0`, `e(0) = 1`, on a box,
/// with its residual diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct Eigenfunction {
    pub r: f64,
    pub mu: f64,
    pub field: LatticeField,
    /// `max |(Δ + rδ_0)e − μe|` over the inner half of the box.
    pub inner_residual: f64,
    /// Same maximum over the whole box with `e` extended by zero.
    pub truncation_residual: f64,
    /// Bound the inner residual is guaranteed to respect.
    pub residual_bound: f64,
}

/// Bound reported for the inner-half eigen-residual.
pub const EIGEN_RESIDUAL_BOUND: f64 = 1e-8;

/// Eigenfunction of `Δ + rδ_0` for `r > r_d`, evaluated through
/// `e(x) = r ∫_0^∞ e^{-μt} p(x, t) dt`, the time form of the resolvent kernel.
pub fn eigenfunction_e(r: f64, green: &LatticeGreen, box_radius: i32) -> Result<Eigenfunction> {
    if box_radius < 1 {
        return Err(PamError::domain("box_radius must be at least 1"));
    }
    if !(r > green.r_d()) || !r.is_finite() {
        return Err(PamError::domain(format!(
            "no normalizable eigenfunction for r={r} <= r_d={}",
            green.r_d()
        )));
    }
    let mu = mu_of_r(r, green)?;
    let dim = green.dim();
    let d = dim.get();
    let n_axis = box_radius as usize;
    // accumulate per-site sums over time nodes of Π_i e^{-2t} I_{|x_i|}(2t)
    let nodes = green.laplace_nodes(mu);
    let mut field = LatticeField::zeros(dim, box_radius);
    let sites: Vec<Vec<usize>> = (0..field.len())
        .map(|i| field.site_of(i).coords(dim).iter().map(|c| c.unsigned_abs() as usize).collect())
        .collect();
    let mut acc = vec![0.0; field.len()];
    for &(t, w) in &nodes {
        let seq = in_scaled_sequence(2.0 * t, n_axis);
        for (a, s) in acc.iter_mut().zip(&sites) {
            let mut prod = w;
            for &k in s.iter().take(d) {
                prod *= seq[k];
            }
            *a += prod;
        }
    }
    let at_origin = acc[field.index_of(&Site::ORIGIN).expect("origin in box")];
    for (v, a) in field.values_mut().iter_mut().zip(&acc) {
        *v = a / at_origin;
    }
    let mut inner = 0.0f64;
    let mut whole = 0.0f64;
    for (site, e) in field.iter() {
        let delta = if site == Site::ORIGIN { r * e } else { 0.0 };
        let res = (field.laplacian_at(&site) + delta - mu * e).abs();
        whole = whole.max(res);
        if field.is_inner_half(&site) {
            inner = inner.max(res);
        }
    }
    Ok(Eigenfunction {
        r,
        mu,
        field,
        inner_residual: inner,
        truncation_residual: whole,
        residual_bound: EIGEN_RESIDUAL_BOUND,
    })
}

/// `r f(0)² − ½ Σ_{‖x−y‖=1} [f(x) − f(y)]²` for `f` extended by zero outside
/// its box. Requires `‖f‖₂ = 1` to within `1e-8`.
pub fn rayleigh_ritz_value(r: f64, f: &LatticeField) -> Result<f64> {
    let norm = f.l2_norm();
    if !((norm - 1.0).abs() <= 1e-8) {
        return Err(PamError::domain(format!("trial field must have unit l2 norm, got {norm}")));
    }
    let dim = f.dim();
    let mut edges = 0.0;
    for (x, fx) in f.iter() {
        for k in 0..dim.coordination() {
            let y = x.neighbor(k);
            if f.contains(&y) {
                // each interior edge is seen from both ends
                edges += 0.5 * (fx - f.get(&y)).powi(2);
            } else {
                edges += fx * fx;
            }
        }
    }
    Ok(r * f.get(&Site::ORIGIN).powi(2) - edges)
}

/// `λ̂_p = ρ μ(pγ/ρ)`.
pub fn hat_lambda_p(params: &ModelParams, green: &LatticeGreen) -> Result<f64> {
    params.validate()?;
    check_dim(params, green)?;
    if params.gamma == 0.0 {
        return Ok(0.0);
    }
    Ok(params.rho * mu_of_r(params.ratio(), green)?)
}

/// `λ_p(0) = νγ a/(r_d − a)` with `a = pγ/ρ`; `+∞` when `d ≤ 2` or `a ≥ r_d`.
pub fn lambda_p_zero(params: &ModelParams, green: &LatticeGreen) -> Result<ExtReal> {
    params.validate()?;
    check_dim(params, green)?;
    let a = params.ratio();
    let r_d = green.r_d();
    if params.d.get() <= 2 || a >= r_d {
        return Ok(ExtReal::Infinite);
    }
    Ok(ExtReal::Finite(params.nu * params.gamma * a / (r_d - a)))
}

/// `lim_{κ→∞} κλ_p(κ) = νγ²/r_d + 1_{d=3} (νγ²p/ρ)² 𝒫`.
pub fn kappa_infinity_asymptote(
    params: &ModelParams,
    green: &LatticeGreen,
    polaron_p: f64,
) -> Result<f64> {
    params.validate()?;
    check_dim(params, green)?;
    params.d.require_transient("kappa_infinity_asymptote")?;
    if params.ratio() >= green.r_d() {
        return Err(PamError::domain("large-kappa asymptote needs p*gamma/rho < r_d"));
    }
    let base = params.nu * params.gamma * params.gamma / green.r_d();
    if params.d.get() == 3 {
        Ok(base + params.polaron_coupling().powi(2) * polaron_p)
    } else {
        Ok(base)
    }
}

/// `[max(0, λ_p(0) − 2dκ), λ_p(0)]`.
pub fn lambda_p_bounds(params: &ModelParams, green: &LatticeGreen) -> Result<Interval> {
    match lambda_p_zero(params, green)? {
        ExtReal::Infinite => Ok(Interval { lo: ExtReal::Infinite, hi: ExtReal::Infinite }),
        ExtReal::Finite(v) => {
            let shift = params.d.coordination() as f64 * params.kappa;
            Ok(Interval { lo: ExtReal::Finite((v - shift).max(0.0)), hi: ExtReal::Finite(v) })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum IntermittencyVerdict {
    StrongAllKappa,
    StrongForSmallKappa,
    StrongForSmallAndLargeKappa,
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Inequality {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeReport {
    pub ratio: f64,
    pub r_d_value: f64,
    pub strongly_catalytic: bool,
    pub lambda_p_finite: bool,
    pub intermittency_verdict: IntermittencyVerdict,
    pub certifying_inequalities: Vec<Inequality>,
    pub annotations: Vec<String>,
}

/// Catalytic and intermittency regime of `params`.
pub fn classify_regimes(params: &ModelParams, green: &LatticeGreen) -> Result<RegimeReport> {
    params.validate()?;
    check_dim(params, green)?;
    if params.gamma == 0.0 {
        return Err(PamError::domain("regime classification needs gamma > 0"));
    }
    let d = params.d.get();
    let a = params.ratio();
    let r_d = green.r_d();
    let strongly = d <= 2 || a > r_d;
    let finite = d >= 3 && a < r_d;
    let mut ineq = vec![Inequality {
        name: "p*gamma/rho > r_d".into(),
        lhs: a,
        rhs: r_d,
        holds: a > r_d,
    }];
    ineq.push(Inequality { name: "p*gamma/rho < r_d".into(), lhs: a, rhs: r_d, holds: a < r_d });
    let mut annotations = Vec::new();
    let verdict = if d <= 2 {
        annotations.push("recurrent lattice: r_d = 0, every ratio is strongly catalytic".into());
        IntermittencyVerdict::StrongAllKappa
    } else if a >= r_d {
        IntermittencyVerdict::StrongAllKappa
    } else if d == 3 {
        annotations.push(
            "small- and large-kappa thresholds are qualitative; no formula is computed".into(),
        );
        IntermittencyVerdict::StrongForSmallAndLargeKappa
    } else {
        annotations.push(
            "conjecture (unproven): intermittency ceases for large kappa when d >= 4".into(),
        );
        IntermittencyVerdict::StrongForSmallKappa
    };
    if d == 3 && a < r_d {
        annotations.push(
            "conjecture (unproven): intermittency persists for all kappa when d = 3".into(),
        );
    }
    Ok(RegimeReport {
        ratio: a,
        r_d_value: r_d,
        strongly_catalytic: strongly,
        lambda_p_finite: finite,
        intermittency_verdict: verdict,
        certifying_inequalities: ineq,
        annotations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn green(d: usize) -> LatticeGreen {
        LatticeGreen::with_defaults(d).unwrap()
    }

    #[test]
    fn mu_one_dimensional_closed_form() {
        let g = green(1);
        for &r in &[0.5f64, 1.0, 3.0, 10.0, 100.0] {
            let exact = (r * r + 4.0).sqrt() - 2.0;
            assert!((mu_of_r(r, &g).unwrap() - exact).abs() < 1e-10 * exact.max(1.0), "r={r}");
        }
    }

    #[test]
    fn mu_vanishes_below_r_d() {
        let g = green(3);
        assert_eq!(mu_of_r(0.9 * g.r_d(), &g).unwrap(), 0.0);
        assert_eq!(mu_of_r(g.r_d(), &g).unwrap(), 0.0);
        assert!(mu_of_r(1.001 * g.r_d(), &g).unwrap() > 0.0);
        let ratio = mu_of_r(1e4, &g).unwrap() / 1e4;
        assert!(ratio > 0.99 && ratio < 1.0);
        assert!(mu_of_r(-1.0, &g).is_err());
    }

    #[test]
    fn delta_trial_gives_r_minus_2d() {
        let d1 = Dimension::new(1).unwrap();
        let f = LatticeField::from_fn(d1, 3, |s| if s == Site::ORIGIN { 1.0 } else { 0.0 });
        assert!((rayleigh_ritz_value(3.0, &f).unwrap() - 1.0).abs() < 1e-15);
        let d3 = Dimension::new(3).unwrap();
        let f = LatticeField::from_fn(d3, 0, |_| 1.0);
        assert!((rayleigh_ritz_value(7.0, &f).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_site_trial_by_hand() {
        // f(0) = f(1) = 1/√2: edges (-1,0), (1,2) carry 1/2 each, edge (0,1) carries 0
        let d1 = Dimension::new(1).unwrap();
        let s = 0.5f64.sqrt();
        let f = LatticeField::from_fn(d1, 2, |x| if x.0[0] == 0 || x.0[0] == 1 { s } else { 0.0 });
        let v = rayleigh_ritz_value(3.0, &f).unwrap();
        assert!((v - 0.5).abs() < 1e-14, "{v}");
        assert!(v <= mu_of_r(3.0, &green(1)).unwrap());
    }

    #[test]
    fn unnormalized_trial_rejected() {
        let d1 = Dimension::new(1).unwrap();
        let f = LatticeField::from_fn(d1, 2, |_| 1.0);
        assert!(rayleigh_ritz_value(3.0, &f).unwrap_err().is_domain());
    }

    #[test]
    fn eigenfunction_one_dimensional_kernel() {
        let g = green(1);
        let e = eigenfunction_e(3.0, &g, 12).unwrap();
        let mu = e.mu;
        let q = (mu + 2.0 - (mu * (mu + 4.0)).sqrt()) / 2.0;
        assert_eq!(e.field.get(&Site::ORIGIN), 1.0);
        for x in 1..=6 {
            let want = q.powi(x);
            let got = e.field.get(&Site::from_coords(&[x]));
            assert!((got - want).abs() < 1e-10, "x={x}: {got} vs {want}");
            assert_eq!(got, e.field.get(&Site::from_coords(&[-x])));
        }
        assert!(e.inner_residual < e.residual_bound);
    }

    #[test]
    fn eigenfunction_rejects_weak_coupling() {
        let g = green(3);
        assert!(eigenfunction_e(0.5 * g.r_d(), &g, 4).unwrap_err().is_domain());
    }

    #[test]
    fn lambda_zero_examples() {
        let g = green(3);
        let p = ModelParams::new(3, 1, 0.0, 1.0, 1.0, 1.0).unwrap();
        let v = lambda_p_zero(&p, &g).unwrap().to_f64();
        assert!((v - 1.0 / (g.r_d() - 1.0)).abs() < 1e-14);
        assert!((v - 0.3382).abs() < 1e-4);
        let at = ModelParams { gamma: g.r_d(), ..p };
        assert!(lambda_p_zero(&at, &g).unwrap().is_infinite());
        let g2 = green(2);
        let p2 = ModelParams::new(2, 1, 0.0, 0.01, 5.0, 1.0).unwrap();
        assert!(lambda_p_zero(&p2, &g2).unwrap().is_infinite());
    }

    #[test]
    fn bounds_examples() {
        let g = green(3);
        let p = ModelParams::new(3, 1, 0.0, 1.0, 1.0, 1.0).unwrap();
        let b = lambda_p_bounds(&p, &g).unwrap();
        assert_eq!(b.lo, b.hi);
        let b = lambda_p_bounds(&p.with_kappa(10.0), &g).unwrap();
        assert_eq!(b.lo, ExtReal::Finite(0.0));
        let strong = ModelParams { gamma: 10.0, ..p };
        let b = lambda_p_bounds(&strong, &g).unwrap();
        assert!(b.lo.is_infinite() && b.hi.is_infinite());
    }

    #[test]
    fn asymptote_examples() {
        let g4 = green(4);
        let p4 = ModelParams::new(4, 1, 1.0, 1.0, 1.0, 2.0).unwrap();
        let v = kappa_infinity_asymptote(&p4, &g4, 0.5).unwrap();
        assert!((v - 2.0 / g4.r_d()).abs() < 1e-15);
        let g3 = green(3);
        let p3 = ModelParams::new(3, 1, 1.0, 1.0, 1.0, 1.0).unwrap();
        let pp = 0.01;
        let one = kappa_infinity_asymptote(&p3, &g3, pp).unwrap();
        assert!((one - (1.0 / g3.r_d() + pp)).abs() < 1e-15);
        let two = kappa_infinity_asymptote(&p3.with_p(2), &g3, pp).unwrap();
        assert!(((two - 1.0 / g3.r_d()) / (one - 1.0 / g3.r_d()) - 4.0).abs() < 1e-12);
        let strong = ModelParams { gamma: 5.0, ..p3 };
        assert!(kappa_infinity_asymptote(&strong, &g3, pp).unwrap_err().is_domain());
    }

    #[test]
    fn hat_lambda_examples() {
        let g1 = green(1);
        let p = ModelParams::new(1, 2, 1.0, 1.5, 1.0, 1.0).unwrap();
        assert!((hat_lambda_p(&p, &g1).unwrap() - (13f64.sqrt() - 2.0)).abs() < 1e-10);
        let g3 = green(3);
        let weak = ModelParams::new(3, 1, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(hat_lambda_p(&weak, &g3).unwrap(), 0.0);
    }

    #[test]
    fn classify_examples() {
        let g2 = green(2);
        let rep = classify_regimes(&ModelParams::new(2, 1, 1.0, 0.1, 10.0, 1.0).unwrap(), &g2).unwrap();
        assert!(rep.strongly_catalytic && !rep.lambda_p_finite);
        assert_eq!(rep.intermittency_verdict, IntermittencyVerdict::StrongAllKappa);
        let g3 = green(3);
        let rep = classify_regimes(&ModelParams::new(3, 1, 1.0, 0.5, 1.0, 1.0).unwrap(), &g3).unwrap();
        assert!(!rep.strongly_catalytic && rep.lambda_p_finite);
        assert_eq!(rep.intermittency_verdict, IntermittencyVerdict::StrongForSmallAndLargeKappa);
        let g5 = green(5);
        let rep = classify_regimes(&ModelParams::new(5, 1, 1.0, 10.0, 1.0, 1.0).unwrap(), &g5).unwrap();
        assert!(rep.strongly_catalytic);
        let rep = classify_regimes(&ModelParams::new(5, 1, 1.0, 1.0, 1.0, 1.0).unwrap(), &g5).unwrap();
        assert_eq!(rep.intermittency_verdict, IntermittencyVerdict::StrongForSmallKappa);
    }
}
