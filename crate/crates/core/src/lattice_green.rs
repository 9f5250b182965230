//! Lattice Fourier analysis of the generator `Δ`: the symbol `φ̂`, the heat
//! kernel, the resolvent `R(μ)` at the origin, and the Green constants `r_d`
//! and `G_a(0)`.
//!
//! `R(μ)` is evaluated by two independent routes that are compared on every
//! call:
//!
//! * **Fourier**: the `k_1` integral of `1/(μ + φ̂(k))` is done in closed form,
//!   `∫_0^π dk/(A + 2 − 2 cos k) = π/√(A(A+4))`, and the remaining `d − 1` axes
//!   use Gauss–Legendre on dyadically graded panels towards `k = 0`, summed
//!   over sorted node tuples with multinomial weights (the integrand is
//!   symmetric under axis permutations).
//! * **Time**: `∫_0^∞ e^{-μt} (e^{-2t} I_0(2t))^d dt` on panels that double in
//!   length, closed off by the large-`t` asymptotic series of the Bessel
//!   factor when `μ = 0`.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{PamError, Result};
use crate::lattice::{Dimension, ExtReal, Site};
use crate::quadrature::GlRule;
use crate::special::{i0_scaled, in_scaled_sequence};

/// Nodes per panel for the time-domain route.
const TIME_RULE_ORDER: usize = 20;
/// `e^{-60}` is below double-precision relevance for every integrand here.
const EXP_CUTOFF: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureConfig {
    /// Gauss–Legendre order on each graded panel of the Fourier route.
    pub nodes_per_axis: usize,
    /// Time after which the `μ = 0` time integral switches to its asymptotic tail.
    pub time_domain_cutoff: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            nodes_per_axis: 12,
            time_domain_cutoff: 65536.0,
            abs_tol: 1e-9,
            rel_tol: 1e-8,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nodes_per_axis < 8 {
            return Err(PamError::domain("nodes_per_axis must be at least 8"));
        }
        if !(self.time_domain_cutoff > 0.0 && self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(PamError::domain("quadrature cutoff and tolerances must be positive"));
        }
        Ok(())
    }

    fn agree(&self, a: f64, b: f64) -> bool {
        (a - b).abs() <= self.abs_tol.max(self.rel_tol * a.abs().max(b.abs()))
    }
}

/// `φ̂(k) = Σ_{‖x‖=1} [1 − cos(k·x)] = 2 Σ_i (1 − cos k_i)`.
pub fn phi_hat(k: &[f64]) -> Result<f64> {
    if let Some(bad) = k.iter().find(|c| !(c.abs() <= PI)) {
        return Err(PamError::domain(format!("wave-vector coordinate {bad} outside [-π, π]")));
    }
    Ok(k.iter().map(|&c| 2.0 * (1.0 - c.cos())).sum())
}

/// Transition probability `p_c(x, t)` of the walk generated by `cΔ`
/// (total jump rate `2dc`): `Π_i e^{-2ct} I_{|x_i|}(2ct)`.
pub fn heat_kernel(x: &Site, t: f64, c: f64, dim: Dimension) -> Result<f64> {
    if !(t >= 0.0) || !(c > 0.0) {
        return Err(PamError::domain("heat kernel needs t >= 0 and c > 0"));
    }
    let coords = x.coords(dim);
    let n_max = coords.iter().map(|v| v.unsigned_abs() as usize).max().unwrap_or(0);
    let seq = in_scaled_sequence(2.0 * c * t, n_max);
    Ok(coords.iter().map(|v| seq[v.unsigned_abs() as usize]).product())
}

/// `p_c(0, t) = (e^{-2ct} I_0(2ct))^d`.
#[inline]
pub fn return_probability(t: f64, c: f64, dim: Dimension) -> f64 {
    i0_scaled(2.0 * c * t).powi(dim.get() as i32)
}

/// Both evaluations of `R(μ)`; `fourier` is absent where that route diverges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResolventRoutes {
    pub mu: f64,
    pub fourier: ExtReal,
    pub time: ExtReal,
}

/// Green-function toolkit for one lattice dimension. Construction computes
/// and caches `r_d`.
#[derive(Debug, Clone)]
pub struct LatticeGreen {
    dim: Dimension,
    cfg: QuadratureConfig,
    r_d: f64,
    time_rule: GlRule,
    fourier_rule: GlRule,
}

impl LatticeGreen {
    pub fn new(dim: Dimension, cfg: QuadratureConfig) -> Result<Self> {
        cfg.validate()?;
        let mut g = LatticeGreen {
            dim,
            cfg,
            r_d: 0.0,
            time_rule: GlRule::new(TIME_RULE_ORDER),
            fourier_rule: GlRule::new(cfg.nodes_per_axis),
        };
        if dim.get() >= 3 {
            let r0 = g.resolvent(0.0)?;
            g.r_d = 1.0 / r0.to_f64();
        }
        Ok(g)
    }

    pub fn with_defaults(d: usize) -> Result<Self> {
        Self::new(Dimension::new(d)?, QuadratureConfig::default())
    }

    pub fn dim(&self) -> Dimension {
        self.dim
    }

    pub fn config(&self) -> &QuadratureConfig {
        &self.cfg
    }

    /// `r_d = 1/R(0)`: zero for `d ≤ 2`, positive for `d ≥ 3`.
    pub fn r_d(&self) -> f64 {
        self.r_d
    }

    /// `R(μ) = (2π)^{-d} ∫ dk / (μ + φ̂(k))`, cross-checked between routes.
    ///
    /// Returns the time route at `μ = 0` and the Fourier route for `μ > 0`.
    pub fn resolvent(&self, mu: f64) -> Result<ExtReal> {
        let routes = self.resolvent_routes(mu)?;
        match (routes.fourier, routes.time) {
            (ExtReal::Infinite, ExtReal::Infinite) => Ok(ExtReal::Infinite),
            (ExtReal::Finite(f), ExtReal::Finite(t)) => {
                if !self.cfg.agree(f, t) {
                    let tol = self.cfg.abs_tol.max(self.cfg.rel_tol * t.abs());
                    return Err(PamError::RouteMismatch { fourier: f, time: t, tol });
                }
                Ok(ExtReal::Finite(if mu == 0.0 { t } else { f }))
            }
            (f, t) => Err(PamError::Numerical(format!(
                "resolvent routes disagree on finiteness at mu={mu}: fourier={f}, time={t}"
            ))),
        }
    }

    pub fn resolvent_routes(&self, mu: f64) -> Result<ResolventRoutes> {
        if !(mu >= 0.0) || !mu.is_finite() {
            return Err(PamError::domain(format!("resolvent needs finite mu >= 0, got {mu}")));
        }
        if mu == 0.0 && self.dim.get() <= 2 {
            return Ok(ResolventRoutes { mu, fourier: ExtReal::Infinite, time: ExtReal::Infinite });
        }
        Ok(ResolventRoutes {
            mu,
            fourier: ExtReal::Finite(self.resolvent_fourier(mu)),
            time: ExtReal::Finite(self.resolvent_time(mu)),
        })
    }

    /// Time-domain route alone. Used by root finders that evaluate `R` many
    /// times; callers must not pass `μ = 0` with `d ≤ 2`.
    pub fn resolvent_time(&self, mu: f64) -> f64 {
        debug_assert!(mu > 0.0 || self.dim.get() >= 3);
        self.time_integral(mu, 0.0)
    }

    /// Fourier route alone.
    pub fn resolvent_fourier(&self, mu: f64) -> f64 {
        let d = self.dim.get();
        let m = d - 1;
        let inner = |a: f64| 1.0 / (a * (a + 4.0)).sqrt();
        if m == 0 {
            return inner(mu);
        }
        // Innermost panel width: its contribution scales like h^{m-1} near the
        // μ = 0 singularity, so fewer panels suffice in higher dimension.
        let levels = match m {
            1 => 48,
            2 => 45,
            3 => 20,
            _ => 14,
        };
        let mut nodes = Vec::new();
        let mut hi = PI;
        for level in 0..=levels {
            let lo = if level == levels { 0.0 } else { hi * 0.5 };
            for (x, w) in self.fourier_rule.mapped(lo, hi) {
                nodes.push((4.0 * (0.5 * x).sin().powi(2), w));
            }
            hi = lo;
        }
        // sorted tuples i_1 ≤ … ≤ i_m with multinomial multiplicity
        let mut factorial = [1.0f64; 8];
        for i in 1..8 {
            factorial[i] = factorial[i - 1] * i as f64;
        }
        let n = nodes.len();
        let mut idx = vec![0usize; m];
        let mut sum = 0.0;
        let mut comp = 0.0;
        'outer: loop {
            let mut a = mu;
            let mut w = 1.0;
            let mut mult = factorial[m];
            let mut run = 1;
            for j in 0..m {
                let (c, wj) = nodes[idx[j]];
                a += c;
                w *= wj;
                if j > 0 && idx[j] == idx[j - 1] {
                    run += 1;
                } else {
                    mult /= factorial[run];
                    run = 1;
                }
            }
            mult /= factorial[run];
            // Neumaier summation
            let term = w * mult * inner(a);
            let t = sum + term;
            if sum.abs() >= term.abs() {
                comp += (sum - t) + term;
            } else {
                comp += (term - t) + sum;
            }
            sum = t;
            // next sorted tuple
            let mut j = m;
            loop {
                if j == 0 {
                    break 'outer;
                }
                j -= 1;
                if idx[j] + 1 < n {
                    idx[j] += 1;
                    let v = idx[j];
                    for k in j + 1..m {
                        idx[k] = v;
                    }
                    break;
                }
            }
        }
        (sum + comp) / PI.powi(m as i32)
    }

    /// `∫_start^∞ e^{-μt} p(0, t) dt` with `p(0, t) = (e^{-2t} I_0(2t))^d`.
    fn time_integral(&self, mu: f64, start: f64) -> f64 {
        let d = self.dim.get();
        let cap = if mu > 0.0 { 4.0 / mu } else { f64::INFINITY };
        let mut sum = 0.0;
        let mut t = start;
        loop {
            if mu > 0.0 && mu * t > EXP_CUTOFF {
                return sum;
            }
            if d >= 3 && t >= self.cfg.time_domain_cutoff {
                let tail = asymptotic_tail(d, t);
                if mu == 0.0 {
                    return sum + tail;
                }
                if tail < 1e-17 * sum {
                    return sum;
                }
            }
            let h = t.max(0.5).min(cap);
            if !(t + h).is_finite() {
                return sum;
            }
            sum += self.time_rule.integrate(t, t + h, |s| (-mu * s).exp() * i0_scaled(2.0 * s).powi(d as i32));
            t += h;
        }
    }

    /// Nodes `(t_j, w_j e^{-μ t_j})` of the time-route rule for `μ > 0`, so that
    /// `Σ_j w_j e^{-μ t_j} g(t_j) ≈ ∫_0^∞ e^{-μt} g(t) dt` for bounded `g`.
    pub fn laplace_nodes(&self, mu: f64) -> Vec<(f64, f64)> {
        assert!(mu > 0.0, "laplace_nodes needs mu > 0");
        let mut out = Vec::new();
        let mut t = 0.0;
        while mu * t <= EXP_CUTOFF {
            let h = t.max(0.5).min(4.0 / mu);
            out.extend(self.time_rule.mapped(t, t + h).map(|(s, w)| (s, w * (-mu * s).exp())));
            t += h;
        }
        out
    }

    /// Tail Green function `G_a(0) = ∫_a^∞ p(0, t) dt`; requires `d ≥ 3`.
    pub fn green_tail(&self, a: f64) -> Result<f64> {
        self.dim.require_transient("green_tail")?;
        if !(a >= 0.0) || !a.is_finite() {
            return Err(PamError::domain("green_tail needs finite a >= 0"));
        }
        if a == 0.0 {
            return Ok(1.0 / self.r_d);
        }
        Ok(self.time_integral(0.0, a))
    }

    /// Empirical constant `c_d` in `G_a(0) ≤ c_d / (r_d a^{(d-2)/2})`: the
    /// largest ratio over `a = 2^j`, `j = -6..=24`. Not a proven constant.
    pub fn fitted_tail_constant(&self) -> Result<f64> {
        self.dim.require_transient("fitted_tail_constant")?;
        let expo = (self.dim.get() as f64 - 2.0) / 2.0;
        let mut best: f64 = 0.0;
        for j in -6..=24 {
            let a = 2f64.powi(j);
            best = best.max(self.green_tail(a)? * self.r_d * a.powf(expo));
        }
        Ok(best)
    }
}

/// `∫_T^∞ (e^{-2t} I_0(2t))^d dt` from `e^{-x}I_0(x) ≈ (2πx)^{-1/2}(1 + 1/(8x) + 9/(128x²))`
/// at `x = 2t`, expanded to second order in `1/t`.
fn asymptotic_tail(d: usize, big_t: f64) -> f64 {
    let df = d as f64;
    let c1 = df / 16.0;
    let c2 = df * 9.0 / 512.0 + df * (df - 1.0) / 2.0 / 256.0;
    let half = df / 2.0;
    let pref = (4.0 * PI).powf(-half);
    pref * (big_t.powf(1.0 - half) / (half - 1.0)
        + c1 * big_t.powf(-half) / half
        + c2 * big_t.powf(-half - 1.0) / (half + 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn green(d: usize) -> LatticeGreen {
        LatticeGreen::with_defaults(d).unwrap()
    }

    #[test]
    fn phi_hat_examples() {
        assert_eq!(phi_hat(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert!((phi_hat(&[PI, PI, PI]).unwrap() - 12.0).abs() < 1e-14);
        assert!((phi_hat(&[PI / 2.0]).unwrap() - 2.0).abs() < 1e-15);
        assert!(phi_hat(&[3.5]).is_err());
    }

    #[test]
    fn heat_kernel_examples() {
        let d1 = Dimension::new(1).unwrap();
        assert_eq!(heat_kernel(&Site::ORIGIN, 0.0, 2.5, d1).unwrap(), 1.0);
        let got = heat_kernel(&Site::ORIGIN, 1.0, 1.0, d1).unwrap();
        assert!((got - 0.308508322553671).abs() < 1e-12, "{got}");
        assert!(heat_kernel(&Site::ORIGIN, -1.0, 1.0, d1).is_err());
    }

    #[test]
    fn heat_kernel_normalizes() {
        let d2 = Dimension::new(2).unwrap();
        let mut total = 0.0;
        for x in -30..=30 {
            for y in -30..=30 {
                total += heat_kernel(&Site::from_coords(&[x, y]), 0.5, 1.0, d2).unwrap();
            }
        }
        assert!((total - 1.0).abs() < 1e-10, "{total}");
    }

    #[test]
    fn one_dimensional_closed_form() {
        let g = green(1);
        for &mu in &[0.1f64, 1.0, 5.0, 50.0] {
            let exact = 1.0 / (mu * (mu + 4.0)).sqrt();
            let routes = g.resolvent_routes(mu).unwrap();
            assert!((routes.fourier.to_f64() - exact).abs() < 1e-10 * exact);
            assert!((routes.time.to_f64() - exact).abs() < 1e-10 * exact, "mu={mu}");
        }
        assert!((g.resolvent(5.0).unwrap().to_f64() - 0.1490712).abs() < 1e-7);
    }

    #[test]
    fn recurrent_dimensions_diverge_at_zero() {
        assert_eq!(green(1).resolvent(0.0).unwrap(), ExtReal::Infinite);
        assert_eq!(green(2).resolvent(0.0).unwrap(), ExtReal::Infinite);
        assert_eq!(green(2).r_d(), 0.0);
        assert_eq!(green(1).r_d(), 0.0);
        assert!(green(2).green_tail(1.0).is_err());
    }

    #[test]
    fn negative_mu_rejected() {
        assert!(matches!(green(3).resolvent(-1.0), Err(PamError::Domain(_))));
    }

    #[test]
    fn simple_cubic_green_constant() {
        let g = green(3);
        let routes = g.resolvent_routes(0.0).unwrap();
        let (f, t) = (routes.fourier.to_f64(), routes.time.to_f64());
        assert!(((f - t) / t).abs() < 1e-9, "{f} vs {t}");
        // Watson's simple-cubic integral 1.516386059... divided by the rate 2d = 6
        assert!((t - 1.5163860591519780 / 6.0).abs() < 1e-10, "{t}");
        assert!((g.r_d() - 3.9568).abs() < 1e-4);
        assert!((g.green_tail(0.0).unwrap() - t).abs() < 1e-12);
    }

    #[test]
    fn resolvent_bounds_and_monotonicity() {
        for d in 1..=4 {
            let g = green(d);
            let mut prev = f64::INFINITY;
            for &mu in &[0.05, 0.3, 1.0, 5.0, 25.0] {
                let r = g.resolvent(mu).unwrap().to_f64();
                assert!(r < prev);
                prev = r;
                if [1.0, 5.0, 25.0].contains(&mu) {
                    let gap = 1.0 / mu - r;
                    assert!(gap > 0.0 && gap < 2.0 * d as f64 / (mu * mu), "d={d} mu={mu}");
                }
            }
        }
    }

    #[test]
    fn tail_decreases_to_zero() {
        let g = green(3);
        let mut prev = g.green_tail(0.0).unwrap();
        for &a in &[0.5, 2.0, 10.0, 1e3, 1e5, 1e7] {
            let v = g.green_tail(a).unwrap();
            assert!(v < prev && v > 0.0);
            prev = v;
        }
        assert!(prev < 1e-4);
    }

    #[test]
    fn fitted_tail_constant_bounds_every_sample() {
        let g = green(4);
        let c = g.fitted_tail_constant().unwrap();
        for &a in &[0.25, 1.0, 8.0, 100.0] {
            assert!(g.green_tail(a).unwrap() <= c / (g.r_d() * a) * (1.0 + 1e-12));
        }
    }
}
