//! Exponentially scaled modified Bessel functions of the first kind.
//!
//! The lattice heat kernel factorizes into 1-D factors
//! `e^{-2ct} I_n(2ct)`, so everything here returns `e^{-x} I_n(x)`, which
//! stays in `[0, 1]` for all `x ≥ 0`.

use std::f64::consts::PI;

/// Argument above which `e^{-x} I_0(x)` switches from the power series to the
/// large-argument asymptotic expansion. At `x = 25` the smallest asymptotic
/// term is below `1e-20`, and the series has no cancellation (all terms are
/// positive), so both branches reach roughly machine precision there.
pub const I0_SWITCH: f64 = 25.0;

/// `e^{-x} I_0(x)` for `x ≥ 0`, accurate to about `1e-15` relative.
pub fn i0_scaled(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x <= I0_SWITCH {
        let q = 0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        loop {
            term *= q / (k * k);
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
            k += 1.0;
        }
        sum * (-x).exp()
    } else {
        // I_0(x) ~ e^x / sqrt(2πx) Σ_k [(2k-1)!!]^2 / (k! (8x)^k)
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k: f64 = 1.0;
        loop {
            let next = term * (2.0 * k - 1.0).powi(2) / (8.0 * k * x);
            if next >= term || next < 1e-18 * sum {
                break;
            }
            term = next;
            sum += term;
            k += 1.0;
        }
        sum / (2.0 * PI * x).sqrt()
    }
}

/// `e^{-x} I_n(x)` for `n = 0..=n_max`, by Miller's backward recurrence
/// `I_{n-1} = (2n/x) I_n + I_{n+1}` normalized with `e^{-x}[I_0 + 2 Σ_{n≥1} I_n] = 1`.
pub fn in_scaled_sequence(x: f64, n_max: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_max + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let start = n_max + 15 + (90.0 * x).sqrt().ceil() as usize;
    let mut next = 0.0; // I_{n+1}
    let mut cur = 1e-280; // I_n
    let mut total = 0.0;
    for n in (1..=start).rev() {
        if n <= n_max {
            out[n] = cur;
        }
        total += 2.0 * cur;
        let prev = 2.0 * n as f64 / x * cur + next;
        next = cur;
        cur = prev;
        if cur > 1e250 {
            let s = 1e-250;
            cur *= s;
            next *= s;
            total *= s;
            for v in out.iter_mut() {
                *v *= s;
            }
        }
    }
    out[0] = cur;
    total += cur;
    for v in out.iter_mut() {
        *v /= total;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::GlRule;

    /// `e^{-x} I_n(x) = (1/π) ∫_0^π e^{-x(1 - cos θ)} cos(nθ) dθ`, evaluated on
    /// many panels; independent of both implementation branches.
    fn integral_oracle(x: f64, n: usize) -> f64 {
        let rule = GlRule::new(40);
        let panels = 64;
        let h = PI / panels as f64;
        (0..panels)
            .map(|j| {
                rule.integrate(j as f64 * h, (j + 1) as f64 * h, |t| {
                    (-x * (1.0 - t.cos())).exp() * (n as f64 * t).cos()
                })
            })
            .sum::<f64>()
            / PI
    }

    #[test]
    fn i0_matches_integral_representation_on_both_branches() {
        for &x in &[0.0, 1e-3, 0.5, 2.0, 10.0, 24.9, 25.1, 60.0, 400.0, 5e3] {
            let got = i0_scaled(x);
            let want = integral_oracle(x, 0);
            assert!(((got - want) / want).abs() < 1e-12, "x={x}: {got} vs {want}");
        }
    }

    #[test]
    fn i0_continuous_at_switch() {
        let lo = i0_scaled(I0_SWITCH);
        let hi = i0_scaled(I0_SWITCH * (1.0 + 1e-12));
        assert!(((lo - hi) / lo).abs() < 1e-12);
    }

    #[test]
    fn known_value_e2_i0_2() {
        // e^{-2} I_0(2) with I_0(2) = 2.2795853023360673
        assert!((i0_scaled(2.0) - 2.2795853023360673 * (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn sequence_matches_oracle() {
        for &x in &[0.3, 4.0, 30.0, 250.0] {
            let seq = in_scaled_sequence(x, 12);
            for (n, &v) in seq.iter().enumerate() {
                let want = integral_oracle(x, n);
                assert!((v - want).abs() < 1e-13 * want + 1e-16, "x={x} n={n}: {v} vs {want}");
            }
            assert!((seq[0] - i0_scaled(x)).abs() < 1e-14);
        }
    }

    #[test]
    fn sequence_at_zero_is_delta() {
        assert_eq!(in_scaled_sequence(0.0, 3), vec![1.0, 0.0, 0.0, 0.0]);
    }
}
