use pamlab::polaron::{
    coulomb_energy, gradient_energy, maximize_p, maximize_truncated, polaron_p_full, polaron_p_truncated,
    truncated_kernel_energy, Spacing, StartProfile,
};
use pamlab::{GridSpec, ModelParams, PolaronResult, RadialGrid, RadialProfile, SolverOptions};
use std::f64::consts::PI;
use std::sync::OnceLock;

fn base() -> &'static PolaronResult {
    static P: OnceLock<PolaronResult> = OnceLock::new();
    P.get_or_init(|| maximize_p(&GridSpec::default(), &SolverOptions::default()).unwrap())
}

fn gaussian() -> RadialProfile {
    let grid = RadialGrid::new(12.0, 3000, Spacing::Graded).unwrap();
    RadialProfile::from_fn(grid, |r| (-r * r / 2.0).exp()).normalized()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

// For f² the density of N(0, I/2), x − y ~ N(0, I) and E|Z|^{-1} = √(2/π).
#[test]
fn gaussian_energies_match_closed_forms() {
    let f = gaussian();
    assert!(rel(gradient_energy(&f), 1.5) < 1e-3);
    let a = (2.0 / PI).sqrt() / (4.0 * PI);
    assert!(rel(coulomb_energy(&f), a) < 1e-3, "{} vs {a}", coulomb_energy(&f));
}

#[test]
fn dilation_scaling() {
    let f = gaussian();
    let (a, b) = (coulomb_energy(&f), gradient_energy(&f));
    for lambda in [0.5, 2.0] {
        let g = f.dilated(lambda);
        assert!(rel(coulomb_energy(&g), lambda * a) < 5e-3, "lambda={lambda}");
        assert!(rel(gradient_energy(&g), lambda * lambda * b) < 5e-3, "lambda={lambda}");
    }
    // the maximizer on a doubled radius, so that f_{1/2} stays inside the grid
    let wide = maximize_p(&GridSpec::default().with_r_max(40.0).with_n(4000), &SolverOptions::default()).unwrap();
    let m = &wide.profile;
    let (a, b) = (coulomb_energy(m), gradient_energy(m));
    for lambda in [0.5, 2.0] {
        let g = m.dilated(lambda);
        assert!(rel(coulomb_energy(&g), lambda * a) < 5e-3, "lambda={lambda}");
        assert!(rel(gradient_energy(&g), lambda * lambda * b) < 5e-3, "lambda={lambda}");
    }
}

#[test]
fn reduced_form_agrees() {
    let p = base();
    let reduced = p.coulomb_term.powi(2) / (4.0 * p.gradient_term);
    assert!(rel(reduced, p.value) < 0.01);
    let f = gaussian();
    let trial = coulomb_energy(&f).powi(2) / (4.0 * gradient_energy(&f));
    assert!(trial <= p.value);
}

#[test]
fn maximizer_properties() {
    let p = base();
    assert!(p.virial_residual < 0.01);
    assert!((p.coulomb_term - 2.0 * p.gradient_term).abs() <= 0.01 * p.coulomb_term);
    assert!(p.profile.is_nonincreasing(1e-12));
    assert!(rel(p.donsker_varadhan_constant(), 4.0 * PI.sqrt() * p.value) < 1e-15);
}

#[test]
fn start_grid_and_spacing_independence() {
    let p = base().value;
    let exp = maximize_p(
        &GridSpec::default(),
        &SolverOptions { start: StartProfile::Exponential, ..Default::default() },
    )
    .unwrap();
    assert!(rel(exp.value, p) < 5e-3);
    let fine = maximize_p(&GridSpec::default().with_n(4000), &SolverOptions::default()).unwrap();
    assert!(rel(fine.value, p) < 0.01);
    let wide = maximize_p(&GridSpec::default().with_r_max(40.0).with_n(4000), &SolverOptions::default()).unwrap();
    assert!(rel(wide.value, p) < 0.01);
    let uniform =
        maximize_p(&GridSpec::default().with_spacing(Spacing::Uniform).with_n(4000), &SolverOptions::default())
            .unwrap();
    assert!(rel(uniform.value, p) < 0.01);
}

#[test]
fn truncated_kernel_limits() {
    let f = gaussian();
    assert_eq!(truncated_kernel_energy(&f, 2.0, 2.0, 1.0).unwrap(), 0.0);
    assert!(truncated_kernel_energy(&f, 3.0, 2.0, 1.0).unwrap_err().is_domain());
    let full = coulomb_energy(&f);
    let near = truncated_kernel_energy(&f, 1e-4, 1e4, 1.0).unwrap();
    assert!(rel(near, full) < 0.01, "{near} vs {full}");
    let ks = [1.0, 10.0, 100.0];
    let vals: Vec<f64> = ks.iter().map(|&k| truncated_kernel_energy(&f, 1e-2, k, 1.0).unwrap()).collect();
    assert!(vals[0] <= vals[1] && vals[1] <= vals[2]);
    let es = [1e-1, 1e-2, 1e-3];
    let vals: Vec<f64> = es.iter().map(|&e| truncated_kernel_energy(&f, e, 10.0, 1.0).unwrap()).collect();
    assert!(vals[0] <= vals[1] && vals[1] <= vals[2]);
}

#[test]
fn truncated_problem_is_monotone_and_below_full() {
    let params = ModelParams::new(3, 1, 1.0, 10.0, 1.0, 1.0).unwrap();
    let (spec, opts) = (GridSpec::default(), SolverOptions::default());
    let full = polaron_p_full(&params, &spec, &opts).unwrap().value;
    assert_eq!(polaron_p_truncated(1.0, 1.0, &params, &spec, &opts).unwrap(), 0.0);
    assert!(maximize_truncated(1.0, 1.0, &params, &spec, &opts).unwrap().is_none());
    let mut prev = 0.0;
    for k in [10.0, 100.0, 1000.0] {
        let v = polaron_p_truncated(1e-3, k, &params, &spec, &opts).unwrap();
        assert!(v >= prev && v <= full, "K={k}: {v}");
        prev = v;
    }
    let mut prev = 0.0;
    for (e, k) in [(1e-1, 1e1), (1e-2, 1e2), (1e-3, 1e3)] {
        let v = polaron_p_truncated(e, k, &params, &spec, &opts).unwrap();
        assert!(v >= prev && v <= full);
        prev = v;
    }
}

#[test]
fn full_value_scaling_law() {
    let (spec, opts) = (GridSpec::default(), SolverOptions::default());
    let unit = ModelParams::new(3, 1, 1.0, 1.0, 1.0, 1.0).unwrap();
    let one = polaron_p_full(&unit, &spec, &opts).unwrap();
    assert!(rel(one.value, base().value) < 1e-12);
    assert!(one.relative_gap < 0.01);
    let two = polaron_p_full(&ModelParams { gamma: 2.0, ..unit }, &spec, &opts).unwrap();
    assert!(rel(two.value / one.value, 16.0) < 1e-12);
    assert!(two.relative_gap < 0.01);
    let other = ModelParams::new(3, 3, 1.0, 0.7, 2.5, 0.4).unwrap();
    let r = polaron_p_full(&other, &spec, &opts).unwrap();
    assert!(rel(r.value, other.polaron_coupling().powi(2) * base().value) < 1e-12);
    assert!(r.relative_gap < 0.01);
}
