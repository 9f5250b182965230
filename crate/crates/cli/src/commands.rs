use std::path::Path;

use pamlab::cauchy::{solve_w_bar, solve_w_bar_volterra, w_bar_limit};
use pamlab::mc::{
    default_endpoints, estimate_lambda_p, estimate_lambda_p_pinned_scan, exceedance_set, pinned_max,
    sample_catalyst_field, scaling_identity_check, simulate_quenched_u, solve_quenched_field, tags,
    StreamCoupling, Window,
};
use pamlab::polaron::{maximize_p, polaron_p_full, polaron_p_truncated, Spacing};
use pamlab::spectral::{
    classify_regimes, hat_lambda_p, kappa_infinity_asymptote, lambda_p_bounds, lambda_p_zero,
};
use pamlab::{
    BoxConfig, Dimension, ExtReal, GridSpec, LatticeGreen, McConfig, McEstimate, ModelParams, PamError,
    QuadratureConfig, Result, SolverOptions,
};
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::output::{num, round_tree, to_value, Manifest};
use crate::{BoxArgs, CouplingArg, GridArgs, McArgs, ModelArgs, SpacingArg};

type Output = Result<(Map<String, Value>, Manifest)>;

fn ext(x: ExtReal) -> Value {
    num(x.to_f64())
}

fn params_of(m: &ModelArgs) -> Result<ModelParams> {
    ModelParams::new(m.d, m.p, m.kappa, m.gamma, m.rho, m.nu)
}

fn box_of(params: &ModelParams, t: f64, b: &BoxArgs) -> BoxConfig {
    let mut cfg = BoxConfig::default_for(params, t);
    if let Some(r) = b.box_radius {
        cfg = cfg.with_radius(r);
    }
    if let Some(dt) = b.dt {
        cfg = cfg.with_dt(dt);
    }
    cfg
}

fn object(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        _ => unreachable!("json! object literal"),
    }
}

fn estimate(e: &McEstimate) -> Value {
    to_value(e)
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> PamError {
    PamError::domain(format!("cannot write {}: {e}", path.display()))
}

/// Writes CSV rows plus a `<file>.manifest.json` sidecar.
fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>], manifest: &mut Manifest) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_error(path, e))?;
    w.write_record(header).map_err(|e| io_error(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| io_error(path, e))?;
    }
    w.flush().map_err(|e| io_error(path, e))?;
    manifest.add_output(path);
    let side = path.with_extension("manifest.json");
    manifest.add_output(&side);
    let text = serde_json::to_string_pretty(&manifest.to_value()).expect("json");
    std::fs::write(&side, text).map_err(|e| io_error(&side, e))?;
    Ok(())
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn green_toolkit(d: usize) -> Result<LatticeGreen> {
    LatticeGreen::with_defaults(d)
}

pub fn green(d: usize, mu: f64, a: Option<f64>, nodes: usize) -> Output {
    let cfg = QuadratureConfig { nodes_per_axis: nodes, ..Default::default() };
    let manifest = Manifest::new("green", json!({ "d": d, "mu": mu, "a": a, "nodes": nodes }), None);
    let green = LatticeGreen::new(Dimension::new(d)?, cfg)?;
    let r = green.resolvent(mu)?;
    let mut out = object(json!({
        "d": d,
        "mu": num(mu),
        "R": ext(r),
        "r_d": num(green.r_d()),
    }));
    let method = if mu > 0.0 {
        let routes = green.resolvent_routes(mu)?;
        json!({
            "returned": "fourier",
            "fourier": ext(routes.fourier),
            "time": ext(routes.time),
            "rel_tol": num(cfg.rel_tol),
            "nodes_per_axis": nodes,
        })
    } else if d >= 3 {
        json!({ "returned": "time", "time_domain_cutoff": num(cfg.time_domain_cutoff) })
    } else {
        json!({ "returned": "divergent", "note": "recurrent lattice, R(0) = inf" })
    };
    out.insert("method".into(), method);
    if let Some(a) = a {
        out.insert("a".into(), num(a));
        out.insert("G_a".into(), num(green.green_tail(a)?));
        out.insert("c_d".into(), num(green.fitted_tail_constant()?));
    }
    Ok((out, manifest))
}

fn geometric(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

fn phase_row(params: &ModelParams, green: &LatticeGreen) -> Result<Value> {
    let report = classify_regimes(params, green)?;
    Ok(json!({
        "d": params.d.get(),
        "ratio": num(report.ratio),
        "r_d": num(report.r_d_value),
        "strongly_catalytic": report.strongly_catalytic,
        "lambda_p_finite": report.lambda_p_finite,
        "verdict": to_value(&report.intermittency_verdict),
        "hat_lambda_p": num(hat_lambda_p(params, green)?),
        "lambda_p_zero": ext(lambda_p_zero(params, green)?),
    }))
}

pub fn phase(m: &ModelArgs, csv: Option<&Path>, ratio_min: f64, ratio_max: f64, points: usize) -> Output {
    let mut manifest = Manifest::new(
        "phase",
        json!({ "model": to_value(m), "csv": csv, "ratio_min": ratio_min, "ratio_max": ratio_max, "points": points }),
        None,
    );
    let params = params_of(m)?;
    let green = green_toolkit(m.d)?;
    let report = classify_regimes(&params, &green)?;
    let bounds = lambda_p_bounds(&params, &green)?;
    let mut out = object(json!({
        "report": to_value(&report),
        "hat_lambda_p": num(hat_lambda_p(&params, &green)?),
        "lambda_p_zero": ext(lambda_p_zero(&params, &green)?),
        "lambda_p_bounds": { "lo": ext(bounds.lo), "hi": ext(bounds.hi) },
    }));
    if m.d >= 3 && report.lambda_p_finite {
        let p_const = if m.d == 3 { maximize_p(&GridSpec::default(), &SolverOptions::default())?.value } else { 0.0 };
        out.insert("kappa_lambda_p_large_kappa".into(), num(kappa_infinity_asymptote(&params, &green, p_const)?));
    }
    if let Some(path) = csv {
        if !(ratio_min > 0.0 && ratio_max >= ratio_min && points >= 1) {
            return Err(PamError::domain("sweep needs 0 < ratio-min <= ratio-max and points >= 1"));
        }
        let ratios = geometric(ratio_min, ratio_max, points);
        let mut rows = Vec::new();
        for d in 1..=5 {
            let g = green_toolkit(d)?;
            let cells: Vec<Result<Value>> = ratios
                .par_iter()
                .map(|&a| {
                    let p = ModelParams::new(d, m.p, m.kappa, a * m.rho / m.p as f64, m.rho, m.nu)?;
                    phase_row(&p, &g)
                })
                .collect();
            for c in cells {
                rows.push(c?);
            }
        }
        let header =
            ["d", "ratio", "r_d", "strongly_catalytic", "lambda_p_finite", "verdict", "hat_lambda_p", "lambda_p_zero"];
        let table: Vec<Vec<String>> = rows.iter().map(|r| header.iter().map(|h| cell(&r[*h])).collect()).collect();
        write_csv(path, &header, &table, &mut manifest)?;
        out.insert("sweep_rows".into(), json!(table.len()));
    }
    Ok((out, manifest))
}

pub fn wbar(m: &ModelArgs, t: f64, b: &BoxArgs, volterra_dt: f64, csv: Option<&Path>) -> Output {
    let mut manifest = Manifest::new(
        "wbar",
        json!({ "model": to_value(m), "t": t, "box": to_value(b), "volterra_dt": volterra_dt, "csv": csv }),
        None,
    );
    let params = params_of(m)?;
    let cfg = box_of(&params, t, b);
    let pde = solve_w_bar(&params, t, &cfg)?;
    let vol = solve_w_bar_volterra(&params, t, volterra_dt)?;
    let limit = w_bar_limit(&params, &green_toolkit(m.d)?)?;
    let at_t = pde.last();
    let gap = limit.finite().map(|l| (at_t - l) / l);
    let mut out = object(json!({
        "t": num(t),
        "w_bar_pde": num(at_t),
        "w_bar_volterra": num(vol.trace.last()),
        "limit": ext(limit),
        "relative_gap_to_limit": gap.map_or(Value::Null, num),
        "time_average": num(pde.time_average()),
        "lambda_p_kappa_zero": num(params.nu * params.gamma * pde.time_average()),
        "volterra_halving_discrepancy": num(vol.halving_discrepancy),
        "box": to_value(&cfg),
        "steps": pde.values.len() - 1,
    }));
    if let Some(path) = csv {
        let rows: Vec<Vec<String>> = pde
            .times
            .iter()
            .zip(&pde.values)
            .map(|(&s, &v)| vec![cell(&num(s)), cell(&num(v)), cell(&num(vol.trace.value_at(s)))])
            .collect();
        write_csv(path, &["t", "w_bar_pde", "w_bar_volterra"], &rows, &mut manifest)?;
        out.insert("csv_rows".into(), json!(rows.len()));
    }
    Ok((out, manifest))
}

fn mc_setup(run: &McArgs) -> Result<(ModelParams, McConfig, BoxConfig)> {
    let params = params_of(&run.model)?;
    let mc = McConfig::new(run.replicas, run.seed)?;
    let cfg = box_of(&params, run.t, &run.box_args);
    Ok((params, mc, cfg))
}

fn mc_manifest(name: &str, run: &McArgs, extra: Value) -> Manifest {
    let mut params = to_value(run);
    if let (Value::Object(p), Value::Object(e)) = (&mut params, extra) {
        p.extend(e);
    }
    Manifest::new(name, params, Some(run.seed))
}

fn r_d_hint(d: usize) -> Result<Option<f64>> {
    Ok(if d >= 3 { Some(green_toolkit(d)?.r_d()) } else { None })
}

pub fn mc_lambda(run: &McArgs) -> Output {
    let manifest = mc_manifest("mc lambda", run, json!({}));
    let (params, mc, cfg) = mc_setup(run)?;
    let est = estimate_lambda_p(&params, run.t, &mc, &cfg, r_d_hint(run.model.d)?)?;
    let bar = solve_w_bar(&params, run.t, &cfg)?;
    let upper = params.nu * params.gamma * bar.time_average();
    let lower = upper - params.d.coordination() as f64 * params.kappa;
    let band = 3.0 * est.std_error;
    let out = object(json!({
        "estimate": estimate(&est),
        "sandwich": {
            "lower": num(lower),
            "upper": num(upper),
            "holds_3sigma": est.value >= lower - band && est.value <= upper + band,
        },
        "box": to_value(&cfg),
    }));
    Ok((out, manifest))
}

pub fn mc_pinned(run: &McArgs) -> Output {
    let manifest = mc_manifest("mc pinned", run, json!({}));
    let (params, mc, cfg) = mc_setup(run)?;
    let scan = estimate_lambda_p_pinned_scan(&params, run.t, &mc, &cfg, &default_endpoints(params.d))?;
    let free = estimate_lambda_p(&params, run.t, &mc, &cfg, None)?;
    let best = pinned_max(&scan);
    let sigma = best.estimate.std_error.hypot(free.std_error);
    let out = object(json!({
        "endpoints": to_value(&scan),
        "pinned_max": { "endpoint": to_value(&best.endpoint), "estimate": estimate(&best.estimate) },
        "unpinned": estimate(&free),
        "pinned_le_unpinned_3sigma": best.estimate.value <= free.value + 3.0 * sigma,
        "box": to_value(&cfg),
    }));
    Ok((out, manifest))
}

pub fn mc_quenched(run: &McArgs, alpha: Option<f64>) -> Output {
    let manifest = mc_manifest("mc quenched", run, json!({ "alpha": alpha }));
    let (params, mc, cfg) = mc_setup(run)?;
    let window = Window { radius: cfg.radius, horizon: run.t };
    let field = sample_catalyst_field(&params, window, &mut mc.stream(tags::CATALYST, 0))?;
    let u = simulate_quenched_u(&field, &params, run.t, &mc)?;
    let mut out = object(json!({
        "catalysts": field.len(),
        "window": to_value(&window),
        "u": estimate(&u),
        "log_u_over_t": num(u.value.ln() / run.t),
    }));
    if let Some(alpha) = alpha {
        let snapshot = solve_quenched_field(&field, &params, run.t, cfg.radius)?;
        let ex = exceedance_set(&snapshot, alpha, run.t)?;
        out.insert(
            "exceedance".into(),
            json!({ "alpha": num(alpha), "count": ex.count, "max_u": num(snapshot.max()), "sites": to_value(&ex.sites) }),
        );
    }
    Ok((out, manifest))
}

pub fn mc_scaling(run: &McArgs, coupling: CouplingArg) -> Output {
    let manifest = mc_manifest("mc scaling-check", run, json!({ "coupling": to_value(&coupling) }));
    let (params, mc, _) = mc_setup(run)?;
    let coupling = match coupling {
        CouplingArg::Shared => StreamCoupling::Shared,
        CouplingArg::Independent => StreamCoupling::Independent,
    };
    let chk = scaling_identity_check(&params, run.t, &mc, coupling)?;
    let out = object(json!({
        "lhs": estimate(&chk.lhs),
        "rhs_times_kappa": estimate(&chk.rhs),
        "z_score": num(chk.z_score),
        "pass_3sigma": chk.agree,
    }));
    Ok((out, manifest))
}

pub fn polaron(m: &ModelArgs, g: &GridArgs, eps: Option<f64>, big_k: Option<f64>, csv: Option<&Path>) -> Output {
    let mut manifest = Manifest::new(
        "polaron",
        json!({ "model": to_value(m), "grid": to_value(g), "eps": eps, "K": big_k, "csv": csv }),
        None,
    );
    let params = params_of(m)?;
    let spacing = match g.spacing {
        SpacingArg::Uniform => Spacing::Uniform,
        SpacingArg::Graded => Spacing::Graded,
    };
    let spec = GridSpec::default().with_n(g.n).with_r_max(g.r_max).with_spacing(spacing);
    let opts = SolverOptions::default();
    let base = maximize_p(&spec, &opts)?;
    let full = polaron_p_full(&params, &spec, &opts)?;
    let mut out = object(json!({
        "P": num(base.value),
        "A": num(base.coulomb_term),
        "B": num(base.gradient_term),
        "virial_residual": num(base.virial_residual),
        "four_sqrt_pi_P": num(base.donsker_varadhan_constant()),
        "iterations": base.iterations,
        "residual": num(base.residual),
        "P_p": to_value(&full),
    }));
    match (eps, big_k) {
        (Some(eps), Some(k)) => {
            let v = polaron_p_truncated(eps, k, &params, &spec, &opts)?;
            out.insert(
                "P_p_truncated".into(),
                json!({
                    "eps": num(eps),
                    "K": num(k),
                    "value": num(v),
                    "relative_gap": num((full.value - v) / full.value),
                    "le_full": v <= full.value,
                }),
            );
        }
        (None, None) => {}
        _ => return Err(PamError::domain("--eps and --K must be given together")),
    }
    if let Some(path) = csv {
        let prof = &base.profile;
        let rows: Vec<Vec<String>> = prof
            .grid
            .nodes()
            .iter()
            .zip(&prof.values)
            .map(|(&r, &f)| vec![cell(&num(r)), cell(&num(f))])
            .collect();
        write_csv(path, &["r", "f"], &rows, &mut manifest)?;
    }
    let mut v = Value::Object(out);
    round_tree(&mut v);
    Ok((object(v), manifest))
}
