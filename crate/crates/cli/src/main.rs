//! `pamlab`: constants, regime classification, solvers and Monte Carlo runs
//! for the parabolic Anderson model with Poisson catalysts. JSON goes to
//! stdout, logs to stderr.

mod commands;
mod output;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pamlab::PamError;
use serde::Serialize;

/// Exit status for inputs outside an operation's domain.
const EXIT_DOMAIN: u8 = 2;
/// Exit status for numerical failures.
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "pamlab", version, about = "Parabolic Anderson model with catalytic random walkers")]
struct Cli {
    /// Worker threads for Monte Carlo runs (default: all cores).
    #[arg(long, global = true, env = "PAMLAB_THREADS")]
    threads: Option<usize>,

    /// Also write the JSON record to this file.
    #[arg(long, global = true)]
    out: Option<std::path::PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 3)]
    pub d: usize,
    #[arg(long, default_value_t = 1)]
    pub p: u32,
    #[arg(long, default_value_t = 1.0)]
    pub kappa: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,
    #[arg(long, default_value_t = 1.0)]
    pub nu: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct BoxArgs {
    /// Box radius (default `ceil(6 √(max(κ,ρ) t)) + 2`).
    #[arg(long = "box-radius")]
    pub box_radius: Option<i32>,
    /// Time step (default `1/(4dρ + 4pγ)`).
    #[arg(long)]
    pub dt: Option<f64>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct GridArgs {
    /// Radial grid points.
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    /// Grid radius in units of `4π/c`.
    #[arg(long = "r-max", default_value_t = 20.0)]
    pub r_max: f64,
    #[arg(long, value_enum, default_value_t = SpacingArg::Graded)]
    pub spacing: SpacingArg,
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SpacingArg {
    Uniform,
    Graded,
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CouplingArg {
    Shared,
    Independent,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Resolvent R(μ), r_d and the tail Green function G_a(0).
    #[command(allow_negative_numbers = true)]
    Green {
        #[arg(long, default_value_t = 3)]
        d: usize,
        #[arg(long, default_value_t = 0.0)]
        mu: f64,
        /// Lower time limit of the tail Green function.
        #[arg(long)]
        a: Option<f64>,
        /// Gauss–Legendre nodes per axis on each Fourier panel.
        #[arg(long, default_value_t = 12)]
        nodes: usize,
    },
    /// Catalytic regime, λ̂_p, λ_p(0) and its bounds; `--csv` adds a sweep.
    #[command(allow_negative_numbers = true)]
    Phase {
        #[command(flatten)]
        model: ModelArgs,
        /// Write a (d, pγ/ρ) sweep to this CSV file.
        #[arg(long)]
        csv: Option<std::path::PathBuf>,
        #[arg(long = "ratio-min", default_value_t = 0.05)]
        ratio_min: f64,
        #[arg(long = "ratio-max", default_value_t = 20.0)]
        ratio_max: f64,
        /// Sweep points per dimension (geometric in pγ/ρ).
        #[arg(long, default_value_t = 40)]
        points: usize,
    },
    /// Pinned-origin solution w̄(0, t) by the PDE and Volterra routes.
    #[command(allow_negative_numbers = true)]
    Wbar {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 50.0)]
        t: f64,
        #[command(flatten)]
        box_args: BoxArgs,
        /// Volterra step.
        #[arg(long = "volterra-dt", default_value_t = 1.0 / 64.0)]
        volterra_dt: f64,
        /// Write the trace (t, w̄) to this CSV file.
        #[arg(long)]
        csv: Option<std::path::PathBuf>,
    },
    /// Feynman–Kac Monte Carlo.
    Mc {
        #[command(subcommand)]
        what: McCommand,
    },
    /// Polaron constant 𝒫 and the values 𝒫_p.
    #[command(allow_negative_numbers = true)]
    Polaron {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long = "K")]
        big_k: Option<f64>,
        /// Write the maximizing profile (r, f) to this CSV file.
        #[arg(long)]
        csv: Option<std::path::PathBuf>,
    },
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct McArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 2.0)]
    pub t: f64,
    #[arg(long, default_value_t = 1000)]
    pub replicas: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    pub box_args: BoxArgs,
}

#[derive(Subcommand, Debug)]
enum McCommand {
    /// Λ_p(t) with the spectral sandwich at finite t.
    #[command(allow_negative_numbers = true)]
    Lambda {
        #[command(flatten)]
        run: McArgs,
    },
    /// Endpoint-pinned estimate over the origin and its neighbours.
    #[command(allow_negative_numbers = true)]
    Pinned {
        #[command(flatten)]
        run: McArgs,
    },
    /// u(0, t) in one sampled catalyst field.
    #[command(allow_negative_numbers = true)]
    Quenched {
        #[command(flatten)]
        run: McArgs,
        /// Also report the exceedance set {u(·,t) > e^{αt}} of the field solve.
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Λ_p(T; κ, γ, ρ, ν) against κ Λ_p(κT; 1, γ/κ, ρ/κ, ν).
    #[command(allow_negative_numbers = true)]
    ScalingCheck {
        #[command(flatten)]
        run: McArgs,
        #[arg(long, value_enum, default_value_t = CouplingArg::Shared)]
        coupling: CouplingArg,
    },
}

fn exit_code(e: &PamError) -> u8 {
    if e.is_domain() {
        EXIT_DOMAIN
    } else {
        EXIT_NUMERICAL
    }
}

/// Rendered JSON on success, or an exit status and message.
fn execute(command: Command, out: Option<&std::path::Path>) -> std::result::Result<String, (u8, String)> {
    let result = match command {
        Command::Green { d, mu, a, nodes } => commands::green(d, mu, a, nodes),
        Command::Phase { model, csv, ratio_min, ratio_max, points } => {
            commands::phase(&model, csv.as_deref(), ratio_min, ratio_max, points)
        }
        Command::Wbar { model, t, box_args, volterra_dt, csv } => {
            commands::wbar(&model, t, &box_args, volterra_dt, csv.as_deref())
        }
        Command::Mc { what } => match what {
            McCommand::Lambda { run } => commands::mc_lambda(&run),
            McCommand::Pinned { run } => commands::mc_pinned(&run),
            McCommand::Quenched { run, alpha } => commands::mc_quenched(&run, alpha),
            McCommand::ScalingCheck { run, coupling } => commands::mc_scaling(&run, coupling),
        },
        Command::Polaron { model, grid, eps, big_k, csv } => {
            commands::polaron(&model, &grid, eps, big_k, csv.as_deref())
        }
    };
    let (body, mut manifest) = result.map_err(|e| (exit_code(&e), e.to_string()))?;
    if let Some(path) = out {
        manifest.add_output(path);
        let text = output::render(body, &manifest);
        std::fs::write(path, &text).map_err(|e| (EXIT_DOMAIN, format!("cannot write {}: {e}", path.display())))?;
        Ok(text)
    } else {
        Ok(output::render(body, &manifest))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("pamlab: thread pool: {e}");
        }
    }
    match execute(cli.command, cli.out.as_deref()) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err((code, msg)) => {
            eprintln!("pamlab: {msg}");
            ExitCode::from(code)
        }
    }
}

#[cfg(test)]
mod tests;
