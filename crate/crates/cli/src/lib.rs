//! Command-line driver for the spincat toolkit.
//!
//! Every run writes its tables and a `manifest.json` echoing the resolved
//! configuration into the output directory. Failures are reported on stderr
//! as a JSON object and mapped to exit codes: 2 for usage errors, 3 for
//! numerical failures and 4 for infeasible constraints.

pub mod angle;
mod commands;
pub mod output;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use spincat_core::spin::TotalSpin;
use spincat_core::Error;

pub use angle::Angle;
use output::{Format, Sink};

#[derive(Debug, Parser, Serialize)]
#[command(name = "spincat", version, about = "Driven spin-cat state preparation toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Serialize)]
pub struct Global {
    /// Seed for basin hopping and noise ensembles.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Command {
    /// Fidelity trace of the driven evolution, with optional Q snapshots.
    Evolve(EvolveArgs),
    /// First fidelity maximum over a grid of drives.
    Scan(ScanArgs),
    /// Coarse scan followed by lattice refinement of the best drive.
    Optimize(OptimizeArgs),
    /// Readout fringe of the prepared state, optionally under noise.
    Fringe(FringeArgs),
    /// Discrete spectrum of the fringe against the analytic dips.
    Spectrum(SpectrumArgs),
    /// Gap trace, populations or eigenstate phase profiles.
    Eigen(EigenArgs),
    /// Husimi Q function of an evolved state or an eigenstate.
    Qfunc(QfuncArgs),
}

#[derive(Debug, Clone, Copy, Args, Serialize)]
#[group(required = true, multiple = false)]
pub struct SpinArgs {
    /// Total spin, as a decimal or a fraction such as `149/2`.
    #[arg(long = "J", value_parser = parse_spin)]
    #[serde(rename = "J")]
    pub j: Option<TotalSpin>,
    /// Number of spin-1/2 particles, `N = 2J`.
    #[arg(long = "N", visible_alias = "Nbar")]
    #[serde(rename = "N")]
    pub n: Option<u32>,
}

impl SpinArgs {
    pub fn spin(&self) -> TotalSpin {
        match (self.j, self.n) {
            (Some(j), _) => j,
            (None, Some(n)) => TotalSpin::from_spin_count(n),
            (None, None) => unreachable!("clap enforces the spin group"),
        }
    }
}

fn parse_spin(s: &str) -> Result<TotalSpin, String> {
    TotalSpin::parse_fraction(s).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Copy, Args, Serialize)]
pub struct DriveArgs {
    /// Rescaled drive frequency `ω/λ`.
    #[arg(long, allow_hyphen_values = true)]
    pub omega: Option<Angle>,
    /// Drive phase.
    #[arg(long, allow_hyphen_values = true)]
    pub phi: Option<Angle>,
}

#[derive(Debug, Clone, Copy, Args, Serialize)]
pub struct TraceArgs {
    /// Spacing of the sampled fidelity trace.
    #[arg(long, default_value_t = 0.05)]
    pub sample_dtau: f64,
    /// Integrator step.
    #[arg(long, default_value_t = 2e-3)]
    pub dtau: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct EvolveArgs {
    #[command(flatten)]
    pub spin: SpinArgs,
    #[command(flatten)]
    pub drive: DriveArgs,
    /// Drive strength `Ω/λ`.
    #[arg(long, default_value_t = 1.0)]
    pub r: f64,
    #[arg(long)]
    pub tau_end: f64,
    #[command(flatten)]
    pub trace: TraceArgs,
    /// Times at which to write Q-function snapshots.
    #[arg(long, value_delimiter = ',')]
    pub q_at: Vec<f64>,
    #[command(flatten)]
    pub grid: QGridArgs,
}

#[derive(Debug, Clone, Copy, Args, Serialize)]
pub struct GridArgs {
    #[arg(long, default_value = "0.005pi", allow_hyphen_values = true)]
    pub omega_min: Angle,
    #[arg(long, default_value = "0.05pi", allow_hyphen_values = true)]
    pub omega_max: Angle,
    #[arg(long, default_value_t = 51)]
    pub n_omega: usize,
    #[arg(long, default_value = "-0.05pi", allow_hyphen_values = true)]
    pub phi_min: Angle,
    #[arg(long, default_value = "0.05pi", allow_hyphen_values = true)]
    pub phi_max: Angle,
    #[arg(long, default_value_t = 51)]
    pub n_phi: usize,
    #[arg(long, default_value_t = 1.0)]
    pub r: f64,
    /// Give up on a drive if no fidelity maximum appears before this time.
    #[arg(long, default_value_t = 60.0)]
    pub tau_limit: f64,
    #[command(flatten)]
    pub trace: TraceArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct ScanArgs {
    #[command(flatten)]
    pub spin: SpinArgs,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub spin: SpinArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Smallest admissible displacement angle at the fidelity maximum.
    #[arg(long, default_value = "0.4pi", allow_hyphen_values = true)]
    pub delta_threshold: Angle,
    /// Refinement lattice unit.
    #[arg(long, default_value = "0.0001pi", allow_hyphen_values = true)]
    pub refine_unit: Angle,
}

#[derive(Debug, Args, Serialize)]
pub struct NoiseArgs {
    /// Noise as `target:shape:width`, e.g. `spin:gauss:0.05`; targets are
    /// `spin`, `omega` and `lambda`.
    #[arg(long, value_parser = parse_noise)]
    pub noise: Option<NoiseArg>,
    #[arg(long, default_value_t = 250)]
    pub trials: usize,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct NoiseArg {
    pub target: spincat_core::interferometry::NoiseTarget,
    pub sigma_rel: f64,
}

fn parse_noise(s: &str) -> Result<NoiseArg, String> {
    use spincat_core::interferometry::{NoiseShape, NoiseTarget};
    let parts: Vec<&str> = s.split(':').collect();
    let [target, shape, width] = parts[..] else {
        return Err(format!("expected `target:shape:width`, got `{s}`"));
    };
    let target = match target {
        "spin" | "N" | "n" => NoiseTarget::SpinNumber,
        "omega" | "Omega" | "drive" => NoiseTarget::DriveStrength,
        "lambda" | "energy" => NoiseTarget::NonlinearEnergy,
        _ => return Err(format!("unknown noise target `{target}`")),
    };
    let shape = match shape {
        "gauss" | "gaussian" => NoiseShape::Gaussian,
        "uniform" => NoiseShape::Uniform,
        _ => return Err(format!("unknown noise shape `{shape}`")),
    };
    if shape != target.shape() {
        return Err(format!("noise on this target must be {:?}", target.shape()));
    }
    let sigma_rel: f64 = width.parse().map_err(|_| format!("invalid noise width `{width}`"))?;
    if !(0.0..1.0).contains(&sigma_rel) {
        return Err(format!("noise width must lie in [0, 1), got {sigma_rel}"));
    }
    Ok(NoiseArg { target, sigma_rel })
}

#[derive(Debug, Args, Serialize)]
pub struct FringeArgs {
    #[command(flatten)]
    pub spin: SpinArgs,
    #[command(flatten)]
    pub drive: DriveArgs,
    #[command(flatten)]
    pub noise: NoiseArgs,
    /// Largest |θ|, in units of π/J.
    #[arg(long, default_value_t = 1.0)]
    pub theta_max: f64,
    #[arg(long, default_value_t = 201)]
    pub n_theta: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub spin: SpinArgs,
    #[command(flatten)]
    pub drive: DriveArgs,
    #[command(flatten)]
    pub noise: NoiseArgs,
    /// Frequency oversampling relative to the bin width.
    #[arg(long, default_value_t = 4)]
    pub oversample: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EigenTrace {
    Gap,
    Pop,
    Phase,
}

#[derive(Debug, Args, Serialize)]
pub struct EigenArgs {
    #[command(flatten)]
    pub spin: SpinArgs,
    #[command(flatten)]
    pub drive: DriveArgs,
    #[arg(long, default_value_t = 1.0)]
    pub r: f64,
    #[arg(long, value_enum)]
    pub trace: EigenTrace,
    #[arg(long, default_value_t = 25.0)]
    pub tau_end: f64,
    #[arg(long, default_value_t = 0.01)]
    pub sample_dtau: f64,
    /// Keep every n-th level in phase profiles.
    #[arg(long, default_value_t = 1)]
    pub every: usize,
}

#[derive(Debug, Clone, Copy, Args, Serialize)]
pub struct QGridArgs {
    #[arg(long, default_value_t = 201)]
    pub n_alpha: usize,
    #[arg(long, default_value_t = 101)]
    pub n_beta: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct QfuncArgs {
    #[command(flatten)]
    pub spin: SpinArgs,
    #[command(flatten)]
    pub drive: DriveArgs,
    #[arg(long, default_value_t = 1.0)]
    pub r: f64,
    #[arg(long, default_value_t = 0.0)]
    pub tau: f64,
    /// Use the k-th highest eigenstate of h(τ) instead of the evolved state.
    #[arg(long)]
    pub eigen: Option<usize>,
    #[command(flatten)]
    pub grid: QGridArgs,
}

/// A failed run, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{0}")]
    Io(String),
}

impl Failure {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        Failure::Io(format!("{}: {e}", path.display()))
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Failure::Usage(_) => "usage",
            Failure::Core(Error::Infeasible { .. }) => "infeasible",
            Failure::Core(e) if e.is_numerical() => "numerical",
            Failure::Core(_) => "usage",
            Failure::Io(_) => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "usage" => 2,
            "numerical" => 3,
            "infeasible" => 4,
            _ => 1,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({ "error": self.kind(), "exit_code": self.exit_code(), "message": self.to_string() })
    }
}

/// Runs a parsed command line and writes its manifest.
pub fn run(cli: &Cli) -> Result<(), Failure> {
    if let Some(n) = cli.global.threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be positive".into()));
        }
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let mut sink = Sink::new(&cli.global.out_dir, cli.global.format)?;
    let result = commands::dispatch(cli, &mut sink);
    let manifest = json!({
        "tool": "spincat",
        "version": spincat_core::VERSION,
        "seed": cli.global.seed,
        "config": cli,
        "outputs": sink.written(),
        "status": match &result { Ok(()) => json!("ok"), Err(e) => e.to_json() },
    });
    sink.json("manifest", &manifest)?;
    result
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failures_map_to_exit_codes() {
        assert_eq!(Failure::Usage("x".into()).exit_code(), 2);
        assert_eq!(Failure::Core(Error::InvalidSpin(-1.0)).exit_code(), 2);
        assert_eq!(Failure::Core(Error::NoLocalMax).exit_code(), 3);
        assert_eq!(
            Failure::Core(Error::TooManyFailedTrials {
                failed: 20,
                trials: 250
            })
            .exit_code(),
            3
        );
        assert_eq!(
            Failure::Core(Error::Infeasible { threshold_over_pi: 0.4 }).exit_code(),
            4
        );
        let v = Failure::Core(Error::NoLocalMax).to_json();
        assert_eq!(v["error"], "numerical");
        assert_eq!(v["exit_code"], 3);
    }

    #[test]
    fn noise_literals() {
        use spincat_core::interferometry::NoiseTarget;
        let n = parse_noise("spin:gauss:0.05").unwrap();
        assert_eq!(n.target, NoiseTarget::SpinNumber);
        assert_eq!(n.sigma_rel, 0.05);
        assert_eq!(
            parse_noise("lambda:uniform:0.1").unwrap().target,
            NoiseTarget::NonlinearEnergy
        );
        assert!(parse_noise("omega:gauss:0.1").is_err());
        assert!(parse_noise("spin:gauss").is_err());
        assert!(parse_noise("spin:gauss:1.5").is_err());
    }

    #[test]
    fn spin_accepts_decimals_fractions_and_counts() {
        assert_eq!(parse_spin("74.5").unwrap().twice_j(), 149);
        assert_eq!(parse_spin("149/2").unwrap().twice_j(), 149);
        assert!(parse_spin("1.3").is_err());
        let cli = Cli::try_parse_from(["spincat", "eigen", "--Nbar", "149", "--trace", "pop"]).unwrap();
        let Command::Eigen(a) = cli.command else { panic!() };
        assert_eq!(a.spin.spin().twice_j(), 149);
        assert!(Cli::try_parse_from(["spincat", "eigen", "--J", "2", "--N", "4", "--trace", "pop"]).is_err());
    }
}
