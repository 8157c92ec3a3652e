//! `qflow`: runs the identity, stationary-phase and k-sweep suites and
//! writes CSV, JSON summaries and optional SVG plots.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use qflow_core::harness::{
    emit_outputs, run_identity_suite, run_kernel_sweep, run_schrodinger_check,
    run_stationary_phase_suite, run_trace_sweep, run_unitarity_sweep, Scenario, SuiteOutcome,
};

#[derive(Parser, Debug)]
#[command(
    name = "qflow",
    version,
    about = "Scaling checks for quantized linear Hamiltonian flows"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct Common {
    /// Scenario file (.toml or .json) or the name of a built-in scenario.
    #[arg(long, global = true)]
    scenario: Option<String>,
    /// Seed for the sampled suites; overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(
        long,
        global = true,
        env = "QFLOW_OUT_DIR",
        default_value = "qflow-out"
    )]
    out: PathBuf,
    /// Worker threads for per-k tasks.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Also write SVG plots of the fits.
    #[arg(long, global = true)]
    svg: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Algebraic identities on seeded random symplectic matrices.
    Identities {
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
    /// Model kernel against the leading prediction (default: hyperbolic-kernel).
    KernelSweep,
    /// Unitarity defect per level (default: hyperbolic-unitarity-unitarized).
    UnitaritySweep,
    /// Localized trace against the fixed-point formula (default: rotation-trace).
    TraceSweep,
    /// Schrödinger-equation residual (default: hyperbolic-schrodinger).
    SchrodingerCheck,
    /// Stationary-phase checks and Gaussian reductions.
    StationaryPhase {
        #[arg(long, default_value_t = 500)]
        samples: usize,
    },
    /// List the built-in scenarios.
    Scenarios,
}

const DEFAULT_SEED: u64 = 20240601;

fn load_scenario(
    arg: Option<&str>,
    default: &str,
    seed: Option<u64>,
) -> qflow_core::Result<Scenario> {
    let name = arg.unwrap_or(default);
    let path = Path::new(name);
    let mut sc = if path.exists() {
        Scenario::from_path(path)?
    } else {
        Scenario::builtin(name)?
    };
    if let Some(s) = seed {
        sc.seed = s;
    }
    Ok(sc)
}

fn run(cli: &Cli) -> qflow_core::Result<Option<SuiteOutcome>> {
    let c = &cli.common;
    let seed = c.seed.unwrap_or(DEFAULT_SEED);
    let sc = |default| load_scenario(c.scenario.as_deref(), default, c.seed);
    Ok(Some(match &cli.command {
        Command::Identities { samples } => run_identity_suite(seed, *samples)?,
        Command::StationaryPhase { samples } => run_stationary_phase_suite(seed, *samples)?,
        Command::KernelSweep => run_kernel_sweep(&sc("hyperbolic-kernel")?)?,
        Command::UnitaritySweep => run_unitarity_sweep(&sc("hyperbolic-unitarity-unitarized")?)?,
        Command::TraceSweep => run_trace_sweep(&sc("rotation-trace")?)?,
        Command::SchrodingerCheck => run_schrodinger_check(&sc("hyperbolic-schrodinger")?)?,
        Command::Scenarios => {
            for name in Scenario::builtin_names() {
                println!("{name}");
            }
            return Ok(None);
        }
    }))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.common.jobs == 0 {
        eprintln!("error: --jobs must be at least 1");
        return ExitCode::from(2);
    }
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.common.jobs)
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(2);
        }
    };
    let start = Instant::now();
    let outcome = match pool.install(|| run(&cli)) {
        Ok(Some(o)) => o,
        Ok(None) => return ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    for check in &outcome.checks {
        println!("{}", check.line());
    }
    let files = match emit_outputs(&cli.common.out, &outcome, cli.common.svg) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    for f in files {
        eprintln!("wrote {}", f.display());
    }
    eprintln!(
        "{} {} in {:.2?}",
        outcome.suite,
        outcome.scenario,
        start.elapsed()
    );
    if outcome.passed() {
        println!("PASS {}", outcome.suite);
        ExitCode::SUCCESS
    } else {
        println!(
            "FAIL {} ({} gated records)",
            outcome.suite,
            outcome.gate_failures()
        );
        ExitCode::from(1)
    }
}
