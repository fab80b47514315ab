//! `varchen`: run optimizer experiments from a spec file and check the
//! eigenvalue bounds against dense linear algebra.

mod error;
mod experiment;
mod spec;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use varchen::verify::{self, SuiteReport, VerifyOptions};

use crate::error::CliError;
use crate::experiment::{run_experiment, Flags, RunRequest};
use crate::spec::{help_config, ExperimentSpec};

const OUT_ENV: &str = "VARCHEN_OUT_DIR";
const DEFAULT_OUT: &str = "varchen-out";

#[derive(Parser, Debug)]
#[command(name = "varchen", version, about = "Variance-reduced damped L-BFGS experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,

    /// Print the spec file schema with defaults and exit
    #[arg(long)]
    help_config: bool,

    /// Maximum runs (or verification suites) executed concurrently
    #[arg(long, global = true, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    jobs: Option<u64>,

    /// Override every seed in the spec (or the verification seed)
    #[arg(long, global = true, value_name = "S")]
    seed: Option<u64>,

    /// Output directory. Without it the spec's `output` is used, then
    /// $VARCHEN_OUT_DIR, then ./varchen-out
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every optimizer in a spec file over its seeds
    Run {
        /// TOML experiment spec
        spec: PathBuf,

        /// Write wall_ms as 0 so repeated runs give identical files
        #[arg(long)]
        no_timing: bool,
    },
    /// Check bound containment, update equivalence, curvature and gradients
    Verify {
        /// Shrink the checked bounds by this factor (a fault for testing the checker)
        #[arg(long, hide = true, value_name = "F")]
        inject_bound_perturbation: Option<f64>,
    },
}

fn jobs(requested: Option<u64>) -> usize {
    requested.map_or_else(|| std::thread::available_parallelism().map_or(1, usize::from), |j| j as usize)
}

fn cmd_run(cli: &Cli, spec_path: &PathBuf, no_timing: bool) -> Result<(), CliError> {
    let bytes = std::fs::read(spec_path).map_err(CliError::io(spec_path))?;
    let spec = ExperimentSpec::load(spec_path)?;
    let env_out = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
    let (out, output_source) = match (&cli.out, &spec.output, env_out) {
        (Some(dir), _, _) => (dir.clone(), "flag"),
        (None, Some(dir), _) => (dir.clone(), "spec"),
        (None, None, Some(dir)) => (dir, "env"),
        (None, None, None) => (PathBuf::from(DEFAULT_OUT), "default"),
    };
    let flags = Flags {
        command: "run",
        spec: Some(spec_path.clone()),
        jobs: cli.jobs.map(|j| j as usize),
        seed: cli.seed,
        out: cli.out.clone(),
        no_timing,
    };
    let outcome = run_experiment(RunRequest {
        spec: &spec,
        spec_file: spec_path,
        spec_bytes: &bytes,
        out: out.clone(),
        output_source,
        jobs: jobs(cli.jobs),
        flags,
    })?;
    for r in &outcome.manifest.runs {
        let loss = r.final_full_loss.map_or("-".into(), |v| format!("{v:.6e}"));
        println!("{:<28} {:<8} loss {loss} flushes {}", r.name, r.status, r.flushes);
    }
    println!("wrote {} runs to {}", outcome.manifest.runs.len(), out.display());
    outcome.into_result().map(|_| ())
}

fn cmd_verify(cli: &Cli, perturbation: Option<f64>) -> Result<(), CliError> {
    let mut opts = VerifyOptions::default();
    if let Some(s) = cli.seed {
        opts.seed = s;
    }
    if let Some(f) = perturbation {
        if !(f > 0.0 && f.is_finite()) {
            return Err(CliError::Config(format!("perturbation factor must be positive, got {f}")));
        }
        opts.bound_scale = f;
    }
    println!(
        "verify: seed {:#x}, tau in [{:e}, {:e}], {} containment, {} single-update, {} equivalence, {} curvature cases, {} points per problem",
        opts.seed,
        opts.tau_range.0,
        opts.tau_range.1,
        opts.containment_cases,
        opts.single_update_cases,
        opts.equivalence_cases,
        opts.curvature_cases,
        opts.gradient_points,
    );
    let suites: [fn(&VerifyOptions) -> SuiteReport; 5] = [
        verify::containment_suite,
        verify::single_update_suite,
        verify::equivalence_suite,
        verify::curvature_suite,
        verify::gradient_suite,
    ];
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs(cli.jobs))
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker threads: {e}")))?;
    let start = Instant::now();
    let reports: Vec<SuiteReport> = pool.install(|| suites.par_iter().map(|s| s(&opts)).collect());
    for r in &reports {
        println!("{r}");
    }
    println!("total {:.2?}", start.elapsed());
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed()).map(|r| r.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::VerifyFailed(failed.join(", ")))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.help_config {
        print!("{}", help_config());
        return ExitCode::SUCCESS;
    }
    let result = match &cli.command {
        Some(Command::Run { spec, no_timing }) => cmd_run(&cli, spec, *no_timing),
        Some(Command::Verify { inject_bound_perturbation }) => cmd_verify(&cli, *inject_bound_perturbation),
        None => {
            eprintln!("varchen: no command given; see `varchen --help`");
            return ExitCode::from(2);
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("varchen: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
