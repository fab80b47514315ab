//! Runs a spec and writes its traces, summary and manifest.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use varchen::problems::FiniteSumProblem;
use varchen::{run, OptimizerConfig, RunError, RunTrace};

use crate::error::CliError;
use crate::spec::{ExperimentSpec, ProblemSpec};

pub const SUMMARY_CSV_HEADER: &str =
    "run,method,seed,status,epochs,iterations,flushes,final_full_loss,final_full_grad_norm,final_val_metric,min_lambda_k,max_Lambda_k";

/// CLI flags as given, recorded verbatim in the manifest.
#[derive(Debug, Clone, Serialize)]
pub struct Flags {
    pub command: &'static str,
    pub spec: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub no_timing: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool: String,
    pub git_describe: String,
    pub flags: Flags,
    pub spec_file: PathBuf,
    pub spec_sha256: String,
    pub output_dir: PathBuf,
    /// Where `output_dir` came from: `flag`, `spec`, `env` or `default`.
    pub output_source: &'static str,
    pub jobs: usize,
    pub problem: ProblemSpec,
    pub runs: Vec<RunRecord>,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub name: String,
    pub optimizer_index: usize,
    pub method: String,
    pub seed: u64,
    /// SHA-256 of the resolved config as compact JSON.
    pub config_sha256: String,
    pub config: OptimizerConfig,
    pub trace_csv: String,
    pub epoch_csv: String,
    /// `ok` or `diverged`.
    pub status: &'static str,
    pub diagnostic: Option<String>,
    pub iterations: usize,
    pub flushes: usize,
    pub final_full_loss: Option<f64>,
    pub final_full_grad_norm: Option<f64>,
    pub elapsed_ms: f64,
    #[serde(skip)]
    summary: SummaryRow,
}

#[derive(Debug, Clone, Default)]
struct SummaryRow {
    epochs: usize,
    val: Option<f64>,
    min_lo: f64,
    max_hi: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn config_hash(config: &OptimizerConfig) -> String {
    sha256_hex(&serde_json::to_vec(config).expect("config serializes"))
}

/// Creates `dir` and confirms a file can be written there.
pub fn ensure_writable(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    let probe = dir.join(".varchen-write-probe");
    fs::write(&probe, b"").map_err(CliError::io(&probe))?;
    fs::remove_file(&probe).map_err(CliError::io(&probe))
}

struct Job {
    index: usize,
    config: OptimizerConfig,
}

impl Job {
    fn name(&self) -> String {
        format!("{:02}-{}-seed{}", self.index, self.config.method, self.config.seed)
    }
}

pub struct Plan {
    jobs: Vec<Job>,
}

impl Plan {
    /// Expands each optimizer over the seeds. `seed_override` replaces the list.
    pub fn new(spec: &ExperimentSpec, seed_override: Option<u64>, no_timing: bool) -> Self {
        let seeds: Vec<Option<u64>> = match seed_override {
            Some(s) => vec![Some(s)],
            None if spec.seeds.is_empty() => vec![None],
            None => spec.seeds.iter().copied().map(Some).collect(),
        };
        let mut jobs = Vec::new();
        for (index, base) in spec.optimizers.iter().enumerate() {
            for seed in &seeds {
                let mut config = base.clone();
                if let Some(s) = seed {
                    config.seed = *s;
                }
                if no_timing {
                    config.timing = false;
                }
                jobs.push(Job { index, config });
            }
        }
        Self { jobs }
    }
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
    let file = File::create(path).map_err(CliError::io(path))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|()| w.flush()).map_err(CliError::io(path))
}

fn execute(job: &Job, problem: &dyn FiniteSumProblem, out: &Path) -> Result<RunRecord, CliError> {
    let start = Instant::now();
    let result = run(problem, &job.config);
    let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    let (trace, diagnostic): (&RunTrace, Option<String>) = match &result {
        Ok(t) => (t, None),
        Err(e @ RunError::Diverged { trace, .. }) => (trace, Some(e.to_string())),
        Err(RunError::Config(e)) => return Err(CliError::Config(format!("{}: {e}", job.name()))),
    };
    let name = job.name();
    let trace_csv = format!("{name}.trace.csv");
    let epoch_csv = format!("{name}.epochs.csv");
    write_file(&out.join(&trace_csv), |w| trace.write_iter_csv(w, job.config.timing))?;
    write_file(&out.join(&epoch_csv), |w| trace.write_epoch_csv(w))?;
    let last = trace.final_epoch();
    Ok(RunRecord {
        name,
        optimizer_index: job.index,
        method: job.config.method.to_string(),
        seed: job.config.seed,
        config_sha256: config_hash(&job.config),
        config: job.config.clone(),
        trace_csv,
        epoch_csv,
        status: if diagnostic.is_some() { "diverged" } else { "ok" },
        diagnostic,
        iterations: trace.iters.len(),
        flushes: trace.flush_count(),
        final_full_loss: last.map(|e| e.full_loss),
        final_full_grad_norm: last.map(|e| e.full_grad_norm),
        elapsed_ms,
        summary: SummaryRow {
            epochs: last.map_or(0, |e| e.epoch),
            val: last.and_then(|e| e.val_metric),
            min_lo: trace.min_lower_bound(),
            max_hi: trace.max_upper_bound(),
        },
    })
}

fn write_summary(path: &Path, runs: &[RunRecord]) -> Result<(), CliError> {
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    write_file(path, |w| {
        writeln!(w, "{SUMMARY_CSV_HEADER}")?;
        for r in runs {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.name,
                r.method,
                r.seed,
                r.status,
                r.summary.epochs,
                r.iterations,
                r.flushes,
                opt(r.final_full_loss),
                opt(r.final_full_grad_norm),
                opt(r.summary.val),
                r.summary.min_lo,
                r.summary.max_hi,
            )?;
        }
        Ok(())
    })
}

pub struct Outcome {
    pub manifest: Manifest,
}

impl Outcome {
    /// Exit status: any divergence turns the whole run into a failure.
    pub fn into_result(self) -> Result<Manifest, CliError> {
        let diverged: Vec<String> = self
            .manifest
            .runs
            .iter()
            .filter_map(|r| r.diagnostic.as_ref().map(|d| format!("{}: {d}", r.name)))
            .collect();
        if diverged.is_empty() {
            Ok(self.manifest)
        } else {
            Err(CliError::Diverged(diverged.join("\n")))
        }
    }
}

pub struct RunRequest<'a> {
    pub spec: &'a ExperimentSpec,
    pub spec_file: &'a Path,
    pub spec_bytes: &'a [u8],
    pub out: PathBuf,
    pub output_source: &'static str,
    pub jobs: usize,
    pub flags: Flags,
}

pub fn run_experiment(req: RunRequest<'_>) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let plan = Plan::new(req.spec, req.flags.seed, req.flags.no_timing);
    ensure_writable(&req.out)?;
    let problem = req.spec.problem.build()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(req.jobs)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {} worker threads: {e}", req.jobs)))?;
    let out = req.out.as_path();
    let problem: &dyn FiniteSumProblem = problem.as_ref();
    let runs = pool.install(|| {
        plan.jobs.par_iter().map(|job| execute(job, problem, out)).collect::<Result<Vec<_>, _>>()
    })?;
    write_summary(&out.join("summary.csv"), &runs)?;
    let manifest = Manifest {
        schema_version: 1,
        tool: format!("varchen {}", env!("CARGO_PKG_VERSION")),
        git_describe: env!("VARCHEN_GIT_DESCRIBE").to_string(),
        flags: req.flags,
        spec_file: req.spec_file.to_path_buf(),
        spec_sha256: sha256_hex(req.spec_bytes),
        output_dir: req.out.clone(),
        output_source: req.output_source,
        jobs: req.jobs,
        problem: req.spec.problem.clone(),
        runs,
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    let path = out.join("manifest.json");
    write_file(&path, |w| {
        serde_json::to_writer_pretty(&mut *w, &manifest)?;
        writeln!(w)
    })?;
    Ok(Outcome { manifest })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    #[test]
    fn plan_expands_seeds() {
        let spec = ExperimentSpec::parse(
            "seeds = [3, 4, 5]\n[problem]\nkind = \"quadratic\"\ndiag = [1.0, 2.0]\n[[optimizer]]\n[[optimizer]]\nmethod = \"sgd\"\n",
            "t",
        )
        .unwrap();
        let plan = Plan::new(&spec, None, false);
        assert_eq!(plan.jobs.len(), 6);
        assert_eq!(plan.jobs[4].name(), "01-sgd-seed4");
        let plan = Plan::new(&spec, Some(9), true);
        assert_eq!(plan.jobs.len(), 2);
        assert!(plan.jobs.iter().all(|j| j.config.seed == 9 && !j.config.timing));
    }
}
