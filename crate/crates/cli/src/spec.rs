//! Experiment spec files.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use varchen::problems::{
    read_dataset, DataFormat, Dataset, FiniteSumProblem, LogisticRegression, Quadratic, ReadError, SigmoidSvm,
    SyntheticIllConditioned,
};
use varchen::OptimizerConfig;

use crate::error::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub problem: ProblemSpec,
    /// Every optimizer runs once per seed. Empty means each uses its own `seed`.
    #[serde(default)]
    pub seeds: Vec<u64>,
    pub output: Option<PathBuf>,
    #[serde(rename = "optimizer")]
    pub optimizers: Vec<OptimizerConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProblemSpec {
    Logistic {
        data: DataSpec,
        validation: Option<DataSpec>,
        #[serde(default)]
        l2: f64,
    },
    SigmoidSvm {
        data: DataSpec,
        validation: Option<DataSpec>,
    },
    Synthetic {
        n: usize,
        samples: usize,
        cond: f64,
        #[serde(default)]
        mix: f64,
        amplitude: Option<f64>,
        #[serde(default)]
        seed: u64,
    },
    Quadratic {
        diag: Vec<f64>,
        centers: Option<Vec<Vec<f64>>>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSpec {
    File {
        /// Relative paths are resolved against the spec file's directory.
        path: PathBuf,
        /// Inferred from the extension when absent (`.csv` is CSV, anything else LIBSVM).
        format: Option<DataFormat>,
        dim: Option<usize>,
    },
    Synthetic {
        samples: usize,
        dim: usize,
        #[serde(default = "one")]
        scale: f64,
        #[serde(default)]
        seed: u64,
    },
    SyntheticSparse {
        samples: usize,
        dim: usize,
        density: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn one() -> f64 {
    1.0
}

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

impl ExperimentSpec {
    pub fn parse(text: &str, source: &str) -> Result<Self, CliError> {
        let spec: Self = toml::from_str(text).map_err(|e| {
            let msg = e.message().trim_end().to_string();
            match e.span() {
                Some(span) => {
                    let (line, col) = line_col(text, span.start);
                    CliError::Parse(format!("{source}:{line}:{col}: {msg}"))
                }
                None => CliError::Parse(format!("{source}: {msg}")),
            }
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        let mut spec = Self::parse(&text, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new("."));
        spec.resolve_paths(base);
        Ok(spec)
    }

    /// Checks everything that can be checked without the data.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.optimizers.is_empty() {
            return Err(CliError::Config("at least one [[optimizer]] table is required".into()));
        }
        for (i, cfg) in self.optimizers.iter().enumerate() {
            cfg.validate().map_err(|e| CliError::Config(format!("optimizer {i} ({}): {e}", cfg.method)))?;
        }
        let unique: BTreeSet<_> = self.seeds.iter().collect();
        if unique.len() != self.seeds.len() {
            return Err(CliError::Config("seeds must be distinct".into()));
        }
        self.problem.validate()
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |d: &mut DataSpec| {
            if let DataSpec::File { path, .. } = d {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        match &mut self.problem {
            ProblemSpec::Logistic { data, validation, .. } | ProblemSpec::SigmoidSvm { data, validation } => {
                fix(data);
                validation.iter_mut().for_each(fix);
            }
            _ => {}
        }
        if let Some(out) = &mut self.output {
            if out.is_relative() {
                *out = base.join(&*out);
            }
        }
    }
}

impl ProblemSpec {
    fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(format!("problem: {m}")));
        match self {
            ProblemSpec::Synthetic { n, samples, cond, mix, amplitude, .. } => {
                if *n < 2 || *samples == 0 {
                    return bad(format!("synthetic needs n >= 2 and samples >= 1, got n = {n}, samples = {samples}"));
                }
                if !(*cond >= 1.0 && cond.is_finite()) {
                    return bad(format!("cond must be >= 1, got {cond}"));
                }
                if !(0.0..=1.0).contains(mix) {
                    return bad(format!("mix must lie in [0, 1], got {mix}"));
                }
                if amplitude.is_some_and(|a| !(a >= 0.0 && a.is_finite())) {
                    return bad("amplitude must be finite and >= 0".into());
                }
            }
            ProblemSpec::Quadratic { diag, centers } => {
                if diag.is_empty() || diag.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
                    return bad("quadratic diag must be nonempty and positive".into());
                }
                if let Some(c) = centers {
                    if c.is_empty() || c.iter().any(|c| c.len() != diag.len()) {
                        return bad(format!("every quadratic center needs {} entries", diag.len()));
                    }
                }
            }
            ProblemSpec::Logistic { l2, .. } if !(*l2 >= 0.0 && l2.is_finite()) => {
                return bad(format!("l2 must be >= 0, got {l2}"));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Box<dyn FiniteSumProblem>, CliError> {
        let invalid = |e: varchen::Error| CliError::Config(format!("problem: {e}"));
        Ok(match self {
            ProblemSpec::Logistic { data, validation, l2 } => {
                let mut p = LogisticRegression::new(data.load()?, *l2).map_err(invalid)?;
                if let Some(v) = validation {
                    p = p.with_validation(v.load()?).map_err(invalid)?;
                }
                Box::new(p)
            }
            ProblemSpec::SigmoidSvm { data, validation } => {
                let mut p = SigmoidSvm::new(data.load()?).map_err(invalid)?;
                if let Some(v) = validation {
                    p = p.with_validation(v.load()?).map_err(invalid)?;
                }
                Box::new(p)
            }
            ProblemSpec::Synthetic { n, samples, cond, mix, amplitude, seed } => Box::new(match amplitude {
                Some(a) => SyntheticIllConditioned::with_amplitude(*n, *samples, *cond, *mix, *a, *seed),
                None => SyntheticIllConditioned::new(*n, *samples, *cond, *mix, *seed),
            }),
            ProblemSpec::Quadratic { diag, centers } => Box::new(match centers {
                Some(c) => Quadratic::with_centers(diag.clone(), c.clone()),
                None => Quadratic::diagonal(diag.clone()),
            }),
        })
    }
}

impl DataSpec {
    pub fn load(&self) -> Result<Dataset, CliError> {
        match self {
            DataSpec::File { path, format, dim } => {
                let format = format.unwrap_or_else(|| match path.extension().and_then(|e| e.to_str()) {
                    Some(e) if e.eq_ignore_ascii_case("csv") => DataFormat::Csv,
                    _ => DataFormat::Libsvm,
                });
                read_dataset(path, format, *dim).map_err(|e| match e {
                    ReadError::Io(source) => CliError::Io { path: path.clone(), source },
                    ReadError::Parse(p) => CliError::Parse(p.to_string()),
                })
            }
            DataSpec::Synthetic { samples, dim, scale, seed } => {
                Ok(Dataset::synthetic_binary(*samples, *dim, *scale, *seed))
            }
            DataSpec::SyntheticSparse { samples, dim, density, seed } => {
                if !(0.0..=1.0).contains(density) {
                    return Err(CliError::Config(format!("density must lie in [0, 1], got {density}")));
                }
                Ok(Dataset::synthetic_sparse_binary(*samples, *dim, *density, *seed))
            }
        }
    }
}

/// Text printed by `--help-config`.
pub fn help_config() -> String {
    let d = OptimizerConfig::default();
    format!(
        r#"Experiment spec (TOML)

Top level
  seeds    = [u64, ...]   optional; every optimizer runs once per seed.
                          Empty or absent: each optimizer uses its own `seed`.
  output   = "dir"        optional; output directory (relative to the spec file)

[problem]                 exactly one; `kind` selects the objective
  kind = "logistic"       data = <data>, validation = <data> (optional), l2 = f64 (default 0)
  kind = "sigmoid-svm"    data = <data>, validation = <data> (optional)
  kind = "synthetic"      n = usize >= 2, samples = usize, cond = f64 >= 1,
                          mix = f64 in [0, 1] (default 0), amplitude = f64 (default 10), seed = u64
  kind = "quadratic"      diag = [f64, ...] (positive), centers = [[f64, ...], ...] (optional)

<data>                    inline table; `source` selects where samples come from
  {{ source = "file", path = "train.libsvm", format = "libsvm" | "csv", dim = usize }}
                          format defaults from the extension, dim from the data
  {{ source = "synthetic", samples = usize, dim = usize, scale = f64 (default 1), seed = u64 }}
  {{ source = "synthetic-sparse", samples = usize, dim = usize, density = f64, seed = u64 }}

[[optimizer]]             one table per configuration; every key is optional
  method             = "varchen" | "sdlbfgs-vr" | "svrg" | "sgd"    (default "{method}")
  memory             = usize >= 1, stored curvature pairs            (default {memory})
  eta                = f64 in (0, 1), damping constant               (default {eta})
  lambda_min         = f64 > 0, lower eigenvalue limit               (default {lambda_min:e})
  lambda_max         = f64, upper eigenvalue limit                   (default {lambda_max:e})
  gamma_lo, gamma_hi = f64, clamp range of the initial scaling       (default {gamma_lo:e}, {gamma_hi:e})
  clamp_mode         = "h0-scalar" | "b0-scalar"                     (default "h0-scalar")
  sdlbfgs_delta      = f64 > 0, scaling floor for sdlbfgs-vr         (default {delta:e})
  lg_mode            = {{ mode = "per-pair" }} | {{ mode = "running-max" }} | {{ mode = "fixed", value = f64 }}
                                                                     (default running-max)
  schedule           = {{ kind = "constant", alpha = f64 }}
                     | {{ kind = "harmonic", c = f64 }}               c optional, defaults to the cap
                     | {{ kind = "power", beta = f64 in (0.5, 1) }}
                                                                     (default constant, alpha = 0.1)
  lipschitz          = f64, L for the schedule constants             (default: estimated)
  epochs             = usize >= 1                                    (default {epochs})
  batch_size         = usize >= 1                                    (default {batch})
  sampling           = "without-replacement" | "with-replacement"    (default "without-replacement")
  seed               = u64                                           (default {seed})
  curvature_gradient = "raw" | "corrected"                           (default "raw")
  grad_tol           = f64 > 0, stop early below this full grad norm (default none)
  timing             = bool, record wall_ms in the trace             (default {timing})

Outputs, one pair per (optimizer, seed), named NN-METHOD-seedS:
  NN-METHOD-seedS.trace.csv    k,epoch,minibatch_loss,grad_norm,alpha,lambda_k,Lambda_k,flush,wall_ms
  NN-METHOD-seedS.epochs.csv   epoch,full_loss,full_grad_norm,val_metric
and summary.csv plus manifest.json for the whole spec.
"#,
        method = d.method,
        memory = d.memory,
        eta = d.eta,
        lambda_min = d.lambda_min,
        lambda_max = d.lambda_max,
        gamma_lo = d.gamma_lo,
        gamma_hi = d.gamma_hi,
        delta = d.sdlbfgs_delta,
        epochs = d.epochs,
        batch = d.batch_size,
        seed = d.seed,
        timing = d.timing,
    )
}
