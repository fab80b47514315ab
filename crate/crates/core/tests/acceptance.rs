//! Acceptance criteria. Runs without the libtest harness so that every
//! criterion prints one line, pass or fail, and the process exits nonzero
//! if any fails.

use std::time::{Duration, Instant};

use varchen::linalg::rel_err;
use varchen::memory::{ClampMode, LbfgsMemory, ScalingRule};
use varchen::optimizer::{run, step_size, Method, OptimizerConfig, RunError, Schedule, ScheduleConstants};
use varchen::problems::{Dataset, FiniteSumProblem, LogisticRegression, SyntheticIllConditioned};
use varchen::spectrum::{gate, memory_bounds, LgMode, MonitorConfig};
use varchen::trace::RunTrace;
use varchen::verify::{self, SuiteReport, VerifyOptions};
use varchen::vr::{begin_epoch, corrected_gradient};

type Outcome = Result<String, String>;
type Check = (&'static str, fn() -> Outcome);

fn suite(report: SuiteReport, budget: Duration) -> Outcome {
    let line = format!("{} cases, worst excess {:+.2e}, {:.2?}", report.cases, report.worst_excess, report.elapsed);
    if !report.passed() {
        return Err(format!("{} of {line}; {}", report.failures, report.first_failure.unwrap_or_default()));
    }
    if report.elapsed > budget {
        return Err(format!("over the {budget:?} budget: {line}"));
    }
    Ok(line)
}

fn c1_containment() -> Outcome {
    suite(verify::containment_suite(&VerifyOptions::default()), Duration::from_secs(30))
}

fn c2_single_update() -> Outcome {
    let (lo, hi) = varchen::spectrum::single_update_bounds(1.0, 1.0, 1.0).map_err(|e| e.to_string())?;
    if (lo, hi) != (0.5, 1.5) {
        return Err(format!("hand value gave ({lo}, {hi}), expected (0.5, 1.5)"));
    }
    suite(verify::single_update_suite(&VerifyOptions::default()), Duration::from_secs(30)).map(|s| format!("hand value exact; {s}"))
}

fn c3_equivalence() -> Outcome {
    suite(verify::equivalence_suite(&VerifyOptions::default()), Duration::from_secs(30))
}

fn c4_curvature() -> Outcome {
    suite(verify::curvature_suite(&VerifyOptions::default()), Duration::from_secs(30))
}

fn c5_svrg() -> Outcome {
    let p = LogisticRegression::new(Dataset::synthetic_binary(6, 4, 1.0, 21), 0.05).map_err(|e| e.to_string())?;
    let anchor_x = [0.4, -0.3, 0.2, 1.1];
    let anchor = begin_epoch(&p, &anchor_x).map_err(|e| e.to_string())?;
    let mut worst_at_anchor = 0.0f64;
    for batch in [[0, 1], [2, 5], [3, 4]] {
        let g = corrected_gradient(&p, &anchor_x, &anchor, &batch).map_err(|e| e.to_string())?;
        let d = g.iter().zip(&anchor.full_grad).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst_at_anchor = worst_at_anchor.max(d);
    }
    if worst_at_anchor > 1e-14 {
        return Err(format!("at the anchor g̃ differs from ∇f by {worst_at_anchor:e}"));
    }
    let x = [-0.7, 0.5, 0.9, -0.2];
    let mut mean = [0.0; 4];
    let mut count = 0.0;
    for i in 0..6 {
        for j in i + 1..6 {
            let g = corrected_gradient(&p, &x, &anchor, &[i, j]).map_err(|e| e.to_string())?;
            mean.iter_mut().zip(&g).for_each(|(m, v)| *m += v);
            count += 1.0;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let err = rel_err(&mean, &p.full_grad(&x));
    if err > 1e-12 {
        return Err(format!("mean over all 15 batches off by {err:e} relative"));
    }
    Ok(format!("anchor max |g̃ − ∇f| = {worst_at_anchor:e}; 15-batch mean relative error {err:.1e}"))
}

/// The relaxed chained step, written out again here so the engineered
/// stream does not rely on the library to describe itself.
fn step(gamma: f64, l: f64, mu1: f64, mu2: f64) -> (f64, f64) {
    let lower = (1.0 / l).min(mu1 / (1.0 + mu1 / gamma * l * l));
    let upper = 1.0 / gamma + (mu2 * l * l / (gamma * gamma) - mu1 / (1.0 + mu2 / gamma * l * l)).max(0.0);
    (lower, upper)
}

fn chain(lgs: &[f64], tau: f64, eta: f64) -> (f64, f64) {
    let lg = lgs.iter().copied().fold(0.0, f64::max);
    lgs.iter().fold((tau, tau), |(a, b), _| step(eta / tau, lg + 1.0 / tau, a, b))
}

fn c6_flush() -> Outcome {
    let (eta, tau) = (0.25, 1.0);
    let e = |i: usize| {
        let mut v = vec![0.0; 3];
        v[i] = 1.0;
        v
    };
    // one steep pair followed by four unit-curvature pairs, capacity 3
    let stream: Vec<(Vec<f64>, Vec<f64>)> = vec![
        (e(0), e(0).iter().map(|v| 10.0 * v).collect()),
        (e(1), e(1)),
        (e(2), e(2)),
        (e(0), e(0)),
        (e(1), e(1)),
    ];
    let steep_pair = chain(&[10.0, 1.0], tau, eta).1;
    let benign_worst = [chain(&[10.0], tau, eta).1, chain(&[1.0; 3], tau, eta).1].into_iter().fold(0.0, f64::max);
    if benign_worst * 2.0 >= steep_pair {
        return Err(format!("stream does not separate: {benign_worst:e} vs {steep_pair:e}"));
    }
    let lambda_max = (benign_worst * steep_pair).sqrt();
    let monitor = MonitorConfig { lambda_min_limit: 1e-6, lambda_max_limit: lambda_max, lg_mode: LgMode::RunningMax };
    let rule = ScalingRule::Clamped { lo: 1e-4, hi: 1e4, mode: ClampMode::H0Scalar };
    let mut memory = LbfgsMemory::new(3, eta, rule).map_err(|e| e.to_string())?;
    let mut flushes = 0;
    for (k, (s, y)) in stream.iter().enumerate() {
        memory.push(memory.damp(s, y).map_err(|e| e.to_string())?);
        let out = gate(&mut memory, &monitor);
        if out.flushed {
            flushes += 1;
            if memory.len() != 1 || memory.newest().map(|p| &p.s) != Some(s) {
                return Err(format!("after the flush at step {k} memory holds {} pairs", memory.len()));
            }
            if out.applied != memory_bounds(&memory, monitor.lg_mode) {
                return Err("logged bounds do not describe the flushed operator".into());
            }
            if out.applied.lambda_hi > lambda_max || out.before.lambda_hi <= lambda_max {
                return Err(format!("flush at step {k} with before {:e}, after {:e}", out.before.lambda_hi, out.applied.lambda_hi));
            }
            let expect = chain(&[1.0], tau, eta);
            if rel_err(&[out.applied.lambda_lo, out.applied.lambda_hi], &[expect.0, expect.1]) > 1e-14 {
                return Err(format!("recomputed bounds {:?} vs hand chain {expect:?}", (out.applied.lambda_lo, out.applied.lambda_hi)));
            }
        }
    }
    if flushes != 1 {
        return Err(format!("{flushes} flushes, expected exactly 1"));
    }
    // the optimizer logs the same thing: every flagged step used one pair
    let t = c9_run(0, Method::Varchen).map_err(|e| e.to_string())?;
    let flagged: Vec<_> = t.iters.iter().filter(|r| r.flush).collect();
    if flagged.is_empty() || flagged.iter().any(|r| r.memory_len != 1) {
        return Err(format!("{} flagged optimizer steps, some with memory != 1", flagged.len()));
    }
    Ok(format!("1 flush at step 1 (Λ {steep_pair:.3e} > λ_max {lambda_max:.3e}); {} optimizer flushes all left 1 pair", flagged.len()))
}

fn c7_problem() -> LogisticRegression {
    LogisticRegression::new(Dataset::synthetic_binary(200, 20, 0.1, 7), 0.01).expect("binary labels")
}

fn c7_config(problem: &LogisticRegression, schedule: Schedule) -> OptimizerConfig {
    OptimizerConfig {
        method: Method::Varchen,
        memory: 1,
        eta: 0.9,
        lambda_min: 8.0,
        lambda_max: 800.0,
        gamma_lo: 10.0,
        gamma_hi: 500.0,
        schedule,
        lipschitz: problem.lipschitz(),
        epochs: 30,
        batch_size: 10,
        seed: 1,
        timing: false,
        ..OptimizerConfig::default()
    }
}

fn c7_harmonic() -> Outcome {
    let start = Instant::now();
    let p = c7_problem();
    let t = run(&p, &c7_config(&p, Schedule::Harmonic { c: None })).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let g: Vec<f64> = t.epochs.iter().map(|e| e.full_grad_norm).collect();
    let last = *g.last().expect("epochs");
    if t.epochs.len() != 31 || last > 1e-3 {
        return Err(format!("full grad norm {last:e} after {} epochs", t.epochs.len() - 1));
    }
    let tail = &g[g.len() - 5..];
    if tail.windows(2).any(|w| w[1] > 1.1 * w[0]) {
        return Err(format!("trailing grad norms not non-increasing within 10%: {tail:?}"));
    }
    if elapsed > Duration::from_secs(10) {
        return Err(format!("took {elapsed:?}"));
    }
    let reached = g.iter().position(|&v| v <= 1e-3).expect("checked above");
    Ok(format!("‖∇f‖ {:.2e} → {last:.2e}, ≤ 1e-3 from epoch {reached}, {elapsed:.2?}", g[0]))
}

fn c8_power() -> Outcome {
    let p = c7_problem();
    let beta = 0.75;
    let cfg = c7_config(&p, Schedule::Power { beta });
    let t = run(&p, &cfg).map_err(|e| e.to_string())?;
    let sq: Vec<f64> = t.epochs[1..].iter().map(|e| e.full_grad_norm.powi(2)).collect();
    let avg: Vec<f64> = (1..=sq.len()).map(|n| sq[..n].iter().sum::<f64>() / n as f64).collect();
    // avg[i] covers epochs 1..=i+1
    if let Some(i) = (3..avg.len()).find(|&i| !(avg[i] < avg[i - 1])) {
        return Err(format!("running average not decreasing at epoch {}: {:e} → {:e}", i + 1, avg[i - 1], avg[i]));
    }
    let l = cfg.lipschitz.expect("configured");
    let constants = ScheduleConstants { lambda_min: cfg.lambda_min, lambda_max: cfg.lambda_max, lipschitz: l };
    let mut worst = 0.0f64;
    for r in &t.iters {
        let k = r.k.max(1) as f64;
        let expect = 8.0 / (l * 800.0 * 800.0) * k.powf(-beta);
        worst = worst.max((r.alpha - expect).abs() / expect);
        worst = worst.max((step_size(&cfg.schedule, r.k, &constants) - expect).abs() / expect);
    }
    if worst > 1e-15 {
        return Err(format!("α_k off the formula by {worst:e} relative"));
    }
    Ok(format!("running mean of ‖∇f‖² {:.3e} → {:.3e}, strictly decreasing from epoch 4; α_k max rel err {worst:.1e}", avg[0], avg[avg.len() - 1]))
}

const C9_EPOCHS: usize = 30;

fn c9_run(seed: u64, method: Method) -> Result<RunTrace, RunError> {
    let p = SyntheticIllConditioned::new(10, 100, 1e4, 0.3, seed);
    let l = p.lipschitz_bound();
    let (eta, gamma_hi) = (0.25, 1.0);
    // upper bound of any single pair: τ_now = τᵢ = γ̄ and L_g = L
    let worst_single = step(eta / gamma_hi, l + 1.0 / gamma_hi, gamma_hi, gamma_hi).1;
    let cfg = OptimizerConfig {
        method,
        memory: 5,
        eta,
        lambda_min: 1e-6,
        lambda_max: 1.01 * worst_single,
        gamma_lo: 1e-4,
        gamma_hi,
        schedule: Schedule::Constant { alpha: 0.5 },
        lipschitz: Some(l),
        epochs: C9_EPOCHS,
        batch_size: 1,
        seed,
        timing: false,
        ..OptimizerConfig::default()
    };
    run(&p, &cfg)
}

fn c9_robustness() -> Outcome {
    let start = Instant::now();
    let mut wins = 0;
    let mut sd_exceeded = 0;
    let mut rows = Vec::new();
    for seed in 0..5 {
        let v = c9_run(seed, Method::Varchen).map_err(|e| format!("varchen seed {seed}: {e}"))?;
        let lambda_max = {
            let p = SyntheticIllConditioned::new(10, 100, 1e4, 0.3, seed);
            1.01 * step(0.25, p.lipschitz_bound() + 1.0, 1.0, 1.0).1
        };
        if v.max_upper_bound() > lambda_max {
            return Err(format!("seed {seed}: VARCHEN logged Λ_k = {:e} > λ_max = {lambda_max:e}", v.max_upper_bound()));
        }
        let (sd_loss, sd_hi) = match c9_run(seed, Method::SdlbfgsVr) {
            Ok(t) => (t.final_epoch().expect("epochs").full_loss, t.max_upper_bound()),
            Err(e) => (f64::INFINITY, e.partial_trace().map_or(f64::INFINITY, RunTrace::max_upper_bound)),
        };
        let v_loss = v.final_epoch().expect("epochs").full_loss;
        wins += usize::from(v_loss <= sd_loss);
        sd_exceeded += usize::from(sd_hi > lambda_max);
        rows.push(format!("{v_loss:.4e}/{sd_loss:.1e}"));
    }
    let elapsed = start.elapsed();
    let detail = format!("VARCHEN ≤ SdLBFGS-VR in {wins}/5 (final loss {}), SdLBFGS-VR Λ > λ_max in {sd_exceeded}/5, {elapsed:.2?}", rows.join(" "));
    if wins >= 4 && sd_exceeded >= 1 && elapsed <= Duration::from_secs(60) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn csv_bytes(t: &RunTrace) -> (Vec<u8>, Vec<u8>) {
    let (mut a, mut b) = (Vec::new(), Vec::new());
    t.write_iter_csv(&mut a, false).expect("in-memory write");
    t.write_epoch_csv(&mut b).expect("in-memory write");
    (a, b)
}

fn c10_determinism() -> Outcome {
    let p = LogisticRegression::new(Dataset::synthetic_binary(80, 6, 1.0, 3), 1e-3).map_err(|e| e.to_string())?;
    let mut bytes = 0;
    for method in [Method::Varchen, Method::SdlbfgsVr, Method::Svrg, Method::Sgd] {
        let cfg = OptimizerConfig {
            method,
            epochs: 4,
            batch_size: 7,
            seed: 99,
            schedule: Schedule::Constant { alpha: 0.2 },
            ..OptimizerConfig::default()
        };
        let a = csv_bytes(&run(&p, &cfg).map_err(|e| e.to_string())?);
        let b = csv_bytes(&run(&p, &cfg).map_err(|e| e.to_string())?);
        if a != b {
            return Err(format!("{method}: repeated run produced different CSV bytes"));
        }
        bytes += a.0.len() + a.1.len();
    }
    let s1 = c9_run(3, Method::SdlbfgsVr).map(|t| csv_bytes(&t));
    let s2 = c9_run(3, Method::SdlbfgsVr).map(|t| csv_bytes(&t));
    match (s1, s2) {
        (Ok(a), Ok(b)) if a == b => {}
        (Err(_), Err(_)) => {}
        _ => return Err("ill-conditioned run not reproducible".into()),
    }
    Ok(format!("4 methods × 2 runs byte-identical ({bytes} bytes per run set)"))
}

fn c11_gradients() -> Outcome {
    suite(verify::gradient_suite(&VerifyOptions::default()), Duration::from_secs(60))
        .map(|s| format!("{} problems; {s}", verify::shipped_problems().len()))
}

fn main() {
    let criteria: [Check; 11] = [
        ("bound containment", c1_containment),
        ("single-update containment", c2_single_update),
        ("two-loop equals dense", c3_equivalence),
        ("curvature condition", c4_curvature),
        ("SVRG correction", c5_svrg),
        ("flush policy", c6_flush),
        ("harmonic convergence", c7_harmonic),
        ("power schedule", c8_power),
        ("robustness vs SdLBFGS-VR", c9_robustness),
        ("determinism", c10_determinism),
        ("gradient checks", c11_gradients),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = check();
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("criterion {:>2} {tag} {name}: {detail}", i + 1);
        failed += usize::from(outcome.is_err());
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
