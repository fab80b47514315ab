use proptest::prelude::*;

use varchen::linalg::{dot, norm, rel_err};
use varchen::memory::{ClampMode, LbfgsMemory, ScalingRule};
use varchen::optimizer::{run, Method, OptimizerConfig, RunError, Schedule};
use varchen::problems::{FiniteSumProblem, Quadratic, SyntheticIllConditioned};
use varchen::rng::SplitMix64;
use varchen::spectrum::{gate, memory_bounds, LgMode, MonitorConfig};
use varchen::vr::{BatchSampler, Sampling};

fn quadratic(n: usize, seed: u64) -> Quadratic {
    let mut rng = SplitMix64::new(seed);
    let diag = (0..n).map(|_| rng.log_uniform(0.5, 20.0)).collect();
    let centers = (0..4).map(|_| rng.normal_vec(n)).collect();
    Quadratic::with_centers(diag, centers)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // pairs taken from a quadratic with L_g fixed at its true constant
    #[test]
    fn direction_norm_within_bounds(seed in any::<u64>(), p in 1usize..6, eta in 0.05f64..0.95) {
        let q = quadratic(5, seed);
        let l = q.lipschitz().unwrap();
        let mut rng = SplitMix64::new(seed ^ 0xabc);
        let rule = ScalingRule::Clamped { lo: 1e-2, hi: 1e2, mode: ClampMode::H0Scalar };
        let mut mem = LbfgsMemory::new(p, eta, rule).unwrap();
        let mut x = rng.normal_vec(5);
        for _ in 0..p + 2 {
            let x_next: Vec<f64> = x.iter().map(|v| v + rng.normal()).collect();
            let s: Vec<f64> = x_next.iter().zip(&x).map(|(a, b)| a - b).collect();
            let gx = q.full_grad(&x);
            let y: Vec<f64> = q.full_grad(&x_next).iter().zip(&gx).map(|(a, b)| a - b).collect();
            let pair = mem.damp(&s, &y).unwrap();
            mem.push(pair);
            mem.update_initial_scaling(&s, &y);
            x = x_next;
        }
        let b = memory_bounds(&mem, LgMode::Fixed(l));
        let g = rng.normal_vec(5);
        let d = mem.direction(&g).unwrap();
        let gn = norm(&g);
        // d = −H g
        prop_assert!(norm(&d) <= b.lambda_hi * gn * (1.0 + 1e-8));
        prop_assert!(norm(&d) >= b.lambda_lo * gn * (1.0 - 1e-8));
        prop_assert!(dot(&g, &d) < 0.0);
    }

    #[test]
    fn flush_leaves_one_pair(seed in any::<u64>(), p in 2usize..6) {
        let mut rng = SplitMix64::new(seed);
        let mut mem = LbfgsMemory::new(p, 0.25, ScalingRule::default()).unwrap();
        let monitor = MonitorConfig { lambda_min_limit: 1e-6, lambda_max_limit: 10.0, lg_mode: LgMode::RunningMax };
        for _ in 0..2 * p {
            let s = rng.normal_vec(4);
            let y: Vec<f64> = s.iter().map(|v| v * rng.log_uniform(0.1, 100.0)).collect();
            mem.push(mem.damp(&s, &y).unwrap());
            let newest = mem.newest().cloned();
            let out = gate(&mut mem, &monitor);
            if out.flushed {
                prop_assert_eq!(mem.len(), 1);
                prop_assert_eq!(mem.newest().cloned(), newest);
                prop_assert_eq!(out.applied, memory_bounds(&mem, monitor.lg_mode));
            }
        }
    }
}

#[test]
fn classical_lbfgs_on_quadratics() {
    for (n, seed) in [(2, 1), (5, 2), (8, 3), (12, 4)] {
        let q = quadratic(n, seed);
        let cfg = OptimizerConfig {
            method: Method::SdlbfgsVr,
            memory: n,
            eta: 1e-3,
            sdlbfgs_delta: 1e-12,
            schedule: Schedule::Constant { alpha: 1.0 },
            batch_size: q.num_samples(),
            epochs: 5 * n,
            timing: false,
            ..OptimizerConfig::default()
        };
        let t = run(&q, &cfg).unwrap();
        let hit = t.iters.iter().position(|r| r.grad_norm < 1e-8);
        assert!(hit.is_some_and(|k| k < 5 * n), "n = {n}: {:?}", t.iters.iter().map(|r| r.grad_norm).collect::<Vec<_>>());
        assert!(rel_err(&t.final_x, &q.minimizer()) < 1e-8);
    }
}

#[test]
fn gradient_descent_diverges_where_varchen_converges() {
    let p = SyntheticIllConditioned::new(10, 50, 1e4, 0.0, 8);
    let gd = OptimizerConfig {
        method: Method::Sgd,
        schedule: Schedule::Constant { alpha: 1.0 },
        batch_size: p.num_samples(),
        epochs: 50,
        timing: false,
        ..OptimizerConfig::default()
    };
    assert!(matches!(run(&p, &gd), Err(RunError::Diverged { .. })));

    let l = p.lipschitz_bound();
    let vc = OptimizerConfig {
        method: Method::Varchen,
        memory: 5,
        eta: 0.25,
        lambda_min: 1e-6,
        gamma_lo: 1e-4,
        gamma_hi: 1.0,
        lambda_max: 1e9,
        lipschitz: Some(l),
        schedule: Schedule::Constant { alpha: 1.0 },
        batch_size: 5,
        epochs: 30,
        seed: 8,
        timing: false,
        ..OptimizerConfig::default()
    };
    let t = run(&p, &vc).unwrap();
    let (first, last) = (&t.epochs[0], t.final_epoch().unwrap());
    assert!(last.full_grad_norm < 1e-3 * first.full_grad_norm, "{} -> {}", first.full_grad_norm, last.full_grad_norm);
}

// every ordered m-tuple of indices is equally likely under replacement
#[test]
fn with_replacement_batches_are_unbiased() {
    let q = Quadratic::with_centers(
        (0..3).map(|i| 1.0 + i as f64).collect(),
        (0..7).map(|i| vec![i as f64, (i * i) as f64 * 0.1, -(i as f64)]).collect(),
    );
    let x = [0.3, -1.2, 2.0];
    let n = q.num_samples();
    for m in 1..=3u32 {
        let mut mean = vec![0.0; 3];
        let total = n.pow(m);
        for code in 0..total {
            let batch: Vec<usize> = (0..m).map(|j| code / n.pow(j) % n).collect();
            let g = q.batch_grad(&x, &batch);
            mean.iter_mut().zip(&g).for_each(|(a, b)| *a += b / total as f64);
        }
        assert!(rel_err(&mean, &q.full_grad(&x)) <= 1e-12, "m = {m}");
    }

    // and the sampler draws indices uniformly
    let mut sampler = BatchSampler::new(4, 3, Sampling::WithReplacement).unwrap();
    let mut counts = vec![0usize; n];
    let mut draws = 0;
    for _ in 0..20_000 {
        for b in sampler.epoch(n) {
            assert!(b.len() <= 3);
            b.iter().for_each(|&i| counts[i] += 1);
            draws += b.len();
        }
    }
    assert_eq!(draws, 20_000 * n);
    let expect = draws as f64 / n as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
    // 6 degrees of freedom; 99.9th percentile is about 22.5
    assert!(chi2 < 22.5, "chi² = {chi2}, counts {counts:?}");
}
