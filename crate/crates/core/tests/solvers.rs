use adadrop::dropout::MaskFamily;
use adadrop::penalty::PenaltySpec;
use adadrop::solvers::{
    ada_tikhonov, additive_reparam_prox, direct_gd, dropout_sgd, expected_dropout_gradient, gen_synthetic, iht,
    irls, joint_gd, masked_gradient, solution_metrics, DualPenalty, Init, KSchedule, SolverConfig, SolverKind,
    VarDropPenalty,
};
use adadrop::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

#[test]
fn joint_gd_l1_settles_at_eta_equal_abs_w() {
    let s = gen_synthetic(200, 10, 3, 0.1, 11).unwrap();
    let cfg = SolverConfig { lambda: 0.05, step: 0.2, iters: 6000, log_every: 6000, ..Default::default() };
    let trace = joint_gd(&s.problem, &PenaltySpec::l1(), &cfg).unwrap();
    let last = trace.last().unwrap();
    let eta = last.eta.as_ref().unwrap();
    let mut checked = 0;
    for (w, e) in last.w.iter().zip(eta) {
        if w.abs() > 0.1 {
            assert!((e - w.abs()).abs() < 1e-3 * w.abs(), "eta {e} vs |w| {}", w.abs());
            checked += 1;
        }
    }
    assert!(checked >= 3);
}

#[test]
fn joint_gd_l1_matches_irls_objective() {
    let s = gen_synthetic(200, 10, 3, 0.1, 12).unwrap();
    let cfg = SolverConfig { lambda: 0.05, step: 0.2, iters: 6000, log_every: 6000, ..Default::default() };
    let a = joint_gd(&s.problem, &PenaltySpec::l1(), &cfg).unwrap().last().unwrap().objective;
    let b = irls(&s.problem, &PenaltySpec::l1(), &SolverConfig { iters: 200, ..cfg }).unwrap().last().unwrap().objective;
    // eta on the zero coordinates decays like 1/t, so agreement is loose
    assert!((a - b).abs() < 1e-2 * b, "{a} vs {b}");
}

#[test]
fn joint_gd_runs_with_vardrop_dual() {
    let s = gen_synthetic(100, 20, 3, 0.1, 13).unwrap();
    let pen = VarDropPenalty::new(1.0).unwrap();
    let cfg = SolverConfig { lambda: 0.02, step: 0.1, iters: 300, log_every: 50, ..Default::default() };
    let trace = joint_gd(&s.problem, &pen, &cfg).unwrap();
    let obj = trace.objectives();
    assert!(obj.iter().all(|o| o.is_finite()));
    assert!(obj.last().unwrap() < &obj[0]);
}

#[test]
fn joint_gd_refuses_duals_without_gradient() {
    let s = gen_synthetic(20, 10, 2, 0.1, 1).unwrap();
    let err = joint_gd(&s.problem, &PenaltySpec::hard_thresh(3), &SolverConfig::default()).unwrap_err();
    assert!(matches!(err, Error::InvalidCombination(_)));
}

#[test]
fn ada_tikhonov_without_regularization_is_gradient_descent() {
    let s = gen_synthetic(60, 15, 3, 0.1, 21).unwrap();
    let cfg = SolverConfig {
        lambda: 0.0,
        step: 0.3,
        iters: 50,
        init: Init::Gaussian { scale: 0.5 },
        seed: 4,
        ..Default::default()
    };
    let a = ada_tikhonov(&s.problem, &PenaltySpec::log_sum(1.0).unwrap(), &cfg).unwrap();
    let b = direct_gd(&s.problem, &PenaltySpec::l1(), &cfg).unwrap();
    for (ra, rb) in a.records.iter().zip(&b.records) {
        assert_eq!(bits(&ra.w), bits(&rb.w), "iteration {}", ra.iter);
    }
}

#[test]
fn logsum_gradient_matches_finite_differences() {
    let pen = PenaltySpec::log_sum(0.7).unwrap();
    let w = [0.3, -1.2, 2.5, -0.05, 4.0];
    let g = DualPenalty::omega_grad(&pen, &w).unwrap();
    let h = 1e-6;
    for j in 0..w.len() {
        let mut up = w;
        let mut dn = w;
        up[j] += h;
        dn[j] -= h;
        let fd = (pen.omega(&up) - pen.omega(&dn)) / (2.0 * h);
        assert!((fd - g[j]).abs() < 1e-7, "coord {j}: {fd} vs {}", g[j]);
    }
}

#[test]
fn direct_gd_logsum_decreases_objective() {
    let s = gen_synthetic(80, 30, 4, 0.1, 22).unwrap();
    let cfg = SolverConfig { lambda: 0.01, step: 0.2, iters: 200, ..Default::default() };
    let obj = direct_gd(&s.problem, &PenaltySpec::log_sum(1.0).unwrap(), &cfg).unwrap().objectives();
    assert!(obj.last().unwrap() < &(0.5 * obj[0]));
}

#[test]
fn dropout_with_full_budget_is_iht_with_full_budget() {
    let s = gen_synthetic(50, 12, 3, 0.1, 31).unwrap();
    let d = s.problem.d();
    let cfg = SolverConfig {
        step: 0.25,
        iters: 40,
        mask: Some(MaskFamily::UnbiasedBinary),
        init: Init::Gaussian { scale: 0.3 },
        ..Default::default()
    };
    let a = dropout_sgd(&s.problem, &PenaltySpec::hard_thresh(d), &cfg).unwrap();
    let b = iht(&s.problem, KSchedule::Fixed(d), &cfg).unwrap();
    assert_eq!(a.records.len(), b.records.len());
    for (ra, rb) in a.records.iter().zip(&b.records) {
        assert_eq!(bits(&ra.w), bits(&rb.w), "iteration {}", ra.iter);
    }
}

#[test]
fn dropout_with_biased_mask_is_rejected() {
    let s = gen_synthetic(20, 10, 2, 0.1, 1).unwrap();
    let cfg = SolverConfig { mask: Some(MaskFamily::BiasedBernoulli), ..Default::default() };
    let err = dropout_sgd(&s.problem, &PenaltySpec::l1(), &cfg).unwrap_err();
    assert!(matches!(err, Error::InvalidCombination(_)));
}

fn mc_check(family: MaskFamily, seed: u64) {
    let s = gen_synthetic(40, 6, 2, 0.1, seed).unwrap();
    let w = [0.8, -0.4, 1.5, 0.0, -2.0, 0.3];
    let alpha = [0.9, 0.5, 0.3, 0.7, 0.6, 0.95];
    let expected = expected_dropout_gradient(&s.problem, &w, &alpha);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 40_000;
    let mut sum = [0.0; 6];
    let mut sq = [0.0; 6];
    for _ in 0..n {
        let mask: Vec<f64> = alpha.iter().map(|&a| family.draw(a, &mut rng)).collect();
        let g = masked_gradient(&s.problem, &w, &mask);
        for j in 0..6 {
            sum[j] += g[j];
            sq[j] += g[j] * g[j];
        }
    }
    for j in 0..6 {
        let mean = sum[j] / n as f64;
        let se = ((sq[j] / n as f64 - mean * mean) / (n - 1) as f64).sqrt();
        let z = (mean - expected[j]) / se.max(1e-300);
        assert!(z.abs() < 4.0, "{family:?} coord {j}: mean {mean}, expected {}, z {z}", expected[j]);
    }
}

#[test]
fn masked_gradient_is_unbiased_for_expected_dropout_loss_binary() {
    mc_check(MaskFamily::UnbiasedBinary, 41);
}

#[test]
fn masked_gradient_is_unbiased_for_expected_dropout_loss_gaussian() {
    mc_check(MaskFamily::Gaussian, 42);
}

#[test]
fn additive_reparam_without_mask_is_proximal_gradient() {
    let s = gen_synthetic(60, 20, 3, 0.1, 51).unwrap();
    let cfg = SolverConfig { lambda: 0.05, step: 0.3, iters: 60, ..Default::default() };
    let pen = PenaltySpec::log_sum(1.0).unwrap();
    let a = additive_reparam_prox(&s.problem, &pen, &cfg).unwrap();
    let b = SolverKind::AdaProx.run(&s.problem, &pen, &cfg).unwrap();
    for (ra, rb) in a.records.iter().zip(&b.records) {
        assert_eq!(bits(&ra.w), bits(&rb.w), "iteration {}", ra.iter);
    }
}

#[test]
fn additive_reparam_has_lower_gradient_variance_near_zero() {
    // Draw both stochastic gradients at the same point with small weights
    // on the dropped coordinates and compare their spread.
    let s = gen_synthetic(60, 8, 2, 0.1, 61).unwrap();
    let w = [1.0, -1.0, 0.01, 0.02, -0.01, 0.0, 0.03, -0.02];
    let alpha = [0.99, 0.99, 0.2, 0.2, 0.2, 0.2, 0.2, 0.2];
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let n = 5000;
    let (mut v_drop, mut v_add) = (0.0, 0.0);
    let (mut m_drop, mut m_add) = (vec![0.0; 8], vec![0.0; 8]);
    let mut draws = Vec::with_capacity(n);
    for _ in 0..n {
        let mask: Vec<f64> = alpha.iter().map(|&a| MaskFamily::UnbiasedBinary.draw(a, &mut rng)).collect();
        let gd = masked_gradient(&s.problem, &w, &mask);
        let point: Vec<f64> = (0..8).map(|j| w[j] + (mask[j] - 1.0) * w[j]).collect();
        let ga = s.problem.gradient(&point);
        for j in 0..8 {
            m_drop[j] += gd[j] / n as f64;
            m_add[j] += ga[j] / n as f64;
        }
        draws.push((gd, ga));
    }
    for (gd, ga) in &draws {
        for j in 0..8 {
            v_drop += (gd[j] - m_drop[j]).powi(2);
            v_add += (ga[j] - m_add[j]).powi(2);
        }
    }
    println!("total variance: dropout {:.4e}, additive {:.4e}", v_drop / n as f64, v_add / n as f64);
    assert!(v_add < v_drop);
}

#[test]
fn cubic_iht_ends_within_budget() {
    let s = gen_synthetic(80, 100, 5, 0.05, 71).unwrap();
    let cfg = SolverConfig { step: 0.3, iters: 150, ..Default::default() };
    let trace = iht(&s.problem, KSchedule::Cubic { k_final: 5 }, &cfg).unwrap();
    let nnz: Vec<usize> = trace.records.iter().map(|r| r.nnz).collect();
    assert!(*nnz.last().unwrap() <= 5);
    let m = solution_metrics(trace.final_w(), Some(&s.w_true), 1e-8);
    let recall = m.recall.unwrap();
    assert!(recall >= 0.8, "recall {recall}");
}

#[test]
fn every_named_solver_runs() {
    let s = gen_synthetic(40, 20, 3, 0.1, 81).unwrap();
    let cfg = SolverConfig {
        lambda: 0.05,
        iters: 20,
        mask: Some(MaskFamily::Gaussian),
        ..Default::default()
    };
    let pen = PenaltySpec::log_sum(1.0).unwrap();
    for kind in SolverKind::ALL {
        let out = kind.run(&s.problem, &pen, &cfg);
        if kind == SolverKind::Iht {
            assert!(out.is_err());
        } else {
            let t = out.unwrap_or_else(|e| panic!("{kind}: {e}"));
            assert!(t.objectives().iter().all(|o| o.is_finite()), "{kind}");
        }
    }
}
