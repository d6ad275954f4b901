use std::f64::consts::PI;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use milacbeam::channel::{
    generate_channel, generate_pdp, generate_taps, rms_delay_spread, FreqChannel,
};
use milacbeam::harness::{run_experiment, ExperimentKind, ExperimentSpec};
use milacbeam::linalg::{cn_matrix, frob, spectral_norm, CMat, C64};
use milacbeam::model::{DigitalPrecoders, MiLACMatrix, SystemConfig};
use milacbeam::optimizer::{
    project_phase_shifter, project_spectral_ball, solve_hybrid_milac, SolverOptions,
};
use milacbeam::realize::{
    realization_residual, realize_fully_digital, DigitalTargetSet, DEFAULT_RANK_TOL,
};

fn cfg(n: usize, n_tx: usize, k: usize, n_taps: usize, decay: f64) -> SystemConfig {
    SystemConfig {
        n_subcarriers: n,
        n_tx,
        n_users: k,
        n_rf: k,
        n_taps,
        pdp_decay: decay,
        ..SystemConfig::full_size()
    }
}

#[test]
fn subcarrier_correlation_follows_the_profile() {
    // E[h_n h_m^*] per antenna = sum_d p_d exp(-j 2 pi (n - m) d / N)
    let c = cfg(8, 4, 2, 4, 1.5);
    let pdp = generate_pdp(c.n_taps, c.pdp_decay).unwrap();
    let expect = |lag: i64| -> C64 {
        pdp.powers()
            .iter()
            .enumerate()
            .map(|(d, p)| {
                C64::from_polar(
                    *p,
                    -2.0 * PI * (lag * d as i64) as f64 / c.n_subcarriers as f64,
                )
            })
            .sum()
    };
    let trials = 4000;
    let mut acc = [C64::new(0.0, 0.0); 3];
    let mut samples = 0.0;
    for seed in 0..trials {
        let ch = generate_channel(&c, seed).unwrap();
        for k in 0..c.n_users {
            let (h0, h1, h3) = (ch.h(k, 0), ch.h(k, 1), ch.h(k, 3));
            for i in 0..c.n_tx {
                acc[0] += h0[i] * h0[i].conj();
                acc[1] += h1[i] * h0[i].conj();
                acc[2] += h3[i] * h0[i].conj();
                samples += 1.0;
            }
        }
    }
    for (a, lag) in acc.iter().zip([0, 1, 3]) {
        let est = a / samples;
        let e = expect(lag);
        // standard error of a unit-variance product average is about 1/sqrt(samples)
        let tol = 5.0 / samples.sqrt();
        assert!((est - e).norm() < tol, "lag {lag}: {est} vs {e}");
    }
}

#[test]
fn delay_spread_matches_closed_form() {
    // geometric weights r^d with r = exp(-1/decay)
    for &(n_taps, decay) in &[(16, 0.8), (16, 4.0), (4, 1.0), (1, 2.0)] {
        let r = (-1.0f64 / decay).exp();
        let w: Vec<f64> = (0..n_taps).map(|d| r.powi(d as i32)).collect();
        let s: f64 = w.iter().sum();
        let m1: f64 = w.iter().enumerate().map(|(d, x)| d as f64 * x).sum::<f64>() / s;
        let m2: f64 = w
            .iter()
            .enumerate()
            .map(|(d, x)| (d * d) as f64 * x)
            .sum::<f64>()
            / s;
        let pdp = generate_pdp(n_taps, decay).unwrap();
        let got = rms_delay_spread(&pdp, 2.0);
        assert!(
            (got - 2.0 * (m2 - m1 * m1).sqrt()).abs() < 1e-12,
            "{n_taps} {decay}"
        );
    }
}

#[test]
fn channels_round_trip_through_text() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg(4, 3, 2, 2, 0.8);
    let ch = generate_channel(&c, 9).unwrap();
    let path = dir.path().join("h.txt");
    ch.write_text(&path).unwrap();
    assert_eq!(FreqChannel::read_text(&path).unwrap(), ch);
    let taps = generate_taps(&c, 9).unwrap();
    taps.write_text(&path).unwrap();
    assert_eq!(
        milacbeam::channel::TapChannel::read_text(&path).unwrap(),
        taps
    );
}

#[test]
fn milac_matrix_rejects_gain() {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let g = cn_matrix(&mut rng, 6, 3, 1.0);
    let s = spectral_norm(&g);
    assert!(MiLACMatrix::new(&g * C64::new(1.01 / s, 0.0)).is_err());
    assert!(MiLACMatrix::new(&g * C64::new(1.0 / s, 0.0)).is_ok());
    assert!(MiLACMatrix::from_physical(&(&g * C64::new(0.6 / s, 0.0))).is_err());
}

#[test]
fn harness_is_reproducible() {
    let mut spec = ExperimentSpec::preset(ExperimentKind::RfSweep, true);
    spec.system = cfg(8, 8, 2, 4, 0.8);
    spec.sweep = vec![2.0, 4.0];
    spec.trials = 3;
    spec.solver.max_outer = 30;
    let a = run_experiment(&spec).unwrap();
    let b = run_experiment(&spec).unwrap();
    assert_eq!(a, b);
    spec.system.seed = 1;
    let c = run_experiment(&spec).unwrap();
    assert_ne!(a.records[0].channel_digest, c.records[0].channel_digest);
}

#[test]
fn solver_output_is_feasible() {
    let mut c = cfg(8, 8, 2, 4, 2.0);
    c.n_rf = 3;
    for seed in 0..5 {
        let ch = generate_channel(&c, seed).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let sol = solve_hybrid_milac(&c, &ch, &SolverOptions::default(), &mut rng).unwrap();
        assert!(spectral_norm(&sol.analog) <= 1.0 + 1e-10);
        assert!(sol.digital.power() <= c.total_power * (1.0 + 1e-10));
        assert!(sol.trace.is_monotone(1e-9));
    }
}

/// Eigenvalues of `X^H X`, descending.
fn gram_eigenvalues(x: &CMat) -> Vec<f64> {
    let mut l: Vec<f64> = nalgebra::SymmetricEigen::new(x.adjoint() * x)
        .eigenvalues
        .iter()
        .map(|v| v.max(0.0))
        .collect();
    l.sort_by(|a, b| b.total_cmp(a));
    l
}

fn matrix(rows: usize, cols: usize, seed: u64, var: f64) -> CMat {
    cn_matrix(&mut ChaCha20Rng::seed_from_u64(seed), rows, cols, var)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spectral_projection_clips_only_large_singular_values(
        rows in 1usize..9, cols in 1usize..9, seed in any::<u64>(), var in 0.01f64..25.0,
    ) {
        let x = matrix(rows, cols, seed, var);
        let p = project_spectral_ball(&x).into_inner();
        // eigenvalues of the Gram matrices are the squared singular values
        let sx = gram_eigenvalues(&x);
        let sp = gram_eigenvalues(&p);
        for (a, b) in sx.iter().zip(&sp) {
            prop_assert!((a.min(1.0) - b).abs() < 1e-9 * (1.0 + a));
        }
        let sx: Vec<f64> = sx.iter().map(|l| l.sqrt()).collect();
        // the residual X - P lies in the span of the clipped directions
        let resid = &x - &p;
        let expect: f64 = sx.iter().map(|s| (s - 1.0).max(0.0).powi(2)).sum::<f64>().sqrt();
        prop_assert!((frob(&resid) - expect).abs() < 1e-9 * (1.0 + expect));
    }

    #[test]
    fn phase_shifter_projection_keeps_phases(
        rows in 1usize..9, cols in 1usize..5, seed in any::<u64>(),
    ) {
        let x = matrix(rows, cols, seed, 1.0);
        let p = project_phase_shifter(&x);
        let m = 1.0 / (rows as f64).sqrt();
        for (a, b) in x.iter().zip(p.iter()) {
            prop_assert!((b.norm() - m).abs() < 1e-12);
            if a.norm() > 1e-9 {
                prop_assert!((a / C64::new(a.norm(), 0.0) * C64::new(m, 0.0) - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn realization_is_exact_at_numerical_rank(
        n in 1usize..5, n_tx in 2usize..8, k in 1usize..3, rank in 1usize..4, seed in any::<u64>(),
    ) {
        // targets W_n = A B_n share a column space of dimension <= rank
        let r = rank.min(n_tx);
        let a = matrix(n_tx, r, seed, 1.0);
        let blocks: Vec<CMat> = (0..n).map(|i| &a * matrix(r, k, seed ^ (i as u64 + 1), 1.0)).collect();
        let t = DigitalTargetSet::new(blocks).unwrap();
        let real = realize_fully_digital(&t, DEFAULT_RANK_TOL, None).unwrap();
        prop_assert!(real.p.ncols() <= r.min(k * n));
        prop_assert!(spectral_norm(&real.p) <= 1.0 + 1e-10);
        prop_assert!(realization_residual(&real.p, &real.w, &t).unwrap() < 1e-10);
        prop_assert!((real.w.power() - t.power()).abs() < 1e-9 * t.power());
    }

    #[test]
    fn precoder_scaling_scales_power(
        n in 1usize..5, rf in 1usize..4, k in 1usize..4, seed in any::<u64>(), s in 0.0f64..10.0,
    ) {
        let mut w = DigitalPrecoders::new((0..n).map(|i| matrix(rf, k, seed ^ i as u64, 1.0)).collect()).unwrap();
        let before = w.power();
        w.scale(s);
        prop_assert!((w.power() - s * s * before).abs() <= 1e-12 * (1.0 + s * s * before));
    }
}

#[test]
fn realization_of_rank_two_wide_aggregate() {
    // the aggregate is 4 x 8 with rank 2; an earlier factorisation got this wrong
    let (n, n_tx, k, r, seed) = (4usize, 4usize, 2usize, 2usize, 3039294954335790635u64);
    let a = matrix(n_tx, r, seed, 1.0);
    let blocks: Vec<CMat> = (0..n)
        .map(|i| &a * matrix(r, k, seed ^ (i as u64 + 1), 1.0))
        .collect();
    let t = DigitalTargetSet::new(blocks).unwrap();
    let real = realize_fully_digital(&t, DEFAULT_RANK_TOL, None).unwrap();
    assert_eq!(real.n_rf_used, 2);
    assert!(realization_residual(&real.p, &real.w, &t).unwrap() < 1e-12);
}
