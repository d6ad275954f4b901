//! Quick invariant checks on small random instances, for `milacbeam selftest`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::channel::{generate_channel, generate_taps, verify_time_frequency_equivalence};
use crate::error::Result;
use crate::linalg::{cn_matrix, frob, spectral_norm, CMat, C64};
use crate::milac_net::{
    admittance_to_beamforming, admittance_to_scattering, scattering_to_beamforming, MiLACNetwork,
};
use crate::model::{compute_avg_sum_rate, DigitalPrecoders, SystemConfig};
use crate::optimizer::{
    pgd_gradient, project_spectral_ball, solve_fully_digital, solve_hybrid_milac,
    update_equalizers, update_weights, PgdWorkspace, SolverOptions, WSubproblem,
};
use crate::realize::{min_rf_chains, realize_fully_digital, DigitalTargetSet, DEFAULT_RANK_TOL};

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    match f() {
        Ok((passed, detail)) => CheckResult {
            name,
            passed,
            detail,
        },
        Err(e) => CheckResult {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn small() -> SystemConfig {
    let mut cfg = SystemConfig {
        n_subcarriers: 8,
        n_tx: 8,
        n_users: 2,
        n_rf: 2,
        n_taps: 4,
        ..SystemConfig::small()
    };
    cfg.set_snr_db(10.0);
    cfg
}

/// Run all checks with the given seed.
pub fn run_selftest(seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let cfg = small();
    let mut out = Vec::new();

    out.push(check("bcd-monotone-and-rate-recovery", || {
        let mut worst_inc: f64 = f64::NEG_INFINITY;
        let mut worst_gap: f64 = 0.0;
        let k_ln2 = cfg.n_users as f64 / std::f64::consts::LN_2;
        for t in 0..10 {
            let ch = generate_channel(&cfg, seed.wrapping_add(t))?;
            let sol = solve_hybrid_milac(&cfg, &ch, &SolverOptions::default(), &mut rng)?;
            let tr = &sol.trace;
            worst_inc = worst_inc.max(tr.max_relative_increase());
            for (i, obj) in tr.objective_after_uw.iter().enumerate() {
                let prev = if i == 0 {
                    tr.initial_sumrate
                } else {
                    tr.sumrate_per_iter[i - 1]
                };
                worst_gap = worst_gap.max((k_ln2 - obj - prev).abs() / prev.abs().max(1e-300));
            }
        }
        Ok((
            worst_inc <= 1e-9 && worst_gap <= 1e-9,
            format!("max relative increase {worst_inc:.2e}, rate gap {worst_gap:.2e}"),
        ))
    }));

    out.push(check("gradient-finite-difference", || {
        let ch = generate_channel(&cfg, seed)?;
        let p = project_spectral_ball(&cn_matrix(&mut rng, cfg.n_tx, cfg.n_rf, 1.0)).into_inner();
        let w = DigitalPrecoders::new(
            (0..cfg.n_subcarriers)
                .map(|_| cn_matrix(&mut rng, cfg.n_rf, cfg.n_users, 1.0))
                .collect(),
        )?;
        let noise = cfg.scaled_noise_grid();
        let u = update_equalizers(&ch, &p, &w, &noise)?;
        let om = update_weights(&ch, &p, &w, &u, &noise)?;
        let ws = PgdWorkspace::from_state(&ch, &w, &u, &om)?;
        let g = pgd_gradient(&p, &ws)?;
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let d = CMat::from_fn(cfg.n_tx, cfg.n_rf, |_, _| {
                C64::new(rng.random_range(-1.0..1.0), 0.0)
            });
            let h = 1e-5;
            let fd = (ws.objective(&(&p + &d * C64::new(h, 0.0)))?
                - ws.objective(&(&p - &d * C64::new(h, 0.0)))?)
                / (2.0 * h);
            let an = crate::linalg::inner(&g, &d).re;
            worst = worst.max((fd - an).abs() / an.abs().max(1e-8));
        }
        Ok((worst <= 1e-5, format!("max relative error {worst:.2e}")))
    }));

    out.push(check("projection", || {
        let x = cn_matrix(&mut rng, 8, 3, 4.0);
        let p = project_spectral_ball(&x);
        let pp = project_spectral_ball(&p);
        let idem = frob(&(&*pp - &*p));
        Ok((
            idem <= 1e-12 && spectral_norm(&p) <= 1.0 + 1e-10,
            format!("idempotence {idem:.2e}, norm {:.12}", spectral_norm(&p)),
        ))
    }));

    out.push(check("time-frequency-equivalence", || {
        let taps = generate_taps(&cfg, seed)?;
        let p = project_spectral_ball(&cn_matrix(&mut rng, cfg.n_tx, cfg.n_rf, 1.0)).into_inner();
        let w = DigitalPrecoders::new(
            (0..cfg.n_subcarriers)
                .map(|_| cn_matrix(&mut rng, cfg.n_rf, cfg.n_users, 1.0))
                .collect(),
        )?;
        let r = verify_time_frequency_equivalence(&taps, &p, &w, &mut rng)?;
        Ok((r <= 1e-9, format!("residual {r:.2e}")))
    }));

    out.push(check("realization-round-trip", || {
        let ch = generate_channel(&cfg, seed)?;
        let dig = solve_fully_digital(&cfg, &ch, &SolverOptions::default(), &mut rng)?;
        let noise = cfg.scaled_noise_grid();
        let chains = min_rf_chains(cfg.n_tx, cfg.n_users, cfg.n_subcarriers);
        let r = realize_fully_digital(
            &DigitalTargetSet::from(dig.digital.clone()),
            DEFAULT_RANK_TOL,
            Some(chains),
        )?;
        let rate = compute_avg_sum_rate(&ch, &r.p, &r.w, &noise)?;
        let gap = (rate - dig.sumrate()).abs() / dig.sumrate();
        Ok((gap <= 1e-9, format!("relative rate gap {gap:.2e}")))
    }));

    out.push(check("network-model-consistency", || {
        let ports = cfg.n_rf + cfg.n_tx;
        let b =
            nalgebra::DMatrix::<f64>::from_fn(ports, ports, |_, _| rng.random_range(-0.05..0.05));
        let y = (&b + b.transpose()).map(|x| C64::new(0.0, x));
        let net = MiLACNetwork::new(y, cfg.n_rf, cfg.n_tx)?;
        let direct = admittance_to_beamforming(&net)?;
        let via = scattering_to_beamforming(&admittance_to_scattering(&net)?, cfg.n_rf, cfg.n_tx)?;
        let dev = frob(&(&direct - &via));
        let norm = spectral_norm(&(direct * C64::new(2.0, 0.0)));
        Ok((
            dev <= 1e-10 && norm <= 1.0 + 1e-9,
            format!("path deviation {dev:.2e}, ||2 P^M||_2 = {norm:.12}"),
        ))
    }));

    out.push(check("precoder-kkt", || {
        let q: Vec<CMat> = (0..4)
            .map(|_| {
                let g = cn_matrix(&mut rng, 3, 2, 1.0);
                &g * g.adjoint()
            })
            .collect();
        let a: Vec<CMat> = (0..4).map(|_| cn_matrix(&mut rng, 3, 2, 1.0)).collect();
        let sub = WSubproblem::from_explicit(&q, &a)?;
        let sol = sub.solve(1.0, 1e-10)?;
        let stat = sub.stationarity_residual(&sol.w, sol.mu);
        let slack = sol.mu * (1.0 - sol.w.power());
        Ok((
            stat <= 1e-7 && slack.abs() <= 1e-6,
            format!("stationarity {stat:.2e}, complementary slackness {slack:.2e}"),
        ))
    }));

    out
}
