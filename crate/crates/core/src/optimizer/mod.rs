//! WMMSE block-coordinate descent for hybrid digital-MiLAC beamforming, and
//! the baselines built on the same loop.
//!
//! Each outer iteration updates the equalizers `u`, the MSE weights `omega`,
//! the digital precoders `W` and the analog matrix `P`, in that order. Every
//! block update is an exact or descent step on the WMMSE objective, so the
//! recorded objective is non-increasing.

mod init;
mod pgd;
mod updates;

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::FreqChannel;
use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::model::{DigitalPrecoders, MiLACMatrix, NoiseGrid, OptimizerTrace, SystemConfig};

pub use init::initialize;
pub use pgd::{
    lipschitz_step, pgd_gradient, project_phase_shifter, project_spectral_ball,
    update_analog_matrix, update_milac_matrix, AnalogConstraint, PgdSettings, PgdWorkspace,
    MAX_HALVINGS,
};
pub use updates::{
    update_digital_precoders, update_equalizers, update_weights, WSolution, WSubproblem, MAX_WEIGHT,
};

use updates::{
    equalizers_from_gains, gains, objective_from_gains, steer, sumrate_from_gains,
    weights_from_gains,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitScheme {
    RandomProjected,
    #[default]
    MatchedFilter,
}

/// Stopping rules and initialisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub max_outer: usize,
    /// Relative change of the WMMSE objective between outer iterations.
    pub outer_tol: f64,
    pub max_pgd: usize,
    /// Relative objective decrease below which PGD stops.
    pub pgd_tol: f64,
    /// Relative accuracy of the power constraint in the multiplier search.
    pub bisection_tol: f64,
    pub init_scheme: InitScheme,
    /// Number of starts; the first uses `init_scheme`, the rest are random.
    pub restarts: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_outer: 200,
            outer_tol: 1e-5,
            max_pgd: 100,
            pgd_tol: 1e-6,
            bisection_tol: 1e-8,
            init_scheme: InitScheme::MatchedFilter,
            restarts: 1,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("outer_tol", self.outer_tol),
            ("pgd_tol", self.pgd_tol),
            ("bisection_tol", self.bisection_tol),
        ] {
            if !(v > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.restarts == 0 {
            return Err(Error::InvalidConfig("restarts must be at least 1".into()));
        }
        Ok(())
    }
}

/// Output of a solver run.
#[derive(Debug, Clone)]
pub struct Solution {
    /// Analog matrix (`N_T x N_RF`); the identity for fully-digital runs.
    pub analog: CMat,
    pub digital: DigitalPrecoders,
    pub trace: OptimizerTrace,
}

impl Solution {
    pub fn sumrate(&self) -> f64 {
        self.trace.final_sumrate()
    }

    /// The analog stage as a MiLAC matrix, checking `||P||_2 <= 1`.
    pub fn milac(&self) -> Result<MiLACMatrix> {
        MiLACMatrix::new(self.analog.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseShifterMode {
    Hybrid,
    AnalogOnly,
}

#[derive(Debug, Clone, Copy)]
enum AnalogStage {
    Identity,
    Optimized(AnalogConstraint),
}

struct Bcd<'a> {
    channel: &'a FreqChannel,
    noise: NoiseGrid,
    total_power: f64,
    analog: AnalogStage,
    optimize_digital: bool,
    options: &'a SolverOptions,
}

impl Bcd<'_> {
    fn run(
        &self,
        p0: Option<CMat>,
        w0: DigitalPrecoders,
    ) -> Result<(Option<CMat>, DigitalPrecoders, OptimizerTrace)> {
        let start = Instant::now();
        let opts = self.options;
        let settings = PgdSettings {
            max_iters: opts.max_pgd,
            tol: opts.pgd_tol,
        };
        let mut p = p0;
        let mut w = w0;
        let mut g = steer(self.channel, p.as_ref())?;
        let mut e = gains(&g, &w)?;
        let mut trace = OptimizerTrace {
            initial_sumrate: sumrate_from_gains(&e, &self.noise),
            ..Default::default()
        };
        let mut prev: Option<f64> = None;
        for _ in 0..opts.max_outer {
            let u = equalizers_from_gains(&e, &self.noise)?;
            let omega = weights_from_gains(&e, &u, &self.noise)?;
            trace
                .objective_after_uw
                .push(objective_from_gains(&e, &u, &omega, &self.noise)?);

            if self.optimize_digital {
                let sub = WSubproblem::from_steered(&g, &u, &omega)?;
                let sol = sub.solve(self.total_power, opts.bisection_tol)?;
                // the multiplier is only bracketed to the power tolerance;
                // never trade an exact earlier point for a slightly worse one
                if sub.objective(&sol.w) <= sub.objective(&w) {
                    w = sol.w;
                }
            }

            let mut inner = 0;
            if let AnalogStage::Optimized(constraint) = self.analog {
                let ws = PgdWorkspace::from_state(self.channel, &w, &u, &omega)?;
                let current = p.take().expect("analog matrix present");
                let (np, it) = update_analog_matrix(&current, &ws, constraint, settings)?;
                inner = it;
                g = steer(self.channel, Some(&np))?;
                p = Some(np);
            }

            e = gains(&g, &w)?;
            let obj = objective_from_gains(&e, &u, &omega, &self.noise)?;
            trace.objective_per_iter.push(obj);
            trace
                .sumrate_per_iter
                .push(sumrate_from_gains(&e, &self.noise));
            trace.inner_pgd_iters.push(inner);
            if let Some(prev) = prev {
                if (prev - obj).abs() <= opts.outer_tol * prev.abs().max(1.0) {
                    trace.converged = true;
                    break;
                }
            }
            prev = Some(obj);
        }
        trace.wall_time = start.elapsed().as_secs_f64();
        Ok((p, w, trace))
    }
}

fn best_of<F>(options: &SolverOptions, mut attempt: F) -> Result<Solution>
where
    F: FnMut(InitScheme) -> Result<Solution>,
{
    options.validate()?;
    let mut best: Option<Solution> = None;
    for s in 0..options.restarts {
        let scheme = if s == 0 {
            options.init_scheme
        } else {
            InitScheme::RandomProjected
        };
        let sol = attempt(scheme)?;
        if best.as_ref().map_or(true, |b| sol.sumrate() > b.sumrate()) {
            best = Some(sol);
        }
    }
    Ok(best.expect("at least one start"))
}

fn check_channel(config: &SystemConfig, channel: &FreqChannel) -> Result<()> {
    config.validate()?;
    let expect = (config.n_subcarriers, config.n_tx, config.n_users);
    let found = (channel.n_subcarriers(), channel.n_tx(), channel.n_users());
    if expect != found {
        return Err(Error::dims(
            "channel (N, N_T, K)",
            format!("{expect:?}"),
            format!("{found:?}"),
        ));
    }
    Ok(())
}

fn require_rf_equals_users(config: &SystemConfig, what: &str) -> Result<()> {
    if config.n_rf != config.n_users {
        return Err(Error::InvalidConfig(format!(
            "{what} needs n_rf == n_users, got n_rf = {} and n_users = {}",
            config.n_rf, config.n_users
        )));
    }
    Ok(())
}

fn frozen_precoders(config: &SystemConfig) -> DigitalPrecoders {
    let c = (config.total_power / (config.n_users * config.n_subcarriers) as f64).sqrt();
    DigitalPrecoders::scaled_identity(config.n_subcarriers, config.n_users, c)
}

/// Joint optimisation of the MiLAC matrix and the per-subcarrier digital
/// precoders.
pub fn solve_hybrid_milac<R: Rng + ?Sized>(
    config: &SystemConfig,
    channel: &FreqChannel,
    options: &SolverOptions,
    rng: &mut R,
) -> Result<Solution> {
    check_channel(config, channel)?;
    let bcd = Bcd {
        channel,
        noise: config.scaled_noise_grid(),
        total_power: config.total_power,
        analog: AnalogStage::Optimized(AnalogConstraint::SpectralBall),
        optimize_digital: true,
        options,
    };
    best_of(options, |scheme| {
        let (p0, w0) = initialize(config, channel, scheme, rng)?;
        let (p, w, trace) = bcd.run(Some(p0), w0)?;
        Ok(Solution {
            analog: p.expect("analog matrix"),
            digital: w,
            trace,
        })
    })
}

/// Fully-digital WMMSE (`P = I`, `N_RF = N_T`). The scaled noise is kept so
/// rates are directly comparable with the hybrid schemes.
pub fn solve_fully_digital<R: Rng + ?Sized>(
    config: &SystemConfig,
    channel: &FreqChannel,
    options: &SolverOptions,
    rng: &mut R,
) -> Result<Solution> {
    let cfg = SystemConfig {
        n_rf: config.n_tx,
        ..config.clone()
    };
    check_channel(&cfg, channel)?;
    let bcd = Bcd {
        channel,
        noise: cfg.scaled_noise_grid(),
        total_power: cfg.total_power,
        analog: AnalogStage::Identity,
        optimize_digital: true,
        options,
    };
    best_of(options, |scheme| {
        let w0 = init::digital_start(&cfg, channel, scheme, rng);
        let (_, w, trace) = bcd.run(None, w0)?;
        Ok(Solution {
            analog: CMat::identity(cfg.n_tx, cfg.n_tx),
            digital: w,
            trace,
        })
    })
}

/// MiLAC-only beamforming: `W_n` frozen at `sqrt(P_T / (K N)) I_K`, only the
/// analog matrix adapts.
pub fn solve_milac_only<R: Rng + ?Sized>(
    config: &SystemConfig,
    channel: &FreqChannel,
    options: &SolverOptions,
    rng: &mut R,
) -> Result<Solution> {
    check_channel(config, channel)?;
    require_rf_equals_users(config, "MiLAC-only beamforming")?;
    let bcd = Bcd {
        channel,
        noise: config.scaled_noise_grid(),
        total_power: config.total_power,
        analog: AnalogStage::Optimized(AnalogConstraint::SpectralBall),
        optimize_digital: false,
        options,
    };
    best_of(options, |scheme| {
        let (p0, _) = initialize(config, channel, scheme, rng)?;
        let (p, w, trace) = bcd.run(Some(p0), frozen_precoders(config))?;
        Ok(Solution {
            analog: p.expect("analog matrix"),
            digital: w,
            trace,
        })
    })
}

/// Fully-connected phase-shifter network (entries of modulus `1/sqrt(N_T)`,
/// so every column has unit norm), hybrid or analog-only. Rates use the same
/// scaled noise as the MiLAC schemes.
pub fn solve_phase_shifter<R: Rng + ?Sized>(
    config: &SystemConfig,
    channel: &FreqChannel,
    options: &SolverOptions,
    mode: PhaseShifterMode,
    rng: &mut R,
) -> Result<Solution> {
    check_channel(config, channel)?;
    if mode == PhaseShifterMode::AnalogOnly {
        require_rf_equals_users(config, "analog-only beamforming")?;
    }
    let bcd = Bcd {
        channel,
        noise: config.scaled_noise_grid(),
        total_power: config.total_power,
        analog: AnalogStage::Optimized(AnalogConstraint::PhaseShifter),
        optimize_digital: mode == PhaseShifterMode::Hybrid,
        options,
    };
    best_of(options, |scheme| {
        let (p0, _) = initialize(config, channel, scheme, rng)?;
        let p0 = project_phase_shifter(&p0);
        let w0 = match mode {
            PhaseShifterMode::Hybrid => {
                init::matched_filter_precoders(&p0, channel, config.total_power)
            }
            PhaseShifterMode::AnalogOnly => frozen_precoders(config),
        };
        let (p, w, trace) = bcd.run(Some(p0), w0)?;
        Ok(Solution {
            analog: p.expect("analog matrix"),
            digital: w,
            trace,
        })
    })
}
