//! Seeded Monte-Carlo experiments.
//!
//! Every `(sweep point, trial)` pair draws one channel from a seed derived
//! from the base seed, and all requested schemes run on that same channel so
//! comparisons are paired. Trials may run in parallel; results are reduced in
//! trial order, so the output depends only on the spec.

mod io;
mod spec;

use std::time::Instant;

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{generate_channel, generate_pdp, rms_delay_spread};
use crate::error::{Error, Result};
use crate::model::{compute_avg_sum_rate, SystemConfig};
use crate::optimizer::{
    solve_fully_digital, solve_hybrid_milac, solve_milac_only, solve_phase_shifter,
    PhaseShifterMode, Solution,
};
use crate::realize::{realize_fully_digital, DigitalTargetSet, DEFAULT_RANK_TOL};

pub use io::{companion_paths, read_results, write_results};
pub use spec::{ExperimentKind, ExperimentSpec, Scheme};

pub const VERSION: &str = concat!("milacbeam ", env!("CARGO_PKG_VERSION"));

/// Largest tolerated fraction of failed solver runs.
pub const MAX_FAILURE_FRACTION: f64 = 0.1;

/// Aggregate over the trials of one `(scheme, sweep value)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: ExperimentKind,
    pub scheme: Scheme,
    pub sweep_value: f64,
    pub tau_over_ts: Option<f64>,
    pub mean_sumrate: f64,
    /// Sample standard deviation (zero for a single trial).
    pub std: f64,
    pub trials: usize,
    pub mean_iters: f64,
    pub mean_wall_s: f64,
    pub seed: u64,
}

/// One solver run on one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub scheme: Scheme,
    pub sweep_index: usize,
    pub trial: usize,
    pub sumrate: f64,
    pub iterations: usize,
    pub wall_s: f64,
    pub channel_digest: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub version: String,
    pub failures: usize,
    pub spec: ExperimentSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
    pub records: Vec<TrialRecord>,
    pub metadata: RunMetadata,
}

impl ExperimentResult {
    pub fn row(&self, scheme: Scheme, sweep_value: f64) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.scheme == scheme && r.sweep_value == sweep_value)
    }

    /// Per-trial sum-rates of one cell, in trial order.
    pub fn trial_rates(&self, scheme: Scheme, sweep_index: usize) -> Vec<(usize, f64)> {
        self.records
            .iter()
            .filter(|r| r.scheme == scheme && r.sweep_index == sweep_index)
            .map(|r| (r.trial, r.sumrate))
            .collect()
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Channel seed of trial `trial` at sweep point `sweep_index`.
pub fn trial_seed(base: u64, sweep_index: usize, trial: usize) -> u64 {
    splitmix(splitmix(splitmix(base) ^ sweep_index as u64) ^ trial as u64)
}

fn scheme_rng(channel_seed: u64, scheme: Scheme) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(splitmix(channel_seed ^ (0x5eed_0000 + scheme as u64)))
}

/// `tau_rms / T_s` for each swept decay factor of a delay sweep.
pub fn compute_sweep_axis(spec: &ExperimentSpec) -> Result<Vec<f64>> {
    if spec.experiment != ExperimentKind::DelaySweep {
        return Err(Error::InvalidConfig(format!(
            "sweep axis mapping applies to delay sweeps, not {}",
            spec.experiment
        )));
    }
    spec.sweep
        .iter()
        .map(|&eps| {
            Ok(rms_delay_spread(
                &generate_pdp(spec.system.n_taps, eps)?,
                1.0,
            ))
        })
        .collect()
}

/// System configuration at sweep point `value`.
fn config_at(spec: &ExperimentSpec, value: f64) -> SystemConfig {
    let mut cfg = spec.system.clone();
    if let Some(snr) = spec.snr_db {
        cfg.set_snr_db(snr);
    }
    match spec.experiment {
        ExperimentKind::SnrSweep => cfg.set_snr_db(value),
        ExperimentKind::DelaySweep => cfg.pdp_decay = value,
        ExperimentKind::RfSweep => cfg.n_rf = value as usize,
        ExperimentKind::Convergence | ExperimentKind::RealizeCheck => {}
    }
    cfg
}

fn run_scheme(
    scheme: Scheme,
    cfg: &SystemConfig,
    spec: &ExperimentSpec,
    ch: &crate::channel::FreqChannel,
    seed: u64,
) -> Result<Solution> {
    let mut rng = scheme_rng(seed, scheme);
    let opts = &spec.solver;
    let k_chains = SystemConfig {
        n_rf: cfg.n_users,
        ..cfg.clone()
    };
    match scheme {
        Scheme::Digital => solve_fully_digital(cfg, ch, opts, &mut rng),
        Scheme::HybridMilac => solve_hybrid_milac(cfg, ch, opts, &mut rng),
        Scheme::MilacOnly => solve_milac_only(&k_chains, ch, opts, &mut rng),
        Scheme::HybridPs => solve_phase_shifter(cfg, ch, opts, PhaseShifterMode::Hybrid, &mut rng),
        Scheme::AnalogPs => {
            solve_phase_shifter(&k_chains, ch, opts, PhaseShifterMode::AnalogOnly, &mut rng)
        }
    }
}

/// What one solver run contributes before aggregation.
struct Outcome {
    record: TrialRecord,
    /// Sum-rate after each outer iteration (convergence runs only).
    path: Vec<f64>,
}

fn run_task(spec: &ExperimentSpec, sweep_index: usize, trial: usize) -> Vec<Result<Outcome>> {
    let value = match spec.experiment {
        ExperimentKind::Convergence | ExperimentKind::RealizeCheck => f64::NAN,
        _ => spec.sweep[sweep_index],
    };
    let cfg = config_at(spec, value);
    let seed = trial_seed(spec.system.seed, sweep_index, trial);
    let ch = match generate_channel(&cfg, seed) {
        Ok(ch) => ch,
        Err(e) => return vec![Err(e)],
    };
    let digest = ch.digest();
    let wall = |t: Instant| {
        if spec.timing {
            t.elapsed().as_secs_f64()
        } else {
            0.0
        }
    };

    if spec.experiment == ExperimentKind::RealizeCheck {
        let t = Instant::now();
        let digital = match run_scheme(Scheme::Digital, &cfg, spec, &ch, seed) {
            Ok(s) => s,
            Err(e) => return vec![Err(e)],
        };
        let targets = DigitalTargetSet::from(digital.digital.clone());
        let noise = cfg.scaled_noise_grid();
        return spec
            .sweep
            .iter()
            .enumerate()
            .map(|(i, &chains)| {
                let rate = if targets.power() > 0.0 {
                    let r =
                        realize_fully_digital(&targets, DEFAULT_RANK_TOL, Some(chains as usize))?;
                    compute_avg_sum_rate(&ch, &r.p, &r.w, &noise)?
                } else {
                    0.0
                };
                Ok(Outcome {
                    record: TrialRecord {
                        scheme: Scheme::Digital,
                        sweep_index: i,
                        trial,
                        sumrate: rate,
                        iterations: digital.trace.iterations(),
                        wall_s: wall(t),
                        channel_digest: digest,
                    },
                    path: Vec::new(),
                })
            })
            .collect();
    }

    spec.schemes
        .iter()
        .map(|&scheme| {
            let t = Instant::now();
            let sol = run_scheme(scheme, &cfg, spec, &ch, seed)?;
            Ok(Outcome {
                record: TrialRecord {
                    scheme,
                    sweep_index,
                    trial,
                    sumrate: sol.sumrate(),
                    iterations: sol.trace.iterations(),
                    wall_s: wall(t),
                    channel_digest: digest,
                },
                path: if spec.experiment == ExperimentKind::Convergence {
                    sol.trace.sumrate_per_iter
                } else {
                    Vec::new()
                },
            })
        })
        .collect()
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

fn aggregate(
    spec: &ExperimentSpec,
    scheme: Scheme,
    sweep_value: f64,
    tau: f64,
    outcomes: &[&Outcome],
    rate_of: impl Fn(&Outcome) -> f64,
) -> ResultRow {
    let rates: Vec<f64> = outcomes.iter().map(|o| rate_of(o)).collect();
    let (mean, std) = mean_std(&rates);
    let n = outcomes.len().max(1) as f64;
    ResultRow {
        experiment: spec.experiment,
        scheme,
        sweep_value,
        tau_over_ts: Some(tau),
        mean_sumrate: mean,
        std,
        trials: outcomes.len(),
        mean_iters: outcomes
            .iter()
            .map(|o| o.record.iterations as f64)
            .sum::<f64>()
            / n,
        mean_wall_s: outcomes.iter().map(|o| o.record.wall_s).sum::<f64>() / n,
        seed: spec.system.seed,
    }
}

/// Run every trial of `spec` and aggregate per `(scheme, sweep value)`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let points = match spec.experiment {
        ExperimentKind::Convergence | ExperimentKind::RealizeCheck => 1,
        _ => spec.sweep.len(),
    };
    let tasks: Vec<(usize, usize)> = (0..points)
        .flat_map(|i| (0..spec.trials).map(move |t| (i, t)))
        .collect();
    let results: Vec<Vec<Result<Outcome>>> = tasks
        .par_iter()
        .map(|&(i, t)| run_task(spec, i, t))
        .collect();

    let runs_per_task = match spec.experiment {
        ExperimentKind::RealizeCheck => spec.sweep.len(),
        _ => spec.schemes.len(),
    };
    let total = tasks.len() * runs_per_task;
    let mut failures = 0;
    let mut outcomes = Vec::with_capacity(total);
    for ((i, t), res) in tasks.iter().zip(results) {
        let n_res = res.len();
        for r in res {
            match r {
                Ok(o) => outcomes.push(o),
                Err(e) => {
                    // a task that failed before any solver ran counts for all
                    failures += if n_res == 1 { runs_per_task } else { 1 };
                    warn!("sweep point {i}, trial {t}: {e}");
                }
            }
        }
    }
    if failures as f64 > MAX_FAILURE_FRACTION * total as f64 {
        return Err(Error::TooManyFailures {
            failed: failures,
            total,
        });
    }

    let mut rows = Vec::new();
    match spec.experiment {
        ExperimentKind::Convergence => {
            let tau = rms_delay_spread(
                &generate_pdp(spec.system.n_taps, spec.system.pdp_decay)?,
                1.0,
            );
            for &scheme in &spec.schemes {
                let cell: Vec<&Outcome> = outcomes
                    .iter()
                    .filter(|o| o.record.scheme == scheme)
                    .collect();
                for &it in &spec.sweep {
                    let idx = it as usize;
                    rows.push(aggregate(spec, scheme, it, tau, &cell, |o| {
                        // runs that stopped early hold their final value
                        match idx {
                            0 => f64::NAN,
                            _ => o
                                .path
                                .get(idx - 1)
                                .or(o.path.last())
                                .copied()
                                .unwrap_or(o.record.sumrate),
                        }
                    }));
                }
            }
        }
        _ => {
            let taus: Vec<f64> = match spec.experiment {
                ExperimentKind::DelaySweep => compute_sweep_axis(spec)?,
                _ => {
                    let tau = rms_delay_spread(
                        &generate_pdp(spec.system.n_taps, spec.system.pdp_decay)?,
                        1.0,
                    );
                    vec![tau; spec.sweep.len()]
                }
            };
            let schemes = match spec.experiment {
                ExperimentKind::RealizeCheck => vec![Scheme::Digital],
                _ => spec.schemes.clone(),
            };
            for &scheme in &schemes {
                for (i, &value) in spec.sweep.iter().enumerate() {
                    let cell: Vec<&Outcome> = outcomes
                        .iter()
                        .filter(|o| o.record.scheme == scheme && o.record.sweep_index == i)
                        .collect();
                    rows.push(aggregate(spec, scheme, value, taus[i], &cell, |o| {
                        o.record.sumrate
                    }));
                }
            }
        }
    }

    Ok(ExperimentResult {
        rows,
        records: outcomes.into_iter().map(|o| o.record).collect(),
        metadata: RunMetadata {
            version: VERSION.to_string(),
            failures,
            spec: spec.clone(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec(kind: ExperimentKind) -> ExperimentSpec {
        let mut spec = ExperimentSpec::preset(kind, true);
        spec.system = SystemConfig {
            n_subcarriers: 4,
            n_tx: 4,
            n_users: 2,
            n_rf: 2,
            n_taps: 2,
            ..spec.system
        };
        spec.trials = 2;
        spec
    }

    #[test]
    fn trial_seeds_are_distinct_and_stable() {
        let mut seen = std::collections::HashSet::new();
        for i in 0..5 {
            for t in 0..50 {
                assert!(seen.insert(trial_seed(7, i, t)));
            }
        }
        assert_eq!(trial_seed(7, 2, 3), trial_seed(7, 2, 3));
        assert_ne!(trial_seed(7, 2, 3), trial_seed(8, 2, 3));
    }

    #[test]
    fn sweep_axis_matches_delay_spreads() {
        let mut spec = ExperimentSpec::preset(ExperimentKind::DelaySweep, false);
        spec.sweep = vec![4.0, 1.0, 2.0];
        let axis = compute_sweep_axis(&spec).unwrap();
        assert!((axis[0] - 3.32).abs() < 0.01);
        assert!((axis[1] - 0.96).abs() < 0.01);
        assert!((axis[2] - 1.957).abs() < 1e-3);
        assert!(
            compute_sweep_axis(&ExperimentSpec::preset(ExperimentKind::SnrSweep, false)).is_err()
        );
    }

    #[test]
    fn all_schemes_see_the_same_channel() {
        let mut spec = tiny_spec(ExperimentKind::SnrSweep);
        spec.sweep = vec![5.0];
        let res = run_experiment(&spec).unwrap();
        for t in 0..spec.trials {
            let digests: Vec<u64> = res
                .records
                .iter()
                .filter(|r| r.trial == t)
                .map(|r| r.channel_digest)
                .collect();
            assert_eq!(digests.len(), spec.schemes.len());
            assert!(digests.windows(2).all(|w| w[0] == w[1]));
        }
        assert_eq!(res.rows.len(), spec.schemes.len());
        assert!(res.rows.iter().all(|r| r.trials == spec.trials));
    }

    #[test]
    fn realize_check_recovers_digital_rate_with_enough_chains() {
        let mut spec = tiny_spec(ExperimentKind::RealizeCheck);
        spec.sweep = vec![1.0, 4.0];
        let res = run_experiment(&spec).unwrap();
        let mut digital = tiny_spec(ExperimentKind::SnrSweep);
        digital.schemes = vec![Scheme::Digital];
        digital.sweep = vec![digital.system.snr_db()];
        let reference = run_experiment(&digital).unwrap().rows[0].mean_sumrate;
        let full = res.row(Scheme::Digital, 4.0).unwrap().mean_sumrate;
        let one = res.row(Scheme::Digital, 1.0).unwrap().mean_sumrate;
        assert!((full - reference).abs() < 1e-9 * reference);
        assert!(one < full);
        assert_eq!(res.rows.len(), 2);
    }

    #[test]
    fn convergence_rows_are_non_decreasing_for_hybrid() {
        let mut spec = tiny_spec(ExperimentKind::Convergence);
        spec.schemes = vec![Scheme::HybridMilac];
        spec.sweep = vec![1.0, 2.0, 5.0, 50.0];
        let res = run_experiment(&spec).unwrap();
        let means: Vec<f64> = res.rows.iter().map(|r| r.mean_sumrate).collect();
        assert!(means.windows(2).all(|w| w[1] >= w[0] - 1e-9), "{means:?}");
    }
}
