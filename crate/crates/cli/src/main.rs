use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::info;
use rand::SeedableRng;

use milacbeam::channel::{generate_channel, FreqChannel};
use milacbeam::harness::{write_results, ExperimentKind, ExperimentSpec};
use milacbeam::model::compute_avg_sum_rate;
use milacbeam::optimizer::{solve_fully_digital, SolverOptions};
use milacbeam::realize::{
    min_rf_chains, realization_residual, realize_fully_digital, DigitalTargetSet, DEFAULT_RANK_TOL,
};
use milacbeam::selftest::run_selftest;
use milacbeam::{run_experiment, NoiseGrid, SystemConfig};

#[derive(Parser)]
#[command(
    name = "milacbeam",
    version,
    about = "Hybrid digital-MiLAC beamforming experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte-Carlo experiment and write CSV results.
    Run {
        /// TOML file with experiment fields and [system] / [solver] tables.
        #[arg(long)]
        config: Option<PathBuf>,
        /// snr-sweep, delay-sweep, rf-sweep, convergence or realize-check.
        #[arg(long)]
        experiment: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Start from the reduced preset (N = 16, N_T = 16, K = 2, 20 trials).
        #[arg(long)]
        small: bool,
    },
    /// Run the built-in invariant checks.
    Selftest {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Solve fully-digital beamforming on one channel and dump the channel
    /// and the precoders.
    Digital {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        small: bool,
        #[arg(long)]
        targets: PathBuf,
        #[arg(long)]
        channel: Option<PathBuf>,
    },
    /// Realise a stored fully-digital precoder set with a MiLAC matrix.
    Realize {
        #[arg(long)]
        targets: PathBuf,
        /// RF chains to use (default: numerical rank of the targets).
        #[arg(long)]
        n_rf: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_RANK_TOL)]
        rank_tol: f64,
        /// Channel dump for comparing sum-rates before and after.
        #[arg(long)]
        channel: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        noise_var: f64,
    },
}

fn load_spec(
    config: Option<&Path>,
    experiment: Option<&str>,
    small: bool,
) -> Result<ExperimentSpec> {
    let kind = experiment.map(str::parse::<ExperimentKind>).transpose()?;
    let spec = match config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            ExperimentSpec::from_toml(&text, kind, small)
                .with_context(|| format!("in {}", path.display()))?
        }
        None => match kind {
            Some(k) => ExperimentSpec::preset(k, small),
            None => bail!("give --experiment or a --config that names one"),
        },
    };
    Ok(spec)
}

fn cmd_run(
    config: Option<PathBuf>,
    experiment: Option<String>,
    seed: Option<u64>,
    trials: Option<usize>,
    out: Option<PathBuf>,
    small: bool,
) -> Result<()> {
    let mut spec = load_spec(config.as_deref(), experiment.as_deref(), small)?;
    if let Some(s) = seed {
        spec.system.seed = s;
    }
    if let Some(t) = trials {
        spec.trials = t;
    }
    if let Some(o) = out {
        spec.output = Some(o);
    }
    let out = spec
        .output
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.csv", spec.experiment)));
    spec.validate()?;
    info!(
        "{}: {} sweep points x {} trials, schemes {:?}",
        spec.experiment,
        spec.sweep.len(),
        spec.trials,
        spec.schemes.iter().map(|s| s.name()).collect::<Vec<_>>()
    );
    let result = run_experiment(&spec)?;
    write_results(&result, &out).with_context(|| format!("writing {}", out.display()))?;
    println!(
        "{:<14} {:>12} {:>10} {:>14} {:>10} {:>7}",
        "scheme", "sweep", "tau/Ts", "sum-rate", "std", "trials"
    );
    for r in &result.rows {
        println!(
            "{:<14} {:>12} {:>10.4} {:>14.4} {:>10.4} {:>7}",
            r.scheme.name(),
            r.sweep_value,
            r.tau_over_ts.unwrap_or(f64::NAN),
            r.mean_sumrate,
            r.std,
            r.trials
        );
    }
    if result.metadata.failures > 0 {
        eprintln!(
            "{} solver runs failed and were excluded",
            result.metadata.failures
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_selftest(seed: u64) -> Result<bool> {
    let mut ok = true;
    for c in run_selftest(seed) {
        println!(
            "[{}] {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
        ok &= c.passed;
    }
    Ok(ok)
}

fn cmd_digital(
    config: Option<PathBuf>,
    seed: u64,
    small: bool,
    targets: PathBuf,
    channel: Option<PathBuf>,
) -> Result<()> {
    let (cfg, opts) = match config {
        Some(path) => {
            let spec = load_spec(Some(&path), Some("snr-sweep"), small)?;
            (spec.system, spec.solver)
        }
        None if small => (SystemConfig::small(), SolverOptions::default()),
        None => (SystemConfig::full_size(), SolverOptions::default()),
    };
    let ch = generate_channel(&cfg, seed)?;
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
    let sol = solve_fully_digital(&cfg, &ch, &opts, &mut rng)?;
    DigitalTargetSet::from(sol.digital.clone()).write_text(&targets)?;
    if let Some(path) = channel {
        ch.write_text(&path)?;
    }
    println!(
        "fully-digital sum-rate {:.6} bits/s/Hz after {} iterations; targets written to {}",
        sol.sumrate(),
        sol.trace.iterations(),
        targets.display()
    );
    Ok(())
}

fn cmd_realize(
    targets: PathBuf,
    n_rf: Option<usize>,
    rank_tol: f64,
    channel: Option<PathBuf>,
    noise_var: f64,
) -> Result<()> {
    let t = DigitalTargetSet::read_text(&targets)
        .with_context(|| format!("reading {}", targets.display()))?;
    let bound = min_rf_chains(t.n_tx(), t.n_users(), t.n_subcarriers());
    let r = realize_fully_digital(&t, rank_tol, n_rf)?;
    let residual = realization_residual(&r.p, &r.w, &t)?;
    println!(
        "subcarriers {}, antennas {}, users {}",
        t.n_subcarriers(),
        t.n_tx(),
        t.n_users()
    );
    println!("chains sufficient for any target set: {bound}");
    println!(
        "numerical rank of this target set: {}",
        r.singular_values
            .iter()
            .filter(|s| **s > rank_tol * r.singular_values[0])
            .count()
    );
    println!(
        "RF chains used: {} (rank kept {})",
        r.p.ncols(),
        r.n_rf_used
    );
    println!(
        "spectral norm of P: {:.12}",
        milacbeam::linalg::spectral_norm(&r.p)
    );
    println!("relative residual ||P W - W_D||_F / ||W_D||_F: {residual:.3e}");
    if let Some(path) = channel {
        let ch =
            FreqChannel::read_text(&path).with_context(|| format!("reading {}", path.display()))?;
        let noise =
            NoiseGrid::uniform(ch.n_users(), ch.n_subcarriers(), noise_var).scaled_for_milac();
        let eye = milacbeam::CMat::identity(t.n_tx(), t.n_tx());
        let digital = milacbeam::DigitalPrecoders::new(t.blocks().to_vec())?;
        let before = compute_avg_sum_rate(&ch, &eye, &digital, &noise)?;
        let after = compute_avg_sum_rate(&ch, &r.p, &r.w, &noise)?;
        println!("sum-rate fully digital {before:.9}, realised {after:.9}");
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Run {
            config,
            experiment,
            seed,
            trials,
            out,
            small,
        } => cmd_run(config, experiment, seed, trials, out, small).map(|_| true),
        Command::Selftest { seed } => cmd_selftest(seed),
        Command::Digital {
            config,
            seed,
            small,
            targets,
            channel,
        } => cmd_digital(config, seed, small, targets, channel).map(|_| true),
        Command::Realize {
            targets,
            n_rf,
            rank_tol,
            channel,
            noise_var,
        } => cmd_realize(targets, n_rf, rank_tol, channel, noise_var).map(|_| true),
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
