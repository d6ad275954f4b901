//! Shared fixtures for the solver benchmarks.

use milacbeam::{generate_channel, FreqChannel, SystemConfig};

/// Configuration and channel for a benchmark case.
pub fn fixture(
    n_subcarriers: usize,
    n_tx: usize,
    n_users: usize,
    n_rf: usize,
    seed: u64,
) -> (SystemConfig, FreqChannel) {
    let mut cfg = SystemConfig {
        n_subcarriers,
        n_tx,
        n_users,
        n_rf,
        n_taps: (n_subcarriers / 4).max(1),
        ..SystemConfig::full_size()
    };
    cfg.set_snr_db(10.0);
    let ch = generate_channel(&cfg, seed).expect("valid fixture");
    (cfg, ch)
}
