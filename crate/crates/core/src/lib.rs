//! Hybrid digital-MiLAC beamforming for wideband multi-user MISO-OFDM.
//!
//! A microwave linear analog computer (MiLAC) sits between a few RF chains
//! and a large antenna array. This crate models the frequency-selective
//! downlink, optimises the analog MiLAC matrix jointly with per-subcarrier
//! digital precoders (WMMSE with block-coordinate descent), realises any
//! fully-digital beamformer with `min(N_T, K N)` RF chains, and runs seeded
//! Monte-Carlo experiments.

pub mod channel;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod milac_net;
pub mod model;
pub mod optimizer;
pub mod realize;
pub mod selftest;
pub mod textio;

pub use channel::{generate_channel, generate_pdp, FreqChannel, PowerDelayProfile, TapChannel};
pub use error::{Error, Result};
pub use harness::{run_experiment, ExperimentKind, ExperimentResult, ExperimentSpec, Scheme};
pub use linalg::{CMat, CVec, C64};
pub use model::{
    compute_avg_sum_rate, AuxiliaryVars, DigitalPrecoders, MiLACMatrix, NoiseGrid, OptimizerTrace,
    SystemConfig,
};
pub use optimizer::{InitScheme, PhaseShifterMode, Solution, SolverOptions};
pub use realize::{min_rf_chains, realize_fully_digital, DigitalTargetSet, Realization};
