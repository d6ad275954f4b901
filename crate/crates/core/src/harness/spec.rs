use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SystemConfig;
use crate::optimizer::SolverOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Digital,
    HybridMilac,
    MilacOnly,
    HybridPs,
    AnalogPs,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::Digital,
        Scheme::HybridMilac,
        Scheme::MilacOnly,
        Scheme::HybridPs,
        Scheme::AnalogPs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Digital => "digital",
            Scheme::HybridMilac => "hybrid-milac",
            Scheme::MilacOnly => "milac-only",
            Scheme::HybridPs => "hybrid-ps",
            Scheme::AnalogPs => "analog-ps",
        }
    }

    /// Schemes restricted to `N_RF = K`.
    pub fn needs_k_chains(self) -> bool {
        matches!(self, Scheme::MilacOnly | Scheme::AnalogPs)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown scheme {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Sweep values are SNRs in dB.
    SnrSweep,
    /// Sweep values are PDP decay factors.
    DelaySweep,
    /// Sweep values are RF-chain counts for the hybrid schemes.
    RfSweep,
    /// Sweep values are outer-iteration indices at which the mean sum-rate is
    /// reported.
    Convergence,
    /// Sweep values are RF-chain counts used to realise the fully-digital
    /// solution of each trial (one channel per trial, shared by all counts).
    RealizeCheck,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::SnrSweep,
        ExperimentKind::DelaySweep,
        ExperimentKind::RfSweep,
        ExperimentKind::Convergence,
        ExperimentKind::RealizeCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::SnrSweep => "snr-sweep",
            ExperimentKind::DelaySweep => "delay-sweep",
            ExperimentKind::RfSweep => "rf-sweep",
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::RealizeCheck => "realize-check",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown experiment {s:?}")))
    }
}

/// Everything needed to reproduce a run. The base seed is `system.seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub experiment: ExperimentKind,
    pub schemes: Vec<Scheme>,
    pub sweep: Vec<f64>,
    pub trials: usize,
    /// SNR applied before the sweep variable (used by non-SNR sweeps).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
    /// Record wall-clock times. Off by default so reruns are byte-identical.
    #[serde(default)]
    pub timing: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub system: SystemConfig,
    #[serde(default)]
    pub solver: SolverOptions,
}

impl ExperimentSpec {
    /// Default setup of each experiment: full size with 50 trials, or the
    /// reduced system with 20 trials when `small` is set.
    pub fn preset(kind: ExperimentKind, small: bool) -> Self {
        let system = if small {
            SystemConfig::small()
        } else {
            SystemConfig::full_size()
        };
        let k = system.n_users as f64;
        let (schemes, sweep, snr_db) = match kind {
            ExperimentKind::SnrSweep => (Scheme::ALL.to_vec(), vec![0.0, 5.0, 10.0, 15.0], None),
            ExperimentKind::DelaySweep => (
                Scheme::ALL.to_vec(),
                vec![0.1, 0.5, 1.0, 2.0, 4.0],
                Some(5.0),
            ),
            ExperimentKind::RfSweep => (
                vec![Scheme::Digital, Scheme::HybridMilac, Scheme::HybridPs],
                vec![k, 2.0 * k, 4.0 * k],
                None,
            ),
            ExperimentKind::Convergence => (
                vec![Scheme::HybridMilac],
                vec![1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0],
                None,
            ),
            ExperimentKind::RealizeCheck => (
                vec![Scheme::Digital],
                vec![k, 2.0 * k, 4.0 * k, system.n_tx as f64],
                None,
            ),
        };
        ExperimentSpec {
            experiment: kind,
            schemes,
            sweep,
            trials: if small { 20 } else { 50 },
            snr_db,
            timing: false,
            output: None,
            system,
            solver: SolverOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.sweep.is_empty() {
            return bad("sweep list is empty".into());
        }
        if self.schemes.is_empty() {
            return bad("no schemes requested".into());
        }
        if let Some(v) = self.sweep.iter().find(|v| !v.is_finite()) {
            return bad(format!("sweep value {v} is not finite"));
        }
        self.system.validate()?;
        self.solver.validate()?;
        let counts = |what: &str| -> Result<()> {
            for &v in &self.sweep {
                if v < 1.0 || v.fract() != 0.0 || v as usize > self.system.n_tx {
                    return bad(format!(
                        "{what} sweep value {v} must be an integer in 1..={}",
                        self.system.n_tx
                    ));
                }
            }
            Ok(())
        };
        match self.experiment {
            ExperimentKind::DelaySweep => {
                if let Some(v) = self.sweep.iter().find(|v| !(**v > 0.0)) {
                    return bad(format!("decay factor {v} must be positive"));
                }
            }
            ExperimentKind::RfSweep => {
                counts("RF-chain")?;
                if let Some(s) = self.schemes.iter().find(|s| s.needs_k_chains()) {
                    return bad(format!(
                        "{s} has a fixed chain count and cannot be RF-swept"
                    ));
                }
            }
            ExperimentKind::Convergence => {
                if let Some(v) = self.sweep.iter().find(|v| **v < 1.0 || v.fract() != 0.0) {
                    return bad(format!("iteration index {v} must be a positive integer"));
                }
            }
            ExperimentKind::RealizeCheck => counts("RF-chain")?,
            ExperimentKind::SnrSweep => {}
        }
        Ok(())
    }

    /// Resolve a config file over the preset for `kind` (or the file's own
    /// `experiment` key when `kind` is `None`). Tables merge key by key, so a
    /// file only needs the fields it changes.
    pub fn from_toml(text: &str, kind: Option<ExperimentKind>, small: bool) -> Result<Self> {
        let file: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Parse(format!("config: {e}")))?;
        let kind = match kind {
            Some(k) => k,
            None => match file.get("experiment").and_then(|v| v.as_str()) {
                Some(s) => s.parse()?,
                None => return Err(Error::InvalidConfig("no experiment given".into())),
            },
        };
        let mut merged = toml::Table::try_from(Self::preset(kind, small))
            .map_err(|e| Error::Parse(format!("preset: {e}")))?;
        merge(&mut merged, file);
        merged.insert("experiment".into(), toml::Value::String(kind.name().into()));
        let spec: ExperimentSpec = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Parse(format!("config: {e}")))?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(format!("serialising spec: {e}")))
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
        }
        for k in ExperimentKind::ALL {
            assert_eq!(k.name().parse::<ExperimentKind>().unwrap(), k);
        }
        assert!("hybrid".parse::<Scheme>().is_err());
    }

    #[test]
    fn presets_validate() {
        for k in ExperimentKind::ALL {
            ExperimentSpec::preset(k, false).validate().unwrap();
            ExperimentSpec::preset(k, true).validate().unwrap();
        }
    }

    #[test]
    fn partial_file_overlays_preset() {
        let text = r#"
            experiment = "delay-sweep"
            trials = 3
            sweep = [0.5, 4]
            [system]
            n_rf = 8
            [solver]
            max_outer = 20
        "#;
        let spec = ExperimentSpec::from_toml(text, None, false).unwrap();
        assert_eq!(spec.experiment, ExperimentKind::DelaySweep);
        assert_eq!(spec.trials, 3);
        assert_eq!(spec.sweep, vec![0.5, 4.0]);
        assert_eq!(spec.system.n_rf, 8);
        assert_eq!(spec.system.n_tx, 64);
        assert_eq!(spec.solver.max_outer, 20);
        assert_eq!(spec.solver.outer_tol, 1e-5);
        assert_eq!(spec.snr_db, Some(5.0));

        let cli = ExperimentSpec::from_toml(text, Some(ExperimentKind::SnrSweep), true).unwrap();
        assert_eq!(cli.experiment, ExperimentKind::SnrSweep);
        assert_eq!(cli.system.n_tx, 16);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(
            ExperimentSpec::from_toml("trails = 3", Some(ExperimentKind::SnrSweep), true).is_err()
        );
        assert!(ExperimentSpec::from_toml(
            "[system]\nn_antennas = 3",
            Some(ExperimentKind::SnrSweep),
            true
        )
        .is_err());
        assert!(ExperimentSpec::from_toml("trials = 3", None, true).is_err());
    }

    #[test]
    fn echo_is_a_valid_config() {
        let spec = ExperimentSpec::preset(ExperimentKind::RfSweep, true);
        let back = ExperimentSpec::from_toml(&spec.to_toml().unwrap(), None, false).unwrap();
        assert_eq!(spec, back);
    }

    #[test]
    fn invalid_sweeps_are_rejected() {
        let mut spec = ExperimentSpec::preset(ExperimentKind::RfSweep, true);
        spec.sweep = vec![2.5];
        assert!(spec.validate().is_err());
        spec.sweep = vec![2.0];
        spec.schemes = vec![Scheme::MilacOnly];
        assert!(spec.validate().is_err());
        let mut spec = ExperimentSpec::preset(ExperimentKind::DelaySweep, true);
        spec.sweep = vec![0.0];
        assert!(spec.validate().is_err());
        spec.sweep.clear();
        assert!(spec.validate().is_err());
    }
}
