//! Result files: the summary CSV, a TOML metadata file echoing the resolved
//! spec, and a per-trial CSV for paired analyses.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ExperimentKind, ExperimentResult, ResultRow, RunMetadata, Scheme, TrialRecord};
use crate::error::{Error, Result};

const HEADER: [&str; 10] = [
    "experiment",
    "scheme",
    "sweep_value",
    "tau_over_Ts",
    "mean_sumrate",
    "std",
    "trials",
    "mean_iters",
    "mean_wall_s",
    "seed",
];

const TRIAL_HEADER: [&str; 7] = [
    "scheme",
    "sweep_index",
    "trial",
    "sumrate",
    "iterations",
    "wall_s",
    "channel_digest",
];

/// CSV layout of a summary row.
#[derive(Serialize, Deserialize)]
struct CsvRow {
    experiment: ExperimentKind,
    scheme: Scheme,
    sweep_value: f64,
    #[serde(rename = "tau_over_Ts")]
    tau_over_ts: Option<f64>,
    mean_sumrate: f64,
    std: f64,
    trials: usize,
    mean_iters: f64,
    mean_wall_s: f64,
    seed: u64,
}

impl From<&ResultRow> for CsvRow {
    fn from(r: &ResultRow) -> Self {
        CsvRow {
            experiment: r.experiment,
            scheme: r.scheme,
            sweep_value: r.sweep_value,
            tau_over_ts: r.tau_over_ts,
            mean_sumrate: r.mean_sumrate,
            std: r.std,
            trials: r.trials,
            mean_iters: r.mean_iters,
            mean_wall_s: r.mean_wall_s,
            seed: r.seed,
        }
    }
}

impl From<CsvRow> for ResultRow {
    fn from(r: CsvRow) -> Self {
        ResultRow {
            experiment: r.experiment,
            scheme: r.scheme,
            sweep_value: r.sweep_value,
            tau_over_ts: r.tau_over_ts,
            mean_sumrate: r.mean_sumrate,
            std: r.std,
            trials: r.trials,
            mean_iters: r.mean_iters,
            mean_wall_s: r.mean_wall_s,
            seed: r.seed,
        }
    }
}

/// `(metadata, per-trial)` paths next to a summary CSV:
/// `out.csv` -> `out.meta.toml`, `out.trials.csv`.
pub fn companion_paths(path: &Path) -> (PathBuf, PathBuf) {
    (
        path.with_extension("meta.toml"),
        path.with_extension("trials.csv"),
    )
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn write_csv<T: Serialize>(
    path: &Path,
    header: &[&str],
    rows: impl Iterator<Item = T>,
) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path, header: &[&str]) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let found: Vec<String> = r
        .headers()
        .map_err(csv_err(path))?
        .iter()
        .map(String::from)
        .collect();
    if found != header {
        return Err(Error::Parse(format!(
            "{}: unexpected header {found:?}",
            path.display()
        )));
    }
    r.deserialize().map(|x| x.map_err(csv_err(path))).collect()
}

/// Write the summary CSV at `path` plus its two companion files.
pub fn write_results(result: &ExperimentResult, path: &Path) -> Result<()> {
    write_csv(path, &HEADER, result.rows.iter().map(CsvRow::from))?;
    let (meta, trials) = companion_paths(path);
    let text = toml::to_string(&result.metadata)
        .map_err(|e| Error::Parse(format!("serialising metadata: {e}")))?;
    std::fs::write(&meta, text).map_err(|e| Error::io(&meta, e))?;
    write_csv(&trials, &TRIAL_HEADER, result.records.iter())
}

/// Read back what [`write_results`] wrote.
pub fn read_results(path: &Path) -> Result<ExperimentResult> {
    let rows = read_csv::<CsvRow>(path, &HEADER)?
        .into_iter()
        .map(ResultRow::from)
        .collect();
    let (meta, trials) = companion_paths(path);
    let text = std::fs::read_to_string(&meta).map_err(|e| Error::io(&meta, e))?;
    let metadata: RunMetadata =
        toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", meta.display())))?;
    let records = read_csv::<TrialRecord>(&trials, &TRIAL_HEADER)?;
    Ok(ExperimentResult {
        rows,
        records,
        metadata,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{ExperimentSpec, VERSION};

    fn result(rows: Vec<ResultRow>) -> ExperimentResult {
        ExperimentResult {
            rows,
            records: vec![TrialRecord {
                scheme: Scheme::HybridPs,
                sweep_index: 1,
                trial: 4,
                sumrate: 0.1 + 0.2,
                iterations: 17,
                wall_s: 0.0,
                channel_digest: u64::MAX,
            }],
            metadata: RunMetadata {
                version: VERSION.into(),
                failures: 0,
                spec: ExperimentSpec::preset(ExperimentKind::SnrSweep, true),
            },
        }
    }

    fn row(scheme: Scheme, v: f64) -> ResultRow {
        ResultRow {
            experiment: ExperimentKind::SnrSweep,
            scheme,
            sweep_value: v,
            tau_over_ts: if v > 0.0 { Some(1.0 / 3.0) } else { None },
            mean_sumrate: 12.345678901234567,
            std: 1e-17,
            trials: 50,
            mean_iters: 33.3,
            mean_wall_s: 0.0,
            seed: 42,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        let rows: Vec<ResultRow> = [Scheme::Digital, Scheme::HybridMilac, Scheme::AnalogPs]
            .into_iter()
            .flat_map(|s| [0.0, 10.0].map(|v| row(s, v)))
            .collect();
        let res = result(rows);
        write_results(&res, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 7);
        assert!(text.starts_with("experiment,scheme,sweep_value,tau_over_Ts,"));
        assert_eq!(read_results(&path).unwrap(), res);
    }

    #[test]
    fn empty_result_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        let res = result(Vec::new());
        write_results(&res, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert_eq!(read_results(&path).unwrap(), res);
    }

    #[test]
    fn missing_file_reports_path() {
        let err = read_results(Path::new("/nonexistent/dir/x.csv")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/dir/x.csv"));
    }
}
