//! Run a config to files, and summarize a directory of results.
//!
//! `results.json` schema (version 1):
//!
//! | field | meaning |
//! |---|---|
//! | `schema_version` | 1 |
//! | `artifact_version` | crate version |
//! | `experiment` | experiment name |
//! | `config_hash` | SHA-256 of the canonical config (output path excluded) |
//! | `master_seed` | seed every stream derives from |
//! | `timestamp` | seconds since the Unix epoch; the only field that varies between reruns |
//! | `config` | the config as run |
//! | `warnings` | validation warnings |
//! | `verdict` | `pass` unless some gated report failed |
//! | `reports` | list of test reports |
//! | `oracle` | oracle values used by the gates |

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{Experiment, ExperimentConfig};
use crate::error::{Error, Result};
use crate::experiments::{environment, run_experiment, Outcome};
use crate::stats::{TestReport, Verdict};

pub const SCHEMA_VERSION: u32 = 1;
pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Results {
    pub schema_version: u32,
    pub artifact_version: String,
    pub experiment: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub timestamp: u64,
    pub config: ExperimentConfig,
    pub warnings: Vec<String>,
    pub verdict: Verdict,
    pub reports: Vec<TestReport>,
    pub oracle: Value,
}

impl Results {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Run `cfg` and write `results.json`, `samples.csv` and `plot.gp` into
/// `out_dir`. With `export_env`, the charge environments of quenched runs
/// are written as `environment_<e>.csv`.
pub fn run(
    cfg: &ExperimentConfig,
    workers: usize,
    out_dir: &Path,
    export_env: bool,
) -> Result<Results> {
    let warnings = cfg.validate()?;
    let outcome = run_experiment(cfg, workers)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let results = Results {
        schema_version: SCHEMA_VERSION,
        artifact_version: ARTIFACT_VERSION.into(),
        experiment: cfg.experiment.name().into(),
        config_hash: cfg.hash(),
        master_seed: cfg.master_seed,
        timestamp: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        config: cfg.clone(),
        warnings,
        verdict: Verdict::from_bool(outcome.passed()),
        reports: outcome.reports.clone(),
        oracle: outcome.oracle.clone(),
    };
    let json = serde_json::to_string_pretty(&results)?;
    write_file(&out_dir.join("results.json"), &(json + "\n"))?;
    if cfg.samples_csv {
        write_samples(&out_dir.join("samples.csv"), &results, &outcome)?;
        write_file(&out_dir.join("plot.gp"), &plot_script(&results))?;
    }
    if export_env {
        export_environments(cfg, out_dir)?;
    }
    Ok(results)
}

fn provenance(results: &Results) -> String {
    format!(
        "# experiment={} config_hash={} master_seed={} version={}\n",
        results.experiment, results.config_hash, results.master_seed, results.artifact_version
    )
}

fn write_samples(path: &Path, results: &Results, outcome: &Outcome) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(provenance(results).as_bytes()).map_err(io)?;
    writeln!(w, "replica,checkpoint_time,value").map_err(io)?;
    if let Some(table) = &outcome.samples {
        for (r, row) in table.rows.iter().enumerate() {
            for (t, v) in table.times.iter().zip(row) {
                writeln!(w, "{r},{t},{v:e}").map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)
}

fn plot_script(results: &Results) -> String {
    let mut s = provenance(results);
    s.push_str("set datafile separator ','\nset datafile commentschars '#'\n");
    s.push_str("set key off\nset xlabel 'checkpoint time'\nset ylabel 'normalized value'\n");
    let _ = writeln!(s, "set title '{}'", results.experiment);
    s.push_str("plot 'samples.csv' every ::1 using 2:3 with points pt 7 ps 0.3\n");
    s.push_str("pause -1\n");
    s
}

fn export_environments(cfg: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    let len = match cfg.experiment {
        Experiment::QuenchedCltD2 | Experiment::QuenchedCltDge3 => cfg.n,
        Experiment::D1Oscillation => *cfg.n_list.last().unwrap(),
        _ => return Ok(()),
    };
    let law = cfg.charge_law()?;
    for e in 0..cfg.environments as u64 {
        let env = environment(law, cfg.master_seed, e, len as usize)?;
        env.write_csv(&out_dir.join(format!("environment_{e}.csv")))?;
    }
    Ok(())
}

/// `results.json` with the timestamp field removed, for rerun comparisons.
pub fn without_timestamp(json: &str) -> Result<Value> {
    let mut v: Value = serde_json::from_str(json)?;
    if let Some(obj) = v.as_object_mut() {
        obj.remove("timestamp");
    }
    Ok(v)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub path: PathBuf,
    pub experiment: String,
    pub n: u64,
    pub replicas: usize,
    pub key_statistic: String,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, Default)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
    /// Files that could not be read or parsed, with the reason.
    pub skipped: Vec<(PathBuf, String)>,
}

impl Summary {
    pub fn table(&self) -> String {
        let mut s = format!(
            "{:<22} {:>10} {:>9}  {:<44} {}\n",
            "experiment", "n", "replicas", "key statistic", "verdict"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<22} {:>10} {:>9}  {:<44} {}",
                r.experiment, r.n, r.replicas, r.key_statistic, r.verdict
            );
        }
        s
    }
}

fn candidates(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            let inner = path.join("results.json");
            if inner.is_file() {
                out.push(inner);
            }
        } else if path.extension().is_some_and(|x| x == "json") {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn key_statistic(reports: &[TestReport]) -> String {
    let pick = reports
        .iter()
        .find(|r| r.verdict.is_fail())
        .or_else(|| reports.iter().find(|r| r.verdict == Verdict::Pass))
        .or(reports.first());
    match pick {
        Some(r) => format!("{} {}={:.4}", r.name, r.statistic, r.value),
        None => "-".into(),
    }
}

/// One row per parseable results file in `dir` (and its immediate
/// subdirectories), sorted by experiment name, then path.
pub fn summarize(dir: &Path) -> Result<Summary> {
    let mut summary = Summary::default();
    for path in candidates(dir)? {
        let parsed = std::fs::read_to_string(&path)
            .map_err(|e| e.to_string())
            .and_then(|s| serde_json::from_str::<Results>(&s).map_err(|e| e.to_string()));
        match parsed {
            Ok(r) => summary.rows.push(SummaryRow {
                path,
                experiment: r.experiment.clone(),
                n: r.config.n,
                replicas: r.config.replicas,
                key_statistic: key_statistic(&r.reports),
                verdict: r.verdict,
            }),
            Err(reason) => summary.skipped.push((path, reason)),
        }
    }
    summary.rows.sort_by(|a, b| {
        a.experiment
            .cmp(&b.experiment)
            .then_with(|| a.path.cmp(&b.path))
    });
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walk::WalkKind;

    fn oracle_cfg() -> ExperimentConfig {
        let mut c = ExperimentConfig::new(Experiment::OracleCheck, 3, WalkKind::Srw);
        c.max_m = Some(2000);
        c
    }

    #[test]
    fn oracle_run_writes_files() {
        let dir = tempfile::tempdir().unwrap();
        let r = run(&oracle_cfg(), 1, dir.path(), false).unwrap();
        assert!(r.passed());
        for f in ["results.json", "samples.csv", "plot.gp"] {
            assert!(dir.path().join(f).is_file(), "{f}");
        }
        let csv = std::fs::read_to_string(dir.path().join("samples.csv")).unwrap();
        assert!(csv.lines().nth(1) == Some("replica,checkpoint_time,value"));
        assert!(csv.starts_with("# experiment=oracle_check config_hash="));
        let sigma2 = r.oracle["sigma2"].as_f64().unwrap();
        assert!((sigma2 - 0.5164).abs() < 1e-3, "{sigma2}");
    }

    #[test]
    fn summarize_sorts_and_skips_corrupt_files() {
        let dir = tempfile::tempdir().unwrap();
        run(&oracle_cfg(), 1, &dir.path().join("b"), false).unwrap();
        let mut c = ExperimentConfig::new(Experiment::MomentDecomposition, 1, WalkKind::LazySrw);
        c.n = 4;
        run(&c, 1, &dir.path().join("a"), false).unwrap();
        std::fs::write(dir.path().join("junk.json"), "{not json").unwrap();
        let s = summarize(dir.path()).unwrap();
        let names: Vec<&str> = s.rows.iter().map(|r| r.experiment.as_str()).collect();
        assert_eq!(names, ["moment_decomposition", "oracle_check"]);
        assert_eq!(s.skipped.len(), 1);
        assert!(s.table().lines().count() == 3);
        let empty = tempfile::tempdir().unwrap();
        assert!(summarize(empty.path()).unwrap().rows.is_empty());
    }

    #[test]
    fn timestamp_is_the_only_difference() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run(&oracle_cfg(), 1, a.path(), false).unwrap();
        run(&oracle_cfg(), 2, b.path(), false).unwrap();
        let read = |d: &Path| {
            without_timestamp(&std::fs::read_to_string(d.join("results.json")).unwrap()).unwrap()
        };
        assert_eq!(read(a.path()), read(b.path()));
    }
}
