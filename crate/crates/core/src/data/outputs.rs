//! Run-record persistence: summary table, per-round loss curves and the
//! flat `run_meta` key=value file.
//!
//! Everything written here is byte-stable across identical runs except the
//! `meta.wall_ms_total` line, which carries wall-clock time and is the one
//! field reproducibility checks must ignore.

use super::fmt_f64;
use crate::engine::{Baseline, RunRecord};
use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

/// Writes `summary.csv`, one `loss_curve_round_<i>.csv` per round and
/// `run_meta` into `out_dir`, returning the list of files written.
///
/// `config_entries` is the caller's flat key=value echo of the full run
/// configuration; it lands in `run_meta` verbatim (keys sorted), joined by
/// `meta.*` entries for the artifact version, the baseline stats and total
/// wall time. A `run_meta` file can be fed back as a config file to replay
/// the run: `meta.*` keys are informational and ignored by the parser.
pub fn write_run_outputs(
    records: &[RunRecord],
    baseline: &Baseline,
    config_entries: &[(String, String)],
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(Error::contract(
            "write_run_outputs needs at least one record",
        ));
    }
    fs::create_dir_all(out_dir)?;
    let mut manifest = Vec::new();

    let k = records[0].member_aulcs.len();
    let mut csv = String::from("round,mse,aulc_main,D,glitch,selected_ids");
    for j in 0..k {
        let _ = write!(csv, ",member_aulc_{j}");
    }
    for j in 0..k {
        let _ = write!(csv, ",retained_{j}");
    }
    for j in 0..k {
        let _ = write!(csv, ",weight_{j}");
    }
    csv.push_str(",diverged\n");
    for r in records {
        let ids = r
            .selected
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(";");
        let _ = write!(
            csv,
            "{},{},{},{},{},{}",
            r.round,
            fmt_f64(r.mse),
            fmt_f64(r.aulc_main),
            r.expanded_width,
            r.glitch,
            ids
        );
        for a in &r.member_aulcs {
            let _ = write!(csv, ",{}", fmt_f64(*a));
        }
        for c in &r.retained {
            let _ = write!(csv, ",{c}");
        }
        for w in &r.weights {
            let _ = write!(csv, ",{}", fmt_f64(*w));
        }
        let _ = writeln!(csv, ",{}", r.diverged);
    }
    let summary_path = out_dir.join("summary.csv");
    fs::write(&summary_path, csv)?;
    manifest.push(summary_path);

    for r in records {
        let mut curve = String::from("epoch,loss\n");
        for (epoch, loss) in r.loss_curve.iter().enumerate() {
            let _ = writeln!(curve, "{epoch},{}", fmt_f64(*loss));
        }
        let path = out_dir.join(format!("loss_curve_round_{}.csv", r.round));
        fs::write(&path, curve)?;
        manifest.push(path);
    }

    let mut meta: BTreeMap<String, String> = config_entries
        .iter()
        .map(|(key, value)| (key.clone(), value.clone()))
        .collect();
    meta.insert(
        "meta.artifact_version".into(),
        env!("CARGO_PKG_VERSION").into(),
    );
    for (j, m) in baseline.member_mses.iter().enumerate() {
        meta.insert(format!("meta.baseline_mse_{j}"), fmt_f64(*m));
    }
    for (j, a) in baseline.member_aulcs.iter().enumerate() {
        meta.insert(format!("meta.baseline_aulc_{j}"), fmt_f64(*a));
    }
    let wall: u64 = records.iter().map(|r| r.wall_ms).sum();
    meta.insert("meta.wall_ms_total".into(), wall.to_string());

    let mut text = String::new();
    for (key, value) in &meta {
        let _ = writeln!(text, "{key}={value}");
    }
    let meta_path = out_dir.join("run_meta");
    fs::write(&meta_path, text)?;
    manifest.push(meta_path);

    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_sinusoid;
    use crate::engine::{run_re, Mode, ModelTemplate, REConfig};
    use crate::nn::{Family, Optimizer, Scale, TrainConfig};

    fn tiny_run() -> (Vec<RunRecord>, Baseline) {
        let ds = generate_sinusoid(30, 0.1, 7, 0.0, 1.0).unwrap();
        let mut cfg = REConfig::new(Mode::Re, 3, 7);
        cfg.train = TrainConfig {
            epochs: 10,
            learning_rate: 0.05,
            optimizer: Optimizer::Adam,
        };
        cfg.model = ModelTemplate {
            family: Family::MlpTanh,
            scale: Scale::Small,
            hidden: vec![4],
        };
        let out = run_re(&ds, &cfg).unwrap();
        (out.records, out.baseline)
    }

    #[test]
    fn manifest_counts_match_round_count() {
        let (records, baseline) = tiny_run();
        let dir = tempfile::tempdir().unwrap();
        let entries = vec![("mode".to_string(), "re".to_string())];
        let manifest = write_run_outputs(&records, &baseline, &entries, dir.path()).unwrap();
        assert_eq!(manifest.len(), 1 + 3 + 1); // summary + 3 curves + run_meta
        assert!(dir.path().join("summary.csv").exists());
        assert!(dir.path().join("loss_curve_round_2.csv").exists());
        assert!(dir.path().join("run_meta").exists());
    }

    #[test]
    fn identical_runs_write_identical_summaries() {
        let (records, baseline) = tiny_run();
        let entries = vec![("mode".to_string(), "re".to_string())];
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        write_run_outputs(&records, &baseline, &entries, d1.path()).unwrap();
        write_run_outputs(&records, &baseline, &entries, d2.path()).unwrap();
        let a = fs::read(d1.path().join("summary.csv")).unwrap();
        let b = fs::read(d2.path().join("summary.csv")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn summary_mse_column_parses_back_exactly() {
        let (records, baseline) = tiny_run();
        let dir = tempfile::tempdir().unwrap();
        write_run_outputs(&records, &baseline, &[], dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap().split(',').collect();
        let mse_col = header.iter().position(|c| *c == "mse").unwrap();
        for (r, line) in records.iter().zip(lines) {
            let cells: Vec<&str> = line.split(',').collect();
            let parsed: f64 = cells[mse_col].parse().unwrap();
            assert_eq!(parsed.to_bits(), r.mse.to_bits());
        }
    }

    #[test]
    fn unwritable_directory_is_io_error() {
        let (records, baseline) = tiny_run();
        let err = write_run_outputs(
            &records,
            &baseline,
            &[],
            std::path::Path::new("/proc/no-such-place/out"),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Io(_)));
    }

    #[test]
    fn run_meta_keys_are_sorted() {
        let (records, baseline) = tiny_run();
        let dir = tempfile::tempdir().unwrap();
        let entries = vec![
            ("zeta".to_string(), "1".to_string()),
            ("alpha".to_string(), "2".to_string()),
        ];
        write_run_outputs(&records, &baseline, &entries, dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("run_meta")).unwrap();
        let keys: Vec<&str> = text.lines().map(|l| l.split_once('=').unwrap().0).collect();
        let mut sorted = keys.clone();
        sorted.sort_unstable();
        assert_eq!(keys, sorted);
        assert!(text.contains("meta.artifact_version="));
        assert!(text.contains("meta.baseline_mse_0="));
    }
}
