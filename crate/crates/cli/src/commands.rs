//! Subcommand implementations. Each returns the process exit code:
//! 0 success, 1 I/O, 2 validation, 3 glitch-halt.

use crate::config::{parse_entries, CliConfig};
use rexp_core::data::{generate_sinusoid, save_dataset, write_run_outputs};
use rexp_core::engine::{execute, RunRecord};
use std::fs;
use std::path::Path;

pub fn gen(n: usize, sigma: f64, seed: u64, out: &Path, lo: f64, hi: f64) -> u8 {
    if n < 2 || sigma < 0.0 || !(lo < hi) {
        eprintln!("gen: need --n >= 2, --sigma >= 0 and --lo < --hi");
        eprintln!("usage: rexp gen --n <N> --sigma <S> --seed <SEED> --out <PATH> [--lo L --hi H]");
        return 2;
    }
    let dataset = match generate_sinusoid(n, sigma, seed, lo, hi) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("gen: {e}");
            return 2;
        }
    };
    if let Err(e) = save_dataset(&dataset, out) {
        eprintln!("gen: cannot write {}: {e}", out.display());
        return 1;
    }
    match out.canonicalize() {
        Ok(abs) => println!("{}", abs.display()),
        Err(_) => println!("{}", out.display()),
    }
    0
}

fn progress_line(r: &RunRecord) {
    let mut markers = String::new();
    if r.glitch {
        markers.push_str(" GLITCH");
    }
    if r.diverged {
        markers.push_str(" DIVERGED");
    }
    eprintln!(
        "round {:>4}: mse={:.6e} aulc={:.6e} D={}{}",
        r.round, r.mse, r.aulc_main, r.expanded_width, markers
    );
}

pub fn run(config_path: Option<&Path>, out_dir: Option<&Path>, print_config: bool) -> u8 {
    let entries = match config_path {
        Some(path) => {
            let text = match fs::read_to_string(path) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("run: cannot read config {}: {e}", path.display());
                    return 1;
                }
            };
            match parse_entries(&text) {
                Ok(e) => e,
                Err(msg) => {
                    eprintln!("run: config: {msg}");
                    return 2;
                }
            }
        }
        None => Vec::new(),
    };

    let cfg = match CliConfig::from_entries(&entries) {
        Ok(c) => c,
        Err(violations) => {
            eprintln!("run: invalid config ({} problems):", violations.len());
            for v in &violations {
                eprintln!("  {v}");
            }
            return 2;
        }
    };

    if print_config {
        print!("{}", cfg.print());
        return 0;
    }

    let Some(out_dir) = out_dir else {
        eprintln!("run: --out <DIR> is required (or use --print-config)");
        return 2;
    };

    let dataset = match cfg.load_dataset() {
        Ok(d) => d,
        Err(rexp_core::Error::Parse { line, message }) => {
            eprintln!("run: dataset parse error at line {line}: {message}");
            return 2;
        }
        Err(e) => {
            eprintln!("run: cannot load dataset: {e}");
            return 1;
        }
    };

    let (re_cfg, mv, policy) = cfg.build();
    let outcome = match execute(&dataset, &re_cfg, &mv, &policy, progress_line) {
        Ok(o) => o,
        Err(rexp_core::Error::Contract(msg)) => {
            eprintln!("run: {msg}");
            return 2;
        }
        Err(e) => {
            eprintln!("run: {e}");
            return 1;
        }
    };

    let mut meta_entries = cfg.to_entries();
    meta_entries.extend(cfg.provenance_entries(&dataset));
    if let Err(e) = write_run_outputs(&outcome.records, &outcome.baseline, &meta_entries, out_dir) {
        eprintln!("run: cannot write outputs to {}: {e}", out_dir.display());
        return 1;
    }
    eprintln!(
        "wrote {} rounds to {}",
        outcome.records.len(),
        out_dir.display()
    );
    if outcome.halted_early {
        eprintln!("halted early by stop_on_glitch");
        return 3;
    }
    0
}

struct SummaryRow {
    round: usize,
    mse: f64,
    aulc: f64,
    expanded: String,
    glitch: bool,
}

fn read_summary(path: &Path) -> Result<Vec<SummaryRow>, String> {
    let text =
        fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| "summary.csv is empty".to_string())?
        .split(',')
        .collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|c| *c == name)
            .ok_or_else(|| format!("summary.csv lacks column {name:?}"))
    };
    let (ci_round, ci_mse, ci_aulc, ci_d, ci_glitch) = (
        col("round")?,
        col("mse")?,
        col("aulc_main")?,
        col("D")?,
        col("glitch")?,
    );
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != header.len() {
            return Err(format!("summary.csv row {} is ragged", idx + 2));
        }
        let parse = |i: usize| -> Result<f64, String> {
            cells[i]
                .parse()
                .map_err(|_| format!("summary.csv row {}: bad number {:?}", idx + 2, cells[i]))
        };
        rows.push(SummaryRow {
            round: cells[ci_round]
                .parse()
                .map_err(|_| format!("summary.csv row {}: bad round", idx + 2))?,
            mse: parse(ci_mse)?,
            aulc: parse(ci_aulc)?,
            expanded: cells[ci_d].to_string(),
            glitch: cells[ci_glitch] == "true",
        });
    }
    if rows.is_empty() {
        return Err("summary.csv has no data rows".into());
    }
    Ok(rows)
}

pub fn report(run_dir: &Path, markdown: Option<&Path>) -> u8 {
    let rows = match read_summary(&run_dir.join("summary.csv")) {
        Ok(r) => r,
        Err(msg) => {
            eprintln!("report: {msg}");
            return 1;
        }
    };

    let min_row = rows
        .iter()
        .min_by(|a, b| a.mse.total_cmp(&b.mse))
        .expect("rows nonempty");
    let last = rows.last().expect("rows nonempty");
    let first = rows.first().expect("rows nonempty");
    let trend = if last.aulc < first.aulc {
        "improved"
    } else if last.aulc > first.aulc {
        "worsened"
    } else {
        "flat"
    };
    let glitch_round = rows.iter().find(|r| r.glitch).map(|r| r.round);

    println!("rounds: {}", rows.len());
    println!("min MSE: {} at round {}", min_row.mse, min_row.round);
    println!("final MSE: {}", last.mse);
    println!(
        "AULC first -> last: {} -> {} ({trend})",
        first.aulc, last.aulc
    );
    match glitch_round {
        Some(r) => println!("glitch: round {r}"),
        None => println!("glitch: none"),
    }

    if let Some(md_path) = markdown {
        let mut md = String::from("| round | mse | aulc_main | D | glitch |\n");
        md.push_str("|---|---|---|---|---|\n");
        for r in &rows {
            md.push_str(&format!(
                "| {} | {:.6e} | {:.6e} | {} | {} |\n",
                r.round, r.mse, r.aulc, r.expanded, r.glitch
            ));
        }
        if let Err(e) = fs::write(md_path, md) {
            eprintln!("report: cannot write {}: {e}", md_path.display());
            return 1;
        }
    }
    0
}
