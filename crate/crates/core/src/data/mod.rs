//! Synthetic data generation and bit-stable text persistence.
//!
//! All numeric serialization goes through [`fmt_f64`], which prints 17
//! significant decimal digits — enough that parsing the text recovers the
//! exact 64-bit value.

mod outputs;

pub use outputs::write_run_outputs;

use crate::error::{Error, Result};
use crate::linalg::{gaussian, Matrix, SeededRng};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

/// Formats a finite f64 with 17 significant digits; `parse_f64` recovers
/// the exact value.
pub fn fmt_f64(v: f64) -> String {
    debug_assert!(v.is_finite());
    format!("{v:.16e}")
}

pub fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("non-numeric cell {s:?}"),
    })
}

/// Where a dataset came from; enough to regenerate or relocate it.
#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Generated {
        generator: &'static str,
        n: usize,
        sigma: f64,
        seed: u64,
        lo: f64,
        hi: f64,
    },
    File {
        path: PathBuf,
    },
}

/// Paired inputs and scalar targets.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Matrix,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }
}

/// Generates the noisy sine dataset: `n` endpoint-inclusive uniformly
/// spaced inputs over `[lo, hi]` with targets `sin(2 pi x) + eps`,
/// `eps ~ N(0, sigma^2)`.
pub fn generate_sinusoid(n: usize, sigma: f64, seed: u64, lo: f64, hi: f64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::contract(format!("need n >= 2 samples, got {n}")));
    }
    if !(lo < hi) {
        return Err(Error::contract(format!(
            "invalid range: lo {lo} must be < hi {hi}"
        )));
    }
    let mut rng = SeededRng::new(seed);
    let eps = gaussian(&mut rng, n, 0.0, sigma)?;
    let xs: Vec<f64> = (0..n)
        .map(|i| lo + i as f64 * (hi - lo) / (n - 1) as f64)
        .collect();
    let ys: Vec<f64> = xs
        .iter()
        .zip(&eps)
        .map(|(x, e)| (std::f64::consts::TAU * x).sin() + e)
        .collect();
    Ok(Dataset {
        x: Matrix::column(&xs)?,
        y: Matrix::column(&ys)?,
        provenance: Provenance::Generated {
            generator: "sinusoid",
            n,
            sigma,
            seed,
            lo,
            hi,
        },
    })
}

fn dataset_header(d: usize) -> String {
    if d == 1 {
        "x,y".to_string()
    } else {
        let mut h = String::new();
        for i in 0..d {
            let _ = write!(h, "x{i},");
        }
        h.push('y');
        h
    }
}

/// Writes a dataset as CSV: header `x,y` (or `x0..x{d-1},y`), one sample
/// per row, line-feed newlines.
pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    let d = dataset.x.cols();
    let mut out = String::new();
    out.push_str(&dataset_header(d));
    out.push('\n');
    for i in 0..dataset.x.rows() {
        for v in dataset.x.row(i) {
            out.push_str(&fmt_f64(*v));
            out.push(',');
        }
        out.push_str(&fmt_f64(dataset.y.get(i, 0)));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a dataset CSV written by [`save_dataset`] (or by hand in the same
/// dialect). Errors carry 1-based line numbers.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let Some((_, header)) = lines.next() else {
        return Err(Error::Parse {
            line: 1,
            message: "missing header".into(),
        });
    };
    let header = header.trim_end_matches('\r');
    let cols: Vec<&str> = header.split(',').collect();
    let d = cols.len() - 1;
    let valid_header = d >= 1
        && cols.last() == Some(&"y")
        && if d == 1 {
            cols[0] == "x"
        } else {
            cols[..d]
                .iter()
                .enumerate()
                .all(|(i, c)| *c == format!("x{i}"))
        };
    if !valid_header {
        return Err(Error::Parse {
            line: 1,
            message: format!("bad header {header:?}, expected \"x,y\" or \"x0,..,y\""),
        });
    }

    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut rows = 0usize;
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let row = raw.trim_end_matches('\r');
        if row.is_empty() {
            continue;
        }
        let cells: Vec<&str> = row.split(',').collect();
        if cells.len() != d + 1 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {} cells, got {}", d + 1, cells.len()),
            });
        }
        for c in &cells[..d] {
            xs.push(parse_f64(c, line_no)?);
        }
        ys.push(parse_f64(cells[d], line_no)?);
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Parse {
            line: 1,
            message: "no data rows".into(),
        });
    }
    Ok(Dataset {
        x: Matrix::new(rows, d, xs)?,
        y: Matrix::column(&ys)?,
        provenance: Provenance::File {
            path: path.to_path_buf(),
        },
    })
}
