//! Run records, summaries and lossless persistence.
//!
//! A trace is stored as two files: a CSV table `t,f,grad_norm[,x_0..x_{d-1}]`
//! with every real written to 17 significant digits, and a JSON sidecar (same
//! stem, `.json` extension) holding the run metadata.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("io error on {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: u64,
        column: usize,
        message: String,
    },
    #[error("invalid trace: {0}")]
    Invalid(String),
    #[error("trace is empty")]
    Empty,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> TraceError {
    TraceError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: u64,
    pub f: f64,
    pub grad_norm: f64,
    pub x: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub objective: String,
    pub method: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub provenance: String,
    #[serde(default)]
    pub constants: Option<serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    pub meta: TraceMeta,
}

/// 17 significant digits: enough to round-trip any `f64`.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

/// Location of the JSON sidecar for a trace CSV.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

impl RunTrace {
    pub fn dim(&self) -> Option<usize> {
        self.records.first().and_then(|r| r.x.as_ref().map(|x| x.len()))
    }

    /// Checks the structural invariants: strictly increasing `t`, finite
    /// values, and either all or no records carrying an iterate of one length.
    pub fn validate(&self) -> Result<(), TraceError> {
        let d = self.dim();
        for (k, r) in self.records.iter().enumerate() {
            if k > 0 && r.t <= self.records[k - 1].t {
                return Err(TraceError::Invalid(format!(
                    "t not strictly increasing at record {k} (t={})",
                    r.t
                )));
            }
            if !r.f.is_finite() || !r.grad_norm.is_finite() {
                return Err(TraceError::Invalid(format!("non-finite value at t={}", r.t)));
            }
            match (&r.x, d) {
                (Some(x), Some(d)) if x.len() == d => {
                    if !crate::linalg::all_finite(x) {
                        return Err(TraceError::Invalid(format!("non-finite iterate at t={}", r.t)));
                    }
                }
                (None, None) => {}
                _ => {
                    return Err(TraceError::Invalid(format!(
                        "record at t={} has an inconsistent iterate snapshot",
                        r.t
                    )))
                }
            }
        }
        Ok(())
    }
}

pub fn write_trace(trace: &RunTrace, path: &Path) -> Result<(), TraceError> {
    trace.validate()?;
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    let mut header = vec!["t".to_string(), "f".into(), "grad_norm".into()];
    if let Some(d) = trace.dim() {
        header.extend((0..d).map(|j| format!("x_{j}")));
    }
    w.write_record(&header).map_err(|e| io_err(path, e))?;
    let mut row = Vec::with_capacity(header.len());
    for r in &trace.records {
        row.clear();
        row.push(r.t.to_string());
        row.push(fmt_real(r.f));
        row.push(fmt_real(r.grad_norm));
        if let Some(x) = &r.x {
            row.extend(x.iter().map(|&v| fmt_real(v)));
        }
        w.write_record(&row).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))?;

    let side = sidecar_path(path);
    let mut f = fs::File::create(&side).map_err(|e| io_err(&side, e))?;
    let json = serde_json::to_string_pretty(&trace.meta).map_err(|e| io_err(&side, e))?;
    f.write_all(json.as_bytes()).map_err(|e| io_err(&side, e))?;
    f.write_all(b"\n").map_err(|e| io_err(&side, e))
}

fn parse_field<T: std::str::FromStr>(s: &str, line: u64, column: usize) -> Result<T, TraceError>
where
    T::Err: std::fmt::Display,
{
    s.trim().parse::<T>().map_err(|e| TraceError::Parse {
        line,
        column,
        message: format!("{s:?}: {e}"),
    })
}

pub fn read_trace(path: &Path) -> Result<RunTrace, TraceError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| io_err(path, e))?;
    let header = rdr
        .headers()
        .map_err(|e| TraceError::Parse {
            line: 1,
            column: 1,
            message: e.to_string(),
        })?
        .clone();
    let names: Vec<&str> = header.iter().collect();
    if names.len() < 3 || names[..3] != ["t", "f", "grad_norm"] {
        return Err(TraceError::Parse {
            line: 1,
            column: 1,
            message: format!("expected header t,f,grad_norm[,x_0..], got {names:?}"),
        });
    }
    for (j, name) in names[3..].iter().enumerate() {
        if *name != format!("x_{j}") {
            return Err(TraceError::Parse {
                line: 1,
                column: j + 4,
                message: format!("expected column x_{j}, got {name:?}"),
            });
        }
    }
    let d = names.len() - 3;

    let mut records: Vec<TraceRecord> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| TraceError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            column: 1,
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let t: u64 = parse_field(&rec[0], line, 1)?;
        if let Some(prev) = records.last() {
            if t <= prev.t {
                return Err(TraceError::Parse {
                    line,
                    column: 1,
                    message: format!("t={t} does not increase (previous t={})", prev.t),
                });
            }
        }
        let mut reals = Vec::with_capacity(rec.len() - 1);
        for (j, field) in rec.iter().enumerate().skip(1) {
            let v: f64 = parse_field(field, line, j + 1)?;
            if !v.is_finite() {
                return Err(TraceError::Parse {
                    line,
                    column: j + 1,
                    message: format!("non-finite value {field:?}"),
                });
            }
            reals.push(v);
        }
        records.push(TraceRecord {
            t,
            f: reals[0],
            grad_norm: reals[1],
            x: (d > 0).then(|| reals[2..].to_vec()),
        });
    }

    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| io_err(&side, e))?;
    let meta: TraceMeta = serde_json::from_str(&text).map_err(|e| TraceError::Parse {
        line: e.line() as u64,
        column: e.column(),
        message: format!("sidecar {}: {e}", side.display()),
    })?;
    Ok(RunTrace { records, meta })
}

/// First record with `f ≤ level`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirstPassage {
    pub level: f64,
    /// `None` when the level is never reached (censored at the last record).
    pub t: Option<u64>,
    /// True when records are spaced more than one step apart, so the true
    /// passage may lie up to one stride earlier.
    pub stride_limited: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub n_records: usize,
    pub min_f: f64,
    pub median_f: f64,
    pub min_grad_norm: f64,
    pub first_passages: Vec<FirstPassage>,
}

pub fn summarize(trace: &RunTrace, levels: &[f64]) -> Result<TraceSummary, TraceError> {
    if trace.records.is_empty() {
        return Err(TraceError::Empty);
    }
    let fs: Vec<f64> = trace.records.iter().map(|r| r.f).collect();
    let min_f = fs.iter().copied().fold(f64::INFINITY, f64::min);
    let min_grad_norm = trace
        .records
        .iter()
        .map(|r| r.grad_norm)
        .fold(f64::INFINITY, f64::min);
    let strided = trace.records.windows(2).any(|w| w[1].t - w[0].t > 1);
    let first_passages = levels
        .iter()
        .map(|&level| {
            let hit = trace.records.iter().find(|r| r.f <= level).map(|r| r.t);
            FirstPassage {
                level,
                t: hit,
                stride_limited: strided && hit.is_some_and(|t| t > 0),
            }
        })
        .collect();
    Ok(TraceSummary {
        n_records: trace.records.len(),
        min_f,
        median_f: crate::linalg::median(&fs).expect("nonempty"),
        min_grad_norm,
        first_passages,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> TraceMeta {
        TraceMeta {
            objective: "quadratic(d=2,scale=1)".into(),
            method: "sgld_vr".into(),
            seed: 5,
            config: serde_json::json!({"batch_size": 1}),
            provenance: crate::provenance(),
            constants: None,
        }
    }

    fn trace_of(fs: &[f64]) -> RunTrace {
        RunTrace {
            records: fs
                .iter()
                .enumerate()
                .map(|(t, &f)| TraceRecord {
                    t: t as u64,
                    f,
                    grad_norm: f.abs().sqrt(),
                    x: None,
                })
                .collect(),
            meta: meta(),
        }
    }

    #[test]
    fn fmt_real_is_lossless() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, f64::MAX, f64::MIN_POSITIVE, 5e-324] {
            assert_eq!(fmt_real(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn summary_examples() {
        let tr = trace_of(&[2.0, 2.0, 2.0]);
        let s = summarize(&tr, &[3.0, 1.0]).unwrap();
        assert_eq!((s.min_f, s.median_f), (2.0, 2.0));
        assert_eq!(s.first_passages[0].t, Some(0));
        assert_eq!(s.first_passages[1].t, None);
        assert!(!s.first_passages[0].stride_limited);
    }

    #[test]
    fn empty_summary_is_error() {
        let tr = RunTrace {
            records: vec![],
            meta: meta(),
        };
        assert!(matches!(summarize(&tr, &[]), Err(TraceError::Empty)));
    }

    #[test]
    fn non_monotone_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        write_trace(&trace_of(&[1.0, 0.5]), &p).unwrap();
        let text = fs::read_to_string(&p).unwrap().replace("\n1,", "\n0,");
        fs::write(&p, text).unwrap();
        match read_trace(&p) {
            Err(TraceError::Parse { line, column, .. }) => assert_eq!((line, column), (3, 1)),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn bad_number_names_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        write_trace(&trace_of(&[1.0, 0.5]), &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[2] = "1,0.5,oops".into();
        fs::write(&p, lines.join("\n")).unwrap();
        match read_trace(&p) {
            Err(TraceError::Parse { line, column, .. }) => assert_eq!((line, column), (3, 3)),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
