//! Result tables and their CSV schemas.
//!
//! Floats use 17 significant digits in exponent form (`{:.16e}`), which
//! round-trips every finite `f64` exactly; optional values are empty fields.
//!
//! | file               | columns                                                     |
//! |--------------------|-------------------------------------------------------------|
//! | `results.csv`      | `algo,m,m_trim,trial,recovered,final_rel_err,iters,seconds` |
//! | `fractions.csv`    | `algo,m_trim,m,recovered,trials,fraction`                   |
//! | `convergence.csv`  | `algo,m_trim,m,iter,median,q25,q75`                         |
//! | `traces/*.csv`     | `iter,rel_err,residual,delta_t,rho_t,xi_t,alpha_t`          |
//! | `survey.csv`       | `m,m_trim,rep,samples,max,mean,q50,q90,q95,q99`             |
//! | `witness.csv`      | `n,m,trial,row,x_distortion,y_distortion,ratio`             |

use std::fs::File;
use std::io::Write;
use std::path::Path;

use tensor_iht::recover::RunTrace;

use crate::error::{BenchError, Result};
use crate::fmt_f64;

pub const RESULTS_HEADER: [&str; 8] = ["algo", "m", "m_trim", "trial", "recovered", "final_rel_err", "iters", "seconds"];
pub const TRACE_HEADER: [&str; 7] = ["iter", "rel_err", "residual", "delta_t", "rho_t", "xi_t", "alpha_t"];

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub algo: String,
    pub m: usize,
    pub m_trim: usize,
    pub trial: usize,
    pub recovered: bool,
    pub final_rel_err: f64,
    pub iters: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FractionRow {
    pub algo: String,
    pub m_trim: usize,
    pub m: usize,
    pub recovered: usize,
    pub trials: usize,
}

impl FractionRow {
    pub fn fraction(&self) -> f64 {
        self.recovered as f64 / self.trials as f64
    }
}

impl ResultTable {
    /// Recovery counts per `(algo, m_trim, m)`, in first-appearance order of
    /// `(algo, m_trim)` and then ascending `m`.
    pub fn fractions(&self) -> Vec<FractionRow> {
        let mut keys: Vec<(String, usize)> = Vec::new();
        for r in &self.rows {
            if !keys.iter().any(|(a, t)| *a == r.algo && *t == r.m_trim) {
                keys.push((r.algo.clone(), r.m_trim));
            }
        }
        let mut ms: Vec<usize> = self.rows.iter().map(|r| r.m).collect();
        ms.sort_unstable();
        ms.dedup();
        let mut out = Vec::new();
        for (algo, m_trim) in keys {
            for &m in &ms {
                let cell: Vec<&ResultRow> =
                    self.rows.iter().filter(|r| r.algo == algo && r.m_trim == m_trim && r.m == m).collect();
                if !cell.is_empty() {
                    out.push(FractionRow {
                        algo: algo.clone(),
                        m_trim,
                        m,
                        recovered: cell.iter().filter(|r| r.recovered).count(),
                        trials: cell.len(),
                    });
                }
            }
        }
        out
    }

    pub fn fraction(&self, algo: &str, m_trim: usize, m: usize) -> Option<f64> {
        self.fractions()
            .into_iter()
            .find(|f| f.algo == algo && f.m_trim == m_trim && f.m == m)
            .map(|f| f.fraction())
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn create(path: &Path) -> Result<File> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| BenchError::io(parent, e))?;
    }
    File::create(path).map_err(|e| BenchError::io(path, e))
}

fn finish<W: Write>(w: csv::Writer<W>, path: &Path) -> Result<()> {
    w.into_inner()
        .map_err(|e| BenchError::io(path, e.into_error()))?
        .flush()
        .map_err(|e| BenchError::io(path, e))
}

pub fn write_results<W: Write>(out: W, table: &ResultTable) -> Result<csv::Writer<W>> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULTS_HEADER)?;
    for r in &table.rows {
        w.write_record([
            r.algo.clone(),
            r.m.to_string(),
            r.m_trim.to_string(),
            r.trial.to_string(),
            r.recovered.to_string(),
            fmt_f64(r.final_rel_err),
            r.iters.to_string(),
            fmt_f64(r.seconds),
        ])?;
    }
    Ok(w)
}

pub fn save_results(path: impl AsRef<Path>, table: &ResultTable) -> Result<()> {
    let path = path.as_ref();
    finish(write_results(create(path)?, table)?, path)
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, name: &str, origin: &Path) -> Result<T> {
    rec.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| BenchError::format(origin, format!("bad {name} field {:?}", rec.get(i))))
}

pub fn read_results(data: impl std::io::Read, origin: &Path) -> Result<ResultTable> {
    let mut r = csv::Reader::from_reader(data);
    if r.headers()?.iter().ne(RESULTS_HEADER) {
        return Err(BenchError::format(origin, "unexpected results header"));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        rows.push(ResultRow {
            algo: field(&rec, 0, "algo", origin)?,
            m: field(&rec, 1, "m", origin)?,
            m_trim: field(&rec, 2, "m_trim", origin)?,
            trial: field(&rec, 3, "trial", origin)?,
            recovered: field(&rec, 4, "recovered", origin)?,
            final_rel_err: field(&rec, 5, "final_rel_err", origin)?,
            iters: field(&rec, 6, "iters", origin)?,
            seconds: field(&rec, 7, "seconds", origin)?,
        });
    }
    Ok(ResultTable { rows })
}

pub fn load_results(path: impl AsRef<Path>) -> Result<ResultTable> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| BenchError::io(path, e))?;
    read_results(f, path)
}

pub fn write_fractions<W: Write>(out: W, table: &ResultTable) -> Result<csv::Writer<W>> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["algo", "m_trim", "m", "recovered", "trials", "fraction"])?;
    for f in table.fractions() {
        w.write_record([
            f.algo.clone(),
            f.m_trim.to_string(),
            f.m.to_string(),
            f.recovered.to_string(),
            f.trials.to_string(),
            fmt_f64(f.fraction()),
        ])?;
    }
    Ok(w)
}

pub fn save_fractions(path: impl AsRef<Path>, table: &ResultTable) -> Result<()> {
    let path = path.as_ref();
    finish(write_fractions(create(path)?, table)?, path)
}

pub fn write_trace<W: Write>(out: W, trace: &RunTrace) -> Result<csv::Writer<W>> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for r in &trace.records {
        let d = r.diagnostics.as_ref();
        w.write_record([
            r.iter.to_string(),
            opt(r.rel_err),
            fmt_f64(r.residual),
            opt(d.map(|d| d.delta)),
            opt(d.map(|d| d.rho)),
            opt(d.and_then(|d| d.xi)),
            opt(d.and_then(|d| d.alpha)),
        ])?;
    }
    Ok(w)
}

pub fn save_trace(path: impl AsRef<Path>, trace: &RunTrace) -> Result<()> {
    let path = path.as_ref();
    finish(write_trace(create(path)?, trace)?, path)
}

/// Median and interquartile band of the relative error at one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub algo: String,
    pub m_trim: usize,
    pub m: usize,
    pub iter: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

pub fn write_convergence<W: Write>(out: W, rows: &[ConvergenceRow]) -> Result<csv::Writer<W>> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["algo", "m_trim", "m", "iter", "median", "q25", "q75"])?;
    for r in rows {
        w.write_record([
            r.algo.clone(),
            r.m_trim.to_string(),
            r.m.to_string(),
            r.iter.to_string(),
            fmt_f64(r.median),
            fmt_f64(r.q25),
            fmt_f64(r.q75),
        ])?;
    }
    Ok(w)
}

pub fn save_convergence(path: impl AsRef<Path>, rows: &[ConvergenceRow]) -> Result<()> {
    let path = path.as_ref();
    finish(write_convergence(create(path)?, rows)?, path)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurveyRow {
    pub m: usize,
    pub m_trim: usize,
    pub rep: usize,
    pub samples: usize,
    pub max: f64,
    pub mean: f64,
    /// Values at 0.5, 0.9, 0.95, 0.99.
    pub quantiles: [f64; 4],
}

pub fn write_survey<W: Write>(out: W, rows: &[SurveyRow]) -> Result<csv::Writer<W>> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["m", "m_trim", "rep", "samples", "max", "mean", "q50", "q90", "q95", "q99"])?;
    for r in rows {
        let mut rec = vec![
            r.m.to_string(),
            r.m_trim.to_string(),
            r.rep.to_string(),
            r.samples.to_string(),
            fmt_f64(r.max),
            fmt_f64(r.mean),
        ];
        rec.extend(r.quantiles.iter().map(|&q| fmt_f64(q)));
        w.write_record(&rec)?;
    }
    Ok(w)
}

pub fn save_survey(path: impl AsRef<Path>, rows: &[SurveyRow]) -> Result<()> {
    let path = path.as_ref();
    finish(write_survey(create(path)?, rows)?, path)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WitnessRecord {
    pub n: usize,
    pub m: usize,
    pub trial: usize,
    pub row: usize,
    pub x_distortion: f64,
    pub y_distortion: f64,
    pub ratio: f64,
}

pub fn write_witness<W: Write>(out: W, rows: &[WitnessRecord]) -> Result<csv::Writer<W>> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "m", "trial", "row", "x_distortion", "y_distortion", "ratio"])?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.m.to_string(),
            r.trial.to_string(),
            r.row.to_string(),
            fmt_f64(r.x_distortion),
            fmt_f64(r.y_distortion),
            fmt_f64(r.ratio),
        ])?;
    }
    Ok(w)
}

pub fn save_witness(path: impl AsRef<Path>, rows: &[WitnessRecord]) -> Result<()> {
    let path = path.as_ref();
    finish(write_witness(create(path)?, rows)?, path)
}

/// Renders a writer-producing function into bytes.
pub fn to_bytes<F>(f: F) -> Result<Vec<u8>>
where
    F: FnOnce(Vec<u8>) -> Result<csv::Writer<Vec<u8>>>,
{
    f(Vec::new())?
        .into_inner()
        .map_err(|e| BenchError::io("<memory>", e.into_error()))
}
