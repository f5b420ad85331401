//! CSV formats for observations, states, traces and models, plus atomic
//! file writes.
//!
//! Observations and states use the layout `t,x1,...,xd`; an empty cell marks
//! a missing entry.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::discrete::{Observations, StateGrid};
use crate::error::{invalid, Error, Result};
use crate::library::{CandidateLibrary, CoefficientState, Term};
use crate::selection::{Discovery, SelectionTrace};

fn header(dim: usize) -> Vec<String> {
    std::iter::once("t".to_string()).chain((1..=dim).map(|c| format!("x{c}"))).collect()
}

/// Reads observations from `t,x1,...,xd` CSV.
pub fn read_observations<R: Read>(r: R) -> Result<Observations> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let head = rd.headers()?.clone();
    if head.len() < 2 {
        return Err(Error::Parse("expected columns t,x1,...,xd".into()));
    }
    let dim = head.len() - 1;
    let (mut times, mut values, mut available) = (Vec::new(), Vec::new(), Vec::new());
    for (line, rec) in rd.records().enumerate() {
        let rec = rec?;
        if rec.len() != dim + 1 {
            return Err(Error::Dimension {
                what: "observation row width",
                expected: dim + 1,
                got: rec.len(),
            });
        }
        let parse = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("row {}: `{s}`: {e}", line + 1)));
        times.push(parse(&rec[0])?);
        for cell in rec.iter().skip(1) {
            if cell.is_empty() || cell.eq_ignore_ascii_case("nan") {
                values.push(f64::NAN);
                available.push(false);
            } else {
                values.push(parse(cell)?);
                available.push(true);
            }
        }
    }
    Observations::new(dim, times, values, available)
}

/// Writes rows of a row-major matrix against `times`; `None` cells are left
/// empty.
fn write_rows<W: Write>(w: W, dim: usize, times: &[f64], cell: impl Fn(usize, usize) -> Option<f64>) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(header(dim))?;
    for (j, t) in times.iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend((0..dim).map(|c| cell(j, c).map(|v| v.to_string()).unwrap_or_default()));
        wr.write_record(&row)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_observations<W: Write>(w: W, obs: &Observations) -> Result<()> {
    write_rows(w, obs.dim(), obs.times(), |j, c| obs.value(j, c))
}

/// Writes a complete trajectory (`values[j * dim + c]`).
pub fn write_trajectory<W: Write>(w: W, dim: usize, times: &[f64], values: &[f64]) -> Result<()> {
    if values.len() != times.len() * dim {
        return Err(Error::Dimension {
            what: "trajectory values",
            expected: times.len() * dim,
            got: values.len(),
        });
    }
    write_rows(w, dim, times, |j, c| Some(values[j * dim + c]))
}

pub fn write_grid<W: Write>(w: W, grid: &StateGrid) -> Result<()> {
    write_trajectory(w, grid.dim(), grid.times(), &grid.values)
}

/// Serializes rows with a header derived from the field names.
pub fn write_records<W: Write, T: Serialize>(w: W, rows: &[T]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_records<R: Read, T: DeserializeOwned>(r: R) -> Result<Vec<T>> {
    let mut rd = csv::Reader::from_reader(r);
    rd.deserialize().map(|x| x.map_err(Error::from)).collect()
}

fn mask_string(mask: &[bool]) -> String {
    mask.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

#[derive(Serialize)]
struct TraceRow<'a> {
    iter: usize,
    mode: String,
    k: usize,
    active: usize,
    score: f64,
    fit: f64,
    accepted: bool,
    lm_iters: usize,
    penalized_lm_iters: usize,
    termination: String,
    mask: String,
    error: &'a str,
}

/// One row per pruning iteration; `mask` lists the active flags in
/// row-major `(equation, term)` order as `0`/`1` characters.
pub fn write_selection_trace<W: Write>(w: W, trace: &SelectionTrace) -> Result<()> {
    let rows: Vec<TraceRow> = trace
        .records
        .iter()
        .map(|r| TraceRow {
            iter: r.iter,
            mode: format!("{:?}", r.mode).to_lowercase(),
            k: r.k,
            active: r.active,
            score: r.score,
            fit: r.fit,
            accepted: r.accepted,
            lm_iters: r.lm_iters,
            penalized_lm_iters: r.penalized_lm_iters,
            termination: r.termination.map(|t| format!("{t:?}")).unwrap_or_default(),
            mask: mask_string(&r.mask),
            error: r.error.as_deref().unwrap_or(""),
        })
        .collect();
    write_records(w, &rows)
}

#[derive(Serialize)]
struct HyperRow<'a> {
    rank: usize,
    lambda: f64,
    #[serde(rename = "R")]
    r: f64,
    validation_error: f64,
    score: f64,
    active: usize,
    iterations: usize,
    seconds: f64,
    support: String,
    error: &'a str,
}

/// Hyperparameter cells in ranked order.
pub fn write_hyper_table<W: Write>(w: W, disc: &Discovery) -> Result<()> {
    let rows: Vec<HyperRow> = disc
        .cells
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let m = c.result.as_ref();
            HyperRow {
                rank: i + 1,
                lambda: c.lambda,
                r: c.r,
                validation_error: c.validation_error,
                score: m.map_or(f64::NAN, |s| s.model.score),
                active: m.map_or(0, |s| s.model.coeffs.active_count()),
                iterations: m.map_or(0, |s| s.trace.len()),
                seconds: c.seconds,
                support: m.map(|s| mask_string(s.model.coeffs.mask())).unwrap_or_default(),
                error: c.error.as_deref().unwrap_or(""),
            }
        })
        .collect();
    write_records(w, &rows)
}

/// Row of the machine-readable coefficient file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub equation: usize,
    pub term: String,
    pub coefficient: f64,
    pub active: bool,
    /// Inner parameter of a parametric term, empty otherwise.
    pub inner: Option<f64>,
}

pub fn coefficient_rows(lib: &CandidateLibrary, coeffs: &CoefficientState) -> Vec<CoefficientRow> {
    let p = lib.len();
    (0..coeffs.dim())
        .flat_map(|c| {
            lib.terms().iter().enumerate().map(move |(k, t)| CoefficientRow {
                equation: c + 1,
                term: t.to_string(),
                coefficient: coeffs.theta()[c * p + k],
                active: coeffs.mask()[c * p + k],
                inner: t.inner_slot().map(|s| coeffs.inner[s]),
            })
        })
        .collect()
}

pub fn write_coefficients<W: Write>(w: W, lib: &CandidateLibrary, coeffs: &CoefficientState) -> Result<()> {
    if coeffs.num_terms() != lib.len() {
        return Err(invalid("coefficients do not match the library"));
    }
    write_records(w, &coefficient_rows(lib, coeffs))
}

/// Human-readable right-hand sides, one line per equation, e.g.
/// `dx2/dt = -1.0000 x1 + 2.0000 x2 - 2.0000 x1^2*x2`.
pub fn format_equations(lib: &CandidateLibrary, coeffs: &CoefficientState) -> String {
    let p = lib.len();
    let mut out = String::new();
    for c in 0..coeffs.dim() {
        let mut line = format!("dx{}/dt =", c + 1);
        let mut first = true;
        for (k, t) in lib.terms().iter().enumerate() {
            if !coeffs.mask()[c * p + k] {
                continue;
            }
            let v = coeffs.theta()[c * p + k];
            let label = match t {
                Term::Monomial { .. } if t.is_constant() => String::new(),
                _ => format!(" {}", t.label_with_inner(&coeffs.inner)),
            };
            let sign = if v < 0.0 { "-" } else { "+" };
            if first {
                let lead = if v < 0.0 { "-" } else { "" };
                line.push_str(&format!(" {lead}{:.4}{label}", v.abs()));
            } else {
                line.push_str(&format!(" {sign} {:.4}{label}", v.abs()));
            }
            first = false;
        }
        if first {
            line.push_str(" 0");
        }
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().ok_or_else(|| invalid(format!("`{}` is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Renders with `write` into memory, then writes the result atomically.
pub fn atomic_write_with(path: &Path, write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    atomic_write(path, &buf)
}
