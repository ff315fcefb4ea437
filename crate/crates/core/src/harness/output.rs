//! Flat-file outputs: probability traces as CSV, ensemble summaries as
//! `key = value` text.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{EnsembleSummary, PathTrace};
use crate::diagnostics::{coordinate_name, SADecomposition};
use crate::error::Result;

const SIGNIFICANT: usize = 10;

/// Plain decimal with `SIGNIFICANT` significant digits (no exponent).
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let magnitude = x.abs().log10().floor() as i64;
    let decimals = (SIGNIFICANT as i64 - 1 - magnitude).clamp(0, 400) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn join(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(fmt_num).collect::<Vec<_>>().join(",")
}

/// `Time,Phi,Psi` plus `x1..xI,y1..yJ` when beliefs were recorded.
pub fn write_trace_csv<W: Write>(trace: &PathTrace, mut out: W) -> Result<()> {
    let beliefs = trace.x.is_some() && trace.y.is_some();
    let mut header = String::from("Time,Phi,Psi");
    if beliefs {
        for i in 1..=trace.n_rows {
            header.push_str(&format!(",x{i}"));
        }
        for j in 1..=trace.n_cols {
            header.push_str(&format!(",y{j}"));
        }
    }
    writeln!(out, "{header}")?;
    for t in 0..trace.len() {
        let mut row = format!("{},{}", trace.rounds[t], join([trace.phi_at(t)[0], trace.psi_at(t)[0]]));
        if let (Some(x), Some(y)) = (trace.x_at(t), trace.y_at(t)) {
            row.push(',');
            row.push_str(&join(x.iter().chain(y).copied()));
        }
        writeln!(out, "{row}")?;
    }
    out.flush()?;
    Ok(())
}

/// Path-averaged `Time,Phi,Psi`.
pub fn write_average_csv<W: Write>(summary: &EnsembleSummary, mut out: W) -> Result<()> {
    writeln!(out, "Time,Phi,Psi")?;
    for (t, r) in summary.rounds.iter().enumerate() {
        writeln!(out, "{r},{}", join([summary.mean_phi1[t], summary.mean_psi1[t]]))?;
    }
    out.flush()?;
    Ok(())
}

/// One line per path: index, class, final `φ₁`, final `ψ₁`.
pub fn write_paths_csv<W: Write>(summary: &EnsembleSummary, traces: &[PathTrace], mut out: W) -> Result<()> {
    writeln!(out, "path,class,final_phi1,final_psi1")?;
    for (t, class) in traces.iter().zip(&summary.classes) {
        writeln!(out, "{},{class},{}", t.path_index + 1, join([t.final_phi()[0], t.final_psi()[0]]))?;
    }
    out.flush()?;
    Ok(())
}

/// `key = value` lines: config echo, per-class counts and fractions, and the
/// final averaged probabilities.
pub fn write_summary<W: Write>(summary: &EnsembleSummary, mut out: W) -> Result<()> {
    let cfg = &summary.config;
    let (p1, p2) = cfg.resolved_priors()?;
    writeln!(out, "game = {}", cfg.game_label())?;
    writeln!(out, "prior_means_p1 = {p1}")?;
    writeln!(out, "prior_means_p2 = {p2}")?;
    writeln!(out, "horizon = {}", cfg.horizon)?;
    writeln!(out, "paths = {}", cfg.paths)?;
    writeln!(out, "seed = {}", cfg.base_seed)?;
    writeln!(out, "record = {}", cfg.record)?;
    for (class, n) in &summary.counts {
        writeln!(out, "count.{class} = {n}")?;
    }
    for (class, f) in summary.fractions() {
        writeln!(out, "fraction.{class} = {}", fmt_num(f))?;
    }
    if let (Some(phi), Some(psi)) = (summary.mean_phi1.last(), summary.mean_psi1.last()) {
        writeln!(out, "final_mean_phi1 = {}", fmt_num(*phi))?;
        writeln!(out, "final_mean_psi1 = {}", fmt_num(*psi))?;
    }
    out.flush()?;
    Ok(())
}

/// `round,C,D,E,error,bound`; `bound` is `nan` for variance coordinates.
pub fn write_decomposition_csv<W: Write>(decomp: &SADecomposition, bound: Option<f64>, mut out: W) -> Result<()> {
    writeln!(out, "round,C,D,E,error,bound")?;
    let b = fmt_num(bound.unwrap_or(f64::NAN));
    for t in 0..decomp.rounds.len() {
        writeln!(
            out,
            "{},{},{b}",
            decomp.rounds[t],
            join([decomp.c[t], decomp.d[t], decomp.e[t], decomp.error[t]])
        )?;
    }
    out.flush()?;
    Ok(())
}

/// File name of a coordinate's decomposition CSV, e.g. `x1.csv`.
pub fn decomposition_file_name(coordinate: usize, n_rows: usize, n_cols: usize) -> String {
    format!("{}.csv", coordinate_name(coordinate, n_rows, n_cols))
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}
