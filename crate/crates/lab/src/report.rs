//! CSV, markdown and SVG emission, and reloading of emitted results.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use spma_core::{IterationRecord, Method};

use crate::experiment::{auc, CellKey, CellResult, ResultSet};

pub const CSV_HEADER: &str = "t,j_value,subopt_inf,subopt_rho,c_t,min_gap,alpha_t,surrogate_final,surrogate_gap,bound_ok";
pub const MANIFEST_HEADER: &str = "method,eta_grid,eta,m,seed,status,file,error";
pub const CELLS_DIR: &str = "cells";
pub const MANIFEST_FILE: &str = "cells.csv";
pub const SUMMARY_FILE: &str = "summary.md";
pub const SVG_FILE: &str = "j_curves.svg";

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Renders records as CSV. Floats use the shortest representation that
/// parses back to the same value.
pub fn records_to_csv(records: &[IterationRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.t,
            r.j_value,
            r.subopt_inf,
            r.subopt_rho,
            opt(r.c_t),
            opt(r.min_gap),
            r.alpha_t,
            opt(r.surrogate_final),
            opt(r.surrogate_gap),
            r.bound_ok
        );
    }
    out
}

/// Parses the output of [`records_to_csv`]. Errors carry a 1-based line number.
pub fn parse_records_csv(text: &str) -> Result<Vec<IterationRecord>, (usize, String)> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == CSV_HEADER => {}
        _ => return Err((1, format!("expected header `{CSV_HEADER}`"))),
    }
    let mut records = Vec::new();
    for (i, line) in lines {
        let n = i + 1;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return Err((n, format!("expected 10 fields, found {}", f.len())));
        }
        let num = |k: usize| f[k].parse::<f64>().map_err(|e| (n, format!("field {k}: {e}")));
        let opt_num = |k: usize| {
            if f[k].is_empty() {
                Ok(None)
            } else {
                num(k).map(Some)
            }
        };
        records.push(IterationRecord {
            t: f[0].parse().map_err(|e| (n, format!("field 0: {e}")))?,
            j_value: num(1)?,
            subopt_inf: num(2)?,
            subopt_rho: num(3)?,
            c_t: opt_num(4)?,
            min_gap: opt_num(5)?,
            alpha_t: num(6)?,
            surrogate_final: opt_num(7)?,
            surrogate_gap: opt_num(8)?,
            bound_ok: f[9].parse().map_err(|e| (n, format!("field 9: {e}")))?,
        });
    }
    Ok(records)
}

fn sanitize(msg: &str) -> String {
    msg.chars()
        .map(|c| match c {
            ',' => ';',
            '\n' | '\r' => ' ',
            c => c,
        })
        .collect()
}

fn cell_file(key: &CellKey) -> String {
    format!("{CELLS_DIR}/{}.csv", key.file_stem())
}

pub fn manifest_csv(results: &ResultSet) -> String {
    let mut out = String::from(MANIFEST_HEADER);
    out.push('\n');
    for c in &results.cells {
        let k = &c.key;
        let (status, file, error) = match &c.outcome {
            Ok(_) => ("ok", cell_file(k), String::new()),
            Err(e) => ("error", String::new(), sanitize(e)),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{status},{file},{error}",
            k.method,
            opt(k.eta_grid),
            opt(k.eta),
            opt(k.m),
            k.seed
        );
    }
    out
}

/// Mean and standard error of a sample (standard error 0 for one value).
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Seed-aggregated statistics of one `(method, eta, m)` setting.
#[derive(Debug, Clone, PartialEq)]
pub struct Setting {
    pub method: Method,
    pub eta_grid: Option<f64>,
    pub eta: Option<f64>,
    pub m: Option<usize>,
    pub seeds: usize,
    pub auc_mean: f64,
    pub auc_se: f64,
    pub final_subopt_inf: f64,
    pub final_subopt_rho: f64,
    /// Mean over seeds of `prod_t alpha_t` over the recorded steps.
    pub alpha_product: f64,
    pub bound_violations: usize,
    /// Seed-averaged `J(pi_t)` curve (over the shortest run).
    pub mean_curve: Vec<f64>,
}

/// Groups successful cells by `(method, eta, m)` in key order.
pub fn settings(results: &ResultSet) -> Vec<Setting> {
    let mut groups: Vec<(CellKey, Vec<&[IterationRecord]>)> = Vec::new();
    for c in &results.cells {
        let Some(recs) = c.records() else { continue };
        if recs.is_empty() {
            continue;
        }
        match groups.last_mut() {
            Some((k, v)) if k.method == c.key.method && k.eta == c.key.eta && k.m == c.key.m => v.push(recs),
            _ => groups.push((c.key, vec![recs])),
        }
    }
    groups
        .into_iter()
        .map(|(k, runs)| {
            let n = runs.len() as f64;
            let aucs: Vec<f64> = runs.iter().map(|r| auc(r)).collect();
            let (auc_mean, auc_se) = mean_se(&aucs);
            let last = |f: fn(&IterationRecord) -> f64| runs.iter().map(|r| f(r.last().unwrap())).sum::<f64>() / n;
            let len = runs.iter().map(|r| r.len()).min().unwrap_or(0);
            let mean_curve = (0..len)
                .map(|t| runs.iter().map(|r| r[t].j_value).sum::<f64>() / n)
                .collect();
            let alpha_product = runs
                .iter()
                .map(|r| r[..r.len() - 1].iter().map(|x| x.alpha_t).product::<f64>())
                .sum::<f64>()
                / n;
            Setting {
                method: k.method,
                eta_grid: k.eta_grid,
                eta: k.eta,
                m: k.m,
                seeds: runs.len(),
                auc_mean,
                auc_se,
                final_subopt_inf: last(|r| r.subopt_inf),
                final_subopt_rho: last(|r| r.subopt_rho),
                alpha_product,
                bound_violations: runs.iter().flat_map(|r| r.iter()).filter(|r| !r.bound_ok).count(),
                mean_curve,
            }
        })
        .collect()
}

/// Best step size by mean AUC for every `(method, m)`; ties keep the smaller
/// step size.
pub fn best_by_auc(settings: &[Setting]) -> Vec<&Setting> {
    let mut best: BTreeMap<(Method, Option<usize>), &Setting> = BTreeMap::new();
    for s in settings {
        best.entry((s.method, s.m))
            .and_modify(|b| {
                if s.auc_mean > b.auc_mean {
                    *b = s;
                }
            })
            .or_insert(s);
    }
    best.into_values().collect()
}

/// Best setting per method over every step size and inner budget.
pub fn best_per_method(settings: &[Setting]) -> Vec<&Setting> {
    let mut best: BTreeMap<Method, &Setting> = BTreeMap::new();
    for s in best_by_auc(settings) {
        best.entry(s.method)
            .and_modify(|b| {
                if s.auc_mean > b.auc_mean {
                    *b = s;
                }
            })
            .or_insert(s);
    }
    best.into_values().collect()
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"))
}

pub fn summary_markdown(results: &ResultSet) -> String {
    let settings = settings(results);
    let mut out = String::from("# Experiment summary\n\n");
    let ok = results.cells.iter().filter(|c| c.outcome.is_ok()).count();
    let _ = writeln!(out, "{} cells, {} succeeded, {} failed.\n", results.cells.len(), ok, results.cells.len() - ok);

    out.push_str("## Best step size by AUC\n\n");
    out.push_str("| method | m | eta (grid) | eta | seeds | mean AUC | AUC std. error |\n");
    out.push_str("|---|---|---|---|---|---|---|\n");
    for s in best_by_auc(&settings) {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {:.6} | {:.6} |",
            s.method,
            s.m.map_or_else(|| "-".to_string(), |m| m.to_string()),
            fmt_opt(s.eta_grid),
            fmt_opt(s.eta),
            s.seeds,
            s.auc_mean,
            s.auc_se
        );
    }

    out.push_str("\n## Final sub-optimality and contraction factors\n\n");
    out.push_str("| method | eta | m | final subopt_inf | final subopt_rho | prod alpha_t |\n");
    out.push_str("|---|---|---|---|---|---|\n");
    for s in &settings {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {:.6e} | {:.6e} | {:.6e} |",
            s.method,
            fmt_opt(s.eta),
            s.m.map_or_else(|| "-".to_string(), |m| m.to_string()),
            s.final_subopt_inf,
            s.final_subopt_rho,
            s.alpha_product
        );
    }

    out.push_str("\n## Bound checks\n\n");
    out.push_str("| method | runs | records violating the per-iteration bound | verdict |\n");
    out.push_str("|---|---|---|---|\n");
    let mut per_method: BTreeMap<Method, (usize, usize)> = BTreeMap::new();
    for s in &settings {
        let e = per_method.entry(s.method).or_default();
        e.0 += s.seeds;
        e.1 += s.bound_violations;
    }
    for (m, (runs, bad)) in per_method {
        let verdict = match (m, bad) {
            (Method::Npg | Method::Mdpo | Method::Spg, _) => "no bound claimed",
            (_, 0) => "pass",
            _ => "FAIL",
        };
        let _ = writeln!(out, "| {m} | {runs} | {bad} | {verdict} |");
    }

    let failed: Vec<&CellResult> = results.cells.iter().filter(|c| c.outcome.is_err()).collect();
    if !failed.is_empty() {
        out.push_str("\n## Failed cells\n\n");
        for c in failed {
            let _ = writeln!(out, "- `{}`: {}", c.key.file_stem(), c.outcome.as_ref().unwrap_err());
        }
    }
    out
}

const SVG_COLOURS: [&str; 5] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];

/// Line chart of the seed-averaged `J(pi_t)` curve of each method's best setting.
pub fn svg_chart(results: &ResultSet) -> String {
    let settings = settings(results);
    let best = best_per_method(&settings);
    let (w, h, pad) = (640.0, 400.0, 50.0);
    let t_max = best.iter().map(|s| s.mean_curve.len()).max().unwrap_or(1).saturating_sub(1).max(1) as f64;
    let values = best.iter().flat_map(|s| s.mean_curve.iter().copied());
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (lo, hi) = if lo.is_finite() && hi > lo {
        (lo, hi)
    } else if lo.is_finite() {
        (lo - 0.5, lo + 0.5)
    } else {
        (0.0, 1.0)
    };
    let x = |t: f64| pad + (w - 2.0 * pad) * t / t_max;
    let y = |v: f64| h - pad - (h - 2.0 * pad) * (v - lo) / (hi - lo);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<path d="M{pad} {pad} V{} H{}" fill="none" stroke="black"/>"#,
        h - pad,
        w - pad
    );
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="12">t</text>"#, w / 2.0, h - 15.0);
    let _ = writeln!(out, r#"<text x="5" y="{}" font-size="12">J</text>"#, h / 2.0);
    let _ = writeln!(out, r#"<text x="{pad}" y="{}" font-size="10">{lo:.4}</text>"#, h - pad + 15.0);
    let _ = writeln!(out, r#"<text x="{pad}" y="{}" font-size="10">{hi:.4}</text>"#, pad - 5.0);
    for (i, s) in best.iter().enumerate() {
        let colour = SVG_COLOURS[i % SVG_COLOURS.len()];
        let points: Vec<String> = s
            .mean_curve
            .iter()
            .enumerate()
            .map(|(t, &v)| format!("{:.2},{:.2}", x(t as f64), y(v)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" data-method="{}" points="{}"/>"#,
            s.method,
            points.join(" ")
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="12" fill="{colour}">{}</text>"#,
            w - pad - 120.0,
            pad + 15.0 * (i as f64 + 1.0),
            s.method
        );
    }
    out.push_str("</svg>\n");
    out
}

fn write(path: &Path, contents: &str) -> Result<(), ReportError> {
    fs::write(path, contents).map_err(io_err(path))
}

/// Writes one CSV per successful cell, the manifest, the markdown summary
/// and (optionally) the SVG chart into `dir`.
pub fn emit_report(results: &ResultSet, dir: &Path, svg: bool) -> Result<(), ReportError> {
    let cells = dir.join(CELLS_DIR);
    fs::create_dir_all(&cells).map_err(io_err(&cells))?;
    for c in &results.cells {
        if let Ok(records) = &c.outcome {
            write(&dir.join(cell_file(&c.key)), &records_to_csv(records))?;
        }
    }
    write(&dir.join(MANIFEST_FILE), &manifest_csv(results))?;
    write_summaries(results, dir, svg)
}

/// Writes the markdown summary and (optionally) the SVG chart.
pub fn write_summaries(results: &ResultSet, dir: &Path, svg: bool) -> Result<(), ReportError> {
    write(&dir.join(SUMMARY_FILE), &summary_markdown(results))?;
    if svg {
        write(&dir.join(SVG_FILE), &svg_chart(results))?;
    }
    Ok(())
}

/// Reloads a result set written by [`emit_report`].
pub fn load_results(dir: &Path) -> Result<ResultSet, ReportError> {
    let manifest = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest).map_err(io_err(&manifest))?;
    let parse_err = |line: usize, message: String| ReportError::Parse {
        path: manifest.clone(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    if lines.next().map(|(_, h)| h) != Some(MANIFEST_HEADER) {
        return Err(parse_err(1, format!("expected header `{MANIFEST_HEADER}`")));
    }
    let mut cells = Vec::new();
    for (i, line) in lines {
        let n = i + 1;
        let f: Vec<&str> = line.splitn(8, ',').collect();
        if f.len() != 8 {
            return Err(parse_err(n, format!("expected 8 fields, found {}", f.len())));
        }
        let method = Method::from_name(f[0]).ok_or_else(|| parse_err(n, format!("unknown method `{}`", f[0])))?;
        let float = |s: &str| -> Result<Option<f64>, ReportError> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|e| parse_err(n, format!("{e}")))
            }
        };
        let key = CellKey {
            method,
            eta_grid: float(f[1])?,
            eta: float(f[2])?,
            m: if f[3].is_empty() {
                None
            } else {
                Some(f[3].parse().map_err(|e| parse_err(n, format!("{e}")))?)
            },
            seed: f[4].parse().map_err(|e| parse_err(n, format!("{e}")))?,
        };
        let outcome = match f[5] {
            "ok" => {
                let path = dir.join(f[6]);
                let body = fs::read_to_string(&path).map_err(io_err(&path))?;
                Ok(parse_records_csv(&body).map_err(|(line, message)| ReportError::Parse { path, line, message })?)
            }
            "error" => Err(f[7].to_string()),
            s => return Err(parse_err(n, format!("unknown status `{s}`"))),
        };
        cells.push(CellResult { key, outcome });
    }
    Ok(ResultSet::new(cells))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(t: usize, j: f64) -> IterationRecord {
        IterationRecord {
            t,
            j_value: j,
            subopt_inf: 1.0 - j,
            subopt_rho: 1.0 - j,
            c_t: t.is_multiple_of(2).then_some(0.1 / 3.0),
            min_gap: None,
            alpha_t: 0.9,
            surrogate_final: Some(1e-300),
            surrogate_gap: None,
            bound_ok: t != 1,
        }
    }

    #[test]
    fn csv_round_trips_awkward_values() {
        let mut recs: Vec<IterationRecord> = (0..4).map(|t| record(t, 0.1 * t as f64)).collect();
        recs[2].j_value = f64::MIN_POSITIVE;
        recs[3].subopt_rho = -0.0;
        let text = records_to_csv(&recs);
        assert!(text.starts_with(CSV_HEADER));
        assert!(!text.contains('\r'));
        assert_eq!(parse_records_csv(&text).unwrap(), recs);
        assert_eq!(text.lines().nth(2).unwrap().split(',').nth(4), Some(""));
    }

    #[test]
    fn malformed_csv_reports_the_line() {
        let bad = format!("{CSV_HEADER}\n0,1,2,3,,,0.5,,,true\n1,1,2\n");
        assert_eq!(parse_records_csv(&bad).unwrap_err().0, 3);
        assert_eq!(parse_records_csv("t,j\n").unwrap_err().0, 1);
    }

    #[test]
    fn mean_se_matches_hand_values() {
        assert_eq!(mean_se(&[2.0]), (2.0, 0.0));
        let (m, se) = mean_se(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((se - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn best_step_is_invariant_to_positive_rescaling() {
        let make = |scale: f64| {
            let cells = [0.3, 0.5, 0.9]
                .iter()
                .enumerate()
                .map(|(i, &e)| CellResult {
                    key: CellKey {
                        method: Method::Spma,
                        eta_grid: Some(e),
                        eta: Some(e),
                        m: None,
                        seed: 0,
                    },
                    outcome: Ok((0..5).map(|t| record(t, scale * (i as f64 + 1.0) * (t as f64 % 3.0))).collect()),
                })
                .collect();
            ResultSet::new(cells)
        };
        let a = settings(&make(1.0));
        let b = settings(&make(7.5));
        assert_eq!(best_by_auc(&a)[0].eta, best_by_auc(&b)[0].eta);
        assert_eq!(best_by_auc(&a)[0].eta, Some(0.9));
    }
}
