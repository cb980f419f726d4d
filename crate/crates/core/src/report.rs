//! Report tables and files.
//!
//! A sweep directory holds:
//!
//! * `table1.csv`, `table1.txt`: baseline plus the best cell of every
//!   independently swept method, one section per ratio;
//! * `table2.csv`, `table2.txt`: baseline plus the best cell of every
//!   combined mixture;
//! * `grid.csv`: every cell's means; `per_user.csv`: every cell per user;
//! * `summary.txt`: run metadata and the best cells.
//!
//! Rows whose accuracy exceeds the baseline accuracy carry a `*` marker.
//! Nothing in the files depends on timing or thread count, so equal inputs
//! give byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::protocol::{CellKind, CellResult, EvalReport, BASELINE_LABEL};

pub const TABLE_HEADER: [&str; 10] = [
    "section", "method", "value", "ratio", "kernel", "C", "accuracy", "far", "frr", "marker",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: String,
    pub value: String,
    /// `None` for the baseline row.
    pub ratio: Option<f64>,
    pub kernel: String,
    pub c: f64,
    pub accuracy: f64,
    pub far: f64,
    pub frr: f64,
    pub marked: bool,
}

impl ReportRow {
    fn from_cell(cell: &CellResult, baseline_accuracy: f64) -> Self {
        ReportRow {
            method: cell.method.clone(),
            value: cell.value.clone(),
            ratio: cell.ratio,
            kernel: cell.kernel.name().to_string(),
            c: cell.c,
            accuracy: cell.mean.accuracy,
            far: cell.mean.far,
            frr: cell.mean.frr,
            marked: cell.kind != CellKind::Baseline && cell.mean.accuracy > baseline_accuracy,
        }
    }

    pub fn is_baseline(&self) -> bool {
        self.ratio.is_none()
    }

    pub fn section(&self) -> String {
        match self.ratio {
            None => "baseline".into(),
            Some(r) => format!("ratio={r}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    pub title: String,
    pub provider: String,
    pub rows: Vec<ReportRow>,
}

fn ratio_order(cells: &[&CellResult]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for c in cells {
        if let Some(r) = c.ratio {
            if !out.contains(&r) {
                out.push(r);
            }
        }
    }
    out
}

fn table_of(report: &EvalReport, title: &str, kind: CellKind) -> Result<ReportTable> {
    let baseline = report
        .best_baseline()
        .ok_or_else(|| Error::Data("report has no baseline cell".into()))?;
    let best: Vec<&CellResult> = report.best_cells().filter(|c| c.kind == kind).collect();
    let mut rows = vec![ReportRow::from_cell(baseline, baseline.mean.accuracy)];
    for ratio in ratio_order(&best) {
        for cell in best.iter().filter(|c| c.ratio == Some(ratio)) {
            rows.push(ReportRow::from_cell(cell, baseline.mean.accuracy));
        }
    }
    Ok(ReportTable {
        title: title.to_string(),
        provider: report.metadata.provider.clone(),
        rows,
    })
}

/// Independent augmentations: one row per method and ratio.
pub fn table1(report: &EvalReport) -> Result<ReportTable> {
    table_of(report, "Independent augmentation", CellKind::Independent)
}

/// Combined augmentations: one row per mixture and ratio.
pub fn table2(report: &EvalReport) -> Result<ReportTable> {
    table_of(report, "Combined augmentation", CellKind::Combined)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Data(format!("csv: {e}"))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |r| r.to_string())
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn pct(v: f64) -> String {
    format!("{:.2}%", 100.0 * v)
}

impl ReportTable {
    pub fn baseline(&self) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.is_baseline())
    }

    /// Delimiter-separated form; floats use the shortest text that parses
    /// back to the same value.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(TABLE_HEADER).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                r.section(),
                r.method.clone(),
                r.value.clone(),
                fmt_opt(r.ratio),
                r.kernel.clone(),
                r.c.to_string(),
                r.accuracy.to_string(),
                r.far.to_string(),
                r.frr.to_string(),
                if r.marked { "*".into() } else { String::new() },
            ])
            .map_err(csv_err)?;
        }
        finish_csv(w)
    }

    /// Aligned text with percentages and section headings.
    pub fn to_text(&self) -> String {
        let header = ["Method", "Value", "Kernel", "C", "Accuracy", "FAR", "FRR"];
        let body: Vec<[String; 7]> = self
            .rows
            .iter()
            .map(|r| {
                let mut acc = pct(r.accuracy);
                if r.marked {
                    acc.push('*');
                }
                [
                    if r.is_baseline() { "-".into() } else { r.method.clone() },
                    r.value.clone(),
                    r.kernel.clone(),
                    r.c.to_string(),
                    acc,
                    pct(r.far),
                    pct(r.frr),
                ]
            })
            .collect();
        let mut width = header.map(str::len);
        for row in &body {
            for (w, cell) in width.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let line = |cells: &[String]| {
            let mut s = String::new();
            for (i, (cell, w)) in cells.iter().zip(&width).enumerate() {
                if i > 0 {
                    s.push_str("  ");
                }
                let pad = w - cell.chars().count();
                if i >= 3 {
                    s.push_str(&" ".repeat(pad));
                    s.push_str(cell);
                } else {
                    s.push_str(cell);
                    s.push_str(&" ".repeat(pad));
                }
            }
            s.trim_end().to_string()
        };

        let mut out = String::new();
        let _ = writeln!(out, "{} (SVM + {} embeddings)", self.title, self.provider);
        out.push_str(&line(&header.map(String::from)));
        out.push('\n');
        out.push_str(&"-".repeat(width.iter().sum::<usize>() + 2 * (width.len() - 1)));
        out.push('\n');
        let mut section = None;
        for (r, cells) in self.rows.iter().zip(&body) {
            if section != Some(r.section()) {
                let heading = match r.ratio {
                    None => BASELINE_LABEL.to_string(),
                    Some(ratio) => format!("Augmentation with ratio {ratio}x"),
                };
                let _ = writeln!(out, "[{heading}]");
                section = Some(r.section());
            }
            out.push_str(&line(cells));
            out.push('\n');
        }
        out.push_str("* accuracy above the baseline\n");
        out
    }

    /// Rows whose marker disagrees with the table's own baseline accuracy.
    pub fn marker_violations(&self) -> Vec<String> {
        let baselines: Vec<&ReportRow> = self.rows.iter().filter(|r| r.is_baseline()).collect();
        if baselines.len() != 1 {
            return vec![format!("expected one baseline row, found {}", baselines.len())];
        }
        let base = baselines[0].accuracy;
        self.rows
            .iter()
            .filter(|r| r.marked != (!r.is_baseline() && r.accuracy > base))
            .map(|r| {
                format!(
                    "{} {} at {}: accuracy {} vs baseline {}, marker {}",
                    r.method,
                    r.value,
                    r.section(),
                    r.accuracy,
                    base,
                    if r.marked { "set" } else { "missing" }
                )
            })
            .collect()
    }
}

fn parse_f64(field: &str, what: &str, line: u64) -> Result<f64> {
    field
        .parse()
        .map_err(|_| Error::Data(format!("line {line}: bad {what} {field:?}")))
}

/// Reads a table written by [`ReportTable::to_csv`].
pub fn parse_table_csv(text: &str, title: &str, provider: &str) -> Result<ReportTable> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.iter().ne(TABLE_HEADER) {
        return Err(Error::Data(format!(
            "unexpected table header {:?}",
            header.iter().collect::<Vec<_>>()
        )));
    }
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = k as u64 + 2;
        let ratio = match &rec[3] {
            "" => None,
            s => Some(parse_f64(s, "ratio", line)?),
        };
        if rec[0] != *ratio.map_or("baseline".to_string(), |r| format!("ratio={r}")) {
            return Err(Error::Data(format!(
                "line {line}: section {:?} does not match ratio",
                &rec[0]
            )));
        }
        let marked = match &rec[9] {
            "" => false,
            "*" => true,
            other => return Err(Error::Data(format!("line {line}: bad marker {other:?}"))),
        };
        rows.push(ReportRow {
            method: rec[1].to_string(),
            value: rec[2].to_string(),
            ratio,
            kernel: rec[4].to_string(),
            c: parse_f64(&rec[5], "C", line)?,
            accuracy: parse_f64(&rec[6], "accuracy", line)?,
            far: parse_f64(&rec[7], "FAR", line)?,
            frr: parse_f64(&rec[8], "FRR", line)?,
            marked,
        });
    }
    Ok(ReportTable {
        title: title.to_string(),
        provider: provider.to_string(),
        rows,
    })
}

/// Every cell's means.
pub fn grid_csv(report: &EvalReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "kind",
        "method",
        "value",
        "ratio",
        "kernel",
        "C",
        "accuracy",
        "far",
        "frr",
        "best",
        "balanced_users",
        "users",
    ])
    .map_err(csv_err)?;
    for c in &report.cells {
        w.write_record([
            c.kind.name().to_string(),
            c.method.clone(),
            c.value.clone(),
            fmt_opt(c.ratio),
            c.kernel.name().to_string(),
            c.c.to_string(),
            c.mean.accuracy.to_string(),
            c.mean.far.to_string(),
            c.mean.frr.to_string(),
            if c.best { "1".into() } else { "0".into() },
            c.per_user.iter().filter(|u| u.balanced).count().to_string(),
            c.per_user.len().to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish_csv(w)
}

/// Every cell per user, including the RBF width used.
pub fn per_user_csv(report: &EvalReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "kind", "method", "value", "ratio", "kernel", "C", "user", "accuracy", "far", "frr", "balanced", "gamma",
    ])
    .map_err(csv_err)?;
    for c in &report.cells {
        for u in &c.per_user {
            w.write_record([
                c.kind.name().to_string(),
                c.method.clone(),
                c.value.clone(),
                fmt_opt(c.ratio),
                c.kernel.name().to_string(),
                c.c.to_string(),
                u.user.clone(),
                u.accuracy.to_string(),
                u.far.to_string(),
                u.frr.to_string(),
                if u.balanced { "1".into() } else { "0".into() },
                fmt_opt(u.gamma),
            ])
            .map_err(csv_err)?;
        }
    }
    finish_csv(w)
}

pub fn summary_text(report: &EvalReport) -> String {
    let m = &report.metadata;
    let mut out = String::new();
    let _ = writeln!(out, "base seed:       {}", m.base_seed);
    let _ = writeln!(out, "provider:        {}", m.provider);
    let _ = writeln!(out, "calibration:     {}", m.calibration.name());
    let _ = writeln!(out, "rbf gamma:       {}", m.gamma_rule);
    let _ = writeln!(out, "negative pools:  {}", m.pool_rule.name());
    let _ = writeln!(
        out,
        "split sizes:     train {}+/{}-, test {}+/{}-",
        m.sizes.train_pos, m.sizes.train_neg, m.sizes.test_pos, m.sizes.test_neg
    );
    let _ = writeln!(out, "eval users:      {}", m.eval_users.len());
    let _ = writeln!(out, "cells:           {}", report.cells.len());
    let _ = writeln!(out);
    let _ = writeln!(out, "best cells:");
    for c in report.best_cells() {
        let balanced = c.per_user.iter().filter(|u| u.balanced).count();
        let _ = writeln!(out, "  {c} (|FAR-FRR|<1% for {balanced}/{} users)", c.per_user.len());
    }
    out
}

/// Writes all report files into `dir`, creating it if needed.
pub fn write_report(report: &EvalReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let t1 = table1(report)?;
    let t2 = table2(report)?;
    let files = [
        ("table1.csv", t1.to_csv()?),
        ("table1.txt", t1.to_text()),
        ("table2.csv", t2.to_csv()?),
        ("table2.txt", t2.to_text()),
        ("grid.csv", grid_csv(report)?),
        ("per_user.csv", per_user_csv(report)?),
        ("summary.txt", summary_text(report)),
    ];
    let mut written = Vec::new();
    for (name, text) in files {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Reads `table1.csv` and `table2.csv` back from a sweep directory.
pub fn read_tables(dir: &Path) -> Result<(ReportTable, ReportTable)> {
    let provider = fs::read_to_string(dir.join("summary.txt"))
        .ok()
        .and_then(|s| {
            s.lines()
                .find_map(|l| l.strip_prefix("provider:").map(|p| p.trim().to_string()))
        })
        .unwrap_or_else(|| "unknown".into());
    let read = |name: &str, title: &str| -> Result<ReportTable> {
        let path = dir.join(name);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        parse_table_csv(&text, title, &provider).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    };
    Ok((
        read("table1.csv", "Independent augmentation")?,
        read("table2.csv", "Combined augmentation")?,
    ))
}
