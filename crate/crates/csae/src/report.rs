//! Result tables as CSV, and their human-readable rendering.
//!
//! Numbers are written with six decimals so reruns with the same seed produce
//! identical files. An absent standard error is an empty field.

use std::fmt::Write as _;
use std::path::Path;

use csae_core::adaptation::ForgettingReport;
use csae_core::csae::SweepRow;
use csae_core::eval::{cv_aggregate, mean_se, CvSummary, FoldReport, MeanSe};
use csae_core::signal::CLASS_NAMES;
use csae_core::train::TrainLog;

use crate::error::{AppError, AppResult};
use crate::experiment::BenchRow;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

fn num(x: f64) -> String {
    format!("{x:.6}")
}

fn se(m: &MeanSe) -> String {
    m.se.map(num).unwrap_or_default()
}

fn class_name(c: usize) -> String {
    CLASS_NAMES
        .get(c)
        .map_or_else(|| format!("class{c}"), |s| s.to_string())
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write_csv(&self, path: &Path) -> AppResult<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        w.write_record(&self.header).map_err(|e| csv_err(path, e))?;
        for r in &self.rows {
            w.write_record(r).map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| AppError::io(path, e))
    }

    pub fn read_csv(path: &Path) -> AppResult<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
        let header = r
            .headers()
            .map_err(|e| csv_err(path, e))?
            .iter()
            .map(String::from)
            .collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|r| r.iter().map(String::from).collect()))
            .collect::<Result<_, _>>()
            .map_err(|e| csv_err(path, e))?;
        Ok(Self { header, rows })
    }

    /// Column of `name`, if present.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Aligned text. An `f1*` column followed by an `se*` column is merged into
    /// one `mean ± SE` cell in percent.
    pub fn render(&self) -> String {
        let mut header = Vec::new();
        let mut merge = Vec::new();
        let mut i = 0;
        while i < self.header.len() {
            let h = &self.header[i];
            let paired = h.starts_with("f1") && self.header.get(i + 1).is_some_and(|n| n.starts_with("se"));
            header.push(if paired { format!("{h} (%)") } else { h.clone() });
            merge.push(paired);
            i += if paired { 2 } else { 1 };
        }
        let cells: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|row| {
                let mut out = Vec::new();
                let mut j = 0;
                for &paired in &merge {
                    if paired {
                        out.push(percent_cell(&row[j], &row[j + 1]));
                        j += 2;
                    } else {
                        out.push(row[j].clone());
                        j += 1;
                    }
                }
                out
            })
            .collect();
        let widths: Vec<usize> = (0..header.len())
            .map(|c| {
                cells
                    .iter()
                    .map(|r| r[c].chars().count())
                    .chain([header[c].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut s = String::new();
        let line = |s: &mut String, row: &[String]| {
            let parts: Vec<String> = row.iter().zip(&widths).map(|(v, w)| format!("{v:<w$}")).collect();
            let _ = writeln!(s, "{}", parts.join("  ").trim_end());
        };
        line(&mut s, &header);
        let _ = writeln!(
            s,
            "{}",
            widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  ")
        );
        for r in &cells {
            line(&mut s, r);
        }
        s
    }
}

fn csv_err(path: &Path, e: csv::Error) -> AppError {
    AppError::Data {
        path: path.to_path_buf(),
        msg: e.to_string(),
    }
}

fn percent_cell(mean: &str, se: &str) -> String {
    match (mean.parse::<f64>(), se.parse::<f64>()) {
        (Ok(m), Ok(s)) => format!("{:.1} ± {:.1}", 100.0 * m, 100.0 * s),
        (Ok(m), Err(_)) => format!("{:.1}", 100.0 * m),
        _ => mean.to_string(),
    }
}

/// Per-class mean ± SE F1 with micro and mean-class rows (`table1.csv`).
pub fn cv_table(summary: &CvSummary) -> Table {
    let mut t = Table::new(&["class", "f1_mean", "f1_se"]);
    for (c, m) in summary.per_class.iter().enumerate() {
        t.push(vec![class_name(c), num(m.mean), se(m)]);
    }
    t.push(vec!["micro".into(), num(summary.micro.mean), se(&summary.micro)]);
    t.push(vec![
        "mean_class".into(),
        num(summary.mean_class.mean),
        se(&summary.mean_class),
    ]);
    t
}

/// Two summaries side by side, e.g. original vs fine-tuned (`table2.csv`, `table3.csv`).
pub fn paired_table(labels: [&str; 2], a: &CvSummary, b: &CvSummary) -> Table {
    let [la, lb] = labels;
    let mut t = Table::new(&[
        "class",
        &format!("f1_{la}"),
        &format!("se_{la}"),
        &format!("f1_{lb}"),
        &format!("se_{lb}"),
    ]);
    let row = |name: String, x: &MeanSe, y: &MeanSe| vec![name, num(x.mean), se(x), num(y.mean), se(y)];
    for (c, (x, y)) in a.per_class.iter().zip(&b.per_class).enumerate() {
        t.push(row(class_name(c), x, y));
    }
    t.push(row("micro".into(), &a.micro, &b.micro));
    t.push(row("mean_class".into(), &a.mean_class, &b.mean_class));
    t
}

pub fn paired_from_folds(labels: [&str; 2], a: &[FoldReport], b: &[FoldReport]) -> AppResult<Table> {
    Ok(paired_table(labels, &cv_aggregate(a)?, &cv_aggregate(b)?))
}

/// Micro-F1 and mean |Z| per λ (`fig6.csv`).
pub fn sweep_table(rows: &[SweepRow]) -> Table {
    let mut t = Table::new(&["lambda", "f1", "mean_abs_z"]);
    for r in rows {
        t.push(vec![format!("{:e}", r.lambda), num(r.micro_f1), num(r.mean_abs_z)]);
    }
    t
}

/// Original-class F1 before and after expansion, averaged over folds (`fig7.csv`).
pub fn forgetting_table(reports: &[&ForgettingReport]) -> AppResult<Table> {
    let mut t = Table::new(&["class", "f1_before", "f1_after"]);
    let Some(first) = reports.first() else {
        return Ok(t);
    };
    for (c, d) in first.deltas.iter().enumerate() {
        let before: Vec<f64> = reports.iter().map(|r| r.deltas[c].f1_before).collect();
        let after: Vec<f64> = reports.iter().map(|r| r.deltas[c].f1_after).collect();
        t.push(vec![
            class_name(d.class),
            num(mean_se(&before)?.mean),
            num(mean_se(&after)?.mean),
        ]);
    }
    Ok(t)
}

/// Score and cost of every method (`table4.csv`). `folds[f][m]` is method `m` on fold `f`.
pub fn bench_table(folds: &[Vec<BenchRow>]) -> AppResult<Table> {
    let mut t = Table::new(&["method", "f1_mean", "f1_se", "static_bytes", "runtime_bytes", "flops"]);
    let Some(first) = folds.first() else {
        return Ok(t);
    };
    for (m, row) in first.iter().enumerate() {
        let f1: Vec<f64> = folds.iter().map(|f| f[m].report.micro_f1).collect();
        let s = mean_se(&f1)?;
        let r = row.resources;
        t.push(vec![
            row.method.to_string(),
            num(s.mean),
            se(&s),
            r.static_bytes.to_string(),
            r.runtime_bytes.to_string(),
            r.flops.to_string(),
        ]);
    }
    Ok(t)
}

pub fn train_log_table(log: &TrainLog) -> Table {
    let mut t = Table::new(&["epoch", "train_loss", "val_loss", "lr"]);
    for e in &log.epochs {
        t.push(vec![
            e.epoch.to_string(),
            format!("{:.9e}", e.train_loss),
            format!("{:.9e}", e.val_loss),
            format!("{:e}", e.lr),
        ]);
    }
    t
}

/// Renders every CSV in `dir`, in file-name order.
pub fn render_dir(dir: &Path) -> AppResult<String> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| AppError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    let mut s = String::new();
    for f in files {
        let name = f
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let _ = writeln!(s, "== {name}");
        s.push_str(&Table::read_csv(&f)?.render());
        s.push('\n');
    }
    Ok(s)
}
