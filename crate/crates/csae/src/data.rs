//! Trial recordings as CSV: `subject,movement,trial,sample_index,ch1,ch2`.
//!
//! Rows of one recording are contiguous and numbered from 0. `movement` is a
//! class index or a class name.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use csae_core::signal::{TrialRecording, CHANNELS, CLASS_NAMES};
use csae_core::Tensor;

use crate::error::{AppError, AppResult};

pub const COLUMNS: [&str; 6] = ["subject", "movement", "trial", "sample_index", "ch1", "ch2"];

fn parse_movement(s: &str) -> Option<usize> {
    s.parse::<usize>()
        .ok()
        .filter(|&m| m < CLASS_NAMES.len())
        .or_else(|| CLASS_NAMES.iter().position(|n| *n == s))
}

struct Pending {
    key: (u32, usize, u32),
    samples: Vec<f64>,
}

pub fn load_trials_csv(path: &Path) -> AppResult<Vec<TrialRecording>> {
    let file = File::open(path).map_err(|e| AppError::io(path, e))?;
    read_trials(file, path)
}

/// Parses recordings from any reader; `path` only labels diagnostics.
pub fn read_trials(reader: impl Read, path: &Path) -> AppResult<Vec<TrialRecording>> {
    let bad = |msg: String| AppError::Data {
        path: path.to_path_buf(),
        msg,
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| bad(format!("unreadable header: {e}")))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| bad(format!("missing column `{name}`")))
    };
    let idx: Vec<usize> = COLUMNS.iter().map(|c| col(c)).collect::<AppResult<_>>()?;
    let channels = headers.iter().filter(|h| h.starts_with("ch")).count();
    if channels != CHANNELS {
        return Err(bad(format!("expected {CHANNELS} channel columns, found {channels}")));
    }

    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    let mut cur: Option<Pending> = None;
    let flush = |p: Pending, out: &mut Vec<TrialRecording>| -> AppResult<()> {
        let len = p.samples.len() / CHANNELS;
        let t = Tensor::new(vec![len, CHANNELS], p.samples)?;
        out.push(TrialRecording::new(p.key.0, p.key.1, p.key.2, t)?);
        Ok(())
    };
    for (row, rec) in rdr.records().enumerate() {
        let line = row + 2;
        let rec = rec.map_err(|e| bad(format!("line {line}: {e}")))?;
        let field = |i: usize| rec.get(idx[i]).unwrap_or("");
        let int = |i: usize| {
            field(i)
                .parse::<u32>()
                .map_err(|_| bad(format!("line {line}: `{}` is not an integer {}", field(i), COLUMNS[i])))
        };
        let subject = int(0)?;
        let movement =
            parse_movement(field(1)).ok_or_else(|| bad(format!("line {line}: unknown movement `{}`", field(1))))?;
        let trial = int(2)?;
        let sample_index = field(3)
            .parse::<usize>()
            .map_err(|_| bad(format!("line {line}: `{}` is not a sample index", field(3))))?;
        let mut values = [0.0; CHANNELS];
        for (c, v) in values.iter_mut().enumerate() {
            let s = field(4 + c);
            *v = s.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| {
                bad(format!(
                    "line {line}: `{s}` is not a numeric sample in {}",
                    COLUMNS[4 + c]
                ))
            })?;
        }
        let key = (subject, movement, trial);
        if cur.as_ref().is_none_or(|p| p.key != key) {
            if let Some(p) = cur.take() {
                flush(p, &mut out)?;
            }
            if !seen.insert(key) {
                return Err(bad(format!(
                    "line {line}: rows of subject {subject} movement {movement} trial {trial} are not contiguous"
                )));
            }
            cur = Some(Pending {
                key,
                samples: Vec::new(),
            });
        }
        let p = cur.as_mut().expect("set above");
        let expected = p.samples.len() / CHANNELS;
        if sample_index != expected {
            return Err(bad(format!(
                "line {line}: sample_index {sample_index} out of order, expected {expected}"
            )));
        }
        p.samples.extend_from_slice(&values);
    }
    if let Some(p) = cur {
        flush(p, &mut out)?;
    }
    Ok(out)
}

pub fn write_trials_csv(path: &Path, recordings: &[TrialRecording]) -> AppResult<()> {
    let file = File::create(path).map_err(|e| AppError::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| AppError::io(path, e);
    writeln!(w, "{}", COLUMNS.join(",")).map_err(io)?;
    for r in recordings {
        for (i, row) in r.samples.data().chunks_exact(CHANNELS).enumerate() {
            writeln!(
                w,
                "{},{},{},{},{:?},{:?}",
                r.subject_id, r.movement_class, r.trial_index, i, row[0], row[1]
            )
            .map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Every `*.csv` file of a directory in file-name order.
pub fn load_dir(dir: &Path) -> AppResult<Vec<TrialRecording>> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| AppError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(AppError::Data {
            path: dir.to_path_buf(),
            msg: "no .csv files found".into(),
        });
    }
    let mut out = Vec::new();
    for f in files {
        out.extend(load_trials_csv(&f)?);
    }
    Ok(out)
}
