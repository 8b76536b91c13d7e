//! Method comparison tables: a CSV for machines and a two-block markdown
//! table (fidelity and first-order texture | GLCM texture) for people.
//!
//! Fidelity columns hold absolute values; texture columns hold percentages
//! of the noise-free original's value, so the original row reads 100.00.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use texgan_imaging::metrics::{relative_report, MetricSet, FIDELITY_KEYS, TEXTURE_KEYS};

use crate::error::{CoreError, Result};

/// Report columns in display order: `(metric key, header)`.
pub const COLUMNS: [(&str, &str); 9] = [
    ("psnr", "PSNR"),
    ("ssim", "SSIM"),
    ("rangefilt", "rangefilt"),
    ("stdfilt", "stdfilt"),
    ("entropyfilt", "entropyfilt"),
    ("contrast", "Contrast"),
    ("correlation", "Correlation"),
    ("energy", "Energy"),
    ("homogeneity", "Homogeneity"),
];

/// Columns in the first markdown block; the rest go in the second.
const FIRST_BLOCK: usize = 5;

/// One table row: fidelity values and texture percentages for a method.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub method: String,
    pub values: MetricSet,
}

impl MetricReport {
    /// Row for the noise-free original: texture pinned to 100, fidelity
    /// undefined.
    pub fn original(label: &str) -> Self {
        let mut values = MetricSet::default();
        for k in FIDELITY_KEYS {
            values.insert(k, None);
        }
        for k in TEXTURE_KEYS {
            values.insert(k, Some(100.0));
        }
        Self {
            method: label.to_string(),
            values,
        }
    }

    /// Row from mean absolute metrics of a method and of the original.
    pub fn normalized(label: &str, method: &MetricSet, original: &MetricSet) -> Result<Self> {
        let mut values = relative_report(method, original)?;
        for k in FIDELITY_KEYS {
            if method.contains(k) {
                values.insert(k, method.get(k));
            }
        }
        Ok(Self {
            method: label.to_string(),
            values,
        })
    }
}

fn check_rows(reports: &[MetricReport]) -> Result<()> {
    let Some(first) = reports.first() else {
        return Err(CoreError::Config("report needs at least one method row".into()));
    };
    for r in reports {
        if !r.values.keys().eq(first.values.keys()) {
            return Err(CoreError::Config(format!(
                "metric keys of `{}` differ from `{}`",
                r.method, first.method
            )));
        }
        if let Some((k, _)) = COLUMNS.iter().find(|(k, _)| !r.values.contains(k)) {
            return Err(CoreError::Config(format!("`{}` lacks metric `{k}`", r.method)));
        }
    }
    Ok(())
}

fn cell(value: Option<f64>, key: &str) -> String {
    match value {
        None => "N/A".to_string(),
        Some(v) if key == "ssim" => format!("{v:.3}"),
        Some(v) => format!("{v:.2}"),
    }
}

/// `method,psnr,...,homogeneity` with full-precision values and `NA` for
/// undefined cells.
pub fn render_csv(reports: &[MetricReport]) -> Result<String> {
    check_rows(reports)?;
    let mut out = String::from("method");
    for (k, _) in COLUMNS {
        write!(out, ",{k}").unwrap();
    }
    out.push('\n');
    for r in reports {
        out.push_str(&r.method);
        for (k, _) in COLUMNS {
            match r.values.get(k) {
                Some(v) => write!(out, ",{v}").unwrap(),
                None => out.push_str(",NA"),
            }
        }
        out.push('\n');
    }
    Ok(out)
}

fn render_block(reports: &[MetricReport], columns: &[(&str, &str)]) -> String {
    let mut rows: Vec<Vec<String>> = vec![std::iter::once("Method".to_string())
        .chain(columns.iter().map(|(_, h)| h.to_string()))
        .collect()];
    for r in reports {
        rows.push(
            std::iter::once(r.method.clone())
                .chain(columns.iter().map(|(k, _)| cell(r.values.get(k), k)))
                .collect(),
        );
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|row| row[c].chars().count()).max().unwrap_or(0))
        .collect();
    let line = |row: &[String]| {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (s, &w))| if c == 0 { format!("{s:<w$}") } else { format!("{s:>w$}") })
            .collect();
        format!("| {} |\n", cells.join(" | "))
    };
    let mut out = line(&rows[0]);
    let rule: Vec<String> = widths
        .iter()
        .enumerate()
        .map(|(c, &w)| if c == 0 { format!(":{}", "-".repeat(w + 1)) } else { format!("{}:", "-".repeat(w + 1)) })
        .collect();
    out.push_str(&format!("|{}|\n", rule.join("|")));
    for row in &rows[1..] {
        out.push_str(&line(row));
    }
    out
}

/// Both markdown blocks separated by a blank line.
pub fn render_markdown(reports: &[MetricReport]) -> Result<String> {
    check_rows(reports)?;
    let mut out = render_block(reports, &COLUMNS[..FIRST_BLOCK]);
    out.push('\n');
    out.push_str(&render_block(reports, &COLUMNS[FIRST_BLOCK..]));
    Ok(out)
}

/// Writes `<dir>/report.csv` and `<dir>/report.md`. Rows keep the given
/// order.
pub fn emit_report(reports: &[MetricReport], dir: &Path) -> Result<()> {
    let csv = render_csv(reports)?;
    let md = render_markdown(reports)?;
    fs::create_dir_all(dir).map_err(|e| CoreError::io(dir, e))?;
    for (name, text) in [("report.csv", csv), ("report.md", md)] {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| CoreError::io(&path, e))?;
    }
    Ok(())
}

/// Parses a CSV written by [`render_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<MetricReport>> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    if header.first() != Some(&"method") {
        return Err(CoreError::Config("report CSV must start with a `method` column".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != header.len() {
                return Err(CoreError::Config(format!("report line `{line}` has {} cells", cells.len())));
            }
            let mut values = MetricSet::default();
            for (k, c) in header[1..].iter().zip(&cells[1..]) {
                let v = match *c {
                    "NA" => None,
                    s => Some(s.parse().map_err(|_| CoreError::Config(format!("bad number `{s}`")))?),
                };
                values.insert(k, v);
            }
            Ok(MetricReport {
                method: cells[0].to_string(),
                values,
            })
        })
        .collect()
}
