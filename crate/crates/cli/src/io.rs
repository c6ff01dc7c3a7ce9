//! File formats.
//!
//! Datasets are CSV with header `s_0..s_{ds-1},q_0..q_{dq-1}[,label]`, LF line
//! endings and `#` comment lines. Files written here start with one comment
//! line holding the JSON config that produced them. Numbers are written with
//! 12 significant digits, so a write → read → write cycle is byte-identical.

use std::fs;
use std::path::Path;

use coad::categorical::FrontierPoint;
use coad::dataset::PairedDataset;
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Shortest decimal for `x` rounded to 12 significant digits.
pub fn fmt12(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("valid float");
    let a = rounded.abs();
    if rounded == 0.0 {
        "0".to_string()
    } else if (1e-6..1e15).contains(&a) {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

/// `# coad <json>` line echoing the producing config.
pub fn config_comment<C: Serialize>(config: &C) -> String {
    format!(
        "# coad {}\n",
        serde_json::to_string(config).expect("config serializes")
    )
}

/// A CSV table with an optional leading comment line.
pub fn csv_table(comment: Option<&str>, header: &[String], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    if let Some(c) = comment {
        out.push_str(c);
    }
    out.push_str(&header.join(","));
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

fn header_for(d_s: usize, d_q: usize, labels: bool) -> Vec<String> {
    let mut h: Vec<String> = (0..d_s).map(|k| format!("s_{k}")).collect();
    h.extend((0..d_q).map(|k| format!("q_{k}")));
    if labels {
        h.push("label".into());
    }
    h
}

pub fn dataset_csv(data: &PairedDataset<f64>, comment: Option<&str>) -> String {
    let labels = data.labels();
    let header = header_for(data.d_s(), data.d_q(), labels.is_some());
    let rows: Vec<Vec<String>> = (0..data.len())
        .map(|i| {
            let mut r: Vec<String> = data.s_row(i).iter().map(|&v| fmt12(v)).collect();
            r.extend(data.q_row(i).iter().map(|&v| fmt12(v)));
            if let Some(l) = labels {
                r.push(if l[i] { "1" } else { "0" }.into());
            }
            r
        })
        .collect();
    csv_table(comment, &header, &rows)
}

pub fn write_dataset(
    path: &Path,
    data: &PairedDataset<f64>,
    comment: Option<&str>,
) -> CliResult<()> {
    write_text(path, &dataset_csv(data, comment))
}

pub fn read_dataset(path: &Path) -> CliResult<PairedDataset<f64>> {
    parse_dataset(&read_text(path)?, &path.display().to_string())
}

/// Column layout from a header row.
fn parse_header(fields: &[String], source: &str) -> CliResult<(usize, usize, bool)> {
    let bad = |pos: usize, expected: &str, found: &str| {
        CliError::Input(format!(
            "{source}: header: expected column '{expected}' at position {}, found '{found}'",
            pos + 1
        ))
    };
    let mut pos = 0;
    let mut d_s = 0;
    while pos < fields.len() && fields[pos].starts_with("s_") {
        let want = format!("s_{d_s}");
        if fields[pos] != want {
            return Err(bad(pos, &want, &fields[pos]));
        }
        d_s += 1;
        pos += 1;
    }
    let mut d_q = 0;
    while pos < fields.len() && fields[pos].starts_with("q_") {
        let want = format!("q_{d_q}");
        if fields[pos] != want {
            return Err(bad(pos, &want, &fields[pos]));
        }
        d_q += 1;
        pos += 1;
    }
    if d_s == 0 {
        return Err(bad(0, "s_0", fields.first().map_or("", String::as_str)));
    }
    if d_q == 0 {
        return Err(bad(pos, "q_0", fields.get(pos).map_or("", String::as_str)));
    }
    let labels = match fields.get(pos).map(String::as_str) {
        None => false,
        Some("label") if pos + 1 == fields.len() => true,
        Some("label") => {
            return Err(CliError::Input(format!(
                "{source}: header: unexpected column '{}' after 'label'",
                fields[pos + 1]
            )))
        }
        Some(other) => return Err(bad(pos, "label", other)),
    };
    Ok((d_s, d_q, labels))
}

/// Parses dataset CSV text. `source` names the input in error messages.
pub fn parse_dataset(text: &str, source: &str) -> CliResult<PairedDataset<f64>> {
    let metadata = text
        .lines()
        .next()
        .and_then(|l| l.strip_prefix("# coad "))
        .unwrap_or("external")
        .to_string();
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Input(format!("{source}: header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.iter().all(String::is_empty) {
        return Err(CliError::Input(format!(
            "{source}: empty dataset (no header)"
        )));
    }
    let (d_s, d_q, has_labels) = parse_header(&header, source)?;
    let width = header.len();
    let mut s = Vec::new();
    let mut q = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Input(format!("{source}: {e}")))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != width {
            return Err(CliError::Input(format!(
                "{source}: line {line}: expected {width} fields, found {}",
                record.len()
            )));
        }
        for (k, field) in record.iter().enumerate() {
            let name = &header[k];
            if has_labels && k == width - 1 {
                labels.push(match field {
                    "0" => false,
                    "1" => true,
                    other => {
                        return Err(CliError::Input(format!(
                            "{source}: line {line}: field 'label': expected 0 or 1, found {other:?}"
                        )))
                    }
                });
                continue;
            }
            let v: f64 = field.parse().map_err(|_| {
                CliError::Input(format!(
                    "{source}: line {line}: field '{name}': cannot parse {field:?} as a number"
                ))
            })?;
            if !v.is_finite() {
                return Err(CliError::Input(format!(
                    "{source}: line {line}: field '{name}': value {field:?} is not finite"
                )));
            }
            if k < d_s {
                s.push(v);
            } else {
                q.push(v);
            }
        }
    }
    if s.is_empty() {
        return Err(CliError::Input(format!("{source}: empty dataset")));
    }
    let labels = has_labels.then_some(labels);
    Ok(PairedDataset::new(s, d_s, q, d_q, labels, metadata)?)
}

/// One row of an exported precision-recall curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    /// `[beta]` for a β sweep, `[tau_s, tau_q]` for a threshold grid.
    pub key: Vec<f64>,
    pub r_hat: f64,
    pub p_hat: f64,
    pub f_hat: f64,
    /// `(R, P, F)` against true labels.
    pub supervised: Option<(f64, f64, f64)>,
}

impl CurveRow {
    pub fn from_frontier(p: &FrontierPoint<f64>) -> Self {
        Self {
            key: vec![p.pair.tau_s, p.pair.tau_q],
            r_hat: p.r_hat,
            p_hat: p.p_hat,
            f_hat: p.f_hat,
            supervised: p
                .supervised
                .as_ref()
                .map(|s| (s.recall, s.precision, s.f_beta)),
        }
    }
}

/// Curve CSV: key columns, `R_hat,P_hat,F_hat`, then `R,P,F` when every row
/// carries supervised values.
pub fn export_curves(key_names: &[&str], rows: &[CurveRow], comment: Option<&str>) -> String {
    let supervised = !rows.is_empty() && rows.iter().all(|r| r.supervised.is_some());
    let mut header: Vec<String> = key_names.iter().map(|s| s.to_string()).collect();
    header.extend(["R_hat", "P_hat", "F_hat"].map(String::from));
    if supervised {
        header.extend(["R", "P", "F"].map(String::from));
    }
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut v: Vec<String> = r.key.iter().map(|&x| fmt12(x)).collect();
            v.extend([r.r_hat, r.p_hat, r.f_hat].map(fmt12));
            if let (true, Some((a, b, c))) = (supervised, r.supervised) {
                v.extend([a, b, c].map(fmt12));
            }
            v
        })
        .collect();
    csv_table(comment, &header, &body)
}

/// Reads a curve CSV back into rows (comment lines skipped).
pub fn parse_curves(text: &str, key_len: usize) -> CliResult<Vec<CurveRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let width = reader
        .headers()
        .map_err(|e| CliError::Input(format!("curve header: {e}")))?
        .len();
    let supervised = width == key_len + 6;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Input(format!("curve row: {e}")))?;
        let v: Vec<f64> = record
            .iter()
            .map(|f| {
                f.parse()
                    .map_err(|_| CliError::Input(format!("curve field {f:?} is not a number")))
            })
            .collect::<CliResult<_>>()?;
        out.push(CurveRow {
            key: v[..key_len].to_vec(),
            r_hat: v[key_len],
            p_hat: v[key_len + 1],
            f_hat: v[key_len + 2],
            supervised: supervised.then(|| (v[key_len + 3], v[key_len + 4], v[key_len + 5])),
        });
    }
    Ok(out)
}
