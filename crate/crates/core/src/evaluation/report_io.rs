//! CSV and JSON report files.
//!
//! CSV layout: a `#`-prefixed header block of `key,value` summary lines,
//! then the column line `variant,threshold_mm,fraction` and one row per
//! threshold and curve. Floats use the shortest exact decimal form, so
//! re-importing reproduces the report bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{EvalReport, MetricCurve, Variant};
use crate::error::{Error, Result};

pub const CSV_COLUMNS: &str = "variant,threshold_mm,fraction";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl ReportFormat {
    /// From the file extension, defaulting to CSV.
    pub fn for_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => ReportFormat::Json,
            _ => ReportFormat::Csv,
        }
    }
}

pub fn report_to_csv(r: &EvalReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# fingerprint,{}", r.fingerprint);
    let _ = writeln!(s, "# frames,{}", r.frames);
    let _ = writeln!(s, "# average_error_mm,{}", r.average_error_mm);
    for (j, e) in r.per_joint_error_mm.iter().enumerate() {
        let _ = writeln!(s, "# joint_error_mm,{j},{e}");
    }
    s.push_str(CSV_COLUMNS);
    s.push('\n');
    for c in r.curves() {
        for (t, f) in c.thresholds.iter().zip(&c.fractions) {
            let _ = writeln!(s, "{},{t},{f}", c.variant.name());
        }
    }
    s
}

fn num<T: std::str::FromStr>(s: &str, line: usize) -> Result<T> {
    s.trim().parse().map_err(|_| Error::Format(format!("line {line}: bad number `{s}`")))
}

pub fn report_from_csv(text: &str) -> Result<EvalReport> {
    let (mut fingerprint, mut frames, mut average) = (None, None, None);
    let mut per_joint = Vec::new();
    let mut curves: Vec<MetricCurve> = Vec::new();
    let mut seen_columns = false;
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix("# ") {
            let fields: Vec<&str> = meta.split(',').collect();
            match fields.as_slice() {
                ["fingerprint", v] => fingerprint = Some(v.to_string()),
                ["frames", v] => frames = Some(num::<usize>(v, n)?),
                ["average_error_mm", v] => average = Some(num::<f64>(v, n)?),
                ["joint_error_mm", j, v] => {
                    if num::<usize>(j, n)? != per_joint.len() {
                        return Err(Error::Format(format!("line {n}: joints out of order")));
                    }
                    per_joint.push(num::<f64>(v, n)?);
                }
                _ => return Err(Error::Format(format!("line {n}: unknown header `{line}`"))),
            }
            continue;
        }
        if !seen_columns {
            if line != CSV_COLUMNS {
                return Err(Error::Format(format!("line {n}: expected `{CSV_COLUMNS}`")));
            }
            seen_columns = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let [v, t, f] = fields.as_slice() else {
            return Err(Error::Format(format!("line {n}: expected three columns")));
        };
        let variant = Variant::parse(v)?;
        if curves.last().map(|c| c.variant) != Some(variant) {
            curves.push(MetricCurve { variant, thresholds: Vec::new(), fractions: Vec::new() });
        }
        let c = curves.last_mut().expect("just pushed");
        c.thresholds.push(num(t, n)?);
        c.fractions.push(num(f, n)?);
    }
    let missing = |what: &str| Error::Format(format!("report is missing {what}"));
    let mut take = |variant: Variant| {
        let pos = curves.iter().position(|c| c.variant == variant).ok_or_else(|| missing(variant.name()))?;
        Ok::<_, Error>(curves.remove(pos))
    };
    let all_joints = take(Variant::AllJoints)?;
    let per_frame_average = take(Variant::PerFrameAverage)?;
    if !curves.is_empty() {
        return Err(Error::Format("duplicate curve in report".into()));
    }
    Ok(EvalReport {
        fingerprint: fingerprint.ok_or_else(|| missing("the fingerprint"))?,
        frames: frames.ok_or_else(|| missing("the frame count"))?,
        average_error_mm: average.ok_or_else(|| missing("the average error"))?,
        per_joint_error_mm: per_joint,
        all_joints,
        per_frame_average,
    })
}

pub fn encode_report(r: &EvalReport, format: ReportFormat) -> Result<Vec<u8>> {
    Ok(match format {
        ReportFormat::Csv => report_to_csv(r).into_bytes(),
        ReportFormat::Json => {
            let mut v = serde_json::to_vec_pretty(r)?;
            v.push(b'\n');
            v
        }
    })
}

pub fn export_report(r: &EvalReport, path: &Path, format: ReportFormat) -> Result<()> {
    fs::write(path, encode_report(r, format)?)?;
    Ok(())
}

pub fn import_report(path: &Path, format: ReportFormat) -> Result<EvalReport> {
    let bytes = fs::read(path)?;
    match format {
        ReportFormat::Json => Ok(serde_json::from_slice(&bytes)?),
        ReportFormat::Csv => {
            let text = String::from_utf8(bytes).map_err(|_| Error::Format("report is not UTF-8".into()))?;
            report_from_csv(&text)
        }
    }
}
