//! Price-series ingestion, log-return construction, outlier filtering and
//! persistence of fit artifacts.
//!
//! Input schema: CSV with header `date,adjusted_close`, ISO-8601 dates,
//! decimal point, no thousands separators. Returns are expressed in percent
//! by default (`scale = 100`), the unit every published parameter table is
//! quoted in.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::gof::KsResult;
use crate::optimizer::{FitReport, IterationRow};
use crate::vg::VgParams;

/// Default multiplier turning raw log returns into percent units.
pub const DEFAULT_RETURN_SCALE: f64 = 100.0;
/// An outlier rule may not silently remove more than this fraction.
pub const DEFAULT_MAX_REMOVAL: f64 = 0.05;
/// Version tag embedded in every artifact header.
pub const FORMAT_VERSION: &str = concat!("vgfit ", env!("CARGO_PKG_VERSION"), " format 1");

/// One validated price observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceRow {
    pub date: NaiveDate,
    pub adjusted_close: f64,
}

/// Strictly date-ordered positive price series.
#[derive(Debug, Clone, Default)]
pub struct PriceSeries {
    rows: Vec<PriceRow>,
}

impl PriceSeries {
    pub fn rows(&self) -> &[PriceRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Supported price-file formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriceFormat {
    Csv,
}

/// Load and validate a price file. Malformed rows, non-positive prices and
/// out-of-order dates are reported with their line numbers; nothing is
/// silently dropped.
pub fn load_prices(path: &Path, format: PriceFormat) -> Result<PriceSeries> {
    match format {
        PriceFormat::Csv => load_prices_csv(path),
    }
}

fn load_prices_csv(path: &Path) -> Result<PriceSeries> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::Csv {
            path: display.clone(),
            source: e,
        })?;

    let headers = reader
        .headers()
        .map_err(|e| Error::Csv {
            path: display.clone(),
            source: e,
        })?
        .clone();
    if headers.len() < 2 || headers.get(0) != Some("date") || headers.get(1) != Some("adjusted_close")
    {
        return Err(Error::Parse {
            path: display,
            line: 1,
            message: format!(
                "expected header `date,adjusted_close`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Csv {
            path: display.clone(),
            source: e,
        })?;
        let line = record
            .position()
            .map(|p| p.line())
            .unwrap_or(rows.len() as u64 + 2);
        let parse = |msg: String| Error::Parse {
            path: display.clone(),
            line,
            message: msg,
        };
        let date_str = record
            .get(0)
            .ok_or_else(|| parse("missing date field".into()))?;
        let price_str = record
            .get(1)
            .ok_or_else(|| parse("missing adjusted_close field".into()))?;
        let date = NaiveDate::parse_from_str(date_str, "%Y-%m-%d")
            .map_err(|e| parse(format!("bad date `{date_str}`: {e}")))?;
        if price_str.is_empty() {
            return Err(parse("missing adjusted_close value".into()));
        }
        let price: f64 = price_str
            .parse()
            .map_err(|e| parse(format!("bad price `{price_str}`: {e}")))?;
        if !(price.is_finite() && price > 0.0) {
            return Err(parse(format!("non-positive price {price}")));
        }
        if let Some(last) = rows.last() {
            let last: &PriceRow = last;
            if date <= last.date {
                return Err(parse(format!(
                    "dates not strictly increasing: {date} follows {}",
                    last.date
                )));
            }
        }
        rows.push(PriceRow {
            date,
            adjusted_close: price,
        });
    }
    Ok(PriceSeries { rows })
}

/// A removed observation with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovedPoint {
    /// Index into the sample the point was removed from.
    pub index: usize,
    pub value: f64,
    pub reason: String,
}

/// Cleaned log-return observations plus the audit trail of removals.
#[derive(Debug, Clone, Default)]
pub struct ReturnSample {
    values: Vec<f64>,
    removed: Vec<RemovedPoint>,
    source: String,
}

impl ReturnSample {
    /// Wrap raw return values (simulated or externally prepared).
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput(idx));
        }
        Ok(Self {
            values,
            removed: Vec::new(),
            source: "raw values".into(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn removed(&self) -> &[RemovedPoint] {
        &self.removed
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Log returns `y_j = scale · ln(S_j / S_{j-1})` of a price series.
pub fn log_returns(prices: &PriceSeries, scale: f64) -> Result<ReturnSample> {
    if prices.len() < 2 {
        return Err(Error::Domain(format!(
            "log returns need at least 2 prices, got {}",
            prices.len()
        )));
    }
    if !(scale.is_finite() && scale != 0.0) {
        return Err(Error::Domain(format!("return scale {scale} must be finite and nonzero")));
    }
    let values = prices
        .rows()
        .windows(2)
        .map(|w| scale * (w[1].adjusted_close / w[0].adjusted_close).ln())
        .collect();
    Ok(ReturnSample {
        values,
        removed: Vec::new(),
        source: format!("log returns (scale {scale}) of {} prices", prices.len()),
    })
}

/// Outlier screening rules. Thresholds are in the units of the sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutlierRule {
    /// Keep everything.
    None,
    /// Remove observations with `|y| > threshold`.
    AbsThreshold { threshold: f64 },
    /// Remove observations more than `k` standard deviations from the mean,
    /// iterated to a fixed point so the filter is idempotent.
    ZScore { k: f64 },
}

/// Apply an outlier rule. Refuses to remove more than
/// `max_removal_fraction` of the sample (pass a larger fraction to
/// override). Removed points are recorded with index, value and reason.
pub fn filter_outliers(
    sample: &ReturnSample,
    rule: &OutlierRule,
    max_removal_fraction: f64,
) -> Result<ReturnSample> {
    let total = sample.len();
    let cap = (max_removal_fraction * total as f64).floor() as usize;
    let mut removed: Vec<RemovedPoint> = Vec::new();
    let mut kept: Vec<(usize, f64)> = sample.values.iter().copied().enumerate().collect();

    match rule {
        OutlierRule::None => {}
        OutlierRule::AbsThreshold { threshold } => {
            if !(threshold.is_finite() && *threshold > 0.0) {
                return Err(Error::Domain(format!(
                    "absolute outlier threshold {threshold} must be positive"
                )));
            }
            let (out, keep): (Vec<_>, Vec<_>) =
                kept.into_iter().partition(|(_, v)| v.abs() > *threshold);
            for (index, value) in out {
                removed.push(RemovedPoint {
                    index,
                    value,
                    reason: format!("|{value}| > {threshold}"),
                });
            }
            kept = keep;
        }
        OutlierRule::ZScore { k } => {
            if !(k.is_finite() && *k > 0.0) {
                return Err(Error::Domain(format!("z-score bound {k} must be positive")));
            }
            // iterate to a fixed point: re-filtering the output is a no-op
            loop {
                let n = kept.len() as f64;
                if n < 2.0 {
                    break;
                }
                let mean = kept.iter().map(|(_, v)| v).sum::<f64>() / n;
                let sd =
                    (kept.iter().map(|(_, v)| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
                if sd == 0.0 {
                    break;
                }
                let (out, keep): (Vec<_>, Vec<_>) = kept
                    .into_iter()
                    .partition(|(_, v)| ((v - mean) / sd).abs() > *k);
                let done = out.is_empty();
                for (index, value) in out {
                    let z = (value - mean) / sd;
                    removed.push(RemovedPoint {
                        index,
                        value,
                        reason: format!("z-score {z:.2} beyond ±{k}"),
                    });
                }
                kept = keep;
                if done || removed.len() > cap {
                    break;
                }
            }
        }
    }

    if removed.len() > cap {
        return Err(Error::ExcessiveRemoval {
            flagged: removed.len(),
            total,
            percent: 100.0 * removed.len() as f64 / total as f64,
            max_percent: 100.0 * max_removal_fraction,
        });
    }
    removed.sort_by_key(|r| r.index);
    let mut all_removed = sample.removed.clone();
    all_removed.extend(removed);
    Ok(ReturnSample {
        values: kept.into_iter().map(|(_, v)| v).collect(),
        removed: all_removed,
        source: format!("{}; filtered by {rule:?}", sample.source),
    })
}

/// Write a return sample as CSV (header `return`, one value per line, with
/// the removed-point audit trail as trailing comments).
pub fn save_returns(sample: &ReturnSample, path: &Path) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "# {FORMAT_VERSION}");
    let _ = writeln!(out, "return");
    for v in sample.values() {
        let _ = writeln!(out, "{v}");
    }
    for r in sample.removed() {
        let _ = writeln!(out, "# removed index={} value={} reason={}", r.index, r.value, r.reason);
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Read a return CSV written by [`save_returns`] (or any single-column
/// `return` file).
pub fn load_returns(path: &Path) -> Result<ReturnSample> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let display = path.display().to_string();
    let mut values = Vec::new();
    let mut saw_header = false;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_header {
            if line != "return" {
                return Err(Error::Parse {
                    path: display,
                    line: i as u64 + 1,
                    message: format!("expected header `return`, found `{line}`"),
                });
            }
            saw_header = true;
            continue;
        }
        let v: f64 = line.parse().map_err(|e| Error::Parse {
            path: display.clone(),
            line: i as u64 + 1,
            message: format!("bad return `{line}`: {e}"),
        })?;
        if !v.is_finite() {
            return Err(Error::Parse {
                path: display.clone(),
                line: i as u64 + 1,
                message: format!("non-finite return {v}"),
            });
        }
        values.push(v);
    }
    let mut sample = ReturnSample::from_values(values)?;
    sample.source = format!("loaded from {display}");
    Ok(sample)
}

/// Everything a single model run produces, in one serializable record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub version: String,
    pub model: String,
    pub mu: f64,
    pub delta: Option<f64>,
    pub sigma: f64,
    pub alpha: Option<f64>,
    pub theta: Option<f64>,
    pub loglik: f64,
    pub grad_norm: Option<f64>,
    pub converged: Option<bool>,
    pub iterations: Option<usize>,
    pub condition_number: Option<f64>,
    pub sample_size: Option<usize>,
    pub d_n: Option<f64>,
    pub d_plus: Option<f64>,
    pub d_minus: Option<f64>,
    pub p_value: Option<f64>,
}

impl RunSummary {
    /// Summary of a VG fit, optionally with its goodness-of-fit result.
    pub fn from_fit(report: &FitReport, ks: Option<&KsResult>) -> Self {
        let p = &report.params;
        Self {
            version: FORMAT_VERSION.into(),
            model: report.model_tag.as_str().into(),
            mu: p.mu,
            delta: Some(p.delta),
            sigma: p.sigma,
            alpha: Some(p.alpha),
            theta: Some(p.theta),
            loglik: report.loglik,
            grad_norm: Some(report.grad_norm),
            converged: Some(report.converged),
            iterations: Some(report.iterations.len()),
            condition_number: Some(report.condition_number),
            sample_size: ks.map(|k| k.n),
            d_n: ks.map(|k| k.d_n),
            d_plus: ks.map(|k| k.d_plus),
            d_minus: ks.map(|k| k.d_minus),
            p_value: ks.and_then(|k| k.p_value),
        }
    }

    pub fn params(&self) -> Result<VgParams> {
        VgParams::new(
            self.mu,
            self.delta.unwrap_or(0.0),
            self.sigma,
            self.alpha.ok_or_else(|| Error::Domain("summary has no alpha".into()))?,
            self.theta.ok_or_else(|| Error::Domain("summary has no theta".into()))?,
        )
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Write the iteration trace as CSV with the published table's columns:
/// iteration, μ, δ, σ, α, θ, log-likelihood, score norm. Floats use the
/// shortest round-trip representation, so a load reproduces them exactly.
pub fn save_trace(rows: &[IterationRow], path: &Path) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "# {FORMAT_VERSION}");
    let _ = writeln!(out, "iteration,mu,delta,sigma,alpha,theta,loglik,grad_norm");
    for row in rows {
        let p = &row.params;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            row.iteration, p.mu, p.delta, p.sigma, p.alpha, p.theta, row.loglik, row.grad_norm
        );
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Read a trace CSV written by [`save_trace`].
pub fn load_trace(path: &Path) -> Result<Vec<IterationRow>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let display = path.display().to_string();
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i as u64 + 1;
        if line.starts_with('#') || line.starts_with("iteration") || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::Parse {
                path: display,
                line: lineno,
                message: format!("expected 8 fields, found {}", fields.len()),
            });
        }
        let num = |s: &str| -> Result<f64> {
            s.parse().map_err(|e| Error::Parse {
                path: display.clone(),
                line: lineno,
                message: format!("bad number `{s}`: {e}"),
            })
        };
        rows.push(IterationRow {
            iteration: fields[0].parse().map_err(|e| Error::Parse {
                path: display.clone(),
                line: lineno,
                message: format!("bad iteration `{}`: {e}", fields[0]),
            })?,
            params: VgParams {
                mu: num(fields[1])?,
                delta: num(fields[2])?,
                sigma: num(fields[3])?.max(f64::MIN_POSITIVE),
                alpha: num(fields[4])?.max(f64::MIN_POSITIVE),
                theta: num(fields[5])?.max(f64::MIN_POSITIVE),
            },
            loglik: num(fields[6])?,
            grad_norm: num(fields[7])?,
            gradient_fallback: false,
        });
    }
    Ok(rows)
}

/// Write a run summary as pretty JSON (f64 round-trips exactly through
/// serde_json).
pub fn save_summary(summary: &RunSummary, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(summary)
        .map_err(|e| Error::Domain(format!("summary serialization failed: {e}")))?;
    fs::write(path, json + "\n").map_err(|e| io_err(path, e))
}

/// Read a summary written by [`save_summary`].
pub fn load_summary(path: &Path) -> Result<RunSummary> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: 0,
        message: format!("summary deserialization failed: {e}"),
    })
}

/// Persist a fit and its goodness-of-fit result: `<stem>_trace.csv` and
/// `<stem>_summary.json` under `dir`.
pub fn save_report(
    report: &FitReport,
    ks: Option<&KsResult>,
    dir: &Path,
    stem: &str,
) -> Result<(std::path::PathBuf, std::path::PathBuf)> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let trace_path = dir.join(format!("{stem}_trace.csv"));
    let summary_path = dir.join(format!("{stem}_summary.json"));
    save_trace(&report.iterations, &trace_path)?;
    save_summary(&RunSummary::from_fit(report, ks), &summary_path)?;
    Ok((trace_path, summary_path))
}
