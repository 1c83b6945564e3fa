//! Forecast scoring in physical units, per-lead-time sweeps, improvement
//! percentages, and report rendering/serialization.
//!
//! Metrics are computed over every test row (nights included) after
//! predictions are mapped back to W/m^2 and clamped at zero.

use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{Error, Result};
use crate::features::{Dataset, Scaler};
use crate::gbrt::TreeEnsemble;
use crate::neural::Model;
use crate::numerics::{mae, rmse, Matrix};

/// Anything that maps a feature matrix to one prediction per row.
pub trait Predictor {
    fn predict_batch(&self, x: &Matrix) -> Result<Vec<f64>>;
}

impl Predictor for Model {
    fn predict_batch(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.predict(x)
    }
}

impl Predictor for TreeEnsemble {
    fn predict_batch(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.predict(x)
    }
}

impl<F> Predictor for F
where
    F: Fn(&Matrix) -> Result<Vec<f64>>,
{
    fn predict_batch(&self, x: &Matrix) -> Result<Vec<f64>> {
        self(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub mae: f64,
    pub rmse: f64,
}

/// Scores a predictor on a scaled test set. Predictions and labels are
/// converted back to W/m^2 (predictions clamped at 0, since negative
/// irradiance is physically impossible) before the metrics are computed.
pub fn evaluate(predictor: &dyn Predictor, test: &Dataset, scaler: &Scaler) -> Result<Metrics> {
    if test.is_empty() {
        return Err(Error::Validation("cannot evaluate on an empty test set".into()));
    }
    let raw = predictor.predict_batch(&test.x)?;
    let pred: Vec<f64> = raw.iter().map(|&p| scaler.ghi_to_physical(p).max(0.0)).collect();
    let truth: Vec<f64> = test.y.iter().map(|&v| scaler.ghi_to_physical(v)).collect();
    Ok(Metrics { mae: mae(&truth, &pred)?, rmse: rmse(&truth, &pred)? })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeadEntry {
    pub lead: usize,
    pub mae: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeadFailure {
    pub lead: usize,
    pub message: String,
}

/// Per-lead-time scores for one (model, locations-mode) row, e.g.
/// "LSTM-17". `mode` is the location count as a string ("1" for
/// single-location models).
#[derive(Debug, Clone, PartialEq)]
pub struct LeadTimeReport {
    pub model: String,
    pub mode: String,
    pub entries: Vec<LeadEntry>,
    pub failures: Vec<LeadFailure>,
}

impl LeadTimeReport {
    pub fn new(model: &str, mode: &str) -> LeadTimeReport {
        LeadTimeReport {
            model: model.to_string(),
            mode: mode.to_string(),
            entries: Vec::new(),
            failures: Vec::new(),
        }
    }

    /// Row label in the rendered table, e.g. "FFNN-1".
    pub fn label(&self) -> String {
        format!("{}-{}", self.model, self.mode)
    }

    pub fn entry(&self, lead: usize) -> Option<&LeadEntry> {
        self.entries.iter().find(|e| e.lead == lead)
    }

    pub fn average_mae(&self) -> Option<f64> {
        average(self.entries.iter().map(|e| e.mae))
    }

    pub fn average_rmse(&self) -> Option<f64> {
        average(self.entries.iter().map(|e| e.rmse))
    }
}

fn average(values: impl Iterator<Item = f64>) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in values {
        sum += v;
        n += 1;
    }
    if n == 0 {
        None
    } else {
        Some(sum / n as f64)
    }
}

/// Runs `run(T)` for every requested lead time on up to `jobs` worker
/// threads and merges results in ascending T order, so the report is
/// identical no matter how the work interleaves. A failed lead is
/// recorded in `failures` instead of aborting the sweep.
pub fn sweep_leads<F>(
    model: &str,
    mode: &str,
    leads: &[usize],
    jobs: usize,
    run: F,
) -> Result<LeadTimeReport>
where
    F: Fn(usize) -> Result<Metrics> + Sync,
{
    if leads.is_empty() {
        return Err(Error::Config("sweep needs at least one lead time".into()));
    }
    let mut sorted = leads.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    for &t in &sorted {
        if !(1..=crate::features::MAX_LEAD).contains(&t) {
            return Err(Error::Config(format!(
                "lead time {t} outside 1..={}",
                crate::features::MAX_LEAD
            )));
        }
    }
    let jobs = jobs.max(1).min(sorted.len());
    let next = AtomicUsize::new(0);
    let run = &run;
    let sorted_ref = &sorted;
    let mut collected: Vec<(usize, Result<Metrics>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..jobs)
            .map(|_| {
                scope.spawn(|| {
                    let mut out = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::SeqCst);
                        if i >= sorted_ref.len() {
                            break;
                        }
                        out.push((i, run(sorted_ref[i])));
                    }
                    out
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    });
    collected.sort_by_key(|(i, _)| *i);
    let mut report = LeadTimeReport::new(model, mode);
    for (i, res) in collected {
        let lead = sorted[i];
        match res {
            Ok(m) => report.entries.push(LeadEntry { lead, mae: m.mae, rmse: m.rmse }),
            Err(e) => report.failures.push(LeadFailure { lead, message: e.to_string() }),
        }
    }
    Ok(report)
}

/// Percent MAE reduction of the multi-location model over the
/// single-location one at lead time `lead`:
/// 100 * (MAE_single - MAE_multi) / MAE_single.
pub fn improvement(single: &LeadTimeReport, multi: &LeadTimeReport, lead: usize) -> Result<f64> {
    let s = single
        .entry(lead)
        .ok_or_else(|| Error::Validation(format!("{} has no lead {lead}", single.label())))?;
    let m = multi
        .entry(lead)
        .ok_or_else(|| Error::Validation(format!("{} has no lead {lead}", multi.label())))?;
    if s.mae == 0.0 {
        return Err(Error::Validation(
            "improvement is undefined when the single-location MAE is 0".into(),
        ));
    }
    Ok(100.0 * (s.mae - m.mae) / s.mae)
}

/// Writes `model,mode,T,mae,rmse` rows at full precision, stably sorted
/// by (model, mode, T).
pub fn emit_plot_data<W: Write>(reports: &[LeadTimeReport], mut out: W) -> Result<()> {
    if reports.is_empty() || reports.iter().all(|r| r.entries.is_empty()) {
        return Err(Error::Validation("no report entries to emit".into()));
    }
    let mut rows: Vec<(&str, &str, &LeadEntry)> = reports
        .iter()
        .flat_map(|r| r.entries.iter().map(move |e| (r.model.as_str(), r.mode.as_str(), e)))
        .collect();
    rows.sort_by(|a, b| (a.0, a.1, a.2.lead).cmp(&(b.0, b.1, b.2.lead)));
    writeln!(out, "model,mode,T,mae,rmse")?;
    for (model, mode, e) in rows {
        writeln!(out, "{model},{mode},{},{},{}", e.lead, e.mae, e.rmse)?;
    }
    Ok(())
}

/// Parses CSV produced by `emit_plot_data` back into reports, grouped by
/// (model, mode) in first-appearance order.
pub fn parse_plot_data<R: std::io::Read>(input: R) -> Result<Vec<LeadTimeReport>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    {
        let headers = rdr.headers().map_err(|e| Error::Csv { line: 1, msg: e.to_string() })?;
        let expected = ["model", "mode", "T", "mae", "rmse"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::Csv {
                line: 1,
                msg: format!("expected header model,mode,T,mae,rmse, got {headers:?}"),
            });
        }
    }
    let mut reports: Vec<LeadTimeReport> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let record = record.map_err(|e| Error::Csv { line, msg: e.to_string() })?;
        if record.len() != 5 {
            return Err(Error::Csv { line, msg: format!("expected 5 fields, got {}", record.len()) });
        }
        let field = |j: usize| record.get(j).unwrap_or("");
        let lead: usize = field(2)
            .parse()
            .map_err(|e| Error::Csv { line, msg: format!("bad T: {e}") })?;
        let mae: f64 = field(3)
            .parse()
            .map_err(|e| Error::Csv { line, msg: format!("bad mae: {e}") })?;
        let rmse: f64 = field(4)
            .parse()
            .map_err(|e| Error::Csv { line, msg: format!("bad rmse: {e}") })?;
        let (model, mode) = (field(0), field(1));
        let report = match reports.iter_mut().find(|r| r.model == model && r.mode == mode) {
            Some(r) => r,
            None => {
                reports.push(LeadTimeReport::new(model, mode));
                reports.last_mut().unwrap()
            }
        };
        report.entries.push(LeadEntry { lead, mae, rmse });
    }
    Ok(reports)
}

/// Renders a fixed-width text table with one row per report and MAE/RMSE
/// columns at T=1, T=24, and the average over each report's lead times,
/// rounded to one decimal. Missing cells print "-".
pub fn render_table(reports: &[LeadTimeReport]) -> String {
    let mut out = String::new();
    let cell = |v: Option<f64>| match v {
        Some(x) => format!("{x:.1}"),
        None => "-".to_string(),
    };
    out.push_str(&format!(
        "{:<12} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}\n",
        "model", "mae@1", "mae@24", "mae:avg", "rmse@1", "rmse@24", "rmse:avg"
    ));
    for r in reports {
        out.push_str(&format!(
            "{:<12} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}\n",
            r.label(),
            cell(r.entry(1).map(|e| e.mae)),
            cell(r.entry(24).map(|e| e.mae)),
            cell(r.average_mae()),
            cell(r.entry(1).map(|e| e.rmse)),
            cell(r.entry(24).map(|e| e.rmse)),
            cell(r.average_rmse()),
        ));
    }
    out
}
