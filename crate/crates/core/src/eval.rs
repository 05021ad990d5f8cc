//! Positioning-error statistics and the CSV tables they are reported in.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Euclidean distance between two horizontal positions.
pub fn horizontal_error(pred: [f64; 2], label: [f64; 2]) -> f64 {
    (pred[0] - label[0]).hypot(pred[1] - label[1])
}

/// Linear-interpolation empirical quantile: with sorted `x` and
/// `h = (n - 1) q`, `x[floor h] + frac(h) * (x[floor h + 1] - x[floor h])`.
pub fn quantile(errors: &[f64], q: f64) -> Result<f64> {
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, q)
}

fn quantile_sorted(sorted: &[f64], q: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::arg("quantile of an empty error set"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::arg(format!("quantile level {q} outside [0, 1]")));
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// Where a report's numbers came from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportMeta {
    pub experiment: String,
    pub train_size: usize,
    pub test_size: usize,
    pub factory_seed: u64,
    pub training_seed: u64,
    /// Content hash of the training dataset.
    pub dataset_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    /// Per-sample errors in input order.
    pub errors: Vec<f64>,
    pub sorted: Vec<f64>,
    /// `(error, i / n)` at every sorted error.
    pub cdf: Vec<(f64, f64)>,
    pub q90: f64,
    pub meta: ReportMeta,
}

impl ErrorReport {
    pub fn from_errors(errors: Vec<f64>, meta: ReportMeta) -> Result<Self> {
        if let Some(bad) = errors.iter().find(|e| !(e.is_finite() && **e >= 0.0)) {
            return Err(Error::arg(format!("positioning error {bad} is not a finite non-negative value")));
        }
        let mut sorted = errors.clone();
        sorted.sort_by(f64::total_cmp);
        let q90 = quantile_sorted(&sorted, 0.9)?;
        let n = sorted.len() as f64;
        let cdf = sorted.iter().enumerate().map(|(i, &e)| (e, (i + 1) as f64 / n)).collect();
        Ok(ErrorReport { errors, sorted, cdf, q90, meta })
    }

    pub fn quantile(&self, q: f64) -> Result<f64> {
        quantile_sorted(&self.sorted, q)
    }

    /// Fraction of errors at or below `e`.
    pub fn cdf_at(&self, e: f64) -> f64 {
        self.sorted.partition_point(|&x| x <= e) as f64 / self.sorted.len() as f64
    }

    fn lineage(&self, out: &mut String) {
        let m = &self.meta;
        let _ = writeln!(out, "# experiment={}", m.experiment);
        let _ = writeln!(out, "# factory_seed={}", m.factory_seed);
        let _ = writeln!(out, "# training_seed={}", m.training_seed);
        let _ = writeln!(out, "# dataset_hash={}", m.dataset_hash);
        let _ = writeln!(out, "# train_size={} test_size={}", m.train_size, m.test_size);
    }

    /// `error,cum_prob` rows preceded by `#` lineage lines.
    pub fn cdf_csv(&self) -> String {
        let mut out = String::new();
        self.lineage(&mut out);
        out.push_str("error,cum_prob\n");
        for (e, p) in &self.cdf {
            let _ = writeln!(out, "{e:.6},{p:.6}");
        }
        out
    }
}

/// Errors between predictions and labels, in order.
pub fn build_report(preds: &[[f64; 2]], labels: &[[f32; 2]], meta: ReportMeta) -> Result<ErrorReport> {
    if preds.len() != labels.len() {
        return Err(Error::shape(format!("{} predictions for {} labels", preds.len(), labels.len())));
    }
    let errors = preds
        .iter()
        .zip(labels)
        .map(|(p, l)| horizontal_error(*p, [l[0] as f64, l[1] as f64]))
        .collect();
    ErrorReport::from_errors(errors, meta)
}

/// One line of an `experiment,param,q90` summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub experiment: String,
    pub param: String,
    pub q90: f64,
    pub factory_seed: u64,
    pub training_seed: u64,
    pub dataset_hash: String,
}

impl SummaryRow {
    pub fn new(param: impl Into<String>, report: &ErrorReport) -> Self {
        SummaryRow {
            experiment: report.meta.experiment.clone(),
            param: param.into(),
            q90: report.q90,
            factory_seed: report.meta.factory_seed,
            training_seed: report.meta.training_seed,
            dataset_hash: report.meta.dataset_hash.clone(),
        }
    }
}

/// Summary table; each row's lineage goes in a `#` line above it.
pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::new();
    for r in rows {
        let _ = writeln!(
            out,
            "# {} {}: factory_seed={} training_seed={} dataset_hash={}",
            r.experiment, r.param, r.factory_seed, r.training_seed, r.dataset_hash
        );
    }
    out.push_str("experiment,param,q90\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{:.6}", r.experiment, r.param, r.q90);
    }
    out
}
