//! Full metric suite over one calibrated output matrix.

use std::fmt::Write as _;

use serde::Serialize;

use super::{
    accuracy_topk, brier, cw_ece, nll, resample_indices, summarize, top1_ece, CwEce, EvalConfig,
};
use crate::data::ScoreMatrix;
use crate::error::{CalibError, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopKAccuracy {
    pub k: usize,
    pub value: f64,
}

/// One (metric, threshold) entry of the flat export.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub metric: String,
    pub threshold: Option<String>,
    pub value: f64,
    pub std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub n_samples: usize,
    pub n_classes: usize,
    pub accuracy: Vec<TopKAccuracy>,
    pub top1_ece: f64,
    pub cw_ece: Vec<CwEce>,
    pub nll: f64,
    pub brier: f64,
    /// Requested top-k values larger than K, which were skipped.
    pub skipped_top_k: Vec<usize>,
    /// Bootstrap standard deviations, in the order of [`MetricReport::rows`].
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bootstrap_std: Option<Vec<f64>>,
    pub bootstrap_std_defined: bool,
    pub config: EvalConfig,
}

struct Point {
    accuracy: Vec<TopKAccuracy>,
    top1_ece: f64,
    cw_ece: Vec<CwEce>,
    nll: f64,
    brier: f64,
}

impl Point {
    fn values(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.accuracy.iter().map(|a| a.value).collect();
        v.push(self.top1_ece);
        v.extend(self.cw_ece.iter().map(|c| c.mean));
        v.push(self.nll);
        v.push(self.brier);
        v
    }
}

fn point<S: Scalar>(
    calibrated: &ScoreMatrix<S>,
    labels: &[usize],
    raw: Option<&ScoreMatrix<S>>,
    cfg: &EvalConfig,
    ks: &[usize],
) -> Result<Point> {
    let accuracy = ks
        .iter()
        .map(|&k| {
            accuracy_topk(calibrated, labels, k, cfg.tie_break, raw).map(|value| TopKAccuracy { k, value })
        })
        .collect::<Result<_>>()?;
    let cw = cfg
        .cw_thresholds
        .iter()
        .map(|&t| cw_ece(calibrated, labels, cfg, t))
        .collect::<Result<_>>()?;
    Ok(Point {
        accuracy,
        top1_ece: top1_ece(calibrated, labels, cfg, raw)?,
        cw_ece: cw,
        nll: nll(calibrated, labels)?,
        brier: brier(calibrated, labels)?,
    })
}

/// Evaluate every configured metric. `raw` is needed for the raw-logit tie-break.
pub fn evaluate<S: Scalar>(
    calibrated: &ScoreMatrix<S>,
    labels: &[usize],
    raw: Option<&ScoreMatrix<S>>,
    cfg: &EvalConfig,
) -> Result<MetricReport> {
    cfg.validate()?;
    let k = calibrated.cols();
    if let Some(&y) = labels.iter().find(|&&y| y >= k) {
        return Err(CalibError::InvalidInput(format!("label {y} outside [0, {k})")));
    }
    let (ks, skipped): (Vec<usize>, Vec<usize>) = cfg.top_k.iter().partition(|&&t| t >= 1 && t <= k);
    let p = point(calibrated, labels, raw, cfg, &ks)?;

    let (bootstrap_std, defined) = if cfg.bootstrap > 0 {
        let mut draws: Vec<Vec<f64>> = Vec::with_capacity(cfg.bootstrap);
        for idx in resample_indices(labels.len(), cfg.bootstrap, cfg.seed) {
            let cal = calibrated.select_rows(&idx);
            let lab: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            let raw_sel = raw.map(|r| r.select_rows(&idx));
            draws.push(point(&cal, &lab, raw_sel.as_ref(), cfg, &ks)?.values());
        }
        let n_metrics = p.values().len();
        let stds = (0..n_metrics)
            .map(|m| summarize(draws.iter().map(|d| d[m]).collect()).std)
            .collect();
        (Some(stds), cfg.bootstrap > 1)
    } else {
        (None, false)
    };

    Ok(MetricReport {
        n_samples: labels.len(),
        n_classes: k,
        accuracy: p.accuracy,
        top1_ece: p.top1_ece,
        cw_ece: p.cw_ece,
        nll: p.nll,
        brier: p.brier,
        skipped_top_k: skipped,
        bootstrap_std,
        bootstrap_std_defined: defined,
        config: cfg.clone(),
    })
}

impl MetricReport {
    pub fn rows(&self) -> Vec<MetricRow> {
        let mut rows: Vec<MetricRow> = self
            .accuracy
            .iter()
            .map(|a| MetricRow {
                metric: format!("acc_top{}", a.k),
                threshold: None,
                value: a.value,
                std: None,
            })
            .collect();
        rows.push(MetricRow {
            metric: "top1_ece".into(),
            threshold: None,
            value: self.top1_ece,
            std: None,
        });
        rows.extend(self.cw_ece.iter().map(|c| MetricRow {
            metric: "cw_ece".into(),
            threshold: Some(c.threshold.clone()),
            value: c.mean,
            std: None,
        }));
        rows.push(MetricRow {
            metric: "nll".into(),
            threshold: None,
            value: self.nll,
            std: None,
        });
        rows.push(MetricRow {
            metric: "brier".into(),
            threshold: None,
            value: self.brier,
            std: None,
        });
        if let Some(stds) = &self.bootstrap_std {
            for (r, &s) in rows.iter_mut().zip(stds) {
                r.std = Some(s);
            }
        }
        rows
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,threshold,value,std\n");
        for r in self.rows() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                r.metric,
                r.threshold.unwrap_or_default(),
                r.value,
                r.std.map(|s| s.to_string()).unwrap_or_default()
            );
        }
        out
    }

    pub fn to_table(&self) -> String {
        let rows = self.rows();
        let labels: Vec<String> = rows
            .iter()
            .map(|r| match &r.threshold {
                Some(t) => format!("{}[{}]", r.metric, t),
                None => r.metric.clone(),
            })
            .collect();
        let width = labels.iter().map(String::len).max().unwrap_or(0).max(6);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>12}  {:>12}", "metric", "value", "std");
        for (l, r) in labels.iter().zip(&rows) {
            let std = r.std.map(|s| format!("{s:.6}")).unwrap_or_else(|| "-".into());
            let _ = writeln!(out, "{:<width$}  {:>12.6}  {:>12}", l, r.value, std);
        }
        out
    }
}
