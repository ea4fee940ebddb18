//! Calibration and accuracy metrics.
//!
//! Calibrated outputs are taken as an unnormalized N×K matrix of per-class
//! probabilities: rows are never renormalized after class-wise calibration.

pub mod partition;
pub mod report;

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::binning::Binner;
use crate::data::{class_priors, BinaryCalibrationSet, ScoreMatrix};
use crate::error::{CalibError, Result};
use crate::scalar::{clamp_prob, Scalar};

pub use partition::{eval_bin_edges, eval_partition, kmeans_1d, EvalPartition, EvalScheme, PartitionResult};
pub use report::{evaluate, MetricReport, MetricRow};

/// Secondary ordering used when calibrated probabilities tie.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    ClassIndex,
    RawLogit,
}

impl std::str::FromStr for TieBreak {
    type Err = CalibError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "class-index" => Ok(TieBreak::ClassIndex),
            "raw-logit" => Ok(TieBreak::RawLogit),
            other => Err(CalibError::InvalidInput(format!("unknown tie-break `{other}`"))),
        }
    }
}

/// Confidence threshold for class-wise ECE; predictions must exceed it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CwThreshold {
    Zero,
    OneOverK,
    ClassPrior,
    Half,
    Custom(f64),
}

impl CwThreshold {
    pub fn name(&self) -> String {
        match self {
            CwThreshold::Zero => "zero".into(),
            CwThreshold::OneOverK => "one_over_k".into(),
            CwThreshold::ClassPrior => "prior".into(),
            CwThreshold::Half => "half".into(),
            CwThreshold::Custom(v) => format!("{v}"),
        }
    }

    fn value<S: Scalar>(&self, k_classes: usize, prior: S) -> S {
        match *self {
            CwThreshold::Zero => S::zero(),
            CwThreshold::OneOverK => S::one() / S::from_usize_lossy(k_classes),
            CwThreshold::ClassPrior => prior,
            CwThreshold::Half => S::lit(0.5),
            CwThreshold::Custom(v) => S::lit(v),
        }
    }
}

impl std::str::FromStr for CwThreshold {
    type Err = CalibError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "zero" | "0" => Ok(CwThreshold::Zero),
            "one-over-k" | "1/k" => Ok(CwThreshold::OneOverK),
            "prior" | "class-prior" => Ok(CwThreshold::ClassPrior),
            "half" => Ok(CwThreshold::Half),
            other => match other.parse::<f64>() {
                Ok(v) if (0.0..1.0).contains(&v) => Ok(CwThreshold::Custom(v)),
                _ => Err(CalibError::InvalidInput(format!("unknown cw threshold `{other}`"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub scheme: EvalScheme,
    pub n_eval_bins: usize,
    pub cw_thresholds: Vec<CwThreshold>,
    pub top_k: Vec<usize>,
    pub bootstrap: usize,
    pub seed: u64,
    pub tie_break: TieBreak,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            scheme: EvalScheme::EqSize,
            n_eval_bins: 100,
            cw_thresholds: vec![CwThreshold::ClassPrior],
            top_k: vec![1, 5],
            bootstrap: 0,
            seed: 0,
            tie_break: TieBreak::ClassIndex,
        }
    }
}

impl EvalConfig {
    pub fn exact() -> Self {
        Self {
            scheme: EvalScheme::ExactGrouping,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_eval_bins == 0 {
            return Err(CalibError::InvalidInput("n_eval_bins must be at least 1".into()));
        }
        for t in &self.cw_thresholds {
            if let CwThreshold::Custom(v) = t {
                if !(0.0..1.0).contains(v) {
                    return Err(CalibError::InvalidInput(format!("custom threshold {v} outside [0, 1)")));
                }
            }
        }
        Ok(())
    }
}

/// Ranking key comparison: `Less` means class `a` ranks ahead of class `b`.
fn rank_cmp<S: Scalar>(q: &[S], raw: Option<&[S]>, a: usize, b: usize) -> Ordering {
    q[b].partial_cmp(&q[a])
        .unwrap_or(Ordering::Equal)
        .then_with(|| match raw {
            Some(r) => r[b].partial_cmp(&r[a]).unwrap_or(Ordering::Equal),
            None => Ordering::Equal,
        })
        .then(a.cmp(&b))
}

fn raw_rows<'a, S: Scalar>(
    calibrated: &ScoreMatrix<S>,
    tie_break: TieBreak,
    raw: Option<&'a ScoreMatrix<S>>,
) -> Result<Option<&'a ScoreMatrix<S>>> {
    match (tie_break, raw) {
        (TieBreak::ClassIndex, _) => Ok(None),
        (TieBreak::RawLogit, None) => Err(CalibError::InvalidInput(
            "raw-logit tie-break requires the raw scores".into(),
        )),
        (TieBreak::RawLogit, Some(r)) => {
            if r.rows() != calibrated.rows() || r.cols() != calibrated.cols() {
                return Err(CalibError::InvalidInput("raw scores shape differs from calibrated".into()));
            }
            Ok(Some(r))
        }
    }
}

/// Top-1 class of each row under the tie-break order.
pub fn top1_predictions<S: Scalar>(
    calibrated: &ScoreMatrix<S>,
    tie_break: TieBreak,
    raw: Option<&ScoreMatrix<S>>,
) -> Result<Vec<usize>> {
    let raw = raw_rows(calibrated, tie_break, raw)?;
    Ok((0..calibrated.rows())
        .map(|i| {
            let q = calibrated.row(i);
            let r = raw.map(|m| m.row(i));
            (1..q.len()).fold(0, |best, j| if rank_cmp(q, r, j, best) == Ordering::Less { j } else { best })
        })
        .collect())
}

/// Fraction of rows whose label is among the top `k` classes.
pub fn accuracy_topk<S: Scalar>(
    calibrated: &ScoreMatrix<S>,
    labels: &[usize],
    k: usize,
    tie_break: TieBreak,
    raw: Option<&ScoreMatrix<S>>,
) -> Result<f64> {
    if k == 0 || k > calibrated.cols() {
        return Err(CalibError::InvalidInput(format!(
            "top-k needs 1 <= k <= {}, got {k}",
            calibrated.cols()
        )));
    }
    check_labels_len(calibrated, labels)?;
    let raw = raw_rows(calibrated, tie_break, raw)?;
    let hits = labels
        .iter()
        .enumerate()
        .filter(|&(i, &y)| {
            if y >= calibrated.cols() {
                return false;
            }
            let q = calibrated.row(i);
            let r = raw.map(|m| m.row(i));
            let ahead = (0..q.len()).filter(|&j| j != y && rank_cmp(q, r, j, y) == Ordering::Less).count();
            ahead < k
        })
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

fn check_labels_len<S: Scalar>(m: &ScoreMatrix<S>, labels: &[usize]) -> Result<()> {
    if labels.len() != m.rows() || labels.is_empty() {
        return Err(CalibError::InvalidInput(format!(
            "{} labels for {} rows",
            labels.len(),
            m.rows()
        )));
    }
    Ok(())
}

/// `Σ_b (n_b / N)·|acc_b - conf_b|` over the given partition.
pub fn reliability_gap<S: Scalar>(conf: &[S], hit: &[bool], partition: &EvalPartition<S>) -> f64 {
    if conf.is_empty() {
        return 0.0;
    }
    let n = conf.len() as f64;
    match partition {
        EvalPartition::Exact => {
            let mut order: Vec<usize> = (0..conf.len()).collect();
            order.sort_by(|&a, &b| conf[a].partial_cmp(&conf[b]).expect("finite confidences"));
            let mut total = 0.0;
            let mut start = 0;
            while start < order.len() {
                let value = conf[order[start]];
                let mut end = start;
                let mut hits = 0usize;
                while end < order.len() && conf[order[end]] == value {
                    hits += usize::from(hit[order[end]]);
                    end += 1;
                }
                let count = (end - start) as f64;
                total += count / n * (hits as f64 / count - value.as_f64()).abs();
                start = end;
            }
            total
        }
        EvalPartition::Edges(edges) => {
            let m = edges.len() + 1;
            let mut cnt = vec![0usize; m];
            let mut hits = vec![0usize; m];
            let mut sum = vec![0.0_f64; m];
            for (&c, &h) in conf.iter().zip(hit) {
                let b = EvalPartition::bin_of(edges, c);
                cnt[b] += 1;
                hits[b] += usize::from(h);
                sum[b] += c.as_f64();
            }
            (0..m)
                .filter(|&b| cnt[b] > 0)
                .map(|b| {
                    let c = cnt[b] as f64;
                    c / n * (hits[b] as f64 / c - sum[b] / c).abs()
                })
                .sum()
        }
    }
}

/// ECE of binary outputs against 0/1 targets.
pub fn binary_ece<S: Scalar>(outputs: &[S], targets: &[bool], scheme: EvalScheme, n_bins: usize, seed: u64) -> Result<f64> {
    if outputs.len() != targets.len() {
        return Err(CalibError::InvalidInput("outputs and targets differ in length".into()));
    }
    let p = eval_partition(outputs, Some(targets), scheme, n_bins, seed)?;
    Ok(reliability_gap(outputs, targets, &p.partition))
}

/// Top-1 ECE: calibration gap of the winning class's confidence.
pub fn top1_ece<S: Scalar>(
    calibrated: &ScoreMatrix<S>,
    labels: &[usize],
    cfg: &EvalConfig,
    raw: Option<&ScoreMatrix<S>>,
) -> Result<f64> {
    check_labels_len(calibrated, labels)?;
    let top = top1_predictions(calibrated, cfg.tie_break, raw)?;
    let conf: Vec<S> = top.iter().enumerate().map(|(i, &k)| calibrated.get(i, k)).collect();
    let hit: Vec<bool> = top.iter().zip(labels).map(|(k, y)| k == y).collect();
    let p = eval_partition(&conf, Some(&hit), cfg.scheme, cfg.n_eval_bins, cfg.seed)?;
    Ok(reliability_gap(&conf, &hit, &p.partition))
}

/// Class-wise ECE at one threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CwEce {
    pub threshold: String,
    /// Unweighted mean over all K classes.
    pub mean: f64,
    pub per_class: Vec<f64>,
    /// Classes with no prediction above the threshold (contributing 0).
    pub empty_classes: usize,
}

pub fn cw_ece<S: Scalar>(
    calibrated: &ScoreMatrix<S>,
    labels: &[usize],
    cfg: &EvalConfig,
    threshold: CwThreshold,
) -> Result<CwEce> {
    check_labels_len(calibrated, labels)?;
    let k = calibrated.cols();
    // labels outside [0, K) count as "none of the classes"
    let in_range: Vec<usize> = labels.iter().map(|&y| y.min(k)).collect();
    let priors: Vec<S> = class_priors(&in_range, k + 1);
    let mut per_class = Vec::with_capacity(k);
    let mut empty = 0;
    for c in 0..k {
        let thr = threshold.value(k, priors[c]);
        let mut conf = Vec::new();
        let mut hit = Vec::new();
        for (i, &y) in labels.iter().enumerate() {
            let q = calibrated.get(i, c);
            if q > thr {
                conf.push(q);
                hit.push(y == c);
            }
        }
        if conf.is_empty() {
            empty += 1;
            per_class.push(0.0);
            continue;
        }
        let p = eval_partition(&conf, Some(&hit), cfg.scheme, cfg.n_eval_bins, cfg.seed)?;
        per_class.push(reliability_gap(&conf, &hit, &p.partition));
    }
    Ok(CwEce {
        threshold: threshold.name(),
        mean: per_class.iter().sum::<f64>() / k as f64,
        per_class,
        empty_classes: empty,
    })
}

/// Mean negative log-likelihood of the label's (clamped) probability.
pub fn nll<S: Scalar>(calibrated: &ScoreMatrix<S>, labels: &[usize]) -> Result<f64> {
    check_labels_len(calibrated, labels)?;
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        if y >= calibrated.cols() {
            return Err(CalibError::InvalidInput(format!("label {y} outside [0, {})", calibrated.cols())));
        }
        total -= clamp_prob(calibrated.get(i, y)).as_f64().ln();
    }
    Ok(total / labels.len() as f64)
}

/// Multi-class Brier score without renormalizing rows.
pub fn brier<S: Scalar>(calibrated: &ScoreMatrix<S>, labels: &[usize]) -> Result<f64> {
    check_labels_len(calibrated, labels)?;
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            calibrated
                .row(i)
                .iter()
                .enumerate()
                .map(|(k, &q)| {
                    let d = q.as_f64() - f64::from(u8::from(k == y));
                    d * d
                })
                .sum::<f64>()
        })
        .sum();
    Ok(total / labels.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapSummary {
    pub mean: f64,
    pub std: f64,
    /// False when fewer than two resamples were drawn.
    pub std_defined: bool,
    pub samples: Vec<f64>,
}

/// Draws `b` index vectors of length `n`, sampled with replacement.
pub fn resample_indices(n: usize, b: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..b)
        .map(|_| (0..n).map(|_| rng.random_range(0..n)).collect())
        .collect()
}

pub(crate) fn summarize(samples: Vec<f64>) -> BootstrapSummary {
    let b = samples.len();
    let mean = samples.iter().sum::<f64>() / b as f64;
    let (std, std_defined) = if b > 1 {
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (b - 1) as f64;
        (var.sqrt(), true)
    } else {
        (0.0, false)
    };
    BootstrapSummary {
        mean,
        std,
        std_defined,
        samples,
    }
}

/// Evaluate `metric` on `b` resamples (with replacement) of `n` indices.
pub fn bootstrap(n: usize, b: usize, seed: u64, mut metric: impl FnMut(&[usize]) -> f64) -> Result<BootstrapSummary> {
    if b == 0 || n == 0 {
        return Err(CalibError::InvalidInput("bootstrap needs B >= 1 and a nonempty sample".into()));
    }
    let samples = resample_indices(n, b, seed).iter().map(|idx| metric(idx)).collect();
    Ok(summarize(samples))
}

/// Empirical `I(y; m)` in nats from per-bin `[negatives, positives]` counts.
pub fn mi_from_counts(counts: &[[usize; 2]]) -> f64 {
    let n: usize = counts.iter().map(|c| c[0] + c[1]).sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    let py = [0, 1].map(|y| counts.iter().map(|c| c[y]).sum::<usize>() as f64 / n);
    let mut mi = 0.0;
    for c in counts {
        let pm = (c[0] + c[1]) as f64 / n;
        for y in 0..2 {
            let pj = c[y] as f64 / n;
            if pj > 0.0 {
                mi += pj * (pj / (pm * py[y])).ln();
            }
        }
    }
    mi.max(0.0)
}

/// Empirical mutual information between the labels of `set` and the bin index.
pub fn mi_of_quantizer<S: Scalar>(binner: &Binner<S>, set: &BinaryCalibrationSet<S>) -> f64 {
    mi_from_counts(&binner.joint_counts(set))
}

pub fn nats_to_bits(nats: f64) -> f64 {
    nats / std::f64::consts::LN_2
}
