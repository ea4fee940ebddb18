//! Evaluation-bin partitions of confidence values in `[0, 1]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::binning::baseline::{quantile_sorted, sorted_copy};
use crate::binning::{fit_imax, ImaxConfig};
use crate::data::{logit_of_prob, prob_of_logit, BinaryCalibrationSet};
use crate::error::{CalibError, Result};
use crate::scalar::Scalar;

/// How confidences are grouped before comparing accuracy to confidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalScheme {
    /// Uniform bins on `[0, 1]`.
    EqSize,
    /// Empirical quantile bins.
    EqMass,
    /// 1-D k-means on the confidences.
    Kmeans,
    /// I-Max bins fitted on the confidence logits.
    ImaxEval,
    /// One group per distinct confidence value (for discrete calibrators).
    ExactGrouping,
}

impl EvalScheme {
    pub fn name(self) -> &'static str {
        match self {
            EvalScheme::EqSize => "eq_size",
            EvalScheme::EqMass => "eq_mass",
            EvalScheme::Kmeans => "kmeans",
            EvalScheme::ImaxEval => "imax_eval",
            EvalScheme::ExactGrouping => "exact_grouping",
        }
    }
}

impl std::str::FromStr for EvalScheme {
    type Err = CalibError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "eq_size" | "dece" => Ok(EvalScheme::EqSize),
            "eq_mass" | "mece" => Ok(EvalScheme::EqMass),
            "kmeans" | "kece" => Ok(EvalScheme::Kmeans),
            "imax_eval" | "imax" | "iece" => Ok(EvalScheme::ImaxEval),
            "exact_grouping" | "exact" => Ok(EvalScheme::ExactGrouping),
            other => Err(CalibError::InvalidInput(format!("unknown evaluation scheme `{other}`"))),
        }
    }
}

/// Evaluation partition: sorted interior edges (bins are `[e_i, e_{i+1})`)
/// or grouping by exact value.
#[derive(Debug, Clone, PartialEq)]
pub enum EvalPartition<S> {
    Edges(Vec<S>),
    Exact,
}

impl<S: Scalar> EvalPartition<S> {
    #[inline]
    pub fn bin_of(edges: &[S], v: S) -> usize {
        edges.partition_point(|&e| e <= v)
    }
}

/// Partition plus the number of edges dropped because they coincided.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionResult<S> {
    pub partition: EvalPartition<S>,
    pub collapsed_edges: usize,
}

fn dedup_edges<S: Scalar>(mut edges: Vec<S>) -> (Vec<S>, usize) {
    let before = edges.len();
    edges.dedup();
    let collapsed = before - edges.len();
    (edges, collapsed)
}

/// Build the evaluation partition for `values` under `scheme`.
pub fn eval_bin_edges<S: Scalar>(values: &[S], scheme: EvalScheme, n_bins: usize, seed: u64) -> Result<PartitionResult<S>> {
    eval_partition(values, None, scheme, n_bins, seed)
}

/// Like [`eval_bin_edges`], passing the correctness indicators to the
/// `imax_eval` fit. Edges only depend on the confidences either way.
pub fn eval_partition<S: Scalar>(
    values: &[S],
    hits: Option<&[bool]>,
    scheme: EvalScheme,
    n_bins: usize,
    seed: u64,
) -> Result<PartitionResult<S>> {
    if values.is_empty() {
        return Err(CalibError::InsufficientData { needed: 1, got: 0 });
    }
    if n_bins == 0 {
        return Err(CalibError::InvalidInput("n_eval_bins must be at least 1".into()));
    }
    let (edges, collapsed) = match scheme {
        EvalScheme::ExactGrouping => {
            return Ok(PartitionResult {
                partition: EvalPartition::Exact,
                collapsed_edges: 0,
            })
        }
        EvalScheme::EqSize => {
            let n = S::from_usize_lossy(n_bins);
            ((1..n_bins).map(|i| S::from_usize_lossy(i) / n).collect(), 0)
        }
        EvalScheme::EqMass => {
            let sorted = sorted_copy(values);
            dedup_edges(
                (1..n_bins)
                    .map(|i| quantile_sorted(&sorted, i as f64 / n_bins as f64))
                    .collect(),
            )
        }
        EvalScheme::Kmeans => {
            let centers = kmeans_1d(values, n_bins, seed, 100, 1e-10);
            dedup_edges(
                centers
                    .windows(2)
                    .map(|w| (w[0] + w[1]) / S::lit(2.0))
                    .collect(),
            )
        }
        EvalScheme::ImaxEval => {
            if n_bins < 2 {
                (Vec::new(), 0)
            } else {
                let logits: Vec<S> = values.iter().map(|&v| logit_of_prob(v)).collect();
                let targets = match hits {
                    Some(h) => h.to_vec(),
                    None => vec![false; values.len()],
                };
                let set = BinaryCalibrationSet::from_pairs(logits, targets)?;
                let cfg = ImaxConfig {
                    n_bins,
                    seed,
                    ..ImaxConfig::default()
                };
                let binner = fit_imax(&set, &cfg)?;
                dedup_edges(binner.edges().iter().map(|&g| prob_of_logit(g)).collect())
            }
        }
    };
    Ok(PartitionResult {
        partition: EvalPartition::Edges(edges),
        collapsed_edges: collapsed,
    })
}

/// Lloyd's algorithm on scalar values with k-means++ seeding; returns sorted
/// distinct centers (fewer than `k` when there are fewer distinct values).
pub fn kmeans_1d<S: Scalar>(values: &[S], k: usize, seed: u64, max_iter: usize, tol: f64) -> Vec<S> {
    let x: Vec<f64> = values.iter().map(|v| v.as_f64()).collect();
    let n = x.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = vec![x[rng.random_range(0..n)]];
    let mut d2: Vec<f64> = x.iter().map(|&v| (v - centers[0]).powi(2)).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        if !(total > 0.0) {
            break;
        }
        let r = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = n - 1;
        for (i, &d) in d2.iter().enumerate() {
            acc += d;
            if acc > r && d > 0.0 {
                pick = i;
                break;
            }
        }
        if d2[pick] <= 0.0 {
            break;
        }
        let c = x[pick];
        centers.push(c);
        for (d, &v) in d2.iter_mut().zip(&x) {
            *d = d.min((v - c).powi(2));
        }
    }
    centers.sort_by(|a, b| a.partial_cmp(b).expect("finite"));

    let mut sorted = x.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + sorted[i];
    }
    for _ in 0..max_iter {
        // with sorted centers, clusters are contiguous runs split at midpoints
        let mut bounds = vec![0usize];
        for w in centers.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            bounds.push(sorted.partition_point(|&v| v < mid));
        }
        bounds.push(n);
        let mut moved = 0.0_f64;
        for (c, w) in centers.iter_mut().zip(bounds.windows(2)) {
            if w[1] > w[0] {
                let mean = (prefix[w[1]] - prefix[w[0]]) / (w[1] - w[0]) as f64;
                moved = moved.max((mean - *c).abs());
                *c = mean;
            }
        }
        centers.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        if moved < tol {
            break;
        }
    }
    centers.dedup();
    centers.into_iter().map(S::lit).collect()
}
