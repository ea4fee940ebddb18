//! Histogram binning calibrators over OvR logits.
//!
//! A [`Binner`] partitions the real line into `M` half-open intervals
//! `[g_m, g_{m+1})` (with `g_0 = -inf`, `g_M = +inf`) and emits one probability
//! representative per interval. Edges come from one of the fitting routines in
//! [`baseline`] or [`imax`]; representatives are set afterwards.

pub mod baseline;
pub mod imax;

use serde::{Deserialize, Serialize};

use crate::data::BinaryCalibrationSet;
use crate::error::{CalibError, Result};
use crate::scalar::{clamp_prob, sigmoid, Scalar};
use crate::scaling::Scaler;

pub use baseline::{eq_mass_edges, eq_size_edges, fit_eq_mass, fit_eq_size};
pub use imax::{
    fit_imax, fit_imax_from_edges, fit_imax_traced, imax_update_edges, imax_update_phis, sigmoid_model_loss,
    surrogate_loss, ImaxConfig, ImaxTrace,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinMethod {
    EqSize,
    EqMass,
    Imax,
    Custom,
}

/// How bin representatives are derived from the samples falling in each bin.
#[derive(Debug, Clone, Copy)]
pub enum RepStrategy<'a, S> {
    /// Positive fraction of the bin.
    EmpiricalFreq,
    /// Mean of `σ(λ)` over the bin.
    RawProbMean,
    /// Mean of `σ(scaler(λ))` over the bin.
    ScaledProbMean(&'a Scaler<S>),
    /// Mean of externally supplied per-sample probabilities, aligned with the set.
    SampleProbMean(&'a [S]),
}

/// Fitted histogram binning calibrator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BinnerRepr<S>", into = "BinnerRepr<S>", bound = "S: Scalar")]
pub struct Binner<S> {
    method: BinMethod,
    edges: Vec<S>,
    phis: Vec<S>,
    reps: Vec<S>,
    seed: Option<u64>,
    iterations: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "S: Scalar")]
struct BinnerRepr<S> {
    method: BinMethod,
    edges: Vec<S>,
    phis: Vec<S>,
    reps: Vec<S>,
    seed: Option<u64>,
    iterations: usize,
}

impl<S: Scalar> TryFrom<BinnerRepr<S>> for Binner<S> {
    type Error = CalibError;

    fn try_from(r: BinnerRepr<S>) -> Result<Self> {
        let mut b = Binner::new(r.method, r.edges, r.phis)?;
        if !r.reps.is_empty() {
            b.set_reps(r.reps)?;
        }
        b.seed = r.seed;
        b.iterations = r.iterations;
        Ok(b)
    }
}

impl<S: Scalar> From<Binner<S>> for BinnerRepr<S> {
    fn from(b: Binner<S>) -> Self {
        Self {
            method: b.method,
            edges: b.edges,
            phis: b.phis,
            reps: b.reps,
            seed: b.seed,
            iterations: b.iterations,
        }
    }
}

pub(crate) fn strictly_increasing<S: Scalar>(v: &[S]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

impl<S: Scalar> Binner<S> {
    /// Binner with `edges.len() + 1` bins and no representatives yet.
    pub fn new(method: BinMethod, edges: Vec<S>, phis: Vec<S>) -> Result<Self> {
        if let Some(i) = edges.iter().position(|g| !g.is_finite()) {
            return Err(CalibError::NonFinite { index: i });
        }
        if !strictly_increasing(&edges) {
            return Err(CalibError::InvalidInput("bin edges must be strictly increasing".into()));
        }
        if phis.len() != edges.len() + 1 {
            return Err(CalibError::InvalidInput(format!(
                "{} bins need {} phis, got {}",
                edges.len() + 1,
                edges.len() + 1,
                phis.len()
            )));
        }
        if !strictly_increasing(&phis) || phis.iter().any(|p| !p.is_finite()) {
            return Err(CalibError::InvalidInput("phis must be finite and strictly increasing".into()));
        }
        Ok(Self {
            method,
            edges,
            phis,
            reps: Vec::new(),
            seed: None,
            iterations: 0,
        })
    }

    /// Bins from given edges with phis estimated from `set` (empty bins get
    /// a placeholder inside their interval).
    pub fn from_edges(method: BinMethod, edges: Vec<S>, set: &BinaryCalibrationSet<S>) -> Result<Self> {
        let placeholder = placeholder_phis(&edges);
        let (phis, _) = imax_update_phis(set, &edges, &placeholder, S::one(), S::zero())?;
        Self::new(method, edges, phis)
    }

    pub(crate) fn with_fit_meta(mut self, seed: Option<u64>, iterations: usize) -> Self {
        self.seed = seed;
        self.iterations = iterations;
        self
    }

    pub fn method(&self) -> BinMethod {
        self.method
    }

    pub fn n_bins(&self) -> usize {
        self.edges.len() + 1
    }

    pub fn edges(&self) -> &[S] {
        &self.edges
    }

    pub fn phis(&self) -> &[S] {
        &self.phis
    }

    pub fn reps(&self) -> Option<&[S]> {
        (!self.reps.is_empty()).then_some(self.reps.as_slice())
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Index of the bin containing `lambda`; values on an edge go right.
    #[inline]
    pub fn quantize(&self, lambda: S) -> usize {
        self.edges.partition_point(|&g| g <= lambda)
    }

    /// Install representatives directly, clamping into the probability range.
    pub fn set_reps(&mut self, reps: Vec<S>) -> Result<()> {
        if reps.len() != self.n_bins() {
            return Err(CalibError::InvalidInput(format!(
                "{} representatives for {} bins",
                reps.len(),
                self.n_bins()
            )));
        }
        if reps.iter().any(|r| !(*r >= S::zero() && *r <= S::one())) {
            return Err(CalibError::InvalidInput("representatives must lie in [0, 1]".into()));
        }
        self.reps = reps.into_iter().map(clamp_prob).collect();
        Ok(())
    }

    /// Set representatives from the samples of `set` under `strategy`.
    pub fn set_representatives(&mut self, set: &BinaryCalibrationSet<S>, strategy: RepStrategy<'_, S>) -> Result<()> {
        if let RepStrategy::SampleProbMean(p) = strategy {
            if p.len() != set.len() {
                return Err(CalibError::InvalidInput(format!(
                    "{} sample probabilities for a set of {}",
                    p.len(),
                    set.len()
                )));
            }
        }
        let m = self.n_bins();
        let mut num = vec![0.0_f64; m];
        let mut cnt = vec![0usize; m];
        for (i, (&lam, &y)) in set.logits().iter().zip(set.targets()).enumerate() {
            let b = self.quantize(lam);
            cnt[b] += 1;
            num[b] += match strategy {
                RepStrategy::EmpiricalFreq => f64::from(u8::from(y)),
                RepStrategy::RawProbMean => sigmoid(lam).as_f64(),
                RepStrategy::ScaledProbMean(s) => sigmoid(s.apply(lam)).as_f64(),
                RepStrategy::SampleProbMean(p) => p[i].as_f64(),
            };
        }
        let reps = (0..m)
            .map(|b| {
                if cnt[b] > 0 {
                    S::lit(num[b] / cnt[b] as f64)
                } else {
                    self.empty_bin_rep(b)
                }
            })
            .collect();
        self.set_reps(reps)
    }

    fn empty_bin_rep(&self, b: usize) -> S {
        let m = self.n_bins();
        if b == 0 || b + 1 == m {
            sigmoid(self.phis[b])
        } else {
            sigmoid((self.edges[b - 1] + self.edges[b]) / S::lit(2.0))
        }
    }

    /// Calibrated probability for one logit.
    pub fn apply(&self, lambda: S) -> Result<S> {
        if self.reps.is_empty() {
            return Err(CalibError::InvalidInput("binner has no representatives".into()));
        }
        Ok(self.reps[self.quantize(lambda)])
    }

    pub fn apply_many(&self, lambdas: &[S]) -> Result<Vec<S>> {
        if self.reps.is_empty() {
            return Err(CalibError::InvalidInput("binner has no representatives".into()));
        }
        Ok(lambdas.iter().map(|&l| self.reps[self.quantize(l)]).collect())
    }

    /// Per-bin `[negatives, positives]` counts of `set`.
    pub fn joint_counts(&self, set: &BinaryCalibrationSet<S>) -> Vec<[usize; 2]> {
        let mut counts = vec![[0usize; 2]; self.n_bins()];
        for (&lam, &y) in set.logits().iter().zip(set.targets()) {
            counts[self.quantize(lam)][usize::from(y)] += 1;
        }
        counts
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("binner serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| CalibError::InvalidInput(format!("binner json: {e}")))
    }
}

/// Degenerate single-bin calibrator emitting `p` everywhere.
pub fn constant_binner<S: Scalar>(p: S) -> Result<Binner<S>> {
    let mut b = Binner::new(BinMethod::Custom, Vec::new(), vec![crate::data::logit_of_prob(p)])?;
    b.set_reps(vec![p])?;
    Ok(b)
}

/// Strictly increasing phis lying inside each interval of `edges`.
pub(crate) fn placeholder_phis<S: Scalar>(edges: &[S]) -> Vec<S> {
    let two = S::lit(2.0);
    match edges.len() {
        0 => vec![S::zero()],
        1 => vec![edges[0] - S::one(), edges[0] + S::one()],
        n => {
            let first_gap = edges[1] - edges[0];
            let last_gap = edges[n - 1] - edges[n - 2];
            let mut phis = Vec::with_capacity(n + 1);
            phis.push(edges[0] - first_gap / two);
            phis.extend(edges.windows(2).map(|w| (w[0] + w[1]) / two));
            phis.push(edges[n - 1] + last_gap / two);
            phis
        }
    }
}
