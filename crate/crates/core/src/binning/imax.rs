//! Mutual-information-maximizing bin optimization.
//!
//! Minimizes the NLL-form surrogate `L({g_m, φ_m})` by alternating the two
//! closed-form stationary-point updates under the (optionally scaled) sigmoid
//! model `P(y=1|λ) ≈ σ(aλ + ab)`:
//!
//! ```text
//! g_m = (1/a)·log{ log[(1+e^{φ_m})/(1+e^{φ_{m-1}})] / log[(1+e^{-φ_{m-1}})/(1+e^{-φ_m})] } - b
//! φ_m = log{ Σ_{S_m} σ(aλ+ab) / Σ_{S_m} σ(-aλ-ab) }
//! ```
//!
//! The φ parameters live in the transformed domain `u = a(λ + b)`; edges are
//! reported in the raw logit domain. Initialization is k-means++ seeding on
//! the logits with the Jensen-Shannon divergence between the Bernoulli
//! distributions `σ(u)` as the distance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::BinaryCalibrationSet;
use crate::error::{CalibError, Result};
use crate::scalar::{binary_entropy, log_sigmoid, sigmoid, softplus, Scalar};

use super::{placeholder_phis, strictly_increasing, BinMethod, Binner};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImaxConfig {
    pub n_bins: usize,
    pub max_iterations: usize,
    /// Early stop once no interior edge moves by more than this.
    pub tolerance: f64,
    pub seed: u64,
    /// Sigmoid-model scale `a`.
    pub scale: f64,
    /// Sigmoid-model bias `b`.
    pub bias: f64,
}

impl Default for ImaxConfig {
    fn default() -> Self {
        Self {
            n_bins: 15,
            max_iterations: 200,
            tolerance: 1e-10,
            seed: 0,
            scale: 1.0,
            bias: 0.0,
        }
    }
}

impl ImaxConfig {
    pub fn with_bins(n_bins: usize) -> Self {
        Self {
            n_bins,
            ..Self::default()
        }
    }

    pub fn seeded(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_bins < 2 {
            return Err(CalibError::InvalidInput(format!("need at least 2 bins, got {}", self.n_bins)));
        }
        if self.max_iterations == 0 {
            return Err(CalibError::InvalidInput("max_iterations must be at least 1".into()));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) || !self.bias.is_finite() {
            return Err(CalibError::InvalidInput(format!(
                "scale must be positive and bias finite, got a={} b={}",
                self.scale, self.bias
            )));
        }
        if !(self.tolerance >= 0.0) {
            return Err(CalibError::InvalidInput("tolerance must be non-negative".into()));
        }
        Ok(())
    }
}

/// Per-iteration record of an I-Max fit.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ImaxTrace {
    /// Sigmoid-model loss at the supplied initial edges, when started from edges.
    pub initial_model_loss: Option<f64>,
    /// Sigmoid-model loss after each edge update (before the φ update).
    pub model_loss_after_edges: Vec<f64>,
    /// Sigmoid-model loss after each (edge, φ) update pair.
    pub model_loss: Vec<f64>,
    /// Hard-label surrogate NLL after each update pair.
    pub surrogate_nll: Vec<f64>,
    /// Largest interior-edge movement (logit domain) per iteration.
    pub max_edge_shift: Vec<f64>,
    /// Number of φ updates skipped because the bin was empty.
    pub empty_bin_updates: usize,
    pub converged: bool,
    /// The training set holds only one label value.
    pub single_label: bool,
}

impl ImaxTrace {
    pub fn iterations(&self) -> usize {
        self.model_loss.len()
    }
}

/// `log[(1 + e^hi) / (1 + e^lo)]` for `hi > lo`, returned in log space.
fn ln_log_ratio_1pexp<S: Scalar>(hi: S, lo: S) -> S {
    // (1+e^hi)/(1+e^lo) = 1 + e^t with t = log(1 - e^{lo-hi}) + hi - softplus(lo)
    let t = (-(lo - hi).exp_m1()).ln() + hi - softplus(lo);
    if t < S::lit(-30.0) {
        t + (-(t.exp()) / S::lit(2.0)).ln_1p()
    } else {
        softplus(t).ln()
    }
}

/// Edge between consecutive φ values in the transformed domain.
#[inline]
fn edge_between<S: Scalar>(lo: S, hi: S) -> S {
    ln_log_ratio_1pexp(hi, lo) - ln_log_ratio_1pexp(-lo, -hi)
}

fn edges_from_phis_u<S: Scalar>(phis: &[S]) -> Vec<S> {
    phis.windows(2).map(|w| edge_between(w[0], w[1])).collect()
}

/// Closed-form edge update from strictly increasing `phis`.
pub fn imax_update_edges<S: Scalar>(phis: &[S], scale: S, bias: S) -> Result<Vec<S>> {
    if !(scale > S::zero()) {
        return Err(CalibError::InvalidInput("scale must be positive".into()));
    }
    if phis.iter().any(|p| !p.is_finite()) || !strictly_increasing(phis) {
        return Err(CalibError::InvalidInput("phis must be finite and strictly increasing".into()));
    }
    Ok(edges_from_phis_u(phis).into_iter().map(|e| e / scale - bias).collect())
}

/// `log Σ σ(x)` over `xs` via log-sum-exp of `log σ`.
fn log_sum_sigmoid<S: Scalar>(xs: impl Iterator<Item = S> + Clone) -> S {
    let max = xs.clone().map(log_sigmoid).fold(S::neg_infinity(), S::max);
    let total: S = xs.map(|x| (log_sigmoid(x) - max).exp()).sum();
    max + total.ln()
}

/// Closed-form φ update for the bins induced by `edges` (logit domain).
///
/// Empty bins keep the corresponding entry of `prev_phis`; the second value
/// returned is the number of such bins.
pub fn imax_update_phis<S: Scalar>(
    set: &BinaryCalibrationSet<S>,
    edges: &[S],
    prev_phis: &[S],
    scale: S,
    bias: S,
) -> Result<(Vec<S>, usize)> {
    if !strictly_increasing(edges) {
        return Err(CalibError::InvalidInput("bin edges must be strictly increasing".into()));
    }
    if prev_phis.len() != edges.len() + 1 {
        return Err(CalibError::InvalidInput("prev_phis must have one entry per bin".into()));
    }
    let mut members: Vec<Vec<S>> = vec![Vec::new(); edges.len() + 1];
    for &lam in set.logits() {
        members[edges.partition_point(|&g| g <= lam)].push(scale * (lam + bias));
    }
    let mut empty = 0;
    let phis = members
        .iter()
        .zip(prev_phis)
        .map(|(us, &prev)| {
            if us.is_empty() {
                empty += 1;
                prev
            } else {
                log_sum_sigmoid(us.iter().copied()) - log_sum_sigmoid(us.iter().map(|&u| -u))
            }
        })
        .collect();
    Ok((phis, empty))
}

/// Hard-label surrogate `(1/N) Σ -log σ[(2y-1) φ_{m(λ)}]`.
pub fn surrogate_loss<S: Scalar>(set: &BinaryCalibrationSet<S>, edges: &[S], phis: &[S]) -> S {
    let total: S = set
        .logits()
        .iter()
        .zip(set.targets())
        .map(|(&lam, &y)| {
            let phi = phis[edges.partition_point(|&g| g <= lam)];
            -log_sigmoid(if y { phi } else { -phi })
        })
        .sum();
    total / S::from_usize_lossy(set.len())
}

/// Surrogate loss with the labels replaced by the sigmoid-model posterior
/// `σ(aλ + ab)`; this is the quantity the alternating updates minimize.
pub fn sigmoid_model_loss<S: Scalar>(set: &BinaryCalibrationSet<S>, edges: &[S], phis: &[S], scale: S, bias: S) -> S {
    let total: S = set
        .logits()
        .iter()
        .map(|&lam| {
            let phi = phis[edges.partition_point(|&g| g <= lam)];
            let u = scale * (lam + bias);
            -sigmoid(u) * log_sigmoid(phi) - sigmoid(-u) * log_sigmoid(-phi)
        })
        .sum();
    total / S::from_usize_lossy(set.len())
}

/// Sorted transformed logits with prefix sums for O(M) per-bin statistics.
struct Workspace<S> {
    u: Vec<S>,
    // Σ_{j<i} σ(u_j), accumulated from the small-valued end
    pos_prefix: Vec<f64>,
    // Σ_{j≥i} σ(-u_j), accumulated from the small-valued end
    neg_suffix: Vec<f64>,
    target_prefix: Vec<usize>,
}

impl<S: Scalar> Workspace<S> {
    fn new(set: &BinaryCalibrationSet<S>, scale: S, bias: S) -> Self {
        let mut pairs: Vec<(S, bool)> = set
            .logits()
            .iter()
            .zip(set.targets())
            .map(|(&l, &y)| (scale * (l + bias), y))
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite logits"));
        let n = pairs.len();
        let mut pos_prefix = vec![0.0; n + 1];
        let mut target_prefix = vec![0; n + 1];
        for (i, &(u, y)) in pairs.iter().enumerate() {
            pos_prefix[i + 1] = pos_prefix[i] + sigmoid(u).as_f64();
            target_prefix[i + 1] = target_prefix[i] + usize::from(y);
        }
        let mut neg_suffix = vec![0.0; n + 1];
        for i in (0..n).rev() {
            neg_suffix[i] = neg_suffix[i + 1] + sigmoid(-pairs[i].0).as_f64();
        }
        Self {
            u: pairs.into_iter().map(|p| p.0).collect(),
            pos_prefix,
            neg_suffix,
            target_prefix,
        }
    }

    fn len(&self) -> usize {
        self.u.len()
    }

    /// Sample index boundaries `[0, b_1, ..., b_{M-1}, N]` for transformed edges.
    fn bounds(&self, edges_u: &[S]) -> Vec<usize> {
        let mut b = Vec::with_capacity(edges_u.len() + 2);
        b.push(0);
        b.extend(edges_u.iter().map(|&e| self.u.partition_point(|&x| x < e)));
        b.push(self.len());
        b
    }

    fn soft_mass(&self, lo: usize, hi: usize) -> (f64, f64) {
        (
            self.pos_prefix[hi] - self.pos_prefix[lo],
            self.neg_suffix[lo] - self.neg_suffix[hi],
        )
    }

    fn update_phis(&self, bounds: &[usize], phis: &mut [S]) -> usize {
        let mut empty = 0;
        for (m, w) in bounds.windows(2).enumerate() {
            let (lo, hi) = (w[0], w[1]);
            if lo == hi {
                empty += 1;
                continue;
            }
            let (pos, neg) = self.soft_mass(lo, hi);
            phis[m] = if pos > 1e-200 && neg > 1e-200 {
                S::lit(pos.ln() - neg.ln())
            } else {
                let us = self.u[lo..hi].iter().copied();
                log_sum_sigmoid(us.clone()) - log_sum_sigmoid(us.map(|u| -u))
            };
        }
        empty
    }

    fn model_loss(&self, bounds: &[usize], phis: &[S]) -> f64 {
        let total: f64 = bounds
            .windows(2)
            .zip(phis)
            .filter(|(w, _)| w[0] < w[1])
            .map(|(w, &phi)| {
                let (pos, neg) = self.soft_mass(w[0], w[1]);
                -pos * log_sigmoid(phi).as_f64() - neg * log_sigmoid(-phi).as_f64()
            })
            .sum();
        total / self.len() as f64
    }

    fn hard_loss(&self, bounds: &[usize], phis: &[S]) -> f64 {
        let total: f64 = bounds
            .windows(2)
            .zip(phis)
            .map(|(w, &phi)| {
                let pos = (self.target_prefix[w[1]] - self.target_prefix[w[0]]) as f64;
                let neg = (w[1] - w[0]) as f64 - pos;
                -pos * log_sigmoid(phi).as_f64() - neg * log_sigmoid(-phi).as_f64()
            })
            .sum();
        total / self.len() as f64
    }

    /// k-means++ seeding (greedy variant with `2 + ln M` local trials) using
    /// the Bernoulli JSD as distance. Returns sorted centers in the `u` domain.
    fn seed_centers(&self, n_centers: usize, seed: u64) -> Result<Vec<S>> {
        let n = self.len();
        let p: Vec<f64> = self.u.iter().map(|&u| sigmoid(u).as_f64()).collect();
        let h: Vec<f64> = p.iter().map(|&x| binary_entropy(x)).collect();
        let jsd = |i: usize, c: usize| -> f64 {
            (binary_entropy(0.5 * (p[i] + p[c])) - 0.5 * (h[i] + h[c])).max(0.0)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trials = 2 + (n_centers as f64).ln().floor() as usize;

        let first = rng.random_range(0..n);
        let mut centers = vec![first];
        let mut closest: Vec<f64> = (0..n).map(|i| jsd(i, first)).collect();
        let mut cumulative = vec![0.0; n];
        let mut scratch = vec![0.0; n];
        let mut best_dist = vec![0.0; n];

        while centers.len() < n_centers {
            let mut acc = 0.0;
            for (c, &d) in cumulative.iter_mut().zip(&closest) {
                acc += d;
                *c = acc;
            }
            if !(acc > 0.0) {
                return Err(CalibError::Degenerate(format!(
                    "only {} distinguishable logit values, need {n_centers}",
                    centers.len()
                )));
            }
            let mut best: Option<(usize, f64)> = None;
            for _ in 0..trials {
                let r = rng.random::<f64>() * acc;
                let cand = cumulative.partition_point(|&c| c <= r).min(n - 1);
                if closest[cand] <= 0.0 {
                    continue;
                }
                let mut pot = 0.0;
                for (i, s) in scratch.iter_mut().enumerate() {
                    *s = closest[i].min(jsd(i, cand));
                    pot += *s;
                }
                if best.is_none_or(|(_, bp)| pot < bp) {
                    best = Some((cand, pot));
                    std::mem::swap(&mut best_dist, &mut scratch);
                }
            }
            let (cand, _) = best.ok_or_else(|| CalibError::Degenerate("k-means++ seeding found no new center".into()))?;
            centers.push(cand);
            std::mem::swap(&mut closest, &mut best_dist);
        }
        let mut out: Vec<S> = centers.into_iter().map(|i| self.u[i]).collect();
        out.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        if !strictly_increasing(&out) {
            return Err(CalibError::Degenerate("k-means++ seeding produced duplicate centers".into()));
        }
        Ok(out)
    }
}

fn check_fit_input<S: Scalar>(set: &BinaryCalibrationSet<S>, cfg: &ImaxConfig) -> Result<()> {
    cfg.validate()?;
    if set.len() < cfg.n_bins {
        return Err(CalibError::InsufficientData {
            needed: cfg.n_bins,
            got: set.len(),
        });
    }
    let first = set.logits()[0];
    if set.logits().iter().all(|&l| l == first) {
        return Err(CalibError::Degenerate("all logits are identical".into()));
    }
    Ok(())
}

fn run<S: Scalar>(
    ws: &Workspace<S>,
    cfg: &ImaxConfig,
    mut phis: Vec<S>,
    mut prev_edges: Option<Vec<S>>,
    trace: &mut ImaxTrace,
) -> Result<(Vec<S>, Vec<S>)> {
    let scale = S::lit(cfg.scale);
    let mut edges_u = Vec::new();
    for _ in 0..cfg.max_iterations {
        let new_edges = edges_from_phis_u(&phis);
        if new_edges.iter().any(|e| !e.is_finite()) || !strictly_increasing(&new_edges) {
            return Err(CalibError::FitFailure("edge update produced non-increasing edges".into()));
        }
        let shift = match &prev_edges {
            Some(old) => old
                .iter()
                .zip(&new_edges)
                .map(|(&o, &e)| ((e - o) / scale).abs().as_f64())
                .fold(0.0, f64::max),
            None => f64::INFINITY,
        };
        let bounds = ws.bounds(&new_edges);
        trace.model_loss_after_edges.push(ws.model_loss(&bounds, &phis));
        trace.empty_bin_updates += ws.update_phis(&bounds, &mut phis);
        if !strictly_increasing(&phis) {
            return Err(CalibError::FitFailure("phi update broke monotonicity".into()));
        }
        trace.model_loss.push(ws.model_loss(&bounds, &phis));
        trace.surrogate_nll.push(ws.hard_loss(&bounds, &phis));
        trace.max_edge_shift.push(shift);
        edges_u = new_edges.clone();
        prev_edges = Some(new_edges);
        if shift < cfg.tolerance {
            trace.converged = true;
            break;
        }
    }
    Ok((phis, edges_u))
}

fn finish<S: Scalar>(cfg: &ImaxConfig, (phis, edges_u): (Vec<S>, Vec<S>), trace: &ImaxTrace) -> Result<Binner<S>> {
    let (scale, bias) = (S::lit(cfg.scale), S::lit(cfg.bias));
    let edges: Vec<S> = edges_u.into_iter().map(|e| e / scale - bias).collect();
    if !strictly_increasing(&edges) {
        return Err(CalibError::FitFailure("fitted edges are not strictly increasing".into()));
    }
    Ok(Binner::new(BinMethod::Imax, edges, phis)?.with_fit_meta(Some(cfg.seed), trace.iterations()))
}

/// Fit I-Max edges and φ from k-means++/JSD seeding, returning the trace.
pub fn fit_imax_traced<S: Scalar>(set: &BinaryCalibrationSet<S>, cfg: &ImaxConfig) -> Result<(Binner<S>, ImaxTrace)> {
    check_fit_input(set, cfg)?;
    let ws = Workspace::new(set, S::lit(cfg.scale), S::lit(cfg.bias));
    let mut trace = ImaxTrace {
        single_label: !set.has_both_labels(),
        ..ImaxTrace::default()
    };
    let phis = ws.seed_centers(cfg.n_bins, cfg.seed)?;
    let fitted = run(&ws, cfg, phis, None, &mut trace)?;
    let binner = finish(cfg, fitted, &trace)?;
    Ok((binner, trace))
}

/// Fit I-Max edges and φ; representatives are left unset.
pub fn fit_imax<S: Scalar>(set: &BinaryCalibrationSet<S>, cfg: &ImaxConfig) -> Result<Binner<S>> {
    fit_imax_traced(set, cfg).map(|(b, _)| b)
}

/// Run the alternating updates starting from given logit-domain edges
/// (e.g. equal-size or equal-mass) instead of k-means++ seeding.
pub fn fit_imax_from_edges<S: Scalar>(
    set: &BinaryCalibrationSet<S>,
    cfg: &ImaxConfig,
    init_edges: &[S],
) -> Result<(Binner<S>, ImaxTrace)> {
    check_fit_input(set, cfg)?;
    if init_edges.len() + 1 != cfg.n_bins || !strictly_increasing(init_edges) {
        return Err(CalibError::InvalidInput(format!(
            "need {} strictly increasing initial edges",
            cfg.n_bins - 1
        )));
    }
    let (scale, bias) = (S::lit(cfg.scale), S::lit(cfg.bias));
    let ws = Workspace::new(set, scale, bias);
    let edges_u: Vec<S> = init_edges.iter().map(|&g| scale * (g + bias)).collect();
    let mut phis = placeholder_phis(&edges_u);
    let bounds = ws.bounds(&edges_u);
    let mut trace = ImaxTrace {
        single_label: !set.has_both_labels(),
        ..ImaxTrace::default()
    };
    trace.empty_bin_updates += ws.update_phis(&bounds, &mut phis);
    if !strictly_increasing(&phis) {
        return Err(CalibError::FitFailure("initial phis are not strictly increasing".into()));
    }
    trace.initial_model_loss = Some(ws.model_loss(&bounds, &phis));
    let fitted = run(&ws, cfg, phis, Some(edges_u), &mut trace)?;
    let binner = finish(cfg, fitted, &trace)?;
    Ok((binner, trace))
}
