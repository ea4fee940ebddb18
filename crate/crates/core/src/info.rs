//! Kernel density estimates of the class-conditional logit densities and the
//! mutual-information bound `I(y; λ)` they imply.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::binning::Binner;
use crate::data::BinaryCalibrationSet;
use crate::error::{CalibError, Result};
use crate::metrics::mi_of_quantizer;
use crate::scalar::Scalar;

pub const GRID_POINTS: usize = 4096;
/// Grid padding beyond the pooled sample range, in bandwidths.
pub const GRID_PAD: f64 = 5.0;
/// Kernel support used in sums (the Gaussian tail beyond this is < 1e-17).
const KERNEL_CUTOFF: f64 = 9.0;
/// Above this many kernel evaluations, grid densities use linear binning.
const EXACT_WORK_LIMIT: usize = 20_000_000;
/// Slack allowed between an empirical MI and the bound.
pub const MI_SLACK: f64 = 5e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthRule {
    Scott,
    Fixed,
}

/// Gaussian-kernel density estimate of scalar samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Kde1D {
    samples: Vec<f64>,
    bandwidth: f64,
    rule: BandwidthRule,
}

fn gauss(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

impl Kde1D {
    /// Scott's rule: `h = σ̂·n^(-1/5)` with the unbiased standard deviation.
    pub fn fit<S: Scalar>(samples: &[S]) -> Result<Self> {
        let x = Self::prepare(samples)?;
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let h = var.sqrt() * n.powf(-0.2);
        if !(h > 0.0) {
            return Err(CalibError::Degenerate("KDE bandwidth collapsed to zero".into()));
        }
        Ok(Self {
            samples: x,
            bandwidth: h,
            rule: BandwidthRule::Scott,
        })
    }

    pub fn with_bandwidth<S: Scalar>(samples: &[S], h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(CalibError::InvalidInput(format!("bandwidth must be positive, got {h}")));
        }
        Ok(Self {
            samples: Self::prepare(samples)?,
            bandwidth: h,
            rule: BandwidthRule::Fixed,
        })
    }

    fn prepare<S: Scalar>(samples: &[S]) -> Result<Vec<f64>> {
        if samples.len() < 2 {
            return Err(CalibError::InsufficientData {
                needed: 2,
                got: samples.len(),
            });
        }
        let mut x = Vec::with_capacity(samples.len());
        for (i, s) in samples.iter().enumerate() {
            let v = s.as_f64();
            if !v.is_finite() {
                return Err(CalibError::NonFinite { index: i });
            }
            x.push(v);
        }
        x.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        if x[0] == x[x.len() - 1] {
            return Err(CalibError::Degenerate("all KDE samples are identical".into()));
        }
        Ok(x)
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn rule(&self) -> BandwidthRule {
        self.rule
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.samples[0]
    }

    pub fn max(&self) -> f64 {
        self.samples[self.samples.len() - 1]
    }

    /// `(1/nh) Σ K((x - x_i)/h)`.
    pub fn density(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let lo = self.samples.partition_point(|&s| s < x - KERNEL_CUTOFF * h);
        let hi = self.samples.partition_point(|&s| s <= x + KERNEL_CUTOFF * h);
        let sum: f64 = self.samples[lo..hi].iter().map(|&s| gauss((x - s) / h)).sum();
        sum / (self.samples.len() as f64 * h)
    }

    /// Density on a uniform grid. Large problems bin the samples linearly onto
    /// the grid and convolve with the sampled kernel.
    pub fn grid_density(&self, grid: &Grid) -> Vec<f64> {
        let work = self.samples.len().saturating_mul(grid.len());
        let inside = self.min() >= grid.lo && self.max() <= grid.hi;
        if work <= EXACT_WORK_LIMIT || !inside || grid.len() < 2 {
            return grid.points().map(|x| self.density(x)).collect();
        }
        let g = grid.len();
        let dx = grid.step();
        let mut weight = vec![0.0_f64; g];
        for &s in &self.samples {
            let t = (s - grid.lo) / dx;
            let i = (t.floor() as usize).min(g - 2);
            let f = t - i as f64;
            weight[i] += 1.0 - f;
            weight[i + 1] += f;
        }
        let h = self.bandwidth;
        let reach = ((KERNEL_CUTOFF * h / dx).ceil() as usize).min(g - 1);
        let kernel: Vec<f64> = (0..=reach).map(|j| gauss(j as f64 * dx / h)).collect();
        let norm = self.samples.len() as f64 * h;
        (0..g)
            .map(|i| {
                let lo = i.saturating_sub(reach);
                let hi = (i + reach).min(g - 1);
                (lo..=hi).map(|j| weight[j] * kernel[i.abs_diff(j)]).sum::<f64>() / norm
            })
            .collect()
    }
}

/// Uniform quadrature grid `lo, lo + step, ..., hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Grid {
    /// `GRID_POINTS` points over `[min - 5h, max + 5h]` of the pooled samples.
    pub fn covering(kdes: &[&Kde1D]) -> Self {
        let h = kdes.iter().map(|k| k.bandwidth()).fold(0.0, f64::max);
        let lo = kdes.iter().map(|k| k.min()).fold(f64::INFINITY, f64::min);
        let hi = kdes.iter().map(|k| k.max()).fold(f64::NEG_INFINITY, f64::max);
        Self {
            lo: lo - GRID_PAD * h,
            hi: hi + GRID_PAD * h,
            n: GRID_POINTS,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        let dx = self.step();
        (0..self.n).map(move |i| self.lo + i as f64 * dx)
    }
}

pub fn trapezoid(y: &[f64], dx: f64) -> f64 {
    match y.len() {
        0 | 1 => 0.0,
        n => dx * (y.iter().sum::<f64>() - 0.5 * (y[0] + y[n - 1])),
    }
}

/// `Σ_y P(y) ∫ p(λ|y) log(p(λ|y)/p(λ)) dλ` from densities sampled on a grid.
/// Each density is renormalized to unit mass first.
pub fn mi_from_densities(pos: &[f64], neg: &[f64], prior: f64, dx: f64) -> f64 {
    let zp = trapezoid(pos, dx);
    let zn = trapezoid(neg, dx);
    let integrand: Vec<f64> = pos
        .iter()
        .zip(neg)
        .map(|(&a, &b)| {
            let (a, b) = (a / zp, b / zn);
            let mix = prior * a + (1.0 - prior) * b;
            if mix < 1e-300 {
                return 0.0;
            }
            let mut t = 0.0;
            if a > 0.0 {
                t += prior * a * (a / mix).ln();
            }
            if b > 0.0 {
                t += (1.0 - prior) * b * (b / mix).ln();
            }
            t
        })
        .collect();
    trapezoid(&integrand, dx).max(0.0)
}

/// MI upper bound implied by the two class-conditional KDEs.
pub fn mi_upper_bound(kde_pos: &Kde1D, kde_neg: &Kde1D, prior: f64) -> Result<f64> {
    if !(prior > 0.0 && prior < 1.0) {
        return Err(CalibError::InvalidInput(format!("prior must lie in (0, 1), got {prior}")));
    }
    let grid = Grid::covering(&[kde_pos, kde_neg]);
    let pos = kde_pos.grid_density(&grid);
    let neg = kde_neg.grid_density(&grid);
    Ok(mi_from_densities(&pos, &neg, prior, grid.step()))
}

/// Upper bound for a labelled set, splitting the logits by target.
pub fn set_mi_upper_bound<S: Scalar>(set: &BinaryCalibrationSet<S>) -> Result<f64> {
    let (pos, neg): (Vec<(S, bool)>, Vec<(S, bool)>) =
        set.logits().iter().copied().zip(set.targets().iter().copied()).partition(|p| p.1);
    let pos: Vec<S> = pos.into_iter().map(|p| p.0).collect();
    let neg: Vec<S> = neg.into_iter().map(|p| p.0).collect();
    let prior = pos.len() as f64 / set.len() as f64;
    mi_upper_bound(&Kde1D::fit(&pos)?, &Kde1D::fit(&neg)?, prior)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MiRow {
    pub name: String,
    pub n_bins: usize,
    pub mi_nats: f64,
    pub upper_bound_nats: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MiReport {
    pub upper_bound_nats: f64,
    pub rows: Vec<MiRow>,
}

impl MiReport {
    /// Names of binners whose MI exceeds the bound by more than `MI_SLACK`.
    pub fn violations(&self) -> Vec<&str> {
        self.rows
            .iter()
            .filter(|r| r.mi_nats > r.upper_bound_nats + MI_SLACK)
            .map(|r| r.name.as_str())
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,M,MI_nats,upper_bound_nats,ratio\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{},{}", r.name, r.n_bins, r.mi_nats, r.upper_bound_nats, r.ratio);
        }
        out
    }
}

/// Empirical MI of each named binner on `set`, next to the KDE bound.
pub fn mi_report<S: Scalar>(set: &BinaryCalibrationSet<S>, binners: &[(String, &Binner<S>)]) -> Result<MiReport> {
    if set.is_empty() {
        return Err(CalibError::InsufficientData { needed: 1, got: 0 });
    }
    let bound = set_mi_upper_bound(set)?;
    let rows = binners
        .iter()
        .map(|(name, b)| {
            let mi = mi_of_quantizer(b, set);
            MiRow {
                name: name.clone(),
                n_bins: b.n_bins(),
                mi_nats: mi,
                upper_bound_nats: bound,
                ratio: if bound > 0.0 { mi / bound } else { 0.0 },
            }
        })
        .collect();
    Ok(MiReport {
        upper_bound_nats: bound,
        rows,
    })
}
