//! Synthetic data with known posteriors.
//!
//! Every generator draws from a single `ChaCha8Rng` seed. Stream 0 samples
//! labels, stream `c + 1` samples class `c`'s scores, so per-class draws do not
//! shift when another class's sample count changes.

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{BinaryCalibrationSet, PredictionMatrix, ScoreKind, ScoreMatrix};
use crate::error::{CalibError, Result};
use crate::info::mi_from_densities;
use crate::scalar::{sigmoid, Scalar};

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Two-component Gaussian mixture of logits, `λ | y ~ N(μ_y, σ_y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryMixtureSpec {
    pub prior: f64,
    pub mu_pos: f64,
    pub sd_pos: f64,
    pub mu_neg: f64,
    pub sd_neg: f64,
    pub n: usize,
    pub seed: u64,
}

impl BinaryMixtureSpec {
    /// `μ₁ = -μ₀ = c`, unit variances, balanced labels: posterior `σ(2cλ)`.
    pub fn symmetric(c: f64, n: usize, seed: u64) -> Self {
        Self {
            prior: 0.5,
            mu_pos: c,
            sd_pos: 1.0,
            mu_neg: -c,
            sd_neg: 1.0,
            n,
            seed,
        }
    }

    /// 1:99 class ratio with well separated, equally wide conditionals.
    pub fn fig2_imbalanced(n: usize, seed: u64) -> Self {
        Self {
            prior: 0.01,
            mu_pos: 2.0,
            sd_pos: 2.0,
            mu_neg: -6.0,
            sd_neg: 2.0,
            n,
            seed,
        }
    }

    /// Equal-variance mixture whose posterior is exactly `σ(λ)`:
    /// `μ_y = ln(π/(1-π)) ± σ²/2`.
    pub fn calibrated(prior: f64, sd: f64, n: usize, seed: u64) -> Self {
        let mid = prior.ln() - (-prior).ln_1p();
        Self {
            prior,
            mu_pos: mid + 0.5 * sd * sd,
            sd_pos: sd,
            mu_neg: mid - 0.5 * sd * sd,
            sd_neg: sd,
            n,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.prior > 0.0 && self.prior < 1.0) {
            return Err(CalibError::InvalidInput(format!("prior must lie in (0, 1), got {}", self.prior)));
        }
        if !(self.sd_pos > 0.0 && self.sd_neg > 0.0) || !self.mu_pos.is_finite() || !self.mu_neg.is_finite() {
            return Err(CalibError::InvalidInput("mixture needs finite means and positive std devs".into()));
        }
        if self.n == 0 {
            return Err(CalibError::InvalidInput("sample count must be at least 1".into()));
        }
        Ok(())
    }

    pub fn posterior(&self) -> MixturePosterior {
        MixturePosterior {
            prior: self.prior,
            mu_pos: self.mu_pos,
            sd_pos: self.sd_pos,
            mu_neg: self.mu_neg,
            sd_neg: self.sd_neg,
        }
    }
}

/// Closed-form `P(y = 1 | λ)` of a [`BinaryMixtureSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixturePosterior {
    pub prior: f64,
    pub mu_pos: f64,
    pub sd_pos: f64,
    pub mu_neg: f64,
    pub sd_neg: f64,
}

fn log_normal_pdf(x: f64, mu: f64, sd: f64) -> f64 {
    let z = (x - mu) / sd;
    -0.5 * z * z - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

impl MixturePosterior {
    pub fn log_odds(&self, lambda: f64) -> f64 {
        self.prior.ln() - (-self.prior).ln_1p() + log_normal_pdf(lambda, self.mu_pos, self.sd_pos)
            - log_normal_pdf(lambda, self.mu_neg, self.sd_neg)
    }

    pub fn prob(&self, lambda: f64) -> f64 {
        sigmoid(self.log_odds(lambda))
    }

    /// `I(y; λ)` in nats by trapezoid quadrature of the exact densities.
    pub fn mutual_information(&self) -> f64 {
        let sd = self.sd_pos.max(self.sd_neg);
        let lo = self.mu_pos.min(self.mu_neg) - 12.0 * sd;
        let hi = self.mu_pos.max(self.mu_neg) + 12.0 * sd;
        let n = 40_001;
        let dx = (hi - lo) / (n - 1) as f64;
        let (pos, neg): (Vec<f64>, Vec<f64>) = (0..n)
            .map(|i| {
                let x = lo + i as f64 * dx;
                (
                    log_normal_pdf(x, self.mu_pos, self.sd_pos).exp(),
                    log_normal_pdf(x, self.mu_neg, self.sd_neg).exp(),
                )
            })
            .unzip();
        mi_from_densities(&pos, &neg, self.prior, dx)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMixture<S> {
    pub set: BinaryCalibrationSet<S>,
    pub posterior: MixturePosterior,
}

pub fn gen_binary_mixture<S: Scalar>(spec: &BinaryMixtureSpec) -> Result<BinaryMixture<S>> {
    spec.validate()?;
    let mut labels_rng = stream(spec.seed, 0);
    let targets: Vec<bool> = (0..spec.n).map(|_| labels_rng.random::<f64>() < spec.prior).collect();
    let mut neg_rng = stream(spec.seed, 1);
    let mut pos_rng = stream(spec.seed, 2);
    let neg = Normal::new(spec.mu_neg, spec.sd_neg).expect("validated");
    let pos = Normal::new(spec.mu_pos, spec.sd_pos).expect("validated");
    let logits = targets
        .iter()
        .map(|&t| {
            S::lit(if t {
                pos.sample(&mut pos_rng)
            } else {
                neg.sample(&mut neg_rng)
            })
        })
        .collect();
    Ok(BinaryMixture {
        set: BinaryCalibrationSet::from_pairs(logits, targets)?,
        posterior: spec.posterior(),
    })
}

/// Binary set as a K = 2 raw-logit matrix `[0, λ]`, whose class-1 softmax
/// probability is `σ(λ)`.
pub fn binary_as_predictions<S: Scalar>(set: &BinaryCalibrationSet<S>) -> Result<PredictionMatrix<S>> {
    let values = set.logits().iter().flat_map(|&l| [S::zero(), l]).collect();
    let labels = set.targets().iter().map(|&t| usize::from(t)).collect();
    PredictionMatrix::new(ScoreMatrix::new(set.len(), 2, values)?, labels, ScoreKind::RawLogits)
}

/// K-class scores with an exactly known posterior.
///
/// Scores are `z_c ~ N(μ·1[c = y], √μ)`, for which `P(y = c | z) =
/// softmax(z + ln π)_c`. Emitted raw logits are `(z + ln π) / T_gen`, so
/// `T_gen < 1` is overconfident and temperature `1 / T_gen` recalibrates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MulticlassSynthSpec {
    pub k: usize,
    pub priors: Vec<f64>,
    pub t_gen: f64,
    pub n: usize,
    pub seed: u64,
    pub separation: f64,
}

pub const DEFAULT_SEPARATION: f64 = 9.0;

impl MulticlassSynthSpec {
    pub fn uniform(k: usize, t_gen: f64, n: usize, seed: u64) -> Self {
        Self {
            k,
            priors: vec![1.0 / k as f64; k],
            t_gen,
            n,
            seed,
            separation: DEFAULT_SEPARATION,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(CalibError::InvalidInput(format!("need K >= 2 classes, got {}", self.k)));
        }
        if self.priors.len() != self.k {
            return Err(CalibError::InvalidInput(format!(
                "{} priors for {} classes",
                self.priors.len(),
                self.k
            )));
        }
        if self.priors.iter().any(|&p| !(p > 0.0)) || (self.priors.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(CalibError::InvalidInput("priors must be positive and sum to 1".into()));
        }
        if !(self.t_gen > 0.0 && self.t_gen.is_finite()) {
            return Err(CalibError::InvalidInput(format!("T_gen must be positive, got {}", self.t_gen)));
        }
        if !(self.separation > 0.0 && self.separation.is_finite()) {
            return Err(CalibError::InvalidInput("separation must be positive".into()));
        }
        if self.n == 0 {
            return Err(CalibError::InvalidInput("sample count must be at least 1".into()));
        }
        Ok(())
    }

    /// Temperature that makes `softmax(z / T)` the true posterior.
    pub fn oracle_temperature(&self) -> f64 {
        1.0 / self.t_gen
    }
}

pub fn gen_multiclass<S: Scalar>(spec: &MulticlassSynthSpec) -> Result<PredictionMatrix<S>> {
    spec.validate()?;
    let mut labels_rng = stream(spec.seed, 0);
    let pick = WeightedIndex::new(&spec.priors).map_err(|e| CalibError::InvalidInput(e.to_string()))?;
    let labels: Vec<usize> = (0..spec.n).map(|_| pick.sample(&mut labels_rng)).collect();
    let noise = Normal::new(0.0, spec.separation.sqrt()).expect("validated");
    let mut class_rngs: Vec<ChaCha8Rng> = (0..spec.k).map(|c| stream(spec.seed, c as u64 + 1)).collect();
    let log_prior: Vec<f64> = spec.priors.iter().map(|p| p.ln()).collect();
    let mut values = Vec::with_capacity(spec.n * spec.k);
    for &y in &labels {
        for (c, rng) in class_rngs.iter_mut().enumerate() {
            let shift = if c == y { spec.separation } else { 0.0 };
            let z = shift + noise.sample(rng);
            values.push(S::lit((z + log_prior[c]) / spec.t_gen));
        }
    }
    PredictionMatrix::new(ScoreMatrix::new(spec.n, spec.k, values)?, labels, ScoreKind::RawLogits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::softmax;

    #[test]
    fn symmetric_posterior_is_logistic() {
        let post = BinaryMixtureSpec::symmetric(0.75, 1, 0).posterior();
        for l in [-3.0, -0.4, 0.0, 1.1, 5.0] {
            assert!((post.log_odds(l) - 1.5 * l).abs() < 1e-12);
            assert!((post.prob(l) - sigmoid(1.5 * l)).abs() < 1e-15);
        }
    }

    #[test]
    fn calibrated_preset_posterior_is_sigmoid() {
        let post = BinaryMixtureSpec::calibrated(0.01, 2.0, 1, 0).posterior();
        for l in [-9.0, -4.0, 0.0, 2.5] {
            assert!((post.log_odds(l) - l).abs() < 1e-12);
        }
    }

    #[test]
    fn imbalanced_preset_has_one_percent_positives() {
        let spec = BinaryMixtureSpec::fig2_imbalanced(100_000, 3);
        let m = gen_binary_mixture::<f64>(&spec).unwrap();
        let p = m.set.positives() as f64 / 1e5;
        let sd = (0.01 * 0.99 / 1e5_f64).sqrt();
        assert!((p - 0.01).abs() < 3.0 * sd);
    }

    #[test]
    fn generators_are_reproducible() {
        let b = BinaryMixtureSpec::symmetric(1.0, 500, 7);
        assert_eq!(gen_binary_mixture::<f64>(&b).unwrap(), gen_binary_mixture::<f64>(&b).unwrap());
        let m = MulticlassSynthSpec::uniform(5, 0.5, 300, 7);
        assert_eq!(gen_multiclass::<f64>(&m).unwrap(), gen_multiclass::<f64>(&m).unwrap());
        let other = MulticlassSynthSpec { seed: 8, ..m.clone() };
        assert_ne!(gen_multiclass::<f64>(&m).unwrap(), gen_multiclass::<f64>(&other).unwrap());
    }

    #[test]
    fn binary_labels_within_binomial_envelope() {
        let spec = MulticlassSynthSpec::uniform(2, 1.0, 100_000, 11);
        let d = gen_multiclass::<f64>(&spec).unwrap();
        let ones = d.labels().iter().filter(|&&y| y == 1).count() as f64 / 1e5;
        assert!((ones - 0.5).abs() < 3.0 * (0.25 / 1e5_f64).sqrt());
    }

    #[test]
    fn analytic_mi_of_separated_mixture() {
        let post = BinaryMixtureSpec::symmetric(20.0, 1, 0).posterior();
        assert!((post.mutual_information() - std::f64::consts::LN_2).abs() < 1e-9);
        let same = BinaryMixtureSpec::symmetric(0.0, 1, 0).posterior();
        assert!(same.mutual_information().abs() < 1e-12);
    }

    #[test]
    fn low_temperature_is_overconfident() {
        for seed in 0..20 {
            let d = gen_multiclass::<f64>(&MulticlassSynthSpec::uniform(10, 0.5, 2000, seed)).unwrap();
            let (mut conf, mut acc) = (0.0, 0.0);
            for (row, &y) in d.scores().iter_rows().zip(d.labels()) {
                let p = softmax(row).unwrap();
                let top = (0..p.len()).max_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap()).unwrap();
                conf += p[top];
                acc += f64::from(u8::from(top == y));
            }
            assert!(conf > acc, "seed {seed}");
        }
    }

    #[test]
    fn binary_matrix_reproduces_logits() {
        let m = gen_binary_mixture::<f64>(&BinaryMixtureSpec::symmetric(1.0, 50, 2)).unwrap();
        let p = binary_as_predictions(&m.set).unwrap();
        let ovr = crate::data::ovr_decompose(&p, 1).unwrap();
        for (a, b) in ovr.logits().iter().zip(m.set.logits()) {
            assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
        }
        assert_eq!(ovr.targets(), m.set.targets());
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(gen_binary_mixture::<f64>(&BinaryMixtureSpec { prior: 1.0, ..BinaryMixtureSpec::symmetric(1.0, 5, 0) }).is_err());
        assert!(gen_multiclass::<f64>(&MulticlassSynthSpec::uniform(1, 1.0, 5, 0)).is_err());
        assert!(gen_multiclass::<f64>(&MulticlassSynthSpec::uniform(3, 0.0, 5, 0)).is_err());
    }
}
