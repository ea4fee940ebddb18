//! Parametric scaling baselines: temperature scaling on raw multiclass
//! logits and Platt scaling on OvR logits.

use serde::{Deserialize, Serialize};

use crate::binning::{fit_imax, Binner, ImaxConfig, RepStrategy};
use crate::data::{BinaryCalibrationSet, PredictionMatrix, ScoreKind};
use crate::error::{CalibError, Result};
use crate::scalar::{log_sigmoid, sigmoid, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields, bound = "S: Scalar")]
pub enum Scaler<S> {
    Temperature {
        #[serde(rename = "T")]
        t: S,
    },
    Platt {
        a: S,
        b: S,
    },
}

impl<S: Scalar> Scaler<S> {
    pub fn temperature(t: S) -> Result<Self> {
        let s = Scaler::Temperature { t };
        s.validate()?;
        Ok(s)
    }

    pub fn identity() -> Self {
        Scaler::Temperature { t: S::one() }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Scaler::Temperature { t } if !(t > S::zero() && t.is_finite()) => {
                Err(CalibError::InvalidInput(format!("temperature must be positive, got {t}")))
            }
            Scaler::Platt { a, b } if !(a.is_finite() && b.is_finite()) => {
                Err(CalibError::InvalidInput("platt parameters must be finite".into()))
            }
            _ => Ok(()),
        }
    }

    /// Scaled logit: `λ / T` or `a·λ + b`.
    #[inline]
    pub fn apply(&self, lambda: S) -> S {
        match *self {
            Scaler::Temperature { t } => lambda / t,
            Scaler::Platt { a, b } => a * lambda + b,
        }
    }
}

/// Mean multiclass NLL of `softmax(beta · z)` with its first two derivatives in `beta`.
fn ts_objective<S: Scalar>(data: &PredictionMatrix<S>, beta: f64) -> (f64, f64, f64) {
    let (mut f, mut g, mut h) = (0.0, 0.0, 0.0);
    let mut buf = Vec::with_capacity(data.k());
    for (row, &y) in data.scores().iter_rows().zip(data.labels()) {
        buf.clear();
        buf.extend(row.iter().map(|&z| z.as_f64()));
        let max = buf.iter().fold(f64::NEG_INFINITY, |m, &z| m.max(beta * z));
        let (mut sum, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for &z in &buf {
            let w = (beta * z - max).exp();
            sum += w;
            m1 += w * z;
            m2 += w * z * z;
        }
        let mean = m1 / sum;
        f += max + sum.ln() - beta * buf[y];
        g += mean - buf[y];
        h += (m2 / sum - mean * mean).max(0.0);
    }
    let n = data.n() as f64;
    (f / n, g / n, h / n)
}

const T_MIN: f64 = 1e-2;
const T_MAX: f64 = 1e2;

/// Temperature minimizing the multiclass softmax NLL of `z / T` over
/// `T ∈ [1e-2, 1e2]`: golden-section search on `ln T` followed by Newton
/// polishing in `1/T`, where the objective is convex.
pub fn fit_temperature<S: Scalar>(data: &PredictionMatrix<S>) -> Result<Scaler<S>> {
    if data.kind() != ScoreKind::RawLogits {
        return Err(CalibError::InvalidInput(
            "temperature scaling needs raw logits, got probabilities".into(),
        ));
    }
    if data.n() < 2 {
        return Err(CalibError::InsufficientData { needed: 2, got: data.n() });
    }
    let obj = |log_t: f64| ts_objective(data, (-log_t).exp()).0;
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (T_MIN.ln(), T_MAX.ln());
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (obj(x1), obj(x2));
    while hi - lo > 1e-4 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = obj(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = obj(x2);
        }
    }
    let mut beta = (-(lo + hi) / 2.0).exp();
    let (beta_min, beta_max) = (1.0 / T_MAX, 1.0 / T_MIN);
    let (mut f, mut g, mut h) = ts_objective(data, beta);
    for _ in 0..50 {
        if !(h > 0.0) {
            break;
        }
        let next = (beta - g / h).clamp(beta_min, beta_max);
        let (nf, ng, nh) = ts_objective(data, next);
        if nf > f + 1e-15 * f.abs() {
            break;
        }
        let moved = (1.0 / next - 1.0 / beta).abs();
        beta = next;
        (f, g, h) = (nf, ng, nh);
        if moved < 1e-9 {
            break;
        }
    }
    if !f.is_finite() {
        return Err(CalibError::FitFailure("temperature objective is not finite".into()));
    }
    Scaler::temperature(S::lit(1.0 / beta))
}

/// Mean binary NLL of `σ[(2y-1)(aλ+b)]`.
pub fn platt_objective<S: Scalar>(set: &BinaryCalibrationSet<S>, a: f64, b: f64) -> f64 {
    let total: f64 = set
        .logits()
        .iter()
        .zip(set.targets())
        .map(|(&l, &y)| {
            let s = a * l.as_f64() + b;
            -log_sigmoid(if y { s } else { -s })
        })
        .sum();
    total / set.len() as f64
}

fn platt_derivatives<S: Scalar>(set: &BinaryCalibrationSet<S>, a: f64, b: f64) -> ([f64; 2], [f64; 3]) {
    let (mut ga, mut gb, mut haa, mut hab, mut hbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&l, &y) in set.logits().iter().zip(set.targets()) {
        let l = l.as_f64();
        let p = sigmoid(a * l + b);
        let r = p - f64::from(u8::from(y));
        let w = p * (1.0 - p);
        ga += r * l;
        gb += r;
        haa += w * l * l;
        hab += w * l;
        hbb += w;
    }
    let n = set.len() as f64;
    ([ga / n, gb / n], [haa / n, hab / n, hbb / n])
}

/// Platt parameters by damped Newton on the binary NLL.
///
/// Pass the merged set of a class group for the shared class-wise variant.
pub fn fit_platt<S: Scalar>(set: &BinaryCalibrationSet<S>) -> Result<Scaler<S>> {
    if !set.has_both_labels() {
        return Err(CalibError::Degenerate("platt scaling needs both labels present".into()));
    }
    let tol = 1e-8_f64.max(100.0 * S::epsilon().as_f64());
    let (mut a, mut b) = (1.0, 0.0);
    let mut f = platt_objective(set, a, b);
    for _ in 0..200 {
        let ([ga, gb], [haa, hab, hbb]) = platt_derivatives(set, a, b);
        if ga.hypot(gb) < tol {
            return Ok(Scaler::Platt {
                a: S::lit(a),
                b: S::lit(b),
            });
        }
        let det = haa * hbb - hab * hab;
        let (da, db) = if det > 1e-300 {
            ((hbb * ga - hab * gb) / det, (haa * gb - hab * ga) / det)
        } else {
            (ga, gb)
        };
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let (na, nb) = (a - step * da, b - step * db);
            let nf = platt_objective(set, na, nb);
            if nf <= f {
                (a, b, f) = (na, nb, nf);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // no descent left at machine precision
            let ([ga, gb], _) = platt_derivatives(set, a, b);
            if ga.hypot(gb) < tol.sqrt() {
                return Ok(Scaler::Platt {
                    a: S::lit(a),
                    b: S::lit(b),
                });
            }
            break;
        }
    }
    Err(CalibError::FitFailure(
        "platt scaling did not converge (labels may be separable)".into(),
    ))
}

/// I-Max edges fitted on raw logits with representatives from scaled logits.
pub fn bin_with_scaler<S: Scalar>(set: &BinaryCalibrationSet<S>, cfg: &ImaxConfig, scaler: &Scaler<S>) -> Result<Binner<S>> {
    let mut binner = fit_imax(set, cfg)?;
    binner.set_representatives(set, RepStrategy::ScaledProbMean(scaler))?;
    Ok(binner)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ScoreMatrix;

    #[test]
    fn apply_examples() {
        assert_eq!(Scaler::Temperature { t: 1.0 }.apply(0.7), 0.7);
        assert_eq!(Scaler::Platt { a: 1.0, b: 0.0 }.apply(-3.2), -3.2);
        assert_eq!(Scaler::Temperature { t: 2.0 }.apply(3.0), 1.5);
        assert!(Scaler::temperature(0.0).is_err());
    }

    #[test]
    fn scaler_json_shape() {
        let t = serde_json::to_string(&Scaler::Temperature { t: 1.5_f64 }).unwrap();
        assert_eq!(t, r#"{"kind":"temperature","T":1.5}"#);
        let p = serde_json::to_string(&Scaler::Platt { a: 2.0_f64, b: -0.25 }).unwrap();
        assert_eq!(p, r#"{"kind":"platt","a":2.0,"b":-0.25}"#);
        let back: Scaler<f64> = serde_json::from_str(&p).unwrap();
        assert_eq!(back, Scaler::Platt { a: 2.0, b: -0.25 });
        assert!(serde_json::from_str::<Scaler<f64>>(r#"{"kind":"temperature","T":1,"x":2}"#).is_err());
    }

    #[test]
    fn temperature_rejects_bad_input() {
        let probs = PredictionMatrix::new(
            ScoreMatrix::from_rows(&[vec![0.4, 0.6], vec![0.5, 0.5]]).unwrap(),
            vec![0, 1],
            ScoreKind::Probabilities,
        )
        .unwrap();
        assert!(fit_temperature(&probs).is_err());
        let one = PredictionMatrix::new(
            ScoreMatrix::from_rows(&[vec![0.4, 0.6]]).unwrap(),
            vec![0],
            ScoreKind::RawLogits,
        )
        .unwrap();
        assert!(matches!(fit_temperature(&one), Err(CalibError::InsufficientData { .. })));
    }

    #[test]
    fn temperature_derivatives_match_finite_differences() {
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|i| (0..4).map(|k| (((i * 13 + k * 7) % 11) as f64) / 3.0 - 1.5).collect())
            .collect();
        let labels = (0..50).map(|i| (i * 3) % 4).collect();
        let data = PredictionMatrix::new(ScoreMatrix::from_rows(&rows).unwrap(), labels, ScoreKind::RawLogits).unwrap();
        let beta = 0.8;
        let eps = 1e-5;
        let (_, g, h) = ts_objective(&data, beta);
        let (fp, gp, _) = ts_objective(&data, beta + eps);
        let (fm, gm, _) = ts_objective(&data, beta - eps);
        assert!((g - (fp - fm) / (2.0 * eps)).abs() < 1e-7);
        assert!((h - (gp - gm) / (2.0 * eps)).abs() < 1e-6);
    }

    #[test]
    fn platt_rejects_single_label() {
        let one = BinaryCalibrationSet::from_pairs(vec![0.1_f64, 0.2], vec![true, true]).unwrap();
        assert!(matches!(fit_platt(&one), Err(CalibError::Degenerate(_))));
    }

    #[test]
    fn platt_label_flip_flips_slope() {
        let logits: Vec<f64> = (0..400).map(|i| (i as f64 / 40.0) - 5.0).collect();
        let targets: Vec<bool> = logits.iter().enumerate().map(|(i, &l)| sigmoid(l) > ((i * 7919) % 400) as f64 / 400.0).collect();
        let set = BinaryCalibrationSet::from_pairs(logits.clone(), targets.clone()).unwrap();
        let flipped = BinaryCalibrationSet::from_pairs(logits, targets.iter().map(|t| !t).collect()).unwrap();
        let Scaler::Platt { a, b } = fit_platt(&set).unwrap() else { unreachable!() };
        let Scaler::Platt { a: fa, b: fb } = fit_platt(&flipped).unwrap() else { unreachable!() };
        assert!(a > 0.0 && fa < 0.0);
        assert!((a + fa).abs() < 1e-6 && (b + fb).abs() < 1e-6);
        assert!(platt_objective(&set, a, b) <= platt_objective(&set, 1.0, 0.0));
    }

    #[test]
    fn platt_reparameterization() {
        let logits: Vec<f64> = (0..600).map(|i| (i as f64 / 60.0) - 5.0).collect();
        let targets: Vec<bool> = logits.iter().enumerate().map(|(i, &l)| sigmoid(l) > ((i * 7919) % 600) as f64 / 600.0).collect();
        let set = BinaryCalibrationSet::from_pairs(logits.clone(), targets.clone()).unwrap();
        let moved = BinaryCalibrationSet::from_pairs(logits.iter().map(|l| 2.0 * l + 1.0).collect(), targets).unwrap();
        let Scaler::Platt { a, b } = fit_platt(&set).unwrap() else { unreachable!() };
        let Scaler::Platt { a: ma, b: mb } = fit_platt(&moved).unwrap() else { unreachable!() };
        // a·λ + b = ma·(2λ + 1) + mb
        assert!((ma - a / 2.0).abs() < 1e-6);
        assert!((mb - (b - a / 2.0)).abs() < 1e-6);
    }
}
