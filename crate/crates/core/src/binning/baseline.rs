//! Equal-size and equal-mass binning baselines.

use crate::data::BinaryCalibrationSet;
use crate::error::{CalibError, Result};
use crate::scalar::Scalar;

use super::{strictly_increasing, BinMethod, Binner};

/// `M - 1` logit-domain edges splitting `[0, 1]` into equal probability intervals.
pub fn eq_size_edges<S: Scalar>(n_bins: usize) -> Result<Vec<S>> {
    if n_bins < 2 {
        return Err(CalibError::InvalidInput(format!("need at least 2 bins, got {n_bins}")));
    }
    // ln(i) - ln(M - i) is exactly antisymmetric under i -> M - i
    Ok((1..n_bins)
        .map(|i| S::from_usize_lossy(i).ln() - S::from_usize_lossy(n_bins - i).ln())
        .collect())
}

/// Empirical quantile at `q` with linear interpolation between order statistics.
pub(crate) fn quantile_sorted<S: Scalar>(sorted: &[S], q: f64) -> S {
    let pos = (sorted.len() - 1) as f64 * q;
    let lo = pos.floor() as usize;
    let frac = S::lit(pos - lo as f64);
    if lo + 1 >= sorted.len() {
        sorted[sorted.len() - 1]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

pub(crate) fn sorted_copy<S: Scalar>(values: &[S]) -> Vec<S> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    v
}

/// Edges at the empirical `i/M` quantiles of `logits`.
///
/// Rejects inputs whose quantiles coincide rather than emitting duplicate edges.
pub fn eq_mass_edges<S: Scalar>(logits: &[S], n_bins: usize) -> Result<Vec<S>> {
    if n_bins < 2 {
        return Err(CalibError::InvalidInput(format!("need at least 2 bins, got {n_bins}")));
    }
    if logits.len() < n_bins {
        return Err(CalibError::InsufficientData {
            needed: n_bins,
            got: logits.len(),
        });
    }
    let sorted = sorted_copy(logits);
    let edges: Vec<S> = (1..n_bins)
        .map(|i| quantile_sorted(&sorted, i as f64 / n_bins as f64))
        .collect();
    if !strictly_increasing(&edges) {
        return Err(CalibError::Degenerate(format!(
            "equal-mass quantiles collide for {n_bins} bins (too many tied logits)"
        )));
    }
    Ok(edges)
}

pub fn fit_eq_size<S: Scalar>(set: &BinaryCalibrationSet<S>, n_bins: usize) -> Result<Binner<S>> {
    Binner::from_edges(BinMethod::EqSize, eq_size_edges(n_bins)?, set)
}

pub fn fit_eq_mass<S: Scalar>(set: &BinaryCalibrationSet<S>, n_bins: usize) -> Result<Binner<S>> {
    Binner::from_edges(BinMethod::EqMass, eq_mass_edges(set.logits(), n_bins)?, set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::logit_of_prob;

    #[test]
    fn eq_size_examples() {
        assert_eq!(eq_size_edges::<f64>(2).unwrap(), vec![0.0]);
        let e = eq_size_edges::<f64>(4).unwrap();
        assert!((e[0] + 1.098612).abs() < 1e-6);
        assert_eq!(e[1], 0.0);
        assert!((e[2] - 1.098612).abs() < 1e-6);
        for m in 2..40 {
            let e = eq_size_edges::<f64>(m).unwrap();
            for i in 0..e.len() {
                assert_eq!(e[i], -e[e.len() - 1 - i]);
                assert!((e[i] - logit_of_prob((i + 1) as f64 / m as f64)).abs() < 1e-12);
            }
        }
        assert!(eq_size_edges::<f64>(1).is_err());
    }

    #[test]
    fn eq_mass_examples() {
        assert_eq!(eq_mass_edges(&[4.0, 2.0, 1.0, 3.0], 2).unwrap(), vec![2.5]);
        assert!(matches!(eq_mass_edges(&[1.0; 10], 3), Err(CalibError::Degenerate(_))));
        assert!(matches!(
            eq_mass_edges(&[1.0, 2.0], 3),
            Err(CalibError::InsufficientData { .. })
        ));
        // M = N: one edge strictly between each pair of consecutive samples
        let x = [0.0, 1.0, 3.0, 7.0, 8.0];
        let e = eq_mass_edges(&x, 5).unwrap();
        assert_eq!(e.len(), 4);
        for i in 0..4 {
            assert!(x[i] < e[i] && e[i] < x[i + 1]);
        }
    }

    #[test]
    fn eq_mass_counts_are_balanced() {
        let x: Vec<f64> = (0..103).map(|i| ((i * 37) % 103) as f64 * 0.13 - 4.0).collect();
        let set = BinaryCalibrationSet::from_pairs(x.clone(), vec![false; x.len()]).unwrap();
        for m in [2, 5, 10, 15] {
            let b = fit_eq_mass(&set, m).unwrap();
            let counts: Vec<usize> = b.joint_counts(&set).iter().map(|c| c[0] + c[1]).collect();
            let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            let bound = 103usize.div_ceil(m) - 103 / m;
            assert!(hi - lo <= bound.max(1), "m={m} counts={counts:?}");
        }
    }
}
