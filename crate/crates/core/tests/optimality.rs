use imax_calib::binning::{fit_eq_mass, fit_eq_size, fit_imax};
use imax_calib::info::{set_mi_upper_bound, MI_SLACK};
use imax_calib::metrics::mi_of_quantizer;
use imax_calib::scalar::sigmoid;
use imax_calib::synth::{gen_binary_mixture, BinaryMixtureSpec};
use imax_calib::{BinarySet64, ImaxConfig};

fn bernoulli_h(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        -p * p.ln() - (1.0 - p) * (1.0 - p).ln()
    }
}

// MI of a two-bin split at sorted position `cut` under soft labels σ(λ).
fn soft_mi(sorted: &[f64], prefix: &[f64], cut: usize) -> f64 {
    let n = sorted.len() as f64;
    let total = prefix[sorted.len()];
    let mut cond = 0.0;
    for (lo, hi) in [(0, cut), (cut, sorted.len())] {
        let w = (hi - lo) as f64;
        if w > 0.0 {
            cond += w / n * bernoulli_h((prefix[hi] - prefix[lo]) / w);
        }
    }
    bernoulli_h(total / n) - cond
}

#[test]
fn two_bin_fit_matches_exhaustive_soft_label_search() {
    for seed in 0..5 {
        let set = gen_binary_mixture::<f64>(&BinaryMixtureSpec::symmetric(0.5, 2000, seed)).unwrap().set;
        let mut sorted = set.logits().to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut prefix = vec![0.0];
        for &l in &sorted {
            prefix.push(prefix.last().unwrap() + sigmoid(l));
        }
        let best = (1..sorted.len()).map(|c| soft_mi(&sorted, &prefix, c)).fold(0.0, f64::max);
        let b = fit_imax(&set, &ImaxConfig::with_bins(2).seeded(seed)).unwrap();
        let cut = sorted.partition_point(|&l| l < b.edges()[0]);
        let ours = soft_mi(&sorted, &prefix, cut);
        assert!(best - ours < 1e-6, "seed {seed}: {best} vs {ours}");
    }
}

fn calibrated_imbalanced(n: usize, seed: u64) -> BinarySet64 {
    gen_binary_mixture(&BinaryMixtureSpec::calibrated(0.01, 2.0, n, seed)).unwrap().set
}

#[test]
fn no_binner_beats_the_kde_bound() {
    for seed in 0..3 {
        for set in [
            calibrated_imbalanced(100_000, seed),
            gen_binary_mixture::<f64>(&BinaryMixtureSpec::symmetric(0.5, 100_000, seed)).unwrap().set,
        ] {
            let bound = set_mi_upper_bound(&set).unwrap();
            for m in [4, 16] {
                for b in [
                    fit_imax(&set, &ImaxConfig::with_bins(m)).unwrap(),
                    fit_eq_size(&set, m).unwrap(),
                    fit_eq_mass(&set, m).unwrap(),
                ] {
                    let mi = mi_of_quantizer(&b, &set);
                    assert!(mi <= bound + MI_SLACK, "seed {seed} M {m}: {mi} > {bound}");
                }
            }
        }
    }
}

// Sigmoid-model MI of a fitted binner: soft labels σ(λ) in place of targets.
fn binner_soft_mi(b: &imax_calib::Binner<f64>, set: &BinarySet64) -> f64 {
    let m = b.n_bins();
    let (mut w, mut c) = (vec![0.0; m], vec![0.0; m]);
    for &l in set.logits() {
        let i = b.quantize(l);
        w[i] += sigmoid(l);
        c[i] += 1.0;
    }
    let n = set.len() as f64;
    let cond: f64 = (0..m).filter(|&i| c[i] > 0.0).map(|i| c[i] / n * bernoulli_h(w[i] / c[i])).sum();
    bernoulli_h(w.iter().sum::<f64>() / n) - cond
}

#[test]
fn imax_mi_grows_with_bin_count() {
    for seed in 0..5 {
        let set = calibrated_imbalanced(10_000, seed);
        let mut prev = 0.0;
        for m in 2..=16 {
            let b = fit_imax(&set, &ImaxConfig::with_bins(m).seeded(seed)).unwrap();
            let soft = binner_soft_mi(&b, &set);
            assert!(soft >= prev - 1e-6, "seed {seed}: M={m} gives {soft} < {prev}");
            prev = soft;
        }
    }
}

#[test]
fn imax_beats_eq_mass_on_imbalanced_preset() {
    for seed in 0..10 {
        let set = gen_binary_mixture::<f64>(&BinaryMixtureSpec::fig2_imbalanced(10_000, seed)).unwrap().set;
        let imax = mi_of_quantizer(&fit_imax(&set, &ImaxConfig::with_bins(15)).unwrap(), &set);
        let mass = mi_of_quantizer(&fit_eq_mass(&set, 15).unwrap(), &set);
        assert!(imax >= mass, "seed {seed}");
    }
}

#[test]
fn independent_labels_give_near_zero_mi() {
    let mut spec = BinaryMixtureSpec::symmetric(0.0, 20_000, 4);
    spec.prior = 0.3;
    let set = gen_binary_mixture::<f64>(&spec).unwrap().set;
    for b in [fit_imax(&set, &ImaxConfig::default()).unwrap(), fit_eq_mass(&set, 15).unwrap()] {
        assert!(mi_of_quantizer(&b, &set) < 2e-3);
    }
    assert!(set_mi_upper_bound(&set).unwrap() < 2e-3);
}

#[test]
fn analytic_mi_matches_kde_bound_at_large_n() {
    let m = gen_binary_mixture::<f64>(&BinaryMixtureSpec::symmetric(1.0, 1_000_000, 5)).unwrap();
    let analytic = m.posterior.mutual_information();
    let kde = set_mi_upper_bound(&m.set).unwrap();
    assert!((analytic - kde).abs() < 2e-3, "{analytic} vs {kde}");
}
