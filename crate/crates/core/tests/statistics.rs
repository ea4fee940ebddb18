use imax_calib::calibrator::{Calibrator, FitConfig, Method, ScalerChoice};
use imax_calib::data::ScoreMatrix;
use imax_calib::metrics::{bootstrap, top1_ece, EvalConfig, EvalScheme};
use imax_calib::scaling::{fit_platt, fit_temperature};
use imax_calib::synth::{binary_as_predictions, gen_binary_mixture, gen_multiclass, BinaryMixtureSpec, MulticlassSynthSpec};
use imax_calib::{Predictions64, Scaler};

#[test]
fn calibrated_generator_needs_no_temperature() {
    let d: Predictions64 = gen_multiclass(&MulticlassSynthSpec::uniform(10, 1.0, 50_000, 1)).unwrap();
    let Scaler::Temperature { t } = fit_temperature(&d).unwrap() else { unreachable!() };
    assert!((t - 1.0).abs() < 0.02, "{t}");
}

#[test]
fn doubled_logits_need_temperature_two() {
    let d: Predictions64 = gen_multiclass(&MulticlassSynthSpec::uniform(10, 1.0, 50_000, 2)).unwrap();
    let doubled = Predictions64::new(d.scores().map(|z| 2.0 * z), d.labels().to_vec(), d.kind()).unwrap();
    let Scaler::Temperature { t } = fit_temperature(&doubled).unwrap() else { unreachable!() };
    assert!((t - 2.0).abs() < 0.1, "{t}");
}

#[test]
fn unit_temperature_data_is_nearly_calibrated() {
    let d: Predictions64 = gen_multiclass(&MulticlassSynthSpec::uniform(10, 1.0, 100_000, 3)).unwrap();
    let cfg = EvalConfig {
        scheme: EvalScheme::EqSize,
        n_eval_bins: 15,
        ..EvalConfig::default()
    };
    assert!(top1_ece(&d.probabilities(), d.labels(), &cfg, None).unwrap() < 0.01);
}

#[test]
fn platt_recovers_identity_on_sigmoid_posterior() {
    let set = gen_binary_mixture::<f64>(&BinaryMixtureSpec::symmetric(0.5, 100_000, 4)).unwrap().set;
    let Scaler::Platt { a, b } = fit_platt(&set).unwrap() else { unreachable!() };
    assert!((a - 1.0).abs() < 0.05 && b.abs() < 0.05, "({a}, {b})");
}

#[test]
fn platt_approaches_population_optimum_as_n_grows() {
    let c = 0.8;
    let err = |n| {
        let set = gen_binary_mixture::<f64>(&BinaryMixtureSpec::symmetric(c, n, 5)).unwrap().set;
        let Scaler::Platt { a, b } = fit_platt(&set).unwrap() else { unreachable!() };
        (a - 2.0 * c).abs() + b.abs()
    };
    assert!(err(200_000) < 0.03);
    assert!(err(200_000) < err(500) + 0.01);
}

#[test]
fn ts_representatives_reduce_training_ece() {
    let mut wins = 0;
    for seed in 0..20 {
        let d: Predictions64 = gen_multiclass(&MulticlassSynthSpec::uniform(10, 0.5, 3000, seed)).unwrap();
        let ece = |scaler| {
            let cfg = FitConfig {
                method: Method::ImaxWithScaler,
                scaler,
                seed,
                ..FitConfig::default()
            };
            let (cal, _) = Calibrator::fit(&d, &cfg).unwrap();
            let out = cal.apply(d.scores(), d.kind()).unwrap();
            top1_ece(&out, d.labels(), &EvalConfig::exact(), None).unwrap()
        };
        wins += usize::from(ece(ScalerChoice::Temperature) <= ece(ScalerChoice::None));
    }
    assert!(wins >= 16, "{wins}/20");
}

#[test]
fn bootstrap_spread_shrinks_with_sample_size() {
    let spread = |n| {
        let set = gen_binary_mixture::<f64>(&BinaryMixtureSpec::symmetric(0.5, n, 6)).unwrap().set;
        let p = binary_as_predictions(&set).unwrap().probabilities();
        let labels: Vec<usize> = set.targets().iter().map(|&t| usize::from(t)).collect();
        bootstrap(n, 100, 7, |idx| {
            let m: ScoreMatrix<f64> = p.select_rows(idx);
            let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            imax_calib::metrics::brier(&m, &y).unwrap()
        })
        .unwrap()
        .std
    };
    let (small, large) = (spread(1000), spread(16_000));
    // 16x the data: about a quarter of the spread
    let ratio = small / large;
    assert!(ratio > 2.0 && ratio < 8.0, "{ratio}");
}
