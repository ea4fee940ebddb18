use std::path::Path;

use imax_calib::binning::{fit_eq_mass, fit_eq_size, fit_imax};
use imax_calib::calibrator::class_balanced_split;
use imax_calib::data::{merge_sets, ovr_all, ovr_decompose};
use imax_calib::info::mi_report;
use imax_calib::metrics::{evaluate, CwThreshold, TieBreak};
use imax_calib::synth::{binary_as_predictions, gen_binary_mixture, gen_multiclass};
use imax_calib::{
    BinaryMixtureSpec, Binner64, Calibrator64, EvalConfig, EvalScheme, FitConfig, ImaxConfig, Method,
    MulticlassSynthSpec, Predictions64, ScalerChoice, ScoreKind, Scores64, Strategy,
};
use serde_json::json;

use crate::args::{ApplyArgs, EvalArgs, FitArgs, InputKind, MiReportArgs, Preset, ReportFormat, SynthArgs};
use crate::bundle::{config_hash, CalibratorBundle, Provenance, FORMAT_VERSION};
use crate::diag::diag;
use crate::error::{usage, CliError, CliResult};
use crate::io::{emit, labels_csv, read_labels, read_scores, scores_csv};

fn load_predictions(scores: &Path, labels: &Path, kind: ScoreKind) -> CliResult<Predictions64> {
    let s = read_scores(scores)?;
    let y = read_labels(labels)?;
    if s.rows() != y.len() {
        return Err(CliError::Data(format!("{} score rows but {} labels", s.rows(), y.len())));
    }
    Ok(Predictions64::new(s, y, kind)?)
}

fn check_frac(frac: Option<f64>) -> CliResult<()> {
    match frac {
        Some(f) if !(0.0..1.0).contains(&f) => {
            Err(CliError::Usage(format!("--holdout-frac must lie in [0, 1), got {f}")))
        }
        _ => Ok(()),
    }
}

pub fn fit_config(args: &FitArgs) -> CliResult<FitConfig> {
    let scaler: ScalerChoice = usage(&args.scaler)?;
    let mut method: Method = usage(&args.method)?;
    if method == Method::Imax && scaler != ScalerChoice::None {
        method = Method::ImaxWithScaler;
    }
    let cfg = FitConfig {
        method,
        n_bins: args.bins,
        strategy: usage::<Strategy>(&args.strategy)?,
        groups: args.groups,
        scaler,
        seed: args.seed,
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

pub fn fit(args: &FitArgs) -> CliResult<()> {
    let cfg = fit_config(args)?;
    check_frac(args.holdout_frac)?;
    let kind: ScoreKind = args.input_kind.into();
    let mut data = load_predictions(&args.scores, &args.labels, kind)?;
    if let Some(frac) = args.holdout_frac {
        let (fit_idx, hold_idx) = class_balanced_split(data.labels(), data.k(), frac, args.seed)?;
        diag(&[("event", "split"), ("fit", &fit_idx.len().to_string()), ("holdout", &hold_idx.len().to_string())]);
        data = data.select_rows(&fit_idx);
    }
    let (calibrator, infos) = Calibrator64::fit(&data, &cfg)?;
    for info in &infos {
        diag(&[
            ("event", "group_fit"),
            ("group", &info.group.to_string()),
            ("n", &info.n_samples.to_string()),
            ("iterations", &info.iterations.to_string()),
            ("converged", &info.converged.to_string()),
            ("empty_bin_updates", &info.empty_bin_updates.to_string()),
            ("single_label", &info.single_label.to_string()),
        ]);
    }
    let bundle = CalibratorBundle {
        version: FORMAT_VERSION.into(),
        input_kind: kind,
        provenance: Provenance {
            seed: cfg.seed,
            config_hash: config_hash(&cfg, kind, args.holdout_frac),
            fit_set_size: data.n(),
            holdout_frac: args.holdout_frac,
        },
        config: cfg,
        calibrator,
    };
    emit(args.out.as_deref(), &bundle.to_json())?;
    diag(&[
        ("event", "fit"),
        ("method", bundle.config.method.name()),
        ("classes", &data.k().to_string()),
        ("groups", &bundle.calibrator.models.len().to_string()),
        ("fit_set_size", &data.n().to_string()),
        ("config_hash", &bundle.provenance.config_hash),
    ]);
    Ok(())
}

fn load_bundle(path: &Path) -> CliResult<CalibratorBundle> {
    let s = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    CalibratorBundle::from_json(&s)
}

fn raw_logits(scores: &Scores64, kind: ScoreKind) -> Scores64 {
    match kind {
        ScoreKind::RawLogits => scores.clone(),
        ScoreKind::Probabilities => scores.map(|p| p.max(1e-12).ln()),
    }
}

pub fn apply(args: &ApplyArgs) -> CliResult<()> {
    let bundle = load_bundle(&args.bundle)?;
    let kind = args.input_kind.map(ScoreKind::from).unwrap_or(bundle.input_kind);
    let scores = read_scores(&args.scores)?;
    let calibrated = bundle.calibrator.apply(&scores, kind)?;
    emit(args.out.as_deref(), &scores_csv(&calibrated))?;
    if let Some(side) = &args.raw_sidecar {
        emit(Some(side), &scores_csv(&raw_logits(&scores, kind)))?;
    }
    diag(&[("event", "apply"), ("rows", &calibrated.rows().to_string()), ("classes", &calibrated.cols().to_string())]);
    Ok(())
}

fn eval_configs(args: &EvalArgs) -> CliResult<Vec<EvalConfig>> {
    let base = EvalConfig::default();
    let schemes: Vec<EvalScheme> = if args.eval_scheme.is_empty() {
        vec![base.scheme]
    } else {
        args.eval_scheme.iter().map(|s| usage(s)).collect::<CliResult<_>>()?
    };
    let bins = if args.eval_bins.is_empty() { vec![base.n_eval_bins] } else { args.eval_bins.clone() };
    let cw_thresholds: Vec<CwThreshold> = if args.cw_threshold.is_empty() {
        base.cw_thresholds.clone()
    } else {
        args.cw_threshold.iter().map(|s| usage(s)).collect::<CliResult<_>>()?
    };
    let top_k = if args.top_k.is_empty() { base.top_k.clone() } else { args.top_k.clone() };
    let tie_break: TieBreak = usage(&args.tie_break)?;
    let mut out = Vec::new();
    for &scheme in &schemes {
        for &n_eval_bins in &bins {
            let cfg = EvalConfig {
                scheme,
                n_eval_bins,
                cw_thresholds: cw_thresholds.clone(),
                top_k: top_k.clone(),
                bootstrap: args.bootstrap,
                seed: args.seed,
                tie_break,
            };
            cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            out.push(cfg);
        }
    }
    Ok(out)
}

pub fn eval(args: &EvalArgs) -> CliResult<()> {
    let configs = eval_configs(args)?;
    check_frac(args.holdout_frac)?;
    let (mut calibrated, mut raw) = match (&args.calibrated, &args.scores, &args.bundle) {
        (Some(c), None, None) => (read_scores(c)?, None),
        (None, Some(s), Some(b)) => {
            let bundle = load_bundle(b)?;
            let kind = args.input_kind.map(ScoreKind::from).unwrap_or(bundle.input_kind);
            let scores = read_scores(s)?;
            (bundle.calibrator.apply(&scores, kind)?, Some(raw_logits(&scores, kind)))
        }
        _ => return Err(CliError::Usage("pass --calibrated, or --scores with --bundle".into())),
    };
    if let Some(r) = &args.raw_scores {
        let kind: ScoreKind = args.input_kind.unwrap_or(InputKind::Logits).into();
        raw = Some(raw_logits(&read_scores(r)?, kind));
    }
    let mut labels = read_labels(&args.labels)?;
    if labels.len() != calibrated.rows() {
        return Err(CliError::Data(format!("{} calibrated rows but {} labels", calibrated.rows(), labels.len())));
    }
    if let Some(r) = &raw {
        if r.rows() != calibrated.rows() || r.cols() != calibrated.cols() {
            return Err(CliError::Data("raw scores and calibrated scores differ in shape".into()));
        }
    }
    if configs.iter().any(|c| c.tie_break == TieBreak::RawLogit) && raw.is_none() {
        return Err(CliError::Usage("--tie-break raw-logit needs --raw-scores or --scores".into()));
    }
    if let Some(frac) = args.holdout_frac {
        let (_, hold) = class_balanced_split(&labels, calibrated.cols(), frac, args.seed)?;
        if hold.is_empty() {
            return Err(CliError::Data("holdout split is empty".into()));
        }
        calibrated = calibrated.select_rows(&hold);
        raw = raw.map(|r| r.select_rows(&hold));
        labels = hold.iter().map(|&i| labels[i]).collect();
    }
    let mut reports = Vec::with_capacity(configs.len());
    for cfg in &configs {
        let report = evaluate(&calibrated, &labels, raw.as_ref(), cfg)?;
        diag(&[
            ("event", "eval"),
            ("scheme", cfg.scheme.name()),
            ("eval_bins", &cfg.n_eval_bins.to_string()),
            ("top1_ece", &report.top1_ece.to_string()),
            ("skipped_top_k", &format!("{:?}", report.skipped_top_k)),
        ]);
        reports.push(report);
    }
    let text = match args.format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(&json!({ "reports": reports })).expect("reports serialize");
            s.push('\n');
            s
        }
        ReportFormat::Csv => reports.iter().map(|r| r.to_csv()).collect::<Vec<_>>().join("\n"),
        ReportFormat::Table => reports
            .iter()
            .map(|r| format!("# {} / {} bins\n{}", r.config.scheme.name(), r.config.n_eval_bins, r.to_table()))
            .collect::<Vec<_>>()
            .join("\n"),
    };
    emit(args.out.as_deref(), &text)
}

pub fn synth(args: &SynthArgs) -> CliResult<()> {
    let (data, sidecar) = if args.multiclass {
        let spec = MulticlassSynthSpec::uniform(args.k, args.tgen, args.n, args.seed);
        spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        let data = gen_multiclass::<f64>(&spec)?;
        let sidecar = json!({
            "kind": "multiclass",
            "spec": spec,
            "oracle_temperature": spec.oracle_temperature(),
            "empirical_priors": data.class_priors(),
        });
        (data, sidecar)
    } else {
        let spec = match args.preset.unwrap_or(Preset::Symmetric) {
            Preset::Symmetric => BinaryMixtureSpec::symmetric(args.c, args.n, args.seed),
            Preset::Fig2Imbalanced => BinaryMixtureSpec::fig2_imbalanced(args.n, args.seed),
            Preset::Calibrated => BinaryMixtureSpec::calibrated(args.prior, args.sd, args.n, args.seed),
        };
        spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        let mix = gen_binary_mixture::<f64>(&spec)?;
        let post = mix.posterior;
        let sidecar = json!({
            "kind": "binary_mixture",
            "spec": spec,
            "posterior": post,
            "mutual_information_nats": post.mutual_information(),
            "positives": mix.set.positives(),
        });
        (binary_as_predictions(&mix.set)?, sidecar)
    };
    let dir = &args.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    let mut text = serde_json::to_string_pretty(&sidecar).expect("spec serializes");
    text.push('\n');
    emit(Some(&dir.join("scores.csv")), &scores_csv(data.scores()))?;
    emit(Some(&dir.join("labels.csv")), &labels_csv(data.labels()))?;
    emit(Some(&dir.join("spec.json")), &text)?;
    emit(None, &text)?;
    diag(&[
        ("event", "synth"),
        ("n", &data.n().to_string()),
        ("classes", &data.k().to_string()),
        ("out_dir", &dir.display().to_string()),
    ]);
    Ok(())
}

pub fn mi(args: &MiReportArgs) -> CliResult<()> {
    if args.bins.iter().any(|&m| m < 2) {
        return Err(CliError::Usage("--bins values must be at least 2".into()));
    }
    let data = load_predictions(&args.scores, &args.labels, args.input_kind.into())?;
    let set = match args.class {
        Some(c) if c >= data.k() => {
            return Err(CliError::Usage(format!("--class {c} outside [0, {})", data.k())));
        }
        Some(c) => ovr_decompose(&data, c)?,
        None if data.k() == 2 => ovr_decompose(&data, 1)?,
        None => merge_sets(&ovr_all(&data))?,
    };
    let mut binners: Vec<(String, Binner64)> = Vec::new();
    for &m in &args.bins {
        binners.push((format!("eq_size_{m}"), fit_eq_size(&set, m)?));
        binners.push((format!("eq_mass_{m}"), fit_eq_mass(&set, m)?));
        binners.push((format!("imax_{m}"), fit_imax(&set, &ImaxConfig::with_bins(m).seeded(args.seed))?));
    }
    let refs: Vec<(String, &Binner64)> = binners.iter().map(|(n, b)| (n.clone(), b)).collect();
    let report = mi_report(&set, &refs)?;
    emit(None, &report.to_csv())?;
    let violations = report.violations();
    diag(&[
        ("event", "mi_report"),
        ("n", &set.len().to_string()),
        ("upper_bound_nats", &report.upper_bound_nats.to_string()),
        ("violations", &violations.len().to_string()),
    ]);
    Ok(())
}
