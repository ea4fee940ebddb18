//! Multi-class calibrators built from per-group binary calibrators.
//!
//! Each class's OvR problem is assigned to a group; all classes in a group
//! share one binner or scaler fitted on their merged OvR sets. `Cw` uses one
//! group per class, `Scw` groups classes (one group for all by default).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::binning::{fit_eq_mass, fit_eq_size, fit_imax_traced, Binner, ImaxConfig, RepStrategy};
use crate::data::{
    group_by_prior, logit_of_prob, merge_sets, ovr_all, softmax, ClassGrouping, PredictionMatrix, ScoreKind,
    ScoreMatrix,
};
use crate::error::{CalibError, Result};
use crate::scalar::{clamp_prob, sigmoid, Scalar};
use crate::scaling::{fit_platt, fit_temperature, Scaler};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    EqSize,
    EqMass,
    Imax,
    Temperature,
    Platt,
    ImaxWithScaler,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::EqSize => "eq_size",
            Method::EqMass => "eq_mass",
            Method::Imax => "imax",
            Method::Temperature => "temperature",
            Method::Platt => "platt",
            Method::ImaxWithScaler => "imax_with_scaler",
        }
    }

    /// Binning calibrators emit a finite set of values per class.
    pub fn is_discrete(self) -> bool {
        matches!(self, Method::EqSize | Method::EqMass | Method::Imax | Method::ImaxWithScaler)
    }
}

impl std::str::FromStr for Method {
    type Err = CalibError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "eq_size" => Ok(Method::EqSize),
            "eq_mass" => Ok(Method::EqMass),
            "imax" => Ok(Method::Imax),
            "temperature" | "ts" => Ok(Method::Temperature),
            "platt" => Ok(Method::Platt),
            "imax_with_scaler" => Ok(Method::ImaxWithScaler),
            other => Err(CalibError::InvalidInput(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Cw,
    Scw,
}

impl std::str::FromStr for Strategy {
    type Err = CalibError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cw" => Ok(Strategy::Cw),
            "scw" => Ok(Strategy::Scw),
            other => Err(CalibError::InvalidInput(format!("unknown strategy `{other}`"))),
        }
    }
}

/// Scaler used to set representatives of `ImaxWithScaler`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalerChoice {
    None,
    Temperature,
    Platt,
}

impl std::str::FromStr for ScalerChoice {
    type Err = CalibError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(ScalerChoice::None),
            "temperature" | "ts" => Ok(ScalerChoice::Temperature),
            "platt" => Ok(ScalerChoice::Platt),
            other => Err(CalibError::InvalidInput(format!("unknown scaler `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub method: Method,
    pub n_bins: usize,
    pub strategy: Strategy,
    /// Number of prior-quantile groups under `Scw`.
    pub groups: usize,
    pub scaler: ScalerChoice,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            method: Method::Imax,
            n_bins: 15,
            strategy: Strategy::Scw,
            groups: 1,
            scaler: ScalerChoice::Temperature,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.method.is_discrete() && self.n_bins < 2 {
            return Err(CalibError::InvalidInput(format!("need at least 2 bins, got {}", self.n_bins)));
        }
        if self.groups == 0 {
            return Err(CalibError::InvalidInput("groups must be at least 1".into()));
        }
        Ok(())
    }

    fn imax(&self) -> ImaxConfig {
        ImaxConfig {
            n_bins: self.n_bins,
            seed: self.seed,
            ..ImaxConfig::default()
        }
    }
}

/// Calibrator shared by one group of classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupModel<S> {
    pub classes: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    #[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
    pub binner: Option<Binner<S>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    #[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
    pub scaler: Option<Scaler<S>>,
}

/// Diagnostics of one group fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupFitInfo {
    pub group: usize,
    pub n_samples: usize,
    pub iterations: usize,
    pub converged: bool,
    pub empty_bin_updates: usize,
    pub single_label: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct Calibrator<S> {
    pub method: Method,
    pub strategy: Strategy,
    pub grouping: ClassGrouping,
    pub models: Vec<GroupModel<S>>,
}

/// Raw logits as given, or `ln p` for probability input (same softmax).
fn raw_logit_view<S: Scalar>(data: &PredictionMatrix<S>) -> Result<PredictionMatrix<S>> {
    match data.kind() {
        ScoreKind::RawLogits => Ok(data.clone()),
        ScoreKind::Probabilities => PredictionMatrix::new(
            data.scores().map(|p| clamp_prob(p).ln()),
            data.labels().to_vec(),
            ScoreKind::RawLogits,
        ),
    }
}

fn scaled_softmax<S: Scalar>(scores: &ScoreMatrix<S>, kind: ScoreKind, t: S) -> Result<ScoreMatrix<S>> {
    let mut values = Vec::with_capacity(scores.rows() * scores.cols());
    for row in scores.iter_rows() {
        let z: Vec<S> = row
            .iter()
            .map(|&v| match kind {
                ScoreKind::RawLogits => v / t,
                ScoreKind::Probabilities => clamp_prob(v).ln() / t,
            })
            .collect();
        values.extend(softmax(&z)?);
    }
    ScoreMatrix::new(scores.rows(), scores.cols(), values)
}

impl<S: Scalar> Calibrator<S> {
    pub fn fit(data: &PredictionMatrix<S>, cfg: &FitConfig) -> Result<(Self, Vec<GroupFitInfo>)> {
        cfg.validate()?;
        let k = data.k();
        if cfg.method == Method::Temperature {
            let t = fit_temperature(&raw_logit_view(data)?)?;
            let model = GroupModel {
                classes: (0..k).collect(),
                binner: None,
                scaler: Some(t),
            };
            let info = GroupFitInfo {
                group: 0,
                n_samples: data.n(),
                iterations: 0,
                converged: true,
                empty_bin_updates: 0,
                single_label: false,
            };
            return Ok((
                Self {
                    method: cfg.method,
                    strategy: cfg.strategy,
                    grouping: ClassGrouping::one_for_all(k),
                    models: vec![model],
                },
                vec![info],
            ));
        }

        let grouping = match cfg.strategy {
            Strategy::Cw => ClassGrouping::singletons(k),
            Strategy::Scw => group_by_prior(data, cfg.groups)?,
        };
        let sets = ovr_all(data);
        let temperature = match (cfg.method, cfg.scaler) {
            (Method::ImaxWithScaler, ScalerChoice::Temperature) => {
                let t = fit_temperature(&raw_logit_view(data)?)?;
                let Scaler::Temperature { t: tv } = t else { unreachable!() };
                Some((t, scaled_softmax(data.scores(), data.kind(), tv)?))
            }
            _ => None,
        };

        let mut models = Vec::with_capacity(grouping.groups().len());
        let mut infos = Vec::with_capacity(grouping.groups().len());
        for (g, classes) in grouping.groups().iter().enumerate() {
            let merged = merge_sets(classes.iter().map(|&c| &sets[c]))?;
            let mut info = GroupFitInfo {
                group: g,
                n_samples: merged.len(),
                iterations: 0,
                converged: true,
                empty_bin_updates: 0,
                single_label: !merged.has_both_labels(),
            };
            let with_group = |e: CalibError| match e {
                CalibError::Degenerate(m) => CalibError::Degenerate(format!("group {g}: {m}")),
                CalibError::FitFailure(m) => CalibError::FitFailure(format!("group {g}: {m}")),
                other => other,
            };
            let model = match cfg.method {
                Method::EqSize | Method::EqMass => {
                    let mut b = if cfg.method == Method::EqSize {
                        fit_eq_size(&merged, cfg.n_bins)
                    } else {
                        fit_eq_mass(&merged, cfg.n_bins)
                    }
                    .map_err(with_group)?;
                    b.set_representatives(&merged, RepStrategy::EmpiricalFreq)?;
                    GroupModel {
                        classes: classes.clone(),
                        binner: Some(b),
                        scaler: None,
                    }
                }
                Method::Imax | Method::ImaxWithScaler => {
                    let (mut b, trace) = fit_imax_traced(&merged, &cfg.imax()).map_err(with_group)?;
                    info.iterations = trace.iterations();
                    info.converged = trace.converged;
                    info.empty_bin_updates = trace.empty_bin_updates;
                    let mut scaler = None;
                    match (cfg.method, cfg.scaler) {
                        (Method::Imax, _) => b.set_representatives(&merged, RepStrategy::EmpiricalFreq)?,
                        (_, ScalerChoice::None) => b.set_representatives(&merged, RepStrategy::RawProbMean)?,
                        (_, ScalerChoice::Platt) => {
                            let s = fit_platt(&merged).map_err(with_group)?;
                            b.set_representatives(&merged, RepStrategy::ScaledProbMean(&s))?;
                            scaler = Some(s);
                        }
                        (_, ScalerChoice::Temperature) => {
                            let (t, probs) = temperature.as_ref().expect("fitted above");
                            let sample: Vec<S> = classes.iter().flat_map(|&c| probs.column(c)).collect();
                            b.set_representatives(&merged, RepStrategy::SampleProbMean(&sample))?;
                            scaler = Some(*t);
                        }
                    }
                    GroupModel {
                        classes: classes.clone(),
                        binner: Some(b),
                        scaler,
                    }
                }
                Method::Platt => GroupModel {
                    classes: classes.clone(),
                    binner: None,
                    scaler: Some(fit_platt(&merged).map_err(with_group)?),
                },
                Method::Temperature => unreachable!(),
            };
            models.push(model);
            infos.push(info);
        }
        Ok((
            Self {
                method: cfg.method,
                strategy: cfg.strategy,
                grouping,
                models,
            },
            infos,
        ))
    }

    pub fn n_classes(&self) -> usize {
        self.grouping.n_classes()
    }

    /// Check the invariants a deserialized calibrator must satisfy.
    pub fn validate(&self) -> Result<()> {
        let k = self.n_classes();
        self.grouping.validate(k)?;
        if self.models.len() != self.grouping.groups().len() {
            return Err(CalibError::InvalidInput(format!(
                "{} group models for {} groups",
                self.models.len(),
                self.grouping.groups().len()
            )));
        }
        for (m, g) in self.models.iter().zip(self.grouping.groups()) {
            if &m.classes != g {
                return Err(CalibError::InvalidInput("group model classes differ from grouping".into()));
            }
            if let Some(s) = &m.scaler {
                s.validate()?;
            }
            let ok = match self.method {
                Method::Temperature => matches!(m.scaler, Some(Scaler::Temperature { .. })) && m.binner.is_none(),
                Method::Platt => matches!(m.scaler, Some(Scaler::Platt { .. })) && m.binner.is_none(),
                _ => m.binner.as_ref().is_some_and(|b| b.reps().is_some()),
            };
            if !ok {
                return Err(CalibError::InvalidInput(format!(
                    "group model does not match method {}",
                    self.method.name()
                )));
            }
        }
        Ok(())
    }

    /// N×K calibrated per-class probabilities; rows are not renormalized.
    pub fn apply(&self, scores: &ScoreMatrix<S>, kind: ScoreKind) -> Result<ScoreMatrix<S>> {
        let k = self.n_classes();
        if scores.cols() != k {
            return Err(CalibError::InvalidInput(format!(
                "calibrator has {k} classes, scores have {}",
                scores.cols()
            )));
        }
        if let Some(i) = scores.values().iter().position(|v| !v.is_finite()) {
            return Err(CalibError::NonFinite { index: i });
        }
        if self.method == Method::Temperature {
            let Some(Scaler::Temperature { t }) = self.models[0].scaler else {
                return Err(CalibError::InvalidInput("temperature model without temperature".into()));
            };
            return scaled_softmax(scores, kind, t);
        }
        let group_of = self.grouping.class_to_group();
        let mut values = Vec::with_capacity(scores.rows() * k);
        for row in scores.iter_rows() {
            let probs = match kind {
                ScoreKind::RawLogits => softmax(row)?,
                ScoreKind::Probabilities => row.to_vec(),
            };
            for (c, &p) in probs.iter().enumerate() {
                let lambda = logit_of_prob(p);
                let m = &self.models[group_of[c]];
                values.push(match (&m.binner, &m.scaler) {
                    (Some(b), _) => b.apply(lambda)?,
                    (None, Some(s)) => clamp_prob(sigmoid(s.apply(lambda))),
                    (None, None) => return Err(CalibError::InvalidInput("empty group model".into())),
                });
            }
        }
        ScoreMatrix::new(scores.rows(), k, values)
    }
}

/// Seeded class-balanced split: from each class, `round(frac · n_c)` samples go
/// to the holdout side. Returns sorted `(fit, holdout)` indices.
pub fn class_balanced_split(labels: &[usize], k: usize, frac: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&frac) {
        return Err(CalibError::InvalidInput(format!("holdout fraction must lie in [0, 1), got {frac}")));
    }
    let mut by_class = vec![Vec::new(); k];
    for (i, &y) in labels.iter().enumerate() {
        if y >= k {
            return Err(CalibError::InvalidInput(format!("label {y} outside [0, {k})")));
        }
        by_class[y].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut fit, mut hold) = (Vec::new(), Vec::new());
    for mut idx in by_class {
        idx.shuffle(&mut rng);
        let h = (frac * idx.len() as f64).round() as usize;
        hold.extend_from_slice(&idx[..h]);
        fit.extend_from_slice(&idx[h..]);
    }
    fit.sort_unstable();
    hold.sort_unstable();
    if fit.is_empty() {
        return Err(CalibError::InsufficientData { needed: 1, got: 0 });
    }
    Ok((fit, hold))
}
