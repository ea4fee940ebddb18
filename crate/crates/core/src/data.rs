//! Prediction containers, probability/logit transforms and the one-vs-rest
//! reduction that turns a K-class problem into binary calibration sets.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};
use crate::scalar::{clamp_prob, sigmoid, Scalar};

/// Row-major `rows × cols` matrix of per-class scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix<S> {
    rows: usize,
    cols: usize,
    values: Vec<S>,
}

impl<S: Scalar> ScoreMatrix<S> {
    pub fn new(rows: usize, cols: usize, values: Vec<S>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(CalibError::InvalidInput(format!(
                "expected {rows}x{cols}={} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<S>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
            return Err(CalibError::InvalidInput(format!(
                "row {bad} has {} columns, expected {cols}",
                rows[bad].len()
            )));
        }
        let values = rows.iter().flatten().copied().collect();
        Self::new(rows.len(), cols, values)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[S] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, k: usize) -> S {
        self.values[i * self.cols + k]
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[S]> + '_ {
        self.values.chunks(self.cols.max(1)).take(self.rows)
    }

    pub fn column(&self, k: usize) -> Vec<S> {
        (0..self.rows).map(|i| self.get(i, k)).collect()
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut values = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            values,
        }
    }

    /// Element-wise map into a new matrix of the same shape.
    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Whether a score matrix holds raw classifier logits or probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    RawLogits,
    Probabilities,
}

/// N×K classifier scores with N labels in `[0, K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix<S> {
    scores: ScoreMatrix<S>,
    labels: Vec<usize>,
    kind: ScoreKind,
}

impl<S: Scalar> PredictionMatrix<S> {
    pub fn new(scores: ScoreMatrix<S>, labels: Vec<usize>, kind: ScoreKind) -> Result<Self> {
        let (n, k) = (scores.rows(), scores.cols());
        if n == 0 {
            return Err(CalibError::InsufficientData { needed: 1, got: 0 });
        }
        if k < 2 {
            return Err(CalibError::InvalidInput(format!("need at least 2 classes, got {k}")));
        }
        if labels.len() != n {
            return Err(CalibError::InvalidInput(format!(
                "{} labels for {n} score rows",
                labels.len()
            )));
        }
        if let Some(i) = labels.iter().position(|&y| y >= k) {
            return Err(CalibError::InvalidInput(format!(
                "label {} at row {i} outside [0, {k})",
                labels[i]
            )));
        }
        if let Some(i) = scores.values().iter().position(|v| !v.is_finite()) {
            return Err(CalibError::NonFinite { index: i });
        }
        if kind == ScoreKind::Probabilities {
            let tol = S::lit(1e-6);
            for (i, row) in scores.iter_rows().enumerate() {
                if row.iter().any(|&p| p < S::zero() || p > S::one()) {
                    return Err(CalibError::InvalidInput(format!(
                        "row {i} has a probability outside [0, 1]"
                    )));
                }
                let total: S = row.iter().copied().sum();
                if (total - S::one()).abs() > tol {
                    return Err(CalibError::InvalidInput(format!(
                        "row {i} sums to {total}, expected 1"
                    )));
                }
            }
        }
        Ok(Self { scores, labels, kind })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.scores.rows()
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.scores.cols()
    }

    pub fn scores(&self) -> &ScoreMatrix<S> {
        &self.scores
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn kind(&self) -> ScoreKind {
        self.kind
    }

    /// Class probabilities, applying softmax when the scores are raw logits.
    pub fn probabilities(&self) -> ScoreMatrix<S> {
        match self.kind {
            ScoreKind::Probabilities => self.scores.clone(),
            ScoreKind::RawLogits => {
                let mut values = Vec::with_capacity(self.scores.values().len());
                for row in self.scores.iter_rows() {
                    // rows were validated finite in `new`
                    values.extend(softmax(row).expect("finite row"));
                }
                ScoreMatrix::new(self.n(), self.k(), values).expect("shape preserved")
            }
        }
    }

    /// Empirical class frequencies.
    pub fn class_priors(&self) -> Vec<S> {
        class_priors(&self.labels, self.k())
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self {
            scores: self.scores.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            kind: self.kind,
        }
    }
}

pub(crate) fn class_priors<S: Scalar>(labels: &[usize], k: usize) -> Vec<S> {
    let mut counts = vec![0usize; k];
    for &y in labels {
        counts[y] += 1;
    }
    let n = S::from_usize_lossy(labels.len().max(1));
    counts.into_iter().map(|c| S::from_usize_lossy(c) / n).collect()
}

/// Binary calibration set: OvR logits with 0/1 targets.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryCalibrationSet<S> {
    logits: Vec<S>,
    targets: Vec<bool>,
    source_classes: BTreeSet<usize>,
}

impl<S: Scalar> BinaryCalibrationSet<S> {
    pub fn new(logits: Vec<S>, targets: Vec<bool>, source_classes: BTreeSet<usize>) -> Result<Self> {
        if logits.len() != targets.len() {
            return Err(CalibError::InvalidInput(format!(
                "{} logits but {} targets",
                logits.len(),
                targets.len()
            )));
        }
        if logits.is_empty() {
            return Err(CalibError::InsufficientData { needed: 1, got: 0 });
        }
        if let Some(i) = logits.iter().position(|v| !v.is_finite()) {
            return Err(CalibError::NonFinite { index: i });
        }
        Ok(Self {
            logits,
            targets,
            source_classes,
        })
    }

    /// Set without class provenance, e.g. for a natively binary problem.
    pub fn from_pairs(logits: Vec<S>, targets: Vec<bool>) -> Result<Self> {
        Self::new(logits, targets, BTreeSet::new())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.logits.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.logits.is_empty()
    }

    pub fn logits(&self) -> &[S] {
        &self.logits
    }

    pub fn targets(&self) -> &[bool] {
        &self.targets
    }

    pub fn source_classes(&self) -> &BTreeSet<usize> {
        &self.source_classes
    }

    pub fn positives(&self) -> usize {
        self.targets.iter().filter(|&&t| t).count()
    }

    pub fn has_both_labels(&self) -> bool {
        let p = self.positives();
        p > 0 && p < self.len()
    }

    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        Self::new(
            idx.iter().map(|&i| self.logits[i]).collect(),
            idx.iter().map(|&i| self.targets[i]).collect(),
            self.source_classes.clone(),
        )
    }
}

/// Numerically stable softmax of one score row.
pub fn softmax<S: Scalar>(row: &[S]) -> Result<Vec<S>> {
    if let Some(i) = row.iter().position(|v| !v.is_finite()) {
        return Err(CalibError::NonFinite { index: i });
    }
    let max = row.iter().copied().fold(S::neg_infinity(), S::max);
    let exps: Vec<S> = row.iter().map(|&z| (z - max).exp()).collect();
    let total: S = exps.iter().copied().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// OvR logit `log q - log(1 - q)` after clamping `q` away from 0 and 1.
#[inline]
pub fn logit_of_prob<S: Scalar>(q: S) -> S {
    let q = clamp_prob(q);
    q.ln() - (-q).ln_1p()
}

#[inline]
pub fn prob_of_logit<S: Scalar>(lambda: S) -> S {
    sigmoid(lambda)
}

/// One-vs-rest set for `class_k`: target is `label == class_k`, logit is the
/// OvR logit of the class probability.
pub fn ovr_decompose<S: Scalar>(data: &PredictionMatrix<S>, class_k: usize) -> Result<BinaryCalibrationSet<S>> {
    if class_k >= data.k() {
        return Err(CalibError::InvalidInput(format!(
            "class {class_k} outside [0, {})",
            data.k()
        )));
    }
    let logits = match data.kind() {
        ScoreKind::Probabilities => data.scores().column(class_k).into_iter().map(logit_of_prob).collect(),
        ScoreKind::RawLogits => data
            .scores()
            .iter_rows()
            .map(|row| logit_of_prob(softmax(row).expect("finite row")[class_k]))
            .collect(),
    };
    let targets = data.labels().iter().map(|&y| y == class_k).collect();
    BinaryCalibrationSet::new(logits, targets, BTreeSet::from([class_k]))
}

/// All K one-vs-rest sets, computing the softmax once per row.
pub fn ovr_all<S: Scalar>(data: &PredictionMatrix<S>) -> Vec<BinaryCalibrationSet<S>> {
    let probs = data.probabilities();
    (0..data.k())
        .map(|k| {
            let logits = probs.column(k).into_iter().map(logit_of_prob).collect();
            let targets = data.labels().iter().map(|&y| y == k).collect();
            BinaryCalibrationSet::new(logits, targets, BTreeSet::from([k])).expect("valid OvR set")
        })
        .collect()
}

/// OvR logits for every entry of a probability matrix.
pub fn ovr_logit_matrix<S: Scalar>(probs: &ScoreMatrix<S>) -> ScoreMatrix<S> {
    probs.map(logit_of_prob)
}

/// Concatenate sets in order; `source_classes` becomes the union.
pub fn merge_sets<'a, S: Scalar>(
    sets: impl IntoIterator<Item = &'a BinaryCalibrationSet<S>>,
) -> Result<BinaryCalibrationSet<S>> {
    let mut logits = Vec::new();
    let mut targets = Vec::new();
    let mut classes = BTreeSet::new();
    let mut any = false;
    for s in sets {
        any = true;
        logits.extend_from_slice(&s.logits);
        targets.extend_from_slice(&s.targets);
        classes.extend(s.source_classes.iter().copied());
    }
    if !any {
        return Err(CalibError::InvalidInput("cannot merge an empty list of sets".into()));
    }
    BinaryCalibrationSet::new(logits, targets, classes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupingMode {
    OneForAll,
    ByPriorQuantile,
    Explicit,
}

/// Partition of the K classes into groups sharing one calibrator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassGrouping {
    groups: Vec<Vec<usize>>,
    mode: GroupingMode,
}

impl ClassGrouping {
    pub fn one_for_all(k: usize) -> Self {
        Self {
            groups: vec![(0..k).collect()],
            mode: GroupingMode::OneForAll,
        }
    }

    /// Every class in its own group (plain class-wise calibration).
    pub fn singletons(k: usize) -> Self {
        Self {
            groups: (0..k).map(|c| vec![c]).collect(),
            mode: GroupingMode::Explicit,
        }
    }

    pub fn explicit(groups: Vec<Vec<usize>>, k: usize) -> Result<Self> {
        Self::validated(groups, k, GroupingMode::Explicit)
    }

    fn validated(groups: Vec<Vec<usize>>, k: usize, mode: GroupingMode) -> Result<Self> {
        let mut seen = vec![false; k];
        for g in &groups {
            if g.is_empty() {
                return Err(CalibError::InvalidInput("empty class group".into()));
            }
            for &c in g {
                if c >= k {
                    return Err(CalibError::InvalidInput(format!("class {c} outside [0, {k})")));
                }
                if std::mem::replace(&mut seen[c], true) {
                    return Err(CalibError::InvalidInput(format!("class {c} appears in two groups")));
                }
            }
        }
        if let Some(c) = seen.iter().position(|s| !s) {
            return Err(CalibError::InvalidInput(format!("class {c} is not assigned to a group")));
        }
        Ok(Self { groups, mode })
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn mode(&self) -> GroupingMode {
        self.mode
    }

    pub fn n_classes(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    /// Group index for each class.
    pub fn class_to_group(&self) -> Vec<usize> {
        let mut map = vec![0; self.n_classes()];
        for (g, classes) in self.groups.iter().enumerate() {
            for &c in classes {
                map[c] = g;
            }
        }
        map
    }

    /// Re-check the partition invariant, e.g. after deserialization.
    pub fn validate(&self, k: usize) -> Result<()> {
        Self::validated(self.groups.clone(), k, self.mode).map(|_| ())
    }
}

/// Sort classes by empirical prior (ties by class index) and cut the list
/// into `n_groups` contiguous blocks of near-equal size.
pub fn group_by_prior<S: Scalar>(data: &PredictionMatrix<S>, n_groups: usize) -> Result<ClassGrouping> {
    let k = data.k();
    if n_groups == 0 || n_groups > k {
        return Err(CalibError::InvalidInput(format!(
            "n_groups must be in [1, {k}], got {n_groups}"
        )));
    }
    if n_groups == 1 {
        return Ok(ClassGrouping::one_for_all(k));
    }
    let priors = data.class_priors();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| priors[a].partial_cmp(&priors[b]).expect("finite priors").then(a.cmp(&b)));
    let groups = (0..n_groups)
        .map(|g| order[g * k / n_groups..(g + 1) * k / n_groups].to_vec())
        .collect();
    ClassGrouping::validated(groups, k, GroupingMode::ByPriorQuantile)
}
