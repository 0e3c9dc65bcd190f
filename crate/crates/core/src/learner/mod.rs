//! Binary match/non-match classifier over similarity vectors.

pub mod gbt;
pub mod logistic;

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::CandidateSet;
use crate::error::{Error, Result};
use crate::evaluation::{GroundTruthLink, Split};
use crate::features::FeatureVector;
use crate::records::{RecordIx, Role};

pub use gbt::{GbtModel, GbtParams};
pub use logistic::{sigmoid, LogisticModel, LogisticParams};

pub const DEFAULT_MAX_NEGATIVES: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingExample {
    pub features: FeatureVector,
    pub label: bool,
    pub child: RecordIx,
    pub candidate: RecordIx,
    pub role: Role,
}

#[derive(Clone, Debug, Default)]
pub struct TrainingSet {
    pub examples: Vec<TrainingExample>,
    pub positives: usize,
    pub negatives: usize,
    /// Training links whose true parent is not among the candidates.
    pub blocking_misses: usize,
}

/// One positive per training link plus at most `max_negatives` other
/// candidates of the same child and role, sampled with `seed`.
pub fn build_training_set<F>(
    links: &[GroundTruthLink],
    sets: &[[CandidateSet; 2]],
    max_negatives: usize,
    seed: u64,
    features: F,
) -> TrainingSet
where
    F: Fn(RecordIx, RecordIx, Role) -> FeatureVector + Sync,
{
    let mut train: Vec<&GroundTruthLink> = links.iter().filter(|l| l.split == Split::Train).collect();
    train.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs: Vec<(RecordIx, RecordIx, Role, bool)> = Vec::new();
    let mut out = TrainingSet::default();
    for link in train {
        let set = &sets[link.child.get()][link.role.slot()];
        if !set.contains(link.parent) {
            out.blocking_misses += 1;
            continue;
        }
        pairs.push((link.child, link.parent, link.role, true));
        out.positives += 1;
        let mut negs: Vec<RecordIx> = set.candidates.iter().copied().filter(|&c| c != link.parent).collect();
        if negs.len() > max_negatives {
            let (chosen, _) = negs.partial_shuffle(&mut rng, max_negatives);
            let mut chosen = chosen.to_vec();
            chosen.sort();
            negs = chosen;
        }
        out.negatives += negs.len();
        pairs.extend(negs.into_iter().map(|c| (link.child, c, link.role, false)));
    }
    out.examples = pairs
        .into_par_iter()
        .map(|(child, candidate, role, label)| TrainingExample {
            features: features(child, candidate, role),
            label,
            child,
            candidate,
            role,
        })
        .collect();
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Logistic,
    Gbt,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(ModelKind::Logistic),
            "gbt" => Ok(ModelKind::Gbt),
            other => Err(Error::Config(format!("unknown model kind `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub kind: ModelKind,
    pub seed: u64,
    pub logistic: LogisticParams,
    pub gbt: GbtParams,
    /// Fit a Platt calibrator on a seeded 20% holdout.
    pub calibrate: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            kind: ModelKind::Gbt,
            seed: 0,
            logistic: LogisticParams::default(),
            gbt: GbtParams::default(),
            calibrate: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FittedModel {
    Logistic(LogisticModel),
    Gbt(GbtModel),
}

/// `p = sigmoid(a * logit(s) + b)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlattScaling {
    pub a: f64,
    pub b: f64,
}

impl PlattScaling {
    pub fn apply(&self, s: f64) -> f64 {
        sigmoid(self.a * logit(s) + self.b)
    }
}

fn logit(s: f64) -> f64 {
    let s = s.clamp(1e-12, 1.0 - 1e-12);
    (s / (1.0 - s)).ln()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    pub n_features: usize,
    pub model: FittedModel,
    pub calibration: Option<PlattScaling>,
    pub config: TrainConfig,
    /// Training loss per iteration (Newton step or boosting round).
    pub training_loss: Vec<f64>,
}

impl Classifier {
    /// Logistic classifier with fixed raw-feature weights.
    pub fn logistic(bias: f64, weights: Vec<f64>) -> Self {
        Classifier {
            n_features: weights.len(),
            model: FittedModel::Logistic(LogisticModel::from_weights(bias, weights)),
            calibration: None,
            config: TrainConfig {
                kind: ModelKind::Logistic,
                ..TrainConfig::default()
            },
            training_loss: Vec::new(),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self.model {
            FittedModel::Logistic(_) => ModelKind::Logistic,
            FittedModel::Gbt(_) => ModelKind::Gbt,
        }
    }

    fn raw(&self, x: &[f64]) -> f64 {
        match &self.model {
            FittedModel::Logistic(m) => m.predict(x),
            FittedModel::Gbt(m) => m.predict(x),
        }
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::FeatureWidth {
                expected: self.n_features,
                got: x.len(),
            });
        }
        let s = self.raw(x);
        Ok(match &self.calibration {
            Some(c) => c.apply(s),
            None => s,
        })
    }

    pub fn predict_many(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        rows.par_iter().map(|r| self.predict_proba(r)).collect()
    }
}

fn check_training_data(x: &[Vec<f64>], y: &[bool]) -> Result<usize> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "{} feature rows but {} labels",
            x.len(),
            y.len()
        )));
    }
    let d = x.first().map(Vec::len).unwrap_or(0);
    if let Some(bad) = x.iter().find(|r| r.len() != d) {
        return Err(Error::FeatureWidth {
            expected: d,
            got: bad.len(),
        });
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite feature value".into()));
    }
    let pos = y.iter().filter(|&&t| t).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::SingleClass);
    }
    Ok(d)
}

fn fit_model(x: &[Vec<f64>], y: &[bool], config: &TrainConfig) -> Result<(FittedModel, Vec<f64>)> {
    Ok(match config.kind {
        ModelKind::Logistic => {
            let (m, log) = logistic::fit(x, y, &config.logistic)?;
            (FittedModel::Logistic(m), log)
        }
        ModelKind::Gbt => {
            let (m, log) = gbt::fit(x, y, &config.gbt);
            (FittedModel::Gbt(m), log)
        }
    })
}

/// Trains on raw feature rows.
pub fn train_rows(x: &[Vec<f64>], y: &[bool], config: &TrainConfig) -> Result<Classifier> {
    let d = check_training_data(x, y)?;
    if !config.calibrate {
        let (model, log) = fit_model(x, y, config)?;
        return Ok(Classifier {
            n_features: d,
            model,
            calibration: None,
            config: *config,
            training_loss: log,
        });
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    let n_hold = (x.len() / 5).max(1);
    let (hold, fit_ix) = order.split_at(n_hold);
    let pick = |ix: &[usize]| -> (Vec<Vec<f64>>, Vec<bool>) {
        (
            ix.iter().map(|&i| x[i].clone()).collect(),
            ix.iter().map(|&i| y[i]).collect(),
        )
    };
    let (xf, yf) = pick(fit_ix);
    let (xh, yh) = pick(hold);
    check_training_data(&xf, &yf)?;
    let (model, log) = fit_model(&xf, &yf, config)?;
    let mut clf = Classifier {
        n_features: d,
        model,
        calibration: None,
        config: *config,
        training_loss: log,
    };
    let scores: Vec<Vec<f64>> = xh.iter().map(|r| vec![logit(clf.raw(r))]).collect();
    let platt = if yh.iter().any(|&t| t) && yh.iter().any(|&t| !t) {
        let (m, _) = logistic::fit(
            &scores,
            &yh,
            &LogisticParams {
                l2: 0.0,
                ..LogisticParams::default()
            },
        )?;
        // Undo the internal standardization of the single input.
        let a = m.weights[0] / m.scales[0];
        PlattScaling {
            a,
            b: m.bias - a * m.means[0],
        }
    } else {
        PlattScaling { a: 1.0, b: 0.0 }
    };
    clf.calibration = Some(platt);
    Ok(clf)
}

pub fn train(examples: &[TrainingExample], config: &TrainConfig) -> Result<Classifier> {
    let x: Vec<Vec<f64>> = examples.iter().map(|e| e.features.as_slice().to_vec()).collect();
    let y: Vec<bool> = examples.iter().map(|e| e.label).collect();
    train_rows(&x, &y, config)
}

/// Mean squared difference between predicted probability and outcome.
pub fn brier_score(predictions: &[f64], labels: &[bool]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::InvalidInput("Brier score of an empty set".into()));
    }
    if predictions.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} predictions but {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    Ok(predictions
        .iter()
        .zip(labels)
        .map(|(&s, &t)| (s - if t { 1.0 } else { 0.0 }).powi(2))
        .sum::<f64>()
        / predictions.len() as f64)
}

/// Area under the ROC curve (ties count one half). `None` without both classes.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let mut v: Vec<(f64, bool)> = scores.iter().copied().zip(labels.iter().copied()).collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n_pos = v.iter().filter(|p| p.1).count() as f64;
    let n_neg = v.len() as f64 - n_pos;
    if n_pos == 0.0 || n_neg == 0.0 {
        return None;
    }
    // Sum of midranks of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < v.len() {
        let mut j = i;
        while j < v.len() && v[j].0 == v[i].0 {
            j += 1;
        }
        let mid = (i + j + 1) as f64 / 2.0;
        rank_sum += mid * v[i..j].iter().filter(|p| p.1).count() as f64;
        i = j;
    }
    Some((rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg))
}

/// Training examples per child, useful for inspecting negative sampling.
pub fn examples_by_child(examples: &[TrainingExample]) -> HashMap<(RecordIx, Role), Vec<&TrainingExample>> {
    let mut map: HashMap<(RecordIx, Role), Vec<&TrainingExample>> = HashMap::new();
    for e in examples {
        map.entry((e.child, e.role)).or_default().push(e);
    }
    map
}
