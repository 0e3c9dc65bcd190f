//! Link posteriors from likelihood ratios.
//!
//! For a child `a` and a role, the posterior of candidate `m` is
//! `prior(m) * ratio(m) / sum_{m'} prior(m') * ratio(m')`, where the sum runs
//! over all candidates plus the null option. The null option's ratio is fixed
//! to 1, so its mass is driven by the prior alone.
//!
//! Ratios come either from per-component histograms (naive Bayes) or from a
//! probabilistic classifier output `s` as `s / (1 - s)`.

use serde::{Deserialize, Serialize};

use crate::collective::{ChildLinks, ParentAssignment};
use crate::error::{Error, Result};
use crate::features::{FeatureVector, NAIVE_BAYES_FEATURES};
use crate::records::{RecordIx, Role};

pub const CLASSIFIER_CLAMP: f64 = 1e-6;
pub const DEFAULT_NULL_PRIOR: f64 = 0.1;
pub const DEFAULT_BINS: usize = 32;
pub const DEFAULT_SMOOTHING: f64 = 1e-4;

/// A probability distribution over a child's candidates for one role.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkPosterior {
    pub child: RecordIx,
    pub role: Role,
    /// Candidates in ascending id order followed by the null entry (`None`).
    pub entries: Vec<(Option<RecordIx>, f64)>,
}

impl LinkPosterior {
    pub fn null_only(child: RecordIx, role: Role) -> Self {
        LinkPosterior {
            child,
            role,
            entries: vec![(None, 1.0)],
        }
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.1).sum()
    }

    pub fn probability(&self, cand: Option<RecordIx>) -> Option<f64> {
        self.entries.iter().find(|e| e.0 == cand).map(|e| e.1)
    }

    /// Highest-probability entry; ties go to the smallest id, and the null
    /// option ranks after every real candidate.
    pub fn argmax(&self) -> (Option<RecordIx>, f64) {
        let mut best = self.entries[0];
        for &e in &self.entries[1..] {
            if e.1 > best.1 || (e.1 == best.1 && id_key(e.0) < id_key(best.0)) {
                best = e;
            }
        }
        best
    }
}

/// Sort key used for every id tie-break: real ids ascending, null last.
#[inline]
pub fn id_key(c: Option<RecordIx>) -> u64 {
    c.map(|r| r.0 as u64).unwrap_or(u64::MAX)
}

/// Prior over a candidate set: `null_prior_mass` on the null option, the rest
/// split uniformly over the candidates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorModel {
    pub null_prior_mass: f64,
}

impl Default for PriorModel {
    fn default() -> Self {
        PriorModel {
            null_prior_mass: DEFAULT_NULL_PRIOR,
        }
    }
}

impl PriorModel {
    pub fn new(null_prior_mass: f64) -> Result<Self> {
        if !(null_prior_mass > 0.0 && null_prior_mass < 1.0) {
            return Err(Error::Config(format!(
                "null prior mass must lie in (0, 1), got {null_prior_mass}"
            )));
        }
        Ok(PriorModel { null_prior_mass })
    }

    /// Prior of a single real candidate in a set of `n`.
    pub fn candidate_prior(&self, n: usize) -> f64 {
        (1.0 - self.null_prior_mass) / n as f64
    }
}

pub fn binclass_ratio(s: f64) -> f64 {
    let s = s.clamp(CLASSIFIER_CLAMP, 1.0 - CLASSIFIER_CLAMP);
    s / (1.0 - s)
}

pub fn link_posterior(
    child: RecordIx,
    role: Role,
    candidates: &[RecordIx],
    ratios: &[f64],
    prior: &PriorModel,
) -> Result<LinkPosterior> {
    if candidates.len() != ratios.len() {
        return Err(Error::InvalidInput(format!(
            "{} candidates but {} ratios",
            candidates.len(),
            ratios.len()
        )));
    }
    if candidates.is_empty() {
        return Ok(LinkPosterior::null_only(child, role));
    }
    if let Some(r) = ratios.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
        return Err(Error::InvalidInput(format!(
            "likelihood ratio {r} is not a finite non-negative number"
        )));
    }
    let cp = prior.candidate_prior(candidates.len());
    let mut weights: Vec<f64> = ratios.iter().map(|r| cp * r).collect();
    weights.push(prior.null_prior_mass);
    let z: f64 = weights.iter().sum();
    let mut entries: Vec<(Option<RecordIx>, f64)> = candidates
        .iter()
        .zip(&weights)
        .map(|(&c, &w)| (Some(c), w / z))
        .collect();
    entries.push((None, prior.null_prior_mass / z));
    Ok(LinkPosterior { child, role, entries })
}

/// Per-child argmax for both roles; the objective is the sum of the log
/// probabilities of the chosen entries.
pub fn independent_map_assignment(posteriors: &[[LinkPosterior; 2]]) -> ParentAssignment {
    let links = posteriors
        .iter()
        .map(|[m, f]| {
            debug_assert_eq!(m.child, f.child);
            let (mother, pm) = m.argmax();
            let (father, pf) = f.argmax();
            ChildLinks {
                child: m.child,
                mother,
                father,
                log_prob: pm.ln() + pf.ln(),
            }
        })
        .collect();
    ParentAssignment::from_links(links, 0.0)
}

// ---------------------------------------------------------------------------
// Naive Bayes

/// Match and non-match histograms for one feature component, sharing bin edges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentHistogram {
    pub feature: usize,
    /// `bins + 1` ascending edges; values outside fall into the end bins.
    pub edges: Vec<f64>,
    /// Probability mass per bin; each sums to 1 and is bounded below by the smoothing floor.
    pub match_mass: Vec<f64>,
    pub nonmatch_mass: Vec<f64>,
}

impl ComponentHistogram {
    pub fn bin(&self, x: f64) -> usize {
        let bins = self.match_mass.len();
        // Edges are uniform over [lo, hi].
        let lo = self.edges[0];
        let hi = self.edges[bins];
        if !(hi > lo) {
            return 0;
        }
        let t = ((x - lo) / (hi - lo) * bins as f64).floor();
        if t.is_nan() || t < 0.0 {
            0
        } else {
            (t as usize).min(bins - 1)
        }
    }

    pub fn ratio(&self, x: f64) -> f64 {
        let b = self.bin(x);
        self.match_mass[b] / self.nonmatch_mass[b]
    }
}

/// Fitted per-component likelihoods for the naive Bayes ratio.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ComponentLikelihoods {
    pub components: Vec<ComponentHistogram>,
}

fn smoothed_mass(counts: &[f64], eps: f64) -> Vec<f64> {
    let total: f64 = counts.iter().sum();
    let denom = total + eps * counts.len() as f64;
    counts.iter().map(|c| (c + eps) / denom).collect()
}

impl ComponentLikelihoods {
    pub fn is_fitted(&self) -> bool {
        !self.components.is_empty()
    }

    /// Fits equal-width histograms over each naive Bayes component's observed
    /// range with additive smoothing `eps`.
    pub fn fit(examples: &[(FeatureVector, bool)], bins: usize, eps: f64) -> Result<Self> {
        Self::fit_components(examples, &NAIVE_BAYES_FEATURES, bins, eps)
    }

    pub fn fit_components(
        examples: &[(FeatureVector, bool)],
        features: &[usize],
        bins: usize,
        eps: f64,
    ) -> Result<Self> {
        if bins == 0 || eps <= 0.0 {
            return Err(Error::Config(
                "histograms need at least one bin and a positive smoothing".into(),
            ));
        }
        let has_pos = examples.iter().any(|e| e.1);
        let has_neg = examples.iter().any(|e| !e.1);
        if !(has_pos && has_neg) {
            return Err(Error::SingleClass);
        }
        let components = features
            .iter()
            .map(|&feature| {
                let (lo, hi) = examples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| {
                    (lo.min(e.0[feature]), hi.max(e.0[feature]))
                });
                let hi = if hi > lo { hi } else { lo + 1.0 };
                let edges: Vec<f64> = (0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect();
                let mut h = ComponentHistogram {
                    feature,
                    edges,
                    match_mass: vec![0.0; bins],
                    nonmatch_mass: vec![0.0; bins],
                };
                let mut pos = vec![0.0; bins];
                let mut neg = vec![0.0; bins];
                for (x, label) in examples {
                    let b = h.bin(x[feature]);
                    if *label {
                        pos[b] += 1.0;
                    } else {
                        neg[b] += 1.0;
                    }
                }
                h.match_mass = smoothed_mass(&pos, eps);
                h.nonmatch_mass = smoothed_mass(&neg, eps);
                h
            })
            .collect();
        Ok(ComponentLikelihoods { components })
    }
}

/// Product of per-component likelihood ratios.
pub fn naive_bayes_ratio(gamma: &FeatureVector, likelihoods: &ComponentLikelihoods) -> Result<f64> {
    if !likelihoods.is_fitted() {
        return Err(Error::Unfitted("naive Bayes likelihoods"));
    }
    Ok(likelihoods
        .components
        .iter()
        .map(|h| h.ratio(gamma[h.feature]))
        .product())
}
