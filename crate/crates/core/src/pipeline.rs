//! End-to-end linking: candidate generation, naive Bayes, the binary
//! classifier and the four link methods, plus the file formats that connect
//! the CLI stages.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::{build_index, generate_all, CandidateIndex, CandidateSet, DEFAULT_CANDIDATE_CAP};
use crate::collective::{greedy_collective_partitioned, ChildLinks, CollectiveInstance, ParentAssignment};
use crate::error::{Error, Result};
use crate::evaluation::{GroundTruthLink, Split};
use crate::features::{compute_features, match_death_records, DeathLinkTable, FeatureVector, FEATURE_NAMES};
use crate::homogamy::{ChildParents, ScoredLink};
use crate::learner::{build_training_set, train, Classifier, TrainConfig, TrainingExample, DEFAULT_MAX_NEGATIVES};
use crate::probmodel::{
    binclass_ratio, independent_map_assignment, link_posterior, naive_bayes_ratio, ComponentLikelihoods, LinkPosterior,
    PriorModel, DEFAULT_BINS, DEFAULT_SMOOTHING,
};
use crate::records::{BirthRecord, BirthTable, DeathRecord, RecordIx, Role};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Everything derived from the records before any model is involved.
pub struct Dataset {
    pub births: BirthTable,
    pub deaths: Vec<DeathRecord>,
    pub death_links: DeathLinkTable,
    pub index: CandidateIndex,
    /// Indexed by child, then by role slot.
    pub candidates: Vec<[CandidateSet; 2]>,
}

impl Dataset {
    pub fn new(births: Vec<BirthRecord>, deaths: Vec<DeathRecord>, cap: usize) -> Result<Self> {
        let births = BirthTable::new(births)?;
        let death_links = match_death_records(&births, &deaths);
        let index = build_index(&births);
        let candidates = generate_all(&births, &index, cap);
        Ok(Dataset {
            births,
            deaths,
            death_links,
            index,
            candidates,
        })
    }

    pub fn with_default_cap(births: Vec<BirthRecord>, deaths: Vec<DeathRecord>) -> Result<Self> {
        Self::new(births, deaths, DEFAULT_CANDIDATE_CAP)
    }

    pub fn candidate_set(&self, child: RecordIx, role: Role) -> &CandidateSet {
        &self.candidates[child.get()][role.slot()]
    }

    pub fn features(&self, child: RecordIx, candidate: RecordIx, role: Role, nb_prob: f64) -> FeatureVector {
        compute_features(&self.births, &self.death_links, child, candidate, role, nb_prob)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub max_negatives: usize,
    pub seed: u64,
    pub bins: usize,
    pub smoothing: f64,
    pub null_prior: f64,
    pub classifier: TrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            max_negatives: DEFAULT_MAX_NEGATIVES,
            seed: 0,
            bins: DEFAULT_BINS,
            smoothing: DEFAULT_SMOOTHING,
            null_prior: crate::probmodel::DEFAULT_NULL_PRIOR,
            classifier: TrainConfig::default(),
        }
    }
}

/// The fitted models, serialized as versioned JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkModel {
    pub version: u32,
    pub naive_bayes: ComponentLikelihoods,
    pub classifier: Classifier,
    pub prior: PriorModel,
    pub feature_names: Vec<String>,
}

impl LinkModel {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let v: serde_json::Value = serde_json::from_str(&text)?;
        match v.get("version").and_then(|x| x.as_u64()) {
            Some(ver) if ver == MODEL_FORMAT_VERSION as u64 => {}
            Some(ver) => return Err(Error::ModelVersion(ver as u32)),
            None => return Err(Error::Schema(format!("{}: model file has no version", path.display()))),
        }
        Ok(serde_json::from_value(v)?)
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct TrainReport {
    pub positives: usize,
    pub negatives: usize,
    pub blocking_misses: usize,
    pub training_loss: Vec<f64>,
}

/// Posteriors for both roles of every child, indexed by child.
pub type Posteriors = Vec<[LinkPosterior; 2]>;

fn posteriors_with<F>(data: &Dataset, prior: &PriorModel, ratio: F) -> Result<Posteriors>
where
    F: Fn(RecordIx, RecordIx, Role) -> Result<f64> + Sync,
{
    data.candidates
        .par_iter()
        .map(|sets| {
            let one = |set: &CandidateSet| -> Result<LinkPosterior> {
                let ratios = set
                    .candidates
                    .iter()
                    .map(|&c| ratio(set.child, c, set.role))
                    .collect::<Result<Vec<f64>>>()?;
                link_posterior(set.child, set.role, &set.candidates, &ratios, prior)
            };
            Ok([one(&sets[0])?, one(&sets[1])?])
        })
        .collect()
}

pub fn naive_bayes_posteriors(data: &Dataset, nb: &ComponentLikelihoods, prior: &PriorModel) -> Result<Posteriors> {
    posteriors_with(data, prior, |child, cand, role| {
        naive_bayes_ratio(&data.features(child, cand, role, 0.0), nb)
    })
}

fn nb_prob(nb_post: &Posteriors, child: RecordIx, cand: RecordIx, role: Role) -> f64 {
    nb_post[child.get()][role.slot()].probability(Some(cand)).unwrap_or(0.0)
}

pub fn binclass_posteriors(data: &Dataset, model: &LinkModel, nb_post: &Posteriors) -> Result<Posteriors> {
    posteriors_with(data, &model.prior, |child, cand, role| {
        let f = data.features(child, cand, role, nb_prob(nb_post, child, cand, role));
        Ok(binclass_ratio(model.classifier.predict_proba(f.as_slice())?))
    })
}

/// Fits naive Bayes on the training links, then the classifier on features
/// that include the naive Bayes posterior.
pub fn train_link_model(
    data: &Dataset,
    links: &[GroundTruthLink],
    config: &PipelineConfig,
) -> Result<(LinkModel, TrainReport)> {
    let prior = PriorModel::new(config.null_prior)?;
    let plain = build_training_set(links, &data.candidates, config.max_negatives, config.seed, |c, p, r| {
        data.features(c, p, r, 0.0)
    });
    let nb_examples: Vec<(FeatureVector, bool)> = plain.examples.iter().map(|e| (e.features, e.label)).collect();
    let naive_bayes = ComponentLikelihoods::fit(&nb_examples, config.bins, config.smoothing)?;
    let nb_post = naive_bayes_posteriors(data, &naive_bayes, &prior)?;
    let examples: Vec<TrainingExample> = plain
        .examples
        .par_iter()
        .map(|e| {
            let mut e = e.clone();
            e.features[crate::features::NAIVE_BAYES_PROB] = nb_prob(&nb_post, e.child, e.candidate, e.role);
            e
        })
        .collect();
    let classifier = train(&examples, &config.classifier)?;
    let report = TrainReport {
        positives: plain.positives,
        negatives: plain.negatives,
        blocking_misses: plain.blocking_misses,
        training_loss: classifier.training_loss.clone(),
    };
    Ok((
        LinkModel {
            version: MODEL_FORMAT_VERSION,
            naive_bayes,
            classifier,
            prior,
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        },
        report,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    RandomCand,
    NaiveBayes,
    BinClass,
    Collective,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::RandomCand,
        Method::NaiveBayes,
        Method::BinClass,
        Method::Collective,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::RandomCand => "randomcand",
            Method::NaiveBayes => "naivebayes",
            Method::BinClass => "binclass",
            Method::Collective => "collective",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

/// A link method's output: the assignment and, per child and role, the
/// probability reported for the chosen parent (if the method has one).
#[derive(Clone, Debug)]
pub struct LinkOutput {
    pub method: Method,
    pub assignment: ParentAssignment,
    pub probabilities: Vec<[Option<f64>; 2]>,
}

/// Uniform pick among each child's candidates; null only when there are none.
pub fn random_candidate_assignment(data: &Dataset, seed: u64) -> ParentAssignment {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let links = data
        .candidates
        .iter()
        .map(|[m, f]| {
            let mut pick = |s: &CandidateSet| -> Option<RecordIx> {
                (!s.is_empty()).then(|| s.candidates[rng.gen_range(0..s.len())])
            };
            let mother = pick(m);
            let father = pick(f);
            ChildLinks {
                child: m.child,
                mother,
                father,
                log_prob: 0.0,
            }
        })
        .collect();
    ParentAssignment::from_links(links, 0.0)
}

fn chosen_probabilities(assignment: &ParentAssignment, post: &Posteriors, only_map: bool) -> Vec<[Option<f64>; 2]> {
    assignment
        .links
        .iter()
        .map(|l| {
            let p = &post[l.child.get()];
            let one = |role: Role| {
                let chosen = l.parent(role)?;
                let posterior = &p[role.slot()];
                if only_map && posterior.argmax().0 != Some(chosen) {
                    return None;
                }
                posterior.probability(Some(chosen))
            };
            [one(Role::Mother), one(Role::Father)]
        })
        .collect()
}

/// Runs one link method. `binclass` posteriors are needed by the binclass and
/// collective methods, `naive_bayes` by the naive Bayes method.
pub fn run_method(
    data: &Dataset,
    method: Method,
    naive_bayes: Option<&Posteriors>,
    binclass: Option<&Posteriors>,
    lambda: f64,
    seed: u64,
) -> Result<LinkOutput> {
    let (assignment, probabilities) = match method {
        Method::RandomCand => {
            let a = random_candidate_assignment(data, seed);
            let n = a.links.len();
            (a, vec![[None, None]; n])
        }
        Method::NaiveBayes => {
            let post = naive_bayes.ok_or(Error::Unfitted("naive Bayes posteriors"))?;
            let a = independent_map_assignment(post);
            let p = chosen_probabilities(&a, post, false);
            (a, p)
        }
        Method::BinClass => {
            let post = binclass.ok_or(Error::Unfitted("binclass posteriors"))?;
            let a = independent_map_assignment(post);
            let p = chosen_probabilities(&a, post, false);
            (a, p)
        }
        Method::Collective => {
            let post = binclass.ok_or(Error::Unfitted("binclass posteriors"))?;
            let instance = CollectiveInstance::from_posteriors(post, lambda)?;
            let a = greedy_collective_partitioned(&instance);
            let p = chosen_probabilities(&a, post, true);
            (a, p)
        }
    };
    Ok(LinkOutput {
        method,
        assignment,
        probabilities,
    })
}

pub const EDGE_COLUMNS: [&str; 5] = ["child_id", "parent_id", "role", "probability", "method"];

/// Non-null links only, by child id then role (mother first).
pub fn write_edges<W: Write>(out: W, births: &BirthTable, output: &LinkOutput) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(EDGE_COLUMNS)?;
    for (l, probs) in output.assignment.links.iter().zip(&output.probabilities) {
        for role in Role::BOTH {
            if let Some(p) = l.parent(role) {
                w.write_record([
                    births.id(l.child),
                    births.id(p),
                    role.as_str(),
                    &probs[role.slot()].map(|x| format!("{x:.9}")).unwrap_or_default(),
                    output.method.as_str(),
                ])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io("<edges output>", e))
}

pub fn write_edges_file(path: impl AsRef<Path>, births: &BirthTable, output: &LinkOutput) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_edges(BufWriter::new(f), births, output)
}

/// One edge as read back from an edge file.
#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub child: RecordIx,
    pub parent: RecordIx,
    pub role: Role,
    pub probability: Option<f64>,
}

pub fn read_edges(path: impl AsRef<Path>, births: &BirthTable) -> Result<Vec<Edge>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(f);
    let headers = rdr.headers()?.clone();
    if headers.iter().take(4).collect::<Vec<_>>() != EDGE_COLUMNS[..4] {
        return Err(Error::Schema(format!(
            "{}: edge header must start with `{}`",
            path.display(),
            EDGE_COLUMNS[..4].join(",")
        )));
    }
    let lookup = |id: &str| births.ix(id).ok_or_else(|| Error::UnknownId(id.to_string()));
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let prob = rec[3].trim();
        out.push(Edge {
            child: lookup(&rec[0])?,
            parent: lookup(&rec[1])?,
            role: rec[2].parse()?,
            probability: if prob.is_empty() {
                None
            } else {
                Some(
                    prob.parse()
                        .map_err(|_| Error::Schema(format!("bad probability `{prob}`")))?,
                )
            },
        });
    }
    Ok(out)
}

/// Rebuilds an assignment (objective not meaningful) from edges.
pub fn assignment_from_edges(edges: &[Edge]) -> ParentAssignment {
    let mut by_child: HashMap<RecordIx, ChildLinks> = HashMap::new();
    for e in edges {
        let l = by_child.entry(e.child).or_insert(ChildLinks {
            child: e.child,
            mother: None,
            father: None,
            log_prob: 0.0,
        });
        match e.role {
            Role::Mother => l.mother = Some(e.parent),
            Role::Father => l.father = Some(e.parent),
        }
    }
    ParentAssignment::from_links(by_child.into_values().collect(), 0.0)
}

pub fn child_parents_from_edges(edges: &[Edge]) -> Vec<ChildParents> {
    let mut by_child: HashMap<RecordIx, ChildParents> = HashMap::new();
    for e in edges {
        let c = by_child.entry(e.child).or_insert(ChildParents {
            child: e.child,
            mother: None,
            father: None,
        });
        let link = Some(ScoredLink {
            parent: e.parent,
            probability: e.probability,
        });
        match e.role {
            Role::Mother => c.mother = link,
            Role::Father => c.father = link,
        }
    }
    let mut out: Vec<ChildParents> = by_child.into_values().collect();
    out.sort_by_key(|c| c.child);
    out
}

pub fn child_parents_from_output(output: &LinkOutput) -> Vec<ChildParents> {
    output
        .assignment
        .links
        .iter()
        .zip(&output.probabilities)
        .map(|(l, p)| ChildParents {
            child: l.child,
            mother: l.mother.map(|m| ScoredLink {
                parent: m,
                probability: p[0],
            }),
            father: l.father.map(|f| ScoredLink {
                parent: f,
                probability: p[1],
            }),
        })
        .collect()
}

pub const POSTERIOR_COLUMNS: [&str; 4] = ["child_id", "role", "candidate_id", "probability"];

/// Every posterior entry; the null option has an empty candidate id.
pub fn write_posteriors(path: impl AsRef<Path>, births: &BirthTable, post: &Posteriors) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(f));
    w.write_record(POSTERIOR_COLUMNS)?;
    for pair in post {
        for p in pair {
            for &(c, pr) in &p.entries {
                w.write_record([
                    births.id(p.child),
                    p.role.as_str(),
                    c.map(|c| births.id(c)).unwrap_or(""),
                    &format!("{pr:.12e}"),
                ])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads posteriors written by [`write_posteriors`] back into per-child
/// order. Children without rows get null-only posteriors.
pub fn read_posteriors(path: impl AsRef<Path>, births: &BirthTable) -> Result<Posteriors> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(f);
    if rdr.headers()?.iter().collect::<Vec<_>>() != POSTERIOR_COLUMNS {
        return Err(Error::Schema(format!(
            "{}: posterior header must be `{}`",
            path.display(),
            POSTERIOR_COLUMNS.join(",")
        )));
    }
    let mut out: Posteriors = (0..births.len() as u32)
        .map(|i| {
            let c = RecordIx(i);
            [
                LinkPosterior {
                    child: c,
                    role: Role::Mother,
                    entries: Vec::new(),
                },
                LinkPosterior {
                    child: c,
                    role: Role::Father,
                    entries: Vec::new(),
                },
            ]
        })
        .collect();
    for rec in rdr.records() {
        let rec = rec?;
        let child = births.ix(&rec[0]).ok_or_else(|| Error::UnknownId(rec[0].to_string()))?;
        let role: Role = rec[1].parse()?;
        let cand = if rec[2].is_empty() {
            None
        } else {
            Some(births.ix(&rec[2]).ok_or_else(|| Error::UnknownId(rec[2].to_string()))?)
        };
        let p: f64 = rec[3]
            .parse()
            .map_err(|_| Error::Schema(format!("bad probability `{}`", &rec[3])))?;
        out[child.get()][role.slot()].entries.push((cand, p));
    }
    for pair in &mut out {
        for p in pair.iter_mut() {
            if p.entries.is_empty() {
                p.entries.push((None, 1.0));
            }
            p.entries.sort_by_key(|e| crate::probmodel::id_key(e.0));
        }
    }
    Ok(out)
}

/// Feature dump for inspection or external training: 20 named columns plus
/// the example identity and label.
pub fn write_training_set(path: impl AsRef<Path>, births: &BirthTable, examples: &[TrainingExample]) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(f));
    let mut header: Vec<&str> = FEATURE_NAMES.to_vec();
    header.extend(["child_id", "candidate_id", "role", "label"]);
    w.write_record(&header)?;
    for e in examples {
        let mut row: Vec<String> = e.features.as_slice().iter().map(|v| format!("{v}")).collect();
        row.push(births.id(e.child).to_string());
        row.push(births.id(e.candidate).to_string());
        row.push(e.role.as_str().to_string());
        row.push(if e.label { "1" } else { "0" }.to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_ground_truth(path: impl AsRef<Path>, births: &BirthTable) -> Result<Vec<GroundTruthLink>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(f);
    if rdr.headers()?.iter().collect::<Vec<_>>() != ["child_id", "parent_id", "role", "split"] {
        return Err(Error::Schema(format!(
            "{}: ground truth header must be `child_id,parent_id,role,split`",
            path.display()
        )));
    }
    let lookup = |id: &str| births.ix(id).ok_or_else(|| Error::UnknownId(id.to_string()));
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        out.push(GroundTruthLink {
            child: lookup(&rec[0])?,
            parent: lookup(&rec[1])?,
            role: rec[2].parse()?,
            split: match &rec[3] {
                "train" => Split::Train,
                "test" => Split::Test,
                other => return Err(Error::Schema(format!("unknown split `{other}`"))),
            },
        });
    }
    Ok(out)
}

/// Posteriors restricted to children that appear in `links`.
pub fn restrict_to_children(post: &Posteriors, links: &[GroundTruthLink]) -> Posteriors {
    let mut children: Vec<RecordIx> = links.iter().map(|l| l.child).collect();
    children.sort();
    children.dedup();
    children.iter().map(|c| post[c.get()].clone()).collect()
}
