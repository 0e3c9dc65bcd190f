//! Ground truth from an external hand-built network, the component-preserving
//! train/test split, and link-level metrics.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::collective::ParentAssignment;
use crate::error::{Error, Result};
use crate::records::{normalize_name, BirthTable, Date, NameDictionary, RecordIx, Role};

pub const NETWORK_COLUMNS: [&str; 8] = [
    "person_id",
    "first",
    "last",
    "birth_year",
    "birth_month",
    "birth_day",
    "mother_person_id",
    "father_person_id",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct GroundTruthLink {
    pub child: RecordIx,
    pub parent: RecordIx,
    pub role: Role,
    pub split: Split,
}

/// A person of the external network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExternalPerson {
    pub person_id: String,
    pub first: String,
    pub last: String,
    pub birth_date: Date,
    pub mother: Option<String>,
    pub father: Option<String>,
}

pub fn read_network(path: impl AsRef<Path>) -> Result<Vec<ExternalPerson>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let headers = rdr.headers()?.clone();
    let pos = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Schema(format!("{}: missing column `{name}`", path.display())))
    };
    let cols: Vec<usize> = NETWORK_COLUMNS.iter().map(|c| pos(c)).collect::<Result<_>>()?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let get = |i: usize| rec.get(cols[i]).map(str::trim).unwrap_or("");
        let num = |i: usize| -> Result<Option<i64>> {
            let s = get(i);
            if s.is_empty() {
                return Ok(None);
            }
            s.parse().map(Some).map_err(|_| {
                Error::Schema(format!(
                    "{}:{}: cannot parse `{s}` as a number",
                    path.display(),
                    rec.position().map(|p| p.line()).unwrap_or(0)
                ))
            })
        };
        let year = num(3)?.ok_or_else(|| Error::Schema(format!("{}: person without birth year", path.display())))?;
        let opt = |s: &str| (!s.is_empty()).then(|| s.to_string());
        out.push(ExternalPerson {
            person_id: get(0).to_string(),
            first: get(1).to_string(),
            last: get(2).to_string(),
            birth_date: Date {
                year: year as i32,
                month: num(4)?.map(|m| m as u8),
                day: num(5)?.map(|d| d as u8),
            },
            mother: opt(get(6)),
            father: opt(get(7)),
        });
    }
    Ok(out)
}

pub fn write_network(path: impl AsRef<Path>, persons: &[ExternalPerson]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(NETWORK_COLUMNS)?;
    let opt = |v: Option<u8>| v.map(|x| x.to_string()).unwrap_or_default();
    for p in persons {
        w.write_record([
            p.person_id.clone(),
            p.first.clone(),
            p.last.clone(),
            p.birth_date.year.to_string(),
            opt(p.birth_date.month),
            opt(p.birth_date.day),
            p.mother.clone().unwrap_or_default(),
            p.father.clone().unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, Default)]
pub struct GroundTruthMatch {
    pub person_to_record: HashMap<String, RecordIx>,
    pub ambiguous: usize,
    pub unmatched: usize,
}

impl GroundTruthMatch {
    pub fn matched(&self) -> usize {
        self.person_to_record.len()
    }

    pub fn match_rate(&self) -> f64 {
        let total = self.matched() + self.ambiguous + self.unmatched;
        if total == 0 {
            0.0
        } else {
            self.matched() as f64 / total as f64
        }
    }
}

/// A person matches iff exactly one birth record has the same normalized
/// first and last name and the same full birth date.
pub fn match_ground_truth(persons: &[ExternalPerson], births: &BirthTable, names: &NameDictionary) -> GroundTruthMatch {
    let mut by_key: HashMap<(&str, &str, Date), Vec<RecordIx>> = HashMap::new();
    for (ix, r) in births.iter() {
        if r.birth_date.is_full() && !r.norm_first.is_empty() {
            by_key
                .entry((&r.norm_first, &r.norm_last, r.birth_date))
                .or_default()
                .push(ix);
        }
    }
    let mut out = GroundTruthMatch::default();
    for p in persons {
        if !p.birth_date.is_full() {
            out.unmatched += 1;
            continue;
        }
        let first = normalize_name(&p.first, names);
        let first = first.split(' ').next().unwrap_or("").to_string();
        let last = normalize_name(&p.last, names);
        match by_key
            .get(&(first.as_str(), last.as_str(), p.birth_date))
            .map(Vec::as_slice)
        {
            Some([only]) => {
                out.person_to_record.insert(p.person_id.clone(), *only);
            }
            Some(_) => out.ambiguous += 1,
            None => out.unmatched += 1,
        }
    }
    out
}

/// Parent-child edges whose endpoints are both matched, before splitting.
pub fn ground_truth_edges(persons: &[ExternalPerson], matched: &GroundTruthMatch) -> Vec<(RecordIx, RecordIx, Role)> {
    let mut edges = Vec::new();
    for p in persons {
        let Some(&child) = matched.person_to_record.get(&p.person_id) else {
            continue;
        };
        for (role, parent) in [(Role::Mother, &p.mother), (Role::Father, &p.father)] {
            if let Some(&par) = parent.as_ref().and_then(|id| matched.person_to_record.get(id)) {
                edges.push((child, par, role));
            }
        }
    }
    edges.sort();
    edges.dedup();
    edges
}

/// Bucket for each component, given component sizes in descending order.
///
/// Components alternate between train and test starting with train; a
/// component goes to the other bucket when adding it would push the preferred
/// bucket past its target, and to whichever bucket overshoots less when both
/// would. Targets: `floor(train_fraction * total)` for train, the rest for test.
pub fn assign_buckets(sizes: &[usize], train_fraction: f64) -> Vec<Split> {
    let total: usize = sizes.iter().sum();
    let train_target = (train_fraction * total as f64).floor() as usize;
    let test_target = total - train_target;
    let (mut train, mut test) = (0usize, 0usize);
    let mut preferred = Split::Train;
    let mut out = Vec::with_capacity(sizes.len());
    for &s in sizes {
        let fits = |split: Split| match split {
            Split::Train => train + s <= train_target,
            Split::Test => test + s <= test_target,
        };
        let other = match preferred {
            Split::Train => Split::Test,
            Split::Test => Split::Train,
        };
        let chosen = if fits(preferred) {
            preferred
        } else if fits(other) {
            other
        } else {
            let over_train = (train + s) as f64 - train_target as f64;
            let over_test = (test + s) as f64 - test_target as f64;
            if over_train <= over_test {
                Split::Train
            } else {
                Split::Test
            }
        };
        match chosen {
            Split::Train => train += s,
            Split::Test => test += s,
        }
        out.push(chosen);
        preferred = match chosen {
            Split::Train => Split::Test,
            Split::Test => Split::Train,
        };
    }
    out
}

/// Splits ground-truth edges by connected component of the link graph so that
/// no edge crosses buckets. Components are ordered by node count (descending,
/// ties by smallest record) and assigned with [`assign_buckets`].
pub fn split_train_test(edges: &[(RecordIx, RecordIx, Role)], train_fraction: f64) -> Vec<GroundTruthLink> {
    let mut node_ids: BTreeMap<RecordIx, usize> = BTreeMap::new();
    for &(c, p, _) in edges {
        let n = node_ids.len();
        node_ids.entry(c).or_insert(n);
        let n = node_ids.len();
        node_ids.entry(p).or_insert(n);
    }
    let n = node_ids.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &(c, p, _) in edges {
        let (a, b) = (find(&mut parent, node_ids[&c]), find(&mut parent, node_ids[&p]));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    // Component -> (size, smallest record).
    let mut comps: HashMap<usize, (usize, RecordIx)> = HashMap::new();
    for (&rec, &i) in &node_ids {
        let root = find(&mut parent, i);
        let e = comps.entry(root).or_insert((0, rec));
        e.0 += 1;
        e.1 = e.1.min(rec);
    }
    let mut order: Vec<(usize, RecordIx, usize)> = comps.into_iter().map(|(root, (s, r))| (s, r, root)).collect();
    order.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let sizes: Vec<usize> = order.iter().map(|o| o.0).collect();
    let buckets = assign_buckets(&sizes, train_fraction);
    let bucket_of: HashMap<usize, Split> = order.iter().zip(&buckets).map(|(o, &b)| (o.2, b)).collect();
    edges
        .iter()
        .map(|&(child, par, role)| GroundTruthLink {
            child,
            parent: par,
            role,
            split: bucket_of[&find(&mut parent, node_ids[&child])],
        })
        .collect()
}

pub fn write_ground_truth(path: impl AsRef<Path>, births: &BirthTable, links: &[GroundTruthLink]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["child_id", "parent_id", "role", "split"])?;
    for l in links {
        w.write_record([
            births.id(l.child),
            births.id(l.parent),
            l.role.as_str(),
            l.split.as_str(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Metrics

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Accuracy {
    pub overall: f64,
    pub mother: f64,
    pub father: f64,
    pub links: usize,
    pub correct: usize,
    pub mother_links: usize,
    pub father_links: usize,
}

fn frac(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Fraction of ground-truth links whose predicted parent equals the true
/// parent. A null prediction, or a child the prediction does not cover,
/// counts as incorrect.
pub fn link_accuracy(pred: &ParentAssignment, links: &[GroundTruthLink]) -> Accuracy {
    let (mut cm, mut nm, mut cf, mut nf) = (0, 0, 0, 0);
    for l in links {
        let ok = pred.parent(l.child, l.role) == Some(Some(l.parent));
        match l.role {
            Role::Mother => {
                nm += 1;
                cm += ok as usize;
            }
            Role::Father => {
                nf += 1;
                cf += ok as usize;
            }
        }
    }
    Accuracy {
        overall: frac(cm + cf, nm + nf),
        mother: frac(cm, nm),
        father: frac(cf, nf),
        links: nm + nf,
        correct: cm + cf,
        mother_links: nm,
        father_links: nf,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CalibrationBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub mean_prob: Option<f64>,
    pub accuracy: Option<f64>,
}

pub fn uniform_edges(bins: usize) -> Vec<f64> {
    (0..=bins).map(|i| i as f64 / bins as f64).collect()
}

/// Buckets links by probability (`[lo, hi)`, the last bin closed) and
/// reports per-bin mean probability and empirical accuracy.
pub fn calibration_bins(probs: &[f64], correct: &[bool], edges: &[f64]) -> Result<Vec<CalibrationBin>> {
    if probs.len() != correct.len() {
        return Err(Error::InvalidInput(
            "probabilities and outcomes differ in length".into(),
        ));
    }
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidInput("bin edges must be strictly increasing".into()));
    }
    let nb = edges.len() - 1;
    let mut sum_p = vec![0.0; nb];
    let mut hits = vec![0usize; nb];
    let mut count = vec![0usize; nb];
    for (&p, &ok) in probs.iter().zip(correct) {
        if p < edges[0] || p > edges[nb] {
            continue;
        }
        let b = edges.partition_point(|&e| e <= p).saturating_sub(1).min(nb - 1);
        sum_p[b] += p;
        hits[b] += ok as usize;
        count[b] += 1;
    }
    Ok((0..nb)
        .map(|b| CalibrationBin {
            lo: edges[b],
            hi: edges[b + 1],
            count: count[b],
            mean_prob: (count[b] > 0).then(|| sum_p[b] / count[b] as f64),
            accuracy: (count[b] > 0).then(|| hits[b] as f64 / count[b] as f64),
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RecallPoint {
    pub threshold: f64,
    pub mother_links: usize,
    pub father_links: usize,
}

/// Number of inferred links with probability at or above each threshold.
pub fn recall_curve(links: &[(Role, f64)], thresholds: &[f64]) -> Vec<RecallPoint> {
    let mut m: Vec<f64> = links.iter().filter(|l| l.0 == Role::Mother).map(|l| l.1).collect();
    let mut f: Vec<f64> = links.iter().filter(|l| l.0 == Role::Father).map(|l| l.1).collect();
    m.sort_by(f64::total_cmp);
    f.sort_by(f64::total_cmp);
    let above = |v: &[f64], t: f64| v.len() - v.partition_point(|&p| p < t);
    thresholds
        .iter()
        .map(|&t| RecallPoint {
            threshold: t,
            mother_links: above(&m, t),
            father_links: above(&f, t),
        })
        .collect()
}
