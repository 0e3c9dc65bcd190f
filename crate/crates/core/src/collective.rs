//! Collective parent assignment.
//!
//! Maximizes the summed link log-probabilities minus `lambda` times the number
//! of distinct (mother, father) pairs in use. This is an uncapacitated
//! facility-location problem: parent pairs are facilities, children are
//! demand sites and `lambda` is the opening cost.
//!
//! Conventions shared by every solver here:
//! - a pair with a null side never counts as opened and pays no penalty;
//! - ties go to the lexicographically smallest (mother, father) with null
//!   ranked after every real id, and children with equal sort scores are
//!   processed in id order.

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evaluation::{link_accuracy, GroundTruthLink};
use crate::probmodel::{id_key, LinkPosterior};
use crate::records::{RecordIx, Role};

pub const BRUTE_FORCE_LIMIT: u128 = 1_000_000;

/// Tolerance for "strictly better" in the exhaustive search, so that
/// summation-order rounding does not override the tie-break.
const IMPROVEMENT_EPS: f64 = 1e-12;

/// The parents chosen for one child.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ChildLinks {
    pub child: RecordIx,
    pub mother: Option<RecordIx>,
    pub father: Option<RecordIx>,
    /// Log-probability of the chosen mother plus that of the chosen father.
    pub log_prob: f64,
}

impl ChildLinks {
    pub fn parent(&self, role: Role) -> Option<RecordIx> {
        match role {
            Role::Mother => self.mother,
            Role::Father => self.father,
        }
    }

    pub fn pair(&self) -> Option<(RecordIx, RecordIx)> {
        Some((self.mother?, self.father?))
    }
}

/// An inferred network: one (mother, father) choice per child.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParentAssignment {
    /// Sorted by child.
    pub links: Vec<ChildLinks>,
    /// Opened pairs: the distinct (mother, father) pairs with no null side.
    pub pairs: BTreeSet<(RecordIx, RecordIx)>,
    pub lambda: f64,
    /// Sum of link log-probabilities minus `lambda * pairs.len()`.
    pub objective: f64,
}

impl ParentAssignment {
    pub fn from_links(mut links: Vec<ChildLinks>, lambda: f64) -> Self {
        links.sort_by_key(|l| l.child);
        let pairs: BTreeSet<_> = links.iter().filter_map(ChildLinks::pair).collect();
        let objective = links.iter().map(|l| l.log_prob).sum::<f64>() - lambda * pairs.len() as f64;
        ParentAssignment {
            links,
            pairs,
            lambda,
            objective,
        }
    }

    pub fn get(&self, child: RecordIx) -> Option<&ChildLinks> {
        self.links
            .binary_search_by_key(&child, |l| l.child)
            .ok()
            .map(|i| &self.links[i])
    }

    /// `None` when the child is not covered; `Some(None)` for a null link.
    pub fn parent(&self, child: RecordIx, role: Role) -> Option<Option<RecordIx>> {
        self.get(child).map(|l| l.parent(role))
    }

    pub fn distinct_pairs(&self) -> usize {
        self.pairs.len()
    }

    /// True when both assignments pick the same parents for every child.
    pub fn same_edges(&self, other: &ParentAssignment) -> bool {
        self.links.len() == other.links.len()
            && self
                .links
                .iter()
                .zip(&other.links)
                .all(|(a, b)| a.child == b.child && a.mother == b.mother && a.father == b.father)
    }
}

/// Role options for one child: `(candidate or null, log-probability)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChildOptions {
    pub child: RecordIx,
    pub mothers: Vec<(Option<RecordIx>, f64)>,
    pub fathers: Vec<(Option<RecordIx>, f64)>,
}

impl ChildOptions {
    pub fn new(child: RecordIx, mothers: Vec<(Option<RecordIx>, f64)>, fathers: Vec<(Option<RecordIx>, f64)>) -> Self {
        let mut o = ChildOptions {
            child,
            mothers,
            fathers,
        };
        o.canonicalize();
        o
    }

    /// Options sorted by id (null last); an empty role becomes a lone null
    /// option with log-probability 0.
    fn canonicalize(&mut self) {
        for list in [&mut self.mothers, &mut self.fathers] {
            if list.is_empty() {
                list.push((None, 0.0));
            }
            list.sort_by_key(|e| id_key(e.0));
        }
    }

    fn best_score(&self) -> f64 {
        let m = self.mothers.iter().map(|e| e.1).fold(f64::NEG_INFINITY, f64::max);
        let f = self.fathers.iter().map(|e| e.1).fold(f64::NEG_INFINITY, f64::max);
        m + f
    }

    fn log_prob(&self, role: Role, cand: Option<RecordIx>) -> Option<f64> {
        let list = match role {
            Role::Mother => &self.mothers,
            Role::Father => &self.fathers,
        };
        list.iter().find(|e| e.0 == cand).map(|e| e.1)
    }

    fn combinations(&self) -> u128 {
        self.mothers.len() as u128 * self.fathers.len() as u128
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CollectiveInstance {
    pub children: Vec<ChildOptions>,
    pub lambda: f64,
}

impl CollectiveInstance {
    pub fn new(children: Vec<ChildOptions>, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::Config(format!(
                "lambda must be a finite value >= 0, got {lambda}"
            )));
        }
        let mut children: Vec<ChildOptions> = children
            .into_iter()
            .map(|mut c| {
                c.canonicalize();
                c
            })
            .collect();
        children.sort_by_key(|c| c.child);
        for w in children.windows(2) {
            if w[0].child == w[1].child {
                return Err(Error::InvalidInput(format!("child {} listed twice", w[0].child)));
            }
        }
        for c in &children {
            for list in [&c.mothers, &c.fathers] {
                if list.iter().any(|e| e.1.is_nan()) {
                    return Err(Error::InvalidInput(format!(
                        "NaN log-probability for child {}",
                        c.child
                    )));
                }
                if list.windows(2).any(|w| w[0].0 == w[1].0) {
                    return Err(Error::InvalidInput(format!(
                        "duplicate candidate for child {}",
                        c.child
                    )));
                }
            }
        }
        Ok(CollectiveInstance { children, lambda })
    }

    /// Builds an instance from per-child posteriors, taking logs of the
    /// probabilities.
    pub fn from_posteriors(posteriors: &[[LinkPosterior; 2]], lambda: f64) -> Result<Self> {
        let children = posteriors
            .iter()
            .map(|[m, f]| {
                let logs = |p: &LinkPosterior| p.entries.iter().map(|&(c, pr)| (c, pr.ln())).collect();
                ChildOptions::new(m.child, logs(m), logs(f))
            })
            .collect();
        Self::new(children, lambda)
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(self.children.clone(), lambda)
    }
}

/// Objective of `assignment` under `instance`'s lambda, recomputed from the
/// instance's log-probabilities.
pub fn objective_value(instance: &CollectiveInstance, assignment: &ParentAssignment) -> Result<f64> {
    let opts: HashMap<RecordIx, &ChildOptions> = instance.children.iter().map(|c| (c.child, c)).collect();
    let mut total = 0.0;
    let mut pairs = BTreeSet::new();
    for l in &assignment.links {
        let o = opts
            .get(&l.child)
            .ok_or_else(|| Error::InvalidInput(format!("child {} not in instance", l.child)))?;
        let lm = o.log_prob(Role::Mother, l.mother).ok_or_else(|| {
            Error::InvalidInput(format!("mother {:?} is not a candidate of child {}", l.mother, l.child))
        })?;
        let lf = o.log_prob(Role::Father, l.father).ok_or_else(|| {
            Error::InvalidInput(format!("father {:?} is not a candidate of child {}", l.father, l.child))
        })?;
        total += lm + lf;
        if let Some(p) = l.pair() {
            pairs.insert(p);
        }
    }
    Ok(total - instance.lambda * pairs.len() as f64)
}

fn greedy_order(children: &[&ChildOptions]) -> Vec<usize> {
    let scores: Vec<f64> = children.iter().map(|c| c.best_score()).collect();
    let mut order: Vec<usize> = (0..children.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then(children[a].child.cmp(&children[b].child))
    });
    order
}

/// Runs the greedy pass over `children`; returns the links and the score
/// accumulated by the algorithm itself.
fn greedy_pass(children: &[&ChildOptions], lambda: f64) -> (Vec<ChildLinks>, f64) {
    let mut opened: BTreeSet<(RecordIx, RecordIx)> = BTreeSet::new();
    let mut links = Vec::with_capacity(children.len());
    let mut accumulated = 0.0;
    for i in greedy_order(children) {
        let c = children[i];
        let mut best = f64::NEG_INFINITY;
        let mut choice: Option<(Option<RecordIx>, Option<RecordIx>, f64)> = None;
        for &(m, lm) in &c.mothers {
            for &(f, lf) in &c.fathers {
                let mut p = lm + lf;
                if let (Some(m), Some(f)) = (m, f) {
                    if !opened.contains(&(m, f)) {
                        p -= lambda;
                    }
                }
                if p > best || choice.is_none() {
                    best = p;
                    choice = Some((m, f, lm + lf));
                }
            }
        }
        let (m, f, lp) = choice.expect("every role has at least the null option");
        if let (Some(m), Some(f)) = (m, f) {
            opened.insert((m, f));
        }
        accumulated += best;
        links.push(ChildLinks {
            child: c.child,
            mother: m,
            father: f,
            log_prob: lp,
        });
    }
    (links, accumulated)
}

/// Greedy collective assignment over the whole instance in one pass.
///
/// The returned assignment's `objective` is the score accumulated by the
/// greedy pass; [`objective_value`] recomputes the same number.
pub fn greedy_collective(instance: &CollectiveInstance) -> ParentAssignment {
    let refs: Vec<&ChildOptions> = instance.children.iter().collect();
    let (links, accumulated) = greedy_pass(&refs, instance.lambda);
    let mut a = ParentAssignment::from_links(links, instance.lambda);
    a.objective = accumulated;
    a
}

/// Groups children that share any real candidate (in either role). Children
/// in different groups cannot share a parent pair, so solving groups
/// separately is exact.
pub fn components(instance: &CollectiveInstance) -> Vec<Vec<usize>> {
    let n = instance.children.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut owner: HashMap<(Role, RecordIx), usize> = HashMap::new();
    for (i, c) in instance.children.iter().enumerate() {
        for (role, list) in [(Role::Mother, &c.mothers), (Role::Father, &c.fathers)] {
            for &(cand, _) in list {
                let Some(cand) = cand else { continue };
                match owner.get(&(role, cand)) {
                    Some(&j) => {
                        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                        if ri != rj {
                            parent[ri.max(rj)] = ri.min(rj);
                        }
                    }
                    None => {
                        owner.insert((role, cand), i);
                    }
                }
            }
        }
    }
    let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort_by_key(|g| g[0]);
    out
}

/// Same result as [`greedy_collective`], solved per component in parallel.
pub fn greedy_collective_partitioned(instance: &CollectiveInstance) -> ParentAssignment {
    let groups = components(instance);
    let parts: Vec<(Vec<ChildLinks>, f64)> = groups
        .par_iter()
        .map(|g| {
            let refs: Vec<&ChildOptions> = g.iter().map(|&i| &instance.children[i]).collect();
            greedy_pass(&refs, instance.lambda)
        })
        .collect();
    let accumulated = parts.iter().map(|p| p.1).sum();
    let links = parts.into_iter().flat_map(|p| p.0).collect();
    let mut a = ParentAssignment::from_links(links, instance.lambda);
    a.objective = accumulated;
    a
}

/// Exact optimum by exhaustive enumeration. Among optimal assignments the
/// lexicographically smallest (children in id order) is returned.
pub fn brute_force_collective(instance: &CollectiveInstance) -> Result<ParentAssignment> {
    let space = instance
        .children
        .iter()
        .fold(1u128, |acc, c| acc.saturating_mul(c.combinations()));
    if space > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge(space));
    }

    struct Search<'a> {
        children: &'a [ChildOptions],
        lambda: f64,
        counts: HashMap<(RecordIx, RecordIx), u32>,
        current: Vec<(usize, usize)>,
        best: f64,
        best_choice: Vec<(usize, usize)>,
    }

    impl Search<'_> {
        fn run(&mut self, depth: usize, score: f64) {
            if depth == self.children.len() {
                let total = score - self.lambda * self.counts.len() as f64;
                if self.best_choice.is_empty() || total > self.best + IMPROVEMENT_EPS {
                    self.best = total;
                    self.best_choice = self.current.clone();
                }
                return;
            }
            let c = &self.children[depth];
            for (mi, &(m, lm)) in c.mothers.iter().enumerate() {
                for (fi, &(f, lf)) in c.fathers.iter().enumerate() {
                    let pair = m.zip(f);
                    if let Some(p) = pair {
                        *self.counts.entry(p).or_insert(0) += 1;
                    }
                    self.current.push((mi, fi));
                    self.run(depth + 1, score + lm + lf);
                    self.current.pop();
                    if let Some(p) = pair {
                        let e = self.counts.get_mut(&p).expect("pair was counted");
                        *e -= 1;
                        if *e == 0 {
                            self.counts.remove(&p);
                        }
                    }
                }
            }
        }
    }

    let mut s = Search {
        children: &instance.children,
        lambda: instance.lambda,
        counts: HashMap::new(),
        current: Vec::with_capacity(instance.children.len()),
        best: f64::NEG_INFINITY,
        best_choice: Vec::new(),
    };
    s.run(0, 0.0);
    let links = instance
        .children
        .iter()
        .zip(&s.best_choice)
        .map(|(c, &(mi, fi))| ChildLinks {
            child: c.child,
            mother: c.mothers[mi].0,
            father: c.fathers[fi].0,
            log_prob: c.mothers[mi].1 + c.fathers[fi].1,
        })
        .collect();
    Ok(ParentAssignment::from_links(links, instance.lambda))
}

/// One point of the accuracy-vs-lambda curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LambdaPoint {
    pub lambda: f64,
    pub accuracy: f64,
    pub distinct_pairs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LambdaCurve {
    pub points: Vec<LambdaPoint>,
    pub best_lambda: f64,
    pub best_accuracy: f64,
}

pub const DEFAULT_LAMBDA_GRID: [f64; 16] = [
    0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6, 1.8, 2.0, 2.4, 2.8, 3.2, 4.0, 5.0,
];

/// Runs the greedy solver for every lambda in `grid` and picks the one with
/// the best link accuracy on `links`; ties go to the smaller lambda.
pub fn tune_lambda(instance: &CollectiveInstance, links: &[GroundTruthLink], grid: &[f64]) -> Result<LambdaCurve> {
    if grid.is_empty() {
        return Err(Error::Config("lambda grid is empty".into()));
    }
    let mut lambdas = grid.to_vec();
    lambdas.sort_by(f64::total_cmp);
    let points = lambdas
        .iter()
        .map(|&lambda| {
            let a = greedy_collective_partitioned(&instance.with_lambda(lambda)?);
            Ok(LambdaPoint {
                lambda,
                accuracy: link_accuracy(&a, links).overall,
                distinct_pairs: a.distinct_pairs(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = points
        .iter()
        .fold(None::<&LambdaPoint>, |best, p| match best {
            Some(b) if b.accuracy >= p.accuracy => Some(b),
            _ => Some(p),
        })
        .expect("grid is non-empty");
    Ok(LambdaCurve {
        best_lambda: best.lambda,
        best_accuracy: best.accuracy,
        points,
    })
}
