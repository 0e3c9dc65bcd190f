//! Histogram gradient-boosted trees with logistic loss.
//!
//! Candidate thresholds come from per-feature quantiles; a sample goes left
//! when `x < threshold`. Each tree is shrunk (leaf values halved) until the
//! training loss does not increase, and dropped if that never happens.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::logistic::{sigmoid, softplus};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub min_child_hessian: f64,
    pub max_bins: usize,
}

impl Default for GbtParams {
    fn default() -> Self {
        GbtParams {
            n_rounds: 200,
            max_depth: 4,
            learning_rate: 0.1,
            l2: 1.0,
            min_child_hessian: 1.0,
            max_bins: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] < threshold { left } else { right },
            }
        }
    }

    fn scale(&mut self, factor: f64) {
        for n in &mut self.nodes {
            if let Node::Leaf { value } = n {
                *value *= factor;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub base_score: f64,
    pub trees: Vec<Tree>,
    pub n_features: usize,
}

impl GbtModel {
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.base_score + self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        sigmoid(self.margin(x))
    }
}

/// Ascending thresholds for one feature column, at most `max_bins` of them.
pub(crate) fn quantile_cuts(column: &[f64], max_bins: usize) -> Vec<f64> {
    let mut v: Vec<f64> = column.iter().copied().filter(|x| !x.is_nan()).collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    if v.len() <= 1 {
        return Vec::new();
    }
    // Thresholds exclude the minimum: `x < min` sends nothing left.
    if v.len() - 1 <= max_bins {
        return v[1..].to_vec();
    }
    let mut cuts: Vec<f64> = (1..=max_bins).map(|k| v[(k * (v.len() - 1)) / max_bins]).collect();
    cuts.dedup();
    cuts
}

#[inline]
fn bin_of(cuts: &[f64], x: f64) -> u8 {
    cuts.partition_point(|&t| t <= x) as u8
}

fn mean_loss(margin: &[f64], y: &[bool]) -> f64 {
    margin
        .iter()
        .zip(y)
        .map(|(&z, &t)| softplus(z) - if t { z } else { 0.0 })
        .sum::<f64>()
        / margin.len() as f64
}

struct Binned {
    cuts: Vec<Vec<f64>>,
    /// Column-major bin indices.
    bins: Vec<Vec<u8>>,
}

struct SplitChoice {
    gain: f64,
    feature: usize,
    bin: usize,
}

fn leaf_weight(g: f64, h: f64, l2: f64) -> f64 {
    -g / (h + l2)
}

fn score(g: f64, h: f64, l2: f64) -> f64 {
    g * g / (h + l2)
}

fn best_split(data: &Binned, rows: &[u32], grad: &[f64], hess: &[f64], params: &GbtParams) -> Option<SplitChoice> {
    let (g_tot, h_tot) = rows
        .iter()
        .fold((0.0, 0.0), |(g, h), &r| (g + grad[r as usize], h + hess[r as usize]));
    let parent = score(g_tot, h_tot, params.l2);
    let per_feature: Vec<Option<SplitChoice>> = (0..data.cuts.len())
        .into_par_iter()
        .map(|f| {
            let n_bins = data.cuts[f].len() + 1;
            if n_bins < 2 {
                return None;
            }
            let mut gh = vec![(0.0f64, 0.0f64); n_bins];
            let col = &data.bins[f];
            for &r in rows {
                let b = col[r as usize] as usize;
                gh[b].0 += grad[r as usize];
                gh[b].1 += hess[r as usize];
            }
            let mut best: Option<SplitChoice> = None;
            let (mut gl, mut hl) = (0.0, 0.0);
            // Splitting at cut k sends bins 0..=k left.
            for (k, &(g, h)) in gh.iter().enumerate().take(n_bins - 1) {
                gl += g;
                hl += h;
                let (gr, hr) = (g_tot - gl, h_tot - hl);
                if hl < params.min_child_hessian || hr < params.min_child_hessian {
                    continue;
                }
                let gain = score(gl, hl, params.l2) + score(gr, hr, params.l2) - parent;
                if gain > 1e-12 && best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(SplitChoice {
                        gain,
                        feature: f,
                        bin: k,
                    });
                }
            }
            best
        })
        .collect();
    per_feature
        .into_iter()
        .flatten()
        .fold(None, |acc: Option<SplitChoice>, c| match acc {
            Some(a) if a.gain >= c.gain => Some(a),
            _ => Some(c),
        })
}

fn build_tree(data: &Binned, grad: &[f64], hess: &[f64], params: &GbtParams, n: usize) -> Tree {
    let mut nodes = Vec::new();
    let all: Vec<u32> = (0..n as u32).collect();
    grow(data, all, grad, hess, params, 0, &mut nodes);
    Tree { nodes }
}

fn grow(
    data: &Binned,
    rows: Vec<u32>,
    grad: &[f64],
    hess: &[f64],
    params: &GbtParams,
    depth: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let id = nodes.len();
    let leaf = |rows: &[u32]| {
        let (g, h) = rows
            .iter()
            .fold((0.0, 0.0), |(g, h), &r| (g + grad[r as usize], h + hess[r as usize]));
        Node::Leaf {
            value: params.learning_rate * leaf_weight(g, h, params.l2),
        }
    };
    if depth >= params.max_depth {
        nodes.push(leaf(&rows));
        return id;
    }
    let Some(choice) = best_split(data, &rows, grad, hess, params) else {
        nodes.push(leaf(&rows));
        return id;
    };
    let col = &data.bins[choice.feature];
    let (l_rows, r_rows): (Vec<u32>, Vec<u32>) = rows
        .into_iter()
        .partition(|&r| (col[r as usize] as usize) <= choice.bin);
    nodes.push(Node::Leaf { value: 0.0 });
    let left = grow(data, l_rows, grad, hess, params, depth + 1, nodes);
    let right = grow(data, r_rows, grad, hess, params, depth + 1, nodes);
    nodes[id] = Node::Split {
        feature: choice.feature,
        threshold: data.cuts[choice.feature][choice.bin],
        left,
        right,
    };
    id
}

/// Fits the ensemble; returns it with the training loss after each round
/// (index 0 is the loss of the base score alone).
pub fn fit(x: &[Vec<f64>], y: &[bool], params: &GbtParams) -> (GbtModel, Vec<f64>) {
    let n = x.len();
    let d = x.first().map(Vec::len).unwrap_or(0);
    let max_bins = params.max_bins.clamp(1, 255);
    let cuts: Vec<Vec<f64>> = (0..d)
        .into_par_iter()
        .map(|f| {
            let col: Vec<f64> = x.iter().map(|r| r[f]).collect();
            quantile_cuts(&col, max_bins)
        })
        .collect();
    let bins: Vec<Vec<u8>> = (0..d)
        .into_par_iter()
        .map(|f| x.iter().map(|r| bin_of(&cuts[f], r[f])).collect())
        .collect();
    let data = Binned { cuts, bins };

    let pos = y.iter().filter(|&&t| t).count() as f64;
    let mean = (pos / n as f64).clamp(1e-6, 1.0 - 1e-6);
    let base_score = (mean / (1.0 - mean)).ln();
    let mut margin = vec![base_score; n];
    let mut loss = mean_loss(&margin, y);
    let mut log = vec![loss];
    let mut trees = Vec::with_capacity(params.n_rounds);
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];

    for _ in 0..params.n_rounds {
        grad.par_iter_mut()
            .zip(hess.par_iter_mut())
            .zip(margin.par_iter().zip(y.par_iter()))
            .for_each(|((g, h), (&z, &t))| {
                let p = sigmoid(z);
                *g = p - if t { 1.0 } else { 0.0 };
                *h = (p * (1.0 - p)).max(1e-16);
            });
        let mut tree = build_tree(&data, &grad, &hess, params, n);
        let mut accepted = None;
        for _ in 0..20 {
            let cand: Vec<f64> = margin
                .par_iter()
                .zip(x.par_iter())
                .map(|(&z, row)| z + tree.predict(row))
                .collect();
            let l = mean_loss(&cand, y);
            if l <= loss {
                accepted = Some((cand, l));
                break;
            }
            tree.scale(0.5);
        }
        if let Some((cand, l)) = accepted {
            margin = cand;
            loss = l;
            trees.push(tree);
        }
        log.push(loss);
    }
    (
        GbtModel {
            base_score,
            trees,
            n_features: d,
        },
        log,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cuts_cover_small_domains_exactly() {
        assert_eq!(quantile_cuts(&[0.0, 1.0, 1.0, 0.0], 64), vec![1.0]);
        assert!(quantile_cuts(&[3.0, 3.0], 64).is_empty());
        let col: Vec<f64> = (0..1000).map(f64::from).collect();
        let c = quantile_cuts(&col, 64);
        assert!(c.len() <= 64);
        assert!(c.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn single_split_learns_threshold() {
        let x: Vec<Vec<f64>> = (0..50).map(|i| vec![f64::from(i)]).collect();
        let y: Vec<bool> = (0..50).map(|i| i >= 30).collect();
        let (m, log) = fit(&x, &y, &GbtParams::default());
        assert!(log.windows(2).all(|w| w[1] <= w[0]));
        assert!(m.predict(&[10.0]) < 0.1);
        assert!(m.predict(&[40.0]) > 0.9);
        match m.trees[0].nodes[0] {
            Node::Split { threshold, .. } => assert_eq!(threshold, 30.0),
            _ => panic!("expected a split at the root"),
        }
    }
}
