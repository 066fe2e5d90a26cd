//! Regression forest: bootstrap-aggregated CART trees with random feature subsets.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Both children of a split must hold at least this many samples.
    pub min_node_size: usize,
    /// Features tried per split; `None` means `max(⌊p/3⌋, 1)`.
    pub mtry: Option<usize>,
    pub bootstrap: bool,
    /// Predict each training row only from trees that left it out of their
    /// bootstrap sample.
    #[serde(default = "out_of_bag_default")]
    pub out_of_bag: bool,
    pub seed: u64,
}

fn out_of_bag_default() -> bool {
    true
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 500,
            min_node_size: 20,
            mtry: None,
            bootstrap: true,
            out_of_bag: true,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn resolved_mtry(&self, p: usize) -> usize {
        self.mtry.unwrap_or((p / 3).max(1))
    }

    fn validate(&self, p: usize) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::invalid("forest needs at least one tree"));
        }
        if self.min_node_size == 0 {
            return Err(Error::invalid("min_node_size must be at least 1"));
        }
        let m = self.resolved_mtry(p);
        if m == 0 || m > p {
            return Err(Error::invalid(format!("mtry must lie in 1..={p}, got {m}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, row: &[f64]) -> f64 {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => k = if row[feature] <= threshold { left } else { right },
            }
        }
    }
}

/// Mean computed as an offset from the first value, so identical inputs
/// return that value exactly.
fn stable_mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut first = None;
    let mut acc = 0.0;
    let mut count = 0usize;
    for v in values {
        let f = *first.get_or_insert(v);
        acc += v - f;
        count += 1;
    }
    match first {
        Some(f) => f + acc / count as f64,
        None => f64::NAN,
    }
}

#[derive(Debug, Clone)]
pub struct Forest {
    trees: Vec<Tree>,
    n_features: usize,
}

impl Forest {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        stable_mean(self.trees.iter().map(|t| t.predict(row)))
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> DVector<f64> {
        assert_eq!(x.ncols(), self.n_features, "feature count mismatch");
        let mut row = vec![0.0; x.ncols()];
        DVector::from_fn(x.nrows(), |i, _| {
            for (j, r) in row.iter_mut().enumerate() {
                *r = x[(i, j)];
            }
            self.predict_row(&row)
        })
    }
}

#[derive(Debug, Clone)]
pub struct ForestFit {
    pub forest: Forest,
    /// Average over trees that did not see the row; NaN if every tree did.
    pub oob_predictions: DVector<f64>,
    pub warnings: Vec<String>,
}

struct Builder<'a> {
    cols: &'a [Vec<f64>],
    y: &'a [f64],
    min_node: usize,
    mtry: usize,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl Builder<'_> {
    fn best_split(&self, idx: &[usize], features: &[usize], buf: &mut Vec<(f64, f64)>) -> Option<BestSplit> {
        let m = idx.len();
        let total: f64 = idx.iter().map(|&i| self.y[i]).sum();
        let parent = total * total / m as f64;
        let mut best: Option<BestSplit> = None;
        for &f in features {
            buf.clear();
            buf.extend(idx.iter().map(|&i| (self.cols[f][i], self.y[i])));
            buf.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_sum = 0.0;
            for k in 0..m - 1 {
                left_sum += buf[k].1;
                let n_left = k + 1;
                let n_right = m - n_left;
                if n_left < self.min_node {
                    continue;
                }
                if n_right < self.min_node {
                    break;
                }
                let (lo, hi) = (buf[k].0, buf[k + 1].0);
                if lo == hi {
                    continue;
                }
                let right_sum = total - left_sum;
                let score = left_sum * left_sum / n_left as f64 + right_sum * right_sum / n_right as f64;
                // strict improvement keeps the earliest feature and smallest threshold on ties
                if best.as_ref().is_none_or(|b| score > b.score) {
                    let mid = 0.5 * (lo + hi);
                    let threshold = if mid < hi { mid } else { lo };
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        score,
                    });
                }
            }
        }
        let tol = 1e-12 * parent.abs().max(1e-300);
        best.filter(|b| b.score > parent + tol)
    }

    fn grow(&self, mut idx: Vec<usize>, rng: &mut rng::StreamRng) -> Tree {
        let p = self.cols.len();
        let mut nodes = Vec::new();
        let mut buf = Vec::with_capacity(idx.len());
        // (node slot, start, end) into idx
        let mut stack = vec![(0usize, 0usize, idx.len())];
        nodes.push(Node::Leaf(0.0));
        while let Some((slot, start, end)) = stack.pop() {
            let part = &mut idx[start..end];
            let leaf = stable_mean(part.iter().map(|&i| self.y[i]));
            let first = self.y[part[0]];
            let constant = part.iter().all(|&i| self.y[i] == first);
            if part.len() < 2 * self.min_node || constant {
                nodes[slot] = Node::Leaf(leaf);
                continue;
            }
            let mut features = index::sample(rng, p, self.mtry).into_vec();
            features.sort_unstable();
            let Some(split) = self.best_split(part, &features, &mut buf) else {
                nodes[slot] = Node::Leaf(leaf);
                continue;
            };
            let col = &self.cols[split.feature];
            // stable partition: left block keeps values ≤ threshold
            let mut left: Vec<usize> = Vec::with_capacity(part.len());
            let mut right: Vec<usize> = Vec::with_capacity(part.len());
            for &i in part.iter() {
                if col[i] <= split.threshold {
                    left.push(i);
                } else {
                    right.push(i);
                }
            }
            let mid = start + left.len();
            part[..left.len()].copy_from_slice(&left);
            part[left.len()..].copy_from_slice(&right);
            let l = nodes.len();
            nodes.push(Node::Leaf(0.0));
            let r = nodes.len();
            nodes.push(Node::Leaf(0.0));
            nodes[slot] = Node::Split {
                feature: split.feature,
                threshold: split.threshold,
                left: l,
                right: r,
            };
            stack.push((r, mid, end));
            stack.push((l, start, mid));
        }
        Tree { nodes }
    }
}

fn grow_tree(builder: &Builder<'_>, params: &ForestParams, n: usize, t: usize) -> (Tree, Vec<u32>) {
    let mut r = rng::stream(params.seed, t as u64);
    let mut counts = vec![0u32; n];
    let idx: Vec<usize> = if params.bootstrap {
        (0..n)
            .map(|_| {
                let i = r.random_range(0..n);
                counts[i] += 1;
                i
            })
            .collect()
    } else {
        counts.iter_mut().for_each(|c| *c = 1);
        (0..n).collect()
    };
    (builder.grow(idx, &mut r), counts)
}

/// Fits a forest. Deterministic for a given seed regardless of thread count:
/// tree `t` always draws from stream `t` of the seed.
pub fn fit_random_forest(x: &DMatrix<f64>, y: &DVector<f64>, params: &ForestParams) -> Result<ForestFit> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::invalid("forest targets do not match the feature rows"));
    }
    if n == 0 {
        return Err(Error::invalid("forest needs at least one row"));
    }
    params.validate(p)?;
    let mut warnings = Vec::new();
    let first = y[0];
    if y.iter().all(|&v| v == first) {
        warnings.push("forest targets are constant; using a constant predictor".to_string());
        let tree = Tree {
            nodes: vec![Node::Leaf(first)],
        };
        return Ok(ForestFit {
            forest: Forest {
                trees: vec![tree],
                n_features: p,
            },
            oob_predictions: DVector::from_element(n, first),
            warnings,
        });
    }
    let cols: Vec<Vec<f64>> = x.column_iter().map(|c| c.iter().copied().collect()).collect();
    let ys: Vec<f64> = y.iter().copied().collect();
    let builder = Builder {
        cols: &cols,
        y: &ys,
        min_node: params.min_node_size,
        mtry: params.resolved_mtry(p),
    };

    #[cfg(feature = "parallel")]
    let grown: Vec<(Tree, Vec<u32>)> = {
        use rayon::prelude::*;
        (0..params.n_trees)
            .into_par_iter()
            .map(|t| grow_tree(&builder, params, n, t))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let grown: Vec<(Tree, Vec<u32>)> = (0..params.n_trees).map(|t| grow_tree(&builder, params, n, t)).collect();

    let mut row = vec![0.0; p];
    let mut oob = DVector::from_element(n, f64::NAN);
    for i in 0..n {
        for (j, r) in row.iter_mut().enumerate() {
            *r = cols[j][i];
        }
        let v = stable_mean(grown.iter().filter(|(_, c)| c[i] == 0).map(|(t, _)| t.predict(&row)));
        oob[i] = v;
    }
    let trees = grown.into_iter().map(|(t, _)| t).collect();
    Ok(ForestFit {
        forest: Forest { trees, n_features: p },
        oob_predictions: oob,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn constant_target_is_exact() {
        let x = DMatrix::from_fn(50, 3, |i, j| (i * 3 + j) as f64);
        let y = DVector::from_element(50, 0.1);
        let fit = fit_random_forest(&x, &y, &ForestParams { n_trees: 5, ..Default::default() }).unwrap();
        assert!(fit.forest.predict(&x).iter().all(|&v| v == 0.1));
        assert!(!fit.warnings.is_empty());
    }

    #[test]
    fn single_root_leaf_is_sample_mean() {
        let x = DMatrix::from_fn(10, 2, |i, j| (i + j) as f64);
        let y = DVector::from_fn(10, |i, _| (i * i) as f64);
        let params = ForestParams {
            n_trees: 1,
            min_node_size: 10,
            mtry: Some(2),
            bootstrap: false,
            out_of_bag: false,
            seed: 1,
        };
        let fit = fit_random_forest(&x, &y, &params).unwrap();
        let mean = y.mean();
        for v in fit.forest.predict(&x).iter() {
            assert!((v - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_and_bounded() {
        let mut r = rng::stream(9, 0);
        let x = DMatrix::from_fn(200, 4, |_, _| r.random::<f64>());
        let y = DVector::from_fn(200, |i, _| x[(i, 0)] * 3.0 + Distribution::<f64>::sample(&StandardNormal, &mut r) * 0.1);
        let params = ForestParams {
            n_trees: 20,
            min_node_size: 5,
            seed: 3,
            ..Default::default()
        };
        let a = fit_random_forest(&x, &y, &params).unwrap().forest.predict(&x);
        let b = fit_random_forest(&x, &y, &params).unwrap().forest.predict(&x);
        assert_eq!(a, b);
        let (lo, hi) = (y.min(), y.max());
        assert!(a.iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12));
    }

    #[test]
    fn split_picks_the_obvious_threshold() {
        // a step at x0 = 0.5; x1 is noise-free but uninformative
        let x = DMatrix::from_fn(40, 2, |i, j| if j == 0 { i as f64 / 40.0 } else { ((i * 7) % 40) as f64 });
        let y = DVector::from_fn(40, |i, _| if (i as f64) / 40.0 < 0.5 { 0.0 } else { 1.0 });
        let params = ForestParams {
            n_trees: 1,
            min_node_size: 1,
            mtry: Some(2),
            bootstrap: false,
            out_of_bag: false,
            seed: 0,
        };
        let fit = fit_random_forest(&x, &y, &params).unwrap();
        let tree = &fit.forest.trees[0];
        match tree.nodes[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(feature, 0);
                assert!((threshold - (19.0 / 40.0 + 20.0 / 40.0) / 2.0).abs() < 1e-15);
            }
            Node::Leaf(_) => panic!("root should split"),
        }
        assert_eq!(fit.forest.predict(&x), y);
    }

    #[test]
    fn children_respect_min_node_size() {
        let mut r = rng::stream(10, 0);
        let x = DMatrix::from_fn(100, 1, |_, _| r.random::<f64>());
        let y = DVector::from_fn(100, |i, _| x[(i, 0)].powi(2));
        let params = ForestParams {
            n_trees: 1,
            min_node_size: 20,
            mtry: Some(1),
            bootstrap: false,
            out_of_bag: false,
            seed: 0,
        };
        let fit = fit_random_forest(&x, &y, &params).unwrap();
        // count training rows per leaf value
        let preds = fit.forest.predict(&x);
        let mut counts = std::collections::HashMap::new();
        for v in preds.iter() {
            *counts.entry(v.to_bits()).or_insert(0) += 1;
        }
        assert!(counts.len() > 1);
        assert!(counts.values().all(|&c| c >= 20));
    }

    #[test]
    fn invalid_params() {
        let x = DMatrix::from_element(4, 2, 1.0);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        assert!(fit_random_forest(&x, &y, &ForestParams { n_trees: 0, ..Default::default() }).is_err());
        assert!(fit_random_forest(&x, &y, &ForestParams { mtry: Some(3), ..Default::default() }).is_err());
    }
}
