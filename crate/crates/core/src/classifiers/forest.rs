//! Random forest: bootstrap resampling, `sqrt(d)` candidate features per
//! split, Gini impurity, majority vote.

use serde::{Deserialize, Serialize};

use super::Hyperparams;
use crate::features::{severity_argmax, ClassLabel, FeatureDataset};
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        class: ClassLabel,
    },
    Split {
        feature: usize,
        threshold: f64,
        /// Index of the subtree for `x[feature] <= threshold`.
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> ClassLabel {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { class } => return class,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub n_features: usize,
    pub trees: Vec<Tree>,
}

fn gini(counts: &[usize; 3], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

fn majority(counts: &[usize; 3]) -> ClassLabel {
    severity_argmax(&counts.map(|c| c as f64))
}

struct Builder<'a> {
    ds: &'a FeatureDataset,
    max_depth: usize,
    n_candidates: usize,
    rng: SeededRng,
    nodes: Vec<TreeNode>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

impl Builder<'_> {
    fn counts(&self, idx: &[usize]) -> [usize; 3] {
        let mut c = [0; 3];
        for &i in idx {
            c[self.ds.labels[i].index()] += 1;
        }
        c
    }

    fn best_split_on(&self, idx: &[usize], feature: usize) -> Option<BestSplit> {
        let mut vals: Vec<(f64, usize)> = idx
            .iter()
            .map(|&i| (self.ds.vectors[i].values[feature], self.ds.labels[i].index()))
            .collect();
        vals.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = vals.len();
        let mut right = [0usize; 3];
        for &(_, l) in &vals {
            right[l] += 1;
        }
        let mut left = [0usize; 3];
        let mut best: Option<BestSplit> = None;
        for k in 0..n - 1 {
            let l = vals[k].1;
            left[l] += 1;
            right[l] -= 1;
            if vals[k].0 == vals[k + 1].0 {
                continue;
            }
            let (nl, nr) = (k + 1, n - k - 1);
            let impurity = (nl as f64 * gini(&left, nl) + nr as f64 * gini(&right, nr)) / n as f64;
            if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                let mid = 0.5 * (vals[k].0 + vals[k + 1].0);
                // guard against the midpoint rounding onto the upper value
                let threshold = if mid < vals[k + 1].0 { mid } else { vals[k].0 };
                best = Some(BestSplit {
                    feature,
                    threshold,
                    impurity,
                });
            }
        }
        best
    }

    fn build(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let counts = self.counts(&idx);
        let me = self.nodes.len();
        self.nodes.push(TreeNode::Leaf {
            class: majority(&counts),
        });
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || depth >= self.max_depth || idx.len() < 2 {
            return me;
        }
        let d = self.ds.dim();
        let mut features: Vec<usize> = (0..d).collect();
        self.rng.shuffle(&mut features);
        // Sample sqrt(d) candidates; if none of them separates anything keep
        // scanning the remaining features so impure nodes still split.
        let mut best: Option<BestSplit> = None;
        for (k, &f) in features.iter().enumerate() {
            if k >= self.n_candidates && best.is_some() {
                break;
            }
            if let Some(s) = self.best_split_on(&idx, f) {
                if best.as_ref().is_none_or(|b| s.impurity < b.impurity) {
                    best = Some(s);
                }
            }
        }
        let Some(split) = best else {
            return me;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx
            .into_iter()
            .partition(|&i| self.ds.vectors[i].values[split.feature] <= split.threshold);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.nodes[me] = TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        me
    }
}

impl Forest {
    pub(crate) fn fit(ds: &FeatureDataset, hp: &Hyperparams, seed: u64) -> Forest {
        let n = ds.len();
        let d = ds.dim();
        let n_candidates = ((d as f64).sqrt().floor() as usize).max(1);
        let mut master = SeededRng::new(seed);
        let trees = (0..hp.n_trees)
            .map(|_| {
                let mut rng = master.fork();
                let idx: Vec<usize> = if hp.bootstrap {
                    (0..n).map(|_| rng.below(n)).collect()
                } else {
                    (0..n).collect()
                };
                let mut b = Builder {
                    ds,
                    max_depth: hp.max_depth,
                    n_candidates,
                    rng,
                    nodes: Vec::new(),
                };
                b.build(idx, 0);
                Tree { nodes: b.nodes }
            })
            .collect();
        Forest { n_features: d, trees }
    }

    pub fn dim(&self) -> usize {
        self.n_features
    }

    /// Vote counts per class.
    pub fn scores(&self, x: &[f64]) -> [f64; 3] {
        let mut votes = [0.0; 3];
        for t in &self.trees {
            votes[t.predict(x).index()] += 1.0;
        }
        votes
    }
}
