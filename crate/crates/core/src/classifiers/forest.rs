use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Class counts (label 0, label 1) of the bootstrap rows reaching the leaf.
    Leaf { counts: [u32; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
}

fn gini(counts: [u32; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p = counts[1] as f64 / n;
    2.0 * p * (1.0 - p)
}

struct Split {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

struct TreeBuilder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [u8],
    max_features: usize,
    rng: ChaCha8Rng,
    nodes: Vec<TreeNode>,
    // Scratch buffers reused across nodes.
    order: Vec<usize>,
    pairs: Vec<(f64, u8)>,
}

impl TreeBuilder<'_> {
    fn counts(&self, rows: &[usize]) -> [u32; 2] {
        let mut c = [0u32; 2];
        for &r in rows {
            c[self.y[r] as usize] += 1;
        }
        c
    }

    /// Best Gini split of `rows` on one feature, if the feature is not constant.
    fn best_on_feature(&mut self, rows: &[usize], feature: usize, total: [u32; 2]) -> Option<Split> {
        self.pairs.clear();
        self.pairs
            .extend(rows.iter().map(|&r| (self.x[r][feature], self.y[r])));
        self.pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = rows.len() as f64;
        let mut left = [0u32; 2];
        let mut best: Option<Split> = None;
        for i in 0..self.pairs.len() - 1 {
            left[self.pairs[i].1 as usize] += 1;
            let (lo, hi) = (self.pairs[i].0, self.pairs[i + 1].0);
            if lo == hi {
                continue;
            }
            let right = [total[0] - left[0], total[1] - left[1]];
            let nl = (i + 1) as f64;
            let impurity = (nl * gini(left) + (n - nl) * gini(right)) / n;
            if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                let mid = lo + (hi - lo) / 2.0;
                let threshold = if mid < hi { mid } else { lo };
                best = Some(Split {
                    feature,
                    threshold,
                    impurity,
                });
            }
        }
        best
    }

    /// Examines features in random order until `max_features` have been
    /// tried and at least one admits a split (or all features are exhausted).
    fn find_split(&mut self, rows: &[usize], total: [u32; 2]) -> Option<Split> {
        let d = self.order.len();
        let mut best: Option<Split> = None;
        for k in 0..d {
            let pick = self.rng.random_range(k..d);
            self.order.swap(k, pick);
            let feature = self.order[k];
            if let Some(s) = self.best_on_feature(rows, feature, total) {
                if best.as_ref().is_none_or(|b| s.impurity < b.impurity) {
                    best = Some(s);
                }
            }
            if k + 1 >= self.max_features && best.is_some() {
                break;
            }
        }
        best
    }

    fn grow(mut self, rows: Vec<usize>) -> DecisionTree {
        let mut stack = vec![(rows, usize::MAX, false)];
        while let Some((rows, parent, is_right)) = stack.pop() {
            let total = self.counts(&rows);
            let id = self.nodes.len();
            let pure = total[0] == 0 || total[1] == 0;
            let split = if pure || rows.len() < 2 {
                None
            } else {
                self.find_split(&rows, total)
            };
            match split {
                None => self.nodes.push(TreeNode::Leaf { counts: total }),
                Some(s) => {
                    let (l, r): (Vec<usize>, Vec<usize>) =
                        rows.iter().partition(|&&i| self.x[i][s.feature] <= s.threshold);
                    self.nodes.push(TreeNode::Split {
                        feature: s.feature,
                        threshold: s.threshold,
                        left: usize::MAX,
                        right: usize::MAX,
                    });
                    // Right is pushed first so the left subtree is built first.
                    stack.push((r, id, true));
                    stack.push((l, id, false));
                }
            }
            if parent != usize::MAX {
                if let TreeNode::Split { left, right, .. } = &mut self.nodes[parent] {
                    if is_right {
                        *right = id;
                    } else {
                        *left = id;
                    }
                }
            }
        }
        DecisionTree { nodes: self.nodes }
    }
}

impl DecisionTree {
    fn fit(x: &[Vec<f64>], y: &[u8], mut rng: ChaCha8Rng) -> Self {
        let n = x.len();
        let d = x[0].len();
        let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let builder = TreeBuilder {
            x,
            y,
            max_features: (d as f64).sqrt().ceil() as usize,
            rng,
            nodes: Vec::new(),
            order: (0..d).collect(),
            pairs: Vec::with_capacity(n),
        };
        builder.grow(rows)
    }

    /// Majority class of the leaf reached by `x` (ties go to class 0).
    pub fn predict(&self, x: &[f64]) -> u8 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
                TreeNode::Leaf { counts } => return (counts[1] > counts[0]) as u8,
            }
        }
    }
}

impl RandomForest {
    /// Each tree draws its bootstrap sample and feature subsets from its own
    /// ChaCha stream (`seed`, stream = tree index), so the result does not
    /// depend on thread scheduling.
    pub fn fit(x: &[Vec<f64>], y: &[u8], n_trees: usize, seed: u64) -> Self {
        let trees = (0..n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(t as u64);
                DecisionTree::fit(x, y, rng)
            })
            .collect();
        RandomForest { trees }
    }

    pub fn vote_fraction(&self, x: &[f64]) -> f64 {
        let votes: usize = self.trees.iter().map(|t| t.predict(x) as usize).sum();
        votes as f64 / self.trees.len() as f64
    }
}
