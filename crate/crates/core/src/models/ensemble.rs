use ndarray::{ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{build_tree, presort, Node, Tree, TreeParams};

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean log-loss of labels `y` under logits `f`.
pub fn log_loss(f: &[f64], y: &[u8]) -> f64 {
    f.iter()
        .zip(y)
        .map(|(&z, &c)| {
            // log(1 + e^z) − y·z, evaluated stably
            let sp = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
            sp - if c == 1 { z } else { 0.0 }
        })
        .sum::<f64>()
        / f.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams { n_trees: 100, max_depth: 8, bootstrap: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<Tree>,
}

impl RandomForest {
    /// Bagged trees with √d features per node; each tree gets its own
    /// generator seeded from (seed, tree index).
    pub fn train(x: ArrayView2<'_, f64>, y: &[u8], p: &ForestParams, seed: u64) -> Self {
        let n = x.nrows();
        let sorted = presort(x);
        let max_features = ((x.ncols() as f64).sqrt().floor() as usize).max(1);
        let tp = TreeParams {
            max_depth: p.max_depth,
            lambda: 0.0,
            min_child_weight: 1.0,
            max_features: Some(max_features),
            min_gain: 1e-12,
        };
        let trees = (0..p.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                let mut w = vec![0.0; n];
                if p.bootstrap {
                    for _ in 0..n {
                        w[rng.random_range(0..n)] += 1.0;
                    }
                } else {
                    w.iter_mut().for_each(|v| *v = 1.0);
                }
                let g: Vec<f64> = (0..n).map(|i| -(y[i] as f64) * w[i]).collect();
                let active: Vec<bool> = w.iter().map(|&v| v > 0.0).collect();
                build_tree(x, &sorted, &g, &w, &active, &tp, &mut rng).0
            })
            .collect();
        RandomForest { trees }
    }

    pub fn proba(&self, x: ArrayView1<'_, f64>) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    /// L2 leaf penalty (second-order variant only).
    pub lambda: f64,
    pub min_child_weight: f64,
}

impl BoostParams {
    pub fn grad_boost() -> Self {
        BoostParams { n_trees: 200, max_depth: 3, learning_rate: 0.1, lambda: 0.0, min_child_weight: 1.0 }
    }

    pub fn reg_grad_boost() -> Self {
        BoostParams { n_trees: 100, max_depth: 4, learning_rate: 0.1, lambda: 1.0, min_child_weight: 1.0 }
    }
}

/// Additive logit model F(x) = init + Σ lr·tree(x).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedTrees {
    pub init: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
    /// Training log-loss after each round.
    pub train_loss: Vec<f64>,
}

impl BoostedTrees {
    /// First-order boosting: each tree is grown on the residual y − p by
    /// squared error, then its leaves take the Newton value Σr / Σp(1−p).
    pub fn train_grad_boost(x: ArrayView2<'_, f64>, y: &[u8], p: &BoostParams) -> Self {
        let n = x.nrows();
        let pos = y.iter().filter(|&&c| c == 1).count() as f64;
        let prior = (pos / n as f64).clamp(1e-6, 1.0 - 1e-6);
        let init = (prior / (1.0 - prior)).ln();
        let sorted = presort(x);
        let mut f = vec![init; n];
        let tp = TreeParams { max_depth: p.max_depth, lambda: 0.0, min_child_weight: p.min_child_weight, max_features: None, min_gain: 1e-12 };
        let ones = vec![1.0; n];
        let active = vec![true; n];
        let mut trees = Vec::with_capacity(p.n_trees);
        let mut train_loss = Vec::with_capacity(p.n_trees);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..p.n_trees {
            let prob: Vec<f64> = f.iter().map(|&z| sigmoid(z)).collect();
            let r: Vec<f64> = (0..n).map(|i| y[i] as f64 - prob[i]).collect();
            let g: Vec<f64> = r.iter().map(|v| -v).collect();
            let (mut tree, leaves) = build_tree(x, &sorted, &g, &ones, &active, &tp, &mut rng);
            let mut num = vec![0.0; tree.nodes.len()];
            let mut den = vec![0.0; tree.nodes.len()];
            for i in 0..n {
                let l = leaves[i] as usize;
                num[l] += r[i];
                den[l] += prob[i] * (1.0 - prob[i]);
            }
            for (k, node) in tree.nodes.iter_mut().enumerate() {
                if let Node::Leaf { value } = node {
                    *value = if den[k].abs() < 1e-150 { 0.0 } else { num[k] / den[k] };
                }
            }
            for i in 0..n {
                if let Node::Leaf { value } = tree.nodes[leaves[i] as usize] {
                    f[i] += p.learning_rate * value;
                }
            }
            train_loss.push(log_loss(&f, y));
            trees.push(tree);
        }
        BoostedTrees { init, learning_rate: p.learning_rate, trees, train_loss }
    }

    /// Second-order boosting on logistic loss: g = p − y, h = p(1−p), leaves
    /// −G/(H+λ), exact greedy splits with `min_child_weight` on H.
    pub fn train_reg_grad_boost(x: ArrayView2<'_, f64>, y: &[u8], p: &BoostParams) -> Self {
        let n = x.nrows();
        let sorted = presort(x);
        let mut f = vec![0.0; n];
        let tp = TreeParams {
            max_depth: p.max_depth,
            lambda: p.lambda,
            min_child_weight: p.min_child_weight,
            max_features: None,
            min_gain: 1e-12,
        };
        let active = vec![true; n];
        let mut trees = Vec::with_capacity(p.n_trees);
        let mut train_loss = Vec::with_capacity(p.n_trees);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..p.n_trees {
            let prob: Vec<f64> = f.iter().map(|&z| sigmoid(z)).collect();
            let g: Vec<f64> = (0..n).map(|i| prob[i] - y[i] as f64).collect();
            let h: Vec<f64> = prob.iter().map(|q| q * (1.0 - q)).collect();
            let (tree, leaves) = build_tree(x, &sorted, &g, &h, &active, &tp, &mut rng);
            for i in 0..n {
                if let Node::Leaf { value } = tree.nodes[leaves[i] as usize] {
                    f[i] += p.learning_rate * value;
                }
            }
            train_loss.push(log_loss(&f, y));
            trees.push(tree);
        }
        BoostedTrees { init: 0.0, learning_rate: p.learning_rate, trees, train_loss }
    }

    pub fn logit(&self, x: ArrayView1<'_, f64>) -> f64 {
        self.init + self.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    pub fn proba(&self, x: ArrayView1<'_, f64>) -> f64 {
        sigmoid(self.logit(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn toy() -> (Array2<f64>, Vec<u8>) {
        let x = Array2::from_shape_fn((40, 2), |(i, j)| ((i * 7 + j * 3) % 11) as f64 + if i < 20 { 0.0 } else { 5.0 });
        let y = (0..40).map(|i| (i >= 20) as u8).collect();
        (x, y)
    }

    #[test]
    fn boosting_loss_does_not_increase() {
        let (x, y) = toy();
        for m in [
            BoostedTrees::train_grad_boost(x.view(), &y, &BoostParams { n_trees: 20, ..BoostParams::grad_boost() }),
            BoostedTrees::train_reg_grad_boost(x.view(), &y, &BoostParams { n_trees: 20, ..BoostParams::reg_grad_boost() }),
        ] {
            assert!(m.train_loss.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        }
    }

    #[test]
    fn forest_is_deterministic() {
        let (x, y) = toy();
        let p = ForestParams { n_trees: 5, ..Default::default() };
        assert_eq!(RandomForest::train(x.view(), &y, &p, 3), RandomForest::train(x.view(), &y, &p, 3));
    }
}
