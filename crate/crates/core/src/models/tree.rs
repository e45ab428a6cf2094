//! One exact-greedy, level-wise tree builder on gradient/hessian statistics,
//! shared by the random forest, gradient boosting and regularised boosting.
//!
//! A split maximises G_L²/(H_L+λ) + G_R²/(H_R+λ) − G²/(H+λ); leaves take
//! −G/(H+λ) unless the caller overrides them. With g = −y·w, h = w and λ = 0
//! this is weighted Gini reduction and leaves hold class fractions.

use ndarray::{ArrayView1, ArrayView2};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split { feature: u32, threshold: f64, left: u32, right: u32 },
    Leaf { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_index(&self, x: ArrayView1<'_, f64>) -> usize {
        let mut i = 0usize;
        loop {
            match self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[feature as usize] <= threshold { left as usize } else { right as usize };
                }
            }
        }
    }

    pub fn predict(&self, x: ArrayView1<'_, f64>) -> f64 {
        match self.nodes[self.leaf_index(x)] {
            Node::Leaf { value } => value,
            Node::Split { .. } => unreachable!("leaf_index returns leaves"),
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, left as usize).max(go(t, right as usize)),
            }
        }
        go(self, 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_depth: usize,
    pub lambda: f64,
    pub min_child_weight: f64,
    /// Features tried per node; `None` = all.
    pub max_features: Option<usize>,
    pub min_gain: f64,
}

/// Per-feature sample order, ascending by value then index.
pub fn presort(x: ArrayView2<'_, f64>) -> Vec<Vec<u32>> {
    (0..x.ncols())
        .map(|f| {
            let col = x.column(f);
            let mut idx: Vec<u32> = (0..x.nrows() as u32).collect();
            idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
            idx
        })
        .collect()
}

#[derive(Clone, Copy)]
struct Best {
    gain: f64,
    feature: usize,
    threshold: f64,
}

struct Open {
    node: usize,
    g: f64,
    h: f64,
    count: usize,
    features: Option<Vec<bool>>,
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m >= b {
        a
    } else {
        m
    }
}

/// Grows a tree and returns it with the leaf (node index) of every active
/// sample; inactive samples (`active[i] == false`) get `u32::MAX`.
pub fn build_tree<R: Rng>(
    x: ArrayView2<'_, f64>,
    sorted: &[Vec<u32>],
    g: &[f64],
    h: &[f64],
    active: &[bool],
    p: &TreeParams,
    rng: &mut R,
) -> (Tree, Vec<u32>) {
    let n = x.nrows();
    let d = x.ncols();
    let score = |gs: f64, hs: f64| gs * gs / (hs + p.lambda);
    let mut nodes: Vec<Node> = vec![Node::Leaf { value: 0.0 }];
    let mut node_of: Vec<u32> = (0..n).map(|i| if active[i] { 0 } else { u32::MAX }).collect();
    let (mut g0, mut h0, mut c0) = (0.0, 0.0, 0usize);
    for i in 0..n {
        if active[i] {
            g0 += g[i];
            h0 += h[i];
            c0 += 1;
        }
    }
    let pick_features = |rng: &mut R| {
        p.max_features.filter(|&m| m < d).map(|m| {
            let mut mask = vec![false; d];
            for f in sample(rng, d, m).into_iter() {
                mask[f] = true;
            }
            mask
        })
    };
    let mut frontier = vec![Open { node: 0, g: g0, h: h0, count: c0, features: pick_features(rng) }];
    // slot in `frontier` for each node id
    let mut slot_of: Vec<usize> = vec![0];
    let mut depth = 0;
    while !frontier.is_empty() && depth < p.max_depth {
        let m = frontier.len();
        let mut best: Vec<Option<Best>> = vec![None; m];
        let mut acc_g = vec![0.0; m];
        let mut acc_h = vec![0.0; m];
        let mut acc_c = vec![0usize; m];
        let mut last = vec![f64::NAN; m];
        for f in 0..d {
            if frontier.iter().all(|o| o.features.as_ref().is_some_and(|mask| !mask[f])) {
                continue;
            }
            acc_g.iter_mut().for_each(|v| *v = 0.0);
            acc_h.iter_mut().for_each(|v| *v = 0.0);
            acc_c.iter_mut().for_each(|v| *v = 0);
            let col = x.column(f);
            for &iu in &sorted[f] {
                let i = iu as usize;
                let nid = node_of[i];
                if nid == u32::MAX {
                    continue;
                }
                let s = slot_of[nid as usize];
                if s == usize::MAX {
                    continue;
                }
                let o = &frontier[s];
                if o.features.as_ref().is_some_and(|mask| !mask[f]) {
                    continue;
                }
                let v = col[i];
                if acc_c[s] > 0 && v > last[s] {
                    let (gl, hl) = (acc_g[s], acc_h[s]);
                    let (gr, hr) = (o.g - gl, o.h - hl);
                    if hl >= p.min_child_weight && hr >= p.min_child_weight && acc_c[s] < o.count {
                        let gain = score(gl, hl) + score(gr, hr) - score(o.g, o.h);
                        if gain > p.min_gain && best[s].is_none_or(|b| gain > b.gain) {
                            best[s] = Some(Best { gain, feature: f, threshold: midpoint(last[s], v) });
                        }
                    }
                }
                acc_g[s] += g[i];
                acc_h[s] += h[i];
                acc_c[s] += 1;
                last[s] = v;
            }
        }
        // materialise splits
        let mut next = Vec::new();
        let old_slots: Vec<usize> = frontier.iter().map(|o| o.node).collect();
        for (s, o) in frontier.iter().enumerate() {
            if let Some(b) = best[s] {
                let l = nodes.len() as u32;
                nodes.push(Node::Leaf { value: 0.0 });
                nodes.push(Node::Leaf { value: 0.0 });
                nodes[o.node] = Node::Split { feature: b.feature as u32, threshold: b.threshold, left: l, right: l + 1 };
            } else {
                nodes[o.node] = Node::Leaf { value: -o.g / (o.h + p.lambda) };
            }
        }
        slot_of.resize(nodes.len(), usize::MAX);
        for &nid in &old_slots {
            slot_of[nid] = usize::MAX;
        }
        // reassign samples and gather child statistics
        let mut stats: std::collections::BTreeMap<u32, (f64, f64, usize)> = Default::default();
        for i in 0..n {
            let nid = node_of[i];
            if nid == u32::MAX {
                continue;
            }
            if let Node::Split { feature, threshold, left, right } = nodes[nid as usize] {
                let child = if x[[i, feature as usize]] <= threshold { left } else { right };
                node_of[i] = child;
                let e = stats.entry(child).or_insert((0.0, 0.0, 0));
                e.0 += g[i];
                e.1 += h[i];
                e.2 += 1;
            }
        }
        for (child, (gs, hs, cs)) in stats {
            slot_of[child as usize] = next.len();
            next.push(Open { node: child as usize, g: gs, h: hs, count: cs, features: pick_features(rng) });
        }
        frontier = next;
        depth += 1;
    }
    for o in &frontier {
        nodes[o.node] = Node::Leaf { value: -o.g / (o.h + p.lambda) };
    }
    (Tree { nodes }, node_of)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(depth: usize) -> TreeParams {
        TreeParams { max_depth: depth, lambda: 0.0, min_child_weight: 0.0, max_features: None, min_gain: 1e-12 }
    }

    #[test]
    fn stump_separates_threshold() {
        let x = array![[0.0], [1.0], [2.0], [3.0]];
        let y = [0.0, 0.0, 1.0, 1.0];
        let g: Vec<f64> = y.iter().map(|v| -v).collect();
        let h = vec![1.0; 4];
        let (t, leaves) =
            build_tree(x.view(), &presort(x.view()), &g, &h, &[true; 4], &params(1), &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(t.nodes[0], Node::Split { feature: 0, threshold: 1.5, left: 1, right: 2 });
        assert_eq!(t.predict(array![0.5].view()), 0.0);
        assert_eq!(t.predict(array![2.5].view()), 1.0);
        assert_eq!(leaves, vec![1, 1, 2, 2]);
    }

    #[test]
    fn tie_prefers_lower_feature() {
        let x = array![[0.0, 0.0], [1.0, 1.0]];
        let g = [0.0, -1.0];
        let (t, _) =
            build_tree(x.view(), &presort(x.view()), &g, &[1.0, 1.0], &[true; 2], &params(1), &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(t.nodes[0], Node::Split { feature: 0, .. }));
    }

    #[test]
    fn pure_node_is_leaf() {
        let x = array![[0.0], [1.0]];
        let (t, _) = build_tree(
            x.view(),
            &presort(x.view()),
            &[-1.0, -1.0],
            &[1.0, 1.0],
            &[true; 2],
            &params(3),
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        assert_eq!(t.nodes, vec![Node::Leaf { value: 1.0 }]);
    }

    #[test]
    fn midpoint_of_adjacent_floats() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        assert_eq!(midpoint(a, b), a);
    }
}
