use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

/// Stored training set; probability is the high-pain vote fraction among the
/// k nearest (Euclidean) neighbours, distance ties going to the lower index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    pub k: usize,
    pub x: Array2<f64>,
    pub y: Vec<u8>,
}

impl Knn {
    pub fn train(x: ArrayView2<'_, f64>, y: &[u8], k: usize) -> Self {
        Knn { k: k.min(y.len()).max(1), x: x.to_owned(), y: y.to_vec() }
    }

    pub fn distances(&self, q: ArrayView1<'_, f64>) -> Vec<f64> {
        self.x
            .axis_iter(Axis(0))
            .map(|r| r.iter().zip(q.iter()).map(|(a, b)| (a - b) * (a - b)).sum())
            .collect()
    }

    /// Vote fraction from squared distances to every training row.
    pub fn proba_from_distances(&self, d2: &[f64]) -> f64 {
        let mut idx: Vec<usize> = (0..d2.len()).collect();
        let k = self.k;
        let cmp = |a: &usize, b: &usize| d2[*a].total_cmp(&d2[*b]).then(a.cmp(b));
        if k < idx.len() {
            idx.select_nth_unstable_by(k - 1, cmp);
            idx.truncate(k);
        }
        idx.iter().filter(|&&i| self.y[i] == 1).count() as f64 / k as f64
    }

    pub fn proba(&self, q: ArrayView1<'_, f64>) -> f64 {
        self.proba_from_distances(&self.distances(q))
    }
}
