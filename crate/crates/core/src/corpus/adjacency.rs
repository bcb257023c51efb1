use ndarray::{Array2, ArrayView2};

use super::InteractionSet;
use crate::par;
use crate::{Error, Result};

/// Symmetric-normalized bipartite adjacency `D^{-1/2} A D^{-1/2}` in CSR form.
///
/// Node `u` is user `u`; node `I + v` is item `v`. Column indices within a
/// row are sorted ascending.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedAdjacency {
    n_users: usize,
    n_items: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl NormalizedAdjacency {
    pub fn build(train: &InteractionSet) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Empty("cannot build adjacency from an empty train set".into()));
        }
        let (nu, ni) = (train.n_users(), train.n_items());
        let n = nu + ni;
        let mut neighbours: Vec<Vec<u32>> = vec![Vec::new(); n];
        for e in &train.edges {
            let (a, b) = (e.user as usize, nu + e.item as usize);
            neighbours[a].push(b as u32);
            neighbours[b].push(a as u32);
        }
        for row in &mut neighbours {
            row.sort_unstable();
            row.dedup();
        }
        let inv_sqrt: Vec<f64> = neighbours
            .iter()
            .map(|r| if r.is_empty() { 0.0 } else { 1.0 / (r.len() as f64).sqrt() })
            .collect();

        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for (a, row) in neighbours.iter().enumerate() {
            for &b in row {
                indices.push(b);
                values.push(inv_sqrt[a] * inv_sqrt[b as usize]);
            }
            indptr.push(indices.len());
        }
        Ok(Self {
            n_users: nu,
            n_items: ni,
            indptr,
            indices,
            values,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_users + self.n_items
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        let (lo, hi) = (self.indptr[a], self.indptr[a + 1]);
        match self.indices[lo..hi].binary_search(&(b as u32)) {
            Ok(pos) => self.values[lo + pos],
            Err(_) => 0.0,
        }
    }

    /// Nonzeros of row `a` as `(column, weight)`.
    pub fn row(&self, a: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (lo, hi) = (self.indptr[a], self.indptr[a + 1]);
        self.indices[lo..hi]
            .iter()
            .zip(&self.values[lo..hi])
            .map(|(&b, &w)| (b as usize, w))
    }

    /// Sparse-dense product `Ã x`.
    pub fn propagate(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        assert_eq!(x.nrows(), self.n_nodes(), "propagate: row count mismatch");
        let mut out = Array2::zeros((x.nrows(), x.ncols()));
        par::for_each_row_mut(&mut out, |a, mut row| {
            for (b, w) in self.row(a) {
                row.scaled_add(w, &x.row(b));
            }
        });
        out
    }
}
