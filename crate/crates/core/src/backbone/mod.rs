//! Graph encoders mapping initial embeddings `x` to representations `e`,
//! the BPR ranking objective and the uniform triple sampler.
//!
//! Both encoders are linear in `x`, so the backward pass is the adjoint of
//! the forward propagation and is computed with the same sparse products.

mod bpr;
pub mod checkpoint;
mod sampler;

use ndarray::{s, Array1, Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::NormalizedAdjacency;
use crate::par;

pub use bpr::{bpr_loss, bpr_loss_through_encode, log_sigmoid, BprOutput};
pub use sampler::{sample_batch, BatchSampler, Triple};

pub const DEFAULT_DIM: usize = 32;
pub const DEFAULT_INIT_STD: f64 = 0.1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackboneKind {
    /// Mean of the propagated layers.
    #[default]
    LightGcn,
    /// Concatenation of the propagated layers, no nonlinearity.
    Gccf,
}

impl std::str::FromStr for BackboneKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lightgcn" => Ok(Self::LightGcn),
            "gccf" => Ok(Self::Gccf),
            other => Err(crate::Error::InvalidInput(format!("unknown backbone `{other}`"))),
        }
    }
}

impl std::fmt::Display for BackboneKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::LightGcn => "lightgcn",
            Self::Gccf => "gccf",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub kind: BackboneKind,
    pub layers: usize,
    pub l2_weight: f64,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self {
            kind: BackboneKind::LightGcn,
            layers: 3,
            l2_weight: 1e-4,
        }
    }
}

impl BackboneConfig {
    /// Width of the representation produced from `d_e`-wide embeddings.
    pub fn out_dim(&self, d_e: usize) -> usize {
        match self.kind {
            BackboneKind::LightGcn => d_e,
            BackboneKind::Gccf => (self.layers + 1) * d_e,
        }
    }
}

/// Learnable initial embeddings: `I + J` rows (users first) plus a mask token.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    pub n_users: usize,
    pub n_items: usize,
    pub weights: Array2<f64>,
    pub mask_token: Array1<f64>,
}

impl EmbeddingTable {
    pub fn zeros(n_users: usize, n_items: usize, dim: usize) -> Self {
        Self {
            n_users,
            n_items,
            weights: Array2::zeros((n_users + n_items, dim)),
            mask_token: Array1::zeros(dim),
        }
    }

    /// Entries drawn i.i.d. from `N(0, std^2)`, mask token included.
    pub fn random<R: Rng + ?Sized>(
        n_users: usize,
        n_items: usize,
        dim: usize,
        std: f64,
        rng: &mut R,
    ) -> Self {
        let normal = Normal::new(0.0, std).expect("init std must be finite and non-negative");
        let mut t = Self::zeros(n_users, n_items, dim);
        t.weights.iter_mut().for_each(|w| *w = normal.sample(rng));
        t.mask_token.iter_mut().for_each(|w| *w = normal.sample(rng));
        t
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn n_nodes(&self) -> usize {
        self.n_users + self.n_items
    }

    pub fn item_row(&self, item: u32) -> usize {
        self.n_users + item as usize
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(self.mask_token.iter()).all(|v| v.is_finite())
    }
}

/// Runs the backbone on `x` (shape `(I+J) x d_e`).
pub fn encode(x: ArrayView2<'_, f64>, adj: &NormalizedAdjacency, cfg: &BackboneConfig) -> Array2<f64> {
    match cfg.kind {
        BackboneKind::LightGcn => {
            let mut acc = x.to_owned();
            let mut layer = x.to_owned();
            for _ in 0..cfg.layers {
                layer = adj.propagate(layer.view());
                acc += &layer;
            }
            acc /= (cfg.layers + 1) as f64;
            acc
        }
        BackboneKind::Gccf => {
            let d = x.ncols();
            let mut out = Array2::zeros((x.nrows(), (cfg.layers + 1) * d));
            out.slice_mut(s![.., 0..d]).assign(&x);
            let mut layer = x.to_owned();
            for l in 1..=cfg.layers {
                layer = adj.propagate(layer.view());
                out.slice_mut(s![.., l * d..(l + 1) * d]).assign(&layer);
            }
            out
        }
    }
}

/// Gradient with respect to `x` given the gradient with respect to the
/// output of [`encode`]. `Ã` is symmetric so the adjoint reuses
/// [`NormalizedAdjacency::propagate`] (Horner evaluation).
pub fn encode_backward(
    grad_out: ArrayView2<'_, f64>,
    adj: &NormalizedAdjacency,
    cfg: &BackboneConfig,
) -> Array2<f64> {
    match cfg.kind {
        BackboneKind::LightGcn => {
            let scale = 1.0 / (cfg.layers + 1) as f64;
            let mut g = grad_out.to_owned();
            for _ in 0..cfg.layers {
                g = adj.propagate(g.view());
                g += &grad_out;
            }
            g *= scale;
            g
        }
        BackboneKind::Gccf => {
            let d = grad_out.ncols() / (cfg.layers + 1);
            let block = |l: usize| grad_out.slice(s![.., l * d..(l + 1) * d]);
            let mut g = block(cfg.layers).to_owned();
            for l in (0..cfg.layers).rev() {
                g = adj.propagate(g.view());
                g += &block(l);
            }
            g
        }
    }
}

/// Dot-product scores `e_u . e_v` for every user/item pair (`I x J`).
pub fn score_all(e: ArrayView2<'_, f64>, n_users: usize) -> Array2<f64> {
    let items = e.slice(s![n_users.., ..]);
    let n_items = items.nrows();
    let mut out = Array2::zeros((n_users, n_items));
    par::for_each_row_mut(&mut out, |u, mut row| {
        let eu = e.row(u);
        for (v, slot) in row.iter_mut().enumerate() {
            *slot = eu.dot(&items.row(v));
        }
    });
    out
}

/// Copies `x` and overwrites the given rows with `token`.
pub fn apply_mask(x: ArrayView2<'_, f64>, token: &Array1<f64>, rows: &[usize]) -> Array2<f64> {
    let mut out = x.to_owned();
    for &r in rows {
        out.row_mut(r).assign(token);
    }
    out
}

/// Sums the gradient rows of masked entities (they flow to the mask token)
/// and zeroes them in place.
pub fn collect_mask_gradient(grad_x: &mut Array2<f64>, rows: &[usize]) -> Array1<f64> {
    let mut acc = Array1::zeros(grad_x.ncols());
    for &r in rows {
        acc += &grad_x.row(r);
        grad_x.row_mut(r).fill(0.0);
    }
    acc
}

pub(crate) fn row_sq_norm(x: ArrayView2<'_, f64>, r: usize) -> f64 {
    x.row(r).dot(&x.row(r))
}
