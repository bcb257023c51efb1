//! Independent reference implementations and helpers shared by the
//! integration tests. Everything here is written from the definitions with
//! plain loops, deliberately avoiding the library code paths it checks.

#![allow(dead_code)]

use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semrec_core::backbone::{BackboneConfig, BackboneKind};
use semrec_core::corpus::{InteractionSet, NormalizedAdjacency};

pub mod gradcheck;
pub mod experiments;
pub mod oracles;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_matrix(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(lo..hi))
}

/// Random bipartite graph in which every user and item has an edge.
pub fn random_graph(nu: usize, ni: usize, p: f64, rng: &mut ChaCha8Rng) -> InteractionSet {
    let mut pairs = Vec::new();
    for u in 0..nu as u32 {
        for v in 0..ni as u32 {
            if rng.gen_bool(p) {
                pairs.push((u, v));
            }
        }
    }
    for u in 0..nu as u32 {
        pairs.push((u, rng.gen_range(0..ni as u32)));
    }
    for v in 0..ni as u32 {
        pairs.push((rng.gen_range(0..nu as u32), v));
    }
    InteractionSet::from_indices(nu, ni, &pairs)
}

/// `D^-1/2 A D^-1/2` built densely from the edge list.
pub fn dense_normalized(set: &InteractionSet) -> Array2<f64> {
    let (nu, ni) = (set.n_users(), set.n_items());
    let n = nu + ni;
    let mut a = Array2::<f64>::zeros((n, n));
    for e in &set.edges {
        let (u, v) = (e.user as usize, nu + e.item as usize);
        a[[u, v]] = 1.0;
        a[[v, u]] = 1.0;
    }
    let deg: Vec<f64> = (0..n).map(|i| a.row(i).sum()).collect();
    Array2::from_shape_fn((n, n), |(i, j)| {
        if a[[i, j]] == 0.0 {
            0.0
        } else {
            1.0 / (deg[i] * deg[j]).sqrt()
        }
    })
}

fn dense_matmul(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (n, k, m) = (a.nrows(), a.ncols(), b.ncols());
    let mut out = Array2::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for t in 0..k {
                s += a[[i, t]] * b[[t, j]];
            }
            out[[i, j]] = s;
        }
    }
    out
}

/// Backbone output from explicit matrix powers of the dense adjacency.
pub fn dense_encode(a: &Array2<f64>, x: &Array2<f64>, cfg: &BackboneConfig) -> Array2<f64> {
    let mut layers = vec![x.clone()];
    for l in 0..cfg.layers {
        let next = dense_matmul(a, &layers[l]);
        layers.push(next);
    }
    match cfg.kind {
        BackboneKind::LightGcn => {
            let mut acc = Array2::zeros(x.raw_dim());
            for l in &layers {
                acc += l;
            }
            acc / (cfg.layers + 1) as f64
        }
        BackboneKind::Gccf => {
            let d = x.ncols();
            Array2::from_shape_fn((x.nrows(), d * layers.len()), |(i, j)| layers[j / d][[i, j % d]])
        }
    }
}

pub fn check_adjacency(adj: &NormalizedAdjacency, dense: &Array2<f64>) -> f64 {
    let n = adj.n_nodes();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((adj.get(i, j) - dense[[i, j]]).abs());
        }
    }
    worst
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    dot / (na * nb)
}

/// `-(1/n) Σ_i ln[ exp(cos(a_i, c_i)/τ) / Σ_j exp(cos(a_i, c_j)/τ) ]`,
/// evaluated term by term without any shift.
pub fn brute_info_nce(anchors: ArrayView2<'_, f64>, cands: ArrayView2<'_, f64>, tau: f64) -> f64 {
    let n = anchors.nrows();
    let row = |m: ArrayView2<'_, f64>, i: usize| m.row(i).to_vec();
    let mut total = 0.0;
    for i in 0..n {
        let a = row(anchors, i);
        let num = (cosine(&a, &row(cands, i)) / tau).exp();
        let den: f64 = (0..n).map(|j| (cosine(&a, &row(cands, j)) / tau).exp()).sum();
        total -= (num / den).ln();
    }
    total / n as f64
}

/// Adapter forward written out per output coordinate.
pub fn brute_adapter(
    w1: &Array2<f64>,
    b1: &Array1<f64>,
    w2: &Array2<f64>,
    b2: &Array1<f64>,
    slope: f64,
    x: ArrayView2<'_, f64>,
) -> Array2<f64> {
    let mut out = Array2::zeros((x.nrows(), w2.nrows()));
    for r in 0..x.nrows() {
        let hidden: Vec<f64> = (0..w1.nrows())
            .map(|h| {
                let z = b1[h] + (0..w1.ncols()).map(|k| w1[[h, k]] * x[[r, k]]).sum::<f64>();
                if z < 0.0 {
                    slope * z
                } else {
                    z
                }
            })
            .collect();
        for o in 0..w2.nrows() {
            out[[r, o]] = b2[o] + hidden.iter().enumerate().map(|(h, v)| w2[[o, h]] * v).sum::<f64>();
        }
    }
    out
}

/// Top-`n` items per user by full sort: score descending, index ascending.
pub fn naive_top(scores: &Array2<f64>, masked: &[Vec<u32>], u: usize, n: usize) -> Vec<u32> {
    let mut all: Vec<(f64, u32)> = (0..scores.ncols() as u32)
        .filter(|v| !masked[u].contains(v))
        .map(|v| (scores[[u, v as usize]], v))
        .collect();
    all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    all.into_iter().take(n).map(|(_, v)| v).collect()
}

pub fn brute_recall(tops: &[Vec<u32>], truths: &[Vec<u32>], n: usize) -> f64 {
    let per: Vec<f64> = tops
        .iter()
        .zip(truths)
        .map(|(t, g)| t.iter().take(n).filter(|v| g.contains(v)).count() as f64 / g.len() as f64)
        .collect();
    per.iter().sum::<f64>() / per.len() as f64
}

pub fn brute_ndcg(tops: &[Vec<u32>], truths: &[Vec<u32>], n: usize) -> f64 {
    let per: Vec<f64> = tops
        .iter()
        .zip(truths)
        .map(|(t, g)| {
            let mut dcg = 0.0;
            for (r, v) in t.iter().take(n).enumerate() {
                if g.contains(v) {
                    dcg += 1.0 / ((r + 2) as f64).log2();
                }
            }
            let mut idcg = 0.0;
            for r in 0..g.len().min(n) {
                idcg += 1.0 / ((r + 2) as f64).log2();
            }
            dcg / idcg
        })
        .collect();
    per.iter().sum::<f64>() / per.len() as f64
}

/// Central differences of `f` at `x`, perturbing every coordinate.
pub fn central_diff(x: &mut [f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + h;
        let up = f(x);
        x[i] = orig - h;
        let down = f(x);
        x[i] = orig;
        g[i] = (up - down) / (2.0 * h);
    }
    g
}

/// `‖a - b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale < 1e-12 {
        0.0
    } else {
        diff / scale
    }
}
