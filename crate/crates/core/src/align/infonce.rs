use ndarray::{Array1, Array2, ArrayView2};

use super::adapter::{AdapterGrads, AdapterNet};
use crate::par;
use crate::{Error, Result};

/// Norms below this are clamped when normalizing for cosine similarity.
pub const COSINE_EPS: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct InfoNceOutput {
    pub loss: f64,
    pub grad_anchors: Array2<f64>,
    pub grad_candidates: Array2<f64>,
}

/// Row-normalizes `m`, returning the unit rows and the (clamped) norms.
/// An exactly-zero row has no direction and is rejected.
fn normalize_rows(m: ArrayView2<'_, f64>, what: &str) -> Result<(Array2<f64>, Array1<f64>)> {
    let mut norms = Array1::zeros(m.nrows());
    for (i, row) in m.rows().into_iter().enumerate() {
        let n = row.dot(&row).sqrt();
        if n == 0.0 {
            return Err(Error::Degenerate(format!("{what} row {i} has zero norm")));
        }
        if !n.is_finite() {
            return Err(Error::Divergence(format!("{what} row {i} is not finite")));
        }
        norms[i] = n.max(COSINE_EPS);
    }
    let mut unit = m.as_standard_layout().into_owned();
    par::for_each_row_mut(&mut unit, |i, mut r| r /= norms[i]);
    Ok((unit, norms))
}

/// Gradient through `x -> x / max(|x|, eps)` for every row, in place.
fn normalize_backward(mut grad: Array2<f64>, unit: &Array2<f64>, norms: &Array1<f64>) -> Array2<f64> {
    par::for_each_row_mut(&mut grad, |i, mut g| {
        let n = norms[i];
        let u = unit.row(i);
        // clamped rows are scaled by a constant, no projection
        if n > COSINE_EPS {
            let along = g.dot(&u);
            g.scaled_add(-along, &u);
        }
        g /= n;
    });
    grad
}

/// `-(1/n) Σ_i [z_ii - logsumexp_j z_ij]` with `z = scale * sims`, and its
/// gradient with respect to `sims`, softmax taken along each row.
pub(crate) fn diagonal_cross_entropy(sims: &Array2<f64>, scale: f64) -> (f64, Array2<f64>) {
    let n = sims.nrows();
    let inv_n = 1.0 / n as f64;
    let mut grad = sims.clone();
    let losses = par::map_rows_mut(&mut grad, |i, mut row| {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b)) * scale;
        let diag = row[i] * scale;
        let mut sum = 0.0;
        row.mapv_inplace(|z| {
            let p = (z * scale - max).exp();
            sum += p;
            p
        });
        let c = scale * inv_n / sum;
        row.mapv_inplace(|p| p * c);
        row[i] -= scale * inv_n;
        max + sum.ln() - diag
    });
    (losses.iter().sum::<f64>() * inv_n, grad)
}

/// InfoNCE with cosine critic: anchor `i` must pick candidate `i` among all
/// `n` candidates, logits `cos(anchor_i, candidate_j) / tau`.
pub fn info_nce(
    anchors: ArrayView2<'_, f64>,
    candidates: ArrayView2<'_, f64>,
    tau: f64,
) -> Result<InfoNceOutput> {
    info_nce_impl(anchors, candidates, tau, true)
}

fn info_nce_impl(
    anchors: ArrayView2<'_, f64>,
    candidates: ArrayView2<'_, f64>,
    tau: f64,
    candidate_grad: bool,
) -> Result<InfoNceOutput> {
    let n = anchors.nrows();
    if n < 2 {
        return Err(Error::InvalidInput(format!("InfoNCE needs at least 2 pairs, got {n}")));
    }
    if candidates.nrows() != n || candidates.ncols() != anchors.ncols() {
        return Err(Error::InvalidInput(format!(
            "anchor shape {:?} does not match candidate shape {:?}",
            anchors.shape(),
            candidates.shape()
        )));
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidInput(format!("temperature must be positive, got {tau}")));
    }
    let (ua, na) = normalize_rows(anchors, "anchor")?;
    let (uc, nc) = normalize_rows(candidates, "candidate")?;
    let (loss, grad_cos) = diagonal_cross_entropy(&ua.dot(&uc.t()), 1.0 / tau);
    let grad_anchors = normalize_backward(grad_cos.dot(&uc), &ua, &na);
    let grad_candidates = if candidate_grad {
        normalize_backward(grad_cos.t().dot(&ua), &uc, &nc)
    } else {
        Array2::zeros((0, candidates.ncols()))
    };
    Ok(InfoNceOutput {
        loss,
        grad_anchors,
        grad_candidates,
    })
}

#[derive(Clone, Debug)]
pub struct AlignmentOutput {
    pub loss: f64,
    /// Gradient with respect to the collaborative representations.
    pub grad_repr: Array2<f64>,
    pub grad_adapter: AdapterGrads,
}

/// Contrastive alignment: critic `exp(cos(σ↓(s_j), e_i) / tau)`, with
/// `e_i` the anchor and the down-projected semantic vectors as candidates.
pub fn contrastive_info_loss(
    repr: ArrayView2<'_, f64>,
    semantic: ArrayView2<'_, f64>,
    net_down: &AdapterNet,
    tau: f64,
) -> Result<AlignmentOutput> {
    let cache = net_down.forward(semantic);
    let out = info_nce(repr, cache.output.view(), tau)?;
    let (grad_adapter, _) = net_down.backward(&cache, out.grad_candidates.view());
    Ok(AlignmentOutput {
        loss: out.loss,
        grad_repr: out.grad_anchors,
        grad_adapter,
    })
}

/// Generative alignment: critic `exp(cos(s_j, σ↑(ê_i)) / tau)` over the
/// representations of masked entities; negatives are the other masked
/// entities. Returns `None` when fewer than two entities are given.
pub fn generative_info_loss(
    masked_repr: ArrayView2<'_, f64>,
    masked_semantic: ArrayView2<'_, f64>,
    net_up: &AdapterNet,
    tau: f64,
) -> Result<Option<AlignmentOutput>> {
    if masked_repr.nrows() < 2 {
        log::warn!(
            "generative alignment skipped: {} masked entities (need at least 2)",
            masked_repr.nrows()
        );
        return Ok(None);
    }
    let cache = net_up.forward(masked_repr);
    // semantic vectors are fixed, so their gradient is never formed
    let out = info_nce_impl(cache.output.view(), masked_semantic, tau, false)?;
    let (grad_adapter, grad_repr) = net_up.backward(&cache, out.grad_anchors.view());
    Ok(Some(AlignmentOutput {
        loss: out.loss,
        grad_repr,
        grad_adapter,
    }))
}

/// `L = L_rec + lambda * L_info`.
pub fn total_loss(rec_loss: f64, info_loss: f64, lambda: f64) -> f64 {
    rec_loss + lambda * info_loss
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    #[test]
    fn uniform_similarities_give_ln_n() {
        let a = Array2::from_elem((5, 3), 1.0);
        let out = info_nce(a.view(), a.view(), 0.7).unwrap();
        assert!((out.loss - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_unit_rows_closed_form() {
        let e = Array2::<f64>::eye(4);
        let out = info_nce(e.view(), e.view(), 1.0).unwrap();
        let e1 = std::f64::consts::E;
        let expect = ((e1 + 3.0) / e1).ln();
        assert!((out.loss - expect).abs() < 1e-12);
        assert!((expect - 0.74367).abs() < 1e-5);
    }

    #[test]
    fn zero_norm_is_degenerate() {
        let a = array![[1.0, 0.0], [0.0, 0.0]];
        let b = array![[1.0, 0.0], [0.0, 1.0]];
        assert!(matches!(info_nce(a.view(), b.view(), 1.0), Err(Error::Degenerate(_))));
        // tiny but nonzero norms are clamped, not rejected
        let a = array![[1e-14, 0.0], [0.0, 1.0]];
        assert!(info_nce(a.view(), b.view(), 1.0).is_ok());
    }

    #[test]
    fn single_pair_rejected_and_generative_skips() {
        let a = array![[1.0, 0.0]];
        assert!(info_nce(a.view(), a.view(), 1.0).is_err());
        let net = AdapterNet::zeros(super::super::adapter::Direction::Up, 2, 2);
        assert!(generative_info_loss(a.view(), a.view(), &net, 1.0).unwrap().is_none());
    }

    #[test]
    fn total_loss_arithmetic() {
        assert!((total_loss(0.5, 0.2, 2.0) - 0.9).abs() < 1e-15);
        assert_eq!(total_loss(0.5, 0.2, 0.0), 0.5);
        assert_eq!(total_loss(0.5, 0.25, 1.0), 0.75);
    }

    proptest! {
        #[test]
        fn shift_invariant_logits(
            vals in proptest::collection::vec(-5.0f64..5.0, 16),
            shift in -50.0f64..50.0,
        ) {
            let z = Array2::from_shape_vec((4, 4), vals).unwrap();
            let (l1, g1) = diagonal_cross_entropy(&z, 1.0);
            let (l2, g2) = diagonal_cross_entropy(&(&z + shift), 1.0);
            prop_assert!((l1 - l2).abs() < 1e-10);
            for (a, b) in g1.iter().zip(g2.iter()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            prop_assert!(l1 > 0.0);
        }
    }
}
