use ndarray::{Array2, ArrayView2};

use super::{encode, encode_backward, row_sq_norm, BackboneConfig, Triple};
use crate::corpus::NormalizedAdjacency;
use crate::{Error, Result};

/// `ln σ(z)` without overflow for large `|z|`.
pub fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let ez = z.exp();
        ez / (1.0 + ez)
    }
}

#[derive(Clone, Debug)]
pub struct BprOutput {
    /// `rank_loss + reg_loss`.
    pub loss: f64,
    pub rank_loss: f64,
    pub reg_loss: f64,
    /// Gradient with respect to the representations `e`.
    pub grad_e: Array2<f64>,
    /// Gradient of the L2 term with respect to the initial embeddings `x`.
    pub grad_x: Array2<f64>,
}

/// Mean pairwise ranking loss `-ln σ(e_u·e_pos - e_u·e_neg)` over the batch
/// plus `l2_weight` times the batch-mean squared norm of the three
/// participating rows of `x`.
///
/// Rows of `e` and `x` are laid out users first, then items.
pub fn bpr_loss(
    e: ArrayView2<'_, f64>,
    n_users: usize,
    batch: &[Triple],
    l2_weight: f64,
    x: ArrayView2<'_, f64>,
) -> Result<BprOutput> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty BPR batch".into()));
    }
    let inv_b = 1.0 / batch.len() as f64;
    let mut grad_e = Array2::zeros(e.raw_dim());
    let mut grad_x = Array2::zeros(x.raw_dim());
    let mut rank_loss = 0.0;
    let mut reg_loss = 0.0;

    for t in batch {
        let (u, p, n) = (
            t.user as usize,
            n_users + t.pos as usize,
            n_users + t.neg as usize,
        );
        let eu = e.row(u);
        let gap = eu.dot(&e.row(p)) - eu.dot(&e.row(n));
        rank_loss -= log_sigmoid(gap);
        // d/dgap of -ln σ(gap)
        let g = -sigmoid(-gap) * inv_b;
        let diff = &e.row(p) - &e.row(n);
        grad_e.row_mut(u).scaled_add(g, &diff);
        grad_e.row_mut(p).scaled_add(g, &eu);
        grad_e.row_mut(n).scaled_add(-g, &eu);

        if l2_weight != 0.0 {
            reg_loss += row_sq_norm(x, u) + row_sq_norm(x, p) + row_sq_norm(x, n);
            let c = 2.0 * l2_weight * inv_b;
            for r in [u, p, n] {
                grad_x.row_mut(r).scaled_add(c, &x.row(r));
            }
        }
    }
    rank_loss *= inv_b;
    reg_loss *= l2_weight * inv_b;
    let loss = rank_loss + reg_loss;
    if !loss.is_finite() {
        return Err(Error::Divergence(format!(
            "non-finite BPR loss (rank {rank_loss}, reg {reg_loss}) on a batch of {}",
            batch.len()
        )));
    }
    Ok(BprOutput {
        loss,
        rank_loss,
        reg_loss,
        grad_e,
        grad_x,
    })
}

/// Encodes `x`, evaluates [`bpr_loss`] and returns the loss with its full
/// gradient with respect to `x`.
pub fn bpr_loss_through_encode(
    x: ArrayView2<'_, f64>,
    n_users: usize,
    adj: &NormalizedAdjacency,
    cfg: &BackboneConfig,
    batch: &[Triple],
) -> Result<(f64, Array2<f64>)> {
    let e = encode(x, adj, cfg);
    let out = bpr_loss(e.view(), n_users, batch, cfg.l2_weight, x)?;
    let mut grad = encode_backward(out.grad_e.view(), adj, cfg);
    grad += &out.grad_x;
    Ok((out.loss, grad))
}
