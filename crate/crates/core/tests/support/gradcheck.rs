//! Random small instances comparing analytic gradients with central
//! differences. Each function returns the worst norm-wise relative error
//! over the gradients it checks.

use ndarray::{Array2, Axis};
use rand::seq::index::sample;
use rand::Rng;
use semrec_core::align::{
    contrastive_info_loss, generative_info_loss, AdapterNet, Direction,
};
use semrec_core::backbone::{
    apply_mask, bpr_loss, bpr_loss_through_encode, collect_mask_gradient, encode, encode_backward,
    sample_batch, BackboneConfig, BackboneKind,
};
use semrec_core::corpus::NormalizedAdjacency;

use super::{central_diff, random_graph, rel_err, rng, uniform_matrix};

const H: f64 = 1e-6;

fn kind(rng: &mut impl Rng) -> BackboneKind {
    if rng.gen_bool(0.5) {
        BackboneKind::LightGcn
    } else {
        BackboneKind::Gccf
    }
}

/// BPR with L2 through a random backbone, gradient with respect to `x`.
pub fn bpr_instance(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (nu, ni, d) = (5, 5, 3);
    let set = random_graph(nu, ni, 0.3, &mut r);
    let adj = NormalizedAdjacency::build(&set).unwrap();
    let cfg = BackboneConfig {
        kind: kind(&mut r),
        layers: r.gen_range(0..=3),
        l2_weight: r.gen_range(0.0..0.1),
    };
    let batch = sample_batch(&set, 8, seed).unwrap();
    let mut x = uniform_matrix(nu + ni, d, -1.0, 1.0, &mut r);
    let (_, grad) = bpr_loss_through_encode(x.view(), nu, &adj, &cfg, &batch).unwrap();
    let shape = x.raw_dim();
    let num = central_diff(x.as_slice_mut().unwrap(), H, |p| {
        let xv = ndarray::ArrayView2::from_shape(shape, p).unwrap();
        bpr_loss_through_encode(xv, nu, &adj, &cfg, &batch).unwrap().0
    });
    rel_err(grad.as_slice().unwrap(), &num)
}

fn random_net(dir: Direction, d_s: usize, d_out: usize, r: &mut impl Rng) -> AdapterNet {
    let mut net = AdapterNet::new(dir, d_s, d_out, r);
    for p in net.params_mut() {
        for v in p.iter_mut() {
            *v = r.gen_range(-1.0..1.0);
        }
    }
    net
}

/// Perturbs every adapter parameter of a clone of `net` in turn.
fn adapter_param_diff(net: &AdapterNet, f: impl Fn(&AdapterNet) -> f64) -> Vec<f64> {
    let mut out = Vec::new();
    for k in 0..4 {
        let mut probe = net.clone();
        let len = probe.params_mut()[k].len();
        for i in 0..len {
            let orig = probe.params_mut()[k][i];
            probe.params_mut()[k][i] = orig + H;
            let up = f(&probe);
            probe.params_mut()[k][i] = orig - H;
            let down = f(&probe);
            probe.params_mut()[k][i] = orig;
            out.push((up - down) / (2.0 * H));
        }
    }
    out
}

fn flat(grads: &semrec_core::align::AdapterGrads) -> Vec<f64> {
    grads.slices().iter().flat_map(|s| s.iter().copied()).collect()
}

/// Contrastive loss: gradients with respect to the representations and
/// every down-adapter parameter.
pub fn contrastive_instance(seed: u64) -> f64 {
    let mut r = rng(seed);
    let n = r.gen_range(2..=7);
    let (d_s, d_out) = (r.gen_range(2..=6), r.gen_range(2..=5));
    let tau = r.gen_range(0.2..1.5);
    let net = random_net(Direction::Down, d_s, d_out, &mut r);
    let mut e = uniform_matrix(n, d_out, -1.0, 1.0, &mut r);
    let s = uniform_matrix(n, d_s, -1.0, 1.0, &mut r);
    let out = contrastive_info_loss(e.view(), s.view(), &net, tau).unwrap();

    let shape = e.raw_dim();
    let num_e = central_diff(e.as_slice_mut().unwrap(), H, |p| {
        let ev = ndarray::ArrayView2::from_shape(shape, p).unwrap();
        contrastive_info_loss(ev, s.view(), &net, tau).unwrap().loss
    });
    let num_w = adapter_param_diff(&net, |nt| contrastive_info_loss(e.view(), s.view(), nt, tau).unwrap().loss);
    rel_err(out.grad_repr.as_slice().unwrap(), &num_e).max(rel_err(&flat(&out.grad_adapter), &num_w))
}

/// Generative loss: gradients with respect to the masked representations
/// and every up-adapter parameter.
pub fn generative_instance(seed: u64) -> f64 {
    let mut r = rng(seed);
    let n = r.gen_range(2..=7);
    let (d_s, d_out) = (r.gen_range(2..=6), r.gen_range(2..=5));
    let tau = r.gen_range(0.2..1.5);
    let net = random_net(Direction::Up, d_s, d_out, &mut r);
    let mut e = uniform_matrix(n, d_out, -1.0, 1.0, &mut r);
    let s = uniform_matrix(n, d_s, -1.0, 1.0, &mut r);
    let loss = |ev: ndarray::ArrayView2<'_, f64>, nt: &AdapterNet| {
        generative_info_loss(ev, s.view(), nt, tau).unwrap().unwrap().loss
    };
    let out = generative_info_loss(e.view(), s.view(), &net, tau).unwrap().unwrap();
    let shape = e.raw_dim();
    let num_e = central_diff(e.as_slice_mut().unwrap(), H, |p| {
        loss(ndarray::ArrayView2::from_shape(shape, p).unwrap(), &net)
    });
    let num_w = adapter_param_diff(&net, |nt| loss(e.view(), nt));
    rel_err(out.grad_repr.as_slice().unwrap(), &num_e).max(rel_err(&flat(&out.grad_adapter), &num_w))
}

/// Either adapter under the scalar objective `Σ out ⊙ R`.
pub fn adapter_instance(seed: u64) -> f64 {
    let mut r = rng(seed);
    let dir = if r.gen_bool(0.5) { Direction::Down } else { Direction::Up };
    let (d_s, d_out, n) = (r.gen_range(1..=6), r.gen_range(1..=6), r.gen_range(1..=5));
    let net = random_net(dir, d_s, d_out, &mut r);
    let mut x = uniform_matrix(n, net.in_dim(), -1.0, 1.0, &mut r);
    let weights = uniform_matrix(n, net.out_dim(), -1.0, 1.0, &mut r);
    let objective = |nt: &AdapterNet, xv: ndarray::ArrayView2<'_, f64>| (&nt.apply(xv) * &weights).sum();
    let cache = net.forward(x.view());
    let (grads, grad_in) = net.backward(&cache, weights.view());
    let shape = x.raw_dim();
    let num_x = central_diff(x.as_slice_mut().unwrap(), H, |p| {
        objective(&net, ndarray::ArrayView2::from_shape(shape, p).unwrap())
    });
    let num_w = adapter_param_diff(&net, |nt| objective(nt, x.view()));
    rel_err(grad_in.as_slice().unwrap(), &num_x).max(rel_err(&flat(&grads), &num_w))
}

/// A whole generative training objective: masked encoding, BPR with L2 on
/// the real rows, and the generative term on masked batch entities.
/// Checks gradients with respect to `x` and the mask token.
pub fn masked_objective_instance(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (nu, ni, d, d_s) = (5, 6, 3, 4);
    let set = random_graph(nu, ni, 0.3, &mut r);
    let adj = NormalizedAdjacency::build(&set).unwrap();
    let cfg = BackboneConfig {
        kind: kind(&mut r),
        layers: r.gen_range(1..=2),
        l2_weight: 0.05,
    };
    let tau = 0.5;
    let lambda = r.gen_range(0.5..2.0);
    let batch = sample_batch(&set, 6, seed).unwrap();
    let mut rows: Vec<usize> = sample(&mut r, nu + ni, 5).into_vec();
    rows.sort_unstable();
    let net = random_net(Direction::Up, d_s, cfg.out_dim(d), &mut r);
    let sem = uniform_matrix(rows.len(), d_s, -1.0, 1.0, &mut r);
    let x0 = uniform_matrix(nu + ni, d, -1.0, 1.0, &mut r);
    let token0 = uniform_matrix(1, d, -1.0, 1.0, &mut r).row(0).to_owned();

    let objective = |x: &Array2<f64>, token: &ndarray::Array1<f64>| {
        let masked = apply_mask(x.view(), token, &rows);
        let e = encode(masked.view(), &adj, &cfg);
        let rec = bpr_loss(e.view(), nu, &batch, cfg.l2_weight, x.view()).unwrap().loss;
        let info = generative_info_loss(e.select(Axis(0), &rows).view(), sem.view(), &net, tau)
            .unwrap()
            .unwrap()
            .loss;
        rec + lambda * info
    };

    // analytic
    let masked = apply_mask(x0.view(), &token0, &rows);
    let e = encode(masked.view(), &adj, &cfg);
    let bpr = bpr_loss(e.view(), nu, &batch, cfg.l2_weight, x0.view()).unwrap();
    let info = generative_info_loss(e.select(Axis(0), &rows).view(), sem.view(), &net, tau)
        .unwrap()
        .unwrap();
    let mut grad_e = bpr.grad_e.clone();
    for (k, &row) in rows.iter().enumerate() {
        grad_e.row_mut(row).scaled_add(lambda, &info.grad_repr.row(k));
    }
    let mut grad_x = encode_backward(grad_e.view(), &adj, &cfg);
    let grad_token = collect_mask_gradient(&mut grad_x, &rows);
    grad_x += &bpr.grad_x;

    let mut x = x0.clone();
    let shape = x.raw_dim();
    let num_x = central_diff(x.as_slice_mut().unwrap(), H, |p| {
        objective(&Array2::from_shape_vec(shape, p.to_vec()).unwrap(), &token0)
    });
    let mut token = token0.clone();
    let num_t = central_diff(token.as_slice_mut().unwrap(), H, |p| {
        objective(&x0, &ndarray::Array1::from(p.to_vec()))
    });
    rel_err(grad_x.as_slice().unwrap(), &num_x).max(rel_err(grad_token.as_slice().unwrap(), &num_t))
}
