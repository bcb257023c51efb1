//! Random instances comparing library results with the brute-force
//! references. Each returns the worst absolute deviation (0 for exact).

use rand::Rng;
use semrec_core::align::{contrastive_info_loss, generative_info_loss, AdapterNet, Direction};
use semrec_core::backbone::{encode, BackboneConfig, BackboneKind};
use semrec_core::corpus::NormalizedAdjacency;
use semrec_core::eval::{ndcg_at_n, rank_all, recall_at_n};

use super::*;

/// Both backbones against explicit dense powers, graphs of at most 20 nodes.
pub fn encode_instance(seed: u64) -> f64 {
    let mut r = rng(seed);
    let nu = r.gen_range(1..=10);
    let ni = r.gen_range(1..=10);
    let set = random_graph(nu, ni, r.gen_range(0.1..0.6), &mut r);
    let adj = NormalizedAdjacency::build(&set).unwrap();
    let dense = dense_normalized(&set);
    let d = r.gen_range(1..=4);
    let x = uniform_matrix(nu + ni, d, -1.0, 1.0, &mut r);
    let mut worst = check_adjacency(&adj, &dense);
    for kind in [BackboneKind::LightGcn, BackboneKind::Gccf] {
        let cfg = BackboneConfig {
            kind,
            layers: r.gen_range(0..=4),
            l2_weight: 0.0,
        };
        let got = encode(x.view(), &adj, &cfg);
        let want = dense_encode(&dense, &x, &cfg);
        assert_eq!(got.dim(), want.dim());
        worst = got.iter().zip(want.iter()).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
    }
    worst
}

/// Both alignment losses against the term-by-term softmax, `n <= 16`.
pub fn info_nce_instance(seed: u64) -> f64 {
    let mut r = rng(seed);
    let n = r.gen_range(2..=16);
    let (d_s, d_out) = (r.gen_range(2..=8), r.gen_range(2..=8));
    let tau = r.gen_range(0.1..2.0);
    let e = uniform_matrix(n, d_out, -1.0, 1.0, &mut r);
    let s = uniform_matrix(n, d_s, -1.0, 1.0, &mut r);

    let down = AdapterNet::new(Direction::Down, d_s, d_out, &mut r);
    let con = contrastive_info_loss(e.view(), s.view(), &down, tau).unwrap().loss;
    let con_ref = brute_info_nce(e.view(), down.apply(s.view()).view(), tau);
    let up = AdapterNet::new(Direction::Up, d_s, d_out, &mut r);
    let gen = generative_info_loss(e.view(), s.view(), &up, tau).unwrap().unwrap().loss;
    let gen_ref = brute_info_nce(up.apply(e.view()).view(), s.view(), tau);
    // the adapter itself against its coordinate-wise definition
    let fwd = brute_adapter(&up.w1, &up.b1, &up.w2, &up.b2, semrec_core::align::LEAKY_SLOPE, e.view());
    let fwd_err = (&fwd - &up.apply(e.view())).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (con - con_ref).abs().max((gen - gen_ref).abs()).max(fwd_err)
}

/// rank_all, Recall@N and NDCG@N on a random `50 x 80` instance. Scores are
/// quantized so ties occur. Returns the worst metric deviation; ranked
/// lists must match exactly (asserted).
pub fn ranking_instance(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (nu, ni) = (50, 80);
    let scores = uniform_matrix(nu, ni, 0.0, 1.0, &mut r).mapv(|v| (v * 20.0).floor());
    let masked: Vec<Vec<u32>> = (0..nu)
        .map(|_| (0..ni as u32).filter(|_| r.gen_bool(0.2)).collect())
        .collect();
    let truth: Vec<Vec<u32>> = (0..nu)
        .map(|u| {
            let mut t: Vec<u32> = (0..ni as u32)
                .filter(|v| !masked[u].contains(v) && r.gen_bool(0.1))
                .collect();
            if t.is_empty() && u % 2 == 0 {
                t.push((0..ni as u32).find(|v| !masked[u].contains(v)).unwrap());
            }
            t
        })
        .collect();
    let ns = [5, 10, 20];
    let res = rank_all(scores.view(), &masked, &truth, &ns);
    let users: Vec<usize> = (0..nu).filter(|&u| !truth[u].is_empty()).collect();
    assert_eq!(res.users.iter().map(|&u| u as usize).collect::<Vec<_>>(), users);
    let tops: Vec<Vec<u32>> = users.iter().map(|&u| naive_top(&scores, &masked, u, 20)).collect();
    assert_eq!(res.ranked, tops, "ranked lists differ from the full-sort oracle");
    let truths: Vec<Vec<u32>> = users.iter().map(|&u| truth[u].clone()).collect();
    let mut worst = 0.0f64;
    for n in ns {
        worst = worst
            .max((recall_at_n(&res, n) - brute_recall(&tops, &truths, n)).abs())
            .max((ndcg_at_n(&res, n) - brute_ndcg(&tops, &truths, n)).abs());
    }
    worst
}
