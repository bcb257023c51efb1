use std::time::Instant;

use ndarray::{Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{adam_step, Mode, OptimizerState, TrainConfig};
use crate::align::{
    contrastive_info_loss, generative_info_loss, sample_mask_rows, total_loss, AdapterGrads,
    AdapterNet, AlignmentOutput, Direction, SemanticStore,
};
use crate::backbone::{
    apply_mask, bpr_loss, collect_mask_gradient, encode, encode_backward, score_all, BatchSampler,
    EmbeddingTable, Triple,
};
use crate::corpus::{NormalizedAdjacency, SplitSet};
use crate::eval::{evaluate_scores, EvalSplit, MetricsReport, DEFAULT_NS};
use crate::{Error, Result};

// Independent random streams, so switching alignment on or off never
// perturbs initialization or batch sampling.
const STREAM_INIT: u64 = 0;
const STREAM_ADAPTER: u64 = 1;
const STREAM_SAMPLE: u64 = 2;
const STREAM_MASK: u64 = 3;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss_rec: f64,
    pub loss_info: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recall20: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ndcg20: Option<f64>,
    /// Wall-clock seconds spent on the epoch's optimization steps
    /// (validation excluded).
    pub sec: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the best validation round (or the last epoch if no
    /// validation ran).
    pub table: EmbeddingTable,
    pub adapter: Option<AdapterNet>,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_validation: Option<MetricsReport>,
    pub epochs_run: usize,
    pub stopped_early: bool,
}

impl TrainOutcome {
    /// Evaluation-time representations: the real table, never the mask row.
    pub fn representations(&self, adj: &NormalizedAdjacency, cfg: &TrainConfig) -> Array2<f64> {
        encode(self.table.weights.view(), adj, &cfg.backbone_config())
    }
}

fn unique_sorted(it: impl Iterator<Item = u32>) -> Vec<u32> {
    let mut v: Vec<u32> = it.collect();
    v.sort_unstable();
    v.dedup();
    v
}

struct Batch {
    triples: Vec<Triple>,
    users: Vec<u32>,
    items: Vec<u32>,
}

impl Batch {
    fn new(triples: Vec<Triple>) -> Self {
        let users = unique_sorted(triples.iter().map(|t| t.user));
        let items = unique_sorted(triples.iter().flat_map(|t| [t.pos, t.neg]));
        Self {
            triples,
            users,
            items,
        }
    }
}

/// Alignment loss over one entity type, accumulated into the shared
/// representation gradient and adapter gradient.
struct InfoAccumulator<'a> {
    n_users: usize,
    lambda: f64,
    grad_e: &'a mut Array2<f64>,
    grad_net: &'a mut AdapterGrads,
    loss: f64,
}

impl InfoAccumulator<'_> {
    fn add(&mut self, node_rows: &[usize], out: Option<AlignmentOutput>) {
        let Some(mut out) = out else { return };
        self.loss += out.loss;
        for (k, &r) in node_rows.iter().enumerate() {
            self.grad_e
                .row_mut(r)
                .scaled_add(self.lambda, &out.grad_repr.row(k));
        }
        out.grad_adapter.scale(self.lambda);
        self.grad_net.add_assign(&out.grad_adapter);
    }

    fn rows_of(&self, users: &[u32], items: &[u32]) -> (Vec<usize>, Vec<usize>) {
        (
            users.iter().map(|&u| u as usize).collect(),
            items.iter().map(|&v| self.n_users + v as usize).collect(),
        )
    }
}

fn select_semantic(m: &Array2<f64>, idx: &[u32]) -> Array2<f64> {
    let idx: Vec<usize> = idx.iter().map(|&i| i as usize).collect();
    m.select(Axis(0), &idx)
}

struct Trainer<'a> {
    cfg: &'a TrainConfig,
    split: &'a SplitSet,
    sem: Option<&'a SemanticStore>,
    adj: NormalizedAdjacency,
    sampler: BatchSampler,
    table: EmbeddingTable,
    adapter: Option<AdapterNet>,
    state: OptimizerState,
    sample_rng: ChaCha8Rng,
    mask_rng: ChaCha8Rng,
}

impl<'a> Trainer<'a> {
    fn new(
        split: &'a SplitSet,
        sem: Option<&'a SemanticStore>,
        cfg: &'a TrainConfig,
        init: Option<EmbeddingTable>,
    ) -> Result<Self> {
        cfg.validate()?;
        let (nu, ni) = (split.n_users(), split.n_items());
        let adj = NormalizedAdjacency::build(&split.train)?;
        let sampler = BatchSampler::new(&split.train)?;

        let table = match init {
            Some(t) => {
                if (t.n_users, t.n_items, t.dim()) != (nu, ni, cfg.dim) {
                    return Err(Error::InvalidInput(format!(
                        "initial table is {}x{} users/items at d_e {}, corpus needs {nu}x{ni} at d_e {}",
                        t.n_users,
                        t.n_items,
                        t.dim(),
                        cfg.dim
                    )));
                }
                if !t.is_finite() {
                    return Err(Error::InvalidInput("initial table has non-finite entries".into()));
                }
                t
            }
            None => EmbeddingTable::random(nu, ni, cfg.dim, cfg.init_std, &mut stream(cfg.seed, STREAM_INIT)),
        };

        let adapter = match cfg.mode {
            Mode::Base => None,
            Mode::Con | Mode::Gen => {
                let sem = sem.ok_or_else(|| {
                    Error::InvalidInput(format!("mode `{}` needs semantic vectors", cfg.mode))
                })?;
                if sem.users.nrows() != nu || sem.items.nrows() != ni {
                    return Err(Error::InvalidInput(format!(
                        "semantic store covers {}x{} users/items, corpus has {nu}x{ni}",
                        sem.users.nrows(),
                        sem.items.nrows()
                    )));
                }
                let dir = if cfg.mode == Mode::Con { Direction::Down } else { Direction::Up };
                let mut rng = stream(cfg.seed, STREAM_ADAPTER);
                Some(AdapterNet::new(dir, sem.dim(), cfg.out_dim(), &mut rng))
            }
        };

        let mut sizes = vec![table.weights.len(), table.mask_token.len()];
        if let Some(net) = &adapter {
            sizes.extend([net.w1.len(), net.b1.len(), net.w2.len(), net.b2.len()]);
        }
        Ok(Self {
            cfg,
            split,
            sem,
            adj,
            sampler,
            table,
            adapter,
            state: OptimizerState::new(&sizes),
            sample_rng: stream(cfg.seed, STREAM_SAMPLE),
            mask_rng: stream(cfg.seed, STREAM_MASK),
        })
    }

    /// One optimization step. Returns `(loss_rec, loss_info)`.
    fn step(&mut self) -> Result<(f64, f64)> {
        let cfg = self.cfg;
        let bb = cfg.backbone_config();
        let nu = self.table.n_users;
        let batch = Batch::new(self.sampler.sample(cfg.batch_size, &mut self.sample_rng));

        let masked_rows = if cfg.mode == Mode::Gen && cfg.mask_ratio > 0.0 {
            sample_mask_rows(self.table.n_nodes(), cfg.mask_ratio, &mut self.mask_rng)
        } else {
            Vec::new()
        };
        let masked_x;
        let x_in: ArrayView2<'_, f64> = if masked_rows.is_empty() {
            self.table.weights.view()
        } else {
            masked_x = apply_mask(self.table.weights.view(), &self.table.mask_token, &masked_rows);
            masked_x.view()
        };

        let e = encode(x_in, &self.adj, &bb);
        let bpr = bpr_loss(e.view(), nu, &batch.triples, cfg.l2_weight, self.table.weights.view())?;
        let mut grad_e = bpr.grad_e;

        let mut grad_net = self.adapter.as_ref().map(AdapterNet::zero_grads);
        let mut info_loss = 0.0;
        if let (Some(net), Some(sem), Some(gn)) = (&self.adapter, self.sem, grad_net.as_mut()) {
            if cfg.lambda > 0.0 {
                let mut acc = InfoAccumulator {
                    n_users: nu,
                    lambda: cfg.lambda,
                    grad_e: &mut grad_e,
                    grad_net: gn,
                    loss: 0.0,
                };
                let (users, items) = match cfg.mode {
                    Mode::Gen => {
                        let is_masked = |r: usize| masked_rows.binary_search(&r).is_ok();
                        let users: Vec<u32> =
                            batch.users.iter().copied().filter(|&u| is_masked(u as usize)).collect();
                        let items: Vec<u32> = batch
                            .items
                            .iter()
                            .copied()
                            .filter(|&v| is_masked(nu + v as usize))
                            .collect();
                        (users, items)
                    }
                    _ => (batch.users.clone(), batch.items.clone()),
                };
                let (urows, irows) = acc.rows_of(&users, &items);
                for (rows, sem_rows) in [
                    (urows, select_semantic(&sem.users, &users)),
                    (irows, select_semantic(&sem.items, &items)),
                ] {
                    if rows.len() < 2 {
                        continue;
                    }
                    let repr = e.select(Axis(0), &rows);
                    let out = match cfg.mode {
                        Mode::Con => Some(contrastive_info_loss(repr.view(), sem_rows.view(), net, cfg.tau)?),
                        _ => generative_info_loss(repr.view(), sem_rows.view(), net, cfg.tau)?,
                    };
                    acc.add(&rows, out);
                }
                info_loss = acc.loss;
            }
        }

        let loss = total_loss(bpr.loss, info_loss, cfg.lambda);
        if !loss.is_finite() {
            return Err(Error::Divergence(format!(
                "non-finite loss at step {} (rec {}, info {info_loss})",
                self.state.step + 1,
                bpr.loss
            )));
        }

        let mut grad_x = encode_backward(grad_e.view(), &self.adj, &bb);
        let grad_mask = collect_mask_gradient(&mut grad_x, &masked_rows);
        grad_x += &bpr.grad_x;

        let mut params: Vec<&mut [f64]> = vec![
            self.table.weights.as_slice_mut().expect("standard layout"),
            self.table.mask_token.as_slice_mut().expect("standard layout"),
        ];
        let mut grads: Vec<&[f64]> = vec![
            grad_x.as_slice().expect("standard layout"),
            grad_mask.as_slice().expect("standard layout"),
        ];
        if let (Some(net), Some(gn)) = (self.adapter.as_mut(), grad_net.as_ref()) {
            params.extend(net.params_mut());
            grads.extend(gn.slices());
        }
        adam_step(&mut params, &grads, &mut self.state, &cfg.adam())?;
        Ok((bpr.loss, info_loss))
    }

    fn validate(&self) -> MetricsReport {
        let e = encode(self.table.weights.view(), &self.adj, &self.cfg.backbone_config());
        let scores = score_all(e.view(), self.table.n_users);
        evaluate_scores(scores.view(), self.split, EvalSplit::Validation, &DEFAULT_NS)
    }
}

/// Trains in the mode named by `cfg.mode`, reporting every epoch to
/// `on_epoch` as it completes.
///
/// `init` replaces the random initial table (pre-training). Each epoch runs
/// `ceil(|train| / batch_size)` uniformly sampled batches; validation
/// Recall@20 is checked every `eval_every` epochs and training stops after
/// `patience` checks without strict improvement.
pub fn train_with(
    split: &SplitSet,
    sem: Option<&SemanticStore>,
    cfg: &TrainConfig,
    init: Option<EmbeddingTable>,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    let mut tr = Trainer::new(split, sem, cfg, init)?;
    let n_batches = split.train.len().div_ceil(cfg.batch_size).max(1);

    let mut log = Vec::new();
    let mut best: Option<(f64, usize, EmbeddingTable, Option<AdapterNet>, MetricsReport)> = None;
    let mut bad_rounds = 0usize;
    let mut stopped_early = false;
    let mut epochs_run = 0;

    for epoch in 1..=cfg.max_epochs {
        let start = Instant::now();
        let (mut rec, mut info) = (0.0, 0.0);
        for _ in 0..n_batches {
            let (r, i) = tr.step()?;
            rec += r;
            info += i;
        }
        let sec = start.elapsed().as_secs_f64();
        epochs_run = epoch;

        let mut entry = EpochLog {
            epoch,
            loss_rec: rec / n_batches as f64,
            loss_info: info / n_batches as f64,
            recall20: None,
            ndcg20: None,
            sec,
        };
        let mut stop = false;
        if epoch % cfg.eval_every == 0 {
            let report = tr.validate();
            let r20 = report.recall_at(20);
            entry.recall20 = Some(r20);
            entry.ndcg20 = Some(report.ndcg_at(20));
            if best.as_ref().is_none_or(|b| r20 > b.0) {
                best = Some((r20, epoch, tr.table.clone(), tr.adapter.clone(), report));
                bad_rounds = 0;
            } else {
                bad_rounds += 1;
                stop = bad_rounds >= cfg.patience;
            }
        }
        log::debug!(
            "epoch {epoch}: rec {:.5} info {:.5} recall@20 {:?}",
            entry.loss_rec,
            entry.loss_info,
            entry.recall20
        );
        on_epoch(&entry);
        log.push(entry);
        if stop {
            stopped_early = true;
            break;
        }
    }

    Ok(match best {
        Some((_, best_epoch, table, adapter, report)) => TrainOutcome {
            table,
            adapter,
            log,
            best_epoch,
            best_validation: Some(report),
            epochs_run,
            stopped_early,
        },
        None => TrainOutcome {
            table: tr.table,
            adapter: tr.adapter,
            log,
            best_epoch: epochs_run,
            best_validation: None,
            epochs_run,
            stopped_early,
        },
    })
}

pub fn train(
    split: &SplitSet,
    sem: Option<&SemanticStore>,
    cfg: &TrainConfig,
    init: Option<EmbeddingTable>,
) -> Result<TrainOutcome> {
    train_with(split, sem, cfg, init, &mut |_| {})
}

fn require_mode(cfg: &TrainConfig, mode: Mode) -> Result<()> {
    if cfg.mode != mode {
        return Err(Error::InvalidInput(format!(
            "configuration is for mode `{}`, expected `{mode}`",
            cfg.mode
        )));
    }
    Ok(())
}

pub fn train_base(split: &SplitSet, cfg: &TrainConfig) -> Result<TrainOutcome> {
    require_mode(cfg, Mode::Base)?;
    train(split, None, cfg, None)
}

pub fn train_con(split: &SplitSet, sem: &SemanticStore, cfg: &TrainConfig) -> Result<TrainOutcome> {
    require_mode(cfg, Mode::Con)?;
    train(split, Some(sem), cfg, None)
}

pub fn train_gen(split: &SplitSet, sem: &SemanticStore, cfg: &TrainConfig) -> Result<TrainOutcome> {
    require_mode(cfg, Mode::Gen)?;
    train(split, Some(sem), cfg, None)
}
