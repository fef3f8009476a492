//! Ranking object prediction: R-GCN entity updates and GRU relation updates
//! over a history window, fused with projected text vectors in a ConvTransE
//! decoder, trained with softmax cross-entropy over all entities.

mod convtranse;
mod evolve;
mod rgcn;

pub use convtranse::{decoder_backward, decoder_forward, top_k, Decoder, DecoderCache, RankingOutput};
pub use evolve::{evolve_backward, evolve_relations, EvolveCache};
pub use rgcn::{rgcn_backward, rgcn_forward, EdgeList, RgcnCache, RgcnLayer};

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{EmbeddingError, EmbeddingStore};
use crate::event_store::{group_by_day, DailyGraph, DatasetSplit, Quintuple, Vocabulary};
use crate::metrics::{rank_of, DEFAULT_KS};
use crate::nn::{
    adam_step, clip_global_norm, cross_entropy_softmax, read_checkpoint, write_checkpoint,
    AdamConfig, Checkpoint, Dropout, GruParams, NnError, Param, SeedStream, Tensor,
};

#[derive(Debug, Error)]
pub enum Op1Error {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("training split is empty")]
    EmptyTrain,
    #[error("edge of record {uid} references an unknown entity or relation")]
    InvalidEdge { uid: u64 },
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Op1Config {
    /// Days of history before the query day.
    pub history_len: usize,
    pub entity_dim: usize,
    pub rgcn_layers: usize,
    pub rgcn_dropout: f64,
    pub conv_kernels: usize,
    pub conv_width: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub patience: usize,
    pub grad_clip: f64,
    /// Feed query text vectors to the decoder; when false the text channel is
    /// zero.
    pub use_text: bool,
    pub seed: u64,
}

impl Default for Op1Config {
    fn default() -> Self {
        Self {
            history_len: 7,
            entity_dim: 200,
            rgcn_layers: 2,
            rgcn_dropout: 0.2,
            conv_kernels: 32,
            conv_width: 3,
            lr: 1e-3,
            weight_decay: 1e-6,
            epochs: 40,
            patience: 5,
            grad_clip: 1.0,
            use_text: true,
            seed: 0,
        }
    }
}

impl Op1Config {
    pub fn validate(&self) -> Result<(), Op1Error> {
        let bad = |m: &str| Err(Op1Error::Config(m.to_string()));
        if self.history_len == 0 {
            return bad("history_len must be at least 1");
        }
        if self.entity_dim == 0 || self.conv_kernels == 0 || self.rgcn_layers == 0 {
            return bad("entity_dim, conv_kernels and rgcn_layers must be positive");
        }
        if self.conv_width % 2 == 0 {
            return bad("conv_width must be odd");
        }
        if !(0.0..1.0).contains(&self.rgcn_dropout) {
            return bad("rgcn_dropout must be in [0, 1)");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if !(self.lr > 0.0 && self.grad_clip > 0.0 && self.weight_decay >= 0.0) {
            return bad("lr and grad_clip must be positive, weight_decay non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Op1State {
    pub entity_emb: Param,
    pub relation_emb: Param,
    pub rgcn: Vec<RgcnLayer>,
    pub gru: GruParams,
    pub decoder: Decoder,
}

/// Everything needed to backpropagate one forward pass.
pub struct Op1Cache {
    edges: EdgeList,
    rgcn: RgcnCache,
    entities: Tensor,
    evolve: EvolveCache,
    decoder: DecoderCache,
}

impl Op1State {
    pub fn init<R: Rng + ?Sized>(
        num_entities: usize,
        num_relations: usize,
        text_dim: usize,
        cfg: &Op1Config,
        rng: &mut R,
    ) -> Self {
        let d = cfg.entity_dim;
        let emb_bound = (6.0 / (2 * d) as f64).sqrt();
        Self {
            entity_emb: Param::uniform(&[num_entities, d], emb_bound, rng),
            relation_emb: Param::uniform(&[num_relations, d], emb_bound, rng),
            rgcn: (0..cfg.rgcn_layers)
                .map(|_| RgcnLayer::init(num_relations, d, rng))
                .collect(),
            gru: GruParams::init(d, d, rng),
            decoder: Decoder::init(d, text_dim, cfg.conv_kernels, cfg.conv_width, rng),
        }
    }

    pub fn num_entities(&self) -> usize {
        self.entity_emb.shape()[0]
    }

    pub fn num_relations(&self) -> usize {
        self.relation_emb.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.entity_emb.shape()[1]
    }

    pub fn text_dim(&self) -> usize {
        self.decoder.text_dim()
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut out = vec![&self.entity_emb, &self.relation_emb];
        for l in &self.rgcn {
            out.push(&l.w_rel);
            out.push(&l.w_self);
        }
        out.extend(self.gru.params());
        out.extend(self.decoder.params());
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = vec![&mut self.entity_emb, &mut self.relation_emb];
        for l in &mut self.rgcn {
            out.push(&mut l.w_rel);
            out.push(&mut l.w_self);
        }
        out.extend(self.gru.params_mut());
        out.extend(self.decoder.params_mut());
        out
    }

    fn param_names(&self) -> Vec<String> {
        let mut names = vec!["entity_emb".to_string(), "relation_emb".to_string()];
        for i in 0..self.rgcn.len() {
            names.push(format!("rgcn.{i}.w_rel"));
            names.push(format!("rgcn.{i}.w_self"));
        }
        for g in ["w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_h", "u_h", "b_h"] {
            names.push(format!("gru.{g}"));
        }
        for n in ["text_proj", "kernels", "kernel_bias", "fc_w", "fc_b"] {
            names.push(format!("decoder.{n}"));
        }
        names
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Logits for `queries` on a day whose history window is `window`.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        window: &[&DailyGraph],
        queries: &[(usize, usize)],
        text: &Tensor,
        dropout: Dropout,
        train: bool,
        rng: &mut R,
    ) -> Result<(Tensor, Op1Cache), Op1Error> {
        let edges = EdgeList::from_graphs(window, self.num_entities(), self.num_relations())?;
        let (entities, rgcn) =
            rgcn_forward(&self.entity_emb.value, &edges, &self.rgcn, dropout, train, rng)?;
        let (relations, evolve) =
            evolve_relations(&entities, &self.relation_emb.value, window, &self.gru)?;
        let (logits, decoder) = decoder_forward(&entities, &relations, text, queries, &self.decoder)?;
        Ok((
            logits,
            Op1Cache {
                edges,
                rgcn,
                entities,
                evolve,
                decoder,
            },
        ))
    }

    /// Accumulate parameter gradients for `dlogits`.
    pub fn backward(&mut self, cache: &Op1Cache, dlogits: &Tensor) -> Result<(), Op1Error> {
        let mut dent = Tensor::zeros(cache.entities.shape());
        let mut drel = Tensor::zeros(&[self.num_relations(), self.dim()]);
        decoder_backward(
            &cache.decoder,
            &cache.entities,
            &mut self.decoder,
            dlogits,
            &mut dent,
            &mut drel,
        )?;
        let drel0 = evolve_backward(&cache.evolve, &mut self.gru, &drel, &mut dent)?;
        self.relation_emb.grad.add_assign(&drel0);
        let demb = rgcn_backward(&cache.rgcn, &cache.edges, &mut self.rgcn, &dent)?;
        self.entity_emb.grad.add_assign(&demb);
        Ok(())
    }

    /// Mean cross-entropy of one batch; gradients are accumulated.
    pub fn loss_and_grad<R: Rng + ?Sized>(
        &mut self,
        batch: &DayBatch<'_>,
        dropout: Dropout,
        train: bool,
        rng: &mut R,
    ) -> Result<(f64, Tensor), Op1Error> {
        let (logits, cache) =
            self.forward(&batch.window, &batch.queries, &batch.text, dropout, train, rng)?;
        let (loss, dlogits) = cross_entropy_softmax(&logits, &batch.targets)?;
        self.backward(&cache, &dlogits)?;
        Ok((loss, logits))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        for (name, p) in self.param_names().into_iter().zip(self.params()) {
            ck.push(name, p.value.clone());
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, Op1Error> {
        let missing = |n: &str| Op1Error::Config(format!("checkpoint lacks tensor {n:?}"));
        let ent = ck.get("entity_emb").ok_or_else(|| missing("entity_emb"))?;
        let rel = ck.get("relation_emb").ok_or_else(|| missing("relation_emb"))?;
        let (nv, d) = (ent.rows(), ent.cols());
        let nr = rel.rows();
        let layers = ck.names().filter(|n| n.ends_with(".w_self")).count();
        let td = ck
            .get("decoder.text_proj")
            .ok_or_else(|| missing("decoder.text_proj"))?
            .rows();
        let kshape = ck
            .get("decoder.kernels")
            .ok_or_else(|| missing("decoder.kernels"))?
            .shape()
            .to_vec();
        if kshape.len() != 3 {
            return Err(Op1Error::Config("decoder.kernels must be rank 3".into()));
        }
        let (c, w) = (kshape[0], kshape[2]);
        let shapes: Vec<Vec<usize>> = {
            let mut s = vec![vec![nv, d], vec![nr, d]];
            for _ in 0..layers {
                s.push(vec![2 * nr, d, d]);
                s.push(vec![d, d]);
            }
            for _ in 0..3 {
                s.push(vec![d, d]);
                s.push(vec![d, d]);
                s.push(vec![d]);
            }
            s.extend([vec![td, d], vec![c, 3, w], vec![c], vec![c * d, d], vec![d]]);
            s
        };
        let cfg = Op1Config {
            entity_dim: d,
            rgcn_layers: layers.max(1),
            conv_kernels: c,
            conv_width: w,
            ..Op1Config::default()
        };
        let mut rng = SeedStream::new(0).substream("checkpoint-shell");
        let mut state = Self::init(nv, nr, td, &cfg, &mut rng);
        state.rgcn.truncate(layers);
        let names = state.param_names();
        for ((name, shape), p) in names.iter().zip(&shapes).zip(state.params_mut()) {
            *p = Param::new(ck.expect(name, shape)?);
        }
        Ok(state)
    }
}

pub fn save_op1<W: Write>(state: &Op1State, out: W) -> Result<(), Op1Error> {
    Ok(write_checkpoint(&state.to_checkpoint(), out)?)
}

pub fn load_op1<R: Read>(input: R) -> Result<Op1State, Op1Error> {
    Op1State::from_checkpoint(&read_checkpoint(input)?)
}

/// Daily graphs of a dataset, indexed for window lookups.
#[derive(Debug, Clone, Default)]
pub struct History {
    graphs: Vec<DailyGraph>,
}

impl History {
    pub fn new(data: &[Quintuple]) -> Self {
        Self {
            graphs: group_by_day(data),
        }
    }

    /// Graphs for days in `[day − len, day)`, oldest first.
    pub fn window(&self, day: u32, len: usize) -> Vec<&DailyGraph> {
        let start = day.saturating_sub(len as u32);
        let lo = self.graphs.partition_point(|g| g.day < start);
        let hi = self.graphs.partition_point(|g| g.day < day);
        self.graphs[lo..hi].iter().collect()
    }
}

/// All queries of one day with their history window and text rows.
pub struct DayBatch<'a> {
    pub day: u32,
    pub window: Vec<&'a DailyGraph>,
    pub queries: Vec<(usize, usize)>,
    pub targets: Vec<usize>,
    pub uids: Vec<u64>,
    pub text: Tensor,
}

fn text_rows(
    uids: &[u64],
    store: Option<&EmbeddingStore>,
    text_dim: usize,
) -> Result<Tensor, Op1Error> {
    match store {
        Some(s) if text_dim > 0 => {
            let m = s.matrix(uids)?;
            if m.cols() != text_dim {
                return Err(Op1Error::Config(format!(
                    "embedding dim {} does not match model text dim {text_dim}",
                    m.cols()
                )));
            }
            Ok(m)
        }
        _ => Ok(Tensor::zeros(&[uids.len(), text_dim])),
    }
}

/// Group `part` by day into batches, each with its history window.
pub fn day_batches<'a>(
    part: &[Quintuple],
    history: &'a History,
    store: Option<&EmbeddingStore>,
    text_dim: usize,
    history_len: usize,
) -> Result<Vec<DayBatch<'a>>, Op1Error> {
    group_by_day(part)
        .into_iter()
        .map(|g| {
            let uids: Vec<u64> = g.edges.iter().map(|e| e.3).collect();
            Ok(DayBatch {
                day: g.day,
                window: history.window(g.day, history_len),
                queries: g.edges.iter().map(|e| (e.0, e.1)).collect(),
                targets: g.edges.iter().map(|e| e.2).collect(),
                text: text_rows(&uids, store, text_dim)?,
                uids,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub loss: f64,
    /// `k → Hits@k` for k in 1, 3, 10.
    pub hits: BTreeMap<usize, f64>,
    /// 1-based rank of every query, in batch order.
    pub ranks: Vec<usize>,
}

fn summarize(loss_sum: f64, ranks: Vec<usize>) -> EvalResult {
    let n = ranks.len().max(1) as f64;
    let hits = DEFAULT_KS
        .iter()
        .map(|&k| (k, ranks.iter().filter(|&&r| r <= k).count() as f64 / n))
        .collect();
    EvalResult {
        loss: loss_sum / n,
        hits,
        ranks,
    }
}

fn ranks_of(logits: &Tensor, targets: &[usize]) -> Vec<usize> {
    targets
        .iter()
        .enumerate()
        .map(|(i, &t)| rank_of(logits.row(i), t))
        .collect()
}

/// Loss and raw Hits@k in evaluation mode. Days are scored in parallel.
pub fn evaluate_batches(state: &Op1State, batches: &[DayBatch<'_>]) -> Result<EvalResult, Op1Error> {
    let per_day: Vec<(f64, Vec<usize>)> = batches
        .par_iter()
        .map(|b| {
            let mut rng = SeedStream::new(0).substream("eval");
            let (logits, _) =
                state.forward(&b.window, &b.queries, &b.text, Dropout::new(0.0), false, &mut rng)?;
            let (loss, _) = cross_entropy_softmax(&logits, &b.targets)?;
            Ok((loss * b.targets.len() as f64, ranks_of(&logits, &b.targets)))
        })
        .collect::<Result<_, Op1Error>>()?;
    let mut loss = 0.0;
    let mut ranks = Vec::new();
    for (l, r) in per_day {
        loss += l;
        ranks.extend(r);
    }
    Ok(summarize(loss, ranks))
}

pub fn evaluate_op1(
    state: &Op1State,
    history: &History,
    part: &[Quintuple],
    store: Option<&EmbeddingStore>,
    cfg: &Op1Config,
) -> Result<EvalResult, Op1Error> {
    let batches = day_batches(part, history, store, state.text_dim(), cfg.history_len)?;
    evaluate_batches(state, &batches)
}

#[derive(Debug, Clone)]
pub struct Op1Outcome {
    /// Parameters from the epoch with the best validation Hits@1.
    pub state: Op1State,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
}

fn log_row(epoch: usize, split: &str, r: &EvalResult) -> EpochLog {
    EpochLog {
        epoch,
        split: split.to_string(),
        loss: r.loss,
        hits1: r.hits[&1],
        hits3: r.hits[&3],
        hits10: r.hits[&10],
    }
}

fn text_dim_for(store: Option<&EmbeddingStore>, cfg: &Op1Config) -> Result<usize, Op1Error> {
    match (cfg.use_text, store) {
        (true, Some(s)) => Ok(s.dim()),
        (true, None) => Err(Op1Error::Config(
            "use_text is set but no embedding store was supplied".into(),
        )),
        (false, _) => Ok(0),
    }
}

/// Train with one optimizer step per training day, in chronological order.
/// Early stopping watches validation Hits@1 (training Hits@1 when there is
/// no validation part).
pub fn train_op1(
    split: &DatasetSplit,
    vocab: &Vocabulary,
    store: Option<&EmbeddingStore>,
    cfg: &Op1Config,
) -> Result<Op1Outcome, Op1Error> {
    cfg.validate()?;
    if split.train.is_empty() {
        return Err(Op1Error::EmptyTrain);
    }
    let text_dim = text_dim_for(store, cfg)?;
    let seeds = SeedStream::new(cfg.seed);
    let mut state = Op1State::init(
        vocab.num_entities(),
        vocab.num_relations(),
        text_dim,
        cfg,
        &mut seeds.substream("op1/init"),
    );
    let mut drop_rng = seeds.substream("op1/dropout");
    let dropout = Dropout::new(cfg.rgcn_dropout);
    let adam = AdamConfig::new(cfg.lr, cfg.weight_decay);

    let history = History::new(&split.all_sorted());
    let train = day_batches(&split.train, &history, store, text_dim, cfg.history_len)?;
    let valid = day_batches(&split.valid, &history, store, text_dim, cfg.history_len)?;

    let mut log = Vec::new();
    let mut best = (f64::NEG_INFINITY, 0usize, state.clone());
    let mut stale = 0;
    for epoch in 1..=cfg.epochs {
        let mut loss_sum = 0.0;
        let mut ranks = Vec::new();
        for b in &train {
            state.zero_grad();
            let (loss, logits) = state.loss_and_grad(b, dropout, true, &mut drop_rng)?;
            clip_global_norm(state.params_mut(), cfg.grad_clip);
            for p in state.params_mut() {
                adam_step(p, &adam);
            }
            loss_sum += loss * b.targets.len() as f64;
            ranks.extend(ranks_of(&logits, &b.targets));
        }
        let train_res = summarize(loss_sum, ranks);
        log.push(log_row(epoch, "train", &train_res));
        let watched = if valid.is_empty() {
            train_res.hits[&1]
        } else {
            let v = evaluate_batches(&state, &valid)?;
            log.push(log_row(epoch, "valid", &v));
            v.hits[&1]
        };
        if watched > best.0 {
            best = (watched, epoch, state.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    let (_, best_epoch, mut state) = best;
    state.zero_grad();
    Ok(Op1Outcome {
        state,
        log,
        best_epoch,
    })
}

pub fn write_metrics_csv<W: Write>(log: &[EpochLog], out: W) -> Result<(), Op1Error> {
    let mut w = csv::Writer::from_writer(out);
    for row in log {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub uid: u64,
    /// Entity ids, most probable first.
    pub topk: Vec<usize>,
    /// Name of the top-ranked entity.
    pub readout: String,
}

/// Top-`k` entities per query, ties broken by lower index.
pub fn predict_topk(
    state: &Op1State,
    history: &History,
    queries: &[Quintuple],
    store: Option<&EmbeddingStore>,
    cfg: &Op1Config,
    k: usize,
    vocab: &Vocabulary,
) -> Result<Vec<Prediction>, Op1Error> {
    let batches = day_batches(queries, history, store, state.text_dim(), cfg.history_len)?;
    let per_day: Vec<Vec<Prediction>> = batches
        .par_iter()
        .map(|b| {
            let mut rng = SeedStream::new(0).substream("predict");
            let (logits, _) =
                state.forward(&b.window, &b.queries, &b.text, Dropout::new(0.0), false, &mut rng)?;
            let out = RankingOutput::from_logits(&logits);
            b.uids
                .iter()
                .enumerate()
                .map(|(i, &uid)| {
                    let topk = top_k(out.probs.row(i), k);
                    let readout = vocab
                        .entity(out.predicted[i])
                        .map_err(|e| Op1Error::Config(e.to_string()))?
                        .to_string();
                    Ok(Prediction { uid, topk, readout })
                })
                .collect()
        })
        .collect::<Result<_, Op1Error>>()?;
    let mut by_uid: BTreeMap<u64, Prediction> = per_day
        .into_iter()
        .flatten()
        .map(|p| (p.uid, p))
        .collect();
    Ok(queries
        .iter()
        .filter_map(|q| by_uid.remove(&q.uid))
        .collect())
}
