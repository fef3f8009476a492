//! Multi-event forecasting: pool the quintuple embeddings of the previous
//! days, optionally mix them with self-attention, collapse to one vector and
//! predict which relations occur on the target day.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{EmbeddingError, EmbeddingStore};
use crate::event_store::{DatasetSplit, Quintuple};
use crate::metrics::{multilabel_prf, MetricsError, Prf};
use crate::nn::{
    adam_step, bce_with_logits, clip_global_norm, linear, linear_backward, read_checkpoint,
    self_attention_backward, self_attention_cached, sigmoid, write_checkpoint, AdamConfig,
    AttentionCache, AttentionParams, Checkpoint, NnError, Param, SeedStream, Tensor,
};

#[derive(Debug, Error)]
pub enum MefError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("no events in the {l3} days before day {day}")]
    EmptyWindow { day: u32, l3: usize },
    #[error("no target day in the training part has a non-empty window")]
    NoTargets,
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MefConfig {
    /// Days of history before the target day.
    pub window: usize,
    /// Expected embedding width; taken from the store when unset.
    pub input_dim: Option<usize>,
    pub model_dim: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Target days per optimizer step.
    pub batch: usize,
    pub grad_clip: f64,
    pub epochs: usize,
    pub patience: usize,
    pub threshold: f64,
    pub use_attention: bool,
    pub seed: u64,
}

impl Default for MefConfig {
    fn default() -> Self {
        Self {
            window: 7,
            input_dim: None,
            model_dim: 1024,
            lr: 5e-5,
            weight_decay: 1e-2,
            batch: 2,
            grad_clip: 1.0,
            epochs: 40,
            patience: 5,
            threshold: 0.5,
            use_attention: true,
            seed: 0,
        }
    }
}

impl MefConfig {
    pub fn validate(&self) -> Result<(), MefError> {
        let bad = |m: &str| Err(MefError::Config(m.to_string()));
        if self.window == 0 {
            return bad("window must be at least 1 day");
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad("threshold must lie strictly between 0 and 1");
        }
        if self.model_dim == 0 || self.batch == 0 || self.epochs == 0 {
            return bad("model_dim, batch and epochs must be positive");
        }
        if self.input_dim == Some(0) {
            return bad("input_dim must be positive");
        }
        if !(self.lr > 0.0) || self.weight_decay < 0.0 || !(self.grad_clip > 0.0) {
            return bad("lr and grad_clip must be positive, weight_decay non-negative");
        }
        Ok(())
    }

    /// Short name used in logs to tell the full model from the ablation.
    pub fn tag(&self) -> &'static str {
        if self.use_attention {
            "mef"
        } else {
            "mef_no_sa"
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MefModel {
    pub in_w: Param,
    pub in_b: Param,
    /// Absent in the no-attention ablation.
    pub attention: Option<AttentionParams>,
    pub out_w: Param,
    pub out_b: Param,
}

impl MefModel {
    pub fn init<R: Rng + ?Sized>(
        input_dim: usize,
        model_dim: usize,
        num_relations: usize,
        use_attention: bool,
        rng: &mut R,
    ) -> Self {
        let in_w = Param::glorot(&[input_dim, model_dim], rng);
        let attention = use_attention.then(|| AttentionParams::init(model_dim, rng));
        let out_w = Param::glorot(&[model_dim, num_relations], rng);
        Self {
            in_w,
            in_b: Param::zeros(&[model_dim]),
            attention,
            out_w,
            out_b: Param::zeros(&[num_relations]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.in_w.value.rows()
    }

    pub fn model_dim(&self) -> usize {
        self.in_w.value.cols()
    }

    pub fn num_relations(&self) -> usize {
        self.out_w.value.cols()
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut v = vec![&self.in_w, &self.in_b];
        if let Some(a) = &self.attention {
            v.extend(a.params());
        }
        v.extend([&self.out_w, &self.out_b]);
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = vec![&mut self.in_w, &mut self.in_b];
        if let Some(a) = &mut self.attention {
            v.extend(a.params_mut());
        }
        v.extend([&mut self.out_w, &mut self.out_b]);
        v
    }

    fn param_names(&self) -> Vec<&'static str> {
        let mut v = vec!["in_proj.w", "in_proj.b"];
        if self.attention.is_some() {
            v.extend(["attention.w_q", "attention.w_k", "attention.w_v"]);
        }
        v.extend(["out.w", "out.b"]);
        v
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        for (name, p) in self.param_names().into_iter().zip(self.params()) {
            ck.push(name, p.value.clone());
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, MefError> {
        let in_w = ck
            .get("in_proj.w")
            .ok_or_else(|| NnError::Checkpoint("missing in_proj.w".into()))?;
        let out_w = ck
            .get("out.w")
            .ok_or_else(|| NnError::Checkpoint("missing out.w".into()))?;
        let (din, dm, nr) = (in_w.rows(), in_w.cols(), out_w.cols());
        let attention = if ck.get("attention.w_q").is_some() {
            Some(AttentionParams::new(
                ck.expect("attention.w_q", &[dm, dm])?,
                ck.expect("attention.w_k", &[dm, dm])?,
                ck.expect("attention.w_v", &[dm, dm])?,
            )?)
        } else {
            None
        };
        let model = Self {
            in_w: Param::new(ck.expect("in_proj.w", &[din, dm])?),
            in_b: Param::new(ck.expect("in_proj.b", &[dm])?),
            attention,
            out_w: Param::new(ck.expect("out.w", &[dm, nr])?),
            out_b: Param::new(ck.expect("out.b", &[nr])?),
        };
        if model.params().iter().any(|p| !p.value.is_finite()) {
            return Err(NnError::Checkpoint("non-finite MEF parameter".into()).into());
        }
        Ok(model)
    }
}

pub fn save_mef<W: Write>(model: &MefModel, out: W) -> Result<(), MefError> {
    Ok(write_checkpoint(&model.to_checkpoint(), out)?)
}

pub fn load_mef<R: Read>(input: R) -> Result<MefModel, MefError> {
    MefModel::from_checkpoint(&read_checkpoint(input)?)
}

/// Quintuple embeddings of one day, in uid order.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyEmbeddings {
    pub day: u32,
    pub matrix: Tensor,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVector {
    pub day: u32,
    pub labels: Vec<u8>,
}

/// One entry per day with events, ascending.
pub fn daily_embeddings(
    data: &[Quintuple],
    store: &EmbeddingStore,
) -> Result<Vec<DailyEmbeddings>, MefError> {
    let mut by_day: BTreeMap<u32, Vec<u64>> = BTreeMap::new();
    for q in data {
        by_day.entry(q.day).or_default().push(q.uid);
    }
    by_day
        .into_iter()
        .map(|(day, mut uids)| {
            uids.sort_unstable();
            Ok(DailyEmbeddings {
                day,
                matrix: store.matrix(&uids)?,
            })
        })
        .collect()
}

/// Per day with events: 1 for every relation seen that day.
pub fn label_vectors(data: &[Quintuple], num_relations: usize) -> Vec<LabelVector> {
    let mut by_day: BTreeMap<u32, Vec<u8>> = BTreeMap::new();
    for q in data {
        by_day.entry(q.day).or_insert_with(|| vec![0; num_relations])[q.relation] = 1;
    }
    by_day
        .into_iter()
        .map(|(day, labels)| LabelVector { day, labels })
        .collect()
}

/// Rows of all days in `[target − l3, target)`, oldest first. `daily` must
/// be sorted by day.
pub fn build_window(target: u32, daily: &[DailyEmbeddings], l3: usize) -> Result<Tensor, MefError> {
    let lo = target.saturating_sub(l3 as u32);
    let start = daily.partition_point(|d| d.day < lo);
    let end = daily.partition_point(|d| d.day < target);
    let parts: Vec<&Tensor> = daily[start..end]
        .iter()
        .map(|d| &d.matrix)
        .filter(|m| m.rows() > 0)
        .collect();
    if parts.is_empty() {
        return Err(MefError::EmptyWindow { day: target, l3 });
    }
    Ok(Tensor::vstack(&parts)?)
}

#[derive(Debug, Clone)]
pub struct MefCache {
    window: Tensor,
    attention: Option<AttentionCache>,
    rows: usize,
    pooled: Tensor,
}

/// Relation logits for one window.
pub fn mef_logits(window: &Tensor, model: &MefModel) -> Result<(Vec<f64>, MefCache), MefError> {
    if window.rows() == 0 {
        return Err(NnError::Shape("empty MEF window".into()).into());
    }
    let h = linear(window, &model.in_w.value, &model.in_b.value)?;
    let (mixed, attention) = match &model.attention {
        Some(p) => {
            let (a, c) = self_attention_cached(&h, p)?;
            (a, Some(c))
        }
        None => (h, None),
    };
    let pooled = Tensor::from_vec(&[1, mixed.cols()], mixed.mean_rows())?;
    let z = linear(&pooled, &model.out_w.value, &model.out_b.value)?;
    Ok((
        z.into_data(),
        MefCache {
            window: window.clone(),
            attention,
            rows: mixed.rows(),
            pooled,
        },
    ))
}

/// Accumulates parameter gradients for upstream logit gradients `dz`.
pub fn mef_backward(cache: &MefCache, model: &mut MefModel, dz: &[f64]) -> Result<(), MefError> {
    let dz = Tensor::from_vec(&[1, dz.len()], dz.to_vec())?;
    let (dpooled, dw, db) = linear_backward(&cache.pooled, &model.out_w.value, &dz)?;
    model.out_w.grad.add_assign(&dw);
    model.out_b.grad.add_assign(&db);
    let n = cache.rows;
    let share: Vec<f64> = dpooled.data().iter().map(|g| g / n as f64).collect();
    let dmixed = Tensor::from_rows(&vec![share; n])?;
    let dh = match (&cache.attention, &mut model.attention) {
        (Some(c), Some(p)) => self_attention_backward(c, p, &dmixed)?,
        (None, None) => dmixed,
        _ => return Err(MefError::Config("cache and model disagree on attention".into())),
    };
    let (_, dw, db) = linear_backward(&cache.window, &model.in_w.value, &dh)?;
    model.in_w.grad.add_assign(&dw);
    model.in_b.grad.add_assign(&db);
    Ok(())
}

fn check_variant(model: &MefModel, cfg: &MefConfig) -> Result<(), MefError> {
    if model.attention.is_some() != cfg.use_attention {
        return Err(MefError::Config(format!(
            "model {} attention but config asks for {}",
            if model.attention.is_some() { "has" } else { "lacks" },
            cfg.tag()
        )));
    }
    Ok(())
}

/// Occurrence probabilities for every relation.
pub fn mef_forward(window: &Tensor, model: &MefModel, cfg: &MefConfig) -> Result<Vec<f64>, MefError> {
    check_variant(model, cfg)?;
    if window.cols() != model.input_dim() {
        return Err(NnError::Shape(format!(
            "window has {} columns, model expects {}",
            window.cols(),
            model.input_dim()
        ))
        .into());
    }
    Ok(mef_logits(window, model)?.0.into_iter().map(sigmoid).collect())
}

/// Strictly above the threshold counts as an occurrence.
pub fn decide(probs: &[f64], threshold: f64) -> Vec<u8> {
    probs.iter().map(|&p| u8::from(p > threshold)).collect()
}

#[derive(Debug, Clone)]
pub struct MefSample {
    pub day: u32,
    pub window: Tensor,
    pub labels: Vec<u8>,
}

/// Samples for the target days of `part`, windows drawn from `daily`.
/// Returns the samples and the number of days skipped for empty windows.
pub fn build_samples(
    part: &[Quintuple],
    daily: &[DailyEmbeddings],
    num_relations: usize,
    l3: usize,
) -> Result<(Vec<MefSample>, usize), MefError> {
    let mut samples = Vec::new();
    let mut skipped = 0;
    for lv in label_vectors(part, num_relations) {
        match build_window(lv.day, daily, l3) {
            Ok(window) => samples.push(MefSample {
                day: lv.day,
                window,
                labels: lv.labels,
            }),
            Err(MefError::EmptyWindow { .. }) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    Ok((samples, skipped))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MefDayPrediction {
    pub day: u32,
    pub probs: Vec<f64>,
    pub decisions: Vec<u8>,
    pub labels: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MefEvaluation {
    pub prf: Prf,
    /// Mean per-day loss.
    pub loss: f64,
    pub days: Vec<MefDayPrediction>,
}

fn bce_per_day(logits: &[f64], labels: &[u8]) -> Result<(f64, Vec<f64>), MefError> {
    let z = Tensor::from_vec(&[1, logits.len()], logits.to_vec())?;
    let y = Tensor::from_vec(&[1, labels.len()], labels.iter().map(|&l| l as f64).collect())?;
    let (loss, g) = bce_with_logits(&z, &y)?;
    Ok((loss, g.into_data()))
}

pub fn evaluate_samples(
    model: &MefModel,
    samples: &[MefSample],
    cfg: &MefConfig,
) -> Result<MefEvaluation, MefError> {
    check_variant(model, cfg)?;
    let mut days = Vec::with_capacity(samples.len());
    let mut loss = 0.0;
    for s in samples {
        let (z, _) = mef_logits(&s.window, model)?;
        loss += bce_per_day(&z, &s.labels)?.0;
        let probs: Vec<f64> = z.into_iter().map(sigmoid).collect();
        days.push(MefDayPrediction {
            day: s.day,
            decisions: decide(&probs, cfg.threshold),
            probs,
            labels: s.labels.clone(),
        });
    }
    let truth: Vec<Vec<u8>> = days.iter().map(|d| d.labels.clone()).collect();
    let pred: Vec<Vec<u8>> = days.iter().map(|d| d.decisions.clone()).collect();
    Ok(MefEvaluation {
        prf: multilabel_prf(&truth, &pred)?,
        loss: loss / samples.len().max(1) as f64,
        days,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MefEpochLog {
    pub epoch: usize,
    pub split: String,
    pub variant: String,
    pub loss: f64,
    pub f1: f64,
    pub recall: f64,
    pub precision: f64,
}

#[derive(Debug, Clone)]
pub struct MefOutcome {
    pub model: MefModel,
    pub log: Vec<MefEpochLog>,
    pub best_epoch: usize,
    /// Target days dropped because nothing happened in their window.
    pub skipped_days: usize,
}

fn input_dim_for(store: &EmbeddingStore, cfg: &MefConfig) -> Result<usize, MefError> {
    match cfg.input_dim {
        Some(d) if d != store.dim() => Err(MefError::Config(format!(
            "input_dim {d} but the embedding store has dim {}",
            store.dim()
        ))),
        _ => Ok(store.dim()),
    }
}

pub fn train_mef(
    split: &DatasetSplit,
    store: &EmbeddingStore,
    num_relations: usize,
    cfg: &MefConfig,
) -> Result<MefOutcome, MefError> {
    cfg.validate()?;
    let input_dim = input_dim_for(store, cfg)?;
    let daily = daily_embeddings(&split.all_sorted(), store)?;
    let (train, skipped_train) = build_samples(&split.train, &daily, num_relations, cfg.window)?;
    let (valid, skipped_valid) = build_samples(&split.valid, &daily, num_relations, cfg.window)?;
    if train.is_empty() {
        return Err(MefError::NoTargets);
    }
    let seeds = SeedStream::new(cfg.seed);
    let mut model = MefModel::init(
        input_dim,
        cfg.model_dim,
        num_relations,
        cfg.use_attention,
        &mut seeds.substream("mef/init"),
    );
    let adam = AdamConfig::new(cfg.lr, cfg.weight_decay);
    let tag = cfg.tag().to_string();
    let row = |epoch: usize, split: &str, loss: f64, prf: Prf| MefEpochLog {
        epoch,
        split: split.to_string(),
        variant: tag.clone(),
        loss,
        f1: prf.f1,
        recall: prf.recall,
        precision: prf.precision,
    };

    let mut log = Vec::new();
    let mut best = (f64::NEG_INFINITY, 0usize, model.clone());
    let mut stale = 0;
    for epoch in 1..=cfg.epochs {
        let mut loss_sum = 0.0;
        let mut truth = Vec::with_capacity(train.len());
        let mut pred = Vec::with_capacity(train.len());
        for batch in train.chunks(cfg.batch) {
            model.zero_grad();
            let scale = 1.0 / batch.len() as f64;
            for s in batch {
                let (z, cache) = mef_logits(&s.window, &model)?;
                let (loss, mut dz) = bce_per_day(&z, &s.labels)?;
                loss_sum += loss;
                for g in &mut dz {
                    *g *= scale;
                }
                mef_backward(&cache, &mut model, &dz)?;
                let probs: Vec<f64> = z.into_iter().map(sigmoid).collect();
                pred.push(decide(&probs, cfg.threshold));
                truth.push(s.labels.clone());
            }
            clip_global_norm(model.params_mut(), cfg.grad_clip);
            for p in model.params_mut() {
                adam_step(p, &adam);
            }
        }
        let train_prf = multilabel_prf(&truth, &pred)?;
        log.push(row(epoch, "train", loss_sum / train.len() as f64, train_prf));
        let watched = if valid.is_empty() {
            train_prf.f1
        } else {
            let v = evaluate_samples(&model, &valid, cfg)?;
            log.push(row(epoch, "valid", v.loss, v.prf));
            v.prf.f1
        };
        if watched > best.0 {
            best = (watched, epoch, model.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    let (_, best_epoch, mut model) = best;
    model.zero_grad();
    Ok(MefOutcome {
        model,
        log,
        best_epoch,
        skipped_days: skipped_train + skipped_valid,
    })
}

/// Score `part` with windows drawn from all of `history` (sorted by day).
/// Also returns the number of target days skipped for empty windows.
pub fn eval_mef(
    model: &MefModel,
    part: &[Quintuple],
    history: &[Quintuple],
    store: &EmbeddingStore,
    cfg: &MefConfig,
) -> Result<(MefEvaluation, usize), MefError> {
    let daily = daily_embeddings(history, store)?;
    let (samples, skipped) = build_samples(part, &daily, model.num_relations(), cfg.window)?;
    Ok((evaluate_samples(model, &samples, cfg)?, skipped))
}

pub fn write_mef_log_csv<W: Write>(log: &[MefEpochLog], out: W) -> Result<(), MefError> {
    let mut w = csv::Writer::from_writer(out);
    for row in log {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per (day, relation): `day,relation_id,prob,decision,label`.
pub fn write_predictions_csv<W: Write>(days: &[MefDayPrediction], out: W) -> Result<(), MefError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["day", "relation_id", "prob", "decision", "label"])?;
    for d in days {
        for (r, ((p, dec), lab)) in d.probs.iter().zip(&d.decisions).zip(&d.labels).enumerate() {
            w.write_record([
                d.day.to_string(),
                r.to_string(),
                format!("{p:.6}"),
                dec.to_string(),
                lab.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
