//! Minibatch training with Adam, inverted dropout, length cropping, learning
//! rate decay and early stopping on a dev metric.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{entity_f1, EmbeddingTable, Sample, Target, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{Dropout, Model, Prediction, Task};
use crate::params::ParamStore;
use crate::tensor::{Tape, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub dropout: f64,
    pub patience: usize,
    #[serde(default = "one")]
    pub lr_decay: f64,
    #[serde(default)]
    pub seed: u64,
    /// Classification sentences are cropped to this many tokens. Unset means
    /// the 95th-percentile training length.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pad_len: Option<usize>,
    /// Global gradient-norm cap; off when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip_norm: Option<f64>,
    /// Stop as soon as the dev metric reaches this value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_metric: Option<f64>,
    /// Worker threads for the per-sentence passes of a batch.
    #[serde(default = "one_thread")]
    pub threads: usize,
}

fn one() -> f64 {
    1.0
}

fn one_thread() -> usize {
    1
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            batch_size: 20,
            max_epochs: 25,
            dropout: 0.5,
            patience: 5,
            lr_decay: 1.0,
            seed: 0,
            pad_len: None,
            clip_norm: None,
            target_metric: None,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn preset(task: Task) -> TrainConfig {
        let base = TrainConfig::default();
        match task {
            Task::Sst => TrainConfig {
                learning_rate: 0.0002,
                ..base
            },
            Task::Trec => TrainConfig {
                learning_rate: 0.0005,
                ..base
            },
            Task::Conll => TrainConfig {
                learning_rate: 0.005,
                lr_decay: 0.95,
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Contract(msg));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.threads == 0 {
            return bad("batch_size, max_epochs and threads must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad(format!("lr_decay must be in (0, 1], got {}", self.lr_decay));
        }
        if self.pad_len == Some(0) {
            return bad("pad_len must be at least 1".into());
        }
        if let Some(c) = self.clip_norm {
            if !(c.is_finite() && c > 0.0) {
                return bad(format!("clip_norm must be positive, got {c}"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = store.iter().map(|(_, _, t)| Tensor::zeros(t.shape())).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of every parameter.
pub fn adam_step(store: &mut ParamStore, grads: &[Tensor], state: &mut AdamState, lr: f64) -> Result<()> {
    if grads.len() != store.len() || state.m.len() != store.len() {
        return Err(Error::contract(format!(
            "{} gradients and {} moments for {} parameters",
            grads.len(),
            state.m.len(),
            store.len()
        )));
    }
    for (id, g) in store.ids().zip(grads) {
        if g.shape() != store.get(id).shape() {
            return Err(Error::shape("adam", store.get(id).shape(), g.shape()));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    for (i, id) in store.ids().collect::<Vec<_>>().into_iter().enumerate() {
        let g = grads[i].data();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let p = store.get_mut(id).data_mut();
        for j in 0..g.len() {
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            p[j] -= lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}

/// Inverted-dropout mask: each entry is 0 with probability `rate`, otherwise
/// `1 / (1 - rate)`.
pub fn dropout_mask<R: Rng + ?Sized>(n: usize, rate: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::contract(format!("dropout rate must be in [0, 1), got {rate}")));
    }
    if rate == 0.0 {
        return Ok(vec![1.0; n]);
    }
    let keep = 1.0 / (1.0 - rate);
    Ok((0..n).map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep }).collect())
}

pub fn apply_dropout<R: Rng + ?Sized>(x: &[f64], rate: f64, rng: &mut R, training: bool) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::contract(format!("dropout rate must be in [0, 1), got {rate}")));
    }
    if !training {
        return Ok(x.to_vec());
    }
    let mask = dropout_mask(x.len(), rate, rng)?;
    Ok(x.iter().zip(mask).map(|(a, m)| a * m).collect())
}

/// Right-pads with `pad_id` or keeps the first `len` tokens. The mask is 1 on
/// real tokens.
pub fn pad_or_crop(tokens: &[usize], len: usize, pad_id: usize) -> (Vec<usize>, Vec<u8>) {
    let mut ids: Vec<usize> = tokens.iter().take(len).copied().collect();
    let mut mask = vec![1u8; ids.len()];
    ids.resize(len, pad_id);
    mask.resize(len, 0);
    (ids, mask)
}

/// Length at or below which `q` of the sentences fall (nearest rank).
pub fn length_percentile(samples: &[Sample], q: f64) -> usize {
    let mut lens: Vec<usize> = samples.iter().map(|s| s.tokens.len()).collect();
    if lens.is_empty() {
        return 1;
    }
    lens.sort_unstable();
    let rank = ((q * lens.len() as f64).ceil() as usize).clamp(1, lens.len());
    lens[rank - 1].max(1)
}

/// Real tokens after padding/cropping to `len`. Padding positions are never
/// fed to the network.
fn crop(sample: &Sample, len: Option<usize>) -> Sample {
    match (len, &sample.target) {
        (Some(l), Target::Class(_)) => {
            let (ids, mask) = pad_or_crop(&sample.tokens, l, Vocabulary::PAD);
            let real = mask.iter().filter(|&&m| m == 1).count();
            Sample {
                tokens: ids[..real].to_vec(),
                target: sample.target.clone(),
            }
        }
        _ => sample.clone(),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Metric {
    Accuracy,
    /// Entity F1 with the tag names indexed by tag id.
    EntityF1(Vec<String>),
}

/// Dev metric of `model` on `samples`; higher is better for both metrics.
pub fn evaluate(model: &Model, emb: &EmbeddingTable, samples: &[Sample], metric: &Metric, crop_len: Option<usize>) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyCorpus("evaluation set".into()));
    }
    match metric {
        Metric::Accuracy => {
            let mut hits = 0usize;
            for s in samples {
                let s = crop(s, crop_len);
                let Target::Class(gold) = s.target else {
                    return Err(Error::contract("accuracy needs class targets"));
                };
                if model.predict(emb, &s.tokens)? == Prediction::Class(gold) {
                    hits += 1;
                }
            }
            Ok(hits as f64 / samples.len() as f64)
        }
        Metric::EntityF1(names) => {
            let mut pred = Vec::with_capacity(samples.len());
            let mut gold = Vec::with_capacity(samples.len());
            for s in samples {
                let Target::Tags(g) = &s.target else {
                    return Err(Error::contract("entity F1 needs tag targets"));
                };
                let Prediction::Tags(p) = model.predict(emb, &s.tokens)? else {
                    return Err(Error::contract("entity F1 needs a tagging model"));
                };
                let name = |t: &usize| names.get(*t).cloned().ok_or_else(|| Error::contract(format!("tag id {t}")));
                pred.push(p.iter().map(name).collect::<Result<Vec<_>>>()?);
                gold.push(g.iter().map(name).collect::<Result<Vec<_>>>()?);
            }
            Ok(entity_f1(&pred, &gold)?.f1)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_metric: f64,
    pub lr: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub log: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_metric: f64,
    pub pad_len: Option<usize>,
}

impl TrainOutcome {
    /// `epoch,train_loss,dev_metric,lr` rows. Floats use the shortest
    /// representation that parses back to the same value.
    pub fn metric_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,dev_metric,lr\n");
        for r in &self.log {
            out.push_str(&format!("{},{},{},{}\n", r.epoch, r.train_loss, r.dev_metric, r.lr));
        }
        out
    }
}

/// Loss and gradients of one sentence on a private tape.
fn sample_grads(model: &Model, emb: &EmbeddingTable, sample: &Sample, rate: f64, seed: u64) -> Result<(f64, Vec<Tensor>)> {
    let mut tape = Tape::with_params(&model.store);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dropout = (rate > 0.0).then(|| Dropout {
        rate,
        rng: &mut rng,
    });
    let loss = model.loss(&mut tape, emb, sample, dropout)?;
    let value = tape.value(loss).item();
    let grads = tape.backward(loss)?.into_param_grads();
    Ok((value, grads))
}

fn batch_grads(model: &Model, emb: &EmbeddingTable, batch: &[Sample], seeds: &[u64], rate: f64, threads: usize) -> Result<Vec<(f64, Vec<Tensor>)>> {
    if threads <= 1 || batch.len() <= 1 {
        return batch
            .iter()
            .zip(seeds)
            .map(|(s, &seed)| sample_grads(model, emb, s, rate, seed))
            .collect();
    }
    let chunk = batch.len().div_ceil(threads);
    let parts: Vec<Result<Vec<(f64, Vec<Tensor>)>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = batch
            .chunks(chunk)
            .zip(seeds.chunks(chunk))
            .map(|(samples, seeds)| {
                scope.spawn(move || {
                    samples
                        .iter()
                        .zip(seeds)
                        .map(|(s, &seed)| sample_grads(model, emb, s, rate, seed))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(batch.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Trains `model` in place and leaves it holding the best-dev parameters.
pub fn train(model: &mut Model, emb: &EmbeddingTable, train_set: &[Sample], dev_set: &[Sample], metric: &Metric, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyCorpus("training set".into()));
    }
    if dev_set.is_empty() {
        return Err(Error::EmptyCorpus("dev set".into()));
    }
    let classification = matches!(train_set[0].target, Target::Class(_));
    let pad_len = classification.then(|| cfg.pad_len.unwrap_or_else(|| length_percentile(train_set, 0.95)));
    let cropped: Vec<Sample> = train_set.iter().map(|s| crop(s, pad_len)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(&model.store);
    let mut order: Vec<usize> = (0..cropped.len()).collect();
    let mut lr = cfg.learning_rate;
    let mut log = Vec::new();
    let mut best: Option<(usize, f64, ParamStore)> = None;
    let mut since_best = 0;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<Sample> = idx.iter().map(|&i| cropped[i].clone()).collect();
            let seeds: Vec<u64> = idx.iter().map(|_| rng.random()).collect();
            let results = batch_grads(model, emb, &batch, &seeds, cfg.dropout, cfg.threads)?;
            let scale = 1.0 / batch.len() as f64;
            let mut total: Vec<Tensor> = model.store.iter().map(|(_, _, t)| Tensor::zeros(t.shape())).collect();
            for (loss, grads) in &results {
                if !loss.is_finite() {
                    return Err(Error::NonFinite(format!("loss {loss} in epoch {epoch}, batch {b}")));
                }
                loss_sum += loss;
                for (acc, g) in total.iter_mut().zip(grads) {
                    for (a, x) in acc.data_mut().iter_mut().zip(g.data()) {
                        *a += scale * x;
                    }
                }
            }
            if let Some(max) = cfg.clip_norm {
                let norm = total.iter().flat_map(|t| t.data()).map(|x| x * x).sum::<f64>().sqrt();
                if norm > max {
                    let f = max / norm;
                    total.iter_mut().for_each(|t| t.data_mut().iter_mut().for_each(|x| *x *= f));
                }
            }
            adam_step(&mut model.store, &total, &mut adam, lr)?;
            if !model.store.is_finite() {
                return Err(Error::NonFinite(format!("parameters after epoch {epoch}, batch {b}")));
            }
        }
        let dev_metric = evaluate(model, emb, dev_set, metric, pad_len)?;
        log.push(EpochRecord {
            epoch,
            train_loss: loss_sum / cropped.len() as f64,
            dev_metric,
            lr,
        });
        if best.as_ref().is_none_or(|(_, m, _)| dev_metric > *m) {
            best = Some((epoch, dev_metric, model.store.clone()));
            since_best = 0;
        } else {
            since_best += 1;
        }
        let reached = cfg.target_metric.is_some_and(|t| dev_metric >= t);
        if reached || since_best >= cfg.patience {
            break;
        }
        lr *= cfg.lr_decay;
    }
    let (best_epoch, best_metric, store) = best.expect("at least one epoch ran");
    model.store = store;
    Ok(TrainOutcome {
        log,
        best_epoch,
        best_metric,
        pad_len,
    })
}
