//! Training and evaluation loops, accuracy accounting, two-stream fusion.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SplitTag};
use crate::error::{Error, Result};
use crate::net::STGCNModel;
use crate::ops;
use crate::optim::{milestone_lr, SgdOptimizer};
use crate::tensor::Tensor;

/// Validation/test accuracy kept as exact counts so threshold decisions
/// can use rational arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accuracy {
    pub correct: u64,
    pub total: u64,
}

impl Accuracy {
    pub fn value(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

/// Worker bound from the `PSTGCN_THREADS` environment variable; defaults to 1.
pub fn thread_budget() -> usize {
    std::env::var("PSTGCN_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

/// Predicted class per sample (argmax of eval-mode logits, ties to the
/// lower class index).
pub fn predict_labels(
    model: &STGCNModel,
    ds: &Dataset,
    idxs: &[usize],
    batch_size: usize,
    threads: usize,
) -> Result<Vec<usize>> {
    if idxs.is_empty() {
        return Ok(Vec::new());
    }
    let chunks: Vec<&[usize]> = idxs.chunks(batch_size.max(1)).collect();
    if threads <= 1 || chunks.len() == 1 {
        let mut out = Vec::with_capacity(idxs.len());
        for chunk in chunks {
            out.extend(predict_chunk(model, ds, chunk)?);
        }
        return Ok(out);
    }
    let shards: Vec<Vec<&[usize]>> = (0..threads.min(chunks.len()))
        .map(|w| chunks.iter().skip(w).step_by(threads).copied().collect())
        .collect();
    let results: Vec<Result<Vec<(usize, Vec<usize>)>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = shards
            .iter()
            .enumerate()
            .map(|(w, shard)| {
                let model = &*model;
                scope.spawn(move || {
                    let mut out = Vec::new();
                    for (k, chunk) in shard.iter().enumerate() {
                        out.push((w + k * threads, predict_chunk(model, ds, chunk)?));
                    }
                    Ok(out)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("eval worker")).collect()
    });
    let mut ordered: Vec<(usize, Vec<usize>)> = Vec::new();
    for r in results {
        ordered.extend(r?);
    }
    ordered.sort_by_key(|(i, _)| *i);
    Ok(ordered.into_iter().flat_map(|(_, v)| v).collect())
}

fn predict_chunk(model: &STGCNModel, ds: &Dataset, chunk: &[usize]) -> Result<Vec<usize>> {
    let (x, _) = ds.batch(chunk);
    let logits = model.forward_eval(&x)?;
    let k = model.n_class;
    Ok((0..chunk.len())
        .map(|n| argmax(&logits.data()[n * k..(n + 1) * k]))
        .collect())
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn evaluate(
    model: &STGCNModel,
    ds: &Dataset,
    tag: SplitTag,
    batch_size: usize,
    threads: usize,
) -> Result<Accuracy> {
    let idxs = ds.indices(tag);
    let preds = predict_labels(model, ds, &idxs, batch_size, threads)?;
    let correct = idxs
        .iter()
        .zip(&preds)
        .filter(|(&i, &p)| ds.samples[i].label == p)
        .count() as u64;
    Ok(Accuracy {
        correct,
        total: idxs.len() as u64,
    })
}

/// Softmax score matrix for the given samples, rows in `idxs` order.
pub fn score_matrix(
    model: &STGCNModel,
    ds: &Dataset,
    idxs: &[usize],
    batch_size: usize,
) -> Result<Tensor> {
    let k = model.n_class;
    let mut out = Tensor::zeros(&[idxs.len(), k]);
    for (c, chunk) in idxs.chunks(batch_size.max(1)).enumerate() {
        let (x, _) = ds.batch(chunk);
        let scores = model.predict_scores(&x)?;
        let off = c * batch_size * k;
        out.data_mut()[off..off + chunk.len() * k].copy_from_slice(scores.data());
    }
    Ok(out)
}

/// One pass over `idxs` in shuffled mini-batches; returns the mean loss.
pub fn train_one_epoch<R: Rng>(
    model: &mut STGCNModel,
    ds: &Dataset,
    idxs: &[usize],
    optimizer: &mut SgdOptimizer,
    batch_size: usize,
    rng: &mut R,
) -> Result<f64> {
    let mut order = idxs.to_vec();
    order.shuffle(rng);
    let mut loss_sum = 0.0;
    let mut batches = 0usize;
    for chunk in order.chunks(batch_size.max(1)) {
        if chunk.len() < 2 {
            // batch norm needs more than one element per batch statistic
            continue;
        }
        let (x, labels) = ds.batch(chunk);
        let (logits, cache) = model.forward_train(&x)?;
        let (loss, grad) = ops::softmax_cross_entropy(&logits, &labels)?;
        if !loss.is_finite() {
            return Err(Error::Diverged(format!("batch of {} samples", chunk.len())));
        }
        model.backward(&cache, &grad)?;
        optimizer.step(&mut model.named_parameters_mut());
        loss_sum += loss;
        batches += 1;
    }
    if batches == 0 {
        return Err(Error::InvalidDataset("no trainable batch".into()));
    }
    Ok(loss_sum / batches as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub best_val_accuracy: f64,
    pub best_epoch: usize,
}

#[derive(Debug, Clone)]
pub struct FinalTrainConfig {
    pub epochs: usize,
    pub base_lr: f64,
    pub milestones: Vec<usize>,
    pub batch_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub threads: usize,
}

/// Milestone-schedule training over the samples tagged by `train_tags`;
/// validation accuracy is measured on `val_tag` each epoch and the
/// best-by-validation model snapshot is returned alongside the log.
pub fn train_final<R: Rng>(
    model: &mut STGCNModel,
    ds: &Dataset,
    train_tags: &[SplitTag],
    val_tag: SplitTag,
    cfg: &FinalTrainConfig,
    rng: &mut R,
) -> Result<(TrainLog, Vec<u8>)> {
    let mut idxs: Vec<usize> = Vec::new();
    for &tag in train_tags {
        idxs.extend(ds.indices(tag));
    }
    idxs.sort();
    let mut optimizer = SgdOptimizer::new(cfg.base_lr, cfg.momentum, cfg.weight_decay);
    let mut log = TrainLog {
        epochs: Vec::new(),
        best_val_accuracy: -1.0,
        best_epoch: 0,
    };
    let mut best = crate::checkpoint::model_to_bytes(model, None)?;
    for epoch in 0..cfg.epochs {
        optimizer.lr = milestone_lr(cfg.base_lr, &cfg.milestones, epoch);
        let last_good = crate::checkpoint::model_to_bytes(model, None)?;
        let train_loss = match train_one_epoch(model, ds, &idxs, &mut optimizer, cfg.batch_size, rng)
        {
            Ok(l) => l,
            Err(Error::Diverged(where_)) => {
                // roll back to the last finished epoch and stop
                let ckpt = crate::checkpoint::read_checkpoint_bytes(&last_good)?;
                crate::checkpoint::load_into_model(&ckpt, model, None)?;
                return Err(Error::Diverged(format!("epoch {epoch}: {where_}")));
            }
            Err(e) => return Err(e),
        };
        let val = evaluate(model, ds, val_tag, cfg.batch_size, cfg.threads)?;
        if val.value() > log.best_val_accuracy {
            log.best_val_accuracy = val.value();
            log.best_epoch = epoch;
            best = crate::checkpoint::model_to_bytes(model, None)?;
        }
        log.epochs.push(EpochLog {
            epoch,
            lr: optimizer.lr,
            train_loss,
            val_accuracy: val.value(),
        });
    }
    Ok((log, best))
}

/// Sum the two score matrices and take the per-row argmax; ties break
/// toward the lower class index.
pub fn two_stream_fuse(scores_joint: &Tensor, scores_bone: &Tensor) -> Result<Vec<usize>> {
    two_stream_fuse_weighted(scores_joint, scores_bone, 1.0, 1.0)
}

/// Weighted fusion: argmax of alpha_joint·joint + alpha_bone·bone.
pub fn two_stream_fuse_weighted(
    scores_joint: &Tensor,
    scores_bone: &Tensor,
    alpha_joint: f64,
    alpha_bone: f64,
) -> Result<Vec<usize>> {
    if scores_joint.shape() != scores_bone.shape() || scores_joint.shape().len() != 2 {
        return Err(Error::shape(
            format!("{:?}", scores_joint.shape()),
            format!("{:?}", scores_bone.shape()),
        ));
    }
    let (n, k) = (scores_joint.shape()[0], scores_joint.shape()[1]);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let a = &scores_joint.data()[i * k..(i + 1) * k];
        let b = &scores_bone.data()[i * k..(i + 1) * k];
        let mut best = 0;
        let mut best_v = alpha_joint * a[0] + alpha_bone * b[0];
        for j in 1..k {
            let v = alpha_joint * a[j] + alpha_bone * b[j];
            if v > best_v {
                best = j;
                best_v = v;
            }
        }
        out.push(best);
    }
    Ok(out)
}
