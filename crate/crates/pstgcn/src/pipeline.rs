//! End-to-end orchestration: split, search, fine-tune, optional bone
//! stream and fusion, artifact emission.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::checkpoint;
use crate::complexity::{self, ComplexityOptions};
use crate::config::{RunConfig, StreamMode};
use crate::data::{Dataset, SplitTag};
use crate::error::{Error, Result};
use crate::net::STGCNModel;
use crate::search::{pst_gcn_search, SearchConfig};
use crate::tensor::Tensor;
use crate::train::{
    evaluate, predict_labels, score_matrix, train_final, two_stream_fuse_weighted,
    FinalTrainConfig,
};

pub const DEFAULT_VAL_FRACTION: f64 = 0.2;

/// Per-sample softmax scores and predictions for one dataset split,
/// serialized as JSON so streams can be fused offline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreFile {
    pub indices: Vec<usize>,
    pub labels: Vec<usize>,
    pub predictions: Vec<usize>,
    pub scores: Vec<Vec<f64>>,
}

impl ScoreFile {
    pub fn accuracy(&self) -> f64 {
        if self.labels.is_empty() {
            return 0.0;
        }
        let correct = self
            .labels
            .iter()
            .zip(&self.predictions)
            .filter(|(l, p)| l == p)
            .count();
        correct as f64 / self.labels.len() as f64
    }

    pub fn matrix(&self) -> Result<Tensor> {
        let n = self.scores.len();
        let k = self.scores.first().map(|r| r.len()).unwrap_or(0);
        let mut flat = Vec::with_capacity(n * k);
        for row in &self.scores {
            if row.len() != k {
                return Err(Error::BadFormat("ragged score rows".into()));
            }
            flat.extend_from_slice(row);
        }
        Tensor::from_vec(&[n, k], flat)
    }

    pub fn load(path: &Path) -> Result<ScoreFile> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::BadFormat(format!("score file: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

fn score_split(
    model: &crate::net::STGCNModel,
    ds: &Dataset,
    idxs: &[usize],
    batch_size: usize,
) -> Result<ScoreFile> {
    let scores = score_matrix(model, ds, idxs, batch_size)?;
    let predictions = predict_labels(model, ds, idxs, batch_size, 1)?;
    let k = model.n_class;
    Ok(ScoreFile {
        indices: idxs.to_vec(),
        labels: idxs.iter().map(|&i| ds.samples[i].label).collect(),
        predictions,
        scores: (0..idxs.len())
            .map(|n| scores.data()[n * k..(n + 1) * k].to_vec())
            .collect(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub stream: StreamMode,
    pub layer_widths: Vec<usize>,
    pub params: u64,
    pub flops: u64,
    pub val_accuracy: f64,
    pub bone_val_accuracy: Option<f64>,
    pub fused_val_accuracy: Option<f64>,
    pub seconds: f64,
}

fn final_cfg(s: &SearchConfig, epochs: usize) -> FinalTrainConfig {
    FinalTrainConfig {
        epochs,
        base_lr: s.finetune_base_lr,
        milestones: s.finetune_milestones.clone(),
        batch_size: s.batch_size,
        momentum: s.momentum,
        weight_decay: s.weight_decay,
        threads: s.threads,
    }
}

/// Run the configured pipeline end to end, writing artifacts under
/// `cfg.output` as they become available (partial results survive a later
/// failure).
pub fn run_pipeline(cfg: &RunConfig) -> Result<PipelineSummary> {
    let started = std::time::Instant::now();
    std::fs::create_dir_all(&cfg.output)?;
    let mut ds = Dataset::load_dir(&cfg.dataset)?;
    if ds.indices(SplitTag::Val).is_empty() {
        ds.stratified_split(DEFAULT_VAL_FRACTION, cfg.search.seed)?;
    }

    let (primary, secondary) = match cfg.stream {
        StreamMode::Joint => (ds, None),
        StreamMode::Bone => (ds.to_bone_stream()?, None),
        StreamMode::TwoStream => {
            let bones = ds.to_bone_stream()?;
            (ds, Some(bones))
        }
    };

    let (mut model, report) = pst_gcn_search(&primary, &cfg.search)?;
    report.save(&cfg.output.join("growth_report.json"))?;
    let descriptor = model.descriptor();
    descriptor.save(&cfg.output.join("descriptor.toml"))?;
    checkpoint::save_model(&cfg.output.join("model.ckpt"), &mut model, None)?;

    let (c, t, _) = primary.dims();
    debug_assert_eq!(c, descriptor.in_channels);
    let complexity = complexity::analyze(&descriptor, t, ComplexityOptions::default());
    write_json(&cfg.output.join("complexity.json"), &complexity)?;

    let val = evaluate(
        &model,
        &primary,
        SplitTag::Val,
        cfg.search.batch_size,
        cfg.search.threads,
    )?;
    let val_idxs = primary.indices(SplitTag::Val);
    let joint_scores = score_split(&model, &primary, &val_idxs, cfg.search.batch_size)?;
    joint_scores.save(&cfg.output.join("scores_joint.json"))?;
    debug_assert_eq!(joint_scores.accuracy(), val.value());

    let mut summary = PipelineSummary {
        stream: cfg.stream,
        layer_widths: descriptor.layers.iter().map(|l| l.channels).collect(),
        params: complexity.total_params,
        flops: complexity.total_flops,
        val_accuracy: val.value(),
        bone_val_accuracy: None,
        fused_val_accuracy: None,
        seconds: 0.0,
    };

    if let Some(bones) = secondary {
        // the found topology is reused for the bone stream, trained from
        // scratch on bone features for the (shorter) bone budget
        let mut rng = ChaCha20Rng::seed_from_u64(cfg.search.seed.wrapping_add(1));
        let mut bone_model = STGCNModel::new(
            model.adjacency.clone(),
            model.topology_name.clone(),
            descriptor.in_channels,
            descriptor.n_class,
            &descriptor.layers,
            true,
            &mut rng,
        )?;
        let bone_cfg = final_cfg(&cfg.search, cfg.bone_epochs);
        let (_, best) = train_final(
            &mut bone_model,
            &bones,
            &[SplitTag::Train],
            SplitTag::Val,
            &bone_cfg,
            &mut rng,
        )?;
        let ckpt = checkpoint::read_checkpoint_bytes(&best)?;
        checkpoint::load_into_model(&ckpt, &mut bone_model, None)?;
        checkpoint::save_model(&cfg.output.join("model_bone.ckpt"), &mut bone_model, None)?;

        let bone_val = evaluate(
            &bone_model,
            &bones,
            SplitTag::Val,
            cfg.search.batch_size,
            cfg.search.threads,
        )?;
        let bone_scores = score_split(&bone_model, &bones, &val_idxs, cfg.search.batch_size)?;
        bone_scores.save(&cfg.output.join("scores_bone.json"))?;
        let fused = two_stream_fuse_weighted(
            &joint_scores.matrix()?,
            &bone_scores.matrix()?,
            cfg.fusion_alpha_joint,
            cfg.fusion_alpha_bone,
        )?;
        let correct = val_idxs
            .iter()
            .zip(&fused)
            .filter(|(&i, &p)| primary.samples[i].label == p)
            .count();
        write_json(
            &cfg.output.join("fused_predictions.json"),
            &ScoreFile {
                indices: val_idxs.clone(),
                labels: val_idxs.iter().map(|&i| primary.samples[i].label).collect(),
                predictions: fused,
                scores: Vec::new(),
            },
        )?;
        summary.bone_val_accuracy = Some(bone_val.value());
        summary.fused_val_accuracy = Some(correct as f64 / val_idxs.len() as f64);
    }

    summary.seconds = started.elapsed().as_secs_f64();
    write_json(&cfg.output.join("metrics.json"), &summary)?;
    Ok(summary)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::BadFormat(format!("json serialize: {e}")))?;
    std::fs::write(path, text)?;
    Ok(())
}
