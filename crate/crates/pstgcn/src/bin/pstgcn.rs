use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use pstgcn::checkpoint;
use pstgcn::complexity::{analyze, ComplexityOptions, MacConvention};
use pstgcn::config::{RunConfig, StreamMode};
use pstgcn::data::{generate_synthetic, Dataset, SplitTag};
use pstgcn::error::Result;
use pstgcn::graph::{build_partitions, SkeletonTopology};
use pstgcn::net::{ModelDescriptor, STGCNModel};
use pstgcn::pipeline::{run_pipeline, ScoreFile, DEFAULT_VAL_FRACTION};
use pstgcn::search::SearchConfig;
use pstgcn::train::{
    evaluate, thread_budget, train_final, two_stream_fuse_weighted, FinalTrainConfig,
};

#[derive(Parser)]
#[command(name = "pstgcn", about = "Progressive spatio-temporal graph convolution toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the progressive topology search pipeline
    Search(SearchArgs),
    /// Train a fixed descriptor on a dataset
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset split
    Eval(EvalArgs),
    /// Parameter and FLOP accounting for a descriptor
    Complexity(ComplexityArgs),
    /// Generate a synthetic skeleton dataset
    GenSynthetic(GenArgs),
    /// Fuse two checkpoints (joint + bone) on a dataset split
    Fuse(FuseArgs),
}

#[derive(Args)]
struct SearchArgs {
    /// TOML run configuration; flags below override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// joint | bone | two-stream
    #[arg(long)]
    stream: Option<StreamMode>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    channel_step: Option<usize>,
    #[arg(long)]
    eps_w: Option<f64>,
    #[arg(long)]
    eps_d: Option<f64>,
    #[arg(long)]
    max_layers: Option<usize>,
    #[arg(long)]
    max_width_steps: Option<usize>,
    #[arg(long)]
    epochs_per_iteration: Option<usize>,
    #[arg(long)]
    finetune_epochs: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    finetune_milestones: Option<Vec<usize>>,
    #[arg(long)]
    batch_size: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    descriptor: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, value_delimiter = ',', default_value = "30,40")]
    milestones: Vec<usize>,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    /// Train on bone features instead of joint coordinates
    #[arg(long)]
    bone: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// train | val | test
    #[arg(long, default_value = "val")]
    split: String,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long)]
    bone: bool,
    /// Validation fraction used to reconstruct the split
    #[arg(long, default_value_t = DEFAULT_VAL_FRACTION)]
    val_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ComplexityArgs {
    #[arg(long)]
    descriptor: PathBuf,
    /// Input sequence length
    #[arg(long, default_value_t = 300)]
    frames: usize,
    /// Count one FLOP per multiply-accumulate instead of two
    #[arg(long)]
    mac1: bool,
    /// Include normalization/activation/attention arithmetic
    #[arg(long)]
    exhaustive: bool,
    /// Emit the full per-layer report as JSON
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    output: PathBuf,
    /// Topology preset (ntu25 | openpose18 | toy11) or a topology file
    #[arg(long, default_value = "toy11")]
    topology: String,
    #[arg(long, default_value_t = 5)]
    classes: usize,
    #[arg(long, default_value_t = 100)]
    per_class: usize,
    #[arg(long, default_value_t = 32)]
    frames: usize,
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct FuseArgs {
    /// Score file of the joint stream (as written by `search`)
    #[arg(long)]
    joint_scores: PathBuf,
    /// Score file of the bone stream
    #[arg(long)]
    bone_scores: PathBuf,
    /// Where to write the fused predictions (JSON); stdout when omitted
    #[arg(long)]
    output: Option<PathBuf>,
    /// Fusion weight of the joint stream
    #[arg(long, default_value_t = 1.0)]
    fusion_alpha_joint: f64,
    /// Fusion weight of the bone stream
    #[arg(long, default_value_t = 1.0)]
    fusion_alpha_bone: f64,
}

fn parse_split(s: &str) -> Result<SplitTag> {
    match s {
        "train" => Ok(SplitTag::Train),
        "val" => Ok(SplitTag::Val),
        "test" => Ok(SplitTag::Test),
        other => Err(pstgcn::error::Error::InvalidConfig(format!(
            "unknown split {other:?}"
        ))),
    }
}

fn load_model(ckpt_path: &std::path::Path, ds: &Dataset) -> Result<STGCNModel> {
    let ckpt = checkpoint::read_checkpoint_file(ckpt_path)?;
    let adj = build_partitions(&ds.topology)?;
    let mut rng = ChaCha20Rng::seed_from_u64(0);
    let mut model = STGCNModel::new(
        adj,
        ckpt.topology_name.clone(),
        ckpt.descriptor.in_channels,
        ckpt.descriptor.n_class,
        &ckpt.descriptor.layers,
        true,
        &mut rng,
    )?;
    checkpoint::load_into_model(&ckpt, &mut model, None)?;
    Ok(model)
}

fn load_split_dataset(dir: &std::path::Path, frac: f64, seed: u64, bone: bool) -> Result<Dataset> {
    let mut ds = Dataset::load_dir(dir)?;
    if ds.indices(SplitTag::Val).is_empty() {
        ds.stratified_split(frac, seed)?;
    }
    if bone {
        ds = ds.to_bone_stream()?;
    }
    Ok(ds)
}

fn cmd_search(a: SearchArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(path) => RunConfig::load(path)?,
        None => {
            let dataset = a.dataset.clone().ok_or_else(|| {
                pstgcn::error::Error::InvalidConfig("--dataset or --config required".into())
            })?;
            let output = a.output.clone().ok_or_else(|| {
                pstgcn::error::Error::InvalidConfig("--output or --config required".into())
            })?;
            RunConfig {
                dataset,
                output,
                stream: StreamMode::Joint,
                bone_epochs: 30,
                fusion_alpha_joint: 1.0,
                fusion_alpha_bone: 1.0,
                search: SearchConfig::default(),
            }
        }
    };
    if let Some(v) = a.dataset {
        cfg.dataset = v;
    }
    if let Some(v) = a.output {
        cfg.output = v;
    }
    if let Some(v) = a.stream {
        cfg.stream = v;
    }
    if let Some(v) = a.seed {
        cfg.search.seed = v;
    } else if a.config.is_none() {
        return Err(pstgcn::error::Error::InvalidConfig(
            "--seed is required (or set it in the config file)".into(),
        ));
    }
    if let Some(v) = a.channel_step {
        cfg.search.channel_step = v;
    }
    if let Some(v) = a.eps_w {
        cfg.search.eps_w = v;
    }
    if let Some(v) = a.eps_d {
        cfg.search.eps_d = v;
    }
    if let Some(v) = a.max_layers {
        cfg.search.max_layers = v;
    }
    if let Some(v) = a.max_width_steps {
        cfg.search.max_width_steps = v;
    }
    if let Some(v) = a.epochs_per_iteration {
        cfg.search.epochs_per_iteration = v;
    }
    if let Some(v) = a.finetune_epochs {
        cfg.search.finetune_epochs = v;
    }
    if let Some(v) = a.finetune_milestones {
        cfg.search.finetune_milestones = v;
    }
    if let Some(v) = a.batch_size {
        cfg.search.batch_size = v;
    }
    cfg.search.threads = thread_budget();
    cfg.validate()?;
    let summary = run_pipeline(&cfg)?;
    println!(
        "widths={:?} params={} flops={} val_acc={:.4}",
        summary.layer_widths, summary.params, summary.flops, summary.val_accuracy
    );
    if let Some(f) = summary.fused_val_accuracy {
        println!("fused_val_acc={f:.4}");
    }
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let ds = load_split_dataset(&a.dataset, DEFAULT_VAL_FRACTION, a.seed, a.bone)?;
    let descriptor = ModelDescriptor::load(&a.descriptor)?;
    descriptor.validate()?;
    let adj = build_partitions(&ds.topology)?;
    let mut rng = ChaCha20Rng::seed_from_u64(a.seed);
    let mut model = STGCNModel::new(
        adj,
        ds.topology.name.clone(),
        descriptor.in_channels,
        descriptor.n_class,
        &descriptor.layers,
        true,
        &mut rng,
    )?;
    let cfg = FinalTrainConfig {
        epochs: a.epochs,
        base_lr: a.lr,
        milestones: a.milestones.clone(),
        batch_size: a.batch_size,
        momentum: 0.9,
        weight_decay: 1e-4,
        threads: thread_budget(),
    };
    let (log, best) = train_final(&mut model, &ds, &[SplitTag::Train], SplitTag::Val, &cfg, &mut rng)?;
    let ckpt = checkpoint::read_checkpoint_bytes(&best)?;
    checkpoint::load_into_model(&ckpt, &mut model, None)?;
    if let Some(parent) = a.output.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    checkpoint::save_model(&a.output, &mut model, None)?;
    println!(
        "best_val_acc={:.4} at epoch {} ({} epochs)",
        log.best_val_accuracy,
        log.best_epoch,
        log.epochs.len()
    );
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let ds = load_split_dataset(&a.dataset, a.val_fraction, a.seed, a.bone)?;
    let model = load_model(&a.checkpoint, &ds)?;
    let split = parse_split(&a.split)?;
    let acc = evaluate(&model, &ds, split, a.batch_size, thread_budget())?;
    println!("split={} correct={} total={} acc={:.4}", a.split, acc.correct, acc.total, acc.value());
    Ok(())
}

fn cmd_complexity(a: ComplexityArgs) -> Result<()> {
    let descriptor = ModelDescriptor::load(&a.descriptor)?;
    descriptor.validate()?;
    let opts = ComplexityOptions {
        convention: if a.mac1 {
            MacConvention::One
        } else {
            MacConvention::Two
        },
        exhaustive: a.exhaustive,
        input_bn: true,
    };
    let report = analyze(&descriptor, a.frames, opts);
    if a.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&report)
                .map_err(|e| pstgcn::error::Error::BadFormat(e.to_string()))?
        );
    } else {
        for l in &report.layers {
            println!(
                "layer {:2}: {:3} -> {:3} (T {} -> {})  params={}  flops={}",
                l.layer,
                l.c_in,
                l.c_out,
                l.t_in,
                l.t_out,
                l.spatial_params + l.temporal_params + l.residual_params + l.attention_params + l.bn_params,
                l.spatial_flops + l.temporal_flops + l.residual_flops,
            );
        }
        println!("{}", report.summary_line());
    }
    Ok(())
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let topo = match SkeletonTopology::preset(&a.topology) {
        Ok(t) => t,
        Err(_) => SkeletonTopology::load(std::path::Path::new(&a.topology))?,
    };
    let ds = generate_synthetic(a.classes, a.per_class, &topo, a.frames, a.noise, a.seed)?;
    ds.save_dir(&a.output)?;
    println!(
        "wrote {} samples ({} classes, T={}, V={}) to {}",
        ds.samples.len(),
        a.classes,
        a.frames,
        topo.joint_count,
        a.output.display()
    );
    Ok(())
}

fn cmd_fuse(a: FuseArgs) -> Result<()> {
    let joint = ScoreFile::load(&a.joint_scores)?;
    let bone = ScoreFile::load(&a.bone_scores)?;
    if joint.indices != bone.indices {
        return Err(pstgcn::error::Error::InvalidConfig(
            "score files cover different samples".into(),
        ));
    }
    let fused = two_stream_fuse_weighted(
        &joint.matrix()?,
        &bone.matrix()?,
        a.fusion_alpha_joint,
        a.fusion_alpha_bone,
    )?;
    let out = ScoreFile {
        indices: joint.indices.clone(),
        labels: joint.labels.clone(),
        predictions: fused,
        scores: Vec::new(),
    };
    let correct = out
        .labels
        .iter()
        .zip(&out.predictions)
        .filter(|(l, p)| l == p)
        .count();
    match &a.output {
        Some(path) => out.save(path)?,
        None => println!(
            "{}",
            serde_json::to_string_pretty(&out)
                .map_err(|e| pstgcn::error::Error::BadFormat(e.to_string()))?
        ),
    }
    eprintln!(
        "correct={} total={} acc={:.4}",
        correct,
        out.labels.len(),
        correct as f64 / out.labels.len().max(1) as f64
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Search(a) => cmd_search(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Complexity(a) => cmd_complexity(a),
        Command::GenSynthetic(a) => cmd_gen(a),
        Command::Fuse(a) => cmd_fuse(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
