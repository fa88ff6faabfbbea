//! `ccgan` command-line driver.
//!
//! Exit statuses: 0 success, 2 configuration error, 3 data or format
//! error, 4 numeric failure during training.

pub mod config;
pub mod report;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ccgan_core::ccgan::{AdaptationModel, CurriculumMode};
use ccgan_core::checkpoint::Checkpoint;
use ccgan_core::dataset::read_corpus;
use ccgan_core::eval::{evaluate_checkpoint, pca_project, run_experiment, weight_audit, write_pca_dump};
use ccgan_core::nn::AdamConfig;
use ccgan_core::synth::{make_multisource_task, TaskSpec};
use ccgan_core::task::split_by_target;
use ccgan_core::text::{encode, pretrain_autoencoder, PretrainConfig, TfidfModel, DEFAULT_MAX_FEATURES};
use ccgan_core::{EncodedDataset, Error};
use clap::{Args, Parser, Subcommand};

pub use config::{ConfigError, RunConfig};
pub use report::print_loss_breakdown;

/// Effective key=value configuration written next to the run outputs.
pub const RUN_CONFIG_FILE: &str = "run.cfg";
/// Checkpoint entry holding a pretrained encoder.
pub const ENCODER_ENTRY: &str = "encoder";

#[derive(Parser, Debug)]
#[command(name = "ccgan", version, about = "Curriculum CycleGAN multi-source domain adaptation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Encode a `label<TAB>domain<TAB>text` corpus into an embedding file.
    Encode(EncodeArgs),
    /// Pretrain a dense autoencoder on embedding rows (labels unused).
    Pretrain(PretrainArgs),
    /// Write a synthetic multi-source Gaussian task as an embedding file.
    Synth(SynthArgs),
    /// Train one experiment arm.
    Train(Box<TrainArgs>),
    /// Score a checkpoint's classifier on the target domain.
    Eval(EvalArgs),
    /// Mean curriculum weight per source domain under a trained model.
    Audit(AuditArgs),
    /// Two-dimensional PCA projection of embedding rows.
    Pca(PcaArgs),
}

#[derive(Args, Debug)]
struct EncodeArgs {
    /// Input corpus.
    #[arg(long)]
    corpus: PathBuf,
    /// Output embedding file.
    #[arg(long)]
    out: PathBuf,
    /// Vocabulary size cap.
    #[arg(long, default_value_t = DEFAULT_MAX_FEATURES)]
    max_features: usize,
    /// Pass TF-IDF rows through the encoder stored in this checkpoint.
    #[arg(long)]
    encoder: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PretrainArgs {
    /// Input embedding file.
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint to write the encoder to.
    #[arg(long)]
    out: PathBuf,
    /// Also write the encoded rows here.
    #[arg(long)]
    encoded: Option<PathBuf>,
    #[arg(long, default_value_t = 256)]
    latent_dim: usize,
    #[arg(long, default_value_t = 512)]
    hidden_dim: usize,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    lr: f64,
    /// Steps between learning-rate halvings.
    #[arg(long, default_value_t = 200)]
    lr_decay_every: u64,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Number of source domains.
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Comma-separated shift magnitude per source [default: 0.5, 1, 2, ... doubling].
    #[arg(long, value_delimiter = ',')]
    shifts: Option<Vec<f64>>,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Distance between the two class means.
    #[arg(long, default_value_t = 2.0)]
    class_distance: f64,
    /// Samples per class in every domain.
    #[arg(long, default_value_t = 1000)]
    n_per_class: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output embedding file; the target domain is tagged `target`.
    #[arg(long, default_value = "task.emb")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// key=value configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Embedding file with domain tags.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Domain to adapt to; every other domain is pooled as source.
    #[arg(long)]
    target: Option<String>,
    /// source_only_combined, cyclegan_plain, ccgan_model_based, ccgan_model_free or ccgan_no_cycle [default: ccgan_model_free].
    #[arg(long)]
    arm: Option<String>,
    /// Directory for metrics.jsonl, summary.json, model.ckpt and the config dumps.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Record per-step wall-clock time (makes metrics non-reproducible) [default: false].
    #[arg(long)]
    record_wall_clock: Option<bool>,
    /// [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// [default: 64]
    #[arg(long)]
    batch_size: Option<usize>,
    /// [default: 2000]
    #[arg(long)]
    steps: Option<usize>,
    /// [default: 1]
    #[arg(long)]
    disc_steps_per_gen_step: Option<usize>,
    /// [default: 100]
    #[arg(long)]
    eval_every: Option<usize>,
    /// Generators compute z + mlp(z), starting at the identity [default: true].
    #[arg(long)]
    residual_generators: Option<bool>,
    /// [default: 0.1]
    #[arg(long)]
    lambda_cgan: Option<f64>,
    /// [default: 1]
    #[arg(long)]
    lambda_cyc: Option<f64>,
    /// [default: 1]
    #[arg(long)]
    lambda_uni: Option<f64>,
    /// [default: 1]
    #[arg(long)]
    lambda_task: Option<f64>,
    /// Base learning rate [default: 0.0001].
    #[arg(long)]
    lr: Option<f64>,
    /// [default: 0.5]
    #[arg(long)]
    beta1: Option<f64>,
    /// [default: 0.999]
    #[arg(long)]
    beta2: Option<f64>,
    /// [default: 1e-8]
    #[arg(long)]
    eps: Option<f64>,
    /// Decoupled weight decay [default: 0.0001].
    #[arg(long)]
    weight_decay: Option<f64>,
    /// [default: 0.5]
    #[arg(long)]
    lr_decay_factor: Option<f64>,
    /// [default: 100]
    #[arg(long)]
    lr_decay_every: Option<u64>,
    /// Write the effective configuration here and exit without training.
    #[arg(long)]
    dump_config: Option<PathBuf>,
}

impl TrainArgs {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        fn s<T: ToString>(v: &Option<T>) -> Option<String> {
            v.as_ref().map(T::to_string)
        }
        let p = |v: &Option<PathBuf>| v.as_ref().map(|p| p.display().to_string());
        [
            ("data", p(&self.data)),
            ("target", self.target.clone()),
            ("arm", self.arm.clone()),
            ("output_dir", p(&self.out)),
            ("record_wall_clock", s(&self.record_wall_clock)),
            ("seed", s(&self.seed)),
            ("batch_size", s(&self.batch_size)),
            ("total_steps", s(&self.steps)),
            ("disc_steps_per_gen_step", s(&self.disc_steps_per_gen_step)),
            ("eval_every", s(&self.eval_every)),
            ("residual_generators", s(&self.residual_generators)),
            ("lambda_cgan", s(&self.lambda_cgan)),
            ("lambda_cyc", s(&self.lambda_cyc)),
            ("lambda_uni", s(&self.lambda_uni)),
            ("lambda_task", s(&self.lambda_task)),
            ("lr", s(&self.lr)),
            ("beta1", s(&self.beta1)),
            ("beta2", s(&self.beta2)),
            ("eps", s(&self.eps)),
            ("weight_decay", s(&self.weight_decay)),
            ("lr_decay_factor", s(&self.lr_decay_factor)),
            ("lr_decay_every", s(&self.lr_decay_every)),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .collect()
    }

    fn run_config(&self) -> Result<RunConfig, ConfigError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        for (k, v) in self.overrides() {
            let flag = format!("--{}", k.replace('_', "-"));
            cfg.set(k, &v).map_err(|e| ConfigError(format!("{flag}: {e}")))?;
        }
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Embedding file with target labels.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    target: String,
}

#[derive(Args, Debug)]
struct AuditArgs {
    /// Checkpoint of an adaptation run.
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    target: String,
    /// model_free or model_based.
    #[arg(long, default_value = "model_free")]
    mode: String,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 100)]
    batches: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct PcaArgs {
    #[arg(long)]
    data: PathBuf,
    /// Output file (tab-separated `x y domain`).
    #[arg(long)]
    out: PathBuf,
    /// Map non-target rows through this checkpoint's source→target
    /// generator before projecting; requires --target.
    #[arg(long, requires = "target")]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    target: Option<String>,
}

/// Exit status for an error chain.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Config(_) | Error::Spec(_) | Error::Contract(_) => 2,
                Error::Numeric(_) => 4,
                Error::Dimension(_) | Error::Data(_) | Error::Format { .. } | Error::Io(_) => 3,
            };
        }
    }
    3
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit status. Diagnostics go to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Encode(a) => cmd_encode(a),
        Command::Pretrain(a) => cmd_pretrain(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(*a),
        Command::Eval(a) => cmd_eval(a),
        Command::Audit(a) => cmd_audit(a),
        Command::Pca(a) => cmd_pca(a),
    }
}

fn read_data(path: &Path) -> Result<EncodedDataset> {
    EncodedDataset::read_embeddings(path).with_context(|| format!("reading {}", path.display()))
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path).with_context(|| format!("reading {}", path.display()))
}

fn cmd_encode(a: EncodeArgs) -> Result<()> {
    let docs = read_corpus(&a.corpus).with_context(|| format!("reading {}", a.corpus.display()))?;
    let model = TfidfModel::fit(&docs, a.max_features)?;
    let mut data = model.encode(&docs)?;
    if let Some(path) = &a.encoder {
        let ck = load_checkpoint(path)?;
        let entry = ck
            .get(ENCODER_ENTRY)
            .ok_or_else(|| Error::Data(format!("{} has no {ENCODER_ENTRY:?} network", path.display())))?;
        data = encode(&entry.params, &data)?;
    }
    data.write_embeddings(&a.out)?;
    eprintln!("encoded {} documents into {} dimensions", data.len(), data.dim());
    Ok(())
}

fn cmd_pretrain(a: PretrainArgs) -> Result<()> {
    let data = read_data(&a.data)?;
    let cfg = PretrainConfig {
        latent_dim: a.latent_dim,
        hidden_dim: a.hidden_dim,
        epochs: a.epochs,
        batch_size: a.batch_size,
        seed: a.seed,
        adam: AdamConfig {
            base_lr: a.lr,
            decay_every: a.lr_decay_every,
            ..AdamConfig::encoder_pretraining()
        },
    };
    let outcome = pretrain_autoencoder(&data, &cfg)?;
    for (epoch, loss) in outcome.epoch_losses.iter().enumerate() {
        println!("epoch {epoch}\treconstruction_mse {loss:.6e}");
    }
    let mut ck = Checkpoint::default();
    ck.push(ENCODER_ENTRY, &outcome.encoder, None);
    ck.save(&a.out)?;
    if let Some(path) = &a.encoded {
        encode(&outcome.encoder, &data)?.write_embeddings(path)?;
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let shifts = match a.shifts {
        Some(s) if s.len() != a.k => {
            return Err(ConfigError(format!("--shifts has {} values but --k is {}", s.len(), a.k)).into())
        }
        Some(s) => s,
        None => (0..a.k).map(|i| 0.5 * 2f64.powi(i as i32)).collect(),
    };
    let spec = TaskSpec {
        shifts,
        dim: a.dim,
        sigma: a.sigma,
        class_distance: a.class_distance,
        n_per_class: a.n_per_class,
        seed: a.seed,
    };
    let task = make_multisource_task(&spec)?;
    task.to_dataset()?.write_embeddings(&a.out)?;
    let bayes = task.bayes_accuracy()?;
    println!("wrote {} ({} sources, target tagged `target`)", a.out.display(), task.sources.len());
    println!("bayes_accuracy\t{:.6}", bayes.value);
    if let Some(o) = &task.oracle {
        for (i, d) in o.source_distances.iter().enumerate() {
            println!("source{i}_distance\t{d:.6}");
        }
    }
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let cfg = a.run_config()?;
    if let Some(path) = &a.dump_config {
        fs::write(path, cfg.dump())?;
        return Ok(());
    }
    let exp = cfg.experiment()?;
    let outcome = run_experiment(&exp)?;
    if let Some(dir) = &exp.output_dir {
        fs::write(dir.join(RUN_CONFIG_FILE), cfg.dump())?;
    }
    print!("{}", print_loss_breakdown(&outcome.summary));
    for (tag, w) in &outcome.summary.source_weights {
        println!("mean weight {tag}\t{w:.6}");
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let split = split_by_target(&read_data(&a.data)?, &a.target)?;
    println!("target_accuracy\t{:.6}", evaluate_checkpoint(&ck, &split)?);
    Ok(())
}

fn cmd_audit(a: AuditArgs) -> Result<()> {
    let mode: CurriculumMode = a.mode.parse()?;
    let model = AdaptationModel::from_checkpoint(&load_checkpoint(&a.checkpoint)?)?;
    let split = split_by_target(&read_data(&a.data)?, &a.target)?;
    let audit = weight_audit(&model, mode, &split.training.source, a.batch_size, a.batches, a.seed)?;
    print!("{}", audit.to_table());
    Ok(())
}

fn cmd_pca(a: PcaArgs) -> Result<()> {
    let mut data = read_data(&a.data)?;
    if let (Some(path), Some(target)) = (&a.checkpoint, &a.target) {
        let model = AdaptationModel::from_checkpoint(&load_checkpoint(path)?)?;
        let rows = data.rows_not_in_domain(target);
        if rows.is_empty() {
            return Err(Error::Data(format!("no rows outside domain {target:?}")).into());
        }
        let mapped = model.g_st.forward_values(&data.select(&rows).representations)?;
        for (k, &r) in rows.iter().enumerate() {
            data.representations.row_mut(r).assign(&mapped.row(k));
        }
    }
    let p = pca_project(&data.representations, 2)?;
    write_pca_dump(&a.out, &p.coords, &data.domain_tags)?;
    println!(
        "explained_variance_ratio\t{:.6}\t{:.6}",
        p.explained_variance_ratio[0], p.explained_variance_ratio[1]
    );
    if p.degenerate_rank {
        eprintln!("warning: data has rank below 2; the second axis is zero");
    }
    Ok(())
}
