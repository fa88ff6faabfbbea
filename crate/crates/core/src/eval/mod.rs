//! Experiment harness: arms, training loop, metrics stream, audits.

mod audit;
mod pca;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use ndarray::Axis;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ccgan::{
    classifier_step, predict_target, train_step, AdaptationModel, CurriculumMode, LossBreakdown,
    Optimizers, TrainConfig,
};
use crate::checkpoint::Checkpoint;
use crate::dataset::EncodedDataset;
use crate::error::{Error, Result};
use crate::nn::{AdamState, MlpParams, MlpSpec};
use crate::sampling::BatchStream;
use crate::synth::{make_multisource_task, TaskSpec, TARGET_TAG};
use crate::task::{split_by_target, DomainSplit, HeldOutLabels, TrainingView};

pub use audit::{weight_audit, WeightAudit};
pub use pca::{pca_dump_string, pca_project, write_pca_dump, PcaResult, PCA_MAX_ITERS, PCA_TOL};

/// Fraction of positions where prediction and label agree.
pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::Data("accuracy of an empty prediction set".into()));
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    /// Classifier on pooled raw source rows; no generators.
    SourceOnlyCombined,
    /// Cycle-consistent adaptation with uniform weights.
    CycleganPlain,
    CcganModelBased,
    CcganModelFree,
    /// Model-free curriculum without the cycle loss or reverse path.
    CcganNoCycle,
}

impl Arm {
    pub const ALL: [Arm; 5] = [
        Arm::SourceOnlyCombined,
        Arm::CycleganPlain,
        Arm::CcganModelBased,
        Arm::CcganModelFree,
        Arm::CcganNoCycle,
    ];

    /// Curriculum mode and cycle flag implied by the arm; `None` for the
    /// source-only baseline.
    pub fn adaptation(self) -> Option<(CurriculumMode, bool)> {
        match self {
            Arm::SourceOnlyCombined => None,
            Arm::CycleganPlain => Some((CurriculumMode::None, true)),
            Arm::CcganModelBased => Some((CurriculumMode::ModelBased, true)),
            Arm::CcganModelFree => Some((CurriculumMode::ModelFree, true)),
            Arm::CcganNoCycle => Some((CurriculumMode::ModelFree, false)),
        }
    }

    /// `base` with the arm's curriculum mode and cycle flag applied.
    pub fn apply(self, base: &TrainConfig) -> TrainConfig {
        let mut cfg = base.clone();
        if let Some((mode, cycle)) = self.adaptation() {
            cfg.curriculum = mode;
            cfg.cycle_enabled = cycle;
        }
        cfg
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arm::SourceOnlyCombined => "source_only_combined",
            Arm::CycleganPlain => "cyclegan_plain",
            Arm::CcganModelBased => "ccgan_model_based",
            Arm::CcganModelFree => "ccgan_model_free",
            Arm::CcganNoCycle => "ccgan_no_cycle",
        })
    }
}

impl FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Arm::ALL
            .into_iter()
            .find(|a| a.to_string() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown arm {s:?} (source_only_combined, cyclegan_plain, ccgan_model_based, ccgan_model_free, ccgan_no_cycle)"
                ))
            })
    }
}

/// Where the rows come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskSource {
    Synthetic(TaskSpec),
    /// Embedding file with domain tags; the target is chosen by name.
    Embeddings(PathBuf),
}

impl TaskSource {
    /// Loads the rows and splits off `target`.
    pub fn load(&self, target: &str) -> Result<DomainSplit> {
        let all = match self {
            TaskSource::Synthetic(spec) => make_multisource_task(spec)?.to_dataset()?,
            TaskSource::Embeddings(path) => EncodedDataset::read_embeddings(path)?,
        };
        split_by_target(&all, target)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub task: TaskSource,
    pub target: String,
    pub arm: Arm,
    pub train: TrainConfig,
    pub output_dir: Option<PathBuf>,
    /// Wall-clock timings make metrics files differ between otherwise
    /// identical runs, so they are off unless asked for.
    pub record_wall_clock: bool,
}

impl ExperimentConfig {
    pub fn synthetic(spec: TaskSpec, arm: Arm, train: TrainConfig) -> Self {
        Self {
            task: TaskSource::Synthetic(spec),
            target: TARGET_TAG.to_string(),
            arm,
            train,
            output_dir: None,
            record_wall_clock: false,
        }
    }

    /// The training configuration actually used by the arm.
    pub fn effective_train_config(&self) -> TrainConfig {
        self.arm.apply(&self.train)
    }
}

/// One line of the metrics stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: usize,
    pub disc_t: f64,
    pub disc_s: f64,
    pub cgan_st: f64,
    pub cgan_ts: f64,
    pub cyc: f64,
    pub uni_t: f64,
    pub uni_s: f64,
    pub task: f64,
    pub total: f64,
    pub target_accuracy: f64,
    /// Mean weight received by rows of each source domain over the steps
    /// since the previous record.
    pub source_weights: BTreeMap<String, f64>,
    pub wall_clock_seconds: Option<f64>,
}

impl MetricsRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("metrics are plain data")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub arm: Arm,
    pub target: String,
    pub steps: usize,
    pub final_accuracy: f64,
    pub final_disc_t: f64,
    pub final_disc_s: f64,
    pub final_losses: LossBreakdown,
    pub source_weights: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum TrainedModel {
    SourceOnly {
        f_t: MlpParams,
        optimizer: AdamState,
    },
    Adapted {
        model: AdaptationModel,
        optimizers: Optimizers,
    },
}

impl TrainedModel {
    pub fn classifier(&self) -> &MlpParams {
        match self {
            TrainedModel::SourceOnly { f_t, .. } => f_t,
            TrainedModel::Adapted { model, .. } => &model.f_t,
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        match self {
            TrainedModel::SourceOnly { f_t, optimizer } => {
                let mut ck = Checkpoint::default();
                ck.push("f_t", f_t, Some(optimizer));
                ck
            }
            TrainedModel::Adapted { model, optimizers } => model.to_checkpoint(Some(optimizers)),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub records: Vec<MetricsRecord>,
    pub summary: Summary,
    pub model: TrainedModel,
}

impl ExperimentOutcome {
    pub fn metrics_jsonl(&self) -> String {
        self.records.iter().map(|r| r.to_json_line() + "\n").collect()
    }
}

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const CONFIG_FILE: &str = "config.json";

/// Loads the task and runs [`train_on_split`]; writes outputs when an
/// output directory is set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let split = config.task.load(&config.target)?;
    let outcome = train_on_split(config, &split.training, &split.target_labels)?;
    if let Some(dir) = &config.output_dir {
        write_outputs(dir, config, &outcome)?;
    }
    Ok(outcome)
}

/// Writes metrics stream, summary, checkpoint and effective config.
pub fn write_outputs(dir: &Path, config: &ExperimentConfig, outcome: &ExperimentOutcome) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut metrics = fs::File::create(dir.join(METRICS_FILE))?;
    metrics.write_all(outcome.metrics_jsonl().as_bytes())?;
    fs::write(dir.join(SUMMARY_FILE), pretty_json(&outcome.summary))?;
    fs::write(dir.join(CONFIG_FILE), pretty_json(config))?;
    outcome.model.to_checkpoint().save(&dir.join(CHECKPOINT_FILE))
}

fn pretty_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("plain data") + "\n"
}

/// Per-domain running sums of weights, for the metrics stream.
#[derive(Default)]
struct WeightTally(BTreeMap<String, (f64, usize)>);

impl WeightTally {
    fn add(&mut self, tags: &[Option<String>], rows: &[usize], weights: &[f64]) {
        for (&r, &w) in rows.iter().zip(weights) {
            let tag = tags[r].clone().unwrap_or_else(|| "-".into());
            let e = self.0.entry(tag).or_default();
            e.0 += w;
            e.1 += 1;
        }
    }

    fn take(&mut self) -> BTreeMap<String, f64> {
        std::mem::take(&mut self.0)
            .into_iter()
            .map(|(k, (s, n))| (k, s / n as f64))
            .collect()
    }
}

fn is_eval_step(step: usize, cfg: &TrainConfig) -> bool {
    step.is_multiple_of(cfg.eval_every) || step == cfg.total_steps
}

/// Trains one arm on a prepared split. Target labels are consulted only
/// to score predictions for the metrics stream.
pub fn train_on_split(
    config: &ExperimentConfig,
    view: &TrainingView,
    target_labels: &HeldOutLabels,
) -> Result<ExperimentOutcome> {
    let cfg = config.effective_train_config();
    cfg.validate()?;
    if cfg.total_steps == 0 {
        return Err(Error::Config("total_steps must be positive".into()));
    }
    let start = Instant::now();
    let clock = || config.record_wall_clock.then(|| start.elapsed().as_secs_f64());

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let model_seed: u64 = rng.random();
    let mut src_stream = BatchStream::new((0..view.source.len()).collect(), cfg.batch_size)?;
    let mut tgt_stream = BatchStream::new((0..view.target.len()).collect(), cfg.batch_size)?;
    let labels = view.source.required_labels()?;
    let src_x = &view.source.representations;
    let tgt_x = &view.target.representations;

    let mut records = Vec::new();
    let mut tally = WeightTally::default();
    let score = |f: &MlpParams| -> Result<f64> { target_labels.accuracy(&predict_target(f, tgt_x)?.classes) };

    let model = match config.arm.adaptation() {
        None => {
            let mut f_t = MlpParams::init(&MlpSpec::classifier(view.dim(), view.num_classes), model_seed)?;
            let mut opt = AdamState::new(cfg.adam.clone(), &f_t);
            let uniform = vec![1.0 / cfg.batch_size as f64; cfg.batch_size];
            for step in 1..=cfg.total_steps {
                let rows = src_stream.next_batch(&mut rng);
                let batch_labels: Vec<usize> = rows.iter().map(|&r| labels[r]).collect();
                let loss = classifier_step(&mut f_t, &mut opt, &src_x.select(Axis(0), &rows), &batch_labels)?;
                tally.add(&view.source.domain_tags, &rows, &uniform);
                if is_eval_step(step, &cfg) {
                    records.push(MetricsRecord {
                        step,
                        disc_t: 0.0,
                        disc_s: 0.0,
                        cgan_st: 0.0,
                        cgan_ts: 0.0,
                        cyc: 0.0,
                        uni_t: 0.0,
                        uni_s: 0.0,
                        task: loss,
                        total: cfg.loss_weights.task * loss,
                        target_accuracy: score(&f_t)?,
                        source_weights: tally.take(),
                        wall_clock_seconds: clock(),
                    });
                }
            }
            TrainedModel::SourceOnly { f_t, optimizer: opt }
        }
        Some((mode, _)) => {
            let generator = MlpSpec::generator(view.dim()).with_residual(cfg.residual_generators);
            let mut model = AdaptationModel::with_generator(generator, view.num_classes, mode, model_seed)?;
            let mut opts = Optimizers::new(&model, &cfg.adam);
            for step in 1..=cfg.total_steps {
                let s_rows = src_stream.next_batch(&mut rng);
                let t_rows = tgt_stream.next_batch(&mut rng);
                let batch_labels: Vec<usize> = s_rows.iter().map(|&r| labels[r]).collect();
                let rec = train_step(
                    &mut model,
                    &mut opts,
                    &src_x.select(Axis(0), &s_rows),
                    &batch_labels,
                    &tgt_x.select(Axis(0), &t_rows),
                    &cfg,
                )?;
                tally.add(&view.source.domain_tags, &s_rows, &rec.source_weights);
                if is_eval_step(step, &cfg) {
                    let b = rec.breakdown;
                    records.push(MetricsRecord {
                        step,
                        disc_t: rec.disc_t,
                        disc_s: rec.disc_s,
                        cgan_st: b.cgan_st,
                        cgan_ts: b.cgan_ts,
                        cyc: b.cyc,
                        uni_t: b.uni_t,
                        uni_s: b.uni_s,
                        task: b.task,
                        total: b.total,
                        target_accuracy: score(&model.f_t)?,
                        source_weights: tally.take(),
                        wall_clock_seconds: clock(),
                    });
                }
            }
            TrainedModel::Adapted {
                model,
                optimizers: opts,
            }
        }
    };

    let last = records.last().expect("total_steps > 0 yields a final record").clone();
    let summary = Summary {
        arm: config.arm,
        target: config.target.clone(),
        steps: cfg.total_steps,
        final_accuracy: last.target_accuracy,
        final_disc_t: last.disc_t,
        final_disc_s: last.disc_s,
        final_losses: LossBreakdown {
            cgan_st: last.cgan_st,
            cgan_ts: last.cgan_ts,
            cyc: last.cyc,
            uni_t: last.uni_t,
            uni_s: last.uni_s,
            task: last.task,
            total: last.total,
            weights: if config.arm.adaptation().is_some() {
                cfg.loss_weights.into()
            } else {
                crate::ccgan::LossWeights {
                    cgan: 0.0,
                    cyc: 0.0,
                    uni: 0.0,
                    task: cfg.loss_weights.task,
                }
                .into()
            },
        },
        source_weights: last.source_weights,
    };
    Ok(ExperimentOutcome {
        records,
        summary,
        model,
    })
}

/// Accuracy of a saved classifier on the held-out target labels.
pub fn evaluate_checkpoint(ck: &Checkpoint, split: &DomainSplit) -> Result<f64> {
    let f_t = &ck
        .get("f_t")
        .ok_or_else(|| Error::Data("checkpoint has no f_t network".into()))?
        .params;
    let preds = predict_target(f_t, &split.training.target.representations)?;
    split.target_labels.accuracy(&preds.classes)
}
