//! Curriculum cycle-consistent adversarial adaptation.
//!
//! A source-to-target generator `g_st` maps source representations into an
//! intermediate domain that the target discriminator `d_t` cannot tell from
//! real target rows; a reverse generator `g_ts` with its discriminator
//! `d_s` closes the cycle. Within each batch, source samples are weighted
//! either by a selection network (`h_t`, `h_s`) or directly by the
//! discriminator's target probability. The classifier `f_t` is trained on
//! generated rows with source labels and applied to raw target rows.

mod curriculum;
mod losses;
mod train;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState, MlpParams, MlpSpec};

pub use curriculum::{model_based_weights, model_free_weights, BatchWeights};
pub use losses::{
    curriculum_gan_losses, curriculum_weights, cycle_loss, discriminator_objective, gan_losses,
    generator_objective, task_loss, total_objective, uniform_kl_loss, FrozenWeights, GanLosses,
    LossBreakdown, LossWeightsRecord, NetworkGrads,
};
pub use train::{
    classifier_step, discriminator_phase, generator_phase, predict_target, train_step, Predictions,
    StepRecord,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurriculumMode {
    /// Uniform weights: plain CycleGAN.
    None,
    ModelBased,
    ModelFree,
}

impl fmt::Display for CurriculumMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CurriculumMode::None => "none",
            CurriculumMode::ModelBased => "model_based",
            CurriculumMode::ModelFree => "model_free",
        })
    }
}

impl FromStr for CurriculumMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "model_based" => Ok(Self::ModelBased),
            "model_free" => Ok(Self::ModelFree),
            _ => Err(Error::Config(format!(
                "unknown curriculum mode {s:?} (none, model_based, model_free)"
            ))),
        }
    }
}

/// Coefficients of the four loss groups in the generator objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub cgan: f64,
    pub cyc: f64,
    pub uni: f64,
    pub task: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            cgan: 0.1,
            cyc: 1.0,
            uni: 1.0,
            task: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.cgan, self.cyc, self.uni, self.task];
        if all.iter().all(|v| *v >= 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Config(format!("loss weights must be nonnegative: {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub total_steps: usize,
    pub disc_steps_per_gen_step: usize,
    pub curriculum: CurriculumMode,
    pub cycle_enabled: bool,
    pub seed: u64,
    pub eval_every: usize,
    pub loss_weights: LossWeights,
    pub adam: AdamConfig,
    /// Generators compute `z + mlp(z)` and start as the identity.
    #[serde(default)]
    pub residual_generators: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            total_steps: 2000,
            disc_steps_per_gen_step: 1,
            curriculum: CurriculumMode::ModelFree,
            cycle_enabled: true,
            seed: 0,
            eval_every: 100,
            loss_weights: LossWeights::default(),
            adam: AdamConfig::default(),
            residual_generators: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.disc_steps_per_gen_step == 0 {
            return Err(Error::Config("disc_steps_per_gen_step must be positive".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be positive".into()));
        }
        self.loss_weights.validate()?;
        self.adam.validate()
    }

    /// The reverse path (`g_ts`, `d_s`, `h_s`) only trains when the cycle
    /// loss is on.
    pub fn reverse_path_active(&self) -> bool {
        self.cycle_enabled
    }
}

pub const NETWORK_NAMES: [&str; 7] = ["g_st", "g_ts", "d_s", "d_t", "f_t", "h_s", "h_t"];

/// All trainable networks of one adaptation run.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptationModel {
    pub g_st: MlpParams,
    pub g_ts: MlpParams,
    pub d_s: MlpParams,
    pub d_t: MlpParams,
    pub f_t: MlpParams,
    pub h_s: Option<MlpParams>,
    pub h_t: Option<MlpParams>,
}

impl AdaptationModel {
    /// Fresh networks for representation dimension `dim`. Selection
    /// networks exist only in model-based mode.
    pub fn new(dim: usize, num_classes: usize, mode: CurriculumMode, seed: u64) -> Result<Self> {
        Self::with_generator(MlpSpec::generator(dim), num_classes, mode, seed)
    }

    /// Like [`AdaptationModel::new`] with an explicit generator shape.
    pub fn with_generator(
        generator: MlpSpec,
        num_classes: usize,
        mode: CurriculumMode,
        seed: u64,
    ) -> Result<Self> {
        let dim = generator.input_dim();
        if generator.output_dim() != dim {
            return Err(Error::Spec("generators must preserve dimension".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut next = || rng.random::<u64>();
        let g_st = MlpParams::init(&generator, next())?;
        let g_ts = MlpParams::init(&generator, next())?;
        let d_s = MlpParams::init(&MlpSpec::discriminator(dim), next())?;
        let d_t = MlpParams::init(&MlpSpec::discriminator(dim), next())?;
        let f_t = MlpParams::init(&MlpSpec::classifier(dim, num_classes), next())?;
        let (hs_seed, ht_seed) = (next(), next());
        let (h_s, h_t) = if mode == CurriculumMode::ModelBased {
            (
                Some(MlpParams::init(&MlpSpec::discriminator(dim), hs_seed)?),
                Some(MlpParams::init(&MlpSpec::discriminator(dim), ht_seed)?),
            )
        } else {
            (None, None)
        };
        Ok(Self {
            g_st,
            g_ts,
            d_s,
            d_t,
            f_t,
            h_s,
            h_t,
        })
    }

    pub fn dim(&self) -> usize {
        self.g_st.spec.input_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.f_t.spec.output_dim()
    }

    /// Config error unless the selection networks match `mode`.
    pub fn check_mode(&self, mode: CurriculumMode) -> Result<()> {
        if mode == CurriculumMode::ModelBased && (self.h_s.is_none() || self.h_t.is_none()) {
            return Err(Error::Config(
                "model_based curriculum requires selection networks h_s and h_t".into(),
            ));
        }
        Ok(())
    }

    pub fn network(&self, name: &str) -> Option<&MlpParams> {
        match name {
            "g_st" => Some(&self.g_st),
            "g_ts" => Some(&self.g_ts),
            "d_s" => Some(&self.d_s),
            "d_t" => Some(&self.d_t),
            "f_t" => Some(&self.f_t),
            "h_s" => self.h_s.as_ref(),
            "h_t" => self.h_t.as_ref(),
            _ => None,
        }
    }

    pub fn network_mut(&mut self, name: &str) -> Option<&mut MlpParams> {
        match name {
            "g_st" => Some(&mut self.g_st),
            "g_ts" => Some(&mut self.g_ts),
            "d_s" => Some(&mut self.d_s),
            "d_t" => Some(&mut self.d_t),
            "f_t" => Some(&mut self.f_t),
            "h_s" => self.h_s.as_mut(),
            "h_t" => self.h_t.as_mut(),
            _ => None,
        }
    }

    pub fn to_checkpoint(&self, opts: Option<&Optimizers>) -> Checkpoint {
        let mut ck = Checkpoint::default();
        for name in NETWORK_NAMES {
            if let Some(p) = self.network(name) {
                ck.push(name, p, opts.and_then(|o| o.get(name)));
            }
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let take = |name: &str| {
            ck.get(name)
                .map(|e| e.params.clone())
                .ok_or_else(|| Error::Data(format!("checkpoint lacks network {name:?}")))
        };
        let model = Self {
            g_st: take("g_st")?,
            g_ts: take("g_ts")?,
            d_s: take("d_s")?,
            d_t: take("d_t")?,
            f_t: take("f_t")?,
            h_s: ck.get("h_s").map(|e| e.params.clone()),
            h_t: ck.get("h_t").map(|e| e.params.clone()),
        };
        let d = model.dim();
        for name in NETWORK_NAMES {
            if let Some(p) = model.network(name) {
                if p.spec.input_dim() != d {
                    return Err(Error::Dimension(format!(
                        "network {name} expects input {} but g_st expects {d}",
                        p.spec.input_dim()
                    )));
                }
            }
        }
        Ok(model)
    }
}

/// One Adam state per network; each advances its own step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizers {
    pub g_st: AdamState,
    pub g_ts: AdamState,
    pub d_s: AdamState,
    pub d_t: AdamState,
    pub f_t: AdamState,
    pub h_s: Option<AdamState>,
    pub h_t: Option<AdamState>,
}

impl Optimizers {
    pub fn new(model: &AdaptationModel, config: &AdamConfig) -> Self {
        let st = |p: &MlpParams| AdamState::new(config.clone(), p);
        Self {
            g_st: st(&model.g_st),
            g_ts: st(&model.g_ts),
            d_s: st(&model.d_s),
            d_t: st(&model.d_t),
            f_t: st(&model.f_t),
            h_s: model.h_s.as_ref().map(st),
            h_t: model.h_t.as_ref().map(st),
        }
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut AdamState> {
        match name {
            "g_st" => Some(&mut self.g_st),
            "g_ts" => Some(&mut self.g_ts),
            "d_s" => Some(&mut self.d_s),
            "d_t" => Some(&mut self.d_t),
            "f_t" => Some(&mut self.f_t),
            "h_s" => self.h_s.as_mut(),
            "h_t" => self.h_t.as_mut(),
            _ => None,
        }
    }

    pub fn get(&self, name: &str) -> Option<&AdamState> {
        match name {
            "g_st" => Some(&self.g_st),
            "g_ts" => Some(&self.g_ts),
            "d_s" => Some(&self.d_s),
            "d_t" => Some(&self.d_t),
            "f_t" => Some(&self.f_t),
            "h_s" => self.h_s.as_ref(),
            "h_t" => self.h_t.as_ref(),
            _ => None,
        }
    }
}
