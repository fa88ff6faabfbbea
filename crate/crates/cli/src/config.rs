//! Flat `key=value` run configuration.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use ccgan_core::ccgan::TrainConfig;
use ccgan_core::eval::{Arm, ExperimentConfig, TaskSource};

/// A configuration problem; maps to exit status 2.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

/// Every key accepted in a config file, in dump order.
pub const KEYS: [&str; 22] = [
    "data",
    "target",
    "arm",
    "output_dir",
    "record_wall_clock",
    "seed",
    "batch_size",
    "total_steps",
    "disc_steps_per_gen_step",
    "eval_every",
    "residual_generators",
    "lambda_cgan",
    "lambda_cyc",
    "lambda_uni",
    "lambda_task",
    "lr",
    "beta1",
    "beta2",
    "eps",
    "weight_decay",
    "lr_decay_factor",
    "lr_decay_every",
];

/// Settings for one `train` invocation. The arm decides the curriculum
/// mode and whether the cycle path is active.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub target: Option<String>,
    pub arm: Arm,
    pub output_dir: Option<PathBuf>,
    pub record_wall_clock: bool,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            target: None,
            arm: Arm::CcganModelFree,
            output_dir: None,
            record_wall_clock: false,
            train: TrainConfig::default(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| bad(format!("{key}: cannot parse {v:?}")))
}

fn positive(key: &str, v: &str) -> Result<usize, ConfigError> {
    match parse::<usize>(key, v)? {
        0 => Err(bad(format!("{key} must be at least 1"))),
        n => Ok(n),
    }
}

fn real(key: &str, v: &str, ok: impl Fn(f64) -> bool, range: &str) -> Result<f64, ConfigError> {
    let x: f64 = parse(key, v)?;
    if x.is_finite() && ok(x) {
        Ok(x)
    } else {
        Err(bad(format!("{key} must be {range}, got {v}")))
    }
}

fn boolean(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(bad(format!("{key}: expected true or false, got {v:?}"))),
    }
}

impl RunConfig {
    /// Sets one key, range-checking the value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let t = &mut self.train;
        let nonneg = |x: f64| x >= 0.0;
        match key {
            "data" => self.data = Some(PathBuf::from(value)),
            "target" if value.is_empty() => return Err(bad("target must not be empty")),
            "target" => self.target = Some(value.to_string()),
            "arm" => self.arm = value.parse().map_err(|e: ccgan_core::Error| bad(e.to_string()))?,
            "output_dir" => self.output_dir = Some(PathBuf::from(value)),
            "record_wall_clock" => self.record_wall_clock = boolean(key, value)?,
            "seed" => t.seed = parse(key, value)?,
            "batch_size" => t.batch_size = positive(key, value)?,
            "total_steps" => t.total_steps = positive(key, value)?,
            "disc_steps_per_gen_step" => t.disc_steps_per_gen_step = positive(key, value)?,
            "eval_every" => t.eval_every = positive(key, value)?,
            "residual_generators" => t.residual_generators = boolean(key, value)?,
            "lambda_cgan" => t.loss_weights.cgan = real(key, value, nonneg, "nonnegative")?,
            "lambda_cyc" => t.loss_weights.cyc = real(key, value, nonneg, "nonnegative")?,
            "lambda_uni" => t.loss_weights.uni = real(key, value, nonneg, "nonnegative")?,
            "lambda_task" => t.loss_weights.task = real(key, value, nonneg, "nonnegative")?,
            "lr" => t.adam.base_lr = real(key, value, |x| x > 0.0, "positive")?,
            "beta1" => t.adam.beta1 = real(key, value, |x| (0.0..1.0).contains(&x), "in [0, 1)")?,
            "beta2" => t.adam.beta2 = real(key, value, |x| (0.0..1.0).contains(&x), "in [0, 1)")?,
            "eps" => t.adam.eps = real(key, value, |x| x > 0.0, "positive")?,
            "weight_decay" => t.adam.weight_decay = real(key, value, nonneg, "nonnegative")?,
            "lr_decay_factor" => {
                t.adam.decay_factor = real(key, value, |x| x > 0.0 && x <= 1.0, "in (0, 1]")?
            }
            "lr_decay_every" => t.adam.decay_every = positive(key, value)? as u64,
            _ => return Err(bad(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key=value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(bad(format!("{origin}:{}: expected key=value", i + 1)));
            };
            self.set(k.trim(), v.trim())
                .map_err(|e| bad(format!("{origin}:{}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|e| bad(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Every key with its effective value; feeding this back reproduces
    /// the configuration exactly.
    pub fn dump(&self) -> String {
        let t = &self.train;
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let mut out = String::from("# effective configuration\n");
        let mut line = |k: &str, v: Option<String>| match v {
            Some(v) => out.push_str(&format!("{k}={v}\n")),
            None => out.push_str(&format!("# {k} unset\n")),
        };
        line("data", path(&self.data));
        line("target", self.target.clone());
        line("arm", Some(self.arm.to_string()));
        line("output_dir", path(&self.output_dir));
        line("record_wall_clock", Some(self.record_wall_clock.to_string()));
        line("seed", Some(t.seed.to_string()));
        line("batch_size", Some(t.batch_size.to_string()));
        line("total_steps", Some(t.total_steps.to_string()));
        line("disc_steps_per_gen_step", Some(t.disc_steps_per_gen_step.to_string()));
        line("eval_every", Some(t.eval_every.to_string()));
        line("residual_generators", Some(t.residual_generators.to_string()));
        line("lambda_cgan", Some(t.loss_weights.cgan.to_string()));
        line("lambda_cyc", Some(t.loss_weights.cyc.to_string()));
        line("lambda_uni", Some(t.loss_weights.uni.to_string()));
        line("lambda_task", Some(t.loss_weights.task.to_string()));
        line("lr", Some(t.adam.base_lr.to_string()));
        line("beta1", Some(t.adam.beta1.to_string()));
        line("beta2", Some(t.adam.beta2.to_string()));
        line("eps", Some(t.adam.eps.to_string()));
        line("weight_decay", Some(t.adam.weight_decay.to_string()));
        line("lr_decay_factor", Some(t.adam.decay_factor.to_string()));
        line("lr_decay_every", Some(t.adam.decay_every.to_string()));
        out
    }

    /// The experiment to run; `data` and `target` must be set.
    pub fn experiment(&self) -> Result<ExperimentConfig, ConfigError> {
        let target = self
            .target
            .clone()
            .ok_or_else(|| bad("missing required --target (or `target=` in the config file)"))?;
        let data = self
            .data
            .clone()
            .ok_or_else(|| bad("missing required --data (or `data=` in the config file)"))?;
        Ok(ExperimentConfig {
            task: TaskSource::Embeddings(data),
            target,
            arm: self.arm,
            train: self.train.clone(),
            output_dir: self.output_dir.clone(),
            record_wall_clock: self.record_wall_clock,
        })
    }
}
