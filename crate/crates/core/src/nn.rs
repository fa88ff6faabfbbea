//! Dense multilayer perceptrons and the Adam optimizer.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::autodiff::{softmax_rows, Matrix, Tape, UnaryKind, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HiddenActivation {
    Relu,
    Tanh,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputActivation {
    Linear,
    Sigmoid,
    Softmax,
    Tanh,
}

/// Layer widths plus activations. `layer_dims = [in, h1, ..., out]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_dims: Vec<usize>,
    pub hidden_activation: HiddenActivation,
    pub output_activation: OutputActivation,
    /// Adds the input to the output (`x + mlp(x)`); needs equal in/out
    /// widths. The last layer then starts at zero so the net starts as the
    /// identity.
    #[serde(default)]
    pub residual: bool,
}

impl MlpSpec {
    pub fn new(
        layer_dims: Vec<usize>,
        hidden_activation: HiddenActivation,
        output_activation: OutputActivation,
    ) -> Result<Self> {
        let spec = Self {
            layer_dims,
            hidden_activation,
            output_activation,
            residual: false,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 2 {
            return Err(Error::Spec("an MLP needs at least two layer dims".into()));
        }
        if self.layer_dims.contains(&0) {
            return Err(Error::Spec(format!(
                "layer dims must be positive: {:?}",
                self.layer_dims
            )));
        }
        if self.residual && self.input_dim() != self.output_dim() {
            return Err(Error::Spec(format!(
                "a residual MLP needs equal input and output widths: {:?}",
                self.layer_dims
            )));
        }
        Ok(())
    }

    /// Four d→d layers, relu hiddens, linear output.
    pub fn generator(d: usize) -> Self {
        Self {
            layer_dims: vec![d; 5],
            hidden_activation: HiddenActivation::Relu,
            output_activation: OutputActivation::Linear,
            residual: false,
        }
    }

    pub fn with_residual(mut self, residual: bool) -> Self {
        self.residual = residual;
        self
    }

    /// d→256→128→64→1 with a sigmoid output. Also used for selection
    /// networks.
    pub fn discriminator(d: usize) -> Self {
        Self {
            layer_dims: vec![d, 256, 128, 64, 1],
            hidden_activation: HiddenActivation::Relu,
            output_activation: OutputActivation::Sigmoid,
            residual: false,
        }
    }

    /// d→256→128→64→C with a softmax output.
    pub fn classifier(d: usize, num_classes: usize) -> Self {
        Self {
            layer_dims: vec![d, 256, 128, 64, num_classes],
            hidden_activation: HiddenActivation::Relu,
            output_activation: OutputActivation::Softmax,
            residual: false,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }
}

/// One dense layer: `x · weight + bias`, weight is `in × out`, bias `1 × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl Layer {
    fn zeros_like(&self) -> Self {
        Self {
            weight: Array2::zeros(self.weight.dim()),
            bias: Array2::zeros(self.bias.dim()),
        }
    }

    fn is_finite(&self) -> bool {
        self.weight.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub spec: MlpSpec,
    pub layers: Vec<Layer>,
}

/// Gradients laid out exactly like [`MlpParams::layers`].
pub type MlpGrads = Vec<Layer>;

fn apply_hidden(tape: &mut Tape, x: Var, act: HiddenActivation) -> Result<Var> {
    match act {
        HiddenActivation::Relu => tape.relu(x),
        HiddenActivation::Tanh => tape.tanh(x),
    }
}

impl MlpParams {
    /// Glorot-uniform weights, zero biases, deterministic in `seed`.
    pub fn init(spec: &MlpSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers: Vec<Layer> = spec
            .layer_dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
                Layer {
                    weight: Array2::from_shape_simple_fn((fan_in, fan_out), || {
                        dist.sample(&mut rng)
                    }),
                    bias: Array2::zeros((1, fan_out)),
                }
            })
            .collect();
        if spec.residual {
            let last = layers.last_mut().expect("validated");
            last.weight.fill(0.0);
        }
        Ok(Self {
            spec: spec.clone(),
            layers,
        })
    }

    /// Builds parameters from explicit layers, checking them against `spec`.
    pub fn from_layers(spec: MlpSpec, layers: Vec<Layer>) -> Result<Self> {
        spec.validate()?;
        if layers.len() != spec.num_layers() {
            return Err(Error::Spec(format!(
                "expected {} layers, got {}",
                spec.num_layers(),
                layers.len()
            )));
        }
        for (i, (l, w)) in layers.iter().zip(spec.layer_dims.windows(2)).enumerate() {
            if l.weight.dim() != (w[0], w[1]) || l.bias.dim() != (1, w[1]) {
                return Err(Error::Spec(format!("layer {i} does not match {:?}", w)));
            }
            if !l.is_finite() {
                return Err(Error::Numeric(format!("layer {i} has non-finite entries")));
            }
        }
        Ok(Self { spec, layers })
    }

    pub fn num_parameters(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    pub fn zero_grads(&self) -> MlpGrads {
        self.layers.iter().map(Layer::zeros_like).collect()
    }

    /// Registers the parameters on `tape`. With `trainable = false` they
    /// enter as constants and receive no gradient.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Result<BoundMlp> {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                Ok((
                    tape.leaf(l.weight.clone(), trainable)?,
                    tape.leaf(l.bias.clone(), trainable)?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BoundMlp {
            spec: self.spec.clone(),
            layers,
        })
    }

    /// Plain forward pass without a tape, returning pre-output-activation
    /// values.
    pub fn logits_values(&self, x: &Matrix) -> Result<Matrix> {
        if x.ncols() != self.spec.input_dim() {
            return Err(Error::shape(
                "mlp input",
                x.dim(),
                (x.nrows(), self.spec.input_dim()),
            ));
        }
        let last = self.layers.len() - 1;
        let mut h = x.clone();
        for (i, l) in self.layers.iter().enumerate() {
            h = h.dot(&l.weight) + &l.bias;
            if i < last {
                match self.spec.hidden_activation {
                    HiddenActivation::Relu => h.mapv_inplace(|v| v.max(0.0)),
                    HiddenActivation::Tanh => h.mapv_inplace(f64::tanh),
                }
            }
        }
        if self.spec.residual {
            h += x;
        }
        Ok(h)
    }

    /// Plain forward pass including the output activation.
    pub fn forward_values(&self, x: &Matrix) -> Result<Matrix> {
        let z = self.logits_values(x)?;
        Ok(match self.spec.output_activation {
            OutputActivation::Linear => z,
            OutputActivation::Sigmoid => {
                z.mapv(|v| if v >= 0.0 { 1.0 / (1.0 + (-v).exp()) } else { v.exp() / (1.0 + v.exp()) })
            }
            OutputActivation::Softmax => softmax_rows(&z),
            OutputActivation::Tanh => z.mapv(f64::tanh),
        })
    }
}

/// Parameters of one network as they sit on a particular tape.
#[derive(Clone, Debug)]
pub struct BoundMlp {
    pub spec: MlpSpec,
    pub layers: Vec<(Var, Var)>,
}

impl BoundMlp {
    /// Forward pass up to (not including) the output activation.
    pub fn logits(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let (_, cols) = tape.shape(x);
        if cols != self.spec.input_dim() {
            return Err(Error::shape(
                "mlp input",
                tape.shape(x),
                (tape.shape(x).0, self.spec.input_dim()),
            ));
        }
        let last = self.layers.len() - 1;
        let mut h = x;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let z = tape.matmul(h, w)?;
            h = tape.add(z, b)?;
            if i < last {
                h = apply_hidden(tape, h, self.spec.hidden_activation)?;
            }
        }
        if self.spec.residual {
            h = tape.add(h, x)?;
        }
        Ok(h)
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let z = self.logits(tape, x)?;
        match self.spec.output_activation {
            OutputActivation::Linear => Ok(z),
            OutputActivation::Sigmoid => tape.unary(z, UnaryKind::Sigmoid),
            OutputActivation::Softmax => tape.row_softmax(z),
            OutputActivation::Tanh => tape.unary(z, UnaryKind::Tanh),
        }
    }

    /// Gradients after `backward`; layers that received none read as zero.
    pub fn grads(&self, tape: &Tape) -> MlpGrads {
        let get = |v: Var| {
            tape.grad(v)
                .cloned()
                .unwrap_or_else(|| Array2::zeros(tape.shape(v)))
        };
        self.layers
            .iter()
            .map(|&(w, b)| Layer {
                weight: get(w),
                bias: get(b),
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub base_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub decay_factor: f64,
    pub decay_every: u64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            base_lr: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
            decay_factor: 0.5,
            decay_every: 100,
        }
    }
}

impl AdamConfig {
    /// Settings for the reconstruction pre-training stage.
    pub fn encoder_pretraining() -> Self {
        Self {
            base_lr: 1e-5,
            decay_every: 200,
            ..Self::default()
        }
    }

    /// Step-decayed learning rate after `t` completed updates.
    pub fn lr_at(&self, t: u64) -> f64 {
        let k = (t / self.decay_every) as i32;
        self.base_lr * self.decay_factor.powi(k)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.base_lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.weight_decay >= 0.0
            && self.decay_factor > 0.0
            && self.decay_factor <= 1.0
            && self.decay_every > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid Adam settings: {self:?}")))
        }
    }
}

/// Per-network Adam moments and step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    pub m: Vec<Layer>,
    pub v: Vec<Layer>,
}

#[allow(clippy::too_many_arguments)]
fn adam_update(
    param: &mut Matrix,
    grad: &Matrix,
    m: &mut Matrix,
    v: &mut Matrix,
    cfg: &AdamConfig,
    lr: f64,
    bias1: f64,
    bias2: f64,
) {
    ndarray::Zip::from(param)
        .and(grad)
        .and(m)
        .and(v)
        .for_each(|p, &g, m, v| {
            *p -= lr * cfg.weight_decay * *p;
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
        });
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &MlpParams) -> Self {
        Self {
            config,
            t: 0,
            m: params.zero_grads(),
            v: params.zero_grads(),
        }
    }

    pub fn current_lr(&self) -> f64 {
        self.config.lr_at(self.t)
    }

    /// Decoupled weight decay followed by a bias-corrected Adam update.
    /// Non-finite gradients leave both parameters and state untouched.
    pub fn step(&mut self, params: &mut MlpParams, grads: &[Layer]) -> Result<()> {
        check_grads(params, grads)?;
        let lr = self.config.lr_at(self.t);
        self.t += 1;
        let bias1 = 1.0 - self.config.beta1.powi(self.t as i32);
        let bias2 = 1.0 - self.config.beta2.powi(self.t as i32);
        for (((p, g), m), v) in params
            .layers
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            adam_update(&mut p.weight, &g.weight, &mut m.weight, &mut v.weight, &self.config, lr, bias1, bias2);
            adam_update(&mut p.bias, &g.bias, &mut m.bias, &mut v.bias, &self.config, lr, bias1, bias2);
        }
        Ok(())
    }
}

/// Shape and finiteness check used before any parameter is mutated.
pub fn check_grads(params: &MlpParams, grads: &[Layer]) -> Result<()> {
    if grads.len() != params.layers.len() {
        return Err(Error::Dimension(format!(
            "{} gradient layers for {} parameter layers",
            grads.len(),
            params.layers.len()
        )));
    }
    for (p, g) in params.layers.iter().zip(grads) {
        if p.weight.dim() != g.weight.dim() || p.bias.dim() != g.bias.dim() {
            return Err(Error::shape("adam step", p.weight.dim(), g.weight.dim()));
        }
        if !g.is_finite() {
            return Err(Error::Numeric("non-finite gradient".into()));
        }
    }
    Ok(())
}
