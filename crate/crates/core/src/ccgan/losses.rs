//! Adversarial, cycle, uniformity, and task losses on a [`Tape`].
//!
//! Discriminators output the probability that a row is *real* for their
//! side (target for `d_t`, source for `d_s`). They minimize
//! `-mean log D(real) - mean log(1 - D(fake))`; generators minimize the
//! non-saturating `-mean log D(fake)`. Curriculum variants replace the
//! fake-side means by weighted sums with weights that sum to one.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::curriculum::{model_based_weights, model_free_weights, BatchWeights};
use super::{AdaptationModel, CurriculumMode, LossWeights};
use crate::autodiff::{Matrix, Tape, Var};
use crate::error::{Error, Result};
use crate::nn::{BoundMlp, MlpGrads};

#[derive(Clone, Copy, Debug)]
pub struct GanLosses {
    pub disc: Var,
    pub gen: Var,
}

fn require_rows(tape: &Tape, x: Var, what: &str) -> Result<usize> {
    let n = tape.shape(x).0;
    if n == 0 {
        return Err(Error::Dimension(format!("{what}: empty batch")));
    }
    Ok(n)
}

/// `log D(x)` per row, `n x 1`.
fn log_prob(tape: &mut Tape, d: &BoundMlp, x: Var) -> Result<Var> {
    let p = d.forward(tape, x)?;
    tape.log(p)
}

/// `log(1 - D(x))` per row, `n x 1`.
fn log_one_minus_prob(tape: &mut Tape, d: &BoundMlp, x: Var) -> Result<Var> {
    let p = d.forward(tape, x)?;
    let neg = tape.neg(p)?;
    let q = tape.offset(neg, 1.0);
    tape.log(q)
}

/// `-Σ w_i v_i` for a per-row column `v`.
fn neg_weighted_sum(tape: &mut Tape, v: Var, w: &BatchWeights) -> Result<Var> {
    if tape.shape(v).0 != w.len() {
        return Err(Error::Contract(format!(
            "{} weights for a batch of {}",
            w.len(),
            tape.shape(v).0
        )));
    }
    let wc = tape.constant(w.column())?;
    let prod = tape.mul(v, wc)?;
    let s = tape.sum(prod)?;
    Ok(tape.scale(s, -1.0))
}

fn neg_mean(tape: &mut Tape, v: Var) -> Result<Var> {
    let m = tape.mean(v)?;
    Ok(tape.scale(m, -1.0))
}

/// Discriminator loss with uniform fake-side averaging.
pub(crate) fn disc_loss(tape: &mut Tape, d: &BoundMlp, real: Var, fake: Var, w: Option<&BatchWeights>) -> Result<Var> {
    require_rows(tape, real, "discriminator loss")?;
    require_rows(tape, fake, "discriminator loss")?;
    let fake = tape.stop_gradient(fake);
    let lr = log_prob(tape, d, real)?;
    let real_term = neg_mean(tape, lr)?;
    let lf = log_one_minus_prob(tape, d, fake)?;
    let fake_term = match w {
        Some(w) => neg_weighted_sum(tape, lf, w)?,
        None => neg_mean(tape, lf)?,
    };
    tape.add(real_term, fake_term)
}

pub(crate) fn gen_loss(tape: &mut Tape, d: &BoundMlp, fake: Var, w: Option<&BatchWeights>) -> Result<Var> {
    require_rows(tape, fake, "generator loss")?;
    let lf = log_prob(tape, d, fake)?;
    match w {
        Some(w) => neg_weighted_sum(tape, lf, w),
        None => neg_mean(tape, lf),
    }
}

/// Plain GAN losses. The fake batch is detached for the discriminator term.
pub fn gan_losses(tape: &mut Tape, d: &BoundMlp, real: Var, fake: Var) -> Result<GanLosses> {
    check_same_width(tape, real, fake)?;
    Ok(GanLosses {
        disc: disc_loss(tape, d, real, fake, None)?,
        gen: gen_loss(tape, d, fake, None)?,
    })
}

/// GAN losses whose fake-side terms are `Σ_i w_i ℓ_i`.
pub fn curriculum_gan_losses(
    tape: &mut Tape,
    d: &BoundMlp,
    real: Var,
    fake: Var,
    w: &BatchWeights,
) -> Result<GanLosses> {
    check_same_width(tape, real, fake)?;
    if tape.shape(fake).0 != w.len() {
        return Err(Error::Contract(format!(
            "{} weights for a batch of {}",
            w.len(),
            tape.shape(fake).0
        )));
    }
    Ok(GanLosses {
        disc: disc_loss(tape, d, real, fake, Some(w))?,
        gen: gen_loss(tape, d, fake, Some(w))?,
    })
}

fn check_same_width(tape: &Tape, a: Var, b: Var) -> Result<()> {
    if tape.shape(a).1 != tape.shape(b).1 {
        return Err(Error::shape("batch widths", tape.shape(a), tape.shape(b)));
    }
    Ok(())
}

/// Mean per-row L1 distance between `x` and its reconstruction.
fn mean_row_l1(tape: &mut Tape, recon: Var, x: Var) -> Result<Var> {
    let n = require_rows(tape, x, "cycle loss")?;
    let diff = tape.sub(recon, x)?;
    let l1 = tape.reduce(diff, crate::autodiff::ReduceKind::L1Norm)?;
    Ok(tape.scale(l1, 1.0 / n as f64))
}

/// Cycle loss given already generated `fake_t = g_st(source)` and
/// `fake_s = g_ts(target)`.
pub(crate) fn cycle_loss_from(
    tape: &mut Tape,
    g_st: &BoundMlp,
    g_ts: &BoundMlp,
    source: Var,
    target: Var,
    fake_t: Var,
    fake_s: Var,
) -> Result<Var> {
    let back_s = g_ts.forward(tape, fake_t)?;
    let fwd = mean_row_l1(tape, back_s, source)?;
    let back_t = g_st.forward(tape, fake_s)?;
    let rev = mean_row_l1(tape, back_t, target)?;
    tape.add(fwd, rev)
}

/// `mean ‖g_ts(g_st(s)) − s‖₁ + mean ‖g_st(g_ts(t)) − t‖₁`.
pub fn cycle_loss(tape: &mut Tape, g_st: &BoundMlp, g_ts: &BoundMlp, source: Var, target: Var) -> Result<Var> {
    require_rows(tape, source, "cycle loss")?;
    require_rows(tape, target, "cycle loss")?;
    let fake_t = g_st.forward(tape, source)?;
    let fake_s = g_ts.forward(tape, target)?;
    cycle_loss_from(tape, g_st, g_ts, source, target, fake_t, fake_s)
}

/// `KL(softmax over the batch of h's scores ‖ uniform)`.
pub fn uniform_kl_loss(tape: &mut Tape, h: &BoundMlp, real: Var) -> Result<Var> {
    let n = require_rows(tape, real, "uniformity loss")?;
    let scores = h.logits(tape, real)?;
    let row = tape.transpose(scores);
    let logp = tape.row_log_softmax(row)?;
    let p = tape.unary(logp, crate::autodiff::UnaryKind::Exp)?;
    let shifted = tape.offset(logp, (n as f64).ln());
    let terms = tape.mul(p, shifted)?;
    tape.sum(terms)
}

/// Mean categorical cross-entropy of `logits` against `labels`.
pub(crate) fn cross_entropy(tape: &mut Tape, logits: Var, labels: &[usize]) -> Result<Var> {
    let (n, c) = tape.shape(logits);
    if n == 0 {
        return Err(Error::Dimension("cross-entropy over an empty batch".into()));
    }
    if labels.len() != n {
        return Err(Error::Dimension(format!("{} labels for {n} rows", labels.len())));
    }
    let mut onehot = Array2::zeros((n, c));
    for (i, &l) in labels.iter().enumerate() {
        if l >= c {
            return Err(Error::Data(format!("label {l} outside 0..{c}")));
        }
        onehot[[i, l]] = 1.0;
    }
    let logp = tape.row_log_softmax(logits)?;
    let mask = tape.constant(onehot)?;
    let picked = tape.mul(logp, mask)?;
    let s = tape.sum(picked)?;
    Ok(tape.scale(s, -1.0 / n as f64))
}

fn labels_present(labels: &[Option<usize>]) -> Result<Vec<usize>> {
    labels
        .iter()
        .enumerate()
        .map(|(i, l)| l.ok_or_else(|| Error::Data(format!("source row {i} has no label"))))
        .collect()
}

/// Cross-entropy of `f_t(g_st(source))`, differentiable in both networks.
pub fn task_loss(
    tape: &mut Tape,
    f_t: &BoundMlp,
    g_st: &BoundMlp,
    source: Var,
    labels: &[Option<usize>],
) -> Result<Var> {
    let labels = labels_present(labels)?;
    let generated = g_st.forward(tape, source)?;
    let logits = f_t.logits(tape, generated)?;
    cross_entropy(tape, logits, &labels)
}

/// Raw loss terms of the generator-side objective and their coefficients.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub cgan_st: f64,
    pub cgan_ts: f64,
    pub cyc: f64,
    pub uni_t: f64,
    pub uni_s: f64,
    pub task: f64,
    pub total: f64,
    pub weights: LossWeightsRecord,
}

/// Plain copy of [`LossWeights`] stored alongside a breakdown.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossWeightsRecord {
    pub cgan: f64,
    pub cyc: f64,
    pub uni: f64,
    pub task: f64,
}

impl From<LossWeights> for LossWeightsRecord {
    fn from(w: LossWeights) -> Self {
        Self {
            cgan: w.cgan,
            cyc: w.cyc,
            uni: w.uni,
            task: w.task,
        }
    }
}

impl LossBreakdown {
    /// `(name, raw value, coefficient, weighted contribution)` per term.
    pub fn terms(&self) -> [(&'static str, f64, f64, f64); 6] {
        let w = self.weights;
        [
            ("cgan_st", self.cgan_st, w.cgan, w.cgan * self.cgan_st),
            ("cgan_ts", self.cgan_ts, w.cgan, w.cgan * self.cgan_ts),
            ("cyc", self.cyc, w.cyc, w.cyc * self.cyc),
            ("uni_t", self.uni_t, w.uni, w.uni * self.uni_t),
            ("uni_s", self.uni_s, w.uni, w.uni * self.uni_s),
            ("task", self.task, w.task, w.task * self.task),
        ]
    }

    pub fn weighted_sum(&self) -> f64 {
        self.terms().iter().map(|t| t.3).sum()
    }
}

/// Networks bound on one tape.
pub(crate) struct BoundModel {
    pub g_st: BoundMlp,
    pub g_ts: BoundMlp,
    pub d_s: BoundMlp,
    pub d_t: BoundMlp,
    pub f_t: BoundMlp,
    pub h_s: Option<BoundMlp>,
    pub h_t: Option<BoundMlp>,
}

/// Weights for the forward (source → target) direction.
pub(crate) fn forward_weights(model: &AdaptationModel, mode: CurriculumMode, generated: &Matrix) -> Result<BatchWeights> {
    match mode {
        CurriculumMode::None => BatchWeights::uniform(generated.nrows()),
        CurriculumMode::ModelFree => model_free_weights(&model.d_t, generated),
        CurriculumMode::ModelBased => {
            let h = model.h_t.as_ref().ok_or_else(|| Error::Config("h_t missing".into()))?;
            model_based_weights(h, generated)
        }
    }
}

/// Weights for the reverse (target → source) direction.
pub(crate) fn reverse_weights(model: &AdaptationModel, mode: CurriculumMode, generated: &Matrix) -> Result<BatchWeights> {
    match mode {
        CurriculumMode::None => BatchWeights::uniform(generated.nrows()),
        CurriculumMode::ModelFree => model_free_weights(&model.d_s, generated),
        CurriculumMode::ModelBased => {
            let h = model.h_s.as_ref().ok_or_else(|| Error::Config("h_s missing".into()))?;
            model_based_weights(h, generated)
        }
    }
}

pub(crate) struct Objective {
    pub root: Var,
    pub breakdown: LossBreakdown,
}

/// Builds the generator-phase objective on `tape`.
///
/// `w_t` weights the generated source batch against `d_t`; `w_s` weights
/// the generated target batch against `d_s` and is only used when the
/// reverse path is active.
#[allow(clippy::too_many_arguments)]
pub(crate) fn build_generator_objective(
    tape: &mut Tape,
    nets: &BoundModel,
    source: Var,
    labels: &[usize],
    target: Var,
    w_t: &BatchWeights,
    w_s: &BatchWeights,
    mode: CurriculumMode,
    lw: LossWeights,
    reverse_active: bool,
) -> Result<Objective> {
    let curriculum = mode != CurriculumMode::None;
    let fake_t = nets.g_st.forward(tape, source)?;
    let cgan_st = gen_loss(tape, &nets.d_t, fake_t, curriculum.then_some(w_t))?;
    let logits = nets.f_t.logits(tape, fake_t)?;
    let task = cross_entropy(tape, logits, labels)?;

    let mut parts: Vec<(Var, f64)> = vec![(cgan_st, lw.cgan), (task, lw.task)];
    let mut cgan_ts = None;
    let mut cyc = None;
    if reverse_active {
        let fake_s = nets.g_ts.forward(tape, target)?;
        let g = gen_loss(tape, &nets.d_s, fake_s, curriculum.then_some(w_s))?;
        let c = cycle_loss_from(tape, &nets.g_st, &nets.g_ts, source, target, fake_t, fake_s)?;
        parts.push((g, lw.cgan));
        parts.push((c, lw.cyc));
        cgan_ts = Some(g);
        cyc = Some(c);
    }
    let mut uni_t = None;
    let mut uni_s = None;
    if mode == CurriculumMode::ModelBased {
        let h_t = nets.h_t.as_ref().ok_or_else(|| Error::Config("h_t missing".into()))?;
        let u = uniform_kl_loss(tape, h_t, target)?;
        parts.push((u, lw.uni));
        uni_t = Some(u);
        if reverse_active {
            let h_s = nets.h_s.as_ref().ok_or_else(|| Error::Config("h_s missing".into()))?;
            let u = uniform_kl_loss(tape, h_s, source)?;
            parts.push((u, lw.uni));
            uni_s = Some(u);
        }
    }

    let mut root = None;
    for (v, coef) in parts {
        let scaled = tape.scale(v, coef);
        root = Some(match root {
            None => scaled,
            Some(acc) => tape.add(acc, scaled)?,
        });
    }
    let root = root.expect("at least two terms");
    let val = |tape: &Tape, v: Option<Var>| v.map_or(0.0, |v| tape.scalar(v));
    let breakdown = LossBreakdown {
        cgan_st: tape.scalar(cgan_st),
        cgan_ts: val(tape, cgan_ts),
        cyc: val(tape, cyc),
        uni_t: val(tape, uni_t),
        uni_s: val(tape, uni_s),
        task: tape.scalar(task),
        total: tape.scalar(root),
        weights: lw.into(),
    };
    Ok(Objective { root, breakdown })
}

impl AdaptationModel {
    pub(crate) fn bind(&self, tape: &mut Tape, generators: bool, discriminators: bool) -> Result<BoundModel> {
        Ok(BoundModel {
            g_st: self.g_st.bind(tape, generators)?,
            g_ts: self.g_ts.bind(tape, generators)?,
            d_s: self.d_s.bind(tape, discriminators)?,
            d_t: self.d_t.bind(tape, discriminators)?,
            f_t: self.f_t.bind(tape, generators)?,
            h_s: self.h_s.as_ref().map(|h| h.bind(tape, generators)).transpose()?,
            h_t: self.h_t.as_ref().map(|h| h.bind(tape, generators)).transpose()?,
        })
    }
}

fn check_inputs(model: &AdaptationModel, source: &Matrix, target: &Matrix) -> Result<()> {
    if source.ncols() != model.dim() || target.ncols() != model.dim() {
        return Err(Error::shape("objective inputs", source.dim(), target.dim()));
    }
    if source.nrows() == 0 || target.nrows() == 0 {
        return Err(Error::Dimension("empty training batch".into()));
    }
    Ok(())
}

/// Curriculum weights for one pair of batches, held fixed while gradients
/// are taken.
#[derive(Clone, Debug, PartialEq)]
pub struct FrozenWeights {
    /// Over `g_st(source)`, judged by `d_t` / `h_t`.
    pub forward: BatchWeights,
    /// Over `g_ts(target)`, judged by `d_s` / `h_s`.
    pub reverse: BatchWeights,
}

/// Computes both weight vectors from the current networks.
pub fn curriculum_weights(
    model: &AdaptationModel,
    source: &Matrix,
    target: &Matrix,
    mode: CurriculumMode,
) -> Result<FrozenWeights> {
    model.check_mode(mode)?;
    check_inputs(model, source, target)?;
    Ok(FrozenWeights {
        forward: forward_weights(model, mode, &model.g_st.forward_values(source)?)?,
        reverse: reverse_weights(model, mode, &model.g_ts.forward_values(target)?)?,
    })
}

/// Gradients per network name, for the networks trained in a phase.
pub type NetworkGrads = BTreeMap<&'static str, MlpGrads>;

/// Generator-side objective and the gradients of every network the
/// generator phase trains: `g_st`, `f_t`, plus `g_ts` when the reverse path
/// is active and the selection networks in model-based mode.
#[allow(clippy::too_many_arguments)]
pub fn generator_objective(
    model: &AdaptationModel,
    source: &Matrix,
    labels: &[usize],
    target: &Matrix,
    weights: &FrozenWeights,
    mode: CurriculumMode,
    lw: LossWeights,
    cycle_enabled: bool,
) -> Result<(LossBreakdown, NetworkGrads)> {
    model.check_mode(mode)?;
    check_inputs(model, source, target)?;
    let mut tape = Tape::new(0);
    let nets = model.bind(&mut tape, true, false)?;
    let src = tape.constant(source.clone())?;
    let tgt = tape.constant(target.clone())?;
    let obj = build_generator_objective(
        &mut tape,
        &nets,
        src,
        labels,
        tgt,
        &weights.forward,
        &weights.reverse,
        mode,
        lw,
        cycle_enabled,
    )?;
    for (name, value, _, _) in obj.breakdown.terms() {
        if !value.is_finite() {
            return Err(Error::Numeric(format!("{name} loss is not finite")));
        }
    }
    if !obj.breakdown.total.is_finite() {
        return Err(Error::Numeric("total loss is not finite".into()));
    }
    tape.backward(obj.root)?;
    let mut grads = NetworkGrads::new();
    grads.insert("g_st", nets.g_st.grads(&tape));
    grads.insert("f_t", nets.f_t.grads(&tape));
    if cycle_enabled {
        grads.insert("g_ts", nets.g_ts.grads(&tape));
    }
    if mode == CurriculumMode::ModelBased {
        if let Some(h) = &nets.h_t {
            grads.insert("h_t", h.grads(&tape));
        }
        if let (true, Some(h)) = (cycle_enabled, &nets.h_s) {
            grads.insert("h_s", h.grads(&tape));
        }
    }
    Ok((obj.breakdown, grads))
}

/// Discriminator losses `(disc_t, disc_s)` and gradients for `d_t` (and
/// `d_s` when the reverse path is active). Generated rows are constants.
pub fn discriminator_objective(
    model: &AdaptationModel,
    source: &Matrix,
    target: &Matrix,
    weights: &FrozenWeights,
    mode: CurriculumMode,
    cycle_enabled: bool,
) -> Result<(f64, f64, NetworkGrads)> {
    model.check_mode(mode)?;
    check_inputs(model, source, target)?;
    let curriculum = mode != CurriculumMode::None;
    let finite = |name: &str, v: f64| {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Numeric(format!("{name} loss is not finite")))
        }
    };
    let mut tape = Tape::new(0);
    let d_t = model.d_t.bind(&mut tape, true)?;
    let src = tape.constant(source.clone())?;
    let tgt = tape.constant(target.clone())?;
    let fake_t = tape.constant(model.g_st.forward_values(source)?)?;
    let loss_t = disc_loss(&mut tape, &d_t, tgt, fake_t, curriculum.then_some(&weights.forward))?;
    let disc_t = finite("disc_t", tape.scalar(loss_t))?;
    let mut root = loss_t;
    let mut disc_s = 0.0;
    let mut d_s = None;
    if cycle_enabled {
        let bound = model.d_s.bind(&mut tape, true)?;
        let fake_s = tape.constant(model.g_ts.forward_values(target)?)?;
        let loss_s = disc_loss(&mut tape, &bound, src, fake_s, curriculum.then_some(&weights.reverse))?;
        disc_s = finite("disc_s", tape.scalar(loss_s))?;
        root = tape.add(root, loss_s)?;
        d_s = Some(bound);
    }
    tape.backward(root)?;
    let mut grads = NetworkGrads::new();
    grads.insert("d_t", d_t.grads(&tape));
    if let Some(b) = d_s {
        grads.insert("d_s", b.grads(&tape));
    }
    Ok((disc_t, disc_s, grads))
}

/// Evaluates the full generator-side objective for one pair of batches,
/// computing curriculum weights from the current networks.
pub fn total_objective(
    model: &AdaptationModel,
    source: &Matrix,
    labels: &[Option<usize>],
    target: &Matrix,
    mode: CurriculumMode,
    lw: LossWeights,
    cycle_enabled: bool,
) -> Result<LossBreakdown> {
    model.check_mode(mode)?;
    lw.validate()?;
    check_inputs(model, source, target)?;
    let labels = labels_present(labels)?;
    let w = curriculum_weights(model, source, target, mode)?;
    let mut tape = Tape::new(0);
    let nets = model.bind(&mut tape, false, false)?;
    let src = tape.constant(source.clone())?;
    let tgt = tape.constant(target.clone())?;
    let obj = build_generator_objective(
        &mut tape, &nets, src, &labels, tgt, &w.forward, &w.reverse, mode, lw, cycle_enabled,
    )?;
    Ok(obj.breakdown)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{HiddenActivation, Layer, MlpParams, MlpSpec, OutputActivation};
    use ndarray::array;

    /// Sigmoid of a constant logit, whatever the input.
    fn constant_disc(d: usize, logit: f64) -> MlpParams {
        let spec = MlpSpec::new(vec![d, 1], HiddenActivation::Relu, OutputActivation::Sigmoid).unwrap();
        MlpParams::from_layers(
            spec,
            vec![Layer {
                weight: Array2::zeros((d, 1)),
                bias: array![[logit]],
            }],
        )
        .unwrap()
    }

    /// Sigmoid of `scale * x[0]`.
    fn probe_disc(d: usize, scale: f64) -> MlpParams {
        let spec = MlpSpec::new(vec![d, 1], HiddenActivation::Relu, OutputActivation::Sigmoid).unwrap();
        let mut w = Array2::zeros((d, 1));
        w[[0, 0]] = scale;
        MlpParams::from_layers(spec, vec![Layer { weight: w, bias: array![[0.0]] }]).unwrap()
    }

    fn affine(d: usize, shift: f64) -> MlpParams {
        let spec = MlpSpec::new(vec![d, d], HiddenActivation::Relu, OutputActivation::Linear).unwrap();
        MlpParams::from_layers(
            spec,
            vec![Layer {
                weight: Array2::eye(d),
                bias: Array2::from_elem((1, d), shift),
            }],
        )
        .unwrap()
    }

    fn zero_map(d: usize) -> MlpParams {
        let spec = MlpSpec::new(vec![d, d], HiddenActivation::Relu, OutputActivation::Linear).unwrap();
        MlpParams::from_layers(
            spec,
            vec![Layer {
                weight: Array2::zeros((d, d)),
                bias: Array2::zeros((1, d)),
            }],
        )
        .unwrap()
    }

    fn batch(rows: usize, cols: usize, seed: f64) -> Matrix {
        Array2::from_shape_fn((rows, cols), |(i, j)| ((i * cols + j) as f64 * 0.37 + seed).sin())
    }

    #[test]
    fn half_discriminator_gives_two_ln_two() {
        let mut tape = Tape::new(0);
        let d = constant_disc(3, 0.0).bind(&mut tape, true).unwrap();
        let real = tape.constant(batch(4, 3, 0.0)).unwrap();
        let fake = tape.constant(batch(5, 3, 1.0)).unwrap();
        let l = gan_losses(&mut tape, &d, real, fake).unwrap();
        assert!((tape.scalar(l.disc) - 2.0 * 2f64.ln()).abs() < 1e-15);
        assert!((tape.scalar(l.gen) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn perfect_discriminator_has_near_zero_loss() {
        let mut tape = Tape::new(0);
        let d = probe_disc(2, 200.0).bind(&mut tape, false).unwrap();
        let real = tape.constant(array![[1.0, 0.0], [2.0, 0.0]]).unwrap();
        let fake = tape.constant(array![[-1.0, 0.0], [-3.0, 0.0]]).unwrap();
        let l = gan_losses(&mut tape, &d, real, fake).unwrap();
        assert!(tape.scalar(l.disc) < 1e-12);
        // the generator side saturates at the clamp
        assert!((tape.scalar(l.gen) + crate::autodiff::LOG_EPS.ln()).abs() < 1e-9);
    }

    #[test]
    fn generator_loss_falls_as_the_discriminator_is_fooled() {
        let mut last = f64::INFINITY;
        for k in -5..=5 {
            let mut tape = Tape::new(0);
            let d = constant_disc(2, k as f64).bind(&mut tape, false).unwrap();
            let fake = tape.constant(batch(3, 2, 0.0)).unwrap();
            let g = gen_loss(&mut tape, &d, fake, None).unwrap();
            assert!(tape.scalar(g) < last);
            last = tape.scalar(g);
        }
    }

    #[test]
    fn empty_batches_are_dimension_errors() {
        let mut tape = Tape::new(0);
        let d = constant_disc(2, 0.0).bind(&mut tape, false).unwrap();
        let real = tape.constant(batch(2, 2, 0.0)).unwrap();
        let empty = tape.constant(Array2::zeros((0, 2))).unwrap();
        assert!(matches!(gan_losses(&mut tape, &d, real, empty), Err(Error::Dimension(_))));
    }

    #[test]
    fn uniform_weights_reduce_to_plain_losses() {
        let mut tape = Tape::new(0);
        let d = MlpParams::init(&MlpSpec::discriminator(3), 4).unwrap().bind(&mut tape, true).unwrap();
        let real = tape.constant(batch(6, 3, 0.0)).unwrap();
        let fake = tape.constant(batch(5, 3, 2.0)).unwrap();
        let plain = gan_losses(&mut tape, &d, real, fake).unwrap();
        let w = BatchWeights::uniform(5).unwrap();
        let cur = curriculum_gan_losses(&mut tape, &d, real, fake, &w).unwrap();
        assert!((tape.scalar(plain.disc) - tape.scalar(cur.disc)).abs() <= 1e-12);
        assert!((tape.scalar(plain.gen) - tape.scalar(cur.gen)).abs() <= 1e-12);
    }

    #[test]
    fn point_mass_weight_selects_one_sample() {
        let fake_rows = batch(4, 3, 1.0);
        let mut tape = Tape::new(0);
        let d = MlpParams::init(&MlpSpec::discriminator(3), 5).unwrap().bind(&mut tape, false).unwrap();
        let real = tape.constant(batch(3, 3, 0.0)).unwrap();
        let fake = tape.constant(fake_rows.clone()).unwrap();
        let w = BatchWeights::from_vec(vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        let cur = curriculum_gan_losses(&mut tape, &d, real, fake, &w).unwrap();
        let single = tape.constant(fake_rows.slice(ndarray::s![2..3, ..]).to_owned()).unwrap();
        let one = gan_losses(&mut tape, &d, real, single).unwrap();
        assert!((tape.scalar(cur.disc) - tape.scalar(one.disc)).abs() < 1e-12);
        assert!((tape.scalar(cur.gen) - tape.scalar(one.gen)).abs() < 1e-12);
    }

    #[test]
    fn weighted_fake_term_hand_arithmetic() {
        let mut tape = Tape::new(0);
        // per-sample losses [1, 2, 3] enter as -log(D) = ℓ, i.e. log D = -ℓ
        let logd = tape.constant(array![[-1.0], [-2.0], [-3.0]]).unwrap();
        let w = BatchWeights::from_vec(vec![0.6, 0.2, 0.2]).unwrap();
        let v = neg_weighted_sum(&mut tape, logd, &w).unwrap();
        assert!((tape.scalar(v) - 1.6).abs() < 1e-12);
    }

    #[test]
    fn weight_length_mismatch_is_a_contract_error() {
        let mut tape = Tape::new(0);
        let d = constant_disc(2, 0.0).bind(&mut tape, false).unwrap();
        let real = tape.constant(batch(2, 2, 0.0)).unwrap();
        let fake = tape.constant(batch(3, 2, 0.0)).unwrap();
        let w = BatchWeights::uniform(2).unwrap();
        assert!(matches!(
            curriculum_gan_losses(&mut tape, &d, real, fake, &w),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn cycle_loss_examples() {
        let d = 3;
        let src = batch(4, d, 0.0);
        let tgt = batch(5, d, 1.0);
        let eval = |g_st: &MlpParams, g_ts: &MlpParams| {
            let mut tape = Tape::new(0);
            let a = g_st.bind(&mut tape, false).unwrap();
            let b = g_ts.bind(&mut tape, false).unwrap();
            let s = tape.constant(src.clone()).unwrap();
            let t = tape.constant(tgt.clone()).unwrap();
            let l = cycle_loss(&mut tape, &a, &b, s, t).unwrap();
            tape.scalar(l)
        };
        assert_eq!(eval(&affine(d, 0.0), &affine(d, 0.0)), 0.0);
        assert!(eval(&affine(d, 0.75), &affine(d, -0.75)) < 1e-15);

        // Zero maps reconstruct nothing: the loss is the mean row L1 norm of
        // each batch, evaluated directly here.
        let unit = |m: &Matrix| {
            let mut m = m.clone();
            for mut r in m.rows_mut() {
                let n = r.iter().map(|v| v * v).sum::<f64>().sqrt();
                r.mapv_inplace(|v| v / n);
            }
            m
        };
        let (us, ut) = (unit(&src), unit(&tgt));
        let direct = |m: &Matrix| {
            m.rows().into_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).sum::<f64>()
                / m.nrows() as f64
        };
        let mut tape = Tape::new(0);
        let z = zero_map(d);
        let a = z.bind(&mut tape, false).unwrap();
        let b = z.bind(&mut tape, false).unwrap();
        let s = tape.constant(us.clone()).unwrap();
        let t = tape.constant(ut.clone()).unwrap();
        let l = cycle_loss(&mut tape, &a, &b, s, t).unwrap();
        assert!((tape.scalar(l) - (direct(&us) + direct(&ut))).abs() < 1e-12);
    }

    #[test]
    fn kl_to_uniform_examples() {
        let d = 2;
        let mut tape = Tape::new(0);
        let h = constant_disc(d, 0.3).bind(&mut tape, false).unwrap();
        let x = tape.constant(batch(7, d, 0.0)).unwrap();
        let kl = uniform_kl_loss(&mut tape, &h, x).unwrap();
        assert!(tape.scalar(kl).abs() < 1e-15);

        // scores differing by ln((1-ε)/ε) put mass ε on one sample
        let eps = 1e-12f64;
        let gap = ((1.0 - eps) / eps).ln();
        let mut tape = Tape::new(0);
        let h = probe_disc(d, 1.0).bind(&mut tape, false).unwrap();
        let x = tape.constant(array![[gap, 0.0], [0.0, 0.0]]).unwrap();
        let kl = uniform_kl_loss(&mut tape, &h, x).unwrap();
        let expected = (1.0 - eps) * (2.0 * (1.0 - eps)).ln() + eps * (2.0 * eps).ln();
        assert!((tape.scalar(kl) - expected).abs() < 1e-9);
        assert!((tape.scalar(kl) - 2f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn task_loss_examples() {
        // f_t maps x[0] to a logit gap; identity generator.
        let spec = MlpSpec::new(vec![2, 2], HiddenActivation::Relu, OutputActivation::Softmax).unwrap();
        let f = MlpParams::from_layers(
            spec,
            vec![Layer {
                weight: array![[-1.0, 1.0], [0.0, 0.0]],
                bias: array![[0.0, 0.0]],
            }],
        )
        .unwrap();
        let g = affine(2, 0.0);
        let run = |x: Matrix, labels: Vec<Option<usize>>| {
            let mut tape = Tape::new(0);
            let fb = f.bind(&mut tape, false).unwrap();
            let gb = g.bind(&mut tape, false).unwrap();
            let xv = tape.constant(x).unwrap();
            task_loss(&mut tape, &fb, &gb, xv, &labels).map(|v| tape.scalar(v))
        };
        let uniform = run(array![[0.0, 5.0], [0.0, -1.0]], vec![Some(0), Some(1)]).unwrap();
        assert!((uniform - 2f64.ln()).abs() < 1e-15);
        let confident = run(array![[400.0, 0.0]], vec![Some(1)]).unwrap();
        assert!(confident.abs() < 1e-15);
        assert!(matches!(
            run(array![[0.0, 0.0]], vec![None]),
            Err(Error::Data(_))
        ));
    }

    fn labels(n: usize) -> Vec<Option<usize>> {
        (0..n).map(|i| Some(i % 2)).collect()
    }

    #[test]
    fn breakdown_sums_to_total_and_respects_zeroed_weights() {
        let d = 4;
        let m = AdaptationModel::new(d, 2, CurriculumMode::ModelBased, 3).unwrap();
        let src = batch(8, d, 0.0);
        let tgt = batch(8, d, 1.0);
        let b = total_objective(&m, &src, &labels(8), &tgt, CurriculumMode::ModelBased, LossWeights::default(), true).unwrap();
        assert!((b.weighted_sum() - b.total).abs() < 1e-9);
        assert!(b.uni_t > 0.0 && b.uni_s > 0.0 && b.cyc > 0.0);

        let only_task = LossWeights {
            cgan: 0.0,
            cyc: 0.0,
            uni: 0.0,
            task: 2.0,
        };
        let b = total_objective(&m, &src, &labels(8), &tgt, CurriculumMode::ModelBased, only_task, true).unwrap();
        assert!((b.total - 2.0 * b.task).abs() < 1e-12);
    }

    #[test]
    fn model_free_objective_has_no_uniformity_terms() {
        let d = 4;
        let m = AdaptationModel::new(d, 2, CurriculumMode::ModelFree, 3).unwrap();
        let b = total_objective(&m, &batch(8, d, 0.0), &labels(8), &batch(8, d, 1.0), CurriculumMode::ModelFree, LossWeights::default(), true).unwrap();
        assert_eq!((b.uni_t, b.uni_s), (0.0, 0.0));
    }

    #[test]
    fn model_based_without_selection_networks_is_a_config_error() {
        let d = 4;
        let m = AdaptationModel::new(d, 2, CurriculumMode::ModelFree, 3).unwrap();
        let r = total_objective(&m, &batch(8, d, 0.0), &labels(8), &batch(8, d, 1.0), CurriculumMode::ModelBased, LossWeights::default(), true);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn none_equals_model_free_when_discriminators_are_constant() {
        let d = 4;
        let mut m = AdaptationModel::new(d, 2, CurriculumMode::ModelFree, 3).unwrap();
        m.d_t = constant_disc(d, 0.4);
        m.d_s = constant_disc(d, -0.2);
        let (src, tgt) = (batch(8, d, 0.0), batch(8, d, 1.0));
        let a = total_objective(&m, &src, &labels(8), &tgt, CurriculumMode::None, LossWeights::default(), true).unwrap();
        let b = total_objective(&m, &src, &labels(8), &tgt, CurriculumMode::ModelFree, LossWeights::default(), true).unwrap();
        for (x, y) in a.terms().iter().zip(b.terms().iter()) {
            assert!((x.1 - y.1).abs() < 1e-12, "{} {} {}", x.0, x.1, y.1);
        }
    }

    #[test]
    fn disabling_the_cycle_zeroes_the_reverse_path() {
        let d = 4;
        let m = AdaptationModel::new(d, 2, CurriculumMode::ModelFree, 3).unwrap();
        let b = total_objective(&m, &batch(8, d, 0.0), &labels(8), &batch(8, d, 1.0), CurriculumMode::ModelFree, LossWeights::default(), false).unwrap();
        assert_eq!((b.cyc, b.cgan_ts), (0.0, 0.0));
    }
}
