//! Alternating updates: discriminators first, then generators, classifier
//! and selection networks.

use serde::{Deserialize, Serialize};

use super::curriculum::BatchWeights;
use super::losses::{
    cross_entropy, curriculum_weights, discriminator_objective, generator_objective, LossBreakdown,
    NetworkGrads,
};
use super::{AdaptationModel, Optimizers, TrainConfig};
use crate::autodiff::{Matrix, Tape};
use crate::error::{Error, Result};
use crate::nn::{check_grads, AdamState, MlpParams};

/// Loss values and weights observed in one training step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub disc_t: f64,
    pub disc_s: f64,
    pub breakdown: LossBreakdown,
    /// Generator-phase weights over the source batch, in batch order.
    pub source_weights: Vec<f64>,
}

fn finite(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numeric(format!("{name} loss is not finite")))
    }
}

/// Checks every gradient first, then applies the updates, so a bad
/// gradient leaves all networks untouched.
fn apply_updates(model: &mut AdaptationModel, opts: &mut Optimizers, grads: &NetworkGrads) -> Result<()> {
    for (name, g) in grads {
        check_grads(model.network(name).expect("known network"), g)?;
    }
    for (name, g) in grads {
        let p = model.network_mut(name).expect("known network");
        let o = opts
            .get_mut(name)
            .ok_or_else(|| Error::Config(format!("no optimizer for {name}")))?;
        o.step(p, g)?;
    }
    Ok(())
}

/// One discriminator update. Generators and selection networks are read
/// but not changed. Returns `(disc_t, disc_s)`; `disc_s` is zero when the
/// reverse path is inactive.
pub fn discriminator_phase(
    model: &mut AdaptationModel,
    opts: &mut Optimizers,
    source: &Matrix,
    target: &Matrix,
    cfg: &TrainConfig,
) -> Result<(f64, f64)> {
    let w = curriculum_weights(model, source, target, cfg.curriculum)?;
    let (disc_t, disc_s, grads) =
        discriminator_objective(model, source, target, &w, cfg.curriculum, cfg.reverse_path_active())?;
    apply_updates(model, opts, &grads)?;
    Ok((disc_t, disc_s))
}

/// One update of generators, classifier and (model-based) selection
/// networks with curriculum weights held constant. Discriminators are read
/// but not changed.
pub fn generator_phase(
    model: &mut AdaptationModel,
    opts: &mut Optimizers,
    source: &Matrix,
    labels: &[usize],
    target: &Matrix,
    cfg: &TrainConfig,
) -> Result<(LossBreakdown, BatchWeights)> {
    let w = curriculum_weights(model, source, target, cfg.curriculum)?;
    let (breakdown, grads) = generator_objective(
        model,
        source,
        labels,
        target,
        &w,
        cfg.curriculum,
        cfg.loss_weights,
        cfg.reverse_path_active(),
    )?;
    apply_updates(model, opts, &grads)?;
    Ok((breakdown, w.forward))
}

/// `disc_steps_per_gen_step` discriminator phases followed by one generator
/// phase on the same pair of batches. On error every network and optimizer
/// is restored to its state before the step.
pub fn train_step(
    model: &mut AdaptationModel,
    opts: &mut Optimizers,
    source: &Matrix,
    labels: &[usize],
    target: &Matrix,
    cfg: &TrainConfig,
) -> Result<StepRecord> {
    // Generator-phase failures happen before any generator is touched, so
    // only the discriminators need restoring.
    let saved = (
        model.d_t.clone(),
        model.d_s.clone(),
        opts.d_t.clone(),
        opts.d_s.clone(),
    );
    let result = (|| {
        let mut disc = (0.0, 0.0);
        for _ in 0..cfg.disc_steps_per_gen_step {
            disc = discriminator_phase(model, opts, source, target, cfg)?;
        }
        let (breakdown, w) = generator_phase(model, opts, source, labels, target, cfg)?;
        Ok(StepRecord {
            disc_t: disc.0,
            disc_s: disc.1,
            breakdown,
            source_weights: w.as_slice().to_vec(),
        })
    })();
    if result.is_err() {
        (model.d_t, model.d_s, opts.d_t, opts.d_s) = saved;
    }
    result
}

/// One cross-entropy update of a classifier on raw rows (the
/// source-only baseline). Returns the loss before the update.
pub fn classifier_step(f_t: &mut MlpParams, opt: &mut AdamState, source: &Matrix, labels: &[usize]) -> Result<f64> {
    let mut tape = Tape::new(0);
    let f = f_t.bind(&mut tape, true)?;
    let x = tape.constant(source.clone())?;
    let logits = f.logits(&mut tape, x)?;
    let loss = cross_entropy(&mut tape, logits, labels)?;
    let value = finite("task", tape.scalar(loss))?;
    tape.backward(loss)?;
    opt.step(f_t, &f.grads(&tape))?;
    Ok(value)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Predictions {
    pub classes: Vec<usize>,
    pub probabilities: Matrix,
}

/// Applies the classifier directly to target rows. Ties go to the lower
/// class index.
pub fn predict_target(f_t: &MlpParams, rows: &Matrix) -> Result<Predictions> {
    let probabilities = f_t.forward_values(rows)?;
    let classes = probabilities
        .rows()
        .into_iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &p)| if p > best.1 { (i, p) } else { best })
                .0
        })
        .collect();
    Ok(Predictions {
        classes,
        probabilities,
    })
}
