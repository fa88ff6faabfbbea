//! Central finite-difference gradient checks shared by the gradient tests
//! and the acceptance suite.

#![allow(dead_code)]

use ccgan_core::autodiff::{BinaryKind, ReduceKind, UnaryKind};
use ccgan_core::ccgan::{
    cycle_loss, curriculum_gan_losses, curriculum_weights, discriminator_objective, gan_losses,
    generator_objective, task_loss, uniform_kl_loss, AdaptationModel, BatchWeights, CurriculumMode,
    LossWeights, NetworkGrads,
};
use ccgan_core::nn::{BoundMlp, HiddenActivation, MlpParams, MlpSpec, OutputActivation};
use ccgan_core::{Matrix, Tape, Var};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

pub const FD_STEP: f64 = 1e-6;
pub const FD_TOL: f64 = 1e-5;
/// Gradients smaller than this are compared absolutely: round-off in a
/// central difference with step 1e-6 is around 1e-10 for O(1) losses.
pub const FD_FLOOR: f64 = 1e-3;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_FLOOR)
}

pub fn randn(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

pub fn rand_uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    let d = Uniform::new(lo, hi).unwrap();
    Array2::from_shape_simple_fn((rows, cols), || d.sample(rng))
}

type Build<'a> = dyn Fn(&mut Tape, &[Var]) -> ccgan_core::Result<Var> + 'a;

fn eval_graph(inputs: &[Matrix], build: &Build) -> f64 {
    let mut tape = Tape::new(0);
    let vars: Vec<Var> = inputs.iter().map(|m| tape.constant(m.clone()).unwrap()).collect();
    let root = build(&mut tape, &vars).unwrap();
    tape.scalar(root)
}

/// Largest relative error between backward gradients of the scalar built
/// by `build` and central differences, over every entry of every input.
pub fn check_graph(inputs: &[Matrix], build: &Build) -> f64 {
    let all: Vec<usize> = (0..inputs.len()).collect();
    check_graph_wrt(inputs, &all, build)
}

/// As [`check_graph`], restricted to the inputs listed in `wrt`; the rest
/// are treated as constants (detached inputs).
pub fn check_graph_wrt(inputs: &[Matrix], wrt: &[usize], build: &Build) -> f64 {
    let mut tape = Tape::new(0);
    let vars: Vec<Var> = inputs.iter().map(|m| tape.leaf(m.clone(), true).unwrap()).collect();
    let root = build(&mut tape, &vars).unwrap();
    tape.backward(root).unwrap();
    let mut worst = 0.0f64;
    for (k, v) in vars.iter().enumerate() {
        if !wrt.contains(&k) {
            continue;
        }
        let analytic = tape
            .grad(*v)
            .cloned()
            .unwrap_or_else(|| Array2::zeros(inputs[k].dim()));
        for idx in 0..inputs[k].len() {
            let (r, c) = (idx / inputs[k].ncols(), idx % inputs[k].ncols());
            let mut plus = inputs.to_vec();
            plus[k][[r, c]] += FD_STEP;
            let mut minus = inputs.to_vec();
            minus[k][[r, c]] -= FD_STEP;
            let numeric = (eval_graph(&plus, build) - eval_graph(&minus, build)) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(analytic[[r, c]], numeric));
        }
    }
    worst
}

/// Turns a tensor into a scalar with fixed random coefficients so every
/// output entry contributes a distinct gradient.
pub fn project(tape: &mut Tape, x: Var, coef: &Matrix) -> ccgan_core::Result<Var> {
    let c = tape.constant(coef.clone())?;
    let p = tape.mul(x, c)?;
    tape.sum(p)
}

/// Binds parameter matrices `[w0, b0, w1, b1, ...]` as an MLP.
pub fn bound_from(spec: &MlpSpec, vars: &[Var]) -> BoundMlp {
    BoundMlp {
        spec: spec.clone(),
        layers: vars.chunks(2).map(|c| (c[0], c[1])).collect(),
    }
}

pub fn flat_params(p: &MlpParams) -> Vec<Matrix> {
    p.layers.iter().flat_map(|l| [l.weight.clone(), l.bias.clone()]).collect()
}

/// Random parameters with nonzero biases.
pub fn random_params(spec: &MlpSpec, rng: &mut ChaCha8Rng) -> MlpParams {
    let mut p = MlpParams::init(spec, rng.random()).unwrap();
    for l in &mut p.layers {
        l.bias = rand_uniform(rng, 1, l.bias.ncols(), -0.3, 0.3);
    }
    p
}

pub fn small_spec(rng: &mut ChaCha8Rng, dims: Vec<usize>, out: OutputActivation) -> MlpSpec {
    let hidden = if rng.random_bool(0.5) { HiddenActivation::Relu } else { HiddenActivation::Tanh };
    MlpSpec::new(dims, hidden, out).unwrap()
}

/// A model with small random networks (≤3 layers, ≤8 units).
pub fn small_model(rng: &mut ChaCha8Rng, d: usize, classes: usize, mode: CurriculumMode, residual: bool) -> AdaptationModel {
    let h = rng.random_range(3..=8);
    let gen = small_spec(rng, vec![d, h, d], OutputActivation::Linear).with_residual(residual);
    let disc = |rng: &mut ChaCha8Rng| {
        let w = rng.random_range(2..=8);
        small_spec(rng, vec![d, w, 1], OutputActivation::Sigmoid)
    };
    let (h1, h2) = (rng.random_range(2..=8), rng.random_range(2..=6));
    let cls = small_spec(rng, vec![d, h1, h2, classes], OutputActivation::Softmax);
    let mut m = AdaptationModel {
        g_st: random_params(&gen, rng),
        g_ts: random_params(&gen, rng),
        d_s: { let s = disc(rng); random_params(&s, rng) },
        d_t: { let s = disc(rng); random_params(&s, rng) },
        f_t: random_params(&cls, rng),
        h_s: None,
        h_t: None,
    };
    if mode == CurriculumMode::ModelBased {
        let s = disc(rng);
        m.h_s = Some(random_params(&s, rng));
        let s = disc(rng);
        m.h_t = Some(random_params(&s, rng));
    }
    m
}

/// Worst relative error of `grads` against central differences of
/// `value(model)` taken over the parameters of every network in `grads`.
pub fn check_model(
    model: &AdaptationModel,
    grads: &NetworkGrads,
    value: &dyn Fn(&AdaptationModel) -> f64,
) -> f64 {
    let mut worst = 0.0f64;
    for (&name, g) in grads {
        let net = model.network(name).unwrap();
        for (li, layer) in net.layers.iter().enumerate() {
            for (which, (param, grad)) in [(&layer.weight, &g[li].weight), (&layer.bias, &g[li].bias)]
                .into_iter()
                .enumerate()
            {
                for r in 0..param.nrows() {
                    for c in 0..param.ncols() {
                        let eval = |delta: f64| {
                            let mut m = model.clone();
                            let l = &mut m.network_mut(name).unwrap().layers[li];
                            let p = if which == 0 { &mut l.weight } else { &mut l.bias };
                            p[[r, c]] += delta;
                            value(&m)
                        };
                        let numeric = (eval(FD_STEP) - eval(-FD_STEP)) / (2.0 * FD_STEP);
                        worst = worst.max(rel_err(grad[[r, c]], numeric));
                    }
                }
            }
        }
    }
    worst
}

/// One named finite-difference configuration and its worst error.
pub struct GradResult {
    pub name: String,
    pub worst: f64,
}

fn unary_input(rng: &mut ChaCha8Rng, kind: UnaryKind, r: usize, c: usize) -> Matrix {
    match kind {
        // keep away from the kinks and the clamp
        UnaryKind::Log => rand_uniform(rng, r, c, 0.2, 3.0),
        UnaryKind::Relu | UnaryKind::Abs => randn(rng, r, c).mapv(|v| if v.abs() < 0.05 { v + 0.1 } else { v }),
        _ => randn(rng, r, c),
    }
}

/// Every differentiable primitive on a few random shapes.
pub fn op_checks(seed: u64) -> Vec<GradResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut push = |name: String, worst: f64| out.push(GradResult { name, worst });

    for (r, k, c) in [(2, 3, 4), (4, 1, 3), (1, 5, 2)] {
        let a = randn(&mut rng, r, k);
        let b = randn(&mut rng, k, c);
        let coef = randn(&mut rng, r, c);
        push(format!("matmul {r}x{k}·{k}x{c}"), check_graph(&[a, b], &|t, v| {
            let m = t.matmul(v[0], v[1])?;
            project(t, m, &coef)
        }));
    }
    for kind in [BinaryKind::Add, BinaryKind::Sub, BinaryKind::Mul] {
        for (sa, sb) in [((3, 4), (3, 4)), ((3, 4), (1, 4)), ((3, 4), (3, 1)), ((1, 1), (2, 3))] {
            let a = randn(&mut rng, sa.0, sa.1);
            let b = randn(&mut rng, sb.0, sb.1);
            let out_shape = (sa.0.max(sb.0), sa.1.max(sb.1));
            let coef = randn(&mut rng, out_shape.0, out_shape.1);
            push(format!("{kind:?} {sa:?} with {sb:?}"), check_graph(&[a, b], &|t, v| {
                let m = t.elementwise(v[0], v[1], kind)?;
                project(t, m, &coef)
            }));
        }
    }
    for kind in [
        UnaryKind::Relu,
        UnaryKind::Tanh,
        UnaryKind::Sigmoid,
        UnaryKind::Exp,
        UnaryKind::Log,
        UnaryKind::Neg,
        UnaryKind::Abs,
    ] {
        let x = unary_input(&mut rng, kind, 3, 4);
        let coef = randn(&mut rng, 3, 4);
        push(format!("{kind:?}"), check_graph(&[x], &|t, v| {
            let m = t.unary(v[0], kind)?;
            project(t, m, &coef)
        }));
    }
    let x = randn(&mut rng, 3, 4);
    let coef = randn(&mut rng, 3, 4);
    push("scale".into(), check_graph(&[x.clone()], &|t, v| {
        let m = t.scale(v[0], -1.7);
        project(t, m, &coef)
    }));
    push("offset".into(), check_graph(&[x.clone()], &|t, v| {
        let m = t.offset(v[0], 0.3);
        project(t, m, &coef)
    }));
    let coef_t = randn(&mut rng, 4, 3);
    push("transpose".into(), check_graph(&[x.clone()], &|t, v| {
        let m = t.transpose(v[0]);
        project(t, m, &coef_t)
    }));
    push("row softmax".into(), check_graph(&[x.clone()], &|t, v| {
        let m = t.row_softmax(v[0])?;
        project(t, m, &coef)
    }));
    push("row log-softmax".into(), check_graph(&[x.clone()], &|t, v| {
        let m = t.row_log_softmax(v[0])?;
        project(t, m, &coef)
    }));
    for kind in [ReduceKind::Sum, ReduceKind::Mean, ReduceKind::L1Norm] {
        let x = unary_input(&mut rng, UnaryKind::Abs, 3, 4);
        push(format!("reduce {kind:?}"), check_graph(&[x], &|t, v| {
            let s = t.reduce(v[0], kind)?;
            let sq = t.mul(s, s)?;
            t.offset(sq, 0.0).pipe_ok()
        }));
    }
    let a = randn(&mut rng, 2, 3);
    let b = randn(&mut rng, 2, 3);
    push("stop gradient (free factor)".into(), check_graph_wrt(&[a.clone(), b.clone()], &[0], &|t, v| {
        // the stopped factor is held constant, so differentiate only `a`
        let s = t.stop_gradient(v[1]);
        let m = t.mul(v[0], s)?;
        t.sum(m)
    }));
    out
}

trait PipeOk: Sized {
    fn pipe_ok(self) -> ccgan_core::Result<Self> {
        Ok(self)
    }
}
impl PipeOk for Var {}

/// Each loss function on random small networks and batches.
pub fn loss_checks(seed: u64) -> Vec<GradResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let d = 3;
    let n = 5;

    // plain and curriculum GAN losses: gradients w.r.t. D and the fake rows
    let spec = small_spec(&mut rng, vec![d, 6, 1], OutputActivation::Sigmoid);
    let disc = random_params(&spec, &mut rng);
    let real = randn(&mut rng, n, d);
    let fake = randn(&mut rng, n, d);
    let w = BatchWeights::softmax(&[0.3, -0.2, 1.1, 0.0, 0.5]).unwrap();
    for curriculum in [false, true] {
        for gen_side in [false, true] {
            let mut inputs = flat_params(&disc);
            inputs.push(real.clone());
            inputs.push(fake.clone());
            // the discriminator loss detaches the fake rows
            let wrt: Vec<usize> = (0..inputs.len()).filter(|&i| gen_side || i != inputs.len() - 1).collect();
            let worst = check_graph_wrt(&inputs, &wrt, &|t, v| {
                let k = v.len() - 2;
                let dnet = bound_from(&spec, &v[..k]);
                let l = if curriculum {
                    curriculum_gan_losses(t, &dnet, v[k], v[k + 1], &w)?
                } else {
                    gan_losses(t, &dnet, v[k], v[k + 1])?
                };
                Ok(if gen_side { l.gen } else { l.disc })
            });
            let name = format!(
                "{} {} loss",
                if curriculum { "curriculum GAN" } else { "GAN" },
                if gen_side { "generator" } else { "discriminator" }
            );
            out.push(GradResult { name, worst });
        }
    }

    // cycle loss through both generators
    let gspec = small_spec(&mut rng, vec![d, 5, d], OutputActivation::Linear);
    let g1 = random_params(&gspec, &mut rng);
    let g2 = random_params(&gspec, &mut rng);
    let mut inputs = flat_params(&g1);
    inputs.extend(flat_params(&g2));
    inputs.push(randn(&mut rng, n, d));
    inputs.push(randn(&mut rng, n + 1, d));
    let worst = check_graph(&inputs, &|t, v| {
        let a = bound_from(&gspec, &v[0..4]);
        let b = bound_from(&gspec, &v[4..8]);
        cycle_loss(t, &a, &b, v[8], v[9])
    });
    out.push(GradResult { name: "cycle loss".into(), worst });

    // KL to uniform of the selection network's batch distribution
    let hspec = small_spec(&mut rng, vec![d, 4, 1], OutputActivation::Sigmoid);
    let h = random_params(&hspec, &mut rng);
    let mut inputs = flat_params(&h);
    inputs.push(randn(&mut rng, n, d));
    let worst = check_graph(&inputs, &|t, v| uniform_kl_loss(t, &bound_from(&hspec, &v[..4]), v[4]));
    out.push(GradResult { name: "uniform KL loss".into(), worst });

    // task loss through f_t and g_st
    let fspec = small_spec(&mut rng, vec![d, 5, 3], OutputActivation::Softmax);
    let f = random_params(&fspec, &mut rng);
    let labels: Vec<Option<usize>> = (0..n).map(|i| Some(i % 3)).collect();
    let mut inputs = flat_params(&f);
    inputs.extend(flat_params(&g1));
    inputs.push(randn(&mut rng, n, d));
    let worst = check_graph(&inputs, &|t, v| {
        task_loss(t, &bound_from(&fspec, &v[0..4]), &bound_from(&gspec, &v[4..8]), v[8], &labels)
    });
    out.push(GradResult { name: "task loss".into(), worst });
    out
}

/// Full generator-phase and discriminator-phase objectives for every
/// curriculum mode, with and without the cycle path and residual
/// generators.
pub fn objective_checks(seed: u64) -> Vec<GradResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for mode in [CurriculumMode::None, CurriculumMode::ModelFree, CurriculumMode::ModelBased] {
        for cycle in [true, false] {
            for residual in [false, true] {
                let d = rng.random_range(2..=4);
                let n = rng.random_range(3..=6);
                let model = small_model(&mut rng, d, 2, mode, residual);
                let src = randn(&mut rng, n, d);
                let tgt = randn(&mut rng, n, d).mapv(|v| v + 0.5);
                let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
                let lw = LossWeights { cgan: 0.7, cyc: 0.9, uni: 1.3, task: 1.1 };
                let w = curriculum_weights(&model, &src, &tgt, mode).unwrap();
                let (_, grads) = generator_objective(&model, &src, &labels, &tgt, &w, mode, lw, cycle).unwrap();
                let worst = check_model(&model, &grads, &|m| {
                    generator_objective(m, &src, &labels, &tgt, &w, mode, lw, cycle).unwrap().0.total
                });
                out.push(GradResult {
                    name: format!("generator objective {mode} cycle={cycle} residual={residual}"),
                    worst,
                });
                if !residual {
                    let (_, _, grads) = discriminator_objective(&model, &src, &tgt, &w, mode, cycle).unwrap();
                    let worst = check_model(&model, &grads, &|m| {
                        let (a, b, _) = discriminator_objective(m, &src, &tgt, &w, mode, cycle).unwrap();
                        a + b
                    });
                    out.push(GradResult { name: format!("discriminator objective {mode} cycle={cycle}"), worst });
                }
            }
        }
    }
    out
}

pub fn all_checks(seed: u64) -> Vec<GradResult> {
    let mut v = op_checks(seed);
    v.extend(loss_checks(seed.wrapping_add(1)));
    v.extend(objective_checks(seed.wrapping_add(2)));
    v
}
