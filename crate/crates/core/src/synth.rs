//! Synthetic multi-source tasks with known class-conditional Gaussians.
//!
//! Every class is an isotropic Gaussian; a domain translates all class
//! means by the same offset. Because the target's class conditionals are
//! known exactly, the Bayes-optimal accuracy is available as an oracle.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StatNormal};

use crate::dataset::EncodedDataset;
use crate::error::{Error, Result};
use crate::task::{HeldOutLabels, TrainingView};

/// One domain: class means, shared noise level, and a domain offset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDomainSpec {
    /// One mean vector per class.
    pub class_means: Vec<Vec<f64>>,
    pub sigma: f64,
    /// Added to every class mean.
    pub offset: Vec<f64>,
    pub samples_per_class: Vec<usize>,
    pub seed: u64,
}

impl SyntheticDomainSpec {
    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.class_means.len() < 2 {
            return Err(Error::Spec("need at least two classes".into()));
        }
        if d < 2 {
            return Err(Error::Spec("dimension must be at least 2".into()));
        }
        if self.class_means.iter().any(|m| m.len() != d) {
            return Err(Error::Spec("class means and offset disagree on dimension".into()));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Spec(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.samples_per_class.len() != self.class_means.len() {
            return Err(Error::Spec("one sample count per class is required".into()));
        }
        if self.samples_per_class.iter().all(|&n| n == 0) {
            return Err(Error::Data("every class has zero samples".into()));
        }
        Ok(())
    }

    /// Class means with the domain offset applied.
    pub fn shifted_means(&self) -> Vec<Vec<f64>> {
        self.class_means
            .iter()
            .map(|m| m.iter().zip(&self.offset).map(|(a, b)| a + b).collect())
            .collect()
    }
}

/// Draws rows `~ N(mean_c + offset, sigma^2 I)`, class by class, labeled.
pub fn generate_domain(spec: &SyntheticDomainSpec) -> Result<EncodedDataset> {
    spec.validate()?;
    let d = spec.dim();
    let n: usize = spec.samples_per_class.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.sigma).map_err(|e| Error::Spec(e.to_string()))?;
    let means = spec.shifted_means();
    let mut x = Array2::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    let mut row = 0;
    for (c, (&count, mean)) in spec.samples_per_class.iter().zip(&means).enumerate() {
        for _ in 0..count {
            for (j, mu) in mean.iter().enumerate() {
                x[[row, j]] = mu + noise.sample(&mut rng);
            }
            labels.push(Some(c));
            row += 1;
        }
    }
    EncodedDataset::new(x, labels, vec![None; n])
}

/// Known parameters of the target domain's class conditionals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianOracle {
    pub class_means: Vec<Vec<f64>>,
    pub sigma: f64,
    /// Class prior probabilities.
    pub priors: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BayesAccuracy {
    pub value: f64,
    /// Zero for the closed form.
    pub std_error: f64,
}

pub const MONTE_CARLO_SAMPLES: usize = 1_000_000;

fn standard_normal_cdf(x: f64) -> f64 {
    StatNormal::standard().cdf(x)
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

impl GaussianOracle {
    pub fn from_domain(spec: &SyntheticDomainSpec) -> Self {
        let total: usize = spec.samples_per_class.iter().sum();
        Self {
            class_means: spec.shifted_means(),
            sigma: spec.sigma,
            priors: spec
                .samples_per_class
                .iter()
                .map(|&n| n as f64 / total.max(1) as f64)
                .collect(),
        }
    }

    fn is_balanced_pair(&self) -> bool {
        self.class_means.len() == 2 && (self.priors[0] - self.priors[1]).abs() < 1e-12
    }

    /// Φ(Δ / 2σ) for two equiprobable classes at distance Δ.
    pub fn closed_form(&self) -> Option<f64> {
        if !self.is_balanced_pair() {
            return None;
        }
        let delta = euclid(&self.class_means[0], &self.class_means[1]);
        Some(standard_normal_cdf(delta / (2.0 * self.sigma)))
    }

    /// Accuracy of the maximum-posterior rule estimated from `samples`
    /// draws.
    pub fn monte_carlo(&self, samples: usize, seed: u64) -> BayesAccuracy {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.class_means[0].len();
        let log_priors: Vec<f64> = self.priors.iter().map(|p| p.max(1e-300).ln()).collect();
        let two_var = 2.0 * self.sigma * self.sigma;
        let mut x = vec![0.0; d];
        let mut correct = 0usize;
        for _ in 0..samples {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut class = self.priors.len() - 1;
            for (c, p) in self.priors.iter().enumerate() {
                acc += p;
                if u < acc {
                    class = c;
                    break;
                }
            }
            for (xi, mu) in x.iter_mut().zip(&self.class_means[class]) {
                let z: f64 = StandardNormal.sample(&mut rng);
                *xi = mu + self.sigma * z;
            }
            let best = self
                .class_means
                .iter()
                .zip(&log_priors)
                .map(|(m, lp)| lp - euclid(&x, m).powi(2) / two_var)
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |b, (c, s)| if s > b.1 { (c, s) } else { b })
                .0;
            correct += (best == class) as usize;
        }
        let p = correct as f64 / samples as f64;
        BayesAccuracy {
            value: p,
            std_error: (p * (1.0 - p) / samples as f64).sqrt(),
        }
    }

    pub fn bayes_accuracy(&self) -> BayesAccuracy {
        match self.closed_form() {
            Some(value) => BayesAccuracy {
                value,
                std_error: 0.0,
            },
            None => self.monte_carlo(MONTE_CARLO_SAMPLES, 0),
        }
    }
}

/// Parameters for [`make_multisource_task`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    /// One shift magnitude per source domain.
    pub shifts: Vec<f64>,
    pub dim: usize,
    pub sigma: f64,
    /// Distance between the two class means.
    pub class_distance: f64,
    /// Samples per class in every domain, target included.
    pub n_per_class: usize,
    pub seed: u64,
}

impl Default for TaskSpec {
    fn default() -> Self {
        Self {
            shifts: vec![0.5, 1.0, 2.0],
            dim: 16,
            sigma: 1.0,
            class_distance: 2.0,
            n_per_class: 1000,
            seed: 0,
        }
    }
}

/// What is known about how the task was built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskOracle {
    pub target: GaussianOracle,
    /// Norm of each source's offset from the target.
    pub source_distances: Vec<f64>,
    pub source_offsets: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct MultiSourceTask {
    /// Labeled source domains, tagged `source0`, `source1`, ...
    pub sources: Vec<EncodedDataset>,
    /// Target rows, unlabeled, tagged `target`.
    pub target: EncodedDataset,
    pub target_labels: HeldOutLabels,
    pub oracle: Option<TaskOracle>,
}

pub const TARGET_TAG: &str = "target";

pub fn source_tag(i: usize) -> String {
    format!("source{i}")
}

fn random_unit<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn tag(mut ds: EncodedDataset, name: &str) -> EncodedDataset {
    ds.domain_tags = vec![Some(name.to_string()); ds.len()];
    ds
}

/// Two balanced classes at `class_distance` apart along a random direction;
/// the target sits at offset zero and source `i` is translated by
/// `shifts[i]` along its own random direction.
pub fn make_multisource_task(spec: &TaskSpec) -> Result<MultiSourceTask> {
    if spec.shifts.len() < 2 {
        return Err(Error::Spec("a multi-source task needs at least two sources".into()));
    }
    if let Some(s) = spec.shifts.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
        return Err(Error::Spec(format!("shift magnitudes must be nonnegative, got {s}")));
    }
    if spec.class_distance < 0.0 || !spec.class_distance.is_finite() {
        return Err(Error::Spec("class distance must be nonnegative".into()));
    }
    let d = spec.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let axis = Array1::from(random_unit(&mut rng, d.max(1)));
    let half = spec.class_distance / 2.0;
    let class_means = vec![(&axis * -half).to_vec(), (&axis * half).to_vec()];

    let domain = |offset: Vec<f64>, seed: u64| SyntheticDomainSpec {
        class_means: class_means.clone(),
        sigma: spec.sigma,
        offset,
        samples_per_class: vec![spec.n_per_class; 2],
        seed,
    };

    let mut sources = Vec::with_capacity(spec.shifts.len());
    let mut offsets = Vec::with_capacity(spec.shifts.len());
    for (i, &shift) in spec.shifts.iter().enumerate() {
        let dir = random_unit(&mut rng, d.max(1));
        let offset: Vec<f64> = dir.iter().map(|v| v * shift).collect();
        let ds = generate_domain(&domain(offset.clone(), rng.random()))?;
        sources.push(tag(ds, &source_tag(i)));
        offsets.push(offset);
    }
    let target_spec = domain(vec![0.0; d], rng.random());
    let target_full = tag(generate_domain(&target_spec)?, TARGET_TAG);

    Ok(MultiSourceTask {
        sources,
        target_labels: HeldOutLabels::new(target_full.labels.clone()),
        target: target_full.without_labels(),
        oracle: Some(TaskOracle {
            target: GaussianOracle::from_domain(&target_spec),
            source_distances: offsets.iter().map(|o| euclid(o, &vec![0.0; d])).collect(),
            source_offsets: offsets,
        }),
    })
}

impl MultiSourceTask {
    pub fn dim(&self) -> usize {
        self.target.dim()
    }

    pub fn num_classes(&self) -> usize {
        self.sources.iter().map(EncodedDataset::num_classes).max().unwrap_or(0).max(2)
    }

    /// Pooled labeled sources plus the unlabeled target.
    pub fn training_view(&self) -> Result<TrainingView> {
        let refs: Vec<&EncodedDataset> = self.sources.iter().collect();
        TrainingView::new(EncodedDataset::concat(&refs)?, self.target.clone(), self.num_classes())
    }

    /// Analytic Bayes accuracy on the target.
    pub fn bayes_accuracy(&self) -> Result<BayesAccuracy> {
        self.oracle
            .as_ref()
            .map(|o| o.target.bayes_accuracy())
            .ok_or_else(|| Error::Contract("task has no known generating parameters".into()))
    }

    /// Every domain in one dataset, target labels included, for export.
    pub fn to_dataset(&self) -> Result<EncodedDataset> {
        let target = self.target_labels.attach_to(&self.target)?;
        let mut parts: Vec<&EncodedDataset> = self.sources.iter().collect();
        parts.push(&target);
        EncodedDataset::concat(&parts)
    }
}
