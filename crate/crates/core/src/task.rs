//! Separation between what training may see and what only evaluation may
//! see.
//!
//! [`TrainingView`] carries labeled source rows and *unlabeled* target rows.
//! Target labels live in [`HeldOutLabels`], which exposes no accessor for
//! the raw labels; it can only score predictions.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::EncodedDataset;
use crate::error::{Error, Result};

/// Everything a training arm is allowed to read.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingView {
    /// Pooled labeled rows from every source domain. Domain tags are kept
    /// for audit reporting only.
    pub source: EncodedDataset,
    /// Target rows with labels stripped.
    pub target: EncodedDataset,
    pub num_classes: usize,
}

impl TrainingView {
    pub fn new(source: EncodedDataset, target: EncodedDataset, num_classes: usize) -> Result<Self> {
        if source.dim() != target.dim() {
            return Err(Error::Dimension(format!(
                "source dim {} != target dim {}",
                source.dim(),
                target.dim()
            )));
        }
        source.required_labels()?;
        if num_classes < 2 {
            return Err(Error::Data("need at least two classes".into()));
        }
        if source.labels.iter().flatten().any(|&l| l >= num_classes) {
            return Err(Error::Data(format!("source label outside 0..{num_classes}")));
        }
        Ok(Self {
            source,
            target: target.without_labels(),
            num_classes,
        })
    }

    pub fn dim(&self) -> usize {
        self.source.dim()
    }
}

/// Target labels, usable only for scoring.
#[derive(Clone, Debug, PartialEq)]
pub struct HeldOutLabels(Vec<Option<usize>>);

impl HeldOutLabels {
    pub fn new(labels: Vec<Option<usize>>) -> Self {
        Self(labels)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Accuracy over rows that have a label.
    pub fn accuracy(&self, predictions: &[usize]) -> Result<f64> {
        if predictions.len() != self.0.len() {
            return Err(Error::Dimension(format!(
                "{} predictions for {} target rows",
                predictions.len(),
                self.0.len()
            )));
        }
        let (preds, labels): (Vec<usize>, Vec<usize>) = predictions
            .iter()
            .zip(&self.0)
            .filter_map(|(&p, l)| l.map(|l| (p, l)))
            .unzip();
        crate::eval::accuracy(&preds, &labels)
    }

    /// A copy where every label is replaced by a different random class.
    /// Used to show training never reads them.
    pub fn perturbed(&self, seed: u64, num_classes: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = num_classes.max(2);
        Self(
            self.0
                .iter()
                .map(|l| l.map(|v| (v + rng.random_range(1..k)) % k))
                .collect(),
        )
    }

    /// Reattaches the labels to target rows for file export.
    pub fn attach_to(&self, target: &EncodedDataset) -> Result<EncodedDataset> {
        if target.len() != self.0.len() {
            return Err(Error::Dimension("label count does not match target rows".into()));
        }
        EncodedDataset::new(
            target.representations.clone(),
            self.0.clone(),
            target.domain_tags.clone(),
        )
    }
}

/// A training view plus the held-out target labels.
#[derive(Clone, Debug)]
pub struct DomainSplit {
    pub training: TrainingView,
    pub target_labels: HeldOutLabels,
}

/// Leave-one-domain-out split: rows tagged `target` become the target,
/// every other row is pooled into the source.
pub fn split_by_target(all: &EncodedDataset, target: &str) -> Result<DomainSplit> {
    let tgt_rows = all.rows_in_domain(target);
    if tgt_rows.is_empty() {
        return Err(Error::Config(format!(
            "target domain {target:?} not found; available: {:?}",
            all.domains()
        )));
    }
    let src_rows = all.rows_not_in_domain(target);
    if src_rows.is_empty() {
        return Err(Error::Data("no source rows besides the target domain".into()));
    }
    let source = all.select(&src_rows);
    let target_full = all.select(&tgt_rows);
    let num_classes = all.num_classes().max(2);
    Ok(DomainSplit {
        target_labels: HeldOutLabels::new(target_full.labels.clone()),
        training: TrainingView::new(source, target_full, num_classes)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tagged() -> EncodedDataset {
        EncodedDataset::new(
            array![[0.0], [1.0], [2.0], [3.0]],
            vec![Some(0), Some(1), Some(1), Some(0)],
            ["a", "b", "t", "t"].iter().map(|s| Some(s.to_string())).collect(),
        )
        .unwrap()
    }

    #[test]
    fn split_strips_target_labels() {
        let split = split_by_target(&tagged(), "t").unwrap();
        assert_eq!(split.training.source.len(), 2);
        assert!(split.training.target.labels.iter().all(Option::is_none));
        assert_eq!(split.target_labels.accuracy(&[1, 0]).unwrap(), 1.0);
        assert_eq!(split.target_labels.accuracy(&[0, 0]).unwrap(), 0.5);
    }

    #[test]
    fn unknown_target_is_a_config_error() {
        assert!(matches!(split_by_target(&tagged(), "zzz"), Err(Error::Config(_))));
    }

    #[test]
    fn perturbation_changes_labels_but_not_length() {
        let split = split_by_target(&tagged(), "t").unwrap();
        let p = split.target_labels.perturbed(0, 2);
        assert_eq!(p.len(), 2);
        assert_ne!(p, split.target_labels);
    }
}
