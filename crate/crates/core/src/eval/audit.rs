use std::collections::BTreeMap;

use ndarray::Axis;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ccgan::{model_based_weights, model_free_weights, AdaptationModel, CurriculumMode};
use crate::dataset::EncodedDataset;
use crate::error::{Error, Result};
use crate::sampling::BatchStream;

/// Mean curriculum weight per source domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightAudit {
    pub per_source: BTreeMap<String, f64>,
    /// Sum of weights in each audited batch (1 up to rounding).
    pub batch_sums: Vec<f64>,
}

impl WeightAudit {
    pub fn to_table(&self) -> String {
        let mut out = String::from("domain\tmean_weight\n");
        for (k, v) in &self.per_source {
            out.push_str(&format!("{k}\t{v:.9}\n"));
        }
        out
    }
}

/// Draws `n_batches` source batches, weights them as training would, and
/// averages the weight of each row by its domain tag. Tags are used only
/// for this report.
pub fn weight_audit(
    model: &AdaptationModel,
    mode: CurriculumMode,
    source: &EncodedDataset,
    batch_size: usize,
    n_batches: usize,
    seed: u64,
) -> Result<WeightAudit> {
    if mode == CurriculumMode::None {
        return Err(Error::Contract("weight audit needs a curriculum mode".into()));
    }
    model.check_mode(mode)?;
    if n_batches == 0 {
        return Err(Error::Config("audit needs at least one batch".into()));
    }
    let mut stream = BatchStream::new((0..source.len()).collect(), batch_size)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    let mut batch_sums = Vec::with_capacity(n_batches);
    for _ in 0..n_batches {
        let rows = stream.next_batch(&mut rng);
        let generated = model.g_st.forward_values(&source.representations.select(Axis(0), &rows))?;
        let w = match mode {
            CurriculumMode::ModelBased => model_based_weights(model.h_t.as_ref().expect("checked"), &generated)?,
            _ => model_free_weights(&model.d_t, &generated)?,
        };
        batch_sums.push(w.as_slice().iter().sum());
        for (&r, &wi) in rows.iter().zip(w.as_slice()) {
            let tag = source.domain_tags[r].clone().unwrap_or_else(|| "-".into());
            let e = sums.entry(tag).or_default();
            e.0 += wi;
            e.1 += 1;
        }
    }
    Ok(WeightAudit {
        per_source: sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect(),
        batch_sums,
    })
}
