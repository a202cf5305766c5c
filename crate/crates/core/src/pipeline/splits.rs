use super::PipelineError;
use crate::dataset::{shuffled_indices, to_jsonl, Record};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

pub const PRETRAIN_SHARE: f64 = 0.4;
pub const TEST_SHARE: f64 = 0.2;
pub const MIN_DATASET: usize = 5;

/// Disjoint pretraining / finetuning / test id lists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub dataset_hash: String,
    pub seed: u64,
    pub pretrain: Vec<String>,
    pub finetune: Vec<String>,
    pub test: Vec<String>,
}

pub fn dataset_hash(records: &[Record]) -> String {
    hex::encode(Sha256::digest(to_jsonl(records).as_bytes()))
}

/// Seeded shuffle, then contiguous 40/40/20 cut (shares rounded to the
/// nearest record; the finetuning share takes the remainder).
pub fn make_splits(records: &[Record], seed: u64) -> Result<SplitManifest, PipelineError> {
    let n = records.len();
    if n < MIN_DATASET {
        return Err(PipelineError::DatasetTooSmall(n));
    }
    let n_pre = (PRETRAIN_SHARE * n as f64).round() as usize;
    let n_test = (TEST_SHARE * n as f64).round() as usize;
    let order = shuffled_indices(n, seed);
    let ids = |range: std::ops::Range<usize>| -> Vec<String> {
        order[range].iter().map(|&i| records[i].id.clone()).collect()
    };
    Ok(SplitManifest {
        dataset_hash: dataset_hash(records),
        seed,
        pretrain: ids(0..n_pre),
        finetune: ids(n_pre..n - n_test),
        test: ids(n - n_test..n),
    })
}

impl SplitManifest {
    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, json + "\n").map_err(|e| PipelineError::Io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<SplitManifest, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Io(path.display().to_string(), e))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Format(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate_synthetic_dataset;

    fn records(n: usize) -> Vec<Record> {
        generate_synthetic_dataset(n, 4)
            .unwrap()
            .into_iter()
            .map(|s| s.record)
            .collect()
    }

    #[test]
    fn hundred_records_split_exactly() {
        let m = make_splits(&records(100), 1).unwrap();
        assert_eq!((m.pretrain.len(), m.finetune.len(), m.test.len()), (40, 40, 20));
        assert_eq!(m, make_splits(&records(100), 1).unwrap());
    }

    #[test]
    fn too_small() {
        assert!(matches!(
            make_splits(&records(4), 1),
            Err(PipelineError::DatasetTooSmall(4))
        ));
    }
}
