//! The fuzz corpus seeds must stay decodable as the formats evolve.

use std::fs;
use std::path::PathBuf;

use subsetsearch::acquisition::PredictionTensor;
use subsetsearch::experiment::{ExperimentConfig, ResultsFile};
use subsetsearch::kv::KeyValues;
use subsetsearch::learner::Checkpoint;
use subsetsearch::subset::SubsetState;
use subsetsearch::LabeledPool;

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn binary_seeds_decode_and_reencode() {
    for (name, bytes) in seeds("alpt_decode") {
        match PredictionTensor::from_alpt_bytes(&bytes) {
            Ok(t) => assert_eq!(t.to_alpt_bytes(), bytes, "{name}"),
            Err(_) => assert_eq!(name, "truncated"),
        }
    }
    for (name, bytes) in seeds("checkpoint_decode") {
        let c = Checkpoint::from_bytes(&bytes).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(c.to_bytes(), bytes);
    }
}

#[test]
fn text_seeds_parse() {
    for (name, bytes) in seeds("prediction_csv") {
        PredictionTensor::read_csv(bytes.as_slice()).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    for (name, bytes) in seeds("pool_csv") {
        let pool = LabeledPool::read_csv(bytes.as_slice(), None);
        assert!(pool.is_ok() || name == "header_only", "{name}: {pool:?}");
    }
    for (name, bytes) in seeds("subset_csv") {
        SubsetState::read_csv(bytes.as_slice()).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    for (name, bytes) in seeds("config_parse") {
        let text = String::from_utf8(bytes).unwrap();
        if name == "odd_layout" {
            assert!(KeyValues::parse(&text).is_err());
            continue;
        }
        KeyValues::parse(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        ExperimentConfig::parse(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    for (name, bytes) in seeds("results_json") {
        serde_json::from_slice::<ResultsFile>(&bytes).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}
