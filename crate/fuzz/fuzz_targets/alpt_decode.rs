#![no_main]

use libfuzzer_sys::fuzz_target;
use subsetsearch::acquisition::PredictionTensor;

fuzz_target!(|data: &[u8]| {
    // Anything that decodes must re-encode to the same bytes.
    if let Ok(tensor) = PredictionTensor::from_alpt_bytes(data) {
        let bytes = tensor.to_alpt_bytes();
        assert_eq!(PredictionTensor::from_alpt_bytes(&bytes).unwrap(), tensor);
    }
});
