#![no_main]

use libfuzzer_sys::fuzz_target;
use subsetsearch::acquisition::PredictionTensor;

fuzz_target!(|data: &[u8]| {
    let Ok(tensor) = PredictionTensor::read_csv(data) else {
        return;
    };
    let mut out = Vec::new();
    tensor.write_csv(&mut out).unwrap();
    assert_eq!(PredictionTensor::read_csv(out.as_slice()).unwrap(), tensor);
});
