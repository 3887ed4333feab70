#![no_main]

use libfuzzer_sys::fuzz_target;
use subsetsearch::experiment::ResultsFile;

fuzz_target!(|data: &[u8]| {
    let _ = serde_json::from_slice::<ResultsFile>(data);
});
