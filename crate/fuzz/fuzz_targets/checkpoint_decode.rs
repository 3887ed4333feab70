#![no_main]

use libfuzzer_sys::fuzz_target;
use subsetsearch::learner::Checkpoint;

fuzz_target!(|data: &[u8]| {
    if let Ok(ckpt) = Checkpoint::from_bytes(data) {
        // weights are already f32-exact, so encoding is lossless
        let again = Checkpoint::from_bytes(&ckpt.to_bytes()).unwrap();
        assert_eq!(again, ckpt);
    }
});
