#![no_main]

use libfuzzer_sys::fuzz_target;
use subsetsearch::subset::SubsetState;

fuzz_target!(|data: &[u8]| {
    let Ok(state) = SubsetState::read_csv(data) else {
        return;
    };
    let mut out = Vec::new();
    state.write_csv(&mut out).unwrap();
    assert_eq!(SubsetState::read_csv(out.as_slice()).unwrap(), state);
});
