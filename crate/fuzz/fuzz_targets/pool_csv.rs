#![no_main]

use libfuzzer_sys::fuzz_target;
use subsetsearch::LabeledPool;

fuzz_target!(|data: &[u8]| {
    let Ok(pool) = LabeledPool::read_csv(data, None) else {
        return;
    };
    let mut out = Vec::new();
    pool.write_csv(&mut out).unwrap();
    let again = LabeledPool::read_csv(out.as_slice(), Some(pool.classes())).unwrap();
    assert_eq!(again.ids(), pool.ids());
    assert_eq!(again.labels(), pool.labels());
});
