#![no_main]

use dkfd_core::GridFunction;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(u) = GridFunction::read_csv(data) {
        let mut buf = Vec::new();
        u.write_csv(&mut buf).expect("grid function serializes");
        let back = GridFunction::read_csv(buf.as_slice()).expect("written grid function parses");
        assert_eq!(back.grid(), u.grid());
    }
});
