#![no_main]

use dkfd_core::report::{parse_moment_csv, write_moment_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(rows) = parse_moment_csv(text) {
            let mut buf = Vec::new();
            write_moment_csv(&rows, &mut buf).expect("rows serialize");
            let back = parse_moment_csv(std::str::from_utf8(&buf).unwrap()).expect("written table parses");
            assert_eq!(back.len(), rows.len());
        }
    }
});
