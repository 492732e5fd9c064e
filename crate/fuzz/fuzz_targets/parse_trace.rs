#![no_main]

use libfuzzer_sys::fuzz_target;
use rmader_core::harness::trace::{parse_trace, trace_to_string};

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = parse_trace(data) {
        let text = trace_to_string(&records);
        let back = parse_trace(text.as_bytes()).expect("written trace reparses");
        assert_eq!(back, records);
    }
});
