#![no_main]

use libfuzzer_sys::fuzz_target;
use rmader_core::harness::trace::{parse_ledger_csv, write_ledger_csv};

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = parse_ledger_csv(data) {
        let mut once = Vec::new();
        write_ledger_csv(&mut once, &rows).expect("ledger writes to memory");
        let back = parse_ledger_csv(once.as_slice()).expect("written ledger reparses");
        let mut twice = Vec::new();
        write_ledger_csv(&mut twice, &back).expect("ledger writes to memory");
        assert_eq!(twice, once);
    }
});
