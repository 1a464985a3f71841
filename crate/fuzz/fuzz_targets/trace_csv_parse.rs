#![no_main]

use ddsolve::harness::read_trace_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = read_trace_csv(data);
});
