#![no_main]

use graphwalk_qa::context::parse_questions;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = parse_questions(data, "fuzz");
});
