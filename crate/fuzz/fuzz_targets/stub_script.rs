#![no_main]

use graphwalk_qa::gateway::StubScript;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = StubScript::parse(data, "fuzz");
});
