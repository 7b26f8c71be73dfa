#![no_main]

use graphwalk_qa::seeds::StopWordPolicy;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = StopWordPolicy::parse(text);
    }
});
