#![no_main]

use graphwalk_qa::prompt::parse_route;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(raw) = std::str::from_utf8(data) {
        let _ = parse_route(raw);
    }
});
