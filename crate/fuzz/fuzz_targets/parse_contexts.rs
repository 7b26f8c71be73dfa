#![no_main]

use graphwalk_qa::context::parse_contexts;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(contexts) = parse_contexts(data, "fuzz") {
        for c in contexts {
            assert!(!c.is_empty());
            let _ = c.render();
        }
    }
});
