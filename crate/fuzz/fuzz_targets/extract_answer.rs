#![no_main]

use graphwalk_qa::prompt::{extract_answer, AnswerStatus};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(raw) = std::str::from_utf8(data) {
        let parsed = extract_answer(raw);
        match parsed.status() {
            AnswerStatus::Answered => {
                let a = parsed.final_answer.as_deref().unwrap();
                assert!(!a.is_empty() && a.trim() == a && !a.contains('\n'));
            }
            AnswerStatus::Abstained => assert!(parsed.final_answer.is_none()),
            AnswerStatus::ExtractionFailed => assert!(parsed.prediction().is_empty()),
        }
    }
});
