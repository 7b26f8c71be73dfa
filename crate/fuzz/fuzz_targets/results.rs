#![no_main]

use graphwalk_qa::eval::AnswerRecord;
use graphwalk_qa::jsonl::{read_jsonl, to_jsonl_string};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = read_jsonl::<AnswerRecord, _>(data, "fuzz") {
        let again = to_jsonl_string(&records);
        let back: Vec<AnswerRecord> = read_jsonl(again.as_bytes(), "again").unwrap();
        assert_eq!(back.len(), records.len());
    }
});
