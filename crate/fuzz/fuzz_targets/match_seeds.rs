#![no_main]

use std::sync::OnceLock;

use graphwalk_qa::graph::{Entity, EntityId, KnowledgeGraph};
use graphwalk_qa::seeds::{match_seeds, StopWordPolicy};
use libfuzzer_sys::fuzz_target;

fn graph() -> &'static KnowledgeGraph {
    static G: OnceLock<KnowledgeGraph> = OnceLock::new();
    G.get_or_init(|| {
        let names = ["Paradise Creek", "Snake River", "Idaho", "The Author of Beltraffio", "Île-de-France", "X"];
        let entities = names
            .iter()
            .enumerate()
            .map(|(i, n)| Entity { id: EntityId(format!("e{i}")), name: n.to_string(), description: String::new() })
            .collect();
        KnowledgeGraph::build(entities, vec![], vec![]).unwrap()
    })
}

fuzz_target!(|data: &[u8]| {
    if let Ok(question) = std::str::from_utf8(data) {
        let policy = StopWordPolicy::default();
        let seeds = match_seeds(question, graph(), &policy);
        let upper = match_seeds(&question.to_uppercase(), graph(), &policy);
        if question.is_ascii() {
            assert_eq!(seeds, match_seeds(&question.to_lowercase(), graph(), &policy));
            assert_eq!(seeds.len(), upper.len());
        }
    }
});
