#![no_main]

use graphwalk_qa::graph::KnowledgeGraph;
use libfuzzer_sys::fuzz_target;

// Input is entities, relationships and chunks JSONL separated by NUL bytes.
fuzz_target!(|data: &[u8]| {
    let mut parts = data.splitn(3, |b| *b == 0);
    let entities = parts.next().unwrap_or_default();
    let relationships = parts.next().unwrap_or_default();
    let chunks = parts.next().unwrap_or_default();
    if let Ok(g) = KnowledgeGraph::from_readers(entities, relationships, chunks, ["e", "r", "c"]) {
        for (id, neighbors) in g.adjacency() {
            assert!(!neighbors.contains(id));
            for n in neighbors {
                assert!(g.neighbors(n.as_str()).unwrap().contains(id));
            }
        }
    }
});
