#![no_main]

use std::sync::OnceLock;

use graphwalk_qa::context::{parse_contexts, TokenCounter};
use graphwalk_qa::graph::{Entity, EntityId, KnowledgeGraph, Relationship};
use graphwalk_qa::seeds::StopWordPolicy;
use graphwalk_qa::walk::{compress, WalkConfig};
use libfuzzer_sys::fuzz_target;

fn graph() -> &'static KnowledgeGraph {
    static G: OnceLock<KnowledgeGraph> = OnceLock::new();
    G.get_or_init(|| {
        let entities = ["Alpha", "Beta", "Gamma", "Delta"]
            .iter()
            .map(|n| Entity { id: EntityId(n.to_string()), name: n.to_string(), description: String::new() })
            .collect();
        let rel = |a: &str, b: &str| Relationship {
            source: EntityId(a.into()),
            target: EntityId(b.into()),
            predicate: String::new(),
            description: String::new(),
        };
        KnowledgeGraph::build(entities, vec![rel("Alpha", "Beta"), rel("Beta", "Gamma")], vec![]).unwrap()
    })
}

// First line is the question, the rest is contexts JSONL.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let (question, body) = text.split_once('\n').unwrap_or((text, ""));
    let Ok(contexts) = parse_contexts(body.as_bytes(), "fuzz") else { return };
    let cfg = WalkConfig::new(3, 64, TokenCounter::default()).unwrap();
    let policy = StopWordPolicy::default();
    for c in contexts {
        let out = compress(graph(), &c, question, &cfg, &policy).unwrap();
        if out.stats.fallback {
            assert_eq!(out.rendered, c.render());
        } else {
            assert!(cfg.counter.count(&out.rendered) <= 64);
        }
    }
});
