//! Graph-walk context compression.
//!
//! Seeds from [`match_seeds`] are expanded by a multi-source BFS bounded by
//! `max_depth`, then by one round of chunk co-occurrence. The retrieved
//! context is filtered and reordered by hop distance and packed into the
//! token budget. Items are taken in a single global priority order and
//! packing stops at the first item that does not fit, so the output for a
//! larger budget always extends the output for a smaller one.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::context::{render_sections, RetrievedContext, TokenCounter};
use crate::error::{Error, Result};
use crate::graph::{ChunkId, EntityId, KnowledgeGraph};
use crate::seeds::{content_words, match_seeds, words, StopWordPolicy};

pub const DEFAULT_MAX_DEPTH: u32 = 3;
pub const DEFAULT_BUDGET_TOKENS: usize = 4000;

pub const SOURCES_HEADER: &str = "## Sources";
pub const REPORTS_HEADER: &str = "## Reports";

pub fn hop_header(hop: u32) -> String {
    format!("## Hop {hop}")
}

#[derive(Debug, Clone)]
pub struct WalkConfig {
    pub max_depth: u32,
    pub budget_tokens: usize,
    pub counter: TokenCounter,
}

impl WalkConfig {
    pub fn new(max_depth: u32, budget_tokens: usize, counter: TokenCounter) -> Result<Self> {
        if max_depth < 1 {
            return Err(Error::Usage("max_depth must be at least 1".into()));
        }
        if budget_tokens < 1 {
            return Err(Error::Usage("budget_tokens must be at least 1".into()));
        }
        Ok(WalkConfig {
            max_depth,
            budget_tokens,
            counter,
        })
    }
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            max_depth: DEFAULT_MAX_DEPTH,
            budget_tokens: DEFAULT_BUDGET_TOKENS,
            counter: TokenCounter::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HopOrigin {
    Bfs,
    Cooccurrence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HopEntry {
    pub distance: u32,
    pub origin: HopOrigin,
}

/// Hop distance and provenance of every entity in the reasoning subgraph.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HopMap {
    entries: BTreeMap<EntityId, HopEntry>,
}

impl HopMap {
    pub fn get(&self, id: &str) -> Option<HopEntry> {
        self.entries.get(id).copied()
    }

    pub fn distance(&self, id: &str) -> Option<u32> {
        self.entries.get(id).map(|e| e.distance)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entries.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&EntityId, &HopEntry)> {
        self.entries.iter()
    }

    pub fn count_origin(&self, origin: HopOrigin) -> usize {
        self.entries.values().filter(|e| e.origin == origin).count()
    }

    pub fn distances(&self) -> BTreeMap<EntityId, u32> {
        self.entries
            .iter()
            .map(|(k, v)| (k.clone(), v.distance))
            .collect()
    }

    fn insert(&mut self, id: EntityId, entry: HopEntry) {
        self.entries.insert(id, entry);
    }
}

/// Multi-source BFS over the undirected adjacency; entities farther than
/// `max_depth` from every seed are absent.
pub fn bfs_hops<'a, I>(graph: &KnowledgeGraph, seeds: I, max_depth: u32) -> Result<HopMap>
where
    I: IntoIterator<Item = &'a str>,
{
    if max_depth < 1 {
        return Err(Error::Usage("max_depth must be at least 1".into()));
    }
    let mut map = HopMap::default();
    let mut queue = VecDeque::new();
    for seed in seeds {
        if !graph.contains_entity(seed) {
            return Err(Error::NotFound(format!("seed entity {seed}")));
        }
        if !map.contains(seed) {
            map.insert(
                EntityId::from(seed),
                HopEntry {
                    distance: 0,
                    origin: HopOrigin::Bfs,
                },
            );
            queue.push_back(EntityId::from(seed));
        }
    }
    while let Some(current) = queue.pop_front() {
        let d = map.distance(current.as_str()).expect("queued entities are mapped");
        if d == max_depth {
            continue;
        }
        for next in graph.neighbors(current.as_str())? {
            if !map.contains(next.as_str()) {
                map.insert(
                    next.clone(),
                    HopEntry {
                        distance: d + 1,
                        origin: HopOrigin::Bfs,
                    },
                );
                queue.push_back(next.clone());
            }
        }
    }
    Ok(map)
}

/// Adds entities that share a chunk with a BFS-reached entity. Each added
/// entity sits one hop past its closest bridging entity. Only BFS entries
/// act as bridges, so expansion does not chain.
pub fn cooccur_expand(graph: &KnowledgeGraph, hops: &HopMap) -> HopMap {
    let mut added: BTreeMap<EntityId, u32> = BTreeMap::new();
    for chunk in graph.chunks() {
        let bridge = chunk
            .mentioned_entities
            .iter()
            .filter_map(|e| match hops.get(e.as_str()) {
                Some(HopEntry {
                    distance,
                    origin: HopOrigin::Bfs,
                }) => Some(distance),
                _ => None,
            })
            .min();
        let Some(bridge) = bridge else { continue };
        for e in &chunk.mentioned_entities {
            if hops.contains(e.as_str()) {
                continue;
            }
            let slot = added.entry(e.clone()).or_insert(bridge + 1);
            *slot = (*slot).min(bridge + 1);
        }
    }
    let mut out = hops.clone();
    for (id, distance) in added {
        out.insert(
            id,
            HopEntry {
                distance,
                origin: HopOrigin::Cooccurrence,
            },
        );
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChunkTier {
    #[serde(rename = "1")]
    Tier1,
    #[serde(rename = "2")]
    Tier2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionStats {
    pub input_tokens: usize,
    pub output_tokens: usize,
    pub compression_ratio: f64,
    pub fallback: bool,
    pub seed_count: usize,
    pub bfs_entities: usize,
    pub cooccurrence_entities: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressedContext {
    pub question_id: String,
    pub rendered: String,
    pub included_entities: HopMap,
    pub included_chunks: Vec<(ChunkId, ChunkTier)>,
    pub stats: CompressionStats,
}

/// Record written to `compressed.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressedDump {
    pub question_id: String,
    pub rendered: String,
    pub stats: CompressionStats,
}

impl From<&CompressedContext> for CompressedDump {
    fn from(c: &CompressedContext) -> Self {
        CompressedDump {
            question_id: c.question_id.clone(),
            rendered: c.rendered.clone(),
            stats: c.stats.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Group {
    Hop(u32),
    Sources,
    Reports,
}

struct Item<'a> {
    group: Group,
    text: &'a str,
    kind: ItemKind<'a>,
}

enum ItemKind<'a> {
    Entity(&'a EntityId),
    Relationship(&'a EntityId, &'a EntityId),
    Chunk(&'a ChunkId, ChunkTier),
    Report,
}

/// Builds the priority-ordered item list for a context.
fn prioritize<'a>(
    graph: &KnowledgeGraph,
    ctx: &'a RetrievedContext,
    hops: &HopMap,
    question: &str,
    policy: &StopWordPolicy,
) -> Vec<Item<'a>> {
    // (hop, kind rank, id key, original index)
    let mut descriptions: Vec<(u32, u8, String, usize, Item<'a>)> = Vec::new();
    for (idx, e) in ctx.entity_descriptions.iter().enumerate() {
        if let Some(d) = hops.distance(e.id.as_str()) {
            descriptions.push((
                d,
                0,
                e.id.to_string(),
                idx,
                Item {
                    group: Group::Hop(d),
                    text: &e.text,
                    kind: ItemKind::Entity(&e.id),
                },
            ));
        }
    }
    for (idx, r) in ctx.relationship_descriptions.iter().enumerate() {
        let hop = [&r.source, &r.target]
            .iter()
            .filter_map(|id| hops.distance(id.as_str()))
            .min();
        if let Some(d) = hop {
            descriptions.push((
                d,
                1,
                format!("{}\u{0}{}", r.source, r.target),
                idx,
                Item {
                    group: Group::Hop(d),
                    text: &r.text,
                    kind: ItemKind::Relationship(&r.source, &r.target),
                },
            ));
        }
    }
    descriptions.sort_by(|a, b| (a.0, a.1, &a.2, a.3).cmp(&(b.0, b.1, &b.2, b.3)));

    let keywords = content_words(question, policy);
    let mut tier1: Vec<(usize, &str, usize, Item<'a>)> = Vec::new();
    let mut tier2: Vec<(usize, &str, usize, Item<'a>)> = Vec::new();
    for (idx, c) in ctx.text_chunks.iter().enumerate() {
        let mentions = graph
            .chunk(c.id.as_str())
            .map(|gc| {
                gc.mentioned_entities
                    .iter()
                    .filter(|e| hops.contains(e.as_str()))
                    .count()
            })
            .unwrap_or(0);
        if mentions > 0 {
            tier1.push((
                mentions,
                c.id.as_str(),
                idx,
                Item {
                    group: Group::Sources,
                    text: &c.text,
                    kind: ItemKind::Chunk(&c.id, ChunkTier::Tier1),
                },
            ));
            continue;
        }
        let chunk_words: BTreeSet<String> = words(&c.text).into_iter().collect();
        let shared = keywords.intersection(&chunk_words).count();
        if shared > 0 {
            tier2.push((
                shared,
                c.id.as_str(),
                idx,
                Item {
                    group: Group::Sources,
                    text: &c.text,
                    kind: ItemKind::Chunk(&c.id, ChunkTier::Tier2),
                },
            ));
        }
    }
    let by_rank = |a: &(usize, &str, usize, Item<'a>), b: &(usize, &str, usize, Item<'a>)| {
        b.0.cmp(&a.0).then_with(|| a.1.cmp(b.1)).then_with(|| a.2.cmp(&b.2))
    };
    tier1.sort_by(by_rank);
    tier2.sort_by(by_rank);

    let mut items: Vec<Item<'a>> = descriptions.into_iter().map(|t| t.4).collect();
    items.extend(tier1.into_iter().map(|t| t.3));
    items.extend(tier2.into_iter().map(|t| t.3));
    items.extend(ctx.community_reports.iter().map(|r| Item {
        group: Group::Reports,
        text: r,
        kind: ItemKind::Report,
    }));
    items
}

fn group_header(group: Group) -> String {
    match group {
        Group::Hop(h) => hop_header(h),
        Group::Sources => SOURCES_HEADER.to_string(),
        Group::Reports => REPORTS_HEADER.to_string(),
    }
}

/// Renders already-ordered items, grouping consecutive items under headers.
fn render_items(items: &[&Item<'_>]) -> String {
    let mut sections: Vec<(String, Vec<&str>)> = Vec::new();
    let mut current: Option<Group> = None;
    for item in items {
        if current != Some(item.group) {
            sections.push((group_header(item.group), Vec::new()));
            current = Some(item.group);
        }
        sections.last_mut().expect("section pushed").1.push(item.text);
    }
    render_sections(&sections)
}

/// Text appended to a rendering when `item` follows `prev`.
fn addition(prev: Option<Group>, item: &Item<'_>) -> String {
    match prev {
        Some(g) if g == item.group => format!("{}\n", item.text),
        Some(_) => format!("\n{}\n{}\n", group_header(item.group), item.text),
        None => format!("{}\n{}\n", group_header(item.group), item.text),
    }
}

/// Incremental token accounting for an append-only rendering.
struct Packer<'c> {
    counter: &'c TokenCounter,
    text: String,
    chars: usize,
}

impl<'c> Packer<'c> {
    fn tokens_with(&self, extra: &str) -> usize {
        match self.counter {
            TokenCounter::Approximate { chars_per_token } => {
                ((self.chars + extra.chars().count()) as f64 / chars_per_token).ceil() as usize
            }
            TokenCounter::Pluggable(f) => {
                let mut s = String::with_capacity(self.text.len() + extra.len());
                s.push_str(&self.text);
                s.push_str(extra);
                f(&s)
            }
        }
    }

    fn push(&mut self, extra: &str) {
        self.chars += extra.chars().count();
        self.text.push_str(extra);
    }
}

/// Packs the prioritized items into `cfg.budget_tokens`.
pub fn assemble(
    graph: &KnowledgeGraph,
    ctx: &RetrievedContext,
    hops: &HopMap,
    question: &str,
    cfg: &WalkConfig,
    policy: &StopWordPolicy,
) -> CompressedContext {
    let items = prioritize(graph, ctx, hops, question, policy);
    let mut packer = Packer {
        counter: &cfg.counter,
        text: String::new(),
        chars: 0,
    };
    let mut taken = 0;
    let mut prev: Option<Group> = None;
    for item in &items {
        let extra = addition(prev, item);
        if packer.tokens_with(&extra) > cfg.budget_tokens {
            break;
        }
        packer.push(&extra);
        prev = Some(item.group);
        taken += 1;
    }
    let included = &items[..taken];
    debug_assert_eq!(
        packer.text,
        render_items(&included.iter().collect::<Vec<_>>())
    );

    let mut included_entities = HopMap::default();
    let mut included_chunks = Vec::new();
    let note = |id: &EntityId, map: &mut HopMap| {
        if let Some(entry) = hops.get(id.as_str()) {
            map.insert(id.clone(), entry);
        }
    };
    for item in included {
        match item.kind {
            ItemKind::Entity(id) => note(id, &mut included_entities),
            ItemKind::Relationship(a, b) => {
                note(a, &mut included_entities);
                note(b, &mut included_entities);
            }
            ItemKind::Chunk(id, tier) => included_chunks.push((id.clone(), tier)),
            ItemKind::Report => {}
        }
    }

    let input_tokens = cfg.counter.count(&ctx.render());
    let output_tokens = cfg.counter.count(&packer.text);
    CompressedContext {
        question_id: ctx.question_id.clone(),
        rendered: packer.text,
        included_entities,
        included_chunks,
        stats: CompressionStats {
            input_tokens,
            output_tokens,
            compression_ratio: ratio(input_tokens, output_tokens),
            fallback: false,
            seed_count: hops.iter().filter(|(_, e)| e.distance == 0).count(),
            bfs_entities: hops.count_origin(HopOrigin::Bfs),
            cooccurrence_entities: hops.count_origin(HopOrigin::Cooccurrence),
        },
    }
}

fn ratio(input: usize, output: usize) -> f64 {
    if input == 0 {
        0.0
    } else {
        1.0 - output as f64 / input as f64
    }
}

/// Seed matching, BFS, co-occurrence expansion and assembly. Without seeds
/// the full rendering is returned unchanged with `fallback` set.
pub fn compress(
    graph: &KnowledgeGraph,
    ctx: &RetrievedContext,
    question: &str,
    cfg: &WalkConfig,
    policy: &StopWordPolicy,
) -> Result<CompressedContext> {
    let seeds = match_seeds(question, graph, policy);
    if seeds.is_empty() {
        let rendered = ctx.render();
        let tokens = cfg.counter.count(&rendered);
        return Ok(CompressedContext {
            question_id: ctx.question_id.clone(),
            rendered,
            included_entities: HopMap::default(),
            included_chunks: ctx
                .text_chunks
                .iter()
                .map(|c| (c.id.clone(), ChunkTier::Tier1))
                .collect(),
            stats: CompressionStats {
                input_tokens: tokens,
                output_tokens: tokens,
                compression_ratio: 0.0,
                fallback: true,
                seed_count: 0,
                bfs_entities: 0,
                cooccurrence_entities: 0,
            },
        });
    }
    let bfs = bfs_hops(
        graph,
        seeds.iter().map(|s| s.entity_id.as_str()),
        cfg.max_depth,
    )?;
    let expanded = cooccur_expand(graph, &bfs);
    let mut out = assemble(graph, ctx, &expanded, question, cfg, policy);
    out.stats.seed_count = seeds.len();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::{ChunkPassage, EntityDescription, RelationshipDescription};
    use crate::graph::test_support::{chunk, graph};
    use proptest::prelude::*;

    fn chain() -> KnowledgeGraph {
        graph(
            &["A", "B", "C", "D", "E"],
            &[("A", "B"), ("B", "C"), ("C", "D"), ("D", "E")],
            vec![],
        )
    }

    #[test]
    fn bfs_chain_depth_three() {
        let h = bfs_hops(&chain(), ["A"], 3).unwrap();
        let d = h.distances();
        assert_eq!(d.len(), 4);
        assert_eq!(d["A"], 0);
        assert_eq!(d["B"], 1);
        assert_eq!(d["C"], 2);
        assert_eq!(d["D"], 3);
        assert!(!h.contains("E"));
        assert!(h.iter().all(|(_, e)| e.origin == HopOrigin::Bfs));
    }

    #[test]
    fn bfs_nearest_seed() {
        let h = bfs_hops(&chain(), ["A", "E"], 3).unwrap();
        assert_eq!(h.distance("C"), Some(2));
        assert_eq!(h.distance("B"), Some(1));
        assert_eq!(h.distance("D"), Some(1));
    }

    #[test]
    fn bfs_edgeless_and_errors() {
        let g = graph(&["A", "B"], &[], vec![]);
        let h = bfs_hops(&g, ["A"], 3).unwrap();
        assert_eq!(h.len(), 1);
        assert_eq!(h.distance("A"), Some(0));
        assert!(matches!(bfs_hops(&g, ["Z"], 3), Err(Error::NotFound(_))));
        assert!(matches!(bfs_hops(&g, ["A"], 0), Err(Error::Usage(_))));
    }

    #[test]
    fn cooccurrence_adds_unreached_entity() {
        let g = graph(
            &["A", "B", "X"],
            &[("A", "B")],
            vec![chunk("c1", "B and X", &["B", "X"])],
        );
        let h = bfs_hops(&g, ["A"], 3).unwrap();
        let e = cooccur_expand(&g, &h);
        assert_eq!(
            e.get("X"),
            Some(HopEntry { distance: 2, origin: HopOrigin::Cooccurrence })
        );
        assert_eq!(e.get("B"), h.get("B"));
    }

    #[test]
    fn cooccurrence_fixed_point_without_bridges() {
        let g = graph(
            &["A", "B", "X", "Y"],
            &[("A", "B")],
            vec![chunk("c1", "X and Y", &["X", "Y"])],
        );
        let h = bfs_hops(&g, ["A"], 3).unwrap();
        assert_eq!(cooccur_expand(&g, &h), h);
    }

    #[test]
    fn cooccurrence_takes_min_over_bridges() {
        // A-B-C-D chain; X co-occurs with D (hop 3) and B (hop 1).
        let g = graph(
            &["A", "B", "C", "D", "X"],
            &[("A", "B"), ("B", "C"), ("C", "D")],
            vec![chunk("c1", "D X", &["D", "X"]), chunk("c2", "B X", &["B", "X"])],
        );
        let h = bfs_hops(&g, ["A"], 3).unwrap();
        let e = cooccur_expand(&g, &h);
        assert_eq!(e.distance("X"), Some(2));
    }

    #[test]
    fn cooccurrence_matches_bridge_enumeration() {
        // Exhaustively place X in every subset of chunks over a 4-node chain
        // and compare with the min-over-bridges rule computed directly.
        let nodes = ["A", "B", "C", "D"];
        for mask in 0u32..16 {
            let chunks: Vec<_> = (0..4)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| chunk(&format!("c{i}"), "t", &[nodes[i], "X"]))
                .collect();
            let g = graph(
                &["A", "B", "C", "D", "X"],
                &[("A", "B"), ("B", "C"), ("C", "D")],
                chunks,
            );
            let h = bfs_hops(&g, ["A"], 2).unwrap();
            let e = cooccur_expand(&g, &h);
            // D sits at hop 3, outside depth 2, so it never bridges.
            let expected_x = (0..3u32).filter(|i| mask & (1 << i) != 0).map(|i| i + 1).min();
            assert_eq!(e.distance("X"), expected_x, "mask {mask:04b}");
            // D only shares a chunk with X, which is not a BFS entity.
            assert_eq!(e.distance("D"), None);
        }
    }

    fn five_item_fixture() -> (KnowledgeGraph, RetrievedContext) {
        let g = graph(
            &["A", "B", "C"],
            &[("A", "B"), ("B", "C")],
            vec![chunk("c1", "chunk one", &["A", "B", "C"]), chunk("c2", "chunk two", &["C"])],
        );
        let ctx = RetrievedContext {
            question_id: "q".into(),
            entity_descriptions: vec![
                EntityDescription { id: "B".into(), text: "bbbbbbbb".into() },
                EntityDescription { id: "A".into(), text: "aaaaaaaa".into() },
            ],
            relationship_descriptions: vec![RelationshipDescription {
                source: "A".into(),
                target: "B".into(),
                text: "a-b-rel!".into(),
            }],
            community_reports: vec!["report".into()],
            text_chunks: vec![
                ChunkPassage { id: "c2".into(), text: "chunk two".into() },
                ChunkPassage { id: "c1".into(), text: "chunk one".into() },
            ],
        };
        (g, ctx)
    }

    fn cfg(budget: usize) -> WalkConfig {
        WalkConfig::new(3, budget, TokenCounter::approximate(1.0).unwrap()).unwrap()
    }

    #[test]
    fn assemble_everything_fits() {
        let (g, ctx) = five_item_fixture();
        let h = bfs_hops(&g, ["A"], 3).unwrap();
        let out = assemble(&g, &ctx, &h, "q", &cfg(10_000), &StopWordPolicy::default());
        assert_eq!(
            out.rendered,
            "## Hop 0\naaaaaaaa\na-b-rel!\n\n## Hop 1\nbbbbbbbb\n\n## Sources\nchunk one\nchunk two\n\n## Reports\nreport\n"
        );
        assert_eq!(out.stats.output_tokens, out.rendered.chars().count());
        assert_eq!(
            out.included_chunks,
            vec![("c1".into(), ChunkTier::Tier1), ("c2".into(), ChunkTier::Tier1)]
        );
    }

    #[test]
    fn assemble_budget_for_descriptions_only() {
        // Replayed by hand with one token per char:
        // "## Hop 0\n" 9 + "aaaaaaaa\n" 9 = 18; "a-b-rel!\n" -> 27;
        // "\n## Hop 1\nbbbbbbbb\n" 19 -> 46; "\n## Sources\nchunk one\n" 22 -> 68.
        let (g, ctx) = five_item_fixture();
        let h = bfs_hops(&g, ["A"], 3).unwrap();
        let out = assemble(&g, &ctx, &h, "q", &cfg(60), &StopWordPolicy::default());
        assert_eq!(out.rendered, "## Hop 0\naaaaaaaa\na-b-rel!\n\n## Hop 1\nbbbbbbbb\n");
        assert_eq!(out.stats.output_tokens, 46);
        assert!(out.included_chunks.is_empty());
        assert!(!out.rendered.contains("Reports"));
        let tight = assemble(&g, &ctx, &h, "q", &cfg(27), &StopWordPolicy::default());
        assert_eq!(tight.stats.output_tokens, 27);
    }

    #[test]
    fn tier1_ranked_by_mention_count() {
        let g = graph(
            &["A", "B", "C", "D"],
            &[("A", "B"), ("B", "C")],
            vec![chunk("c_low", "low", &["A"]), chunk("c_high", "high", &["A", "B", "C"])],
        );
        let ctx = RetrievedContext {
            question_id: "q".into(),
            entity_descriptions: vec![],
            relationship_descriptions: vec![],
            community_reports: vec![],
            text_chunks: vec![
                ChunkPassage { id: "c_low".into(), text: "low".into() },
                ChunkPassage { id: "c_high".into(), text: "high".into() },
            ],
        };
        let h = bfs_hops(&g, ["A"], 3).unwrap();
        let out = assemble(&g, &ctx, &h, "q", &cfg(1000), &StopWordPolicy::default());
        assert_eq!(out.rendered, "## Sources\nhigh\nlow\n");
    }

    #[test]
    fn tier2_needs_shared_keyword() {
        let g = graph(&["A", "Z"], &[], vec![chunk("k1", "", &["Z"]), chunk("k2", "", &["Z"]), chunk("k3", "", &["Z"])]);
        let ctx = RetrievedContext {
            question_id: "q".into(),
            entity_descriptions: vec![],
            relationship_descriptions: vec![],
            community_reports: vec![],
            text_chunks: vec![
                ChunkPassage { id: "k1".into(), text: "the river flows".into() },
                ChunkPassage { id: "k2".into(), text: "a river in idaho".into() },
                ChunkPassage { id: "k3".into(), text: "the of which".into() },
            ],
        };
        let h = bfs_hops(&g, ["A"], 3).unwrap();
        let out = assemble(&g, &ctx, &h, "Which river in Idaho?", &cfg(1000), &StopWordPolicy::default());
        assert_eq!(
            out.included_chunks,
            vec![("k2".into(), ChunkTier::Tier2), ("k1".into(), ChunkTier::Tier2)]
        );
    }

    #[test]
    fn fallback_without_seeds() {
        let (g, ctx) = five_item_fixture();
        let out = compress(&g, &ctx, "Nothing here?", &WalkConfig::default(), &StopWordPolicy::default()).unwrap();
        assert!(out.stats.fallback);
        assert_eq!(out.rendered, ctx.render());
        assert_eq!(out.stats.compression_ratio, 0.0);
        assert_eq!(out.stats.input_tokens, out.stats.output_tokens);
    }

    #[test]
    fn edgeless_graph_still_assembles() {
        let g = graph(&["Alpha", "Beta"], &[], vec![]);
        let ctx = RetrievedContext {
            question_id: "q".into(),
            entity_descriptions: vec![
                EntityDescription { id: "Alpha".into(), text: "alpha text".into() },
                EntityDescription { id: "Beta".into(), text: "beta text".into() },
            ],
            relationship_descriptions: vec![],
            community_reports: vec![],
            text_chunks: vec![],
        };
        let out = compress(&g, &ctx, "Where is Alpha?", &WalkConfig::default(), &StopWordPolicy::default()).unwrap();
        assert!(!out.stats.fallback);
        assert_eq!(out.included_entities.len(), 1);
        assert_eq!(out.rendered, "## Hop 0\nalpha text\n");
    }

    #[test]
    fn cooccurrence_entities_rank_after_depth_cap() {
        let g = graph(
            &["A", "B", "X"],
            &[("A", "B")],
            vec![chunk("c", "t", &["B", "X"])],
        );
        let ctx = RetrievedContext {
            question_id: "q".into(),
            entity_descriptions: vec![
                EntityDescription { id: "X".into(), text: "x".into() },
                EntityDescription { id: "B".into(), text: "b".into() },
            ],
            relationship_descriptions: vec![],
            community_reports: vec![],
            text_chunks: vec![],
        };
        let h = cooccur_expand(&g, &bfs_hops(&g, ["A"], 1).unwrap());
        assert_eq!(h.distance("X"), Some(2));
        let out = assemble(&g, &ctx, &h, "q", &cfg(1000), &StopWordPolicy::default());
        assert_eq!(out.rendered, "## Hop 1\nb\n\n## Hop 2\nx\n");
    }

    proptest! {
        #[test]
        fn hop_headers_ascend(n_ents in 1usize..8, budget in 10usize..400, seed_ix in 0usize..8) {
            let ids: Vec<String> = (0..8).map(|i| format!("E{i}")).collect();
            let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
            let edges: Vec<(&str, &str)> = (0..7).map(|i| (refs[i], refs[i + 1])).collect();
            let g = graph(&refs, &edges, vec![]);
            let ctx = RetrievedContext {
                question_id: "q".into(),
                entity_descriptions: refs.iter().take(n_ents).rev().map(|i| EntityDescription { id: (*i).into(), text: format!("desc {i}") }).collect(),
                relationship_descriptions: edges.iter().map(|(a, b)| RelationshipDescription { source: (*a).into(), target: (*b).into(), text: format!("{a}->{b}") }).collect(),
                community_reports: vec![],
                text_chunks: vec![],
            };
            let h = bfs_hops(&g, [refs[seed_ix]], 3).unwrap();
            let out = assemble(&g, &ctx, &h, "q", &cfg(budget), &StopWordPolicy::default());
            let hops: Vec<u32> = out.rendered.lines()
                .filter_map(|l| l.strip_prefix("## Hop "))
                .map(|n| n.parse().unwrap())
                .collect();
            prop_assert!(hops.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(out.stats.output_tokens <= budget);
        }
    }
}
