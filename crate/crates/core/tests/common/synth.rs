//! Deterministic synthetic Graph-RAG world: a knowledge graph, per-question
//! retrieved contexts of roughly 10k tokens, and questions whose subject is
//! named verbatim so seed matching anchors it.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use graphwalk_qa::context::{
    ChunkPassage, EntityDescription, QuestionRecord, QuestionType, RelationshipDescription,
    RetrievedContext,
};
use graphwalk_qa::graph::{ChunkId, Entity, EntityId, Relationship, TextChunk};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SYLLABLES: [&str; 24] = [
    "kor", "vath", "bel", "mira", "dun", "sel", "tar", "ith", "on", "gal", "rem", "os", "val",
    "quin", "dra", "lo", "fen", "wick", "har", "ble", "sto", "ren", "ul", "mar",
];

const KINDS: [&str; 10] = [
    "Mill", "Keep", "Ford", "Hall", "Moor", "Dale", "Cove", "Fell", "Holt", "Wold",
];

const PREDICATES: [&str; 8] = [
    "was founded by",
    "supplies grain to",
    "is upriver of",
    "shares a charter with",
    "was rebuilt after",
    "trades wool with",
    "is governed from",
    "sent masons to",
];

const FILLER: &[&str] = &[
    "river", "harvest", "stone", "timber", "ledger", "charter", "season", "winter", "summer",
    "barley", "wool", "salt", "copper", "lantern", "archive", "mason", "steward", "council",
    "toll", "canal", "orchard", "quarry", "ferry", "granary", "festival", "census", "tithe",
    "boundary", "survey", "flood", "drought", "chapel", "cloister", "scribe", "merchant",
    "caravan", "weaver", "dyer", "tanner", "smith", "kiln", "well", "meadow", "hedgerow",
    "pasture", "flock", "herd", "cart", "wagon", "road", "milestone", "inn", "hearth", "bell",
    "record", "dispute", "treaty", "levy", "garrison", "watch", "beacon", "signal", "rampart",
    "moat", "gate", "courtyard", "cellar", "vault", "roof", "beam", "rafter", "thatch", "slate",
    "glass", "window", "spire", "nave", "aisle", "crypt", "relic", "pilgrim", "fair", "auction",
    "coin", "debt", "loan", "rent", "lease", "estate", "manor", "tenant", "bailiff", "reeve",
    "sheriff", "assize",
];

const CONNECTIVES: [&str; 8] = [
    "records show", "local accounts mention", "the surviving ledger lists", "older maps mark",
    "the council noted", "travellers described", "a later survey found", "the steward reported",
];

pub struct SynthDataset {
    pub entities: Vec<Entity>,
    pub relationships: Vec<Relationship>,
    pub chunks: Vec<TextChunk>,
    pub contexts: Vec<RetrievedContext>,
    pub questions: Vec<QuestionRecord>,
}

#[derive(Clone, Copy)]
pub struct SynthParams {
    pub entities: usize,
    pub edges: usize,
    pub chunks: usize,
    pub near_entities: usize,
    pub far_entities: usize,
    pub relationships: usize,
    pub near_chunks: usize,
    pub far_chunks: usize,
    pub reports: usize,
    pub report_words: usize,
}

impl SynthParams {
    /// Contexts of about 10k approximate tokens.
    pub fn realistic() -> Self {
        SynthParams {
            entities: 240,
            edges: 330,
            chunks: 600,
            near_entities: 15,
            far_entities: 12,
            relationships: 26,
            near_chunks: 12,
            far_chunks: 9,
            reports: 3,
            report_words: 200,
        }
    }

    /// Small contexts for fast end-to-end runs.
    pub fn small() -> Self {
        SynthParams {
            entities: 120,
            edges: 170,
            chunks: 200,
            near_entities: 6,
            far_entities: 4,
            relationships: 8,
            near_chunks: 3,
            far_chunks: 2,
            reports: 1,
            report_words: 60,
        }
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn filler(rng: &mut ChaCha8Rng, words: usize) -> String {
    let mut out = Vec::with_capacity(words + words / 8);
    let mut in_sentence = 0;
    for _ in 0..words {
        if in_sentence == 0 {
            out.push(capitalize(CONNECTIVES.choose(rng).unwrap()));
        }
        out.push(FILLER.choose(rng).unwrap().to_string());
        in_sentence += 1;
        if in_sentence >= rng.random_range(6..11) {
            if let Some(last) = out.last_mut() {
                last.push('.');
            }
            in_sentence = 0;
        }
    }
    if let Some(last) = out.last_mut() {
        if !last.ends_with('.') {
            last.push('.');
        }
    }
    out.join(" ")
}

fn filler_between(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> String {
    let words = rng.random_range(lo..hi);
    filler(rng, words)
}

fn bfs(adj: &BTreeMap<usize, BTreeSet<usize>>, start: usize, depth: u32) -> BTreeMap<usize, u32> {
    let mut dist = BTreeMap::from([(start, 0u32)]);
    let mut queue = VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        let d = dist[&u];
        if d == depth {
            continue;
        }
        for &v in adj.get(&u).into_iter().flatten() {
            if let std::collections::btree_map::Entry::Vacant(e) = dist.entry(v) {
                e.insert(d + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

pub fn generate(n_questions: usize, seed: u64, p: SynthParams) -> SynthDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut names = BTreeSet::new();
    let mut entities = Vec::with_capacity(p.entities);
    while entities.len() < p.entities {
        let parts = rng.random_range(2..4);
        let stem: String = (0..parts).map(|_| *SYLLABLES.choose(&mut rng).unwrap()).collect();
        let name = format!("{} {}", capitalize(&stem), KINDS.choose(&mut rng).unwrap());
        if !names.insert(stem) {
            continue;
        }
        let i = entities.len();
        let description = format!(
            "{name} is a {} of the {} valley. {}",
            name.rsplit(' ').next().unwrap().to_lowercase(),
            ["northern", "southern", "eastern", "western"][i % 4],
            filler_between(&mut rng, 34, 52)
        );
        entities.push(Entity {
            id: EntityId(format!("e{i:03}")),
            name,
            description,
        });
    }

    let mut adj: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    let mut relationships = Vec::new();
    let mut edge_set = BTreeSet::new();
    // A spanning path keeps the graph connected; the rest are random chords.
    let mut order: Vec<usize> = (0..p.entities).collect();
    order.shuffle(&mut rng);
    let mut pairs: Vec<(usize, usize)> = order.windows(2).map(|w| (w[0], w[1])).collect();
    while pairs.len() < p.edges {
        let a = rng.random_range(0..p.entities);
        let b = rng.random_range(0..p.entities);
        if a != b {
            pairs.push((a, b));
        }
    }
    for (a, b) in pairs {
        if !edge_set.insert((a.min(b), a.max(b))) {
            continue;
        }
        adj.entry(a).or_default().insert(b);
        adj.entry(b).or_default().insert(a);
        let predicate = PREDICATES.choose(&mut rng).unwrap().to_string();
        relationships.push(Relationship {
            source: entities[a].id.clone(),
            target: entities[b].id.clone(),
            description: format!(
                "{} {} {}. {}",
                entities[a].name,
                predicate,
                entities[b].name,
                filler_between(&mut rng, 10, 18)
            ),
            predicate,
        });
    }

    let mut chunks = Vec::with_capacity(p.chunks);
    let mut mentions_of: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for c in 0..p.chunks {
        let k = rng.random_range(1..4);
        let mentioned: BTreeSet<usize> = (0..k).map(|_| rng.random_range(0..p.entities)).collect();
        let mut text = String::new();
        for &e in &mentioned {
            text.push_str(&format!("{} {}. ", entities[e].name, filler_between(&mut rng, 20, 32)));
            mentions_of.entry(e).or_default().push(c);
        }
        text.push_str(&filler_between(&mut rng, 18, 30));
        chunks.push(TextChunk {
            id: ChunkId(format!("c{c:04}")),
            text,
            mentioned_entities: mentioned.iter().map(|&e| entities[e].id.clone()).collect(),
        });
    }

    let mut contexts = Vec::with_capacity(n_questions);
    let mut questions = Vec::with_capacity(n_questions);
    for qi in 0..n_questions {
        let qid = format!("q{qi:04}");
        let seed_ix = rng.random_range(0..p.entities);
        let dist = bfs(&adj, seed_ix, 3);
        let two_hop: Vec<usize> = dist.iter().filter(|(_, &d)| d == 2).map(|(&e, _)| e).collect();
        let one_hop: Vec<usize> = dist.iter().filter(|(_, &d)| d == 1).map(|(&e, _)| e).collect();
        let answer_ix = *two_hop.choose(&mut rng).or(one_hop.choose(&mut rng)).unwrap_or(&seed_ix);
        let seed_name = &entities[seed_ix].name;

        let mut near: Vec<usize> = dist.keys().copied().filter(|&e| e != seed_ix && e != answer_ix).collect();
        near.shuffle(&mut rng);
        near.sort_by_key(|e| dist[e]);
        near.truncate(p.near_entities.saturating_sub(2));
        near.push(seed_ix);
        near.push(answer_ix);
        let mut included: Vec<usize> = near.clone();
        let mut far: Vec<usize> = (0..p.entities).filter(|e| !dist.contains_key(e)).collect();
        far.shuffle(&mut rng);
        included.extend(far.into_iter().take(p.far_entities));
        included.sort_unstable();
        included.dedup();
        included.shuffle(&mut rng);
        let included_set: BTreeSet<usize> = included.iter().copied().collect();

        let entity_descriptions = included
            .iter()
            .map(|&e| EntityDescription {
                id: entities[e].id.clone(),
                text: format!("{}: {}", entities[e].name, entities[e].description),
            })
            .collect();

        let id_ix: BTreeMap<&str, usize> = entities.iter().enumerate().map(|(i, e)| (e.id.0.as_str(), i)).collect();
        let mut rels: Vec<&Relationship> = relationships
            .iter()
            .filter(|r| {
                included_set.contains(&id_ix[r.source.0.as_str()]) || included_set.contains(&id_ix[r.target.0.as_str()])
            })
            .collect();
        rels.shuffle(&mut rng);
        rels.truncate(p.relationships);
        let relationship_descriptions = rels
            .iter()
            .map(|r| RelationshipDescription {
                source: r.source.clone(),
                target: r.target.clone(),
                text: r.description.clone(),
            })
            .collect();

        let mut near_chunks: Vec<usize> = near.iter().flat_map(|e| mentions_of.get(e).cloned().unwrap_or_default()).collect();
        near_chunks.sort_unstable();
        near_chunks.dedup();
        near_chunks.shuffle(&mut rng);
        near_chunks.truncate(p.near_chunks);
        let mut chosen: BTreeSet<usize> = near_chunks.into_iter().collect();
        while chosen.len() < p.near_chunks + p.far_chunks {
            chosen.insert(rng.random_range(0..p.chunks));
        }
        let mut chosen: Vec<usize> = chosen.into_iter().collect();
        chosen.shuffle(&mut rng);
        let text_chunks = chosen
            .iter()
            .map(|&c| ChunkPassage {
                id: chunks[c].id.clone(),
                text: chunks[c].text.clone(),
            })
            .collect();

        let community_reports = (0..p.reports)
            .map(|_| {
                let subjects: Vec<&str> = included.sample(&mut rng, 3).map(|&e| entities[e].name.as_str()).collect();
                format!("Community report on {}. {}", subjects.join(", "), filler(&mut rng, p.report_words))
            })
            .collect();

        let (qtype, text, hops) = match qi % 4 {
            0 => (QuestionType::Bridge, format!("Which place connects to {seed_name} through its founding charter?"), 2),
            1 => (QuestionType::Compositional, format!("Whose masons rebuilt the place linked with {seed_name}?"), 3),
            2 => (QuestionType::Inference, format!("What lies two steps from {seed_name} along the trade routes?"), 2),
            _ => (QuestionType::BridgeComparison, format!("Is the neighbour of {seed_name} older than its founder?"), 4),
        };
        contexts.push(RetrievedContext {
            question_id: qid.clone(),
            entity_descriptions,
            relationship_descriptions,
            community_reports,
            text_chunks,
        });
        questions.push(QuestionRecord {
            id: qid,
            text,
            gold_answers: vec![entities[answer_ix].name.clone()],
            qtype: Some(qtype),
            hops: Some(hops),
        });
    }

    SynthDataset {
        entities,
        relationships,
        chunks,
        contexts,
        questions,
    }
}

pub const REALISTIC_QUESTIONS: usize = 24;
pub const REALISTIC_SEED: u64 = 7;

pub fn realistic() -> SynthDataset {
    generate(REALISTIC_QUESTIONS, REALISTIC_SEED, SynthParams::realistic())
}

impl SynthDataset {
    pub fn graph(&self) -> graphwalk_qa::graph::KnowledgeGraph {
        graphwalk_qa::graph::KnowledgeGraph::build(
            self.entities.clone(),
            self.relationships.clone(),
            self.chunks.clone(),
        )
        .expect("synthetic graph is consistent")
    }

    /// File name and JSONL contents of every dataset file.
    pub fn files(&self) -> Vec<(&'static str, String)> {
        use graphwalk_qa::graph::{CHUNKS_FILE, ENTITIES_FILE, RELATIONSHIPS_FILE};
        use graphwalk_qa::jsonl::to_jsonl_string;
        vec![
            (ENTITIES_FILE, to_jsonl_string(&self.entities)),
            (RELATIONSHIPS_FILE, to_jsonl_string(&self.relationships)),
            (CHUNKS_FILE, to_jsonl_string(&self.chunks)),
            ("contexts.jsonl", to_jsonl_string(&self.contexts)),
            ("questions.jsonl", to_jsonl_string(&self.questions)),
        ]
    }

    pub fn write_to(&self, dir: &std::path::Path) {
        std::fs::create_dir_all(dir).unwrap();
        for (name, body) in self.files() {
            std::fs::write(dir.join(name), body).unwrap();
        }
    }
}

pub fn realistic_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/realistic")
}
