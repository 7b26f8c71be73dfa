//! Knowledge graph store loaded from indexer output.
//!
//! The graph is read from three JSONL files (entities, relationships, chunks).
//! Relationships are treated as undirected edges for traversal: duplicates
//! collapse and self-loops are dropped from the adjacency. After construction
//! the graph is immutable.

use std::borrow::Borrow;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl::read_jsonl_numbered;

pub const ENTITIES_FILE: &str = "entities.jsonl";
pub const RELATIONSHIPS_FILE: &str = "relationships.jsonl";
pub const CHUNKS_FILE: &str = "chunks.jsonl";

macro_rules! string_id {
    ($name:ident) => {
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_string())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                $name(s)
            }
        }
    };
}

string_id!(EntityId);
string_id!(ChunkId);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: EntityId,
    pub name: String,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relationship {
    pub source: EntityId,
    pub target: EntityId,
    #[serde(default)]
    pub predicate: String,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextChunk {
    pub id: ChunkId,
    pub text: String,
    #[serde(rename = "entities", default)]
    pub mentioned_entities: BTreeSet<EntityId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct KnowledgeGraph {
    entities: BTreeMap<EntityId, Entity>,
    relationships: Vec<Relationship>,
    chunks: BTreeMap<ChunkId, TextChunk>,
    adjacency: BTreeMap<EntityId, BTreeSet<EntityId>>,
    mention_index: BTreeMap<EntityId, BTreeSet<ChunkId>>,
}

impl KnowledgeGraph {
    /// Builds and validates a graph, materializing adjacency and the mention index.
    pub fn build(
        entities: Vec<Entity>,
        relationships: Vec<Relationship>,
        chunks: Vec<TextChunk>,
    ) -> Result<Self> {
        let mut entity_map = BTreeMap::new();
        let mut duplicates = BTreeSet::new();
        for entity in entities {
            if entity.name.trim().is_empty() {
                return Err(Error::Validation(format!(
                    "entity {} has an empty name",
                    entity.id
                )));
            }
            if entity_map.contains_key(&entity.id) {
                duplicates.insert(entity.id.0.clone());
                continue;
            }
            entity_map.insert(entity.id.clone(), entity);
        }
        if !duplicates.is_empty() {
            return Err(Error::Integrity {
                message: "duplicate entity ids".into(),
                ids: duplicates.into_iter().collect(),
            });
        }

        let mut dangling = BTreeSet::new();
        for rel in &relationships {
            for end in [&rel.source, &rel.target] {
                if !entity_map.contains_key(end) {
                    dangling.insert(end.0.clone());
                }
            }
        }

        let mut chunk_map = BTreeMap::new();
        let mut duplicate_chunks = BTreeSet::new();
        for chunk in chunks {
            for e in &chunk.mentioned_entities {
                if !entity_map.contains_key(e) {
                    dangling.insert(e.0.clone());
                }
            }
            if chunk_map.contains_key(&chunk.id) {
                duplicate_chunks.insert(chunk.id.0.clone());
                continue;
            }
            chunk_map.insert(chunk.id.clone(), chunk);
        }
        if !dangling.is_empty() {
            return Err(Error::Integrity {
                message: "references to unknown entities".into(),
                ids: dangling.into_iter().collect(),
            });
        }
        if !duplicate_chunks.is_empty() {
            return Err(Error::Integrity {
                message: "duplicate chunk ids".into(),
                ids: duplicate_chunks.into_iter().collect(),
            });
        }

        let mut adjacency: BTreeMap<EntityId, BTreeSet<EntityId>> = entity_map
            .keys()
            .map(|id| (id.clone(), BTreeSet::new()))
            .collect();
        for rel in &relationships {
            if rel.source == rel.target {
                continue;
            }
            adjacency
                .get_mut(&rel.source)
                .expect("validated endpoint")
                .insert(rel.target.clone());
            adjacency
                .get_mut(&rel.target)
                .expect("validated endpoint")
                .insert(rel.source.clone());
        }

        let mut mention_index: BTreeMap<EntityId, BTreeSet<ChunkId>> = BTreeMap::new();
        for chunk in chunk_map.values() {
            for e in &chunk.mentioned_entities {
                mention_index
                    .entry(e.clone())
                    .or_default()
                    .insert(chunk.id.clone());
            }
        }

        Ok(KnowledgeGraph {
            entities: entity_map,
            relationships,
            chunks: chunk_map,
            adjacency,
            mention_index,
        })
    }

    /// Parses the three interchange streams. `names` label each stream in errors.
    pub fn from_readers<E: BufRead, R: BufRead, C: BufRead>(
        entities: E,
        relationships: R,
        chunks: C,
        names: [&str; 3],
    ) -> Result<Self> {
        let entities = strip_lines(read_jsonl_numbered::<Entity, _>(entities, names[0])?);
        let relationships =
            strip_lines(read_jsonl_numbered::<Relationship, _>(relationships, names[1])?);
        let chunks = strip_lines(read_jsonl_numbered::<TextChunk, _>(chunks, names[2])?);
        Self::build(entities, relationships, chunks)
    }

    pub fn neighbors(&self, id: &str) -> Result<&BTreeSet<EntityId>> {
        self.adjacency
            .get(id)
            .ok_or_else(|| Error::NotFound(format!("entity {id}")))
    }

    /// Union of the chunks mentioning any of `ids`.
    pub fn chunks_mentioning<'a, I>(&self, ids: I) -> Result<BTreeSet<ChunkId>>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut out = BTreeSet::new();
        for id in ids {
            if !self.entities.contains_key(id) {
                return Err(Error::NotFound(format!("entity {id}")));
            }
            if let Some(chunks) = self.mention_index.get(id) {
                out.extend(chunks.iter().cloned());
            }
        }
        Ok(out)
    }

    pub fn entity(&self, id: &str) -> Option<&Entity> {
        self.entities.get(id)
    }

    pub fn contains_entity(&self, id: &str) -> bool {
        self.entities.contains_key(id)
    }

    pub fn chunk(&self, id: &str) -> Option<&TextChunk> {
        self.chunks.get(id)
    }

    pub fn entities(&self) -> impl Iterator<Item = &Entity> {
        self.entities.values()
    }

    pub fn relationships(&self) -> &[Relationship] {
        &self.relationships
    }

    pub fn chunks(&self) -> impl Iterator<Item = &TextChunk> {
        self.chunks.values()
    }

    pub fn adjacency(&self) -> &BTreeMap<EntityId, BTreeSet<EntityId>> {
        &self.adjacency
    }

    pub fn mention_index(&self) -> &BTreeMap<EntityId, BTreeSet<ChunkId>> {
        &self.mention_index
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    /// Stable JSON form used to compare graphs structurally.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("graph is serializable")
    }
}

fn strip_lines<T>(rows: Vec<(usize, T)>) -> Vec<T> {
    rows.into_iter().map(|(_, t)| t).collect()
}

pub fn load_graph(
    entities_path: &Path,
    relationships_path: &Path,
    chunks_path: &Path,
) -> Result<KnowledgeGraph> {
    let open = |p: &Path| -> Result<BufReader<File>> {
        File::open(p)
            .map(BufReader::new)
            .map_err(|e| Error::io(p, e))
    };
    KnowledgeGraph::from_readers(
        open(entities_path)?,
        open(relationships_path)?,
        open(chunks_path)?,
        [
            &entities_path.display().to_string(),
            &relationships_path.display().to_string(),
            &chunks_path.display().to_string(),
        ],
    )
}

/// Loads `entities.jsonl`, `relationships.jsonl` and `chunks.jsonl` from `dir`.
pub fn load_graph_dir(dir: &Path) -> Result<KnowledgeGraph> {
    load_graph(
        &dir.join(ENTITIES_FILE),
        &dir.join(RELATIONSHIPS_FILE),
        &dir.join(CHUNKS_FILE),
    )
}
