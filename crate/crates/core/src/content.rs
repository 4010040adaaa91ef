//! Local image corpus standing in for a live photo search API.

use std::collections::{BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interaction::ImageCard;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContentError {
    #[error("corpus unavailable: {0}")]
    CorpusUnavailable(String),
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("could not extract a topic from {0:?}")]
    UnparseableUtterance(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub path: String,
    pub tags: BTreeSet<String>,
}

impl CorpusEntry {
    pub fn new(path: &str, tags: &[&str]) -> Self {
        Self { path: path.to_string(), tags: tags.iter().map(|t| t.to_string()).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub version: u32,
    pub entries: Vec<CorpusEntry>,
}

impl CorpusManifest {
    /// Validates and normalizes a list of entries; either all of them load or none do.
    pub fn new(entries: Vec<CorpusEntry>) -> Result<Self, ContentError> {
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(entries.len());
        for (i, e) in entries.into_iter().enumerate() {
            if e.path.is_empty() {
                return Err(ContentError::InvalidManifest(format!("entry {i}: empty path")));
            }
            if e.path.starts_with('/') || e.path.split(['/', '\\']).any(|seg| seg == "..") {
                return Err(ContentError::InvalidManifest(format!(
                    "entry {i}: path {:?} must be relative and stay under the corpus root",
                    e.path
                )));
            }
            if !seen.insert(e.path.clone()) {
                return Err(ContentError::InvalidManifest(format!("duplicate path {:?}", e.path)));
            }
            let tags: BTreeSet<String> = e
                .tags
                .iter()
                .map(|t| t.trim().to_lowercase())
                .filter(|t| !t.is_empty())
                .collect();
            if tags.is_empty() {
                return Err(ContentError::InvalidManifest(format!("{:?} has no tags", e.path)));
            }
            out.push(CorpusEntry { path: e.path, tags });
        }
        Ok(Self { version: 1, entries: out })
    }

    /// Parses the on-disk format: a JSON array of `{"path", "tags"}` objects.
    pub fn from_json(text: &str) -> Result<Self, ContentError> {
        let entries: Vec<CorpusEntry> = serde_json::from_str(text)
            .map_err(|e| ContentError::InvalidManifest(e.to_string()))?;
        Self::new(entries)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("manifest serializes")
    }

    pub fn load(root: &Path) -> Result<Self, ContentError> {
        let path = root.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| ContentError::CorpusUnavailable(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

/// A parsed population request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub topic: String,
    pub limit: usize,
}

/// Lowercases, drops punctuation other than hyphens, and collapses whitespace.
pub fn normalize(text: &str) -> String {
    let cleaned: String = text
        .chars()
        .map(|c| if c.is_alphanumeric() || c == '-' || c.is_whitespace() { c } else { ' ' })
        .collect::<String>()
        .to_lowercase();
    cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
}

const TRIGGERS: [&str; 5] = [
    "populate this column with pictures of",
    "populate column with pictures of",
    "show me pictures of",
    "show me images of",
    "pictures of",
];
const ARTICLES: [&str; 4] = ["a", "an", "the", "some"];

/// Accepts "show me pictures of X", "pictures of X" or a bare noun phrase.
pub fn parse_query(transcript: &str, limit: usize) -> Result<Query, ContentError> {
    let text = normalize(transcript);
    let unparseable = || ContentError::UnparseableUtterance(transcript.to_string());
    if text.is_empty() {
        return Err(unparseable());
    }
    let mut topic = text.as_str();
    for trigger in TRIGGERS {
        if topic == trigger || trigger.strip_suffix(" of") == Some(topic) {
            return Err(unparseable());
        }
        if let Some(rest) = topic.strip_prefix(trigger).and_then(|r| r.strip_prefix(' ')) {
            topic = rest;
            break;
        }
    }
    let mut words: Vec<&str> = topic.split(' ').collect();
    while words.len() > 1 && ARTICLES.contains(&words[0]) {
        words.remove(0);
    }
    let topic = words.join(" ");
    if topic.is_empty() || ARTICLES.contains(&topic.as_str()) {
        return Err(unparseable());
    }
    Ok(Query { topic, limit })
}

/// Substring match in either direction between the topic and any tag.
pub fn tag_matches(topic: &str, tags: &BTreeSet<String>) -> bool {
    tags.iter().any(|t| t.contains(topic) || topic.contains(t.as_str()))
}

#[derive(Debug, Clone)]
pub struct ContentProvider {
    manifest: CorpusManifest,
    root: Option<PathBuf>,
    seed: u64,
}

impl ContentProvider {
    pub fn new(manifest: CorpusManifest, seed: u64) -> Self {
        Self { manifest, root: None, seed }
    }

    pub fn load(root: &Path, seed: u64) -> Result<Self, ContentError> {
        Ok(Self { manifest: CorpusManifest::load(root)?, root: Some(root.to_path_buf()), seed })
    }

    pub fn manifest(&self) -> &CorpusManifest {
        &self.manifest
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Provider over the subset of entries satisfying `keep`.
    pub fn filtered(&self, keep: impl Fn(&CorpusEntry) -> bool) -> Self {
        let entries = self.manifest.entries.iter().filter(|e| keep(e)).cloned().collect();
        Self {
            manifest: CorpusManifest { version: self.manifest.version, entries },
            root: self.root.clone(),
            seed: self.seed,
        }
    }

    fn card(entry: &CorpusEntry) -> ImageCard {
        ImageCard::new(&entry.path, &entry.path, entry.tags.clone())
    }

    /// Cards whose tags match the query topic, in a seed-determined order.
    ///
    /// Returned cards use the corpus path as their id; callers that place them on the
    /// wall assign instance ids.
    pub fn fetch(&self, query: &Query) -> Result<Vec<ImageCard>, ContentError> {
        if self.manifest.entries.is_empty() {
            return Err(ContentError::CorpusUnavailable("empty corpus".into()));
        }
        let mut hits: Vec<&CorpusEntry> = self
            .manifest
            .entries
            .iter()
            .filter(|e| tag_matches(&query.topic, &e.tags))
            .collect();
        hits.shuffle(&mut ChaCha8Rng::seed_from_u64(self.seed));
        Ok(hits.into_iter().take(query.limit).map(Self::card).collect())
    }

    /// `n` cards, without replacement while the corpus lasts.
    pub fn random_fill(&self, n: usize, seed: u64) -> Result<Vec<ImageCard>, ContentError> {
        let entries = &self.manifest.entries;
        if entries.is_empty() {
            return Err(ContentError::CorpusUnavailable("empty corpus".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..entries.len()).collect();
        order.shuffle(&mut rng);
        order.truncate(n);
        while order.len() < n {
            order.push(rng.random_range(0..entries.len()));
        }
        Ok(order.into_iter().map(|i| Self::card(&entries[i])).collect())
    }
}
