//! Text corpus loaders. Sequences use the two-column format (token TAB tag,
//! blank line between sequences); multiclass uses svmlight-style lines.

use bqstruct_core::tasks::{Feature, StructureKey, TaskInput, TaskInstance};
use std::collections::HashMap;
use std::fs;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}:{line}: {reason}")]
    Parse { path: String, line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn parse_err(path: &Path, line: usize, reason: impl Into<String>) -> CorpusError {
    CorpusError::Parse {
        path: path.display().to_string(),
        line,
        reason: reason.into(),
    }
}

/// Tag names in first-occurrence order. Shared between a train and test
/// load so both map tags to the same ids.
#[derive(Default)]
pub struct LabelVocab {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl LabelVocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Fixed per-token feature templates: the lowercased word, its 3-character
/// prefix and suffix, a digit flag, and a capitalization flag.
fn token_features(token: &str) -> Vec<Feature> {
    let lower = token.to_lowercase();
    let chars: Vec<char> = lower.chars().collect();
    let take = chars.len().min(3);
    let prefix: String = chars[..take].iter().collect();
    let suffix: String = chars[chars.len() - take..].iter().collect();

    let mut feats = vec![
        Feature::new(format!("w={lower}").into_bytes(), 1.0),
        Feature::new(format!("p3={prefix}").into_bytes(), 1.0),
        Feature::new(format!("s3={suffix}").into_bytes(), 1.0),
    ];
    if token.chars().any(|c| c.is_ascii_digit()) {
        feats.push(Feature::new(b"has-digit".to_vec(), 1.0));
    }
    if token.chars().next().is_some_and(|c| c.is_uppercase()) {
        feats.push(Feature::new(b"is-cap".to_vec(), 1.0));
    }
    feats
}

/// Loads a column-format tagging corpus. New tags extend `vocab` in the
/// order they first appear.
pub fn load_sequence_corpus(
    path: &Path,
    vocab: &mut LabelVocab,
) -> Result<Vec<TaskInstance>, CorpusError> {
    let text = fs::read_to_string(path)?;
    let mut instances = Vec::new();
    let mut tokens: Vec<Vec<Feature>> = Vec::new();
    let mut tags: Vec<u32> = Vec::new();

    let flush = |tokens: &mut Vec<Vec<Feature>>, tags: &mut Vec<u32>, out: &mut Vec<TaskInstance>| {
        if tokens.is_empty() {
            return;
        }
        out.push(TaskInstance {
            id: out.len(),
            input: TaskInput::Tokens(std::mem::take(tokens)),
            gold: StructureKey::Tags(std::mem::take(tags)),
        });
    };

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.is_empty() {
            flush(&mut tokens, &mut tags, &mut instances);
            continue;
        }
        let mut cols = line.split('\t');
        let (token, tag) = match (cols.next(), cols.next(), cols.next()) {
            (Some(tok), Some(tag), None) if !tok.is_empty() && !tag.is_empty() => (tok, tag),
            _ => {
                return Err(parse_err(
                    path,
                    lineno + 1,
                    "expected exactly two tab-separated columns",
                ))
            }
        };
        tokens.push(token_features(token));
        tags.push(vocab.intern(tag));
    }
    flush(&mut tokens, &mut tags, &mut instances);
    Ok(instances)
}

/// Loads "label idx:val idx:val ..." lines. Indices must strictly increase
/// within a line; a bare label is a valid empty bag.
pub fn load_multiclass(path: &Path) -> Result<Vec<TaskInstance>, CorpusError> {
    let text = fs::read_to_string(path)?;
    let mut instances = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let label: u32 = fields
            .next()
            .unwrap()
            .parse()
            .map_err(|e| parse_err(path, lineno + 1, format!("bad label: {e}")))?;

        let mut feats = Vec::new();
        let mut prev_idx: Option<u64> = None;
        for field in fields {
            let (idx_str, val_str) = field
                .split_once(':')
                .ok_or_else(|| parse_err(path, lineno + 1, format!("expected idx:val, got {field:?}")))?;
            let idx: u64 = idx_str
                .parse()
                .map_err(|e| parse_err(path, lineno + 1, format!("bad index {idx_str:?}: {e}")))?;
            let val: f64 = val_str
                .parse()
                .map_err(|e| parse_err(path, lineno + 1, format!("bad value {val_str:?}: {e}")))?;
            if prev_idx.is_some_and(|p| idx <= p) {
                return Err(parse_err(
                    path,
                    lineno + 1,
                    format!("indices must strictly increase, {idx} follows {}", prev_idx.unwrap()),
                ));
            }
            prev_idx = Some(idx);
            feats.push(Feature::new(idx_str.as_bytes().to_vec(), val));
        }
        instances.push(TaskInstance {
            id: instances.len(),
            input: TaskInput::Bag(feats),
            gold: StructureKey::Class(label),
        });
    }
    Ok(instances)
}

/// Largest class id + 1 across a corpus; 1 for an empty corpus so a task
/// can always be built.
pub fn multiclass_count(instances: &[TaskInstance]) -> u32 {
    instances
        .iter()
        .filter_map(|i| match i.gold {
            StructureKey::Class(c) => Some(c + 1),
            _ => None,
        })
        .max()
        .unwrap_or(1)
}
