//! Corpus files: one JSON record per line with an id, a prompt and an
//! optional reference. Prompts and references are either explicit token-id
//! arrays or raw text, which is tokenized byte-level by default.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::TokenId;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusItem {
    pub id: String,
    pub prompt: Vec<TokenId>,
    pub reference: Option<Vec<TokenId>>,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus is empty")]
    Empty,
    #[error("line {line}: {message}")]
    BadRecord { line: usize, message: String },
    #[error("duplicate item id {0:?}")]
    DuplicateId(String),
    #[error("item {0:?} has no reference")]
    MissingReference(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Token payloads accept both forms: `[1, 2, 3]` or `"raw text"`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum TokensOrText {
    Tokens(Vec<TokenId>),
    Text(String),
}

impl TokensOrText {
    fn into_tokens(self) -> Vec<TokenId> {
        match self {
            TokensOrText::Tokens(tokens) => tokens,
            TokensOrText::Text(text) => tokenize_bytes(&text),
        }
    }
}

/// Byte-level tokenization: each byte is its own token id (0..256).
pub fn tokenize_bytes(text: &str) -> Vec<TokenId> {
    text.bytes().map(TokenId::from).collect()
}

#[derive(Serialize, Deserialize)]
struct RawItem {
    id: String,
    prompt: TokensOrText,
    #[serde(skip_serializing_if = "Option::is_none")]
    reference: Option<TokensOrText>,
}

pub fn parse_corpus(reader: impl BufRead) -> Result<Vec<CorpusItem>, CorpusError> {
    let mut items = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawItem = serde_json::from_str(&line).map_err(|e| CorpusError::BadRecord {
            line: index + 1,
            message: e.to_string(),
        })?;
        if !seen.insert(raw.id.clone()) {
            return Err(CorpusError::DuplicateId(raw.id));
        }
        items.push(CorpusItem {
            id: raw.id,
            prompt: raw.prompt.into_tokens(),
            reference: raw.reference.map(TokensOrText::into_tokens),
        });
    }
    if items.is_empty() {
        return Err(CorpusError::Empty);
    }
    Ok(items)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<CorpusItem>, CorpusError> {
    let file = std::fs::File::open(path)?;
    parse_corpus(std::io::BufReader::new(file))
}

pub fn write_corpus(items: &[CorpusItem], mut writer: impl Write) -> Result<(), CorpusError> {
    for item in items {
        let raw = RawItem {
            id: item.id.clone(),
            prompt: TokensOrText::Tokens(item.prompt.clone()),
            reference: item.reference.clone().map(TokensOrText::Tokens),
        };
        serde_json::to_writer(&mut writer, &raw).map_err(|e| CorpusError::BadRecord {
            line: 0,
            message: e.to_string(),
        })?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_corpus(items: &[CorpusItem], path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let file = std::fs::File::create(path)?;
    write_corpus(items, std::io::BufWriter::new(file))
}
