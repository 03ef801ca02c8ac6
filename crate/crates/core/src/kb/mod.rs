//! Core data model: dialogues, table KBs, graph KBs and the entity lexicon.

mod dialogue;
mod graph;
mod lexicon;
mod table;

pub use dialogue::{normalize_ws, read_dialogues_jsonl, write_dialogues_jsonl, Dialogue, Speaker, Turn};
pub use graph::{Direction, GraphKb, NodeId, RelId};
pub use lexicon::{is_word_char, Boundary, EntityLexicon, EntityMatch, LexiconBuilder, LexiconEntry};
pub use table::TableKb;

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum KbError {
    #[error("invalid dialogue {id}: {reason}")]
    InvalidDialogue { id: String, reason: String },
    #[error("invalid table KB: {0}")]
    InvalidTable(String),
    #[error("invalid graph KB: {0}")]
    InvalidGraph(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl KbError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        KbError::Io {
            path: path.into(),
            source,
        }
    }

    /// True when the error was caused by malformed input rather than by the
    /// environment.
    pub fn is_validation(&self) -> bool {
        !matches!(self, KbError::Io { .. })
    }
}
