//! KE dialogue generation: batch and per-KB table modes, iterative graph
//! mode with a diminishing-factor ledger, subgraph selection, and a
//! synthetic corpus generator.

mod graph;
mod rng;
mod synth;
mod table;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::gquery::SlotBinding;
use crate::ke::KeError;
use crate::kb::{Dialogue, KbError, Turn};

pub use graph::{generate_graph_iterative, select_subgraph, GraphGenerator, IterationStats, ZHistory};
pub use rng::SplitMix64;
pub use synth::{synth_corpus, synth_graph_corpus, SyntheticCorpus, SyntheticGraphCorpus, SyntheticSpec};
pub use table::{generate_per_kb, generate_table};

#[derive(Debug, thiserror::Error)]
pub enum GenError {
    #[error("template `{id}`: {source}")]
    Template {
        id: String,
        #[source]
        source: KeError,
    },
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error("invalid synthetic spec: {0}")]
    Spec(String),
}

impl GenError {
    pub fn is_validation(&self) -> bool {
        match self {
            GenError::Template { source, .. } => source.is_validation(),
            GenError::Kb(e) => e.is_validation(),
            GenError::Spec(_) => true,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GenerationMode {
    #[default]
    TableBatch,
    TablePerKb,
    GraphIterative,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GenerationConfig {
    pub seed: u64,
    pub templates_per_iteration: usize,
    pub iterations: usize,
    /// Maximum number of query results used per template.
    pub result_cap: Option<usize>,
    pub mode: GenerationMode,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            seed: 13,
            templates_per_iteration: 200,
            iterations: 20,
            result_cap: None,
            mode: GenerationMode::TableBatch,
        }
    }
}

/// Where one group's values came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GroupSource {
    /// Index of a table KB row.
    Row(usize),
    /// Slot binding of a graph match.
    Nodes(SlotBinding),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub template: String,
    pub result_index: usize,
    pub assignment: BTreeMap<u32, GroupSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iteration: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneratedDialogue {
    pub dialogue: Dialogue,
    pub provenance: Provenance,
}

#[derive(Serialize)]
struct LineOut<'a> {
    id: &'a str,
    turns: &'a [Turn],
    provenance: &'a Provenance,
}

#[derive(Deserialize)]
struct LineIn {
    id: String,
    turns: Vec<Turn>,
    provenance: Provenance,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct TemplateStats {
    pub template: String,
    pub generated: usize,
    /// Results for which no valid group assignment (or graph binding) was found.
    pub skipped: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GeneratedCorpus {
    pub dialogues: Vec<GeneratedDialogue>,
    pub stats: Vec<TemplateStats>,
}

impl GeneratedCorpus {
    pub fn len(&self) -> usize {
        self.dialogues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dialogues.is_empty()
    }

    pub fn dialogues(&self) -> impl Iterator<Item = &Dialogue> {
        self.dialogues.iter().map(|g| &g.dialogue)
    }

    /// One JSON object per line: the dialogue plus a `provenance` key.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for g in &self.dialogues {
            let line = LineOut {
                id: &g.dialogue.id,
                turns: g.dialogue.turns(),
                provenance: &g.provenance,
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<Self, KbError> {
        let text = std::fs::read_to_string(path).map_err(|e| KbError::io(path, e))?;
        let mut dialogues = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |reason: String| KbError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                reason,
            };
            let raw: LineIn = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
            let dialogue = Dialogue::new(raw.id, raw.turns).map_err(|e| parse_err(e.to_string()))?;
            dialogues.push(GeneratedDialogue {
                dialogue,
                provenance: raw.provenance,
            });
        }
        Ok(GeneratedCorpus {
            dialogues,
            stats: Vec::new(),
        })
    }
}
