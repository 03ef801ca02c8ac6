use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::KbError;

/// Collapse runs of ASCII whitespace into single spaces and trim both ends.
pub fn normalize_ws(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_ascii_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Speaker {
    #[serde(rename = "USR")]
    Usr,
    #[serde(rename = "SYS")]
    Sys,
    #[serde(rename = "SYS-API", alias = "SYS_API")]
    SysApi,
    #[serde(rename = "API")]
    Api,
}

impl Speaker {
    pub fn as_str(self) -> &'static str {
        match self {
            Speaker::Usr => "USR",
            Speaker::Sys => "SYS",
            Speaker::SysApi => "SYS-API",
            Speaker::Api => "API",
        }
    }

    /// Turns produced by the system side (responses and API calls).
    pub fn is_system(self) -> bool {
        matches!(self, Speaker::Sys | Speaker::SysApi)
    }
}

impl fmt::Display for Speaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawTurn")]
pub struct Turn {
    pub speaker: Speaker,
    text: String,
}

#[derive(Deserialize)]
struct RawTurn {
    speaker: Speaker,
    text: String,
}

impl TryFrom<RawTurn> for Turn {
    type Error = String;

    fn try_from(raw: RawTurn) -> Result<Self, Self::Error> {
        Turn::new(raw.speaker, &raw.text).ok_or_else(|| "turn text is empty".to_string())
    }
}

impl Turn {
    /// Builds a turn with whitespace-normalized text. Returns `None` when the
    /// text is empty after normalization.
    pub fn new(speaker: Speaker, text: &str) -> Option<Self> {
        let text = normalize_ws(text);
        if text.is_empty() {
            None
        } else {
            Some(Turn { speaker, text })
        }
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.text.split(' ')
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawDialogue")]
pub struct Dialogue {
    pub id: String,
    turns: Vec<Turn>,
}

#[derive(Deserialize)]
struct RawDialogue {
    id: String,
    turns: Vec<Turn>,
}

impl TryFrom<RawDialogue> for Dialogue {
    type Error = KbError;

    fn try_from(raw: RawDialogue) -> Result<Self, Self::Error> {
        Dialogue::new(raw.id, raw.turns)
    }
}

impl Dialogue {
    /// Validates the speaker pattern `USR (SYS-API API)? SYS`, repeated.
    pub fn new(id: impl Into<String>, turns: Vec<Turn>) -> Result<Self, KbError> {
        let id = id.into();
        let fail = |reason: String| KbError::InvalidDialogue {
            id: id.clone(),
            reason,
        };
        if turns.is_empty() {
            return Err(fail("dialogue has no turns".into()));
        }
        // 0: expect USR, 1: after USR, 2: after SYS-API, 3: after API
        let mut state = 0u8;
        for (i, turn) in turns.iter().enumerate() {
            state = match (state, turn.speaker) {
                (0, Speaker::Usr) => 1,
                (1, Speaker::Sys) | (3, Speaker::Sys) => 0,
                (1, Speaker::SysApi) => 2,
                (2, Speaker::Api) => 3,
                (_, speaker) => {
                    return Err(fail(format!("unexpected {speaker} at turn {i}")));
                }
            };
        }
        if state != 0 {
            return Err(fail("dialogue must end with a SYS turn".into()));
        }
        Ok(Dialogue { id, turns })
    }

    pub fn turns(&self) -> &[Turn] {
        &self.turns
    }

    /// Texts of the SYS turns, in order.
    pub fn system_responses(&self) -> impl Iterator<Item = &str> {
        self.turns
            .iter()
            .filter(|t| t.speaker == Speaker::Sys)
            .map(Turn::text)
    }

    /// For each SYS turn, the text of the most recent USR turn before it.
    pub fn user_turn_before_each_response(&self) -> Vec<&str> {
        let mut last_user = "";
        let mut out = Vec::new();
        for turn in &self.turns {
            match turn.speaker {
                Speaker::Usr => last_user = turn.text(),
                Speaker::Sys => out.push(last_user),
                _ => {}
            }
        }
        out
    }
}

pub fn read_dialogues_jsonl(path: &Path) -> Result<Vec<Dialogue>, KbError> {
    let file = std::fs::File::open(path).map_err(|e| KbError::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| KbError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let dialogue: Dialogue = serde_json::from_str(&line).map_err(|e| KbError::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            reason: e.to_string(),
        })?;
        out.push(dialogue);
    }
    Ok(out)
}

pub fn write_dialogues_jsonl<W: Write>(mut out: W, dialogues: &[Dialogue]) -> std::io::Result<()> {
    for d in dialogues {
        serde_json::to_writer(&mut out, d)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
