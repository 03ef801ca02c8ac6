//! Exact-match response generator over a context trie.
//!
//! Every system-side turn of the training corpus is stored with its
//! flattened history (speaker tags `<usr>`, `<sys>`, `<api>` before each
//! turn, plus the responding speaker's tag) truncated to the last `window`
//! tokens. The trie is keyed by history tokens read backwards, so walking
//! it from the root finds the longest history suffix seen in training.
//! Each node counts the responses of all histories passing through it;
//! decoding picks tokens greedily by those counts.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use rayon::prelude::*;

use crate::kb::{Dialogue, Speaker, Turn};
use crate::score::{babi_accuracy, system_side_turns, BabiAccuracy, ScoreError};

pub const DEFAULT_WINDOW: usize = 50;
pub const MAX_RESPONSE_TOKENS: usize = 150;
/// Returned when no suffix of the history was seen in training.
pub const EMPTY_GENERATION: &str = "<empty-generation>";
const EOS: &str = "</s>";
const MAGIC: &[u8; 4] = b"KEMT";
const VERSION: u32 = 1;
const NO_TOKEN: u32 = u32::MAX;

#[derive(Debug, thiserror::Error)]
pub enum MemLmError {
    #[error("training corpus has no system turns")]
    EmptyCorpus,
    #[error("window must be at least 1")]
    InvalidWindow,
    #[error("empty history")]
    EmptyHistory,
    #[error("malformed model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Score(#[from] ScoreError),
}

pub fn speaker_tag(s: Speaker) -> &'static str {
    match s {
        Speaker::Usr => "<usr>",
        Speaker::Sys | Speaker::SysApi => "<sys>",
        Speaker::Api => "<api>",
    }
}

/// Flattened history before turn `turn` of `d`, ending with the tag of
/// the speaker of `turn`.
pub fn history_tokens(d: &Dialogue, turn: usize) -> Vec<&str> {
    let turns = d.turns();
    let mut out = Vec::new();
    for t in &turns[..turn] {
        out.push(speaker_tag(t.speaker));
        out.extend(t.tokens());
    }
    out.push(speaker_tag(turns[turn].speaker));
    out
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct Node {
    children: BTreeMap<u32, u32>,
    /// response id -> count of histories through this node
    responses: BTreeMap<u32, u32>,
    /// Histories ending exactly here.
    terminal: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MemLm {
    window: usize,
    tokens: Vec<String>,
    token_ids: HashMap<String, u32>,
    responses: Vec<Vec<u32>>,
    response_ids: HashMap<Vec<u32>, u32>,
    nodes: Vec<Node>,
}

impl MemLm {
    fn empty(window: usize) -> Self {
        MemLm {
            window,
            tokens: Vec::new(),
            token_ids: HashMap::new(),
            responses: Vec::new(),
            response_ids: HashMap::new(),
            nodes: vec![Node::default()],
        }
    }

    fn intern(&mut self, tok: &str) -> u32 {
        if let Some(&id) = self.token_ids.get(tok) {
            return id;
        }
        let id = self.tokens.len() as u32;
        self.tokens.push(tok.to_string());
        self.token_ids.insert(tok.to_string(), id);
        id
    }

    /// Builds the trie from every system-side turn of `corpus`.
    pub fn train(corpus: &[Dialogue], window: usize) -> Result<Self, MemLmError> {
        if window == 0 {
            return Err(MemLmError::InvalidWindow);
        }
        let mut m = MemLm::empty(window);
        for d in corpus {
            for (i, t) in d.turns().iter().enumerate() {
                if t.speaker.is_system() {
                    m.insert(&history_tokens(d, i), &t.tokens().collect::<Vec<_>>());
                }
            }
        }
        if m.responses.is_empty() {
            return Err(MemLmError::EmptyCorpus);
        }
        Ok(m)
    }

    fn insert(&mut self, history: &[&str], response: &[&str]) {
        let resp: Vec<u32> = response.iter().map(|t| self.intern(t)).collect();
        let rid = match self.response_ids.get(&resp) {
            Some(&id) => id,
            None => {
                let id = self.responses.len() as u32;
                self.responses.push(resp.clone());
                self.response_ids.insert(resp, id);
                id
            }
        };
        let start = history.len().saturating_sub(self.window);
        let ctx: Vec<u32> = history[start..].iter().map(|t| self.intern(t)).collect();
        let mut node = 0usize;
        *self.nodes[0].responses.entry(rid).or_insert(0) += 1;
        for &tok in ctx.iter().rev() {
            let next = match self.nodes[node].children.get(&tok) {
                Some(&n) => n as usize,
                None => {
                    let n = self.nodes.len();
                    self.nodes.push(Node::default());
                    self.nodes[node].children.insert(tok, n as u32);
                    n
                }
            };
            node = next;
            *self.nodes[node].responses.entry(rid).or_insert(0) += 1;
        }
        self.nodes[node].terminal += 1;
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Distinct windowed training histories.
    pub fn distinct_histories(&self) -> usize {
        self.nodes.iter().filter(|n| n.terminal > 0).count()
    }

    /// Number of stored (history, response) pairs.
    pub fn pair_count(&self) -> u64 {
        self.nodes[0].responses.values().map(|&c| c as u64).sum()
    }

    /// Deepest node reached by the history read backwards, with its depth.
    fn deepest(&self, history: &[&str]) -> (usize, usize) {
        let start = history.len().saturating_sub(self.window);
        let mut node = 0usize;
        let mut depth = 0;
        for tok in history[start..].iter().rev() {
            let Some(&id) = self.token_ids.get(*tok) else { break };
            let Some(&next) = self.nodes[node].children.get(&id) else { break };
            node = next as usize;
            depth += 1;
        }
        (node, depth)
    }

    /// Greedy decoding from the longest matching history suffix. Ties go to
    /// the lexicographically smallest token; the end marker competes as
    /// `</s>`.
    pub fn generate(&self, history: &[&str]) -> Result<Vec<String>, MemLmError> {
        if history.is_empty() {
            return Err(MemLmError::EmptyHistory);
        }
        let (node, depth) = self.deepest(history);
        if depth == 0 {
            return Ok(vec![EMPTY_GENERATION.to_string()]);
        }
        let mut live: Vec<(&[u32], u32)> = self.nodes[node]
            .responses
            .iter()
            .map(|(&r, &c)| (self.responses[r as usize].as_slice(), c))
            .collect();
        let mut out = Vec::new();
        for pos in 0..MAX_RESPONSE_TOKENS {
            let mut next: BTreeMap<&str, u64> = BTreeMap::new();
            for &(resp, c) in &live {
                let tok = resp.get(pos).map_or(EOS, |&t| self.tokens[t as usize].as_str());
                *next.entry(tok).or_insert(0) += c as u64;
            }
            // BTreeMap order makes the first maximum the smallest token.
            let best = next
                .iter()
                .fold(None::<(&str, u64)>, |acc, (&t, &c)| match acc {
                    Some((_, bc)) if bc >= c => acc,
                    _ => Some((t, c)),
                })
                .map(|(t, _)| t)
                .expect("live responses are never empty");
            if best == EOS {
                break;
            }
            out.push(best.to_string());
            live.retain(|&(resp, _)| resp.get(pos).is_some_and(|&t| self.tokens[t as usize] == best));
        }
        Ok(out)
    }

    /// Generated text for every system-side turn of `d`, given the gold
    /// history.
    pub fn respond(&self, d: &Dialogue) -> Vec<String> {
        d.turns()
            .iter()
            .enumerate()
            .filter(|(_, t)| t.speaker.is_system())
            .map(|(i, _)| {
                self.generate(&history_tokens(d, i))
                    .expect("history holds at least a speaker tag")
                    .join(" ")
            })
            .collect()
    }

    /// `d` with every system-side turn replaced by the generated response.
    pub fn predict(&self, d: &Dialogue) -> Dialogue {
        let mut generated = self.respond(d).into_iter();
        let turns = d
            .turns()
            .iter()
            .map(|t| {
                if t.speaker.is_system() {
                    let text = generated.next().expect("one response per system turn");
                    Turn::new(t.speaker, &text).expect("generated responses are non-empty")
                } else {
                    t.clone()
                }
            })
            .collect();
        Dialogue::new(d.id.clone(), turns).expect("turn structure is unchanged")
    }

    /// Response and dialogue accuracy on `test`, generating in parallel.
    pub fn evaluate(&self, test: &[Dialogue]) -> Result<BabiAccuracy, MemLmError> {
        let pred: Vec<Vec<String>> = test.par_iter().map(|d| self.respond(d)).collect();
        let gold: Vec<Vec<&str>> = test.iter().map(system_side_turns).collect();
        Ok(babi_accuracy(&pred, &gold)?)
    }

    /// Little-endian binary: magic, version, window, token table
    /// (length-prefixed UTF-8), response table, node array.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<(), MemLmError> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        put(&mut buf, VERSION);
        put(&mut buf, self.window as u32);
        put(&mut buf, self.tokens.len() as u32);
        for t in &self.tokens {
            put(&mut buf, t.len() as u32);
            buf.extend_from_slice(t.as_bytes());
        }
        put(&mut buf, self.responses.len() as u32);
        for r in &self.responses {
            put(&mut buf, r.len() as u32);
            r.iter().for_each(|&t| put(&mut buf, t));
        }
        put(&mut buf, self.nodes.len() as u32);
        for n in &self.nodes {
            put(&mut buf, n.terminal);
            put(&mut buf, n.children.len() as u32);
            for (&t, &c) in &n.children {
                put(&mut buf, t);
                put(&mut buf, c);
            }
            put(&mut buf, n.responses.len() as u32);
            for (&r, &c) in &n.responses {
                put(&mut buf, r);
                put(&mut buf, c);
            }
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self, MemLmError> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        let mut r = Reader { bytes: &bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(MemLmError::Format("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(MemLmError::Format(format!("unsupported version {version}")));
        }
        let window = r.u32()? as usize;
        if window == 0 {
            return Err(MemLmError::InvalidWindow);
        }
        let mut m = MemLm::empty(window);
        m.nodes.clear();
        let n_tokens = r.u32()?;
        for _ in 0..n_tokens {
            let len = r.u32()? as usize;
            let s = std::str::from_utf8(r.take(len)?).map_err(|e| MemLmError::Format(e.to_string()))?;
            if m.token_ids.insert(s.to_string(), m.tokens.len() as u32).is_some() {
                return Err(MemLmError::Format(format!("duplicate token `{s}`")));
            }
            m.tokens.push(s.to_string());
        }
        let n_responses = r.u32()?;
        for _ in 0..n_responses {
            let len = r.u32()? as usize;
            let resp = (0..len).map(|_| r.token(n_tokens)).collect::<Result<Vec<_>, _>>()?;
            m.response_ids.insert(resp.clone(), m.responses.len() as u32);
            m.responses.push(resp);
        }
        let n_nodes = r.u32()?;
        if n_nodes == 0 {
            return Err(MemLmError::Format("no root node".into()));
        }
        for _ in 0..n_nodes {
            let mut node = Node {
                terminal: r.u32()?,
                ..Node::default()
            };
            for _ in 0..r.u32()? {
                let t = r.token(n_tokens)?;
                let c = r.u32()?;
                if c == 0 || c >= n_nodes {
                    return Err(MemLmError::Format(format!("child index {c} out of range")));
                }
                node.children.insert(t, c);
            }
            for _ in 0..r.u32()? {
                let id = r.u32()?;
                if id >= n_responses {
                    return Err(MemLmError::Format(format!("response index {id} out of range")));
                }
                node.responses.insert(id, r.u32()?);
            }
            m.nodes.push(node);
        }
        if r.pos != bytes.len() {
            return Err(MemLmError::Format("trailing bytes".into()));
        }
        if m.responses.is_empty() {
            return Err(MemLmError::EmptyCorpus);
        }
        Ok(m)
    }
}

fn put(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], MemLmError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| MemLmError::Format("truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, MemLmError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn token(&mut self, n_tokens: u32) -> Result<u32, MemLmError> {
        let t = self.u32()?;
        if t == NO_TOKEN || t >= n_tokens {
            return Err(MemLmError::Format(format!("token index {t} out of range")));
        }
        Ok(t)
    }
}
