use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::ops::Range;

use super::dialogue::normalize_ws;
use super::{GraphKb, TableKb};

/// Tag given to graph node entries.
pub const NODE_TAG: &str = "node";

pub fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Where a match may start and end.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Boundary {
    /// Both ends must sit on a word boundary.
    #[default]
    Word,
    /// Only the start must sit on a word boundary, so a match may be
    /// followed by a suffix inside the same word ("moderate" in
    /// "moderately").
    WordStart,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LexiconEntry {
    /// Surface form as first inserted.
    pub surface: String,
    /// Attribute names (table KBs) or [`NODE_TAG`] (graph KBs).
    pub tags: BTreeSet<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EntityMatch {
    /// Byte range in the matched text.
    pub span: Range<usize>,
    /// The text as it appears in the input.
    pub surface: String,
    /// The lexicon's surface form for this entry.
    pub canonical: String,
    pub tags: BTreeSet<String>,
}

#[derive(Clone, Debug, Default)]
struct TrieNode {
    children: HashMap<char, u32>,
    entry: Option<String>,
}

/// Gazetteer of KB surface strings with longest-match lookup.
#[derive(Clone, Debug)]
pub struct EntityLexicon {
    entries: BTreeMap<String, LexiconEntry>,
    min_len: Option<usize>,
    case_sensitive: bool,
    boundary: Boundary,
    trie: Vec<TrieNode>,
}

#[derive(Clone, Debug)]
pub struct LexiconBuilder {
    entries: BTreeMap<String, LexiconEntry>,
    min_len: Option<usize>,
    case_sensitive: bool,
    boundary: Boundary,
}

impl Default for LexiconBuilder {
    fn default() -> Self {
        LexiconBuilder {
            entries: BTreeMap::new(),
            min_len: None,
            case_sensitive: false,
            boundary: Boundary::Word,
        }
    }
}

fn fold_char(c: char, case_sensitive: bool) -> char {
    if case_sensitive {
        return c;
    }
    let mut lower = c.to_lowercase();
    match (lower.next(), lower.next()) {
        (Some(l), None) => l,
        _ => c,
    }
}

fn fold(text: &str, case_sensitive: bool) -> String {
    text.chars().map(|c| fold_char(c, case_sensitive)).collect()
}

impl LexiconBuilder {
    pub fn case_sensitive(mut self, yes: bool) -> Self {
        self.case_sensitive = yes;
        self
    }

    /// Entries shorter than `chars` characters are dropped.
    pub fn min_len(mut self, chars: usize) -> Self {
        self.min_len = Some(chars);
        self
    }

    pub fn boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    /// Adds a surface with a tag. Returns false when the surface was
    /// rejected (empty or under the length threshold).
    pub fn insert(&mut self, surface: &str, tag: &str) -> bool {
        let surface = normalize_ws(surface);
        if surface.is_empty() {
            return false;
        }
        if self.min_len.is_some_and(|min| surface.chars().count() < min) {
            return false;
        }
        let key = fold(&surface, self.case_sensitive);
        self.entries
            .entry(key)
            .or_insert_with(|| LexiconEntry {
                surface,
                tags: BTreeSet::new(),
            })
            .tags
            .insert(tag.to_string());
        true
    }

    pub fn with(mut self, surface: &str, tag: &str) -> Self {
        self.insert(surface, tag);
        self
    }

    pub fn build(self) -> EntityLexicon {
        let mut trie = vec![TrieNode::default()];
        for key in self.entries.keys() {
            let mut node = 0usize;
            for c in key.chars() {
                let next = match trie[node].children.get(&c) {
                    Some(&n) => n as usize,
                    None => {
                        trie.push(TrieNode::default());
                        let id = trie.len() - 1;
                        trie[node].children.insert(c, id as u32);
                        id
                    }
                };
                node = next;
            }
            trie[node].entry = Some(key.clone());
        }
        EntityLexicon {
            entries: self.entries,
            min_len: self.min_len,
            case_sensitive: self.case_sensitive,
            boundary: self.boundary,
            trie,
        }
    }
}

impl EntityLexicon {
    pub fn builder() -> LexiconBuilder {
        LexiconBuilder::default()
    }

    /// Case-insensitive lexicon over the values of the given attributes (all
    /// attributes when `attributes` is `None`), tagged with attribute names.
    pub fn from_table(kb: &TableKb, attributes: Option<&[String]>, boundary: Boundary) -> Self {
        let mut builder = Self::builder().case_sensitive(false).boundary(boundary);
        for attr in kb.attributes() {
            let wanted = attributes.is_none_or(|list| list.iter().any(|a| a.eq_ignore_ascii_case(attr)));
            if !wanted {
                continue;
            }
            for value in kb.values_of(attr).into_iter().flatten() {
                builder.insert(value, attr);
            }
        }
        builder.build()
    }

    /// Case-sensitive lexicon of node names with a minimum length. Mentions
    /// may carry a word suffix ("thrillers").
    pub fn from_graph(graph: &GraphKb, min_len: usize) -> Self {
        let mut builder = Self::builder()
            .case_sensitive(true)
            .min_len(min_len)
            .boundary(Boundary::WordStart);
        for node in graph.nodes() {
            builder.insert(node, NODE_TAG);
        }
        builder.build()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn case_sensitive(&self) -> bool {
        self.case_sensitive
    }

    pub fn min_len(&self) -> Option<usize> {
        self.min_len
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn entries(&self) -> impl Iterator<Item = &LexiconEntry> {
        self.entries.values()
    }

    pub fn lookup(&self, surface: &str) -> Option<&LexiconEntry> {
        self.entries.get(&fold(&normalize_ws(surface), self.case_sensitive))
    }

    /// Non-overlapping entity mentions in `text`, sorted by position.
    /// Overlaps are resolved longest first, then leftmost.
    pub fn match_entities(&self, text: &str) -> Vec<EntityMatch> {
        self.match_entities_masked(text, &[])
    }

    /// Like [`EntityLexicon::match_entities`], ignoring candidates that
    /// overlap any of the `masked` byte ranges.
    pub fn match_entities_masked(&self, text: &str, masked: &[Range<usize>]) -> Vec<EntityMatch> {
        let chars: Vec<(usize, char)> = text.char_indices().collect();
        let folded: Vec<char> = chars
            .iter()
            .map(|&(_, c)| fold_char(c, self.case_sensitive))
            .collect();
        let n = chars.len();
        let byte_at = |i: usize| if i == n { text.len() } else { chars[i].0 };
        let boundary_at = |i: usize| {
            i == 0 || i == n || !(is_word_char(chars[i - 1].1) && is_word_char(chars[i].1))
        };

        // (char start, char end, key)
        let mut candidates: Vec<(usize, usize, &str)> = Vec::new();
        for start in 0..n {
            if !boundary_at(start) {
                continue;
            }
            let mut node = 0usize;
            for (end, c) in (start + 1..=n).zip(&folded[start..]) {
                match self.trie[node].children.get(c) {
                    Some(&next) => node = next as usize,
                    None => break,
                }
                let Some(key) = self.trie[node].entry.as_deref() else {
                    continue;
                };
                if self.boundary == Boundary::Word && !boundary_at(end) {
                    continue;
                }
                let bytes = byte_at(start)..byte_at(end);
                if masked.iter().any(|m| m.start < bytes.end && bytes.start < m.end) {
                    continue;
                }
                candidates.push((start, end, key));
            }
        }

        candidates.sort_by(|a, b| (b.1 - b.0).cmp(&(a.1 - a.0)).then(a.0.cmp(&b.0)));
        let mut taken = vec![false; n];
        let mut chosen = Vec::new();
        for (start, end, key) in candidates {
            if taken[start..end].iter().any(|&t| t) {
                continue;
            }
            taken[start..end].iter_mut().for_each(|t| *t = true);
            chosen.push((start, end, key));
        }
        chosen.sort_by_key(|c| c.0);
        chosen
            .into_iter()
            .map(|(start, end, key)| {
                let span = byte_at(start)..byte_at(end);
                let entry = &self.entries[key];
                EntityMatch {
                    surface: text[span.clone()].to_string(),
                    span,
                    canonical: entry.surface.clone(),
                    tags: entry.tags.clone(),
                }
            })
            .collect()
    }
}
