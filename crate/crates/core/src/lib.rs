//! Knowledge-embedded dialogue toolkit.
//!
//! The crate turns a knowledge base into dialogue training data:
//!
//! - [`kb`]: dialogues, table KBs, graph KBs and the entity lexicon.
//! - [`tquery`]: SQL-subset user goal queries over table KBs.
//! - [`gquery`]: CYPHER-subset pattern queries over graph KBs, the
//!   diminishing-factor ledger and query induction from a dialogue.
//! - [`ke`]: delexicalization into templates and relexicalization back into
//!   dialogues.
//! - [`genpipe`]: batch, per-KB and iterative graph generation, plus a
//!   synthetic corpus generator.
//! - [`score`]: entity F1, BLEU, Inform/Success, 2-hop precision and
//!   response/dialogue accuracy.
//! - [`camrest`]: loaders for CamRest676-format dialogue and venue files.
//! - [`memlm`]: an exact-match prefix-trie response generator used to check
//!   that generated dialogues carry the whole KB.

pub mod camrest;
pub mod genpipe;
pub mod gquery;
pub mod kb;
pub mod ke;
pub mod memlm;
pub mod report;
pub mod score;
pub mod tquery;

pub use kb::{Dialogue, EntityLexicon, GraphKb, KbError, Speaker, TableKb, Turn};
