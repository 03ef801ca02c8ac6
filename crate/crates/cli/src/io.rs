use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use kedial::kb::{read_dialogues_jsonl, Dialogue, GraphKb, TableKb};
use serde::Serialize;

/// Bad command-line input (missing file, malformed map, ...).
#[derive(Debug)]
pub struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

pub fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

pub fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(invalid(format!("{}: no such file", path.display())))
    }
}

pub fn require_dir(path: &Path) -> Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(invalid(format!("{}: no such directory", path.display())))
    }
}

pub enum Kb {
    Table(TableKb),
    Graph(GraphKb),
}

/// `.tsv` files are graphs, anything else a table.
pub fn load_kb(path: &Path) -> Result<Kb> {
    require_file(path)?;
    let is_tsv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("tsv"));
    Ok(if is_tsv {
        Kb::Graph(GraphKb::load_tsv(path)?)
    } else {
        Kb::Table(TableKb::load(path)?)
    })
}

pub fn load_table(path: &Path) -> Result<TableKb> {
    match load_kb(path)? {
        Kb::Table(kb) => Ok(kb),
        Kb::Graph(_) => Err(invalid(format!("{}: expected a table KB", path.display()))),
    }
}

pub fn load_graph(path: &Path) -> Result<GraphKb> {
    match load_kb(path)? {
        Kb::Graph(g) => Ok(g),
        Kb::Table(_) => Err(invalid(format!("{}: expected a graph KB (.tsv)", path.display()))),
    }
}

pub fn read_dialogues(path: &Path) -> Result<Vec<Dialogue>> {
    require_file(path)?;
    Ok(read_dialogues_jsonl(path)?)
}

/// A JSON object of string values.
pub fn read_string_map(path: &Path) -> Result<BTreeMap<String, String>> {
    require_file(path)?;
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

/// Buffered writer on `path`, creating parent directories.
pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

pub fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let mut out = create(path)?;
    f(&mut out).with_context(|| format!("writing {}", path.display()))?;
    out.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = kedial::report::to_canonical_json(value)?;
    write_with(path, |out| out.write_all(text.as_bytes()))
}

/// Canonical JSON report on stdout.
pub fn print_json(value: &impl Serialize) -> Result<()> {
    let text = kedial::report::to_canonical_json(value)?;
    let mut stdout = std::io::stdout().lock();
    stdout.write_all(text.as_bytes())?;
    stdout.flush()?;
    Ok(())
}

pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}{suffix}"))
}
