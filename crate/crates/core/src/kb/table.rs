use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::KbError;

/// A named relation of string-valued tuples.
///
/// Row order is insertion order and is significant: query results and
/// generation output follow it. Attribute lookup is case-insensitive.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TableKb {
    name: String,
    attributes: Vec<String>,
    rows: Vec<Vec<String>>,
    ontology: BTreeMap<String, BTreeSet<String>>,
    explicit_ontology: bool,
}

#[derive(Serialize, Deserialize)]
struct TableFile {
    name: String,
    attributes: Vec<String>,
    rows: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ontology: Option<BTreeMap<String, BTreeSet<String>>>,
}

impl TableKb {
    /// Builds a table whose ontology is the set of observed values.
    pub fn new(
        name: impl Into<String>,
        attributes: Vec<String>,
        rows: Vec<Vec<String>>,
    ) -> Result<Self, KbError> {
        Self::build(name.into(), attributes, rows, None)
    }

    /// Builds a table with a declared ontology; every row value must belong
    /// to its attribute's value set.
    pub fn with_ontology(
        name: impl Into<String>,
        attributes: Vec<String>,
        rows: Vec<Vec<String>>,
        ontology: BTreeMap<String, BTreeSet<String>>,
    ) -> Result<Self, KbError> {
        Self::build(name.into(), attributes, rows, Some(ontology))
    }

    fn build(
        name: String,
        attributes: Vec<String>,
        rows: Vec<Vec<String>>,
        ontology: Option<BTreeMap<String, BTreeSet<String>>>,
    ) -> Result<Self, KbError> {
        let mut seen = BTreeSet::new();
        for attr in &attributes {
            if attr.trim().is_empty() {
                return Err(KbError::InvalidTable("empty attribute name".into()));
            }
            if !seen.insert(attr.to_lowercase()) {
                return Err(KbError::InvalidTable(format!("duplicate attribute `{attr}`")));
            }
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != attributes.len() {
                return Err(KbError::InvalidTable(format!(
                    "row {i} has {} values, expected {}",
                    row.len(),
                    attributes.len()
                )));
            }
        }
        let explicit_ontology = ontology.is_some();
        let ontology = match ontology {
            Some(ont) => {
                for (i, row) in rows.iter().enumerate() {
                    for (attr, value) in attributes.iter().zip(row) {
                        let known = ont.get(attr).is_some_and(|set| set.contains(value));
                        if !known {
                            return Err(KbError::InvalidTable(format!(
                                "row {i}: value `{value}` is not in the ontology of `{attr}`"
                            )));
                        }
                    }
                }
                ont
            }
            None => {
                let mut ont: BTreeMap<String, BTreeSet<String>> = attributes
                    .iter()
                    .map(|a| (a.clone(), BTreeSet::new()))
                    .collect();
                for row in &rows {
                    for (attr, value) in attributes.iter().zip(row) {
                        ont.get_mut(attr).expect("attribute present").insert(value.clone());
                    }
                }
                ont
            }
        };
        Ok(TableKb {
            name,
            attributes,
            rows,
            ontology,
            explicit_ontology,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn attributes(&self) -> &[String] {
        &self.attributes
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn row(&self, index: usize) -> Option<&[String]> {
        self.rows.get(index).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Index of an attribute, matched case-insensitively.
    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attributes
            .iter()
            .position(|a| a == name)
            .or_else(|| self.attributes.iter().position(|a| a.eq_ignore_ascii_case(name)))
    }

    /// The value set V_a of an attribute.
    pub fn values_of(&self, attribute: &str) -> Option<&BTreeSet<String>> {
        let idx = self.attribute_index(attribute)?;
        self.ontology.get(&self.attributes[idx])
    }

    pub fn ontology(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.ontology
    }

    pub fn from_json_str(text: &str) -> Result<Self, KbError> {
        let file: TableFile =
            serde_json::from_str(text).map_err(|e| KbError::InvalidTable(e.to_string()))?;
        Self::build(file.name, file.attributes, file.rows, file.ontology)
    }

    /// Reads a CSV table with a header row; the table is named after the
    /// file stem unless `name` is given.
    pub fn from_csv_reader<R: std::io::Read>(name: &str, reader: R) -> Result<Self, KbError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| KbError::InvalidTable(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| KbError::InvalidTable(e.to_string()))?;
            rows.push(record.iter().map(str::to_string).collect());
        }
        Self::new(name, headers, rows)
    }

    /// Loads `.json` or `.csv` files.
    pub fn load(path: &Path) -> Result<Self, KbError> {
        let text = std::fs::read_to_string(path).map_err(|e| KbError::io(path, e))?;
        let is_csv = path
            .extension()
            .is_some_and(|ext| ext.eq_ignore_ascii_case("csv"));
        let parsed = if is_csv {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("table");
            Self::from_csv_reader(stem, text.as_bytes())
        } else {
            Self::from_json_str(&text)
        };
        parsed.map_err(|e| match e {
            KbError::InvalidTable(reason) => KbError::Parse {
                path: path.to_path_buf(),
                line: 0,
                reason,
            },
            other => other,
        })
    }

    /// Canonical JSON: sorted keys, two-space indentation, trailing LF.
    /// The ontology is written only when it was declared on input.
    pub fn to_json_string(&self) -> String {
        let file = TableFile {
            name: self.name.clone(),
            attributes: self.attributes.clone(),
            rows: self.rows.clone(),
            ontology: self.explicit_ontology.then(|| self.ontology.clone()),
        };
        // Value maps are BTreeMaps, so keys come out sorted.
        let value = serde_json::to_value(&file).expect("table serializes");
        let mut text = serde_json::to_string_pretty(&value).expect("value serializes");
        text.push('\n');
        text
    }

    pub fn save(&self, path: &Path) -> Result<(), KbError> {
        std::fs::write(path, self.to_json_string()).map_err(|e| KbError::io(path, e))
    }
}
