//! SQL-subset user goal queries over table KBs.
//!
//! ```text
//! SELECT type, poi, distance, address FROM navigation
//!   GROUP BY type HAVING distance = MIN(distance)
//! ```
//!
//! Supported: a select list (or `*`), one table, a conjunction of
//! comparisons in `WHERE`, an optional `GROUP BY` attribute and an optional
//! `HAVING a = AGG(b)` clause with `MIN`, `MAX`, `SUM` or `AVG`.

mod exec;
mod numeric;
mod parse;

use std::fmt;

pub use exec::{aggregate, execute, values_equal, ResultSet};
pub use numeric::{Decimal, Quantity};
pub use parse::parse;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QueryError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown aggregate `{name}` at byte {offset}")]
    UnknownAggregate { offset: usize, name: String },
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("query targets table `{found}` but the KB is `{expected}`")]
    UnknownTable { expected: String, found: String },
    #[error("value `{value}` of `{attribute}` is not numeric")]
    NotNumeric { attribute: String, value: String },
    #[error("cannot compare quantities in different units: `{left}` vs `{right}`")]
    MixedUnits { left: String, right: String },
    #[error("aggregate over an empty list")]
    EmptyAggregate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Neq,
    Lt,
    Gt,
    Leq,
    Geq,
}

impl CmpOp {
    pub fn is_numeric(self) -> bool {
        !matches!(self, CmpOp::Eq | CmpOp::Neq)
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Neq => "!=",
            CmpOp::Lt => "<",
            CmpOp::Gt => ">",
            CmpOp::Leq => "<=",
            CmpOp::Geq => ">=",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Aggregate {
    Min,
    Max,
    Sum,
    Avg,
}

impl Aggregate {
    pub fn from_name(name: &str) -> Option<Self> {
        match name.to_ascii_uppercase().as_str() {
            "MIN" => Some(Aggregate::Min),
            "MAX" => Some(Aggregate::Max),
            "SUM" => Some(Aggregate::Sum),
            "AVG" => Some(Aggregate::Avg),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Aggregate::Min => "MIN",
            Aggregate::Max => "MAX",
            Aggregate::Sum => "SUM",
            Aggregate::Avg => "AVG",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Constraint {
    pub op: CmpOp,
    pub attribute: String,
    pub value: String,
}

/// `HAVING attribute = aggregate(argument)`; only `=` is supported.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Having {
    pub attribute: String,
    pub aggregate: Aggregate,
    pub argument: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Selection {
    All,
    Attributes(Vec<String>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TableQuery {
    pub select: Selection,
    pub from: String,
    pub constraints: Vec<Constraint>,
    pub group_by: Option<String>,
    pub having: Option<Having>,
}

impl TableQuery {
    /// Attribute names mentioned anywhere in the query, select list first.
    pub fn mentioned_attributes(&self) -> Vec<&str> {
        let selected = match &self.select {
            Selection::All => Vec::new(),
            Selection::Attributes(attrs) => attrs.iter().map(String::as_str).collect(),
        };
        let rest = self
            .constraints
            .iter()
            .map(|c| c.attribute.as_str())
            .chain(self.group_by.as_deref())
            .chain(
                self.having
                    .iter()
                    .flat_map(|h| [h.attribute.as_str(), h.argument.as_str()]),
            );
        let mut out: Vec<&str> = Vec::new();
        for name in selected.into_iter().chain(rest) {
            if !out.iter().any(|o| o.eq_ignore_ascii_case(name)) {
                out.push(name);
            }
        }
        out
    }
}

const RESERVED: [&str; 11] = [
    "SELECT", "FROM", "WHERE", "GROUP", "BY", "HAVING", "AND", "MIN", "MAX", "SUM", "AVG",
];

pub(crate) fn is_reserved(word: &str) -> bool {
    RESERVED.iter().any(|k| k.eq_ignore_ascii_case(word))
}

fn write_atom(f: &mut fmt::Formatter<'_>, atom: &str) -> fmt::Result {
    if parse::is_bare(atom) && !is_reserved(atom) {
        f.write_str(atom)
    } else {
        write!(f, "'{}'", atom.replace('\'', "''"))
    }
}

impl fmt::Display for TableQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SELECT ")?;
        match &self.select {
            Selection::All => f.write_str("*")?,
            Selection::Attributes(attrs) => {
                for (i, a) in attrs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write_atom(f, a)?;
                }
            }
        }
        f.write_str(" FROM ")?;
        write_atom(f, &self.from)?;
        for (i, c) in self.constraints.iter().enumerate() {
            f.write_str(if i == 0 { " WHERE " } else { " AND " })?;
            write_atom(f, &c.attribute)?;
            write!(f, " {} ", c.op.symbol())?;
            write_atom(f, &c.value)?;
        }
        if let Some(g) = &self.group_by {
            f.write_str(" GROUP BY ")?;
            write_atom(f, g)?;
        }
        if let Some(h) = &self.having {
            f.write_str(" HAVING ")?;
            write_atom(f, &h.attribute)?;
            write!(f, " = {}(", h.aggregate.name())?;
            write_atom(f, &h.argument)?;
            f.write_str(")")?;
        }
        Ok(())
    }
}
