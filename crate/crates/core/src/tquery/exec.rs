use std::collections::BTreeMap;

use serde::Serialize;

use super::numeric::{Decimal, Quantity};
use super::{Aggregate, CmpOp, Constraint, QueryError, Selection, TableQuery};
use crate::kb::{normalize_ws, TableKb};

/// Rows projected to the query's effective attribute list, in KB order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ResultSet {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// Index of each result row in the source KB.
    #[serde(skip)]
    pub row_indices: Vec<usize>,
}

impl ResultSet {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Case-insensitive string equality after whitespace normalization.
pub fn values_equal(a: &str, b: &str) -> bool {
    normalize_ws(a).to_lowercase() == normalize_ws(b).to_lowercase()
}

fn quantity(attribute: &str, value: &str) -> Result<Quantity, QueryError> {
    Quantity::parse(value).ok_or_else(|| QueryError::NotNumeric {
        attribute: attribute.to_string(),
        value: value.to_string(),
    })
}

/// MIN/MAX return an input element verbatim; SUM/AVG format the result at
/// the largest input precision with the shared unit suffix. AVG rounds half
/// away from zero.
pub fn aggregate(values: &[&str], agg: Aggregate) -> Result<String, QueryError> {
    let first = values.first().ok_or(QueryError::EmptyAggregate)?;
    let parsed = values
        .iter()
        .map(|v| quantity("aggregate", v))
        .collect::<Result<Vec<_>, _>>()?;
    let unit = parsed[0].unit();
    if let Some((i, _)) = parsed.iter().enumerate().find(|(_, q)| q.unit() != unit) {
        return Err(QueryError::MixedUnits {
            left: first.to_string(),
            right: values[i].to_string(),
        });
    }
    let pick = |better: fn(&Decimal, &Decimal) -> bool| {
        let mut best = 0;
        for (i, q) in parsed.iter().enumerate().skip(1) {
            if better(&q.value, &parsed[best].value) {
                best = i;
            }
        }
        values[best].to_string()
    };
    let numbers: Vec<Decimal> = parsed.iter().map(|q| q.value).collect();
    Ok(match agg {
        Aggregate::Min => pick(|a, b| a < b),
        Aggregate::Max => pick(|a, b| a > b),
        Aggregate::Sum => Quantity::format(Decimal::sum(&numbers), &parsed[0].suffix),
        Aggregate::Avg => Quantity::format(
            Decimal::sum(&numbers).div_round(numbers.len() as i128),
            &parsed[0].suffix,
        ),
    })
}

struct Resolved<'a> {
    kb: &'a TableKb,
}

impl Resolved<'_> {
    fn index(&self, name: &str) -> Result<usize, QueryError> {
        self.kb
            .attribute_index(name)
            .ok_or_else(|| QueryError::UnknownAttribute(name.to_string()))
    }
}

enum Predicate {
    Text { attr: usize, value: String, equal: bool },
    Numeric { attr: usize, op: CmpOp, bound: Decimal },
}

impl Predicate {
    fn new(c: &Constraint, kb: &TableKb, attr: usize) -> Result<Self, QueryError> {
        if !c.op.is_numeric() {
            return Ok(Predicate::Text {
                attr,
                value: c.value.clone(),
                equal: c.op == CmpOp::Eq,
            });
        }
        let literal = quantity(&c.attribute, &c.value)?;
        // (unit, the value it came from); a unitless literal adopts the column's unit.
        let mut unit = (!literal.unit().is_empty()).then(|| (literal.unit(), c.value.clone()));
        // Checked over the whole table so that errors do not depend on the
        // order in which constraints are applied.
        for row in kb.rows() {
            let q = quantity(&kb.attributes()[attr], &row[attr])?;
            match &unit {
                None => unit = Some((q.unit(), row[attr].clone())),
                Some((u, source)) if *u != q.unit() => {
                    return Err(QueryError::MixedUnits {
                        left: source.clone(),
                        right: row[attr].clone(),
                    })
                }
                Some(_) => {}
            }
        }
        Ok(Predicate::Numeric {
            attr,
            op: c.op,
            bound: literal.value,
        })
    }

    fn accepts(&self, row: &[String]) -> bool {
        match self {
            Predicate::Text { attr, value, equal } => values_equal(&row[*attr], value) == *equal,
            Predicate::Numeric { attr, op, bound } => {
                let v = Quantity::parse(&row[*attr]).expect("validated").value;
                match op {
                    CmpOp::Lt => v < *bound,
                    CmpOp::Gt => v > *bound,
                    CmpOp::Leq => v <= *bound,
                    CmpOp::Geq => v >= *bound,
                    CmpOp::Eq => v == *bound,
                    CmpOp::Neq => v != *bound,
                }
            }
        }
    }
}

impl TableQuery {
    /// The projected attribute list R: the select list (every attribute for
    /// `*`) followed by any attribute used in WHERE, GROUP BY or HAVING that
    /// the select list lacks. Names use the KB's spelling.
    pub fn effective_attributes(&self, kb: &TableKb) -> Result<Vec<String>, QueryError> {
        let r = Resolved { kb };
        let mut idx: Vec<usize> = Vec::new();
        let mut add = |i: usize| {
            if !idx.contains(&i) {
                idx.push(i);
            }
        };
        if self.select == Selection::All {
            (0..kb.attributes().len()).for_each(&mut add);
        }
        for name in self.mentioned_attributes() {
            add(r.index(name)?);
        }
        Ok(idx.into_iter().map(|i| kb.attributes()[i].clone()).collect())
    }

    /// Checks table name and every attribute reference against `kb`.
    pub fn validate(&self, kb: &TableKb) -> Result<(), QueryError> {
        if !self.from.eq_ignore_ascii_case(kb.name()) {
            return Err(QueryError::UnknownTable {
                expected: kb.name().to_string(),
                found: self.from.clone(),
            });
        }
        self.effective_attributes(kb).map(|_| ())
    }
}

/// Filters by the WHERE conjunction, applies HAVING within each GROUP BY
/// partition (ties keep every row), and projects to the effective
/// attributes in KB row order. Duplicates are preserved.
pub fn execute(q: &TableQuery, kb: &TableKb) -> Result<ResultSet, QueryError> {
    q.validate(kb)?;
    let r = Resolved { kb };
    let columns = q.effective_attributes(kb)?;
    let col_idx: Vec<usize> = columns.iter().map(|c| r.index(c)).collect::<Result<_, _>>()?;

    let predicates = q
        .constraints
        .iter()
        .map(|c| Predicate::new(c, kb, r.index(&c.attribute)?))
        .collect::<Result<Vec<_>, _>>()?;
    let mut keep: Vec<usize> = (0..kb.len())
        .filter(|&i| predicates.iter().all(|p| p.accepts(&kb.rows()[i])))
        .collect();

    if let Some(h) = &q.having {
        let attr = r.index(&h.attribute)?;
        let arg = r.index(&h.argument)?;
        let group_attr = q.group_by.as_deref().map(|g| r.index(g)).transpose()?;
        let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for &i in &keep {
            let key = group_attr
                .map(|g| normalize_ws(&kb.rows()[i][g]).to_lowercase())
                .unwrap_or_default();
            groups.entry(key).or_default().push(i);
        }
        let mut survivors = Vec::new();
        for members in groups.values() {
            let values: Vec<&str> = members.iter().map(|&i| kb.rows()[i][arg].as_str()).collect();
            let target = quantity(&h.argument, &aggregate(&values, h.aggregate)?)?;
            for &i in members {
                let v = quantity(&h.attribute, &kb.rows()[i][attr])?;
                if v.unit() != target.unit() {
                    return Err(QueryError::MixedUnits {
                        left: kb.rows()[i][attr].clone(),
                        right: format!("{}{}", target.value, target.suffix),
                    });
                }
                if v.value == target.value {
                    survivors.push(i);
                }
            }
        }
        survivors.sort_unstable();
        keep = survivors;
    }

    let rows = keep
        .iter()
        .map(|&i| col_idx.iter().map(|&c| kb.rows()[i][c].clone()).collect())
        .collect();
    Ok(ResultSet {
        columns,
        rows,
        row_indices: keep,
    })
}
