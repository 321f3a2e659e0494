//! Column views over loaded databases, shared by the metric implementations.

use reldiff_core::{ColumnKind, Database, Value};

pub const NULL_CATEGORY: &str = "<null>";

/// Numeric view of a column: datetimes become epoch seconds, missing cells
/// are dropped.
pub fn numeric_values(db: &Database, table: usize, attr: usize) -> Vec<f64> {
    db.tables[table].columns[attr]
        .iter()
        .filter_map(|v| match v {
            Value::Number(x) => Some(*x),
            Value::DateTime(s) => Some(*s as f64),
            _ => None,
        })
        .collect()
}

/// Categorical view: missing cells count as their own category, so the
/// missingness pattern is part of the distribution being compared.
pub fn categorical_values(db: &Database, table: usize, attr: usize) -> Vec<String> {
    db.tables[table].columns[attr]
        .iter()
        .map(|v| match v {
            Value::Category(s) => s.clone(),
            Value::Missing => NULL_CATEGORY.to_string(),
            other => other.to_csv(),
        })
        .collect()
}

pub fn is_numeric_kind(kind: ColumnKind) -> bool {
    matches!(kind, ColumnKind::Numerical | ColumnKind::Datetime)
}

/// Numeric value of one cell, if present.
pub fn cell_numeric(v: &Value) -> Option<f64> {
    match v {
        Value::Number(x) => Some(*x),
        Value::DateTime(s) => Some(*s as f64),
        _ => None,
    }
}

pub fn cell_categorical(v: &Value) -> String {
    match v {
        Value::Category(s) => s.clone(),
        Value::Missing => NULL_CATEGORY.to_string(),
        other => other.to_csv(),
    }
}
