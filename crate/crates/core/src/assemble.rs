use crate::database::{Database, TableData};
use crate::error::CoreError;
use crate::graph::{EntityGraph, RelationKind};
use crate::schema::{ColumnKind, Schema};
use crate::value::Value;
use crate::Result;

/// Rebuild a database from an entity graph and per-node attribute tuples.
///
/// Fresh primary keys are assigned as dense integers per table; foreign-key
/// columns are filled from the graph edges. The graph must be in link form
/// (junction transforms inverted) and every child row must carry exactly one
/// edge per foreign-key column.
pub fn assemble_database(
    g: &EntityGraph,
    attrs: &[Vec<Vec<Value>>],
    schema: &Schema,
) -> Result<Database> {
    if attrs.len() != schema.tables.len() {
        return Err(CoreError::Assembly(format!(
            "attribute tables {} != schema tables {}",
            attrs.len(),
            schema.tables.len()
        )));
    }
    g.validate()?;

    let mut tables = Vec::with_capacity(schema.tables.len());
    for (t_idx, spec) in schema.tables.iter().enumerate() {
        let n = g.node_counts[t_idx];
        if attrs[t_idx].len() != n {
            return Err(CoreError::Assembly(format!(
                "table `{}`: {} attribute rows for {} nodes",
                spec.name,
                attrs[t_idx].len(),
                n
            )));
        }
        let attr_kinds: Vec<ColumnKind> = spec.attributes().map(|c| c.kind).collect();
        let mut columns: Vec<Vec<Value>> = vec![Vec::with_capacity(n); attr_kinds.len()];
        for (row, tuple) in attrs[t_idx].iter().enumerate() {
            if tuple.len() != attr_kinds.len() {
                return Err(CoreError::Assembly(format!(
                    "table `{}` row {}: {} attributes, expected {}",
                    spec.name,
                    row,
                    tuple.len(),
                    attr_kinds.len()
                )));
            }
            for (a, value) in tuple.iter().enumerate() {
                let ok = match (&attr_kinds[a], value) {
                    (_, Value::Missing) => true,
                    (ColumnKind::Numerical, Value::Number(_)) => true,
                    (ColumnKind::Categorical, Value::Category(_)) => true,
                    (ColumnKind::Datetime, Value::DateTime(_)) => true,
                    _ => false,
                };
                if !ok {
                    return Err(CoreError::Assembly(format!(
                        "table `{}` row {}: attribute {} has wrong type",
                        spec.name, row, a
                    )));
                }
                columns[a].push(value.clone());
            }
        }
        tables.push(TableData {
            pks: (0..n).map(|i| i.to_string()).collect(),
            fk_parent_rows: Vec::new(),
            columns,
        });
    }

    // Fill foreign keys from edges: per link, each child row appears exactly
    // once as a source.
    for (t_idx, spec) in schema.tables.iter().enumerate() {
        let n = g.node_counts[t_idx];
        let mut fk_parent_rows = Vec::new();
        for (link_idx, _) in schema.links_from(t_idx) {
            let rel = g
                .relations
                .iter()
                .find(|r| r.kind == RelationKind::Link { link: link_idx })
                .ok_or_else(|| {
                    CoreError::Assembly(format!(
                        "graph is missing edges for link `{}`",
                        schema.link_name(link_idx)
                    ))
                })?;
            let mut parents = vec![u32::MAX; n];
            let mut counts = vec![0u32; n];
            for &(src, dst) in &rel.edges {
                parents[src as usize] = dst;
                counts[src as usize] += 1;
            }
            if let Some(row) = counts.iter().position(|&c| c != 1) {
                return Err(CoreError::Assembly(format!(
                    "table `{}` row {}: {} edges for link `{}`, expected exactly 1",
                    spec.name,
                    row,
                    counts[row],
                    schema.link_name(link_idx)
                )));
            }
            fk_parent_rows.push(parents);
        }
        tables[t_idx].fk_parent_rows = fk_parent_rows;
    }

    Ok(Database {
        schema: schema.clone(),
        tables,
    })
}

/// Extract the attribute tuples of a database in the layout
/// [`assemble_database`] consumes (useful for identity round-trips).
pub fn attribute_tuples(db: &Database) -> Vec<Vec<Vec<Value>>> {
    db.tables
        .iter()
        .map(|t| {
            (0..t.len())
                .map(|row| t.columns.iter().map(|col| col[row].clone()).collect())
                .collect()
        })
        .collect()
}
