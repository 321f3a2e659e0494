use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnKind {
    Numerical,
    Categorical,
    Datetime,
    PrimaryKey,
    ForeignKey,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    /// For foreign keys: (table, column) of the referenced primary key.
    pub references: Option<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSpec {
    pub name: String,
    pub primary_key: String,
    pub dimension: bool,
    pub order_column: Option<String>,
    /// All columns in canonical order: primary key, foreign keys (file
    /// order), then attribute columns (file order). Tokenization and CSV
    /// output both follow this order.
    pub columns: Vec<ColumnSpec>,
}

impl TableSpec {
    pub fn foreign_keys(&self) -> impl Iterator<Item = &ColumnSpec> {
        self.columns
            .iter()
            .filter(|c| c.kind == ColumnKind::ForeignKey)
    }

    /// Attribute (non-key) columns in canonical order.
    pub fn attributes(&self) -> impl Iterator<Item = &ColumnSpec> {
        self.columns.iter().filter(|c| {
            matches!(
                c.kind,
                ColumnKind::Numerical | ColumnKind::Categorical | ColumnKind::Datetime
            )
        })
    }

    pub fn fk_count(&self) -> usize {
        self.foreign_keys().count()
    }

    pub fn attr_count(&self) -> usize {
        self.attributes().count()
    }
}

/// A foreign-key link: `tables[child].columns[fk_column]` references the
/// primary key of `tables[parent]`. The schema-graph edge set contains each
/// link in both directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub child: usize,
    /// Index into the child's column list (not just its FK list).
    pub fk_column: usize,
    pub parent: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Schema {
    pub tables: Vec<TableSpec>,
    pub links: Vec<LinkSpec>,
}

impl Schema {
    pub fn table_index(&self, name: &str) -> Option<usize> {
        self.tables.iter().position(|t| t.name == name)
    }

    pub fn table(&self, idx: usize) -> &TableSpec {
        &self.tables[idx]
    }

    /// Links with the given child table, in column order.
    pub fn links_from(&self, child: usize) -> impl Iterator<Item = (usize, &LinkSpec)> {
        self.links
            .iter()
            .enumerate()
            .filter(move |(_, l)| l.child == child)
    }

    pub fn links_into(&self, parent: usize) -> impl Iterator<Item = (usize, &LinkSpec)> {
        self.links
            .iter()
            .enumerate()
            .filter(move |(_, l)| l.parent == parent)
    }

    pub fn link_name(&self, link: usize) -> String {
        let l = &self.links[link];
        format!(
            "{}.{}->{}",
            self.tables[l.child].name,
            self.tables[l.child].columns[l.fk_column].name,
            self.tables[l.parent].name
        )
    }

    /// True when the link's parent is a dimension table. Such references are
    /// synthesized as vocabulary lookups rather than sampled graph structure.
    pub fn is_dimension_link(&self, link: usize) -> bool {
        self.tables[self.links[link].parent].dimension
    }

    /// Canonical JSON used for hashing and checkpoint embedding.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("schema serializes")
    }
}

// Raw serde mirror of the schema file format.
#[derive(Deserialize)]
struct RawSchema {
    tables: Vec<RawTable>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTable {
    name: String,
    primary_key: String,
    #[serde(default)]
    dimension: bool,
    #[serde(default)]
    order_column: Option<String>,
    #[serde(default)]
    columns: Vec<RawColumn>,
    #[serde(default)]
    foreign_keys: Vec<RawForeignKey>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawColumn {
    name: String,
    #[serde(rename = "type")]
    kind: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawForeignKey {
    column: String,
    references_table: String,
    references_column: String,
}

pub fn load_schema(path: &Path) -> Result<Schema> {
    let text = std::fs::read_to_string(path).map_err(|e| CoreError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let raw: RawSchema =
        serde_json::from_str(&text).map_err(|e| CoreError::SchemaParse(e.to_string()))?;
    schema_from_raw(raw)
}

pub fn schema_from_json(text: &str) -> Result<Schema> {
    let raw: RawSchema =
        serde_json::from_str(text).map_err(|e| CoreError::SchemaParse(e.to_string()))?;
    schema_from_raw(raw)
}

fn schema_from_raw(raw: RawSchema) -> Result<Schema> {
    let mut names = HashSet::new();
    for t in &raw.tables {
        if !names.insert(t.name.clone()) {
            return Err(CoreError::DuplicateTable(t.name.clone()));
        }
    }
    let index: HashMap<String, usize> = raw
        .tables
        .iter()
        .enumerate()
        .map(|(i, t)| (t.name.clone(), i))
        .collect();

    let mut tables = Vec::with_capacity(raw.tables.len());
    for t in &raw.tables {
        let mut columns = vec![ColumnSpec {
            name: t.primary_key.clone(),
            kind: ColumnKind::PrimaryKey,
            references: None,
        }];
        for fk in &t.foreign_keys {
            columns.push(ColumnSpec {
                name: fk.column.clone(),
                kind: ColumnKind::ForeignKey,
                references: Some((fk.references_table.clone(), fk.references_column.clone())),
            });
        }
        for c in &t.columns {
            let kind = match c.kind.as_str() {
                "numerical" => ColumnKind::Numerical,
                "categorical" => ColumnKind::Categorical,
                "datetime" => ColumnKind::Datetime,
                other => {
                    return Err(CoreError::SchemaParse(format!(
                        "table `{}` column `{}`: unknown type `{}`",
                        t.name, c.name, other
                    )))
                }
            };
            columns.push(ColumnSpec {
                name: c.name.clone(),
                kind,
                references: None,
            });
        }
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.name.clone()) {
                return Err(CoreError::DuplicateColumn {
                    table: t.name.clone(),
                    column: c.name.clone(),
                });
            }
        }
        if let Some(order) = &t.order_column {
            let ok = columns.iter().any(|c| {
                c.name == *order
                    && matches!(c.kind, ColumnKind::Numerical | ColumnKind::Datetime)
            });
            if !ok {
                return Err(CoreError::InvalidSchema(format!(
                    "table `{}`: order_column `{}` must be a numerical or datetime column",
                    t.name, order
                )));
            }
        }
        tables.push(TableSpec {
            name: t.name.clone(),
            primary_key: t.primary_key.clone(),
            dimension: t.dimension,
            order_column: t.order_column.clone(),
            columns,
        });
    }

    // Derive links, validating references. Foreign keys must point at an
    // existing table's primary key; single-column keys only.
    let mut links = Vec::new();
    for (child_idx, t) in raw.tables.iter().enumerate() {
        if tables[child_idx].dimension && !t.foreign_keys.is_empty() {
            return Err(CoreError::InvalidSchema(format!(
                "dimension table `{}` cannot have foreign keys",
                t.name
            )));
        }
        for fk in &t.foreign_keys {
            let parent = *index.get(&fk.references_table).ok_or_else(|| {
                CoreError::DanglingReference {
                    table: t.name.clone(),
                    column: fk.column.clone(),
                    target: format!("table `{}`", fk.references_table),
                }
            })?;
            if tables[parent].primary_key != fk.references_column {
                return Err(CoreError::DanglingReference {
                    table: t.name.clone(),
                    column: fk.column.clone(),
                    target: format!(
                        "column `{}.{}` (not the primary key)",
                        fk.references_table, fk.references_column
                    ),
                });
            }
            let fk_column = tables[child_idx]
                .columns
                .iter()
                .position(|c| c.name == fk.column && c.kind == ColumnKind::ForeignKey)
                .expect("fk column was just inserted");
            links.push(LinkSpec {
                child: child_idx,
                fk_column,
                parent,
            });
        }
    }

    Ok(Schema { tables, links })
}
