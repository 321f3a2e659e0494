use std::collections::HashMap;
use std::path::Path;

use crate::error::CoreError;
use crate::schema::{ColumnKind, Schema};
use crate::value::{parse_datetime, Value};
use crate::Result;

/// One loaded table. Attribute columns are stored column-major in schema
/// order; foreign keys are resolved to parent row indices at load time.
#[derive(Debug, Clone, PartialEq)]
pub struct TableData {
    /// Raw primary-key strings in row order. Keys are opaque; they are only
    /// used for resolution and error messages.
    pub pks: Vec<String>,
    /// `fk_parent_rows[fk][row]` = row index in the parent table, one entry
    /// per foreign-key column (in schema FK order).
    pub fk_parent_rows: Vec<Vec<u32>>,
    /// `columns[attr][row]`, one entry per attribute column (schema order).
    pub columns: Vec<Vec<Value>>,
}

impl TableData {
    pub fn len(&self) -> usize {
        self.pks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pks.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Database {
    pub schema: Schema,
    pub tables: Vec<TableData>,
}

/// Spec-level view of one row: primary key, resolved foreign keys and the
/// attribute tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct Entity<'a> {
    pub primary_key: &'a str,
    /// (link index, parent row) for each FK column in schema order.
    pub foreign_keys: Vec<(usize, u32)>,
    pub attributes: Vec<&'a Value>,
}

impl Database {
    pub fn row_count(&self, table: usize) -> usize {
        self.tables[table].len()
    }

    pub fn entity_count(&self) -> usize {
        self.tables.iter().map(|t| t.len()).sum()
    }

    pub fn entity(&self, table: usize, row: usize) -> Entity<'_> {
        let data = &self.tables[table];
        let links: Vec<usize> = self
            .schema
            .links_from(table)
            .map(|(idx, _)| idx)
            .collect();
        Entity {
            primary_key: &data.pks[row],
            foreign_keys: links
                .iter()
                .enumerate()
                .map(|(fk_pos, link)| (*link, data.fk_parent_rows[fk_pos][row]))
                .collect(),
            attributes: data.columns.iter().map(|col| &col[row]).collect(),
        }
    }

    /// Row-position equivalence: identical attribute tuples and foreign keys
    /// resolving to the same parent row positions. Primary-key strings are
    /// ignored, which makes this exactly "the same database up to primary-key
    /// relabeling" for pipelines that preserve row order.
    pub fn equivalent(&self, other: &Database) -> bool {
        if self.tables.len() != other.tables.len() {
            return false;
        }
        for (a, b) in self.tables.iter().zip(&other.tables) {
            if a.len() != b.len()
                || a.fk_parent_rows != b.fk_parent_rows
                || a.columns != b.columns
            {
                return false;
            }
        }
        true
    }

    /// Write one `<table>.csv` per table. Column order is the canonical
    /// schema order (primary key, foreign keys, attributes).
    pub fn write_csv_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| CoreError::Io {
            path: dir.display().to_string(),
            source: e,
        })?;
        for (t_idx, spec) in self.schema.tables.iter().enumerate() {
            let path = dir.join(format!("{}.csv", spec.name));
            let mut w = csv::Writer::from_path(&path).map_err(|e| CoreError::Csv {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            let header: Vec<&str> = spec.columns.iter().map(|c| c.name.as_str()).collect();
            w.write_record(&header).map_err(|e| CoreError::Csv {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            let data = &self.tables[t_idx];
            let parent_tables: Vec<usize> = self
                .schema
                .links_from(t_idx)
                .map(|(_, l)| l.parent)
                .collect();
            for row in 0..data.len() {
                let mut record: Vec<String> = Vec::with_capacity(spec.columns.len());
                record.push(data.pks[row].clone());
                for (fk_pos, parent) in parent_tables.iter().enumerate() {
                    let parent_row = data.fk_parent_rows[fk_pos][row] as usize;
                    record.push(self.tables[*parent].pks[parent_row].clone());
                }
                for col in &data.columns {
                    record.push(col[row].to_csv());
                }
                w.write_record(&record).map_err(|e| CoreError::Csv {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?;
            }
            w.flush().map_err(|e| CoreError::Io {
                path: path.display().to_string(),
                source: e,
            })?;
        }
        Ok(())
    }
}

/// Load `<table>.csv` for every schema table from `dir`, typing every cell
/// and verifying referential integrity.
pub fn load_database(schema: &Schema, dir: &Path) -> Result<Database> {
    struct PendingTable {
        pks: Vec<String>,
        fk_raw: Vec<Vec<String>>,
        columns: Vec<Vec<Value>>,
    }

    let mut pending = Vec::with_capacity(schema.tables.len());
    for spec in &schema.tables {
        let path = dir.join(format!("{}.csv", spec.name));
        if !path.exists() {
            return Err(CoreError::MissingFile {
                table: spec.name.clone(),
                path: path.display().to_string(),
            });
        }
        let mut reader = csv::ReaderBuilder::new()
            .flexible(false)
            .from_path(&path)
            .map_err(|e| CoreError::Csv {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        let headers = reader
            .headers()
            .map_err(|e| CoreError::Csv {
                path: path.display().to_string(),
                message: e.to_string(),
            })?
            .clone();
        let mut col_pos: HashMap<&str, usize> = HashMap::new();
        for (i, h) in headers.iter().enumerate() {
            if col_pos.insert(h, i).is_some() {
                return Err(CoreError::Csv {
                    path: path.display().to_string(),
                    message: format!("duplicate header `{h}`"),
                });
            }
        }
        let positions: Vec<usize> = spec
            .columns
            .iter()
            .map(|c| {
                col_pos.get(c.name.as_str()).copied().ok_or_else(|| CoreError::Csv {
                    path: path.display().to_string(),
                    message: format!("missing column `{}`", c.name),
                })
            })
            .collect::<Result<_>>()?;

        let fk_count = spec.fk_count();
        let attr_specs: Vec<&ColumnKind> = spec.attributes().map(|c| &c.kind).collect();
        let mut table = PendingTable {
            pks: Vec::new(),
            fk_raw: vec![Vec::new(); fk_count],
            columns: vec![Vec::new(); attr_specs.len()],
        };
        for (row_idx, record) in reader.records().enumerate() {
            let record = record.map_err(|e| CoreError::Csv {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            let cell = |pos: usize| record.get(positions[pos]).unwrap_or("").to_string();
            let pk = cell(0);
            if pk.is_empty() {
                return Err(CoreError::MissingValue {
                    table: spec.name.clone(),
                    row: row_idx,
                    column: spec.primary_key.clone(),
                });
            }
            table.pks.push(pk);
            for fk in 0..fk_count {
                let raw = cell(1 + fk);
                if raw.is_empty() {
                    return Err(CoreError::MissingValue {
                        table: spec.name.clone(),
                        row: row_idx,
                        column: spec.columns[1 + fk].name.clone(),
                    });
                }
                table.fk_raw[fk].push(raw);
            }
            for (attr, kind) in attr_specs.iter().enumerate() {
                let raw = cell(1 + fk_count + attr);
                let value = parse_cell(&raw, kind).ok_or_else(|| CoreError::BadCell {
                    table: spec.name.clone(),
                    row: row_idx,
                    column: spec.columns[1 + fk_count + attr].name.clone(),
                    cell: raw.clone(),
                    kind: format!("{kind:?}"),
                })?;
                table.columns[attr].push(value);
            }
        }
        pending.push(table);
    }

    // Primary-key indices, rejecting duplicates.
    let mut pk_index: Vec<HashMap<&str, u32>> = Vec::with_capacity(pending.len());
    for (spec, table) in schema.tables.iter().zip(&pending) {
        let mut index = HashMap::with_capacity(table.pks.len());
        for (row, pk) in table.pks.iter().enumerate() {
            if index.insert(pk.as_str(), row as u32).is_some() {
                return Err(CoreError::DuplicatePrimaryKey {
                    table: spec.name.clone(),
                    row,
                    key: pk.clone(),
                });
            }
        }
        pk_index.push(index);
    }

    // Resolve foreign keys.
    let mut tables = Vec::with_capacity(pending.len());
    for (t_idx, table) in pending.iter().enumerate() {
        let spec = &schema.tables[t_idx];
        let links: Vec<usize> = schema.links_from(t_idx).map(|(_, l)| l.parent).collect();
        let mut fk_parent_rows = Vec::with_capacity(links.len());
        for (fk_pos, parent) in links.iter().enumerate() {
            let mut resolved = Vec::with_capacity(table.pks.len());
            for (row, raw) in table.fk_raw[fk_pos].iter().enumerate() {
                match pk_index[*parent].get(raw.as_str()) {
                    Some(parent_row) => resolved.push(*parent_row),
                    None => {
                        return Err(CoreError::UnresolvedForeignKey {
                            table: spec.name.clone(),
                            column: spec.columns[1 + fk_pos].name.clone(),
                            row,
                            key: raw.clone(),
                            parent: schema.tables[*parent].name.clone(),
                        })
                    }
                }
            }
            fk_parent_rows.push(resolved);
        }
        tables.push(TableData {
            pks: table.pks.clone(),
            fk_parent_rows,
            columns: table.columns.clone(),
        });
    }

    Ok(Database {
        schema: schema.clone(),
        tables,
    })
}

fn parse_cell(raw: &str, kind: &ColumnKind) -> Option<Value> {
    if raw.is_empty() {
        return Some(Value::Missing);
    }
    match kind {
        ColumnKind::Numerical => raw.trim().parse::<f64>().ok().map(Value::Number),
        ColumnKind::Categorical => Some(Value::Category(raw.to_string())),
        ColumnKind::Datetime => parse_datetime(raw).map(Value::DateTime),
        _ => None,
    }
}
