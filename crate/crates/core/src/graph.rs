use serde::{Deserialize, Serialize};

use crate::database::Database;
use crate::error::CoreError;
use crate::schema::Schema;
use crate::value::Value;
use crate::Result;

/// Identifies what a relation's edges mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RelationKind {
    /// A foreign-key link (index into `Schema::links`). Edges run from the
    /// child row (source) to the referenced parent row (target), one edge per
    /// child row.
    Link { link: usize },
    /// A many-to-many relation produced by collapsing a junction table.
    /// Edges run from the first parent to the second.
    M2M { junction: usize },
}

/// One typed edge set of the heterogeneous entity graph. Only the forward
/// direction is stored; the inverse edge set is its mirror image and is
/// exposed through [`EntityGraph::directed`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relation {
    pub kind: RelationKind,
    pub src_table: usize,
    pub dst_table: usize,
    pub edges: Vec<(u32, u32)>,
}

impl Relation {
    pub fn out_degrees(&self, src_count: usize) -> Vec<u32> {
        let mut deg = vec![0u32; src_count];
        for &(s, _) in &self.edges {
            deg[s as usize] += 1;
        }
        deg
    }

    pub fn in_degrees(&self, dst_count: usize) -> Vec<u32> {
        let mut deg = vec![0u32; dst_count];
        for &(_, d) in &self.edges {
            deg[d as usize] += 1;
        }
        deg
    }

    /// No duplicate (src, dst) pairs.
    pub fn is_parallel_free(&self) -> bool {
        let mut seen: std::collections::HashSet<(u32, u32)> =
            std::collections::HashSet::with_capacity(self.edges.len());
        self.edges.iter().all(|e| seen.insert(*e))
    }

    pub fn has_self_loops(&self) -> bool {
        self.src_table == self.dst_table && self.edges.iter().any(|(s, d)| s == d)
    }
}

/// Direction of a typed edge set; the schema edge set R contains both.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Heterogeneous row-level graph: one node per table row, one forward plus
/// one inverse edge per foreign-key value. Node identity is (table, row);
/// attribute payloads stay in the [`Database`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityGraph {
    pub node_counts: Vec<usize>,
    pub relations: Vec<Relation>,
}

impl EntityGraph {
    pub fn node_total(&self) -> usize {
        self.node_counts.iter().sum()
    }

    pub fn edge_total(&self) -> usize {
        self.relations.iter().map(|r| r.edges.len()).sum()
    }

    /// All directed relation views (forward and inverse of each edge set).
    pub fn directed(&self) -> impl Iterator<Item = (usize, Direction, &Relation)> {
        self.relations.iter().enumerate().flat_map(|(i, r)| {
            [(i, Direction::Forward, r), (i, Direction::Inverse, r)].into_iter()
        })
    }

    /// Every edge endpoint must name an existing node.
    pub fn validate(&self) -> Result<()> {
        for rel in &self.relations {
            let ns = self.node_counts[rel.src_table] as u32;
            let nd = self.node_counts[rel.dst_table] as u32;
            for &(s, d) in &rel.edges {
                if s >= ns || d >= nd {
                    return Err(CoreError::Graph(format!(
                        "edge ({s},{d}) out of range for tables {}x{}",
                        ns, nd
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Build the entity graph of a validated database: all foreign-key links,
/// including references into dimension tables.
pub fn build_entity_graph(db: &Database) -> EntityGraph {
    let schema = &db.schema;
    let mut relations = Vec::with_capacity(schema.links.len());
    for (link_idx, link) in schema.links.iter().enumerate() {
        let fk_pos = schema
            .links_from(link.child)
            .position(|(idx, _)| idx == link_idx)
            .expect("link belongs to child");
        let parents = &db.tables[link.child].fk_parent_rows[fk_pos];
        let edges: Vec<(u32, u32)> = parents
            .iter()
            .enumerate()
            .map(|(row, parent)| (row as u32, *parent))
            .collect();
        relations.push(Relation {
            kind: RelationKind::Link { link: link_idx },
            src_table: link.child,
            dst_table: link.parent,
            edges,
        });
    }
    EntityGraph {
        node_counts: db.tables.iter().map(|t| t.len()).collect(),
        relations,
    }
}

/// Record of one collapsed junction table, sufficient to invert the
/// transform exactly and to re-create junction rows for generated structure.
#[derive(Debug, Clone, PartialEq)]
pub struct JunctionRecord {
    pub junction_table: usize,
    /// Link indices (into `Schema::links`) of the two foreign keys, in
    /// schema column order.
    pub link_a: usize,
    pub link_b: usize,
    /// Original (parent_a_row, parent_b_row) per junction row, in row order.
    /// The i-th m2m edge corresponds to the i-th junction row.
    pub rows: Vec<(u32, u32)>,
    /// Attribute payloads of the junction rows when the transform was taken
    /// from a database (column-major, like `TableData::columns`).
    pub payloads: Option<Vec<Vec<Value>>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct M2MTransformLog {
    pub junctions: Vec<JunctionRecord>,
}

/// Tables eligible for the junction transform: exactly two outgoing foreign
/// keys and no incoming ones. Tables with two parents and a child, or with
/// three or more parents, are left alone.
pub fn junction_tables(schema: &Schema) -> Vec<usize> {
    (0..schema.tables.len())
        .filter(|&t| {
            schema.links_from(t).count() == 2 && schema.links_into(t).count() == 0
        })
        .collect()
}

/// Collapse every junction table into direct typed edges between its two
/// parents. Pass the database to preserve attribute payloads in the log.
pub fn m2m_transform(
    g: &EntityGraph,
    schema: &Schema,
    db: Option<&Database>,
) -> (EntityGraph, M2MTransformLog) {
    let junctions = junction_tables(schema);
    let mut out = g.clone();
    let mut log = M2MTransformLog::default();
    for &j in &junctions {
        let links: Vec<(usize, usize)> = schema
            .links_from(j)
            .map(|(idx, l)| (idx, l.parent))
            .collect();
        let (link_a, parent_a) = links[0];
        let (link_b, parent_b) = links[1];
        let pos_a = out
            .relations
            .iter()
            .position(|r| r.kind == RelationKind::Link { link: link_a })
            .expect("junction link present");
        let edges_a = out.relations[pos_a].edges.clone();
        let pos_b = out
            .relations
            .iter()
            .position(|r| r.kind == RelationKind::Link { link: link_b })
            .expect("junction link present");
        let edges_b = out.relations[pos_b].edges.clone();

        // Link edges are stored in child-row order with one edge per row.
        let n = out.node_counts[j];
        let mut rows = vec![(u32::MAX, u32::MAX); n];
        for (row, parent) in edges_a {
            rows[row as usize].0 = parent;
        }
        for (row, parent) in edges_b {
            rows[row as usize].1 = parent;
        }

        let mut keep = Vec::with_capacity(out.relations.len());
        for r in out.relations.drain(..) {
            let drop = r.kind == RelationKind::Link { link: link_a }
                || r.kind == RelationKind::Link { link: link_b };
            if !drop {
                keep.push(r);
            }
        }
        out.relations = keep;
        out.relations.push(Relation {
            kind: RelationKind::M2M { junction: j },
            src_table: parent_a,
            dst_table: parent_b,
            edges: rows.clone(),
        });
        out.node_counts[j] = 0;

        log.junctions.push(JunctionRecord {
            junction_table: j,
            link_a,
            link_b,
            rows,
            payloads: db.map(|d| d.tables[j].columns.clone()),
        });
    }
    (out, log)
}

/// Invert [`m2m_transform`]: junction rows are re-created from the m2m
/// edges (edge i becomes row i) and relations return to schema link order.
pub fn m2m_invert(g: &EntityGraph, log: &M2MTransformLog) -> Result<EntityGraph> {
    let mut node_counts = g.node_counts.clone();
    let mut link_relations: Vec<(usize, Relation)> = Vec::new();
    for rel in &g.relations {
        match rel.kind {
            RelationKind::Link { link } => link_relations.push((link, rel.clone())),
            RelationKind::M2M { junction } => {
                let record = log
                    .junctions
                    .iter()
                    .find(|r| r.junction_table == junction)
                    .ok_or_else(|| {
                        CoreError::Graph(format!("no junction record for table {junction}"))
                    })?;
                node_counts[junction] = rel.edges.len();
                let edges_a: Vec<(u32, u32)> = rel
                    .edges
                    .iter()
                    .enumerate()
                    .map(|(i, (a, _))| (i as u32, *a))
                    .collect();
                let edges_b: Vec<(u32, u32)> = rel
                    .edges
                    .iter()
                    .enumerate()
                    .map(|(i, (_, b))| (i as u32, *b))
                    .collect();
                link_relations.push((
                    record.link_a,
                    Relation {
                        kind: RelationKind::Link {
                            link: record.link_a,
                        },
                        src_table: junction,
                        dst_table: rel.src_table,
                        edges: edges_a,
                    },
                ));
                link_relations.push((
                    record.link_b,
                    Relation {
                        kind: RelationKind::Link {
                            link: record.link_b,
                        },
                        src_table: junction,
                        dst_table: rel.dst_table,
                        edges: edges_b,
                    },
                ));
            }
        }
    }
    link_relations.sort_by_key(|(link, _)| *link);
    Ok(EntityGraph {
        node_counts,
        relations: link_relations.into_iter().map(|(_, r)| r).collect(),
    })
}
