use reldiff_core::{EntityGraph, Schema};

/// One typed edge set in global node coordinates.
#[derive(Debug, Clone)]
pub struct RelationView {
    pub src_type: u32,
    pub dst_type: u32,
    /// Edges over global node ids.
    pub edges: Vec<(u32, u32)>,
    pub label: String,
}

/// Flattened, typed view of the structural part of an entity graph.
///
/// Node ids are global (table offsets applied); types are table indices.
/// Relations whose parent is a dimension table are excluded: those
/// references are synthesized as vocabulary lookups, not sampled structure.
#[derive(Debug, Clone)]
pub struct GraphView {
    pub n_nodes: usize,
    pub n_types: usize,
    pub node_type: Vec<u32>,
    pub type_offsets: Vec<usize>,
    pub type_counts: Vec<usize>,
    pub relations: Vec<RelationView>,
    /// Index of each view relation in the source graph's relation list.
    pub source_relation: Vec<usize>,
}

impl GraphView {
    pub fn from_entity_graph(g: &EntityGraph, schema: &Schema) -> Self {
        let mut type_offsets = Vec::with_capacity(g.node_counts.len());
        let mut total = 0usize;
        for &c in &g.node_counts {
            type_offsets.push(total);
            total += c;
        }
        let mut node_type = vec![0u32; total];
        for (t, &c) in g.node_counts.iter().enumerate() {
            for i in 0..c {
                node_type[type_offsets[t] + i] = t as u32;
            }
        }
        let mut relations = Vec::new();
        let mut source_relation = Vec::new();
        for (idx, rel) in g.relations.iter().enumerate() {
            if let reldiff_core::RelationKind::Link { link } = rel.kind {
                if schema.is_dimension_link(link) {
                    continue;
                }
            }
            let so = type_offsets[rel.src_table] as u32;
            let doff = type_offsets[rel.dst_table] as u32;
            relations.push(RelationView {
                src_type: rel.src_table as u32,
                dst_type: rel.dst_table as u32,
                edges: rel.edges.iter().map(|&(s, d)| (so + s, doff + d)).collect(),
                label: match rel.kind {
                    reldiff_core::RelationKind::Link { link } => schema.link_name(link),
                    reldiff_core::RelationKind::M2M { junction } => {
                        format!("m2m:{}", schema.tables[junction].name)
                    }
                },
            });
            source_relation.push(idx);
        }
        GraphView {
            n_nodes: total,
            n_types: g.node_counts.len(),
            node_type,
            type_offsets,
            type_counts: g.node_counts.clone(),
            relations,
            source_relation,
        }
    }

    /// Convert a relation's global-id edges back to table-local pairs.
    pub fn to_local_edges(&self, rel: &RelationView, edges: &[(u32, u32)]) -> Vec<(u32, u32)> {
        let so = self.type_offsets[rel.src_type as usize] as u32;
        let doff = self.type_offsets[rel.dst_type as usize] as u32;
        edges.iter().map(|&(s, d)| (s - so, d - doff)).collect()
    }

    pub fn edge_total(&self) -> usize {
        self.relations.iter().map(|r| r.edges.len()).sum()
    }
}
