//! The three-stage structure generator: infer a typed partition of the edge
//! set, re-sample every structural relation from the degree-corrected block
//! model conditioned on that partition, and take the union. The junction
//! transform is applied before inference and inverted afterwards, so
//! many-to-many rows are re-created around freshly sampled pairings.

use reldiff_core::rng::{indexed_stream, named_stream};
use reldiff_core::{m2m_invert, m2m_transform, EntityGraph, Schema};
use serde::Serialize;

use crate::dl::{BlockEdgeMatrix, RelationDegrees};
use crate::partition::infer_partition;
use crate::sample::{sample_edge_set, EdgeSampleConfig};
use crate::view::GraphView;
use crate::{Result, StructConfig};

#[derive(Debug, Clone, Serialize)]
pub struct RelationSummary {
    pub label: String,
    pub edges: usize,
    pub simple_enforced: bool,
    pub block_pairs: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct StructureSummary {
    pub dl_type_only: f64,
    pub dl_inferred: f64,
    pub level_block_counts: Vec<usize>,
    pub relations: Vec<RelationSummary>,
    /// Relations copied verbatim (references into dimension tables).
    pub copied_relations: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct GeneratedStructure {
    pub graph: EntityGraph,
    pub summary: StructureSummary,
}

/// Sample a schema-consistent foreign-key structure over the same node set.
/// Per-node per-relation degrees and block-pair edge counts match the input
/// exactly; relations referencing dimension tables are copied unchanged.
pub fn generate_structure(
    g: &EntityGraph,
    schema: &Schema,
    cfg: &StructConfig,
    master_seed: u64,
) -> Result<GeneratedStructure> {
    let (transformed, log) = m2m_transform(g, schema, None);
    let view = GraphView::from_entity_graph(&transformed, schema);

    let mut rng = named_stream(master_seed, "structure.partition");
    let (partition, report) = infer_partition(&view, cfg, &mut rng)?;

    let mut out = transformed.clone();
    let mut relations = Vec::with_capacity(view.relations.len());
    for (i, rel) in view.relations.iter().enumerate() {
        let degrees = RelationDegrees::from_edges(&rel.edges, view.n_nodes);
        let matrix = BlockEdgeMatrix::from_edges(&rel.edges, &partition.levels[0]);
        let source = &transformed.relations[view.source_relation[i]];
        let sample_cfg = EdgeSampleConfig {
            forbid_parallel: source.is_parallel_free(),
            forbid_self_loops: source.src_table == source.dst_table
                && !source.has_self_loops(),
            max_swap_factor: cfg.swap_cap_factor,
        };
        let mut rel_rng = indexed_stream(master_seed, "structure.edges", i as u64);
        let sampled = sample_edge_set(
            &degrees,
            &partition.levels[0],
            &matrix,
            &sample_cfg,
            &mut rel_rng,
        )?;
        relations.push(RelationSummary {
            label: rel.label.clone(),
            edges: sampled.len(),
            simple_enforced: sample_cfg.forbid_parallel,
            block_pairs: matrix.counts.len(),
        });
        out.relations[view.source_relation[i]].edges = view.to_local_edges(rel, &sampled);
    }

    let copied_relations = out
        .relations
        .iter()
        .enumerate()
        .filter(|(i, _)| !view.source_relation.contains(i))
        .map(|(_, r)| match r.kind {
            reldiff_core::RelationKind::Link { link } => schema.link_name(link),
            reldiff_core::RelationKind::M2M { junction } => {
                format!("m2m:{}", schema.tables[junction].name)
            }
        })
        .collect();

    let graph = m2m_invert(&out, &log)?;
    graph.validate()?;
    debug_assert_eq!(graph.node_counts, g.node_counts);

    Ok(GeneratedStructure {
        graph,
        summary: StructureSummary {
            dl_type_only: report.dl_type_only,
            dl_inferred: report.dl_inferred,
            level_block_counts: report.level_block_counts,
            relations,
            copied_relations,
        },
    })
}
