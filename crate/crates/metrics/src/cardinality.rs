use std::collections::BTreeMap;

use reldiff_core::{build_entity_graph, Database};

use crate::shape::kst_score;
use crate::Result;

/// Per-relation similarity of parent cardinality distributions: the KS
/// complement between the real and synthetic child-count distributions.
/// 1.0 means identical multisets of child counts.
pub fn cardinality_similarity(real: &Database, syn: &Database) -> Result<BTreeMap<String, f64>> {
    let g_real = build_entity_graph(real);
    let g_syn = build_entity_graph(syn);
    let mut out = BTreeMap::new();
    for (link_idx, _) in real.schema.links.iter().enumerate() {
        let rel_r = &g_real.relations[link_idx];
        let rel_s = &g_syn.relations[link_idx];
        let deg_r: Vec<f64> = rel_r
            .in_degrees(real.tables[rel_r.dst_table].len())
            .into_iter()
            .map(f64::from)
            .collect();
        let deg_s: Vec<f64> = rel_s
            .in_degrees(syn.tables[rel_s.dst_table].len())
            .into_iter()
            .map(f64::from)
            .collect();
        if deg_r.is_empty() || deg_s.is_empty() {
            continue;
        }
        out.insert(real.schema.link_name(link_idx), kst_score(&deg_r, &deg_s)?);
    }
    Ok(out)
}
