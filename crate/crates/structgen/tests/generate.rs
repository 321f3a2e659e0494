//! End-to-end structure generation invariants on entity graphs.

use proptest::prelude::*;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use reldiff_core::schema::schema_from_json;
use reldiff_core::{EntityGraph, Relation, RelationKind, Schema};
use reldiff_structgen::{generate_structure, StructConfig};

fn store_sales_schema() -> Schema {
    schema_from_json(
        r#"{"tables": [
          {"name": "store", "primary_key": "sid",
           "columns": [{"name": "size", "type": "numerical"}]},
          {"name": "sales", "primary_key": "id",
           "columns": [{"name": "amount", "type": "numerical"}],
           "foreign_keys": [{"column": "sid", "references_table": "store",
                             "references_column": "sid"}]}
        ]}"#,
    )
    .unwrap()
}

fn graph_with_degrees(child_of: &[u32], n_parents: usize) -> EntityGraph {
    EntityGraph {
        node_counts: vec![n_parents, child_of.len()],
        relations: vec![Relation {
            kind: RelationKind::Link { link: 0 },
            src_table: 1,
            dst_table: 0,
            edges: child_of
                .iter()
                .enumerate()
                .map(|(i, &p)| (i as u32, p))
                .collect(),
        }],
    }
}

fn assert_exactness(original: &EntityGraph, generated: &EntityGraph) {
    assert_eq!(original.node_counts, generated.node_counts);
    assert_eq!(original.relations.len(), generated.relations.len());
    for (a, b) in original.relations.iter().zip(&generated.relations) {
        assert_eq!(a.kind, b.kind);
        assert_eq!(a.edges.len(), b.edges.len());
        assert_eq!(
            a.out_degrees(original.node_counts[a.src_table]),
            b.out_degrees(generated.node_counts[b.src_table]),
            "out-degree sequence changed"
        );
        assert_eq!(
            a.in_degrees(original.node_counts[a.dst_table]),
            b.in_degrees(generated.node_counts[b.dst_table]),
            "in-degree sequence changed"
        );
    }
}

#[test]
fn degrees_preserved_exactly() {
    let schema = store_sales_schema();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let child_of: Vec<u32> = (0..500).map(|_| rng.random_range(0..60u32)).collect();
    let g = graph_with_degrees(&child_of, 60);
    let gen = generate_structure(&g, &schema, &StructConfig::default(), 99).unwrap();
    assert_exactness(&g, &gen.graph);
}

#[test]
fn deterministic_given_seed() {
    let schema = store_sales_schema();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let child_of: Vec<u32> = (0..200).map(|_| rng.random_range(0..30u32)).collect();
    let g = graph_with_degrees(&child_of, 30);
    let a = generate_structure(&g, &schema, &StructConfig::default(), 13).unwrap();
    let b = generate_structure(&g, &schema, &StructConfig::default(), 13).unwrap();
    assert_eq!(a.graph, b.graph);
    let c = generate_structure(&g, &schema, &StructConfig::default(), 14).unwrap();
    assert!(a.graph != c.graph || a.graph.edge_total() <= 1);
}

#[test]
fn junction_rows_recreated_with_new_pairs() {
    let schema = schema_from_json(
        r#"{"tables": [
          {"name": "paper", "primary_key": "pid",
           "columns": [{"name": "label", "type": "categorical"}]},
          {"name": "cites", "primary_key": "cid", "columns": [],
           "foreign_keys": [
             {"column": "citing", "references_table": "paper", "references_column": "pid"},
             {"column": "cited", "references_table": "paper", "references_column": "pid"}]}
        ]}"#,
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n_papers = 40usize;
    let mut seen = std::collections::HashSet::new();
    let mut edges = Vec::new();
    while edges.len() < 120 {
        let a = rng.random_range(0..n_papers as u32);
        let b = rng.random_range(0..n_papers as u32);
        if a != b && seen.insert((a, b)) {
            edges.push((a, b));
        }
    }
    let g = EntityGraph {
        node_counts: vec![n_papers, edges.len()],
        relations: vec![
            Relation {
                kind: RelationKind::Link { link: 0 },
                src_table: 1,
                dst_table: 0,
                edges: edges.iter().enumerate().map(|(i, (a, _))| (i as u32, *a)).collect(),
            },
            Relation {
                kind: RelationKind::Link { link: 1 },
                src_table: 1,
                dst_table: 0,
                edges: edges.iter().enumerate().map(|(i, (_, b))| (i as u32, *b)).collect(),
            },
        ],
    };
    let gen = generate_structure(&g, &schema, &StructConfig::default(), 21).unwrap();
    // Junction row count preserved; per-paper citing/cited degrees exact.
    assert_exactness(&g, &gen.graph);
    // The m2m relation was treated as simple with no self-loops, so the
    // regenerated junction rows never cite themselves or repeat a pair.
    let citing = &gen.graph.relations[0].edges;
    let cited = &gen.graph.relations[1].edges;
    let mut pairs = std::collections::HashSet::new();
    for i in 0..citing.len() {
        assert_eq!(citing[i].0, cited[i].0);
        let pair = (citing[i].1, cited[i].1);
        assert_ne!(pair.0, pair.1, "self-citation introduced");
        assert!(pairs.insert(pair), "parallel citation introduced");
    }
}

#[test]
fn dimension_links_copied_verbatim() {
    // `sales` has an incoming link, so it is not a junction table; its
    // reference into the dimension table is copied, not resampled.
    let schema = schema_from_json(
        r#"{"tables": [
          {"name": "product", "primary_key": "pid", "dimension": true,
           "columns": [{"name": "kind", "type": "categorical"}]},
          {"name": "store", "primary_key": "sid",
           "columns": [{"name": "size", "type": "numerical"}]},
          {"name": "sales", "primary_key": "id",
           "columns": [{"name": "amount", "type": "numerical"}],
           "foreign_keys": [
             {"column": "sid", "references_table": "store", "references_column": "sid"},
             {"column": "pid", "references_table": "product", "references_column": "pid"}]},
          {"name": "returns", "primary_key": "id", "columns": [],
           "foreign_keys": [
             {"column": "sale", "references_table": "sales", "references_column": "id"}]}
        ]}"#,
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let n_sales = 200usize;
    let store_edges: Vec<(u32, u32)> = (0..n_sales)
        .map(|i| (i as u32, rng.random_range(0..20u32)))
        .collect();
    let product_edges: Vec<(u32, u32)> = (0..n_sales)
        .map(|i| (i as u32, rng.random_range(0..5u32)))
        .collect();
    let return_edges: Vec<(u32, u32)> = (0..40)
        .map(|i| (i as u32, rng.random_range(0..n_sales as u32)))
        .collect();
    let g = EntityGraph {
        node_counts: vec![5, 20, n_sales, 40],
        relations: vec![
            Relation {
                kind: RelationKind::Link { link: 0 },
                src_table: 2,
                dst_table: 1,
                edges: store_edges,
            },
            Relation {
                kind: RelationKind::Link { link: 1 },
                src_table: 2,
                dst_table: 0,
                edges: product_edges.clone(),
            },
            Relation {
                kind: RelationKind::Link { link: 2 },
                src_table: 3,
                dst_table: 2,
                edges: return_edges,
            },
        ],
    };
    let gen = generate_structure(&g, &schema, &StructConfig::default(), 3).unwrap();
    // The dimension reference edges are not resampled.
    assert_eq!(gen.graph.relations[1].edges, product_edges);
    assert_eq!(gen.summary.copied_relations.len(), 1);
    assert_exactness(&g, &gen.graph);
}

#[test]
fn two_parent_table_with_dimension_parent_is_still_a_junction() {
    // Two outgoing foreign keys and no children: the junction transform
    // wins, so even the dimension-side pairing is resampled structurally
    // (per-dimension-row cardinalities stay exact).
    let schema = schema_from_json(
        r#"{"tables": [
          {"name": "product", "primary_key": "pid", "dimension": true,
           "columns": [{"name": "kind", "type": "categorical"}]},
          {"name": "store", "primary_key": "sid",
           "columns": [{"name": "size", "type": "numerical"}]},
          {"name": "stock", "primary_key": "id", "columns": [],
           "foreign_keys": [
             {"column": "sid", "references_table": "store", "references_column": "sid"},
             {"column": "pid", "references_table": "product", "references_column": "pid"}]}
        ]}"#,
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 150usize;
    let g = EntityGraph {
        node_counts: vec![6, 25, n],
        relations: vec![
            Relation {
                kind: RelationKind::Link { link: 0 },
                src_table: 2,
                dst_table: 1,
                edges: (0..n).map(|i| (i as u32, rng.random_range(0..25u32))).collect(),
            },
            Relation {
                kind: RelationKind::Link { link: 1 },
                src_table: 2,
                dst_table: 0,
                edges: (0..n).map(|i| (i as u32, rng.random_range(0..6u32))).collect(),
            },
        ],
    };
    let gen = generate_structure(&g, &schema, &StructConfig::default(), 5).unwrap();
    assert!(gen.summary.copied_relations.is_empty());
    assert_exactness(&g, &gen.graph);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]
    #[test]
    fn random_graphs_keep_exact_degrees(
        parents in 2usize..12,
        children in prop::collection::vec(0u32..12, 1..60),
        seed in 0u64..1000,
    ) {
        let schema = store_sales_schema();
        let child_of: Vec<u32> = children.iter().map(|&c| c % parents as u32).collect();
        let g = graph_with_degrees(&child_of, parents);
        let gen = generate_structure(&g, &schema, &StructConfig::default(), seed).unwrap();
        prop_assert_eq!(g.node_counts.clone(), gen.graph.node_counts.clone());
        let a = &g.relations[0];
        let b = &gen.graph.relations[0];
        prop_assert_eq!(a.out_degrees(child_of.len()), b.out_degrees(child_of.len()));
        prop_assert_eq!(a.in_degrees(parents), b.in_degrees(parents));
    }
}
