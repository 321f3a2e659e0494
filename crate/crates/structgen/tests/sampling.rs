//! Exactness and distributional checks for microcanonical edge sampling.

use std::collections::{BTreeMap, HashMap};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use reldiff_structgen::{
    rewire_to_simple, sample_edge_set, BlockEdgeMatrix, EdgeSampleConfig, RelationDegrees,
};

fn degrees(out: &[u32], inn: &[u32]) -> RelationDegrees {
    RelationDegrees {
        out_degrees: out.to_vec(),
        in_degrees: inn.to_vec(),
        edge_count: out.iter().map(|&d| d as usize).sum(),
    }
}

#[test]
fn forced_matching_by_degree_preservation() {
    // Parents with in-degrees {2,1,1}, four children of out-degree 1, one
    // block per type: parent 0 must receive exactly two children.
    let out = [1, 1, 1, 1, 0, 0, 0];
    let inn = [0, 0, 0, 0, 2, 1, 1];
    let assignment = [0, 0, 0, 0, 1, 1, 1];
    let matrix = BlockEdgeMatrix::from_edges(
        &[(0, 4), (1, 4), (2, 5), (3, 6)],
        &assignment,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let edges = sample_edge_set(
            &degrees(&out, &inn),
            &assignment,
            &matrix,
            &EdgeSampleConfig::default(),
            &mut rng,
        )
        .unwrap();
        let got = RelationDegrees::from_edges(&edges, 7);
        assert_eq!(got.out_degrees, out);
        assert_eq!(got.in_degrees, inn);
    }
}

#[test]
fn block_pair_counts_exact() {
    // Two parent blocks with e_{AB}=3, e_{AC}=1: the sampled set reproduces
    // both counts exactly.
    let out = [1, 1, 1, 1, 0, 0, 0, 0];
    let inn = [0, 0, 0, 0, 2, 1, 1, 0];
    let assignment = [0, 0, 0, 1, 2, 2, 3, 3];
    let original = [(0u32, 4u32), (1, 4), (2, 5), (3, 6)];
    let matrix = BlockEdgeMatrix::from_edges(&original, &assignment);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let edges = sample_edge_set(
            &degrees(&out, &inn),
            &assignment,
            &matrix,
            &EdgeSampleConfig::default(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(BlockEdgeMatrix::from_edges(&edges, &assignment), matrix);
    }
}

#[test]
fn perfect_matchings_uniform() {
    // 3x3, all degrees one, one block per side: each of the 6 matchings
    // appears with frequency 1/6 within 3 sigma over 10k seeds.
    let out = [1, 1, 1, 0, 0, 0];
    let inn = [0, 0, 0, 1, 1, 1];
    let assignment = [0, 0, 0, 1, 1, 1];
    let matrix = BlockEdgeMatrix::from_edges(&[(0, 3), (1, 4), (2, 5)], &assignment);
    let n = 10_000;
    let mut counts: HashMap<[u32; 3], usize> = HashMap::new();
    for seed in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let edges = sample_edge_set(
            &degrees(&out, &inn),
            &assignment,
            &matrix,
            &EdgeSampleConfig::default(),
            &mut rng,
        )
        .unwrap();
        let mut perm = [0u32; 3];
        for (s, d) in edges {
            perm[s as usize] = d - 3;
        }
        *counts.entry(perm).or_insert(0) += 1;
    }
    assert_eq!(counts.len(), 6, "all matchings reachable");
    let expect = n as f64 / 6.0;
    let sigma = (n as f64 * (1.0 / 6.0) * (5.0 / 6.0)).sqrt();
    for (perm, count) in counts {
        let dev = (count as f64 - expect).abs();
        assert!(
            dev <= 3.0 * sigma,
            "matching {perm:?}: {count} vs {expect} (3 sigma = {})",
            3.0 * sigma
        );
    }
}

#[test]
fn rewire_leaves_simple_input_unchanged() {
    let assignment = [0, 0, 1, 1];
    let mut edges = vec![(0u32, 2u32), (1, 3)];
    let before = edges.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    rewire_to_simple(
        &mut edges,
        &assignment,
        &EdgeSampleConfig::default(),
        &mut rng,
    )
    .unwrap();
    assert_eq!(edges, before);
}

#[test]
fn rewire_resolves_double_edge_exhaustive() {
    // Double edge (0,2),(0,2) plus (1,3) in the same block pair: the unique
    // simple resolution with the same degrees is {(0,2),(0,3),(1,2)}.
    let assignment = [0, 0, 1, 1];
    for seed in 0..50 {
        let mut edges = vec![(0u32, 2u32), (0, 2), (1, 3)];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rewire_to_simple(
            &mut edges,
            &assignment,
            &EdgeSampleConfig::default(),
            &mut rng,
        )
        .unwrap();
        let mut sorted = edges.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![(0, 2), (0, 3), (1, 2)]);
    }
}

#[test]
fn rewire_preserves_degrees_on_random_multisets() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for trial in 0..30 {
        use rand::Rng as _;
        let n_src = 6u32;
        let n_dst = 6u32;
        let assignment: Vec<u32> = (0..12).map(|v| if v < 6 { 0 } else { 1 }).collect();
        let m = 14;
        let edges_orig: Vec<(u32, u32)> = (0..m)
            .map(|_| (rng.random_range(0..n_src), 6 + rng.random_range(0..n_dst)))
            .collect();
        let before = RelationDegrees::from_edges(&edges_orig, 12);
        let mut edges = edges_orig.clone();
        let result = rewire_to_simple(
            &mut edges,
            &assignment,
            &EdgeSampleConfig {
                forbid_parallel: true,
                forbid_self_loops: false,
                max_swap_factor: 100,
            },
            &mut rng,
        );
        if result.is_err() {
            continue; // no simple graph with these degrees; cap is honest
        }
        let after = RelationDegrees::from_edges(&edges, 12);
        assert_eq!(before.out_degrees, after.out_degrees, "trial {trial}");
        assert_eq!(before.in_degrees, after.in_degrees, "trial {trial}");
    }
}

#[test]
fn infeasible_simple_graph_errors() {
    // Two parallel edges between singleton blocks cannot be made simple.
    let assignment = [0, 1];
    let matrix = BlockEdgeMatrix {
        counts: BTreeMap::from([((0, 1), 2)]),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let err = sample_edge_set(
        &degrees(&[2, 0], &[0, 2]),
        &assignment,
        &matrix,
        &EdgeSampleConfig::default(),
        &mut rng,
    )
    .unwrap_err();
    assert!(matches!(
        err,
        reldiff_structgen::StructError::RewiringFailed { .. }
    ));
}

#[test]
fn inconsistent_matrix_rejected() {
    let assignment = [0, 1];
    let matrix = BlockEdgeMatrix {
        counts: BTreeMap::from([((0, 1), 3)]),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let err = sample_edge_set(
        &degrees(&[2, 0], &[0, 2]),
        &assignment,
        &matrix,
        &EdgeSampleConfig::default(),
        &mut rng,
    )
    .unwrap_err();
    assert!(matches!(
        err,
        reldiff_structgen::StructError::InconsistentInputs(_)
    ));
}
