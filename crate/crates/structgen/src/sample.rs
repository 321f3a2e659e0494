//! Microcanonical edge sampling: stub matching within block pairs preserves
//! every node's per-side degree and every block-pair edge count exactly.
//! Degree-preserving double-edge swaps inside a block pair remove parallel
//! edges and self-loops when the source relation was simple.

use std::collections::{BTreeMap, HashMap, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::dl::{BlockEdgeMatrix, RelationDegrees};
use crate::{Result, StructError};

#[derive(Debug, Clone, Copy)]
pub struct EdgeSampleConfig {
    /// Forbid duplicate (src, dst) pairs. Set when the source relation has
    /// no parallel edges.
    pub forbid_parallel: bool,
    /// Forbid src == dst edges. Only meaningful for same-table relations;
    /// set when the source relation has none.
    pub forbid_self_loops: bool,
    /// Swap-attempt cap as a multiple of the edge count.
    pub max_swap_factor: usize,
}

impl Default for EdgeSampleConfig {
    fn default() -> Self {
        Self {
            forbid_parallel: true,
            forbid_self_loops: true,
            max_swap_factor: 100,
        }
    }
}

/// Sample an edge set with exactly the given per-node degrees and exactly
/// the given block-pair edge counts. Node ids are global; `assignment` maps
/// nodes to blocks.
pub fn sample_edge_set(
    degrees: &RelationDegrees,
    assignment: &[u32],
    matrix: &BlockEdgeMatrix,
    cfg: &EdgeSampleConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(u32, u32)>> {
    // Stub lists per block, in node order then shuffled.
    let mut src_stubs: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    let mut dst_stubs: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for (v, &d) in degrees.out_degrees.iter().enumerate() {
        if d > 0 {
            src_stubs
                .entry(assignment[v])
                .or_default()
                .extend(std::iter::repeat(v as u32).take(d as usize));
        }
    }
    for (v, &d) in degrees.in_degrees.iter().enumerate() {
        if d > 0 {
            dst_stubs
                .entry(assignment[v])
                .or_default()
                .extend(std::iter::repeat(v as u32).take(d as usize));
        }
    }

    // The matrix must match the stub totals on both sides.
    let mut row_sums: BTreeMap<u32, u64> = BTreeMap::new();
    let mut col_sums: BTreeMap<u32, u64> = BTreeMap::new();
    for (&(s, t), &e) in &matrix.counts {
        *row_sums.entry(s).or_insert(0) += e;
        *col_sums.entry(t).or_insert(0) += e;
    }
    for (block, stubs) in &src_stubs {
        if row_sums.get(block).copied().unwrap_or(0) != stubs.len() as u64 {
            return Err(StructError::InconsistentInputs(format!(
                "source block {block}: {} stubs vs {} matrix edges",
                stubs.len(),
                row_sums.get(block).copied().unwrap_or(0)
            )));
        }
    }
    for (block, stubs) in &dst_stubs {
        if col_sums.get(block).copied().unwrap_or(0) != stubs.len() as u64 {
            return Err(StructError::InconsistentInputs(format!(
                "target block {block}: {} stubs vs {} matrix edges",
                stubs.len(),
                col_sums.get(block).copied().unwrap_or(0)
            )));
        }
    }
    if matrix.total() != degrees.edge_count as u64 {
        return Err(StructError::InconsistentInputs(format!(
            "matrix total {} vs {} edges",
            matrix.total(),
            degrees.edge_count
        )));
    }

    for stubs in src_stubs.values_mut() {
        stubs.shuffle(rng);
    }
    for stubs in dst_stubs.values_mut() {
        stubs.shuffle(rng);
    }

    let mut src_cursor: BTreeMap<u32, usize> = BTreeMap::new();
    let mut dst_cursor: BTreeMap<u32, usize> = BTreeMap::new();
    let mut edges = Vec::with_capacity(degrees.edge_count);
    for (&(s, t), &e) in &matrix.counts {
        let sc = src_cursor.entry(s).or_insert(0);
        let src = &src_stubs[&s];
        let start_s = *sc;
        *sc += e as usize;
        let dc = dst_cursor.entry(t).or_insert(0);
        let dst = &dst_stubs[&t];
        let start_d = *dc;
        *dc += e as usize;
        for k in 0..e as usize {
            edges.push((src[start_s + k], dst[start_d + k]));
        }
    }

    if cfg.forbid_parallel || cfg.forbid_self_loops {
        rewire_to_simple(&mut edges, assignment, cfg, rng)?;
    }
    Ok(edges)
}

/// Remove parallel edges and self-loops by double-edge swaps restricted to
/// the same block pair; degrees and block counts are invariant under every
/// swap. Errors once the attempt cap is exceeded.
pub fn rewire_to_simple(
    edges: &mut [(u32, u32)],
    assignment: &[u32],
    cfg: &EdgeSampleConfig,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let m = edges.len();
    if m == 0 {
        return Ok(());
    }
    let mut groups: BTreeMap<(u32, u32), Vec<usize>> = BTreeMap::new();
    for (i, &(s, d)) in edges.iter().enumerate() {
        groups
            .entry((assignment[s as usize], assignment[d as usize]))
            .or_default()
            .push(i);
    }
    let mut occupancy: HashMap<(u32, u32), u32> = HashMap::with_capacity(m);
    for &(s, d) in edges.iter() {
        *occupancy.entry((s, d)).or_insert(0) += 1;
    }
    let violates = |edge: (u32, u32), occupancy: &HashMap<(u32, u32), u32>| {
        (cfg.forbid_self_loops && edge.0 == edge.1)
            || (cfg.forbid_parallel && occupancy.get(&edge).copied().unwrap_or(0) > 1)
    };

    let mut worklist: VecDeque<usize> = (0..m)
        .filter(|&i| violates(edges[i], &occupancy))
        .collect();
    let cap = cfg.max_swap_factor.max(1) * m;
    let mut attempts = 0usize;
    while let Some(i) = worklist.pop_front() {
        if !violates(edges[i], &occupancy) {
            continue;
        }
        let (u1, v1) = edges[i];
        let key = (assignment[u1 as usize], assignment[v1 as usize]);
        let group = &groups[&key];
        let mut fixed = false;
        // A handful of partner attempts per round-trip through the worklist.
        for _ in 0..8 {
            attempts += 1;
            if attempts > cap {
                return Err(StructError::RewiringFailed { attempts });
            }
            let j = group[rng.random_range(0..group.len())];
            if j == i {
                continue;
            }
            let (u2, v2) = edges[j];
            let a = (u1, v2);
            let b = (u2, v1);
            if cfg.forbid_self_loops && (a.0 == a.1 || b.0 == b.1) {
                continue;
            }
            if cfg.forbid_parallel
                && (occupancy.get(&a).copied().unwrap_or(0) > 0
                    || occupancy.get(&b).copied().unwrap_or(0) > 0)
            {
                continue;
            }
            for old in [(u1, v1), (u2, v2)] {
                let e = occupancy.get_mut(&old).expect("edge present");
                *e -= 1;
                if *e == 0 {
                    occupancy.remove(&old);
                }
            }
            *occupancy.entry(a).or_insert(0) += 1;
            *occupancy.entry(b).or_insert(0) += 1;
            edges[i] = a;
            edges[j] = b;
            fixed = true;
            break;
        }
        if !fixed {
            worklist.push_back(i);
        }
    }
    Ok(())
}
