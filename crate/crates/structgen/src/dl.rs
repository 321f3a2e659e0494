//! Description length of a relation's edge set under a degree-corrected
//! block model with a (possibly nested) typed partition.
//!
//! Per relation the cost has three parts: the microcanonical entropy of the
//! edge placement given block pair counts and per-side degree sequences, the
//! cost of the degree sequences given block totals, and the cost of the
//! block pair counts themselves (encoded through the nested hierarchy when
//! one is present). Partition priors are accounted once per graph. Relations
//! are treated as bipartite between their source and target sides, so both
//! sides' degree sequences are preserved by sampling; for relations between
//! distinct tables this coincides with the undirected formulation.

use std::collections::BTreeMap;

use crate::partition::BlockPartition;
use crate::view::{GraphView, RelationView};

/// Cumulative log-factorial table.
pub struct LnFact {
    table: Vec<f64>,
}

impl LnFact {
    pub fn with_capacity(max: usize) -> Self {
        let mut table = Vec::with_capacity(max + 1);
        table.push(0.0);
        let mut acc = 0.0f64;
        for k in 1..=max {
            acc += (k as f64).ln();
            table.push(acc);
        }
        Self { table }
    }

    #[inline]
    pub fn ln_fact(&self, k: i64) -> f64 {
        debug_assert!(k >= 0);
        self.table[k as usize]
    }

    /// ln C(n, k); zero when the binomial degenerates.
    #[inline]
    pub fn ln_binom(&self, n: i64, k: i64) -> f64 {
        if n <= 0 || k <= 0 || k >= n {
            return 0.0;
        }
        self.ln_fact(n) - self.ln_fact(k) - self.ln_fact(n - k)
    }

    pub fn capacity(&self) -> usize {
        self.table.len() - 1
    }
}

#[inline]
pub(crate) fn xlnx(x: i64) -> f64 {
    if x <= 1 {
        0.0
    } else {
        let f = x as f64;
        f * f.ln()
    }
}

/// Per-relation degree sequences over global node ids. `k_v^r` counts both
/// endpoint sides, so the degrees sum to twice the edge count.
#[derive(Debug, Clone)]
pub struct RelationDegrees {
    pub out_degrees: Vec<u32>,
    pub in_degrees: Vec<u32>,
    pub edge_count: usize,
}

impl RelationDegrees {
    pub fn from_edges(edges: &[(u32, u32)], n_nodes: usize) -> Self {
        let mut out_degrees = vec![0u32; n_nodes];
        let mut in_degrees = vec![0u32; n_nodes];
        for &(s, d) in edges {
            out_degrees[s as usize] += 1;
            in_degrees[d as usize] += 1;
        }
        Self {
            out_degrees,
            in_degrees,
            edge_count: edges.len(),
        }
    }

    /// The spec-level degree of one node: stubs on both sides.
    pub fn degree(&self, v: usize) -> u32 {
        self.out_degrees[v] + self.in_degrees[v]
    }
}

/// Sparse block-pair edge counts, keyed (source block, target block).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockEdgeMatrix {
    pub counts: BTreeMap<(u32, u32), u64>,
}

impl BlockEdgeMatrix {
    pub fn from_edges(edges: &[(u32, u32)], assignment: &[u32]) -> Self {
        let mut counts = BTreeMap::new();
        for &(s, d) in edges {
            *counts
                .entry((assignment[s as usize], assignment[d as usize]))
                .or_insert(0u64) += 1;
        }
        Self { counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }
}

struct BlockAggregates {
    e_pair: BTreeMap<(u32, u32), i64>,
    e_src: BTreeMap<u32, i64>,
    e_dst: BTreeMap<u32, i64>,
}

fn aggregate(rel: &RelationView, assignment: &[u32]) -> BlockAggregates {
    let mut e_pair = BTreeMap::new();
    let mut e_src = BTreeMap::new();
    let mut e_dst = BTreeMap::new();
    for &(s, d) in &rel.edges {
        let bs = assignment[s as usize];
        let bd = assignment[d as usize];
        *e_pair.entry((bs, bd)).or_insert(0) += 1;
        *e_src.entry(bs).or_insert(0) += 1;
        *e_dst.entry(bd).or_insert(0) += 1;
    }
    BlockAggregates {
        e_pair,
        e_src,
        e_dst,
    }
}

/// Microcanonical entropy of one relation given the level-0 partition:
/// `-m - sum ln k_out! - sum ln k_in! - sum_st e_st ln(e_st / (e_s e_t))`.
fn entropy(rel: &RelationView, degrees: &RelationDegrees, agg: &BlockAggregates) -> f64 {
    let _ = rel;
    let mut s = -(degrees.edge_count as f64);
    for &d in &degrees.out_degrees {
        if d > 1 {
            s -= ln_fact_small(d);
        }
    }
    for &d in &degrees.in_degrees {
        if d > 1 {
            s -= ln_fact_small(d);
        }
    }
    for (_, &e) in &agg.e_pair {
        s -= xlnx(e);
    }
    for (_, &e) in &agg.e_src {
        s += xlnx(e);
    }
    for (_, &e) in &agg.e_dst {
        s += xlnx(e);
    }
    s
}

fn ln_fact_small(k: u32) -> f64 {
    let mut acc = 0.0;
    for i in 2..=k as u64 {
        acc += (i as f64).ln();
    }
    acc
}

/// Cost of the per-side degree sequences given block stub totals (stars and
/// bars per block).
fn degree_cost(agg: &BlockAggregates, block_sizes: &[i64], lnf: &LnFact) -> f64 {
    let mut cost = 0.0;
    for (&b, &e) in &agg.e_src {
        cost += lnf.ln_binom(block_sizes[b as usize] + e - 1, e);
    }
    for (&b, &e) in &agg.e_dst {
        cost += lnf.ln_binom(block_sizes[b as usize] + e - 1, e);
    }
    cost
}

/// Cost of the block pair counts, encoded through the nested hierarchy. The
/// coarsest level pays a flat multiset cost over its block pairs; each finer
/// level pays the cost of splitting every coarse pair's count across the
/// finer pairs it contains.
pub(crate) fn nested_matrix_cost(
    src_type: u32,
    dst_type: u32,
    level0_pairs: &BTreeMap<(u32, u32), i64>,
    partition: &BlockPartition,
    lnf: &LnFact,
) -> f64 {
    let m = level0_pairs.values().sum::<i64>();
    let levels = &partition.levels;
    let top = levels.len() - 1;

    // Blocks of the relevant types at each level.
    let blocks_of_type = |level: usize, ty: u32| -> i64 {
        partition.block_types[level]
            .iter()
            .filter(|&&t| t == ty)
            .count() as i64
    };

    // Lift pair counts level by level, paying the refinement cost.
    let mut cost = 0.0;
    let mut pairs = level0_pairs.clone();
    for level in 1..=top {
        let map = &levels[level];
        let mut lifted: BTreeMap<(u32, u32), i64> = BTreeMap::new();
        for (&(s, t), &e) in &pairs {
            let key = (map[s as usize], map[t as usize]);
            *lifted.entry(key).or_insert(0) += e;
        }
        // Number of fine pairs available inside each coarse pair.
        let mut src_members: BTreeMap<u32, i64> = BTreeMap::new();
        let mut dst_members: BTreeMap<u32, i64> = BTreeMap::new();
        for (fine, &coarse) in map.iter().enumerate() {
            let ty = partition.block_types[level - 1][fine];
            if ty == src_type {
                *src_members.entry(coarse).or_insert(0) += 1;
            }
            if ty == dst_type {
                *dst_members.entry(coarse).or_insert(0) += 1;
            }
        }
        for (&(cs, ct), &e) in &lifted {
            let cells = src_members.get(&cs).copied().unwrap_or(0)
                * dst_members.get(&ct).copied().unwrap_or(0);
            cost += lnf.ln_binom(cells + e - 1, e);
        }
        pairs = lifted;
    }

    let b_src = blocks_of_type(top, src_type);
    let b_dst = blocks_of_type(top, dst_type);
    cost += lnf.ln_binom(b_src * b_dst + m - 1, m);
    cost
}

/// Description length of one relation's edge set under the given partition:
/// entropy plus degree-sequence and block-matrix model costs. Lower is
/// better; partition priors are accounted separately at graph level.
pub fn description_length(
    rel: &RelationView,
    degrees: &RelationDegrees,
    partition: &BlockPartition,
) -> f64 {
    let assignment = &partition.levels[0];
    let agg = aggregate(rel, assignment);
    let sizes = partition.block_sizes();
    let lnf = LnFact::with_capacity(lnfact_capacity(assignment.len(), degrees.edge_count));
    entropy(rel, degrees, &agg)
        + degree_cost(&agg, &sizes, &lnf)
        + nested_matrix_cost(rel.src_type, rel.dst_type, &agg.e_pair, partition, &lnf)
}

pub(crate) fn lnfact_capacity(n_nodes: usize, edges: usize) -> usize {
    n_nodes + 2 * edges + 4096
}

/// Partition prior over all levels: per type, a uniform choice of the block
/// count, a uniform composition of the sizes, and the multinomial count of
/// labelings with those sizes.
pub(crate) fn partition_cost(view: &GraphView, partition: &BlockPartition, lnf: &LnFact) -> f64 {
    let mut cost = 0.0;
    // Level 0: nodes into blocks.
    let sizes = partition.block_sizes();
    cost += level_cost_by_type(
        view.n_types,
        &view.type_counts.iter().map(|&c| c as i64).collect::<Vec<_>>(),
        &partition.block_types[0],
        &sizes,
        lnf,
    );
    // Upper levels: blocks into superblocks.
    for level in 1..partition.levels.len() {
        let lower_types = &partition.block_types[level - 1];
        let mut lower_per_type = vec![0i64; view.n_types];
        for &t in lower_types {
            lower_per_type[t as usize] += 1;
        }
        let mut sizes = vec![0i64; partition.block_types[level].len()];
        for &g in &partition.levels[level] {
            sizes[g as usize] += 1;
        }
        cost += level_cost_by_type(
            view.n_types,
            &lower_per_type,
            &partition.block_types[level],
            &sizes,
            lnf,
        );
    }
    cost
}

fn level_cost_by_type(
    n_types: usize,
    items_per_type: &[i64],
    group_types: &[u32],
    group_sizes: &[i64],
    lnf: &LnFact,
) -> f64 {
    let mut groups_per_type = vec![0i64; n_types];
    let mut sum_lnfact_sizes = vec![0.0f64; n_types];
    for (g, &t) in group_types.iter().enumerate() {
        if group_sizes[g] > 0 {
            groups_per_type[t as usize] += 1;
            sum_lnfact_sizes[t as usize] += lnf.ln_fact(group_sizes[g]);
        }
    }
    let mut cost = 0.0;
    for ty in 0..n_types {
        let n = items_per_type[ty];
        if n == 0 {
            continue;
        }
        let b = groups_per_type[ty];
        cost += lnf.ln_binom(n - 1, b - 1);
        cost += (n as f64).ln();
        cost += lnf.ln_fact(n) - sum_lnfact_sizes[ty];
    }
    cost
}

/// Total description length of the graph: all relations plus the partition
/// prior. This is the objective the partition search minimizes.
pub fn graph_description_length(view: &GraphView, partition: &BlockPartition) -> f64 {
    let lnf = LnFact::with_capacity(lnfact_capacity(view.n_nodes, view.edge_total()));
    let mut total = partition_cost(view, partition, &lnf);
    for rel in &view.relations {
        let degrees = RelationDegrees::from_edges(&rel.edges, view.n_nodes);
        let assignment = &partition.levels[0];
        let agg = aggregate(rel, assignment);
        let sizes = partition.block_sizes();
        total += entropy(rel, &degrees, &agg)
            + degree_cost(&agg, &sizes, &lnf)
            + nested_matrix_cost(rel.src_type, rel.dst_type, &agg.e_pair, partition, &lnf);
    }
    total
}
