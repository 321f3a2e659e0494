//! Typed block-partition inference by description-length minimization.
//!
//! Greedy single-node move sweeps with merge phases, restarted from a few
//! initializations; the best partition never loses to the trivial type-only
//! partition. Blocks never mix node types. An optional simulated-annealing
//! acceptance rule can replace greedy descent. On top of the converged node
//! partition a nested hierarchy of block groupings is grown greedily while
//! it pays for itself in description length.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::dl::{
    self, graph_description_length, lnfact_capacity, xlnx, LnFact, RelationDegrees,
};
use crate::view::GraphView;
use crate::{StructConfig, StructError};

/// A typed, possibly nested partition. `levels[0]` maps nodes to blocks;
/// `levels[l]` maps level `l-1` blocks to level `l` blocks. Every level is a
/// coarsening of the one below, and blocks at every level are type-pure.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockPartition {
    pub levels: Vec<Vec<u32>>,
    pub block_types: Vec<Vec<u32>>,
}

impl BlockPartition {
    /// The floor of the search space: one block per node type.
    pub fn type_partition(view: &GraphView) -> Self {
        BlockPartition {
            levels: vec![view.node_type.clone()],
            block_types: vec![(0..view.n_types as u32).collect()],
        }
    }

    pub fn flat(assignment: Vec<u32>, block_types: Vec<u32>) -> Self {
        BlockPartition {
            levels: vec![assignment],
            block_types: vec![block_types],
        }
    }

    pub fn num_blocks(&self) -> usize {
        self.block_types[0].len()
    }

    pub fn node_block(&self, v: usize) -> u32 {
        self.levels[0][v]
    }

    pub fn block_sizes(&self) -> Vec<i64> {
        let mut sizes = vec![0i64; self.block_types[0].len()];
        for &b in &self.levels[0] {
            sizes[b as usize] += 1;
        }
        sizes
    }

    /// b(v) = b(u) implies phi(v) = phi(u).
    pub fn respects_types(&self, view: &GraphView) -> bool {
        self.levels[0]
            .iter()
            .enumerate()
            .all(|(v, &b)| self.block_types[0][b as usize] == view.node_type[v])
    }

    pub fn level_block_counts(&self) -> Vec<usize> {
        self.block_types.iter().map(|t| t.len()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct InferenceReport {
    pub dl_inferred: f64,
    pub dl_type_only: f64,
    pub level_block_counts: Vec<usize>,
}

// ---------------------------------------------------------------------------
// Incremental search state over the flat (single-level) description length.
// ---------------------------------------------------------------------------

struct Search<'a> {
    view: &'a GraphView,
    lnf: &'a LnFact,
    // Static per-relation node degrees and adjacency (self-edges kept apart).
    out_deg: Vec<Vec<i64>>,
    in_deg: Vec<Vec<i64>>,
    self_cnt: Vec<Vec<i64>>,
    m: Vec<i64>,
    adj: Vec<Vec<(u32, u32, bool)>>,
    rels_of_type: Vec<Vec<usize>>,
    // Mutable block state. Block ids are append-only within a run; empty
    // blocks remain as tombstones until `compact`.
    b: Vec<u32>,
    block_type: Vec<u32>,
    n: Vec<i64>,
    members: Vec<Vec<u32>>,
    nonempty: Vec<i64>,
    e_pair: Vec<BTreeMap<(u32, u32), i64>>,
    e_src: Vec<Vec<i64>>,
    e_dst: Vec<Vec<i64>>,
    current_dl: f64,
}

impl<'a> Search<'a> {
    fn new(view: &'a GraphView, lnf: &'a LnFact, assignment: &[u32], block_type: Vec<u32>) -> Self {
        let n_rel = view.relations.len();
        let mut out_deg = vec![vec![0i64; view.n_nodes]; n_rel];
        let mut in_deg = vec![vec![0i64; view.n_nodes]; n_rel];
        let mut self_cnt = vec![vec![0i64; view.n_nodes]; n_rel];
        let mut adj: Vec<Vec<(u32, u32, bool)>> = vec![Vec::new(); view.n_nodes];
        let mut m = vec![0i64; n_rel];
        for (r, rel) in view.relations.iter().enumerate() {
            m[r] = rel.edges.len() as i64;
            for &(s, d) in &rel.edges {
                out_deg[r][s as usize] += 1;
                in_deg[r][d as usize] += 1;
                if s == d {
                    self_cnt[r][s as usize] += 1;
                } else {
                    adj[s as usize].push((r as u32, d, true));
                    adj[d as usize].push((r as u32, s, false));
                }
            }
        }
        let mut rels_of_type = vec![Vec::new(); view.n_types];
        for (r, rel) in view.relations.iter().enumerate() {
            rels_of_type[rel.src_type as usize].push(r);
            if rel.dst_type != rel.src_type {
                rels_of_type[rel.dst_type as usize].push(r);
            }
        }

        let n_blocks = block_type.len();
        let mut n = vec![0i64; n_blocks];
        let mut members = vec![Vec::new(); n_blocks];
        for (v, &blk) in assignment.iter().enumerate() {
            n[blk as usize] += 1;
            members[blk as usize].push(v as u32);
        }
        let mut nonempty = vec![0i64; view.n_types];
        for (blk, &ty) in block_type.iter().enumerate() {
            if n[blk] > 0 {
                nonempty[ty as usize] += 1;
            }
        }
        let mut e_pair = vec![BTreeMap::new(); n_rel];
        let mut e_src = vec![vec![0i64; n_blocks]; n_rel];
        let mut e_dst = vec![vec![0i64; n_blocks]; n_rel];
        for (r, rel) in view.relations.iter().enumerate() {
            for &(s, d) in &rel.edges {
                let bs = assignment[s as usize];
                let bd = assignment[d as usize];
                *e_pair[r].entry((bs, bd)).or_insert(0) += 1;
                e_src[r][bs as usize] += 1;
                e_dst[r][bd as usize] += 1;
            }
        }

        let mut search = Search {
            view,
            lnf,
            out_deg,
            in_deg,
            self_cnt,
            m,
            adj,
            rels_of_type,
            b: assignment.to_vec(),
            block_type,
            n,
            members,
            nonempty,
            e_pair,
            e_src,
            e_dst,
            current_dl: 0.0,
        };
        search.current_dl = graph_description_length(view, &search.partition());
        search
    }

    /// Current assignment with tombstoned (empty) blocks compacted away, so
    /// the scratch evaluator and the incremental state agree on block counts.
    fn partition(&self) -> BlockPartition {
        let (assignment, types) = self.compact();
        BlockPartition::flat(assignment, types)
    }

    fn pair(&self, r: usize, s: u32, t: u32) -> i64 {
        self.e_pair[r].get(&(s, t)).copied().unwrap_or(0)
    }

    /// Flat edge-matrix cost for one relation at the current block counts.
    fn flat_matrix_cost(&self, r: usize, b_src: i64, b_dst: i64) -> f64 {
        self.lnf.ln_binom(b_src * b_dst + self.m[r] - 1, self.m[r])
    }

    fn degree_term(&self, size: i64, stubs: i64) -> f64 {
        self.lnf.ln_binom(size + stubs - 1, stubs)
    }

    /// Description-length change of moving node `v` to `target`
    /// (`None` = a fresh block). Assumes `target != b[v]`.
    fn move_delta(&self, v: usize, target: Option<u32>) -> f64 {
        let s = self.b[v];
        let ty = self.view.node_type[v] as usize;
        let (t, t_size) = match target {
            Some(t) => (t, self.n[t as usize]),
            None => (u32::MAX, 0),
        };

        let mut delta = 0.0;
        // Partition prior: multinomial part.
        delta += (self.n[s as usize] as f64).ln() - ((t_size + 1) as f64).ln();

        // Block-count changes.
        let b_before = self.nonempty[ty];
        let mut b_after = b_before;
        if self.n[s as usize] == 1 {
            b_after -= 1;
        }
        if target.is_none() {
            b_after += 1;
        }
        if b_after != b_before {
            let items = self.view.type_counts[ty] as i64;
            delta += self.lnf.ln_binom(items - 1, b_after - 1)
                - self.lnf.ln_binom(items - 1, b_before - 1);
            for &r in &self.rels_of_type[ty] {
                let rel = &self.view.relations[r];
                let bs = self.nonempty[rel.src_type as usize];
                let bd = self.nonempty[rel.dst_type as usize];
                let bs2 = if rel.src_type as usize == ty { b_after } else { bs };
                let bd2 = if rel.dst_type as usize == ty { b_after } else { bd };
                delta += self.flat_matrix_cost(r, bs2, bd2) - self.flat_matrix_cost(r, bs, bd);
            }
        }

        // Degree-sequence costs and entropy sums for every relation that
        // touches this node type (block sizes enter the degree cost even
        // when the node itself has no stubs there).
        for &r in &self.rels_of_type[ty] {
            let rel = &self.view.relations[r];
            let odv = self.out_deg[r][v];
            let idv = self.in_deg[r][v];
            if rel.src_type as usize == ty {
                let es_s = self.e_src[r][s as usize];
                let es_t = if target.is_some() {
                    self.e_src[r][t as usize]
                } else {
                    0
                };
                delta += self.degree_term(self.n[s as usize] - 1, es_s - odv)
                    - self.degree_term(self.n[s as usize], es_s);
                delta += self.degree_term(t_size + 1, es_t + odv)
                    - self.degree_term(t_size, es_t);
                if odv != 0 {
                    delta += xlnx(es_s - odv) - xlnx(es_s) + xlnx(es_t + odv) - xlnx(es_t);
                }
            }
            if rel.dst_type as usize == ty {
                let ed_s = self.e_dst[r][s as usize];
                let ed_t = if target.is_some() {
                    self.e_dst[r][t as usize]
                } else {
                    0
                };
                delta += self.degree_term(self.n[s as usize] - 1, ed_s - idv)
                    - self.degree_term(self.n[s as usize], ed_s);
                delta += self.degree_term(t_size + 1, ed_t + idv)
                    - self.degree_term(t_size, ed_t);
                if idv != 0 {
                    delta += xlnx(ed_s - idv) - xlnx(ed_s) + xlnx(ed_t + idv) - xlnx(ed_t);
                }
            }
        }

        // Block-pair entropy terms touched by v's edges.
        let mut touched: Vec<((u32, u32, u32), i64)> = Vec::with_capacity(self.adj[v].len() + 2);
        for &(r, u, out) in &self.adj[v] {
            let w = self.b[u as usize];
            if out {
                touched.push(((r, s, w), -1));
                touched.push(((r, t, w), 1));
            } else {
                touched.push(((r, w, s), -1));
                touched.push(((r, w, t), 1));
            }
        }
        for (r, cnt) in self.self_cnt.iter().enumerate() {
            let c = cnt[v];
            if c != 0 {
                touched.push(((r as u32, s, s), -c));
                touched.push(((r as u32, t, t), c));
            }
        }
        touched.sort_unstable_by_key(|(k, _)| *k);
        let mut i = 0;
        while i < touched.len() {
            let key = touched[i].0;
            let mut change = 0i64;
            while i < touched.len() && touched[i].0 == key {
                change += touched[i].1;
                i += 1;
            }
            if change == 0 {
                continue;
            }
            let (r, ks, kt) = (key.0 as usize, key.1, key.2);
            let old = if ks == u32::MAX || kt == u32::MAX {
                0
            } else {
                self.pair(r, ks, kt)
            };
            delta -= xlnx(old + change) - xlnx(old);
        }

        delta
    }

    fn apply_move(&mut self, v: usize, target: Option<u32>, delta: f64) {
        let s = self.b[v];
        let ty = self.view.node_type[v] as usize;
        let t = match target {
            Some(t) => t,
            None => {
                let t = self.block_type.len() as u32;
                self.block_type.push(self.view.node_type[v]);
                self.n.push(0);
                self.members.push(Vec::new());
                for r in 0..self.view.relations.len() {
                    self.e_src[r].push(0);
                    self.e_dst[r].push(0);
                }
                t
            }
        };
        // Pair counts first (they read b[u] for neighbors, none of which
        // move), then sums and sizes.
        let adj = std::mem::take(&mut self.adj[v]);
        for &(r, u, out) in &adj {
            let w = self.b[u as usize];
            let r = r as usize;
            let (old_key, new_key) = if out { ((s, w), (t, w)) } else { ((w, s), (w, t)) };
            let e = self.e_pair[r].entry(old_key).or_insert(0);
            *e -= 1;
            if *e == 0 {
                self.e_pair[r].remove(&old_key);
            }
            *self.e_pair[r].entry(new_key).or_insert(0) += 1;
        }
        self.adj[v] = adj;
        for r in 0..self.view.relations.len() {
            let c = self.self_cnt[r][v];
            if c != 0 {
                let e = self.e_pair[r].entry((s, s)).or_insert(0);
                *e -= c;
                if *e == 0 {
                    self.e_pair[r].remove(&(s, s));
                }
                *self.e_pair[r].entry((t, t)).or_insert(0) += c;
            }
            self.e_src[r][s as usize] -= self.out_deg[r][v];
            self.e_src[r][t as usize] += self.out_deg[r][v];
            self.e_dst[r][s as usize] -= self.in_deg[r][v];
            self.e_dst[r][t as usize] += self.in_deg[r][v];
        }
        self.n[s as usize] -= 1;
        self.n[t as usize] += 1;
        let pos = self.members[s as usize]
            .iter()
            .position(|&u| u == v as u32)
            .expect("member bookkeeping");
        self.members[s as usize].swap_remove(pos);
        self.members[t as usize].push(v as u32);
        self.b[v] = t;
        if self.n[s as usize] == 0 {
            self.nonempty[ty] -= 1;
        }
        if self.n[t as usize] == 1 {
            self.nonempty[ty] += 1;
        }
        self.current_dl += delta;
    }

    /// One pass over all nodes in random order, moving each to its best
    /// block (greedy) or to a random block by Metropolis acceptance
    /// (annealing). Returns the number of applied moves.
    fn sweep(&mut self, rng: &mut ChaCha8Rng, beta: Option<f64>) -> usize {
        let mut order: Vec<u32> = (0..self.view.n_nodes as u32)
            .filter(|&v| !self.rels_of_type[self.view.node_type[v as usize] as usize].is_empty())
            .collect();
        order.shuffle(rng);
        let mut moves = 0;
        for v in order {
            let v = v as usize;
            let ty = self.view.node_type[v];
            let candidates: Vec<u32> = (0..self.block_type.len() as u32)
                .filter(|&blk| {
                    self.block_type[blk as usize] == ty
                        && self.n[blk as usize] > 0
                        && blk != self.b[v]
                })
                .collect();
            match beta {
                None => {
                    let mut best: Option<(f64, Option<u32>)> = None;
                    for &c in &candidates {
                        let d = self.move_delta(v, Some(c));
                        if best.as_ref().map_or(true, |(bd, _)| d < *bd) {
                            best = Some((d, Some(c)));
                        }
                    }
                    if self.n[self.b[v] as usize] > 1 {
                        let d = self.move_delta(v, None);
                        if best.as_ref().map_or(true, |(bd, _)| d < *bd) {
                            best = Some((d, None));
                        }
                    }
                    if let Some((d, target)) = best {
                        if d < -1e-10 {
                            self.apply_move(v, target, d);
                            moves += 1;
                        }
                    }
                }
                Some(beta) => {
                    let n_cand = candidates.len() + 1;
                    let pick = rng.random_range(0..n_cand);
                    let target = if pick < candidates.len() {
                        Some(candidates[pick])
                    } else if self.n[self.b[v] as usize] > 1 {
                        None
                    } else {
                        continue;
                    };
                    let d = self.move_delta(v, target);
                    if d < 0.0 || rng.random::<f64>() < (-beta * d).exp() {
                        self.apply_move(v, target, d);
                        moves += 1;
                    }
                }
            }
        }
        moves
    }

    /// Change from merging block `s` into block `t` (same type), computed
    /// from block-level aggregates.
    fn merge_delta(&self, s: u32, t: u32) -> f64 {
        let ty = self.block_type[s as usize] as usize;
        let (ns, nt) = (self.n[s as usize], self.n[t as usize]);
        let mut delta = self.lnf.ln_fact(ns) + self.lnf.ln_fact(nt) - self.lnf.ln_fact(ns + nt);
        let items = self.view.type_counts[ty] as i64;
        let b = self.nonempty[ty];
        delta += self.lnf.ln_binom(items - 1, b - 2) - self.lnf.ln_binom(items - 1, b - 1);

        for (r, rel) in self.view.relations.iter().enumerate() {
            let src_ty = rel.src_type as usize;
            let dst_ty = rel.dst_type as usize;
            if src_ty != ty && dst_ty != ty {
                continue;
            }
            // Flat edge-matrix cost under the reduced block count.
            let bs = self.nonempty[src_ty] - if src_ty == ty { 1 } else { 0 };
            let bd = self.nonempty[dst_ty] - if dst_ty == ty { 1 } else { 0 };
            delta += self.flat_matrix_cost(r, bs, bd)
                - self.flat_matrix_cost(
                    r,
                    self.nonempty[src_ty],
                    self.nonempty[dst_ty],
                );
            if src_ty == ty {
                let (es, et) = (self.e_src[r][s as usize], self.e_src[r][t as usize]);
                delta += self.degree_term(ns + nt, es + et)
                    - self.degree_term(ns, es)
                    - self.degree_term(nt, et);
                delta += xlnx(es + et) - xlnx(es) - xlnx(et);
            }
            if dst_ty == ty {
                let (es, et) = (self.e_dst[r][s as usize], self.e_dst[r][t as usize]);
                delta += self.degree_term(ns + nt, es + et)
                    - self.degree_term(ns, es)
                    - self.degree_term(nt, et);
                delta += xlnx(es + et) - xlnx(es) - xlnx(et);
            }
            // Pair entries touching s or t collapse onto t.
            let mut merged: BTreeMap<(u32, u32), i64> = BTreeMap::new();
            let mut old_term = 0.0;
            for (&(a, c), &e) in &self.e_pair[r] {
                if a == s || a == t || c == s || c == t {
                    old_term += xlnx(e);
                    let a2 = if a == s { t } else { a };
                    let c2 = if c == s { t } else { c };
                    *merged.entry((a2, c2)).or_insert(0) += e;
                }
            }
            let new_term: f64 = merged.values().map(|&e| xlnx(e)).sum();
            delta -= new_term - old_term;
        }
        delta
    }

    fn apply_merge(&mut self, s: u32, t: u32) {
        let members = self.members[s as usize].clone();
        for v in members {
            let d = self.move_delta(v as usize, Some(t));
            self.apply_move(v as usize, Some(t), d);
        }
    }

    /// Greedy merge phase. Returns the number of merges applied.
    fn merge_phase(&mut self) -> usize {
        let mut merges = 0;
        loop {
            let blocks: Vec<u32> = (0..self.block_type.len() as u32)
                .filter(|&b| self.n[b as usize] > 0)
                .collect();
            let mut best: Option<(f64, u32, u32)> = None;
            for (i, &s) in blocks.iter().enumerate() {
                for &t in &blocks[i + 1..] {
                    if self.block_type[s as usize] != self.block_type[t as usize] {
                        continue;
                    }
                    let d = self.merge_delta(s, t);
                    if best.as_ref().map_or(true, |(bd, _, _)| d < *bd) {
                        best = Some((d, s, t));
                    }
                }
            }
            match best {
                Some((d, s, t)) if d < -1e-10 => {
                    let target_dl = self.current_dl + d;
                    self.apply_merge(s, t);
                    self.current_dl = target_dl;
                    merges += 1;
                }
                _ => break,
            }
        }
        merges
    }

    /// Dense re-labeling of non-empty blocks, preserving id order.
    fn compact(&self) -> (Vec<u32>, Vec<u32>) {
        let mut remap = vec![u32::MAX; self.block_type.len()];
        let mut types = Vec::new();
        for (blk, &ty) in self.block_type.iter().enumerate() {
            if self.n[blk] > 0 {
                remap[blk] = types.len() as u32;
                types.push(ty);
            }
        }
        let assignment = self.b.iter().map(|&b| remap[b as usize]).collect();
        (assignment, types)
    }
}

// ---------------------------------------------------------------------------
// Initialization, restarts and the hierarchy.
// ---------------------------------------------------------------------------

fn degree_split_init(view: &GraphView, splits: usize) -> (Vec<u32>, Vec<u32>) {
    // Split every type into up to `splits` groups by total degree rank.
    let mut degree = vec![0u64; view.n_nodes];
    for rel in &view.relations {
        for &(s, d) in &rel.edges {
            degree[s as usize] += 1;
            degree[d as usize] += 1;
        }
    }
    let mut assignment = vec![0u32; view.n_nodes];
    let mut block_types = Vec::new();
    for ty in 0..view.n_types {
        let offset = view.type_offsets[ty];
        let count = view.type_counts[ty];
        if count == 0 {
            continue;
        }
        let mut order: Vec<usize> = (offset..offset + count).collect();
        order.sort_by_key(|&v| (degree[v], v));
        let groups = splits.min(count).max(1);
        let base = block_types.len() as u32;
        for (rank, &v) in order.iter().enumerate() {
            assignment[v] = base + (rank * groups / count) as u32;
        }
        for _ in 0..groups {
            block_types.push(ty as u32);
        }
    }
    (assignment, block_types)
}

fn random_split_init(
    view: &GraphView,
    splits: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<u32>, Vec<u32>) {
    let mut assignment = vec![0u32; view.n_nodes];
    let mut block_types = Vec::new();
    for ty in 0..view.n_types {
        let count = view.type_counts[ty];
        if count == 0 {
            continue;
        }
        let groups = splits.min(count).max(1);
        let base = block_types.len() as u32;
        for v in view.type_offsets[ty]..view.type_offsets[ty] + count {
            assignment[v] = base + rng.random_range(0..groups) as u32;
        }
        for _ in 0..groups {
            block_types.push(ty as u32);
        }
    }
    // Random groups may be empty; compact them.
    let mut used = vec![false; block_types.len()];
    for &a in &assignment {
        used[a as usize] = true;
    }
    let mut remap = vec![0u32; block_types.len()];
    let mut types = Vec::new();
    for (i, &u) in used.iter().enumerate() {
        if u {
            remap[i] = types.len() as u32;
            types.push(block_types[i]);
        }
    }
    (
        assignment.into_iter().map(|a| remap[a as usize]).collect(),
        types,
    )
}

/// Infer the most plausible typed partition of the graph's edge set. The
/// result always satisfies the type constraint and never has a higher
/// description length than the type-only partition.
pub fn infer_partition(
    view: &GraphView,
    cfg: &StructConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(BlockPartition, InferenceReport), StructError> {
    if view.n_nodes == 0 {
        return Err(StructError::EmptyGraph);
    }
    let lnf = LnFact::with_capacity(lnfact_capacity(view.n_nodes, view.edge_total()));

    let type_only = BlockPartition::type_partition(view);
    let dl_type_only = graph_description_length(view, &type_only);

    let mut best: Option<(f64, Vec<u32>, Vec<u32>)> = None;
    for restart in 0..cfg.restarts.max(1) {
        let (assignment, block_types) = match restart {
            0 => degree_split_init(view, cfg.init_splits),
            1 => (view.node_type.clone(), (0..view.n_types as u32).collect()),
            _ => random_split_init(view, cfg.init_splits, rng),
        };
        let mut search = Search::new(view, &lnf, &assignment, block_types);
        if let Some(anneal) = &cfg.annealing {
            let mut beta = anneal.beta_start;
            for _ in 0..anneal.sweeps {
                search.sweep(rng, Some(beta));
                beta *= anneal.beta_growth;
            }
        }
        for _ in 0..cfg.max_sweeps {
            let moves = search.sweep(rng, None);
            let merges = search.merge_phase();
            if moves == 0 && merges == 0 {
                break;
            }
        }
        // Guard against numerical drift of the incremental objective.
        let exact = graph_description_length(view, &search.partition());
        if best.as_ref().map_or(true, |(bd, _, _)| exact < *bd) {
            let (assignment, types) = search.compact();
            best = Some((exact, assignment, types));
        }
    }

    let (mut dl_best, assignment, types) = best.expect("at least one restart");
    let mut partition = if dl_best <= dl_type_only {
        BlockPartition::flat(assignment, types)
    } else {
        dl_best = dl_type_only;
        type_only.clone()
    };

    if cfg.hierarchy_levels > 0 {
        build_hierarchy(view, &mut partition, cfg.hierarchy_levels, &lnf);
        let dl_nested = graph_description_length(view, &partition);
        if dl_nested < dl_best {
            dl_best = dl_nested;
        } else {
            partition.levels.truncate(1);
            partition.block_types.truncate(1);
        }
    }

    debug_assert!(partition.respects_types(view));
    let report = InferenceReport {
        dl_inferred: dl_best,
        dl_type_only,
        level_block_counts: partition.level_block_counts(),
    };
    Ok((partition, report))
}

/// Grow nested levels greedily: starting from the identity grouping of the
/// blocks below, merge same-type groups while total description length
/// drops. Stops early once a level stays trivial.
fn build_hierarchy(
    view: &GraphView,
    partition: &mut BlockPartition,
    max_levels: usize,
    lnf: &LnFact,
) {
    // Pair aggregates at level 0 never change during hierarchy search.
    let pair_counts: Vec<BTreeMap<(u32, u32), i64>> = view
        .relations
        .iter()
        .map(|rel| {
            let mut map = BTreeMap::new();
            for &(s, d) in &rel.edges {
                let key = (
                    partition.levels[0][s as usize],
                    partition.levels[0][d as usize],
                );
                *map.entry(key).or_insert(0) += 1;
            }
            map
        })
        .collect();

    for _ in 0..max_levels {
        let lower_types = partition.block_types.last().unwrap().clone();
        let b_lower = lower_types.len();
        if b_lower <= view.n_types {
            break;
        }
        // Tentative identity level.
        partition.levels.push((0..b_lower as u32).collect());
        partition.block_types.push(lower_types.clone());
        let level = partition.levels.len() - 1;

        let objective = |p: &BlockPartition| {
            let mut total = dl::partition_cost(view, p, lnf);
            for (r, rel) in view.relations.iter().enumerate() {
                total += dl::nested_matrix_cost(
                    rel.src_type,
                    rel.dst_type,
                    &pair_counts[r],
                    p,
                    lnf,
                );
            }
            total
        };

        let mut current = objective(partition);
        let mut merged_any = false;
        loop {
            let groups: Vec<u32> = {
                let mut seen = std::collections::BTreeSet::new();
                for &g in &partition.levels[level] {
                    seen.insert(g);
                }
                seen.into_iter().collect()
            };
            let mut best: Option<(f64, u32, u32)> = None;
            for (i, &s) in groups.iter().enumerate() {
                for &t in &groups[i + 1..] {
                    if partition.block_types[level][s as usize]
                        != partition.block_types[level][t as usize]
                    {
                        continue;
                    }
                    let mut candidate = partition.clone();
                    for g in candidate.levels[level].iter_mut() {
                        if *g == s {
                            *g = t;
                        }
                    }
                    let value = objective(&candidate);
                    if best.as_ref().map_or(true, |(bv, _, _)| value < *bv) {
                        best = Some((value, s, t));
                    }
                }
            }
            match best {
                Some((value, s, t)) if value < current - 1e-10 => {
                    for g in partition.levels[level].iter_mut() {
                        if *g == s {
                            *g = t;
                        }
                    }
                    current = value;
                    merged_any = true;
                }
                _ => break,
            }
        }

        if !merged_any {
            partition.levels.pop();
            partition.block_types.pop();
            break;
        }
        compact_level(partition, level);
    }
}

fn compact_level(partition: &mut BlockPartition, level: usize) {
    let map = partition.levels[level].clone();
    let mut remap: BTreeMap<u32, u32> = BTreeMap::new();
    let mut types = Vec::new();
    for (item, &g) in map.iter().enumerate() {
        remap.entry(g).or_insert_with(|| {
            types.push(partition.block_types[level - 1][item]);
            (types.len() - 1) as u32
        });
    }
    partition.levels[level] = map.iter().map(|g| remap[g]).collect();
    partition.block_types[level] = types;
}

/// Public convenience used by tests: degrees of a relation view.
pub fn relation_degrees(view: &GraphView, rel: usize) -> RelationDegrees {
    RelationDegrees::from_edges(&view.relations[rel].edges, view.n_nodes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::view::RelationView;
    use rand_chacha::rand_core::SeedableRng;

    fn toy_view() -> GraphView {
        // Two types plus a self-relation, with self-loops, to stress every
        // delta path.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut edges_ab = Vec::new();
        for s in 0..12u32 {
            edges_ab.push((s, 12 + rng.random_range(0..8)));
            if s % 3 == 0 {
                edges_ab.push((s, 12 + rng.random_range(0..8)));
            }
        }
        let mut edges_bb = Vec::new();
        for _ in 0..10 {
            let a = 12 + rng.random_range(0..8u32);
            let b = 12 + rng.random_range(0..8u32);
            edges_bb.push((a, b)); // self-loops allowed
        }
        GraphView {
            n_nodes: 20,
            n_types: 2,
            node_type: (0..20u32).map(|v| if v < 12 { 0 } else { 1 }).collect(),
            type_offsets: vec![0, 12],
            type_counts: vec![12, 8],
            relations: vec![
                RelationView { src_type: 0, dst_type: 1, edges: edges_ab, label: "ab".into() },
                RelationView { src_type: 1, dst_type: 1, edges: edges_bb, label: "bb".into() },
            ],
            source_relation: vec![0, 1],
        }
    }

    #[test]
    fn incremental_dl_matches_scratch_after_random_moves() {
        let view = toy_view();
        let lnf = LnFact::with_capacity(lnfact_capacity(view.n_nodes, view.edge_total()));
        let (assignment, block_types) = degree_split_init(&view, 3);
        let mut search = Search::new(&view, &lnf, &assignment, block_types);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for step in 0..300 {
            let v = rng.random_range(0..view.n_nodes);
            let ty = view.node_type[v];
            let candidates: Vec<u32> = (0..search.block_type.len() as u32)
                .filter(|&b| {
                    search.block_type[b as usize] == ty
                        && search.n[b as usize] > 0
                        && b != search.b[v]
                })
                .collect();
            let fresh = rng.random_range(0..4) == 0 && search.n[search.b[v] as usize] > 1;
            let target = if fresh || candidates.is_empty() {
                if search.n[search.b[v] as usize] <= 1 {
                    continue;
                }
                None
            } else {
                Some(candidates[rng.random_range(0..candidates.len())])
            };
            let delta = search.move_delta(v, target);
            search.apply_move(v, target, delta);
            if step % 37 == 0 {
                let scratch = graph_description_length(&view, &search.partition());
                assert!(
                    (search.current_dl - scratch).abs() < 1e-6,
                    "step {step}: incremental {} vs scratch {scratch}",
                    search.current_dl
                );
            }
        }
        let scratch = graph_description_length(&view, &search.partition());
        assert!((search.current_dl - scratch).abs() < 1e-6);
    }

    #[test]
    fn merge_delta_matches_scratch() {
        let view = toy_view();
        let lnf = LnFact::with_capacity(lnfact_capacity(view.n_nodes, view.edge_total()));
        let (assignment, block_types) = degree_split_init(&view, 4);
        let mut search = Search::new(&view, &lnf, &assignment, block_types);
        let before = graph_description_length(&view, &search.partition());
        // Merge the first two same-type blocks.
        let blocks: Vec<u32> = (0..search.block_type.len() as u32)
            .filter(|&b| search.n[b as usize] > 0 && search.block_type[b as usize] == 0)
            .collect();
        let (s, t) = (blocks[0], blocks[1]);
        let predicted = search.merge_delta(s, t);
        search.apply_merge(s, t);
        let after = graph_description_length(&view, &search.partition());
        assert!(
            ((after - before) - predicted).abs() < 1e-6,
            "predicted {predicted}, actual {}",
            after - before
        );
    }

    #[test]
    fn annealing_path_runs() {
        let view = toy_view();
        let cfg = StructConfig {
            annealing: Some(crate::AnnealConfig {
                beta_start: 0.5,
                beta_growth: 1.5,
                sweeps: 10,
            }),
            ..StructConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (partition, report) = infer_partition(&view, &cfg, &mut rng).unwrap();
        assert!(partition.respects_types(&view));
        assert!(report.dl_inferred <= report.dl_type_only + 1e-9);
    }
}
