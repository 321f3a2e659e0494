use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use reldiff_core::{Database, EncoderSet, EntityGraph, RelationKind, Schema, Value};

use crate::state::TableState;
use crate::{ModelError, Result};

/// How training minibatches are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingMode {
    /// Union of whole weakly-connected components (snowflake layouts).
    DisjointComponents,
    /// Merged k-hop neighborhoods of per-table seed nodes.
    NeighborSampling,
    /// DisjointComponents when the graph has more than one component.
    Auto,
}

/// A directed message-passing relation derived from a non-dimension link.
#[derive(Debug, Clone)]
pub struct DirectedRelation {
    pub name: String,
    pub src_table: usize,
    pub dst_table: usize,
    /// Link index and whether this is the child-to-parent direction.
    pub link: usize,
    pub forward: bool,
}

/// Induced subgraph over a node subset with per-relation adjacency in local
/// (batch) coordinates. Neighbor lists are sorted so aggregation order never
/// depends on input order.
#[derive(Debug, Clone)]
pub struct BatchGraph {
    /// Per table: selected original rows, ascending. Dimension tables stay
    /// empty (they are frozen and never denoised).
    pub nodes: Vec<Vec<u32>>,
    /// Per directed relation: per local target node, local source indices.
    pub adj: Vec<Vec<Vec<u32>>>,
    /// Per table: positional rank of each selected row under the table's
    /// order column (empty when the table has none).
    pub ranks: Vec<Vec<u32>>,
}

impl BatchGraph {
    pub fn node_total(&self) -> usize {
        self.nodes.iter().map(|n| n.len()).sum()
    }
}

/// A training batch: the induced subgraph, the clean states of its rows and
/// the loss mask.
#[derive(Debug, Clone)]
pub struct Batch {
    pub graph: BatchGraph,
    pub clean: Vec<Option<TableState>>,
    /// Per table, per selected row: contributes to the loss. All sampled
    /// nodes contribute in both sampling modes.
    pub loss_mask: Vec<Vec<bool>>,
}

/// Everything derived once from a database for training and sampling.
pub struct GraphContext {
    pub schema: Schema,
    pub graph: EntityGraph,
    pub relations: Vec<DirectedRelation>,
    /// Weakly-connected components over message-passing links, as
    /// (table, row) lists.
    pub components: Vec<Vec<(usize, u32)>>,
    /// Per table: global rank of every row under the order column.
    pub ranks: Vec<Option<Vec<u32>>>,
    /// Per table: clean encoded state (empty for dimension tables).
    pub clean: Vec<TableState>,
    /// Per table: cardinality (mask index) of every categorical slot.
    pub cardinalities: Vec<Vec<usize>>,
}

/// Directed message-passing relations of a schema: both directions of every
/// link that does not point into a dimension table.
pub fn directed_relations(schema: &Schema) -> Vec<DirectedRelation> {
    let mut out = Vec::new();
    for (li, link) in schema.links.iter().enumerate() {
        if schema.is_dimension_link(li) {
            continue;
        }
        out.push(DirectedRelation {
            name: format!("l{li}.fwd"),
            src_table: link.child,
            dst_table: link.parent,
            link: li,
            forward: true,
        });
        out.push(DirectedRelation {
            name: format!("l{li}.rev"),
            src_table: link.parent,
            dst_table: link.child,
            link: li,
            forward: false,
        });
    }
    out
}

impl GraphContext {
    pub fn build(db: &Database, encoders: &EncoderSet, graph: EntityGraph) -> Result<Self> {
        let schema = db.schema.clone();
        let relations = directed_relations(&schema);

        // Clean encoded states.
        let mut clean = Vec::with_capacity(schema.tables.len());
        for (ti, spec) in schema.tables.iter().enumerate() {
            if spec.dimension {
                clean.push(TableState::default());
            } else {
                let rows = encoders.encode_table(db, ti)?;
                let mut state = TableState::from_rows(&rows);
                state.n = db.tables[ti].len();
                state.num_width = encoders.tables[ti].numeric_count();
                state.cat_width = encoders.tables[ti].categorical_count();
                clean.push(state);
            }
        }
        let cardinalities = encoders
            .tables
            .iter()
            .map(|t| t.cardinalities())
            .collect();

        // Ranks under order columns.
        let mut ranks = Vec::with_capacity(schema.tables.len());
        for (ti, spec) in schema.tables.iter().enumerate() {
            match &spec.order_column {
                None => ranks.push(None),
                Some(col) => {
                    let attr = spec
                        .attributes()
                        .position(|c| &c.name == col)
                        .expect("order column validated at schema load");
                    let key = |row: usize| -> f64 {
                        match &db.tables[ti].columns[attr][row] {
                            Value::Number(x) => *x,
                            Value::DateTime(s) => *s as f64,
                            _ => f64::MAX,
                        }
                    };
                    let mut order: Vec<usize> = (0..db.tables[ti].len()).collect();
                    order.sort_by(|&a, &b| {
                        key(a).partial_cmp(&key(b)).unwrap().then(a.cmp(&b))
                    });
                    let mut rank = vec![0u32; order.len()];
                    for (pos, row) in order.into_iter().enumerate() {
                        rank[row] = pos as u32;
                    }
                    ranks.push(Some(rank));
                }
            }
        }

        let components = weak_components(&graph, &schema);
        Ok(Self {
            schema,
            graph,
            relations,
            components,
            ranks,
            clean,
            cardinalities,
        })
    }

    /// Induced subgraph over explicit per-table row subsets.
    pub fn induced(&self, mut nodes: Vec<Vec<u32>>) -> BatchGraph {
        for (ti, rows) in nodes.iter_mut().enumerate() {
            rows.sort_unstable();
            rows.dedup();
            if self.schema.tables[ti].dimension {
                rows.clear();
            }
        }
        let lookup: Vec<HashMap<u32, u32>> = nodes
            .iter()
            .map(|rows| {
                rows.iter()
                    .enumerate()
                    .map(|(i, &r)| (r, i as u32))
                    .collect()
            })
            .collect();
        let mut adj = Vec::with_capacity(self.relations.len());
        for rel in &self.relations {
            let mut lists: Vec<Vec<u32>> = vec![Vec::new(); nodes[rel.dst_table].len()];
            let edges = &self
                .graph
                .relations
                .iter()
                .find(
                    |r| matches!(r.kind, RelationKind::Link { link } if link == rel.link),
                )
                .expect("link present in graph")
                .edges;
            for &(child, parent) in edges {
                let (src, dst) = if rel.forward {
                    (child, parent)
                } else {
                    (parent, child)
                };
                let (Some(&s), Some(&d)) = (
                    lookup[rel.src_table].get(&src),
                    lookup[rel.dst_table].get(&dst),
                ) else {
                    continue;
                };
                lists[d as usize].push(s);
            }
            for l in &mut lists {
                l.sort_unstable();
            }
            adj.push(lists);
        }
        let ranks = nodes
            .iter()
            .enumerate()
            .map(|(ti, rows)| match &self.ranks[ti] {
                Some(global) => rows.iter().map(|&r| global[r as usize]).collect(),
                None => Vec::new(),
            })
            .collect();
        BatchGraph { nodes, adj, ranks }
    }

    /// The whole (non-dimension) graph as one batch.
    pub fn full_batch(&self) -> BatchGraph {
        let nodes = self
            .graph
            .node_counts
            .iter()
            .enumerate()
            .map(|(ti, &n)| {
                if self.schema.tables[ti].dimension {
                    Vec::new()
                } else {
                    (0..n as u32).collect()
                }
            })
            .collect();
        self.induced(nodes)
    }

    /// Draw one training batch.
    pub fn sample_subgraph(
        &self,
        mode: SamplingMode,
        subgraphs_per_batch: usize,
        seeds_per_table: usize,
        k_hops: usize,
        rng: &mut impl Rng,
    ) -> Result<Batch> {
        if self.graph.node_total() == 0 {
            return Err(ModelError::Config("empty graph".into()));
        }
        let mode = match mode {
            SamplingMode::Auto => {
                if self.components.len() > 1 {
                    SamplingMode::DisjointComponents
                } else {
                    SamplingMode::NeighborSampling
                }
            }
            m => m,
        };
        let nodes = match mode {
            SamplingMode::DisjointComponents => {
                if self.components.len() <= 1 {
                    return Err(ModelError::Config(
                        "disjoint-component sampling requires more than one weakly \
                         connected component"
                            .into(),
                    ));
                }
                let mut idx: Vec<usize> = (0..self.components.len()).collect();
                idx.shuffle(rng);
                let mut nodes = vec![Vec::new(); self.schema.tables.len()];
                for &c in idx.iter().take(subgraphs_per_batch.max(1)) {
                    for &(ti, row) in &self.components[c] {
                        nodes[ti].push(row);
                    }
                }
                nodes
            }
            SamplingMode::NeighborSampling => self.neighbor_sample(seeds_per_table, k_hops, rng),
            SamplingMode::Auto => unreachable!(),
        };
        let graph = self.induced(nodes);
        let clean = graph
            .nodes
            .iter()
            .enumerate()
            .map(|(ti, rows)| {
                if rows.is_empty() {
                    None
                } else {
                    Some(self.clean[ti].select(rows))
                }
            })
            .collect();
        let loss_mask = graph.nodes.iter().map(|rows| vec![true; rows.len()]).collect();
        Ok(Batch {
            graph,
            clean,
            loss_mask,
        })
    }

    /// Seeds per table proportional to table size (the knob sets the largest
    /// table's count), expanded to merged k-hop neighborhoods.
    fn neighbor_sample(
        &self,
        seeds_per_table: usize,
        k_hops: usize,
        rng: &mut impl Rng,
    ) -> Vec<Vec<u32>> {
        let max_rows = self
            .graph
            .node_counts
            .iter()
            .enumerate()
            .filter(|(ti, _)| !self.schema.tables[*ti].dimension)
            .map(|(_, &n)| n)
            .max()
            .unwrap_or(0)
            .max(1);
        let mut frontier: Vec<Vec<u32>> = Vec::with_capacity(self.schema.tables.len());
        for (ti, &n) in self.graph.node_counts.iter().enumerate() {
            if self.schema.tables[ti].dimension || n == 0 {
                frontier.push(Vec::new());
                continue;
            }
            let quota = ((seeds_per_table * n + max_rows - 1) / max_rows).clamp(1, n);
            let mut seeds = Vec::with_capacity(quota);
            for _ in 0..quota {
                seeds.push(rng.random_range(0..n as u32));
            }
            frontier.push(seeds);
        }
        let mut selected: Vec<std::collections::HashSet<u32>> = frontier
            .iter()
            .map(|s| s.iter().copied().collect())
            .collect();
        for _ in 0..k_hops {
            let mut next: Vec<Vec<u32>> = vec![Vec::new(); selected.len()];
            for rel in &self.relations {
                let edges = &self
                    .graph
                    .relations
                    .iter()
                    .find(
                        |r| matches!(r.kind, RelationKind::Link { link } if link == rel.link),
                    )
                    .expect("link present")
                    .edges;
                let frontier_set: std::collections::HashSet<u32> =
                    frontier[rel.dst_table].iter().copied().collect();
                for &(child, parent) in edges {
                    let (src, dst) = if rel.forward {
                        (child, parent)
                    } else {
                        (parent, child)
                    };
                    if frontier_set.contains(&dst) && selected[rel.src_table].insert(src) {
                        next[rel.src_table].push(src);
                    }
                }
            }
            frontier = next;
        }
        selected
            .into_iter()
            .map(|s| s.into_iter().collect())
            .collect()
    }
}

/// Weakly-connected components over message-passing links.
fn weak_components(graph: &EntityGraph, schema: &Schema) -> Vec<Vec<(usize, u32)>> {
    // Dimension tables are excluded from message passing entirely.
    let mut offsets = vec![usize::MAX; graph.node_counts.len()];
    let mut total = 0usize;
    for (ti, &n) in graph.node_counts.iter().enumerate() {
        if !schema.tables[ti].dimension {
            offsets[ti] = total;
            total += n;
        }
    }
    let mut parent: Vec<u32> = (0..total as u32).collect();
    fn find(parent: &mut [u32], mut x: u32) -> u32 {
        while parent[x as usize] != x {
            parent[x as usize] = parent[parent[x as usize] as usize];
            x = parent[x as usize];
        }
        x
    }
    for rel in &graph.relations {
        let RelationKind::Link { link } = rel.kind else {
            continue;
        };
        if schema.is_dimension_link(link) {
            continue;
        }
        for &(child, par) in &rel.edges {
            let a = (offsets[rel.src_table] + child as usize) as u32;
            let b = (offsets[rel.dst_table] + par as usize) as u32;
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra as usize] = rb;
            }
        }
    }
    let mut groups: HashMap<u32, Vec<(usize, u32)>> = HashMap::new();
    for (ti, &n) in graph.node_counts.iter().enumerate() {
        if schema.tables[ti].dimension {
            continue;
        }
        for row in 0..n as u32 {
            let g = find(&mut parent, (offsets[ti] + row as usize) as u32);
            groups.entry(g).or_default().push((ti, row));
        }
    }
    let mut components: Vec<Vec<(usize, u32)>> = groups.into_values().collect();
    // Deterministic order: by smallest member.
    components.sort_by_key(|c| c.iter().copied().min().unwrap());
    components
}
