use std::collections::BTreeMap;
use std::rc::Rc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use reldiff_core::rng::named_stream;
use reldiff_core::{EncoderSet, Schema};
use reldiff_tensor::{Tape, Tensor, Var};

use crate::batch::{directed_relations, BatchGraph, DirectedRelation};
use crate::hyper::HyperParams;
use crate::schedule::NoiseSchedule;
use crate::state::TableState;

/// Static shape information derived from the schema and fitted encoders.
#[derive(Debug, Clone)]
pub struct TableLayout {
    pub name: String,
    pub dimension: bool,
    pub num_slots: usize,
    /// Cardinality of every categorical slot (mask embedding is one extra
    /// row; output heads have exactly this many logits).
    pub cat_cards: Vec<usize>,
    pub has_order: bool,
}

impl TableLayout {
    pub fn column_count(&self) -> usize {
        self.num_slots + self.cat_cards.len()
    }
}

/// Per-table output of one denoising pass.
pub struct TableOutput {
    /// Noise prediction, (n, num_slots); absent for tables without numerics.
    pub eps: Option<Var>,
    /// Per categorical slot: (n, K) logits over real categories (no mask
    /// logit; unmasking carries over observed values).
    pub cat_logits: Vec<Var>,
}

/// The graph-conditioned denoising network. Immutable during sampling; the
/// trainer owns it exclusively while fitting.
pub struct DenoiserModel {
    pub hyper: HyperParams,
    pub layout: Vec<TableLayout>,
    pub relations: Vec<DirectedRelation>,
    pub params: BTreeMap<String, Tensor>,
}

fn uniform(rng: &mut ChaCha8Rng, shape: Vec<usize>, scale: f64) -> Tensor {
    let len = shape.iter().product();
    Tensor::new(
        shape,
        (0..len).map(|_| (rng.random::<f64>() * 2.0 - 1.0) * scale).collect(),
    )
}

impl DenoiserModel {
    pub fn layout_from(schema: &Schema, encoders: &EncoderSet) -> Vec<TableLayout> {
        schema
            .tables
            .iter()
            .enumerate()
            .map(|(ti, spec)| TableLayout {
                name: spec.name.clone(),
                dimension: spec.dimension,
                num_slots: encoders.tables[ti].numeric_count(),
                cat_cards: encoders.tables[ti].cardinalities(),
                has_order: spec.order_column.is_some(),
            })
            .collect()
    }

    /// Fan-in-scaled uniform initialization, deterministic given the seed.
    pub fn init(schema: &Schema, encoders: &EncoderSet, hyper: HyperParams, seed: u64) -> Self {
        let layout = Self::layout_from(schema, encoders);
        let relations = directed_relations(schema);
        let mut rng = named_stream(seed, "init");
        let mut params = BTreeMap::new();
        let d = hyper.token_dim;
        let h = hyper.hidden_dim;
        let f = d * hyper.ffn_mult;

        let linear = |params: &mut BTreeMap<String, Tensor>,
                          rng: &mut ChaCha8Rng,
                          prefix: String,
                          rows: usize,
                          cols: usize| {
            let scale = 1.0 / (rows as f64).sqrt();
            params.insert(format!("{prefix}.w"), uniform(rng, vec![rows, cols], scale));
            params.insert(format!("{prefix}.b"), Tensor::zeros(vec![cols]));
        };
        let transformer = |params: &mut BTreeMap<String, Tensor>,
                               rng: &mut ChaCha8Rng,
                               prefix: String| {
            for l in 0..hyper.transformer_layers {
                for name in ["wq", "wk", "wv", "wo"] {
                    linear(params, rng, format!("{prefix}{l}.{name}"), d, d);
                }
                linear(params, rng, format!("{prefix}{l}.ff1"), d, f);
                linear(params, rng, format!("{prefix}{l}.ff2"), f, d);
                for ln in ["ln1", "ln2"] {
                    params.insert(
                        format!("{prefix}{l}.{ln}.g"),
                        Tensor::new(vec![d], vec![1.0; d]),
                    );
                    params.insert(format!("{prefix}{l}.{ln}.b"), Tensor::zeros(vec![d]));
                }
            }
        };

        // Shared time embedding MLP.
        linear(&mut params, &mut rng, "temb.l1".into(), h, h);
        linear(&mut params, &mut rng, "temb.l2".into(), h, h);

        for (ti, t) in layout.iter().enumerate() {
            if t.dimension {
                continue;
            }
            if t.column_count() == 0 {
                // Pure-structure tables (no attributes) still pass messages;
                // they get a learned node embedding and no output heads.
                params.insert(
                    format!("t{ti}.base.w"),
                    uniform(&mut rng, vec![1, h], 1.0 / (h as f64).sqrt()),
                );
                continue;
            }
            for j in 0..t.num_slots {
                linear(&mut params, &mut rng, format!("t{ti}.tok.n{j}"), 1, d);
            }
            for (j, &card) in t.cat_cards.iter().enumerate() {
                params.insert(
                    format!("t{ti}.tok.c{j}.emb"),
                    uniform(&mut rng, vec![card + 1, d], 1.0 / (d as f64).sqrt()),
                );
            }
            transformer(&mut params, &mut rng, format!("t{ti}.enc"));
            let c = t.column_count();
            linear(&mut params, &mut rng, format!("t{ti}.proj"), c * d, h);
            for k in 0..hyper.mlp_depth {
                linear(&mut params, &mut rng, format!("t{ti}.mlp{k}"), h, h);
            }
            linear(&mut params, &mut rng, format!("t{ti}.deproj"), h, c * d);
            transformer(&mut params, &mut rng, format!("t{ti}.dec"));
            for j in 0..t.num_slots {
                linear(&mut params, &mut rng, format!("t{ti}.head.n{j}"), d, 1);
            }
            for (j, &card) in t.cat_cards.iter().enumerate() {
                linear(&mut params, &mut rng, format!("t{ti}.head.c{j}"), d, card);
            }
        }
        for round in 0..hyper.gnn_rounds {
            for rel in &relations {
                if layout[rel.src_table].dimension || layout[rel.dst_table].dimension {
                    continue;
                }
                linear(&mut params, &mut rng, format!("g{round}.{}", rel.name), h, h);
            }
            for (ti, t) in layout.iter().enumerate() {
                if t.dimension {
                    continue;
                }
                linear(&mut params, &mut rng, format!("g{round}.t{ti}.self"), h, h);
            }
        }

        Self {
            hyper,
            layout,
            relations,
            params,
        }
    }

    /// Insert every parameter into the tape, returning name -> var.
    pub fn insert_params(&self, tape: &mut Tape) -> BTreeMap<String, Var> {
        self.params
            .iter()
            .map(|(k, v)| (k.clone(), tape.param(v.clone())))
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.params.values().map(|t| t.len()).sum()
    }

    /// One denoising pass over a batch at time t. Deterministic given
    /// parameters and inputs; mean aggregation makes the result invariant to
    /// neighbor order, and k message rounds bound the receptive field to the
    /// k-hop neighborhood.
    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &BTreeMap<String, Var>,
        batch: &BatchGraph,
        noisy: &[Option<TableState>],
        t: f64,
    ) -> Vec<Option<TableOutput>> {
        let hp = &self.hyper;
        let d = hp.token_dim;
        let h = hp.hidden_dim;
        let schedule = NoiseSchedule::from_hyper(hp);
        let sigma = schedule.sigma_num(t);
        let c_in = 1.0 / (1.0 + sigma * sigma).sqrt();
        let v = |name: &str| -> Var {
            *vars.get(name).unwrap_or_else(|| panic!("missing param {name}"))
        };

        // Shared time embedding vector (h).
        let temb = {
            let sin = tape.constant(Tensor::new(vec![1, h], sinusoidal(t * 1000.0, h)));
            let x = tape.matmul(sin, v("temb.l1.w"));
            let b = v("temb.l1.b");
            let x = tape.add(x, b);
            let x = tape.silu(x);
            let x = tape.matmul(x, v("temb.l2.w"));
            let b = v("temb.l2.b");
            let x = tape.add(x, b);
            tape.reshape(x, vec![h])
        };

        // Per-table embedding up to the hidden state.
        let mut hidden: Vec<Option<Var>> = vec![None; self.layout.len()];
        for (ti, t_layout) in self.layout.iter().enumerate() {
            if t_layout.dimension {
                continue;
            }
            let n = batch.nodes[ti].len();
            if n == 0 {
                continue;
            }
            let state = noisy[ti].as_ref().expect("state for non-empty table");
            debug_assert_eq!(state.n, n);

            if t_layout.column_count() == 0 {
                let ones = tape.constant(Tensor::new(vec![n, 1], vec![1.0; n]));
                let base = tape.matmul(ones, v(&format!("t{ti}.base.w")));
                let mut state_h = tape.add(base, temb);
                if t_layout.has_order && !batch.ranks[ti].is_empty() {
                    let mut pe = Vec::with_capacity(n * h);
                    for &rank in &batch.ranks[ti] {
                        pe.extend_from_slice(&sinusoidal(rank as f64, h));
                    }
                    let pe = tape.constant(Tensor::new(vec![n, h], pe));
                    state_h = tape.add(state_h, pe);
                }
                hidden[ti] = Some(state_h);
                continue;
            }

            let mut tokens: Vec<Var> = Vec::with_capacity(t_layout.column_count());
            if t_layout.num_slots > 0 {
                let nums = tape.constant(Tensor::new(
                    vec![n, t_layout.num_slots],
                    state.nums.clone(),
                ));
                let scaled = tape.scale(nums, c_in);
                for j in 0..t_layout.num_slots {
                    let col = tape.slice_cols(scaled, j, 1);
                    let tok = tape.matmul(col, v(&format!("t{ti}.tok.n{j}.w")));
                    let b = v(&format!("t{ti}.tok.n{j}.b"));
                    tokens.push(tape.add(tok, b));
                }
            }
            for j in 0..t_layout.cat_cards.len() {
                let indices: Rc<Vec<u32>> = Rc::new(state.cat_column(j));
                let emb = v(&format!("t{ti}.tok.c{j}.emb"));
                tokens.push(tape.gather(emb, indices));
            }

            let c = tokens.len();
            let cat = tape.concat(&tokens);
            let mut x3 = tape.reshape(cat, vec![n, c, d]);
            for l in 0..hp.transformer_layers {
                x3 = self.transformer_block(tape, vars, &format!("t{ti}.enc{l}"), x3, n, c);
            }
            let flat = tape.reshape(x3, vec![n, c * d]);
            let proj = tape.matmul(flat, v(&format!("t{ti}.proj.w")));
            let b = v(&format!("t{ti}.proj.b"));
            let mut state_h = tape.add(proj, b);
            state_h = tape.add(state_h, temb);
            if t_layout.has_order && !batch.ranks[ti].is_empty() {
                let mut pe = Vec::with_capacity(n * h);
                for &rank in &batch.ranks[ti] {
                    pe.extend_from_slice(&sinusoidal(rank as f64, h));
                }
                let pe = tape.constant(Tensor::new(vec![n, h], pe));
                state_h = tape.add(state_h, pe);
            }
            hidden[ti] = Some(state_h);
        }

        // Typed message passing: per relation a mean over incident sources
        // mapped by a relation-specific matrix, summed across relations, then
        // combined with the mapped self state.
        for round in 0..hp.gnn_rounds {
            let mut agg: Vec<Option<Var>> = vec![None; self.layout.len()];
            for (ri, rel) in self.relations.iter().enumerate() {
                let (Some(src_h), true) = (
                    hidden[rel.src_table],
                    hidden[rel.dst_table].is_some(),
                ) else {
                    continue;
                };
                let lists = Rc::new(batch.adj[ri].clone());
                let mean = tape.neighbor_mean(src_h, lists);
                let msg = tape.matmul(mean, v(&format!("g{round}.{}.w", rel.name)));
                agg[rel.dst_table] = Some(match agg[rel.dst_table] {
                    Some(acc) => tape.add(acc, msg),
                    None => msg,
                });
            }
            for ti in 0..self.layout.len() {
                let Some(hcur) = hidden[ti] else { continue };
                let own = tape.matmul(hcur, v(&format!("g{round}.t{ti}.self.w")));
                let mut combined = match agg[ti] {
                    Some(a) => tape.add(own, a),
                    None => own,
                };
                let b = v(&format!("g{round}.t{ti}.self.b"));
                combined = tape.add(combined, b);
                hidden[ti] = Some(tape.silu(combined));
            }
        }

        // Per-table backbone MLP (time-conditioned), decoder and heads.
        let mut outputs: Vec<Option<TableOutput>> = Vec::with_capacity(self.layout.len());
        for (ti, t_layout) in self.layout.iter().enumerate() {
            let Some(mut x) = hidden[ti] else {
                outputs.push(None);
                continue;
            };
            if t_layout.column_count() == 0 {
                outputs.push(None);
                continue;
            }
            let n = batch.nodes[ti].len();
            x = tape.add(x, temb);
            for k in 0..hp.mlp_depth {
                let w = v(&format!("t{ti}.mlp{k}.w"));
                let b = v(&format!("t{ti}.mlp{k}.b"));
                x = tape.matmul(x, w);
                x = tape.add(x, b);
                if k + 1 < hp.mlp_depth {
                    x = tape.silu(x);
                }
            }
            let de = tape.matmul(x, v(&format!("t{ti}.deproj.w")));
            let b = v(&format!("t{ti}.deproj.b"));
            let de = tape.add(de, b);
            let c = t_layout.column_count();
            let mut x3 = tape.reshape(de, vec![n, c, d]);
            for l in 0..hp.transformer_layers {
                x3 = self.transformer_block(tape, vars, &format!("t{ti}.dec{l}"), x3, n, c);
            }
            let flat = tape.reshape(x3, vec![n, c * d]);

            let mut eps_cols = Vec::with_capacity(t_layout.num_slots);
            for j in 0..t_layout.num_slots {
                let tok = tape.slice_cols(flat, j * d, d);
                let out = tape.matmul(tok, v(&format!("t{ti}.head.n{j}.w")));
                let b = v(&format!("t{ti}.head.n{j}.b"));
                eps_cols.push(tape.add(out, b));
            }
            let eps = if eps_cols.is_empty() {
                None
            } else {
                Some(tape.concat(&eps_cols))
            };
            let mut cat_logits = Vec::with_capacity(t_layout.cat_cards.len());
            for j in 0..t_layout.cat_cards.len() {
                let tok = tape.slice_cols(flat, (t_layout.num_slots + j) * d, d);
                let out = tape.matmul(tok, v(&format!("t{ti}.head.c{j}.w")));
                let b = v(&format!("t{ti}.head.c{j}.b"));
                cat_logits.push(tape.add(out, b));
            }
            outputs.push(Some(TableOutput { eps, cat_logits }));
        }
        outputs
    }

    /// Self-attention over a node's column tokens followed by a small
    /// feed-forward, both with residual connections and layer norm.
    fn transformer_block(
        &self,
        tape: &mut Tape,
        vars: &BTreeMap<String, Var>,
        prefix: &str,
        x3: Var,
        n: usize,
        c: usize,
    ) -> Var {
        let d = self.hyper.token_dim;
        let v = |name: &str| -> Var {
            *vars
                .get(&format!("{prefix}.{name}"))
                .unwrap_or_else(|| panic!("missing param {prefix}.{name}"))
        };
        let flat = tape.reshape(x3, vec![n * c, d]);
        let mut proj = |w: &str, b: &str, input: Var| {
            let y = tape.matmul(input, v(w));
            let bv = v(b);
            tape.add(y, bv)
        };
        let q = proj("wq.w", "wq.b", flat);
        let k = proj("wk.w", "wk.b", flat);
        let val = proj("wv.w", "wv.b", flat);
        let q3 = tape.reshape(q, vec![n, c, d]);
        let k3 = tape.reshape(k, vec![n, c, d]);
        let v3 = tape.reshape(val, vec![n, c, d]);
        let scores = tape.bmm(q3, k3, true);
        let scores = tape.scale(scores, 1.0 / (d as f64).sqrt());
        let attn = tape.softmax(scores);
        let ctx = tape.bmm(attn, v3, false);
        let ctx_flat = tape.reshape(ctx, vec![n * c, d]);
        let o = tape.matmul(ctx_flat, v("wo.w"));
        let ob = v("wo.b");
        let o = tape.add(o, ob);
        let res = tape.add(flat, o);
        let g1 = v("ln1.g");
        let b1 = v("ln1.b");
        let norm1 = tape.layer_norm(res, g1, b1, 1e-5);

        let f1 = tape.matmul(norm1, v("ff1.w"));
        let f1b = v("ff1.b");
        let f1 = tape.add(f1, f1b);
        let f1 = tape.silu(f1);
        let f2 = tape.matmul(f1, v("ff2.w"));
        let f2b = v("ff2.b");
        let f2 = tape.add(f2, f2b);
        let res2 = tape.add(norm1, f2);
        let g2 = v("ln2.g");
        let b2 = v("ln2.b");
        let norm2 = tape.layer_norm(res2, g2, b2, 1e-5);
        tape.reshape(norm2, vec![n, c, d])
    }
}

/// Standard sinusoidal embedding of a scalar position.
pub fn sinusoidal(pos: f64, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    let half = dim / 2;
    for i in 0..half {
        let freq = (10_000f64).powf(-(i as f64) / half as f64);
        out[2 * i] = (pos * freq).sin();
        out[2 * i + 1] = (pos * freq).cos();
    }
    out
}
