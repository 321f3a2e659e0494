use std::rc::Rc;

use crate::tensor::{matmul, matmul_nt, matmul_tn, sigmoid, Tensor};

/// Handle to a tape node. Only valid for the tape that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf { param: bool },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MatMul(Var, Var),
    /// Batched product over leading axis: (B,n,k) x (B,k,m), or with
    /// `transpose_b` (B,n,k) x (B,m,k)^T.
    Bmm {
        a: Var,
        b: Var,
        transpose_b: bool,
    },
    Relu(Var),
    Silu(Var),
    Softmax(Var),
    LogSoftmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        eps: f64,
    },
    Gather {
        table: Var,
        indices: Rc<Vec<u32>>,
    },
    NeighborMean {
        x: Var,
        adj: Rc<Vec<Vec<u32>>>,
    },
    Concat(Vec<Var>),
    SliceCols {
        x: Var,
        start: usize,
        len: usize,
    },
    Reshape(Var),
    Sum(Var),
    PickNllSum {
        logprobs: Var,
        targets: Rc<Vec<i64>>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Records one forward pass; nodes only reference earlier nodes, so reverse
/// index order is a valid reverse-topological traversal.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Insert a constant (no gradient flows into it).
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf { param: false })
    }

    /// Insert a parameter leaf; `backward` reports its gradient.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf { param: true })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.broadcast_zip(a, b, |x, y| x + y);
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.broadcast_zip(a, b, |x, y| x - y);
        self.push(out, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.broadcast_zip(a, b, |x, y| x * y);
        self.push(out, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let va = &self.nodes[a.0].value;
        let out = Tensor::new(va.shape.clone(), va.data.iter().map(|x| x * c).collect());
        self.push(out, Op::Scale(a, c))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(va.shape.len(), 2, "matmul lhs must be 2-d");
        assert_eq!(vb.shape.len(), 2, "matmul rhs must be 2-d");
        let (n, k) = (va.shape[0], va.shape[1]);
        let (k2, m) = (vb.shape[0], vb.shape[1]);
        assert_eq!(k, k2, "matmul inner dims {k} vs {k2}");
        let out = Tensor::new(vec![n, m], matmul(va, vb, n, k, m));
        self.push(out, Op::MatMul(a, b))
    }

    pub fn bmm(&mut self, a: Var, b: Var, transpose_b: bool) -> Var {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(va.shape.len(), 3, "bmm lhs must be 3-d");
        assert_eq!(vb.shape.len(), 3, "bmm rhs must be 3-d");
        let (bsz, n, k) = (va.shape[0], va.shape[1], va.shape[2]);
        assert_eq!(vb.shape[0], bsz, "bmm batch mismatch");
        let m = if transpose_b {
            assert_eq!(vb.shape[2], k, "bmm inner dims");
            vb.shape[1]
        } else {
            assert_eq!(vb.shape[1], k, "bmm inner dims");
            vb.shape[2]
        };
        let mut data = vec![0.0; bsz * n * m];
        for i in 0..bsz {
            let a_slab = &va.data[i * n * k..(i + 1) * n * k];
            let chunk = if transpose_b {
                let b_slab = &vb.data[i * m * k..(i + 1) * m * k];
                matmul_nt(a_slab, b_slab, n, k, m)
            } else {
                let b_slab = &vb.data[i * k * m..(i + 1) * k * m];
                let at = Tensor::new(vec![n, k], a_slab.to_vec());
                let bt = Tensor::new(vec![k, m], b_slab.to_vec());
                matmul(&at, &bt, n, k, m)
            };
            data[i * n * m..(i + 1) * n * m].copy_from_slice(&chunk);
        }
        let out = Tensor::new(vec![bsz, n, m], data);
        self.push(out, Op::Bmm { a, b, transpose_b })
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let va = &self.nodes[a.0].value;
        let out = Tensor::new(va.shape.clone(), va.data.iter().map(|&x| x.max(0.0)).collect());
        self.push(out, Op::Relu(a))
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let va = &self.nodes[a.0].value;
        let out = Tensor::new(
            va.shape.clone(),
            va.data.iter().map(|&x| x * sigmoid(x)).collect(),
        );
        self.push(out, Op::Silu(a))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Var {
        let va = &self.nodes[a.0].value;
        let d = va.last_dim();
        let mut data = va.data.clone();
        for row in data.chunks_mut(d) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                sum += *x;
            }
            for x in row.iter_mut() {
                *x /= sum;
            }
        }
        let out = Tensor::new(va.shape.clone(), data);
        self.push(out, Op::Softmax(a))
    }

    /// Log-softmax over the last axis.
    pub fn log_softmax(&mut self, a: Var) -> Var {
        let va = &self.nodes[a.0].value;
        let d = va.last_dim();
        let mut data = va.data.clone();
        for row in data.chunks_mut(d) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let log_sum = row.iter().map(|x| (x - max).exp()).sum::<f64>().ln() + max;
            for x in row.iter_mut() {
                *x -= log_sum;
            }
        }
        let out = Tensor::new(va.shape.clone(), data);
        self.push(out, Op::LogSoftmax(a))
    }

    /// Layer normalization over the last axis with learned gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Var {
        let vx = &self.nodes[x.0].value;
        let d = vx.last_dim();
        assert_eq!(self.nodes[gain.0].value.shape, vec![d], "gain shape");
        assert_eq!(self.nodes[bias.0].value.shape, vec![d], "bias shape");
        let g = &self.nodes[gain.0].value.data;
        let b = &self.nodes[bias.0].value.data;
        let mut data = vec![0.0; vx.len()];
        for (i, row) in vx.data.chunks(d).enumerate() {
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + eps).sqrt();
            for j in 0..d {
                data[i * d + j] = (row[j] - mean) * inv * g[j] + b[j];
            }
        }
        let out = Tensor::new(vx.shape.clone(), data);
        self.push(out, Op::LayerNorm { x, gain, bias, eps })
    }

    /// Row lookup: table (V,d), indices (N) -> (N,d).
    pub fn gather(&mut self, table: Var, indices: Rc<Vec<u32>>) -> Var {
        let vt = &self.nodes[table.0].value;
        assert_eq!(vt.shape.len(), 2, "gather table must be 2-d");
        let d = vt.shape[1];
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices.iter() {
            let i = i as usize;
            assert!(i < vt.shape[0], "gather index {i} out of {}", vt.shape[0]);
            data.extend_from_slice(&vt.data[i * d..(i + 1) * d]);
        }
        let out = Tensor::new(vec![indices.len(), d], data);
        self.push(out, Op::Gather { table, indices })
    }

    /// Mean over listed source rows per target; empty lists yield zeros.
    pub fn neighbor_mean(&mut self, x: Var, adj: Rc<Vec<Vec<u32>>>) -> Var {
        let vx = &self.nodes[x.0].value;
        assert_eq!(vx.shape.len(), 2, "neighbor_mean input must be 2-d");
        let d = vx.shape[1];
        let mut data = vec![0.0; adj.len() * d];
        for (t, list) in adj.iter().enumerate() {
            if list.is_empty() {
                continue;
            }
            let row = &mut data[t * d..(t + 1) * d];
            for &s in list {
                let s = s as usize;
                for j in 0..d {
                    row[j] += vx.data[s * d + j];
                }
            }
            let inv = 1.0 / list.len() as f64;
            for v in row.iter_mut() {
                *v *= inv;
            }
        }
        let out = Tensor::new(vec![adj.len(), d], data);
        self.push(out, Op::NeighborMean { x, adj })
    }

    /// Concatenate 2-d tensors with equal row counts along the last axis.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let rows = self.nodes[parts[0].0].value.shape[0];
        let total: usize = parts
            .iter()
            .map(|p| {
                let v = &self.nodes[p.0].value;
                assert_eq!(v.shape.len(), 2, "concat parts must be 2-d");
                assert_eq!(v.shape[0], rows, "concat row mismatch");
                v.shape[1]
            })
            .sum();
        let mut data = vec![0.0; rows * total];
        let mut offset = 0;
        for p in parts {
            let v = &self.nodes[p.0].value;
            let d = v.shape[1];
            for r in 0..rows {
                data[r * total + offset..r * total + offset + d]
                    .copy_from_slice(&v.data[r * d..(r + 1) * d]);
            }
            offset += d;
        }
        let out = Tensor::new(vec![rows, total], data);
        self.push(out, Op::Concat(parts.to_vec()))
    }

    /// Columns [start, start+len) of a 2-d tensor.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let vx = &self.nodes[x.0].value;
        assert_eq!(vx.shape.len(), 2, "slice_cols input must be 2-d");
        let (rows, d) = (vx.shape[0], vx.shape[1]);
        assert!(start + len <= d, "slice [{start},{}) out of {d}", start + len);
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&vx.data[r * d + start..r * d + start + len]);
        }
        let out = Tensor::new(vec![rows, len], data);
        self.push(out, Op::SliceCols { x, start, len })
    }

    /// Same data, different shape.
    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Var {
        let vx = &self.nodes[x.0].value;
        assert_eq!(
            shape.iter().product::<usize>(),
            vx.len(),
            "reshape {:?} -> {shape:?}",
            vx.shape
        );
        let out = Tensor::new(shape, vx.data.clone());
        self.push(out, Op::Reshape(x))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.data.iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.nodes[a.0].value.len().max(1);
        let s = self.sum(a);
        self.scale(s, 1.0 / n as f64)
    }

    /// Negative sum of `logprobs[i, t_i]` over rows with `t_i >= 0`.
    pub fn pick_nll_sum(&mut self, logprobs: Var, targets: Rc<Vec<i64>>) -> Var {
        let v = &self.nodes[logprobs.0].value;
        assert_eq!(v.shape.len(), 2, "pick_nll_sum input must be 2-d");
        assert_eq!(v.shape[0], targets.len(), "target count");
        let d = v.shape[1];
        let mut loss = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            if t >= 0 {
                assert!((t as usize) < d, "target {t} out of {d}");
                loss -= v.data[i * d + t as usize];
            }
        }
        self.push(Tensor::scalar(loss), Op::PickNllSum { logprobs, targets })
    }

    /// Elementwise zip with row-vector broadcasting: either both shapes are
    /// equal, or `b`'s shape equals `a`'s last axis.
    fn broadcast_zip(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.shape == vb.shape {
            let data = va
                .data
                .iter()
                .zip(&vb.data)
                .map(|(&x, &y)| f(x, y))
                .collect();
            return Tensor::new(va.shape.clone(), data);
        }
        let d = va.last_dim();
        assert_eq!(
            vb.shape,
            vec![d],
            "broadcast needs equal shapes or a last-axis vector: {:?} vs {:?}",
            va.shape,
            vb.shape
        );
        let mut data = Vec::with_capacity(va.len());
        for row in va.data.chunks(d) {
            for j in 0..d {
                data.push(f(row[j], vb.data[j]));
            }
        }
        Tensor::new(va.shape.clone(), data)
    }

    /// Reverse pass from a scalar loss. Returns per-node gradients for
    /// parameter leaves; nodes off the path keep zero gradients.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert!(
            self.nodes[loss.0].value.is_scalar(),
            "backward requires a scalar loss, got shape {:?}",
            self.nodes[loss.0].value.shape
        );
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(gy) = grads[idx].take() else {
                continue;
            };
            match &self.nodes[idx].op {
                Op::Leaf { param } => {
                    if *param {
                        grads[idx] = Some(gy);
                    }
                    continue;
                }
                Op::Add(a, b) => {
                    self.accumulate(&mut grads, *a, gy.clone());
                    let gb = self.reduce_to_shape(&gy, &self.nodes[b.0].value.shape, 1.0);
                    self.accumulate(&mut grads, *b, gb);
                }
                Op::Sub(a, b) => {
                    self.accumulate(&mut grads, *a, gy.clone());
                    let gb = self.reduce_to_shape(&gy, &self.nodes[b.0].value.shape, -1.0);
                    self.accumulate(&mut grads, *b, gb);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let ga = if va.shape == vb.shape {
                        Tensor::new(
                            gy.shape.clone(),
                            gy.data.iter().zip(&vb.data).map(|(&g, &y)| g * y).collect(),
                        )
                    } else {
                        let d = va.last_dim();
                        let mut data = Vec::with_capacity(gy.len());
                        for row in gy.data.chunks(d) {
                            for j in 0..d {
                                data.push(row[j] * vb.data[j]);
                            }
                        }
                        Tensor::new(gy.shape.clone(), data)
                    };
                    let gb_full = Tensor::new(
                        gy.shape.clone(),
                        gy.data.iter().zip(&va.data).map(|(&g, &x)| g * x).collect(),
                    );
                    let gb = self.reduce_to_shape(&gb_full, &vb.shape.clone(), 1.0);
                    self.accumulate(&mut grads, *a, ga);
                    self.accumulate(&mut grads, *b, gb);
                }
                Op::Scale(a, c) => {
                    let ga = Tensor::new(
                        gy.shape.clone(),
                        gy.data.iter().map(|&g| g * c).collect(),
                    );
                    self.accumulate(&mut grads, *a, ga);
                }
                Op::MatMul(a, b) => {
                    let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let (n, k) = (va.shape[0], va.shape[1]);
                    let m = vb.shape[1];
                    let ga = Tensor::new(vec![n, k], matmul_nt(&gy.data, &vb.data, n, m, k));
                    let gb = Tensor::new(vec![k, m], matmul_tn(&va.data, &gy.data, n, k, m));
                    self.accumulate(&mut grads, *a, ga);
                    self.accumulate(&mut grads, *b, gb);
                }
                Op::Bmm { a, b, transpose_b } => {
                    let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let (bsz, n, k) = (va.shape[0], va.shape[1], va.shape[2]);
                    let m = if *transpose_b { vb.shape[1] } else { vb.shape[2] };
                    let mut ga = vec![0.0; va.len()];
                    let mut gb = vec![0.0; vb.len()];
                    for i in 0..bsz {
                        let gy_s = &gy.data[i * n * m..(i + 1) * n * m];
                        let a_s = &va.data[i * n * k..(i + 1) * n * k];
                        if *transpose_b {
                            let b_s = &vb.data[i * m * k..(i + 1) * m * k];
                            // C = A B^T: dA = dC B ; dB = dC^T A
                            let bt = Tensor::new(vec![m, k], b_s.to_vec());
                            let gyt = Tensor::new(vec![n, m], gy_s.to_vec());
                            ga[i * n * k..(i + 1) * n * k]
                                .copy_from_slice(&matmul(&gyt, &bt, n, m, k));
                            gb[i * m * k..(i + 1) * m * k]
                                .copy_from_slice(&matmul_tn(gy_s, a_s, n, m, k));
                        } else {
                            let b_s = &vb.data[i * k * m..(i + 1) * k * m];
                            ga[i * n * k..(i + 1) * n * k]
                                .copy_from_slice(&matmul_nt(gy_s, b_s, n, m, k));
                            gb[i * k * m..(i + 1) * k * m]
                                .copy_from_slice(&matmul_tn(a_s, gy_s, n, k, m));
                        }
                    }
                    self.accumulate(&mut grads, *a, Tensor::new(va.shape.clone(), ga));
                    self.accumulate(&mut grads, *b, Tensor::new(vb.shape.clone(), gb));
                }
                Op::Relu(a) => {
                    let va = &self.nodes[a.0].value;
                    let ga = Tensor::new(
                        gy.shape.clone(),
                        gy.data
                            .iter()
                            .zip(&va.data)
                            .map(|(&g, &x)| if x > 0.0 { g } else { 0.0 })
                            .collect(),
                    );
                    self.accumulate(&mut grads, *a, ga);
                }
                Op::Silu(a) => {
                    let va = &self.nodes[a.0].value;
                    let ga = Tensor::new(
                        gy.shape.clone(),
                        gy.data
                            .iter()
                            .zip(&va.data)
                            .map(|(&g, &x)| {
                                let s = sigmoid(x);
                                g * (s * (1.0 + x * (1.0 - s)))
                            })
                            .collect(),
                    );
                    self.accumulate(&mut grads, *a, ga);
                }
                Op::Softmax(a) => {
                    let y = &self.nodes[idx].value;
                    let d = y.last_dim();
                    let mut ga = vec![0.0; y.len()];
                    for (r, (y_row, g_row)) in
                        y.data.chunks(d).zip(gy.data.chunks(d)).enumerate()
                    {
                        let dot: f64 = y_row.iter().zip(g_row).map(|(&yv, &gv)| yv * gv).sum();
                        for j in 0..d {
                            ga[r * d + j] = y_row[j] * (g_row[j] - dot);
                        }
                    }
                    self.accumulate(&mut grads, *a, Tensor::new(y.shape.clone(), ga));
                }
                Op::LogSoftmax(a) => {
                    let y = &self.nodes[idx].value;
                    let d = y.last_dim();
                    let mut ga = vec![0.0; y.len()];
                    for (r, (y_row, g_row)) in
                        y.data.chunks(d).zip(gy.data.chunks(d)).enumerate()
                    {
                        let gsum: f64 = g_row.iter().sum();
                        for j in 0..d {
                            ga[r * d + j] = g_row[j] - y_row[j].exp() * gsum;
                        }
                    }
                    self.accumulate(&mut grads, *a, Tensor::new(y.shape.clone(), ga));
                }
                Op::LayerNorm { x, gain, bias, eps } => {
                    let vx = &self.nodes[x.0].value;
                    let g = &self.nodes[gain.0].value.data;
                    let d = vx.last_dim();
                    let rows = vx.rows();
                    let mut gx = vec![0.0; vx.len()];
                    let mut gg = vec![0.0; d];
                    let mut gb = vec![0.0; d];
                    for r in 0..rows {
                        let row = &vx.data[r * d..(r + 1) * d];
                        let gy_row = &gy.data[r * d..(r + 1) * d];
                        let mean = row.iter().sum::<f64>() / d as f64;
                        let var =
                            row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / d as f64;
                        let inv = 1.0 / (var + eps).sqrt();
                        let xhat: Vec<f64> = row.iter().map(|x| (x - mean) * inv).collect();
                        let dxhat: Vec<f64> =
                            gy_row.iter().zip(g).map(|(&gv, &gn)| gv * gn).collect();
                        let mean_dxhat = dxhat.iter().sum::<f64>() / d as f64;
                        let mean_dxhat_xhat =
                            dxhat.iter().zip(&xhat).map(|(&a, &b)| a * b).sum::<f64>() / d as f64;
                        for j in 0..d {
                            gx[r * d + j] =
                                (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat) * inv;
                            gg[j] += gy_row[j] * xhat[j];
                            gb[j] += gy_row[j];
                        }
                    }
                    self.accumulate(&mut grads, *x, Tensor::new(vx.shape.clone(), gx));
                    self.accumulate(&mut grads, *gain, Tensor::new(vec![d], gg));
                    self.accumulate(&mut grads, *bias, Tensor::new(vec![d], gb));
                }
                Op::Gather { table, indices } => {
                    let vt = &self.nodes[table.0].value;
                    let d = vt.shape[1];
                    let mut gt = vec![0.0; vt.len()];
                    for (r, &i) in indices.iter().enumerate() {
                        let i = i as usize;
                        for j in 0..d {
                            gt[i * d + j] += gy.data[r * d + j];
                        }
                    }
                    self.accumulate(&mut grads, *table, Tensor::new(vt.shape.clone(), gt));
                }
                Op::NeighborMean { x, adj } => {
                    let vx = &self.nodes[x.0].value;
                    let d = vx.shape[1];
                    let mut gx = vec![0.0; vx.len()];
                    for (t, list) in adj.iter().enumerate() {
                        if list.is_empty() {
                            continue;
                        }
                        let inv = 1.0 / list.len() as f64;
                        for &s in list {
                            let s = s as usize;
                            for j in 0..d {
                                gx[s * d + j] += gy.data[t * d + j] * inv;
                            }
                        }
                    }
                    self.accumulate(&mut grads, *x, Tensor::new(vx.shape.clone(), gx));
                }
                Op::Concat(parts) => {
                    let rows = gy.shape[0];
                    let total = gy.shape[1];
                    let mut offset = 0;
                    for p in parts {
                        let d = self.nodes[p.0].value.shape[1];
                        let mut gp = Vec::with_capacity(rows * d);
                        for r in 0..rows {
                            gp.extend_from_slice(
                                &gy.data[r * total + offset..r * total + offset + d],
                            );
                        }
                        self.accumulate(&mut grads, *p, Tensor::new(vec![rows, d], gp));
                        offset += d;
                    }
                }
                Op::SliceCols { x, start, len } => {
                    let vx = &self.nodes[x.0].value;
                    let (rows, d) = (vx.shape[0], vx.shape[1]);
                    let mut gx = vec![0.0; vx.len()];
                    for r in 0..rows {
                        for j in 0..*len {
                            gx[r * d + start + j] = gy.data[r * len + j];
                        }
                    }
                    self.accumulate(&mut grads, *x, Tensor::new(vx.shape.clone(), gx));
                }
                Op::Reshape(x) => {
                    let vx = &self.nodes[x.0].value;
                    self.accumulate(&mut grads, *x, Tensor::new(vx.shape.clone(), gy.data));
                }
                Op::Sum(a) => {
                    let va = &self.nodes[a.0].value;
                    let g = gy.item();
                    self.accumulate(
                        &mut grads,
                        *a,
                        Tensor::new(va.shape.clone(), vec![g; va.len()]),
                    );
                }
                Op::PickNllSum { logprobs, targets } => {
                    let v = &self.nodes[logprobs.0].value;
                    let d = v.shape[1];
                    let g = gy.item();
                    let mut gl = vec![0.0; v.len()];
                    for (i, &t) in targets.iter().enumerate() {
                        if t >= 0 {
                            gl[i * d + t as usize] = -g;
                        }
                    }
                    self.accumulate(&mut grads, *logprobs, Tensor::new(v.shape.clone(), gl));
                }
            }
        }

        Gradients { grads }
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        match &mut grads[v.0] {
            Some(existing) => {
                debug_assert_eq!(existing.shape, g.shape);
                for (e, x) in existing.data.iter_mut().zip(&g.data) {
                    *e += x;
                }
            }
            slot => *slot = Some(g),
        }
    }

    /// Sum `g` down to `shape` (for row-vector broadcast operands), with an
    /// optional sign flip.
    fn reduce_to_shape(&self, g: &Tensor, shape: &[usize], sign: f64) -> Tensor {
        if g.shape == shape {
            if sign == 1.0 {
                return g.clone();
            }
            return Tensor::new(
                g.shape.clone(),
                g.data.iter().map(|&x| x * sign).collect(),
            );
        }
        let d = shape[0];
        let mut out = vec![0.0; d];
        for row in g.data.chunks(d) {
            for j in 0..d {
                out[j] += row[j] * sign;
            }
        }
        Tensor::new(shape.to_vec(), out)
    }
}

/// Gradients of parameter leaves, indexed by their `Var`.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of a parameter leaf. Parameters not on any path to the loss
    /// report a zero gradient of no particular shape knowledge, so callers
    /// get `None` and should treat it as zero.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_uniform_on_zeros() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new(vec![1, 3], vec![0.0, 0.0, 0.0]));
        let y = tape.softmax(x);
        for v in &tape.value(y).data {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn matmul_identity() {
        let mut tape = Tape::new();
        let eye = tape.constant(Tensor::new(
            vec![3, 3],
            vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        ));
        let a = tape.constant(Tensor::new(vec![3, 2], (0..6).map(|x| x as f64).collect()));
        let out = tape.matmul(eye, a);
        assert_eq!(tape.value(out).data, tape.value(a).data);
    }

    #[test]
    fn neighbor_mean_basic_and_empty() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]));
        let adj = Rc::new(vec![vec![0u32, 1], vec![]]);
        let y = tape.neighbor_mean(x, adj);
        assert_eq!(tape.value(y).data, vec![2.0, 3.0, 0.0, 0.0]);
    }

    #[test]
    fn sum_of_squares_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::new(vec![1, 3], vec![1.0, -2.0, 3.0]));
        let sq = tape.mul(x, x);
        let loss = tape.sum(sq);
        let grads = tape.backward(loss);
        assert_eq!(grads.get(x).unwrap().data, vec![2.0, -4.0, 6.0]);
    }

    #[test]
    fn unreached_parameter_has_no_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::scalar(2.0));
        let y = tape.param(Tensor::scalar(5.0));
        let loss = tape.mul(x, x);
        let loss = tape.sum(loss);
        let grads = tape.backward(loss);
        assert!(grads.get(y).is_none());
        assert!(grads.get(x).is_some());
    }

    #[test]
    #[should_panic(expected = "scalar loss")]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::new(vec![2], vec![1.0, 2.0]));
        tape.backward(x);
    }
}
