use rayon::prelude::*;

/// Dense row-major f64 tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {shape:?} does not match {} elements",
            data.len()
        );
        Self { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; len],
        }
    }

    pub fn scalar(x: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![x],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.len() == 1
    }

    pub fn item(&self) -> f64 {
        assert!(self.is_scalar(), "item() on shape {:?}", self.shape);
        self.data[0]
    }

    /// Size of the last axis.
    pub fn last_dim(&self) -> usize {
        *self.shape.last().expect("non-empty shape")
    }

    /// Product of all axes but the last (the "row count" for axis-wise ops).
    pub fn rows(&self) -> usize {
        self.shape[..self.shape.len() - 1].iter().product()
    }

    pub fn rms(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        (self.data.iter().map(|x| x * x).sum::<f64>() / self.len() as f64).sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// C = A (n,k) x B (k,m), row-parallel.
pub(crate) fn matmul(a: &Tensor, b: &Tensor, n: usize, k: usize, m: usize) -> Vec<f64> {
    debug_assert_eq!(a.data.len(), n * k);
    debug_assert_eq!(b.data.len(), k * m);
    let mut out = vec![0.0; n * m];
    let body = |(i, row): (usize, &mut [f64])| {
        let a_row = &a.data[i * k..(i + 1) * k];
        for (kk, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let b_row = &b.data[kk * m..(kk + 1) * m];
            for (j, &bv) in b_row.iter().enumerate() {
                row[j] += av * bv;
            }
        }
    };
    if n * k * m >= 1 << 16 {
        out.par_chunks_mut(m).enumerate().for_each(body);
    } else {
        out.chunks_mut(m).enumerate().for_each(body);
    }
    out
}

/// C = A (n,k) x B^T where B is (m,k), row-parallel.
pub(crate) fn matmul_nt(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), n * k);
    debug_assert_eq!(b.len(), m * k);
    let mut out = vec![0.0; n * m];
    let body = |(i, row): (usize, &mut [f64])| {
        let a_row = &a[i * k..(i + 1) * k];
        for (j, out_v) in row.iter_mut().enumerate() {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for kk in 0..k {
                acc += a_row[kk] * b_row[kk];
            }
            *out_v = acc;
        }
    };
    if n * k * m >= 1 << 16 {
        out.par_chunks_mut(m).enumerate().for_each(body);
    } else {
        out.chunks_mut(m).enumerate().for_each(body);
    }
    out
}

/// C = A^T (k,n)^T x B ... i.e. A is (k,n) stored row-major, result (n,m).
pub(crate) fn matmul_tn(a: &[f64], b: &[f64], k: usize, n: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for kk in 0..k {
        let a_row = &a[kk * n..(kk + 1) * n];
        let b_row = &b[kk * m..(kk + 1) * m];
        for (i, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let row = &mut out[i * m..(i + 1) * m];
            for (j, &bv) in b_row.iter().enumerate() {
                row[j] += av * bv;
            }
        }
    }
    out
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
