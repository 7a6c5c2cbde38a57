//! Dense row-major tensors and the matrix kernels the graph needs.
//!
//! Graph operations treat every tensor as a matrix: a 1-D tensor of length
//! `n` is a `1 x n` row, and higher ranks fold leading dimensions into rows.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {shape:?} does not match {} values",
            data.len()
        );
        Self { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        Self::new(vec![rows, cols], data)
    }

    pub fn scalar(x: f64) -> Self {
        Self::new(vec![1, 1], vec![x])
    }

    pub fn row(data: Vec<f64>) -> Self {
        let n = data.len();
        Self::new(vec![1, n], data)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn cols(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    pub fn rows(&self) -> usize {
        if self.shape.len() <= 1 {
            1
        } else {
            self.shape[..self.shape.len() - 1].iter().product()
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows(), self.cols())
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }
}

const MR: usize = 4;
const NR: usize = 8;

/// `out (n x m) += A * b` where `A(i, p) = a[i * a_rs + p * a_cs]` and `b`
/// is a contiguous `k x m` block. Register-blocked over `MR x NR` tiles.
fn gemm(n: usize, k: usize, m: usize, a: &[f64], a_rs: usize, a_cs: usize, b: &[f64], out: &mut [f64]) {
    let mut i = 0;
    while i < n {
        let rows = MR.min(n - i);
        let mut j = 0;
        while j < m {
            let cols = NR.min(m - j);
            if rows == MR && cols == NR {
                let mut acc = [[0.0f64; NR]; MR];
                for p in 0..k {
                    let bv: &[f64; NR] = b[p * m + j..p * m + j + NR].try_into().expect("tile width");
                    for (r, acc_row) in acc.iter_mut().enumerate() {
                        let av = a[(i + r) * a_rs + p * a_cs];
                        for c in 0..NR {
                            acc_row[c] += av * bv[c];
                        }
                    }
                }
                for (r, acc_row) in acc.iter().enumerate() {
                    let o = &mut out[(i + r) * m + j..(i + r) * m + j + NR];
                    for c in 0..NR {
                        o[c] += acc_row[c];
                    }
                }
            } else {
                for r in i..i + rows {
                    for c in j..j + cols {
                        let mut acc = 0.0;
                        for p in 0..k {
                            acc += a[r * a_rs + p * a_cs] * b[p * m + c];
                        }
                        out[r * m + c] += acc;
                    }
                }
            }
            j += NR;
        }
        i += MR;
    }
}

/// `out += a (n x k) * b (k x m)`.
pub(crate) fn matmul_acc(a: &[f64], b: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    gemm(n, k, m, a, k, 1, b, out);
}

/// `out += a (n x k) * b^T` where `b` is `m x k`.
pub(crate) fn matmul_bt_acc(a: &[f64], b: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    let mut bt = vec![0.0; k * m];
    for j in 0..m {
        for p in 0..k {
            bt[p * m + j] = b[j * k + p];
        }
    }
    gemm(n, k, m, a, k, 1, &bt, out);
}

/// `out += a^T * b` where `a` is `n x k` and `b` is `n x m`; `out` is `k x m`.
pub(crate) fn matmul_at_acc(a: &[f64], b: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    gemm(k, n, m, a, 1, k, b, out);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernels_agree_with_definition() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let b = [7.0, 8.0, 9.0, 10.0, 11.0, 12.0]; // 3x2
        let mut out = vec![0.0; 4];
        matmul_acc(&a, &b, &mut out, 2, 3, 2);
        assert_eq!(out, vec![58.0, 64.0, 139.0, 154.0]);

        let bt = [7.0, 9.0, 11.0, 8.0, 10.0, 12.0]; // b^T, 2x3
        let mut out2 = vec![0.0; 4];
        matmul_bt_acc(&a, &bt, &mut out2, 2, 3, 2);
        assert_eq!(out, out2);

        // a^T (3x2) * c (2x2)
        let c = [1.0, 0.0, 0.0, 1.0];
        let mut out3 = vec![0.0; 6];
        matmul_at_acc(&a, &c, &mut out3, 2, 3, 2);
        assert_eq!(out3, vec![1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
    }

    #[test]
    fn shape_helpers() {
        let t = Tensor::zeros(vec![2, 3, 4]);
        assert_eq!(t.dims(), (6, 4));
        assert_eq!(Tensor::zeros(vec![5]).dims(), (1, 5));
    }
}
