//! Dense row-major `f64` matrices.
//!
//! Everything in this crate is rank two: scalars are `[1, 1]`, row vectors
//! `[1, d]`. The kernels here are the plain (no-graph) building blocks; the
//! recorded counterparts live in [`crate::graph`].

/// Dense row-major matrix of `f64` values.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Tensor[{}x{}]", self.rows, self.cols)?;
        if self.data.len() <= 8 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, v: f64) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![v; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            rows * cols,
            data.len(),
            "from_vec: shape [{rows}, {cols}] does not hold {} values",
            data.len()
        );
        Tensor { rows, cols, data }
    }

    /// Build from a function of (row, col).
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Tensor { rows, cols, data }
    }

    /// Column vector `[n, 1]`.
    pub fn column(data: Vec<f64>) -> Self {
        Tensor::from_vec(data.len(), 1, data)
    }

    pub fn scalar(v: f64) -> Self {
        Tensor::from_vec(1, 1, vec![v])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Scalar value of a `[1, 1]` tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(
            (self.rows, self.cols),
            (1, 1),
            "item: tensor is [{}, {}], not scalar",
            self.rows,
            self.cols
        );
        self.data[0]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, op: &str, f: impl Fn(f64, f64) -> f64) -> Tensor {
        assert_eq!(
            self.shape(),
            other.shape(),
            "{op}: shape mismatch [{}, {}] vs [{}, {}]",
            self.rows,
            self.cols,
            other.rows,
            other.cols
        );
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Panics in debug builds if any value is NaN or infinite.
    #[inline]
    pub fn debug_check_finite(&self, op: &str) {
        if cfg!(debug_assertions) {
            if let Some(x) = self.data.iter().find(|x| !x.is_finite()) {
                panic!("{op}: non-finite value {x} in [{}, {}] output", self.rows, self.cols);
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    // ---- arithmetic ----------------------------------------------------

    /// `self @ other`: `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&self, other: &Tensor) -> Tensor {
        assert_eq!(
            self.cols, other.rows,
            "matmul: shape mismatch [{}, {}] vs [{}, {}]",
            self.rows, self.cols, other.rows, other.cols
        );
        let (m, k, n) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let arow = &self.data[i * k..(i + 1) * k];
            let crow = &mut out[i * n..(i + 1) * n];
            for (p, &aip) in arow.iter().enumerate() {
                let brow = &other.data[p * n..(p + 1) * n];
                for j in 0..n {
                    crow[j] += aip * brow[j];
                }
            }
        }
        Tensor {
            rows: m,
            cols: n,
            data: out,
        }
    }

    /// `self^T @ other`: `[m, k]^T x [m, n] -> [k, n]`.
    pub fn matmul_at(&self, other: &Tensor) -> Tensor {
        assert_eq!(
            self.rows, other.rows,
            "matmul_at: shape mismatch [{}, {}]^T vs [{}, {}]",
            self.rows, self.cols, other.rows, other.cols
        );
        let (m, k, n) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; k * n];
        for i in 0..m {
            let arow = &self.data[i * k..(i + 1) * k];
            let brow = &other.data[i * n..(i + 1) * n];
            for (p, &aip) in arow.iter().enumerate() {
                let crow = &mut out[p * n..(p + 1) * n];
                for j in 0..n {
                    crow[j] += aip * brow[j];
                }
            }
        }
        Tensor {
            rows: k,
            cols: n,
            data: out,
        }
    }

    /// `self @ other^T`: `[m, k] x [n, k]^T -> [m, n]`.
    pub fn matmul_bt(&self, other: &Tensor) -> Tensor {
        assert_eq!(
            self.cols, other.cols,
            "matmul_bt: shape mismatch [{}, {}] vs [{}, {}]^T",
            self.rows, self.cols, other.rows, other.cols
        );
        let (m, k, n) = (self.rows, self.cols, other.rows);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let arow = &self.data[i * k..(i + 1) * k];
            let crow = &mut out[i * n..(i + 1) * n];
            for (j, c) in crow.iter_mut().enumerate() {
                let brow = &other.data[j * k..(j + 1) * k];
                let mut acc = 0.0;
                for p in 0..k {
                    acc += arow[p] * brow[p];
                }
                *c = acc;
            }
        }
        Tensor {
            rows: m,
            cols: n,
            data: out,
        }
    }

    pub fn add(&self, other: &Tensor) -> Tensor {
        self.zip_map(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Tensor {
        self.zip_map(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Tensor {
        self.zip_map(other, "mul", |a, b| a * b)
    }

    pub fn div(&self, other: &Tensor) -> Tensor {
        self.zip_map(other, "div", |a, b| a / b)
    }

    /// Add a `[1, cols]` row vector to every row.
    pub fn add_row(&self, row: &Tensor) -> Tensor {
        assert!(
            row.rows == 1 && row.cols == self.cols,
            "add_row: shape mismatch [{}, {}] vs [{}, {}]",
            self.rows,
            self.cols,
            row.rows,
            row.cols
        );
        let mut out = self.clone();
        for i in 0..self.rows {
            let r = &mut out.data[i * self.cols..(i + 1) * self.cols];
            for (x, b) in r.iter_mut().zip(&row.data) {
                *x += b;
            }
        }
        out
    }

    pub fn scale(&self, c: f64) -> Tensor {
        self.map(|x| x * c)
    }

    pub fn offset(&self, c: f64) -> Tensor {
        self.map(|x| x + c)
    }

    pub fn relu(&self) -> Tensor {
        self.map(|x| x.max(0.0))
    }

    pub fn sigmoid(&self) -> Tensor {
        self.map(sigmoid)
    }

    pub fn softplus(&self) -> Tensor {
        self.map(softplus)
    }

    pub fn exp_elem(&self) -> Tensor {
        self.map(f64::exp)
    }

    pub fn ln_elem(&self) -> Tensor {
        self.map(f64::ln)
    }

    /// Row-wise softmax with max subtraction for stability.
    pub fn softmax_rows(&self) -> Tensor {
        let mut out = self.clone();
        for i in 0..self.rows {
            let r = &mut out.data[i * self.cols..(i + 1) * self.cols];
            let max = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for x in r.iter_mut() {
                *x = (*x - max).exp();
                sum += *x;
            }
            for x in r.iter_mut() {
                *x /= sum;
            }
        }
        out
    }

    /// Mean over the row axis: `[r, c] -> [1, c]`.
    pub fn mean_rows(&self) -> Tensor {
        assert!(self.rows >= 1, "mean_rows: empty tensor");
        self.sum_rows().scale(1.0 / self.rows as f64)
    }

    /// Sum over the row axis: `[r, c] -> [1, c]`.
    pub fn sum_rows(&self) -> Tensor {
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (o, &x) in out.iter_mut().zip(self.row(i)) {
                *o += x;
            }
        }
        Tensor {
            rows: 1,
            cols: self.cols,
            data: out,
        }
    }

    pub fn sum_all(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean_all(&self) -> f64 {
        self.sum_all() / self.data.len() as f64
    }

    /// Tile a `[1, c]` row vector to `[m, c]`.
    pub fn repeat_rows(&self, m: usize) -> Tensor {
        assert_eq!(
            self.rows, 1,
            "repeat_rows: expected [1, c], got [{}, {}]",
            self.rows, self.cols
        );
        let mut data = Vec::with_capacity(m * self.cols);
        for _ in 0..m {
            data.extend_from_slice(&self.data);
        }
        Tensor {
            rows: m,
            cols: self.cols,
            data,
        }
    }

    pub fn slice_cols(&self, start: usize, end: usize) -> Tensor {
        assert!(
            start < end && end <= self.cols,
            "slice_cols: range {start}..{end} out of [{}, {}]",
            self.rows,
            self.cols
        );
        let w = end - start;
        let mut data = Vec::with_capacity(self.rows * w);
        for i in 0..self.rows {
            data.extend_from_slice(&self.row(i)[start..end]);
        }
        Tensor {
            rows: self.rows,
            cols: w,
            data,
        }
    }

    pub fn concat_cols(parts: &[&Tensor]) -> Tensor {
        assert!(!parts.is_empty(), "concat_cols: no inputs");
        let rows = parts[0].rows;
        for p in parts {
            assert_eq!(
                p.rows, rows,
                "concat_cols: row mismatch [{}, {}] vs [{}, {}]",
                rows, parts[0].cols, p.rows, p.cols
            );
        }
        let cols: usize = parts.iter().map(|p| p.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for p in parts {
                data.extend_from_slice(p.row(i));
            }
        }
        Tensor { rows, cols, data }
    }

    /// Pairwise L1 distances between the rows of `self` `[m, d]` and
    /// `other` `[n, d]`, giving `[m, n]`.
    pub fn l1_dist(&self, other: &Tensor) -> Tensor {
        assert_eq!(
            self.cols, other.cols,
            "l1_dist: width mismatch [{}, {}] vs [{}, {}]",
            self.rows, self.cols, other.rows, other.cols
        );
        let mut out = Tensor::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let qi = self.row(i);
            for j in 0..other.rows {
                let kj = other.row(j);
                let mut acc = 0.0;
                for (a, b) in qi.iter().zip(kj) {
                    acc += (a - b).abs();
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    pub fn transpose(&self) -> Tensor {
        Tensor::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `ln(1 + e^x)`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}
