use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(d: usize) -> Self {
        let mut m = Self::zeros(d, d);
        for i in 0..d {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_dim(rows * cols, data.len(), "matrix buffer")?;
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            check_dim(cols, r.len(), "matrix row")?;
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        // chunks_exact on an empty-column matrix would panic
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.cols, v.len(), "matvec")?;
        Ok(self.iter_rows().map(|r| dot(r, v)).collect())
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        check_dim(self.cols, other.rows, "matmul")?;
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        dot(&self.data, &self.data).sqrt()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.rows != self.cols {
            return false;
        }
        (0..self.rows).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Square lower-triangular matrix stored densely (row-major, zeros above the diagonal).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerTriangular {
    dim: usize,
    data: Vec<f64>,
}

impl LowerTriangular {
    pub fn identity(dim: usize) -> Self {
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = 1.0;
        }
        Self { dim, data }
    }

    /// Takes the lower triangle of a square matrix; entries above the diagonal are ignored.
    pub fn from_dense(m: &Matrix) -> Result<Self> {
        check_dim(m.rows(), m.cols(), "lower-triangular from dense")?;
        let dim = m.rows();
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..=i {
                data[i * dim + j] = m[(i, j)];
            }
        }
        Ok(Self { dim, data })
    }

    /// Builds `L` from its diagonal and the strictly-lower entries in row-major
    /// order `(1,0), (2,0), (2,1), (3,0), …`.
    pub fn from_parts(diag: &[f64], strict_lower: &[f64]) -> Result<Self> {
        let dim = diag.len();
        check_dim(dim * dim.saturating_sub(1) / 2, strict_lower.len(), "strict lower entries")?;
        let mut data = vec![0.0; dim * dim];
        let mut k = 0;
        for i in 0..dim {
            for j in 0..i {
                data[i * dim + j] = strict_lower[k];
                k += 1;
            }
            data[i * dim + i] = diag[i];
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        assert!(j <= i, "({i}, {j}) is above the diagonal");
        self.data[i * self.dim + j] = value;
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn strict_lower(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim * self.dim.saturating_sub(1) / 2);
        for i in 0..self.dim {
            for j in 0..i {
                out.push(self.get(i, j));
            }
        }
        out
    }

    pub fn to_dense(&self) -> Matrix {
        Matrix::from_vec(self.dim, self.dim, self.data.clone()).expect("square buffer")
    }

    /// `L Lᵀ`.
    pub fn gram(&self) -> Matrix {
        let d = self.dim;
        let mut out = Matrix::zeros(d, d);
        for i in 0..d {
            for j in 0..=i {
                let mut acc = 0.0;
                for k in 0..=j {
                    acc += self.get(i, k) * self.get(j, k);
                }
                out[(i, j)] = acc;
                out[(j, i)] = acc;
            }
        }
        out
    }

    /// `Σ ln Lᵢᵢ`; NaN if some diagonal entry is not positive.
    pub fn log_det(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i).ln()).sum()
    }

    /// Writes `L v` into `out` without allocating.
    #[inline]
    pub fn matvec_into(&self, v: &[f64], out: &mut [f64]) {
        let d = self.dim;
        for i in 0..d {
            let row = &self.data[i * d..i * d + i + 1];
            out[i] = dot(row, &v[..=i]);
        }
    }

    /// `Lᵀ v`.
    pub fn transpose_matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, v.len(), "transpose matvec")?;
        let d = self.dim;
        let mut out = vec![0.0; d];
        for i in 0..d {
            for j in 0..=i {
                out[j] += self.get(i, j) * v[i];
            }
        }
        Ok(out)
    }

    /// Solves `L x = b` by forward substitution.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, b.len(), "triangular solve")?;
        let d = self.dim;
        let mut x = vec![0.0; d];
        for i in 0..d {
            let s = b[i] - dot(&self.data[i * d..i * d + i], &x[..i]);
            x[i] = s / self.get(i, i);
        }
        Ok(x)
    }

    /// Solves `Lᵀ x = b` by back substitution.
    pub fn solve_transpose(&self, b: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, b.len(), "transposed triangular solve")?;
        let d = self.dim;
        let mut x = b.to_vec();
        for i in (0..d).rev() {
            x[i] /= self.get(i, i);
            let xi = x[i];
            for j in 0..i {
                x[j] -= self.get(i, j) * xi;
            }
        }
        Ok(x)
    }
}

/// `L v` for lower-triangular `L`.
pub fn tri_matvec(l: &LowerTriangular, v: &[f64]) -> Result<Vec<f64>> {
    check_dim(l.dim(), v.len(), "tri_matvec")?;
    let mut out = vec![0.0; v.len()];
    l.matvec_into(v, &mut out);
    Ok(out)
}

/// Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(a: &Matrix) -> Result<LowerTriangular> {
    if a.rows() != a.cols() {
        return Err(Error::Input(format!(
            "cholesky needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let scale = a.as_slice().iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
    if !a.is_symmetric(1e-12 * scale) {
        return Err(Error::Input("matrix is not symmetric".into()));
    }
    let d = a.rows();
    let mut l = LowerTriangular {
        dim: d,
        data: vec![0.0; d * d],
    };
    for j in 0..d {
        let mut s = a[(j, j)];
        for k in 0..j {
            s -= l.get(j, k) * l.get(j, k);
        }
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::Input(format!(
                "matrix is not positive definite (pivot {j} = {s})"
            )));
        }
        let ljj = s.sqrt();
        l.data[j * d + j] = ljj;
        for i in j + 1..d {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.data[i * d + j] = s / ljj;
        }
    }
    Ok(l)
}
