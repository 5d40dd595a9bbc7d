//! Exact linear algebra over a prime field `F_p` chosen at runtime.
//!
//! Dense matrices ([`Matrix`]) carry the reduction kernels. Operators on the
//! large module spaces are stored column-sparse ([`SparseMatrix`]); every rank,
//! kernel and span computation on them splits the support into connected
//! blocks and runs the dense kernel on each block. [`Subspace`] is canonical:
//! its basis is the reduced row echelon form, so equality is entrywise.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LinAlgError {
    #[error("p not prime: {0}")]
    NotPrime(u64),
    #[error("modulus {0} outside 2 < p < 2^31")]
    ModulusOutOfRange(u64),
    #[error("dimension mismatch: {context} ({left} vs {right})")]
    DimensionMismatch {
        context: &'static str,
        left: usize,
        right: usize,
    },
    #[error("field mismatch: F_{0} vs F_{1}")]
    FieldMismatch(u64, u64),
    #[error("{0} is not invertible mod {1}")]
    NotInvertible(u64, u64),
}

pub type Result<T> = std::result::Result<T, LinAlgError>;

/// The prime field `F_p`, 2 < p < 2^31.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub struct FieldSpec {
    p: u64,
}

impl TryFrom<u64> for FieldSpec {
    type Error = LinAlgError;
    fn try_from(p: u64) -> Result<Self> {
        FieldSpec::new(p)
    }
}

impl From<FieldSpec> for u64 {
    fn from(f: FieldSpec) -> u64 {
        f.p
    }
}

pub fn is_prime(p: u64) -> bool {
    if p < 2 {
        return false;
    }
    let mut d = 2u64;
    while d * d <= p {
        if p.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

impl FieldSpec {
    pub fn new(p: u64) -> Result<Self> {
        if p <= 2 || p >= (1u64 << 31) {
            return Err(LinAlgError::ModulusOutOfRange(p));
        }
        if !is_prime(p) {
            return Err(LinAlgError::NotPrime(p));
        }
        Ok(FieldSpec { p })
    }

    #[inline]
    pub fn p(self) -> u64 {
        self.p
    }

    #[inline]
    pub fn add(self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.p {
            s - self.p
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.p - b
        }
    }

    #[inline]
    pub fn neg(self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.p - a
        }
    }

    #[inline]
    pub fn mul(self, a: u64, b: u64) -> u64 {
        a * b % self.p
    }

    pub fn pow(self, mut a: u64, mut e: u64) -> u64 {
        let mut acc = 1u64;
        a %= self.p;
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(acc, a);
            }
            a = self.mul(a, a);
            e >>= 1;
        }
        acc
    }

    pub fn inv(self, a: u64) -> Result<u64> {
        let a = a % self.p;
        if a == 0 {
            return Err(LinAlgError::NotInvertible(a, self.p));
        }
        Ok(self.pow(a, self.p - 2))
    }

    pub fn div(self, a: u64, b: u64) -> Result<u64> {
        Ok(self.mul(a, self.inv(b)?))
    }

    /// Residue of a signed integer.
    pub fn from_i64(self, v: i64) -> u64 {
        v.rem_euclid(self.p as i64) as u64
    }

    /// Signed representative in (-p/2, p/2], for display.
    pub fn centered(self, a: u64) -> i64 {
        if a > self.p / 2 {
            a as i64 - self.p as i64
        } else {
            a as i64
        }
    }

    pub fn factorial(self, n: u64) -> u64 {
        (1..=n).fold(1u64, |acc, k| self.mul(acc, k % self.p))
    }
}

fn check_field(a: FieldSpec, b: FieldSpec) -> Result<()> {
    if a != b {
        return Err(LinAlgError::FieldMismatch(a.p, b.p));
    }
    Ok(())
}

// ── dense matrices ─────────────────────────────────────────────────────────

/// Dense row-major matrix with entries in `[0, p)`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Matrix {
    field: FieldSpec,
    rows: usize,
    cols: usize,
    data: Vec<u64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix[F_{}; {}x{}]", self.field.p, self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "\n  {:?}", self.row(i))?;
        }
        Ok(())
    }
}

impl Matrix {
    pub fn zeros(field: FieldSpec, rows: usize, cols: usize) -> Self {
        Matrix {
            field,
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn identity(field: FieldSpec, n: usize) -> Self {
        let mut m = Self::zeros(field, n, n);
        for i in 0..n {
            m.data[i * n + i] = 1;
        }
        m
    }

    pub fn from_fn(
        field: FieldSpec,
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> u64,
    ) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j) % field.p);
            }
        }
        Matrix {
            field,
            rows,
            cols,
            data,
        }
    }

    /// Builds from signed rows; every row must have the same length.
    pub fn from_rows(field: FieldSpec, rows: &[Vec<i64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(LinAlgError::DimensionMismatch {
                    context: "ragged rows",
                    left: r.len(),
                    right: cols,
                });
            }
            data.extend(r.iter().map(|&v| field.from_i64(v)));
        }
        Ok(Matrix {
            field,
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_data(field: FieldSpec, rows: usize, cols: usize, data: Vec<u64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(LinAlgError::DimensionMismatch {
                context: "entry count",
                left: data.len(),
                right: rows * cols,
            });
        }
        let data = data.into_iter().map(|v| v % field.p).collect();
        Ok(Matrix {
            field,
            rows,
            cols,
            data,
        })
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }
    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn data(&self) -> &[u64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: u64) {
        self.data[i * self.cols + j] = v % self.field.p;
    }

    pub fn row(&self, i: usize) -> &[u64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<u64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.field, self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn mul(&self, other: &Matrix) -> Result<Matrix> {
        check_field(self.field, other.field)?;
        if self.cols != other.rows {
            return Err(LinAlgError::DimensionMismatch {
                context: "matrix product",
                left: self.cols,
                right: other.rows,
            });
        }
        let f = self.field;
        let mut out = Matrix::zeros(f, self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0 {
                    continue;
                }
                for j in 0..other.cols {
                    let idx = i * other.cols + j;
                    out.data[idx] = f.add(out.data[idx], f.mul(a, other.get(k, j)));
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip(other, |f, a, b| f.add(a, b))
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip(other, |f, a, b| f.sub(a, b))
    }

    fn zip(&self, other: &Matrix, op: impl Fn(FieldSpec, u64, u64) -> u64) -> Result<Matrix> {
        check_field(self.field, other.field)?;
        if self.rows != other.rows || self.cols != other.cols {
            return Err(LinAlgError::DimensionMismatch {
                context: "entrywise operation",
                left: self.rows * self.cols,
                right: other.rows * other.cols,
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| op(self.field, a, b))
            .collect();
        Ok(Matrix {
            field: self.field,
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scale(&self, c: u64) -> Matrix {
        let f = self.field;
        Matrix {
            field: f,
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&a| f.mul(a, c % f.p)).collect(),
        }
    }

    /// Submatrix on the given row and column index lists.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Matrix {
        Matrix::from_fn(self.field, rows.len(), cols.len(), |i, j| {
            self.get(rows[i], cols[j])
        })
    }

    pub fn mul_vec(&self, v: &[u64]) -> Vec<u64> {
        let f = self.field;
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(v)
                    .fold(0, |acc, (&a, &b)| f.add(acc, f.mul(a, b)))
            })
            .collect()
    }

    pub fn to_sparse(&self) -> SparseMatrix {
        let mut columns = vec![Vec::new(); self.cols];
        for i in 0..self.rows {
            for (j, col) in columns.iter_mut().enumerate() {
                let v = self.get(i, j);
                if v != 0 {
                    col.push((i, v));
                }
            }
        }
        SparseMatrix {
            field: self.field,
            rows: self.rows,
            cols: self.cols,
            columns,
        }
    }

    pub fn rank(&self) -> usize {
        let mut m = self.clone();
        m.rref_in_place().len()
    }

    /// Gauss-Jordan in place; returns the pivot columns.
    fn rref_in_place(&mut self) -> Vec<usize> {
        let f = self.field;
        let p = f.p;
        let (rows, cols) = (self.rows, self.cols);
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..cols {
            if r == rows {
                break;
            }
            let Some(piv) = (r..rows).find(|&i| self.data[i * cols + c] != 0) else {
                continue;
            };
            if piv != r {
                for j in c..cols {
                    self.data.swap(piv * cols + j, r * cols + j);
                }
            }
            let inv = f.inv(self.data[r * cols + c]).expect("nonzero pivot");
            if inv != 1 {
                for j in c..cols {
                    let idx = r * cols + j;
                    self.data[idx] = self.data[idx] * inv % p;
                }
            }
            for i in 0..rows {
                if i == r {
                    continue;
                }
                let factor = self.data[i * cols + c];
                if factor == 0 {
                    continue;
                }
                let negf = p - factor;
                for j in c..cols {
                    let src = self.data[r * cols + j];
                    if src != 0 {
                        let idx = i * cols + j;
                        self.data[idx] = (self.data[idx] + negf * src) % p;
                    }
                }
            }
            pivots.push(c);
            r += 1;
        }
        pivots
    }
}

/// Output of [`reduce`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Reduction {
    pub rank: usize,
    /// Canonical reduced row echelon form, same shape as the input.
    pub rref: Matrix,
    pub pivots: Vec<usize>,
    /// Rows form a basis of the right kernel `{x : m x = 0}`.
    pub kernel_basis: Matrix,
    /// Rows form the canonical basis of the column space.
    pub image_basis: Matrix,
}

pub fn reduce(m: &Matrix) -> Reduction {
    let f = m.field;
    let mut rref = m.clone();
    let pivots = rref.rref_in_place();
    let rank = pivots.len();

    let mut is_pivot = vec![false; m.cols];
    for &c in &pivots {
        is_pivot[c] = true;
    }
    let free: Vec<usize> = (0..m.cols).filter(|&c| !is_pivot[c]).collect();
    let mut kernel = Matrix::zeros(f, free.len(), m.cols);
    for (k, &fc) in free.iter().enumerate() {
        kernel.set(k, fc, 1);
        for (i, &pc) in pivots.iter().enumerate() {
            kernel.set(k, pc, f.neg(rref.get(i, fc)));
        }
    }

    let mut t = m.transpose();
    let tp = t.rref_in_place();
    let image = Matrix::from_fn(f, tp.len(), m.rows, |i, j| t.get(i, j));

    Reduction {
        rank,
        rref,
        pivots,
        kernel_basis: kernel,
        image_basis: image,
    }
}

// ── sparse vectors and operators ───────────────────────────────────────────

/// Sparse vector: `(index, value)` pairs sorted by index, no zero values.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SparseVec {
    entries: Vec<(usize, u64)>,
}

impl SparseVec {
    pub fn new() -> Self {
        SparseVec::default()
    }

    pub fn unit(i: usize) -> Self {
        SparseVec {
            entries: vec![(i, 1)],
        }
    }

    /// Sorts and merges duplicate indices.
    pub fn from_entries(f: FieldSpec, mut entries: Vec<(usize, u64)>) -> Self {
        entries.sort_unstable_by_key(|e| e.0);
        let mut out: Vec<(usize, u64)> = Vec::with_capacity(entries.len());
        for (i, v) in entries {
            let v = v % f.p;
            match out.last_mut() {
                Some(last) if last.0 == i => last.1 = f.add(last.1, v),
                _ => out.push((i, v)),
            }
        }
        out.retain(|e| e.1 != 0);
        SparseVec { entries: out }
    }

    pub fn from_dense(v: &[u64]) -> Self {
        SparseVec {
            entries: v
                .iter()
                .enumerate()
                .filter(|(_, &x)| x != 0)
                .map(|(i, &x)| (i, x))
                .collect(),
        }
    }

    pub fn to_dense(&self, len: usize) -> Vec<u64> {
        let mut out = vec![0; len];
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }

    pub fn entries(&self) -> &[(usize, u64)] {
        &self.entries
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, i: usize) -> u64 {
        self.entries
            .binary_search_by_key(&i, |e| e.0)
            .map_or(0, |k| self.entries[k].1)
    }

    pub fn leading(&self) -> Option<(usize, u64)> {
        self.entries.first().copied()
    }

    pub fn scale(&self, f: FieldSpec, c: u64) -> SparseVec {
        let c = c % f.p;
        if c == 0 {
            return SparseVec::new();
        }
        SparseVec {
            entries: self
                .entries
                .iter()
                .map(|&(i, v)| (i, f.mul(v, c)))
                .collect(),
        }
    }

    /// `self + c * other`.
    pub fn axpy(&self, f: FieldSpec, c: u64, other: &SparseVec) -> SparseVec {
        let c = c % f.p;
        if c == 0 {
            return self.clone();
        }
        let (a, b) = (&self.entries, &other.entries);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() || j < b.len() {
            if j == b.len() || (i < a.len() && a[i].0 < b[j].0) {
                out.push(a[i]);
                i += 1;
            } else if i == a.len() || b[j].0 < a[i].0 {
                out.push((b[j].0, f.mul(c, b[j].1)));
                j += 1;
            } else {
                let v = f.add(a[i].1, f.mul(c, b[j].1));
                if v != 0 {
                    out.push((a[i].0, v));
                }
                i += 1;
                j += 1;
            }
        }
        SparseVec { entries: out }
    }

    pub fn add(&self, f: FieldSpec, other: &SparseVec) -> SparseVec {
        self.axpy(f, 1, other)
    }

    pub fn sub(&self, f: FieldSpec, other: &SparseVec) -> SparseVec {
        self.axpy(f, f.p - 1, other)
    }

    /// Re-indexes through `map`; entries mapping to `None` are dropped.
    pub fn remap(&self, f: FieldSpec, map: impl Fn(usize) -> Option<usize>) -> SparseVec {
        SparseVec::from_entries(
            f,
            self.entries
                .iter()
                .filter_map(|&(i, v)| map(i).map(|j| (j, v)))
                .collect(),
        )
    }
}

/// Column-sparse matrix: column `j` lists the image of the `j`-th basis vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparseMatrix {
    field: FieldSpec,
    rows: usize,
    cols: usize,
    columns: Vec<Vec<(usize, u64)>>,
}

impl SparseMatrix {
    pub fn zeros(field: FieldSpec, rows: usize, cols: usize) -> Self {
        SparseMatrix {
            field,
            rows,
            cols,
            columns: vec![Vec::new(); cols],
        }
    }

    pub fn identity(field: FieldSpec, n: usize) -> Self {
        SparseMatrix {
            field,
            rows: n,
            cols: n,
            columns: (0..n).map(|i| vec![(i, 1)]).collect(),
        }
    }

    pub fn from_columns(field: FieldSpec, rows: usize, columns: Vec<SparseVec>) -> Self {
        SparseMatrix {
            field,
            rows,
            cols: columns.len(),
            columns: columns.into_iter().map(|c| c.entries).collect(),
        }
    }

    /// Accumulates `(row, col, value)` triples; duplicates are summed.
    pub fn from_triplets(
        field: FieldSpec,
        rows: usize,
        cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, u64)>,
    ) -> Self {
        let mut raw = vec![Vec::new(); cols];
        for (i, j, v) in triplets {
            raw[j].push((i, v));
        }
        SparseMatrix {
            field,
            rows,
            cols,
            columns: raw
                .into_iter()
                .map(|c| SparseVec::from_entries(field, c).entries)
                .collect(),
        }
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }
    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn column(&self, j: usize) -> SparseVec {
        SparseVec {
            entries: self.columns[j].clone(),
        }
    }

    pub fn column_entries(&self, j: usize) -> &[(usize, u64)] {
        &self.columns[j]
    }

    pub fn nnz(&self) -> usize {
        self.columns.iter().map(Vec::len).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.columns.iter().all(Vec::is_empty)
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.columns[j]
            .binary_search_by_key(&i, |e| e.0)
            .map_or(0, |k| self.columns[j][k].1)
    }

    pub fn apply(&self, v: &SparseVec) -> SparseVec {
        let f = self.field;
        let mut acc = Vec::new();
        for &(j, x) in &v.entries {
            for &(i, a) in &self.columns[j] {
                acc.push((i, f.mul(a, x)));
            }
        }
        SparseVec::from_entries(f, acc)
    }

    pub fn apply_dense(&self, v: &[u64]) -> Vec<u64> {
        let f = self.field;
        let mut out = vec![0; self.rows];
        for (j, &x) in v.iter().enumerate() {
            if x == 0 {
                continue;
            }
            for &(i, a) in &self.columns[j] {
                out[i] = f.add(out[i], f.mul(a, x));
            }
        }
        out
    }

    /// `self * other`.
    pub fn compose(&self, other: &SparseMatrix) -> Result<SparseMatrix> {
        check_field(self.field, other.field)?;
        if self.cols != other.rows {
            return Err(LinAlgError::DimensionMismatch {
                context: "operator composition",
                left: self.cols,
                right: other.rows,
            });
        }
        let columns = other
            .columns
            .iter()
            .map(|c| self.apply(&SparseVec { entries: c.clone() }).entries)
            .collect();
        Ok(SparseMatrix {
            field: self.field,
            rows: self.rows,
            cols: other.cols,
            columns,
        })
    }

    pub fn add(&self, other: &SparseMatrix) -> Result<SparseMatrix> {
        self.lincomb(1, other)
    }

    pub fn sub(&self, other: &SparseMatrix) -> Result<SparseMatrix> {
        self.lincomb(self.field.p - 1, other)
    }

    /// `self + c * other`.
    pub fn lincomb(&self, c: u64, other: &SparseMatrix) -> Result<SparseMatrix> {
        check_field(self.field, other.field)?;
        if self.rows != other.rows || self.cols != other.cols {
            return Err(LinAlgError::DimensionMismatch {
                context: "operator sum",
                left: self.rows * self.cols,
                right: other.rows * other.cols,
            });
        }
        let f = self.field;
        let columns = self
            .columns
            .iter()
            .zip(&other.columns)
            .map(|(a, b)| {
                SparseVec { entries: a.clone() }
                    .axpy(f, c, &SparseVec { entries: b.clone() })
                    .entries
            })
            .collect();
        Ok(SparseMatrix {
            field: f,
            rows: self.rows,
            cols: self.cols,
            columns,
        })
    }

    pub fn scale(&self, c: u64) -> SparseMatrix {
        let f = self.field;
        SparseMatrix {
            field: f,
            rows: self.rows,
            cols: self.cols,
            columns: self
                .columns
                .iter()
                .map(|col| {
                    SparseVec {
                        entries: col.clone(),
                    }
                    .scale(f, c)
                    .entries
                })
                .collect(),
        }
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut columns = vec![Vec::new(); self.rows];
        for (j, col) in self.columns.iter().enumerate() {
            for &(i, v) in col {
                columns[i].push((j, v));
            }
        }
        SparseMatrix {
            field: self.field,
            rows: self.cols,
            cols: self.rows,
            columns,
        }
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.field, self.rows, self.cols);
        for (j, col) in self.columns.iter().enumerate() {
            for &(i, v) in col {
                m.set(i, j, v);
            }
        }
        m
    }

    /// Restriction to a row subset and a column subset (new order as given).
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Matrix {
        let pos: HashMap<usize, usize> = rows.iter().enumerate().map(|(k, &r)| (r, k)).collect();
        let mut m = Matrix::zeros(self.field, rows.len(), cols.len());
        for (jj, &j) in cols.iter().enumerate() {
            for &(i, v) in &self.columns[j] {
                if let Some(&ii) = pos.get(&i) {
                    m.set(ii, jj, v);
                }
            }
        }
        m
    }

    /// Connected blocks of the bipartite row/column support graph.
    pub fn blocks(&self) -> Vec<Block> {
        let mut uf = UnionFind::new(self.rows + self.cols);
        for (j, col) in self.columns.iter().enumerate() {
            for &(i, _) in col {
                uf.union(self.rows + j, i);
            }
        }
        let mut groups: HashMap<usize, Block> = HashMap::new();
        for i in 0..self.rows {
            groups.entry(uf.find(i)).or_default().rows.push(i);
        }
        for j in 0..self.cols {
            groups
                .entry(uf.find(self.rows + j))
                .or_default()
                .cols
                .push(j);
        }
        let mut out: Vec<Block> = groups.into_values().collect();
        out.sort_by_key(|b| (b.cols.first().copied(), b.rows.first().copied()));
        out
    }

    pub fn rank(&self) -> usize {
        self.blocks()
            .iter()
            .filter(|b| !b.rows.is_empty() && !b.cols.is_empty())
            .map(|b| self.select(&b.rows, &b.cols).rank())
            .sum()
    }

    /// Right kernel as a subspace of `F_p^cols`.
    pub fn kernel(&self) -> Subspace {
        let f = self.field;
        let mut vecs = Vec::new();
        for b in self.blocks() {
            if b.cols.is_empty() {
                continue;
            }
            if b.rows.is_empty() {
                vecs.extend(b.cols.iter().map(|&j| SparseVec::unit(j)));
                continue;
            }
            let red = reduce(&self.select(&b.rows, &b.cols));
            for k in 0..red.kernel_basis.rows() {
                let entries = red
                    .kernel_basis
                    .row(k)
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0)
                    .map(|(jj, &v)| (b.cols[jj], v))
                    .collect();
                vecs.push(SparseVec::from_entries(f, entries));
            }
        }
        Subspace::span(f, self.cols, vecs)
    }

    /// Column space as a subspace of `F_p^rows`.
    pub fn image(&self) -> Subspace {
        Subspace::span(
            self.field,
            self.rows,
            self.columns
                .iter()
                .map(|c| SparseVec { entries: c.clone() }),
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Block {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

// ── subspaces ──────────────────────────────────────────────────────────────

/// Subspace of `F_p^ambient` with its canonical RREF basis.
///
/// Rows are stored sparsely, sorted by pivot; each row has a 1 at its pivot
/// and zeros at every other pivot column.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Subspace {
    field: FieldSpec,
    ambient: usize,
    rows: Vec<SparseVec>,
    pivots: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubspaceOp {
    Sum,
    Intersect,
    Equals,
    Contains,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CalcResult {
    Space(Subspace),
    Verdict(bool),
}

/// Single entry point over the four subspace operations.
pub fn subspace_calc(a: &Subspace, b: &Subspace, op: SubspaceOp) -> Result<CalcResult> {
    Ok(match op {
        SubspaceOp::Sum => CalcResult::Space(a.sum(b)?),
        SubspaceOp::Intersect => CalcResult::Space(a.intersect(b)?),
        SubspaceOp::Equals => {
            a.check_compatible(b)?;
            CalcResult::Verdict(a == b)
        }
        SubspaceOp::Contains => CalcResult::Verdict(a.contains(b)?),
    })
}

impl Subspace {
    pub fn zero(field: FieldSpec, ambient: usize) -> Self {
        Subspace {
            field,
            ambient,
            rows: Vec::new(),
            pivots: Vec::new(),
        }
    }

    pub fn full(field: FieldSpec, ambient: usize) -> Self {
        Self::coordinate(field, ambient, 0..ambient)
    }

    /// Span of the given standard basis vectors.
    pub fn coordinate(
        field: FieldSpec,
        ambient: usize,
        indices: impl IntoIterator<Item = usize>,
    ) -> Self {
        let mut idx: Vec<usize> = indices.into_iter().collect();
        idx.sort_unstable();
        idx.dedup();
        Subspace {
            field,
            ambient,
            rows: idx.iter().map(|&i| SparseVec::unit(i)).collect(),
            pivots: idx,
        }
    }

    /// Row space of a dense matrix.
    pub fn from_rows(m: &Matrix) -> Self {
        Self::span(
            m.field(),
            m.cols(),
            (0..m.rows()).map(|i| SparseVec::from_dense(m.row(i))),
        )
    }

    /// Canonical span of arbitrary vectors, reduced block by block.
    pub fn span(
        field: FieldSpec,
        ambient: usize,
        vecs: impl IntoIterator<Item = SparseVec>,
    ) -> Self {
        let vecs: Vec<SparseVec> = vecs.into_iter().filter(|v| !v.is_zero()).collect();
        if vecs.is_empty() {
            return Self::zero(field, ambient);
        }
        let mut uf = UnionFind::new(ambient);
        for v in &vecs {
            let first = v.entries[0].0;
            for &(i, _) in &v.entries[1..] {
                uf.union(first, i);
            }
        }
        let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
        for (k, v) in vecs.iter().enumerate() {
            groups.entry(uf.find(v.entries[0].0)).or_default().push(k);
        }
        let mut rows = Vec::new();
        for members in groups.values() {
            let mut coords: Vec<usize> = members
                .iter()
                .flat_map(|&k| vecs[k].entries.iter().map(|e| e.0))
                .collect();
            coords.sort_unstable();
            coords.dedup();
            let local: HashMap<usize, usize> =
                coords.iter().enumerate().map(|(a, &c)| (c, a)).collect();
            let width = coords.len();
            // Reduce in batches so redundant generators never blow up the block.
            let mut basis = Matrix::zeros(field, 0, width);
            for chunk in members.chunks(width.max(1) * 2) {
                let mut data = basis.data.clone();
                for &k in chunk {
                    let mut row = vec![0; width];
                    for &(i, v) in &vecs[k].entries {
                        row[local[&i]] = v;
                    }
                    data.extend(row);
                }
                let mut m = Matrix {
                    field,
                    rows: data.len() / width,
                    cols: width,
                    data,
                };
                let r = m.rref_in_place().len();
                m.data.truncate(r * width);
                m.rows = r;
                basis = m;
            }
            for i in 0..basis.rows() {
                let entries = basis
                    .row(i)
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0)
                    .map(|(a, &v)| (coords[a], v))
                    .collect();
                rows.push(SparseVec { entries });
            }
        }
        rows.sort_unstable_by_key(|r| r.entries[0].0);
        let pivots = rows.iter().map(|r| r.entries[0].0).collect();
        Subspace {
            field,
            ambient,
            rows,
            pivots,
        }
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }
    pub fn ambient(&self) -> usize {
        self.ambient
    }
    pub fn dim(&self) -> usize {
        self.rows.len()
    }
    pub fn is_zero(&self) -> bool {
        self.rows.is_empty()
    }
    pub fn basis(&self) -> &[SparseVec] {
        &self.rows
    }
    pub fn pivots(&self) -> &[usize] {
        &self.pivots
    }

    pub fn basis_matrix(&self) -> Matrix {
        let mut m = Matrix::zeros(self.field, self.rows.len(), self.ambient);
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, v) in &r.entries {
                m.set(i, j, v);
            }
        }
        m
    }

    fn check_compatible(&self, other: &Subspace) -> Result<()> {
        check_field(self.field, other.field)?;
        if self.ambient != other.ambient {
            return Err(LinAlgError::DimensionMismatch {
                context: "subspace ambient dimension",
                left: self.ambient,
                right: other.ambient,
            });
        }
        Ok(())
    }

    /// Normal form of `v` modulo this subspace (zero exactly on members).
    pub fn residual(&self, v: &SparseVec) -> SparseVec {
        let f = self.field;
        let mut out = v.clone();
        for (k, &pc) in self.pivots.iter().enumerate() {
            let c = v.get(pc);
            if c != 0 {
                out = out.axpy(f, f.neg(c), &self.rows[k]);
            }
        }
        out
    }

    pub fn contains_vec(&self, v: &SparseVec) -> bool {
        self.residual(v).is_zero()
    }

    /// Coordinates in the canonical basis, or `None` if `v` is not a member.
    pub fn coords(&self, v: &SparseVec) -> Option<Vec<u64>> {
        if !self.contains_vec(v) {
            return None;
        }
        Some(self.pivots.iter().map(|&pc| v.get(pc)).collect())
    }

    /// Sparse coordinates; caller guarantees membership.
    pub fn coords_sparse(&self, v: &SparseVec) -> SparseVec {
        let pos: Vec<(usize, u64)> = v
            .entries
            .iter()
            .filter_map(|&(i, x)| self.pivots.binary_search(&i).ok().map(|k| (k, x)))
            .collect();
        SparseVec { entries: pos }
    }

    pub fn sum(&self, other: &Subspace) -> Result<Subspace> {
        self.check_compatible(other)?;
        Ok(Subspace::span(
            self.field,
            self.ambient,
            self.rows.iter().chain(&other.rows).cloned(),
        ))
    }

    /// Zassenhaus intersection, block by block.
    pub fn intersect(&self, other: &Subspace) -> Result<Subspace> {
        self.check_compatible(other)?;
        let f = self.field;
        if self.is_zero() || other.is_zero() {
            return Ok(Subspace::zero(f, self.ambient));
        }
        let mut uf = UnionFind::new(self.ambient);
        for r in self.rows.iter().chain(&other.rows) {
            let first = r.entries[0].0;
            for &(i, _) in &r.entries[1..] {
                uf.union(first, i);
            }
        }
        let mut groups: HashMap<usize, (Vec<&SparseVec>, Vec<&SparseVec>)> = HashMap::new();
        for r in &self.rows {
            groups.entry(uf.find(r.entries[0].0)).or_default().0.push(r);
        }
        for r in &other.rows {
            groups.entry(uf.find(r.entries[0].0)).or_default().1.push(r);
        }
        let mut out = Vec::new();
        for (a, b) in groups.values() {
            if a.is_empty() || b.is_empty() {
                continue;
            }
            let mut coords: Vec<usize> = a
                .iter()
                .chain(b.iter())
                .flat_map(|r| r.entries.iter().map(|e| e.0))
                .collect();
            coords.sort_unstable();
            coords.dedup();
            let local: HashMap<usize, usize> =
                coords.iter().enumerate().map(|(k, &c)| (c, k)).collect();
            let w = coords.len();
            let mut m = Matrix::zeros(f, a.len() + b.len(), 2 * w);
            for (i, r) in a.iter().enumerate() {
                for &(c, v) in &r.entries {
                    m.set(i, local[&c], v);
                    m.set(i, w + local[&c], v);
                }
            }
            for (i, r) in b.iter().enumerate() {
                for &(c, v) in &r.entries {
                    m.set(a.len() + i, local[&c], v);
                }
            }
            let pivots = m.rref_in_place();
            for (i, &pc) in pivots.iter().enumerate() {
                if pc < w {
                    continue;
                }
                let entries = (w..2 * w)
                    .filter(|&c| m.get(i, c) != 0)
                    .map(|c| (coords[c - w], m.get(i, c)))
                    .collect();
                out.push(SparseVec { entries });
            }
        }
        Ok(Subspace::span(f, self.ambient, out))
    }

    /// `other ⊆ self`.
    pub fn contains(&self, other: &Subspace) -> Result<bool> {
        self.check_compatible(other)?;
        Ok(other.rows.iter().all(|r| self.contains_vec(r)))
    }

    /// Image under a linear map whose column count is this ambient dimension.
    pub fn image_under(&self, map: &SparseMatrix) -> Result<Subspace> {
        if map.cols() != self.ambient {
            return Err(LinAlgError::DimensionMismatch {
                context: "image of subspace",
                left: map.cols(),
                right: self.ambient,
            });
        }
        Ok(Subspace::span(
            self.field,
            map.rows(),
            self.rows.iter().map(|r| map.apply(r)),
        ))
    }

    /// A canonical complement of `sub` inside `self` (requires `sub ⊆ self`).
    pub fn complement_of(&self, sub: &Subspace) -> Result<Subspace> {
        self.check_compatible(sub)?;
        Ok(Subspace::span(
            self.field,
            self.ambient,
            self.rows.iter().map(|r| sub.residual(r)),
        ))
    }

    /// Embeds a subspace of `F_p^k` through a `k`-column map into this space's ambient.
    pub fn pushforward(
        field: FieldSpec,
        ambient: usize,
        vecs: &[SparseVec],
        map: impl Fn(usize) -> Option<usize>,
    ) -> Subspace {
        Subspace::span(field, ambient, vecs.iter().map(|v| v.remap(field, &map)))
    }
}
