//! Based cochain complexes over `F_p`, filtrations, E₁ pages and abutments.
//!
//! Differentials follow the column convention: `d_m` has `dim_{m+1}` rows and
//! `dim_m` columns, so `d_m · x` is the image of a degree-`m` vector.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fplin::{FieldSpec, LinAlgError, Matrix, SparseMatrix, SparseVec, Subspace};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ComplexError {
    #[error("d_{degree} has shape {rows}x{cols}, expected {want_rows}x{want_cols}")]
    Shape {
        degree: usize,
        rows: usize,
        cols: usize,
        want_rows: usize,
        want_cols: usize,
    },
    #[error("d_{0} composed with d_{1} is nonzero")]
    NotAComplex(usize, usize),
    #[error("degree {degree} out of range 0..={top}")]
    DegreeOutOfRange { degree: usize, top: usize },
    #[error("not closed under d in degree {degree}; witness {witness:?}")]
    NotClosed {
        degree: usize,
        witness: Vec<(usize, u64)>,
    },
    #[error("filtration in degree {degree}: {reason}")]
    BadFiltration { degree: usize, reason: String },
    #[error(transparent)]
    LinAlg(#[from] LinAlgError),
}

pub type Result<T> = std::result::Result<T, ComplexError>;

/// A bounded cochain complex `C^0 → C^1 → … → C^top` with explicit bases.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BasedComplex {
    field: FieldSpec,
    dims: Vec<usize>,
    diffs: Vec<SparseMatrix>,
    labels: Vec<Option<Vec<String>>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cohomology {
    pub dim: usize,
    /// Rows are cocycles whose classes form a basis of `H^m`.
    pub representatives: Matrix,
}

impl BasedComplex {
    /// `diffs[m]` is `d_m : C^m → C^{m+1}`; `diffs.len() + 1 == dims.len()`.
    pub fn new(field: FieldSpec, dims: Vec<usize>, diffs: Vec<SparseMatrix>) -> Result<Self> {
        if dims.is_empty() || diffs.len() + 1 != dims.len() {
            return Err(ComplexError::Shape {
                degree: 0,
                rows: diffs.len(),
                cols: dims.len(),
                want_rows: dims.len().saturating_sub(1),
                want_cols: dims.len(),
            });
        }
        for (m, d) in diffs.iter().enumerate() {
            if d.rows() != dims[m + 1] || d.cols() != dims[m] {
                return Err(ComplexError::Shape {
                    degree: m,
                    rows: d.rows(),
                    cols: d.cols(),
                    want_rows: dims[m + 1],
                    want_cols: dims[m],
                });
            }
        }
        for m in 0..diffs.len().saturating_sub(1) {
            if !diffs[m + 1].compose(&diffs[m])?.is_zero() {
                return Err(ComplexError::NotAComplex(m + 1, m));
            }
        }
        let labels = vec![None; dims.len()];
        Ok(BasedComplex {
            field,
            dims,
            diffs,
            labels,
        })
    }

    pub fn from_dense(field: FieldSpec, dims: Vec<usize>, diffs: &[Matrix]) -> Result<Self> {
        Self::new(field, dims, diffs.iter().map(Matrix::to_sparse).collect())
    }

    /// Attaches basis labels for one degree.
    pub fn with_labels(mut self, degree: usize, labels: Vec<String>) -> Result<Self> {
        self.check_degree(degree)?;
        if labels.len() != self.dims[degree] {
            return Err(ComplexError::Shape {
                degree,
                rows: labels.len(),
                cols: 0,
                want_rows: self.dims[degree],
                want_cols: 0,
            });
        }
        self.labels[degree] = Some(labels);
        Ok(self)
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }
    pub fn top(&self) -> usize {
        self.dims.len() - 1
    }
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }
    pub fn dim(&self, m: usize) -> usize {
        self.dims.get(m).copied().unwrap_or(0)
    }
    pub fn diff(&self, m: usize) -> &SparseMatrix {
        &self.diffs[m]
    }
    pub fn diffs(&self) -> &[SparseMatrix] {
        &self.diffs
    }

    pub fn label(&self, m: usize, k: usize) -> String {
        match &self.labels[m] {
            Some(l) => l[k].clone(),
            None => format!("e{k}"),
        }
    }

    fn check_degree(&self, m: usize) -> Result<()> {
        if m > self.top() {
            return Err(ComplexError::DegreeOutOfRange {
                degree: m,
                top: self.top(),
            });
        }
        Ok(())
    }

    pub fn apply(&self, m: usize, v: &SparseVec) -> SparseVec {
        if m >= self.diffs.len() {
            return SparseVec::new();
        }
        self.diffs[m].apply(v)
    }

    pub fn cocycles(&self, m: usize) -> Subspace {
        if m < self.diffs.len() {
            self.diffs[m].kernel()
        } else {
            Subspace::full(self.field, self.dims[m])
        }
    }

    pub fn coboundaries(&self, m: usize) -> Subspace {
        if m == 0 {
            Subspace::zero(self.field, self.dims[0])
        } else {
            self.diffs[m - 1].image()
        }
    }

    fn rank(&self, m: usize) -> usize {
        self.diffs.get(m).map_or(0, SparseMatrix::rank)
    }

    /// `dim H^m` from ranks alone.
    pub fn cohomology_dim(&self, m: usize) -> Result<usize> {
        self.check_degree(m)?;
        let below = if m == 0 { 0 } else { self.rank(m - 1) };
        Ok(self.dims[m] - self.rank(m) - below)
    }

    pub fn cohomology_dims(&self) -> Vec<usize> {
        (0..=self.top())
            .map(|m| self.cohomology_dim(m).expect("in range"))
            .collect()
    }

    pub fn cohomology(&self, m: usize) -> Result<Cohomology> {
        self.check_degree(m)?;
        let z = self.cocycles(m);
        let b = self.coboundaries(m);
        let reps = z.complement_of(&b)?;
        Ok(Cohomology {
            dim: reps.dim(),
            representatives: reps.basis_matrix(),
        })
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.dims
            .iter()
            .enumerate()
            .map(|(m, &d)| if m % 2 == 0 { d as i64 } else { -(d as i64) })
            .sum()
    }

    pub fn is_acyclic(&self) -> bool {
        self.cohomology_dims().iter().all(|&d| d == 0)
    }

    /// Restricts to a family of subspaces, one per degree, checking closure.
    ///
    /// The result is expressed in the canonical bases of the subspaces.
    pub fn restrict(&self, sub: &[Subspace]) -> Result<BasedComplex> {
        if sub.len() != self.dims.len() {
            return Err(ComplexError::DegreeOutOfRange {
                degree: sub.len(),
                top: self.top(),
            });
        }
        for (m, s) in sub.iter().enumerate() {
            if s.ambient() != self.dims[m] {
                return Err(LinAlgError::DimensionMismatch {
                    context: "subcomplex ambient",
                    left: s.ambient(),
                    right: self.dims[m],
                }
                .into());
            }
        }
        let mut diffs = Vec::with_capacity(self.diffs.len());
        for m in 0..self.diffs.len() {
            let mut cols = Vec::with_capacity(sub[m].dim());
            for v in sub[m].basis() {
                let w = self.diffs[m].apply(v);
                if !sub[m + 1].contains_vec(&w) {
                    return Err(ComplexError::NotClosed {
                        degree: m,
                        witness: v.entries().to_vec(),
                    });
                }
                cols.push(sub[m + 1].coords_sparse(&w));
            }
            diffs.push(SparseMatrix::from_columns(
                self.field,
                sub[m + 1].dim(),
                cols,
            ));
        }
        BasedComplex::new(self.field, sub.iter().map(Subspace::dim).collect(), diffs)
    }

    pub fn direct_sum(&self, other: &BasedComplex) -> Result<BasedComplex> {
        let top = self.top().max(other.top());
        let dims: Vec<usize> = (0..=top).map(|m| self.dim(m) + other.dim(m)).collect();
        let mut diffs = Vec::new();
        for m in 0..top {
            let (a, b) = (self.dim(m), self.dim(m + 1));
            let mut trip = Vec::new();
            if m < self.diffs.len() {
                for j in 0..a {
                    for &(i, v) in self.diffs[m].column_entries(j) {
                        trip.push((i, j, v));
                    }
                }
            }
            if m < other.diffs.len() {
                for j in 0..other.dim(m) {
                    for &(i, v) in other.diffs[m].column_entries(j) {
                        trip.push((b + i, a + j, v));
                    }
                }
            }
            diffs.push(SparseMatrix::from_triplets(
                self.field,
                dims[m + 1],
                dims[m],
                trip,
            ));
        }
        BasedComplex::new(self.field, dims, diffs)
    }
}

/// Closure check returning the restricted complex.
pub fn verify_subcomplex(sub: &[Subspace], c: &BasedComplex) -> Result<BasedComplex> {
    c.restrict(sub)
}

/// `f_{m+1} d_m = d'_m f_m` for every degree.
pub fn is_chain_map(f: &[SparseMatrix], src: &BasedComplex, dst: &BasedComplex) -> Result<bool> {
    for m in 0..src.diffs.len().min(dst.diffs.len()) {
        let lhs = f[m + 1].compose(&src.diffs[m])?;
        let rhs = dst.diffs[m].compose(&f[m])?;
        if lhs != rhs {
            return Ok(false);
        }
    }
    Ok(true)
}

/// How the filtration interacts with the differential.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FiltrationMode {
    /// `d(Fil^a) ⊆ Fil^a`.
    Strict,
    /// `d(Fil^a) ⊆ Fil^{a-1}`; the spectral sequence uses `Fil^{a-m}` in degree `m`.
    Griffiths,
}

/// A complex with a finite decreasing filtration in each degree.
#[derive(Clone, Debug)]
pub struct FilteredComplex {
    complex: BasedComplex,
    // flags[m][a] = Fil^a in degree m, a = 0..=len-1, flags[m][0] full, last zero
    flags: Vec<Vec<Subspace>>,
    mode: FiltrationMode,
}

impl FilteredComplex {
    /// `flags[m]` lists `Fil^0 ⊇ Fil^1 ⊇ …`; it is padded with the zero space
    /// and all degrees are padded to a common length.
    pub fn new(
        complex: BasedComplex,
        mut flags: Vec<Vec<Subspace>>,
        mode: FiltrationMode,
    ) -> Result<Self> {
        if flags.len() != complex.dims.len() {
            return Err(ComplexError::BadFiltration {
                degree: flags.len(),
                reason: "one flag per degree required".into(),
            });
        }
        let f = complex.field;
        let len = flags.iter().map(Vec::len).max().unwrap_or(0) + 1;
        for (m, flag) in flags.iter_mut().enumerate() {
            let n = complex.dims[m];
            if flag
                .first()
                .is_none_or(|s| s.dim() != n || s.ambient() != n)
            {
                return Err(ComplexError::BadFiltration {
                    degree: m,
                    reason: "Fil^0 must be the whole term".into(),
                });
            }
            while flag.len() < len {
                flag.push(Subspace::zero(f, n));
            }
            for a in 1..len {
                if !flag[a - 1].contains(&flag[a])? {
                    return Err(ComplexError::BadFiltration {
                        degree: m,
                        reason: format!("Fil^{a} not contained in Fil^{}", a - 1),
                    });
                }
            }
        }
        let fc = FilteredComplex {
            complex,
            flags,
            mode,
        };
        fc.check_compatibility()?;
        Ok(fc)
    }

    /// The one-step filtration.
    pub fn trivial(complex: BasedComplex) -> Self {
        let flags = complex
            .dims
            .iter()
            .map(|&n| {
                vec![
                    Subspace::full(complex.field, n),
                    Subspace::zero(complex.field, n),
                ]
            })
            .collect();
        FilteredComplex {
            complex,
            flags,
            mode: FiltrationMode::Strict,
        }
    }

    fn check_compatibility(&self) -> Result<()> {
        let c = &self.complex;
        for m in 0..c.diffs.len() {
            for a in 0..self.flags[m].len() {
                let target_level = match self.mode {
                    FiltrationMode::Strict => a,
                    FiltrationMode::Griffiths => a.saturating_sub(1),
                };
                let target = &self.flags[m + 1][target_level.min(self.flags[m + 1].len() - 1)];
                for v in self.flags[m][a].basis() {
                    let w = c.diffs[m].apply(v);
                    if !target.contains_vec(&w) {
                        return Err(ComplexError::BadFiltration {
                            degree: m,
                            reason: format!("d(Fil^{a}) leaves Fil^{target_level}"),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn complex(&self) -> &BasedComplex {
        &self.complex
    }
    pub fn mode(&self) -> FiltrationMode {
        self.mode
    }
    pub fn flags(&self) -> &[Vec<Subspace>] {
        &self.flags
    }

    /// Number of spectral-sequence filtration steps (exclusive upper bound on `a`).
    pub fn levels(&self) -> usize {
        let base = self.flags[0].len();
        match self.mode {
            FiltrationMode::Strict => base,
            FiltrationMode::Griffiths => base + self.complex.top(),
        }
    }

    /// The filtration actually fed to the spectral sequence (strict in every mode).
    pub fn strict_level(&self, m: usize, a: usize) -> Subspace {
        let flag = &self.flags[m];
        let f = self.complex.field;
        let n = self.complex.dims[m];
        let idx = match self.mode {
            FiltrationMode::Strict => Some(a),
            FiltrationMode::Griffiths => a.checked_sub(m),
        };
        match idx {
            None => Subspace::full(f, n),
            Some(i) if i < flag.len() => flag[i].clone(),
            Some(_) => Subspace::zero(f, n),
        }
    }

    /// Restriction to a subcomplex; the filtration is intersected and re-expressed.
    pub fn restrict(&self, sub: &[Subspace]) -> Result<FilteredComplex> {
        let complex = self.complex.restrict(sub)?;
        let mut flags = Vec::with_capacity(sub.len());
        for (m, s) in sub.iter().enumerate() {
            let mut flag = Vec::with_capacity(self.flags[m].len());
            for level in &self.flags[m] {
                let inter = s.intersect(level)?;
                flag.push(Subspace::span(
                    self.complex.field,
                    s.dim(),
                    inter.basis().iter().map(|v| s.coords_sparse(v)),
                ));
            }
            flags.push(flag);
        }
        FilteredComplex::new(complex, flags, self.mode)
    }

    /// The graded piece `Gr^a` with its induced differential.
    pub fn graded_piece(&self, a: usize) -> Result<BasedComplex> {
        let c = &self.complex;
        let f = c.field;
        let top = c.top();
        let mut hi = Vec::with_capacity(top + 1);
        let mut comp = Vec::with_capacity(top + 1);
        for m in 0..=top {
            let fa = self.strict_level(m, a);
            let fa1 = self.strict_level(m, a + 1);
            comp.push(fa.complement_of(&fa1)?);
            hi.push(fa1);
        }
        let mut diffs = Vec::with_capacity(top);
        for m in 0..top {
            let cols = comp[m]
                .basis()
                .iter()
                .map(|v| {
                    let w = hi[m + 1].residual(&c.diffs[m].apply(v));
                    comp[m + 1].coords_sparse(&w)
                })
                .collect();
            diffs.push(SparseMatrix::from_columns(f, comp[m + 1].dim(), cols));
        }
        BasedComplex::new(f, comp.iter().map(Subspace::dim).collect(), diffs)
    }
}

/// `E_1^{a,b} = H^{a+b}(Gr^a)`, stored by filtration index and total degree.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct E1Page {
    /// `by_total[a][m] = dim E_1^{a, m-a}`.
    pub by_total: Vec<Vec<usize>>,
}

impl E1Page {
    pub fn get(&self, a: usize, b: i64) -> usize {
        let m = a as i64 + b;
        if m < 0 {
            return 0;
        }
        self.by_total
            .get(a)
            .and_then(|row| row.get(m as usize))
            .copied()
            .unwrap_or(0)
    }

    /// `Σ_a dim E_1^{a, m-a}`.
    pub fn total(&self, m: usize) -> usize {
        self.by_total
            .iter()
            .map(|row| row.get(m).copied().unwrap_or(0))
            .sum()
    }
}

pub fn e1_page(fc: &FilteredComplex) -> Result<E1Page> {
    let mut by_total = Vec::with_capacity(fc.levels());
    for a in 0..fc.levels() {
        by_total.push(fc.graded_piece(a)?.cohomology_dims());
    }
    Ok(E1Page { by_total })
}

/// `dim Gr^a H^b` for each filtration index `a`.
pub fn gr_abutment(fc: &FilteredComplex, b: usize) -> Result<Vec<usize>> {
    let c = &fc.complex;
    c.check_degree(b)?;
    let z = c.cocycles(b);
    let bd = c.coboundaries(b);
    let image_dim = |a: usize| -> Result<usize> {
        let level = fc.strict_level(b, a);
        Ok(z.intersect(&level)?.sum(&bd)?.dim() - bd.dim())
    };
    let mut dims = Vec::with_capacity(fc.levels());
    let mut prev = image_dim(0)?;
    for a in 0..fc.levels() {
        let next = image_dim(a + 1)?;
        dims.push(prev - next);
        prev = next;
    }
    Ok(dims)
}

/// Per-degree comparison of `Σ E_1` with `Σ Gr H = dim H`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegenerationRow {
    pub degree: usize,
    pub e1_total: usize,
    pub gr_total: usize,
    pub h_dim: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Degeneration {
    pub rows: Vec<DegenerationRow>,
    pub degenerate: bool,
}

/// Compares E₁ with the abutment in degrees `< below` (all degrees if `None`).
pub fn degeneration(fc: &FilteredComplex, below: Option<usize>) -> Result<Degeneration> {
    let e1 = e1_page(fc)?;
    let top = fc.complex.top();
    let end = below.map_or(top + 1, |b| b.min(top + 1));
    let mut rows = Vec::with_capacity(end);
    for m in 0..end {
        rows.push(DegenerationRow {
            degree: m,
            e1_total: e1.total(m),
            gr_total: gr_abutment(fc, m)?.iter().sum(),
            h_dim: fc.complex.cohomology_dim(m)?,
        });
    }
    let degenerate = rows.iter().all(|r| r.e1_total == r.gr_total);
    Ok(Degeneration { rows, degenerate })
}
