//! Higgs and flat modules over truncated rings and the complexes built from them.
//!
//! Every module is held at the operator level: an `F_p` space with the
//! multiplication operators `T_j` (by the ring variables) and the component
//! operators `X_i` (Higgs field `Θ_i` or connection `D_i`). A module vector has
//! total index `k * ring_dim + monomial` for basis element `e_k`.
//!
//! Forms are wedges `ω_J` of the ordered basis `ω_1..ω_n` (`dlog t_i` for the
//! first `r` coordinates, `dt_i` after). The differential is
//! `d(h ⊗ ω_J) = Σ_{i ∉ J} X_i(h) ⊗ ω_i ∧ ω_J` with
//! `ω_i ∧ ω_J = (-1)^{#{j ∈ J : j < i}} ω_{J ∪ i}`.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::complexes::{BasedComplex, ComplexError, FilteredComplex, FiltrationMode};
use crate::fplin::{FieldSpec, LinAlgError, Matrix, SparseMatrix, SparseVec, Subspace};
use crate::trunc_ring::{derivation_operator, RingElement, RingError, TruncRing};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModError {
    #[error(transparent)]
    Ring(#[from] RingError),
    #[error(transparent)]
    LinAlg(#[from] LinAlgError),
    #[error(transparent)]
    Complex(#[from] ComplexError),
    #[error("shape: {0}")]
    Shape(String),
    #[error("components {0} and {1} do not commute; witness column {2}")]
    NotCommuting(usize, usize, usize),
    #[error("Leibniz rule fails for component {component} against variable {variable}")]
    Leibniz { component: usize, variable: usize },
    #[error("field is not nilpotent")]
    NotNilpotent,
    #[error("nilpotency level {level} exceeds p - 1 = {max}")]
    LevelTooHigh { level: usize, max: u64 },
    #[error("component {component} maps e_{col} (level {from}) to e_{row} (level {to}); expected one level down")]
    GradingViolation {
        component: usize,
        row: usize,
        col: usize,
        from: usize,
        to: usize,
    },
    #[error("filtration: {0}")]
    Filtration(String),
    #[error("coordinate {0} is not logarithmic")]
    NotLog(usize),
    #[error("stratum index set is empty")]
    EmptyStratum,
    #[error("partition sums to {sum}, matrix has size {size}")]
    PartitionMismatch { sum: usize, size: usize },
    #[error("malformed form tag {0:?}")]
    MalformedTag(String),
    #[error("graded module is not free on the given basis: {0}")]
    NotFree(String),
}

pub type Result<T> = std::result::Result<T, ModError>;

// ── forms ──────────────────────────────────────────────────────────────────

/// Ordered wedge basis of `Λ^• ⟨ω_1..ω_n⟩`, subsets in lexicographic order.
#[derive(Clone, Debug)]
pub struct Forms {
    n: usize,
    r: usize,
    by_degree: Vec<Vec<Vec<usize>>>,
    index: HashMap<Vec<usize>, usize>,
}

impl Forms {
    pub fn new(n: usize, r: usize) -> Self {
        let mut by_degree = vec![Vec::new(); n + 1];
        for mask in 0u32..(1 << n) {
            let set: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
            by_degree[set.len()].push(set);
        }
        let mut index = HashMap::new();
        for forms in &mut by_degree {
            forms.sort();
            for (k, f) in forms.iter().enumerate() {
                index.insert(f.clone(), k);
            }
        }
        Forms {
            n,
            r,
            by_degree,
            index,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn r(&self) -> usize {
        self.r
    }
    pub fn count(&self, m: usize) -> usize {
        self.by_degree.get(m).map_or(0, Vec::len)
    }
    pub fn degree(&self, m: usize) -> &[Vec<usize>] {
        &self.by_degree[m]
    }
    pub fn form(&self, m: usize, k: usize) -> &[usize] {
        &self.by_degree[m][k]
    }
    pub fn index(&self, form: &[usize]) -> Option<usize> {
        self.index.get(form).copied()
    }

    /// `ω_i ∧ ω_J = sign · ω_K`; `None` when `i ∈ J`.
    pub fn wedge_left(i: usize, form: &[usize]) -> Option<(bool, Vec<usize>)> {
        if form.contains(&i) {
            return None;
        }
        let before = form.iter().filter(|&&j| j < i).count();
        let mut k = form.to_vec();
        k.insert(before, i);
        Some((before % 2 == 1, k))
    }

    pub fn label(&self, form: &[usize]) -> String {
        form_label(form, self.r)
    }
}

/// `ε_i = 1` iff `dlog t_i` divides the form.
pub fn multiweight(form: &[usize], r: usize) -> Vec<u32> {
    (0..r).map(|i| u32::from(form.contains(&i))).collect()
}

/// `"1"`, `"dlog t1"`, `"dlog t1^dt3"`, … (coordinates numbered from 1).
pub fn form_label(form: &[usize], r: usize) -> String {
    if form.is_empty() {
        return "1".into();
    }
    form.iter()
        .map(|&i| {
            if i < r {
                format!("dlog t{}", i + 1)
            } else {
                format!("dt{}", i + 1)
            }
        })
        .collect::<Vec<_>>()
        .join("^")
}

/// Inverse of [`form_label`]; also accepts `∧` as separator.
pub fn parse_form_label(tag: &str, n: usize, r: usize) -> Result<Vec<usize>> {
    let bad = || ModError::MalformedTag(tag.to_string());
    let t = tag.trim();
    if t == "1" {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for part in t.split(['^', '∧']) {
        let part = part.trim();
        let (log, num) = if let Some(rest) = part.strip_prefix("dlog t") {
            (true, rest)
        } else if let Some(rest) = part.strip_prefix("dt") {
            (false, rest)
        } else {
            return Err(bad());
        };
        let i: usize = num.trim().parse().map_err(|_| bad())?;
        if i == 0 || i > n || log != (i - 1 < r) {
            return Err(bad());
        }
        if out.last().is_some_and(|&prev| prev >= i - 1) {
            return Err(bad());
        }
        out.push(i - 1);
    }
    Ok(out)
}

// ── operator-level modules ─────────────────────────────────────────────────

/// An `F_p` space with ring multiplications `T_j` and components `X_i`.
pub trait LinearModule {
    fn field(&self) -> FieldSpec;
    fn n(&self) -> usize;
    fn r(&self) -> usize;
    fn dim(&self) -> usize;
    /// Multiplication by the `j`-th ring variable.
    fn mult(&self, j: usize) -> &SparseMatrix;
    /// The `i`-th Higgs or connection component.
    fn op(&self, i: usize) -> &SparseMatrix;
}

fn block_diag(op: &SparseMatrix, copies: usize) -> SparseMatrix {
    let d = op.cols();
    let mut trip = Vec::with_capacity(op.nnz() * copies);
    for k in 0..copies {
        for b in 0..d {
            for &(row, v) in op.column_entries(b) {
                trip.push((k * d + row, k * d + b, v));
            }
        }
    }
    SparseMatrix::from_triplets(op.field(), d * copies, d * copies, trip)
}

fn check_commuting(ops: &[SparseMatrix]) -> Result<()> {
    for i in 0..ops.len() {
        for j in i + 1..ops.len() {
            let c = ops[i].compose(&ops[j])?.sub(&ops[j].compose(&ops[i])?)?;
            if let Some(col) = (0..c.cols()).find(|&k| !c.column_entries(k).is_empty()) {
                return Err(ModError::NotCommuting(i, j, col));
            }
        }
    }
    Ok(())
}

/// Square matrix with entries in a truncated ring.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RingMatrix {
    ring: Arc<TruncRing>,
    rank: usize,
    entries: Vec<RingElement>,
}

impl RingMatrix {
    pub fn zero(ring: &Arc<TruncRing>, rank: usize) -> Self {
        RingMatrix {
            ring: Arc::clone(ring),
            rank,
            entries: vec![RingElement::zero(ring); rank * rank],
        }
    }

    pub fn identity(ring: &Arc<TruncRing>, rank: usize) -> Self {
        let mut m = Self::zero(ring, rank);
        for i in 0..rank {
            m.entries[i * rank + i] = RingElement::one(ring);
        }
        m
    }

    pub fn from_constant(ring: &Arc<TruncRing>, m: &Matrix) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(ModError::Shape(format!(
                "{}x{} is not square",
                m.rows(),
                m.cols()
            )));
        }
        let rank = m.rows();
        let entries = (0..rank * rank)
            .map(|k| RingElement::constant(ring, m.get(k / rank, k % rank)))
            .collect();
        Ok(RingMatrix {
            ring: Arc::clone(ring),
            rank,
            entries,
        })
    }

    pub fn from_entries(
        ring: &Arc<TruncRing>,
        rank: usize,
        entries: Vec<RingElement>,
    ) -> Result<Self> {
        if entries.len() != rank * rank {
            return Err(ModError::Shape(format!(
                "{} entries for rank {rank}",
                entries.len()
            )));
        }
        Ok(RingMatrix {
            ring: Arc::clone(ring),
            rank,
            entries,
        })
    }

    pub fn ring(&self) -> &Arc<TruncRing> {
        &self.ring
    }
    pub fn rank(&self) -> usize {
        self.rank
    }
    pub fn get(&self, i: usize, j: usize) -> &RingElement {
        &self.entries[i * self.rank + j]
    }
    pub fn set(&mut self, i: usize, j: usize, v: RingElement) {
        self.entries[i * self.rank + j] = v;
    }
    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(RingElement::is_zero)
    }

    pub fn mul(&self, other: &RingMatrix) -> Result<RingMatrix> {
        let n = self.rank;
        let mut out = Self::zero(&self.ring, n);
        for i in 0..n {
            for j in 0..n {
                let mut acc = RingElement::zero(&self.ring);
                for k in 0..n {
                    let (a, b) = (self.get(i, k), other.get(k, j));
                    if !a.is_zero() && !b.is_zero() {
                        acc = acc.add(&a.mul(b)?)?;
                    }
                }
                out.set(i, j, acc);
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &RingMatrix) -> Result<RingMatrix> {
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a.add(b))
            .collect::<std::result::Result<_, _>>()?;
        Ok(RingMatrix {
            ring: Arc::clone(&self.ring),
            rank: self.rank,
            entries,
        })
    }

    pub fn scale(&self, c: u64) -> RingMatrix {
        RingMatrix {
            ring: Arc::clone(&self.ring),
            rank: self.rank,
            entries: self.entries.iter().map(|e| e.scale(c)).collect(),
        }
    }

    /// Entrywise map into another ring.
    pub fn map(
        &self,
        ring: &Arc<TruncRing>,
        f: impl Fn(&RingElement) -> std::result::Result<RingElement, RingError>,
    ) -> Result<RingMatrix> {
        let entries = self
            .entries
            .iter()
            .map(f)
            .collect::<std::result::Result<_, _>>()?;
        Ok(RingMatrix {
            ring: Arc::clone(ring),
            rank: self.rank,
            entries,
        })
    }

    /// Constant terms as an `F_p` matrix.
    pub fn constant_part(&self) -> Matrix {
        Matrix::from_fn(self.ring.field(), self.rank, self.rank, |i, j| {
            self.get(i, j).constant_term()
        })
    }

    pub fn is_constant(&self) -> bool {
        self.entries
            .iter()
            .all(|e| e.coeffs().iter().skip(1).all(|&c| c == 0))
    }

    /// The `F_p`-linear operator on `ring^rank` (column convention).
    pub fn to_operator(&self) -> SparseMatrix {
        let d = self.ring.dim();
        let n = self.rank;
        let mut trip = Vec::new();
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                let op = a.mul_operator();
                for b in 0..d {
                    for &(row, v) in op.column_entries(b) {
                        trip.push((i * d + row, k * d + b, v));
                    }
                }
            }
        }
        SparseMatrix::from_triplets(self.ring.field(), n * d, n * d, trip)
    }
}

/// Levels `w, …, w, …, 0, …, 0` for grading dims `(m_0..m_w)`: the first
/// `m_w` basis vectors have level `w`, the last `m_0` level 0.
pub fn levels_from_dims(dims: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    for q in (0..dims.len()).rev() {
        out.extend(std::iter::repeat_n(q, dims[q]));
    }
    out
}

/// Repeats per-generator levels over the monomial basis (total index order).
pub fn expand_levels(rank_levels: &[usize], ring_dim: usize) -> Vec<usize> {
    rank_levels
        .iter()
        .flat_map(|&q| std::iter::repeat_n(q, ring_dim))
        .collect()
}

/// Least `l` with every product of `l + 1` components zero.
pub fn nilpotency_level(field: FieldSpec, dim: usize, ops: &[SparseMatrix]) -> Option<usize> {
    let mut space = Subspace::full(field, dim);
    for l in 0..=dim {
        let next = Subspace::span(
            field,
            dim,
            ops.iter()
                .flat_map(|op| space.basis().iter().map(move |v| op.apply(v))),
        );
        if next.is_zero() {
            return Some(l);
        }
        if next.dim() == space.dim() && next == space {
            return None;
        }
        space = next;
    }
    None
}

/// Free Higgs module `ring^rank` with commuting nilpotent `Θ_1..Θ_n`.
#[derive(Clone, Debug)]
pub struct HiggsModule {
    ring: Arc<TruncRing>,
    rank: usize,
    fields: Vec<RingMatrix>,
    grading: Option<Vec<usize>>,
    level: usize,
    mults: Vec<SparseMatrix>,
    ops: Vec<SparseMatrix>,
}

impl HiggsModule {
    pub fn new(
        ring: &Arc<TruncRing>,
        rank: usize,
        fields: Vec<RingMatrix>,
        grading: Option<Vec<usize>>,
    ) -> Result<Self> {
        let n = ring.n();
        if fields.len() != n {
            return Err(ModError::Shape(format!(
                "{} field components for n = {n}",
                fields.len()
            )));
        }
        if fields.iter().any(|f| f.rank != rank || *f.ring != **ring) {
            return Err(ModError::Shape(
                "field component over the wrong ring or rank".into(),
            ));
        }
        if let Some(g) = &grading {
            if g.len() != rank {
                return Err(ModError::Shape(format!(
                    "{} levels for rank {rank}",
                    g.len()
                )));
            }
            for (c, th) in fields.iter().enumerate() {
                for i in 0..rank {
                    for k in 0..rank {
                        if !th.get(i, k).is_zero() && g[i] + 1 != g[k] {
                            return Err(ModError::GradingViolation {
                                component: c,
                                row: i,
                                col: k,
                                from: g[k],
                                to: g[i],
                            });
                        }
                    }
                }
            }
        }
        let f = ring.field();
        let ops: Vec<SparseMatrix> = fields.iter().map(RingMatrix::to_operator).collect();
        check_commuting(&ops)?;
        let dim = rank * ring.dim();
        let level = nilpotency_level(f, dim, &ops).ok_or(ModError::NotNilpotent)?;
        if level as u64 > f.p() - 1 {
            return Err(ModError::LevelTooHigh {
                level,
                max: f.p() - 1,
            });
        }
        let mults = (0..n)
            .map(|j| Ok(block_diag(&RingElement::var(ring, j)?.mul_operator(), rank)))
            .collect::<Result<_>>()?;
        Ok(HiggsModule {
            ring: Arc::clone(ring),
            rank,
            fields,
            grading,
            level,
            mults,
            ops,
        })
    }

    pub fn zero_field(ring: &Arc<TruncRing>, rank: usize) -> Result<Self> {
        Self::new(
            ring,
            rank,
            vec![RingMatrix::zero(ring, rank); ring.n()],
            None,
        )
    }

    /// Constant `F_p` components; missing trailing components are zero.
    pub fn constant(
        ring: &Arc<TruncRing>,
        mats: &[Matrix],
        rank: usize,
        grading: Option<Vec<usize>>,
    ) -> Result<Self> {
        let mut fields = Vec::with_capacity(ring.n());
        for i in 0..ring.n() {
            fields.push(match mats.get(i) {
                Some(m) => RingMatrix::from_constant(ring, m)?,
                None => RingMatrix::zero(ring, rank),
            });
        }
        Self::new(ring, rank, fields, grading)
    }

    pub fn ring(&self) -> &Arc<TruncRing> {
        &self.ring
    }
    pub fn rank(&self) -> usize {
        self.rank
    }
    pub fn fields(&self) -> &[RingMatrix] {
        &self.fields
    }
    pub fn grading(&self) -> Option<&[usize]> {
        self.grading.as_deref()
    }
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn direct_sum(&self, other: &HiggsModule) -> Result<HiggsModule> {
        let rank = self.rank + other.rank;
        let fields = (0..self.ring.n())
            .map(|c| {
                let mut m = RingMatrix::zero(&self.ring, rank);
                for i in 0..self.rank {
                    for j in 0..self.rank {
                        m.set(i, j, self.fields[c].get(i, j).clone());
                    }
                }
                for i in 0..other.rank {
                    for j in 0..other.rank {
                        m.set(
                            self.rank + i,
                            self.rank + j,
                            other.fields[c].get(i, j).clone(),
                        );
                    }
                }
                m
            })
            .collect();
        let grading = match (&self.grading, &other.grading) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            _ => None,
        };
        HiggsModule::new(&self.ring, rank, fields, grading)
    }
}

impl LinearModule for HiggsModule {
    fn field(&self) -> FieldSpec {
        self.ring.field()
    }
    fn n(&self) -> usize {
        self.ring.n()
    }
    fn r(&self) -> usize {
        self.ring.r()
    }
    fn dim(&self) -> usize {
        self.rank * self.ring.dim()
    }
    fn mult(&self, j: usize) -> &SparseMatrix {
        &self.mults[j]
    }
    fn op(&self, i: usize) -> &SparseMatrix {
        &self.ops[i]
    }
}

/// Free flat module over the upstairs ring with connection components `D_i`.
#[derive(Clone, Debug)]
pub struct FlatModule {
    ring: Arc<TruncRing>,
    rank: usize,
    mults: Vec<SparseMatrix>,
    ops: Vec<SparseMatrix>,
}

impl FlatModule {
    /// Validates flatness and the Leibniz rule `[D_i, T_j] = derive_i(t_j)`.
    pub fn new(ring: &Arc<TruncRing>, rank: usize, ops: Vec<SparseMatrix>) -> Result<Self> {
        let n = ring.n();
        let dim = rank * ring.dim();
        if ops.len() != n || ops.iter().any(|o| o.rows() != dim || o.cols() != dim) {
            return Err(ModError::Shape(format!(
                "need {n} connection components of size {dim}"
            )));
        }
        let mults: Vec<SparseMatrix> = (0..n)
            .map(|j| Ok(block_diag(&RingElement::var(ring, j)?.mul_operator(), rank)))
            .collect::<Result<_>>()?;
        check_commuting(&ops)?;
        for (i, d) in ops.iter().enumerate() {
            for (j, t) in mults.iter().enumerate() {
                let comm = d.compose(t)?.sub(&t.compose(d)?)?;
                let dt = RingElement::var(ring, j)?.derive(i)?;
                if comm != block_diag(&dt.mul_operator(), rank) {
                    return Err(ModError::Leibniz {
                        component: i,
                        variable: j,
                    });
                }
            }
        }
        Ok(FlatModule {
            ring: Arc::clone(ring),
            rank,
            mults,
            ops,
        })
    }

    /// `(A^rank, d)`.
    pub fn trivial(ring: &Arc<TruncRing>, rank: usize) -> Result<Self> {
        let ops = (0..ring.n())
            .map(|i| Ok(block_diag(&derivation_operator(ring, i)?, rank)))
            .collect::<Result<_>>()?;
        Self::new(ring, rank, ops)
    }

    /// `D_i = d_i ⊗ id + twist_i` with each twist a ring matrix.
    pub fn with_twist(ring: &Arc<TruncRing>, rank: usize, twists: &[RingMatrix]) -> Result<Self> {
        let ops = (0..ring.n())
            .map(|i| {
                let canonical = block_diag(&derivation_operator(ring, i)?, rank);
                Ok(match twists.get(i) {
                    Some(t) => canonical.add(&t.to_operator())?,
                    None => canonical,
                })
            })
            .collect::<Result<_>>()?;
        Self::new(ring, rank, ops)
    }

    pub fn ring(&self) -> &Arc<TruncRing> {
        &self.ring
    }
    pub fn rank(&self) -> usize {
        self.rank
    }
    pub fn ops(&self) -> &[SparseMatrix] {
        &self.ops
    }
}

impl LinearModule for FlatModule {
    fn field(&self) -> FieldSpec {
        self.ring.field()
    }
    fn n(&self) -> usize {
        self.ring.n()
    }
    fn r(&self) -> usize {
        self.ring.r()
    }
    fn dim(&self) -> usize {
        self.rank * self.ring.dim()
    }
    fn mult(&self, j: usize) -> &SparseMatrix {
        &self.mults[j]
    }
    fn op(&self, i: usize) -> &SparseMatrix {
        &self.ops[i]
    }
}

// ── complexes ──────────────────────────────────────────────────────────────

/// `M ⊗ Λ^•`, degree-`m` basis `(form index) * dim + module index`.
pub fn module_complex<M: LinearModule + ?Sized>(m: &M) -> Result<BasedComplex> {
    let (n, d, f) = (m.n(), m.dim(), m.field());
    let forms = Forms::new(n, m.r());
    let dims: Vec<usize> = (0..=n).map(|k| forms.count(k) * d).collect();
    let mut diffs = Vec::with_capacity(n);
    for k in 0..n {
        let mut trip = Vec::new();
        for (jidx, form) in forms.degree(k).iter().enumerate() {
            for i in 0..n {
                let Some((neg, target)) = Forms::wedge_left(i, form) else {
                    continue;
                };
                let tidx = forms.index(&target).expect("wedge basis");
                let op = m.op(i);
                for v in 0..d {
                    for &(row, val) in op.column_entries(v) {
                        let val = if neg { f.neg(val) } else { val };
                        trip.push((tidx * d + row, jidx * d + v, val));
                    }
                }
            }
        }
        diffs.push(SparseMatrix::from_triplets(f, dims[k + 1], dims[k], trip));
    }
    Ok(BasedComplex::new(f, dims, diffs)?)
}

pub fn higgs_complex(e: &HiggsModule) -> Result<BasedComplex> {
    module_complex(e)
}

pub fn de_rham_complex(h: &FlatModule) -> Result<BasedComplex> {
    module_complex(h)
}

/// Every split `α + β = w` of a multi-index.
fn splits(w: &[u32]) -> Vec<(Vec<u32>, Vec<u32>)> {
    let mut out = vec![(Vec::new(), Vec::new())];
    for &wi in w {
        let mut next = Vec::with_capacity(out.len() * (wi as usize + 1));
        for (a, b) in &out {
            for ai in 0..=wi {
                let (mut a2, mut b2) = (a.clone(), b.clone());
                a2.push(ai);
                b2.push(wi - ai);
                next.push((a2, b2));
            }
        }
        out = next;
    }
    out
}

/// `Σ_{α+β=w} T^α X^β (M)`.
pub fn intersection_submodule<M: LinearModule + ?Sized>(m: &M, w: &[u32]) -> Result<Subspace> {
    if w.len() != m.r() {
        return Err(ModError::Shape(format!(
            "weight has {} entries, r = {}",
            w.len(),
            m.r()
        )));
    }
    let (d, f) = (m.dim(), m.field());
    if w.iter().all(|&x| x == 0) {
        return Ok(Subspace::full(f, d));
    }
    let mut gens = Vec::new();
    for (alpha, beta) in splits(w) {
        let mut word: Vec<&SparseMatrix> = Vec::new();
        for (i, (&a, &b)) in alpha.iter().zip(&beta).enumerate() {
            word.extend(std::iter::repeat_n(m.mult(i), a as usize));
            word.extend(std::iter::repeat_n(m.op(i), b as usize));
        }
        for v in 0..d {
            let mut x = SparseVec::unit(v);
            for op in &word {
                x = op.apply(&x);
                if x.is_zero() {
                    break;
                }
            }
            if !x.is_zero() {
                gens.push(x);
            }
        }
    }
    Ok(Subspace::span(f, d, gens))
}

/// Places a module subspace into the `form_index` block of a degree term.
fn embed_block(sub: &Subspace, form_index: usize) -> impl Iterator<Item = SparseVec> + '_ {
    let d = sub.ambient();
    let f = sub.field();
    sub.basis()
        .iter()
        .map(move |v| v.remap(f, |i| Some(form_index * d + i)))
}

/// Degree-wise `⊕_J E_{w(J)} ⊗ ω_J` inside [`module_complex`].
pub fn intersection_subspaces<M: LinearModule + ?Sized>(m: &M) -> Result<Vec<Subspace>> {
    let (n, r, d, f) = (m.n(), m.r(), m.dim(), m.field());
    let forms = Forms::new(n, r);
    let mut cache: HashMap<Vec<u32>, Subspace> = HashMap::new();
    let mut out = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let ambient = forms.count(k) * d;
        let mut gens = Vec::new();
        for (jidx, form) in forms.degree(k).iter().enumerate() {
            let w = multiweight(form, r);
            if !cache.contains_key(&w) {
                cache.insert(w.clone(), intersection_submodule(m, &w)?);
            }
            gens.extend(embed_block(&cache[&w], jidx));
        }
        out.push(Subspace::span(f, ambient, gens));
    }
    Ok(out)
}

pub fn intersection_complex<M: LinearModule + ?Sized>(m: &M) -> Result<BasedComplex> {
    let full = module_complex(m)?;
    Ok(full.restrict(&intersection_subspaces(m)?)?)
}

// ── filtrations and the graded functor ─────────────────────────────────────

/// Decreasing, ring-stable, Griffiths-transverse flag `Fil^0 = M ⊇ Fil^1 ⊇ …`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Filtration {
    steps: Vec<Subspace>,
}

impl Filtration {
    pub fn new<M: LinearModule + ?Sized>(m: &M, mut steps: Vec<Subspace>) -> Result<Self> {
        let (f, d) = (m.field(), m.dim());
        while steps.len() > 1 && steps.last().is_some_and(Subspace::is_zero) {
            steps.pop();
        }
        match steps.first() {
            Some(s) if s.ambient() == d && s.dim() == d => {}
            _ => {
                return Err(ModError::Filtration(
                    "Fil^0 must be the whole module".into(),
                ))
            }
        }
        for q in 1..steps.len() {
            if steps[q].ambient() != d || !steps[q - 1].contains(&steps[q])? {
                return Err(ModError::Filtration(format!(
                    "Fil^{q} is not inside Fil^{}",
                    q - 1
                )));
            }
        }
        for (q, s) in steps.iter().enumerate() {
            for v in s.basis() {
                for j in 0..m.n() {
                    if !s.contains_vec(&m.mult(j).apply(v)) {
                        return Err(ModError::Filtration(format!(
                            "Fil^{q} not stable under t_{}",
                            j + 1
                        )));
                    }
                }
                if q > 0 {
                    for i in 0..m.n() {
                        if !steps[q - 1].contains_vec(&m.op(i).apply(v)) {
                            return Err(ModError::Filtration(format!(
                                "component {} maps Fil^{q} outside Fil^{}",
                                i + 1,
                                q - 1
                            )));
                        }
                    }
                }
            }
        }
        let fil = Filtration { steps };
        if fil.width() as u64 > f.p() - 1 {
            return Err(ModError::Filtration(format!(
                "width {} exceeds p - 1",
                fil.width()
            )));
        }
        Ok(fil)
    }

    pub fn trivial<M: LinearModule + ?Sized>(m: &M) -> Self {
        Filtration {
            steps: vec![Subspace::full(m.field(), m.dim())],
        }
    }

    /// `Fil^q` spanned by the basis vectors of level `≥ q`.
    pub fn from_levels<M: LinearModule + ?Sized>(m: &M, levels: &[usize]) -> Result<Self> {
        if levels.len() != m.dim() {
            return Err(ModError::Shape(format!(
                "{} levels for dimension {}",
                levels.len(),
                m.dim()
            )));
        }
        let top = levels.iter().copied().max().unwrap_or(0);
        let steps = (0..=top)
            .map(|q| {
                Subspace::coordinate(
                    m.field(),
                    m.dim(),
                    (0..levels.len()).filter(|&k| levels[k] >= q),
                )
            })
            .collect();
        Self::new(m, steps)
    }

    /// Largest `q` with `Fil^q ≠ 0` (0 for the zero module).
    pub fn width(&self) -> usize {
        self.steps.iter().rposition(|s| !s.is_zero()).unwrap_or(0)
    }

    pub fn steps(&self) -> &[Subspace] {
        &self.steps
    }

    pub fn level(&self, q: usize) -> Subspace {
        match self.steps.get(q) {
            Some(s) => s.clone(),
            None => Subspace::zero(self.steps[0].field(), self.steps[0].ambient()),
        }
    }
}

/// The smallest ring-stable subspace containing `gens`.
pub fn module_span<M: LinearModule + ?Sized>(m: &M, gens: Vec<SparseVec>) -> Subspace {
    let mut s = Subspace::span(m.field(), m.dim(), gens);
    loop {
        let more = s
            .basis()
            .iter()
            .flat_map(|v| (0..m.n()).map(move |j| m.mult(j).apply(v)))
            .chain(s.basis().iter().cloned());
        let next = Subspace::span(m.field(), m.dim(), more.collect::<Vec<_>>());
        if next.dim() == s.dim() {
            return s;
        }
        s = next;
    }
}

/// `⊕_q Fil^q / Fil^{q+1}` with the induced operators.
///
/// Gr need not be free over the ring, so it is kept at the operator level.
#[derive(Clone, Debug)]
pub struct GradedHiggs {
    field: FieldSpec,
    n: usize,
    r: usize,
    fil: Filtration,
    complements: Vec<Subspace>,
    offsets: Vec<usize>,
    levels: Vec<usize>,
    mults: Vec<SparseMatrix>,
    ops: Vec<SparseMatrix>,
}

impl GradedHiggs {
    pub fn new<M: LinearModule + ?Sized>(h: &M, fil: &Filtration) -> Result<Self> {
        let f = h.field();
        let top = fil.steps.len();
        let mut complements = Vec::with_capacity(top);
        let mut offsets = Vec::with_capacity(top + 1);
        let mut levels = Vec::new();
        let mut total = 0;
        for q in 0..top {
            let c = fil.level(q).complement_of(&fil.level(q + 1))?;
            offsets.push(total);
            total += c.dim();
            levels.extend(std::iter::repeat_n(q, c.dim()));
            complements.push(c);
        }
        offsets.push(total);
        let mut g = GradedHiggs {
            field: f,
            n: h.n(),
            r: h.r(),
            fil: fil.clone(),
            complements,
            offsets,
            levels,
            mults: Vec::new(),
            ops: Vec::new(),
        };
        let induced = |g: &GradedHiggs, op: &SparseMatrix, shift: usize| {
            let mut cols = Vec::with_capacity(total);
            for q in 0..top {
                for c in g.complements[q].basis() {
                    cols.push(match q.checked_sub(shift) {
                        Some(target) => g.project(target, &op.apply(c)),
                        None => SparseVec::new(),
                    });
                }
            }
            SparseMatrix::from_columns(f, total, cols)
        };
        let mults = (0..h.n()).map(|j| induced(&g, h.mult(j), 0)).collect();
        let ops = (0..h.n()).map(|i| induced(&g, h.op(i), 1)).collect();
        g.mults = mults;
        g.ops = ops;
        Ok(g)
    }

    /// Class in `Gr^q` of a vector of `Fil^q`, in Gr coordinates.
    pub fn project(&self, q: usize, v: &SparseVec) -> SparseVec {
        let w = self.fil.level(q + 1).residual(v);
        let off = self.offsets[q];
        let c = self.complements[q].coords_sparse(&w);
        c.remap(self.field, |i| Some(off + i))
    }

    /// `⊕_q (S ∩ Fil^q + Fil^{q+1}) / Fil^{q+1}` as a subspace of Gr.
    pub fn graded_subspace(&self, s: &Subspace) -> Result<Subspace> {
        let mut gens = Vec::new();
        for q in 0..self.complements.len() {
            let inter = s.intersect(&self.fil.level(q))?;
            gens.extend(inter.basis().iter().map(|v| self.project(q, v)));
        }
        Ok(Subspace::span(self.field, self.dim(), gens))
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }
    pub fn filtration(&self) -> &Filtration {
        &self.fil
    }
    pub fn complements(&self) -> &[Subspace] {
        &self.complements
    }
    pub fn ops(&self) -> &[SparseMatrix] {
        &self.ops
    }

    /// Recovers a free graded Higgs module when every `Gr^q` is spanned by
    /// whole monomial blocks `ring · e_k` of the source module.
    pub fn to_higgs(&self, ring: &Arc<TruncRing>, rank: usize) -> Result<HiggsModule> {
        let d = ring.dim();
        let mut gr_of: HashMap<usize, usize> = HashMap::new();
        let mut block_level = vec![None; rank];
        for (q, c) in self.complements.iter().enumerate() {
            for (k, v) in c.basis().iter().enumerate() {
                let e = v.entries();
                if e.len() != 1 || e[0].1 != 1 {
                    return Err(ModError::NotFree(format!("Gr^{q} is not coordinate")));
                }
                let idx = e[0].0;
                let block = idx / d;
                if block >= rank {
                    return Err(ModError::NotFree("index beyond rank".into()));
                }
                match block_level[block] {
                    None => block_level[block] = Some(q),
                    Some(q0) if q0 == q => {}
                    Some(_) => {
                        return Err(ModError::NotFree(format!("e_{block} splits across levels")))
                    }
                }
                gr_of.insert(idx, self.offsets[q] + k);
            }
        }
        if gr_of.len() != rank * d {
            return Err(ModError::NotFree(
                "graded pieces do not cover the module".into(),
            ));
        }
        let grading: Vec<usize> = block_level.into_iter().map(|q| q.unwrap_or(0)).collect();
        let back: HashMap<usize, usize> = gr_of.iter().map(|(&a, &b)| (b, a)).collect();
        let mut fields = Vec::with_capacity(self.n);
        for op in &self.ops {
            let mut m = RingMatrix::zero(ring, rank);
            for k in 0..rank {
                let image = op.column(gr_of[&(k * d)]);
                let mut coeffs = vec![vec![0u64; d]; rank];
                for &(g, v) in image.entries() {
                    let idx = back[&g];
                    coeffs[idx / d][idx % d] = v;
                }
                for (j, c) in coeffs.into_iter().enumerate() {
                    m.set(j, k, RingElement::from_coeffs(ring, c)?);
                }
            }
            fields.push(m);
        }
        HiggsModule::new(ring, rank, fields, Some(grading))
    }
}

impl LinearModule for GradedHiggs {
    fn field(&self) -> FieldSpec {
        self.field
    }
    fn n(&self) -> usize {
        self.n
    }
    fn r(&self) -> usize {
        self.r
    }
    fn dim(&self) -> usize {
        self.offsets[self.offsets.len() - 1]
    }
    fn mult(&self, j: usize) -> &SparseMatrix {
        &self.mults[j]
    }
    fn op(&self, i: usize) -> &SparseMatrix {
        &self.ops[i]
    }
}

/// Degree-wise `Fil^q ⊗ Λ^m` on [`module_complex`], in Griffiths mode.
pub fn filtered_complex<M: LinearModule + ?Sized>(
    h: &M,
    fil: &Filtration,
    sub: Option<&[Subspace]>,
) -> Result<FilteredComplex> {
    let full = module_complex(h)?;
    let (n, d, f) = (h.n(), h.dim(), h.field());
    let forms = Forms::new(n, h.r());
    let mut flags = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let ambient = forms.count(k) * d;
        let flag = fil
            .steps
            .iter()
            .map(|s| {
                Subspace::span(
                    f,
                    ambient,
                    (0..forms.count(k))
                        .flat_map(|j| embed_block(s, j))
                        .collect::<Vec<_>>(),
                )
            })
            .collect();
        flags.push(flag);
    }
    let fc = FilteredComplex::new(full, flags, FiltrationMode::Griffiths)?;
    match sub {
        None => Ok(fc),
        Some(s) => Ok(fc.restrict(s)?),
    }
}

/// Output of [`gr_filtration`].
#[derive(Clone, Debug)]
pub struct GrFiltration {
    pub graded: GradedHiggs,
    pub filtered: FilteredComplex,
}

pub fn gr_filtration<M: LinearModule + ?Sized>(h: &M, fil: &Filtration) -> Result<GrFiltration> {
    Ok(GrFiltration {
        graded: GradedHiggs::new(h, fil)?,
        filtered: filtered_complex(h, fil, None)?,
    })
}

// ── residues and triangular matrices ───────────────────────────────────────

/// A nonempty set of log coordinates (0-based).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StrataIndex(Vec<usize>);

impl StrataIndex {
    pub fn new(mut idx: Vec<usize>, r: usize) -> Result<Self> {
        idx.sort_unstable();
        idx.dedup();
        if idx.is_empty() {
            return Err(ModError::EmptyStratum);
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= r) {
            return Err(ModError::NotLog(bad));
        }
        Ok(StrataIndex(idx))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    /// Every nonempty subset of `0..r`.
    pub fn all(r: usize) -> Vec<StrataIndex> {
        (1u32..(1 << r))
            .map(|mask| StrataIndex((0..r).filter(|&i| mask >> i & 1 == 1).collect()))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Residue {
    /// `∏ D_i` on `H / (t_i : i ∈ I) H`, in the coordinate basis of the quotient.
    pub stratum: Matrix,
    /// The same operator on `H / (t_1..t_n) H`, in the basis `e_k`.
    pub closed_point: Matrix,
}

fn quotient_operator<M: LinearModule + ?Sized>(
    m: &M,
    op: &SparseMatrix,
    vars: &[usize],
) -> Result<Matrix> {
    let (f, d) = (m.field(), m.dim());
    let sub = Subspace::span(
        f,
        d,
        vars.iter()
            .flat_map(|&j| (0..d).map(move |c| m.mult(j).column(c)))
            .collect::<Vec<_>>(),
    );
    let comp = Subspace::full(f, d).complement_of(&sub)?;
    let mut out = Matrix::zeros(f, comp.dim(), comp.dim());
    for (k, c) in comp.basis().iter().enumerate() {
        let w = sub.residual(&op.apply(c));
        for &(i, v) in comp.coords_sparse(&w).entries() {
            out.set(i, k, v);
        }
    }
    Ok(out)
}

pub fn residue_stratum(h: &FlatModule, strata: &StrataIndex) -> Result<Residue> {
    if let Some(&bad) = strata.0.iter().find(|&&i| i >= h.r()) {
        return Err(ModError::NotLog(bad));
    }
    let mut op = SparseMatrix::identity(h.field(), h.dim());
    for &i in &strata.0 {
        op = h.op(i).compose(&op)?;
    }
    let all: Vec<usize> = (0..h.n()).collect();
    Ok(Residue {
        stratum: quotient_operator(h, &op, &strata.0)?,
        closed_point: quotient_operator(h, &op, &all)?,
    })
}

/// Reorders a basis so levels ascend (stable), returning the conjugated
/// matrix and the level partition `(d_0..d_l)`.
pub fn to_ascending_levels(m: &Matrix, levels: &[usize]) -> (Matrix, Vec<usize>) {
    let mut order: Vec<usize> = (0..levels.len()).collect();
    order.sort_by_key(|&k| levels[k]);
    let top = levels.iter().copied().max().unwrap_or(0);
    let mut partition = vec![0; top + 1];
    for &q in levels {
        partition[q] += 1;
    }
    (m.select(&order, &order), partition)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Triangularity {
    NotTriangular,
    Triangular,
    Special,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriangularCheck {
    pub class: Triangularity,
    pub rank: usize,
    /// `Σ_i rank a_{i,i+s}`.
    pub block_rank_sum: usize,
}

fn block_offsets(partition: &[usize]) -> Vec<usize> {
    let mut off = vec![0];
    for &d in partition {
        off.push(off.last().unwrap() + d);
    }
    off
}

fn check_partition(m: &Matrix, partition: &[usize], s: usize) -> Result<()> {
    let sum: usize = partition.iter().sum();
    if m.rows() != m.cols() || sum != m.rows() {
        return Err(ModError::PartitionMismatch {
            sum,
            size: m.rows(),
        });
    }
    if partition.is_empty() || s >= partition.len() {
        return Err(ModError::Shape(format!(
            "s = {s} outside 0..={}",
            partition.len().saturating_sub(1)
        )));
    }
    Ok(())
}

/// Blocks `a_{i,j}` (rows of block `i`, columns of block `j`) with
/// `a_{i,i+t} = 0` for `t > s` make a triangular matrix; it is special when
/// `rank M = Σ_i rank a_{i,i+s}`.
pub fn special_triangular_check(
    m: &Matrix,
    partition: &[usize],
    s: usize,
) -> Result<TriangularCheck> {
    check_partition(m, partition, s)?;
    let off = block_offsets(partition);
    let l = partition.len() - 1;
    let block = |i: usize, j: usize| {
        let rows: Vec<usize> = (off[i]..off[i + 1]).collect();
        let cols: Vec<usize> = (off[j]..off[j + 1]).collect();
        m.select(&rows, &cols)
    };
    let triangular = (0..=l).all(|i| (i + s + 1..=l).all(|j| block(i, j).is_zero()));
    let rank = m.rank();
    let block_rank_sum = (0..=l.saturating_sub(s))
        .filter(|&i| i + s <= l)
        .map(|i| block(i, i + s).rank())
        .sum();
    let class = if !triangular {
        Triangularity::NotTriangular
    } else if rank == block_rank_sum {
        Triangularity::Special
    } else {
        Triangularity::Triangular
    };
    Ok(TriangularCheck {
        class,
        rank,
        block_rank_sum,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    pub equal: bool,
    /// `dim M(Fil^{i+s} V)`.
    pub image_dim: usize,
    /// `dim (im M ∩ Fil^i V)`.
    pub intersection_dim: usize,
}

/// `Fil^q V` = span of the blocks `q, q+1, …`.
pub fn block_filtration(field: FieldSpec, partition: &[usize], q: usize) -> Subspace {
    let off = block_offsets(partition);
    let start = off[q.min(partition.len())];
    Subspace::coordinate(field, off[partition.len()], start..off[partition.len()])
}

/// Compares `M(Fil^{i+s} V)` with `im(M) ∩ Fil^i V`.
pub fn fil_image_exchange(m: &Matrix, partition: &[usize], s: usize, i: usize) -> Result<Exchange> {
    check_partition(m, partition, s)?;
    let f = m.field();
    let op = m.to_sparse();
    let lhs = block_filtration(f, partition, i + s).image_under(&op)?;
    let rhs = op.image().intersect(&block_filtration(f, partition, i))?;
    Ok(Exchange {
        equal: lhs == rhs,
        image_dim: lhs.dim(),
        intersection_dim: rhs.dim(),
    })
}

// ── seeded instances ───────────────────────────────────────────────────────

/// Special matrices as `B S C` with `S` supported on the `s`-th block
/// superdiagonal and `B`, `C` invertible and filtration-preserving.
pub fn random_special(f: FieldSpec, partition: &[usize], s: usize, rng: &mut impl Rng) -> Matrix {
    let off = block_offsets(partition);
    let d = off[partition.len()];
    let block_of = |k: usize| {
        (0..partition.len())
            .find(|&b| k < off[b + 1])
            .expect("index in range")
    };
    let lower = |rng: &mut dyn rand::RngCore| loop {
        let m = Matrix::from_fn(f, d, d, |i, j| {
            if block_of(i) >= block_of(j) {
                rng.gen_range(0..f.p())
            } else {
                0
            }
        });
        if m.rank() == d {
            return m;
        }
    };
    let b = lower(rng);
    let c = lower(rng);
    let density = rng.gen_range(0..=f.p());
    let sm = Matrix::from_fn(f, d, d, |i, j| {
        if block_of(j) == block_of(i) + s && rng.gen_range(0..=f.p()) < density {
            rng.gen_range(0..f.p())
        } else {
            0
        }
    });
    b.mul(&sm).and_then(|x| x.mul(&c)).expect("square")
}

/// `im M ∩ Fil^i` computed as `M(ker of the rows above block i)`.
pub fn exchange_brute_force(m: &Matrix, partition: &[usize], s: usize, i: usize) -> bool {
    let off = block_offsets(partition);
    let d = m.rows();
    let top_rows: Vec<usize> = (0..off[i.min(partition.len())]).collect();
    let all: Vec<usize> = (0..d).collect();
    let pre = crate::fplin::reduce(&m.select(&top_rows, &all)).kernel_basis;
    let rhs = Subspace::from_rows(&m.mul(&pre.transpose()).expect("shapes").transpose());
    let start = off[(i + s).min(partition.len())];
    let cols: Vec<usize> = (start..d).collect();
    let lhs = Subspace::from_rows(&m.select(&all, &cols).transpose());
    lhs == rhs
}

pub fn random_invertible(field: FieldSpec, n: usize, rng: &mut impl Rng) -> Matrix {
    loop {
        let m = Matrix::from_fn(field, n, n, |_, _| rng.gen_range(0..field.p()));
        if m.rank() == n {
            return m;
        }
    }
}

pub fn inverse(m: &Matrix) -> Result<Matrix> {
    let n = m.rows();
    let f = m.field();
    let aug = Matrix::from_fn(f, n, 2 * n, |i, j| {
        if j < n {
            m.get(i, j)
        } else {
            u64::from(j - n == i)
        }
    });
    let red = crate::fplin::reduce(&aug);
    if red.pivots.iter().copied().take(n).ne(0..n) {
        return Err(LinAlgError::NotInvertible(0, f.p()).into());
    }
    Ok(Matrix::from_fn(f, n, n, |i, j| red.rref.get(i, n + j)))
}

/// A nilpotent `P J P⁻¹` whose Jordan blocks have size at most `max_block`.
pub fn random_nilpotent(
    field: FieldSpec,
    rank: usize,
    max_block: usize,
    rng: &mut impl Rng,
) -> Matrix {
    let mut j = Matrix::zeros(field, rank, rank);
    let mut start = 0;
    while start < rank {
        let size = rng.gen_range(1..=max_block.max(1)).min(rank - start);
        for k in start + 1..start + size {
            j.set(k, k - 1, 1);
        }
        start += size;
    }
    let p = random_invertible(field, rank, rng);
    let pinv = inverse(&p).expect("invertible");
    p.mul(&j).and_then(|x| x.mul(&pinv)).expect("square")
}

/// Commuting nilpotent components `Θ_i = u^{α_i} · f_i(N)` for one seeded
/// nilpotent `N` and polynomials `f_i` without constant term.
pub fn random_higgs(
    ring: &Arc<TruncRing>,
    rank: usize,
    max_level: usize,
    rng: &mut impl Rng,
) -> Result<HiggsModule> {
    let f = ring.field();
    let nil = random_nilpotent(f, rank, max_level + 1, rng);
    let mut powers = vec![Matrix::identity(f, rank)];
    for k in 1..=rank {
        powers.push(powers[k - 1].mul(&nil)?);
    }
    let mut fields = Vec::with_capacity(ring.n());
    for _ in 0..ring.n() {
        let mut poly = Matrix::zeros(f, rank, rank);
        for power in powers.iter().skip(1) {
            poly = poly.add(&power.scale(rng.gen_range(0..f.p())))?;
        }
        let exps: Vec<u32> = (0..ring.n())
            .map(|_| {
                if rng.gen_bool(0.3) {
                    rng.gen_range(0..ring.trunc())
                } else {
                    0
                }
            })
            .collect();
        let mono = RingElement::monomial(ring, &exps, 1);
        let base = RingMatrix::from_constant(ring, &poly)?;
        fields.push(base.map(ring, |e| e.mul(&mono))?);
    }
    HiggsModule::new(ring, rank, fields, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trunc_ring::RingPair;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn pair(p: u64, n: usize, r: usize, m: u32) -> RingPair {
        RingPair::new(FieldSpec::new(p).unwrap(), n, r, m).unwrap()
    }

    fn nilpotent_2x2(f: FieldSpec) -> Matrix {
        Matrix::from_rows(f, &[vec![0, 0], vec![1, 0]]).unwrap()
    }

    fn rank_two(p: u64, m: u32) -> (RingPair, HiggsModule) {
        let rp = pair(p, 1, 1, m);
        let e = HiggsModule::constant(
            rp.down(),
            &[nilpotent_2x2(rp.field())],
            2,
            Some(levels_from_dims(&[1, 1])),
        )
        .unwrap();
        (rp, e)
    }

    #[test]
    fn multiweights() {
        assert_eq!(multiweight(&[0, 2], 2), vec![1, 0]);
        assert_eq!(multiweight(&[], 2), vec![0, 0]);
        assert_eq!(multiweight(&[0, 1], 2), vec![1, 1]);
        assert_eq!(parse_form_label("dlog t1^dt3", 3, 2).unwrap(), vec![0, 2]);
        assert_eq!(parse_form_label("1", 3, 2).unwrap(), Vec::<usize>::new());
        assert!(parse_form_label("dt1", 3, 2).is_err());
        assert!(parse_form_label("dt3^dlog t1", 3, 2).is_err());
        let forms = Forms::new(3, 2);
        for m in 0..=3 {
            for form in forms.degree(m) {
                assert_eq!(&parse_form_label(&forms.label(form), 3, 2).unwrap(), form);
            }
        }
    }

    #[test]
    fn wedge_signs() {
        assert_eq!(Forms::wedge_left(1, &[0, 2]), Some((true, vec![0, 1, 2])));
        assert_eq!(Forms::wedge_left(0, &[1]), Some((false, vec![0, 1])));
        assert_eq!(Forms::wedge_left(1, &[1]), None);
    }

    #[test]
    fn zero_field_complex_has_zero_differentials() {
        let rp = pair(3, 2, 1, 2);
        let e = HiggsModule::zero_field(rp.down(), 2).unwrap();
        let c = higgs_complex(&e).unwrap();
        assert!(c.diffs().iter().all(SparseMatrix::is_zero));
        assert_eq!(c.dims(), &[8, 16, 8]);
    }

    #[test]
    fn rank_two_higgs_cohomology() {
        let (_, e) = rank_two(5, 1);
        assert_eq!(e.level(), 1);
        assert_eq!(higgs_complex(&e).unwrap().cohomology_dims(), vec![1, 1]);
        let int = intersection_complex(&e).unwrap();
        assert_eq!(int.cohomology_dims(), vec![1, 0]);
        let e1 = intersection_submodule(&e, &[1]).unwrap();
        // levels (1, 0): Θ_1 sends e_0 to e_1, the level-0 vector
        assert_eq!(e1, Subspace::coordinate(e.field(), 2, [1]));
        assert_eq!(intersection_submodule(&e, &[0]).unwrap().dim(), 2);
    }

    #[test]
    fn zero_field_intersection_is_t_multiple() {
        let rp = pair(3, 2, 1, 2);
        let e = HiggsModule::zero_field(rp.down(), 1).unwrap();
        let w1 = intersection_submodule(&e, &[1]).unwrap();
        assert_eq!(w1, e.mult(0).image());
        let subs = intersection_subspaces(&e).unwrap();
        // Ω^1 = t_1 E ⊗ dlog t_1 ⊕ E ⊗ dt_2
        assert_eq!(subs[1].dim(), 2 + 4);
    }

    #[test]
    fn no_divisor_means_full_intersection_complex() {
        let rp = pair(3, 2, 0, 1);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let e = random_higgs(rp.down(), 3, 2, &mut rng).unwrap();
        assert_eq!(
            intersection_complex(&e).unwrap(),
            higgs_complex(&e).unwrap()
        );
    }

    #[test]
    fn trivial_de_rham_h0_is_pth_powers() {
        for (p, n, m) in [(3, 1, 1), (3, 2, 2), (5, 2, 1)] {
            let rp = pair(p, n, 1, m);
            let h = FlatModule::trivial(rp.up(), 1).unwrap();
            let c = de_rham_complex(&h).unwrap();
            assert_eq!(c.cohomology_dim(0).unwrap(), (m as usize).pow(n as u32));
        }
    }

    #[test]
    fn non_commuting_fields_rejected() {
        let rp = pair(5, 2, 2, 1);
        let f = rp.field();
        let a = nilpotent_2x2(f);
        let b = a.transpose();
        let err = HiggsModule::constant(rp.down(), &[a, b], 2, None).unwrap_err();
        assert!(matches!(err, ModError::NotCommuting(0, 1, _)));
    }

    #[test]
    fn grading_violation_rejected() {
        let rp = pair(5, 1, 1, 1);
        let f = rp.field();
        let err = HiggsModule::constant(
            rp.down(),
            &[nilpotent_2x2(f).transpose()],
            2,
            Some(levels_from_dims(&[1, 1])),
        )
        .unwrap_err();
        assert!(matches!(err, ModError::GradingViolation { .. }));
    }

    #[test]
    fn level_above_p_minus_one_rejected() {
        let rp = pair(3, 1, 1, 1);
        let f = rp.field();
        let j = Matrix::from_fn(f, 4, 4, |i, k| u64::from(i == k + 1));
        assert_eq!(
            HiggsModule::constant(rp.down(), &[j], 4, None).unwrap_err(),
            ModError::LevelTooHigh { level: 3, max: 2 }
        );
    }

    fn rank_two_flat(p: u64) -> FlatModule {
        let rp = pair(p, 1, 1, 1);
        let twist = RingMatrix::from_constant(rp.up(), &nilpotent_2x2(rp.field())).unwrap();
        FlatModule::with_twist(rp.up(), 2, &[twist]).unwrap()
    }

    #[test]
    fn leibniz_violation_rejected() {
        let rp = pair(3, 1, 1, 1);
        let bogus = SparseMatrix::identity(rp.field(), rp.up().dim());
        assert!(matches!(
            FlatModule::new(rp.up(), 1, vec![bogus]),
            Err(ModError::Leibniz { .. })
        ));
    }

    #[test]
    fn rank_two_residue_and_gr() {
        let h = rank_two_flat(5);
        let res = residue_stratum(&h, &StrataIndex::new(vec![0], 1).unwrap()).unwrap();
        assert_eq!(res.closed_point, nilpotent_2x2(h.field()));
        let zero = FlatModule::trivial(h.ring(), 2).unwrap();
        let r0 = residue_stratum(&zero, &StrataIndex::new(vec![0], 1).unwrap()).unwrap();
        assert!(r0.closed_point.is_zero() && r0.stratum.is_zero());
        assert_eq!(
            StrataIndex::new(vec![1], 1).unwrap_err(),
            ModError::NotLog(1)
        );

        let levels = expand_levels(&levels_from_dims(&[1, 1]), h.ring().dim());
        let fil = Filtration::from_levels(&h, &levels).unwrap();
        assert_eq!(fil.width(), 1);
        let gr = gr_filtration(&h, &fil).unwrap();
        let back = gr.graded.to_higgs(h.ring(), 2).unwrap();
        assert_eq!(back.fields()[0].constant_part(), nilpotent_2x2(h.field()));
        assert!(back.fields()[0].is_constant());

        let triv = GradedHiggs::new(&h, &Filtration::trivial(&h)).unwrap();
        assert!(triv.ops().iter().all(SparseMatrix::is_zero));
    }

    #[test]
    fn product_residue_is_composite() {
        let rp = pair(3, 2, 2, 1);
        let f = rp.field();
        let a = RingMatrix::from_constant(rp.up(), &nilpotent_2x2(f)).unwrap();
        let b = RingMatrix::from_constant(rp.up(), &nilpotent_2x2(f).scale(2)).unwrap();
        let h = FlatModule::with_twist(rp.up(), 2, &[a, b]).unwrap();
        let r = |v: Vec<usize>| {
            residue_stratum(&h, &StrataIndex::new(v, 2).unwrap())
                .unwrap()
                .closed_point
        };
        assert_eq!(r(vec![0, 1]), r(vec![0]).mul(&r(vec![1])).unwrap());
    }

    #[test]
    fn triangular_examples() {
        let f = FieldSpec::new(5).unwrap();
        let sup = Matrix::from_rows(f, &[vec![0, 1], vec![0, 0]]).unwrap();
        let diag = Matrix::from_rows(f, &[vec![1, 0], vec![0, 0]]).unwrap();
        let zero = Matrix::zeros(f, 3, 3);
        assert_eq!(
            special_triangular_check(&sup, &[1, 1], 1).unwrap().class,
            Triangularity::Special
        );
        let c = special_triangular_check(&diag, &[1, 1], 1).unwrap();
        assert_eq!(
            (c.class, c.rank, c.block_rank_sum),
            (Triangularity::Triangular, 1, 0)
        );
        for s in 0..3 {
            assert_eq!(
                special_triangular_check(&zero, &[1, 1, 1], s)
                    .unwrap()
                    .class,
                Triangularity::Special
            );
        }
        assert_eq!(
            special_triangular_check(&sup.transpose(), &[1, 1], 0)
                .unwrap()
                .class,
            Triangularity::Triangular
        );
        assert_eq!(
            special_triangular_check(&sup, &[1, 1], 0).unwrap().class,
            Triangularity::NotTriangular
        );
        assert!(matches!(
            special_triangular_check(&sup, &[1, 2], 0),
            Err(ModError::PartitionMismatch { .. })
        ));

        let ex = fil_image_exchange(&sup, &[1, 1], 1, 0).unwrap();
        assert!(ex.equal && ex.image_dim == 1);
        let ex = fil_image_exchange(&diag, &[1, 1], 1, 0).unwrap();
        assert_eq!((ex.equal, ex.image_dim, ex.intersection_dim), (false, 0, 1));
        assert!(fil_image_exchange(&zero, &[1, 1, 1], 1, 0).unwrap().equal);
    }

    #[test]
    fn exchange_holds_on_random_special_matrices() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for trial in 0..300 {
            let p = [3, 5, 7][trial % 3];
            let f = FieldSpec::new(p).unwrap();
            let l = rng.gen_range(1..=4);
            let partition: Vec<usize> = (0..=l).map(|_| rng.gen_range(0..=3)).collect();
            if partition.iter().sum::<usize>() == 0 {
                continue;
            }
            let s = rng.gen_range(0..=l);
            let m = random_special(f, &partition, s, &mut rng);
            assert_eq!(
                special_triangular_check(&m, &partition, s).unwrap().class,
                Triangularity::Special
            );
            for i in 0..=l {
                let ex = fil_image_exchange(&m, &partition, s, i).unwrap();
                assert!(ex.equal, "trial {trial} i {i}");
                assert!(exchange_brute_force(&m, &partition, s, i));
            }
        }
    }

    proptest! {
        #[test]
        fn random_higgs_complexes_square_to_zero(seed in any::<u64>()) {
            let rp = pair(3, 3, 2, 1);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let e = random_higgs(rp.down(), 3, 2, &mut rng).unwrap();
            prop_assert!(e.level() <= 2);
            // BasedComplex::new asserts d² = 0
            let c = higgs_complex(&e).unwrap();
            prop_assert_eq!(c.euler_characteristic(), 0);
        }

        #[test]
        fn intersection_submodules_are_monotone_submodules(seed in any::<u64>()) {
            let rp = pair(3, 2, 2, 2);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let e = random_higgs(rp.down(), 2, 1, &mut rng).unwrap();
            let weights = [vec![0, 0], vec![1, 0], vec![0, 1], vec![1, 1], vec![2, 1]];
            let subs: Vec<Subspace> = weights.iter().map(|w| intersection_submodule(&e, w).unwrap()).collect();
            for (a, wa) in weights.iter().enumerate() {
                for j in 0..2 {
                    prop_assert!(subs[a].image_under(e.mult(j)).unwrap().dim() <= subs[a].dim());
                    prop_assert!(subs[a].contains(&subs[a].image_under(e.mult(j)).unwrap()).unwrap());
                }
                for (b, wb) in weights.iter().enumerate() {
                    if wa.iter().zip(wb).all(|(x, y)| x <= y) {
                        prop_assert!(subs[a].contains(&subs[b]).unwrap());
                    }
                }
            }
        }
    }
}
