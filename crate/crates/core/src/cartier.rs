//! Inverse Cartier transform, the Frobenius push-forward complex and the
//! Čech-level chain map `φ(r, s)`.
//!
//! Upstairs module vectors use the downstairs layout: index
//! `k * ring_dim + monomial`. A lifting is recorded by its deviation
//! `c_i = h(F*ω'_i)` from the standard lifting `t_i ↦ t_i^p`, so that
//! `ζ(F*ω'_i) = ζ_std(F*ω'_i) + d c_i`, where `ζ_std(F*ω'_i)` is `ω_i` for log
//! coordinates and `t_i^{p-1} dt_i` for ordinary ones.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::complexes::{is_chain_map, BasedComplex, ComplexError};
use crate::fplin::{FieldSpec, LinAlgError, Matrix, SparseMatrix, SparseVec, Subspace};
use crate::modcx::{
    de_rham_complex, higgs_complex, intersection_submodule, intersection_subspaces, FlatModule,
    Forms, HiggsModule, LinearModule, ModError, RingMatrix,
};
use crate::trunc_ring::{RingElement, RingError, RingPair, Side};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CartierError {
    #[error(transparent)]
    Module(#[from] ModError),
    #[error(transparent)]
    Ring(#[from] RingError),
    #[error(transparent)]
    LinAlg(#[from] LinAlgError),
    #[error(transparent)]
    Complex(#[from] ComplexError),
    #[error("shape: {0}")]
    Shape(String),
    #[error("Higgs field of level {level} needs level < p = {p}")]
    LevelTooHigh { level: usize, p: u64 },
    #[error("chart 0 must carry the standard lifting")]
    ChartNotStandard,
    #[error("degree {degree} must stay below {bound}")]
    DegreeBound { degree: usize, bound: usize },
    #[error("coefficient factor {factor} vanishes mod {p}")]
    ZeroFactor { factor: u64, p: u64 },
    #[error("{which} is not closed under d in degree {degree}")]
    NotClosed { which: &'static str, degree: usize },
    #[error("{0} is not a chain map")]
    NotAChainMap(&'static str),
    #[error("regrouped push-forward differs from the de Rham complex at d_{0}")]
    Regrouping(usize),
    #[error("the two intersection constructions disagree in degree {0}")]
    IntersectionRoutes(usize),
    #[error("EQ_int + EN_int misses part of EB_int in degree {0}")]
    SplitFailure(usize),
    #[error("weight bookkeeping fails in degree {degree} from {from:?} to {to:?}: {reason}")]
    Weight {
        degree: usize,
        from: Box<EbTag>,
        to: Box<EbTag>,
        reason: String,
    },
    #[error("total differential squares to nonzero in degree {degree}, column {column}")]
    NotAComplex { degree: usize, column: usize },
}

pub type Result<T> = std::result::Result<T, CartierError>;

/// The downstairs/upstairs pair matching a Higgs module's ring.
pub fn ring_pair(e: &HiggsModule) -> Result<RingPair> {
    let ring = e.ring();
    if ring.side() != Side::Down {
        return Err(CartierError::Shape(
            "Higgs module must live over the downstairs ring".into(),
        ));
    }
    Ok(RingPair::new(
        ring.field(),
        ring.n(),
        ring.r(),
        ring.trunc(),
    )?)
}

// ── liftings ───────────────────────────────────────────────────────────────

/// A Frobenius lifting given by its deviation `c_i` from the standard one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LiftingDatum {
    deviation: Vec<RingElement>,
}

impl LiftingDatum {
    pub fn standard(pair: &RingPair) -> Self {
        LiftingDatum {
            deviation: vec![RingElement::zero(pair.up()); pair.n()],
        }
    }

    pub fn new(pair: &RingPair, deviation: Vec<RingElement>) -> Result<Self> {
        if deviation.len() != pair.n() {
            return Err(CartierError::Shape(format!(
                "{} deviations for n = {}",
                deviation.len(),
                pair.n()
            )));
        }
        if deviation.iter().any(|c| **c.ring() != **pair.up()) {
            return Err(RingError::RingMismatch.into());
        }
        Ok(LiftingDatum { deviation })
    }

    pub fn deviation(&self) -> &[RingElement] {
        &self.deviation
    }

    pub fn is_standard(&self) -> bool {
        self.deviation.iter().all(RingElement::is_zero)
    }

    /// `z[i][k]` is the coefficient of `ω_k` in `ζ(F*ω'_i)`.
    pub fn zeta(&self, pair: &RingPair) -> Result<Vec<Vec<RingElement>>> {
        let (n, up) = (pair.n(), pair.up());
        let p = pair.p() as u32;
        let mut z = Vec::with_capacity(n);
        for i in 0..n {
            let mut row = Vec::with_capacity(n);
            for k in 0..n {
                let mut c = self.deviation[i].derive(k)?;
                if i == k {
                    let base = if up.is_log(i) {
                        RingElement::one(up)
                    } else {
                        let mut e = vec![0; n];
                        e[i] = p - 1;
                        RingElement::monomial(up, &e, 1)
                    };
                    c = c.add(&base)?;
                }
                row.push(c);
            }
            z.push(row);
        }
        Ok(z)
    }
}

/// `F(Θ_i)`: the Higgs components with entries pushed through Frobenius.
pub fn frobenius_fields(e: &HiggsModule, pair: &RingPair) -> Result<Vec<RingMatrix>> {
    e.fields()
        .iter()
        .map(|t| Ok(t.map(pair.up(), |x| pair.frobenius(x))?))
        .collect()
}

fn times(m: &RingMatrix, c: &RingElement) -> Result<RingMatrix> {
    Ok(m.map(m.ring(), |x| x.mul(c))?)
}

/// `H = A ⊗_F E` with `D_k = d_k + Σ_i ζ_{ik} F(Θ_i)`.
pub fn inverse_cartier(e: &HiggsModule, lift: &LiftingDatum) -> Result<FlatModule> {
    let pair = ring_pair(e)?;
    if e.level() as u64 >= pair.p() {
        return Err(CartierError::LevelTooHigh {
            level: e.level(),
            p: pair.p(),
        });
    }
    let lift = LiftingDatum::new(&pair, lift.deviation.clone())?;
    let (n, rank, up) = (pair.n(), e.rank(), pair.up());
    let ftheta = frobenius_fields(e, &pair)?;
    let z = lift.zeta(&pair)?;
    let mut twists = Vec::with_capacity(n);
    for k in 0..n {
        let mut t = RingMatrix::zero(up, rank);
        for (i, ft) in ftheta.iter().enumerate() {
            if !z[i][k].is_zero() && !ft.is_zero() {
                t = t.add(&times(ft, &z[i][k])?)?;
            }
        }
        twists.push(t);
    }
    Ok(FlatModule::with_twist(up, rank, &twists)?)
}

// ── the push-forward complex ───────────────────────────────────────────────

/// Basis tag `t^low · u^b e_k ⊗ ω_J` of the push-forward complex; `down` is
/// the downstairs module index of `u^b e_k`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EbTag {
    pub form: Vec<usize>,
    pub low: Vec<u32>,
    pub down: usize,
}

/// `F_* Ω^•(H)` over the downstairs ring, basis `t^i ω_J ⊗ E` with `0 ≤ i_k < p`.
#[derive(Clone, Debug)]
pub struct PushforwardComplex {
    complex: BasedComplex,
    forms: Forms,
    p: u32,
    dim_e: usize,
    regroup: Vec<SparseMatrix>,
}

impl PushforwardComplex {
    pub fn complex(&self) -> &BasedComplex {
        &self.complex
    }

    /// `EB_m → Ω^m(H)` sending `t^i ⊗ u^b e_k` to `t^{i + p b} e_k`.
    pub fn regrouping(&self) -> &[SparseMatrix] {
        &self.regroup
    }

    pub fn dim_e(&self) -> usize {
        self.dim_e
    }

    fn lows(&self) -> usize {
        (self.p as usize).pow(self.forms.n() as u32)
    }

    pub fn index(&self, form: &[usize], low: &[u32], down: usize) -> Option<usize> {
        let j = self.forms.index(form)?;
        let lin = encode_low(low, self.p);
        Some((j * self.lows() + lin) * self.dim_e + down)
    }

    pub fn tag(&self, m: usize, idx: usize) -> EbTag {
        let block = self.lows() * self.dim_e;
        let (j, rest) = (idx / block, idx % block);
        EbTag {
            form: self.forms.form(m, j).to_vec(),
            low: decode_low(rest / self.dim_e, self.forms.n(), self.p),
            down: rest % self.dim_e,
        }
    }

    /// `ε_k = 1` iff `dlog t_k` occurs in the form and `t_k` has exponent 0.
    pub fn weight(&self, tag: &EbTag) -> Vec<u32> {
        (0..self.forms.r())
            .map(|k| u32::from(tag.form.contains(&k) && tag.low[k] == 0))
            .collect()
    }
}

fn encode_low(low: &[u32], p: u32) -> usize {
    low.iter().fold(0, |acc, &x| acc * p as usize + x as usize)
}

fn decode_low(mut lin: usize, n: usize, p: u32) -> Vec<u32> {
    let mut out = vec![0; n];
    for k in (0..n).rev() {
        out[k] = (lin % p as usize) as u32;
        lin /= p as usize;
    }
    out
}

/// Builds `EB_•` from the downstairs data alone and checks it against
/// `deRham(inverse_cartier(e, standard))` through the exponent regrouping.
pub fn pushforward_complex(e: &HiggsModule) -> Result<PushforwardComplex> {
    let pair = ring_pair(e)?;
    let (f, n, r) = (pair.field(), pair.n(), pair.r());
    let p = pair.p() as u32;
    let forms = Forms::new(n, r);
    let de = e.dim();
    let lows = (p as usize).pow(n as u32);
    let block = lows * de;
    let dims: Vec<usize> = (0..=n).map(|m| forms.count(m) * block).collect();
    let scaled: Vec<SparseMatrix> = (0..n)
        .map(|k| Ok(e.mult(k).compose(e.op(k))?))
        .collect::<Result<_>>()?;
    let mut diffs = Vec::with_capacity(n);
    for m in 0..n {
        let mut trip = Vec::new();
        for (jidx, form) in forms.degree(m).iter().enumerate() {
            for k in 0..n {
                let Some((neg, target)) = Forms::wedge_left(k, form) else {
                    continue;
                };
                let tidx = forms.index(&target).expect("wedge basis");
                let sign = |v: u64| if neg { f.neg(v) } else { v };
                for lin in 0..lows {
                    let low = decode_low(lin, n, p);
                    let j = low[k];
                    let mut to = low.clone();
                    let (op, scalar) = if e.ring().is_log(k) {
                        (e.op(k), j as u64)
                    } else if j >= 1 {
                        to[k] -= 1;
                        (&scaled[k], j as u64)
                    } else {
                        to[k] = p - 1;
                        (e.op(k), 0)
                    };
                    let col0 = jidx * block + lin * de;
                    let row0 = tidx * block + encode_low(&to, p) * de;
                    for v in 0..de {
                        if scalar != 0 {
                            trip.push((row0 + v, col0 + v, sign(scalar)));
                        }
                        for &(row, val) in op.column_entries(v) {
                            trip.push((row0 + row, col0 + v, sign(val)));
                        }
                    }
                }
            }
        }
        diffs.push(SparseMatrix::from_triplets(f, dims[m + 1], dims[m], trip));
    }
    let complex = BasedComplex::new(f, dims.clone(), diffs)?;

    let h = inverse_cartier(e, &LiftingDatum::standard(&pair))?;
    let dr = de_rham_complex(&h)?;
    let (down, up) = (pair.down(), pair.up());
    let (d_down, d_up) = (down.dim(), up.dim());
    let mut regroup = Vec::with_capacity(n + 1);
    for (m, &dim) in dims.iter().enumerate() {
        let mut trip = Vec::with_capacity(dim);
        for jidx in 0..forms.count(m) {
            for lin in 0..lows {
                let low = decode_low(lin, n, p);
                for v in 0..de {
                    let (k, b) = (v / d_down, v % d_down);
                    let exps: Vec<u32> = low
                        .iter()
                        .zip(down.exponents(b))
                        .map(|(&i, &x)| i + p * x)
                        .collect();
                    let mono = up.index_of(&exps).expect("i + p b < pM");
                    let row = jidx * e.rank() * d_up + k * d_up + mono;
                    trip.push((row, jidx * block + lin * de + v, 1));
                }
            }
        }
        regroup.push(SparseMatrix::from_triplets(f, dim, dim, trip));
    }
    for m in 0..n {
        let lhs = regroup[m + 1].compose(complex.diff(m))?;
        let rhs = dr.diff(m).compose(&regroup[m])?;
        if lhs != rhs {
            return Err(CartierError::Regrouping(m));
        }
    }
    Ok(PushforwardComplex {
        complex,
        forms,
        p,
        dim_e: de,
        regroup,
    })
}

// ── the Cartier map and the EQ/EN splitting ────────────────────────────────

/// `φ̃`, the splitting `EB = EQ ⊕ EN` and its intersection variant.
#[derive(Clone, Debug)]
pub struct CartierSplit {
    pub pushforward: PushforwardComplex,
    /// `φ̃_m : E ⊗ ω^m → EB_m`.
    pub phi_tilde: Vec<SparseMatrix>,
    pub eq: Vec<Subspace>,
    pub en: Vec<Subspace>,
    pub eq_complex: BasedComplex,
    pub en_complex: BasedComplex,
    pub eb_int: Vec<Subspace>,
    pub eq_int: Vec<Subspace>,
    pub en_int: Vec<Subspace>,
    pub eq_int_complex: BasedComplex,
    pub en_int_complex: BasedComplex,
}

/// Exponent vector `i(J)`: `p - 1` on ordinary coordinates of `J`, else 0.
pub fn cartier_exponents(form: &[usize], n: usize, r: usize, p: u32) -> Vec<u32> {
    (0..n)
        .map(|k| {
            if k >= r && form.contains(&k) {
                p - 1
            } else {
                0
            }
        })
        .collect()
}

fn restrict_named(c: &BasedComplex, sub: &[Subspace], which: &'static str) -> Result<BasedComplex> {
    c.restrict(sub).map_err(|err| match err {
        ComplexError::NotClosed { degree, .. } => CartierError::NotClosed { which, degree },
        other => other.into(),
    })
}

pub fn cartier_map(e: &HiggsModule) -> Result<CartierSplit> {
    let eb = pushforward_complex(e)?;
    let pair = ring_pair(e)?;
    let (f, n, r) = (pair.field(), pair.n(), pair.r());
    let p = pair.p() as u32;
    let de = e.dim();
    let higgs = higgs_complex(e)?;
    let forms = Forms::new(n, r);

    let mut phi_tilde = Vec::with_capacity(n + 1);
    let mut eq = Vec::with_capacity(n + 1);
    let mut en = Vec::with_capacity(n + 1);
    for m in 0..=n {
        let dim = eb.complex().dim(m);
        let mut trip = Vec::new();
        let mut hit = vec![false; dim];
        for (jidx, form) in forms.degree(m).iter().enumerate() {
            let low = cartier_exponents(form, n, r, p);
            for v in 0..de {
                let idx = eb.index(form, &low, v).expect("form in range");
                trip.push((idx, jidx * de + v, 1));
                hit[idx] = true;
            }
        }
        phi_tilde.push(SparseMatrix::from_triplets(f, dim, higgs.dim(m), trip));
        eq.push(Subspace::coordinate(f, dim, (0..dim).filter(|&i| hit[i])));
        en.push(Subspace::coordinate(f, dim, (0..dim).filter(|&i| !hit[i])));
    }
    if !is_chain_map(&phi_tilde, &higgs, eb.complex())? {
        return Err(CartierError::NotAChainMap("the Cartier map"));
    }
    for m in 0..=n {
        if phi_tilde[m].image() != eq[m] || phi_tilde[m].rank() != higgs.dim(m) {
            return Err(CartierError::NotAChainMap("the Cartier map onto EQ"));
        }
    }
    let eq_complex = restrict_named(eb.complex(), &eq, "EQ")?;
    let en_complex = restrict_named(eb.complex(), &en, "EN")?;

    // Upstairs route: intersection subcomplex of the de Rham side, pulled back.
    let h = inverse_cartier(e, &LiftingDatum::standard(&pair))?;
    let up_int = intersection_subspaces(&h)?;
    // Downstairs route: ⊕ E_{w(β)} ⊗ β over the tags β.
    let mut cache: HashMap<Vec<u32>, Subspace> = HashMap::new();
    let mut eb_int = Vec::with_capacity(n + 1);
    let lows = eb.lows();
    for m in 0..=n {
        let dim = eb.complex().dim(m);
        let pulled = up_int[m].image_under(&eb.regroup[m].transpose())?;
        let mut gens = Vec::new();
        for jidx in 0..forms.count(m) {
            for lin in 0..lows {
                let offset = (jidx * lows + lin) * de;
                let w = eb.weight(&eb.tag(m, offset));
                if !cache.contains_key(&w) {
                    cache.insert(w.clone(), intersection_submodule(e, &w)?);
                }
                gens.extend(
                    cache[&w]
                        .basis()
                        .iter()
                        .map(|v| v.remap(f, |i| Some(offset + i))),
                );
            }
        }
        let direct = Subspace::span(f, dim, gens);
        if direct != pulled {
            return Err(CartierError::IntersectionRoutes(m));
        }
        eb_int.push(direct);
    }
    let higgs_int = intersection_subspaces(e)?;
    let mut eq_int = Vec::with_capacity(n + 1);
    let mut en_int = Vec::with_capacity(n + 1);
    for m in 0..=n {
        let q = eq[m].intersect(&eb_int[m])?;
        let nn = en[m].intersect(&eb_int[m])?;
        if q.dim() + nn.dim() != eb_int[m].dim() {
            return Err(CartierError::SplitFailure(m));
        }
        if higgs_int[m].image_under(&phi_tilde[m])? != q {
            return Err(CartierError::IntersectionRoutes(m));
        }
        eq_int.push(q);
        en_int.push(nn);
    }
    let eq_int_complex = restrict_named(eb.complex(), &eq_int, "EQ_int")?;
    let en_int_complex = restrict_named(eb.complex(), &en_int, "EN_int")?;
    Ok(CartierSplit {
        pushforward: eb,
        phi_tilde,
        eq,
        en,
        eq_complex,
        en_complex,
        eb_int,
        eq_int,
        en_int,
        eq_int_complex,
        en_int_complex,
    })
}

// ── weight bookkeeping ─────────────────────────────────────────────────────

/// Counts of classified `d_θ` blocks between basis tags.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightReport {
    /// `c·id + nilpotent` with `c ≠ 0`, equal weights.
    pub unit_equal: usize,
    /// Nilpotent along a log direction, weight raised by that unit vector.
    pub nilpotent_raised: usize,
    /// Nilpotent along an ordinary direction (`j = 0`), weight unchanged.
    pub nilpotent_ordinary: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BlockClass {
    Nilpotent,
    Unit,
    Other,
}

fn is_nilpotent(m: &Matrix) -> bool {
    let mut acc = m.clone();
    for _ in 0..m.rows() {
        if acc.is_zero() {
            return true;
        }
        acc = acc.mul(m).expect("square");
    }
    acc.is_zero()
}

fn classify(block: &Matrix) -> BlockClass {
    if is_nilpotent(block) {
        return BlockClass::Nilpotent;
    }
    let f = block.field();
    let id = Matrix::identity(f, block.rows());
    for c in 1..f.p() {
        if is_nilpotent(&block.sub(&id.scale(c)).expect("square")) {
            return BlockClass::Unit;
        }
    }
    BlockClass::Other
}

/// Classifies every nonzero tag-to-tag block of `d_θ` and checks the weight rule.
pub fn weight_bookkeeping(eb: &PushforwardComplex) -> Result<WeightReport> {
    let de = eb.dim_e;
    let top = eb.complex().top();
    let mut report = WeightReport::default();
    let mut cache: HashMap<Vec<u64>, BlockClass> = HashMap::new();
    for m in 0..top {
        let d = eb.complex().diff(m);
        let f = d.field();
        let mut blocks: HashMap<(usize, usize), Matrix> = HashMap::new();
        for col in 0..d.cols() {
            for &(row, v) in d.column_entries(col) {
                blocks
                    .entry((col / de, row / de))
                    .or_insert_with(|| Matrix::zeros(f, de, de))
                    .set(row % de, col % de, v);
            }
        }
        let mut keys: Vec<_> = blocks.keys().copied().collect();
        keys.sort_unstable();
        for key in keys {
            let block = &blocks[&key];
            let class = *cache
                .entry(block.data().to_vec())
                .or_insert_with(|| classify(block));
            let from = eb.tag(m, key.0 * de);
            let to = eb.tag(m + 1, key.1 * de);
            let (wf, wt) = (eb.weight(&from), eb.weight(&to));
            let k = *to
                .form
                .iter()
                .find(|k| !from.form.contains(k))
                .expect("d raises the form degree");
            let fail = |reason: &str| CartierError::Weight {
                degree: m,
                from: Box::new(from.clone()),
                to: Box::new(to.clone()),
                reason: reason.into(),
            };
            match class {
                BlockClass::Unit if wf == wt => report.unit_equal += 1,
                BlockClass::Unit => return Err(fail("unit entry changes the weight")),
                BlockClass::Nilpotent if k < wf.len() => {
                    let mut raised = wf.clone();
                    raised[k] += 1;
                    if raised != wt {
                        return Err(fail("nilpotent entry must raise the weight by e_k"));
                    }
                    report.nilpotent_raised += 1;
                }
                BlockClass::Nilpotent if wf == wt => report.nilpotent_ordinary += 1,
                BlockClass::Nilpotent => return Err(fail("ordinary direction changes the weight")),
                BlockClass::Other => return Err(fail("entry is neither unit nor nilpotent")),
            }
        }
    }
    Ok(report)
}

// ── coefficients ───────────────────────────────────────────────────────────

/// Reading of the inner product bound in [`coefficient_notation`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProductBounds {
    /// `l = 0..=s_{k-1}`.
    #[default]
    Inclusive,
    /// `l = 0..s_{k-1}`.
    Exclusive,
}

fn check_shape(jbar: &[u32], pvec: &[u32]) -> Result<()> {
    if jbar.is_empty() || pvec.len() != jbar.len() + 1 {
        return Err(CartierError::Shape(format!(
            "need r >= 1 and r + 1 parts, got r = {} with {} parts",
            jbar.len(),
            pvec.len()
        )));
    }
    Ok(())
}

fn invert_factor(f: FieldSpec, factor: u64) -> Result<u64> {
    f.inv(factor % f.p())
        .map_err(|_| CartierError::ZeroFactor { factor, p: f.p() })
}

/// `a'(j̄, p̲) = s_0!⋯s_{r-1}! / ∏_{i=1}^r ∏_{j=0}^{s_{i-1}} (j + Σ_{l≥i} j^l + Σ_{l≥i} s_l)`,
/// zero when `j^r + s_r = 0` or `Σ j + Σ s ≥ p`.
pub fn coefficient_a(f: FieldSpec, jbar: &[u32], pvec: &[u32]) -> Result<u64> {
    check_shape(jbar, pvec)?;
    let r = jbar.len();
    let total: u64 = jbar.iter().chain(pvec).map(|&x| x as u64).sum();
    if jbar[r - 1] + pvec[r] == 0 || total >= f.p() {
        return Ok(0);
    }
    let mut num = 1;
    for &s in &pvec[..r] {
        num = f.mul(num, f.factorial(s as u64));
    }
    for i in 1..=r {
        let tail: u64 = (i..=r).map(|l| jbar[l - 1] as u64 + pvec[l] as u64).sum();
        for j in 0..=pvec[i - 1] as u64 {
            num = f.mul(num, invert_factor(f, j + tail)?);
        }
    }
    Ok(num)
}

/// `a(j̄, p̲) = (r+s)! / (s_r! ∏_{k=1}^r ∏_l (Σ_{i≥k} j^i + Σ_{i≥k} s_i + l − k + r + 1))`
/// for `|j̄| + r + s < p`, with `l` ranging as `bounds` says.
pub fn coefficient_notation(
    f: FieldSpec,
    jbar: &[u32],
    pvec: &[u32],
    bounds: ProductBounds,
) -> Result<u64> {
    check_shape(jbar, pvec)?;
    let r = jbar.len();
    let s: u64 = pvec.iter().map(|&x| x as u64).sum();
    let total = jbar.iter().map(|&x| x as u64).sum::<u64>() + r as u64 + s;
    if total >= f.p() {
        return Err(CartierError::DegreeBound {
            degree: total as usize,
            bound: f.p() as usize,
        });
    }
    let mut val = f.mul(
        f.factorial(r as u64 + s),
        invert_factor(f, f.factorial(pvec[r] as u64))?,
    );
    for k in 1..=r {
        let tail: u64 = (k..=r).map(|i| jbar[i - 1] as u64 + pvec[i] as u64).sum();
        let top = match bounds {
            ProductBounds::Inclusive => pvec[k - 1] as u64 + 1,
            ProductBounds::Exclusive => pvec[k - 1] as u64,
        };
        for l in 0..top {
            val = f.mul(val, invert_factor(f, tail + l + (r - k) as u64 + 1)?);
        }
    }
    Ok(val)
}

/// A point where `a · s_0!⋯s_r! ≠ (r+s)! · a'(j̄ + 1̄, p̲)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoefficientMismatch {
    pub jbar: Vec<u32>,
    pub pvec: Vec<u32>,
    pub lhs: u64,
    pub rhs: u64,
}

/// Compares both coefficient formulas on `1 ≤ r ≤ max_r`, `|j̄| + r + s < p`.
pub fn coefficient_consistency(
    f: FieldSpec,
    max_r: usize,
    bounds: ProductBounds,
) -> Result<Vec<CoefficientMismatch>> {
    let p = f.p() as usize;
    let mut out = Vec::new();
    for r in 1..=max_r.min(p - 1) {
        for s in 0..p - r {
            for pvec in partitions(r, s) {
                for jbar in bounded_vectors(r, p - 1 - r - s) {
                    let a = coefficient_notation(f, &jbar, &pvec, bounds)?;
                    let facts = pvec
                        .iter()
                        .fold(1, |acc, &x| f.mul(acc, f.factorial(x as u64)));
                    let shifted: Vec<u32> = jbar.iter().map(|&x| x + 1).collect();
                    let lhs = f.mul(a, facts);
                    let rhs = f.mul(
                        f.factorial((r + s) as u64),
                        coefficient_a(f, &shifted, &pvec)?,
                    );
                    if lhs != rhs {
                        out.push(CoefficientMismatch {
                            jbar,
                            pvec: pvec.clone(),
                            lhs,
                            rhs,
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Compositions of `s` into `r + 1` nonnegative parts.
pub fn partitions(r: usize, s: usize) -> Vec<Vec<u32>> {
    fn go(parts: usize, rest: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if parts == 1 {
            cur.push(rest);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for x in 0..=rest {
            cur.push(x);
            go(parts - 1, rest - x, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(r + 1, s as u32, &mut Vec::new(), &mut out);
    out
}

/// All `v ∈ N^len` with `Σ v ≤ max_sum`.
fn bounded_vectors(len: usize, max_sum: usize) -> Vec<Vec<u32>> {
    fn go(len: usize, rest: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == len {
            out.push(cur.clone());
            return;
        }
        for x in 0..=rest {
            cur.push(x);
            go(len, rest - x, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(len, max_sum as u32, &mut Vec::new(), &mut out);
    out
}

// ── antisymmetrization ─────────────────────────────────────────────────────

/// `(negated, sorted)` for a sequence of distinct indices.
fn sort_sign(seq: &[usize]) -> Option<(bool, Vec<usize>)> {
    let mut v = seq.to_vec();
    let mut neg = false;
    for i in 0..v.len() {
        for j in 0..v.len() - 1 - i {
            match v[j].cmp(&v[j + 1]) {
                std::cmp::Ordering::Greater => {
                    v.swap(j, j + 1);
                    neg = !neg;
                }
                std::cmp::Ordering::Equal => return None,
                std::cmp::Ordering::Less => {}
            }
        }
    }
    if v.windows(2).any(|w| w[0] == w[1]) {
        return None;
    }
    Some((neg, v))
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

fn tensor_index(seq: &[usize], n: usize) -> usize {
    seq.iter().fold(0, |acc, &i| acc * n + i)
}

/// `δ_s : Λ^s → ⊗^s`, `ω_J ↦ (1/s!) Σ_σ sgn σ ω_{J_σ(1)} ⊗ ⋯`. Columns follow
/// [`Forms`]; rows are sequences in lexicographic order.
pub fn antisymmetrize(f: FieldSpec, n: usize, s: usize) -> Result<SparseMatrix> {
    if s as u64 >= f.p() {
        return Err(CartierError::DegreeBound {
            degree: s,
            bound: f.p() as usize,
        });
    }
    let forms = Forms::new(n, 0);
    let inv = f.inv(f.factorial(s as u64))?;
    let mut trip = Vec::new();
    let degree: &[Vec<usize>] = if s <= n { forms.degree(s) } else { &[] };
    for (jidx, form) in degree.iter().enumerate() {
        for seq in permutations(form) {
            let (neg, _) = sort_sign(&seq).expect("distinct");
            trip.push((
                tensor_index(&seq, n),
                jidx,
                if neg { f.neg(inv) } else { inv },
            ));
        }
    }
    Ok(SparseMatrix::from_triplets(
        f,
        n.pow(s as u32),
        forms.count(s),
        trip,
    ))
}

/// The projection `⊗^s → Λ^s`.
pub fn wedge_projection(f: FieldSpec, n: usize, s: usize) -> SparseMatrix {
    let forms = Forms::new(n, 0);
    let total = n.pow(s as u32);
    let mut trip = Vec::new();
    for idx in 0..total {
        let mut seq = vec![0; s];
        let mut rest = idx;
        for k in (0..s).rev() {
            seq[k] = rest % n;
            rest /= n;
        }
        if let Some((neg, sorted)) = sort_sign(&seq) {
            let j = forms.index(&sorted).expect("sorted form");
            trip.push((j, idx, if neg { f.neg(1) } else { 1 }));
        }
    }
    SparseMatrix::from_triplets(f, forms.count(s), total, trip)
}

// ── Čech data ──────────────────────────────────────────────────────────────

/// `q` liftings on one chart; chart 0 is standard and `h_{αβ} = c^β − c^α`.
#[derive(Clone, Debug)]
pub struct CechDatum {
    pair: RingPair,
    charts: Vec<LiftingDatum>,
}

impl CechDatum {
    pub fn new(pair: &RingPair, charts: Vec<LiftingDatum>) -> Result<Self> {
        if charts.is_empty() {
            return Err(CartierError::Shape("need at least one chart".into()));
        }
        if !charts[0].is_standard() {
            return Err(CartierError::ChartNotStandard);
        }
        let charts = charts
            .into_iter()
            .map(|c| LiftingDatum::new(pair, c.deviation))
            .collect::<Result<Vec<_>>>()?;
        let datum = CechDatum {
            pair: pair.clone(),
            charts,
        };
        let q = datum.len();
        for a in 0..q {
            for b in a + 1..q {
                for c in b + 1..q {
                    let (ab, bc, ac) = (datum.h(a, b), datum.h(b, c), datum.h(a, c));
                    for i in 0..pair.n() {
                        if ab[i].add(&bc[i])? != ac[i] {
                            return Err(CartierError::Shape(format!(
                                "cocycle fails on ({a}, {b}, {c})"
                            )));
                        }
                    }
                }
            }
        }
        Ok(datum)
    }

    pub fn single(pair: &RingPair) -> Self {
        CechDatum {
            pair: pair.clone(),
            charts: vec![LiftingDatum::standard(pair)],
        }
    }

    pub fn pair(&self) -> &RingPair {
        &self.pair
    }
    pub fn charts(&self) -> &[LiftingDatum] {
        &self.charts
    }
    pub fn len(&self) -> usize {
        self.charts.len()
    }
    pub fn is_empty(&self) -> bool {
        self.charts.is_empty()
    }

    /// `h_{αβ}(F*ω'_i)` for every coordinate.
    pub fn h(&self, a: usize, b: usize) -> Vec<RingElement> {
        self.charts[b]
            .deviation
            .iter()
            .zip(&self.charts[a].deviation)
            .map(|(x, y)| x.sub(y).expect("same ring"))
            .collect()
    }
}

/// Which expansion evaluates `φ(r, s)` for `r ≥ 1`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiRoute {
    /// `Σ a(j̄,p̲) (σ^{j̄}/j̄! ⊗ ζ_{ᾱ,p̲} h_ᾱ) F*(id ⊗ δ_{r+s})`.
    #[default]
    Key,
    /// `Σ a'(Σj̲,p̲) j̲_ī θ(ī,j̲) e_{i̲,ī} ⊗ h^{j̲}/j̲! ζ_{ᾱ,p̲}(i̲)`.
    Local,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhiOptions {
    pub route: PhiRoute,
    pub bounds: ProductBounds,
    /// Adds one to every key-route coefficient (negative control).
    pub tamper: bool,
}

/// Evaluation context for a family of liftings of one Higgs module.
struct Engine {
    field: FieldSpec,
    n: usize,
    p: u64,
    rank: usize,
    d_down: usize,
    d_up: usize,
    up_dim: usize,
    pair: RingPair,
    forms: Forms,
    higgs: BasedComplex,
    ftheta: Vec<SparseMatrix>,
    frob: Vec<usize>,
    h: Vec<Vec<Vec<RingElement>>>,
    zeta: Vec<Vec<Vec<RingElement>>>,
    sigma: Vec<Vec<SparseMatrix>>,
    glue: Vec<Vec<SparseMatrix>>,
    flats: Vec<FlatModule>,
    de_rham: Vec<BasedComplex>,
}

impl Engine {
    fn new(e: &HiggsModule, charts: &[LiftingDatum]) -> Result<Self> {
        let pair = ring_pair(e)?;
        let (f, n, rank) = (pair.field(), pair.n(), e.rank());
        let up = pair.up();
        let up_dim = up.dim();
        let d_up = rank * up_dim;
        let d_down = e.dim();
        let ftheta_rm = frobenius_fields(e, &pair)?;
        let ftheta: Vec<SparseMatrix> = ftheta_rm.iter().map(RingMatrix::to_operator).collect();
        let down_dim = pair.down().dim();
        let frob = (0..d_down)
            .map(|v| (v / down_dim) * up_dim + pair.frobenius_index(v % down_dim))
            .collect();
        let q = charts.len();
        let mut h = vec![vec![Vec::new(); q]; q];
        let mut sigma = vec![vec![SparseMatrix::zeros(f, d_up, d_up); q]; q];
        let mut glue = vec![vec![SparseMatrix::identity(f, d_up); q]; q];
        for a in 0..q {
            for b in 0..q {
                h[a][b] = charts[b]
                    .deviation
                    .iter()
                    .zip(&charts[a].deviation)
                    .map(|(x, y)| x.sub(y))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                let mut s = RingMatrix::zero(up, rank);
                for (i, ft) in ftheta_rm.iter().enumerate() {
                    if !h[a][b][i].is_zero() && !ft.is_zero() {
                        s = s.add(&times(ft, &h[a][b][i])?)?;
                    }
                }
                sigma[a][b] = s.to_operator();
                glue[a][b] = exp_truncated(&sigma[a][b])?;
            }
        }
        let zeta = charts
            .iter()
            .map(|c| c.zeta(&pair))
            .collect::<Result<Vec<_>>>()?;
        let flats = charts
            .iter()
            .map(|c| inverse_cartier(e, c))
            .collect::<Result<Vec<_>>>()?;
        let de_rham = flats
            .iter()
            .map(|m| Ok(de_rham_complex(m)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(Engine {
            field: f,
            n,
            p: f.p(),
            rank,
            d_down,
            d_up,
            up_dim,
            forms: Forms::new(n, pair.r()),
            higgs: higgs_complex(e)?,
            pair,
            ftheta,
            frob,
            h,
            zeta,
            sigma,
            glue,
            flats,
            de_rham,
        })
    }

    fn frob_vec(&self, x: &[u64]) -> Vec<u64> {
        let mut out = vec![0; self.d_up];
        for (v, &c) in x.iter().enumerate() {
            out[self.frob[v]] = c;
        }
        out
    }

    /// Ring element acting componentwise on an upstairs module vector.
    fn act(&self, c: &RingElement, x: &[u64]) -> Result<Vec<u64>> {
        let up = self.pair.up();
        let mut out = vec![0; self.d_up];
        for k in 0..self.rank {
            let slice = &x[k * self.up_dim..(k + 1) * self.up_dim];
            if slice.iter().all(|&v| v == 0) {
                continue;
            }
            let prod = RingElement::from_coeffs(up, slice.to_vec())?.mul(c)?;
            out[k * self.up_dim..(k + 1) * self.up_dim].copy_from_slice(prod.coeffs());
        }
        Ok(out)
    }

    /// Coefficients of `ones[0] ∧ ⋯ ∧ ones[s-1]` on the degree-`s` forms.
    fn wedge(&self, ones: &[&[RingElement]]) -> Result<Vec<RingElement>> {
        let up = self.pair.up();
        let mut state: HashMap<Vec<usize>, RingElement> = HashMap::new();
        state.insert(Vec::new(), RingElement::one(up));
        for one in ones.iter().rev() {
            let mut next: HashMap<Vec<usize>, RingElement> = HashMap::new();
            for (form, c) in &state {
                for (k, a) in one.iter().enumerate() {
                    if a.is_zero() {
                        continue;
                    }
                    let Some((neg, target)) = Forms::wedge_left(k, form) else {
                        continue;
                    };
                    let mut v = c.mul(a)?;
                    if neg {
                        v = v.neg();
                    }
                    match next.get_mut(&target) {
                        Some(acc) => *acc = acc.add(&v)?,
                        None => {
                            next.insert(target, v);
                        }
                    }
                }
            }
            state = next;
        }
        let s = ones.len();
        let mut out = vec![RingElement::zero(up); self.forms.count(s)];
        for (form, c) in state {
            out[self.forms.index(&form).expect("degree-s form")] = c;
        }
        Ok(out)
    }

    fn add_form_times(&self, out: &mut [u64], coeffs: &[RingElement], x: &[u64]) -> Result<()> {
        for (k, c) in coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let y = self.act(c, x)?;
            axpy(
                self.field,
                &mut out[k * self.d_up..(k + 1) * self.d_up],
                1,
                &y,
            );
        }
        Ok(())
    }

    /// Applies `op ⊗ id` to every form block of `x`.
    fn on_blocks(&self, op: &SparseMatrix, x: &[u64]) -> Vec<u64> {
        let mut out = Vec::with_capacity(x.len());
        for chunk in x.chunks(self.d_up) {
            out.extend(op.apply_dense(chunk));
        }
        out
    }

    fn phi_component(
        &self,
        r: usize,
        s: usize,
        tuple: &[usize],
        omega: &[u64],
        opts: PhiOptions,
    ) -> Result<Vec<u64>> {
        let d = r + s;
        if d as u64 >= self.p {
            return Err(CartierError::DegreeBound {
                degree: d,
                bound: self.p as usize,
            });
        }
        if tuple.len() != r + 1 {
            return Err(CartierError::Shape(format!(
                "tuple of length {} for r = {r}",
                tuple.len()
            )));
        }
        let mut out = vec![0; self.forms.count(s) * self.d_up];
        if d > self.n {
            return Ok(out);
        }
        if r == 0 {
            let zeta = &self.zeta[tuple[0]];
            for (jidx, form) in self.forms.degree(d).iter().enumerate() {
                let x = &omega[jidx * self.d_down..(jidx + 1) * self.d_down];
                if x.iter().all(|&v| v == 0) {
                    continue;
                }
                let ones: Vec<&[RingElement]> = form.iter().map(|&i| zeta[i].as_slice()).collect();
                let w = self.wedge(&ones)?;
                self.add_form_times(&mut out, &w, &self.frob_vec(x))?;
            }
            return Ok(out);
        }
        match opts.route {
            PhiRoute::Key => self.phi_key(r, s, tuple, omega, opts, &mut out)?,
            PhiRoute::Local => self.phi_local(r, s, tuple, omega, &mut out)?,
        }
        Ok(out)
    }

    fn chart_of(pvec: &[u32], tuple: &[usize], pos: usize) -> usize {
        let mut acc = 0;
        for (b, &len) in pvec.iter().enumerate() {
            acc += len as usize;
            if pos < acc {
                return tuple[b];
            }
        }
        unreachable!("position inside the partition")
    }

    fn phi_key(
        &self,
        r: usize,
        s: usize,
        tuple: &[usize],
        omega: &[u64],
        opts: PhiOptions,
        out: &mut [u64],
    ) -> Result<()> {
        let f = self.field;
        let d = r + s;
        let jbars = bounded_vectors(r, self.p as usize - 1 - d);
        let inv_df = f.inv(f.factorial(d as u64))?;
        let pvecs = partitions(r, s);
        let mut coeffs = Vec::with_capacity(pvecs.len());
        for pv in &pvecs {
            let mut row = Vec::with_capacity(jbars.len());
            for jb in &jbars {
                let a = coefficient_notation(f, jb, pv, opts.bounds)?;
                row.push(if opts.tamper { f.add(a, 1) } else { a });
            }
            coeffs.push(row);
        }
        for (jidx, form) in self.forms.degree(d).iter().enumerate() {
            let x = &omega[jidx * self.d_down..(jidx + 1) * self.d_down];
            if x.iter().all(|&v| v == 0) {
                continue;
            }
            let y = self.frob_vec(x);
            let svecs: Vec<Vec<u64>> = jbars
                .iter()
                .map(|jb| {
                    let mut v = y.clone();
                    for k in (0..r).rev() {
                        let sig = &self.sigma[tuple[k]][tuple[k + 1]];
                        for _ in 0..jb[k] {
                            v = sig.apply_dense(&v);
                        }
                        let inv = f.inv(f.factorial(jb[k] as u64)).expect("j < p");
                        v.iter_mut().for_each(|c| *c = f.mul(*c, inv));
                    }
                    v
                })
                .collect();
            let perms = permutations(form);
            for (pv, row) in pvecs.iter().zip(&coeffs) {
                let mut mvec = vec![0; self.d_up];
                for (sv, &c) in svecs.iter().zip(row) {
                    axpy(f, &mut mvec, c, sv);
                }
                if mvec.iter().all(|&v| v == 0) {
                    continue;
                }
                let up = self.pair.up();
                let mut total = vec![RingElement::zero(up); self.forms.count(s)];
                for seq in &perms {
                    let mut hprod = RingElement::one(up);
                    for k in 1..=r {
                        hprod = hprod.mul(&self.h[tuple[k - 1]][tuple[k]][seq[s + k - 1]])?;
                    }
                    if hprod.is_zero() {
                        continue;
                    }
                    let ones: Vec<&[RingElement]> = (0..s)
                        .map(|pos| self.zeta[Self::chart_of(pv, tuple, pos)][seq[pos]].as_slice())
                        .collect();
                    let w = self.wedge(&ones)?;
                    let (neg, _) = sort_sign(seq).expect("distinct");
                    let c = if neg { f.neg(inv_df) } else { inv_df };
                    let hc = hprod.scale(c);
                    for (acc, wk) in total.iter_mut().zip(&w) {
                        if !wk.is_zero() {
                            *acc = acc.add(&wk.mul(&hc)?)?;
                        }
                    }
                }
                self.add_form_times(out, &total, &mvec)?;
            }
        }
        Ok(())
    }

    fn phi_local(
        &self,
        r: usize,
        s: usize,
        tuple: &[usize],
        omega: &[u64],
        out: &mut [u64],
    ) -> Result<()> {
        let (f, n, p) = (self.field, self.n, self.p);
        let d = r + s;
        let up = self.pair.up();
        // hpow[k][q][j] = h_{α_k α_{k+1}}(q)^j / j!
        let mut hpow = Vec::with_capacity(r);
        for k in 0..r {
            let hk = &self.h[tuple[k]][tuple[k + 1]];
            let mut per_q = Vec::with_capacity(n);
            for hq in hk {
                let mut pows = vec![RingElement::one(up)];
                for j in 1..p {
                    let next = pows[j as usize - 1].mul(hq)?.scale(f.inv(j)?);
                    pows.push(next);
                }
                per_q.push(pows);
            }
            hpow.push(per_q);
        }
        let jls = bounded_vectors(r * n, p as usize - 1 - s);
        let ibars: Vec<Vec<usize>> = (0..n.pow(r as u32))
            .map(|mut idx| {
                let mut v = vec![0; r];
                for k in (0..r).rev() {
                    v[k] = idx % n;
                    idx /= n;
                }
                v
            })
            .collect();
        for pv in partitions(r, s) {
            for iseq in block_sequences(&pv, n) {
                let ones: Vec<&[RingElement]> = (0..s)
                    .map(|pos| self.zeta[Self::chart_of(&pv, tuple, pos)][iseq[pos]].as_slice())
                    .collect();
                let w = self.wedge(&ones)?;
                if w.iter().all(RingElement::is_zero) {
                    continue;
                }
                for ibar in &ibars {
                    let full: Vec<usize> = iseq.iter().chain(ibar).copied().collect();
                    let Some((neg, sorted)) = sort_sign(&full) else {
                        continue;
                    };
                    let lidx = self.forms.index(&sorted).expect("degree-d form");
                    debug_assert_eq!(sorted.len(), d);
                    let x = &omega[lidx * self.d_down..(lidx + 1) * self.d_down];
                    if x.iter().all(|&v| v == 0) {
                        continue;
                    }
                    let y = self.frob_vec(x);
                    let mut powered: HashMap<Vec<u32>, Vec<u64>> = HashMap::new();
                    for jl in &jls {
                        let sums: Vec<u32> = (0..r)
                            .map(|k| jl[k * n..(k + 1) * n].iter().sum())
                            .collect();
                        let a = coefficient_a(f, &sums, &pv)?;
                        if a == 0 {
                            continue;
                        }
                        let jprod =
                            (0..r).fold(1u64, |acc, k| f.mul(acc, jl[k * n + ibar[k]] as u64));
                        if jprod == 0 {
                            continue;
                        }
                        let exps: Vec<u32> = (0..n)
                            .map(|q| {
                                let tot: u32 = (0..r).map(|k| jl[k * n + q]).sum();
                                let used = ibar.iter().filter(|&&i| i == q).count() as u32;
                                tot - used
                            })
                            .collect();
                        if !powered.contains_key(&exps) {
                            let mut v = y.clone();
                            for (q, &e) in exps.iter().enumerate() {
                                for _ in 0..e {
                                    v = self.ftheta[q].apply_dense(&v);
                                }
                            }
                            powered.insert(exps.clone(), v);
                        }
                        let module = &powered[&exps];
                        if module.iter().all(|&v| v == 0) {
                            continue;
                        }
                        let mut ring = RingElement::one(up);
                        for k in 0..r {
                            for q in 0..n {
                                let j = jl[k * n + q] as usize;
                                if j > 0 {
                                    ring = ring.mul(&hpow[k][q][j])?;
                                }
                            }
                        }
                        if ring.is_zero() {
                            continue;
                        }
                        let mut c = f.mul(a, jprod);
                        if neg {
                            c = f.neg(c);
                        }
                        let ring = ring.scale(c);
                        let coeffs = w
                            .iter()
                            .map(|wk| wk.mul(&ring))
                            .collect::<std::result::Result<Vec<_>, _>>()?;
                        self.add_form_times(out, &coeffs, module)?;
                    }
                }
            }
        }
        Ok(())
    }
}

fn axpy(f: FieldSpec, out: &mut [u64], c: u64, x: &[u64]) {
    if c == 0 {
        return;
    }
    for (o, &v) in out.iter_mut().zip(x) {
        if v != 0 {
            *o = f.add(*o, f.mul(c, v));
        }
    }
}

/// `Σ_{i<p} σ^i / i!`.
fn exp_truncated(sigma: &SparseMatrix) -> Result<SparseMatrix> {
    let f = sigma.field();
    let mut acc = SparseMatrix::identity(f, sigma.rows());
    let mut term = acc.clone();
    for i in 1..f.p() {
        term = term.compose(sigma)?.scale(f.inv(i)?);
        if term.is_zero() {
            break;
        }
        acc = acc.add(&term)?;
    }
    Ok(acc)
}

/// Sequences of length `Σ pvec`, increasing inside each block, all distinct.
fn block_sequences(pvec: &[u32], n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &len in pvec {
        let mut next = Vec::new();
        for prefix in &out {
            for mask in 0u32..(1 << n) {
                if mask.count_ones() != len {
                    continue;
                }
                let block: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
                if block.iter().any(|i| prefix.contains(i)) {
                    continue;
                }
                let mut v: Vec<usize> = prefix.clone();
                v.extend(block);
                next.push(v);
            }
        }
        out = next;
    }
    out
}

/// Increasing chart tuples `α_0 < ⋯ < α_r` in lexicographic order.
pub fn chart_tuples(q: usize, r: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for mask in 0u64..(1 << q) {
        if mask.count_ones() as usize == r + 1 {
            out.push((0..q).filter(|&i| mask >> i & 1 == 1).collect());
        }
    }
    out.sort();
    out
}

/// `φ(r, s)` on `ω ∈ E ⊗ ω^{r+s}`: one component per chart tuple, each in
/// the `α_0`-trivialization of `Ω^s(H)`.
pub fn phi(
    e: &HiggsModule,
    cech: &CechDatum,
    r: usize,
    s: usize,
    omega: &SparseVec,
    opts: PhiOptions,
) -> Result<Vec<(Vec<usize>, SparseVec)>> {
    let eng = Engine::new(e, cech.charts())?;
    let len = eng.forms.count(r + s) * eng.d_down;
    let dense = omega.to_dense(len);
    chart_tuples(cech.len(), r)
        .into_iter()
        .map(|t| {
            let v = eng.phi_component(r, s, &t, &dense, opts)?;
            Ok((t, SparseVec::from_dense(&v)))
        })
        .collect()
}

// ── the Čech total complex ─────────────────────────────────────────────────

/// A summand `C^r(Ω^s)` component for the chart tuple `tuple`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CechBlock {
    pub r: usize,
    pub s: usize,
    pub tuple: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

/// Total complex of the Čech–de Rham bicomplex with its augmentation.
#[derive(Clone, Debug)]
pub struct CechTotal {
    complex: BasedComplex,
    blocks: Vec<Vec<CechBlock>>,
    augmentation: Vec<SparseMatrix>,
    de_rham: BasedComplex,
}

/// Per-degree comparison of the augmentation against the total complex.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentationRow {
    pub degree: usize,
    pub de_rham: usize,
    pub total: usize,
    /// Rank of the induced map on cohomology.
    pub induced_rank: usize,
}

impl CechTotal {
    pub fn complex(&self) -> &BasedComplex {
        &self.complex
    }
    pub fn blocks(&self, m: usize) -> &[CechBlock] {
        &self.blocks[m]
    }
    /// `ε_m : Ω^m(H_0) → Tot^m`, `x ↦ (G_{α0} x)_α`.
    pub fn augmentation(&self) -> &[SparseMatrix] {
        &self.augmentation
    }
    pub fn de_rham(&self) -> &BasedComplex {
        &self.de_rham
    }

    pub fn block_of(&self, m: usize, idx: usize) -> Option<&CechBlock> {
        self.blocks[m]
            .iter()
            .find(|b| (b.offset..b.offset + b.len).contains(&idx))
    }

    /// Cohomology comparison in degrees `< below`.
    pub fn augmentation_check(&self, below: usize) -> Result<Vec<AugmentationRow>> {
        let top = self.de_rham.top().min(self.complex.top());
        let mut rows = Vec::new();
        for m in 0..below.min(top + 1) {
            let z = self.de_rham.cocycles(m);
            let b = self.complex.coboundaries(m);
            let image = z.image_under(&self.augmentation[m])?;
            rows.push(AugmentationRow {
                degree: m,
                de_rham: self.de_rham.cohomology_dim(m)?,
                total: self.complex.cohomology_dim(m)?,
                induced_rank: image.sum(&b)?.dim() - b.dim(),
            });
        }
        Ok(rows)
    }
}

fn build_total(eng: &Engine, q: usize) -> Result<CechTotal> {
    let f = eng.field;
    let n = eng.n;
    let top = q - 1 + n;
    let mut blocks = Vec::with_capacity(top + 1);
    let mut dims = Vec::with_capacity(top + 1);
    for m in 0..=top {
        let mut list = Vec::new();
        let mut offset = 0;
        for r in 0..=m.min(q - 1) {
            let s = m - r;
            if s > n {
                continue;
            }
            let len = eng.forms.count(s) * eng.d_up;
            for tuple in chart_tuples(q, r) {
                list.push(CechBlock {
                    r,
                    s,
                    tuple,
                    offset,
                    len,
                });
                offset += len;
            }
        }
        dims.push(offset);
        blocks.push(list);
    }
    let find = |m: usize, r: usize, s: usize, tuple: &[usize]| -> usize {
        blocks[m]
            .iter()
            .find(|b| b.r == r && b.s == s && b.tuple == tuple)
            .expect("block present")
            .offset
    };
    let mut diffs = Vec::with_capacity(top);
    for m in 0..top {
        let mut trip = Vec::new();
        for blk in &blocks[m] {
            if blk.s < n {
                let target = find(m + 1, blk.r, blk.s + 1, &blk.tuple);
                let d = eng.de_rham[blk.tuple[0]].diff(blk.s);
                for col in 0..blk.len {
                    for &(row, v) in d.column_entries(col) {
                        trip.push((target + row, blk.offset + col, v));
                    }
                }
            }
            if blk.r + 1 < q {
                for big in chart_tuples(q, blk.r + 1) {
                    let Some(k) = (0..big.len()).find(|&k| {
                        let mut face = big.clone();
                        face.remove(k);
                        face == blk.tuple
                    }) else {
                        continue;
                    };
                    let target = find(m + 1, blk.r + 1, blk.s, &big);
                    let neg = (k + blk.s) % 2 == 1;
                    let sign = |v: u64| if neg { f.neg(v) } else { v };
                    for col in 0..blk.len {
                        let (form, w) = (col / eng.d_up, col % eng.d_up);
                        if k == 0 {
                            for &(row, v) in eng.glue[big[0]][big[1]].column_entries(w) {
                                trip.push((
                                    target + form * eng.d_up + row,
                                    blk.offset + col,
                                    sign(v),
                                ));
                            }
                        } else {
                            trip.push((target + col, blk.offset + col, sign(1)));
                        }
                    }
                }
            }
        }
        diffs.push(SparseMatrix::from_triplets(f, dims[m + 1], dims[m], trip));
    }
    for m in 0..top.saturating_sub(1) {
        let sq = diffs[m + 1].compose(&diffs[m])?;
        if let Some(column) = (0..sq.cols()).find(|&c| !sq.column_entries(c).is_empty()) {
            return Err(CartierError::NotAComplex { degree: m, column });
        }
    }
    let complex = BasedComplex::new(f, dims.clone(), diffs)?;
    let de_rham = eng.de_rham[0].clone();
    let mut augmentation = Vec::with_capacity(top + 1);
    for m in 0..=top {
        let src = if m <= n { de_rham.dim(m) } else { 0 };
        let mut trip = Vec::new();
        if m <= n {
            for blk in blocks[m].iter().filter(|b| b.r == 0) {
                let g = &eng.glue[blk.tuple[0]][0];
                for col in 0..src {
                    let (form, w) = (col / eng.d_up, col % eng.d_up);
                    for &(row, v) in g.column_entries(w) {
                        trip.push((blk.offset + form * eng.d_up + row, col, v));
                    }
                }
            }
        }
        augmentation.push(SparseMatrix::from_triplets(f, dims[m], src, trip));
    }
    for m in 0..n.min(top) {
        let lhs = complex.diff(m).compose(&augmentation[m])?;
        let rhs = augmentation[m + 1].compose(de_rham.diff(m))?;
        if lhs != rhs {
            return Err(CartierError::NotAChainMap("the augmentation"));
        }
    }
    Ok(CechTotal {
        complex,
        blocks,
        augmentation,
        de_rham,
    })
}

/// Total complex `D = ∇_{α_0} + (-1)^s δ` on `C^r(Ω^s)`, where the face
/// deleting `α_0` is re-expressed through `G_{α_0 α_1}`.
pub fn cech_total(e: &HiggsModule, cech: &CechDatum) -> Result<CechTotal> {
    let eng = Engine::new(e, cech.charts())?;
    build_total(&eng, cech.len())
}

// ── chain-map and homotopy checks ──────────────────────────────────────────

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefectWitness {
    pub degree: usize,
    /// Basis index of the input in `E ⊗ ω^degree`.
    pub input: usize,
    pub tuple: Vec<usize>,
    pub s: usize,
    /// Nonzero entries of `D φ_d(ω) − φ_{d+1}(θ ∧ ω)` inside that block.
    pub defect: Vec<(usize, u64)>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainMapReport {
    pub degrees: Vec<usize>,
    pub defects: Vec<DefectWitness>,
    /// `(degree, tuple, s)` where `φ(Ω_int)` leaves the intersection cochains.
    pub intersection_failures: Vec<(usize, Vec<usize>, usize)>,
}

impl ChainMapReport {
    pub fn is_chain_map(&self) -> bool {
        self.defects.is_empty()
    }
    pub fn preserves_intersection(&self) -> bool {
        self.intersection_failures.is_empty()
    }
}

fn phi_matrix(eng: &Engine, total: &CechTotal, d: usize, opts: PhiOptions) -> Result<SparseMatrix> {
    let f = eng.field;
    let src = if d <= eng.n { eng.higgs.dim(d) } else { 0 };
    let rows = if d <= total.complex.top() {
        total.complex.dim(d)
    } else {
        0
    };
    let mut cols = Vec::with_capacity(src);
    for c in 0..src {
        let mut omega = vec![0; src];
        omega[c] = 1;
        let mut entries = Vec::new();
        for blk in &total.blocks[d] {
            let v = eng.phi_component(blk.r, blk.s, &blk.tuple, &omega, opts)?;
            entries.extend(
                v.iter()
                    .enumerate()
                    .filter(|(_, &x)| x != 0)
                    .map(|(i, &x)| (blk.offset + i, x)),
            );
        }
        cols.push(SparseVec::from_entries(f, entries));
    }
    Ok(SparseMatrix::from_columns(f, rows, cols))
}

/// Checks `D φ_d = φ_{d+1} (θ ∧ ·)` for every basis input in degrees
/// `d < bound`, and that intersection inputs land in intersection cochains.
pub fn verify_chain_map(
    e: &HiggsModule,
    cech: &CechDatum,
    bound: usize,
    opts: PhiOptions,
) -> Result<ChainMapReport> {
    let p = e.ring().field().p() as usize;
    let limit = p - e.level().max(1);
    if bound > limit {
        return Err(CartierError::DegreeBound {
            degree: bound,
            bound: limit,
        });
    }
    let eng = Engine::new(e, cech.charts())?;
    let total = build_total(&eng, cech.len())?;
    let top = total.complex.top();
    let mut report = ChainMapReport::default();
    let mut phis = Vec::new();
    for d in 0..=bound.min(top) {
        phis.push(phi_matrix(&eng, &total, d, opts)?);
    }
    let f = eng.field;
    for d in 0..bound.min(top) {
        report.degrees.push(d);
        let lhs = total.complex.diff(d).compose(&phis[d])?;
        let rhs = if d < eng.n {
            phis[d + 1].compose(eng.higgs.diff(d))?
        } else {
            SparseMatrix::zeros(f, lhs.rows(), lhs.cols())
        };
        let diff = lhs.sub(&rhs)?;
        if let Some(input) = (0..diff.cols()).find(|&c| !diff.column_entries(c).is_empty()) {
            let entries = diff.column_entries(input);
            let blk = total.block_of(d + 1, entries[0].0).expect("row in a block");
            report.defects.push(DefectWitness {
                degree: d,
                input,
                tuple: blk.tuple.clone(),
                s: blk.s,
                defect: entries
                    .iter()
                    .filter(|(i, _)| (blk.offset..blk.offset + blk.len).contains(i))
                    .map(|&(i, v)| (i - blk.offset, v))
                    .collect(),
            });
        }
    }
    let higgs_int = intersection_subspaces(e)?;
    let chart_int = eng
        .flats
        .iter()
        .map(|m| Ok(intersection_subspaces(m)?))
        .collect::<Result<Vec<_>>>()?;
    for d in 0..bound.min(top).min(eng.n + 1) {
        for v in higgs_int[d].basis() {
            let img = phis[d].apply(v);
            for blk in &total.blocks[d] {
                let part = img.remap(f, |i| {
                    (blk.offset..blk.offset + blk.len)
                        .contains(&i)
                        .then(|| i - blk.offset)
                });
                let key = (d, blk.tuple.clone(), blk.s);
                if !chart_int[blk.tuple[0]][blk.s].contains_vec(&part)
                    && !report.intersection_failures.contains(&key)
                {
                    report.intersection_failures.push(key);
                }
            }
        }
    }
    Ok(report)
}

/// Residuals of `G_{αβ} φ̃_β − φ̃_α = (-1)^{s-1} ∇_α φ(1,s-1)_{αβ} + (-1)^s φ(1,s)_{αβ} θ`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HomotopyDefect {
    pub degree: usize,
    /// One residual in `Ω^s(H_α)` per basis vector of `E ⊗ ω^s`.
    pub residuals: Vec<SparseVec>,
}

impl HomotopyDefect {
    pub fn is_zero(&self) -> bool {
        self.residuals.iter().all(SparseVec::is_zero)
    }
}

pub fn homotopy_defect(
    e: &HiggsModule,
    lift_a: &LiftingDatum,
    lift_b: &LiftingDatum,
    s: usize,
    opts: PhiOptions,
) -> Result<HomotopyDefect> {
    let p = e.ring().field().p() as usize;
    let limit = p - e.level().max(1);
    if s + 1 > limit {
        return Err(CartierError::DegreeBound {
            degree: s + 1,
            bound: limit,
        });
    }
    let eng = Engine::new(e, &[lift_a.clone(), lift_b.clone()])?;
    if s > eng.n {
        return Err(CartierError::DegreeBound {
            degree: s,
            bound: eng.n + 1,
        });
    }
    let f = eng.field;
    let src = eng.higgs.dim(s);
    let pair = [0, 1];
    let mut residuals = Vec::with_capacity(src);
    for c in 0..src {
        let mut omega = vec![0; src];
        omega[c] = 1;
        let tb = eng.phi_component(0, s, &[1], &omega, opts)?;
        let ta = eng.phi_component(0, s, &[0], &omega, opts)?;
        let mut res = eng.on_blocks(&eng.glue[0][1], &tb);
        axpy(f, &mut res, f.neg(1), &ta);
        if s >= 1 {
            let lower = eng.phi_component(1, s - 1, &pair, &omega, opts)?;
            let nabla = eng.de_rham[0].diff(s - 1).apply_dense(&lower);
            let sign = if (s - 1) % 2 == 1 { 1 } else { f.neg(1) };
            axpy(f, &mut res, sign, &nabla);
        }
        if s < eng.n {
            let theta = eng.higgs.diff(s).apply_dense(&omega);
            let upper = eng.phi_component(1, s, &pair, &theta, opts)?;
            let sign = if s % 2 == 1 { 1 } else { f.neg(1) };
            axpy(f, &mut res, sign, &upper);
        }
        residuals.push(SparseVec::from_dense(&res));
    }
    Ok(HomotopyDefect {
        degree: s,
        residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modcx::random_higgs;
    use crate::trunc_ring::TruncRing;
    use rand::SeedableRng;
    use std::sync::Arc;

    fn field(p: u64) -> FieldSpec {
        FieldSpec::new(p).unwrap()
    }

    fn pair(p: u64, n: usize, r: usize, m: u32) -> RingPair {
        RingPair::new(field(p), n, r, m).unwrap()
    }

    fn rank_two(p: u64, n: usize, r: usize) -> (RingPair, HiggsModule) {
        let rp = pair(p, n, r, 1);
        let f = rp.field();
        let nil = Matrix::from_rows(f, &[vec![0, 0], vec![1, 0]]).unwrap();
        let e = HiggsModule::constant(rp.down(), &[nil], 2, Some(vec![1, 0])).unwrap();
        (rp, e)
    }

    fn var_lift(rp: &RingPair, coord: usize, power: u32) -> LiftingDatum {
        let mut dev = vec![RingElement::zero(rp.up()); rp.n()];
        dev[coord] = RingElement::var(rp.up(), coord).unwrap().pow(power);
        LiftingDatum::new(rp, dev).unwrap()
    }

    fn random_instance(p: u64, n: usize, r: usize, seed: u64) -> (RingPair, HiggsModule) {
        let rp = pair(p, n, r, 1);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let e = random_higgs(rp.down(), 2, 1, &mut rng).unwrap();
        (rp, e)
    }

    #[test]
    fn coefficient_examples() {
        let f = field(5);
        assert_eq!(coefficient_a(f, &[2], &[0, 0]).unwrap(), 3);
        assert_eq!(coefficient_a(f, &[1], &[0, 0]).unwrap(), 1);
        assert_eq!(coefficient_a(f, &[0], &[1, 0]).unwrap(), 0);
        assert_eq!(coefficient_a(f, &[3, 2], &[0, 0, 0]).unwrap(), 0);
        assert!(coefficient_notation(f, &[3], &[1, 0], ProductBounds::Inclusive).is_err());
    }

    #[test]
    fn coefficient_formulas_agree_inclusive() {
        for p in [5, 7, 11] {
            let f = field(p);
            let bad = coefficient_consistency(f, 3, ProductBounds::Inclusive).unwrap();
            assert!(bad.is_empty(), "p = {p}: {:?}", &bad[..bad.len().min(3)]);
            assert!(!coefficient_consistency(f, 2, ProductBounds::Exclusive)
                .unwrap()
                .is_empty());
        }
    }

    #[test]
    fn antisymmetrize_examples() {
        let f = field(5);
        assert_eq!(
            antisymmetrize(f, 3, 1).unwrap(),
            SparseMatrix::identity(f, 3)
        );
        let d2 = antisymmetrize(f, 2, 2).unwrap();
        let half = f.inv(2).unwrap();
        // ω_1∧ω_2 ↦ (ω_1⊗ω_2 − ω_2⊗ω_1)/2
        assert_eq!(d2.column(0).to_dense(4), vec![0, half, f.neg(half), 0]);
        for s in 0..=3 {
            let pr = wedge_projection(f, 3, s);
            let id = pr.compose(&antisymmetrize(f, 3, s).unwrap()).unwrap();
            assert_eq!(id, SparseMatrix::identity(f, Forms::new(3, 0).count(s)));
        }
        assert!(antisymmetrize(f, 6, 5).is_err());
    }

    #[test]
    fn inverse_cartier_zero_field_is_de_rham() {
        let rp = pair(5, 2, 1, 2);
        let e = HiggsModule::zero_field(rp.down(), 1).unwrap();
        let h = inverse_cartier(&e, &LiftingDatum::standard(&rp)).unwrap();
        let trivial = FlatModule::trivial(rp.up(), 1).unwrap();
        assert_eq!(h.ops(), trivial.ops());
    }

    #[test]
    fn inverse_cartier_rank_two_log() {
        let (rp, e) = rank_two(5, 1, 1);
        let h = inverse_cartier(&e, &LiftingDatum::standard(&rp)).unwrap();
        let nil = RingMatrix::from_constant(rp.up(), &e.fields()[0].constant_part()).unwrap();
        let expect = FlatModule::with_twist(rp.up(), 2, &[nil]).unwrap();
        assert_eq!(h.ops(), expect.ops());
    }

    #[test]
    fn inverse_cartier_ordinary_twist() {
        let (rp, e) = rank_two(5, 1, 0);
        let h = inverse_cartier(&e, &LiftingDatum::standard(&rp)).unwrap();
        let t4 = RingElement::monomial(rp.up(), &[4], 1);
        let nil = RingMatrix::from_constant(rp.up(), &e.fields()[0].constant_part()).unwrap();
        let expect = FlatModule::with_twist(rp.up(), 2, &[times(&nil, &t4).unwrap()]).unwrap();
        assert_eq!(h.ops(), expect.ops());
    }

    #[test]
    fn perturbed_lift_keeps_cohomology() {
        let (rp, e) = rank_two(5, 1, 1);
        let std =
            de_rham_complex(&inverse_cartier(&e, &LiftingDatum::standard(&rp)).unwrap()).unwrap();
        let pert = inverse_cartier(&e, &var_lift(&rp, 0, 1)).unwrap();
        assert_ne!(
            pert.ops(),
            inverse_cartier(&e, &LiftingDatum::standard(&rp))
                .unwrap()
                .ops()
        );
        assert_eq!(
            std.cohomology_dims(),
            de_rham_complex(&pert).unwrap().cohomology_dims()
        );
    }

    #[test]
    fn pushforward_differential_cases() {
        let (rp, e) = rank_two(5, 1, 1);
        let eb = pushforward_complex(&e).unwrap();
        let d = eb.complex().diff(0);
        // log, j = 0: e_0 ⊗ t^0 ↦ θ(e_0) ⊗ dlog t = e_1 ⊗ dlog t
        let col = eb.index(&[], &[0], 0).unwrap();
        let row = eb.index(&[0], &[0], 1).unwrap();
        assert_eq!(d.column_entries(col), &[(row, 1)]);
        // log, j = 2: (2 + θ)
        let col = eb.index(&[], &[2], 0).unwrap();
        let mut want = vec![
            (eb.index(&[0], &[2], 0).unwrap(), 2),
            (eb.index(&[0], &[2], 1).unwrap(), 1),
        ];
        want.sort_unstable();
        assert_eq!(d.column_entries(col), want.as_slice());

        let (_, e) = rank_two(5, 1, 0);
        let eb = pushforward_complex(&e).unwrap();
        let d = eb.complex().diff(0);
        // ordinary, j = 0: θ(e) ⊗ t^{p-1} dt
        let col = eb.index(&[], &[0], 0).unwrap();
        assert_eq!(
            d.column_entries(col),
            &[(eb.index(&[0], &[4], 1).unwrap(), 1)]
        );
        let _ = rp;

        let rp = pair(5, 1, 0, 1);
        let e = HiggsModule::zero_field(rp.down(), 1).unwrap();
        let eb = pushforward_complex(&e).unwrap();
        for j in 1..5u32 {
            let col = eb.index(&[], &[j], 0).unwrap();
            let row = eb.index(&[0], &[j - 1], 0).unwrap();
            assert_eq!(eb.complex().diff(0).column_entries(col), &[(row, j as u64)]);
        }
    }

    #[test]
    fn cartier_split_small_field_free() {
        let rp = pair(3, 1, 0, 1);
        let e = HiggsModule::zero_field(rp.down(), 1).unwrap();
        let split = cartier_map(&e).unwrap();
        assert_eq!(split.eq_complex.cohomology_dims(), vec![1, 1]);
        assert_eq!(higgs_complex(&e).unwrap().cohomology_dims(), vec![1, 1]);
        assert!(split.en_complex.is_acyclic());
        assert!(split.eq_complex.diffs().iter().all(SparseMatrix::is_zero));
        // φ̃(e ⊗ dt) = e ⊗ t^{p-1} dt
        assert_eq!(
            split.phi_tilde[1].column_entries(0),
            &[(split.pushforward.index(&[0], &[2], 0).unwrap(), 1)]
        );
        assert_eq!(split.phi_tilde[0].column_entries(0), &[(0, 1)]);
    }

    #[test]
    fn cartier_split_on_instances() {
        let mut cases = vec![rank_two(5, 1, 1), rank_two(5, 2, 1), rank_two(3, 2, 2)];
        for seed in 0..3 {
            cases.push(random_instance(5, 2, 1, seed));
        }
        for (_, e) in cases {
            let split = cartier_map(&e).unwrap();
            let higgs = higgs_complex(&e).unwrap();
            assert!(split.en_complex.is_acyclic());
            assert!(split.en_int_complex.is_acyclic());
            assert_eq!(split.eq_complex.cohomology_dims(), higgs.cohomology_dims());
            let int = crate::modcx::intersection_complex(&e).unwrap();
            assert_eq!(
                split.eq_int_complex.cohomology_dims(),
                int.cohomology_dims()
            );
            let report = weight_bookkeeping(&split.pushforward).unwrap();
            assert!(report.unit_equal > 0);
        }
    }

    #[test]
    fn weight_bookkeeping_counts_log_steps() {
        let (_, e) = rank_two(5, 1, 1);
        let eb = pushforward_complex(&e).unwrap();
        let report = weight_bookkeeping(&eb).unwrap();
        assert_eq!(report.nilpotent_raised, 1);
        assert_eq!(report.unit_equal, 4);
        assert_eq!(report.nilpotent_ordinary, 0);
    }

    fn two_charts(rp: &RingPair, lift: LiftingDatum) -> CechDatum {
        CechDatum::new(rp, vec![LiftingDatum::standard(rp), lift]).unwrap()
    }

    #[test]
    fn cech_datum_requires_standard_chart_zero() {
        let rp = pair(5, 1, 1, 1);
        let err = CechDatum::new(&rp, vec![var_lift(&rp, 0, 1)]).unwrap_err();
        assert_eq!(err, CartierError::ChartNotStandard);
        let c = CechDatum::new(
            &rp,
            vec![
                LiftingDatum::standard(&rp),
                var_lift(&rp, 0, 1),
                var_lift(&rp, 0, 2),
            ],
        )
        .unwrap();
        assert_eq!(c.h(1, 2)[0], c.h(0, 2)[0].sub(&c.h(0, 1)[0]).unwrap());
    }

    #[test]
    fn phi_vanishes_without_h() {
        let (rp, e) = rank_two(5, 2, 1);
        let cech = two_charts(&rp, LiftingDatum::standard(&rp));
        for (r, s) in [(1, 0), (1, 1)] {
            let dim = higgs_complex(&e).unwrap().dim(r + s);
            for c in 0..dim {
                for (_, v) in
                    phi(&e, &cech, r, s, &SparseVec::unit(c), PhiOptions::default()).unwrap()
                {
                    assert!(v.is_zero());
                }
            }
        }
    }

    #[test]
    fn phi_routes_agree() {
        let opts_local = PhiOptions {
            route: PhiRoute::Local,
            ..PhiOptions::default()
        };
        let (rp, e) = rank_two(7, 2, 1);
        let mut dev = vec![RingElement::var(rp.up(), 0).unwrap(); 2];
        dev[1] = RingElement::var(rp.up(), 1).unwrap().pow(2);
        let cech = CechDatum::new(
            &rp,
            vec![
                LiftingDatum::standard(&rp),
                var_lift(&rp, 0, 2),
                LiftingDatum::new(&rp, dev).unwrap(),
            ],
        )
        .unwrap();
        for (r, s) in [(1, 0), (1, 1), (2, 0), (1, 2), (2, 1)] {
            let dim = higgs_complex(&e).unwrap().dim(r + s);
            for c in 0..dim {
                let w = SparseVec::unit(c);
                let a = phi(&e, &cech, r, s, &w, PhiOptions::default()).unwrap();
                let b = phi(&e, &cech, r, s, &w, opts_local).unwrap();
                assert_eq!(a, b, "r = {r}, s = {s}, input {c}");
            }
        }
    }

    #[test]
    fn phi_zero_agrees_with_cartier_map() {
        let (rp, e) = rank_two(5, 2, 1);
        let split = cartier_map(&e).unwrap();
        let cech = CechDatum::single(&rp);
        for s in 0..=2 {
            for c in 0..higgs_complex(&e).unwrap().dim(s) {
                let w = SparseVec::unit(c);
                let got = &phi(&e, &cech, 0, s, &w, PhiOptions::default()).unwrap()[0].1;
                let via = split.pushforward.regrouping()[s].apply(&split.phi_tilde[s].apply(&w));
                assert_eq!(got, &via);
            }
        }
    }

    #[test]
    fn cech_total_single_chart_is_de_rham() {
        let (rp, e) = rank_two(5, 1, 1);
        let total = cech_total(&e, &CechDatum::single(&rp)).unwrap();
        assert_eq!(total.complex(), total.de_rham());
        for (m, a) in total.augmentation().iter().enumerate() {
            assert_eq!(
                a,
                &SparseMatrix::identity(a.field(), total.de_rham().dim(m))
            );
        }
    }

    #[test]
    fn cech_total_two_charts_matches_de_rham() {
        let (rp, e) = rank_two(5, 1, 1);
        for lift in [LiftingDatum::standard(&rp), var_lift(&rp, 0, 1)] {
            let total = cech_total(&e, &two_charts(&rp, lift)).unwrap();
            let dr = total.de_rham().cohomology_dims();
            let tot = total.complex().cohomology_dims();
            assert_eq!(&tot[..dr.len()], dr.as_slice());
            assert!(tot[dr.len()..].iter().all(|&x| x == 0));
            for row in total.augmentation_check(4).unwrap() {
                assert_eq!(row.induced_rank, row.de_rham);
                assert_eq!(row.total, row.de_rham);
            }
        }
    }

    #[test]
    fn chain_map_rank_two() {
        let (rp, e) = rank_two(5, 1, 1);
        let cech = two_charts(&rp, var_lift(&rp, 0, 1));
        let report = verify_chain_map(&e, &cech, 4, PhiOptions::default()).unwrap();
        assert!(report.is_chain_map(), "{:?}", report.defects);
        assert!(report.preserves_intersection());
        assert_eq!(report.degrees, vec![0, 1]);
        let local = PhiOptions {
            route: PhiRoute::Local,
            ..PhiOptions::default()
        };
        assert!(verify_chain_map(&e, &cech, 4, local)
            .unwrap()
            .is_chain_map());
    }

    #[test]
    fn chain_map_negative_controls() {
        let (rp, e) = rank_two(5, 1, 1);
        let cech = two_charts(&rp, var_lift(&rp, 0, 1));
        let tampered = PhiOptions {
            tamper: true,
            ..PhiOptions::default()
        };
        assert!(!verify_chain_map(&e, &cech, 4, tampered)
            .unwrap()
            .is_chain_map());
        let exclusive = PhiOptions {
            bounds: ProductBounds::Exclusive,
            ..PhiOptions::default()
        };
        assert!(!verify_chain_map(&e, &cech, 4, exclusive)
            .unwrap()
            .is_chain_map());
    }

    #[test]
    fn chain_map_two_dimensional_three_charts() {
        let (rp, e) = rank_two(7, 2, 1);
        let mut dev = vec![RingElement::var(rp.up(), 1).unwrap(); 2];
        dev[0] = RingElement::var(rp.up(), 0).unwrap().pow(2);
        let cech = CechDatum::new(
            &rp,
            vec![
                LiftingDatum::standard(&rp),
                var_lift(&rp, 1, 1),
                LiftingDatum::new(&rp, dev).unwrap(),
            ],
        )
        .unwrap();
        let report = verify_chain_map(&e, &cech, 4, PhiOptions::default()).unwrap();
        assert!(report.is_chain_map(), "{:?}", report.defects.first());
        assert!(report.preserves_intersection());
    }

    #[test]
    fn chain_map_field_free() {
        let rp = pair(5, 2, 1, 1);
        let e = HiggsModule::zero_field(rp.down(), 1).unwrap();
        let cech = two_charts(&rp, var_lift(&rp, 1, 2));
        assert!(verify_chain_map(&e, &cech, 4, PhiOptions::default())
            .unwrap()
            .is_chain_map());
    }

    #[test]
    fn homotopy_identity() {
        let (rp, e) = rank_two(7, 1, 1);
        let std = LiftingDatum::standard(&rp);
        let sq = var_lift(&rp, 0, 2);
        for s in 0..=1 {
            let res = homotopy_defect(&e, &std, &sq, s, PhiOptions::default()).unwrap();
            assert!(res.is_zero(), "s = {s}");
            assert!(homotopy_defect(&e, &sq, &sq, s, PhiOptions::default())
                .unwrap()
                .is_zero());
        }
        let (rp, e) = rank_two(7, 2, 1);
        let a = var_lift(&rp, 0, 2);
        let b = var_lift(&rp, 1, 1);
        for s in 0..=2 {
            assert!(
                homotopy_defect(&e, &a, &b, s, PhiOptions::default())
                    .unwrap()
                    .is_zero(),
                "s = {s}"
            );
        }
    }

    #[test]
    fn homotopy_field_free() {
        let rp = pair(5, 1, 0, 1);
        let e = HiggsModule::zero_field(rp.down(), 1).unwrap();
        let res = homotopy_defect(
            &e,
            &LiftingDatum::standard(&rp),
            &var_lift(&rp, 0, 3),
            1,
            PhiOptions::default(),
        )
        .unwrap();
        assert!(res.is_zero());
    }

    #[test]
    fn level_bound_enforced() {
        let (rp, e) = rank_two(5, 1, 1);
        let cech = two_charts(&rp, var_lift(&rp, 0, 1));
        assert!(matches!(
            verify_chain_map(&e, &cech, 5, PhiOptions::default()),
            Err(CartierError::DegreeBound { .. })
        ));
        let ring: &Arc<TruncRing> = rp.down();
        assert_eq!(ring.n(), 1);
    }
}
