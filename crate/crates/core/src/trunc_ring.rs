//! Truncated monomial rings `F_p[x_1..x_n]/(x_i^T)`.
//!
//! A [`RingPair`] holds the downstairs ring `A' = F_p[u]/(u_i^M)` and the
//! upstairs ring `A = F_p[t]/(t_i^{pM})` linked by the Frobenius `u_i ↦ t_i^p`.
//! Coordinates `0..r` are logarithmic: [`RingElement::derive`] returns
//! `t_i ∂_i` there and `∂_i` elsewhere.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::fplin::{FieldSpec, Matrix, SparseMatrix};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RingError {
    #[error("elements belong to different rings")]
    RingMismatch,
    #[error("coordinate index {index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("derivations are only defined on the upstairs ring")]
    NotUpstairs,
    #[error("invalid ring shape: {0}")]
    InvalidShape(String),
    #[error("coefficient vector has length {got}, ring dimension is {expected}")]
    BadLength { got: usize, expected: usize },
}

pub type Result<T> = std::result::Result<T, RingError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Down,
    Up,
}

/// One truncated ring with its graded-lex monomial basis.
#[derive(Debug, PartialEq, Eq)]
pub struct TruncRing {
    field: FieldSpec,
    n: usize,
    r: usize,
    trunc: u32,
    side: Side,
    monos: Vec<Vec<u32>>,
    // mixed-radix code of an exponent vector -> graded-lex position
    position: Vec<usize>,
}

impl TruncRing {
    pub fn new(field: FieldSpec, n: usize, r: usize, trunc: u32, side: Side) -> Result<Self> {
        if n == 0 {
            return Err(RingError::InvalidShape("n must be positive".into()));
        }
        if r > n {
            return Err(RingError::InvalidShape(format!("r = {r} exceeds n = {n}")));
        }
        if trunc == 0 {
            return Err(RingError::InvalidShape(
                "truncation must be positive".into(),
            ));
        }
        let size = (trunc as usize)
            .checked_pow(n as u32)
            .filter(|&s| s <= 1 << 24)
            .ok_or_else(|| RingError::InvalidShape(format!("{trunc}^{n} monomials is too many")))?;
        let mut monos: Vec<Vec<u32>> = (0..size)
            .map(|code| {
                let mut e = vec![0u32; n];
                let mut c = code;
                for slot in e.iter_mut().rev() {
                    *slot = (c % trunc as usize) as u32;
                    c /= trunc as usize;
                }
                e
            })
            .collect();
        monos.sort_by(|a, b| {
            let da: u32 = a.iter().sum();
            let db: u32 = b.iter().sum();
            da.cmp(&db).then_with(|| b.cmp(a))
        });
        let mut position = vec![0; size];
        for (k, e) in monos.iter().enumerate() {
            position[encode(e, trunc)] = k;
        }
        Ok(TruncRing {
            field,
            n,
            r,
            trunc,
            side,
            monos,
            position,
        })
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn r(&self) -> usize {
        self.r
    }
    pub fn trunc(&self) -> u32 {
        self.trunc
    }
    pub fn side(&self) -> Side {
        self.side
    }
    pub fn dim(&self) -> usize {
        self.monos.len()
    }
    pub fn is_log(&self, i: usize) -> bool {
        i < self.r
    }

    /// Exponent vector of the `k`-th basis monomial.
    pub fn exponents(&self, k: usize) -> &[u32] {
        &self.monos[k]
    }

    /// Basis position of a monomial, `None` if it lies in the truncation ideal.
    pub fn index_of(&self, e: &[u32]) -> Option<usize> {
        if e.len() != self.n || e.iter().any(|&x| x >= self.trunc) {
            return None;
        }
        Some(self.position[encode(e, self.trunc)])
    }

    fn product_index(&self, a: usize, b: usize) -> Option<usize> {
        let (ea, eb) = (&self.monos[a], &self.monos[b]);
        let mut code = 0usize;
        for i in 0..self.n {
            let s = ea[i] + eb[i];
            if s >= self.trunc {
                return None;
            }
            code = code * self.trunc as usize + s as usize;
        }
        Some(self.position[code])
    }

    pub fn var_name(&self) -> &'static str {
        match self.side {
            Side::Down => "u",
            Side::Up => "t",
        }
    }
}

fn encode(e: &[u32], trunc: u32) -> usize {
    e.iter()
        .fold(0, |acc, &x| acc * trunc as usize + x as usize)
}

/// The downstairs/upstairs pair with Frobenius between them.
#[derive(Clone, Debug)]
pub struct RingPair {
    field: FieldSpec,
    m: u32,
    down: Arc<TruncRing>,
    up: Arc<TruncRing>,
}

impl RingPair {
    pub fn new(field: FieldSpec, n: usize, r: usize, m: u32) -> Result<Self> {
        let pm = u32::try_from(field.p() * m as u64)
            .map_err(|_| RingError::InvalidShape("p*M overflows".into()))?;
        Ok(RingPair {
            field,
            m,
            down: Arc::new(TruncRing::new(field, n, r, m, Side::Down)?),
            up: Arc::new(TruncRing::new(field, n, r, pm, Side::Up)?),
        })
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }
    pub fn p(&self) -> u64 {
        self.field.p()
    }
    pub fn n(&self) -> usize {
        self.down.n
    }
    pub fn r(&self) -> usize {
        self.down.r
    }
    pub fn m(&self) -> u32 {
        self.m
    }
    pub fn down(&self) -> &Arc<TruncRing> {
        &self.down
    }
    pub fn up(&self) -> &Arc<TruncRing> {
        &self.up
    }

    /// `u_i ↦ t_i^p`.
    pub fn frobenius(&self, f: &RingElement) -> Result<RingElement> {
        if !Arc::ptr_eq(&f.ring, &self.down) && *f.ring != *self.down {
            return Err(RingError::RingMismatch);
        }
        let p = self.p() as u32;
        let mut out = RingElement::zero(&self.up);
        for (k, &c) in f.coeffs.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let e: Vec<u32> = self.down.monos[k].iter().map(|&x| x * p).collect();
            let idx = self.up.index_of(&e).expect("p*(M-1) < pM");
            out.coeffs[idx] = c;
        }
        Ok(out)
    }

    /// Frobenius on basis indices: downstairs monomial `k` to its upstairs position.
    pub fn frobenius_index(&self, k: usize) -> usize {
        let p = self.p() as u32;
        let e: Vec<u32> = self.down.monos[k].iter().map(|&x| x * p).collect();
        self.up.index_of(&e).expect("p*(M-1) < pM")
    }

    /// Splits an upstairs monomial `t^{i + p b}` into `(i, b)` with `0 ≤ i_j < p`.
    pub fn split_index(&self, k: usize) -> (Vec<u32>, usize) {
        let p = self.p() as u32;
        let e = &self.up.monos[k];
        let low: Vec<u32> = e.iter().map(|&x| x % p).collect();
        let high: Vec<u32> = e.iter().map(|&x| x / p).collect();
        (low, self.down.index_of(&high).expect("quotient below M"))
    }
}

/// An element of a [`TruncRing`], coefficients in graded-lex order.
#[derive(Clone, PartialEq, Eq)]
pub struct RingElement {
    ring: Arc<TruncRing>,
    coeffs: Vec<u64>,
}

impl fmt::Debug for RingElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for RingElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut terms = Vec::new();
        for (k, &c) in self.coeffs.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let mono: Vec<String> = self.ring.monos[k]
                .iter()
                .enumerate()
                .filter(|(_, &x)| x > 0)
                .map(|(i, &x)| {
                    let v = format!("{}{}", self.ring.var_name(), i + 1);
                    if x == 1 {
                        v
                    } else {
                        format!("{v}^{x}")
                    }
                })
                .collect();
            terms.push(match (c, mono.is_empty()) {
                (_, true) => c.to_string(),
                (1, false) => mono.join("*"),
                _ => format!("{c}*{}", mono.join("*")),
            });
        }
        if terms.is_empty() {
            write!(f, "0")
        } else {
            write!(f, "{}", terms.join(" + "))
        }
    }
}

impl RingElement {
    pub fn zero(ring: &Arc<TruncRing>) -> Self {
        RingElement {
            ring: Arc::clone(ring),
            coeffs: vec![0; ring.dim()],
        }
    }

    pub fn constant(ring: &Arc<TruncRing>, c: u64) -> Self {
        let mut e = Self::zero(ring);
        e.coeffs[0] = c % ring.field.p();
        e
    }

    pub fn one(ring: &Arc<TruncRing>) -> Self {
        Self::constant(ring, 1)
    }

    /// `c · x^e`; zero if the monomial is truncated away.
    pub fn monomial(ring: &Arc<TruncRing>, e: &[u32], c: u64) -> Self {
        let mut out = Self::zero(ring);
        if let Some(k) = ring.index_of(e) {
            out.coeffs[k] = c % ring.field.p();
        }
        out
    }

    pub fn var(ring: &Arc<TruncRing>, i: usize) -> Result<Self> {
        if i >= ring.n {
            return Err(RingError::IndexOutOfRange {
                index: i,
                n: ring.n,
            });
        }
        let mut e = vec![0; ring.n];
        e[i] = 1;
        Ok(Self::monomial(ring, &e, 1))
    }

    pub fn from_coeffs(ring: &Arc<TruncRing>, coeffs: Vec<u64>) -> Result<Self> {
        if coeffs.len() != ring.dim() {
            return Err(RingError::BadLength {
                got: coeffs.len(),
                expected: ring.dim(),
            });
        }
        let p = ring.field.p();
        Ok(RingElement {
            ring: Arc::clone(ring),
            coeffs: coeffs.into_iter().map(|c| c % p).collect(),
        })
    }

    /// Builds from `(exponents, coefficient)` terms; truncated terms vanish.
    pub fn from_terms(ring: &Arc<TruncRing>, terms: &[(Vec<u32>, i64)]) -> Result<Self> {
        let f = ring.field;
        let mut out = Self::zero(ring);
        for (e, c) in terms {
            if e.len() != ring.n {
                return Err(RingError::InvalidShape(format!(
                    "monomial has {} exponents, ring has {} variables",
                    e.len(),
                    ring.n
                )));
            }
            if let Some(k) = ring.index_of(e) {
                out.coeffs[k] = f.add(out.coeffs[k], f.from_i64(*c));
            }
        }
        Ok(out)
    }

    pub fn ring(&self) -> &Arc<TruncRing> {
        &self.ring
    }
    pub fn coeffs(&self) -> &[u64] {
        &self.coeffs
    }
    pub fn coeff(&self, k: usize) -> u64 {
        self.coeffs[k]
    }
    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0)
    }
    pub fn constant_term(&self) -> u64 {
        self.coeffs[0]
    }

    fn same_ring(&self, other: &RingElement) -> Result<()> {
        if Arc::ptr_eq(&self.ring, &other.ring) || *self.ring == *other.ring {
            Ok(())
        } else {
            Err(RingError::RingMismatch)
        }
    }

    pub fn add(&self, other: &RingElement) -> Result<RingElement> {
        self.same_ring(other)?;
        let f = self.ring.field;
        Ok(RingElement {
            ring: Arc::clone(&self.ring),
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(&a, &b)| f.add(a, b))
                .collect(),
        })
    }

    pub fn sub(&self, other: &RingElement) -> Result<RingElement> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> RingElement {
        self.scale(self.ring.field.p() - 1)
    }

    pub fn scale(&self, c: u64) -> RingElement {
        let f = self.ring.field;
        RingElement {
            ring: Arc::clone(&self.ring),
            coeffs: self.coeffs.iter().map(|&a| f.mul(a, c % f.p())).collect(),
        }
    }

    pub fn mul(&self, other: &RingElement) -> Result<RingElement> {
        self.same_ring(other)?;
        let f = self.ring.field;
        let mut out = vec![0u64; self.coeffs.len()];
        for (a, &ca) in self.coeffs.iter().enumerate() {
            if ca == 0 {
                continue;
            }
            for (b, &cb) in other.coeffs.iter().enumerate() {
                if cb == 0 {
                    continue;
                }
                if let Some(k) = self.ring.product_index(a, b) {
                    out[k] = f.add(out[k], f.mul(ca, cb));
                }
            }
        }
        Ok(RingElement {
            ring: Arc::clone(&self.ring),
            coeffs: out,
        })
    }

    pub fn pow(&self, e: u32) -> RingElement {
        let mut acc = RingElement::one(&self.ring);
        for _ in 0..e {
            acc = acc.mul(self).expect("same ring");
        }
        acc
    }

    /// `t_i ∂_i` for log coordinates, `∂_i` otherwise. Upstairs only.
    pub fn derive(&self, i: usize) -> Result<RingElement> {
        if self.ring.side != Side::Up {
            return Err(RingError::NotUpstairs);
        }
        if i >= self.ring.n {
            return Err(RingError::IndexOutOfRange {
                index: i,
                n: self.ring.n,
            });
        }
        let f = self.ring.field;
        let mut out = vec![0u64; self.coeffs.len()];
        for (k, &c) in self.coeffs.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let e = &self.ring.monos[k];
            let j = e[i] as u64 % f.p();
            if j == 0 {
                continue;
            }
            let target = if self.ring.is_log(i) {
                k
            } else {
                let mut e2 = e.clone();
                e2[i] -= 1;
                self.ring.index_of(&e2).expect("lower exponent")
            };
            out[target] = f.add(out[target], f.mul(c, j));
        }
        Ok(RingElement {
            ring: Arc::clone(&self.ring),
            coeffs: out,
        })
    }

    /// Multiplication-by-`self` as a dense operator on the ring (column convention).
    pub fn mul_matrix(&self) -> Matrix {
        self.mul_operator().to_dense()
    }

    pub fn mul_operator(&self) -> SparseMatrix {
        let f = self.ring.field;
        let d = self.ring.dim();
        let mut trip = Vec::new();
        for (a, &ca) in self.coeffs.iter().enumerate() {
            if ca == 0 {
                continue;
            }
            for b in 0..d {
                if let Some(k) = self.ring.product_index(a, b) {
                    trip.push((k, b, ca));
                }
            }
        }
        SparseMatrix::from_triplets(f, d, d, trip)
    }
}

/// The derivation `derive(·, i)` as an operator on the upstairs ring.
pub fn derivation_operator(ring: &Arc<TruncRing>, i: usize) -> Result<SparseMatrix> {
    let d = ring.dim();
    let mut cols = Vec::with_capacity(d);
    for k in 0..d {
        let mut e = RingElement::zero(ring);
        e.coeffs[k] = 1;
        cols.push(crate::fplin::SparseVec::from_dense(e.derive(i)?.coeffs()));
    }
    Ok(SparseMatrix::from_columns(ring.field, d, cols))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn pair(p: u64, n: usize, r: usize, m: u32) -> RingPair {
        RingPair::new(FieldSpec::new(p).unwrap(), n, r, m).unwrap()
    }

    fn random(ring: &Arc<TruncRing>, rng: &mut impl Rng) -> RingElement {
        let p = ring.field().p();
        let c = (0..ring.dim()).map(|_| rng.gen_range(0..p)).collect();
        RingElement::from_coeffs(ring, c).unwrap()
    }

    #[test]
    fn dimensions() {
        let rp = pair(3, 2, 1, 2);
        assert_eq!(rp.down().dim(), 4);
        assert_eq!(rp.up().dim(), 36);
    }

    #[test]
    fn graded_lex_order() {
        let rp = pair(3, 2, 0, 1);
        let up = rp.up();
        let order: Vec<&[u32]> = (0..4).map(|k| up.exponents(k)).collect();
        assert_eq!(order, vec![&[0, 0][..], &[1, 0], &[0, 1], &[2, 0]]);
    }

    #[test]
    fn truncation_kills_top_degree() {
        let rp = pair(3, 1, 1, 2);
        let up = rp.up();
        let t = RingElement::var(up, 0).unwrap();
        assert!(t.mul(&t.pow(5)).unwrap().is_zero());
        assert!(!t.pow(5).is_zero());
    }

    #[test]
    fn binomial_square() {
        let rp = pair(5, 1, 0, 1);
        let up = rp.up();
        let x = RingElement::from_terms(up, &[(vec![0], 1), (vec![1], 1)]).unwrap();
        let want =
            RingElement::from_terms(up, &[(vec![0], 1), (vec![1], 2), (vec![2], 1)]).unwrap();
        assert_eq!(x.mul(&x).unwrap(), want);
    }

    #[test]
    fn ring_mismatch() {
        let rp = pair(3, 1, 0, 1);
        let a = RingElement::one(rp.down());
        let b = RingElement::one(rp.up());
        assert_eq!(a.mul(&b), Err(RingError::RingMismatch));
        assert_eq!(a.derive(0), Err(RingError::NotUpstairs));
        assert!(matches!(
            b.derive(3),
            Err(RingError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn associativity_seeded() {
        let rp = pair(3, 2, 1, 1);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let (a, b, c) = (
                random(rp.up(), &mut rng),
                random(rp.up(), &mut rng),
                random(rp.up(), &mut rng),
            );
            let lhs = a.mul(&b.mul(&c).unwrap()).unwrap();
            let rhs = a.mul(&b).unwrap().mul(&c).unwrap();
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn log_and_ordinary_derivatives() {
        let rp = pair(5, 2, 1, 2);
        let up = rp.up();
        let t3 = RingElement::monomial(up, &[3, 0], 1);
        assert_eq!(t3.derive(0).unwrap(), t3.scale(3));
        assert!(RingElement::monomial(up, &[5, 0], 1)
            .derive(0)
            .unwrap()
            .is_zero());
        let s4 = RingElement::monomial(up, &[0, 4], 1);
        assert_eq!(s4.derive(1).unwrap(), RingElement::monomial(up, &[0, 3], 4));
    }

    #[test]
    fn leibniz_seeded() {
        let rp = pair(5, 2, 1, 1);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let (a, b) = (random(rp.up(), &mut rng), random(rp.up(), &mut rng));
            for i in 0..2 {
                let lhs = a.mul(&b).unwrap().derive(i).unwrap();
                let rhs = a
                    .mul(&b.derive(i).unwrap())
                    .unwrap()
                    .add(&b.mul(&a.derive(i).unwrap()).unwrap())
                    .unwrap();
                assert_eq!(lhs, rhs);
            }
        }
    }

    #[test]
    fn frobenius_examples() {
        let rp = pair(3, 2, 1, 2);
        let (down, up) = (rp.down(), rp.up());
        let u1 = RingElement::var(down, 0).unwrap();
        let u2 = RingElement::var(down, 1).unwrap();
        assert_eq!(
            rp.frobenius(&u1).unwrap(),
            RingElement::monomial(up, &[3, 0], 1)
        );
        assert_eq!(
            rp.frobenius(&RingElement::one(down)).unwrap(),
            RingElement::one(up)
        );
        let lhs = rp
            .frobenius(&u1.add(&u2).unwrap())
            .unwrap()
            .mul(&rp.frobenius(&u1).unwrap())
            .unwrap();
        let expanded = RingElement::from_terms(up, &[(vec![6, 0], 1), (vec![3, 3], 1)]).unwrap();
        let via_down = rp
            .frobenius(&u1.mul(&u1).unwrap().add(&u1.mul(&u2).unwrap()).unwrap())
            .unwrap();
        assert_eq!(lhs, expanded);
        assert_eq!(lhs, via_down);
    }

    #[test]
    fn split_index_inverts_regrouping() {
        let rp = pair(3, 2, 1, 2);
        for k in 0..rp.up().dim() {
            let (low, b) = rp.split_index(k);
            let hi = rp.down().exponents(b);
            let e: Vec<u32> = low.iter().zip(hi).map(|(&l, &h)| l + 3 * h).collect();
            assert_eq!(rp.up().index_of(&e), Some(k));
        }
    }

    proptest! {
        #[test]
        fn derivations_commute_and_kill_frobenius(seed in any::<u64>()) {
            let rp = pair(3, 2, 1, 2);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let a = random(rp.up(), &mut rng);
            let ij = a.derive(0).unwrap().derive(1).unwrap();
            let ji = a.derive(1).unwrap().derive(0).unwrap();
            prop_assert_eq!(ij, ji);
            let g = random(rp.down(), &mut rng);
            let fg = rp.frobenius(&g).unwrap();
            for i in 0..2 {
                prop_assert!(fg.derive(i).unwrap().is_zero());
            }
        }

        #[test]
        fn frobenius_is_multiplicative(seed in any::<u64>()) {
            let rp = pair(5, 2, 0, 2);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let (a, b) = (random(rp.down(), &mut rng), random(rp.down(), &mut rng));
            let lhs = rp.frobenius(&a.mul(&b).unwrap()).unwrap();
            let rhs = rp.frobenius(&a).unwrap().mul(&rp.frobenius(&b).unwrap()).unwrap();
            prop_assert_eq!(lhs, rhs);
        }
    }
}
