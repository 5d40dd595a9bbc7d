//! One-periodic filtered flat modules and the comparisons run on them:
//! adaptedness of the intersection complex, E₁ degeneration, intersection
//! cohomology and residue triangularity.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cartier::{inverse_cartier, ring_pair, CartierError, LiftingDatum};
use crate::complexes::{
    degeneration, gr_abutment, BasedComplex, ComplexError, Degeneration, FilteredComplex,
    FiltrationMode,
};
use crate::fplin::{
    subspace_calc, CalcResult, FieldSpec, LinAlgError, Matrix, SparseVec, Subspace, SubspaceOp,
};
use crate::modcx::{
    de_rham_complex, expand_levels, filtered_complex, intersection_subspaces, levels_from_dims,
    residue_stratum, special_triangular_check, to_ascending_levels, Filtration, FlatModule, Forms,
    GradedHiggs, HiggsModule, LinearModule, ModError, StrataIndex, TriangularCheck,
};
use crate::trunc_ring::RingPair;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FlowError {
    #[error(transparent)]
    Module(#[from] ModError),
    #[error(transparent)]
    Cartier(#[from] CartierError),
    #[error(transparent)]
    Complex(#[from] ComplexError),
    #[error(transparent)]
    LinAlg(#[from] LinAlgError),
    #[error("shape: {0}")]
    Shape(String),
    #[error("not a one-periodic datum: {0}")]
    NotPeriodic(String),
}

pub type Result<T> = std::result::Result<T, FlowError>;

/// A graded Higgs module `E` with constant log fields, its inverse Cartier
/// transform `H`, the level filtration on `H` and the isomorphism
/// `ψ: Gr H → E`, stored as one block per level.
#[derive(Clone, Debug)]
pub struct PeriodicWitness {
    pair: RingPair,
    higgs: HiggsModule,
    flat: FlatModule,
    fil: Filtration,
    graded: GradedHiggs,
    psi: Vec<Matrix>,
}

impl PeriodicWitness {
    pub fn from_graded(e: &HiggsModule) -> Result<Self> {
        let pair = ring_pair(e)?;
        let grading = e
            .grading()
            .ok_or_else(|| FlowError::NotPeriodic("Higgs module carries no grading".into()))?
            .to_vec();
        for (i, th) in e.fields().iter().enumerate() {
            if !th.is_constant() {
                return Err(FlowError::NotPeriodic(format!(
                    "component {} is not constant",
                    i + 1
                )));
            }
            if i >= pair.r() && !th.is_zero() {
                return Err(FlowError::NotPeriodic(format!(
                    "component {} lies along an ordinary coordinate",
                    i + 1
                )));
            }
        }
        let flat = inverse_cartier(e, &LiftingDatum::standard(&pair))?;
        let fil = Filtration::from_levels(&flat, &expand_levels(&grading, pair.up().dim()))?;
        let graded = GradedHiggs::new(&flat, &fil)?;
        let top = grading.iter().copied().max().unwrap_or(0);
        let psi = (0..=top)
            .map(|q| Matrix::identity(pair.field(), grading.iter().filter(|&&g| g == q).count()))
            .collect();
        let w = PeriodicWitness {
            pair,
            higgs: e.clone(),
            flat,
            fil,
            graded,
            psi,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn pair(&self) -> &RingPair {
        &self.pair
    }
    pub fn higgs(&self) -> &HiggsModule {
        &self.higgs
    }
    pub fn flat(&self) -> &FlatModule {
        &self.flat
    }
    pub fn filtration(&self) -> &Filtration {
        &self.fil
    }
    pub fn graded(&self) -> &GradedHiggs {
        &self.graded
    }
    pub fn psi(&self) -> &[Matrix] {
        &self.psi
    }
    pub fn grading(&self) -> &[usize] {
        self.higgs.grading().unwrap_or(&[])
    }
    pub fn level(&self) -> usize {
        self.higgs.level()
    }

    /// Constant structure matrices of `Gr H` in the basis of `E`.
    pub fn structure_constants(&self) -> Result<Vec<Matrix>> {
        let gr = self.graded.to_higgs(self.pair.up(), self.higgs.rank())?;
        if gr.grading() != self.higgs.grading() {
            return Err(FlowError::NotPeriodic(
                "graded pieces sit at the wrong levels".into(),
            ));
        }
        gr.fields()
            .iter()
            .enumerate()
            .map(|(i, m)| {
                if m.is_constant() {
                    Ok(m.constant_part())
                } else {
                    Err(FlowError::NotPeriodic(format!(
                        "graded component {} is not constant",
                        i + 1
                    )))
                }
            })
            .collect()
    }

    /// `ψ` assembled as a single matrix in the basis of `E`.
    pub fn psi_matrix(&self) -> Result<Matrix> {
        let g = self.grading();
        let mut out = Matrix::zeros(self.pair.field(), g.len(), g.len());
        for (q, block) in self.psi.iter().enumerate() {
            let idx: Vec<usize> = (0..g.len()).filter(|&k| g[k] == q).collect();
            if block.rows() != idx.len() || block.cols() != idx.len() {
                return Err(FlowError::Shape(format!(
                    "ψ block {q} is {}×{}, level has {} generators",
                    block.rows(),
                    block.cols(),
                    idx.len()
                )));
            }
            for (a, &i) in idx.iter().enumerate() {
                for (b, &k) in idx.iter().enumerate() {
                    out.set(i, k, block.get(a, b));
                }
            }
        }
        Ok(out)
    }

    /// Checks that `ψ` is invertible and intertwines the graded and original fields.
    pub fn validate(&self) -> Result<()> {
        let psi = self.psi_matrix()?;
        if psi.rank() != psi.rows() {
            return Err(FlowError::NotPeriodic("ψ is singular".into()));
        }
        let gr = self.structure_constants()?;
        for (i, (bar, th)) in gr.iter().zip(self.higgs.fields()).enumerate() {
            if psi.mul(bar)? != th.constant_part().mul(&psi)? {
                return Err(FlowError::NotPeriodic(format!(
                    "ψ does not intertwine component {}",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    pub fn direct_sum(&self, other: &PeriodicWitness) -> Result<PeriodicWitness> {
        let e = self.higgs.direct_sum(&other.higgs)?;
        let mut w = PeriodicWitness::from_graded(&e)?;
        let f = self.pair.field();
        let top = w.psi.len();
        w.psi = (0..top)
            .map(|q| {
                let zero = Matrix::zeros(f, 0, 0);
                let a = self.psi.get(q).unwrap_or(&zero);
                let b = other.psi.get(q).unwrap_or(&zero);
                let n = a.rows() + b.rows();
                Matrix::from_fn(f, n, n, |i, k| match (i < a.rows(), k < a.rows()) {
                    (true, true) => a.get(i, k),
                    (false, false) => b.get(i - a.rows(), k - a.rows()),
                    _ => 0,
                })
            })
            .collect();
        w.validate()?;
        Ok(w)
    }
}

/// Witness with grading dims `(m_0..m_w)` and constant log fields `thetas`.
pub fn build_one_periodic(
    pair: &RingPair,
    dims: &[usize],
    thetas: &[Matrix],
) -> Result<PeriodicWitness> {
    let rank: usize = dims.iter().sum();
    let e = HiggsModule::constant(pair.down(), thetas, rank, Some(levels_from_dims(dims)))?;
    PeriodicWitness::from_graded(&e)
}

/// A random graded lowering map `N` for grading dims `dims`; the log fields
/// are scalar multiples of `N`, so they commute.
pub fn random_witness(
    pair: &RingPair,
    dims: &[usize],
    rng: &mut impl Rng,
) -> Result<PeriodicWitness> {
    let f = pair.field();
    let levels = levels_from_dims(dims);
    let rank = levels.len();
    let mut nil = Matrix::zeros(f, rank, rank);
    for i in 0..rank {
        for k in 0..rank {
            if levels[i] + 1 == levels[k] {
                nil.set(i, k, rng.gen_range(0..f.p()));
            }
        }
    }
    let thetas: Vec<Matrix> = (0..pair.r())
        .map(|_| nil.scale(rng.gen_range(1..f.p())))
        .collect();
    build_one_periodic(pair, dims, &thetas)
}

// ── adaptedness ────────────────────────────────────────────────────────────

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdaptednessRow {
    pub degree: usize,
    /// `dim Gr Ω_int(H)`.
    pub graded_of_intersection: usize,
    /// `dim Ω_int(Gr H)`.
    pub intersection_of_graded: usize,
    pub inclusion: bool,
    pub equal: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Adaptedness {
    pub rows: Vec<AdaptednessRow>,
    /// A vector of `Gr Ω_int(H)` outside `Ω_int(Gr H)`, with its degree.
    pub witness: Option<(usize, SparseVec)>,
}

impl Adaptedness {
    pub fn equal(&self) -> bool {
        self.rows.iter().all(|r| r.equal)
    }
    pub fn inclusion(&self) -> bool {
        self.rows.iter().all(|r| r.inclusion)
    }
}

/// `⊕_q (S ∩ Fil^q ⊗ Λ^m + Fil^{q+1} ⊗ Λ^m) / Fil^{q+1} ⊗ Λ^m` in the
/// coordinates of `Gr H ⊗ Λ^m`.
fn graded_forms(gr: &GradedHiggs, s: &Subspace, forms: usize, d: usize) -> Result<Subspace> {
    let f = gr.field();
    let g = gr.dim();
    let fil = gr.filtration();
    let mut gens = Vec::new();
    for q in 0..fil.steps().len() {
        let level = fil.level(q);
        let flag = Subspace::span(
            f,
            forms * d,
            (0..forms)
                .flat_map(|j| {
                    level
                        .basis()
                        .iter()
                        .map(move |v| v.remap(f, |i| Some(j * d + i)))
                })
                .collect::<Vec<_>>(),
        );
        for v in s.intersect(&flag)?.basis() {
            let mut blocks = vec![Vec::new(); forms];
            for &(i, c) in v.entries() {
                blocks[i / d].push((i % d, c));
            }
            let mut out = SparseVec::new();
            for (j, entries) in blocks.into_iter().enumerate() {
                if entries.is_empty() {
                    continue;
                }
                let piece = gr.project(q, &SparseVec::from_entries(f, entries));
                out = out.add(f, &piece.remap(f, |i| Some(j * g + i)));
            }
            gens.push(out);
        }
    }
    Ok(Subspace::span(f, forms * g, gens))
}

fn verdict(r: CalcResult) -> bool {
    matches!(r, CalcResult::Verdict(true))
}

/// Compares `Gr_Fil Ω_int(H)` with `Ω_int(Gr_Fil H)` degree by degree.
pub fn adaptedness_check(h: &FlatModule, fil: &Filtration) -> Result<Adaptedness> {
    let gr = GradedHiggs::new(h, fil)?;
    let lhs_all = intersection_subspaces(h)?;
    let rhs_all = intersection_subspaces(&gr)?;
    let forms = Forms::new(h.n(), h.r());
    let mut rows = Vec::with_capacity(h.n() + 1);
    let mut witness = None;
    for m in 0..=h.n() {
        let lhs = graded_forms(&gr, &lhs_all[m], forms.count(m), h.dim())?;
        let rhs = &rhs_all[m];
        let inclusion = verdict(subspace_calc(&lhs, rhs, SubspaceOp::Contains)?);
        let equal = verdict(subspace_calc(&lhs, rhs, SubspaceOp::Equals)?);
        if !equal && witness.is_none() {
            witness = lhs
                .basis()
                .iter()
                .find(|v| !rhs.contains_vec(v))
                .map(|v| (m, v.clone()));
        }
        rows.push(AdaptednessRow {
            degree: m,
            graded_of_intersection: lhs.dim(),
            intersection_of_graded: rhs.dim(),
            inclusion,
            equal,
        });
    }
    Ok(Adaptedness { rows, witness })
}

// ── E₁ degeneration and intersection cohomology ────────────────────────────

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegenerationMode {
    /// The whole de Rham complex of `H`.
    Full,
    /// The intersection subcomplex `Ω_int(H)`.
    Intersection,
}

pub fn hodge_filtered_complex(
    h: &FlatModule,
    fil: &Filtration,
    mode: DegenerationMode,
) -> Result<FilteredComplex> {
    Ok(match mode {
        DegenerationMode::Full => filtered_complex(h, fil, None)?,
        DegenerationMode::Intersection => {
            let int = intersection_subspaces(h)?;
            filtered_complex(h, fil, Some(&int))?
        }
    })
}

/// Compares `Σ E₁` with the abutment in total degrees `< p − width(Fil)`.
pub fn e1_degeneration_check(
    h: &FlatModule,
    fil: &Filtration,
    mode: DegenerationMode,
) -> Result<Degeneration> {
    let fc = hodge_filtered_complex(h, fil, mode)?;
    let below = (h.field().p() as usize).saturating_sub(fil.width());
    Ok(degeneration(&fc, Some(below))?)
}

/// Two-term complex `F_p → F_p` with an isomorphism as differential, filtered
/// in Griffiths mode so that E₁ has one class in each degree while `H = 0`.
pub fn nondegenerate_example(field: FieldSpec) -> Result<FilteredComplex> {
    let one = Matrix::identity(field, 1);
    let c = BasedComplex::from_dense(field, vec![1, 1], &[one])?;
    let full = Subspace::full(field, 1);
    let zero = Subspace::zero(field, 1);
    let flags = vec![
        vec![full.clone(), zero.clone()],
        vec![full.clone(), full, zero],
    ];
    Ok(FilteredComplex::new(c, flags, FiltrationMode::Griffiths)?)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IhRow {
    pub degree: usize,
    /// `dim IH^m`.
    pub ih: usize,
    /// `dim H^m` of the full de Rham complex.
    pub h: usize,
    /// `dim Gr^a IH^m` for each filtration index `a`.
    pub hodge: Vec<usize>,
    /// Rank of `IH^m → H^m`.
    pub map_rank: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IhReport {
    pub rows: Vec<IhRow>,
}

impl IhReport {
    pub fn ih(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.ih).collect()
    }
    pub fn h(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.h).collect()
    }
    /// Every row has Hodge numbers summing to `dim IH`.
    pub fn hodge_consistent(&self) -> bool {
        self.rows
            .iter()
            .all(|r| r.hodge.iter().sum::<usize>() == r.ih)
    }
}

pub fn intersection_cohomology(h: &FlatModule, fil: &Filtration) -> Result<IhReport> {
    let full = de_rham_complex(h)?;
    let int = intersection_subspaces(h)?;
    let fc = filtered_complex(h, fil, Some(&int))?;
    let ic = fc.complex();
    let mut rows = Vec::with_capacity(full.top() + 1);
    for m in 0..=full.top() {
        let z_int = int[m].intersect(&full.cocycles(m))?;
        let b = full.coboundaries(m);
        rows.push(IhRow {
            degree: m,
            ih: ic.cohomology_dim(m)?,
            h: full.cohomology_dim(m)?,
            hodge: gr_abutment(&fc, m)?,
            map_rank: z_int.sum(&b)?.dim() - b.dim(),
        });
    }
    Ok(IhReport { rows })
}

// ── residues ───────────────────────────────────────────────────────────────

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResidueRow {
    pub stratum: Vec<usize>,
    pub s: usize,
    pub check: TriangularCheck,
}

/// Classifies the closed-point residue of every stratum, with levels
/// ascending and `s = min(|I|, level)`.
pub fn residue_triangularity(w: &PeriodicWitness) -> Result<Vec<ResidueRow>> {
    let mut rows = Vec::new();
    for idx in StrataIndex::all(w.pair.r()) {
        let res = residue_stratum(&w.flat, &idx)?;
        let (m, partition) = to_ascending_levels(&res.closed_point, w.grading());
        let s = idx.indices().len().min(w.level());
        rows.push(ResidueRow {
            stratum: idx.indices().to_vec(),
            s,
            check: special_triangular_check(&m, &partition, s)?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complexes::e1_page;
    use crate::modcx::Triangularity;
    use rand::SeedableRng;

    fn pair(p: u64, n: usize, r: usize, m: u32) -> RingPair {
        RingPair::new(FieldSpec::new(p).unwrap(), n, r, m).unwrap()
    }

    fn rank_two(p: u64, n: usize, r: usize, m: u32) -> PeriodicWitness {
        let rp = pair(p, n, r, m);
        let nil = Matrix::from_rows(rp.field(), &[vec![0, 0], vec![1, 0]]).unwrap();
        build_one_periodic(&rp, &[1, 1], &[nil]).unwrap()
    }

    #[test]
    fn rank_two_witness_validates() {
        let w = rank_two(5, 1, 1, 1);
        assert_eq!(w.grading(), &[1, 0]);
        assert_eq!(w.level(), 1);
        assert_eq!(w.psi().len(), 2);
        let gr = w.structure_constants().unwrap();
        assert_eq!(gr[0], w.higgs().fields()[0].constant_part());
    }

    #[test]
    fn ordinary_field_is_rejected() {
        let rp = pair(5, 1, 0, 1);
        let nil = Matrix::from_rows(rp.field(), &[vec![0, 0], vec![1, 0]]).unwrap();
        assert!(matches!(
            build_one_periodic(&rp, &[1, 1], &[nil]),
            Err(FlowError::NotPeriodic(_))
        ));
    }

    #[test]
    fn wrong_psi_fails_validation() {
        let mut w = rank_two(5, 1, 1, 1);
        w.psi[0] = Matrix::identity(w.pair.field(), 1).scale(2);
        assert!(w.validate().is_err());
    }

    #[test]
    fn direct_sum_stays_periodic() {
        let a = rank_two(5, 1, 1, 1);
        let w = a.direct_sum(&a).unwrap();
        assert_eq!(w.grading(), &[1, 0, 1, 0]);
        assert_eq!(w.psi()[1].rows(), 2);
    }

    #[test]
    fn adaptedness_holds_on_witness() {
        for (n, r, m) in [(1, 1, 1), (1, 1, 2), (2, 2, 1), (2, 1, 1)] {
            let w = rank_two(5, n, r, m);
            let a = adaptedness_check(w.flat(), w.filtration()).unwrap();
            assert!(a.equal(), "{n} {r} {m}: {:?}", a.rows);
            assert!(a.witness.is_none());
        }
    }

    #[test]
    fn trivial_filtration_is_strictly_coarser() {
        let w = rank_two(5, 1, 1, 1);
        let a = adaptedness_check(w.flat(), &Filtration::trivial(w.flat())).unwrap();
        assert!(a.inclusion());
        assert!(!a.equal());
        let (deg, v) = a.witness.clone().unwrap();
        assert!(!v.is_zero());
        assert!(a.rows[deg].graded_of_intersection > a.rows[deg].intersection_of_graded);
    }

    #[test]
    fn random_witnesses_are_adapted() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for dims in [vec![1, 2], vec![2, 1, 1], vec![1, 1, 1]] {
            let w = random_witness(&pair(7, 2, 2, 1), &dims, &mut rng).unwrap();
            assert!(adaptedness_check(w.flat(), w.filtration()).unwrap().equal());
        }
    }

    #[test]
    fn rank_two_intersection_cohomology() {
        let w = rank_two(5, 1, 1, 1);
        let ih = intersection_cohomology(w.flat(), w.filtration()).unwrap();
        assert_eq!(ih.ih(), vec![1, 0]);
        assert_eq!(ih.h(), vec![1, 1]);
        assert!(ih.hodge_consistent());
        assert_eq!(ih.rows[0].map_rank, 1);
    }

    #[test]
    fn rank_two_e1_totals() {
        let w = rank_two(5, 1, 1, 1);
        let d = e1_degeneration_check(w.flat(), w.filtration(), DegenerationMode::Intersection)
            .unwrap();
        let e1: Vec<usize> = d.rows.iter().map(|r| r.e1_total).collect();
        let gr: Vec<usize> = d.rows.iter().map(|r| r.gr_total).collect();
        assert_eq!(e1, vec![5, 4]);
        assert_eq!(gr, vec![1, 0]);
        assert!(!d.degenerate);
    }

    #[test]
    fn rank_two_full_e1_totals() {
        let w = rank_two(5, 1, 1, 1);
        let d = e1_degeneration_check(w.flat(), w.filtration(), DegenerationMode::Full).unwrap();
        let e1: Vec<usize> = d.rows.iter().map(|r| r.e1_total).collect();
        let h: Vec<usize> = d.rows.iter().map(|r| r.h_dim).collect();
        assert_eq!((e1, h), (vec![5, 5], vec![1, 1]));
    }

    #[test]
    fn crafted_example_does_not_degenerate() {
        let fc = nondegenerate_example(FieldSpec::new(5).unwrap()).unwrap();
        let d = degeneration(&fc, None).unwrap();
        assert!(!d.degenerate);
        let e1: usize = d.rows.iter().map(|r| r.e1_total).sum();
        let h: usize = d.rows.iter().map(|r| r.h_dim).sum();
        assert_eq!((e1, h), (2, 0));
        assert_eq!(e1_page(&fc).unwrap().total(0), 1);
    }

    #[test]
    fn witness_residues_are_special() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for dims in [vec![1, 1], vec![1, 2, 1]] {
            let w = random_witness(&pair(7, 2, 2, 1), &dims, &mut rng).unwrap();
            for row in residue_triangularity(&w).unwrap() {
                assert_eq!(row.check.class, Triangularity::Special, "{row:?}");
            }
        }
    }
}
