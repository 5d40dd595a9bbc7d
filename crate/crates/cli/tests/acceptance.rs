//! Acceptance suite: one test per criterion, each printing a single
//! `criterion N: PASS|FAIL ...` line before asserting.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use intcoh::{selftest, RunOptions, Status};
use intcoh_core::cartier::{
    cartier_map, homotopy_defect, inverse_cartier, pushforward_complex, verify_chain_map,
    PhiOptions,
};
use intcoh_core::complexes::degeneration;
use intcoh_core::flows::{
    adaptedness_check, build_one_periodic, e1_degeneration_check, intersection_cohomology,
    nondegenerate_example, random_witness, residue_triangularity, DegenerationMode,
    PeriodicWitness,
};
use intcoh_core::modcx::{
    de_rham_complex, exchange_brute_force, fil_image_exchange, higgs_complex, intersection_complex,
    random_higgs, random_special, special_triangular_check, Triangularity,
};
use intcoh_core::{
    CechDatum, FieldSpec, Filtration, HiggsModule, LiftingDatum, Matrix, RingElement, RingPair,
};

/// Criterion 1: wall time per classical instance.
const C1_MAX_PER_INSTANCE: Duration = Duration::from_secs(1);
/// Criterion 2: wall time for the full seeded sweep.
const C2_MAX_TOTAL: Duration = Duration::from_secs(120);
/// Criterion 2 and 3: instances per `(p, n)`.
const SWEEP_PER_CELL: usize = 50;
/// Criteria 4 to 8: minimum suite sizes.
const MIN_CECH_PAIRS: usize = 20;
const MIN_LIFT_PAIRS: usize = 20;
const MIN_WITNESSES: usize = 20;
/// Criterion 9: minimum number of random special matrices and their bounds.
const MIN_SPECIAL: usize = 1000;
const MAX_SPECIAL_SIZE: usize = 12;
/// Criterion 10: wall time for the self-test corpus.
const C10_MAX_SELFTEST: Duration = Duration::from_secs(300);

fn verdict(n: u32, ok: bool, detail: &str) {
    println!(
        "criterion {n}: {} {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
}

fn field(p: u64) -> FieldSpec {
    FieldSpec::new(p).unwrap()
}

fn pair(p: u64, n: usize, r: usize, m: u32) -> RingPair {
    RingPair::new(field(p), n, r, m).unwrap()
}

fn binom(n: usize, m: usize) -> usize {
    (0..m).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// The seeded instance set shared by criteria 2 and 3.
fn sweep_instances() -> Vec<(String, HiggsModule)> {
    let mut out = Vec::new();
    for p in [3u64, 5, 7] {
        for n in 1..=3usize {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 * p + n as u64);
            for k in 0..SWEEP_PER_CELL {
                let r = rng.gen_range(0..=n);
                let m = if n == 3 { 1 } else { rng.gen_range(1..=2) };
                let rank = rng.gen_range(1..=3);
                let rp = pair(p, n, r, m);
                let e = random_higgs(rp.down(), rank, 2, &mut rng).unwrap();
                out.push((format!("p={p} n={n} r={r} M={m} rank={rank} #{k}"), e));
            }
        }
    }
    out
}

fn random_lift(rp: &RingPair, rng: &mut impl Rng) -> LiftingDatum {
    let p = rp.p();
    let top = (rp.p() as u32 * rp.m()).min(4);
    let dev = (0..rp.n())
        .map(|_| {
            let terms: Vec<(Vec<u32>, i64)> = (0..rng.gen_range(0..=2))
                .map(|_| {
                    let e = (0..rp.n()).map(|_| rng.gen_range(0..top)).collect();
                    (e, rng.gen_range(1..p) as i64)
                })
                .collect();
            RingElement::from_terms(rp.up(), &terms).unwrap()
        })
        .collect();
    LiftingDatum::new(rp, dev).unwrap()
}

/// `(label, Higgs module, Čech datum)` for criteria 4 and 6.
fn cech_suite() -> Vec<(String, HiggsModule, CechDatum)> {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut out = Vec::new();
    for k in 0..24 {
        let p = [5u64, 7][k % 2];
        let n = 1 + (k / 2) % 2;
        let r = rng.gen_range(0..=n);
        let rp = pair(p, n, r, 1);
        let rank = rng.gen_range(1..=2);
        let e = random_higgs(rp.down(), rank, 1, &mut rng).unwrap();
        let charts = rng.gen_range(2..=3);
        let mut lifts = vec![LiftingDatum::standard(&rp)];
        lifts.extend((1..charts).map(|_| random_lift(&rp, &mut rng)));
        let cech = CechDatum::new(&rp, lifts).unwrap();
        out.push((
            format!("p={p} n={n} r={r} rank={rank} charts={charts} #{k}"),
            e,
            cech,
        ));
    }
    out
}

/// Seeded one-periodic witnesses with varied gradings, `r ∈ {1,2}`, `M ∈ {1,2}`.
fn witnesses() -> Vec<(String, PeriodicWitness)> {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut out = Vec::new();
    for k in 0..24 {
        let p = [5u64, 7][k % 2];
        let r = 1 + k % 2;
        let m = 1 + ((k / 2) % 2) as u32;
        let n = r;
        let levels = rng.gen_range(2..=3);
        let dims: Vec<usize> = (0..levels).map(|_| rng.gen_range(1..=2)).collect();
        let rp = pair(p, n, r, m);
        let w = random_witness(&rp, &dims, &mut rng).unwrap();
        out.push((format!("p={p} n={n} r={r} M={m} dims={dims:?} #{k}"), w));
    }
    let rp = pair(5, 1, 1, 1);
    let nil = Matrix::from_rows(rp.field(), &[vec![0, 0], vec![1, 0]]).unwrap();
    let two = build_one_periodic(&rp, &[1, 1], &[nil]).unwrap();
    out.push(("rank-two ⊕ rank-two".into(), two.direct_sum(&two).unwrap()));
    out
}

#[test]
fn criterion_01_classical_cartier() {
    let mut failures = Vec::new();
    let mut slowest = Duration::ZERO;
    let mut count = 0;
    for p in [3u64, 5] {
        for n in 1..=2usize {
            for m in 1..=2u32 {
                for r in 0..=n {
                    for rank in 1..=2usize {
                        let start = Instant::now();
                        let rp = pair(p, n, r, m);
                        let e = HiggsModule::zero_field(rp.down(), rank).unwrap();
                        let higgs = higgs_complex(&e).unwrap().cohomology_dims();
                        let eb = pushforward_complex(&e).unwrap().complex().cohomology_dims();
                        let h = inverse_cartier(&e, &LiftingDatum::standard(&rp)).unwrap();
                        let dr = de_rham_complex(&h).unwrap().cohomology_dims();
                        let expect: Vec<usize> = (0..=n)
                            .map(|k| binom(n, k) * (m as usize).pow(n as u32) * rank)
                            .collect();
                        let elapsed = start.elapsed();
                        slowest = slowest.max(elapsed);
                        count += 1;
                        if higgs != expect || eb != expect || dr != expect {
                            failures.push(format!(
                                "p={p} n={n} r={r} M={m} rank={rank}: higgs {higgs:?} pushforward {eb:?} de Rham {dr:?} expected {expect:?}"
                            ));
                        }
                        if elapsed > C1_MAX_PER_INSTANCE {
                            failures.push(format!("p={p} n={n} r={r} M={m}: {elapsed:?}"));
                        }
                    }
                }
            }
        }
    }
    let ok = failures.is_empty();
    verdict(
        1,
        ok,
        &format!(
            "{count} instances, slowest {slowest:?}, {:?}",
            failures.first()
        ),
    );
    assert!(ok, "{failures:#?}");
}

#[test]
fn criterion_02_cartier_with_nilpotent_fields() {
    let start = Instant::now();
    let mut failures = Vec::new();
    let instances = sweep_instances();
    for (label, e) in &instances {
        let rp = intcoh_core::cartier::ring_pair(e).unwrap();
        let below = rp.p() as usize - e.level();
        let h = inverse_cartier(e, &LiftingDatum::standard(&rp)).unwrap();
        let higgs = higgs_complex(e).unwrap().cohomology_dims();
        let dr = de_rham_complex(&h).unwrap().cohomology_dims();
        let higgs_int = intersection_complex(e).unwrap().cohomology_dims();
        let dr_int = intersection_complex(&h).unwrap().cohomology_dims();
        for m in 0..=rp.n() {
            if m < below && (higgs[m] != dr[m] || higgs_int[m] != dr_int[m]) {
                failures.push(format!(
                    "{label} m={m}: full {} vs {}, intersection {} vs {}",
                    higgs[m], dr[m], higgs_int[m], dr_int[m]
                ));
            }
        }
    }
    let elapsed = start.elapsed();
    let ok = failures.is_empty() && elapsed < C2_MAX_TOTAL && instances.len() == 9 * SWEEP_PER_CELL;
    verdict(
        2,
        ok,
        &format!(
            "{} instances in {elapsed:?}, {:?}",
            instances.len(),
            failures.first()
        ),
    );
    assert!(failures.is_empty(), "{failures:#?}");
    assert!(elapsed < C2_MAX_TOTAL, "sweep took {elapsed:?}");
}

#[test]
fn criterion_03_en_exactness() {
    let mut failures = Vec::new();
    let instances = sweep_instances();
    for (label, e) in &instances {
        let split = cartier_map(e).unwrap();
        if !split.en_complex.is_acyclic() {
            failures.push(format!(
                "{label}: EN {:?}",
                split.en_complex.cohomology_dims()
            ));
        }
        if !split.en_int_complex.is_acyclic() {
            failures.push(format!(
                "{label}: EN_int {:?}",
                split.en_int_complex.cohomology_dims()
            ));
        }
    }
    let ok = failures.is_empty();
    verdict(
        3,
        ok,
        &format!("{} instances, {:?}", instances.len(), failures.first()),
    );
    assert!(ok, "{failures:#?}");
}

#[test]
fn criterion_04_chain_map_identity() {
    let suite = cech_suite();
    let mut failures = Vec::new();
    for (label, e, cech) in &suite {
        let bound = e.ring().field().p() as usize - e.level().max(1);
        let report = verify_chain_map(e, cech, bound, PhiOptions::default()).unwrap();
        if !report.is_chain_map() {
            failures.push(format!("{label}: {:?}", report.defects.first()));
        }
    }
    let rp = pair(5, 1, 1, 1);
    let nil = Matrix::from_rows(rp.field(), &[vec![0, 0], vec![1, 0]]).unwrap();
    let e = HiggsModule::constant(rp.down(), &[nil], 2, Some(vec![1, 0])).unwrap();
    let lift = LiftingDatum::new(&rp, vec![RingElement::var(rp.up(), 0).unwrap()]).unwrap();
    let cech = CechDatum::new(&rp, vec![LiftingDatum::standard(&rp), lift]).unwrap();
    let tampered = PhiOptions {
        tamper: true,
        ..PhiOptions::default()
    };
    let control = verify_chain_map(&e, &cech, 4, tampered).unwrap();
    let ok = failures.is_empty() && suite.len() >= MIN_CECH_PAIRS && !control.is_chain_map();
    verdict(
        4,
        ok,
        &format!(
            "{} pairs, tampered control defects {}, {:?}",
            suite.len(),
            control.defects.len(),
            failures.first()
        ),
    );
    assert!(failures.is_empty(), "{failures:#?}");
    assert!(suite.len() >= MIN_CECH_PAIRS);
    assert!(!control.is_chain_map(), "tampered coefficients passed");
}

#[test]
fn criterion_05_homotopy_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut failures = Vec::new();
    let mut pairs = 0;
    let mut residuals = 0;
    for k in 0..24 {
        let p = [5u64, 7][k % 2];
        let n = 1 + (k / 2) % 2;
        let r = rng.gen_range(0..=n);
        let rp = pair(p, n, r, 1);
        let e = random_higgs(rp.down(), rng.gen_range(1..=2), 1, &mut rng).unwrap();
        let a = random_lift(&rp, &mut rng);
        let b = random_lift(&rp, &mut rng);
        pairs += 1;
        let l = e.level();
        let top = n.min(p as usize - l - 1).min(p as usize - l.max(1) - 1);
        for s in 0..=top {
            let res = homotopy_defect(&e, &a, &b, s, PhiOptions::default()).unwrap();
            residuals += 1;
            if !res.is_zero() {
                failures.push(format!("p={p} n={n} r={r} s={s} #{k}"));
            }
        }
    }
    let ok = failures.is_empty() && pairs >= MIN_LIFT_PAIRS;
    verdict(
        5,
        ok,
        &format!(
            "{pairs} lifting pairs, {residuals} residuals, {:?}",
            failures.first()
        ),
    );
    assert!(ok, "{failures:#?}");
}

#[test]
fn criterion_06_intersection_preservation() {
    let suite = cech_suite();
    let mut failures = Vec::new();
    for (label, e, cech) in &suite {
        let bound = e.ring().field().p() as usize - e.level().max(1);
        let report = verify_chain_map(e, cech, bound, PhiOptions::default()).unwrap();
        if !report.preserves_intersection() {
            failures.push(format!(
                "{label}: {:?}",
                report.intersection_failures.first()
            ));
        }
    }
    let ok = failures.is_empty();
    verdict(
        6,
        ok,
        &format!("{} pairs, {:?}", suite.len(), failures.first()),
    );
    assert!(ok, "{failures:#?}");
}

#[test]
fn criterion_07_adaptedness() {
    let ws = witnesses();
    let mut failures = Vec::new();
    let mut strict = 0;
    let mut controls = 0;
    for (label, w) in &ws {
        let a = adaptedness_check(w.flat(), w.filtration()).unwrap();
        if !a.equal() {
            failures.push(format!("{label}: {:?}", a.rows));
        }
        let c = adaptedness_check(w.flat(), &Filtration::trivial(w.flat())).unwrap();
        controls += 1;
        if !c.inclusion() {
            failures.push(format!("{label} trivial filtration: inclusion fails"));
        }
        strict += usize::from(!c.equal());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(770);
    for k in 0..6 {
        let rp = pair(5, 1 + k % 2, 1, 1);
        let e = random_higgs(rp.down(), 2, 1, &mut rng).unwrap();
        let h = inverse_cartier(&e, &LiftingDatum::standard(&rp)).unwrap();
        let c = adaptedness_check(&h, &Filtration::trivial(&h)).unwrap();
        controls += 1;
        if !c.inclusion() {
            failures.push(format!("random control #{k}: inclusion fails"));
        }
        strict += usize::from(!c.equal());
    }
    let ok = failures.is_empty() && ws.len() >= MIN_WITNESSES && strict > 0;
    verdict(
        7,
        ok,
        &format!(
            "{} witnesses equal, {controls} non-periodic controls with {strict} strict, {:?}",
            ws.len(),
            failures.first()
        ),
    );
    assert!(failures.is_empty(), "{failures:#?}");
    assert!(ws.len() >= MIN_WITNESSES);
    assert!(strict > 0, "no strict inclusion observed");
}

#[test]
fn criterion_08_e1_degeneration() {
    let ws = witnesses();
    let mut failures = Vec::new();
    for (label, w) in &ws {
        let d = e1_degeneration_check(w.flat(), w.filtration(), DegenerationMode::Intersection)
            .unwrap();
        if let Some(row) = d.rows.iter().find(|r| r.e1_total != r.gr_total) {
            failures.push(format!(
                "{label}: degree {} has E1 total {} against {}",
                row.degree, row.e1_total, row.gr_total
            ));
        }
    }
    let crafted = nondegenerate_example(field(5)).unwrap();
    let control = degeneration(&crafted, None).unwrap();
    let ok = failures.is_empty() && !control.degenerate;
    verdict(
        8,
        ok,
        &format!(
            "{} of {} witnesses non-degenerate, crafted control degenerate={}, first: {:?}",
            failures.len(),
            ws.len(),
            control.degenerate,
            failures.first()
        ),
    );
    assert!(!control.degenerate, "crafted complex reported degenerate");
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn criterion_09_triangularity_and_exchange() {
    let mut failures = Vec::new();
    let ws = witnesses();
    let mut strata = 0;
    for (label, w) in &ws {
        for row in residue_triangularity(w).unwrap() {
            strata += 1;
            if row.check.class != Triangularity::Special {
                failures.push(format!(
                    "{label} stratum {:?}: {:?}",
                    row.stratum, row.check
                ));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut specials = 0;
    while specials < MIN_SPECIAL {
        let p = [3u64, 5, 7][specials % 3];
        let l = rng.gen_range(1..=4);
        let mut partition: Vec<usize> = (0..=l).map(|_| rng.gen_range(0..=3)).collect();
        while partition.iter().sum::<usize>() > MAX_SPECIAL_SIZE {
            let k = rng.gen_range(0..partition.len());
            partition[k] = partition[k].saturating_sub(1);
        }
        if partition.iter().sum::<usize>() == 0 {
            continue;
        }
        let s = rng.gen_range(0..=l);
        let m = random_special(field(p), &partition, s, &mut rng);
        specials += 1;
        if special_triangular_check(&m, &partition, s).unwrap().class != Triangularity::Special {
            failures.push(format!(
                "generator produced a non-special matrix, p={p} {partition:?}"
            ));
            continue;
        }
        for i in 0..=l {
            let fast = fil_image_exchange(&m, &partition, s, i).unwrap().equal;
            let oracle = exchange_brute_force(&m, &partition, s, i);
            if !fast || fast != oracle {
                failures.push(format!(
                    "p={p} {partition:?} s={s} i={i}: {fast} vs oracle {oracle}"
                ));
            }
        }
    }

    let f = field(5);
    let mut non_special_failing = 0;
    for _ in 0..200 {
        let partition = [2usize, 2, 2];
        let m = Matrix::from_fn(f, 6, 6, |i, j| {
            if j / 2 <= i / 2 + 1 {
                rng.gen_range(0..5)
            } else {
                0
            }
        });
        if special_triangular_check(&m, &partition, 1).unwrap().class == Triangularity::Special {
            continue;
        }
        let any_false = (0..3).any(|i| {
            let fast = fil_image_exchange(&m, &partition, 1, i).unwrap().equal;
            assert_eq!(fast, exchange_brute_force(&m, &partition, 1, i));
            !fast
        });
        non_special_failing += usize::from(any_false);
    }
    let ok = failures.is_empty() && specials >= MIN_SPECIAL && non_special_failing > 0;
    verdict(
        9,
        ok,
        &format!(
            "{strata} residue strata special, {specials} special matrices exchange, {non_special_failing} non-special controls fail, {:?}",
            failures.first()
        ),
    );
    assert!(failures.is_empty(), "{failures:#?}");
    assert!(non_special_failing > 0, "no non-special control failed");
}

#[test]
fn criterion_10_intersection_cohomology() {
    let rp = pair(5, 1, 1, 1);
    let nil = Matrix::from_rows(rp.field(), &[vec![0, 0], vec![1, 0]]).unwrap();
    let w = build_one_periodic(&rp, &[1, 1], &[nil]).unwrap();
    let ih = intersection_cohomology(w.flat(), w.filtration()).unwrap();
    let start = Instant::now();
    let st = selftest(RunOptions::default());
    let elapsed = start.elapsed();
    let ok = ih.ih() == vec![1, 0]
        && ih.h() == vec![1, 1]
        && ih.hodge_consistent()
        && st.status == Status::Pass
        && elapsed < C10_MAX_SELFTEST;
    verdict(
        10,
        ok,
        &format!(
            "IH {:?} H {:?}, Hodge sums {}, selftest {:?} in {elapsed:?}",
            ih.ih(),
            ih.h(),
            ih.hodge_consistent(),
            st.status
        ),
    );
    assert_eq!(ih.ih(), vec![1, 0]);
    assert_eq!(ih.h(), vec![1, 1]);
    assert!(ih.hodge_consistent());
    assert_eq!(st.status, Status::Pass, "{:?}", st.witnesses);
    assert!(elapsed < C10_MAX_SELFTEST);
}
