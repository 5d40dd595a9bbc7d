//! The bundled scenario corpus and the self-test that replays it against
//! pinned outcomes and independent oracles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use intcoh_core::cartier::{
    coefficient_consistency, pushforward_complex, verify_chain_map, weight_bookkeeping, PhiOptions,
    PhiRoute, ProductBounds,
};
use intcoh_core::complexes::degeneration;
use intcoh_core::flows::{
    adaptedness_check, e1_degeneration_check, intersection_cohomology, nondegenerate_example,
    DegenerationMode,
};
use intcoh_core::modcx::{
    exchange_brute_force, fil_image_exchange, higgs_complex, random_special,
    special_triangular_check,
};
use intcoh_core::{CechDatum, FieldSpec, Matrix};

use crate::report::{Status, SuiteReport, Table};
use crate::scenario::{parse_scenario, Instance, Scenario};
use crate::suites::{run_all, RunOptions};

/// `(file name, contents)` of every bundled scenario.
pub const CORPUS: &[(&str, &str)] = &[
    ("rank_two.json", include_str!("../scenarios/rank_two.json")),
    (
        "rank_two_trivial.json",
        include_str!("../scenarios/rank_two_trivial.json"),
    ),
    (
        "zero_field.json",
        include_str!("../scenarios/zero_field.json"),
    ),
    (
        "direct_sum.json",
        include_str!("../scenarios/direct_sum.json"),
    ),
    ("two_log.json", include_str!("../scenarios/two_log.json")),
    (
        "random_ordinary.json",
        include_str!("../scenarios/random_ordinary.json"),
    ),
];

/// Suites expected to fail on a bundled scenario; all others must pass.
const EXPECTED_FAILURES: &[(&str, &str)] = &[("rank_two.json", "spectral")];

pub fn corpus_scenario(name: &str) -> Option<Scenario> {
    CORPUS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| parse_scenario(text).expect("bundled scenario parses"))
}

struct Checks {
    table: Table,
    failures: Vec<Value>,
}

impl Checks {
    fn record(&mut self, check: &str, expected: Value, observed: Value) {
        let ok = expected == observed;
        self.table.push(vec![
            json!(check),
            expected.clone(),
            observed.clone(),
            json!(ok),
        ]);
        if !ok {
            self.failures
                .push(json!({"check": check, "expected": expected, "observed": observed}));
        }
    }
}

fn instance(name: &str) -> Result<(Scenario, Instance), String> {
    let s = corpus_scenario(name).ok_or_else(|| format!("{name} is not bundled"))?;
    let inst = Instance::build(&s).map_err(|e| e.to_string())?;
    Ok((s, inst))
}

fn replay_corpus(c: &mut Checks, opts: RunOptions) -> Result<(), String> {
    for (name, _) in CORPUS {
        let (s, inst) = instance(name)?;
        for rep in run_all(&s, &inst, &s.suites, opts, false) {
            let expect_fail = EXPECTED_FAILURES.contains(&(*name, rep.name.as_str()));
            let expected = if expect_fail {
                Status::Fail
            } else {
                Status::Pass
            };
            c.record(
                &format!("{name} {}", rep.name),
                json!(expected),
                json!(rep.status),
            );
        }
    }
    Ok(())
}

fn pinned_values(c: &mut Checks) -> Result<(), String> {
    let e = |x: &dyn std::fmt::Display| x.to_string();

    let (_, two) = instance("rank_two.json")?;
    let ih = intersection_cohomology(&two.flat, &two.filtration).map_err(|x| e(&x))?;
    c.record("rank_two IH", json!([1, 0]), json!(ih.ih()));
    c.record("rank_two H", json!([1, 1]), json!(ih.h()));
    c.record(
        "rank_two Hodge sums",
        json!(true),
        json!(ih.hodge_consistent()),
    );
    let d = e1_degeneration_check(&two.flat, &two.filtration, DegenerationMode::Intersection)
        .map_err(|x| e(&x))?;
    let e1: Vec<usize> = d.rows.iter().map(|r| r.e1_total).collect();
    let gr: Vec<usize> = d.rows.iter().map(|r| r.gr_total).collect();
    c.record(
        "rank_two E1 totals (intersection)",
        json!([[5, 4], [1, 0]]),
        json!([e1, gr]),
    );
    let w = weight_bookkeeping(&pushforward_complex(&two.higgs).map_err(|x| e(&x))?)
        .map_err(|x| e(&x))?;
    c.record(
        "rank_two weight bookkeeping",
        json!([4, 1, 0]),
        json!([w.unit_equal, w.nilpotent_raised, w.nilpotent_ordinary]),
    );
    let cech = CechDatum::new(&two.pair, two.liftings.clone()).map_err(|x| e(&x))?;
    let local = PhiOptions {
        route: PhiRoute::Local,
        ..PhiOptions::default()
    };
    let tampered = PhiOptions {
        tamper: true,
        ..PhiOptions::default()
    };
    let exclusive = PhiOptions {
        bounds: ProductBounds::Exclusive,
        ..PhiOptions::default()
    };
    let chain = |o| verify_chain_map(&two.higgs, &cech, 4, o).map(|r| r.is_chain_map());
    c.record(
        "rank_two chain map, local route",
        json!(true),
        json!(chain(local).map_err(|x| e(&x))?),
    );
    c.record(
        "rank_two chain map, tampered",
        json!(false),
        json!(chain(tampered).map_err(|x| e(&x))?),
    );
    c.record(
        "rank_two chain map, exclusive bounds",
        json!(false),
        json!(chain(exclusive).map_err(|x| e(&x))?),
    );

    let (_, triv) = instance("rank_two_trivial.json")?;
    let a = adaptedness_check(&triv.flat, &triv.filtration).map_err(|x| e(&x))?;
    c.record(
        "trivial filtration: inclusion, strict",
        json!([true, true]),
        json!([a.inclusion(), !a.equal()]),
    );

    let (zs, zero) = instance("zero_field.json")?;
    let higgs = higgs_complex(&zero.higgs)
        .map_err(|x| e(&x))?
        .cohomology_dims();
    let binom = |n: usize, m: usize| (0..m).fold(1usize, |acc, i| acc * (n - i) / (i + 1));
    let expect: Vec<usize> = (0..=zs.n)
        .map(|m| binom(zs.n, m) * (zs.m as usize).pow(zs.n as u32) * zs.rank())
        .collect();
    c.record("zero_field Higgs dims", json!(expect), json!(higgs));
    let zih = intersection_cohomology(&zero.flat, &zero.filtration).map_err(|x| e(&x))?;
    c.record("zero_field IH = H", json!(zih.h()), json!(zih.ih()));

    let (_, sum) = instance("direct_sum.json")?;
    let sih = intersection_cohomology(&sum.flat, &sum.filtration).map_err(|x| e(&x))?;
    let doubled: Vec<usize> = ih.ih().iter().map(|x| 2 * x).collect();
    c.record("direct_sum IH adds", json!(doubled), json!(sih.ih()));
    Ok(())
}

fn oracles(c: &mut Checks) -> Result<(), String> {
    for p in [5u64, 7] {
        let f = FieldSpec::new(p).map_err(|x| x.to_string())?;
        let inc =
            coefficient_consistency(f, 3, ProductBounds::Inclusive).map_err(|x| x.to_string())?;
        let exc =
            coefficient_consistency(f, 2, ProductBounds::Exclusive).map_err(|x| x.to_string())?;
        c.record(
            &format!("coefficient identity p={p}: inclusive holds, exclusive breaks"),
            json!([0, true]),
            json!([inc.len(), !exc.is_empty()]),
        );
    }

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut agree, mut equal) = (0usize, 0usize);
    for trial in 0..200 {
        let p = [3u64, 5, 7][trial % 3];
        let f = FieldSpec::new(p).map_err(|x| x.to_string())?;
        let l = rng.gen_range(1..=3);
        let partition: Vec<usize> = (0..=l).map(|_| rng.gen_range(1..=3)).collect();
        let s = rng.gen_range(0..=l);
        let m = random_special(f, &partition, s, &mut rng);
        let i = rng.gen_range(0..=l);
        let fast = fil_image_exchange(&m, &partition, s, i)
            .map_err(|x| x.to_string())?
            .equal;
        agree += usize::from(fast == exchange_brute_force(&m, &partition, s, i));
        equal += usize::from(fast);
    }
    c.record(
        "exchange on 200 special matrices (agree, equal)",
        json!([200, 200]),
        json!([agree, equal]),
    );

    let f = FieldSpec::new(5).map_err(|x| x.to_string())?;
    let diag = Matrix::identity(f, 2);
    let class = special_triangular_check(&diag, &[1, 1], 1)
        .map_err(|x| x.to_string())?
        .class;
    let ex = fil_image_exchange(&diag, &[1, 1], 1, 0)
        .map_err(|x| x.to_string())?
        .equal;
    c.record(
        "non-special control: class, exchange",
        json!(["triangular", false]),
        json!([class, ex]),
    );

    let fc = nondegenerate_example(f).map_err(|x| x.to_string())?;
    let d = degeneration(&fc, None).map_err(|x| x.to_string())?;
    let e1: usize = d.rows.iter().map(|r| r.e1_total).sum();
    let h: usize = d.rows.iter().map(|r| r.h_dim).sum();
    c.record(
        "crafted complex: E1 total, H total, degenerate",
        json!([2, 0, false]),
        json!([e1, h, d.degenerate]),
    );
    Ok(())
}

/// Replays the corpus, checks pinned values and runs the oracles.
pub fn selftest(opts: RunOptions) -> SuiteReport {
    let start = std::time::Instant::now();
    let mut checks = Checks {
        table: Table::new("selftest", &["check", "expected", "observed", "pass"]),
        failures: Vec::new(),
    };
    let mut rep = SuiteReport::new("selftest");
    let quiet = RunOptions {
        timings: false,
        ..opts
    };
    let outcome = replay_corpus(&mut checks, quiet)
        .and_then(|_| pinned_values(&mut checks))
        .and_then(|_| oracles(&mut checks));
    if let Err(msg) = outcome {
        rep.status = Status::Fail;
        rep.reason = Some(msg);
    }
    if !checks.failures.is_empty() {
        rep.status = Status::Fail;
    }
    rep.witnesses = checks.failures;
    rep.tables.push(checks.table);
    if opts.timings {
        rep.millis = start.elapsed().as_millis() as u64;
    }
    rep
}
