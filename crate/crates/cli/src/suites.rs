//! The named verification suites, each run against one resolved scenario.

use std::time::Instant;

use serde_json::{json, Value};

use intcoh_core::cartier::{
    cartier_map, cech_total, homotopy_defect, verify_chain_map, weight_bookkeeping, PhiOptions,
};
use intcoh_core::flows::{
    adaptedness_check, e1_degeneration_check, intersection_cohomology, residue_triangularity,
    DegenerationMode,
};
use intcoh_core::modcx::{
    de_rham_complex, fil_image_exchange, higgs_complex, intersection_complex, residue_stratum,
    to_ascending_levels, StrataIndex, Triangularity,
};
use intcoh_core::{BasedComplex, CechDatum};

use crate::report::{Status, SuiteReport, Table};
use crate::scenario::{Instance, Scenario, Suite};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunOptions {
    pub max_dim: u128,
    pub degree_bound: Option<usize>,
    pub tamper: bool,
    pub timings: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            max_dim: 50_000,
            degree_bound: None,
            tamper: false,
            timings: false,
        }
    }
}

/// Number of chart tuples `(α_0 < … < α_q)` over `k` charts.
fn cech_factor(k: usize) -> u128 {
    (1u128 << k) - 1
}

fn euler_ok(c: &BasedComplex) -> bool {
    let h: i64 = c
        .cohomology_dims()
        .iter()
        .enumerate()
        .map(|(m, &d)| if m % 2 == 0 { d as i64 } else { -(d as i64) })
        .sum();
    h == c.euler_characteristic()
}

/// Runs one suite; errors from the core become a failing status with the message.
pub fn run_suite(suite: Suite, s: &Scenario, inst: &Instance, opts: RunOptions) -> SuiteReport {
    let name = suite.name();
    let mut size = s.total_dim();
    if suite == Suite::Cech {
        size *= cech_factor(inst.liftings.len());
    }
    if size > opts.max_dim {
        return SuiteReport::skipped(
            name,
            format!(
                "complex dimension {size} exceeds --max-dim {}",
                opts.max_dim
            ),
        );
    }
    let start = Instant::now();
    let mut rep = SuiteReport::new(name);
    let outcome = match suite {
        Suite::Cohomology => cohomology(inst, &mut rep),
        Suite::Cartier => cartier(inst, &mut rep),
        Suite::Intersection => intersection(inst, &mut rep),
        Suite::Adaptedness => adaptedness(inst, &mut rep),
        Suite::Spectral => spectral(inst, &mut rep),
        Suite::Cech => cech(inst, opts, &mut rep),
        Suite::Residues => residues(inst, &mut rep),
        Suite::Selftest => Err("selftest is run through its own entry point".into()),
    };
    if let Err(msg) = outcome {
        rep.status = Status::Fail;
        rep.reason = Some(msg);
    }
    if opts.timings {
        rep.millis = start.elapsed().as_millis() as u64;
    }
    rep
}

type Outcome = Result<(), String>;

fn err(e: impl ToString) -> String {
    e.to_string()
}

fn cohomology(inst: &Instance, rep: &mut SuiteReport) -> Outcome {
    let complexes = [
        ("higgs", higgs_complex(&inst.higgs).map_err(err)?),
        ("higgs_int", intersection_complex(&inst.higgs).map_err(err)?),
        ("de_rham", de_rham_complex(&inst.flat).map_err(err)?),
        (
            "de_rham_int",
            intersection_complex(&inst.flat).map_err(err)?,
        ),
    ];
    let mut t = Table::new(
        "cohomology dimensions",
        &["m", "higgs", "higgs_int", "de_rham", "de_rham_int"],
    );
    let dims: Vec<Vec<usize>> = complexes.iter().map(|(_, c)| c.cohomology_dims()).collect();
    for m in 0..=inst.pair.n() {
        let mut row = vec![json!(m)];
        row.extend(dims.iter().map(|d| json!(d[m])));
        t.push(row);
    }
    rep.tables.push(t);
    for (label, c) in &complexes {
        rep.require(
            euler_ok(c),
            || json!({"complex": label, "check": "euler characteristic"}),
        );
    }
    Ok(())
}

fn cartier(inst: &Instance, rep: &mut SuiteReport) -> Outcome {
    let e = &inst.higgs;
    let split = cartier_map(e).map_err(err)?;
    let higgs = higgs_complex(e).map_err(err)?.cohomology_dims();
    let higgs_int = intersection_complex(e).map_err(err)?.cohomology_dims();
    let dr = de_rham_complex(&inst.flat).map_err(err)?.cohomology_dims();
    let dr_int = intersection_complex(&inst.flat)
        .map_err(err)?
        .cohomology_dims();
    let en = split.en_complex.cohomology_dims();
    let en_int = split.en_int_complex.cohomology_dims();
    let below = (inst.pair.p() as usize).saturating_sub(e.level());
    let mut t = Table::new(
        "Cartier comparison",
        &[
            "m",
            "checked",
            "higgs",
            "de_rham",
            "higgs_int",
            "de_rham_int",
            "en",
            "en_int",
        ],
    );
    for m in 0..=inst.pair.n() {
        let checked = m < below;
        t.push(vec![
            json!(m),
            json!(checked),
            json!(higgs[m]),
            json!(dr[m]),
            json!(higgs_int[m]),
            json!(dr_int[m]),
            json!(en[m]),
            json!(en_int[m]),
        ]);
        if checked {
            rep.require(
                higgs[m] == dr[m],
                || json!({"degree": m, "higgs": higgs[m], "de_rham": dr[m]}),
            );
            rep.require(
                higgs_int[m] == dr_int[m],
                || json!({"degree": m, "higgs_int": higgs_int[m], "de_rham_int": dr_int[m]}),
            );
        }
        rep.require(
            en[m] == 0 && en_int[m] == 0,
            || json!({"degree": m, "en": en[m], "en_int": en_int[m]}),
        );
    }
    rep.tables.push(t);
    match weight_bookkeeping(&split.pushforward) {
        Ok(w) => {
            let mut t = Table::new(
                "weight bookkeeping",
                &["unit_equal", "nilpotent_raised", "nilpotent_ordinary"],
            );
            t.push(vec![
                json!(w.unit_equal),
                json!(w.nilpotent_raised),
                json!(w.nilpotent_ordinary),
            ]);
            rep.tables.push(t);
        }
        Err(e) => rep.require(false, || json!({"weight_bookkeeping": e.to_string()})),
    }
    Ok(())
}

fn intersection(inst: &Instance, rep: &mut SuiteReport) -> Outcome {
    let ih = intersection_cohomology(&inst.flat, &inst.filtration).map_err(err)?;
    let mut t = Table::new(
        "intersection cohomology",
        &["m", "ih", "h", "map_rank", "hodge"],
    );
    for r in &ih.rows {
        let hodge: Vec<String> = r.hodge.iter().map(usize::to_string).collect();
        t.push(vec![
            json!(r.degree),
            json!(r.ih),
            json!(r.h),
            json!(r.map_rank),
            json!(hodge.join(",")),
        ]);
        rep.require(
            r.map_rank <= r.ih.min(r.h),
            || json!({"degree": r.degree, "map_rank": r.map_rank}),
        );
        rep.require(
            r.hodge.iter().sum::<usize>() == r.ih,
            || json!({"degree": r.degree, "hodge": r.hodge, "ih": r.ih}),
        );
    }
    rep.tables.push(t);
    Ok(())
}

fn adaptedness(inst: &Instance, rep: &mut SuiteReport) -> Outcome {
    let a = adaptedness_check(&inst.flat, &inst.filtration).map_err(err)?;
    let periodic = inst.witness.is_some();
    let mut t = Table::new(
        "adaptedness",
        &["m", "gr_of_int", "int_of_gr", "inclusion", "equal"],
    );
    for r in &a.rows {
        t.push(vec![
            json!(r.degree),
            json!(r.graded_of_intersection),
            json!(r.intersection_of_graded),
            json!(r.inclusion),
            json!(r.equal),
        ]);
        rep.require(
            r.inclusion,
            || json!({"degree": r.degree, "check": "inclusion"}),
        );
    }
    rep.tables.push(t);
    if periodic {
        rep.require(
            a.equal(),
            || json!({"check": "equality", "witness": a.witness}),
        );
    } else if let Some(w) = &a.witness {
        rep.witnesses.push(json!({"strict_inclusion": w}));
    }
    Ok(())
}

fn spectral(inst: &Instance, rep: &mut SuiteReport) -> Outcome {
    for mode in [DegenerationMode::Intersection, DegenerationMode::Full] {
        let d = e1_degeneration_check(&inst.flat, &inst.filtration, mode).map_err(err)?;
        let title = match mode {
            DegenerationMode::Intersection => "E1 degeneration, intersection complex",
            DegenerationMode::Full => "E1 degeneration, full complex",
        };
        let mut t = Table::new(title, &["m", "e1_total", "gr_total", "h"]);
        for r in &d.rows {
            t.push(vec![
                json!(r.degree),
                json!(r.e1_total),
                json!(r.gr_total),
                json!(r.h_dim),
            ]);
        }
        rep.tables.push(t);
        if mode == DegenerationMode::Intersection && inst.witness.is_some() {
            let bad = d.rows.iter().find(|r| r.e1_total != r.gr_total);
            rep.require(bad.is_none(), || json!({"first_nondegenerate_degree": bad}));
        }
    }
    Ok(())
}

fn cech(inst: &Instance, opts: RunOptions, rep: &mut SuiteReport) -> Outcome {
    let e = &inst.higgs;
    let p = inst.pair.p() as usize;
    let limit = p - e.level().max(1);
    let bound = opts.degree_bound.map_or(limit, |b| b.min(limit));
    let cech = CechDatum::new(&inst.pair, inst.liftings.clone()).map_err(err)?;
    let phi_opts = PhiOptions {
        tamper: opts.tamper,
        ..PhiOptions::default()
    };
    let report = verify_chain_map(e, &cech, bound, phi_opts).map_err(err)?;
    let mut t = Table::new("chain map", &["degree", "defects", "intersection_failures"]);
    for &d in &report.degrees {
        t.push(vec![
            json!(d),
            json!(report.defects.iter().filter(|w| w.degree == d).count()),
            json!(report
                .intersection_failures
                .iter()
                .filter(|w| w.0 == d)
                .count()),
        ]);
    }
    rep.tables.push(t);
    rep.require(
        report.is_chain_map(),
        || json!({"defect": report.defects.first()}),
    );
    rep.require(
        report.preserves_intersection(),
        || json!({"intersection_failure": report.intersection_failures.first()}),
    );

    let mut t = Table::new("homotopy", &["chart", "s", "residual_zero"]);
    for c in 1..inst.liftings.len() {
        for s in 0..=inst.pair.n().min(bound.saturating_sub(1)) {
            let h = homotopy_defect(e, &inst.liftings[0], &inst.liftings[c], s, phi_opts)
                .map_err(err)?;
            t.push(vec![json!(c), json!(s), json!(h.is_zero())]);
            rep.require(h.is_zero(), || json!({"homotopy_chart": c, "s": s}));
        }
    }
    rep.tables.push(t);

    let total = cech_total(e, &cech).map_err(err)?;
    let mut t = Table::new(
        "augmentation",
        &["degree", "de_rham", "total", "induced_rank"],
    );
    for row in total.augmentation_check(bound).map_err(err)? {
        t.push(vec![
            json!(row.degree),
            json!(row.de_rham),
            json!(row.total),
            json!(row.induced_rank),
        ]);
        rep.require(
            row.de_rham == row.total && row.total == row.induced_rank,
            || json!(row),
        );
    }
    rep.tables.push(t);
    Ok(())
}

fn residues(inst: &Instance, rep: &mut SuiteReport) -> Outcome {
    let w = inst
        .witness
        .as_ref()
        .ok_or("residues need a from_grading filtration")?;
    let rows = residue_triangularity(w).map_err(err)?;
    let mut t = Table::new(
        "residue triangularity",
        &[
            "stratum",
            "s",
            "class",
            "rank",
            "block_rank_sum",
            "exchange",
        ],
    );
    for row in rows {
        let idx = StrataIndex::new(row.stratum.clone(), inst.pair.r()).map_err(err)?;
        let res = residue_stratum(w.flat(), &idx).map_err(err)?;
        let (m, partition) = to_ascending_levels(&res.closed_point, w.grading());
        let mut exchange = true;
        for i in 0..partition.len() {
            exchange &= fil_image_exchange(&m, &partition, row.s, i)
                .map_err(err)?
                .equal;
        }
        let label: Vec<String> = row.stratum.iter().map(|i| (i + 1).to_string()).collect();
        t.push(vec![
            json!(label.join(",")),
            json!(row.s),
            serde_json::to_value(row.check.class).unwrap_or(Value::Null),
            json!(row.check.rank),
            json!(row.check.block_rank_sum),
            json!(exchange),
        ]);
        rep.require(
            row.check.class == Triangularity::Special,
            || json!({"stratum": row.stratum, "check": row.check}),
        );
        rep.require(
            exchange,
            || json!({"stratum": row.stratum, "check": "exchange"}),
        );
    }
    rep.tables.push(t);
    Ok(())
}

/// Runs the requested suites, optionally on scoped threads; output order
/// follows the request order.
pub fn run_all(
    s: &Scenario,
    inst: &Instance,
    suites: &[Suite],
    opts: RunOptions,
    parallel: bool,
) -> Vec<SuiteReport> {
    if !parallel {
        return suites
            .iter()
            .map(|&x| run_suite(x, s, inst, opts))
            .collect();
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = suites
            .iter()
            .map(|&x| scope.spawn(move || run_suite(x, s, inst, opts)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("suite thread panicked"))
            .collect()
    })
}
