//! Scenario files: a JSON description of one module, its liftings and its
//! filtration, plus the suites to run on it.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use intcoh_core::cartier::inverse_cartier;
use intcoh_core::flows::PeriodicWitness;
use intcoh_core::modcx::{levels_from_dims, random_higgs, RingMatrix};
use intcoh_core::{
    FieldSpec, Filtration, FlatModule, HiggsModule, LiftingDatum, LinearModule, RingElement,
    RingPair, SparseVec, Subspace, TruncRing,
};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Cohomology,
    Cartier,
    Intersection,
    Adaptedness,
    Spectral,
    Cech,
    Residues,
    Selftest,
}

impl Suite {
    pub const ALL: [Suite; 8] = [
        Suite::Cohomology,
        Suite::Cartier,
        Suite::Intersection,
        Suite::Adaptedness,
        Suite::Spectral,
        Suite::Cech,
        Suite::Residues,
        Suite::Selftest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Cohomology => "cohomology",
            Suite::Cartier => "cartier",
            Suite::Intersection => "intersection",
            Suite::Adaptedness => "adaptedness",
            Suite::Spectral => "spectral",
            Suite::Cech => "cech",
            Suite::Residues => "residues",
            Suite::Selftest => "selftest",
        }
    }
}

/// One nonzero entry `value · t^exp` at `(row, col)` of a field component.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldEntry {
    pub exp: Vec<u32>,
    pub row: usize,
    pub col: usize,
    pub value: i64,
}

/// One term `value · t^exp` of a ring element.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub exp: Vec<u32>,
    pub value: i64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModuleSpec {
    /// `fields[i]` lists the entries of `Θ_{i+1}`; missing components are zero.
    Explicit {
        rank: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        grading_dims: Option<Vec<usize>>,
        fields: Vec<Vec<FieldEntry>>,
    },
    /// Seeded commuting nilpotent components of level at most `max_level`.
    Random { rank: usize, max_level: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FiltrationSpec {
    /// Levels of the grading, pulled back to the inverse Cartier transform.
    FromGrading,
    Trivial,
    /// `steps[q]` generates `Fil^{q+1}`; each generator is a sparse list of
    /// `(index, value)` pairs in the coordinates of `H`.
    Explicit {
        steps: Vec<Vec<Vec<(usize, i64)>>>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub format_version: u32,
    #[serde(default)]
    pub name: String,
    pub p: u64,
    pub n: usize,
    pub r: usize,
    #[serde(rename = "M")]
    pub m: u32,
    pub module: ModuleSpec,
    /// Deviations `c_1..c_n` of the non-standard charts; chart 0 is standard.
    #[serde(default)]
    pub charts: Vec<Vec<Vec<Term>>>,
    pub filtration: FiltrationSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub suites: Vec<Suite>,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{key}: {message}")]
    Invalid { key: String, message: String },
}

fn invalid(key: impl Into<String>, message: impl ToString) -> ScenarioError {
    ScenarioError::Invalid {
        key: key.into(),
        message: message.to_string(),
    }
}

pub type Result<T> = std::result::Result<T, ScenarioError>;

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let s: Scenario = serde_json::from_str(text).map_err(|e| ScenarioError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    s.validate()?;
    Ok(s)
}

/// Canonical pretty JSON.
pub fn emit_scenario(s: &Scenario) -> String {
    serde_json::to_string_pretty(s).expect("scenario serializes")
}

fn check_exp(key: &str, exp: &[u32], n: usize, bound: u32) -> Result<()> {
    if exp.len() != n {
        return Err(invalid(key, format!("{} exponents for n = {n}", exp.len())));
    }
    if let Some(&e) = exp.iter().find(|&&e| e >= bound) {
        return Err(invalid(
            key,
            format!("exponent {e} reaches the truncation {bound}"),
        ));
    }
    Ok(())
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(invalid(
                "format_version",
                format!("expected {FORMAT_VERSION}, found {}", self.format_version),
            ));
        }
        FieldSpec::new(self.p).map_err(|e| invalid("p", e))?;
        if self.n == 0 {
            return Err(invalid("n", "at least one coordinate is required"));
        }
        if self.r > self.n {
            return Err(invalid("r", format!("{} exceeds n = {}", self.r, self.n)));
        }
        if self.m == 0 {
            return Err(invalid("M", "truncation must be positive"));
        }
        let pm = self
            .p
            .checked_mul(u64::from(self.m))
            .and_then(|x| u32::try_from(x).ok())
            .ok_or_else(|| invalid("M", "p·M does not fit the upstairs truncation"))?;
        match &self.module {
            ModuleSpec::Explicit {
                rank,
                grading_dims,
                fields,
            } => {
                if *rank == 0 {
                    return Err(invalid("module.rank", "rank must be positive"));
                }
                if let Some(g) = grading_dims {
                    if g.iter().sum::<usize>() != *rank {
                        return Err(invalid(
                            "module.grading_dims",
                            format!("dims sum to {}, rank is {rank}", g.iter().sum::<usize>()),
                        ));
                    }
                }
                if fields.len() > self.n {
                    return Err(invalid(
                        "module.fields",
                        format!("{} components for n = {}", fields.len(), self.n),
                    ));
                }
                for (i, comp) in fields.iter().enumerate() {
                    for (k, e) in comp.iter().enumerate() {
                        let key = format!("module.fields[{i}][{k}]");
                        if e.row >= *rank || e.col >= *rank {
                            return Err(invalid(
                                key,
                                format!("entry ({}, {}) outside rank {rank}", e.row, e.col),
                            ));
                        }
                        check_exp(&format!("{key}.exp"), &e.exp, self.n, self.m)?;
                    }
                }
            }
            ModuleSpec::Random { rank, .. } => {
                if *rank == 0 {
                    return Err(invalid("module.rank", "rank must be positive"));
                }
            }
        }
        for (c, chart) in self.charts.iter().enumerate() {
            if chart.len() != self.n {
                return Err(invalid(
                    format!("charts[{c}]"),
                    format!("{} deviations for n = {}", chart.len(), self.n),
                ));
            }
            for (i, terms) in chart.iter().enumerate() {
                for (k, t) in terms.iter().enumerate() {
                    check_exp(&format!("charts[{c}][{i}][{k}].exp"), &t.exp, self.n, pm)?;
                }
            }
        }
        if self.suites.contains(&Suite::Selftest) {
            return Err(invalid("suites", "selftest runs on its own corpus"));
        }
        Ok(())
    }

    pub fn pair(&self) -> Result<RingPair> {
        let f = FieldSpec::new(self.p).map_err(|e| invalid("p", e))?;
        RingPair::new(f, self.n, self.r, self.m).map_err(|e| invalid("M", e))
    }

    pub fn rank(&self) -> usize {
        match &self.module {
            ModuleSpec::Explicit { rank, .. } | ModuleSpec::Random { rank, .. } => *rank,
        }
    }

    /// Total dimension of the upstairs de Rham complex.
    pub fn total_dim(&self) -> u128 {
        let up = (self.p as u128 * u128::from(self.m)).pow(self.n as u32);
        up * self.rank() as u128 * (1u128 << self.n)
    }

    pub fn higgs(&self, pair: &RingPair) -> Result<HiggsModule> {
        let down: &Arc<TruncRing> = pair.down();
        match &self.module {
            ModuleSpec::Explicit {
                rank,
                grading_dims,
                fields,
            } => {
                let mut comps = Vec::with_capacity(self.n);
                for i in 0..self.n {
                    let mut entries = vec![RingElement::zero(down); rank * rank];
                    for e in fields.get(i).map(Vec::as_slice).unwrap_or(&[]) {
                        let term = RingElement::from_terms(down, &[(e.exp.clone(), e.value)])
                            .map_err(|err| invalid(format!("module.fields[{i}]"), err))?;
                        let slot = &mut entries[e.row * rank + e.col];
                        *slot = slot
                            .add(&term)
                            .map_err(|err| invalid(format!("module.fields[{i}]"), err))?;
                    }
                    comps.push(
                        RingMatrix::from_entries(down, *rank, entries)
                            .map_err(|err| invalid("module.fields", err))?,
                    );
                }
                let grading = grading_dims.as_deref().map(levels_from_dims);
                HiggsModule::new(down, *rank, comps, grading).map_err(|e| invalid("module", e))
            }
            ModuleSpec::Random { rank, max_level } => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                random_higgs(down, *rank, *max_level, &mut rng).map_err(|e| invalid("module", e))
            }
        }
    }

    /// Chart 0 (standard) followed by the listed charts.
    pub fn liftings(&self, pair: &RingPair) -> Result<Vec<LiftingDatum>> {
        let mut out = vec![LiftingDatum::standard(pair)];
        for (c, chart) in self.charts.iter().enumerate() {
            let dev = chart
                .iter()
                .map(|terms| {
                    let t: Vec<(Vec<u32>, i64)> =
                        terms.iter().map(|t| (t.exp.clone(), t.value)).collect();
                    RingElement::from_terms(pair.up(), &t)
                })
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| invalid(format!("charts[{c}]"), e))?;
            out.push(LiftingDatum::new(pair, dev).map_err(|e| invalid(format!("charts[{c}]"), e))?);
        }
        Ok(out)
    }
}

/// A scenario resolved into its algebraic objects.
#[derive(Clone, Debug)]
pub struct Instance {
    pub pair: RingPair,
    pub higgs: HiggsModule,
    pub flat: FlatModule,
    pub filtration: Filtration,
    pub witness: Option<PeriodicWitness>,
    pub liftings: Vec<LiftingDatum>,
}

impl Instance {
    pub fn build(s: &Scenario) -> Result<Self> {
        let pair = s.pair()?;
        let higgs = s.higgs(&pair)?;
        let liftings = s.liftings(&pair)?;
        let (flat, filtration, witness) = match &s.filtration {
            FiltrationSpec::FromGrading => {
                let w =
                    PeriodicWitness::from_graded(&higgs).map_err(|e| invalid("filtration", e))?;
                (w.flat().clone(), w.filtration().clone(), Some(w))
            }
            FiltrationSpec::Trivial => {
                let h = inverse_cartier(&higgs, &LiftingDatum::standard(&pair))
                    .map_err(|e| invalid("module", e))?;
                let fil = Filtration::trivial(&h);
                (h, fil, None)
            }
            FiltrationSpec::Explicit { steps } => {
                let h = inverse_cartier(&higgs, &LiftingDatum::standard(&pair))
                    .map_err(|e| invalid("module", e))?;
                let (f, d) = (h.field(), h.dim());
                let mut subs = vec![Subspace::full(f, d)];
                for (q, gens) in steps.iter().enumerate() {
                    let mut vecs = Vec::with_capacity(gens.len());
                    for (g, entries) in gens.iter().enumerate() {
                        if let Some(&(i, _)) = entries.iter().find(|&&(i, _)| i >= d) {
                            return Err(invalid(
                                format!("filtration.steps[{q}][{g}]"),
                                format!("index {i} outside dimension {d}"),
                            ));
                        }
                        let e = entries.iter().map(|&(i, v)| (i, f.from_i64(v))).collect();
                        vecs.push(SparseVec::from_entries(f, e));
                    }
                    subs.push(Subspace::span(f, d, vecs));
                }
                let fil = Filtration::new(&h, subs).map_err(|e| invalid("filtration", e))?;
                (h, fil, None)
            }
        };
        Ok(Instance {
            pair,
            higgs,
            flat,
            filtration,
            witness,
            liftings,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "format_version": 1, "p": 3, "n": 1, "r": 1, "M": 1,
        "module": {"kind": "explicit", "rank": 1, "fields": []},
        "filtration": {"kind": "trivial"}
    }"#;

    #[test]
    fn minimal_scenario_parses() {
        let s = parse_scenario(MINIMAL).unwrap();
        assert_eq!(s.rank(), 1);
        let inst = Instance::build(&s).unwrap();
        assert_eq!(inst.flat.dim(), 3);
        assert_eq!(inst.liftings.len(), 1);
    }

    #[test]
    fn non_prime_is_rejected() {
        let err = parse_scenario(&MINIMAL.replace("\"p\": 3", "\"p\": 4")).unwrap_err();
        assert!(err.to_string().contains("p not prime"), "{err}");
        assert!(err.to_string().starts_with("p:"));
    }

    #[test]
    fn syntax_errors_carry_a_location() {
        match parse_scenario("{\n  \"p\": 3,,\n}") {
            Err(ScenarioError::Syntax { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bounds_are_checked() {
        let bad = MINIMAL.replace(
            "\"fields\": []",
            "\"fields\": [[{\"exp\": [0], \"row\": 1, \"col\": 0, \"value\": 1}]]",
        );
        let err = parse_scenario(&bad).unwrap_err();
        assert!(err.to_string().starts_with("module.fields[0][0]"), "{err}");
        let bad = MINIMAL.replace("\"format_version\": 1", "\"format_version\": 2");
        assert!(parse_scenario(&bad)
            .unwrap_err()
            .to_string()
            .starts_with("format_version"));
    }

    #[test]
    fn chart_exponents_respect_pm() {
        let ok = MINIMAL.replace(
            "\"filtration\"",
            "\"charts\": [[[{\"exp\": [2], \"value\": 1}]]], \"filtration\"",
        );
        assert!(parse_scenario(&ok).is_ok());
        let bad = ok.replace("\"exp\": [2]", "\"exp\": [3]");
        assert!(parse_scenario(&bad)
            .unwrap_err()
            .to_string()
            .starts_with("charts[0][0][0]"));
    }
}
