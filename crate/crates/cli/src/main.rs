use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use intcoh::{
    emit_scenario, parse_scenario, run_all, selftest, Instance, Report, RunOptions, Suite,
};

#[derive(Parser, Debug)]
#[command(
    name = "intcoh",
    version,
    about = "Exact F_p checks on log Higgs and de Rham complexes and their intersection subcomplexes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Scenario file (JSON).
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,

    /// Overrides the scenario's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Writes the machine-readable report here.
    #[arg(long, global = true)]
    json: Option<PathBuf>,

    /// Skips a suite whose complex would exceed this total dimension.
    #[arg(long, global = true, default_value_t = 50_000)]
    max_dim: u128,

    /// Caps the degrees checked by the Čech suite.
    #[arg(long, global = true)]
    degree_bound: Option<usize>,

    /// Perturbs the chain-map coefficients (negative control).
    #[arg(long, global = true)]
    tamper: bool,

    /// Records wall time per suite; reports are otherwise reproducible byte for byte.
    #[arg(long, global = true)]
    timings: bool,

    /// Runs suites on separate threads.
    #[arg(long, global = true)]
    parallel: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Cohomology of the Higgs, de Rham and intersection complexes.
    Cohomology,
    /// Cartier comparison, EN exactness and weight bookkeeping.
    Cartier,
    /// Intersection cohomology, its Hodge numbers and the map to H.
    Intersection,
    /// Graded intersection forms against intersection forms of the graded module.
    Adaptedness,
    /// E1 degeneration of the Hodge filtration.
    Spectral,
    /// Chain-map, homotopy and augmentation checks over the scenario's charts.
    Cech,
    /// Residue triangularity and the filtration exchange property.
    Residues,
    /// Replays the bundled corpus and the independent oracles.
    Selftest,
    /// Runs every suite listed in the scenario.
    Run,
    /// Prints the scenario in canonical form.
    Normalize,
}

impl Command {
    fn suite(self) -> Option<Suite> {
        Some(match self {
            Command::Cohomology => Suite::Cohomology,
            Command::Cartier => Suite::Cartier,
            Command::Intersection => Suite::Intersection,
            Command::Adaptedness => Suite::Adaptedness,
            Command::Spectral => Suite::Spectral,
            Command::Cech => Suite::Cech,
            Command::Residues => Suite::Residues,
            Command::Selftest => Suite::Selftest,
            Command::Run | Command::Normalize => return None,
        })
    }
}

const INPUT_ERROR: u8 = 2;

fn execute(cli: &Cli) -> Result<Report> {
    let opts = RunOptions {
        max_dim: cli.max_dim,
        degree_bound: cli.degree_bound,
        tamper: cli.tamper,
        timings: cli.timings,
    };
    if let Command::Selftest = cli.command {
        return Ok(Report::new(None, vec![selftest(opts)]));
    }
    let path = cli
        .scenario
        .as_ref()
        .context("--scenario is required for this command")?;
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut scenario = parse_scenario(&text).with_context(|| format!("in {}", path.display()))?;
    if let Some(seed) = cli.seed {
        scenario.seed = seed;
    }
    let inst = Instance::build(&scenario).with_context(|| format!("in {}", path.display()))?;
    let suites = match cli.command.suite() {
        Some(s) => vec![s],
        None if scenario.suites.is_empty() => Suite::ALL[..7].to_vec(),
        None => scenario.suites.clone(),
    };
    let reports = run_all(&scenario, &inst, &suites, opts, cli.parallel);
    Ok(Report::new(Some(&scenario), reports))
}

fn normalize(cli: &Cli) -> Result<()> {
    let path = cli.scenario.as_ref().context("--scenario is required")?;
    let text = std::fs::read_to_string(path)?;
    let scenario = parse_scenario(&text).with_context(|| format!("in {}", path.display()))?;
    println!("{}", emit_scenario(&scenario));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Command::Normalize = cli.command {
        return match normalize(&cli) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(INPUT_ERROR)
            }
        };
    }
    let report = match execute(&cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(INPUT_ERROR);
        }
    };
    print!("{}", report.render());
    if let Some(path) = &cli.json {
        if let Err(e) = std::fs::write(path, report.to_json()) {
            eprintln!("error: writing {}: {e}", path.display());
            return ExitCode::from(INPUT_ERROR);
        }
    }
    ExitCode::from(report.exit_code() as u8)
}
