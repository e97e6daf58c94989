use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use d2dcache::exact::check_solution;
use d2dcache::experiments::{
    run_bound_validation, run_method, run_sweep, write_sweep_csv, write_validation_csv, BoundValidationConfig,
    ExperimentSweep, InstanceFile, Method, Scenario, ScenarioConfig, SolutionFile, SWEEP_PARAMETERS,
};
use d2dcache::ilp::{build_ilp, emit_ilp, IlpOptions, DEFAULT_VARIABLE_CAP};
use d2dcache::{Error, SolveLimits};

const EXIT_USAGE: u8 = 1;
const EXIT_LIMIT: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "d2dcache",
    version,
    about = "Joint cache placement and channel allocation experiments"
)]
struct Cli {
    /// Scenario configuration (TOML); the built-in preset when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct InstanceArgs {
    /// Instance written by `generate`; otherwise one is generated from
    /// the configuration and seed.
    #[arg(long)]
    instance: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a network instance with its popularity model.
    Generate,
    /// Sweep one parameter over seeds and methods and write CSV rows.
    Sweep {
        /// Parameter short name (see --list-params).
        #[arg(long, required_unless_present = "list_params")]
        param: Option<String>,
        /// Comma-separated values; preset lists exist for C_U, L, D_th and P_U.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        /// Number of seeds, starting at --seed.
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long, value_delimiter = ',', default_values_t = vec![Method::Heuristic, Method::NoD2d])]
        methods: Vec<Method>,
        #[arg(long, default_value_t = SolveLimits::default().max_states)]
        max_states: f64,
        #[arg(long)]
        list_params: bool,
    },
    /// Compare the delay tail bounds with Monte Carlo estimates.
    ValidateBounds {
        #[arg(long, default_value_t = BoundValidationConfig::default().trials)]
        trials: usize,
        #[arg(long, default_value_t = BoundValidationConfig::default().max_slots)]
        max_slots: u64,
    },
    /// Solve an instance exactly by enumeration.
    SolveExact {
        #[command(flatten)]
        source: InstanceArgs,
        #[arg(long, default_value_t = SolveLimits::default().max_states)]
        max_states: f64,
    },
    /// Run the polygon channel allocation and greedy placement.
    SolveHeuristic {
        #[command(flatten)]
        source: InstanceArgs,
        /// Keep files out of user caches.
        #[arg(long)]
        no_d2d: bool,
    },
    /// Write the 0-1 program in CPLEX LP format.
    EmitIlp {
        #[command(flatten)]
        source: InstanceArgs,
        #[arg(long, default_value_t = DEFAULT_VARIABLE_CAP)]
        max_variables: usize,
    },
    /// Check a solution file against an instance.
    Check {
        #[command(flatten)]
        source: InstanceArgs,
        #[arg(long)]
        solution: PathBuf,
    },
}

fn preset_values(param: &str) -> Option<Vec<f64>> {
    match param {
        "C_U" => Some(vec![0.0, 100.0, 200.0]),
        "L" => Some(vec![50.0, 100.0, 200.0]),
        "D_th" => Some(vec![2.0, 5.0, 11.0]),
        "P_U" => Some((1..=10).map(|k| k as f64 / 10.0).collect()),
        _ => None,
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Infeasible(_) | Error::SearchSpaceTooLarge { .. } | Error::ModelTooLarge { .. } => EXIT_LIMIT,
        Error::InvalidParameter(_)
        | Error::DimensionMismatch(_)
        | Error::ModelParse { .. }
        | Error::TomlDe(_)
        | Error::Io(_) => EXIT_USAGE,
        _ => EXIT_INTERNAL,
    }
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> d2dcache::Result<()> {
    match out {
        Some(p) => fs::write(p, bytes)?,
        None => io::stdout().lock().write_all(bytes)?,
    }
    Ok(())
}

fn load_config(path: Option<&Path>) -> d2dcache::Result<ScenarioConfig> {
    match path {
        Some(p) => ScenarioConfig::from_toml(&fs::read_to_string(p)?),
        None => Ok(ScenarioConfig::default()),
    }
}

fn load_scenario(cli: &Cli, source: &InstanceArgs) -> d2dcache::Result<Scenario> {
    match &source.instance {
        Some(p) => InstanceFile::from_toml(&fs::read_to_string(p)?)?.into_scenario(),
        None => load_config(cli.config.as_deref())?.build(cli.seed),
    }
}

fn solution_output(cli: &Cli, method: Method, scenario: &Scenario, limits: &SolveLimits) -> d2dcache::Result<()> {
    let outcome = run_method(scenario, method, limits)?;
    eprintln!(
        "{}: sdr {:.6}, mean bound {:.4} slots, {:.3} s",
        method, outcome.sdr, outcome.mean_g, outcome.runtime_s
    );
    let file = SolutionFile {
        method: method.name().to_string(),
        sdr: outcome.sdr,
        assignment: outcome.assignment,
    };
    write_output(cli.out.as_deref(), file.to_toml()?.as_bytes())
}

fn run(cli: &Cli) -> d2dcache::Result<u8> {
    match &cli.command {
        Command::Generate => {
            let config = load_config(cli.config.as_deref())?;
            let file = InstanceFile::generate(&config, cli.seed)?;
            write_output(cli.out.as_deref(), file.to_toml()?.as_bytes())?;
        }
        Command::Sweep {
            param,
            values,
            seeds,
            methods,
            max_states,
            list_params,
        } => {
            if *list_params {
                for (name, description) in SWEEP_PARAMETERS {
                    println!("{name:<8} {description}");
                }
                return Ok(0);
            }
            let param = param.as_deref().expect("clap requires --param");
            let values = if values.is_empty() {
                preset_values(param)
                    .ok_or_else(|| Error::InvalidParameter(format!("no preset values for {param}; pass --values")))?
            } else {
                values.clone()
            };
            let mut sweep = ExperimentSweep::new(
                load_config(cli.config.as_deref())?,
                param,
                values,
                (cli.seed..cli.seed + seeds).collect(),
                methods.clone(),
            );
            sweep.limits = SolveLimits {
                max_states: *max_states,
            };
            let result = run_sweep(&sweep)?;
            let mut buf = Vec::new();
            write_sweep_csv(&mut buf, &result)?;
            write_output(cli.out.as_deref(), &buf)?;
        }
        Command::ValidateBounds { trials, max_slots } => {
            let cfg = BoundValidationConfig {
                trials: *trials,
                max_slots: *max_slots,
                seed: cli.seed,
                ..BoundValidationConfig::default()
            };
            let rows = run_bound_validation(&cfg)?;
            let mut buf = Vec::new();
            write_validation_csv(&mut buf, &rows)?;
            write_output(cli.out.as_deref(), &buf)?;
            let flagged = rows.iter().filter(|r| r.flagged).count();
            if flagged > 0 {
                eprintln!("{flagged} of {} grid points violate the bound", rows.len());
                return Ok(EXIT_LIMIT);
            }
        }
        Command::SolveExact { source, max_states } => {
            let scenario = load_scenario(cli, source)?;
            solution_output(
                cli,
                Method::Optimal,
                &scenario,
                &SolveLimits {
                    max_states: *max_states,
                },
            )?;
        }
        Command::SolveHeuristic { source, no_d2d } => {
            let scenario = load_scenario(cli, source)?;
            let method = if *no_d2d { Method::NoD2d } else { Method::Heuristic };
            solution_output(cli, method, &scenario, &SolveLimits::default())?;
        }
        Command::EmitIlp { source, max_variables } => {
            let s = load_scenario(cli, source)?;
            let opts = IlpOptions {
                max_variables: *max_variables,
            };
            let model = match &cli.out {
                Some(p) => emit_ilp(&s.instance, &s.popularity, &s.table, &opts, p)?,
                None => {
                    let model = build_ilp(&s.instance, &s.popularity, &s.table, &opts)?;
                    model.write(io::stdout().lock(), &[])?;
                    model
                }
            };
            eprintln!(
                "{} variables, {} constraints",
                model.num_variables(),
                model.constraints.len()
            );
        }
        Command::Check { source, solution } => {
            let s = load_scenario(cli, source)?;
            let sol = SolutionFile::from_toml(&fs::read_to_string(solution)?)?;
            let report = check_solution(&s.instance, &s.popularity, &s.table, &sol.assignment)?;
            let mut text = String::new();
            for v in &report.violations {
                text.push_str(&format!("violation: {v:?}\n"));
            }
            text.push_str(&format!(
                "violations: {}\nobjective: {}\nimplied objective: {}\nreported sdr: {}\n",
                report.violations.len(),
                report.objective,
                report.implied_objective,
                sol.sdr
            ));
            write_output(cli.out.as_deref(), text.as_bytes())?;
            if !report.is_feasible() {
                return Ok(EXIT_LIMIT);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
