mod bench;
mod check;
mod sizes;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use edicr_core::formulations::build_qp2;
use edicr_core::histories::{policy_from_json, policy_to_json};
use edicr_core::policy_tools::{audit_solution, extract_policy};
use edicr_core::solver::{solve_program, template_from_env, SOLVER_ENV};
use edicr_core::{build, generate_rovers, parse_instance, Compiled, Evaluator, FormulationKind, Instance, RoverParams};

use crate::sizes::SizeRow;

#[derive(Parser)]
#[command(name = "edicr", version, about = "Compile, solve and audit EDI-CR planning programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Formulation {
    Qp2,
    #[value(alias = "decmdp_milp")]
    Decmdp,
    #[value(alias = "edicr_milp2")]
    Edicr2,
    #[value(alias = "edicr_milp_n")]
    Edicrn,
}

impl From<Formulation> for FormulationKind {
    fn from(f: Formulation) -> Self {
        match f {
            Formulation::Qp2 => Self::Qp2,
            Formulation::Decmdp => Self::DecmdpMilp,
            Formulation::Edicr2 => Self::EdicrMilp2,
            Formulation::Edicrn => Self::EdicrMilpN,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a rover instance
    Gen {
        #[arg(long, default_value_t = 2)]
        agents: usize,
        #[arg(long, default_value_t = 3)]
        sites: usize,
        #[arg(long, default_value_t = 3)]
        horizon: usize,
        #[arg(long, default_value_t = 2)]
        rho: usize,
        #[arg(long, default_value_t = 2)]
        tau: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Output file (stdout if omitted)
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Print history, bin and constraint counts
    Inspect {
        instance: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Write the LP file and variable map of a formulation
    Compile {
        instance: PathBuf,
        #[arg(long, value_enum)]
        formulation: Formulation,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        map: Option<PathBuf>,
        /// Continuous terminal weights (qp2 only)
        #[arg(long)]
        continuous: bool,
    },
    /// Compile, run an external solver, extract the policy and audit it
    Solve {
        instance: PathBuf,
        #[arg(long, value_enum)]
        formulation: Formulation,
        /// Command template with {model} and {solution} placeholders
        #[arg(long)]
        solver_cmd: Option<String>,
        /// Time limit in seconds
        #[arg(long)]
        timeout: Option<f64>,
        /// Directory for the model, solution and log files
        #[arg(long)]
        workdir: Option<PathBuf>,
        /// Write the extracted policy here
        #[arg(long)]
        policy_out: Option<PathBuf>,
    },
    /// Exact expected reward of a policy file
    Eval {
        instance: PathBuf,
        #[arg(long)]
        policy: PathBuf,
    },
    /// Solver-free verification of bins and programs
    Check {
        instance: PathBuf,
        /// Skip the policy sweep above this many pure joint policies
        #[arg(long, default_value_t = 1_000_000)]
        max_policies: u128,
    },
    /// Generate groups of instances and report mean sizes
    Bench {
        #[arg(long)]
        params_file: PathBuf,
        /// Also print one row per instance
        #[arg(long)]
        per_instance: bool,
        #[arg(long)]
        json: bool,
    },
}

fn load_instance(path: &Path) -> Result<Instance> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_instance(&text).with_context(|| format!("parsing {}", path.display()))
}

fn instance_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> Result<()> {
    let mut out = io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn emit_line(text: &str) -> Result<()> {
    emit(&format!("{text}\n"))
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => emit(text),
    }
}

fn compile(ev: &Evaluator, f: Formulation, continuous: bool) -> Result<Compiled> {
    let kind = FormulationKind::from(f);
    if continuous && kind != FormulationKind::Qp2 {
        bail!("--continuous only applies to qp2");
    }
    let c = if continuous { build_qp2(ev, true)? } else { build(kind, ev)? };
    Ok(c)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Gen {
            agents,
            sites,
            horizon,
            rho,
            tau,
            seed,
            output,
        } => {
            let params = RoverParams {
                n_agents: agents,
                sites,
                horizon,
                n_rho: rho,
                n_tau: tau,
                seed,
                ..RoverParams::default()
            };
            let inst = generate_rovers(&params)?;
            write_or_print(output.as_deref(), &inst.to_json())?;
        }
        Command::Inspect { instance, json } => {
            let inst = load_instance(&instance)?;
            let row = SizeRow::compute(&instance_name(&instance), &inst)?;
            if json {
                emit_line(&serde_json::to_string_pretty(&row)?)?;
            } else {
                emit_line(&SizeRow::header(row.terminals.len()))?;
                emit_line(&row.tsv())?;
            }
        }
        Command::Compile {
            instance,
            formulation,
            output,
            map,
            continuous,
        } => {
            let inst = load_instance(&instance)?;
            let ev = Evaluator::new(&inst)?;
            let c = compile(&ev, formulation, continuous)?;
            let lp = c.program.write_lp()?;
            fs::write(&output, lp).with_context(|| format!("writing {}", output.display()))?;
            if let Some(map) = map {
                let meta = c.program.metadata()?.to_json();
                fs::write(&map, meta).with_context(|| format!("writing {}", map.display()))?;
            }
            emit_line(&serde_json::to_string_pretty(&c.program.stats()?)?)?;
        }
        Command::Solve {
            instance,
            formulation,
            solver_cmd,
            timeout,
            workdir,
            policy_out,
        } => {
            let inst = load_instance(&instance)?;
            let ev = Evaluator::new(&inst)?;
            let c = compile(&ev, formulation, false)?;
            let template = solver_cmd
                .or_else(|| template_from_env(c.kind.is_quadratic()))
                .with_context(|| format!("no solver configured: pass --solver-cmd or set {SOLVER_ENV}"))?;
            let timeout = match timeout {
                Some(s) if !(s.is_finite() && s > 0.0) => bail!("--timeout must be a positive number of seconds"),
                other => other.map(Duration::from_secs_f64),
            };
            let dir = workdir.unwrap_or_else(|| std::env::temp_dir().join(format!("edicr-{}", std::process::id())));
            fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            let stem = format!("{}_{}", instance_name(&instance), c.kind.name());
            let solution = solve_program(&c.program, &dir, &stem, &template, timeout)?;
            if !solution.status.has_values() {
                let log = solution.log_path.as_ref().map_or_else(String::new, |p| format!("; log at {}", p.display()));
                bail!("solver finished with status {:?}{log}", solution.status);
            }
            for w in &solution.warnings {
                eprintln!("warning: {w}");
            }
            let report = audit_solution(&ev, &c, &solution)?;
            if let Some(path) = policy_out {
                let meta = c.program.metadata()?;
                let policy = extract_policy(&inst, ev.trees(), &solution, &meta)?;
                fs::write(&path, policy_to_json(&inst, ev.trees(), &policy)).with_context(|| format!("writing {}", path.display()))?;
            }
            emit_line(&report.to_json())?;
        }
        Command::Eval { instance, policy } => {
            let inst = load_instance(&instance)?;
            let ev = Evaluator::new(&inst)?;
            let text = fs::read_to_string(&policy).with_context(|| format!("reading {}", policy.display()))?;
            let pol = policy_from_json(&inst, ev.trees(), &text)?;
            let value = ev.evaluate_policy(&pol)?;
            emit_line(&serde_json::json!({ "value": value }).to_string())?;
        }
        Command::Check { instance, max_policies } => {
            let inst = load_instance(&instance)?;
            let out = check::run(&inst, max_policies)?;
            for line in &out.lines {
                emit_line(line)?;
            }
            emit_line(if out.failed { "FAIL" } else { "PASS" })?;
            return Ok(!out.failed);
        }
        Command::Bench {
            params_file,
            per_instance,
            json,
        } => {
            let text = fs::read_to_string(&params_file).with_context(|| format!("reading {}", params_file.display()))?;
            let file = bench::BenchFile::parse(&text).with_context(|| format!("parsing {}", params_file.display()))?;
            let report = bench::run(&file)?;
            if json {
                emit_line(&serde_json::to_string_pretty(&report)?)?;
            } else {
                emit(&report.tsv(per_instance))?;
            }
        }
    }
    Ok(true)
}

fn diagnostic(kind: &str, message: &str, causes: Vec<String>) {
    let line = serde_json::json!({ "error": { "kind": kind, "message": message, "causes": causes } });
    eprintln!("{line}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            diagnostic("usage", e.render().to_string().trim_end(), Vec::new());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            let causes = e.chain().skip(1).map(|c| c.to_string()).collect();
            diagnostic("operational", &e.to_string(), causes);
            ExitCode::from(1)
        }
    }
}
