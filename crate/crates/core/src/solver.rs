//! File-based bridge to external MILP/QP solvers.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::program::Program;

/// Default command template for linear programs.
pub const SOLVER_ENV: &str = "EDICR_SOLVER_CMD";
/// Template for quadratic programs; falls back to [`SOLVER_ENV`].
pub const QP_SOLVER_ENV: &str = "EDICR_QP_SOLVER_CMD";

const POLL: Duration = Duration::from_millis(10);

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("command template must contain {{model}} and {{solution}}: {0:?}")]
    Template(String),
    #[error("cannot parse command template: {0}")]
    Split(#[from] shell_words::ParseError),
    #[error("cannot start solver {program:?}: {source}")]
    Spawn { program: String, source: std::io::Error },
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Program(#[from] crate::program::ProgramError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolutionStatus {
    Optimal,
    Feasible,
    Infeasible,
    Unknown,
    Error,
}

impl SolutionStatus {
    pub fn has_values(self) -> bool {
        matches!(self, Self::Optimal | Self::Feasible)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub status: SolutionStatus,
    pub objective: Option<f64>,
    pub values: BTreeMap<String, f64>,
    pub log_path: Option<PathBuf>,
    /// Lines that could not be interpreted.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl Solution {
    fn with_status(status: SolutionStatus) -> Self {
        Self {
            status,
            objective: None,
            values: BTreeMap::new(),
            log_path: None,
            warnings: Vec::new(),
        }
    }

    /// Value of a variable; unlisted variables are 0.
    pub fn value(&self, name: &str) -> f64 {
        self.values.get(name).copied().unwrap_or(0.0)
    }

    /// Values in the program's variable order.
    pub fn values_for(&self, program: &Program) -> Vec<f64> {
        program.variables.iter().map(|v| self.value(&v.name)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dialect {
    /// `name value` lines, optionally preceded by `# status ...` and
    /// `# objective ...` headers.
    Plain,
    /// CBC's `solution` output.
    Cbc,
}

/// Guesses the dialect from the first non-empty line.
pub fn sniff_dialect(text: &str) -> Dialect {
    match text.lines().find(|l| !l.trim().is_empty()) {
        Some(first) if first.contains("objective value") || first.trim_start().starts_with("Infeasible") || first.contains("Stopped") => Dialect::Cbc,
        _ => Dialect::Plain,
    }
}

/// Parses a solution file. Never fails: unreadable input yields status
/// `error`, stray lines become warnings.
pub fn parse_solution(text: &str, dialect: Dialect) -> Solution {
    match dialect {
        Dialect::Plain => parse_plain(text),
        Dialect::Cbc => parse_cbc(text),
    }
}

fn parse_status_word(word: &str) -> Option<SolutionStatus> {
    match word.to_ascii_lowercase().as_str() {
        "optimal" => Some(SolutionStatus::Optimal),
        "feasible" => Some(SolutionStatus::Feasible),
        "infeasible" => Some(SolutionStatus::Infeasible),
        "unknown" => Some(SolutionStatus::Unknown),
        "error" => Some(SolutionStatus::Error),
        _ => None,
    }
}

fn parse_plain(text: &str) -> Solution {
    if text.trim().is_empty() {
        return Solution::with_status(SolutionStatus::Error);
    }
    let mut sol = Solution::with_status(SolutionStatus::Feasible);
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let mut parts = rest.split_whitespace();
            match (parts.next(), parts.next()) {
                (Some("status"), Some(w)) => match parse_status_word(w) {
                    Some(s) => sol.status = s,
                    None => {
                        sol.status = SolutionStatus::Error;
                        sol.warnings.push(format!("unknown status {w:?}"));
                    }
                },
                (Some("objective"), Some(v)) => match v.parse() {
                    Ok(x) => sol.objective = Some(x),
                    Err(_) => sol.warnings.push(format!("bad objective {v:?}")),
                },
                _ => {}
            }
            continue;
        }
        let mut parts = line.split_whitespace();
        match (parts.next(), parts.next().map(str::parse::<f64>), parts.next()) {
            (Some(name), Some(Ok(v)), None) => {
                sol.values.insert(name.to_string(), v);
            }
            _ => sol.warnings.push(format!("ignored line {line:?}")),
        }
    }
    sol
}

fn parse_cbc(text: &str) -> Solution {
    let mut lines = text.lines().skip_while(|l| l.trim().is_empty());
    let Some(header) = lines.next() else {
        return Solution::with_status(SolutionStatus::Error);
    };
    let lower = header.to_ascii_lowercase();
    let status = if lower.starts_with("optimal") {
        SolutionStatus::Optimal
    } else if lower.contains("infeasible") {
        SolutionStatus::Infeasible
    } else if lower.starts_with("stopped") || lower.contains("unbounded") {
        SolutionStatus::Unknown
    } else {
        let mut sol = Solution::with_status(SolutionStatus::Error);
        sol.warnings.push(format!("unrecognized header {header:?}"));
        return sol;
    };
    let mut sol = Solution::with_status(status);
    sol.objective = lower
        .split("objective value")
        .nth(1)
        .and_then(|rest| rest.split_whitespace().next())
        .and_then(|v| v.parse().ok());
    for line in lines {
        let t = line.trim().trim_start_matches("**").trim();
        if t.is_empty() {
            continue;
        }
        let parts: Vec<&str> = t.split_whitespace().collect();
        match parts.as_slice() {
            [idx, name, value, ..] if idx.parse::<usize>().is_ok() => match value.parse::<f64>() {
                Ok(v) => {
                    sol.values.insert(name.to_string(), v);
                }
                Err(_) => sol.warnings.push(format!("ignored line {line:?}")),
            },
            _ => sol.warnings.push(format!("ignored line {line:?}")),
        }
    }
    // a stopped run that still produced an incumbent
    if sol.status == SolutionStatus::Unknown && lower.starts_with("stopped") && !sol.values.is_empty() && !lower.contains("no integer") {
        sol.status = SolutionStatus::Feasible;
    }
    sol
}

/// Template from the environment; the QP variable wins for quadratic programs.
pub fn template_from_env(quadratic: bool) -> Option<String> {
    let get = |k: &str| std::env::var(k).ok().filter(|s| !s.trim().is_empty());
    if quadratic {
        get(QP_SOLVER_ENV).or_else(|| get(SOLVER_ENV))
    } else {
        get(SOLVER_ENV)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SolverError + '_ {
    move |source| SolverError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Runs the solver on `model_path` and reads back its solution.
///
/// The solver writes `<model>.sol.tmp`, which is renamed to `<model>.sol`
/// once it exits; output goes to `<model>.log`. On timeout the process is
/// killed and the status is `unknown`.
pub fn run_solver(model_path: &Path, template: &str, timeout: Option<Duration>) -> Result<Solution, SolverError> {
    if !template.contains("{model}") || !template.contains("{solution}") {
        return Err(SolverError::Template(template.to_string()));
    }
    let model = model_path.to_string_lossy().into_owned();
    let sol_path = PathBuf::from(format!("{model}.sol"));
    let tmp_path = PathBuf::from(format!("{model}.sol.tmp"));
    let log_path = PathBuf::from(format!("{model}.log"));
    for p in [&sol_path, &tmp_path] {
        if p.exists() {
            fs::remove_file(p).map_err(io_err(p))?;
        }
    }
    let tmp = tmp_path.to_string_lossy().into_owned();
    let argv: Vec<String> = shell_words::split(template)?
        .into_iter()
        .map(|w| w.replace("{model}", &model).replace("{solution}", &tmp))
        .collect();
    let (program, args) = argv.split_first().ok_or_else(|| SolverError::Template(template.to_string()))?;

    let log = File::create(&log_path).map_err(io_err(&log_path))?;
    let log_err = log.try_clone().map_err(io_err(&log_path))?;
    let mut child = Command::new(program)
        .args(args)
        .stdin(Stdio::null())
        .stdout(log)
        .stderr(log_err)
        .spawn()
        .map_err(|source| SolverError::Spawn {
            program: program.clone(),
            source,
        })?;

    let start = Instant::now();
    let exit = loop {
        if let Some(status) = child.try_wait().map_err(io_err(&log_path))? {
            break Some(status);
        }
        if timeout.is_some_and(|t| start.elapsed() >= t) {
            let _ = child.kill();
            let _ = child.wait();
            break None;
        }
        std::thread::sleep(POLL);
    };

    let mut sol = match exit {
        None => Solution::with_status(SolutionStatus::Unknown),
        Some(status) => {
            if tmp_path.exists() {
                fs::rename(&tmp_path, &sol_path).map_err(io_err(&sol_path))?;
                let text = fs::read_to_string(&sol_path).map_err(io_err(&sol_path))?;
                parse_solution(&text, sniff_dialect(&text))
            } else if status.success() {
                Solution::with_status(SolutionStatus::Unknown)
            } else {
                Solution::with_status(SolutionStatus::Error)
            }
        }
    };
    sol.log_path = Some(log_path);
    Ok(sol)
}

/// Writes `program` as `<dir>/<stem>.lp` and solves it.
pub fn solve_program(program: &Program, dir: &Path, stem: &str, template: &str, timeout: Option<Duration>) -> Result<Solution, SolverError> {
    let path = dir.join(format!("{stem}.lp"));
    fs::write(&path, program.write_lp()?).map_err(io_err(&path))?;
    run_solver(&path, template, timeout)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cbc_sample() {
        let s = parse_solution("Optimal - objective value 18.6\n0 x_0_3 1 0", Dialect::Cbc);
        assert_eq!(s.status, SolutionStatus::Optimal);
        assert_eq!(s.objective, Some(18.6));
        assert_eq!(s.value("x_0_3"), 1.0);
        assert_eq!(s.value("x_0_4"), 0.0);
    }

    #[test]
    fn cbc_statuses() {
        let s = parse_solution("Infeasible - objective value 0.00000000\n      0 x    2    0\n", Dialect::Cbc);
        assert_eq!(s.status, SolutionStatus::Infeasible);
        let s = parse_solution("Stopped on time - objective value 3\n**   0 x  1  0\n", Dialect::Cbc);
        assert_eq!(s.status, SolutionStatus::Feasible);
        assert_eq!(s.value("x"), 1.0);
        let s = parse_solution("Stopped on time (no integer solution - continuous used) - objective value 3\n0 x 0.5 0\n", Dialect::Cbc);
        assert_eq!(s.status, SolutionStatus::Unknown);
        let s = parse_solution("garbage header\n", Dialect::Cbc);
        assert_eq!(s.status, SolutionStatus::Error);
        assert_eq!(parse_solution("", Dialect::Cbc).status, SolutionStatus::Error);
    }

    #[test]
    fn plain_dialect() {
        assert_eq!(parse_solution("", Dialect::Plain).status, SolutionStatus::Error);
        let s = parse_solution("x_0_1 1\nz_0_1_0 0.6\n", Dialect::Plain);
        assert_eq!(s.status, SolutionStatus::Feasible);
        assert_eq!(s.value("x_0_0"), 0.0);
        assert_eq!(s.value("z_0_1_0"), 0.6);
        let s = parse_solution("# status optimal\n# objective 18.6\nx 1\nthis line is odd\n", Dialect::Plain);
        assert_eq!((s.status, s.objective), (SolutionStatus::Optimal, Some(18.6)));
        assert_eq!(s.warnings.len(), 1);
        assert_eq!(parse_solution("# status infeasible\n", Dialect::Plain).status, SolutionStatus::Infeasible);
    }

    #[test]
    fn sniffing() {
        assert_eq!(sniff_dialect("Optimal - objective value 1\n"), Dialect::Cbc);
        assert_eq!(sniff_dialect("# status optimal\nx 1\n"), Dialect::Plain);
    }

    #[test]
    fn template_must_have_placeholders() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("m.lp");
        assert!(matches!(run_solver(&m, "cbc {model}", None), Err(SolverError::Template(_))));
        assert!(matches!(
            run_solver(&m, "definitely-not-a-solver-xyz {model} {solution}", None),
            Err(SolverError::Spawn { .. })
        ));
    }

    #[test]
    fn fake_solver_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("m.lp");
        fs::write(&m, "x").unwrap();
        let t = "sh -c 'printf \"# status optimal\\n# objective 2\\nx 1\\n\" > \"$1\"' sh {solution} {model}";
        let s = run_solver(&m, t, Some(Duration::from_secs(10))).unwrap();
        assert_eq!(s.status, SolutionStatus::Optimal);
        assert_eq!(s.value("x"), 1.0);
        assert!(dir.path().join("m.lp.sol").exists());
        assert!(!dir.path().join("m.lp.sol.tmp").exists());
    }

    #[test]
    fn failing_solver_is_error_and_timeout_is_unknown() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("m.lp");
        fs::write(&m, "x").unwrap();
        let s = run_solver(&m, "sh -c 'exit 3' {model} {solution}", None).unwrap();
        assert_eq!(s.status, SolutionStatus::Error);

        let start = Instant::now();
        let s = run_solver(&m, "sh -c 'echo partial; sleep 5' {model} {solution}", Some(Duration::from_millis(1))).unwrap();
        assert_eq!(s.status, SolutionStatus::Unknown);
        assert!(start.elapsed() < Duration::from_secs(2));
        let log = fs::read_to_string(s.log_path.unwrap()).unwrap();
        assert!(log.len() <= "partial\n".len());
    }
}
