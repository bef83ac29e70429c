//! Solver-agnostic program representation and LP-format output.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Coefficients with smaller magnitude are dropped from constraints.
pub const COEF_EPS: f64 = 1e-15;

const LINE_WIDTH: usize = 200;

#[derive(Debug, Error)]
pub enum ProgramError {
    #[error("duplicate variable name {0}")]
    DuplicateVariable(String),
    #[error("illegal LP name {0:?}")]
    IllegalName(String),
    #[error("variable {0} has no role metadata")]
    MissingMetadata(String),
    #[error("metadata: {0}")]
    Metadata(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrality {
    Continuous,
    Binary,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub integrality: Integrality,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Eq,
    Le,
    Ge,
}

impl Sense {
    fn symbol(self) -> &'static str {
        match self {
            Sense::Eq => "=",
            Sense::Le => "<=",
            Sense::Ge => ">=",
        }
    }
}

/// What a constraint is for; used for size accounting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintRole {
    /// Sequence-form policy constraints.
    Policy,
    /// Ties compound variables of one history to its `x`.
    Linking,
    /// Total count of compound variables (pairwise formulation only).
    Counting,
    /// Upper bound on a compound variable.
    Bound,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
    pub role: ConstraintRole,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum VarRole {
    /// Realization weight of a terminal history.
    Terminal { agent: usize, history: usize },
    /// Realization weight of a non-terminal history (tree node id).
    NonTerminal { agent: usize, node: usize },
    /// Compound variable of a history and one of its bins.
    Compound { agent: usize, history: usize, bin: usize },
    /// Compound variable of a pair of terminal histories.
    Pair { hi: usize, hj: usize },
}

/// Maximization program with a linear-plus-quadratic objective.
#[derive(Clone, Debug, Default)]
pub struct Program {
    pub formulation: String,
    pub num_agents: usize,
    pub variables: Vec<Variable>,
    pub roles: Vec<Option<VarRole>>,
    pub linear: Vec<(usize, f64)>,
    /// `(u, v, c)` contributes `c * u * v`.
    pub quadratic: Vec<(usize, usize, f64)>,
    pub constraints: Vec<Constraint>,
    index: HashMap<String, usize>,
}

fn legal_name(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    name.len() <= 255 && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

impl Program {
    pub fn new(formulation: impl Into<String>, num_agents: usize) -> Self {
        Self {
            formulation: formulation.into(),
            num_agents,
            ..Self::default()
        }
    }

    pub fn add_variable(&mut self, name: String, lower: f64, upper: f64, integrality: Integrality, role: Option<VarRole>) -> Result<usize, ProgramError> {
        if !legal_name(&name) {
            return Err(ProgramError::IllegalName(name));
        }
        if self.index.contains_key(&name) {
            return Err(ProgramError::DuplicateVariable(name));
        }
        let id = self.variables.len();
        self.index.insert(name.clone(), id);
        self.variables.push(Variable {
            name,
            lower,
            upper,
            integrality,
        });
        self.roles.push(role);
        Ok(id)
    }

    pub fn var(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn add_objective(&mut self, var: usize, coef: f64) {
        if coef != 0.0 {
            self.linear.push((var, coef));
        }
    }

    pub fn add_quadratic(&mut self, u: usize, v: usize, coef: f64) {
        if coef != 0.0 {
            self.quadratic.push((u, v, coef));
        }
    }

    /// Adds a constraint, dropping near-zero coefficients. Returns its index.
    pub fn add_constraint(&mut self, name: String, terms: Vec<(usize, f64)>, sense: Sense, rhs: f64, role: ConstraintRole) -> Result<usize, ProgramError> {
        if !legal_name(&name) {
            return Err(ProgramError::IllegalName(name));
        }
        let terms = terms.into_iter().filter(|&(_, c)| c.abs() >= COEF_EPS).collect();
        self.constraints.push(Constraint {
            name,
            terms,
            sense,
            rhs,
            role,
        });
        Ok(self.constraints.len() - 1)
    }

    pub fn num_binaries(&self) -> usize {
        self.variables.iter().filter(|v| v.integrality == Integrality::Binary).count()
    }

    /// Objective at a full assignment of variable values.
    pub fn objective_value(&self, values: &[f64]) -> f64 {
        let lin: f64 = self.linear.iter().map(|&(v, c)| c * values[v]).sum();
        let quad: f64 = self.quadratic.iter().map(|&(u, v, c)| c * values[u] * values[v]).sum();
        lin + quad
    }

    /// Bound, integrality and constraint violations larger than `tol`.
    pub fn violations(&self, values: &[f64], tol: f64) -> Vec<Violation> {
        let mut out = Vec::new();
        for (v, var) in self.variables.iter().enumerate() {
            let x = values[v];
            let amount = (var.lower - x).max(x - var.upper).max(0.0);
            if amount > tol {
                out.push(Violation {
                    name: var.name.clone(),
                    amount,
                });
            }
            if var.integrality == Integrality::Binary {
                let frac = (x - x.round()).abs();
                if frac > tol {
                    out.push(Violation {
                        name: format!("{} (integrality)", var.name),
                        amount: frac,
                    });
                }
            }
        }
        for c in &self.constraints {
            let lhs: f64 = c.terms.iter().map(|&(v, a)| a * values[v]).sum();
            let amount = match c.sense {
                Sense::Eq => (lhs - c.rhs).abs(),
                Sense::Le => (lhs - c.rhs).max(0.0),
                Sense::Ge => (c.rhs - lhs).max(0.0),
            };
            if amount > tol {
                out.push(Violation {
                    name: c.name.clone(),
                    amount,
                });
            }
        }
        out
    }

    pub fn stats(&self) -> Result<ProgramStats, ProgramError> {
        let mut terminal_counts = vec![0; self.num_agents];
        let mut compound = 0;
        for (var, role) in self.variables.iter().zip(&self.roles) {
            match role.ok_or_else(|| ProgramError::MissingMetadata(var.name.clone()))? {
                VarRole::Terminal { agent, .. } => {
                    if agent >= terminal_counts.len() {
                        terminal_counts.resize(agent + 1, 0);
                    }
                    terminal_counts[agent] += 1;
                }
                VarRole::Compound { .. } | VarRole::Pair { .. } => compound += 1,
                VarRole::NonTerminal { .. } => {}
            }
        }
        let count = |f: &dyn Fn(ConstraintRole) -> bool| self.constraints.iter().filter(|c| f(c.role)).count();
        let policy_constraints = count(&|r| r == ConstraintRole::Policy);
        let non_policy_constraints = count(&|r| r != ConstraintRole::Policy);
        let counting = count(&|r| r == ConstraintRole::Counting);
        Ok(ProgramStats {
            formulation: self.formulation.clone(),
            terminal_counts,
            compound_variables: compound,
            policy_constraints,
            non_policy_constraints,
            non_policy_without_counting: non_policy_constraints - counting,
            binaries: self.num_binaries(),
            variables: self.variables.len(),
            quadratic_terms: self.quadratic.len(),
        })
    }

    /// Sidecar mapping every variable to its meaning.
    pub fn metadata(&self) -> Result<Metadata, ProgramError> {
        let variables = self
            .variables
            .iter()
            .zip(&self.roles)
            .map(|(v, r)| {
                r.map(|role| VariableMeta {
                    name: v.name.clone(),
                    role,
                })
                .ok_or_else(|| ProgramError::MissingMetadata(v.name.clone()))
            })
            .collect::<Result<_, _>>()?;
        Ok(Metadata {
            formulation: self.formulation.clone(),
            num_agents: self.num_agents,
            variables,
        })
    }

    /// Deterministic LP-format text.
    pub fn write_lp(&self) -> Result<String, ProgramError> {
        for v in &self.variables {
            if !legal_name(&v.name) {
                return Err(ProgramError::IllegalName(v.name.clone()));
            }
        }
        let name = |v: usize| self.variables[v].name.as_str();
        let mut out = String::new();
        let _ = writeln!(out, "\\ {} program", if self.formulation.is_empty() { "unnamed" } else { &self.formulation });
        if !self.quadratic.is_empty() {
            out.push_str("\\ quadratic objective terms are written as [ 2c u * v ] / 2 for c u v\n");
        }
        out.push_str("Maximize\n");

        let mut obj = Line::new(" obj:");
        for &(v, c) in &self.linear {
            obj.term(c, name(v));
        }
        if !self.quadratic.is_empty() {
            obj.push(if self.linear.is_empty() { "[" } else { "+ [" });
            let mut first = true;
            for &(u, v, c) in &self.quadratic {
                let product = if u == v {
                    format!("{} ^ 2", name(u))
                } else {
                    format!("{} * {}", name(u), name(v))
                };
                obj.push(&signed(2.0 * c, &product, first));
                first = false;
            }
            obj.push("] / 2");
        }
        if self.linear.is_empty() && self.quadratic.is_empty() && !self.variables.is_empty() {
            obj.term(0.0, name(0));
        }
        out.push_str(&obj.finish());

        out.push_str("Subject To\n");
        for c in &self.constraints {
            let mut line = Line::new(&format!(" {}:", c.name));
            for &(v, a) in &c.terms {
                line.term(a, name(v));
            }
            if c.terms.is_empty() && !self.variables.is_empty() {
                line.term(0.0, name(0));
            }
            line.push(c.sense.symbol());
            line.push(&fmt_g17(c.rhs));
            out.push_str(&line.finish());
        }

        out.push_str("Bounds\n");
        for v in &self.variables {
            let (lo, hi) = (v.lower, v.upper);
            let _ = match (lo.is_finite(), hi.is_finite()) {
                (true, true) => writeln!(out, " {} <= {} <= {}", fmt_g17(lo), v.name, fmt_g17(hi)),
                (true, false) => writeln!(out, " {} >= {}", v.name, fmt_g17(lo)),
                (false, true) => writeln!(out, " -inf <= {} <= {}", v.name, fmt_g17(hi)),
                (false, false) => writeln!(out, " {} free", v.name),
            };
        }

        let binaries: Vec<&str> = self
            .variables
            .iter()
            .filter(|v| v.integrality == Integrality::Binary)
            .map(|v| v.name.as_str())
            .collect();
        if !binaries.is_empty() {
            out.push_str("Binaries\n");
            let mut line = Line::new(" ");
            for b in binaries {
                line.push(b);
            }
            out.push_str(&line.finish());
        }
        out.push_str("End\n");
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub name: String,
    pub amount: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramStats {
    pub formulation: String,
    pub terminal_counts: Vec<usize>,
    pub compound_variables: usize,
    pub policy_constraints: usize,
    pub non_policy_constraints: usize,
    /// Non-policy constraints excluding the total-count constraint.
    pub non_policy_without_counting: usize,
    pub binaries: usize,
    pub variables: usize,
    pub quadratic_terms: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableMeta {
    pub name: String,
    #[serde(flatten)]
    pub role: VarRole,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metadata {
    pub formulation: String,
    pub num_agents: usize,
    pub variables: Vec<VariableMeta>,
}

impl Metadata {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metadata serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ProgramError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn role_of(&self) -> HashMap<&str, VarRole> {
        self.variables.iter().map(|v| (v.name.as_str(), v.role)).collect()
    }
}

/// Accumulates tokens, wrapping long lines with a leading-space continuation.
struct Line {
    lines: Vec<String>,
    current: String,
    empty: bool,
}

impl Line {
    fn new(head: &str) -> Self {
        Self {
            lines: Vec::new(),
            current: head.to_string(),
            empty: true,
        }
    }

    fn push(&mut self, token: &str) {
        if self.current.len() + 1 + token.len() > LINE_WIDTH && !self.current.trim().is_empty() {
            self.lines.push(std::mem::replace(&mut self.current, String::from(" ")));
        }
        if !self.current.is_empty() && !self.current.ends_with(' ') {
            self.current.push(' ');
        }
        self.current.push_str(token);
    }

    fn term(&mut self, coef: f64, name: &str) {
        let first = self.empty;
        self.empty = false;
        self.push(&signed(coef, name, first));
    }

    fn finish(mut self) -> String {
        self.lines.push(self.current);
        let mut s = self.lines.join("\n");
        s.push('\n');
        s
    }
}

fn signed(coef: f64, name: &str, first: bool) -> String {
    match (first, coef.is_sign_negative() && coef != 0.0) {
        (true, false) => format!("{} {}", fmt_g17(coef), name),
        (true, true) => format!("- {} {}", fmt_g17(-coef), name),
        (false, false) => format!("+ {} {}", fmt_g17(coef), name),
        (false, true) => format!("- {} {}", fmt_g17(-coef), name),
    }
}

/// Formats like C's `%.17g`.
pub fn fmt_g17(x: f64) -> String {
    const P: i32 = 17;
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{:.*e}", (P - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..P).contains(&exp) {
        let m = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (P - 1 - exp) as usize;
        strip_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g17_matches_printf() {
        let cases = [
            (2.0, "2"),
            (0.6, "0.59999999999999998"),
            (0.1, "0.10000000000000001"),
            (-1.5, "-1.5"),
            (1e-7, "9.9999999999999995e-08"),
            (123456.0, "123456"),
            (1e20, "1e+20"),
            (0.0001, "0.0001"),
            (12.5, "12.5"),
        ];
        for (x, want) in cases {
            assert_eq!(fmt_g17(x), want, "{x}");
        }
        for x in [0.36, 1.0 / 3.0, 7.25e-13, -0.594, 8.0e17] {
            assert_eq!(fmt_g17(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn golden_minimal_program() {
        let mut p = Program::new("toy", 1);
        let x = p.add_variable("x".into(), 0.0, 1.0, Integrality::Binary, None).unwrap();
        p.add_objective(x, 2.0);
        p.add_constraint("c1".into(), vec![(x, 1.0)], Sense::Le, 1.0, ConstraintRole::Policy).unwrap();
        let want = "\\ toy program\nMaximize\n obj: 2 x\nSubject To\n c1: 1 x <= 1\nBounds\n 0 <= x <= 1\nBinaries\n x\nEnd\n";
        assert_eq!(p.write_lp().unwrap(), want);
    }

    #[test]
    fn quadratic_terms_are_doubled() {
        let mut p = Program::new("qp", 2);
        let a = p.add_variable("x_i_0".into(), 0.0, 1.0, Integrality::Binary, None).unwrap();
        let b = p.add_variable("x_j_0".into(), 0.0, 1.0, Integrality::Binary, None).unwrap();
        p.add_quadratic(a, b, 7.0);
        let text = p.write_lp().unwrap();
        assert!(text.contains(" obj: [ 14 x_i_0 * x_j_0 ] / 2\n"), "{text}");
        assert_eq!(p.objective_value(&[1.0, 1.0]), 7.0);
    }

    #[test]
    fn negative_and_mixed_terms() {
        let mut p = Program::new("m", 1);
        let a = p.add_variable("a".into(), 0.0, 1.0, Integrality::Continuous, None).unwrap();
        let b = p.add_variable("b".into(), 0.0, f64::INFINITY, Integrality::Continuous, None).unwrap();
        p.add_objective(a, -1.0);
        p.add_quadratic(a, a, -0.5);
        p.add_constraint("c".into(), vec![(a, 1.0), (b, -2.0), (b, 1e-16)], Sense::Eq, 0.0, ConstraintRole::Linking).unwrap();
        let text = p.write_lp().unwrap();
        assert!(text.contains(" obj: - 1 a + [ - 1 a ^ 2 ] / 2\n"), "{text}");
        assert!(text.contains(" c: 1 a - 2 b = 0\n"), "{text}");
        assert!(text.contains(" b >= 0\n"));
        assert!(!text.contains("Binaries"));
    }

    #[test]
    fn long_lines_wrap() {
        let mut p = Program::new("w", 1);
        let vars: Vec<usize> = (0..100)
            .map(|i| p.add_variable(format!("x_0_{i}"), 0.0, 1.0, Integrality::Binary, None).unwrap())
            .collect();
        p.add_constraint("sum".into(), vars.iter().map(|&v| (v, 0.1)).collect(), Sense::Eq, 1.0, ConstraintRole::Policy).unwrap();
        let text = p.write_lp().unwrap();
        assert!(text.lines().all(|l| l.len() <= LINE_WIDTH));
        assert!(text.lines().filter(|l| l.starts_with(" x_0_") || l.starts_with(" + ")).count() > 1);
    }

    #[test]
    fn rejects_illegal_and_duplicate_names() {
        let mut p = Program::new("bad", 1);
        assert!(matches!(
            p.add_variable("1x".into(), 0.0, 1.0, Integrality::Binary, None),
            Err(ProgramError::IllegalName(_))
        ));
        assert!(matches!(
            p.add_variable("x y".into(), 0.0, 1.0, Integrality::Binary, None),
            Err(ProgramError::IllegalName(_))
        ));
        p.add_variable("x".into(), 0.0, 1.0, Integrality::Binary, None).unwrap();
        assert!(matches!(
            p.add_variable("x".into(), 0.0, 1.0, Integrality::Binary, None),
            Err(ProgramError::DuplicateVariable(_))
        ));
        p.variables[0].name = "x:y".into();
        assert!(matches!(p.write_lp(), Err(ProgramError::IllegalName(_))));
    }

    #[test]
    fn stats_and_metadata() {
        assert_eq!(Program::new("e", 0).stats().unwrap().variables, 0);
        let mut p = Program::new("s", 2);
        let x = p
            .add_variable("x_0_0".into(), 0.0, 1.0, Integrality::Binary, Some(VarRole::Terminal { agent: 0, history: 0 }))
            .unwrap();
        let z = p
            .add_variable("z_0_0".into(), 0.0, 1.0, Integrality::Continuous, Some(VarRole::Pair { hi: 0, hj: 0 }))
            .unwrap();
        p.add_constraint("l".into(), vec![(z, 1.0), (x, -1.0)], Sense::Eq, 0.0, ConstraintRole::Linking).unwrap();
        p.add_constraint("n".into(), vec![(z, 1.0)], Sense::Eq, 1.0, ConstraintRole::Counting).unwrap();
        let s = p.stats().unwrap();
        assert_eq!(s.terminal_counts, vec![1, 0]);
        assert_eq!((s.compound_variables, s.non_policy_constraints, s.non_policy_without_counting), (1, 2, 1));
        let meta = p.metadata().unwrap();
        assert_eq!(Metadata::from_json(&meta.to_json()).unwrap(), meta);
        assert!(meta.to_json().contains("\"kind\": \"pair\""));

        p.add_variable("w".into(), 0.0, 1.0, Integrality::Continuous, None).unwrap();
        assert!(matches!(p.stats(), Err(ProgramError::MissingMetadata(_))));
    }

    #[test]
    fn violations_report_each_kind() {
        let mut p = Program::new("v", 1);
        let x = p.add_variable("x".into(), 0.0, 1.0, Integrality::Binary, None).unwrap();
        p.add_constraint("c".into(), vec![(x, 1.0)], Sense::Ge, 1.0, ConstraintRole::Policy).unwrap();
        assert!(p.violations(&[1.0], 1e-9).is_empty());
        let v = p.violations(&[0.5], 1e-9);
        assert_eq!(v.len(), 2);
        assert_eq!(p.violations(&[1.5], 1e-9).len(), 2);
    }
}
