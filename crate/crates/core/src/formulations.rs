//! Builders for the quadratic program and the three mixed-integer programs.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::binning::{build_all_bins, check_single_affecting, BinError, BinSet, SubbinContext};
use crate::histories::{Evaluator, HistoryError, HistoryTree};
use crate::model::Instance;
use crate::program::{ConstraintRole, Integrality, Program, ProgramError, Sense, VarRole};

#[derive(Debug, Error)]
pub enum FormulationError {
    #[error("{kind} needs {need} agents, instance has {got}")]
    AgentCount { kind: FormulationKind, need: &'static str, got: usize },
    #[error("non-uniform branching for agent {agent} at ({state}, {action}): {got} successors, expected {expected}")]
    UniformBranchingViolation {
        agent: usize,
        state: String,
        action: String,
        expected: usize,
        got: usize,
    },
    #[error("unknown formulation {0:?} (expected qp2, decmdp_milp, edicr_milp2 or edicr_milp_n)")]
    UnknownKind(String),
    #[error(transparent)]
    Bin(#[from] BinError),
    #[error(transparent)]
    Program(#[from] ProgramError),
    #[error(transparent)]
    History(#[from] HistoryError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FormulationKind {
    Qp2,
    DecmdpMilp,
    EdicrMilp2,
    EdicrMilpN,
}

impl FormulationKind {
    pub const ALL: [FormulationKind; 4] = [Self::Qp2, Self::DecmdpMilp, Self::EdicrMilp2, Self::EdicrMilpN];

    pub fn name(self) -> &'static str {
        match self {
            Self::Qp2 => "qp2",
            Self::DecmdpMilp => "decmdp_milp",
            Self::EdicrMilp2 => "edicr_milp2",
            Self::EdicrMilpN => "edicr_milp_n",
        }
    }

    pub fn is_quadratic(self) -> bool {
        self == Self::Qp2
    }

    fn check_agents(self, n: usize) -> Result<(), FormulationError> {
        let (ok, need) = match self {
            Self::EdicrMilpN => (n == 3, "3"),
            _ => (n == 2, "2"),
        };
        if ok {
            Ok(())
        } else {
            Err(FormulationError::AgentCount { kind: self, need, got: n })
        }
    }
}

impl fmt::Display for FormulationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FormulationKind {
    type Err = FormulationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| FormulationError::UnknownKind(s.to_string()))
    }
}

/// Variables of one agent's sequence-form policy.
#[derive(Clone, Debug)]
pub struct PolicyVars {
    pub agent: usize,
    /// Variable of every tree node; `None` at the root (fixed to 1).
    pub node_var: Vec<Option<usize>>,
    /// Variable of every terminal history, by terminal id.
    pub terminal_var: Vec<usize>,
    pub constraints: Vec<usize>,
}

/// Declares the realization-weight variables of one agent and the
/// constraints making them a legal policy: at every decision point the
/// weights of the extensions add up to the weight of the history.
pub fn build_policy_constraints(p: &mut Program, tree: &HistoryTree, terminal: Integrality) -> Result<PolicyVars, FormulationError> {
    let g = tree.agent();
    let mut node_var = vec![None; tree.num_nodes()];
    for (node, slot) in node_var.iter_mut().enumerate().skip(1) {
        let var = match tree.terminal_index(node) {
            Some(z) => p.add_variable(format!("x_{g}_{z}"), 0.0, 1.0, terminal, Some(VarRole::Terminal { agent: g, history: z }))?,
            None => p.add_variable(
                format!("xn_{g}_{node}"),
                0.0,
                1.0,
                Integrality::Continuous,
                Some(VarRole::NonTerminal { agent: g, node }),
            )?,
        };
        *slot = Some(var);
    }
    let mut constraints = Vec::with_capacity(tree.decisions().len());
    for (d, dp) in tree.decisions().iter().enumerate() {
        let mut terms: Vec<(usize, f64)> = dp.options.iter().map(|&c| (node_var[c].expect("child is not the root"), 1.0)).collect();
        let rhs = match node_var[dp.node] {
            Some(parent) => {
                terms.push((parent, -1.0));
                0.0
            }
            None => 1.0,
        };
        constraints.push(p.add_constraint(format!("pol_{g}_{d}"), terms, Sense::Eq, rhs, ConstraintRole::Policy)?);
    }
    let terminal_var = tree.terminals().iter().map(|&n| node_var[n].expect("terminal is not the root")).collect();
    Ok(PolicyVars {
        agent: g,
        node_var,
        terminal_var,
        constraints,
    })
}

fn policy_vars_all(p: &mut Program, ev: &Evaluator, terminal: Integrality) -> Result<Vec<PolicyVars>, FormulationError> {
    ev.trees().iter().map(|t| build_policy_constraints(p, t, terminal)).collect()
}

/// `||sigma_g||`: the number of terminal histories every pure policy of
/// `agent` reaches, provided each in-history transition has the same number
/// of successors `c` (under the base model and every replacement).
pub fn support_size(inst: &Instance, tree: &HistoryTree) -> Result<u64, FormulationError> {
    let g = tree.agent();
    let model = &inst.agents[g];
    let mut expected: Option<usize> = None;
    for &node in tree.non_terminals() {
        let n = tree.node(node);
        let Some(prev_action) = n.action else { continue };
        let (s, a) = (n.state, prev_action);
        let mut sizes = vec![inst.successor_support(g, s, a)?.len()];
        let positive = |d: &[f64]| d.iter().filter(|&&p| p > 0.0).count();
        sizes.push(positive(&model.transitions[s][a]));
        for k in inst.matching_tau(g, s, a) {
            sizes.push(positive(&inst.tau[k].dist));
        }
        for got in sizes {
            let want = *expected.get_or_insert(got);
            if got != want {
                return Err(FormulationError::UniformBranchingViolation {
                    agent: g,
                    state: model.states[s].clone(),
                    action: model.actions[a].clone(),
                    expected: want,
                    got,
                });
            }
        }
    }
    Ok(expected.map_or(1, |c| (c as u64).pow(inst.horizon as u32 - 1)))
}

/// A built program plus what was needed to build it.
#[derive(Clone, Debug)]
pub struct Compiled {
    pub kind: FormulationKind,
    pub program: Program,
    pub policy_vars: Vec<PolicyVars>,
    /// Present for the binned formulations.
    pub bins: Option<Vec<BinSet>>,
}

pub fn build(kind: FormulationKind, ev: &Evaluator) -> Result<Compiled, FormulationError> {
    match kind {
        FormulationKind::Qp2 => build_qp2(ev, false),
        FormulationKind::DecmdpMilp => build_decmdp_milp(ev),
        FormulationKind::EdicrMilp2 => build_edicr_milp2(ev),
        FormulationKind::EdicrMilpN => build_edicr_milp_n(ev),
    }
}

/// Maximizes `x_i' Q x_j` with `Q(h_i, h_j)` the joint value of the pair.
/// `continuous` relaxes the terminal weights to `[0, 1]`.
pub fn build_qp2(ev: &Evaluator, continuous: bool) -> Result<Compiled, FormulationError> {
    let kind = FormulationKind::Qp2;
    kind.check_agents(ev.num_agents())?;
    let mut p = Program::new(kind.name(), 2);
    let integrality = if continuous { Integrality::Continuous } else { Integrality::Binary };
    let vars = policy_vars_all(&mut p, ev, integrality)?;
    for (hi, &xi) in vars[0].terminal_var.iter().enumerate() {
        for (hj, &xj) in vars[1].terminal_var.iter().enumerate() {
            p.add_quadratic(xi, xj, ev.joint_value(&[hi, hj])?.value);
        }
    }
    Ok(Compiled {
        kind,
        program: p,
        policy_vars: vars,
        bins: None,
    })
}

/// One compound variable per terminal pair, used as a counter.
pub fn build_decmdp_milp(ev: &Evaluator) -> Result<Compiled, FormulationError> {
    let kind = FormulationKind::DecmdpMilp;
    kind.check_agents(ev.num_agents())?;
    let inst = ev.instance();
    let sigma = [support_size(inst, ev.tree(0))?, support_size(inst, ev.tree(1))?];
    let mut p = Program::new(kind.name(), 2);
    let vars = policy_vars_all(&mut p, ev, Integrality::Binary)?;
    let (ni, nj) = (vars[0].terminal_var.len(), vars[1].terminal_var.len());
    let mut z = vec![0; ni * nj];
    for hi in 0..ni {
        for hj in 0..nj {
            let v = p.add_variable(format!("z_{hi}_{hj}"), 0.0, 1.0, Integrality::Continuous, Some(VarRole::Pair { hi, hj }))?;
            p.add_objective(v, ev.joint_value(&[hi, hj])?.value);
            z[hi * nj + hj] = v;
        }
    }
    for hi in 0..ni {
        let mut terms: Vec<(usize, f64)> = (0..nj).map(|hj| (z[hi * nj + hj], 1.0)).collect();
        terms.push((vars[0].terminal_var[hi], -(sigma[1] as f64)));
        p.add_constraint(format!("link_0_{hi}"), terms, Sense::Eq, 0.0, ConstraintRole::Linking)?;
    }
    for hj in 0..nj {
        let mut terms: Vec<(usize, f64)> = (0..ni).map(|hi| (z[hi * nj + hj], 1.0)).collect();
        terms.push((vars[1].terminal_var[hj], -(sigma[0] as f64)));
        p.add_constraint(format!("link_1_{hj}"), terms, Sense::Eq, 0.0, ConstraintRole::Linking)?;
    }
    p.add_constraint(
        "count".into(),
        z.iter().map(|&v| (v, 1.0)).collect(),
        Sense::Eq,
        (sigma[0] * sigma[1]) as f64,
        ConstraintRole::Counting,
    )?;
    Ok(Compiled {
        kind,
        program: p,
        policy_vars: vars,
        bins: None,
    })
}

/// Declares `z_<g>_<h>_<b>` with its objective coefficient and the
/// constraint summing a history's compound variables to its weight.
/// Returns the variable ids per agent, history and bin.
fn add_compound(p: &mut Program, ev: &Evaluator, vars: &[PolicyVars], bins: &[BinSet]) -> Result<Vec<Vec<Vec<usize>>>, FormulationError> {
    let mut out = Vec::with_capacity(bins.len());
    for set in bins {
        let g = set.agent;
        let mut per_history = Vec::with_capacity(set.bins.len());
        for (h, hbins) in set.bins.iter().enumerate() {
            let mut ids = Vec::with_capacity(hbins.len());
            for (b, bin) in hbins.iter().enumerate() {
                let v = p.add_variable(
                    format!("z_{g}_{h}_{b}"),
                    0.0,
                    1.0,
                    Integrality::Continuous,
                    Some(VarRole::Compound { agent: g, history: h, bin: b }),
                )?;
                p.add_objective(v, crate::binning::bin_value(ev, g, h, bin)?.value);
                ids.push(v);
            }
            let mut terms: Vec<(usize, f64)> = ids.iter().map(|&v| (v, 1.0)).collect();
            terms.push((vars[g].terminal_var[h], -1.0));
            p.add_constraint(format!("link_{g}_{h}"), terms, Sense::Eq, 0.0, ConstraintRole::Linking)?;
            per_history.push(ids);
        }
        out.push(per_history);
    }
    Ok(out)
}

/// Binned formulation for two agents: each compound variable is bounded by
/// the probability mass the other agent puts on its bin.
pub fn build_edicr_milp2(ev: &Evaluator) -> Result<Compiled, FormulationError> {
    let kind = FormulationKind::EdicrMilp2;
    kind.check_agents(ev.num_agents())?;
    let bins = build_all_bins(ev)?;
    let mut p = Program::new(kind.name(), 2);
    let vars = policy_vars_all(&mut p, ev, Integrality::Binary)?;
    let z = add_compound(&mut p, ev, &vars, &bins)?;
    for set in &bins {
        let g = set.agent;
        let f = 1 - g;
        let mut joint = [0usize; 2];
        joint[g] = usize::MAX;
        for (h, hbins) in set.bins.iter().enumerate() {
            joint[g] = h;
            for (b, bin) in hbins.iter().enumerate() {
                let mut terms = vec![(z[g][h][b], 1.0)];
                for &hf in &bin.factors[0].members {
                    joint[f] = hf;
                    terms.push((vars[f].terminal_var[hf], -ev.beta(f, &joint)));
                }
                p.add_constraint(format!("ub_{g}_{h}_{b}"), terms, Sense::Le, 0.0, ConstraintRole::Bound)?;
            }
        }
    }
    Ok(Compiled {
        kind,
        program: p,
        policy_vars: vars,
        bins: Some(bins),
    })
}

/// Binned formulation for three agents: each compound variable gets one
/// upper bound per other agent, from the clamped sub-bin coefficients.
pub fn build_edicr_milp_n(ev: &Evaluator) -> Result<Compiled, FormulationError> {
    let kind = FormulationKind::EdicrMilpN;
    kind.check_agents(ev.num_agents())?;
    check_single_affecting(ev.instance())?;
    let bins = build_all_bins(ev)?;
    let ctx = SubbinContext::new(ev)?;
    let mut p = Program::new(kind.name(), 3);
    let vars = policy_vars_all(&mut p, ev, Integrality::Binary)?;
    let z = add_compound(&mut p, ev, &vars, &bins)?;
    for set in &bins {
        let g = set.agent;
        for (h, hbins) in set.bins.iter().enumerate() {
            for (b, bin) in hbins.iter().enumerate() {
                for factor in &bin.factors {
                    let f = factor.agent;
                    let mut terms = vec![(z[g][h][b], 1.0)];
                    for c in ctx.coefficients(ev, g, h, bin, f)? {
                        terms.push((vars[f].terminal_var[c.history], -c.clamped));
                    }
                    p.add_constraint(format!("ub_{g}_{h}_{b}_{f}"), terms, Sense::Le, 0.0, ConstraintRole::Bound)?;
                }
            }
        }
    }
    Ok(Compiled {
        kind,
        program: p,
        policy_vars: vars,
        bins: Some(bins),
    })
}
