use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{Instance, TerminalRewardMode};

use super::eval::Evaluator;
use super::tree::HistoryTree;
use super::HistoryError;
use crate::util::advance;

/// Default cap on the number of pure joint policies brute force will visit.
pub const DEFAULT_MAX_POLICIES: u128 = 1_000_000;

/// Deterministic policy of one agent: one action per decision point of its
/// tree. Decision points the policy never reaches hold action 0.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AgentPolicy {
    pub choices: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PurePolicy {
    pub agents: Vec<AgentPolicy>,
}

impl AgentPolicy {
    /// Decision points reached by this policy, in tree order.
    pub fn reachable(&self, tree: &HistoryTree) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![tree.decisions_after(0)[0]];
        while let Some(d) = stack.pop() {
            out.push(d);
            let child = tree.decisions()[d].options[self.choices[d]];
            if !tree.is_terminal(child) {
                stack.extend(tree.decisions_after(child).iter().rev());
            }
        }
        out.sort_unstable();
        out
    }

    /// 0/1 realization weight of every node.
    pub fn node_weights(&self, tree: &HistoryTree) -> Vec<f64> {
        let mut w = vec![0.0; tree.num_nodes()];
        w[0] = 1.0;
        for d in self.reachable(tree) {
            w[tree.decisions()[d].options[self.choices[d]]] = 1.0;
        }
        w
    }

    /// 0/1 realization weight of every terminal history.
    pub fn terminal_weights(&self, tree: &HistoryTree) -> Vec<f64> {
        let w = self.node_weights(tree);
        tree.terminals().iter().map(|&n| w[n]).collect()
    }

    /// Terminal ids with weight 1 (the support set).
    pub fn support(&self, tree: &HistoryTree) -> Vec<usize> {
        self.terminal_weights(tree)
            .iter()
            .enumerate()
            .filter(|(_, &w)| w == 1.0)
            .map(|(z, _)| z)
            .collect()
    }
}

impl PurePolicy {
    pub fn supports(&self, trees: &[HistoryTree]) -> Vec<Vec<usize>> {
        self.agents.iter().zip(trees).map(|(p, t)| p.support(t)).collect()
    }

    pub fn terminal_weights(&self, trees: &[HistoryTree]) -> Vec<Vec<f64>> {
        self.agents.iter().zip(trees).map(|(p, t)| p.terminal_weights(t)).collect()
    }
}

fn count_at(tree: &HistoryTree, d: usize, memo: &mut HashMap<usize, u128>) -> u128 {
    if let Some(&c) = memo.get(&d) {
        return c;
    }
    let mut total: u128 = 0;
    for &child in &tree.decisions()[d].options {
        let mut prod: u128 = 1;
        if !tree.is_terminal(child) {
            for &sub in tree.decisions_after(child) {
                prod = prod.saturating_mul(count_at(tree, sub, memo));
            }
        }
        total = total.saturating_add(prod);
    }
    memo.insert(d, total);
    total
}

/// Number of distinct pure policies of one agent (choices at unreachable
/// decision points not counted).
pub fn count_policies(tree: &HistoryTree) -> u128 {
    count_at(tree, tree.decisions_after(0)[0], &mut HashMap::new())
}

fn assignments_at(tree: &HistoryTree, d: usize) -> Vec<Vec<(usize, usize)>> {
    let mut out = Vec::new();
    for (a, &child) in tree.decisions()[d].options.iter().enumerate() {
        let mut partial = vec![vec![(d, a)]];
        if !tree.is_terminal(child) {
            for &sub in tree.decisions_after(child) {
                let sub_assign = assignments_at(tree, sub);
                partial = partial
                    .iter()
                    .flat_map(|p| {
                        sub_assign.iter().map(move |s| {
                            let mut v = p.clone();
                            v.extend_from_slice(s);
                            v
                        })
                    })
                    .collect();
            }
        }
        out.extend(partial);
    }
    out
}

/// Every pure policy of one agent, in lexicographic order of the action
/// choices along the tree.
pub fn enumerate_agent_policies(tree: &HistoryTree, cap: u128) -> Result<Vec<AgentPolicy>, HistoryError> {
    let count = count_policies(tree);
    if count > cap {
        return Err(HistoryError::PolicyCount { count, cap });
    }
    let nd = tree.decisions().len();
    Ok(assignments_at(tree, tree.decisions_after(0)[0])
        .into_iter()
        .map(|assign| {
            let mut choices = vec![0; nd];
            for (d, a) in assign {
                choices[d] = a;
            }
            AgentPolicy { choices }
        })
        .collect())
}

/// Per-agent policy lists whose product is the joint policy space.
pub fn enumerate_joint_policies(trees: &[HistoryTree], cap: u128) -> Result<Vec<Vec<AgentPolicy>>, HistoryError> {
    let mut total: u128 = 1;
    for t in trees {
        total = total.saturating_mul(count_policies(t));
    }
    if total > cap {
        return Err(HistoryError::PolicyCount { count: total, cap });
    }
    trees.iter().map(|t| enumerate_agent_policies(t, cap)).collect()
}

/// Decodes the `index`-th joint policy (first agent most significant).
pub fn joint_policy_at(lists: &[Vec<AgentPolicy>], mut index: usize) -> PurePolicy {
    let mut agents = vec![None; lists.len()];
    for g in (0..lists.len()).rev() {
        let n = lists[g].len();
        agents[g] = Some(lists[g][index % n].clone());
        index /= n;
    }
    PurePolicy {
        agents: agents.into_iter().map(Option::unwrap).collect(),
    }
}

pub fn joint_count(lists: &[Vec<AgentPolicy>]) -> usize {
    lists.iter().map(Vec::len).product()
}

struct Expansion<'e, 'a> {
    ev: &'e Evaluator<'a>,
    policy: &'e PurePolicy,
    /// `exec[g][slot]`: first step at which agent `g` executed the slot.
    exec: Vec<Vec<Option<usize>>>,
    total: f64,
}

impl Expansion<'_, '_> {
    fn record(&mut self, t: usize, g: usize, s: usize, a: usize) -> Vec<usize> {
        let mut newly = Vec::new();
        for (k, pair) in self.ev.slots().iter().enumerate() {
            if self.exec[g][k].is_none() && pair.matches(g, s, a) {
                self.exec[g][k] = Some(t);
                newly.push(k);
            }
        }
        newly
    }

    fn triggered_dist(&self, t: usize, g: usize, s: usize, a: usize) -> &[f64] {
        let inst = self.ev.instance();
        for &k in self.ev.tau_at(g, s, a) {
            let fired = inst.tau[k]
                .affecting
                .iter()
                .zip(self.ev.tau_slots(k))
                .all(|(p, &slot)| matches!(self.exec[p.agent][slot], Some(e) if e < t));
            if fired {
                return &inst.tau[k].dist;
            }
        }
        &inst.agents[g].transitions[s][a]
    }

    fn step(&mut self, t: usize, nodes: &[usize], states: &[usize], prob: f64, acc: f64) {
        let inst = self.ev.instance();
        let n = nodes.len();
        let mut actions = Vec::with_capacity(n);
        let mut next_nodes = Vec::with_capacity(n);
        let mut recorded = Vec::with_capacity(n);
        for g in 0..n {
            let tree = self.ev.tree(g);
            let d = tree.decision_at(nodes[g], states[g]).expect("state reached inside the tree");
            let a = self.policy.agents[g].choices[d];
            actions.push(a);
            next_nodes.push(tree.decisions()[d].options[a]);
            recorded.push(self.record(t, g, states[g], a));
        }

        if t + 1 == inst.horizon {
            let mut r = acc;
            for (k, entry) in inst.rho.iter().enumerate() {
                let all = entry
                    .pairs
                    .iter()
                    .zip(self.ev.rho_slots(k))
                    .all(|(p, &slot)| self.exec[p.agent][slot].is_some());
                if all {
                    r += entry.reward;
                }
            }
            if inst.terminal_reward_mode == TerminalRewardMode::Expected {
                for g in 0..n {
                    let dist = self.triggered_dist(t, g, states[g], actions[g]);
                    r += inst.agents[g].expected_reward(states[g], actions[g], dist);
                }
            }
            self.total += prob * r;
        } else {
            let dists: Vec<Vec<(usize, f64)>> = (0..n)
                .map(|g| {
                    self.triggered_dist(t, g, states[g], actions[g])
                        .iter()
                        .enumerate()
                        .filter(|(_, &p)| p > 0.0)
                        .map(|(s, &p)| (s, p))
                        .collect()
                })
                .collect();
            let mut idx = vec![0; n];
            loop {
                let mut p = prob;
                let mut r = acc;
                let mut next_states = Vec::with_capacity(n);
                for g in 0..n {
                    let (s2, q) = dists[g][idx[g]];
                    p *= q;
                    r += inst.agents[g].rewards[states[g]][actions[g]][s2];
                    next_states.push(s2);
                }
                self.step(t + 1, &next_nodes, &next_states, p, r);
                let sizes: Vec<usize> = dists.iter().map(Vec::len).collect();
                if !advance(&mut idx, &sizes) {
                    break;
                }
            }
        }

        for (g, newly) in recorded.into_iter().enumerate() {
            for k in newly {
                self.exec[g][k] = None;
            }
        }
    }
}

impl Evaluator<'_> {
    /// Exact expected team reward of a pure joint policy by forward expansion
    /// over joint outcomes.
    pub fn evaluate_policy(&self, policy: &PurePolicy) -> Result<f64, HistoryError> {
        if policy.agents.len() != self.num_agents() {
            return Err(HistoryError::PolicyShape(format!(
                "policy has {} agents, instance has {}",
                policy.agents.len(),
                self.num_agents()
            )));
        }
        for (g, (p, tree)) in policy.agents.iter().zip(self.trees()).enumerate() {
            let na = self.instance().agents[g].num_actions();
            if p.choices.len() != tree.decisions().len() || p.choices.iter().any(|&a| a >= na) {
                return Err(HistoryError::PolicyShape(format!("agent {g}: choice vector does not fit the tree")));
            }
        }
        let n = self.num_agents();
        let inst = self.instance();
        let mut exp = Expansion {
            ev: self,
            policy,
            exec: vec![vec![None; self.slots().len()]; n],
            total: 0.0,
        };
        let roots = vec![0; n];
        let states: Vec<usize> = inst.agents.iter().map(|m| m.initial).collect();
        exp.step(0, &roots, &states, 1.0, 0.0);
        Ok(exp.total)
    }

    /// Sum of `joint_value` over the product of the agents' support sets.
    pub fn evaluate_by_supports(&self, policy: &PurePolicy) -> f64 {
        let supports = policy.supports(self.trees());
        let sizes: Vec<usize> = supports.iter().map(Vec::len).collect();
        let mut idx = vec![0; sizes.len()];
        let mut joint = vec![0; sizes.len()];
        let mut total = 0.0;
        loop {
            for g in 0..sizes.len() {
                joint[g] = supports[g][idx[g]];
            }
            total += self.joint_value_unchecked(&joint).value;
            if !advance(&mut idx, &sizes) {
                break;
            }
        }
        total
    }

    /// Exhaustive search over pure joint policies. Ties go to the first
    /// policy in enumeration order.
    pub fn brute_force_optimal(&self, cap: u128) -> Result<BruteForce, HistoryError> {
        let lists = enumerate_joint_policies(self.trees(), cap)?;
        let count = joint_count(&lists);
        let values: Vec<f64> = (0..count)
            .into_par_iter()
            .map(|i| self.evaluate_policy(&joint_policy_at(&lists, i)).expect("enumerated policy fits"))
            .collect();
        let mut best = 0;
        for (i, &v) in values.iter().enumerate() {
            if v > values[best] {
                best = i;
            }
        }
        Ok(BruteForce {
            policy: joint_policy_at(&lists, best),
            value: values[best],
            index: best,
            count,
        })
    }
}

#[derive(Clone, Debug)]
pub struct BruteForce {
    pub policy: PurePolicy,
    pub value: f64,
    /// Position of the optimum in enumeration order.
    pub index: usize,
    pub count: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolicyEntry {
    pub history: String,
    pub state: String,
    pub action: String,
}

/// JSON list per agent of `{history, state, action}` over reached decision points.
pub fn policy_to_json(inst: &Instance, trees: &[HistoryTree], policy: &PurePolicy) -> String {
    let file: Vec<Vec<PolicyEntry>> = policy
        .agents
        .iter()
        .zip(trees)
        .enumerate()
        .map(|(g, (p, tree))| {
            let model = &inst.agents[g];
            p.reachable(tree)
                .into_iter()
                .map(|d| {
                    let dp = &tree.decisions()[d];
                    PolicyEntry {
                        history: tree.path(inst, dp.node),
                        state: model.states[dp.state].clone(),
                        action: model.actions[p.choices[d]].clone(),
                    }
                })
                .collect()
        })
        .collect();
    let mut text = serde_json::to_string_pretty(&file).expect("policy serializes");
    text.push('\n');
    text
}

pub fn policy_from_json(inst: &Instance, trees: &[HistoryTree], text: &str) -> Result<PurePolicy, HistoryError> {
    let file: Vec<Vec<PolicyEntry>> =
        serde_json::from_str(text).map_err(|e| HistoryError::PolicyShape(format!("policy file: {e}")))?;
    if file.len() != trees.len() {
        return Err(HistoryError::PolicyShape(format!(
            "policy file lists {} agents, instance has {}",
            file.len(),
            trees.len()
        )));
    }
    let mut agents = Vec::with_capacity(trees.len());
    for (g, (entries, tree)) in file.iter().zip(trees).enumerate() {
        let model = &inst.agents[g];
        let paths = tree.path_index(inst);
        let mut choices: Vec<Option<usize>> = vec![None; tree.decisions().len()];
        for e in entries {
            let node = *paths
                .get(&e.history)
                .ok_or_else(|| HistoryError::UnknownHistory(format!("agent {g}: `{}`", e.history)))?;
            let state = model
                .state_id(&e.state)
                .ok_or_else(|| HistoryError::UnknownHistory(format!("agent {g}: state `{}` after `{}`", e.state, e.history)))?;
            let d = tree
                .decision_at(node, state)
                .ok_or_else(|| HistoryError::UnknownHistory(format!("agent {g}: `{}` then `{}`", e.history, e.state)))?;
            let a = model
                .action_id(&e.action)
                .ok_or_else(|| HistoryError::PolicyShape(format!("agent {g}: unknown action `{}`", e.action)))?;
            choices[d] = Some(a);
        }
        // walk reachable points; gaps there are errors, elsewhere default to 0
        let mut stack = vec![tree.decisions_after(0)[0]];
        while let Some(d) = stack.pop() {
            let dp = &tree.decisions()[d];
            let a = choices[d].ok_or_else(|| HistoryError::IncompletePolicy {
                agent: g,
                history: tree.path(inst, dp.node),
                state: model.states[dp.state].clone(),
            })?;
            let child = dp.options[a];
            if !tree.is_terminal(child) {
                stack.extend(tree.decisions_after(child));
            }
        }
        agents.push(AgentPolicy {
            choices: choices.into_iter().map(|c| c.unwrap_or(0)).collect(),
        });
    }
    Ok(PurePolicy { agents })
}

/// The joint policy where every agent always plays action `a`.
pub fn constant_policy(trees: &[HistoryTree], a: usize) -> PurePolicy {
    PurePolicy {
        agents: trees
            .iter()
            .map(|t| AgentPolicy {
                choices: vec![a; t.decisions().len()],
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::Instance;

    #[test]
    fn tiny2_always_a() {
        let inst = fixtures::tiny2();
        let ev = Evaluator::new(&inst).unwrap();
        let p = constant_policy(ev.trees(), 0);
        assert!((ev.evaluate_policy(&p).unwrap() - 18.6).abs() < 1e-12);
        assert!((ev.evaluate_by_supports(&p) - 18.6).abs() < 1e-12);
    }

    #[test]
    fn tiny2_policy_counts_and_optimum() {
        let inst = fixtures::tiny2();
        let ev = Evaluator::new(&inst).unwrap();
        assert_eq!(count_policies(ev.tree(0)), 8);
        let bf = ev.brute_force_optimal(DEFAULT_MAX_POLICIES).unwrap();
        assert_eq!(bf.count, 64);
        assert!((bf.value - 18.6).abs() < 1e-12);
        // both agents open with `a`
        for (g, p) in bf.policy.agents.iter().enumerate() {
            let root = ev.tree(g).decisions_after(0)[0];
            assert_eq!(p.choices[root], 0);
        }
    }

    #[test]
    fn tiny3_policy_count() {
        let inst = fixtures::tiny3();
        let ev = Evaluator::new(&inst).unwrap();
        assert_eq!(count_policies(ev.tree(0)), 48);
        let lists = enumerate_joint_policies(ev.trees(), DEFAULT_MAX_POLICIES).unwrap();
        assert_eq!(joint_count(&lists), 48 * 48);
        // all enumerated policies are distinct on their reachable part
        let mut seen = std::collections::HashSet::new();
        for p in &lists[0] {
            assert!(seen.insert(p.support(ev.tree(0))));
        }
    }

    #[test]
    fn policy_cap() {
        let inst = fixtures::tiny3();
        let ev = Evaluator::new(&inst).unwrap();
        assert!(matches!(ev.brute_force_optimal(100), Err(HistoryError::PolicyCount { .. })));
    }

    #[test]
    fn zero_reward_optimum_is_first_policy() {
        let mut inst = fixtures::tiny2();
        inst.rho.clear();
        for m in &mut inst.agents {
            for row in m.rewards.iter_mut().flatten() {
                row.iter_mut().for_each(|r| *r = 0.0);
            }
        }
        let ev = Evaluator::new(&inst).unwrap();
        let bf = ev.brute_force_optimal(DEFAULT_MAX_POLICIES).unwrap();
        assert_eq!(bf.value, 0.0);
        assert_eq!(bf.index, 0);
    }

    /// Finite-horizon backward induction on one agent's local MDP; rewards
    /// cover the first `T - 1` transitions.
    fn local_mdp_value(inst: &Instance, g: usize) -> f64 {
        let m = &inst.agents[g];
        let ns = m.num_states();
        let mut v = vec![0.0; ns];
        for _ in 0..inst.horizon - 1 {
            v = (0..ns)
                .map(|s| {
                    (0..m.num_actions())
                        .map(|a| (0..ns).map(|s2| m.transitions[s][a][s2] * (m.rewards[s][a][s2] + v[s2])).sum::<f64>())
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect();
        }
        v[m.initial]
    }

    #[test]
    fn degenerate_partner_matches_single_agent_mdp() {
        let mut inst = fixtures::tiny3();
        inst.rho.clear();
        inst.tau.clear();
        let j = &mut inst.agents[1];
        j.states = vec!["idle".into()];
        j.actions = vec!["wait".into()];
        j.initial = 0;
        j.transitions = vec![vec![vec![1.0]]];
        j.rewards = vec![vec![vec![0.0]]];
        assert!(inst.validate().is_ok());
        let ev = Evaluator::new(&inst).unwrap();
        let bf = ev.brute_force_optimal(DEFAULT_MAX_POLICIES).unwrap();
        assert!((bf.value - local_mdp_value(&inst, 0)).abs() < 1e-12);
        // every individual policy: forward expansion equals support sum
        let lists = enumerate_joint_policies(ev.trees(), DEFAULT_MAX_POLICIES).unwrap();
        for i in 0..joint_count(&lists) {
            let p = joint_policy_at(&lists, i);
            assert!((ev.evaluate_policy(&p).unwrap() - ev.evaluate_by_supports(&p)).abs() < 1e-12);
        }
    }

    #[test]
    fn support_betas_sum_to_one() {
        let inst = fixtures::tiny3x3();
        let ev = Evaluator::new(&inst).unwrap();
        let lists: Vec<Vec<AgentPolicy>> = ev.trees().iter().map(|t| enumerate_agent_policies(t, 1000).unwrap()).collect();
        let contexts = [[0, 0, 0], [5, 11, 19], [19, 3, 7]];
        for g in 0..3 {
            for p in &lists[g] {
                for ctx in contexts {
                    let mut joint = ctx.to_vec();
                    let s: f64 = p
                        .support(ev.tree(g))
                        .into_iter()
                        .map(|z| {
                            joint[g] = z;
                            ev.beta(g, &joint)
                        })
                        .sum();
                    assert!((s - 1.0).abs() < 1e-12, "{s}");
                }
            }
        }
    }

    #[test]
    fn joint_beta_equals_product_on_tiny3() {
        let inst = fixtures::tiny3();
        let ev = Evaluator::new(&inst).unwrap();
        let lists = enumerate_joint_policies(ev.trees(), DEFAULT_MAX_POLICIES).unwrap();
        // sum over all joint terminals of a policy's support product equals 1
        for i in (0..joint_count(&lists)).step_by(37) {
            let p = joint_policy_at(&lists, i);
            let supports = p.supports(ev.trees());
            let mut total = 0.0;
            for &a in &supports[0] {
                for &b in &supports[1] {
                    total += ev.joint_value_unchecked(&[a, b]).beta;
                }
            }
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn policy_file_round_trip() {
        let inst = fixtures::tiny3();
        let ev = Evaluator::new(&inst).unwrap();
        let lists = enumerate_joint_policies(ev.trees(), DEFAULT_MAX_POLICIES).unwrap();
        let p = joint_policy_at(&lists, 1234);
        let text = policy_to_json(&inst, ev.trees(), &p);
        let back = policy_from_json(&inst, ev.trees(), &text).unwrap();
        assert_eq!(back, p);
        assert!(text.contains("\"history\": \"\""));
    }

    #[test]
    fn incomplete_policy_file() {
        let inst = fixtures::tiny2();
        let ev = Evaluator::new(&inst).unwrap();
        let text = r#"[[{"history": "", "state": "s0", "action": "a"}], []]"#;
        let err = policy_from_json(&inst, ev.trees(), text).unwrap_err();
        assert!(matches!(err, HistoryError::IncompletePolicy { agent: 0, .. }), "{err}");
    }
}
