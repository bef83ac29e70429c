use crate::model::{Instance, InteractionPair, TerminalRewardMode};

use super::tree::{HistoryTree, DEFAULT_MAX_NODES};
use super::HistoryError;

const NEVER: u8 = u8::MAX;

/// `beta(h)`, `r(h)` and their product for one joint terminal history.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointValue {
    pub beta: f64,
    pub reward: f64,
    pub value: f64,
}

/// Exact evaluation of histories against an instance.
///
/// Every interaction pair that appears in `rho` or as an affecting pair of
/// `tau` gets a slot; for each terminal history we record the first time
/// step at which it executes each slot of its own agent.
#[derive(Clone, Debug)]
pub struct Evaluator<'a> {
    inst: &'a Instance,
    trees: Vec<HistoryTree>,
    slots: Vec<InteractionPair>,
    rho_slots: Vec<Vec<usize>>,
    tau_slots: Vec<Vec<usize>>,
    /// `first_exec[g][h * slots + k]`
    first_exec: Vec<Vec<u8>>,
    /// `tau_at[g][s][a]`: matching tau entries in instance order.
    tau_at: Vec<Vec<Vec<Vec<usize>>>>,
}

impl<'a> Evaluator<'a> {
    pub fn new(inst: &'a Instance) -> Result<Self, HistoryError> {
        Self::with_max_nodes(inst, DEFAULT_MAX_NODES)
    }

    pub fn with_max_nodes(inst: &'a Instance, max_nodes: usize) -> Result<Self, HistoryError> {
        let trees = (0..inst.num_agents())
            .map(|g| HistoryTree::enumerate(inst, g, max_nodes))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::from_trees(inst, trees))
    }

    pub fn from_trees(inst: &'a Instance, trees: Vec<HistoryTree>) -> Self {
        let mut slots: Vec<InteractionPair> = Vec::new();
        let mut slot_of = |p: &InteractionPair| match slots.iter().position(|q| q == p) {
            Some(i) => i,
            None => {
                slots.push(p.clone());
                slots.len() - 1
            }
        };
        let rho_slots: Vec<Vec<usize>> = inst.rho.iter().map(|e| e.pairs.iter().map(&mut slot_of).collect()).collect();
        let tau_slots: Vec<Vec<usize>> = inst
            .tau
            .iter()
            .map(|e| e.affecting.iter().map(&mut slot_of).collect())
            .collect();

        let ns = slots.len();
        let first_exec = trees
            .iter()
            .enumerate()
            .map(|(g, tree)| {
                let mut table = vec![NEVER; tree.num_terminals() * ns];
                for z in 0..tree.num_terminals() {
                    let tr = tree.trajectory(z);
                    for (k, pair) in slots.iter().enumerate() {
                        if pair.agent != g {
                            continue;
                        }
                        if let Some(t) = (0..tr.actions.len()).find(|&t| pair.matches(g, tr.states[t], tr.actions[t])) {
                            table[z * ns + k] = t as u8;
                        }
                    }
                }
                table
            })
            .collect();

        let tau_at = inst
            .agents
            .iter()
            .enumerate()
            .map(|(g, m)| {
                (0..m.num_states())
                    .map(|s| (0..m.num_actions()).map(|a| inst.matching_tau(g, s, a)).collect())
                    .collect()
            })
            .collect();

        Self {
            inst,
            trees,
            slots,
            rho_slots,
            tau_slots,
            first_exec,
            tau_at,
        }
    }

    pub fn instance(&self) -> &'a Instance {
        self.inst
    }

    pub fn trees(&self) -> &[HistoryTree] {
        &self.trees
    }

    pub fn tree(&self, agent: usize) -> &HistoryTree {
        &self.trees[agent]
    }

    pub fn num_agents(&self) -> usize {
        self.trees.len()
    }

    pub fn slots(&self) -> &[InteractionPair] {
        &self.slots
    }

    pub fn rho_slots(&self, entry: usize) -> &[usize] {
        &self.rho_slots[entry]
    }

    pub fn tau_slots(&self, entry: usize) -> &[usize] {
        &self.tau_slots[entry]
    }

    pub fn tau_at(&self, agent: usize, state: usize, action: usize) -> &[usize] {
        &self.tau_at[agent][state][action]
    }

    /// First step at which terminal `h` of `agent` executes slot `slot`.
    #[inline]
    pub fn first_exec(&self, agent: usize, h: usize, slot: usize) -> Option<usize> {
        let t = self.first_exec[agent][h * self.slots.len() + slot];
        (t != NEVER).then_some(t as usize)
    }

    /// All first-execution times of `h`, indexed by slot.
    pub fn exec_profile(&self, agent: usize, h: usize) -> &[u8] {
        let ns = self.slots.len();
        &self.first_exec[agent][h * ns..(h + 1) * ns]
    }

    #[inline]
    fn executed_before(&self, agent: usize, h: usize, slot: usize, t: usize) -> bool {
        let e = self.first_exec[agent][h * self.slots.len() + slot];
        e != NEVER && (e as usize) < t
    }

    /// Whether tau entry `k` is triggered for a transition at step `t`.
    #[inline]
    pub fn tau_triggered(&self, k: usize, joint: &[usize], t: usize) -> bool {
        let entry = &self.inst.tau[k];
        entry
            .affecting
            .iter()
            .zip(&self.tau_slots[k])
            .all(|(p, &slot)| self.executed_before(p.agent, joint[p.agent], slot, t))
    }

    /// Transition distribution applying at step `t` of `g`'s history in `joint`.
    pub fn distribution_at(&self, g: usize, joint: &[usize], t: usize) -> &'a [f64] {
        let tr = self.trees[g].trajectory(joint[g]);
        let (s, a) = (tr.states[t], tr.actions[t]);
        let inst = self.inst;
        for &k in &self.tau_at[g][s][a] {
            if self.tau_triggered(k, joint, t) {
                return &inst.tau[k].dist;
            }
        }
        &inst.agents[g].transitions[s][a]
    }

    fn check_joint(&self, joint: &[usize]) -> Result<(), HistoryError> {
        if joint.len() != self.trees.len() {
            return Err(HistoryError::MissingContext {
                expected: self.trees.len(),
                got: joint.len(),
            });
        }
        for (g, (&h, tree)) in joint.iter().zip(&self.trees).enumerate() {
            if h >= tree.num_terminals() {
                return Err(HistoryError::TerminalOutOfRange { agent: g, terminal: h });
            }
        }
        Ok(())
    }

    /// `beta(h_g | h_-g)`; `joint[g]` is `h_g`, the rest is the context.
    pub fn conditional_beta(&self, g: usize, joint: &[usize]) -> Result<f64, HistoryError> {
        self.check_joint(joint)?;
        Ok(self.beta(g, joint))
    }

    /// Unchecked form of [`Self::conditional_beta`].
    pub fn beta(&self, g: usize, joint: &[usize]) -> f64 {
        let tr = self.trees[g].trajectory(joint[g]);
        let mut p = 1.0;
        for t in 0..self.inst.horizon - 1 {
            p *= self.distribution_at(g, joint, t)[tr.states[t + 1]];
            if p == 0.0 {
                break;
            }
        }
        p
    }

    /// `r_g(h_g | h_-g)`: local rewards plus `r_k / m_k` of each satisfied
    /// reward interaction `g` takes part in.
    pub fn history_reward(&self, g: usize, joint: &[usize]) -> Result<f64, HistoryError> {
        self.check_joint(joint)?;
        Ok(self.reward(g, joint))
    }

    /// Unchecked form of [`Self::history_reward`].
    pub fn reward(&self, g: usize, joint: &[usize]) -> f64 {
        let mut r = self.local_reward(g, joint);
        for (k, entry) in self.inst.rho.iter().enumerate() {
            if entry.involves(g) && self.rho_satisfied(k, joint) {
                r += entry.reward / entry.pairs.len() as f64;
            }
        }
        r
    }

    /// Local reward of `h_g` without any reward interaction.
    pub fn local_reward(&self, g: usize, joint: &[usize]) -> f64 {
        let model = &self.inst.agents[g];
        let tr = self.trees[g].trajectory(joint[g]);
        let horizon = self.inst.horizon;
        let mut r = 0.0;
        for t in 0..horizon - 1 {
            r += model.rewards[tr.states[t]][tr.actions[t]][tr.states[t + 1]];
        }
        if self.inst.terminal_reward_mode == TerminalRewardMode::Expected {
            let t = horizon - 1;
            let dist = self.distribution_at(g, joint, t);
            r += model.expected_reward(tr.states[t], tr.actions[t], dist);
        }
        r
    }

    pub fn rho_satisfied(&self, k: usize, joint: &[usize]) -> bool {
        self.inst.rho[k]
            .pairs
            .iter()
            .zip(&self.rho_slots[k])
            .all(|(p, &slot)| self.first_exec(p.agent, joint[p.agent], slot).is_some())
    }

    /// `beta(h) r(h)` with every satisfied reward interaction counted once.
    pub fn joint_value(&self, joint: &[usize]) -> Result<JointValue, HistoryError> {
        self.check_joint(joint)?;
        Ok(self.joint_value_unchecked(joint))
    }

    pub fn joint_value_unchecked(&self, joint: &[usize]) -> JointValue {
        let beta: f64 = (0..joint.len()).map(|g| self.beta(g, joint)).product();
        let mut reward: f64 = (0..joint.len()).map(|g| self.local_reward(g, joint)).sum();
        for (k, entry) in self.inst.rho.iter().enumerate() {
            if self.rho_satisfied(k, joint) {
                reward += entry.reward;
            }
        }
        JointValue {
            beta,
            reward,
            value: beta * reward,
        }
    }
}
