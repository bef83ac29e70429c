use std::collections::HashMap;

use crate::model::Instance;

use super::HistoryError;

/// Default cap on the number of nodes in one agent's history tree.
pub const DEFAULT_MAX_NODES: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HistoryNode {
    pub parent: Option<usize>,
    /// State in which `action` was taken (the initial state at the root).
    pub state: usize,
    /// `None` only at the root.
    pub action: Option<usize>,
    /// Number of actions on the path from the root.
    pub depth: usize,
}

/// A point where the policy picks an action: a non-terminal history plus
/// the state it reached. `options[a]` is the child history taking action `a`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecisionPoint {
    pub node: usize,
    pub state: usize,
    pub options: Vec<usize>,
}

/// State/action sequence of a terminal history: `T` states and `T` actions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
}

/// Sequence-form history tree of one agent, ids assigned in pre-order.
#[derive(Clone, Debug)]
pub struct HistoryTree {
    agent: usize,
    horizon: usize,
    nodes: Vec<HistoryNode>,
    children: Vec<Vec<usize>>,
    decisions: Vec<DecisionPoint>,
    node_decisions: Vec<Vec<usize>>,
    terminals: Vec<usize>,
    non_terminals: Vec<usize>,
    terminal_index: Vec<Option<usize>>,
    trajectories: Vec<Trajectory>,
}

struct Builder<'a> {
    inst: &'a Instance,
    agent: usize,
    max_nodes: usize,
    nodes: Vec<HistoryNode>,
    children: Vec<Vec<usize>>,
}

impl Builder<'_> {
    fn visit(&mut self, parent: Option<usize>, state: usize, action: Option<usize>, depth: usize) -> Result<usize, HistoryError> {
        let id = self.nodes.len();
        if id >= self.max_nodes {
            return Err(HistoryError::TooManyNodes {
                agent: self.agent,
                cap: self.max_nodes,
            });
        }
        self.nodes.push(HistoryNode {
            parent,
            state,
            action,
            depth,
        });
        self.children.push(Vec::new());
        if depth < self.inst.horizon {
            let model = &self.inst.agents[self.agent];
            let specs: Vec<(usize, usize)> = match action {
                None => (0..model.num_actions()).map(|a| (state, a)).collect(),
                Some(prev) => {
                    let support = self.inst.successor_support(self.agent, state, prev)?;
                    (0..model.num_actions())
                        .flat_map(|a| support.iter().map(move |&s| (s, a)))
                        .collect()
                }
            };
            for (s, a) in specs {
                let child = self.visit(Some(id), s, Some(a), depth + 1)?;
                self.children[id].push(child);
            }
        }
        Ok(id)
    }
}

impl HistoryTree {
    /// Enumerates every history of `agent` up to `T` actions.
    pub fn enumerate(inst: &Instance, agent: usize, max_nodes: usize) -> Result<Self, HistoryError> {
        let model = &inst.agents[agent];
        let mut b = Builder {
            inst,
            agent,
            max_nodes,
            nodes: Vec::new(),
            children: Vec::new(),
        };
        b.visit(None, model.initial, None, 0)?;
        let Builder { nodes, children, .. } = b;

        let na = model.num_actions();
        let mut decisions = Vec::new();
        let mut node_decisions = vec![Vec::new(); nodes.len()];
        let mut terminals = Vec::new();
        let mut non_terminals = Vec::new();
        let mut terminal_index = vec![None; nodes.len()];
        for (id, node) in nodes.iter().enumerate() {
            if node.depth == inst.horizon {
                terminal_index[id] = Some(terminals.len());
                terminals.push(id);
                continue;
            }
            non_terminals.push(id);
            // group children by reached state, preserving ascending state order
            let mut by_state: Vec<(usize, Vec<usize>)> = Vec::new();
            for &c in &children[id] {
                let cn = &nodes[c];
                let slot = match by_state.iter().position(|(s, _)| *s == cn.state) {
                    Some(i) => i,
                    None => {
                        by_state.push((cn.state, vec![usize::MAX; na]));
                        by_state.len() - 1
                    }
                };
                by_state[slot].1[cn.action.expect("non-root child")] = c;
            }
            by_state.sort_by_key(|(s, _)| *s);
            for (state, options) in by_state {
                node_decisions[id].push(decisions.len());
                decisions.push(DecisionPoint { node: id, state, options });
            }
        }

        let trajectories = terminals
            .iter()
            .map(|&t| {
                let mut states = Vec::with_capacity(inst.horizon);
                let mut actions = Vec::with_capacity(inst.horizon);
                let mut cur = Some(t);
                while let Some(id) = cur {
                    let n = &nodes[id];
                    if let Some(a) = n.action {
                        states.push(n.state);
                        actions.push(a);
                    }
                    cur = n.parent;
                }
                states.reverse();
                actions.reverse();
                Trajectory { states, actions }
            })
            .collect();

        Ok(Self {
            agent,
            horizon: inst.horizon,
            nodes,
            children,
            decisions,
            node_decisions,
            terminals,
            non_terminals,
            terminal_index,
            trajectories,
        })
    }

    pub fn agent(&self) -> usize {
        self.agent
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn nodes(&self) -> &[HistoryNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &HistoryNode {
        &self.nodes[id]
    }

    pub fn children(&self, id: usize) -> &[usize] {
        &self.children[id]
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Node ids of terminal histories; position in this list is the terminal id.
    pub fn terminals(&self) -> &[usize] {
        &self.terminals
    }

    pub fn num_terminals(&self) -> usize {
        self.terminals.len()
    }

    /// Node ids of non-terminal histories, root first.
    pub fn non_terminals(&self) -> &[usize] {
        &self.non_terminals
    }

    pub fn terminal_index(&self, node: usize) -> Option<usize> {
        self.terminal_index[node]
    }

    pub fn is_terminal(&self, node: usize) -> bool {
        self.terminal_index[node].is_some()
    }

    pub fn trajectory(&self, terminal: usize) -> &Trajectory {
        &self.trajectories[terminal]
    }

    pub fn decisions(&self) -> &[DecisionPoint] {
        &self.decisions
    }

    /// Decision points following a non-terminal node, by ascending state.
    pub fn decisions_after(&self, node: usize) -> &[usize] {
        &self.node_decisions[node]
    }

    pub fn decision_at(&self, node: usize, state: usize) -> Option<usize> {
        self.node_decisions[node]
            .iter()
            .copied()
            .find(|&d| self.decisions[d].state == state)
    }

    /// Canonical path `s1.a1.s2.a2...` of a node; the root is the empty string.
    pub fn path(&self, inst: &Instance, node: usize) -> String {
        let model = &inst.agents[self.agent];
        let mut parts = Vec::new();
        let mut cur = Some(node);
        while let Some(id) = cur {
            let n = &self.nodes[id];
            if let Some(a) = n.action {
                parts.push(model.actions[a].as_str());
                parts.push(model.states[n.state].as_str());
            }
            cur = n.parent;
        }
        parts.reverse();
        parts.join(".")
    }

    pub fn terminal_path(&self, inst: &Instance, terminal: usize) -> String {
        self.path(inst, self.terminals[terminal])
    }

    pub fn path_index(&self, inst: &Instance) -> HashMap<String, usize> {
        (0..self.nodes.len()).map(|id| (self.path(inst, id), id)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn tiny2_counts() {
        let inst = fixtures::tiny2();
        let t = HistoryTree::enumerate(&inst, 0, DEFAULT_MAX_NODES).unwrap();
        assert_eq!(t.num_terminals(), 8);
        assert_eq!(t.non_terminals().len(), 3);
        assert_eq!(t.decisions().len(), 5);
        assert_eq!(t.terminal_path(&inst, 0), "s0.a.sF.a");
        // children are ordered by action first, then successor state
        assert_eq!(t.terminal_path(&inst, 1), "s0.a.sS.a");
        assert_eq!(t.terminal_path(&inst, 2), "s0.a.sF.b");
        assert_eq!(t.path(&inst, 0), "");
    }

    #[test]
    fn tiny3_counts() {
        let inst = fixtures::tiny3();
        let t = HistoryTree::enumerate(&inst, 0, DEFAULT_MAX_NODES).unwrap();
        assert_eq!(t.num_terminals(), 20);
    }

    #[test]
    fn horizon_one() {
        let mut inst = fixtures::tiny2();
        inst.horizon = 1;
        let t = HistoryTree::enumerate(&inst, 1, DEFAULT_MAX_NODES).unwrap();
        assert_eq!(t.num_terminals(), 2);
        assert_eq!(t.non_terminals().len(), 1);
        assert_eq!(t.trajectory(1).actions, vec![1]);
        assert_eq!(t.trajectory(1).states, vec![0]);
    }

    #[test]
    fn terminal_shape_and_children_cover_support() {
        let inst = fixtures::tiny3();
        let t = HistoryTree::enumerate(&inst, 0, DEFAULT_MAX_NODES).unwrap();
        for z in 0..t.num_terminals() {
            let tr = t.trajectory(z);
            assert_eq!(tr.states.len(), 3);
            assert_eq!(tr.actions.len(), 3);
        }
        for &id in t.non_terminals().iter().skip(1) {
            let n = t.node(id);
            let support = inst.successor_support(0, n.state, n.action.unwrap()).unwrap();
            let states: Vec<usize> = t.decisions_after(id).iter().map(|&d| t.decisions()[d].state).collect();
            assert_eq!(states, support);
        }
    }

    #[test]
    fn node_cap() {
        let inst = fixtures::tiny3();
        assert!(matches!(
            HistoryTree::enumerate(&inst, 0, 10),
            Err(HistoryError::TooManyNodes { cap: 10, .. })
        ));
    }

    #[test]
    fn deterministic_ids() {
        let inst = fixtures::tiny3x3();
        let a = HistoryTree::enumerate(&inst, 2, DEFAULT_MAX_NODES).unwrap();
        let b = HistoryTree::enumerate(&inst, 2, DEFAULT_MAX_NODES).unwrap();
        assert_eq!(a.nodes(), b.nodes());
        assert_eq!(a.terminals(), b.terminals());
    }
}
