//! EDI-CR instances: per-agent local MDPs tied together by reward (`rho`)
//! and transition (`tau`) interaction lists.
//!
//! Instances are stored in index form (states, actions and agents are
//! `usize` ids into the owning [`AgentModel`]); names only matter at the
//! file boundary. See [`parse_instance`] and [`Instance::to_json`].

use std::collections::BTreeSet;
use std::fmt;

use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Absolute tolerance used for every probability comparison in this layer.
pub const PROB_TOL: f64 = 1e-9;

/// Largest horizon supported; occurrence-time bitmasks are stored in a `u64`.
pub const MAX_HORIZON: usize = 64;

/// The wildcard state marker in instance files.
pub const WILDCARD: &str = "*";

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("syntax error at {path} (line {line}, column {column}): {message}")]
    Syntax {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{context}: unknown agent {agent} (instance has {count} agents)")]
    UnknownAgent {
        context: String,
        agent: usize,
        count: usize,
    },
    #[error("{context}: unknown state `{state}` for agent `{agent}`")]
    UnknownState {
        context: String,
        agent: String,
        state: String,
    },
    #[error("{context}: unknown action `{action}` for agent `{agent}`")]
    UnknownAction {
        context: String,
        agent: String,
        action: String,
    },
    #[error("{context}: malformed distribution: {reason}")]
    Distribution { context: String, reason: String },
    #[error("{context}: {reason}")]
    Structure { context: String, reason: String },
    #[error("invalid instance: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error("trigger flag count mismatch: expected {expected}, got {got}")]
    FlagCount { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// A `(agent, state, action)` triple; `state == None` is the wildcard.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct InteractionPair {
    pub agent: usize,
    pub state: Option<usize>,
    pub action: usize,
}

impl InteractionPair {
    pub fn new(agent: usize, state: Option<usize>, action: usize) -> Self {
        Self {
            agent,
            state,
            action,
        }
    }

    /// True when `agent` executing `action` in `state` realizes this pair.
    #[inline]
    pub fn matches(&self, agent: usize, state: usize, action: usize) -> bool {
        self.agent == agent && self.action == action && self.state.is_none_or(|s| s == state)
    }

    /// Whether some executed `(state, action)` of one agent can match both pairs.
    pub fn overlaps(&self, other: &InteractionPair) -> bool {
        self.agent == other.agent
            && self.action == other.action
            && match (self.state, other.state) {
                (Some(a), Some(b)) => a == b,
                _ => true,
            }
    }
}

/// Team reward paid once when every listed pair is executed.
#[derive(Clone, Debug, PartialEq)]
pub struct RhoEntry {
    pub pairs: Vec<InteractionPair>,
    pub reward: f64,
}

impl RhoEntry {
    pub fn involves(&self, agent: usize) -> bool {
        self.pairs.iter().any(|p| p.agent == agent)
    }

    pub fn pair_of(&self, agent: usize) -> Option<&InteractionPair> {
        self.pairs.iter().find(|p| p.agent == agent)
    }
}

/// Replaces the transition distribution of `affected` once every `affecting`
/// pair has been executed at a strictly earlier time step.
#[derive(Clone, Debug, PartialEq)]
pub struct TauEntry {
    pub affecting: Vec<InteractionPair>,
    pub affected: InteractionPair,
    /// Dense over the affected agent's states.
    pub dist: Vec<f64>,
}

impl TauEntry {
    pub fn affecting_agents(&self) -> impl Iterator<Item = usize> + '_ {
        self.affecting.iter().map(|p| p.agent)
    }

    pub fn affecting_pair_of(&self, agent: usize) -> Option<&InteractionPair> {
        self.affecting.iter().find(|p| p.agent == agent)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentModel {
    pub name: String,
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub initial: usize,
    /// `transitions[s][a][s']`
    pub transitions: Vec<Vec<Vec<f64>>>,
    /// `rewards[s][a][s']`
    pub rewards: Vec<Vec<Vec<f64>>>,
}

impl AgentModel {
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn state_id(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s == name)
    }

    pub fn action_id(&self, name: &str) -> Option<usize> {
        self.actions.iter().position(|a| a == name)
    }

    /// Expected immediate reward of `(state, action)` under `dist`.
    pub fn expected_reward(&self, state: usize, action: usize, dist: &[f64]) -> f64 {
        dist.iter()
            .zip(&self.rewards[state][action])
            .map(|(p, r)| p * r)
            .sum()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TerminalRewardMode {
    /// Local rewards are summed over the first `T - 1` transitions only.
    #[default]
    None,
    /// Also credit the expected reward of the final action.
    Expected,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub agents: Vec<AgentModel>,
    pub rho: Vec<RhoEntry>,
    pub tau: Vec<TauEntry>,
    pub horizon: usize,
    pub terminal_reward_mode: TerminalRewardMode,
}

/// Findings of [`Instance::validate`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }
}

impl Instance {
    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    /// Number of time steps whose transition outcome is part of a history
    /// (`T - 1`), or `T` when the final action's reward is also credited.
    pub fn relevant_steps(&self) -> usize {
        match self.terminal_reward_mode {
            TerminalRewardMode::None => self.horizon - 1,
            TerminalRewardMode::Expected => self.horizon,
        }
    }

    /// Indices of tau entries whose affected pair matches, in instance order.
    pub fn matching_tau(&self, agent: usize, state: usize, action: usize) -> Vec<usize> {
        self.tau
            .iter()
            .enumerate()
            .filter(|(_, e)| e.affected.matches(agent, state, action))
            .map(|(k, _)| k)
            .collect()
    }

    fn check_sa(&self, agent: usize, state: usize, action: usize) -> Result<()> {
        let Some(model) = self.agents.get(agent) else {
            return Err(ModelError::UnknownAgent {
                context: "query".into(),
                agent,
                count: self.agents.len(),
            });
        };
        if state >= model.num_states() {
            return Err(ModelError::UnknownState {
                context: "query".into(),
                agent: model.name.clone(),
                state: state.to_string(),
            });
        }
        if action >= model.num_actions() {
            return Err(ModelError::UnknownAction {
                context: "query".into(),
                agent: model.name.clone(),
                action: action.to_string(),
            });
        }
        Ok(())
    }

    /// States reachable with positive probability from `(state, action)` under
    /// the base distribution or any matching tau replacement, ascending.
    pub fn successor_support(&self, agent: usize, state: usize, action: usize) -> Result<Vec<usize>> {
        self.check_sa(agent, state, action)?;
        let mut support = BTreeSet::new();
        let base = &self.agents[agent].transitions[state][action];
        support.extend(base.iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(s, _)| s));
        for k in self.matching_tau(agent, state, action) {
            let dist = &self.tau[k].dist;
            support.extend(dist.iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(s, _)| s));
        }
        Ok(support.into_iter().collect())
    }

    /// Transition distribution of `(state, action)` given which matching tau
    /// entries (in instance order) are triggered. The first triggered entry
    /// wins; with none triggered the base distribution applies.
    pub fn effective_distribution(
        &self,
        agent: usize,
        state: usize,
        action: usize,
        trigger_flags: &[bool],
    ) -> Result<&[f64]> {
        self.check_sa(agent, state, action)?;
        let matching = self.matching_tau(agent, state, action);
        if matching.len() != trigger_flags.len() {
            return Err(ModelError::FlagCount {
                expected: matching.len(),
                got: trigger_flags.len(),
            });
        }
        let chosen = matching
            .iter()
            .zip(trigger_flags)
            .find(|(_, &on)| on)
            .map(|(&k, _)| self.tau[k].dist.as_slice());
        Ok(chosen.unwrap_or(&self.agents[agent].transitions[state][action]))
    }

    /// Checks every structural invariant. Never fails; findings are reported.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let errors = &mut report.errors;
        let n = self.agents.len();
        if n < 2 {
            errors.push(format!("instance needs at least 2 agents, has {n}"));
        }
        if self.horizon == 0 || self.horizon > MAX_HORIZON {
            errors.push(format!("horizon {} outside 1..={MAX_HORIZON}", self.horizon));
        }

        for model in &self.agents {
            let ns = model.num_states();
            let na = model.num_actions();
            if ns == 0 || na == 0 {
                errors.push(format!("agent `{}` needs at least one state and one action", model.name));
                continue;
            }
            if model.initial >= ns {
                errors.push(format!("agent `{}`: initial state out of range", model.name));
            }
            if model.transitions.len() != ns || model.rewards.len() != ns {
                errors.push(format!("agent `{}`: transition/reward tables have wrong shape", model.name));
                continue;
            }
            for s in 0..ns {
                if model.transitions[s].len() != na || model.rewards[s].len() != na {
                    errors.push(format!("agent `{}`: tables have wrong shape at state {}", model.name, model.states[s]));
                    continue;
                }
                for a in 0..na {
                    let ctx = format!("agent `{}` ({}, {})", model.name, model.states[s], model.actions[a]);
                    if let Err(e) = check_distribution(&model.transitions[s][a], ns) {
                        errors.push(format!("{ctx}: {e}"));
                    }
                    if model.rewards[s][a].len() != ns {
                        errors.push(format!("{ctx}: reward row has wrong length"));
                    }
                }
            }
            let mut seen = BTreeSet::new();
            for s in &model.states {
                if !seen.insert(s) {
                    errors.push(format!("agent `{}`: duplicate state `{s}`", model.name));
                }
                if s == WILDCARD {
                    errors.push(format!("agent `{}`: `*` is reserved", model.name));
                }
            }
            let mut seen = BTreeSet::new();
            for a in &model.actions {
                if !seen.insert(a) {
                    errors.push(format!("agent `{}`: duplicate action `{a}`", model.name));
                }
            }
        }

        let pair_ok = |pair: &InteractionPair, ctx: &str, errors: &mut Vec<String>| -> bool {
            let Some(model) = self.agents.get(pair.agent) else {
                errors.push(format!("{ctx}: unknown agent {} (instance has {n} agents)", pair.agent));
                return false;
            };
            let mut ok = true;
            if pair.action >= model.num_actions() {
                errors.push(format!("{ctx}: unknown action {} for agent `{}`", pair.action, model.name));
                ok = false;
            }
            if let Some(s) = pair.state {
                if s >= model.num_states() {
                    errors.push(format!("{ctx}: unknown state {s} for agent `{}`", model.name));
                    ok = false;
                }
            }
            ok
        };

        for (k, entry) in self.rho.iter().enumerate() {
            let ctx = format!("rho[{k}]");
            if entry.pairs.is_empty() {
                errors.push(format!("{ctx}: no pairs"));
            }
            let mut agents = BTreeSet::new();
            for p in &entry.pairs {
                pair_ok(p, &ctx, errors);
                if !agents.insert(p.agent) {
                    errors.push(format!("{ctx}: agent {} appears twice", p.agent));
                }
            }
            if !entry.reward.is_finite() {
                errors.push(format!("{ctx}: reward is not finite"));
            }
        }

        for (k, entry) in self.tau.iter().enumerate() {
            let ctx = format!("tau[{k}]");
            if entry.affecting.is_empty() {
                errors.push(format!("{ctx}: no affecting pairs"));
            }
            let mut agents = BTreeSet::new();
            for p in &entry.affecting {
                pair_ok(p, &ctx, errors);
                if !agents.insert(p.agent) {
                    errors.push(format!("{ctx}: affecting agent {} appears twice", p.agent));
                }
            }
            if pair_ok(&entry.affected, &ctx, errors) {
                if agents.contains(&entry.affected.agent) {
                    errors.push(format!("{ctx}: affected agent {} is also affecting", entry.affected.agent));
                }
                let ns = self.agents[entry.affected.agent].num_states();
                if let Err(e) = check_distribution(&entry.dist, ns) {
                    errors.push(format!("{ctx}: {e}"));
                }
            }
        }

        for (a, ea) in self.tau.iter().enumerate() {
            for (b, eb) in self.tau.iter().enumerate().skip(a + 1) {
                if ea.affected.overlaps(&eb.affected) {
                    report.warnings.push(format!(
                        "overlapping affected pairs: tau[{a}] and tau[{b}] can match the same step (tau[{a}] wins when both trigger)"
                    ));
                }
            }
        }
        report
    }

    /// Canonical JSON text (states/actions in id order, zero rewards omitted).
    pub fn to_json(&self) -> String {
        let file = InstanceFile::from_instance(self);
        let mut text = serde_json::to_string_pretty(&file).expect("instance serializes");
        text.push('\n');
        text
    }
}

fn check_distribution(dist: &[f64], num_states: usize) -> std::result::Result<(), String> {
    if dist.len() != num_states {
        return Err(format!("distribution has {} entries, expected {num_states}", dist.len()));
    }
    if let Some(p) = dist.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(format!("negative or non-finite probability {p}"));
    }
    let sum: f64 = dist.iter().sum();
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(format!("distribution sum {sum} differs from 1"));
    }
    Ok(())
}

/// Parses and validates an instance file.
pub fn parse_instance(text: &str) -> Result<Instance> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: InstanceFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let inner = e.inner();
        ModelError::Syntax {
            path: e.path().to_string(),
            line: inner.line(),
            column: inner.column(),
            message: inner.to_string(),
        }
    })?;
    let inst = file.into_instance()?;
    let report = inst.validate();
    if !report.is_ok() {
        return Err(ModelError::Invalid(report.errors));
    }
    Ok(inst)
}

/// Free-function form of [`Instance::validate`].
pub fn validate_instance(inst: &Instance) -> ValidationReport {
    inst.validate()
}

// ---------------------------------------------------------------------------
// File representation
// ---------------------------------------------------------------------------

/// Ordered `state -> probability` map, serialized as a JSON object.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DistFile(pub Vec<(String, f64)>);

impl Serialize for DistFile {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for DistFile {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct DistVisitor;
        impl<'de> Visitor<'de> for DistVisitor {
            type Value = DistFile;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object mapping state names to probabilities")
            }
            fn visit_map<M: MapAccess<'de>>(self, mut access: M) -> std::result::Result<DistFile, M::Error> {
                let mut entries: Vec<(String, f64)> = Vec::new();
                while let Some((k, v)) = access.next_entry::<String, f64>()? {
                    if entries.iter().any(|(e, _)| *e == k) {
                        return Err(serde::de::Error::custom(format!("duplicate state `{k}` in distribution")));
                    }
                    entries.push((k, v));
                }
                Ok(DistFile(entries))
            }
        }
        deserializer.deserialize_map(DistVisitor)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairFile {
    pub agent: usize,
    pub state: String,
    pub action: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionFile {
    pub state: String,
    pub action: String,
    pub dist: DistFile,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardFile {
    pub state: String,
    pub action: String,
    pub next: String,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentFile {
    pub name: String,
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub initial: String,
    pub transitions: Vec<TransitionFile>,
    #[serde(default)]
    pub rewards: Vec<RewardFile>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RhoFile {
    pub pairs: Vec<PairFile>,
    pub reward: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TauFile {
    pub affecting: Vec<PairFile>,
    pub affected: PairFile,
    pub dist: DistFile,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub horizon: usize,
    #[serde(default)]
    pub terminal_reward_mode: TerminalRewardMode,
    pub agents: Vec<AgentFile>,
    #[serde(default)]
    pub rho: Vec<RhoFile>,
    #[serde(default)]
    pub tau: Vec<TauFile>,
}

fn dense_dist(model: &AgentModel, dist: &DistFile, context: &str) -> Result<Vec<f64>> {
    let mut out = vec![0.0; model.num_states()];
    for (name, p) in &dist.0 {
        let s = model.state_id(name).ok_or_else(|| ModelError::UnknownState {
            context: context.to_string(),
            agent: model.name.clone(),
            state: name.clone(),
        })?;
        out[s] = *p;
    }
    check_distribution(&out, model.num_states()).map_err(|reason| ModelError::Distribution {
        context: context.to_string(),
        reason,
    })?;
    Ok(out)
}

fn sparse_dist(model: &AgentModel, dist: &[f64]) -> DistFile {
    DistFile(
        dist.iter()
            .enumerate()
            .filter(|(_, &p)| p != 0.0)
            .map(|(s, &p)| (model.states[s].clone(), p))
            .collect(),
    )
}

impl AgentFile {
    fn into_model(self) -> Result<AgentModel> {
        let ctx = format!("agent `{}`", self.name);
        let ns = self.states.len();
        let na = self.actions.len();
        let mut model = AgentModel {
            name: self.name,
            states: self.states,
            actions: self.actions,
            initial: 0,
            transitions: vec![vec![Vec::new(); na]; ns],
            rewards: vec![vec![vec![0.0; ns]; na]; ns],
        };
        model.initial = model.state_id(&self.initial).ok_or_else(|| ModelError::UnknownState {
            context: format!("{ctx} initial"),
            agent: model.name.clone(),
            state: self.initial.clone(),
        })?;
        let sa = |model: &AgentModel, state: &str, action: &str, c: &str| -> Result<(usize, usize)> {
            let s = model.state_id(state).ok_or_else(|| ModelError::UnknownState {
                context: c.to_string(),
                agent: model.name.clone(),
                state: state.to_string(),
            })?;
            let a = model.action_id(action).ok_or_else(|| ModelError::UnknownAction {
                context: c.to_string(),
                agent: model.name.clone(),
                action: action.to_string(),
            })?;
            Ok((s, a))
        };
        for (i, t) in self.transitions.iter().enumerate() {
            let c = format!("{ctx} transitions[{i}]");
            let (s, a) = sa(&model, &t.state, &t.action, &c)?;
            if !model.transitions[s][a].is_empty() {
                return Err(ModelError::Structure {
                    context: c,
                    reason: format!("duplicate transition for ({}, {})", t.state, t.action),
                });
            }
            model.transitions[s][a] = dense_dist(&model, &t.dist, &c)?;
        }
        for s in 0..ns {
            for a in 0..na {
                if model.transitions[s][a].is_empty() {
                    return Err(ModelError::Structure {
                        context: ctx.clone(),
                        reason: format!("missing transition for ({}, {})", model.states[s], model.actions[a]),
                    });
                }
            }
        }
        for (i, r) in self.rewards.iter().enumerate() {
            let c = format!("{ctx} rewards[{i}]");
            let (s, a) = sa(&model, &r.state, &r.action, &c)?;
            let next = model.state_id(&r.next).ok_or_else(|| ModelError::UnknownState {
                context: c.clone(),
                agent: model.name.clone(),
                state: r.next.clone(),
            })?;
            model.rewards[s][a][next] += r.value;
        }
        Ok(model)
    }
}

fn resolve_pair(agents: &[AgentModel], pair: &PairFile, context: &str) -> Result<InteractionPair> {
    let model = agents.get(pair.agent).ok_or_else(|| ModelError::UnknownAgent {
        context: context.to_string(),
        agent: pair.agent,
        count: agents.len(),
    })?;
    let state = if pair.state == WILDCARD {
        None
    } else {
        Some(model.state_id(&pair.state).ok_or_else(|| ModelError::UnknownState {
            context: context.to_string(),
            agent: model.name.clone(),
            state: pair.state.clone(),
        })?)
    };
    let action = model.action_id(&pair.action).ok_or_else(|| ModelError::UnknownAction {
        context: context.to_string(),
        agent: model.name.clone(),
        action: pair.action.clone(),
    })?;
    Ok(InteractionPair { agent: pair.agent, state, action })
}

fn pair_file(agents: &[AgentModel], pair: &InteractionPair) -> PairFile {
    let model = &agents[pair.agent];
    PairFile {
        agent: pair.agent,
        state: pair.state.map_or_else(|| WILDCARD.to_string(), |s| model.states[s].clone()),
        action: model.actions[pair.action].clone(),
    }
}

impl InstanceFile {
    pub fn into_instance(self) -> Result<Instance> {
        let agents = self
            .agents
            .into_iter()
            .map(AgentFile::into_model)
            .collect::<Result<Vec<_>>>()?;
        let mut rho = Vec::with_capacity(self.rho.len());
        for (k, r) in self.rho.iter().enumerate() {
            let ctx = format!("rho[{k}]");
            let pairs = r
                .pairs
                .iter()
                .map(|p| resolve_pair(&agents, p, &ctx))
                .collect::<Result<Vec<_>>>()?;
            rho.push(RhoEntry { pairs, reward: r.reward });
        }
        let mut tau = Vec::with_capacity(self.tau.len());
        for (k, t) in self.tau.iter().enumerate() {
            let ctx = format!("tau[{k}]");
            let affecting = t
                .affecting
                .iter()
                .map(|p| resolve_pair(&agents, p, &ctx))
                .collect::<Result<Vec<_>>>()?;
            let affected = resolve_pair(&agents, &t.affected, &ctx)?;
            let dist = dense_dist(&agents[affected.agent], &t.dist, &ctx)?;
            tau.push(TauEntry { affecting, affected, dist });
        }
        Ok(Instance {
            agents,
            rho,
            tau,
            horizon: self.horizon,
            terminal_reward_mode: self.terminal_reward_mode,
        })
    }

    pub fn from_instance(inst: &Instance) -> Self {
        let agents = inst
            .agents
            .iter()
            .map(|m| {
                let mut transitions = Vec::new();
                let mut rewards = Vec::new();
                for s in 0..m.num_states() {
                    for a in 0..m.num_actions() {
                        transitions.push(TransitionFile {
                            state: m.states[s].clone(),
                            action: m.actions[a].clone(),
                            dist: sparse_dist(m, &m.transitions[s][a]),
                        });
                        for (next, &value) in m.rewards[s][a].iter().enumerate() {
                            if value != 0.0 {
                                rewards.push(RewardFile {
                                    state: m.states[s].clone(),
                                    action: m.actions[a].clone(),
                                    next: m.states[next].clone(),
                                    value,
                                });
                            }
                        }
                    }
                }
                AgentFile {
                    name: m.name.clone(),
                    states: m.states.clone(),
                    actions: m.actions.clone(),
                    initial: m.states[m.initial].clone(),
                    transitions,
                    rewards,
                }
            })
            .collect();
        InstanceFile {
            horizon: inst.horizon,
            terminal_reward_mode: inst.terminal_reward_mode,
            agents,
            rho: inst
                .rho
                .iter()
                .map(|r| RhoFile {
                    pairs: r.pairs.iter().map(|p| pair_file(&inst.agents, p)).collect(),
                    reward: r.reward,
                })
                .collect(),
            tau: inst
                .tau
                .iter()
                .map(|t| TauFile {
                    affecting: t.affecting.iter().map(|p| pair_file(&inst.agents, p)).collect(),
                    affected: pair_file(&inst.agents, &t.affected),
                    dist: sparse_dist(&inst.agents[t.affected.agent], &t.dist),
                })
                .collect(),
        }
    }
}
