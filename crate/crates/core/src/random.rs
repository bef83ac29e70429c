//! Small random instances with arbitrary supports, wildcard and
//! state-specific interaction pairs; used by property tests and `check`.

use crate::model::{AgentModel, Instance, InteractionPair, RhoEntry, TauEntry, TerminalRewardMode};
use crate::rng::SplitMix64;

#[derive(Clone, Debug, PartialEq)]
pub struct RandomParams {
    pub n_agents: usize,
    pub states: usize,
    pub actions: usize,
    pub horizon: usize,
    pub max_rho: usize,
    pub max_tau: usize,
    /// Limit transition interactions to one affecting agent.
    pub single_affecting: bool,
    /// Give every distribution exactly this many outcomes.
    pub branching: Option<usize>,
}

impl Default for RandomParams {
    fn default() -> Self {
        Self {
            n_agents: 2,
            states: 3,
            actions: 2,
            horizon: 3,
            max_rho: 2,
            max_tau: 2,
            single_affecting: true,
            branching: None,
        }
    }
}

/// Distribution over `n` outcomes with a support of `branching` states, or
/// of a random size.
fn random_dist(rng: &mut SplitMix64, n: usize, branching: Option<usize>) -> Vec<f64> {
    let size = branching.map_or_else(|| 1 + rng.below(n), |c| c.min(n));
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let weights: Vec<f64> = (0..size).map(|_| (1 + rng.below(4)) as f64).collect();
    let total: f64 = weights.iter().sum();
    let mut dist = vec![0.0; n];
    for (&s, w) in order.iter().zip(&weights) {
        dist[s] = w / total;
    }
    dist
}

fn random_pair(rng: &mut SplitMix64, agent: usize, p: &RandomParams) -> InteractionPair {
    let state = if rng.coin(0.5) { None } else { Some(rng.below(p.states)) };
    InteractionPair::new(agent, state, rng.below(p.actions))
}

pub fn random_instance(seed: u64, p: &RandomParams) -> Instance {
    let mut rng = SplitMix64::new(seed);
    let agents = (0..p.n_agents)
        .map(|g| {
            let mut transitions = vec![vec![Vec::new(); p.actions]; p.states];
            let mut rewards = vec![vec![vec![0.0; p.states]; p.actions]; p.states];
            for s in 0..p.states {
                for a in 0..p.actions {
                    transitions[s][a] = random_dist(&mut rng, p.states, p.branching);
                    for r in rewards[s][a].iter_mut() {
                        if rng.coin(0.6) {
                            *r = rng.below(9) as f64;
                        }
                    }
                }
            }
            AgentModel {
                name: format!("a{g}"),
                states: (0..p.states).map(|s| format!("s{s}")).collect(),
                actions: (0..p.actions).map(|a| format!("u{a}")).collect(),
                initial: 0,
                transitions,
                rewards,
            }
        })
        .collect();

    let mut rho = Vec::new();
    for _ in 0..rng.below(p.max_rho + 1) {
        let mut members: Vec<usize> = (0..p.n_agents).collect();
        rng.shuffle(&mut members);
        let size = 2 + rng.below(p.n_agents - 1);
        let mut members = members[..size].to_vec();
        members.sort_unstable();
        let pairs = members.iter().map(|&g| random_pair(&mut rng, g, p)).collect();
        rho.push(RhoEntry {
            pairs,
            reward: rng.below(13) as f64 - 6.0,
        });
    }

    let mut tau = Vec::new();
    for _ in 0..rng.below(p.max_tau + 1) {
        let affected = rng.below(p.n_agents);
        let mut others: Vec<usize> = (0..p.n_agents).filter(|&f| f != affected).collect();
        rng.shuffle(&mut others);
        let count = if p.single_affecting { 1 } else { 1 + rng.below(others.len()) };
        let mut sources = others[..count].to_vec();
        sources.sort_unstable();
        tau.push(TauEntry {
            affecting: sources.iter().map(|&f| random_pair(&mut rng, f, p)).collect(),
            affected: random_pair(&mut rng, affected, p),
            dist: random_dist(&mut rng, p.states, p.branching),
        });
    }

    let inst = Instance {
        agents,
        rho,
        tau,
        horizon: p.horizon,
        terminal_reward_mode: TerminalRewardMode::None,
    };
    debug_assert!(inst.validate().is_ok(), "{:?}", inst.validate().errors);
    inst
}
