//! Seeded generator for the Mars-rovers benchmark family.
//!
//! Each rover chooses one of `L` sites per step; a visit ends fast or slow.
//! Transition interactions raise the chance of a fast visit when another
//! rover has already visited a given site; reward interactions pay a bonus or
//! a penalty when two rovers both visit given sites.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AgentModel, Instance, InteractionPair, RhoEntry, TauEntry, TerminalRewardMode};
use crate::rng::SplitMix64;

#[derive(Debug, Error, PartialEq)]
pub enum RoverError {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("{kind} count {requested} exceeds the {available} distinct entries available")]
    Unsatisfiable { kind: &'static str, requested: usize, available: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoverParams {
    pub n_agents: usize,
    pub sites: usize,
    pub horizon: usize,
    pub n_rho: usize,
    pub n_tau: usize,
    pub seed: u64,
    pub fast_prob: (f64, f64),
    pub fast_reward: (f64, f64),
    pub slow_reward: (f64, f64),
    pub boost: (f64, f64),
    pub rho_magnitude: (f64, f64),
}

impl Default for RoverParams {
    fn default() -> Self {
        Self {
            n_agents: 2,
            sites: 3,
            horizon: 3,
            n_rho: 2,
            n_tau: 2,
            seed: 42,
            fast_prob: (0.4, 0.7),
            fast_reward: (6.0, 12.0),
            slow_reward: (1.0, 4.0),
            boost: (0.2, 0.4),
            rho_magnitude: (3.0, 8.0),
        }
    }
}

impl RoverParams {
    pub fn validate(&self) -> Result<(), RoverError> {
        let bad = |m: String| Err(RoverError::Params(m));
        if !(2..=3).contains(&self.n_agents) {
            return bad(format!("n_agents must be 2 or 3, got {}", self.n_agents));
        }
        if self.sites < 2 {
            return bad(format!("sites must be at least 2, got {}", self.sites));
        }
        if self.horizon < 2 || self.horizon > crate::model::MAX_HORIZON {
            return bad(format!("horizon must be in 2..={}, got {}", crate::model::MAX_HORIZON, self.horizon));
        }
        for (name, (lo, hi)) in [
            ("fast_prob", self.fast_prob),
            ("fast_reward", self.fast_reward),
            ("slow_reward", self.slow_reward),
            ("boost", self.boost),
            ("rho_magnitude", self.rho_magnitude),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return bad(format!("{name} range ({lo}, {hi}) is not ordered"));
            }
        }
        if self.fast_prob.0 <= 0.0 || self.fast_prob.1 >= 1.0 {
            return bad("fast_prob must lie strictly inside (0, 1)".into());
        }
        if self.boost.0 < 0.0 {
            return bad("boost must be non-negative".into());
        }
        let n = self.n_agents;
        let l2 = self.sites * self.sites;
        let tau_cap = n * (n - 1) * l2;
        if self.n_tau > tau_cap {
            return Err(RoverError::Unsatisfiable {
                kind: "tau",
                requested: self.n_tau,
                available: tau_cap,
            });
        }
        let rho_cap = n * (n - 1) / 2 * l2;
        if self.n_rho > rho_cap {
            return Err(RoverError::Unsatisfiable {
                kind: "rho",
                requested: self.n_rho,
                available: rho_cap,
            });
        }
        Ok(())
    }
}

fn state_names(sites: usize) -> Vec<String> {
    let mut s = vec!["start".to_string()];
    for m in 0..sites {
        s.push(format!("done{m}_fast"));
        s.push(format!("done{m}_slow"));
    }
    s
}

fn fast(m: usize) -> usize {
    1 + 2 * m
}

fn slow(m: usize) -> usize {
    2 + 2 * m
}

/// Generates a rover instance. Draw order: per agent (per site: fast
/// probability, fast reward, slow reward), then the transition interactions,
/// then the reward interactions.
pub fn generate_rovers(p: &RoverParams) -> Result<Instance, RoverError> {
    p.validate()?;
    let mut rng = SplitMix64::new(p.seed);
    let l = p.sites;
    let ns = 1 + 2 * l;
    let mut fast_prob = Vec::with_capacity(p.n_agents);
    let mut agents = Vec::with_capacity(p.n_agents);
    for g in 0..p.n_agents {
        let mut probs = Vec::with_capacity(l);
        let mut transitions = vec![vec![vec![0.0; ns]; l]; ns];
        let mut rewards = vec![vec![vec![0.0; ns]; l]; ns];
        for m in 0..l {
            let pm = rng.range(p.fast_prob.0, p.fast_prob.1);
            let rf = rng.range(p.fast_reward.0, p.fast_reward.1);
            let rs = rng.range(p.slow_reward.0, p.slow_reward.1);
            probs.push(pm);
            for s in 0..ns {
                transitions[s][m][fast(m)] = pm;
                transitions[s][m][slow(m)] = 1.0 - pm;
                // revisiting a site right away pays nothing
                if s != fast(m) && s != slow(m) {
                    rewards[s][m][fast(m)] = rf;
                    rewards[s][m][slow(m)] = rs;
                }
            }
        }
        fast_prob.push(probs);
        agents.push(AgentModel {
            name: format!("rover{g}"),
            states: state_names(l),
            actions: (0..l).map(|m| format!("visit{m}")).collect(),
            initial: 0,
            transitions,
            rewards,
        });
    }

    let mut tau_slots: Vec<(usize, usize, usize, usize)> = Vec::new();
    for g in 0..p.n_agents {
        for f in (0..p.n_agents).filter(|&f| f != g) {
            for m in 0..l {
                for m2 in 0..l {
                    tau_slots.push((g, f, m, m2));
                }
            }
        }
    }
    rng.shuffle(&mut tau_slots);
    let mut chosen = tau_slots[..p.n_tau].to_vec();
    chosen.sort_unstable();
    let mut tau = Vec::with_capacity(p.n_tau);
    for (g, f, m, m2) in chosen {
        let delta = rng.range(p.boost.0, p.boost.1);
        let pf = (fast_prob[g][m] + delta).min(1.0 - 1e-9);
        let mut dist = vec![0.0; ns];
        dist[fast(m)] = pf;
        dist[slow(m)] = 1.0 - pf;
        tau.push(TauEntry {
            affecting: vec![InteractionPair::new(f, None, m2)],
            affected: InteractionPair::new(g, None, m),
            dist,
        });
    }

    let mut rho_slots: Vec<(usize, usize, usize, usize)> = Vec::new();
    for g in 0..p.n_agents {
        for f in g + 1..p.n_agents {
            for m in 0..l {
                for m2 in 0..l {
                    rho_slots.push((g, f, m, m2));
                }
            }
        }
    }
    rng.shuffle(&mut rho_slots);
    let mut chosen = rho_slots[..p.n_rho].to_vec();
    chosen.sort_unstable();
    let mut rho = Vec::with_capacity(p.n_rho);
    for (g, f, m, m2) in chosen {
        let u = rng.range(p.rho_magnitude.0, p.rho_magnitude.1);
        let reward = if rng.coin(0.5) { u } else { -u };
        rho.push(RhoEntry {
            pairs: vec![InteractionPair::new(g, None, m), InteractionPair::new(f, None, m2)],
            reward,
        });
    }

    let inst = Instance {
        agents,
        rho,
        tau,
        horizon: p.horizon,
        terminal_reward_mode: TerminalRewardMode::None,
    };
    let report = inst.validate();
    assert!(report.is_ok(), "generator produced an invalid instance: {:?}", report.errors);
    Ok(inst)
}
