//! Influence-based binning of the other agents' terminal histories.
//!
//! For a terminal history `h_g`, two histories of another agent `f` land in
//! the same class when they have the same influence signature: which reward
//! interactions shared by `g` and `f` they complete, and at which occurrences
//! of `g`'s affected pairs their affecting pairs have already happened. With
//! two agents the classes are the bins; with more agents a bin is one class
//! per other agent (a product of classes).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::histories::{Evaluator, HistoryError};
use crate::model::Instance;

#[derive(Debug, Error)]
pub enum BinError {
    #[error("internal inconsistency: bin {bin} of agent {agent} history {history} mixes different effects ({detail})")]
    Inconsistent {
        agent: usize,
        history: usize,
        bin: usize,
        detail: String,
    },
    #[error("sub-bin coefficients need exactly 3 agents, instance has {0}")]
    AgentCount(usize),
    #[error("tau[{entry}] has {count} affecting agents; the n-agent bounds allow one")]
    MultiAffecting { entry: usize, count: usize },
    #[error("perspective agent {perspective} is not one of the bin's factors")]
    Perspective { perspective: usize },
    #[error("empty bin")]
    EmptyBin,
    #[error(transparent)]
    History(#[from] HistoryError),
}

/// Canonical influence record: reward-interaction booleans then
/// transition-interaction occurrence bitmasks, other agents in index order.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InfluenceSignature(pub Vec<u64>);

#[derive(Clone, Copy, Debug)]
enum Component {
    /// Reward interaction: did `f` execute its pair (slot)?
    Rho { slot: usize },
    /// Transition interaction `entry` affecting `g`: `f`'s affecting slot.
    Tau { entry: usize, slot: usize },
}

/// Everything about agent `f`'s histories that can matter to agent `g`.
#[derive(Clone, Debug)]
pub struct Influence {
    target: usize,
    source: usize,
    components: Vec<Component>,
    /// Distinct first-execution profiles over the component slots.
    profiles: Vec<Vec<u8>>,
    /// Terminal ids of `source` per profile, ascending.
    profile_members: Vec<Vec<usize>>,
    profile_of: Vec<usize>,
}

impl Influence {
    /// How histories of `source` influence histories of `target`.
    pub fn new(ev: &Evaluator, target: usize, source: usize) -> Self {
        let inst = ev.instance();
        let mut components = Vec::new();
        for (k, entry) in inst.rho.iter().enumerate() {
            if entry.involves(target) {
                if let Some(i) = entry.pairs.iter().position(|p| p.agent == source) {
                    components.push(Component::Rho {
                        slot: ev.rho_slots(k)[i],
                    });
                }
            }
        }
        for (k, entry) in inst.tau.iter().enumerate() {
            if entry.affected.agent == target {
                if let Some(i) = entry.affecting.iter().position(|p| p.agent == source) {
                    components.push(Component::Tau {
                        entry: k,
                        slot: ev.tau_slots(k)[i],
                    });
                }
            }
        }

        let mut groups: BTreeMap<Vec<u8>, Vec<usize>> = BTreeMap::new();
        let tree = ev.tree(source);
        for h in 0..tree.num_terminals() {
            let profile = ev.exec_profile(source, h);
            let key: Vec<u8> = components
                .iter()
                .map(|c| match *c {
                    Component::Rho { slot } | Component::Tau { slot, .. } => profile[slot],
                })
                .collect();
            groups.entry(key).or_default().push(h);
        }
        let mut profile_of = vec![0; tree.num_terminals()];
        let mut profiles = Vec::with_capacity(groups.len());
        let mut profile_members = Vec::with_capacity(groups.len());
        for (i, (key, members)) in groups.into_iter().enumerate() {
            for &h in &members {
                profile_of[h] = i;
            }
            profiles.push(key);
            profile_members.push(members);
        }
        Self {
            target,
            source,
            components,
            profiles,
            profile_members,
            profile_of,
        }
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn num_profiles(&self) -> usize {
        self.profiles.len()
    }

    pub fn profile_of(&self, h_source: usize) -> usize {
        self.profile_of[h_source]
    }

    pub fn profile_members(&self, profile: usize) -> &[usize] {
        &self.profile_members[profile]
    }

    /// Signature component of a profile as seen by `h_target`.
    pub fn signature(&self, ev: &Evaluator, h_target: usize, profile: usize) -> Vec<u64> {
        let inst = ev.instance();
        let tr = ev.tree(self.target).trajectory(h_target);
        let steps = inst.relevant_steps();
        let times = &self.profiles[profile];
        self.components
            .iter()
            .zip(times)
            .map(|(c, &first)| match *c {
                Component::Rho { .. } => u64::from(first != u8::MAX),
                Component::Tau { entry, .. } => {
                    let affected = &inst.tau[entry].affected;
                    let mut mask = 0u64;
                    for t in 0..steps {
                        if affected.matches(self.target, tr.states[t], tr.actions[t]) && first != u8::MAX && (first as usize) < t {
                            mask |= 1 << t;
                        }
                    }
                    mask
                }
            })
            .collect()
    }

    /// Classes of `source` histories for `h_target`: signature, then members
    /// (ascending) and the profiles they came from.
    fn classes(&self, ev: &Evaluator, h_target: usize) -> Vec<(Vec<u64>, Vec<usize>, Vec<usize>)> {
        let mut by_sig: BTreeMap<Vec<u64>, Vec<usize>> = BTreeMap::new();
        for p in 0..self.profiles.len() {
            by_sig.entry(self.signature(ev, h_target, p)).or_default().push(p);
        }
        by_sig
            .into_iter()
            .map(|(sig, profiles)| {
                let mut members: Vec<usize> = profiles.iter().flat_map(|&p| self.profile_members[p].iter().copied()).collect();
                members.sort_unstable();
                (sig, members, profiles)
            })
            .collect()
    }
}

/// Signature of `h_f` (agent `f`) as seen by `h_g` (agent `g`).
pub fn pair_signature(ev: &Evaluator, g: usize, h_g: usize, f: usize, h_f: usize) -> Vec<u64> {
    let infl = Influence::new(ev, g, f);
    infl.signature(ev, h_g, infl.profile_of(h_f))
}

/// One agent's share of a bin.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinFactor {
    pub agent: usize,
    pub signature: Vec<u64>,
    /// Terminal ids, ascending.
    pub members: Vec<usize>,
}

/// A set of other-agent history tuples with identical effect on one `h_g`:
/// the product of its factors' member lists.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bin {
    pub factors: Vec<BinFactor>,
}

impl Bin {
    pub fn signature(&self) -> InfluenceSignature {
        InfluenceSignature(self.factors.iter().flat_map(|f| f.signature.iter().copied()).collect())
    }

    pub fn member_count(&self) -> usize {
        self.factors.iter().map(|f| f.members.len()).product()
    }

    pub fn factor(&self, agent: usize) -> Option<&BinFactor> {
        self.factors.iter().find(|f| f.agent == agent)
    }

    /// Writes the lowest member of every factor into `joint`.
    pub fn fill_representative(&self, joint: &mut [usize]) {
        for f in &self.factors {
            joint[f.agent] = f.members[0];
        }
    }

    /// Calls `visit` with `joint` set to every member tuple in turn.
    pub fn for_each_member(&self, joint: &mut [usize], mut visit: impl FnMut(&[usize])) {
        let sizes: Vec<usize> = self.factors.iter().map(|f| f.members.len()).collect();
        let mut idx = vec![0; sizes.len()];
        loop {
            for (f, &i) in self.factors.iter().zip(&idx) {
                joint[f.agent] = f.members[i];
            }
            visit(joint);
            if !crate::util::advance(&mut idx, &sizes) {
                break;
            }
        }
    }
}

/// Bins of every terminal history of one agent.
#[derive(Clone, Debug)]
pub struct BinSet {
    pub agent: usize,
    pub bins: Vec<Vec<Bin>>,
}

impl BinSet {
    /// Number of compound variables this agent contributes.
    pub fn z_count(&self) -> usize {
        self.bins.iter().map(Vec::len).sum()
    }

    /// `history path -> [(signature, member count)]`, one line per history.
    pub fn dump(&self, ev: &Evaluator) -> String {
        let inst = ev.instance();
        let tree = ev.tree(self.agent);
        let mut out = String::new();
        for (h, bins) in self.bins.iter().enumerate() {
            let entries: Vec<String> = bins
                .iter()
                .map(|b| format!("({:?}, {})", b.signature().0, b.member_count()))
                .collect();
            let _ = writeln!(out, "{} -> [{}]", tree.terminal_path(inst, h), entries.join(", "));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BinValue {
    pub reward: f64,
    pub beta: f64,
    /// `reward * beta`, the objective coefficient of the bin's compound variable.
    pub value: f64,
}

fn joint_for(n: usize, g: usize, h_g: usize) -> Vec<usize> {
    let mut joint = vec![0; n];
    joint[g] = h_g;
    joint
}

/// Reward and transition probability of `h_g` given any member of `bin`.
pub fn bin_value(ev: &Evaluator, g: usize, h_g: usize, bin: &Bin) -> Result<BinValue, BinError> {
    if bin.factors.iter().any(|f| f.members.is_empty()) {
        return Err(BinError::EmptyBin);
    }
    let mut joint = joint_for(ev.num_agents(), g, h_g);
    bin.fill_representative(&mut joint);
    let reward = ev.history_reward(g, &joint)?;
    let beta = ev.conditional_beta(g, &joint)?;
    Ok(BinValue {
        reward,
        beta,
        value: reward * beta,
    })
}

/// Builds the bins of every terminal history of agent `g`.
pub fn build_bins(ev: &Evaluator, g: usize) -> Result<BinSet, BinError> {
    let n = ev.num_agents();
    let influences: Vec<Influence> = (0..n).filter(|&f| f != g).map(|f| Influence::new(ev, g, f)).collect();
    let num = ev.tree(g).num_terminals();
    let bins = (0..num)
        .into_par_iter()
        .map(|h_g| bins_of(ev, g, h_g, &influences))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(BinSet { agent: g, bins })
}

pub fn build_all_bins(ev: &Evaluator) -> Result<Vec<BinSet>, BinError> {
    (0..ev.num_agents()).map(|g| build_bins(ev, g)).collect()
}

fn bins_of(ev: &Evaluator, g: usize, h_g: usize, influences: &[Influence]) -> Result<Vec<Bin>, BinError> {
    let per_agent: Vec<_> = influences.iter().map(|infl| infl.classes(ev, h_g)).collect();
    let sizes: Vec<usize> = per_agent.iter().map(Vec::len).collect();
    let mut idx = vec![0; sizes.len()];
    let mut bins = Vec::new();
    loop {
        let factors = influences
            .iter()
            .zip(&per_agent)
            .zip(&idx)
            .map(|((infl, classes), &i)| BinFactor {
                agent: infl.source,
                signature: classes[i].0.clone(),
                members: classes[i].1.clone(),
            })
            .collect();
        bins.push(Bin { factors });
        if !crate::util::advance(&mut idx, &sizes) {
            break;
        }
    }

    // every profile folded into a class must see the same beta and reward
    let n = ev.num_agents();
    for (b, bin) in bins.iter().enumerate() {
        let mut joint = joint_for(n, g, h_g);
        bin.fill_representative(&mut joint);
        let beta = ev.beta(g, &joint);
        let reward = ev.reward(g, &joint);
        for (fi, infl) in influences.iter().enumerate() {
            let class = per_agent[fi]
                .iter()
                .find(|c| c.1 == bin.factors[fi].members)
                .expect("factor comes from a class");
            for &p in &class.2 {
                let mut probe = joint.clone();
                probe[infl.source] = infl.profile_members[p][0];
                let (pb, pr) = (ev.beta(g, &probe), ev.reward(g, &probe));
                if pb != beta || pr != reward {
                    return Err(BinError::Inconsistent {
                        agent: g,
                        history: h_g,
                        bin: b,
                        detail: format!("beta {beta} vs {pb}, reward {reward} vs {pr}"),
                    });
                }
            }
        }
    }
    Ok(bins)
}

/// One other agent's view from a fixed history: the agent, the class id of
/// each of its terminal histories, and the class stride in the bin id.
type ClassMap = (usize, Vec<u32>, usize);

/// Constant-time lookup of the bin holding a tuple of other-agent histories.
#[derive(Clone, Debug)]
pub struct BinIndex {
    /// `[g][h_g]`, other agents in index order.
    classes: Vec<Vec<Vec<ClassMap>>>,
}

impl BinIndex {
    pub fn new(sets: &[BinSet]) -> Self {
        let classes = sets
            .iter()
            .map(|set| {
                set.bins
                    .iter()
                    .map(|bins| {
                        let nf = bins[0].factors.len();
                        let mut sizes = vec![0usize; nf];
                        let mut class_of: Vec<Vec<u32>> = vec![Vec::new(); nf];
                        // bins enumerate the class product with the last factor fastest
                        for (i, size) in sizes.iter_mut().enumerate() {
                            let mut seen: Vec<&Vec<u64>> = Vec::new();
                            for b in bins {
                                let sig = &b.factors[i].signature;
                                if !seen.contains(&sig) {
                                    seen.push(sig);
                                }
                            }
                            *size = seen.len();
                        }
                        let mut stride = vec![1usize; nf];
                        for i in (0..nf.saturating_sub(1)).rev() {
                            stride[i] = stride[i + 1] * sizes[i + 1];
                        }
                        for i in 0..nf {
                            let len = bins.iter().flat_map(|b| b.factors[i].members.iter()).max().map_or(0, |m| m + 1);
                            class_of[i] = vec![0; len];
                            for c in 0..sizes[i] {
                                for &m in &bins[c * stride[i]].factors[i].members {
                                    class_of[i][m] = c as u32;
                                }
                            }
                        }
                        (0..nf).map(|i| (bins[0].factors[i].agent, std::mem::take(&mut class_of[i]), stride[i])).collect()
                    })
                    .collect()
            })
            .collect();
        Self { classes }
    }

    /// Bin of `h_g` containing the other agents' histories in `joint`.
    pub fn bin_of(&self, g: usize, h_g: usize, joint: &[usize]) -> usize {
        self.classes[g][h_g]
            .iter()
            .map(|(f, class_of, stride)| class_of[joint[*f]] as usize * stride)
            .sum()
    }
}

/// Rejects instances the n-agent bounds cannot handle.
pub fn check_single_affecting(inst: &Instance) -> Result<(), BinError> {
    for (k, entry) in inst.tau.iter().enumerate() {
        if entry.affecting.len() != 1 {
            return Err(BinError::MultiAffecting {
                entry: k,
                count: entry.affecting.len(),
            });
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubbinCoefficient {
    pub history: usize,
    /// With both `min(., 1)` clamps applied.
    pub clamped: f64,
    /// The same sum with no clamping.
    pub unclamped: f64,
}

/// Precomputed influences between every ordered pair of agents, used by the
/// three-agent upper bounds.
#[derive(Clone, Debug)]
pub struct SubbinContext {
    influences: Vec<Vec<Option<Influence>>>,
}

impl SubbinContext {
    pub fn new(ev: &Evaluator) -> Result<Self, BinError> {
        let n = ev.num_agents();
        if n != 3 {
            return Err(BinError::AgentCount(n));
        }
        check_single_affecting(ev.instance())?;
        let influences = (0..n)
            .map(|t| (0..n).map(|s| (s != t).then(|| Influence::new(ev, t, s))).collect())
            .collect();
        Ok(Self { influences })
    }

    /// Coefficients of `x(h_f)` for each `h_f` in the perspective agent's
    /// factor of `bin`: sub-bin the other factor by its effect on `h_f`,
    /// clamp each sub-bin's probability mass at 1, then clamp the total.
    pub fn coefficients(&self, ev: &Evaluator, g: usize, h_g: usize, bin: &Bin, perspective: usize) -> Result<Vec<SubbinCoefficient>, BinError> {
        let f_factor = bin.factor(perspective).ok_or(BinError::Perspective { perspective })?;
        let e_factor = bin
            .factors
            .iter()
            .find(|x| x.agent != perspective)
            .ok_or(BinError::Perspective { perspective })?;
        let (f, e) = (perspective, e_factor.agent);
        let infl = self.influences[f][e].as_ref().expect("distinct agents");

        let mut joint = joint_for(ev.num_agents(), g, h_g);
        let mut out = Vec::with_capacity(f_factor.members.len());
        for &h_f in &f_factor.members {
            joint[f] = h_f;
            let mut subbins: BTreeMap<Vec<u64>, Vec<usize>> = BTreeMap::new();
            let mut sig_of_profile: BTreeMap<usize, Vec<u64>> = BTreeMap::new();
            for &h_e in &e_factor.members {
                let p = infl.profile_of(h_e);
                let sig = sig_of_profile.entry(p).or_insert_with(|| infl.signature(ev, h_f, p)).clone();
                subbins.entry(sig).or_default().push(h_e);
            }
            let mut clamped = 0.0;
            let mut unclamped = 0.0;
            for members in subbins.values() {
                joint[e] = members[0];
                let beta_f = ev.beta(f, &joint);
                let mass: f64 = members
                    .iter()
                    .map(|&h_e| {
                        joint[e] = h_e;
                        ev.beta(e, &joint)
                    })
                    .sum();
                clamped += beta_f * mass.min(1.0);
                unclamped += beta_f * mass;
            }
            out.push(SubbinCoefficient {
                history: h_f,
                clamped: clamped.min(1.0),
                unclamped,
            });
        }
        Ok(out)
    }
}

/// One-shot form of [`SubbinContext::coefficients`].
pub fn subbin_coefficients(ev: &Evaluator, g: usize, h_g: usize, bin: &Bin, perspective: usize) -> Result<Vec<SubbinCoefficient>, BinError> {
    SubbinContext::new(ev)?.coefficients(ev, g, h_g, bin, perspective)
}
