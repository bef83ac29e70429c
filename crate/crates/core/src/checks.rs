//! Solver-free verification of compiled programs against exact evaluation.

use serde::Serialize;

use crate::binning::BinSet;
use crate::formulations::Compiled;
use crate::histories::{enumerate_joint_policies, joint_count, joint_policy_at, Evaluator, HistoryError};
use crate::policy_tools::IdentityBuilder;
use crate::program::ConstraintRole;

/// Tolerance of every equality checked here.
pub const CHECK_TOL: f64 = 1e-9;

/// First failing check with a human-readable reason.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckFailure(pub String);

impl std::fmt::Display for CheckFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailure {}

impl From<HistoryError> for CheckFailure {
    fn from(e: HistoryError) -> Self {
        Self(e.to_string())
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), CheckFailure> {
    if cond {
        Ok(())
    } else {
        Err(CheckFailure(msg()))
    }
}

/// Every member of every bin gives its history exactly the same beta and
/// reward as the bin's first member. Returns the number of members checked.
pub fn check_bin_soundness(ev: &Evaluator, sets: &[BinSet]) -> Result<usize, CheckFailure> {
    let n = ev.num_agents();
    let mut checked = 0;
    for set in sets {
        let g = set.agent;
        for (h, bins) in set.bins.iter().enumerate() {
            let mut joint = vec![0; n];
            joint[g] = h;
            for (b, bin) in bins.iter().enumerate() {
                bin.fill_representative(&mut joint);
                let (beta, reward) = (ev.beta(g, &joint), ev.reward(g, &joint));
                let mut ok = true;
                bin.for_each_member(&mut joint, |j| {
                    ok &= ev.beta(g, j) == beta && ev.reward(g, j) == reward;
                    checked += 1;
                });
                ensure(ok, || format!("agent {g} history {h} bin {b} mixes different effects"))?;
            }
        }
    }
    Ok(checked)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentitySweep {
    pub policies: usize,
    /// Largest program objective over all identity points.
    pub best_identity: f64,
    /// Largest exact value over all pure joint policies.
    pub best_true: f64,
    /// Whether the forced-value (cap) check ran.
    pub unique: bool,
}

/// For every pure joint policy: the identity point is feasible and its
/// objective equals the policy's exact value. With `check_caps` (two-agent
/// binned programs) also checks that the bound rows of each history sum to 1
/// and that each compound variable equals its forced value `cap * x(h)`.
pub fn sweep_identity_points(ev: &Evaluator, c: &Compiled, check_caps: bool, max_policies: u128) -> Result<IdentitySweep, CheckFailure> {
    let lists = enumerate_joint_policies(ev.trees(), max_policies)?;
    let builder = IdentityBuilder::new(c);
    let bounds: Vec<(usize, usize, usize)> = if check_caps {
        c.program
            .constraints
            .iter()
            .enumerate()
            .filter(|(_, k)| k.role == ConstraintRole::Bound)
            .map(|(row, k)| {
                let mut it = k.name.split('_').skip(1).map(|p| p.parse::<usize>().expect("bound rows are ub_<g>_<h>_<b>"));
                (row, it.next().expect("agent"), it.next().expect("history"))
            })
            .collect()
    } else {
        Vec::new()
    };
    let mut best_identity = f64::NEG_INFINITY;
    let mut best_true = f64::NEG_INFINITY;
    let total = joint_count(&lists);
    for idx in 0..total {
        let pol = joint_policy_at(&lists, idx);
        let x = builder.point(ev, &pol);
        let bad = c.program.violations(&x, CHECK_TOL);
        ensure(bad.is_empty(), || format!("policy {idx}: identity point violates {:?}", &bad[..bad.len().min(3)]))?;
        let obj = c.program.objective_value(&x);
        let truth = ev.evaluate_policy(&pol)?;
        ensure((obj - truth).abs() <= CHECK_TOL, || format!("policy {idx}: objective {obj} vs exact {truth}"))?;
        best_identity = best_identity.max(obj);
        best_true = best_true.max(truth);
        if check_caps {
            let mut sums: Vec<Vec<f64>> = ev.trees().iter().map(|t| vec![0.0; t.num_terminals()]).collect();
            for &(row, g, h) in &bounds {
                let k = &c.program.constraints[row];
                let cap: f64 = -k.terms[1..].iter().map(|&(v, a)| a * x[v]).sum::<f64>();
                let z = x[k.terms[0].0];
                let forced = cap * x[c.policy_vars[g].terminal_var[h]];
                ensure((z - forced).abs() <= CHECK_TOL, || format!("policy {idx}: z {z} is not its forced value {forced}"))?;
                sums[g][h] += cap;
            }
            for (g, row) in sums.iter().enumerate() {
                for (h, s) in row.iter().enumerate() {
                    ensure((s - 1.0).abs() <= CHECK_TOL, || format!("policy {idx}: caps of agent {g} history {h} sum to {s}"))?;
                }
            }
        }
    }
    Ok(IdentitySweep {
        policies: total,
        best_identity,
        best_true,
        unique: check_caps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binning::build_all_bins;
    use crate::fixtures;
    use crate::formulations::build_edicr_milp2;
    use crate::histories::DEFAULT_MAX_POLICIES;

    #[test]
    fn tiny2_sweep() {
        let inst = fixtures::tiny2();
        let ev = Evaluator::new(&inst).unwrap();
        let c = build_edicr_milp2(&ev).unwrap();
        let s = sweep_identity_points(&ev, &c, true, DEFAULT_MAX_POLICIES).unwrap();
        assert_eq!(s.policies, 64);
        assert!((s.best_identity - 18.6).abs() < 1e-12);
        assert!(check_bin_soundness(&ev, &build_all_bins(&ev).unwrap()).unwrap() > 0);
    }

    #[test]
    fn tampered_program_fails() {
        let inst = fixtures::tiny2();
        let ev = Evaluator::new(&inst).unwrap();
        let mut c = build_edicr_milp2(&ev).unwrap();
        c.program.linear[0].1 += 1.0;
        assert!(sweep_identity_points(&ev, &c, true, DEFAULT_MAX_POLICIES).is_err());

        let mut c = build_edicr_milp2(&ev).unwrap();
        let row = c.program.constraints.iter().position(|k| k.role == ConstraintRole::Bound).unwrap();
        for t in &mut c.program.constraints[row].terms[1..] {
            t.1 *= 2.0;
        }
        let err = sweep_identity_points(&ev, &c, true, DEFAULT_MAX_POLICIES).unwrap_err();
        assert!(err.0.contains("caps") || err.0.contains("forced"), "{err}");
    }
}
