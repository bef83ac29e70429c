//! The solver-free `check` suite.

use edicr_core::binning::build_all_bins;
use edicr_core::checks::{check_bin_soundness, sweep_identity_points};
use edicr_core::formulations::{build_decmdp_milp, build_edicr_milp2, build_edicr_milp_n, build_qp2};
use edicr_core::histories::{count_policies, Evaluator};
use edicr_core::formulations::FormulationError;
use edicr_core::{Compiled, Instance};

pub struct CheckOutcome {
    pub lines: Vec<String>,
    pub failed: bool,
}

impl CheckOutcome {
    fn pass(&mut self, what: &str, detail: String) {
        self.lines.push(format!("{what}: PASS ({detail})"));
    }

    fn fail(&mut self, what: &str, detail: String) {
        self.failed = true;
        self.lines.push(format!("{what}: FAIL ({detail})"));
    }

    fn skip(&mut self, what: &str, detail: String) {
        self.lines.push(format!("{what}: SKIP ({detail})"));
    }
}

fn sweep(out: &mut CheckOutcome, ev: &Evaluator, what: &str, built: Result<Compiled, FormulationError>, caps: bool, max: u128) -> Option<f64> {
    let c = match built {
        Ok(c) => c,
        Err(e) => {
            out.skip(what, format!("not applicable: {e}"));
            return None;
        }
    };
    match sweep_identity_points(ev, &c, caps, max) {
        Ok(s) => {
            let kind = if caps { "unique" } else { "feasible and exact" };
            out.pass(what, format!("identity {kind} at all {} pure policies, best {}", s.policies, s.best_identity));
            Some(s.best_true)
        }
        Err(e) => {
            out.fail(what, e.0);
            None
        }
    }
}

pub fn run(inst: &Instance, max_policies: u128) -> anyhow::Result<CheckOutcome> {
    let ev = Evaluator::new(inst)?;
    let n = ev.num_agents();
    let mut out = CheckOutcome {
        lines: Vec::new(),
        failed: false,
    };

    let sets = build_all_bins(&ev)?;
    let z: usize = sets.iter().map(|s| s.z_count()).sum();
    match check_bin_soundness(&ev, &sets) {
        Ok(members) => out.pass("bin soundness", format!("{z} bins, {members} members")),
        Err(e) => out.fail("bin soundness", e.0),
    }

    let count = ev.trees().iter().try_fold(1u128, |acc, t| acc.checked_mul(count_policies(t)));
    let count = match count {
        Some(c) if c <= max_policies => c,
        other => {
            let shown = other.map_or_else(|| "more than 2^128".to_string(), |c| c.to_string());
            out.skip("identity sweep", format!("{shown} pure policies exceed the limit of {max_policies}"));
            return Ok(out);
        }
    };
    out.lines.push(format!("pure joint policies: {count}"));

    if n == 2 {
        let best = sweep(&mut out, &ev, "edicr_milp2 identity and cap sums", build_edicr_milp2(&ev), true, max_policies);
        sweep(&mut out, &ev, "decmdp_milp identity", build_decmdp_milp(&ev), false, max_policies);
        sweep(&mut out, &ev, "qp2 identity", build_qp2(&ev, false), false, max_policies);
        if let Some(best) = best {
            out.lines.push(format!("brute-force optimum: {best}"));
        }
    } else {
        sweep(&mut out, &ev, "edicr_milp_n identity", build_edicr_milp_n(&ev), false, max_policies);
    }
    Ok(out)
}
