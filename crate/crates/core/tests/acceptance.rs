//! Acceptance suite: one PASS/FAIL/SKIP line per criterion.
//!
//! Solver-backed checks use `EDICR_SOLVER_CMD` (or `cbc` on `PATH`) for
//! linear programs and `EDICR_QP_SOLVER_CMD` for the quadratic one.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use edicr_core::binning::build_all_bins;
use edicr_core::checks::{check_bin_soundness, sweep_identity_points, IdentitySweep};
use edicr_core::fixtures;
use edicr_core::formulations::{build, build_decmdp_milp, build_edicr_milp2, build_edicr_milp_n, support_size, Compiled, FormulationKind};
use edicr_core::histories::{enumerate_agent_policies, enumerate_joint_policies, joint_count, Evaluator, DEFAULT_MAX_POLICIES};
use edicr_core::model::Instance;
use edicr_core::policy_tools::{audit_solution, extract_policy};
use edicr_core::random::{random_instance, RandomParams};
use edicr_core::rovers::{generate_rovers, RoverParams};
use edicr_core::solver::{solve_program, template_from_env, SolutionStatus};

const TIGHT: f64 = 1e-9;
const SOLVER_TOL: f64 = 1e-6;
const SOLVER_TIMEOUT: Duration = Duration::from_secs(120);

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

use Outcome::{Fail, Pass, Skip};

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn on_path(bin: &str) -> bool {
    std::env::var_os("PATH").is_some_and(|p| std::env::split_paths(&p).any(|d| d.join(bin).is_file()))
}

fn milp_template() -> Option<String> {
    template_from_env(false).or_else(|| on_path("cbc").then(|| "cbc {model} solve solution {solution}".to_string()))
}

fn qp_template() -> Option<String> {
    std::env::var("EDICR_QP_SOLVER_CMD").ok().filter(|s| !s.trim().is_empty())
}

/// Best expected reward of one agent alone, by backward induction over its
/// local MDP. Only the first `T - 1` transitions of a history pay.
fn local_optimum(inst: &Instance, g: usize) -> f64 {
    let m = &inst.agents[g];
    let mut v = vec![0.0; m.num_states()];
    for _ in 0..inst.horizon.saturating_sub(1) {
        v = (0..m.num_states())
            .map(|s| {
                (0..m.num_actions())
                    .map(|a| (0..m.num_states()).map(|s2| m.transitions[s][a][s2] * (m.rewards[s][a][s2] + v[s2])).sum::<f64>())
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
    }
    v[m.initial]
}

fn sweep(ev: &Evaluator, c: &Compiled, check_caps: bool) -> Result<IdentitySweep, String> {
    sweep_identity_points(ev, c, check_caps, DEFAULT_MAX_POLICIES).map_err(|e| e.to_string())
}

fn criterion_1() -> Result<Outcome, String> {
    let mut checked = 0;
    for seed in 0..4 {
        for (sites, horizon) in [(2, 3), (3, 3), (2, 4)] {
            let p = RoverParams {
                seed,
                sites,
                horizon,
                n_rho: 2,
                n_tau: 2,
                ..RoverParams::default()
            };
            let inst = generate_rovers(&p).map_err(|e| e.to_string())?;
            let ev = Evaluator::new(&inst).map_err(|e| e.to_string())?;
            let (zi, zj) = (ev.tree(0).num_terminals(), ev.tree(1).num_terminals());
            let dec = build_decmdp_milp(&ev).map_err(|e| e.to_string())?.program.stats().map_err(|e| e.to_string())?;
            let edi = build_edicr_milp2(&ev).map_err(|e| e.to_string())?.program.stats().map_err(|e| e.to_string())?;
            ensure(dec.compound_variables == zi * zj, || format!("seed {seed}: z_DEC {} != {zi}*{zj}", dec.compound_variables))?;
            ensure(dec.non_policy_without_counting == zi + zj, || format!("seed {seed}: C_DEC without counting"))?;
            ensure(dec.non_policy_constraints == zi + zj + 1, || format!("seed {seed}: C_DEC with counting"))?;
            ensure(edi.non_policy_constraints == zi + zj + edi.compound_variables, || {
                format!("seed {seed}: C_EDI {} != {zi}+{zj}+{}", edi.non_policy_constraints, edi.compound_variables)
            })?;
            checked += 1;
        }
    }
    Ok(Pass(format!("{checked} rover instances; z_DEC = |Z_0|*|Z_1| and C_EDI = |Z_0|+|Z_1|+z_EDI exactly")))
}

fn criterion_2() -> Result<Outcome, String> {
    let mut checks = 0usize;
    for seed in 0..50u64 {
        let n = 2 + (seed % 2) as usize;
        let p = RandomParams {
            n_agents: n,
            states: 2 + (seed % 3 == 0) as usize,
            horizon: if n == 2 { 2 + (seed % 3) as usize } else { 2 + (seed % 2) as usize },
            single_affecting: seed % 4 != 1,
            ..RandomParams::default()
        };
        let inst = random_instance(1000 + seed, &p);
        let ev = Evaluator::new(&inst).map_err(|e| e.to_string())?;
        let sets = build_all_bins(&ev).map_err(|e| format!("seed {seed}: {e}"))?;
        checks += check_bin_soundness(&ev, &sets).map_err(|e| format!("seed {seed}: {e}"))?;
    }
    Ok(Pass(format!("50 random instances, {checks} member checks, all exact")))
}

fn criterion_3() -> Result<Outcome, String> {
    let mut accepted = 0;
    let mut policies = 0;
    let mut seed = 0u64;
    while accepted < 20 {
        seed += 1;
        ensure(seed < 500, || "could not draw 20 small instances".into())?;
        let p = RandomParams {
            states: 2 + (seed % 2) as usize,
            horizon: 2 + !seed.is_multiple_of(3) as usize,
            single_affecting: seed % 3 != 2,
            ..RandomParams::default()
        };
        let inst = random_instance(2000 + seed, &p);
        let ev = Evaluator::new(&inst).map_err(|e| e.to_string())?;
        let lists = match enumerate_joint_policies(ev.trees(), DEFAULT_MAX_POLICIES) {
            Ok(l) if joint_count(&l) <= 100_000 => l,
            _ => continue,
        };
        drop(lists);
        let c = build_edicr_milp2(&ev).map_err(|e| e.to_string())?;
        let ex = sweep(&ev, &c, true).map_err(|e| format!("seed {seed}: {e}"))?;
        let bf = ev.brute_force_optimal(DEFAULT_MAX_POLICIES).map_err(|e| e.to_string())?;
        ensure((ex.best_identity - bf.value).abs() <= TIGHT, || {
            format!("seed {seed}: best integral point {} vs brute force {}", ex.best_identity, bf.value)
        })?;
        accepted += 1;
        policies += ex.policies;
    }
    Ok(Pass(format!("{accepted} instances, {policies} pure joint policies, identity unique and exact")))
}

fn criterion_4() -> Result<Outcome, String> {
    let mut accepted = 0;
    let mut policies = 0;
    let mut seed = 0u64;
    while accepted < 10 {
        seed += 1;
        ensure(seed < 500, || "could not draw 10 uniform instances".into())?;
        let p = RandomParams {
            states: 3,
            horizon: 2 + (seed % 2) as usize,
            branching: Some(2),
            ..RandomParams::default()
        };
        let inst = random_instance(3000 + seed, &p);
        let ev = Evaluator::new(&inst).map_err(|e| e.to_string())?;
        let Ok(c) = build_decmdp_milp(&ev) else { continue };
        for g in 0..2 {
            let sigma = support_size(&inst, ev.tree(g)).map_err(|e| e.to_string())? as usize;
            ensure(sigma == 2usize.pow(inst.horizon as u32 - 1), || format!("seed {seed}: sigma {sigma}"))?;
            for pol in enumerate_agent_policies(ev.tree(g), DEFAULT_MAX_POLICIES).map_err(|e| e.to_string())? {
                let n = pol.support(ev.tree(g)).len();
                ensure(n == sigma, || format!("seed {seed}: a policy of agent {g} reaches {n} terminals, not {sigma}"))?;
            }
        }
        let ex = sweep(&ev, &c, false).map_err(|e| format!("seed {seed}: {e}"))?;
        accepted += 1;
        policies += ex.policies;
    }
    Ok(Pass(format!("{accepted} uniform-branching instances, {policies} pure joint policies")))
}

fn criterion_5() -> Result<Outcome, String> {
    let mut instances = vec![("tiny3x3".to_string(), fixtures::tiny3x3())];
    for seed in 0..6u64 {
        let p = RandomParams {
            n_agents: 3,
            states: 2,
            horizon: 2,
            ..RandomParams::default()
        };
        instances.push((format!("random{seed}"), random_instance(4000 + seed, &p)));
    }
    let mut policies = 0;
    for (name, inst) in &instances {
        let ev = Evaluator::new(inst).map_err(|e| e.to_string())?;
        let c = build_edicr_milp_n(&ev).map_err(|e| format!("{name}: {e}"))?;
        let ex = sweep(&ev, &c, false).map_err(|e| format!("{name}: {e}"))?;
        policies += ex.policies;
    }
    let base = format!("{} instances, {policies} identity points feasible", instances.len());
    let Some(template) = milp_template() else {
        return Ok(Skip(format!("{base}; solver part skipped (no MILP solver configured)")));
    };
    let inst = fixtures::tiny3x3();
    let ev = Evaluator::new(&inst).map_err(|e| e.to_string())?;
    let c = build_edicr_milp_n(&ev).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let sol = solve_program(&c.program, dir.path(), "tiny3x3_n", &template, Some(SOLVER_TIMEOUT)).map_err(|e| e.to_string())?;
    ensure(sol.status == SolutionStatus::Optimal, || format!("solver status {:?}", sol.status))?;
    let bf = ev.brute_force_optimal(DEFAULT_MAX_POLICIES).map_err(|e| e.to_string())?;
    let report = audit_solution(&ev, &c, &sol).map_err(|e| e.to_string())?;
    ensure(report.reported >= bf.value - SOLVER_TOL, || format!("reported {} below optimum {}", report.reported, bf.value))?;
    ensure(report.reward_pct <= 100.0 + 1e-6, || format!("reward {}%", report.reward_pct))?;
    Ok(Pass(format!(
        "{base}; tiny3x3 solved: reported {:.6} >= optimum {:.6}, extracted policy reaches {:.2}% of reported",
        report.reported, bf.value, report.reward_pct
    )))
}

fn criterion_6() -> Result<Outcome, String> {
    let mut checked = 0;
    let mut solved = None;
    for seed in 0..8u64 {
        let n = 2 + (seed % 2) as usize;
        let p = RandomParams {
            n_agents: n,
            states: 2 + (seed % 3 == 0) as usize,
            horizon: if n == 2 { 3 } else { 2 },
            max_rho: 0,
            max_tau: 0,
            ..RandomParams::default()
        };
        let inst = random_instance(5000 + seed, &p);
        let ev = Evaluator::new(&inst).map_err(|e| e.to_string())?;
        let local: f64 = (0..n).map(|g| local_optimum(&inst, g)).sum();
        let c = if n == 2 { build_edicr_milp2(&ev) } else { build_edicr_milp_n(&ev) }.map_err(|e| e.to_string())?;
        let terminals: usize = ev.trees().iter().map(|t| t.num_terminals()).sum();
        ensure(c.program.stats().map_err(|e| e.to_string())?.compound_variables == terminals, || {
            format!("seed {seed}: more than one bin per history")
        })?;
        let ex = sweep(&ev, &c, n == 2).map_err(|e| format!("seed {seed}: {e}"))?;
        ensure((ex.best_identity - local).abs() <= TIGHT, || {
            format!("seed {seed}: program optimum {} vs sum of local optima {local}", ex.best_identity)
        })?;
        ensure((ex.best_true - local).abs() <= TIGHT, || format!("seed {seed}: brute force {} vs {local}", ex.best_true))?;
        if n == 2 && solved.is_none() {
            if let Some(t) = milp_template() {
                let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
                let sol = solve_program(&c.program, dir.path(), "free", &t, Some(SOLVER_TIMEOUT)).map_err(|e| e.to_string())?;
                let obj = sol.objective.ok_or("solver reported no objective")?;
                ensure((obj - local).abs() <= SOLVER_TOL, || format!("solver optimum {obj} vs {local}"))?;
                solved = Some(obj);
            }
        }
        checked += 1;
    }
    let tail = match solved {
        Some(v) => format!("; solver optimum {v:.6} matches"),
        None => "; solver cross-check not run".into(),
    };
    Ok(Pass(format!("{checked} interaction-free instances match per-agent optima{tail}")))
}

fn criterion_7() -> Result<Outcome, String> {
    let mut groups = Vec::new();
    for total in 4..=7usize {
        let mut ratios = Vec::new();
        for seed in 0..4u64 {
            let n_rho = total / 2;
            let p = RoverParams {
                seed: 100 * total as u64 + seed,
                sites: 3,
                horizon: 3,
                n_rho,
                n_tau: total - n_rho,
                ..RoverParams::default()
            };
            let inst = generate_rovers(&p).map_err(|e| e.to_string())?;
            let ev = Evaluator::new(&inst).map_err(|e| e.to_string())?;
            let z_edi: usize = build_all_bins(&ev).map_err(|e| e.to_string())?.iter().map(|s| s.z_count()).sum();
            let z_dec = ev.tree(0).num_terminals() * ev.tree(1).num_terminals();
            let r = z_edi as f64 / z_dec as f64;
            ensure(r < 1.0, || format!("{total} interactions, seed {seed}: ratio {r}"))?;
            ratios.push(r);
        }
        groups.push(format!("{total}:{:.4}", ratios.iter().sum::<f64>() / ratios.len() as f64));
    }
    Ok(Pass(format!("z_EDI/z_DEC < 1 everywhere; mean ratio by interaction count {}", groups.join(" "))))
}

fn criterion_8() -> Result<Outcome, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let write_run = |tag: &str| -> Result<Vec<Vec<u8>>, String> {
        let mut files = Vec::new();
        for (n, sites) in [(2, 2), (3, 2)] {
            let p = RoverParams {
                n_agents: n,
                sites,
                seed: 7,
                ..RoverParams::default()
            };
            let inst = generate_rovers(&p).map_err(|e| e.to_string())?;
            let path = dir.path().join(format!("{tag}_{n}.json"));
            std::fs::write(&path, inst.to_json()).map_err(|e| e.to_string())?;
            files.push(std::fs::read(&path).map_err(|e| e.to_string())?);
            let ev = Evaluator::new(&inst).map_err(|e| e.to_string())?;
            let kinds: &[FormulationKind] = if n == 2 {
                &[FormulationKind::Qp2, FormulationKind::DecmdpMilp, FormulationKind::EdicrMilp2]
            } else {
                &[FormulationKind::EdicrMilpN]
            };
            for &k in kinds {
                let lp = build(k, &ev).map_err(|e| e.to_string())?.program.write_lp().map_err(|e| e.to_string())?;
                let path = dir.path().join(format!("{tag}_{n}_{k}.lp"));
                std::fs::write(&path, lp).map_err(|e| e.to_string())?;
                files.push(std::fs::read(&path).map_err(|e| e.to_string())?);
            }
        }
        Ok(files)
    };
    let a = write_run("a")?;
    let b = write_run("b")?;
    ensure(a == b, || "outputs differ between runs".into())?;
    Ok(Pass(format!("{} files byte-identical across two runs", a.len())))
}

fn criterion_9() -> Result<Outcome, String> {
    let inst = fixtures::tiny2();
    let ev = Evaluator::new(&inst).map_err(|e| e.to_string())?;
    let bf = ev.brute_force_optimal(DEFAULT_MAX_POLICIES).map_err(|e| e.to_string())?;
    ensure((bf.value - 18.6).abs() <= TIGHT, || format!("brute force optimum {}", bf.value))?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut done = Vec::new();
    let mut skipped = Vec::new();
    for kind in [FormulationKind::EdicrMilp2, FormulationKind::DecmdpMilp, FormulationKind::Qp2] {
        let template = if kind.is_quadratic() { qp_template() } else { milp_template() };
        let Some(template) = template else {
            skipped.push(kind.name());
            continue;
        };
        let c = build(kind, &ev).map_err(|e| e.to_string())?;
        let sol = solve_program(&c.program, dir.path(), kind.name(), &template, Some(SOLVER_TIMEOUT)).map_err(|e| e.to_string())?;
        ensure(sol.status == SolutionStatus::Optimal, || format!("{kind}: status {:?}", sol.status))?;
        let obj = sol.objective.ok_or_else(|| format!("{kind}: no objective"))?;
        ensure((obj - 18.6).abs() <= SOLVER_TOL, || format!("{kind}: objective {obj}"))?;
        let meta = c.program.metadata().map_err(|e| e.to_string())?;
        let pol = extract_policy(&inst, ev.trees(), &sol, &meta).map_err(|e| format!("{kind}: {e}"))?;
        let value = ev.evaluate_policy(&pol).map_err(|e| e.to_string())?;
        ensure((value - 18.6).abs() <= SOLVER_TOL, || format!("{kind}: extracted policy is worth {value}"))?;
        done.push(format!("{kind}={obj}"));
    }
    if done.is_empty() {
        return Ok(Skip("no solver configured".into()));
    }
    if !skipped.is_empty() {
        return Ok(Skip(format!("{} ok; {} not run (no QP solver configured)", done.join(", "), skipped.join(", "))));
    }
    Ok(Pass(format!("tiny2 optimum 18.6 from {}", done.join(", "))))
}

type Criterion = fn() -> Result<Outcome, String>;

fn main() {
    let criteria: [(&str, Criterion); 9] = [
        ("size identities", criterion_1),
        ("bin soundness", criterion_2),
        ("two-agent exactness", criterion_3),
        ("pairwise MILP fidelity", criterion_4),
        ("three-agent relaxation direction", criterion_5),
        ("decomposition sanity", criterion_6),
        ("compactness", criterion_7),
        ("determinism", criterion_8),
        ("solver integration", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = match catch_unwind(AssertUnwindSafe(run)) {
            Ok(Ok(o)) => o,
            Ok(Err(msg)) => Fail(msg),
            Err(_) => Fail("panicked".into()),
        };
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Pass(d) => ("PASS", d),
            Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Skip(d) => ("SKIP", d),
        };
        println!("criterion {} ({name}): {tag} - {detail} [{secs:.1}s]", i + 1);
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
