//! One test per acceptance criterion. Each prints a single `[PASS]` or
//! `[FAIL]` line before asserting.

mod common;

use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{conventional, Convex, RefField, Sensor};
use teamcov::bounds::{bound_conventional, bound_report, BoundOptions, PartialMode};
use teamcov::field::{evaluate_objective, Domain};
use teamcov::geometry::{MissionSpace, Point};
use teamcov::greedy::{greedy_place, GroundSet, Roster};
use teamcov::oracle::{exhaustive_set_optimum, sample_feasible, OracleBudget};
use teamcov::pga::{decompose, gradient_membership, gradient_position, PgaConfig};
use teamcov::pipeline::{compare_oracle, run_pipeline, sweep_w1, RunArtifacts};
use teamcov::scenario::{load_builtin, BUILTIN_NAMES, OBSTACLE_SCENARIOS};
use teamcov::sensing::{AgentClass, CostModel, TeamState};

// Pinned tolerances.
const KAPPA_ABS: f64 = 1.0;
const QUAD_REL_COARSE: f64 = 1e-2;
const QUAD_REL_FINE: f64 = 2.5e-3;
const GRAD_T_REL: f64 = 1e-6;
const GRAD_S_REL: f64 = 5e-2;
const FD_STEP: f64 = 0.5;
const FD_REF_CELL: f64 = 0.3;
const FD_GRAD_CELL: f64 = 1.0;
const BOUNDARY_CLEARANCE: f64 = 2.0;
const DECOMPOSITION_REL: f64 = 1e-9;
const BINARY_TOL: f64 = 1e-3;
const BOUND_SLACK: f64 = 1e-12;
const LC7: f64 = 0.66008;
const LC7_ABS: f64 = 1e-5;
const LC_LIMIT: f64 = 0.6321;
const LC_LIMIT_ABS: f64 = 1e-3;
const LPRIME_MAX: f64 = 1.2;
const ORACLE_REL: f64 = 0.05;
const ORACLE_TIME_RATIO: f64 = 0.1;

fn report(n: usize, pass: bool, msg: String) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("[{tag}] criterion {n}: {msg}");
    assert!(pass, "criterion {n} failed: {msg}");
}

fn class1() -> AgentClass {
    AgentClass::new(1.0, 0.012, 200.0, 1.0).unwrap()
}

fn class2() -> AgentClass {
    AgentClass::new(1.0, 0.008, 100.0, 1.0).unwrap()
}

fn sweep_values() -> Vec<f64> {
    (3..=10).map(|k| k as f64 / 10.0).collect()
}

/// Pipeline runs of every shipped scenario at its own settings, shared
/// between criteria.
fn shipped_runs() -> &'static Vec<(String, RunArtifacts)> {
    static RUNS: OnceLock<Vec<(String, RunArtifacts)>> = OnceLock::new();
    RUNS.get_or_init(|| {
        BUILTIN_NAMES
            .iter()
            .map(|name| {
                let sc = load_builtin(name).unwrap();
                (name.to_string(), run_pipeline(&sc).unwrap())
            })
            .collect()
    })
}

#[test]
fn criterion_01_kappa_closed_form() {
    let k1 = class1().kappa();
    let k2 = class2().kappa();
    let pass = (k1 - 30175.0).abs() <= KAPPA_ABS && (k2 - 18772.0).abs() <= KAPPA_ABS;
    report(1, pass, format!("kappa class 1 = {k1:.2}, class 2 = {k2:.2}"));
}

#[test]
fn criterion_02_quadrature_consistency() {
    let space = || {
        MissionSpace::blank(vec![
            Point::new(0.0, 0.0),
            Point::new(600.0, 0.0),
            Point::new(600.0, 600.0),
            Point::new(0.0, 600.0),
        ])
        .unwrap()
    };
    let start = Instant::now();
    let mut worst = [0.0f64; 2];
    for cls in [class1(), class2()] {
        for (slot, div) in [(0, 40.0), (1, 80.0)] {
            let dom = Domain::uniform(space(), cls.delta / div).unwrap();
            let team = TeamState::new(vec![Point::new(300.0, 300.0)], vec![1.0], vec![cls.clone()]).unwrap();
            let model = CostModel::for_classes(1.0, dom.total_density(), &team.classes).unwrap();
            let cov = evaluate_objective(&dom, &team, &model).unwrap().coverage;
            let rel = (cov / cls.kappa() - 1.0).abs();
            worst[slot] = worst[slot].max(rel);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst[0] < QUAD_REL_COARSE && worst[1] < QUAD_REL_FINE && secs < 5.0;
    report(
        2,
        pass,
        format!(
            "relative error {:.2e} at delta/40, {:.2e} at delta/80 ({secs:.2} s)",
            worst[0], worst[1]
        ),
    );
}

#[test]
fn criterion_03_gradient_correctness() {
    let start = Instant::now();
    let cfg = PgaConfig::default();
    let cls = class1();
    let sensor = Sensor {
        p0: cls.p0,
        lambda: cls.lambda,
        delta: cls.delta,
    };
    let mut worst_s: f64 = 0.0;
    let mut worst_t: f64 = 0.0;
    let mut configs = 0;
    for (si, name) in BUILTIN_NAMES.iter().filter(|n| **n != "mixed").enumerate() {
        let mut sc = load_builtin(name).unwrap();
        let coarse = sc.domain().unwrap();
        sc.grid.cell = FD_GRAD_CELL;
        let dom = sc.domain().unwrap();
        let obstacles: Vec<Convex> = sc.space.obstacles.iter().map(|o| Convex::new(o.clone())).collect();
        let reference = RefField::new(0.0, 0.0, 600.0, 600.0, FD_REF_CELL, obstacles);
        let mut rng = ChaCha8Rng::seed_from_u64(11 + si as u64);
        let mut done = 0;
        while done < 20 {
            let pos: Vec<Point> = (0..3).map(|_| sample_feasible(&dom.space, &mut rng)).collect();
            let t: Vec<f64> = (0..3).map(|_| rng.gen_range(0.3..1.0)).collect();
            let clear = pos.iter().all(|&p| {
                dom.space.outer().boundary_distance(p) > BOUNDARY_CLEARANCE
                    && dom
                        .space
                        .obstacles()
                        .iter()
                        .all(|o| o.boundary_distance(p) > BOUNDARY_CLEARANCE)
            });
            if !clear {
                continue;
            }
            done += 1;
            configs += 1;
            let team = TeamState::new(pos.clone(), t.clone(), vec![cls.clone(); 3]).unwrap();
            let model = CostModel::for_classes(0.68, coarse.total_density(), &team.classes).unwrap();
            let misses: Vec<Vec<f64>> = (0..3).map(|j| reference.miss_of(&sensor, pos[j], t[j])).collect();
            let (mut num, mut den) = (0.0, 0.0);
            for i in 0..3 {
                let g = gradient_position(&dom, &team, i, &cfg).unwrap();
                let mut base = vec![1.0; reference.nodes.len()];
                for (j, m) in misses.iter().enumerate() {
                    if j != i {
                        base.iter_mut().zip(m).for_each(|(b, f)| *b *= f);
                    }
                }
                let base_cov = reference.coverage_from(&base);
                let mut fd = [0.0; 2];
                for (ax, e) in [(0, Point::new(FD_STEP, 0.0)), (1, Point::new(0.0, FD_STEP))] {
                    let plus = reference.coverage_with(&base, base_cov, &sensor, pos[i] + e, t[i]);
                    let minus = reference.coverage_with(&base, base_cov, &sensor, pos[i] - e, t[i]);
                    fd[ax] = (plus - minus) / (2.0 * FD_STEP);
                }
                num += (g.x - fd[0]).powi(2) + (g.y - fd[1]).powi(2);
                den += fd[0].powi(2) + fd[1].powi(2);

                let gt = gradient_membership(&coarse, &team, &model, i).unwrap();
                let h = 0.05;
                let eval = |v: f64| {
                    let mut tm = team.clone();
                    tm.memberships[i] = v;
                    evaluate_objective(&coarse, &tm, &model).unwrap().total
                };
                let fdt = (eval(t[i] + h) - eval(t[i] - h)) / (2.0 * h);
                worst_t = worst_t.max((gt - fdt).abs() / fdt.abs().max(1.0));
            }
            worst_s = worst_s.max((num / den).sqrt());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst_s < GRAD_S_REL && worst_t < GRAD_T_REL && secs < 120.0;
    report(
        3,
        pass,
        format!(
            "{configs} configurations, worst position error {worst_s:.2e}, worst membership error {worst_t:.2e} ({secs:.1} s)"
        ),
    );
}

#[test]
fn criterion_04_decomposition_identity() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let classes = [class1(), class2(), AgentClass::new(0.8, 0.02, 120.0, 0.5).unwrap()];
    let mut worst: f64 = 0.0;
    let domains: Vec<Domain> = BUILTIN_NAMES
        .iter()
        .filter(|n| **n != "mixed")
        .map(|n| load_builtin(n).unwrap().domain().unwrap())
        .collect();
    for k in 0..50 {
        let dom = &domains[k % domains.len()];
        let n = rng.gen_range(2..=6);
        let pos: Vec<Point> = (0..n).map(|_| sample_feasible(&dom.space, &mut rng)).collect();
        let t: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let mut cls: Vec<AgentClass> = (0..n).map(|_| classes[rng.gen_range(0..3)].clone()).collect();
        cls[0] = classes[0].clone();
        cls[1] = classes[1].clone();
        let team = TeamState::new(pos, t, cls).unwrap();
        let model = CostModel::for_classes(0.68, dom.total_density(), &team.classes).unwrap();
        let h = evaluate_objective(dom, &team, &model).unwrap().total;
        for i in 0..n {
            let (hi, hic) = decompose(dom, &team, &model, i).unwrap();
            let err = (h - (team.memberships[i] * hi + hic)).abs() / h.abs().max(1e-300);
            worst = worst.max(err);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst < DECOMPOSITION_REL && secs < 60.0;
    report(4, pass, format!("50 heterogeneous configurations, worst relative gap {worst:.2e} ({secs:.1} s)"));
}

#[test]
fn criterion_05_binary_recovery() {
    let start = Instant::now();
    let runs = shipped_runs();
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, art) in runs.iter().filter(|(n, _)| OBSTACLE_SCENARIOS.contains(&n.as_str())) {
        let r = &art.report;
        let binary = r
            .final_team
            .memberships
            .iter()
            .all(|&v| v <= BINARY_TOL || v >= 1.0 - BINARY_TOL);
        pass &= binary;
        if name == "room" {
            pass &= r.pga.objective.n < 10;
        }
        parts.push(format!("{name} N={} binary={binary}", r.pga.objective.n));
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 600.0;
    report(5, pass, format!("{} ({secs:.1} s)", parts.join(", ")));
}

struct Instance {
    domain: Domain,
    ground: GroundSet,
    roster: Roster,
    obstacle: bool,
}

fn small_instances() -> Vec<Instance> {
    let a = AgentClass::new(1.0, 0.012, 70.0, 1.0).unwrap();
    let b = AgentClass::new(0.9, 0.02, 45.0, 1.0).unwrap();
    let rosters = [
        vec![(a.clone(), 3)],
        vec![(a.clone(), 2), (b.clone(), 1)],
        vec![(b.clone(), 3)],
        vec![(a.clone(), 1), (b.clone(), 2)],
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    (0..25)
        .map(|k| {
            let outer = vec![
                Point::new(0.0, 0.0),
                Point::new(200.0, 0.0),
                Point::new(200.0, 200.0),
                Point::new(0.0, 200.0),
            ];
            let obstacle = k % 2 == 1;
            let obstacles = if obstacle {
                let x0 = rng.gen_range(50.0..110.0);
                let y0 = rng.gen_range(50.0..110.0);
                let w = rng.gen_range(15.0..40.0);
                let h = rng.gen_range(15.0..40.0);
                vec![vec![
                    Point::new(x0, y0),
                    Point::new(x0 + w, y0),
                    Point::new(x0 + w, y0 + h),
                    Point::new(x0, y0 + h),
                ]]
            } else {
                Vec::new()
            };
            let space = MissionSpace::new(outer, obstacles).unwrap();
            let domain = Domain::uniform(space, 4.0).unwrap();
            let points: Vec<Point> = (0..12).map(|_| sample_feasible(&domain.space, &mut rng)).collect();
            let ground = GroundSet::from_points(&domain.space, points).unwrap();
            let roster = Roster::new(rosters[k % rosters.len()].clone()).unwrap();
            Instance {
                domain,
                ground,
                roster,
                obstacle,
            }
        })
        .collect()
}

struct BoundCheck {
    homogeneous: bool,
    ratio: f64,
    l_c: f64,
    l_t: Option<f64>,
    l_p_exact: f64,
    l_p_cons: f64,
    l_g: f64,
}

fn bound_checks() -> &'static Vec<BoundCheck> {
    static CHECKS: OnceLock<Vec<BoundCheck>> = OnceLock::new();
    CHECKS.get_or_init(|| {
        small_instances()
            .iter()
            .map(|inst| {
                let sol = greedy_place(&inst.domain, &inst.ground, &inst.roster).unwrap();
                let opt = exhaustive_set_optimum(&inst.domain, &inst.ground, &inst.roster, &OracleBudget::default())
                    .unwrap();
                let exact = bound_report(
                    &inst.domain,
                    &inst.ground,
                    &inst.roster,
                    &sol,
                    &BoundOptions {
                        partial_mode: PartialMode::Exact,
                        ..BoundOptions::default()
                    },
                )
                .unwrap();
                let cons = bound_report(
                    &inst.domain,
                    &inst.ground,
                    &inst.roster,
                    &sol,
                    &BoundOptions {
                        partial_mode: PartialMode::Conservative,
                        ..BoundOptions::default()
                    },
                )
                .unwrap();
                let _ = inst.obstacle;
                BoundCheck {
                    homogeneous: inst.roster.is_homogeneous(),
                    ratio: sol.value() / opt.value,
                    l_c: exact.l_c,
                    l_t: exact.l_t,
                    l_p_exact: exact.l_p.unwrap(),
                    l_p_cons: cons.l_p.unwrap(),
                    l_g: exact.l_g.unwrap(),
                }
            })
            .collect()
    })
}

#[test]
fn criterion_06_bound_validity() {
    let start = Instant::now();
    let checks = bound_checks();
    let mut violations = Vec::new();
    let mut min_ratio = f64::INFINITY;
    for (k, c) in checks.iter().enumerate() {
        min_ratio = min_ratio.min(c.ratio);
        let mut named = vec![("L_C", c.l_c), ("L_P exact", c.l_p_exact), ("L_P conservative", c.l_p_cons), ("L_G", c.l_g)];
        if let Some(lt) = c.l_t {
            named.push(("L_T", lt));
        }
        for (label, v) in named {
            if v > c.ratio + BOUND_SLACK {
                violations.push(format!("instance {k}: {label} {v:.6} > ratio {:.6}", c.ratio));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = violations.is_empty() && secs < 600.0;
    report(
        6,
        pass,
        format!(
            "{} instances, smallest greedy/optimum {min_ratio:.4}, {} violations {:?} ({secs:.1} s)",
            checks.len(),
            violations.len(),
            violations
        ),
    );
}

#[test]
fn criterion_07_bound_ordering() {
    let checks = bound_checks();
    let mut bad = Vec::new();
    let mut homog = 0;
    for (k, c) in checks.iter().enumerate() {
        if c.l_p_cons > c.l_p_exact + BOUND_SLACK {
            bad.push(format!("instance {k}: conservative {:.6} > exact {:.6}", c.l_p_cons, c.l_p_exact));
        }
        if c.homogeneous {
            homog += 1;
            let lt = c.l_t.unwrap();
            if !(c.l_c <= lt + BOUND_SLACK && lt <= c.l_p_exact + BOUND_SLACK) {
                bad.push(format!("instance {k}: L_C {:.6}, L_T {lt:.6}, L_P {:.6}", c.l_c, c.l_p_exact));
            }
        }
    }
    report(
        7,
        bad.is_empty(),
        format!("{homog} homogeneous instances, {} ordering failures {:?}", bad.len(), bad),
    );
}

#[test]
fn criterion_08_conventional_bound() {
    let l1 = bound_conventional(1);
    let l7 = bound_conventional(7);
    let big = bound_conventional(10_000);
    let pass = l1 == 1.0
        && (l7 - LC7).abs() <= LC7_ABS
        && (l7 - conventional(7)).abs() <= 1e-12
        && (big - LC_LIMIT).abs() <= LC_LIMIT_ABS;
    report(8, pass, format!("L_C(1) = {l1}, L_C(7) = {l7:.6}, L_C(10^4) = {big:.6}"));
}

#[test]
fn criterion_09_monotone_ascent() {
    let runs = shipped_runs();
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, art) in runs {
        let recs = &art.trace.records;
        let monotone = recs.windows(2).all(|w| w[1].total >= w[0].total);
        let init = recs[0].total;
        let last = recs.last().unwrap().total;
        let ok = monotone && last >= init && (art.report.greedy.total - init).abs() <= 1e-6 * init.abs().max(1.0);
        pass &= ok;
        parts.push(format!("{name} {init:.0} -> {last:.0}{}", if ok { "" } else { " (bad)" }));
    }
    report(9, pass, parts.join(", "));
}

#[test]
fn criterion_10_post_bound() {
    let runs = shipped_runs();
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, art) in runs {
        match &art.report.post {
            Some(p) => {
                let mut ok = p.l_prime > 0.0 && p.l_prime <= LPRIME_MAX && p.l2 > 0.0 && p.greedy2_value > 0.0;
                if p.pga_value >= p.greedy2_value {
                    ok &= p.l_prime >= p.l2;
                }
                pass &= ok;
                parts.push(format!(
                    "{name} (H={:.0}, L2={:.3}, L'={:.3})",
                    p.greedy2_value, p.l2, p.l_prime
                ));
            }
            None => {
                pass = false;
                parts.push(format!("{name} missing"));
            }
        }
    }
    report(10, pass, parts.join(", "));
}

#[test]
fn criterion_11_oracle_comparison() {
    let start = Instant::now();
    let sc = load_builtin("mixed").unwrap();
    let cmp = compare_oracle(&sc, &sweep_values()).unwrap();
    let count = cmp.random.compositions.len();
    let mut worst: f64 = f64::INFINITY;
    let mut misses = Vec::new();
    for r in &cmp.rows {
        let best = r.random_total.max(r.corner_total);
        let margin = r.pga_total - (best - ORACLE_REL * best.abs());
        worst = worst.min(margin);
        if margin < 0.0 {
            misses.push(format!("w1={:.1}: pga {:.0} vs baseline {:.0}", r.w1, r.pga_total, best));
        }
    }
    let ratio = cmp.time_ratio();
    let secs = start.elapsed().as_secs_f64();
    let pass = count == 35 && misses.is_empty() && ratio < ORACLE_TIME_RATIO && secs < 1800.0;
    report(
        11,
        pass,
        format!(
            "{count} compositions, time ratio {ratio:.3}, rows below 95% of baseline: {:?} ({secs:.1} s)",
            misses
        ),
    );
}

#[test]
fn criterion_12_sweep_monotone_team_size() {
    let mut good = 0;
    let mut parts = Vec::new();
    for name in OBSTACLE_SCENARIOS {
        let sc = load_builtin(name).unwrap();
        let rows = sweep_w1(&sc, &sweep_values()).unwrap();
        let sizes: Vec<usize> = rows.iter().map(|r| r.n_final).collect();
        let ok = sizes.windows(2).all(|w| w[1] >= w[0]);
        good += ok as usize;
        parts.push(format!("{name} {sizes:?}"));
    }
    report(12, good >= 3, format!("{good}/4 non-decreasing: {}", parts.join(", ")));
}
