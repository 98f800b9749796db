use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use teamcov::bounds::{bound_report, BoundOptions, PartialMode};
use teamcov::pipeline::{
    compare_oracle, run_pipeline_with, sweep_w1, write_baseline, write_comparison, write_field,
    write_greedy_trace, write_json, write_run, write_sweep, RunOptions, Setup,
};
use teamcov::greedy::greedy_place;
use teamcov::scenario::{load_builtin, Scenario, BUILTIN_NAMES};
use teamcov::sensing::TeamState;

#[derive(Parser)]
#[command(name = "teamcov", version, about = "Team composition and placement for coverage")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Override the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the quadrature cell size.
    #[arg(long, global = true)]
    grid_cell: Option<f64>,
    /// Directory for exported files.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override the coverage weight w1.
    #[arg(long, global = true)]
    w1: Option<f64>,
    /// Override the ground lattice size.
    #[arg(long, global = true)]
    lattice: Option<usize>,
    /// Override the ascent iteration cap.
    #[arg(long, global = true)]
    max_iters: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Load and check a scenario, then print a summary.
    Validate { scenario: String },
    /// Greedy placement on the ground set.
    Greedy { scenario: String },
    /// Greedy placement and its curvature bounds.
    Bounds {
        scenario: String,
        #[arg(long, value_enum, default_value_t = Mode::Auto)]
        partial: Mode,
        /// Largest enumeration allowed for exact partial curvature.
        #[arg(long)]
        budget: Option<u128>,
    },
    /// Full pipeline: greedy, bounds, ascent, post-ascent bound.
    Optimize {
        scenario: String,
        /// Skip the curvature and post-ascent bounds.
        #[arg(long)]
        no_bounds: bool,
    },
    /// Rerun the ascent for a list of w1 values.
    SweepW1 {
        scenario: String,
        #[arg(long, value_delimiter = ',', default_value = "0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")]
        values: Vec<f64>,
    },
    /// Ascent against the enumerate-every-team baseline (obstacle-free only).
    CompareOracle {
        scenario: String,
        #[arg(long, value_delimiter = ',', default_value = "0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")]
        values: Vec<f64>,
    },
    /// Export the joint detection field of the greedy or final team.
    DumpField {
        scenario: String,
        #[arg(long, value_enum, default_value_t = Stage::Final)]
        stage: Stage,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Auto,
    Exact,
    Conservative,
}

impl From<Mode> for PartialMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Auto => PartialMode::Auto,
            Mode::Exact => PartialMode::Exact,
            Mode::Conservative => PartialMode::Conservative,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Stage {
    Greedy,
    Final,
}

fn load(name: &str, g: &Global) -> Result<Scenario> {
    let mut sc = if Path::new(name).exists() {
        Scenario::load(name)?
    } else if BUILTIN_NAMES.contains(&name) {
        load_builtin(name)?
    } else {
        bail!(
            "{name} is neither a scenario file nor a shipped scenario ({})",
            BUILTIN_NAMES.join(", ")
        );
    };
    if let Some(s) = g.seed {
        sc.seed = s;
    }
    if let Some(c) = g.grid_cell {
        sc.grid.cell = c;
    }
    if let Some(w) = g.w1 {
        sc.weights.w1 = w;
    }
    if let Some(k) = g.lattice {
        sc.ground.lattice = k;
    }
    if let Some(m) = g.max_iters {
        sc.pga.max_iters = m;
    }
    sc.validate().with_context(|| format!("invalid overrides for {name}"))?;
    Ok(sc)
}

fn out_dir(g: &Global, sc: &Scenario) -> Result<PathBuf> {
    let dir = g.out_dir.join(sc.label());
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn print_team(team: &TeamState) {
    println!("  {:>3}  {:>9}  {:>9}  {:>6}  class", "i", "x", "y", "t");
    for i in 0..team.len() {
        let cls = &team.classes[i];
        println!(
            "  {:>3}  {:>9.2}  {:>9.2}  {:>6.3}  {}",
            i,
            team.positions[i].x,
            team.positions[i].y,
            team.memberships[i],
            cls.name.clone().unwrap_or_else(|| format!("delta={}", cls.delta))
        );
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Validate { scenario } => {
            let sc = load(scenario, g)?;
            let setup = Setup::new(&sc)?;
            let model = setup.cost_model(sc.weights.w1)?;
            println!("scenario {}", sc.label());
            println!("  obstacles     {}", sc.space.obstacles.len());
            println!("  grid nodes    {}", setup.domain.grid.len());
            println!("  ground points {}", setup.ground.len());
            println!("  total density {:.1}", setup.domain.total_density());
            for (cls, n) in setup.roster.classes.iter().zip(&setup.roster.counts) {
                println!(
                    "  class p0={} lambda={} delta={} w2={} x{}: kappa={:.1} gamma={:.1}",
                    cls.p0,
                    cls.lambda,
                    cls.delta,
                    cls.w2,
                    n,
                    cls.kappa(),
                    cls.gamma()
                );
            }
            println!("  w1={} beta={:.6}", sc.weights.w1, model.beta);
        }
        Command::Greedy { scenario } => {
            let sc = load(scenario, g)?;
            let setup = Setup::new(&sc)?;
            let sol = greedy_place(&setup.domain, &setup.ground, &setup.roster)?;
            let dir = out_dir(g, &sc)?;
            write_greedy_trace(&dir.join("greedy_trace.csv"), &sol)?;
            let team = sol.team()?;
            write_json(&dir.join("greedy_placements.json"), &team)?;
            println!("greedy on {}: H = {:.2}", sc.label(), sol.value());
            print_team(&team);
            info!("wrote {}", dir.display());
        }
        Command::Bounds {
            scenario,
            partial,
            budget,
        } => {
            let sc = load(scenario, g)?;
            let setup = Setup::new(&sc)?;
            let sol = greedy_place(&setup.domain, &setup.ground, &setup.roster)?;
            let mut opts = BoundOptions {
                partial_mode: (*partial).into(),
                ..BoundOptions::default()
            };
            if let Some(b) = budget {
                opts.budget = *b;
            }
            let rep = bound_report(&setup.domain, &setup.ground, &setup.roster, &sol, &opts)?;
            let dir = out_dir(g, &sc)?;
            write_json(&dir.join("bounds.json"), &rep)?;
            println!("bounds on {} (N = {}, H = {:.2})", sc.label(), rep.rank, sol.value());
            println!("  L_C {:.4}", rep.l_c);
            println!("  L_T {}  (alpha_T {})", fmt_opt(rep.l_t), fmt_opt(rep.alpha_t));
            println!("  L_P {}  (alpha_P {})", fmt_opt(rep.l_p), fmt_opt(rep.alpha_p));
            println!("  L_G {}  (alpha_G {})", fmt_opt(rep.l_g), fmt_opt(rep.alpha_g));
            println!("  best {:.4}", rep.l_overall);
            for note in &rep.method_notes {
                println!("  note: {note}");
            }
        }
        Command::Optimize {
            scenario,
            no_bounds,
        } => {
            let sc = load(scenario, g)?;
            let opts = RunOptions {
                with_bounds: !no_bounds,
                ..RunOptions::default()
            };
            let art = run_pipeline_with(&sc, &opts)?;
            let dir = out_dir(g, &sc)?;
            write_run(&dir, &art)?;
            let r = &art.report;
            println!("{} (w1 = {}, beta = {:.6})", r.scenario, r.w1, r.beta);
            println!(
                "  {:<8} {:>3} {:>12} {:>12} {:>12} {:>8}",
                "", "N", "H(s)", "C(t)", "H(s,t)", "norm"
            );
            for (label, s) in [("greedy", &r.greedy), ("pga", &r.pga.objective)] {
                println!(
                    "  {:<8} {:>3} {:>12.1} {:>12.1} {:>12.1} {:>8.4}",
                    label, s.n, s.coverage, s.cost, s.total, s.normalized
                );
            }
            println!(
                "  iterations {} (converged {}), team by class {:?}",
                r.pga.iterations, r.pga.converged, r.pga.team_by_class
            );
            println!("  greedy bound {:.4}", r.bounds.l_overall);
            if let Some(p) = &r.post {
                println!(
                    "  post: H(S^G2) = {:.1}, L2 = {:.4}, L' = {:.4}",
                    p.greedy2_value, p.l2, p.l_prime
                );
            }
            print_team(&r.final_team);
        }
        Command::SweepW1 { scenario, values } => {
            let sc = load(scenario, g)?;
            let rows = sweep_w1(&sc, values)?;
            let dir = out_dir(g, &sc)?;
            write_sweep(&dir.join("sweep_w1.csv"), &rows)?;
            println!("{:>5} {:>12} {:>12} {:>12} {:>3}", "w1", "H(s)", "C(t)", "H(s,t)", "N");
            for r in &rows {
                println!(
                    "{:>5.2} {:>12.1} {:>12.1} {:>12.1} {:>3}",
                    r.w1, r.coverage, r.cost, r.total, r.n_final
                );
            }
        }
        Command::CompareOracle { scenario, values } => {
            let sc = load(scenario, g)?;
            let cmp = compare_oracle(&sc, values)?;
            let dir = out_dir(g, &sc)?;
            write_comparison(&dir.join("comparison.csv"), &cmp)?;
            write_baseline(&dir.join("baseline_random.csv"), &cmp.random, sc.weights.w1)?;
            write_baseline(&dir.join("baseline_corner.csv"), &cmp.corner, sc.weights.w1)?;
            println!(
                "{} compositions; baseline {:.2} s (random), {:.2} s (corner)",
                cmp.random.compositions.len(),
                cmp.random.seconds,
                cmp.corner.seconds
            );
            println!(
                "{:>5} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12}",
                "w1", "pga H(s)", "pga H(s,t)", "bf1 H(s)", "bf1 H(s,t)", "bf2 H(s)", "bf2 H(s,t)"
            );
            for r in &cmp.rows {
                println!(
                    "{:>5.2} {:>12.1} {:>12.1} {:>12.1} {:>12.1} {:>12.1} {:>12.1}",
                    r.w1,
                    r.pga_coverage,
                    r.pga_total,
                    r.random_coverage,
                    r.random_total,
                    r.corner_coverage,
                    r.corner_total
                );
            }
            println!("time ratio (pga / baseline) {:.4}", cmp.time_ratio());
        }
        Command::DumpField { scenario, stage } => {
            let sc = load(scenario, g)?;
            let setup = Setup::new(&sc)?;
            let team = match stage {
                Stage::Greedy => greedy_place(&setup.domain, &setup.ground, &setup.roster)?.team()?,
                Stage::Final => {
                    let opts = RunOptions {
                        with_bounds: false,
                        ..RunOptions::default()
                    };
                    run_pipeline_with(&sc, &opts)?.report.final_team
                }
            };
            let dir = out_dir(g, &sc)?;
            let path = dir.join("field.csv");
            write_field(&path, &setup.domain, &team)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.global.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    run(cli)
}
