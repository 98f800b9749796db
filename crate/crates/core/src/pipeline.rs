//! End-to-end runs: greedy seed, bounds, ascent, binary recovery and the
//! post-ascent bound; weight sweeps and the brute-force comparison.

use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use crate::bounds::{bound_report, post_pga_bound, BoundOptions, BoundReport, PostBound};
use crate::error::{Error, Result};
use crate::field::{coverage_field, objective_from_footprints, team_footprints, Domain, ObjectiveBreakdown};
use crate::geometry::Point;
use crate::greedy::{greedy_place, GreedySolution, GroundSet, Roster};
use crate::oracle::{exhaustive_team_baseline, BaselineReport, InitMode};
use crate::pga::{pga_run, resolve_degenerate_t, PgaTrace, BINARY_TOL};
use crate::scenario::Scenario;
use crate::sensing::{AgentClass, CostModel, TeamState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub n: usize,
    pub coverage: f64,
    pub cost: f64,
    pub total: f64,
    /// `w1·H(s)/∫R − (1−w1)·Σγt/Σγ`.
    pub normalized: f64,
}

impl Section {
    fn new(n: usize, obj: ObjectiveBreakdown, model: &CostModel, t: &[f64]) -> Self {
        Section {
            n,
            coverage: obj.coverage,
            cost: obj.cost,
            total: obj.total,
            normalized: model.normalized(obj.coverage, t),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PgaSection {
    #[serde(flatten)]
    pub objective: Section,
    /// Selected agents per roster class.
    pub team_by_class: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    /// Agents dropped by the degenerate-membership rule.
    pub dropped: Vec<usize>,
    pub binary: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PostSection {
    pub greedy2_value: f64,
    pub l2: f64,
    pub pga_value: f64,
    pub l_prime: f64,
    pub ground_size: usize,
    pub rank: usize,
    pub bounds: BoundReport,
}

impl From<&PostBound> for PostSection {
    fn from(p: &PostBound) -> Self {
        PostSection {
            greedy2_value: p.greedy2_value,
            l2: p.l2,
            pga_value: p.pga_value,
            l_prime: p.l_prime,
            ground_size: p.ground_size,
            rank: p.rank,
            bounds: p.bounds.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub w1: f64,
    pub beta: f64,
    pub total_density: f64,
    pub grid_cell: f64,
    pub ground_size: usize,
    pub greedy: Section,
    pub bounds: BoundReport,
    pub pga: PgaSection,
    pub post: Option<PostSection>,
    pub final_team: TeamState,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub greedy_seconds: f64,
    pub bounds_seconds: f64,
    pub pga_seconds: f64,
    pub post_seconds: f64,
}

/// Everything a run produces; the report itself is free of timings so that
/// reruns serialize identically.
#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub report: RunReport,
    pub greedy: GreedySolution,
    pub trace: PgaTrace,
    pub timings: Timings,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunOptions {
    pub bounds: BoundOptions,
    /// Compute the greedy bounds and the post-ascent bound.
    pub with_bounds: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            bounds: BoundOptions::default(),
            with_bounds: true,
        }
    }
}

fn context(sc: &Scenario) -> impl Fn(Error) -> Error + '_ {
    move |e| Error::Scenario {
        path: sc.label(),
        source: Box::new(e),
    }
}

/// Prepared inputs shared by every run on one scenario.
pub struct Setup {
    pub domain: Domain,
    pub ground: GroundSet,
    pub roster: Roster,
    pub agents: Vec<AgentClass>,
}

impl Setup {
    pub fn new(sc: &Scenario) -> Result<Self> {
        let wrap = context(sc);
        let domain = sc.domain().map_err(&wrap)?;
        let roster = sc.roster().map_err(&wrap)?;
        let ground = sc.ground_set(&domain).map_err(&wrap)?;
        let agents = roster.agents();
        Ok(Setup {
            domain,
            ground,
            roster,
            agents,
        })
    }

    pub fn cost_model(&self, w1: f64) -> Result<CostModel> {
        CostModel::for_classes(w1, self.domain.total_density(), &self.agents)
    }
}

/// Ascent from the greedy placement with every membership at 1, followed by
/// the degenerate-membership rule.
pub fn optimize_from_greedy(
    setup: &Setup,
    sc: &Scenario,
    greedy: &GreedySolution,
    w1: f64,
) -> Result<(TeamState, PgaTrace, Vec<usize>, CostModel)> {
    let init = greedy.team()?;
    let model = CostModel::for_classes(w1, setup.domain.total_density(), &init.classes)?;
    let (state, mut trace) = pga_run(&setup.domain, &init, &model, &sc.pga)?;
    let (state, extra, dropped) = resolve_degenerate_t(&setup.domain, &state, &model, &sc.pga)?;
    if !dropped.is_empty() {
        let offset = trace.iterations;
        for mut r in extra.records.into_iter().skip(1) {
            r.iteration += offset;
            trace.records.push(r);
        }
        trace.iterations += extra.iterations;
        trace.converged = extra.converged;
    }
    Ok((state, trace, dropped, model))
}

fn class_counts(roster: &Roster, team: &TeamState) -> Vec<usize> {
    let mut counts = vec![0; roster.classes.len()];
    for i in team.selected() {
        if let Some(c) = roster.classes.iter().position(|c| c.same_as(&team.classes[i])) {
            counts[c] += 1;
        }
    }
    counts
}

pub fn is_binary(t: &[f64]) -> bool {
    t.iter().all(|&v| v <= BINARY_TOL || v >= 1.0 - BINARY_TOL)
}

pub fn run_pipeline(sc: &Scenario) -> Result<RunArtifacts> {
    run_pipeline_with(sc, &RunOptions::default())
}

pub fn run_pipeline_with(sc: &Scenario, opts: &RunOptions) -> Result<RunArtifacts> {
    let wrap = context(sc);
    let setup = Setup::new(sc)?;
    let dom = &setup.domain;
    let mut timings = Timings::default();

    let t0 = Instant::now();
    let greedy = greedy_place(dom, &setup.ground, &setup.roster).map_err(&wrap)?;
    timings.greedy_seconds = t0.elapsed().as_secs_f64();
    info!("greedy placed {} agents, H = {:.1}", greedy.rank(), greedy.value());

    let t0 = Instant::now();
    let bounds = if opts.with_bounds {
        bound_report(dom, &setup.ground, &setup.roster, &greedy, &opts.bounds).map_err(&wrap)?
    } else {
        empty_bounds(setup.roster.size())
    };
    timings.bounds_seconds = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let (state, trace, dropped, model) =
        optimize_from_greedy(&setup, sc, &greedy, sc.weights.w1).map_err(&wrap)?;
    timings.pga_seconds = t0.elapsed().as_secs_f64();

    let init = greedy.team()?;
    let fps = team_footprints(dom, &init)?;
    let greedy_obj = objective_from_footprints(dom, &fps, &init.memberships, &model);
    let fps = team_footprints(dom, &state)?;
    let final_obj = objective_from_footprints(dom, &fps, &state.memberships, &model);

    let t0 = Instant::now();
    let selected = state.selected();
    let post = if opts.with_bounds && !selected.is_empty() {
        let positions: Vec<Point> = selected.iter().map(|&i| state.positions[i]).collect();
        let classes: Vec<AgentClass> = selected.iter().map(|&i| state.classes[i].clone()).collect();
        let pb = post_pga_bound(dom, &setup.ground, &positions, &classes, &opts.bounds)
            .map_err(&wrap)?;
        Some(PostSection::from(&pb))
    } else {
        None
    };
    timings.post_seconds = t0.elapsed().as_secs_f64();

    let report = RunReport {
        scenario: sc.label(),
        seed: sc.seed,
        w1: sc.weights.w1,
        beta: model.beta,
        total_density: dom.total_density(),
        grid_cell: dom.grid.cell(),
        ground_size: setup.ground.len(),
        greedy: Section::new(greedy.rank(), greedy_obj, &model, &init.memberships),
        bounds,
        pga: PgaSection {
            objective: Section::new(selected.len(), final_obj, &model, &state.memberships),
            team_by_class: class_counts(&setup.roster, &state),
            iterations: trace.iterations,
            converged: trace.converged,
            dropped,
            binary: is_binary(&state.memberships),
        },
        post,
        final_team: state,
    };
    Ok(RunArtifacts {
        report,
        greedy,
        trace,
        timings,
    })
}

fn empty_bounds(rank: usize) -> BoundReport {
    BoundReport {
        rank,
        alpha_t: None,
        alpha_p: None,
        alpha_p_mode: None,
        alpha_g: None,
        l_c: crate::bounds::bound_conventional(rank),
        l_t: None,
        l_p: None,
        l_g: None,
        l_overall: crate::bounds::bound_conventional(rank),
        method_notes: vec!["curvature bounds skipped".to_string()],
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub w1: f64,
    pub coverage: f64,
    pub cost: f64,
    pub total: f64,
    pub n_final: usize,
    pub binary: bool,
    pub iterations: usize,
    #[serde(skip)]
    pub seconds: f64,
    #[serde(skip)]
    pub team: Option<TeamState>,
}

/// One ascent per weight, all from the same greedy placement.
pub fn sweep_w1(sc: &Scenario, w1_values: &[f64]) -> Result<Vec<SweepRow>> {
    let wrap = context(sc);
    let setup = Setup::new(sc)?;
    let t0 = Instant::now();
    let greedy = greedy_place(&setup.domain, &setup.ground, &setup.roster).map_err(&wrap)?;
    let greedy_seconds = t0.elapsed().as_secs_f64();
    let mut rows = Vec::with_capacity(w1_values.len());
    for &w1 in w1_values {
        let t0 = Instant::now();
        let (state, trace, _, model) = optimize_from_greedy(&setup, sc, &greedy, w1).map_err(&wrap)?;
        let fps = team_footprints(&setup.domain, &state)?;
        let obj = objective_from_footprints(&setup.domain, &fps, &state.memberships, &model);
        rows.push(SweepRow {
            w1,
            coverage: obj.coverage,
            cost: obj.cost,
            total: obj.total,
            n_final: state.selected().len(),
            binary: is_binary(&state.memberships),
            iterations: trace.iterations,
            seconds: greedy_seconds + t0.elapsed().as_secs_f64(),
            team: Some(state),
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub w1: f64,
    pub pga_coverage: f64,
    pub pga_total: f64,
    pub pga_n: usize,
    pub random_coverage: f64,
    pub random_total: f64,
    pub random_composition: Vec<usize>,
    pub corner_coverage: f64,
    pub corner_total: f64,
    pub corner_composition: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct OracleComparison {
    pub rows: Vec<ComparisonRow>,
    pub random: BaselineReport,
    pub corner: BaselineReport,
    pub pga_seconds: Vec<f64>,
}

impl OracleComparison {
    /// Mean ascent time per weight over the total random-start baseline time.
    pub fn time_ratio(&self) -> f64 {
        let mean = self.pga_seconds.iter().sum::<f64>() / self.pga_seconds.len().max(1) as f64;
        mean / self.random.seconds
    }
}

/// Ascent sweep against the enumerate-every-team baseline, with random and
/// corner starts. Obstacle-free mission spaces only.
pub fn compare_oracle(sc: &Scenario, w1_values: &[f64]) -> Result<OracleComparison> {
    if !sc.space.obstacles.is_empty() {
        return Err(Error::ObstaclesPresent(sc.space.obstacles.len()));
    }
    let wrap = context(sc);
    let sweep = sweep_w1(sc, w1_values)?;
    let setup = Setup::new(sc)?;
    let random = exhaustive_team_baseline(
        &setup.domain,
        &setup.roster,
        &sc.oracle,
        InitMode::Random,
        sc.seed,
        &sc.pga,
    )
    .map_err(&wrap)?;
    let corner = exhaustive_team_baseline(
        &setup.domain,
        &setup.roster,
        &sc.oracle,
        InitMode::Corner,
        sc.seed,
        &sc.pga,
    )
    .map_err(&wrap)?;
    let mut rows = Vec::with_capacity(sweep.len());
    for row in &sweep {
        let r = random.best(row.w1)?;
        let c = corner.best(row.w1)?;
        rows.push(ComparisonRow {
            w1: row.w1,
            pga_coverage: row.coverage,
            pga_total: row.total,
            pga_n: row.n_final,
            random_coverage: r.coverage,
            random_total: r.total,
            random_composition: random.compositions[r.index].counts.clone(),
            corner_coverage: c.coverage,
            corner_total: c.total,
            corner_composition: corner.compositions[c.index].counts.clone(),
        });
    }
    Ok(OracleComparison {
        rows,
        random,
        corner,
        pga_seconds: sweep.iter().map(|r| r.seconds).collect(),
    })
}

/// Output file locations of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputFiles {
    pub report: PathBuf,
    pub greedy_trace: PathBuf,
    pub pga_trace: PathBuf,
    pub placements: PathBuf,
    pub timings: PathBuf,
}

pub fn write_run(dir: &Path, art: &RunArtifacts) -> Result<OutputFiles> {
    std::fs::create_dir_all(dir)?;
    let files = OutputFiles {
        report: dir.join("report.json"),
        greedy_trace: dir.join("greedy_trace.csv"),
        pga_trace: dir.join("pga_trace.csv"),
        placements: dir.join("placements.json"),
        timings: dir.join("timings.json"),
    };
    write_json(&files.report, &art.report)?;
    write_greedy_trace(&files.greedy_trace, &art.greedy)?;
    write_pga_trace(&files.pga_trace, &art.trace)?;
    write_json(&files.placements, &art.report.final_team)?;
    write_json(&files.timings, &art.timings)?;
    Ok(files)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn write_greedy_trace(path: &Path, sol: &GreedySolution) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "point_index", "x", "y", "class", "gain", "value"])?;
    for (i, s) in sol.steps.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            s.point_index.to_string(),
            s.point.x.to_string(),
            s.point.y.to_string(),
            s.class_index.to_string(),
            s.gain.to_string(),
            s.value.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_pga_trace(path: &Path, trace: &PgaTrace) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in &trace.records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["w1", "coverage", "cost", "total", "n_final"])?;
    for r in rows {
        w.write_record([
            r.w1.to_string(),
            r.coverage.to_string(),
            r.cost.to_string(),
            r.total.to_string(),
            r.n_final.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Baseline CSV with the cost model applied at weight `w1`.
pub fn write_baseline(path: &Path, rep: &BaselineReport, w1: f64) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["bitmask", "counts", "coverage", "cost", "total", "iterations", "seconds"])?;
    for (i, c) in rep.compositions.iter().enumerate() {
        let cost = rep.cost(i, w1)?;
        let counts: Vec<String> = c.counts.iter().map(|v| v.to_string()).collect();
        w.write_record([
            format!("{:#x}", c.bitmask),
            counts.join("+"),
            c.coverage.to_string(),
            cost.to_string(),
            (c.coverage - cost).to_string(),
            c.iterations.to_string(),
            format!("{:.6}", c.seconds),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_comparison(path: &Path, cmp: &OracleComparison) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in &cmp.rows {
        w.serialize(ComparisonCsv::from(r))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct ComparisonCsv {
    w1: f64,
    pga_coverage: f64,
    pga_total: f64,
    pga_n: usize,
    random_coverage: f64,
    random_total: f64,
    random_composition: String,
    corner_coverage: f64,
    corner_total: f64,
    corner_composition: String,
}

impl From<&ComparisonRow> for ComparisonCsv {
    fn from(r: &ComparisonRow) -> Self {
        let join = |v: &[usize]| v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("+");
        ComparisonCsv {
            w1: r.w1,
            pga_coverage: r.pga_coverage,
            pga_total: r.pga_total,
            pga_n: r.pga_n,
            random_coverage: r.random_coverage,
            random_total: r.random_total,
            random_composition: join(&r.random_composition),
            corner_coverage: r.corner_coverage,
            corner_total: r.corner_total,
            corner_composition: join(&r.corner_composition),
        }
    }
}

/// Per-node `(x, y, R, P)` of a team's joint detection field.
pub fn write_field(path: &Path, domain: &Domain, team: &TeamState) -> Result<()> {
    let p = coverage_field(domain, team)?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "y", "R", "P"])?;
    for (k, pk) in p.iter().enumerate() {
        if !domain.grid.in_omega(k) {
            continue;
        }
        let x = domain.grid.node(k);
        w.write_record([
            x.x.to_string(),
            x.y.to_string(),
            domain.density.at_node(k).to_string(),
            pk.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
