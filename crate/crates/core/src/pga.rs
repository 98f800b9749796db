//! Gradients of the joint objective, projected gradient ascent over
//! positions and memberships, and recovery of binary memberships.

use std::f64::consts::PI;

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Domain, Footprint, ObjectiveBreakdown};
use crate::geometry::{Point, VisibilityRegion};
use crate::sensing::{CostModel, TeamState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepSchedule {
    Fixed,
    /// `η⁰ / (1 + k/200)`.
    Diminishing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PgaConfig {
    pub eta_s: f64,
    pub eta_t: f64,
    pub eps_s: f64,
    pub eps_t: f64,
    pub max_iters: usize,
    pub backtracking: bool,
    pub shrink: f64,
    /// Smallest step multiplier tried before giving up on an iteration.
    pub min_step: f64,
    pub boundary_samples: usize,
    pub arc_samples: usize,
    pub schedule: StepSchedule,
    /// Include the motion of the range-limited arc in the position gradient.
    pub arc_term: bool,
    /// Update memberships; when false only positions move.
    pub optimize_t: bool,
    /// Largest multiplier the membership step may grow to after repeated
    /// accepted steps; 1 keeps it fixed.
    pub max_growth: f64,
}

impl Default for PgaConfig {
    fn default() -> Self {
        PgaConfig {
            eta_s: 2.0,
            eta_t: 5e-6,
            eps_s: 1e-2,
            eps_t: 1e-4,
            max_iters: 2000,
            backtracking: true,
            shrink: 0.5,
            min_step: 1.0 / 1024.0,
            boundary_samples: 32,
            arc_samples: 360,
            schedule: StepSchedule::Fixed,
            arc_term: true,
            optimize_t: true,
            max_growth: 16.0,
        }
    }
}

impl PgaConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("eta_s", self.eta_s),
            ("eta_t", self.eta_t),
            ("eps_s", self.eps_s),
            ("eps_t", self.eps_t),
            ("min_step", self.min_step),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "shrink factor must lie in (0, 1), got {}",
                self.shrink
            )));
        }
        if !(self.max_growth >= 1.0) || !self.max_growth.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "max_growth must be at least 1, got {}",
                self.max_growth
            )));
        }
        if self.boundary_samples == 0 || self.arc_samples == 0 {
            return Err(Error::InvalidParameter(
                "boundary sample counts must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Degeneracy tolerance on `H_i`: the size of a membership gradient whose
    /// step would fall under `eps_t`.
    pub fn degeneracy_tol(&self) -> f64 {
        self.eps_t / self.eta_t
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborGraph {
    pub adjacency: Vec<Vec<usize>>,
}

impl NeighborGraph {
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    /// Neighbors of `i` together with `i`, ascending.
    pub fn closed(&self, i: usize) -> Vec<usize> {
        let mut v = self.adjacency[i].clone();
        let pos = v.partition_point(|&j| j < i);
        v.insert(pos, i);
        v
    }

    fn from_regions(team: &TeamState, regions: &[VisibilityRegion]) -> Self {
        let n = team.len();
        let mut adjacency = vec![Vec::new(); n];
        for i in 0..n {
            for j in (i + 1)..n {
                let reach = team.classes[i].delta + team.classes[j].delta;
                if team.positions[i].dist(team.positions[j]) > reach {
                    continue;
                }
                if sorted_intersect(&regions[i].nodes, &regions[j].nodes) {
                    adjacency[i].push(j);
                    adjacency[j].push(i);
                }
            }
        }
        NeighborGraph { adjacency }
    }
}

fn sorted_intersect(a: &[u32], b: &[u32]) -> bool {
    let (mut x, mut y) = (0, 0);
    while x < a.len() && y < b.len() {
        match a[x].cmp(&b[y]) {
            std::cmp::Ordering::Less => x += 1,
            std::cmp::Ordering::Greater => y += 1,
            std::cmp::Ordering::Equal => return true,
        }
    }
    false
}

/// Visibility masks, unconstrained footprints and neighbor graph of a team.
struct Snapshot {
    fps: Vec<Footprint>,
    distances: Vec<Vec<f64>>,
    graph: NeighborGraph,
}

impl Snapshot {
    fn new(domain: &Domain, team: &TeamState) -> Result<Self> {
        team.check_feasible(&domain.space)?;
        let regions: Vec<VisibilityRegion> = team
            .positions
            .par_iter()
            .zip(team.classes.par_iter())
            .map(|(s, c)| domain.space.visibility_mask(*s, c.delta, &domain.grid))
            .collect::<Result<_>>()?;
        let graph = NeighborGraph::from_regions(team, &regions);
        let mut fps = Vec::with_capacity(team.len());
        let mut distances = Vec::with_capacity(team.len());
        for (r, c) in regions.into_iter().zip(&team.classes) {
            let probs = r
                .distances
                .iter()
                .map(|&d| c.p0 * (-c.lambda * d).exp())
                .collect();
            fps.push(Footprint {
                nodes: r.nodes,
                probs,
            });
            distances.push(r.distances);
        }
        Ok(Snapshot {
            fps,
            distances,
            graph,
        })
    }

    fn objective(&self, domain: &Domain, team: &TeamState, model: &CostModel) -> ObjectiveBreakdown {
        crate::field::objective_from_footprints(domain, &self.fps, &team.memberships, model)
    }

    /// `Φ_i` on the nodes of agent `i`'s footprint, from its neighbors only.
    fn phi(&self, domain: &Domain, team: &TeamState, i: usize) -> Vec<f64> {
        let mut dense = vec![1.0; domain.grid.len()];
        for &j in self.graph.neighbors(i) {
            self.fps[j].apply_miss(&mut dense, team.memberships[j]);
        }
        self.fps[i].nodes.iter().map(|&k| dense[k as usize]).collect()
    }
}

pub fn neighbor_graph(domain: &Domain, team: &TeamState) -> Result<NeighborGraph> {
    Ok(Snapshot::new(domain, team)?.graph)
}

/// `Φ_i(x)` at an arbitrary point, with exact visibility tests.
fn phi_at(domain: &Domain, team: &TeamState, graph: &NeighborGraph, i: usize, x: Point) -> f64 {
    graph.neighbors(i).iter().fold(1.0, |acc, &k| {
        let c = &team.classes[k];
        let s = team.positions[k];
        if domain.space.sees(s, c.delta, x) {
            acc * (1.0 - team.memberships[k] * c.p0 * (-c.lambda * x.dist(s)).exp())
        } else {
            acc
        }
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PositionGradient {
    pub area: Point,
    pub shadow: Point,
    pub arc: Point,
}

impl PositionGradient {
    pub fn total(&self) -> Point {
        self.area + self.shadow + self.arc
    }
}

struct AgentGradient {
    position: PositionGradient,
    local_coverage: f64,
}

fn agent_gradient(
    domain: &Domain,
    team: &TeamState,
    snap: &Snapshot,
    i: usize,
    cfg: &PgaConfig,
) -> AgentGradient {
    let cls = &team.classes[i];
    let ti = team.memberships[i];
    let s = team.positions[i];
    let fp = &snap.fps[i];
    let phi = snap.phi(domain, team, i);
    let w = domain.grid.weight();
    let mut local = 0.0;
    let mut area = Point::default();
    for (q, (&k, &p)) in fp.nodes.iter().zip(&fp.probs).enumerate() {
        let k = k as usize;
        let rp = domain.density.at_node(k) * phi[q] * p;
        local += rp;
        let d = snap.distances[i][q];
        if d > 0.0 {
            let x = domain.grid.node(k);
            area = area + (s - x) * (-cls.lambda * ti * rp / d);
        }
    }
    let mut grad = PositionGradient {
        area: area * w,
        ..Default::default()
    };
    if ti > 0.0 {
        let se = domain.space.nudge_off_degenerate(s, cls.delta);
        let amp = ti * cls.p0;
        for seg in domain.space.extract_impact_segments(se, cls.delta) {
            let m = cfg.boundary_samples;
            let dr = seg.length / m as f64;
            let mut acc = 0.0;
            for q in 0..m {
                let r = (q as f64 + 0.5) * dr;
                let x = seg.point_at(r);
                let pbar = amp * (-cls.lambda * (seg.anchor_distance + r)).exp();
                acc += domain.density.at(&domain.grid, x)
                    * phi_at(domain, team, &snap.graph, i, x)
                    * pbar
                    * r;
            }
            grad.shadow = grad.shadow + seg.normal * (acc * dr / seg.anchor_distance);
        }
        if cfg.arc_term {
            let m = cfg.arc_samples;
            let dphi = 2.0 * PI / m as f64;
            let edge = amp * (-cls.lambda * cls.delta).exp();
            let mut acc = Point::default();
            for q in 0..m {
                let ang = (q as f64 + 0.5) * dphi;
                let u = Point::new(ang.cos(), ang.sin());
                let x = se + u * cls.delta;
                if domain.space.is_feasible(x) && domain.space.segment_clear(se, x) {
                    acc = acc
                        + u * (domain.density.at(&domain.grid, x)
                            * phi_at(domain, team, &snap.graph, i, x));
                }
            }
            grad.arc = acc * (edge * cls.delta * dphi);
        }
    }
    AgentGradient {
        position: grad,
        local_coverage: local * w,
    }
}

/// `∂H/∂s_i`, split into interior, shadow-boundary and arc-boundary parts.
pub fn gradient_position_parts(
    domain: &Domain,
    team: &TeamState,
    i: usize,
    cfg: &PgaConfig,
) -> Result<PositionGradient> {
    let snap = Snapshot::new(domain, team)?;
    Ok(agent_gradient(domain, team, &snap, i, cfg).position)
}

pub fn gradient_position(domain: &Domain, team: &TeamState, i: usize, cfg: &PgaConfig) -> Result<Point> {
    Ok(gradient_position_parts(domain, team, i, cfg)?.total())
}

/// `∂H/∂t_i = ∫ R Φ_i p_i − βγ_i`, independent of `t_i`.
pub fn gradient_membership(domain: &Domain, team: &TeamState, model: &CostModel, i: usize) -> Result<f64> {
    let snap = Snapshot::new(domain, team)?;
    Ok(local_coverage(domain, team, &snap, i) - model.beta * model.gammas[i])
}

fn local_coverage(domain: &Domain, team: &TeamState, snap: &Snapshot, i: usize) -> f64 {
    let phi = snap.phi(domain, team, i);
    let fp = &snap.fps[i];
    let mut acc = 0.0;
    for (q, (&k, &p)) in fp.nodes.iter().zip(&fp.probs).enumerate() {
        acc += domain.density.at_node(k as usize) * phi[q] * p;
    }
    acc * domain.grid.weight()
}

/// Splits the objective as `H = t_i H_i + H_iᶜ`; returns `(H_i, H_iᶜ)`.
pub fn decompose(domain: &Domain, team: &TeamState, model: &CostModel, i: usize) -> Result<(f64, f64)> {
    let snap = Snapshot::new(domain, team)?;
    let h_i = local_coverage(domain, team, &snap, i) - model.beta * model.gammas[i];
    let mut miss = vec![1.0; domain.grid.len()];
    let mut cost = 0.0;
    for j in 0..team.len() {
        if j == i {
            continue;
        }
        snap.fps[j].apply_miss(&mut miss, team.memberships[j]);
        cost += model.gammas[j] * team.memberships[j];
    }
    let h_ic = domain.coverage_from_miss(&miss) - model.beta * cost;
    Ok((h_i, h_ic))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iteration: usize,
    pub coverage: f64,
    pub cost: f64,
    pub total: f64,
    pub max_ds: f64,
    pub max_dt: f64,
    pub eta_s: f64,
    pub eta_t: f64,
    pub active: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PgaTrace {
    pub records: Vec<IterRecord>,
    pub converged: bool,
    pub iterations: usize,
}

impl PgaTrace {
    pub fn final_objective(&self) -> Option<ObjectiveBreakdown> {
        self.records
            .last()
            .map(|r| ObjectiveBreakdown::new(r.coverage, r.cost))
    }

    fn append(&mut self, other: PgaTrace) {
        let offset = self.iterations;
        let skip = usize::from(!self.records.is_empty());
        for mut r in other.records.into_iter().skip(skip) {
            r.iteration += offset;
            self.records.push(r);
        }
        self.iterations += other.iterations;
        self.converged = other.converged;
    }
}

fn active_count(t: &[f64]) -> usize {
    t.iter().filter(|&&v| v >= 0.5).count()
}

struct Candidate {
    team: TeamState,
    snap: Snapshot,
    obj: ObjectiveBreakdown,
}

/// Projected gradient ascent from `init`. Agents update synchronously from
/// gradients computed on the current state; with backtracking both step
/// sizes are halved until the objective does not decrease.
pub fn pga_run(
    domain: &Domain,
    init: &TeamState,
    model: &CostModel,
    cfg: &PgaConfig,
) -> Result<(TeamState, PgaTrace)> {
    cfg.validate()?;
    if model.gammas.len() != init.len() {
        return Err(Error::InvalidParameter(format!(
            "cost model has {} agents, team has {}",
            model.gammas.len(),
            init.len()
        )));
    }
    let mut team = init.clone();
    let mut snap = Snapshot::new(domain, &team)?;
    let mut obj = snap.objective(domain, &team, model);
    let mut trace = PgaTrace::default();
    trace.records.push(IterRecord {
        iteration: 0,
        coverage: obj.coverage,
        cost: obj.cost,
        total: obj.total,
        max_ds: 0.0,
        max_dt: 0.0,
        eta_s: 0.0,
        eta_t: 0.0,
        active: active_count(&team.memberships),
    });
    let n = team.len();
    let mut scale_hint: f64 = 1.0;
    let mut t_hint: f64 = 1.0;
    for k in 0..cfg.max_iters {
        let grads: Vec<AgentGradient> = (0..n)
            .into_par_iter()
            .map(|i| agent_gradient(domain, &team, &snap, i, cfg))
            .collect();
        let gs: Vec<Point> = grads.iter().map(|g| g.position.total()).collect();
        let gt: Vec<f64> = grads
            .iter()
            .enumerate()
            .map(|(i, g)| g.local_coverage - model.beta * model.gammas[i])
            .collect();
        let decay = match cfg.schedule {
            StepSchedule::Fixed => 1.0,
            StepSchedule::Diminishing => 1.0 / (1.0 + k as f64 / 200.0),
        };
        let (eta_s, eta_t) = (cfg.eta_s * decay, cfg.eta_t * decay);

        let step = |scale_s: f64, scale_t: f64| -> Result<Candidate> {
            let mut next = team.clone();
            for i in 0..n {
                if scale_s > 0.0 {
                    let raw = team.positions[i] + gs[i] * (scale_s * eta_s);
                    next.positions[i] = domain.space.project_to_feasible(raw);
                }
                if scale_t > 0.0 && cfg.optimize_t {
                    next.memberships[i] =
                        (team.memberships[i] + scale_t * eta_t * gt[i]).clamp(0.0, 1.0);
                }
            }
            for (index, p) in next.positions.iter().enumerate() {
                if !domain.space.is_feasible(*p) {
                    return Err(Error::InfeasibleAgent { index, point: *p });
                }
            }
            let snap = Snapshot::new(domain, &next)?;
            let obj = snap.objective(domain, &next, model);
            Ok(Candidate {
                team: next,
                snap,
                obj,
            })
        };

        // Position scale shrinks first with memberships at the nominal step.
        // Once positions are frozen the membership scale backtracks on its
        // own, and grows while such steps keep being accepted.
        let mut accepted: Option<(Candidate, f64, f64)> = None;
        if cfg.backtracking {
            let mut scale = (scale_hint * 2.0).min(1.0);
            while scale >= cfg.min_step {
                let cand = step(scale, 1.0)?;
                if cand.obj.total >= obj.total {
                    accepted = Some((cand, scale, 1.0));
                    scale_hint = scale;
                    t_hint = 1.0;
                    break;
                }
                scale *= cfg.shrink;
            }
            if accepted.is_none() {
                scale_hint = cfg.min_step;
                let mut scale = t_hint;
                while cfg.optimize_t && scale >= cfg.min_step {
                    let cand = step(0.0, scale)?;
                    if cand.obj.total >= obj.total {
                        accepted = Some((cand, 0.0, scale));
                        break;
                    }
                    scale *= cfg.shrink;
                }
                t_hint = match &accepted {
                    Some((_, _, used)) if *used >= t_hint => (t_hint * 2.0).min(cfg.max_growth),
                    Some((_, _, used)) => used.max(1.0),
                    None => 1.0,
                };
            }
        } else {
            accepted = Some((step(1.0, 1.0)?, 1.0, 1.0));
        }

        let (ds2, dt2, max_ds, max_dt, used_s, used_t) = match &accepted {
            Some((cand, scale_s, scale_t)) => {
                let mut ds2 = 0.0;
                let mut dt2 = 0.0;
                let mut max_ds: f64 = 0.0;
                let mut max_dt: f64 = 0.0;
                for i in 0..n {
                    let d = cand.team.positions[i].dist(team.positions[i]);
                    let e = (cand.team.memberships[i] - team.memberships[i]).abs();
                    ds2 += d * d;
                    dt2 += e * e;
                    max_ds = max_ds.max(d);
                    max_dt = max_dt.max(e);
                }
                (ds2, dt2, max_ds, max_dt, *scale_s, *scale_t)
            }
            None => (0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
        };
        if let Some((cand, _, _)) = accepted {
            team = cand.team;
            snap = cand.snap;
            obj = cand.obj;
        }
        trace.records.push(IterRecord {
            iteration: k + 1,
            coverage: obj.coverage,
            cost: obj.cost,
            total: obj.total,
            max_ds,
            max_dt,
            eta_s: eta_s * used_s,
            eta_t: eta_t * used_t,
            active: active_count(&team.memberships),
        });
        trace.iterations = k + 1;
        if ds2.sqrt() <= cfg.eps_s && dt2.sqrt() <= cfg.eps_t {
            trace.converged = true;
            break;
        }
    }
    debug!(
        "pga finished after {} iterations (converged: {}), H = {:.3}",
        trace.iterations, trace.converged, obj.total
    );
    Ok((team, trace))
}

/// Membership gradients `H_i` of every agent.
pub fn membership_gradients(domain: &Domain, team: &TeamState, model: &CostModel) -> Result<Vec<f64>> {
    let snap = Snapshot::new(domain, team)?;
    Ok((0..team.len())
        .map(|i| local_coverage(domain, team, &snap, i) - model.beta * model.gammas[i])
        .collect())
}

/// Agents with a fractional membership and a vanishing membership gradient.
pub fn degenerate_agents(
    domain: &Domain,
    team: &TeamState,
    model: &CostModel,
    cfg: &PgaConfig,
) -> Result<Vec<(usize, f64)>> {
    let h = membership_gradients(domain, team, model)?;
    let tol = cfg.degeneracy_tol();
    Ok((0..team.len())
        .filter(|&i| {
            let t = team.memberships[i];
            t > BINARY_TOL && t < 1.0 - BINARY_TOL && h[i].abs() <= tol
        })
        .map(|i| (i, h[i]))
        .collect())
}

/// Distance from `{0, 1}` under which a membership counts as binary.
pub const BINARY_TOL: f64 = 1e-3;

/// While some agent has a fractional membership with `H_i ≈ 0`, drops the
/// one with the smallest `|H_i|` (the objective does not depend on it) and
/// runs the ascent again. Returns the final state, the trace of the re-runs
/// and the agents that were dropped.
pub fn resolve_degenerate_t(
    domain: &Domain,
    team: &TeamState,
    model: &CostModel,
    cfg: &PgaConfig,
) -> Result<(TeamState, PgaTrace, Vec<usize>)> {
    let mut state = team.clone();
    let mut trace = PgaTrace::default();
    let mut dropped = Vec::new();
    for _ in 0..team.len() {
        let degenerate = degenerate_agents(domain, &state, model, cfg)?;
        let Some(&(i, h)) = degenerate
            .iter()
            .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(a.0.cmp(&b.0)))
        else {
            break;
        };
        info!("agent {i} has fractional membership with H_i = {h:.3e}; dropping it");
        state.memberships[i] = 0.0;
        dropped.push(i);
        let (next, tr) = pga_run(domain, &state, model, cfg)?;
        state = next;
        trace.append(tr);
    }
    Ok((state, trace, dropped))
}
