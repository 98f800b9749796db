//! Ground sets, discrete derivatives and greedy placement.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{miss_product, team_footprints, Domain, Footprint};
use crate::geometry::{MissionSpace, Point};
use crate::sensing::{AgentClass, TeamState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundSet {
    pub points: Vec<Point>,
    /// Side of the lattice the points were generated from, if any.
    pub lattice: Option<usize>,
}

impl GroundSet {
    /// Wraps explicit points, dropping exact duplicates. Every point must be feasible.
    pub fn from_points(space: &MissionSpace, points: Vec<Point>) -> Result<Self> {
        let mut out: Vec<Point> = Vec::with_capacity(points.len());
        for p in points {
            if !space.is_feasible(p) {
                return Err(Error::Infeasible(p));
            }
            if !out.contains(&p) {
                out.push(p);
            }
        }
        Ok(GroundSet {
            points: out,
            lattice: None,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// `k × k` lattice of cell centres over the bounding box; infeasible points
/// are projected onto the feasible region and duplicates removed.
pub fn build_ground_set(space: &MissionSpace, lattice: usize, rank: usize) -> Result<GroundSet> {
    if lattice < 2 {
        return Err(Error::InvalidParameter(format!(
            "ground lattice must be at least 2, got {lattice}"
        )));
    }
    let bb = space.bbox();
    let dx = bb.width() / lattice as f64;
    let dy = bb.height() / lattice as f64;
    let mut points: Vec<Point> = Vec::with_capacity(lattice * lattice);
    for j in 0..lattice {
        for i in 0..lattice {
            let raw = Point::new(
                bb.min.x + (i as f64 + 0.5) * dx,
                bb.min.y + (j as f64 + 0.5) * dy,
            );
            let p = space.project_to_feasible(raw);
            if !points.iter().any(|q| q.dist_sq(p) < 1e-18) {
                points.push(p);
            }
        }
    }
    if points.len() < rank {
        return Err(Error::GroundSetTooSmall {
            available: points.len(),
            rank,
        });
    }
    Ok(GroundSet {
        points,
        lattice: Some(lattice),
    })
}

/// Multiset of agent classes; identical classes are merged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Roster {
    pub classes: Vec<AgentClass>,
    pub counts: Vec<usize>,
}

impl Roster {
    pub fn new(entries: Vec<(AgentClass, usize)>) -> Result<Self> {
        let mut classes: Vec<AgentClass> = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        for (cls, n) in entries {
            cls.validate()?;
            if n == 0 {
                continue;
            }
            match classes.iter().position(|c| c.same_as(&cls)) {
                Some(k) => counts[k] += n,
                None => {
                    classes.push(cls);
                    counts.push(n);
                }
            }
        }
        if classes.is_empty() {
            return Err(Error::InvalidParameter("roster is empty".into()));
        }
        Ok(Roster { classes, counts })
    }

    pub fn homogeneous(cls: AgentClass, n: usize) -> Result<Self> {
        Self::new(vec![(cls, n)])
    }

    /// Roster holding exactly the given agents.
    pub fn from_agents(agents: &[AgentClass]) -> Result<Self> {
        Self::new(agents.iter().map(|c| (c.clone(), 1)).collect())
    }

    pub fn size(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn is_homogeneous(&self) -> bool {
        self.classes.len() == 1
    }

    /// One class per agent, in roster order.
    pub fn agents(&self) -> Vec<AgentClass> {
        self.classes
            .iter()
            .zip(&self.counts)
            .flat_map(|(c, &n)| std::iter::repeat(c.clone()).take(n))
            .collect()
    }
}

/// Unconstrained footprints of every ground point for every class.
#[derive(Clone, Debug)]
pub struct CandidateTable {
    /// Indexed `[point][class]`.
    pub footprints: Vec<Vec<Footprint>>,
}

impl CandidateTable {
    pub fn build(domain: &Domain, points: &[Point], classes: &[AgentClass]) -> Result<Self> {
        let footprints = points
            .par_iter()
            .map(|p| classes.iter().map(|c| domain.footprint(*p, c)).collect())
            .collect::<Result<Vec<Vec<Footprint>>>>()?;
        Ok(CandidateTable { footprints })
    }
}

/// `Σ R p miss w` over a footprint: the marginal coverage of adding it.
pub fn gain_against(domain: &Domain, fp: &Footprint, miss: &[f64]) -> f64 {
    let w = domain.grid.weight();
    let mut acc = 0.0;
    for (&k, &p) in fp.nodes.iter().zip(&fp.probs) {
        let k = k as usize;
        acc += domain.density.at_node(k) * p * miss[k];
    }
    acc * w
}

/// Marginal coverage `ΔH(x | A)` of placing an agent of class `cls` at `x`.
pub fn discrete_derivative(
    domain: &Domain,
    placed: &[(Point, AgentClass)],
    x: Point,
    cls: &AgentClass,
) -> Result<f64> {
    let team = TeamState::new(
        placed.iter().map(|(p, _)| *p).collect(),
        vec![1.0; placed.len()],
        placed.iter().map(|(_, c)| c.clone()).collect(),
    )?;
    let fps = team_footprints(domain, &team)?;
    let miss = miss_product(domain, &fps, &team.memberships);
    let fp = domain.footprint(x, cls)?;
    Ok(gain_against(domain, &fp, &miss))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreedyStep {
    pub point_index: usize,
    pub point: Point,
    pub class_index: usize,
    pub gain: f64,
    /// Coverage after this step.
    pub value: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateGain {
    pub point_index: usize,
    pub class_index: usize,
    pub gain: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreedySolution {
    pub steps: Vec<GreedyStep>,
    /// Coverage of `S^0 … S^N`.
    pub values: Vec<f64>,
    pub classes: Vec<AgentClass>,
    /// Gains of every candidate evaluated at each step.
    #[serde(skip)]
    pub candidate_gains: Option<Vec<Vec<CandidateGain>>>,
    /// Singleton gains `ΔH(x_j | ∅)`, indexed `[point][class]`.
    #[serde(skip)]
    pub singleton_gains: Option<Vec<Vec<f64>>>,
}

impl GreedySolution {
    pub fn value(&self) -> f64 {
        *self.values.last().unwrap_or(&0.0)
    }

    pub fn rank(&self) -> usize {
        self.steps.len()
    }

    pub fn positions(&self) -> Vec<Point> {
        self.steps.iter().map(|s| s.point).collect()
    }

    pub fn agent_classes(&self) -> Vec<AgentClass> {
        self.steps
            .iter()
            .map(|s| self.classes[s.class_index].clone())
            .collect()
    }

    pub fn team(&self) -> Result<TeamState> {
        TeamState::new(
            self.positions(),
            vec![1.0; self.steps.len()],
            self.agent_classes(),
        )
    }
}

/// Greedy placement of the whole roster over the ground set. Each step scans
/// every unused point against every class with agents left; ties go to the
/// lowest point index, then the lowest class index.
pub fn greedy_place(domain: &Domain, ground: &GroundSet, roster: &Roster) -> Result<GreedySolution> {
    let table = CandidateTable::build(domain, &ground.points, &roster.classes)?;
    greedy_with_table(domain, ground, roster, &table)
}

pub fn greedy_with_table(
    domain: &Domain,
    ground: &GroundSet,
    roster: &Roster,
    table: &CandidateTable,
) -> Result<GreedySolution> {
    let n = ground.len();
    let rank = roster.size();
    if n < rank {
        return Err(Error::GroundSetTooSmall { available: n, rank });
    }
    let n_cls = roster.classes.len();
    let mut miss = vec![1.0; domain.grid.len()];
    let mut used = vec![false; n];
    let mut remaining = roster.counts.clone();
    let mut steps = Vec::with_capacity(rank);
    let mut values = vec![0.0];
    let mut cache = Vec::with_capacity(rank);
    let mut singleton = vec![vec![0.0; n_cls]; n];

    for step in 0..rank {
        let pairs: Vec<(usize, usize)> = (0..n)
            .filter(|&j| !used[j])
            .flat_map(|j| (0..n_cls).map(move |c| (j, c)))
            .filter(|&(_, c)| remaining[c] > 0)
            .collect();
        let gains: Vec<CandidateGain> = pairs
            .par_iter()
            .map(|&(j, c)| CandidateGain {
                point_index: j,
                class_index: c,
                gain: gain_against(domain, &table.footprints[j][c], &miss),
            })
            .collect();
        if step == 0 {
            for g in &gains {
                singleton[g.point_index][g.class_index] = g.gain;
            }
        }
        let mut best = gains[0];
        for g in &gains[1..] {
            if g.gain > best.gain {
                best = *g;
            }
        }
        table.footprints[best.point_index][best.class_index].apply_miss(&mut miss, 1.0);
        used[best.point_index] = true;
        remaining[best.class_index] -= 1;
        let value = domain.coverage_from_miss(&miss);
        values.push(value);
        steps.push(GreedyStep {
            point_index: best.point_index,
            point: ground.points[best.point_index],
            class_index: best.class_index,
            gain: best.gain,
            value,
        });
        cache.push(gains);
    }
    Ok(GreedySolution {
        steps,
        values,
        classes: roster.classes.clone(),
        candidate_gains: Some(cache),
        singleton_gains: Some(singleton),
    })
}
