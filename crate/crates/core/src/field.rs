//! Quadrature grid, event density and the coverage objective.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{MissionSpace, Point};
use crate::sensing::{AgentClass, CostModel, TeamState};

/// Midpoint-rule grid over the bounding box of the mission space.
#[derive(Clone, Debug)]
pub struct QuadratureGrid {
    origin: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    in_omega: Vec<bool>,
    in_feasible: Vec<bool>,
}

impl QuadratureGrid {
    pub fn new(space: &MissionSpace, cell: f64) -> Result<Self> {
        if !(cell > 0.0) || !cell.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "grid cell must be positive, got {cell}"
            )));
        }
        let bb = space.bbox();
        let nx = ((bb.width() / cell).ceil() as usize).max(1);
        let ny = ((bb.height() / cell).ceil() as usize).max(1);
        let mut in_omega = vec![false; nx * ny];
        let mut in_feasible = vec![false; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let k = j * nx + i;
                let p = Point::new(
                    bb.min.x + (i as f64 + 0.5) * cell,
                    bb.min.y + (j as f64 + 0.5) * cell,
                );
                in_omega[k] = space.outer().contains_closed(p);
                in_feasible[k] = in_omega[k] && space.is_feasible(p);
            }
        }
        Ok(QuadratureGrid {
            origin: bb.min,
            cell,
            nx,
            ny,
            in_omega,
            in_feasible,
        })
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell(&self) -> f64 {
        self.cell
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn weight(&self) -> f64 {
        self.cell * self.cell
    }

    pub fn node(&self, k: usize) -> Point {
        let i = k % self.nx;
        let j = k / self.nx;
        Point::new(
            self.origin.x + (i as f64 + 0.5) * self.cell,
            self.origin.y + (j as f64 + 0.5) * self.cell,
        )
    }

    pub fn in_omega(&self, k: usize) -> bool {
        self.in_omega[k]
    }

    pub fn in_feasible(&self, k: usize) -> bool {
        self.in_feasible[k]
    }

    /// Node whose cell contains `p` (clamped to the grid).
    pub fn nearest_node(&self, p: Point) -> usize {
        let i = (((p.x - self.origin.x) / self.cell).floor().max(0.0) as usize).min(self.nx - 1);
        let j = (((p.y - self.origin.y) / self.cell).floor().max(0.0) as usize).min(self.ny - 1);
        j * self.nx + i
    }

    /// Nodes whose midpoints may lie within `r` of `c`, row by row in
    /// ascending index order.
    pub fn nodes_in_box(&self, c: Point, r: f64) -> impl Iterator<Item = usize> + '_ {
        let lo = |v: f64, o: f64, n: usize| {
            (((v - o) / self.cell - 0.5).ceil().max(0.0) as usize).min(n)
        };
        let hi = |v: f64, o: f64, n: usize| {
            let t = ((v - o) / self.cell - 0.5).floor();
            if t < 0.0 {
                0
            } else {
                ((t as usize) + 1).min(n)
            }
        };
        let i0 = lo(c.x - r, self.origin.x, self.nx);
        let i1 = hi(c.x + r, self.origin.x, self.nx);
        let j0 = lo(c.y - r, self.origin.y, self.ny);
        let j1 = hi(c.y + r, self.origin.y, self.ny);
        let nx = self.nx;
        (j0..j1.max(j0)).flat_map(move |j| (i0..i1.max(i0)).map(move |i| j * nx + i))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DensitySpec {
    Uniform { value: f64 },
    /// Row-major samples on an `nx` by `ny` lattice spanning the bounding box.
    Grid { nx: usize, ny: usize, values: Vec<f64> },
}

impl Default for DensitySpec {
    fn default() -> Self {
        DensitySpec::Uniform { value: 1.0 }
    }
}

/// Event density sampled at the quadrature nodes.
#[derive(Clone, Debug)]
pub struct DensityField {
    spec: DensitySpec,
    values: Vec<f64>,
}

impl DensityField {
    pub fn new(spec: DensitySpec, grid: &QuadratureGrid, space: &MissionSpace) -> Result<Self> {
        let bb = space.bbox();
        let values = match &spec {
            DensitySpec::Uniform { value } => {
                if !(*value > 0.0) || !value.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "uniform density must be positive, got {value}"
                    )));
                }
                vec![*value; grid.len()]
            }
            DensitySpec::Grid { nx, ny, values } => {
                if *nx == 0 || *ny == 0 || values.len() != nx * ny {
                    return Err(Error::InvalidParameter(format!(
                        "density grid needs {nx}x{ny} values, got {}",
                        values.len()
                    )));
                }
                if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                    return Err(Error::InvalidParameter(
                        "density values must be finite and non-negative".into(),
                    ));
                }
                (0..grid.len())
                    .map(|k| {
                        let p = grid.node(k);
                        let i = (((p.x - bb.min.x) / bb.width() * *nx as f64) as usize).min(nx - 1);
                        let j = (((p.y - bb.min.y) / bb.height() * *ny as f64) as usize).min(ny - 1);
                        values[j * nx + i]
                    })
                    .collect()
            }
        };
        Ok(DensityField { spec, values })
    }

    pub fn uniform(value: f64, grid: &QuadratureGrid, space: &MissionSpace) -> Result<Self> {
        Self::new(DensitySpec::Uniform { value }, grid, space)
    }

    pub fn spec(&self) -> &DensitySpec {
        &self.spec
    }

    pub fn at_node(&self, k: usize) -> f64 {
        self.values[k]
    }

    /// Density at an arbitrary point (value of the containing cell).
    pub fn at(&self, grid: &QuadratureGrid, p: Point) -> f64 {
        match self.spec {
            DensitySpec::Uniform { value } => value,
            DensitySpec::Grid { .. } => self.values[grid.nearest_node(p)],
        }
    }
}

/// Mission space, grid and density bundled for objective evaluation.
#[derive(Clone, Debug)]
pub struct Domain {
    pub space: MissionSpace,
    pub grid: QuadratureGrid,
    pub density: DensityField,
    total_density: f64,
}

impl Domain {
    pub fn new(space: MissionSpace, cell: f64, density: DensitySpec) -> Result<Self> {
        let grid = QuadratureGrid::new(&space, cell)?;
        let density = DensityField::new(density, &grid, &space)?;
        let w = grid.weight();
        let total_density: f64 = (0..grid.len())
            .filter(|&k| grid.in_omega(k))
            .map(|k| density.at_node(k) * w)
            .sum();
        if !(total_density > 0.0) {
            return Err(Error::InvalidParameter(
                "event density integrates to zero over the mission space".into(),
            ));
        }
        Ok(Domain {
            space,
            grid,
            density,
            total_density,
        })
    }

    pub fn uniform(space: MissionSpace, cell: f64) -> Result<Self> {
        Self::new(space, cell, DensitySpec::default())
    }

    /// Quadrature of the density over the whole mission space, obstacles included.
    pub fn total_density(&self) -> f64 {
        self.total_density
    }

    /// Unconstrained detection footprint (`t = 1`) of an agent of class `cls` at `s`.
    pub fn footprint(&self, s: Point, cls: &AgentClass) -> Result<Footprint> {
        let region = self.space.visibility_mask(s, cls.delta, &self.grid)?;
        let probs = region
            .distances
            .iter()
            .map(|&d| cls.p0 * (-cls.lambda * d).exp())
            .collect();
        Ok(Footprint {
            nodes: region.nodes,
            probs,
        })
    }

    /// Coverage of per-node miss probabilities.
    pub fn coverage_from_miss(&self, miss: &[f64]) -> f64 {
        let w = self.grid.weight();
        let mut acc = 0.0;
        for (k, m) in miss.iter().enumerate() {
            if self.grid.in_omega(k) {
                acc += self.density.at_node(k) * (1.0 - m) * w;
            }
        }
        acc
    }
}

/// Grid nodes seen by an agent together with its detection probability there.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Footprint {
    pub nodes: Vec<u32>,
    pub probs: Vec<f64>,
}

impl Footprint {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Multiplies `(1 - t·p)` into the miss array.
    pub fn apply_miss(&self, miss: &mut [f64], t: f64) {
        for (&k, &p) in self.nodes.iter().zip(&self.probs) {
            miss[k as usize] *= 1.0 - t * p;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub coverage: f64,
    pub cost: f64,
    pub total: f64,
}

impl ObjectiveBreakdown {
    pub fn new(coverage: f64, cost: f64) -> Self {
        ObjectiveBreakdown {
            coverage,
            cost,
            total: coverage - cost,
        }
    }
}

/// `1 - Π(1 - p̄_i)` for the given per-agent constrained probabilities.
pub fn joint_detection(pbar: &[f64]) -> f64 {
    1.0 - pbar.iter().fold(1.0, |acc, p| acc * (1.0 - p))
}

/// Footprints of every agent, computed in parallel and returned in agent order.
pub fn team_footprints(domain: &Domain, team: &TeamState) -> Result<Vec<Footprint>> {
    team.check_feasible(&domain.space)?;
    team.positions
        .par_iter()
        .zip(team.classes.par_iter())
        .map(|(s, c)| domain.footprint(*s, c))
        .collect()
}

/// Per-node miss probability `Π(1 - t_i p_i)`, agents folded in index order.
pub fn miss_product(domain: &Domain, footprints: &[Footprint], t: &[f64]) -> Vec<f64> {
    let mut miss = vec![1.0; domain.grid.len()];
    for (fp, &ti) in footprints.iter().zip(t) {
        if ti != 0.0 {
            fp.apply_miss(&mut miss, ti);
        }
    }
    miss
}

/// Coverage, cost and overall objective of a team.
pub fn evaluate_objective(
    domain: &Domain,
    team: &TeamState,
    model: &CostModel,
) -> Result<ObjectiveBreakdown> {
    let fps = team_footprints(domain, team)?;
    Ok(objective_from_footprints(domain, &fps, &team.memberships, model))
}

pub fn objective_from_footprints(
    domain: &Domain,
    footprints: &[Footprint],
    t: &[f64],
    model: &CostModel,
) -> ObjectiveBreakdown {
    let miss = miss_product(domain, footprints, t);
    ObjectiveBreakdown::new(domain.coverage_from_miss(&miss), model.cost(t))
}

/// Coverage of a placement with every agent fully active and no cost.
pub fn set_coverage(domain: &Domain, placement: &[(Point, AgentClass)]) -> Result<f64> {
    let team = TeamState::new(
        placement.iter().map(|(p, _)| *p).collect(),
        vec![1.0; placement.len()],
        placement.iter().map(|(_, c)| c.clone()).collect(),
    )?;
    let fps = team_footprints(domain, &team)?;
    let miss = miss_product(domain, &fps, &team.memberships);
    Ok(domain.coverage_from_miss(&miss))
}

/// Per-node joint detection probability of a team.
pub fn coverage_field(domain: &Domain, team: &TeamState) -> Result<Vec<f64>> {
    let fps = team_footprints(domain, team)?;
    Ok(miss_product(domain, &fps, &team.memberships)
        .into_iter()
        .map(|m| 1.0 - m)
        .collect())
}
