//! Scenario files: mission space, density, discretization, roster, weights
//! and solver settings.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{DensitySpec, Domain};
use crate::geometry::{MissionSpace, Point};
use crate::greedy::{build_ground_set, GroundSet, Roster};
use crate::oracle::OracleBudget;
use crate::pga::PgaConfig;
use crate::sensing::{AgentClass, CostModel};

pub const MAX_ROSTER: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceSpec {
    pub outer: Vec<Point>,
    #[serde(default)]
    pub obstacles: Vec<Vec<Point>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub cell: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { cell: 10.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundSpec {
    pub lattice: usize,
}

impl Default for GroundSpec {
    fn default() -> Self {
        GroundSpec { lattice: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RosterEntry {
    #[serde(flatten)]
    pub class: AgentClass,
    pub count: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub w1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub space: SpaceSpec,
    #[serde(default)]
    pub density: DensitySpec,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub ground: GroundSpec,
    pub roster: Vec<RosterEntry>,
    pub weights: Weights,
    #[serde(default)]
    pub pga: PgaConfig,
    #[serde(default)]
    pub oracle: OracleBudget,
    #[serde(default)]
    pub seed: u64,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let sc: Scenario = serde_json::from_str(text)?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let wrap = |e: Error| Error::Scenario {
            path: path.display().to_string(),
            source: Box::new(e),
        };
        let text = std::fs::read_to_string(path).map_err(|e| wrap(e.into()))?;
        Scenario::from_json(&text).map_err(wrap)
    }

    pub fn validate(&self) -> Result<()> {
        self.mission_space()?;
        let roster = self.roster()?;
        if roster.size() > MAX_ROSTER {
            return Err(Error::InvalidParameter(format!(
                "roster has {} agents, at most {MAX_ROSTER} are supported",
                roster.size()
            )));
        }
        if !(self.weights.w1 > 0.0 && self.weights.w1 <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "w1 must lie in (0, 1], got {}",
                self.weights.w1
            )));
        }
        if !(self.grid.cell > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "grid cell must be positive, got {}",
                self.grid.cell
            )));
        }
        if self.ground.lattice < 2 {
            return Err(Error::InvalidParameter(format!(
                "ground lattice must be at least 2, got {}",
                self.ground.lattice
            )));
        }
        self.pga.validate()?;
        self.oracle.validate()?;
        Ok(())
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| "scenario".to_string())
    }

    pub fn mission_space(&self) -> Result<MissionSpace> {
        MissionSpace::new(self.space.outer.clone(), self.space.obstacles.clone())
    }

    pub fn domain(&self) -> Result<Domain> {
        Domain::new(self.mission_space()?, self.grid.cell, self.density.clone())
    }

    pub fn roster(&self) -> Result<Roster> {
        Roster::new(
            self.roster
                .iter()
                .map(|e| (e.class.clone(), e.count))
                .collect(),
        )
    }

    pub fn ground_set(&self, domain: &Domain) -> Result<GroundSet> {
        build_ground_set(&domain.space, self.ground.lattice, self.roster()?.size())
    }

    /// Cost model over the full roster, agents in roster order.
    pub fn cost_model(&self, domain: &Domain) -> Result<CostModel> {
        CostModel::for_classes(self.weights.w1, domain.total_density(), &self.roster()?.agents())
    }
}

/// Shipped scenario files, keyed by name.
pub fn builtin(name: &str) -> Option<&'static str> {
    match name {
        "blank" => Some(include_str!("../scenarios/blank.json")),
        "general" => Some(include_str!("../scenarios/general.json")),
        "room" => Some(include_str!("../scenarios/room.json")),
        "maze" => Some(include_str!("../scenarios/maze.json")),
        "narrow" => Some(include_str!("../scenarios/narrow.json")),
        "mixed" => Some(include_str!("../scenarios/mixed.json")),
        _ => None,
    }
}

pub const BUILTIN_NAMES: [&str; 6] = ["blank", "general", "room", "maze", "narrow", "mixed"];

/// The four obstacle scenarios.
pub const OBSTACLE_SCENARIOS: [&str; 4] = ["general", "room", "maze", "narrow"];

pub fn load_builtin(name: &str) -> Result<Scenario> {
    let text = builtin(name)
        .ok_or_else(|| Error::InvalidParameter(format!("no shipped scenario named {name}")))?;
    Scenario::from_json(text)
}
