use thiserror::Error;

use crate::geometry::Point;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mission space: {0}")]
    InvalidSpace(String),

    #[error("point ({x}, {y}) is outside the feasible region", x = .0.x, y = .0.y)]
    Infeasible(Point),

    #[error("agent {index} at ({x}, {y}) is outside the feasible region", x = .point.x, y = .point.y)]
    InfeasibleAgent { index: usize, point: Point },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("ground set has {available} feasible points but rank {rank} was requested")]
    GroundSetTooSmall { available: usize, rank: usize },

    #[error("total curvature is undefined for heterogeneous rosters")]
    HeterogeneousRoster,

    #[error("greedy solution carries no candidate-gain cache")]
    MissingGainCache,

    #[error("enumeration needs {needed} evaluations, budget is {budget}; shrink the ground set or the rank")]
    BudgetExceeded { needed: u128, budget: u128 },

    #[error("post-PGA bound needs at least one selected agent")]
    EmptyTeam,

    #[error("oracle comparison requires an obstacle-free mission space ({0} obstacles found)")]
    ObstaclesPresent(usize),

    #[error("scenario {path}: {source}")]
    Scenario {
        path: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
