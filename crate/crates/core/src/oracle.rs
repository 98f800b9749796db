//! Brute-force references: the exact set optimum over a ground set, and the
//! enumerate-every-team baseline with position-only ascent per team.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Domain;
use crate::geometry::{MissionSpace, Point};
use crate::greedy::{CandidateTable, GroundSet, Roster};
use crate::pga::{pga_run, PgaConfig};
use crate::sensing::{normalization_beta, AgentClass, CostModel, TeamState};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleBudget {
    pub max_subsets: u64,
    pub restarts: usize,
}

impl Default for OracleBudget {
    fn default() -> Self {
        OracleBudget {
            max_subsets: 200_000,
            restarts: 5,
        }
    }
}

impl OracleBudget {
    pub fn validate(&self) -> Result<()> {
        if self.max_subsets == 0 || self.restarts == 0 {
            return Err(Error::InvalidParameter(
                "oracle budget and restart count must be positive".into(),
            ));
        }
        Ok(())
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

fn multinomial(counts: &[usize]) -> u128 {
    let mut left: usize = counts.iter().sum();
    let mut acc = 1u128;
    for &c in counts {
        acc *= binomial(left, c);
        left -= c;
    }
    acc
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetOptimum {
    /// Ground-point indices, ascending.
    pub points: Vec<usize>,
    /// Roster class index assigned to each point.
    pub classes: Vec<usize>,
    pub value: f64,
    pub evaluated: u64,
}

/// Exact maximizer of coverage over every placement of the roster on distinct
/// ground points (and every class-to-point assignment).
pub fn exhaustive_set_optimum(
    domain: &Domain,
    ground: &GroundSet,
    roster: &Roster,
    budget: &OracleBudget,
) -> Result<SetOptimum> {
    let n = ground.len();
    let rank = roster.size();
    if n < rank {
        return Err(Error::GroundSetTooSmall { available: n, rank });
    }
    let needed = binomial(n, rank) * multinomial(&roster.counts);
    if needed > budget.max_subsets as u128 {
        return Err(Error::BudgetExceeded {
            needed,
            budget: budget.max_subsets as u128,
        });
    }
    let table = CandidateTable::build(domain, &ground.points, &roster.classes)?;
    let mut arrangements = Vec::new();
    arrange(&mut roster.counts.clone(), rank, &mut Vec::new(), &mut arrangements);

    let mut best = SetOptimum {
        points: Vec::new(),
        classes: Vec::new(),
        value: f64::NEG_INFINITY,
        evaluated: 0,
    };
    let mut idx: Vec<usize> = (0..rank).collect();
    let mut miss = vec![1.0; domain.grid.len()];
    loop {
        for arr in &arrangements {
            miss.iter_mut().for_each(|m| *m = 1.0);
            for (&j, &c) in idx.iter().zip(arr) {
                table.footprints[j][c].apply_miss(&mut miss, 1.0);
            }
            let v = domain.coverage_from_miss(&miss);
            best.evaluated += 1;
            if v > best.value {
                best.value = v;
                best.points = idx.clone();
                best.classes = arr.clone();
            }
        }
        // next combination in lexicographic order
        let mut i = rank;
        let advanced = loop {
            if i == 0 {
                break false;
            }
            i -= 1;
            if idx[i] != i + n - rank {
                idx[i] += 1;
                for j in (i + 1)..rank {
                    idx[j] = idx[j - 1] + 1;
                }
                break true;
            }
        };
        if !advanced {
            break;
        }
    }
    Ok(best)
}

fn arrange(counts: &mut [usize], len: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if cur.len() == len {
        out.push(cur.clone());
        return;
    }
    for c in 0..counts.len() {
        if counts[c] > 0 {
            counts[c] -= 1;
            cur.push(c);
            arrange(counts, len, cur, out);
            cur.pop();
            counts[c] += 1;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    /// Uniform samples over the feasible region, several restarts per team.
    Random,
    /// The `ℓ`-th agent starts at `(5 + 5ℓ, 5 + 5ℓ)` from the lower-left corner.
    Corner,
}

/// Uniform sample of the feasible region by rejection from the bounding box.
pub fn sample_feasible(space: &MissionSpace, rng: &mut impl Rng) -> Point {
    let bb = space.bbox();
    loop {
        let p = Point::new(
            rng.gen_range(bb.min.x..=bb.max.x),
            rng.gen_range(bb.min.y..=bb.max.y),
        );
        if space.is_feasible(p) {
            return p;
        }
    }
}

pub fn corner_init(space: &MissionSpace, n: usize) -> Vec<Point> {
    let o = space.bbox().min;
    (1..=n)
        .map(|l| {
            let d = 5.0 + 5.0 * l as f64;
            space.project_to_feasible(Point::new(o.x + d, o.y + d))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositionResult {
    /// Agents taken from each roster class.
    pub counts: Vec<usize>,
    /// Bit `a` set when agent `a` (roster order) is in the team.
    pub bitmask: u64,
    pub coverage: f64,
    pub positions: Vec<Point>,
    pub iterations: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub mode: InitMode,
    pub seed: u64,
    pub restarts: usize,
    pub roster: Roster,
    pub total_density: f64,
    pub compositions: Vec<CompositionResult>,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineChoice {
    pub w1: f64,
    pub index: usize,
    pub coverage: f64,
    pub cost: f64,
    pub total: f64,
}

impl BaselineReport {
    fn sum_gamma(&self) -> f64 {
        self.roster
            .classes
            .iter()
            .zip(&self.roster.counts)
            .map(|(c, &n)| c.gamma() * n as f64)
            .sum()
    }

    /// Cost of composition `index` under weight `w1`, with the normalization
    /// taken over the full roster.
    pub fn cost(&self, index: usize, w1: f64) -> Result<f64> {
        let beta = normalization_beta(w1, self.total_density, self.sum_gamma())?;
        let comp = &self.compositions[index];
        Ok(beta
            * self
                .roster
                .classes
                .iter()
                .zip(&comp.counts)
                .map(|(c, &m)| c.gamma() * m as f64)
                .sum::<f64>())
    }

    /// Composition with the largest overall objective under `w1`; ties keep
    /// the earliest composition.
    pub fn best(&self, w1: f64) -> Result<BaselineChoice> {
        let mut best: Option<BaselineChoice> = None;
        for (index, comp) in self.compositions.iter().enumerate() {
            let cost = self.cost(index, w1)?;
            let total = comp.coverage - cost;
            if best.as_ref().map_or(true, |b| total > b.total) {
                best = Some(BaselineChoice {
                    w1,
                    index,
                    coverage: comp.coverage,
                    cost,
                    total,
                });
            }
        }
        best.ok_or_else(|| Error::InvalidParameter("baseline has no compositions".into()))
    }
}

/// Every nonempty team composition of the roster, in lexicographic order of
/// per-class counts.
pub fn compositions(roster: &Roster) -> Vec<Vec<usize>> {
    let k = roster.counts.len();
    let mut out = Vec::new();
    let mut cur = vec![0usize; k];
    loop {
        if cur.iter().any(|&m| m > 0) {
            out.push(cur.clone());
        }
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] < roster.counts[i] {
                cur[i] += 1;
                for c in cur.iter_mut().skip(i + 1) {
                    *c = 0;
                }
                break;
            }
        }
    }
}

fn team_of(roster: &Roster, counts: &[usize]) -> (Vec<AgentClass>, u64) {
    let mut classes = Vec::new();
    let mut mask = 0u64;
    let mut offset = 0;
    for (c, (&m, &total)) in counts.iter().zip(&roster.counts).enumerate() {
        for a in 0..m {
            classes.push(roster.classes[c].clone());
            mask |= 1u64 << (offset + a);
        }
        offset += total;
    }
    (classes, mask)
}

/// Runs position-only ascent for every nonempty team composition and records
/// the best coverage each reaches. Costs are applied afterwards per `w1`.
pub fn exhaustive_team_baseline(
    domain: &Domain,
    roster: &Roster,
    budget: &OracleBudget,
    mode: InitMode,
    seed: u64,
    pga: &PgaConfig,
) -> Result<BaselineReport> {
    let comps = compositions(roster);
    if comps.len() as u64 > budget.max_subsets {
        return Err(Error::BudgetExceeded {
            needed: comps.len() as u128,
            budget: budget.max_subsets as u128,
        });
    }
    let cfg = PgaConfig {
        optimize_t: false,
        ..pga.clone()
    };
    let restarts = match mode {
        InitMode::Random => budget.restarts,
        InitMode::Corner => 1,
    };
    let start = Instant::now();
    let results = comps
        .par_iter()
        .enumerate()
        .map(|(ci, counts)| {
            let t0 = Instant::now();
            let (classes, bitmask) = team_of(roster, counts);
            let model = CostModel::for_classes(1.0, domain.total_density(), &classes)?;
            let mut best: Option<(f64, Vec<Point>)> = None;
            let mut iterations = 0;
            for r in 0..restarts {
                let init = match mode {
                    InitMode::Corner => corner_init(&domain.space, classes.len()),
                    InitMode::Random => {
                        let mut rng = ChaCha8Rng::seed_from_u64(
                            seed ^ ((ci as u64) << 32) ^ (r as u64).wrapping_mul(0x9E37_79B9),
                        );
                        (0..classes.len())
                            .map(|_| sample_feasible(&domain.space, &mut rng))
                            .collect()
                    }
                };
                let team = TeamState::new(init, vec![1.0; classes.len()], classes.clone())?;
                let (fin, trace) = pga_run(domain, &team, &model, &cfg)?;
                iterations += trace.iterations;
                let cov = trace.final_objective().map_or(0.0, |o| o.coverage);
                if best.as_ref().map_or(true, |b| cov > b.0) {
                    best = Some((cov, fin.positions));
                }
            }
            let (coverage, positions) = best.expect("at least one restart");
            Ok(CompositionResult {
                counts: counts.clone(),
                bitmask,
                coverage,
                positions,
                iterations,
                seconds: t0.elapsed().as_secs_f64(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BaselineReport {
        mode,
        seed,
        restarts,
        roster: roster.clone(),
        total_density: domain.total_density(),
        compositions: results,
        seconds: start.elapsed().as_secs_f64(),
    })
}
