//! Curvature measures and greedy performance bounds.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{set_coverage, Domain, Footprint};
use crate::geometry::Point;
use crate::greedy::{greedy_with_table, CandidateTable, GreedySolution, GroundSet, Roster};
use crate::sensing::AgentClass;

pub const DEFAULT_PARTIAL_BUDGET: u128 = 200_000;

/// `1 - (1 - 1/N)^N`.
pub fn bound_conventional(n: usize) -> f64 {
    assert!(n >= 1, "rank must be at least 1");
    let n = n as f64;
    1.0 - (1.0 - 1.0 / n).powf(n)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurvatureKind {
    Total,
    Partial,
    Greedy,
}

/// Bound implied by a curvature value. Total and partial curvature share
/// `(1/α)[1 - ((N-α)/N)^N]`, extended by continuity to 1 at `α = 0`;
/// greedy curvature gives `1 - α(1 - 1/N)`.
pub fn bound_from_curvature(alpha: f64, n: usize, kind: CurvatureKind) -> f64 {
    assert!(n >= 1, "rank must be at least 1");
    let nf = n as f64;
    match kind {
        CurvatureKind::Greedy => 1.0 - alpha * (1.0 - 1.0 / nf),
        CurvatureKind::Total | CurvatureKind::Partial => {
            if alpha <= 0.0 {
                return 1.0;
            }
            // ((N-α)/N)^N = exp(N ln(1 - α/N))
            -(nf * (-alpha / nf).ln_1p()).exp_m1() / alpha
        }
    }
}

fn ratio_curvature(context_gain: f64, singleton: f64) -> Option<f64> {
    if singleton <= 0.0 {
        None
    } else {
        Some((1.0 - context_gain / singleton).clamp(0.0, 1.0))
    }
}

/// `Σ R p_x Π(1 - p_j)` over the footprint of `x`, where `others` are the
/// footprints folded into the product.
fn gain_with_context(
    domain: &Domain,
    fp: &Footprint,
    others: &[&Footprint],
    scratch: &mut [f64],
) -> f64 {
    for &k in &fp.nodes {
        scratch[k as usize] = 1.0;
    }
    for o in others {
        for (&k, &p) in o.nodes.iter().zip(&o.probs) {
            scratch[k as usize] *= 1.0 - p;
        }
    }
    let w = domain.grid.weight();
    let mut acc = 0.0;
    for (&k, &p) in fp.nodes.iter().zip(&fp.probs) {
        let k = k as usize;
        acc += domain.density.at_node(k) * p * scratch[k];
    }
    acc * w
}

fn singleton_gain(domain: &Domain, fp: &Footprint) -> f64 {
    let w = domain.grid.weight();
    fp.nodes
        .iter()
        .zip(&fp.probs)
        .map(|(&k, &p)| domain.density.at_node(k as usize) * p)
        .sum::<f64>()
        * w
}

/// Total curvature over the ground set. Defined only for single-class rosters.
pub fn total_curvature(domain: &Domain, ground: &GroundSet, roster: &Roster) -> Result<f64> {
    if !roster.is_homogeneous() {
        return Err(Error::HeterogeneousRoster);
    }
    let table = CandidateTable::build(domain, &ground.points, &roster.classes)?;
    total_curvature_with_table(domain, &table)
}

pub fn total_curvature_with_table(domain: &Domain, table: &CandidateTable) -> Result<f64> {
    let fps: Vec<&Footprint> = table.footprints.iter().map(|v| &v[0]).collect();
    let n = fps.len();
    let terms: Vec<Option<f64>> = (0..n)
        .into_par_iter()
        .map_init(
            || vec![1.0; domain.grid.len()],
            |scratch, i| {
                let others: Vec<&Footprint> = (0..n).filter(|&j| j != i).map(|j| fps[j]).collect();
                let ctx = gain_with_context(domain, fps[i], &others, scratch);
                let single = singleton_gain(domain, fps[i]);
                if single <= 0.0 {
                    warn!("ground point {i} has zero singleton gain; skipped");
                }
                ratio_curvature(ctx, single)
            },
        )
        .collect();
    Ok(terms.into_iter().flatten().fold(0.0, f64::max))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartialMode {
    Auto,
    Exact,
    Conservative,
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Number of `ΔH` evaluations exact partial curvature needs (an upper bound
/// for multi-class rosters).
pub fn partial_exact_cost(n: usize, rank: usize, n_classes: usize) -> u128 {
    let subsets = binomial(n - 1, rank - 1) * n as u128;
    subsets.saturating_mul((n_classes as u128).saturating_pow(rank as u32))
}

/// Distinct orderings of a multiset given by per-class counts.
fn multiset_arrangements(counts: &mut [usize], len: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if cur.len() == len {
        out.push(cur.clone());
        return;
    }
    for c in 0..counts.len() {
        if counts[c] > 0 {
            counts[c] -= 1;
            cur.push(c);
            multiset_arrangements(counts, len, cur, out);
            cur.pop();
            counts[c] += 1;
        }
    }
}

fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..k).collect();
    if k > n {
        return;
    }
    loop {
        f(&idx);
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in (i + 1)..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn partial_exact(domain: &Domain, table: &CandidateTable, roster: &Roster) -> f64 {
    let n = table.footprints.len();
    let rank = roster.size();
    let n_cls = roster.classes.len();
    let elements: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n_cls).map(move |c| (i, c))).collect();
    let terms: Vec<Option<f64>> = elements
        .par_iter()
        .map(|&(i, c)| {
            let fp = &table.footprints[i][c];
            let single = singleton_gain(domain, fp);
            if single <= 0.0 {
                warn!("ground point {i} (class {c}) has zero singleton gain; skipped");
                return None;
            }
            // detection probabilities of every other candidate restricted to fp's nodes
            let mut dense = vec![0.0; domain.grid.len()];
            let local: Vec<Vec<Vec<f64>>> = (0..n)
                .map(|j| {
                    (0..n_cls)
                        .map(|cc| {
                            let o = &table.footprints[j][cc];
                            for (&k, &p) in o.nodes.iter().zip(&o.probs) {
                                dense[k as usize] = p;
                            }
                            let v = fp.nodes.iter().map(|&k| dense[k as usize]).collect();
                            for &k in &o.nodes {
                                dense[k as usize] = 0.0;
                            }
                            v
                        })
                        .collect()
                })
                .collect();
            let weights: Vec<f64> = fp
                .nodes
                .iter()
                .zip(&fp.probs)
                .map(|(&k, &p)| domain.density.at_node(k as usize) * p)
                .collect();
            let mut counts = roster.counts.clone();
            counts[c] -= 1;
            let mut arrangements = Vec::new();
            multiset_arrangements(&mut counts, rank - 1, &mut Vec::new(), &mut arrangements);
            let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            let mut worst = f64::INFINITY;
            let mut prod = vec![0.0; fp.len()];
            for_each_combination(others.len(), rank - 1, |combo| {
                for arr in &arrangements {
                    prod.iter_mut().for_each(|v| *v = 1.0);
                    for (slot, &ci) in combo.iter().zip(arr) {
                        let col = &local[others[*slot]][ci];
                        for (v, p) in prod.iter_mut().zip(col) {
                            *v *= 1.0 - p;
                        }
                    }
                    let g: f64 = weights.iter().zip(&prod).map(|(w, v)| w * v).sum::<f64>()
                        * domain.grid.weight();
                    worst = worst.min(g);
                }
            });
            if rank == 1 {
                worst = single;
            }
            ratio_curvature(worst, single)
        })
        .collect();
    terms.into_iter().flatten().fold(0.0, f64::max)
}

fn partial_conservative(domain: &Domain, table: &CandidateTable, roster: &Roster) -> f64 {
    let n = table.footprints.len();
    let rank = roster.size();
    let n_cls = roster.classes.len();
    let keep = rank; // one spare so the point itself can be excluded
    // per node: the `keep` largest class-maximal probabilities, descending
    let mut top: Vec<Vec<(f64, u32)>> = vec![Vec::new(); domain.grid.len()];
    let mut dense = vec![0.0; domain.grid.len()];
    for j in 0..n {
        for c in 0..n_cls {
            let o = &table.footprints[j][c];
            for (&k, &p) in o.nodes.iter().zip(&o.probs) {
                let d = &mut dense[k as usize];
                *d = f64::max(*d, p);
            }
        }
        for c in 0..n_cls {
            for &k in &table.footprints[j][c].nodes {
                let k = k as usize;
                let p = dense[k];
                if p == 0.0 {
                    continue;
                }
                dense[k] = 0.0;
                let list = &mut top[k];
                let pos = list.iter().position(|&(q, _)| p > q).unwrap_or(list.len());
                if pos < keep {
                    list.insert(pos, (p, j as u32));
                    list.truncate(keep);
                }
            }
        }
    }
    let elements: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n_cls).map(move |c| (i, c))).collect();
    let terms: Vec<Option<f64>> = elements
        .par_iter()
        .map(|&(i, c)| {
            let fp = &table.footprints[i][c];
            let single = singleton_gain(domain, fp);
            if single <= 0.0 {
                return None;
            }
            let mut acc = 0.0;
            for (&k, &p) in fp.nodes.iter().zip(&fp.probs) {
                let k = k as usize;
                let phi = top[k]
                    .iter()
                    .filter(|&&(_, j)| j as usize != i)
                    .take(rank - 1)
                    .fold(1.0, |a, &(q, _)| a * (1.0 - q));
                acc += domain.density.at_node(k) * p * phi;
            }
            ratio_curvature(acc * domain.grid.weight(), single)
        })
        .collect();
    terms.into_iter().flatten().fold(0.0, f64::max)
}

/// Partial curvature, exact by enumeration when within `budget`, otherwise
/// (or when asked) a conservative over-estimate from the pointwise worst
/// case. Returns the value and the mode actually used.
pub fn partial_curvature(
    domain: &Domain,
    ground: &GroundSet,
    roster: &Roster,
    mode: PartialMode,
    budget: u128,
) -> Result<(f64, PartialMode)> {
    let table = CandidateTable::build(domain, &ground.points, &roster.classes)?;
    partial_curvature_with_table(domain, &table, roster, mode, budget)
}

pub fn partial_curvature_with_table(
    domain: &Domain,
    table: &CandidateTable,
    roster: &Roster,
    mode: PartialMode,
    budget: u128,
) -> Result<(f64, PartialMode)> {
    let n = table.footprints.len();
    let rank = roster.size();
    if n < rank {
        return Err(Error::GroundSetTooSmall { available: n, rank });
    }
    let needed = partial_exact_cost(n, rank, roster.classes.len());
    let mode = match mode {
        PartialMode::Auto if needed <= budget => PartialMode::Exact,
        PartialMode::Auto => PartialMode::Conservative,
        PartialMode::Exact if needed > budget => {
            return Err(Error::BudgetExceeded { needed, budget })
        }
        m => m,
    };
    let alpha = if rank == 1 {
        0.0
    } else if mode == PartialMode::Exact {
        partial_exact(domain, table, roster)
    } else {
        partial_conservative(domain, table, roster)
    };
    Ok((alpha, mode))
}

/// Greedy curvature from the gains cached during the greedy run.
pub fn greedy_curvature(sol: &GreedySolution) -> Result<f64> {
    let cache = sol.candidate_gains.as_ref().ok_or(Error::MissingGainCache)?;
    let single = sol.singleton_gains.as_ref().ok_or(Error::MissingGainCache)?;
    let mut alpha: f64 = 0.0;
    for step in cache {
        for g in step {
            if let Some(a) = ratio_curvature(g.gain, single[g.point_index][g.class_index]) {
                alpha = alpha.max(a);
            }
        }
    }
    Ok(alpha)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub rank: usize,
    pub alpha_t: Option<f64>,
    pub alpha_p: Option<f64>,
    pub alpha_p_mode: Option<PartialMode>,
    pub alpha_g: Option<f64>,
    pub l_c: f64,
    pub l_t: Option<f64>,
    pub l_p: Option<f64>,
    pub l_g: Option<f64>,
    pub l_overall: f64,
    pub method_notes: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundOptions {
    pub partial_mode: PartialMode,
    pub budget: u128,
    /// Include total curvature when the roster is single-class.
    pub total: bool,
}

impl Default for BoundOptions {
    fn default() -> Self {
        BoundOptions {
            partial_mode: PartialMode::Auto,
            budget: DEFAULT_PARTIAL_BUDGET,
            total: true,
        }
    }
}

pub fn bound_report(
    domain: &Domain,
    ground: &GroundSet,
    roster: &Roster,
    sol: &GreedySolution,
    opts: &BoundOptions,
) -> Result<BoundReport> {
    let table = CandidateTable::build(domain, &ground.points, &roster.classes)?;
    bound_report_with_table(domain, &table, roster, sol, opts)
}

pub fn bound_report_with_table(
    domain: &Domain,
    table: &CandidateTable,
    roster: &Roster,
    sol: &GreedySolution,
    opts: &BoundOptions,
) -> Result<BoundReport> {
    let rank = roster.size();
    let mut notes = Vec::new();
    let l_c = bound_conventional(rank);
    let alpha_t = if roster.is_homogeneous() && opts.total {
        Some(total_curvature_with_table(domain, table)?)
    } else {
        if !roster.is_homogeneous() {
            notes.push("total curvature undefined for a heterogeneous roster".to_string());
        }
        None
    };
    let (alpha_p, mode) =
        partial_curvature_with_table(domain, table, roster, opts.partial_mode, opts.budget)?;
    notes.push(match mode {
        PartialMode::Exact => "partial curvature: exact enumeration".to_string(),
        _ => "partial curvature: conservative pointwise estimate".to_string(),
    });
    let alpha_g = greedy_curvature(sol)?;
    if !roster.is_homogeneous() {
        notes.push(
            "greedy curvature bound reported for a heterogeneous roster; one reading of the \
             source treats it as undefined in this case"
                .to_string(),
        );
    }
    let l_t = alpha_t.map(|a| bound_from_curvature(a, rank, CurvatureKind::Total));
    let l_p = bound_from_curvature(alpha_p, rank, CurvatureKind::Partial);
    let l_g = bound_from_curvature(alpha_g, rank, CurvatureKind::Greedy);
    let l_overall = [Some(l_c), l_t, Some(l_p), Some(l_g)]
        .into_iter()
        .flatten()
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(BoundReport {
        rank,
        alpha_t,
        alpha_p: Some(alpha_p),
        alpha_p_mode: Some(mode),
        alpha_g: Some(alpha_g),
        l_c,
        l_t,
        l_p: Some(l_p),
        l_g: Some(l_g),
        l_overall,
        method_notes: notes,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PostBound {
    pub l2: f64,
    pub greedy2_value: f64,
    pub pga_value: f64,
    pub l_prime: f64,
    pub ground_size: usize,
    pub rank: usize,
    pub bounds: BoundReport,
    pub greedy2: GreedySolution,
}

/// Bound on the coverage of the optimized team relative to the optimum:
/// the ground set is augmented with the optimized positions, greedy is
/// re-run with the selected team only and its overall bound is scaled by
/// the ratio of the optimized coverage to the re-run greedy coverage.
pub fn post_pga_bound(
    domain: &Domain,
    ground: &GroundSet,
    positions: &[Point],
    classes: &[AgentClass],
    opts: &BoundOptions,
) -> Result<PostBound> {
    if positions.is_empty() {
        return Err(Error::EmptyTeam);
    }
    let mut points = ground.points.clone();
    for p in positions {
        if !domain.space.is_feasible(*p) {
            return Err(Error::Infeasible(*p));
        }
        if !points.contains(p) {
            points.push(*p);
        }
    }
    let ground2 = GroundSet {
        points,
        lattice: ground.lattice,
    };
    let roster = Roster::from_agents(classes)?;
    let table = CandidateTable::build(domain, &ground2.points, &roster.classes)?;
    let greedy2 = greedy_with_table(domain, &ground2, &roster, &table)?;
    let opts2 = BoundOptions {
        total: false,
        ..*opts
    };
    let bounds = bound_report_with_table(domain, &table, &roster, &greedy2, &opts2)?;
    let placement: Vec<(Point, AgentClass)> = positions
        .iter()
        .copied()
        .zip(classes.iter().cloned())
        .collect();
    let pga_value = set_coverage(domain, &placement)?;
    let greedy2_value = greedy2.value();
    let l2 = bounds.l_overall;
    Ok(PostBound {
        l2,
        greedy2_value,
        pga_value,
        l_prime: l2 * pga_value / greedy2_value,
        ground_size: ground2.len(),
        rank: roster.size(),
        bounds,
        greedy2,
    })
}
