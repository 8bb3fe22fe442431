//! Exact temporal distances on enumerable MDPs and the Lipschitz checks built on them.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::env::{Mdp, PointMass, State};
use crate::error::{Error, Result};
use crate::objective::ReprFn;

/// Marks an unreachable pair.
pub const UNREACHABLE: u32 = u32::MAX;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TemporalDistanceMatrix {
    n: usize,
    dist: Vec<u32>,
    pub mdp_id: String,
}

impl TemporalDistanceMatrix {
    pub fn num_states(&self) -> usize {
        self.n
    }

    /// `None` when `v` is unreachable from `u`.
    pub fn get(&self, u: usize, v: usize) -> Option<u32> {
        let d = self.dist[u * self.n + v];
        (d != UNREACHABLE).then_some(d)
    }

    pub fn raw(&self, u: usize, v: usize) -> u32 {
        self.dist[u * self.n + v]
    }

    /// `min(d(u, v), d(v, u))`, the bound a symmetric embedding can respect.
    pub fn symmetric(&self, u: usize, v: usize) -> Option<u32> {
        match (self.get(u, v), self.get(v, u)) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|u| (0..u).all(|v| self.raw(u, v) == self.raw(v, u)))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for u in 0..self.n {
            for v in 0..self.n {
                if v > 0 {
                    out.push(',');
                }
                match self.get(u, v) {
                    Some(d) => write!(out, "{d}").unwrap(),
                    None => out.push_str("inf"),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

fn bfs(succ: &[Vec<usize>], source: usize, row: &mut [u32]) {
    row.fill(UNREACHABLE);
    row[source] = 0;
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        let d = row[u] + 1;
        for &v in &succ[u] {
            if row[v] == UNREACHABLE {
                row[v] = d;
                queue.push_back(v);
            }
        }
    }
}

/// BFS from every state over the directed transition graph.
pub fn all_pairs_temporal_distance(mdp: &Mdp) -> Result<TemporalDistanceMatrix> {
    let g = mdp.as_grid().ok_or(Error::NotEnumerable)?;
    let n = g.num_states();
    let succ: Vec<Vec<usize>> = (0..n).map(|s| g.successors(s)).collect();
    let mut dist = vec![UNREACHABLE; n * n];
    let workers = crate::worker_count().min(n).max(1);
    let rows_per = n.div_ceil(workers);
    std::thread::scope(|scope| {
        for (chunk_idx, chunk) in dist.chunks_mut(rows_per * n).enumerate() {
            let succ = &succ;
            scope.spawn(move || {
                for (i, row) in chunk.chunks_mut(n).enumerate() {
                    bfs(succ, chunk_idx * rows_per + i, row);
                }
            });
        }
    });
    Ok(TemporalDistanceMatrix {
        n,
        dist,
        mdp_id: mdp.id.clone(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub u: usize,
    pub v: usize,
    pub excess: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LipschitzReport {
    /// Largest positive excess over the bound, 0 if none.
    pub max_violation: f64,
    pub violating_pairs: Vec<Violation>,
    pub pairs_checked: usize,
}

impl LipschitzReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_violation <= tolerance
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    crate::objective::sq_dist(a, b).sqrt()
}

/// Representation outputs for every state of an enumerable MDP.
pub fn embed_states(phi: &ReprFn, mdp: &Mdp) -> Result<Vec<Vec<f64>>> {
    let n = mdp.num_states().ok_or(Error::NotEnumerable)?;
    (0..n).map(|s| phi.embed(&mdp.observe(&State::Cell(s)))).collect()
}

fn report<I: Iterator<Item = (usize, usize, f64)>>(pairs: I) -> LipschitzReport {
    let mut max_violation = 0.0f64;
    let mut violating_pairs = Vec::new();
    let mut pairs_checked = 0;
    for (u, v, excess) in pairs {
        pairs_checked += 1;
        if excess > 0.0 {
            max_violation = max_violation.max(excess);
            violating_pairs.push(Violation { u, v, excess });
        }
    }
    LipschitzReport {
        max_violation,
        violating_pairs,
        pairs_checked,
    }
}

/// `|phi(u) - phi(v)| - min(d(u, v), d(v, u))` over all pairs with a finite bound.
pub fn lipschitz_global_from_embeddings(
    emb: &[Vec<f64>],
    dist: &TemporalDistanceMatrix,
) -> Result<LipschitzReport> {
    if emb.len() != dist.num_states() {
        return Err(Error::DimensionMismatch {
            expected: dist.num_states(),
            got: emb.len(),
            context: "embeddings vs distance matrix",
        });
    }
    let n = emb.len();
    Ok(report((0..n).flat_map(|u| {
        (u + 1..n).filter_map(move |v| {
            dist.symmetric(u, v)
                .map(|d| (u, v, euclid(&emb[u], &emb[v]) - d as f64))
        })
    })))
}

/// `|phi(s) - phi(s')| - 1` over adjacent pairs.
pub fn lipschitz_adjacent_from_embeddings(emb: &[Vec<f64>], mdp: &Mdp) -> Result<LipschitzReport> {
    let adj = mdp.adjacency()?;
    if Some(emb.len()) != mdp.num_states() {
        return Err(Error::DimensionMismatch {
            expected: mdp.num_states().unwrap_or(0),
            got: emb.len(),
            context: "embeddings vs states",
        });
    }
    Ok(report(
        adj.into_iter()
            .filter(|(u, v)| u != v)
            .map(|(u, v)| (u, v, euclid(&emb[u], &emb[v]) - 1.0)),
    ))
}

pub fn check_lipschitz_global(
    phi: &ReprFn,
    dist: &TemporalDistanceMatrix,
    mdp: &Mdp,
) -> Result<LipschitzReport> {
    lipschitz_global_from_embeddings(&embed_states(phi, mdp)?, dist)
}

pub fn check_lipschitz_adjacent(phi: &ReprFn, mdp: &Mdp) -> Result<LipschitzReport> {
    lipschitz_adjacent_from_embeddings(&embed_states(phi, mdp)?, mdp)
}

/// Whether the adjacent excess `delta` bounds every pair by `delta * d`, and
/// whether a globally satisfied constraint is satisfied on adjacent pairs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ImplicationReport {
    pub adjacent_violation: f64,
    pub global_violation: f64,
    /// Largest `excess - delta * d` over finite pairs; at most rounding noise when the bound holds.
    pub worst_margin: f64,
    pub pairs_checked: usize,
    pub implied_bound_holds: bool,
    pub converse_holds: bool,
}

pub fn check_implication(emb: &[Vec<f64>], dist: &TemporalDistanceMatrix, mdp: &Mdp) -> Result<ImplicationReport> {
    let adjacent = lipschitz_adjacent_from_embeddings(emb, mdp)?;
    let global = lipschitz_global_from_embeddings(emb, dist)?;
    let delta = adjacent.max_violation;
    let n = emb.len();
    let mut worst_margin = f64::NEG_INFINITY;
    let mut holds = true;
    for u in 0..n {
        for v in u + 1..n {
            if let Some(d) = dist.symmetric(u, v) {
                let d = d as f64;
                let margin = euclid(&emb[u], &emb[v]) - d - delta * d;
                worst_margin = worst_margin.max(margin);
                holds &= margin <= 1e-12 * (1.0 + d);
            }
        }
    }
    Ok(ImplicationReport {
        adjacent_violation: delta,
        global_violation: global.max_violation,
        worst_margin: if global.pairs_checked == 0 { 0.0 } else { worst_margin },
        pairs_checked: global.pairs_checked,
        implied_bound_holds: holds,
        converse_holds: global.max_violation > 0.0 || adjacent.max_violation == 0.0,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub max_abs_error: f64,
    pub pairs_checked: usize,
}

/// Steps a straight-line controller needs to go from `u` to `v` inside the ellipse.
pub fn straight_line_steps(pm: &PointMass, u: &[f64], v: &[f64]) -> Result<usize> {
    let mut x = u.to_vec();
    let limit = (euclid(u, v) / pm.step_size()).ceil() as usize + 2;
    for steps in 0..=limit {
        let gap = euclid(&x, v);
        if gap <= 1e-9 * (1.0 + euclid(u, v)) {
            return Ok(steps);
        }
        let a: Vec<f64> = v.iter().zip(&x).map(|(b, a)| (b - a) / pm.step_size()).collect();
        x = pm.step(&x, &a)?;
    }
    Err(Error::InvalidArgument("straight-line controller did not reach target".into()))
}

/// Largest `|d_temp(u, v) - |psi(u) - psi(v)||` over all pairs of an
/// enumerable MDP, or over up to `max_pairs` seeded lattice pairs of a point mass.
pub fn check_consistent_embedding<F>(
    mdp: &Mdp,
    psi: F,
    max_pairs: usize,
    seed: u64,
) -> Result<ConsistencyReport>
where
    F: Fn(&State) -> Vec<f64>,
{
    let mut max_abs_error = 0.0f64;
    let mut pairs_checked = 0;
    if mdp.is_enumerable() {
        let dist = all_pairs_temporal_distance(mdp)?;
        let n = dist.num_states();
        let emb: Vec<Vec<f64>> = (0..n).map(|s| psi(&State::Cell(s))).collect();
        for u in 0..n {
            for v in u + 1..n {
                if let Some(d) = dist.symmetric(u, v) {
                    max_abs_error = max_abs_error.max((d as f64 - euclid(&emb[u], &emb[v])).abs());
                    pairs_checked += 1;
                }
            }
        }
    } else {
        let pm = mdp.as_point_mass().ok_or(Error::NotEnumerable)?;
        let lattice = pm.lattice();
        if lattice.len() < 2 {
            return Err(Error::InvalidEnv("lattice has fewer than two points".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..max_pairs {
            let i = rng.random_range(0..lattice.len());
            let j = rng.random_range(0..lattice.len());
            let (u, v) = (&lattice[i], &lattice[j]);
            let d = straight_line_steps(pm, u, v)?;
            let e = euclid(&psi(&State::Point(u.clone())), &psi(&State::Point(v.clone())));
            max_abs_error = max_abs_error.max((d as f64 - e).abs());
            pairs_checked += 1;
        }
    }
    Ok(ConsistencyReport {
        max_abs_error,
        pairs_checked,
    })
}
