//! Coverage metrics, latent-trajectory exports and encoding-invariance runs.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{rollout, Controller, Dynamics, Mdp, State, Trajectory, UniformRandom};
use crate::error::{Error, Result};
use crate::objective::{ReprFn, Skill};

/// Integer bin coordinates of a state.
pub type Bin = Vec<i64>;

/// Grid cells are their own bins; point-mass bins are `step_size` wide.
pub fn state_bin(mdp: &Mdp, state: &State) -> Bin {
    match (&mdp.dynamics, state) {
        (Dynamics::Grid(g), State::Cell(s)) => {
            let (x, y) = g.cell(*s);
            vec![x as i64, y as i64]
        }
        (Dynamics::PointMass(p), State::Point(x)) => {
            x.iter().map(|v| (v / p.step_size()).floor() as i64).collect()
        }
        (_, State::Cell(s)) => vec![*s as i64],
        (_, State::Point(x)) => x.iter().map(|v| v.floor() as i64).collect(),
    }
}

pub fn trajectory_bins(mdp: &Mdp, traj: &Trajectory) -> BTreeSet<Bin> {
    traj.states.iter().map(|s| state_bin(mdp, s)).collect()
}

/// Union of bins over a whole log.
pub fn total_coverage(log: &[BTreeSet<Bin>]) -> usize {
    log.iter().flatten().collect::<BTreeSet<_>>().len()
}

/// Union of bins over the most recent `window` trajectories.
pub fn queue_coverage(log: &[BTreeSet<Bin>], window: usize) -> usize {
    let start = log.len().saturating_sub(window);
    total_coverage(&log[start..])
}

/// Running total and windowed coverage over training trajectories.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageTracker {
    pub window: usize,
    pub total: BTreeSet<Bin>,
    pub queue: VecDeque<BTreeSet<Bin>>,
}

impl CoverageTracker {
    pub fn new(window: usize) -> Self {
        CoverageTracker {
            window: window.max(1),
            total: BTreeSet::new(),
            queue: VecDeque::new(),
        }
    }

    pub fn record(&mut self, bins: BTreeSet<Bin>) {
        self.total.extend(bins.iter().cloned());
        self.queue.push_back(bins);
        while self.queue.len() > self.window {
            self.queue.pop_front();
        }
    }

    pub fn total(&self) -> usize {
        self.total.len()
    }

    pub fn queue(&self) -> usize {
        self.queue.iter().flatten().collect::<BTreeSet<_>>().len()
    }
}

/// Bins visited by greedy rollouts of every skill, starting state included.
pub fn policy_coverage_bins(mdp: &Mdp, controller: &dyn Controller, skills: &[Skill]) -> Result<BTreeSet<Bin>> {
    // Greedy controllers ignore the generator.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut bins = BTreeSet::new();
    for skill in skills {
        let t = rollout(mdp, controller, skill, false, &mut rng)?;
        bins.extend(trajectory_bins(mdp, &t));
    }
    Ok(bins)
}

pub fn policy_coverage(mdp: &Mdp, controller: &dyn Controller, skills: &[Skill]) -> Result<usize> {
    Ok(policy_coverage_bins(mdp, controller, skills)?.len())
}

/// Monte-Carlo mean of the bins covered by `episodes` uniform-random episodes, over `trials` repetitions.
pub fn random_policy_coverage(mdp: &Mdp, episodes: usize, trials: usize, seed: u64) -> Result<f64> {
    if trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    let controller = UniformRandom(mdp.action_space());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let skill = Skill {
        z: Vec::new(),
        kind: crate::objective::SkillKind::Continuous,
        index: None,
    };
    let mut sum = 0usize;
    for _ in 0..trials {
        let mut bins = BTreeSet::new();
        for _ in 0..episodes {
            let t = rollout(mdp, &controller, &skill, true, &mut rng)?;
            bins.extend(trajectory_bins(mdp, &t));
        }
        sum += bins.len();
    }
    Ok(sum as f64 / trials as f64)
}

/// Number of configured landmark cells whose bin appears in `bins`.
pub fn landmark_coverage(landmarks: &[[usize; 2]], bins: &BTreeSet<Bin>) -> usize {
    landmarks
        .iter()
        .filter(|[x, y]| bins.contains(&vec![*x as i64, *y as i64]))
        .count()
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatentRow {
    pub trajectory: usize,
    pub skill_id: usize,
    pub t: usize,
    pub phi: Vec<f64>,
}

/// One row per visited state (length + 1 per trajectory).
pub fn export_latent_trajectories(mdp: &Mdp, phi: &ReprFn, trajectories: &[Trajectory]) -> Result<Vec<LatentRow>> {
    let mut rows = Vec::new();
    for (k, traj) in trajectories.iter().enumerate() {
        for (t, s) in traj.states.iter().enumerate() {
            rows.push(LatentRow {
                trajectory: k,
                skill_id: traj.skill.index.unwrap_or(k),
                t,
                phi: phi.embed(&mdp.observe(s))?,
            });
        }
    }
    Ok(rows)
}

/// Columns `trajectory,skill_id,t,phi_0..phi_{D-1}` with six decimals.
pub fn latent_csv(rows: &[LatentRow]) -> String {
    let d = rows.first().map_or(0, |r| r.phi.len());
    let mut out = String::from("trajectory,skill_id,t");
    for i in 0..d {
        let _ = write!(out, ",phi_{i}");
    }
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{},{},{}", r.trajectory, r.skill_id, r.t);
        for v in &r.phi {
            let _ = write!(out, ",{v:.6}");
        }
        out.push('\n');
    }
    out
}

/// Skills shared by the evaluation rollouts of a run.
pub fn evaluation_skills(prior: &crate::objective::SkillPrior, n: usize, rng: &mut dyn RngCore) -> Vec<Skill> {
    (0..n).map(|_| prior.sample(rng)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InvariancePair {
    pub seed: u64,
    pub baseline_coverage: usize,
    pub variant_coverage: usize,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InvarianceReport {
    pub pairs: Vec<InvariancePair>,
    pub min_ratio: f64,
    pub max_ratio: f64,
}

impl InvarianceReport {
    pub fn from_pairs(pairs: Vec<InvariancePair>) -> Self {
        let min_ratio = pairs.iter().map(|p| p.ratio).fold(f64::INFINITY, f64::min);
        let max_ratio = pairs.iter().map(|p| p.ratio).fold(f64::NEG_INFINITY, f64::max);
        InvarianceReport {
            pairs,
            min_ratio,
            max_ratio,
        }
    }

    pub fn within(&self, lo: f64, hi: f64) -> bool {
        !self.pairs.is_empty() && self.min_ratio >= lo && self.max_ratio <= hi
    }
}

/// Trains `config` once per seed under its own encoding and under `encoding`,
/// and reports final policy coverage of the second relative to the first.
pub fn representation_invariance_report(
    config: &crate::config::TrainConfig,
    encoding: crate::env::EncodingSpec,
    seeds: &[u64],
) -> Result<InvarianceReport> {
    let mut pairs = Vec::new();
    for &seed in seeds {
        let mut base = config.clone();
        base.train.seed = seed;
        let mut other = base.clone();
        match &mut other.env {
            crate::config::EnvSpec::Grid { encoding: e, .. } | crate::config::EnvSpec::PointMass { encoding: e, .. } => {
                *e = encoding.clone()
            }
        }
        other.env.build()?;
        let a = crate::trainer::train(&base)?.final_policy_coverage()?;
        let b = crate::trainer::train(&other)?.final_policy_coverage()?;
        pairs.push(InvariancePair {
            seed,
            baseline_coverage: a,
            variant_coverage: b,
            ratio: b as f64 / a.max(1) as f64,
        });
    }
    Ok(InvarianceReport::from_pairs(pairs))
}
