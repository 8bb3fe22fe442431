//! The training loop: per epoch, collect skill-conditioned episodes, then
//! interleave representation, multiplier and SAC updates on replayed batches.

use std::fmt::Write as _;
use std::path::PathBuf;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::env::{rollout, Action, Controller, Mdp, State, Trajectory, UniformRandom};
use crate::error::{Error, Result};
use crate::eval::{evaluation_skills, landmark_coverage, policy_coverage_bins, trajectory_bins, CoverageTracker};
use crate::nn::{AdamConfig, AdamState, Mlp};
use crate::objective::{
    argmax, batch_rewards, dot, intrinsic_reward, prior_sample_matrix, representation_loss, LagrangeState, ReprFn,
    Skill, SkillKind, SkillPrior,
};
use crate::policy::{ReplayBuffer, Sac, TransitionBatch};
use crate::temporal::TemporalDistanceMatrix;

const TAG_INIT: u64 = 1;
const TAG_UPDATES: u64 = 2;
const TAG_EPISODE: u64 = 3;
const TAG_EVAL: u64 = 4;

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Independent generator for `(seed, tag, a, b)`.
pub fn derive_rng(seed: u64, tag: u64, a: u64, b: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(splitmix(tag ^ splitmix(a ^ splitmix(b))));
    rng
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub grad_steps: u64,
    pub phi_updates: u64,
    pub lambda_updates: u64,
    pub sac_updates: u64,
}

/// One JSONL row per epoch.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub seed: u64,
    pub phi_loss: f64,
    pub phi_objective: f64,
    pub mean_slack: f64,
    pub violation_rate: f64,
    pub lambda: f64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha: f64,
    pub entropy: f64,
    pub mean_reward: f64,
    pub buffer_len: usize,
    pub total_coverage: usize,
    pub queue_coverage: usize,
    pub policy_coverage: Option<usize>,
    pub landmark_coverage: Option<usize>,
    /// Largest `|sum_t r_t - (phi(s_T) - phi(s_0))^T z|` over this epoch's episodes.
    pub telescoping_error: f64,
}

impl EpochMetrics {
    /// Fixed key order; reals printed with nine decimals, telescoping error in scientific form.
    pub fn to_json_line(&self) -> String {
        let mut s = String::new();
        let opt = |v: Option<usize>| v.map_or("null".to_string(), |x| x.to_string());
        let _ = write!(
            s,
            "{{\"epoch\":{},\"seed\":{},\"phi_loss\":{:.9},\"phi_objective\":{:.9},\"mean_slack\":{:.9},\
\"violation_rate\":{:.9},\"lambda\":{:.9},\"critic_loss\":{:.9},\"actor_loss\":{:.9},\"alpha\":{:.9},\
\"entropy\":{:.9},\"mean_reward\":{:.9},\"buffer_len\":{},\"total_coverage\":{},\"queue_coverage\":{},\
\"policy_coverage\":{},\"landmark_coverage\":{},\"telescoping_error\":{:.3e}}}",
            self.epoch,
            self.seed,
            self.phi_loss,
            self.phi_objective,
            self.mean_slack,
            self.violation_rate,
            self.lambda,
            self.critic_loss,
            self.actor_loss,
            self.alpha,
            self.entropy,
            self.mean_reward,
            self.buffer_len,
            self.total_coverage,
            self.queue_coverage,
            opt(self.policy_coverage),
            opt(self.landmark_coverage),
            self.telescoping_error,
        );
        s
    }
}

pub fn metrics_jsonl(rows: &[EpochMetrics]) -> String {
    rows.iter().map(|r| r.to_json_line() + "\n").collect()
}

/// Everything needed to continue a run.
#[derive(Clone, Debug)]
pub struct RunState {
    pub config: TrainConfig,
    pub mdp: Mdp,
    pub prior: SkillPrior,
    pub epoch: usize,
    /// Absent for the variant without a learned representation.
    pub repr: Option<ReprFn>,
    pub repr_opt: Option<AdamState>,
    pub lagrange: LagrangeState,
    pub sac: Sac,
    pub buffer: ReplayBuffer,
    pub rng: ChaCha8Rng,
    pub metrics: Vec<EpochMetrics>,
    pub counters: Counters,
    pub coverage: CoverageTracker,
    /// Where a diagnostic batch is written if an update produces a non-finite value.
    pub dump_dir: Option<PathBuf>,
}

impl RunState {
    pub fn init(config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let mdp = config.env.build()?;
        let prior = SkillPrior::new(config.skill.kind, config.skill.dim)?;
        let t = &config.train;
        let seed = t.seed;
        let mut init = derive_rng(seed, TAG_INIT, 0, 0);
        let obs_dim = mdp.obs_dim();
        let repr = if t.variant.has_network() {
            let (input, output) = if t.variant.conditions_on_skill() {
                (obs_dim + prior.dim, 1)
            } else {
                (obs_dim, prior.dim)
            };
            let mut sizes = vec![input];
            sizes.extend_from_slice(&t.phi_hidden);
            sizes.push(output);
            Some(ReprFn::new(Mlp::new(&sizes, t.phi_bias, &mut init)?))
        } else {
            None
        };
        let repr_opt = repr.as_ref().map(|r| AdamState::for_mlp(AdamConfig::with_lr(t.phi_lr), &r.net));
        let sac = Sac::new(config.sac.clone(), mdp.action_space(), obs_dim, prior.dim, &mut init)?;
        Ok(RunState {
            lagrange: LagrangeState::new(t.initial_lambda, t.epsilon)?,
            buffer: ReplayBuffer::new(t.buffer_capacity)?,
            rng: derive_rng(seed, TAG_UPDATES, 0, 0),
            metrics: Vec::new(),
            counters: Counters::default(),
            coverage: CoverageTracker::new(config.eval.queue_window),
            dump_dir: None,
            config: config.clone(),
            mdp,
            prior,
            epoch: 0,
            repr,
            repr_opt,
            sac,
        })
    }

    pub fn seed(&self) -> u64 {
        self.config.train.seed
    }

    pub fn phi(&self) -> Option<&ReprFn> {
        self.repr.as_ref()
    }

    /// Skills for evaluation epoch `epoch`; fixed per run unless resampling is configured.
    pub fn eval_skills(&self, epoch: usize) -> Vec<Skill> {
        let e = if self.config.eval.resample_skills { epoch as u64 } else { 0 };
        let mut rng = derive_rng(self.seed(), TAG_EVAL, e, 0);
        evaluation_skills(&self.prior, self.config.eval.n_skills, &mut rng)
    }

    /// Greedy policy coverage with the current policy and the run's evaluation skills.
    pub fn final_policy_coverage(&self) -> Result<usize> {
        Ok(policy_coverage_bins(&self.mdp, &self.sac.policy, &self.eval_skills(self.epoch))?.len())
    }

    fn collect(&self, epoch: usize) -> Result<Vec<Trajectory>> {
        let n = self.config.train.episodes_per_epoch;
        let seed = self.seed();
        let one = |j: usize| -> Result<Trajectory> {
            let mut rng = derive_rng(seed, TAG_EPISODE, epoch as u64, j as u64);
            let skill = self.prior.sample(&mut rng);
            rollout(&self.mdp, &self.sac.policy, &skill, true, &mut rng)
        };
        let workers = crate::worker_count().min(n);
        if workers <= 1 {
            return (0..n).map(one).collect();
        }
        let per = n.div_ceil(workers);
        let chunks: Vec<Result<Vec<Trajectory>>> = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let one = &one;
                    scope.spawn(move || (w * per..((w + 1) * per).min(n)).map(one).collect())
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("rollout worker panicked")).collect()
        });
        let mut out = Vec::with_capacity(n);
        for c in chunks {
            out.extend(c?);
        }
        Ok(out)
    }

    fn telescoping_error(&self, traj: &Trajectory) -> Result<f64> {
        let phi = match (&self.repr, self.config.train.variant.conditions_on_skill()) {
            (Some(p), false) => p,
            _ => return Ok(0.0),
        };
        let mut sum = 0.0;
        for w in traj.observations.windows(2) {
            sum += intrinsic_reward(phi, &w[0], &w[1], &traj.skill)?;
        }
        let first = phi.embed(&traj.observations[0])?;
        let last = phi.embed(traj.observations.last().unwrap())?;
        let delta: Vec<f64> = last.iter().zip(&first).map(|(a, b)| a - b).collect();
        Ok((sum - dot(&delta, &traj.skill.z)).abs())
    }

    fn dump_batch(&self, batch: &TransitionBatch, err: &Error) -> Option<PathBuf> {
        let dir = self.dump_dir.as_ref()?;
        let rows = |m: &crate::nn::Matrix| (0..m.rows).map(|i| m.row(i).to_vec()).collect::<Vec<_>>();
        let dump = serde_json::json!({
            "epoch": self.epoch,
            "grad_step": self.counters.grad_steps,
            "error": err.to_string(),
            "obs": rows(&batch.obs),
            "z": rows(&batch.z),
            "next_obs": rows(&batch.next_obs),
        });
        let path = dir.join("nan_dump.json");
        std::fs::create_dir_all(dir).ok()?;
        std::fs::write(&path, serde_json::to_string(&dump).ok()?).ok()?;
        Some(path)
    }

    fn grad_step(&mut self, acc: &mut EpochMetrics) -> Result<()> {
        let t = self.config.train.clone();
        let idx = self.buffer.sample_indices(t.batch_size, &mut self.rng)?;
        let batch = self.buffer.batch(&idx)?;
        let samples = t
            .variant
            .needs_prior_samples()
            .then(|| prior_sample_matrix(&self.prior, t.prior_samples, &mut self.rng));
        let result = (|| -> Result<()> {
            if let (Some(repr), Some(opt)) = (self.repr.as_mut(), self.repr_opt.as_mut()) {
                let loss = representation_loss(
                    t.variant,
                    &repr.net,
                    &self.lagrange,
                    &batch.rep(),
                    samples.as_ref(),
                    t.reward_scale,
                )?;
                opt.step_mlp(&mut repr.net, &loss.grads)?;
                self.counters.phi_updates += 1;
                self.lagrange = self.lagrange.step(loss.mean_slack, t.lambda_lr);
                self.counters.lambda_updates += 1;
                acc.phi_loss += loss.loss;
                acc.phi_objective += loss.objective;
                acc.mean_slack += loss.mean_slack;
                acc.violation_rate += loss.violation_rate;
            }
            let mut rewards = batch_rewards(t.variant, self.repr.as_ref().map(|r| &r.net), &batch.rep(), samples.as_ref())?;
            rewards.iter_mut().for_each(|r| *r *= t.reward_scale);
            if rewards.iter().any(|r| !r.is_finite()) {
                return Err(Error::non_finite("intrinsic rewards"));
            }
            let stats = self.sac.update(&batch, &rewards, &mut self.rng)?;
            self.counters.sac_updates += 1;
            acc.mean_reward += rewards.iter().sum::<f64>() / rewards.len() as f64;
            acc.critic_loss += stats.critic_loss;
            acc.actor_loss += stats.actor_loss;
            acc.entropy += stats.entropy;
            Ok(())
        })();
        self.counters.grad_steps += 1;
        match result {
            Err(e @ Error::NonFinite { .. }) => {
                let Error::NonFinite { context: what } = &e else { unreachable!() };
                let context = match self.dump_batch(&batch, &e) {
                    Some(p) => format!("{what} at epoch {} (batch written to {})", self.epoch, p.display()),
                    None => format!("{what} at epoch {}", self.epoch),
                };
                Err(Error::NonFinite { context })
            }
            other => other,
        }
    }

    /// Runs one epoch and appends its metrics row.
    pub fn run_epoch(&mut self) -> Result<&EpochMetrics> {
        let epoch = self.epoch + 1;
        let trajs = self.collect(epoch)?;
        let mut m = EpochMetrics {
            epoch,
            seed: self.seed(),
            ..EpochMetrics::default()
        };
        for traj in &trajs {
            m.telescoping_error = m.telescoping_error.max(self.telescoping_error(traj)?);
            let n = traj.len();
            for i in 0..n {
                self.buffer.push(crate::policy::Transition {
                    obs: traj.observations[i].clone(),
                    z: traj.skill.z.clone(),
                    action: traj.actions[i].clone(),
                    next_obs: traj.observations[i + 1].clone(),
                    terminal: i + 1 == n,
                });
            }
            self.coverage.record(trajectory_bins(&self.mdp, traj));
        }
        let steps = self.config.train.grad_steps_per_epoch;
        for _ in 0..steps {
            self.grad_step(&mut m)?;
        }
        let k = steps as f64;
        for v in [
            &mut m.phi_loss,
            &mut m.phi_objective,
            &mut m.mean_slack,
            &mut m.violation_rate,
            &mut m.critic_loss,
            &mut m.actor_loss,
            &mut m.entropy,
            &mut m.mean_reward,
        ] {
            *v /= k;
        }
        m.lambda = self.lagrange.lambda;
        m.alpha = self.sac.alpha();
        m.buffer_len = self.buffer.len();
        m.total_coverage = self.coverage.total();
        m.queue_coverage = self.coverage.queue();
        self.epoch = epoch;
        let every = self.config.eval.every;
        if every > 0 && (epoch % every == 0 || epoch == self.config.train.epochs) {
            let bins = policy_coverage_bins(&self.mdp, &self.sac.policy, &self.eval_skills(epoch))?;
            m.policy_coverage = Some(bins.len());
            if !self.config.eval.landmarks.is_empty() {
                m.landmark_coverage = Some(landmark_coverage(&self.config.eval.landmarks, &bins));
            }
        }
        self.metrics.push(m);
        Ok(self.metrics.last().unwrap())
    }

    /// Continues until `config.train.epochs`, calling `hook` after every epoch.
    pub fn run_to_end<F: FnMut(&RunState) -> Result<()>>(&mut self, mut hook: F) -> Result<()> {
        while self.epoch < self.config.train.epochs {
            self.run_epoch()?;
            hook(self)?;
        }
        Ok(())
    }
}

pub fn train(config: &TrainConfig) -> Result<RunState> {
    train_with_hook(config, |_| Ok(()))
}

pub fn train_with_hook<F: FnMut(&RunState) -> Result<()>>(config: &TrainConfig, hook: F) -> Result<RunState> {
    let mut state = RunState::init(config)?;
    state.run_to_end(hook)?;
    Ok(state)
}

#[derive(Clone, Debug, PartialEq)]
pub enum ZeroShot {
    Skill(Skill),
    /// `phi(g)` and `phi(s)` coincide to within `1e-8`.
    GoalReached,
}

/// `z = (phi(g) - phi(s)) / |phi(g) - phi(s)|`, or the one-hot of its argmax for discrete skills.
pub fn zero_shot_skill(phi: &ReprFn, s: &[f64], g: &[f64], kind: SkillKind) -> Result<ZeroShot> {
    let a = phi.embed(s)?;
    let b = phi.embed(g)?;
    let diff: Vec<f64> = b.iter().zip(&a).map(|(b, a)| b - a).collect();
    if diff.iter().map(|x| x * x).sum::<f64>().sqrt() < 1e-8 {
        return Ok(ZeroShot::GoalReached);
    }
    let prior = SkillPrior::new(kind, diff.len())?;
    Ok(ZeroShot::Skill(match kind {
        SkillKind::Continuous => prior.skill_from(diff)?,
        SkillKind::Discrete => prior.one_hot(argmax(&diff))?,
    }))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReachOutcome {
    pub final_state: State,
    pub success: bool,
    pub steps: usize,
}

/// Success test: grid states within `radius` steps (exact match for 0), else positions
/// within `radius * step_size`.
#[derive(Clone, Copy, Debug)]
pub struct GoalTest<'a> {
    pub radius: f64,
    pub dist: Option<&'a TemporalDistanceMatrix>,
}

impl GoalTest<'_> {
    pub fn reached(&self, mdp: &Mdp, s: &State, g: &State) -> Result<bool> {
        match (s, g) {
            (State::Cell(a), State::Cell(b)) => {
                if self.radius < 1.0 {
                    return Ok(a == b);
                }
                let d = self
                    .dist
                    .ok_or_else(|| Error::InvalidArgument("grid goal radius needs a distance matrix".into()))?;
                Ok(d.get(*a, *b).is_some_and(|d| d as f64 <= self.radius))
            }
            (State::Point(a), State::Point(b)) => {
                let step = mdp.as_point_mass().map_or(1.0, |p| p.step_size());
                Ok(crate::objective::sq_dist(a, b).sqrt() <= self.radius * step + 1e-12)
            }
            _ => Err(Error::InvalidArgument("goal and state kinds differ".into())),
        }
    }
}

/// Greedy zero-shot rollout toward `goal`, re-deriving the skill every `recompute_every` steps.
#[allow(clippy::too_many_arguments)]
pub fn reach_goal(
    mdp: &Mdp,
    policy: &dyn Controller,
    phi: &ReprFn,
    kind: SkillKind,
    goal: &State,
    recompute_every: usize,
    max_steps: usize,
    test: GoalTest,
) -> Result<ReachOutcome> {
    if recompute_every == 0 {
        return Err(Error::InvalidArgument("recompute_every must be positive".into()));
    }
    let g_obs = mdp.observe(goal);
    let mut s = mdp.initial_state();
    let mut z: Option<Skill> = None;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for t in 0..max_steps {
        if test.reached(mdp, &s, goal)? {
            return Ok(ReachOutcome {
                final_state: s,
                success: true,
                steps: t,
            });
        }
        if t % recompute_every == 0 || z.is_none() {
            match zero_shot_skill(phi, &mdp.observe(&s), &g_obs, kind)? {
                ZeroShot::Skill(k) => z = Some(k),
                ZeroShot::GoalReached => {
                    let success = test.reached(mdp, &s, goal)?;
                    return Ok(ReachOutcome {
                        final_state: s,
                        success,
                        steps: t,
                    });
                }
            }
        }
        let a = policy.act(&mdp.observe(&s), &z.as_ref().unwrap().z, false, &mut rng)?;
        s = mdp.transition(&s, &a)?;
    }
    let success = test.reached(mdp, &s, goal)?;
    Ok(ReachOutcome {
        final_state: s,
        success,
        steps: max_steps,
    })
}

/// Fraction of goals a uniform random walk from the start visits within `max_steps`.
pub fn random_walk_reach_rate(mdp: &Mdp, goals: &[State], max_steps: usize, test: GoalTest, seed: u64) -> Result<f64> {
    if goals.is_empty() {
        return Ok(0.0);
    }
    let walker = UniformRandom(mdp.action_space());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0;
    for g in goals {
        let mut s = mdp.initial_state();
        let mut hit = test.reached(mdp, &s, g)?;
        for _ in 0..max_steps {
            if hit {
                break;
            }
            let a: Action = walker.act(&[], &[], true, &mut rng)?;
            s = mdp.transition(&s, &a)?;
            hit = test.reached(mdp, &s, g)?;
        }
        hits += hit as usize;
    }
    Ok(hits as f64 / goals.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GoalResult {
    pub goal: Vec<f64>,
    pub success: bool,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReachReport {
    pub n_goals: usize,
    pub success_rate: f64,
    pub random_walk_success_rate: f64,
    pub recompute_every: usize,
    pub max_steps: usize,
    pub goals: Vec<GoalResult>,
}

/// Samples goals uniformly (grid cells, or points of the ellipse lattice) and runs zero-shot reaching.
pub fn evaluate_reach(state: &RunState, n_goals: usize, recompute_every: usize, seed: u64) -> Result<ReachReport> {
    let mdp = &state.mdp;
    let mut rng = derive_rng(seed, TAG_EVAL, u64::MAX, 1);
    let goals: Vec<State> = match mdp.num_states() {
        Some(n) => (0..n_goals)
            .map(|_| State::Cell((rng.next_u64() % n as u64) as usize))
            .collect(),
        None => {
            let lattice = mdp.as_point_mass().map(|p| p.lattice()).unwrap_or_default();
            if lattice.is_empty() && n_goals > 0 {
                return Err(Error::InvalidEnv("empty goal lattice".into()));
            }
            (0..n_goals)
                .map(|_| State::Point(lattice[(rng.next_u64() % lattice.len() as u64) as usize].clone()))
                .collect()
        }
    };
    evaluate_reach_goals(state, &goals, recompute_every, seed)
}

/// Zero-shot reaching of the given goals, with the random-walk rate on the same goals.
pub fn evaluate_reach_goals(state: &RunState, goals: &[State], recompute_every: usize, seed: u64) -> Result<ReachReport> {
    let phi = state
        .phi()
        .filter(|_| !state.config.train.variant.conditions_on_skill())
        .ok_or_else(|| Error::InvalidArgument("goal reaching needs a state representation".into()))?;
    let mdp = &state.mdp;
    let n_goals = goals.len();
    let radius = state
        .config
        .eval
        .goal_radius
        .unwrap_or(if mdp.is_enumerable() { 0.0 } else { 2.0 });
    let dist = if mdp.is_enumerable() && radius >= 1.0 {
        Some(crate::temporal::all_pairs_temporal_distance(mdp)?)
    } else {
        None
    };
    let test = GoalTest {
        radius,
        dist: dist.as_ref(),
    };
    let max_steps = state.config.eval.reach_steps.unwrap_or(mdp.horizon);
    let mut results = Vec::with_capacity(goals.len());
    for g in goals {
        let o = reach_goal(mdp, &state.sac.policy, phi, state.prior.kind, g, recompute_every, max_steps, test)?;
        results.push(GoalResult {
            goal: mdp.coords(g),
            success: o.success,
            steps: o.steps,
        });
    }
    let success_rate = if goals.is_empty() {
        0.0
    } else {
        results.iter().filter(|r| r.success).count() as f64 / goals.len() as f64
    };
    Ok(ReachReport {
        n_goals,
        success_rate,
        random_walk_success_rate: random_walk_reach_rate(mdp, goals, max_steps, test, seed)?,
        recompute_every,
        max_steps,
        goals: results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Mlp;

    fn tiny(epochs: usize) -> TrainConfig {
        let mut c = TrainConfig::grid(5, 5, 5);
        c.train.epochs = epochs;
        c.train.episodes_per_epoch = 1;
        c.train.grad_steps_per_epoch = 2;
        c.train.batch_size = 8;
        c.sac.hidden = vec![8];
        c.train.phi_hidden = vec![8];
        c.eval.n_skills = 4;
        c.eval.every = 1;
        c
    }

    #[test]
    fn zero_epochs_leaves_state_untouched() {
        let cfg = tiny(0);
        let init = RunState::init(&cfg).unwrap();
        let run = train(&cfg).unwrap();
        assert_eq!(run.epoch, 0);
        assert!(run.buffer.is_empty());
        assert_eq!(run.repr, init.repr);
        assert_eq!(run.sac, init.sac);
    }

    #[test]
    fn one_episode_fills_horizon_transitions() {
        let run = train(&tiny(1)).unwrap();
        assert_eq!(run.buffer.len(), 5);
        assert_eq!(run.metrics.len(), 1);
    }

    #[test]
    fn one_update_of_each_kind_per_gradient_step() {
        let run = train(&tiny(3)).unwrap();
        let c = run.counters;
        assert_eq!(c.grad_steps, 6);
        assert_eq!(c.phi_updates, c.grad_steps);
        assert_eq!(c.lambda_updates, c.grad_steps);
        assert_eq!(c.sac_updates, c.grad_steps);
        assert_eq!(run.buffer.len(), 15);
    }

    #[test]
    fn same_seed_same_metrics() {
        let a = metrics_jsonl(&train(&tiny(3)).unwrap().metrics);
        let b = metrics_jsonl(&train(&tiny(3)).unwrap().metrics);
        assert_eq!(a, b);
        let mut other = tiny(3);
        other.train.seed = 1;
        assert_ne!(a, metrics_jsonl(&train(&other).unwrap().metrics));
    }

    #[test]
    fn telescoping_holds_on_training_trajectories() {
        let run = train(&tiny(2)).unwrap();
        assert!(run.metrics.iter().all(|m| m.telescoping_error <= 1e-12));
    }

    fn linear(w: Vec<f64>, i: usize, o: usize) -> ReprFn {
        let mut net = Mlp::zeros(&[i, o], false).unwrap();
        net.layers[0].weight = w;
        ReprFn::new(net)
    }

    #[test]
    fn zero_shot_anchors() {
        let id = linear(vec![1.0, 0.0, 0.0, 1.0], 2, 2);
        match zero_shot_skill(&id, &[1.0, 1.0], &[4.0, 1.0], SkillKind::Continuous).unwrap() {
            ZeroShot::Skill(s) => assert_eq!(s.z, vec![1.0, 0.0]),
            other => panic!("{other:?}"),
        }
        let mut w = vec![0.0; 16];
        for i in 0..4 {
            w[i * 4 + i] = 1.0;
        }
        let id4 = linear(w, 4, 4);
        match zero_shot_skill(&id4, &[0.0; 4], &[0.1, 0.9, -0.2, 0.0], SkillKind::Discrete).unwrap() {
            ZeroShot::Skill(s) => assert_eq!(s.index, Some(1)),
            other => panic!("{other:?}"),
        }
        assert_eq!(
            zero_shot_skill(&id, &[1.0, 1.0], &[1.0, 1.0], SkillKind::Continuous).unwrap(),
            ZeroShot::GoalReached
        );
    }

    #[test]
    fn goal_at_start_is_reached_immediately() {
        let run = train(&tiny(0)).unwrap();
        let goal = run.mdp.initial_state();
        let test = GoalTest { radius: 0.0, dist: None };
        let o = reach_goal(&run.mdp, &run.sac.policy, run.phi().unwrap(), SkillKind::Continuous, &goal, 1, 10, test).unwrap();
        assert!(o.success);
        assert_eq!(o.steps, 0);
    }

    #[test]
    fn empty_reach_report() {
        let run = train(&tiny(0)).unwrap();
        let r = evaluate_reach(&run, 0, 1, 0).unwrap();
        assert_eq!(r.n_goals, 0);
        assert!(r.goals.is_empty());
    }
}
