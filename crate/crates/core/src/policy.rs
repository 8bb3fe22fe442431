//! Skill-conditioned soft actor-critic: categorical for finite action sets,
//! tanh-squashed Gaussian for boxes, plus the replay buffer.

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::env::{Action, ActionSpace, Controller};
use crate::error::{Error, Result};
use crate::nn::{to_f32_exact, AdamConfig, AdamState, Gradients, Matrix, Mlp};
use crate::objective::{argmax, RepBatch};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
const SQUASH_EPS: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub z: Vec<f64>,
    pub action: Action,
    pub next_obs: Vec<f64>,
    /// `next_obs` is the last state of its episode.
    pub terminal: bool,
}

/// Fixed-capacity FIFO ring of transitions.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("replay capacity must be positive".into()));
        }
        Ok(ReplayBuffer {
            capacity,
            items: Vec::new(),
            head: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let (a, b) = self.items.split_at(self.head);
        b.iter().chain(a.iter())
    }

    /// Uniform draws with replacement.
    pub fn sample_indices(&self, n: usize, rng: &mut dyn RngCore) -> Result<Vec<usize>> {
        if self.items.is_empty() {
            return Err(Error::InvalidArgument("cannot sample from an empty buffer".into()));
        }
        Ok((0..n).map(|_| rng.random_range(0..self.items.len())).collect())
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    pub fn batch(&self, indices: &[usize]) -> Result<TransitionBatch> {
        TransitionBatch::from_transitions(indices.iter().map(|&i| &self.items[i]))
    }

    /// Storage order and write cursor; with [`ReplayBuffer::from_parts`] this
    /// restores a buffer that samples identically.
    pub fn parts(&self) -> (&[Transition], usize) {
        (&self.items, self.head)
    }

    pub fn from_parts(capacity: usize, items: Vec<Transition>, head: usize) -> Result<Self> {
        if items.len() > capacity || (head != 0 && (items.len() != capacity || head >= capacity)) {
            return Err(Error::Checkpoint("inconsistent replay buffer layout".into()));
        }
        Ok(ReplayBuffer { capacity, items, head })
    }

    /// Rebuilds a buffer from transitions listed oldest first.
    pub fn from_ordered(capacity: usize, items: Vec<Transition>) -> Result<Self> {
        let mut buf = ReplayBuffer::new(capacity)?;
        for t in items {
            buf.push(t);
        }
        Ok(buf)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ActionBatch {
    Discrete(Vec<usize>),
    Continuous(Matrix),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransitionBatch {
    pub obs: Matrix,
    pub z: Matrix,
    pub next_obs: Matrix,
    pub actions: ActionBatch,
    pub terminal: Vec<bool>,
}

impl TransitionBatch {
    pub fn from_transitions<'a, I: IntoIterator<Item = &'a Transition>>(items: I) -> Result<Self> {
        let items: Vec<&Transition> = items.into_iter().collect();
        if items.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let obs = Matrix::from_rows(&items.iter().map(|t| t.obs.as_slice()).collect::<Vec<_>>())?;
        let next_obs = Matrix::from_rows(&items.iter().map(|t| t.next_obs.as_slice()).collect::<Vec<_>>())?;
        let z = Matrix::from_rows(&items.iter().map(|t| t.z.as_slice()).collect::<Vec<_>>())?;
        let actions = match &items[0].action {
            Action::Discrete(_) => ActionBatch::Discrete(
                items
                    .iter()
                    .map(|t| match &t.action {
                        Action::Discrete(a) => Ok(*a),
                        Action::Continuous(_) => Err(Error::InvalidArgument("mixed action kinds".into())),
                    })
                    .collect::<Result<_>>()?,
            ),
            Action::Continuous(_) => {
                let rows = items
                    .iter()
                    .map(|t| match &t.action {
                        Action::Continuous(a) => Ok(a.as_slice()),
                        Action::Discrete(_) => Err(Error::InvalidArgument("mixed action kinds".into())),
                    })
                    .collect::<Result<Vec<_>>>()?;
                ActionBatch::Continuous(Matrix::from_rows(&rows)?)
            }
        };
        Ok(TransitionBatch {
            obs,
            z,
            next_obs,
            actions,
            terminal: items.iter().map(|t| t.terminal).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.obs.rows
    }

    pub fn is_empty(&self) -> bool {
        self.obs.rows == 0
    }

    pub fn rep(&self) -> RepBatch<'_> {
        RepBatch {
            obs: &self.obs,
            next_obs: &self.next_obs,
            z: &self.z,
            terminal: &self.terminal,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum EntropyMode {
    /// Tune `log alpha` so policy entropy tracks `target_scale` times the reference
    /// entropy: `ln |A|` for finite actions, `-dim` for boxes.
    Auto { initial: f64, target_scale: f64 },
    Fixed { alpha: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SacConfig {
    pub hidden: Vec<usize>,
    pub gamma: f64,
    /// Fraction of the target network kept at each update.
    pub target_keep: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub alpha_lr: f64,
    pub entropy: EntropyMode,
    /// Bootstrap through the last step of an episode, which is a time limit rather than a failure.
    pub bootstrap_final: bool,
}

impl Default for SacConfig {
    fn default() -> Self {
        SacConfig {
            hidden: vec![64, 64],
            gamma: 0.99,
            target_keep: 0.995,
            actor_lr: 1e-4,
            critic_lr: 1e-4,
            alpha_lr: 1e-4,
            entropy: EntropyMode::Auto {
                initial: 1.0,
                target_scale: 0.5,
            },
            bootstrap_final: true,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.target_keep) {
            return bad("target_keep must lie in [0, 1]");
        }
        for (name, lr) in [("actor_lr", self.actor_lr), ("critic_lr", self.critic_lr), ("alpha_lr", self.alpha_lr)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer sizes must be positive");
        }
        match self.entropy {
            EntropyMode::Auto { initial, .. } if !(initial > 0.0) => bad("initial alpha must be positive"),
            EntropyMode::Fixed { alpha } if !(alpha >= 0.0) => bad("alpha must be non-negative"),
            _ => Ok(()),
        }
    }
}

fn sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut s = vec![input];
    s.extend_from_slice(hidden);
    s.push(output);
    s
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

/// Soft-clamped log standard deviation and its derivative in the raw head output.
#[inline]
fn squash_log_std(raw: f64) -> (f64, f64) {
    let t = crate::nn::tanh(raw);
    let half = 0.5 * (LOG_STD_MAX - LOG_STD_MIN);
    (LOG_STD_MIN + half * (t + 1.0), half * (1.0 - t * t))
}

/// Actor network over `obs ++ z`.
#[derive(Clone, Debug, PartialEq)]
pub struct SkillPolicy {
    pub space: ActionSpace,
    pub actor: Mlp,
    pub latent_dim: usize,
}

impl SkillPolicy {
    pub fn new(space: ActionSpace, obs_dim: usize, latent_dim: usize, hidden: &[usize], rng: &mut dyn RngCore) -> Result<Self> {
        let out = match space {
            ActionSpace::Discrete(n) => n,
            ActionSpace::Box(d) => 2 * d,
        };
        Ok(SkillPolicy {
            space,
            actor: Mlp::new(&sizes(obs_dim + latent_dim, hidden, out), true, rng)?,
            latent_dim,
        })
    }

    fn input(obs: &[f64], z: &[f64]) -> Vec<f64> {
        let mut x = obs.to_vec();
        x.extend_from_slice(z);
        x
    }

    /// Action probabilities (finite case only).
    pub fn probabilities(&self, obs: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        match self.space {
            ActionSpace::Discrete(_) => {
                let logits = self.actor.predict_one(&Self::input(obs, z))?;
                Ok(log_softmax(&logits).into_iter().map(f64::exp).collect())
            }
            ActionSpace::Box(_) => Err(Error::InvalidArgument("continuous policy has no probability table".into())),
        }
    }

    /// `(mean, log_std)` of the pre-squash Gaussian (box case only).
    pub fn gaussian(&self, obs: &[f64], z: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        match self.space {
            ActionSpace::Box(d) => {
                let out = self.actor.predict_one(&Self::input(obs, z))?;
                Ok((out[..d].to_vec(), out[d..].iter().map(|r| squash_log_std(*r).0).collect()))
            }
            ActionSpace::Discrete(_) => Err(Error::InvalidArgument("finite policy has no Gaussian head".into())),
        }
    }

    /// Greedy actions are the distribution mode; ties go to the lowest index.
    pub fn select_action(&self, obs: &[f64], z: &[f64], stochastic: bool, rng: &mut dyn RngCore) -> Result<Action> {
        if z.len() != self.latent_dim {
            return Err(Error::DimensionMismatch {
                expected: self.latent_dim,
                got: z.len(),
                context: "policy skill",
            });
        }
        match self.space {
            ActionSpace::Discrete(_) => {
                let p = self.probabilities(obs, z)?;
                if !stochastic {
                    return Ok(Action::Discrete(argmax(&p)));
                }
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (i, pi) in p.iter().enumerate() {
                    acc += pi;
                    if u < acc {
                        return Ok(Action::Discrete(i));
                    }
                }
                Ok(Action::Discrete(p.len() - 1))
            }
            ActionSpace::Box(_) => {
                let (mu, log_std) = self.gaussian(obs, z)?;
                Ok(Action::Continuous(
                    mu.iter()
                        .zip(&log_std)
                        .map(|(m, ls)| {
                            let u = if stochastic {
                                m + ls.exp() * rng.sample::<f64, _>(StandardNormal)
                            } else {
                                *m
                            };
                            crate::nn::tanh(u)
                        })
                        .collect(),
                ))
            }
        }
    }
}

impl Controller for SkillPolicy {
    fn act(&self, obs: &[f64], z: &[f64], stochastic: bool, rng: &mut dyn RngCore) -> Result<Action> {
        self.select_action(obs, z, stochastic, rng)
    }

    fn latent_dim(&self) -> Option<usize> {
        Some(self.latent_dim)
    }
}

/// Twin Q networks with Polyak-averaged targets. Finite-action critics map
/// `obs ++ z` to one value per action; box critics map `obs ++ z ++ a` to one value.
#[derive(Clone, Debug, PartialEq)]
pub struct Critic {
    pub q: [Mlp; 2],
    pub target: [Mlp; 2],
}

impl Critic {
    pub fn new(space: ActionSpace, obs_dim: usize, latent_dim: usize, hidden: &[usize], rng: &mut dyn RngCore) -> Result<Self> {
        let (input, out) = match space {
            ActionSpace::Discrete(n) => (obs_dim + latent_dim, n),
            ActionSpace::Box(d) => (obs_dim + latent_dim + d, 1),
        };
        let s = sizes(input, hidden, out);
        let q = [Mlp::new(&s, true, rng)?, Mlp::new(&s, true, rng)?];
        Ok(Critic {
            target: q.clone(),
            q,
        })
    }

    pub fn soft_update(&mut self, keep: f64) {
        for i in 0..2 {
            let online = &self.q[i];
            self.target[i].soft_update_from(online, keep);
        }
    }
}

/// `mean_b 0.5 * (Q(x_b)[a_b] - y_b)^2` (finite) or `mean_b 0.5 * (Q(x_b ++ a_b) - y_b)^2` (box).
pub fn critic_loss(q: &Mlp, input: &Matrix, actions: &ActionBatch, targets: &[f64]) -> Result<(f64, Gradients)> {
    let n = input.rows;
    if targets.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: targets.len(),
            context: "critic targets",
        });
    }
    let inv = 1.0 / n as f64;
    let (out, tape) = match actions {
        ActionBatch::Discrete(_) => q.forward(input)?,
        ActionBatch::Continuous(a) => q.forward(&input.hcat(a)?)?,
    };
    let mut og = Matrix::zeros(out.rows, out.cols);
    let mut loss = 0.0;
    for b in 0..n {
        let col = match actions {
            ActionBatch::Discrete(a) => a[b],
            ActionBatch::Continuous(_) => 0,
        };
        if col >= out.cols {
            return Err(Error::InvalidArgument(format!("action {col} out of range")));
        }
        let e = out.get(b, col) - targets[b];
        loss += 0.5 * e * e * inv;
        og.data[b * out.cols + col] = e * inv;
    }
    if !loss.is_finite() {
        return Err(Error::non_finite("critic loss"));
    }
    let (g, _) = tape.backward(q, &og)?;
    Ok((loss, g))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActorLoss {
    pub loss: f64,
    /// Batch mean of `-log pi`.
    pub entropy: f64,
}

/// `mean_b sum_a pi(a) (alpha log pi(a) - min_i Q_i(a))` for a categorical actor.
pub fn categorical_actor_loss(actor: &Mlp, q: &[Mlp; 2], input: &Matrix, alpha: f64) -> Result<(ActorLoss, Gradients)> {
    let n = input.rows;
    let inv = 1.0 / n as f64;
    let (logits, tape) = actor.forward(input)?;
    let q1 = q[0].predict(input)?;
    let q2 = q[1].predict(input)?;
    let k = logits.cols;
    let mut og = Matrix::zeros(n, k);
    let mut loss = 0.0;
    let mut entropy = 0.0;
    for b in 0..n {
        let lp = log_softmax(logits.row(b));
        let f: Vec<f64> = (0..k).map(|a| alpha * lp[a] - q1.get(b, a).min(q2.get(b, a))).collect();
        let lb: f64 = (0..k).map(|a| lp[a].exp() * f[a]).sum();
        loss += lb * inv;
        entropy -= (0..k).map(|a| lp[a].exp() * lp[a]).sum::<f64>() * inv;
        for a in 0..k {
            og.data[b * k + a] = lp[a].exp() * (f[a] - lb) * inv;
        }
    }
    if !loss.is_finite() {
        return Err(Error::non_finite("actor loss"));
    }
    let (g, _) = tape.backward(actor, &og)?;
    Ok((ActorLoss { loss, entropy }, g))
}

/// Reparameterized samples `a = tanh(mu + sigma * noise)` with their log-densities.
fn gaussian_sample(out: &Matrix, noise: &Matrix, d: usize) -> (Matrix, Vec<f64>) {
    let n = out.rows;
    let mut a = Matrix::zeros(n, d);
    let mut logp = vec![0.0; n];
    for b in 0..n {
        let row = out.row(b);
        for i in 0..d {
            let (ls, _) = squash_log_std(row[d + i]);
            let eps = noise.get(b, i);
            let ai = crate::nn::tanh(row[i] + ls.exp() * eps);
            a.data[b * d + i] = ai;
            logp[b] += -0.5 * eps * eps - ls - 0.5 * std::f64::consts::TAU.ln() - (1.0 - ai * ai + SQUASH_EPS).ln();
        }
    }
    (a, logp)
}

/// `mean_b (alpha log pi(a_b) - min_i Q_i(x_b, a_b))` with `a_b` reparameterized by `noise`.
pub fn gaussian_actor_loss(
    actor: &Mlp,
    q: &[Mlp; 2],
    input: &Matrix,
    noise: &Matrix,
    alpha: f64,
) -> Result<(ActorLoss, Gradients)> {
    let n = input.rows;
    let d = noise.cols;
    if actor.output_dim() != 2 * d || noise.rows != n {
        return Err(Error::DimensionMismatch {
            expected: 2 * d,
            got: actor.output_dim(),
            context: "gaussian actor head vs noise",
        });
    }
    let inv = 1.0 / n as f64;
    let (out, tape) = actor.forward(input)?;
    let (a, logp) = gaussian_sample(&out, noise, d);
    let qa = input.hcat(&a)?;
    let (v1, t1) = q[0].forward(&qa)?;
    let (v2, t2) = q[1].forward(&qa)?;
    // dQmin/da through whichever twin is smaller.
    let mut pick1 = Matrix::zeros(n, 1);
    let mut pick2 = Matrix::zeros(n, 1);
    let mut loss = 0.0;
    for b in 0..n {
        let (x1, x2) = (v1.get(b, 0), v2.get(b, 0));
        if x1 <= x2 {
            pick1.data[b] = 1.0;
        } else {
            pick2.data[b] = 1.0;
        }
        loss += (alpha * logp[b] - x1.min(x2)) * inv;
    }
    if !loss.is_finite() {
        return Err(Error::non_finite("actor loss"));
    }
    let (_, gin1) = t1.backward(&q[0], &pick1)?;
    let (_, gin2) = t2.backward(&q[1], &pick2)?;
    let in_dim = input.cols;
    let mut og = Matrix::zeros(n, 2 * d);
    for b in 0..n {
        let row = out.row(b);
        for i in 0..d {
            let (ls, dls) = squash_log_std(row[d + i]);
            let sigma = ls.exp();
            let eps = noise.get(b, i);
            let ai = a.get(b, i);
            let dqda = gin1.get(b, in_dim + i) + gin2.get(b, in_dim + i);
            let one_m = 1.0 - ai * ai;
            let dsq_du = 2.0 * ai * one_m / (one_m + SQUASH_EPS);
            let dl_du = alpha * dsq_du - dqda * one_m;
            og.data[b * 2 * d + i] = dl_du * inv;
            og.data[b * 2 * d + d + i] = (dl_du * sigma * eps - alpha) * dls * inv;
        }
    }
    let (g, _) = tape.backward(actor, &og)?;
    let entropy = -logp.iter().sum::<f64>() * inv;
    Ok((ActorLoss { loss, entropy }, g))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SacStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha: f64,
    pub entropy: f64,
}

/// Full agent with optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct Sac {
    pub config: SacConfig,
    pub policy: SkillPolicy,
    pub critic: Critic,
    pub actor_opt: AdamState,
    pub critic_opt: [AdamState; 2],
    pub log_alpha: f64,
    pub alpha_opt: AdamState,
}

impl Sac {
    pub fn new(config: SacConfig, space: ActionSpace, obs_dim: usize, latent_dim: usize, rng: &mut dyn RngCore) -> Result<Self> {
        config.validate()?;
        let policy = SkillPolicy::new(space, obs_dim, latent_dim, &config.hidden, rng)?;
        let critic = Critic::new(space, obs_dim, latent_dim, &config.hidden, rng)?;
        let log_alpha = to_f32_exact(match config.entropy {
            EntropyMode::Auto { initial, .. } => initial.ln(),
            EntropyMode::Fixed { alpha } => alpha.ln(),
        });
        Ok(Sac {
            actor_opt: AdamState::for_mlp(AdamConfig::with_lr(config.actor_lr), &policy.actor),
            critic_opt: [
                AdamState::for_mlp(AdamConfig::with_lr(config.critic_lr), &critic.q[0]),
                AdamState::for_mlp(AdamConfig::with_lr(config.critic_lr), &critic.q[1]),
            ],
            alpha_opt: AdamState::new(AdamConfig::with_lr(config.alpha_lr), &[vec![log_alpha]]),
            log_alpha,
            policy,
            critic,
            config,
        })
    }

    pub fn alpha(&self) -> f64 {
        match self.config.entropy {
            EntropyMode::Fixed { alpha } => alpha,
            EntropyMode::Auto { .. } => self.log_alpha.exp(),
        }
    }

    pub fn target_entropy(&self) -> Option<f64> {
        match self.config.entropy {
            EntropyMode::Fixed { .. } => None,
            EntropyMode::Auto { target_scale, .. } => Some(match self.policy.space {
                ActionSpace::Discrete(n) => target_scale * (n as f64).ln(),
                ActionSpace::Box(d) => -target_scale * d as f64,
            }),
        }
    }

    /// `r + gamma * E_{a' ~ pi}[min_i Qbar_i(s', a') - alpha log pi(a' | s')]`.
    pub fn critic_targets(&self, batch: &TransitionBatch, rewards: &[f64], rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let next = batch.next_obs.hcat(&batch.z)?;
        let alpha = self.alpha();
        let n = batch.len();
        let values: Vec<f64> = match self.policy.space {
            ActionSpace::Discrete(k) => {
                let logits = self.policy.actor.predict(&next)?;
                let t1 = self.critic.target[0].predict(&next)?;
                let t2 = self.critic.target[1].predict(&next)?;
                (0..n)
                    .map(|b| {
                        let lp = log_softmax(logits.row(b));
                        (0..k)
                            .map(|a| lp[a].exp() * (t1.get(b, a).min(t2.get(b, a)) - alpha * lp[a]))
                            .sum()
                    })
                    .collect()
            }
            ActionSpace::Box(d) => {
                let out = self.policy.actor.predict(&next)?;
                let noise = gaussian_noise(n, d, rng);
                let (a, logp) = gaussian_sample(&out, &noise, d);
                let qa = next.hcat(&a)?;
                let t1 = self.critic.target[0].predict(&qa)?;
                let t2 = self.critic.target[1].predict(&qa)?;
                (0..n).map(|b| t1.get(b, 0).min(t2.get(b, 0)) - alpha * logp[b]).collect()
            }
        };
        Ok((0..n)
            .map(|b| {
                let cont = if batch.terminal[b] && !self.config.bootstrap_final { 0.0 } else { 1.0 };
                rewards[b] + self.config.gamma * cont * values[b]
            })
            .collect())
    }

    pub fn critic_update(&mut self, batch: &TransitionBatch, rewards: &[f64], rng: &mut dyn RngCore) -> Result<f64> {
        let y = self.critic_targets(batch, rewards, rng)?;
        let input = batch.obs.hcat(&batch.z)?;
        let mut total = 0.0;
        for i in 0..2 {
            let (l, g) = critic_loss(&self.critic.q[i], &input, &batch.actions, &y)?;
            self.critic_opt[i].step_mlp(&mut self.critic.q[i], &g)?;
            total += l;
        }
        self.critic.soft_update(self.config.target_keep);
        Ok(total)
    }

    pub fn actor_update(&mut self, batch: &TransitionBatch, rng: &mut dyn RngCore) -> Result<ActorLoss> {
        let input = batch.obs.hcat(&batch.z)?;
        let alpha = self.alpha();
        let (loss, g) = match self.policy.space {
            ActionSpace::Discrete(_) => categorical_actor_loss(&self.policy.actor, &self.critic.q, &input, alpha)?,
            ActionSpace::Box(d) => {
                let noise = gaussian_noise(input.rows, d, rng);
                gaussian_actor_loss(&self.policy.actor, &self.critic.q, &input, &noise, alpha)?
            }
        };
        self.actor_opt.step_mlp(&mut self.policy.actor, &g)?;
        Ok(loss)
    }

    /// Gradient step on `alpha * (H - H_target)` in `log alpha`.
    pub fn alpha_update(&mut self, entropy: f64) -> Result<()> {
        if let Some(target) = self.target_entropy() {
            let g = Gradients(vec![vec![self.log_alpha.exp() * (entropy - target)]]);
            let mut p = [self.log_alpha];
            self.alpha_opt.step(vec![&mut p[..]], &g)?;
            self.log_alpha = p[0];
        }
        Ok(())
    }

    /// One critic, actor and temperature step.
    pub fn update(&mut self, batch: &TransitionBatch, rewards: &[f64], rng: &mut dyn RngCore) -> Result<SacStats> {
        let critic_loss = self.critic_update(batch, rewards, rng)?;
        let actor = self.actor_update(batch, rng)?;
        self.alpha_update(actor.entropy)?;
        Ok(SacStats {
            critic_loss,
            actor_loss: actor.loss,
            alpha: self.alpha(),
            entropy: actor.entropy,
        })
    }
}

pub(crate) fn gaussian_noise(n: usize, d: usize, rng: &mut dyn RngCore) -> Matrix {
    let data = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
    Matrix::from_vec(n, d, data).expect("shape")
}
