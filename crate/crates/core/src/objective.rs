//! Skills, the state representation, the Lagrangian-constrained
//! representation objective and the family of Wasserstein-style rewards.
//!
//! The default objective trains `phi` to maximize
//! `E[(phi(s') - phi(s))^T z + lambda * min(eps, 1 - |phi(s) - phi(s')|^2)]`
//! over replayed transitions, while `lambda` descends
//! `E[lambda * min(eps, 1 - |phi(s) - phi(s')|^2)]` and stays non-negative.

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Gradients, Matrix, Mlp};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SkillKind {
    /// Standard Gaussian draws normalized to the unit sphere.
    Continuous,
    /// Zero-centered one-hot vectors `e_k - 1/D`.
    Discrete,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Skill {
    pub z: Vec<f64>,
    pub kind: SkillKind,
    /// Category for discrete skills.
    pub index: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillPrior {
    pub kind: SkillKind,
    pub dim: usize,
}

impl SkillPrior {
    pub fn new(kind: SkillKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("skill dimension must be at least 1".into()));
        }
        Ok(SkillPrior { kind, dim })
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> Skill {
        match self.kind {
            SkillKind::Continuous => loop {
                let z: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
                if let Some(s) = normalize(&z) {
                    break Skill {
                        z: s,
                        kind: SkillKind::Continuous,
                        index: None,
                    };
                }
            },
            SkillKind::Discrete => {
                let k = rng.random_range(0..self.dim);
                self.one_hot(k).expect("index in range")
            }
        }
    }

    pub fn one_hot(&self, index: usize) -> Result<Skill> {
        if index >= self.dim {
            return Err(Error::InvalidArgument(format!(
                "skill index {index} out of range for dimension {}",
                self.dim
            )));
        }
        let off = 1.0 / self.dim as f64;
        let z = (0..self.dim)
            .map(|i| if i == index { 1.0 - off } else { -off })
            .collect();
        Ok(Skill {
            z,
            kind: SkillKind::Discrete,
            index: Some(index),
        })
    }

    /// Wraps a raw vector: continuous vectors are normalized, discrete ones
    /// are mapped to the one-hot of their argmax.
    pub fn skill_from(&self, v: Vec<f64>) -> Result<Skill> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: v.len(),
                context: "skill vector",
            });
        }
        match self.kind {
            SkillKind::Continuous => {
                let z = normalize(&v)
                    .ok_or_else(|| Error::InvalidArgument("zero vector has no direction".into()))?;
                Ok(Skill {
                    z,
                    kind: SkillKind::Continuous,
                    index: None,
                })
            }
            SkillKind::Discrete => self.one_hot(argmax(&v)),
        }
    }

    /// All discrete skills, or `n` evenly spaced headings for 2-D continuous skills.
    pub fn evenly_spaced(&self, n: usize) -> Vec<Skill> {
        match (self.kind, self.dim) {
            (SkillKind::Discrete, _) => (0..self.dim).map(|k| self.one_hot(k).unwrap()).collect(),
            (SkillKind::Continuous, 2) => (0..n)
                .map(|i| {
                    let t = std::f64::consts::TAU * i as f64 / n as f64;
                    self.skill_from(vec![t.cos(), t.sin()]).unwrap()
                })
                .collect(),
            (SkillKind::Continuous, 1) => (0..n)
                .map(|i| self.skill_from(vec![if i % 2 == 0 { 1.0 } else { -1.0 }]).unwrap())
                .collect(),
            (SkillKind::Continuous, d) => (0..n)
                .map(|i| {
                    let mut v = vec![0.0; d];
                    v[(i / 2) % d] = if i % 2 == 0 { 1.0 } else { -1.0 };
                    self.skill_from(v).unwrap()
                })
                .collect(),
        }
    }
}

pub(crate) fn normalize(v: &[f64]) -> Option<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (n > 1e-12 && n.is_finite()).then(|| v.iter().map(|x| x / n).collect())
}

/// Lowest index of the maximum.
pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Learned map from observations to the skill space.
#[derive(Clone, Debug, PartialEq)]
pub struct ReprFn {
    pub net: Mlp,
}

impl ReprFn {
    pub fn new(net: Mlp) -> Self {
        ReprFn { net }
    }

    pub fn latent_dim(&self) -> usize {
        self.net.output_dim()
    }

    pub fn embed(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.net.predict_one(obs)
    }

    pub fn embed_batch(&self, obs: &Matrix) -> Result<Matrix> {
        self.net.predict(obs)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LagrangeState {
    pub lambda: f64,
    pub epsilon: f64,
}

impl LagrangeState {
    pub fn new(lambda: f64, epsilon: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda {lambda} must be non-negative")));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!("epsilon {epsilon} must be positive")));
        }
        Ok(LagrangeState { lambda, epsilon })
    }

    /// `min(eps, 1 - d2)` for one squared representation distance.
    #[inline]
    pub fn slack(&self, d2: f64) -> f64 {
        self.epsilon.min(1.0 - d2)
    }

    /// Value of the multiplier loss `lambda * mean_slack`; its derivative is `mean_slack`.
    pub fn loss(&self, mean_slack: f64) -> f64 {
        self.lambda * mean_slack
    }

    /// Projected gradient step on the multiplier loss.
    pub fn step(&self, mean_slack: f64, step_size: f64) -> LagrangeState {
        LagrangeState {
            lambda: (self.lambda - step_size * mean_slack).max(0.0),
            epsilon: self.epsilon,
        }
    }
}

/// `(phi(s') - phi(s))^T z`.
pub fn intrinsic_reward(phi: &ReprFn, s: &[f64], s_next: &[f64], z: &Skill) -> Result<f64> {
    if phi.latent_dim() != z.z.len() {
        return Err(Error::DimensionMismatch {
            expected: phi.latent_dim(),
            got: z.z.len(),
            context: "skill vs representation",
        });
    }
    let a = phi.embed(s)?;
    let b = phi.embed(s_next)?;
    Ok(b.iter().zip(&a).zip(&z.z).map(|((b, a), z)| (b - a) * z).sum())
}

/// Transitions the representation objective is evaluated on.
#[derive(Clone, Copy, Debug)]
pub struct RepBatch<'a> {
    pub obs: &'a Matrix,
    pub next_obs: &'a Matrix,
    pub z: &'a Matrix,
    /// Marks transitions whose `next_obs` is the last state of an episode.
    pub terminal: &'a [bool],
}

impl RepBatch<'_> {
    fn validate(&self) -> Result<usize> {
        let n = self.obs.rows;
        if n == 0 {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        if self.next_obs.rows != n || self.z.rows != n || self.terminal.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: self.next_obs.rows.min(self.z.rows).min(self.terminal.len()),
                context: "batch rows",
            });
        }
        Ok(n)
    }
}

#[derive(Clone, Debug)]
pub struct RepLoss {
    pub loss: f64,
    pub grads: Gradients,
    /// Batch mean of the objective term (e.g. the intrinsic reward).
    pub objective: f64,
    /// Batch mean of `min(eps, 1 - |d|^2)`; drives the multiplier update.
    pub mean_slack: f64,
    /// Fraction of pairs with `|d|^2 > 1`.
    pub violation_rate: f64,
}

/// Which Wasserstein-dependency estimator supplies the representation objective and the reward.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardVariant {
    /// Telescoped last-state objective, reward `(phi(s') - phi(s))^T z`.
    Metra,
    /// Score network `f(s, z)` with centered reward `f(s, z) - mean_i f(s, z_i)`.
    WdmDual,
    /// State reward `phi(s)^T z`.
    Wdiayn,
    /// Raw displacement reward `(s' - s)^T z - mean_i (s' - s)^T z_i`; nothing is learned.
    Wdads,
    /// Contrastive reward `phi(s)^T z - log mean_i exp(phi(s)^T z_i)`.
    Wcic,
    /// `(phi(s_T)^T z)^2`, paid on the last transition of an episode.
    SquaredMetra,
    /// Same objective; the reward `(phi(s')^T z)^2 - (phi(s)^T z)^2` is paid every
    /// step and sums to the terminal value when `phi(s_0) = 0`.
    SquaredMetraTelescoped,
}

impl RewardVariant {
    pub fn has_network(self) -> bool {
        !matches!(self, RewardVariant::Wdads)
    }

    /// Whether the learned network takes `obs ++ z` rather than `obs`.
    pub fn conditions_on_skill(self) -> bool {
        matches!(self, RewardVariant::WdmDual)
    }

    pub fn needs_prior_samples(self) -> bool {
        matches!(
            self,
            RewardVariant::WdmDual | RewardVariant::Wdads | RewardVariant::Wcic
        )
    }
}

/// Adds the Lipschitz penalty gradient for one pair and returns `(slack, violated)`.
#[inline]
fn penalty_pair(
    lag: &LagrangeState,
    a: &[f64],
    b: &[f64],
    ga: &mut [f64],
    gb: &mut [f64],
    scale: f64,
) -> (f64, bool) {
    let d2 = sq_dist(a, b);
    let slack = lag.slack(d2);
    if 1.0 - d2 < lag.epsilon {
        // d/db of -lambda * (1 - |b - a|^2) = 2 lambda (b - a)
        for i in 0..a.len() {
            let g = 2.0 * lag.lambda * (b[i] - a[i]) * scale;
            gb[i] += g;
            ga[i] -= g;
        }
    }
    (slack, d2 > 1.0)
}

/// Loss `-(mean[(phi(s') - phi(s))^T z + lambda * min(eps, 1 - |phi(s) - phi(s')|^2)])`
/// and its gradient in the parameters of `phi`; `lambda` is held constant.
pub fn phi_loss(phi: &ReprFn, lag: &LagrangeState, batch: &RepBatch) -> Result<RepLoss> {
    representation_loss(RewardVariant::Metra, &phi.net, lag, batch, None, 1.0)
}

/// Representation loss for any learned variant.
///
/// `prior_samples` (one skill per row) are required by the contrastive and
/// dual-score variants. The penalty is always applied to adjacent pairs of
/// the network output, for the score net with the skill held fixed. The
/// objective term (not the penalty) is multiplied by `objective_scale`.
pub fn representation_loss(
    variant: RewardVariant,
    net: &Mlp,
    lag: &LagrangeState,
    batch: &RepBatch,
    prior_samples: Option<&Matrix>,
    objective_scale: f64,
) -> Result<RepLoss> {
    let n = batch.validate()?;
    let inv_n = 1.0 / n as f64;
    let os = objective_scale * inv_n;
    let mut objective = 0.0;
    let mut slack_sum = 0.0;
    let mut violations = 0usize;

    let samples = || {
        prior_samples
            .filter(|m| m.rows > 0)
            .ok_or_else(|| Error::InvalidArgument("variant requires prior skill samples".into()))
    };

    let (input, sample_rows) = match variant {
        RewardVariant::Wdads => {
            return Err(Error::InvalidArgument("wdads has no learned representation".into()))
        }
        RewardVariant::WdmDual => {
            let zs = samples()?;
            let mut input = batch.obs.hcat(batch.z)?.vcat(&batch.next_obs.hcat(batch.z)?)?;
            let mut rows = Vec::with_capacity(n * zs.rows);
            for b in 0..n {
                for i in 0..zs.rows {
                    let mut r = batch.next_obs.row(b).to_vec();
                    r.extend_from_slice(zs.row(i));
                    rows.push(r);
                }
            }
            input = input.vcat(&Matrix::from_rows(&rows)?)?;
            (input, zs.rows)
        }
        _ => (batch.obs.vcat(batch.next_obs)?, 0),
    };
    let (out, tape) = net.forward(&input)?;
    let d = out.cols;
    let mut og = Matrix::zeros(out.rows, d);

    match variant {
        RewardVariant::Metra
        | RewardVariant::Wdiayn
        | RewardVariant::Wcic
        | RewardVariant::SquaredMetra
        | RewardVariant::SquaredMetraTelescoped => {
            if d != batch.z.cols {
                return Err(Error::DimensionMismatch {
                    expected: batch.z.cols,
                    got: d,
                    context: "representation output vs skill",
                });
            }
        }
        _ => {}
    }

    let zs_cic = if variant == RewardVariant::Wcic {
        Some(samples()?.clone())
    } else {
        None
    };

    for b in 0..n {
        let z = batch.z.row(b);
        match variant {
            RewardVariant::Metra => {
                let (ps, pn) = (out.row(b), out.row(n + b));
                objective += dot(pn, z) - dot(ps, z);
                for i in 0..d {
                    og.data[b * d + i] += z[i] * os;
                    og.data[(n + b) * d + i] -= z[i] * os;
                }
            }
            RewardVariant::Wdiayn => {
                objective += dot(out.row(n + b), z);
                for i in 0..d {
                    og.data[(n + b) * d + i] -= z[i] * os;
                }
            }
            RewardVariant::Wcic => {
                let zs = zs_cic.as_ref().unwrap();
                let pn = out.row(n + b);
                let (score, weights) = contrastive_score(pn, z, zs);
                objective += score;
                for i in 0..d {
                    let mut g = z[i];
                    for (k, w) in weights.iter().enumerate() {
                        g -= w * zs.get(k, i);
                    }
                    og.data[(n + b) * d + i] -= g * os;
                }
            }
            RewardVariant::SquaredMetra | RewardVariant::SquaredMetraTelescoped => {
                if batch.terminal[b] {
                    let pn = out.row(n + b);
                    let p = dot(pn, z);
                    objective += p * p;
                    for i in 0..d {
                        og.data[(n + b) * d + i] -= 2.0 * p * z[i] * os;
                    }
                }
            }
            RewardVariant::WdmDual => {
                let pos = out.get(n + b, 0);
                let base = 2 * n + b * sample_rows;
                let neg: f64 = (0..sample_rows).map(|i| out.get(base + i, 0)).sum::<f64>()
                    / sample_rows as f64;
                objective += pos - neg;
                og.data[n + b] -= os;
                for i in 0..sample_rows {
                    og.data[base + i] += os / sample_rows as f64;
                }
            }
            RewardVariant::Wdads => unreachable!(),
        }
        // Lipschitz penalty on (s, s').
        let (head, tail) = og.data.split_at_mut((n + b) * d);
        let ga = &mut head[b * d..(b + 1) * d];
        let gb = &mut tail[..d];
        let (slack, violated) = penalty_pair(lag, out.row(b), out.row(n + b), ga, gb, inv_n);
        slack_sum += slack;
        violations += violated as usize;
    }

    let objective = objective * os;
    let mean_slack = slack_sum * inv_n;
    let loss = -(objective + lag.lambda * mean_slack);
    if !loss.is_finite() {
        return Err(Error::non_finite("representation loss"));
    }
    let (grads, _) = tape.backward(net, &og)?;
    Ok(RepLoss {
        loss,
        grads,
        objective,
        mean_slack,
        violation_rate: violations as f64 * inv_n,
    })
}

/// `(phi^T z - log mean_i exp(phi^T z_i), softmax weights over samples)`.
fn contrastive_score(phi: &[f64], z: &[f64], samples: &Matrix) -> (f64, Vec<f64>) {
    let logits: Vec<f64> = (0..samples.rows).map(|i| dot(phi, samples.row(i))).collect();
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let lme = m + (sum / samples.rows as f64).ln();
    (dot(phi, z) - lme, exps.iter().map(|e| e / sum).collect())
}

/// Multiplier update from a batch: `lambda <- max(0, lambda - step * mean(min(eps, 1 - |d|^2)))`.
pub fn lambda_update(
    lag: &LagrangeState,
    phi: &ReprFn,
    obs: &Matrix,
    next_obs: &Matrix,
    step_size: f64,
) -> Result<LagrangeState> {
    if obs.rows == 0 || obs.rows != next_obs.rows {
        return Err(Error::InvalidArgument("lambda update needs a non-empty paired batch".into()));
    }
    let a = phi.embed_batch(obs)?;
    let b = phi.embed_batch(next_obs)?;
    let mean = (0..a.rows).map(|i| lag.slack(sq_dist(a.row(i), b.row(i)))).sum::<f64>()
        / a.rows as f64;
    Ok(lag.step(mean, step_size))
}

/// Rewards for replayed transitions under the current representation.
pub fn batch_rewards(
    variant: RewardVariant,
    net: Option<&Mlp>,
    batch: &RepBatch,
    prior_samples: Option<&Matrix>,
) -> Result<Vec<f64>> {
    let n = batch.validate()?;
    let need_net = || net.ok_or_else(|| Error::InvalidArgument("variant needs a network".into()));
    let samples = || {
        prior_samples
            .filter(|m| m.rows > 0)
            .ok_or_else(|| Error::InvalidArgument("variant requires prior skill samples".into()))
    };
    Ok(match variant {
        RewardVariant::Metra => {
            let net = need_net()?;
            let a = net.predict(batch.obs)?;
            let b = net.predict(batch.next_obs)?;
            (0..n).map(|i| dot(b.row(i), batch.z.row(i)) - dot(a.row(i), batch.z.row(i))).collect()
        }
        RewardVariant::Wdiayn => {
            let b = need_net()?.predict(batch.next_obs)?;
            (0..n).map(|i| dot(b.row(i), batch.z.row(i))).collect()
        }
        RewardVariant::Wcic => {
            let b = need_net()?.predict(batch.next_obs)?;
            let zs = samples()?;
            (0..n).map(|i| contrastive_score(b.row(i), batch.z.row(i), zs).0).collect()
        }
        RewardVariant::SquaredMetra => {
            let b = need_net()?.predict(batch.next_obs)?;
            (0..n)
                .map(|i| {
                    if batch.terminal[i] {
                        dot(b.row(i), batch.z.row(i)).powi(2)
                    } else {
                        0.0
                    }
                })
                .collect()
        }
        RewardVariant::SquaredMetraTelescoped => {
            let net = need_net()?;
            let (a, b) = (net.predict(batch.obs)?, net.predict(batch.next_obs)?);
            (0..n)
                .map(|i| dot(b.row(i), batch.z.row(i)).powi(2) - dot(a.row(i), batch.z.row(i)).powi(2))
                .collect()
        }
        RewardVariant::Wdads => {
            let zs = samples()?;
            (0..n)
                .map(|i| {
                    let ds: Vec<f64> = batch
                        .next_obs
                        .row(i)
                        .iter()
                        .zip(batch.obs.row(i))
                        .map(|(a, b)| a - b)
                        .collect();
                    let sample_rows: Vec<&[f64]> = (0..zs.rows).map(|k| zs.row(k)).collect();
                    wdads_score(&ds, batch.z.row(i), &sample_rows)
                })
                .collect::<Result<Vec<f64>>>()?
        }
        RewardVariant::WdmDual => {
            let net = need_net()?;
            let zs = samples()?;
            let pos = net.predict(&batch.next_obs.hcat(batch.z)?)?;
            let mut rows = Vec::with_capacity(n * zs.rows);
            for b in 0..n {
                for k in 0..zs.rows {
                    let mut r = batch.next_obs.row(b).to_vec();
                    r.extend_from_slice(zs.row(k));
                    rows.push(r);
                }
            }
            let neg = net.predict(&Matrix::from_rows(&rows)?)?;
            (0..n)
                .map(|b| {
                    let mean: f64 =
                        (0..zs.rows).map(|k| neg.get(b * zs.rows + k, 0)).sum::<f64>() / zs.rows as f64;
                    pos.get(b, 0) - mean
                })
                .collect()
        }
    })
}

/// Centered score `f(s, z) - N^{-1} sum_i f(s, z_i)`.
pub fn wdm_dual_reward<F>(f: F, s: &[f64], z: &[f64], z_samples: &[Vec<f64>]) -> Result<f64>
where
    F: Fn(&[f64], &[f64]) -> f64,
{
    if z_samples.is_empty() {
        return Err(Error::InvalidArgument("need at least one prior sample".into()));
    }
    let mean = z_samples.iter().map(|zi| f(s, zi)).sum::<f64>() / z_samples.len() as f64;
    Ok(f(s, z) - mean)
}

/// `phi(s)^T z`.
pub fn wdiayn_reward(phi: &ReprFn, s: &[f64], z: &[f64]) -> Result<f64> {
    let p = phi.embed(s)?;
    if p.len() != z.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            got: z.len(),
            context: "skill vs representation",
        });
    }
    Ok(dot(&p, z))
}

fn wdads_score(ds: &[f64], psi_z: &[f64], psi_samples: &[&[f64]]) -> Result<f64> {
    if psi_samples.is_empty() {
        return Err(Error::InvalidArgument("need at least one prior sample".into()));
    }
    if ds.len() != psi_z.len() {
        return Err(Error::DimensionMismatch {
            expected: psi_z.len(),
            got: ds.len(),
            context: "displacement vs skill embedding",
        });
    }
    let mean = psi_samples.iter().map(|p| dot(ds, p)).sum::<f64>() / psi_samples.len() as f64;
    Ok(dot(ds, psi_z) - mean)
}

/// `(s' - s)^T psi(z) - L^{-1} sum_i (s' - s)^T psi(z_i)` on raw observations.
pub fn wdads_reward<P>(psi: P, s: &[f64], s_next: &[f64], z: &[f64], z_samples: &[Vec<f64>]) -> Result<f64>
where
    P: Fn(&[f64]) -> Vec<f64>,
{
    let ds: Vec<f64> = s_next.iter().zip(s).map(|(a, b)| a - b).collect();
    let pz = psi(z);
    let ps: Vec<Vec<f64>> = z_samples.iter().map(|zi| psi(zi)).collect();
    let refs: Vec<&[f64]> = ps.iter().map(Vec::as_slice).collect();
    wdads_score(&ds, &pz, &refs)
}

/// `phi(s)^T psi(z) - log L^{-1} sum_i exp(phi(s)^T psi(z_i))`, computed with a shifted log-sum-exp.
pub fn wcic_reward<P>(phi: &ReprFn, psi: P, s: &[f64], z: &[f64], z_samples: &[Vec<f64>]) -> Result<f64>
where
    P: Fn(&[f64]) -> Vec<f64>,
{
    if z_samples.is_empty() {
        return Err(Error::InvalidArgument("need at least one prior sample".into()));
    }
    let p = phi.embed(s)?;
    let rows: Vec<Vec<f64>> = z_samples.iter().map(|zi| psi(zi)).collect();
    let pz = psi(z);
    if pz.len() != p.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            got: pz.len(),
            context: "skill embedding vs representation",
        });
    }
    Ok(contrastive_score(&p, &pz, &Matrix::from_rows(&rows)?).0)
}

/// Linear-centered counterpart of [`wcic_reward`]; an upper bound on it by Jensen.
pub fn centered_inner_product<P>(phi: &ReprFn, psi: P, s: &[f64], z: &[f64], z_samples: &[Vec<f64>]) -> Result<f64>
where
    P: Fn(&[f64]) -> Vec<f64>,
{
    let p = phi.embed(s)?;
    wdm_dual_reward(|_, zz| dot(&p, &psi(zz)), s, z, z_samples)
}

pub fn prior_sample_matrix(prior: &SkillPrior, n: usize, rng: &mut dyn RngCore) -> Matrix {
    let rows: Vec<Vec<f64>> = (0..n).map(|_| prior.sample(rng).z).collect();
    if rows.is_empty() {
        return Matrix::zeros(0, prior.dim);
    }
    Matrix::from_rows(&rows).expect("uniform rows")
}
