// Helpers shared by the gradient and acceptance targets.
#![allow(dead_code)]

use metra::nn::{Matrix, Mlp};
use metra::objective::{representation_loss, LagrangeState, RepBatch, RewardVariant};
use metra::policy::{categorical_actor_loss, critic_loss, gaussian_actor_loss, ActionBatch};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Small enough that the O(h^2) truncation term is negligible, large enough that
// roundoff on O(10) loss values does not swamp O(1e-3) gradient entries.
pub const H: f64 = 1e-4;
pub const REL_TOL: f64 = 1e-4;

pub const LEARNED_VARIANTS: [RewardVariant; 6] = [
    RewardVariant::Metra,
    RewardVariant::WdmDual,
    RewardVariant::Wdiayn,
    RewardVariant::Wcic,
    RewardVariant::SquaredMetra,
    RewardVariant::SquaredMetraTelescoped,
];

pub fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

pub fn unit_rows(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let mut m = random_matrix(rows, cols, 1.0, rng);
    for r in 0..rows {
        let n = m.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
        m.row_mut(r).iter_mut().for_each(|v| *v /= n);
    }
    m
}

/// Worst relative error between central differences of `loss` and `analytic`.
/// The denominator is floored at `1e-4` so near-zero entries compare absolutely.
pub fn fd_error<F: Fn(&Mlp) -> f64>(net: &Mlp, analytic: &[f64], loss: F) -> f64 {
    let base = net.flat();
    let manifest = net.manifest();
    assert_eq!(base.len(), analytic.len(), "gradient length");
    let mut worst = 0.0f64;
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] += H;
        let up = loss(&Mlp::from_flat(&manifest, &p).unwrap());
        p[i] -= 2.0 * H;
        let dn = loss(&Mlp::from_flat(&manifest, &p).unwrap());
        let fd = (up - dn) / (2.0 * H);
        let err = (fd - analytic[i]).abs() / fd.abs().max(analytic[i].abs()).max(1e-4);
        worst = worst.max(err);
    }
    if analytic.iter().all(|g| g.abs() <= 1e-12) {
        return f64::INFINITY;
    }
    worst
}

pub struct RepCase {
    pub obs: Matrix,
    pub next: Matrix,
    pub z: Matrix,
    pub terminal: Vec<bool>,
    pub prior: Matrix,
    pub net: Mlp,
    pub lag: LagrangeState,
}

/// Distance of the closest pair to the kink of `min(eps, 1 - d2)`.
fn kink_margin(variant: RewardVariant, c: &RepCase) -> f64 {
    let (a, b) = if variant.conditions_on_skill() {
        (
            c.net.predict(&c.obs.hcat(&c.z).unwrap()).unwrap(),
            c.net.predict(&c.next.hcat(&c.z).unwrap()).unwrap(),
        )
    } else {
        (c.net.predict(&c.obs).unwrap(), c.net.predict(&c.next).unwrap())
    };
    (0..a.rows)
        .map(|i| {
            let d2: f64 = a.row(i).iter().zip(b.row(i)).map(|(x, y)| (x - y) * (x - y)).sum();
            (1.0 - d2 - c.lag.epsilon).abs()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Random batch and network; `spread` scales the observations and so how many
/// pairs land past the unit-distance boundary. Draws that put a pair within
/// 1e-2 of the penalty's kink are redrawn, since a difference step there
/// straddles a point with no derivative.
pub fn rep_case(variant: RewardVariant, seed: u64, spread: f64) -> RepCase {
    (0..)
        .map(|k| rep_case_raw(variant, seed.wrapping_mul(1000).wrapping_add(k), spread))
        .find(|c| kink_margin(variant, c) >= 1e-2)
        .unwrap()
}

fn rep_case_raw(variant: RewardVariant, seed: u64, spread: f64) -> RepCase {
    let (obs_dim, z_dim, n) = (3, 2, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let in_dim = if variant.conditions_on_skill() { obs_dim + z_dim } else { obs_dim };
    let out_dim = if variant.conditions_on_skill() { 1 } else { z_dim };
    RepCase {
        obs: random_matrix(n, obs_dim, spread, &mut rng),
        next: random_matrix(n, obs_dim, spread, &mut rng),
        z: unit_rows(n, z_dim, &mut rng),
        terminal: (0..n).map(|i| i % 3 == 2).collect(),
        prior: unit_rows(5, z_dim, &mut rng),
        net: Mlp::new(&[in_dim, 7, out_dim], true, &mut rng).unwrap(),
        lag: LagrangeState::new(rng.random_range(0.5..30.0), 1e-3).unwrap(),
    }
}

/// Returns `(worst relative error, mean slack)`.
pub fn representation_fd(variant: RewardVariant, seed: u64, spread: f64, scale: f64) -> (f64, f64) {
    let c = rep_case(variant, seed, spread);
    let batch = RepBatch { obs: &c.obs, next_obs: &c.next, z: &c.z, terminal: &c.terminal };
    let prior = variant.needs_prior_samples().then_some(&c.prior);
    let base = representation_loss(variant, &c.net, &c.lag, &batch, prior, scale).unwrap();
    let err = fd_error(&c.net, &base.grads.flatten(), |m| {
        representation_loss(variant, m, &c.lag, &batch, prior, scale).unwrap().loss
    });
    (err, base.mean_slack)
}

pub fn critic_fd(seed: u64, discrete: bool) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input = random_matrix(6, 4, 1.0, &mut rng);
    let targets: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
    let (q, acts) = if discrete {
        let q = Mlp::new(&[4, 8, 5], true, &mut rng).unwrap();
        (q, ActionBatch::Discrete((0..6).map(|_| rng.random_range(0..5)).collect()))
    } else {
        let q = Mlp::new(&[6, 8, 1], true, &mut rng).unwrap();
        (q, ActionBatch::Continuous(random_matrix(6, 2, 0.9, &mut rng)))
    };
    let (_, g) = critic_loss(&q, &input, &acts, &targets).unwrap();
    fd_error(&q, &g.flatten(), |m| critic_loss(m, &input, &acts, &targets).unwrap().0)
}

pub fn categorical_actor_fd(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input = random_matrix(5, 4, 1.0, &mut rng);
    let actor = Mlp::new(&[4, 8, 5], true, &mut rng).unwrap();
    let q = [
        Mlp::new(&[4, 8, 5], true, &mut rng).unwrap(),
        Mlp::new(&[4, 8, 5], true, &mut rng).unwrap(),
    ];
    let alpha = rng.random_range(0.0..1.0);
    let (_, g) = categorical_actor_loss(&actor, &q, &input, alpha).unwrap();
    fd_error(&actor, &g.flatten(), |m| categorical_actor_loss(m, &q, &input, alpha).unwrap().0.loss)
}

pub fn gaussian_actor_fd(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input = random_matrix(5, 4, 1.0, &mut rng);
    let noise = random_matrix(5, 2, 1.5, &mut rng);
    let actor = Mlp::new(&[4, 8, 4], true, &mut rng).unwrap();
    let q = [
        Mlp::new(&[6, 8, 1], true, &mut rng).unwrap(),
        Mlp::new(&[6, 8, 1], true, &mut rng).unwrap(),
    ];
    let alpha = rng.random_range(0.0..0.5);
    let (_, g) = gaussian_actor_loss(&actor, &q, &input, &noise, alpha).unwrap();
    fd_error(&actor, &g.flatten(), |m| {
        gaussian_actor_loss(m, &q, &input, &noise, alpha).unwrap().0.loss
    })
}

/// The multiplier loss `lambda * mean_slack` is linear in `lambda`; compare its
/// central difference with the slack the update steps along.
pub fn lambda_fd(seed: u64) -> f64 {
    let c = rep_case(RewardVariant::Metra, seed, 2.0);
    let batch = RepBatch { obs: &c.obs, next_obs: &c.next, z: &c.z, terminal: &c.terminal };
    let ms = representation_loss(RewardVariant::Metra, &c.net, &c.lag, &batch, None, 1.0).unwrap().mean_slack;
    let at = |l: f64| LagrangeState::new(l, c.lag.epsilon).unwrap().loss(ms);
    let h = 1e-4;
    let fd = (at(c.lag.lambda + h) - at(c.lag.lambda - h)) / (2.0 * h);
    let step = c.lag.step(ms, 0.5);
    let stepped = (c.lag.lambda - 0.5 * fd).max(0.0);
    let err_step = (step.lambda - stepped).abs() / stepped.abs().max(1e-4);
    ((fd - ms).abs() / fd.abs().max(ms.abs()).max(1e-4)).max(err_step)
}
