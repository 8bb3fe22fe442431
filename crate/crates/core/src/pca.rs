//! Linear squared METRA on an ellipse of embeddings: closed-form value,
//! the PCA optimum, and a check of a trained run against both.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::{EnvSpec, TrainConfig};
use crate::env::rollout;
use crate::error::{Error, Result};
use crate::objective::{dot, RewardVariant};
use crate::trainer::{train, RunState};

const FEASIBILITY_SLACK: f64 = 1e-9;

/// The embedding set `{x : xᵀA⁻¹x ≤ 1}` and a latent dimension `d ≤ m`.
#[derive(Clone, Debug, PartialEq)]
pub struct EllipseSpec {
    a: DMatrix<f64>,
    d: usize,
}

impl EllipseSpec {
    pub fn new(a: DMatrix<f64>, d: usize) -> Result<Self> {
        let m = a.nrows();
        if m == 0 || a.ncols() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: a.ncols(),
                context: "ellipse shape must be square",
            });
        }
        if d == 0 || d > m {
            return Err(Error::InvalidArgument(format!("latent dimension {d} not in 1..={m}")));
        }
        if !a.iter().all(|v| v.is_finite()) {
            return Err(Error::non_finite("ellipse shape"));
        }
        let scale = a.amax().max(1.0);
        if (&a - a.transpose()).amax() > 1e-12 * scale {
            return Err(Error::NotPositiveDefinite);
        }
        if a.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite);
        }
        let spec = EllipseSpec { a, d };
        if spec.eigen()?.0.iter().any(|&l| l <= 0.0) {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(spec)
    }

    pub fn diagonal(values: &[f64], d: usize) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(values)), d)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Eigenvalues in descending order with matching eigenvector columns.
    pub fn eigen(&self) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let eig = SymmetricEigen::try_new(self.a.clone(), 1e-14, 10_000)
            .ok_or_else(|| Error::Numerical("symmetric eigen-solver did not converge".into()))?;
        let mut order: Vec<usize> = (0..self.m()).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = DMatrix::from_columns(&order.iter().map(|&i| eig.eigenvectors.column(i)).collect::<Vec<_>>());
        Ok((values, vectors))
    }

    /// Symmetric square root of `A`.
    pub fn sqrt(&self) -> Result<DMatrix<f64>> {
        let (values, vectors) = self.eigen()?;
        let root = DMatrix::from_diagonal(&DVector::from_iterator(values.len(), values.iter().map(|l| l.sqrt())));
        Ok(&vectors * root * vectors.transpose())
    }
}

/// `phi(s) = Wᵀ psi(s)` with `W` of shape `m × d` and operator norm at most one.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearRepr {
    w: DMatrix<f64>,
    op_norm: f64,
}

pub fn operator_norm(w: &DMatrix<f64>) -> f64 {
    if w.is_empty() {
        return 0.0;
    }
    w.singular_values().max()
}

impl LinearRepr {
    pub fn new(w: DMatrix<f64>) -> Result<Self> {
        if !w.iter().all(|v| v.is_finite()) {
            return Err(Error::non_finite("linear representation"));
        }
        let op_norm = operator_norm(&w);
        if op_norm > 1.0 + FEASIBILITY_SLACK {
            return Err(Error::Infeasible(op_norm));
        }
        Ok(LinearRepr { w, op_norm })
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn op_norm(&self) -> f64 {
        self.op_norm
    }

    pub fn embed(&self, psi: &[f64]) -> Result<Vec<f64>> {
        if psi.len() != self.w.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.w.nrows(),
                got: psi.len(),
                context: "embedding input",
            });
        }
        Ok((self.w.transpose() * DVector::from_column_slice(psi)).iter().copied().collect())
    }
}

fn check_rows(w: &LinearRepr, a: &DMatrix<f64>) -> Result<()> {
    if w.w.nrows() != a.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: w.w.nrows(),
            context: "representation rows vs ellipse dimension",
        });
    }
    Ok(())
}

/// `tr(W Wᵀ A)`, the best achievable `E[(phi(s_T)ᵀz)²]` for this `W` when `E[zzᵀ] = I`.
pub fn squared_metra_value(w: &LinearRepr, a: &DMatrix<f64>) -> Result<f64> {
    check_rows(w, a)?;
    Ok((w.w.transpose() * a * &w.w).trace())
}

/// Sample mean of `‖√A W z‖²` over standard Gaussian `z`.
pub fn monte_carlo_value(w: &LinearRepr, spec: &EllipseSpec, samples: usize, rng: &mut dyn RngCore) -> Result<f64> {
    check_rows(w, &spec.a)?;
    if samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let m = spec.sqrt()? * &w.w;
    let d = w.w.ncols();
    let mut total = 0.0;
    for _ in 0..samples {
        let z = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        total += (&m * z).norm_squared();
    }
    Ok(total / samples as f64)
}

/// Top-`d` eigenvectors of `A` and the sum of the top-`d` eigenvalues.
pub fn pca_optimum(spec: &EllipseSpec) -> Result<(LinearRepr, f64)> {
    let (values, vectors) = spec.eigen()?;
    let w = vectors.columns(0, spec.d).into_owned();
    let value = values[..spec.d].iter().sum();
    Ok((LinearRepr::new(w)?, value))
}

/// Random orthonormal columns, each scaled by an independent uniform factor in `[0, 1]`.
pub fn random_feasible(m: usize, d: usize, rng: &mut dyn RngCore) -> Result<LinearRepr> {
    if d == 0 || d > m {
        return Err(Error::InvalidArgument(format!("latent dimension {d} not in 1..={m}")));
    }
    let g = DMatrix::from_iterator(m, d, (0..m * d).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let mut q = g.qr().q();
    for mut c in q.column_iter_mut() {
        c *= rng.random::<f64>();
    }
    LinearRepr::new(q)
}

/// Random symmetric positive-definite matrix with a well-separated spectrum floor.
pub fn random_spd(m: usize, rng: &mut dyn RngCore) -> DMatrix<f64> {
    let g = DMatrix::from_iterator(m, m, (0..m * m).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let a = &g * g.transpose() + DMatrix::identity(m, m) * 0.1;
    (&a + a.transpose()) * 0.5
}

/// Principal angles in degrees between the column spans of `u` and `v`, ascending.
pub fn principal_angles_deg(u: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<Vec<f64>> {
    if u.nrows() != v.nrows() {
        return Err(Error::DimensionMismatch {
            expected: u.nrows(),
            got: v.nrows(),
            context: "principal angles need a common ambient space",
        });
    }
    let orth = |x: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        if x.ncols() == 0 || x.norm() == 0.0 {
            return Err(Error::InvalidArgument("subspace basis is empty".into()));
        }
        Ok(x.clone().qr().q().columns(0, x.ncols()).into_owned())
    };
    let s = (orth(u)?.transpose() * orth(v)?).singular_values();
    let mut angles: Vec<f64> = s.iter().map(|c| c.clamp(-1.0, 1.0).acos().to_degrees()).collect();
    angles.sort_by(f64::total_cmp);
    Ok(angles)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipseReport {
    pub eigvals: Vec<f64>,
    pub achieved_value: f64,
    pub analytic_value: f64,
    pub principal_angles_deg: Vec<f64>,
}

/// Weight matrix of a single bias-free linear layer, in state units of the ellipse.
///
/// The trained map is Lipschitz in environment steps, so one step of length
/// `step_size` moves it by at most one; multiplying by `step_size` gives the
/// matrix the optimum is stated for.
pub fn trained_linear_map(run: &RunState) -> Result<DMatrix<f64>> {
    let pm = run
        .mdp
        .as_point_mass()
        .ok_or_else(|| Error::InvalidArgument("ellipse check needs a point-mass environment".into()))?;
    let phi = run
        .phi()
        .ok_or_else(|| Error::InvalidArgument("run has no state representation".into()))?;
    let net = &phi.net;
    if net.layers.len() != 1 || net.layers[0].bias.is_some() {
        return Err(Error::InvalidArgument(
            "ellipse check needs a single bias-free linear layer".into(),
        ));
    }
    let layer = &net.layers[0];
    if run.mdp.obs_dim() != pm.dim() {
        return Err(Error::InvalidArgument("ellipse check needs raw coordinates".into()));
    }
    let step = pm.step_size();
    Ok(DMatrix::from_fn(layer.in_dim, layer.out_dim, |i, j| {
        layer.weight[j * layer.in_dim + i] * step
    }))
}

/// Mean `(phi(s_T)ᵀz)²` in state units over greedy rollouts, normalized to `E[zzᵀ] = I`.
pub fn achieved_value(run: &RunState, n_skills: usize) -> Result<f64> {
    let pm = run
        .mdp
        .as_point_mass()
        .ok_or_else(|| Error::InvalidArgument("ellipse check needs a point-mass environment".into()))?;
    let phi = run
        .phi()
        .ok_or_else(|| Error::InvalidArgument("run has no state representation".into()))?;
    let skills = run.prior.evenly_spaced(n_skills.max(1));
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    let mut total = 0.0;
    for skill in &skills {
        let traj = rollout(&run.mdp, &run.sac.policy, skill, false, &mut rng)?;
        let last = traj.observations.last().expect("rollout includes its start");
        let z2: f64 = skill.z.iter().map(|v| v * v).sum();
        let proj = dot(&phi.embed(last)?, &skill.z);
        total += proj * proj * run.prior.dim as f64 / z2;
    }
    Ok(total / skills.len() as f64 * pm.step_size().powi(2))
}

pub fn ellipse_report(spec: &EllipseSpec, run: &RunState) -> Result<EllipseReport> {
    let (w_star, analytic_value) = pca_optimum(spec)?;
    let w = trained_linear_map(run)?;
    if w.nrows() != spec.m() {
        return Err(Error::DimensionMismatch {
            expected: spec.m(),
            got: w.nrows(),
            context: "trained map vs ellipse dimension",
        });
    }
    Ok(EllipseReport {
        eigvals: spec.eigen()?.0,
        achieved_value: achieved_value(run, 16)?,
        analytic_value,
        principal_angles_deg: principal_angles_deg(&w, w_star.w())?,
    })
}

/// Trains on the ellipse point mass with a linear squared-reward representation
/// and compares the result with the PCA optimum.
pub fn end_to_end_ellipse_check(spec: &EllipseSpec, config: &TrainConfig) -> Result<(EllipseReport, RunState)> {
    match &config.env {
        EnvSpec::PointMass { shape, .. } => {
            let a = spec.a();
            let matches = shape.len() == spec.m()
                && shape
                    .iter()
                    .enumerate()
                    .all(|(i, r)| r.len() == spec.m() && r.iter().enumerate().all(|(j, v)| *v == a[(i, j)]));
            if !matches {
                return Err(Error::InvalidArgument("environment shape differs from the ellipse".into()));
            }
        }
        EnvSpec::Grid { .. } => return Err(Error::InvalidArgument("ellipse check needs a point-mass environment".into())),
    }
    if !matches!(
        config.train.variant,
        RewardVariant::SquaredMetra | RewardVariant::SquaredMetraTelescoped
    )
        || !config.train.phi_hidden.is_empty()
        || config.train.phi_bias
        || config.skill.dim != spec.d()
    {
        return Err(Error::InvalidArgument(
            "ellipse check needs the squared variant with a bias-free linear map of matching dimension".into(),
        ));
    }
    let run = train(config)?;
    Ok((ellipse_report(spec, &run)?, run))
}

/// Distance from the origin of the ellipse boundary along `dir`.
pub fn boundary_radius(spec: &EllipseSpec, dir: &[f64]) -> Result<f64> {
    let v = DVector::from_column_slice(dir);
    let inv = spec
        .a
        .clone()
        .try_inverse()
        .ok_or(Error::NotPositiveDefinite)?;
    let q = (v.transpose() * inv * &v)[(0, 0)];
    Ok((v.norm_squared() / q).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_map_has_zero_value() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 2.0]));
        let w = LinearRepr::new(DMatrix::zeros(2, 1)).unwrap();
        assert_eq!(squared_metra_value(&w, &a).unwrap(), 0.0);
    }

    #[test]
    fn identity_map_gives_trace() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 2.0, 0.5]));
        let w = LinearRepr::new(DMatrix::identity(3, 3)).unwrap();
        assert!((squared_metra_value(&w, &a).unwrap() - 5.5).abs() < 1e-15);
    }

    #[test]
    fn diagonal_optimum_picks_largest_axis() {
        let spec = EllipseSpec::diagonal(&[4.0, 1.0], 1).unwrap();
        let (w, v) = pca_optimum(&spec).unwrap();
        assert!((v - 4.0).abs() < 1e-12);
        assert!((w.w()[(0, 0)].abs() - 1.0).abs() < 1e-12);
        assert!(w.w()[(1, 0)].abs() < 1e-12);
    }

    #[test]
    fn isotropic_value_is_d() {
        let spec = EllipseSpec::new(DMatrix::identity(4, 4), 2).unwrap();
        let (w, v) = pca_optimum(&spec).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
        assert!((w.w().transpose() * w.w() - DMatrix::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn rejects_non_spd_and_infeasible() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(EllipseSpec::new(bad, 1), Err(Error::NotPositiveDefinite)));
        let asym = DMatrix::from_row_slice(2, 2, &[2.0, 0.1, 0.0, 2.0]);
        assert!(matches!(EllipseSpec::new(asym, 1), Err(Error::NotPositiveDefinite)));
        assert!(matches!(
            LinearRepr::new(DMatrix::identity(2, 1) * 1.01),
            Err(Error::Infeasible(_))
        ));
        assert!(LinearRepr::new(DMatrix::identity(2, 1) * (1.0 + 1e-10)).is_ok());
    }

    #[test]
    fn principal_angle_of_rotated_line() {
        let u = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let t = 30f64.to_radians();
        let v = DMatrix::from_column_slice(2, 1, &[t.cos(), -t.sin()]);
        let a = principal_angles_deg(&u, &v).unwrap();
        assert!((a[0] - 30.0).abs() < 1e-9);
        let full = principal_angles_deg(&DMatrix::identity(3, 3), &random_spd(3, &mut ChaCha8Rng::seed_from_u64(1))).unwrap();
        assert!(full.iter().all(|x| x.abs() < 1e-6));
    }

    #[test]
    fn random_feasible_respects_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let w = random_feasible(5, 3, &mut rng).unwrap();
            assert!(w.op_norm() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn square_root_squares_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let spec = EllipseSpec::new(random_spd(4, &mut rng), 2).unwrap();
        let r = spec.sqrt().unwrap();
        assert!((&r * &r - spec.a()).amax() < 1e-10);
    }

    #[test]
    fn boundary_of_diagonal_ellipse() {
        let spec = EllipseSpec::diagonal(&[4.0, 1.0], 1).unwrap();
        assert!((boundary_radius(&spec, &[1.0, 0.0]).unwrap() - 2.0).abs() < 1e-12);
        assert!((boundary_radius(&spec, &[0.0, 3.0]).unwrap() - 1.0).abs() < 1e-12);
    }
}
