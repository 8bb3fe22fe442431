//! Run configuration: TOML text with `[env]`, `[skill]`, `[train]`, `[sac]`, `[eval]` sections.

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::env::{EncodingSpec, GridWorld, Mdp, PointMass};
use crate::error::{Error, Result};
use crate::objective::{RewardVariant, SkillKind, SkillPrior};
use crate::policy::SacConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnvSpec {
    Grid {
        /// ASCII map; when absent an open `width x height` grid is used.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        map: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        width: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        height: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        start: Option<[usize; 2]>,
        horizon: usize,
        #[serde(default)]
        encoding: EncodingSpec,
    },
    PointMass {
        /// Rows of the symmetric positive-definite shape matrix.
        shape: Vec<Vec<f64>>,
        step_size: f64,
        horizon: usize,
        #[serde(default)]
        encoding: EncodingSpec,
    },
}

impl EnvSpec {
    pub fn build(&self) -> Result<Mdp> {
        match self {
            EnvSpec::Grid {
                map,
                width,
                height,
                start,
                horizon,
                encoding,
            } => {
                let grid = match (map, width, height) {
                    (Some(m), None, None) => {
                        let g = GridWorld::from_ascii(m)?;
                        match start {
                            Some([x, y]) => GridWorld::with_start(
                                g.width(),
                                g.height(),
                                g.walls().clone(),
                                g.doors().clone(),
                                (*x, *y),
                            )?,
                            None => g,
                        }
                    }
                    (None, Some(w), Some(h)) => match start {
                        Some([x, y]) => GridWorld::with_start(*w, *h, BTreeSet::new(), BTreeSet::new(), (*x, *y))?,
                        None => GridWorld::new(*w, *h, BTreeSet::new(), BTreeSet::new())?,
                    },
                    _ => {
                        return Err(Error::Config(
                            "env: give either `map` or both `width` and `height`".into(),
                        ))
                    }
                };
                Mdp::grid(grid, *horizon, encoding.clone())
            }
            EnvSpec::PointMass {
                shape,
                step_size,
                horizon,
                encoding,
            } => {
                let m = shape.len();
                if m == 0 || shape.iter().any(|r| r.len() != m) {
                    return Err(Error::Config("env.shape must be a non-empty square matrix".into()));
                }
                let a = DMatrix::from_row_iterator(m, m, shape.iter().flatten().copied());
                Mdp::point_mass(PointMass::new(a, *step_size)?, *horizon, encoding.clone())
            }
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            EnvSpec::Grid { horizon, .. } | EnvSpec::PointMass { horizon, .. } => *horizon,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainParams {
    pub seed: u64,
    pub epochs: usize,
    pub episodes_per_epoch: usize,
    pub grad_steps_per_epoch: usize,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub phi_lr: f64,
    /// Plain projected-gradient step size for the multiplier.
    pub lambda_lr: f64,
    pub epsilon: f64,
    pub initial_lambda: f64,
    pub variant: RewardVariant,
    /// Prior draws per gradient step for the centered and contrastive variants.
    pub prior_samples: usize,
    pub phi_hidden: Vec<usize>,
    pub phi_bias: bool,
    /// Multiplies the representation objective and the policy reward.
    pub reward_scale: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            seed: 0,
            epochs: 300,
            episodes_per_epoch: 8,
            grad_steps_per_epoch: 50,
            batch_size: 256,
            buffer_capacity: 100_000,
            phi_lr: 1e-4,
            lambda_lr: 1e-4,
            epsilon: 1e-3,
            initial_lambda: 30.0,
            variant: RewardVariant::Metra,
            prior_samples: 8,
            phi_hidden: vec![64, 64],
            phi_bias: true,
            reward_scale: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalParams {
    /// Policy coverage is measured every `every` epochs and after the last one; 0 disables it.
    pub every: usize,
    pub n_skills: usize,
    /// Draw fresh evaluation skills at each evaluation instead of a fixed per-run set.
    pub resample_skills: bool,
    /// Trajectories kept for queue coverage.
    pub queue_window: usize,
    pub landmarks: Vec<[usize; 2]>,
    /// Success radius in temporal steps; defaults to 0 on grids and 2 on point masses.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub goal_radius: Option<f64>,
    /// Step budget for goal reaching; defaults to the environment horizon.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reach_steps: Option<usize>,
    pub recompute_every: usize,
}

impl Default for EvalParams {
    fn default() -> Self {
        EvalParams {
            every: 10,
            n_skills: 48,
            resample_skills: false,
            queue_window: 100,
            landmarks: Vec::new(),
            goal_radius: None,
            reach_steps: None,
            recompute_every: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub env: EnvSpec,
    pub skill: SkillPrior,
    #[serde(default)]
    pub train: TrainParams,
    #[serde(default)]
    pub sac: SacConfig,
    #[serde(default)]
    pub eval: EvalParams,
}

impl TrainConfig {
    /// Open grid with the default optimizer settings.
    pub fn grid(width: usize, height: usize, horizon: usize) -> Self {
        TrainConfig {
            env: EnvSpec::Grid {
                map: None,
                width: Some(width),
                height: Some(height),
                start: None,
                horizon,
                encoding: EncodingSpec::RawCoordinates,
            },
            skill: SkillPrior {
                kind: SkillKind::Continuous,
                dim: 2,
            },
            train: TrainParams::default(),
            sac: SacConfig::default(),
            eval: EvalParams::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
        cfg.validate().map_err(|e| match e {
            Error::Config(msg) => Error::Config(anchor(text, &msg)),
            other => other,
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.train;
        let positive = [
            ("train.epochs", t.epochs.max(1)),
            ("train.episodes_per_epoch", t.episodes_per_epoch),
            ("train.grad_steps_per_epoch", t.grad_steps_per_epoch),
            ("train.batch_size", t.batch_size),
            ("train.buffer_capacity", t.buffer_capacity),
            ("env.horizon", self.env.horizon()),
            ("skill.dim", self.skill.dim),
            ("eval.n_skills", self.eval.n_skills),
            ("eval.recompute_every", self.eval.recompute_every),
            ("eval.queue_window", self.eval.queue_window),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        for (name, v) in [
            ("train.phi_lr", t.phi_lr),
            ("train.lambda_lr", t.lambda_lr),
            ("train.epsilon", t.epsilon),
            ("train.reward_scale", t.reward_scale),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive and finite")));
            }
        }
        if !(t.initial_lambda >= 0.0 && t.initial_lambda.is_finite()) {
            return Err(Error::Config("train.initial_lambda must be non-negative".into()));
        }
        if t.variant.needs_prior_samples() && t.prior_samples == 0 {
            return Err(Error::Config("train.prior_samples must be positive for this variant".into()));
        }
        self.sac.validate()?;
        let mdp = self.env.build().map_err(|e| match e {
            Error::Config(m) => Error::Config(m),
            other => Error::Config(format!("env: {other}")),
        })?;
        if t.variant == RewardVariant::Wdads && mdp.obs_dim() != self.skill.dim {
            return Err(Error::Config(format!(
                "train.variant: wdads needs observation dimension {} to equal skill.dim {}",
                mdp.obs_dim(),
                self.skill.dim
            )));
        }
        if let Some(g) = mdp.as_grid() {
            for [x, y] in &self.eval.landmarks {
                if g.cell_index((*x, *y)).is_none() {
                    return Err(Error::Config(format!("eval.landmarks: ({x}, {y}) is not a free cell")));
                }
            }
        }
        Ok(())
    }
}

/// Prefixes a validation message with the line of the key it names.
fn anchor(text: &str, msg: &str) -> String {
    let key = msg
        .split(|c: char| c.is_whitespace() || c == ':')
        .next()
        .unwrap_or("")
        .rsplit('.')
        .next()
        .unwrap_or("");
    if key.is_empty() {
        return msg.to_string();
    }
    for (i, line) in text.lines().enumerate() {
        let l = line.trim_start();
        if l.starts_with(key) && l[key.len()..].trim_start().starts_with('=') {
            return format!("line {}: {msg}", i + 1);
        }
    }
    msg.to_string()
}
