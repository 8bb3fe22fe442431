//! On-disk run state. Parameters are stored as little-endian f32 (they are
//! kept f32-exact in memory), everything else that feeds the dynamics is
//! stored bit-exactly so a resumed run continues identically.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::env::{Action, ActionSpace};
use crate::error::{Error, Result};
use crate::eval::CoverageTracker;
use crate::nn::{load_mlp, save_mlp, AdamState};
use crate::objective::ReprFn;
use crate::policy::{ReplayBuffer, Transition};
use crate::trainer::{Counters, EpochMetrics, RunState};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct RngState {
    seed: String,
    stream: u64,
    word_pos: String,
}

impl RngState {
    fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: rng.get_seed().iter().map(|b| format!("{b:02x}")).collect(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    fn restore(&self) -> Result<ChaCha8Rng> {
        use rand::SeedableRng;
        let bad = || Error::Checkpoint("malformed generator state".into());
        if self.seed.len() != 64 {
            return Err(bad());
        }
        let mut seed = [0u8; 32];
        for (i, b) in seed.iter_mut().enumerate() {
            *b = u8::from_str_radix(&self.seed[2 * i..2 * i + 2], 16).map_err(|_| bad())?;
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos.parse().map_err(|_| bad())?);
        Ok(rng)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct BufferLayout {
    capacity: usize,
    len: usize,
    head: usize,
    obs_dim: usize,
    latent_dim: usize,
    action_width: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct StateFile {
    format_version: u32,
    epoch: usize,
    lambda_bits: u64,
    epsilon_bits: u64,
    log_alpha_bits: u64,
    adam_steps: Vec<(String, u64)>,
    counters: Counters,
    rng: RngState,
    coverage: CoverageTracker,
    buffer: BufferLayout,
}

fn write_f64_le(path: &Path, values: impl IntoIterator<Item = f64>) -> Result<()> {
    let mut bytes = Vec::new();
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn read_f64_le(path: &Path) -> Result<Vec<f64>> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Checkpoint(format!("{}: truncated", path.display())));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn save_adam(opt: &AdamState, dir: &Path, name: &str) -> Result<Vec<PathBuf>> {
    let m = dir.join(format!("{name}.m.bin"));
    let v = dir.join(format!("{name}.v.bin"));
    write_f64_le(&m, opt.m.iter().flatten().copied())?;
    write_f64_le(&v, opt.v.iter().flatten().copied())?;
    Ok(vec![m, v])
}

fn load_adam(opt: &mut AdamState, dir: &Path, name: &str, step: u64) -> Result<()> {
    for (moments, suffix) in [(&mut opt.m, "m"), (&mut opt.v, "v")] {
        let flat = read_f64_le(&dir.join(format!("{name}.{suffix}.bin")))?;
        let expected: usize = moments.iter().map(Vec::len).sum();
        if flat.len() != expected {
            return Err(Error::Checkpoint(format!(
                "optimizer {name}: expected {expected} moments, found {}",
                flat.len()
            )));
        }
        let mut off = 0;
        for t in moments.iter_mut() {
            let n = t.len();
            t.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
    }
    opt.step = step;
    Ok(())
}

fn action_width(space: ActionSpace) -> usize {
    match space {
        ActionSpace::Discrete(_) => 1,
        ActionSpace::Box(d) => d,
    }
}

fn encode_buffer(items: &[Transition]) -> Vec<f64> {
    let mut out = Vec::new();
    for t in items {
        out.extend_from_slice(&t.obs);
        out.extend_from_slice(&t.z);
        match &t.action {
            Action::Discrete(a) => out.push(*a as f64),
            Action::Continuous(a) => out.extend_from_slice(a),
        }
        out.extend_from_slice(&t.next_obs);
        out.push(if t.terminal { 1.0 } else { 0.0 });
    }
    out
}

fn decode_buffer(flat: &[f64], layout: &BufferLayout, space: ActionSpace) -> Result<Vec<Transition>> {
    let w = 2 * layout.obs_dim + layout.latent_dim + layout.action_width + 1;
    if flat.len() != w * layout.len {
        return Err(Error::Checkpoint(format!(
            "replay buffer: expected {} values, found {}",
            w * layout.len,
            flat.len()
        )));
    }
    let (o, l, a) = (layout.obs_dim, layout.latent_dim, layout.action_width);
    Ok(flat
        .chunks_exact(w)
        .map(|r| Transition {
            obs: r[..o].to_vec(),
            z: r[o..o + l].to_vec(),
            action: match space {
                ActionSpace::Discrete(_) => Action::Discrete(r[o + l] as usize),
                ActionSpace::Box(_) => Action::Continuous(r[o + l..o + l + a].to_vec()),
            },
            next_obs: r[o + l + a..o + l + a + o].to_vec(),
            terminal: r[w - 1] != 0.0,
        })
        .collect())
}

const NETS: [&str; 5] = ["actor", "q0", "q1", "q0_target", "q1_target"];

/// Writes the full run state under `dir` and returns the files written.
pub fn save(state: &RunState, dir: &Path) -> Result<Vec<PathBuf>> {
    let params = dir.join("params");
    let optim = dir.join("optim");
    fs::create_dir_all(&params)?;
    fs::create_dir_all(&optim)?;
    let mut files = Vec::new();

    let config = dir.join("config.json");
    fs::write(&config, serde_json::to_string_pretty(&state.config)?)?;
    files.push(config);

    let sac = &state.sac;
    let nets = [
        &sac.policy.actor,
        &sac.critic.q[0],
        &sac.critic.q[1],
        &sac.critic.target[0],
        &sac.critic.target[1],
    ];
    for (net, name) in nets.into_iter().zip(NETS) {
        files.extend(save_mlp(net, &params, name)?);
    }
    let mut adam_steps = vec![
        ("actor".to_string(), sac.actor_opt.step),
        ("q0".to_string(), sac.critic_opt[0].step),
        ("q1".to_string(), sac.critic_opt[1].step),
        ("alpha".to_string(), sac.alpha_opt.step),
    ];
    files.extend(save_adam(&sac.actor_opt, &optim, "actor")?);
    files.extend(save_adam(&sac.critic_opt[0], &optim, "q0")?);
    files.extend(save_adam(&sac.critic_opt[1], &optim, "q1")?);
    files.extend(save_adam(&sac.alpha_opt, &optim, "alpha")?);
    if let (Some(repr), Some(opt)) = (&state.repr, &state.repr_opt) {
        files.extend(save_mlp(&repr.net, &params, "phi")?);
        files.extend(save_adam(opt, &optim, "phi")?);
        adam_steps.push(("phi".to_string(), opt.step));
    }

    let (items, head) = state.buffer.parts();
    let buffer = dir.join("buffer.bin");
    write_f64_le(&buffer, encode_buffer(items))?;
    files.push(buffer);

    let metrics = dir.join("metrics.jsonl");
    fs::write(&metrics, crate::trainer::metrics_jsonl(&state.metrics))?;
    files.push(metrics);

    let file = StateFile {
        format_version: FORMAT_VERSION,
        epoch: state.epoch,
        lambda_bits: state.lagrange.lambda.to_bits(),
        epsilon_bits: state.lagrange.epsilon.to_bits(),
        log_alpha_bits: sac.log_alpha.to_bits(),
        adam_steps,
        counters: state.counters,
        rng: RngState::capture(&state.rng),
        coverage: state.coverage.clone(),
        buffer: BufferLayout {
            capacity: state.buffer.capacity(),
            len: items.len(),
            head,
            obs_dim: state.mdp.obs_dim(),
            latent_dim: state.prior.dim,
            action_width: action_width(state.mdp.action_space()),
        },
    };
    let path = dir.join("state.json");
    fs::write(&path, serde_json::to_string_pretty(&file)?)?;
    files.push(path);
    Ok(files)
}

/// Restores a run written by [`save`].
pub fn load(dir: &Path) -> Result<RunState> {
    let missing = |what: &str| Error::Checkpoint(format!("{}: missing {what}", dir.display()));
    if !dir.join("state.json").is_file() {
        return Err(missing("state.json"));
    }
    let config: TrainConfig = serde_json::from_str(&fs::read_to_string(dir.join("config.json"))?)?;
    let file: StateFile = serde_json::from_str(&fs::read_to_string(dir.join("state.json"))?)?;
    if file.format_version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint format {}",
            file.format_version
        )));
    }
    let mut state = RunState::init(&config)?;
    let params = dir.join("params");
    let optim = dir.join("optim");
    let step = |name: &str| {
        file.adam_steps
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, s)| *s)
            .ok_or_else(|| missing(&format!("optimizer step for {name}")))
    };

    let replace = |slot: &mut crate::nn::Mlp, name: &str| -> Result<()> {
        let net = load_mlp(&params, name)?;
        if net.manifest() != slot.manifest() {
            return Err(Error::Checkpoint(format!("{name}: architecture does not match config")));
        }
        *slot = net;
        Ok(())
    };
    let sac = &mut state.sac;
    replace(&mut sac.policy.actor, "actor")?;
    replace(&mut sac.critic.q[0], "q0")?;
    replace(&mut sac.critic.q[1], "q1")?;
    replace(&mut sac.critic.target[0], "q0_target")?;
    replace(&mut sac.critic.target[1], "q1_target")?;
    load_adam(&mut sac.actor_opt, &optim, "actor", step("actor")?)?;
    load_adam(&mut sac.critic_opt[0], &optim, "q0", step("q0")?)?;
    load_adam(&mut sac.critic_opt[1], &optim, "q1", step("q1")?)?;
    load_adam(&mut sac.alpha_opt, &optim, "alpha", step("alpha")?)?;
    sac.log_alpha = f64::from_bits(file.log_alpha_bits);
    if let Some(repr) = state.repr.as_mut() {
        let mut net = repr.net.clone();
        replace(&mut net, "phi")?;
        *repr = ReprFn::new(net);
        let opt = state.repr_opt.as_mut().ok_or_else(|| missing("phi optimizer"))?;
        load_adam(opt, &optim, "phi", step("phi")?)?;
    }

    let layout = &file.buffer;
    let space = state.mdp.action_space();
    if layout.obs_dim != state.mdp.obs_dim()
        || layout.latent_dim != state.prior.dim
        || layout.action_width != action_width(space)
    {
        return Err(Error::Checkpoint("replay buffer shape does not match config".into()));
    }
    let items = decode_buffer(&read_f64_le(&dir.join("buffer.bin"))?, layout, space)?;
    state.buffer = ReplayBuffer::from_parts(layout.capacity, items, layout.head)?;

    let metrics = fs::read_to_string(dir.join("metrics.jsonl"))?;
    state.metrics = metrics
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str::<EpochMetrics>)
        .collect::<std::result::Result<_, _>>()?;
    state.epoch = file.epoch;
    state.lagrange.lambda = f64::from_bits(file.lambda_bits);
    state.lagrange.epsilon = f64::from_bits(file.epsilon_bits);
    state.counters = file.counters;
    state.rng = file.rng.restore()?;
    state.coverage = file.coverage;
    Ok(state)
}
