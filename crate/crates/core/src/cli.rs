//! Command-line front end: `train`, `verify`, `reach` and `export`.
//!
//! Exit codes: 0 success, 1 other failure, 2 invalid configuration or missing input,
//! 3 non-finite value during training, 4 a verification outside tolerance.

use std::ffi::OsString;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::checkpoint;
use crate::config::TrainConfig;
use crate::env::{rollout, Mdp, State};
use crate::error::{Error, Result};
use crate::eval::{export_latent_trajectories, latent_csv};
use crate::pca::{
    ellipse_report, monte_carlo_value, pca_optimum, random_feasible, squared_metra_value, EllipseSpec,
};
use crate::temporal::{
    all_pairs_temporal_distance, check_consistent_embedding, check_implication, embed_states,
    lipschitz_adjacent_from_embeddings, lipschitz_global_from_embeddings,
};
use crate::trainer::{evaluate_reach, evaluate_reach_goals, RunState};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NON_FINITE: i32 = 3;
pub const EXIT_TOLERANCE: i32 = 4;

pub const OUTPUT_ROOT_VAR: &str = "METRA_OUTPUT_ROOT";
pub const MANIFEST: &str = "manifest.json";
pub const LOCK: &str = ".lock";

#[derive(Debug, Parser)]
#[command(name = "metra", version, about = "Metric-aware skill discovery on grid worlds and point masses")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train from a config file and write a run directory.
    Train(TrainArgs),
    /// Check a trained representation or an analytic claim against its oracle.
    #[command(subcommand)]
    Verify(VerifyCommand),
    /// Zero-shot goal reaching with a trained checkpoint.
    Reach(ReachArgs),
    /// Write CSV views of a run or an environment.
    #[command(subcommand)]
    Export(ExportCommand),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Run directory; defaults to `$METRA_OUTPUT_ROOT/<config stem>-seed<seed>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Continue the run stored in `--out` instead of starting over.
    #[arg(long)]
    pub resume: bool,
    /// Also checkpoint every N epochs.
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum VerifyCommand {
    /// Adjacent and global temporal-distance Lipschitz checks of a checkpoint.
    Lipschitz(LipschitzArgs),
    /// Closed-form optimum of linear squared METRA on an ellipse.
    Pca(PcaArgs),
    /// Whether raw coordinates embed the environment with distances equal to step counts.
    Embedding(EmbeddingArgs),
}

#[derive(Debug, Args)]
pub struct LipschitzArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Allowed global excess `|phi(u) - phi(v)| - d(u, v)`.
    #[arg(long, default_value_t = 0.1)]
    pub tolerance: f64,
    /// Adjacent pairs count as satisfied when `|phi(s) - phi(s')| <= 1 + slack`.
    #[arg(long, default_value_t = 0.05)]
    pub adjacent_slack: f64,
    #[arg(long, default_value_t = 0.99)]
    pub min_adjacent_fraction: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PcaArgs {
    /// Rows separated by `;`, entries by `,`, e.g. `9,0;0,1`.
    #[arg(long)]
    pub shape: String,
    #[arg(long, default_value_t = 1)]
    pub d: usize,
    #[arg(long, default_value_t = 10_000)]
    pub random_samples: usize,
    #[arg(long, default_value_t = 100_000)]
    pub mc_samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Compare a run trained on this ellipse with the optimum.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 0.8)]
    pub min_fraction: f64,
    #[arg(long, default_value_t = 15.0)]
    pub max_angle_deg: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EmbeddingArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Defaults to 1e-9 on grids and 1 (whole-step rounding) on point masses.
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long, default_value_t = 2000)]
    pub max_pairs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReachArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub n_goals: usize,
    #[arg(long, default_value_t = 1)]
    pub recompute_every: usize,
    /// Explicit goal, e.g. `3,4` for a grid cell or `0.5,-0.25` for a point; repeatable.
    #[arg(long = "goal")]
    pub goals: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum ExportCommand {
    /// Representation of every state along greedy rollouts of the evaluation skills.
    Latents(ExportArgs),
    /// Coverage series of the evaluation epochs.
    Coverage(ExportArgs),
    /// All-pairs temporal distances of an enumerable environment.
    Distances(ExportArgs),
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Environment source when no checkpoint is given (distances only).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Option<Value>,
    pub revision: String,
    pub seed: Option<u64>,
    pub started_at: String,
    pub finished_at: String,
    /// Paths relative to the manifest's directory.
    pub artifacts: Vec<String>,
}

impl RunManifest {
    fn new(command: &str, config: Option<&TrainConfig>, seed: Option<u64>, started: SystemTime) -> Result<Self> {
        Ok(RunManifest {
            command: command.to_string(),
            config: config.map(serde_json::to_value).transpose()?,
            revision: revision(),
            seed,
            started_at: timestamp(started),
            finished_at: timestamp(SystemTime::now()),
            artifacts: Vec::new(),
        })
    }

    pub fn load(dir: &Path) -> Result<Option<Self>> {
        let path = dir.join(MANIFEST);
        if !path.is_file() {
            return Ok(None);
        }
        Ok(Some(serde_json::from_str(&fs::read_to_string(path)?)?))
    }

    fn add(&mut self, dir: &Path, files: &[PathBuf]) {
        for f in files {
            let rel = f.strip_prefix(dir).unwrap_or(f).to_string_lossy().replace('\\', "/");
            if !self.artifacts.contains(&rel) {
                self.artifacts.push(rel);
            }
        }
        self.artifacts.sort();
    }

    fn save(&mut self, dir: &Path) -> Result<PathBuf> {
        self.finished_at = timestamp(SystemTime::now());
        let path = dir.join(MANIFEST);
        fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(path)
    }
}

fn timestamp(t: SystemTime) -> String {
    humantime::format_rfc3339_seconds(t).to_string()
}

/// `METRA_REVISION` if set, else `git rev-parse HEAD`, else the package version.
fn revision() -> String {
    if let Ok(r) = std::env::var("METRA_REVISION") {
        return r;
    }
    let git = std::process::Command::new("git")
        .args(["rev-parse", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string());
    match git {
        Some(h) if !h.is_empty() => format!("git:{h}"),
        _ => format!("metra {}", env!("CARGO_PKG_VERSION")),
    }
}

/// Exclusive writer lock on a directory, released on drop.
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let path = dir.join(LOCK);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(DirLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::InvalidArgument(format!(
                "{} is locked by another writer (remove {} if stale)",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_VAR)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Checkpoint(_) | Error::InvalidEnv(_) | Error::NotPositiveDefinite => EXIT_CONFIG,
        Error::NonFinite { .. } => EXIT_NON_FINITE,
        _ => EXIT_FAILURE,
    }
}

/// Parses `args` (program name first) and runs the command; returns the exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Verify(VerifyCommand::Lipschitz(a)) => cmd_verify_lipschitz(&a),
        Command::Verify(VerifyCommand::Pca(a)) => cmd_verify_pca(&a),
        Command::Verify(VerifyCommand::Embedding(a)) => cmd_verify_embedding(&a),
        Command::Reach(a) => cmd_reach(&a),
        Command::Export(ExportCommand::Latents(a)) => cmd_export_latents(&a),
        Command::Export(ExportCommand::Coverage(a)) => cmd_export_coverage(&a),
        Command::Export(ExportCommand::Distances(a)) => cmd_export_distances(&a),
    }
}

fn load_config(path: &Path) -> Result<TrainConfig> {
    if !path.is_file() {
        return Err(Error::Config(format!("{}: no such config file", path.display())));
    }
    TrainConfig::load(path).map_err(|e| match e {
        e @ Error::Config(_) => e,
        other => Error::Config(format!("{}: {other}", path.display())),
    })
}

/// A run directory or the checkpoint directory inside it.
fn resolve_checkpoint(path: &Path) -> Result<(PathBuf, PathBuf)> {
    if path.join("checkpoint").join("state.json").is_file() {
        return Ok((path.to_path_buf(), path.join("checkpoint")));
    }
    if path.join("state.json").is_file() {
        let run = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        return Ok((run, path.to_path_buf()));
    }
    Err(Error::Checkpoint(format!("{}: no checkpoint found", path.display())))
}

fn load_run(path: &Path) -> Result<(PathBuf, RunState)> {
    let (run_dir, ck) = resolve_checkpoint(path)?;
    Ok((run_dir, checkpoint::load(&ck)?))
}

/// Writes `contents` to `path` and lists it in the manifest of its directory.
fn emit(path: &Path, contents: &str, command: &str, state: Option<&RunState>, seed: Option<u64>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let started = SystemTime::now();
    let _lock = DirLock::acquire(&dir)?;
    fs::write(path, contents)?;
    let mut manifest = match RunManifest::load(&dir)? {
        Some(m) => m,
        None => RunManifest::new(command, state.map(|s| &s.config), seed.or(state.map(|s| s.seed())), started)?,
    };
    manifest.add(&dir, &[path.to_path_buf()]);
    manifest.save(&dir)?;
    Ok(())
}

fn default_out(run_dir: Option<&Path>, dir_name: &str, file: &str) -> PathBuf {
    match run_dir {
        Some(d) => d.join(file),
        None => output_root().join(dir_name).join(file),
    }
}

fn cmd_train(a: &TrainArgs) -> Result<i32> {
    let mut config = load_config(&a.config)?;
    if let Some(s) = a.seed {
        config.train.seed = s;
    }
    if let Some(e) = a.epochs {
        config.train.epochs = e;
    }
    config.validate()?;
    let stem = a.config.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| output_root().join(format!("{stem}-seed{}", config.train.seed)));
    let started = SystemTime::now();
    let _lock = DirLock::acquire(&out)?;
    let ck_dir = out.join("checkpoint");

    let mut state = if a.resume {
        let mut s = checkpoint::load(&ck_dir)?;
        s.config.train.epochs = config.train.epochs;
        s
    } else {
        RunState::init(&config)?
    };
    state.dump_dir = Some(out.clone());
    let config_path = out.join("config.toml");
    fs::write(&config_path, state.config.to_toml_string()?)?;
    let metrics_path = out.join("metrics.jsonl");
    let mut metrics = OpenOptions::new()
        .create(true)
        .write(true)
        .truncate(true)
        .open(&metrics_path)?;
    for m in &state.metrics {
        writeln!(metrics, "{}", m.to_json_line())?;
    }

    let mut files = vec![config_path, metrics_path.clone()];
    let every = a.checkpoint_every.unwrap_or(0);
    let eval_every = state.config.eval.every;
    let result = state.run_to_end(|s| {
        let m = s.metrics.last().expect("an epoch was just recorded");
        writeln!(metrics, "{}", m.to_json_line())?;
        if eval_every > 0 && m.epoch % eval_every == 0 {
            eprintln!(
                "epoch {:>5}  objective {:.4}  lambda {:.3}  alpha {:.4}  coverage {}",
                m.epoch,
                m.phi_objective,
                m.lambda,
                m.alpha,
                m.policy_coverage.map_or_else(|| "-".to_string(), |c| c.to_string())
            );
        }
        if every > 0 && m.epoch % every == 0 && m.epoch < s.config.train.epochs {
            checkpoint::save(s, &ck_dir)?;
        }
        Ok(())
    });
    metrics.flush()?;
    if let Err(e) = result {
        let dump = out.join("nan_dump.json");
        if dump.is_file() {
            files.push(dump);
        }
        let mut manifest = RunManifest::new("train", Some(&state.config), Some(state.seed()), started)?;
        manifest.add(&out, &files);
        manifest.save(&out)?;
        return Err(e);
    }
    files.extend(checkpoint::save(&state, &ck_dir)?);
    let mut manifest = RunManifest::new("train", Some(&state.config), Some(state.seed()), started)?;
    manifest.add(&out, &files);
    manifest.save(&out)?;
    eprintln!("wrote {}", out.display());
    Ok(EXIT_OK)
}

fn tolerance_code(pass: bool) -> i32 {
    if pass {
        EXIT_OK
    } else {
        EXIT_TOLERANCE
    }
}

fn cmd_verify_lipschitz(a: &LipschitzArgs) -> Result<i32> {
    let (run_dir, state) = load_run(&a.checkpoint)?;
    let phi = state
        .phi()
        .filter(|_| !state.config.train.variant.conditions_on_skill())
        .ok_or_else(|| Error::InvalidArgument("checkpoint has no state representation".into()))?;
    let emb = embed_states(phi, &state.mdp)?;
    let dist = all_pairs_temporal_distance(&state.mdp)?;
    let adjacent = lipschitz_adjacent_from_embeddings(&emb, &state.mdp)?;
    let global = lipschitz_global_from_embeddings(&emb, &dist)?;
    let implication = check_implication(&emb, &dist, &state.mdp)?;
    let over = adjacent.violating_pairs.iter().filter(|v| v.excess > a.adjacent_slack).count();
    let fraction = if adjacent.pairs_checked == 0 {
        1.0
    } else {
        1.0 - over as f64 / adjacent.pairs_checked as f64
    };
    let pass = global.max_violation <= a.tolerance
        && fraction >= a.min_adjacent_fraction
        && implication.implied_bound_holds
        && implication.converse_holds;
    let report = json!({
        "adjacent": {
            "max_violation": adjacent.max_violation,
            "pairs_checked": adjacent.pairs_checked,
            "violating_pairs": adjacent.violating_pairs.len(),
            "slack": a.adjacent_slack,
            "fraction_within_slack": fraction,
        },
        "global": {
            "max_violation": global.max_violation,
            "pairs_checked": global.pairs_checked,
            "violating_pairs": global.violating_pairs.len(),
            "tolerance": a.tolerance,
        },
        "implication": implication,
        "pass": pass,
    });
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| default_out(Some(&run_dir), "verify", "verify_lipschitz.json"));
    emit(&out, &serde_json::to_string_pretty(&report)?, "verify lipschitz", Some(&state), None)?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(tolerance_code(pass))
}

pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = text
        .split(';')
        .map(|r| {
            r.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Config(format!("bad matrix entry {v:?}")))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let m = rows.len();
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::Config(format!("matrix {text:?} is not square")));
    }
    Ok(DMatrix::from_row_iterator(m, m, rows.into_iter().flatten()))
}

fn cmd_verify_pca(a: &PcaArgs) -> Result<i32> {
    let spec = EllipseSpec::new(parse_matrix(&a.shape)?, a.d)?;
    let (w_star, analytic_value) = pca_optimum(&spec)?;
    let eigvals = spec.eigen()?.0;
    let top: f64 = eigvals[..a.d].iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut best = f64::NEG_INFINITY;
    for _ in 0..a.random_samples {
        best = best.max(squared_metra_value(&random_feasible(spec.m(), a.d, &mut rng)?, spec.a())?);
    }
    let mc = monte_carlo_value(&w_star, &spec, a.mc_samples.max(1), &mut rng)?;
    let mc_rel = (mc - analytic_value).abs() / analytic_value;
    let mut pass = (analytic_value - top).abs() <= 1e-9 * top.max(1.0) && best <= analytic_value + 1e-9 && mc_rel <= 0.01;

    let (mut achieved_value, mut angles, mut run_dir) = (Value::Null, Value::Null, None);
    let mut state_holder = None;
    if let Some(ck) = &a.checkpoint {
        let (dir, state) = load_run(ck)?;
        let r = ellipse_report(&spec, &state)?;
        pass &= r.achieved_value >= a.min_fraction * analytic_value
            && r.principal_angles_deg.iter().all(|x| *x <= a.max_angle_deg);
        achieved_value = json!(r.achieved_value);
        angles = json!(r.principal_angles_deg);
        run_dir = Some(dir);
        state_holder = Some(state);
    }
    let w_rows: Vec<Vec<f64>> = (0..spec.m())
        .map(|i| (0..a.d).map(|j| w_star.w()[(i, j)]).collect())
        .collect();
    let report = json!({
        "eigvals": eigvals,
        "achieved_value": achieved_value,
        "analytic_value": analytic_value,
        "principal_angles_deg": angles,
        "optimum_w": w_rows,
        "random_search": { "samples": a.random_samples, "max_value": if a.random_samples > 0 { json!(best) } else { Value::Null } },
        "monte_carlo": { "samples": a.mc_samples.max(1), "estimate": mc, "relative_error": mc_rel },
        "pass": pass,
    });
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| default_out(run_dir.as_deref(), "verify", "verify_pca.json"));
    emit(&out, &serde_json::to_string_pretty(&report)?, "verify pca", state_holder.as_ref(), Some(a.seed))?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(tolerance_code(pass))
}

/// Raw coordinates scaled so one step has unit length.
fn step_coordinates(mdp: &Mdp) -> impl Fn(&State) -> Vec<f64> + '_ {
    let scale = mdp.as_point_mass().map_or(1.0, |p| 1.0 / p.step_size());
    move |s| mdp.coords(s).into_iter().map(|v| v * scale).collect()
}

fn cmd_verify_embedding(a: &EmbeddingArgs) -> Result<i32> {
    let config = load_config(&a.config)?;
    let mdp = config.env.build()?;
    let tolerance = a.tolerance.unwrap_or(if mdp.is_enumerable() { 1e-9 } else { 1.0 });
    let r = check_consistent_embedding(&mdp, step_coordinates(&mdp), a.max_pairs, a.seed)?;
    let pass = r.max_abs_error <= tolerance;
    let report = json!({
        "mdp": mdp.id,
        "max_abs_error": r.max_abs_error,
        "pairs_checked": r.pairs_checked,
        "tolerance": tolerance,
        "embeddable": pass,
        "pass": pass,
    });
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| default_out(None, "verify", "verify_embedding.json"));
    emit(&out, &serde_json::to_string_pretty(&report)?, "verify embedding", None, Some(a.seed))?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(tolerance_code(pass))
}

fn parse_goal(mdp: &Mdp, text: &str) -> Result<State> {
    let v: Vec<f64> = text
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("bad goal {text:?}")))?;
    if let Some(g) = mdp.as_grid() {
        if v.len() != 2 || v.iter().any(|x| *x < 0.0 || x.fract() != 0.0) {
            return Err(Error::Config(format!("grid goal {text:?} must be two cell indices")));
        }
        let cell = (v[0] as usize, v[1] as usize);
        return g
            .cell_index(cell)
            .map(State::Cell)
            .ok_or_else(|| Error::Config(format!("goal {text:?} is not a free cell")));
    }
    let pm = mdp.as_point_mass().ok_or(Error::NotEnumerable)?;
    if v.len() != pm.dim() || !pm.contains(&v) {
        return Err(Error::Config(format!("goal {text:?} is not a point of the ellipse")));
    }
    Ok(State::Point(v))
}

fn cmd_reach(a: &ReachArgs) -> Result<i32> {
    let (run_dir, state) = load_run(&a.checkpoint)?;
    let report = if a.goals.is_empty() {
        evaluate_reach(&state, a.n_goals, a.recompute_every, a.seed)?
    } else {
        let goals: Vec<State> = a.goals.iter().map(|g| parse_goal(&state.mdp, g)).collect::<Result<_>>()?;
        evaluate_reach_goals(&state, &goals, a.recompute_every, a.seed)?
    };
    let out = a.out.clone().unwrap_or_else(|| run_dir.join("reach.json"));
    emit(&out, &serde_json::to_string_pretty(&report)?, "reach", Some(&state), Some(a.seed))?;
    println!(
        "success_rate {:.4}  random_walk {:.4}  goals {}",
        report.success_rate, report.random_walk_success_rate, report.n_goals
    );
    Ok(EXIT_OK)
}

fn need_checkpoint(a: &ExportArgs) -> Result<(PathBuf, RunState)> {
    match &a.checkpoint {
        Some(c) => load_run(c),
        None => Err(Error::Checkpoint("--checkpoint is required".into())),
    }
}

fn cmd_export_latents(a: &ExportArgs) -> Result<i32> {
    let (run_dir, state) = need_checkpoint(a)?;
    let phi = state
        .phi()
        .filter(|_| !state.config.train.variant.conditions_on_skill())
        .ok_or_else(|| Error::InvalidArgument("checkpoint has no state representation".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let trajs = state
        .eval_skills(state.epoch)
        .iter()
        .map(|z| rollout(&state.mdp, &state.sac.policy, z, false, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let rows = export_latent_trajectories(&state.mdp, phi, &trajs)?;
    let out = a.out.clone().unwrap_or_else(|| run_dir.join("latents.csv"));
    emit(&out, &latent_csv(&rows), "export latents", Some(&state), None)?;
    Ok(EXIT_OK)
}

/// One row per evaluation epoch: `epoch,total_coverage,queue_coverage,policy_coverage,landmark_coverage`.
pub fn coverage_csv(metrics: &[crate::trainer::EpochMetrics]) -> String {
    let mut out = String::from("epoch,total_coverage,queue_coverage,policy_coverage,landmark_coverage\n");
    for m in metrics.iter().filter(|m| m.policy_coverage.is_some()) {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            m.epoch,
            m.total_coverage,
            m.queue_coverage,
            m.policy_coverage.unwrap(),
            m.landmark_coverage.map_or_else(String::new, |c| c.to_string())
        ));
    }
    out
}

fn cmd_export_coverage(a: &ExportArgs) -> Result<i32> {
    let (run_dir, state) = need_checkpoint(a)?;
    let out = a.out.clone().unwrap_or_else(|| run_dir.join("coverage.csv"));
    emit(&out, &coverage_csv(&state.metrics), "export coverage", Some(&state), None)?;
    Ok(EXIT_OK)
}

fn cmd_export_distances(a: &ExportArgs) -> Result<i32> {
    let (mdp, run_dir, state) = match (&a.checkpoint, &a.config) {
        (Some(c), _) => {
            let (dir, state) = load_run(c)?;
            (state.mdp.clone(), Some(dir), Some(state))
        }
        (None, Some(cfg)) => (load_config(cfg)?.env.build()?, None, None),
        (None, None) => return Err(Error::Config("give --checkpoint or --config".into())),
    };
    let dist = all_pairs_temporal_distance(&mdp)?;
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| default_out(run_dir.as_deref(), "export", "distances.csv"));
    emit(&out, &dist.to_csv(), "export distances", state.as_ref(), None)?;
    Ok(EXIT_OK)
}
