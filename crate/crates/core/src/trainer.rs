//! Asynchronous advantage actor-critic over a shared parameter store.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{mpsc, Arc, Mutex};

use rand::Rng as _;

use crate::dataset::{present_targets, DataConfig, Dataset, GraphSpec};
use crate::env::{Action, EnvConfig, NavEnv, Observation, RoomType, Scene};
use crate::error::{Error, Result};
use crate::evaluator::{self, Agent};
use crate::graph::ObjectSplit;
use crate::policy::{forward_batch, sample_action, ActionMode, Architecture, Input, ModelDims, Policy, PolicyParameters, PolicyVars};
use crate::rng::{self, Rng};
use crate::tensor::{clip_global_norm, Matrix, RmsProp, Tape, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub workers: usize,
    pub total_frames: u64,
    pub lr0: f64,
    pub rollout_len: usize,
    pub gamma: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub grad_clip: f64,
    pub rms_decay: f64,
    pub rms_eps: f64,
    pub with_stop: bool,
    pub seed: u64,
    pub room_type: RoomType,
    pub use_graph: bool,
    pub graph: GraphSpec,
    /// Serialize snapshot reads and updates across workers.
    pub strict: bool,
    /// Validation cadence as a fraction of `total_frames`.
    pub eval_fraction: f64,
    /// Validation episodes per validation scene.
    pub eval_episodes: usize,
    /// Action selection during validation.
    pub eval_mode: ActionMode,
    /// Episodes per scene when evaluating a trained model on a split.
    pub episodes_per_scene: usize,
    pub data_seed: u64,
    pub scenes_per_room: usize,
    pub word_dim: usize,
    pub hidden: usize,
    pub layer_width: usize,
    pub fusion: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let d = ModelDims::desk();
        Self {
            workers: 4,
            total_frames: 200_000,
            lr0: 4e-3,
            rollout_len: 20,
            gamma: 0.99,
            entropy_coef: 0.01,
            value_coef: 0.5,
            grad_clip: 40.0,
            rms_decay: 0.99,
            rms_eps: 1e-5,
            with_stop: false,
            seed: 0,
            room_type: RoomType::Kitchen,
            use_graph: true,
            graph: GraphSpec::Real,
            strict: false,
            eval_fraction: 0.05,
            eval_episodes: 25,
            eval_mode: ActionMode::Sample,
            episodes_per_scene: 50,
            data_seed: 0,
            scenes_per_room: 12,
            word_dim: d.word_dim,
            hidden: d.hidden,
            layer_width: d.layer_width,
            fusion: d.fusion,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Value(format!("bad value '{value}' for {key}")))
}

impl TrainConfig {
    pub const KEYS: [&'static str; 26] = [
        "workers",
        "total_frames",
        "lr0",
        "rollout_len",
        "gamma",
        "entropy_coef",
        "value_coef",
        "grad_clip",
        "rms_decay",
        "rms_eps",
        "with_stop",
        "seed",
        "room_type",
        "use_graph",
        "graph",
        "strict",
        "eval_fraction",
        "eval_episodes",
        "eval_mode",
        "episodes_per_scene",
        "data_seed",
        "scenes_per_room",
        "word_dim",
        "hidden",
        "layer_width",
        "fusion",
    ];

    /// Sets one field by its key name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "workers" => self.workers = parse_value(key, v)?,
            "total_frames" => self.total_frames = parse_value(key, v)?,
            "lr0" => self.lr0 = parse_value(key, v)?,
            "rollout_len" => self.rollout_len = parse_value(key, v)?,
            "gamma" => self.gamma = parse_value(key, v)?,
            "entropy_coef" => self.entropy_coef = parse_value(key, v)?,
            "value_coef" => self.value_coef = parse_value(key, v)?,
            "grad_clip" => self.grad_clip = parse_value(key, v)?,
            "rms_decay" => self.rms_decay = parse_value(key, v)?,
            "rms_eps" => self.rms_eps = parse_value(key, v)?,
            "with_stop" => self.with_stop = parse_value(key, v)?,
            "seed" => self.seed = parse_value(key, v)?,
            "room_type" => self.room_type = v.parse()?,
            "use_graph" => self.use_graph = parse_value(key, v)?,
            "graph" => self.graph = v.parse()?,
            "strict" => self.strict = parse_value(key, v)?,
            "eval_fraction" => self.eval_fraction = parse_value(key, v)?,
            "eval_episodes" => self.eval_episodes = parse_value(key, v)?,
            "eval_mode" => self.eval_mode = v.parse()?,
            "episodes_per_scene" => self.episodes_per_scene = parse_value(key, v)?,
            "data_seed" => self.data_seed = parse_value(key, v)?,
            "scenes_per_room" => self.scenes_per_room = parse_value(key, v)?,
            "word_dim" => self.word_dim = parse_value(key, v)?,
            "hidden" => self.hidden = parse_value(key, v)?,
            "layer_width" => self.layer_width = parse_value(key, v)?,
            "fusion" => self.fusion = parse_value(key, v)?,
            _ => return Err(Error::Value(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    /// Flat `key=value` lines; blank lines and `#` comments are skipped,
    /// unknown keys are errors. Unset keys keep their defaults.
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut c = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(source_name, i + 1, "expected key=value"))?;
            c.set(k.trim(), v)
                .map_err(|e| Error::parse(source_name, i + 1, e.to_string()))?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| writeln!(out, "{k}={v}").unwrap();
        kv("workers", self.workers.to_string());
        kv("total_frames", self.total_frames.to_string());
        kv("lr0", self.lr0.to_string());
        kv("rollout_len", self.rollout_len.to_string());
        kv("gamma", self.gamma.to_string());
        kv("entropy_coef", self.entropy_coef.to_string());
        kv("value_coef", self.value_coef.to_string());
        kv("grad_clip", self.grad_clip.to_string());
        kv("rms_decay", self.rms_decay.to_string());
        kv("rms_eps", self.rms_eps.to_string());
        kv("with_stop", self.with_stop.to_string());
        kv("seed", self.seed.to_string());
        kv("room_type", self.room_type.to_string());
        kv("use_graph", self.use_graph.to_string());
        kv("graph", self.graph.to_string());
        kv("strict", self.strict.to_string());
        kv("eval_fraction", self.eval_fraction.to_string());
        kv("eval_episodes", self.eval_episodes.to_string());
        kv("eval_mode", self.eval_mode.to_string());
        kv("episodes_per_scene", self.episodes_per_scene.to_string());
        kv("data_seed", self.data_seed.to_string());
        kv("scenes_per_room", self.scenes_per_room.to_string());
        kv("word_dim", self.word_dim.to_string());
        kv("hidden", self.hidden.to_string());
        kv("layer_width", self.layer_width.to_string());
        kv("fusion", self.fusion.to_string());
        out
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("workers", self.workers as f64),
            ("lr0", self.lr0),
            ("rollout_len", self.rollout_len as f64),
            ("grad_clip", self.grad_clip),
            ("rms_eps", self.rms_eps),
            ("eval_fraction", self.eval_fraction),
            ("eval_episodes", self.eval_episodes as f64),
            ("episodes_per_scene", self.episodes_per_scene as f64),
            ("scenes_per_room", self.scenes_per_room as f64),
            ("word_dim", self.word_dim as f64),
            ("hidden", self.hidden as f64),
            ("layer_width", self.layer_width as f64),
            ("fusion", self.fusion as f64),
        ];
        for (k, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Value(format!("{k} must be positive")));
            }
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Value("gamma must be in (0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.rms_decay) {
            return Err(Error::Value("rms_decay must be in [0, 1)".into()));
        }
        if self.entropy_coef < 0.0 || self.value_coef < 0.0 {
            return Err(Error::Value("loss coefficients must be non-negative".into()));
        }
        if self.eval_fraction > 1.0 {
            return Err(Error::Value("eval_fraction must be at most 1".into()));
        }
        Ok(())
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            word_dim: self.word_dim,
            hidden: self.hidden,
            layer_width: self.layer_width,
            fusion: self.fusion,
        }
    }

    pub fn data_config(&self) -> DataConfig {
        DataConfig {
            data_seed: self.data_seed,
            scenes_per_room: self.scenes_per_room,
            word_dim: self.word_dim,
        }
    }

    /// Frames between validation points.
    pub fn cadence(&self) -> u64 {
        ((self.total_frames as f64 * self.eval_fraction).round() as u64).max(1)
    }

    pub fn learning_rate(&self, frame: u64) -> f64 {
        if self.total_frames == 0 {
            return 0.0;
        }
        self.lr0 * (1.0 - frame as f64 / self.total_frames as f64).max(0.0)
    }
}

/// `R_t = r_t + γ·R_{t+1}`, seeded with `bootstrap`.
pub fn compute_returns(rewards: &[f64], bootstrap: f64, gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut r = bootstrap;
    for t in (0..rewards.len()).rev() {
        r = rewards[t] + gamma * r;
        out[t] = r;
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub observations: Vec<Observation>,
    pub targets: Vec<usize>,
    pub actions: Vec<usize>,
    pub returns: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossCoefficients {
    pub value: f64,
    pub entropy: f64,
}

/// Loss node and its components (values, for logging).
#[derive(Clone, Debug)]
pub struct A3cLoss {
    pub loss: Var,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub advantages: Vec<f64>,
}

/// `Σ_t [−log π(a_t|s_t)·Â_t + c_v·(R_t − V_t)² − β·H(π(·|s_t))]` with the
/// advantage `Â_t = R_t − V_t` held constant in the policy term.
pub fn a3c_loss(
    tape: &mut Tape,
    arch: &Architecture,
    vars: &PolicyVars,
    trajectory: &Trajectory,
    coef: LossCoefficients,
) -> Result<A3cLoss> {
    a3c_loss_inner(tape, arch, vars, trajectory, coef, None)
}

/// [`a3c_loss`] with the advantages supplied instead of computed from the
/// current values. With the advantages fixed the loss is a plain function
/// of the parameters, which is what finite differences can check.
pub fn a3c_loss_fixed_advantages(
    tape: &mut Tape,
    arch: &Architecture,
    vars: &PolicyVars,
    trajectory: &Trajectory,
    coef: LossCoefficients,
    advantages: &[f64],
) -> Result<A3cLoss> {
    a3c_loss_inner(tape, arch, vars, trajectory, coef, Some(advantages))
}

fn a3c_loss_inner(
    tape: &mut Tape,
    arch: &Architecture,
    vars: &PolicyVars,
    trajectory: &Trajectory,
    coef: LossCoefficients,
    fixed: Option<&[f64]>,
) -> Result<A3cLoss> {
    let t = trajectory.actions.len();
    if t == 0
        || trajectory.observations.len() != t
        || trajectory.targets.len() != t
        || trajectory.returns.len() != t
        || fixed.is_some_and(|a| a.len() != t)
    {
        return Err(Error::Contract("trajectory parts must be non-empty and equally long".into()));
    }
    let inputs: Vec<Input> = trajectory
        .observations
        .iter()
        .zip(&trajectory.targets)
        .map(|(o, &target)| Input {
            observation: o,
            target,
        })
        .collect();
    let (logits, values) = forward_batch(tape, arch, vars, &inputs)?;
    let logp = tape.log_softmax(logits)?;
    let probs = tape.softmax(logits)?;
    let picked = tape.gather(logp, &trajectory.actions)?;
    let advantages: Vec<f64> = match fixed {
        Some(a) => a.to_vec(),
        None => trajectory
            .returns
            .iter()
            .zip(tape.value(values).data())
            .map(|(r, v)| r - v)
            .collect(),
    };
    let adv = tape.constant(Matrix::column_vector(advantages));
    let weighted = tape.mul(picked, adv)?;
    let pg = tape.sum(weighted);
    let pg = tape.scale(pg, -1.0);

    let returns = tape.constant(Matrix::column_vector(trajectory.returns.clone()));
    let err = tape.sub(returns, values)?;
    let sq = tape.square(err);
    let vloss = tape.sum(sq);
    let vloss = tape.scale(vloss, coef.value);

    let plogp = tape.mul(probs, logp)?;
    let neg_entropy = tape.sum(plogp);
    let ent = tape.scale(neg_entropy, coef.entropy);

    let partial = tape.add(pg, vloss)?;
    let loss = tape.add(partial, ent)?;
    Ok(A3cLoss {
        loss,
        policy: tape.value(pg).item(),
        value: tape.value(vloss).item(),
        entropy: -tape.value(neg_entropy).item(),
        advantages: tape.value(adv).data().to_vec(),
    })
}

/// Canonical parameters, shared RMSProp statistics and the frame counter.
pub struct SharedStore {
    slots: Vec<Mutex<(Matrix, Matrix)>>,
    strict: Option<Mutex<()>>,
    frames: AtomicU64,
    version: AtomicU64,
    episodes: AtomicU64,
    successes: AtomicU64,
}

impl SharedStore {
    pub fn new(params: Vec<Matrix>, strict: bool) -> Self {
        Self {
            slots: params
                .into_iter()
                .map(|p| {
                    let acc = Matrix::zeros(p.rows(), p.cols());
                    Mutex::new((p, acc))
                })
                .collect(),
            strict: strict.then(|| Mutex::new(())),
            frames: AtomicU64::new(0),
            version: AtomicU64::new(0),
            episodes: AtomicU64::new(0),
            successes: AtomicU64::new(0),
        }
    }

    /// Copy of every parameter. Each array is read atomically; in
    /// non-strict mode different arrays may reflect different updates.
    pub fn snapshot(&self) -> Vec<Matrix> {
        let _guard = self.strict.as_ref().map(|m| m.lock().expect("store lock"));
        self.slots.iter().map(|s| s.lock().expect("slot lock").0.clone()).collect()
    }

    /// One RMSProp step per array using the shared statistics.
    pub fn apply(&self, grads: &[Matrix], opt: &RmsProp) -> Result<()> {
        if grads.len() != self.slots.len() {
            return Err(Error::shape(
                "store update",
                format!("{} gradients for {} parameters", grads.len(), self.slots.len()),
            ));
        }
        let _guard = self.strict.as_ref().map(|m| m.lock().expect("store lock"));
        for (slot, g) in self.slots.iter().zip(grads) {
            let mut s = slot.lock().expect("slot lock");
            let (p, acc) = &mut *s;
            opt.update(p, acc, g)?;
        }
        self.version.fetch_add(1, Ordering::SeqCst);
        Ok(())
    }

    /// Adds `n` frames; returns the counter before and after.
    pub fn advance(&self, n: u64) -> (u64, u64) {
        let before = self.frames.fetch_add(n, Ordering::SeqCst);
        (before, before + n)
    }

    pub fn frames(&self) -> u64 {
        self.frames.load(Ordering::SeqCst)
    }

    pub fn version(&self) -> u64 {
        self.version.load(Ordering::SeqCst)
    }

    pub fn record_episode(&self, success: bool) {
        self.episodes.fetch_add(1, Ordering::SeqCst);
        if success {
            self.successes.fetch_add(1, Ordering::SeqCst);
        }
    }

    /// Finished training episodes and how many of them succeeded.
    pub fn episode_counts(&self) -> (u64, u64) {
        (self.episodes.load(Ordering::SeqCst), self.successes.load(Ordering::SeqCst))
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.slots.iter().map(|s| s.lock().expect("slot lock").0.shape()).collect()
    }
}

/// Everything a worker needs besides the store.
#[derive(Clone, Debug)]
pub struct TrainSetup {
    pub arch: Arc<Architecture>,
    pub train_scenes: Vec<Arc<Scene>>,
    pub val_scenes: Vec<Arc<Scene>>,
    /// Categories a training episode may target.
    pub train_targets: Vec<usize>,
}

impl TrainSetup {
    pub fn from_dataset(config: &TrainConfig, data: &Dataset) -> Result<Self> {
        let graph = data.graph_for(config.graph, config.room_type, config.seed)?;
        let arch = Architecture::new(
            config.dims(),
            data.embeddings.clone(),
            &graph,
            config.with_stop,
            config.use_graph,
        )?;
        let room = data.room(config.room_type);
        Ok(Self {
            arch: Arc::new(arch),
            train_scenes: room.train.clone(),
            val_scenes: room.val.clone(),
            train_targets: data.targets(config.room_type, ObjectSplit::Known),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub frame: u64,
    pub split: String,
    pub success_rate: f64,
    pub spl: f64,
    pub mean_reward: f64,
    pub seed: u64,
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from("frame,split,success_rate,spl,mean_reward,seed\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6},{}",
            r.frame, r.split, r.success_rate, r.spl, r.mean_reward, r.seed
        )
        .unwrap();
    }
    out
}

pub fn parse_metrics_csv(text: &str, source_name: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "frame,split,success_rate,spl,mean_reward,seed" => {}
        _ => return Err(Error::parse(source_name, 1, "missing metrics header")),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.trim().split(',').collect();
        let bad = |m: &str| Error::parse(source_name, i + 1, m.to_string());
        if f.len() != 6 {
            return Err(bad("expected 6 fields"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
        rows.push(MetricsRow {
            frame: f[0].parse().map_err(|_| bad("bad frame"))?,
            split: f[1].to_string(),
            success_rate: num(f[2])?,
            spl: num(f[3])?,
            mean_reward: num(f[4])?,
            seed: f[5].parse().map_err(|_| bad("bad seed"))?,
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub initial: Policy,
    pub final_policy: Policy,
    /// Highest validation SPL; the initial policy if nothing was evaluated.
    pub best_policy: Policy,
    pub best_val_spl: Option<f64>,
    pub metrics: Vec<MetricsRow>,
    pub frames: u64,
    pub updates: u64,
    pub train_episodes: u64,
    pub train_successes: u64,
}

/// Snapshot handed from a worker to the validation loop.
pub struct EvalRequest {
    pub point: u64,
    pub params: Vec<Matrix>,
}

/// Builds the desk dataset from the config and trains on it.
pub fn train(config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let data = Dataset::desk(config.data_config())?;
    let setup = TrainSetup::from_dataset(config, &data)?;
    train_with(config, &setup)
}

/// Spawns `config.workers` workers over a shared store and evaluates
/// snapshots on the validation scenes at every cadence point.
pub fn train_with(config: &TrainConfig, setup: &TrainSetup) -> Result<TrainOutcome> {
    config.validate()?;
    if setup.train_scenes.is_empty() || setup.train_targets.is_empty() {
        return Err(Error::Contract("no training scenes or targets".into()));
    }
    let arch = Arc::clone(&setup.arch);
    let initial = Policy::new(Arc::clone(&arch), rng::derive_seed(config.seed, &[rng::name_tag("policy")]));
    let store = SharedStore::new(initial.params.to_vec(), config.strict);
    let shapes = store.shapes();
    let stop = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel::<EvalRequest>();
    let val_seed = rng::derive_seed(config.seed, &[rng::name_tag("validation")]);
    let env_config = EnvConfig::new(config.with_stop);

    let mut evaluated: BTreeMap<u64, (MetricsRow, Vec<Matrix>)> = BTreeMap::new();
    let worker_results: Vec<Result<()>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..config.workers)
            .map(|w| {
                let tx = tx.clone();
                let (store, stop, setup) = (&store, &stop, setup);
                s.spawn(move || {
                    let r = run_worker(w, store, setup, config, &tx, stop);
                    if r.is_err() {
                        stop.store(true, Ordering::SeqCst);
                    }
                    r
                })
            })
            .collect();
        drop(tx);
        let mut eval_error = None;
        for req in rx {
            if eval_error.is_some() {
                continue;
            }
            let row = PolicyParameters::from_vec(&arch, req.params.clone()).and_then(|params| {
                let policy = Policy {
                    arch: Arc::clone(&arch),
                    params,
                };
                let res = evaluator::run_episodes(
                    Agent::Network(&policy, config.eval_mode),
                    &setup.val_scenes,
                    &setup.train_targets,
                    config.eval_episodes,
                    &env_config,
                    arch.num_categories,
                    val_seed,
                )?;
                Ok(MetricsRow {
                    frame: req.point,
                    split: "val".into(),
                    success_rate: evaluator::success_rate(&res.records)?,
                    spl: evaluator::spl(&res.records)?,
                    mean_reward: evaluator::mean_reward(&res.records)?,
                    seed: config.seed,
                })
            });
            match row {
                Ok(row) => {
                    evaluated.insert(req.point, (row, req.params));
                }
                Err(e) => {
                    stop.store(true, Ordering::SeqCst);
                    eval_error = Some(e);
                }
            }
        }
        let mut results: Vec<Result<()>> = handles
            .into_iter()
            .enumerate()
            .map(|(w, h)| {
                h.join().unwrap_or_else(|_| {
                    Err(Error::Worker {
                        worker: w,
                        message: "panicked".into(),
                    })
                })
            })
            .collect();
        if let Some(e) = eval_error {
            results.push(Err(e));
        }
        results
    });
    for r in worker_results {
        r?;
    }
    if store.shapes() != shapes {
        return Err(Error::Contract("parameter shapes changed during training".into()));
    }
    let final_params = PolicyParameters::from_vec(&arch, store.snapshot())?;
    let final_policy = Policy {
        arch: Arc::clone(&arch),
        params: final_params,
    };
    let mut best: Option<(f64, &Vec<Matrix>)> = None;
    for (row, params) in evaluated.values() {
        if best.is_none_or(|(s, _)| row.spl > s) {
            best = Some((row.spl, params));
        }
    }
    let best_policy = match best {
        Some((_, p)) => Policy {
            arch: Arc::clone(&arch),
            params: PolicyParameters::from_vec(&arch, p.clone())?,
        },
        None => initial.clone(),
    };
    Ok(TrainOutcome {
        best_val_spl: best.map(|(s, _)| s),
        initial,
        final_policy,
        best_policy,
        metrics: evaluated.into_values().map(|(r, _)| r).collect(),
        frames: store.frames(),
        updates: store.version(),
        train_episodes: store.episode_counts().0,
        train_successes: store.episode_counts().1,
    })
}

/// Cadence points `k·c` (and `total`) in `(before, after]`.
fn crossed_points(before: u64, after: u64, cadence: u64, total: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut k = before / cadence + 1;
    loop {
        let p = (k * cadence).min(total);
        if p > after || p <= before {
            break;
        }
        out.push(p);
        if p == total {
            break;
        }
        k += 1;
    }
    out
}

struct Episode {
    env: NavEnv,
}

fn new_episode(setup: &TrainSetup, config: &TrainConfig, rng: &mut Rng) -> Result<Episode> {
    loop {
        let scene = &setup.train_scenes[rng.random_range(0..setup.train_scenes.len())];
        let targets = present_targets(scene, &setup.train_targets);
        if targets.is_empty() {
            continue;
        }
        let target = targets[rng.random_range(0..targets.len())];
        let env = NavEnv::reset(
            Arc::clone(scene),
            setup.arch.num_categories,
            target,
            EnvConfig::new(config.with_stop),
            rng.random(),
            false,
        )?;
        if !env.is_done() {
            return Ok(Episode { env });
        }
    }
}

/// Worker loop: snapshot, n-step rollout, loss and gradients on the
/// private copy, RMSProp step on the store, frame accounting.
pub fn run_worker(
    worker_id: usize,
    store: &SharedStore,
    setup: &TrainSetup,
    config: &TrainConfig,
    eval_tx: &mpsc::Sender<EvalRequest>,
    stop: &AtomicBool,
) -> Result<()> {
    let wrap = |e: Error| Error::Worker {
        worker: worker_id,
        message: e.to_string(),
    };
    let arch = &setup.arch;
    let mut rng = rng::rng_from(config.seed, &[rng::name_tag("worker"), worker_id as u64]);
    let mut episode = new_episode(setup, config, &mut rng).map_err(wrap)?;
    let coef = LossCoefficients {
        value: config.value_coef,
        entropy: config.entropy_coef,
    };
    let cadence = config.cadence();
    while store.frames() < config.total_frames && !stop.load(Ordering::SeqCst) {
        let params = PolicyParameters::from_vec(arch, store.snapshot()).map_err(wrap)?;
        let mut tape = Tape::new();
        let vars = PolicyVars::bind(&mut tape, arch, &params);
        let mark = tape.len();
        let mut traj = Trajectory {
            observations: Vec::with_capacity(config.rollout_len),
            targets: Vec::with_capacity(config.rollout_len),
            actions: Vec::with_capacity(config.rollout_len),
            returns: Vec::new(),
        };
        let mut rewards = Vec::with_capacity(config.rollout_len);
        let mut ended = None;
        for _ in 0..config.rollout_len {
            let obs = episode.env.observation();
            let target = episode.env.target();
            let input = Input {
                observation: &obs,
                target,
            };
            let (logits, _) = forward_batch(&mut tape, arch, &vars, &[input]).map_err(wrap)?;
            let a = sample_action(tape.value(logits).data(), ActionMode::Sample, &mut rng).map_err(wrap)?;
            tape.truncate(mark);
            let out = episode.env.step(Action::from_index(a)).map_err(wrap)?;
            traj.observations.push(obs);
            traj.targets.push(target);
            traj.actions.push(a);
            rewards.push(out.reward);
            if out.done {
                ended = episode.env.termination();
                break;
            }
        }
        let bootstrap = match ended {
            Some(t) if t.is_terminal() => 0.0,
            _ => {
                // rollout cut or budget exhausted: bootstrap from V(s_last)
                let obs = episode.env.observation();
                let input = Input {
                    observation: &obs,
                    target: episode.env.target(),
                };
                let (_, v) = forward_batch(&mut tape, arch, &vars, &[input]).map_err(wrap)?;
                let v = tape.value(v).item();
                tape.truncate(mark);
                v
            }
        };
        traj.returns = compute_returns(&rewards, bootstrap, config.gamma);
        let loss = a3c_loss(&mut tape, arch, &vars, &traj, coef).map_err(wrap)?;
        tape.backward(loss.loss).map_err(wrap)?;
        let mut grads = vars.grads(&tape);
        clip_global_norm(&mut grads, config.grad_clip);
        let opt = RmsProp {
            learning_rate: config.learning_rate(store.frames()),
            decay: config.rms_decay,
            epsilon: config.rms_eps,
        };
        store.apply(&grads, &opt).map_err(wrap)?;
        let (before, after) = store.advance(traj.actions.len() as u64);
        let points = crossed_points(before, after, cadence, config.total_frames);
        if !points.is_empty() {
            let params = store.snapshot();
            for point in points {
                // the receiver only disappears once training is over
                let _ = eval_tx.send(EvalRequest {
                    point,
                    params: params.clone(),
                });
            }
        }
        if ended.is_some() {
            store.record_episode(episode.env.succeeded());
            episode = new_episode(setup, config, &mut rng).map_err(wrap)?;
        }
    }
    Ok(())
}

/// Per-frame mean and population standard deviation of one metric across
/// seeds. Every run must report the same frames.
pub fn aggregate_seeds(runs: &[Vec<MetricsRow>], metric: impl Fn(&MetricsRow) -> f64) -> Result<Vec<(u64, f64, f64)>> {
    let first = runs.first().ok_or_else(|| Error::Contract("no runs to aggregate".into()))?;
    let frames: Vec<u64> = first.iter().map(|r| r.frame).collect();
    for r in runs {
        if r.iter().map(|x| x.frame).collect::<Vec<_>>() != frames {
            return Err(Error::Contract("runs have mismatched cadences".into()));
        }
    }
    let n = runs.len() as f64;
    Ok(frames
        .iter()
        .enumerate()
        .map(|(i, &f)| {
            let vals: Vec<f64> = runs.iter().map(|r| metric(&r[i])).collect();
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            (f, mean, var.sqrt())
        })
        .collect())
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn returns_examples() {
        assert_eq!(compute_returns(&[-0.01], 0.0, 0.99), vec![-0.01]);
        let r = compute_returns(&[-0.01, 10.0], 0.0, 0.99);
        assert!((r[0] - 9.89).abs() < 1e-12 && r[1] == 10.0);
        assert_eq!(compute_returns(&[1.0, 2.0, 3.0], 5.0, 0.0), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn config_text_round_trip_and_errors() {
        let mut c = TrainConfig::default();
        c.set("graph", "dropped:relations:0.8").unwrap();
        c.set("room_type", "living_room").unwrap();
        let back = TrainConfig::parse(&c.to_text(), "cfg").unwrap();
        assert_eq!(back, c);
        assert!(matches!(
            TrainConfig::parse("workers=2\nbogus=1\n", "cfg"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(TrainConfig::parse("gamma=0\n", "cfg").is_err());
        assert!(TrainConfig::parse("workers\n", "cfg").is_err());
    }

    #[test]
    fn learning_rate_decays_linearly() {
        let c = TrainConfig {
            total_frames: 1000,
            lr0: 7e-4,
            ..TrainConfig::default()
        };
        assert_eq!(c.learning_rate(0), 7e-4);
        assert!((c.learning_rate(250) - 5.25e-4).abs() < 1e-18);
        assert_eq!(c.learning_rate(1000), 0.0);
        assert_eq!(c.learning_rate(1500), 0.0);
    }

    #[test]
    fn cadence_points() {
        assert_eq!(crossed_points(0, 20, 10, 100), vec![10, 20]);
        assert_eq!(crossed_points(15, 19, 10, 100), Vec::<u64>::new());
        assert_eq!(crossed_points(95, 115, 10, 103), vec![100, 103]);
        assert_eq!(crossed_points(103, 123, 10, 103), Vec::<u64>::new());
    }

    #[test]
    fn seed_aggregation_uses_population_std() {
        let row = |frame, spl| MetricsRow {
            frame,
            split: "val".into(),
            success_rate: spl,
            spl,
            mean_reward: 0.0,
            seed: 0,
        };
        let runs = vec![vec![row(10, 0.4)], vec![row(10, 0.6)]];
        let agg = aggregate_seeds(&runs, |r| r.spl).unwrap();
        assert!((agg[0].1 - 0.5).abs() < 1e-12 && (agg[0].2 - 0.1).abs() < 1e-12);
        let bad = vec![vec![row(10, 0.4)], vec![row(20, 0.6)]];
        assert!(aggregate_seeds(&bad, |r| r.spl).is_err());
    }

    #[test]
    fn metrics_csv_round_trip() {
        let rows = vec![MetricsRow {
            frame: 500,
            split: "val".into(),
            success_rate: 0.25,
            spl: 0.125,
            mean_reward: -0.5,
            seed: 3,
        }];
        assert_eq!(parse_metrics_csv(&metrics_csv(&rows), "m").unwrap(), rows);
    }

    fn toy() -> (Arc<Architecture>, PolicyParameters, Trajectory) {
        use crate::gcn::CategoryEmbeddings;
        use crate::graph::{KnowledgeGraph, Vocabulary};
        let vocab = Vocabulary::desk();
        let dims = ModelDims {
            word_dim: 3,
            hidden: 3,
            layer_width: 4,
            fusion: 5,
        };
        let emb = CategoryEmbeddings::generate(&vocab, 3, 2).unwrap();
        let graph = KnowledgeGraph::random(&vocab, 0.3, 1).unwrap();
        let arch = Arc::new(Architecture::new(dims, emb, &graph, true, true).unwrap());
        let mut params = PolicyParameters::init(&arch, 3);
        params.policy_w.scale_in_place(100.0);
        let mut r = rng::rng_from(9, &[]);
        let obs = |r: &mut Rng| {
            let stack: Vec<f64> = (0..48).map(|_| r.random_range(0.0..1.0)).collect();
            Observation {
                frame: stack[..12].to_vec(),
                stack,
            }
        };
        let traj = Trajectory {
            observations: vec![obs(&mut r), obs(&mut r)],
            targets: vec![1, 6],
            actions: vec![2, 4],
            returns: vec![9.89, 10.0],
        };
        (arch, params, traj)
    }

    fn loss_value(arch: &Architecture, params: &PolicyParameters, traj: &Trajectory, adv: &[f64]) -> f64 {
        let mut tape = Tape::new();
        let vars = PolicyVars::bind(&mut tape, arch, params);
        let coef = LossCoefficients { value: 0.5, entropy: 0.01 };
        let l = a3c_loss_fixed_advantages(&mut tape, arch, &vars, traj, coef, adv).unwrap();
        tape.value(l.loss).item()
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let (arch, params, traj) = toy();
        let mut tape = Tape::new();
        let vars = PolicyVars::bind(&mut tape, &arch, &params);
        let coef = LossCoefficients { value: 0.5, entropy: 0.01 };
        let l = a3c_loss(&mut tape, &arch, &vars, &traj, coef).unwrap();
        tape.backward(l.loss).unwrap();
        let grads = vars.grads(&tape);
        let base = params.to_vec();
        let h = 1e-6;
        let mut checked = 0;
        for (k, g) in grads.iter().enumerate() {
            for idx in (0..g.len()).step_by(3) {
                let mut plus = base.clone();
                plus[k].data_mut()[idx] += h;
                let mut minus = base.clone();
                minus[k].data_mut()[idx] -= h;
                let fp = loss_value(&arch, &PolicyParameters::from_vec(&arch, plus).unwrap(), &traj, &l.advantages);
                let fm = loss_value(&arch, &PolicyParameters::from_vec(&arch, minus).unwrap(), &traj, &l.advantages);
                let fd = (fp - fm) / (2.0 * h);
                let an = g.data()[idx];
                let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-3);
                assert!(err < 1e-4, "param {k} entry {idx}: fd {fd} analytic {an}");
                checked += 1;
            }
        }
        assert!(checked > 50);
    }
}
