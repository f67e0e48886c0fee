//! Frozen-policy rollouts, Success Rate and SPL, split reports.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::Rng as _;
use rayon::prelude::*;

use crate::dataset::{present_targets, Dataset, GraphSpec, SceneSplit};
use crate::env::{oracle, Action, EnvConfig, NavEnv, RoomType, Scene};
use crate::error::{Error, Result};
use crate::graph::ObjectSplit;
use crate::policy::{forward_batch, sample_action, ActionMode, Input, Policy, PolicyVars};
use crate::rng;
use crate::tensor::Tape;

/// One evaluation cell: which scenes, which targets, how many episodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitSpec {
    pub room_type: RoomType,
    pub scene_split: SceneSplit,
    pub object_split: ObjectSplit,
    pub episodes_per_scene: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRecord {
    pub scene_id: String,
    pub target: usize,
    pub success: bool,
    /// Moves and rotations taken.
    pub path_length: usize,
    /// Shortest possible path length from the start pose.
    pub optimal_length: usize,
    pub reward: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    pub records: Vec<EpisodeRecord>,
    /// Episodes skipped because the scene had no candidate target or the
    /// target was unreachable from the start pose.
    pub excluded: usize,
}

#[derive(Clone, Copy, Debug)]
pub enum Agent<'a> {
    Network(&'a Policy, ActionMode),
    /// Uniform over the action set.
    Random,
    /// Follows a BFS shortest path, then stops if stop is available.
    Oracle,
}

impl Agent<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Agent::Network(p, _) if p.arch.use_graph => "gcn",
            Agent::Network(..) => "a3c",
            Agent::Random => "random",
            Agent::Oracle => "oracle",
        }
    }
}

pub fn success_rate(records: &[EpisodeRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::Contract("success rate of no episodes".into()));
    }
    Ok(records.iter().filter(|r| r.success).count() as f64 / records.len() as f64)
}

/// Mean of `S·L/max(P, L)`; a success with `L = P = 0` contributes 1.
pub fn spl(records: &[EpisodeRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::Contract("SPL of no episodes".into()));
    }
    let total = records
        .iter()
        .filter(|r| r.success)
        .map(|r| {
            let denom = r.path_length.max(r.optimal_length);
            if denom == 0 {
                1.0
            } else {
                r.optimal_length as f64 / denom as f64
            }
        })
        .fold(0.0, |a, b| a + b);
    Ok(total / records.len() as f64)
}

pub fn mean_reward(records: &[EpisodeRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::Contract("mean reward of no episodes".into()));
    }
    Ok(records.iter().map(|r| r.reward).sum::<f64>() / records.len() as f64)
}

/// `scenes.len() × episodes_per_scene` episodes; episode `j` of a scene
/// draws its target from `targets ∩ scene` and its start pose from
/// `(seed, scene id, j)`, so every agent faces the same episodes.
pub fn run_episodes(
    agent: Agent,
    scenes: &[Arc<Scene>],
    targets: &[usize],
    episodes_per_scene: usize,
    env_config: &EnvConfig,
    num_categories: usize,
    seed: u64,
) -> Result<EvalResult> {
    if let Agent::Network(p, _) = agent {
        if p.arch.num_categories != num_categories || p.arch.with_stop() != env_config.with_stop {
            return Err(Error::Load(format!(
                "policy for {} categories and {} actions does not fit this evaluation",
                p.arch.num_categories, p.arch.num_actions
            )));
        }
    }
    let jobs: Vec<(usize, usize)> = (0..scenes.len())
        .flat_map(|s| (0..episodes_per_scene).map(move |j| (s, j)))
        .collect();
    let outcomes: Vec<Result<Option<EpisodeRecord>>> = jobs
        .par_iter()
        .map(|&(s, j)| {
            let scene = &scenes[s];
            let present = present_targets(scene, targets);
            if present.is_empty() {
                return Ok(None);
            }
            let ep_seed = rng::derive_seed(seed, &[rng::name_tag(scene.id()), j as u64]);
            let mut pick = rng::rng_from(ep_seed, &[rng::name_tag("target")]);
            let target = present[pick.random_range(0..present.len())];
            let env = NavEnv::reset(Arc::clone(scene), num_categories, target, env_config.clone(), ep_seed, false)?;
            run_episode(agent, env, ep_seed)
        })
        .collect();
    let mut records = Vec::with_capacity(jobs.len());
    let mut excluded = 0;
    for o in outcomes {
        match o? {
            Some(r) => records.push(r),
            None => excluded += 1,
        }
    }
    Ok(EvalResult { records, excluded })
}

fn run_episode(agent: Agent, mut env: NavEnv, seed: u64) -> Result<Option<EpisodeRecord>> {
    let scene = Arc::clone(env.scene());
    let max_d = env.config().vision.success_distance;
    let optimal = match oracle::shortest_path(&scene, env.start_pose(), env.target(), max_d) {
        Ok(path) => path,
        Err(Error::Unreachable(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let mut rng = rng::rng_from(seed, &[rng::name_tag("actions")]);
    match agent {
        Agent::Oracle => {
            for &a in &optimal {
                if env.is_done() {
                    break;
                }
                env.step(a)?;
            }
            if !env.is_done() && env.config().with_stop {
                env.step(Action::Stop)?;
            }
        }
        Agent::Random => {
            let n = env.num_actions();
            while !env.is_done() {
                env.step(Action::from_index(rng.random_range(0..n)))?;
            }
        }
        Agent::Network(policy, mode) => {
            let mut tape = Tape::new();
            let vars = PolicyVars::bind(&mut tape, &policy.arch, &policy.params);
            let mark = tape.len();
            while !env.is_done() {
                let obs = env.observation();
                let input = Input {
                    observation: &obs,
                    target: env.target(),
                };
                let (logits, _) = forward_batch(&mut tape, &policy.arch, &vars, &[input])?;
                let a = sample_action(tape.value(logits).data(), mode, &mut rng)?;
                tape.truncate(mark);
                env.step(Action::from_index(a))?;
            }
        }
    }
    Ok(Some(EpisodeRecord {
        scene_id: scene.id().to_string(),
        target: env.target(),
        success: env.succeeded(),
        path_length: env.path_length(),
        optimal_length: optimal.len(),
        reward: env.total_reward(),
    }))
}

/// Episodes of one split of `data`.
pub fn evaluate_split(agent: Agent, data: &Dataset, split: &SplitSpec, with_stop: bool, seed: u64) -> Result<EvalResult> {
    let scenes = data.room(split.room_type).split(split.scene_split);
    let targets = data.targets(split.room_type, split.object_split);
    let seed = rng::derive_seed(
        seed,
        &[
            rng::name_tag(split.room_type.as_str()),
            rng::name_tag(split.scene_split.as_str()),
            rng::name_tag(split.object_split.as_str()),
        ],
    );
    run_episodes(
        agent,
        scenes,
        &targets,
        split.episodes_per_scene,
        &EnvConfig::new(with_stop),
        data.vocab.len(),
        seed,
    )
}

/// One episode per line: `scene_id target S P L`.
pub fn episode_log(records: &[EpisodeRecord], data: &Dataset) -> String {
    let mut out = String::from("scene_id\ttarget\tS\tP\tL\n");
    for r in records {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            r.scene_id,
            data.vocab.name(r.target),
            u8::from(r.success),
            r.path_length,
            r.optimal_length
        )
        .unwrap();
    }
    out
}

/// Leak check: true iff no record's target is a known category when
/// `split` is novel (or the reverse).
pub fn targets_respect_split(records: &[EpisodeRecord], data: &Dataset, split: ObjectSplit) -> bool {
    records.iter().all(|r| data.vocab.category(r.target).split == split)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    /// Room type name or `average`.
    pub room_type: String,
    pub scene_split: SceneSplit,
    pub object_split: ObjectSplit,
    pub method: String,
    pub spl_pct: f64,
    pub success_pct: f64,
}

/// SPL and success rate (%) for every room type and the four
/// seen/unseen × known/novel splits, plus per-split averages over rooms.
/// `policies` pairs each room type with its trained network; the random
/// baseline is always included.
pub fn split_report(
    data: &Dataset,
    policies: &[(RoomType, &Policy)],
    with_stop: bool,
    mode: ActionMode,
    episodes_per_scene: usize,
    seed: u64,
) -> Result<Vec<ReportRow>> {
    let mut rows = Vec::new();
    let splits = [
        (SceneSplit::Seen, ObjectSplit::Known),
        (SceneSplit::Seen, ObjectSplit::Novel),
        (SceneSplit::Unseen, ObjectSplit::Known),
        (SceneSplit::Unseen, ObjectSplit::Novel),
    ];
    for &(room, policy) in policies {
        for (scene_split, object_split) in splits {
            let spec = SplitSpec {
                room_type: room,
                scene_split,
                object_split,
                episodes_per_scene,
            };
            for agent in [Agent::Random, Agent::Network(policy, mode)] {
                let res = evaluate_split(agent, data, &spec, with_stop, seed)?;
                if res.records.is_empty() {
                    continue;
                }
                rows.push(ReportRow {
                    room_type: room.as_str().to_string(),
                    scene_split,
                    object_split,
                    method: agent.name().to_string(),
                    spl_pct: 100.0 * spl(&res.records)?,
                    success_pct: 100.0 * success_rate(&res.records)?,
                });
            }
        }
    }
    let mut averages = Vec::new();
    for (scene_split, object_split) in splits {
        let mut methods: Vec<&str> = Vec::new();
        for r in &rows {
            if !methods.contains(&r.method.as_str()) {
                methods.push(&r.method);
            }
        }
        for m in methods {
            let cell: Vec<&ReportRow> = rows
                .iter()
                .filter(|r| r.method == m && r.scene_split == scene_split && r.object_split == object_split)
                .collect();
            if cell.is_empty() {
                continue;
            }
            let k = cell.len() as f64;
            averages.push(ReportRow {
                room_type: "average".into(),
                scene_split,
                object_split,
                method: m.to_string(),
                spl_pct: cell.iter().map(|r| r.spl_pct).sum::<f64>() / k,
                success_pct: cell.iter().map(|r| r.success_pct).sum::<f64>() / k,
            });
        }
    }
    rows.extend(averages);
    Ok(rows)
}

pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from("room_type,scene_split,object_split,method,spl_pct,success_pct\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{:.1},{:.1}",
            r.room_type,
            r.scene_split.as_str(),
            r.object_split.as_str(),
            r.method,
            r.spl_pct,
            r.success_pct
        )
        .unwrap();
    }
    out
}

/// Graph variants and drop fractions of the knowledge-graph ablation.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationPlan {
    pub cells: Vec<GraphSpec>,
    /// Training seeds; every cell is trained once per seed.
    pub seeds: Vec<u64>,
    pub episodes_per_scene: usize,
}

impl AblationPlan {
    pub const FRACTIONS: [f64; 5] = [0.0, 0.2, 0.4, 0.6, 0.8];

    /// Objects and relations at every fraction, then the fully connected
    /// and random graphs.
    pub fn full(seeds: Vec<u64>, episodes_per_scene: usize) -> Self {
        let mut cells: Vec<GraphSpec> = Self::FRACTIONS.iter().map(|&f| GraphSpec::DroppedObjects(f)).collect();
        cells.extend(Self::FRACTIONS.iter().map(|&f| GraphSpec::DroppedRelations(f)));
        cells.extend([GraphSpec::Dense, GraphSpec::Random]);
        Self {
            cells,
            seeds,
            episodes_per_scene,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationCell {
    pub graph: GraphSpec,
    /// SPL (%) on unseen scenes with known targets, one per seed.
    pub spl_pct: Vec<f64>,
}

impl AblationCell {
    /// `objects`, `relations`, `fully_connected` or `random`.
    pub fn row(&self) -> &'static str {
        match self.graph {
            GraphSpec::DroppedObjects(_) => "objects",
            GraphSpec::DroppedRelations(_) | GraphSpec::Real => "relations",
            GraphSpec::Dense => "fully_connected",
            GraphSpec::Random => "random",
        }
    }

    pub fn fraction(&self) -> Option<f64> {
        match self.graph {
            GraphSpec::DroppedObjects(f) | GraphSpec::DroppedRelations(f) => Some(f),
            GraphSpec::Real => Some(0.0),
            _ => None,
        }
    }

    /// Mean and population standard deviation over seeds.
    pub fn mean_std(&self) -> (f64, f64) {
        crate::trainer::mean_std(&self.spl_pct)
    }
}

fn canonical(graph: GraphSpec) -> GraphSpec {
    match graph {
        GraphSpec::DroppedObjects(f) | GraphSpec::DroppedRelations(f) if f == 0.0 => GraphSpec::Real,
        g => g,
    }
}

/// Trains (through `policy_for`) one model per cell and seed and reports
/// its SPL on the unseen-scene, known-object split of `room`. Zero-drop
/// cells of both rows share the unablated model.
pub fn ablation_suite(
    data: &Dataset,
    room: RoomType,
    plan: &AblationPlan,
    with_stop: bool,
    mode: ActionMode,
    mut policy_for: impl FnMut(GraphSpec, u64) -> Result<Policy>,
) -> Result<Vec<AblationCell>> {
    if plan.seeds.is_empty() {
        return Err(Error::Contract("ablation without seeds".into()));
    }
    let split = SplitSpec {
        room_type: room,
        scene_split: SceneSplit::Unseen,
        object_split: ObjectSplit::Known,
        episodes_per_scene: plan.episodes_per_scene,
    };
    let mut done: Vec<(String, u64, f64)> = Vec::new();
    let mut cells = Vec::with_capacity(plan.cells.len());
    for &graph in &plan.cells {
        let key = canonical(graph).to_string();
        let mut spl_pct = Vec::with_capacity(plan.seeds.len());
        for &seed in &plan.seeds {
            if let Some(&(_, _, v)) = done.iter().find(|(k, s, _)| *k == key && *s == seed) {
                spl_pct.push(v);
                continue;
            }
            let policy = policy_for(canonical(graph), seed)?;
            let res = evaluate_split(Agent::Network(&policy, mode), data, &split, with_stop, seed)?;
            let v = 100.0 * spl(&res.records)?;
            done.push((key.clone(), seed, v));
            spl_pct.push(v);
        }
        cells.push(AblationCell { graph, spl_pct });
    }
    Ok(cells)
}

/// One row per cell: `row,fraction,spl_mean_pct,spl_std_pct,per_seed`
/// with per-seed values separated by `;`.
pub fn ablation_csv(cells: &[AblationCell]) -> String {
    let mut out = String::from("row,fraction,spl_mean_pct,spl_std_pct,per_seed\n");
    for c in cells {
        let (m, s) = c.mean_std();
        let per_seed: Vec<String> = c.spl_pct.iter().map(|v| format!("{v:.1}")).collect();
        let fraction = c.fraction().map(|f| f.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{:.1},{:.1},{}", c.row(), fraction, m, s, per_seed.join(";")).unwrap();
    }
    out
}
