//! Drivers behind the CLI subcommands. Every driver returns its results and
//! writes its files under the output directory; jobs run in parallel but
//! results are always collected in job order.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{CameraPolicyKind, NavPolicyKind, ResolvedPolicy, RunConfig, SceneSource, TrainEnvKind};
use super::envs::{scene_pool, AlignmentEnv, CameraEnv, JointEnv};
use super::episode::{run_episode, EpisodeConfig, EpisodeOutput, TrajectoryRecord};
use super::generate::{default_gap_limits, generate_episode, generate_scene, EpisodeSpec, SceneKind};
use crate::metrics::{aggregate, mean_std, AggregateReport, EpisodeSummary, MeanStd};
use crate::neural::train::CHECKPOINT_VERSION;
use crate::neural::{train, ActionMode, Checkpoint, CurvePoint, FeatureSpec, PolicyKind, RngState};
use crate::world::Scene;
use crate::{Error, Result};

/// One row of the metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: String,
    pub n_goals: usize,
    pub seed: u64,
    #[serde(rename = "SPL")]
    pub spl: Option<f64>,
    #[serde(rename = "PPL")]
    pub ppl: Option<f64>,
    #[serde(rename = "Success")]
    pub success: f64,
    #[serde(rename = "Progress")]
    pub progress: f64,
    pub steps: u32,
}

impl MetricsRow {
    fn new(method: &str, seed: u64, out: &EpisodeOutput) -> Self {
        let s = EpisodeSummary::from_result(&out.result);
        Self { method: method.into(), n_goals: out.result.n_goals, seed, spl: s.spl, ppl: s.ppl, success: s.success, progress: s.progress, steps: out.result.steps }
    }

    fn summary(&self) -> EpisodeSummary {
        EpisodeSummary { spl: self.spl, ppl: self.ppl, success: self.success, progress: self.progress, steps: self.steps as f64, explored_area: 0.0 }
    }
}

#[derive(Serialize)]
struct LoggedRecord<'a> {
    method: &'a str,
    seed: u64,
    #[serde(flatten)]
    record: &'a TrajectoryRecord,
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Parse { what: "csv row".into(), reason: e.to_string() })?;
    }
    w.into_inner().map_err(|e| Error::Parse { what: "csv".into(), reason: e.to_string() })
}

fn jsonl_bytes(method: &str, seed: u64, records: &[TrajectoryRecord], out: &mut Vec<u8>) -> Result<()> {
    for record in records {
        serde_json::to_writer(&mut *out, &LoggedRecord { method, seed, record })?;
        out.push(b'\n');
    }
    Ok(())
}

/// Runs one episode per seed with the configured policy pair.
pub fn run_seeds(cfg: &RunConfig, scene: &Scene, policy: &ResolvedPolicy, n_goals: usize, ep_cfg: &EpisodeConfig) -> Result<Vec<(u64, EpisodeSpec, EpisodeOutput)>> {
    cfg.seeds
        .par_iter()
        .map(|&seed| {
            let spec = cfg.episode_for(scene, n_goals, seed)?;
            let mut p = policy.instantiate(seed, cfg.action_mode());
            let out = run_episode(scene, &spec, ep_cfg, &mut p)?;
            Ok((seed, spec, out))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub rows: Vec<MetricsRow>,
    pub aggregate: AggregateReport,
    pub metrics_csv: PathBuf,
    pub trajectory_jsonl: PathBuf,
}

/// `run`: one episode per seed, metrics CSV plus per-step JSONL.
pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    let policy = ResolvedPolicy::resolve(&cfg.camera, &cfg.nav)?;
    let scene = cfg.scene.load()?;
    let method = cfg.camera.to_string();
    let runs = run_seeds(cfg, &scene, &policy, cfg.n_goals, &cfg.episode_config())?;

    let dir = cfg.resolved_output_dir();
    create_dir(&dir)?;
    let rows: Vec<MetricsRow> = runs.iter().map(|(seed, _, out)| MetricsRow::new(&method, *seed, out)).collect();
    let mut jsonl = Vec::new();
    for (seed, _, out) in &runs {
        jsonl_bytes(&method, *seed, &out.records, &mut jsonl)?;
    }
    let metrics_csv = dir.join("metrics.csv");
    let trajectory_jsonl = dir.join("trajectory.jsonl");
    write_file(&metrics_csv, &csv_bytes(&rows)?)?;
    write_file(&trajectory_jsonl, &jsonl)?;
    let summaries: Vec<EpisodeSummary> = runs.iter().map(|(_, _, o)| EpisodeSummary::from_result(&o.result)).collect();
    let aggregate = aggregate(&summaries)?;
    let episodes: Vec<&EpisodeSpec> = runs.iter().map(|(_, s, _)| s).collect();
    let summary = serde_json::json!({ "method": method, "aggregate": aggregate, "episodes": episodes });
    write_file(&dir.join("summary.json"), serde_json::to_string_pretty(&summary)?.as_bytes())?;
    Ok(RunReport { rows, aggregate, metrics_csv, trajectory_jsonl })
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalSummaryRow {
    pub method: String,
    pub n_goals: usize,
    pub seeds: usize,
    pub spl_mean: Option<f64>,
    pub spl_std: Option<f64>,
    pub ppl_mean: Option<f64>,
    pub ppl_std: Option<f64>,
    pub success_mean: f64,
    pub success_std: f64,
    pub progress_mean: f64,
    pub progress_std: f64,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub rows: Vec<MetricsRow>,
    pub summary: Vec<EvalSummaryRow>,
    pub table: String,
}

fn pct(m: Option<MeanStd>) -> String {
    m.map_or_else(|| "n/a".into(), |m| format!("{:.1} ± {:.1}", 100.0 * m.mean, 100.0 * m.std))
}

/// `eval`: every policy pair × every goal count × every seed, one row each,
/// plus a mean ± std table with one line per policy and goal count.
pub fn eval(cfg: &RunConfig, policies: &[(CameraPolicyKind, NavPolicyKind)], n_goals: &[usize]) -> Result<EvalReport> {
    cfg.validate()?;
    if policies.is_empty() || n_goals.is_empty() {
        return Err(Error::InvalidConfig("eval needs at least one policy and one goal count".into()));
    }
    if let Some(n) = n_goals.iter().find(|n| !(1..=3).contains(*n)) {
        return Err(Error::InvalidConfig(format!("n_goals must be 1, 2 or 3, got {n}")));
    }
    let resolved = policies.iter().map(|(c, n)| ResolvedPolicy::resolve(c, n)).collect::<Result<Vec<_>>>()?;
    let scene = cfg.scene.load()?;
    let ep_cfg = cfg.episode_config();
    let jobs: Vec<(usize, usize, u64)> = (0..policies.len())
        .flat_map(|p| n_goals.iter().flat_map(move |&n| cfg.seeds.iter().map(move |&s| (p, n, s))))
        .collect();
    let rows: Vec<MetricsRow> = jobs
        .par_iter()
        .map(|&(p, n, seed)| {
            let spec = cfg.episode_for(&scene, n, seed)?;
            let mut policy = resolved[p].instantiate(seed, cfg.action_mode());
            let out = run_episode(&scene, &spec, &ep_cfg, &mut policy)?;
            Ok(MetricsRow::new(&policies[p].0.to_string(), seed, &out))
        })
        .collect::<Result<_>>()?;

    let mut summary = Vec::new();
    let mut table = String::from("| Method | n-ON | SPL (%) | PPL (%) | Success (%) | Progress (%) |\n|---|---|---|---|---|---|\n");
    for (camera, _) in policies {
        let method = camera.to_string();
        for &n in n_goals {
            let group: Vec<EpisodeSummary> = rows.iter().filter(|r| r.method == method && r.n_goals == n).map(MetricsRow::summary).collect();
            let agg = aggregate(&group)?;
            table.push_str(&format!(
                "| {method} | {n}-ON | {} | {} | {} | {} |\n",
                pct(agg.spl),
                pct(agg.ppl),
                pct(Some(agg.success)),
                pct(Some(agg.progress))
            ));
            summary.push(EvalSummaryRow {
                method: method.clone(),
                n_goals: n,
                seeds: group.len(),
                spl_mean: agg.spl.map(|m| m.mean),
                spl_std: agg.spl.map(|m| m.std),
                ppl_mean: agg.ppl.map(|m| m.mean),
                ppl_std: agg.ppl.map(|m| m.std),
                success_mean: agg.success.mean,
                success_std: agg.success.std,
                progress_mean: agg.progress.mean,
                progress_std: agg.progress.std,
            });
        }
    }
    let dir = cfg.resolved_output_dir();
    create_dir(&dir)?;
    write_file(&dir.join("eval.csv"), &csv_bytes(&rows)?)?;
    write_file(&dir.join("eval_summary.csv"), &csv_bytes(&summary)?)?;
    write_file(&dir.join("eval_table.md"), table.as_bytes())?;
    Ok(EvalReport { rows, summary, table })
}

/// One exploration episode: a scene and a start, goals only sighted.
#[derive(Debug, Clone)]
pub struct ExploreJob {
    pub scene_index: usize,
    pub scene: Arc<Scene>,
    pub spec: EpisodeSpec,
}

/// Builds `n_scenes × seeds` exploration episodes with three goals each.
pub fn explore_jobs(kind: SceneKind, size_m: f64, scene_seed: u64, n_scenes: usize, seeds: &[u64], n_goals: usize) -> Result<Vec<ExploreJob>> {
    let scenes = (0..n_scenes)
        .map(|i| generate_scene(kind, size_m, scene_seed.wrapping_add(i as u64)).map(Arc::new))
        .collect::<Result<Vec<_>>>()?;
    jobs_for_scenes(&scenes, seeds, n_goals)
}

fn jobs_for_scenes(scenes: &[Arc<Scene>], seeds: &[u64], n_goals: usize) -> Result<Vec<ExploreJob>> {
    let mut jobs = Vec::with_capacity(scenes.len() * seeds.len());
    for (i, scene) in scenes.iter().enumerate() {
        let (d_min, d_max) = default_gap_limits(scene);
        for &seed in seeds {
            let spec = generate_episode(scene, &format!("scene-{i}"), n_goals, d_min, d_max, seed)?;
            jobs.push(ExploreJob { scene_index: i, scene: Arc::clone(scene), spec });
        }
    }
    Ok(jobs)
}

#[derive(Debug, Clone, Serialize)]
pub struct ExploreEpisode {
    pub method: String,
    pub scene: usize,
    pub seed: u64,
    pub final_area: f64,
    pub found_all_step: Option<u32>,
    pub motor_rate: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExploreStats {
    pub method: String,
    /// Mean explored area after each step, index 0 is the first observation.
    pub mean_area_curve: Vec<f64>,
    pub final_area: MeanStd,
    /// Fraction of episodes in which every goal was sighted.
    pub find_all_rate: f64,
    /// Fraction of episodes with all goals sighted by each step.
    pub find_all_curve: Vec<f64>,
    pub motor_rate: f64,
    pub episodes: Vec<ExploreEpisode>,
}

/// Frontier navigation with each camera policy on every job, run to the
/// budget.
pub fn explore_protocol(jobs: &[ExploreJob], policies: &[(String, ResolvedPolicy)], ep_cfg: &EpisodeConfig, mode: ActionMode) -> Result<Vec<ExploreStats>> {
    let ep_cfg = EpisodeConfig { explore: true, ..*ep_cfg };
    let budget = ep_cfg.budget as usize;
    let flat: Vec<(usize, usize)> = (0..policies.len()).flat_map(|p| (0..jobs.len()).map(move |j| (p, j))).collect();
    let outs: Vec<EpisodeOutput> = flat
        .par_iter()
        .map(|&(p, j)| {
            let job = &jobs[j];
            let mut policy = policies[p].1.instantiate(job.spec.seed, mode);
            run_episode(&job.scene, &job.spec, &ep_cfg, &mut policy)
        })
        .collect::<Result<_>>()?;
    let mut stats = Vec::with_capacity(policies.len());
    for (p, (name, _)) in policies.iter().enumerate() {
        let group = &outs[p * jobs.len()..(p + 1) * jobs.len()];
        let n = group.len().max(1) as f64;
        let mut curve = vec![0.0; budget + 1];
        let mut find_curve = vec![0.0; budget + 1];
        let mut episodes = Vec::with_capacity(group.len());
        for (job, out) in jobs.iter().zip(group) {
            for &(step, area) in &out.result.explored_area_curve {
                curve[step as usize] += area / n;
            }
            if let Some(s) = out.result.found_all_step {
                for v in &mut find_curve[s as usize..] {
                    *v += 1.0 / n;
                }
            }
            let motor = out.records.iter().filter(|r| r.motor_actuated).count() as f64 / out.records.len().max(1) as f64;
            episodes.push(ExploreEpisode {
                method: name.clone(),
                scene: job.scene_index,
                seed: job.spec.seed,
                final_area: out.result.explored_area_curve.last().map_or(0.0, |p| p.1),
                found_all_step: out.result.found_all_step,
                motor_rate: motor,
            });
        }
        let finals: Vec<f64> = episodes.iter().map(|e| e.final_area).collect();
        stats.push(ExploreStats {
            method: name.clone(),
            mean_area_curve: curve,
            final_area: mean_std(&finals).unwrap_or(MeanStd { mean: 0.0, std: 0.0, n: 0 }),
            find_all_rate: episodes.iter().filter(|e| e.found_all_step.is_some()).count() as f64 / n,
            find_all_curve: find_curve,
            motor_rate: episodes.iter().map(|e| e.motor_rate).sum::<f64>() / n,
            episodes,
        });
    }
    Ok(stats)
}

/// `explore`: area and find-all curves per camera policy. Generated scene
/// sources yield `n_scenes` scenes with consecutive seeds; other sources use
/// their one scene.
pub fn explore(cfg: &RunConfig, cameras: &[CameraPolicyKind], n_scenes: usize) -> Result<Vec<ExploreStats>> {
    cfg.validate()?;
    let policies = cameras
        .iter()
        .map(|c| Ok((c.to_string(), ResolvedPolicy::resolve(c, &NavPolicyKind::Fbe)?)))
        .collect::<Result<Vec<_>>>()?;
    let jobs = match &cfg.scene {
        SceneSource::Generated { kind, size_m, seed } => explore_jobs(*kind, *size_m, *seed, n_scenes.max(1), &cfg.seeds, cfg.n_goals)?,
        other => jobs_for_scenes(&[Arc::new(other.load()?)], &cfg.seeds, cfg.n_goals)?,
    };
    let stats = explore_protocol(&jobs, &policies, &cfg.episode_config(), cfg.action_mode())?;
    let dir = cfg.resolved_output_dir();
    create_dir(&dir)?;
    let curves: serde_json::Map<String, serde_json::Value> = stats
        .iter()
        .map(|s| (s.method.clone(), serde_json::json!({ "area": s.mean_area_curve, "find_all": s.find_all_curve })))
        .collect();
    write_file(&dir.join("explore_curves.json"), serde_json::to_string(&curves)?.as_bytes())?;
    let episodes: Vec<&ExploreEpisode> = stats.iter().flat_map(|s| &s.episodes).collect();
    write_file(&dir.join("explore.csv"), &csv_bytes(&episodes)?)?;
    Ok(stats)
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub checkpoint: PathBuf,
    pub curve_csv: PathBuf,
    pub curve: Vec<CurvePoint>,
}

#[derive(Serialize)]
struct CurveRow {
    update: usize,
    mean_reward: f64,
    mean_episode_return: Option<f64>,
    episodes: usize,
    motor_rate: f64,
    policy_loss: f64,
    value_loss: f64,
    entropy: f64,
    clip_frac: f64,
}

/// `train`: PPO on the configured environment; writes the checkpoint and the
/// learning curve.
pub fn train_policy(cfg: &RunConfig, mut on_update: impl FnMut(&CurvePoint)) -> Result<TrainReport> {
    cfg.validate()?;
    let t = &cfg.train;
    let tc = t.train_config();
    let pool = scene_pool(t.pool_scenes, t.pool_size_m, t.pool_seed)?;
    let env_seed = |i: usize| t.seed.wrapping_mul(7919).wrapping_add(i as u64);
    let k = cfg.heuristic.k;
    let (kind, features, out) = match t.env {
        TrainEnvKind::Alignment => {
            let acfg = super::envs::AlignmentConfig { heuristic: cfg.heuristic, sensor: cfg.sensor, ..t.alignment };
            let out = train(|i| Ok(AlignmentEnv::new(Arc::clone(&pool), acfg, env_seed(i))), &tc, t.seed, &mut on_update)?;
            (PolicyKind::Camera, FeatureSpec::camera(k), out)
        }
        TrainEnvKind::Camera => {
            let mut ecfg = t.camera_env;
            ecfg.episode = EpisodeConfig { sensor: cfg.sensor, heuristic: cfg.heuristic, reward: cfg.reward, nav: cfg.frontier, ..ecfg.episode };
            let out = train(|i| CameraEnv::new(Arc::clone(&pool), ecfg, env_seed(i)), &tc, t.seed, &mut on_update)?;
            (PolicyKind::Camera, FeatureSpec::camera(k), out)
        }
        TrainEnvKind::Joint => {
            let mut jcfg = t.joint_env;
            jcfg.episode = EpisodeConfig { sensor: cfg.sensor, heuristic: cfg.heuristic, reward: cfg.reward, nav: cfg.frontier, ..jcfg.episode };
            let out = train(|i| JointEnv::new(Arc::clone(&pool), jcfg, env_seed(i)), &tc, t.seed, &mut on_update)?;
            (PolicyKind::Joint, FeatureSpec::joint(k), out)
        }
    };
    let dir = cfg.resolved_output_dir();
    create_dir(&dir)?;
    let checkpoint = if t.checkpoint.is_absolute() { t.checkpoint.clone() } else { dir.join(&t.checkpoint) };
    if let Some(parent) = checkpoint.parent() {
        create_dir(parent)?;
    }
    Checkpoint {
        version: CHECKPOINT_VERSION,
        kind,
        features,
        train: tc,
        seed: t.seed,
        updates_done: out.curve.len(),
        rng: RngState::capture(&out.rng),
        params: out.params,
    }
    .save(&checkpoint)?;
    let rows: Vec<CurveRow> = out
        .curve
        .iter()
        .map(|c| CurveRow {
            update: c.update,
            mean_reward: c.mean_reward,
            mean_episode_return: c.mean_episode_return,
            episodes: c.episodes,
            motor_rate: c.motor_rate,
            policy_loss: c.policy_loss,
            value_loss: c.value_loss,
            entropy: c.entropy,
            clip_frac: c.clip_frac,
        })
        .collect();
    let curve_csv = dir.join("learning_curve.csv");
    write_file(&curve_csv, &csv_bytes(&rows)?)?;
    Ok(TrainReport { checkpoint, curve_csv, curve: out.curve })
}

/// `gen`: one scene file plus `episodes` episode files next to it.
pub fn generate_files(kind: SceneKind, size_m: f64, seed: u64, n_goals: usize, episodes: usize, dir: &Path) -> Result<Vec<PathBuf>> {
    let scene = generate_scene(kind, size_m, seed)?;
    create_dir(dir)?;
    let id = format!("{kind}-{seed}");
    let scene_path = dir.join(format!("{id}.json"));
    scene.save(&scene_path)?;
    let (d_min, d_max) = default_gap_limits(&scene);
    let mut written = vec![scene_path];
    for e in 0..episodes {
        let spec = generate_episode(&scene, &id, n_goals, d_min, d_max, seed.wrapping_add(e as u64))?;
        let path = dir.join(format!("{id}-episode-{e}.json"));
        spec.save(&path)?;
        written.push(path);
    }
    Ok(written)
}
