//! Dataset generation and the Dijkstra-supervised training loop.
//!
//! A training case is a feasible problem instance with its RGG, occupancy
//! grid and precomputed edge validity. Each step rolls the current model
//! forward for k greedy steps (k ~ U{1..k_max}) using true edge validity,
//! asks Dijkstra for the next vertex of the shortest valid path from the
//! prefix endpoint to the goal, and minimizes cross-entropy of the
//! endpoint's guidance row against that label.

use std::path::Path as FsPath;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::dijkstra;
use crate::config::{Config, GenConfig, TrainConfig, WorldFamily};
use crate::graph::{build_rgg, default_radius, sample_free, Rgg, GOAL_INDEX, INIT_INDEX};
use crate::guidance::GuidanceModel;
use crate::tensor::tape::Tape;
use crate::world::{
    occupancy_grid, segment_free, BoxObstacle, CollisionCounter, ProblemInstance, WorldModel,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingCase {
    pub problem: ProblemInstance,
    pub rgg: Rgg,
    /// Occupancy grid of the workspace at the model's resolution.
    pub grid: Vec<f64>,
    /// segment_free result per rgg edge, in edge order.
    pub edge_validity: Vec<bool>,
}

impl TrainingCase {
    pub fn world(&self) -> &WorldModel {
        &self.problem.world
    }

    pub fn bounds(&self) -> Vec<[f64; 2]> {
        self.problem.world.state_bounds()
    }

    /// Precomputed validity of edge (i, j); false for non-edges.
    pub fn edge_valid(&self, i: usize, j: usize) -> bool {
        let key = (i.min(j), i.max(j));
        match self.rgg.edges.binary_search(&key) {
            Ok(e) => self.edge_validity[e],
            Err(_) => false,
        }
    }
}

fn sample_world(family: &WorldFamily, gen: &GenConfig, rng: &mut ChaCha8Rng) -> Result<WorldModel> {
    let mut world = match family {
        WorldFamily::Point2d => WorldModel::Point {
            dim: 2,
            bounds: vec![[0.0, 1.0]; 2],
            obstacles: Vec::new(),
        },
        WorldFamily::Arm { links } => WorldModel::Arm {
            link_lengths: vec![1.0 / *links as f64; *links],
            joint_limits: vec![[-std::f64::consts::PI, std::f64::consts::PI]; *links],
            base: [0.0, 0.0],
            obstacles: Vec::new(),
        },
    };
    let wb = world.workspace_bounds();
    let count = rng.gen_range(gen.obstacle_count[0]..=gen.obstacle_count[1]);
    for _ in 0..count {
        let center: Vec<f64> = wb.iter().map(|b| rng.gen_range(b[0]..b[1])).collect();
        let half: Vec<f64> = wb
            .iter()
            .map(|b| {
                let width = b[1] - b[0];
                rng.gen_range(gen.obstacle_extent_frac[0]..gen.obstacle_extent_frac[1]) * width
            })
            .collect();
        world.obstacles_mut().push(BoxObstacle::new(center, half)?);
    }
    world.validate()?;
    Ok(world)
}

/// Sample one feasible training case: random obstacles, random free
/// init/goal, an RGG with precomputed edge validity, and a Dijkstra
/// feasibility certificate. Infeasible draws are retried up to the budget.
pub fn generate_case(
    config: &Config,
    family: &WorldFamily,
    rng: &mut ChaCha8Rng,
) -> Result<TrainingCase> {
    for _ in 0..config.gen.retry_budget {
        let world = sample_world(family, &config.gen, rng)?;
        let endpoints = match sample_free(&world, 2, rng) {
            Ok(s) => s,
            Err(Error::Sampling(_)) => continue,
            Err(e) => return Err(e),
        };
        let problem = ProblemInstance {
            world,
            x_init: endpoints[0].clone(),
            x_goal: endpoints[1].clone(),
            goal_radius: config.gen.goal_radius,
        };
        let radius = match config.graph.radius {
            Some(r) => r,
            None => default_radius(&problem.world, config.gen.n_samples, rng)?,
        };
        let rgg = match build_rgg(&problem, config.gen.n_samples, radius, rng) {
            Ok(g) => g,
            Err(Error::Sampling(_)) => continue,
            Err(e) => return Err(e),
        };
        let resolution = config.graph.resolution_frac * problem.world.state_diagonal();
        let mut counter = CollisionCounter::new();
        let edge_validity: Vec<bool> = rgg
            .edges
            .iter()
            .map(|&(i, j)| {
                segment_free(&problem.world, &rgg.nodes[i], &rgg.nodes[j], resolution, &mut counter)
            })
            .collect::<Result<_>>()?;
        let grid = occupancy_grid(&problem.world, config.model.m)?;
        let case = TrainingCase { problem, rgg, grid, edge_validity };
        if dijkstra(&case.rgg, |i, j| case.edge_valid(i, j), INIT_INDEX, GOAL_INDEX).is_some() {
            return Ok(case);
        }
    }
    Err(Error::Config(format!(
        "case generation exhausted {} attempts for {:?}",
        config.gen.retry_budget, family
    )))
}

/// Generate `count` cases cycling through the configured families, each
/// from its own derived seed so generation parallelizes and reorders
/// safely.
pub fn generate_dataset(config: &Config, count: usize, seed: u64) -> Result<Vec<TrainingCase>> {
    if config.gen.families.is_empty() {
        return Err(Error::Config("no world families configured".into()));
    }
    let mut cases = Vec::with_capacity(count);
    for i in 0..count {
        let family = &config.gen.families[i % config.gen.families.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(case_seed(seed, i));
        cases.push(generate_case(config, family, &mut rng)?);
    }
    Ok(cases)
}

pub fn case_seed(dataset_seed: u64, index: usize) -> u64 {
    dataset_seed ^ (index as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub config_sha256: String,
    pub files: Vec<String>,
}

pub fn config_hash(config: &Config) -> Result<String> {
    let text = serde_json::to_string(config)?;
    let digest = Sha256::digest(text.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// One JSON file per case plus a manifest recording the seed and config
/// hash the dataset was generated from.
pub fn save_dataset(
    dir: &FsPath,
    cases: &[TrainingCase],
    seed: u64,
    config: &Config,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::with_capacity(cases.len());
    for (i, case) in cases.iter().enumerate() {
        let name = format!("case_{i:05}.json");
        std::fs::write(dir.join(&name), serde_json::to_string(case)?)?;
        files.push(name);
    }
    let manifest = DatasetManifest { seed, config_sha256: config_hash(config)?, files };
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn load_dataset(dir: &FsPath) -> Result<(Vec<TrainingCase>, DatasetManifest)> {
    let manifest: DatasetManifest =
        serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)?;
    let mut cases = Vec::with_capacity(manifest.files.len());
    for name in &manifest.files {
        cases.push(serde_json::from_str(&std::fs::read_to_string(dir.join(name))?)?);
    }
    Ok((cases, manifest))
}

/// Greedy on-policy rollout of up to `k` steps from the start, following
/// the model's ranking but moving only along edges that are truly valid.
/// No backtracking: a dead end or the goal ends the prefix early.
pub fn rollout_prefix(model: &GuidanceModel, case: &TrainingCase, k: usize) -> Result<Vec<usize>> {
    let bounds = case.bounds();
    let cache = model.env_cache(&case.rgg, &case.grid, &bounds)?;
    let mut hidden = model.push_path_state(
        &model.zero_hidden(),
        &case.rgg.nodes[INIT_INDEX],
        &bounds,
    )?;
    let mut path = vec![INIT_INDEX];
    let mut visited = vec![false; case.rgg.node_count()];
    visited[INIT_INDEX] = true;
    for _ in 0..k {
        let v = *path.last().unwrap();
        if v == GOAL_INDEX {
            break;
        }
        let row = model.guidance_row_cached(&cache, &hidden, &case.rgg, v, &bounds)?;
        let next = row
            .ranked()
            .into_iter()
            .map(|e| e.0)
            .find(|&j| !visited[j] && case.edge_valid(v, j));
        match next {
            Some(j) => {
                visited[j] = true;
                hidden = model.push_path_state(&hidden, &case.rgg.nodes[j], &bounds)?;
                path.push(j);
            }
            None => break,
        }
    }
    Ok(path)
}

/// Second vertex of the shortest valid path from `endpoint` to the goal;
/// None when the endpoint is the goal or the goal is unreachable.
pub fn supervisor_label(case: &TrainingCase, endpoint: usize) -> Option<usize> {
    if endpoint == GOAL_INDEX {
        return None;
    }
    let path = dijkstra(&case.rgg, |i, j| case.edge_valid(i, j), endpoint, GOAL_INDEX)?;
    path.node_indices.as_ref().and_then(|idx| idx.get(1).copied())
}

/// Cross-entropy step on a fixed (prefix, label) pair: forward, backward,
/// SGD update. Returns the pre-update loss.
pub fn train_step_with(
    model: &mut GuidanceModel,
    case: &TrainingCase,
    prefix: &[usize],
    label: usize,
    lr: f64,
    weight_decay: f64,
) -> Result<f64> {
    let endpoint = *prefix.last().ok_or_else(|| Error::Input("empty prefix".into()))?;
    let bounds = case.bounds();
    let mut tape = Tape::new();
    let (row, nbrs) = model
        .tape_guidance_scores(&mut tape, &case.rgg, &case.grid, &bounds, prefix, endpoint)?
        .ok_or_else(|| Error::Input("prefix endpoint has no neighbors".into()))?;
    let target = nbrs
        .iter()
        .position(|&j| j == label)
        .ok_or_else(|| Error::Input("label is not a neighbor of the prefix endpoint".into()))?;
    let loss = tape.cross_entropy(row, target)?;
    tape.backward(loss)?;
    tape.harvest(&mut model.params)?;
    let value = tape.scalar(loss);
    model.params.sgd_step(lr, weight_decay);
    Ok(value)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainStep {
    pub prefix: Vec<usize>,
    pub label: usize,
    pub loss: f64,
}

/// One on-policy step on `case`; None when the rollout already ends at the
/// goal or the supervisor finds no valid path.
pub fn train_step(
    model: &mut GuidanceModel,
    case: &TrainingCase,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Option<TrainStep>> {
    let k = rng.gen_range(1..=cfg.k_max);
    let prefix = rollout_prefix(model, case, k)?;
    let endpoint = *prefix.last().unwrap();
    let Some(label) = supervisor_label(case, endpoint) else {
        return Ok(None);
    };
    let loss = train_step_with(model, case, &prefix, label, cfg.learning_rate, cfg.weight_decay)?;
    Ok(Some(TrainStep { prefix, label, loss }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub steps: usize,
    pub skipped: usize,
    pub wall_time: f64,
}

/// Learning rate for `epoch`: exponential interpolation from
/// learning_rate down to lr_final across the configured epochs.
pub fn epoch_lr(cfg: &TrainConfig, epoch: usize) -> f64 {
    if cfg.epochs <= 1 {
        return cfg.learning_rate;
    }
    let t = epoch as f64 / (cfg.epochs - 1) as f64;
    cfg.learning_rate * (cfg.lr_final / cfg.learning_rate).powf(t)
}

/// Shuffled-epoch SGD over the dataset: steps_per_case on-policy prefixes
/// per case per epoch, learning rate decayed per epoch_lr. Writes one
/// checkpoint per epoch when a directory is given and returns the
/// per-epoch loss curve.
pub fn train(
    model: &mut GuidanceModel,
    dataset: &[TrainingCase],
    cfg: &TrainConfig,
    checkpoint_dir: Option<&FsPath>,
    seed: u64,
) -> Result<Vec<EpochLog>> {
    if dataset.is_empty() {
        return Err(Error::Input("training dataset is empty".into()));
    }
    if let Some(dir) = checkpoint_dir {
        std::fs::create_dir_all(dir)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut logs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let epoch_cfg = TrainConfig { learning_rate: epoch_lr(cfg, epoch), ..cfg.clone() };
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        order.shuffle(&mut rng);
        let (mut total, mut steps, mut skipped) = (0.0, 0usize, 0usize);
        for &ci in &order {
            for _ in 0..cfg.steps_per_case.max(1) {
                match train_step(model, &dataset[ci], &epoch_cfg, &mut rng)? {
                    Some(step) => {
                        debug_assert!(step.loss.is_finite() && step.loss >= 0.0);
                        total += step.loss;
                        steps += 1;
                    }
                    None => skipped += 1,
                }
            }
        }
        if let Some(dir) = checkpoint_dir {
            model.save(&dir.join(format!("epoch_{epoch:03}.ckpt")))?;
        }
        logs.push(EpochLog {
            epoch,
            mean_loss: if steps > 0 { total / steps as f64 } else { 0.0 },
            steps,
            skipped,
            wall_time: start.elapsed().as_secs_f64(),
        });
    }
    Ok(logs)
}

/// Top-1 next-step accuracy over rollout prefixes of held-out cases; ties
/// resolve to the lowest neighbor index, matching the planner's rule.
pub fn eval_accuracy(
    model: &GuidanceModel,
    dataset: &[TrainingCase],
    prefixes_per_case: usize,
    k_max: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut hits, mut total) = (0usize, 0usize);
    for case in dataset {
        let bounds = case.bounds();
        let cache = model.env_cache(&case.rgg, &case.grid, &bounds)?;
        for _ in 0..prefixes_per_case {
            let k = rng.gen_range(1..=k_max);
            let prefix = rollout_prefix(model, case, k)?;
            let endpoint = *prefix.last().unwrap();
            let Some(label) = supervisor_label(case, endpoint) else { continue };
            let mut hidden = model.zero_hidden();
            for &i in &prefix {
                hidden = model.push_path_state(&hidden, &case.rgg.nodes[i], &bounds)?;
            }
            let row = model.guidance_row_cached(&cache, &hidden, &case.rgg, endpoint, &bounds)?;
            let mut best = row.entries[0];
            for &e in &row.entries[1..] {
                if e.1 > best.1 {
                    best = e;
                }
            }
            total += 1;
            if best.0 == label {
                hits += 1;
            }
        }
    }
    Ok(if total == 0 { 0.0 } else { hits as f64 / total as f64 })
}

/// Mean r-disc degree across all nodes of all cases.
pub fn mean_degree(cases: &[TrainingCase]) -> f64 {
    let (mut total, mut nodes) = (0usize, 0usize);
    for case in cases {
        total += 2 * case.rgg.edges.len();
        nodes += case.rgg.node_count();
    }
    if nodes == 0 {
        0.0
    } else {
        total as f64 / nodes as f64
    }
}
