//! One structured configuration file governs model dimensions, graph
//! construction, dataset generation, training and benchmarking. Every block
//! has working defaults; CLI flags override individual fields.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub model: ModelConfig,
    pub graph: GraphConfig,
    pub gen: GenConfig,
    pub train: TrainConfig,
    pub bench: BenchConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            model: ModelConfig::default(),
            graph: GraphConfig::default(),
            gen: GenConfig::default(),
            train: TrainConfig::default(),
            bench: BenchConfig::default(),
        }
    }
}

/// Dimensions of the guidance model. Coordinates are zero-padded up to
/// `state_dim_max` so one model serves worlds of different state dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub state_dim_max: usize,
    /// node / obstacle embedding size
    pub d: usize,
    /// environment embedding size
    pub d_o: usize,
    /// RNN hidden size
    pub h: usize,
    /// occupancy grid resolution per axis
    pub m: usize,
    pub workspace_dim: usize,
    pub conv_channels: [usize; 2],
    pub conv_kernel: usize,
    pub conv_stride: usize,
    pub gat_slope: f64,
    pub decoder_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            state_dim_max: 7,
            d: 32,
            d_o: 32,
            h: 32,
            m: 16,
            workspace_dim: 2,
            conv_channels: [8, 16],
            conv_kernel: 3,
            conv_stride: 2,
            gat_slope: 0.2,
            decoder_hidden: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphConfig {
    /// Fixed connection radius; None selects the per-world default policy.
    pub radius: Option<f64>,
    /// Edge-check resolution as a fraction of the state-space diagonal.
    pub resolution_frac: f64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig { radius: None, resolution_frac: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum WorldFamily {
    /// Point robot in the unit square.
    Point2d,
    /// Planar arm with `links` equal-length links.
    Arm { links: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    /// Cases cycle through these families.
    pub families: Vec<WorldFamily>,
    pub case_count: usize,
    pub n_samples: usize,
    pub obstacle_count: [usize; 2],
    /// Obstacle half-extent range as a fraction of workspace width.
    pub obstacle_extent_frac: [f64; 2],
    pub goal_radius: f64,
    /// Regeneration attempts before a case is declared infeasible.
    pub retry_budget: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            families: vec![WorldFamily::Point2d, WorldFamily::Arm { links: 7 }],
            case_count: 300,
            n_samples: 150,
            obstacle_count: [1, 4],
            obstacle_extent_frac: [0.04, 0.12],
            goal_radius: 0.0,
            retry_budget: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Learning rate at epoch 0; decays exponentially to lr_final by the
    /// last epoch.
    pub learning_rate: f64,
    pub lr_final: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Rollout prefix length is drawn uniformly from 1..=k_max.
    pub k_max: usize,
    /// On-policy prefixes sampled per case per epoch.
    pub steps_per_case: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.02,
            lr_final: 0.002,
            weight_decay: 0.001,
            epochs: 20,
            k_max: 10,
            steps_per_case: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    /// Subset of {gnn, gnn_untrained, prm, lazy_prm, rrt_star}.
    pub planners: Vec<String>,
    pub sample_counts: Vec<usize>,
    pub rrt_max_samples: usize,
    /// RRT* steer step as a fraction of the state-space diagonal.
    pub rrt_steer_frac: f64,
    /// Guided-planner step budget as a multiple of the node count.
    pub step_budget_factor: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            planners: vec!["gnn".into(), "prm".into(), "lazy_prm".into(), "rrt_star".into()],
            sample_counts: vec![200, 400, 600, 800, 1000],
            rrt_max_samples: 4000,
            rrt_steer_frac: 0.1,
            step_budget_factor: 10,
        }
    }
}

impl Config {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: Config =
            serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if m.state_dim_max == 0 || m.d == 0 || m.d_o == 0 || m.h == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if m.m < 2 {
            return Err(Error::Config("grid resolution m must be >= 2".into()));
        }
        if !(2..=3).contains(&m.workspace_dim) {
            return Err(Error::Config("workspace_dim must be 2 or 3".into()));
        }
        if self.graph.resolution_frac <= 0.0 {
            return Err(Error::Config("resolution_frac must be positive".into()));
        }
        if self.gen.obstacle_count[0] > self.gen.obstacle_count[1] {
            return Err(Error::Config("obstacle_count range inverted".into()));
        }
        if self.train.k_max == 0 {
            return Err(Error::Config("k_max must be >= 1".into()));
        }
        if self.train.steps_per_case == 0 {
            return Err(Error::Config("steps_per_case must be >= 1".into()));
        }
        if self.train.learning_rate <= 0.0 || self.train.lr_final <= 0.0 {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        for f in &self.gen.families {
            if let WorldFamily::Arm { links } = f {
                if *links == 0 || *links > self.model.state_dim_max {
                    return Err(Error::Config(format!(
                        "arm links {links} exceeds state_dim_max {}",
                        self.model.state_dim_max
                    )));
                }
            }
        }
        Ok(())
    }
}
