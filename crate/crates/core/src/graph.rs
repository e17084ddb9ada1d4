//! Random geometric graphs over uniformly sampled free states.
//!
//! Nodes 0 and 1 are always the start and goal; edges connect every pair of
//! states within the connection radius. Edges are not collision-checked at
//! build time, that is each planner's job.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::world::{euclidean, point_in_collision, CollisionCounter, ProblemInstance, WorldModel};
use crate::{Error, Result};

pub const INIT_INDEX: usize = 0;
pub const GOAL_INDEX: usize = 1;

/// r-disc random geometric graph. Immutable after build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rgg {
    pub nodes: Vec<Vec<f64>>,
    /// Undirected edges as (i, j) with i < j, sorted.
    pub edges: Vec<(usize, usize)>,
    /// Per-node neighbor lists, sorted ascending.
    pub adjacency: Vec<Vec<usize>>,
    pub radius: f64,
}

impl Rgg {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn neighbors(&self, i: usize) -> Result<&[usize]> {
        self.adjacency
            .get(i)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::Input(format!("node index {i} out of range")))
    }

    pub fn edge_length(&self, i: usize, j: usize) -> f64 {
        euclidean(&self.nodes[i], &self.nodes[j])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Uniform rejection sampling of `n` collision-free states.
pub fn sample_free<R: Rng>(
    world: &WorldModel,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let bounds = world.state_bounds();
    let mut counter = CollisionCounter::new();
    let mut out = Vec::with_capacity(n);
    let budget = 1000 * n.max(1);
    let mut attempts = 0;
    while out.len() < n {
        if attempts >= budget {
            return Err(Error::Sampling(format!(
                "free-space sampling exhausted {budget} attempts for {n} states"
            )));
        }
        attempts += 1;
        let x: Vec<f64> = bounds.iter().map(|b| rng.gen_range(b[0]..b[1])).collect();
        if !point_in_collision(world, &x, &mut counter)? {
            out.push(x);
        }
    }
    Ok(out)
}

/// All pairs within Euclidean distance `radius`, inclusive.
pub fn connect_rdisc(nodes: &[Vec<f64>], radius: f64) -> Result<Vec<(usize, usize)>> {
    if radius < 0.0 {
        return Err(Error::Input("radius must be nonnegative".into()));
    }
    let mut edges = Vec::new();
    for i in 0..nodes.len() {
        for j in (i + 1)..nodes.len() {
            if euclidean(&nodes[i], &nodes[j]) <= radius {
                edges.push((i, j));
            }
        }
    }
    Ok(edges)
}

fn adjacency_from_edges(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for &(i, j) in edges {
        adj[i].push(j);
        adj[j].push(i);
    }
    for list in &mut adj {
        list.sort_unstable();
    }
    adj
}

/// Build the RGG for a problem: start and goal first, then `n` free
/// samples, then r-disc connection over all n+2 nodes.
pub fn build_rgg<R: Rng>(
    problem: &ProblemInstance,
    n: usize,
    radius: f64,
    rng: &mut R,
) -> Result<Rgg> {
    let mut nodes = vec![problem.x_init.clone(), problem.x_goal.clone()];
    nodes.extend(sample_free(&problem.world, n, rng)?);
    let edges = connect_rdisc(&nodes, radius)?;
    let adjacency = adjacency_from_edges(nodes.len(), &edges);
    Ok(Rgg { nodes, edges, adjacency, radius })
}

/// Volume of the d-dimensional unit ball.
pub fn unit_ball_volume(d: usize) -> f64 {
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(d - 2) * 2.0 * std::f64::consts::PI / d as f64,
    }
}

/// Default connection radius policy: 1.5 times the radius whose expected
/// r-disc degree is 10 at sample count `n`, using a Monte Carlo estimate of
/// the free-space volume.
pub fn default_radius<R: Rng>(world: &WorldModel, n: usize, rng: &mut R) -> Result<f64> {
    let bounds = world.state_bounds();
    let d = bounds.len();
    let total_volume: f64 = bounds.iter().map(|b| b[1] - b[0]).product();
    let mut counter = CollisionCounter::new();
    let probes = 1000;
    let mut free = 0usize;
    for _ in 0..probes {
        let x: Vec<f64> = bounds.iter().map(|b| rng.gen_range(b[0]..b[1])).collect();
        if !point_in_collision(world, &x, &mut counter)? {
            free += 1;
        }
    }
    let free_volume = total_volume * (free.max(1) as f64 / probes as f64);
    let r10 = (10.0 * free_volume / (n.max(1) as f64 * unit_ball_volume(d))).powf(1.0 / d as f64);
    Ok(1.5 * r10)
}
