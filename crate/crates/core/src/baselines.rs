//! Classical planners: Dijkstra graph search, PRM with exhaustive edge
//! validation, Lazy PRM, and first-solution RRT*. Dijkstra doubles as the
//! training supervisor.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{Rgg, GOAL_INDEX, INIT_INDEX};
use crate::world::{euclidean, point_in_collision, segment_free, CollisionCounter, ProblemInstance};
use crate::Result;

/// A feasible path, as graph node indices (when planned on an RGG) plus the
/// corresponding state waypoints. Cost is the summed Euclidean segment
/// length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub node_indices: Option<Vec<usize>>,
    pub waypoints: Vec<Vec<f64>>,
    pub cost: f64,
}

impl Path {
    pub fn from_node_indices(rgg: &Rgg, indices: Vec<usize>) -> Self {
        let waypoints: Vec<Vec<f64>> = indices.iter().map(|&i| rgg.nodes[i].clone()).collect();
        let cost = waypoints
            .windows(2)
            .map(|w| euclidean(&w[0], &w[1]))
            .sum();
        Path { node_indices: Some(indices), waypoints, cost }
    }

    pub fn from_waypoints(waypoints: Vec<Vec<f64>>) -> Self {
        let cost = waypoints
            .windows(2)
            .map(|w| euclidean(&w[0], &w[1]))
            .sum();
        Path { node_indices: None, waypoints, cost }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PlanOutcome {
    Success(Path),
    Failure { reason: String },
}

/// Result of one planning attempt together with the collision-check tally
/// and timings. `build_time` is filled by the caller that built the graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub outcome: PlanOutcome,
    pub edge_checks: u64,
    pub point_checks: u64,
    pub build_time: f64,
    pub plan_time: f64,
}

impl PlanResult {
    pub fn success(&self) -> bool {
        matches!(self.outcome, PlanOutcome::Success(_))
    }

    pub fn path(&self) -> Option<&Path> {
        match &self.outcome {
            PlanOutcome::Success(p) => Some(p),
            PlanOutcome::Failure { .. } => None,
        }
    }
}

/// Edge-check resolution default: 1% of the state-space diagonal.
pub fn default_resolution(world: &crate::world::WorldModel) -> f64 {
    0.01 * world.state_diagonal()
}

#[derive(Debug)]
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.dist == other.dist && self.node == other.node
    }
}
impl Eq for HeapEntry {}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (dist, node)
        other
            .dist
            .partial_cmp(&self.dist)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.node.cmp(&self.node))
    }
}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest path by summed Euclidean edge length over edges accepted by
/// `edge_valid`. Distance ties keep the smaller predecessor index.
pub fn dijkstra<F>(
    rgg: &Rgg,
    mut edge_valid: F,
    source: usize,
    target: usize,
) -> Option<Path>
where
    F: FnMut(usize, usize) -> bool,
{
    let n = rgg.node_count();
    if source >= n || target >= n {
        return None;
    }
    let mut dist = vec![f64::INFINITY; n];
    let mut pred = vec![usize::MAX; n];
    let mut done = vec![false; n];
    dist[source] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(HeapEntry { dist: 0.0, node: source });
    while let Some(HeapEntry { dist: d, node: u }) = heap.pop() {
        if done[u] || d > dist[u] {
            continue;
        }
        done[u] = true;
        if u == target {
            break;
        }
        for &v in rgg.adjacency[u].iter() {
            if done[v] || !edge_valid(u, v) {
                continue;
            }
            let nd = d + rgg.edge_length(u, v);
            if nd < dist[v] || (nd == dist[v] && u < pred[v]) {
                dist[v] = nd;
                pred[v] = u;
                heap.push(HeapEntry { dist: nd, node: v });
            }
        }
    }
    if !dist[target].is_finite() {
        return None;
    }
    let mut indices = vec![target];
    let mut cur = target;
    while cur != source {
        cur = pred[cur];
        indices.push(cur);
    }
    indices.reverse();
    Some(Path::from_node_indices(rgg, indices))
}

/// PRM: validate every RGG edge up front, then graph-search the validated
/// set.
pub fn prm_plan(
    problem: &ProblemInstance,
    rgg: &Rgg,
    resolution: f64,
    counter: &mut CollisionCounter,
) -> Result<PlanResult> {
    let start = Instant::now();
    let mut valid = vec![false; rgg.edges.len()];
    for (e, &(i, j)) in rgg.edges.iter().enumerate() {
        valid[e] = segment_free(&problem.world, &rgg.nodes[i], &rgg.nodes[j], resolution, counter)?;
    }
    let mut edge_index = std::collections::HashMap::new();
    for (e, &(i, j)) in rgg.edges.iter().enumerate() {
        edge_index.insert((i, j), e);
    }
    let path = dijkstra(
        rgg,
        |i, j| {
            let key = if i < j { (i, j) } else { (j, i) };
            edge_index.get(&key).map(|&e| valid[e]).unwrap_or(false)
        },
        INIT_INDEX,
        GOAL_INDEX,
    );
    let outcome = match path {
        Some(p) => PlanOutcome::Success(p),
        None => PlanOutcome::Failure { reason: "goal unreachable in validated roadmap".into() },
    };
    Ok(PlanResult {
        outcome,
        edge_checks: counter.edge_checks,
        point_checks: counter.point_checks,
        build_time: 0.0,
        plan_time: start.elapsed().as_secs_f64(),
    })
}

/// Lazy PRM: repeatedly search assuming unchecked edges valid, check the
/// candidate path's edges in order, and remove the first colliding edge.
pub fn lazy_prm_plan(
    problem: &ProblemInstance,
    rgg: &Rgg,
    resolution: f64,
    counter: &mut CollisionCounter,
) -> Result<PlanResult> {
    let start = Instant::now();
    let mut edge_index = std::collections::HashMap::new();
    for (e, &(i, j)) in rgg.edges.iter().enumerate() {
        edge_index.insert((i, j), e);
    }
    // None = unchecked, Some(v) = checked result
    let mut status: Vec<Option<bool>> = vec![None; rgg.edges.len()];
    let outcome = loop {
        let path = dijkstra(
            rgg,
            |i, j| {
                let key = if i < j { (i, j) } else { (j, i) };
                match edge_index.get(&key) {
                    Some(&e) => status[e] != Some(false),
                    None => false,
                }
            },
            INIT_INDEX,
            GOAL_INDEX,
        );
        let Some(path) = path else {
            break PlanOutcome::Failure { reason: "goal unreachable after lazy removals".into() };
        };
        let indices = path.node_indices.as_ref().expect("graph path");
        let mut blocked = false;
        for w in indices.windows(2) {
            let (i, j) = (w[0], w[1]);
            let key = if i < j { (i, j) } else { (j, i) };
            let e = edge_index[&key];
            if status[e].is_none() {
                let free = segment_free(
                    &problem.world,
                    &rgg.nodes[i],
                    &rgg.nodes[j],
                    resolution,
                    counter,
                )?;
                status[e] = Some(free);
                if !free {
                    blocked = true;
                    break;
                }
            }
        }
        if !blocked {
            break PlanOutcome::Success(path);
        }
    };
    Ok(PlanResult {
        outcome,
        edge_checks: counter.edge_checks,
        point_checks: counter.point_checks,
        build_time: 0.0,
        plan_time: start.elapsed().as_secs_f64(),
    })
}

/// First-solution RRT*: rewiring radius is twice the steer step; terminates
/// at the first connection into the goal region.
pub fn rrt_star_plan<R: Rng>(
    problem: &ProblemInstance,
    max_samples: usize,
    steer_step: f64,
    resolution: f64,
    counter: &mut CollisionCounter,
    rng: &mut R,
) -> Result<PlanResult> {
    let start = Instant::now();
    let world = &problem.world;
    let bounds = world.state_bounds();
    let rewire_radius = 2.0 * steer_step;

    let mut nodes = vec![problem.x_init.clone()];
    let mut parent = vec![usize::MAX];
    let mut cost = vec![0.0_f64];

    let goal = &problem.x_goal;
    let mut solution: Option<Vec<usize>> = None;
    let mut goal_tail = false; // whether the solution appends x_goal itself

    for _ in 0..max_samples {
        let x_rand: Vec<f64> = bounds.iter().map(|b| rng.gen_range(b[0]..b[1])).collect();
        // nearest
        let (nearest, near_dist) = nodes
            .iter()
            .enumerate()
            .map(|(i, x)| (i, euclidean(x, &x_rand)))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then_with(|| a.0.cmp(&b.0)))
            .unwrap();
        if near_dist < 1e-12 {
            continue;
        }
        // steer
        let step = steer_step.min(near_dist);
        let x_new: Vec<f64> = nodes[nearest]
            .iter()
            .zip(&x_rand)
            .map(|(a, b)| a + (b - a) / near_dist * step)
            .collect();
        if point_in_collision(world, &x_new, counter)? {
            continue;
        }
        // choose parent among near set
        let near: Vec<usize> = (0..nodes.len())
            .filter(|&i| euclidean(&nodes[i], &x_new) <= rewire_radius)
            .collect();
        let mut best_parent = None;
        let mut best_cost = f64::INFINITY;
        for &i in &near {
            let c = cost[i] + euclidean(&nodes[i], &x_new);
            if c < best_cost && segment_free(world, &nodes[i], &x_new, resolution, counter)? {
                best_cost = c;
                best_parent = Some(i);
            }
        }
        let Some(best_parent) = best_parent else { continue };
        let new_idx = nodes.len();
        nodes.push(x_new.clone());
        parent.push(best_parent);
        cost.push(best_cost);
        // rewire
        for &i in &near {
            let through = best_cost + euclidean(&x_new, &nodes[i]);
            if through + 1e-12 < cost[i]
                && segment_free(world, &x_new, &nodes[i], resolution, counter)?
            {
                parent[i] = new_idx;
                cost[i] = through;
            }
        }
        // first goal-region connection terminates
        let d_goal = euclidean(&x_new, goal);
        if d_goal <= problem.goal_radius {
            solution = Some(trace_tree(&parent, new_idx));
            goal_tail = false;
            break;
        }
        if d_goal <= steer_step && segment_free(world, &x_new, goal, resolution, counter)? {
            solution = Some(trace_tree(&parent, new_idx));
            goal_tail = true;
            break;
        }
    }

    let outcome = match solution {
        Some(indices) => {
            let mut waypoints: Vec<Vec<f64>> =
                indices.iter().map(|&i| nodes[i].clone()).collect();
            if goal_tail {
                waypoints.push(goal.clone());
            }
            PlanOutcome::Success(Path::from_waypoints(waypoints))
        }
        None => PlanOutcome::Failure { reason: "sample budget exhausted".into() },
    };
    Ok(PlanResult {
        outcome,
        edge_checks: counter.edge_checks,
        point_checks: counter.point_checks,
        build_time: 0.0,
        plan_time: start.elapsed().as_secs_f64(),
    })
}

fn trace_tree(parent: &[usize], mut node: usize) -> Vec<usize> {
    let mut out = vec![node];
    while parent[node] != usize::MAX {
        node = parent[node];
        out.push(node);
    }
    out.reverse();
    out
}
