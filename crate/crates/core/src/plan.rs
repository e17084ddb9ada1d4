//! Guidance-driven greedy planner: at each vertex, rank the unvisited
//! neighbors by guidance value and collision-check them in that order,
//! moving to the first free one and backtracking from dead ends.

use std::collections::HashMap;
use std::time::Instant;

use serde::Serialize;

use crate::baselines::{default_resolution, Path, PlanOutcome, PlanResult};
use crate::graph::{Rgg, GOAL_INDEX, INIT_INDEX};
use crate::guidance::{EnvCache, GuidanceModel, GuidanceRow};
use crate::tensor::Tensor;
use crate::world::{
    euclidean, occupancy_grid, segment_free, CollisionCounter, ProblemInstance, WorldModel,
};
use crate::{Error, Result};

/// Default step budget: ten decision steps per graph node.
pub fn default_step_budget(rgg: &Rgg) -> usize {
    10 * rgg.node_count()
}

/// One greedy decision: the expanded vertex, its unvisited neighbors in the
/// order they were tried, the neighbor moved to (`None` = backtrack), and
/// the number of fresh segment checks this step spent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceStep {
    pub vertex: usize,
    pub ranked: Vec<(usize, f64)>,
    pub chosen: Option<usize>,
    pub edge_checks: u64,
}

/// Per-step neighbor scoring. The model-backed implementation conditions on
/// the path walked so far; tests substitute synthetic oracles.
pub trait GuidanceSource {
    fn row(&mut self, rgg: &Rgg, vertex: usize) -> Result<GuidanceRow>;
    /// Called after the planner moves to `vertex`, so incremental path
    /// encoders can extend their state.
    fn advanced(&mut self, rgg: &Rgg, vertex: usize) -> Result<()> {
        let _ = (rgg, vertex);
        Ok(())
    }
    /// Called after the planner pops one vertex off the path.
    fn backtracked(&mut self) {}
}

/// Model-backed guidance with the environment encoding computed once and
/// the path RNN hidden state kept as a stack mirroring the path stack.
pub struct ModelGuidance<'m> {
    model: &'m GuidanceModel,
    cache: EnvCache,
    bounds: Vec<[f64; 2]>,
    hidden_stack: Vec<Tensor>,
}

impl<'m> ModelGuidance<'m> {
    pub fn new(model: &'m GuidanceModel, world: &WorldModel, rgg: &Rgg) -> Result<Self> {
        let bounds = world.state_bounds();
        let grid = occupancy_grid(world, model.config.m)?;
        let cache = model.env_cache(rgg, &grid, &bounds)?;
        let h0 =
            model.push_path_state(&model.zero_hidden(), &rgg.nodes[INIT_INDEX], &bounds)?;
        Ok(ModelGuidance { model, cache, bounds, hidden_stack: vec![h0] })
    }
}

impl GuidanceSource for ModelGuidance<'_> {
    fn row(&mut self, rgg: &Rgg, vertex: usize) -> Result<GuidanceRow> {
        let hidden = self.hidden_stack.last().expect("hidden stack never empties first");
        self.model.guidance_row_cached(&self.cache, hidden, rgg, vertex, &self.bounds)
    }

    fn advanced(&mut self, rgg: &Rgg, vertex: usize) -> Result<()> {
        let hidden = self.hidden_stack.last().expect("hidden stack never empties first");
        let next = self.model.push_path_state(hidden, &rgg.nodes[vertex], &self.bounds)?;
        self.hidden_stack.push(next);
        Ok(())
    }

    fn backtracked(&mut self) {
        self.hidden_stack.pop();
    }
}

/// The greedy planner as an explicit state machine so a trace of decisions
/// can be harvested step by step.
pub struct GreedyPlanner<'a, G: GuidanceSource> {
    problem: &'a ProblemInstance,
    rgg: &'a Rgg,
    guidance: G,
    resolution: f64,
    step_budget: usize,
    stack: Vec<usize>,
    visited: Vec<bool>,
    // key (min, max): segment checks are symmetric, so one result serves
    // both directions and no edge is ever checked twice
    edge_cache: HashMap<(usize, usize), bool>,
    checked_order: Vec<(usize, usize)>,
    steps_taken: usize,
    outcome: Option<PlanOutcome>,
    started: Instant,
}

impl<'a, G: GuidanceSource> GreedyPlanner<'a, G> {
    pub fn new(
        problem: &'a ProblemInstance,
        rgg: &'a Rgg,
        guidance: G,
        step_budget: usize,
    ) -> Result<Self> {
        if step_budget == 0 {
            return Err(Error::Input("step_budget must be >= 1".into()));
        }
        if rgg.node_count() < 2 {
            return Err(Error::Input("graph must contain init and goal nodes".into()));
        }
        let mut visited = vec![false; rgg.node_count()];
        visited[INIT_INDEX] = true;
        Ok(GreedyPlanner {
            problem,
            rgg,
            guidance,
            resolution: default_resolution(&problem.world),
            step_budget,
            stack: vec![INIT_INDEX],
            visited,
            edge_cache: HashMap::new(),
            checked_order: Vec::new(),
            steps_taken: 0,
            outcome: None,
            started: Instant::now(),
        })
    }

    fn at_goal(&self, v: usize) -> bool {
        v == GOAL_INDEX
            || euclidean(&self.rgg.nodes[v], &self.problem.x_goal) <= self.problem.goal_radius
    }

    /// Runs one decision step. Returns `None` once the outcome is decided;
    /// goal detection and termination do not emit trace entries.
    pub fn step(&mut self, counter: &mut CollisionCounter) -> Result<Option<TraceStep>> {
        if self.outcome.is_some() {
            return Ok(None);
        }
        let v = *self.stack.last().expect("stack emptiness sets the outcome");
        if self.at_goal(v) {
            let path = Path::from_node_indices(self.rgg, self.stack.clone());
            self.outcome = Some(PlanOutcome::Success(path));
            return Ok(None);
        }
        if self.steps_taken >= self.step_budget {
            self.outcome = Some(PlanOutcome::Failure {
                reason: format!("step budget {} exhausted", self.step_budget),
            });
            return Ok(None);
        }
        self.steps_taken += 1;

        let row = self.guidance.row(self.rgg, v)?;
        let ranked: Vec<(usize, f64)> =
            row.ranked().into_iter().filter(|&(j, _)| !self.visited[j]).collect();
        let checks_before = counter.edge_checks;
        let mut chosen = None;
        for &(j, _) in &ranked {
            let key = if v < j { (v, j) } else { (j, v) };
            let free = match self.edge_cache.get(&key) {
                Some(&f) => f,
                None => {
                    let f = segment_free(
                        &self.problem.world,
                        &self.rgg.nodes[v],
                        &self.rgg.nodes[j],
                        self.resolution,
                        counter,
                    )?;
                    self.edge_cache.insert(key, f);
                    self.checked_order.push(key);
                    f
                }
            };
            if free {
                chosen = Some(j);
                break;
            }
        }
        match chosen {
            Some(j) => {
                self.visited[j] = true;
                self.stack.push(j);
                self.guidance.advanced(self.rgg, j)?;
            }
            None => {
                self.stack.pop();
                self.guidance.backtracked();
                if self.stack.is_empty() {
                    self.outcome = Some(PlanOutcome::Failure {
                        reason: "path stack emptied: no unvisited free neighbor anywhere".into(),
                    });
                }
            }
        }
        Ok(Some(TraceStep {
            vertex: v,
            ranked,
            chosen,
            edge_checks: counter.edge_checks - checks_before,
        }))
    }

    /// Edges in first-check order, for rendering.
    pub fn checked_edges(&self) -> &[(usize, usize)] {
        &self.checked_order
    }

    pub fn into_result(mut self, counter: &CollisionCounter) -> Result<PlanResult> {
        let outcome = self.outcome.take().ok_or_else(|| {
            Error::Input("planner not run to completion before into_result".into())
        })?;
        Ok(PlanResult {
            outcome,
            edge_checks: counter.edge_checks,
            point_checks: counter.point_checks,
            build_time: 0.0,
            plan_time: self.started.elapsed().as_secs_f64(),
        })
    }
}

/// Runs the greedy planner with an arbitrary guidance source.
pub fn plan_with<G: GuidanceSource>(
    problem: &ProblemInstance,
    rgg: &Rgg,
    guidance: G,
    step_budget: usize,
    counter: &mut CollisionCounter,
) -> Result<PlanResult> {
    let mut planner = GreedyPlanner::new(problem, rgg, guidance, step_budget)?;
    while planner.step(counter)?.is_some() {}
    planner.into_result(counter)
}

/// Guidance-driven greedy planning with the learned model.
pub fn gnn_plan(
    model: &GuidanceModel,
    problem: &ProblemInstance,
    rgg: &Rgg,
    step_budget: usize,
    counter: &mut CollisionCounter,
) -> Result<PlanResult> {
    let guidance = ModelGuidance::new(model, &problem.world, rgg)?;
    plan_with(problem, rgg, guidance, step_budget, counter)
}

/// Runs the planner while recording every decision. The returned result is
/// identical (outcome and check counts) to [`gnn_plan`] on the same inputs.
pub fn step_trace(
    model: &GuidanceModel,
    problem: &ProblemInstance,
    rgg: &Rgg,
    step_budget: usize,
    counter: &mut CollisionCounter,
) -> Result<(Vec<TraceStep>, PlanResult)> {
    let guidance = ModelGuidance::new(model, &problem.world, rgg)?;
    let mut planner = GreedyPlanner::new(problem, rgg, guidance, step_budget)?;
    let mut trace = Vec::new();
    while let Some(entry) = planner.step(counter)? {
        trace.push(entry);
    }
    let result = planner.into_result(counter)?;
    Ok((trace, result))
}

/// Renders a 2D point world to SVG: obstacles dark, all graph edges light,
/// checked edges medium, the final path heavy. Non-planar worlds are not
/// renderable.
pub fn render_svg(
    problem: &ProblemInstance,
    rgg: &Rgg,
    checked: &[(usize, usize)],
    path: Option<&Path>,
) -> Result<String> {
    let WorldModel::Point { dim: 2, bounds, obstacles } = &problem.world else {
        return Err(Error::Input("svg rendering supports 2d point worlds only".into()));
    };
    const SIZE: f64 = 600.0;
    let sx = SIZE / (bounds[0][1] - bounds[0][0]);
    let sy = SIZE / (bounds[1][1] - bounds[1][0]);
    // y flipped so the world's +y points up on screen
    let px = |p: &[f64]| (p[0] - bounds[0][0]) * sx;
    let py = |p: &[f64]| SIZE - (p[1] - bounds[1][0]) * sy;
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {SIZE} {SIZE}\" \
         width=\"{SIZE}\" height=\"{SIZE}\">\n"
    ));
    out.push_str(&format!(
        "<rect width=\"{SIZE}\" height=\"{SIZE}\" fill=\"#ffffff\"/>\n"
    ));
    for ob in obstacles {
        let min = ob.min_corner();
        let max = ob.max_corner();
        out.push_str(&format!(
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"#4a4a4a\"/>\n",
            px(&min),
            py(&max),
            (max[0] - min[0]) * sx,
            (max[1] - min[1]) * sy,
        ));
    }
    let line = |i: usize, j: usize, style: &str, out: &mut String| {
        let (a, b) = (&rgg.nodes[i], &rgg.nodes[j]);
        out.push_str(&format!(
            "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" {style}/>\n",
            px(a),
            py(a),
            px(b),
            py(b),
        ));
    };
    for &(i, j) in &rgg.edges {
        line(i, j, "stroke=\"#dddddd\" stroke-width=\"0.6\"", &mut out);
    }
    for &(i, j) in checked {
        line(i, j, "stroke=\"#8899bb\" stroke-width=\"1.4\"", &mut out);
    }
    if let Some(p) = path {
        let pts: Vec<String> =
            p.waypoints.iter().map(|w| format!("{:.2},{:.2}", px(w), py(w))).collect();
        out.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"#cc3333\" stroke-width=\"2.8\"/>\n",
            pts.join(" ")
        ));
    }
    for (idx, color) in [(INIT_INDEX, "#22aa44"), (GOAL_INDEX, "#cc3333")] {
        let p = &rgg.nodes[idx];
        out.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"5\" fill=\"{color}\"/>\n",
            px(p),
            py(p),
        ));
    }
    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::dijkstra;
    use crate::config::{Config, ModelConfig, WorldFamily};
    use crate::train::{generate_case, TrainingCase};
    use crate::world::BoxObstacle;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_model_config() -> ModelConfig {
        ModelConfig {
            state_dim_max: 3,
            d: 4,
            d_o: 4,
            h: 3,
            m: 8,
            workspace_dim: 2,
            conv_channels: [2, 3],
            conv_kernel: 3,
            conv_stride: 2,
            gat_slope: 0.2,
            decoder_hidden: 4,
        }
    }

    fn small_config() -> Config {
        let mut config = Config::default();
        config.model = small_model_config();
        config.gen.n_samples = 40;
        config.gen.obstacle_count = [1, 3];
        config
    }

    fn point_case(seed: u64) -> TrainingCase {
        let config = small_config();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        generate_case(&config, &WorldFamily::Point2d, &mut rng).unwrap()
    }

    fn untrained_model() -> GuidanceModel {
        GuidanceModel::init(&small_model_config(), 7).unwrap()
    }

    fn two_node_problem() -> (ProblemInstance, Rgg) {
        let world = WorldModel::Point {
            dim: 2,
            bounds: vec![[0.0, 1.0], [0.0, 1.0]],
            obstacles: vec![],
        };
        let problem = ProblemInstance {
            world,
            x_init: vec![0.2, 0.2],
            x_goal: vec![0.8, 0.8],
            goal_radius: 0.0,
        };
        let nodes = vec![vec![0.2, 0.2], vec![0.8, 0.8]];
        let rgg = Rgg {
            nodes,
            edges: vec![(0, 1)],
            adjacency: vec![vec![1], vec![0]],
            radius: 2.0,
        };
        (problem, rgg)
    }

    /// ω = −(edge length + true shortest valid distance from the neighbor
    /// to the goal); invalid edges score −∞.
    struct PerfectGuidance<'a> {
        case: &'a TrainingCase,
        dist: Vec<f64>,
    }

    impl<'a> PerfectGuidance<'a> {
        fn new(case: &'a TrainingCase) -> Self {
            let rgg = &case.rgg;
            let n = rgg.node_count();
            // Dijkstra distances from the goal over truly valid edges
            let mut dist = vec![f64::INFINITY; n];
            dist[GOAL_INDEX] = 0.0;
            let mut done = vec![false; n];
            for _ in 0..n {
                let u = (0..n)
                    .filter(|&u| !done[u] && dist[u].is_finite())
                    .min_by(|&a, &b| dist[a].partial_cmp(&dist[b]).unwrap());
                let Some(u) = u else { break };
                done[u] = true;
                for &v in rgg.adjacency[u].iter() {
                    if case.edge_valid(u, v) {
                        let nd = dist[u] + rgg.edge_length(u, v);
                        if nd < dist[v] {
                            dist[v] = nd;
                        }
                    }
                }
            }
            PerfectGuidance { case, dist }
        }
    }

    impl GuidanceSource for PerfectGuidance<'_> {
        fn row(&mut self, rgg: &Rgg, vertex: usize) -> Result<GuidanceRow> {
            let entries = rgg
                .neighbors(vertex)?
                .iter()
                .map(|&j| {
                    let w = if self.case.edge_valid(vertex, j) {
                        -(rgg.edge_length(vertex, j) + self.dist[j])
                    } else {
                        f64::NEG_INFINITY
                    };
                    (j, w)
                })
                .collect();
            Ok(GuidanceRow { vertex, entries })
        }
    }

    struct ConstGuidance;
    impl GuidanceSource for ConstGuidance {
        fn row(&mut self, rgg: &Rgg, vertex: usize) -> Result<GuidanceRow> {
            Ok(GuidanceRow {
                vertex,
                entries: rgg.neighbors(vertex)?.iter().map(|&j| (j, 0.0)).collect(),
            })
        }
    }

    #[test]
    fn adjacent_init_goal_succeeds_with_one_check() {
        let (problem, rgg) = two_node_problem();
        let model = untrained_model();
        let mut counter = CollisionCounter::default();
        let result = gnn_plan(&model, &problem, &rgg, 10, &mut counter).unwrap();
        assert!(result.success());
        let path = result.path().unwrap();
        assert_eq!(path.node_indices, Some(vec![0, 1]));
        // the single neighbor is the goal, so exactly one check
        assert_eq!(result.edge_checks, 1);
        let expect = euclidean(&problem.x_init, &problem.x_goal);
        assert!((path.cost - expect).abs() < 1e-15);
    }

    #[test]
    fn disconnected_goal_fails_with_empty_stack() {
        let world = WorldModel::Point {
            dim: 2,
            bounds: vec![[0.0, 1.0], [0.0, 1.0]],
            obstacles: vec![],
        };
        let problem = ProblemInstance {
            world,
            x_init: vec![0.1, 0.1],
            x_goal: vec![0.9, 0.9],
            goal_radius: 0.0,
        };
        let rgg = Rgg {
            nodes: vec![vec![0.1, 0.1], vec![0.9, 0.9], vec![0.3, 0.1]],
            edges: vec![(0, 2)],
            adjacency: vec![vec![2], vec![], vec![0]],
            radius: 0.25,
        };
        let model = untrained_model();
        let mut counter = CollisionCounter::default();
        let result = gnn_plan(&model, &problem, &rgg, 100, &mut counter).unwrap();
        let PlanOutcome::Failure { reason } = &result.outcome else {
            panic!("expected failure");
        };
        assert!(reason.contains("stack"), "reason: {reason}");
        assert!(result.edge_checks <= rgg.edges.len() as u64);
    }

    #[test]
    fn budget_exhaustion_reported() {
        let world = WorldModel::Point {
            dim: 2,
            bounds: vec![[0.0, 1.0], [0.0, 1.0]],
            obstacles: vec![],
        };
        let problem = ProblemInstance {
            world,
            x_init: vec![0.1, 0.5],
            x_goal: vec![0.9, 0.5],
            goal_radius: 0.0,
        };
        // line graph init - mid - goal needs two advancing steps
        let rgg = Rgg {
            nodes: vec![vec![0.1, 0.5], vec![0.9, 0.5], vec![0.5, 0.5]],
            edges: vec![(0, 2), (1, 2)],
            adjacency: vec![vec![2], vec![2], vec![0, 1]],
            radius: 0.5,
        };
        let mut counter = CollisionCounter::default();
        let result = plan_with(&problem, &rgg, ConstGuidance, 1, &mut counter).unwrap();
        let PlanOutcome::Failure { reason } = &result.outcome else {
            panic!("expected failure");
        };
        assert!(reason.contains("budget"), "reason: {reason}");

        let mut counter = CollisionCounter::default();
        let result = plan_with(&problem, &rgg, ConstGuidance, 2, &mut counter).unwrap();
        assert!(result.success());
        assert_eq!(result.path().unwrap().node_indices, Some(vec![0, 2, 1]));
    }

    #[test]
    fn goal_radius_ball_accepted() {
        let world = WorldModel::Point {
            dim: 2,
            bounds: vec![[0.0, 1.0], [0.0, 1.0]],
            obstacles: vec![],
        };
        let problem = ProblemInstance {
            world,
            x_init: vec![0.0, 0.5],
            x_goal: vec![1.0, 0.5],
            goal_radius: 0.6,
        };
        let rgg = Rgg {
            nodes: vec![vec![0.0, 0.5], vec![1.0, 0.5], vec![0.5, 0.5]],
            edges: vec![(0, 2), (1, 2)],
            adjacency: vec![vec![2], vec![2], vec![0, 1]],
            radius: 0.6,
        };
        let mut counter = CollisionCounter::default();
        let result = plan_with(&problem, &rgg, ConstGuidance, 10, &mut counter).unwrap();
        assert!(result.success());
        // the middle vertex is inside the goal ball, so the planner stops
        // there without traversing to the goal node
        assert_eq!(result.path().unwrap().node_indices, Some(vec![0, 2]));
    }

    #[test]
    fn init_inside_goal_ball_is_immediate_success() {
        let (mut problem, rgg) = two_node_problem();
        problem.goal_radius = 10.0;
        let model = untrained_model();
        let mut counter = CollisionCounter::default();
        let (trace, result) = step_trace(&model, &problem, &rgg, 10, &mut counter).unwrap();
        assert!(trace.is_empty());
        assert!(result.success());
        assert_eq!(result.path().unwrap().node_indices, Some(vec![0]));
        assert_eq!(result.path().unwrap().cost, 0.0);
        assert_eq!(result.edge_checks, 0);
    }

    #[test]
    fn successful_paths_revalidate_and_never_revisit() {
        let model = untrained_model();
        let mut successes = 0;
        for seed in 0..25 {
            let case = point_case(1000 + seed);
            let budget = default_step_budget(&case.rgg);
            let mut counter = CollisionCounter::default();
            let result =
                gnn_plan(&model, &case.problem, &case.rgg, budget, &mut counter).unwrap();
            if let Some(path) = result.path() {
                successes += 1;
                let resolution = default_resolution(case.world());
                let mut fresh = CollisionCounter::default();
                for w in path.waypoints.windows(2) {
                    assert!(segment_free(
                        case.world(),
                        &w[0],
                        &w[1],
                        resolution,
                        &mut fresh
                    )
                    .unwrap());
                }
                let indices = path.node_indices.as_ref().unwrap();
                let mut sorted = indices.clone();
                sorted.sort_unstable();
                sorted.dedup();
                assert_eq!(sorted.len(), indices.len(), "vertex revisited");
            }
        }
        // generated cases are feasible, so even an untrained ordering with
        // backtracking should solve a decent share within budget
        assert!(successes >= 5, "only {successes}/25 successes");
    }

    #[test]
    fn each_edge_checked_at_most_once() {
        let model = untrained_model();
        for seed in [3u64, 4, 5] {
            let case = point_case(seed);
            let guidance = ModelGuidance::new(&model, case.world(), &case.rgg).unwrap();
            let budget = default_step_budget(&case.rgg);
            let mut planner =
                GreedyPlanner::new(&case.problem, &case.rgg, guidance, budget).unwrap();
            let mut counter = CollisionCounter::default();
            while planner.step(&mut counter).unwrap().is_some() {}
            let checked = planner.checked_edges().to_vec();
            let mut unique = checked.clone();
            unique.sort_unstable();
            unique.dedup();
            assert_eq!(unique.len(), checked.len(), "an edge was checked twice");
            assert_eq!(checked.len() as u64, counter.edge_checks);
            assert!(counter.edge_checks <= case.rgg.edges.len() as u64);
        }
    }

    #[test]
    fn perfect_guidance_spends_exactly_optimal_path_length() {
        for seed in 0..10 {
            let case = point_case(2000 + seed);
            let optimal = dijkstra(
                &case.rgg,
                |i, j| case.edge_valid(i, j),
                INIT_INDEX,
                GOAL_INDEX,
            )
            .expect("generated cases are feasible");
            let guidance = PerfectGuidance::new(&case);
            let budget = default_step_budget(&case.rgg);
            let mut counter = CollisionCounter::default();
            let result =
                plan_with(&case.problem, &case.rgg, guidance, budget, &mut counter).unwrap();
            assert!(result.success());
            let opt_indices = optimal.node_indices.as_ref().unwrap();
            // greedy on true distance-to-go walks a shortest path, one
            // successful check per step
            assert_eq!(result.edge_checks, (opt_indices.len() - 1) as u64);
            let path = result.path().unwrap();
            assert!((path.cost - optimal.cost).abs() < 1e-12);
        }
    }

    #[test]
    fn trace_replays_plan_bit_exactly() {
        let model = untrained_model();
        for seed in 0..50 {
            let case = point_case(3000 + seed);
            let budget = default_step_budget(&case.rgg);
            let mut c1 = CollisionCounter::default();
            let plain =
                gnn_plan(&model, &case.problem, &case.rgg, budget, &mut c1).unwrap();
            let mut c2 = CollisionCounter::default();
            let (trace, traced) =
                step_trace(&model, &case.problem, &case.rgg, budget, &mut c2).unwrap();
            assert_eq!(plain.outcome, traced.outcome);
            assert_eq!(plain.edge_checks, traced.edge_checks);
            assert_eq!(plain.point_checks, traced.point_checks);
            let spent: u64 = trace.iter().map(|t| t.edge_checks).sum();
            assert_eq!(spent, traced.edge_checks, "trace accounting mismatch");
            assert!(trace.len() <= budget);
        }
    }

    #[test]
    fn single_step_problem_yields_one_trace_entry() {
        let (problem, rgg) = two_node_problem();
        let model = untrained_model();
        let mut counter = CollisionCounter::default();
        let (trace, result) = step_trace(&model, &problem, &rgg, 10, &mut counter).unwrap();
        assert_eq!(trace.len(), 1);
        assert_eq!(trace[0].vertex, INIT_INDEX);
        assert_eq!(trace[0].chosen, Some(GOAL_INDEX));
        assert_eq!(trace[0].edge_checks, 1);
        assert!(result.success());
    }

    #[test]
    fn svg_renders_point_world_and_rejects_arm() {
        let case = point_case(42);
        let model = untrained_model();
        let guidance = ModelGuidance::new(&model, case.world(), &case.rgg).unwrap();
        let budget = default_step_budget(&case.rgg);
        let mut planner =
            GreedyPlanner::new(&case.problem, &case.rgg, guidance, budget).unwrap();
        let mut counter = CollisionCounter::default();
        while planner.step(&mut counter).unwrap().is_some() {}
        let checked = planner.checked_edges().to_vec();
        let result = planner.into_result(&counter).unwrap();
        let svg =
            render_svg(&case.problem, &case.rgg, &checked, result.path()).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("<line"));
        let rects = svg.matches("<rect").count();
        assert!(rects >= 1 + case.world().obstacles().len());
        if result.success() {
            assert!(svg.contains("<polyline"));
        }

        let arm_world = WorldModel::Arm {
            link_lengths: vec![0.5, 0.5],
            joint_limits: vec![[-3.0, 3.0], [-3.0, 3.0]],
            base: [0.0, 0.0],
            obstacles: vec![BoxObstacle::new(vec![0.8, 0.8], vec![0.1, 0.1]).unwrap()],
        };
        let arm_problem = ProblemInstance {
            world: arm_world,
            x_init: vec![0.0, 0.0],
            x_goal: vec![1.0, 1.0],
            goal_radius: 0.0,
        };
        assert!(render_svg(&arm_problem, &case.rgg, &[], None).is_err());
    }
}
