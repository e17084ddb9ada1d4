//! Browser demo: generate a 2D world, build a random geometric graph, and
//! compare planners interactively. Compiled to WebAssembly; the guidance
//! model ships as an embedded checkpoint trained on 2D point worlds.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use wasm_bindgen::prelude::*;

use gnnplan::baselines::{lazy_prm_plan, prm_plan, PlanResult};
use gnnplan::config::ModelConfig;
use gnnplan::graph::{build_rgg, default_radius, sample_free, Rgg};
use gnnplan::guidance::GuidanceModel;
use gnnplan::plan::{render_svg, GreedyPlanner, ModelGuidance};
use gnnplan::tensor::ParamSet;
use gnnplan::world::{
    BoxObstacle, CollisionCounter, ProblemInstance, WorldModel,
};

static CHECKPOINT: &[u8] = include_bytes!("../assets/model.ckpt");

/// Model dimensions of the embedded checkpoint (kept deliberately small so
/// the .wasm stays light and planning is instant in the browser).
fn demo_model_config() -> ModelConfig {
    ModelConfig {
        state_dim_max: 2,
        d: 8,
        d_o: 8,
        h: 8,
        m: 16,
        workspace_dim: 2,
        conv_channels: [4, 8],
        conv_kernel: 3,
        conv_stride: 2,
        gat_slope: 0.2,
        decoder_hidden: 8,
    }
}

fn trained_model() -> Result<GuidanceModel, JsValue> {
    let params = ParamSet::from_bytes(CHECKPOINT).map_err(to_js)?;
    Ok(GuidanceModel { config: demo_model_config(), params })
}

fn to_js<E: std::fmt::Display>(e: E) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// Samples a random 2D world with `obstacles` boxes plus a feasible-looking
/// init/goal pair. Returns a problem JSON consumed by the other calls.
#[wasm_bindgen]
pub fn generate_world(seed: u32, obstacles: usize) -> Result<String, JsValue> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
    use rand::Rng;
    let mut world = WorldModel::Point {
        dim: 2,
        bounds: vec![[0.0, 1.0], [0.0, 1.0]],
        obstacles: Vec::new(),
    };
    for _ in 0..obstacles {
        let center = vec![rng.gen_range(0.1..0.9), rng.gen_range(0.1..0.9)];
        let half = vec![rng.gen_range(0.04..0.13), rng.gen_range(0.04..0.13)];
        world.obstacles_mut().push(BoxObstacle::new(center, half).map_err(to_js)?);
    }
    let endpoints = sample_free(&world, 2, &mut rng).map_err(to_js)?;
    let problem = ProblemInstance {
        world,
        x_init: endpoints[0].clone(),
        x_goal: endpoints[1].clone(),
        goal_radius: 0.0,
    };
    serde_json::to_string(&problem).map_err(to_js)
}

/// Builds an r-disc graph over `n` sampled free states (plus init and goal).
#[wasm_bindgen]
pub fn build_graph(problem_json: &str, n: usize, seed: u32) -> Result<String, JsValue> {
    let problem: ProblemInstance = serde_json::from_str(problem_json).map_err(to_js)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
    let radius = default_radius(&problem.world, n, &mut rng).map_err(to_js)?;
    let rgg = build_rgg(&problem, n, radius, &mut rng).map_err(to_js)?;
    rgg.to_json().map_err(to_js)
}

/// Runs one planner ("gnn", "gnn_untrained", "prm" or "lazy_prm") on the
/// given problem and graph. Returns stats, the path, the edges that were
/// collision-checked, and an SVG rendering of the attempt.
#[wasm_bindgen]
pub fn run_planner(problem_json: &str, rgg_json: &str, planner: &str) -> Result<String, JsValue> {
    let problem: ProblemInstance = serde_json::from_str(problem_json).map_err(to_js)?;
    let rgg = Rgg::from_json(rgg_json).map_err(to_js)?;
    let resolution = gnnplan::baselines::default_resolution(&problem.world);
    let mut counter = CollisionCounter::new();
    let (result, checked): (PlanResult, Vec<(usize, usize)>) = match planner {
        "prm" => {
            let r = prm_plan(&problem, &rgg, resolution, &mut counter).map_err(to_js)?;
            (r, rgg.edges.clone())
        }
        "lazy_prm" => {
            let r = lazy_prm_plan(&problem, &rgg, resolution, &mut counter).map_err(to_js)?;
            // lazy PRM checks edges along candidate paths; approximate the
            // render with the count only
            (r, Vec::new())
        }
        "gnn" | "gnn_untrained" => {
            let model = if planner == "gnn" {
                trained_model()?
            } else {
                GuidanceModel::init(&demo_model_config(), 12).map_err(to_js)?
            };
            let guidance = ModelGuidance::new(&model, &problem.world, &rgg).map_err(to_js)?;
            let budget = 10 * rgg.node_count();
            let mut greedy =
                GreedyPlanner::new(&problem, &rgg, guidance, budget).map_err(to_js)?;
            while greedy.step(&mut counter).map_err(to_js)?.is_some() {}
            let checked = greedy.checked_edges().to_vec();
            let r = greedy.into_result(&counter).map_err(to_js)?;
            (r, checked)
        }
        other => return Err(JsValue::from_str(&format!("unknown planner '{other}'"))),
    };
    let svg = render_svg(&problem, &rgg, &checked, result.path()).map_err(to_js)?;
    let out = json!({
        "planner": planner,
        "success": result.success(),
        "cost": result.path().map(|p| p.cost),
        "path": result.path().and_then(|p| p.node_indices.clone()),
        "edge_checks": result.edge_checks,
        "point_checks": result.point_checks,
        "graph_edges": rgg.edges.len(),
        "svg": svg,
    });
    serde_json::to_string(&out).map_err(to_js)
}
