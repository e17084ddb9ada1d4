//! Command-line entry point: dataset generation, training, single-problem
//! planning, benchmarking, and a gradient self-check, all driven by one
//! JSON config file.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use gnnplan::bench::{
    compare_report, records_to_csv, records_to_json, run_benchmark, summarize, summary_to_csv,
};
use gnnplan::config::Config;
use gnnplan::graph::{build_rgg, default_radius, Rgg};
use gnnplan::guidance::GuidanceModel;
use gnnplan::plan::{render_svg, GreedyPlanner, ModelGuidance};
use gnnplan::tensor::nn::grad_check;
use gnnplan::tensor::tape::Tape;
use gnnplan::train::{
    config_hash, eval_accuracy, generate_dataset, load_dataset, save_dataset, train,
};
use gnnplan::world::{occupancy_grid, parse_world, CollisionCounter, ProblemInstance};
use gnnplan::{Error, Result};

#[derive(Parser)]
#[command(name = "gnnplan", version, about = "Guidance-model motion planning toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a training dataset of worlds, graphs and validity bitmaps
    Gen {
        /// JSON config file; defaults apply when omitted
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output dataset directory
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Override gen.case_count
        #[arg(long)]
        count: Option<usize>,
    },
    /// Train the guidance model on a generated dataset
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for model.ckpt, per-epoch checkpoints and the log
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Override train.epochs
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Plan one problem with the guided greedy planner
    Plan {
        /// Trained checkpoint; omitted = untrained weights
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// World JSON file
        #[arg(long)]
        world: PathBuf,
        /// Init state, comma-separated
        #[arg(long, value_delimiter = ',', required = true)]
        init: Vec<f64>,
        /// Goal state, comma-separated
        #[arg(long, value_delimiter = ',', required = true)]
        goal: Vec<f64>,
        /// Number of sampled states (graph has n + 2 nodes)
        #[arg(long, default_value_t = 200)]
        n: usize,
        /// Connection radius; omitted = per-world default policy
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        goal_radius: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write an SVG render of the attempt (2D point worlds)
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Benchmark planners over the cases of a dataset directory
    Bench {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dataset directory providing the benchmark problems
        #[arg(long)]
        cases: PathBuf,
        /// Output directory for records.csv, records.json, summary.csv, report.md
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Check analytic gradients of the full model against finite differences
    Gradcheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_config(path: &Option<PathBuf>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p),
        None => {
            let config = Config::default();
            config.validate()?;
            Ok(config)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => 2,
                _ => 1,
            }
        }
    };
    std::process::exit(code);
}

fn run(cmd: Cmd) -> Result<i32> {
    match cmd {
        Cmd::Gen { config, out, seed, count } => cmd_gen(&config, &out, seed, count),
        Cmd::Train { dataset, config, out, seed, epochs } => {
            cmd_train(&dataset, &config, &out, seed, epochs)
        }
        Cmd::Plan {
            checkpoint,
            config,
            world,
            init,
            goal,
            n,
            radius,
            goal_radius,
            seed,
            svg,
        } => cmd_plan(&checkpoint, &config, &world, init, goal, n, radius, goal_radius, seed, &svg),
        Cmd::Bench { checkpoint, config, cases, out, seed } => {
            cmd_bench(&checkpoint, &config, &cases, &out, seed)
        }
        Cmd::Gradcheck { config, seed } => cmd_gradcheck(&config, seed),
    }
}

fn cmd_gen(config: &Option<PathBuf>, out: &Path, seed: u64, count: Option<usize>) -> Result<i32> {
    let mut config = load_config(config)?;
    if let Some(c) = count {
        config.gen.case_count = c;
    }
    let existed = out.exists();
    let result = (|| -> Result<usize> {
        let cases = generate_dataset(&config, config.gen.case_count, seed)?;
        save_dataset(out, &cases, seed, &config)?;
        Ok(cases.len())
    })();
    match result {
        Ok(n) => {
            println!("wrote {n} cases to {} (seed {seed})", out.display());
            Ok(0)
        }
        Err(e) => {
            // leave no partial dataset behind
            if !existed && out.exists() {
                let _ = std::fs::remove_dir_all(out);
            }
            Err(e)
        }
    }
}

fn cmd_train(
    dataset: &Path,
    config: &Option<PathBuf>,
    out: &Path,
    seed: u64,
    epochs: Option<usize>,
) -> Result<i32> {
    let mut config = load_config(config)?;
    if let Some(e) = epochs {
        config.train.epochs = e;
    }
    let (cases, manifest) = load_dataset(dataset)?;
    println!("loaded {} cases (dataset seed {})", cases.len(), manifest.seed);
    std::fs::create_dir_all(out)?;
    let mut model = GuidanceModel::init(&config.model, seed)?;
    let logs = train(&mut model, &cases, &config.train, Some(out), seed)?;
    model.save(&out.join("model.ckpt"))?;
    let mut log_text = serde_json::to_string(&json!({
        "seed": seed,
        "dataset_seed": manifest.seed,
        "config_sha256": config_hash(&config)?,
    }))?;
    log_text.push('\n');
    for log in &logs {
        log_text.push_str(&serde_json::to_string(log)?);
        log_text.push('\n');
        println!(
            "epoch {:3}  mean loss {:.4}  steps {}  skipped {}  {:.1}s",
            log.epoch, log.mean_loss, log.steps, log.skipped, log.wall_time
        );
    }
    std::fs::write(out.join("train_log.jsonl"), log_text)?;
    let acc = eval_accuracy(&model, &cases, 2, config.train.k_max, seed)?;
    println!("next-step top-1 accuracy on training cases: {acc:.3}");
    println!("saved checkpoint to {}", out.join("model.ckpt").display());
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_plan(
    checkpoint: &Option<PathBuf>,
    config: &Option<PathBuf>,
    world_file: &Path,
    init: Vec<f64>,
    goal: Vec<f64>,
    n: usize,
    radius: Option<f64>,
    goal_radius: f64,
    seed: u64,
    svg: &Option<PathBuf>,
) -> Result<i32> {
    let config = load_config(config)?;
    let world = parse_world(&std::fs::read_to_string(world_file)?)?;
    let dim = world.state_bounds().len();
    if init.len() != dim || goal.len() != dim {
        return Err(Error::Config(format!(
            "init/goal must have {dim} coordinates for this world"
        )));
    }
    let problem = ProblemInstance { world, x_init: init, x_goal: goal, goal_radius };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radius = match radius {
        Some(r) => r,
        None => default_radius(&problem.world, n, &mut rng)?,
    };
    let rgg = build_rgg(&problem, n, radius, &mut rng)?;
    let model = load_model(checkpoint, &config, seed)?;
    let guidance = ModelGuidance::new(&model, &problem.world, &rgg)?;
    let budget = config.bench.step_budget_factor * rgg.node_count();
    let mut planner = GreedyPlanner::new(&problem, &rgg, guidance, budget)?;
    let mut counter = CollisionCounter::new();
    while planner.step(&mut counter)?.is_some() {}
    let checked = planner.checked_edges().to_vec();
    let result = planner.into_result(&counter)?;
    if let Some(path) = svg {
        std::fs::write(path, render_svg(&problem, &rgg, &checked, result.path())?)?;
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "seed": seed,
            "n_samples": n,
            "radius": radius,
            "result": result,
        }))?
    );
    Ok(if result.success() { 0 } else { 1 })
}

fn load_model(checkpoint: &Option<PathBuf>, config: &Config, seed: u64) -> Result<GuidanceModel> {
    match checkpoint {
        Some(p) => GuidanceModel::load(&config.model, p),
        None => GuidanceModel::init(&config.model, seed),
    }
}

fn cmd_bench(
    checkpoint: &Option<PathBuf>,
    config: &Option<PathBuf>,
    cases: &Path,
    out: &Path,
    seed: u64,
) -> Result<i32> {
    let config = load_config(config)?;
    let (dataset, _) = load_dataset(cases)?;
    let problems: Vec<ProblemInstance> = dataset.into_iter().map(|c| c.problem).collect();
    let model = match checkpoint {
        Some(p) => Some(GuidanceModel::load(&config.model, p)?),
        None => None,
    };
    let records = run_benchmark(&config, &problems, model.as_ref(), seed)?;
    let summary = summarize(&records)?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("records.csv"), records_to_csv(&records))?;
    std::fs::write(out.join("records.json"), records_to_json(&records)?)?;
    std::fs::write(out.join("summary.csv"), summary_to_csv(&summary))?;
    std::fs::write(out.join("report.md"), compare_report(&summary))?;
    println!(
        "{} trials over {} cases (seed {}); outputs in {}",
        records.len(),
        problems.len(),
        seed,
        out.display()
    );
    Ok(0)
}

fn cmd_gradcheck(config: &Option<PathBuf>, seed: u64) -> Result<i32> {
    let config = load_config(config)?;
    let model = GuidanceModel::init(&config.model, seed)?;
    // fixed 5-node planar graph: a 4-cycle over init/goal plus a chord
    let nodes = vec![
        vec![0.1, 0.1],
        vec![0.9, 0.9],
        vec![0.9, 0.1],
        vec![0.1, 0.9],
        vec![0.5, 0.5],
    ];
    let rgg = Rgg {
        nodes,
        edges: vec![(0, 2), (0, 3), (0, 4), (1, 2), (1, 3), (1, 4)],
        adjacency: vec![vec![2, 3, 4], vec![2, 3, 4], vec![0, 1], vec![0, 1], vec![0, 1]],
        radius: 1.0,
    };
    let world = gnnplan::world::WorldModel::Point {
        dim: 2,
        bounds: vec![[0.0, 1.0], [0.0, 1.0]],
        obstacles: vec![gnnplan::world::BoxObstacle::new(vec![0.7, 0.3], vec![0.15, 0.1])?],
    };
    let grid = occupancy_grid(&world, 8)?;
    let bounds = world.state_bounds();
    let path = vec![0usize];
    let vertex = 0usize;
    let cfg = model.config.clone();
    let mut params = model.params.clone();
    let report = grad_check(
        &mut params,
        move |tape: &mut Tape, ps| {
            let m = GuidanceModel { config: cfg.clone(), params: ps.clone() };
            let (row, _) = m
                .tape_guidance_scores(tape, &rgg, &grid, &bounds, &path, vertex)?
                .expect("vertex 0 has neighbors");
            tape.cross_entropy(row, 0)
        },
        4,
        seed,
    )?;
    let err = report.max_rel_err();
    if report.passed(1e-3) {
        println!("PASS, max rel err {err:.3e} < 1e-3");
        Ok(0)
    } else {
        println!("FAIL, max rel err {err:.3e} >= 1e-3");
        for (name, e) in &report.blocks {
            if *e >= 1e-3 {
                println!("  {name}: {e:.3e}");
            }
        }
        Ok(1)
    }
}
