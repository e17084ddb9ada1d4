//! Multi-planner benchmark sweeps over sample counts, with collision-check,
//! timing, cost, and success-rate aggregation plus CSV/JSON export and a
//! markdown comparison report.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{lazy_prm_plan, prm_plan, rrt_star_plan, PlanResult};
use crate::config::Config;
use crate::graph::{build_rgg, default_radius};
use crate::guidance::GuidanceModel;
use crate::plan::gnn_plan;
use crate::world::{CollisionCounter, ProblemInstance};
use crate::{Error, Result};

pub const CSV_HEADER: &str =
    "planner,case,seed,n_samples,edge_checks,point_checks,build_time,plan_time,total_time,cost,success";

/// One planning trial. `cost` is present exactly when the trial succeeded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub planner: String,
    pub case: usize,
    pub seed: u64,
    pub n_samples: usize,
    pub edge_checks: u64,
    pub point_checks: u64,
    pub build_time: f64,
    pub plan_time: f64,
    pub total_time: f64,
    pub cost: Option<f64>,
    pub success: bool,
}

/// Per-(planner, n_samples) aggregate: means and population variances over
/// all trials, except cost which aggregates over successful trials only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub planner: String,
    pub n_samples: usize,
    pub trials: usize,
    pub edge_checks_mean: f64,
    pub edge_checks_var: f64,
    pub point_checks_mean: f64,
    pub point_checks_var: f64,
    pub build_time_mean: f64,
    pub build_time_var: f64,
    pub plan_time_mean: f64,
    pub plan_time_var: f64,
    pub total_time_mean: f64,
    pub total_time_var: f64,
    pub cost_mean: Option<f64>,
    pub cost_var: Option<f64>,
    pub success_rate: f64,
}

pub const KNOWN_PLANNERS: [&str; 5] = ["gnn", "gnn_untrained", "prm", "lazy_prm", "rrt_star"];

/// Seed for one (case, n_samples) cell, shared by every planner in the cell.
pub fn trial_seed(bench_seed: u64, case: usize, n_samples: usize) -> u64 {
    let cell = ((case as u64) << 32) | n_samples as u64;
    bench_seed ^ cell.wrapping_add(1).wrapping_mul(0x9e3779b97f4a7c15)
}

/// Runs every configured planner over every (case, n_samples) cell. Graph
/// planners in a cell share one RGG (built once, timed once) so their check
/// counts compare on the same graph; RRT* samples its own tree. Fully
/// deterministic for a given seed apart from the timing fields.
pub fn run_benchmark(
    config: &Config,
    problems: &[ProblemInstance],
    model: Option<&GuidanceModel>,
    seed: u64,
) -> Result<Vec<TrialRecord>> {
    let planners = &config.bench.planners;
    if planners.is_empty() {
        return Err(Error::Config("no planners configured".into()));
    }
    for p in planners {
        if !KNOWN_PLANNERS.contains(&p.as_str()) {
            return Err(Error::Config(format!("unknown planner '{p}'")));
        }
    }
    if planners.iter().any(|p| p == "gnn") && model.is_none() {
        return Err(Error::Config("planner 'gnn' requested but no checkpoint given".into()));
    }
    let untrained = if planners.iter().any(|p| p == "gnn_untrained") {
        Some(GuidanceModel::init(&config.model, seed)?)
    } else {
        None
    };

    let mut records = Vec::new();
    for (case, problem) in problems.iter().enumerate() {
        let resolution = config.graph.resolution_frac * problem.world.state_diagonal();
        for &n in &config.bench.sample_counts {
            let cell_seed = trial_seed(seed, case, n);
            let needs_graph = planners.iter().any(|p| p != "rrt_star");
            let graph = if needs_graph {
                let mut rng = ChaCha8Rng::seed_from_u64(cell_seed);
                let started = Instant::now();
                let radius = match config.graph.radius {
                    Some(r) => r,
                    None => default_radius(&problem.world, n, &mut rng)?,
                };
                let rgg = build_rgg(problem, n, radius, &mut rng)?;
                Some((rgg, started.elapsed().as_secs_f64()))
            } else {
                None
            };
            for planner in planners {
                let mut counter = CollisionCounter::new();
                let (result, build_time) = match planner.as_str() {
                    "rrt_star" => {
                        let mut rng = ChaCha8Rng::seed_from_u64(cell_seed);
                        let steer = config.bench.rrt_steer_frac * problem.world.state_diagonal();
                        let r = rrt_star_plan(
                            problem,
                            config.bench.rrt_max_samples,
                            steer,
                            resolution,
                            &mut counter,
                            &mut rng,
                        )?;
                        (r, 0.0)
                    }
                    name => {
                        let (rgg, build_time) = graph.as_ref().expect("graph built above");
                        let r = match name {
                            "prm" => prm_plan(problem, rgg, resolution, &mut counter)?,
                            "lazy_prm" => lazy_prm_plan(problem, rgg, resolution, &mut counter)?,
                            "gnn" | "gnn_untrained" => {
                                let m = if name == "gnn" {
                                    model.expect("checked above")
                                } else {
                                    untrained.as_ref().expect("initialized above")
                                };
                                let budget = config.bench.step_budget_factor * rgg.node_count();
                                gnn_plan(m, problem, rgg, budget, &mut counter)?
                            }
                            _ => unreachable!("validated against KNOWN_PLANNERS"),
                        };
                        (r, *build_time)
                    }
                };
                records.push(record_from(planner, case, cell_seed, n, build_time, &result));
            }
        }
    }
    Ok(records)
}

fn record_from(
    planner: &str,
    case: usize,
    seed: u64,
    n_samples: usize,
    build_time: f64,
    result: &PlanResult,
) -> TrialRecord {
    TrialRecord {
        planner: planner.to_string(),
        case,
        seed,
        n_samples,
        edge_checks: result.edge_checks,
        point_checks: result.point_checks,
        build_time,
        plan_time: result.plan_time,
        total_time: build_time + result.plan_time,
        cost: result.path().map(|p| p.cost),
        success: result.success(),
    }
}

fn mean_var(values: &mut Vec<f64>) -> (f64, f64) {
    // sort before summing so aggregation is invariant to trial order
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Groups records by (planner, n_samples). Means/variances are population
/// statistics; cost aggregates over successes and is absent when none
/// succeeded.
pub fn summarize(records: &[TrialRecord]) -> Result<Vec<SummaryRow>> {
    if records.is_empty() {
        return Err(Error::Input("no records to summarize".into()));
    }
    let mut groups: BTreeMap<(String, usize), Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.planner.clone(), r.n_samples)).or_default().push(r);
    }
    let mut rows = Vec::with_capacity(groups.len());
    for ((planner, n_samples), trials) in groups {
        let collect = |f: &dyn Fn(&TrialRecord) -> f64| -> Vec<f64> {
            trials.iter().map(|r| f(r)).collect()
        };
        let (edge_checks_mean, edge_checks_var) =
            mean_var(&mut collect(&|r| r.edge_checks as f64));
        let (point_checks_mean, point_checks_var) =
            mean_var(&mut collect(&|r| r.point_checks as f64));
        let (build_time_mean, build_time_var) = mean_var(&mut collect(&|r| r.build_time));
        let (plan_time_mean, plan_time_var) = mean_var(&mut collect(&|r| r.plan_time));
        let (total_time_mean, total_time_var) = mean_var(&mut collect(&|r| r.total_time));
        let mut costs: Vec<f64> = trials.iter().filter_map(|r| r.cost).collect();
        let (cost_mean, cost_var) = if costs.is_empty() {
            (None, None)
        } else {
            let (m, v) = mean_var(&mut costs);
            (Some(m), Some(v))
        };
        let successes = trials.iter().filter(|r| r.success).count();
        rows.push(SummaryRow {
            planner,
            n_samples,
            trials: trials.len(),
            edge_checks_mean,
            edge_checks_var,
            point_checks_mean,
            point_checks_var,
            build_time_mean,
            build_time_var,
            plan_time_mean,
            plan_time_var,
            total_time_mean,
            total_time_var,
            cost_mean,
            cost_var,
            success_rate: successes as f64 / trials.len() as f64,
        });
    }
    Ok(rows)
}

pub fn records_to_csv(records: &[TrialRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        let cost = r.cost.map(|c| c.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.planner,
            r.case,
            r.seed,
            r.n_samples,
            r.edge_checks,
            r.point_checks,
            r.build_time,
            r.plan_time,
            r.total_time,
            cost,
            r.success,
        ));
    }
    out
}

pub fn records_from_csv(text: &str) -> Result<Vec<TrialRecord>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Input("empty csv".into()))?;
    if header != CSV_HEADER {
        return Err(Error::Input(format!("unexpected csv header: {header}")));
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 11 {
            return Err(Error::Input(format!("csv line {}: expected 11 fields", i + 2)));
        }
        let parse_err =
            |what: &str| Error::Input(format!("csv line {}: bad {what}", i + 2));
        records.push(TrialRecord {
            planner: fields[0].to_string(),
            case: fields[1].parse().map_err(|_| parse_err("case"))?,
            seed: fields[2].parse().map_err(|_| parse_err("seed"))?,
            n_samples: fields[3].parse().map_err(|_| parse_err("n_samples"))?,
            edge_checks: fields[4].parse().map_err(|_| parse_err("edge_checks"))?,
            point_checks: fields[5].parse().map_err(|_| parse_err("point_checks"))?,
            build_time: fields[6].parse().map_err(|_| parse_err("build_time"))?,
            plan_time: fields[7].parse().map_err(|_| parse_err("plan_time"))?,
            total_time: fields[8].parse().map_err(|_| parse_err("total_time"))?,
            cost: if fields[9].is_empty() {
                None
            } else {
                Some(fields[9].parse().map_err(|_| parse_err("cost"))?)
            },
            success: fields[10].parse().map_err(|_| parse_err("success"))?,
        });
    }
    Ok(records)
}

pub const SUMMARY_CSV_HEADER: &str = "planner,n_samples,trials,edge_checks_mean,edge_checks_var,\
point_checks_mean,point_checks_var,build_time_mean,build_time_var,plan_time_mean,plan_time_var,\
total_time_mean,total_time_var,cost_mean,cost_var,success_rate";

pub fn summary_to_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(SUMMARY_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.planner,
            r.n_samples,
            r.trials,
            r.edge_checks_mean,
            r.edge_checks_var,
            r.point_checks_mean,
            r.point_checks_var,
            r.build_time_mean,
            r.build_time_var,
            r.plan_time_mean,
            r.plan_time_var,
            r.total_time_mean,
            r.total_time_var,
            r.cost_mean.map(|c| c.to_string()).unwrap_or_default(),
            r.cost_var.map(|c| c.to_string()).unwrap_or_default(),
            r.success_rate,
        ));
    }
    out
}

pub fn records_to_json(records: &[TrialRecord]) -> Result<String> {
    Ok(serde_json::to_string_pretty(records)?)
}

pub fn records_from_json(text: &str) -> Result<Vec<TrialRecord>> {
    Ok(serde_json::from_str(text)?)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

/// Markdown comparison: per-sample-count table of means, then guided/baseline
/// ratio lines for edge checks and planning time, with flags for the
/// directional claims (guided planner spends fewer checks than PRM / RRT*).
pub fn compare_report(summary: &[SummaryRow]) -> String {
    let mut out = String::from("# Planner comparison\n");
    let mut counts: Vec<usize> = summary.iter().map(|r| r.n_samples).collect();
    counts.sort_unstable();
    counts.dedup();
    for n in counts {
        let rows: Vec<&SummaryRow> = summary.iter().filter(|r| r.n_samples == n).collect();
        out.push_str(&format!("\n## n_samples = {n}\n\n"));
        out.push_str("| planner | edge checks | plan time (s) | cost | success |\n");
        out.push_str("|---|---|---|---|---|\n");
        for r in &rows {
            out.push_str(&format!(
                "| {} | {:.1} | {:.4} | {} | {:.2} |\n",
                r.planner,
                r.edge_checks_mean,
                r.plan_time_mean,
                fmt_opt(r.cost_mean),
                r.success_rate,
            ));
        }
        let gnn = rows.iter().find(|r| r.planner == "gnn");
        let Some(gnn) = gnn else {
            out.push_str("\nno gnn row; ratios omitted\n");
            continue;
        };
        out.push('\n');
        for baseline in ["prm", "lazy_prm", "rrt_star"] {
            let Some(b) = rows.iter().find(|r| r.planner == baseline) else {
                out.push_str(&format!("- {baseline} absent; ratio omitted\n"));
                continue;
            };
            let check_ratio = gnn.edge_checks_mean / b.edge_checks_mean;
            let time_ratio = gnn.plan_time_mean / b.plan_time_mean;
            let flag = if gnn.edge_checks_mean < b.edge_checks_mean { "holds" } else { "VIOLATED" };
            out.push_str(&format!(
                "- gnn/{baseline}: edge checks {:.4} ({:.2}%), plan time {:.4}; fewer-checks claim {flag}\n",
                check_ratio,
                100.0 * check_ratio,
                time_ratio,
            ));
        }
    }
    out
}
