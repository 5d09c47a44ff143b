//! Experiment runners. Each returns the artifacts to write; nothing here
//! touches the file system.

use eigenpath::apps::{run_grover, run_qsa, AnnealingInstance, GroverInstance, GroverRunOptions, QsaRunOptions};
use eigenpath::paths::{EigenpathTracker, OperatorPath, Selection};
use eigenpath::qcore::HermitianOperator;
use eigenpath::timedist::{cost_lower_bound_check, positive_lower_bound_check, repeat, DistSpec, TimeDistribution, CHECK_SLACK};
use eigenpath::traversal::{cost_statistics, execute, plan_randomization_with, ExecutionMode, Family, PlanOptions, TraversalPlan, TraversalReport};
use eigenpath::Error;
use nalgebra::DMatrix;
use serde_json::{json, Value};

use crate::config::{Experiment, ExperimentConfig, Mode};
use crate::plot;

/// Rows of a CSV file; cells are already formatted.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Debug, Clone)]
pub struct Artifacts {
    pub result: Value,
    pub tables: Vec<(String, Table)>,
    pub plots: Vec<(String, String)>,
}

/// Shortest round-trip decimal form, so CSV bytes depend only on the values.
fn num(x: f64) -> String {
    format!("{x}")
}

fn execution_mode(cfg: &ExperimentConfig) -> ExecutionMode {
    match cfg.plan.mode {
        Mode::Exact => ExecutionMode::Exact,
        Mode::Sampled => ExecutionMode::Trajectories { count: cfg.plan.trajectories },
    }
}

pub fn run(cfg: &ExperimentConfig, plots: bool) -> Result<Artifacts, Error> {
    match &cfg.experiment {
        Experiment::Grover { qubits, marked, representation } => {
            let inst = GroverInstance::with_marked(*qubits, marked.clone(), *representation)?;
            let opts = GroverRunOptions {
                p: cfg.plan.p,
                family: cfg.plan.family.unwrap_or(Family::CompactOptimal),
                negative_ok: cfg.plan.negative_ok.unwrap_or(true),
                mode: execution_mode(cfg),
                seed: cfg.seed,
            };
            let run = run_grover(&inst, &opts)?;
            let extra = json!({ "n_items": inst.n_items(), "success_probability": run.success_probability });
            traversal_artifacts(&run.plan, &run.report, extra, plots)
        }
        Experiment::Qsa { energies, random_size, topology, beta_final, laziness } => {
            let mut inst = match (energies, random_size) {
                (Some(e), _) => AnnealingInstance::new(e.clone(), *topology)?,
                (None, Some(d)) => {
                    let mut i = AnnealingInstance::random(*d, cfg.seed)?;
                    i.topology = *topology;
                    i
                }
                (None, None) => return Err(Error::InvalidParameter("no energies given".into())),
            };
            if let Some(b) = beta_final {
                inst = inst.with_beta_final(*b)?;
            }
            if let Some(a) = laziness {
                inst = inst.with_laziness(*a)?;
            }
            let opts = QsaRunOptions {
                p: cfg.plan.p,
                family: cfg.plan.family.unwrap_or(Family::UniformInt),
                negative_ok: cfg.plan.negative_ok.unwrap_or(false),
                mode: execution_mode(cfg),
                seed: cfg.seed,
            };
            let run = run_qsa(&inst, &opts)?;
            let extra = json!({
                "energies": inst.energies,
                "beta_final": inst.beta_final,
                "laziness": inst.laziness,
                "chain_gap": run.chain_gap,
                "phase_gap_floor": run.phase_gap_floor,
                "walk_applications": run.walk_applications,
                "ground_probability": run.ground_probability,
                "gibbs_ground_probability": run.gibbs_ground_probability,
            });
            let mut art = traversal_artifacts(&run.plan, &run.report, extra, plots)?;
            let gibbs = inst.stationary(inst.beta_final);
            let rows = (0..inst.size())
                .map(|x| vec![x.to_string(), num(inst.energies[x]), num(run.configuration_probabilities[x]), num(gibbs[x])])
                .collect();
            art.tables.push(("configurations.csv".into(), Table { header: vec!["configuration", "energy", "probability", "gibbs_probability"], rows }));
            Ok(art)
        }
        Experiment::GenericPath { start, end, gap_floor } => {
            let to_op = |m: &Vec<Vec<f64>>| {
                let n = m.len();
                HermitianOperator::from_real(&DMatrix::from_fn(n, n, |i, j| m[i][j]))
            };
            let path = OperatorPath::linear(to_op(start)?, to_op(end)?)?;
            let tracker = EigenpathTracker::new(Selection::Lowest);
            let floor = match gap_floor {
                Some(g) => *g,
                None => {
                    let mut min = f64::INFINITY;
                    for k in 0..=400 {
                        min = min.min(tracker.eigenstate_at(&path, k as f64 / 400.0, None)?.gap);
                    }
                    0.95 * min
                }
            };
            let opts = PlanOptions { mode: execution_mode(cfg), seed: cfg.seed, ..PlanOptions::default() };
            let family = cfg.plan.family.unwrap_or(Family::CompactOptimal);
            let plan = plan_randomization_with(&path, &tracker, cfg.plan.p, floor, family, cfg.plan.negative_ok.unwrap_or(true), &opts)?;
            let initial = tracker.eigenstate_at(&path, 0.0, None)?.state;
            let report = execute(&plan, &path, &tracker, &initial)?;
            traversal_artifacts(&plan, &report, json!({ "dimension": start.len() }), plots)
        }
        Experiment::DistInfo { dist, omega_min, omega_max, points, delta } => dist_info(dist, *omega_min, *omega_max, *points, *delta, plots),
    }
}

fn traversal_artifacts(plan: &TraversalPlan, report: &TraversalReport, extra: Value, plots: bool) -> Result<Artifacts, Error> {
    let steps = Table {
        header: vec!["step", "s", "fidelity"],
        rows: report.schedule.iter().zip(&report.step_fidelities).enumerate().map(|(j, (s, f))| vec![(j + 1).to_string(), num(*s), num(*f)]).collect(),
    };
    let mut tables = vec![("steps.csv".to_string(), steps)];
    let mut summary = json!({
        "q": plan.q(),
        "repetitions": plan.repetitions,
        "distribution": plan.distribution,
        "gap_floor": plan.gap_floor,
        "length_bound": plan.length_bound,
        "final_fidelity": report.final_fidelity,
        "final_fidelity_se": report.final_fidelity_se,
        "target_fidelity": plan.target_fidelity,
        "total_cost": report.total_cost,
        "predicted_cost": report.predicted_cost,
    });
    if !report.cost_samples.is_empty() {
        let stats = cost_statistics(report, 2.0)?;
        summary["cost_tail_a2"] = serde_json::to_value(stats).expect("serializable");
        tables.push((
            "trajectories.csv".to_string(),
            Table {
                header: vec!["trajectory", "cost", "final_fidelity"],
                rows: report.cost_samples.iter().zip(&report.trajectory_fidelities).enumerate().map(|(i, (c, f))| vec![i.to_string(), num(*c), num(*f)]).collect(),
            },
        ));
    }
    tables.push((
        "populations.csv".to_string(),
        Table { header: vec!["basis_state", "probability"], rows: report.final_populations.iter().enumerate().map(|(k, p)| vec![k.to_string(), num(*p)]).collect() },
    ));
    let mut svgs = Vec::new();
    if plots {
        let pts: Vec<(f64, f64)> = report.step_fidelities.iter().enumerate().map(|(j, f)| ((j + 1) as f64, *f)).collect();
        svgs.push(("fidelity.svg".to_string(), plot::line_chart("Fidelity with the tracked eigenstate", "step", "fidelity", &pts)));
        let base = plan.distribution()?;
        let dist = if plan.repetitions > 1 { repeat(&base, plan.repetitions)? } else { base };
        let wmax = 4.0 * plan.gap_floor;
        let phi: Vec<(f64, f64)> = (0..=400).map(|i| wmax * i as f64 / 400.0).map(|w| (w, dist.char_fn(w).norm())).collect();
        svgs.push(("phi.svg".to_string(), plot::line_chart(&format!("|Φ(ω)| for {}", dist.label()), "ω", "|Φ|", &phi)));
        if !report.cost_samples.is_empty() {
            svgs.push(("cost_histogram.svg".to_string(), plot::histogram("Trajectory cost", "Σ|t|", &report.cost_samples, 40)));
        }
    }
    let mut result = json!({ "plan": plan, "summary": summary });
    if let (Value::Object(r), Value::Object(e)) = (&mut result, extra) {
        r.extend(e);
    }
    Ok(Artifacts { result, tables, plots: svgs })
}

pub fn dist_info(spec: &DistSpec, omega_min: f64, omega_max: f64, points: usize, delta: Option<f64>, plots: bool) -> Result<Artifacts, Error> {
    let dist = TimeDistribution::from_spec(spec.clone())?;
    let grid: Vec<f64> = (0..points).map(|i| omega_min + (omega_max - omega_min) * i as f64 / (points - 1) as f64).collect();
    let mut rows = Vec::with_capacity(points);
    let mut all_pass = true;
    let mut worst_slack = f64::INFINITY;
    for &w in &grid {
        let phi = dist.char_fn(w);
        let (bound, pass) = if w != 0.0 {
            let (cost, bound, pass) = cost_lower_bound_check(&dist, w)?;
            worst_slack = worst_slack.min(cost - bound);
            (num(bound), pass)
        } else {
            (String::new(), true)
        };
        all_pass &= pass;
        rows.push(vec![num(w), num(phi.norm()), num(phi.re), num(phi.im), bound, pass.to_string()]);
    }
    let table = Table { header: vec!["omega", "abs_phi", "re_phi", "im_phi", "cost_lower_bound", "cost_bound_pass"], rows };
    let positive = if dist.support().is_nonnegative() {
        let d = delta.or_else(|| grid.iter().cloned().find(|w| *w > 0.0)).unwrap_or(1.0);
        let (cost, bound, pass) = positive_lower_bound_check(&dist, d)?;
        json!({ "delta": d, "cost": cost, "bound": bound, "pass": pass })
    } else {
        Value::Null
    };
    let result = json!({
        "distribution": spec,
        "label": dist.label(),
        "support": format!("{:?}", dist.support()),
        "mean": dist.mean(),
        "mean_abs_cost": dist.mean_abs_cost(),
        "cost_bound_check": { "pass": all_pass, "worst_slack": if worst_slack.is_finite() { json!(worst_slack) } else { Value::Null }, "slack_tolerance": CHECK_SLACK },
        "positive_time_check": positive,
    });
    let mut svgs = Vec::new();
    if plots {
        let pts: Vec<(f64, f64)> = grid.iter().map(|w| (*w, dist.char_fn(*w).norm())).collect();
        svgs.push(("phi.svg".to_string(), plot::line_chart(&format!("|Φ(ω)| for {}", dist.label()), "ω", "|Φ|", &pts)));
    }
    Ok(Artifacts { result, tables: vec![("dist.csv".to_string(), table)], plots: svgs })
}
