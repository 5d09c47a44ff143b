use eigenpath::apps::{run_grover, run_qsa, AnnealingInstance, GroverInstance, GroverRepr, GroverRunOptions, QsaRunOptions};
use eigenpath::paths::{EigenpathTracker, OperatorPath, Selection};
use eigenpath::qcore::{random, HermitianOperator};
use eigenpath::traversal::{execute, plan_randomization, ExecutionMode, Family, TraversalPlan};
use eigenpath::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_linear_path(dim: usize, seed: u64) -> OperatorPath {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random::hermitian(dim, 1.0, &mut rng);
    let b = random::hermitian(dim, 1.0, &mut rng);
    OperatorPath::linear(a, b).unwrap()
}

fn min_gap(path: &OperatorPath, tracker: &EigenpathTracker) -> f64 {
    (0..=200).map(|k| tracker.eigenstate_at(path, k as f64 / 200.0, None).unwrap().gap).fold(f64::INFINITY, f64::min)
}

#[test]
fn sampled_mode_agrees_with_exact_mode() {
    let path = random_linear_path(4, 3);
    let tracker = EigenpathTracker::new(Selection::Lowest);
    let floor = 0.95 * min_gap(&path, &tracker);
    let plan = plan_randomization(&path, &tracker, 0.8, floor, Family::Sinc4, true).unwrap();
    let initial = tracker.eigenstate_at(&path, 0.0, None).unwrap().state;
    let exact = execute(&plan, &path, &tracker, &initial).unwrap();
    let sampled = execute(&plan.clone().with_mode(ExecutionMode::Trajectories { count: 2000 }), &path, &tracker, &initial).unwrap();
    assert!(exact.final_fidelity >= 0.8);
    let se = sampled.final_fidelity_se;
    assert!(se > 0.0);
    assert!((sampled.final_fidelity - exact.final_fidelity).abs() <= 3.0 * se + 1e-3, "{} vs {} ± {se}", sampled.final_fidelity, exact.final_fidelity);
    let mean_cost = sampled.cost_samples.iter().sum::<f64>() / sampled.cost_samples.len() as f64;
    assert!((mean_cost - exact.predicted_cost).abs() / exact.predicted_cost < 0.1);
}

#[test]
fn trajectories_depend_only_on_the_seed() {
    let inst = GroverInstance::new(5, 3, GroverRepr::Subspace).unwrap();
    let opts = GroverRunOptions { mode: ExecutionMode::Trajectories { count: 300 }, seed: 17, ..GroverRunOptions::default() };
    let a = run_grover(&inst, &opts).unwrap();
    let b = run_grover(&inst, &opts).unwrap();
    assert_eq!(a.report.cost_samples, b.report.cost_samples);
    assert_eq!(a.report.trajectory_fidelities, b.report.trajectory_fidelities);
    let c = run_grover(&inst, &GroverRunOptions { seed: 18, ..opts }).unwrap();
    assert_ne!(a.report.cost_samples, c.report.cost_samples);
}

#[test]
fn plans_round_trip_through_json() {
    let inst = GroverInstance::new(4, 1, GroverRepr::Full).unwrap();
    let run = run_grover(&inst, &GroverRunOptions::default()).unwrap();
    let text = serde_json::to_string(&run.plan).unwrap();
    let back: TraversalPlan = serde_json::from_str(&text).unwrap();
    assert_eq!(back, run.plan);
}

#[test]
fn full_and_subspace_grover_agree() {
    let opts = GroverRunOptions::default();
    let full = run_grover(&GroverInstance::new(5, 17, GroverRepr::Full).unwrap(), &opts).unwrap();
    let sub = run_grover(&GroverInstance::new(5, 17, GroverRepr::Subspace).unwrap(), &opts).unwrap();
    assert!((full.success_probability - sub.success_probability).abs() < 1e-9);
    assert!((full.report.total_cost - sub.report.total_cost).abs() < 1e-9);
}

#[test]
fn qsa_with_explicit_energies() {
    let inst = AnnealingInstance::new(vec![0.0, 1.0, 1.0, 2.0, 3.0], eigenpath::apps::Topology::Complete).unwrap();
    let run = run_qsa(&inst, &QsaRunOptions::default()).unwrap();
    assert!(run.report.final_fidelity >= 0.8);
    let total: f64 = run.configuration_probabilities.iter().sum();
    assert!((total - 1.0).abs() < 1e-9);
    assert_eq!(run.walk_applications, run.report.total_cost);
}

#[test]
fn gap_floor_above_the_true_gap_is_rejected() {
    let path = random_linear_path(3, 8);
    let tracker = EigenpathTracker::new(Selection::Lowest);
    let gap = min_gap(&path, &tracker);
    let err = plan_randomization(&path, &tracker, 0.8, 2.0 * gap, Family::CompactOptimal, true).unwrap_err();
    assert!(err.is_plan_rejection(), "{err}");
}

#[test]
fn degenerate_start_is_a_numerical_failure() {
    let a = HermitianOperator::diagonal(&[0.0, 0.0, 1.0]);
    let b = HermitianOperator::diagonal(&[0.0, 1.0, 2.0]);
    let path = OperatorPath::linear(a, b).unwrap();
    let err = EigenpathTracker::new(Selection::Lowest).eigenstate_at(&path, 0.0, None).unwrap_err();
    assert!(matches!(err, Error::Degenerate { .. }));
    assert!(err.is_numerical());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn random_paths_reach_the_target(seed in 0u64..10_000, dim in 2usize..5, p in 0.5f64..0.9) {
        let path = random_linear_path(dim, seed);
        let tracker = EigenpathTracker::new(Selection::Lowest);
        let gap = min_gap(&path, &tracker);
        prop_assume!(gap > 0.05);
        let plan = plan_randomization(&path, &tracker, p, 0.95 * gap, Family::CompactOptimal, true).unwrap();
        let initial = tracker.eigenstate_at(&path, 0.0, None).unwrap().state;
        let report = execute(&plan, &path, &tracker, &initial).unwrap();
        prop_assert!(report.final_fidelity >= p, "{} < {p}", report.final_fidelity);
        prop_assert!((report.total_cost - plan.predicted_cost).abs() <= 1e-9 * plan.predicted_cost);
    }
}
