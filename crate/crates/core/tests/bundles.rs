//! Checks every shipped problem bundle: it loads, the gold program scores
//! perfectly on both metrics, the instances cover unsatisfiable, unique and
//! multi-model cases, and every seeded mutant fails the suite.

use std::path::PathBuf;
use std::time::Duration;

use aspbench_core::dataset::{list_problems, load_bundle, ProblemBundle};
use aspbench_core::model_eval::{gold_models, EvalConfig};
use aspbench_core::mutation::{generate_mutants, validate_suite, ValidationInput};
use aspbench_core::solver::Solver;

const PROBLEMS: [&str; 10] = [
    "colorability",
    "dominating_set",
    "hamiltonian_cycle",
    "hamiltonian_path",
    "hierarchical_clustering",
    "maximal_clique",
    "partitioning",
    "slitherlink",
    "stable_marriage",
    "traveling_salesman",
];

/// Problems where no instance can be unsatisfiable.
const ALWAYS_SATISFIABLE: [&str; 1] = ["maximal_clique"];

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../problems")
}

fn solver() -> Solver {
    Solver::from_env().expect("clingo must be installed for the bundle tests")
}

/// `ASPBENCH_ONLY=a,b` restricts the run while authoring bundles.
fn selected() -> Vec<ProblemBundle> {
    let only = std::env::var("ASPBENCH_ONLY").ok();
    list_problems(&root())
        .unwrap()
        .into_iter()
        .filter(|n| only.as_deref().is_none_or(|o| o.split(',').any(|x| x == n)))
        .map(|n| load_bundle(&root().join(&n)).unwrap())
        .collect()
}

#[test]
fn the_ten_problems_are_shipped() {
    assert_eq!(list_problems(&root()).unwrap(), PROBLEMS);
}

#[test]
fn gold_programs_are_self_consistent() {
    let s = solver();
    for b in selected() {
        b.self_test(&s).unwrap_or_else(|e| panic!("{e}"));
    }
}

#[test]
fn instances_cover_the_design_guideline() {
    let s = solver();
    for b in selected() {
        let counts: Vec<usize> = b
            .instances
            .iter()
            .map(|i| {
                gold_models(&s, &b.gold, i, b.output_preds(), b.timeout())
                    .unwrap()
                    .models
                    .len()
            })
            .collect();
        eprintln!("{}: gold models per instance {:?}", b.name(), counts);
        assert!(counts.len() >= 3, "{}", b.name());
        assert!(
            counts.contains(&1),
            "{} lacks a uniquely satisfiable instance",
            b.name()
        );
        assert!(
            counts.iter().any(|&c| c > 1),
            "{} lacks a multi-model instance",
            b.name()
        );
        if !ALWAYS_SATISFIABLE.contains(&b.name()) {
            assert!(counts.contains(&0), "{} lacks an unsatisfiable instance", b.name());
        }
        assert!(counts.iter().all(|&c| c <= 200), "{}", b.name());
    }
}

#[test]
fn seeded_mutants_are_all_killed() {
    let s = solver();
    let mut failures = Vec::new();
    for b in selected() {
        let m = &b.manifest.mutation;
        let mutants = generate_mutants(&s, &b.gold, m.count, m.seed, Duration::from_secs(30)).unwrap();
        assert_eq!(mutants.len(), 15);
        let adjudicated = b.manifest.adjudicated_hashes();
        let input = ValidationInput {
            gold: &b.gold,
            suite: &b.suite,
            instances: &b.instances,
            outputs: b.output_preds(),
            adjudicated: &adjudicated,
            eval: EvalConfig {
                timeout: b.timeout(),
                ..EvalConfig::default()
            },
        };
        let report = validate_suite(&s, &input, &mutants).unwrap();
        for m in &report.mutants {
            eprintln!(
                "{} #{:<2} acc {:.3} f1 {:>5} {:?} {} [{}]",
                b.name(),
                m.id,
                m.suite_accuracy,
                m.model_f1.map(|f| format!("{f:.3}")).unwrap_or_else(|| "-".into()),
                m.lineage.kind,
                m.lineage.detail,
                &m.source_hash[..12],
            );
        }
        for m in report.unadjudicated_survivors() {
            failures.push(format!(
                "{}: mutant {} survives ({} {}; hash {})\n{}",
                b.name(),
                m.id,
                m.lineage.kind,
                m.lineage.detail,
                m.source_hash,
                m.source
            ));
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}
