use std::collections::BTreeSet;
use std::time::Duration;

use aspbench_core::solver::Solver;
use aspbench_core::suite::{parse_suite, run_case, run_suite, CaseOutcome};
use aspbench_core::syntax::{parse_program, PredicateSignature, Program};

const T: Duration = Duration::from_secs(60);

fn solver() -> Solver {
    Solver::from_env().expect("clingo must be installed for the suite tests")
}

fn prog(s: &str) -> Program {
    parse_program(s).unwrap()
}

fn outs() -> BTreeSet<PredicateSignature> {
    ["chosenColor/2".parse().unwrap()].into()
}

const GOLD: &str = "1 { chosenColor(N,C) : color(C) } 1 :- node(N).
:- edge(U,V), chosenColor(U,C), chosenColor(V,C).";
const NO_ADJACENCY: &str = "1 { chosenColor(N,C) : color(C) } 1 :- node(N).";

const SUITE: &str = "%@test(name=k4)
node(1..4). edge(1,2). edge(1,3). edge(1,4). edge(2,3). edge(2,4). edge(3,4).
color(red;green;black).
%@noAnswerSet

%@test(name=triangle)
node(1..3). edge(1,2). edge(2,3). edge(1,3). color(red;green;black).
%@hasAnswerSet
%@answerSetCount(count=6)
%@constraintForAll(constraint=\":- node(U), not chosenColor(U,_).\")
%@constraintForAll(constraint=\":- edge(X,Y), chosenColor(X,C), chosenColor(Y,C).\")
%@trueInAtLeastOne(atom=\"chosenColor(1,red)\")

%@test(name=pinned)
node(1..2). edge(1,2). color(red).
%@noAnswerSet

%@test(name=single)
node(1). color(red).
%@trueInAll(atom=\"chosenColor(1,red)\")
%@answerSetCount(count=1)
";

#[test]
fn gold_passes_its_suite() {
    let suite = parse_suite(SUITE).unwrap().with_outputs(&outs());
    let r = run_suite(&solver(), &prog(GOLD), &suite, T).unwrap();
    assert_eq!(r.accuracy, 1.0, "{:?}", r.cases);
}

#[test]
fn missing_adjacency_fails_with_a_witness() {
    let suite = parse_suite(SUITE).unwrap().with_outputs(&outs());
    let r = run_suite(&solver(), &prog(NO_ADJACENCY), &suite, T).unwrap();
    assert_eq!(r.passed, 1);
    assert_eq!(r.accuracy, 0.25);
    let triangle = r.cases.iter().find(|c| c.name == "triangle").unwrap();
    let CaseOutcome::Failed(reasons) = &triangle.outcome else {
        panic!("{triangle:?}");
    };
    assert!(reasons
        .iter()
        .any(|r| r.contains("answerSetCount") && r.contains("found 27")));
    let violation = reasons
        .iter()
        .find(|r| r.starts_with("constraintForAll(constraint=\":- edge"))
        .expect("the adjacency constraint must fail");
    assert!(violation.contains("violated by {"));
}

#[test]
fn empty_program_has_the_empty_answer_set() {
    let suite = parse_suite("%@test(name=t)\n%@hasAnswerSet\n%@answerSetCount(count=1)\n").unwrap();
    let r = run_suite(&solver(), &Program::empty(), &suite, T).unwrap();
    assert_eq!(r.accuracy, 1.0);
}

#[test]
fn invalid_candidate_errors_every_case() {
    let suite = parse_suite(SUITE).unwrap();
    let r = run_suite(&solver(), &prog("chosenColor(X,C) :- node(X)."), &suite, T).unwrap();
    assert_eq!(r.accuracy, 0.0);
    assert!(r.cases.iter().all(|c| matches!(c.outcome, CaseOutcome::Errored(_))));
}

#[test]
fn case_order_does_not_change_accuracy() {
    let mut suite = parse_suite(SUITE).unwrap().with_outputs(&outs());
    let a = run_suite(&solver(), &prog(NO_ADJACENCY), &suite, T).unwrap();
    suite.cases.reverse();
    let b = run_suite(&solver(), &prog(NO_ADJACENCY), &suite, T).unwrap();
    assert_eq!(a.accuracy, b.accuracy);
}

/// Per-model checking agrees with counting models before and after adding
/// the constraint to the program.
#[test]
fn constraint_for_all_matches_model_count_formulation() {
    let s = solver();
    let facts = "node(1..3). edge(1,2). edge(2,3). color(red;green).";
    let candidates = [GOLD, NO_ADJACENCY, "{ chosenColor(N,C) : color(C) } 1 :- node(N)."];
    let constraints = [
        ":- node(U), not chosenColor(U,_).",
        ":- edge(X,Y), chosenColor(X,C), chosenColor(Y,C).",
        ":- chosenColor(1,red), chosenColor(3,red).",
        ":- #count { N : chosenColor(N,green) } > 1.",
        ":- chosenColor(N,C), chosenColor(N,D), C != D.",
    ];
    for c in candidates {
        for k in constraints {
            let suite = parse_suite(&format!(
                "%@test(name=t)\n{facts}\n%@constraintForAll(constraint=\"{k}\")\n"
            ))
            .unwrap();
            let passed = run_case(&s, &prog(c), &suite.cases[0], &BTreeSet::new(), T)
                .unwrap()
                .passed();
            let before = s.solve_all(&[&prog(c), &prog(facts)], T).unwrap().models.len();
            let after = s
                .solve_all(&[&prog(c), &prog(facts), &prog(k)], T)
                .unwrap()
                .models
                .len();
            assert_eq!(passed, before == after, "{c} with {k}");
        }
    }
}
