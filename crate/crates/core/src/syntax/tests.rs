use std::collections::BTreeSet;

use proptest::prelude::*;

use super::*;

const COLORING: &str = "col(red). col(green). col(black). node(1..4).
edge(1,2). edge(4,2). edge(1,3).

1 { colored(X,C) : col(C) } 1 :- node(X).
:- edge(X,Y), colored(X,C), colored(Y,C).
";

fn sig(s: &str) -> PredicateSignature {
    s.parse().unwrap()
}

fn sigs(list: &[&str]) -> BTreeSet<PredicateSignature> {
    list.iter().map(|s| sig(s)).collect()
}

fn kinds(p: &Program) -> Vec<RuleKind> {
    p.rules().iter().map(|r| r.kind).collect()
}

#[test]
fn two_facts() {
    let p = parse_program("col(red). node(1..4).").unwrap();
    assert_eq!(kinds(&p), [RuleKind::Fact, RuleKind::Fact]);
    assert_eq!(p.predicates(), sigs(&["col/1", "node/1"]));
}

#[test]
fn empty_program() {
    let p = parse_program("").unwrap();
    assert!(p.is_empty());
    assert!(parse_program("  \n\t").unwrap().is_empty());
}

#[test]
fn weak_constraint_level() {
    let p = parse_program(":~ colored(X,red). [1@1,X]").unwrap();
    assert_eq!(kinds(&p), [RuleKind::WeakConstraint]);
    assert_eq!(p.rules()[0].weak_level, Some(1));
    assert_eq!(p.rules()[0].text, ":~ colored(X,red). [1@1,X]");
    assert_eq!(p.max_weak_level(), 1);
}

#[test]
fn weak_level_defaults_to_zero() {
    let p = parse_program(":~ p(X). [X]\n:~ q. [2]").unwrap();
    assert_eq!(p.rules()[0].weak_level, Some(0));
    assert_eq!(p.rules()[1].weak_level, Some(0));
    assert_eq!(p.max_weak_level(), 0);
}

#[test]
fn max_weak_level_over_several() {
    let p = parse_program(":~ a(X). [1@2,X]\n:~ b(Y). [3@1,Y]\n").unwrap();
    assert_eq!(p.max_weak_level(), 2);
    assert_eq!(parse_program("a. b :- a.").unwrap().max_weak_level(), 0);
    let q = parse_program(":~ c. [1@-3]").unwrap();
    assert_eq!(q.max_weak_level(), -3);
}

#[test]
fn minimize_statements_are_weak() {
    let p = parse_program("#minimize { C@2,X,Y : cycle(X,Y), cost(X,Y,C); 1@5 : extra }.").unwrap();
    assert_eq!(kinds(&p), [RuleKind::WeakConstraint]);
    assert_eq!(p.max_weak_level(), 5);
    assert_eq!(p.predicates(), sigs(&["cycle/2", "cost/3", "extra/0"]));
}

#[test]
fn classification_of_the_coloring_example() {
    let p = parse_program(COLORING).unwrap();
    use RuleKind::*;
    assert_eq!(
        kinds(&p),
        [Fact, Fact, Fact, Fact, Fact, Fact, Fact, ChoiceRule, StrongConstraint]
    );
    assert_eq!(p.predicates(), sigs(&["col/1", "colored/2", "edge/2", "node/1"]));
    // colored occurs in the choice head and twice in the constraint
    assert_eq!(p.predicate_index()[&sig("colored/2")].len(), 3);
}

#[test]
fn terms_are_not_indexed_as_atoms() {
    let p = parse_program(
        "r(X) :- p(f(X), red), X != green, Y = h(1), q(Y).\n\
         s(N) :- N = #count { X,a : t(X) }.\n\
         :~ u(X). [1@1, X, k]",
    )
    .unwrap();
    assert_eq!(p.predicates(), sigs(&["r/1", "p/2", "q/1", "s/1", "t/1", "u/1"]));
}

#[test]
fn conditional_and_negated_literals() {
    let p = parse_program(":- node(Y), not inClique(Y); adj(X,Y) : inClique(X).\n-p(1).\nq :- not -p(2).").unwrap();
    assert_eq!(p.predicates(), sigs(&["node/1", "inClique/1", "adj/2", "p/1", "q/0"]));
    assert_eq!(p.rules()[1].kind, RuleKind::Fact);
}

#[test]
fn pooled_arguments_take_first_alternative_arity() {
    let p = parse_program("cost(1,2,1;2,1,1). col(red;green).").unwrap();
    assert_eq!(p.predicates(), sigs(&["cost/3", "col/1"]));
}

#[test]
fn comments_and_directives_are_preserved() {
    let src = "% header\np(1). % trailing\n#show p/1.\n%* block *%\n#const n = 3.\n";
    let p = parse_program(src).unwrap();
    use RuleKind::*;
    assert_eq!(kinds(&p), [Comment, Fact, Comment, Directive, Comment, Directive]);
    assert!(p.to_source().contains("% trailing"));
    // `#show p/1.` indexes p/1 a second time
    assert_eq!(p.predicate_index()[&sig("p/1")].len(), 2);
    let dropped = p.drop_show_directives();
    assert_eq!(dropped.count(Directive), 1);
}

#[test]
fn facts_require_ground_single_heads() {
    let p = parse_program("p(X) :- q(X).\na;b.\nr(X).\ns.\n{t}.").unwrap();
    use RuleKind::*;
    assert_eq!(kinds(&p), [NormalRule, NormalRule, NormalRule, Fact, ChoiceRule]);
}

#[test]
fn unbalanced_parenthesis_is_a_lex_error() {
    let err = parse_program("node(1").unwrap_err();
    assert!(matches!(err, SyntaxError::Lex(LexError { line: 1, col: 5, .. })));
    let err = parse_program("a.\np(1)).").unwrap_err();
    assert!(matches!(err, SyntaxError::Lex(LexError { line: 2, .. })));
    assert!(parse_program("s(\"open).").is_err());
}

#[test]
fn unterminated_rule_is_kept_for_the_solver() {
    let p = parse_program("a :- b").unwrap();
    assert_eq!(p.rules().len(), 1);
    assert_eq!(p.rules()[0].text, "a :- b");
}

#[test]
fn rename_candidate_to_gold() {
    let cand = parse_program(
        "colour(1). colour(2).\n1 {assign(N, C) : colour(C)} 1 :- node(N).\n:- edge(X, Y), assign(X, C), assign(Y, C).",
    )
    .unwrap();
    let mapping = PredicateMapping::Pairs(vec![
        ("chosen".into(), "assign".into()),
        ("color".into(), "colour".into()),
    ]);
    let out = cand.rename_predicates(&mapping).unwrap();
    assert_eq!(out.predicates(), sigs(&["chosen/2", "color/1", "edge/2", "node/1"]));
    assert!(out.to_source().contains("1 {chosen(N, C) : color(C)} 1 :- node(N)."));
}

#[test]
fn identity_rename_is_byte_identical() {
    let p = parse_program(COLORING).unwrap();
    let out = p.rename_predicates(&PredicateMapping::identity(["node"])).unwrap();
    assert_eq!(out.to_source(), p.to_source());
}

#[test]
fn rename_collision() {
    let p = parse_program("a(1). b(2).").unwrap();
    let m = PredicateMapping::Pairs(vec![("x".into(), "a".into()), ("x".into(), "b".into())]);
    assert!(matches!(p.rename_predicates(&m), Err(SyntaxError::MappingCollision(_))));
    // renaming onto a name the program already uses for something else
    let m = PredicateMapping::Pairs(vec![("b".into(), "a".into())]);
    assert!(matches!(p.rename_predicates(&m), Err(SyntaxError::MappingCollision(_))));
    // a swap is not a collision
    let m = PredicateMapping::Pairs(vec![("b".into(), "a".into()), ("a".into(), "b".into())]);
    assert_eq!(p.rename_predicates(&m).unwrap().to_source(), "b(1).\na(2).\n");
}

#[test]
fn rename_rejects_bad_identifiers_and_no_match() {
    let p = parse_program("a(1).").unwrap();
    let m = PredicateMapping::Pairs(vec![("Bad".into(), "a".into())]);
    assert!(matches!(
        p.rename_predicates(&m),
        Err(SyntaxError::InvalidIdentifier(_))
    ));
    assert!(matches!(
        p.rename_predicates(&PredicateMapping::NoSemanticMatch),
        Err(SyntaxError::NoSemanticMatch)
    ));
}

#[test]
fn rename_reports_arity_conflicts() {
    let gold = parse_program("chosen(1,red).").unwrap();
    let cand = parse_program("assign(1).").unwrap();
    let m = PredicateMapping::Pairs(vec![("chosen".into(), "assign".into())]);
    assert_eq!(cand.arity_conflicts(&gold, &m), vec![("assign".to_string(), 1, 2)]);
}

#[test]
fn strip_embedded_input_facts() {
    let p = parse_program(
        "node(a). node(b). edge(a,b).\ncolor(1).\n1 {assign(N,C) : color(C)} 1 :- node(N).\n:- edge(X,Y), assign(X,C), assign(Y,C).",
    )
    .unwrap();
    let out = p.strip_input_facts(&sigs(&["node/1", "edge/2"]));
    use RuleKind::*;
    assert_eq!(kinds(&out), [Fact, ChoiceRule, StrongConstraint]);
    assert_eq!(out.rules()[0].text, "color(1).");
}

#[test]
fn strip_keeps_rules_over_inputs() {
    let p = parse_program("adj(X,Y) :- edge(X,Y).\n:- edge(X,X).").unwrap();
    assert_eq!(p.strip_input_facts(&sigs(&["edge/2"])), p);
    let q = parse_program("p(1).").unwrap();
    assert_eq!(q.strip_input_facts(&sigs(&["edge/2"])), q);
}

#[test]
fn concat_reindexes() {
    let a = parse_program("p(1).").unwrap();
    let b = parse_program("q(X) :- p(X).").unwrap();
    let c = Program::concat([&a, &b]);
    assert_eq!(c.rules().len(), 2);
    assert_eq!(c.predicate_index()[&sig("p/1")][1].rule, 1);
}

#[test]
fn source_hash_tracks_content() {
    let a = parse_program("p(1).").unwrap();
    let b = parse_program("p(1).  ").unwrap();
    let c = parse_program("p(2).").unwrap();
    assert_eq!(a.source_hash(), b.source_hash());
    assert_ne!(a.source_hash(), c.source_hash());
}

// ---- properties -------------------------------------------------------

fn name() -> impl Strategy<Value = String> {
    prop::sample::select(vec!["p", "q", "edge", "node", "chosen", "aux", "r2"]).prop_map(String::from)
}

fn constant() -> impl Strategy<Value = String> {
    prop::sample::select(vec!["1", "2", "a", "red", "f(1)", "-3", "\"s\""]).prop_map(String::from)
}

fn rule() -> impl Strategy<Value = String> {
    prop_oneof![
        (name(), prop::collection::vec(constant(), 0..3)).prop_map(|(n, args)| if args.is_empty() {
            format!("{n}.")
        } else {
            format!("{n}({}).", args.join(","))
        }),
        (name(), name(), name()).prop_map(|(h, b1, b2)| format!("{h}(X) :- {b1}(X,Y), not {b2}(Y).")),
        (name(), name()).prop_map(|(h, b)| format!("1 {{ {h}(X,C) : {b}(C) }} 1 :- {b}(X).")),
        (name(), name()).prop_map(|(a, b)| format!(":- {a}(X), {b}(X), X != red.")),
        (name(), 0i64..5, 0i64..4).prop_map(|(a, w, l)| format!(":~ {a}(X). [{w}@{l},X]")),
        (name(), 0usize..3).prop_map(|(a, k)| format!("#show {a}/{k}.")),
        "[a-z ]{0,10}".prop_map(|c| format!("% {c}")),
    ]
}

fn program_source() -> impl Strategy<Value = String> {
    prop::collection::vec(rule(), 0..8).prop_map(|rs| rs.join("\n"))
}

proptest! {
    #[test]
    fn print_parse_fixed_point(src in program_source()) {
        let p = parse_program(&src).unwrap();
        let printed = p.to_source();
        let q = parse_program(&printed).unwrap();
        prop_assert_eq!(&q, &p);
        prop_assert_eq!(q.to_source(), printed);
        prop_assert_eq!(q.predicate_index(), p.predicate_index());
    }

    #[test]
    fn occurrence_spans_name_the_predicate(src in program_source()) {
        let p = parse_program(&src).unwrap();
        for (sig, occs) in p.predicate_index() {
            for o in occs {
                let text = &p.rules()[o.rule].text;
                prop_assert!(o.end <= text.len());
                prop_assert_eq!(&text[o.start..o.end], sig.name.as_str());
            }
        }
    }

    #[test]
    fn strip_is_idempotent(src in program_source(), inputs in prop::collection::btree_set((name(), 0usize..3), 1..4)) {
        let inputs: BTreeSet<PredicateSignature> = inputs
            .into_iter()
            .map(|(n, a)| PredicateSignature { name: n, arity: a })
            .collect();
        let p = parse_program(&src).unwrap();
        let once = p.strip_input_facts(&inputs);
        prop_assert_eq!(once.strip_input_facts(&inputs), once);
    }

    #[test]
    fn max_weak_level_dominates(src in program_source()) {
        let p = parse_program(&src).unwrap();
        let max = p.max_weak_level();
        for r in p.rules() {
            if let Some(l) = r.weak_level {
                prop_assert!(max >= l);
            }
        }
    }

    #[test]
    fn rename_then_inverse_is_identity(src in program_source()) {
        let p = parse_program(&src).unwrap();
        // map every name to a fresh one, then back
        let names: Vec<String> = p.predicate_names().into_iter().map(String::from).collect();
        let forward = PredicateMapping::Pairs(names.iter().map(|n| (format!("z_{n}"), n.clone())).collect());
        let back = PredicateMapping::Pairs(names.iter().map(|n| (n.clone(), format!("z_{n}"))).collect());
        let there = p.rename_predicates(&forward).unwrap();
        let again = there.rename_predicates(&back).unwrap();
        prop_assert_eq!(again.to_source(), p.to_source());
    }
}
