//! Model-based scoring of a candidate program against a gold program.
//!
//! For every instance the gold models are enumerated, each gold model is
//! checked for coverage with one steered solver call, and the candidate's
//! remaining (wrong) models are enumerated from an augmented program that
//! rejects every gold model.

use std::collections::BTreeSet;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::solver::{
    AnswerSet, Optimization, SolveMode, SolveRequest, SolveResult, SolveStatus, Solver, SolverError, DEFAULT_TIMEOUT,
};
use crate::syntax::{parse_program, project_atoms, GroundAtom, PredicateSignature, Program};

/// A fact-only program describing one concrete input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub id: String,
    pub facts: Program,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("gold program failed on instance {instance}: {detail}")]
    Gold { instance: String, detail: String },
    #[error("gold model is nonempty but the complement base is empty")]
    EmptyBase,
    #[error("generated program does not parse: {0}")]
    Generated(String),
}

/// Which candidate models count as target-program models when the candidate
/// has weak constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WrongModelMode {
    /// Only the candidate's optimal models.
    #[default]
    PtOptimal,
    /// Every stable model; weak constraints are ignored.
    AllStable,
}

#[derive(Debug, Clone, Copy)]
pub struct EvalConfig {
    pub timeout: Duration,
    pub wm_mode: WrongModelMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            timeout: DEFAULT_TIMEOUT,
            wm_mode: WrongModelMode::PtOptimal,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSets {
    pub gm: Vec<(String, AnswerSet)>,
    pub cgm: Vec<(String, AnswerSet)>,
    pub wm: Vec<(String, AnswerSet)>,
}

impl ModelSets {
    pub fn merge(&mut self, other: ModelSets) {
        self.gm.extend(other.gm);
        self.cgm.extend(other.cgm);
        self.wm.extend(other.wm);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub gm_count: usize,
    pub cgm_count: usize,
    pub wm_count: usize,
    pub tpm_count: usize,
}

/// Micro precision, recall and F1 over the pooled counts.
pub fn compute_scores(ms: &ModelSets) -> Scores {
    scores_from_counts(ms.gm.len(), ms.cgm.len(), ms.wm.len())
}

pub fn scores_from_counts(gm: usize, cgm: usize, wm: usize) -> Scores {
    let tpm = cgm + wm;
    let precision = if tpm == 0 { 0.0 } else { cgm as f64 / tpm as f64 };
    let recall = if gm == 0 { 0.0 } else { cgm as f64 / gm as f64 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Scores {
        precision,
        recall,
        f1,
        gm_count: gm,
        cgm_count: cgm,
        wm_count: wm,
        tpm_count: tpm,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFailure {
    pub instance: String,
    pub status: SolveStatus,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEvalOutcome {
    pub sets: ModelSets,
    pub scores: Scores,
    /// True when some instances failed and were left out of the scores.
    pub partial: bool,
    pub failures: Vec<InstanceFailure>,
}

/// Constraints forcing the solver towards `m_g`: `:- not a.` for its atoms and
/// `:- a.` for the rest of `base`. Weak mode emits the same atoms as weak
/// constraints of cost 1 at `level`, with the atom as discriminating term.
pub fn create_model_constraints(
    m_g: &AnswerSet,
    base: &BTreeSet<GroundAtom>,
    outputs: &BTreeSet<PredicateSignature>,
    weak_mode: bool,
    level: i64,
) -> Result<Program, EvalError> {
    let pos = project_atoms(&m_g.atoms, outputs);
    if base.is_empty() && !pos.is_empty() {
        return Err(EvalError::EmptyBase);
    }
    let mut src = String::new();
    for a in &pos {
        src.push_str(&steer_rule(&format!("not {a}"), a, weak_mode, level));
    }
    for a in base.iter().filter(|a| !pos.contains(*a)) {
        src.push_str(&steer_rule(&a.to_string(), a, weak_mode, level));
    }
    generated(&src)
}

fn steer_rule(body: &str, atom: &GroundAtom, weak: bool, level: i64) -> String {
    if weak {
        format!(":~ {body}. [1@{level},{atom}]\n")
    } else {
        format!(":- {body}.\n")
    }
}

/// Forbids (or, in weak mode, penalizes) output atoms outside `m_g`, so that
/// candidate atoms that never occur in any gold model cannot hide a match.
fn closure_constraints(
    m_g: &AnswerSet,
    outputs: &BTreeSet<PredicateSignature>,
    taken: &BTreeSet<&str>,
    weak_mode: bool,
    level: i64,
) -> Result<Program, EvalError> {
    let allowed = fresh_name("steerGold", taken);
    let tag = fresh_name("steerClosure", taken);
    let mut src = String::new();
    for a in project_atoms(&m_g.atoms, outputs) {
        src.push_str(&format!("{allowed}({a}).\n"));
    }
    for sig in outputs {
        let atom = atom_pattern(sig);
        if weak_mode {
            src.push_str(&format!(":~ {atom}, not {allowed}({atom}). [1@{level},{tag},{atom}]\n"));
        } else {
            src.push_str(&format!(":- {atom}, not {allowed}({atom}).\n"));
        }
    }
    generated(&src)
}

/// Union of the projected atoms of an instance's gold models.
pub fn build_complement_base(as_g: &[AnswerSet], outputs: &BTreeSet<PredicateSignature>) -> BTreeSet<GroundAtom> {
    as_g.iter().flat_map(|m| project_atoms(&m.atoms, outputs)).collect()
}

pub fn models_match(m: &AnswerSet, m_g: &AnswerSet, outputs: &BTreeSet<PredicateSignature>) -> bool {
    project_atoms(&m.atoms, outputs) == project_atoms(&m_g.atoms, outputs)
}

/// Names used by the augmentation rules, suffixed where they would clash
/// with predicates of the candidate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugNames {
    pub true_in_gold: String,
    pub model: String,
    pub true_in_tested: String,
    pub smaller_mg: String,
    pub smaller_mt: String,
}

impl AugNames {
    pub fn for_program(p: &Program) -> Self {
        let taken = p.predicate_names();
        Self {
            true_in_gold: fresh_name("trueInGold", &taken),
            model: fresh_name("mod", &taken),
            true_in_tested: fresh_name("trueInTested", &taken),
            smaller_mg: fresh_name("smallerMG", &taken),
            smaller_mt: fresh_name("smallerMt", &taken),
        }
    }
}

/// `p_t` extended with the gold models as `trueInGold/2` facts and rules that
/// reject any model matching one of them on the output predicates.
pub fn aug_program(
    p_t: &Program,
    as_g: &[AnswerSet],
    outputs: &BTreeSet<PredicateSignature>,
) -> Result<Program, EvalError> {
    let n = AugNames::for_program(p_t);
    let mut src = String::new();
    for (i, m) in as_g.iter().enumerate() {
        for a in project_atoms(&m.atoms, outputs) {
            src.push_str(&format!("{}({},{a}).\n", n.true_in_gold, i + 1));
        }
    }
    src.push_str(&format!("{}(X) :- {}(X,_).\n", n.model, n.true_in_gold));
    for sig in outputs {
        let atom = atom_pattern(sig);
        src.push_str(&format!("{}({atom}) :- {atom}.\n", n.true_in_tested));
    }
    src.push_str(&format!(
        "{}(M) :- {}(M, X), not {}(X).\n",
        n.smaller_mg, n.true_in_gold, n.true_in_tested
    ));
    src.push_str(&format!(
        "{}(M) :- {}(M), {}(X), not {}(M, X).\n",
        n.smaller_mt, n.model, n.true_in_tested, n.true_in_gold
    ));
    src.push_str(&format!(
        ":- {}(M), not {}(M), not {}(M).\n",
        n.model, n.smaller_mg, n.smaller_mt
    ));
    let aug = generated(&src)?;
    Ok(Program::concat([p_t, &aug]))
}

/// Scores `p_t` against `p_g` over the instances.
///
/// Instances on which a solver call times out or crashes are left out and
/// reported; the outcome is then flagged partial. A grounding error of the
/// candidate on some instance counts as that instance failing.
pub fn evaluate_model_based(
    solver: &Solver,
    p_t: &Program,
    p_g: &Program,
    instances: &[Instance],
    outputs: &BTreeSet<PredicateSignature>,
    cfg: &EvalConfig,
) -> Result<ModelEvalOutcome, EvalError> {
    let mut sets = ModelSets::default();
    let mut failures = Vec::new();
    for inst in instances {
        let gold = gold_models(solver, p_g, inst, outputs, cfg.timeout)?;
        match evaluate_instance(solver, p_t, inst, &gold, outputs, cfg)? {
            Ok(s) => sets.merge(s),
            Err(f) => failures.push(f),
        }
    }
    let scores = compute_scores(&sets);
    Ok(ModelEvalOutcome {
        sets,
        scores,
        partial: !failures.is_empty(),
        failures,
    })
}

/// The gold models of one instance, projected onto the output predicates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldModels {
    pub models: Vec<AnswerSet>,
    /// The gold program has weak constraints, so steering is weak.
    pub weak: bool,
}

/// All (optimal) gold models of one instance.
pub fn gold_models(
    solver: &Solver,
    p_g: &Program,
    inst: &Instance,
    outputs: &BTreeSet<PredicateSignature>,
    timeout: Duration,
) -> Result<GoldModels, EvalError> {
    let gold = p_g.drop_show_directives();
    let req = SolveRequest::new(&[&gold, &inst.facts], SolveMode::AllOptimalModels)
        .timeout(timeout)
        .project(outputs);
    let r = solver.solve(&req)?;
    match r.status {
        SolveStatus::Sat | SolveStatus::Unsat => Ok(GoldModels {
            models: strip_costs(r.models),
            weak: gold.has_weak_constraints(),
        }),
        _ => Err(EvalError::Gold {
            instance: inst.id.clone(),
            detail: format!("{:?}: {}", r.status, r.stderr_excerpt),
        }),
    }
}

/// Algorithm body for one instance given its gold models.
pub fn evaluate_instance(
    solver: &Solver,
    p_t: &Program,
    inst: &Instance,
    gold: &GoldModels,
    outputs: &BTreeSet<PredicateSignature>,
    cfg: &EvalConfig,
) -> Result<Result<ModelSets, InstanceFailure>, EvalError> {
    // Ignoring optimization would also ignore weak steering constraints.
    let weak_mode = gold.weak && cfg.wm_mode == WrongModelMode::PtOptimal;
    let gold = gold.models.as_slice();
    let fail = |r: &SolveResult| InstanceFailure {
        instance: inst.id.clone(),
        status: r.status,
        detail: r.stderr_excerpt.clone(),
    };
    let p_t = p_t.drop_show_directives();
    let id = inst.id.clone();
    let mut sets = ModelSets {
        gm: gold.iter().map(|m| (id.clone(), m.clone())).collect(),
        ..ModelSets::default()
    };

    let optimizing = p_t.has_weak_constraints() && cfg.wm_mode == WrongModelMode::PtOptimal;
    let opt_mode = if cfg.wm_mode == WrongModelMode::AllStable {
        Optimization::Ignore
    } else {
        Optimization::Auto
    };

    // Reference optimum of the candidate, needed to tell whether a steered
    // model is one of its optimal models.
    let probe = solver.solve(
        &SolveRequest::new(&[&p_t, &inst.facts], SolveMode::OneModel)
            .timeout(cfg.timeout)
            .project(outputs)
            .optimization(opt_mode.clone()),
    )?;
    if !probe.completed() || (optimizing && probe.is_sat() && !probe.optimum_proven) {
        return Ok(Err(fail(&probe)));
    }
    if probe.is_unsat() {
        return Ok(Ok(sets));
    }
    let optimum = if optimizing {
        probe.costs.clone().unwrap_or_default()
    } else {
        Vec::new()
    };

    let base = build_complement_base(gold, outputs);
    let level = p_t.max_weak_level() + 1;
    let taken = p_t.predicate_names();
    for m_g in gold {
        let steer = create_model_constraints(m_g, &base, outputs, weak_mode, level)?;
        let closure = closure_constraints(m_g, outputs, &taken, weak_mode, level)?;
        let r = solver.solve(
            &SolveRequest::new(&[&p_t, &steer, &closure, &inst.facts], SolveMode::OneModel)
                .timeout(cfg.timeout)
                .project(outputs)
                .optimization(opt_mode.clone()),
        )?;
        if !r.completed() {
            return Ok(Err(fail(&r)));
        }
        let Some(m) = r.models.first() else { continue };
        if !models_match(m, m_g, outputs) {
            continue;
        }
        if optimizing {
            if !r.optimum_proven {
                return Ok(Err(fail(&r)));
            }
            // Steering levels sit above every candidate level, so the
            // candidate's own costs are the trailing entries.
            let own = &m.costs[m.costs.len().saturating_sub(optimum.len())..];
            if own != optimum.as_slice() {
                continue;
            }
        }
        sets.cgm.push((id.clone(), m_g.clone()));
    }

    let p_ta = aug_program(&p_t, gold, outputs)?;
    let wm_opt = if optimizing {
        Optimization::Bounded(optimum)
    } else {
        opt_mode
    };
    let r = solver.solve(
        &SolveRequest::new(&[&p_ta, &inst.facts], SolveMode::AllModels)
            .timeout(cfg.timeout)
            .project(outputs)
            .optimization(wm_opt),
    )?;
    if !r.completed() {
        return Ok(Err(fail(&r)));
    }
    sets.wm = strip_costs(r.models).into_iter().map(|m| (id.clone(), m)).collect();
    Ok(Ok(sets))
}

fn strip_costs(models: Vec<AnswerSet>) -> Vec<AnswerSet> {
    models
        .into_iter()
        .map(|m| AnswerSet {
            atoms: m.atoms,
            costs: Vec::new(),
        })
        .collect()
}

fn atom_pattern(sig: &PredicateSignature) -> String {
    if sig.arity == 0 {
        return sig.name.clone();
    }
    let vars: Vec<String> = (1..=sig.arity).map(|i| format!("V{i}")).collect();
    format!("{}({})", sig.name, vars.join(","))
}

fn fresh_name(base: &str, taken: &BTreeSet<&str>) -> String {
    if !taken.contains(base) {
        return base.to_string();
    }
    (1..)
        .map(|i| format!("{base}_{i}"))
        .find(|c| !taken.contains(c.as_str()))
        .expect("unbounded suffix search")
}

fn generated(src: &str) -> Result<Program, EvalError> {
    parse_program(src).map_err(|e| EvalError::Generated(e.to_string()))
}
