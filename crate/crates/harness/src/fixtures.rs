//! Deterministic replay fixtures for the full grid.
//!
//! Every (problem, variant, run) gets a scripted generator reply and, when
//! the reply passes the syntax gate, a scripted matcher reply. The scripts
//! cycle through five behaviours so that an offline pipeline run exercises
//! perfect answers, renamed predicates, mutants, weakened encodings and
//! every failure tag.

use std::collections::BTreeMap;
use std::path::Path;

use aspbench_core::dataset::ProblemBundle;
use aspbench_core::mutation::{generate_mutants, MutationError};
use aspbench_core::solver::{Solver, SolverError, SyntaxCheck};
use aspbench_core::syntax::{parse_program, PredicateMapping, Program, RuleKind};
use aspbench_llm::{generator_prompt, matcher_prompt, LlmEndpoint, PromptCache, PromptRecord, Role};
use thiserror::Error;

use crate::config::Variant;

/// Model name the shipped fixtures are recorded under.
pub const FIXTURE_MODEL: &str = "fixture-model";

/// Seed of the mutants used as faulty replies.
const MUTANT_SEED: u64 = 7;

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("{problem} ships no {variant} text")]
    MissingText { problem: String, variant: Variant },
    #[error("{problem}: {message}")]
    Script { problem: String, message: String },
    #[error(transparent)]
    Mutation(#[from] MutationError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("writing fixture: {0}")]
    Io(#[from] std::io::Error),
}

/// Description text a bundle ships for `variant`.
pub fn shipped_text(bundle: &ProblemBundle, variant: Variant) -> Option<&str> {
    match variant {
        Variant::Original => Some(bundle.description_original.as_str()),
        Variant::Paraphrase1 => bundle.paraphrase_1.as_deref(),
        Variant::Paraphrase2 => bundle.paraphrase_2.as_deref(),
    }
}

fn snake(name: &str) -> String {
    let mut out = String::new();
    for c in name.chars() {
        if c.is_ascii_uppercase() {
            out.push('_');
            out.push(c.to_ascii_lowercase());
        } else {
            out.push(c);
        }
    }
    out
}

fn python_dict(pairs: &[(String, String)]) -> String {
    let body: Vec<String> = pairs.iter().map(|(g, c)| format!("'{g}':'{c}'")).collect();
    format!("{{{}}}", body.join(", "))
}

fn identity_pairs(gold: &Program) -> Vec<(String, String)> {
    gold.predicate_names()
        .into_iter()
        .map(|n| (n.to_string(), n.to_string()))
        .collect()
}

struct Script {
    generator: String,
    /// `None` when the reply is not expected to reach the matcher.
    matcher: Option<String>,
}

struct Scripter<'a> {
    bundle: &'a ProblemBundle,
    mutants: Vec<Program>,
}

impl<'a> Scripter<'a> {
    fn new(bundle: &'a ProblemBundle, solver: &Solver) -> Result<Self, FixtureError> {
        let mutants = generate_mutants(solver, &bundle.gold, 3, MUTANT_SEED, bundle.timeout())?
            .into_iter()
            .map(|m| m.program)
            .collect();
        Ok(Scripter { bundle, mutants })
    }

    fn fail(&self, message: impl Into<String>) -> FixtureError {
        FixtureError::Script {
            problem: self.bundle.name().to_string(),
            message: message.into(),
        }
    }

    fn script(&self, variant: Variant, run: u32) -> Result<Script, FixtureError> {
        let gold = &self.bundle.gold;
        let gold_src = gold.to_source();
        let identity = python_dict(&identity_pairs(gold));
        let k = match variant {
            Variant::Original => 0,
            Variant::Paraphrase1 => 1,
            Variant::Paraphrase2 => 2,
        };
        // Each variant embeds a different instance, so equal scripts under
        // different variants still reach the matcher with distinct prompts.
        let instances = &self.bundle.instances;
        let facts = instances
            .get(instances.len().saturating_sub(k + 1))
            .map(|i| i.facts.to_source())
            .unwrap_or_default();
        Ok(match (run - 1) % 5 {
            0 => Script {
                generator: format!(
                    "Here is the program:\n```asp\n% Example instance\n{}\n% Encoding\n{}```\nThe facts can be replaced by any other instance.",
                    facts.trim_end(),
                    gold_src
                ),
                matcher: Some(identity),
            },
            1 => {
                let pairs: Vec<(String, String)> = identity_pairs(gold)
                    .into_iter()
                    .map(|(g, _)| {
                        let c = format!("the_{}", snake(&g));
                        (g, c)
                    })
                    .collect();
                let whole = parse_program(&format!("{}{}", facts, gold_src)).map_err(|e| self.fail(e.to_string()))?;
                let inverse = PredicateMapping::Pairs(pairs.iter().map(|(g, c)| (c.clone(), g.clone())).collect());
                let renamed = whole.rename_predicates(&inverse).map_err(|e| self.fail(e.to_string()))?;
                let body: Vec<String> = pairs.iter().map(|(g, c)| format!("\"{g}\": \"{c}\"")).collect();
                Script {
                    generator: renamed.to_source(),
                    matcher: Some(format!("{{{},}}", body.join(", "))),
                }
            }
            2 => {
                let m = self.mutants.get(k).ok_or_else(|| self.fail("too few mutants"))?;
                Script {
                    generator: format!("```\n{}\n{}```", facts.trim_end(), m.to_source()),
                    matcher: Some(format!("```python\n{identity}\n```")),
                }
            }
            3 => match variant {
                Variant::Original => {
                    // The reply breaks off in the middle of a fact.
                    let input = self.bundle.input_preds().iter().next().map_or("p", |s| s.name.as_str());
                    Script {
                        generator: format!("```asp\n{}\n{}{input}(1\n```", gold_src, facts.trim_end()),
                        matcher: None,
                    }
                }
                Variant::Paraphrase1 => Script {
                    generator: format!("{}\n{}", facts.trim_end(), gold_src),
                    matcher: Some("No semantic match".into()),
                },
                Variant::Paraphrase2 => Script {
                    generator: format!("{}\n{}", facts.trim_end(), gold_src),
                    matcher: Some("The predicates correspond one to one, e.g. node -> node.".into()),
                },
            },
            _ => {
                let rules = gold.rules();
                let drop = rules
                    .iter()
                    .rposition(|r| r.kind == RuleKind::StrongConstraint)
                    .unwrap_or(rules.len().saturating_sub(1));
                let weakened: String = rules
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != drop)
                    .map(|(_, r)| format!("{}\n", r.text))
                    .collect();
                let mut pairs = identity_pairs(gold);
                if variant == Variant::Paraphrase2 && pairs.len() >= 2 {
                    pairs[1].1 = pairs[0].1.clone();
                } else {
                    pairs.push(("unused".into(), "helper".into()));
                }
                Script {
                    generator: format!(
                        "Facts:\n```\n{}\n```\nRules:\n```\n{}```",
                        facts.trim_end(),
                        weakened
                    ),
                    matcher: Some(python_dict(&pairs)),
                }
            }
        })
    }
}

/// Writes generator and matcher fixtures for `runs` runs of every variant
/// of every bundle into `dir`. Returns the number of records written.
pub fn record_fixtures(
    bundles: &[ProblemBundle],
    variants: &[Variant],
    runs: u32,
    generator: &LlmEndpoint,
    matcher: &LlmEndpoint,
    solver: &Solver,
    dir: &Path,
) -> Result<usize, FixtureError> {
    let cache = PromptCache::new(dir);
    let mut written: BTreeMap<String, String> = BTreeMap::new();
    let mut put = |problem: &str, r: PromptRecord| -> Result<(), FixtureError> {
        if let Some(prev) = written.get(&r.cache_key) {
            if *prev != r.response_raw {
                return Err(FixtureError::Script {
                    problem: problem.to_string(),
                    message: format!("two different {} replies for key {}", r.role, r.cache_key),
                });
            }
        }
        cache.put(&r)?;
        written.insert(r.cache_key, r.response_raw);
        Ok(())
    };
    for bundle in bundles {
        let scripter = Scripter::new(bundle, solver)?;
        for &variant in variants {
            let text = shipped_text(bundle, variant).ok_or_else(|| FixtureError::MissingText {
                problem: bundle.name().to_string(),
                variant,
            })?;
            for run in 1..=runs {
                let script = scripter.script(variant, run)?;
                let g = PromptRecord::new(
                    generator,
                    Role::Generator,
                    generator_prompt(text),
                    run,
                    script.generator,
                );
                let candidate = parse_program(&g.response_clean);
                put(bundle.name(), g)?;
                let Some(reply) = script.matcher else { continue };
                let Ok(candidate) = candidate else { continue };
                if solver.check_program(&candidate, bundle.timeout())? != SyntaxCheck::Ok {
                    continue;
                }
                let prompt = matcher_prompt(&bundle.gold.to_source(), &candidate.to_source());
                let m = PromptRecord::new(matcher, Role::Matcher, prompt, run, reply);
                put(bundle.name(), m)?;
            }
        }
    }
    Ok(written.len())
}
