use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Generator,
    Matcher,
    Paraphraser,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Generator => "generator",
            Role::Matcher => "matcher",
            Role::Paraphraser => "paraphraser",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    First,
    Second,
}

const GENERATOR_INSTRUCTION: &str = "Write an ASP program which models this problem, along with facts that make it \
instantiable. Generate the program only, without any additional text.";

const MATCHER_HEADER: &str =
    "Perform predicate matching on the following ASP programs based on the semantic similarity of the predicates:";

const MATCHER_INSTRUCTION: &str = "If there is no semantic match between some predicates, output 'No semantic match' \
only. Otherwise, produce the matches over all the predicates as a python dictionary. Do not generate any additional \
text.";

const PARAPHRASE_FIRST: &str = "Rewrite the following problem statement for a reader who has never used logic \
programming. Use plain, everyday language and a concrete setting where it helps, but keep every requirement and \
keep the predicate names and their arguments exactly as written. Reply with the rewritten statement only.";

const PARAPHRASE_SECOND: &str = "Rewrite the following problem statement once more, in your own words and in an even \
more conversational tone. Keep every requirement and keep the predicate names and their arguments exactly as \
written. Reply with the rewritten statement only.";

/// Target-model prompt: the description followed by the fixed instruction.
pub fn generator_prompt(description: &str) -> String {
    format!("{}\n\n{GENERATOR_INSTRUCTION}", description.trim_end())
}

/// Matcher prompt with the gold program as instance 1 and the candidate as
/// instance 2.
pub fn matcher_prompt(gold: &str, candidate: &str) -> String {
    format!(
        "{MATCHER_HEADER}\n\nASP Instance 1:\n{}\n\nASP Instance 2:\n{}\n\n{MATCHER_INSTRUCTION}",
        gold.trim_end(),
        candidate.trim_end()
    )
}

/// Paraphraser prompt. The second stage is fed the first paraphrase.
pub fn paraphrase_prompt(text: &str, stage: Stage) -> String {
    let instruction = match stage {
        Stage::First => PARAPHRASE_FIRST,
        Stage::Second => PARAPHRASE_SECOND,
    };
    format!("{instruction}\n\n{}", text.trim_end())
}

/// Program text from a generator reply.
///
/// With fenced blocks present, the bodies of all blocks are kept and the
/// surrounding prose is dropped; otherwise the reply is passed through.
pub fn clean_program(reply: &str) -> String {
    let mut blocks = Vec::new();
    let mut rest = reply;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        let body_start = match after.find('\n') {
            Some(nl) if !after[..nl].contains("```") => nl + 1,
            _ => 0,
        };
        let body = &after[body_start..];
        match body.find("```") {
            Some(close) => {
                blocks.push(body[..close].trim());
                rest = &body[close + 3..];
            }
            None => {
                blocks.push(body.trim());
                rest = "";
            }
        }
    }
    if blocks.is_empty() {
        return reply.trim().to_string();
    }
    let kept: Vec<&str> = blocks.into_iter().filter(|b| !b.is_empty()).collect();
    let mut out = kept.join("\n\n");
    if !out.is_empty() {
        out.push('\n');
    }
    out
}
