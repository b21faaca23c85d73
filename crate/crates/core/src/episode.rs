//! Episode data model, the `episodes.jsonl` store, validation against a
//! design, distal credit assignment, and conversion to MDP transitions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::{AiIncorrectRule, ActionAssignment, Design, DesignId, CONCEPTS_PER_PARTICIPANT};
use crate::mdp::{
    compute_reward, derive_concept_knowledge, derive_task_knowledge, nfc_group, Action, Concept,
    Level, MdpError, NfcGroup, Outcome, RewardSpec, State, NUM_ACTIONS,
};

/// Current `episodes.jsonl` schema version.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: unsupported schema version {version}")]
    UnsupportedSchema { line: usize, version: u64 },
    #[error("serialization failed: {0}")]
    Serialize(#[from] serde_json::Error),
    #[error("episode {participant}: no {block} answers for concept {concept} to resolve distal outcome")]
    MissingTestBlock {
        participant: String,
        block: String,
        concept: Concept,
    },
    #[error("episode {participant}: step {step} has no following test block")]
    NoFollowingTestBlock { participant: String, step: u32 },
    #[error("episode {participant}, step {step}: {source}")]
    Reward {
        participant: String,
        step: u32,
        source: MdpError,
    },
    #[error("episode {participant}, step {step}: intervention step lacks action or ai_correct")]
    IncompleteStep { participant: String, step: u32 },
}

// ── Data model ──────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Pre,
    Intervention1,
    Mid,
    Intervention2,
    Post,
    /// The single intervention block of the evaluation designs.
    Intervention,
}

impl Block {
    pub fn is_intervention(self) -> bool {
        matches!(self, Block::Intervention1 | Block::Intervention2 | Block::Intervention)
    }

    pub fn is_test(self) -> bool {
        !self.is_intervention()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Block::Pre => "pre",
            Block::Intervention1 => "intervention1",
            Block::Mid => "mid",
            Block::Intervention2 => "intervention2",
            Block::Post => "post",
            Block::Intervention => "intervention",
        }
    }
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub index: u32,
    pub block: Block,
    pub concept: Concept,
    pub action: Option<Action>,
    pub ai_correct: Option<bool>,
    pub answer_correct: u8,
    pub revealed: Option<bool>,
    pub question_id: String,
    /// Distal correctness credited to this step; set by
    /// [`resolve_distal_outcomes`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distal: Option<u8>,
}

impl Step {
    pub fn correct(&self) -> bool {
        self.answer_correct == 1
    }

    /// Whether the participant actually saw AI content on this step.
    pub fn saw_assistance(&self) -> bool {
        match self.action {
            Some(Action::OnDemand) => self.revealed == Some(true),
            Some(a) => a.is_assisted(),
            None => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub schema_version: u32,
    pub participant_id: String,
    pub nfc_score: f64,
    pub nfc_group: NfcGroup,
    pub design_id: DesignId,
    pub concepts: Vec<Concept>,
    pub seed: Option<u64>,
    pub steps: Vec<Step>,
    /// Quasi-random action weights used during data collection.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exploration_weights: Option<[f64; NUM_ACTIONS]>,
}

impl Episode {
    pub fn design(&self) -> Design {
        Design::new(self.design_id)
    }

    pub fn intervention_steps(&self) -> impl Iterator<Item = &Step> {
        self.steps.iter().filter(|s| s.block.is_intervention())
    }

    pub fn block_steps(&self, block: Block) -> impl Iterator<Item = &Step> {
        self.steps.iter().filter(move |s| s.block == block)
    }

    /// Single-line JSON record, without the trailing newline.
    pub fn to_line(&self) -> Result<String, EpisodeError> {
        Ok(serde_json::to_string(self)?)
    }
}

// ── Validation ──────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    DesignMismatch { expected: DesignId, found: DesignId },
    ConceptSet(String),
    StepCount { expected: usize, found: usize },
    IndexOrder { position: usize, index: u32 },
    ConceptNotAssigned { step: u32, concept: Concept },
    BlockOrder { step: u32, expected: Block, found: Block },
    QuestionCount { block: Block, concept: Concept, expected: usize, found: usize },
    ActionOnTestStep { step: u32 },
    AiCorrectOnTestStep { step: u32 },
    MissingAction { step: u32 },
    MissingAiCorrect { step: u32 },
    RevealWithoutOnDemand { step: u32 },
    AnswerNotBinary { step: u32, value: u8 },
    MultipleActions { block: Block, concept: Concept },
    AiIncorrectCount(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            DesignMismatch { expected, found } => {
                write!(f, "design is {found}, validated against {expected}")
            }
            ConceptSet(msg) => write!(f, "concept set: {msg}"),
            StepCount { expected, found } => write!(f, "expected {expected} steps, found {found}"),
            IndexOrder { position, index } => {
                write!(f, "step at position {position} has index {index}")
            }
            ConceptNotAssigned { step, concept } => {
                write!(f, "step {step}: concept {concept} not in the episode's concept set")
            }
            BlockOrder { step, expected, found } => {
                write!(f, "step {step}: expected block {expected}, found {found}")
            }
            QuestionCount { block, concept, expected, found } => write!(
                f,
                "block {block}: concept {concept} has {found} questions, expected {expected}"
            ),
            ActionOnTestStep { step } => write!(f, "step {step}: test step carries an action"),
            AiCorrectOnTestStep { step } => write!(f, "step {step}: test step carries ai_correct"),
            MissingAction { step } => write!(f, "step {step}: intervention step without action"),
            MissingAiCorrect { step } => {
                write!(f, "step {step}: intervention step without ai_correct")
            }
            RevealWithoutOnDemand { step } => {
                write!(f, "step {step}: revealed set on a non on-demand step")
            }
            AnswerNotBinary { step, value } => {
                write!(f, "step {step}: answer_correct must be 0 or 1, got {value}")
            }
            MultipleActions { block, concept } => {
                write!(f, "block {block}: concept {concept} shown with more than one action")
            }
            AiIncorrectCount(msg) => write!(f, "AI-incorrect placement: {msg}"),
        }
    }
}

/// Check an episode against its design. An empty list means valid.
pub fn validate_episode(e: &Episode, design: &Design) -> Vec<Violation> {
    let mut out = Vec::new();
    if e.design_id != design.id {
        out.push(Violation::DesignMismatch {
            expected: design.id,
            found: e.design_id,
        });
    }

    let concept_set: BTreeSet<Concept> = e.concepts.iter().copied().collect();
    if e.concepts.len() != CONCEPTS_PER_PARTICIPANT || concept_set.len() != CONCEPTS_PER_PARTICIPANT {
        out.push(Violation::ConceptSet(format!(
            "expected {CONCEPTS_PER_PARTICIPANT} distinct concepts, found {:?}",
            e.concepts
        )));
    }

    for (pos, step) in e.steps.iter().enumerate() {
        if step.index as usize != pos {
            out.push(Violation::IndexOrder {
                position: pos,
                index: step.index,
            });
            break;
        }
    }

    for step in &e.steps {
        let i = step.index;
        if !concept_set.contains(&step.concept) {
            out.push(Violation::ConceptNotAssigned {
                step: i,
                concept: step.concept,
            });
        }
        if step.answer_correct > 1 {
            out.push(Violation::AnswerNotBinary {
                step: i,
                value: step.answer_correct,
            });
        }
        if step.block.is_test() {
            if step.action.is_some() {
                out.push(Violation::ActionOnTestStep { step: i });
            }
            if step.ai_correct.is_some() {
                out.push(Violation::AiCorrectOnTestStep { step: i });
            }
        } else {
            if step.action.is_none() {
                out.push(Violation::MissingAction { step: i });
            }
            if step.ai_correct.is_none() {
                out.push(Violation::MissingAiCorrect { step: i });
            }
        }
        if step.revealed.is_some() && step.action != Some(Action::OnDemand) {
            out.push(Violation::RevealWithoutOnDemand { step: i });
        }
    }

    if e.steps.len() != design.total_questions() {
        out.push(Violation::StepCount {
            expected: design.total_questions(),
            found: e.steps.len(),
        });
        return out;
    }

    // block layout: contiguous blocks in design order
    let mut cursor = 0;
    for spec in &design.blocks {
        let n = spec.questions_per_concept * CONCEPTS_PER_PARTICIPANT;
        let slice = &e.steps[cursor..cursor + n];
        if let Some(bad) = slice.iter().find(|s| s.block != spec.block) {
            out.push(Violation::BlockOrder {
                step: bad.index,
                expected: spec.block,
                found: bad.block,
            });
            return out;
        }
        for &concept in &concept_set {
            let found = slice.iter().filter(|s| s.concept == concept).count();
            if found != spec.questions_per_concept {
                out.push(Violation::QuestionCount {
                    block: spec.block,
                    concept,
                    expected: spec.questions_per_concept,
                    found,
                });
            }
        }
        if spec.block.is_intervention() {
            if let ActionAssignment::QuasiRandomPerConceptBlock { .. } = design.action_assignment {
                for &concept in &concept_set {
                    let actions: BTreeSet<Action> = slice
                        .iter()
                        .filter(|s| s.concept == concept)
                        .filter_map(|s| s.action)
                        .collect();
                    if actions.len() > 1 {
                        out.push(Violation::MultipleActions {
                            block: spec.block,
                            concept,
                        });
                    }
                }
            }
        }
        cursor += n;
    }

    check_ai_incorrect(e, design, &concept_set, &mut out);
    out
}

fn check_ai_incorrect(
    e: &Episode,
    design: &Design,
    concepts: &BTreeSet<Concept>,
    out: &mut Vec<Violation>,
) {
    let count = |block: Option<Block>, concept: Concept| {
        e.steps
            .iter()
            .filter(|s| s.block.is_intervention() && block.is_none_or(|b| s.block == b))
            .filter(|s| s.concept == concept && s.ai_correct == Some(false))
            .count()
    };
    match design.ai_incorrect {
        AiIncorrectRule::OnePerConceptPerBlock => {
            for spec in design.blocks.iter().filter(|b| b.block.is_intervention()) {
                for &c in concepts {
                    let n = count(Some(spec.block), c);
                    if n != 1 {
                        out.push(Violation::AiIncorrectCount(format!(
                            "block {}: concept {c} has {n} AI-incorrect questions, expected 1",
                            spec.block
                        )));
                    }
                }
            }
        }
        AiIncorrectRule::PerConcept(k) => {
            for &c in concepts {
                let n = count(None, c);
                if n != k {
                    out.push(Violation::AiIncorrectCount(format!(
                        "concept {c} has {n} AI-incorrect questions, expected {k}"
                    )));
                }
            }
        }
        AiIncorrectRule::OneConceptDoubled => {
            let mut counts: Vec<usize> = concepts.iter().map(|&c| count(None, c)).collect();
            counts.sort();
            if counts != [1, 1, 2] {
                out.push(Violation::AiIncorrectCount(format!(
                    "per-concept counts {counts:?}, expected {{2,1,1}}"
                )));
            }
        }
    }
}

// ── Store ───────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    /// 1-based line number in the source.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Default)]
pub struct LoadReport {
    pub episodes: Vec<Episode>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Read newline-delimited episode records. Malformed or invalid records
/// become diagnostics; an unknown schema version aborts the load.
pub fn load_episodes<R: BufRead>(mut reader: R) -> Result<LoadReport, EpisodeError> {
    let mut report = LoadReport::default();
    let mut buf = String::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        if reader.read_line(&mut buf)? == 0 {
            break;
        }
        line_no += 1;
        let terminated = buf.ends_with('\n');
        let line = buf.trim();
        if line.is_empty() {
            continue;
        }
        let mut diag = |message: String| {
            let message = if terminated {
                message
            } else {
                format!("incomplete trailing record: {message}")
            };
            report.diagnostics.push(Diagnostic {
                line: line_no,
                message,
            })
        };
        let value: serde_json::Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(err) => {
                diag(format!("malformed record: {err}"));
                continue;
            }
        };
        match value.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == SCHEMA_VERSION as u64 => {}
            Some(version) => {
                return Err(EpisodeError::UnsupportedSchema {
                    line: line_no,
                    version,
                })
            }
            None => {
                diag("missing or non-integer schema_version".to_string());
                continue;
            }
        }
        let episode: Episode = match serde_json::from_value(value) {
            Ok(e) => e,
            Err(err) => {
                diag(format!("malformed record: {err}"));
                continue;
            }
        };
        let violations = validate_episode(&episode, &episode.design());
        if !violations.is_empty() {
            let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
            diag(format!(
                "episode {} invalid: {}",
                episode.participant_id,
                list.join("; ")
            ));
            continue;
        }
        report.episodes.push(episode);
    }
    Ok(report)
}

pub fn load_episodes_path(path: impl AsRef<Path>) -> Result<LoadReport, EpisodeError> {
    load_episodes(BufReader::new(File::open(path)?))
}

pub fn save_episodes<W: Write>(episodes: &[Episode], mut w: W) -> Result<(), EpisodeError> {
    for e in episodes {
        let mut line = e.to_line()?;
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Serialize a whole dataset to the exact bytes [`save_episodes`] writes.
pub fn episodes_to_bytes(episodes: &[Episode]) -> Result<Vec<u8>, EpisodeError> {
    let mut out = Vec::new();
    save_episodes(episodes, &mut out)?;
    Ok(out)
}

// ── Credit assignment ───────────────────────────────────────────────────

/// Credit each intervention step with the outcome of the next test block on
/// the same concept: d = 1 iff more than half of that concept's test answers
/// are correct.
pub fn resolve_distal_outcomes(e: &Episode) -> Result<Episode, EpisodeError> {
    let design = e.design();
    let mut test_scores: BTreeMap<(Block, Concept), (usize, usize)> = BTreeMap::new();
    for s in e.steps.iter().filter(|s| s.block.is_test()) {
        let entry = test_scores.entry((s.block, s.concept)).or_default();
        entry.0 += s.correct() as usize;
        entry.1 += 1;
    }

    let mut out = e.clone();
    for step in out.steps.iter_mut().filter(|s| s.block.is_intervention()) {
        let test_block = design.following_test_block(step.block).ok_or_else(|| {
            EpisodeError::NoFollowingTestBlock {
                participant: e.participant_id.clone(),
                step: step.index,
            }
        })?;
        let (correct, total) = test_scores
            .get(&(test_block, step.concept))
            .copied()
            .filter(|&(_, n)| n > 0)
            .ok_or_else(|| EpisodeError::MissingTestBlock {
                participant: e.participant_id.clone(),
                block: test_block.to_string(),
                concept: step.concept,
            })?;
        step.distal = Some((correct * 2 > total) as u8);
    }
    Ok(out)
}

// ── Transitions ─────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub s: State,
    pub a: Action,
    pub r: f64,
    /// `None` marks the terminal transition.
    pub next: Option<State>,
}

/// The live state for a decision on `concept`, given every step answered so
/// far. Concept knowledge averages all prior answers on the concept (test
/// and intervention); task knowledge comes from the pre block.
pub fn derive_state(history: &[Step], nfc: NfcGroup, concept: Concept, ai_correct: bool) -> State {
    let on_concept: Vec<bool> = history
        .iter()
        .filter(|s| s.concept == concept)
        .map(Step::correct)
        .collect();
    let pre: Vec<bool> = history
        .iter()
        .filter(|s| s.block == Block::Pre)
        .map(Step::correct)
        .collect();
    State {
        nfc,
        concept,
        ai_correct,
        concept_knowledge: derive_concept_knowledge(&on_concept),
        task_knowledge: derive_task_knowledge(&pre).unwrap_or(Level::Low),
    }
}

/// The states at every intervention step, in order.
pub fn intervention_states(e: &Episode, nfc: NfcGroup) -> Result<Vec<(usize, State)>, EpisodeError> {
    e.steps
        .iter()
        .enumerate()
        .filter(|(_, s)| s.block.is_intervention())
        .map(|(pos, s)| {
            let ai_correct = s.ai_correct.ok_or_else(|| EpisodeError::IncompleteStep {
                participant: e.participant_id.clone(),
                step: s.index,
            })?;
            Ok((pos, derive_state(&e.steps[..pos], nfc, s.concept, ai_correct)))
        })
        .collect()
}

/// Transitions using the NFC group recomputed from the episode's score.
pub fn to_transitions(e: &Episode, spec: &RewardSpec, median_nfc: f64) -> Result<Vec<Transition>, EpisodeError> {
    transitions_for(e, spec, nfc_group(e.nfc_score, median_nfc))
}

/// One transition per intervention step. Test blocks are invisible; the
/// last intervention step of one block links to the first of the next.
pub fn transitions_for(e: &Episode, spec: &RewardSpec, nfc: NfcGroup) -> Result<Vec<Transition>, EpisodeError> {
    let states = intervention_states(e, nfc)?;
    let mut out = Vec::with_capacity(states.len());
    for (k, &(pos, s)) in states.iter().enumerate() {
        let step = &e.steps[pos];
        let a = step.action.ok_or_else(|| EpisodeError::IncompleteStep {
            participant: e.participant_id.clone(),
            step: step.index,
        })?;
        // with λ = 0 the reward does not depend on d
        let d = match step.distal {
            Some(d) => Some(d == 1),
            None if spec.lambda == 0.0 => Some(false),
            None => None,
        };
        let r = compute_reward(
            Outcome {
                p: step.correct(),
                d,
            },
            spec,
        )
        .map_err(|source| EpisodeError::Reward {
            participant: e.participant_id.clone(),
            step: step.index,
            source,
        })?;
        out.push(Transition {
            s,
            a,
            r,
            next: states.get(k + 1).map(|&(_, next)| next),
        });
    }
    Ok(out)
}
