//! MDP vocabulary: states, actions, rewards, and the rules that derive a
//! state from a participant's interaction history.
//!
//! Everything here is pure. The encoding order of every enum is part of the
//! on-disk policy format and must not change.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of distinct MDP states.
pub const NUM_STATES: usize = 64;
/// Number of assistance actions.
pub const NUM_ACTIONS: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MdpError {
    #[error("distal outcome unresolved")]
    DistalUnresolved,
    #[error("state index {0} out of range [0, 64)")]
    StateIndexOutOfRange(usize),
    #[error("task knowledge needs at least one pre-test answer")]
    EmptyPreTest,
    #[error("lambda must lie in [0, 1], got {0}")]
    LambdaOutOfRange(f64),
    #[error("gamma must lie in [0, 1), got {0}")]
    GammaOutOfRange(f64),
    #[error("unknown {kind} `{value}`")]
    UnknownLabel { kind: &'static str, value: String },
}

// ── Enumerations ────────────────────────────────────────────────────────

/// Need-for-cognition group from a median split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NfcGroup {
    Low,
    High,
}

impl NfcGroup {
    pub const ALL: [NfcGroup; 2] = [NfcGroup::Low, NfcGroup::High];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NfcGroup::Low => "low",
            NfcGroup::High => "high",
        }
    }
}

/// The concept that makes the optimal exercise set superior on a question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Concept {
    Intensity,
    Goal,
    Safety,
    Condition,
}

impl Concept {
    pub const ALL: [Concept; 4] = [
        Concept::Intensity,
        Concept::Goal,
        Concept::Safety,
        Concept::Condition,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Concept::Intensity => "intensity",
            Concept::Goal => "goal",
            Concept::Safety => "safety",
            Concept::Condition => "condition",
        }
    }
}

/// Binary knowledge level used for both concept and task knowledge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Low,
    High,
}

impl Level {
    pub fn index(self) -> usize {
        self as usize
    }
}

/// Type of AI assistance shown on a decision. Declaration order is the
/// encoding order and the tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Action {
    #[serde(rename = "no_assistance")]
    NoAssistance,
    #[serde(rename = "rec_and_explanation")]
    RecommendationAndExplanation,
    #[serde(rename = "explanation_only")]
    ExplanationOnly,
    #[serde(rename = "on_demand")]
    OnDemand,
}

impl Action {
    pub const ALL: [Action; 4] = [
        Action::NoAssistance,
        Action::RecommendationAndExplanation,
        Action::ExplanationOnly,
        Action::OnDemand,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Action::NoAssistance => "no_assistance",
            Action::RecommendationAndExplanation => "rec_and_explanation",
            Action::ExplanationOnly => "explanation_only",
            Action::OnDemand => "on_demand",
        }
    }

    /// Whether any AI content can reach the participant under this action.
    pub fn is_assisted(self) -> bool {
        self != Action::NoAssistance
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Action {
    type Err = MdpError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Action::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| MdpError::UnknownLabel {
                kind: "action",
                value: s.to_string(),
            })
    }
}

impl fmt::Display for Concept {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for NfcGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NfcGroup {
    type Err = MdpError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "low" => Ok(NfcGroup::Low),
            "high" => Ok(NfcGroup::High),
            _ => Err(MdpError::UnknownLabel {
                kind: "nfc group",
                value: s.to_string(),
            }),
        }
    }
}

// ── State ───────────────────────────────────────────────────────────────

/// One of the 64 MDP states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct State {
    pub nfc: NfcGroup,
    pub concept: Concept,
    pub ai_correct: bool,
    pub concept_knowledge: Level,
    pub task_knowledge: Level,
}

impl State {
    /// Mixed-radix index in field order (nfc, concept, ai_correct,
    /// concept_knowledge, task_knowledge).
    pub fn encode(&self) -> usize {
        let mut idx = self.nfc.index();
        idx = idx * 4 + self.concept.index();
        idx = idx * 2 + self.ai_correct as usize;
        idx = idx * 2 + self.concept_knowledge.index();
        idx * 2 + self.task_knowledge.index()
    }

    pub fn decode(index: usize) -> Result<State, MdpError> {
        if index >= NUM_STATES {
            return Err(MdpError::StateIndexOutOfRange(index));
        }
        let level = |bit: usize| if bit == 0 { Level::Low } else { Level::High };
        let task_knowledge = level(index % 2);
        let concept_knowledge = level((index / 2) % 2);
        let ai_correct = (index / 4) % 2 == 1;
        let concept = Concept::ALL[(index / 8) % 4];
        let nfc = NfcGroup::ALL[index / 32];
        Ok(State {
            nfc,
            concept,
            ai_correct,
            concept_knowledge,
            task_knowledge,
        })
    }

    /// All 64 states in index order.
    pub fn all() -> impl Iterator<Item = State> {
        (0..NUM_STATES).map(|i| State::decode(i).expect("index in range"))
    }
}

pub fn encode_state(s: &State) -> usize {
    s.encode()
}

pub fn decode_state(index: usize) -> Result<State, MdpError> {
    State::decode(index)
}

// ── Rewards ─────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Accuracy,
    Learning,
    Combined,
    Custom,
}

impl Objective {
    pub fn as_str(self) -> &'static str {
        match self {
            Objective::Accuracy => "accuracy",
            Objective::Learning => "learning",
            Objective::Combined => "combined",
            Objective::Custom => "custom",
        }
    }
}

/// Weighting between immediate accuracy and distal learning, plus the
/// discount factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub lambda: f64,
    pub gamma: f64,
    #[serde(rename = "name")]
    pub objective: Objective,
}

impl RewardSpec {
    /// Myopic immediate accuracy: λ = 0, γ = 0.
    pub fn accuracy() -> Self {
        RewardSpec {
            lambda: 0.0,
            gamma: 0.0,
            objective: Objective::Accuracy,
        }
    }

    /// Distal learning with future rewards: λ = 1, γ = 0.99.
    pub fn learning() -> Self {
        RewardSpec {
            lambda: 1.0,
            gamma: 0.99,
            objective: Objective::Learning,
        }
    }

    /// Equal weight on accuracy and learning, myopic: λ = 0.5, γ = 0.
    pub fn combined() -> Self {
        RewardSpec {
            lambda: 0.5,
            gamma: 0.0,
            objective: Objective::Combined,
        }
    }

    pub fn custom(lambda: f64, gamma: f64) -> Result<Self, MdpError> {
        let spec = RewardSpec {
            lambda,
            gamma,
            objective: Objective::Custom,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), MdpError> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(MdpError::LambdaOutOfRange(self.lambda));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(MdpError::GammaOutOfRange(self.gamma));
        }
        Ok(())
    }

    /// Upper bound on any Q value under rewards in [0, 1].
    pub fn value_ceiling(&self) -> f64 {
        1.0 / (1.0 - self.gamma)
    }
}

/// Immediate (p) and distal (d) correctness of one intervention step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outcome {
    pub p: bool,
    pub d: Option<bool>,
}

/// r = (1 − λ)·p + λ·d.
pub fn compute_reward(outcome: Outcome, spec: &RewardSpec) -> Result<f64, MdpError> {
    if !(0.0..=1.0).contains(&spec.lambda) {
        return Err(MdpError::LambdaOutOfRange(spec.lambda));
    }
    let d = outcome.d.ok_or(MdpError::DistalUnresolved)?;
    let p = if outcome.p { 1.0 } else { 0.0 };
    let d = if d { 1.0 } else { 0.0 };
    Ok((1.0 - spec.lambda) * p + spec.lambda * d)
}

// ── State derivation ────────────────────────────────────────────────────

/// High iff the mean correctness is at least 0.6. An empty history is Low.
pub fn derive_concept_knowledge(history: &[bool]) -> Level {
    let correct = history.iter().filter(|&&c| c).count();
    // mean >= 3/5, in integers to keep the boundary exact
    if !history.is_empty() && correct * 5 >= history.len() * 3 {
        Level::High
    } else {
        Level::Low
    }
}

/// High iff the mean pre-test correctness is strictly above 0.5.
pub fn derive_task_knowledge(pre_answers: &[bool]) -> Result<Level, MdpError> {
    if pre_answers.is_empty() {
        return Err(MdpError::EmptyPreTest);
    }
    let correct = pre_answers.iter().filter(|&&c| c).count();
    Ok(if correct * 2 > pre_answers.len() {
        Level::High
    } else {
        Level::Low
    })
}

/// Low iff the score falls below the median; ties go High.
pub fn nfc_group(score: f64, median: f64) -> NfcGroup {
    if score < median {
        NfcGroup::Low
    } else {
        NfcGroup::High
    }
}
