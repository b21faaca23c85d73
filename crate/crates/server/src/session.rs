//! One live participant session: questionnaire scoring, question order,
//! live state derivation, and what the participant is shown at each step.
//!
//! Everything here is synchronous and free of I/O so the state machine can
//! be tested without a server.

use std::collections::BTreeMap;

use adaptrl_core::analysis::{metric_immediate_accuracy, metric_learning};
use adaptrl_core::content::{ContentPack, OptionLabel, Vignette};
use adaptrl_core::design::{build_design, ActionAssignment, Design, DesignId, Schedule};
use adaptrl_core::episode::{derive_state, resolve_distal_outcomes, validate_episode, Block, Episode, Step, SCHEMA_VERSION};
use adaptrl_core::mdp::{nfc_group, Action, Concept, NfcGroup};
use adaptrl_core::policy::AssistancePolicy;
use adaptrl_core::seeds::rng_for;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of questionnaire items a participant answers.
pub const NFC_ITEMS: usize = 4;
/// Likert range of each questionnaire item.
pub const LIKERT_MIN: i64 = 1;
pub const LIKERT_MAX: i64 = 5;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Conflict(String),
    #[error("session produced an invalid episode: {0}")]
    Internal(String),
}

// ── Questionnaire ───────────────────────────────────────────────────────

/// How questionnaire responses become an NFC score and group.
#[derive(Debug, Clone, PartialEq)]
pub struct NfcScoring {
    /// `reverse[i]` flips item `i` (a response `r` scores `6 - r`).
    pub reverse: [bool; NFC_ITEMS],
    pub median: f64,
}

impl NfcScoring {
    pub fn score(&self, responses: &[i64]) -> Result<f64, SessionError> {
        if responses.len() != NFC_ITEMS {
            return Err(SessionError::Validation(format!(
                "expected {NFC_ITEMS} questionnaire responses, got {}",
                responses.len()
            )));
        }
        let mut total = 0;
        for (i, &r) in responses.iter().enumerate() {
            if !(LIKERT_MIN..=LIKERT_MAX).contains(&r) {
                return Err(SessionError::Validation(format!(
                    "response {} is {r}; responses must lie in {LIKERT_MIN}..={LIKERT_MAX}",
                    i + 1
                )));
            }
            total += if self.reverse[i] { LIKERT_MIN + LIKERT_MAX - r } else { r };
        }
        Ok(total as f64)
    }

    pub fn group(&self, score: f64) -> NfcGroup {
        nfc_group(score, self.median)
    }
}

// ── Wire types ──────────────────────────────────────────────────────────

/// What the AI shows when assistance is visible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevealPayload {
    /// Absent for explanation-only assistance.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recommendation: Option<OptionLabel>,
    pub explanation: String,
}

/// The assistance rendering for one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Assistance {
    None,
    RecAndExplanation {
        recommendation: OptionLabel,
        explanation: String,
    },
    ExplanationOnly {
        explanation: String,
    },
    /// Hidden until the participant asks; `payload` is filled once revealed.
    OnDemand {
        revealed: bool,
        #[serde(skip_serializing_if = "Option::is_none")]
        payload: Option<RevealPayload>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionView {
    /// 0-based position in the session.
    pub step: usize,
    pub total: usize,
    pub block: Block,
    pub question_id: String,
    pub vignette_text: String,
    pub option_a: Vec<String>,
    pub option_b: Vec<String>,
    pub assistance: Assistance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub session_id: String,
    pub episode_id: String,
    pub immediate_accuracy: f64,
    pub pre_accuracy: f64,
    pub post_accuracy: f64,
    pub correct: usize,
    pub total: usize,
}

/// Coarse session state. Sessions pass through `Created` and `NfcDone`
/// inside [`Session::start`], so a stored session is always in a block or
/// finished.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum SessionState {
    Created,
    NfcDone,
    InBlock { block: Block, cursor: usize },
    Finished,
}

pub enum Advance {
    Next(QuestionView),
    Finished(Episode),
}

// ── Session ─────────────────────────────────────────────────────────────

/// The step being shown: its action is fixed when it becomes current.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pending {
    pub action: Option<Action>,
    pub revealed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub design_id: DesignId,
    pub policy_id: String,
    /// Catalog id of the content pack.
    pub pack_id: String,
    pub seed: u64,
    pub nfc_responses: Vec<i64>,
    pub nfc_score: f64,
    pub nfc_group: NfcGroup,
    pub schedule: Schedule,
    /// One vignette per scheduled step.
    pub question_ids: Vec<String>,
    /// Answered steps; never rewritten.
    pub steps: Vec<Step>,
    pub pending: Option<Pending>,
    /// Set once the last answer is in.
    pub episode: Option<Episode>,
}

/// Vignettes for each scheduled step, drawn without replacement per concept.
fn assign_questions(schedule: &Schedule, pack: &ContentPack, seed: u64) -> Result<Vec<String>, SessionError> {
    let mut rng = rng_for(seed, "questions", 0);
    let mut pools: BTreeMap<Concept, Vec<&Vignette>> = pack.per_concept();
    for pool in pools.values_mut() {
        pool.shuffle(&mut rng);
    }
    let mut need: BTreeMap<Concept, usize> = BTreeMap::new();
    for s in &schedule.steps {
        *need.entry(s.concept).or_default() += 1;
    }
    for (concept, n) in &need {
        let have = pools.get(concept).map_or(0, Vec::len);
        if have < *n {
            return Err(SessionError::Validation(format!(
                "pack {} has {have} vignettes for {concept}; design {} needs {n}",
                pack.pack_id, schedule.design_id
            )));
        }
    }
    Ok(schedule
        .steps
        .iter()
        .map(|s| pools.get_mut(&s.concept).and_then(Vec::pop).expect("pool size checked").question_id.clone())
        .collect())
}

impl Session {
    #[allow(clippy::too_many_arguments)]
    pub fn start(
        session_id: String,
        design: &Design,
        policy_id: &str,
        policy: &AssistancePolicy,
        pack_id: &str,
        pack: &ContentPack,
        responses: &[i64],
        scoring: &NfcScoring,
        seed: u64,
    ) -> Result<Session, SessionError> {
        if matches!(design.action_assignment, ActionAssignment::QuasiRandomPerConceptBlock { .. })
            && *policy != AssistancePolicy::Exploratory
        {
            return Err(SessionError::Validation(format!(
                "design {} assigns its own actions; use the exploratory policy",
                design.id
            )));
        }
        let nfc_score = scoring.score(responses)?;
        let schedule = build_design(design, &mut rng_for(seed, "schedule", 0));
        let question_ids = assign_questions(&schedule, pack, seed)?;
        let mut session = Session {
            session_id,
            design_id: design.id,
            policy_id: policy_id.to_string(),
            pack_id: pack_id.to_string(),
            seed,
            nfc_responses: responses.to_vec(),
            nfc_score,
            nfc_group: scoring.group(nfc_score),
            schedule,
            question_ids,
            steps: Vec::new(),
            pending: None,
            episode: None,
        };
        session.pending = Some(session.choose_pending(policy));
        Ok(session)
    }

    pub fn state(&self) -> SessionState {
        if self.episode.is_some() {
            return SessionState::Finished;
        }
        let at = self.steps.len();
        let block = self.schedule.steps[at].block;
        let cursor = self.schedule.steps[..at].iter().filter(|s| s.block == block).count();
        SessionState::InBlock { block, cursor }
    }

    pub fn is_finished(&self) -> bool {
        self.episode.is_some()
    }

    /// Fix the action for the next unanswered step from the live state.
    fn choose_pending(&self, policy: &AssistancePolicy) -> Pending {
        let at = self.steps.len();
        let planned = &self.schedule.steps[at];
        let action = planned.ai_correct.map(|ai| {
            let state = derive_state(&self.steps, self.nfc_group, planned.concept, ai);
            policy.select(&state, planned.assigned_action, &mut rng_for(self.seed, "policy", at as u64))
        });
        Pending { action, revealed: false }
    }

    fn vignette<'p>(&self, pack: &'p ContentPack, at: usize) -> Result<&'p Vignette, SessionError> {
        pack.get(&self.question_ids[at])
            .ok_or_else(|| SessionError::Internal(format!("question {} missing from pack", self.question_ids[at])))
    }

    /// The AI content for the current step: right or wrong depending on the
    /// schedule's AI-correct flag.
    fn ai_content(&self, v: &Vignette, at: usize) -> (OptionLabel, String) {
        if self.schedule.steps[at].ai_correct == Some(false) {
            (v.correct_option.other(), v.explanation_misleading.clone())
        } else {
            (v.correct_option, v.explanation_correct.clone())
        }
    }

    pub fn current_question(&self, pack: &ContentPack) -> Result<Option<QuestionView>, SessionError> {
        let Some(pending) = self.pending else {
            return Ok(None);
        };
        let at = self.steps.len();
        let v = self.vignette(pack, at)?;
        let (recommendation, explanation) = self.ai_content(v, at);
        let assistance = match pending.action {
            None | Some(Action::NoAssistance) => Assistance::None,
            Some(Action::RecommendationAndExplanation) => Assistance::RecAndExplanation {
                recommendation,
                explanation,
            },
            Some(Action::ExplanationOnly) => Assistance::ExplanationOnly { explanation },
            Some(Action::OnDemand) => Assistance::OnDemand {
                revealed: pending.revealed,
                payload: pending.revealed.then_some(RevealPayload {
                    recommendation: Some(recommendation),
                    explanation,
                }),
            },
        };
        Ok(Some(QuestionView {
            step: at,
            total: self.schedule.steps.len(),
            block: self.schedule.steps[at].block,
            question_id: v.question_id.clone(),
            vignette_text: v.vignette_text.clone(),
            option_a: v.option_a.clone(),
            option_b: v.option_b.clone(),
            assistance,
        }))
    }

    /// Show on-demand assistance. Repeating the call returns the same payload.
    pub fn reveal(&mut self, pack: &ContentPack) -> Result<RevealPayload, SessionError> {
        let Some(pending) = self.pending.as_mut() else {
            return Err(SessionError::Conflict("session is finished".into()));
        };
        if pending.action != Some(Action::OnDemand) {
            return Err(SessionError::Conflict("current question has no on-demand assistance".into()));
        }
        pending.revealed = true;
        let at = self.steps.len();
        let (recommendation, explanation) = self.ai_content(self.vignette(pack, at)?, at);
        Ok(RevealPayload {
            recommendation: Some(recommendation),
            explanation,
        })
    }

    /// Record an answer and move on. The last answer builds the episode.
    pub fn answer(
        &mut self,
        choice: OptionLabel,
        pack: &ContentPack,
        policy: &AssistancePolicy,
        design: &Design,
    ) -> Result<Advance, SessionError> {
        let Some(pending) = self.pending else {
            return Err(SessionError::Conflict("session is finished".into()));
        };
        let at = self.steps.len();
        let v = self.vignette(pack, at)?;
        let planned = &self.schedule.steps[at];
        self.steps.push(Step {
            index: at as u32,
            block: planned.block,
            concept: planned.concept,
            action: pending.action,
            ai_correct: planned.ai_correct,
            answer_correct: u8::from(choice == v.correct_option),
            revealed: (pending.action == Some(Action::OnDemand)).then_some(pending.revealed),
            question_id: v.question_id.clone(),
            distal: None,
        });

        if self.steps.len() < self.schedule.steps.len() {
            self.pending = Some(self.choose_pending(policy));
            let view = self.current_question(pack)?.expect("pending step set");
            return Ok(Advance::Next(view));
        }

        self.pending = None;
        let episode = self.build_episode(design)?;
        self.episode = Some(episode.clone());
        Ok(Advance::Finished(episode))
    }

    fn build_episode(&self, design: &Design) -> Result<Episode, SessionError> {
        let exploration_weights = match design.action_assignment {
            ActionAssignment::QuasiRandomPerConceptBlock { weights } => Some(weights),
            ActionAssignment::PolicyDriven => None,
        };
        let raw = Episode {
            schema_version: SCHEMA_VERSION,
            participant_id: self.session_id.clone(),
            nfc_score: self.nfc_score,
            nfc_group: self.nfc_group,
            design_id: self.design_id,
            concepts: self.schedule.concepts.clone(),
            seed: Some(self.seed),
            steps: self.steps.clone(),
            exploration_weights,
        };
        let episode = resolve_distal_outcomes(&raw).map_err(|e| SessionError::Internal(e.to_string()))?;
        let violations = validate_episode(&episode, design);
        if let Some(v) = violations.first() {
            return Err(SessionError::Internal(v.to_string()));
        }
        Ok(episode)
    }

    pub fn summary(&self) -> Result<Summary, SessionError> {
        let Some(episode) = &self.episode else {
            return Err(SessionError::Conflict("session is not finished".into()));
        };
        let learning = metric_learning(episode);
        Ok(Summary {
            session_id: self.session_id.clone(),
            episode_id: episode.participant_id.clone(),
            immediate_accuracy: metric_immediate_accuracy(episode),
            pre_accuracy: learning.pre,
            post_accuracy: learning.post,
            correct: episode.steps.iter().filter(|s| s.correct()).count(),
            total: episode.steps.len(),
        })
    }
}
