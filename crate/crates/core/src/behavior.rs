//! Synthetic decision-maker and simulated AI assistant.
//!
//! The response model is a small decision tree. Without assistance (or with
//! on-demand assistance left unopened) the participant answers from their
//! own knowledge. With assistance they either engage with it, in which case
//! a correct AI helps, a misleading explanation may persuade them, and they
//! may learn the concept; or they skim it and possibly copy the
//! recommendation verbatim.
//!
//! Every response consumes exactly five uniform draws regardless of branch,
//! so seed-paired runs under different actions stay aligned.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::{build_design, ActionAssignment, Design};
use crate::episode::{derive_state, resolve_distal_outcomes, Episode, EpisodeError, Step, SCHEMA_VERSION};
use crate::mdp::{Action, Concept, Level, NfcGroup, RewardSpec, State, NUM_ACTIONS};
use crate::policy::AssistancePolicy;
use crate::seeds::{derive_seed, rng_for};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed behavior model: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("behavior model parameter {name} = {value} outside {range}")]
    OutOfRange {
        name: String,
        value: f64,
        range: &'static str,
    },
    #[error("design {0} assigns actions itself; use the exploratory policy")]
    IncompatiblePolicy(String),
    #[error(transparent)]
    Episode(#[from] EpisodeError),
    #[error("cohort size must be at least 1")]
    EmptyCohort,
    #[error("low-NFC fraction must lie in [0, 1], got {0}")]
    BadMix(f64),
}

// ── Parameters ──────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerConcept {
    pub intensity: f64,
    pub goal: f64,
    pub safety: f64,
    pub condition: f64,
}

impl PerConcept {
    pub fn uniform(v: f64) -> Self {
        PerConcept {
            intensity: v,
            goal: v,
            safety: v,
            condition: v,
        }
    }

    pub fn get(&self, c: Concept) -> f64 {
        match c {
            Concept::Intensity => self.intensity,
            Concept::Goal => self.goal,
            Concept::Safety => self.safety,
            Concept::Condition => self.condition,
        }
    }
}

/// Values for the three assisted actions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerAssistedAction {
    pub rec_and_explanation: f64,
    pub explanation_only: f64,
    pub on_demand: f64,
}

impl PerAssistedAction {
    pub fn uniform(v: f64) -> Self {
        PerAssistedAction {
            rec_and_explanation: v,
            explanation_only: v,
            on_demand: v,
        }
    }

    /// Zero for no-assistance.
    pub fn get(&self, a: Action) -> f64 {
        match a {
            Action::NoAssistance => 0.0,
            Action::RecommendationAndExplanation => self.rec_and_explanation,
            Action::ExplanationOnly => self.explanation_only,
            Action::OnDemand => self.on_demand,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupParams {
    /// Probability a concept starts out known.
    pub p_know0: PerConcept,
    /// Probability of cognitively processing shown assistance.
    pub engage: PerAssistedAction,
    /// Probability of opening on-demand assistance.
    pub click: f64,
    /// Probability of copying a shown recommendation when not engaged.
    pub rely_shallow: f64,
    /// Probability a misleading explanation persuades an engaged participant.
    pub mislead: f64,
    /// Probability an engaged exposure turns an unknown concept known.
    pub learn: PerAssistedAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BehaviorModel {
    pub p_correct_known: f64,
    pub p_correct_unknown: f64,
    /// NFC scores are drawn uniformly within `spread` of the median, below
    /// it for the low group and at or above it for the high group.
    pub nfc_median: f64,
    pub nfc_spread: f64,
    pub low: GroupParams,
    pub high: GroupParams,
}

impl Default for BehaviorModel {
    /// Synthetic defaults. Click rates follow the observed 21% / 52%
    /// on-demand open rates. Low-NFC users engage less than high-NFC users,
    /// and both engage more with a bare explanation or an explicitly
    /// requested recommendation than with one that is pushed at them.
    /// Misleading explanations persuade half of engaged users.
    fn default() -> Self {
        let group = |engage: PerAssistedAction, click: f64, learn: f64| GroupParams {
            p_know0: PerConcept::uniform(0.7),
            engage,
            click,
            rely_shallow: 0.8,
            mislead: 0.5,
            learn: PerAssistedAction::uniform(learn),
        };
        let engage = |re: f64, other: f64| PerAssistedAction {
            rec_and_explanation: re,
            explanation_only: other,
            on_demand: other,
        };
        BehaviorModel {
            p_correct_known: 0.9,
            p_correct_unknown: 0.5,
            nfc_median: 13.0,
            nfc_spread: 4.0,
            low: group(engage(0.4, 0.6), 0.21, 0.3),
            high: group(engage(0.8, 0.9), 0.52, 0.35),
        }
    }
}

impl BehaviorModel {
    pub fn group(&self, g: NfcGroup) -> &GroupParams {
        match g {
            NfcGroup::Low => &self.low,
            NfcGroup::High => &self.high,
        }
    }

    pub fn group_mut(&mut self, g: NfcGroup) -> &mut GroupParams {
        match g {
            NfcGroup::Low => &mut self.low,
            NfcGroup::High => &mut self.high,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let mut probs: Vec<(String, f64)> = vec![
            ("p_correct_known".into(), self.p_correct_known),
            ("p_correct_unknown".into(), self.p_correct_unknown),
        ];
        for g in NfcGroup::ALL {
            let p = self.group(g);
            for c in Concept::ALL {
                probs.push((format!("{g}.p_know0.{c}"), p.p_know0.get(c)));
            }
            for a in &Action::ALL[1..] {
                probs.push((format!("{g}.engage.{a}"), p.engage.get(*a)));
                probs.push((format!("{g}.learn.{a}"), p.learn.get(*a)));
            }
            probs.push((format!("{g}.click"), p.click));
            probs.push((format!("{g}.rely_shallow"), p.rely_shallow));
            probs.push((format!("{g}.mislead"), p.mislead));
        }
        for (name, value) in probs {
            if !(0.0..=1.0).contains(&value) {
                return Err(SimError::OutOfRange {
                    name,
                    value,
                    range: "[0, 1]",
                });
            }
        }
        if !self.nfc_median.is_finite() {
            return Err(SimError::OutOfRange {
                name: "nfc_median".into(),
                value: self.nfc_median,
                range: "finite",
            });
        }
        if !(self.nfc_spread > 0.0 && self.nfc_spread.is_finite()) {
            return Err(SimError::OutOfRange {
                name: "nfc_spread".into(),
                value: self.nfc_spread,
                range: "(0, inf)",
            });
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self, SimError> {
        let model: BehaviorModel = toml::from_str(s)?;
        model.validate()?;
        Ok(model)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("behavior model serializes")
    }

    fn answer_prob(&self, known: bool) -> f64 {
        if known {
            self.p_correct_known
        } else {
            self.p_correct_unknown
        }
    }
}

// ── Participants and responses ──────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedParticipant {
    pub nfc_score: f64,
    pub nfc: NfcGroup,
    /// Indexed by [`Concept::index`].
    pub knowledge: [bool; 4],
}

impl SimulatedParticipant {
    pub fn sample<R: Rng + ?Sized>(model: &BehaviorModel, nfc: NfcGroup, rng: &mut R) -> Self {
        let m = model.nfc_median;
        let nfc_score = match nfc {
            NfcGroup::Low => rng.random_range(m - model.nfc_spread..m),
            NfcGroup::High => rng.random_range(m..=m + model.nfc_spread),
        };
        let p = model.group(nfc);
        let mut knowledge = [false; 4];
        for c in Concept::ALL {
            knowledge[c.index()] = rng.random::<f64>() < p.p_know0.get(c);
        }
        SimulatedParticipant {
            nfc_score,
            nfc,
            knowledge,
        }
    }

    pub fn knows(&self, c: Concept) -> bool {
        self.knowledge[c.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Response {
    pub answer_correct: bool,
    /// Present for on-demand steps only.
    pub revealed: Option<bool>,
    pub knowledge_after: bool,
}

/// One answer from the decision tree. `action` and `ai_correct` are both
/// absent on test steps.
pub fn simulate_response<R: Rng + ?Sized>(
    model: &BehaviorModel,
    participant: &SimulatedParticipant,
    concept: Concept,
    action: Option<Action>,
    ai_correct: Option<bool>,
    rng: &mut R,
) -> Response {
    let u_click: f64 = rng.random();
    let u_engage: f64 = rng.random();
    let u_sway: f64 = rng.random();
    let u_answer: f64 = rng.random();
    let u_learn: f64 = rng.random();

    let p = model.group(participant.nfc);
    let known = participant.knows(concept);
    let own = u_answer < model.answer_prob(known);

    let (action, ai_correct) = match (action, ai_correct) {
        (Some(a), Some(c)) => (a, c),
        _ => {
            return Response {
                answer_correct: own,
                revealed: None,
                knowledge_after: known,
            }
        }
    };

    let revealed = (action == Action::OnDemand).then(|| u_click < p.click);
    let shown = match action {
        Action::NoAssistance => false,
        Action::OnDemand => revealed == Some(true),
        _ => true,
    };
    if !shown {
        return Response {
            answer_correct: own,
            revealed,
            knowledge_after: known,
        };
    }

    let engaged = u_engage < p.engage.get(action);
    let answer_correct = if engaged {
        if ai_correct {
            u_answer < model.p_correct_known.max(model.answer_prob(known))
        } else if u_sway < p.mislead {
            false
        } else {
            own
        }
    } else if action != Action::ExplanationOnly && u_sway < p.rely_shallow {
        ai_correct
    } else {
        own
    };
    let knowledge_after = known || (engaged && u_learn < p.learn.get(action));
    Response {
        answer_correct,
        revealed,
        knowledge_after,
    }
}

// ── Closed-form expectations ────────────────────────────────────────────

/// Probability of a correct answer, marginalizing the decision tree, for a
/// participant who knows the concept with probability `p_known`.
pub fn expected_correct(model: &BehaviorModel, nfc: NfcGroup, action: Action, ai_correct: bool, p_known: f64) -> f64 {
    let p = model.group(nfc);
    let own = p_known * model.p_correct_known + (1.0 - p_known) * model.p_correct_unknown;
    let engaged = if ai_correct {
        p_known * model.p_correct_known.max(model.p_correct_known)
            + (1.0 - p_known) * model.p_correct_known.max(model.p_correct_unknown)
    } else {
        (1.0 - p.mislead) * own
    };
    let shown = |a: Action, rely: f64| {
        let e = p.engage.get(a);
        let skim = rely * if ai_correct { 1.0 } else { 0.0 } + (1.0 - rely) * own;
        e * engaged + (1.0 - e) * skim
    };
    match action {
        Action::NoAssistance => own,
        Action::RecommendationAndExplanation => shown(action, p.rely_shallow),
        Action::ExplanationOnly => shown(action, 0.0),
        Action::OnDemand => p.click * shown(action, p.rely_shallow) + (1.0 - p.click) * own,
    }
}

/// Probability that the concept is known after one step under `action`.
pub fn expected_known_after(model: &BehaviorModel, nfc: NfcGroup, action: Action, p_known: f64) -> f64 {
    let p = model.group(nfc);
    let exposure = match action {
        Action::NoAssistance => 0.0,
        Action::OnDemand => p.click * p.engage.get(action),
        _ => p.engage.get(action),
    };
    p_known + (1.0 - p_known) * exposure * p.learn.get(action)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    ClosedForm,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleValues {
    /// In [`Action`] order.
    pub values: [f64; NUM_ACTIONS],
    pub std_errors: Option<[f64; NUM_ACTIONS]>,
    pub method: OracleMethod,
    pub samples: usize,
}

/// Expected one-step reward of each action in `state`, where the reward is
/// scored on the decision itself (p) and on one unassisted test question on
/// the same concept right after it (d). The state's concept-knowledge level
/// stands in for the latent knowledge flag.
///
/// Myopic objectives (γ = 0) are computed in closed form. Discounted
/// objectives are estimated by Monte Carlo over `monte_carlo_n` rollouts per
/// action, with standard errors.
pub fn oracle_action_values(
    model: &BehaviorModel,
    state: &State,
    objective: &RewardSpec,
    monte_carlo_n: usize,
    seed: u64,
) -> OracleValues {
    let p_known = if state.concept_knowledge == Level::High { 1.0 } else { 0.0 };
    if objective.gamma == 0.0 {
        let values = Action::ALL.map(|a| {
            let acc = expected_correct(model, state.nfc, a, state.ai_correct, p_known);
            let k = expected_known_after(model, state.nfc, a, p_known);
            let learn = k * model.p_correct_known + (1.0 - k) * model.p_correct_unknown;
            (1.0 - objective.lambda) * acc + objective.lambda * learn
        });
        return OracleValues {
            values,
            std_errors: None,
            method: OracleMethod::ClosedForm,
            samples: 0,
        };
    }
    let (values, std_errors) = monte_carlo_action_values(model, state, objective.lambda, monte_carlo_n, seed);
    OracleValues {
        values,
        std_errors: Some(std_errors),
        method: OracleMethod::MonteCarlo,
        samples: monte_carlo_n,
    }
}

/// Sample mean and standard error of the one-step reward per action.
pub fn monte_carlo_action_values(
    model: &BehaviorModel,
    state: &State,
    lambda: f64,
    n: usize,
    seed: u64,
) -> ([f64; NUM_ACTIONS], [f64; NUM_ACTIONS]) {
    let mut means = [0.0; NUM_ACTIONS];
    let mut ses = [0.0; NUM_ACTIONS];
    let known = state.concept_knowledge == Level::High;
    for a in Action::ALL {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, a.as_str(), state.encode() as u64));
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..n {
            let mut who = SimulatedParticipant {
                nfc_score: model.nfc_median,
                nfc: state.nfc,
                knowledge: [false; 4],
            };
            who.knowledge[state.concept.index()] = known;
            let r = simulate_response(model, &who, state.concept, Some(a), Some(state.ai_correct), &mut rng);
            who.knowledge[state.concept.index()] = r.knowledge_after;
            let test = simulate_response(model, &who, state.concept, None, None, &mut rng);
            let reward = (1.0 - lambda) * r.answer_correct as u8 as f64 + lambda * test.answer_correct as u8 as f64;
            sum += reward;
            sum_sq += reward * reward;
        }
        let nf = n as f64;
        let mean = sum / nf;
        let var = (sum_sq / nf - mean * mean).max(0.0) * nf / (nf - 1.0).max(1.0);
        means[a.index()] = mean;
        ses[a.index()] = (var / nf).sqrt();
    }
    (means, ses)
}

// ── Episode generation ──────────────────────────────────────────────────

/// Walk one participant through `design`, choosing assistance with `policy`.
/// Distal outcomes are resolved on the returned episode.
pub fn generate_episode(
    model: &BehaviorModel,
    design: &Design,
    policy: &AssistancePolicy,
    nfc: NfcGroup,
    participant_id: &str,
    seed: u64,
) -> Result<Episode, SimError> {
    let weights = match design.action_assignment {
        ActionAssignment::QuasiRandomPerConceptBlock { weights } => {
            if *policy != AssistancePolicy::Exploratory {
                return Err(SimError::IncompatiblePolicy(design.id.to_string()));
            }
            Some(weights)
        }
        ActionAssignment::PolicyDriven => None,
    };

    let mut who = SimulatedParticipant::sample(model, nfc, &mut rng_for(seed, "participant", 0));
    let schedule = build_design(design, &mut rng_for(seed, "schedule", 0));
    let mut policy_rng = rng_for(seed, "policy", 0);
    let mut response_rng = rng_for(seed, "response", 0);

    let mut steps: Vec<Step> = Vec::with_capacity(schedule.steps.len());
    for (i, planned) in schedule.steps.iter().enumerate() {
        let action = planned.ai_correct.map(|ai| {
            let state = derive_state(&steps, nfc, planned.concept, ai);
            policy.select(&state, planned.assigned_action, &mut policy_rng)
        });
        let r = simulate_response(model, &who, planned.concept, action, planned.ai_correct, &mut response_rng);
        who.knowledge[planned.concept.index()] = r.knowledge_after;
        steps.push(Step {
            index: i as u32,
            block: planned.block,
            concept: planned.concept,
            action,
            ai_correct: planned.ai_correct,
            answer_correct: r.answer_correct as u8,
            revealed: r.revealed,
            question_id: format!("{}-{}-{}", planned.block, planned.concept, planned.slot),
            distal: None,
        });
    }

    let episode = Episode {
        schema_version: SCHEMA_VERSION,
        participant_id: participant_id.to_string(),
        nfc_score: who.nfc_score,
        nfc_group: nfc,
        design_id: design.id,
        concepts: schedule.concepts,
        seed: Some(seed),
        steps,
        exploration_weights: weights,
    };
    Ok(resolve_distal_outcomes(&episode)?)
}

/// NFC group of cohort member `i` when `n_low` of `n` are low: low members
/// are spread evenly through the cohort.
pub fn cohort_group(i: usize, n: usize, n_low: usize) -> NfcGroup {
    if (i + 1) * n_low / n > i * n_low / n {
        NfcGroup::Low
    } else {
        NfcGroup::High
    }
}

/// `n` independent episodes; member `i` is seeded by hashing
/// `(master_seed, i)`. Runs on the current rayon pool; the output does not
/// depend on the pool size.
pub fn generate_cohort(
    model: &BehaviorModel,
    design: &Design,
    policy: &AssistancePolicy,
    n: usize,
    low_fraction: f64,
    master_seed: u64,
) -> Result<Vec<Episode>, SimError> {
    if n == 0 {
        return Err(SimError::EmptyCohort);
    }
    if !(0.0..=1.0).contains(&low_fraction) {
        return Err(SimError::BadMix(low_fraction));
    }
    let n_low = (n as f64 * low_fraction).round() as usize;
    (0..n)
        .into_par_iter()
        .map(|i| {
            generate_episode(
                model,
                design,
                policy,
                cohort_group(i, n, n_low),
                &format!("p{i:05}"),
                derive_seed(master_seed, "episode", i as u64),
            )
        })
        .collect()
}
