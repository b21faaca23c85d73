//! Greedy state→action policies, their `policy.json` format, and the
//! action sources that drive episode generation.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{Action, RewardSpec, State, NUM_ACTIONS, NUM_STATES};

pub const POLICY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed policy file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported policy schema version {0}")]
    UnsupportedSchema(u32),
    #[error("policy must list all 64 states in index order: {0}")]
    Incomplete(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyChoice {
    pub state_index: usize,
    pub action: Action,
    pub q_row: [f64; NUM_ACTIONS],
    pub visits_row: [u64; NUM_ACTIONS],
    pub is_fallback: bool,
}

/// A total map from the 64 states to an action, with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub schema_version: u32,
    /// Absent for hand-specified constant policies.
    pub objective: Option<RewardSpec>,
    pub tie_break_order: Vec<Action>,
    pub min_visits: u64,
    pub fallback_action: Action,
    pub dataset_digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub choices: Vec<PolicyChoice>,
}

impl Policy {
    /// The same action in every state.
    pub fn constant(action: Action, label: &str) -> Policy {
        Policy {
            schema_version: POLICY_SCHEMA_VERSION,
            objective: None,
            tie_break_order: Action::ALL.to_vec(),
            min_visits: 0,
            fallback_action: action,
            dataset_digest: None,
            label: Some(label.to_string()),
            choices: (0..NUM_STATES)
                .map(|state_index| PolicyChoice {
                    state_index,
                    action,
                    q_row: [0.0; NUM_ACTIONS],
                    visits_row: [0; NUM_ACTIONS],
                    is_fallback: false,
                })
                .collect(),
        }
    }

    pub fn choice(&self, state: &State) -> Action {
        self.choices[state.encode()].action
    }

    pub fn fallback_states(&self) -> BTreeSet<usize> {
        self.choices
            .iter()
            .filter(|c| c.is_fallback)
            .map(|c| c.state_index)
            .collect()
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.schema_version != POLICY_SCHEMA_VERSION {
            return Err(PolicyError::UnsupportedSchema(self.schema_version));
        }
        if self.choices.len() != NUM_STATES {
            return Err(PolicyError::Incomplete(format!(
                "{} entries",
                self.choices.len()
            )));
        }
        if let Some((i, c)) = self
            .choices
            .iter()
            .enumerate()
            .find(|(i, c)| c.state_index != *i)
        {
            return Err(PolicyError::Incomplete(format!(
                "entry {i} has state_index {}",
                c.state_index
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, PolicyError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Policy, PolicyError> {
        let p: Policy = serde_json::from_str(s)?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Policy, PolicyError> {
        Policy::from_json(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PolicyError> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// What picks the action on an intervention step.
#[derive(Debug, Clone, PartialEq)]
pub enum AssistancePolicy {
    /// Use the schedule's pre-assigned action (quasi-random data
    /// collection); uniform over actions where none is assigned.
    Exploratory,
    Table(Policy),
    UniformRandom,
}

impl AssistancePolicy {
    pub fn select<R: Rng + ?Sized>(&self, state: &State, assigned: Option<Action>, rng: &mut R) -> Action {
        match self {
            AssistancePolicy::Exploratory => {
                assigned.unwrap_or_else(|| Action::ALL[rng.random_range(0..NUM_ACTIONS)])
            }
            AssistancePolicy::Table(p) => p.choice(state),
            AssistancePolicy::UniformRandom => Action::ALL[rng.random_range(0..NUM_ACTIONS)],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_policy_round_trips() {
        let p = Policy::constant(Action::ExplanationOnly, "explanation_only");
        let text = p.to_json().unwrap();
        let back = Policy::from_json(&text).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.to_json().unwrap(), text);
        assert!(State::all().all(|s| p.choice(&s) == Action::ExplanationOnly));
    }

    #[test]
    fn incomplete_policy_rejected() {
        let mut p = Policy::constant(Action::NoAssistance, "no_ai");
        p.choices.pop();
        let text = serde_json::to_string(&p).unwrap();
        assert!(matches!(Policy::from_json(&text), Err(PolicyError::Incomplete(_))));
    }
}
