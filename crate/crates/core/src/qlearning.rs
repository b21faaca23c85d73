//! Offline tabular Q-learning over episode datasets and greedy policy
//! extraction.
//!
//! Training makes `sweeps` full passes over the dataset in stored order.
//! Every update in sweep `i` (1-based) uses the step size `0.1 / i`:
//!
//! ```text
//! Q(s,a) <- Q(s,a) + α (r + γ max_a' Q(s',a') − Q(s,a))
//! ```
//!
//! with the bootstrap term dropped on terminal transitions and Q starting
//! at zero.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::episode::{episodes_to_bytes, transitions_for, Episode, EpisodeError};
use crate::mdp::{Action, RewardSpec, State, NUM_ACTIONS, NUM_STATES};
use crate::policy::{Policy, PolicyChoice, POLICY_SCHEMA_VERSION};
use crate::seeds::digest_hex;

pub const DEFAULT_SWEEPS: usize = 200;
pub const BASE_STEP_SIZE: f64 = 0.1;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("sweeps must be at least 1")]
    NoSweeps,
    #[error(transparent)]
    Episode(#[from] EpisodeError),
    #[error(transparent)]
    Reward(#[from] crate::mdp::MdpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub sweeps: usize,
    /// Only used when `shuffle` is set.
    pub seed: Option<u64>,
    /// Reshuffle episode order before every sweep. Off by default: the
    /// stored order is part of the training definition.
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            sweeps: DEFAULT_SWEEPS,
            seed: None,
            shuffle: false,
        }
    }
}

// ── Generic tabular learner ─────────────────────────────────────────────

/// A transition over plain state/action indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexedTransition {
    pub s: usize,
    pub a: usize,
    pub r: f64,
    pub next: Option<usize>,
}

/// Q values and update counts for an arbitrary finite MDP.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularQ {
    pub n_states: usize,
    pub n_actions: usize,
    pub values: Vec<f64>,
    pub visits: Vec<u64>,
    pub sweeps_completed: usize,
    /// Max absolute change of any entry during each sweep.
    pub trace: Vec<f64>,
}

impl TabularQ {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        TabularQ {
            n_states,
            n_actions,
            values: vec![0.0; n_states * n_actions],
            visits: vec![0; n_states * n_actions],
            sweeps_completed: 0,
            trace: Vec::new(),
        }
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    fn max_row(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Run `sweeps` more passes over `episodes`. Returns the per-sweep
    /// residuals of this call.
    pub fn run_sweeps(
        &mut self,
        episodes: &[Vec<IndexedTransition>],
        gamma: f64,
        sweeps: usize,
        mut order_rng: Option<&mut ChaCha8Rng>,
    ) -> Vec<f64> {
        let mut order: Vec<usize> = (0..episodes.len()).collect();
        let mut residuals = Vec::with_capacity(sweeps);
        for _ in 0..sweeps {
            let i = self.sweeps_completed + 1;
            let alpha = BASE_STEP_SIZE / i as f64;
            if let Some(rng) = order_rng.as_deref_mut() {
                order.shuffle(rng);
            }
            let mut max_change: f64 = 0.0;
            for &ep in &order {
                for t in &episodes[ep] {
                    let target = match t.next {
                        Some(next) => t.r + gamma * self.max_row(next),
                        None => t.r,
                    };
                    let idx = t.s * self.n_actions + t.a;
                    let delta = alpha * (target - self.values[idx]);
                    self.values[idx] += delta;
                    self.visits[idx] += 1;
                    max_change = max_change.max(delta.abs());
                }
            }
            self.sweeps_completed = i;
            self.trace.push(max_change);
            residuals.push(max_change);
        }
        residuals
    }
}

/// Train on raw indexed episodes.
pub fn train_tabular(
    n_states: usize,
    n_actions: usize,
    episodes: &[Vec<IndexedTransition>],
    gamma: f64,
    config: &TrainConfig,
) -> Result<TabularQ, TrainError> {
    if episodes.iter().all(|e| e.is_empty()) {
        return Err(TrainError::EmptyDataset);
    }
    if config.sweeps == 0 {
        return Err(TrainError::NoSweeps);
    }
    let mut q = TabularQ::zeros(n_states, n_actions);
    let mut rng = config
        .shuffle
        .then(|| ChaCha8Rng::seed_from_u64(config.seed.unwrap_or(0)));
    q.run_sweeps(episodes, gamma, config.sweeps, rng.as_mut());
    Ok(q)
}

// ── Episode-level training ──────────────────────────────────────────────

/// Q table over the 64 MDP states.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    pub values: Vec<[f64; NUM_ACTIONS]>,
    /// Number of updates applied to each entry, summed over all sweeps.
    pub visits: Vec<[u64; NUM_ACTIONS]>,
    pub sweeps_completed: usize,
    pub spec: RewardSpec,
    pub dataset_digest: String,
    /// Per-sweep max absolute change.
    pub trace: Vec<f64>,
}

impl QTable {
    pub fn value(&self, s: &State, a: Action) -> f64 {
        self.values[s.encode()][a.index()]
    }

    /// How many transitions in the dataset hit `(s, a)`. Every sweep visits
    /// the same transitions, so this is `visits / sweeps_completed`.
    pub fn dataset_count(&self, state_index: usize, a: usize) -> u64 {
        if self.sweeps_completed == 0 {
            0
        } else {
            self.visits[state_index][a] / self.sweeps_completed as u64
        }
    }

    /// Dataset transitions starting in `state_index`, over all actions.
    pub fn state_count(&self, state_index: usize) -> u64 {
        (0..NUM_ACTIONS).map(|a| self.dataset_count(state_index, a)).sum()
    }

    /// Final convergence residual.
    pub fn residual(&self) -> Option<f64> {
        self.trace.last().copied()
    }
}

/// Index-level transitions for every episode, using each episode's stored
/// NFC group.
pub fn indexed_transitions(episodes: &[Episode], spec: &RewardSpec) -> Result<Vec<Vec<IndexedTransition>>, TrainError> {
    episodes
        .iter()
        .map(|e| {
            Ok(transitions_for(e, spec, e.nfc_group)?
                .into_iter()
                .map(|t| IndexedTransition {
                    s: t.s.encode(),
                    a: t.a.index(),
                    r: t.r,
                    next: t.next.map(|n| n.encode()),
                })
                .collect())
        })
        .collect()
}

pub fn dataset_digest(episodes: &[Episode]) -> Result<String, TrainError> {
    Ok(digest_hex(&episodes_to_bytes(episodes).map_err(TrainError::Episode)?))
}

pub fn train(episodes: &[Episode], spec: &RewardSpec, config: &TrainConfig) -> Result<QTable, TrainError> {
    if episodes.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    spec.validate()?;
    let data = indexed_transitions(episodes, spec)?;
    train_indexed(&data, spec, config, dataset_digest(episodes)?)
}

/// Train on precomputed index-level transitions over the 64-state space.
pub fn train_indexed(
    data: &[Vec<IndexedTransition>],
    spec: &RewardSpec,
    config: &TrainConfig,
    dataset_digest: String,
) -> Result<QTable, TrainError> {
    let q = train_tabular(NUM_STATES, NUM_ACTIONS, data, spec.gamma, config)?;
    let values = q
        .values
        .chunks(NUM_ACTIONS)
        .map(|c| c.try_into().expect("row width"))
        .collect();
    let visits = q
        .visits
        .chunks(NUM_ACTIONS)
        .map(|c| c.try_into().expect("row width"))
        .collect();
    Ok(QTable {
        values,
        visits,
        sweeps_completed: q.sweeps_completed,
        spec: *spec,
        dataset_digest,
        trace: q.trace,
    })
}

/// Per-sweep max absolute Q change; the last entry is the residual.
pub fn convergence_trace(episodes: &[Episode], spec: &RewardSpec, config: &TrainConfig) -> Result<Vec<f64>, TrainError> {
    Ok(train(episodes, spec, config)?.trace)
}

/// Greedy policy. An action qualifies in a state when its dataset count is
/// at least `min_visits`; ties go to the earlier action in declared order.
/// States with no qualifying action get `fallback`.
pub fn extract_policy(q: &QTable, min_visits: u64, fallback: Action) -> Policy {
    let choices = (0..NUM_STATES)
        .map(|s| {
            let row = q.values[s];
            let mut best: Option<(usize, f64)> = None;
            for a in 0..NUM_ACTIONS {
                if q.dataset_count(s, a) < min_visits {
                    continue;
                }
                if best.is_none_or(|(_, v)| row[a] > v) {
                    best = Some((a, row[a]));
                }
            }
            PolicyChoice {
                state_index: s,
                action: best.map_or(fallback, |(a, _)| Action::ALL[a]),
                q_row: row,
                visits_row: q.visits[s],
                is_fallback: best.is_none(),
            }
        })
        .collect();
    Policy {
        schema_version: POLICY_SCHEMA_VERSION,
        objective: Some(q.spec),
        tie_break_order: Action::ALL.to_vec(),
        min_visits,
        fallback_action: fallback,
        dataset_digest: Some(q.dataset_digest.clone()),
        label: Some(q.spec.objective.as_str().to_string()),
        choices,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(r: f64) -> Vec<Vec<IndexedTransition>> {
        vec![vec![IndexedTransition { s: 0, a: 0, r, next: None }]]
    }

    fn table_with_row(row: [f64; 4], visits: [u64; 4]) -> QTable {
        let mut values = vec![[0.0; 4]; NUM_STATES];
        let mut v = vec![[0; 4]; NUM_STATES];
        values[5] = row;
        v[5] = visits;
        QTable {
            values,
            visits: v,
            sweeps_completed: 1,
            spec: RewardSpec::accuracy(),
            dataset_digest: "x".into(),
            trace: vec![],
        }
    }

    #[test]
    fn single_transition_hand_iteration() {
        // α = 0.1, 0.05, 0.1/3 applied to target 1 from 0
        let mut expected = 0.0;
        let mut deltas = vec![];
        for i in 1..=3 {
            let d = 0.1 / i as f64 * (1.0 - expected);
            expected += d;
            deltas.push(d);
        }
        let cfg = |sweeps| TrainConfig { sweeps, ..Default::default() };
        let q1 = train_tabular(1, 1, &single(1.0), 0.0, &cfg(1)).unwrap();
        assert!((q1.get(0, 0) - 0.1).abs() < 1e-12);
        let q2 = train_tabular(1, 1, &single(1.0), 0.0, &cfg(2)).unwrap();
        assert!((q2.get(0, 0) - 0.145).abs() < 1e-12);
        let q3 = train_tabular(1, 1, &single(1.0), 0.0, &cfg(3)).unwrap();
        assert!((q3.get(0, 0) - 0.1735).abs() < 1e-12);
        assert!((q3.get(0, 0) - expected).abs() < 1e-15);
        for (got, want) in q3.trace.iter().zip([0.1, 0.045, 0.0285]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert_eq!(q3.visits[0], 3);
    }

    #[test]
    fn approaches_reward_fixed_point() {
        // 1 - Q_n = prod_{i<=n} (1 - 0.1/i) <= exp(-0.1 H_n) -> 0
        let n = 100_000;
        let q = train_tabular(1, 1, &single(1.0), 0.0, &TrainConfig { sweeps: n, ..Default::default() }).unwrap();
        let gap: f64 = (1..=n).map(|i| 1.0 - 0.1 / i as f64).product();
        let harmonic: f64 = (1..=n).map(|i| 1.0 / i as f64).sum();
        assert!((1.0 - q.get(0, 0) - gap).abs() < 1e-9);
        assert!(gap <= (-0.1 * harmonic).exp());
        assert!(q.trace.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn zero_rewards_stay_zero() {
        let data = vec![vec![
            IndexedTransition { s: 0, a: 1, r: 0.0, next: Some(1) },
            IndexedTransition { s: 1, a: 0, r: 0.0, next: None },
        ]];
        let q = train_tabular(2, 2, &data, 0.99, &TrainConfig::default()).unwrap();
        assert!(q.values.iter().all(|&v| v == 0.0));
        assert!(q.trace.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empty_dataset_errors() {
        assert!(matches!(
            train(&[], &RewardSpec::accuracy(), &TrainConfig::default()),
            Err(TrainError::EmptyDataset)
        ));
        assert!(matches!(
            train_tabular(1, 1, &[vec![]], 0.0, &TrainConfig::default()),
            Err(TrainError::EmptyDataset)
        ));
    }

    #[test]
    fn greedy_tie_break_and_fallback() {
        let q = table_with_row([0.2, 0.5, 0.5, 0.1], [1, 1, 1, 1]);
        let p = extract_policy(&q, 1, Action::NoAssistance);
        assert_eq!(p.choices[5].action, Action::RecommendationAndExplanation);
        assert!(!p.choices[5].is_fallback);
        // every other state has no visits
        assert_eq!(p.fallback_states().len(), NUM_STATES - 1);
        assert_eq!(p.choices[0].action, Action::NoAssistance);

        let q = table_with_row([0.9, 0.1, 0.1, 0.1], [1, 1, 1, 1]);
        assert_eq!(extract_policy(&q, 1, Action::OnDemand).choices[5].action, Action::NoAssistance);

        // undersampled best action is skipped
        let q = table_with_row([0.9, 0.1, 0.3, 0.1], [1, 5, 5, 5]);
        assert_eq!(extract_policy(&q, 2, Action::NoAssistance).choices[5].action, Action::ExplanationOnly);
    }
}
