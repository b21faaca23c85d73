//! Learning, evaluating, and serving adaptive AI-assistance policies for
//! sequential human decision-making.
//!
//! The pipeline runs episodes in, per-objective policies out:
//!
//! - [`mdp`] holds the state/action/reward vocabulary.
//! - [`episode`] is the on-disk episode model and the transition builder.
//! - [`design`] encodes the three experiment designs and builds per-participant schedules.
//! - [`qlearning`] trains tabular Q-tables offline and extracts greedy policies.
//! - [`behavior`] is a synthetic decision-maker used to generate episodes and as an oracle.
//! - [`harness`] runs policy-vs-baseline cohort evaluations.
//! - [`analysis`] has the metrics, the χ² randomization test, and the bootstrap helpers.
//! - [`content`] holds vignette content packs and their generator.

pub mod analysis;
pub mod behavior;
pub mod content;
pub mod design;
pub mod episode;
pub mod harness;
pub mod mdp;
pub mod policy;
pub mod qlearning;
pub mod seeds;

pub use design::{Design, DesignId, Schedule};
pub use episode::{Block, Episode, Step, Transition};
pub use mdp::{Action, Concept, Level, NfcGroup, Objective, RewardSpec, State};
pub use policy::{AssistancePolicy, Policy};
pub use qlearning::{QTable, TrainConfig};
