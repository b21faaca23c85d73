//! The three experiment designs and per-participant schedule construction.

use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::episode::Block;
use crate::mdp::{Action, Concept, NUM_ACTIONS};

/// Concepts each participant works on.
pub const CONCEPTS_PER_PARTICIPANT: usize = 3;

/// Default quasi-random weights for data collection, in [`Action`] order.
/// No-assistance is sampled less often than the other three.
pub const DEFAULT_EXPLORATION_WEIGHTS: [f64; NUM_ACTIONS] = [0.1, 0.3, 0.3, 0.3];

#[derive(Debug, Error)]
pub enum DesignError {
    #[error("unknown design `{0}`")]
    UnknownDesign(String),
    #[error("invalid exploration weights: {0}")]
    InvalidWeights(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignId {
    DataCollection,
    Eval1,
    Eval2,
}

impl DesignId {
    pub const ALL: [DesignId; 3] = [DesignId::DataCollection, DesignId::Eval1, DesignId::Eval2];

    pub fn as_str(self) -> &'static str {
        match self {
            DesignId::DataCollection => "data_collection",
            DesignId::Eval1 => "eval1",
            DesignId::Eval2 => "eval2",
        }
    }
}

impl fmt::Display for DesignId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DesignId {
    type Err = DesignError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DesignId::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| DesignError::UnknownDesign(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BlockSpec {
    pub block: Block,
    pub questions_per_concept: usize,
}

/// Where the simulated AI is wrong.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AiIncorrectRule {
    /// One incorrect question per concept in every intervention block.
    OnePerConceptPerBlock,
    /// The same number of incorrect questions for every concept.
    PerConcept(usize),
    /// One incorrect question per concept, with one random concept doubled.
    OneConceptDoubled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionAssignment {
    /// Each concept gets one weighted-random action per intervention block.
    QuasiRandomPerConceptBlock { weights: [f64; NUM_ACTIONS] },
    PolicyDriven,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Design {
    pub id: DesignId,
    pub blocks: Vec<BlockSpec>,
    pub intervention_decisions: usize,
    pub ai_incorrect: AiIncorrectRule,
    pub action_assignment: ActionAssignment,
}

impl Design {
    pub fn new(id: DesignId) -> Design {
        let spec = |block, questions_per_concept| BlockSpec {
            block,
            questions_per_concept,
        };
        let (blocks, ai_incorrect, action_assignment) = match id {
            DesignId::DataCollection => (
                vec![
                    spec(Block::Pre, 1),
                    spec(Block::Intervention1, 4),
                    spec(Block::Mid, 1),
                    spec(Block::Intervention2, 4),
                    spec(Block::Post, 1),
                ],
                AiIncorrectRule::OnePerConceptPerBlock,
                ActionAssignment::QuasiRandomPerConceptBlock {
                    weights: DEFAULT_EXPLORATION_WEIGHTS,
                },
            ),
            DesignId::Eval1 => (
                vec![
                    spec(Block::Pre, 2),
                    spec(Block::Intervention, 7),
                    spec(Block::Post, 2),
                ],
                AiIncorrectRule::PerConcept(2),
                ActionAssignment::PolicyDriven,
            ),
            DesignId::Eval2 => (
                vec![
                    spec(Block::Pre, 3),
                    spec(Block::Intervention, 5),
                    spec(Block::Post, 3),
                ],
                AiIncorrectRule::OneConceptDoubled,
                ActionAssignment::PolicyDriven,
            ),
        };
        let intervention_decisions = blocks
            .iter()
            .filter(|b| b.block.is_intervention())
            .map(|b| b.questions_per_concept * CONCEPTS_PER_PARTICIPANT)
            .sum();
        Design {
            id,
            blocks,
            intervention_decisions,
            ai_incorrect,
            action_assignment,
        }
    }

    /// Replace the data-collection sampling weights.
    pub fn with_exploration_weights(mut self, weights: [f64; NUM_ACTIONS]) -> Result<Design, DesignError> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || weights.iter().sum::<f64>() <= 0.0 {
            return Err(DesignError::InvalidWeights(format!("{weights:?}")));
        }
        match &mut self.action_assignment {
            ActionAssignment::QuasiRandomPerConceptBlock { weights: w } => *w = weights,
            ActionAssignment::PolicyDriven => {
                return Err(DesignError::InvalidWeights(format!(
                    "design {} is policy driven",
                    self.id
                )))
            }
        }
        Ok(self)
    }

    pub fn total_questions(&self) -> usize {
        self.blocks
            .iter()
            .map(|b| b.questions_per_concept * CONCEPTS_PER_PARTICIPANT)
            .sum()
    }

    pub fn block_spec(&self, block: Block) -> Option<&BlockSpec> {
        self.blocks.iter().find(|b| b.block == block)
    }

    /// Largest number of questions any single concept needs.
    pub fn questions_per_concept(&self) -> usize {
        self.blocks.iter().map(|b| b.questions_per_concept).sum()
    }

    /// Total number of AI-incorrect intervention questions.
    pub fn ai_incorrect_total(&self) -> usize {
        match self.ai_incorrect {
            AiIncorrectRule::OnePerConceptPerBlock => {
                let blocks = self.blocks.iter().filter(|b| b.block.is_intervention()).count();
                blocks * CONCEPTS_PER_PARTICIPANT
            }
            AiIncorrectRule::PerConcept(n) => n * CONCEPTS_PER_PARTICIPANT,
            AiIncorrectRule::OneConceptDoubled => CONCEPTS_PER_PARTICIPANT + 1,
        }
    }

    /// The test block that measures learning for steps in `block`.
    pub fn following_test_block(&self, block: Block) -> Option<Block> {
        let pos = self.blocks.iter().position(|b| b.block == block)?;
        self.blocks[pos + 1..]
            .iter()
            .map(|b| b.block)
            .find(|b| b.is_test())
    }
}

// ── Schedules ───────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledStep {
    pub block: Block,
    pub concept: Concept,
    /// Position of this question among its concept's questions in the block.
    pub slot: usize,
    /// Present on intervention steps only.
    pub ai_correct: Option<bool>,
    /// Pre-assigned action (quasi-random data collection only).
    pub assigned_action: Option<Action>,
}

/// One participant's concrete question sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub design_id: DesignId,
    pub concepts: Vec<Concept>,
    pub steps: Vec<ScheduledStep>,
}

impl Schedule {
    pub fn intervention_steps(&self) -> impl Iterator<Item = &ScheduledStep> {
        self.steps.iter().filter(|s| s.block.is_intervention())
    }
}

/// Draw a per-participant schedule: pick three concepts, shuffle each block,
/// place AI-incorrect flags per the design rule, and (for data collection)
/// assign one action per concept per intervention block.
pub fn build_design<R: Rng + ?Sized>(design: &Design, rng: &mut R) -> Schedule {
    let mut concepts: Vec<Concept> = index::sample(rng, Concept::ALL.len(), CONCEPTS_PER_PARTICIPANT)
        .into_iter()
        .map(|i| Concept::ALL[i])
        .collect();
    concepts.sort();

    let doubled = match design.ai_incorrect {
        AiIncorrectRule::OneConceptDoubled => Some(concepts[rng.random_range(0..concepts.len())]),
        _ => None,
    };

    let mut steps = Vec::with_capacity(design.total_questions());
    for spec in &design.blocks {
        let intervention = spec.block.is_intervention();
        let assigned: Vec<Option<Action>> = concepts
            .iter()
            .map(|_| match (&design.action_assignment, intervention) {
                (ActionAssignment::QuasiRandomPerConceptBlock { weights }, true) => {
                    let dist = WeightedIndex::new(weights).expect("validated weights");
                    Some(Action::ALL[dist.sample(rng)])
                }
                _ => None,
            })
            .collect();

        let mut block_steps = Vec::with_capacity(spec.questions_per_concept * concepts.len());
        for (ci, &concept) in concepts.iter().enumerate() {
            let incorrect = if intervention {
                match design.ai_incorrect {
                    AiIncorrectRule::OnePerConceptPerBlock => 1,
                    AiIncorrectRule::PerConcept(n) => n,
                    AiIncorrectRule::OneConceptDoubled => {
                        if Some(concept) == doubled {
                            2
                        } else {
                            1
                        }
                    }
                }
            } else {
                0
            };
            // the block is shuffled below, so flagging the first slots
            // places the incorrect questions uniformly at random
            for slot in 0..spec.questions_per_concept {
                block_steps.push(ScheduledStep {
                    block: spec.block,
                    concept,
                    slot,
                    ai_correct: intervention.then_some(slot >= incorrect),
                    assigned_action: assigned[ci],
                });
            }
        }
        block_steps.shuffle(rng);
        steps.extend(block_steps);
    }

    Schedule {
        design_id: design.id,
        concepts,
        steps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn incorrect_by_concept(s: &Schedule) -> BTreeMap<Concept, usize> {
        let mut m = BTreeMap::new();
        for st in s.intervention_steps() {
            if st.ai_correct == Some(false) {
                *m.entry(st.concept).or_default() += 1;
            }
        }
        m
    }

    #[test]
    fn design_shapes() {
        for id in DesignId::ALL {
            assert_eq!(Design::new(id).total_questions(), 33);
            assert_eq!(Design::new(id).questions_per_concept(), 11);
        }
        assert_eq!(Design::new(DesignId::DataCollection).intervention_decisions, 24);
        assert_eq!(Design::new(DesignId::Eval1).intervention_decisions, 21);
        assert_eq!(Design::new(DesignId::Eval2).intervention_decisions, 15);
    }

    #[test]
    fn data_collection_schedule() {
        let d = Design::new(DesignId::DataCollection);
        let s = build_design(&d, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(s.steps.len(), 33);
        assert_eq!(s.intervention_steps().count(), 24);
        let m = incorrect_by_concept(&s);
        assert_eq!(m.values().sum::<usize>(), 6);
        assert!(m.values().all(|&c| c == 2));
        // one action per concept per block
        for block in [Block::Intervention1, Block::Intervention2] {
            for &c in &s.concepts {
                let acts: std::collections::BTreeSet<_> = s
                    .steps
                    .iter()
                    .filter(|st| st.block == block && st.concept == c)
                    .map(|st| st.assigned_action.unwrap())
                    .collect();
                assert_eq!(acts.len(), 1);
            }
        }
    }

    #[test]
    fn eval2_doubles_one_concept() {
        let d = Design::new(DesignId::Eval2);
        let s = build_design(&d, &mut ChaCha8Rng::seed_from_u64(9));
        let mut counts: Vec<usize> = incorrect_by_concept(&s).into_values().collect();
        counts.sort();
        assert_eq!(counts, vec![1, 1, 2]);
    }

    #[test]
    fn same_seed_same_schedule() {
        let d = Design::new(DesignId::Eval1);
        let a = build_design(&d, &mut ChaCha8Rng::seed_from_u64(5));
        let b = build_design(&d, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }

    #[test]
    fn following_test_blocks() {
        let d = Design::new(DesignId::DataCollection);
        assert_eq!(d.following_test_block(Block::Intervention1), Some(Block::Mid));
        assert_eq!(d.following_test_block(Block::Intervention2), Some(Block::Post));
        let e = Design::new(DesignId::Eval1);
        assert_eq!(e.following_test_block(Block::Intervention), Some(Block::Post));
        assert_eq!(e.following_test_block(Block::Post), None);
    }

    #[test]
    fn weights_validation() {
        let d = Design::new(DesignId::DataCollection);
        assert!(d.clone().with_exploration_weights([0.0, 1.0, 1.0, 1.0]).is_ok());
        assert!(d.with_exploration_weights([-1.0, 1.0, 1.0, 1.0]).is_err());
        assert!(Design::new(DesignId::Eval1)
            .with_exploration_weights([0.25; 4])
            .is_err());
    }
}
