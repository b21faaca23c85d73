//! Baseline policies and policy-vs-baseline cohort evaluations.

use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{
    adjusted_means, bootstrap_mean, bootstrap_mean_difference, metric_immediate_accuracy, metric_learning,
    metric_overreliance, Estimate, OverrelianceConvention, StatsError, DEFAULT_RESAMPLES,
};
use crate::behavior::{generate_cohort, BehaviorModel, SimError};
use crate::design::{Design, DesignId};
use crate::episode::Episode;
use crate::mdp::{Action, NfcGroup};
use crate::policy::{AssistancePolicy, Policy};
use crate::seeds::{derive_seed, rng_for};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("need at least 2 participants per condition and group, got {0}")]
    TooFewParticipants(usize),
    #[error("unknown baseline {0:?} (expected sxai, explanation_only, random, no_ai)")]
    UnknownBaseline(String),
    #[error("design {0} assigns its own actions and cannot evaluate policies")]
    NotAnEvaluationDesign(DesignId),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

// ── Baselines ───────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Sxai,
    ExplanationOnly,
    Random,
    NoAi,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 4] = [
        BaselineKind::Sxai,
        BaselineKind::ExplanationOnly,
        BaselineKind::Random,
        BaselineKind::NoAi,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::Sxai => "sxai",
            BaselineKind::ExplanationOnly => "explanation_only",
            BaselineKind::Random => "random",
            BaselineKind::NoAi => "no_ai",
        }
    }
}

impl FromStr for BaselineKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BaselineKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| HarnessError::UnknownBaseline(s.to_string()))
    }
}

pub fn make_baseline_policy(kind: BaselineKind) -> AssistancePolicy {
    let constant = |a: Action| AssistancePolicy::Table(Policy::constant(a, kind.as_str()));
    match kind {
        BaselineKind::Sxai => constant(Action::RecommendationAndExplanation),
        BaselineKind::ExplanationOnly => constant(Action::ExplanationOnly),
        BaselineKind::Random => AssistancePolicy::UniformRandom,
        BaselineKind::NoAi => constant(Action::NoAssistance),
    }
}

// ── Evaluation ──────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub label: String,
    pub policy: AssistancePolicy,
}

impl Condition {
    pub fn new(label: &str, policy: AssistancePolicy) -> Self {
        Condition {
            label: label.to_string(),
            policy,
        }
    }

    pub fn baseline(kind: BaselineKind) -> Self {
        Condition::new(kind.as_str(), make_baseline_policy(kind))
    }
}

/// Simulated participants of one condition within one NFC group.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub condition: String,
    pub nfc: NfcGroup,
    pub episodes: Vec<Episode>,
}

impl Cohort {
    pub fn immediate_accuracy(&self) -> Vec<f64> {
        self.episodes.iter().map(metric_immediate_accuracy).collect()
    }

    pub fn post_accuracy(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| metric_learning(e).post).collect()
    }

    pub fn pre_accuracy(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| metric_learning(e).pre).collect()
    }

    /// Per-participant overreliance, skipping participants for whom it is
    /// undefined.
    pub fn overreliance(&self, convention: OverrelianceConvention) -> Vec<f64> {
        self.episodes
            .iter()
            .filter_map(|e| metric_overreliance(e, convention))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub resamples: usize,
    pub convention: OverrelianceConvention,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            resamples: DEFAULT_RESAMPLES,
            convention: OverrelianceConvention::Shown,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub condition: String,
    pub nfc: NfcGroup,
    pub n: usize,
    pub immediate_accuracy: Estimate,
    pub post_accuracy: Estimate,
    pub pre_accuracy: Estimate,
    /// Absent when no participant received assistance on a wrong-AI step.
    pub overreliance: Option<Estimate>,
    /// Participants contributing to `overreliance`.
    pub overreliance_n: usize,
    /// Post accuracy adjusted for pre accuracy with the slope pooled over
    /// every condition in the same NFC group.
    pub adjusted_post: f64,
}

fn cohort_seed(master_seed: u64, label: &str, nfc: NfcGroup) -> u64 {
    derive_seed(master_seed, &format!("cohort/{label}/{nfc}"), 0)
}

/// Generate every (condition, group) cohort. Seeds depend only on the
/// condition label and group, so reordering conditions changes nothing.
pub fn simulate_conditions(
    model: &BehaviorModel,
    design_id: DesignId,
    conditions: &[Condition],
    n_per_condition_per_group: usize,
    master_seed: u64,
) -> Result<Vec<Cohort>, HarnessError> {
    if n_per_condition_per_group < 2 {
        return Err(HarnessError::TooFewParticipants(n_per_condition_per_group));
    }
    if design_id == DesignId::DataCollection {
        return Err(HarnessError::NotAnEvaluationDesign(design_id));
    }
    let design = Design::new(design_id);
    let jobs: Vec<(&Condition, NfcGroup)> = conditions
        .iter()
        .flat_map(|c| NfcGroup::ALL.map(|g| (c, g)))
        .collect();
    jobs.par_iter()
        .map(|(c, g)| {
            let low_fraction = if *g == NfcGroup::Low { 1.0 } else { 0.0 };
            let episodes = generate_cohort(
                model,
                &design,
                &c.policy,
                n_per_condition_per_group,
                low_fraction,
                cohort_seed(master_seed, &c.label, *g),
            )?;
            Ok(Cohort {
                condition: c.label.clone(),
                nfc: *g,
                episodes,
            })
        })
        .collect()
}

/// Bootstrap summaries of simulated cohorts.
pub fn summarize(cohorts: &[Cohort], config: &EvalConfig, master_seed: u64) -> Result<Vec<ConditionResult>, HarnessError> {
    let mut adjusted = vec![0.0; cohorts.len()];
    for g in NfcGroup::ALL {
        let idx: Vec<usize> = (0..cohorts.len()).filter(|&i| cohorts[i].nfc == g).collect();
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = idx
            .iter()
            .map(|&i| (cohorts[i].pre_accuracy(), cohorts[i].post_accuracy()))
            .collect();
        for (i, v) in idx.into_iter().zip(adjusted_means(&pairs)) {
            adjusted[i] = v;
        }
    }
    cohorts
        .iter()
        .zip(adjusted)
        .map(|(c, adjusted_post)| {
            let mut rng = rng_for(master_seed, &format!("bootstrap/{}/{}", c.condition, c.nfc), 0);
            let over = c.overreliance(config.convention);
            Ok(ConditionResult {
                condition: c.condition.clone(),
                nfc: c.nfc,
                n: c.episodes.len(),
                immediate_accuracy: bootstrap_mean(&c.immediate_accuracy(), config.resamples, &mut rng)?,
                post_accuracy: bootstrap_mean(&c.post_accuracy(), config.resamples, &mut rng)?,
                pre_accuracy: bootstrap_mean(&c.pre_accuracy(), config.resamples, &mut rng)?,
                overreliance: if over.is_empty() {
                    None
                } else {
                    Some(bootstrap_mean(&over, config.resamples, &mut rng)?)
                },
                overreliance_n: over.len(),
                adjusted_post,
            })
        })
        .collect()
}

/// Simulate and summarize every condition for both NFC groups.
pub fn run_evaluation(
    model: &BehaviorModel,
    design_id: DesignId,
    conditions: &[Condition],
    n_per_condition_per_group: usize,
    master_seed: u64,
    config: &EvalConfig,
) -> Result<Vec<ConditionResult>, HarnessError> {
    let cohorts = simulate_conditions(model, design_id, conditions, n_per_condition_per_group, master_seed)?;
    summarize(&cohorts, config, master_seed)
}

/// Difference in mean immediate accuracy `a − b` with a bootstrap interval.
pub fn accuracy_contrast(a: &Cohort, b: &Cohort, resamples: usize, seed: u64) -> Result<Estimate, HarnessError> {
    let mut rng = rng_for(seed, &format!("contrast/{}/{}/{}", a.condition, b.condition, a.nfc), 0);
    Ok(bootstrap_mean_difference(
        &a.immediate_accuracy(),
        &b.immediate_accuracy(),
        resamples,
        &mut rng,
    )?)
}

// ── Output ──────────────────────────────────────────────────────────────

pub const TSV_COLUMNS: [&str; 16] = [
    "condition",
    "nfc",
    "n",
    "immediate_accuracy",
    "immediate_accuracy_ci_low",
    "immediate_accuracy_ci_high",
    "post_accuracy",
    "post_accuracy_ci_low",
    "post_accuracy_ci_high",
    "pre_accuracy",
    "pre_accuracy_ci_low",
    "pre_accuracy_ci_high",
    "overreliance",
    "overreliance_ci_low",
    "overreliance_ci_high",
    "adjusted_post",
];

/// One header line plus one row per result; undefined overreliance is
/// written as `NA`.
pub fn results_to_tsv(results: &[ConditionResult]) -> String {
    let mut out = TSV_COLUMNS.join("\t");
    out.push('\n');
    let est = |e: &Estimate| format!("{:.6}\t{:.6}\t{:.6}", e.mean, e.ci_low, e.ci_high);
    for r in results {
        let over = r.overreliance.as_ref().map_or("NA\tNA\tNA".to_string(), est);
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.6}",
            r.condition,
            r.nfc,
            r.n,
            est(&r.immediate_accuracy),
            est(&r.post_accuracy),
            est(&r.pre_accuracy),
            over,
            r.adjusted_post
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{Concept, Level, State};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn baselines() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for s in State::all() {
            let sxai = make_baseline_policy(BaselineKind::Sxai);
            assert_eq!(sxai.select(&s, None, &mut rng), Action::RecommendationAndExplanation);
        }
        let random = make_baseline_policy(BaselineKind::Random);
        let s = State {
            nfc: NfcGroup::Low,
            concept: Concept::Goal,
            ai_correct: true,
            concept_knowledge: Level::Low,
            task_knowledge: Level::Low,
        };
        let mut counts = [0usize; 4];
        for _ in 0..10_000 {
            counts[random.select(&s, None, &mut rng).index()] += 1;
        }
        // Goodness of fit against uniform; 11.345 is the 0.99 quantile for df 3.
        let stat: f64 = counts.iter().map(|&c| (c as f64 - 2500.0).powi(2) / 2500.0).sum();
        assert!(stat < 11.345, "{counts:?}");
        assert_eq!("no_ai".parse::<BaselineKind>().unwrap(), BaselineKind::NoAi);
        assert!("nope".parse::<BaselineKind>().is_err());
    }

    #[test]
    fn no_ai_accuracy_matches_closed_form() {
        let m = BehaviorModel::default();
        let r = run_evaluation(
            &m,
            DesignId::Eval1,
            &[Condition::baseline(BaselineKind::NoAi)],
            400,
            3,
            &EvalConfig {
                resamples: 200,
                ..Default::default()
            },
        )
        .unwrap();
        for row in &r {
            let p = m.group(row.nfc).p_know0.goal;
            let expected = p * m.p_correct_known + (1.0 - p) * m.p_correct_unknown;
            // 21 Bernoulli answers per participant, clustered by concept.
            assert!((row.immediate_accuracy.mean - expected).abs() < 0.02, "{row:?}");
            assert!(row.overreliance.is_none());
        }
    }

    #[test]
    fn results_depend_on_label_not_order() {
        let m = BehaviorModel::default();
        let cfg = EvalConfig {
            resamples: 50,
            ..Default::default()
        };
        let a = Condition::baseline(BaselineKind::Sxai);
        let b = Condition::baseline(BaselineKind::Random);
        let ab = run_evaluation(&m, DesignId::Eval2, &[a.clone(), b.clone()], 10, 1, &cfg).unwrap();
        let ba = run_evaluation(&m, DesignId::Eval2, &[b, a.clone()], 10, 1, &cfg).unwrap();
        let find = |rs: &[ConditionResult], l: &str, g| rs.iter().find(|r| r.condition == l && r.nfc == g).cloned();
        for g in NfcGroup::ALL {
            let (x, y) = (find(&ab, "sxai", g).unwrap(), find(&ba, "sxai", g).unwrap());
            assert_eq!(x.immediate_accuracy, y.immediate_accuracy);
        }
        let dup = run_evaluation(&m, DesignId::Eval2, &[a.clone(), a], 10, 1, &cfg).unwrap();
        assert_eq!(dup[0], dup[2]);
        for r in &ab {
            for e in [r.immediate_accuracy, r.post_accuracy, r.pre_accuracy] {
                assert!(0.0 <= e.ci_low && e.ci_low <= e.mean && e.mean <= e.ci_high && e.ci_high <= 1.0);
            }
        }
        let tsv = results_to_tsv(&ab);
        assert_eq!(tsv.lines().count(), 5);
        assert!(tsv.lines().all(|l| l.split('\t').count() == TSV_COLUMNS.len()));
    }

    #[test]
    fn rejects_tiny_cohorts_and_data_collection() {
        let m = BehaviorModel::default();
        let c = [Condition::baseline(BaselineKind::Sxai)];
        assert!(matches!(
            run_evaluation(&m, DesignId::Eval1, &c, 1, 0, &EvalConfig::default()),
            Err(HarnessError::TooFewParticipants(1))
        ));
        assert!(matches!(
            run_evaluation(&m, DesignId::DataCollection, &c, 5, 0, &EvalConfig::default()),
            Err(HarnessError::NotAnEvaluationDesign(_))
        ));
    }
}
