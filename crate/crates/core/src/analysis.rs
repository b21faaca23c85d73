//! Outcome metrics, policy comparisons, and the statistics used to report
//! them.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::episode::{Block, Episode};
use crate::mdp::{Action, NfcGroup, RewardSpec, State, NUM_ACTIONS, NUM_STATES};
use crate::policy::Policy;
use crate::qlearning::{dataset_digest, extract_policy, indexed_transitions, train_indexed, IndexedTransition, TrainConfig, TrainError};
use crate::seeds::rng_for;

pub const DEFAULT_RESAMPLES: usize = 1000;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("chi-squared inapplicable: column {0} is empty in both rows")]
    ZeroColumn(usize),
    #[error("chi-squared inapplicable: a distribution covers no states")]
    ZeroRow,
    #[error("need at least {need} observations, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("zero variance")]
    ZeroVariance,
    #[error("resample count must be at least 1")]
    NoResamples,
}

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("randomization test needs episodes from both NFC groups")]
    SingleGroup,
    #[error("observed policy: {0}")]
    Observed(StatsError),
    #[error("every permuted refit was degenerate")]
    AllDegenerate,
}

// ── Per-episode metrics ─────────────────────────────────────────────────

fn mean_correct<'a>(steps: impl Iterator<Item = &'a crate::episode::Step>) -> f64 {
    let (n, k) = steps.fold((0usize, 0usize), |(n, k), s| (n + 1, k + s.answer_correct as usize));
    if n == 0 {
        f64::NAN
    } else {
        k as f64 / n as f64
    }
}

/// Fraction of intervention questions answered correctly.
pub fn metric_immediate_accuracy(e: &Episode) -> f64 {
    mean_correct(e.intervention_steps())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Learning {
    pub post: f64,
    pub pre: f64,
}

pub fn metric_learning(e: &Episode) -> Learning {
    Learning {
        post: mean_correct(e.block_steps(Block::Post)),
        pre: mean_correct(e.block_steps(Block::Pre)),
    }
}

/// Which wrong-AI steps count as having received assistance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverrelianceConvention {
    /// Any action other than no-assistance.
    #[default]
    Shown,
    /// As `Shown`, but on-demand steps count only when opened.
    RevealedOnly,
}

/// Fraction of wrong answers among assisted steps where the AI was wrong.
/// `None` when there are no such steps.
pub fn metric_overreliance(e: &Episode, convention: OverrelianceConvention) -> Option<f64> {
    let (n, wrong) = e
        .intervention_steps()
        .filter(|s| s.ai_correct == Some(false))
        .filter(|s| match (s.action, convention) {
            (None | Some(Action::NoAssistance), _) => false,
            (Some(Action::OnDemand), OverrelianceConvention::RevealedOnly) => s.revealed == Some(true),
            _ => true,
        })
        .fold((0usize, 0usize), |(n, w), s| (n + 1, w + (s.answer_correct == 0) as usize));
    (n > 0).then(|| wrong as f64 / n as f64)
}

// ── Policy distributions and chi-squared ────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionDistribution {
    /// Number of states whose chosen action is each action, in [`Action`] order.
    pub counts: [u64; NUM_ACTIONS],
    pub total_states: u64,
}

impl ActionDistribution {
    pub fn from_counts(counts: [u64; NUM_ACTIONS]) -> Self {
        ActionDistribution {
            counts,
            total_states: counts.iter().sum(),
        }
    }

    pub fn shares(&self) -> [f64; NUM_ACTIONS] {
        self.counts.map(|c| c as f64 / self.total_states.max(1) as f64)
    }
}

pub fn policy_action_distribution(p: &Policy, filter: impl Fn(&State) -> bool) -> ActionDistribution {
    let mut counts = [0u64; NUM_ACTIONS];
    for s in State::all().filter(|s| filter(s)) {
        counts[p.choice(&s).index()] += 1;
    }
    ActionDistribution::from_counts(counts)
}

pub fn nfc_distributions(p: &Policy) -> (ActionDistribution, ActionDistribution) {
    (
        policy_action_distribution(p, |s| s.nfc == NfcGroup::Low),
        policy_action_distribution(p, |s| s.nfc == NfcGroup::High),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquared {
    pub statistic: f64,
    pub df: usize,
}

/// Pearson statistic of the 2×k contingency table with rows `a` and `b`.
pub fn chi_squared_counts(a: &[u64], b: &[u64]) -> Result<ChiSquared, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    let rows = [a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64];
    if rows.contains(&0.0) {
        return Err(StatsError::ZeroRow);
    }
    let total = rows[0] + rows[1];
    let mut statistic = 0.0;
    for j in 0..a.len() {
        let col = (a[j] + b[j]) as f64;
        if col == 0.0 {
            return Err(StatsError::ZeroColumn(j));
        }
        for (r, observed) in rows.iter().zip([a[j], b[j]]) {
            let expected = r * col / total;
            statistic += (observed as f64 - expected).powi(2) / expected;
        }
    }
    Ok(ChiSquared {
        statistic,
        df: a.len() - 1,
    })
}

/// Chi-squared over the four action columns. Errors when some action is
/// chosen in neither distribution.
pub fn chi_squared(a: &ActionDistribution, b: &ActionDistribution) -> Result<ChiSquared, StatsError> {
    chi_squared_counts(&a.counts, &b.counts)
}

// ── Randomization test ──────────────────────────────────────────────────

/// How the observed statistic is located in the null distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueRule {
    /// Fraction of null statistics strictly greater than the observed one.
    #[default]
    Strict,
    /// Fraction greater than or equal.
    Inclusive,
    /// (1 + #greater-or-equal) / (1 + n).
    Smoothed,
}

pub fn p_value(observed: f64, null: &[f64], rule: PValueRule) -> f64 {
    let n = null.len() as f64;
    let ge = null.iter().filter(|&&x| x >= observed).count() as f64;
    match rule {
        PValueRule::Strict => null.iter().filter(|&&x| x > observed).count() as f64 / n,
        PValueRule::Inclusive => ge / n,
        PValueRule::Smoothed => (ge + 1.0) / (n + 1.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandTestConfig {
    pub resamples: usize,
    pub seed: u64,
    pub train: TrainConfig,
    pub min_visits: u64,
    pub fallback: Action,
    pub rule: PValueRule,
}

impl Default for RandTestConfig {
    fn default() -> Self {
        RandTestConfig {
            resamples: DEFAULT_RESAMPLES,
            seed: 0,
            train: TrainConfig::default(),
            min_visits: 1,
            fallback: Action::NoAssistance,
            rule: PValueRule::Strict,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandTestResult {
    pub chi2_actual: f64,
    pub df: usize,
    /// One entry per resample, in resample order; `None` where the refit
    /// policy left an action unused in both groups.
    pub chi2_null: Vec<Option<f64>>,
    pub excluded: usize,
    pub p_value: f64,
    pub rule: PValueRule,
    pub observed_low: ActionDistribution,
    pub observed_high: ActionDistribution,
}

const HALF: usize = NUM_STATES / 2;

fn relabel(data: &[Vec<IndexedTransition>], groups: &[NfcGroup]) -> Vec<Vec<IndexedTransition>> {
    // The NFC digit is the most significant one in the state encoding.
    data.iter()
        .zip(groups)
        .map(|(ep, g)| {
            let shift = g.index() * HALF;
            ep.iter()
                .map(|t| IndexedTransition {
                    s: t.s % HALF + shift,
                    next: t.next.map(|n| n % HALF + shift),
                    ..*t
                })
                .collect()
        })
        .collect()
}

fn refit_chi2(
    data: &[Vec<IndexedTransition>],
    groups: &[NfcGroup],
    objective: &RewardSpec,
    config: &RandTestConfig,
) -> Result<(Result<ChiSquared, StatsError>, ActionDistribution, ActionDistribution), TrainError> {
    let q = train_indexed(&relabel(data, groups), objective, &config.train, String::new())?;
    let policy = extract_policy(&q, config.min_visits, config.fallback);
    let (low, high) = nfc_distributions(&policy);
    Ok((chi_squared(&low, &high), low, high))
}

/// Compare the Low- and High-NFC halves of a policy trained on `episodes`
/// against policies trained after permuting NFC labels across participants.
/// Refits run on the current rayon pool with per-resample seeds.
pub fn randomization_test(
    episodes: &[Episode],
    objective: &RewardSpec,
    config: &RandTestConfig,
) -> Result<RandTestResult, AnalysisError> {
    if config.resamples == 0 {
        return Err(StatsError::NoResamples.into());
    }
    let groups: Vec<NfcGroup> = episodes.iter().map(|e| e.nfc_group).collect();
    if !NfcGroup::ALL.iter().all(|g| groups.contains(g)) {
        return Err(AnalysisError::SingleGroup);
    }
    objective.validate().map_err(TrainError::from)?;
    let data = indexed_transitions(episodes, objective)?;
    let (observed, observed_low, observed_high) = refit_chi2(&data, &groups, objective, config)?;
    let observed = observed.map_err(AnalysisError::Observed)?;

    let chi2_null = (0..config.resamples)
        .into_par_iter()
        .map(|i| {
            let mut rng: ChaCha8Rng = rng_for(config.seed, "permutation", i as u64);
            let mut shuffled = groups.clone();
            shuffled.shuffle(&mut rng);
            Ok(refit_chi2(&data, &shuffled, objective, config)?.0.ok().map(|c| c.statistic))
        })
        .collect::<Result<Vec<_>, TrainError>>()?;
    let valid: Vec<f64> = chi2_null.iter().flatten().copied().collect();
    if valid.is_empty() {
        return Err(AnalysisError::AllDegenerate);
    }
    Ok(RandTestResult {
        chi2_actual: observed.statistic,
        df: observed.df,
        excluded: chi2_null.len() - valid.len(),
        p_value: p_value(observed.statistic, &valid, config.rule),
        chi2_null,
        rule: config.rule,
        observed_low,
        observed_high,
    })
}

/// Digest of the episodes a randomization test ran on, for reports.
pub fn input_digest(episodes: &[Episode]) -> Result<String, AnalysisError> {
    Ok(dataset_digest(episodes)?)
}

// ── Descriptive statistics ──────────────────────────────────────────────

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with an n−1 denominator.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Estimate {
    pub fn excludes_zero(&self) -> bool {
        self.ci_low > 0.0 || self.ci_high < 0.0
    }
}

fn percentile_ci(mut draws: Vec<f64>, point: f64) -> Estimate {
    draws.sort_by(f64::total_cmp);
    Estimate {
        mean: point,
        ci_low: quantile(&draws, 0.025),
        ci_high: quantile(&draws, 0.975),
    }
}

fn resample_mean<R: Rng + ?Sized>(xs: &[f64], rng: &mut R) -> f64 {
    (0..xs.len()).map(|_| xs[rng.random_range(0..xs.len())]).sum::<f64>() / xs.len() as f64
}

/// Mean with a percentile bootstrap 95% interval.
pub fn bootstrap_mean<R: Rng + ?Sized>(xs: &[f64], resamples: usize, rng: &mut R) -> Result<Estimate, StatsError> {
    if xs.is_empty() {
        return Err(StatsError::TooFew { need: 1, got: 0 });
    }
    if resamples == 0 {
        return Err(StatsError::NoResamples);
    }
    let draws = (0..resamples).map(|_| resample_mean(xs, rng)).collect();
    Ok(percentile_ci(draws, mean(xs)))
}

/// Difference of means `a − b` with an independent-samples percentile
/// bootstrap 95% interval.
pub fn bootstrap_mean_difference<R: Rng + ?Sized>(
    a: &[f64],
    b: &[f64],
    resamples: usize,
    rng: &mut R,
) -> Result<Estimate, StatsError> {
    for xs in [a, b] {
        if xs.is_empty() {
            return Err(StatsError::TooFew { need: 1, got: 0 });
        }
    }
    if resamples == 0 {
        return Err(StatsError::NoResamples);
    }
    let draws = (0..resamples)
        .map(|_| resample_mean(a, rng) - resample_mean(b, rng))
        .collect();
    Ok(percentile_ci(draws, mean(a) - mean(b)))
}

pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(StatsError::TooFew { need: 3, got: x.len() });
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Resamples dropped because one side had zero variance.
    pub degenerate: usize,
}

/// Pearson r with a percentile bootstrap 95% interval over paired resamples.
pub fn pearson_r_bootstrap<R: Rng + ?Sized>(
    x: &[f64],
    y: &[f64],
    resamples: usize,
    rng: &mut R,
) -> Result<Correlation, StatsError> {
    let r = pearson_r(x, y)?;
    if resamples == 0 {
        return Err(StatsError::NoResamples);
    }
    let n = x.len();
    let mut draws = Vec::with_capacity(resamples);
    let (mut bx, mut by) = (vec![0.0; n], vec![0.0; n]);
    for _ in 0..resamples {
        for i in 0..n {
            let j = rng.random_range(0..n);
            bx[i] = x[j];
            by[i] = y[j];
        }
        if let Ok(v) = pearson_r(&bx, &by) {
            draws.push(v);
        }
    }
    let degenerate = resamples - draws.len();
    if draws.is_empty() {
        return Err(StatsError::ZeroVariance);
    }
    let ci = percentile_ci(draws, r);
    Ok(Correlation {
        r,
        ci_low: ci.ci_low,
        ci_high: ci.ci_high,
        degenerate,
    })
}

/// Standardized mean difference with the pooled (n−1) standard deviation.
pub fn cohen_d(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    for xs in [a, b] {
        if xs.len() < 2 {
            return Err(StatsError::TooFew { need: 2, got: xs.len() });
        }
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let pooled = (((na - 1.0) * variance(a) + (nb - 1.0) * variance(b)) / (na + nb - 2.0)).sqrt();
    if pooled == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    Ok((mean(a) - mean(b)) / pooled)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Complementarity {
    pub complementary: bool,
    pub margin: f64,
    pub ci: Estimate,
}

/// Whether team accuracy beats both the human-alone and AI-alone accuracy,
/// judged by the lower end of a bootstrap interval on the team mean.
pub fn complementarity_check<R: Rng + ?Sized>(
    team_accuracy: &[f64],
    human_alone_mean: f64,
    ai_accuracy: f64,
    resamples: usize,
    rng: &mut R,
) -> Result<Complementarity, StatsError> {
    if team_accuracy.len() < 2 {
        return Err(StatsError::TooFew {
            need: 2,
            got: team_accuracy.len(),
        });
    }
    let ci = bootstrap_mean(team_accuracy, resamples, rng)?;
    let bar = human_alone_mean.max(ai_accuracy);
    Ok(Complementarity {
        complementary: ci.ci_low > bar,
        margin: ci.mean - bar,
        ci,
    })
}

/// Covariate-adjusted group means of `post` given `pre`, using the pooled
/// within-group least-squares slope. Each group is `(pre, post)` with equal
/// lengths. Groups with no pre variance contribute nothing to the slope.
pub fn adjusted_means(groups: &[(Vec<f64>, Vec<f64>)]) -> Vec<f64> {
    let all_pre: Vec<f64> = groups.iter().flat_map(|(pre, _)| pre.iter().copied()).collect();
    let grand = mean(&all_pre);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (pre, post) in groups {
        let (mx, my) = (mean(pre), mean(post));
        for (x, y) in pre.iter().zip(post) {
            sxy += (x - mx) * (y - my);
            sxx += (x - mx).powi(2);
        }
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    groups
        .iter()
        .map(|(pre, post)| mean(post) - slope * (mean(pre) - grand))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::DesignId;
    use crate::episode::{Step, SCHEMA_VERSION};
    use crate::mdp::Concept;
    use rand::SeedableRng;

    fn step(index: u32, block: Block, action: Option<Action>, ai: Option<bool>, ok: bool) -> Step {
        Step {
            index,
            block,
            concept: Concept::Goal,
            action,
            ai_correct: ai,
            answer_correct: ok as u8,
            revealed: (action == Some(Action::OnDemand)).then_some(false),
            question_id: format!("q{index}"),
            distal: None,
        }
    }

    fn episode(steps: Vec<Step>) -> Episode {
        Episode {
            schema_version: SCHEMA_VERSION,
            participant_id: "t".into(),
            nfc_score: 10.0,
            nfc_group: NfcGroup::Low,
            design_id: DesignId::Eval1,
            concepts: vec![Concept::Goal],
            seed: None,
            steps,
            exploration_weights: None,
        }
    }

    #[test]
    fn overreliance_conventions() {
        let re = Some(Action::RecommendationAndExplanation);
        let od = Some(Action::OnDemand);
        let e = episode(vec![
            step(0, Block::Intervention, re, Some(false), false),
            step(1, Block::Intervention, re, Some(false), true),
            step(2, Block::Intervention, od, Some(false), false),
            step(3, Block::Intervention, Some(Action::NoAssistance), Some(false), false),
            step(4, Block::Intervention, re, Some(true), false),
        ]);
        assert_eq!(metric_overreliance(&e, OverrelianceConvention::Shown), Some(2.0 / 3.0));
        assert_eq!(metric_overreliance(&e, OverrelianceConvention::RevealedOnly), Some(0.5));
        let none = episode(vec![step(0, Block::Intervention, Some(Action::NoAssistance), Some(false), false)]);
        assert_eq!(metric_overreliance(&none, OverrelianceConvention::Shown), None);
    }

    #[test]
    fn learning_pair_ignores_intervention() {
        let mut steps = Vec::new();
        for (i, ok) in [true, false, true, false, true, false].into_iter().enumerate() {
            steps.push(step(i as u32, Block::Pre, None, None, ok));
        }
        steps.push(step(6, Block::Intervention, Some(Action::NoAssistance), Some(true), false));
        for (i, ok) in [true, true, true, false, false, false].into_iter().enumerate() {
            steps.push(step(7 + i as u32, Block::Post, None, None, ok));
        }
        let e = episode(steps);
        assert_eq!(metric_learning(&e), Learning { post: 0.5, pre: 0.5 });
        assert_eq!(metric_immediate_accuracy(&e), 0.0);
    }

    #[test]
    fn chi_squared_hand_values() {
        let c = chi_squared_counts(&[40, 24], &[24, 40]).unwrap();
        assert!((c.statistic - 8.0).abs() < 1e-9);
        assert_eq!(c.df, 1);
        let a = ActionDistribution::from_counts([40, 24, 0, 0]);
        let b = ActionDistribution::from_counts([24, 40, 0, 0]);
        assert_eq!(chi_squared(&a, &b), Err(StatsError::ZeroColumn(2)));
        let p = ActionDistribution::from_counts([5, 10, 15, 2]);
        let q = ActionDistribution::from_counts([10, 20, 30, 4]);
        assert!(chi_squared(&p, &q).unwrap().statistic.abs() < 1e-12);
        assert_eq!(chi_squared(&p, &ActionDistribution::from_counts([0; 4])), Err(StatsError::ZeroRow));
    }

    #[test]
    fn sxai_distribution() {
        let p = Policy::constant(Action::RecommendationAndExplanation, "sxai");
        let all = policy_action_distribution(&p, |_| true);
        assert_eq!(all.counts, [0, 64, 0, 0]);
        let (low, high) = nfc_distributions(&p);
        assert_eq!(low.total_states, 32);
        assert_eq!(high.total_states, 32);
        assert!(chi_squared(&all, &low).is_err());
    }

    #[test]
    fn p_value_rules() {
        let null = [1.0, 2.0, 3.0, 3.0];
        assert_eq!(p_value(3.0, &null, PValueRule::Strict), 0.0);
        assert_eq!(p_value(3.0, &null, PValueRule::Inclusive), 0.5);
        assert_eq!(p_value(3.0, &null, PValueRule::Smoothed), 0.6);
    }

    #[test]
    fn correlation_and_effect_size() {
        assert!((pearson_r(&[1.0, 2.0, 3.0], &[2.0, 1.0, 3.0]).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(pearson_r(&[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0]), Err(StatsError::ZeroVariance));
        assert_eq!(cohen_d(&[0.0, 2.0], &[1.0, 1.0]).unwrap(), 0.0);
        assert!((cohen_d(&[0.0, 2.0], &[-1.0, 1.0]).unwrap() - 1.0 / 2f64.sqrt()).abs() < 1e-12);
        assert!(cohen_d(&[1.0, 1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn bootstrap_intervals_bracket_the_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs: Vec<f64> = (0..50).map(|i| (i % 7) as f64).collect();
        let est = bootstrap_mean(&xs, 500, &mut rng).unwrap();
        assert!(est.ci_low <= est.mean && est.mean <= est.ci_high);
        let c = pearson_r_bootstrap(&xs, &xs, 200, &mut rng).unwrap();
        assert_eq!((c.r, c.ci_low, c.ci_high), (1.0, 1.0, 1.0));
    }

    #[test]
    fn complementarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = complementarity_check(&[1.0; 10], 0.59, 0.714, 200, &mut rng).unwrap();
        assert!(c.complementary);
        let c = complementarity_check(&[0.6, 0.7, 0.65], 0.59, 0.714, 200, &mut rng).unwrap();
        assert!(!c.complementary);
        assert!(c.margin < 0.0);
    }

    #[test]
    fn adjusted_means_remove_pre_imbalance() {
        // post = pre + group effect exactly; slope 1 recovers the effect.
        let a = (vec![0.0, 1.0, 2.0], vec![1.0, 2.0, 3.0]);
        let b = (vec![2.0, 3.0, 4.0], vec![2.0, 3.0, 4.0]);
        let adj = adjusted_means(&[a, b]);
        assert!((adj[0] - adj[1] - 1.0).abs() < 1e-12);
    }
}
