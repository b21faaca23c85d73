//! `adaptrl analyze` subcommands. Reports go to `--out` (with a manifest)
//! or to stdout.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use adaptrl_core::analysis::{
    chi_squared, input_digest, metric_immediate_accuracy, metric_learning, metric_overreliance, nfc_distributions,
    pearson_r_bootstrap, policy_action_distribution, randomization_test, ActionDistribution, OverrelianceConvention,
    PValueRule, RandTestConfig,
};
use adaptrl_core::behavior::BehaviorModel;
use adaptrl_core::design::Design;
use adaptrl_core::episode::Episode;
use adaptrl_core::harness::{accuracy_contrast, results_to_tsv, simulate_conditions, summarize, Condition, EvalConfig};
use adaptrl_core::mdp::{Action, NfcGroup, State};
use adaptrl_core::qlearning::TrainConfig;
use adaptrl_core::seeds::rng_for;
use serde_json::json;

use crate::commands::{load_episodes, load_model, load_policy, parse_action, parse_design, resolve_policy, resolve_seed, reward_spec, write_output};
use crate::manifest::Recorder;
use crate::{
    input, internal, AnalyzeCommand, Chi2Args, CliError, CorrArgs, DistArgs, EvaluateArgs, GroupArg, MetricArg,
    RandtestArgs, RuleArg,
};

pub fn run(cmd: &AnalyzeCommand) -> Result<(), CliError> {
    match cmd {
        AnalyzeCommand::Dist(a) => dist(a),
        AnalyzeCommand::Chi2(a) => chi2(a),
        AnalyzeCommand::Randtest(a) => randtest(a),
        AnalyzeCommand::Corr(a) => corr(a),
        AnalyzeCommand::Evaluate(a) => evaluate(a),
    }
}

/// Write a report to `out` with a manifest, or print it.
fn emit(report: &str, out: Option<&Path>, rec: Recorder, settings: serde_json::Value) -> Result<(), CliError> {
    match out {
        Some(path) => {
            write_output(path, report.as_bytes(), &rec)?;
            rec.finish(settings, &[path])?;
        }
        None => print!("{report}"),
    }
    Ok(())
}

fn to_json(v: &impl serde::Serialize) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(v).map_err(internal)?;
    s.push('\n');
    Ok(s)
}

// ── dist / chi2 ─────────────────────────────────────────────────────────

/// State subsets reported by `dist`.
const SUBSETS: [(&str, Option<NfcGroup>, Option<bool>); 9] = [
    ("all", None, None),
    ("low", Some(NfcGroup::Low), None),
    ("high", Some(NfcGroup::High), None),
    ("ai_correct", None, Some(true)),
    ("ai_incorrect", None, Some(false)),
    ("low_ai_correct", Some(NfcGroup::Low), Some(true)),
    ("low_ai_incorrect", Some(NfcGroup::Low), Some(false)),
    ("high_ai_correct", Some(NfcGroup::High), Some(true)),
    ("high_ai_incorrect", Some(NfcGroup::High), Some(false)),
];

pub fn distribution_table(policy: &adaptrl_core::policy::Policy) -> String {
    let mut out = String::from("subset");
    for a in Action::ALL {
        let _ = write!(out, "\t{a}");
    }
    out.push_str("\tstates\n");
    for (name, nfc, ai) in SUBSETS {
        let d: ActionDistribution = policy_action_distribution(policy, |s: &State| {
            nfc.is_none_or(|g| s.nfc == g) && ai.is_none_or(|c| s.ai_correct == c)
        });
        out.push_str(name);
        for c in d.counts {
            let _ = write!(out, "\t{c}");
        }
        let _ = writeln!(out, "\t{}", d.total_states);
    }
    out
}

fn dist(a: &DistArgs) -> Result<(), CliError> {
    let mut rec = Recorder::start("analyze dist");
    let policy = load_policy(&a.policy, &mut rec)?;
    emit(&distribution_table(&policy), a.out.as_deref(), rec, json!({}))
}

fn chi2(a: &Chi2Args) -> Result<(), CliError> {
    let mut rec = Recorder::start("analyze chi2");
    let policy = load_policy(&a.policy, &mut rec)?;
    let (low, high) = nfc_distributions(&policy);
    let c = chi_squared(&low, &high).map_err(input)?;
    let report = to_json(&json!({
        "statistic": c.statistic,
        "df": c.df,
        "low": low,
        "high": high,
    }))?;
    emit(&report, a.out.as_deref(), rec, json!({}))
}

// ── randtest ────────────────────────────────────────────────────────────

fn randtest(a: &RandtestArgs) -> Result<(), CliError> {
    let mut rec = Recorder::start("analyze randtest");
    let spec = reward_spec(&a.objective)?;
    let fallback = parse_action(&a.fallback)?;
    let episodes = load_episodes(&a.episodes, &mut rec)?;
    let seed = resolve_seed(a.seed, &mut rec, "permutation");
    let config = RandTestConfig {
        resamples: a.resamples,
        seed,
        train: TrainConfig {
            sweeps: a.sweeps,
            ..TrainConfig::default()
        },
        min_visits: a.min_visits,
        fallback,
        rule: match a.rule {
            RuleArg::Strict => PValueRule::Strict,
            RuleArg::Inclusive => PValueRule::Inclusive,
            RuleArg::Smoothed => PValueRule::Smoothed,
        },
    };
    let result = randomization_test(&episodes, &spec, &config).map_err(input)?;
    eprintln!(
        "chi2 = {:.4} (df {}), p = {:.4} ({:?}), {} of {} null refits excluded",
        result.chi2_actual, result.df, result.p_value, result.rule, result.excluded, a.resamples
    );
    let report = to_json(&json!({
        "objective": spec,
        "input_digest": input_digest(&episodes).map_err(internal)?,
        "config": config,
        "result": result,
    }))?;
    emit(&report, a.out.as_deref(), rec, json!({ "objective": spec, "config": config }))
}

// ── corr ────────────────────────────────────────────────────────────────

fn metric(e: &Episode, m: MetricArg, convention: OverrelianceConvention) -> Option<f64> {
    match m {
        MetricArg::NfcScore => Some(e.nfc_score),
        MetricArg::Immediate => Some(metric_immediate_accuracy(e)),
        MetricArg::Pre => Some(metric_learning(e).pre),
        MetricArg::Post => Some(metric_learning(e).post),
        MetricArg::Learning => {
            let l = metric_learning(e);
            Some(l.post - l.pre)
        }
        MetricArg::Overreliance => metric_overreliance(e, convention),
    }
}

fn corr(a: &CorrArgs) -> Result<(), CliError> {
    let mut rec = Recorder::start("analyze corr");
    let episodes = load_episodes(&a.episodes, &mut rec)?;
    let seed = resolve_seed(a.seed, &mut rec, "bootstrap");
    let convention = if a.revealed_only {
        OverrelianceConvention::RevealedOnly
    } else {
        OverrelianceConvention::Shown
    };
    let (xs, ys): (Vec<f64>, Vec<f64>) = episodes
        .iter()
        .filter(|e| match a.group {
            GroupArg::All => true,
            GroupArg::Low => e.nfc_group == NfcGroup::Low,
            GroupArg::High => e.nfc_group == NfcGroup::High,
        })
        .filter_map(|e| Some((metric(e, a.x, convention)?, metric(e, a.y, convention)?)))
        .unzip();
    let c = pearson_r_bootstrap(&xs, &ys, a.resamples, &mut rng_for(seed, "corr", 0)).map_err(input)?;
    let settings = json!({
        "x": format!("{:?}", a.x),
        "y": format!("{:?}", a.y),
        "group": format!("{:?}", a.group),
        "convention": convention,
        "resamples": a.resamples,
        "seed": seed,
    });
    let report = to_json(&json!({ "n": xs.len(), "correlation": c, "settings": settings }))?;
    emit(&report, a.out.as_deref(), rec, settings)
}

// ── evaluate ────────────────────────────────────────────────────────────

/// `label=spec` or bare `spec`.
fn parse_condition(raw: &str, rec: &mut Recorder) -> Result<Condition, CliError> {
    let (label, spec) = match raw.split_once('=') {
        Some((l, s)) => (l.to_string(), s),
        None => {
            let label = Path::new(raw)
                .file_stem()
                .map_or(raw.to_string(), |s| s.to_string_lossy().into_owned());
            (label, raw)
        }
    };
    if label.is_empty() {
        return Err(CliError::Input(format!("condition {raw:?} has an empty label")));
    }
    Ok(Condition {
        label,
        policy: resolve_policy(spec, rec)?,
    })
}

fn evaluate(a: &EvaluateArgs) -> Result<(), CliError> {
    let mut rec = Recorder::start("analyze evaluate");
    let design_id = parse_design(&a.design)?;
    let model: BehaviorModel = load_model(a.model.as_deref(), &mut rec)?;
    let conditions = a
        .conditions
        .iter()
        .map(|c| parse_condition(c, &mut rec))
        .collect::<Result<Vec<_>, _>>()?;
    let mut labels: Vec<&str> = conditions.iter().map(|c| c.label.as_str()).collect();
    labels.sort();
    if labels.windows(2).any(|w| w[0] == w[1]) {
        return Err(CliError::Input("condition labels must be unique".into()));
    }
    if let Some(r) = &a.reference {
        if !labels.contains(&r.as_str()) {
            return Err(CliError::Input(format!("reference {r:?} is not a condition")));
        }
    }
    let seed = resolve_seed(a.seed, &mut rec, "master");
    let config = EvalConfig {
        resamples: a.resamples,
        convention: if a.revealed_only {
            OverrelianceConvention::RevealedOnly
        } else {
            OverrelianceConvention::Shown
        },
    };

    let cohorts = simulate_conditions(&model, design_id, &conditions, a.n, seed).map_err(input)?;
    let results = summarize(&cohorts, &config, seed).map_err(input)?;
    write_output(&a.out, results_to_tsv(&results).as_bytes(), &rec)?;

    let mut outputs: Vec<PathBuf> = vec![a.out.clone()];
    if let Some(reference) = &a.reference {
        let mut table = String::from("condition\treference\tnfc\tdiff_mean\tdiff_ci_low\tdiff_ci_high\n");
        for base in cohorts.iter().filter(|c| &c.condition == reference) {
            for other in cohorts.iter().filter(|c| c.nfc == base.nfc && &c.condition != reference) {
                let d = accuracy_contrast(base, other, a.resamples, seed).map_err(input)?;
                let _ = writeln!(
                    table,
                    "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}",
                    other.condition, reference, base.nfc, d.mean, d.ci_low, d.ci_high
                );
            }
        }
        let path = contrasts_path(&a.out);
        write_output(&path, table.as_bytes(), &rec)?;
        outputs.push(path);
    }
    let out_refs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    rec.finish(
        json!({
            "design": design_id,
            "conditions": a.conditions,
            "model": model,
            "n": a.n,
            "resamples": a.resamples,
            "convention": config.convention,
            "reference": a.reference,
            "seed": seed,
            "design_questions": Design::new(design_id).total_questions(),
        }),
        &out_refs,
    )?;
    println!("wrote {} condition rows to {}", results.len(), a.out.display());
    Ok(())
}

/// `results.tsv` → `results.contrasts.tsv`.
pub fn contrasts_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map_or_else(|| "results".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}.contrasts.tsv"))
}
