//! simulate, train, validate, content and serve, plus helpers shared with
//! the analyze subcommands.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use adaptrl_core::behavior::{generate_cohort, BehaviorModel};
use adaptrl_core::content::{generate_content_pack, ContentPack};
use adaptrl_core::design::{Design, DesignId};
use adaptrl_core::episode::{episodes_to_bytes, load_episodes_path, validate_episode, Episode};
use adaptrl_core::harness::{make_baseline_policy, BaselineKind};
use adaptrl_core::mdp::{Action, RewardSpec};
use adaptrl_core::policy::{AssistancePolicy, Policy};
use adaptrl_core::qlearning::{extract_policy, train as train_q, TrainConfig};
use adaptrl_server::{listen_addr, serve as serve_http, AppState, ServiceConfig};
use rand::Rng;
use serde_json::json;

use crate::manifest::Recorder;
use crate::{input, internal, CliError, ContentArgs, ObjectiveArg, ObjectiveArgs, ServeArgs, SimulateArgs, TrainArgs, ValidateArgs};

// ── Helpers ─────────────────────────────────────────────────────────────

/// The given seed, or a fresh one announced on stderr.
pub fn resolve_seed(seed: Option<u64>, rec: &mut Recorder, name: &str) -> u64 {
    let s = seed.unwrap_or_else(|| {
        let s = rand::rng().random();
        eprintln!("{name} seed: {s}");
        s
    });
    rec.seed(name, s);
    s
}

pub fn parse_design(s: &str) -> Result<DesignId, CliError> {
    s.parse().map_err(input)
}

pub fn parse_action(s: &str) -> Result<Action, CliError> {
    s.parse().map_err(input)
}

pub fn load_model(path: Option<&Path>, rec: &mut Recorder) -> Result<BehaviorModel, CliError> {
    match path {
        Some(p) => {
            let m = BehaviorModel::load(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
            rec.input(p);
            Ok(m)
        }
        None => Ok(BehaviorModel::default()),
    }
}

/// Load an episode file, refusing files with unreadable lines.
pub fn load_episodes(path: &Path, rec: &mut Recorder) -> Result<Vec<Episode>, CliError> {
    let report = load_episodes_path(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    if let Some(d) = report.diagnostics.first() {
        return Err(CliError::Input(format!(
            "{}: {d} ({} bad lines)",
            path.display(),
            report.diagnostics.len()
        )));
    }
    if report.episodes.is_empty() {
        return Err(CliError::Input(format!("{}: no episodes", path.display())));
    }
    rec.input(path);
    Ok(report.episodes)
}

pub fn load_policy(path: &Path, rec: &mut Recorder) -> Result<Policy, CliError> {
    let p = Policy::load(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    p.validate().map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    rec.input(path);
    Ok(p)
}

/// `exploratory`, a baseline name, or a policy file.
pub fn resolve_policy(spec: &str, rec: &mut Recorder) -> Result<AssistancePolicy, CliError> {
    if spec == "exploratory" {
        return Ok(AssistancePolicy::Exploratory);
    }
    if let Ok(kind) = spec.parse::<BaselineKind>() {
        return Ok(make_baseline_policy(kind));
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(CliError::Input(format!(
            "{spec:?} is neither exploratory, a baseline, nor an existing policy file"
        )));
    }
    Ok(AssistancePolicy::Table(load_policy(path, rec)?))
}

pub fn reward_spec(o: &ObjectiveArgs) -> Result<RewardSpec, CliError> {
    let preset = |spec: RewardSpec| {
        if o.lambda.is_some() || o.gamma.is_some() {
            Err(CliError::Input("--lambda/--gamma need --objective custom".into()))
        } else {
            Ok(spec)
        }
    };
    match o.objective {
        ObjectiveArg::Accuracy => preset(RewardSpec::accuracy()),
        ObjectiveArg::Learning => preset(RewardSpec::learning()),
        ObjectiveArg::Combined => preset(RewardSpec::combined()),
        ObjectiveArg::Custom => {
            let (Some(l), Some(g)) = (o.lambda, o.gamma) else {
                return Err(CliError::Input("--objective custom needs --lambda and --gamma".into()));
            };
            RewardSpec::custom(l, g).map_err(input)
        }
    }
}

pub fn write_output(path: &Path, bytes: &[u8], rec: &Recorder) -> Result<(), CliError> {
    rec.check_output(path)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Internal(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))
}

// ── Commands ────────────────────────────────────────────────────────────

pub fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let mut rec = Recorder::start("simulate");
    let design_id = parse_design(&a.design)?;
    let model = load_model(a.model.as_deref(), &mut rec)?;
    let policy = resolve_policy(&a.policy, &mut rec)?;
    let seed = resolve_seed(a.seed, &mut rec, "master");
    let design = Design::new(design_id);
    let episodes = generate_cohort(&model, &design, &policy, a.n, a.low_fraction, seed).map_err(input)?;
    write_output(&a.out, &episodes_to_bytes(&episodes).map_err(internal)?, &rec)?;
    rec.finish(
        json!({
            "design": design_id,
            "policy": a.policy,
            "model": model,
            "n": a.n,
            "low_fraction": a.low_fraction,
            "seed": seed,
        }),
        &[&a.out],
    )?;
    println!("wrote {} episodes to {}", episodes.len(), a.out.display());
    Ok(())
}

pub fn train(a: &TrainArgs) -> Result<(), CliError> {
    let mut rec = Recorder::start("train");
    let spec = reward_spec(&a.objective)?;
    let fallback = parse_action(&a.fallback)?;
    let episodes = load_episodes(&a.episodes, &mut rec)?;
    let seed = if a.shuffle {
        Some(resolve_seed(a.seed, &mut rec, "shuffle"))
    } else {
        None
    };
    let config = TrainConfig {
        sweeps: a.sweeps,
        seed,
        shuffle: a.shuffle,
    };
    let q = train_q(&episodes, &spec, &config).map_err(input)?;
    let policy = extract_policy(&q, a.min_visits, fallback);
    write_output(&a.out, policy.to_json().map_err(internal)?.as_bytes(), &rec)?;
    rec.finish(
        json!({
            "objective": spec,
            "lambda": spec.lambda,
            "gamma": spec.gamma,
            "sweeps": a.sweeps,
            "min_visits": a.min_visits,
            "fallback": fallback,
            "shuffle": a.shuffle,
            "seed": seed,
        }),
        &[&a.out],
    )?;
    println!(
        "trained {} (lambda {}, gamma {}) on {} episodes; {} fallback states",
        spec.objective.as_str(),
        spec.lambda,
        spec.gamma,
        episodes.len(),
        policy.fallback_states().len()
    );
    Ok(())
}

pub fn validate(a: &ValidateArgs) -> Result<(), CliError> {
    if a.episodes.is_none() && a.policy.is_none() && a.pack.is_none() {
        return Err(CliError::Input("nothing to validate: pass --episodes, --policy or --pack".into()));
    }
    let mut problems = 0usize;
    if let Some(path) = &a.episodes {
        let report = load_episodes_path(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        for d in &report.diagnostics {
            println!("{}: {d}", path.display());
        }
        problems += report.diagnostics.len();
        for e in &report.episodes {
            for v in validate_episode(e, &Design::new(e.design_id)) {
                println!("{}: episode {}: {v}", path.display(), e.participant_id);
                problems += 1;
            }
        }
        println!("{}: {} episodes read", path.display(), report.episodes.len());
    }
    if let Some(path) = &a.policy {
        match Policy::load(path).and_then(|p| p.validate()) {
            Ok(()) => println!("{}: policy ok", path.display()),
            Err(e) => {
                println!("{}: {e}", path.display());
                problems += 1;
            }
        }
    }
    if let Some(path) = &a.pack {
        let need = Design::new(parse_design(&a.design)?).questions_per_concept();
        match ContentPack::load(path).and_then(|p| p.validate(need)) {
            Ok(()) => println!("{}: pack ok for {}", path.display(), a.design),
            Err(e) => {
                println!("{}: {e}", path.display());
                problems += 1;
            }
        }
    }
    if problems > 0 {
        return Err(CliError::Input(format!("{problems} problems found")));
    }
    Ok(())
}

pub fn content(a: &ContentArgs) -> Result<(), CliError> {
    let mut rec = Recorder::start("content");
    let need = Design::new(parse_design(&a.design)?).questions_per_concept();
    let seed = resolve_seed(a.seed, &mut rec, "content");
    let pack = generate_content_pack(seed, a.size, need).map_err(input)?;
    write_output(&a.out, pack.to_json().as_bytes(), &rec)?;
    rec.finish(json!({ "seed": seed, "size": a.size, "design": a.design }), &[&a.out])?;
    println!("wrote {} vignettes to {}", pack.vignettes.len(), a.out.display());
    Ok(())
}

pub fn serve(a: &ServeArgs) -> Result<(), CliError> {
    let cfg = ServiceConfig::load(&a.config).map_err(input)?;
    let app = Arc::new(AppState::new(&cfg).map_err(input)?);
    let addr = listen_addr().map_err(input)?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(internal)?;
    runtime.block_on(serve_http(app, addr)).map_err(internal)
}
