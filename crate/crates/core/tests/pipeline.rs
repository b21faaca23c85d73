use adaptrl_core::analysis::{nfc_distributions, randomization_test, RandTestConfig};
use adaptrl_core::behavior::{generate_cohort, BehaviorModel};
use adaptrl_core::design::{Design, DesignId};
use adaptrl_core::episode::{load_episodes_path, save_episodes};
use adaptrl_core::harness::{run_evaluation, BaselineKind, Condition, EvalConfig};
use adaptrl_core::mdp::{Action, RewardSpec, NUM_STATES};
use adaptrl_core::policy::{AssistancePolicy, Policy};
use adaptrl_core::qlearning::{extract_policy, train, TrainConfig};

#[test]
fn simulate_save_train_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let model = BehaviorModel::default();
    let episodes = generate_cohort(
        &model,
        &Design::new(DesignId::DataCollection),
        &AssistancePolicy::Exploratory,
        60,
        0.5,
        4,
    )
    .unwrap();

    let path = dir.path().join("episodes.jsonl");
    save_episodes(&episodes, std::fs::File::create(&path).unwrap()).unwrap();
    let report = load_episodes_path(&path).unwrap();
    assert!(report.diagnostics.is_empty());
    assert_eq!(report.episodes, episodes);

    let q = train(&report.episodes, &RewardSpec::combined(), &TrainConfig::default()).unwrap();
    let policy = extract_policy(&q, 1, Action::NoAssistance);
    let policy_path = dir.path().join("policy.json");
    policy.save(&policy_path).unwrap();
    let loaded = Policy::load(&policy_path).unwrap();
    loaded.validate().unwrap();
    assert_eq!(loaded, policy);

    let (low, high) = nfc_distributions(&loaded);
    assert_eq!(low.counts.iter().sum::<u64>() + high.counts.iter().sum::<u64>(), NUM_STATES as u64);

    let conditions = [
        Condition::new("combined", AssistancePolicy::Table(loaded)),
        Condition::baseline(BaselineKind::NoAi),
    ];
    let results = run_evaluation(&model, DesignId::Eval2, &conditions, 10, 1, &EvalConfig::default()).unwrap();
    assert_eq!(results.len(), 4);
}

#[test]
fn randomization_test_is_reproducible() {
    let episodes = generate_cohort(
        &BehaviorModel::default(),
        &Design::new(DesignId::DataCollection),
        &AssistancePolicy::Exploratory,
        40,
        0.5,
        8,
    )
    .unwrap();
    let config = RandTestConfig {
        resamples: 30,
        seed: 2,
        ..Default::default()
    };
    let a = randomization_test(&episodes, &RewardSpec::accuracy(), &config);
    let b = randomization_test(&episodes, &RewardSpec::accuracy(), &config);
    match (a, b) {
        (Ok(a), Ok(b)) => {
            assert_eq!(a, b);
            assert_eq!(a.chi2_null.len(), 30);
            assert_eq!(a.excluded, a.chi2_null.iter().filter(|x| x.is_none()).count());
        }
        (Err(a), Err(b)) => assert_eq!(a.to_string(), b.to_string()),
        _ => panic!("identical inputs gave different outcomes"),
    }
}
