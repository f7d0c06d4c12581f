use malaria_policy::env::Formulation;
use malaria_policy::harness::{
    read_policy, run_experiment, write_results, Algorithm, ExperimentConfig, Summary,
};

fn read_csv(path: &std::path::Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path)
        .unwrap()
        .records()
        .map(|r| r.unwrap())
        .collect()
}

#[test]
fn default_run_writes_one_row_per_episode() {
    let config = ExperimentConfig::new(Algorithm::Egreedy, Formulation::ContextFree);
    let results = run_experiment(&config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_results(&results, dir.path()).unwrap();

    let rows = read_csv(&dir.path().join("results.csv"));
    assert_eq!(rows.len(), 20 * 400);
    let evals: Vec<&csv::StringRecord> = rows.iter().filter(|r| &r[5] == "eval").collect();
    assert_eq!(evals.len(), 20);
    assert!(evals.iter().all(|r| &r[3] == "400"));
    assert!(rows
        .iter()
        .all(|r| &r[0] == "egreedy" && &r[1] == "context_free"));

    let summary: Summary =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary.groups.len(), 1);
    let group = &summary.groups[0];
    assert_eq!(group.repeats, 20);
    let csv_mean = evals
        .iter()
        .map(|r| r[4].parse::<f64>().unwrap())
        .sum::<f64>()
        / 20.0;
    assert!((group.eval_mean - csv_mean).abs() < 1e-9);
    assert!(group.eval_sd > 0.0);
}

#[test]
fn policy_round_trips_through_json() {
    let config = ExperimentConfig {
        repeats: 2,
        ..ExperimentConfig::new(Algorithm::GpUcb, Formulation::ContextFree).with_episodes(20)
    };
    let results = run_experiment(&config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_results(&results, dir.path()).unwrap();
    for r in &results {
        let back = read_policy(&dir.path().join(r.policy.file_name())).unwrap();
        assert_eq!(back.greedy_actions, r.policy.greedy_actions);
        assert_eq!(back.algo, r.algo);
        assert_eq!(back.repeat, r.repeat);
    }
}

#[test]
fn repeats_use_consecutive_seeds() {
    let config = ExperimentConfig {
        repeats: 3,
        seed: 10,
        ..ExperimentConfig::new(Algorithm::Reinforce, Formulation::Mdp).with_episodes(15)
    };
    let all = run_experiment(&config).unwrap();
    let single = run_experiment(&ExperimentConfig {
        repeats: 1,
        seed: 12,
        ..config.clone()
    })
    .unwrap();
    assert_eq!(all[2].seed, 12);
    assert_eq!(all[2].train_rewards, single[0].train_rewards);
    assert_eq!(all[2].eval_rewards, single[0].eval_rewards);
}
