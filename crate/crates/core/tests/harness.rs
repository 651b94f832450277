use std::fs;

use ids_bandit::harness::{
    aggregate_dir, run_experiment, AlgorithmSpec, CheckpointSpec, ExperimentConfig, InstanceSpec, RunOptions,
    CSV_HEADER,
};
use ids_bandit::ids::GainKind;

#[test]
fn eoo_run_with_assertions() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig {
        instance: InstanceSpec::Eoo {
            epsilon: 0.01,
            noise_std: 0.1f64.sqrt(),
        },
        algorithms: vec![AlgorithmSpec::ids(GainKind::HalfspaceUcb)],
        horizon: 10_000,
        repetitions: 5,
        base_seed: 17,
        checkpoints: CheckpointSpec::default(),
        output_dir: dir.path().to_path_buf(),
    };
    let res = run_experiment(
        &config,
        RunOptions {
            threads: None,
            assert_invariants: true,
        },
    )
    .unwrap();
    assert_eq!(res.failures(), 0, "{:?}", res.manifest.runs);
    for tr in &res.traces {
        let last = tr.checkpoints.last().unwrap();
        assert_eq!(last.t, 10_000);
        assert!(last.s_t + last.exploit_rounds == last.t);
        assert!(last.gamma > 0.0);
    }
}

#[test]
fn foreign_traces_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = CSV_HEADER.join(",");
    text.push('\n');
    for (seed, regrets) in [(1, [1.0, 3.0]), (2, [3.0, 5.0])] {
        for (t, r) in [1u64, 2].iter().zip(regrets) {
            text.push_str(&format!("SOLID,eoo-eps0.01,{seed},{t},{r},0,0,0,1\n"));
        }
    }
    fs::write(dir.path().join("solid.csv"), text).unwrap();
    let summaries = aggregate_dir(dir.path()).unwrap();
    assert_eq!(summaries.len(), 1);
    let p = summaries[0].final_point().unwrap();
    assert_eq!((p.t, p.mean, p.stderr, p.reps), (2, 4.0, 1.0, 2));
    assert!(dir.path().join("aggregate.csv").exists());
}
