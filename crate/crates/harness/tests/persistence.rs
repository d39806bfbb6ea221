mod common;

use common::bars;
use harness::fsm::{encoding_from_model, Agent};
use harness::{mnist, trial_rng};
use modeller::env::{EnvConfig, FsmTable, SmrEnv, Subtype};
use modeller::{snapshot, LearningConfig};

/// Train an agent, save its model to disk, reload it in a fresh agent with
/// the same rng, and run both against clones of the same environment.
#[test]
fn fsm_model_from_disk_continues_like_the_original() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    let mut env =
        SmrEnv::new(FsmTable::builtin(), EnvConfig { subtype: Subtype::Complete, random_variant: false, seed: 21 });
    let mut agent = Agent::new(LearningConfig::default(), false, trial_rng(21, 0, 1));
    for _ in 0..1500 {
        agent.step(&mut env, None).unwrap();
    }
    for _ in 0..200 {
        agent.step(&mut env, Some(0.1)).unwrap();
    }
    snapshot::save_model(&path, &agent.model).unwrap();

    let model = snapshot::load_model(&path).unwrap();
    let enc = encoding_from_model(&model).unwrap();
    assert_eq!(enc, agent.enc);
    let mut copy = Agent::with_model(model, enc, agent.rng.clone());
    let mut env2 = env.clone();
    for i in 0..100 {
        let a = agent.step(&mut env, Some(0.1)).unwrap();
        let b = copy.step(&mut env2, Some(0.1)).unwrap();
        assert_eq!((a.episode_done, a.reset), (b.episode_done, b.reset), "step {i}");
        assert_eq!(env.cells, env2.cells, "step {i}");
    }
    assert_eq!(
        snapshot::to_document("model", &agent.model).unwrap(),
        snapshot::to_document("model", &copy.model).unwrap()
    );
}

#[test]
fn mnr_model_round_trips_and_re_exports_identically() {
    let set = bars(6);
    let mut cfg = harness::ExperimentConfig { seed: 3, trials: 1, ..Default::default() };
    cfg.mnist.n_sample = Some(3);
    cfg.mnist.test_size = Some(2);
    cfg.mnist.cycles = 2;
    let run = mnist::run_on(&cfg, &set, &set).unwrap();
    let model = &run.models[0];
    assert!(!model.is_empty());

    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    mnist::save_mnr(&a, model).unwrap();
    let back = mnist::load_mnr(&a).unwrap();
    assert_eq!(&back, model);
    mnist::save_mnr(&b, &back).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn wrong_document_kind_is_refused() {
    let set = bars(4);
    let mut cfg = harness::ExperimentConfig { seed: 3, trials: 1, ..Default::default() };
    cfg.mnist.n_sample = Some(2);
    cfg.mnist.test_size = Some(1);
    cfg.mnist.cycles = 1;
    let run = mnist::run_on(&cfg, &set, &set).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.json");
    mnist::save_mnr(&p, &run.models[0]).unwrap();
    assert!(snapshot::load_model(&p).is_err());
}
