use modeller::env::*;
use modeller::snapshot::{from_document, to_document};
use modeller::Model;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A saved and reloaded model continues exactly like the original.
#[test]
fn trained_model_round_trip_continues_identically() {
    let mut model = Model::default();
    let enc = SmrEncoding::register(&mut model, false);
    let mut env =
        SmrEnv::new(FsmTable::builtin(), EnvConfig { subtype: Subtype::Complete, random_variant: false, seed: 3 });
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1500 {
        model.process_environment_step(&enc.observe(&env)).unwrap();
        env.step(rng.gen_range(0..N_ACTIONS)).unwrap();
    }
    let text = to_document("model", &model).unwrap();
    let mut copy: Model = from_document("model", &text).unwrap();
    assert_eq!(to_document("model", &copy).unwrap(), text);
    for _ in 0..100 {
        let o = enc.observe(&env);
        let a = model.process_environment_step(&o).unwrap();
        let b = copy.process_environment_step(&o).unwrap();
        assert_eq!(a.states, b.states);
        env.step(rng.gen_range(0..N_ACTIONS)).unwrap();
    }
    assert_eq!(serde_json::to_string(&model).unwrap(), serde_json::to_string(&copy).unwrap());
}
