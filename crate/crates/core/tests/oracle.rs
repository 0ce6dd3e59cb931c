mod common;

use modex::algebra::{enumerate_models, project_models, vocabulary_of};
use modex::engines::{solve, EngineConfig, EngineKind, Restart};
use modex::lattice::PredSet;
use modex::propagators::Strategy;
use rand::Rng;

#[test]
fn engines_agree_with_enumeration() {
    let mut rng = common::rng(7);
    for round in 0..120 {
        let inst = common::random_instance(&mut rng);
        let want = enumerate_models(&inst.expr, &inst.interp, &inst.input).unwrap();
        for kind in EngineKind::ALL {
            for strategy in [Strategy::Checker, Strategy::Best] {
                let mut cfg = EngineConfig::new(kind);
                cfg.check = round % 4 == 0;
                let got = solve(&inst.expr, &inst.interp, &inst.input, strategy, &cfg).unwrap();
                assert_eq!(got.models, want, "round {round} {kind} {strategy:?} on {}", inst.expr);
                assert!(got.audit.violations.is_empty(), "round {round} {kind} {strategy:?}: {:?}", got.audit.violations);
            }
        }
    }
}

#[test]
fn restarts_do_not_change_the_model_set() {
    let mut rng = common::rng(11);
    for round in 0..60 {
        let inst = common::random_instance(&mut rng);
        let want = enumerate_models(&inst.expr, &inst.interp, &inst.input).unwrap();
        for restart in [Restart::Conflict, Restart::Luby(2)] {
            let mut cfg = EngineConfig::new(EngineKind::Cdl);
            cfg.restart = restart;
            let got = solve(&inst.expr, &inst.interp, &inst.input, Strategy::Best, &cfg).unwrap();
            assert_eq!(got.models, want, "round {round} {restart:?} on {}", inst.expr);
        }
    }
}

#[test]
fn projected_output_matches_projected_oracle() {
    let mut rng = common::rng(13);
    for round in 0..60 {
        let inst = common::random_instance(&mut rng);
        let voc = vocabulary_of(&inst.expr, &inst.interp).unwrap();
        let onto: PredSet = voc.iter().copied().filter(|_| rng.gen_bool(0.5)).collect();
        let want = project_models(&enumerate_models(&inst.expr, &inst.interp, &inst.input).unwrap(), &onto);
        for kind in EngineKind::ALL {
            let mut cfg = EngineConfig::new(kind);
            cfg.project_onto = Some(onto.clone());
            let got = solve(&inst.expr, &inst.interp, &inst.input, Strategy::Best, &cfg).unwrap();
            assert_eq!(got.models, want, "round {round} {kind} onto {onto:?} for {}", inst.expr);
        }
    }
}

#[test]
fn first_k_is_a_subset_of_all_models() {
    let mut rng = common::rng(17);
    for round in 0..40 {
        let inst = common::random_instance(&mut rng);
        let all = enumerate_models(&inst.expr, &inst.interp, &inst.input).unwrap();
        let k = rng.gen_range(1..=3);
        for kind in EngineKind::ALL {
            let mut cfg = EngineConfig::new(kind);
            cfg.limit = Some(k);
            let got = solve(&inst.expr, &inst.interp, &inst.input, Strategy::Best, &cfg).unwrap();
            assert_eq!(got.models.len(), all.len().min(k), "round {round} {kind}");
            assert!(got.models.iter().all(|m| all.contains(m)), "round {round} {kind}");
        }
    }
}
