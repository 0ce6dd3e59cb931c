mod common;

use modex::algebra::{desugar, enumerate_models, eval_module, ModuleExpr};
use modex::explain::build_explaining;
use modex::lattice::{PartialStructure, TruthValue};
use modex::propagators::{build_propagator, module_of, Strategy as Build};
use proptest::prelude::*;

fn tv() -> impl proptest::strategy::Strategy<Value = TruthValue> {
    (0u8..4).prop_map(TruthValue::from_bits)
}

proptest! {
    #[test]
    fn truth_values_form_a_distributive_lattice(a in tv(), b in tv(), c in tv()) {
        prop_assert_eq!(a.lub(b), b.lub(a));
        prop_assert_eq!(a.glb(b), b.glb(a));
        prop_assert_eq!(a.lub(b).lub(c), a.lub(b.lub(c)));
        prop_assert_eq!(a.glb(b).glb(c), a.glb(b.glb(c)));
        prop_assert_eq!(a.lub(a.glb(b)), a);
        prop_assert_eq!(a.glb(a.lub(b)), a);
        prop_assert_eq!(a.glb(b.lub(c)), a.glb(b).lub(a.glb(c)));
        prop_assert_eq!(a.leq_p(b), a.lub(b) == b);
        prop_assert!(TruthValue::U.leq_p(a) && a.leq_p(TruthValue::I));
    }

    #[test]
    fn structures_inherit_the_lattice_laws(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let inst = common::random_instance(&mut rng);
        let sig = inst.sig();
        let (x, y) = (common::random_any(&mut rng, sig), common::random_any(&mut rng, sig));
        let (j, m) = (x.lub(&y), x.glb(&y));
        prop_assert!(x.le(&j) && y.le(&j) && m.le(&x) && m.le(&y));
        prop_assert_eq!(x.le(&y), j == y);
        let voc = modex::algebra::vocabulary_of(&inst.expr, &inst.interp).unwrap();
        let r = x.restrict(&voc);
        prop_assert!(r.le(&x));
        prop_assert_eq!(r.restrict(&voc), r);
    }

    #[test]
    fn built_propagators_are_monotone_and_inflationary(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let inst = common::random_instance(&mut rng);
        let ps = [
            build_propagator(&inst.expr, &inst.interp, Build::Best).unwrap(),
            build_propagator(&inst.expr, &inst.interp, Build::Checker).unwrap(),
            build_explaining(&inst.expr, &inst.interp).unwrap().p,
        ];
        for _ in 0..8 {
            let (b, b2) = common::random_pair(&mut rng, inst.sig());
            for p in &ps {
                let (pb, pb2) = (p.propagate(&b), p.propagate(&b2));
                prop_assert!(b.le(&pb), "{} at {}", p.key(), b.display_known());
                prop_assert!(pb.le(&pb2), "{} at {} <= {}", p.key(), b.display_known(), b2.display_known());
            }
        }
    }

    /// The two-valued fixpoints of every built propagator are exactly the models.
    #[test]
    fn fixpoints_are_the_models(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let inst = common::random_instance(&mut rng);
        let sig = inst.sig();
        let want = enumerate_models(&inst.expr, &inst.interp, &PartialStructure::unknown(sig)).unwrap();
        for strategy in [Build::Best, Build::Checker] {
            let p = build_propagator(&inst.expr, &inst.interp, strategy).unwrap();
            prop_assert_eq!(module_of(&p, sig).unwrap(), want.clone(), "{:?} {}", strategy, inst.expr);
        }
    }

    #[test]
    fn sugar_preserves_meaning(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let inst = common::random_instance(&mut rng);
        let other = common::random_expr_in(&mut rng, &inst.interp);
        let plus = ModuleExpr::plus(inst.expr.clone(), other.clone());
        let d = desugar(&plus).unwrap();
        prop_assert_eq!(desugar(&d).unwrap(), d.clone());
        for _ in 0..8 {
            let i = common::random_partial(&mut rng, inst.sig(), 1.0);
            let either = eval_module(&inst.expr, &inst.interp, &i).unwrap() || eval_module(&other, &inst.interp, &i).unwrap();
            prop_assert_eq!(eval_module(&d, &inst.interp, &i).unwrap(), either);
            prop_assert_eq!(eval_module(&plus, &inst.interp, &i).unwrap(), either);
        }
    }
}
