use modex::algebra::{AtomicModuleDef, Clause, Lit, ModuleBody, ModuleExpr, ModuleInterpretation};
use modex::engines::{solve, EngineConfig, EngineKind};
use modex::lattice::{PartialStructure, Signature};
use modex::propagators::Strategy;

fn golden_problem() -> (ModuleInterpretation, ModuleExpr) {
    let sig = Signature::build(&["a"], &[("p", 0), ("q", 0)]).unwrap();
    let mut it = ModuleInterpretation::new(&sig);
    let c1 = Clause::new([Lit::new(0, false), Lit::new(1, true)]).unwrap();
    let c2 = Clause::new([Lit::new(0, false), Lit::new(1, false)]).unwrap();
    it.insert("M", AtomicModuleDef { voc: sig.all_preds(), body: ModuleBody::Clauses(vec![c1, c2]) }).unwrap();
    (it, ModuleExpr::atomic("M"))
}

#[test]
fn cdl_golden_trace() {
    let (it, e) = golden_problem();
    let cfg = EngineConfig { trace: true, ..EngineConfig::new(EngineKind::Cdl) };
    let r = solve(&e, &it, &PartialStructure::unknown(&it.sig), Strategy::Best, &cfg).unwrap();
    let want = [
        "DECIDE p=t@1",
        "PROP 0 q=t",
        "CONFLICT q",
        "LEARN [-p] backjump=0",
        "PROP 1 p=f",
        "DECIDE q=t@1",
        "MODEL {p=f, q=t}",
        "CONFLICT q",
        "LEARN [p, -q] backjump=0",
        "PROP 2 q=f",
        "MODEL {p=f, q=f}",
        "CONFLICT q",
    ];
    assert_eq!(r.trace, want);
    assert_eq!(r.models.len(), 2);
}
