//! Explaining propagators and their combinators.

use std::fmt;
use std::sync::Arc;

use crate::algebra::{
    desugar, entailed_equalities, vocabulary_of, AlgebraError, Builtin, Clause, Lit, ModuleBody, ModuleExpr,
    ModuleInterpretation,
};
use crate::lattice::{AtomId, PartialStructure, PredId, PredSet, Signature, TruthValue};
use crate::propagators::{
    atomic_propagator, bounds_clause, bounds_module_propagator, build_propagator, clause_propagator, collapse,
    complement_checker, disjoin_prop, equality_clauses, equality_propagator, negation_nested, product_prop,
    project_prop, threshold_clauses, top_propagator, Propagator, SolverFn, Strategy,
};

pub enum Explanation {
    Unexplained,
    Explained(ExplainingPropagator),
}

impl Explanation {
    pub fn is_explained(&self) -> bool {
        matches!(self, Explanation::Explained(_))
    }
}

type Explainer = Arc<dyn Fn(&PartialStructure) -> Explanation + Send + Sync>;

/// A propagator with a function yielding simpler propagators that account for its output.
#[derive(Clone)]
pub struct ExplainingPropagator {
    pub p: Propagator,
    c: Explainer,
}

impl fmt::Debug for ExplainingPropagator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Explaining({:?})", self.p)
    }
}

impl ExplainingPropagator {
    pub fn new(p: Propagator, c: impl Fn(&PartialStructure) -> Explanation + Send + Sync + 'static) -> Self {
        ExplainingPropagator { p, c: Arc::new(c) }
    }

    pub fn rank(&self) -> usize {
        self.p.rank()
    }

    pub fn key(&self) -> &str {
        self.p.key()
    }

    pub fn clauses(&self) -> Option<&[Clause]> {
        self.p.clauses()
    }

    pub fn propagate(&self, b: &PartialStructure) -> PartialStructure {
        self.p.propagate(b)
    }

    /// Explanation at `b`; inconsistent states are never explained.
    pub fn explain(&self, b: &PartialStructure) -> Explanation {
        if !b.is_consistent() {
            return Explanation::Unexplained;
        }
        (self.c)(b)
    }
}

/// `(P, C_◊)`.
pub fn lift(p: Propagator) -> ExplainingPropagator {
    ExplainingPropagator::new(p, |_| Explanation::Unexplained)
}

/// Lifted collapsed clause propagator.
pub fn clause_ep(clauses: Vec<Clause>) -> ExplainingPropagator {
    lift(clause_propagator(clauses))
}

enum Contribution {
    Identity,
    Ep(ExplainingPropagator),
}

fn contribution(ep: &ExplainingPropagator, b: &PartialStructure) -> Option<Contribution> {
    if ep.propagate(b) == *b {
        return Some(Contribution::Identity);
    }
    match ep.explain(b) {
        Explanation::Explained(x) => Some(Contribution::Ep(x)),
        // A clause-form side is its own simplest explanation.
        Explanation::Unexplained if ep.clauses().is_some() => Some(Contribution::Ep(ep.clone())),
        Explanation::Unexplained => None,
    }
}

fn combine(a: Contribution, b: Contribution) -> Explanation {
    match (a, b) {
        (Contribution::Identity, Contribution::Identity) => Explanation::Unexplained,
        (Contribution::Identity, Contribution::Ep(x)) | (Contribution::Ep(x), Contribution::Identity) => {
            Explanation::Explained(x)
        }
        (Contribution::Ep(x), Contribution::Ep(y)) => match (x.clauses(), y.clauses()) {
            (Some(cx), Some(cy)) => {
                let mut all = cx.to_vec();
                all.extend_from_slice(cy);
                Explanation::Explained(clause_ep(all))
            }
            _ => Explanation::Explained(e_product(&x, &y)),
        },
    }
}

pub fn e_product(ep1: &ExplainingPropagator, ep2: &ExplainingPropagator) -> ExplainingPropagator {
    let p = collapse(product_prop(ep1.p.clone(), ep2.p.clone()));
    let (a, b) = (ep1.clone(), ep2.clone());
    let me = p.clone();
    ExplainingPropagator::new(p, move |s| {
        if me.propagate(s) == *s {
            return Explanation::Unexplained;
        }
        match (contribution(&a, s), contribution(&b, s)) {
            (Some(x), Some(y)) => combine(x, y),
            _ => Explanation::Unexplained,
        }
    })
}

fn clause_atoms_within(clauses: &[Clause], mask: &[bool]) -> bool {
    clauses.iter().all(|c| c.lits().iter().all(|l| mask[l.atom]))
}

pub fn e_project(sig: &Arc<Signature>, delta: &PredSet, ep: &ExplainingPropagator, inner_solver: SolverFn) -> ExplainingPropagator {
    let p = collapse(project_prop(sig, delta, &ep.p, inner_solver.clone()));
    let mask = sig.atom_mask(delta);
    let (inner, me, delta, sig) = (ep.clone(), p.clone(), delta.clone(), sig.clone());
    ExplainingPropagator::new(p, move |b| {
        if me.propagate(b) == *b {
            return Explanation::Unexplained;
        }
        let bd = b.restrict_mask(&mask);
        if b.is_two_valued_on(&delta) && !inner_solver.has_model(&bd) {
            // No δ-extension: forbid this δ-part.
            return Explanation::Explained(clause_ep(vec![Clause::negating(&bd, Some(&mask))]));
        }
        let x = match inner.explain(&bd) {
            Explanation::Explained(x) => x,
            Explanation::Unexplained => match inner.clauses() {
                Some(cs) if inner.propagate(&bd) != bd && clause_atoms_within(cs, &mask) => {
                    return Explanation::Explained(inner.clone())
                }
                _ => return Explanation::Unexplained,
            },
        };
        if let Some(cs) = x.clauses() {
            if clause_atoms_within(cs, &mask) {
                return Explanation::Explained(x);
            }
        }
        let solver = SolverFn::search(&x.p);
        Explanation::Explained(e_project(&sig, &delta, &x, solver))
    })
}

/// `(P_{Q≡R}, C_{Q≡R})`: differing tuples are explained by their two equality clauses.
pub fn equality_explaining(sig: &Signature, q: PredId, r: PredId) -> ExplainingPropagator {
    let pairs: Vec<(AtomId, AtomId)> = sig.atoms_of(q).zip(sig.atoms_of(r)).collect();
    ExplainingPropagator::new(equality_propagator(q, r), move |b| {
        let clauses: Vec<Clause> = pairs
            .iter()
            .filter(|&&(a, c)| b.get(a) != b.get(c))
            .flat_map(|&(a, c)| equality_clauses(a, c))
            .collect();
        if clauses.is_empty() {
            Explanation::Unexplained
        } else {
            Explanation::Explained(clause_ep(clauses))
        }
    })
}

pub fn e_select(sig: &Signature, q: PredId, r: PredId, ep: &ExplainingPropagator) -> ExplainingPropagator {
    e_product(ep, &equality_explaining(sig, q, r))
}

/// The bounds_leq builtin with explanations `{cl_n | a literal of cl_n is false}` plus the threshold clauses
/// that have a false literal.
pub fn bounds_explainer(sig: &Signature, qc: PredId, qd: PredId) -> ExplainingPropagator {
    let p = bounds_module_propagator(sig, qc, qd);
    let n = sig.domain().len();
    let cls: Vec<Clause> = (0..n).map(|k| bounds_clause(sig, qc, qd, k)).collect();
    let mut th = threshold_clauses(sig, qc);
    th.extend(threshold_clauses(sig, qd));
    let me = p.clone();
    ExplainingPropagator::new(p, move |b| {
        let pb = me.propagate(b);
        if pb == *b {
            return Explanation::Unexplained;
        }
        // Chained threshold steps only expose their false literal in p(b).
        let has_false = |c: &&Clause| c.lits().iter().any(|l| l.is_false_in(pb.get(l.atom)));
        let chosen: Vec<Clause> = cls.iter().filter(has_false).chain(th.iter().filter(has_false)).cloned().collect();
        Explanation::Explained(clause_ep(chosen))
    })
}

/// Transitive closure with Horn-clause explanations, plus completion clauses once Edge is fully known.
pub fn tc_explainer(name: &str, interp: &ModuleInterpretation, edge: PredId, trans: PredId) -> Result<ExplainingPropagator, AlgebraError> {
    let sig = interp.sig.clone();
    let def = interp.get(name)?;
    let p = atomic_propagator(name, def, &sig);
    let n = sig.domain().len();
    let e = |x: usize, y: usize| sig.atom(edge, &[x, y]);
    let t = |x: usize, y: usize| sig.atom(trans, &[x, y]);
    let mut horn = Vec::new();
    for x in 0..n {
        for y in 0..n {
            horn.extend(Clause::new([Lit::new(e(x, y), false), Lit::new(t(x, y), true)]));
            for z in 0..n {
                horn.extend(Clause::new([Lit::new(t(x, y), false), Lit::new(e(y, z), false), Lit::new(t(x, z), true)]));
            }
        }
    }
    let edges: Vec<AtomId> = sig.atoms_of(edge).collect();
    let trans_atoms: Vec<AtomId> = sig.atoms_of(trans).collect();
    let me = p.clone();
    Ok(ExplainingPropagator::new(p, move |b| {
        let pb = me.propagate(b);
        if pb == *b {
            return Explanation::Unexplained;
        }
        let mut chosen: Vec<Clause> =
            horn.iter().filter(|c| c.lits().iter().any(|l| l.is_false_in(pb.get(l.atom)))).cloned().collect();
        if edges.iter().all(|&a| b.get(a).is_two_valued()) {
            let e_true: Vec<bool> = edges.iter().map(|&a| b.get(a) == TruthValue::T).collect();
            let reach = crate::algebra::transitive_closure(n, &e_true);
            let absent: Vec<Lit> = edges.iter().filter(|&&a| b.get(a) == TruthValue::F).map(|&a| Lit::new(a, true)).collect();
            for (k, &ta) in trans_atoms.iter().enumerate() {
                if !reach[k] {
                    chosen.extend(Clause::new(absent.iter().copied().chain([Lit::new(ta, false)])));
                }
            }
        }
        let x = clause_ep(chosen);
        if pb.le(&x.propagate(b)) {
            Explanation::Explained(x)
        } else {
            Explanation::Unexplained
        }
    }))
}

/// Explains a rejected two-valued state by the clause forbidding its restriction to `mask`.
fn rejection_explainer(p: Propagator, mask: Vec<bool>) -> ExplainingPropagator {
    let me = p.clone();
    ExplainingPropagator::new(p, move |b| {
        if b.is_two_valued() && me.propagate(b).is_top() {
            Explanation::Explained(clause_ep(vec![Clause::negating(b, Some(&mask))]))
        } else {
            Explanation::Unexplained
        }
    })
}

/// Propagator for −π_δE with clause explanations `¬explain_fn(b|δ)`.
pub fn negation_nested_explaining(
    sig: &Signature,
    delta: &PredSet,
    s: SolverFn,
    explain_fn: Arc<dyn Fn(&PartialStructure) -> PartialStructure + Send + Sync>,
) -> ExplainingPropagator {
    let p = negation_nested(sig, delta, s);
    let (mask, delta, me) = (sig.atom_mask(delta), delta.clone(), p.clone());
    ExplainingPropagator::new(p, move |b| {
        if b.is_two_valued_on(&delta) && me.propagate(b).is_top() {
            let witness = explain_fn(&b.restrict_mask(&mask));
            Explanation::Explained(clause_ep(vec![Clause::negating(&witness, None)]))
        } else {
            Explanation::Unexplained
        }
    })
}

/// Mirrors `build_propagator(_, Best)` with explaining combinators.
pub fn build_explaining(e: &ModuleExpr, interp: &ModuleInterpretation) -> Result<ExplainingPropagator, AlgebraError> {
    crate::algebra::typecheck(e, interp)?;
    build_rec(e, interp)
}

fn build_rec(e: &ModuleExpr, interp: &ModuleInterpretation) -> Result<ExplainingPropagator, AlgebraError> {
    let sig = &interp.sig;
    let pid = |n: &str| sig.pred_id(n).expect("typechecked predicate");
    Ok(match e {
        ModuleExpr::Bot => {
            let empty = Clause::new([]).expect("empty clause");
            ExplainingPropagator::new(top_propagator(), move |_| Explanation::Explained(clause_ep(vec![empty.clone()])))
        }
        ModuleExpr::Atomic(n) => {
            let def = interp.get(n)?;
            match &def.body {
                ModuleBody::Clauses(cs) => clause_ep(cs.clone()),
                ModuleBody::Builtin(Builtin::BoundsLeq { qc, qd }) => bounds_explainer(sig, *qc, *qd),
                ModuleBody::Builtin(Builtin::TransitiveClosure { edge, trans }) => tc_explainer(n, interp, *edge, *trans)?,
                ModuleBody::Table(_) | ModuleBody::Builtin(Builtin::FullRelation { .. }) => {
                    rejection_explainer(atomic_propagator(n, def, sig), sig.atom_mask(&def.voc))
                }
            }
        }
        ModuleExpr::Product(a, b) => e_product(&build_rec(a, interp)?, &build_rec(b, interp)?),
        ModuleExpr::Complement(a) => match a.as_ref() {
            ModuleExpr::Project(d, inner) => {
                let delta = sig.pred_set(d)?;
                let solver = SolverFn::search(&build_propagator(inner, interp, Strategy::Best)?);
                negation_nested_explaining(sig, &delta, solver, Arc::new(|w: &PartialStructure| w.clone()))
            }
            _ => {
                let pa = build_rec(a, interp)?;
                let mask = sig.atom_mask(&vocabulary_of(a, interp)?);
                rejection_explainer(collapse(complement_checker(&pa.p)), mask)
            }
        },
        ModuleExpr::Project(d, a) => {
            let delta = sig.pred_set(d)?;
            let ep = build_rec(a, interp)?;
            let solver = SolverFn::search(&ep.p);
            e_project(sig, &delta, &ep, solver)
        }
        ModuleExpr::Select(q, r, a) => e_select(sig, pid(q), pid(r), &build_rec(a, interp)?),
        ModuleExpr::Plus(a, b) => {
            let (pa, pb) = (build_rec(a, interp)?, build_rec(b, interp)?);
            let mask = sig.atom_mask(&vocabulary_of(e, interp)?);
            rejection_explainer(collapse(disjoin_prop(&pa.p, &pb.p)), mask)
        }
        ModuleExpr::SelectTheta(t, _) => {
            let mut ep = build_rec(&desugar(e)?, interp)?;
            for (q, r) in entailed_equalities(t)? {
                ep = e_select(sig, pid(&q), pid(&r), &ep);
            }
            ep
        }
    })
}

/// Walks the explanation chain at `b`, checking "explains propagation" and strict rank decrease.
pub fn check_chain(ep: &ExplainingPropagator, b: &PartialStructure) -> Result<usize, String> {
    let mut cur = ep.clone();
    let mut steps = 0;
    loop {
        match cur.explain(b) {
            Explanation::Unexplained => return Ok(steps),
            Explanation::Explained(x) => {
                if x.rank() >= cur.rank() {
                    return Err(format!("rank did not decrease: {} ({}) -> {} ({})", cur.key(), cur.rank(), x.key(), x.rank()));
                }
                let (pb, xb) = (cur.propagate(b), x.propagate(b));
                if !pb.le(&xb) {
                    return Err(format!("explanation {} does not cover propagation of {} at {}", x.key(), cur.key(), b.display_known()));
                }
                steps += 1;
                cur = x;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::AtomicModuleDef;
    use crate::propagators::{bounds_leq_propagator, module_of, unit_propagator};
    use TruthValue::*;

    fn bounds_sig(n: usize) -> Arc<Signature> {
        let names: Vec<String> = (1..=n).map(|k| k.to_string()).collect();
        let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        Signature::build(&refs, &[("Qc", 1), ("Qd", 1)]).unwrap()
    }

    /// Threshold encoding of `lo ≤ x ≤ hi` over 1..=n: Q(k) is T for k ≥ hi, F for k < lo.
    fn interval(b: &mut PartialStructure, q: PredId, lo: usize, hi: usize) {
        let sig = b.sig().clone();
        for (k, a) in sig.atoms_of(q).enumerate() {
            let n = k + 1;
            if n >= hi {
                b.set(a, T);
            } else if n < lo {
                b.set(a, F);
            }
        }
    }

    #[test]
    fn lift_never_explains() {
        let sig = bounds_sig(2);
        let ep = lift(unit_propagator(vec![]));
        assert!(!ep.explain(&PartialStructure::unknown(&sig)).is_explained());
    }

    #[test]
    fn bounds_explanation_clauses() {
        let sig = bounds_sig(100);
        let mut b = PartialStructure::unknown(&sig);
        interval(&mut b, 0, 10, 90);
        interval(&mut b, 1, 20, 80);
        let ep = bounds_explainer(&sig, 0, 1);
        let Explanation::Explained(x) = ep.explain(&b) else { panic!("expected an explanation") };
        let cls = x.clauses().unwrap();
        for n in (1..10).chain(80..=100) {
            assert!(cls.contains(&bounds_clause(&sig, 0, 1, n - 1)), "cl_{n} missing");
        }
        for n in 10..80 {
            assert!(!cls.contains(&bounds_clause(&sig, 0, 1, n - 1)), "cl_{n} unexpected");
        }
        assert!(ep.propagate(&b).le(&x.propagate(&b)));
        assert!(bounds_leq_propagator(0, 1).propagate(&b).le(&x.propagate(&b)));
        let fixed = ep.propagate(&b);
        assert!(!ep.explain(&fixed).is_explained());
    }

    #[test]
    fn equality_explanation_is_per_tuple() {
        let sig = Signature::build(&["a", "b"], &[("Q", 1), ("R", 1)]).unwrap();
        let ep = equality_explaining(&sig, 0, 1);
        let b = PartialStructure::from_vals(&sig, vec![T, U, U, U]);
        let Explanation::Explained(x) = ep.explain(&b) else { panic!() };
        let want = equality_clauses(sig.atom(0, &[0]), sig.atom(1, &[0]));
        assert_eq!(x.clauses().unwrap(), want.as_slice());
        assert_eq!(x.rank(), 0);
        let same = PartialStructure::from_vals(&sig, vec![T, F, T, F]);
        assert!(!ep.explain(&same).is_explained());
        // The two clauses define the same module as the tuple equality.
        let tuple = crate::propagators::equality_tuple_propagator(sig.atom(0, &[0]), sig.atom(1, &[0]));
        assert_eq!(module_of(&x.p, &sig).unwrap(), module_of(&tuple, &sig).unwrap());
    }

    #[test]
    fn product_of_clause_sides_flattens() {
        let sig = Signature::build(&["a"], &[("p", 0), ("q", 0), ("r", 0)]).unwrap();
        let c1 = clause_ep(vec![Clause::new([Lit::new(0, false), Lit::new(1, true)]).unwrap()]);
        let c2 = clause_ep(vec![Clause::new([Lit::new(1, false), Lit::new(2, true)]).unwrap()]);
        let prod = e_product(&c1, &c2);
        let b = PartialStructure::from_vals(&sig, vec![T, U, F]);
        assert!(prod.propagate(&b).is_top());
        let Explanation::Explained(x) = prod.explain(&b) else { panic!() };
        assert_eq!(x.clauses().unwrap().len(), 2);
        assert!(x.propagate(&b).is_top());
        // Only the first side propagates here, so it is the whole explanation.
        let b = PartialStructure::from_vals(&sig, vec![T, U, U]);
        let Explanation::Explained(x) = prod.explain(&b) else { panic!() };
        assert_eq!(x.key(), c1.key());
        assert_eq!(check_chain(&prod, &b), Ok(1));
    }

    #[test]
    fn nested_negation_explains_with_negated_witness() {
        let sig = Signature::build(&["a"], &[("p", 0), ("q", 0)]).unwrap();
        let mut it = ModuleInterpretation::new(&sig);
        let c = Clause::new([Lit::new(0, true), Lit::new(1, true)]).unwrap();
        it.insert("M", AtomicModuleDef { voc: sig.all_preds(), body: ModuleBody::Clauses(vec![c]) }).unwrap();
        let e = ModuleExpr::complement(ModuleExpr::project(&["p"], ModuleExpr::atomic("M")));
        let ep = build_explaining(&e, &it).unwrap();
        let b = PartialStructure::from_vals(&sig, vec![F, U]);
        assert!(ep.propagate(&b).is_top());
        let Explanation::Explained(x) = ep.explain(&b) else { panic!() };
        assert_eq!(x.clauses().unwrap(), &[Clause::new([Lit::new(0, true)]).unwrap()]);
        let partial = PartialStructure::unknown(&sig);
        assert_eq!(ep.propagate(&partial), partial);
    }
}
