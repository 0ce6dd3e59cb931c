//! Propagators: primitives, checkers, and combinators mirroring the algebra.

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use crate::algebra::{
    atomic_member, desugar, entailed_equalities, vocabulary_of, AlgebraError, AtomicModuleDef, Builtin, Clause, Evaluator, Lit,
    ModuleBody, ModuleExpr, ModuleInterpretation,
};
use crate::lattice::{AtomId, PartialStructure, PredId, PredSet, Signature, TruthValue};

/// Model-expansion procedure: all (or the first `limit`) two-valued models above the input.
#[derive(Clone)]
pub struct SolverFn {
    name: String,
    f: Arc<dyn Fn(&PartialStructure, Option<usize>) -> Vec<PartialStructure> + Send + Sync>,
    /// Existence answers by input; solvers are deterministic.
    exists: Arc<Mutex<HashMap<Vec<TruthValue>, bool>>>,
}

impl SolverFn {
    pub fn new(
        name: impl Into<String>,
        f: impl Fn(&PartialStructure, Option<usize>) -> Vec<PartialStructure> + Send + Sync + 'static,
    ) -> Self {
        SolverFn { name: name.into(), f: Arc::new(f), exists: Arc::default() }
    }

    /// Propagate-and-search over `p`.
    pub fn search(p: &Propagator) -> Self {
        let p2 = p.clone();
        SolverFn::new(format!("search({})", p.key()), move |b, limit| crate::engines::search_models(&p2, b, limit, None))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn solve(&self, b: &PartialStructure) -> Vec<PartialStructure> {
        (self.f)(b, None)
    }

    pub fn solve_limit(&self, b: &PartialStructure, limit: Option<usize>) -> Vec<PartialStructure> {
        (self.f)(b, limit)
    }

    pub fn has_model(&self, b: &PartialStructure) -> bool {
        if let Some(&known) = self.exists.lock().expect("solver memo lock").get(b.vals()) {
            return known;
        }
        let found = !(self.f)(b, Some(1)).is_empty();
        self.exists.lock().expect("solver memo lock").insert(b.vals().to_vec(), found);
        found
    }
}

impl fmt::Debug for SolverFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SolverFn({})", self.name)
    }
}

/// Per-node instrumentation.
#[derive(Debug, Default)]
pub struct Counters {
    pub propagate_calls: AtomicU64,
    /// Inner-solver invocations made directly by this node.
    pub solver_calls: AtomicU64,
    /// Inner-solver invocations made while the input was not two-valued on the node's δ.
    pub solver_calls_off_delta: AtomicU64,
}

impl Counters {
    pub fn snapshot(&self) -> (u64, u64, u64) {
        (
            self.propagate_calls.load(Ordering::Relaxed),
            self.solver_calls.load(Ordering::Relaxed),
            self.solver_calls_off_delta.load(Ordering::Relaxed),
        )
    }
}

/// Membership test used by checker nodes on two-valued inputs.
#[derive(Clone)]
pub enum Verdict {
    Module { expr: String, eval: Arc<Mutex<Evaluator>> },
    Atomic { name: String, def: AtomicModuleDef },
    Product(Propagator, Propagator),
    Select { q: PredId, r: PredId, inner: Propagator },
    Project { delta: PredSet, mask: Vec<bool>, solver: SolverFn },
}

#[derive(Clone)]
pub enum Kind {
    Identity,
    Top,
    /// Unit propagation; with `collapse` any inconsistency becomes 𝔗.
    Clauses { clauses: Vec<Clause>, collapse: bool },
    EqualityTuple { q: AtomId, r: AtomId, clauses: Vec<Clause> },
    Equality { q: PredId, r: PredId },
    Bounds { qc: PredId, qd: PredId },
    ForwardClosure { edge: PredId, trans: PredId },
    Check(Verdict),
    Compose(Propagator, Propagator),
    Fixpoint(Propagator),
    Product(Propagator, Propagator),
    Disjoin(Propagator, Propagator),
    Project { delta: PredSet, mask: Vec<bool>, inner: Propagator, solver: SolverFn },
    Select { q: PredId, r: PredId, inner: Propagator },
    ComplementCheck(Propagator),
    Collapse(Propagator),
    NegationNested { delta: PredSet, mask: Vec<bool>, solver: SolverFn },
    Optimal(SolverFn),
    Custom(Arc<dyn Fn(&PartialStructure) -> PartialStructure + Send + Sync>),
}

pub struct Node {
    kind: Kind,
    rank: usize,
    key: String,
    counters: Counters,
    tag: Option<Arc<ModuleExpr>>,
}

/// Shareable handle to a monotone, information-preserving operator.
#[derive(Clone)]
pub struct Propagator(Arc<Node>);

impl fmt::Debug for Propagator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Propagator({}, rank {})", self.0.key, self.0.rank)
    }
}

fn mk(kind: Kind, rank: usize, key: String) -> Propagator {
    Propagator(Arc::new(Node { kind, rank, key, counters: Counters::default(), tag: None }))
}

impl Propagator {
    pub fn rank(&self) -> usize {
        self.0.rank
    }

    /// Structural key; equal keys denote extensionally equal propagators.
    pub fn key(&self) -> &str {
        &self.0.key
    }

    pub fn kind(&self) -> &Kind {
        &self.0.kind
    }

    pub fn tag(&self) -> Option<&ModuleExpr> {
        self.0.tag.as_deref()
    }

    pub fn counters(&self) -> &Counters {
        &self.0.counters
    }

    /// A copy carrying a module tag (fresh counters).
    pub fn with_tag(&self, e: &ModuleExpr) -> Propagator {
        Propagator(Arc::new(Node {
            kind: self.0.kind.clone(),
            rank: self.0.rank,
            key: self.0.key.clone(),
            counters: Counters::default(),
            tag: Some(Arc::new(e.clone())),
        }))
    }

    /// The clause set when this is a clause-form (rank 0) propagator.
    pub fn clauses(&self) -> Option<&[Clause]> {
        match &self.0.kind {
            Kind::Clauses { clauses, .. } | Kind::EqualityTuple { clauses, .. } => Some(clauses),
            _ => None,
        }
    }

    /// Whether `p(b) ≠ b`, decided without building `p(b)` for clausal nodes.
    pub fn changes(&self, b: &PartialStructure) -> bool {
        match self.clauses() {
            Some(cs) if b.is_consistent() => cs.iter().any(|c| clause_fires(c, b)),
            _ => self.propagate(b) != *b,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match &self.0.kind {
            Kind::Identity => "identity",
            Kind::Top => "top",
            Kind::Clauses { .. } => "clauses",
            Kind::EqualityTuple { .. } => "equality_tuple",
            Kind::Equality { .. } => "equality",
            Kind::Bounds { .. } => "bounds",
            Kind::ForwardClosure { .. } => "forward_closure",
            Kind::Check(_) => "checker",
            Kind::Compose(..) => "compose",
            Kind::Fixpoint(_) => "fixpoint",
            Kind::Product(..) => "product",
            Kind::Disjoin(..) => "disjoin",
            Kind::Project { .. } => "project",
            Kind::Select { .. } => "select",
            Kind::ComplementCheck(_) => "complement",
            Kind::Collapse(_) => "collapse",
            Kind::NegationNested { .. } => "negation_nested",
            Kind::Optimal(_) => "optimal",
            Kind::Custom(_) => "custom",
        }
    }

    pub fn children(&self) -> Vec<Propagator> {
        match &self.0.kind {
            Kind::Compose(a, b) | Kind::Product(a, b) | Kind::Disjoin(a, b) => vec![a.clone(), b.clone()],
            Kind::Check(Verdict::Product(a, b)) => vec![a.clone(), b.clone()],
            Kind::Check(Verdict::Select { inner, .. }) => vec![inner.clone()],
            Kind::Fixpoint(a) | Kind::ComplementCheck(a) | Kind::Collapse(a) => vec![a.clone()],
            Kind::Project { inner, .. } | Kind::Select { inner, .. } => vec![inner.clone()],
            _ => Vec::new(),
        }
    }

    /// This node and all descendants, pre-order.
    pub fn nodes(&self) -> Vec<Propagator> {
        let mut out = vec![self.clone()];
        let mut k = 0;
        while k < out.len() {
            let kids = out[k].children();
            out.extend(kids);
            k += 1;
        }
        out
    }

    pub fn propagate(&self, b: &PartialStructure) -> PartialStructure {
        self.0.counters.propagate_calls.fetch_add(1, Ordering::Relaxed);
        let sig = b.sig();
        match &self.0.kind {
            Kind::Identity => b.clone(),
            Kind::Top => PartialStructure::top(sig),
            Kind::Clauses { clauses, collapse } => {
                let out = unit_propagate(clauses, b);
                if *collapse {
                    collapse_top(out)
                } else {
                    out
                }
            }
            Kind::EqualityTuple { q, r, .. } => {
                let v = b.get(*q).lub(b.get(*r));
                let mut out = b.clone();
                out.set(*q, v);
                out.set(*r, v);
                out
            }
            Kind::Equality { q, r } => equalize(b, sig, *q, *r),
            Kind::Bounds { qc, qd } => bounds_step(b, sig, *qc, *qd),
            Kind::ForwardClosure { edge, trans } => forward_closure(b, sig, *edge, *trans),
            Kind::Check(v) => {
                if !b.is_consistent() {
                    return PartialStructure::top(sig);
                }
                if !b.is_two_valued() {
                    return b.clone();
                }
                if self.verdict(v, b) {
                    b.clone()
                } else {
                    PartialStructure::top(sig)
                }
            }
            Kind::Compose(p1, p2) => p1.propagate(&p2.propagate(b)),
            Kind::Fixpoint(p) => {
                let cap = 2 * b.len() + 1;
                let mut cur = b.clone();
                for _ in 0..=cap {
                    let next = p.propagate(&cur);
                    if next == cur {
                        return cur;
                    }
                    cur = next;
                }
                panic!("fixpoint of {} did not converge within {cap} steps; the propagator is not information-preserving", p.key());
            }
            Kind::Product(p1, p2) => p1.propagate(b).lub(&p2.propagate(b)),
            Kind::Disjoin(p1, p2) => p1.propagate(b).glb(&p2.propagate(b)),
            Kind::Project { delta, mask, inner, solver } => {
                if !b.is_consistent() {
                    return PartialStructure::top(sig);
                }
                let bd = b.restrict_mask(mask);
                if b.is_two_valued_on(delta) {
                    self.record_solver_call(&bd, delta);
                    if !solver.has_model(&bd) {
                        return PartialStructure::top(sig);
                    }
                }
                let inner_out = inner.propagate(&bd).restrict_mask(mask);
                let rest: Vec<bool> = mask.iter().map(|m| !m).collect();
                inner_out.lub(&b.restrict_mask(&rest))
            }
            Kind::Select { q, r, inner } => equalize(&inner.propagate(b), sig, *q, *r),
            Kind::ComplementCheck(p) => {
                if !b.is_consistent() {
                    return PartialStructure::top(sig);
                }
                if !b.is_two_valued() {
                    return b.clone();
                }
                if p.propagate(b) == *b {
                    PartialStructure::top(sig)
                } else {
                    b.clone()
                }
            }
            Kind::Collapse(p) => collapse_top(p.propagate(b)),
            Kind::NegationNested { delta, mask, solver } => {
                if !b.is_consistent() {
                    return PartialStructure::top(sig);
                }
                if b.is_two_valued_on(delta) {
                    let bd = b.restrict_mask(mask);
                    self.record_solver_call(&bd, delta);
                    if solver.has_model(&bd) {
                        return PartialStructure::top(sig);
                    }
                }
                b.clone()
            }
            Kind::Optimal(s) => {
                self.0.counters.solver_calls.fetch_add(1, Ordering::Relaxed);
                let models = s.solve(b);
                let mut out = PartialStructure::top(sig);
                for m in &models {
                    out = out.glb(m);
                }
                out
            }
            Kind::Custom(f) => f(b),
        }
    }

    fn record_solver_call(&self, solver_input: &PartialStructure, delta: &PredSet) {
        self.0.counters.solver_calls.fetch_add(1, Ordering::Relaxed);
        if !solver_input.is_two_valued_on(delta) {
            self.0.counters.solver_calls_off_delta.fetch_add(1, Ordering::Relaxed);
        }
    }

    fn verdict(&self, v: &Verdict, i: &PartialStructure) -> bool {
        match v {
            Verdict::Module { eval, .. } => eval.lock().expect("evaluator lock").eval(i).expect("two-valued input"),
            Verdict::Atomic { def, .. } => atomic_member(def, i).expect("two-valued input"),
            Verdict::Product(p1, p2) => p1.propagate(i) == *i && p2.propagate(i) == *i,
            Verdict::Select { q, r, inner } => {
                let sig = i.sig();
                sig.atoms_of(*q).zip(sig.atoms_of(*r)).all(|(a, b)| i.get(a) == i.get(b)) && inner.propagate(i) == *i
            }
            Verdict::Project { solver, mask, delta } => {
                let bd = i.restrict_mask(mask);
                self.record_solver_call(&bd, delta);
                solver.has_model(&bd)
            }
        }
    }
}

fn collapse_top(out: PartialStructure) -> PartialStructure {
    if out.is_consistent() {
        out
    } else {
        PartialStructure::top(out.sig())
    }
}

/// Least fixpoint of the unit rule: when every other literal of a clause is false, join the remaining literal's
/// satisfying value. An all-false clause thus makes each of its atoms I.
pub fn unit_propagate(clauses: &[Clause], b: &PartialStructure) -> PartialStructure {
    if clauses.iter().any(|c| c.is_empty()) {
        return PartialStructure::top(b.sig());
    }
    let mut out = b.clone();
    unit_propagate_in_place(clauses, &mut out);
    out
}

/// Whether the unit rule for `c` adds information to the consistent state `b`.
pub fn clause_fires(c: &Clause, b: &PartialStructure) -> bool {
    let mut open = None;
    for &l in c.lits() {
        if !l.is_false_in(b.get(l.atom)) {
            if open.is_some() {
                return false;
            }
            open = Some(l);
        }
    }
    match open {
        None => true,
        Some(l) => b.get(l.atom) == TruthValue::U,
    }
}

/// Applies the unit rule to `b` until nothing changes; returns whether anything did.
pub fn unit_propagate_in_place(clauses: &[Clause], b: &mut PartialStructure) -> bool {
    if clauses.iter().any(|c| c.is_empty()) {
        if b.is_top() {
            return false;
        }
        *b = PartialStructure::top(b.sig());
        return true;
    }
    let mut any = false;
    let mut consistent = b.is_consistent();
    loop {
        let mut changed = false;
        for c in clauses {
            if consistent && !clause_fires(c, b) {
                continue;
            }
            let lits = c.lits();
            let nfalse = lits.iter().filter(|l| l.is_false_in(b.get(l.atom))).count();
            if nfalse + 1 < lits.len() {
                continue;
            }
            for l in lits {
                let own = usize::from(l.is_false_in(b.get(l.atom)));
                if nfalse - own == lits.len() - 1 && !l.sat_value().leq_p(b.get(l.atom)) {
                    b.join_at(l.atom, l.sat_value());
                    consistent &= b.get(l.atom).is_consistent();
                    changed = true;
                }
            }
        }
        if !changed {
            return any;
        }
        any = true;
    }
}

fn equalize(b: &PartialStructure, sig: &Signature, q: PredId, r: PredId) -> PartialStructure {
    let mut out = b.clone();
    for (a, c) in sig.atoms_of(q).zip(sig.atoms_of(r)) {
        let v = b.get(a).lub(b.get(c));
        out.set(a, v);
        out.set(c, v);
    }
    out
}

fn bounds_step(b: &PartialStructure, sig: &Signature, qc: PredId, qd: PredId) -> PartialStructure {
    let mut out = b.clone();
    for (c, d) in sig.atoms_of(qc).zip(sig.atoms_of(qd)) {
        let (vc, vd) = (b.get(c), b.get(d));
        if TruthValue::T.leq_p(vd) {
            out.join_at(c, vd);
        }
        if TruthValue::F.leq_p(vc) {
            out.join_at(d, vc);
        }
    }
    out
}

fn closure_of(n: usize, base: &[bool], step: &[bool]) -> Vec<bool> {
    // Smallest superset of `base` closed under (x,y) in set, (y,z) in step => (x,z) in set.
    let mut r = base.to_vec();
    loop {
        let mut changed = false;
        for x in 0..n {
            for y in 0..n {
                if r[x * n + y] {
                    for z in 0..n {
                        if step[y * n + z] && !r[x * n + z] {
                            r[x * n + z] = true;
                            changed = true;
                        }
                    }
                }
            }
        }
        if !changed {
            return r;
        }
    }
}

fn forward_closure(b: &PartialStructure, sig: &Signature, edge: PredId, trans: PredId) -> PartialStructure {
    if !b.is_consistent() {
        return PartialStructure::top(b.sig());
    }
    let n = sig.domain().len();
    let e_atoms: Vec<AtomId> = sig.atoms_of(edge).collect();
    let t_atoms: Vec<AtomId> = sig.atoms_of(trans).collect();
    let e_true: Vec<bool> = e_atoms.iter().map(|&a| b.get(a) == TruthValue::T).collect();
    let base: Vec<bool> = (0..n * n).map(|k| e_true[k] || b.get(t_atoms[k]) == TruthValue::T).collect();
    let derived = closure_of(n, &base, &e_true);
    let mut out = b.clone();
    for k in 0..n * n {
        if derived[k] {
            out.join_at(t_atoms[k], TruthValue::T);
        }
    }
    if e_atoms.iter().all(|&a| b.get(a).is_two_valued()) {
        let exact = closure_of(n, &e_true, &e_true);
        for k in 0..n * n {
            if !exact[k] {
                out.join_at(t_atoms[k], TruthValue::F);
            }
        }
    }
    out
}

pub fn identity() -> Propagator {
    mk(Kind::Identity, 0, "id".into())
}

/// Constant 𝔗; the propagator for ⊥.
pub fn top_propagator() -> Propagator {
    mk(Kind::Top, 1, "top".into())
}

fn clauses_key(clauses: &[Clause]) -> String {
    let parts: Vec<String> = clauses.iter().map(|c| format!("({})", c.key())).collect();
    parts.join("")
}

/// Raw unit propagation (rank 0).
pub fn unit_propagator(clauses: Vec<Clause>) -> Propagator {
    let key = format!("unit{}", clauses_key(&clauses));
    mk(Kind::Clauses { clauses, collapse: false }, 0, key)
}

/// Unit propagation that maps any inconsistent outcome to 𝔗 (rank 0).
pub fn clause_propagator(clauses: Vec<Clause>) -> Propagator {
    // Source order is kept for propagation; the key is order-independent.
    let mut seen = std::collections::BTreeSet::new();
    let clauses: Vec<Clause> = clauses.into_iter().filter(|c| seen.insert(c.clone())).collect();
    let sorted: Vec<Clause> = seen.into_iter().collect();
    let key = format!("cl{}", clauses_key(&sorted));
    mk(Kind::Clauses { clauses, collapse: true }, 0, key)
}

pub fn bounds_leq_propagator(qc: PredId, qd: PredId) -> Propagator {
    mk(Kind::Bounds { qc, qd }, 1, format!("bounds({qc},{qd})"))
}

/// ¬Q(n) ∨ Q(n+1) for consecutive domain elements.
pub fn threshold_clauses(sig: &Signature, q: PredId) -> Vec<Clause> {
    let atoms: Vec<AtomId> = sig.atoms_of(q).collect();
    atoms.windows(2).filter_map(|w| Clause::new([Lit::new(w[0], false), Lit::new(w[1], true)])).collect()
}

/// cl_n = Q_c(n) ∨ ¬Q_d(n).
pub fn bounds_clause(sig: &Signature, qc: PredId, qd: PredId, n: usize) -> Clause {
    let c = sig.atoms_of(qc).nth(n).expect("element in range");
    let d = sig.atoms_of(qd).nth(n).expect("element in range");
    Clause::new([Lit::new(c, true), Lit::new(d, false)]).expect("distinct atoms")
}

/// Propagator for the bounds_leq builtin: the transfer rules plus monotone-threshold clauses.
pub fn bounds_module_propagator(sig: &Signature, qc: PredId, qd: PredId) -> Propagator {
    let mut th = threshold_clauses(sig, qc);
    th.extend(threshold_clauses(sig, qd));
    collapse(product_prop(bounds_leq_propagator(qc, qd), clause_propagator(th)))
}

pub fn equality_propagator(q: PredId, r: PredId) -> Propagator {
    mk(Kind::Equality { q, r }, 1, format!("eq({q},{r})"))
}

/// The two clauses Q(d̄) ∨ ¬R(d̄), ¬Q(d̄) ∨ R(d̄).
pub fn equality_clauses(q: AtomId, r: AtomId) -> Vec<Clause> {
    [(true, false), (false, true)]
        .iter()
        .filter_map(|&(pq, pr)| Clause::new([Lit::new(q, pq), Lit::new(r, pr)]))
        .collect()
}

pub fn equality_tuple_propagator(q: AtomId, r: AtomId) -> Propagator {
    let clauses = equality_clauses(q, r);
    mk(Kind::EqualityTuple { q, r, clauses }, 0, format!("eqt({q},{r})"))
}

pub fn forward_closure_propagator(edge: PredId, trans: PredId) -> Propagator {
    mk(Kind::ForwardClosure { edge, trans }, 1, format!("fwd({edge},{trans})"))
}

/// Checker for −{i}, strengthened by unit propagation on ¬i (rank 0).
pub fn forbid_model_checker(i: &PartialStructure) -> Propagator {
    clause_propagator(vec![Clause::negating(i, None)])
}

/// The E-checker, deciding membership with the enumeration oracle.
pub fn checker_of(e: &ModuleExpr, interp: &ModuleInterpretation) -> Result<Propagator, AlgebraError> {
    let eval = Evaluator::new(e, interp)?;
    let expr = e.to_string();
    let key = format!("check[{expr}]");
    Ok(mk(Kind::Check(Verdict::Module { expr, eval: Arc::new(Mutex::new(eval)) }), 1, key))
}

pub fn atomic_checker(name: &str, def: &AtomicModuleDef) -> Propagator {
    let key = format!("check[{name}]");
    mk(Kind::Check(Verdict::Atomic { name: name.to_string(), def: def.clone() }), 1, key)
}

pub fn product_checker(p1: &Propagator, p2: &Propagator) -> Propagator {
    let key = format!("xcheck({},{})", p1.key(), p2.key());
    mk(Kind::Check(Verdict::Product(p1.clone(), p2.clone())), 1 + p1.rank().max(p2.rank()), key)
}

pub fn select_checker(q: PredId, r: PredId, p: &Propagator) -> Propagator {
    let key = format!("scheck({q},{r},{})", p.key());
    mk(Kind::Check(Verdict::Select { q, r, inner: p.clone() }), 1 + p.rank(), key)
}

pub fn project_checker(sig: &Signature, delta: &PredSet, p: &Propagator, solver: SolverFn) -> Propagator {
    let key = format!("pcheck({delta:?},{})", p.key());
    let mask = sig.atom_mask(delta);
    mk(Kind::Check(Verdict::Project { delta: delta.clone(), mask, solver }), 1 + p.rank(), key)
}

pub fn compose(p1: &Propagator, p2: &Propagator) -> Propagator {
    let key = format!("({} o {})", p1.key(), p2.key());
    mk(Kind::Compose(p1.clone(), p2.clone()), 1 + p1.rank().max(p2.rank()), key)
}

pub fn fixpoint(p: &Propagator) -> Propagator {
    mk(Kind::Fixpoint(p.clone()), p.rank(), format!("fix({})", p.key()))
}

pub fn product_prop(p1: Propagator, p2: Propagator) -> Propagator {
    let key = format!("({} x {})", p1.key(), p2.key());
    let rank = 1 + p1.rank().max(p2.rank());
    mk(Kind::Product(p1, p2), rank, key)
}

pub fn disjoin_prop(p1: &Propagator, p2: &Propagator) -> Propagator {
    let key = format!("({} + {})", p1.key(), p2.key());
    mk(Kind::Disjoin(p1.clone(), p2.clone()), 1 + p1.rank().max(p2.rank()), key)
}

pub fn project_prop(sig: &Signature, delta: &PredSet, p: &Propagator, inner_solver: SolverFn) -> Propagator {
    let key = format!("pi({delta:?},{})", p.key());
    let mask = sig.atom_mask(delta);
    mk(Kind::Project { delta: delta.clone(), mask, inner: p.clone(), solver: inner_solver }, 1 + p.rank(), key)
}

pub fn select_prop(q: PredId, r: PredId, p: &Propagator) -> Propagator {
    let key = format!("sigma({q},{r},{})", p.key());
    mk(Kind::Select { q, r, inner: p.clone() }, 1 + p.rank(), key)
}

pub fn complement_checker(p: &Propagator) -> Propagator {
    mk(Kind::ComplementCheck(p.clone()), 1 + p.rank(), format!("-{}", p.key()))
}

/// Maps inconsistent outputs of `p` to 𝔗.
pub fn collapse(p: Propagator) -> Propagator {
    if let Kind::Collapse(_) | Kind::Clauses { collapse: true, .. } = p.kind() {
        return p;
    }
    let (rank, key) = (p.rank(), format!("c{}", p.key()));
    mk(Kind::Collapse(p), rank, key)
}

/// Propagator for −π_δE given a solver for E.
pub fn negation_nested(sig: &Signature, delta: &PredSet, s: SolverFn) -> Propagator {
    let key = format!("nn({delta:?},{})", s.name());
    mk(Kind::NegationNested { delta: delta.clone(), mask: sig.atom_mask(delta), solver: s }, 1, key)
}

pub fn optimal_from_solver(s: SolverFn) -> Propagator {
    let key = format!("opt({})", s.name());
    mk(Kind::Optimal(s), 1, key)
}

/// Arbitrary operator; for tests and fault injection. No law is enforced.
pub fn custom(name: &str, rank: usize, f: impl Fn(&PartialStructure) -> PartialStructure + Send + Sync + 'static) -> Propagator {
    mk(Kind::Custom(Arc::new(f)), rank, format!("custom({name})"))
}

/// Structures of the signature ever enumerated by `module_of` are capped at this many atoms.
pub const MODULE_OF_ATOM_LIMIT: usize = 16;

/// Two-valued fixpoints of `p`.
pub fn module_of(p: &Propagator, sig: &Arc<Signature>) -> Result<Vec<PartialStructure>, String> {
    let n = sig.num_atoms();
    if n > MODULE_OF_ATOM_LIMIT {
        return Err(format!("signature has {n} atoms; module enumeration is limited to {MODULE_OF_ATOM_LIMIT}"));
    }
    let mut out = Vec::new();
    for bits in 0u64..(1u64 << n) {
        // Bit n-1-k set means atom k is false, so iteration runs T before F lexicographically.
        let vals = (0..n).map(|k| TruthValue::from_bool(bits >> (n - 1 - k) & 1 == 0)).collect();
        let i = PartialStructure::from_vals(sig, vals);
        if p.propagate(&i) == i {
            out.push(i);
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Strategy {
    Checker,
    #[default]
    Best,
}

/// The natural propagator of an atomic module.
pub fn atomic_propagator(name: &str, def: &AtomicModuleDef, sig: &Signature) -> Propagator {
    match &def.body {
        ModuleBody::Clauses(cs) => clause_propagator(cs.clone()),
        ModuleBody::Table(_) | ModuleBody::Builtin(Builtin::FullRelation { .. }) => atomic_checker(name, def),
        ModuleBody::Builtin(Builtin::BoundsLeq { qc, qd }) => bounds_module_propagator(sig, *qc, *qd),
        ModuleBody::Builtin(Builtin::TransitiveClosure { edge, trans }) => {
            collapse(fixpoint(&product_prop(forward_closure_propagator(*edge, *trans), atomic_checker(name, def))))
        }
    }
}

/// Assembles a propagator for `e` bottom-up; every node is collapsed.
pub fn build_propagator(e: &ModuleExpr, interp: &ModuleInterpretation, strategy: Strategy) -> Result<Propagator, AlgebraError> {
    crate::algebra::typecheck(e, interp)?;
    build_rec(e, interp, strategy)
}

fn build_rec(e: &ModuleExpr, interp: &ModuleInterpretation, strategy: Strategy) -> Result<Propagator, AlgebraError> {
    let sig = &interp.sig;
    let pid = |n: &str| sig.pred_id(n).expect("typechecked predicate");
    let p = match e {
        ModuleExpr::Bot => top_propagator(),
        ModuleExpr::Atomic(n) => atomic_propagator(n, interp.get(n)?, sig),
        ModuleExpr::Product(a, b) => {
            let (pa, pb) = (build_rec(a, interp, strategy)?, build_rec(b, interp, strategy)?);
            match strategy {
                Strategy::Best => collapse(product_prop(pa, pb)),
                Strategy::Checker => product_checker(&pa, &pb),
            }
        }
        ModuleExpr::Complement(a) => collapse(complement_checker(&build_rec(a, interp, strategy)?)),
        ModuleExpr::Project(d, a) => {
            let delta = sig.pred_set(d)?;
            let pa = build_rec(a, interp, strategy)?;
            let solver = SolverFn::search(&pa);
            match strategy {
                Strategy::Best => collapse(project_prop(sig, &delta, &pa, solver)),
                Strategy::Checker => project_checker(sig, &delta, &pa, solver),
            }
        }
        ModuleExpr::Select(q, r, a) => {
            let pa = build_rec(a, interp, strategy)?;
            match strategy {
                Strategy::Best => collapse(select_prop(pid(q), pid(r), &pa)),
                Strategy::Checker => select_checker(pid(q), pid(r), &pa),
            }
        }
        ModuleExpr::Plus(a, b) => {
            let (pa, pb) = (build_rec(a, interp, strategy)?, build_rec(b, interp, strategy)?);
            collapse(disjoin_prop(&pa, &pb))
        }
        ModuleExpr::SelectTheta(t, _) => {
            let mut p = build_rec(&desugar(e)?, interp, strategy)?;
            if strategy == Strategy::Best {
                for (q, r) in entailed_equalities(t)? {
                    p = collapse(select_prop(pid(&q), pid(&r), &p));
                }
            }
            p
        }
    };
    Ok(p.with_tag(e))
}

/// `voc(e)` as an atom mask.
pub fn voc_mask(e: &ModuleExpr, interp: &ModuleInterpretation) -> Result<Vec<bool>, AlgebraError> {
    Ok(interp.sig.atom_mask(&vocabulary_of(e, interp)?))
}
