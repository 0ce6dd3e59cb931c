//! Module expressions, atomic module definitions and the enumeration oracle.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::lattice::{AtomId, LatticeError, PartialStructure, PredId, PredSet, Signature, TruthValue};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AlgebraError {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("unknown module `{0}`")]
    UnknownModule(String),
    #[error("selection `{q}=={r}` compares predicates of different arity")]
    ArityMismatch { q: String, r: String },
    #[error("predicate `{pred}` is not in the vocabulary of the selected expression")]
    NotInVocabulary { pred: String },
    #[error("structure is not two-valued")]
    NotTwoValued,
    #[error("selection formula uses {0} distinct equality atoms; at most 16 are supported")]
    ThetaTooLarge(usize),
    #[error("invalid module definition `{name}`: {msg}")]
    InvalidModule { name: String, msg: String },
}

/// Literal over a dense atom index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Lit {
    pub atom: AtomId,
    pub pos: bool,
}

impl Lit {
    pub fn new(atom: AtomId, pos: bool) -> Self {
        Lit { atom, pos }
    }

    pub fn negate(self) -> Self {
        Lit { atom: self.atom, pos: !self.pos }
    }

    /// Value that makes the literal true.
    pub fn sat_value(self) -> TruthValue {
        TruthValue::from_bool(self.pos)
    }

    /// True when the literal is false in `v` under the precision order (v ≥p its falsifying value).
    #[inline]
    pub fn is_false_in(self, v: TruthValue) -> bool {
        TruthValue::from_bool(!self.pos).leq_p(v)
    }

    #[inline]
    pub fn is_true_in(self, v: TruthValue) -> bool {
        self.sat_value().leq_p(v)
    }

    pub fn display(self, sig: &Signature) -> String {
        if self.pos {
            sig.atom_name(self.atom)
        } else {
            format!("-{}", sig.atom_name(self.atom))
        }
    }
}

/// A ground clause: literals sorted by atom, no atom twice.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Clause {
    lits: Vec<Lit>,
}

impl Clause {
    /// Sorts and deduplicates; returns `None` for a tautology.
    pub fn new(lits: impl IntoIterator<Item = Lit>) -> Option<Clause> {
        let mut lits: Vec<Lit> = lits.into_iter().collect();
        lits.sort();
        lits.dedup();
        if lits.windows(2).any(|w| w[0].atom == w[1].atom) {
            return None;
        }
        Some(Clause { lits })
    }

    pub fn lits(&self) -> &[Lit] {
        &self.lits
    }

    pub fn len(&self) -> usize {
        self.lits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lits.is_empty()
    }

    pub fn contains(&self, l: Lit) -> bool {
        self.lits.binary_search(&l).is_ok()
    }

    pub fn satisfied_by(&self, i: &PartialStructure) -> bool {
        self.lits.iter().any(|l| i.get(l.atom) == l.sat_value())
    }

    /// The clause forbidding every known literal of `b` on atoms selected by `mask`.
    pub fn negating(b: &PartialStructure, mask: Option<&[bool]>) -> Clause {
        let lits = b
            .vals()
            .iter()
            .enumerate()
            .filter(|(a, v)| v.is_two_valued() && mask.is_none_or(|m| m[*a]))
            .map(|(a, v)| Lit::new(a, *v == TruthValue::F));
        Clause::new(lits).expect("negation of a consistent assignment is never tautological")
    }

    pub fn display(&self, sig: &Signature) -> String {
        let parts: Vec<String> = self.lits.iter().map(|l| l.display(sig)).collect();
        format!("[{}]", parts.join(", "))
    }

    pub fn key(&self) -> String {
        let parts: Vec<String> =
            self.lits.iter().map(|l| format!("{}{}", if l.pos { "" } else { "-" }, l.atom)).collect();
        parts.join(" ")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Builtin {
    /// Trans is the transitive closure (paths of length ≥ 1) of Edge.
    TransitiveClosure { edge: PredId, trans: PredId },
    /// Sym is the full relation A^arity.
    FullRelation { sym: PredId },
    /// Two unary threshold predicates encoding integers c ≤ d.
    BoundsLeq { qc: PredId, qd: PredId },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ModuleBody {
    /// Each row lists the atoms that are true; all other voc(M) atoms are false.
    Table(Vec<BTreeSet<AtomId>>),
    Clauses(Vec<Clause>),
    Builtin(Builtin),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AtomicModuleDef {
    pub voc: PredSet,
    pub body: ModuleBody,
}

impl AtomicModuleDef {
    pub fn validate(&self, name: &str, sig: &Signature) -> Result<(), AlgebraError> {
        let bad = |msg: String| AlgebraError::InvalidModule { name: name.to_string(), msg };
        if let Some(p) = self.voc.iter().find(|&&p| p >= sig.num_preds()) {
            return Err(bad(format!("predicate #{p} is not declared")));
        }
        let in_voc = |a: AtomId| self.voc.contains(&sig.pred_of(a));
        match &self.body {
            ModuleBody::Table(rows) => {
                for row in rows {
                    if let Some(&a) = row.iter().find(|&&a| !in_voc(a)) {
                        return Err(bad(format!("row atom {} is outside the module vocabulary", sig.atom_name(a))));
                    }
                }
            }
            ModuleBody::Clauses(cs) => {
                for c in cs {
                    if let Some(l) = c.lits().iter().find(|l| !in_voc(l.atom)) {
                        return Err(bad(format!("clause atom {} is outside the module vocabulary", sig.atom_name(l.atom))));
                    }
                }
            }
            ModuleBody::Builtin(b) => {
                let need = |p: PredId, arity: Option<usize>| -> Result<(), AlgebraError> {
                    if !self.voc.contains(&p) {
                        return Err(bad(format!("argument {} must be in the module vocabulary", sig.pred(p).name)));
                    }
                    if let Some(k) = arity {
                        if sig.pred(p).arity != k {
                            return Err(bad(format!("argument {} must have arity {k}", sig.pred(p).name)));
                        }
                    }
                    Ok(())
                };
                match *b {
                    Builtin::TransitiveClosure { edge, trans } => {
                        need(edge, Some(2))?;
                        need(trans, Some(2))?;
                    }
                    Builtin::FullRelation { sym } => need(sym, None)?,
                    Builtin::BoundsLeq { qc, qd } => {
                        need(qc, Some(1))?;
                        need(qd, Some(1))?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn kind_name(&self) -> &'static str {
        match &self.body {
            ModuleBody::Table(_) => "table",
            ModuleBody::Clauses(_) => "clause",
            ModuleBody::Builtin(Builtin::TransitiveClosure { .. }) => "transitive_closure",
            ModuleBody::Builtin(Builtin::FullRelation { .. }) => "full_relation",
            ModuleBody::Builtin(Builtin::BoundsLeq { .. }) => "bounds_leq",
        }
    }
}

/// Atomic module names mapped to their definitions over one signature.
#[derive(Clone, Debug)]
pub struct ModuleInterpretation {
    pub sig: Arc<Signature>,
    pub defs: BTreeMap<String, AtomicModuleDef>,
}

impl ModuleInterpretation {
    pub fn new(sig: &Arc<Signature>) -> Self {
        ModuleInterpretation { sig: sig.clone(), defs: BTreeMap::new() }
    }

    pub fn insert(&mut self, name: &str, def: AtomicModuleDef) -> Result<(), AlgebraError> {
        def.validate(name, &self.sig)?;
        self.defs.insert(name.to_string(), def);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&AtomicModuleDef, AlgebraError> {
        self.defs.get(name).ok_or_else(|| AlgebraError::UnknownModule(name.to_string()))
    }
}

/// Boolean combination of predicate equalities for extended selection.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Theta {
    Eq(String, String),
    Neq(String, String),
    Not(Box<Theta>),
    And(Box<Theta>, Box<Theta>),
    Or(Box<Theta>, Box<Theta>),
}

impl Theta {
    fn collect_atoms(&self, out: &mut BTreeSet<(String, String)>) {
        match self {
            Theta::Eq(a, b) | Theta::Neq(a, b) => {
                if a != b {
                    out.insert(norm_pair(a, b));
                }
            }
            Theta::Not(t) => t.collect_atoms(out),
            Theta::And(x, y) | Theta::Or(x, y) => {
                x.collect_atoms(out);
                y.collect_atoms(out);
            }
        }
    }

    /// Distinct equality atoms, reflexive ones excluded.
    pub fn atoms(&self) -> BTreeSet<(String, String)> {
        let mut out = BTreeSet::new();
        self.collect_atoms(&mut out);
        out
    }

    pub fn eval_with(&self, eq: &dyn Fn(&str, &str) -> bool) -> bool {
        match self {
            Theta::Eq(a, b) => a == b || eq(a, b),
            Theta::Neq(a, b) => !(a == b || eq(a, b)),
            Theta::Not(t) => !t.eval_with(eq),
            Theta::And(x, y) => x.eval_with(eq) && y.eval_with(eq),
            Theta::Or(x, y) => x.eval_with(eq) || y.eval_with(eq),
        }
    }

    fn pred_names(&self, out: &mut Vec<(String, String)>) {
        match self {
            Theta::Eq(a, b) | Theta::Neq(a, b) => out.push((a.clone(), b.clone())),
            Theta::Not(t) => t.pred_names(out),
            Theta::And(x, y) | Theta::Or(x, y) => {
                x.pred_names(out);
                y.pred_names(out);
            }
        }
    }
}

fn norm_pair(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

impl fmt::Display for Theta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Theta::Eq(a, b) => write!(f, "{a}=={b}"),
            Theta::Neq(a, b) => write!(f, "{a}!={b}"),
            Theta::Not(t) => write!(f, "!({t})"),
            Theta::And(x, y) => write!(f, "({x} & {y})"),
            Theta::Or(x, y) => write!(f, "({x} | {y})"),
        }
    }
}

/// The algebra's expression tree; `Plus` and `SelectTheta` are sugar.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ModuleExpr {
    Bot,
    Atomic(String),
    Product(Box<ModuleExpr>, Box<ModuleExpr>),
    Complement(Box<ModuleExpr>),
    Project(Vec<String>, Box<ModuleExpr>),
    Select(String, String, Box<ModuleExpr>),
    Plus(Box<ModuleExpr>, Box<ModuleExpr>),
    SelectTheta(Theta, Box<ModuleExpr>),
}

impl ModuleExpr {
    pub fn atomic(name: &str) -> Self {
        ModuleExpr::Atomic(name.to_string())
    }

    pub fn product(a: ModuleExpr, b: ModuleExpr) -> Self {
        ModuleExpr::Product(Box::new(a), Box::new(b))
    }

    pub fn complement(a: ModuleExpr) -> Self {
        ModuleExpr::Complement(Box::new(a))
    }

    pub fn project<S: AsRef<str>>(delta: &[S], a: ModuleExpr) -> Self {
        ModuleExpr::Project(delta.iter().map(|s| s.as_ref().to_string()).collect(), Box::new(a))
    }

    pub fn select(q: &str, r: &str, a: ModuleExpr) -> Self {
        ModuleExpr::Select(q.to_string(), r.to_string(), Box::new(a))
    }

    pub fn plus(a: ModuleExpr, b: ModuleExpr) -> Self {
        ModuleExpr::Plus(Box::new(a), Box::new(b))
    }

    pub fn select_theta(t: Theta, a: ModuleExpr) -> Self {
        ModuleExpr::SelectTheta(t, Box::new(a))
    }

    pub fn is_minimal(&self) -> bool {
        match self {
            ModuleExpr::Bot | ModuleExpr::Atomic(_) => true,
            ModuleExpr::Product(a, b) => a.is_minimal() && b.is_minimal(),
            ModuleExpr::Complement(a) | ModuleExpr::Project(_, a) | ModuleExpr::Select(_, _, a) => a.is_minimal(),
            ModuleExpr::Plus(..) | ModuleExpr::SelectTheta(..) => false,
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            ModuleExpr::Bot | ModuleExpr::Atomic(_) => 0,
            ModuleExpr::Product(a, b) | ModuleExpr::Plus(a, b) => 1 + a.depth().max(b.depth()),
            ModuleExpr::Complement(a)
            | ModuleExpr::Project(_, a)
            | ModuleExpr::Select(_, _, a)
            | ModuleExpr::SelectTheta(_, a) => 1 + a.depth(),
        }
    }
}

/// Prints in the problem language's expression syntax; binary nodes are parenthesized.
impl fmt::Display for ModuleExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModuleExpr::Bot => write!(f, "bot"),
            ModuleExpr::Atomic(n) => write!(f, "{n}"),
            ModuleExpr::Product(a, b) => write!(f, "({a} * {b})"),
            ModuleExpr::Plus(a, b) => write!(f, "({a} + {b})"),
            ModuleExpr::Complement(a) => write!(f, "-{a}"),
            ModuleExpr::Project(d, a) => write!(f, "project {{{}}} ({a})", d.join(", ")),
            ModuleExpr::Select(q, r, a) => write!(f, "select {q}=={r} ({a})"),
            ModuleExpr::SelectTheta(t, a) => write!(f, "select [{t}] ({a})"),
        }
    }
}

pub fn vocabulary_of(e: &ModuleExpr, interp: &ModuleInterpretation) -> Result<PredSet, AlgebraError> {
    let sig = &interp.sig;
    Ok(match e {
        ModuleExpr::Bot => sig.all_preds(),
        ModuleExpr::Atomic(n) => interp.get(n)?.voc.clone(),
        ModuleExpr::Product(a, b) | ModuleExpr::Plus(a, b) => {
            let mut v = vocabulary_of(a, interp)?;
            v.extend(vocabulary_of(b, interp)?);
            v
        }
        ModuleExpr::Complement(a) | ModuleExpr::Select(_, _, a) | ModuleExpr::SelectTheta(_, a) => {
            vocabulary_of(a, interp)?
        }
        ModuleExpr::Project(d, _) => sig.pred_set(d)?,
    })
}

fn check_pair(q: &str, r: &str, voc: &PredSet, sig: &Signature) -> Result<(PredId, PredId), AlgebraError> {
    let qi = sig.pred_id(q).ok_or_else(|| LatticeError::UnknownPredicate(q.to_string()))?;
    let ri = sig.pred_id(r).ok_or_else(|| LatticeError::UnknownPredicate(r.to_string()))?;
    if sig.pred(qi).arity != sig.pred(ri).arity {
        return Err(AlgebraError::ArityMismatch { q: q.to_string(), r: r.to_string() });
    }
    for (name, id) in [(q, qi), (r, ri)] {
        if !voc.contains(&id) {
            return Err(AlgebraError::NotInVocabulary { pred: name.to_string() });
        }
    }
    Ok((qi, ri))
}

/// Resolves names and checks arities, δ ⊆ τ and selection vocabularies.
pub fn typecheck(e: &ModuleExpr, interp: &ModuleInterpretation) -> Result<(), AlgebraError> {
    match e {
        ModuleExpr::Bot => Ok(()),
        ModuleExpr::Atomic(n) => interp.get(n).map(|_| ()),
        ModuleExpr::Product(a, b) | ModuleExpr::Plus(a, b) => {
            typecheck(a, interp)?;
            typecheck(b, interp)
        }
        ModuleExpr::Complement(a) => typecheck(a, interp),
        ModuleExpr::Project(d, a) => {
            interp.sig.pred_set(d)?;
            typecheck(a, interp)
        }
        ModuleExpr::Select(q, r, a) => {
            typecheck(a, interp)?;
            check_pair(q, r, &vocabulary_of(a, interp)?, &interp.sig).map(|_| ())
        }
        ModuleExpr::SelectTheta(t, a) => {
            typecheck(a, interp)?;
            let n = t.atoms().len();
            if n > 16 {
                return Err(AlgebraError::ThetaTooLarge(n));
            }
            let voc = vocabulary_of(a, interp)?;
            let mut pairs = Vec::new();
            t.pred_names(&mut pairs);
            for (q, r) in pairs {
                check_pair(&q, &r, &voc, &interp.sig)?;
            }
            Ok(())
        }
    }
}

/// Reachability by paths of length ≥ 1 over an n×n adjacency matrix.
pub fn transitive_closure(n: usize, edge: &[bool]) -> Vec<bool> {
    let mut r = edge.to_vec();
    for k in 0..n {
        for x in 0..n {
            if r[x * n + k] {
                for y in 0..n {
                    if r[k * n + y] {
                        r[x * n + y] = true;
                    }
                }
            }
        }
    }
    r
}

fn is_upward_closed(vals: &[bool]) -> bool {
    vals.windows(2).all(|w| !w[0] || w[1])
}

/// Membership of a two-valued structure in an atomic module.
pub fn atomic_member(def: &AtomicModuleDef, i: &PartialStructure) -> Result<bool, AlgebraError> {
    let sig = i.sig();
    let voc_two_valued = def.voc.iter().all(|&p| sig.atoms_of(p).all(|a| i.get(a).is_two_valued()));
    if !voc_two_valued {
        return Err(AlgebraError::NotTwoValued);
    }
    let truth = |a: AtomId| i.get(a) == TruthValue::T;
    Ok(match &def.body {
        ModuleBody::Table(rows) => rows.iter().any(|row| {
            def.voc.iter().all(|&p| sig.atoms_of(p).all(|a| truth(a) == row.contains(&a)))
        }),
        ModuleBody::Clauses(cs) => cs.iter().all(|c| c.satisfied_by(i)),
        ModuleBody::Builtin(Builtin::TransitiveClosure { edge, trans }) => {
            let n = sig.domain().len();
            let e: Vec<bool> = sig.atoms_of(*edge).map(truth).collect();
            let t: Vec<bool> = sig.atoms_of(*trans).map(truth).collect();
            transitive_closure(n, &e) == t
        }
        ModuleBody::Builtin(Builtin::FullRelation { sym }) => sig.atoms_of(*sym).all(truth),
        ModuleBody::Builtin(Builtin::BoundsLeq { qc, qd }) => {
            let c: Vec<bool> = sig.atoms_of(*qc).map(truth).collect();
            let d: Vec<bool> = sig.atoms_of(*qd).map(truth).collect();
            is_upward_closed(&c) && is_upward_closed(&d) && d.iter().zip(&c).all(|(dv, cv)| !dv || *cv)
        }
    })
}

enum Node {
    Bot,
    Atomic(AtomicModuleDef),
    Product(usize, usize),
    Complement(usize),
    Project { mask: Vec<bool>, child: usize },
    Select { q: PredId, r: PredId, child: usize },
    Plus(usize, usize),
    Theta { theta: Theta, child: usize },
}

/// Brute-force evaluator with memoized projections keyed by the δ-part.
pub struct Evaluator {
    sig: Arc<Signature>,
    nodes: Vec<Node>,
    root: usize,
    memo: HashMap<(usize, Vec<TruthValue>), bool>,
}

impl Evaluator {
    pub fn new(e: &ModuleExpr, interp: &ModuleInterpretation) -> Result<Self, AlgebraError> {
        typecheck(e, interp)?;
        let mut ev = Evaluator { sig: interp.sig.clone(), nodes: Vec::new(), root: 0, memo: HashMap::new() };
        ev.root = ev.compile(e, interp)?;
        Ok(ev)
    }

    fn push(&mut self, n: Node) -> usize {
        self.nodes.push(n);
        self.nodes.len() - 1
    }

    fn compile(&mut self, e: &ModuleExpr, interp: &ModuleInterpretation) -> Result<usize, AlgebraError> {
        Ok(match e {
            ModuleExpr::Bot => self.push(Node::Bot),
            ModuleExpr::Atomic(n) => {
                let def = interp.get(n)?.clone();
                self.push(Node::Atomic(def))
            }
            ModuleExpr::Product(a, b) => {
                let (x, y) = (self.compile(a, interp)?, self.compile(b, interp)?);
                self.push(Node::Product(x, y))
            }
            ModuleExpr::Plus(a, b) => {
                let (x, y) = (self.compile(a, interp)?, self.compile(b, interp)?);
                self.push(Node::Plus(x, y))
            }
            ModuleExpr::Complement(a) => {
                let x = self.compile(a, interp)?;
                self.push(Node::Complement(x))
            }
            ModuleExpr::Project(d, a) => {
                let delta = self.sig.pred_set(d)?;
                let mask = self.sig.atom_mask(&delta);
                let child = self.compile(a, interp)?;
                self.push(Node::Project { mask, child })
            }
            ModuleExpr::Select(q, r, a) => {
                let child = self.compile(a, interp)?;
                let q = self.sig.pred_id(q).expect("typechecked");
                let r = self.sig.pred_id(r).expect("typechecked");
                self.push(Node::Select { q, r, child })
            }
            ModuleExpr::SelectTheta(t, a) => {
                let child = self.compile(a, interp)?;
                self.push(Node::Theta { theta: t.clone(), child })
            }
        })
    }

    fn equal_preds(sig: &Signature, vals: &[TruthValue], q: PredId, r: PredId) -> bool {
        sig.atoms_of(q).zip(sig.atoms_of(r)).all(|(a, b)| vals[a] == vals[b])
    }

    fn eval_node(&mut self, n: usize, vals: &mut Vec<TruthValue>) -> bool {
        match &self.nodes[n] {
            Node::Bot => false,
            Node::Atomic(def) => {
                let i = PartialStructure::from_vals(&self.sig, vals.clone());
                atomic_member(def, &i).expect("two-valued")
            }
            &Node::Product(a, b) => self.eval_node(a, vals) && self.eval_node(b, vals),
            &Node::Plus(a, b) => self.eval_node(a, vals) || self.eval_node(b, vals),
            &Node::Complement(a) => !self.eval_node(a, vals),
            &Node::Select { q, r, child } => {
                Self::equal_preds(&self.sig, vals, q, r) && self.eval_node(child, vals)
            }
            Node::Theta { theta, child } => {
                let child = *child;
                let sig = self.sig.clone();
                let holds = theta.eval_with(&|a: &str, b: &str| {
                    let (qa, qb) = (sig.pred_id(a).unwrap(), sig.pred_id(b).unwrap());
                    Self::equal_preds(&sig, vals, qa, qb)
                });
                holds && self.eval_node(child, vals)
            }
            Node::Project { mask, child } => {
                let child = *child;
                let key_vals: Vec<TruthValue> =
                    vals.iter().zip(mask).map(|(v, m)| if *m { *v } else { TruthValue::U }).collect();
                if let Some(&r) = self.memo.get(&(n, key_vals.clone())) {
                    return r;
                }
                let free: Vec<AtomId> = (0..vals.len()).filter(|&a| !mask[a]).collect();
                let saved: Vec<TruthValue> = free.iter().map(|&a| vals[a]).collect();
                let mut found = false;
                let total: u64 = 1u64 << free.len();
                for bits in 0..total {
                    for (k, &a) in free.iter().enumerate() {
                        vals[a] = TruthValue::from_bool(bits >> k & 1 == 1);
                    }
                    if self.eval_node(child, vals) {
                        found = true;
                        break;
                    }
                }
                for (k, &a) in free.iter().enumerate() {
                    vals[a] = saved[k];
                }
                self.memo.insert((n, key_vals), found);
                found
            }
        }
    }

    /// Evaluates on a two-valued structure.
    pub fn eval(&mut self, i: &PartialStructure) -> Result<bool, AlgebraError> {
        if !i.is_two_valued() {
            return Err(AlgebraError::NotTwoValued);
        }
        let mut vals = i.vals().to_vec();
        let root = self.root;
        Ok(self.eval_node(root, &mut vals))
    }
}

/// `⟦e⟧` membership of a two-valued structure; sugar nodes are evaluated by their semantics.
pub fn eval_module(e: &ModuleExpr, interp: &ModuleInterpretation, i: &PartialStructure) -> Result<bool, AlgebraError> {
    Evaluator::new(e, interp)?.eval(i)
}

/// All two-valued `i ≥p b` in `⟦e⟧`, lexicographic by atom with T before F.
pub fn enumerate_models(
    e: &ModuleExpr,
    interp: &ModuleInterpretation,
    b: &PartialStructure,
) -> Result<Vec<PartialStructure>, AlgebraError> {
    let mut ev = Evaluator::new(e, interp)?;
    let mut out = Vec::new();
    if !b.is_consistent() {
        return Ok(out);
    }
    let free: Vec<AtomId> = (0..b.len()).filter(|&a| b.get(a) == TruthValue::U).collect();
    let mut vals = b.vals().to_vec();
    fn rec(
        ev: &mut Evaluator,
        free: &[AtomId],
        k: usize,
        vals: &mut Vec<TruthValue>,
        out: &mut Vec<PartialStructure>,
    ) {
        if k == free.len() {
            let root = ev.root;
            if ev.eval_node(root, vals) {
                out.push(PartialStructure::from_vals(&ev.sig, vals.clone()));
            }
            return;
        }
        for v in [TruthValue::T, TruthValue::F] {
            vals[free[k]] = v;
            rec(ev, free, k + 1, vals, out);
        }
        vals[free[k]] = TruthValue::U;
    }
    rec(&mut ev, &free, 0, &mut vals, &mut out);
    Ok(out)
}

/// Restricts models to `voc`, deduplicated and sorted.
pub fn project_models(models: &[PartialStructure], voc: &PredSet) -> Vec<PartialStructure> {
    let set: BTreeSet<PartialStructure> = models.iter().map(|m| m.restrict(voc)).collect();
    set.into_iter().collect()
}

/// Pairs `(Q,R)` with `θ ⊨ Q≡R`, closed under symmetry and transitivity; each pair is listed once with `Q < R`.
pub fn entailed_equalities(theta: &Theta) -> Result<BTreeSet<(String, String)>, AlgebraError> {
    let atoms: Vec<(String, String)> = theta.atoms().into_iter().collect();
    let n = atoms.len();
    if n > 16 {
        return Err(AlgebraError::ThetaTooLarge(n));
    }
    let index: HashMap<(String, String), usize> = atoms.iter().cloned().enumerate().map(|(i, p)| (p, i)).collect();
    let mut names: Vec<String> = atoms.iter().flat_map(|(a, b)| [a.clone(), b.clone()]).collect();
    names.sort();
    names.dedup();
    let pos: HashMap<&str, usize> = names.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let ends: Vec<(usize, usize)> = atoms.iter().map(|(a, b)| (pos[a.as_str()], pos[b.as_str()])).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while parent[r] != r {
            r = parent[r];
        }
        parent[x] = r;
        r
    }
    // Classes of the equalities selected by `row`.
    let classes = |row: u32| {
        let mut parent: Vec<usize> = (0..names.len()).collect();
        for (k, &(a, b)) in ends.iter().enumerate() {
            if row >> k & 1 == 1 {
                let (x, y) = (find(&mut parent, a), find(&mut parent, b));
                parent[x] = y;
            }
        }
        parent
    };
    let mut always = vec![true; n];
    for row in 0u32..(1u32 << n) {
        // Equality is an equivalence: rows where a false atom joins two equal predicates are impossible.
        let mut parent = classes(row);
        let closed = ends.iter().enumerate().all(|(k, &(a, b))| row >> k & 1 == 1 || find(&mut parent, a) != find(&mut parent, b));
        if !closed {
            continue;
        }
        let holds = theta.eval_with(&|a: &str, b: &str| row >> index[&norm_pair(a, b)] & 1 == 1);
        if holds {
            for (k, slot) in always.iter_mut().enumerate() {
                *slot &= row >> k & 1 == 1;
            }
        }
    }
    let always_row = always.iter().enumerate().fold(0u32, |r, (k, &t)| r | (u32::from(t) << k));
    let mut parent = classes(always_row);
    let mut out = BTreeSet::new();
    for i in 0..names.len() {
        for j in i + 1..names.len() {
            if find(&mut parent, i) == find(&mut parent, j) {
                out.insert((names[i].clone(), names[j].clone()));
            }
        }
    }
    Ok(out)
}

fn rewrite_theta(t: &Theta, e: &ModuleExpr) -> ModuleExpr {
    match t {
        Theta::Eq(q, r) => ModuleExpr::select(q, r, e.clone()),
        Theta::Neq(q, r) => ModuleExpr::product(e.clone(), ModuleExpr::complement(ModuleExpr::select(q, r, e.clone()))),
        Theta::Not(x) => ModuleExpr::product(e.clone(), ModuleExpr::complement(rewrite_theta(x, e))),
        Theta::And(x, y) => rewrite_theta(x, &rewrite_theta(y, e)),
        Theta::Or(x, y) => ModuleExpr::complement(ModuleExpr::product(
            ModuleExpr::complement(rewrite_theta(x, e)),
            ModuleExpr::complement(rewrite_theta(y, e)),
        )),
    }
}

fn top_selects(e: &ModuleExpr) -> HashSet<(String, String)> {
    let mut out = HashSet::new();
    let mut cur = e;
    while let ModuleExpr::Select(q, r, inner) = cur {
        out.insert(norm_pair(q, r));
        cur = inner;
    }
    out
}

/// Eliminates `Plus` and `SelectTheta`; minimal-syntax input is returned unchanged.
pub fn desugar(e: &ModuleExpr) -> Result<ModuleExpr, AlgebraError> {
    Ok(match e {
        ModuleExpr::Bot | ModuleExpr::Atomic(_) => e.clone(),
        ModuleExpr::Product(a, b) => ModuleExpr::product(desugar(a)?, desugar(b)?),
        ModuleExpr::Complement(a) => ModuleExpr::complement(desugar(a)?),
        ModuleExpr::Project(d, a) => ModuleExpr::Project(d.clone(), Box::new(desugar(a)?)),
        ModuleExpr::Select(q, r, a) => ModuleExpr::select(q, r, desugar(a)?),
        ModuleExpr::Plus(a, b) => ModuleExpr::complement(ModuleExpr::product(
            ModuleExpr::complement(desugar(a)?),
            ModuleExpr::complement(desugar(b)?),
        )),
        ModuleExpr::SelectTheta(t, a) => {
            let inner = desugar(a)?;
            let mut core = rewrite_theta(t, &inner);
            let present = top_selects(&core);
            for (q, r) in entailed_equalities(t)? {
                if !present.contains(&(q.clone(), r.clone())) {
                    core = ModuleExpr::select(&q, &r, core);
                }
            }
            core
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use TruthValue::*;

    fn pq_interp() -> ModuleInterpretation {
        let sig = Signature::build(&["a"], &[("p", 0), ("q", 0)]).unwrap();
        let mut it = ModuleInterpretation::new(&sig);
        let c = Clause::new([Lit::new(0, true), Lit::new(1, true)]).unwrap();
        it.insert("M", AtomicModuleDef { voc: sig.all_preds(), body: ModuleBody::Clauses(vec![c]) }).unwrap();
        it
    }

    fn graph_interp(elems: &[&str]) -> ModuleInterpretation {
        let sig = Signature::build(elems, &[("Edge", 2), ("Trans", 2)]).unwrap();
        let mut it = ModuleInterpretation::new(&sig);
        let (e, t) = (sig.pred_id("Edge").unwrap(), sig.pred_id("Trans").unwrap());
        it.insert(
            "Mt",
            AtomicModuleDef {
                voc: [e, t].into_iter().collect(),
                body: ModuleBody::Builtin(Builtin::TransitiveClosure { edge: e, trans: t }),
            },
        )
        .unwrap();
        it.insert(
            "Mf",
            AtomicModuleDef { voc: [t].into_iter().collect(), body: ModuleBody::Builtin(Builtin::FullRelation { sym: t }) },
        )
        .unwrap();
        it
    }

    fn disconnected() -> ModuleExpr {
        ModuleExpr::project(
            &["Edge"],
            ModuleExpr::product(ModuleExpr::atomic("Mt"), ModuleExpr::complement(ModuleExpr::atomic("Mf"))),
        )
    }

    #[test]
    fn clause_construction() {
        assert!(Clause::new([Lit::new(0, true), Lit::new(0, false)]).is_none());
        let c = Clause::new([Lit::new(1, true), Lit::new(0, false), Lit::new(1, true)]).unwrap();
        assert_eq!(c.lits(), &[Lit::new(0, false), Lit::new(1, true)]);
    }

    #[test]
    fn vocabulary_rules() {
        let it = graph_interp(&["a", "b"]);
        assert_eq!(vocabulary_of(&ModuleExpr::Bot, &it).unwrap(), it.sig.all_preds());
        assert_eq!(vocabulary_of(&disconnected(), &it).unwrap(), it.sig.pred_set(&["Edge"]).unwrap());
        let both = ModuleExpr::product(ModuleExpr::atomic("Mf"), ModuleExpr::atomic("Mt"));
        assert_eq!(vocabulary_of(&both, &it).unwrap(), it.sig.all_preds());
        assert!(matches!(vocabulary_of(&ModuleExpr::atomic("X"), &it), Err(AlgebraError::UnknownModule(_))));
    }

    #[test]
    fn atomic_member_examples() {
        let it = graph_interp(&["a", "b"]);
        let sig = &it.sig;
        let mut i = PartialStructure::filled(sig, F);
        for a in sig.atoms_of(sig.pred_id("Trans").unwrap()) {
            i.set(a, T);
        }
        assert!(atomic_member(it.get("Mf").unwrap(), &i).unwrap());
        i.set(sig.atom_by_names("Edge", &["a", "b"]).unwrap(), T);
        i.set(sig.atom_by_names("Edge", &["b", "a"]).unwrap(), T);
        assert!(atomic_member(it.get("Mt").unwrap(), &i).unwrap());
        let pq = pq_interp();
        let ff = PartialStructure::from_vals(&pq.sig, vec![F, F]);
        assert!(!atomic_member(pq.get("M").unwrap(), &ff).unwrap());
        let partial = PartialStructure::unknown(&pq.sig);
        assert_eq!(atomic_member(pq.get("M").unwrap(), &partial), Err(AlgebraError::NotTwoValued));
    }

    #[test]
    fn eval_examples() {
        let it = graph_interp(&["a", "b"]);
        let sig = &it.sig;
        let i = PartialStructure::filled(sig, F);
        assert!(!eval_module(&ModuleExpr::Bot, &it, &i).unwrap());
        let mut i = i;
        i.set(sig.atom_by_names("Edge", &["a", "a"]).unwrap(), T);
        assert!(eval_module(&disconnected(), &it, &i).unwrap());
        let sel = ModuleExpr::select("Edge", "Trans", ModuleExpr::atomic("Mt"));
        assert!(!eval_module(&sel, &it, &i).unwrap());
    }

    #[test]
    fn enumerate_clause_models_in_order() {
        let it = pq_interp();
        let ms = enumerate_models(&ModuleExpr::atomic("M"), &it, &PartialStructure::unknown(&it.sig)).unwrap();
        let rows: Vec<Vec<TruthValue>> = ms.iter().map(|m| m.vals().to_vec()).collect();
        assert_eq!(rows, vec![vec![T, T], vec![T, F], vec![F, T]]);
        let bad = PartialStructure::from_vals(&it.sig, vec![I, U]);
        assert!(enumerate_models(&ModuleExpr::atomic("M"), &it, &bad).unwrap().is_empty());
    }

    #[test]
    fn disconnected_graph_two_elements() {
        let it = graph_interp(&["a", "b"]);
        let ms = enumerate_models(&disconnected(), &it, &PartialStructure::unknown(&it.sig)).unwrap();
        assert_eq!(ms.len(), 12 * 16);
        let edge = it.sig.pred_set(&["Edge"]).unwrap();
        assert_eq!(project_models(&ms, &edge).len(), 12);
    }

    #[test]
    fn desugar_examples() {
        let m1 = ModuleExpr::atomic("M1");
        let m2 = ModuleExpr::atomic("M2");
        assert_eq!(
            desugar(&ModuleExpr::plus(m1.clone(), m2.clone())).unwrap(),
            ModuleExpr::complement(ModuleExpr::product(
                ModuleExpr::complement(m1.clone()),
                ModuleExpr::complement(m2.clone())
            ))
        );
        let neq = ModuleExpr::select_theta(Theta::Neq("Q".into(), "R".into()), m1.clone());
        assert_eq!(
            desugar(&neq).unwrap(),
            ModuleExpr::product(m1.clone(), ModuleExpr::complement(ModuleExpr::select("Q", "R", m1.clone())))
        );
        let minimal = ModuleExpr::project(&["P"], ModuleExpr::product(m1, ModuleExpr::complement(m2)));
        assert_eq!(desugar(&minimal).unwrap(), minimal);
    }

    #[test]
    fn entailment_examples() {
        let eq = |a: &str, b: &str| Box::new(Theta::Eq(a.into(), b.into()));
        let neq = |a: &str, b: &str| Box::new(Theta::Neq(a.into(), b.into()));
        let t = Theta::And(Box::new(Theta::Or(neq("Q", "R"), eq("R", "U"))), eq("Q", "R"));
        let got = entailed_equalities(&t).unwrap();
        let want: BTreeSet<(String, String)> =
            [("Q", "R"), ("R", "U"), ("Q", "U")].iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        assert_eq!(got, want);
        assert_eq!(entailed_equalities(&Theta::Eq("Q".into(), "R".into())).unwrap().len(), 1);
        assert!(entailed_equalities(&Theta::Or(eq("Q", "R"), eq("R", "U"))).unwrap().is_empty());
        let t = Theta::And(eq("P", "Q"), Box::new(Theta::Or(eq("Q", "R"), Box::new(Theta::Not(neq("P", "R"))))));
        assert_eq!(entailed_equalities(&t).unwrap().len(), 3);
    }

    fn arb_theta() -> impl Strategy<Value = Theta> {
        let names = prop::sample::select(vec!["A", "B", "C", "D"]);
        let leaf = (names.clone(), names, any::<bool>()).prop_map(|(a, b, eq)| {
            if eq {
                Theta::Eq(a.into(), b.into())
            } else {
                Theta::Neq(a.into(), b.into())
            }
        });
        leaf.prop_recursive(3, 12, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(|t| Theta::Not(Box::new(t))),
                (inner.clone(), inner.clone()).prop_map(|(x, y)| Theta::And(Box::new(x), Box::new(y))),
                (inner.clone(), inner).prop_map(|(x, y)| Theta::Or(Box::new(x), Box::new(y))),
            ]
        })
    }

    /// Set partitions of `n` items as restricted growth strings.
    fn partitions(n: usize) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        for _ in 0..n {
            out = out
                .into_iter()
                .flat_map(|p: Vec<usize>| {
                    let top = p.iter().max().map_or(0, |m| m + 1);
                    (0..=top).map(move |b| {
                        let mut q = p.clone();
                        q.push(b);
                        q
                    })
                })
                .collect();
        }
        out
    }

    proptest! {
        #[test]
        fn entailment_matches_partition_semantics(t in arb_theta()) {
            let names = ["A", "B", "C", "D"];
            let mut used: Vec<&str> = names.iter().copied().filter(|n| {
                let mut v = Vec::new();
                t.pred_names(&mut v);
                v.iter().any(|(a, b)| a == n || b == n)
            }).collect();
            used.sort();
            let block = |p: &[usize], x: &str| p[used.iter().position(|u| *u == x).unwrap()];
            let models: Vec<Vec<usize>> =
                partitions(used.len()).into_iter().filter(|p| t.eval_with(&|a, b| block(p, a) == block(p, b))).collect();
            let mut want = BTreeSet::new();
            for (i, a) in used.iter().enumerate() {
                for b in &used[i + 1..] {
                    if models.iter().all(|p| block(p, a) == block(p, b)) {
                        want.insert((a.to_string(), b.to_string()));
                    }
                }
            }
            let got = entailed_equalities(&t).unwrap();
            if !models.is_empty() {
                prop_assert_eq!(got, want);
            }
        }
    }

    #[test]
    fn theta_budget() {
        let mut t = Theta::Eq("P0".into(), "P1".into());
        for k in 1..17 {
            t = Theta::And(Box::new(t), Box::new(Theta::Eq(format!("P{k}"), format!("P{}", k + 1))));
        }
        assert_eq!(entailed_equalities(&t), Err(AlgebraError::ThetaTooLarge(17)));
    }
}
