//! Random instance generation shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;

use modex::algebra::{typecheck, vocabulary_of, AtomicModuleDef, Builtin, Clause, Lit, ModuleBody, ModuleExpr, ModuleInterpretation};
use modex::lattice::{PartialStructure, PredId, PredSet, Signature, TruthValue};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub struct Instance {
    pub interp: ModuleInterpretation,
    pub expr: ModuleExpr,
    pub input: PartialStructure,
}

impl Instance {
    pub fn sig(&self) -> &Arc<Signature> {
        &self.interp.sig
    }
}

fn signature(rng: &mut ChaCha8Rng) -> (Arc<Signature>, bool) {
    match rng.gen_range(0..4) {
        0 => (Signature::build(&["a", "b"], &[("E", 2), ("T", 2), ("P", 1), ("Q", 1)]).unwrap(), true),
        1 => (Signature::build(&["a", "b"], &[("P", 1), ("Q", 1), ("R", 1), ("S", 0), ("W", 0), ("V", 1)]).unwrap(), false),
        2 => (Signature::build(&["a", "b", "c"], &[("P", 1), ("Q", 1), ("R", 1), ("S", 0), ("W", 0)]).unwrap(), false),
        _ => (Signature::build(&["a", "b", "c"], &[("P", 1), ("Q", 1), ("R", 1), ("V", 1)]).unwrap(), false),
    }
}

fn random_voc(rng: &mut ChaCha8Rng, sig: &Signature, max_atoms: usize) -> PredSet {
    let mut preds: Vec<PredId> = (0..sig.num_preds()).collect();
    preds.shuffle(rng);
    let want = rng.gen_range(1..=3);
    let mut voc = PredSet::new();
    let mut atoms = 0;
    for p in preds {
        let n = sig.atoms_of(p).len();
        if voc.len() < want && atoms + n <= max_atoms {
            voc.insert(p);
            atoms += n;
        }
    }
    if voc.is_empty() {
        let smallest = (0..sig.num_preds()).min_by_key(|&p| sig.atoms_of(p).len()).unwrap();
        voc.insert(smallest);
    }
    voc
}

fn voc_atoms(sig: &Signature, voc: &PredSet) -> Vec<usize> {
    voc.iter().flat_map(|&p| sig.atoms_of(p)).collect()
}

fn random_clauses(rng: &mut ChaCha8Rng, atoms: &[usize]) -> Vec<Clause> {
    let mut out = Vec::new();
    for _ in 0..rng.gen_range(1..=3) {
        let len = rng.gen_range(1..=3.min(atoms.len()));
        let lits: Vec<Lit> = atoms.choose_multiple(rng, len).map(|&a| Lit::new(a, rng.gen_bool(0.5))).collect();
        out.extend(Clause::new(lits));
    }
    out
}

fn random_table(rng: &mut ChaCha8Rng, atoms: &[usize]) -> Vec<BTreeSet<usize>> {
    (0..rng.gen_range(1..=4))
        .map(|_| atoms.iter().copied().filter(|_| rng.gen_bool(0.5)).collect())
        .collect()
}

fn random_module(rng: &mut ChaCha8Rng, sig: &Signature, has_graph: bool) -> AtomicModuleDef {
    let unary: Vec<PredId> = (0..sig.num_preds()).filter(|&p| sig.pred(p).arity == 1).collect();
    loop {
        match rng.gen_range(0..10) {
            0..=3 => {
                let voc = random_voc(rng, sig, 8);
                let body = ModuleBody::Clauses(random_clauses(rng, &voc_atoms(sig, &voc)));
                return AtomicModuleDef { voc, body };
            }
            4..=6 => {
                let voc = random_voc(rng, sig, 6);
                let body = ModuleBody::Table(random_table(rng, &voc_atoms(sig, &voc)));
                return AtomicModuleDef { voc, body };
            }
            7 => {
                let sym = *unary.choose(rng).unwrap();
                return AtomicModuleDef { voc: [sym].into(), body: ModuleBody::Builtin(Builtin::FullRelation { sym }) };
            }
            8 if unary.len() >= 2 => {
                let pair: Vec<PredId> = unary.choose_multiple(rng, 2).copied().collect();
                let (qc, qd) = (pair[0], pair[1]);
                return AtomicModuleDef { voc: [qc, qd].into(), body: ModuleBody::Builtin(Builtin::BoundsLeq { qc, qd }) };
            }
            9 if has_graph => {
                let (edge, trans) = (sig.pred_id("E").unwrap(), sig.pred_id("T").unwrap());
                return AtomicModuleDef {
                    voc: [edge, trans].into(),
                    body: ModuleBody::Builtin(Builtin::TransitiveClosure { edge, trans }),
                };
            }
            _ => {}
        }
    }
}

fn random_expr(rng: &mut ChaCha8Rng, interp: &ModuleInterpretation, names: &[String], depth: usize) -> ModuleExpr {
    let sig = &interp.sig;
    if depth == 0 || rng.gen_bool(0.25) {
        if rng.gen_bool(0.03) {
            return ModuleExpr::Bot;
        }
        return ModuleExpr::Atomic(names.choose(rng).unwrap().clone());
    }
    match rng.gen_range(0..4) {
        0 => ModuleExpr::product(random_expr(rng, interp, names, depth - 1), random_expr(rng, interp, names, depth - 1)),
        1 => ModuleExpr::complement(random_expr(rng, interp, names, depth - 1)),
        2 => {
            let inner = random_expr(rng, interp, names, depth - 1);
            let delta: Vec<String> =
                sig.vocab().preds().iter().filter(|_| rng.gen_bool(0.5)).map(|p| p.name.clone()).collect();
            ModuleExpr::project(&delta, inner)
        }
        _ => {
            let inner = random_expr(rng, interp, names, depth - 1);
            let voc: Vec<PredId> = vocabulary_of(&inner, interp).unwrap().into_iter().collect();
            let pairs: Vec<(PredId, PredId)> = voc
                .iter()
                .flat_map(|&q| voc.iter().map(move |&r| (q, r)))
                .filter(|&(q, r)| q < r && sig.pred(q).arity == sig.pred(r).arity)
                .collect();
            match pairs.choose(rng) {
                Some(&(q, r)) => ModuleExpr::select(&sig.pred(q).name, &sig.pred(r).name, inner),
                None => ModuleExpr::product(inner, random_expr(rng, interp, names, depth - 1)),
            }
        }
    }
}

/// A random consistent partial structure with roughly `density` of the atoms known.
pub fn random_partial(rng: &mut ChaCha8Rng, sig: &Arc<Signature>, density: f64) -> PartialStructure {
    let vals = (0..sig.num_atoms())
        .map(|_| if rng.gen_bool(density) { TruthValue::from_bool(rng.gen_bool(0.5)) } else { TruthValue::U })
        .collect();
    PartialStructure::from_vals(sig, vals)
}

/// Any structure, inconsistent ones included.
pub fn random_any(rng: &mut ChaCha8Rng, sig: &Arc<Signature>) -> PartialStructure {
    let vals = (0..sig.num_atoms()).map(|_| TruthValue::from_bits(rng.gen_range(0..4u8))).collect();
    PartialStructure::from_vals(sig, vals)
}

/// A structure at least as precise as `b`.
pub fn refine(rng: &mut ChaCha8Rng, b: &PartialStructure) -> PartialStructure {
    let mut out = b.clone();
    for a in 0..b.len() {
        if rng.gen_bool(0.3) {
            out.join_at(a, TruthValue::from_bits(rng.gen_range(0..4u8)));
        }
    }
    out
}

/// A random desugared expression of depth ≤ 3 over 2–3 elements and ≤ 12 atoms.
pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let (sig, has_graph) = signature(rng);
    assert!(sig.num_atoms() <= 12);
    let mut interp = ModuleInterpretation::new(&sig);
    let count = rng.gen_range(2..=4);
    let mut names = Vec::new();
    for k in 0..count {
        let name = format!("M{k}");
        interp.insert(&name, random_module(rng, &sig, has_graph)).unwrap();
        names.push(name);
    }
    let expr = random_expr(rng, &interp, &names, 3);
    typecheck(&expr, &interp).unwrap();
    let input = if rng.gen_bool(0.3) { random_partial(rng, &sig, 0.15) } else { PartialStructure::unknown(&sig) };
    Instance { interp, expr, input }
}

/// Another random expression over the modules of `interp`.
pub fn random_expr_in(rng: &mut ChaCha8Rng, interp: &ModuleInterpretation) -> ModuleExpr {
    let names: Vec<String> = interp.defs.keys().cloned().collect();
    let e = random_expr(rng, interp, &names, 3);
    typecheck(&e, interp).unwrap();
    e
}

/// A few random clauses over all atoms of `sig`.
pub fn random_clause_set(rng: &mut ChaCha8Rng, sig: &Signature) -> Vec<Clause> {
    let atoms: Vec<usize> = (0..sig.num_atoms()).collect();
    random_clauses(rng, &atoms)
}

/// A random table module over a random vocabulary.
pub fn random_table_def(rng: &mut ChaCha8Rng, sig: &Signature) -> AtomicModuleDef {
    let voc = random_voc(rng, sig, 6);
    let body = ModuleBody::Table(random_table(rng, &voc_atoms(sig, &voc)));
    AtomicModuleDef { voc, body }
}

/// `b ≤p b′`: `b` is consistent with varying density (sometimes with one `i`); `b′` refines it, mostly towards
/// two-valued and sometimes inconsistently.
pub fn random_pair(rng: &mut ChaCha8Rng, sig: &Arc<Signature>) -> (PartialStructure, PartialStructure) {
    let density = rng.gen_range(0.0..1.0);
    let mut b = random_partial(rng, sig, density);
    if rng.gen_bool(0.05) {
        let a = rng.gen_range(0..b.len());
        b.set(a, TruthValue::I);
    }
    let fill = rng.gen_range(0.0..=1.0);
    let mut b2 = b.clone();
    for a in 0..b.len() {
        if b2.get(a) == TruthValue::U && rng.gen_bool(fill) {
            b2.set(a, TruthValue::from_bool(rng.gen_bool(0.5)));
        }
    }
    if rng.gen_bool(0.1) {
        let a = rng.gen_range(0..b.len());
        b2.join_at(a, TruthValue::I);
    }
    (b, b2)
}
