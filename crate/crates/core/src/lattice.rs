//! Four-valued truth values and partial structures over a fixed finite domain.
//!
//! Atoms are indexed densely: predicates in vocabulary order, and within a
//! predicate the argument tuples in lexicographic order over the domain's
//! element order. A [`PartialStructure`] is a flat value array over that
//! index space.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// A four-valued truth value.
///
/// The bit encoding makes the precision order a subset test: `T = 01`,
/// `F = 10`, `I = 11`, `U = 00`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
#[repr(u8)]
pub enum TruthValue {
    U = 0,
    T = 1,
    F = 2,
    I = 3,
}

impl TruthValue {
    #[inline]
    pub fn from_bits(bits: u8) -> Self {
        match bits & 3 {
            0 => TruthValue::U,
            1 => TruthValue::T,
            2 => TruthValue::F,
            _ => TruthValue::I,
        }
    }

    #[inline]
    pub fn bits(self) -> u8 {
        self as u8
    }

    #[inline]
    pub fn from_bool(b: bool) -> Self {
        if b {
            TruthValue::T
        } else {
            TruthValue::F
        }
    }

    #[inline]
    pub fn lub(self, other: Self) -> Self {
        Self::from_bits(self.bits() | other.bits())
    }

    #[inline]
    pub fn glb(self, other: Self) -> Self {
        Self::from_bits(self.bits() & other.bits())
    }

    /// `self ≤p other`.
    #[inline]
    pub fn leq_p(self, other: Self) -> bool {
        self.bits() & !other.bits() == 0
    }

    #[inline]
    pub fn is_two_valued(self) -> bool {
        matches!(self, TruthValue::T | TruthValue::F)
    }

    #[inline]
    pub fn is_consistent(self) -> bool {
        self != TruthValue::I
    }

    pub fn as_char(self) -> char {
        match self {
            TruthValue::U => 'u',
            TruthValue::T => 't',
            TruthValue::F => 'f',
            TruthValue::I => 'i',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'u' => Some(TruthValue::U),
            't' => Some(TruthValue::T),
            'f' => Some(TruthValue::F),
            'i' => Some(TruthValue::I),
            _ => None,
        }
    }

    pub const ALL: [TruthValue; 4] = [TruthValue::U, TruthValue::T, TruthValue::F, TruthValue::I];
}

impl fmt::Display for TruthValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

pub fn lub_tv(a: TruthValue, b: TruthValue) -> TruthValue {
    a.lub(b)
}

pub fn glb_tv(a: TruthValue, b: TruthValue) -> TruthValue {
    a.glb(b)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LatticeError {
    #[error("domain must contain at least one element")]
    EmptyDomain,
    #[error("duplicate domain element `{0}`")]
    DuplicateElement(String),
    #[error("duplicate predicate `{0}`")]
    DuplicatePredicate(String),
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("unknown domain element `{0}`")]
    UnknownElement(String),
    #[error("predicate `{pred}` has arity {expected}, got {got} arguments")]
    ArityMismatch { pred: String, expected: usize, got: usize },
    #[error("structures are over different signatures")]
    SignatureMismatch,
    #[error("least upper bound of an empty set is undefined")]
    EmptyLub,
    #[error("atom index {0} out of range")]
    AtomOutOfRange(usize),
}

/// Ordered, nonempty list of distinct element names.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Domain {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Domain {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self, LatticeError> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(LatticeError::EmptyDomain);
        }
        let mut index = HashMap::new();
        for (i, n) in names.iter().enumerate() {
            if index.insert(n.clone(), i).is_some() {
                return Err(LatticeError::DuplicateElement(n.clone()));
            }
        }
        Ok(Domain { names, index })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn element(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Predicate {
    pub name: String,
    pub arity: usize,
}

/// The full vocabulary τ: predicate symbols in declaration order.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Vocabulary {
    preds: Vec<Predicate>,
}

impl Vocabulary {
    pub fn new(preds: impl IntoIterator<Item = (String, usize)>) -> Result<Self, LatticeError> {
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        for (name, arity) in preds {
            if !seen.insert(name.clone()) {
                return Err(LatticeError::DuplicatePredicate(name));
            }
            out.push(Predicate { name, arity });
        }
        Ok(Vocabulary { preds: out })
    }

    pub fn preds(&self) -> &[Predicate] {
        &self.preds
    }

    pub fn len(&self) -> usize {
        self.preds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.preds.is_empty()
    }
}

/// Predicate identifiers index into the signature's vocabulary.
pub type PredId = usize;
/// Dense atom index.
pub type AtomId = usize;
/// A sub-vocabulary δ ⊆ τ.
pub type PredSet = BTreeSet<PredId>;

/// `Q(d̄)` with elements given by domain index.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DomainAtom {
    pub pred: PredId,
    pub args: Vec<usize>,
}

/// Domain plus vocabulary, with the dense atom layout.
#[derive(Debug)]
pub struct Signature {
    domain: Domain,
    vocab: Vocabulary,
    offsets: Vec<usize>,
    atom_pred: Vec<PredId>,
    pred_index: HashMap<String, PredId>,
}

impl PartialEq for Signature {
    fn eq(&self, other: &Self) -> bool {
        self.domain == other.domain && self.vocab == other.vocab
    }
}

impl Eq for Signature {}

impl Signature {
    pub fn new(domain: Domain, vocab: Vocabulary) -> Arc<Self> {
        let n = domain.len();
        let mut offsets = Vec::with_capacity(vocab.len() + 1);
        let mut atom_pred = Vec::new();
        let mut pred_index = HashMap::new();
        let mut off = 0usize;
        for (pid, p) in vocab.preds().iter().enumerate() {
            offsets.push(off);
            let size = n.pow(p.arity as u32);
            atom_pred.extend(std::iter::repeat(pid).take(size));
            off += size;
            pred_index.insert(p.name.clone(), pid);
        }
        offsets.push(off);
        Arc::new(Signature { domain, vocab, offsets, atom_pred, pred_index })
    }

    /// Convenience constructor used throughout tests.
    pub fn build(elements: &[&str], preds: &[(&str, usize)]) -> Result<Arc<Self>, LatticeError> {
        let domain = Domain::new(elements.iter().copied())?;
        let vocab = Vocabulary::new(preds.iter().map(|(n, a)| (n.to_string(), *a)))?;
        Ok(Signature::new(domain, vocab))
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn num_atoms(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn num_preds(&self) -> usize {
        self.vocab.len()
    }

    pub fn pred(&self, p: PredId) -> &Predicate {
        &self.vocab.preds()[p]
    }

    pub fn pred_id(&self, name: &str) -> Option<PredId> {
        self.pred_index.get(name).copied()
    }

    pub fn pred_of(&self, atom: AtomId) -> PredId {
        self.atom_pred[atom]
    }

    pub fn atoms_of(&self, p: PredId) -> std::ops::Range<AtomId> {
        self.offsets[p]..self.offsets[p + 1]
    }

    pub fn all_preds(&self) -> PredSet {
        (0..self.num_preds()).collect()
    }

    pub fn pred_set<S: AsRef<str>>(&self, names: &[S]) -> Result<PredSet, LatticeError> {
        names
            .iter()
            .map(|n| self.pred_id(n.as_ref()).ok_or_else(|| LatticeError::UnknownPredicate(n.as_ref().to_string())))
            .collect()
    }

    pub fn atom_index(&self, a: &DomainAtom) -> Result<AtomId, LatticeError> {
        if a.pred >= self.num_preds() {
            return Err(LatticeError::UnknownPredicate(format!("#{}", a.pred)));
        }
        let p = self.pred(a.pred);
        if a.args.len() != p.arity {
            return Err(LatticeError::ArityMismatch { pred: p.name.clone(), expected: p.arity, got: a.args.len() });
        }
        let n = self.domain.len();
        let mut idx = 0usize;
        for &e in &a.args {
            if e >= n {
                return Err(LatticeError::UnknownElement(format!("#{e}")));
            }
            idx = idx * n + e;
        }
        Ok(self.offsets[a.pred] + idx)
    }

    /// Index of the atom `pred(args)` given element indices; panics on bad input.
    pub fn atom(&self, pred: PredId, args: &[usize]) -> AtomId {
        self.atom_index(&DomainAtom { pred, args: args.to_vec() }).expect("valid atom")
    }

    pub fn atom_by_names(&self, pred: &str, args: &[&str]) -> Result<AtomId, LatticeError> {
        let pid = self.pred_id(pred).ok_or_else(|| LatticeError::UnknownPredicate(pred.to_string()))?;
        let args = args
            .iter()
            .map(|a| self.domain.element(a).ok_or_else(|| LatticeError::UnknownElement(a.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        self.atom_index(&DomainAtom { pred: pid, args })
    }

    pub fn domain_atom(&self, atom: AtomId) -> DomainAtom {
        let pred = self.atom_pred[atom];
        let arity = self.pred(pred).arity;
        let n = self.domain.len();
        let mut rel = atom - self.offsets[pred];
        let mut args = vec![0; arity];
        for slot in args.iter_mut().rev() {
            *slot = rel % n;
            rel /= n;
        }
        DomainAtom { pred, args }
    }

    /// `Q(a,b)` for binary, `p` for arity zero.
    pub fn atom_name(&self, atom: AtomId) -> String {
        let da = self.domain_atom(atom);
        let p = self.pred(da.pred);
        if p.arity == 0 {
            p.name.clone()
        } else {
            let args: Vec<&str> = da.args.iter().map(|&e| self.domain.names()[e].as_str()).collect();
            format!("{}({})", p.name, args.join(","))
        }
    }

    /// Inverse of [`Signature::atom_name`]; whitespace inside the parentheses is ignored.
    pub fn parse_atom_name(&self, text: &str) -> Result<AtomId, LatticeError> {
        let text = text.trim();
        match text.find('(') {
            None => self.atom_by_names(text, &[]),
            Some(open) => {
                let name = text[..open].trim();
                let rest = text[open + 1..].trim_end();
                let inner = rest.strip_suffix(')').ok_or_else(|| LatticeError::UnknownPredicate(text.to_string()))?;
                let args: Vec<&str> = if inner.trim().is_empty() {
                    Vec::new()
                } else {
                    inner.split(',').map(str::trim).collect()
                };
                self.atom_by_names(name, &args)
            }
        }
    }

    /// Mask over atoms: true iff the atom's predicate is in `delta`.
    pub fn atom_mask(&self, delta: &PredSet) -> Vec<bool> {
        self.atom_pred.iter().map(|p| delta.contains(p)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Classification {
    Consistent2V,
    ConsistentPartial,
    Inconsistent,
}

/// Total map from the atoms of a signature to truth values.
#[derive(Clone)]
pub struct PartialStructure {
    sig: Arc<Signature>,
    vals: Vec<TruthValue>,
}

impl PartialEq for PartialStructure {
    fn eq(&self, other: &Self) -> bool {
        (Arc::ptr_eq(&self.sig, &other.sig) || self.sig == other.sig) && self.vals == other.vals
    }
}

impl Eq for PartialStructure {}

impl std::hash::Hash for PartialStructure {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.vals.hash(state);
    }
}

impl PartialOrd for PartialStructure {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Lexicographic by atom index with `U < T < F < I`; used for canonical model order.
impl Ord for PartialStructure {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.vals.cmp(&other.vals)
    }
}

impl fmt::Debug for PartialStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.display_all())
    }
}

impl PartialStructure {
    pub fn unknown(sig: &Arc<Signature>) -> Self {
        Self::filled(sig, TruthValue::U)
    }

    /// The most precise structure 𝔗.
    pub fn top(sig: &Arc<Signature>) -> Self {
        Self::filled(sig, TruthValue::I)
    }

    pub fn filled(sig: &Arc<Signature>, v: TruthValue) -> Self {
        PartialStructure { sig: sig.clone(), vals: vec![v; sig.num_atoms()] }
    }

    pub fn from_vals(sig: &Arc<Signature>, vals: Vec<TruthValue>) -> Self {
        assert_eq!(vals.len(), sig.num_atoms(), "value vector length must match the signature");
        PartialStructure { sig: sig.clone(), vals }
    }

    /// Builds a structure from `(atom name, value)` pairs; unlisted atoms are U.
    pub fn from_pairs(sig: &Arc<Signature>, pairs: &[(&str, TruthValue)]) -> Result<Self, LatticeError> {
        let mut b = Self::unknown(sig);
        for (name, v) in pairs {
            let a = sig.parse_atom_name(name)?;
            b.vals[a] = *v;
        }
        Ok(b)
    }

    pub fn sig(&self) -> &Arc<Signature> {
        &self.sig
    }

    pub fn vals(&self) -> &[TruthValue] {
        &self.vals
    }

    pub fn len(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    #[inline]
    pub fn get(&self, atom: AtomId) -> TruthValue {
        self.vals[atom]
    }

    /// In-place write; callers own the structure so value semantics are kept.
    #[inline]
    pub fn set(&mut self, atom: AtomId, v: TruthValue) {
        self.vals[atom] = v;
    }

    #[inline]
    pub fn join_at(&mut self, atom: AtomId, v: TruthValue) {
        self.vals[atom] = self.vals[atom].lub(v);
    }

    /// `𝔅[Q(d̄):ν]` as a new value.
    pub fn with(&self, atom: AtomId, v: TruthValue) -> Self {
        let mut out = self.clone();
        out.vals[atom] = v;
        out
    }

    pub fn same_sig(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.sig, &other.sig) || self.sig == other.sig
    }

    /// `self ≤p other`; both must share a signature.
    #[inline]
    pub fn le(&self, other: &Self) -> bool {
        debug_assert!(self.same_sig(other));
        self.vals.iter().zip(&other.vals).all(|(a, b)| a.leq_p(*b))
    }

    pub fn lub(&self, other: &Self) -> Self {
        debug_assert!(self.same_sig(other));
        let vals = self.vals.iter().zip(&other.vals).map(|(a, b)| a.lub(*b)).collect();
        PartialStructure { sig: self.sig.clone(), vals }
    }

    pub fn glb(&self, other: &Self) -> Self {
        debug_assert!(self.same_sig(other));
        let vals = self.vals.iter().zip(&other.vals).map(|(a, b)| a.glb(*b)).collect();
        PartialStructure { sig: self.sig.clone(), vals }
    }

    pub fn is_consistent(&self) -> bool {
        self.vals.iter().all(|v| v.is_consistent())
    }

    pub fn is_two_valued(&self) -> bool {
        self.vals.iter().all(|v| v.is_two_valued())
    }

    pub fn is_top(&self) -> bool {
        self.vals.iter().all(|v| *v == TruthValue::I)
    }

    pub fn is_two_valued_on(&self, delta: &PredSet) -> bool {
        delta.iter().all(|&p| self.sig.atoms_of(p).all(|a| self.vals[a].is_two_valued()))
    }

    pub fn classify(&self) -> Classification {
        if !self.is_consistent() {
            Classification::Inconsistent
        } else if self.is_two_valued() {
            Classification::Consistent2V
        } else {
            Classification::ConsistentPartial
        }
    }

    /// Least precise structure agreeing with `self` on `delta`.
    pub fn restrict(&self, delta: &PredSet) -> Self {
        let mut out = self.clone();
        for p in 0..self.sig.num_preds() {
            if !delta.contains(&p) {
                for a in self.sig.atoms_of(p) {
                    out.vals[a] = TruthValue::U;
                }
            }
        }
        out
    }

    /// The same structure with every atom outside `delta` set to U, given a precomputed mask.
    pub fn restrict_mask(&self, mask: &[bool]) -> Self {
        let vals = self.vals.iter().zip(mask).map(|(v, m)| if *m { *v } else { TruthValue::U }).collect();
        PartialStructure { sig: self.sig.clone(), vals }
    }

    /// `{Q(a)=t, p=f}` listing the atoms that are not U.
    pub fn display_known(&self) -> String {
        let parts: Vec<String> = self
            .vals
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != TruthValue::U)
            .map(|(a, v)| format!("{}={}", self.sig.atom_name(a), v))
            .collect();
        format!("{{{}}}", parts.join(", "))
    }

    pub fn display_all(&self) -> String {
        let parts: Vec<String> =
            self.vals.iter().enumerate().map(|(a, v)| format!("{}={}", self.sig.atom_name(a), v)).collect();
        format!("{{{}}}", parts.join(", "))
    }
}

pub fn leq_p(b1: &PartialStructure, b2: &PartialStructure) -> Result<bool, LatticeError> {
    if !b1.same_sig(b2) {
        return Err(LatticeError::SignatureMismatch);
    }
    Ok(b1.le(b2))
}

pub fn lub_struct(bs: &[PartialStructure]) -> Result<PartialStructure, LatticeError> {
    let (first, rest) = bs.split_first().ok_or(LatticeError::EmptyLub)?;
    let mut acc = first.clone();
    for b in rest {
        if !acc.same_sig(b) {
            return Err(LatticeError::SignatureMismatch);
        }
        acc = acc.lub(b);
    }
    Ok(acc)
}

/// Pointwise meet; the meet of no structures is 𝔗.
pub fn glb_struct(sig: &Arc<Signature>, bs: &[PartialStructure]) -> Result<PartialStructure, LatticeError> {
    let mut acc = PartialStructure::top(sig);
    for b in bs {
        if !acc.same_sig(b) {
            return Err(LatticeError::SignatureMismatch);
        }
        acc = acc.glb(b);
    }
    Ok(acc)
}

pub fn restrict(b: &PartialStructure, delta: &PredSet) -> Result<PartialStructure, LatticeError> {
    if let Some(bad) = delta.iter().find(|&&p| p >= b.sig().num_preds()) {
        return Err(LatticeError::UnknownPredicate(format!("#{bad}")));
    }
    Ok(b.restrict(delta))
}

pub fn update(b: &PartialStructure, atom: &DomainAtom, v: TruthValue) -> Result<PartialStructure, LatticeError> {
    let idx = b.sig().atom_index(atom)?;
    Ok(b.with(idx, v))
}

pub fn classify(b: &PartialStructure) -> Classification {
    b.classify()
}
