//! Two-watched-literal index over the clausal pool members.
//!
//! The index reports the lowest-id clausal member whose unit rule fires, which is the member a full rescan would
//! pick. It relies on assignments being undone in reverse order.

use std::collections::BTreeSet;

use crate::algebra::{Clause, Lit};
use crate::lattice::{AtomId, PartialStructure, TruthValue};

struct Watched {
    member: usize,
    /// `lits[0]` and `lits[1]` are watched.
    lits: Vec<Lit>,
}

#[derive(Default)]
pub(crate) struct Watches {
    clauses: Vec<Watched>,
    by_member: Vec<Vec<usize>>,
    /// Watch lists by literal code; entries go stale when a watch moves and are dropped lazily.
    watch: Vec<Vec<usize>>,
    /// Clauses satisfied by a literal assigned after a falsified watch, keyed by that literal's atom.
    fragile: Vec<Vec<usize>>,
    /// Members that may fire.
    pending: BTreeSet<usize>,
    /// Members with a clause of length ≤ 1; always checked.
    short: BTreeSet<usize>,
    short_clauses: Vec<Vec<Clause>>,
}

fn code(l: Lit) -> usize {
    2 * l.atom + usize::from(l.pos)
}

fn is_false(l: Lit, cur: &PartialStructure) -> bool {
    l.is_false_in(cur.get(l.atom))
}

fn is_true(l: Lit, cur: &PartialStructure) -> bool {
    cur.get(l.atom) == l.sat_value()
}

impl Watches {
    pub fn new(atoms: usize) -> Self {
        Watches { watch: vec![Vec::new(); 2 * atoms], fragile: vec![Vec::new(); atoms], ..Default::default() }
    }

    pub fn add_member(&mut self, member: usize, clauses: &[Clause], cur: &PartialStructure, pos: &[Option<usize>]) {
        if self.by_member.len() <= member {
            self.by_member.resize(member + 1, Vec::new());
            self.short_clauses.resize(member + 1, Vec::new());
        }
        for c in clauses {
            if c.len() <= 1 {
                self.short.insert(member);
                self.short_clauses[member].push(c.clone());
                continue;
            }
            let ci = self.clauses.len();
            self.clauses.push(Watched { member, lits: c.lits().to_vec() });
            self.by_member[member].push(ci);
            self.normalize(ci, cur, pos, true);
        }
    }

    /// Re-chooses both watches from scratch: unassigned first, then the earliest true, then the latest false.
    fn normalize(&mut self, ci: usize, cur: &PartialStructure, pos: &[Option<usize>], fresh: bool) {
        let old = if fresh { None } else { Some((self.clauses[ci].lits[0], self.clauses[ci].lits[1])) };
        let at = |l: Lit| pos[l.atom].unwrap_or(0);
        self.clauses[ci].lits.sort_by_key(|&l| {
            if is_false(l, cur) {
                (2, usize::MAX - at(l))
            } else if is_true(l, cur) {
                (1, at(l))
            } else {
                (0, 0)
            }
        });
        let (w0, w1) = (self.clauses[ci].lits[0], self.clauses[ci].lits[1]);
        for w in [w0, w1] {
            if old.is_none_or(|(a, b)| w != a && w != b) {
                self.watch[code(w)].push(ci);
            }
        }
        self.classify(ci, cur, pos);
    }

    fn classify(&mut self, ci: usize, cur: &PartialStructure, pos: &[Option<usize>]) {
        let (w0, w1) = (self.clauses[ci].lits[0], self.clauses[ci].lits[1]);
        if !is_false(w1, cur) && !is_false(w0, cur) {
            return;
        }
        let (t, f) = if is_false(w1, cur) { (w0, w1) } else { (w1, w0) };
        if is_true(t, cur) {
            if pos[t.atom] > pos[f.atom] {
                self.fragile[t.atom].push(ci);
            }
        } else {
            self.pending.insert(self.clauses[ci].member);
        }
    }

    /// Call right after `atom` is assigned; `atom` must be the newest trail entry.
    pub fn on_assign(&mut self, atom: AtomId, cur: &PartialStructure, pos: &[Option<usize>]) {
        let v = cur.get(atom);
        let falsified: &[bool] = match v {
            TruthValue::T => &[false],
            TruthValue::F => &[true],
            TruthValue::I => &[true, false],
            TruthValue::U => &[],
        };
        for &polarity in falsified {
            let x = Lit::new(atom, polarity);
            let list = std::mem::take(&mut self.watch[code(x)]);
            let mut kept = Vec::with_capacity(list.len());
            for ci in list {
                let c = &mut self.clauses[ci];
                let slot = if c.lits[0] == x {
                    0
                } else if c.lits[1] == x {
                    1
                } else {
                    continue;
                };
                let other = c.lits[1 - slot];
                if is_true(other, cur) {
                    kept.push(ci);
                    continue;
                }
                match (2..c.lits.len()).find(|&k| !is_false(c.lits[k], cur)) {
                    Some(k) => {
                        c.lits.swap(slot, k);
                        let w = c.lits[slot];
                        self.watch[code(w)].push(ci);
                        self.classify(ci, cur, pos);
                    }
                    None => {
                        kept.push(ci);
                        self.pending.insert(c.member);
                    }
                }
            }
            self.watch[code(x)].extend(kept);
        }
    }

    /// Call when `atom` is unassigned during backtracking.
    pub fn on_unassign(&mut self, atom: AtomId) {
        for ci in std::mem::take(&mut self.fragile[atom]) {
            self.pending.insert(self.clauses[ci].member);
        }
    }

    /// The lowest-id clausal member whose unit rule fires at the consistent state `cur`.
    pub fn first_firing(&mut self, cur: &PartialStructure, pos: &[Option<usize>]) -> Option<usize> {
        loop {
            let p = self.pending.first().copied();
            let s = self
                .short
                .iter()
                .copied()
                .find(|&m| p.is_none_or(|p| m < p) && self.short_clauses[m].iter().any(|c| crate::propagators::clause_fires(c, cur)));
            if s.is_some() {
                return s;
            }
            let m = p?;
            self.pending.remove(&m);
            for ci in self.by_member[m].clone() {
                self.normalize(ci, cur, pos, false);
            }
            if self.pending.contains(&m) || self.short_clauses[m].iter().any(|c| crate::propagators::clause_fires(c, cur)) {
                return Some(m);
            }
        }
    }
}
