//! Conflict-driven learning: trail with reasons, first-UIP resolution, backjumping.

use std::collections::HashMap;

use super::{
    assign_str, audit_explanation, clause_str, ep_str, finish, luby, model_str, Audit, EngineConfig, Pool, Projection, Restart,
    SolveResult, Stats, Tracer,
};
use crate::algebra::{Clause, Lit};
use crate::explain::{clause_ep, Explanation, ExplainingPropagator};
use crate::lattice::{AtomId, PartialStructure, TruthValue};

/// Resolves `c1` and `c2` on `pivot`. Fails when the pivot is not complementary or the resolvent is tautological.
pub fn resolve_minimal(c1: &Clause, c2: &Clause, pivot: AtomId) -> Result<Clause, String> {
    let find = |c: &Clause| c.lits().iter().find(|l| l.atom == pivot).copied();
    match (find(c1), find(c2)) {
        (Some(a), Some(b)) if a.pos != b.pos => {}
        (Some(_), Some(_)) => return Err(format!("pivot {pivot} has the same polarity in both clauses")),
        _ => return Err(format!("pivot {pivot} does not occur in both clauses")),
    }
    let lits = c1.lits().iter().chain(c2.lits()).filter(|l| l.atom != pivot).copied();
    Clause::new(lits).ok_or_else(|| "resolvent is tautological".to_string())
}

#[derive(Clone, Debug)]
enum Reason {
    Initial,
    Decision,
    /// Contains the implied literal; all other literals were false when it was assigned.
    Clause(Vec<Lit>),
}

struct Entry {
    lit: Lit,
    level: usize,
    reason: Reason,
}

enum Step {
    Fixpoint,
    Progress,
    Conflict(Vec<Lit>),
}

struct Cdl<'a> {
    cfg: &'a EngineConfig,
    cur: PartialStructure,
    trail: Vec<Entry>,
    pos: Vec<Option<usize>>,
    level: usize,
    pool: Pool,
    proj: Projection,
    tracer: Tracer,
    stats: Stats,
    audit: Audit,
    seen: HashMap<String, ()>,
    models: Vec<PartialStructure>,
    /// Pool size at each decision; entry `l` is the pool for which the trail up to level `l` was a fixpoint.
    decided_with: Vec<usize>,
    conflicts_since_restart: u64,
    restart_index: u64,
}

impl Cdl<'_> {
    fn value_of(&self, l: Lit) -> Option<bool> {
        match self.cur.get(l.atom) {
            TruthValue::T => Some(l.pos),
            TruthValue::F => Some(!l.pos),
            _ => None,
        }
    }

    fn assign(&mut self, l: Lit, reason: Reason) {
        self.pos[l.atom] = Some(self.trail.len());
        self.cur.set(l.atom, l.sat_value());
        self.trail.push(Entry { lit: l, level: self.level, reason });
        self.pool.on_assign(l.atom, &self.cur, &self.pos);
    }

    fn negated_state(&self) -> Vec<Lit> {
        self.trail.iter().map(|e| e.lit.negate()).collect()
    }

    /// Unit propagation of one clause set with reasons, to its fixpoint.
    fn replay(&mut self, id: usize, clauses: &[Clause]) -> Step {
        let mut progressed = false;
        loop {
            let mut changed = false;
            for c in clauses {
                let mut unassigned = None;
                let mut n_unassigned = 0;
                let mut satisfied = false;
                for &l in c.lits() {
                    match self.value_of(l) {
                        Some(true) => {
                            satisfied = true;
                            break;
                        }
                        Some(false) => {}
                        None => {
                            n_unassigned += 1;
                            unassigned = Some(l);
                            if n_unassigned > 1 {
                                break;
                            }
                        }
                    }
                }
                if satisfied {
                    continue;
                }
                if n_unassigned == 0 {
                    return Step::Conflict(c.lits().to_vec());
                }
                if n_unassigned == 1 {
                    let l = unassigned.expect("one unassigned literal");
                    self.assign(l, Reason::Clause(c.lits().to_vec()));
                    self.stats.propagations += 1;
                    let cur = &self.cur;
                    self.tracer.emit(|| format!("PROP {id} {}", assign_str(cur, l.atom, l.sat_value())));
                    changed = true;
                    progressed = true;
                }
            }
            if !changed {
                return if progressed { Step::Progress } else { Step::Fixpoint };
            }
        }
    }

    fn add_explanation(&mut self, parent: usize, x: ExplainingPropagator) -> usize {
        self.stats.explanations += 1;
        let shown = if self.tracer.on { ep_str(&self.cur, &x) } else { String::new() };
        let (xid, _) = self.pool.add(x, &self.cur, &self.pos);
        self.tracer.emit(|| format!("EXPLAIN {parent} -> {xid} {shown}"));
        xid
    }

    /// One propagation step by the ≺-minimal member that changes the state.
    fn step(&mut self) -> Step {
        if let Some(id) = self.pool.first_changing(&self.cur, &self.pos) {
            let member = self.pool.members[id].clone();
            if let Some(cs) = member.clauses() {
                return match self.replay(id, cs) {
                    Step::Fixpoint => unreachable!("member {id} was reported as firing"),
                    other => other,
                };
            }
            let pre = self.cur.clone();
            let next = member.propagate(&pre);
            // Walk the explanation chain at the pre-state down to a clause set.
            let mut node = member.clone();
            let mut first = true;
            let mut replay_id = id;
            loop {
                match node.explain(&pre) {
                    Explanation::Explained(x) => {
                        if self.cfg.check {
                            audit_explanation(&mut self.audit, &mut self.seen, &node, &x, &pre);
                        }
                        if first {
                            replay_id = self.add_explanation(id, x.clone());
                            first = false;
                        }
                        if let Some(cs) = x.clauses() {
                            let cs = cs.to_vec();
                            return match self.replay(replay_id, &cs) {
                                Step::Fixpoint => {
                                    self.audit.violations.push(format!("explanation {} made no progress", x.key()));
                                    self.naive(id, &next)
                                }
                                other => other,
                            };
                        }
                        node = x;
                    }
                    Explanation::Unexplained => return self.naive(id, &next),
                }
            }
        }
        Step::Fixpoint
    }

    /// Propagation without a clausal explanation: each new literal is implied by the whole current state.
    fn naive(&mut self, id: usize, next: &PartialStructure) -> Step {
        let negated = self.negated_state();
        if !next.is_consistent() {
            return Step::Conflict(negated);
        }
        for a in 0..next.len() {
            if self.cur.get(a) == TruthValue::U && next.get(a) != TruthValue::U {
                let l = Lit::new(a, next.get(a) == TruthValue::T);
                let mut reason = negated.clone();
                reason.push(l);
                self.assign(l, Reason::Clause(reason));
                self.stats.propagations += 1;
                let cur = &self.cur;
                self.tracer.emit(|| format!("PROP {id} {}", assign_str(cur, a, l.sat_value())));
            }
        }
        Step::Progress
    }

    fn undo_to(&mut self, len: usize) {
        while self.trail.len() > len {
            let e = self.trail.pop().expect("nonempty trail");
            self.pos[e.lit.atom] = None;
            self.cur.set(e.lit.atom, TruthValue::U);
            self.pool.on_unassign(e.lit.atom);
        }
    }

    fn backjump(&mut self, level: usize) {
        let keep = self.trail.iter().take_while(|e| e.level <= level).count();
        self.undo_to(keep);
        self.level = level;
        self.decided_with.truncate(level);
    }

    /// Fixpoint of the pool members with id < `bound` above the current state, or `None` when it is inconsistent.
    /// Works on a temporary trail extension that is undone before returning.
    fn fixpoint_below(&mut self, bound: usize) -> Option<PartialStructure> {
        let mark = self.trail.len();
        let mut out = None;
        loop {
            let Some(id) = self.pool.first_changing_below(&self.cur, &self.pos, bound) else {
                out = Some(self.cur.clone());
                break;
            };
            let next = self.pool.members[id].propagate(&self.cur);
            if !next.is_consistent() {
                break;
            }
            for a in 0..next.len() {
                if self.cur.get(a) == TruthValue::U && next.get(a) != TruthValue::U {
                    self.assign(Lit::new(a, next.get(a) == TruthValue::T), Reason::Initial);
                }
            }
        }
        self.undo_to(mark);
        out
    }

    fn lit_level(&self, l: Lit) -> usize {
        self.trail[self.pos[l.atom].expect("conflict literal is assigned")].level
    }

    /// First-UIP analysis; returns the learned clause and backjump level, or `None` when the conflict is at level 0.
    fn analyze(&mut self, conflict: Vec<Lit>) -> Option<(Clause, usize)> {
        let mut clause = Clause::new(conflict).expect("conflict clause is falsified, hence not tautological");
        let k = clause.lits().iter().map(|&l| self.lit_level(l)).max()?;
        if k == 0 {
            return None;
        }
        loop {
            let at_k: Vec<Lit> = clause.lits().iter().copied().filter(|&l| self.lit_level(l) == k).collect();
            if at_k.len() <= 1 {
                break;
            }
            let latest = at_k.into_iter().max_by_key(|l| self.pos[l.atom]).expect("literals at level k");
            let entry = &self.trail[self.pos[latest.atom].expect("assigned")];
            let Reason::Clause(reason) = &entry.reason else {
                unreachable!("only the decision of level {k} lacks a reason, and it is the earliest literal there");
            };
            let reason = Clause::new(reason.iter().copied()).expect("reason clause is not tautological");
            clause = resolve_minimal(&clause, &reason, latest.atom).expect("resolution during conflict analysis");
        }
        let jump = clause.lits().iter().map(|&l| self.lit_level(l)).filter(|&lv| lv < k).max().unwrap_or(0);
        Some((clause, jump))
    }

    fn conflict_atom(&self, lits: &[Lit]) -> String {
        lits.iter().map(|l| l.atom).max().map_or_else(|| "(empty)".to_string(), |a| self.cur.sig().atom_name(a))
    }

    /// Returns false when the search space is exhausted.
    fn handle_conflict(&mut self, conflict: Vec<Lit>) -> bool {
        self.stats.conflicts += 1;
        if self.tracer.on {
            let atom = self.conflict_atom(&conflict);
            self.tracer.emit(|| format!("CONFLICT {atom}"));
        }
        let Some((learned, jump)) = self.analyze(conflict) else {
            return false;
        };
        self.stats.learned += 1;
        let prior = self.decided_with.get(jump).copied().unwrap_or(self.pool.len());
        let shown = if self.tracer.on { clause_str(&self.cur, learned.lits()) } else { String::new() };
        self.tracer.emit(|| format!("LEARN {shown} backjump={jump}"));
        if self.cfg.check {
            self.audit.learned.push((learned.clone(), self.models.len()));
        }
        self.backjump(jump);
        let ep = clause_ep(vec![learned]);
        if self.cfg.check {
            self.audit.progress_checks += 1;
            // The union's fixpoint exceeds the prior pool's exactly when the learned clause fires there.
            let before = self.fixpoint_below(prior);
            if before.is_none_or(|f| !ep.p.changes(&f)) {
                self.audit.violations.push(format!(
                    "learned {} adds no propagation at {}",
                    ep.key(),
                    self.cur.display_known()
                ));
            }
        }
        self.pool.add(ep, &self.cur, &self.pos);
        self.conflicts_since_restart += 1;
        let restart = match self.cfg.restart {
            Restart::Off => false,
            Restart::Conflict => true,
            Restart::Luby(base) => self.conflicts_since_restart >= base * luby(self.restart_index + 1),
        };
        if restart && self.level > 0 {
            self.stats.restarts += 1;
            self.restart_index += 1;
            self.conflicts_since_restart = 0;
            self.tracer.emit(|| "RESTART".to_string());
            self.backjump(0);
        }
        true
    }

    fn run(&mut self) {
        loop {
            let conflict = match self.step() {
                Step::Progress => continue,
                Step::Conflict(c) => c,
                Step::Fixpoint => match self.proj.branch_atom(&self.cur) {
                    Some(a) => {
                        self.level += 1;
                        self.stats.decisions += 1;
                        self.decided_with.push(self.pool.len());
                        let (cur, level) = (&self.cur, self.level);
                        self.tracer.emit(|| format!("DECIDE {}@{}", assign_str(cur, a, TruthValue::T), level));
                        self.assign(Lit::new(a, true), Reason::Decision);
                        continue;
                    }
                    None => {
                        if let Some(i) = self.proj.witness(&self.pool.members[0].p, &self.cur) {
                            let out = self.proj.output(&i);
                            self.tracer.emit(|| format!("MODEL {}", model_str(&out)));
                            self.models.push(out);
                        }
                        let block = self.proj.blocking_clause(&self.cur);
                        self.pool.add(clause_ep(vec![block.clone()]), &self.cur, &self.pos);
                        if self.cfg.limit.is_some_and(|k| self.models.len() >= k) {
                            return;
                        }
                        block.lits().to_vec()
                    }
                },
            };
            if !self.handle_conflict(conflict) {
                return;
            }
        }
    }
}

pub fn cdl_solve(ep: &ExplainingPropagator, b: &PartialStructure, cfg: &EngineConfig) -> SolveResult {
    let mut s = Cdl {
        cfg,
        cur: PartialStructure::unknown(b.sig()),
        trail: Vec::new(),
        pos: vec![None; b.len()],
        level: 0,
        pool: Pool::new(ep, b),
        proj: Projection::new(cfg, b),
        tracer: Tracer { on: cfg.trace, lines: Vec::new() },
        stats: Stats::default(),
        audit: Audit::default(),
        seen: HashMap::new(),
        models: Vec::new(),
        decided_with: Vec::new(),
        conflicts_since_restart: 0,
        restart_index: 0,
    };
    if b.is_consistent() {
        for a in 0..b.len() {
            if b.get(a).is_two_valued() {
                s.assign(Lit::new(a, b.get(a) == TruthValue::T), Reason::Initial);
            }
        }
        s.run();
    }
    s.stats.pool_size = s.pool.len() as u64;
    if cfg.check {
        s.audit.discovered = s.models.clone();
    }
    finish(s.models, s.tracer, s.stats, s.audit)
}
