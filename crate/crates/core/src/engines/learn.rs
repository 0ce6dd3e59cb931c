//! The learning solver: ≺-minimal propagation with explanation learning and chronological backtracking.

use std::collections::HashMap;

use super::{assign_str, audit_explanation, ep_str, finish, model_str, Audit, EngineConfig, Pool, Projection, Stats, Tracer};
use crate::explain::{clause_ep, Explanation, ExplainingPropagator};
use crate::lattice::{AtomId, PartialStructure, TruthValue};

struct Frame {
    trail_len: usize,
    atom: AtomId,
    tried_false: bool,
}

struct State {
    cur: PartialStructure,
    trail: Vec<AtomId>,
    pos: Vec<Option<usize>>,
}

impl State {
    fn set(&mut self, pool: &mut Pool, atom: AtomId, v: TruthValue) {
        self.cur.set(atom, v);
        self.pos[atom] = Some(self.trail.len());
        self.trail.push(atom);
        pool.on_assign(atom, &self.cur, &self.pos);
    }

    fn undo_to(&mut self, pool: &mut Pool, len: usize) {
        while self.trail.len() > len {
            let atom = self.trail.pop().expect("nonempty trail");
            self.cur.set(atom, TruthValue::U);
            self.pos[atom] = None;
            pool.on_unassign(atom);
        }
    }
}

pub fn learning_solve(ep: &ExplainingPropagator, b: &PartialStructure, cfg: &EngineConfig) -> super::SolveResult {
    let mut tracer = Tracer { on: cfg.trace, lines: Vec::new() };
    let mut stats = Stats::default();
    let mut audit = Audit::default();
    let mut seen = HashMap::new();
    let mut models = Vec::new();
    let proj = Projection::new(cfg, b);
    let mut pool = Pool::new(ep, b);
    if !b.is_consistent() {
        return finish(models, tracer, stats, audit);
    }
    let mut st = State { cur: PartialStructure::unknown(b.sig()), trail: Vec::new(), pos: vec![None; b.len()] };
    for a in 0..b.len() {
        if b.get(a) != TruthValue::U {
            st.set(&mut pool, a, b.get(a));
        }
    }
    let mut stack: Vec<Frame> = Vec::new();
    loop {
        // Propagate with the ≺-minimal member that changes the state.
        let mut conflict = false;
        while let Some(id) = pool.first_changing(&st.cur, &st.pos) {
            let cur = &st.cur;
            let next = pool.members[id].propagate(cur);
            for a in 0..cur.len() {
                if next.get(a) != cur.get(a) && next.get(a).is_two_valued() {
                    stats.propagations += 1;
                    tracer.emit(|| format!("PROP {id} {}", assign_str(&next, a, next.get(a))));
                }
            }
            let member = pool.members[id].clone();
            if let Explanation::Explained(x) = member.explain(cur) {
                if cfg.check {
                    audit_explanation(&mut audit, &mut seen, &member, &x, cur);
                }
                stats.explanations += 1;
                let shown = if tracer.on { ep_str(cur, &x) } else { String::new() };
                let (xid, _) = pool.add(x, &st.cur, &st.pos);
                tracer.emit(|| format!("EXPLAIN {id} -> {xid} {shown}"));
            }
            if !next.is_consistent() {
                let atom = (0..next.len()).rev().find(|&a| next.get(a) == TruthValue::I).unwrap_or(0);
                tracer.emit(|| format!("CONFLICT {}", next.sig().atom_name(atom)));
                stats.conflicts += 1;
                conflict = true;
                break;
            }
            for a in 0..next.len() {
                if st.cur.get(a) == TruthValue::U && next.get(a) != TruthValue::U {
                    st.set(&mut pool, a, next.get(a));
                }
            }
        }
        if !conflict {
            match proj.branch_atom(&st.cur) {
                Some(a) => {
                    stack.push(Frame { trail_len: st.trail.len(), atom: a, tried_false: false });
                    stats.decisions += 1;
                    tracer.emit(|| format!("DECIDE {}@{}", assign_str(&st.cur, a, TruthValue::T), stack.len()));
                    st.set(&mut pool, a, TruthValue::T);
                    continue;
                }
                None => {
                    if let Some(i) = proj.witness(&pool.members[0].p, &st.cur) {
                        let out = proj.output(&i);
                        tracer.emit(|| format!("MODEL {}", model_str(&out)));
                        models.push(out);
                    }
                    // Model or not, this branching assignment is done.
                    pool.add(clause_ep(vec![proj.blocking_clause(&st.cur)]), &st.cur, &st.pos);
                    if cfg.limit.is_some_and(|k| models.len() >= k) {
                        break;
                    }
                }
            }
        }
        // Chronological backtracking.
        let mut resumed = false;
        while let Some(top) = stack.last_mut() {
            if top.tried_false {
                stack.pop();
                continue;
            }
            top.tried_false = true;
            let (a, len) = (top.atom, top.trail_len);
            st.undo_to(&mut pool, len);
            stats.decisions += 1;
            tracer.emit(|| format!("DECIDE {}@{}", assign_str(&st.cur, a, TruthValue::F), stack.len()));
            st.set(&mut pool, a, TruthValue::F);
            resumed = true;
            break;
        }
        if !resumed {
            break;
        }
    }
    stats.pool_size = pool.len() as u64;
    finish(models, tracer, stats, audit)
}
