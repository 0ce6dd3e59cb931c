//! Search engines: generate-and-check, propagate-and-search, learning, and conflict-driven learning.

mod cdl;
mod learn;
mod watch;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::algebra::{AlgebraError, Clause, Lit, ModuleExpr, ModuleInterpretation};
use crate::explain::{build_explaining, lift, ExplainingPropagator};
use crate::lattice::{AtomId, PartialStructure, PredSet, TruthValue};
use crate::propagators::{build_propagator, Propagator, SolverFn, Strategy};
use watch::Watches;

pub use cdl::{cdl_solve, resolve_minimal};
pub use learn::learning_solve;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EngineKind {
    Gc,
    Prop,
    Learn,
    Cdl,
}

impl EngineKind {
    pub const ALL: [EngineKind; 4] = [EngineKind::Gc, EngineKind::Prop, EngineKind::Learn, EngineKind::Cdl];

    pub fn name(self) -> &'static str {
        match self {
            EngineKind::Gc => "gc",
            EngineKind::Prop => "prop",
            EngineKind::Learn => "learn",
            EngineKind::Cdl => "cdl",
        }
    }
}

impl fmt::Display for EngineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EngineKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        EngineKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| format!("unknown engine `{s}` (expected gc, prop, learn or cdl)"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Restart {
    #[default]
    Off,
    Conflict,
    Luby(u64),
}

impl FromStr for Restart {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "off" => Ok(Restart::Off),
            "conflict" => Ok(Restart::Conflict),
            _ => s
                .strip_prefix("luby:")
                .and_then(|n| n.parse::<u64>().ok())
                .filter(|n| *n > 0)
                .map(Restart::Luby)
                .ok_or_else(|| format!("invalid restart policy `{s}` (expected off, conflict or luby:<n>)")),
        }
    }
}

/// The i-th element (1-based) of the Luby sequence 1 1 2 1 1 2 4 ...
pub fn luby(i: u64) -> u64 {
    let mut k = 1u32;
    while (1u64 << k) - 1 < i {
        k += 1;
    }
    if i == (1u64 << k) - 1 {
        1u64 << (k - 1)
    } else {
        luby(i - ((1u64 << (k - 1)) - 1))
    }
}

#[derive(Clone, Debug)]
pub struct EngineConfig {
    pub engine: EngineKind,
    /// Stop after this many models.
    pub limit: Option<usize>,
    pub restart: Restart,
    pub trace: bool,
    /// Reserved; branching is deterministic.
    pub seed: u64,
    /// Verify explanation and learning contracts online and record material for offline checks.
    pub check: bool,
    /// Branch only on atoms of these predicates and report models restricted to them.
    pub project_onto: Option<PredSet>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig { engine: EngineKind::Cdl, limit: None, restart: Restart::Off, trace: false, seed: 0, check: false, project_onto: None }
    }
}

impl EngineConfig {
    pub fn new(engine: EngineKind) -> Self {
        EngineConfig { engine, ..Default::default() }
    }
}

#[derive(Clone, Debug, Default, Serialize, PartialEq, Eq)]
pub struct Stats {
    pub decisions: u64,
    pub propagations: u64,
    pub conflicts: u64,
    pub learned: u64,
    pub explanations: u64,
    pub restarts: u64,
    pub models: u64,
    pub pool_size: u64,
}

/// Material collected in check mode.
#[derive(Clone, Debug, Default)]
pub struct Audit {
    pub violations: Vec<String>,
    /// (explained propagator, explanation) pairs, first occurrence of each pair of keys.
    pub explanations: Vec<(Propagator, Propagator)>,
    /// Learned clauses with the number of models found before each was learned.
    pub learned: Vec<(Clause, usize)>,
    /// Models in discovery order (cdl only).
    pub discovered: Vec<PartialStructure>,
    pub progress_checks: u64,
    pub chains_checked: u64,
}

#[derive(Clone, Debug, Default)]
pub struct SolveResult {
    /// Sorted canonically (lexicographic by atom, T before F).
    pub models: Vec<PartialStructure>,
    pub trace: Vec<String>,
    pub stats: Stats,
    pub audit: Audit,
}

/// Trace sink shared by all engines.
#[derive(Default)]
pub(crate) struct Tracer {
    pub on: bool,
    pub lines: Vec<String>,
}

impl Tracer {
    pub fn emit(&mut self, line: impl FnOnce() -> String) {
        if self.on {
            self.lines.push(line());
        }
    }
}

pub(crate) fn lit_str(b: &PartialStructure, l: Lit) -> String {
    l.display(b.sig())
}

pub(crate) fn assign_str(b: &PartialStructure, a: AtomId, v: TruthValue) -> String {
    format!("{}={}", b.sig().atom_name(a), v)
}

pub(crate) fn clause_str(b: &PartialStructure, lits: &[Lit]) -> String {
    let parts: Vec<String> = lits.iter().map(|l| lit_str(b, *l)).collect();
    format!("[{}]", parts.join(", "))
}

/// How an explanation propagator is shown in traces.
pub(crate) fn ep_str(b: &PartialStructure, ep: &ExplainingPropagator) -> String {
    match ep.clauses() {
        Some(cs) => cs.iter().map(|c| clause_str(b, c.lits())).collect::<Vec<_>>().join(" "),
        None => ep.key().to_string(),
    }
}

/// Model display: projected models list only known atoms.
pub(crate) fn model_str(m: &PartialStructure) -> String {
    m.display_known()
}

/// Projection helper shared by the engines.
pub(crate) struct Projection {
    pub mask: Option<Vec<bool>>,
}

impl Projection {
    pub fn new(cfg: &EngineConfig, b: &PartialStructure) -> Self {
        Projection { mask: cfg.project_onto.as_ref().map(|d| b.sig().atom_mask(d)) }
    }

    pub fn branch_atom(&self, b: &PartialStructure) -> Option<AtomId> {
        (0..b.len()).find(|&a| b.get(a) == TruthValue::U && self.mask.as_ref().is_none_or(|m| m[a]))
    }

    /// A model of `p` above the leaf `b`, searching the atoms that are not branched on.
    pub fn witness(&self, p: &Propagator, b: &PartialStructure) -> Option<PartialStructure> {
        if b.is_two_valued() {
            return (p.propagate(b) == *b).then(|| b.clone());
        }
        search_models(p, b, Some(1), None).into_iter().next()
    }

    pub fn output(&self, i: &PartialStructure) -> PartialStructure {
        match &self.mask {
            Some(m) => i.restrict_mask(m),
            None => i.clone(),
        }
    }

    /// Clause forbidding the branching part of `b`.
    pub fn blocking_clause(&self, b: &PartialStructure) -> Clause {
        Clause::negating(b, self.mask.as_deref())
    }
}

pub(crate) fn finish(mut models: Vec<PartialStructure>, tracer: Tracer, mut stats: Stats, audit: Audit) -> SolveResult {
    models.sort();
    models.dedup();
    stats.models = models.len() as u64;
    SolveResult { models, trace: tracer.lines, stats, audit }
}

struct Dfs<'a> {
    p: &'a Propagator,
    propagate_first: bool,
    proj: Projection,
    limit: Option<usize>,
    models: Vec<PartialStructure>,
    tracer: Tracer,
    stats: Stats,
}

impl Dfs<'_> {
    fn full(&self) -> bool {
        self.limit.is_some_and(|k| self.models.len() >= k)
    }

    fn go(&mut self, b: PartialStructure, level: usize) {
        if self.full() {
            return;
        }
        let b = if self.propagate_first {
            let nb = self.p.propagate(&b);
            for a in 0..b.len() {
                if nb.get(a) != b.get(a) {
                    self.stats.propagations += 1;
                    self.tracer.emit(|| format!("PROP 0 {}", assign_str(&nb, a, nb.get(a))));
                }
            }
            nb
        } else {
            b
        };
        if !b.is_consistent() {
            self.stats.conflicts += 1;
            return;
        }
        match self.proj.branch_atom(&b) {
            None => match self.proj.witness(self.p, &b) {
                Some(i) => {
                    let out = self.proj.output(&i);
                    self.tracer.emit(|| format!("MODEL {}", model_str(&out)));
                    self.models.push(out);
                }
                None => self.stats.conflicts += 1,
            },
            Some(a) => {
                for v in [TruthValue::T, TruthValue::F] {
                    if self.full() {
                        return;
                    }
                    self.stats.decisions += 1;
                    self.tracer.emit(|| format!("DECIDE {}@{}", assign_str(&b, a, v), level + 1));
                    self.go(b.with(a, v), level + 1);
                }
            }
        }
    }
}

fn run_dfs(p: &Propagator, b: &PartialStructure, cfg: &EngineConfig, propagate_first: bool) -> SolveResult {
    let mut d = Dfs {
        p,
        propagate_first,
        proj: Projection::new(cfg, b),
        limit: cfg.limit,
        models: Vec::new(),
        tracer: Tracer { on: cfg.trace, lines: Vec::new() },
        stats: Stats::default(),
    };
    if b.is_consistent() {
        d.go(b.clone(), 0);
    }
    finish(d.models, d.tracer, d.stats, Audit::default())
}

/// Depth-first search over unknown atoms (T first), keeping two-valued leaves that `p` fixes.
pub fn gen_check(p: &Propagator, b: &PartialStructure, cfg: &EngineConfig) -> SolveResult {
    run_dfs(p, b, cfg, false)
}

/// As `gen_check`, applying `p` before every choice and pruning inconsistent states.
pub fn propagate_search(p: &Propagator, b: &PartialStructure, cfg: &EngineConfig) -> SolveResult {
    run_dfs(p, b, cfg, true)
}

/// Untraced propagate-and-search used as the default inner solver.
pub fn search_models(p: &Propagator, b: &PartialStructure, limit: Option<usize>, project: Option<PredSet>) -> Vec<PartialStructure> {
    let cfg = EngineConfig { engine: EngineKind::Prop, limit, project_onto: project, ..Default::default() };
    propagate_search(p, b, &cfg).models
}

/// Runs the configured engine on `e`.
pub fn solve(
    e: &ModuleExpr,
    interp: &ModuleInterpretation,
    b: &PartialStructure,
    strategy: Strategy,
    cfg: &EngineConfig,
) -> Result<SolveResult, AlgebraError> {
    Ok(match cfg.engine {
        EngineKind::Gc => gen_check(&build_propagator(e, interp, strategy)?, b, cfg),
        EngineKind::Prop => propagate_search(&build_propagator(e, interp, strategy)?, b, cfg),
        EngineKind::Learn | EngineKind::Cdl => {
            let ep = match strategy {
                Strategy::Best => build_explaining(e, interp)?,
                Strategy::Checker => lift(build_propagator(e, interp, Strategy::Checker)?),
            };
            run_engine(&ep, b, cfg)
        }
    })
}

/// Runs the configured engine on an already built propagator; gc and prop ignore the explanations.
pub fn run_engine(ep: &ExplainingPropagator, b: &PartialStructure, cfg: &EngineConfig) -> SolveResult {
    match cfg.engine {
        EngineKind::Gc => gen_check(&ep.p, b, cfg),
        EngineKind::Prop => propagate_search(&ep.p, b, cfg),
        EngineKind::Learn => learning_solve(ep, b, cfg),
        EngineKind::Cdl => cdl_solve(ep, b, cfg),
    }
}

pub fn solver_from(e: &ModuleExpr, interp: &ModuleInterpretation, strategy: Strategy, cfg: &EngineConfig) -> Result<SolverFn, AlgebraError> {
    crate::algebra::typecheck(e, interp)?;
    let (e, interp, cfg) = (e.clone(), interp.clone(), cfg.clone());
    let name = format!("{}[{}]", cfg.engine, e);
    Ok(SolverFn::new(name, move |b, limit| {
        let mut c = cfg.clone();
        c.limit = match (c.limit, limit) {
            (Some(x), Some(y)) => Some(x.min(y)),
            (x, y) => x.or(y),
        };
        solve(&e, &interp, b, strategy, &c).map(|r| r.models).unwrap_or_default()
    }))
}

/// Propagator pool ordered by (rank, insertion id), deduplicated by key.
///
/// Clausal members live in a watched-literal index; the rest are scanned in order.
pub(crate) struct Pool {
    pub members: Vec<ExplainingPropagator>,
    keys: HashMap<String, usize>,
    scan: Vec<usize>,
    watches: Watches,
}

impl Pool {
    pub fn new(root: &ExplainingPropagator, b: &PartialStructure) -> Self {
        let mut p = Pool { members: Vec::new(), keys: HashMap::new(), scan: Vec::new(), watches: Watches::new(b.len()) };
        p.add(root.clone(), &PartialStructure::unknown(b.sig()), &vec![None; b.len()]);
        p
    }

    /// Returns the member id and whether it was newly inserted. `cur` and `pos` describe the current trail.
    pub fn add(&mut self, ep: ExplainingPropagator, cur: &PartialStructure, pos: &[Option<usize>]) -> (usize, bool) {
        if let Some(&id) = self.keys.get(ep.key()) {
            return (id, false);
        }
        let id = self.members.len();
        self.keys.insert(ep.key().to_string(), id);
        match ep.clauses() {
            Some(cs) if ep.rank() == 0 => self.watches.add_member(id, cs, cur, pos),
            _ => {
                let rank = ep.rank();
                let at = self.scan.partition_point(|&j| (self.members[j].rank(), j) < (rank, id));
                self.scan.insert(at, id);
            }
        }
        self.members.push(ep);
        (id, true)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    /// The ≺-minimal member with `p(cur) ≠ cur` at a consistent state.
    pub fn first_changing(&mut self, cur: &PartialStructure, pos: &[Option<usize>]) -> Option<usize> {
        self.first_changing_below(cur, pos, usize::MAX)
    }

    /// As `first_changing`, among members with id < `bound`.
    pub fn first_changing_below(&mut self, cur: &PartialStructure, pos: &[Option<usize>], bound: usize) -> Option<usize> {
        let indexed = self.watches.first_firing(cur, pos).filter(|&a| a < bound);
        for &id in &self.scan {
            if indexed.is_some_and(|a| (self.members[id].rank(), id) > (0, a)) {
                break;
            }
            if id < bound && self.members[id].p.changes(cur) {
                return Some(id);
            }
        }
        indexed
    }

    pub fn on_assign(&mut self, atom: AtomId, cur: &PartialStructure, pos: &[Option<usize>]) {
        self.watches.on_assign(atom, cur, pos);
    }

    pub fn on_unassign(&mut self, atom: AtomId) {
        self.watches.on_unassign(atom);
    }
}

/// Online checks for an explanation emitted at `pre` by `parent`.
pub(crate) fn audit_explanation(
    audit: &mut Audit,
    seen: &mut HashMap<String, ()>,
    parent: &ExplainingPropagator,
    x: &ExplainingPropagator,
    pre: &PartialStructure,
) {
    if x.rank() >= parent.rank() {
        audit.violations.push(format!("explanation {} has rank {} >= {}", x.key(), x.rank(), parent.rank()));
    }
    if !parent.propagate(pre).le(&x.propagate(pre)) {
        audit.violations.push(format!("explanation {} does not cover {} at {}", x.key(), parent.key(), pre.display_known()));
    }
    audit.chains_checked += 1;
    if let Err(msg) = crate::explain::check_chain(parent, pre) {
        audit.violations.push(msg);
    }
    if seen.insert(format!("{} -> {}", parent.key(), x.key()), ()).is_none() {
        audit.explanations.push((parent.p.clone(), x.p.clone()));
    }
}
