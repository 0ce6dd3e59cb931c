//! `modex solve` and `modex check`.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use super::io::{read_structure, write_models};
use super::parse::{parse_problem, ProblemSpec};
use crate::algebra::{entailed_equalities, enumerate_models, vocabulary_of, ModuleExpr};
use crate::engines::{run_engine, solve, EngineConfig, EngineKind, Restart, SolveResult};
use crate::explain::{build_explaining, clause_ep, e_product, lift};
use crate::algebra::Clause;
use crate::lattice::PartialStructure;
use crate::propagators::{build_propagator, Strategy};

#[derive(Parser, Debug)]
#[command(name = "modex", version, about = "Model expansion for modular systems over partial structures")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Find models of the problem's goal expression.
    Solve(SolveArgs),
    /// Cross-check engines against the enumeration oracle.
    Check(CheckArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum StrategyArg {
    Checker,
    Best,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Strategy {
        match s {
            StrategyArg::Checker => Strategy::Checker,
            StrategyArg::Best => Strategy::Best,
        }
    }
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[arg(long)]
    problem: PathBuf,
    /// Initial partial structure (JSON); overrides the problem's `input` statement.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value = "cdl")]
    engine: EngineKind,
    #[arg(long, value_enum, default_value = "best")]
    strategy: StrategyArg,
    /// Report every model (the default).
    #[arg(long, conflicts_with = "first")]
    all: bool,
    /// Stop after k models.
    #[arg(long, value_name = "K")]
    first: Option<usize>,
    /// Restrict models to the goal's vocabulary and drop duplicates.
    #[arg(long)]
    project_output: bool,
    #[arg(long, default_value = "off")]
    restart: Restart,
    /// Write the trace to a file, or to standard error when no file is given.
    #[arg(long, value_name = "FILE", num_args = 0..=1, default_missing_value = "-")]
    trace: Option<String>,
    /// Print statistics as JSON to standard error.
    #[arg(long)]
    stats: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Print the models as a JSON document instead of one line each.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct CheckArgs {
    #[arg(long)]
    problem: PathBuf,
    #[arg(long)]
    input: Option<PathBuf>,
    /// Comma-separated engines to check.
    #[arg(long, value_delimiter = ',', default_value = "gc,prop,learn,cdl")]
    engines: Vec<EngineKind>,
    /// Compare against the enumeration oracle (always on; accepted for compatibility).
    #[arg(long)]
    oracle: bool,
    /// Strategies to run; both by default.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "checker,best")]
    strategy: Vec<StrategyArg>,
    /// Refuse signatures with more atoms than this.
    #[arg(long, default_value_t = 16)]
    atom_budget: usize,
    /// Test hook: conjoin a propagator that rejects the first oracle model.
    #[arg(long, hide = true)]
    inject_fault: bool,
}

/// A failure that maps to exit code 2.
struct Usage(String);

impl<E: std::fmt::Display> From<E> for Usage {
    fn from(e: E) -> Self {
        Usage(e.to_string())
    }
}

fn load(problem: &Path, input: Option<&Path>) -> Result<(ProblemSpec, ModuleExpr, PartialStructure), Usage> {
    let text = fs::read_to_string(problem).map_err(|e| Usage(format!("{}: {e}", problem.display())))?;
    let spec = parse_problem(&text).map_err(|e| Usage(format!("{}:{e}", problem.display())))?;
    let Some(goal) = spec.goal_expr() else {
        return Err(Usage(format!("{}: no `solve` statement", problem.display())));
    };
    let input_path = match (input, &spec.input) {
        (Some(p), _) => Some(p.to_path_buf()),
        (None, Some(p)) => Some(problem.parent().unwrap_or(Path::new(".")).join(p)),
        (None, None) => None,
    };
    let b = match input_path {
        Some(p) => {
            let text = fs::read_to_string(&p).map_err(|e| Usage(format!("{}: {e}", p.display())))?;
            read_structure(&text, Some(&spec.sig)).map_err(|e| Usage(format!("{}: {e}", p.display())))?
        }
        None => PartialStructure::unknown(&spec.sig),
    };
    Ok((spec, goal, b))
}

/// `EQUALITIES` lines for each extended selection, in preorder.
fn equality_lines(e: &ModuleExpr, out: &mut Vec<String>) -> Result<(), Usage> {
    match e {
        ModuleExpr::Bot | ModuleExpr::Atomic(_) => {}
        ModuleExpr::Product(a, b) | ModuleExpr::Plus(a, b) => {
            equality_lines(a, out)?;
            equality_lines(b, out)?;
        }
        ModuleExpr::Complement(a) | ModuleExpr::Project(_, a) | ModuleExpr::Select(_, _, a) => equality_lines(a, out)?,
        ModuleExpr::SelectTheta(t, a) => {
            let eqs: Vec<String> = entailed_equalities(t)?.into_iter().map(|(q, r)| format!("{q}=={r}")).collect();
            out.push(format!("EQUALITIES [{t}] -> [{}]", eqs.join(", ")));
            equality_lines(a, out)?;
        }
    }
    Ok(())
}

fn cmd_solve(a: SolveArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Usage> {
    let (spec, goal, b) = load(&a.problem, a.input.as_deref())?;
    let mut cfg = EngineConfig::new(a.engine);
    cfg.limit = a.first;
    cfg.restart = a.restart;
    cfg.trace = a.trace.is_some();
    cfg.seed = a.seed;
    if a.project_output {
        cfg.project_onto = Some(vocabulary_of(&goal, &spec.interp)?);
    }
    let r = solve(&goal, &spec.interp, &b, a.strategy.into(), &cfg)?;
    if let Some(dest) = &a.trace {
        let mut lines = Vec::new();
        equality_lines(&goal, &mut lines)?;
        lines.extend(r.trace.iter().cloned());
        let mut text = lines.join("\n");
        text.push('\n');
        if dest == "-" {
            err.write_all(text.as_bytes())?;
        } else {
            fs::write(dest, text).map_err(|e| Usage(format!("{dest}: {e}")))?;
        }
    }
    if a.json {
        out.write_all(write_models(&spec.sig, &r.models).as_bytes())?;
    } else {
        writeln!(out, "{} models", r.models.len())?;
        for m in &r.models {
            writeln!(out, "{}", m.display_known())?;
        }
    }
    if a.stats {
        writeln!(err, "{}", serde_json::to_string(&r.stats)?)?;
    }
    Ok(if r.models.is_empty() { 1 } else { 0 })
}

fn run_checked(
    kind: EngineKind,
    strategy: Strategy,
    spec: &ProblemSpec,
    goal: &ModuleExpr,
    b: &PartialStructure,
    fault: Option<&PartialStructure>,
) -> Result<SolveResult, Usage> {
    let cfg = EngineConfig::new(kind);
    let Some(m) = fault else {
        return Ok(solve(goal, &spec.interp, b, strategy, &cfg)?);
    };
    let ep = match strategy {
        Strategy::Best => build_explaining(goal, &spec.interp)?,
        Strategy::Checker => lift(build_propagator(goal, &spec.interp, Strategy::Checker)?),
    };
    let forbid = clause_ep(vec![Clause::negating(m, None)]);
    Ok(run_engine(&e_product(&ep, &forbid), b, &cfg))
}

fn cmd_check(a: CheckArgs, out: &mut dyn Write) -> Result<i32, Usage> {
    let (spec, goal, b) = load(&a.problem, a.input.as_deref())?;
    let n = spec.sig.num_atoms();
    if n > a.atom_budget {
        return Err(Usage(format!("signature has {n} atoms; the oracle budget is {} (raise it with --atom-budget)", a.atom_budget)));
    }
    let want = enumerate_models(&goal, &spec.interp, &b)?;
    writeln!(out, "oracle: {} models", want.len())?;
    let fault = if a.inject_fault { want.first() } else { None };
    let mut ok = true;
    for &kind in &a.engines {
        for &s in &a.strategy {
            let strategy = Strategy::from(s);
            let got = run_checked(kind, strategy, &spec, &goal, &b, fault)?.models;
            let label = format!("{kind}/{}", format!("{s:?}").to_lowercase());
            if got == want {
                writeln!(out, "{label}: {} models, ok", got.len())?;
                continue;
            }
            ok = false;
            writeln!(out, "{label}: {} models, MISMATCH", got.len())?;
            for m in want.iter().filter(|m| !got.contains(m)) {
                writeln!(out, "  - {}", m.display_known())?;
            }
            for m in got.iter().filter(|m| !want.contains(m)) {
                writeln!(out, "  + {}", m.display_known())?;
            }
        }
    }
    Ok(if ok { 0 } else { 1 })
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    let r = match cli.cmd {
        Command::Solve(a) => cmd_solve(a, out, err),
        Command::Check(a) => cmd_check(a, out),
    };
    match r {
        Ok(code) => code,
        Err(Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            2
        }
    }
}
