//! The problem DSL: lexer, recursive-descent parser, and printer.
//!
//! ```text
//! domain a b ;                      # or: domain 1..100 ;
//! vocab Edge/2, Trans/2 ;
//! module Mt := builtin transitive_closure(Edge, Trans) with voc {Edge, Trans} ;
//! module C  := clause { p | -q ; q } ;
//! module T  := table { [P(a), Q(b)] ; [] } with voc {P, Q} ;
//! expr E := project {Edge} (Mt * -Mf) ;
//! solve E ;
//! input "start.json" ;
//! ```

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::algebra::{typecheck, AtomicModuleDef, Builtin, Clause, Lit, ModuleBody, ModuleExpr, ModuleInterpretation, Theta};
use crate::lattice::{AtomId, Domain, PredSet, Signature, Vocabulary};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{line}:{col}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Str(String),
    Sym(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Str(s) => write!(f, "\"{s}\""),
            Tok::Sym(s) => write!(f, "`{s}`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

#[derive(Clone, Debug)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

const SYMBOLS: [&str; 20] = [
    ":=", "==", "!=", "..", ";", ",", "/", "{", "}", "(", ")", "[", "]", "|", "-", "*", "+", "&", "!", "~",
];

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '\''
}

fn lex(text: &str) -> Result<Vec<Spanned>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let (mut i, mut line, mut col) = (0, 1, 1);
    let mut out = Vec::new();
    let bump = |i: &mut usize, line: &mut usize, col: &mut usize, c: char| {
        *i += 1;
        if c == '\n' {
            *line += 1;
            *col = 1;
        } else {
            *col += 1;
        }
    };
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            bump(&mut i, &mut line, &mut col, c);
            continue;
        }
        if c == '#' || (c == '/' && chars.get(i + 1) == Some(&'/')) {
            while i < chars.len() && chars[i] != '\n' {
                let ch = chars[i];
                bump(&mut i, &mut line, &mut col, ch);
            }
            continue;
        }
        let (l0, c0) = (line, col);
        if is_ident_char(c) {
            let mut s = String::new();
            while i < chars.len() && is_ident_char(chars[i]) {
                s.push(chars[i]);
                let ch = chars[i];
                bump(&mut i, &mut line, &mut col, ch);
            }
            out.push(Spanned { tok: Tok::Ident(s), line: l0, col: c0 });
            continue;
        }
        if c == '"' {
            bump(&mut i, &mut line, &mut col, c);
            let mut s = String::new();
            loop {
                match chars.get(i) {
                    None | Some('\n') => return Err(ParseError { line: l0, col: c0, msg: "unterminated string".into() }),
                    Some('"') => {
                        bump(&mut i, &mut line, &mut col, '"');
                        break;
                    }
                    Some('\\') if matches!(chars.get(i + 1), Some('"' | '\\')) => {
                        s.push(chars[i + 1]);
                        bump(&mut i, &mut line, &mut col, '\\');
                        bump(&mut i, &mut line, &mut col, s.chars().last().unwrap_or(' '));
                    }
                    Some(&ch) => {
                        s.push(ch);
                        bump(&mut i, &mut line, &mut col, ch);
                    }
                }
            }
            out.push(Spanned { tok: Tok::Str(s), line: l0, col: c0 });
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        let Some(sym) = SYMBOLS.iter().find(|s| rest.starts_with(**s)) else {
            return Err(ParseError { line, col, msg: format!("unexpected character `{c}`") });
        };
        for ch in sym.chars() {
            bump(&mut i, &mut line, &mut col, ch);
        }
        out.push(Spanned { tok: Tok::Sym(sym), line: l0, col: c0 });
    }
    out.push(Spanned { tok: Tok::Eof, line, col });
    Ok(out)
}

/// A parsed problem: signature, named modules and expressions, and the goal.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub sig: Arc<Signature>,
    pub interp: ModuleInterpretation,
    /// Module names in declaration order.
    pub modules: Vec<String>,
    /// Named expressions in declaration order, with references to earlier expressions inlined.
    pub exprs: Vec<(String, ModuleExpr)>,
    pub goal: Option<String>,
    pub input: Option<String>,
}

impl ProblemSpec {
    /// The expression named by `solve`.
    pub fn goal_expr(&self) -> Option<ModuleExpr> {
        let goal = self.goal.as_ref()?;
        self.expr(goal)
    }

    pub fn expr(&self, name: &str) -> Option<ModuleExpr> {
        if let Some((_, e)) = self.exprs.iter().find(|(n, _)| n == name) {
            return Some(e.clone());
        }
        self.interp.defs.contains_key(name).then(|| ModuleExpr::Atomic(name.to_string()))
    }
}

struct Parser {
    toks: Vec<Spanned>,
    at: usize,
    domain: Option<Vec<String>>,
    vocab: Option<Vec<(String, usize)>>,
    sig: Option<Arc<Signature>>,
    interp: Option<ModuleInterpretation>,
    modules: Vec<String>,
    exprs: Vec<(String, ModuleExpr)>,
    goal: Option<String>,
    input: Option<String>,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].tok
    }

    fn err_at<T>(&self, at: usize, msg: impl Into<String>) -> PResult<T> {
        let s = &self.toks[at];
        Err(ParseError { line: s.line, col: s.col, msg: msg.into() })
    }

    fn err<T>(&self, msg: impl Into<String>) -> PResult<T> {
        self.err_at(self.at, msg)
    }

    fn next(&mut self) -> Tok {
        let t = self.toks[self.at].tok.clone();
        if t != Tok::Eof {
            self.at += 1;
        }
        t
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == kw)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> PResult<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.err(format!("expected `{s}`, found {}", self.peek()))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.is_kw(kw) {
            self.at += 1;
            Ok(())
        } else {
            self.err(format!("expected `{kw}`, found {}", self.peek()))
        }
    }

    fn ident(&mut self, what: &str) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.at += 1;
                Ok(s)
            }
            t => self.err(format!("expected {what}, found {t}")),
        }
    }

    fn sig(&mut self) -> PResult<Arc<Signature>> {
        if let Some(s) = &self.sig {
            return Ok(s.clone());
        }
        let Some(domain) = self.domain.clone() else {
            return self.err("`domain` must be declared first");
        };
        let vocab = self.vocab.clone().unwrap_or_default();
        let d = Domain::new(domain).or_else(|e| self.err(e.to_string()))?;
        let v = Vocabulary::new(vocab).or_else(|e| self.err(e.to_string()))?;
        let sig = Signature::new(d, v);
        self.interp = Some(ModuleInterpretation::new(&sig));
        self.sig = Some(sig.clone());
        Ok(sig)
    }

    fn problem(mut self) -> PResult<ProblemSpec> {
        loop {
            let start = self.at;
            match self.next() {
                Tok::Eof => break,
                Tok::Ident(kw) => match kw.as_str() {
                    "domain" => self.domain_stmt(start)?,
                    "vocab" => self.vocab_stmt(start)?,
                    "module" => self.module_stmt()?,
                    "expr" => self.expr_stmt()?,
                    "solve" => {
                        let at = self.at;
                        let name = self.ident("a module or expression name")?;
                        if self.goal.is_some() {
                            return self.err_at(start, "duplicate `solve`");
                        }
                        let known = self.exprs.iter().any(|(n, _)| *n == name) || self.modules.contains(&name);
                        if !known {
                            return self.err_at(at, format!("unknown module or expression `{name}`"));
                        }
                        self.goal = Some(name);
                    }
                    "input" => {
                        let Tok::Str(path) = self.next() else {
                            return self.err_at(self.at.saturating_sub(1), "expected a quoted path after `input`");
                        };
                        self.input = Some(path);
                    }
                    other => return self.err_at(start, format!("unknown statement `{other}`")),
                },
                t => return self.err_at(start, format!("expected a statement, found {t}")),
            }
            self.expect_sym(";")?;
        }
        let sig = self.sig()?;
        let interp = self.interp.take().unwrap_or_else(|| ModuleInterpretation::new(&sig));
        Ok(ProblemSpec { sig, interp, modules: self.modules, exprs: self.exprs, goal: self.goal, input: self.input })
    }

    fn domain_stmt(&mut self, start: usize) -> PResult<()> {
        if self.domain.is_some() {
            return self.err_at(start, "duplicate `domain`");
        }
        let mut names = Vec::new();
        while let Tok::Ident(_) = self.peek() {
            let at = self.at;
            let first = self.ident("an element")?;
            if self.eat_sym("..") {
                let last = self.ident("a range end")?;
                let (Ok(lo), Ok(hi)) = (first.parse::<i64>(), last.parse::<i64>()) else {
                    return self.err_at(at, "ranges need integer bounds");
                };
                if lo > hi {
                    return self.err_at(at, format!("empty range {lo}..{hi}"));
                }
                names.extend((lo..=hi).map(|k| k.to_string()));
            } else {
                names.push(first);
            }
        }
        if names.is_empty() {
            return self.err("expected domain elements");
        }
        self.domain = Some(names);
        Ok(())
    }

    fn vocab_stmt(&mut self, start: usize) -> PResult<()> {
        if self.vocab.is_some() || self.sig.is_some() {
            return self.err_at(start, "`vocab` must appear once, before modules");
        }
        let mut preds = Vec::new();
        loop {
            let name = self.ident("a predicate name")?;
            self.expect_sym("/")?;
            let at = self.at;
            let arity = self.ident("an arity")?;
            let Ok(arity) = arity.parse::<usize>() else {
                return self.err_at(at, format!("bad arity `{arity}`"));
            };
            preds.push((name, arity));
            if !self.eat_sym(",") {
                break;
            }
        }
        self.vocab = Some(preds);
        Ok(())
    }

    fn fresh_name(&mut self) -> PResult<String> {
        let at = self.at;
        let name = self.ident("a name")?;
        if self.modules.contains(&name) || self.exprs.iter().any(|(n, _)| *n == name) {
            return self.err_at(at, format!("`{name}` is already defined"));
        }
        if matches!(name.as_str(), "bot" | "project" | "select") {
            return self.err_at(at, format!("`{name}` is reserved"));
        }
        Ok(name)
    }

    fn pred_set(&mut self) -> PResult<Vec<String>> {
        self.expect_sym("{")?;
        let mut out = Vec::new();
        let sig = self.sig()?;
        if !self.is_sym("}") {
            loop {
                let at = self.at;
                let name = self.ident("a predicate")?;
                if sig.pred_id(&name).is_none() {
                    return self.err_at(at, format!("unknown predicate `{name}`"));
                }
                out.push(name);
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        self.expect_sym("}")?;
        Ok(out)
    }

    fn atom(&mut self) -> PResult<AtomId> {
        let sig = self.sig()?;
        let at = self.at;
        let name = self.ident("an atom")?;
        let mut args = Vec::new();
        if self.eat_sym("(") {
            if !self.is_sym(")") {
                loop {
                    args.push(self.ident("an element")?);
                    if !self.eat_sym(",") {
                        break;
                    }
                }
            }
            self.expect_sym(")")?;
        }
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        sig.atom_by_names(&name, &args).or_else(|e| self.err_at(at, e.to_string()))
    }

    fn literal(&mut self) -> PResult<Lit> {
        let neg = self.eat_sym("-") || self.eat_sym("~");
        Ok(Lit::new(self.atom()?, !neg))
    }

    fn module_stmt(&mut self) -> PResult<()> {
        let name = self.fresh_name()?;
        self.expect_sym(":=")?;
        let sig = self.sig()?;
        let kind_at = self.at;
        let kind = self.ident("`clause`, `table` or `builtin`")?;
        let mut mentioned = PredSet::new();
        let body = match kind.as_str() {
            "clause" => {
                self.expect_sym("{")?;
                let mut clauses = Vec::new();
                while !self.is_sym("}") {
                    let mut lits = Vec::new();
                    if self.is_kw("false") {
                        self.at += 1;
                    } else {
                        loop {
                            let l = self.literal()?;
                            mentioned.insert(sig.pred_of(l.atom));
                            lits.push(l);
                            if !self.eat_sym("|") {
                                break;
                            }
                        }
                    }
                    // Tautologies constrain nothing.
                    clauses.extend(Clause::new(lits));
                    if !self.eat_sym(";") {
                        break;
                    }
                }
                self.expect_sym("}")?;
                ModuleBody::Clauses(clauses)
            }
            "table" => {
                self.expect_sym("{")?;
                let mut rows = Vec::new();
                while self.eat_sym("[") {
                    let mut row = BTreeSet::new();
                    if !self.is_sym("]") {
                        loop {
                            let a = self.atom()?;
                            mentioned.insert(sig.pred_of(a));
                            row.insert(a);
                            if !self.eat_sym(",") {
                                break;
                            }
                        }
                    }
                    self.expect_sym("]")?;
                    rows.push(row);
                    if !self.eat_sym(";") {
                        break;
                    }
                }
                self.expect_sym("}")?;
                ModuleBody::Table(rows)
            }
            "builtin" => {
                let bat = self.at;
                let bname = self.ident("a builtin kind")?;
                self.expect_sym("(")?;
                let mut args = Vec::new();
                loop {
                    let at = self.at;
                    let p = self.ident("a predicate")?;
                    let Some(id) = sig.pred_id(&p) else {
                        return self.err_at(at, format!("unknown predicate `{p}`"));
                    };
                    args.push(id);
                    if !self.eat_sym(",") {
                        break;
                    }
                }
                self.expect_sym(")")?;
                mentioned.extend(args.iter().copied());
                let b = match (bname.as_str(), args.as_slice()) {
                    ("transitive_closure", &[edge, trans]) => Builtin::TransitiveClosure { edge, trans },
                    ("full_relation", &[sym]) => Builtin::FullRelation { sym },
                    ("bounds_leq", &[qc, qd]) => Builtin::BoundsLeq { qc, qd },
                    ("transitive_closure" | "full_relation" | "bounds_leq", _) => {
                        return self.err_at(bat, format!("wrong number of arguments for `{bname}`"))
                    }
                    _ => return self.err_at(bat, format!("unknown builtin `{bname}`")),
                };
                ModuleBody::Builtin(b)
            }
            other => return self.err_at(kind_at, format!("unknown module kind `{other}`")),
        };
        let voc_at = self.at;
        let voc = if self.is_kw("with") {
            self.at += 1;
            self.expect_kw("voc")?;
            let names = self.pred_set()?;
            sig.pred_set(&names).or_else(|e| self.err_at(voc_at, e.to_string()))?
        } else {
            mentioned
        };
        let def = AtomicModuleDef { voc, body };
        let interp = self.interp.as_mut().expect("signature is built");
        if let Err(e) = interp.insert(&name, def) {
            return self.err_at(voc_at, e.to_string());
        }
        self.modules.push(name);
        Ok(())
    }

    fn expr_stmt(&mut self) -> PResult<()> {
        let name = self.fresh_name()?;
        self.expect_sym(":=")?;
        self.sig()?;
        let at = self.at;
        let e = self.expr()?;
        if let Err(err) = typecheck(&e, self.interp.as_ref().expect("signature is built")) {
            return self.err_at(at, err.to_string());
        }
        self.exprs.push((name, e));
        Ok(())
    }

    fn expr(&mut self) -> PResult<ModuleExpr> {
        let mut e = self.product()?;
        while self.eat_sym("+") {
            e = ModuleExpr::plus(e, self.product()?);
        }
        Ok(e)
    }

    fn product(&mut self) -> PResult<ModuleExpr> {
        let mut e = self.unary()?;
        while self.eat_sym("*") {
            e = ModuleExpr::product(e, self.unary()?);
        }
        Ok(e)
    }

    fn unary(&mut self) -> PResult<ModuleExpr> {
        if self.eat_sym("-") {
            return Ok(ModuleExpr::complement(self.unary()?));
        }
        self.primary()
    }

    fn parenthesized(&mut self) -> PResult<ModuleExpr> {
        self.expect_sym("(")?;
        let e = self.expr()?;
        self.expect_sym(")")?;
        Ok(e)
    }

    fn primary(&mut self) -> PResult<ModuleExpr> {
        if self.is_sym("(") {
            return self.parenthesized();
        }
        let at = self.at;
        let name = self.ident("an expression")?;
        match name.as_str() {
            "bot" => Ok(ModuleExpr::Bot),
            "project" => {
                let delta = self.pred_set()?;
                Ok(ModuleExpr::project(&delta, self.parenthesized()?))
            }
            "select" => {
                if self.eat_sym("[") {
                    let t = self.theta()?;
                    self.expect_sym("]")?;
                    return Ok(ModuleExpr::select_theta(t, self.parenthesized()?));
                }
                let (q, r) = self.equality()?;
                Ok(ModuleExpr::select(&q, &r, self.parenthesized()?))
            }
            _ => {
                if let Some((_, e)) = self.exprs.iter().find(|(n, _)| *n == name) {
                    return Ok(e.clone());
                }
                if self.modules.contains(&name) {
                    return Ok(ModuleExpr::Atomic(name));
                }
                self.err_at(at, format!("unknown module or expression `{name}`"))
            }
        }
    }

    fn pred_name(&mut self) -> PResult<String> {
        let at = self.at;
        let p = self.ident("a predicate")?;
        if self.sig()?.pred_id(&p).is_none() {
            return self.err_at(at, format!("unknown predicate `{p}`"));
        }
        Ok(p)
    }

    fn equality(&mut self) -> PResult<(String, String)> {
        let q = self.pred_name()?;
        self.expect_sym("==")?;
        Ok((q, self.pred_name()?))
    }

    fn theta(&mut self) -> PResult<Theta> {
        let mut t = self.theta_and()?;
        while self.eat_sym("|") {
            t = Theta::Or(Box::new(t), Box::new(self.theta_and()?));
        }
        Ok(t)
    }

    fn theta_and(&mut self) -> PResult<Theta> {
        let mut t = self.theta_not()?;
        while self.eat_sym("&") {
            t = Theta::And(Box::new(t), Box::new(self.theta_not()?));
        }
        Ok(t)
    }

    fn theta_not(&mut self) -> PResult<Theta> {
        if self.eat_sym("!") {
            return Ok(Theta::Not(Box::new(self.theta_not()?)));
        }
        if self.eat_sym("(") {
            let t = self.theta()?;
            self.expect_sym(")")?;
            return Ok(t);
        }
        let q = self.pred_name()?;
        if self.eat_sym("==") {
            Ok(Theta::Eq(q, self.pred_name()?))
        } else if self.eat_sym("!=") {
            Ok(Theta::Neq(q, self.pred_name()?))
        } else {
            self.err(format!("expected `==` or `!=`, found {}", self.peek()))
        }
    }
}

pub fn parse_problem(text: &str) -> Result<ProblemSpec, ParseError> {
    let p = Parser {
        toks: lex(text)?,
        at: 0,
        domain: None,
        vocab: None,
        sig: None,
        interp: None,
        modules: Vec::new(),
        exprs: Vec::new(),
        goal: None,
        input: None,
    };
    p.problem()
}

fn lit_text(sig: &Signature, l: Lit) -> String {
    format!("{}{}", if l.pos { "" } else { "-" }, sig.atom_name(l.atom))
}

fn voc_text(sig: &Signature, voc: &PredSet) -> String {
    voc.iter().map(|&p| sig.pred(p).name.clone()).collect::<Vec<_>>().join(", ")
}

fn body_text(sig: &Signature, body: &ModuleBody) -> String {
    match body {
        ModuleBody::Clauses(cs) => {
            let cs: Vec<String> = cs
                .iter()
                .map(|c| {
                    if c.is_empty() {
                        "false".to_string()
                    } else {
                        c.lits().iter().map(|&l| lit_text(sig, l)).collect::<Vec<_>>().join(" | ")
                    }
                })
                .collect();
            if cs.is_empty() {
                "clause { }".to_string()
            } else {
                format!("clause {{ {} }}", cs.join(" ; "))
            }
        }
        ModuleBody::Table(rows) => {
            let rows: Vec<String> = rows
                .iter()
                .map(|r| format!("[{}]", r.iter().map(|&a| sig.atom_name(a)).collect::<Vec<_>>().join(", ")))
                .collect();
            if rows.is_empty() {
                "table { }".to_string()
            } else {
                format!("table {{ {} }}", rows.join(" ; "))
            }
        }
        ModuleBody::Builtin(b) => {
            let n = |p: usize| sig.pred(p).name.clone();
            match *b {
                Builtin::TransitiveClosure { edge, trans } => format!("builtin transitive_closure({}, {})", n(edge), n(trans)),
                Builtin::FullRelation { sym } => format!("builtin full_relation({})", n(sym)),
                Builtin::BoundsLeq { qc, qd } => format!("builtin bounds_leq({}, {})", n(qc), n(qd)),
            }
        }
    }
}

impl fmt::Display for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sig = &self.sig;
        writeln!(f, "domain {} ;", sig.domain().names().join(" "))?;
        if !sig.vocab().is_empty() {
            let preds: Vec<String> = sig.vocab().preds().iter().map(|p| format!("{}/{}", p.name, p.arity)).collect();
            writeln!(f, "vocab {} ;", preds.join(", "))?;
        }
        let mut seen = HashSet::new();
        for name in &self.modules {
            seen.insert(name);
            let def = self.interp.get(name).map_err(|_| fmt::Error)?;
            writeln!(f, "module {name} := {} with voc {{{}}} ;", body_text(sig, &def.body), voc_text(sig, &def.voc))?;
        }
        for (name, e) in &self.exprs {
            writeln!(f, "expr {name} := {e} ;")?;
        }
        if let Some(g) = &self.goal {
            writeln!(f, "solve {g} ;")?;
        }
        if let Some(p) = &self.input {
            writeln!(f, "input \"{}\" ;", p.replace('\\', "\\\\").replace('"', "\\\""))?;
        }
        Ok(())
    }
}
