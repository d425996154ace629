//! SMT-LIB subset reader, canonical printer, and the textual proof format.
//!
//! Besides the usual QF_LIA operators the reader accepts `(cdiv t d)` for
//! `⌈t/d⌉` and `((_ divisible g) t)`, so printed interpolants read back.

use crate::arith::{rat, Atom, Int, LinTerm, Rat, Rel, VarId};
use crate::dioph::UnsatLinComb;
use crate::formula::{ExtAtom, ExtTerm, Formula, Mono};
use crate::proofs::{
    canonical_clause, resolvent, AtomDef, AtomTable, CutNode, CutProof, CutRule, LemmaProof, Lit, Origin, ResNode,
    ResProof,
};
use num_traits::{One, Signed, Zero};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

// ---------------------------------------------------------------------------
// S-expressions

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Sexp {
    Sym(String, Pos),
    List(Vec<Sexp>, Pos),
}

impl Sexp {
    pub fn pos(&self) -> Pos {
        match self {
            Sexp::Sym(_, p) | Sexp::List(_, p) => *p,
        }
    }

    fn sym(&self) -> Option<&str> {
        match self {
            Sexp::Sym(s, _) => Some(s),
            Sexp::List(..) => None,
        }
    }
}

impl fmt::Display for Sexp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sexp::Sym(s, _) => write!(f, "{s}"),
            Sexp::List(items, _) => {
                write!(f, "(")?;
                for (i, x) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, " ")?;
                    }
                    write!(f, "{x}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("{pos}: syntax error: {msg}")]
    Syntax { pos: Pos, msg: String },
    #[error("{pos}: nonlinear term")]
    Nonlinear { pos: Pos },
    #[error("{pos}: undeclared symbol `{name}`")]
    Undeclared { pos: Pos, name: String },
}

fn syntax<T>(pos: Pos, msg: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError::Syntax { pos, msg: msg.into() })
}

/// Reads all top-level S-expressions.
pub fn parse_sexps(text: &str) -> Result<Vec<Sexp>, ParseError> {
    let mut stack: Vec<(Vec<Sexp>, Pos)> = Vec::new();
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    let (mut line, mut col) = (1usize, 1usize);
    let mut tok = String::new();
    let mut tok_pos = Pos::default();

    fn flush(tok: &mut String, pos: Pos, stack: &mut [(Vec<Sexp>, Pos)], out: &mut Vec<Sexp>) {
        if tok.is_empty() {
            return;
        }
        let s = Sexp::Sym(std::mem::take(tok), pos);
        match stack.last_mut() {
            Some((items, _)) => items.push(s),
            None => out.push(s),
        }
    }

    while let Some(c) = chars.next() {
        let here = Pos { line, col };
        if c == '\n' {
            line += 1;
            col = 1;
        } else {
            col += 1;
        }
        match c {
            ';' => {
                flush(&mut tok, tok_pos, &mut stack, &mut out);
                while let Some(&d) = chars.peek() {
                    if d == '\n' {
                        break;
                    }
                    chars.next();
                    col += 1;
                }
            }
            '(' => {
                flush(&mut tok, tok_pos, &mut stack, &mut out);
                stack.push((Vec::new(), here));
            }
            ')' => {
                flush(&mut tok, tok_pos, &mut stack, &mut out);
                let Some((items, p)) = stack.pop() else { return syntax(here, "unbalanced `)`") };
                let s = Sexp::List(items, p);
                match stack.last_mut() {
                    Some((items, _)) => items.push(s),
                    None => out.push(s),
                }
            }
            '|' | '"' => {
                flush(&mut tok, tok_pos, &mut stack, &mut out);
                tok_pos = here;
                let mut closed = false;
                for d in chars.by_ref() {
                    if d == '\n' {
                        line += 1;
                        col = 1;
                    } else {
                        col += 1;
                    }
                    if d == c {
                        closed = true;
                        break;
                    }
                    tok.push(d);
                }
                if !closed {
                    return syntax(here, "unterminated quoted token");
                }
                if tok.is_empty() {
                    tok.push_str(if c == '"' { "\"\"" } else { "||" });
                }
                flush(&mut tok, tok_pos, &mut stack, &mut out);
            }
            c if c.is_whitespace() => flush(&mut tok, tok_pos, &mut stack, &mut out),
            c => {
                if tok.is_empty() {
                    tok_pos = here;
                }
                tok.push(c);
            }
        }
    }
    flush(&mut tok, tok_pos, &mut stack, &mut out);
    if let Some((_, p)) = stack.last() {
        return syntax(*p, "unclosed `(`");
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Problems

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sort {
    Int,
    Bool,
}

/// Ordered groups of assertions with declarations and an optional query.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct InterpolationProblem {
    pub decls: Vec<(String, Sort)>,
    pub group_names: Vec<String>,
    pub groups: Vec<Formula>,
    /// Names listed in `(get-interpolant …)`; they form the A side.
    pub query: Option<Vec<String>>,
}

impl InterpolationProblem {
    pub fn group_index(&self, name: &str) -> Option<usize> {
        self.group_names.iter().position(|g| g == name)
    }

    /// Groups reordered so the queried ones come first, plus the cut.
    pub fn query_split(&self) -> Option<(Vec<Formula>, usize)> {
        let q = self.query.as_ref()?;
        let a: Vec<usize> = (0..self.groups.len()).filter(|&i| q.contains(&self.group_names[i])).collect();
        let b: Vec<usize> = (0..self.groups.len()).filter(|i| !a.contains(i)).collect();
        let groups = a.iter().chain(&b).map(|&i| self.groups[i].clone()).collect();
        Some((groups, a.len()))
    }

    pub fn int_vars(&self) -> Vec<VarId> {
        self.decls.iter().filter(|(_, s)| *s == Sort::Int).map(|(n, _)| VarId::new(n)).collect()
    }

    /// Renders the problem in the accepted input syntax.
    pub fn to_smtlib(&self) -> String {
        let mut s = String::from("(set-logic QF_LIA)\n");
        for (n, sort) in &self.decls {
            let sort = match sort {
                Sort::Int => "Int",
                Sort::Bool => "Bool",
            };
            s.push_str(&format!("(declare-fun {n} () {sort})\n"));
        }
        for (name, g) in self.group_names.iter().zip(&self.groups) {
            s.push_str(&format!("(assert (! {} :itp-group {name}))\n", print_formula(g)));
        }
        s.push_str("(check-sat)\n");
        if let Some(q) = &self.query {
            s.push_str(&format!("(get-interpolant ({}))\n", q.join(" ")));
        }
        s
    }
}

const DEFAULT_GROUP: &str = "default";

struct Reader {
    sorts: HashMap<String, Sort>,
}

/// An integer term as guarded cases; `ite` produces more than one.
type Cases = Vec<(Formula, ExtTerm)>;

impl Reader {
    fn formula(&self, e: &Sexp) -> Result<Formula, ParseError> {
        match e {
            Sexp::Sym(s, p) => match s.as_str() {
                "true" => Ok(Formula::True),
                "false" => Ok(Formula::False),
                name => match self.sorts.get(name) {
                    Some(Sort::Bool) => Ok(Formula::Bool(name.to_string())),
                    Some(Sort::Int) => syntax(*p, format!("`{name}` is not Boolean")),
                    None => Err(ParseError::Undeclared { pos: *p, name: name.to_string() }),
                },
            },
            Sexp::List(items, p) => {
                let Some(head) = items.first() else { return syntax(*p, "empty application") };
                let args = &items[1..];
                if let Sexp::List(h, _) = head {
                    // ((_ divisible g) t)
                    if h.len() == 3 && h[0].sym() == Some("_") && h[1].sym() == Some("divisible") {
                        let g = self.literal(&h[2])?;
                        if !g.is_integer() || !g.is_positive() || args.len() != 1 {
                            return syntax(*p, "bad divisibility test");
                        }
                        let t = self.term(&args[0])?;
                        return Ok(lift(t, |t| Formula::atom(ExtAtom::new(t, Rel::Mod(g.to_integer())))));
                    }
                    return syntax(head.pos(), "unsupported indexed operator");
                }
                let op = head.sym().unwrap();
                let fs = || args.iter().map(|a| self.formula(a)).collect::<Result<Vec<_>, _>>();
                match op {
                    "and" => Ok(Formula::and(fs()?)),
                    "or" => Ok(Formula::or(fs()?)),
                    "not" => {
                        let [a] = args else { return syntax(*p, "`not` takes one argument") };
                        Ok(Formula::not(self.formula(a)?))
                    }
                    "=>" => {
                        let mut v = fs()?;
                        let Some(last) = v.pop() else { return syntax(*p, "`=>` needs arguments") };
                        let mut parts: Vec<Formula> = v.into_iter().map(Formula::not).collect();
                        parts.push(last);
                        Ok(Formula::or(parts))
                    }
                    "ite" => {
                        let [c, a, b] = args else { return syntax(*p, "`ite` takes three arguments") };
                        let c = self.formula(c)?;
                        Ok(Formula::or(vec![
                            Formula::and(vec![c.clone(), self.formula(a)?]),
                            Formula::and(vec![Formula::not(c), self.formula(b)?]),
                        ]))
                    }
                    "!" => {
                        let Some(a) = args.first() else { return syntax(*p, "empty annotation") };
                        self.formula(a)
                    }
                    "<=" | "<" | ">=" | ">" | "=" | "distinct" => self.relation(op, args, *p),
                    other => syntax(head.pos(), format!("unknown operator `{other}`")),
                }
            }
        }
    }

    fn is_bool(&self, e: &Sexp) -> bool {
        match e {
            Sexp::Sym(s, _) => s == "true" || s == "false" || self.sorts.get(s) == Some(&Sort::Bool),
            Sexp::List(items, _) => match items.first() {
                Some(Sexp::Sym(h, _)) => match h.as_str() {
                    "and" | "or" | "not" | "=>" | "<=" | "<" | ">=" | ">" | "=" | "distinct" => true,
                    "ite" => items.get(2).is_some_and(|a| self.is_bool(a)),
                    "!" => items.get(1).is_some_and(|a| self.is_bool(a)),
                    _ => false,
                },
                Some(Sexp::List(..)) => true,
                None => false,
            },
        }
    }

    fn relation(&self, op: &str, args: &[Sexp], p: Pos) -> Result<Formula, ParseError> {
        if args.len() < 2 {
            return syntax(p, format!("`{op}` needs two arguments"));
        }
        if (op == "=" || op == "distinct") && self.is_bool(&args[0]) {
            let fs = args.iter().map(|a| self.formula(a)).collect::<Result<Vec<_>, _>>()?;
            let iff = |a: &Formula, b: &Formula| {
                Formula::or(vec![
                    Formula::and(vec![a.clone(), b.clone()]),
                    Formula::and(vec![Formula::not(a.clone()), Formula::not(b.clone())]),
                ])
            };
            let pairs: Vec<Formula> = fs.windows(2).map(|w| iff(&w[0], &w[1])).collect();
            let f = Formula::and(pairs);
            return Ok(if op == "distinct" { Formula::not(f) } else { f });
        }
        let ts = args.iter().map(|a| self.term(a)).collect::<Result<Vec<_>, _>>()?;
        let mut parts = Vec::new();
        for i in 0..ts.len() - 1 {
            let pairs = product(&ts[i], &ts[i + 1]);
            let f = Formula::or(
                pairs
                    .into_iter()
                    .map(|(g, l, r)| {
                        let d = l.minus(&r);
                        let a = match op {
                            "<=" => Formula::atom(ExtAtom::le(d)),
                            "<" => {
                                let mut d = d;
                                d.add_constant(&rat(1));
                                Formula::atom(ExtAtom::le(d))
                            }
                            ">=" => Formula::atom(ExtAtom::le(d.neg())),
                            ">" => {
                                let mut d = d.neg();
                                d.add_constant(&rat(1));
                                Formula::atom(ExtAtom::le(d))
                            }
                            "=" => Formula::atom(ExtAtom::new(d, Rel::Eq)),
                            _ => Formula::not(Formula::atom(ExtAtom::new(d, Rel::Eq))),
                        };
                        Formula::and(vec![g, a])
                    })
                    .collect(),
            );
            parts.push(f);
        }
        Ok(Formula::and(parts))
    }

    fn literal(&self, e: &Sexp) -> Result<Rat, ParseError> {
        let cases = self.term(e)?;
        match cases.as_slice() {
            [(Formula::True, t)] if t.is_constant() => Ok(t.constant().clone()),
            _ => syntax(e.pos(), "expected a numeral"),
        }
    }

    fn term(&self, e: &Sexp) -> Result<Cases, ParseError> {
        match e {
            Sexp::Sym(s, p) => {
                if s.chars().all(|c| c.is_ascii_digit()) {
                    let n: Int = s.parse().map_err(|_| ParseError::Syntax { pos: *p, msg: "bad numeral".into() })?;
                    return Ok(vec![(Formula::True, ExtTerm::constant_term(Rat::from_integer(n)))]);
                }
                match self.sorts.get(s.as_str()) {
                    Some(Sort::Int) => Ok(vec![(Formula::True, ExtTerm::var(VarId::new(s)))]),
                    Some(Sort::Bool) => syntax(*p, format!("`{s}` is not an integer")),
                    None => Err(ParseError::Undeclared { pos: *p, name: s.clone() }),
                }
            }
            Sexp::List(items, p) => {
                let Some(Sexp::Sym(op, hp)) = items.first() else { return syntax(*p, "bad term") };
                let args = &items[1..];
                let ts = || args.iter().map(|a| self.term(a)).collect::<Result<Vec<_>, _>>();
                match op.as_str() {
                    "+" => Ok(ts()?.into_iter().reduce(|a, b| combine(&a, &b, |x, y| x.plus(y))).unwrap_or_else(zero_cases)),
                    "-" => {
                        let v = ts()?;
                        match v.len() {
                            0 => syntax(*p, "`-` needs arguments"),
                            1 => Ok(map_cases(&v[0], |t| t.neg())),
                            _ => Ok(v.into_iter().reduce(|a, b| combine(&a, &b, |x, y| x.minus(y))).unwrap()),
                        }
                    }
                    "*" => {
                        let v = ts()?;
                        let mut acc = vec![(Formula::True, ExtTerm::constant_term(rat(1)))];
                        for t in v {
                            let mut next = Vec::new();
                            for (g, l, r) in product(&acc, &t) {
                                let prod = if l.is_constant() {
                                    r.scale(l.constant())
                                } else if r.is_constant() {
                                    l.scale(r.constant())
                                } else {
                                    return Err(ParseError::Nonlinear { pos: *p });
                                };
                                next.push((g, prod));
                            }
                            acc = next;
                        }
                        Ok(acc)
                    }
                    "/" => {
                        let [a, b] = args else { return syntax(*p, "`/` takes two arguments") };
                        let (a, b) = (self.literal(a)?, self.literal(b)?);
                        if b.is_zero() {
                            return syntax(*p, "division by zero");
                        }
                        Ok(vec![(Formula::True, ExtTerm::constant_term(a / b))])
                    }
                    "cdiv" => {
                        let [t, d] = args else { return syntax(*p, "`cdiv` takes two arguments") };
                        let d = self.literal(d)?;
                        if !d.is_integer() || !d.is_positive() {
                            return syntax(*p, "`cdiv` needs a positive integer divisor");
                        }
                        let d = d.to_integer();
                        Ok(map_cases(&self.term(t)?, |t| ExtTerm::ceil_div(t, &d)))
                    }
                    "ite" => {
                        let [c, a, b] = args else { return syntax(*p, "`ite` takes three arguments") };
                        let c = self.formula(c)?;
                        let mut out = Vec::new();
                        for (g, t) in self.term(a)? {
                            out.push((Formula::and(vec![c.clone(), g]), t));
                        }
                        for (g, t) in self.term(b)? {
                            out.push((Formula::and(vec![Formula::not(c.clone()), g]), t));
                        }
                        Ok(out)
                    }
                    "!" => match args.first() {
                        Some(a) => self.term(a),
                        None => syntax(*p, "empty annotation"),
                    },
                    other => syntax(*hp, format!("unknown integer operator `{other}`")),
                }
            }
        }
    }
}

fn zero_cases() -> Cases {
    vec![(Formula::True, ExtTerm::zero())]
}

fn map_cases(c: &Cases, f: impl Fn(&ExtTerm) -> ExtTerm) -> Cases {
    c.iter().map(|(g, t)| (g.clone(), f(t))).collect()
}

fn product(a: &Cases, b: &Cases) -> Vec<(Formula, ExtTerm, ExtTerm)> {
    let mut out = Vec::new();
    for (g1, t1) in a {
        for (g2, t2) in b {
            out.push((Formula::and(vec![g1.clone(), g2.clone()]), t1.clone(), t2.clone()));
        }
    }
    out
}

fn combine(a: &Cases, b: &Cases, f: impl Fn(&ExtTerm, &ExtTerm) -> ExtTerm) -> Cases {
    product(a, b).into_iter().map(|(g, l, r)| (g, f(&l, &r))).collect()
}

fn lift(cases: Cases, f: impl Fn(ExtTerm) -> Formula) -> Formula {
    Formula::or(cases.into_iter().map(|(g, t)| Formula::and(vec![g, f(t)])).collect())
}

/// Parses a problem script.
pub fn parse_problem(text: &str) -> Result<InterpolationProblem, ParseError> {
    let mut prob = InterpolationProblem::default();
    let mut reader = Reader { sorts: HashMap::new() };
    for cmd in parse_sexps(text)? {
        let Sexp::List(items, p) = &cmd else { return syntax(cmd.pos(), "expected a command") };
        let Some(name) = items.first().and_then(|h| h.sym()) else { return syntax(*p, "expected a command") };
        match name {
            "set-logic" | "set-option" | "set-info" | "exit" | "get-model" | "check-sat" | "get-proof" => {}
            "declare-fun" | "declare-const" => {
                let (sym, sort) = match (name, &items[1..]) {
                    ("declare-fun", [Sexp::Sym(s, _), Sexp::List(args, _), Sexp::Sym(sort, sp)]) if args.is_empty() => {
                        (s.clone(), (sort.as_str(), *sp))
                    }
                    ("declare-const", [Sexp::Sym(s, _), Sexp::Sym(sort, sp)]) => (s.clone(), (sort.as_str(), *sp)),
                    _ => return syntax(*p, "only nullary Int or Bool declarations are supported"),
                };
                let sort = match sort.0 {
                    "Int" => Sort::Int,
                    "Bool" => Sort::Bool,
                    _ => return syntax(sort.1, "unsupported sort"),
                };
                if reader.sorts.insert(sym.clone(), sort).is_some() {
                    return syntax(*p, format!("`{sym}` declared twice"));
                }
                prob.decls.push((sym, sort));
            }
            "assert" => {
                let [body] = &items[1..] else { return syntax(*p, "`assert` takes one argument") };
                let mut group = None;
                if let Sexp::List(inner, _) = body {
                    if inner.first().and_then(|h| h.sym()) == Some("!") {
                        let attrs = &inner[2..];
                        for w in attrs.chunks(2) {
                            if w[0].sym() == Some(":itp-group") {
                                match w.get(1).and_then(|v| v.sym()) {
                                    Some(g) => group = Some(g.to_string()),
                                    None => return syntax(w[0].pos(), "missing group name"),
                                }
                            }
                        }
                    }
                }
                let f = reader.formula(body)?;
                let idx = match group {
                    Some(g) => match prob.group_index(&g) {
                        Some(i) => i,
                        None => {
                            prob.group_names.push(g);
                            prob.groups.push(Formula::True);
                            prob.groups.len() - 1
                        }
                    },
                    None => match prob.groups.len().checked_sub(1) {
                        Some(i) => i,
                        None => {
                            prob.group_names.push(DEFAULT_GROUP.to_string());
                            prob.groups.push(Formula::True);
                            prob.groups.len() - 1
                        }
                    },
                };
                let g = std::mem::replace(&mut prob.groups[idx], Formula::True);
                prob.groups[idx] = Formula::and(vec![g, f]);
            }
            "get-interpolant" | "get-interpolants" => {
                let mut names = Vec::new();
                for a in &items[1..] {
                    match a {
                        Sexp::Sym(s, _) => names.push(s.clone()),
                        Sexp::List(xs, _) => {
                            for x in xs {
                                match x.sym() {
                                    Some(s) => names.push(s.to_string()),
                                    None => return syntax(x.pos(), "expected a group name"),
                                }
                            }
                        }
                    }
                }
                for n in &names {
                    if prob.group_index(n).is_none() {
                        return Err(ParseError::Undeclared { pos: *p, name: n.clone() });
                    }
                }
                prob.query = Some(names);
            }
            other => return syntax(*p, format!("unsupported command `{other}`")),
        }
    }
    Ok(prob)
}

/// Parses a single formula over the given declarations.
pub fn parse_formula(text: &str, decls: &[(String, Sort)]) -> Result<Formula, ParseError> {
    let reader = Reader { sorts: decls.iter().cloned().collect() };
    let es = parse_sexps(text)?;
    let [e] = es.as_slice() else { return syntax(Pos::default(), "expected one formula") };
    reader.formula(e)
}

// ---------------------------------------------------------------------------
// Printing

fn num_sexp(r: &Rat) -> Sexp {
    let p = Pos::default();
    let int_sexp = |n: &Int| {
        if n.is_negative() {
            Sexp::List(vec![Sexp::Sym("-".into(), p), Sexp::Sym((-n).to_string(), p)], p)
        } else {
            Sexp::Sym(n.to_string(), p)
        }
    };
    if r.is_integer() {
        int_sexp(r.numer())
    } else {
        Sexp::List(vec![Sexp::Sym("/".into(), p), int_sexp(r.numer()), Sexp::Sym(r.denom().to_string(), p)], p)
    }
}

fn list(items: Vec<Sexp>) -> Sexp {
    Sexp::List(items, Pos::default())
}

fn sym(s: &str) -> Sexp {
    Sexp::Sym(s.to_string(), Pos::default())
}

pub fn term_sexp(t: &ExtTerm) -> Sexp {
    let mut parts = Vec::new();
    for (m, c) in t.coeffs() {
        let base = match m {
            Mono::Var(v) => sym(v.name()),
            Mono::Ceil(content, d) => list(vec![sym("cdiv"), term_sexp(content), sym(&d.to_string())]),
        };
        parts.push(if c.is_one() { base } else { list(vec![sym("*"), num_sexp(c), base]) });
    }
    if !t.constant().is_zero() || parts.is_empty() {
        parts.push(num_sexp(t.constant()));
    }
    if parts.len() == 1 {
        parts.pop().unwrap()
    } else {
        let mut v = vec![sym("+")];
        v.extend(parts);
        list(v)
    }
}

pub fn formula_sexp(f: &Formula) -> Sexp {
    match f {
        Formula::True => sym("true"),
        Formula::False => sym("false"),
        Formula::Bool(n) => sym(n),
        Formula::Not(g) => list(vec![sym("not"), formula_sexp(g)]),
        Formula::And(gs) | Formula::Or(gs) => {
            let op = if matches!(f, Formula::And(_)) { "and" } else { "or" };
            let mut v = vec![sym(op)];
            v.extend(gs.iter().map(formula_sexp));
            list(v)
        }
        Formula::Atom(a) => match &a.rel {
            Rel::Le => list(vec![sym("<="), term_sexp(&a.term), sym("0")]),
            Rel::Eq => list(vec![sym("="), term_sexp(&a.term), sym("0")]),
            Rel::Mod(g) => list(vec![list(vec![sym("_"), sym("divisible"), sym(&g.to_string())]), term_sexp(&a.term)]),
        },
    }
}

pub fn print_formula(f: &Formula) -> String {
    formula_sexp(f).to_string()
}

/// Number of distinct subtrees of the printed form.
pub fn dag_size(f: &Formula) -> usize {
    fn go(e: &Sexp, seen: &mut HashSet<String>) {
        if !seen.insert(e.to_string()) {
            return;
        }
        if let Sexp::List(items, _) = e {
            items.iter().for_each(|x| go(x, seen));
        }
    }
    let mut seen = HashSet::new();
    go(&formula_sexp(f), &mut seen);
    seen.len()
}

// ---------------------------------------------------------------------------
// Proof files

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProofFormatError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("{pos}: {msg}")]
    Bad { pos: Pos, msg: String },
}

fn bad<T>(pos: Pos, msg: impl Into<String>) -> Result<T, ProofFormatError> {
    Err(ProofFormatError::Bad { pos, msg: msg.into() })
}

fn atom_sexp(a: &Atom) -> Sexp {
    formula_sexp(&Formula::Atom(ExtAtom::from_atom(a)))
}

fn lit_sexp(l: Lit) -> Sexp {
    let a = sym(&format!("a{}", l.atom()));
    if l.is_pos() {
        a
    } else {
        list(vec![sym("not"), a])
    }
}

fn cut_sexp(p: &CutProof) -> Sexp {
    let mut items = vec![sym("cut")];
    for id in p.reachable() {
        let n = p.node(id);
        let body = match &n.rule {
            CutRule::Hyp(a) => {
                let mut v = vec![sym("hyp"), atom_sexp(a)];
                if a.rel == Rel::Eq && n.term != a.term {
                    v.push(sym("-"));
                }
                list(v)
            }
            CutRule::Comb { c1, left, c2, right } => list(vec![
                sym("comb"),
                num_sexp(c1),
                sym(&format!("n{left}")),
                num_sexp(c2),
                sym(&format!("n{right}")),
            ]),
            CutRule::Strengthen { child, d, .. } => list(vec![sym("strengthen"), sym(&format!("n{child}")), sym(&d.to_string())]),
            CutRule::Division { child, d } => list(vec![sym("division"), sym(&format!("n{child}")), sym(&d.to_string())]),
        };
        items.push(list(vec![sym(&format!("n{id}")), body]));
    }
    items.push(list(vec![sym("root"), sym(&format!("n{}", p.root()))]));
    list(items)
}

/// Writes a resolution proof with its theory lemmas as S-expressions.
pub fn write_proof(p: &ResProof) -> String {
    let mut out = String::from("(proof\n (atoms");
    for (i, d) in p.atoms.defs().iter().enumerate() {
        let body = match d {
            AtomDef::Theory(a) => atom_sexp(a),
            AtomDef::Bool { name, tseitin_group: None } => list(vec![sym("bool"), sym(&format!("|{name}|"))]),
            AtomDef::Bool { name, tseitin_group: Some(g) } => {
                list(vec![sym("tseitin"), sym(&format!("|{name}|")), sym(&g.to_string())])
            }
        };
        out.push_str(&format!("\n  (a{i} {body})"));
    }
    out.push(')');
    for id in p.reachable() {
        let body = match &p.nodes[id] {
            ResNode::Leaf { clause, origin } => {
                let origin = match origin {
                    Some(Origin::Group(g)) => list(vec![sym("group"), sym(&g.to_string())]),
                    Some(Origin::BnbLemma) => sym("split"),
                    Some(Origin::TLemma(lp)) => {
                        let mut v = vec![sym("lemma"), cut_sexp(&lp.cut)];
                        if let Some(cert) = &lp.eq_cert {
                            let mut c = vec![sym("eqcert")];
                            for (k, _, a) in &cert.coeffs {
                                c.push(list(vec![num_sexp(&Rat::from_integer(k.clone())), atom_sexp(a)]));
                            }
                            v.push(list(c));
                        }
                        list(v)
                    }
                    None => sym("none"),
                };
                let clause = list(clause.iter().map(|&l| lit_sexp(l)).collect());
                list(vec![sym("leaf"), origin, clause])
            }
            ResNode::Res { pivot, left, right, .. } => {
                list(vec![sym("res"), sym(&format!("a{pivot}")), sym(&format!("r{left}")), sym(&format!("r{right}"))])
            }
        };
        out.push_str(&format!("\n (r{id} {body})"));
    }
    out.push_str(&format!("\n (root r{}))\n", p.root));
    out
}

fn indexed(e: &Sexp, prefix: char) -> Result<usize, ProofFormatError> {
    match e.sym().and_then(|s| s.strip_prefix(prefix)).and_then(|s| s.parse().ok()) {
        Some(i) => Ok(i),
        None => bad(e.pos(), format!("expected a `{prefix}N` reference")),
    }
}

struct ProofReader {
    decls: Vec<(String, Sort)>,
}

impl ProofReader {
    fn atom(&self, e: &Sexp) -> Result<Atom, ProofFormatError> {
        let f = Reader { sorts: self.decls.iter().cloned().collect() }.formula(e)?;
        match f {
            Formula::Atom(a) => match a.to_atom() {
                Some(a) => Ok(a),
                None => bad(e.pos(), "ceilings are not allowed in proofs"),
            },
            _ => bad(e.pos(), "expected a non-constant atom"),
        }
    }

    fn num(&self, e: &Sexp) -> Result<Rat, ProofFormatError> {
        Ok(Reader { sorts: HashMap::new() }.literal(e)?)
    }

    fn cut(&self, e: &Sexp) -> Result<CutProof, ProofFormatError> {
        let Sexp::List(items, p) = e else { return bad(e.pos(), "expected `(cut …)`") };
        if items.first().and_then(|h| h.sym()) != Some("cut") {
            return bad(*p, "expected `(cut …)`");
        }
        let mut ids: BTreeMap<usize, usize> = BTreeMap::new();
        let mut nodes: Vec<CutNode> = Vec::new();
        let mut root = None;
        for it in &items[1..] {
            let Sexp::List(kv, ip) = it else { return bad(it.pos(), "expected a node") };
            let [k, body] = kv.as_slice() else { return bad(*ip, "expected `(nK rule)`") };
            if k.sym() == Some("root") {
                root = Some(*ids.get(&indexed(body, 'n')?).ok_or(ProofFormatError::Bad { pos: *ip, msg: "unknown root".into() })?);
                continue;
            }
            let key = indexed(k, 'n')?;
            let Sexp::List(r, rp) = body else { return bad(body.pos(), "expected a rule") };
            let child = |e: &Sexp| -> Result<usize, ProofFormatError> {
                let i = indexed(e, 'n')?;
                ids.get(&i).copied().ok_or(ProofFormatError::Bad { pos: e.pos(), msg: format!("node n{i} not yet defined") })
            };
            let node = match (r.first().and_then(|h| h.sym()), &r[1..]) {
                (Some("hyp"), [a]) => {
                    let a = self.atom(a)?;
                    CutNode { term: a.term.clone(), rule: CutRule::Hyp(a) }
                }
                (Some("hyp"), [a, s]) if s.sym() == Some("-") => {
                    let a = self.atom(a)?;
                    CutNode { term: a.term.neg(), rule: CutRule::Hyp(a) }
                }
                (Some("comb"), [c1, l, c2, rr]) => {
                    let (c1, c2, l, rr) = (self.num(c1)?, self.num(c2)?, child(l)?, child(rr)?);
                    let mut t = nodes[l].term.scale(&c1);
                    t.add_scaled(&c2, &nodes[rr].term);
                    CutNode { rule: CutRule::Comb { c1, left: l, c2, right: rr }, term: t }
                }
                (Some(rule @ ("strengthen" | "division")), [c, d]) => {
                    let c = child(c)?;
                    let d = self.num(d)?;
                    if !d.is_integer() || !d.is_positive() {
                        return bad(*rp, "divisor must be a positive integer");
                    }
                    let d = d.to_integer();
                    let t = &nodes[c].term;
                    let dr = Rat::from_integer(d.clone());
                    let up = Rat::from_integer(crate::arith::ceil(&(t.constant() / &dr)));
                    if rule == "strengthen" {
                        let k = &up * &dr - t.constant();
                        let mut term = t.clone();
                        term.add_constant(&k);
                        CutNode { rule: CutRule::Strengthen { child: c, d, k }, term }
                    } else {
                        let mut term = t.without_constant().scale(&(Rat::one() / &dr));
                        term.set_constant(up);
                        CutNode { rule: CutRule::Division { child: c, d }, term }
                    }
                }
                _ => return bad(*rp, "unknown cutting-plane rule"),
            };
            ids.insert(key, nodes.len());
            nodes.push(node);
        }
        let Some(root) = root else { return bad(*p, "cut proof has no root") };
        Ok(CutProof::from_nodes(nodes, root))
    }

    fn lit(&self, e: &Sexp, n_atoms: usize) -> Result<Lit, ProofFormatError> {
        let (a, pos) = match e {
            Sexp::List(v, _) if v.len() == 2 && v[0].sym() == Some("not") => (indexed(&v[1], 'a')?, false),
            e => (indexed(e, 'a')?, true),
        };
        if a >= n_atoms {
            return bad(e.pos(), "unknown atom");
        }
        Ok(Lit::new(a as u32, pos))
    }
}

/// Reads a proof written by [`write_proof`]. Resolvents and rounding amounts
/// are recomputed, not read.
pub fn read_proof(text: &str) -> Result<ResProof, ProofFormatError> {
    let es = parse_sexps(text)?;
    let [Sexp::List(items, p)] = es.as_slice() else { return bad(Pos::default(), "expected one `(proof …)` form") };
    if items.first().and_then(|h| h.sym()) != Some("proof") {
        return bad(*p, "expected `(proof …)`");
    }
    let Some(Sexp::List(atom_items, ap)) = items.get(1) else { return bad(*p, "missing atom table") };
    if atom_items.first().and_then(|h| h.sym()) != Some("atoms") {
        return bad(*ap, "missing atom table");
    }
    // Declare every variable that occurs in the table.
    let mut decls = Vec::new();
    let mut seen = HashSet::new();
    fn collect(e: &Sexp, out: &mut Vec<(String, Sort)>, seen: &mut HashSet<String>) {
        match e {
            Sexp::Sym(s, _) => {
                let keyword = matches!(s.as_str(), "<=" | "=" | "+" | "*" | "-" | "/" | "_" | "divisible" | "cdiv");
                if !keyword && !s.chars().all(|c| c.is_ascii_digit()) && seen.insert(s.clone()) {
                    out.push((s.clone(), Sort::Int));
                }
            }
            Sexp::List(v, _) => v.iter().for_each(|x| collect(x, out, seen)),
        }
    }
    let mut defs = Vec::new();
    for (i, it) in atom_items[1..].iter().enumerate() {
        let Sexp::List(kv, ip) = it else { return bad(it.pos(), "expected `(aN atom)`") };
        let [k, body] = kv.as_slice() else { return bad(*ip, "expected `(aN atom)`") };
        if indexed(k, 'a')? != i {
            return bad(k.pos(), "atoms must be numbered consecutively");
        }
        match body {
            Sexp::List(v, _) if matches!(v.first().and_then(|h| h.sym()), Some("bool" | "tseitin")) => {}
            _ => collect(body, &mut decls, &mut seen),
        }
        defs.push(body.clone());
    }
    let reader = ProofReader { decls };
    let mut atoms = AtomTable::new();
    for (i, body) in defs.iter().enumerate() {
        let id = match body {
            Sexp::List(v, bp) if v.first().and_then(|h| h.sym()) == Some("bool") => {
                let [_, n] = v.as_slice() else { return bad(*bp, "bad Boolean atom") };
                atoms.bool_var(n.sym().unwrap_or_default(), None)
            }
            Sexp::List(v, bp) if v.first().and_then(|h| h.sym()) == Some("tseitin") => {
                let [_, n, g] = v.as_slice() else { return bad(*bp, "bad Tseitin atom") };
                let g: usize = g.sym().and_then(|s| s.parse().ok()).ok_or(ProofFormatError::Bad { pos: *bp, msg: "bad group".into() })?;
                atoms.bool_var(n.sym().unwrap_or_default(), Some(g))
            }
            e => {
                let a = reader.atom(e)?;
                let l = atoms.lit(&a);
                if !l.is_pos() {
                    return bad(e.pos(), "atom repeats an earlier one");
                }
                l.atom()
            }
        };
        if id as usize != i {
            return bad(body.pos(), "duplicate atom");
        }
    }
    let n_atoms = atoms.len();
    let mut proof = ResProof::new(atoms);
    let mut ids: BTreeMap<usize, usize> = BTreeMap::new();
    let mut root = None;
    for it in &items[2..] {
        let Sexp::List(kv, ip) = it else { return bad(it.pos(), "expected a node") };
        let [k, body] = kv.as_slice() else { return bad(*ip, "expected `(rN node)`") };
        if k.sym() == Some("root") {
            let r = indexed(body, 'r')?;
            root = Some(*ids.get(&r).ok_or(ProofFormatError::Bad { pos: *ip, msg: "unknown root".into() })?);
            continue;
        }
        let key = indexed(k, 'r')?;
        let Sexp::List(r, rp) = body else { return bad(body.pos(), "expected a node body") };
        let node = match (r.first().and_then(|h| h.sym()), &r[1..]) {
            (Some("leaf"), [origin, Sexp::List(lits, _)]) => {
                let clause: Vec<Lit> = lits.iter().map(|l| reader.lit(l, n_atoms)).collect::<Result<_, _>>()?;
                let origin = match origin {
                    Sexp::Sym(s, _) if s == "split" => Some(Origin::BnbLemma),
                    Sexp::Sym(s, _) if s == "none" => None,
                    Sexp::List(v, op) => match (v.first().and_then(|h| h.sym()), &v[1..]) {
                        (Some("group"), [g]) => {
                            let g = g.sym().and_then(|s| s.parse().ok()).ok_or(ProofFormatError::Bad { pos: *op, msg: "bad group".into() })?;
                            Some(Origin::Group(g))
                        }
                        (Some("lemma"), [cut, rest @ ..]) => {
                            let cut = reader.cut(cut)?;
                            let eq_cert = match rest {
                                [] => None,
                                [Sexp::List(c, cp)] if c.first().and_then(|h| h.sym()) == Some("eqcert") => {
                                    let mut coeffs = Vec::new();
                                    for (j, e) in c[1..].iter().enumerate() {
                                        let Sexp::List(pair, pp) = e else { return bad(e.pos(), "bad certificate entry") };
                                        let [k, a] = pair.as_slice() else { return bad(*pp, "bad certificate entry") };
                                        let k = reader.num(k)?;
                                        if !k.is_integer() {
                                            return bad(*pp, "certificate coefficients are integers");
                                        }
                                        coeffs.push((k.to_integer(), j, reader.atom(a)?));
                                    }
                                    match UnsatLinComb::from_coeffs(coeffs) {
                                        Some(c) => Some(c),
                                        None => return bad(*cp, "invalid equality certificate"),
                                    }
                                }
                                _ => return bad(*op, "bad lemma"),
                            };
                            Some(Origin::TLemma(Arc::new(LemmaProof { cut, eq_cert })))
                        }
                        _ => return bad(*op, "unknown origin"),
                    },
                    e => return bad(e.pos(), "unknown origin"),
                };
                ResNode::Leaf { clause: canonical_clause(&clause), origin }
            }
            (Some("res"), [pv, l, rr]) => {
                let pivot = indexed(pv, 'a')?;
                if pivot >= n_atoms {
                    return bad(pv.pos(), "unknown pivot");
                }
                let get = |e: &Sexp| -> Result<usize, ProofFormatError> {
                    let i = indexed(e, 'r')?;
                    ids.get(&i).copied().ok_or(ProofFormatError::Bad { pos: e.pos(), msg: format!("node r{i} not yet defined") })
                };
                let (l, rr) = (get(l)?, get(rr)?);
                let clause = resolvent(pivot as u32, proof.nodes[l].clause(), proof.nodes[rr].clause());
                ResNode::Res { pivot: pivot as u32, left: l, right: rr, clause }
            }
            _ => return bad(*rp, "unknown node kind"),
        };
        ids.insert(key, proof.nodes.len());
        proof.nodes.push(node);
    }
    let Some(root) = root else { return bad(*p, "proof has no root") };
    proof.root = root;
    Ok(proof)
}

/// Turns a model into an assignment line list for display.
pub fn show_model(m: &crate::arith::Model, bools: &crate::formula::BoolModel) -> String {
    let mut lines = Vec::new();
    for (v, x) in m {
        lines.push(format!("  (define-fun {v} () Int {})", num_sexp(x)));
    }
    for (b, x) in bools {
        lines.push(format!("  (define-fun {b} () Bool {x})"));
    }
    format!("(\n{}\n)", lines.join("\n"))
}

/// Integer literal helper used by generators.
pub fn lin_formula(terms: &[(i64, &str)], c: i64, rel: Rel) -> Formula {
    let t = LinTerm::from_ints(terms, c);
    Formula::atom(ExtAtom::new(ExtTerm::from_lin(&t), rel))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::int;
    use proptest::prelude::*;

    const INTRO: &str = "
        (set-logic QF_LIA)
        (declare-fun x () Int)
        (declare-fun y () Int)
        (declare-fun z () Int)
        (assert (! (= (+ (* 2 x) (- y) 1) 0) :itp-group gA))
        (assert (! (= (- y (* 2 z)) 0) :itp-group gB))
        (check-sat)
        (get-interpolant (gA))
    ";

    #[test]
    fn intro_problem() {
        let p = parse_problem(INTRO).unwrap();
        assert_eq!(p.groups.len(), 2);
        assert_eq!(p.query, Some(vec!["gA".to_string()]));
        let occ = crate::smt::occurrences(&p.groups);
        let x = VarId::new("x");
        let y = VarId::new("y");
        let z = VarId::new("z");
        assert_eq!(occ.var_groups[&x], [0].into());
        assert_eq!(occ.var_groups[&y], [0, 1].into());
        assert_eq!(occ.var_groups[&z], [1].into());
    }

    #[test]
    fn untagged_assert_joins_last_declared_group() {
        let p = parse_problem(
            "(declare-fun x () Int)
             (assert (! (<= x 0) :itp-group g1))
             (assert (>= x 1))",
        )
        .unwrap();
        assert_eq!(p.group_names, vec!["g1"]);
        assert!(matches!(p.groups[0], Formula::And(_)));
    }

    #[test]
    fn nonlinear_is_rejected() {
        let e = parse_problem("(declare-fun x () Int) (declare-fun y () Int) (assert (<= (* x y) 0))").unwrap_err();
        assert!(matches!(e, ParseError::Nonlinear { .. }));
    }

    #[test]
    fn undeclared_and_syntax_errors_have_positions() {
        let e = parse_problem("(assert (<= q 0))").unwrap_err();
        assert_eq!(e, ParseError::Undeclared { pos: Pos { line: 1, col: 13 }, name: "q".into() });
        let e = parse_problem("(declare-fun x () Int)\n(assert (<= x 0)").unwrap_err();
        assert!(matches!(e, ParseError::Syntax { pos: Pos { line: 2, col: 1 }, .. }), "{e}");
    }

    #[test]
    fn ite_lifts_over_atoms() {
        let decls = vec![("x".to_string(), Sort::Int), ("p".to_string(), Sort::Bool)];
        let f = parse_formula("(<= (ite p x (- x)) 3)", &decls).unwrap();
        let bm_t: crate::formula::BoolModel = [("p".to_string(), true)].into();
        let bm_f: crate::formula::BoolModel = [("p".to_string(), false)].into();
        let m: crate::arith::Model = [(VarId::new("x"), rat(5))].into();
        assert_eq!(f.eval(&m, &bm_t), Some(false));
        assert_eq!(f.eval(&m, &bm_f), Some(true));
    }

    #[test]
    fn printer_formats() {
        let y = ExtTerm::var(VarId::new("y"));
        let mut t = y.neg();
        t.add_constant(&rat(1));
        let f = Formula::atom(ExtAtom::new(t, Rel::Mod(int(2))));
        assert_eq!(print_formula(&f), "((_ divisible 2) (+ (* (- 1) y) 1))");
        assert_eq!(print_formula(&Formula::True), "true");
        let y1 = ExtTerm::var(VarId::new("y1"));
        let c = ExtTerm::ceil_div(&y1, &int(2)).scale(&rat(2)).minus(&y1);
        assert_eq!(print_formula(&Formula::atom(ExtAtom::le(c))), "(<= (+ (* (- 1) y1) (* 2 (cdiv y1 2))) 0)");
        assert_eq!(print_formula(&Formula::lin(&Atom::le(LinTerm::from_ints(&[(1, "y")], -3)))), "(<= (+ y (- 3)) 0)");
    }

    #[test]
    fn dag_size_counts_shared_subtrees_once() {
        let y = ExtTerm::var(VarId::new("y"));
        let a = Formula::atom(ExtAtom::le(y.clone()));
        assert_eq!(dag_size(&a), 4);
        let b = Formula::or(vec![a.clone(), Formula::atom(ExtAtom::new(y, Rel::Eq))]);
        // (or …), (<= y 0), (= y 0), y, 0, <=, =, or
        assert_eq!(dag_size(&b), 8);
    }

    fn decls() -> Vec<(String, Sort)> {
        vec![
            ("x".into(), Sort::Int),
            ("y".into(), Sort::Int),
            ("p".into(), Sort::Bool),
        ]
    }

    fn ext_term() -> impl Strategy<Value = ExtTerm> {
        let lin = (-4i64..=4, -4i64..=4, -6i64..=6).prop_map(|(a, b, c)| {
            ExtTerm::from_lin(&LinTerm::from_ints(&[(a, "x"), (b, "y")], c))
        });
        (lin.clone(), lin, -3i64..=3, 1i64..=5).prop_map(|(t, u, k, d)| {
            let mut r = t;
            r.add_scaled(&rat(k), &ExtTerm::ceil_div(&u, &int(d)));
            r
        })
    }

    fn formula() -> impl Strategy<Value = Formula> {
        let leaf = prop_oneof![
            (ext_term(), 0u8..3, 2i64..6).prop_map(|(t, k, g)| {
                let rel = match k {
                    0 => Rel::Le,
                    1 => Rel::Eq,
                    _ => Rel::Mod(int(g)),
                };
                Formula::atom(ExtAtom::new(t, rel))
            }),
            Just(Formula::Bool("p".into())),
        ];
        leaf.prop_recursive(3, 12, 3, |inner| {
            prop_oneof![
                inner.clone().prop_map(Formula::not),
                proptest::collection::vec(inner.clone(), 2..4).prop_map(Formula::and),
                proptest::collection::vec(inner, 2..4).prop_map(Formula::or),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_roundtrip(f in formula()) {
            let text = print_formula(&f);
            let g = parse_formula(&text, &decls()).unwrap();
            prop_assert_eq!(g, f);
        }
    }

    #[test]
    fn proof_roundtrip() {
        let p = parse_problem(INTRO).unwrap();
        let res = crate::smt::check_groups(&p.groups, None, &Default::default(), &mut Default::default()).unwrap();
        let crate::smt::SmtResult::Unsat(proof) = res else { panic!() };
        let text = write_proof(&proof);
        let back = read_proof(&text).unwrap();
        crate::proofs::check_refutation(&back).unwrap();
        assert_eq!(write_proof(&back), text);
    }

    #[test]
    fn tampered_proof_fails_check() {
        let p = parse_problem(INTRO).unwrap();
        let res = crate::smt::check_groups(&p.groups, None, &Default::default(), &mut Default::default()).unwrap();
        let crate::smt::SmtResult::Unsat(proof) = res else { panic!() };
        let text = write_proof(&proof).replacen("(strengthen", "(division", 1);
        let back = read_proof(&text).unwrap();
        assert!(crate::proofs::check_refutation(&back).is_err());
    }
}
