//! Independent checks of interpolants, a bounded brute-force oracle, and the
//! seeded problem generators used by the property suite and the bench.

use crate::arith::{rat, rat_of, Atom, FreshVars, Int, LinTerm, Model, Rel, VarId};
use num_integer::Integer;
use crate::formula::{BoolModel, ExtAtom, ExtTerm, Formula, Mono};
use crate::frontend::{dag_size, InterpolationProblem, Sort};
use crate::interp::{eliminate_ceilings, interpolate, Engine};
use crate::laz::Purity;
use crate::proofs::{check_refutation, ResProof};
use crate::smt::{check_groups, occurrences, SmtConfig, SmtError, SmtResult, SmtStats};
use num_traits::{Signed, ToPrimitive, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CexKind {
    /// A point of A outside I.
    ANotImpliesI,
    /// A point of I and B.
    IAndBSat,
    /// A ∧ B itself is satisfiable, so no interpolant exists.
    AAndBSat,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Counterexample {
    pub kind: CexKind,
    pub model: Model,
    pub bools: BoolModel,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct VerifyReport {
    pub a_implies: bool,
    pub b_inconsistent: bool,
    pub symbols_ok: bool,
    pub counterexample: Option<Counterexample>,
}

impl VerifyReport {
    pub fn pass(&self) -> bool {
        self.a_implies && self.b_inconsistent && self.symbols_ok
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VerifyError {
    #[error(transparent)]
    Smt(#[from] SmtError),
    #[error("solver gave up")]
    Unknown,
}

// ---------------------------------------------------------------------------
// Solver-based check

/// Rewrites formulas into plain linear arithmetic. Ceilings become fresh
/// integers with their defining bounds. Divisibility goes through one shared
/// quotient and remainder per linear part and modulus, `t = g·k + r` with
/// `0 ≤ r < g`, so `t + c =_g 0` reads `r = (−c mod g)`. Sharing keeps the
/// quotients of related atoms from spanning independent unbounded directions.
pub struct Encoder {
    fresh: FreshVars,
    residues: BTreeMap<(LinTerm, Int), VarId>,
}

impl Default for Encoder {
    fn default() -> Self {
        Encoder { fresh: FreshVars::new("vf"), residues: BTreeMap::new() }
    }
}

impl Encoder {
    /// Encodes `f`, or `¬f` with `negate`. Definitions introduced by this
    /// call are conjoined to the result; use one encoder per query.
    pub fn encode(&mut self, f: &Formula, negate: bool) -> Formula {
        let elim = eliminate_ceilings(f, &mut self.fresh);
        let body = if negate { Formula::not(elim.formula) } else { elim.formula };
        let mut parts: Vec<Formula> = elim.defs.iter().map(Formula::lin).collect();
        let mut defs = Vec::new();
        parts.push(self.encode_mod(&body.nnf(), &mut defs));
        parts.extend(defs);
        Formula::and(parts)
    }

    /// Remainder variable for `t mod g` and the residue `t + c` must hit.
    fn residue(&mut self, a: &ExtAtom, g: &Int, defs: &mut Vec<Formula>) -> (VarId, Int) {
        let t = a.term.to_lin().expect("ceilings were eliminated");
        let mut lp = t.without_constant();
        let mut c = t.constant().to_integer();
        if lp.leading().is_some_and(|(_, k)| k.is_negative()) {
            lp = lp.neg();
            c = -c;
        }
        let key = (lp.clone(), g.clone());
        let r = match self.residues.get(&key) {
            Some(r) => r.clone(),
            None => {
                let k = self.fresh.fresh();
                let r = self.fresh.fresh();
                let mut def = lp.clone();
                def.add_coeff(k, rat_of(&-g));
                def.add_coeff(r.clone(), rat(-1));
                defs.push(Formula::lin(&Atom::eq(def)));
                defs.push(Formula::lin(&Atom::le(LinTerm::var(r.clone()).neg())));
                let mut hi = LinTerm::var(r.clone());
                hi.add_constant(&(rat(1) - rat_of(g)));
                defs.push(Formula::lin(&Atom::le(hi)));
                self.residues.insert(key, r.clone());
                r
            }
        };
        (r, (-c).mod_floor(g))
    }

    fn encode_mod(&mut self, f: &Formula, defs: &mut Vec<Formula>) -> Formula {
        let is_value = |r: &VarId, v: &Int| {
            let mut t = LinTerm::var(r.clone());
            t.add_constant(&rat_of(&-v));
            Formula::lin(&Atom::eq(t))
        };
        match f {
            Formula::Atom(a) => match &a.rel {
                Rel::Mod(g) => {
                    let (r, v) = self.residue(a, g, defs);
                    is_value(&r, &v)
                }
                _ => f.clone(),
            },
            Formula::Not(inner) => match inner.as_ref() {
                Formula::Atom(a) if matches!(a.rel, Rel::Mod(_)) => {
                    let Rel::Mod(g) = &a.rel else { unreachable!() };
                    let (r, v) = self.residue(a, g, defs);
                    Formula::not(is_value(&r, &v)).nnf()
                }
                _ => f.clone(),
            },
            Formula::And(gs) => Formula::and(gs.iter().map(|g| self.encode_mod(g, defs)).collect()),
            Formula::Or(gs) => Formula::or(gs.iter().map(|g| self.encode_mod(g, defs)).collect()),
            _ => f.clone(),
        }
    }
}

fn restrict(m: &Model, vars: &BTreeSet<VarId>) -> Model {
    vars.iter().map(|v| (v.clone(), m.get(v).cloned().unwrap_or_else(Zero::zero))).collect()
}

/// Checks the interpolant conditions with the solver in plain (non-interpolating) mode.
pub fn verify_interpolant(a: &[Formula], b: &[Formula], itp: &Formula) -> Result<VerifyReport, VerifyError> {
    verify_interpolant_with(a, b, itp, &SmtConfig::default())
}

pub fn verify_interpolant_with(
    a: &[Formula],
    b: &[Formula],
    itp: &Formula,
    cfg: &SmtConfig,
) -> Result<VerifyReport, VerifyError> {
    let mut enc = Encoder::default();
    let all: Vec<Formula> = a.iter().chain(b).chain([itp]).cloned().collect();
    let vars: BTreeSet<VarId> = all.iter().flat_map(|f| f.vars()).collect();
    let bools: BTreeSet<String> = all.iter().flat_map(|f| f.bools()).collect();
    let keep = |m: &Model, bm: &BoolModel| {
        (restrict(m, &vars), bools.iter().map(|n| (n.clone(), bm.get(n).copied().unwrap_or(false))).collect())
    };
    let mut report = VerifyReport::default();

    let mut groups: Vec<Formula> = a.iter().map(|f| enc.encode(f, false)).collect();
    groups.push(enc.encode(itp, true));
    match check_groups(&groups, None, cfg, &mut SmtStats::default())? {
        SmtResult::Unsat(_) => report.a_implies = true,
        SmtResult::Sat { model, bools: bm } => {
            let (model, bools) = keep(&model, &bm);
            let holds = |m: &Model| {
                a.iter().all(|f| f.eval(m, &bools) == Some(true)) && itp.eval(m, &bools) == Some(false)
            };
            let model = minimize(model, holds);
            report.counterexample = Some(Counterexample { kind: CexKind::ANotImpliesI, model, bools });
        }
        SmtResult::Unknown => return Err(VerifyError::Unknown),
    }

    // Definitions are emitted once per encoder, so each query gets its own.
    let mut enc = Encoder::default();
    let mut groups = vec![enc.encode(itp, false)];
    groups.extend(b.iter().map(|f| enc.encode(f, false)));
    match check_groups(&groups, None, cfg, &mut SmtStats::default())? {
        SmtResult::Unsat(_) => report.b_inconsistent = true,
        SmtResult::Sat { model, bools: bm } => {
            let (model, bools) = keep(&model, &bm);
            if report.counterexample.is_none() {
                let holds = |m: &Model| {
                    b.iter().all(|f| f.eval(m, &bools) == Some(true)) && itp.eval(m, &bools) == Some(true)
                };
                let model = minimize(model, holds);
                report.counterexample = Some(Counterexample { kind: CexKind::IAndBSat, model, bools });
            }
        }
        SmtResult::Unknown => return Err(VerifyError::Unknown),
    }

    let ab: Vec<Formula> = a.iter().chain(b).cloned().collect();
    let part = occurrences(&ab).with_cut(a.len());
    report.symbols_ok = part.symbols_common(itp);
    Ok(report)
}

/// Greedy coordinate descent toward zero, keeping `holds` true.
pub fn minimize(mut m: Model, holds: impl Fn(&Model) -> bool) -> Model {
    if !holds(&m) {
        return m;
    }
    let vars: Vec<VarId> = m.keys().cloned().collect();
    loop {
        let mut moved = false;
        for v in &vars {
            let x = m[v].clone();
            if x.is_zero() {
                continue;
            }
            for cand in [rat(0), x.clone() - x.signum()] {
                m.insert(v.clone(), cand);
                if holds(&m) {
                    moved = true;
                    break;
                }
                m.insert(v.clone(), x.clone());
            }
        }
        if !moved {
            return m;
        }
    }
}

/// Checks `I_i ∧ φ_{i+1} ⊨ I_{i+1}` along a chain, with `I_0 = ⊤` and
/// `I_n = ⊥`. Returns the first failing index.
pub fn verify_sequence(groups: &[Formula], itps: &[Formula]) -> Result<Option<usize>, VerifyError> {
    assert_eq!(itps.len() + 1, groups.len());
    let mut chain = vec![Formula::True];
    chain.extend(itps.iter().cloned());
    chain.push(Formula::False);
    for i in 0..groups.len() {
        let mut enc = Encoder::default();
        let q = vec![enc.encode(&chain[i], false), enc.encode(&groups[i], false), enc.encode(&chain[i + 1], true)];
        match check_groups(&q, None, &SmtConfig::default(), &mut SmtStats::default())? {
            SmtResult::Unsat(_) => {}
            SmtResult::Sat { .. } => return Ok(Some(i)),
            SmtResult::Unknown => return Err(VerifyError::Unknown),
        }
    }
    Ok(None)
}

// ---------------------------------------------------------------------------
// Brute force

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BruteError {
    #[error("box has {0} points, above the limit")]
    TooLarge(u128),
    #[error("coefficient does not fit in a machine integer")]
    Overflow,
}

pub const MAX_POINTS: u128 = 10_000_000;

#[derive(Clone, Debug)]
struct CTerm {
    lin: Vec<(usize, i128)>,
    ceils: Vec<(i128, CTerm, i128)>,
    c: i128,
}

#[derive(Clone, Debug)]
enum CForm {
    Const(bool),
    Bool(usize),
    Not(Box<CForm>),
    And(Vec<CForm>),
    Or(Vec<CForm>),
    Le(CTerm),
    Eq(CTerm),
    Mod(CTerm, i128),
}

struct Compiler<'a> {
    vars: &'a BTreeMap<VarId, usize>,
    bools: &'a BTreeMap<String, usize>,
}

fn small(r: &crate::arith::Rat) -> Result<i128, BruteError> {
    if !r.is_integer() {
        return Err(BruteError::Overflow);
    }
    r.to_integer().to_i128().ok_or(BruteError::Overflow)
}

impl Compiler<'_> {
    /// Integral terms only; callers scale by the denominator lcm first.
    fn term(&self, t: &ExtTerm) -> Result<CTerm, BruteError> {
        let mut out = CTerm { lin: Vec::new(), ceils: Vec::new(), c: small(t.constant())? };
        for (m, k) in t.coeffs() {
            let k = small(k)?;
            match m {
                Mono::Var(v) => out.lin.push((self.vars[v], k)),
                Mono::Ceil(content, d) => {
                    let l = content.denom_lcm();
                    let inner = self.term(&content.scale(&crate::arith::rat_of(&l)))?;
                    let d = (d * l).to_i128().ok_or(BruteError::Overflow)?;
                    out.ceils.push((k, inner, d));
                }
            }
        }
        Ok(out)
    }

    fn formula(&self, f: &Formula) -> Result<CForm, BruteError> {
        Ok(match f {
            Formula::True => CForm::Const(true),
            Formula::False => CForm::Const(false),
            Formula::Bool(n) => CForm::Bool(self.bools[n]),
            Formula::Not(g) => CForm::Not(Box::new(self.formula(g)?)),
            Formula::And(gs) => CForm::And(gs.iter().map(|g| self.formula(g)).collect::<Result<_, _>>()?),
            Formula::Or(gs) => CForm::Or(gs.iter().map(|g| self.formula(g)).collect::<Result<_, _>>()?),
            Formula::Atom(a) => {
                let l = a.term.denom_lcm();
                let t = self.term(&a.term.scale(&crate::arith::rat_of(&l)))?;
                match &a.rel {
                    Rel::Le => CForm::Le(t),
                    Rel::Eq => CForm::Eq(t),
                    Rel::Mod(g) => CForm::Mod(t, (g * l).to_i128().ok_or(BruteError::Overflow)?),
                }
            }
        })
    }
}

impl CTerm {
    fn eval(&self, x: &[i64]) -> i128 {
        let mut s = self.c;
        for &(i, k) in &self.lin {
            s += k * x[i] as i128;
        }
        for (k, inner, d) in &self.ceils {
            let v = inner.eval(x);
            s += k * -((-v).div_euclid(*d));
        }
        s
    }
}

impl CForm {
    fn eval(&self, x: &[i64], b: &[bool]) -> bool {
        match self {
            CForm::Const(v) => *v,
            CForm::Bool(i) => b[*i],
            CForm::Not(g) => !g.eval(x, b),
            CForm::And(gs) => gs.iter().all(|g| g.eval(x, b)),
            CForm::Or(gs) => gs.iter().any(|g| g.eval(x, b)),
            CForm::Le(t) => t.eval(x) <= 0,
            CForm::Eq(t) => t.eval(x) == 0,
            CForm::Mod(t, g) => t.eval(x).rem_euclid(*g) == 0,
        }
    }
}

/// Formulas compiled over a fixed symbol order for fast enumeration.
struct Compiled {
    vars: Vec<VarId>,
    bools: Vec<String>,
    forms: Vec<CForm>,
}

fn compile(fs: &[&Formula]) -> Result<Compiled, BruteError> {
    let vars: BTreeSet<VarId> = fs.iter().flat_map(|f| f.vars()).collect();
    let bools: BTreeSet<String> = fs.iter().flat_map(|f| f.bools()).collect();
    let vmap: BTreeMap<VarId, usize> = vars.iter().cloned().enumerate().map(|(i, v)| (v, i)).collect();
    let bmap: BTreeMap<String, usize> = bools.iter().cloned().enumerate().map(|(i, v)| (v, i)).collect();
    let c = Compiler { vars: &vmap, bools: &bmap };
    let forms = fs.iter().map(|f| c.formula(f)).collect::<Result<_, _>>()?;
    Ok(Compiled { vars: vars.into_iter().collect(), bools: bools.into_iter().collect(), forms })
}

impl Compiled {
    fn points(&self, bound: i64) -> u128 {
        let side = (2 * bound as u128) + 1;
        side.saturating_pow(self.vars.len() as u32).saturating_mul(1u128 << self.bools.len().min(100))
    }

    /// Visits every point of the box until `f` returns true.
    fn search(&self, bound: i64, mut f: impl FnMut(&[i64], &[bool]) -> bool) -> Option<(Vec<i64>, Vec<bool>)> {
        let mut x = vec![-bound; self.vars.len()];
        let nb = self.bools.len();
        loop {
            for mask in 0u64..(1u64 << nb) {
                let b: Vec<bool> = (0..nb).map(|i| mask >> i & 1 == 1).collect();
                if f(&x, &b) {
                    return Some((x, b));
                }
            }
            let mut i = 0;
            loop {
                if i == x.len() {
                    return None;
                }
                if x[i] < bound {
                    x[i] += 1;
                    break;
                }
                x[i] = -bound;
                i += 1;
            }
        }
    }

    fn model(&self, x: &[i64], b: &[bool]) -> (Model, BoolModel) {
        (
            self.vars.iter().cloned().zip(x.iter().map(|&v| rat(v))).collect(),
            self.bools.iter().cloned().zip(b.iter().copied()).collect(),
        )
    }
}

/// Enumerates `[−bound, bound]^n` (and all Boolean assignments) looking for
/// a point of `A ∧ B`, `A ∧ ¬I` or `I ∧ B`. Ceilings and divisibility are
/// evaluated by definition.
pub fn brute_force_check(
    a: &[Formula],
    b: &[Formula],
    itp: &Formula,
    bound: i64,
) -> Result<Option<Counterexample>, BruteError> {
    let fa = Formula::and(a.to_vec());
    let fb = Formula::and(b.to_vec());
    let c = compile(&[&fa, &fb, itp])?;
    let n = c.points(bound);
    if n > MAX_POINTS {
        return Err(BruteError::TooLarge(n));
    }
    let mut kind = CexKind::AAndBSat;
    let hit = c.search(bound, |x, bv| {
        let ina = c.forms[0].eval(x, bv);
        let inb = c.forms[1].eval(x, bv);
        if !ina && !inb {
            return false;
        }
        let ini = c.forms[2].eval(x, bv);
        kind = match (ina, inb, ini) {
            (true, true, _) => CexKind::AAndBSat,
            (true, false, false) => CexKind::ANotImpliesI,
            (false, true, true) => CexKind::IAndBSat,
            _ => return false,
        };
        true
    });
    Ok(hit.map(|(x, bv)| {
        let (model, bools) = c.model(&x, &bv);
        Counterexample { kind, model, bools }
    }))
}

/// A satisfying point of all `fs` inside the box, if any.
pub fn brute_force_sat(fs: &[Formula], bound: i64) -> Result<Option<(Model, BoolModel)>, BruteError> {
    let f = Formula::and(fs.to_vec());
    let c = compile(&[&f])?;
    let n = c.points(bound);
    if n > MAX_POINTS {
        return Err(BruteError::TooLarge(n));
    }
    Ok(c.search(bound, |x, bv| c.forms[0].eval(x, bv)).map(|(x, bv)| c.model(&x, &bv)))
}

// ---------------------------------------------------------------------------
// Random problems

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RandomParams {
    pub nvars: usize,
    /// Constraints besides the box bounds.
    pub ncons: usize,
    pub coeff_bound: i64,
    pub box_bound: i64,
}

impl RandomParams {
    /// Property-suite shape for a seed: 2 to 5 variables, 3 to 8 constraints,
    /// coefficients up to 10, box 8.
    pub fn for_seed(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        RandomParams { nvars: rng.gen_range(2..=5), ncons: rng.gen_range(3..=8), coeff_bound: 10, box_bound: 8 }
    }
}

fn random_atom(rng: &mut ChaCha8Rng, vars: &[usize], p: &RandomParams) -> Formula {
    let k = rng.gen_range(1..=vars.len().min(3));
    let chosen: Vec<usize> = vars.choose_multiple(rng, k).copied().collect();
    let mut t = LinTerm::zero();
    for v in chosen {
        let mut c = 0;
        while c == 0 {
            c = rng.gen_range(-p.coeff_bound..=p.coeff_bound);
        }
        t.add_coeff(VarId::new(&format!("v{v}")), rat(c));
    }
    t.add_constant(&rat(rng.gen_range(-p.coeff_bound..=p.coeff_bound)));
    if rng.gen_bool(0.25) {
        Formula::lin(&Atom::eq(t))
    } else {
        Formula::lin(&Atom::le(t))
    }
}

fn box_bounds(v: &VarId, bound: i64) -> Formula {
    let x = LinTerm::var(v.clone());
    let mut lo = x.neg();
    lo.add_constant(&rat(-bound));
    let mut hi = x;
    hi.add_constant(&rat(-bound));
    Formula::and(vec![Formula::lin(&Atom::le(lo)), Formula::lin(&Atom::le(hi))])
}

/// Distributes constraints over `n_groups` groups; every variable gets its
/// box in each group where it occurs.
fn assemble(
    p: &RandomParams,
    cons: Vec<(usize, Formula)>,
    n_groups: usize,
    names: Vec<String>,
) -> InterpolationProblem {
    let mut groups: Vec<Vec<Formula>> = vec![Vec::new(); n_groups];
    for (g, f) in cons {
        groups[g].push(f);
    }
    for i in 0..p.nvars {
        let v = VarId::new(&format!("v{i}"));
        let homes: Vec<usize> = (0..n_groups).filter(|&g| groups[g].iter().any(|f| f.vars().contains(&v))).collect();
        for &g in if homes.is_empty() { &[0][..] } else { &homes[..] } {
            groups[g].push(box_bounds(&v, p.box_bound));
        }
    }
    InterpolationProblem {
        decls: (0..p.nvars).map(|i| (format!("v{i}"), Sort::Int)).collect(),
        group_names: names,
        groups: groups.into_iter().map(Formula::and).collect(),
        query: None,
    }
}

/// Two-group problem: about 40% of the constraints go to A, and `v0` only
/// occurs in A so A always has a local symbol.
pub fn gen_random_problem(seed: u64, p: &RandomParams) -> InterpolationProblem {
    assert!(p.nvars > 0 && p.ncons > 0 && p.coeff_bound > 0 && p.box_bound > 0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all: Vec<usize> = (0..p.nvars).collect();
    let no_v0: Vec<usize> = if p.nvars > 1 { (1..p.nvars).collect() } else { all.clone() };
    let mut cons = Vec::new();
    for i in 0..p.ncons {
        let in_a = i == 0 || rng.gen_bool(0.4);
        let f = if i == 0 {
            loop {
                let f = random_atom(&mut rng, &all, p);
                if f.vars().contains(&VarId::new("v0")) {
                    break f;
                }
            }
        } else if in_a {
            random_atom(&mut rng, &all, p)
        } else {
            random_atom(&mut rng, &no_v0, p)
        };
        cons.push((if in_a { 0 } else { 1 }, f));
    }
    if p.ncons > 1 && cons.iter().all(|(g, _)| *g == 0) {
        let last = cons.len() - 1;
        let f = random_atom(&mut rng, &no_v0, p);
        cons[last] = (1, f);
    }
    let mut prob = assemble(p, cons, 2, vec!["A".into(), "B".into()]);
    prob.query = Some(vec!["A".into()]);
    prob
}

/// Chain of `n_groups` groups where consecutive groups share variables.
pub fn gen_random_chain(seed: u64, p: &RandomParams, n_groups: usize) -> InterpolationProblem {
    assert!(n_groups >= 2 && p.nvars >= 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cons = Vec::new();
    for i in 0..p.ncons.max(n_groups) {
        let g = if i < n_groups { i } else { rng.gen_range(0..n_groups) };
        // Group g sees a sliding window of the variables.
        let lo = g * (p.nvars - 1) / n_groups;
        let hi = ((g + 1) * (p.nvars - 1)).div_ceil(n_groups);
        let window: Vec<usize> = (lo..=hi.min(p.nvars - 1)).collect();
        cons.push((g, random_atom(&mut rng, &window, p)));
    }
    let names = (0..n_groups).map(|g| format!("g{g}")).collect();
    let mut prob = assemble(p, cons, n_groups, names);
    prob.query = Some(vec!["g0".into()]);
    prob
}

// ---------------------------------------------------------------------------
// Bench

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub seed: u64,
    pub verdict: String,
    pub itp_size: Option<usize>,
    pub solve_ms: f64,
    pub verify: String,
}

/// Solves one random instance in interpolating mode and verifies the result.
pub fn bench_one(seed: u64, engine: Engine, timeout: Duration) -> BenchRow {
    let p = RandomParams::for_seed(seed);
    let prob = gen_random_problem(seed, &p);
    let start = Instant::now();
    let mut cfg = SmtConfig::default();
    cfg.sat.deadline = Some(start + timeout);
    let occ = occurrences(&prob.groups);
    let purity = Purity::new(occ.var_groups.clone(), vec![1]);
    let mut stats = SmtStats::default();
    let row = |verdict: &str, size, verify: &str, ms| BenchRow {
        seed,
        verdict: verdict.into(),
        itp_size: size,
        solve_ms: ms,
        verify: verify.into(),
    };
    let res = match check_groups(&prob.groups, Some(purity), &cfg, &mut stats) {
        Ok(r) => r,
        Err(e) => return row("error", None, &e.to_string(), 0.0),
    };
    match res {
        SmtResult::Unknown => row("timeout", None, "skipped", start.elapsed().as_secs_f64() * 1e3),
        SmtResult::Sat { .. } => row("sat", None, "n/a", start.elapsed().as_secs_f64() * 1e3),
        SmtResult::Unsat(proof) => {
            let itp = interpolate(&proof, &occ.with_cut(1), engine, &mut stats.itp);
            let ms = start.elapsed().as_secs_f64() * 1e3;
            match itp {
                Err(e) => row("unsat", None, &format!("itp-error: {e}"), ms),
                Ok(itp) => {
                    let verify = verify_unsat(&prob.groups, &proof, &itp);
                    row("unsat", Some(dag_size(&itp)), &verify, ms)
                }
            }
        }
    }
}

fn verify_unsat(groups: &[Formula], proof: &ResProof, itp: &Formula) -> String {
    if let Err(e) = check_refutation(proof) {
        return format!("proof-error: {e}");
    }
    match verify_interpolant(&groups[..1], &groups[1..], itp) {
        Ok(r) if r.pass() => "ok".into(),
        Ok(r) => format!("fail: {r:?}"),
        Err(e) => format!("error: {e}"),
    }
}

/// Runs `bench_one` over `seeds` on a pool of `workers` threads.
pub fn bench(seeds: std::ops::Range<u64>, engine: Engine, workers: usize, timeout: Duration) -> Vec<BenchRow> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build().expect("thread pool");
    pool.install(|| seeds.into_par_iter().map(|s| bench_one(s, engine, timeout)).collect())
}

pub const BENCH_HEADER: [&str; 5] = ["seed", "verdict", "itp_size", "solve_ms", "verify"];

pub fn write_bench_csv<W: std::io::Write>(rows: &[BenchRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BENCH_HEADER)?;
    for r in rows {
        w.write_record([
            r.seed.to_string(),
            r.verdict.clone(),
            r.itp_size.map(|s| s.to_string()).unwrap_or_default(),
            format!("{:.3}", r.solve_ms),
            r.verify.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_formula;

    fn decls() -> Vec<(String, Sort)> {
        ["x", "y", "z"].iter().map(|v| (v.to_string(), Sort::Int)).collect()
    }

    fn f(s: &str) -> Formula {
        parse_formula(s, &decls()).unwrap()
    }

    fn intro() -> (Formula, Formula) {
        (f("(= (+ (* 2 x) (- y) 1) 0)"), f("(= (- y (* 2 z)) 0)"))
    }

    fn bounded(g: &Formula) -> Formula {
        let mut parts = vec![g.clone()];
        for v in g.vars() {
            parts.push(box_bounds(&v, 8));
        }
        Formula::and(parts)
    }

    #[test]
    fn parity_interpolant_passes() {
        let (a, b) = intro();
        let i = f("((_ divisible 2) (+ (- y) 1))");
        let r = verify_interpolant(std::slice::from_ref(&a), std::slice::from_ref(&b), &i).unwrap();
        assert!(r.pass(), "{r:?}");
        assert_eq!(brute_force_check(&[bounded(&a)], &[bounded(&b)], &i, 8).unwrap(), None);
    }

    #[test]
    fn trivial_interpolant_when_b_is_unsat() {
        let b = f("(and (<= x 0) (>= x 1))");
        let r = verify_interpolant(&[f("(<= y 3)")], &[b], &Formula::True).unwrap();
        assert!(r.pass());
    }

    #[test]
    fn b_local_symbol_fails_symbol_condition() {
        let (a, b) = intro();
        let i = f("(or ((_ divisible 2) (+ (- y) 1)) (= z 100000))");
        let r = verify_interpolant(&[a], &[b], &i).unwrap();
        assert!(!r.symbols_ok);
        assert!(!r.pass());
    }

    #[test]
    fn wrong_interpolant_gets_counterexample() {
        let (a, b) = intro();
        let r = verify_interpolant(std::slice::from_ref(&a), &[b], &f("(<= y 0)")).unwrap();
        assert!(!r.a_implies);
        let cex = r.counterexample.unwrap();
        assert_eq!(cex.kind, CexKind::ANotImpliesI);
        assert_eq!(a.eval(&cex.model, &cex.bools), Some(true));
        // minimized toward zero: y = 1, x = 0
        assert_eq!(cex.model[&VarId::new("y")], rat(1));
    }

    #[test]
    fn bottom_interpolant_fails_brute_force() {
        let a = bounded(&f("(<= x 3)"));
        let b = bounded(&f("(>= x 4)"));
        let cex = brute_force_check(&[a], &[b], &Formula::False, 8).unwrap().unwrap();
        assert_eq!(cex.kind, CexKind::ANotImpliesI);
    }

    #[test]
    fn satisfiable_pair_is_reported() {
        let cex = brute_force_check(&[f("(<= x 3)")], &[f("(>= x 2)")], &Formula::True, 4).unwrap().unwrap();
        assert_eq!(cex.kind, CexKind::AAndBSat);
    }

    #[test]
    fn box_limit() {
        let g: Vec<Formula> = (0..6).map(|i| Formula::lin(&Atom::le(LinTerm::from_ints(&[(1, &format!("w{i}"))], 0)))).collect();
        assert!(matches!(brute_force_check(&g, &[], &Formula::True, 8), Err(BruteError::TooLarge(_))));
    }

    #[test]
    fn ceilings_evaluate_by_definition() {
        // 2⌈y/2⌉ − y ≤ 0 holds exactly on even y.
        let i = f("(<= (- (* 2 (cdiv y 2)) y) 0)");
        let c = compile(&[&i]).unwrap();
        for y in -5i64..=5 {
            assert_eq!(c.forms[0].eval(&[y], &[]), y % 2 == 0, "y = {y}");
        }
        let m = f("((_ divisible 3) (+ y 1))");
        let c = compile(&[&m]).unwrap();
        for y in -5i64..=5 {
            assert_eq!(c.forms[0].eval(&[y], &[]), (y + 1) % 3 == 0);
        }
    }

    #[test]
    fn negated_divisibility_encoding() {
        let (a, b) = intro();
        // ¬(y odd) is wrong on A, so A ∧ ¬I must be sat for I = even.
        let r = verify_interpolant(&[a], &[b], &f("((_ divisible 2) y)")).unwrap();
        assert!(!r.a_implies);
    }

    #[test]
    fn generator_is_deterministic() {
        let p = RandomParams { nvars: 3, ncons: 6, coeff_bound: 10, box_bound: 8 };
        let a = gen_random_problem(7, &p);
        assert_eq!(a, gen_random_problem(7, &p));
        assert_eq!(a.decls.len(), 3);
        assert_eq!(a.groups.len(), 2);
        let occ = occurrences(&a.groups);
        assert_eq!(occ.var_groups[&VarId::new("v0")], [0].into());
    }

    #[test]
    fn chain_generator_shapes() {
        let p = RandomParams { nvars: 5, ncons: 8, coeff_bound: 10, box_bound: 8 };
        let c = gen_random_chain(3, &p, 4);
        assert_eq!(c.groups.len(), 4);
    }

    #[test]
    fn random_verdicts_agree_with_brute_force() {
        for seed in 0..40 {
            let p = RandomParams::for_seed(seed);
            let prob = gen_random_problem(seed, &p);
            let res = check_groups(&prob.groups, None, &SmtConfig::default(), &mut SmtStats::default()).unwrap();
            let brute = brute_force_sat(&prob.groups, p.box_bound).unwrap();
            match res {
                SmtResult::Sat { model, bools } => {
                    assert!(brute.is_some(), "seed {seed}");
                    assert!(prob.groups.iter().all(|g| g.eval(&model, &bools) == Some(true)));
                }
                SmtResult::Unsat(_) => assert!(brute.is_none(), "seed {seed}"),
                SmtResult::Unknown => panic!("seed {seed}: unknown"),
            }
        }
    }
}
