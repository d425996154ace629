//! Exact arithmetic, sparse linear terms and constraint normalization.
//!
//! Every coefficient in the solver is an arbitrary-precision rational. Atoms
//! are kept in a canonical integer form so that structurally equal constraints
//! compare equal everywhere else in the crate.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

pub type Int = BigInt;
pub type Rat = BigRational;

/// Assignment of values to variables.
pub type Model = BTreeMap<VarId, Rat>;

pub fn int(v: i64) -> Int {
    Int::from(v)
}

pub fn rat(v: i64) -> Rat {
    Rat::from_integer(Int::from(v))
}

pub fn ratio(n: i64, d: i64) -> Rat {
    Rat::new(Int::from(n), Int::from(d))
}

pub fn rat_of(i: &Int) -> Rat {
    Rat::from_integer(i.clone())
}

/// Least integer not below `r`.
pub fn ceil(r: &Rat) -> Int {
    r.ceil().to_integer()
}

/// Greatest integer not above `r`.
pub fn floor(r: &Rat) -> Int {
    r.floor().to_integer()
}

/// `⌈a / b⌉` for integers with `b > 0`.
pub fn ceil_div(a: &Int, b: &Int) -> Int {
    assert!(b.is_positive(), "ceil_div needs a positive divisor");
    let (q, r) = a.div_mod_floor(b);
    if r.is_zero() {
        q
    } else {
        q + 1
    }
}

/// Non-negative gcd of a collection; zero for the empty collection.
pub fn gcd_all<'a, I: IntoIterator<Item = &'a Int>>(it: I) -> Int {
    it.into_iter().fold(Int::zero(), |g, x| g.gcd(x))
}

pub fn lcm(a: &Int, b: &Int) -> Int {
    a.lcm(b)
}

/// Integer-valued variable with a display name.
///
/// Ordering is "natural": digit runs compare numerically, so `y2 < y10`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct VarId(Arc<str>);

impl VarId {
    pub fn new(name: &str) -> Self {
        VarId(Arc::from(name))
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

fn natural_cmp(a: &str, b: &str) -> Ordering {
    let (ab, bb) = (a.as_bytes(), b.as_bytes());
    let (mut i, mut j) = (0, 0);
    while i < ab.len() && j < bb.len() {
        if ab[i].is_ascii_digit() && bb[j].is_ascii_digit() {
            let si = i;
            while i < ab.len() && ab[i].is_ascii_digit() {
                i += 1;
            }
            let sj = j;
            while j < bb.len() && bb[j].is_ascii_digit() {
                j += 1;
            }
            let da = a[si..i].trim_start_matches('0');
            let db = b[sj..j].trim_start_matches('0');
            let ord = da.len().cmp(&db.len()).then_with(|| da.cmp(db));
            if ord != Ordering::Equal {
                return ord;
            }
        } else {
            let ord = ab[i].cmp(&bb[j]);
            if ord != Ordering::Equal {
                return ord;
            }
            i += 1;
            j += 1;
        }
    }
    (ab.len() - i).cmp(&(bb.len() - j)).then_with(|| a.cmp(b))
}

impl Ord for VarId {
    fn cmp(&self, other: &Self) -> Ordering {
        if Arc::ptr_eq(&self.0, &other.0) {
            return Ordering::Equal;
        }
        natural_cmp(&self.0, &other.0)
    }
}

impl PartialOrd for VarId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Generator of variable names that cannot clash with parsed symbols.
#[derive(Debug, Clone)]
pub struct FreshVars {
    prefix: String,
    next: usize,
}

impl FreshVars {
    pub fn new(prefix: &str) -> Self {
        FreshVars { prefix: prefix.to_string(), next: 0 }
    }

    pub fn fresh(&mut self) -> VarId {
        let v = VarId::new(&format!("{}!{}", self.prefix, self.next));
        self.next += 1;
        v
    }
}

/// `Σ a_v·v + c` with no zero coefficients stored.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct LinTerm {
    coeffs: BTreeMap<VarId, Rat>,
    constant: Rat,
}

impl LinTerm {
    pub fn zero() -> Self {
        LinTerm::default()
    }

    pub fn constant_term(c: Rat) -> Self {
        LinTerm { coeffs: BTreeMap::new(), constant: c }
    }

    pub fn var(v: VarId) -> Self {
        let mut t = LinTerm::zero();
        t.add_coeff(v, rat(1));
        t
    }

    /// Convenience constructor from `(coefficient, name)` pairs.
    pub fn from_ints(terms: &[(i64, &str)], c: i64) -> Self {
        let mut t = LinTerm::constant_term(rat(c));
        for (a, v) in terms {
            t.add_coeff(VarId::new(v), rat(*a));
        }
        t
    }

    pub fn coeffs(&self) -> impl Iterator<Item = (&VarId, &Rat)> {
        self.coeffs.iter()
    }

    pub fn coeff(&self, v: &VarId) -> Rat {
        self.coeffs.get(v).cloned().unwrap_or_else(Rat::zero)
    }

    pub fn constant(&self) -> &Rat {
        &self.constant
    }

    pub fn set_constant(&mut self, c: Rat) {
        self.constant = c;
    }

    pub fn vars(&self) -> impl Iterator<Item = &VarId> {
        self.coeffs.keys()
    }

    pub fn var_set(&self) -> BTreeSet<VarId> {
        self.coeffs.keys().cloned().collect()
    }

    pub fn num_vars(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn add_coeff(&mut self, v: VarId, a: Rat) {
        if a.is_zero() {
            return;
        }
        let entry = self.coeffs.entry(v).or_insert_with(Rat::zero);
        *entry += a;
        if entry.is_zero() {
            self.coeffs.retain(|_, c| !c.is_zero());
        }
    }

    pub fn add_constant(&mut self, c: &Rat) {
        self.constant += c;
    }

    pub fn without_constant(&self) -> LinTerm {
        LinTerm { coeffs: self.coeffs.clone(), constant: Rat::zero() }
    }

    /// `self + k·other`.
    pub fn add_scaled(&mut self, k: &Rat, other: &LinTerm) {
        if k.is_zero() {
            return;
        }
        for (v, a) in &other.coeffs {
            let entry = self.coeffs.entry(v.clone()).or_insert_with(Rat::zero);
            *entry += k * a;
        }
        self.coeffs.retain(|_, c| !c.is_zero());
        self.constant += k * &other.constant;
    }

    pub fn plus(&self, other: &LinTerm) -> LinTerm {
        let mut t = self.clone();
        t.add_scaled(&rat(1), other);
        t
    }

    pub fn minus(&self, other: &LinTerm) -> LinTerm {
        let mut t = self.clone();
        t.add_scaled(&rat(-1), other);
        t
    }

    pub fn scale(&self, k: &Rat) -> LinTerm {
        if k.is_zero() {
            return LinTerm::zero();
        }
        LinTerm {
            coeffs: self.coeffs.iter().map(|(v, a)| (v.clone(), a * k)).collect(),
            constant: &self.constant * k,
        }
    }

    pub fn neg(&self) -> LinTerm {
        self.scale(&rat(-1))
    }

    /// Replaces `v` by `by` everywhere.
    pub fn substitute(&self, v: &VarId, by: &LinTerm) -> LinTerm {
        match self.coeffs.get(v) {
            None => self.clone(),
            Some(a) => {
                let a = a.clone();
                let mut t = self.clone();
                t.coeffs.remove(v);
                t.add_scaled(&a, by);
                t
            }
        }
    }

    /// True when every coefficient and the constant are integers.
    pub fn is_integral(&self) -> bool {
        self.constant.is_integer() && self.coeffs.values().all(|a| a.is_integer())
    }

    /// Least common multiple of all denominators (including the constant).
    pub fn denom_lcm(&self) -> Int {
        self.coeffs
            .values()
            .chain(std::iter::once(&self.constant))
            .fold(Int::one(), |l, a| l.lcm(a.denom()))
    }

    /// Gcd of the variable coefficients; requires integer coefficients.
    pub fn var_gcd(&self) -> Int {
        self.coeffs.values().fold(Int::zero(), |g, a| {
            assert!(a.is_integer(), "var_gcd on a non-integer coefficient");
            g.gcd(a.numer())
        })
    }

    /// Leading (smallest) variable and its coefficient.
    pub fn leading(&self) -> Option<(&VarId, &Rat)> {
        self.coeffs.iter().next()
    }

    pub fn eval(&self, m: &Model) -> Rat {
        eval_term(self, m)
    }
}

/// Value of `t` under `m`; every variable of `t` must be assigned.
pub fn eval_term(t: &LinTerm, m: &Model) -> Rat {
    let mut acc = t.constant.clone();
    for (v, a) in &t.coeffs {
        let val = m
            .get(v)
            .unwrap_or_else(|| panic!("eval_term: variable {v} is unassigned"));
        acc += a * val;
    }
    acc
}

fn fmt_rat(r: &Rat) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

impl fmt::Display for LinTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (v, a) in &self.coeffs {
            let neg = a.is_negative();
            let mag = a.abs();
            if first {
                if neg {
                    f.write_str("-")?;
                }
            } else {
                f.write_str(if neg { " - " } else { " + " })?;
            }
            if mag.is_one() {
                write!(f, "{v}")?;
            } else {
                write!(f, "{}{v}", fmt_rat(&mag))?;
            }
            first = false;
        }
        if first {
            return f.write_str(&fmt_rat(&self.constant));
        }
        if !self.constant.is_zero() {
            let neg = self.constant.is_negative();
            write!(f, "{}{}", if neg { " - " } else { " + " }, fmt_rat(&self.constant.abs()))?;
        }
        Ok(())
    }
}

impl fmt::Debug for LinTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// `c1·t1 + c2·t2` for positive `c1`, `c2`.
pub fn lin_comb(c1: &Rat, t1: &LinTerm, c2: &Rat, t2: &LinTerm) -> LinTerm {
    assert!(c1.is_positive() && c2.is_positive(), "lin_comb needs positive coefficients");
    let mut t = t1.scale(c1);
    t.add_scaled(c2, t2);
    t
}

/// Relation of an atom against zero.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum Rel {
    /// `t ≤ 0`
    Le,
    /// `t = 0`
    Eq,
    /// `t ≡ 0 (mod g)` with `g ≥ 1`
    Mod(Int),
}

/// A constraint `term rel 0`.
///
/// The constants `0 ≤ 0` and `1 ≤ 0` act as the canonical true/false markers.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    pub term: LinTerm,
    pub rel: Rel,
}

impl Atom {
    pub fn le(term: LinTerm) -> Atom {
        Atom { term, rel: Rel::Le }
    }

    pub fn eq(term: LinTerm) -> Atom {
        Atom { term, rel: Rel::Eq }
    }

    pub fn modeq(term: LinTerm, g: Int) -> Atom {
        assert!(g.is_positive(), "modulus must be positive");
        // Divide out a factor shared by the modulus and every coefficient; if
        // it misses the constant the congruence has no solution.
        let (term, g) = if term.is_integral() {
            let h = gcd_all(term.coeffs().map(|(_, c)| c.numer())).gcd(&g);
            if h > Int::one() {
                if !(term.constant().numer() % &h).is_zero() {
                    return Atom::ff();
                }
                (term.scale(&(Rat::one() / rat_of(&h))), g / h)
            } else {
                (term, g)
            }
        } else {
            (term, g)
        };
        if g.is_one() {
            return Atom::tt();
        }
        Atom { term, rel: Rel::Mod(g) }
    }

    pub fn tt() -> Atom {
        Atom::le(LinTerm::zero())
    }

    pub fn ff() -> Atom {
        Atom::le(LinTerm::constant_term(rat(1)))
    }

    /// Truth value when the term is constant.
    pub fn truth(&self) -> Option<bool> {
        if !self.term.is_constant() {
            return None;
        }
        let c = self.term.constant();
        Some(match &self.rel {
            Rel::Le => !c.is_positive(),
            Rel::Eq => c.is_zero(),
            Rel::Mod(g) => c.is_integer() && (c.numer() % g).is_zero(),
        })
    }

    pub fn is_true(&self) -> bool {
        self.truth() == Some(true)
    }

    pub fn is_false(&self) -> bool {
        self.truth() == Some(false)
    }

    pub fn holds(&self, m: &Model) -> bool {
        let v = eval_term(&self.term, m);
        match &self.rel {
            Rel::Le => !v.is_positive(),
            Rel::Eq => v.is_zero(),
            Rel::Mod(g) => v.is_integer() && (v.numer() % g).is_zero(),
        }
    }

    /// Integer negation of an inequality: `¬(t ≤ 0)` is `-t + 1 ≤ 0`.
    pub fn negate_le(&self) -> Atom {
        assert!(self.rel == Rel::Le, "negate_le on a non-inequality");
        normalize_atom(&self.term, RawRel::NotLe)
    }

    pub fn vars(&self) -> impl Iterator<Item = &VarId> {
        self.term.vars()
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.rel {
            Rel::Le => write!(f, "{} <= 0", self.term),
            Rel::Eq => write!(f, "{} = 0", self.term),
            Rel::Mod(g) => write!(f, "{} =_{} 0", self.term, g),
        }
    }
}

impl fmt::Debug for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({self})")
    }
}

/// Relation of a raw, not yet normalized constraint `t rel 0`.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum RawRel {
    Le,
    Lt,
    Eq,
    NotLe,
    NotLt,
}

fn integer_scaled(t: &LinTerm) -> LinTerm {
    let l = t.denom_lcm();
    if l.is_one() {
        t.clone()
    } else {
        t.scale(&rat_of(&l))
    }
}

fn fold_constant(a: Atom) -> Atom {
    match a.truth() {
        Some(true) => Atom::tt(),
        Some(false) => Atom::ff(),
        None => a,
    }
}

/// Brings a raw constraint into canonical integer form.
///
/// Inequalities are only scaled to integers, never divided by their gcd;
/// equalities are gcd-reduced with a positive leading coefficient. A negated
/// equality is not an atom and must be split by the caller.
pub fn normalize_atom(t: &LinTerm, rel: RawRel) -> Atom {
    let t = integer_scaled(t);
    let a = match rel {
        RawRel::Le => Atom::le(t),
        RawRel::Lt => {
            let mut t = t;
            t.add_constant(&rat(1));
            Atom::le(t)
        }
        RawRel::NotLe => {
            let mut t = t.neg();
            t.add_constant(&rat(1));
            Atom::le(t)
        }
        RawRel::NotLt => Atom::le(t.neg()),
        RawRel::Eq => {
            let g = t
                .coeffs()
                .map(|(_, a)| a.numer().clone())
                .chain(std::iter::once(t.constant().numer().clone()))
                .fold(Int::zero(), |g, x| g.gcd(&x));
            let mut t = if g.is_zero() || g.is_one() { t } else { t.scale(&Rat::new(Int::one(), g)) };
            if let Some((_, a)) = t.leading() {
                if a.is_negative() {
                    t = t.neg();
                }
            }
            Atom::eq(t)
        }
    };
    fold_constant(a)
}

/// Re-normalizes an atom that is already in `Atom` form (idempotent).
pub fn normalize(a: &Atom) -> Atom {
    match &a.rel {
        Rel::Le => normalize_atom(&a.term, RawRel::Le),
        Rel::Eq => normalize_atom(&a.term, RawRel::Eq),
        Rel::Mod(g) => {
            let l = a.term.denom_lcm();
            let t = integer_scaled(&a.term);
            fold_constant(Atom::modeq(t, g * l))
        }
    }
}

/// Rounds the constant of an integer inequality up to a multiple of the
/// coefficient gcd. Returns the tightened atom and the amount `k` added.
pub fn tighten(a: &Atom) -> (Atom, Int) {
    assert!(a.rel == Rel::Le, "tighten applies to inequalities only");
    assert!(!a.term.is_constant(), "tighten needs at least one variable");
    assert!(a.term.is_integral(), "tighten needs integer coefficients");
    let g = a.term.var_gcd();
    let c = a.term.constant().to_integer();
    let rounded = ceil_div(&c, &g) * &g;
    let k = &rounded - &c;
    let mut t = a.term.clone();
    t.set_constant(rat_of(&rounded));
    (Atom::le(t), k)
}
