//! Terms with ceiling divisions, atoms over them, and Boolean formulas.
//!
//! Interpolants live here, and so do parsed input problems: a linear input
//! atom is just an `ExtAtom` without ceilings.

use crate::arith::{ceil, normalize, rat, rat_of, Atom, Int, LinTerm, Model, Rat, Rel, VarId};
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum Mono {
    Var(VarId),
    /// `⌈content / d⌉` with integer-valued content and `d > 1`.
    Ceil(Box<ExtTerm>, Int),
}

/// Rational combination of monomials plus a constant.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct ExtTerm {
    coeffs: BTreeMap<Mono, Rat>,
    constant: Rat,
}

impl ExtTerm {
    pub fn zero() -> Self {
        ExtTerm::default()
    }

    pub fn constant_term(c: Rat) -> Self {
        ExtTerm { coeffs: BTreeMap::new(), constant: c }
    }

    pub fn var(v: VarId) -> Self {
        let mut t = ExtTerm::zero();
        t.add_mono(Mono::Var(v), &rat(1));
        t
    }

    pub fn from_lin(t: &LinTerm) -> Self {
        ExtTerm {
            coeffs: t.coeffs().map(|(v, c)| (Mono::Var(v.clone()), c.clone())).collect(),
            constant: t.constant().clone(),
        }
    }

    /// The linear term, when there are no ceilings.
    pub fn to_lin(&self) -> Option<LinTerm> {
        let mut t = LinTerm::constant_term(self.constant.clone());
        for (m, c) in &self.coeffs {
            match m {
                Mono::Var(v) => t.add_coeff(v.clone(), c.clone()),
                Mono::Ceil(..) => return None,
            }
        }
        Some(t)
    }

    pub fn coeffs(&self) -> impl Iterator<Item = (&Mono, &Rat)> {
        self.coeffs.iter()
    }

    pub fn constant(&self) -> &Rat {
        &self.constant
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn add_mono(&mut self, m: Mono, c: &Rat) {
        if c.is_zero() {
            return;
        }
        let e = self.coeffs.entry(m.clone()).or_insert_with(Rat::zero);
        *e += c;
        if e.is_zero() {
            self.coeffs.remove(&m);
        }
    }

    pub fn add_constant(&mut self, c: &Rat) {
        self.constant += c;
    }

    pub fn add_scaled(&mut self, k: &Rat, other: &ExtTerm) {
        for (m, c) in &other.coeffs {
            self.add_mono(m.clone(), &(k * c));
        }
        self.constant += k * &other.constant;
    }

    pub fn plus(&self, other: &ExtTerm) -> ExtTerm {
        let mut t = self.clone();
        t.add_scaled(&rat(1), other);
        t
    }

    pub fn minus(&self, other: &ExtTerm) -> ExtTerm {
        let mut t = self.clone();
        t.add_scaled(&rat(-1), other);
        t
    }

    pub fn scale(&self, k: &Rat) -> ExtTerm {
        let mut t = ExtTerm::zero();
        t.add_scaled(k, self);
        t
    }

    pub fn neg(&self) -> ExtTerm {
        self.scale(&rat(-1))
    }

    pub fn without_constant(&self) -> ExtTerm {
        ExtTerm { coeffs: self.coeffs.clone(), constant: Rat::zero() }
    }

    /// `⌈content / d⌉`, simplified when the content splits as `d·s + c`.
    pub fn ceil_div(content: &ExtTerm, d: &Int) -> ExtTerm {
        assert!(d.is_positive(), "ceiling divisor must be positive");
        let l = content.denom_lcm();
        let (content, d) = if l.is_one() { (content.clone(), d.clone()) } else { (content.scale(&rat_of(&l)), d * &l) };
        if d.is_one() {
            return content;
        }
        let divisible = content.coeffs.values().all(|c| (c.numer() % &d).is_zero());
        if divisible {
            let dr = rat_of(&d);
            let mut t = content.without_constant().scale(&(Rat::one() / &dr));
            t.constant = rat_of(&ceil(&(&content.constant / &dr)));
            return t;
        }
        // Pull whole multiples of d out of the constant.
        let c = content.constant.to_integer();
        let (q, r) = c.div_mod_floor(&d);
        let mut inner = content.clone();
        inner.constant = rat_of(&r);
        let mut t = ExtTerm::zero();
        t.add_mono(Mono::Ceil(Box::new(inner), d), &rat(1));
        t.constant = rat_of(&q);
        t
    }

    /// Lcm of the outer coefficient and constant denominators.
    pub fn denom_lcm(&self) -> Int {
        self.coeffs.values().chain(std::iter::once(&self.constant)).fold(Int::one(), |l, c| l.lcm(c.denom()))
    }

    /// All variables, including those under ceilings.
    pub fn vars(&self) -> BTreeSet<VarId> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<VarId>) {
        for m in self.coeffs.keys() {
            match m {
                Mono::Var(v) => {
                    out.insert(v.clone());
                }
                Mono::Ceil(t, _) => t.collect_vars(out),
            }
        }
    }

    pub fn has_ceil(&self) -> bool {
        self.coeffs.keys().any(|m| matches!(m, Mono::Ceil(..)))
    }

    /// Value under an assignment; `None` if some variable is unassigned.
    pub fn eval(&self, m: &Model) -> Option<Rat> {
        let mut v = self.constant.clone();
        for (mono, c) in &self.coeffs {
            let x = match mono {
                Mono::Var(x) => m.get(x)?.clone(),
                Mono::Ceil(t, d) => rat_of(&ceil(&(t.eval(m)? / rat_of(d)))),
            };
            v += c * x;
        }
        Some(v)
    }
}

impl fmt::Display for ExtTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (m, c) in &self.coeffs {
            let name = match m {
                Mono::Var(v) => v.to_string(),
                Mono::Ceil(t, d) => format!("ceil(({t})/{d})"),
            };
            let (sign, abs) = if c.is_negative() { ("-", -c) } else { ("+", c.clone()) };
            if first {
                if sign == "-" {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            if abs.is_one() {
                write!(f, "{name}")?;
            } else {
                write!(f, "{abs}{name}")?;
            }
            first = false;
        }
        let c = &self.constant;
        if first {
            write!(f, "{c}")
        } else if c.is_positive() {
            write!(f, " + {c}")
        } else if c.is_negative() {
            write!(f, " - {}", -c)
        } else {
            Ok(())
        }
    }
}

impl fmt::Debug for ExtTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// `term rel 0` over an extended term.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ExtAtom {
    pub term: ExtTerm,
    pub rel: Rel,
}

impl ExtAtom {
    pub fn new(term: ExtTerm, rel: Rel) -> Self {
        ExtAtom { term, rel }
    }

    pub fn le(term: ExtTerm) -> Self {
        ExtAtom { term, rel: Rel::Le }
    }

    pub fn from_atom(a: &Atom) -> Self {
        ExtAtom { term: ExtTerm::from_lin(&a.term), rel: a.rel.clone() }
    }

    pub fn to_atom(&self) -> Option<Atom> {
        Some(Atom { term: self.term.to_lin()?, rel: self.rel.clone() })
    }

    /// Scales to integer outer coefficients; linear atoms are fully normalized.
    pub fn normalized(&self) -> ExtAtom {
        if let Some(a) = self.to_atom() {
            return ExtAtom::from_atom(&normalize(&a));
        }
        let l = self.term.denom_lcm();
        let term = self.term.scale(&rat_of(&l));
        let rel = match &self.rel {
            Rel::Mod(g) => Rel::Mod(g * &l),
            r => r.clone(),
        };
        ExtAtom { term, rel }
    }

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

    pub fn holds(&self, m: &Model) -> Option<bool> {
        let v = self.term.eval(m)?;
        Some(match &self.rel {
            Rel::Le => !v.is_positive(),
            Rel::Eq => v.is_zero(),
            Rel::Mod(g) => v.is_integer() && (v.numer() % g).is_zero(),
        })
    }

    pub fn vars(&self) -> BTreeSet<VarId> {
        self.term.vars()
    }
}

impl fmt::Display for ExtAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.rel {
            Rel::Le => write!(f, "{} <= 0", self.term),
            Rel::Eq => write!(f, "{} = 0", self.term),
            Rel::Mod(g) => write!(f, "{} =_{} 0", self.term, g),
        }
    }
}

impl fmt::Debug for ExtAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({self})")
    }
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum Formula {
    True,
    False,
    Atom(ExtAtom),
    Bool(String),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
}

pub type BoolModel = BTreeMap<String, bool>;

impl Formula {
    /// Atom with constant folding.
    pub fn atom(a: ExtAtom) -> Formula {
        match a.truth() {
            Some(true) => Formula::True,
            Some(false) => Formula::False,
            None => Formula::Atom(a),
        }
    }

    pub fn lin(a: &Atom) -> Formula {
        Formula::atom(ExtAtom::from_atom(a))
    }

    pub fn and(parts: Vec<Formula>) -> Formula {
        let mut out = Vec::new();
        for p in parts {
            match p {
                Formula::True => {}
                Formula::False => return Formula::False,
                Formula::And(inner) => out.extend(inner),
                p => out.push(p),
            }
        }
        match out.len() {
            0 => Formula::True,
            1 => out.pop().unwrap(),
            _ => Formula::And(out),
        }
    }

    pub fn or(parts: Vec<Formula>) -> Formula {
        let mut out = Vec::new();
        for p in parts {
            match p {
                Formula::False => {}
                Formula::True => return Formula::True,
                Formula::Or(inner) => out.extend(inner),
                p => out.push(p),
            }
        }
        match out.len() {
            0 => Formula::False,
            1 => out.pop().unwrap(),
            _ => Formula::Or(out),
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Formula {
        match f {
            Formula::True => Formula::False,
            Formula::False => Formula::True,
            Formula::Not(inner) => *inner,
            f => Formula::Not(Box::new(f)),
        }
    }

    /// Truth under integer assignments; `None` if something is unassigned.
    pub fn eval(&self, m: &Model, b: &BoolModel) -> Option<bool> {
        Some(match self {
            Formula::True => true,
            Formula::False => false,
            Formula::Atom(a) => a.holds(m)?,
            Formula::Bool(n) => *b.get(n)?,
            Formula::Not(f) => !f.eval(m, b)?,
            Formula::And(fs) => {
                let mut r = true;
                for f in fs {
                    r &= f.eval(m, b)?;
                }
                r
            }
            Formula::Or(fs) => {
                let mut r = false;
                for f in fs {
                    r |= f.eval(m, b)?;
                }
                r
            }
        })
    }

    pub fn vars(&self) -> BTreeSet<VarId> {
        let mut out = BTreeSet::new();
        self.visit_atoms(&mut |a| out.extend(a.vars()));
        out
    }

    pub fn bools(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit(&mut |f| {
            if let Formula::Bool(n) = f {
                out.insert(n.clone());
            }
        });
        out
    }

    pub fn visit(&self, f: &mut impl FnMut(&Formula)) {
        f(self);
        match self {
            Formula::Not(g) => g.visit(f),
            Formula::And(gs) | Formula::Or(gs) => gs.iter().for_each(|g| g.visit(f)),
            _ => {}
        }
    }

    pub fn visit_atoms(&self, f: &mut impl FnMut(&ExtAtom)) {
        self.visit(&mut |g| {
            if let Formula::Atom(a) = g {
                f(a)
            }
        });
    }

    pub fn has_ceil(&self) -> bool {
        let mut found = false;
        self.visit_atoms(&mut |a| found |= a.term.has_ceil());
        found
    }

    /// Rebuilds the formula with every atom replaced.
    pub fn map_atoms(&self, f: &mut impl FnMut(&ExtAtom) -> Formula) -> Formula {
        match self {
            Formula::Atom(a) => f(a),
            Formula::Not(g) => Formula::not(g.map_atoms(f)),
            Formula::And(gs) => Formula::and(gs.iter().map(|g| g.map_atoms(f)).collect()),
            Formula::Or(gs) => Formula::or(gs.iter().map(|g| g.map_atoms(f)).collect()),
            g => g.clone(),
        }
    }

    /// Negation normal form over integer semantics: negated inequalities
    /// flip to `-t + 1 ≤ 0`, negated equalities split in two; negated
    /// modular atoms and Boolean variables stay as negative literals.
    pub fn nnf(&self) -> Formula {
        self.nnf_signed(true)
    }

    fn nnf_signed(&self, pos: bool) -> Formula {
        match self {
            Formula::True => if pos { Formula::True } else { Formula::False },
            Formula::False => if pos { Formula::False } else { Formula::True },
            Formula::Bool(_) => if pos { self.clone() } else { Formula::not(self.clone()) },
            Formula::Not(g) => g.nnf_signed(!pos),
            Formula::And(gs) => {
                let parts = gs.iter().map(|g| g.nnf_signed(pos)).collect();
                if pos { Formula::and(parts) } else { Formula::or(parts) }
            }
            Formula::Or(gs) => {
                let parts = gs.iter().map(|g| g.nnf_signed(pos)).collect();
                if pos { Formula::or(parts) } else { Formula::and(parts) }
            }
            Formula::Atom(a) => {
                let a = a.normalized();
                if pos {
                    return Formula::atom(a);
                }
                match &a.rel {
                    Rel::Le => {
                        let mut t = a.term.neg();
                        t.add_constant(&rat(1));
                        Formula::atom(ExtAtom::le(t))
                    }
                    Rel::Eq => {
                        let mut lo = a.term.clone();
                        lo.add_constant(&rat(1));
                        let mut hi = a.term.neg();
                        hi.add_constant(&rat(1));
                        Formula::or(vec![Formula::atom(ExtAtom::le(lo)), Formula::atom(ExtAtom::le(hi))])
                    }
                    Rel::Mod(_) => Formula::not(Formula::atom(a)),
                }
            }
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => write!(f, "true"),
            Formula::False => write!(f, "false"),
            Formula::Atom(a) => write!(f, "({a})"),
            Formula::Bool(n) => write!(f, "{n}"),
            Formula::Not(g) => write!(f, "¬{g}"),
            Formula::And(gs) | Formula::Or(gs) => {
                let op = if matches!(self, Formula::And(_)) { " ∧ " } else { " ∨ " };
                write!(f, "(")?;
                for (i, g) in gs.iter().enumerate() {
                    if i > 0 {
                        write!(f, "{op}")?;
                    }
                    write!(f, "{g}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::int;
    use proptest::prelude::*;

    fn y() -> ExtTerm {
        ExtTerm::var(VarId::new("y"))
    }

    fn model(pairs: &[(&str, i64)]) -> Model {
        pairs.iter().map(|(v, x)| (VarId::new(v), rat(*x))).collect()
    }

    #[test]
    fn ceil_simplifies_exact_multiples() {
        let mut c = y().scale(&rat(4));
        c.add_constant(&rat(3));
        let t = ExtTerm::ceil_div(&c, &int(2));
        let mut want = y().scale(&rat(2));
        want.add_constant(&rat(2));
        assert_eq!(t, want);
        assert_eq!(ExtTerm::ceil_div(&y(), &int(1)), y());
    }

    #[test]
    fn ceil_of_rational_content_is_scaled() {
        let c = y().scale(&crate::arith::ratio(1, 2));
        let t = ExtTerm::ceil_div(&c, &int(3));
        assert_eq!(t, ExtTerm::ceil_div(&y(), &int(6)));
    }

    #[test]
    fn eval_ceilings() {
        let t = ExtTerm::ceil_div(&y(), &int(2)).scale(&rat(2)).minus(&y());
        for v in -5..=5 {
            let got = t.eval(&model(&[("y", v)])).unwrap();
            assert_eq!(got, rat(if v % 2 == 0 { 0 } else { 1 }));
        }
    }

    #[test]
    fn nnf_of_negated_equality_splits() {
        let a = ExtAtom::from_atom(&Atom::eq(LinTerm::from_ints(&[(1, "x"), (-1, "y")], 0)));
        let f = Formula::not(Formula::Atom(a)).nnf();
        let Formula::Or(parts) = f else { panic!() };
        assert_eq!(parts.len(), 2);
    }

    #[test]
    fn folding() {
        assert_eq!(Formula::and(vec![Formula::True, Formula::True]), Formula::True);
        assert_eq!(Formula::or(vec![Formula::False, Formula::Bool("p".into())]), Formula::Bool("p".into()));
        assert_eq!(Formula::atom(ExtAtom::le(ExtTerm::constant_term(rat(5)))), Formula::False);
    }

    fn formula_strategy() -> impl Strategy<Value = Formula> {
        let leaf = (proptest::collection::vec(-3i64..=3, 2), -4i64..=4, 0u8..4).prop_map(|(cs, c, k)| {
            let t = LinTerm::from_ints(&[(cs[0], "x"), (cs[1], "y")], c);
            let rel = match k {
                0 | 1 => Rel::Le,
                2 => Rel::Eq,
                _ => Rel::Mod(int(3)),
            };
            Formula::atom(ExtAtom::new(ExtTerm::from_lin(&t), rel))
        });
        leaf.prop_recursive(3, 16, 3, |inner| {
            prop_oneof![
                inner.clone().prop_map(Formula::not),
                proptest::collection::vec(inner.clone(), 2..3).prop_map(Formula::and),
                proptest::collection::vec(inner, 2..3).prop_map(Formula::or),
            ]
        })
    }

    proptest! {
        #[test]
        fn nnf_preserves_integer_semantics(f in formula_strategy(), x in -6i64..=6, yv in -6i64..=6) {
            let m = model(&[("x", x), ("y", yv)]);
            let b = BoolModel::new();
            prop_assert_eq!(f.eval(&m, &b), f.nnf().eval(&m, &b));
        }
    }
}
