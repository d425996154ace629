//! Rational consistency checking with Farkas certificates.
//!
//! A bounded general simplex: every distinct linear form gets a slack
//! variable, constraints become bounds on those slacks, and pivoting follows
//! Bland's rule so the search always terminates. Arithmetic is exact.

use crate::arith::{rat, Atom, Int, LinTerm, Model, Rat, Rel, VarId};
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use std::collections::{BTreeMap, HashMap};

/// Positive combination of premises that sums to a positive constant.
///
/// Equalities may carry a negative coefficient; that stands for their
/// reversed orientation `-t ≤ 0`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FarkasCert {
    /// `(coefficient, index of the premise in the checked set, premise)`
    pub entries: Vec<(Rat, usize, Atom)>,
    pub constant: Rat,
}

impl FarkasCert {
    /// Recomputes the combination and checks it is a positive constant.
    pub fn is_valid(&self) -> bool {
        let mut sum = LinTerm::zero();
        for (c, _, a) in &self.entries {
            match a.rel {
                Rel::Le if c.is_positive() => {}
                Rel::Eq if !c.is_zero() => {}
                _ => return false,
            }
            sum.add_scaled(c, &a.term);
        }
        sum.is_constant() && sum.constant().is_positive() && *sum.constant() == self.constant
    }
}

#[derive(Clone, Debug)]
pub enum LaqResult {
    Sat(Model),
    Unsat(FarkasCert),
}

/// Decides rational feasibility of a set of `≤ 0` / `= 0` atoms.
pub fn check_laq(constraints: &[Atom]) -> LaqResult {
    let mut s = Simplex::new();
    for (i, a) in constraints.iter().enumerate() {
        if let Err(cert) = s.assert_atom(a, i) {
            return LaqResult::Unsat(cert);
        }
    }
    match s.check() {
        Ok(m) => LaqResult::Sat(m),
        Err(cert) => LaqResult::Unsat(cert),
    }
}

/// Where a bound came from: premise `idx` oriented by `sign`, whose linear
/// part is `scale` times the normalized form of the bounded variable.
#[derive(Clone, Debug)]
struct Reason {
    idx: usize,
    sign: i8,
    scale: Rat,
    atom: Atom,
}

#[derive(Clone, Debug)]
struct Bound {
    value: Rat,
    reason: Reason,
}

#[derive(Clone, Debug)]
struct TrailEntry {
    var: usize,
    lower: Option<Bound>,
    upper: Option<Bound>,
}

/// Incremental simplex tableau with assert / push / pop.
#[derive(Clone, Debug, Default)]
pub struct Simplex {
    originals: Vec<VarId>,
    orig_index: HashMap<VarId, usize>,
    form_index: HashMap<LinTerm, usize>,
    /// rows[b] is `Some(row)` when `b` is basic: `b = Σ row[j]·x_j`.
    rows: Vec<Option<BTreeMap<usize, Rat>>>,
    values: Vec<Rat>,
    lower: Vec<Option<Bound>>,
    upper: Vec<Option<Bound>>,
    trail: Vec<TrailEntry>,
    marks: Vec<usize>,
    /// Indices and constant falsehoods asserted since the last check.
    trivially_false: Vec<(usize, Atom, usize)>,
    pivots: u64,
}

impl Simplex {
    pub fn new() -> Self {
        Simplex::default()
    }

    pub fn pivots(&self) -> u64 {
        self.pivots
    }

    fn num_vars(&self) -> usize {
        self.values.len()
    }

    fn new_var(&mut self, row: Option<BTreeMap<usize, Rat>>) -> usize {
        let id = self.num_vars();
        let value = match &row {
            None => Rat::zero(),
            Some(r) => r.iter().map(|(j, a)| a * &self.values[*j]).sum(),
        };
        self.rows.push(row);
        self.values.push(value);
        self.lower.push(None);
        self.upper.push(None);
        id
    }

    fn original(&mut self, v: &VarId) -> usize {
        if let Some(&i) = self.orig_index.get(v) {
            return i;
        }
        let i = self.new_var(None);
        self.originals.push(v.clone());
        self.orig_index.insert(v.clone(), i);
        i
    }

    /// Internal variable standing for the normalized form `f` (leading
    /// coefficient one, no constant).
    fn form_var(&mut self, f: &LinTerm) -> usize {
        if f.num_vars() == 1 {
            let v = f.vars().next().unwrap().clone();
            return self.original(&v);
        }
        if let Some(&i) = self.form_index.get(f) {
            return i;
        }
        let mut row: BTreeMap<usize, Rat> = BTreeMap::new();
        for (v, a) in f.coeffs() {
            let x = self.original(v);
            match &self.rows[x] {
                None => {
                    *row.entry(x).or_insert_with(Rat::zero) += a;
                }
                Some(r) => {
                    for (j, b) in r.clone() {
                        *row.entry(j).or_insert_with(Rat::zero) += a * b;
                    }
                }
            }
        }
        row.retain(|_, a| !a.is_zero());
        let i = self.new_var(Some(row));
        self.form_index.insert(f.clone(), i);
        i
    }

    /// Saves the current bound state.
    pub fn push(&mut self) {
        self.marks.push(self.trail.len());
    }

    /// Restores the bounds saved by the matching `push`.
    pub fn pop(&mut self) {
        let mark = self.marks.pop().expect("pop without push");
        while self.trail.len() > mark {
            let e = self.trail.pop().unwrap();
            self.lower[e.var] = e.lower;
            self.upper[e.var] = e.upper;
        }
        self.trivially_false.retain(|(_, _, depth)| *depth <= self.marks.len());
    }

    /// Adds premise `idx`. Returns a certificate immediately when the new
    /// bound contradicts an existing one.
    pub fn assert_atom(&mut self, a: &Atom, idx: usize) -> Result<(), FarkasCert> {
        match a.rel {
            Rel::Le => self.assert_oriented(a, idx, 1),
            Rel::Eq => {
                self.assert_oriented(a, idx, 1)?;
                self.assert_oriented(a, idx, -1)
            }
            Rel::Mod(_) => panic!("modular atoms must be encoded before simplex"),
        }
    }

    fn assert_oriented(&mut self, a: &Atom, idx: usize, sign: i8) -> Result<(), FarkasCert> {
        let s = if sign > 0 { a.term.clone() } else { a.term.neg() };
        if s.is_constant() {
            if s.constant().is_positive() {
                let cert = FarkasCert {
                    entries: vec![(rat(sign as i64), idx, a.clone())],
                    constant: s.constant().clone(),
                };
                self.trivially_false.push((idx, a.clone(), self.marks.len()));
                return Err(cert);
            }
            return Ok(());
        }
        let (_, lead) = s.leading().unwrap();
        let lead = lead.clone();
        let form = s.without_constant().scale(&lead.recip());
        let x = self.form_var(&form);
        let bound_val = -(s.constant() / &lead);
        let reason = Reason { idx, sign, scale: lead.abs(), atom: a.clone() };
        let bound = Bound { value: bound_val, reason };
        if lead.is_positive() {
            self.set_upper(x, bound)
        } else {
            self.set_lower(x, bound)
        }
    }

    fn record(&mut self, x: usize) {
        self.trail.push(TrailEntry { var: x, lower: self.lower[x].clone(), upper: self.upper[x].clone() });
    }

    fn set_upper(&mut self, x: usize, b: Bound) -> Result<(), FarkasCert> {
        if let Some(u) = &self.upper[x] {
            if u.value <= b.value {
                return Ok(());
            }
        }
        if let Some(l) = &self.lower[x] {
            if l.value > b.value {
                return Err(self.bound_conflict(l.clone(), b));
            }
        }
        self.record(x);
        self.upper[x] = Some(b);
        if self.rows[x].is_none() && self.values[x] > self.upper[x].as_ref().unwrap().value {
            let v = self.upper[x].as_ref().unwrap().value.clone();
            self.update(x, v);
        }
        Ok(())
    }

    fn set_lower(&mut self, x: usize, b: Bound) -> Result<(), FarkasCert> {
        if let Some(l) = &self.lower[x] {
            if l.value >= b.value {
                return Ok(());
            }
        }
        if let Some(u) = &self.upper[x] {
            if u.value < b.value {
                return Err(self.bound_conflict(b, u.clone()));
            }
        }
        self.record(x);
        self.lower[x] = Some(b);
        if self.rows[x].is_none() && self.values[x] < self.lower[x].as_ref().unwrap().value {
            let v = self.lower[x].as_ref().unwrap().value.clone();
            self.update(x, v);
        }
        Ok(())
    }

    fn bound_conflict(&self, lower: Bound, upper: Bound) -> FarkasCert {
        // (l - x ≤ 0) + (x - u ≤ 0) gives l - u ≤ 0 with l > u.
        self.make_cert(vec![(rat(1), lower.reason), (rat(1), upper.reason)])
    }

    /// Sets nonbasic `x` to `v` and shifts the basic variables accordingly.
    fn update(&mut self, x: usize, v: Rat) {
        let delta = &v - &self.values[x];
        for b in 0..self.num_vars() {
            if let Some(row) = &self.rows[b] {
                if let Some(a) = row.get(&x) {
                    let d = a * &delta;
                    self.values[b] += d;
                }
            }
        }
        self.values[x] = v;
    }

    fn pivot(&mut self, b: usize, j: usize) {
        self.pivots += 1;
        let mut row = self.rows[b].take().expect("pivot on nonbasic row");
        let a = row.remove(&j).expect("pivot column absent");
        // x_j = (b - Σ_{k≠j} row[k] x_k) / a
        let inv = a.recip();
        let mut new_row: BTreeMap<usize, Rat> = BTreeMap::new();
        new_row.insert(b, inv.clone());
        for (k, c) in row {
            new_row.insert(k, -(c * &inv));
        }
        for other in 0..self.num_vars() {
            if other == j {
                continue;
            }
            let Some(r) = &mut self.rows[other] else { continue };
            let Some(c) = r.remove(&j) else { continue };
            for (k, d) in &new_row {
                let e = r.entry(*k).or_insert_with(Rat::zero);
                *e += &c * d;
            }
            r.retain(|_, v| !v.is_zero());
        }
        self.rows[j] = Some(new_row);
    }

    fn pivot_and_update(&mut self, b: usize, j: usize, v: Rat) {
        let a = self.rows[b].as_ref().unwrap()[&j].clone();
        let theta = (&v - &self.values[b]) / &a;
        self.values[b] = v;
        let old_j = self.values[j].clone();
        self.values[j] = &old_j + &theta;
        for k in 0..self.num_vars() {
            if k == b {
                continue;
            }
            if let Some(r) = &self.rows[k] {
                if let Some(c) = r.get(&j) {
                    let d = c * &theta;
                    self.values[k] += d;
                }
            }
        }
        self.pivot(b, j);
    }

    fn below_lower(&self, x: usize) -> bool {
        matches!(&self.lower[x], Some(l) if self.values[x] < l.value)
    }

    fn above_upper(&self, x: usize) -> bool {
        matches!(&self.upper[x], Some(u) if self.values[x] > u.value)
    }

    fn can_increase(&self, x: usize) -> bool {
        match &self.upper[x] {
            None => true,
            Some(u) => self.values[x] < u.value,
        }
    }

    fn can_decrease(&self, x: usize) -> bool {
        match &self.lower[x] {
            None => true,
            Some(l) => self.values[x] > l.value,
        }
    }

    /// Runs the simplex loop on the asserted bounds.
    pub fn check(&mut self) -> Result<Model, FarkasCert> {
        if let Some((idx, a, _)) = self.trivially_false.first() {
            return Err(FarkasCert {
                entries: vec![(rat(1), *idx, a.clone())],
                constant: a.term.constant().clone(),
            });
        }
        loop {
            let violated = (0..self.num_vars())
                .find(|&b| self.rows[b].is_some() && (self.below_lower(b) || self.above_upper(b)));
            let Some(b) = violated else {
                return Ok(self.model());
            };
            let row = self.rows[b].as_ref().unwrap();
            if self.below_lower(b) {
                let pick = row.iter().find(|(j, a)| {
                    (a.is_positive() && self.can_increase(**j)) || (a.is_negative() && self.can_decrease(**j))
                });
                match pick.map(|(j, _)| *j) {
                    Some(j) => {
                        let v = self.lower[b].as_ref().unwrap().value.clone();
                        self.pivot_and_update(b, j, v);
                    }
                    None => return Err(self.row_conflict(b, true)),
                }
            } else {
                let pick = row.iter().find(|(j, a)| {
                    (a.is_positive() && self.can_decrease(**j)) || (a.is_negative() && self.can_increase(**j))
                });
                match pick.map(|(j, _)| *j) {
                    Some(j) => {
                        let v = self.upper[b].as_ref().unwrap().value.clone();
                        self.pivot_and_update(b, j, v);
                    }
                    None => return Err(self.row_conflict(b, false)),
                }
            }
        }
    }

    /// Explanation for a basic variable stuck outside its bound.
    fn row_conflict(&self, b: usize, below: bool) -> FarkasCert {
        let row = self.rows[b].as_ref().unwrap();
        let mut parts: Vec<(Rat, Reason)> = Vec::new();
        if below {
            // (l_b - b) + Σ_{a>0} a(x_j - u_j) + Σ_{a<0} (-a)(l_j - x_j)
            parts.push((rat(1), self.lower[b].as_ref().unwrap().reason.clone()));
            for (j, a) in row {
                let bound = if a.is_positive() { &self.upper[*j] } else { &self.lower[*j] };
                parts.push((a.abs(), bound.as_ref().unwrap().reason.clone()));
            }
        } else {
            parts.push((rat(1), self.upper[b].as_ref().unwrap().reason.clone()));
            for (j, a) in row {
                let bound = if a.is_positive() { &self.lower[*j] } else { &self.upper[*j] };
                parts.push((a.abs(), bound.as_ref().unwrap().reason.clone()));
            }
        }
        self.make_cert(parts)
    }

    fn make_cert(&self, parts: Vec<(Rat, Reason)>) -> FarkasCert {
        let mut by_idx: BTreeMap<usize, (Rat, Atom)> = BTreeMap::new();
        for (mu, r) in parts {
            let c = &mu / &r.scale * rat(r.sign as i64);
            let e = by_idx.entry(r.idx).or_insert_with(|| (Rat::zero(), r.atom.clone()));
            e.0 += c;
        }
        let mut entries: Vec<(Rat, usize, Atom)> =
            by_idx.into_iter().filter(|(_, (c, _))| !c.is_zero()).map(|(i, (c, a))| (c, i, a)).collect();
        // Smallest integer multipliers.
        let l = entries.iter().fold(Int::one(), |l, (c, _, _)| l.lcm(c.denom()));
        let g = entries.iter().fold(Int::zero(), |g, (c, _, _)| g.gcd(&(c * Rat::from_integer(l.clone())).to_integer()));
        let scale = Rat::new(l, g);
        for e in &mut entries {
            e.0 = &e.0 * &scale;
        }
        let mut sum = LinTerm::zero();
        for (c, _, a) in &entries {
            sum.add_scaled(c, &a.term);
        }
        assert!(
            sum.is_constant() && sum.constant().is_positive(),
            "internal error: simplex produced an invalid certificate"
        );
        FarkasCert { entries, constant: sum.constant().clone() }
    }

    fn model(&self) -> Model {
        self.originals.iter().map(|v| (v.clone(), self.values[self.orig_index[v]].clone())).collect()
    }
}

/// Fourier–Motzkin feasibility check used as an independent test oracle.
pub fn fourier_motzkin_feasible(constraints: &[Atom]) -> bool {
    let mut ineqs: Vec<LinTerm> = Vec::new();
    for a in constraints {
        match a.rel {
            Rel::Le => ineqs.push(a.term.clone()),
            Rel::Eq => {
                ineqs.push(a.term.clone());
                ineqs.push(a.term.neg());
            }
            Rel::Mod(_) => panic!("modular atom in oracle"),
        }
    }
    loop {
        if ineqs.iter().any(|t| t.is_constant() && t.constant().is_positive()) {
            return false;
        }
        ineqs.retain(|t| !t.is_constant());
        let Some(v) = ineqs.iter().flat_map(|t| t.vars()).next().cloned() else {
            return true;
        };
        let (mut pos, mut neg, mut rest) = (Vec::new(), Vec::new(), Vec::new());
        for t in ineqs {
            let a = t.coeff(&v);
            if a.is_positive() {
                pos.push(t.scale(&a.recip()));
            } else if a.is_negative() {
                neg.push(t.scale(&(-a).recip()));
            } else {
                rest.push(t);
            }
        }
        for p in &pos {
            for n in &neg {
                rest.push(p.plus(n));
            }
        }
        rest.sort();
        rest.dedup();
        ineqs = rest;
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::arith::{int, LinTerm};
    use proptest::prelude::*;

    fn le(terms: &[(i64, &str)], c: i64) -> Atom {
        Atom::le(LinTerm::from_ints(terms, c))
    }

    fn eq(terms: &[(i64, &str)], c: i64) -> Atom {
        Atom::eq(LinTerm::from_ints(terms, c))
    }

    #[test]
    fn simple_conflict() {
        let cs = [le(&[(1, "x")], 0), le(&[(-1, "x")], 1)];
        let LaqResult::Unsat(cert) = check_laq(&cs) else { panic!("expected unsat") };
        assert!(cert.is_valid());
        let coeffs: Vec<Rat> = cert.entries.iter().map(|e| e.0.clone()).collect();
        assert_eq!(coeffs, vec![rat(1), rat(1)]);
        assert_eq!(cert.constant, rat(1));
    }

    #[test]
    fn splitting_example_relaxation_is_sat() {
        let cs = splitting_example();
        let LaqResult::Sat(m) = check_laq(&cs) else { panic!("expected sat") };
        for a in &cs {
            assert!(a.holds(&m), "model violates {a}");
        }
    }

    pub(crate) fn splitting_example() -> Vec<Atom> {
        vec![
            le(&[(1, "y1"), (5, "y2"), (-5, "y3"), (-2, "x1")], 2),
            le(&[(-1, "y1"), (-5, "y2"), (5, "y3"), (4, "z1")], -3),
            le(&[(1, "x1")], 0),
            le(&[(1, "y1")], 0),
            le(&[(-1, "y1")], 0),
            le(&[(-1, "y2")], 0),
            le(&[(1, "y2")], -2),
            le(&[(-1, "y3")], 0),
            le(&[(1, "y3")], -1),
            le(&[(-1, "z1")], 0),
        ]
    }

    #[test]
    fn printed_branch_certificate_recomputes() {
        // First leaf certificate of the splitting example with the branch
        // atom y3 ≤ 0 added: coefficients (1, 2, 1, 5, 5) give 2 ≤ 0.
        let cert = FarkasCert {
            entries: vec![
                (rat(1), 0, le(&[(1, "y1"), (5, "y2"), (-5, "y3"), (-2, "x1")], 2)),
                (rat(2), 1, le(&[(1, "x1")], 0)),
                (rat(1), 2, le(&[(-1, "y1")], 0)),
                (rat(5), 3, le(&[(-1, "y2")], 0)),
                (rat(5), 4, le(&[(1, "y3")], 0)),
            ],
            constant: rat(2),
        };
        assert!(cert.is_valid());
        let premises: Vec<Atom> = cert.entries.iter().map(|e| e.2.clone()).collect();
        assert!(matches!(check_laq(&premises), LaqResult::Unsat(_)));
    }

    #[test]
    fn equality_gets_signed_coefficient() {
        let cs = [eq(&[(1, "x"), (-1, "y")], 0), le(&[(-1, "x"), (1, "y")], 1)];
        let LaqResult::Unsat(cert) = check_laq(&cs) else { panic!() };
        assert!(cert.is_valid());
        assert!(cert.entries.iter().any(|(c, i, _)| *i == 0 && c.is_positive()));
        let cs = [eq(&[(1, "x"), (-1, "y")], 0), le(&[(1, "x"), (-1, "y")], 1)];
        let LaqResult::Unsat(cert) = check_laq(&cs) else { panic!() };
        assert!(cert.is_valid());
        assert!(cert.entries.iter().any(|(c, i, _)| *i == 0 && c.is_negative()));
    }

    #[test]
    fn constant_false_atom() {
        let LaqResult::Unsat(cert) = check_laq(&[Atom::ff()]) else { panic!() };
        assert!(cert.is_valid());
    }

    #[test]
    fn incremental_matches_batch() {
        let cs = splitting_example();
        let mut s = Simplex::new();
        for (i, a) in cs.iter().enumerate() {
            s.assert_atom(a, i).unwrap();
        }
        assert!(s.check().is_ok());
        s.push();
        let extra = le(&[(-1, "x1")], 1);
        let r = s.assert_atom(&extra, 99).and_then(|_| s.check().map(|_| ()));
        assert!(r.is_err());
        s.pop();
        assert!(s.check().is_ok());
    }

    fn atom_strategy() -> impl Strategy<Value = Atom> {
        (proptest::collection::vec(-5i64..=5, 4), -5i64..=5, 0u8..4).prop_map(|(cs, c, kind)| {
            let names = ["a", "b", "c", "d"];
            let terms: Vec<(i64, &str)> = cs.iter().zip(names).map(|(a, n)| (*a, n)).collect();
            let t = LinTerm::from_ints(&terms, c);
            if kind == 0 {
                Atom::eq(t)
            } else {
                Atom::le(t)
            }
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]
        #[test]
        fn agrees_with_fourier_motzkin(cs in proptest::collection::vec(atom_strategy(), 1..=6)) {
            let fm = fourier_motzkin_feasible(&cs);
            match check_laq(&cs) {
                LaqResult::Sat(m) => {
                    prop_assert!(fm);
                    for a in &cs {
                        prop_assert!(a.holds(&m));
                    }
                }
                LaqResult::Unsat(cert) => {
                    prop_assert!(!fm);
                    prop_assert!(cert.is_valid());
                    for (_, i, a) in &cert.entries {
                        prop_assert_eq!(&cs[*i], a);
                    }
                }
            }
        }

        #[test]
        fn push_pop_is_transparent(cs in proptest::collection::vec(atom_strategy(), 1..=4),
                                   extra in proptest::collection::vec(atom_strategy(), 1..=3)) {
            let mut s = Simplex::new();
            let mut base_ok = true;
            for (i, a) in cs.iter().enumerate() {
                if s.assert_atom(a, i).is_err() { base_ok = false; }
            }
            prop_assume!(base_ok);
            let before = s.check().is_ok();
            s.push();
            for (i, a) in extra.iter().enumerate() {
                let _ = s.assert_atom(a, 100 + i);
            }
            let _ = s.check();
            s.pop();
            prop_assert_eq!(s.check().is_ok(), before);
            prop_assert_eq!(before, matches!(check_laq(&cs), LaqResult::Sat(_)));
        }
    }

    #[test]
    fn scaled_certificate_is_integral() {
        let cs = [le(&[(2, "x")], -1), le(&[(-3, "x")], 2)];
        let LaqResult::Unsat(cert) = check_laq(&cs) else { panic!() };
        assert!(cert.entries.iter().all(|(c, _, _)| c.is_integer()));
        assert_eq!(cert.entries.iter().map(|e| e.0.clone()).collect::<Vec<_>>(), vec![rat(3), rat(2)]);
        assert_eq!(cert.constant, Rat::from_integer(int(1)));
    }
}
