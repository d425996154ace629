//! Interpolant extraction from equality certificates, cutting-plane proofs
//! and resolution refutations.
//!
//! Two engines annotate cutting-plane proofs: the modular one keeps a set of
//! `(inequality, equality conjunction)` pairs per node, the ceiling one keeps
//! a single extended inequality. Resolution proofs are combined on top of the
//! per-lemma interpolants.

use crate::arith::{normalize, rat, rat_of, Atom, FreshVars, Int, LinTerm, Rat, Rel, VarId};
use crate::dioph::UnsatLinComb;
use crate::formula::{ExtAtom, ExtTerm, Formula, Mono};
use crate::laz::Purity;
use crate::proofs::{lemma_hypotheses, AtomDef, AtomTable, CutProof, CutRule, LemmaProof, Lit, NodeId, Origin, ResNode, ResProof};
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Engine {
    #[default]
    Ceil,
    ModEq,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ItpError {
    #[error("node {0}: rounding applied to a premise that was already rounded")]
    Unsupported(NodeId),
    #[error("node {0}: malformed proof node")]
    Malformed(NodeId),
    #[error("node {0}: local coefficients of annotation and derived atom differ")]
    DivisionInvariant(NodeId),
    #[error("resolution leaf {0} has no origin")]
    MissingOrigin(usize),
    #[error("theory lemma {0} has a non-theory literal")]
    LemmaLiteral(usize),
    #[error("proof root is not the empty clause")]
    NotRefutation,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ItpStats {
    pub lemmas: usize,
    pub equality_lemmas: usize,
    pub strengthen: usize,
    pub conditional_strengthen: usize,
    pub division: usize,
}

/// Canonical key of a theory atom: an inequality and its integer negation
/// share one key.
pub fn atom_key(a: &Atom) -> Atom {
    let a = normalize(a);
    if a.rel == Rel::Le {
        let n = a.negate_le();
        if n < a {
            return n;
        }
    }
    a
}

// ---------------------------------------------------------------------------
// Partitions

/// Split of the hypotheses of a single theory conflict.
#[derive(Clone, Debug, Default)]
pub struct TheoryPartition {
    b_keys: BTreeSet<Atom>,
    a_vars: BTreeSet<VarId>,
    b_vars: BTreeSet<VarId>,
}

impl TheoryPartition {
    /// An atom listed on both sides counts as B.
    pub fn new(a: &[Atom], b: &[Atom]) -> Self {
        let b_keys: BTreeSet<Atom> = b.iter().map(atom_key).collect();
        let mut a_vars = BTreeSet::new();
        for h in a {
            if !b_keys.contains(&atom_key(h)) {
                a_vars.extend(h.vars().cloned());
            }
        }
        let b_vars = b.iter().flat_map(|h| h.vars().cloned()).collect();
        TheoryPartition { b_keys, a_vars, b_vars }
    }

    pub fn hyp_in_b(&self, a: &Atom) -> bool {
        self.b_keys.contains(&atom_key(a))
    }

    /// Variables that do not occur on the B side.
    pub fn is_a_local(&self, v: &VarId) -> bool {
        !self.b_vars.contains(v)
    }

    pub fn is_common(&self, v: &VarId) -> bool {
        self.a_vars.contains(v) && self.b_vars.contains(v)
    }
}

/// Occurrence maps of a grouped problem plus the cut: groups below `cut` form
/// A, the others B.
#[derive(Clone, Debug, Default)]
pub struct Partition {
    pub cut: usize,
    pub var_groups: BTreeMap<VarId, BTreeSet<usize>>,
    pub bool_groups: BTreeMap<String, BTreeSet<usize>>,
    /// Input atoms by `atom_key`.
    pub atom_groups: BTreeMap<Atom, BTreeSet<usize>>,
}

impl Partition {
    pub fn with_cut(&self, cut: usize) -> Partition {
        Partition { cut, ..self.clone() }
    }

    fn in_b(&self, groups: Option<&BTreeSet<usize>>) -> bool {
        groups.is_some_and(|g| g.iter().any(|&i| i >= self.cut))
    }

    fn in_a(&self, groups: Option<&BTreeSet<usize>>) -> bool {
        groups.is_some_and(|g| g.iter().any(|&i| i < self.cut))
    }

    pub fn var_in_b(&self, v: &VarId) -> bool {
        self.in_b(self.var_groups.get(v))
    }

    pub fn var_in_a(&self, v: &VarId) -> bool {
        self.in_a(self.var_groups.get(v))
    }

    pub fn bool_in_b(&self, n: &str) -> bool {
        self.in_b(self.bool_groups.get(n))
    }

    pub fn bool_in_a(&self, n: &str) -> bool {
        self.in_a(self.bool_groups.get(n))
    }

    /// Input atoms are B when they occur in a B group; atoms introduced by the
    /// solver are B when all their variables occur in B.
    pub fn atom_in_b(&self, def: &AtomDef) -> bool {
        match def {
            AtomDef::Theory(a) => match self.atom_groups.get(&atom_key(a)) {
                Some(g) => self.in_b(Some(g)),
                None => a.vars().all(|v| self.var_in_b(v)),
            },
            AtomDef::Bool { tseitin_group: Some(g), .. } => *g >= self.cut,
            AtomDef::Bool { name, tseitin_group: None } => self.bool_in_b(name),
        }
    }

    /// Lemma purity test for this cut.
    pub fn purity(&self) -> Purity {
        Purity::new(self.var_groups.clone(), vec![self.cut])
    }

    pub fn symbols_common(&self, f: &Formula) -> bool {
        f.vars().iter().all(|v| self.var_in_a(v) && self.var_in_b(v))
            && f.bools().iter().all(|b| self.bool_in_a(b) && self.bool_in_b(b))
    }
}

// ---------------------------------------------------------------------------
// Equality certificates

/// Interpolant of an equality conflict: the A-part of the certificate with
/// its A-local variables projected out modulo their gcd.
///
/// The modulus also folds in the gcd of the certificate's root. The root's
/// coefficient on an A-local variable equals its A-part coefficient, so this
/// only matters when the A-part has no local variables left; then the result
/// is a congruence instead of the stronger plain equation.
pub fn itp_equalities(cert: &UnsatLinComb, tp: &TheoryPartition) -> Formula {
    assert!(cert.is_valid(), "invalid equality certificate");
    let mut sum = LinTerm::zero();
    for (c, _, a) in &cert.coeffs {
        if !tp.hyp_in_b(a) {
            sum.add_scaled(&rat_of(c), &a.term);
        }
    }
    Formula::lin(&project_local_mod(&sum, tp, cert.gcd()))
}

/// `∃ A-local. (t = 0)` as an equality or a modular equality.
fn project_local(t: &LinTerm, tp: &TheoryPartition) -> Atom {
    project_local_mod(t, tp, Int::zero())
}

fn project_local_mod(t: &LinTerm, tp: &TheoryPartition, base: Int) -> Atom {
    let l = rat_of(&t.denom_lcm());
    let t = t.scale(&l);
    let mut rest = LinTerm::constant_term(t.constant().clone());
    let mut g = base * l.numer();
    for (v, c) in t.coeffs() {
        if tp.is_a_local(v) {
            g = g.gcd(c.numer());
        } else {
            rest.add_coeff(v.clone(), c.clone());
        }
    }
    if g.is_zero() {
        normalize(&Atom::eq(rest))
    } else {
        normalize(&Atom::modeq(rest, g))
    }
}

// ---------------------------------------------------------------------------
// Modular-equality annotations

type Pairs = Vec<(LinTerm, Formula)>;

fn check_root(p: &CutProof) -> Result<(), ItpError> {
    if p.is_empty() {
        return Err(ItpError::Malformed(0));
    }
    let t = p.root_term();
    if !t.is_constant() || !t.constant().is_positive() {
        return Err(ItpError::Malformed(p.root()));
    }
    Ok(())
}

fn strengthen_pairs(
    p: &CutProof,
    id: NodeId,
    child: NodeId,
    k: &Rat,
    ann: &Pairs,
    tp: &TheoryPartition,
    stats: &mut ItpStats,
) -> Result<Pairs, ItpError> {
    let [(t_ann, e)] = ann.as_slice() else {
        return Err(ItpError::Unsupported(id));
    };
    if *e != Formula::True {
        return Err(ItpError::Unsupported(id));
    }
    let child_term = p.term(child);
    if !child_term.is_integral() || !k.is_integer() || k.is_negative() {
        return Err(ItpError::Malformed(id));
    }
    stats.strengthen += 1;
    let mut derived_ann = t_ann.clone();
    derived_ann.add_constant(k);
    if k.is_zero() {
        return Ok(vec![(derived_ann, Formula::True)]);
    }
    let b_part = child_term.minus(t_ann);
    let mut derived = child_term.clone();
    derived.add_constant(k);
    let common = |t: &LinTerm| t.vars().all(|v| tp.is_common(v));
    if common(&derived) && common(&b_part) {
        stats.conditional_strengthen += 1;
        let mut not_p = b_part.neg();
        not_p.add_constant(&rat(1));
        let e = Formula::lin(&Atom::le(not_p.clone()));
        return Ok(vec![(not_p, e), (derived, Formula::True)]);
    }
    let kk = k.to_integer();
    let mut out = Vec::new();
    let mut j = Int::zero();
    while j < kk {
        let mut t = t_ann.clone();
        t.add_constant(&rat_of(&j));
        let e = Formula::lin(&project_local(&t, tp));
        if e != Formula::False {
            out.push((t, e));
        }
        j += 1;
    }
    out.push((derived_ann, Formula::True));
    Ok(out)
}

/// Annotates a refutation with pairs and returns the disjunction of
/// `(t_i ≤ 0) ∧ E_i` at the root.
pub fn annotate_modeq(p: &CutProof, tp: &TheoryPartition) -> Result<Formula, ItpError> {
    annotate_modeq_with(p, tp, &mut ItpStats::default())
}

pub fn annotate_modeq_with(p: &CutProof, tp: &TheoryPartition, stats: &mut ItpStats) -> Result<Formula, ItpError> {
    check_root(p)?;
    let mut ann: BTreeMap<NodeId, Pairs> = BTreeMap::new();
    for id in p.reachable() {
        let n = p.node(id);
        let pairs = match &n.rule {
            CutRule::Hyp(a) => {
                let t = if tp.hyp_in_b(a) { LinTerm::zero() } else { n.term.clone() };
                vec![(t, Formula::True)]
            }
            CutRule::Comb { c1, left, c2, right } => {
                let (l, r) = (&ann[left], &ann[right]);
                let mut out = Vec::with_capacity(l.len() * r.len());
                for (t1, e1) in l {
                    for (t2, e2) in r {
                        let mut t = t1.scale(c1);
                        t.add_scaled(c2, t2);
                        out.push((t, Formula::and(vec![e1.clone(), e2.clone()])));
                    }
                }
                out
            }
            CutRule::Strengthen { child, k, .. } => strengthen_pairs(p, id, *child, k, &ann[child], tp, stats)?,
            CutRule::Division { child, d } => {
                // Round up to a multiple of d, then divide.
                let t = p.term(*child);
                let dr = rat_of(d);
                let c = t.constant();
                let k = rat_of(&(crate::arith::ceil(&(c / &dr)) * d)) - c;
                stats.division += 1;
                let pairs = strengthen_pairs(p, id, *child, &k, &ann[child], tp, stats)?;
                let inv = Rat::one() / dr;
                pairs.into_iter().map(|(t, e)| (t.scale(&inv), e)).collect()
            }
        };
        ann.insert(id, pairs);
    }
    let disjuncts = ann[&p.root()]
        .iter()
        .map(|(t, e)| Formula::and(vec![Formula::lin(&Atom::le(t.clone())), e.clone()]))
        .collect();
    Ok(Formula::or(disjuncts))
}

// ---------------------------------------------------------------------------
// Ceiling annotations

/// Annotates a refutation with one extended inequality per node.
pub fn annotate_ceil(p: &CutProof, tp: &TheoryPartition) -> Result<Formula, ItpError> {
    annotate_ceil_with(p, tp, &mut ItpStats::default())
}

fn divide_annotation(
    id: NodeId,
    child_term: &LinTerm,
    ann: &ExtTerm,
    d: &Int,
    tp: &TheoryPartition,
) -> Result<ExtTerm, ItpError> {
    let mut local = ExtTerm::zero();
    let mut rest = ExtTerm::constant_term(ann.constant().clone());
    for (m, c) in ann.coeffs() {
        match m {
            Mono::Var(v) if tp.is_a_local(v) => local.add_mono(m.clone(), c),
            _ => rest.add_mono(m.clone(), c),
        }
    }
    let mut expect = ExtTerm::zero();
    for (v, c) in child_term.coeffs() {
        if tp.is_a_local(v) {
            expect.add_mono(Mono::Var(v.clone()), c);
        }
    }
    if local != expect {
        return Err(ItpError::DivisionInvariant(id));
    }
    let mut out = local.scale(&(Rat::one() / rat_of(d)));
    out.add_scaled(&rat(1), &ExtTerm::ceil_div(&rest, d));
    Ok(out)
}

pub fn annotate_ceil_with(p: &CutProof, tp: &TheoryPartition, stats: &mut ItpStats) -> Result<Formula, ItpError> {
    check_root(p)?;
    let mut ann: BTreeMap<NodeId, ExtTerm> = BTreeMap::new();
    for id in p.reachable() {
        let n = p.node(id);
        let t = match &n.rule {
            CutRule::Hyp(a) => {
                if tp.hyp_in_b(a) {
                    ExtTerm::zero()
                } else {
                    ExtTerm::from_lin(&n.term)
                }
            }
            CutRule::Comb { c1, left, c2, right } => {
                let mut t = ann[left].scale(c1);
                t.add_scaled(c2, &ann[right]);
                t
            }
            CutRule::Division { child, d } => {
                stats.division += 1;
                divide_annotation(id, p.term(*child), &ann[child], d, tp)?
            }
            CutRule::Strengthen { child, d, .. } => {
                // Divide by d, then scale back.
                stats.strengthen += 1;
                divide_annotation(id, p.term(*child), &ann[child], d, tp)?.scale(&rat_of(d))
            }
        };
        ann.insert(id, t);
    }
    Ok(Formula::atom(ExtAtom::le(ann[&p.root()].clone()).normalized()))
}

/// Per-lemma dispatch: equality certificates go to the modular engine's
/// closed form; everything else is annotated by the selected engine.
pub fn lemma_interpolant(lp: &LemmaProof, tp: &TheoryPartition, engine: Engine, stats: &mut ItpStats) -> Result<Formula, ItpError> {
    stats.lemmas += 1;
    match (engine, &lp.eq_cert) {
        (Engine::ModEq, Some(cert)) => {
            stats.equality_lemmas += 1;
            Ok(itp_equalities(cert, tp))
        }
        (Engine::ModEq, None) => annotate_modeq_with(&lp.cut, tp, stats),
        (Engine::Ceil, _) => annotate_ceil_with(&lp.cut, tp, stats),
    }
}

// ---------------------------------------------------------------------------
// Resolution proofs

pub fn lit_formula(atoms: &AtomTable, l: Lit) -> Formula {
    let f = match atoms.get(l.atom()) {
        AtomDef::Theory(a) => {
            if a.rel == Rel::Le && !l.is_pos() {
                return Formula::lin(&a.negate_le());
            }
            Formula::lin(a)
        }
        AtomDef::Bool { name, .. } => Formula::Bool(name.clone()),
    };
    if l.is_pos() {
        f
    } else {
        Formula::not(f)
    }
}

/// Interpolant of a resolution refutation, given per-lemma interpolation.
pub fn bool_combine(
    p: &ResProof,
    part: &Partition,
    lemma_itp: &mut dyn FnMut(&LemmaProof, &TheoryPartition) -> Result<Formula, ItpError>,
) -> Result<Formula, ItpError> {
    bool_combine_node(p, p.root, part, lemma_itp)
}

/// Partial interpolant of an arbitrary node (the root need not be empty).
pub fn bool_combine_node(
    p: &ResProof,
    root: usize,
    part: &Partition,
    lemma_itp: &mut dyn FnMut(&LemmaProof, &TheoryPartition) -> Result<Formula, ItpError>,
) -> Result<Formula, ItpError> {
    let atoms = &p.atoms;
    let in_b = |id: u32| part.atom_in_b(atoms.get(id));
    let mut memo: BTreeMap<usize, Formula> = BTreeMap::new();
    let reach = reachable_from(p, root);
    for id in reach {
        let f = match &p.nodes[id] {
            ResNode::Leaf { clause, origin } => match origin {
                None => return Err(ItpError::MissingOrigin(id)),
                Some(Origin::Group(g)) if *g < part.cut => {
                    Formula::or(clause.iter().filter(|l| in_b(l.atom())).map(|&l| lit_formula(atoms, l)).collect())
                }
                Some(Origin::Group(_)) => Formula::True,
                Some(Origin::TLemma(lp)) => {
                    let hyps = lemma_hypotheses(atoms, clause).ok_or(ItpError::LemmaLiteral(id))?;
                    let (mut a, mut b) = (Vec::new(), Vec::new());
                    for (l, h) in clause.iter().zip(hyps) {
                        if in_b(l.atom()) {
                            b.push(h);
                        } else {
                            a.push(h);
                        }
                    }
                    lemma_itp(lp, &TheoryPartition::new(&a, &b))?
                }
                Some(Origin::BnbLemma) => {
                    // A valid split holds a complementary pair on one atom.
                    let pair = clause.iter().find(|&&l| clause.contains(&!l));
                    match pair {
                        Some(l) if !in_b(l.atom()) => Formula::False,
                        _ => Formula::True,
                    }
                }
            },
            ResNode::Res { pivot, left, right, .. } => {
                let (l, r) = (memo[left].clone(), memo[right].clone());
                if in_b(*pivot) {
                    Formula::and(vec![l, r])
                } else {
                    Formula::or(vec![l, r])
                }
            }
        };
        memo.insert(id, f);
    }
    Ok(memo.remove(&root).expect("root visited"))
}

fn reachable_from(p: &ResProof, root: usize) -> Vec<usize> {
    let mut seen = vec![false; p.nodes.len()];
    let mut stack = vec![root];
    while let Some(id) = stack.pop() {
        if std::mem::replace(&mut seen[id], true) {
            continue;
        }
        if let ResNode::Res { left, right, .. } = &p.nodes[id] {
            stack.push(*left);
            stack.push(*right);
        }
    }
    (0..p.nodes.len()).filter(|&i| seen[i]).collect()
}

/// Interpolant of a refutation with the default per-lemma dispatch.
pub fn interpolate(p: &ResProof, part: &Partition, engine: Engine, stats: &mut ItpStats) -> Result<Formula, ItpError> {
    if !p.root_clause().is_empty() {
        return Err(ItpError::NotRefutation);
    }
    bool_combine(p, part, &mut |lp, tp| lemma_interpolant(lp, tp, engine, stats))
}

/// `I_1 … I_{n-1}` for the prefix cuts of `n` groups, all from one proof.
pub fn sequence_interpolants(
    p: &ResProof,
    part: &Partition,
    n_groups: usize,
    engine: Engine,
    stats: &mut ItpStats,
) -> Result<Vec<Formula>, ItpError> {
    (1..n_groups).map(|cut| interpolate(p, &part.with_cut(cut), engine, stats)).collect()
}

// ---------------------------------------------------------------------------
// Ceiling elimination

/// A formula with ceilings replaced by fresh variables. `defs` pins each fresh
/// variable to its ceiling and must be conjoined positively.
#[derive(Clone, Debug)]
pub struct CeilElim {
    pub formula: Formula,
    pub defs: Vec<Atom>,
    pub fresh: BTreeMap<VarId, (ExtTerm, Int)>,
}

impl CeilElim {
    pub fn conjoined(&self) -> Formula {
        let mut parts: Vec<Formula> = self.defs.iter().map(Formula::lin).collect();
        parts.push(self.formula.clone());
        Formula::and(parts)
    }
}

pub fn eliminate_ceilings(f: &Formula, fresh: &mut FreshVars) -> CeilElim {
    let mut st = CeilState { fresh, defs: Vec::new(), map: BTreeMap::new(), seen: BTreeMap::new() };
    let formula = f.map_atoms(&mut |a| {
        if !a.term.has_ceil() {
            return Formula::atom(a.clone());
        }
        let t = st.linearize(&a.term);
        Formula::atom(ExtAtom::new(ExtTerm::from_lin(&t), a.rel.clone()).normalized())
    });
    CeilElim { formula, defs: st.defs, fresh: st.map }
}

struct CeilState<'a> {
    fresh: &'a mut FreshVars,
    defs: Vec<Atom>,
    map: BTreeMap<VarId, (ExtTerm, Int)>,
    seen: BTreeMap<(ExtTerm, Int), VarId>,
}

impl CeilState<'_> {
    fn linearize(&mut self, t: &ExtTerm) -> LinTerm {
        let mut out = LinTerm::constant_term(t.constant().clone());
        for (m, c) in t.coeffs() {
            match m {
                Mono::Var(v) => out.add_coeff(v.clone(), c.clone()),
                Mono::Ceil(content, d) => {
                    let x = self.ceil_var(content, d);
                    out.add_coeff(x, c.clone());
                }
            }
        }
        out
    }

    /// Fresh `x` with `d·x - d < content ≤ d·x`.
    fn ceil_var(&mut self, content: &ExtTerm, d: &Int) -> VarId {
        let key = (content.clone(), d.clone());
        if let Some(x) = self.seen.get(&key) {
            return x.clone();
        }
        let inner = self.linearize(content);
        assert!(inner.is_integral(), "ceiling content must have integer coefficients");
        let x = self.fresh.fresh();
        let dx = LinTerm::var(x.clone()).scale(&rat_of(d));
        self.defs.push(normalize(&Atom::le(inner.minus(&dx))));
        let mut lower = dx.minus(&inner);
        lower.add_constant(&(rat(1) - rat_of(d)));
        self.defs.push(normalize(&Atom::le(lower)));
        self.seen.insert(key, x.clone());
        self.map.insert(x.clone(), (content.clone(), d.clone()));
        x
    }
}
