//! Layered LA(Z) theory solver.
//!
//! Layers run in order: rational relaxation, equality elimination with
//! tightening, a small internal branch-and-bound, and finally deferral to the
//! SAT engine through lemma clauses (branches, cuts from proofs, or
//! defining-constraint splits).

use crate::arith::{floor, normalize, rat, rat_of, Atom, Int, LinTerm, Model, Rat, Rel, VarId};
use crate::dioph::{eliminate_and_tighten, solve_eqs, DiophResult};
use crate::proofs::{cut_proof_of_unsat_eqs, BnbProof, CutNode, CutProof, CutRule, LemmaProof, NodeId};
use crate::simplex::{check_laq, FarkasCert, LaqResult};
use num_traits::{Signed, Zero};
use std::collections::{BTreeMap, BTreeSet, HashSet};

/// Which variables are local to which side, for every partition of interest.
///
/// A partition is a cut point `c`: groups `< c` form A, the rest B.
#[derive(Clone, Debug, Default)]
pub struct Purity {
    groups_of: BTreeMap<VarId, BTreeSet<usize>>,
    cuts: Vec<usize>,
}

impl Purity {
    pub fn new(groups_of: BTreeMap<VarId, BTreeSet<usize>>, cuts: Vec<usize>) -> Self {
        Purity { groups_of, cuts }
    }

    /// A term is mixed when, for some partition, it has both an A-local and a
    /// B-local variable.
    pub fn is_mixed<'a>(&self, vars: impl IntoIterator<Item = &'a VarId>) -> bool {
        let spans: Vec<(usize, usize)> = vars
            .into_iter()
            .filter_map(|v| self.groups_of.get(v))
            .filter_map(|g| Some((*g.iter().next()?, *g.iter().next_back()?)))
            .collect();
        self.cuts.iter().any(|&c| {
            let a_local = spans.iter().any(|&(_, hi)| hi < c);
            let b_local = spans.iter().any(|&(lo, _)| lo >= c);
            a_local && b_local
        })
    }
}

#[derive(Clone, Debug)]
pub struct LazConfig {
    /// Set in interpolating mode.
    pub purity: Option<Purity>,
    pub max_depth: usize,
    pub max_leaves: usize,
}

impl Default for LazConfig {
    fn default() -> Self {
        LazConfig { purity: None, max_depth: 2, max_leaves: 16 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LazStats {
    pub checks: u64,
    pub branch_lemmas: u64,
    pub cut_lemmas: u64,
    pub split_lemmas: u64,
    pub strengthenings: u64,
    pub internal_bnb_proofs: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LemmaKind {
    Branch,
    Cut,
    Split,
}

/// A valid clause over inequalities. `¬(t ≤ 0)` is written `-t + 1 ≤ 0`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LemmaClause {
    pub atoms: Vec<Atom>,
    pub kind: LemmaKind,
}

#[derive(Clone, Debug)]
pub enum TheoryProof {
    Cut(LemmaProof),
    Bnb(BnbProof),
}

#[derive(Clone, Debug)]
pub enum LazResult {
    Sat(Model),
    Unsat { conflict: Vec<Atom>, proof: TheoryProof },
    NeedLemmas(Vec<LemmaClause>),
}

/// Farkas certificate as a chain of `Comb` steps over its premises.
pub fn farkas_to_cut(cert: &FarkasCert) -> CutProof {
    let mut p = CutProof::new();
    let items: Vec<(Rat, NodeId)> = cert
        .entries
        .iter()
        .map(|(c, _, a)| match a.rel {
            Rel::Eq => {
                let t = if c.is_positive() { a.term.clone() } else { a.term.neg() };
                (c.abs(), p.hyp_atom(a, t))
            }
            _ => (c.clone(), p.hyp_atom(a, a.term.clone())),
        })
        .collect();
    let r = p.weighted_sum(&items);
    p.set_root(r);
    p
}

pub fn is_integral(m: &Model) -> bool {
    m.values().all(|v| v.is_integer())
}

/// `(v - ⌊value⌋ ≤ 0) ∨ (-v + ⌊value⌋ + 1 ≤ 0)`.
pub fn branch_lemma(v: &VarId, value: &Rat) -> LemmaClause {
    assert!(!value.is_integer(), "branch_lemma needs a non-integral value");
    let n = floor(value);
    let left = normalize(&BnbProof::branch_atom(v, &n));
    LemmaClause { atoms: vec![left.clone(), left.negate_le()], kind: LemmaKind::Branch }
}

/// Pairs `t ≤ 0`, `-t ≤ 0` read as the equality `t = 0`, oriented with a
/// positive leading coefficient.
fn implied_equalities(constraints: &[Atom]) -> Vec<Atom> {
    let terms: HashSet<&LinTerm> = constraints.iter().filter(|a| a.rel == Rel::Le).map(|a| &a.term).collect();
    let mut out = Vec::new();
    for a in constraints {
        if a.rel != Rel::Le || a.term.is_constant() {
            continue;
        }
        let positive = a.term.leading().is_some_and(|(_, c)| c.is_positive());
        if positive && terms.contains(&a.term.neg()) {
            out.push(Atom::eq(a.term.clone()));
        }
    }
    out
}

/// Replaces hypotheses on implied equalities by the inequality of the same
/// orientation.
fn rewrite_implied(p: &CutProof, implied: &[Atom]) -> CutProof {
    if implied.is_empty() {
        return p.clone();
    }
    let nodes = p
        .nodes()
        .iter()
        .map(|n| match &n.rule {
            CutRule::Hyp(a) if implied.contains(a) => {
                CutNode { rule: CutRule::Hyp(Atom::le(n.term.clone())), term: n.term.clone() }
            }
            _ => n.clone(),
        })
        .collect();
    CutProof::from_nodes(nodes, p.root())
}

/// Equality elimination and tightening on top of a rationally feasible set.
fn equality_layer(constraints: &[Atom], stats: &mut LazStats) -> Option<LemmaProof> {
    let mut eqs: Vec<Atom> = constraints.iter().filter(|a| a.rel == Rel::Eq).cloned().collect();
    let genuine = eqs.len();
    let implied = implied_equalities(constraints);
    eqs.extend(implied.iter().cloned());
    if let DiophResult::Unsat(cert) = solve_eqs(&eqs) {
        let cut = rewrite_implied(&cut_proof_of_unsat_eqs(&cert), &implied);
        stats.strengthenings += 1;
        let pure = cert.coeffs.iter().all(|(_, i, _)| *i < genuine);
        return Some(LemmaProof { cut, eq_cert: pure.then_some(cert) });
    }
    let ineqs: Vec<Atom> =
        constraints.iter().filter(|a| a.rel == Rel::Le && !a.term.is_constant()).cloned().collect();
    let tightened = eliminate_and_tighten(&eqs, &ineqs).ok()?;
    if tightened.iter().all(|t| t.k.is_zero()) {
        return None;
    }
    let mut system = eqs.clone();
    system.extend(tightened.iter().map(|t| t.atom.clone()));
    let LaqResult::Unsat(cert) = check_laq(&system) else { return None };
    let mut p = CutProof::new();
    let mut items = Vec::new();
    for (c, idx, _) in &cert.entries {
        if *idx < eqs.len() {
            let e = &eqs[*idx];
            let t = if c.is_positive() { e.term.clone() } else { e.term.neg() };
            items.push((c.abs(), p.hyp_atom(e, t)));
        } else {
            let t = &tightened[idx - eqs.len()];
            if t.k.is_positive() {
                stats.strengthenings += 1;
            }
            items.push((c.clone(), p.import(&t.proof)));
        }
    }
    let r = p.weighted_sum(&items);
    p.set_root(r);
    Some(LemmaProof { cut: rewrite_implied(&p, &implied), eq_cert: None })
}

enum Layer {
    Unsat(LemmaProof),
    Model(Model),
}

fn layered(constraints: &[Atom], stats: &mut LazStats) -> Layer {
    stats.checks += 1;
    match check_laq(constraints) {
        LaqResult::Unsat(cert) => Layer::Unsat(LemmaProof { cut: farkas_to_cut(&cert), eq_cert: None }),
        LaqResult::Sat(m) => {
            if is_integral(&m) {
                return Layer::Model(m);
            }
            match equality_layer(constraints, stats) {
                Some(lp) => Layer::Unsat(lp),
                None => Layer::Model(m),
            }
        }
    }
}

/// Non-integral variable closest to an integer; ties by variable order.
fn branch_var(m: &Model) -> Option<(VarId, Rat)> {
    let mut best: Option<(Rat, &VarId, &Rat)> = None;
    for (v, x) in m {
        if x.is_integer() {
            continue;
        }
        let frac = x - rat_of(&floor(x));
        let dist = if frac < rat(1) - &frac { frac } else { rat(1) - frac };
        if best.as_ref().is_none_or(|(d, _, _)| dist < *d) {
            best = Some((dist, v, x));
        }
    }
    best.map(|(_, v, x)| (v.clone(), x.clone()))
}

struct Bnb<'a> {
    base: &'a [Atom],
    cfg: &'a LazConfig,
    leaves: usize,
    branched: Vec<(VarId, Int)>,
    sat: Option<Model>,
    root_model: Option<Model>,
}

impl Bnb<'_> {
    fn explore(&mut self, extra: &mut Vec<Atom>, depth: usize, stats: &mut LazStats) -> Option<BnbProof> {
        if self.leaves >= self.cfg.max_leaves || self.sat.is_some() {
            return None;
        }
        self.leaves += 1;
        let mut all = self.base.to_vec();
        all.extend(extra.iter().cloned());
        let m = match layered(&all, stats) {
            Layer::Unsat(lp) => return Some(BnbProof::Leaf(lp)),
            Layer::Model(m) => m,
        };
        if depth == 0 {
            self.root_model = Some(m.clone());
        }
        if is_integral(&m) {
            self.sat = Some(m);
            return None;
        }
        if depth >= self.cfg.max_depth {
            return None;
        }
        let (v, x) = branch_var(&m)?;
        let n = floor(&x);
        self.branched.push((v.clone(), n.clone()));
        let atom = normalize(&BnbProof::branch_atom(&v, &n));
        extra.push(atom.clone());
        let left = self.explore(extra, depth + 1, stats);
        extra.pop();
        extra.push(atom.negate_le());
        let right = self.explore(extra, depth + 1, stats);
        extra.pop();
        Some(BnbProof::Branch { var: v, n, left: Box::new(left?), right: Box::new(right?) })
    }
}

/// Cut from the defining constraints of a vertex, or in interpolating mode a
/// split on a defining inequality when the cut would be AB-mixed.
pub fn cut_or_split_lemma(constraints: &[Atom], model: &Model, purity: Option<&Purity>) -> Option<LemmaClause> {
    let defining: Vec<&Atom> = constraints
        .iter()
        .filter(|a| matches!(a.rel, Rel::Le | Rel::Eq) && !a.term.is_constant())
        .filter(|a| a.term.vars().all(|v| model.contains_key(v)) && a.term.eval(model).is_zero())
        .collect();
    let d_e: Vec<Atom> = defining.iter().map(|a| Atom::eq(a.term.clone())).collect();
    let DiophResult::Unsat(cert) = solve_eqs(&d_e) else { return None };
    let g = cert.gcd();
    if g.is_zero() {
        return None;
    }
    let gr = rat_of(&g);
    let s = cert.root.without_constant().scale(&(rat(1) / &gr));
    let m = crate::arith::ceil(&(-cert.root.constant() / &gr));
    let present = |a: &Atom| {
        let a = normalize(a);
        constraints.iter().any(|c| *c == a || (a.rel == Rel::Le && *c == a.negate_le()))
    };
    let mut below = s.clone();
    below.set_constant(rat_of(&(-&m + 1)));
    let below = normalize(&Atom::le(below));
    let cut = LemmaClause { atoms: vec![below.clone(), below.negate_le()], kind: LemmaKind::Cut };
    let mixed = purity.is_some_and(|p| p.is_mixed(s.vars()));
    if !mixed && !present(&below) {
        return Some(cut);
    }
    let mut candidates: Vec<&Atom> = defining.iter().copied().filter(|a| a.rel == Rel::Le).collect();
    candidates.sort_by(|a, b| a.term.num_vars().cmp(&b.term.num_vars()).then_with(|| a.term.cmp(&b.term)));
    let split = |t: &Atom| {
        let mut plus1 = t.term.clone();
        plus1.add_constant(&rat(1));
        let plus1 = normalize(&Atom::le(plus1));
        LemmaClause { atoms: vec![t.negate_le(), plus1.clone(), plus1.negate_le()], kind: LemmaKind::Split }
    };
    // Prefer a split that is not already decided by the current atoms.
    candidates
        .iter()
        .map(|t| split(t))
        .find(|l| !present(&l.atoms[1]))
        .or_else(|| candidates.first().map(|t| split(t)))
}

/// Runs the layered pipeline on a set of normalized atoms.
pub fn check_laz(constraints: &[Atom], cfg: &LazConfig, stats: &mut LazStats) -> LazResult {
    if let Some(f) = constraints.iter().find(|a| a.is_false()) {
        let mut p = CutProof::new();
        let r = p.hyp_atom(f, f.term.clone());
        p.set_root(r);
        return LazResult::Unsat { conflict: vec![f.clone()], proof: TheoryProof::Cut(LemmaProof { cut: p, eq_cert: None }) };
    }
    let base: Vec<Atom> = constraints.iter().filter(|a| !a.is_true()).cloned().collect();
    let mut bnb = Bnb { base: &base, cfg, leaves: 0, branched: Vec::new(), sat: None, root_model: None };
    let tree = bnb.explore(&mut Vec::new(), 0, stats);
    if let Some(m) = bnb.sat {
        return LazResult::Sat(m);
    }
    if let Some(tree) = tree {
        return match tree {
            BnbProof::Leaf(lp) => LazResult::Unsat { conflict: lp.cut.hyps(), proof: TheoryProof::Cut(lp) },
            tree => {
                stats.internal_bnb_proofs += 1;
                LazResult::Unsat { conflict: tree.conflict_set(), proof: TheoryProof::Bnb(tree) }
            }
        };
    }
    let root = bnb.root_model.expect("open search has a root model");
    let mut lemmas: Vec<LemmaClause> = Vec::new();
    let mut push = |l: LemmaClause, stats: &mut LazStats| {
        if lemmas.iter().any(|k| k.atoms == l.atoms) {
            return;
        }
        match l.kind {
            LemmaKind::Branch => stats.branch_lemmas += 1,
            LemmaKind::Cut => stats.cut_lemmas += 1,
            LemmaKind::Split => stats.split_lemmas += 1,
        }
        lemmas.push(l);
    };
    if let Some(l) = cut_or_split_lemma(&base, &root, cfg.purity.as_ref()) {
        push(l, stats);
    }
    for (v, x) in &root {
        if !x.is_integer() {
            push(branch_lemma(v, x), stats);
        }
    }
    for (v, n) in &bnb.branched {
        let left = normalize(&BnbProof::branch_atom(v, n));
        push(LemmaClause { atoms: vec![left.clone(), left.negate_le()], kind: LemmaKind::Branch }, stats);
    }
    LazResult::NeedLemmas(lemmas)
}
