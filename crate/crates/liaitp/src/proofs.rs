//! Cutting-plane and resolution proofs with independent checkers.
//!
//! Checking only uses `arith`; nothing here looks at solver state.

use crate::arith::{ceil, normalize, rat, rat_of, Atom, Int, LinTerm, Rat, Rel, VarId};
use crate::dioph::UnsatLinComb;
use num_traits::{One, Signed, Zero};
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

pub type NodeId = usize;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CutRule {
    /// A hypothesis. For an equality, the node term may be either orientation.
    Hyp(Atom),
    Comb { c1: Rat, left: NodeId, c2: Rat, right: NodeId },
    /// Rounds the constant up to a multiple of `d`; `k` is the amount added.
    Strengthen { child: NodeId, d: Int, k: Rat },
    Division { child: NodeId, d: Int },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CutNode {
    pub rule: CutRule,
    /// The derived inequality `term ≤ 0`.
    pub term: LinTerm,
}

/// Arena-backed DAG of cutting-plane inferences. Children always precede
/// their parents.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CutProof {
    nodes: Vec<CutNode>,
    root: Option<NodeId>,
}

impl CutProof {
    pub fn new() -> Self {
        CutProof::default()
    }

    /// Assembles a proof from raw nodes without checking anything.
    pub fn from_nodes(nodes: Vec<CutNode>, root: NodeId) -> Self {
        CutProof { nodes, root: Some(root) }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[CutNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &CutNode {
        &self.nodes[id]
    }

    pub fn term(&self, id: NodeId) -> &LinTerm {
        &self.nodes[id].term
    }

    pub fn root(&self) -> NodeId {
        self.root.expect("proof has no root")
    }

    pub fn root_term(&self) -> &LinTerm {
        self.term(self.root())
    }

    pub fn set_root(&mut self, id: NodeId) {
        assert!(id < self.nodes.len());
        self.root = Some(id);
    }

    fn push(&mut self, rule: CutRule, term: LinTerm) -> NodeId {
        self.nodes.push(CutNode { rule, term });
        let id = self.nodes.len() - 1;
        self.root = Some(id);
        id
    }

    /// Hypothesis `t ≤ 0`, taken as is.
    pub fn hyp(&mut self, t: LinTerm) -> NodeId {
        self.push(CutRule::Hyp(Atom::le(t.clone())), t)
    }

    /// Hypothesis from an atom; an equality is used in orientation `t`.
    pub fn hyp_atom(&mut self, a: &Atom, t: LinTerm) -> NodeId {
        match a.rel {
            Rel::Le => assert_eq!(a.term, t),
            Rel::Eq => assert!(a.term == t || a.term.neg() == t),
            Rel::Mod(_) => panic!("modular atoms cannot be hypotheses"),
        }
        self.push(CutRule::Hyp(a.clone()), t)
    }

    pub fn comb(&mut self, c1: &Rat, left: NodeId, c2: &Rat, right: NodeId) -> NodeId {
        assert!(c1.is_positive() && c2.is_positive(), "Comb needs positive coefficients");
        let mut t = self.nodes[left].term.scale(c1);
        t.add_scaled(c2, &self.nodes[right].term);
        self.push(CutRule::Comb { c1: c1.clone(), left, c2: c2.clone(), right }, t)
    }

    pub fn strengthen(&mut self, child: NodeId, d: &Int) -> NodeId {
        let t = &self.nodes[child].term;
        let c = t.constant().clone();
        let dr = rat_of(d);
        let k = rat_of(&(ceil(&(&c / &dr)) * d)) - &c;
        let mut derived = t.clone();
        derived.add_constant(&k);
        self.push(CutRule::Strengthen { child, d: d.clone(), k }, derived)
    }

    pub fn division(&mut self, child: NodeId, d: &Int) -> NodeId {
        let t = &self.nodes[child].term;
        let dr = rat_of(d);
        let mut derived = t.without_constant().scale(&(Rat::one() / &dr));
        derived.set_constant(rat_of(&ceil(&(t.constant() / &dr))));
        self.push(CutRule::Division { child, d: d.clone() }, derived)
    }

    /// Positive combination `Σ w_i·node_i` as a chain of `Comb` steps.
    pub fn weighted_sum(&mut self, items: &[(Rat, NodeId)]) -> NodeId {
        assert!(!items.is_empty(), "empty combination");
        if items.len() == 1 {
            let (w, n) = &items[0];
            if w.is_one() {
                return *n;
            }
            let half = w / rat(2);
            return self.comb(&half, *n, &half, *n);
        }
        let mut acc = self.comb(&items[0].0, items[0].1, &items[1].0, items[1].1);
        for (w, n) in &items[2..] {
            acc = self.comb(&rat(1), acc, w, *n);
        }
        acc
    }

    /// Copies another proof into this arena and returns its root here.
    pub fn import(&mut self, other: &CutProof) -> NodeId {
        let off = self.nodes.len();
        for n in &other.nodes {
            let rule = match &n.rule {
                CutRule::Hyp(a) => CutRule::Hyp(a.clone()),
                CutRule::Comb { c1, left, c2, right } => {
                    CutRule::Comb { c1: c1.clone(), left: left + off, c2: c2.clone(), right: right + off }
                }
                CutRule::Strengthen { child, d, k } => CutRule::Strengthen { child: child + off, d: d.clone(), k: k.clone() },
                CutRule::Division { child, d } => CutRule::Division { child: child + off, d: d.clone() },
            };
            self.nodes.push(CutNode { rule, term: n.term.clone() });
        }
        let r = other.root() + off;
        self.root = Some(r);
        r
    }

    /// Distinct hypothesis atoms reachable from the root.
    pub fn hyps(&self) -> Vec<Atom> {
        let mut out = BTreeSet::new();
        for id in self.reachable() {
            if let CutRule::Hyp(a) = &self.nodes[id].rule {
                out.insert(a.clone());
            }
        }
        out.into_iter().collect()
    }

    /// Node ids reachable from the root, in increasing order.
    pub fn reachable(&self) -> Vec<NodeId> {
        let Some(root) = self.root else { return Vec::new() };
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![root];
        while let Some(id) = stack.pop() {
            if seen[id] {
                continue;
            }
            seen[id] = true;
            match &self.nodes[id].rule {
                CutRule::Hyp(_) => {}
                CutRule::Comb { left, right, .. } => {
                    stack.push(*left);
                    stack.push(*right);
                }
                CutRule::Strengthen { child, .. } | CutRule::Division { child, .. } => stack.push(*child),
            }
        }
        (0..self.nodes.len()).filter(|&i| seen[i]).collect()
    }

    /// Number of Strengthen/Division nodes on the worst root-to-leaf path.
    pub fn max_roundings_per_branch(&self) -> usize {
        let mut depth = vec![0usize; self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            depth[i] = match &n.rule {
                CutRule::Hyp(_) => 0,
                CutRule::Comb { left, right, .. } => depth[*left].max(depth[*right]),
                CutRule::Strengthen { child, .. } | CutRule::Division { child, .. } => depth[*child] + 1,
            };
        }
        self.root.map_or(0, |r| depth[r])
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum CutError {
    #[error("node {0}: hypothesis not among the premises")]
    UnknownHyp(NodeId),
    #[error("node {0}: child index does not precede the node")]
    BadChild(NodeId),
    #[error("node {0}: combination coefficients must be positive")]
    NonPositive(NodeId),
    #[error("node {0}: derived term does not recompute")]
    Arithmetic(NodeId),
    #[error("node {0}: divisor does not divide the variable coefficients or k is wrong")]
    Divisibility(NodeId),
    #[error("root is not a positive integer constant")]
    RootNotContradiction,
    #[error("proof is empty")]
    Empty,
}

impl CutError {
    pub fn node(&self) -> Option<NodeId> {
        match self {
            CutError::UnknownHyp(n)
            | CutError::BadChild(n)
            | CutError::NonPositive(n)
            | CutError::Arithmetic(n)
            | CutError::Divisibility(n) => Some(*n),
            _ => None,
        }
    }
}

fn divides_vars(d: &Int, t: &LinTerm) -> bool {
    d.is_positive()
        && t.coeffs().all(|(_, a)| a.is_integer() && (a.numer() % d).is_zero())
}

/// Checks every node reachable from the root. With `refutation`, the root
/// must be `c ≤ 0` for a positive integer `c`.
pub fn check_cut_proof(p: &CutProof, hypotheses: &[Atom], refutation: bool) -> Result<(), CutError> {
    let root = p.root.ok_or(CutError::Empty)?;
    let hyp_set: BTreeSet<Atom> = hypotheses.iter().map(normalize).collect();
    for id in p.reachable() {
        let n = &p.nodes[id];
        let child_ok = |c: &NodeId| *c < id;
        match &n.rule {
            CutRule::Hyp(a) => {
                let known = hyp_set.contains(&normalize(a)) || hypotheses.contains(a);
                if !known {
                    return Err(CutError::UnknownHyp(id));
                }
                let ok = match a.rel {
                    Rel::Le => n.term == a.term,
                    Rel::Eq => n.term == a.term || n.term == a.term.neg(),
                    Rel::Mod(_) => false,
                };
                if !ok {
                    return Err(CutError::Arithmetic(id));
                }
            }
            CutRule::Comb { c1, left, c2, right } => {
                if !child_ok(left) || !child_ok(right) {
                    return Err(CutError::BadChild(id));
                }
                if !c1.is_positive() || !c2.is_positive() {
                    return Err(CutError::NonPositive(id));
                }
                let mut t = p.nodes[*left].term.scale(c1);
                t.add_scaled(c2, &p.nodes[*right].term);
                if t != n.term {
                    return Err(CutError::Arithmetic(id));
                }
            }
            CutRule::Strengthen { child, d, k } => {
                if !child_ok(child) {
                    return Err(CutError::BadChild(id));
                }
                let t = &p.nodes[*child].term;
                if !divides_vars(d, t) {
                    return Err(CutError::Divisibility(id));
                }
                let c = t.constant();
                let expect = rat_of(&(ceil(&(c / rat_of(d))) * d)) - c;
                if *k != expect {
                    return Err(CutError::Divisibility(id));
                }
                let mut derived = t.clone();
                derived.add_constant(k);
                if derived != n.term {
                    return Err(CutError::Arithmetic(id));
                }
            }
            CutRule::Division { child, d } => {
                if !child_ok(child) {
                    return Err(CutError::BadChild(id));
                }
                let t = &p.nodes[*child].term;
                if !divides_vars(d, t) {
                    return Err(CutError::Divisibility(id));
                }
                let dr = rat_of(d);
                let mut derived = t.without_constant().scale(&(Rat::one() / &dr));
                derived.set_constant(rat_of(&ceil(&(t.constant() / &dr))));
                if derived != n.term {
                    return Err(CutError::Arithmetic(id));
                }
            }
        }
    }
    if refutation {
        let t = &p.nodes[root].term;
        if !t.is_constant() || !t.constant().is_integer() || !t.constant().is_positive() {
            return Err(CutError::RootNotContradiction);
        }
    }
    Ok(())
}

/// Turns an equality certificate into a cutting-plane refutation.
///
/// The oriented equalities sum to `R ≤ 0`; rounding by the coefficient gcd and
/// adding the reversed sum leaves a positive constant.
pub fn cut_proof_of_unsat_eqs(cert: &UnsatLinComb) -> CutProof {
    let mut p = CutProof::new();
    let build = |p: &mut CutProof, sign: i64| -> NodeId {
        let items: Vec<(Rat, NodeId)> = cert
            .coeffs
            .iter()
            .map(|(c, _, a)| {
                let s = if c.is_positive() { sign } else { -sign };
                let t = if s > 0 { a.term.clone() } else { a.term.neg() };
                (rat_of(&c.abs()), p.hyp_atom(a, t))
            })
            .collect();
        p.weighted_sum(&items)
    };
    let g = cert.gcd();
    let c = cert.root.constant().clone();
    if g.is_zero() {
        let r = build(&mut p, if c.is_positive() { 1 } else { -1 });
        p.set_root(r);
        return p;
    }
    let forward = build(&mut p, 1);
    let s = p.strengthen(forward, &g);
    let backward = build(&mut p, -1);
    let r = p.comb(&rat(1), s, &rat(1), backward);
    p.set_root(r);
    p
}

// ---------------------------------------------------------------------------
// Resolution proofs

/// Literal over the atom table: `atom << 1 | negated`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Lit(u32);

impl Lit {
    pub fn new(atom: u32, positive: bool) -> Lit {
        Lit(atom << 1 | u32::from(!positive))
    }

    pub fn atom(self) -> u32 {
        self.0 >> 1
    }

    pub fn is_pos(self) -> bool {
        self.0 & 1 == 0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn from_index(i: usize) -> Lit {
        Lit(i as u32)
    }
}

impl std::ops::Not for Lit {
    type Output = Lit;
    fn not(self) -> Lit {
        Lit(self.0 ^ 1)
    }
}

impl fmt::Debug for Lit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", if self.is_pos() { "" } else { "-" }, self.atom())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum AtomDef {
    Theory(Atom),
    /// A Boolean variable; Tseitin variables remember the group they encode.
    Bool { name: String, tseitin_group: Option<usize> },
}

/// Atom ids shared by the CNF, the solver and its proofs. An inequality and
/// its integer negation are stored once, as a variable and its complement.
#[derive(Clone, Debug, Default)]
pub struct AtomTable {
    defs: Vec<AtomDef>,
    theory: HashMap<Atom, u32>,
    bools: HashMap<String, u32>,
}

impl AtomTable {
    pub fn new() -> Self {
        AtomTable::default()
    }

    pub fn len(&self) -> usize {
        self.defs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.defs.is_empty()
    }

    pub fn get(&self, id: u32) -> &AtomDef {
        &self.defs[id as usize]
    }

    pub fn defs(&self) -> &[AtomDef] {
        &self.defs
    }

    /// Literal whose truth means `a` holds. Constant atoms are not allowed.
    pub fn lit(&mut self, a: &Atom) -> Lit {
        let a = normalize(a);
        assert!(a.truth().is_none(), "constant atoms have no literal");
        if let Some(&id) = self.theory.get(&a) {
            return Lit::new(id, true);
        }
        if a.rel == Rel::Le {
            if let Some(&id) = self.theory.get(&a.negate_le()) {
                return Lit::new(id, false);
            }
        }
        let id = self.defs.len() as u32;
        self.defs.push(AtomDef::Theory(a.clone()));
        self.theory.insert(a, id);
        Lit::new(id, true)
    }

    pub fn find_lit(&self, a: &Atom) -> Option<Lit> {
        let a = normalize(a);
        if let Some(&id) = self.theory.get(&a) {
            return Some(Lit::new(id, true));
        }
        if a.rel == Rel::Le {
            if let Some(&id) = self.theory.get(&a.negate_le()) {
                return Some(Lit::new(id, false));
            }
        }
        None
    }

    pub fn bool_var(&mut self, name: &str, tseitin_group: Option<usize>) -> u32 {
        if let Some(&id) = self.bools.get(name) {
            return id;
        }
        let id = self.defs.len() as u32;
        self.defs.push(AtomDef::Bool { name: name.to_string(), tseitin_group });
        self.bools.insert(name.to_string(), id);
        id
    }

    /// The theory constraint a literal asserts, if it has one.
    pub fn theory_form(&self, l: Lit) -> Option<Atom> {
        match self.get(l.atom()) {
            AtomDef::Theory(a) if l.is_pos() => Some(a.clone()),
            AtomDef::Theory(a) if a.rel == Rel::Le => Some(a.negate_le()),
            _ => None,
        }
    }

    pub fn is_theory(&self, id: u32) -> bool {
        matches!(self.get(id), AtomDef::Theory(_))
    }

    pub fn show_lit(&self, l: Lit) -> String {
        let body = match self.get(l.atom()) {
            AtomDef::Theory(a) => format!("({a})"),
            AtomDef::Bool { name, .. } => name.clone(),
        };
        if l.is_pos() {
            body
        } else {
            format!("¬{body}")
        }
    }
}

/// A theory lemma justification: the negated clause is refuted by `cut`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LemmaProof {
    pub cut: CutProof,
    /// Present when the conflict is a pure equality conflict.
    pub eq_cert: Option<UnsatLinComb>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Origin {
    Group(usize),
    TLemma(Arc<LemmaProof>),
    /// A valid arithmetic case split (branch, cut or defining-constraint split).
    BnbLemma,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ResNode {
    Leaf { clause: Vec<Lit>, origin: Option<Origin> },
    /// `left` holds the pivot positively, `right` negatively.
    Res { pivot: u32, left: usize, right: usize, clause: Vec<Lit> },
}

impl ResNode {
    pub fn clause(&self) -> &[Lit] {
        match self {
            ResNode::Leaf { clause, .. } | ResNode::Res { clause, .. } => clause,
        }
    }
}

/// Resolution DAG; children precede their parents.
#[derive(Clone, Debug, Default)]
pub struct ResProof {
    pub atoms: AtomTable,
    pub nodes: Vec<ResNode>,
    pub root: usize,
}

pub fn canonical_clause(lits: &[Lit]) -> Vec<Lit> {
    let mut c = lits.to_vec();
    c.sort();
    c.dedup();
    c
}

pub fn resolvent(pivot: u32, left: &[Lit], right: &[Lit]) -> Vec<Lit> {
    let p = Lit::new(pivot, true);
    let mut out: Vec<Lit> =
        left.iter().copied().filter(|&l| l != p).chain(right.iter().copied().filter(|&l| l != !p)).collect();
    out.sort();
    out.dedup();
    out
}

impl ResProof {
    pub fn new(atoms: AtomTable) -> Self {
        ResProof { atoms, nodes: Vec::new(), root: 0 }
    }

    pub fn leaf(&mut self, clause: &[Lit], origin: Origin) -> usize {
        self.nodes.push(ResNode::Leaf { clause: canonical_clause(clause), origin: Some(origin) });
        self.root = self.nodes.len() - 1;
        self.root
    }

    /// Resolves on `pivot`; the premise order is fixed up automatically.
    pub fn resolve(&mut self, pivot: u32, a: usize, b: usize) -> usize {
        let p = Lit::new(pivot, true);
        let (left, right) = if self.nodes[a].clause().contains(&p) { (a, b) } else { (b, a) };
        let clause = resolvent(pivot, self.nodes[left].clause(), self.nodes[right].clause());
        self.nodes.push(ResNode::Res { pivot, left, right, clause });
        self.root = self.nodes.len() - 1;
        self.root
    }

    pub fn root_clause(&self) -> &[Lit] {
        self.nodes[self.root].clause()
    }

    pub fn reachable(&self) -> Vec<usize> {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            if std::mem::replace(&mut seen[id], true) {
                continue;
            }
            if let ResNode::Res { left, right, .. } = &self.nodes[id] {
                stack.push(*left);
                stack.push(*right);
            }
        }
        (0..self.nodes.len()).filter(|&i| seen[i]).collect()
    }

    /// Theory lemma leaves reachable from the root.
    pub fn lemma_leaves(&self) -> Vec<(usize, Arc<LemmaProof>)> {
        self.reachable()
            .into_iter()
            .filter_map(|i| match &self.nodes[i] {
                ResNode::Leaf { origin: Some(Origin::TLemma(p)), .. } => Some((i, p.clone())),
                _ => None,
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ResError {
    #[error("node {0}: leaf has no origin")]
    MissingOrigin(usize),
    #[error("node {0}: premises do not contain the pivot with the required signs")]
    PivotSign(usize),
    #[error("node {0}: stored resolvent differs from the computed one")]
    Resolvent(usize),
    #[error("node {0}: child index does not precede the node")]
    BadChild(usize),
    #[error("node {0}: theory lemma does not check: {1}")]
    Lemma(usize, CutError),
    #[error("node {0}: theory lemma mentions a literal without an arithmetic negation")]
    LemmaLiteral(usize),
    #[error("node {0}: equality certificate does not match the lemma")]
    EqCert(usize),
    #[error("node {0}: case-split lemma is not a valid split")]
    Split(usize),
    #[error("node {0}: clause has duplicate or unsorted literals")]
    Clause(usize),
    #[error("root clause is not empty")]
    NotRefutation,
}

/// Hypotheses refuted by a theory lemma: the negations of its literals.
pub fn lemma_hypotheses(atoms: &AtomTable, clause: &[Lit]) -> Option<Vec<Atom>> {
    clause.iter().map(|&l| atoms.theory_form(!l)).collect()
}

fn check_lemma(atoms: &AtomTable, clause: &[Lit], lp: &LemmaProof, id: usize) -> Result<(), ResError> {
    let hyps = lemma_hypotheses(atoms, clause).ok_or(ResError::LemmaLiteral(id))?;
    check_cut_proof(&lp.cut, &hyps, true).map_err(|e| ResError::Lemma(id, e))?;
    if let Some(cert) = &lp.eq_cert {
        if !cert.is_valid() || !cert.coeffs.iter().all(|(_, _, a)| hyps.contains(a)) {
            return Err(ResError::EqCert(id));
        }
    }
    Ok(())
}

/// Valid integer case splits: two inequalities whose terms add up to 1, or
/// `¬(t ≤ 0) ∨ (t + 1 ≤ 0) ∨ (-t ≤ 0)`.
pub fn is_valid_split(atoms: &AtomTable, clause: &[Lit]) -> bool {
    let forms: Option<Vec<Atom>> = clause.iter().map(|&l| atoms.theory_form(l)).collect();
    let Some(forms) = forms else { return false };
    if forms.iter().any(|a| a.rel != Rel::Le || !a.term.is_integral()) {
        return false;
    }
    let sums_to_one = |a: &Atom, b: &Atom| a.term.plus(&b.term) == LinTerm::constant_term(rat(1));
    for (i, a) in forms.iter().enumerate() {
        for b in &forms[i + 1..] {
            if sums_to_one(a, b) {
                return true;
            }
        }
    }
    false
}

/// Checks every node reachable from the root.
pub fn check_res_proof(p: &ResProof) -> Result<(), ResError> {
    for id in p.reachable() {
        match &p.nodes[id] {
            ResNode::Leaf { clause, origin } => {
                if canonical_clause(clause) != *clause {
                    return Err(ResError::Clause(id));
                }
                match origin {
                    None => return Err(ResError::MissingOrigin(id)),
                    Some(Origin::Group(_)) => {}
                    Some(Origin::TLemma(lp)) => check_lemma(&p.atoms, clause, lp, id)?,
                    Some(Origin::BnbLemma) => {
                        if !is_valid_split(&p.atoms, clause) {
                            return Err(ResError::Split(id));
                        }
                    }
                }
            }
            ResNode::Res { pivot, left, right, clause } => {
                if *left >= id || *right >= id {
                    return Err(ResError::BadChild(id));
                }
                let pl = Lit::new(*pivot, true);
                if !p.nodes[*left].clause().contains(&pl) || !p.nodes[*right].clause().contains(&!pl) {
                    return Err(ResError::PivotSign(id));
                }
                if resolvent(*pivot, p.nodes[*left].clause(), p.nodes[*right].clause()) != *clause {
                    return Err(ResError::Resolvent(id));
                }
            }
        }
    }
    Ok(())
}

/// Structural check plus an empty root clause.
pub fn check_refutation(p: &ResProof) -> Result<(), ResError> {
    check_res_proof(p)?;
    if !p.root_clause().is_empty() {
        return Err(ResError::NotRefutation);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Branch-and-bound proofs

/// Internal branch-and-bound tree. The left child assumes `v - n ≤ 0`, the
/// right child `-v + n + 1 ≤ 0`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BnbProof {
    Leaf(LemmaProof),
    Branch { var: VarId, n: Int, left: Box<BnbProof>, right: Box<BnbProof> },
}

impl BnbProof {
    /// The branch atom `v - n ≤ 0`; its integer negation is the right label.
    pub fn branch_atom(var: &VarId, n: &Int) -> Atom {
        let mut t = LinTerm::var(var.clone());
        t.set_constant(-rat_of(n));
        Atom::le(t)
    }

    pub fn leaves(&self) -> Vec<&LemmaProof> {
        match self {
            BnbProof::Leaf(l) => vec![l],
            BnbProof::Branch { left, right, .. } => {
                let mut v = left.leaves();
                v.extend(right.leaves());
                v
            }
        }
    }

    /// `(var, n)` for every internal node.
    pub fn branches(&self) -> Vec<(VarId, Int)> {
        match self {
            BnbProof::Leaf(_) => Vec::new(),
            BnbProof::Branch { var, n, left, right } => {
                let mut v = vec![(var.clone(), n.clone())];
                v.extend(left.branches());
                v.extend(right.branches());
                v
            }
        }
    }

    /// Asserted atoms used by the leaves, excluding the branch atoms on their
    /// paths.
    pub fn conflict_set(&self) -> Vec<Atom> {
        fn go(p: &BnbProof, path: &mut Vec<Atom>, out: &mut BTreeSet<Atom>) {
            match p {
                BnbProof::Leaf(l) => {
                    for h in l.cut.hyps() {
                        if !path.contains(&normalize(&h)) {
                            out.insert(h);
                        }
                    }
                }
                BnbProof::Branch { var, n, left, right } => {
                    let a = normalize(&BnbProof::branch_atom(var, n));
                    path.push(a.clone());
                    go(left, path, out);
                    path.pop();
                    path.push(a.negate_le());
                    go(right, path, out);
                    path.pop();
                }
            }
        }
        let mut out = BTreeSet::new();
        go(self, &mut Vec::new(), &mut out);
        out.into_iter().collect()
    }

    /// Checks every leaf against `asserted` plus the branch atoms on its path.
    pub fn check(&self, asserted: &[Atom]) -> Result<(), CutError> {
        match self {
            BnbProof::Leaf(l) => check_cut_proof(&l.cut, asserted, true),
            BnbProof::Branch { var, n, left, right } => {
                let a = normalize(&BnbProof::branch_atom(var, n));
                let mut h = asserted.to_vec();
                h.push(a.clone());
                left.check(&h)?;
                h.pop();
                h.push(a.negate_le());
                right.check(&h)
            }
        }
    }
}

/// Appends the resolution form of a branch-and-bound proof to `out` and
/// returns its root, whose clause negates the conflict set.
///
/// The two branch labels are complementary literals of a single atom, so the
/// case split itself is a tautology and each internal node becomes one
/// resolution step on that atom. A subtree that never uses its label is
/// returned as is.
pub fn bnb_to_resolution_into(p: &BnbProof, out: &mut ResProof) -> usize {
    match p {
        BnbProof::Leaf(l) => {
            let clause: Vec<Lit> = l.cut.hyps().iter().map(|h| !out.atoms.lit(h)).collect();
            out.leaf(&clause, Origin::TLemma(Arc::new(l.clone())))
        }
        BnbProof::Branch { var, n, left, right } => {
            let a = out.atoms.lit(&BnbProof::branch_atom(var, n));
            let l = bnb_to_resolution_into(left, out);
            let r = bnb_to_resolution_into(right, out);
            // left refutes `a`, so its clause carries ¬a; right carries a.
            let l_uses = out.nodes[l].clause().contains(&!a);
            let r_uses = out.nodes[r].clause().contains(&a);
            match (l_uses, r_uses) {
                (true, true) => out.resolve(a.atom(), l, r),
                (false, _) => l,
                (true, false) => r,
            }
        }
    }
}

pub fn bnb_to_resolution(p: &BnbProof) -> ResProof {
    let mut out = ResProof::new(AtomTable::new());
    let root = bnb_to_resolution_into(p, &mut out);
    out.root = root;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::int;
    use crate::simplex::{check_laq, LaqResult};

    fn lt(terms: &[(i64, &str)], c: i64) -> LinTerm {
        LinTerm::from_ints(terms, c)
    }

    fn le(terms: &[(i64, &str)], c: i64) -> Atom {
        Atom::le(lt(terms, c))
    }

    fn eq(terms: &[(i64, &str)], c: i64) -> Atom {
        Atom::eq(lt(terms, c))
    }

    /// P_LA(Z): both tightened inequalities of the elimination example summed.
    fn p_laz() -> (CutProof, Vec<Atom>) {
        let e1 = eq(&[(2, "v1"), (-5, "v3")], 0);
        let e2 = eq(&[(1, "v2"), (-3, "v4")], 0);
        let i1 = le(&[(-2, "v1"), (-1, "v2"), (-1, "v3")], 7);
        let i2 = le(&[(2, "v1"), (1, "v2"), (1, "v3")], -8);
        let mut p = CutProof::new();
        // P1 := Strengthen(Comb(5·(-e1), Comb(e2, i1)), 3)
        let h_e2 = p.hyp_atom(&e2, e2.term.clone());
        let h_i1 = p.hyp(i1.term.clone());
        let c = p.comb(&rat(1), h_e2, &rat(1), h_i1);
        let h_e1 = p.hyp_atom(&e1, e1.term.neg());
        let c = p.comb(&rat(5), h_e1, &rat(1), c);
        let p1 = p.strengthen(c, &int(3));
        assert_eq!(*p.term(p1), lt(&[(-12, "v1"), (24, "v3"), (-3, "v4")], 9));
        // P2 := Strengthen(Comb(5·e1, Comb(-e2, i2)), 3)
        let h_e2n = p.hyp_atom(&e2, e2.term.neg());
        let h_i2 = p.hyp(i2.term.clone());
        let c = p.comb(&rat(1), h_e2n, &rat(1), h_i2);
        let h_e1n = p.hyp_atom(&e1, e1.term.clone());
        let c = p.comb(&rat(5), h_e1n, &rat(1), c);
        let p2 = p.strengthen(c, &int(3));
        assert_eq!(*p.term(p2), lt(&[(12, "v1"), (-24, "v3"), (3, "v4")], -6));
        let r = p.comb(&rat(1), p1, &rat(1), p2);
        p.set_root(r);
        (p, vec![e1, e2, i1, i2])
    }

    #[test]
    fn elimination_example_proof_checks() {
        let (p, hyps) = p_laz();
        assert_eq!(check_cut_proof(&p, &hyps, true), Ok(()));
        assert_eq!(*p.root_term(), LinTerm::constant_term(rat(3)));
        assert_eq!(p.max_roundings_per_branch(), 1);
    }

    #[test]
    fn wrong_strengthen_amount_is_rejected() {
        let (p, hyps) = p_laz();
        let mut nodes = p.nodes().to_vec();
        let pos = nodes.iter().position(|n| matches!(n.rule, CutRule::Strengthen { .. })).unwrap();
        if let CutRule::Strengthen { k, .. } = &mut nodes[pos].rule {
            *k += rat(3);
        }
        nodes[pos].term.add_constant(&rat(3));
        let bad = CutProof::from_nodes(nodes, p.root());
        assert_eq!(check_cut_proof(&bad, &hyps, false), Err(CutError::Divisibility(pos)));
    }

    #[test]
    fn trivial_root_is_not_a_refutation() {
        let a = le(&[(1, "x")], 0);
        let mut p = CutProof::new();
        let h = p.hyp(a.term.clone());
        let h2 = p.hyp(a.term.neg());
        let r = p.comb(&rat(1), h, &rat(1), h2);
        p.set_root(r);
        let hyps = [a.clone(), le(&[(-1, "x")], 0)];
        assert_eq!(check_cut_proof(&p, &hyps, false), Ok(()));
        assert_eq!(check_cut_proof(&p, &hyps, true), Err(CutError::RootNotContradiction));
    }

    #[test]
    fn unknown_hypothesis_is_rejected() {
        let mut p = CutProof::new();
        p.hyp(lt(&[], 1));
        assert_eq!(check_cut_proof(&p, &[], true), Err(CutError::UnknownHyp(0)));
    }

    #[test]
    fn division_rounds_constant() {
        let mut p = CutProof::new();
        let h = p.hyp(lt(&[(2, "x"), (4, "y")], -3));
        let d = p.division(h, &int(2));
        assert_eq!(*p.term(d), lt(&[(1, "x"), (2, "y")], -1));
        assert!(check_cut_proof(&p, &[le(&[(2, "x"), (4, "y")], -3)], false).is_ok());
        let mut q = CutProof::new();
        let h = q.hyp(lt(&[(2, "x"), (3, "y")], 0));
        q.division(h, &int(2));
        assert_eq!(check_cut_proof(&q, &[le(&[(2, "x"), (3, "y")], 0)], false), Err(CutError::Divisibility(1)));
    }

    #[test]
    fn equality_certificate_becomes_refutation() {
        let eqs = [eq(&[(2, "x"), (-2, "y")], -1)];
        let cert = UnsatLinComb::from_coeffs(vec![(int(1), 0, eqs[0].clone())]).unwrap();
        let p = cut_proof_of_unsat_eqs(&cert);
        assert_eq!(check_cut_proof(&p, &eqs, true), Ok(()));
        let only_constant = [eq(&[(1, "x")], 1), eq(&[(1, "x")], 0)];
        let cert = UnsatLinComb::from_coeffs(vec![
            (int(1), 0, only_constant[0].clone()),
            (int(-1), 1, only_constant[1].clone()),
        ])
        .unwrap();
        let p = cut_proof_of_unsat_eqs(&cert);
        assert_eq!(check_cut_proof(&p, &only_constant, true), Ok(()));
    }

    fn table_with(atoms: &[Atom]) -> (AtomTable, Vec<Lit>) {
        let mut t = AtomTable::new();
        let lits = atoms.iter().map(|a| t.lit(a)).collect();
        (t, lits)
    }

    #[test]
    fn complementary_inequalities_share_an_atom() {
        let (mut t, lits) = table_with(&[le(&[(1, "y2")], 0)]);
        let other = t.lit(&le(&[(-1, "y2")], 1));
        assert_eq!(other, !lits[0]);
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn single_resolution_step() {
        let mut t = AtomTable::new();
        let p = t.bool_var("p", None);
        let mut r = ResProof::new(t);
        let a = r.leaf(&[Lit::new(p, true)], Origin::Group(0));
        let b = r.leaf(&[Lit::new(p, false)], Origin::Group(1));
        r.resolve(p, b, a);
        assert_eq!(check_refutation(&r), Ok(()));
        // Swapping the premises behind the checker's back breaks the pivot signs.
        if let ResNode::Res { left, right, .. } = &mut r.nodes[2] {
            std::mem::swap(left, right);
        }
        assert_eq!(check_res_proof(&r), Err(ResError::PivotSign(2)));
    }

    #[test]
    fn missing_origin_is_rejected() {
        let mut t = AtomTable::new();
        let p = t.bool_var("p", None);
        let mut r = ResProof::new(t);
        r.nodes.push(ResNode::Leaf { clause: vec![Lit::new(p, true)], origin: None });
        r.root = 0;
        assert_eq!(check_res_proof(&r), Err(ResError::MissingOrigin(0)));
    }

    #[test]
    fn theory_lemma_leaf_checks_against_negated_literals() {
        let x_le = le(&[(1, "x")], 0);
        let x_ge1 = le(&[(-1, "x")], 1);
        let mut t = AtomTable::new();
        let lx = t.lit(&x_le);
        let mut cut = CutProof::new();
        let a = cut.hyp(x_le.term.clone());
        let b = cut.hyp(x_ge1.term.clone());
        cut.comb(&rat(1), a, &rat(1), b);
        let lemma = LemmaProof { cut, eq_cert: None };
        let mut r = ResProof::new(t);
        r.leaf(&[!lx, lx], Origin::TLemma(Arc::new(lemma.clone())));
        assert_eq!(check_res_proof(&r), Ok(()));
        let mut r2 = ResProof::new(r.atoms.clone());
        r2.leaf(&[!lx], Origin::TLemma(Arc::new(lemma)));
        assert!(matches!(check_res_proof(&r2), Err(ResError::Lemma(0, CutError::UnknownHyp(_)))));
    }

    #[test]
    fn split_shapes() {
        let t_atom = le(&[(1, "x"), (-1, "y")], 0);
        let (mut tab, lits) = table_with(std::slice::from_ref(&t_atom));
        let plus1 = tab.lit(&le(&[(1, "x"), (-1, "y")], 1));
        let minus = tab.lit(&le(&[(-1, "x"), (1, "y")], 0));
        assert!(is_valid_split(&tab, &[!lits[0], plus1, minus]));
        assert!(!is_valid_split(&tab, &[!lits[0], plus1]));
        let branch = tab.lit(&le(&[(1, "v")], -2));
        let other = tab.lit(&le(&[(-1, "v")], 3));
        assert!(is_valid_split(&tab, &[branch, other]));
    }

    fn leaf_from(atoms: &[Atom]) -> BnbProof {
        let LaqResult::Unsat(cert) = check_laq(atoms) else { panic!("leaf must be infeasible") };
        BnbProof::Leaf(LemmaProof { cut: crate::laz::farkas_to_cut(&cert), eq_cert: None })
    }

    #[test]
    fn single_leaf_converts_to_its_lemma() {
        let atoms = [le(&[(1, "x")], 0), le(&[(-1, "x")], 1)];
        let p = leaf_from(&atoms);
        let r = bnb_to_resolution(&p);
        assert_eq!(r.nodes.len(), 1);
        assert_eq!(r.root_clause().len(), 2);
        assert_eq!(check_res_proof(&r), Ok(()));
    }

    #[test]
    fn random_depth_two_trees_convert() {
        // 3x - 3y = 1 is rationally feasible but has no integer solution.
        let base = [
            le(&[(3, "x"), (-3, "y")], -1),
            le(&[(-3, "x"), (3, "y")], 1),
            le(&[(-1, "x")], 0),
            le(&[(1, "x")], -1),
        ];
        let mk = |extra: &[Atom]| -> Option<BnbProof> {
            let mut all = base.to_vec();
            all.extend_from_slice(extra);
            match check_laq(&all) {
                LaqResult::Unsat(c) => {
                    Some(BnbProof::Leaf(LemmaProof { cut: crate::laz::farkas_to_cut(&c), eq_cert: None }))
                }
                LaqResult::Sat(_) => None,
            }
        };
        let (x, y) = (VarId::new("x"), VarId::new("y"));
        let mut converted = 0;
        for n in -1..=1 {
            for m1 in -2..=1 {
                for m2 in -1..=1 {
                    let xl = normalize(&BnbProof::branch_atom(&x, &int(n)));
                    let y1 = normalize(&BnbProof::branch_atom(&y, &int(m1)));
                    let y2 = normalize(&BnbProof::branch_atom(&y, &int(m2)));
                    let leaves = (
                        mk(&[xl.clone(), y1.clone()]),
                        mk(&[xl.clone(), y1.negate_le()]),
                        mk(&[xl.negate_le(), y2.clone()]),
                        mk(&[xl.negate_le(), y2.negate_le()]),
                    );
                    let (Some(a), Some(b), Some(c), Some(d)) = leaves else { continue };
                    let tree = BnbProof::Branch {
                        var: x.clone(),
                        n: int(n),
                        left: Box::new(BnbProof::Branch { var: y.clone(), n: int(m1), left: Box::new(a), right: Box::new(b) }),
                        right: Box::new(BnbProof::Branch { var: y.clone(), n: int(m2), left: Box::new(c), right: Box::new(d) }),
                    };
                    assert!(tree.check(&base).is_ok());
                    let res = bnb_to_resolution(&tree);
                    assert_eq!(check_res_proof(&res), Ok(()));
                    let conflict: BTreeSet<Atom> = tree.conflict_set().into_iter().collect();
                    let root: BTreeSet<Atom> =
                        res.root_clause().iter().map(|&l| res.atoms.theory_form(!l).unwrap()).collect();
                    assert_eq!(root, conflict);
                    converted += 1;
                }
            }
        }
        assert!(converted > 0);
    }
}
