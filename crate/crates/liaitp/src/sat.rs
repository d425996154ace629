//! Proof-logging CDCL over abstracted atoms with a lazy theory hook, and the
//! CNF encoder that feeds it.
//!
//! Every clause in the database points at a node of the resolution proof, so
//! an unsatisfiable run ends with a refutation whose leaves are input clauses
//! and theory lemmas.

use crate::arith::{Atom, LinTerm, Model, Rat, Rel};
use crate::formula::Formula;
use crate::laz::{LemmaClause, TheoryProof};
use crate::proofs::{bnb_to_resolution_into, canonical_clause, lemma_hypotheses, AtomDef, AtomTable, CutProof, LemmaProof, Lit, Origin, ResProof};
use num_traits::{One, Signed};
use std::collections::HashMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;
use std::time::Instant;
use thiserror::Error;

// ---------------------------------------------------------------------------
// CNF

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CnfError {
    #[error("ceiling terms are not allowed in solver input")]
    Ceiling,
    #[error("modular constraints must be encoded before solving")]
    Modular,
}

#[derive(Clone, Debug, Default)]
pub struct Cnf {
    pub atoms: AtomTable,
    /// Clauses with the group they come from.
    pub clauses: Vec<(Vec<Lit>, usize)>,
    fresh: usize,
}

impl Cnf {
    pub fn new() -> Self {
        Cnf::default()
    }

    /// Adds one group. Negations are pushed to the literals first; the
    /// remaining structure is encoded with one-sided Tseitin definitions.
    pub fn add_group(&mut self, f: &Formula, group: usize) -> Result<(), CnfError> {
        let f = f.nnf();
        let mut fresh = self.fresh;
        let conjuncts = match f {
            Formula::And(fs) => fs,
            f => vec![f],
        };
        for c in conjuncts {
            let lits = match c {
                Formula::Or(ds) => {
                    let mut lits = Vec::new();
                    for d in &ds {
                        lits.push(self.encode(d, group, &mut fresh)?);
                    }
                    lits
                }
                Formula::True => continue,
                Formula::False => Vec::new(),
                c => vec![self.encode(&c, group, &mut fresh)?],
            };
            self.push_clause(lits, group);
        }
        self.fresh = fresh;
        Ok(())
    }

    fn push_clause(&mut self, lits: Vec<Lit>, group: usize) {
        let c = canonical_clause(&lits);
        if c.windows(2).any(|w| w[0] == !w[1]) {
            return;
        }
        self.clauses.push((c, group));
    }

    /// Literal equivalent (in the implied direction) to an NNF subformula.
    fn encode(&mut self, f: &Formula, group: usize, fresh: &mut usize) -> Result<Lit, CnfError> {
        match f {
            Formula::Atom(a) => {
                let Some(atom) = a.to_atom() else { return Err(CnfError::Ceiling) };
                if matches!(atom.rel, Rel::Mod(_)) {
                    return Err(CnfError::Modular);
                }
                Ok(self.atoms.lit(&atom))
            }
            Formula::Bool(n) => Ok(Lit::new(self.atoms.bool_var(n, None), true)),
            Formula::Not(g) => match &**g {
                Formula::Bool(n) => Ok(Lit::new(self.atoms.bool_var(n, None), false)),
                _ => Err(CnfError::Modular),
            },
            Formula::True | Formula::False => {
                let v = self.tseitin(group, fresh);
                let unit = if *f == Formula::True { v } else { !v };
                self.push_clause(vec![unit], group);
                Ok(v)
            }
            Formula::And(fs) => {
                let v = self.tseitin(group, fresh);
                for g in fs {
                    let l = self.encode(g, group, fresh)?;
                    self.push_clause(vec![!v, l], group);
                }
                Ok(v)
            }
            Formula::Or(fs) => {
                let v = self.tseitin(group, fresh);
                let mut c = vec![!v];
                for g in fs {
                    c.push(self.encode(g, group, fresh)?);
                }
                self.push_clause(c, group);
                Ok(v)
            }
        }
    }

    fn tseitin(&mut self, group: usize, fresh: &mut usize) -> Lit {
        let name = format!("ts!{}!{}", group, *fresh);
        *fresh += 1;
        Lit::new(self.atoms.bool_var(&name, Some(group)), true)
    }
}

/// Encodes the groups `φ_0 … φ_{n-1}` in order.
pub fn cnf_encode(groups: &[Formula]) -> Result<Cnf, CnfError> {
    let mut cnf = Cnf::new();
    for (i, g) in groups.iter().enumerate() {
        cnf.add_group(g, i)?;
    }
    Ok(cnf)
}

// ---------------------------------------------------------------------------
// Theory interface

pub enum HookVerdict {
    Consistent(Model),
    Conflict { conflict: Vec<Atom>, proof: TheoryProof },
    Lemmas(Vec<LemmaClause>),
}

pub trait TheoryHook {
    /// Checks the theory literals of a full assignment. `stalled` is set when
    /// the previous answer added nothing new; the hook must then decide.
    fn check(&mut self, assigned: &[Atom], stalled: bool) -> HookVerdict;
}

/// Treats every theory atom as an opaque proposition.
pub struct NoTheory;

impl TheoryHook for NoTheory {
    fn check(&mut self, _: &[Atom], _: bool) -> HookVerdict {
        HookVerdict::Consistent(Model::new())
    }
}

// ---------------------------------------------------------------------------
// Solver

#[derive(Clone, Debug)]
pub struct SatConfig {
    /// Decisions plus conflicts plus theory calls.
    pub max_steps: u64,
    pub deadline: Option<Instant>,
    /// Perturbs initial branching activities; `None` keeps lowest-id order.
    pub seed: Option<u64>,
    /// Seed the clause set with implications between atoms over one linear part.
    pub bound_chains: bool,
}

impl Default for SatConfig {
    fn default() -> Self {
        SatConfig { max_steps: 2_000_000, deadline: None, seed: None, bound_chains: true }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SatStats {
    pub decisions: u64,
    pub conflicts: u64,
    pub propagations: u64,
    pub theory_checks: u64,
    pub theory_conflicts: u64,
    pub lemmas: u64,
}

pub enum SatResult {
    Sat { assignment: Vec<bool>, model: Model, atoms: AtomTable },
    Unsat(ResProof),
    Unknown,
}

struct ClauseRec {
    lits: Vec<Lit>,
    node: usize,
}

struct Solver<'h> {
    proof: ResProof,
    clauses: Vec<ClauseRec>,
    watches: Vec<Vec<usize>>,
    value: Vec<Option<bool>>,
    level: Vec<usize>,
    reason: Vec<Option<usize>>,
    trail: Vec<Lit>,
    trail_lim: Vec<usize>,
    qhead: usize,
    activity: Vec<f64>,
    bump: f64,
    phase: Vec<bool>,
    hook: &'h mut dyn TheoryHook,
    stats: SatStats,
    rng: Option<ChaCha8Rng>,
}

enum Added {
    Ok,
    /// Clause is false at level 0; the payload is its proof node.
    Conflict(usize),
}

impl<'h> Solver<'h> {
    fn new(atoms: AtomTable, hook: &'h mut dyn TheoryHook, seed: Option<u64>) -> Self {
        let mut s = Solver {
            proof: ResProof::new(atoms),
            clauses: Vec::new(),
            watches: Vec::new(),
            value: Vec::new(),
            level: Vec::new(),
            reason: Vec::new(),
            trail: Vec::new(),
            trail_lim: Vec::new(),
            qhead: 0,
            activity: Vec::new(),
            bump: 1.0,
            phase: Vec::new(),
            hook,
            stats: SatStats::default(),
            rng: seed.map(ChaCha8Rng::seed_from_u64),
        };
        s.grow();
        s
    }

    fn num_vars(&self) -> usize {
        self.value.len()
    }

    /// Extends per-variable arrays to the atom table size.
    fn grow(&mut self) -> bool {
        let n = self.proof.atoms.len();
        if n == self.num_vars() {
            return false;
        }
        self.value.resize(n, None);
        self.level.resize(n, 0);
        self.reason.resize(n, None);
        let old = self.activity.len();
        self.activity.resize(n, 0.0);
        if let Some(rng) = &mut self.rng {
            self.activity[old..].iter_mut().for_each(|a| *a = rng.gen::<f64>() * 1e-3);
        }
        self.phase.resize(n, false);
        self.watches.resize(2 * n, Vec::new());
        true
    }

    fn lit_value(&self, l: Lit) -> Option<bool> {
        self.value[l.atom() as usize].map(|v| v == l.is_pos())
    }

    fn decision_level(&self) -> usize {
        self.trail_lim.len()
    }

    fn assign(&mut self, l: Lit, reason: Option<usize>) {
        let v = l.atom() as usize;
        self.value[v] = Some(l.is_pos());
        self.level[v] = self.decision_level();
        self.reason[v] = reason;
        self.trail.push(l);
    }

    fn backtrack(&mut self, lvl: usize) {
        if self.decision_level() <= lvl {
            return;
        }
        let keep = self.trail_lim[lvl];
        for l in self.trail.drain(keep..) {
            let v = l.atom() as usize;
            self.phase[v] = l.is_pos();
            self.value[v] = None;
            self.reason[v] = None;
        }
        self.trail_lim.truncate(lvl);
        self.qhead = self.qhead.min(keep);
    }

    /// Adds a clause at decision level 0.
    fn add_clause(&mut self, node: usize) -> Added {
        debug_assert_eq!(self.decision_level(), 0);
        let lits = self.proof.nodes[node].clause().to_vec();
        if lits.is_empty() {
            return Added::Conflict(node);
        }
        let mut lits = lits;
        // Non-false literals first.
        lits.sort_by_key(|&l| match self.lit_value(l) {
            Some(false) => 2,
            Some(true) => 0,
            None => 1,
        });
        let idx = self.clauses.len();
        let first = self.lit_value(lits[0]);
        if lits.len() == 1 {
            self.clauses.push(ClauseRec { lits, node });
            return match first {
                Some(false) => Added::Conflict(self.refute_at_zero(idx)),
                Some(true) => Added::Ok,
                None => {
                    let l = self.clauses[idx].lits[0];
                    self.assign(l, Some(idx));
                    Added::Ok
                }
            };
        }
        let second = self.lit_value(lits[1]);
        self.watches[(!lits[0]).index()].push(idx);
        self.watches[(!lits[1]).index()].push(idx);
        self.clauses.push(ClauseRec { lits, node });
        match (first, second) {
            (Some(false), _) => Added::Conflict(self.refute_at_zero(idx)),
            (None, Some(false)) => {
                let l = self.clauses[idx].lits[0];
                self.assign(l, Some(idx));
                Added::Ok
            }
            _ => Added::Ok,
        }
    }

    /// Propagates; returns a conflicting clause index.
    fn propagate(&mut self) -> Option<usize> {
        while self.qhead < self.trail.len() {
            let p = self.trail[self.qhead];
            self.qhead += 1;
            self.stats.propagations += 1;
            // Clauses watching ¬p's falsification live under p's index.
            let mut ws = std::mem::take(&mut self.watches[p.index()]);
            let mut i = 0;
            let mut conflict = None;
            while i < ws.len() {
                let ci = ws[i];
                let false_lit = !p;
                let c = &mut self.clauses[ci].lits;
                if c[0] == false_lit {
                    c.swap(0, 1);
                }
                let other = c[0];
                if self.value[other.atom() as usize].map(|v| v == other.is_pos()) == Some(true) {
                    i += 1;
                    continue;
                }
                let mut moved = false;
                for k in 2..c.len() {
                    let l = c[k];
                    if self.value[l.atom() as usize].map(|v| v == l.is_pos()) != Some(false) {
                        c.swap(1, k);
                        self.watches[(!l).index()].push(ci);
                        ws.swap_remove(i);
                        moved = true;
                        break;
                    }
                }
                if moved {
                    continue;
                }
                match self.lit_value(other) {
                    Some(false) => {
                        conflict = Some(ci);
                        break;
                    }
                    _ => {
                        self.assign(other, Some(ci));
                        i += 1;
                    }
                }
            }
            let rest = std::mem::take(&mut self.watches[p.index()]);
            ws.extend(rest);
            self.watches[p.index()] = ws;
            if conflict.is_some() {
                return conflict;
            }
        }
        None
    }

    /// Resolves a clause that is false at level 0 down to the empty clause.
    fn refute_at_zero(&mut self, ci: usize) -> usize {
        let mut node = self.clauses[ci].node;
        for t in (0..self.trail.len()).rev() {
            let l = self.trail[t];
            if self.proof.nodes[node].clause().is_empty() {
                break;
            }
            if !self.proof.nodes[node].clause().contains(&!l) {
                continue;
            }
            let r = self.reason[l.atom() as usize].expect("level-0 literal has a reason");
            node = self.proof.resolve(l.atom(), self.clauses[r].node, node);
        }
        assert!(self.proof.nodes[node].clause().is_empty(), "level-0 refutation incomplete");
        node
    }

    /// First-UIP analysis of a false clause; returns the learned node and
    /// the backjump level.
    fn analyze(&mut self, ci: usize) -> (usize, usize) {
        let mut node = self.clauses[ci].node;
        let dl = self.decision_level();
        let at_level = |s: &Self, node: usize| {
            s.proof.nodes[node].clause().iter().filter(|l| s.level[l.atom() as usize] == dl).count()
        };
        let mut t = self.trail.len();
        while at_level(self, node) > 1 {
            t -= 1;
            let l = self.trail[t];
            if self.level[l.atom() as usize] != dl || !self.proof.nodes[node].clause().contains(&!l) {
                continue;
            }
            let r = self.reason[l.atom() as usize].expect("implied literal has a reason");
            node = self.proof.resolve(l.atom(), self.clauses[r].node, node);
        }
        let mut back = 0;
        for l in self.proof.nodes[node].clause().to_vec() {
            let v = l.atom() as usize;
            self.activity[v] += self.bump;
            if self.level[v] != dl {
                back = back.max(self.level[v]);
            }
        }
        self.bump /= 0.95;
        if self.bump > 1e100 {
            self.activity.iter_mut().for_each(|a| *a *= 1e-100);
            self.bump *= 1e-100;
        }
        (node, back)
    }

    /// Adds a learned (or theory) clause that is false under the current
    /// assignment, after backjumping. Returns a refutation node if the
    /// conflict reaches level 0.
    fn handle_conflict(&mut self, ci: usize) -> Option<usize> {
        self.stats.conflicts += 1;
        let max_level =
            self.clauses[ci].lits.iter().map(|l| self.level[l.atom() as usize]).max().unwrap_or(0);
        if max_level == 0 {
            return Some(self.refute_at_zero(ci));
        }
        self.backtrack(max_level);
        let (node, back) = self.analyze(ci);
        self.backtrack(back);
        let lits = self.proof.nodes[node].clause().to_vec();
        // The asserting literal is the one that is now unassigned.
        let mut lits = lits;
        lits.sort_by_key(|l| self.value[l.atom() as usize].is_some());
        let idx = self.clauses.len();
        if lits.len() >= 2 {
            // Watch the asserting literal and one from the backjump level.
            let k = (1..lits.len()).max_by_key(|&i| self.level[lits[i].atom() as usize]).unwrap();
            lits.swap(1, k);
            self.watches[(!lits[0]).index()].push(idx);
            self.watches[(!lits[1]).index()].push(idx);
        }
        let unit = lits[0];
        self.clauses.push(ClauseRec { lits, node });
        self.assign(unit, Some(idx));
        None
    }

    /// Registers a theory conflict as a clause; it is false right now.
    fn theory_conflict(&mut self, conflict: &[Atom], proof: TheoryProof) -> usize {
        self.stats.theory_conflicts += 1;
        let node = match proof {
            TheoryProof::Cut(lp) => {
                let clause: Vec<Lit> = conflict.iter().map(|a| !self.proof.atoms.lit(a)).collect();
                let clause = canonical_clause(&clause);
                self.proof.leaf(&clause, Origin::TLemma(Arc::new(lp)))
            }
            TheoryProof::Bnb(b) => bnb_to_resolution_into(&b, &mut self.proof),
        };
        self.grow();
        // Left unwatched: analysis turns it into a properly watched clause.
        let lits = self.proof.nodes[node].clause().to_vec();
        let idx = self.clauses.len();
        self.clauses.push(ClauseRec { lits, node });
        idx
    }

    /// Theory literals of the current assignment; false equalities are left
    /// out since the encoder never needs them.
    fn assigned_atoms(&self) -> Vec<Atom> {
        let mut out = Vec::new();
        for &l in &self.trail {
            if let AtomDef::Theory(a) = self.proof.atoms.get(l.atom()) {
                if l.is_pos() {
                    out.push(a.clone());
                } else if a.rel == Rel::Le {
                    out.push(a.negate_le());
                }
            }
        }
        out
    }

    fn decide(&mut self) -> Option<Lit> {
        let mut best: Option<usize> = None;
        for v in 0..self.num_vars() {
            if self.value[v].is_none() && best.is_none_or(|b| self.activity[v] > self.activity[b]) {
                best = Some(v);
            }
        }
        best.map(|v| Lit::new(v as u32, self.phase[v]))
    }

    fn solve(mut self, input: &[(Vec<Lit>, usize)], cfg: &SatConfig) -> (SatResult, SatStats) {
        for (c, g) in input {
            let node = self.proof.leaf(c, Origin::Group(*g));
            if let Added::Conflict(n) = self.add_clause(node) {
                return self.unsat(n);
            }
        }
        if cfg.bound_chains {
            for (c, lp) in bound_chain_lemmas(&self.proof.atoms) {
                self.stats.lemmas += 1;
                let node = self.proof.leaf(&c, Origin::TLemma(Arc::new(lp)));
                if let Added::Conflict(n) = self.add_clause(node) {
                    return self.unsat(n);
                }
            }
        }
        let mut steps = 0u64;
        let mut stalled = false;
        loop {
            steps += 1;
            let late = steps.is_multiple_of(64) && cfg.deadline.is_some_and(|d| Instant::now() > d);
            if steps > cfg.max_steps || late {
                return (SatResult::Unknown, self.stats);
            }
            if let Some(ci) = self.propagate() {
                if let Some(n) = self.handle_conflict(ci) {
                    return self.unsat(n);
                }
                continue;
            }
            if let Some(l) = self.decide() {
                self.stats.decisions += 1;
                self.trail_lim.push(self.trail.len());
                self.assign(l, None);
                continue;
            }
            self.stats.theory_checks += 1;
            let assigned = self.assigned_atoms();
            match self.hook.check(&assigned, stalled) {
                HookVerdict::Consistent(model) => {
                    let assignment = self.value.iter().map(|v| v.unwrap_or(false)).collect();
                    return (SatResult::Sat { assignment, model, atoms: self.proof.atoms.clone() }, self.stats);
                }
                HookVerdict::Conflict { conflict, proof } => {
                    stalled = false;
                    let ci = self.theory_conflict(&conflict, proof);
                    if let Some(n) = self.handle_conflict(ci) {
                        return self.unsat(n);
                    }
                }
                HookVerdict::Lemmas(ls) => {
                    if stalled {
                        return (SatResult::Unknown, self.stats);
                    }
                    self.backtrack(0);
                    let before = (self.num_vars(), self.clauses.len());
                    for l in ls {
                        self.stats.lemmas += 1;
                        let lits: Vec<Lit> = l.atoms.iter().filter(|a| a.truth().is_none()).map(|a| self.proof.atoms.lit(a)).collect();
                        self.grow();
                        let c = canonical_clause(&lits);
                        if c.windows(2).any(|w| w[0] == !w[1]) {
                            continue;
                        }
                        let node = self.proof.leaf(&c, Origin::BnbLemma);
                        if let Added::Conflict(n) = self.add_clause(node) {
                            return self.unsat(n);
                        }
                    }
                    stalled = (self.num_vars(), self.clauses.len()) == before;
                }
            }
        }
    }

    fn unsat(mut self, root: usize) -> (SatResult, SatStats) {
        self.proof.root = root;
        (SatResult::Unsat(self.proof), self.stats)
    }
}

/// Implications between theory atoms that share a linear part: each
/// inequality implies the next weaker one, and an equality fixes the
/// neighbouring inequalities on both sides. Every clause carries its proof.
pub fn bound_chain_lemmas(atoms: &AtomTable) -> Vec<(Vec<Lit>, LemmaProof)> {
    // Per linear part: (constant c, literal meaning `t + c <= 0` or `t + c = 0`).
    let mut les: HashMap<LinTerm, Vec<(Rat, Lit)>> = HashMap::new();
    let mut eqs: HashMap<LinTerm, Vec<(Rat, Lit)>> = HashMap::new();
    for (id, d) in atoms.defs().iter().enumerate() {
        let AtomDef::Theory(a) = d else { continue };
        let pos = a.term.leading().is_some_and(|(_, c)| c.is_positive());
        match a.rel {
            Rel::Le => {
                let l = Lit::new(id as u32, true);
                let (lit, t) = if pos { (l, a.term.clone()) } else { (!l, a.negate_le().term) };
                les.entry(t.without_constant()).or_default().push((t.constant().clone(), lit));
            }
            Rel::Eq => {
                let t = if pos { a.term.clone() } else { a.term.neg() };
                eqs.entry(t.without_constant()).or_default().push((t.constant().clone(), Lit::new(id as u32, true)));
            }
            Rel::Mod(_) => {}
        }
    }
    let mut out = Vec::new();
    for (t, chain) in les.iter_mut() {
        chain.sort_by(|a, b| b.0.cmp(&a.0));
        // t + c ≤ 0 implies t + c' ≤ 0 for c' < c.
        for w in chain.windows(2) {
            let clause = canonical_clause(&[!w[0].1, w[1].1]);
            let hyps = lemma_hypotheses(atoms, &clause).expect("theory literals");
            let mut cut = CutProof::new();
            let n1 = cut.hyp_atom(&hyps[0], hyps[0].term.clone());
            let n2 = cut.hyp_atom(&hyps[1], hyps[1].term.clone());
            let r = cut.comb(&Rat::one(), n1, &Rat::one(), n2);
            cut.set_root(r);
            out.push((clause, LemmaProof { cut, eq_cert: None }));
        }
        let Some(eq) = eqs.get(t) else { continue };
        for (e, el) in eq {
            // Equality at -e: the inequality with the largest c ≤ e holds, the
            // one with the smallest c > e fails.
            if let Some((_, l)) = chain.iter().find(|(c, _)| c <= e) {
                lemma_eq(&mut out, atoms, *el, !*l, false, t, e);
            }
            if let Some((_, l)) = chain.iter().rev().find(|(c, _)| c > e) {
                lemma_eq(&mut out, atoms, *el, *l, true, t, e);
            }
        }
    }
    out
}

/// Clause `¬eq ∨ ¬bound`, where the equality `t + e = 0` contradicts `bound`.
/// With `flip` the equality is used as `-t - e`.
fn lemma_eq(out: &mut Vec<(Vec<Lit>, LemmaProof)>, atoms: &AtomTable, eq: Lit, bound: Lit, flip: bool, t: &LinTerm, e: &Rat) {
    let clause = canonical_clause(&[!eq, !bound]);
    let Some(b) = atoms.theory_form(bound) else { return };
    let AtomDef::Theory(ea) = atoms.get(eq.atom()) else { return };
    let mut et = t.plus(&LinTerm::constant_term(e.clone()));
    if flip {
        et = et.neg();
    }
    if !(ea.term == et || ea.term.neg() == et) {
        return;
    }
    let mut cut = CutProof::new();
    let n1 = cut.hyp_atom(ea, et);
    let n2 = cut.hyp_atom(&b, b.term.clone());
    let r = cut.comb(&Rat::one(), n1, &Rat::one(), n2);
    cut.set_root(r);
    out.push((clause, LemmaProof { cut, eq_cert: None }));
}

/// Runs CDCL on `clauses` over `atoms`, consulting `hook` on full
/// assignments.
pub fn solve(atoms: AtomTable, clauses: &[(Vec<Lit>, usize)], hook: &mut dyn TheoryHook, cfg: &SatConfig) -> (SatResult, SatStats) {
    Solver::new(atoms, hook, cfg.seed).solve(clauses, cfg)
}
