//! Solver driver: CNF encoding, CDCL with the layered integer theory, and
//! interpolant extraction from the resulting refutation.

use crate::arith::{Atom, LinTerm, Model, Rel, VarId};
use crate::formula::{BoolModel, Formula};
use crate::interp::{atom_key, interpolate, ItpError, ItpStats, Partition};
use crate::laz::{check_laz, LazConfig, LazResult, LazStats, Purity};
use crate::proofs::{AtomDef, AtomTable, ResProof};
use crate::sat::{cnf_encode, solve, CnfError, HookVerdict, SatConfig, SatResult, SatStats, TheoryHook};
use std::collections::hash_map::Entry;
use std::collections::{BTreeSet, HashMap, HashSet};
use thiserror::Error;

pub use crate::interp::Engine;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SmtError {
    #[error(transparent)]
    Cnf(#[from] CnfError),
    #[error(transparent)]
    Itp(#[from] ItpError),
}

#[derive(Clone, Debug, Default)]
pub struct SmtConfig {
    pub sat: SatConfig,
    /// Branch-and-bound budget per theory check; purity is set by the driver.
    pub laz: LazConfig,
}

#[derive(Clone, Debug, Default)]
pub struct SmtStats {
    pub sat: SatStats,
    pub laz: LazStats,
    pub itp: ItpStats,
    /// Solver-introduced atoms that mix local symbols of both sides of a cut.
    pub mixed_atoms: usize,
}

pub enum SmtResult {
    Sat { model: Model, bools: BoolModel },
    Unsat(ResProof),
    Unknown,
}

struct LazHook<'a> {
    cfg: LazConfig,
    stats: &'a mut LazStats,
}

impl TheoryHook for LazHook<'_> {
    fn check(&mut self, assigned: &[Atom], stalled: bool) -> HookVerdict {
        let cfg = if stalled {
            LazConfig { max_depth: 64, max_leaves: 1 << 16, ..self.cfg.clone() }
        } else {
            self.cfg.clone()
        };
        match check_laz(&tightest_bounds(assigned), &cfg, self.stats) {
            LazResult::Sat(m) => HookVerdict::Consistent(m),
            LazResult::Unsat { conflict, proof } => HookVerdict::Conflict { conflict, proof },
            LazResult::NeedLemmas(ls) => HookVerdict::Lemmas(ls),
        }
    }
}

/// Drops every inequality implied by a stronger one over the same linear
/// part; the theory answer does not change.
fn tightest_bounds(assigned: &[Atom]) -> Vec<Atom> {
    let mut best: HashMap<LinTerm, usize> = HashMap::new();
    for (i, a) in assigned.iter().enumerate() {
        if a.rel != Rel::Le {
            continue;
        }
        match best.entry(a.term.without_constant()) {
            Entry::Vacant(e) => {
                e.insert(i);
            }
            Entry::Occupied(mut e) => {
                if a.term.constant() > assigned[*e.get()].term.constant() {
                    e.insert(i);
                }
            }
        }
    }
    let keep: HashSet<usize> = best.into_values().collect();
    assigned.iter().enumerate().filter(|(i, a)| a.rel != Rel::Le || keep.contains(i)).map(|(_, a)| a.clone()).collect()
}

/// Occurrence maps of the groups, with cut 0.
pub fn occurrences(groups: &[Formula]) -> Partition {
    let mut part = Partition::default();
    for (i, g) in groups.iter().enumerate() {
        for v in g.vars() {
            part.var_groups.entry(v).or_default().insert(i);
        }
        for b in g.bools() {
            part.bool_groups.entry(b).or_default().insert(i);
        }
        g.nnf().visit_atoms(&mut |a| {
            if let Some(atom) = a.to_atom() {
                part.atom_groups.entry(atom_key(&atom)).or_default().insert(i);
            }
        });
    }
    part
}

/// Decides the conjunction of the groups. With `purity`, lemma atoms never
/// mix local symbols across its cuts.
pub fn check_groups(
    groups: &[Formula],
    purity: Option<Purity>,
    cfg: &SmtConfig,
    stats: &mut SmtStats,
) -> Result<SmtResult, SmtError> {
    let cnf = cnf_encode(groups)?;
    let mut hook = LazHook { cfg: LazConfig { purity, ..cfg.laz.clone() }, stats: &mut stats.laz };
    let (res, sat_stats) = solve(cnf.atoms, &cnf.clauses, &mut hook, &cfg.sat);
    stats.sat = sat_stats;
    Ok(match res {
        SatResult::Sat { assignment, mut model, atoms } => {
            let mut bools = BoolModel::new();
            for (d, v) in atoms.defs().iter().zip(&assignment) {
                if let AtomDef::Bool { name, tseitin_group: None } = d {
                    bools.insert(name.clone(), *v);
                }
            }
            for g in groups {
                for v in g.vars() {
                    model.entry(v).or_insert_with(num_traits::Zero::zero);
                }
                for b in g.bools() {
                    bools.entry(b).or_insert(false);
                }
            }
            SmtResult::Sat { model, bools }
        }
        SatResult::Unsat(p) => SmtResult::Unsat(p),
        SatResult::Unknown => SmtResult::Unknown,
    })
}

pub enum ItpOutcome {
    Sat { model: Model, bools: BoolModel },
    Unsat { proof: ResProof, interpolants: Vec<Formula> },
    Unknown,
}

/// Solves in interpolating mode and extracts one interpolant per cut from a
/// single refutation. Cut `i` puts groups `0..i` on the A side.
pub fn solve_and_interpolate(
    groups: &[Formula],
    cuts: &[usize],
    engine: Engine,
    cfg: &SmtConfig,
    stats: &mut SmtStats,
) -> Result<ItpOutcome, SmtError> {
    let occ = occurrences(groups);
    let purity = Purity::new(occ.var_groups.clone(), cuts.to_vec());
    match check_groups(groups, Some(purity), cfg, stats)? {
        SmtResult::Sat { model, bools } => Ok(ItpOutcome::Sat { model, bools }),
        SmtResult::Unknown => Ok(ItpOutcome::Unknown),
        SmtResult::Unsat(proof) => {
            stats.mixed_atoms += count_mixed_atoms(&proof.atoms, &occ, cuts);
            let mut interpolants = Vec::with_capacity(cuts.len());
            for &cut in cuts {
                interpolants.push(interpolate(&proof, &occ.with_cut(cut), engine, &mut stats.itp)?);
            }
            Ok(ItpOutcome::Unsat { proof, interpolants })
        }
    }
}

/// Counts theory atoms outside the input whose variables mix local symbols
/// across one of the cuts.
pub fn count_mixed_atoms(atoms: &AtomTable, occ: &Partition, cuts: &[usize]) -> usize {
    let purity = Purity::new(occ.var_groups.clone(), cuts.to_vec());
    atoms
        .defs()
        .iter()
        .filter(|d| matches!(d, AtomDef::Theory(a) if !occ.atom_groups.contains_key(&atom_key(a)) && purity.is_mixed(a.vars())))
        .count()
}

/// Variables of all groups.
pub fn all_vars(groups: &[Formula]) -> BTreeSet<VarId> {
    groups.iter().flat_map(|g| g.vars()).collect()
}
