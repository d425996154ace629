//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero if any
//! criterion fails.

use liaitp::arith::{int, rat, Atom, LinTerm, Model, Rat, Rel, VarId};
use liaitp::formula::{BoolModel, ExtAtom, ExtTerm, Formula};
use liaitp::frontend::{dag_size, parse_problem};
use liaitp::interp::{annotate_ceil, annotate_modeq_with, atom_key, interpolate, Engine, ItpStats, Partition, TheoryPartition};
use liaitp::laz::Purity;
use liaitp::proofs::{bnb_to_resolution_into, check_refutation, AtomTable, BnbProof, CutProof, LemmaProof, NodeId, Origin, ResProof};
use liaitp::smt::{check_groups, count_mixed_atoms, occurrences, solve_and_interpolate, ItpOutcome, SmtConfig, SmtResult, SmtStats};
use liaitp::verify::{
    bench, brute_force_check, brute_force_sat, gen_random_chain, gen_random_problem, verify_interpolant, verify_sequence,
    RandomParams,
};
use std::collections::BTreeSet;
use std::time::{Duration, Instant};

const EXAMPLE_BUDGET: Duration = Duration::from_secs(1);
const FAMILY_BUDGET: Duration = Duration::from_secs(10);
const SUITE_BUDGET: Duration = Duration::from_secs(300);
const SUITE_SIZE: u64 = 500;
const CHAINS: usize = 50;
const BENCH_TIMEOUT: Duration = Duration::from_secs(10);
const CEIL_DAG_LIMIT: usize = 25;

struct Report {
    failed: usize,
}

impl Report {
    fn line(&mut self, id: &str, ok: bool, detail: String) {
        println!("{} {id}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failed += 1;
        }
    }
}

fn le(terms: &[(i64, &str)], c: i64) -> Atom {
    Atom::le(LinTerm::from_ints(terms, c))
}

fn eq(terms: &[(i64, &str)], c: i64) -> Atom {
    Atom::eq(LinTerm::from_ints(terms, c))
}

fn equivalent_on_box(f: &Formula, g: &Formula, vars: &[&str], b: i64) -> bool {
    let bm = BoolModel::new();
    let n = vars.len();
    let mut cur = vec![-b; n];
    loop {
        let m: Model = vars.iter().zip(&cur).map(|(v, x)| (VarId::new(v), rat(*x))).collect();
        if f.eval(&m, &bm) != g.eval(&m, &bm) {
            return false;
        }
        let mut i = 0;
        while i < n && cur[i] == b {
            cur[i] = -b;
            i += 1;
        }
        if i == n {
            return true;
        }
        cur[i] += 1;
    }
}

fn count_modeq(f: &Formula) -> usize {
    let mut n = 0;
    f.visit_atoms(&mut |a| n += matches!(a.rel, Rel::Mod(_)) as usize);
    n
}

fn lin_groups(a: &[Atom], b: &[Atom]) -> Vec<Formula> {
    vec![Formula::and(a.iter().map(Formula::lin).collect()), Formula::and(b.iter().map(Formula::lin).collect())]
}

fn solve_pair(groups: &[Formula], engine: Engine) -> Option<Formula> {
    match solve_and_interpolate(groups, &[1], engine, &SmtConfig::default(), &mut SmtStats::default()) {
        Ok(ItpOutcome::Unsat { interpolants, .. }) => interpolants.into_iter().next(),
        _ => None,
    }
}

fn verified(groups: &[Formula], itp: &Formula) -> bool {
    verify_interpolant(&groups[..1], &groups[1..], itp).is_ok_and(|r| r.pass())
}

/// Two cross combinations, one strengthened by `d`.
fn rounding_proof(a1: &Atom, a2: &Atom, b1: &Atom, b2: &Atom, d: i64) -> CutProof {
    let mut p = CutProof::new();
    let h_a2 = p.hyp(a2.term.clone());
    let h_b1 = p.hyp(b1.term.clone());
    let c = p.comb(&rat(1), h_a2, &rat(1), h_b1);
    let s = p.strengthen(c, &int(d));
    let h_a1 = p.hyp(a1.term.clone());
    let h_b2 = p.hyp(b2.term.clone());
    let c2 = p.comb(&rat(1), h_a1, &rat(1), h_b2);
    let r = p.comb(&rat(1), s, &rat(1), c2);
    p.set_root(r);
    p
}

/// Parametric family with modulus `2n`.
fn family(n: i64) -> (Vec<Atom>, Vec<Atom>, CutProof) {
    let m = 2 * n;
    let a1 = le(&[(-1, "y1"), (-m, "x1")], -n + 1);
    let a2 = le(&[(1, "y1"), (m, "x1")], 0);
    let b1 = le(&[(-1, "y1"), (-m, "z1")], 1);
    let b2 = le(&[(1, "y1"), (m, "z1")], -n);
    let p = rounding_proof(&a1, &a2, &b1, &b2, m);
    (vec![a1, a2], vec![b1, b2], p)
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let r = f();
    (r, t.elapsed())
}

fn crit_1a(r: &mut Report) {
    let src = "
        (set-logic QF_LIA)
        (declare-fun x () Int) (declare-fun y () Int) (declare-fun z () Int)
        (assert (! (= (+ (* 2 x) (- y) 1) 0) :itp-group A))
        (assert (! (= (- y (* 2 z)) 0) :itp-group B))
        (get-interpolant (A))";
    let (ok, t) = timed(|| {
        let prob = parse_problem(src).unwrap();
        let want = Formula::lin(&Atom::modeq(LinTerm::from_ints(&[(-1, "y")], 1), int(2)));
        [Engine::ModEq, Engine::Ceil].iter().all(|&e| {
            let Some(f) = solve_pair(&prob.groups, e) else { return false };
            verified(&prob.groups, &f) && equivalent_on_box(&f, &want, &["x", "y", "z"], 8)
        })
    });
    r.line("1a", ok && t < EXAMPLE_BUDGET, format!("intro pair, both engines, box [-8,8]^3, {t:.2?}"));
}

fn crit_1b(r: &mut Report) {
    let a = vec![
        eq(&[(-1, "y1"), (-1, "y2"), (-4, "y3"), (1, "x1")], 2),
        eq(&[(-1, "y3"), (-1, "x1"), (1, "x2")], 0),
        eq(&[(-1, "x1"), (-2, "x2")], 1),
    ];
    let b = vec![eq(&[(7, "y1"), (12, "y2"), (31, "y3"), (10, "z1")], -17)];
    let want = Formula::lin(&Atom::modeq(LinTerm::from_ints(&[(-7, "y1"), (-7, "y2"), (-31, "y3")], 18), int(5)));
    let (ok, t) = timed(|| {
        let groups = lin_groups(&a, &b);
        let Some(f) = solve_pair(&groups, Engine::ModEq) else { return false };
        verified(&groups, &f) && equivalent_on_box(&f, &want, &["y1", "y2", "y3"], 6)
    });
    r.line("1b", ok && t < EXAMPLE_BUDGET, format!("equation system, solver run, box [-6,6]^3, {t:.2?}"));
}

fn crit_1c(r: &mut Report) {
    let ((ok, detail), t) = timed(|| {
            let (a, b, p) = family(5);
            let mut st = ItpStats::default();
            let f = annotate_modeq_with(&p, &TheoryPartition::new(&a, &b), &mut st).unwrap();
            let n = match &f {
                Formula::Or(ds) => ds.len(),
                _ => 1,
            };
            let groups = lin_groups(&a, &b);
            (n == 5 && count_modeq(&f) == 5 && verified(&groups, &f), format!("{n} disjuncts"))
        });
    r.line("1c", ok && t < EXAMPLE_BUDGET, format!("rounding example, modular engine, {detail}, {t:.2?}"));
}

fn crit_1d(r: &mut Report) {
    let ((ok, fired), t) = timed(|| {
        let a = vec![
            le(&[(-1, "y1"), (-10, "y3")], -4),
            le(&[(1, "y1"), (10, "y3")], 0),
            le(&[(1, "y2"), (1, "x1")], 0),
        ];
        let b = vec![
            le(&[(-1, "y1"), (-10, "y2")], 1),
            le(&[(1, "y1"), (10, "y2")], -5),
            le(&[(1, "y3"), (1, "z1")], 0),
        ];
        let p = rounding_proof(&a[0], &a[1], &b[0], &b[1], 10);
        let mut st = ItpStats::default();
        let f = annotate_modeq_with(&p, &TheoryPartition::new(&a, &b), &mut st).unwrap();
        let want = Formula::or(vec![
            Formula::and(vec![
                Formula::lin(&le(&[(10, "y2"), (-10, "y3")], -4)),
                Formula::lin(&le(&[(1, "y1"), (10, "y2")], 0)),
            ]),
            Formula::lin(&le(&[(-1, "y1"), (-10, "y2")], 6)),
        ]);
        let ok = st.conditional_strengthen >= 1 && equivalent_on_box(&f, &want, &["y1", "y2", "y3"], 12);
        (ok && verified(&lin_groups(&a, &b), &f), st.conditional_strengthen)
    });
    r.line("1d", ok && t < EXAMPLE_BUDGET, format!("conditional strengthening fired {fired}x, box [-12,12]^3, {t:.2?}"));
}

fn crit_1e(r: &mut Report) {
    let ((ok, shown), t) = timed(|| {
        let groups = lin_groups(&[eq(&[(1, "y1"), (-2, "x1")], 0)], &[eq(&[(1, "y1"), (-2, "z1")], -1)]);
        let Some(f) = solve_pair(&groups, Engine::Ceil) else { return (false, String::new()) };
        let y = ExtTerm::var(VarId::new("y1"));
        let want = Formula::atom(ExtAtom::le(ExtTerm::ceil_div(&y, &int(2)).scale(&rat(2)).minus(&y)));
        (equivalent_on_box(&f, &want, &["y1"], 8) && verified(&groups, &f), liaitp::frontend::print_formula(&f))
    });
    r.line("1e", ok && t < EXAMPLE_BUDGET, format!("ceiling engine gives {shown}, {t:.2?}"));
}

fn bnb_example() -> (Vec<Atom>, Vec<Atom>, BnbProof) {
    let a = vec![
        le(&[(1, "y1"), (5, "y2"), (-5, "y3"), (-2, "x1")], 2),
        le(&[(1, "x1")], 0),
        le(&[(1, "y1")], 0),
        le(&[(1, "y2")], -2),
        le(&[(1, "y3")], -1),
    ];
    let b = vec![
        le(&[(-1, "y1"), (-5, "y2"), (5, "y3"), (4, "z1")], -3),
        le(&[(-1, "z1")], 0),
        le(&[(-1, "y1")], 0),
        le(&[(-1, "y2")], 0),
        le(&[(-1, "y3")], 0),
    ];
    let leaf = |items: &[(i64, Atom)]| {
        let mut p = CutProof::new();
        let ids: Vec<(Rat, NodeId)> = items.iter().map(|(w, h)| (rat(*w), p.hyp(h.term.clone()))).collect();
        let r = p.weighted_sum(&ids);
        p.set_root(r);
        BnbProof::Leaf(LemmaProof { cut: p, eq_cert: None })
    };
    let p1 = leaf(&[(1, a[0].clone()), (2, a[1].clone()), (1, b[2].clone()), (5, b[3].clone()), (5, le(&[(1, "y3")], 0))]);
    let p2 = leaf(&[(1, b[0].clone()), (4, b[1].clone()), (1, a[2].clone()), (5, le(&[(-1, "y3")], 1)), (5, le(&[(1, "y2")], 0))]);
    let p3 = leaf(&[(1, a[0].clone()), (2, a[1].clone()), (1, b[2].clone()), (5, a[4].clone()), (5, le(&[(-1, "y2")], 1))]);
    let inner = BnbProof::Branch { var: VarId::new("y2"), n: int(0), left: Box::new(p2), right: Box::new(p3) };
    let root = BnbProof::Branch { var: VarId::new("y3"), n: int(0), left: Box::new(p1), right: Box::new(inner) };
    (a, b, root)
}

fn crit_1f(r: &mut Report) {
    let (ok, t) = timed(|| {
        let (a, b, bnb) = bnb_example();
        let hyps: Vec<Atom> = a.iter().chain(&b).cloned().collect();
        if bnb.check(&hyps).is_err() {
            return false;
        }
        let mut p = ResProof::new(AtomTable::new());
        let mut cur = bnb_to_resolution_into(&bnb, &mut p);
        for (g, side) in [(0usize, &a), (1, &b)] {
            for h in side.iter() {
                let l = p.atoms.lit(h);
                if p.nodes[cur].clause().contains(&!l) {
                    let unit = p.leaf(&[l], Origin::Group(g));
                    cur = p.resolve(l.atom(), unit, cur);
                }
            }
        }
        p.root = cur;
        if check_refutation(&p).is_err() {
            return false;
        }
        let mut part = Partition { cut: 1, ..Partition::default() };
        for (g, side) in [(0usize, &a), (1, &b)] {
            for h in side.iter() {
                part.atom_groups.entry(atom_key(h)).or_default().insert(g);
                for v in h.vars() {
                    part.var_groups.entry(v.clone()).or_default().insert(g);
                }
            }
        }
        let Ok(f) = interpolate(&p, &part, Engine::ModEq, &mut ItpStats::default()) else { return false };
        let Formula::And(parts) = &f else { return false };
        let got: BTreeSet<Formula> = parts.iter().cloned().collect();
        let want: BTreeSet<Formula> = [le(&[(1, "y1")], 0), le(&[(1, "y1"), (5, "y2"), (-5, "y3")], 2), le(&[(1, "y1"), (5, "y2")], -3)]
            .iter()
            .map(Formula::lin)
            .collect();
        got == want
    });
    r.line("1f", ok && t < EXAMPLE_BUDGET, format!("branch-and-bound proof, 3 conjuncts, {t:.2?}"));
}

fn crit_2(r: &mut Report) {
    let ((ok, detail), t) = timed(|| {
        let mut ok = true;
        let mut rows = Vec::new();
        for n in [2i64, 4, 8, 16, 32, 64] {
            let (a, b, p) = family(n);
            let tp = TheoryPartition::new(&a, &b);
            let m = annotate_modeq_with(&p, &tp, &mut ItpStats::default()).unwrap();
            let c = annotate_ceil(&p, &tp).unwrap();
            let disjuncts = match &m {
                Formula::Or(ds) => ds.len(),
                _ => 1,
            };
            let size = dag_size(&c);
            ok &= disjuncts as i64 >= n && size <= CEIL_DAG_LIMIT;
            rows.push(format!("n={n}:{disjuncts}/{size}"));
        }
        (ok, rows.join(" "))
    });
    r.line("2", ok && t < FAMILY_BUDGET, format!("modular disjuncts / ceiling DAG size: {detail}, {t:.2?}"));
}

#[derive(Default)]
struct SuiteStats {
    unsat: usize,
    sat: usize,
    verdict_mismatch: Vec<u64>,
    itp_failures: Vec<(u64, String)>,
    proof_failures: Vec<u64>,
    mixed_atoms: usize,
}

fn property_suite() -> (SuiteStats, Duration) {
    timed(|| {
        let mut s = SuiteStats::default();
        for seed in 0..SUITE_SIZE {
            let p = RandomParams::for_seed(seed);
            let prob = gen_random_problem(seed, &p);
            let occ = occurrences(&prob.groups);
            let purity = Purity::new(occ.var_groups.clone(), vec![1]);
            let res = check_groups(&prob.groups, Some(purity), &SmtConfig::default(), &mut SmtStats::default());
            let brute = brute_force_sat(&prob.groups, p.box_bound).expect("box within limits");
            match res {
                Ok(SmtResult::Sat { model, bools }) => {
                    s.sat += 1;
                    let holds = prob.groups.iter().all(|g| g.eval(&model, &bools) == Some(true));
                    if brute.is_none() || !holds {
                        s.verdict_mismatch.push(seed);
                    }
                }
                Ok(SmtResult::Unsat(proof)) => {
                    s.unsat += 1;
                    if brute.is_some() {
                        s.verdict_mismatch.push(seed);
                    }
                    if check_refutation(&proof).is_err() {
                        s.proof_failures.push(seed);
                    }
                    s.mixed_atoms += count_mixed_atoms(&proof.atoms, &occ, &[1]);
                    for engine in [Engine::ModEq, Engine::Ceil] {
                        let itp = match interpolate(&proof, &occ.with_cut(1), engine, &mut ItpStats::default()) {
                            Ok(f) => f,
                            Err(e) => {
                                s.itp_failures.push((seed, format!("{engine:?}: {e}")));
                                continue;
                            }
                        };
                        let (a, b) = (&prob.groups[..1], &prob.groups[1..]);
                        match verify_interpolant(a, b, &itp) {
                            Ok(rep) if rep.pass() => {}
                            other => s.itp_failures.push((seed, format!("{engine:?} verify: {other:?}"))),
                        }
                        match brute_force_check(a, b, &itp, p.box_bound) {
                            Ok(None) => {}
                            other => s.itp_failures.push((seed, format!("{engine:?} brute: {other:?}"))),
                        }
                    }
                }
                _ => s.verdict_mismatch.push(seed),
            }
        }
        s
    })
}

fn crit_3_and_5(r: &mut Report) {
    let (s, t) = property_suite();
    let ok = s.verdict_mismatch.is_empty() && s.itp_failures.is_empty() && s.proof_failures.is_empty() && s.unsat > 0;
    let mut detail = format!(
        "{SUITE_SIZE} instances ({} unsat, {} sat), {} verdict mismatches, {} interpolant failures, {} proof failures, {t:.2?}",
        s.unsat,
        s.sat,
        s.verdict_mismatch.len(),
        s.itp_failures.len(),
        s.proof_failures.len()
    );
    if let Some((seed, msg)) = s.itp_failures.first() {
        detail.push_str(&format!("; first failure seed {seed}: {msg}"));
    }
    r.line("3", ok && t < SUITE_BUDGET, detail);
    r.line("5", s.mixed_atoms == 0, format!("{} mixed lemma atoms across the suite", s.mixed_atoms));
}

fn crit_4(r: &mut Report) {
    let ((ok, detail), t) = timed(|| {
        let mut found = 0;
        let mut failures = Vec::new();
        let mut seed = 0u64;
        while found < CHAINS && seed < 20_000 {
            let p = RandomParams { nvars: 5, ncons: 10, coeff_bound: 10, box_bound: 8 };
            let prob = gen_random_chain(seed, &p, 4);
            let out = solve_and_interpolate(&prob.groups, &[1, 2, 3], Engine::Ceil, &SmtConfig::default(), &mut SmtStats::default());
            if let Ok(ItpOutcome::Unsat { interpolants, .. }) = out {
                found += 1;
                match verify_sequence(&prob.groups, &interpolants) {
                    Ok(None) => {}
                    other => failures.push(format!("seed {seed}: {other:?}")),
                }
            }
            seed += 1;
        }
        (found == CHAINS && failures.is_empty(), format!("{found} unsat 4-group chains from {seed} seeds, {} failures", failures.len()))
    });
    r.line("4", ok, format!("{detail}, {t:.2?}"));
}

fn crit_6(r: &mut Report) {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let (rows, t) = timed(|| bench(0..SUITE_SIZE, Engine::Ceil, workers, BENCH_TIMEOUT));
    let timeouts = rows.iter().filter(|r| r.verdict == "timeout").count();
    let bad = rows.iter().filter(|r| r.verdict == "unsat" && r.verify != "ok").count();
    r.line(
        "6",
        timeouts == 0 && bad == 0,
        format!("bench smoke: {} rows, {timeouts} timeouts at {BENCH_TIMEOUT:?}, {bad} unverified, {t:.2?} on {workers} workers", rows.len()),
    );
}

fn main() {
    let mut r = Report { failed: 0 };
    crit_1a(&mut r);
    crit_1b(&mut r);
    crit_1c(&mut r);
    crit_1d(&mut r);
    crit_1e(&mut r);
    crit_1f(&mut r);
    crit_2(&mut r);
    crit_3_and_5(&mut r);
    crit_4(&mut r);
    crit_6(&mut r);
    if r.failed > 0 {
        eprintln!("{} criteria failed", r.failed);
        std::process::exit(1);
    }
}
