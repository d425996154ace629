//! Parse, solve, interpolate and check, through the public API only.

use liaitp::frontend::{parse_problem, print_formula, read_proof, write_proof};
use liaitp::proofs::check_refutation;
use liaitp::smt::{solve_and_interpolate, Engine, ItpOutcome, SmtConfig, SmtStats};
use liaitp::verify::{brute_force_check, gen_random_problem, verify_interpolant, verify_sequence, RandomParams};

fn unsat(groups: &[liaitp::formula::Formula], cuts: &[usize], engine: Engine) -> (liaitp::proofs::ResProof, Vec<liaitp::formula::Formula>) {
    match solve_and_interpolate(groups, cuts, engine, &SmtConfig::default(), &mut SmtStats::default()).unwrap() {
        ItpOutcome::Unsat { proof, interpolants } => (proof, interpolants),
        _ => panic!("expected unsat"),
    }
}

#[test]
fn disjunctive_groups_interpolate_and_verify() {
    let src = "
        (declare-fun x () Int) (declare-fun y () Int) (declare-fun z () Int)
        (assert (! (or (= (* 2 x) y) (= (* 2 x) (+ y 4))) :itp-group A))
        (assert (! (and (= y (+ (* 2 z) 1)) (<= 0 y 10)) :itp-group B))
        (get-interpolant (A))";
    let prob = parse_problem(src).unwrap();
    let (groups, cut) = prob.query_split().unwrap();
    for engine in [Engine::Ceil, Engine::ModEq] {
        let (proof, itps) = unsat(&groups, &[cut], engine);
        check_refutation(&proof).unwrap();
        let (a, b) = groups.split_at(cut);
        let report = verify_interpolant(a, b, &itps[0]).unwrap();
        assert!(report.pass(), "{engine:?}: {}", print_formula(&itps[0]));
        assert_eq!(brute_force_check(a, b, &itps[0], 6).unwrap(), None);
    }
}

#[test]
fn proofs_survive_the_text_format() {
    // First unsat instance from seed 3 on.
    let mut seed = 3;
    let mut prob = gen_random_problem(seed, &RandomParams::for_seed(seed));
    let proof = loop {
        if let Ok(ItpOutcome::Unsat { proof, .. }) =
            solve_and_interpolate(&prob.groups, &[1], Engine::Ceil, &SmtConfig::default(), &mut SmtStats::default())
        {
            break proof;
        }
        seed += 1;
        prob = gen_random_problem(seed, &RandomParams::for_seed(seed));
    };
    // Writing keeps only reachable nodes and renumbers them, so compare the
    // second generation with the first.
    let back = read_proof(&write_proof(&proof)).unwrap();
    check_refutation(&back).unwrap();
    let text = write_proof(&back);
    assert_eq!(write_proof(&read_proof(&text).unwrap()), text);
}

#[test]
fn unit_equation_chain_has_sequence_interpolants() {
    let src = "
        (declare-fun x () Int) (declare-fun y () Int)
        (assert (! (= x 0) :itp-group g0))
        (assert (! (= x y) :itp-group g1))
        (assert (! (= y 1) :itp-group g2))";
    let prob = parse_problem(src).unwrap();
    for engine in [Engine::Ceil, Engine::ModEq] {
        let (_, itps) = unsat(&prob.groups, &[1, 2], engine);
        assert_eq!(verify_sequence(&prob.groups, &itps).unwrap(), None);
    }
}

#[test]
fn printed_problem_parses_back() {
    let prob = gen_random_problem(11, &RandomParams::for_seed(11));
    let again = parse_problem(&prob.to_smtlib()).unwrap();
    assert_eq!(again.groups, prob.groups);
    assert_eq!(again.group_names, prob.group_names);
}
