//! Interpolating solver for quantifier-free linear integer arithmetic.

pub mod arith;
pub mod dioph;
pub mod formula;
pub mod frontend;
pub mod interp;
pub mod laz;
pub mod proofs;
pub mod sat;
pub mod simplex;
pub mod smt;
pub mod verify;
