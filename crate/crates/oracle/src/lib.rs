//! Dense, brute-force reference implementations for testing the trainer.
//! Everything here favors obviousness over speed and is never shipped.

pub mod boxqp;
pub mod brute;
pub mod dual_ref;
pub mod gen;
