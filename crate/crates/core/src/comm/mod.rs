//! Collective communication between workers.
//!
//! The trainer needs exactly two collectives per outer iteration: an
//! allreduce over one dense model-sized vector and an allreduce over a
//! handful of scalars. Both backends (in-process threads, TCP) reduce
//! contributions in rank order starting from the mode's identity, so every
//! worker sees bit-identical results regardless of transport.

pub mod inproc;
pub mod tcp;
pub mod wire;

use std::fmt;

/// Upper bound on scalars per `allreduce_scalars` call. Small on purpose:
/// the trainer's largest scalar collective has five fields.
pub const MAX_SCALARS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceMode {
    Sum,
    Min,
}

impl ReduceMode {
    pub fn identity(self) -> f64 {
        match self {
            ReduceMode::Sum => 0.0,
            ReduceMode::Min => f64::INFINITY,
        }
    }

    pub fn combine(self, acc: f64, x: f64) -> f64 {
        match self {
            ReduceMode::Sum => acc + x,
            ReduceMode::Min => acc.min(x),
        }
    }
}

#[derive(Debug)]
pub enum CommError {
    /// A peer disconnected, crashed, or sent garbage.
    PeerFailed(String),
    /// A collective did not complete within the configured timeout.
    Timeout(String),
    /// Callers disagreed on the shape of a collective (lengths, modes).
    Mismatch(String),
    Io(std::io::Error),
}

impl fmt::Display for CommError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CommError::PeerFailed(m) => write!(f, "peer failed: {m}"),
            CommError::Timeout(m) => write!(f, "collective timed out: {m}"),
            CommError::Mismatch(m) => write!(f, "collective mismatch: {m}"),
            CommError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for CommError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            CommError::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for CommError {
    fn from(e: std::io::Error) -> Self {
        CommError::Io(e)
    }
}

/// A worker's endpoint into the cluster. All collectives are synchronous and
/// must be called by every rank in the same order with matching shapes.
pub trait Communicator {
    fn rank(&self) -> usize;
    fn size(&self) -> usize;

    /// Element-wise sum of `v` across all ranks, written back into `v`.
    /// Contributions combine in rank order, so the result is deterministic.
    fn allreduce_sum_vec(&self, v: &mut [f64]) -> Result<(), CommError>;

    /// Reduces `vals[k]` with `modes[k]` across ranks. If `finalize` is
    /// given, rank 0 applies it to the reduced values before they are
    /// shared, so every rank receives the finalized result. This is how a
    /// quantity computed once (for example a step size) reaches all ranks
    /// without a second round trip.
    fn allreduce_scalars(
        &self,
        vals: &mut [f64],
        modes: &[ReduceMode],
        finalize: Option<&dyn Fn(&mut [f64])>,
    ) -> Result<(), CommError>;

    fn barrier(&self) -> Result<(), CommError>;

    /// Sum-reduce without a finalize hook.
    fn allreduce_sum_scalars(&self, vals: &mut [f64]) -> Result<(), CommError> {
        let modes = vec![ReduceMode::Sum; vals.len()];
        self.allreduce_scalars(vals, &modes, None)
    }
}

/// Folds per-rank contributions into `out` in rank order from the identity.
/// Both backends funnel their aggregation through this so transports agree
/// bitwise. `contribs[r]` is rank r's vector.
pub(crate) fn reduce_in_rank_order(
    contribs: &[Vec<f64>],
    modes: &[ReduceMode],
    out: &mut [f64],
) {
    for (k, slot) in out.iter_mut().enumerate() {
        let mode = modes[k];
        let mut acc = mode.identity();
        for c in contribs {
            acc = mode.combine(acc, c[k]);
        }
        *slot = acc;
    }
}
