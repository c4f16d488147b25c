//! In-process backend: one communicator handle per worker thread, collectives
//! rendezvous through a shared mutex.
//!
//! Rank 0's thread performs the aggregation (and the optional finalize hook),
//! mirroring the coordinator role it plays in the TCP backend. Any fault
//! (timeout, shape mismatch) poisons the cluster permanently so every rank
//! fails fast instead of hanging.

use super::{reduce_in_rank_order, CommError, Communicator, ReduceMode, MAX_SCALARS};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

#[derive(Clone, Debug, PartialEq)]
enum OpKind {
    Vector { len: usize },
    Scalars { modes: Vec<ReduceMode> },
    Barrier,
}

struct Shared {
    epoch: u64,
    kind: Option<OpKind>,
    contribs: Vec<Option<Vec<f64>>>,
    result: Option<Vec<f64>>,
    collected: usize,
    failed: Option<String>,
}

struct SharedState {
    m: Mutex<Shared>,
    cv: Condvar,
}

pub struct InProcCluster;

impl InProcCluster {
    /// One handle per rank; move each into its worker thread.
    pub fn handles(size: usize) -> Vec<InProcComm> {
        Self::handles_with_timeout(size, Duration::from_secs(120))
    }

    pub fn handles_with_timeout(size: usize, timeout: Duration) -> Vec<InProcComm> {
        assert!(size >= 1, "cluster needs at least one rank");
        let shared = Arc::new(SharedState {
            m: Mutex::new(Shared {
                epoch: 0,
                kind: None,
                contribs: vec![None; size],
                result: None,
                collected: 0,
                failed: None,
            }),
            cv: Condvar::new(),
        });
        (0..size)
            .map(|rank| InProcComm {
                rank,
                size,
                timeout,
                shared: Arc::clone(&shared),
                calls: AtomicU64::new(0),
            })
            .collect()
    }
}

pub struct InProcComm {
    rank: usize,
    size: usize,
    timeout: Duration,
    shared: Arc<SharedState>,
    /// collectives already issued through this handle
    calls: AtomicU64,
}

impl InProcComm {
    fn collective(
        &self,
        kind: OpKind,
        payload: Vec<f64>,
        finalize: Option<&dyn Fn(&mut [f64])>,
    ) -> Result<Vec<f64>, CommError> {
        let my_epoch = self.calls.fetch_add(1, Ordering::Relaxed);
        let deadline = Instant::now() + self.timeout;
        let mut guard = self.shared.m.lock().unwrap();

        // wait for the cluster to reach this call's epoch
        while guard.epoch != my_epoch {
            if let Some(msg) = &guard.failed {
                return Err(CommError::PeerFailed(msg.clone()));
            }
            guard = self.wait(guard, deadline, "waiting for prior collective")?;
        }
        if let Some(msg) = &guard.failed {
            return Err(CommError::PeerFailed(msg.clone()));
        }

        // deposit; first depositor fixes the operation shape
        match &guard.kind {
            None => guard.kind = Some(kind.clone()),
            Some(existing) if *existing != kind => {
                let msg = format!(
                    "rank {} called {:?} while cluster is running {:?}",
                    self.rank, kind, existing
                );
                return Err(self.poison(guard, msg, false));
            }
            Some(_) => {}
        }
        guard.contribs[self.rank] = Some(payload);
        self.shared.cv.notify_all();

        if self.rank == 0 {
            while !guard.contribs.iter().all(|c| c.is_some()) {
                if let Some(msg) = &guard.failed {
                    return Err(CommError::PeerFailed(msg.clone()));
                }
                guard = self.wait(guard, deadline, "waiting for contributions")?;
            }
            let contribs: Vec<Vec<f64>> =
                guard.contribs.iter().map(|c| c.clone().unwrap()).collect();
            let n = contribs[0].len();
            let modes = match guard.kind.as_ref().unwrap() {
                OpKind::Vector { .. } => vec![ReduceMode::Sum; n],
                OpKind::Scalars { modes } => modes.clone(),
                OpKind::Barrier => vec![],
            };
            let mut out = vec![0.0; n];
            reduce_in_rank_order(&contribs, &modes, &mut out);
            if let Some(f) = finalize {
                f(&mut out);
            }
            guard.result = Some(out);
            self.shared.cv.notify_all();
        }

        // collect; last collector resets the slot and opens the next epoch
        while guard.result.is_none() {
            if let Some(msg) = &guard.failed {
                return Err(CommError::PeerFailed(msg.clone()));
            }
            guard = self.wait(guard, deadline, "waiting for reduced result")?;
        }
        let out = guard.result.clone().unwrap();
        guard.collected += 1;
        if guard.collected == self.size {
            guard.kind = None;
            guard.contribs.iter_mut().for_each(|c| *c = None);
            guard.result = None;
            guard.collected = 0;
            guard.epoch += 1;
            self.shared.cv.notify_all();
        }
        Ok(out)
    }

    fn wait<'a>(
        &self,
        guard: MutexGuard<'a, Shared>,
        deadline: Instant,
        what: &str,
    ) -> Result<MutexGuard<'a, Shared>, CommError> {
        let now = Instant::now();
        if now >= deadline {
            let msg = format!("rank {} timed out {what}", self.rank);
            return Err(self.poison(guard, msg, true));
        }
        let (guard, _) = self.shared.cv.wait_timeout(guard, deadline - now).unwrap();
        Ok(guard)
    }

    /// Marks the cluster permanently failed and returns the instigator's
    /// error. Peers observe `failed` and report PeerFailed.
    fn poison(
        &self,
        mut guard: MutexGuard<'_, Shared>,
        msg: String,
        timed_out: bool,
    ) -> CommError {
        if guard.failed.is_none() {
            guard.failed = Some(msg.clone());
        }
        self.shared.cv.notify_all();
        drop(guard);
        if timed_out {
            CommError::Timeout(msg)
        } else {
            CommError::Mismatch(msg)
        }
    }
}

impl Communicator for InProcComm {
    fn rank(&self) -> usize {
        self.rank
    }

    fn size(&self) -> usize {
        self.size
    }

    fn allreduce_sum_vec(&self, v: &mut [f64]) -> Result<(), CommError> {
        let out = self.collective(OpKind::Vector { len: v.len() }, v.to_vec(), None)?;
        v.copy_from_slice(&out);
        Ok(())
    }

    fn allreduce_scalars(
        &self,
        vals: &mut [f64],
        modes: &[ReduceMode],
        finalize: Option<&dyn Fn(&mut [f64])>,
    ) -> Result<(), CommError> {
        if vals.len() != modes.len() || vals.len() > MAX_SCALARS {
            let msg = format!(
                "rank {}: scalar collective shape invalid ({} vals, {} modes)",
                self.rank,
                vals.len(),
                modes.len()
            );
            let guard = self.shared.m.lock().unwrap();
            return Err(self.poison(guard, msg, false));
        }
        let out = self.collective(
            OpKind::Scalars { modes: modes.to_vec() },
            vals.to_vec(),
            finalize,
        )?;
        vals.copy_from_slice(&out);
        Ok(())
    }

    fn barrier(&self) -> Result<(), CommError> {
        self.collective(OpKind::Barrier, vec![], None)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::thread;

    #[test]
    fn single_rank_is_identity() {
        let comms = InProcCluster::handles(1);
        let mut v = vec![1.0, -2.0];
        comms[0].allreduce_sum_vec(&mut v).unwrap();
        assert_eq!(v, vec![1.0, -2.0]);
        comms[0].barrier().unwrap();
    }

    #[test]
    fn two_ranks_sum_vec() {
        let comms = InProcCluster::handles(2);
        let results: Vec<Vec<f64>> = thread::scope(|s| {
            comms
                .iter()
                .enumerate()
                .map(|(r, c)| {
                    s.spawn(move || {
                        let mut v = vec![r as f64 + 1.0, 10.0];
                        c.allreduce_sum_vec(&mut v).unwrap();
                        v
                    })
                })
                .collect::<Vec<_>>()
                .into_iter()
                .map(|h| h.join().unwrap())
                .collect()
        });
        assert_eq!(results[0], vec![3.0, 20.0]);
        assert_eq!(results[0], results[1]);
    }

    #[test]
    fn consecutive_collectives_reuse_slot() {
        let comms = InProcCluster::handles(2);
        thread::scope(|s| {
            for c in &comms {
                s.spawn(move || {
                    for i in 0..20 {
                        let mut v = vec![i as f64];
                        c.allreduce_sum_vec(&mut v).unwrap();
                        assert_eq!(v[0], 2.0 * i as f64);
                        c.barrier().unwrap();
                    }
                });
            }
        });
    }
}
