//! TCP backend: star topology, rank 0 coordinates.
//!
//! Workers send contributions upstream, the coordinator folds them in rank
//! order (its own first), applies the finalize hook, and broadcasts the
//! result. Reduction goes through the same fold as the in-process backend,
//! so the two transports produce bit-identical values.
//!
//! Vector payloads switch to a sparse pair encoding when 4 * nnz < n. A
//! reduced-vector reply shorter than the agreed length is sparse; the
//! coordinator never emits a sparse reply of length n, so the decode is
//! unambiguous.

use super::wire::{self, Frame, MsgType};
use super::{reduce_in_rank_order, CommError, Communicator, ReduceMode, MAX_SCALARS};
use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::thread;
use std::time::{Duration, Instant};

/// Accepts joins from ranks 1..size, then becomes the rank-0 communicator.
pub struct TcpCoordinator {
    listener: TcpListener,
    size: usize,
    timeout: Duration,
}

impl TcpCoordinator {
    pub fn bind<A: ToSocketAddrs>(
        addr: A,
        size: usize,
        timeout: Duration,
    ) -> Result<Self, CommError> {
        assert!(size >= 1, "cluster needs at least one rank");
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        Ok(TcpCoordinator { listener, size, timeout })
    }

    pub fn local_addr(&self) -> Result<SocketAddr, CommError> {
        Ok(self.listener.local_addr()?)
    }

    /// Blocks until every worker has joined. A malformed join (wrong rank,
    /// wrong cluster size, duplicate) is answered with an error frame and
    /// aborts the whole startup rather than waiting out the timeout.
    pub fn accept(self) -> Result<TcpComm, CommError> {
        let deadline = Instant::now() + self.timeout;
        let mut slots: Vec<Option<TcpStream>> = (1..self.size).map(|_| None).collect();
        let mut joined = 0usize;
        while joined + 1 < self.size {
            let stream = match self.listener.accept() {
                Ok((s, _)) => s,
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                    if Instant::now() >= deadline {
                        return Err(CommError::Timeout(format!(
                            "{} of {} workers joined",
                            joined,
                            self.size - 1
                        )));
                    }
                    thread::sleep(Duration::from_millis(5));
                    continue;
                }
                Err(e) => return Err(e.into()),
            };
            stream.set_nonblocking(false)?;
            stream.set_nodelay(true)?;
            stream.set_read_timeout(Some(self.timeout))?;
            let join = Frame::read_from(&mut (&stream)).map_err(map_read_err)?;
            let reason = if join.msg_type != MsgType::Join {
                Some(format!("expected join, got {:?}", join.msg_type))
            } else if join.rank == 0 || join.rank as usize >= self.size {
                Some(format!("rank {} out of range for size {}", join.rank, self.size))
            } else if join.payload != [self.size as f64] {
                Some(format!("peer disagrees on cluster size {}", self.size))
            } else if slots[join.rank as usize - 1].is_some() {
                Some(format!("duplicate join for rank {}", join.rank))
            } else {
                None
            };
            if let Some(reason) = reason {
                let _ = Frame::new(MsgType::Error, 0, vec![]).write_to(&mut (&stream));
                return Err(CommError::PeerFailed(reason));
            }
            Frame::new(MsgType::Join, 0, vec![self.size as f64]).write_to(&mut (&stream))?;
            slots[join.rank as usize - 1] = Some(stream);
            joined += 1;
        }
        Ok(TcpComm {
            rank: 0,
            size: self.size,
            role: Role::Coordinator {
                workers: slots.into_iter().map(Option::unwrap).collect(),
            },
        })
    }
}

enum Role {
    /// workers[r - 1] is the stream to rank r
    Coordinator { workers: Vec<TcpStream> },
    Worker { up: TcpStream },
}

pub struct TcpComm {
    rank: usize,
    size: usize,
    role: Role,
}

#[derive(Debug)]
enum Op<'a> {
    Vector,
    Scalars { modes: &'a [ReduceMode] },
    Barrier,
}

impl TcpComm {
    /// Joins the cluster as `rank` (1..size), retrying the connection until
    /// the coordinator comes up or `timeout` elapses.
    pub fn connect<A: ToSocketAddrs + Clone>(
        addr: A,
        rank: usize,
        size: usize,
        timeout: Duration,
    ) -> Result<TcpComm, CommError> {
        assert!(rank >= 1 && rank < size, "worker ranks are 1..size");
        let deadline = Instant::now() + timeout;
        let stream = loop {
            match TcpStream::connect(addr.clone()) {
                Ok(s) => break s,
                Err(e) => {
                    if Instant::now() >= deadline {
                        return Err(CommError::Timeout(format!("connecting to coordinator: {e}")));
                    }
                    thread::sleep(Duration::from_millis(20));
                }
            }
        };
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(timeout))?;
        Frame::new(MsgType::Join, rank as u32, vec![size as f64]).write_to(&mut (&stream))?;
        let ack = Frame::read_from(&mut (&stream)).map_err(map_read_err)?;
        match ack.msg_type {
            MsgType::Join => Ok(TcpComm { rank, size, role: Role::Worker { up: stream } }),
            MsgType::Error => Err(CommError::PeerFailed("coordinator rejected join".into())),
            t => Err(CommError::PeerFailed(format!("unexpected join reply {t:?}"))),
        }
    }

    fn collective(
        &self,
        payload: Vec<f64>,
        op: Op<'_>,
        finalize: Option<&dyn Fn(&mut [f64])>,
    ) -> Result<Vec<f64>, CommError> {
        match &self.role {
            Role::Coordinator { workers } => self.coordinate(workers, payload, &op, finalize),
            Role::Worker { up } => self.exchange(up, payload, &op),
        }
    }

    fn coordinate(
        &self,
        workers: &[TcpStream],
        my: Vec<f64>,
        op: &Op<'_>,
        finalize: Option<&dyn Fn(&mut [f64])>,
    ) -> Result<Vec<f64>, CommError> {
        let n = my.len();
        let mut contribs: Vec<Vec<f64>> = Vec::with_capacity(self.size);
        contribs.push(my);
        for (i, w) in workers.iter().enumerate() {
            let rank = i + 1;
            let frame = match Frame::read_from(&mut (&*w)) {
                Ok(f) => f,
                Err(e) => {
                    self.broadcast_error(workers);
                    return Err(map_read_err(e));
                }
            };
            let payload = match (op, frame.msg_type) {
                (Op::Vector, MsgType::DenseVec) if frame.payload.len() == n => frame.payload,
                (Op::Vector, MsgType::SparseVec) => {
                    let mut dense = vec![0.0; n];
                    if let Err(e) = wire::from_sparse_pairs(&frame.payload, &mut dense) {
                        self.broadcast_error(workers);
                        return Err(e);
                    }
                    dense
                }
                (Op::Scalars { .. }, MsgType::ScalarContrib) if frame.payload.len() == n => {
                    frame.payload
                }
                (Op::Barrier, MsgType::Barrier) => vec![],
                (_, t) => {
                    self.broadcast_error(workers);
                    return Err(CommError::Mismatch(format!(
                        "rank {rank} sent {t:?} ({} elems) during {op:?} of {n}",
                        frame.payload.len()
                    )));
                }
            };
            contribs.push(payload);
        }

        let modes: Vec<ReduceMode> = match op {
            Op::Vector => vec![ReduceMode::Sum; n],
            Op::Scalars { modes } => modes.to_vec(),
            Op::Barrier => vec![],
        };
        let mut out = vec![0.0; modes.len()];
        reduce_in_rank_order(&contribs, &modes, &mut out);
        if let Some(f) = finalize {
            f(&mut out);
        }

        let reply = match op {
            Op::Vector if wire::sparse_is_smaller(&out) => {
                Frame::new(MsgType::ReducedVec, 0, wire::to_sparse_pairs(&out))
            }
            Op::Vector => Frame::new(MsgType::ReducedVec, 0, out.clone()),
            Op::Scalars { .. } => Frame::new(MsgType::ReducedScalars, 0, out.clone()),
            Op::Barrier => Frame::new(MsgType::Barrier, 0, vec![]),
        };
        for w in workers {
            reply.write_to(&mut (&*w))?;
        }
        Ok(out)
    }

    fn exchange(
        &self,
        up: &TcpStream,
        payload: Vec<f64>,
        op: &Op<'_>,
    ) -> Result<Vec<f64>, CommError> {
        let n = payload.len();
        let rank = self.rank as u32;
        let frame = match op {
            Op::Vector if wire::sparse_is_smaller(&payload) => {
                Frame::new(MsgType::SparseVec, rank, wire::to_sparse_pairs(&payload))
            }
            Op::Vector => Frame::new(MsgType::DenseVec, rank, payload),
            Op::Scalars { .. } => Frame::new(MsgType::ScalarContrib, rank, payload),
            Op::Barrier => Frame::new(MsgType::Barrier, rank, vec![]),
        };
        frame.write_to(&mut (&*up))?;
        let reply = Frame::read_from(&mut (&*up)).map_err(map_read_err)?;
        match (op, reply.msg_type) {
            (_, MsgType::Error) => {
                Err(CommError::PeerFailed("coordinator reported a cluster failure".into()))
            }
            (Op::Vector, MsgType::ReducedVec) => {
                if reply.payload.len() == n {
                    Ok(reply.payload)
                } else {
                    let mut dense = vec![0.0; n];
                    wire::from_sparse_pairs(&reply.payload, &mut dense)?;
                    Ok(dense)
                }
            }
            (Op::Scalars { .. }, MsgType::ReducedScalars) if reply.payload.len() == n => {
                Ok(reply.payload)
            }
            (Op::Barrier, MsgType::Barrier) => Ok(vec![]),
            (_, t) => Err(CommError::PeerFailed(format!("unexpected reply {t:?} to {op:?}"))),
        }
    }

    fn broadcast_error(&self, workers: &[TcpStream]) {
        let frame = Frame::new(MsgType::Error, 0, vec![]);
        for w in workers {
            let _ = frame.write_to(&mut (&*w));
        }
    }
}

impl Communicator for TcpComm {
    fn rank(&self) -> usize {
        self.rank
    }

    fn size(&self) -> usize {
        self.size
    }

    fn allreduce_sum_vec(&self, v: &mut [f64]) -> Result<(), CommError> {
        let out = self.collective(v.to_vec(), Op::Vector, None)?;
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
            return Err(CommError::Mismatch(format!(
                "scalar collective shape invalid ({} vals, {} modes)",
                vals.len(),
                modes.len()
            )));
        }
        let out = self.collective(vals.to_vec(), Op::Scalars { modes }, finalize)?;
        vals.copy_from_slice(&out);
        Ok(())
    }

    fn barrier(&self) -> Result<(), CommError> {
        self.collective(vec![], Op::Barrier, None)?;
        Ok(())
    }
}

fn map_read_err(e: CommError) -> CommError {
    match e {
        CommError::Io(ref io_err) => match io_err.kind() {
            io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => {
                CommError::Timeout("read timed out".into())
            }
            io::ErrorKind::UnexpectedEof => {
                CommError::PeerFailed("peer closed the connection".into())
            }
            _ => e,
        },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::thread;

    fn pair(timeout: Duration) -> (TcpComm, TcpComm) {
        let coord = TcpCoordinator::bind("127.0.0.1:0", 2, timeout).unwrap();
        let addr = coord.local_addr().unwrap();
        let worker = thread::spawn(move || TcpComm::connect(addr, 1, 2, timeout).unwrap());
        let c0 = coord.accept().unwrap();
        (c0, worker.join().unwrap())
    }

    #[test]
    fn two_ranks_sum_vec() {
        let (c0, c1) = pair(Duration::from_secs(5));
        let h1 = thread::spawn(move || {
            let mut v = vec![2.0, 0.5];
            c1.allreduce_sum_vec(&mut v).unwrap();
            v
        });
        let mut v = vec![1.0, 0.25];
        c0.allreduce_sum_vec(&mut v).unwrap();
        assert_eq!(v, vec![3.0, 0.75]);
        assert_eq!(h1.join().unwrap(), v);
    }

    #[test]
    fn join_with_wrong_size_is_rejected() {
        let coord = TcpCoordinator::bind("127.0.0.1:0", 2, Duration::from_secs(5)).unwrap();
        let addr = coord.local_addr().unwrap();
        let worker = thread::spawn(move || TcpComm::connect(addr, 1, 3, Duration::from_secs(5)));
        assert!(matches!(coord.accept(), Err(CommError::PeerFailed(_))));
        assert!(matches!(worker.join().unwrap(), Err(CommError::PeerFailed(_))));
    }

    #[test]
    fn duplicate_rank_is_rejected() {
        let coord = TcpCoordinator::bind("127.0.0.1:0", 3, Duration::from_secs(5)).unwrap();
        let addr = coord.local_addr().unwrap();
        let w1 = thread::spawn(move || TcpComm::connect(addr, 1, 3, Duration::from_secs(5)));
        let w2 = thread::spawn(move || {
            thread::sleep(Duration::from_millis(150));
            TcpComm::connect(addr, 1, 3, Duration::from_secs(5))
        });
        assert!(coord.accept().is_err());
        // exactly one of the two same-rank joins is acked before the abort
        let oks = [w1.join().unwrap().is_ok(), w2.join().unwrap().is_ok()];
        assert!(oks.iter().filter(|x| **x).count() <= 1);
    }

    #[test]
    fn single_rank_cluster_needs_no_peers() {
        let coord = TcpCoordinator::bind("127.0.0.1:0", 1, Duration::from_secs(1)).unwrap();
        let c0 = coord.accept().unwrap();
        let mut v = vec![4.0];
        c0.allreduce_sum_vec(&mut v).unwrap();
        assert_eq!(v, vec![4.0]);
        c0.barrier().unwrap();
    }
}
