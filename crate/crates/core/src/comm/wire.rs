//! Frame format for the TCP backend.
//!
//! Every message is one frame, little-endian throughout:
//!
//! ```text
//! magic   [u8; 4] = b"BQSV"
//! type    u8
//! rank    u32     sender rank (coordinator sends its own rank, 0)
//! count   u64     element count of the payload
//! payload [f64]   meaning depends on type
//! ```
//!
//! Types:
//!   0 join            payload = [cluster size as f64]; coordinator acks a
//!                     valid join by echoing type 0 back
//!   1 dense vector    worker -> coordinator contribution, count = n
//!   2 reduced vector  coordinator -> worker result, dense or sparse layout
//!   3 scalar contrib  worker -> coordinator, count <= MAX_SCALARS
//!   4 reduced scalars coordinator -> worker
//!   5 barrier         empty payload, both directions
//!   6 error           empty payload; receiving it means the cluster is dead
//!   7 sparse vector   like 1 but payload = nnz * (index as f64, value)
//!
//! A reduced vector (type 2) reuses the sparse pair layout when the sender
//! marks it sparse; dense-vs-sparse is signaled by the type of the frame a
//! worker sent and by `count` relative to the agreed length for replies.

use super::CommError;
use std::io::{Read, Write};

pub const MAGIC: [u8; 4] = *b"BQSV";
pub const HEADER_LEN: usize = 4 + 1 + 4 + 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum MsgType {
    Join = 0,
    DenseVec = 1,
    ReducedVec = 2,
    ScalarContrib = 3,
    ReducedScalars = 4,
    Barrier = 5,
    Error = 6,
    SparseVec = 7,
}

impl MsgType {
    pub fn from_u8(b: u8) -> Option<MsgType> {
        Some(match b {
            0 => MsgType::Join,
            1 => MsgType::DenseVec,
            2 => MsgType::ReducedVec,
            3 => MsgType::ScalarContrib,
            4 => MsgType::ReducedScalars,
            5 => MsgType::Barrier,
            6 => MsgType::Error,
            7 => MsgType::SparseVec,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub msg_type: MsgType,
    pub rank: u32,
    pub payload: Vec<f64>,
}

impl Frame {
    pub fn new(msg_type: MsgType, rank: u32, payload: Vec<f64>) -> Self {
        Frame { msg_type, rank, payload }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(HEADER_LEN + 8 * self.payload.len());
        buf.extend_from_slice(&MAGIC);
        buf.push(self.msg_type as u8);
        buf.extend_from_slice(&self.rank.to_le_bytes());
        buf.extend_from_slice(&(self.payload.len() as u64).to_le_bytes());
        for x in &self.payload {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        buf
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), CommError> {
        w.write_all(&self.encode())?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Frame, CommError> {
        let mut header = [0u8; HEADER_LEN];
        r.read_exact(&mut header)?;
        if header[0..4] != MAGIC {
            return Err(CommError::PeerFailed("bad frame magic".into()));
        }
        let msg_type = MsgType::from_u8(header[4])
            .ok_or_else(|| CommError::PeerFailed(format!("unknown frame type {}", header[4])))?;
        let rank = u32::from_le_bytes(header[5..9].try_into().unwrap());
        let count = u64::from_le_bytes(header[9..17].try_into().unwrap());
        // model vectors top out at 2^30; anything bigger is a corrupt stream
        if count > (1 << 31) {
            return Err(CommError::PeerFailed(format!("frame too large: {count} elements")));
        }
        let mut payload = vec![0.0f64; count as usize];
        let mut bytes = vec![0u8; 8 * count as usize];
        r.read_exact(&mut bytes)?;
        for (i, chunk) in bytes.chunks_exact(8).enumerate() {
            payload[i] = f64::from_le_bytes(chunk.try_into().unwrap());
        }
        Ok(Frame { msg_type, rank, payload })
    }
}

/// Sparse pair encoding for a dense vector: [i0, v0, i1, v1, ...] with
/// indices stored as exactly representable f64s. Worth sending only when
/// 4 * nnz < n (two f64 per entry vs one, plus slack for decode cost).
pub fn to_sparse_pairs(v: &[f64]) -> Vec<f64> {
    let mut pairs = Vec::new();
    for (i, &x) in v.iter().enumerate() {
        if x != 0.0 {
            pairs.push(i as f64);
            pairs.push(x);
        }
    }
    pairs
}

/// Expands sparse pairs into `out` (zeroed first). Rejects malformed pairs.
pub fn from_sparse_pairs(pairs: &[f64], out: &mut [f64]) -> Result<(), CommError> {
    if pairs.len() % 2 != 0 {
        return Err(CommError::PeerFailed("odd sparse payload length".into()));
    }
    out.fill(0.0);
    for chunk in pairs.chunks_exact(2) {
        let idx = chunk[0];
        if idx < 0.0 || idx.fract() != 0.0 || idx as usize >= out.len() {
            return Err(CommError::PeerFailed(format!("bad sparse index {idx}")));
        }
        out[idx as usize] = chunk[1];
    }
    Ok(())
}

/// Whether the sparse pair layout is the cheaper encoding for `v`.
pub fn sparse_is_smaller(v: &[f64]) -> bool {
    let nnz = v.iter().filter(|x| **x != 0.0).count();
    4 * nnz < v.len()
}
