//! Linear-chain sequence labeling with first-order transitions.

use super::{Feature, StructureKey, StructuredTask, TaskError, TaskInput, TaskInstance, MAX_ENUMERATION};
use crate::hashing::{hash_feature, FeatureKey};
use crate::model::ModelVector;
use crate::sparse::SparseVec;

/// Emission features pair each token feature with the position's label
/// ("emit", label LE bytes || feature id); every adjacent label pair emits
/// one unit transition feature ("trans", prev LE bytes || next LE bytes).
/// Hamming loss decomposes per position, so loss-augmented decoding is the
/// same first-order DP with a shifted node score.
pub struct ChainTask {
    num_labels: u32,
    hash_bits: u32,
}

impl ChainTask {
    pub fn new(num_labels: u32, hash_bits: u32) -> Self {
        assert!(num_labels >= 1);
        ChainTask { num_labels, hash_bits }
    }

    pub fn num_labels(&self) -> u32 {
        self.num_labels
    }

    fn emit_index(&self, label: u32, feature: &Feature, scratch: &mut Vec<u8>) -> u32 {
        scratch.clear();
        scratch.extend_from_slice(&label.to_le_bytes());
        scratch.extend_from_slice(&feature.id);
        hash_feature(FeatureKey { namespace: "emit", payload: scratch }, self.hash_bits)
    }

    fn trans_index(&self, prev: u32, next: u32, scratch: &mut Vec<u8>) -> u32 {
        scratch.clear();
        scratch.extend_from_slice(&prev.to_le_bytes());
        scratch.extend_from_slice(&next.to_le_bytes());
        hash_feature(FeatureKey { namespace: "trans", payload: scratch }, self.hash_bits)
    }

    fn tokens<'a>(&self, inst: &'a TaskInstance) -> Result<&'a [Vec<Feature>], TaskError> {
        match &inst.input {
            TaskInput::Tokens(t) => Ok(t),
            TaskInput::Bag(_) => Err(TaskError::IncompatibleStructure {
                id: inst.id,
                reason: "expected a token sequence".into(),
            }),
        }
    }

    fn tags_of<'a>(&self, inst: &TaskInstance, y: &'a StructureKey, len: usize) -> Result<&'a [u32], TaskError> {
        let tags = match y {
            StructureKey::Tags(t) => t,
            StructureKey::Class(_) => {
                return Err(TaskError::IncompatibleStructure {
                    id: inst.id,
                    reason: "expected a tag sequence".into(),
                })
            }
        };
        if tags.len() != len {
            return Err(TaskError::IncompatibleStructure {
                id: inst.id,
                reason: format!("structure length {} != sequence length {}", tags.len(), len),
            });
        }
        if let Some(&bad) = tags.iter().find(|&&l| l >= self.num_labels) {
            return Err(TaskError::IncompatibleStructure {
                id: inst.id,
                reason: format!("label {bad} out of range 0..{}", self.num_labels),
            });
        }
        Ok(tags)
    }

    fn gold_tags<'a>(&self, inst: &'a TaskInstance) -> &'a [u32] {
        match &inst.gold {
            StructureKey::Tags(t) => t,
            _ => panic!("chain gold must be a tag sequence"),
        }
    }

    fn emission_score(&self, w: &ModelVector, feats: &[Feature], label: u32, scratch: &mut Vec<u8>) -> f64 {
        feats
            .iter()
            .map(|f| w.get(self.emit_index(label, f, scratch)) * f.value)
            .sum()
    }

    /// w . joint(x, tags), summed position by position.
    fn path_score(&self, w: &ModelVector, toks: &[Vec<Feature>], tags: &[u32]) -> f64 {
        let mut scratch = Vec::new();
        let mut s = 0.0;
        for (t, feats) in toks.iter().enumerate() {
            s += self.emission_score(w, feats, tags[t], &mut scratch);
        }
        for t in 0..tags.len().saturating_sub(1) {
            s += w.get(self.trans_index(tags[t], tags[t + 1], &mut scratch));
        }
        s
    }

    /// Max-sum decoding. `augment` adds a unit node score wherever the label
    /// disagrees with gold. Runs the DP backward and then selects labels
    /// front to back taking the smallest label that attains the optimum, so
    /// among all optimal paths the lexicographically smallest one is
    /// returned.
    fn viterbi(&self, w: &ModelVector, toks: &[Vec<Feature>], augment: Option<&[u32]>) -> (Vec<u32>, f64) {
        let n = toks.len();
        let m = self.num_labels as usize;
        if n == 0 {
            return (Vec::new(), 0.0);
        }
        let mut scratch = Vec::new();

        let mut node = vec![0.0f64; n * m];
        for (t, feats) in toks.iter().enumerate() {
            for y in 0..m {
                let mut s = self.emission_score(w, feats, y as u32, &mut scratch);
                if let Some(gold) = augment {
                    if y as u32 != gold[t] {
                        s += 1.0;
                    }
                }
                node[t * m + y] = s;
            }
        }

        let mut edge = vec![0.0f64; m * m];
        if n > 1 {
            for a in 0..m {
                for b in 0..m {
                    edge[a * m + b] = w.get(self.trans_index(a as u32, b as u32, &mut scratch));
                }
            }
        }

        // suffix[t*m + y]: best score of positions t+1.. given label y at t
        let mut suffix = vec![0.0f64; n * m];
        for t in (0..n - 1).rev() {
            for y in 0..m {
                let mut best = f64::NEG_INFINITY;
                for b in 0..m {
                    let s = edge[y * m + b] + node[(t + 1) * m + b] + suffix[(t + 1) * m + b];
                    if s > best {
                        best = s;
                    }
                }
                suffix[t * m + y] = best;
            }
        }

        let mut tags = Vec::with_capacity(n);
        let mut total = f64::NEG_INFINITY;
        let mut prev = 0usize;
        for y in 0..m {
            let s = node[y] + suffix[y];
            if s > total {
                total = s;
                prev = y;
            }
        }
        tags.push(prev as u32);
        for t in 1..n {
            let mut best = f64::NEG_INFINITY;
            let mut pick = 0usize;
            for b in 0..m {
                let s = edge[prev * m + b] + node[t * m + b] + suffix[t * m + b];
                if s > best {
                    best = s;
                    pick = b;
                }
            }
            tags.push(pick as u32);
            prev = pick;
        }
        (tags, total)
    }
}

impl StructuredTask for ChainTask {
    fn joint_features(&self, inst: &TaskInstance, y: &StructureKey) -> Result<SparseVec, TaskError> {
        let toks = self.tokens(inst)?;
        let tags = self.tags_of(inst, y, toks.len())?;
        let mut scratch = Vec::new();
        let mut pairs = Vec::new();
        for (t, feats) in toks.iter().enumerate() {
            for f in feats {
                pairs.push((self.emit_index(tags[t], f, &mut scratch), f.value));
            }
        }
        for t in 0..tags.len().saturating_sub(1) {
            pairs.push((self.trans_index(tags[t], tags[t + 1], &mut scratch), 1.0));
        }
        Ok(SparseVec::from_unsorted(pairs))
    }

    fn phi_diff(&self, inst: &TaskInstance, y: &StructureKey) -> Result<SparseVec, TaskError> {
        let toks = self.tokens(inst)?;
        let tags = self.tags_of(inst, y, toks.len())?;
        let gold = self.gold_tags(inst);
        let mut scratch = Vec::new();
        let mut pairs = Vec::new();
        for (t, feats) in toks.iter().enumerate() {
            if gold[t] == tags[t] {
                continue; // identical contributions cancel exactly
            }
            for f in feats {
                pairs.push((self.emit_index(gold[t], f, &mut scratch), f.value));
                pairs.push((self.emit_index(tags[t], f, &mut scratch), -f.value));
            }
        }
        for t in 0..tags.len().saturating_sub(1) {
            if (gold[t], gold[t + 1]) == (tags[t], tags[t + 1]) {
                continue;
            }
            pairs.push((self.trans_index(gold[t], gold[t + 1], &mut scratch), 1.0));
            pairs.push((self.trans_index(tags[t], tags[t + 1], &mut scratch), -1.0));
        }
        Ok(SparseVec::from_unsorted(pairs))
    }

    fn loss(&self, gold: &StructureKey, y: &StructureKey) -> Result<f64, TaskError> {
        match (gold, y) {
            (StructureKey::Tags(g), StructureKey::Tags(t)) => {
                if g.len() != t.len() {
                    return Err(TaskError::ShapeMismatch);
                }
                Ok(g.iter().zip(t).filter(|(a, b)| a != b).count() as f64)
            }
            _ => Err(TaskError::ShapeMismatch),
        }
    }

    fn loss_augmented_argmax(&self, w: &ModelVector, inst: &TaskInstance) -> (StructureKey, f64) {
        let toks = self.tokens(inst).expect("decode requires a token sequence");
        let gold = self.gold_tags(inst);
        let (tags, total) = self.viterbi(w, toks, Some(gold));
        let violation = total - self.path_score(w, toks, gold);
        (StructureKey::Tags(tags), violation)
    }

    fn predict(&self, w: &ModelVector, inst: &TaskInstance) -> StructureKey {
        let toks = self.tokens(inst).expect("decode requires a token sequence");
        StructureKey::Tags(self.viterbi(w, toks, None).0)
    }

    fn enumerate_structures(&self, inst: &TaskInstance) -> Result<Vec<StructureKey>, TaskError> {
        let toks = self.tokens(inst)?;
        let n = toks.len() as u32;
        let size = (self.num_labels as u64)
            .checked_pow(n)
            .unwrap_or(u64::MAX);
        if size > MAX_ENUMERATION {
            return Err(TaskError::EnumerationTooLarge { size, limit: MAX_ENUMERATION });
        }
        // odometer with the last position fastest = lexicographic order
        let mut out = Vec::with_capacity(size as usize);
        let mut cur = vec![0u32; toks.len()];
        if toks.is_empty() {
            out.push(StructureKey::Tags(Vec::new()));
            return Ok(out);
        }
        loop {
            out.push(StructureKey::Tags(cur.clone()));
            let mut pos = toks.len();
            loop {
                if pos == 0 {
                    return Ok(out);
                }
                pos -= 1;
                cur[pos] += 1;
                if cur[pos] < self.num_labels {
                    break;
                }
                cur[pos] = 0;
            }
        }
    }
}
