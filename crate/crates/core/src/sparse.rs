//! Sparse vectors over the hashed weight space.

/// Sorted sparse vector. Indices are strictly increasing and no explicit
/// zero values are stored; construction enforces both.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseVec {
    items: Vec<(u32, f64)>,
}

impl SparseVec {
    pub fn empty() -> Self {
        SparseVec { items: Vec::new() }
    }

    /// Builds a vector from arbitrary (index, value) pairs. Duplicate
    /// indices are accumulated in their order of appearance (the sort is
    /// stable, so this is deterministic); entries that come out exactly
    /// zero are dropped.
    pub fn from_unsorted(mut pairs: Vec<(u32, f64)>) -> Self {
        pairs.sort_by_key(|&(i, _)| i);
        let mut items: Vec<(u32, f64)> = Vec::with_capacity(pairs.len());
        for (i, v) in pairs {
            match items.last_mut() {
                Some(last) if last.0 == i => last.1 += v,
                _ => items.push((i, v)),
            }
        }
        items.retain(|&(_, v)| v != 0.0);
        SparseVec { items }
    }

    pub fn nnz(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.items.iter().copied()
    }

    pub fn sq_norm(&self) -> f64 {
        self.items.iter().map(|&(_, v)| v * v).sum()
    }

    /// self - other, merged by index; exact cancellations are dropped.
    pub fn sub(&self, other: &SparseVec) -> SparseVec {
        let mut items = Vec::with_capacity(self.items.len() + other.items.len());
        let (mut a, mut b) = (0, 0);
        while a < self.items.len() && b < other.items.len() {
            let (ia, va) = self.items[a];
            let (ib, vb) = other.items[b];
            if ia < ib {
                items.push((ia, va));
                a += 1;
            } else if ib < ia {
                items.push((ib, -vb));
                b += 1;
            } else {
                let v = va - vb;
                if v != 0.0 {
                    items.push((ia, v));
                }
                a += 1;
                b += 1;
            }
        }
        items.extend(self.items[a..].iter().copied());
        items.extend(other.items[b..].iter().map(|&(i, v)| (i, -v)));
        SparseVec { items }
    }
}
