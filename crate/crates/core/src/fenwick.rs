//! Prefix-sum tree over nonnegative integer weights.
//!
//! Supports point increments and inverse-CDF lookup in `O(log n)`, which is
//! what the preferential draw needs: pick `u` uniform in `[0, total)` and find
//! the slot whose half-open interval `[prefix, prefix + weight)` contains it.

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FenwickTree {
    // 1-based implicit tree; tree[0] is unused.
    tree: Vec<u64>,
    // Largest power of two <= len, cached for the descent in `find`.
    top_bit: usize,
}

impl FenwickTree {
    pub fn new(len: usize) -> Self {
        Self {
            tree: vec![0; len + 1],
            top_bit: top_bit(len),
        }
    }

    /// Builds the tree in `O(n)` from explicit weights.
    pub fn from_weights(weights: &[u64]) -> Self {
        let mut tree = Vec::with_capacity(weights.len() + 1);
        tree.push(0);
        tree.extend_from_slice(weights);
        for i in 1..tree.len() {
            let parent = i + lsb(i);
            if parent < tree.len() {
                tree[parent] += tree[i];
            }
        }
        Self {
            tree,
            top_bit: top_bit(weights.len()),
        }
    }

    pub fn len(&self) -> usize {
        self.tree.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn add(&mut self, index: usize, delta: u64) {
        debug_assert!(index < self.len());
        let mut i = index + 1;
        let n = self.tree.len();
        while i < n {
            self.tree[i] += delta;
            i += lsb(i);
        }
    }

    /// Sum of weights in `[0, end)`.
    pub fn prefix(&self, end: usize) -> u64 {
        let mut i = end.min(self.len());
        let mut sum = 0;
        while i > 0 {
            sum += self.tree[i];
            i -= lsb(i);
        }
        sum
    }

    pub fn total(&self) -> u64 {
        self.prefix(self.len())
    }

    /// Returns the index `i` with `prefix(i) <= target < prefix(i + 1)`.
    ///
    /// Zero-weight slots own an empty interval and are never returned.
    /// `target` must be below `total()`.
    #[inline]
    pub fn find(&self, mut target: u64) -> usize {
        let n = self.len();
        let mut pos = 0usize;
        let mut step = self.top_bit;
        while step > 0 {
            let next = pos + step;
            if next <= n {
                let w = self.tree[next];
                if w <= target {
                    pos = next;
                    target -= w;
                }
            }
            step >>= 1;
        }
        pos
    }

    /// Raw internal node array (1-based), for consistency checks.
    pub fn nodes(&self) -> &[u64] {
        &self.tree[1..]
    }
}

#[inline]
fn lsb(i: usize) -> usize {
    i & i.wrapping_neg()
}

fn top_bit(n: usize) -> usize {
    if n == 0 {
        0
    } else {
        1 << (usize::BITS - 1 - n.leading_zeros())
    }
}
