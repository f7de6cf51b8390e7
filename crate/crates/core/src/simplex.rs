//! Indexing of symmetric ("simplex") tensors.
//!
//! A fully symmetric order-`n` correlation tensor on a grid of `c` points is
//! determined by its values on non-decreasing index tuples
//! `0 ≤ i₁ ≤ i₂ ≤ … ≤ iₙ < c`. This module provides the bijection between
//! such tuples (in lexicographic order) and flat storage ranks
//! `0..C(c+n−1, n)`, plus an iterator that walks the tuples in rank order.

/// Binomial coefficient `C(n, k)` computed in u128 to avoid overflow for the
/// tensor sizes that occur in practice.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Number of non-decreasing tuples of length `order` over `count` values,
/// i.e. the storage size of a symmetric tensor: `C(count + order − 1, order)`.
pub fn simplex_len(count: usize, order: usize) -> usize {
    let len = binomial(count + order - 1, order);
    usize::try_from(len).expect("simplex tensor size exceeds address space")
}

/// Number of non-decreasing tuples of length `len` with values in `[lo, count)`.
fn tail_count(lo: usize, count: usize, len: usize) -> u128 {
    if len == 0 {
        return 1;
    }
    binomial(count - lo + len - 1, len)
}

/// Lexicographic rank of a non-decreasing tuple.
///
/// Panics in debug builds if the tuple is not non-decreasing or out of range;
/// this is an internal indexing primitive and callers validate their inputs.
pub fn rank(indices: &[usize], count: usize) -> usize {
    let n = indices.len();
    let mut r: u128 = 0;
    let mut prev = 0;
    for (t, &i) in indices.iter().enumerate() {
        debug_assert!(i >= prev && i < count, "tuple not non-decreasing/in range");
        // Tuples sharing the prefix but with a smaller value at slot t.
        for w in prev..i {
            r += tail_count(w, count, n - t - 1);
        }
        prev = i;
    }
    usize::try_from(r).expect("rank exceeds address space")
}

/// Inverse of [`rank`]: the tuple at lexicographic position `r`.
pub fn unrank(mut r: u128, count: usize, order: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(order);
    let mut lo = 0;
    for t in 0..order {
        let mut w = lo;
        loop {
            let block = tail_count(w, count, order - t - 1);
            if r < block {
                break;
            }
            r -= block;
            w += 1;
        }
        out.push(w);
        lo = w;
    }
    debug_assert_eq!(r, 0);
    out
}

/// Iterator over non-decreasing tuples in lexicographic (= rank) order.
///
/// Yields `(&tuple, changed_from)` pairs where `changed_from` is the first
/// slot that differs from the previous tuple — consumers that cache
/// per-prefix work can restart from that slot.
pub struct SimplexIter {
    count: usize,
    current: Vec<usize>,
    started: bool,
    done: bool,
}

impl SimplexIter {
    pub fn new(count: usize, order: usize) -> Self {
        Self {
            count,
            current: vec![0; order],
            started: false,
            done: count == 0,
        }
    }

    /// Advance to the next tuple, returning the tuple and the index of the
    /// first changed slot (0 for the initial tuple). Returns `None` when
    /// exhausted.
    pub fn next_tuple(&mut self) -> Option<(&[usize], usize)> {
        if self.done {
            return None;
        }
        if !self.started {
            self.started = true;
            return Some((&self.current, 0));
        }
        match advance(&mut self.current, self.count) {
            Some(changed) => Some((&self.current, changed)),
            None => {
                self.done = true;
                None
            }
        }
    }
}

/// Step a non-decreasing tuple to its lexicographic successor in place.
///
/// Bumps the last slot that can still grow and resets everything after it to
/// the bumped value (keeping monotonicity). Returns the index of the first
/// changed slot, or `None` when the tuple was already the last one.
pub fn advance(tuple: &mut [usize], count: usize) -> Option<usize> {
    let n = tuple.len();
    let mut t = n;
    while t > 0 {
        if tuple[t - 1] + 1 < count {
            break;
        }
        t -= 1;
    }
    if t == 0 {
        return None;
    }
    let new_val = tuple[t - 1] + 1;
    for slot in t - 1..n {
        tuple[slot] = new_val;
    }
    Some(t - 1)
}
