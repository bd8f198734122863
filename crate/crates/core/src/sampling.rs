//! Mask and mini-batch schedules.
//!
//! Masks come from chunking random permutations of the rows: within one
//! permutation the `r` chunks are disjoint and cover every row once. Batches
//! are consecutive slices of a per-epoch permutation of the columns.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ModlError, Result};

/// Rows selected for one iteration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Mask {
    /// Every row (no subsampling).
    Full,
    /// Sorted row indices.
    Rows(Vec<usize>),
}

impl Mask {
    pub fn len(&self, p: usize) -> usize {
        match self {
            Mask::Full => p,
            Mask::Rows(r) => r.len(),
        }
    }

    pub fn to_rows(&self, p: usize) -> Vec<usize> {
        match self {
            Mask::Full => (0..p).collect(),
            Mask::Rows(r) => r.clone(),
        }
    }
}

/// Serializable position of a schedule's generator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngCursor {
    pub seed: u64,
    pub word_pos: u128,
}

fn rng_at(cursor: &RngCursor) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(cursor.seed);
    rng.set_word_pos(cursor.word_pos);
    rng
}

#[derive(Debug, Clone)]
pub struct MaskSchedule {
    p: usize,
    r: usize,
    seed: u64,
    rng: ChaCha8Rng,
    perm: Vec<usize>,
    /// Index of the next chunk in the current permutation; `r` when exhausted.
    chunk: usize,
}

impl MaskSchedule {
    pub fn new(p: usize, r: usize, seed: u64) -> Result<Self> {
        if r == 0 || r > p {
            return Err(ModlError::InvalidConfig(format!(
                "reduction factor must satisfy 1 <= r <= p, got r = {r}, p = {p}"
            )));
        }
        Ok(MaskSchedule {
            p,
            r,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            perm: Vec::new(),
            chunk: r,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn reduction(&self) -> usize {
        self.r
    }

    /// Bounds of chunk `i`; the last chunk absorbs the remainder.
    fn chunk_bounds(&self, i: usize) -> (usize, usize) {
        let size = self.p / self.r;
        let start = i * size;
        let end = if i + 1 == self.r { self.p } else { start + size };
        (start, end)
    }

    pub fn next_mask(&mut self) -> Mask {
        if self.r == 1 {
            return Mask::Full;
        }
        if self.chunk == self.r {
            self.perm = (0..self.p).collect();
            self.perm.shuffle(&mut self.rng);
            self.chunk = 0;
        }
        let (start, end) = self.chunk_bounds(self.chunk);
        self.chunk += 1;
        let mut rows = self.perm[start..end].to_vec();
        rows.sort_unstable();
        Mask::Rows(rows)
    }

    /// Chunks a caller-supplied permutation the same way `next_mask` does.
    pub fn chunk_permutation(&self, perm: &[usize]) -> Vec<Vec<usize>> {
        (0..self.r)
            .map(|i| {
                let (s, e) = self.chunk_bounds(i);
                let mut rows = perm[s..e].to_vec();
                rows.sort_unstable();
                rows
            })
            .collect()
    }

    pub(crate) fn state(&self) -> (RngCursor, Vec<usize>, usize) {
        (
            RngCursor {
                seed: self.seed,
                word_pos: self.rng.get_word_pos(),
            },
            self.perm.clone(),
            self.chunk,
        )
    }

    pub(crate) fn restore(p: usize, r: usize, cursor: &RngCursor, perm: Vec<usize>, chunk: usize) -> Result<Self> {
        let mut s = MaskSchedule::new(p, r, cursor.seed)?;
        if chunk > r || (chunk < r && perm.len() != p) {
            return Err(ModlError::Checkpoint("mask schedule cursor is inconsistent".into()));
        }
        s.rng = rng_at(cursor);
        s.perm = perm;
        s.chunk = chunk;
        Ok(s)
    }
}

#[derive(Debug, Clone)]
pub struct BatchSchedule {
    n: usize,
    batch_size: usize,
    seed: u64,
    rng: ChaCha8Rng,
    perm: Vec<usize>,
    cursor: usize,
    epochs_started: u64,
    /// Stop instead of reshuffling once this many epochs were emitted.
    max_epochs: Option<u64>,
}

impl BatchSchedule {
    pub fn new(n: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size == 0 || batch_size > n {
            return Err(ModlError::InvalidConfig(format!(
                "batch size must satisfy 1 <= batch <= n, got {batch_size} for n = {n}"
            )));
        }
        Ok(BatchSchedule {
            n,
            batch_size,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            perm: Vec::new(),
            cursor: 0,
            epochs_started: 0,
            max_epochs: None,
        })
    }

    /// Bounded-epoch mode: `next_batch` returns `None` after `epochs` passes.
    pub fn bounded(mut self, epochs: u64) -> Self {
        self.max_epochs = Some(epochs);
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    /// Next column indices. An epoch's last batch is shorter when the batch
    /// size does not divide `n`.
    pub fn next_batch(&mut self) -> Option<Vec<usize>> {
        if self.cursor == self.perm.len() {
            if self.max_epochs.is_some_and(|m| self.epochs_started >= m) {
                return None;
            }
            self.perm = (0..self.n).collect();
            self.perm.shuffle(&mut self.rng);
            self.cursor = 0;
            self.epochs_started += 1;
        }
        let end = (self.cursor + self.batch_size).min(self.n);
        let batch = self.perm[self.cursor..end].to_vec();
        self.cursor = end;
        Some(batch)
    }

    pub(crate) fn state(&self) -> (RngCursor, Vec<usize>, usize, u64) {
        (
            RngCursor {
                seed: self.seed,
                word_pos: self.rng.get_word_pos(),
            },
            self.perm.clone(),
            self.cursor,
            self.epochs_started,
        )
    }

    pub(crate) fn restore(
        n: usize,
        batch_size: usize,
        cursor_rng: &RngCursor,
        perm: Vec<usize>,
        cursor: usize,
        epochs_started: u64,
    ) -> Result<Self> {
        let mut s = BatchSchedule::new(n, batch_size, cursor_rng.seed)?;
        if cursor > perm.len() || !(perm.is_empty() || perm.len() == n) {
            return Err(ModlError::Checkpoint("batch schedule cursor is inconsistent".into()));
        }
        s.rng = rng_at(cursor_rng);
        s.perm = perm;
        s.cursor = cursor;
        s.epochs_started = epochs_started;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunking_by_definition() {
        let s = MaskSchedule::new(6, 3, 0).unwrap();
        assert_eq!(
            s.chunk_permutation(&[4, 2, 0, 5, 1, 3]),
            vec![vec![2, 4], vec![0, 5], vec![1, 3]]
        );
    }

    #[test]
    fn remainder_goes_to_last_chunk() {
        let s = MaskSchedule::new(10, 3, 0).unwrap();
        let chunks = s.chunk_permutation(&(0..10).collect::<Vec<_>>());
        assert_eq!(chunks.iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 3, 4]);
    }

    #[test]
    fn no_reduction_means_full_masks() {
        let mut s = MaskSchedule::new(5, 1, 0).unwrap();
        for _ in 0..3 {
            assert_eq!(s.next_mask(), Mask::Full);
        }
    }

    #[test]
    fn each_cycle_covers_every_row_once() {
        let (p, r) = (100, 10);
        let mut s = MaskSchedule::new(p, r, 42).unwrap();
        let mut freq = vec![0u32; p];
        for cycle in 0..1000 {
            let mut seen = vec![false; p];
            for _ in 0..r {
                let Mask::Rows(rows) = s.next_mask() else { panic!() };
                assert_eq!(rows.len(), 10);
                for m in rows {
                    assert!(!seen[m], "row {m} twice in cycle {cycle}");
                    seen[m] = true;
                    freq[m] += 1;
                }
            }
            assert!(seen.iter().all(|&b| b));
        }
        // 10⁴ masks: each row exactly 1/r of the time
        assert!(freq.iter().all(|&f| f == 1000));
    }

    #[test]
    fn mask_sequences_are_reproducible() {
        let mut a = MaskSchedule::new(37, 4, 9).unwrap();
        let mut b = MaskSchedule::new(37, 4, 9).unwrap();
        for _ in 0..20 {
            assert_eq!(a.next_mask(), b.next_mask());
        }
    }

    #[test]
    fn whole_dataset_batch() {
        let mut s = BatchSchedule::new(7, 7, 1).unwrap();
        let mut b = s.next_batch().unwrap();
        b.sort_unstable();
        assert_eq!(b, (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn bounded_epochs_cover_each_column() {
        let mut s = BatchSchedule::new(10, 3, 5).unwrap().bounded(2);
        let mut count = [0; 10];
        let mut batches = 0;
        while let Some(b) = s.next_batch() {
            batches += 1;
            for c in b {
                count[c] += 1;
            }
        }
        assert_eq!(batches, 8);
        assert!(count.iter().all(|&c| c == 2));
    }

    #[test]
    fn restore_continues_the_sequence() {
        let mut a = MaskSchedule::new(30, 4, 3).unwrap();
        for _ in 0..6 {
            a.next_mask();
        }
        let (cur, perm, chunk) = a.state();
        let mut b = MaskSchedule::restore(30, 4, &cur, perm, chunk).unwrap();
        for _ in 0..20 {
            assert_eq!(a.next_mask(), b.next_mask());
        }

        let mut a = BatchSchedule::new(11, 4, 3).unwrap();
        for _ in 0..5 {
            a.next_batch();
        }
        let (cur, perm, c, e) = a.state();
        let mut b = BatchSchedule::restore(11, 4, &cur, perm, c, e).unwrap();
        for _ in 0..20 {
            assert_eq!(a.next_batch(), b.next_batch());
        }
    }

    #[test]
    fn invalid_parameters() {
        assert!(MaskSchedule::new(5, 0, 0).is_err());
        assert!(MaskSchedule::new(5, 6, 0).is_err());
        assert!(BatchSchedule::new(5, 0, 0).is_err());
        assert!(BatchSchedule::new(5, 6, 0).is_err());
    }
}
