//! Column sources streamed by the learner.

use crate::code::MaskedSample;
use crate::sampling::Mask;

/// A `p × n` matrix read one column at a time, possibly with missing
/// entries.
pub trait ColumnSource: Sync {
    fn n_rows(&self) -> usize;

    fn n_cols(&self) -> usize;

    /// Observed entries of column `col` among the rows selected by `mask`,
    /// or `None` when the intersection is empty.
    fn sample(&self, col: usize, mask: &Mask) -> Option<MaskedSample>;

    /// Column with unobserved entries set to zero.
    fn dense_column(&self, col: usize) -> Vec<f64>;

    /// Number of observed entries in column `col`.
    fn observed(&self, col: usize) -> usize;
}

/// Fully observed matrix stored column by column.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseColumns {
    p: usize,
    n: usize,
    data: Vec<f64>,
}

impl DenseColumns {
    /// `data` holds `n` consecutive columns of length `p`.
    pub fn new(p: usize, n: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), p * n, "data length must be p * n");
        DenseColumns { p, n, data }
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Self {
        let p = columns.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(p * columns.len());
        for c in columns {
            assert_eq!(c.len(), p, "ragged columns");
            data.extend_from_slice(c);
        }
        DenseColumns {
            p,
            n: columns.len(),
            data,
        }
    }

    pub fn column(&self, col: usize) -> &[f64] {
        &self.data[col * self.p..(col + 1) * self.p]
    }

    /// Keeps the listed columns, in order.
    pub fn select(&self, cols: &[usize]) -> DenseColumns {
        let mut data = Vec::with_capacity(cols.len() * self.p);
        for &c in cols {
            data.extend_from_slice(self.column(c));
        }
        DenseColumns {
            p: self.p,
            n: cols.len(),
            data,
        }
    }
}

impl ColumnSource for DenseColumns {
    fn n_rows(&self) -> usize {
        self.p
    }

    fn n_cols(&self) -> usize {
        self.n
    }

    fn sample(&self, col: usize, mask: &Mask) -> Option<MaskedSample> {
        let column = self.column(col);
        let (rows, values) = match mask {
            Mask::Full => ((0..self.p).collect(), column.to_vec()),
            Mask::Rows(rows) => (rows.clone(), rows.iter().map(|&m| column[m]).collect()),
        };
        if rows.is_empty() {
            return None;
        }
        Some(MaskedSample::from_parts_unchecked(rows, values, self.p))
    }

    fn dense_column(&self, col: usize) -> Vec<f64> {
        self.column(col).to_vec()
    }

    fn observed(&self, _col: usize) -> usize {
        self.p
    }
}

/// Partially observed matrix: each column lists its observed `(row, value)`
/// pairs sorted by row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseColumns {
    p: usize,
    columns: Vec<Vec<(usize, f64)>>,
}

impl SparseColumns {
    pub fn new(p: usize, mut columns: Vec<Vec<(usize, f64)>>) -> Self {
        for c in &mut columns {
            c.sort_by_key(|e| e.0);
            debug_assert!(c.windows(2).all(|w| w[0].0 < w[1].0));
            debug_assert!(c.last().is_none_or(|e| e.0 < p));
        }
        SparseColumns { p, columns }
    }

    pub fn entries(&self, col: usize) -> &[(usize, f64)] {
        &self.columns[col]
    }

    pub fn nnz(&self) -> usize {
        self.columns.iter().map(Vec::len).sum()
    }
}

impl ColumnSource for SparseColumns {
    fn n_rows(&self) -> usize {
        self.p
    }

    fn n_cols(&self) -> usize {
        self.columns.len()
    }

    fn sample(&self, col: usize, mask: &Mask) -> Option<MaskedSample> {
        let entries = &self.columns[col];
        let (rows, values): (Vec<usize>, Vec<f64>) = match mask {
            Mask::Full => entries.iter().copied().unzip(),
            Mask::Rows(mask_rows) => {
                // merge of two sorted lists
                let mut out = (Vec::new(), Vec::new());
                let (mut a, mut b) = (0, 0);
                while a < entries.len() && b < mask_rows.len() {
                    match entries[a].0.cmp(&mask_rows[b]) {
                        std::cmp::Ordering::Less => a += 1,
                        std::cmp::Ordering::Greater => b += 1,
                        std::cmp::Ordering::Equal => {
                            out.0.push(entries[a].0);
                            out.1.push(entries[a].1);
                            a += 1;
                            b += 1;
                        }
                    }
                }
                out
            }
        };
        if rows.is_empty() {
            return None;
        }
        Some(MaskedSample::from_parts_unchecked(rows, values, self.p))
    }

    fn dense_column(&self, col: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.p];
        for &(m, v) in &self.columns[col] {
            out[m] = v;
        }
        out
    }

    fn observed(&self, col: usize) -> usize {
        self.columns[col].len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_sample_intersects_mask() {
        let src = SparseColumns::new(6, vec![vec![(4, 1.0), (1, 2.0), (3, 3.0)], vec![]]);
        let s = src.sample(0, &Mask::Rows(vec![0, 3, 4, 5])).unwrap();
        assert_eq!(s.rows(), &[3, 4]);
        assert_eq!(s.values(), &[3.0, 1.0]);
        assert!(src.sample(0, &Mask::Rows(vec![0, 2])).is_none());
        assert!(src.sample(1, &Mask::Full).is_none());
        assert_eq!(src.dense_column(0), vec![0.0, 2.0, 0.0, 3.0, 1.0, 0.0]);
    }

    #[test]
    fn dense_sample_reads_masked_rows() {
        let src = DenseColumns::from_columns(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]);
        let s = src.sample(1, &Mask::Rows(vec![0, 2])).unwrap();
        assert_eq!(s.values(), &[4.0, 6.0]);
        assert_eq!(src.sample(0, &Mask::Full).unwrap().values(), &[1.0, 2.0, 3.0]);
    }
}
