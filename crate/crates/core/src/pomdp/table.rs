//! Row-addressed probability tables with dense or compressed-row storage.

/// State count above which tables are stored as compressed sparse rows.
pub const DEFAULT_SPARSE_THRESHOLD: usize = 64;

/// How a [`RowTable`] lays out its entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Storage {
    Dense,
    Sparse,
    /// Dense up to the given state count, sparse above it.
    Auto { threshold: usize },
}

impl Default for Storage {
    fn default() -> Self {
        Storage::Auto {
            threshold: DEFAULT_SPARSE_THRESHOLD,
        }
    }
}

impl Storage {
    pub(crate) fn use_sparse(self, num_states: usize) -> bool {
        match self {
            Storage::Dense => false,
            Storage::Sparse => true,
            Storage::Auto { threshold } => num_states > threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Layout {
    Dense(Vec<f64>),
    Sparse {
        offsets: Vec<usize>,
        columns: Vec<u32>,
        values: Vec<f64>,
    },
}

/// A `rows x cols` table of reals, addressed one row at a time.
///
/// Rows iterate only over their stored entries; for the dense layout that is
/// every non-zero column.
#[derive(Debug, Clone, PartialEq)]
pub struct RowTable {
    rows: usize,
    cols: usize,
    layout: Layout,
}

/// Borrowed view of a single row.
#[derive(Debug, Clone, Copy)]
pub enum Row<'a> {
    Dense(&'a [f64]),
    Sparse(&'a [u32], &'a [f64]),
}

impl<'a> Row<'a> {
    pub fn iter(self) -> RowIter<'a> {
        match self {
            Row::Dense(values) => RowIter::Dense(values.iter().enumerate()),
            Row::Sparse(columns, values) => RowIter::Sparse(columns.iter().zip(values.iter())),
        }
    }

    pub fn sum(self) -> f64 {
        self.iter().map(|(_, p)| p).sum()
    }
}

pub enum RowIter<'a> {
    Dense(std::iter::Enumerate<std::slice::Iter<'a, f64>>),
    Sparse(std::iter::Zip<std::slice::Iter<'a, u32>, std::slice::Iter<'a, f64>>),
}

impl Iterator for RowIter<'_> {
    type Item = (usize, f64);

    #[inline]
    fn next(&mut self) -> Option<(usize, f64)> {
        match self {
            RowIter::Dense(it) => it.by_ref().find(|(_, &v)| v != 0.0).map(|(j, &v)| (j, v)),
            RowIter::Sparse(it) => it.next().map(|(&j, &v)| (j as usize, v)),
        }
    }
}

impl RowTable {
    /// Builds a table from per-row `(column, value)` lists. Duplicate columns
    /// within a row are summed; explicit zeros are dropped.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>, cols: usize, sparse: bool) -> Self {
        let nrows = rows.len();
        if sparse {
            let mut offsets = Vec::with_capacity(nrows + 1);
            let mut columns = Vec::new();
            let mut values = Vec::new();
            offsets.push(0);
            for mut row in rows {
                row.sort_by_key(|&(j, _)| j);
                let start = columns.len();
                for (j, v) in row {
                    debug_assert!(j < cols);
                    if columns.len() > start && *columns.last().unwrap() as usize == j {
                        *values.last_mut().unwrap() += v;
                    } else {
                        columns.push(j as u32);
                        values.push(v);
                    }
                }
                // drop entries that cancelled or were explicit zeros
                let mut w = start;
                for r in start..columns.len() {
                    if values[r] != 0.0 {
                        columns[w] = columns[r];
                        values[w] = values[r];
                        w += 1;
                    }
                }
                columns.truncate(w);
                values.truncate(w);
                offsets.push(columns.len());
            }
            RowTable {
                rows: nrows,
                cols,
                layout: Layout::Sparse {
                    offsets,
                    columns,
                    values,
                },
            }
        } else {
            let mut data = vec![0.0; nrows * cols];
            for (i, row) in rows.into_iter().enumerate() {
                for (j, v) in row {
                    debug_assert!(j < cols);
                    data[i * cols + j] += v;
                }
            }
            RowTable {
                rows: nrows,
                cols,
                layout: Layout::Dense(data),
            }
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.layout, Layout::Sparse { .. })
    }

    #[inline]
    pub fn row(&self, i: usize) -> Row<'_> {
        match &self.layout {
            Layout::Dense(data) => Row::Dense(&data[i * self.cols..(i + 1) * self.cols]),
            Layout::Sparse {
                offsets,
                columns,
                values,
            } => {
                let (lo, hi) = (offsets[i], offsets[i + 1]);
                Row::Sparse(&columns[lo..hi], &values[lo..hi])
            }
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match &self.layout {
            Layout::Dense(data) => data[i * self.cols + j],
            Layout::Sparse {
                offsets,
                columns,
                values,
            } => {
                let (lo, hi) = (offsets[i], offsets[i + 1]);
                match columns[lo..hi].binary_search(&(j as u32)) {
                    Ok(k) => values[lo + k],
                    Err(_) => 0.0,
                }
            }
        }
    }

    /// Number of non-zero entries.
    pub fn nnz(&self) -> usize {
        match &self.layout {
            Layout::Dense(data) => data.iter().filter(|v| **v != 0.0).count(),
            Layout::Sparse { values, .. } => values.len(),
        }
    }

    pub fn to_rows(&self) -> Vec<Vec<(usize, f64)>> {
        (0..self.rows).map(|i| self.row(i).iter().collect()).collect()
    }
}
