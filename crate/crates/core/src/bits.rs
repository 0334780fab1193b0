//! Packed row-major bit matrix used for sensor-trigger features.

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    stride: usize,
    words: Vec<u64>,
}

fn words_for(cols: usize) -> usize {
    cols.div_ceil(64)
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let stride = words_for(cols);
        Self {
            rows,
            cols,
            stride,
            words: vec![0; rows * stride],
        }
    }

    /// Builds a matrix from boolean rows. Every row must have `cols` entries.
    pub fn from_rows<R: AsRef<[bool]>>(cols: usize, rows: &[R]) -> Self {
        let mut m = Self::zeros(rows.len(), cols);
        for (r, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            assert_eq!(row.len(), cols, "row {r} has wrong width");
            for (c, &b) in row.iter().enumerate() {
                if b {
                    m.set(r, c, true);
                }
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        debug_assert!(r < self.rows && c < self.cols);
        self.words[r * self.stride + c / 64] >> (c % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: bool) {
        debug_assert!(r < self.rows && c < self.cols);
        let w = &mut self.words[r * self.stride + c / 64];
        if value {
            *w |= 1 << (c % 64);
        } else {
            *w &= !(1 << (c % 64));
        }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[u64] {
        &self.words[r * self.stride..(r + 1) * self.stride]
    }

    pub fn row_bools(&self, r: usize) -> Vec<bool> {
        (0..self.cols).map(|c| self.get(r, c)).collect()
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn column_count_ones(&self, c: usize) -> usize {
        (0..self.rows).filter(|&r| self.get(r, c)).count()
    }

    /// Appends the rows of `other`, which must have the same width.
    pub fn extend(&mut self, other: &BitMatrix) {
        assert_eq!(self.cols, other.cols, "column mismatch");
        self.words.extend_from_slice(&other.words);
        self.rows += other.rows;
    }

    pub fn vstack(parts: &[&BitMatrix]) -> BitMatrix {
        let cols = parts.first().map_or(0, |p| p.cols);
        let mut out = BitMatrix::zeros(0, cols);
        for p in parts {
            out.extend(p);
        }
        out
    }

    /// Column projection, preserving the order given in `keep`.
    pub fn select_columns(&self, keep: &[usize]) -> BitMatrix {
        let mut out = BitMatrix::zeros(self.rows, keep.len());
        for r in 0..self.rows {
            for (j, &c) in keep.iter().enumerate() {
                if self.get(r, c) {
                    out.set(r, j, true);
                }
            }
        }
        out
    }

    pub fn select_rows(&self, rows: impl IntoIterator<Item = usize>) -> BitMatrix {
        let mut out = BitMatrix::zeros(0, self.cols);
        for r in rows {
            out.words.extend_from_slice(self.row(r));
            out.rows += 1;
        }
        out
    }
}

/// Hamming distance between two packed rows of equal stride.
#[inline]
pub fn hamming(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

#[inline]
pub fn word_bit(words: &[u64], c: usize) -> bool {
    words[c / 64] >> (c % 64) & 1 == 1
}
