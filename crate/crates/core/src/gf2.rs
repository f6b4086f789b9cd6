//! Bit-packed vectors and matrices over F2.
//!
//! Bit `i` of a [`BitVec`] lives in word `i / 64` at position `i % 64`, so
//! index 0 is the lowest bit of the first word. Bits past the logical length
//! are kept at zero, which lets equality, hashing and popcounts work on whole
//! words.

use std::fmt;

use crate::error::{Error, Result};

const WORD: usize = 64;

fn words_for(len: usize) -> usize {
    len.div_ceil(WORD)
}

/// A fixed-length vector over F2.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct BitVec {
    len: usize,
    words: Vec<u64>,
}

impl BitVec {
    pub fn zeros(len: usize) -> Self {
        BitVec {
            len,
            words: vec![0; words_for(len)],
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut v = BitVec {
            len,
            words: vec![u64::MAX; words_for(len)],
        };
        v.clear_tail();
        v
    }

    /// Builds a vector of length `len` from the low bits of `value`.
    pub fn from_u64(value: u64, len: usize) -> Self {
        assert!(len <= WORD, "from_u64 supports at most 64 bits");
        let mut v = BitVec::zeros(len);
        if len > 0 {
            v.words[0] = value;
            v.clear_tail();
        }
        v
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut v = BitVec::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                v.set(i, true);
            }
        }
        v
    }

    /// Parses a string of `0`/`1` characters; character `i` becomes bit `i`.
    pub fn from_bit_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Parse(format!("unexpected character {other:?} in bit string"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BitVec::from_bits(&bits))
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// The first word, for vectors of at most 64 bits.
    pub fn to_u64(&self) -> u64 {
        assert!(self.len <= WORD, "to_u64 on a vector longer than 64 bits");
        self.words.first().copied().unwrap_or(0)
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        (self.words[i / WORD] >> (i % WORD)) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        let mask = 1u64 << (i % WORD);
        if value {
            self.words[i / WORD] |= mask;
        } else {
            self.words[i / WORD] &= !mask;
        }
    }

    pub fn flip(&mut self, i: usize) {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        self.words[i / WORD] ^= 1u64 << (i % WORD);
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Indices of set bits in increasing order.
    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut rest = w;
            std::iter::from_fn(move || {
                if rest == 0 {
                    None
                } else {
                    let b = rest.trailing_zeros() as usize;
                    rest &= rest - 1;
                    Some(wi * WORD + b)
                }
            })
        })
    }

    /// Lowest set bit, if any.
    pub fn first_one(&self) -> Option<usize> {
        self.iter_ones().next()
    }

    pub fn xor_assign(&mut self, other: &BitVec) -> Result<()> {
        self.check_len(other)?;
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= *b;
        }
        Ok(())
    }

    pub fn xor(&self, other: &BitVec) -> Result<BitVec> {
        let mut out = self.clone();
        out.xor_assign(other)?;
        Ok(out)
    }

    /// Inner product over F2: the parity of the bitwise AND.
    pub fn dot(&self, other: &BitVec) -> Result<bool> {
        self.check_len(other)?;
        let ones: u32 = self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones())
            .sum();
        Ok(ones & 1 == 1)
    }

    /// Hex form of the payload: one 16-digit group per word, least significant word first.
    pub fn to_hex(&self) -> String {
        self.words.iter().map(|w| format!("{w:016x}")).collect()
    }

    /// Inverse of [`BitVec::to_hex`]. Short final groups are accepted, so `"5"`
    /// parses as the 3-bit vector `101`.
    pub fn from_hex(hex: &str, len: usize) -> Result<BitVec> {
        let hex = hex.trim().trim_start_matches("0x");
        let n_words = words_for(len);
        let groups: Vec<&str> = if hex.is_empty() {
            Vec::new()
        } else {
            hex.as_bytes()
                .chunks(16)
                .map(|c| std::str::from_utf8(c).expect("ascii hex"))
                .collect()
        };
        if groups.len() > n_words.max(1) || (len == 0 && hex.chars().any(|c| c != '0')) {
            return Err(Error::Parse(format!(
                "hex payload has {} words, expected at most {n_words}",
                groups.len()
            )));
        }
        let mut v = BitVec::zeros(len);
        for (i, g) in groups.iter().enumerate() {
            let w = u64::from_str_radix(g, 16)
                .map_err(|e| Error::Parse(format!("bad hex group {g:?}: {e}")))?;
            if i < n_words {
                v.words[i] = w;
            }
        }
        let before = v.words.clone();
        v.clear_tail();
        if before != v.words {
            return Err(Error::Parse(format!("hex payload sets bits beyond length {len}")));
        }
        Ok(v)
    }

    fn clear_tail(&mut self) {
        let rem = self.len % WORD;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    fn check_len(&self, other: &BitVec) -> Result<()> {
        if self.len != other.len {
            return Err(Error::LengthMismatch {
                left: self.len,
                right: other.len,
            });
        }
        Ok(())
    }
}

impl fmt::Debug for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVec(")?;
        for i in 0..self.len {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Free-function form of [`BitVec::dot`].
pub fn dot(u: &BitVec, v: &BitVec) -> Result<bool> {
    u.dot(v)
}

/// A dense row-major matrix over F2.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct BitMat {
    cols: usize,
    rows: Vec<BitVec>,
}

/// A solution of `A s = b` together with the dimension of the solution space.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Solution {
    pub solution: BitVec,
    pub kernel_dimension: usize,
}

impl BitMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        BitMat {
            cols,
            rows: vec![BitVec::zeros(cols); rows],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = BitMat::zeros(n, n);
        for i in 0..n {
            m.rows[i].set(i, true);
        }
        m
    }

    pub fn from_rows(cols: usize, rows: Vec<BitVec>) -> Result<Self> {
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::LengthMismatch {
                left: bad.len(),
                right: cols,
            });
        }
        Ok(BitMat { cols, rows })
    }

    /// Parses rows given as bit strings of equal length.
    pub fn from_bit_strs(rows: &[&str]) -> Result<Self> {
        let parsed = rows
            .iter()
            .map(|r| BitVec::from_bit_str(r))
            .collect::<Result<Vec<_>>>()?;
        let cols = parsed.first().map_or(0, BitVec::len);
        BitMat::from_rows(cols, parsed)
    }

    pub fn rows(&self) -> usize {
        self.rows.len()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &BitVec {
        &self.rows[i]
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.rows[r].get(c)
    }

    pub fn set(&mut self, r: usize, c: usize, value: bool) {
        self.rows[r].set(c, value)
    }

    pub fn push_row(&mut self, row: BitVec) -> Result<()> {
        if row.len() != self.cols {
            return Err(Error::LengthMismatch {
                left: row.len(),
                right: self.cols,
            });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn transpose(&self) -> BitMat {
        let mut t = BitMat::zeros(self.cols, self.rows.len());
        for (r, row) in self.rows.iter().enumerate() {
            for c in row.iter_ones() {
                t.rows[c].set(r, true);
            }
        }
        t
    }

    pub fn mul_vec(&self, v: &BitVec) -> Result<BitVec> {
        if v.len() != self.cols {
            return Err(Error::LengthMismatch {
                left: v.len(),
                right: self.cols,
            });
        }
        let mut out = BitVec::zeros(self.rows.len());
        for (i, row) in self.rows.iter().enumerate() {
            if row.dot(v)? {
                out.set(i, true);
            }
        }
        Ok(out)
    }

    /// Rank over F2. Works on a copy; `self` is untouched.
    pub fn rank(&self) -> usize {
        let mut work = self.rows.clone();
        eliminate(&mut work, self.cols, None).len()
    }

    /// Solves `A s = b`. Free variables are set to zero. Returns `None` when
    /// the system is inconsistent.
    pub fn solve(&self, b: &BitVec) -> Result<Option<Solution>> {
        if b.len() != self.rows.len() {
            return Err(Error::DimensionMismatch {
                rows: self.rows.len(),
                rhs: b.len(),
            });
        }
        let mut work = self.rows.clone();
        let mut rhs: Vec<bool> = (0..b.len()).map(|i| b.get(i)).collect();
        let pivots = eliminate(&mut work, self.cols, Some(&mut rhs));
        let rank = pivots.len();
        if rhs[rank..].iter().any(|&bit| bit) {
            return Ok(None);
        }
        // reduced echelon form: each pivot row determines its pivot variable
        let mut solution = BitVec::zeros(self.cols);
        for (r, &col) in pivots.iter().enumerate() {
            if rhs[r] {
                solution.set(col, true);
            }
        }
        Ok(Some(Solution {
            solution,
            kernel_dimension: self.cols - rank,
        }))
    }
}

/// Gauss-Jordan elimination in place, pivoting on the lowest available column.
/// Pivot rows are moved to the top; returns the pivot column of each.
fn eliminate(rows: &mut [BitVec], cols: usize, mut rhs: Option<&mut Vec<bool>>) -> Vec<usize> {
    let mut pivots = Vec::new();
    let mut next = 0;
    for col in 0..cols {
        if next == rows.len() {
            break;
        }
        let Some(p) = (next..rows.len()).find(|&r| rows[r].get(col)) else {
            continue;
        };
        rows.swap(next, p);
        if let Some(rhs) = rhs.as_deref_mut() {
            rhs.swap(next, p);
        }
        let pivot_row = rows[next].clone();
        let pivot_rhs = rhs.as_deref().map(|r| r[next]);
        for r in 0..rows.len() {
            if r != next && rows[r].get(col) {
                rows[r].xor_assign(&pivot_row).expect("rows share a length");
                if let (Some(rhs), Some(pb)) = (rhs.as_deref_mut(), pivot_rhs) {
                    rhs[r] ^= pb;
                }
            }
        }
        pivots.push(col);
        next += 1;
    }
    pivots
}

/// Incremental row-echelon basis used to test whether new vectors add rank.
#[derive(Clone, Debug)]
pub struct EchelonBasis {
    len: usize,
    // (pivot column, reduced row), kept so that no row has a set bit at another row's pivot
    rows: Vec<(usize, BitVec)>,
}

impl EchelonBasis {
    pub fn new(len: usize) -> Self {
        EchelonBasis {
            len,
            rows: Vec::new(),
        }
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    pub fn dim(&self) -> usize {
        self.len
    }

    /// Reduces `v` against the basis.
    pub fn reduce(&self, v: &BitVec) -> BitVec {
        let mut r = v.clone();
        for (p, row) in &self.rows {
            if r.get(*p) {
                r.xor_assign(row).expect("basis rows share a length");
            }
        }
        r
    }

    /// Inserts `v` if it is independent of the current span; reports whether it was.
    pub fn insert(&mut self, v: &BitVec) -> Result<bool> {
        if v.len() != self.len {
            return Err(Error::LengthMismatch {
                left: v.len(),
                right: self.len,
            });
        }
        let r = self.reduce(v);
        let Some(p) = r.first_one() else {
            return Ok(false);
        };
        for (_, row) in self.rows.iter_mut() {
            if row.get(p) {
                row.xor_assign(&r).expect("basis rows share a length");
            }
        }
        self.rows.push((p, r));
        Ok(true)
    }
}
