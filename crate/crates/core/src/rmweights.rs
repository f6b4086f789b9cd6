//! Exact value distribution of `N = M^T M` for quadratic polynomials.
//!
//! Every quadratic polynomial splits uniquely as `q + l` with `q` a pure
//! quadratic form `sum_{i<j} q_ij z_i z_j` and `l` linear. Over F2 a pure form is
//! equivalent, under an invertible change of variables, to
//! `z1 z2 + ... + z_{2k-1} z_{2k}` for a unique `k`, its Dickson index. The
//! multiset of `sum_a (-1)^{(q + l)(a)}` over the `2^m` linear parts depends
//! only on `k`:
//!
//! | value        | count                    |
//! |--------------|--------------------------|
//! | `+2^{m-k}`   | `2^{2k-1} + 2^{k-1}`     |
//! | `0`          | `2^m - 2^{2k}`           |
//! | `-2^{m-k}`   | `2^{2k-1} - 2^{k-1}`     |
//!
//! (for `k = 0` this reads `{+2^m: 1, 0: 2^m - 1}`). Counting forms of each
//! index gives the whole row histogram in closed form.
//!
//! The index is read off as half the rank of the alternating polar matrix
//! `Q + Q^T`. All counts are exact big integers.

use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gf2::{BitMat, BitVec};
use crate::gram::RowHistogram;

/// Largest `m` for which row values `+-2^m` fit in an `i64`.
pub const MAX_EXACT_M: usize = 62;

/// A pure quadratic form `sum_{i<j} q_ij z_i z_j` over F2.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuadraticForm {
    m: usize,
    q: BitMat,
}

impl QuadraticForm {
    pub fn zero(m: usize) -> Self {
        QuadraticForm {
            m,
            q: BitMat::zeros(m, m),
        }
    }

    /// Builds a form from one-based variable pairs; `(1, 2)` is `z1 z2`.
    pub fn from_pairs(m: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut f = QuadraticForm::zero(m);
        for &(i, j) in pairs {
            let (lo, hi) = (i.min(j), i.max(j));
            if lo == 0 || hi > m || lo == hi {
                return Err(Error::InvalidParameter(format!("bad pair ({i}, {j}) for m = {m}")));
            }
            let cur = f.q.get(lo - 1, hi - 1);
            f.q.set(lo - 1, hi - 1, !cur);
        }
        Ok(f)
    }

    /// Builds a form from its `C(m, 2)` coefficients in pair order `(1,2), (1,3), ..., (m-1,m)`.
    pub fn from_upper_bits(m: usize, bits: &BitVec) -> Result<Self> {
        let expected = m * m.saturating_sub(1) / 2;
        if bits.len() != expected {
            return Err(Error::LengthMismatch {
                left: bits.len(),
                right: expected,
            });
        }
        let mut f = QuadraticForm::zero(m);
        for (k, (i, j)) in pairs(m).enumerate() {
            if bits.get(k) {
                f.q.set(i, j, true);
            }
        }
        Ok(f)
    }

    /// Hex of the upper-triangle coefficients, as for [`BitVec::from_hex`].
    pub fn from_hex(m: usize, hex: &str) -> Result<Self> {
        let bits = BitVec::from_hex(hex, m * m.saturating_sub(1) / 2)?;
        QuadraticForm::from_upper_bits(m, &bits)
    }

    /// Form number `index` in the pair-order enumeration of all `2^{C(m,2)}` forms.
    pub fn from_index(m: usize, index: u64) -> Self {
        let len = m * m.saturating_sub(1) / 2;
        QuadraticForm::from_upper_bits(m, &BitVec::from_u64(index, len)).expect("length matches")
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn coefficient(&self, i: usize, j: usize) -> bool {
        i < j && self.q.get(i, j)
    }

    pub fn matrix(&self) -> &BitMat {
        &self.q
    }

    /// The alternating matrix `Q + Q^T`.
    pub fn polar(&self) -> BitMat {
        let mut p = self.q.clone();
        for (i, j) in pairs(self.m) {
            if self.q.get(i, j) {
                p.set(j, i, true);
            }
        }
        p
    }

    /// `q(a)` for a packed test point.
    pub fn eval(&self, a: u64) -> bool {
        pairs(self.m).fold(false, |acc, (i, j)| {
            acc ^ (self.q.get(i, j) && (a >> i) & 1 == 1 && (a >> j) & 1 == 1)
        })
    }
}

fn pairs(m: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..m).flat_map(move |i| (i + 1..m).map(move |j| (i, j)))
}

/// Value distribution of a pure form over all linear additions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OrbitType {
    pub k: usize,
    pub m: usize,
    #[serde(serialize_with = "crate::gram::biguint_as_string")]
    pub plus: BigUint,
    #[serde(serialize_with = "crate::gram::biguint_as_string")]
    pub zero: BigUint,
    #[serde(serialize_with = "crate::gram::biguint_as_string")]
    pub minus: BigUint,
}

impl OrbitType {
    /// Magnitude of the nonzero values, `2^{m-k}`.
    pub fn magnitude(&self) -> BigUint {
        BigUint::one() << (self.m - self.k)
    }

    /// The multiset as a value -> count map, dropping empty classes.
    pub fn as_map(&self) -> BTreeMap<BigInt, BigUint> {
        let mag = BigInt::from(self.magnitude());
        let mut out = BTreeMap::new();
        for (v, c) in [(mag.clone(), &self.plus), (BigInt::zero(), &self.zero), (-mag, &self.minus)] {
            if !c.is_zero() {
                *out.entry(v).or_insert_with(BigUint::zero) += c;
            }
        }
        out
    }
}

/// Dickson index of `q`: half the F2-rank of its polar form.
pub fn dickson_k(q: &QuadraticForm) -> usize {
    let r = q.polar().rank();
    debug_assert!(r % 2 == 0, "alternating matrices have even rank");
    r / 2
}

pub fn orbit_type(k: usize, m: usize) -> Result<OrbitType> {
    if 2 * k > m {
        return Err(Error::InvalidParameter(format!("Dickson index {k} needs 2k <= m = {m}")));
    }
    let one = BigUint::one();
    let (plus, minus) = if k == 0 {
        (one.clone(), BigUint::zero())
    } else {
        let big = &one << (2 * k - 1);
        let small = &one << (k - 1);
        (&big + &small, &big - &small)
    };
    let zero = (&one << m) - (&one << (2 * k));
    Ok(OrbitType { k, m, plus, zero, minus })
}

/// Enumerated multiset `{sum_a (-1)^{q(a) + l(a)} : l linear}` for small `m`.
pub fn enumerate_type(q: &QuadraticForm) -> Result<BTreeMap<BigInt, BigUint>> {
    let m = q.m();
    if m > 12 {
        return Err(Error::CapExceeded {
            what: "m",
            value: m,
            cap: 12,
        });
    }
    let qv: Vec<bool> = (0..1u64 << m).map(|a| q.eval(a)).collect();
    let mut out: BTreeMap<BigInt, BigUint> = BTreeMap::new();
    for l in 0..1u64 << m {
        let s: i64 = qv
            .iter()
            .enumerate()
            .map(|(a, &qa)| {
                let la = (a as u64 & l).count_ones() & 1 == 1;
                if qa ^ la {
                    -1
                } else {
                    1
                }
            })
            .sum();
        *out.entry(BigInt::from(s)).or_insert_with(BigUint::zero) += 1u32;
    }
    Ok(out)
}

fn check_index(i: usize, m: usize) -> Result<()> {
    if 2 * i > m {
        return Err(Error::InvalidParameter(format!("class index {i} needs 2i <= m = {m}")));
    }
    Ok(())
}

/// Number of pure quadratic forms in `m` variables with Dickson index `i`:
/// `prod_{j=0}^{2i-1} (2^m - 2^j) / prod_{j=1}^{i} 2^{2j-1} (2^{2j} - 1)`.
pub fn class_count(i: usize, m: usize) -> Result<BigUint> {
    check_index(i, m)?;
    let one = BigUint::one();
    let two_m = &one << m;
    let num: BigUint = (0..2 * i).map(|j| &two_m - (&one << j)).product();
    let den: BigUint = (1..=i)
        .map(|j| (&one << (2 * j - 1)) * ((&one << (2 * j)) - 1u32))
        .product();
    let (q, r) = num.div_rem(&den);
    assert!(r.is_zero(), "class count quotient is not integral at i = {i}, m = {m}");
    Ok(q)
}

/// Same count from `c_i(m+1) = 2^{2i} c_i(m) + (2^m - 2^{2(i-1)}) c_{i-1}(m)` with `c_0(0) = 1`.
pub fn class_count_rec(i: usize, m: usize) -> Result<BigUint> {
    check_index(i, m)?;
    Ok(class_count_table(m).swap_remove(i))
}

/// `[c_0(m), ..., c_{floor(m/2)}(m)]` by the recurrence.
pub fn class_count_table(m: usize) -> Vec<BigUint> {
    let mut row = vec![BigUint::one()];
    for cur in 0..m {
        let next_len = (cur + 1) / 2 + 1;
        let mut next = Vec::with_capacity(next_len);
        for i in 0..next_len {
            let mut c = BigUint::zero();
            if let Some(prev) = row.get(i) {
                c += prev << (2 * i);
            }
            if i >= 1 {
                if let Some(prev) = row.get(i - 1) {
                    // 2^m - 2^{2(i-1)} is positive whenever c_{i-1}(m) is nonzero
                    let factor = (BigInt::one() << cur) - (BigInt::one() << (2 * (i - 1)));
                    if !prev.is_zero() {
                        let factor = factor.to_biguint().expect("factor is positive");
                        c += prev * factor;
                    }
                }
            }
            next.push(c);
        }
        row = next;
    }
    row
}

/// Closed-form row histogram of `N` for `d = 2`.
pub fn exact_histogram_d2(m: usize) -> Result<RowHistogram> {
    if m == 0 {
        return Err(Error::InvalidDegree { m, d: 2 });
    }
    if m > MAX_EXACT_M {
        return Err(Error::CapExceeded {
            what: "m",
            value: m,
            cap: MAX_EXACT_M,
        });
    }
    let one = BigUint::one();
    let n = m * (m + 1) / 2;
    let mut h = RowHistogram::new(m, 2);
    h.add(1i64 << m, 1u32);
    for i in 1..=m / 2 {
        let c = class_count(i, m)?;
        let t = orbit_type(i, m)?;
        h.add(1i64 << (m - i), &t.plus * &c);
        h.add(-(1i64 << (m - i)), &t.minus * &c);
    }
    let rest = (&one << n) - h.total();
    h.add(0, rest);
    Ok(h)
}

/// `(2^{2i-1} + 2^{i-1}) c_i(m) <= 2^{2im}` for one `(i, m)`.
pub fn part3_bound_holds(i: usize, m: usize) -> Result<bool> {
    if i == 0 {
        return Err(Error::InvalidParameter("the bound is stated for i >= 1".into()));
    }
    let t = orbit_type(i, m)?;
    Ok(t.plus * class_count(i, m)? <= BigUint::one() << (2 * i * m))
}

/// One row of the comparison against the textbook `RM(2, m)` weight formula.
#[derive(Clone, Debug, Serialize)]
pub struct SbRow {
    pub i: usize,
    /// Weight `2^{m-1} - 2^{m-i}` and its count in the full code `RM(2, m)`.
    pub weight_low: String,
    pub count_low: String,
    /// Weight `2^{m-1} + 2^{m-i}` and its count.
    pub weight_high: String,
    pub count_high: String,
    /// The formula value as transcribed, `p/q` when it is not an integer.
    pub formula: String,
    pub integral: bool,
    pub matches_per_weight: bool,
    pub matches_combined: bool,
}

/// Evaluates `2^{i(i+1)} prod_{j=0}^{i-1} 2^{m-2j} (2^{m-2j-1} - 1) / (2^{2(j+1)} - 1)` as
/// transcribed and compares it with `RM(2, m)` weight counts derived from
/// [`exact_histogram_d2`]. The formula is not trusted; this only reports.
pub fn sb_crosscheck(m: usize) -> Result<Vec<SbRow>> {
    let h = exact_histogram_d2(m)?;
    let one = BigInt::one();
    let mut rows = Vec::new();
    // RM(2,m) adds the complements of RM'(2,m): value v in N maps to weight 2^{m-1} - v/2,
    // and complementing negates v
    let rm_count = |v: i64| h.count(v) + h.count(-v);
    for i in 1..=m.div_ceil(2) {
        let mut num = &one << (i * (i + 1));
        let mut den = BigInt::one();
        for j in 0..i {
            let e = m as i64 - 2 * j as i64;
            if e < 1 {
                num = BigInt::zero();
                break;
            }
            num *= (&one << e as usize) * ((&one << (e as usize - 1)) - 1);
            den *= (&one << (2 * (j + 1))) - 1;
        }
        let g = num.gcd(&den);
        let (pn, pd) = (&num / &g, &den / &g);
        let integral = pd.is_one();
        let formula = if integral { pn.to_string() } else { format!("{pn}/{pd}") };
        let v = 1i64 << (m + 1 - i);
        let (low, high) = if v <= 1i64 << m {
            (rm_count(v), rm_count(-v))
        } else {
            (BigUint::zero(), BigUint::zero())
        };
        let half = BigInt::one() << (m - 1);
        let delta = BigInt::one() << (m - i);
        let formula_int = if integral { pn.to_biguint() } else { None };
        rows.push(SbRow {
            i,
            weight_low: (&half - &delta).to_string(),
            count_low: low.to_string(),
            weight_high: (&half + &delta).to_string(),
            count_high: high.to_string(),
            formula,
            integral,
            matches_per_weight: formula_int.as_ref().is_some_and(|f| *f == low && *f == high),
            matches_combined: formula_int.as_ref().is_some_and(|f| *f == &low + &high),
        });
    }
    Ok(rows)
}

/// Base-2 logarithm of a positive big integer, from its bit length and top 64 bits.
pub fn log2_big(x: &BigUint) -> f64 {
    assert!(!x.is_zero(), "log2 of zero");
    let bits = x.bits();
    if bits <= 64 {
        return x.to_u64().expect("fits in u64").to_f64().expect("finite").log2();
    }
    let shift = bits - 64;
    let top = (x >> shift).to_u64().expect("64 bits remain");
    (top as f64).log2() + shift as f64
}

/// Signed variant used where a histogram value may be negative.
pub fn abs_log2(x: &BigInt) -> f64 {
    log2_big(&x.abs().to_biguint().expect("abs is nonnegative"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gram::brute_histogram;

    fn big(v: u64) -> BigUint {
        BigUint::from(v)
    }

    #[test]
    fn dickson_examples() {
        assert_eq!(dickson_k(&QuadraticForm::zero(4)), 0);
        for m in 2..6 {
            assert_eq!(dickson_k(&QuadraticForm::from_pairs(m, &[(1, 2)]).unwrap()), 1);
        }
        assert_eq!(dickson_k(&QuadraticForm::from_pairs(3, &[(1, 2), (2, 3)]).unwrap()), 1);
        assert_eq!(dickson_k(&QuadraticForm::from_pairs(4, &[(1, 2), (3, 4)]).unwrap()), 2);
    }

    #[test]
    fn orbit_type_examples() {
        let t = orbit_type(1, 2).unwrap();
        assert_eq!((t.plus.clone(), t.zero.clone(), t.minus.clone()), (big(3), big(0), big(1)));
        assert_eq!(t.magnitude(), big(2));
        let t = orbit_type(0, 5).unwrap();
        assert_eq!((t.plus.clone(), t.zero.clone(), t.minus.clone()), (big(1), big(31), big(0)));
        assert_eq!(t.magnitude(), big(32));
        let t = orbit_type(1, 3).unwrap();
        assert_eq!((t.plus, t.zero, t.minus), (big(3), big(4), big(1)));
        assert!(orbit_type(2, 3).is_err());
    }

    #[test]
    fn orbit_type_matches_enumeration_for_z1z2_in_three_vars() {
        let q = QuadraticForm::from_pairs(3, &[(1, 2)]).unwrap();
        assert_eq!(enumerate_type(&q).unwrap(), orbit_type(1, 3).unwrap().as_map());
    }

    #[test]
    fn class_count_examples() {
        assert_eq!(class_count(1, 2).unwrap(), big(1));
        assert_eq!(class_count(1, 3).unwrap(), big(7));
        for m in 0..10 {
            assert_eq!(class_count(0, m).unwrap(), big(1));
        }
        assert!(class_count(2, 3).is_err());
    }

    #[test]
    fn class_count_rec_examples() {
        assert_eq!(class_count_rec(1, 3).unwrap(), big(7));
        assert_eq!(class_count_rec(1, 2).unwrap(), big(1));
        for m in 0..10 {
            assert_eq!(class_count_rec(0, m).unwrap(), big(1));
        }
        assert!(class_count_rec(3, 5).is_err());
    }

    #[test]
    fn class_counts_agree_and_sum_to_all_forms() {
        for m in 0..=30 {
            let table = class_count_table(m);
            let mut sum = BigUint::zero();
            for (i, c) in table.iter().enumerate() {
                assert_eq!(*c, class_count(i, m).unwrap(), "i = {i}, m = {m}");
                sum += c;
            }
            assert_eq!(sum, BigUint::one() << (m * m.saturating_sub(1) / 2));
        }
    }

    #[test]
    fn exact_histogram_examples() {
        let h = exact_histogram_d2(2).unwrap();
        assert_eq!(h, brute_histogram(2, 2).unwrap());
        let h = exact_histogram_d2(3).unwrap();
        let expect: Vec<(i64, BigUint)> = vec![(8, big(1)), (4, big(21)), (0, big(35)), (-4, big(7))];
        assert_eq!(h.counts.into_iter().rev().collect::<Vec<_>>(), expect);

        let h = exact_histogram_d2(40).unwrap();
        assert_eq!(h.count(1 << 39), big(3) * class_count_rec(1, 40).unwrap());
        h.check_invariants(820).unwrap();
    }

    #[test]
    fn exact_histogram_small_m() {
        let h = exact_histogram_d2(1).unwrap();
        assert_eq!(h, crate::gram::brute_histogram(1, 1).map(|mut h| {
            h.d = 2;
            h
        }).unwrap());
        assert!(exact_histogram_d2(0).is_err());
        assert!(exact_histogram_d2(63).is_err());
    }

    #[test]
    fn part3_bound_small_range() {
        for m in 2..=20 {
            for i in 1..=m / 2 {
                assert!(part3_bound_holds(i, m).unwrap());
            }
        }
    }

    #[test]
    fn sb_formula_is_not_integral_at_m2() {
        let rows = sb_crosscheck(2).unwrap();
        assert_eq!(rows[0].formula, "16/3");
        assert!(!rows[0].integral);
        assert_eq!(rows[0].count_low, "1");
    }

    #[test]
    fn log2_big_is_accurate() {
        assert_eq!(log2_big(&big(1)), 0.0);
        assert_eq!(log2_big(&big(1024)), 10.0);
        let x = BigUint::one() << 1000usize;
        assert_eq!(log2_big(&x), 1000.0);
        let y: BigUint = (BigUint::one() << 300usize) * 3u32;
        assert!((log2_big(&y) - (300.0 + 3f64.log2())).abs() < 1e-12 * 300.0);
    }
}
