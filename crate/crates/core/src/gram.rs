//! Brute-force weights and Gram-matrix rows for the polynomial learning matrix.
//!
//! With `M(a, x) = (-1)^{x(a)}` the Gram matrix `N = M^T M` has entries
//! `N_{xy} = sum_a (-1)^{x(a) + y(a)} = 2^m - 2 weight(x + y)`, so every row is
//! a relabelling of row `0` and one histogram describes the whole matrix.
//! The routines here compute those quantities by plain enumeration and serve
//! as the reference for the closed forms in [`crate::rmweights`].

use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::caps::Caps;
use crate::error::{Error, Result};
use crate::poly::{self, MonomialBasis, PolyVec};

/// Exact multiset of the values in one row of `N`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RowHistogram {
    pub m: usize,
    pub d: usize,
    pub counts: BTreeMap<i64, BigUint>,
}

impl RowHistogram {
    pub fn new(m: usize, d: usize) -> Self {
        RowHistogram {
            m,
            d,
            counts: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, value: i64, count: impl Into<BigUint>) {
        let count = count.into();
        if count.is_zero() {
            return;
        }
        *self.counts.entry(value).or_default() += count;
    }

    pub fn count(&self, value: i64) -> BigUint {
        self.counts.get(&value).cloned().unwrap_or_default()
    }

    pub fn total(&self) -> BigUint {
        self.counts.values().sum()
    }

    /// Distinct values, largest first.
    pub fn values_desc(&self) -> impl Iterator<Item = i64> + '_ {
        self.counts.keys().rev().copied()
    }

    /// The diagonal value `2^m`.
    pub fn diagonal(&self) -> i64 {
        1i64 << self.m
    }

    /// Checks the structural invariants for coefficient dimension `n`.
    pub fn check_invariants(&self, n: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.total() != BigUint::one() << n {
            return bad(format!("counts sum to {} instead of 2^{n}", self.total()));
        }
        let top = self.diagonal();
        for &v in self.counts.keys() {
            if v.abs() > top {
                return bad(format!("value {v} exceeds 2^m = {top}"));
            }
            if (v - top).rem_euclid(2) != 0 {
                return bad(format!("value {v} has the wrong parity"));
            }
        }
        if self.count(top).is_zero() {
            return bad("no entry equals 2^m".into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("histogram serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

#[derive(Serialize, Deserialize)]
struct HistogramWire {
    m: usize,
    d: usize,
    counts: Vec<(i64, String)>,
}

impl Serialize for RowHistogram {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        HistogramWire {
            m: self.m,
            d: self.d,
            counts: self
                .counts
                .iter()
                .rev()
                .map(|(v, c)| (*v, c.to_string()))
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for RowHistogram {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let wire = HistogramWire::deserialize(d)?;
        let mut h = RowHistogram::new(wire.m, wire.d);
        for (v, c) in wire.counts {
            let c: BigUint = c.parse().map_err(de::Error::custom)?;
            h.add(v, c);
        }
        Ok(h)
    }
}

/// Serializes a big integer as its decimal string.
pub fn biguint_as_string<S: Serializer>(v: &BigUint, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

fn check_m(m: usize, cap: usize) -> Result<()> {
    Caps::check("m", m, cap)
}

fn eval_packed(masks: &[u64], x: &PolyVec, a: u64) -> bool {
    x.coefficients()
        .iter_ones()
        .fold(false, |acc, k| acc ^ (a & masks[k] == masks[k]))
}

/// Number of tests `a` with `x(a) = 1`.
pub fn weight(x: &PolyVec) -> Result<u64> {
    weight_with(x, &Caps::default())
}

pub fn weight_with(x: &PolyVec, caps: &Caps) -> Result<u64> {
    let m = x.basis().m();
    check_m(m, caps.enum_m)?;
    let masks = x.basis().masks();
    Ok((0..1u64 << m)
        .into_par_iter()
        .filter(|&a| eval_packed(masks, x, a))
        .count() as u64)
}

/// `sum_a M(a, x) M(a, y)` by direct summation over all tests.
pub fn gram_entry(x: &PolyVec, y: &PolyVec) -> Result<i64> {
    gram_entry_with(x, y, &Caps::default())
}

pub fn gram_entry_with(x: &PolyVec, y: &PolyVec, caps: &Caps) -> Result<i64> {
    if x.basis().m() != y.basis().m() || x.basis().d() != y.basis().d() {
        return Err(Error::BasisMismatch);
    }
    let m = x.basis().m();
    check_m(m, caps.enum_m)?;
    let masks = x.basis().masks();
    Ok((0..1u64 << m)
        .into_par_iter()
        .map(|a| {
            let sx = if eval_packed(masks, x, a) { -1i64 } else { 1 };
            let sy = if eval_packed(masks, y, a) { -1i64 } else { 1 };
            sx * sy
        })
        .sum())
}

/// Whether `<M_x, M_y> = <M_0, M_{x+y}>` holds for this pair, both sides summed directly.
pub fn shift_symmetry_check(x: &PolyVec, y: &PolyVec) -> Result<bool> {
    let caps = Caps::default();
    check_m(x.basis().m(), caps.shift_m)?;
    let zero = PolyVec::zero(x.basis().clone());
    Ok(gram_entry_with(x, y, &caps)? == gram_entry_with(&zero, &x.add(y)?, &caps)?)
}

/// Histogram of row 0 of `N` for degree-`d` polynomials in `m` variables.
pub fn brute_histogram(m: usize, d: usize) -> Result<RowHistogram> {
    brute_histogram_with(m, d, &Caps::default())
}

/// Enumerates all `2^n` polynomials in Gray-code order, keeping the evaluation
/// table of the current polynomial over all `2^m` points and updating it with
/// one table XOR per step. The top coefficient bits split the work into
/// independent chunks whose weight tallies are summed, so the result does not
/// depend on scheduling.
pub fn brute_histogram_with(m: usize, d: usize, caps: &Caps) -> Result<RowHistogram> {
    let basis = MonomialBasis::new(m, d)?;
    let n = basis.n();
    Caps::check("n", n, caps.brute_n)?;
    let tables: Vec<Vec<u64>> = (0..n).map(|k| basis.truth_table(k)).collect();
    let split = n.min(8);
    let low = n - split;

    let tally = (0..1u64 << split)
        .into_par_iter()
        .map(|prefix| {
            let mut counts = vec![0u64; (1 << m) + 1];
            let mut table = vec![0u64; tables[0].len()];
            for k in 0..split {
                if (prefix >> k) & 1 == 1 {
                    xor_into(&mut table, &tables[low + k]);
                }
            }
            counts[popcount(&table)] += 1;
            for i in 1u64..1 << low {
                xor_into(&mut table, &tables[i.trailing_zeros() as usize]);
                counts[popcount(&table)] += 1;
            }
            counts
        })
        .reduce(
            || vec![0u64; (1 << m) + 1],
            |mut acc, c| {
                acc.iter_mut().zip(c).for_each(|(a, b)| *a += b);
                acc
            },
        );

    let mut hist = RowHistogram::new(m, d);
    for (w, c) in tally.into_iter().enumerate() {
        hist.add((1i64 << m) - 2 * w as i64, c);
    }
    Ok(hist)
}

fn xor_into(acc: &mut [u64], t: &[u64]) {
    acc.iter_mut().zip(t).for_each(|(a, b)| *a ^= b);
}

fn popcount(t: &[u64]) -> usize {
    t.iter().map(|w| w.count_ones() as usize).sum()
}

/// Histogram of an arbitrary row `x0`, each entry summed directly over tests.
pub fn row_histogram(x0: &PolyVec) -> Result<RowHistogram> {
    let basis = x0.basis().clone();
    let n = basis.n();
    let caps = Caps::default();
    Caps::check("n", n, 16)?;
    check_m(basis.m(), caps.shift_m)?;
    let mut hist = RowHistogram::new(basis.m(), basis.d());
    for x in 0..1u64 << n {
        let y = PolyVec::from_index(basis.clone(), x);
        hist.add(gram_entry_with(x0, &y, &caps)?, 1u32);
    }
    Ok(hist)
}

/// Parity histogram `{2^m: 1, 0: 2^m - 1}`: distinct characters are orthogonal.
pub fn parity_histogram(m: usize) -> Result<RowHistogram> {
    poly::basis(m, 1)?;
    let mut h = RowHistogram::new(m, 1);
    h.add(1i64 << m, 1u32);
    h.add(0, (BigUint::one() << m) - 1u32);
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::basis;
    use proptest::prelude::*;

    fn hist(m: usize, d: usize, pairs: &[(i64, u64)]) -> RowHistogram {
        let mut h = RowHistogram::new(m, d);
        for &(v, c) in pairs {
            h.add(v, c);
        }
        h
    }

    #[test]
    fn weight_examples() {
        let b = basis(2, 2).unwrap();
        assert_eq!(weight(&PolyVec::zero(b.clone())).unwrap(), 0);
        assert_eq!(weight(&PolyVec::parse(b.clone(), "z1*z2").unwrap()).unwrap(), 1);
        assert_eq!(weight(&PolyVec::parse(b.clone(), "z1").unwrap()).unwrap(), 2);
    }

    #[test]
    fn gram_entry_examples() {
        let b = basis(2, 2).unwrap();
        let zero = PolyVec::zero(b.clone());
        let z1z2 = PolyVec::parse(b.clone(), "z1*z2").unwrap();
        let z1 = PolyVec::parse(b.clone(), "z1").unwrap();
        assert_eq!(gram_entry(&z1z2, &z1z2).unwrap(), 4);
        assert_eq!(gram_entry(&zero, &z1z2).unwrap(), 2);
        assert_eq!(gram_entry(&zero, &z1).unwrap(), 0);
        let other = PolyVec::zero(basis(2, 1).unwrap());
        assert_eq!(gram_entry(&zero, &other), Err(Error::BasisMismatch));
    }

    #[test]
    fn brute_histogram_examples() {
        assert_eq!(brute_histogram(2, 2).unwrap(), hist(2, 2, &[(4, 1), (2, 3), (0, 3), (-2, 1)]));
        assert_eq!(brute_histogram(3, 2).unwrap(), hist(3, 2, &[(8, 1), (4, 21), (0, 35), (-4, 7)]));
        for m in 1..=8 {
            assert_eq!(brute_histogram(m, 1).unwrap(), parity_histogram(m).unwrap());
        }
    }

    #[test]
    fn brute_histogram_respects_cap() {
        let caps = Caps {
            brute_n: 5,
            ..Caps::default()
        };
        assert!(matches!(
            brute_histogram_with(3, 2, &caps),
            Err(Error::CapExceeded { what: "n", value: 6, cap: 5 })
        ));
    }

    #[test]
    fn histogram_invariants_hold_for_small_instances() {
        for (m, d) in [(2, 1), (2, 2), (3, 2), (3, 3), (4, 2), (4, 3)] {
            let h = brute_histogram(m, d).unwrap();
            h.check_invariants(MonomialBasis::new(m, d).unwrap().n()).unwrap();
        }
        let mut h = brute_histogram(2, 2).unwrap();
        h.add(3, 1u32);
        assert!(h.check_invariants(3).is_err());
    }

    #[test]
    fn json_round_trip_and_order() {
        let h = brute_histogram(2, 2).unwrap();
        let json = h.to_json();
        assert_eq!(json, r#"{"m":2,"d":2,"counts":[[4,"1"],[2,"3"],[0,"3"],[-2,"1"]]}"#);
        assert_eq!(RowHistogram::from_json(&json).unwrap(), h);
    }

    #[test]
    fn every_row_has_the_same_multiset() {
        let b = basis(3, 2).unwrap();
        let row0 = brute_histogram(3, 2).unwrap();
        for x0 in [0u64, 1, 5, 17, 42, 63] {
            let h = row_histogram(&PolyVec::from_index(b.clone(), x0)).unwrap();
            assert_eq!(h, row0, "row {x0}");
        }
    }

    #[test]
    fn shift_symmetry_examples() {
        let b = basis(2, 2).unwrap();
        let z1 = PolyVec::parse(b.clone(), "z1").unwrap();
        let z2 = PolyVec::parse(b.clone(), "z2").unwrap();
        assert!(shift_symmetry_check(&z1, &z2).unwrap());
        assert_eq!(gram_entry(&z1, &z2).unwrap(), 0);
        assert!(shift_symmetry_check(&z1, &z1).unwrap());
    }

    proptest! {
        #[test]
        fn gram_row_zero_is_weight(m in 1usize..7, d_off in 0usize..3, x in any::<u64>()) {
            let d = 1 + d_off % m;
            let b = basis(m, d).unwrap();
            let x = PolyVec::from_index(b.clone(), x & (u64::MAX >> (64 - b.n())));
            let zero = PolyVec::zero(b.clone());
            prop_assert_eq!(gram_entry(&zero, &x).unwrap(), (1i64 << m) - 2 * weight(&x).unwrap() as i64);
        }

        #[test]
        fn shift_symmetry_random_pairs(x in 0u64..64, y in 0u64..64) {
            let b = basis(3, 2).unwrap();
            let x = PolyVec::from_index(b.clone(), x);
            let y = PolyVec::from_index(b.clone(), y);
            prop_assert!(shift_symmetry_check(&x, &y).unwrap());
        }
    }
}
