//! Multilinear polynomials over F2 without constant term.
//!
//! A polynomial of degree at most `d` in `z1..zm` is a coefficient vector over
//! the monomials `prod_{i in S} z_i` with `1 <= |S| <= d`. Monomials are ordered
//! by degree, then lexicographically on their sorted variable sets, so for
//! `m = 3, d = 2` the order is `z1, z2, z3, z1*z2, z1*z3, z2*z3`.
//!
//! Since `a_i^2 = a_i` over F2, a quadratic term `x_ii z_i^2` is the same function
//! as the linear term `x_i z_i`. The upper-triangular picture with `C(m+1, 2)`
//! coefficients `x_ij, i <= j` is therefore the same space as the degree-2
//! multilinear basis here: `x_ii` is stored as the coefficient of `{i}`.
//!
//! Test points `a` are bit vectors of length `m`; bit `i` is the value of `z_{i+1}`.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::gf2::BitVec;

/// Largest supported variable count; test points are packed into one word.
pub const MAX_VARS: usize = 63;

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

/// Dimension of the coefficient space: `sum_{i=1..d} C(m, i)`.
pub fn coefficient_dim(m: usize, d: usize) -> u128 {
    (1..=d).map(|i| binomial(m, i)).sum()
}

/// Ordered monomial basis for degree `1..=d` multilinear monomials in `m` variables.
#[derive(Clone, PartialEq, Eq)]
pub struct MonomialBasis {
    m: usize,
    d: usize,
    monomials: Vec<Vec<usize>>,
    masks: Vec<u64>,
    index: HashMap<u64, usize>,
}

impl fmt::Debug for MonomialBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MonomialBasis")
            .field("m", &self.m)
            .field("d", &self.d)
            .field("n", &self.n())
            .finish()
    }
}

impl MonomialBasis {
    pub fn new(m: usize, d: usize) -> Result<Self> {
        if d < 1 || d > m {
            return Err(Error::InvalidDegree { m, d });
        }
        if m > MAX_VARS {
            return Err(Error::CapExceeded {
                what: "m",
                value: m,
                cap: MAX_VARS,
            });
        }
        let n = coefficient_dim(m, d);
        if n > (1 << 24) {
            return Err(Error::CapExceeded {
                what: "n",
                value: usize::try_from(n).unwrap_or(usize::MAX),
                cap: 1 << 24,
            });
        }
        let mut monomials = Vec::with_capacity(n as usize);
        for size in 1..=d {
            let mut comb: Vec<usize> = (0..size).collect();
            loop {
                monomials.push(comb.clone());
                // next combination in lexicographic order
                let mut i = size;
                while i > 0 && comb[i - 1] == m - size + i - 1 {
                    i -= 1;
                }
                if i == 0 {
                    break;
                }
                comb[i - 1] += 1;
                for j in i..size {
                    comb[j] = comb[j - 1] + 1;
                }
            }
        }
        let masks: Vec<u64> = monomials
            .iter()
            .map(|s| s.iter().fold(0u64, |acc, &i| acc | (1 << i)))
            .collect();
        let index = masks.iter().enumerate().map(|(k, &mask)| (mask, k)).collect();
        Ok(MonomialBasis {
            m,
            d,
            monomials,
            masks,
            index,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.monomials.len()
    }

    /// Zero-based variable indices of monomial `k`.
    pub fn monomial(&self, k: usize) -> &[usize] {
        &self.monomials[k]
    }

    pub fn monomials(&self) -> &[Vec<usize>] {
        &self.monomials
    }

    /// Variable set of monomial `k` as a bit mask over `z1..zm`.
    pub fn mask(&self, k: usize) -> u64 {
        self.masks[k]
    }

    pub fn masks(&self) -> &[u64] {
        &self.masks
    }

    /// Position of the monomial with the given variable mask.
    pub fn index_of_mask(&self, mask: u64) -> Option<usize> {
        self.index.get(&mask).copied()
    }

    /// Lift of the test point with packed bits `a`, packed the same way (needs `n <= 64`).
    pub fn lift_index(&self, a: u64) -> u64 {
        debug_assert!(self.n() <= 64);
        self.masks
            .iter()
            .enumerate()
            .fold(0u64, |acc, (k, &s)| if a & s == s { acc | (1 << k) } else { acc })
    }

    /// Truth table of monomial `k` over all `2^m` test points, packed 64 points per word.
    pub fn truth_table(&self, k: usize) -> Vec<u64> {
        let points = 1usize << self.m;
        let mut table = vec![0u64; points.div_ceil(64)];
        let s = self.masks[k];
        for a in 0..points as u64 {
            if a & s == s {
                table[(a / 64) as usize] |= 1 << (a % 64);
            }
        }
        table
    }
}

/// A test point `a` in `{0,1}^m`.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct TestPoint {
    bits: BitVec,
}

impl TestPoint {
    pub fn new(bits: BitVec) -> Self {
        TestPoint { bits }
    }

    pub fn from_index(a: u64, m: usize) -> Self {
        TestPoint {
            bits: BitVec::from_u64(a, m),
        }
    }

    pub fn zero(m: usize) -> Self {
        TestPoint {
            bits: BitVec::zeros(m),
        }
    }

    pub fn m(&self) -> usize {
        self.bits.len()
    }

    pub fn bits(&self) -> &BitVec {
        &self.bits
    }

    pub fn index(&self) -> u64 {
        self.bits.to_u64()
    }

    pub fn support_size(&self) -> usize {
        self.bits.count_ones()
    }
}

/// A polynomial given by its coefficients in a [`MonomialBasis`].
#[derive(Clone, PartialEq, Eq)]
pub struct PolyVec {
    basis: Arc<MonomialBasis>,
    coefficients: BitVec,
}

impl PolyVec {
    pub fn zero(basis: Arc<MonomialBasis>) -> Self {
        let n = basis.n();
        PolyVec {
            basis,
            coefficients: BitVec::zeros(n),
        }
    }

    pub fn from_coefficients(basis: Arc<MonomialBasis>, coefficients: BitVec) -> Result<Self> {
        if coefficients.len() != basis.n() {
            return Err(Error::LengthMismatch {
                left: coefficients.len(),
                right: basis.n(),
            });
        }
        Ok(PolyVec {
            basis,
            coefficients,
        })
    }

    /// Polynomial whose coefficient bits are the low bits of `x` (needs `n <= 64`).
    pub fn from_index(basis: Arc<MonomialBasis>, x: u64) -> Self {
        let n = basis.n();
        PolyVec {
            basis,
            coefficients: BitVec::from_u64(x, n),
        }
    }

    /// Parses the `z1*z2+z3` text form. `0` is the zero polynomial, repeated
    /// monomials cancel, and `z1*z1` reduces to `z1`.
    pub fn parse(basis: Arc<MonomialBasis>, text: &str) -> Result<Self> {
        let mut p = PolyVec::zero(basis);
        let text = text.trim();
        if text == "0" {
            return Ok(p);
        }
        for term in text.split('+') {
            let term = term.trim();
            if term.is_empty() {
                return Err(Error::Parse(format!("empty monomial in {text:?}")));
            }
            let mut mask = 0u64;
            for var in term.split('*') {
                let var = var.trim();
                let idx = var
                    .strip_prefix('z')
                    .and_then(|s| usize::from_str(s).ok())
                    .filter(|&i| i >= 1 && i <= p.basis.m())
                    .ok_or_else(|| Error::Parse(format!("bad variable {var:?}")))?;
                mask |= 1 << (idx - 1);
            }
            let k = p.basis.index_of_mask(mask).ok_or_else(|| {
                Error::Parse(format!("monomial {term:?} exceeds degree {}", p.basis.d()))
            })?;
            p.coefficients.flip(k);
        }
        Ok(p)
    }

    pub fn basis(&self) -> &Arc<MonomialBasis> {
        &self.basis
    }

    pub fn coefficients(&self) -> &BitVec {
        &self.coefficients
    }

    pub fn coefficient(&self, k: usize) -> bool {
        self.coefficients.get(k)
    }

    pub fn index(&self) -> u64 {
        self.coefficients.to_u64()
    }

    pub fn add(&self, other: &PolyVec) -> Result<PolyVec> {
        self.check_basis(other)?;
        Ok(PolyVec {
            basis: self.basis.clone(),
            coefficients: self.coefficients.xor(&other.coefficients)?,
        })
    }

    fn check_basis(&self, other: &PolyVec) -> Result<()> {
        if self.basis.m() != other.basis.m() || self.basis.d() != other.basis.d() {
            return Err(Error::BasisMismatch);
        }
        Ok(())
    }
}

impl fmt::Display for PolyVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for k in self.coefficients.iter_ones() {
            if !first {
                f.write_str("+")?;
            }
            first = false;
            let vars: Vec<String> = self.basis.monomial(k).iter().map(|i| format!("z{}", i + 1)).collect();
            f.write_str(&vars.join("*"))?;
        }
        if first {
            f.write_str("0")?;
        }
        Ok(())
    }
}

impl fmt::Debug for PolyVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PolyVec({self})")
    }
}

pub fn basis(m: usize, d: usize) -> Result<Arc<MonomialBasis>> {
    MonomialBasis::new(m, d).map(Arc::new)
}

fn check_point(basis: &MonomialBasis, a: &TestPoint) -> Result<()> {
    if a.m() != basis.m() {
        return Err(Error::LengthMismatch {
            left: a.m(),
            right: basis.m(),
        });
    }
    Ok(())
}

/// `x(a) = sum_S x_S prod_{i in S} a_i` over F2.
pub fn evaluate(x: &PolyVec, a: &TestPoint) -> Result<bool> {
    check_point(&x.basis, a)?;
    let bits = a.index();
    let masks = x.basis.masks();
    Ok(x
        .coefficients
        .iter_ones()
        .fold(false, |acc, k| acc ^ (bits & masks[k] == masks[k])))
}

/// Constraint vector of the test `a`: entry `S` is `prod_{i in S} a_i`, so that
/// `lift(a) . x = x(a)`. This is the row of the constant-free Reed-Muller
/// generator indexed by `a`.
pub fn lift(a: &TestPoint, basis: &MonomialBasis) -> Result<BitVec> {
    check_point(basis, a)?;
    let bits = a.index();
    let mut out = BitVec::zeros(basis.n());
    for (k, &s) in basis.masks().iter().enumerate() {
        if bits & s == s {
            out.set(k, true);
        }
    }
    Ok(out)
}

/// Learning-matrix entry `M(a, x) = (-1)^{x(a)}`.
pub fn mvalue(a: &TestPoint, x: &PolyVec) -> Result<i32> {
    Ok(if evaluate(x, a)? { -1 } else { 1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tp(s: &str) -> TestPoint {
        TestPoint::new(BitVec::from_bit_str(s).unwrap())
    }

    #[test]
    fn basis_examples() {
        let b = MonomialBasis::new(2, 2).unwrap();
        assert_eq!(b.monomials(), &[vec![0], vec![1], vec![0, 1]]);
        assert_eq!(MonomialBasis::new(3, 2).unwrap().n(), 6);
        assert_eq!(MonomialBasis::new(4, 3).unwrap().n(), 14);
        let b = MonomialBasis::new(4, 2).unwrap();
        assert_eq!(b.monomial(4), &[0, 1]);
        assert_eq!(b.monomial(9), &[2, 3]);
        assert!(matches!(MonomialBasis::new(2, 3), Err(Error::InvalidDegree { .. })));
        assert!(matches!(MonomialBasis::new(2, 0), Err(Error::InvalidDegree { .. })));
    }

    #[test]
    fn quadratic_dimension_is_triangular() {
        for m in 2..=12 {
            assert_eq!(MonomialBasis::new(m, 2).unwrap().n() as u128, binomial(m + 1, 2));
        }
    }

    #[test]
    fn evaluate_examples() {
        let b = basis(2, 2).unwrap();
        let z1z2 = PolyVec::parse(b.clone(), "z1*z2").unwrap();
        assert!(evaluate(&z1z2, &tp("11")).unwrap());
        assert!(!evaluate(&z1z2, &tp("00")).unwrap());
        let p = PolyVec::parse(b.clone(), "z1+z1*z2").unwrap();
        assert!(evaluate(&p, &tp("10")).unwrap());
        assert!(evaluate(&p, &tp("111")).is_err());
    }

    #[test]
    fn lift_examples() {
        let b = basis(3, 2).unwrap();
        let l = lift(&tp("110"), &b).unwrap();
        assert_eq!(l.to_string(), "110100");
        assert!(lift(&TestPoint::zero(3), &b).unwrap().is_zero());
        let b2 = basis(2, 2).unwrap();
        assert_eq!(lift(&tp("11"), &b2).unwrap().to_string(), "111");
    }

    #[test]
    fn mvalue_examples() {
        let b = basis(2, 2).unwrap();
        let zero = PolyVec::zero(b.clone());
        let z1z2 = PolyVec::parse(b.clone(), "z1*z2").unwrap();
        let values: Vec<i32> = ["00", "10", "01", "11"]
            .iter()
            .map(|a| mvalue(&tp(a), &z1z2).unwrap())
            .collect();
        assert_eq!(values, vec![1, 1, 1, -1]);
        for a in ["00", "10", "01", "11"] {
            assert_eq!(mvalue(&tp(a), &zero).unwrap(), 1);
        }
    }

    #[test]
    fn text_form() {
        let b = basis(3, 2).unwrap();
        let p = PolyVec::parse(b.clone(), "z2*z1 + z3").unwrap();
        assert_eq!(p.to_string(), "z3+z1*z2");
        assert_eq!(PolyVec::parse(b.clone(), "z1+z1").unwrap().to_string(), "0");
        assert_eq!(PolyVec::parse(b.clone(), "z1*z1").unwrap().to_string(), "z1");
        assert!(PolyVec::parse(b.clone(), "z1*z2*z3").is_err());
        assert!(PolyVec::parse(b.clone(), "z4").is_err());
        assert!(PolyVec::parse(b.clone(), "z1++z2").is_err());
    }

    #[test]
    fn quadratic_lift_is_upper_triangle_of_outer_product() {
        let m = 4;
        let b = basis(m, 2).unwrap();
        for a in 0..(1u64 << m) {
            let l = lift(&TestPoint::from_index(a, m), &b).unwrap();
            for i in 0..m {
                for j in i..m {
                    let outer = (a >> i) & 1 == 1 && (a >> j) & 1 == 1;
                    let mask = (1u64 << i) | (1u64 << j);
                    assert_eq!(l.get(b.index_of_mask(mask).unwrap()), outer);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn mvalue_matches_lift(m in 1usize..7, d_off in 0usize..6, a in any::<u64>(), x in any::<u64>()) {
            let d = 1 + d_off % m;
            let b = basis(m, d).unwrap();
            let a = TestPoint::from_index(a & ((1 << m) - 1), m);
            let x = PolyVec::from_index(b.clone(), x & (u64::MAX >> (64 - b.n())));
            let l = lift(&a, &b).unwrap();
            let dot = l.dot(x.coefficients()).unwrap() as i32;
            prop_assert_eq!(mvalue(&a, &x).unwrap(), 1 - 2 * dot);
            prop_assert_eq!(b.lift_index(a.index()), l.to_u64());
        }

        #[test]
        fn evaluate_is_linear(m in 1usize..7, a in any::<u64>(), x in any::<u64>(), y in any::<u64>()) {
            let b = basis(m, m.min(3)).unwrap();
            let mask = u64::MAX >> (64 - b.n());
            let a = TestPoint::from_index(a & ((1 << m) - 1), m);
            let x = PolyVec::from_index(b.clone(), x & mask);
            let y = PolyVec::from_index(b.clone(), y & mask);
            let s = x.add(&y).unwrap();
            prop_assert_eq!(evaluate(&s, &a).unwrap(), evaluate(&x, &a).unwrap() ^ evaluate(&y, &a).unwrap());
        }

        #[test]
        fn lift_injective_on_low_support(m in 2usize..7, d_off in 0usize..5) {
            let d = 1 + d_off % m;
            let b = basis(m, d).unwrap();
            let mut seen = std::collections::HashMap::new();
            for a in 0..(1u64 << m) {
                if (a.count_ones() as usize) <= d {
                    let l = b.lift_index(a);
                    prop_assert!(seen.insert(l, a).is_none());
                }
            }
        }

        #[test]
        fn text_round_trip(m in 1usize..6, x in any::<u64>()) {
            let b = basis(m, m.min(3)).unwrap();
            let x = PolyVec::from_index(b.clone(), x & (u64::MAX >> (64 - b.n())));
            let text = x.to_string();
            let back = PolyVec::parse(b.clone(), &text).unwrap();
            prop_assert_eq!(&back, &x);
            prop_assert_eq!(back.to_string(), text);
        }
    }
}
