//! Size guardrails for the exponential-cost routines.
//!
//! Every brute-force routine enumerates something of size `2^n` or `2^m`; the
//! caps here bound those exponents. Raising a cap is allowed, but callers
//! should look at [`Caps::memory_estimate`] first.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caps {
    /// Coefficient dimension for full histogram enumeration (`2^n` polynomials).
    pub brute_n: usize,
    /// Variable count for per-polynomial enumeration over all tests.
    pub enum_m: usize,
    /// Variable count for the shift-symmetry check.
    pub shift_m: usize,
    /// Coefficient dimension for explicit certificates and matrix norms (`2^n x 2^n`).
    pub dense_n: usize,
    /// Coefficient dimension for dense posteriors and bias vectors.
    pub amplification_n: usize,
    /// Coefficient dimension for the lower-bound search and Monte Carlo paths.
    pub simulate_n: usize,
    /// `m * T` for exhaustive path enumeration.
    pub exhaustive_mt: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            brute_n: 26,
            enum_m: 30,
            shift_m: 20,
            dense_n: 13,
            amplification_n: 26,
            simulate_n: 20,
            exhaustive_mt: 22,
        }
    }
}

impl Caps {
    pub fn check(what: &'static str, value: usize, cap: usize) -> Result<()> {
        if value > cap {
            return Err(Error::CapExceeded { what, value, cap });
        }
        Ok(())
    }

    /// Rough peak memory in bytes for the routine guarded by `what` at exponent `value`.
    pub fn memory_estimate(what: &str, value: usize) -> u128 {
        let pow = |e: usize| 1u128.checked_shl(e as u32).unwrap_or(u128::MAX);
        match what {
            // per-monomial truth tables plus a per-weight tally
            "brute_n" => 64 * value as u128 + 8 * pow(value.min(30) / 2),
            "dense_n" => 4u128.saturating_mul(pow(2 * value)),
            "amplification_n" | "simulate_n" => 8u128.saturating_mul(pow(value)),
            "exhaustive_mt" => 8u128.saturating_mul(pow(value)),
            "enum_m" | "shift_m" => 8 * value as u128,
            _ => 0,
        }
    }
}
