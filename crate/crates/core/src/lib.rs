//! Exact weight distributions, amplification-curve bounds and space-bounded
//! learners for low-degree polynomials over F2.
//!
//! The learning matrix has rows indexed by tests `a` in `{0,1}^m`, columns by
//! coefficient vectors `x` in `{0,1}^n`, and entries `M(a, x) = (-1)^{x(a)}`.
//! Modules, bottom-up:
//!
//! - [`gf2`]: packed vectors and matrices over F2, rank and solving.
//! - [`poly`]: monomial bases, evaluation and lifting of tests.
//! - [`gram`]: brute-force rows of `N = M^T M`.
//! - [`rmweights`]: the closed-form row distribution for quadratics.
//! - [`ampbound`]: dual-certificate upper bounds and lower bounds on the
//!   2-norm amplification curve.
//! - [`posterior`]: the truncated-posterior process of a full-information learner.
//! - [`learners`]: the Gaussian-elimination and basis-waiting learners.
//! - [`verify`]: named self-check suites used by the command-line tool.

pub mod ampbound;
pub mod caps;
pub mod error;
pub mod gf2;
pub mod gram;
pub mod learners;
pub mod poly;
pub mod posterior;
pub mod rmweights;
pub mod verify;

pub use caps::Caps;
pub use error::{Error, Result};
pub use gf2::{BitMat, BitVec};
pub use gram::RowHistogram;
pub use poly::{MonomialBasis, PolyVec, TestPoint};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/gf2.md")]
    mod gf2 {}
    #[doc = include_str!("../../../book/src/polynomials.md")]
    mod polynomials {}
    #[doc = include_str!("../../../book/src/weights.md")]
    mod weights {}
    #[doc = include_str!("../../../book/src/amplification.md")]
    mod amplification {}
    #[doc = include_str!("../../../book/src/truncation.md")]
    mod truncation {}
    #[doc = include_str!("../../../book/src/learners.md")]
    mod learners {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
