//! Learners that match the lower bound from above.
//!
//! [`gauss_learner`] keeps only samples whose lifted test raises the rank of the
//! linear system and solves once the rank reaches `n`, so it stores at most `n`
//! samples of `m + 1` bits. [`basis_learner`] ignores every test except the
//! indicator vectors of sets of size `1..=d`, keeps one answer bit per such set,
//! and recovers the coefficients by Möbius inversion over the subset lattice.
//! It uses `O(n)` bits but waits for a coupon-collector number of samples.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gf2::{BitMat, BitVec, EchelonBasis};
use crate::poly::{evaluate, lift, MonomialBasis, PolyVec, TestPoint};

/// Which tests a stream draws.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamMode {
    /// `a` uniform over `{0,1}^m`.
    Uniform,
    /// `a` uniform over the `m` standard basis vectors.
    StandardBasis,
}

/// Seeded source of labelled samples `(a, x(a))` for a hidden polynomial.
#[derive(Clone, Debug)]
pub struct SampleStream {
    basis: Arc<MonomialBasis>,
    hidden: PolyVec,
    seed: u64,
    counter: u64,
    mode: StreamMode,
    rng: ChaCha8Rng,
}

impl SampleStream {
    /// A stream on generator stream `stream` of `seed`, with a fixed hidden input.
    pub fn new(hidden: PolyVec, seed: u64, stream: u64, mode: StreamMode) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        SampleStream {
            basis: hidden.basis().clone(),
            hidden,
            seed,
            counter: 0,
            mode,
            rng,
        }
    }

    /// Draws the hidden input uniformly from the same generator, then streams samples.
    pub fn random(basis: Arc<MonomialBasis>, seed: u64, stream: u64, mode: StreamMode) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let bits: Vec<bool> = (0..basis.n()).map(|_| rng.gen()).collect();
        let hidden = PolyVec::from_coefficients(basis.clone(), BitVec::from_bits(&bits)).expect("length matches basis");
        SampleStream {
            basis,
            hidden,
            seed,
            counter: 0,
            mode,
            rng,
        }
    }

    pub fn basis(&self) -> &Arc<MonomialBasis> {
        &self.basis
    }

    pub fn hidden(&self) -> &PolyVec {
        &self.hidden
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn mode(&self) -> StreamMode {
        self.mode
    }
}

/// Next sample `(a, x(a))`; the label is the bit `x(a)`, so `M(a, x) = (-1)^bit`.
pub fn gen_sample(stream: &mut SampleStream) -> (TestPoint, bool) {
    let m = stream.basis.m();
    let a = match stream.mode {
        StreamMode::Uniform => stream.rng.gen_range(0..1u64 << m),
        StreamMode::StandardBasis => 1u64 << stream.rng.gen_range(0..m),
    };
    stream.counter += 1;
    let a = TestPoint::from_index(a, m);
    let b = evaluate(&stream.hidden, &a).expect("test has m coordinates");
    (a, b)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LearnerReport {
    pub success: bool,
    pub samples_used: u64,
    /// Bits in the declared sample store.
    pub space_bits: u64,
    /// Transient bookkeeping outside the sample store.
    pub tracker_bits: u64,
    /// Rank reached (Gaussian learner) or targets covered (basis learner).
    pub progress: usize,
    #[serde(serialize_with = "serialize_recovered")]
    pub recovered: Option<PolyVec>,
}

fn serialize_recovered<S: serde::Serializer>(v: &Option<PolyVec>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(p) => s.serialize_some(&p.to_string()),
        None => s.serialize_none(),
    }
}

/// Streaming Gaussian elimination over the lifted tests.
pub fn gauss_learner(stream: &mut SampleStream, sample_budget: u64) -> LearnerReport {
    let basis = stream.basis.clone();
    let n = basis.n();
    let m = basis.m();
    let mut echelon = EchelonBasis::new(n);
    let mut stored: Vec<(TestPoint, bool)> = Vec::new();
    let mut used = 0;
    while used < sample_budget && echelon.rank() < n {
        let (a, b) = gen_sample(stream);
        used += 1;
        let row = lift(&a, &basis).expect("test has m coordinates");
        if echelon.insert(&row).expect("row has n entries") {
            stored.push((a, b));
        }
    }
    let space_bits = stored.len() as u64 * (m as u64 + 1);
    let tracker_bits = (echelon.rank() * n) as u64;
    let mut recovered = None;
    if echelon.rank() == n {
        let rows: Vec<BitVec> = stored.iter().map(|(a, _)| lift(a, &basis).expect("checked")).collect();
        let rhs = BitVec::from_bits(&stored.iter().map(|&(_, b)| b).collect::<Vec<_>>());
        let system = BitMat::from_rows(n, rows).expect("rows have n entries");
        if let Some(sol) = system.solve(&rhs).expect("dimensions agree") {
            if sol.kernel_dimension == 0 {
                recovered = Some(PolyVec::from_coefficients(basis.clone(), sol.solution).expect("n entries"));
            }
        }
    }
    LearnerReport {
        success: recovered.as_ref() == Some(&stream.hidden),
        samples_used: used,
        space_bits,
        tracker_bits,
        progress: echelon.rank(),
        recovered,
    }
}

/// `x_S = sum_{nonempty T subset of S} b(1_T)` over F2, from the answers on every
/// indicator test of a set of size `1..=d`, indexed like the monomial basis.
pub fn mobius_reconstruct(basis: &Arc<MonomialBasis>, answers: &BitVec) -> Result<PolyVec> {
    if answers.len() != basis.n() {
        return Err(Error::LengthMismatch {
            left: answers.len(),
            right: basis.n(),
        });
    }
    let mut coefficients = BitVec::zeros(basis.n());
    for (k, &mask) in basis.masks().iter().enumerate() {
        let mut acc = false;
        let mut sub = mask;
        while sub != 0 {
            let idx = basis.index_of_mask(sub).expect("subsets of a monomial are monomials");
            acc ^= answers.get(idx);
            sub = (sub - 1) & mask;
        }
        coefficients.set(k, acc);
    }
    PolyVec::from_coefficients(basis.clone(), coefficients)
}

/// Waits until every indicator test of support size `1..=d` has been seen once.
pub fn basis_learner(stream: &mut SampleStream, sample_budget: u64) -> LearnerReport {
    let basis = stream.basis.clone();
    let n = basis.n();
    let d = basis.d();
    let mut answers = BitVec::zeros(n);
    let mut seen = BitVec::zeros(n);
    let mut covered = 0;
    let mut used = 0;
    while used < sample_budget && covered < n {
        let (a, b) = gen_sample(stream);
        used += 1;
        let support = a.support_size();
        if support == 0 || support > d {
            continue;
        }
        let idx = basis.index_of_mask(a.index()).expect("support within degree");
        if !seen.get(idx) {
            seen.set(idx, true);
            answers.set(idx, b);
            covered += 1;
        }
    }
    let recovered = (covered == n).then(|| mobius_reconstruct(&basis, &answers).expect("n answers"));
    LearnerReport {
        success: recovered.as_ref() == Some(&stream.hidden),
        samples_used: used,
        space_bits: 2 * n as u64,
        tracker_bits: 0,
        progress: covered,
        recovered,
    }
}

/// `H_k = 1 + 1/2 + ... + 1/k`.
pub fn harmonic(k: usize) -> f64 {
    (1..=k).map(|i| 1.0 / i as f64).sum()
}

/// Expected samples until each of `n_targets` tests, each hit with probability
/// `2^{-m}` per sample, has appeared: `2^m H_{n_targets}`.
pub fn coupon_expectation(m: usize, n_targets: usize) -> f64 {
    (m as f64).exp2() * harmonic(n_targets)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    Gauss,
    Basis,
}

impl std::str::FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gauss" => Ok(Algo::Gauss),
            "basis" => Ok(Algo::Basis),
            _ => Err(Error::Parse(format!("unknown learner {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct TrialConfig {
    pub algo: Algo,
    pub m: usize,
    pub d: usize,
    pub trials: usize,
    /// Defaults to `10 n` for the Gaussian learner and `20 * 2^m` for the basis learner.
    pub budget: Option<u64>,
    pub seed: u64,
    pub mode: StreamMode,
}

impl TrialConfig {
    pub fn new(algo: Algo, m: usize, d: usize, trials: usize, seed: u64) -> Self {
        TrialConfig {
            algo,
            m,
            d,
            trials,
            budget: None,
            seed,
            mode: StreamMode::Uniform,
        }
    }

    pub fn resolved_budget(&self, n: usize) -> u64 {
        self.budget.unwrap_or(match self.algo {
            Algo::Gauss => 10 * n as u64,
            Algo::Basis => 20u64 << self.m.min(40),
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SampleStats {
    pub p50: u64,
    pub p90: u64,
    pub mean: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpaceStats {
    pub max: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrialsReport {
    pub algo: Algo,
    pub m: usize,
    pub d: usize,
    pub trials: usize,
    pub success_rate: f64,
    pub samples: SampleStats,
    pub space_bits: SpaceStats,
    pub n: usize,
    pub budget: u64,
    pub mode: StreamMode,
    /// Coupon-collector mean for the basis learner.
    pub expected_samples: Option<f64>,
}

/// Nearest-rank quantile of sorted data.
fn quantile(sorted: &[u64], q: f64) -> u64 {
    if sorted.is_empty() {
        return 0;
    }
    let rank = (q * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

/// Runs one learner over `trials` hidden inputs, trial `i` on generator stream `i + 1`.
pub fn run_trials(config: &TrialConfig) -> Result<TrialsReport> {
    let basis = crate::poly::basis(config.m, config.d)?;
    let n = basis.n();
    if config.mode == StreamMode::StandardBasis && config.algo == Algo::Basis && config.d != 1 {
        return Err(Error::InvalidParameter(
            "standard-basis streams only cover degree-1 targets".into(),
        ));
    }
    let budget = config.resolved_budget(n);
    let reports: Vec<LearnerReport> = (0..config.trials)
        .into_par_iter()
        .map(|t| {
            let mut stream = SampleStream::random(basis.clone(), config.seed, t as u64 + 1, config.mode);
            match config.algo {
                Algo::Gauss => gauss_learner(&mut stream, budget),
                Algo::Basis => basis_learner(&mut stream, budget),
            }
        })
        .collect();
    let successes = reports.iter().filter(|r| r.success).count();
    let mut samples: Vec<u64> = reports.iter().map(|r| r.samples_used).collect();
    samples.sort_unstable();
    let mean = samples.iter().sum::<u64>() as f64 / samples.len().max(1) as f64;
    let expected_samples = match (config.algo, config.mode) {
        (Algo::Basis, StreamMode::Uniform) => Some(coupon_expectation(config.m, n)),
        (Algo::Basis, StreamMode::StandardBasis) => Some(n as f64 * harmonic(n)),
        _ => None,
    };
    Ok(TrialsReport {
        algo: config.algo,
        m: config.m,
        d: config.d,
        trials: config.trials,
        success_rate: successes as f64 / config.trials.max(1) as f64,
        samples: SampleStats {
            p50: quantile(&samples, 0.5),
            p90: quantile(&samples, 0.9),
            mean,
        },
        space_bits: SpaceStats {
            max: reports.iter().map(|r| r.space_bits).max().unwrap_or(0),
        },
        n,
        budget,
        mode: config.mode,
        expected_samples,
    })
}
