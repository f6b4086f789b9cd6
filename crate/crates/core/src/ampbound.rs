//! Upper and lower bounds on the 2-norm amplification curve.
//!
//! The curve at `delta` is `tau(delta) = (1/2) log_{2^m} OPT`, where `OPT` is the
//! largest `||M P||_2^2` over distributions with `||P||_2 <= 2^{-(1-delta/2) n}`.
//! Clipping the Gram matrix at a threshold `kappa` gives a feasible dual
//! solution and hence
//!
//! ```text
//! OPT <= (kappa + W_kappa 2^{(delta-1) n}) / 2^m
//! ```
//!
//! with `W_kappa` the largest row sum of the excesses `N_ij - kappa` over `kappa`.
//! Lower bounds come from evaluating `||M P||_2` on explicit admissible `P`.
//!
//! Logarithms of big integers carry a relative error below `1e-12`
//! (see [`log2_big`]).

use num_bigint::BigUint;
use num_traits::Zero;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::caps::Caps;
use crate::error::{Error, Result};
use crate::gram::{self, biguint_as_string, RowHistogram};
use crate::poly::MonomialBasis;
use crate::posterior::{bias_vector, Posterior};
use crate::rmweights::log2_big;

/// An upper bound on the curve at one `delta`, from one threshold `kappa`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TauBound {
    pub delta: f64,
    #[serde(serialize_with = "kappa_label")]
    pub kappa: u64,
    #[serde(serialize_with = "biguint_as_string")]
    pub w_kappa: BigUint,
    pub log2_opt_upper: f64,
    pub tau_upper: f64,
    /// `-(1-delta)/8 + (5+delta)/(8m)`, present for quadratic polynomials.
    pub closed_form: Option<f64>,
}

/// `"2^k"` for powers of two, decimal otherwise.
pub fn format_kappa(kappa: u64) -> String {
    if kappa.is_power_of_two() {
        format!("2^{}", kappa.trailing_zeros())
    } else {
        kappa.to_string()
    }
}

fn kappa_label<S: Serializer>(k: &u64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format_kappa(*k))
}

/// `sum_{v > kappa} count(v) (v - kappa)`, diagonal included.
pub fn w_kappa(hist: &RowHistogram, kappa: u64) -> BigUint {
    w_kappa_signed(hist, kappa.min(i64::MAX as u64) as i64)
}

/// [`w_kappa`] for any integer threshold; the clipping argument does not need `kappa >= 0`.
pub fn w_kappa_signed(hist: &RowHistogram, kappa: i64) -> BigUint {
    hist.counts
        .iter()
        .filter(|(&v, _)| v > kappa)
        .map(|(&v, c)| c * BigUint::from((v as i128 - kappa as i128) as u128))
        .sum()
}

/// `log2(2^x + 2^y)` without leaving the log domain.
fn log2_add(x: f64, y: f64) -> f64 {
    let (hi, lo) = if x >= y { (x, y) } else { (y, x) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp2().ln_1p() / std::f64::consts::LN_2
}

/// Row histogram of `N` from the cheapest available route, with the route's name:
/// closed form for parity and quadratics, enumeration otherwise.
pub fn histogram_for(m: usize, d: usize, caps: &Caps) -> Result<(RowHistogram, &'static str)> {
    match d {
        1 => Ok((gram::parity_histogram(m)?, "parity")),
        2 if m <= crate::rmweights::MAX_EXACT_M => Ok((crate::rmweights::exact_histogram_d2(m)?, "exact")),
        _ => Ok((gram::brute_histogram_with(m, d, caps)?, "brute")),
    }
}

/// The dual bound at a fixed threshold.
pub fn dual_bound(hist: &RowHistogram, m: usize, n: usize, delta: f64, kappa: i64) -> Result<TauBound> {
    if kappa < 0 {
        return Err(Error::InvalidParameter(format!("kappa must be nonnegative, got {kappa}")));
    }
    check_delta(delta)?;
    if m == 0 {
        return Err(Error::InvalidParameter("m must be positive".into()));
    }
    let kappa = kappa as u64;
    let w = w_kappa(hist, kappa);
    let shift = (1.0 - delta) * n as f64;
    let kappa_term = if kappa == 0 {
        f64::NEG_INFINITY
    } else {
        (kappa as f64).log2() + shift
    };
    let w_term = if w.is_zero() { f64::NEG_INFINITY } else { log2_big(&w) };
    let log2_opt_upper = log2_add(kappa_term, w_term) - shift - m as f64;
    Ok(TauBound {
        delta,
        kappa,
        w_kappa: w,
        log2_opt_upper,
        tau_upper: log2_opt_upper / (2 * m) as f64,
        closed_form: (hist.d == 2).then(|| closed_form_quad(delta, m)),
    })
}

fn check_delta(delta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::InvalidParameter(format!("delta must lie in [0, 1], got {delta}")));
    }
    Ok(())
}

/// Smallest bound over `kappa = 0` and every nonnegative histogram value.
///
/// The bound is piecewise linear in `kappa` between consecutive histogram
/// values, so this is also the optimum over all real `kappa >= 0`.
pub fn best_kappa(hist: &RowHistogram, m: usize, n: usize, delta: f64) -> Result<TauBound> {
    let mut candidates: Vec<i64> = hist.counts.keys().copied().filter(|&v| v > 0).collect();
    candidates.push(0);
    candidates.sort_unstable();
    candidates.dedup();
    let mut best: Option<TauBound> = None;
    for kappa in candidates {
        let b = dual_bound(hist, m, n, delta, kappa)?;
        if best.as_ref().map_or(true, |cur| b.tau_upper < cur.tau_upper) {
            best = Some(b);
        }
    }
    Ok(best.expect("kappa = 0 is always a candidate"))
}

/// Threshold `2^{m-k}` with `k = floor((1-delta) m / 4 + (3-delta) / 4)`.
pub fn paper_schedule_quad(delta: f64, m: usize) -> (usize, u64) {
    let raw = (1.0 - delta) * m as f64 / 4.0 + (3.0 - delta) / 4.0;
    // absorb rounding just below an integer, e.g. 0.75 * 4 + 0.75 - 0.75
    let k = ((raw + 1e-9).floor() as usize).min(m);
    (k, 1u64 << (m - k))
}

/// `-(1-delta)/8 + (5+delta)/(8m)`.
pub fn closed_form_quad(delta: f64, m: usize) -> f64 {
    -(1.0 - delta) / 8.0 + (5.0 + delta) / (8.0 * m as f64)
}

/// Dual solution `z I + w J` against `V + N / 2^m`, all entries scaled by `2^m`.
#[derive(Clone, Debug, Serialize)]
pub struct DualCertificate {
    pub kappa: i64,
    /// Numerator of `w = kappa / 2^m`.
    pub w_scaled: i64,
    /// Numerator of `z = W_kappa / 2^m`.
    pub z_scaled: u64,
    pub scale: u64,
    /// Pairs `i < j` with `N_ij > kappa` and their weights `N_ij - kappa`.
    #[serde(skip)]
    pub clip: Vec<(u32, u32, i64)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CertificateReport {
    pub m: usize,
    pub d: usize,
    pub n: usize,
    pub kappa: i64,
    pub delta: f64,
    pub pass: bool,
    /// Smallest entry of `z I + w J - V - N / 2^m`.
    pub worst_slack: f64,
    pub gram_symmetric: bool,
    pub laplacian_ok: bool,
    pub clip_pairs: usize,
    /// `W_kappa` read off the materialized matrix rows.
    pub w_kappa_matrix: u64,
    /// `W_kappa` from the brute-force histogram.
    #[serde(serialize_with = "biguint_as_string")]
    pub w_kappa_histogram: BigUint,
    pub w_kappa_agree: bool,
    /// `log2(w + z 2^{(delta-1) n})`, the dual objective.
    pub log2_dual_objective: f64,
    /// The same objective from [`dual_bound`]; absent for negative `kappa`.
    pub log2_opt_upper: Option<f64>,
}

/// Materializes `N` and the clipped-Laplacian dual solution and checks it entrywise.
pub fn verify_certificate(m: usize, d: usize, kappa: i64, delta: f64) -> Result<CertificateReport> {
    verify_certificate_with(m, d, kappa, delta, &Caps::default())
}

pub fn verify_certificate_with(m: usize, d: usize, kappa: i64, delta: f64, caps: &Caps) -> Result<CertificateReport> {
    check_delta(delta)?;
    let basis = MonomialBasis::new(m, d)?;
    let n = basis.n();
    Caps::check("n", n, caps.dense_n)?;
    let size = 1usize << n;
    let top = 1i64 << m;

    // column x of M as a truth table over all tests
    let words = (1usize << m).div_ceil(64);
    let tables: Vec<Vec<u64>> = (0..basis.n()).map(|k| basis.truth_table(k)).collect();
    let columns: Vec<Vec<u64>> = (0..size)
        .into_par_iter()
        .map(|x| {
            let mut t = vec![0u64; words];
            for (k, tab) in tables.iter().enumerate() {
                if x >> k & 1 == 1 {
                    t.iter_mut().zip(tab).for_each(|(a, b)| *a ^= b);
                }
            }
            t
        })
        .collect();
    let gram: Vec<i32> = (0..size * size)
        .into_par_iter()
        .map(|ij| {
            let (i, j) = (ij / size, ij % size);
            let diff: u32 = columns[i].iter().zip(&columns[j]).map(|(a, b)| (a ^ b).count_ones()).sum();
            (top - 2 * diff as i64) as i32
        })
        .collect();
    let entry = |i: usize, j: usize| gram[i * size + j] as i64;
    let kappa_i = kappa;

    let gram_symmetric = (0..size).all(|i| (i + 1..size).all(|j| entry(i, j) == entry(j, i)));

    let w_matrix = (0..size)
        .map(|i| (0..size).map(|j| (entry(i, j) - kappa_i).max(0)).sum::<i64>())
        .max()
        .unwrap_or(0);

    let mut clip = Vec::new();
    for i in 0..size {
        for j in i + 1..size {
            let v = entry(i, j);
            if v > kappa_i {
                clip.push((i as u32, j as u32, v - kappa_i));
            }
        }
    }
    let cert = DualCertificate {
        kappa,
        w_scaled: kappa,
        z_scaled: w_matrix as u64,
        scale: top as u64,
        clip,
    };

    // V scaled by 2^m, as sparse rows
    let mut adjacency: Vec<Vec<(usize, i64)>> = vec![Vec::new(); size];
    let mut diag = vec![0i64; size];
    for &(i, j, c) in &cert.clip {
        let (i, j) = (i as usize, j as usize);
        adjacency[i].push((j, -c));
        adjacency[j].push((i, -c));
        diag[i] += c;
        diag[j] += c;
    }
    let laplacian_ok = (0..size).all(|i| {
        let off: i64 = adjacency[i].iter().map(|&(_, v)| v).sum();
        let nonpositive = adjacency[i].iter().all(|&(_, v)| v <= 0);
        diag[i] + off == 0 && nonpositive && diag[i] >= -off
    });

    let worst = (0..size)
        .into_par_iter()
        .map(|i| {
            let mut v_row = vec![0i64; size];
            v_row[i] = diag[i];
            for &(j, v) in &adjacency[i] {
                v_row[j] += v;
            }
            (0..size)
                .map(|j| {
                    let lhs = cert.w_scaled as i64 + if i == j { cert.z_scaled as i64 } else { 0 };
                    lhs - v_row[j] - entry(i, j)
                })
                .min()
                .unwrap_or(0)
        })
        .min()
        .unwrap_or(0);

    let hist = gram::brute_histogram_with(m, d, caps)?;
    let w_hist = w_kappa_signed(&hist, kappa);
    let bound = (kappa >= 0).then(|| dual_bound(&hist, m, n, delta, kappa)).transpose()?;
    let z = cert.z_scaled as f64 / top as f64;
    let w = kappa as f64 / top as f64;
    let log2_dual_objective = (w + z * ((delta - 1.0) * n as f64).exp2()).log2();

    let w_kappa_agree = w_hist == BigUint::from(w_matrix as u64);
    Ok(CertificateReport {
        m,
        d,
        n,
        kappa,
        delta,
        pass: worst >= 0 && gram_symmetric && laplacian_ok && w_kappa_agree,
        worst_slack: worst as f64 / top as f64,
        gram_symmetric,
        laplacian_ok,
        clip_pairs: cert.clip.len(),
        w_kappa_matrix: w_matrix as u64,
        w_kappa_histogram: w_hist,
        w_kappa_agree,
        log2_dual_objective,
        log2_opt_upper: bound.map(|b| b.log2_opt_upper),
    })
}

/// `||M P||_2`, the expectation norm of the bias vector over all `2^m` tests.
pub fn norm_amplification(p: &Posterior, m: usize, d: usize) -> Result<f64> {
    let basis = MonomialBasis::new(m, d)?;
    norm_with_basis(p, &basis)
}

fn norm_with_basis(p: &Posterior, basis: &MonomialBasis) -> Result<f64> {
    let b = bias_vector(p, basis)?;
    Ok((b.iter().map(|v| v * v).sum::<f64>() / b.len() as f64).sqrt())
}

/// Best lower bound found by [`tau_lower`] and the distribution achieving it.
#[derive(Clone, Debug, Serialize)]
pub struct TauLower {
    pub delta: f64,
    pub tau_lower: f64,
    pub best_candidate: String,
    pub candidates: usize,
}

/// `max log_{2^m} ||M P||_2` over explicit admissible distributions.
///
/// Families: the uniform distribution, uniform over random sets of the
/// smallest admissible size, uniform over affine subspaces cut out by test
/// lifts or by random equations, and the uniform/point-mass mixture with the
/// largest admissible point weight. `trials` samples are drawn per random family.
pub fn tau_lower(m: usize, d: usize, delta: f64, trials: usize, seed: u64) -> Result<TauLower> {
    tau_lower_with(m, d, delta, trials, seed, &Caps::default())
}

pub fn tau_lower_with(m: usize, d: usize, delta: f64, trials: usize, seed: u64, caps: &Caps) -> Result<TauLower> {
    check_delta(delta)?;
    let basis = MonomialBasis::new(m, d)?;
    let n = basis.n();
    Caps::check("n", n, caps.simulate_n)?;
    let size = 1u64 << n;
    let budget = ((delta - 1.0) * n as f64).exp2();
    let admissible = |p: &Posterior| p.sum_squares() <= budget * (1.0 + 1e-12);

    let mut specs: Vec<(String, u64)> = vec![("uniform".into(), 0), ("mixture".into(), 0)];
    for t in 0..trials as u64 {
        specs.push(("random_support".into(), t));
        specs.push(("lifted_subspace".into(), t));
        specs.push(("random_subspace".into(), t));
    }

    let support_size = ((1.0 - delta) * n as f64).exp2().ceil().min(size as f64) as usize;
    let dim = (((1.0 - delta) * n as f64) - 1e-9).ceil().max(0.0) as usize;
    let codim = n - dim.min(n);

    let build = |kind: &str, t: u64| -> Result<Posterior> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(t + 1);
        match kind {
            "uniform" => Ok(Posterior::uniform(n)),
            "mixture" => {
                let inv = 1.0 / size as f64;
                let lambda = ((budget - inv).max(0.0) / (1.0 - inv)).sqrt().min(1.0);
                let mut probs = vec![(1.0 - lambda) * inv; size as usize];
                probs[0] += lambda;
                Posterior::from_probs(n, probs)
            }
            "random_support" => {
                let pts: Vec<u64> = sample(&mut rng, size as usize, support_size)
                    .into_iter()
                    .map(|x| x as u64)
                    .collect();
                Posterior::uniform_over(&pts, n)
            }
            "lifted_subspace" | "random_subspace" => {
                let rows: Vec<u64> = (0..codim)
                    .map(|_| {
                        if kind == "lifted_subspace" {
                            basis.lift_index(rng.gen_range(0..1u64 << m))
                        } else {
                            rng.gen_range(0..size)
                        }
                    })
                    .collect();
                // coset of the common kernel through a random point
                let anchor = rng.gen_range(0..size);
                let pts: Vec<u64> = (0..size)
                    .filter(|&x| rows.iter().all(|&row| ((x ^ anchor) & row).count_ones() & 1 == 0))
                    .collect();
                Posterior::uniform_over(&pts, n)
            }
            _ => unreachable!(),
        }
    };

    let scored: Vec<Option<(f64, String)>> = specs
        .par_iter()
        .map(|(kind, t)| -> Result<Option<(f64, String)>> {
            let p = build(kind, *t)?;
            if !admissible(&p) {
                return Ok(None);
            }
            let norm = norm_with_basis(&p, &basis)?;
            Ok(Some((norm.log2() / m as f64, format!("{kind}#{t}"))))
        })
        .collect::<Result<_>>()?;

    let mut best: Option<(f64, String)> = None;
    let mut count = 0;
    for (tau, label) in scored.into_iter().flatten() {
        count += 1;
        if best.as_ref().map_or(true, |(b, _)| tau > *b) {
            best = Some((tau, label));
        }
    }
    let (value, label) = best.expect("the uniform distribution is always admissible");
    Ok(TauLower {
        delta,
        tau_lower: value,
        best_candidate: label,
        candidates: count,
    })
}

/// `sqrt(cols / rows) * sigma_max` for the polynomial learning matrix.
pub fn matrix_norm(m: usize, d: usize) -> Result<f64> {
    matrix_norm_with(m, d, &Caps::default())
}

pub fn matrix_norm_with(m: usize, d: usize, caps: &Caps) -> Result<f64> {
    let basis = MonomialBasis::new(m, d)?;
    Caps::check("n", basis.n(), caps.dense_n)?;
    let lifts: Vec<u64> = (0..1u64 << m).map(|a| basis.lift_index(a)).collect();
    let cols = 1usize << basis.n();
    Ok(expectation_operator_norm(lifts.len(), cols, |a, x| {
        if (x as u64 & lifts[a]).count_ones() & 1 == 1 {
            -1.0
        } else {
            1.0
        }
    }))
}

/// Operator norm from the expectation norm on columns to the expectation norm on rows,
/// by power iteration on `M^T M` to relative tolerance `1e-9`.
pub fn expectation_operator_norm(rows: usize, cols: usize, entry: impl Fn(usize, usize) -> f64 + Sync) -> f64 {
    let apply = |v: &[f64]| -> Vec<f64> {
        let mv: Vec<f64> = (0..rows)
            .into_par_iter()
            .map(|a| (0..cols).map(|x| entry(a, x) * v[x]).sum())
            .collect();
        (0..cols)
            .into_par_iter()
            .map(|x| (0..rows).map(|a| entry(a, x) * mv[a]).sum())
            .collect()
    };
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut v: Vec<f64> = (0..cols).map(|i| 1.0 + ((i * 7919) % 101) as f64 / 101.0).collect();
    let s = norm(&v);
    v.iter_mut().for_each(|x| *x /= s);
    let mut lambda = 0.0;
    for _ in 0..10_000 {
        let w = apply(&v);
        let next = norm(&w);
        if next == 0.0 {
            return 0.0;
        }
        v = w.into_iter().map(|x| x / next).collect();
        let done = (next - lambda).abs() <= 1e-12 * next;
        lambda = next;
        if done {
            break;
        }
    }
    (cols as f64 / rows as f64).sqrt() * lambda.sqrt()
}
