//! Truncated posteriors of the full-information learner.
//!
//! A vertex of the learner's computation tree is identified with the exact
//! conditional distribution of the hidden input given the samples seen and
//! given that the path has not been truncated. A path is cut
//!
//! - at a *significant* vertex, once `||P||_2 >= 2^{-(1-delta/2) n}`;
//! - for inputs in the *High* set, those with `P(x) >= 2^{-alpha n}`;
//! - along a *high-bias* edge `(a, b)`, when `|(M P)(a)| >= 2^{-gamma m}`.
//!
//! Norms are expectation norms: `||f||_2 = (mean of f^2)^{1/2}`.
//! [`simulate_paths`] drives this process over random hidden inputs and sample
//! sequences and checks the per-vertex inequalities exactly, by enumerating
//! all tests and all inputs at every visited vertex.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::caps::Caps;
use crate::error::{Error, Result};
use crate::poly::{MonomialBasis, TestPoint};

/// Relative slack used when comparing squared norms against significance thresholds.
pub const REL_TOL: f64 = 1e-12;

/// Identifier of the generator behind every seeded routine in this crate.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng (rand_chacha 0.3); trial streams via set_stream";

/// A probability distribution over `{0,1}^n`, indexed by packed coefficient vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct Posterior {
    n: usize,
    probs: Vec<f64>,
}

impl Posterior {
    pub fn uniform(n: usize) -> Self {
        let size = 1usize << n;
        Posterior {
            n,
            probs: vec![1.0 / size as f64; size],
        }
    }

    pub fn point(x: u64, n: usize) -> Self {
        let mut probs = vec![0.0; 1usize << n];
        probs[x as usize] = 1.0;
        Posterior { n, probs }
    }

    /// Uniform distribution over the given distinct points.
    pub fn uniform_over(points: &[u64], n: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParameter("empty support".into()));
        }
        let mut probs = vec![0.0; 1usize << n];
        let p = 1.0 / points.len() as f64;
        for &x in points {
            if probs[x as usize] != 0.0 {
                return Err(Error::InvalidParameter(format!("repeated support point {x}")));
            }
            probs[x as usize] = p;
        }
        Ok(Posterior { n, probs })
    }

    pub fn from_probs(n: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != 1usize << n {
            return Err(Error::LengthMismatch {
                left: probs.len(),
                right: 1 << n,
            });
        }
        if probs.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::InvalidParameter("probabilities must be nonnegative".into()));
        }
        let total = compensated_sum(&probs);
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("probabilities sum to {total}")));
        }
        Ok(Posterior { n, probs })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, x: u64) -> f64 {
        self.probs[x as usize]
    }

    pub fn total(&self) -> f64 {
        compensated_sum(&self.probs)
    }

    /// `sum_x P(x)^2`.
    pub fn sum_squares(&self) -> f64 {
        self.probs.iter().map(|p| p * p).sum()
    }
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut carry = 0.0;
    for &v in values {
        let t = sum + v;
        carry += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + carry
}

/// Expectation 2-norm `sqrt(2^{-n} sum_x P(x)^2)`.
pub fn enorm(p: &Posterior) -> f64 {
    (p.sum_squares() / (1u64 << p.n) as f64).sqrt()
}

/// `||P||_2 >= 2^{-(1-delta/2) n}`, i.e. `sum_x P(x)^2 >= 2^{(delta-1) n}`.
pub fn is_significant(p: &Posterior, delta: f64) -> bool {
    let bound = ((delta - 1.0) * p.n as f64).exp2();
    p.sum_squares() >= bound * (1.0 - REL_TOL)
}

/// Inputs with `P(x) >= 2^{-alpha n}`, in increasing order.
pub fn high_set(p: &Posterior, alpha: f64) -> Vec<u64> {
    let threshold = (-alpha * p.n as f64).exp2();
    p.probs
        .iter()
        .enumerate()
        .filter(|(_, &q)| q > 0.0 && q >= threshold)
        .map(|(x, _)| x as u64)
        .collect()
}

fn check_dims(p: &Posterior, basis: &MonomialBasis) -> Result<()> {
    if p.n != basis.n() {
        return Err(Error::LengthMismatch {
            left: p.n,
            right: basis.n(),
        });
    }
    Ok(())
}

fn sign(x: u64, lift: u64) -> f64 {
    if (x & lift).count_ones() & 1 == 1 {
        -1.0
    } else {
        1.0
    }
}

/// `(M P)(a) = sum_x M(a, x) P(x)`.
pub fn bias(p: &Posterior, a: &TestPoint, basis: &MonomialBasis) -> Result<f64> {
    check_dims(p, basis)?;
    if a.m() != basis.m() {
        return Err(Error::LengthMismatch {
            left: a.m(),
            right: basis.m(),
        });
    }
    let lift = basis.lift_index(a.index());
    Ok(p.probs
        .iter()
        .enumerate()
        .filter(|(_, &q)| q != 0.0)
        .map(|(x, &q)| sign(x as u64, lift) * q)
        .sum())
}

/// `(M P)(a)` for every test, indexed by the packed test point.
///
/// For small `m` each entry is summed directly; otherwise one fast
/// Walsh-Hadamard transform of `P` gives all characters at once and the
/// tests read off the entries at their lifts.
pub fn bias_vector(p: &Posterior, basis: &MonomialBasis) -> Result<Vec<f64>> {
    check_dims(p, basis)?;
    Caps::check("n", p.n, Caps::default().amplification_n)?;
    let m = basis.m();
    let lifts: Vec<u64> = (0..1u64 << m).map(|a| basis.lift_index(a)).collect();
    if (1usize << m) <= 2 * p.n.max(1) {
        Ok(bias_vector_direct(p, &lifts))
    } else {
        let spectrum = walsh_hadamard(&p.probs);
        Ok(lifts.iter().map(|&l| spectrum[l as usize]).collect())
    }
}

fn bias_vector_direct(p: &Posterior, lifts: &[u64]) -> Vec<f64> {
    let support: Vec<(u64, f64)> = p
        .probs
        .iter()
        .enumerate()
        .filter(|(_, &q)| q != 0.0)
        .map(|(x, &q)| (x as u64, q))
        .collect();
    lifts
        .iter()
        .map(|&l| support.iter().map(|&(x, q)| sign(x, l) * q).sum())
        .collect()
}

/// Unnormalized Walsh-Hadamard transform: `out[s] = sum_x (-1)^{popcount(s & x)} v[x]`.
pub fn walsh_hadamard(v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    let mut h = 1;
    while h < out.len() {
        for block in out.chunks_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (u, w) in lo.iter_mut().zip(hi.iter_mut()) {
                let (s, t) = (*u + *w, *u - *w);
                *u = s;
                *w = t;
            }
        }
        h *= 2;
    }
    out
}

/// Result of following an edge out of a vertex.
#[derive(Clone, Debug, PartialEq)]
pub enum EdgeOutcome {
    /// Surviving mass `c_e` and the renormalized posterior.
    Alive { posterior: Posterior, c_e: f64 },
    /// No input survives the edge.
    Dead,
}

/// Conditions on the sample `(a, b)`: inputs in `High(P, alpha)` and inputs with
/// `M(a, x) != b` are removed and the rest renormalized by the surviving mass `c_e`.
pub fn edge_update(p: &Posterior, a: &TestPoint, b: i32, alpha: f64, basis: &MonomialBasis) -> Result<EdgeOutcome> {
    check_dims(p, basis)?;
    if b != 1 && b != -1 {
        return Err(Error::InvalidParameter(format!("outcome must be +1 or -1, got {b}")));
    }
    let lift = basis.lift_index(a.index());
    let high = (-alpha * p.n as f64).exp2();
    let want = b as f64;
    let mut probs: Vec<f64> = p
        .probs
        .iter()
        .enumerate()
        .map(|(x, &q)| {
            if q == 0.0 || q >= high || sign(x as u64, lift) != want {
                0.0
            } else {
                q
            }
        })
        .collect();
    let c_e: f64 = probs.iter().sum();
    if c_e <= 0.0 {
        return Ok(EdgeOutcome::Dead);
    }
    probs.iter_mut().for_each(|q| *q /= c_e);
    Ok(EdgeOutcome::Alive {
        posterior: Posterior { n: p.n, probs },
        c_e,
    })
}

/// Progress `<P_v, P_s> / <P_s, P_s>`; the expectation normalization cancels.
pub fn rho(p_v: &Posterior, p_s: &Posterior) -> Result<f64> {
    if p_v.n != p_s.n {
        return Err(Error::LengthMismatch {
            left: p_v.n,
            right: p_s.n,
        });
    }
    let cross: f64 = p_v.probs.iter().zip(&p_s.probs).map(|(a, b)| a * b).sum();
    Ok(cross / p_s.sum_squares())
}

/// Truncation constants derived from `delta'` and an upper bound on the curve at `delta'`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TruncationParams {
    pub delta_prime: f64,
    pub tau_used: f64,
    pub delta: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub eta: f64,
}

impl TruncationParams {
    pub fn new(delta_prime: f64, tau_used: f64) -> Result<Self> {
        if !(delta_prime > 0.0 && delta_prime < 1.0) {
            return Err(Error::InvalidParameter(format!("delta' must lie in (0, 1), got {delta_prime}")));
        }
        if !(tau_used < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "the curve bound must be negative, got {tau_used}"
            )));
        }
        let delta = delta_prime / 6.0;
        let alpha = 1.0 - 2.0 * delta;
        let gamma = -tau_used / 2.0;
        let beta = gamma.min(delta) / 8.0;
        Ok(TruncationParams {
            delta_prime,
            tau_used,
            delta,
            alpha,
            gamma,
            beta,
            epsilon: beta / 2.0,
            eta: delta * gamma / 2.0,
        })
    }
}

/// Thresholds in force for one `(m, n, params)` and which of them say nothing at this size.
#[derive(Clone, Debug, Serialize)]
pub struct Thresholds {
    /// `2^{-(1-delta/2) n}`.
    pub significance_norm: f64,
    /// `2^{-alpha n}`.
    pub high_probability: f64,
    /// `2^{-gamma m}`.
    pub high_bias: f64,
    /// Bound on the fraction of high-bias tests, `2^{-2 gamma m}`.
    pub bias_fraction_bound: f64,
    /// Bound on the posterior mass of High, `2^{-delta n}`.
    pub high_mass_bound: f64,
    /// Bound on the starting progress, `2^{-delta n}`.
    pub start_bound: f64,
    /// Lower bound on surviving edge mass, `1/2 - 2^{-gamma m - 1} - 2^{-delta n}`.
    pub c_e_bound: f64,
    /// Number of steps `2^{beta m} - 1` covered by the progress argument.
    pub horizon: f64,
    /// Names of thresholds that carry no information at this size.
    pub vacuous: Vec<&'static str>,
}

impl Thresholds {
    pub fn new(m: usize, n: usize, p: &TruncationParams) -> Self {
        let (mf, nf) = (m as f64, n as f64);
        let c_e_bound = 0.5 - (-p.gamma * mf - 1.0).exp2() - (-p.delta * nf).exp2();
        let horizon = (p.beta * mf).exp2() - 1.0;
        let significance_norm = (-(1.0 - p.delta / 2.0) * nf).exp2();
        let high_probability = (-p.alpha * nf).exp2();
        let mut vacuous = Vec::new();
        if c_e_bound <= 0.0 {
            vacuous.push("c_e_bound");
        }
        if horizon < 1.0 {
            vacuous.push("horizon");
        }
        // a non-significant posterior has max P(x) < 2^{(delta-1) n / 2}
        if high_probability >= ((p.delta - 1.0) * nf / 2.0).exp2() {
            vacuous.push("high_probability");
        }
        Thresholds {
            significance_norm,
            high_probability,
            high_bias: (-p.gamma * mf).exp2(),
            bias_fraction_bound: (-2.0 * p.gamma * mf).exp2(),
            high_mass_bound: (-p.delta * nf).exp2(),
            start_bound: (-p.delta * nf).exp2(),
            c_e_bound,
            horizon,
            vacuous,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SimMode {
    MonteCarlo,
    Exhaustive,
}

/// Aggregates at one depth `t`. Fractions are over trials (Monte Carlo) or
/// exact probabilities (exhaustive).
#[derive(Clone, Debug, Serialize)]
pub struct StepStats {
    pub t: usize,
    /// Paths still present at depth `t`.
    pub alive: f64,
    pub truncated_high: f64,
    pub truncated_bias: f64,
    /// Paths that have reached a significant vertex at depth `<= t`.
    pub significant_by: f64,
    /// `E[rho(v)^{gamma m}]` toward the designated target, `rho(bottom) = 0`.
    pub phi: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TargetInfo {
    pub attempt: usize,
    pub depth: usize,
    pub rho_uniform: f64,
}

/// Output of [`simulate_paths`]; field order is the serialized order.
#[derive(Clone, Debug, Serialize)]
pub struct SimStats {
    pub rng: &'static str,
    pub mode: SimMode,
    pub m: usize,
    pub d: usize,
    pub n: usize,
    pub steps: usize,
    pub trials: usize,
    pub seed: u64,
    pub params: TruncationParams,
    pub thresholds: Thresholds,
    pub target: Option<TargetInfo>,
    pub per_step: Vec<StepStats>,
    pub visited_nonsignificant: u64,
    pub max_bias_margin: f64,
    pub bias_violations: u64,
    pub max_high_margin: f64,
    pub high_violations: u64,
    pub edges_followed: u64,
    pub min_c_e: Option<f64>,
    pub c_e_violations: u64,
    pub significant_reached: u64,
    pub max_start_margin: f64,
    pub start_violations: u64,
    pub max_mass_drift: f64,
}

impl SimStats {
    pub fn total_violations(&self) -> u64 {
        self.bias_violations + self.high_violations + self.start_violations + self.c_e_violations
    }
}

/// Exact per-vertex checks shared by both modes.
#[derive(Clone, Debug, Default)]
struct Checks {
    visited: u64,
    max_bias_margin: f64,
    bias_violations: u64,
    max_high_margin: f64,
    high_violations: u64,
    edges: u64,
    min_c_e: Option<f64>,
    c_e_violations: u64,
    significant: u64,
    max_start_margin: f64,
    start_violations: u64,
    max_drift: f64,
}

impl Checks {
    fn new() -> Self {
        Checks {
            max_bias_margin: f64::NEG_INFINITY,
            max_high_margin: f64::NEG_INFINITY,
            max_start_margin: f64::NEG_INFINITY,
            ..Default::default()
        }
    }

    fn merge(&mut self, o: &Checks) {
        self.visited += o.visited;
        self.max_bias_margin = self.max_bias_margin.max(o.max_bias_margin);
        self.bias_violations += o.bias_violations;
        self.max_high_margin = self.max_high_margin.max(o.max_high_margin);
        self.high_violations += o.high_violations;
        self.edges += o.edges;
        self.min_c_e = match (self.min_c_e, o.min_c_e) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        self.c_e_violations += o.c_e_violations;
        self.significant += o.significant;
        self.max_start_margin = self.max_start_margin.max(o.max_start_margin);
        self.start_violations += o.start_violations;
        self.max_drift = self.max_drift.max(o.max_drift);
    }

    /// Per-vertex inequality checks at a non-significant vertex; returns the High set mass.
    fn vertex(&mut self, p: &Posterior, biases: &[f64], th: &Thresholds) -> f64 {
        self.visited += 1;
        let high_tests = biases.iter().filter(|b| b.abs() >= th.high_bias).count();
        let frac = high_tests as f64 / biases.len() as f64;
        let margin = frac - th.bias_fraction_bound;
        self.max_bias_margin = self.max_bias_margin.max(margin);
        if margin > 0.0 {
            self.bias_violations += 1;
        }
        let high_mass: f64 = p.probs.iter().filter(|&&q| q > 0.0 && q >= th.high_probability).sum();
        let margin = high_mass - th.high_mass_bound;
        self.max_high_margin = self.max_high_margin.max(margin);
        if margin > 0.0 {
            self.high_violations += 1;
        }
        high_mass
    }

    fn significant(&mut self, p: &Posterior, th: &Thresholds) {
        self.significant += 1;
        let r = rho(&Posterior::uniform(p.n), p).expect("same dimension");
        let margin = r * (1.0 - REL_TOL) - th.start_bound;
        self.max_start_margin = self.max_start_margin.max(margin);
        if margin > 0.0 {
            self.start_violations += 1;
        }
    }

    fn edge(&mut self, c_e: f64, drift: f64, th: &Thresholds) {
        self.edges += 1;
        self.min_c_e = Some(self.min_c_e.map_or(c_e, |v| v.min(c_e)));
        if c_e < th.c_e_bound - 1e-12 {
            self.c_e_violations += 1;
        }
        self.max_drift = self.max_drift.max(drift);
    }
}

struct Context<'a> {
    basis: &'a MonomialBasis,
    params: TruncationParams,
    thresholds: Thresholds,
    steps: usize,
    target: Option<Posterior>,
    phi_exponent: f64,
}

impl Context<'_> {
    fn phi_term(&self, p: &Posterior) -> Option<f64> {
        self.target
            .as_ref()
            .map(|s| rho(p, s).expect("same dimension").powf(self.phi_exponent))
    }
}

fn alive_update(p: &Posterior, a: u64, b: i32, ctx: &Context) -> (Posterior, f64, f64) {
    let tp = TestPoint::from_index(a, ctx.basis.m());
    match edge_update(p, &tp, b, ctx.params.alpha, ctx.basis).expect("dimensions checked") {
        EdgeOutcome::Alive { posterior, c_e } => {
            let drift = (posterior.total() - 1.0).abs();
            (posterior, c_e, drift)
        }
        EdgeOutcome::Dead => unreachable!("the hidden input survives its own edge"),
    }
}

fn hidden_sign(x: u64, a: u64, basis: &MonomialBasis) -> i32 {
    if (x & basis.lift_index(a)).count_ones() & 1 == 1 {
        -1
    } else {
        1
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum PathEnd {
    Significant(usize),
    High(usize),
    Bias(usize),
    Leaf,
}

/// Runs one random truncated path; `visit` sees every vertex with its depth.
fn run_path(
    rng: &mut ChaCha8Rng,
    ctx: &Context,
    steps: usize,
    checks: &mut Checks,
    mut visit: impl FnMut(usize, &Posterior),
) -> (PathEnd, Posterior) {
    let n = ctx.basis.n();
    let m = ctx.basis.m();
    let x = rng.gen_range(0..1u64 << n);
    let mut p = Posterior::uniform(n);
    for t in 0..=steps {
        visit(t, &p);
        if is_significant(&p, ctx.params.delta) {
            checks.significant(&p, &ctx.thresholds);
            return (PathEnd::Significant(t), p);
        }
        let biases = bias_vector(&p, ctx.basis).expect("dimensions checked");
        checks.vertex(&p, &biases, &ctx.thresholds);
        if t == steps {
            break;
        }
        if p.prob(x) >= ctx.thresholds.high_probability {
            return (PathEnd::High(t), p);
        }
        let a = rng.gen_range(0..1u64 << m);
        if biases[a as usize].abs() >= ctx.thresholds.high_bias {
            return (PathEnd::Bias(t), p);
        }
        let b = hidden_sign(x, a, ctx.basis);
        let (next, c_e, drift) = alive_update(&p, a, b, ctx);
        checks.edge(c_e, drift, &ctx.thresholds);
        p = next;
    }
    (PathEnd::Leaf, p)
}

const TARGET_ATTEMPTS: usize = 256;
const TARGET_STEPS: usize = 1024;

/// The designated significant target: the first significant vertex reached by
/// the reference stream of `seed`, retrying with fresh inputs if needed. The
/// reference path has its own horizon, independent of the simulated depth.
fn find_target(seed: u64, ctx: &Context) -> Option<(TargetInfo, Posterior)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    let mut scratch = Checks::new();
    for attempt in 0..TARGET_ATTEMPTS {
        if let (PathEnd::Significant(depth), p) = run_path(&mut rng, ctx, TARGET_STEPS, &mut scratch, |_, _| {}) {
            let rho_uniform = rho(&Posterior::uniform(p.n()), &p).expect("same dimension");
            return Some((
                TargetInfo {
                    attempt,
                    depth,
                    rho_uniform,
                },
                p,
            ));
        }
    }
    None
}

/// Truncation constants with the curve bound taken from the best dual certificate at `delta'`.
pub fn params_for(m: usize, d: usize, delta_prime: f64, caps: &Caps) -> Result<TruncationParams> {
    let (hist, _) = crate::ampbound::histogram_for(m, d, caps)?;
    let n = MonomialBasis::new(m, d)?.n();
    let bound = crate::ampbound::best_kappa(&hist, m, n, delta_prime)?;
    TruncationParams::new(delta_prime, bound.tau_upper)
}

/// Simulates the truncation process for degree-`d` polynomials in `m` variables.
pub fn simulate_paths(
    m: usize,
    d: usize,
    params: TruncationParams,
    steps: usize,
    trials: usize,
    seed: u64,
    mode: SimMode,
) -> Result<SimStats> {
    simulate_paths_with(m, d, params, steps, trials, seed, mode, &Caps::default())
}

#[allow(clippy::too_many_arguments)]
pub fn simulate_paths_with(
    m: usize,
    d: usize,
    params: TruncationParams,
    steps: usize,
    trials: usize,
    seed: u64,
    mode: SimMode,
    caps: &Caps,
) -> Result<SimStats> {
    let basis = MonomialBasis::new(m, d)?;
    let n = basis.n();
    Caps::check("n", n, caps.simulate_n)?;
    if mode == SimMode::Exhaustive {
        Caps::check("m * T", m * steps, caps.exhaustive_mt)?;
    }
    let thresholds = Thresholds::new(m, n, &params);
    let mut ctx = Context {
        basis: &basis,
        params,
        thresholds,
        steps,
        target: None,
        phi_exponent: params.gamma * m as f64,
    };
    let target = find_target(seed, &ctx);
    let target_info = target.as_ref().map(|(info, _)| info.clone());
    ctx.target = target.map(|(_, p)| p);

    let (acc, checks) = match mode {
        SimMode::MonteCarlo => monte_carlo(&ctx, trials, seed),
        SimMode::Exhaustive => exhaustive(&ctx),
    };
    let scale = match mode {
        SimMode::MonteCarlo => 1.0 / trials.max(1) as f64,
        SimMode::Exhaustive => 1.0,
    };
    let mut significant_by = 0.0;
    let per_step = (0..=steps)
        .map(|t| {
            significant_by += acc.significant[t];
            StepStats {
                t,
                alive: acc.alive[t] * scale,
                truncated_high: acc.high[t] * scale,
                truncated_bias: acc.bias[t] * scale,
                significant_by: significant_by * scale,
                phi: ctx.target.as_ref().map(|_| acc.phi[t] * scale),
            }
        })
        .collect();

    Ok(SimStats {
        rng: RNG_ALGORITHM,
        mode,
        m,
        d,
        n,
        steps,
        trials: if mode == SimMode::MonteCarlo { trials } else { 0 },
        seed,
        params,
        thresholds: ctx.thresholds.clone(),
        target: target_info,
        per_step,
        visited_nonsignificant: checks.visited,
        max_bias_margin: checks.max_bias_margin,
        bias_violations: checks.bias_violations,
        max_high_margin: checks.max_high_margin,
        high_violations: checks.high_violations,
        edges_followed: checks.edges,
        min_c_e: checks.min_c_e,
        c_e_violations: checks.c_e_violations,
        significant_reached: checks.significant,
        max_start_margin: checks.max_start_margin,
        start_violations: checks.start_violations,
        max_mass_drift: checks.max_drift,
    })
}

#[derive(Clone, Debug)]
struct StepAcc {
    alive: Vec<f64>,
    high: Vec<f64>,
    bias: Vec<f64>,
    significant: Vec<f64>,
    phi: Vec<f64>,
}

impl StepAcc {
    fn new(steps: usize) -> Self {
        let z = vec![0.0; steps + 1];
        StepAcc {
            alive: z.clone(),
            high: z.clone(),
            bias: z.clone(),
            significant: z.clone(),
            phi: z,
        }
    }

    fn add(&mut self, o: &StepAcc) {
        for (a, b) in [
            (&mut self.alive, &o.alive),
            (&mut self.high, &o.high),
            (&mut self.bias, &o.bias),
            (&mut self.significant, &o.significant),
            (&mut self.phi, &o.phi),
        ] {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }
}

fn monte_carlo(ctx: &Context, trials: usize, seed: u64) -> (StepAcc, Checks) {
    let per_trial: Vec<(StepAcc, Checks)> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(trial as u64 + 1);
            let mut acc = StepAcc::new(ctx.steps);
            let mut checks = Checks::new();
            let (end, _) = run_path(&mut rng, ctx, ctx.steps, &mut checks, |t, p| {
                acc.alive[t] += 1.0;
                if let Some(term) = ctx.phi_term(p) {
                    acc.phi[t] += term;
                }
            });
            match end {
                PathEnd::Significant(t) => acc.significant[t] += 1.0,
                PathEnd::High(t) => acc.high[t] += 1.0,
                PathEnd::Bias(t) => acc.bias[t] += 1.0,
                PathEnd::Leaf => {}
            }
            (acc, checks)
        })
        .collect();
    // sequential reduction keeps floating-point sums independent of scheduling
    let mut acc = StepAcc::new(ctx.steps);
    let mut checks = Checks::new();
    for (a, c) in &per_trial {
        acc.add(a);
        checks.merge(c);
    }
    (acc, checks)
}

fn exhaustive(ctx: &Context) -> (StepAcc, Checks) {
    let mut acc = StepAcc::new(ctx.steps);
    let mut checks = Checks::new();
    let root = Posterior::uniform(ctx.basis.n());
    expand(ctx, &root, 1.0, 0, &mut acc, &mut checks);
    (acc, checks)
}

/// Visits the subtree below a vertex reached with probability `weight`.
fn expand(ctx: &Context, p: &Posterior, weight: f64, t: usize, acc: &mut StepAcc, checks: &mut Checks) {
    acc.alive[t] += weight;
    if let Some(term) = ctx.phi_term(p) {
        acc.phi[t] += weight * term;
    }
    if is_significant(p, ctx.params.delta) {
        checks.significant(p, &ctx.thresholds);
        acc.significant[t] += weight;
        return;
    }
    let biases = bias_vector(p, ctx.basis).expect("dimensions checked");
    let high_mass = checks.vertex(p, &biases, &ctx.thresholds);
    if t == ctx.steps {
        return;
    }
    acc.high[t] += weight * high_mass;
    let cont = weight * (1.0 - high_mass);
    let tests = biases.len();
    let per_test = cont / tests as f64;
    for (a, b) in biases.iter().enumerate() {
        if b.abs() >= ctx.thresholds.high_bias {
            acc.bias[t] += per_test;
            continue;
        }
        for outcome in [1, -1] {
            let tp = TestPoint::from_index(a as u64, ctx.basis.m());
            if let EdgeOutcome::Alive { posterior, c_e } =
                edge_update(p, &tp, outcome, ctx.params.alpha, ctx.basis).expect("dimensions checked")
            {
                checks.edge(c_e, (posterior.total() - 1.0).abs(), &ctx.thresholds);
                // c_e is relative to P; the child's absolute weight excludes the High mass already split off
                let child = weight / tests as f64 * c_e;
                expand(ctx, &posterior, child, t + 1, acc, checks);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::basis;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * b.abs().max(1.0)
    }

    #[test]
    fn uniform_and_point_norms() {
        for n in 1..10 {
            assert!(close(enorm(&Posterior::uniform(n)), (-(n as f64)).exp2()));
            assert!(close(enorm(&Posterior::point(3 % (1 << n), n)), (-(n as f64) / 2.0).exp2()));
        }
        assert_eq!(Posterior::uniform(1).probs(), &[0.5, 0.5]);
        let half: Vec<u64> = (0..8).collect();
        let p = Posterior::uniform_over(&half, 4).unwrap();
        assert!(close(enorm(&p), 2f64.sqrt() / 16.0));
    }

    #[test]
    fn significance_examples() {
        for n in 1..8 {
            assert!(is_significant(&Posterior::point(0, n), 0.1));
            assert!(!is_significant(&Posterior::uniform(n), 0.9));
        }
        // 2^{(1 - 0.5) 4} = 4 points sits exactly on the threshold
        let p = Posterior::uniform_over(&[1, 2, 3, 4], 4).unwrap();
        assert!(is_significant(&p, 0.5));
        let p = Posterior::uniform_over(&[1, 2, 3, 4, 5], 4).unwrap();
        assert!(!is_significant(&p, 0.5));
    }

    #[test]
    fn high_set_examples() {
        assert!(high_set(&Posterior::uniform(4), 0.9).is_empty());
        assert_eq!(high_set(&Posterior::point(5, 4), 0.5), vec![5]);
        let mut probs = vec![0.5 / 16.0; 16];
        probs[7] += 0.5;
        let p = Posterior::from_probs(4, probs).unwrap();
        // 2^{-alpha n} = 2^{-2} <= 1/2
        assert_eq!(high_set(&p, 0.5), vec![7]);
    }

    #[test]
    fn bias_examples() {
        let b = basis(3, 2).unwrap();
        let u = Posterior::uniform(b.n());
        assert_eq!(bias(&u, &TestPoint::zero(3), &b).unwrap(), 1.0);
        for a in 1..8 {
            assert_eq!(bias(&u, &TestPoint::from_index(a, 3), &b).unwrap(), 0.0);
        }
        let pt = Posterior::point(0b101101, b.n());
        for a in 0..8 {
            let tp = TestPoint::from_index(a, 3);
            let x = crate::poly::PolyVec::from_index(b.clone(), 0b101101);
            let mv = crate::poly::mvalue(&tp, &x).unwrap() as f64;
            assert_eq!(bias(&pt, &tp, &b).unwrap(), mv);
        }
    }

    #[test]
    fn bias_routes_agree() {
        let b = basis(5, 2).unwrap();
        let mut probs: Vec<f64> = (0..1u64 << b.n()).map(|x| ((x * 2654435761) % 97) as f64).collect();
        let s: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= s);
        let p = Posterior::from_probs(b.n(), probs).unwrap();
        let fast = bias_vector(&p, &b).unwrap();
        let lifts: Vec<u64> = (0..32).map(|a| b.lift_index(a)).collect();
        let slow = bias_vector_direct(&p, &lifts);
        for (x, y) in fast.iter().zip(&slow) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn edge_update_examples() {
        let b = basis(2, 1).unwrap();
        let u = Posterior::uniform(2);
        let a = TestPoint::from_index(0b01, 2);
        match edge_update(&u, &a, 1, 0.9, &b).unwrap() {
            EdgeOutcome::Alive { posterior, c_e } => {
                assert_eq!(c_e, 0.5);
                // x with bit 0 clear: indices 0 and 2
                assert_eq!(posterior.probs(), &[0.5, 0.0, 0.5, 0.0]);
            }
            EdgeOutcome::Dead => panic!("edge should survive"),
        }
        // a point mass is always High for alpha >= 0
        let pt = Posterior::point(3, 2);
        let b_val = if (3 & b.lift_index(a.index())).count_ones() % 2 == 1 { -1 } else { 1 };
        assert_eq!(edge_update(&pt, &a, b_val, 1.0, &b).unwrap(), EdgeOutcome::Dead);
        // already consistent and below the High threshold: unchanged
        let b4 = basis(4, 1).unwrap();
        let a4 = TestPoint::from_index(0b0011, 4);
        let lift = b4.lift_index(a4.index());
        let pts: Vec<u64> = (0..16u64).filter(|x| (x & lift).count_ones() % 2 == 0).collect();
        let p = Posterior::uniform_over(&pts, 4).unwrap();
        match edge_update(&p, &a4, 1, 0.5, &b4).unwrap() {
            EdgeOutcome::Alive { posterior, c_e } => {
                assert_eq!(c_e, 1.0);
                assert_eq!(posterior, p);
            }
            EdgeOutcome::Dead => panic!("consistent edge"),
        }
        assert_eq!(edge_update(&u, &TestPoint::zero(2), -1, 0.9, &b).unwrap(), EdgeOutcome::Dead);
        assert!(edge_update(&u, &a, 0, 1.0, &b).is_err());
    }

    #[test]
    fn edge_update_restricts_support() {
        let b = basis(3, 2).unwrap();
        let mut probs: Vec<f64> = (0..64u64).map(|x| (x % 7 + 1) as f64).collect();
        let s: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= s);
        let p = Posterior::from_probs(6, probs).unwrap();
        for a in 0..8u64 {
            for out in [1, -1] {
                if let EdgeOutcome::Alive { posterior, c_e } =
                    edge_update(&p, &TestPoint::from_index(a, 3), out, 0.9, &b).unwrap()
                {
                    for x in 0..64u64 {
                        let q = posterior.prob(x);
                        if q > 0.0 {
                            assert!((q * c_e - p.prob(x)).abs() < 1e-15);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn rho_examples() {
        let p = Posterior::uniform_over(&[1, 4, 9], 4).unwrap();
        assert!(close(rho(&p, &p).unwrap(), 1.0));
        let u = Posterior::uniform(4);
        let expected = (-8f64).exp2() / enorm(&p).powi(2);
        assert!(close(rho(&u, &p).unwrap(), expected));
        assert!(close(rho(&u, &Posterior::point(3, 4)).unwrap(), 1.0 / 16.0));
    }

    #[test]
    fn params_derivation() {
        let p = TruncationParams::new(0.6, -0.2).unwrap();
        assert!(close(p.delta, 0.1));
        assert!(close(p.alpha, 0.8));
        assert!(close(p.gamma, 0.1));
        assert!(close(p.beta, 0.0125));
        assert!(close(p.epsilon, 0.00625));
        assert!(close(p.eta, 0.005));
        assert!(TruncationParams::new(1.0, -0.2).is_err());
        assert!(TruncationParams::new(0.5, 0.0).is_err());
    }

    #[test]
    fn zero_steps_never_reaches_significance() {
        let params = TruncationParams::new(0.6, -0.2).unwrap();
        let s = simulate_paths(4, 1, params, 0, 50, 3, SimMode::MonteCarlo).unwrap();
        assert_eq!(s.per_step.len(), 1);
        assert_eq!(s.per_step[0].significant_by, 0.0);
        let target = s.target.as_ref().expect("reference path finds a target");
        let phi0 = target.rho_uniform.powf(params.gamma * 4.0);
        assert!(close(s.per_step[0].phi.unwrap(), phi0));
    }

    #[test]
    fn simulation_is_deterministic() {
        let params = TruncationParams::new(0.6, -0.125).unwrap();
        let a = simulate_paths(3, 2, params, 8, 64, 11, SimMode::MonteCarlo).unwrap();
        let b = simulate_paths(3, 2, params, 8, 64, 11, SimMode::MonteCarlo).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn exhaustive_mass_is_conserved() {
        let params = TruncationParams::new(0.6, -0.2).unwrap();
        let s = simulate_paths(4, 1, params, 3, 0, 5, SimMode::Exhaustive).unwrap();
        let last = s.per_step.last().unwrap();
        let ended: f64 = s.per_step.iter().map(|st| st.truncated_high + st.truncated_bias).sum();
        // every path either stays alive to the last depth, stops at a significant vertex, or is truncated
        let still_running = last.alive - (last.significant_by - s.per_step[s.steps - 1].significant_by);
        assert!((still_running + last.significant_by + ended - 1.0).abs() < 1e-12);
        assert_eq!(s.total_violations(), 0);
    }
}
