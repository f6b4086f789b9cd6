//! Named self-check suites. Each runs with fixed parameters and returns one
//! line per check; the command-line `verify` exits nonzero if any fails.

use num_bigint::BigUint;
use num_traits::One;
use serde::Serialize;

use crate::ampbound::{verify_certificate_with, w_kappa};
use crate::caps::Caps;
use crate::error::{Error, Result};
use crate::gram::{brute_histogram_with, parity_histogram};
use crate::learners::{coupon_expectation, run_trials, Algo, TrialConfig};
use crate::poly::binomial;
use crate::posterior::{params_for, simulate_paths_with, SimMode};
use crate::rmweights::{class_count, class_count_rec, dickson_k, enumerate_type, exact_histogram_d2, orbit_type, QuadraticForm};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Counts,
    Certificates,
    Orbits,
    Learners,
    Posterior,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::Counts,
        Suite::Certificates,
        Suite::Orbits,
        Suite::Learners,
        Suite::Posterior,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Counts => "counts",
            Suite::Certificates => "certificates",
            Suite::Orbits => "orbits",
            Suite::Learners => "learners",
            Suite::Posterior => "posterior",
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown suite {s:?}")))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub pass: bool,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    fn new(suite: Suite, checks: Vec<Check>) -> Self {
        SuiteReport {
            suite,
            pass: checks.iter().all(|c| c.pass),
            checks,
        }
    }
}

fn check(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Check {
    Check {
        name: name.into(),
        pass,
        detail: detail.into(),
    }
}

pub fn run_suite(suite: Suite, seed: u64, caps: &Caps) -> Result<SuiteReport> {
    let checks = match suite {
        Suite::Counts => counts(caps)?,
        Suite::Certificates => certificates(caps)?,
        Suite::Orbits => orbits()?,
        Suite::Learners => learners(seed)?,
        Suite::Posterior => posterior(seed, caps)?,
    };
    Ok(SuiteReport::new(suite, checks))
}

fn counts(caps: &Caps) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for m in 2..=5 {
        let exact = exact_histogram_d2(m)?;
        let brute = brute_histogram_with(m, 2, caps)?;
        out.push(check(
            format!("quadratic histogram m={m}"),
            exact == brute,
            format!("{} distinct values", exact.counts.len()),
        ));
    }
    for m in 1..=8 {
        let brute = brute_histogram_with(m, 1, caps)?;
        out.push(check(format!("parity histogram m={m}"), brute == parity_histogram(m)?, ""));
    }
    let mut rec_ok = true;
    for m in 0..=64 {
        for i in 0..=m / 2 {
            rec_ok &= class_count(i, m)? == class_count_rec(i, m)?;
        }
    }
    out.push(check("class counts: product formula = recurrence, m <= 64", rec_ok, ""));
    let mut sum_ok = true;
    for m in 0..=20 {
        let total: BigUint = (0..=m / 2).map(|i| class_count(i, m)).sum::<Result<BigUint>>()?;
        sum_ok &= total == BigUint::one() << binomial(m, 2) as usize;
    }
    out.push(check("class counts sum to 2^C(m,2), m <= 20", sum_ok, ""));
    Ok(out)
}

fn certificates(caps: &Caps) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let mut cases: Vec<(usize, usize, i64)> = Vec::new();
    for m in 2..=4 {
        let hist = exact_histogram_d2(m)?;
        cases.extend(hist.counts.keys().map(|&v| (m, 2, v)));
    }
    cases.extend((2..=10).map(|m| (m, 1, 0)));
    for (m, d, kappa) in cases {
        let r = verify_certificate_with(m, d, kappa, 0.0, caps)?;
        out.push(check(
            format!("certificate m={m} d={d} kappa={kappa}"),
            r.pass,
            format!(
                "worst slack {}, {} clipped pairs, W = {}",
                r.worst_slack, r.clip_pairs, r.w_kappa_matrix
            ),
        ));
    }
    let hist = parity_histogram(6)?;
    out.push(check("parity W_0 = 2^m", w_kappa(&hist, 0) == BigUint::from(64u32), ""));
    Ok(out)
}

fn orbits() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for m in 2..=4 {
        let forms = 1u64 << binomial(m, 2);
        let mut bad = 0;
        for idx in 0..forms {
            let q = QuadraticForm::from_index(m, idx);
            if enumerate_type(&q)? != orbit_type(dickson_k(&q), m)?.as_map() {
                bad += 1;
            }
        }
        out.push(check(
            format!("orbit types m={m}"),
            bad == 0,
            format!("{forms} forms, {bad} mismatches"),
        ));
    }
    Ok(out)
}

fn learners(seed: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let r = run_trials(&TrialConfig::new(Algo::Gauss, 6, 2, 100, seed))?;
    let cap = (r.n * 7) as u64;
    out.push(check(
        "gauss d=2 m=6: >= 99/100 within 10n samples",
        r.success_rate >= 0.99,
        format!("success rate {}", r.success_rate),
    ));
    out.push(check(
        "gauss d=2 m=6: space <= n (m+1)",
        r.space_bits.max <= cap,
        format!("{} <= {cap}", r.space_bits.max),
    ));
    let r = run_trials(&TrialConfig::new(Algo::Gauss, 3, 1, 100, seed))?;
    out.push(check("gauss parity m=3", r.success_rate == 1.0 && r.samples.p50 >= 3, ""));
    let r = run_trials(&TrialConfig::new(Algo::Basis, 5, 2, 200, seed))?;
    let expected = coupon_expectation(5, r.n);
    let ratio = r.samples.mean / expected;
    out.push(check(
        "basis d=2 m=5: mean samples within 2x of coupon expectation",
        (0.5..=2.0).contains(&ratio) && r.success_rate == 1.0,
        format!("mean {} vs {expected}", r.samples.mean),
    ));
    out.push(check(
        "basis d=2 m=5: space <= 2n",
        r.space_bits.max <= 2 * r.n as u64,
        format!("{}", r.space_bits.max),
    ));
    Ok(out)
}

fn posterior(seed: u64, caps: &Caps) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for (m, d, steps, trials) in [(4, 1, 16, 2000), (3, 2, 64, 2000)] {
        let params = params_for(m, d, 0.6, caps)?;
        let s = simulate_paths_with(m, d, params, steps, trials, seed, SimMode::MonteCarlo, caps)?;
        let label = format!("m={m} d={d}");
        out.push(check(
            format!("{label}: bias fraction bound at every non-significant vertex"),
            s.bias_violations == 0,
            format!("{} vertices, max margin {:e}", s.visited_nonsignificant, s.max_bias_margin),
        ));
        out.push(check(
            format!("{label}: High mass bound at every non-significant vertex"),
            s.high_violations == 0,
            format!("max margin {:e}", s.max_high_margin),
        ));
        out.push(check(
            format!("{label}: starting progress bound at significant vertices"),
            s.start_violations == 0 && s.target.is_some(),
            format!("{} significant, max margin {:e}", s.significant_reached, s.max_start_margin),
        ));
        out.push(check(
            format!("{label}: mass drift below 1e-9"),
            s.max_mass_drift < 1e-9,
            format!("{:e}", s.max_mass_drift),
        ));
        if d == 2 {
            let reached = s.per_step.last().map_or(0.0, |st| st.significant_by);
            out.push(check(format!("{label}: some paths become significant"), reached > 0.0, format!("{reached}")));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("nope".parse::<Suite>().is_err());
    }

    #[test]
    fn orbits_suite_passes() {
        let r = run_suite(Suite::Orbits, 0, &Caps::default()).unwrap();
        assert!(r.pass, "{r:?}");
    }
}
