//! Acceptance gate: runs every criterion at its stated tolerance and runtime
//! budget, prints one PASS/FAIL line each, and exits nonzero on any failure.

use std::time::{Duration, Instant};

use num_bigint::BigUint;
use num_traits::One;

use polylearn::ampbound::{
    best_kappa, closed_form_quad, dual_bound, histogram_for, matrix_norm, paper_schedule_quad, tau_lower,
    verify_certificate,
};
use polylearn::gram::{brute_histogram, brute_histogram_with};
use polylearn::learners::{coupon_expectation, run_trials, Algo, TrialConfig};
use polylearn::poly::{binomial, coefficient_dim};
use polylearn::posterior::{params_for, simulate_paths, SimMode};
use polylearn::rmweights::{class_count, class_count_rec, dickson_k, enumerate_type, exact_histogram_d2, orbit_type, QuadraticForm};
use polylearn::Caps;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn oracle_equality() -> Outcome {
    for m in 2..=5 {
        let exact = exact_histogram_d2(m).map_err(|e| e.to_string())?;
        let brute = brute_histogram(m, 2).map_err(|e| e.to_string())?;
        ensure(exact == brute, || format!("m={m}: {} vs {}", exact.to_json(), brute.to_json()))?;
    }
    Ok("m = 2..5 identical".into())
}

fn formula_recurrence() -> Outcome {
    let mut pairs = 0;
    for m in 0..=64 {
        for i in 0..=m / 2 {
            let f = class_count(i, m).map_err(|e| e.to_string())?;
            let r = class_count_rec(i, m).map_err(|e| e.to_string())?;
            ensure(f == r, || format!("c_{i}({m}): {f} vs {r}"))?;
            pairs += 1;
        }
    }
    for m in 0..=20 {
        let total: BigUint = (0..=m / 2).map(|i| class_count(i, m).unwrap()).sum();
        ensure(total == BigUint::one() << binomial(m, 2) as usize, || format!("sum at m={m}"))?;
    }
    Ok(format!("{pairs} (i, m) pairs agree; sums exact for m <= 20"))
}

fn orbit_exhaustion() -> Outcome {
    let mut forms = 0;
    for m in 2..=4 {
        for idx in 0..1u64 << binomial(m, 2) {
            let q = QuadraticForm::from_index(m, idx);
            let seen = enumerate_type(&q).map_err(|e| e.to_string())?;
            let want = orbit_type(dickson_k(&q), m).map_err(|e| e.to_string())?.as_map();
            ensure(seen == want, || format!("m={m} form #{idx}"))?;
            forms += 1;
        }
    }
    Ok(format!("{forms} forms"))
}

fn certificates() -> Outcome {
    let mut cases: Vec<(usize, usize, i64)> = Vec::new();
    for m in [2, 3] {
        let h = brute_histogram(m, 2).map_err(|e| e.to_string())?;
        cases.extend(h.counts.keys().map(|&v| (m, 2, v)));
    }
    cases.extend((2..=6).map(|m| (m, 1, 0)));
    let mut worst = f64::INFINITY;
    for &(m, d, kappa) in &cases {
        let r = verify_certificate(m, d, kappa, 0.0).map_err(|e| e.to_string())?;
        worst = worst.min(r.worst_slack);
        ensure(
            r.worst_slack >= -1e-12 && r.laplacian_ok && r.gram_symmetric && r.w_kappa_agree,
            || format!("m={m} d={d} kappa={kappa}: {r:?}"),
        )?;
    }
    Ok(format!("{} certificates, worst slack {worst}", cases.len()))
}

fn parity_exactness() -> Outcome {
    for m in [2, 5, 8] {
        let (h, _) = histogram_for(m, 1, &Caps::default()).map_err(|e| e.to_string())?;
        let norm = matrix_norm(m, 1).map_err(|e| e.to_string())?;
        for delta in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let b = best_kappa(&h, m, m, delta).map_err(|e| e.to_string())?;
            let want = (delta - 1.0) / 2.0;
            ensure((b.tau_upper - want).abs() <= 1e-9, || format!("m={m} delta={delta}: {}", b.tau_upper))?;
            // ||M P|| <= ||M|| ||P|| with ||P|| at the admissible maximum
            let from_norm = (norm.log2() - (1.0 - delta / 2.0) * m as f64) / m as f64;
            ensure((b.tau_upper - from_norm).abs() <= 1e-9, || {
                format!("m={m} delta={delta}: norm route {from_norm}")
            })?;
        }
    }
    Ok("tau_upper = (delta - 1)/2 for m in {2, 5, 8}".into())
}

fn closed_form_dominance() -> Outcome {
    let mut worst_gap = f64::NEG_INFINITY;
    for m in [8, 16, 24, 32, 40] {
        let h = exact_histogram_d2(m).map_err(|e| e.to_string())?;
        let n = coefficient_dim(m, 2) as usize;
        for i in 0..10 {
            let delta = i as f64 / 10.0;
            let (_, kappa) = paper_schedule_quad(delta, m);
            let b = dual_bound(&h, m, n, delta, kappa as i64).map_err(|e| e.to_string())?;
            let gap = b.tau_upper - closed_form_quad(delta, m);
            worst_gap = worst_gap.max(gap);
            ensure(gap <= 1e-9, || format!("m={m} delta={delta}: {} > {}", b.tau_upper, closed_form_quad(delta, m)))?;
        }
    }
    Ok(format!("largest tau_upper - closed form = {worst_gap:.6}"))
}

fn sandwich() -> Outcome {
    let mut cases: Vec<(usize, usize)> = [2, 4, 8, 12, 16, 20].iter().map(|&m| (m, 1)).collect();
    cases.extend([(2, 2), (3, 2), (4, 2), (5, 2), (3, 3), (4, 3)]);
    let caps = Caps::default();
    let mut count = 0;
    let mut tightest = f64::INFINITY;
    for (m, d) in cases {
        let n = coefficient_dim(m, d) as usize;
        let (h, _) = histogram_for(m, d, &caps).map_err(|e| e.to_string())?;
        for delta in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let up = best_kappa(&h, m, n, delta).map_err(|e| e.to_string())?.tau_upper;
            let low = tau_lower(m, d, delta, 3, 17).map_err(|e| e.to_string())?;
            ensure(low.tau_lower <= up + 1e-9, || {
                format!("m={m} d={d} delta={delta}: lower {} > upper {up}", low.tau_lower)
            })?;
            tightest = tightest.min(up - low.tau_lower);
            if d == 1 && delta == 0.0 {
                ensure((low.tau_lower + 0.5).abs() <= 1e-6 && (up + 0.5).abs() <= 1e-6, || {
                    format!("parity m={m}: [{}, {up}]", low.tau_lower)
                })?;
            }
            count += 1;
        }
    }
    Ok(format!("{count} (m, d, delta) points, smallest gap {tightest:.3e}"))
}

fn truncation_inequalities() -> Outcome {
    let caps = Caps::default();
    let mut lines = Vec::new();
    for (m, d, steps) in [(4, 1, 16), (3, 2, 64)] {
        let params = params_for(m, d, 0.6, &caps).map_err(|e| e.to_string())?;
        let s = simulate_paths(m, d, params, steps, 2000, 7, SimMode::MonteCarlo).map_err(|e| e.to_string())?;
        ensure(s.bias_violations == 0, || format!("m={m} d={d}: bias margin {}", s.max_bias_margin))?;
        ensure(s.high_violations == 0, || format!("m={m} d={d}: High margin {}", s.max_high_margin))?;
        ensure(s.start_violations == 0, || format!("m={m} d={d}: start margin {}", s.max_start_margin))?;
        ensure(s.target.is_some(), || format!("m={m} d={d}: no significant target"))?;
        ensure(s.max_mass_drift < 1e-9, || format!("m={m} d={d}: drift {}", s.max_mass_drift))?;
        lines.push(format!(
            "m={m} d={d}: {} vertices, {} significant, vacuous {:?}",
            s.visited_nonsignificant, s.significant_reached, s.thresholds.vacuous
        ));
    }
    Ok(lines.join("; "))
}

fn learners() -> Outcome {
    let g = run_trials(&TrialConfig::new(Algo::Gauss, 6, 2, 100, 1)).map_err(|e| e.to_string())?;
    ensure(g.n == 21 && g.budget == 210, || format!("gauss setup n={} budget={}", g.n, g.budget))?;
    ensure(g.success_rate >= 0.99, || format!("gauss success {}", g.success_rate))?;
    ensure(g.space_bits.max <= 147, || format!("gauss space {}", g.space_bits.max))?;
    let mut cfg = TrialConfig::new(Algo::Basis, 5, 2, 200, 1);
    cfg.budget = Some(20 << 5);
    let b = run_trials(&cfg).map_err(|e| e.to_string())?;
    let expected = coupon_expectation(5, 15);
    let ratio = b.samples.mean / expected;
    ensure((0.5..=2.0).contains(&ratio), || format!("basis mean {} vs {expected}", b.samples.mean))?;
    ensure(b.space_bits.max <= 30, || format!("basis space {}", b.space_bits.max))?;
    Ok(format!(
        "gauss {}/100, space {}; basis mean {:.1} vs {expected:.1}, space {}",
        (g.success_rate * 100.0).round(),
        g.space_bits.max,
        b.samples.mean,
        b.space_bits.max
    ))
}

fn cubic_coverage() -> Outcome {
    let mut lines = Vec::new();
    for m in [4, 5] {
        let n = coefficient_dim(m, 3) as usize;
        let h = brute_histogram_with(m, 3, &Caps::default()).map_err(|e| e.to_string())?;
        ensure(h.total() == BigUint::one() << n, || format!("m={m}: total {}", h.total()))?;
        h.check_invariants(n).map_err(|e| format!("m={m}: {e}"))?;
        let b = best_kappa(&h, m, n, 0.25).map_err(|e| e.to_string())?;
        ensure(b.tau_upper.is_finite() && b.tau_upper < 0.0, || format!("m={m}: tau_upper {}", b.tau_upper))?;
        lines.push(format!("m={m} n={n} tau_upper {:.5}", b.tau_upper));
    }
    Ok(lines.join("; "))
}

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Option<Duration>,
    run: fn() -> Outcome,
}

fn main() {
    let secs = Duration::from_secs;
    let criteria = [
        Criterion { id: 1, name: "exact-count oracle equality", budget: Some(secs(120)), run: oracle_equality },
        Criterion { id: 2, name: "formula/recurrence agreement", budget: Some(secs(10)), run: formula_recurrence },
        Criterion { id: 3, name: "orbit exhaustion", budget: Some(secs(60)), run: orbit_exhaustion },
        Criterion { id: 4, name: "certificate feasibility", budget: None, run: certificates },
        Criterion { id: 5, name: "parity exactness", budget: None, run: parity_exactness },
        Criterion { id: 6, name: "closed-form dominance", budget: None, run: closed_form_dominance },
        Criterion { id: 7, name: "sandwich soundness", budget: None, run: sandwich },
        Criterion { id: 8, name: "truncation inequality certification", budget: Some(secs(300)), run: truncation_inequalities },
        Criterion { id: 9, name: "upper-bound algorithms", budget: Some(secs(120)), run: learners },
        Criterion { id: 10, name: "cubic brute coverage", budget: Some(secs(900)), run: cubic_coverage },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let outcome = match (outcome, c.budget) {
            (Ok(_), Some(b)) if elapsed > b => Err(format!("over the {}s budget", b.as_secs())),
            (o, _) => o,
        };
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d.as_str()),
            Err(d) => ("FAIL", d.as_str()),
        };
        if outcome.is_err() {
            failed += 1;
        }
        println!("{tag} {:>2} {:<38} {:>8.2}s  {detail}", c.id, c.name, elapsed.as_secs_f64());
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
