//! `polylearn`: batch front end for the polylearn library.

mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use polylearn::ampbound::{best_kappa, dual_bound, format_kappa, histogram_for, paper_schedule_quad, TauBound};
use polylearn::gram::{brute_histogram_with, RowHistogram};
use polylearn::learners::{run_trials, Algo, StreamMode, TrialConfig};
use polylearn::poly::MonomialBasis;
use polylearn::posterior::{params_for, simulate_paths_with, SimMode, TruncationParams};
use polylearn::rmweights::{dickson_k, enumerate_type, exact_histogram_d2, orbit_type, sb_crosscheck, QuadraticForm};
use polylearn::verify::{run_suite, Suite, SuiteReport};
use polylearn::Caps;

use output::{Emitter, Format, Table};

#[derive(Parser, Debug)]
#[command(name = "polylearn", version, about = "Weight distributions, curve bounds and learners for F2 polynomials")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Serialize)]
struct Common {
    /// Output format.
    #[arg(long, value_enum, default_value = "json", global = true)]
    format: Format,
    /// Write to this file instead of stdout.
    #[arg(long, global = true)]
    #[serde(skip)]
    output: Option<PathBuf>,
    /// Master seed for every random choice.
    #[arg(long, default_value_t = 7, global = true)]
    seed: u64,
    /// Worker threads; defaults to one per core.
    #[arg(long, env = "POLYLEARN_THREADS", global = true)]
    threads: Option<usize>,
    /// Override the size cap on n for this command.
    #[arg(long, global = true)]
    max_n: Option<usize>,
    /// Allow --max-n above the default cap.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Row histogram of the Gram matrix.
    Weights(WeightsArgs),
    /// Dual-certificate upper bound on the amplification curve.
    Bound(BoundArgs),
    /// Run a named self-check suite.
    Verify(VerifyArgs),
    /// Run a learner over many hidden inputs.
    Learn(LearnArgs),
    /// Simulate the truncated-posterior process.
    Simulate(SimulateArgs),
    /// Dickson index and value distribution of a quadratic form.
    Dickson(DicksonArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum WeightsMode {
    Exact,
    Brute,
    Both,
}

#[derive(Args, Debug, Serialize)]
struct WeightsArgs {
    #[arg(long)]
    m: usize,
    #[arg(long)]
    d: usize,
    #[arg(long, value_enum, default_value = "both")]
    mode: WeightsMode,
    /// Also compare against the textbook weight formula (report only).
    #[arg(long)]
    sb_crosscheck: bool,
}

#[derive(Args, Debug, Serialize)]
struct BoundArgs {
    #[arg(long)]
    m: usize,
    #[arg(long)]
    d: usize,
    /// One or more values in [0, 1], comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    delta: Vec<f64>,
    /// `auto` (best histogram value), `paper` (quadratic schedule) or an integer.
    #[arg(long, default_value = "auto")]
    kappa: String,
}

#[derive(Args, Debug, Serialize)]
struct VerifyArgs {
    /// counts, certificates, orbits, learners, posterior or all.
    suite: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum StreamArg {
    Uniform,
    StandardBasis,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum AlgoArg {
    Gauss,
    Basis,
}

#[derive(Args, Debug, Serialize)]
struct LearnArgs {
    #[arg(long, value_enum)]
    algo: AlgoArg,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Sample budget per trial; defaults to 10n (gauss) or 20 * 2^m (basis).
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long, value_enum, default_value = "uniform")]
    stream: StreamArg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum SimModeArg {
    Montecarlo,
    Exhaustive,
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    #[arg(long)]
    m: usize,
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 0.6)]
    delta_prime: f64,
    #[arg(long, default_value_t = 16)]
    steps: usize,
    #[arg(long, default_value_t = 2000)]
    trials: usize,
    #[arg(long, value_enum, default_value = "montecarlo")]
    mode: SimModeArg,
    /// Curve bound at delta'; defaults to the best dual certificate.
    #[arg(long, allow_hyphen_values = true)]
    tau_used: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
struct DicksonArgs {
    #[arg(long)]
    m: usize,
    /// Upper-triangle coefficients in pair order (1,2), (1,3), ..., (m-1,m) as hex,
    /// bit 0 first: 16 digits per 64-bit word, least significant word first.
    #[arg(long)]
    q: String,
}

#[derive(Serialize)]
struct Config<'a, A: Serialize> {
    #[serde(flatten)]
    common: &'a Common,
    #[serde(flatten)]
    args: &'a A,
    caps: Caps,
}

/// Which caps a command's `--max-n` adjusts.
#[derive(Clone, Copy)]
enum CapField {
    Brute,
    Dense,
    Simulate,
}

fn resolve_caps(common: &Common, fields: &[CapField]) -> Result<Caps> {
    let mut caps = Caps::default();
    let Some(max_n) = common.max_n else {
        return Ok(caps);
    };
    for &field in fields {
        let (slot, name) = match field {
            CapField::Brute => (&mut caps.brute_n, "brute_n"),
            CapField::Dense => (&mut caps.dense_n, "dense_n"),
            CapField::Simulate => (&mut caps.simulate_n, "simulate_n"),
        };
        if max_n > *slot {
            if !common.force {
                bail!("--max-n {max_n} exceeds the default {name} cap of {}; pass --force to allow it", *slot);
            }
            let bytes = Caps::memory_estimate(name, max_n);
            eprintln!(
                "warning: raising {name} to {max_n}; estimated peak memory {:.1} MiB",
                bytes as f64 / (1u64 << 20) as f64
            );
        }
        *slot = max_n;
    }
    Ok(caps)
}

struct Ctx {
    emitter: Emitter,
    start: Instant,
}

impl Ctx {
    fn emit<A: Serialize, R: Serialize>(
        &self,
        command: &str,
        common: &Common,
        args: &A,
        caps: Caps,
        result: &R,
        table: Table,
    ) -> Result<()> {
        let config = Config { common, args, caps };
        self.emitter.emit(
            command,
            &config,
            common.seed,
            result,
            table,
            self.start.elapsed().as_secs_f64(),
        )
    }
}

#[derive(Serialize)]
struct DiffRow {
    value: i64,
    exact: String,
    brute: String,
}

#[derive(Serialize)]
struct WeightsResult {
    m: usize,
    d: usize,
    n: usize,
    exact: Option<RowHistogram>,
    brute: Option<RowHistogram>,
    diff: Option<Vec<DiffRow>>,
    sb_crosscheck: Option<Vec<polylearn::rmweights::SbRow>>,
}

fn cmd_weights(ctx: &Ctx, common: &Common, args: &WeightsArgs) -> Result<bool> {
    let caps = resolve_caps(common, &[CapField::Brute])?;
    let n = MonomialBasis::new(args.m, args.d)?.n();
    let want_exact = args.mode != WeightsMode::Brute;
    let want_brute = args.mode != WeightsMode::Exact;
    if (want_exact || args.sb_crosscheck) && args.d != 2 {
        bail!("the closed form covers d = 2 only; use --mode brute");
    }
    let exact = want_exact.then(|| exact_histogram_d2(args.m)).transpose()?;
    let brute = want_brute.then(|| brute_histogram_with(args.m, args.d, &caps)).transpose()?;
    let mut values: Vec<i64> = exact
        .iter()
        .chain(brute.iter())
        .flat_map(|h| h.counts.keys().copied())
        .collect();
    values.sort_unstable_by(|a, b| b.cmp(a));
    values.dedup();
    let cell = |h: &Option<RowHistogram>, v: i64| h.as_ref().map(|h| h.count(v).to_string()).unwrap_or_default();
    let diff = (args.mode == WeightsMode::Both).then(|| {
        values
            .iter()
            .filter(|&&v| exact.as_ref().map(|h| h.count(v)) != brute.as_ref().map(|h| h.count(v)))
            .map(|&v| DiffRow {
                value: v,
                exact: cell(&exact, v),
                brute: cell(&brute, v),
            })
            .collect::<Vec<_>>()
    });
    let ok = diff.as_ref().is_none_or(|d| d.is_empty());
    let sb = args.sb_crosscheck.then(|| sb_crosscheck(args.m)).transpose()?;

    let mut table = Table::new(&["value", "exact", "brute"]).meta("n", n);
    if let Some(d) = &diff {
        table = table.meta("diff_empty", d.is_empty());
    }
    for &v in &values {
        table.row(vec![v.to_string(), cell(&exact, v), cell(&brute, v)]);
    }
    let result = WeightsResult {
        m: args.m,
        d: args.d,
        n,
        exact,
        brute,
        diff,
        sb_crosscheck: sb,
    };
    ctx.emit("weights", common, args, caps, &result, table)?;
    Ok(ok)
}

#[derive(Serialize)]
struct BoundResult {
    m: usize,
    d: usize,
    n: usize,
    histogram: &'static str,
    kappa_policy: String,
    bounds: Vec<TauBound>,
}

fn cmd_bound(ctx: &Ctx, common: &Common, args: &BoundArgs) -> Result<bool> {
    let caps = resolve_caps(common, &[CapField::Brute])?;
    let n = MonomialBasis::new(args.m, args.d)?.n();
    let (hist, source) = histogram_for(args.m, args.d, &caps)?;
    let mut bounds = Vec::new();
    for &delta in &args.delta {
        let b = match args.kappa.as_str() {
            "auto" => best_kappa(&hist, args.m, n, delta)?,
            "paper" => {
                if args.d != 2 {
                    bail!("the fixed threshold schedule is defined for d = 2");
                }
                let (_, kappa) = paper_schedule_quad(delta, args.m);
                dual_bound(&hist, args.m, n, delta, kappa as i64)?
            }
            other => {
                let kappa: i64 = other.parse().with_context(|| format!("--kappa {other:?}"))?;
                dual_bound(&hist, args.m, n, delta, kappa)?
            }
        };
        bounds.push(b);
    }
    let mut table = Table::new(&["delta", "kappa", "w_kappa", "log2_opt_upper", "tau_upper", "closed_form"])
        .meta("n", n)
        .meta("histogram", source);
    for b in &bounds {
        table.row(vec![
            b.delta.to_string(),
            format_kappa(b.kappa),
            b.w_kappa.to_string(),
            b.log2_opt_upper.to_string(),
            b.tau_upper.to_string(),
            b.closed_form.map(|c| c.to_string()).unwrap_or_default(),
        ]);
    }
    let result = BoundResult {
        m: args.m,
        d: args.d,
        n,
        histogram: source,
        kappa_policy: args.kappa.clone(),
        bounds,
    };
    ctx.emit("bound", common, args, caps, &result, table)?;
    Ok(true)
}

#[derive(Serialize)]
struct VerifyResult {
    pass: bool,
    suites: Vec<SuiteReport>,
}

fn cmd_verify(ctx: &Ctx, common: &Common, args: &VerifyArgs) -> Result<bool> {
    let caps = resolve_caps(common, &[CapField::Brute, CapField::Dense, CapField::Simulate])?;
    let suites: Vec<Suite> = if args.suite == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![args.suite.parse()?]
    };
    let reports = suites
        .into_iter()
        .map(|s| run_suite(s, common.seed, &caps))
        .collect::<polylearn::Result<Vec<_>>>()?;
    let pass = reports.iter().all(|r| r.pass);
    let mut table = Table::new(&["suite", "check", "pass", "detail"]).meta("pass", pass);
    for r in &reports {
        for c in &r.checks {
            table.row(vec![r.suite.name().into(), c.name.clone(), c.pass.to_string(), c.detail.clone()]);
        }
    }
    let result = VerifyResult { pass, suites: reports };
    ctx.emit("verify", common, args, caps, &result, table)?;
    Ok(pass)
}

fn cmd_learn(ctx: &Ctx, common: &Common, args: &LearnArgs) -> Result<bool> {
    let caps = Caps::default();
    let mut cfg = TrialConfig::new(
        match args.algo {
            AlgoArg::Gauss => Algo::Gauss,
            AlgoArg::Basis => Algo::Basis,
        },
        args.m,
        args.d,
        args.trials,
        common.seed,
    );
    cfg.budget = args.budget;
    cfg.mode = match args.stream {
        StreamArg::Uniform => StreamMode::Uniform,
        StreamArg::StandardBasis => StreamMode::StandardBasis,
    };
    let r = run_trials(&cfg)?;
    let mut table = Table::new(&[
        "algo",
        "m",
        "d",
        "trials",
        "success_rate",
        "samples_p50",
        "samples_p90",
        "samples_mean",
        "space_bits_max",
    ]);
    table.row(vec![
        format!("{:?}", r.algo).to_lowercase(),
        r.m.to_string(),
        r.d.to_string(),
        r.trials.to_string(),
        r.success_rate.to_string(),
        r.samples.p50.to_string(),
        r.samples.p90.to_string(),
        r.samples.mean.to_string(),
        r.space_bits.max.to_string(),
    ]);
    ctx.emit("learn", common, args, caps, &r, table)?;
    Ok(true)
}

fn cmd_simulate(ctx: &Ctx, common: &Common, args: &SimulateArgs) -> Result<bool> {
    let caps = resolve_caps(common, &[CapField::Simulate])?;
    let params = match args.tau_used {
        Some(tau) => TruncationParams::new(args.delta_prime, tau)?,
        None => params_for(args.m, args.d, args.delta_prime, &caps)?,
    };
    let mode = match args.mode {
        SimModeArg::Montecarlo => SimMode::MonteCarlo,
        SimModeArg::Exhaustive => SimMode::Exhaustive,
    };
    let s = simulate_paths_with(args.m, args.d, params, args.steps, args.trials, common.seed, mode, &caps)?;
    let mut table = Table::new(&["t", "alive", "truncated_high", "truncated_bias", "significant_by", "phi"])
        .meta("rng", s.rng)
        .meta("gamma", params.gamma)
        .meta("delta", params.delta)
        .meta("visited_nonsignificant", s.visited_nonsignificant)
        .meta("bias_violations", s.bias_violations)
        .meta("high_violations", s.high_violations)
        .meta("start_violations", s.start_violations)
        .meta("c_e_violations", s.c_e_violations)
        .meta("vacuous", s.thresholds.vacuous.join(";"));
    for st in &s.per_step {
        table.row(vec![
            st.t.to_string(),
            st.alive.to_string(),
            st.truncated_high.to_string(),
            st.truncated_bias.to_string(),
            st.significant_by.to_string(),
            st.phi.map(|p| p.to_string()).unwrap_or_default(),
        ]);
    }
    ctx.emit("simulate", common, args, caps, &s, table)?;
    Ok(true)
}

#[derive(Serialize)]
struct DicksonResult {
    m: usize,
    pairs: Vec<(usize, usize)>,
    k: usize,
    polar_rank: usize,
    orbit: polylearn::rmweights::OrbitType,
    /// Value distribution by enumeration, for m <= 12.
    enumerated: Option<Vec<(String, String)>>,
    agrees: Option<bool>,
}

fn cmd_dickson(ctx: &Ctx, common: &Common, args: &DicksonArgs) -> Result<bool> {
    let caps = Caps::default();
    let q = QuadraticForm::from_hex(args.m, &args.q)?;
    let k = dickson_k(&q);
    let orbit = orbit_type(k, args.m)?;
    let pairs = (0..args.m)
        .flat_map(|i| (i + 1..args.m).map(move |j| (i, j)))
        .filter(|&(i, j)| q.coefficient(i, j))
        .map(|(i, j)| (i + 1, j + 1))
        .collect();
    let (enumerated, agrees) = if args.m <= 12 {
        let map = enumerate_type(&q)?;
        let agrees = map == orbit.as_map();
        let list = map.iter().rev().map(|(v, c)| (v.to_string(), c.to_string())).collect();
        (Some(list), Some(agrees))
    } else {
        (None, None)
    };
    let mag = orbit.magnitude();
    let mut table = Table::new(&["m", "k", "value", "count"]);
    for (v, c) in [
        (mag.to_string(), &orbit.plus),
        ("0".to_string(), &orbit.zero),
        (format!("-{mag}"), &orbit.minus),
    ] {
        table.row(vec![args.m.to_string(), k.to_string(), v, c.to_string()]);
    }
    let result = DicksonResult {
        m: args.m,
        pairs,
        k,
        polar_rank: 2 * k,
        orbit,
        enumerated,
        agrees,
    };
    ctx.emit("dickson", common, args, caps, &result, table)?;
    Ok(agrees.unwrap_or(true))
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(threads) = cli.common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let ctx = Ctx {
        emitter: Emitter {
            format: cli.common.format,
            output: cli.common.output.clone(),
        },
        start: Instant::now(),
    };
    let c = &cli.common;
    match &cli.command {
        Command::Weights(a) => cmd_weights(&ctx, c, a),
        Command::Bound(a) => cmd_bound(&ctx, c, a),
        Command::Verify(a) => cmd_verify(&ctx, c, a),
        Command::Learn(a) => cmd_learn(&ctx, c, a),
        Command::Simulate(a) => cmd_simulate(&ctx, c, a),
        Command::Dickson(a) => cmd_dickson(&ctx, c, a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
