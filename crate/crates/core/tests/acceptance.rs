//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use occ_core::benchmarks::{
    bcc_search, dropout_llmzip_run, epsilon_grid, epsilon_sweep, sweep_argmin, BccConfig,
    DropoutConfig,
};
use occ_core::codec::{
    appendix_rate_bound, prefix_metrics, simulate, CodecParams, CoderBackend, Decoder, Mode,
    QuantilePolicy, StepOutcome,
};
use occ_core::coder::{
    build_one_to_one, build_shannon, one_to_one_length, shannon_length, CodeKind, Token,
};
use occ_core::conformal::{coverage_bound, empirical_quantile, ConformalConfig, OrderStatistics};
use occ_core::exec::Execution;
use occ_core::predictor::{AnyPredictor, Symbol};
use occ_core::transport::{read_container, write_container, ContainerBody, StreamContainer};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use common::*;

// Suite parameters.
const SUITE_T: usize = 5000;
const SUITE_ETA1: f64 = 0.001;
const SUITE_ALPHAS: [f64; 4] = [0.05, 0.1, 0.2, 0.35];
const RUN_TIME_LIMIT_SECS: f64 = 60.0;

// Criterion 4.
const EPS_GRID_STEP: f64 = 0.01;

// Criterion 5.
const QUANTILE_CASES: usize = 10_000;
const QUANTILE_MAX_LEN: usize = 12;

// Criterion 6.
const CODER_TABLES: usize = 10_000;

// Criterion 7.
const FIG2_ALPHA: f64 = 0.2;
const FIG2_WINDOWS: usize = 5;
const FIG2_BCC_GRID: usize = 64;
const FIG2_BCC_TOLERANCE: f64 = 0.15;

// Criterion 8.
const CONTRAST_T: usize = 200;
const CONTRAST_ALPHA: f64 = 0.2;
const CONTRAST_ETA1: f64 = 0.1;
const CONTRAST_MAX_SEEDS: u64 = 1000;

// Criterion 9.
const SHIFT_HALF: usize = 3500;
const SHIFT_ALPHA: f64 = 0.2;
const SHIFT_ETA1: f64 = 0.01;
const SHIFT_WARMUP: usize = 500;
const SHIFT_BCC_GRID: usize = 64;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Scenario {
    Stationary,
    Shift,
    IidUniform,
    UniformPredictor,
}

impl Scenario {
    const ALL: [Scenario; 4] = [
        Scenario::Stationary,
        Scenario::Shift,
        Scenario::IidUniform,
        Scenario::UniformPredictor,
    ];

    fn sequence(self, english: &[u8], shifted: &[u8]) -> Vec<Symbol> {
        match self {
            Scenario::Stationary | Scenario::UniformPredictor => {
                symbols(&english[20_000..20_000 + SUITE_T])
            }
            Scenario::Shift => {
                let half = SUITE_T / 2;
                let mut s = symbols(&english[50_000..50_000 + half]);
                s.extend(symbols(&shifted[..SUITE_T - half]));
                s
            }
            Scenario::IidUniform => iid_uniform(SUITE_T, 17),
        }
    }

    fn predictor(self) -> AnyPredictor {
        match self {
            Scenario::UniformPredictor => AnyPredictor::Uniform(uniform_predictor()),
            _ => AnyPredictor::Context(context_model()),
        }
    }
}

struct SuiteRun {
    scenario: Scenario,
    alpha: f64,
    mode: Mode,
    config: ConformalConfig,
    seq: Vec<Symbol>,
    run: LockstepRun,
    container_decoded: Vec<Symbol>,
    container_bits_match: bool,
    secs: f64,
}

fn decode_container(bytes: &[u8], predictor: AnyPredictor) -> Vec<Symbol> {
    let c = read_container(bytes).unwrap();
    let params = CodecParams {
        mode: c.header.mode,
        conformal: c.header.conformal,
        coder: c.header.coder,
    };
    let mut dec = Decoder::new(params, predictor).unwrap();
    match &c.body {
        ContainerBody::Slots(slots) => slots.iter().map(|m| dec.decode_step(m).unwrap()).collect(),
        ContainerBody::Stream(bits) => {
            let mut reader = bits.reader();
            (0..c.header.steps)
                .map(|_| dec.decode_from_stream(&mut reader).unwrap())
                .collect()
        }
    }
}

fn run_suite() -> Vec<SuiteRun> {
    let english = english();
    let shifted = shifted();
    let mut runs = Vec::new();
    for scenario in Scenario::ALL {
        let seq = scenario.sequence(&english, &shifted);
        for alpha in SUITE_ALPHAS {
            for mode in [Mode::Sync, Mode::Async] {
                let config = ConformalConfig::new(alpha, SUITE_ETA1).unwrap();
                let start = Instant::now();
                let run = lockstep(&seq, scenario.predictor(), mode, config);
                let container = StreamContainer::from_outcomes(
                    mode,
                    CoderBackend::Shannon,
                    config,
                    0,
                    256,
                    &run.outcomes,
                );
                let bytes = write_container(&container);
                let container_decoded = decode_container(&bytes, scenario.predictor());
                let encoder_bits: u64 = run.outcomes.iter().map(|o| o.bits as u64).sum();
                let container_bits_match = container.header.payload_bits == encoder_bits;
                runs.push(SuiteRun {
                    scenario,
                    alpha,
                    mode,
                    config,
                    seq: seq.clone(),
                    run,
                    container_decoded,
                    container_bits_match,
                    secs: start.elapsed().as_secs_f64(),
                });
            }
        }
    }
    runs
}

fn label(r: &SuiteRun) -> String {
    format!("{:?}/alpha={}/{}", r.scenario, r.alpha, r.mode.as_str())
}

fn criterion_1(runs: &[SuiteRun]) -> Outcome {
    let mut failures = Vec::new();
    let mut max_secs = 0.0f64;
    let mut checked = 0u64;
    for r in runs {
        max_secs = max_secs.max(r.secs);
        for m in prefix_metrics(&r.run.outcomes, &r.config) {
            checked += 1;
            let limit = r.alpha + coverage_bound(&r.config, m.steps);
            if m.distortion > limit {
                failures.push(format!("{} at T={}", label(r), m.steps));
                break;
            }
        }
    }
    let slow = max_secs >= RUN_TIME_LIMIT_SECS;
    outcome(
        failures.is_empty() && !slow,
        format!(
            "{} runs, {checked} prefixes, slowest run {max_secs:.2}s, violations: {:?}",
            runs.len(),
            failures
        ),
    )
}

fn criterion_2(runs: &[SuiteRun]) -> Outcome {
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    for r in runs {
        let mut missed = 0u64;
        for (i, o) in r.run.outcomes.iter().enumerate() {
            missed += !o.covered as u64;
            let t = i as u64 + 1;
            let dev = (missed as f64 / t as f64 - r.alpha).abs();
            let bound = coverage_bound(&r.config, t);
            worst = worst.max(dev / bound);
            if dev > bound {
                failures.push(format!("{} at T={t}", label(r)));
                break;
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!("max |miscoverage - alpha| / bound = {worst:.4}, violations: {failures:?}"),
    )
}

fn criterion_3(runs: &[SuiteRun]) -> Outcome {
    let mut failures = Vec::new();
    let mut covered_steps = 0u64;
    for r in runs {
        let o = &r.run.outcomes;
        for (i, out) in o.iter().enumerate() {
            if out.covered {
                covered_steps += 1;
                if r.run.decoded[i] != r.seq[i] {
                    failures.push(format!("{}: covered step {} lost", label(r), i + 1));
                    break;
                }
            }
            if r.run.decoded[i] != out.reconstructed {
                failures.push(format!("{}: reconstruction differs at {}", label(r), i + 1));
                break;
            }
        }
        if let Some(t) = r.run.state_mismatch {
            failures.push(format!("{}: state diverged at {t}", label(r)));
        }
        if r.container_decoded != r.run.decoded {
            failures.push(format!("{}: container decode differs", label(r)));
        }
        if !r.container_bits_match {
            failures.push(format!("{}: container payload accounting", label(r)));
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "{} runs, {covered_steps} covered steps, full-state equality every step, failures: {failures:?}",
            runs.len()
        ),
    )
}

fn criterion_4(runs: &[SuiteRun]) -> Outcome {
    let mut failures = Vec::new();
    let mut slack = f64::INFINITY;
    for r in runs.iter().filter(|r| r.mode == Mode::Async) {
        let bits: u64 = r.run.outcomes.iter().map(|o| o.bits as u64).sum();
        let rhs = appendix_rate_bound(
            r.run
                .outcomes
                .iter()
                .map(|o: &StepOutcome| o.truncated_prob),
            r.alpha,
        );
        slack = slack.min(rhs - bits as f64);
        if bits as f64 > rhs {
            failures.push(format!("{}: {bits} > {rhs}", label(r)));
        }
    }
    let english = english();
    let seq = symbols(&english[20_000..20_000 + SUITE_T]);
    let grid = epsilon_grid(EPS_GRID_STEP);
    let mut argmins = Vec::new();
    for alpha in SUITE_ALPHAS {
        let config = ConformalConfig::new(alpha, SUITE_ETA1).unwrap();
        let trace = simulate(&seq, context_model(), config, QuantilePolicy::Adaptive).unwrap();
        let sweep = epsilon_sweep(&trace, &grid, Execution::default()).unwrap();
        let best = sweep_argmin(&sweep).unwrap();
        // compare grid indices to avoid rounding in the difference
        let steps_off = ((best / EPS_GRID_STEP).round() - (alpha / EPS_GRID_STEP).round()).abs();
        argmins.push((alpha, best));
        if steps_off > 1.0 {
            failures.push(format!("argmin {best} for alpha {alpha}"));
        }
    }
    outcome(
        failures.is_empty(),
        format!("min slack {slack:.1} bits over async runs, argmin per alpha {argmins:?}, failures: {failures:?}"),
    )
}

fn criterion_5() -> Outcome {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(5);
    let mut mismatches = 0usize;
    let mut cases = 0usize;
    while cases < QUANTILE_CASES {
        let n = rng.gen_range(0..=QUANTILE_MAX_LEN);
        let scores: Vec<f64> = (0..n)
            .map(|_| rng.gen_range(0..=20) as f64 * 0.05)
            .collect();
        let mut stats = OrderStatistics::new();
        for &s in &scores {
            stats.insert(s);
        }
        let mut levels: Vec<f64> = (0..=n).map(|k| k as f64 / n.max(1) as f64).collect();
        levels.extend([-0.1, 0.0, 1.0, 1.1]);
        levels.extend((0..4).map(|_| rng.gen_range(-0.2..1.2)));
        for level in levels {
            cases += 1;
            let got = empirical_quantile(&stats, level).threshold();
            if got.to_bits() != brute_quantile(&scores, level).to_bits() {
                mismatches += 1;
            }
        }
    }
    outcome(
        mismatches == 0,
        format!("{cases} (multiset, level) cases, {mismatches} mismatches"),
    )
}

fn kraft_ok(lengths: &[u32]) -> bool {
    let max = *lengths.iter().max().unwrap_or(&0);
    let total: u128 = lengths.iter().map(|&l| 1u128 << (max - l)).sum();
    total <= 1u128 << max
}

fn criterion_6() -> Outcome {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(6);
    let mut failures = Vec::new();
    let mut entries = 0usize;
    for table_no in 0..CODER_TABLES {
        let k = rng.gen_range(1..=64);
        let weights: Vec<f64> = (0..k).map(|_| rng.gen_range(1e-6..1.0)).collect();
        let sum: f64 = weights.iter().sum();
        let mut support: Vec<(Token, f64)> = weights
            .iter()
            .enumerate()
            .map(|(i, w)| (Token::Symbol(Symbol(i as u32 * 3)), w / sum))
            .collect();
        if table_no % 2 == 1 {
            let a = rng.gen_range(0.01..0.5);
            for e in support.iter_mut() {
                e.1 *= 1.0 - a;
            }
            support.push((Token::Outage, a));
        }
        let shannon = build_shannon(&support).unwrap();
        let lengths: Vec<u32> = shannon.iter().map(|(_, _, c)| c.len() as u32).collect();
        if !kraft_ok(&lengths) {
            failures.push(format!("table {table_no}: Kraft"));
        }
        for (token, p, code) in shannon.iter() {
            entries += 1;
            if (code.len() as f64) >= -p.log2() + 1.0 || code.len() as u32 != shannon_length(p) {
                failures.push(format!("table {table_no}: length {} for p={p}", code.len()));
            }
            let mut reader = code.reader();
            if shannon.decode(&mut reader).ok() != Some(token) || reader.remaining() != 0 {
                failures.push(format!("table {table_no}: roundtrip {token:?}"));
            }
        }
        let rank_table = build_one_to_one(&support).unwrap();
        assert_eq!(rank_table.kind(), CodeKind::OneToOne);
        let mut order: Vec<(Token, f64)> = support.clone();
        order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        for (rank, (token, _)) in order.iter().enumerate() {
            let code = rank_table.codeword(*token).unwrap();
            if code.len() as u32 != floor_log2(rank + 1)
                || one_to_one_length(rank + 1) != floor_log2(rank + 1)
            {
                failures.push(format!(
                    "table {table_no}: rank {} length {}",
                    rank + 1,
                    code.len()
                ));
            }
            if rank_table.decode_with_length(code).ok() != Some(*token) {
                failures.push(format!("table {table_no}: rank roundtrip {token:?}"));
            }
        }
        if failures.len() > 10 {
            break;
        }
    }
    outcome(
        failures.is_empty(),
        format!("{CODER_TABLES} tables, {entries} Shannon entries, failures: {failures:?}"),
    )
}

fn criterion_7() -> Outcome {
    let english = english();
    let window = english.len() / FIG2_WINDOWS;
    let model = context_model();
    let (mut a, mut b_sync, mut b_async, mut c_sync, mut c_async, mut d_sync, mut d_async) =
        (0, 0, 0, 0, 0, 0, 0);
    let mut rows = Vec::new();
    for w in 0..FIG2_WINDOWS {
        let seq = symbols(&english[w * window..(w + 1) * window]);
        let t = seq.len() as f64;
        let occ_cfg = ConformalConfig::new(FIG2_ALPHA, SUITE_ETA1).unwrap();
        let occ = simulate(&seq, model.clone(), occ_cfg, QuantilePolicy::Adaptive).unwrap();
        let lossless_cfg = ConformalConfig {
            alpha: 0.0,
            gamma1: 0.0,
            eta1: SUITE_ETA1,
            beta: 0.0,
        };
        let lossless =
            simulate(&seq, model.clone(), lossless_cfg, QuantilePolicy::Adaptive).unwrap();
        let occ_sync = occ.sync_bits() as f64 / t;
        let occ_async = occ.async_bits().unwrap() as f64 / t;
        let lossless_sync = lossless.sync_bits() as f64 / t;
        let lossless_async = lossless.async_bits().unwrap() as f64 / t;
        let dropout = |mode| {
            dropout_llmzip_run(
                &seq,
                model.clone(),
                DropoutConfig {
                    alpha: FIG2_ALPHA,
                    seed: w as u64,
                },
                mode,
            )
            .unwrap()
            .rate()
        };
        let (drop_sync, drop_async) = (dropout(Mode::Sync), dropout(Mode::Async));
        let mut bcc_cfg = BccConfig::new(FIG2_ALPHA);
        bcc_cfg.grid_points = FIG2_BCC_GRID;
        let bcc = bcc_search(&seq, &model, &bcc_cfg, Execution::default()).unwrap();
        let bcc_async = bcc.async_rate.unwrap();

        a += (occ_sync <= occ_async) as usize;
        b_sync += (occ_sync <= drop_sync) as usize;
        b_async += (occ_async <= drop_async) as usize;
        c_sync += ((occ_sync - bcc.sync_rate).abs() <= FIG2_BCC_TOLERANCE) as usize;
        c_async += ((occ_async - bcc_async).abs() <= FIG2_BCC_TOLERANCE) as usize;
        d_sync += (occ_sync < lossless_sync) as usize;
        d_async += (occ_async < lossless_async) as usize;
        rows.push(format!(
            "w{w}: occ {occ_sync:.3}/{occ_async:.3} dropout {drop_sync:.3}/{drop_async:.3} bcc {:.3}/{bcc_async:.3} lossless {lossless_sync:.3}/{lossless_async:.3}",
            bcc.sync_rate
        ));
    }
    let majority = FIG2_WINDOWS / 2 + 1;
    // alpha = 0 is a valid configuration only for sync mode; the async
    // comparison against the lossless Shannon code is reported, not required
    let pass = a == FIG2_WINDOWS
        && b_sync >= majority
        && b_async >= majority
        && c_sync >= majority
        && c_async >= majority
        && d_sync >= majority;
    outcome(
        pass,
        format!(
            "(a) {a}/{FIG2_WINDOWS} (b) sync {b_sync} async {b_async} (c) sync {c_sync} async {c_async} (d) sync {d_sync} [async vs lossless Shannon {d_async}, informational]; rates sync/async: {}",
            rows.join("; ")
        ),
    )
}

fn criterion_8() -> Outcome {
    let english = english();
    let seq = symbols(&english[100_000..100_000 + CONTRAST_T]);
    let config = ConformalConfig::new(CONTRAST_ALPHA, CONTRAST_ETA1).unwrap();
    let limit = CONTRAST_ALPHA + coverage_bound(&config, CONTRAST_T as u64);
    let occ = lockstep(&seq, context_model(), Mode::Sync, config);
    let occ_ok = prefix_metrics(&occ.outcomes, &config)
        .iter()
        .all(|m| m.distortion <= CONTRAST_ALPHA + coverage_bound(&config, m.steps));
    let found = (0..CONTRAST_MAX_SEEDS).find_map(|seed| {
        let run = dropout_llmzip_run(
            &seq,
            context_model(),
            DropoutConfig {
                alpha: CONTRAST_ALPHA,
                seed,
            },
            Mode::Sync,
        )
        .unwrap();
        (run.distortion() > limit).then(|| (seed, run.distortion()))
    });
    let occ_distortion =
        occ.outcomes.iter().filter(|o| o.outage()).count() as f64 / CONTRAST_T as f64;
    outcome(
        occ_ok && found.is_some(),
        format!(
            "limit alpha + bound = {limit:.4}; dropout (seed, distortion) = {found:?}; OCC distortion {occ_distortion:.4}, anytime bound held: {occ_ok}"
        ),
    )
}

fn criterion_9() -> Outcome {
    let english = english();
    let shifted = shifted();
    let mut seq = symbols(&english[50_000..50_000 + SHIFT_HALF]);
    seq.extend(symbols(&shifted[..SHIFT_HALF]));
    let total = seq.len();
    let model = context_model();
    let config = ConformalConfig::new(SHIFT_ALPHA, SHIFT_ETA1).unwrap();
    let occ = simulate(&seq, model.clone(), config, QuantilePolicy::Adaptive).unwrap();
    let mut outages = 0u64;
    let mut worst: Option<(usize, f64, f64)> = None;
    let mut band_ok = true;
    for (i, s) in occ.steps.iter().enumerate() {
        outages += s.outage as u64;
        let t = i + 1;
        if t <= SHIFT_WARMUP {
            continue;
        }
        let rate = outages as f64 / t as f64;
        let bound = coverage_bound(&config, t as u64);
        if (rate - SHIFT_ALPHA).abs() > bound {
            band_ok = false;
        }
        if worst.is_none_or(|(_, d, b)| (rate - SHIFT_ALPHA).abs() / bound > d / b) {
            worst = Some((t, (rate - SHIFT_ALPHA).abs(), bound));
        }
    }
    let segment = |steps: &[occ_core::codec::SimStep]| {
        steps.iter().filter(|s| s.outage).count() as f64 / steps.len() as f64
    };
    let occ_segments = (
        segment(&occ.steps[..SHIFT_HALF]),
        segment(&occ.steps[SHIFT_HALF..]),
    );

    let mut bcc_cfg = BccConfig::new(SHIFT_ALPHA);
    bcc_cfg.grid_points = SHIFT_BCC_GRID;
    let bcc = bcc_search(&seq, &model, &bcc_cfg, Execution::default()).unwrap();
    let fixed = ConformalConfig {
        alpha: SHIFT_ALPHA,
        gamma1: bcc.gamma_star,
        eta1: 1.0,
        beta: 0.0,
    };
    let bcc_trace = simulate(&seq, model, fixed, QuantilePolicy::Fixed(bcc.gamma_star)).unwrap();
    let bcc_segments = (
        segment(&bcc_trace.steps[..SHIFT_HALF]),
        segment(&bcc_trace.steps[SHIFT_HALF..]),
    );
    let band_width = 2.0 * coverage_bound(&config, total as u64);
    let gap = (bcc_segments.0 - bcc_segments.1).abs();
    outcome(
        band_ok && gap > band_width,
        format!(
            "OCC segments {:.4}/{:.4}, in band after t={SHIFT_WARMUP}: {band_ok} (tightest {:?}); BCC gamma*={:.4} segments {:.4}/{:.4}, gap {gap:.4} vs band width {band_width:.4}",
            occ_segments.0, occ_segments.1, worst, bcc.gamma_star, bcc_segments.0, bcc_segments.1
        ),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let suite = run_suite();
    let suite_secs = start.elapsed().as_secs_f64();
    type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;
    let criteria: Vec<(&str, Check)> = vec![
        ("anytime distortion bound", Box::new(|| criterion_1(&suite))),
        ("two-sided coverage", Box::new(|| criterion_2(&suite))),
        (
            "lossless on covered, decoder bisimulation",
            Box::new(|| criterion_3(&suite)),
        ),
        (
            "async rate bound and epsilon sweep",
            Box::new(|| criterion_4(&suite)),
        ),
        ("quantile oracle equivalence", Box::new(criterion_5)),
        ("coder soundness", Box::new(criterion_6)),
        ("rate ordering at alpha 0.2", Box::new(criterion_7)),
        ("per-sequence vs on-average", Box::new(criterion_8)),
        ("uniform outage under shift", Box::new(criterion_9)),
    ];
    println!("suite: {} runs in {suite_secs:.1}s", suite.len());
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = check();
        failed += !o.pass as usize;
        println!(
            "criterion {} [{name}]: {} ({:.1}s) {}",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64(),
            o.detail
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
