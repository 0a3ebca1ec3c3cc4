//! Acceptance checks. Runs as a plain binary (`harness = false`) so that the
//! privacy audit can aggregate over every run made by the earlier checks.
//! Prints one PASS/FAIL line per criterion and exits non-zero on any failure.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hyfl::centralized::{run_sdca_central, CentralRun};
use hyfl::data::{
    load_libsvm, normalize_samples, synth_dataset, train_validation_split, LabelMapping, SparseDataset,
};
use hyfl::fedavg::{run_fedavg, FedAvgParams};
use hyfl::hyfdca::{
    run_hyfdca, EncryptionLedger, FederatedProblem, GammaSchedule, HyfdcaEngine, HyfdcaParams, PrivacyAudit,
    Schedule, StepScale, StopRule,
};
use hyfl::metrics::bound::{check_theorem2_bound, mean_dual_suboptimality};
use hyfl::metrics::{moving_average, relative_loss, RunHistory, TimingModel};
use hyfl::objective::{
    closed_form_dual_step, dual_direction, dual_to_primal, line_search_dual_step, ClosedFormOptions,
    LineSearchInput, Regularization,
};
use hyfl::partition::{
    partition_horizontal, partition_nonzero_split, partition_quadrant, partition_vertical, Partition,
};
use hyfl::tuning::{
    argmax_first, gra_grades, gra_grades_with, inner_iterations, random_search, HyperConfig, Orientation,
    SearchSpace, GRA_ZETA,
};
use hyfl::Result;

const LAMBDA: f64 = 0.01;

struct Ctx {
    ds: SparseDataset<f64>,
    oracle: CentralRun,
    audit: PrivacyAudit,
    audited_runs: usize,
}

impl Ctx {
    fn keep(&mut self, h: &RunHistory) {
        if let Some(a) = &h.meta.audit {
            self.audit.merge(a);
            self.audited_runs += 1;
        }
    }
}

type Outcome = Result<(bool, String)>;

fn full_run(ctx: &Ctx, seed: u64) -> Result<RunHistory> {
    let p = partition_nonzero_split(&ctx.ds, 2, 2, seed)?;
    let prob = FederatedProblem::new(&ctx.ds, &p, LAMBDA)?;
    let params = HyfdcaParams { inner_iterations: 10, seed, ..Default::default() };
    run_hyfdca(prob, params, Schedule::Full, TimingModel::hyfdca(0.0), StopRule::Iterations(500))
}

fn c1_gap(ctx: &mut Ctx) -> Outcome {
    let start = Instant::now();
    let h = full_run(ctx, 0)?;
    let secs = start.elapsed().as_secs_f64();
    ctx.keep(&h);
    let last = h.rows.last().expect("500 rows");
    let gap = last.gap.expect("dual tracked");
    let rel = (last.primal - ctx.oracle.p_star).abs() / ctx.oracle.p_star;
    Ok((
        gap <= 1e-3 && rel <= 1e-2 && secs < 30.0,
        format!("gap {gap:.3e} (<= 1e-3), |P-P*|/P* {rel:.3e} (<= 1e-2), runtime {secs:.2}s (< 30s)"),
    ))
}

fn c2_monotone(ctx: &mut Ctx) -> Outcome {
    let mut drops = 0;
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let h = full_run(ctx, seed)?;
        ctx.keep(&h);
        let mut prev = 0.0;
        for d in h.dual_series().expect("dual tracked") {
            if d < prev - 1e-12 {
                drops += 1;
                worst = worst.max(prev - d);
            }
            prev = d;
        }
    }
    Ok((drops == 0, format!("20 seeds, {drops} decreases beyond 1e-12 (largest {worst:.2e})")))
}

fn c3_bound(ctx: &mut Ctx) -> Outcome {
    let hs = (0..10).map(|s| full_run(ctx, s)).collect::<Result<Vec<_>>>()?;
    hs.iter().for_each(|h| ctx.keep(h));
    let n = ctx.ds.n_samples();
    let rep = check_theorem2_bound(&hs, Some(ctx.oracle.d_star), 10, n, LAMBDA, 1.0, 1.0)?;
    Ok((
        rep.passed,
        format!("H/N = {}, t0 = {}, max ratio {:.3e} at t = {}", 10.0 / n as f64, rep.bound.t0, rep.max_ratio, rep.worst_t),
    ))
}

fn c4_horizontal(ctx: &mut Ctx) -> Outcome {
    let p = partition_horizontal(&ctx.ds, 20)?;
    let h = 2;
    let mut hs = Vec::new();
    for seed in 0..10 {
        let prob = FederatedProblem::new(&ctx.ds, &p, LAMBDA)?;
        let params = HyfdcaParams { inner_iterations: h, seed, step_scale: StepScale::One, ..Default::default() };
        let sched = Schedule::RandomFraction { fraction: 0.25, seed: seed + 100 };
        hs.push(run_hyfdca(prob, params, sched, TimingModel::hyfdca(0.0), StopRule::Iterations(2000))?);
    }
    hs.iter().for_each(|r| ctx.keep(r));
    let eps = mean_dual_suboptimality(&hs, ctx.oracle.d_star)?;
    let ratio = eps[100] / eps[2000];
    // active clients per round
    let participation = Schedule::RandomFraction { fraction: 0.25, seed: 0 }.participation(20) * 20.0;
    let rep = check_theorem2_bound(&hs, Some(ctx.oracle.d_star), h, ctx.ds.n_samples(), LAMBDA, 1.0, participation)?;
    Ok((
        ratio >= 10.0 && rep.passed,
        format!("eps(100)/eps(2000) = {ratio:.3e} (>= 10), bound with P = {participation}: max ratio {:.3e}", rep.max_ratio),
    ))
}

fn c5_vertical(ctx: &mut Ctx) -> Outcome {
    let p = partition_vertical(&ctx.ds, 4, Some(3))?;
    let mut ratios = Vec::new();
    let mut finite = true;
    for seed in 0..10 {
        let prob = FederatedProblem::new(&ctx.ds, &p, LAMBDA)?;
        let params = HyfdcaParams {
            inner_iterations: 200,
            seed,
            step_scale: StepScale::One,
            gamma: GammaSchedule::InverseT,
            ..Default::default()
        };
        let h = run_hyfdca(prob, params, Schedule::Cyclic { groups: 2, seed }, TimingModel::hyfdca(0.0), StopRule::Iterations(5000))?;
        ctx.keep(&h);
        finite &= h.rows.iter().all(|r| r.primal.is_finite() && r.dual.is_some_and(f64::is_finite));
        let d = h.dual_series().expect("dual tracked");
        ratios.push((ctx.oracle.d_star - d[49]) / (ctx.oracle.d_star - d[4999]));
    }
    let worst = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((finite && worst >= 5.0, format!("10 seeds, smallest eps(50)/eps(5000) = {worst:.2} (>= 5), all finite: {finite}")))
}

fn random_dataset_and_partition(r: &mut ChaCha8Rng, case: u64) -> Result<(SparseDataset<f64>, Partition)> {
    let n = r.random_range(8..60);
    let m = r.random_range(4..25);
    let ds = synth_dataset(case + 1000, n, m, 0.05, 0.1)?;
    let p = match case % 3 {
        0 => partition_nonzero_split(&ds, r.random_range(1..4), r.random_range(1..4), case)?,
        1 => partition_horizontal(&ds, r.random_range(1..6))?,
        _ => partition_vertical(&ds, r.random_range(1..m.min(5)), Some(case))?,
    };
    Ok((ds, p))
}

fn c6_oracles(ctx: &mut Ctx) -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(6);

    let mut worst_step: f64 = 0.0;
    for case in 0..1000 {
        let y = if r.random_bool(0.5) { 1.0 } else { -1.0 };
        let alpha = y * r.random_range(0.0..=1.0);
        let ip: f64 = r.random_range(-3.0..3.0);
        let lambda = r.random_range(1e-3..1.0);
        let n = r.random_range(1..500);
        let exact = case % 2 == 1;
        let q: f64 = if exact { r.random_range(0.05..2.0) } else { 1.0 };
        let reg = Regularization::new(lambda, n)?;
        let opts = ClosedFormOptions { exact_norm: exact, ..Default::default() };
        let closed = closed_form_dual_step(y, alpha, ip, &reg, q, opts)?;
        let input = LineSearchInput { y, alpha, u: dual_direction(y, ip), margin: ip, c: 1.0, gamma: 1.0 };
        let (_, line) = line_search_dual_step(&input, &Regularization::new(reg.lambda_n() / q, 1)?);
        worst_step = worst_step.max((closed - line).abs());
    }

    let mut worst_ip: f64 = 0.0;
    for case in 0..100 {
        let (ds, p) = random_dataset_and_partition(&mut r, case)?;
        let prob = FederatedProblem::new(&ds, &p, 0.05)?;
        let params = HyfdcaParams { inner_iterations: 3, seed: case, ..Default::default() };
        let mut eng = HyfdcaEngine::new(prob, params, Schedule::Full, TimingModel::hyfdca(0.0))?;
        for _ in 0..3 {
            eng.step()?;
        }
        let all: Vec<usize> = (0..p.n_clients()).collect();
        eng.primal_aggregation(&all);
        let positions: Vec<Vec<usize>> = all.iter().map(|&k| (0..p.client(k).samples().len()).collect()).collect();
        eng.secure_inner_product(&all, &positions);
        let w0 = eng.w0().to_vec();
        for &k in &all {
            for (pos, &i) in p.client(k).samples().iter().enumerate() {
                let want = ds.sample(i).dot(&w0);
                let got = eng.client_inner_products(k)[pos];
                worst_ip = worst_ip.max((got - want).abs() / want.abs().max(1.0));
            }
        }
        ctx.audit.merge(eng.audit());
        ctx.audited_runs += 1;
    }

    let mut worst_w: f64 = 0.0;
    for seed in 0..5 {
        let p = partition_nonzero_split(&ctx.ds, 2, 2, seed)?;
        let prob = FederatedProblem::new(&ctx.ds, &p, LAMBDA)?;
        let params = HyfdcaParams { inner_iterations: 10, seed, ..Default::default() };
        let mut eng = HyfdcaEngine::new(prob, params, Schedule::Full, TimingModel::hyfdca(0.0))?;
        for _ in 0..50 {
            eng.step()?;
            let w = dual_to_primal(&eng.alpha0(), &ctx.ds, &prob.reg)?;
            for (a, b) in eng.w0().iter().zip(&w) {
                worst_w = worst_w.max((a - b).abs());
            }
        }
        ctx.audit.merge(eng.audit());
        ctx.audited_runs += 1;
    }

    Ok((
        worst_step <= 1e-6 && worst_ip <= 1e-9 && worst_w <= 1e-9,
        format!(
            "(a) max |closed - line| {worst_step:.2e} (<= 1e-6); (b) max rel SIP error {worst_ip:.2e} (<= 1e-9); \
             (c) max |w0 - map(alpha0)| {worst_w:.2e} (<= 1e-9)"
        ),
    ))
}

fn c7_mnist(ctx: &mut Ctx) -> Outcome {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/mnist_5k.libsvm.gz");
    let raw = load_libsvm::<f64>(&path, Some(784), &LabelMapping::digits_low_high())?;
    let (train, val) = train_validation_split(&raw, 0.4, 1)?;
    let (aug, part) = partition_quadrant(&train, 8, 10.0)?;
    let train = normalize_samples(&aug);
    let val = normalize_samples(&val.with_constant_feature(10.0));
    let lambda = 0.001;
    let n = train.n_samples();
    let oracle = run_sdca_central(&train, &Regularization::new(lambda, n)?, 50_000_000, 0, 1e-7)?;
    let jobs = std::thread::available_parallelism().map_or(4, |v| v.get());
    let iters = StopRule::Iterations(500);
    let smoothed = |h: &RunHistory| -> Result<f64> {
        let pr = h.primal_series().iter().map(|&p| relative_loss(p, oracle.p_star)).collect::<Result<Vec<_>>>()?;
        Ok(*moving_average(&pr, 50).last().expect("500 rows"))
    };

    let mut pass = n == 2000;
    let mut lines = Vec::new();
    for f in [0.5, 0.9] {
        let sched = Schedule::RandomFraction { fraction: f, seed: 17 };
        let prob = FederatedProblem::new(&train, &part, lambda)?.with_validation(&val)?;
        let hy = random_search(&SearchSpace::hyfdca(8, n).sample(101, 20)?, jobs, 50, |c: &HyperConfig| {
            let params = HyfdcaParams {
                inner_iterations: inner_iterations(c.iic, n, 8),
                step_scale: StepScale::One,
                seed: 5,
                ..Default::default()
            };
            run_hyfdca(prob, params, sched, TimingModel::hyfdca(0.0), iters)
        })?;
        let fa = random_search(&SearchSpace::fedavg(8, n).sample(202, 20)?, jobs, 50, |c: &HyperConfig| {
            let params = FedAvgParams {
                inner_iterations: inner_iterations(c.iic, n, 8),
                a: c.a.expect("fedavg space"),
                b: c.b.expect("fedavg space"),
                seed: 5,
            };
            run_fedavg(prob, params, sched, TimingModel::fedavg(0.0), iters)
        })?;
        hy.histories.iter().for_each(|h| ctx.keep(h));
        let (ph, pf) = (smoothed(&hy.histories[hy.best])?, smoothed(&fa.histories[fa.best])?);
        pass &= ph < pf;
        lines.push(format!("f={f}: HyFDCA {ph:.4} vs FedAvg {pf:.4}"));
    }
    Ok((pass, format!("final smoothed P_R, {}", lines.join("; "))))
}

fn c8_accounting(_: &mut Ctx) -> Outcome {
    let mut ledger = EncryptionLedger::new();
    let mut acc = ledger.encrypt(0.0f64);
    for i in 1..100 {
        let c = ledger.encrypt(i as f64);
        if i <= 50 {
            acc = ledger.add(acc, c);
        }
    }
    for _ in 0..100 {
        ledger.decrypt(acc);
    }
    let counts = ledger.counts();
    let charged = TimingModel::hyfdca(0.2575).charge(0, &counts).total();
    let expected: f64 = 100.0 * 0.018882 + 100.0 * 0.018865 + 50.0 * 0.000054 + 4.5 * 0.2575;
    Ok((
        (counts.enc, counts.dec, counts.add) == (100, 100, 50) && charged.to_bits() == expected.to_bits(),
        format!("counts {}/{}/{}, charged {charged:?} s, expected {expected:?} s", counts.enc, counts.dec, counts.add),
    ))
}

fn c9_gra(_: &mut Ctx) -> Outcome {
    let good = [1.0, 2.0, 3.0, 0.1, 0.9, 0.01, 5.0];
    let bad = [2.0, 3.0, 4.0, 0.2, 0.8, 0.02, 9.0];
    let mid = [1.5, 2.5, 3.5, 0.15, 0.85, 0.015, 7.0];
    let g = gra_grades(&[bad, good, mid])?;
    let dominating = g[1] == 1.0 && argmax_first(&g) == Some(1);

    // A = (1, 0), B = (0, 1) after normalization: ξ is 1 at the ideal entry
    // and (0 + ζ)/(1 + ζ) at the other, so each grade is (1 + ζ/(1+ζ))/2.
    let g2 = gra_grades_with(&[[1.0, 0.0], [0.0, 1.0]], &[Orientation::LargerBetter; 2], GRA_ZETA)?;
    let hand = (1.0 + GRA_ZETA / (1.0 + GRA_ZETA)) / 2.0;
    let example = g2 == vec![hand, hand] && argmax_first(&g2) == Some(0);
    Ok((
        dominating && example,
        format!("dominating grade {} selected {}; 2x2 grades {:?} (hand {hand}), A selected {}", g[1], dominating, g2, argmax_first(&g2) == Some(0)),
    ))
}

fn c10_privacy(ctx: &mut Ctx) -> Outcome {
    let a = &ctx.audit;
    let exercised = a.alpha_uploads > 0 && a.ip_uploads > 0 && a.alpha_deliveries > 0 && a.w_deliveries > 0;
    Ok((
        exercised && a.violations() == 0,
        format!(
            "{} runs, {} alpha uploads ({} encrypted), {} ip uploads ({} encrypted), out of scope: alpha {} ip {} w {}",
            ctx.audited_runs,
            a.alpha_uploads,
            a.alpha_uploads_encrypted,
            a.ip_uploads,
            a.ip_uploads_encrypted,
            a.alpha_out_of_scope,
            a.ip_out_of_scope,
            a.w_out_of_scope
        ),
    ))
}

fn main() {
    let ds = synth_dataset::<f64>(7, 200, 20, 0.1, 0.0).expect("synthetic data");
    let oracle = run_sdca_central(&ds, &Regularization::new(LAMBDA, 200).expect("reg"), 10_000_000, 0, 1e-10)
        .expect("central oracle");
    let mut ctx = Ctx { ds, oracle, audit: PrivacyAudit::default(), audited_runs: 0 };

    let checks: [(&str, fn(&mut Ctx) -> Outcome); 10] = [
        ("1 duality gap convergence", c1_gap),
        ("2 dual monotonicity", c2_monotone),
        ("3 quantitative bound", c3_bound),
        ("4 horizontal partial participation", c4_horizontal),
        ("5 vertical cyclic participation", c5_vertical),
        ("6 oracle equivalences", c6_oracles),
        ("7 HyFDCA vs FedAvg on MNIST subset", c7_mnist),
        ("8 timing and encryption accounting", c8_accounting),
        ("9 grey relational analysis", c9_gra),
        ("10 privacy scoping audit", c10_privacy),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let start = Instant::now();
        let (ok, detail) = match check(&mut ctx) {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!ok);
        println!(
            "[{}] criterion {name}: {detail} ({:.1}s)",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
