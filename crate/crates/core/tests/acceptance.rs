//! End-to-end acceptance checks. Prints one line per criterion; exits with a
//! failure status only when an enforced check fails. Report-only checks are
//! printed with their measured values but never fail the run.

mod common;

use std::time::{Duration, Instant};

use common::*;
use diagsdp::imgseg::{self, mask_pgm, SegmentOptions};
use diagsdp::rng::{stream_rng, STREAM_INIT};
use diagsdp::*;

const MIXING_SWEEP_TOL: f64 = 1e-12;
const DECREASE_TOL: f64 = 1e-10;
const DESCENT_TOL: f64 = 1e-12;
const GRAD_TARGET: f64 = 1e-5;
const BUDGET: usize = 5000;
const CONSENSUS_TARGET: f64 = 1e-6;
const TRIANGLE_TOL: f64 = 1e-5;
const SOFT_RATIO: f64 = 0.8;
const SEGMENT_LIMIT: Duration = Duration::from_secs(5);
const MIXING_LIMIT: Duration = Duration::from_secs(10);

struct Check {
    name: &'static str,
    pass: bool,
    enforced: bool,
    detail: String,
}

fn check(name: &'static str, pass: bool, detail: String) -> Check {
    Check {
        name,
        pass,
        enforced: true,
        detail,
    }
}

fn report(name: &'static str, pass: bool, detail: String) -> Check {
    Check {
        name,
        pass,
        enforced: false,
        detail,
    }
}

fn init(n: usize, seed: u64) -> FactorState {
    FactorState::random(choose_rank(n), n, &mut stream_rng(seed, STREAM_INIT)).unwrap()
}

fn tree_instances() -> Vec<Instance> {
    (0..50).map(random_tree).collect()
}

fn example_instances() -> Vec<Instance> {
    (0..10).map(|s| example_one_random(1000 + s)).collect()
}

/// Gauss–Seidel pass in `order` that also returns the pre-normalization norms.
fn mixing_with_norms(a: &[Vec<f64>], v: &Cols, theta: &[f64], order: &[usize]) -> (Cols, Vec<f64>) {
    let mut out = v.clone();
    let mut y = vec![1.0; v.len()];
    for &j in order {
        let mut g = vec![0.0; v[0].len()];
        for (l, w) in a[j].iter().enumerate() {
            for k in 0..g.len() {
                g[k] += w * out[l][k];
            }
        }
        if g.iter().all(|&x| x == 0.0) {
            continue;
        }
        let x: Vec<f64> = out[j]
            .iter()
            .zip(&g)
            .map(|(p, q)| p - theta[j] * q)
            .collect();
        y[j] = dot(&x, &x).sqrt();
        out[j] = unit(&x);
    }
    (out, y)
}

fn sync_run(inst: &Instance, sigma: f64, seed: u64, max_iters: usize, tol: f64) -> SyncRun {
    let steps = sync_step_sizes(&inst.partition, &inst.matrix, sigma).unwrap();
    let opts = SyncOptions {
        max_iters: Some(max_iters),
        grad_tol: tol,
        record_iterates: true,
        ..Default::default()
    };
    run_sync(
        &inst.matrix,
        &inst.partition,
        &steps,
        &init(inst.matrix.n(), seed),
        &opts,
    )
    .unwrap()
}

struct AsyncCase {
    run: AsyncRun,
    scanned: Result<usize, String>,
}

#[allow(clippy::too_many_arguments)]
fn async_run(
    inst: &Instance,
    b: usize,
    mode: ScheduleMode,
    sigma: f64,
    seed: u64,
    max_iters: usize,
    tol: f64,
    record: bool,
) -> AsyncCase {
    let steps = async_step_sizes(&inst.partition, &inst.matrix, b, sigma).unwrap();
    let sched = make_schedule(
        inst.partition.m(),
        inst.matrix.n(),
        b,
        seed,
        mode,
        max_iters,
    )
    .unwrap();
    let opts = AsyncOptions {
        max_iters,
        tol,
        record_updates: record,
        ..Default::default()
    };
    let run = run_async(
        &inst.matrix,
        &inst.partition,
        &steps,
        &sched,
        &init(inst.matrix.n(), seed),
        &opts,
    )
    .unwrap();
    AsyncCase {
        run,
        scanned: sched.scan(),
    }
}

fn first_tick_below(trace: &Trace, target: f64) -> Option<usize> {
    trace
        .rows
        .iter()
        .find(|r| r.grad_norm < target)
        .map(|r| r.iter)
}

fn criterion_1_2(trees: &[Instance]) -> (Vec<Check>, Vec<Check>) {
    let start = Instant::now();
    let mut worst_diff: f64 = 0.0;
    let mut worst_decrease: f64 = 0.0;
    let mut zero_gap = true;
    for (seed, inst) in trees.iter().enumerate() {
        let run = sync_run(inst, 0.1, seed as u64, 100, 0.0);
        let a = dense(&inst.matrix);
        let steps = sync_step_sizes(&inst.partition, &inst.matrix, 0.1).unwrap();
        let order = run.permutation.inverse.clone();
        let mut v = cols(&init(inst.matrix.n(), seed as u64));
        for it in &run.iterates {
            let (next, y) = mixing_with_norms(&a, &v, steps.as_slice(), &order);
            let engine = cols(it);
            worst_diff = worst_diff.max(max_col_diff(&next, &engine));
            let drop = dense_objective(&a, &v) - dense_objective(&a, &engine);
            let predicted: f64 = (0..v.len())
                .map(|j| {
                    let d: f64 = v[j]
                        .iter()
                        .zip(&engine[j])
                        .map(|(p, q)| (p - q).powi(2))
                        .sum();
                    (1.0 + y[j]) / steps.get(j) * d
                })
                .sum();
            let f = dense_objective(&a, &engine);
            worst_decrease = worst_decrease.max((drop - predicted).abs() / (1.0 + f.abs()));
            v = engine;
        }
        zero_gap &= run.trace.rows.iter().all(|r| r.consensus_gap == 0.0);
    }
    let elapsed = start.elapsed();
    let c1 = vec![
        check(
            "sweep equivalence",
            worst_diff <= MIXING_SWEEP_TOL,
            format!("max |DSA - mixing| = {worst_diff:.2e} over 50 instances x 100 sweeps (tol {MIXING_SWEEP_TOL:e})"),
        ),
        check(
            "runtime",
            elapsed < MIXING_LIMIT,
            format!("{:.2} s (limit {} s)", elapsed.as_secs_f64(), MIXING_LIMIT.as_secs()),
        ),
    ];
    let c2 = vec![
        check(
            "decrease identity",
            worst_decrease < DECREASE_TOL,
            format!("max residual / (1 + |f|) = {worst_decrease:.2e} (tol {DECREASE_TOL:e})"),
        ),
        check(
            "dsa consensus",
            zero_gap,
            "consensus_gap == 0 after every sweep".into(),
        ),
    ];
    (c1, c2)
}

fn descent_checks(cases: &[AsyncCase]) -> (f64, f64, usize) {
    let mut worst_residual = f64::NEG_INFINITY;
    let mut worst_closed = 0.0f64;
    let mut updates = 0;
    for case in cases {
        for r in &case.run.records {
            let scale = 1.0 + r.h_norm_sq;
            worst_residual = worst_residual.max(r.residual() / scale);
            worst_closed = worst_closed.max((r.s_dot_h - r.closed_form()).abs() / scale);
            updates += 1;
        }
    }
    (worst_residual, worst_closed, updates)
}

fn criterion_3(trees: &[Instance]) -> Vec<Check> {
    let cases: Vec<AsyncCase> = (0..50)
        .map(|k| {
            let b = [1, 2, 5][k % 3];
            let mode = ScheduleMode::ALL[(k / 3) % 3];
            async_run(&trees[k], b, mode, 0.5, k as u64, 500, 0.0, true)
        })
        .collect();
    let (res, closed, updates) = descent_checks(&cases);
    vec![
        check(
            "descent inequality",
            res <= DESCENT_TOL,
            format!("max (s.h + |s|^2) / (1 + |h|^2) = {res:.2e} over {updates} updates"),
        ),
        check(
            "closed form",
            closed <= DESCENT_TOL,
            format!("max |s.h + (1 + y)|s|^2| / (1 + |h|^2) = {closed:.2e}"),
        ),
    ]
}

fn criterion_4(examples: &[Instance]) -> Vec<Check> {
    let mut dsa_hits = 0;
    let mut dsa_sweeps = Vec::new();
    let mut strictly = true;
    for (s, inst) in examples.iter().enumerate() {
        let run = sync_run(inst, 0.1, s as u64, BUDGET, GRAD_TARGET);
        if run.converged {
            dsa_hits += 1;
            dsa_sweeps.push(run.iterations);
        }
        strictly &= run.trace.rows.windows(2).all(|w| w[1].f < w[0].f);
    }
    let mut daa_ticks = Vec::new();
    for (s, inst) in examples.iter().enumerate() {
        let case = async_run(
            inst,
            1,
            ScheduleMode::Uniform,
            0.01,
            s as u64,
            BUDGET,
            0.0,
            false,
        );
        daa_ticks.push(first_tick_below(&case.run.trace, GRAD_TARGET));
    }
    let daa_hits = daa_ticks.iter().flatten().count();
    let n = examples.len();
    vec![
        check(
            "dsa grad",
            dsa_hits == n,
            format!("{dsa_hits}/{n} below {GRAD_TARGET:e} within {BUDGET} sweeps, sweeps {dsa_sweeps:?}"),
        ),
        check("dsa strict decrease", strictly, "f strictly decreasing in every trace".into()),
        report(
            "daa grad",
            daa_hits == n,
            format!(
                "{daa_hits}/{n} below {GRAD_TARGET:e} within {BUDGET} ticks (B=1, sigma=0.01), ticks {:?}",
                daa_ticks
            ),
        ),
    ]
}

fn consensus_checks(examples: &[Instance], mode: ScheduleMode, label: &str) -> Vec<Check> {
    let mut worst_excess = f64::NEG_INFINITY;
    let mut finals = Vec::new();
    let mut all_converged = true;
    for (s, inst) in examples.iter().take(5).enumerate() {
        for b in [1, 2, 5] {
            let case = async_run(inst, b, mode, 0.01, s as u64, 60_000, 1e-7, false);
            worst_excess = worst_excess.max(case.run.diagnostics.worst_gap_excess);
            finals.push(case.run.trace.last().unwrap().consensus_gap);
            all_converged &= case.run.converged;
        }
    }
    let worst_final = finals.iter().cloned().fold(0.0, f64::max);
    vec![
        check(
            "per-read gap bound",
            worst_excess <= 1e-12,
            format!("{label}: max (|copy - v| - theta sum |s|) = {worst_excess:.2e}"),
        ),
        check(
            "gap at termination",
            worst_final < CONSENSUS_TARGET,
            format!("{label}: max final gap {worst_final:.2e} over 15 runs, all stopped by tolerance: {all_converged}"),
        ),
    ]
}

fn criterion_6() -> Vec<Check> {
    let mut ordered = true;
    let mut worst_ratio = f64::INFINITY;
    let mut detail = String::new();
    for seed in 0..30u64 {
        let n = 4 + (seed as usize % 13);
        let inst = random_graph(500 + seed, n, 0.5);
        let run = sync_run(&inst, 0.1, seed, 20_000, 1e-9);
        let f_star = run.trace.last().unwrap().f;
        let bound = sdp_cut_bound(&inst.matrix, f_star);
        let (brute, _) = brute_force_maxcut(&inst.matrix).unwrap();
        let (rounded, _) = hyperplane_round(&run.state, &inst.matrix, 200, seed).unwrap();
        let tol = 1e-9 * (1.0 + bound);
        if !(rounded <= brute + tol && brute <= bound + tol) {
            ordered = false;
            detail = format!("seed {seed}: rounded {rounded}, brute {brute}, bound {bound}");
        }
        if bound > 0.0 {
            worst_ratio = worst_ratio.min(rounded / bound);
        }
    }
    vec![
        check(
            "sandwich",
            ordered,
            if ordered {
                "rounded <= brute <= bound on 30 graphs".into()
            } else {
                detail
            },
        ),
        report(
            "soft ratio",
            worst_ratio >= SOFT_RATIO,
            format!("min rounded / bound = {worst_ratio:.4} (target {SOFT_RATIO})"),
        ),
    ]
}

fn criterion_7() -> Vec<Check> {
    let grid = triangle_grid_minimum(1440);
    let inst = instances::triangle();
    let finals: Vec<f64> = (0..20)
        .map(|s| {
            sync_run(&inst, 0.1, s, 10_000, 1e-8)
                .trace
                .last()
                .unwrap()
                .f
        })
        .collect();
    let worst = finals.iter().map(|f| (f + 3.0).abs()).fold(0.0, f64::max);
    let steps = sync_step_sizes(&inst.partition, &inst.matrix, 0.1).unwrap();
    let common = FactorState::common(choose_rank(3), 3, &mut rng(7)).unwrap();
    let stuck = run_sync(
        &inst.matrix,
        &inst.partition,
        &steps,
        &common,
        &SyncOptions::default(),
    )
    .unwrap();
    let last = stuck.trace.last().unwrap();
    vec![
        check(
            "grid oracle",
            (grid + 3.0).abs() < 1e-4,
            format!("grid minimum {grid:.6}"),
        ),
        check(
            "random inits",
            worst <= TRIANGLE_TOL,
            format!("max |f + 3| = {worst:.2e} over 20 inits"),
        ),
        check(
            "common init",
            (last.f - 6.0).abs() < 1e-12 && last.grad_norm < 1e-12,
            format!("f = {}, grad_norm = {:.1e}", last.f, last.grad_norm),
        ),
    ]
}

fn criterion_8(trees: &[Instance], examples: &[Instance]) -> Vec<Check> {
    let mut scanned = 0usize;
    let mut scan_error = None;
    for m in 1..=6 {
        for b in 1..=6 {
            for mode in ScheduleMode::ALL {
                for seed in 0..5 {
                    let s = make_schedule(m, 12, b, seed, mode, 400).unwrap();
                    match s.scan() {
                        Ok(k) => scanned += k,
                        Err(e) => scan_error = Some(e),
                    }
                }
            }
        }
    }
    let cases: Vec<AsyncCase> = (0..30)
        .map(|k| {
            let b = [1, 2, 5][k % 3];
            async_run(
                &trees[k],
                b,
                ScheduleMode::Adversarial,
                0.5,
                k as u64,
                500,
                0.0,
                true,
            )
        })
        .collect();
    for c in &cases {
        if let Err(e) = &c.scanned {
            scan_error = Some(e.clone());
        }
    }
    // Adversarial reads always sit at the edge of the window.
    let stale_ok = cases
        .iter()
        .enumerate()
        .all(|(k, c)| c.run.diagnostics.max_staleness == [1, 2, 5][k % 3] - 1);
    let (res, closed, _) = descent_checks(&cases);
    let mut out = vec![
        check(
            "scanner",
            scan_error.is_none(),
            scan_error.unwrap_or_else(|| format!("{scanned} reads checked")),
        ),
        check(
            "adversarial descent",
            res <= DESCENT_TOL && closed <= DESCENT_TOL,
            format!("residual {res:.2e}, closed form {closed:.2e}"),
        ),
        check(
            "staleness",
            stale_ok,
            "max staleness equals B - 1 in every run".into(),
        ),
    ];
    let mut hits = Vec::new();
    for b in [1, 2, 5] {
        let count = examples
            .iter()
            .enumerate()
            .filter(|(s, inst)| {
                let case = async_run(
                    inst,
                    b,
                    ScheduleMode::Adversarial,
                    0.01,
                    *s as u64,
                    BUDGET,
                    0.0,
                    false,
                );
                first_tick_below(&case.run.trace, GRAD_TARGET).is_some()
            })
            .count();
        hits.push(format!("B={b}: {count}/{}", examples.len()));
    }
    let all = hits
        .iter()
        .all(|h| h.ends_with(&format!("{0}/{0}", examples.len())));
    out.push(report(
        "adversarial grad",
        all,
        format!(
            "below {GRAD_TARGET:e} within {BUDGET} ticks: {}",
            hits.join(", ")
        ),
    ));
    out.extend(consensus_checks(
        examples,
        ScheduleMode::Adversarial,
        "adversarial",
    ));
    out
}

fn criterion_9() -> Vec<Check> {
    let start = Instant::now();
    let img = imgseg::two_block(16, 16);
    let opts = SegmentOptions {
        threshold: 100.0,
        agents: 4,
        b: 3,
        ..Default::default()
    };
    let seg = imgseg::segment(&img, &opts).unwrap();
    let pgm = mask_pgm(&seg.cut, 16, 16);
    let csv = seg.run.trace.to_csv_string().unwrap();
    let elapsed = start.elapsed();
    assert!(!pgm.is_empty() && !csv.is_empty());

    let mask = seg.mask();
    let boundary = (0..16).all(|r| mask[r * 16 + 7] != mask[r * 16 + 8]);
    let left = mask[0];
    let blocks = (0..256).all(|k| mask[k] == if k % 16 < 8 { left } else { 255 - left });

    let small = img.resize(4, 4);
    let small_seg = imgseg::segment(&small, &opts).unwrap();
    let (brute, _) = brute_force_maxcut(&small_seg.matrix).unwrap();

    vec![
        check(
            "boundary cut",
            boundary && seg.cut_value == 4080.0,
            format!(
                "cut {} (expected 4080), every boundary pair separated: {boundary}",
                seg.cut_value
            ),
        ),
        report(
            "full block mask",
            blocks,
            "interior pixels have no incident weight, so their labels are unconstrained".into(),
        ),
        check(
            "4x4 brute force",
            small_seg.cut_value == brute,
            format!("rounded {} vs brute {brute}", small_seg.cut_value),
        ),
        check(
            "end-to-end time",
            elapsed < SEGMENT_LIMIT,
            format!("{:.2} s", elapsed.as_secs_f64()),
        ),
    ]
}

fn criterion_10(examples: &[Instance]) -> Vec<Check> {
    let inst = &examples[0];
    let sync = || {
        sync_run(inst, 0.5, 3, 300, 1e-6)
            .trace
            .to_csv_string()
            .unwrap()
    };
    let asy = || {
        async_run(inst, 5, ScheduleMode::Uniform, 0.5, 3, 2000, 1e-7, false)
            .run
            .trace
            .to_csv_string()
            .unwrap()
    };
    let img = imgseg::checkerboard(8, 8);
    let opts = SegmentOptions {
        max_iters: 2000,
        seed: 9,
        ..Default::default()
    };
    let seg = || {
        let s = imgseg::segment(&img, &opts).unwrap();
        (mask_pgm(&s.cut, 8, 8), s.run.trace.to_csv_string().unwrap())
    };
    vec![
        check("sync trace", sync() == sync(), "byte-identical".into()),
        check("async trace", asy() == asy(), "byte-identical".into()),
        check("mask and trace", seg() == seg(), "byte-identical".into()),
    ]
}

fn main() {
    let trees = tree_instances();
    let examples = example_instances();
    let (c1, c2) = criterion_1_2(&trees);
    let (c2, mut c5): (Vec<Check>, Vec<Check>) =
        c2.into_iter().partition(|c| c.name != "dsa consensus");
    c5.extend(consensus_checks(
        &examples,
        ScheduleMode::Uniform,
        "uniform",
    ));
    let criteria: Vec<(usize, Vec<Check>)> = vec![
        (1, c1),
        (2, c2),
        (3, criterion_3(&trees)),
        (4, criterion_4(&examples)),
        (5, c5),
        (6, criterion_6()),
        (7, criterion_7()),
        (8, criterion_8(&trees, &examples)),
        (9, criterion_9()),
        (10, criterion_10(&examples)),
    ];
    let mut enforced_failures = 0;
    for (k, checks) in &criteria {
        let pass = checks.iter().all(|c| c.pass);
        let parts: Vec<String> = checks
            .iter()
            .map(|c| {
                let tag = if c.pass { "PASS" } else { "FAIL" };
                let kind = if c.enforced { "" } else { ", report-only" };
                format!("[{} {tag}{kind}: {}]", c.name, c.detail)
            })
            .collect();
        println!(
            "criterion {k}: {} {}",
            if pass { "PASS" } else { "FAIL" },
            parts.join(" ")
        );
        enforced_failures += checks.iter().filter(|c| c.enforced && !c.pass).count();
    }
    if enforced_failures > 0 {
        eprintln!("{enforced_failures} enforced check(s) failed");
        std::process::exit(1);
    }
}
