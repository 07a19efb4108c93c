use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use diagsdp::imgseg::{self, mask_pgm, SegmentOptions};
use diagsdp::rng::{derive_seed, stream_rng, STREAM_INIT, STREAM_ROUNDING, STREAM_SCHEDULE};
use diagsdp::{
    async_step_sizes, brute_force_maxcut, choose_rank, hyperplane_round, load_problem,
    make_schedule, riemannian_grad_norm, run_async, run_sync, sdp_cut_bound, sync_step_sizes,
    AgentPartition, AsyncOptions, FactorState, Instance, ScheduleMode, SyncOptions, Trace,
    BRUTE_FORCE_MAX_N,
};

/// Distributed Burer-Monteiro solvers for SDPs with unit diagonal.
///
/// Indices and agent ids are 1-based in files and output.
#[derive(Parser, Debug)]
#[command(name = "diagsdp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a problem file and print the agent tree.
    Validate {
        /// JSON problem file.
        #[arg(long)]
        problem: PathBuf,
    },
    /// Solve with the synchronous message-passing sweep.
    SolveSync(SyncArgs),
    /// Solve with the bounded-delay asynchronous simulator.
    SolveAsync(AsyncArgs),
    /// Relaxation value, cut bound, exhaustive and rounded cuts.
    Maxcut(MaxcutArgs),
    /// Two-class segmentation of a PPM image.
    Imgseg(ImgsegArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum InitMode {
    /// Independent Gaussian columns, normalized.
    Random,
    /// Every column equal to one random unit vector.
    Common,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ScheduleArg {
    Uniform,
    Roundrobin,
    Adversarial,
}

impl From<ScheduleArg> for ScheduleMode {
    fn from(s: ScheduleArg) -> Self {
        match s {
            ScheduleArg::Uniform => ScheduleMode::Uniform,
            ScheduleArg::Roundrobin => ScheduleMode::RoundRobin,
            ScheduleArg::Adversarial => ScheduleMode::Adversarial,
        }
    }
}

#[derive(Args, Debug)]
struct Common {
    /// JSON problem file.
    #[arg(long)]
    problem: PathBuf,
    /// Master seed for every random stream.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Step-size safety margin, strictly between 0 and 1.
    #[arg(long, default_value_t = 0.5)]
    sigma: f64,
    /// Initial factor.
    #[arg(long, value_enum, default_value_t = InitMode::Random)]
    init: InitMode,
    /// Trace CSV output.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Record wall-clock time in the trace.
    #[arg(long)]
    timing: bool,
}

#[derive(Args, Debug)]
struct SyncArgs {
    #[command(flatten)]
    common: Common,
    /// Stop once the Riemannian gradient norm is below this.
    #[arg(long, default_value_t = 1e-6)]
    grad_tol: f64,
    /// Sweep limit [default: 10 n].
    #[arg(long)]
    max_iters: Option<usize>,
}

#[derive(Args, Debug)]
struct AsyncArgs {
    #[command(flatten)]
    common: Common,
    /// Delay bound B.
    #[arg(long = "B", visible_alias = "bound", default_value_t = 5)]
    b: usize,
    /// Activation and delay pattern.
    #[arg(long, value_enum, default_value_t = ScheduleArg::Uniform)]
    schedule: ScheduleArg,
    /// Stop once every step norm stays below this for B ticks.
    #[arg(long, default_value_t = 1e-7)]
    tol: f64,
    /// Tick limit.
    #[arg(long, default_value_t = 10_000)]
    max_iters: usize,
}

#[derive(Args, Debug)]
struct MaxcutArgs {
    #[command(flatten)]
    common: Common,
    /// Random hyperplanes tried.
    #[arg(long, default_value_t = 200)]
    trials: usize,
    /// Gradient tolerance for the relaxation solve.
    #[arg(long, default_value_t = 1e-8)]
    grad_tol: f64,
    /// Sweep limit for the relaxation solve.
    #[arg(long, default_value_t = 10_000)]
    max_iters: usize,
}

#[derive(Args, Debug)]
struct ImgsegArgs {
    /// PPM image (P3 or P6, maxval 255).
    #[arg(long)]
    image: PathBuf,
    /// Neighbours further apart than this in RGB get an edge.
    #[arg(long, default_value_t = 100.0)]
    threshold: f64,
    /// Number of horizontal strips.
    #[arg(long, default_value_t = 4)]
    agents: usize,
    /// Delay bound B.
    #[arg(long = "B", visible_alias = "bound", default_value_t = 3)]
    b: usize,
    /// Activation and delay pattern.
    #[arg(long, value_enum, default_value_t = ScheduleArg::Uniform)]
    schedule: ScheduleArg,
    /// Master seed for every random stream.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Step-size safety margin, strictly between 0 and 1.
    #[arg(long, default_value_t = 0.5)]
    sigma: f64,
    /// Stop once every step norm stays below this for B ticks.
    #[arg(long, default_value_t = 1e-7)]
    tol: f64,
    /// Tick limit.
    #[arg(long, default_value_t = 10_000)]
    max_iters: usize,
    /// Random hyperplanes tried.
    #[arg(long, default_value_t = 200)]
    trials: usize,
    /// PGM mask output.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Trace CSV output.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Record wall-clock time in the trace.
    #[arg(long)]
    timing: bool,
}

/// Outcome of a subcommand that ran to completion.
enum Status {
    Done,
    NotConverged,
}

fn one_based(set: &[usize]) -> String {
    let items: Vec<String> = set.iter().map(|j| (j + 1).to_string()).collect();
    format!("{{{}}}", items.join(","))
}

fn load(path: &Path) -> Result<Instance> {
    let problem = load_problem(path).with_context(|| format!("reading {}", path.display()))?;
    for w in &problem.warnings {
        println!("warning: {w}");
    }
    for w in problem.instance.partition.warnings() {
        println!(
            "warning: agent {}: child {} shares {} with parent {}",
            w.agent + 1,
            w.child + 1,
            one_based(&w.indices),
            w.parent + 1
        );
    }
    Ok(problem.instance)
}

fn initial(common: &Common, n: usize) -> Result<FactorState> {
    let p = choose_rank(n);
    let mut rng = stream_rng(common.seed, STREAM_INIT);
    Ok(match common.init {
        InitMode::Random => FactorState::random(p, n, &mut rng)?,
        InitMode::Common => FactorState::common(p, n, &mut rng)?,
    })
}

fn write_trace(trace: &Trace, path: Option<&Path>) -> Result<()> {
    if let Some(path) = path {
        trace
            .write_csv_file(path)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn summary(converged: bool, f: f64, grad_norm: f64, iters: usize, start: Instant, extra: &str) {
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    println!(
        "converged={converged} f={f} grad_norm={grad_norm:e} iters={iters} wall_ms={wall_ms:.3}{extra}"
    );
}

fn status(converged: bool) -> Status {
    if converged {
        Status::Done
    } else {
        Status::NotConverged
    }
}

fn print_tree(inst: &Instance) {
    let part: &AgentPartition = &inst.partition;
    println!(
        "n={} agents={} nnz={} sn={}",
        part.n(),
        part.m(),
        inst.matrix.nnz(),
        part.shared_count()
    );
    for i in 0..part.m() {
        let parent = part
            .parent(i)
            .map_or("-".to_string(), |p| (p + 1).to_string());
        println!(
            "agent {}: parent={parent} children={} J={} S={} R={}",
            i + 1,
            one_based(part.children(i)),
            one_based(part.set(i)),
            one_based(part.coupling(i)),
            one_based(part.uncoupling(i)),
        );
    }
}

fn validate(problem: &Path) -> Result<Status> {
    println!("config command=validate problem={}", problem.display());
    let inst = load(problem)?;
    print_tree(&inst);
    Ok(Status::Done)
}

fn solve_sync(args: &SyncArgs) -> Result<Status> {
    let c = &args.common;
    println!(
        "config command=solve-sync problem={} seed={} sigma={} init={:?} grad_tol={:e} max_iters={}",
        c.problem.display(),
        c.seed,
        c.sigma,
        c.init,
        args.grad_tol,
        args.max_iters.map_or("10n".to_string(), |k| k.to_string()),
    );
    let inst = load(&c.problem)?;
    let start = Instant::now();
    let steps = sync_step_sizes(&inst.partition, &inst.matrix, c.sigma)?;
    let opts = SyncOptions {
        max_iters: args.max_iters,
        grad_tol: args.grad_tol,
        timing: c.timing,
        record_iterates: false,
    };
    let init = initial(c, inst.matrix.n())?;
    let run = run_sync(&inst.matrix, &inst.partition, &steps, &init, &opts)?;
    write_trace(&run.trace, c.trace.as_deref())?;
    let last = run.trace.last().expect("trace has an initial row");
    summary(
        run.converged,
        last.f,
        last.grad_norm,
        run.iterations,
        start,
        "",
    );
    Ok(status(run.converged))
}

fn solve_async(args: &AsyncArgs) -> Result<Status> {
    let c = &args.common;
    let mode = ScheduleMode::from(args.schedule);
    println!(
        "config command=solve-async problem={} seed={} sigma={} init={:?} B={} schedule={mode} tol={:e} max_iters={}",
        c.problem.display(),
        c.seed,
        c.sigma,
        c.init,
        args.b,
        args.tol,
        args.max_iters,
    );
    let inst = load(&c.problem)?;
    let start = Instant::now();
    let n = inst.matrix.n();
    let steps = async_step_sizes(&inst.partition, &inst.matrix, args.b, c.sigma)?;
    let schedule = make_schedule(
        inst.partition.m(),
        n,
        args.b,
        derive_seed(c.seed, STREAM_SCHEDULE),
        mode,
        args.max_iters,
    )?;
    let opts = AsyncOptions {
        max_iters: args.max_iters,
        tol: args.tol,
        timing: c.timing,
        record_updates: false,
    };
    let init = initial(c, n)?;
    let run = run_async(
        &inst.matrix,
        &inst.partition,
        &steps,
        &schedule,
        &init,
        &opts,
    )?;
    write_trace(&run.trace, c.trace.as_deref())?;
    let last = run.trace.last().expect("trace has an initial row");
    let extra = format!(
        " consensus_gap={:e} max_staleness={}",
        last.consensus_gap, run.diagnostics.max_staleness
    );
    summary(
        run.converged,
        last.f,
        last.grad_norm,
        run.ticks,
        start,
        &extra,
    );
    Ok(status(run.converged))
}

fn maxcut(args: &MaxcutArgs) -> Result<Status> {
    let c = &args.common;
    println!(
        "config command=maxcut problem={} seed={} sigma={} init={:?} trials={} grad_tol={:e} max_iters={}",
        c.problem.display(),
        c.seed,
        c.sigma,
        c.init,
        args.trials,
        args.grad_tol,
        args.max_iters,
    );
    let inst = load(&c.problem)?;
    let start = Instant::now();
    let steps = sync_step_sizes(&inst.partition, &inst.matrix, c.sigma)?;
    let opts = SyncOptions {
        max_iters: Some(args.max_iters),
        grad_tol: args.grad_tol,
        timing: c.timing,
        record_iterates: false,
    };
    let init = initial(c, inst.matrix.n())?;
    let run = run_sync(&inst.matrix, &inst.partition, &steps, &init, &opts)?;
    write_trace(&run.trace, c.trace.as_deref())?;
    let f_star = run.trace.last().expect("trace has an initial row").f;
    let bound = sdp_cut_bound(&inst.matrix, f_star);
    let (rounded, _) = hyperplane_round(
        &run.state,
        &inst.matrix,
        args.trials,
        derive_seed(c.seed, STREAM_ROUNDING),
    )?;
    println!("f_star={f_star}");
    println!("bound={bound}");
    if inst.matrix.n() <= BRUTE_FORCE_MAX_N {
        let (brute, _) = brute_force_maxcut(&inst.matrix)?;
        println!("brute={brute}");
    } else {
        println!("brute=skipped (n > {BRUTE_FORCE_MAX_N})");
    }
    println!("rounded={rounded}");
    let ratio = if bound > 0.0 { rounded / bound } else { 1.0 };
    println!("ratio={ratio}");
    let grad = riemannian_grad_norm(&inst.matrix, &run.state)?;
    summary(run.converged, f_star, grad, run.iterations, start, "");
    Ok(status(run.converged))
}

fn segment(args: &ImgsegArgs) -> Result<Status> {
    let mode = ScheduleMode::from(args.schedule);
    println!(
        "config command=imgseg image={} threshold={} agents={} B={} schedule={mode} seed={} sigma={} tol={:e} max_iters={} trials={}",
        args.image.display(),
        args.threshold,
        args.agents,
        args.b,
        args.seed,
        args.sigma,
        args.tol,
        args.max_iters,
        args.trials,
    );
    let image = imgseg::load_image(&args.image)
        .with_context(|| format!("reading {}", args.image.display()))?;
    let start = Instant::now();
    let opts = SegmentOptions {
        threshold: args.threshold,
        agents: args.agents,
        b: args.b,
        mode,
        seed: args.seed,
        sigma: args.sigma,
        max_iters: args.max_iters,
        tol: args.tol,
        trials: args.trials,
        timing: args.timing,
    };
    let seg = imgseg::segment(&image, &opts)?;
    if let Some(path) = &args.mask {
        std::fs::write(path, mask_pgm(&seg.cut, image.width, image.height))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    write_trace(&seg.run.trace, args.trace.as_deref())?;
    let last = seg.run.trace.last().expect("trace has an initial row");
    let extra = format!(" cut={} edges={}", seg.cut_value, seg.matrix.nnz());
    summary(
        seg.run.converged,
        last.f,
        last.grad_norm,
        seg.run.ticks,
        start,
        &extra,
    );
    Ok(status(seg.run.converged))
}

fn run(cli: &Cli) -> Result<Status> {
    match &cli.command {
        Command::Validate { problem } => validate(problem),
        Command::SolveSync(a) => solve_sync(a),
        Command::SolveAsync(a) => solve_async(a),
        Command::Maxcut(a) => maxcut(a),
        Command::Imgseg(a) => segment(a),
    }
}

fn error_code(err: &anyhow::Error) -> &'static str {
    err.chain()
        .find_map(|e| e.downcast_ref::<diagsdp::Error>())
        .map_or("INTERNAL", |e| e.code())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("error")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("error=USAGE {e}");
            return ExitCode::from(1);
        }
    };
    match run(&cli) {
        Ok(Status::Done) => ExitCode::SUCCESS,
        Ok(Status::NotConverged) => ExitCode::from(2),
        Err(err) => {
            eprintln!("error={} {err:#}", error_code(&err));
            ExitCode::from(1)
        }
    }
}
