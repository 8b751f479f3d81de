use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use aap_cli::kernels::{self, pin_to_current_cpu, powers_of_two, KernelBenchOptions, KernelOp};
use aap_cli::plan::{parse_mask, parse_plan};
use aap_cli::table::{self, render_text, TableMeta};
use aap_cli::{run_experiment, verify_theorem_trace, RunSpec};
use aap_core::problems::PLaplacianInit;
use aap_core::{Adaptivity, ProblemKind, ProblemOptions, SolverConfig};
use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

const EXIT_NOT_CONVERGED: u8 = 1;
const EXIT_INVALID_INPUT: u8 = 2;
const EXIT_VERIFICATION_FAILED: u8 = 3;

#[derive(Parser)]
#[command(name = "aap", version, about = "Alternating Anderson-Picard experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one built-in problem.
    Run(RunArgs),
    /// Run every cell of a plan file.
    Sweep {
        #[arg(long)]
        plan: PathBuf,
        /// Overrides the plan's `out`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time masked against full least-squares kernels.
    BenchKernels(BenchArgs),
    /// Check the perturbation bound on a trace recorded by `run --trace`.
    VerifyTrace { path: PathBuf },
}

#[derive(Parser)]
struct RunArgs {
    #[arg(long)]
    problem: ProblemKind,
    /// Grid points per side (`linear`: dimension).
    #[arg(long)]
    size: usize,
    /// Field restricting the least-squares rows, or `none`.
    #[arg(long, default_value = "none")]
    mask: String,
    #[arg(long, default_value = "none")]
    adapt: Adaptivity,
    /// Percentage of restricted rows kept by the adaptive mask.
    #[arg(long, default_value_t = 30.0)]
    sketch: f64,
    /// Window size; defaults to the problem's recommendation.
    #[arg(short = 'm', long)]
    window: Option<usize>,
    /// Alternation: mix every p-th iteration.
    #[arg(short = 'p', long, default_value_t = 1)]
    alternation: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,
    /// Relaxation; defaults to the problem's recommendation.
    #[arg(long)]
    omega: Option<f64>,
    /// Use the minimum over columns in the stability budget.
    #[arg(long)]
    strict: bool,
    #[arg(long, default_value_t = aap_core::sketching::DEFAULT_ETA_EXPONENT, allow_negative_numbers = true)]
    eta_exponent: f64,
    #[arg(long, default_value_t = 3)]
    sigma_iters: usize,
    /// q-Laplacian exponent.
    #[arg(long, default_value_t = aap_core::problems::DEFAULT_Q)]
    q: f64,
    /// q-Laplacian stabilization.
    #[arg(long, default_value_t = aap_core::problems::DEFAULT_BETA)]
    beta: f64,
    /// q-Laplacian initial guess: zero or poisson.
    #[arg(long, default_value = "zero")]
    init: PLaplacianInit,
    /// q-Laplacian dimension (1 or 2).
    #[arg(long, default_value_t = 2)]
    dims: usize,
    /// JSON-lines trace with full increments of every mixing step.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Result table (CSV, with a `.meta` sidecar).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Parser)]
struct BenchArgs {
    #[arg(long, default_value_t = 1 << 10)]
    min_n: usize,
    #[arg(long, default_value_t = 1 << 18)]
    max_n: usize,
    #[arg(long, default_value_t = 50)]
    cols: usize,
    /// Comma-separated retention fractions in (0, 1].
    #[arg(long, value_delimiter = ',')]
    retentions: Option<Vec<f64>>,
    #[arg(long, default_value_t = 10_000)]
    rep_cap: usize,
    #[arg(long, default_value_t = 1e-5)]
    rel_change: f64,
    /// Time budget per kernel and cell, in milliseconds.
    #[arg(long, default_value_t = 2000)]
    budget_ms: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Do not pin the benchmark thread to its current CPU.
    #[arg(long)]
    no_pin: bool,
    /// Record grid (CSV); the threshold summary goes to `<stem>.thresholds.csv`.
    #[arg(long)]
    out: PathBuf,
}

/// Error classified by exit status.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn invalid(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_INVALID_INPUT,
        error: error.into(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep { plan, out } => cmd_sweep(plan, out),
        Command::BenchKernels(args) => cmd_bench(args),
        Command::VerifyTrace { path } => cmd_verify(path),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn cmd_run(a: RunArgs) -> Result<u8, Failure> {
    let options = ProblemOptions {
        seed: a.seed,
        q: a.q,
        beta: a.beta,
        plaplace_dims: a.dims,
        plaplace_init: a.init,
        ..Default::default()
    };
    let config = SolverConfig {
        window: a.window.unwrap_or(0),
        alternation: a.alternation,
        omega: a.omega,
        rel_tolerance: a.tol,
        max_iterations: a.max_iter,
        static_mask: parse_mask(&a.mask),
        adaptivity: a.adapt,
        sketch_percent: a.sketch,
        eta_exponent: a.eta_exponent,
        strict_lhs: a.strict,
        sigma_min_iterations: a.sigma_iters,
        rng_seed: a.seed,
        record_theorem_trace: a.trace.is_some(),
    };
    let spec = RunSpec {
        problem: a.problem,
        size: a.size,
        options,
        config,
    };
    let problem = spec.build().map_err(invalid)?;
    spec.resolved_config(&problem).validate().map_err(invalid)?;
    spec.config.static_mask.resolve(&problem).map_err(invalid)?;
    if let Err(e) = pin_to_current_cpu() {
        eprintln!("warning: could not pin to a CPU ({e}); timing may be noisy");
    }

    let outcome = spec.execute(&problem);
    let row = spec.row(&problem, &outcome, 1, Some(outcome.wall_time_seconds));
    print!("{}", render_text(std::slice::from_ref(&row)));
    if let Some(e) = &outcome.error {
        eprintln!("solve aborted: {e}");
    }
    if let Some(path) = &a.trace {
        spec.write_trace(path, &problem, &outcome)
            .with_context(|| format!("writing trace {}", path.display()))
            .map_err(invalid)?;
    }
    if let Some(path) = &a.out {
        let meta = TableMeta::new("run", a.seed, serde_json::to_value(&spec).expect("run spec serializes"));
        table::write_table(path, &[row], &meta)
            .with_context(|| format!("writing table {}", path.display()))
            .map_err(invalid)?;
    }
    Ok(if outcome.converged() { 0 } else { EXIT_NOT_CONVERGED })
}

fn cmd_sweep(plan_path: PathBuf, out: Option<PathBuf>) -> Result<u8, Failure> {
    let text = std::fs::read_to_string(&plan_path)
        .with_context(|| format!("reading plan {}", plan_path.display()))
        .map_err(invalid)?;
    let mut plan = parse_plan(&text)
        .with_context(|| format!("in {}", plan_path.display()))
        .map_err(invalid)?;
    if let Some(out) = out {
        plan.out = out;
    }
    if !plan.parallel {
        if let Err(e) = pin_to_current_cpu() {
            eprintln!("warning: could not pin to a CPU ({e}); timing may be noisy");
        }
    }
    eprintln!(
        "{} sizes x {} configurations of {} -> {}",
        plan.sizes.len(),
        plan.configs.len(),
        plan.problem,
        plan.out.display()
    );
    let (rows, trace_errors) = run_experiment(&plan);
    for e in &trace_errors {
        eprintln!("warning: {e}");
    }
    print!("{}", render_text(&rows));
    let meta = TableMeta::new("sweep", plan.seed, serde_json::to_value(&plan).expect("plan serializes"));
    table::write_table(&plan.out, &rows, &meta)
        .with_context(|| format!("writing table {}", plan.out.display()))
        .map_err(invalid)?;
    Ok(0)
}

fn cmd_bench(a: BenchArgs) -> Result<u8, Failure> {
    let opts = KernelBenchOptions {
        n_grid: powers_of_two(a.min_n, a.max_n),
        columns: a.cols,
        retentions: a.retentions.unwrap_or_else(|| kernels::DEFAULT_RETENTIONS.to_vec()),
        rep_cap: a.rep_cap,
        rel_change: a.rel_change,
        cell_budget: Duration::from_millis(a.budget_ms),
        seed: a.seed,
    };
    opts.validate().map_err(|e| invalid(anyhow::anyhow!(e)))?;
    if !a.no_pin {
        match pin_to_current_cpu() {
            Ok(cpu) => eprintln!("pinned to CPU {cpu}"),
            Err(e) => eprintln!("warning: could not pin to a CPU ({e}); timing may be noisy"),
        }
    }
    let (records, summary) = kernels::bench_masked_kernels(&opts, |r| {
        eprintln!(
            "n={:>8} {:<6} retention={:<5} masked/full = {:.3} ({} / {} reps)",
            r.n,
            format!("{:?}", r.op).to_lowercase(),
            r.retention,
            r.ratio(),
            r.masked_reps,
            r.full_reps
        );
    });
    let thresholds = a.out.with_extension("thresholds.csv");
    let meta = TableMeta::new("bench-kernels", a.seed, serde_json::to_value(&opts).expect("options serialize"));
    table::write_records(&a.out, &records)
        .and_then(|_| table::write_meta(&a.out, &meta))
        .and_then(|_| table::write_records(&thresholds, &summary))
        .context("writing benchmark output")
        .map_err(invalid)?;

    println!("{:>9} {:>8} {:>22}", "n", "op", "max faster retention");
    for s in &summary {
        let r = s.max_faster_retention.map_or_else(|| "none".into(), |r| format!("{r}"));
        println!("{:>9} {:>8} {:>22}", s.n, format!("{:?}", s.op).to_lowercase(), r);
    }
    // Informational only: depends on the machine's memory hierarchy.
    let largest = *opts.n_grid.last().expect("validated non-empty grid");
    if let Some(r) = records
        .iter()
        .filter(|r| r.n == largest && r.op == KernelOp::Matvec)
        .min_by(|x, y| (x.retention - 0.05).abs().total_cmp(&(y.retention - 0.05).abs()))
    {
        println!(
            "info: masked matvec at {}% retention, n = {largest}: masked/full = {:.3} ({})",
            r.retention * 100.0,
            r.ratio(),
            if r.ratio() < 1.0 { "masked faster" } else { "masked not faster" }
        );
    }
    println!("records: {}  thresholds: {}", a.out.display(), thresholds.display());
    Ok(0)
}

fn cmd_verify(path: PathBuf) -> Result<u8, Failure> {
    let report = verify_theorem_trace(&path)
        .with_context(|| format!("verifying {}", path.display()))
        .map_err(invalid)?;
    print!("{}", report.render());
    Ok(if report.passed() { 0 } else { EXIT_VERIFICATION_FAILED })
}
