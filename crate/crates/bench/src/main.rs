use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::Parser;
use limes_bench::{emit_reports, summarize, BenchError, BenchmarkPlan, Harness, Mode};
use limes_core::workloads::{self, Workload};
use limes_core::{Executor, ExecutorConfig};

/// Measure cold-start and execution latency of the bundled functions.
#[derive(Parser, Debug)]
#[command(name = "limes-bench", version)]
struct Args {
    /// noop, mandelbrot, mandelbrot-io, image or image-io.
    #[arg(long, required_unless_present = "all", conflicts_with = "all")]
    workload: Option<Workload>,
    /// cold-jit, cold-cached or execution.
    #[arg(long, required_unless_present = "all", conflicts_with = "all")]
    mode: Option<Mode>,
    #[arg(long, default_value_t = limes_bench::plan::DEFAULT_ITERATIONS, value_parser = clap::value_parser!(u32).range(1..))]
    iterations: u32,
    /// Discarded iterations before sampling.
    #[arg(long, default_value_t = limes_bench::plan::DEFAULT_WARMUP)]
    warmup: u32,
    #[arg(long, default_value = "bench-results")]
    out: PathBuf,
    /// Seeds the no-op payload.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run every workload in every mode.
    #[arg(long)]
    all: bool,
    /// Directory holding the built components.
    #[arg(long)]
    workload_path: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();

    let plans = match (args.workload, args.mode) {
        _ if args.all => BenchmarkPlan::full_matrix(args.iterations, args.warmup, &args.out),
        (Some(w), Some(m)) => vec![BenchmarkPlan::new(w, m)
            .iterations(args.iterations)
            .warmup(args.warmup)
            .output_dir(&args.out)],
        _ => unreachable!("clap enforces --workload and --mode without --all"),
    };
    if let Some(bad) = plans.iter().find_map(|p| p.validate().err()) {
        eprintln!("error: {bad}");
        return ExitCode::from(2);
    }

    let executor = match Executor::new(ExecutorConfig::default()) {
        Ok(e) => Arc::new(e),
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let dir = args.workload_path.unwrap_or_else(workloads::workloads_dir);
    let harness = Harness::new(executor, dir).with_seed(args.seed);

    let mut sets = Vec::with_capacity(plans.len());
    let mut failed = false;
    for plan in &plans {
        log::info!(
            "{plan}: {} iterations after {} warmup",
            plan.iterations,
            plan.warmup_iterations
        );
        match harness.run(plan) {
            Ok(samples) => {
                if let Ok(s) = summarize(&samples.values_ms) {
                    println!(
                        "{:<14} {:<12} n={:<5} mean={:>10.3} p50={:>10.3} p99={:>10.3} ms",
                        plan.workload.name(),
                        plan.mode.name(),
                        s.n,
                        s.mean_ms,
                        s.p50_ms,
                        s.p99_ms
                    );
                }
                sets.push(samples);
            }
            Err(BenchError::Aborted { partial, reason }) => {
                log::error!("{plan} aborted: {reason}");
                sets.push(*partial);
                failed = true;
            }
            Err(e) => {
                log::error!("{e}");
                failed = true;
            }
        }
    }

    if !sets.is_empty() {
        match emit_reports(&args.out, &sets) {
            Ok(files) => log::info!("wrote {} files to {}", files.len(), args.out.display()),
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        }
    }
    if failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
