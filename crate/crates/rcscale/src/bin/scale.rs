use clap::{Parser, Subcommand};
use rcscale::cli::{bench, emit_artifacts, render_bench_table, run, Method, RunConfig};
use rcscale::error::ScaleError;
use rcscale::mm::{parse_marginals, read_matrix_market_path};
use rcscale::problem::{check_asymptotic_scalability, Feasibility, ScalingInstance};
use rcscale::trace::SolveStatus;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "scale", about = "Matrix (r,c)-scaling solvers", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct InstanceArgs {
    /// Matrix in MatrixMarket coordinate format (real, general)
    #[arg(long)]
    matrix: PathBuf,
    /// Row targets: integer file or inline list like "1,2,3" (default: all ones)
    #[arg(long)]
    r: Option<String>,
    /// Column targets: integer file or inline list (default: all ones)
    #[arg(long)]
    c: Option<String>,
}

impl InstanceArgs {
    fn load(&self) -> Result<ScalingInstance, ScaleError> {
        let a = read_matrix_market_path(&self.matrix)?;
        let r = match &self.r {
            Some(spec) => parse_marginals(spec, a.nrows())?,
            None => vec![1; a.nrows()],
        };
        let c = match &self.c {
            Some(spec) => parse_marginals(spec, a.ncols())?,
            None => vec![1; a.ncols()],
        };
        Ok(ScalingInstance::from_raw(a, r, c)?.0)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve an (r,c)-scaling instance
    Solve {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long, value_enum, default_value = "auto")]
        method: Method,
        #[arg(long, default_value_t = 1e-6)]
        eps: f64,
        /// Override the diameter bound N
        #[arg(long)]
        n_bound: Option<f64>,
        /// Override the iteration budget T (method-specific meaning)
        #[arg(long)]
        t: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for summary.json and trace.csv
        #[arg(long)]
        out: Option<PathBuf>,
        /// Zero timing columns for byte-identical traces
        #[arg(long)]
        deterministic: bool,
    },
    /// Check asymptotic (r,c)-scalability
    Check {
        #[command(flatten)]
        instance: InstanceArgs,
    },
    /// Run the benchmark suite
    Bench {
        #[arg(long, default_value = "default")]
        suite: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn init_logging() {
    let level = match std::env::var("SCALE_LOG").as_deref() {
        Ok("trace") => "trace",
        Ok("info") => "info",
        _ => "off",
    };
    let _ = env_logger::Builder::new().parse_filters(level).try_init();
}

fn main() -> ExitCode {
    init_logging();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, ScaleError> {
    match cli.command {
        Command::Solve { instance, method, eps, n_bound, t, seed, out, deterministic } => {
            let inst = instance.load()?;
            let mut config = RunConfig::new(method, eps);
            config.n_override = n_bound;
            config.t_override = t;
            config.seed = seed;
            config.deterministic_timing = deterministic;
            match run(&inst, &config) {
                Ok(outcome) => {
                    if let Some(dir) = &out {
                        emit_artifacts(dir, &inst, &config, &outcome)?;
                    }
                    println!(
                        "status: {:?}  iterations: {}  f: {:.12e}  potential: {:.6e}  row_err: {:.2e}",
                        outcome.status,
                        outcome.trace.iterations(),
                        outcome.final_f,
                        outcome.report.col_potential,
                        outcome.report.row_err,
                    );
                    Ok(match outcome.status {
                        SolveStatus::Converged => ExitCode::SUCCESS,
                        SolveStatus::IterationCapReached => ExitCode::from(3),
                        SolveStatus::BudgetExhausted => ExitCode::from(3),
                    })
                }
                Err(ScaleError::Infeasible) => {
                    let verdict = check_asymptotic_scalability(&inst);
                    eprintln!("instance is not asymptotically (r,c)-scalable");
                    if let Some(cert) = verdict.certificate {
                        eprintln!(
                            "zero minor: rows {:?} x cols {:?} (0-based)",
                            cert.rows, cert.cols
                        );
                    }
                    Ok(ExitCode::from(2))
                }
                Err(err) => Err(err),
            }
        }
        Command::Check { instance } => {
            let inst = instance.load()?;
            let verdict = check_asymptotic_scalability(&inst);
            match verdict.status {
                Feasibility::AsymptoticallyScalable => {
                    println!("asymptotically (r,c)-scalable");
                    Ok(ExitCode::SUCCESS)
                }
                Feasibility::NotScalable => {
                    println!("NOT scalable");
                    if let Some(cert) = verdict.certificate {
                        println!("zero minor: rows {:?} x cols {:?} (0-based)", cert.rows, cert.cols);
                    }
                    Ok(ExitCode::from(2))
                }
            }
        }
        Command::Bench { suite, out } => {
            if suite != "default" {
                return Err(ScaleError::Parse(format!("unknown suite: {suite}")));
            }
            let cells = bench(out.as_deref())?;
            print!("{}", render_bench_table(&cells));
            Ok(ExitCode::SUCCESS)
        }
    }
}
