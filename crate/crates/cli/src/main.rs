use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use txsched_core::harness::io::{trace_csv, InstanceFile, ScheduleFile};
use txsched_core::harness::{baseline_constant_edf, bench_complexity, generate, GeneratorConfig};
use txsched_core::model::{decompose, Normalized};
use txsched_core::oracle::{solve_grid, solve_projected_gradient, DEFAULT_MAX_ITERS, DEFAULT_TOL};
use txsched_core::verifier::{check_feasible, check_optimality, extract_certificate};
use txsched_core::{solve, Error, PowerModel};

/// Energy-optimal packet transmission scheduling under deadlines.
#[derive(Parser)]
#[command(name = "txsched", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random instance.
    Gen(GenArgs),
    /// Compute the optimal schedule.
    Solve {
        #[command(flatten)]
        input: InstanceArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Solve with a reference solver (segments are not emitted).
    Oracle {
        #[command(flatten)]
        input: InstanceArgs,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
        max_iters: usize,
        /// Use exhaustive grid search with this many levels per epoch.
        #[arg(long)]
        grid: Option<usize>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Check a schedule for feasibility and optimality.
    Validate {
        #[command(flatten)]
        input: InstanceArgs,
        schedule: PathBuf,
        /// Print the KKT multipliers as JSON instead of the report.
        #[arg(long)]
        certificate: bool,
    },
    /// Compare the scheduler with the oracle and the constant-rate EDF baseline.
    Compare {
        instances: Vec<PathBuf>,
        #[command(flatten)]
        power: PowerArgs,
        /// Fail when the relative energy gap to the oracle exceeds this.
        #[arg(long, default_value_t = 1e-5)]
        max_gap: f64,
    },
    /// Print the per-epoch allocation as CSV.
    Trace {
        #[command(flatten)]
        input: InstanceArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Time the scheduler on generated instances and check its counters.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = vec![10, 20, 40, 80, 160, 200])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10.0)]
    horizon: f64,
    #[arg(long, default_value_t = 0.3)]
    non_fifo_prob: f64,
    #[arg(long, default_value_t = 0.5)]
    bits_min: f64,
    #[arg(long, default_value_t = 2.0)]
    bits_max: f64,
    /// Noise power recorded in the instance file.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct InstanceArgs {
    instance: PathBuf,
    #[command(flatten)]
    power: PowerArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum PowerKind {
    Shannon,
    Monomial,
}

#[derive(Args)]
struct PowerArgs {
    #[arg(long, value_enum, default_value_t = PowerKind::Shannon)]
    power: PowerKind,
    /// Shannon noise power; defaults to the instance's `noise_power`, else 1.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long, default_value_t = 3.0)]
    exponent: f64,
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
}

impl PowerArgs {
    fn model(&self, file: &InstanceFile) -> Result<PowerModel, Failure> {
        let model = match self.power {
            PowerKind::Shannon => {
                PowerModel::shannon(self.noise.or(file.noise_power).unwrap_or(1.0))
            }
            PowerKind::Monomial => PowerModel::monomial(self.exponent, self.scale),
        };
        model.map_err(Failure::from)
    }
}

#[derive(Debug)]
enum Failure {
    Validation(String),
    Input(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Input(_) => 2,
            Failure::Internal(_) => 3,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            e if e.is_internal() => Failure::Internal(e.to_string()),
            Error::NotOptimal(_) | Error::InfeasibleInput => Failure::Validation(e.to_string()),
            Error::BracketOverflow(_) | Error::DidNotConverge { .. } => {
                Failure::Internal(e.to_string())
            }
            e => Failure::Input(e.to_string()),
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn emit(output: Option<&Path>, text: &str) -> Result<(), Failure> {
    match output {
        Some(path) => {
            fs::write(path, text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
        }
        None => {
            println!("{}", text.trim_end());
            Ok(())
        }
    }
}

struct Loaded {
    normalized: Normalized,
    model: PowerModel,
}

fn load(args: &InstanceArgs) -> Result<Loaded, Failure> {
    let file = InstanceFile::parse(&read(&args.instance)?)?;
    let model = args.power.model(&file)?;
    Ok(Loaded {
        normalized: file.normalize()?,
        model,
    })
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Gen(a) => {
            let config = GeneratorConfig {
                n: a.n,
                horizon: a.horizon,
                seed: a.seed,
                non_fifo_prob: a.non_fifo_prob,
                bits_range: (a.bits_min, a.bits_max),
            };
            let instance = generate(&config)?;
            emit(
                a.output.as_deref(),
                &InstanceFile::from_instance(&instance, a.noise).to_json(),
            )
        }
        Command::Solve { input, output } => {
            let l = load(&input)?;
            let schedule = solve(&l.normalized.instance, &l.model)?;
            let file = ScheduleFile::from_schedule(&l.normalized, &schedule, true);
            emit(output.as_deref(), &file.to_json())
        }
        Command::Oracle {
            input,
            tol,
            max_iters,
            grid,
            output,
        } => {
            let l = load(&input)?;
            let instance = &l.normalized.instance;
            let solution = match grid {
                Some(resolution) => solve_grid(instance, &l.model, resolution)?,
                None => solve_projected_gradient(instance, &l.model, tol, max_iters)?,
            };
            if !solution.converged {
                eprintln!(
                    "warning: oracle stopped after {} iterations with residual {:e}",
                    solution.iterations, solution.residual
                );
            }
            let schedule = solution.to_schedule(instance, &l.model)?;
            let file = ScheduleFile::from_schedule(&l.normalized, &schedule, false);
            emit(output.as_deref(), &file.to_json())
        }
        Command::Validate {
            input,
            schedule,
            certificate,
        } => validate(&input, &schedule, certificate),
        Command::Compare {
            instances,
            power,
            max_gap,
        } => compare(&instances, &power, max_gap),
        Command::Trace { input, output } => {
            let l = load(&input)?;
            let schedule = solve(&l.normalized.instance, &l.model)?;
            emit(output.as_deref(), &trace_csv(&l.normalized, &schedule))
        }
        Command::Bench { sizes, seed } => {
            let mut sorted = sizes.clone();
            sorted.sort_unstable();
            if sorted != sizes {
                return Err(Failure::Input("sizes must be ascending".into()));
            }
            let rows = bench_complexity(&sizes, seed)?;
            println!(
                "{:>6} {:>12} {:>10} {:>14} {:>10}",
                "n", "wall_ms", "iterations", "max_candidates", "bounds"
            );
            let mut all_ok = true;
            for r in &rows {
                let ok = r.within_bounds();
                all_ok &= ok;
                println!(
                    "{:>6} {:>12.3} {:>10} {:>14} {:>10}",
                    r.n,
                    r.wall.as_secs_f64() * 1e3,
                    r.iterations,
                    r.max_candidates,
                    if ok { "ok" } else { "VIOLATED" }
                );
            }
            if all_ok {
                Ok(())
            } else {
                Err(Failure::Validation("complexity bounds violated".into()))
            }
        }
    }
}

fn validate(input: &InstanceArgs, schedule: &Path, certificate: bool) -> Result<(), Failure> {
    let l = load(input)?;
    let instance = &l.normalized.instance;
    let ids = &l.normalized.original_ids;
    let schedule = ScheduleFile::parse(&read(schedule)?)?.to_schedule(&l.normalized, &l.model)?;

    let feasibility = check_feasible(instance, &schedule)?;
    if !feasibility.is_feasible() {
        for v in &feasibility.violations {
            println!("violation: {v}");
        }
        return Err(Failure::Validation(format!(
            "{} feasibility violations",
            feasibility.violations.len()
        )));
    }
    if certificate {
        let cert = extract_certificate(instance, &schedule, &l.model)?;
        let d = decompose(instance);
        let off = l.normalized.offset;
        let per_packet = |values: &[f64]| -> Vec<serde_json::Value> {
            values
                .iter()
                .enumerate()
                .map(|(i, v)| json!({"id": ids[i], "value": v}))
                .collect()
        };
        let beta: Vec<_> = cert
            .beta
            .iter()
            .enumerate()
            .map(|(j, v)| {
                let (s, e) = d.epoch(j);
                json!({"epoch": j, "start": s + off, "end": e + off, "value": v})
            })
            .collect();
        let gamma: Vec<_> = cert
            .gamma
            .iter()
            .enumerate()
            .flat_map(|(j, row)| row.iter().map(move |&(i, v)| (j, i, v)))
            .map(|(j, i, v)| json!({"id": ids[i], "epoch": j, "value": v}))
            .collect();
        let out = json!({
            "lambda": per_packet(&cert.lambda),
            "beta": beta,
            "gamma": gamma,
            "eta": per_packet(&cert.eta),
        });
        println!(
            "{}",
            serde_json::to_string_pretty(&out).expect("certificate serializes")
        );
        return Ok(());
    }
    let report = check_optimality(instance, &schedule, &l.model)?;
    println!("{}", report.to_string().trim_end());
    if report.optimal {
        Ok(())
    } else {
        Err(Failure::Validation("optimality conditions fail".into()))
    }
}

fn compare(instances: &[PathBuf], power: &PowerArgs, max_gap: f64) -> Result<(), Failure> {
    println!(
        "{:<32} {:>16} {:>16} {:>12} {:>16}",
        "instance", "scheduler", "oracle", "gap", "baseline"
    );
    let mut worst: f64 = 0.0;
    for path in instances {
        let file = InstanceFile::parse(&read(path)?)?;
        let model = power.model(&file)?;
        let normalized = file.normalize()?;
        let instance = &normalized.instance;
        let exact = solve(instance, &model)?;
        let oracle = solve_projected_gradient(instance, &model, DEFAULT_TOL, DEFAULT_MAX_ITERS)?;
        let baseline = baseline_constant_edf(instance, &model)?;
        let gap = (exact.energy - oracle.energy).abs() / oracle.energy;
        worst = worst.max(gap);
        println!(
            "{:<32} {:>16.9e} {:>16.9e} {:>12.3e} {:>16.9e}",
            path.display(),
            exact.energy,
            oracle.energy,
            gap,
            baseline.energy
        );
    }
    if worst > max_gap {
        Err(Failure::Validation(format!(
            "energy gap {worst:e} above {max_gap:e}"
        )))
    } else {
        Ok(())
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Validation(msg) | Failure::Input(msg) | Failure::Internal(msg)) = &f;
            eprintln!("error: {msg}");
            ExitCode::from(f.code())
        }
    }
}
