//! `synchro`: generate instances, solve them, and run benchmark suites.

mod bench;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};

use synchro_core::alns::{run_alns, AlnsConfig};
use synchro_core::baseline::run_baseline;
use synchro_core::construction::build_initial;
use synchro_core::instance::{generate_instance, GeneratorConfig};
use synchro_core::milp::build_model;
use synchro_core::oracle::brute_force_optimum;
use synchro_core::schedule::evaluate;
use synchro_core::{Instance, ModelVariant, Solution};

#[derive(Parser)]
#[command(name = "synchro", about = "Synchronized sprayer/tanker routing solver", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random instance file
    Gen(GenArgs),
    /// Solve one instance with the ALNS metaheuristic
    Solve(SolveArgs),
    /// Run a benchmark suite and write a CSV report
    Bench(bench::BenchArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Number of spray nodes
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    sprayers: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Field side length in miles
    #[arg(long, default_value_t = 3.0)]
    field_size: f64,
    /// Service time per demand unit
    #[arg(long, default_value_t = 0.5)]
    service_factor: f64,
    /// Sprayer tank capacity
    #[arg(long, default_value_t = 25.0)]
    qs: f64,
    /// Tanker capacity
    #[arg(long, default_value_t = 100.0)]
    qt: f64,
    /// Sprayer refill duration
    #[arg(long, default_value_t = 0.5)]
    xi: f64,
    /// Tanker depot reload duration
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    speed: f64,
    /// Planning horizon
    #[arg(long, default_value_t = 480.0)]
    tmax: f64,
}

#[derive(Args)]
pub struct AlnsFlags {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Iteration budget; defaults to 100 * n
    #[arg(long)]
    pub iters: Option<usize>,
    /// Lower removal share of the node count
    #[arg(long, default_value_t = 0.05)]
    pub rl_min: f64,
    /// Upper removal share of the node count
    #[arg(long, default_value_t = 0.10)]
    pub rl_max: f64,
    /// Iterations per weight-update segment
    #[arg(long, default_value_t = 100)]
    pub segment: usize,
    /// Weight smoothing factor
    #[arg(long, default_value_t = 0.8)]
    pub lambda: f64,
    /// Initial temperature share of the start objective
    #[arg(long, default_value_t = 0.05)]
    pub rho: f64,
    #[arg(long, default_value_t = 0.9995)]
    pub cooling: f64,
    #[arg(long, default_value_t = 500)]
    pub max_no_improve: usize,
    /// Intensification budget in seconds
    #[arg(long, default_value_t = 60.0)]
    pub ls_budget: f64,
}

impl AlnsFlags {
    pub fn to_config(&self, n: usize) -> AlnsConfig {
        let mut cfg = AlnsConfig::new(n);
        cfg.seed = self.seed;
        if let Some(iters) = self.iters {
            cfg.iter_max = iters;
        }
        cfg.removal_min = self.rl_min;
        cfg.removal_max = self.rl_max;
        cfg.segment_length = self.segment;
        cfg.lambda = self.lambda;
        cfg.rho = self.rho;
        cfg.cooling = self.cooling;
        cfg.max_no_improve = self.max_no_improve;
        cfg.ls_budget = Duration::from_secs_f64(self.ls_budget);
        cfg
    }
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Objective variant: 1 = travel+wait+refill, 2 = makespan, 3 = travel
    #[arg(long, default_value_t = 1)]
    model: u8,
    #[command(flatten)]
    alns: AlnsFlags,
    /// Write the model in LP format before solving
    #[arg(long)]
    export_lp: Option<PathBuf>,
    /// Also run the two-stage practice baseline and report savings
    #[arg(long)]
    baseline: bool,
    /// Also compute the brute-force optimum (tiny instances only)
    #[arg(long)]
    oracle: bool,
    /// Write the best solution as JSON
    #[arg(long)]
    solution: Option<PathBuf>,
    /// Write the iteration trace as CSV
    #[arg(long)]
    trace: Option<PathBuf>,
}

fn model_total(inst: &Instance, sol: &Solution, variant: ModelVariant) -> f64 {
    evaluate(inst, sol, variant)
}

fn run_solve(args: &SolveArgs) -> Result<(), String> {
    let variant = ModelVariant::from_index(args.model)
        .ok_or_else(|| format!("unknown model {}", args.model))?;
    let inst = Instance::read_json(&args.instance).map_err(|e| e.to_string())?;
    let violations = inst.validate();
    if !violations.is_empty() {
        return Err(violations
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join("\n"));
    }

    if let Some(path) = &args.export_lp {
        let cs = build_model(&inst, variant);
        cs.export_lp(path).map_err(|e| e.to_string())?;
        eprintln!("wrote LP model to {}", path.display());
    }

    let started = Instant::now();
    let initial = build_initial(&inst, args.alns.seed).map_err(|e| e.to_string())?;
    let cfg = args.alns.to_config(inst.spray_count());
    let result = run_alns(&inst, &initial, &cfg, variant).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed().as_secs_f64();

    let best = &result.best;
    println!("objective,routing,waiting,refills,time_s,improvement_pct");
    println!(
        "{:.4},{:.4},{:.4},{:.4},{:.2},{:.2}",
        result.best_objective,
        best.objective.routing,
        best.objective.waiting,
        best.objective.refill,
        elapsed,
        result.improvement_pct()
    );

    if args.baseline {
        let base = run_baseline(&inst).map_err(|e| e.to_string())?;
        // savings compare total time = routing + waiting, the practice metric
        let base_total = base.objective.routing + base.objective.waiting;
        let alns_total = best.objective.routing + best.objective.waiting;
        let savings = 100.0 * (base_total - alns_total) / base_total;
        println!("baseline_objective,baseline_routing,baseline_waiting,savings_pct");
        println!(
            "{:.4},{:.4},{:.4},{:.2}",
            model_total(&inst, &base, variant),
            base.objective.routing,
            base.objective.waiting,
            savings
        );
    }

    if args.oracle {
        let optimum = brute_force_optimum(&inst, variant).map_err(|e| e.to_string())?;
        let f_opt = evaluate(&inst, &optimum, variant);
        let gap = if f_opt > 0.0 {
            100.0 * (result.best_objective - f_opt) / f_opt
        } else {
            0.0
        };
        println!("optimum,gap_to_optimum_pct");
        println!("{:.4},{:.4}", f_opt, gap);
    }

    if let Some(path) = &args.solution {
        std::fs::write(path, best.to_json_string()).map_err(|e| e.to_string())?;
    }
    if let Some(path) = &args.trace {
        std::fs::write(path, result.trace.to_csv()).map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn run_gen(args: &GenArgs) -> Result<(), String> {
    let mut cfg = GeneratorConfig::new(args.n, args.sprayers, args.seed);
    cfg.field_size = args.field_size;
    cfg.service_factor = args.service_factor;
    cfg.sprayer_capacity = args.qs;
    cfg.tanker_capacity = args.qt;
    cfg.refill_duration = args.xi;
    cfg.reload_duration = args.gamma;
    cfg.speed = args.speed;
    cfg.horizon = args.tmax;
    let inst = generate_instance(&cfg).map_err(|e| e.to_string())?;
    let violations = inst.validate();
    if !violations.is_empty() {
        return Err(violations
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join("\n"));
    }
    inst.write_json(&args.out).map_err(|e| e.to_string())?;
    println!("wrote {} nodes to {}", args.n, args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Gen(args) => run_gen(args),
        Command::Solve(args) => run_solve(args),
        Command::Bench(args) => return bench::run_bench(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}
