//! Benchmark suites over generated instance grids, reported as CSV with
//! Avg/Min/Max footers per configuration.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use clap::{Args, ValueEnum};

use synchro_core::alns::{run_alns, AlnsConfig};
use synchro_core::baseline::run_baseline;
use synchro_core::construction::build_initial;
use synchro_core::instance::{generate_instance, GeneratorConfig};
use synchro_core::schedule::ModelVariant;
use synchro_core::Instance;

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    /// Removal-list size sweep: RL1 5-10%, RL2 7-15%, RL3 7.5-12.5%
    RemovalList,
    /// Iteration budget sweep: 50n, 100n, 150n, 200n
    Iterations,
    /// Destroy-operator contribution report
    Operators,
    /// Two-stage practice baseline vs ALNS with savings
    Practice,
}

#[derive(Args)]
pub struct BenchArgs {
    #[arg(long, value_enum)]
    suite: Suite,
    /// Node counts, comma separated; defaults per suite
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    /// Sprayer counts, comma separated; defaults per suite
    #[arg(long, value_delimiter = ',')]
    sprayers: Vec<usize>,
    /// Runs (seeds) per instance/config pair
    #[arg(long, default_value_t = 5)]
    runs: u64,
    /// First seed of the run range
    #[arg(long, default_value_t = 0)]
    seed0: u64,
    #[arg(long, default_value_t = 1)]
    model: u8,
    /// Intensification budget per new best, seconds
    #[arg(long, default_value_t = 5.0)]
    ls_budget: f64,
    #[arg(long)]
    out: PathBuf,
    /// Directory for per-run iteration traces (default: <out>_traces)
    #[arg(long)]
    trace_dir: Option<PathBuf>,
    /// Destination of the operator-contribution report (operators suite)
    #[arg(long)]
    operators_out: Option<PathBuf>,
}

struct Task {
    label: String,
    n: usize,
    sprayers: usize,
    seed: u64,
    config: String,
    removal: (f64, f64),
    iter_factor: usize,
    with_baseline: bool,
}

struct RunOutput {
    row: Row,
    trace_name: String,
    trace_csv: String,
    operator_stats: Vec<(String, u64, u64)>,
    feasible: bool,
}

#[derive(Clone)]
struct Row {
    instance: String,
    n: String,
    sprayers: String,
    seed: String,
    config: String,
    objective: f64,
    gap_pct: f64,
    time_s: f64,
    waiting: f64,
    routing: f64,
    savings_pct: Option<f64>,
}

impl Row {
    fn csv(&self) -> String {
        let savings = self
            .savings_pct
            .map(|s| format!("{s:.4}"))
            .unwrap_or_default();
        format!(
            "{},{},{},{},{},{:.4},{:.4},{:.4},{:.4},{:.4},{}",
            self.instance,
            self.n,
            self.sprayers,
            self.seed,
            self.config,
            self.objective,
            self.gap_pct,
            self.time_s,
            self.waiting,
            self.routing,
            savings
        )
    }
}

fn worker_count(tasks: usize) -> usize {
    let cap = std::env::var("SYNCHRO_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v >= 1);
    let available = std::thread::available_parallelism()
        .map(|v| v.get())
        .unwrap_or(1);
    cap.unwrap_or(available).min(tasks.max(1))
}

fn instance_for(task: &Task) -> Result<Instance, String> {
    generate_instance(&GeneratorConfig::new(task.n, task.sprayers, task.seed))
        .map_err(|e| e.to_string())
}

fn execute(task: &Task, variant: ModelVariant, ls_budget: f64) -> RunOutput {
    let failed = |message: String| RunOutput {
        row: Row {
            instance: task.label.clone(),
            n: task.n.to_string(),
            sprayers: task.sprayers.to_string(),
            seed: task.seed.to_string(),
            config: task.config.clone(),
            objective: f64::NAN,
            gap_pct: f64::NAN,
            time_s: 0.0,
            waiting: f64::NAN,
            routing: f64::NAN,
            savings_pct: None,
        },
        trace_name: String::new(),
        trace_csv: message,
        operator_stats: Vec::new(),
        feasible: false,
    };

    let inst = match instance_for(task) {
        Ok(inst) => inst,
        Err(e) => return failed(e),
    };
    let started = Instant::now();
    let initial = match build_initial(&inst, task.seed) {
        Ok(s) => s,
        Err(e) => return failed(e.to_string()),
    };
    let mut cfg = AlnsConfig::new(task.n);
    cfg.seed = task.seed;
    cfg.removal_min = task.removal.0;
    cfg.removal_max = task.removal.1;
    cfg.iter_max = task.iter_factor * task.n;
    cfg.ls_budget = Duration::from_secs_f64(ls_budget);
    let result = match run_alns(&inst, &initial, &cfg, variant) {
        Ok(r) => r,
        Err(e) => return failed(e.to_string()),
    };
    let time_s = started.elapsed().as_secs_f64();

    let savings_pct = if task.with_baseline {
        match run_baseline(&inst) {
            Ok(base) => {
                let base_total = base.objective.routing + base.objective.waiting;
                let alns_total = result.best.objective.routing + result.best.objective.waiting;
                Some(100.0 * (base_total - alns_total) / base_total)
            }
            Err(e) => return failed(e.to_string()),
        }
    } else {
        None
    };

    RunOutput {
        row: Row {
            instance: task.label.clone(),
            n: task.n.to_string(),
            sprayers: task.sprayers.to_string(),
            seed: task.seed.to_string(),
            config: task.config.clone(),
            objective: result.best_objective,
            gap_pct: result.improvement_pct(),
            time_s,
            waiting: result.best.objective.waiting,
            routing: result.best.objective.routing,
            savings_pct,
        },
        trace_name: format!("{}_{}_s{}.csv", task.label, task.config, task.seed),
        trace_csv: result.trace.to_csv(),
        operator_stats: result
            .operator_stats
            .iter()
            .map(|s| (s.operator.name().to_string(), s.usage, s.new_best))
            .collect(),
        feasible: true,
    }
}

fn aggregate(rows: &[&Row], config: &str) -> Vec<String> {
    if rows.is_empty() {
        return Vec::new();
    }
    let fields = |f: fn(&Row) -> f64| -> (f64, f64, f64) {
        let values: Vec<f64> = rows.iter().map(|r| f(r)).collect();
        let sum: f64 = values.iter().sum();
        (
            sum / values.len() as f64,
            values.iter().copied().fold(f64::INFINITY, f64::min),
            values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        )
    };
    let objective = fields(|r| r.objective);
    let gap = fields(|r| r.gap_pct);
    let time = fields(|r| r.time_s);
    let waiting = fields(|r| r.waiting);
    let routing = fields(|r| r.routing);
    let savings: Option<(f64, f64, f64)> = if rows.iter().all(|r| r.savings_pct.is_some()) {
        let values: Vec<f64> = rows.iter().map(|r| r.savings_pct.unwrap()).collect();
        let sum: f64 = values.iter().sum();
        Some((
            sum / values.len() as f64,
            values.iter().copied().fold(f64::INFINITY, f64::min),
            values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ))
    } else {
        None
    };
    let line = |tag: &str, pick: fn(&(f64, f64, f64)) -> f64| {
        let savings_cell = savings
            .as_ref()
            .map(|s| format!("{:.4}", pick(s)))
            .unwrap_or_default();
        format!(
            "{tag},,,,{config},{:.4},{:.4},{:.4},{:.4},{:.4},{savings_cell}",
            pick(&objective),
            pick(&gap),
            pick(&time),
            pick(&waiting),
            pick(&routing),
        )
    };
    vec![
        line("Avg.", |t| t.0),
        line("Min", |t| t.1),
        line("Max", |t| t.2),
    ]
}

pub fn run_bench(args: &BenchArgs) -> ExitCode {
    let Some(variant) = ModelVariant::from_index(args.model) else {
        eprintln!("error: unknown model {}", args.model);
        return ExitCode::FAILURE;
    };

    let (default_n, default_sp): (&[usize], &[usize]) = match args.suite {
        Suite::RemovalList => (&[20, 25, 30, 40], &[2, 3, 4]),
        Suite::Iterations => (&[30, 40, 50], &[2, 3, 4]),
        Suite::Operators => (&[30, 40, 50], &[2, 3, 4]),
        Suite::Practice => (&[30, 40, 50, 60], &[2, 3]),
    };
    let n_list: Vec<usize> = if args.n.is_empty() {
        default_n.to_vec()
    } else {
        args.n.clone()
    };
    let sp_list: Vec<usize> = if args.sprayers.is_empty() {
        default_sp.to_vec()
    } else {
        args.sprayers.clone()
    };

    let configs: Vec<(String, (f64, f64), usize)> = match args.suite {
        Suite::RemovalList => vec![
            ("RL1".into(), (0.05, 0.10), 100),
            ("RL2".into(), (0.07, 0.15), 100),
            ("RL3".into(), (0.075, 0.125), 100),
        ],
        Suite::Iterations => vec![
            ("50n".into(), (0.05, 0.10), 50),
            ("100n".into(), (0.05, 0.10), 100),
            ("150n".into(), (0.05, 0.10), 150),
            ("200n".into(), (0.05, 0.10), 200),
        ],
        Suite::Operators => vec![("default".into(), (0.05, 0.10), 100)],
        Suite::Practice => vec![("alns".into(), (0.05, 0.10), 100)],
    };

    let mut tasks: Vec<Task> = Vec::new();
    for &n in &n_list {
        for &sp in &sp_list {
            for (config, removal, iter_factor) in &configs {
                for run in 0..args.runs {
                    tasks.push(Task {
                        label: format!("I-{n}-S{sp}"),
                        n,
                        sprayers: sp,
                        seed: args.seed0 + run,
                        config: config.clone(),
                        removal: *removal,
                        iter_factor: *iter_factor,
                        with_baseline: args.suite == Suite::Practice,
                    });
                }
            }
        }
    }

    let workers = worker_count(tasks.len());
    let next = Mutex::new(0usize);
    let outputs: Mutex<Vec<Option<RunOutput>>> =
        Mutex::new((0..tasks.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let task_ix = {
                    let mut guard = next.lock().unwrap();
                    if *guard >= tasks.len() {
                        return;
                    }
                    let ix = *guard;
                    *guard += 1;
                    ix
                };
                let output = execute(&tasks[task_ix], variant, args.ls_budget);
                outputs.lock().unwrap()[task_ix] = Some(output);
            });
        }
    });
    let outputs: Vec<RunOutput> = outputs
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|o| o.expect("all tasks completed"))
        .collect();

    let trace_dir = args.trace_dir.clone().unwrap_or_else(|| {
        let mut dir = args.out.clone();
        dir.set_extension("");
        PathBuf::from(format!("{}_traces", dir.display()))
    });
    if let Err(e) = std::fs::create_dir_all(&trace_dir) {
        eprintln!("error: cannot create {}: {e}", trace_dir.display());
        return ExitCode::FAILURE;
    }

    let mut all_feasible = true;
    let mut csv =
        String::from("instance,n,sprayers,seed,config,objective,gap_pct,time_s,waiting,routing,savings_pct\n");
    for output in &outputs {
        if !output.feasible {
            all_feasible = false;
            eprintln!(
                "run failed: {} {} seed {}: {}",
                output.row.instance, output.row.config, output.row.seed, output.trace_csv
            );
            continue;
        }
        csv.push_str(&output.row.csv());
        csv.push('\n');
        let path = trace_dir.join(&output.trace_name);
        if let Err(e) = std::fs::write(&path, &output.trace_csv) {
            eprintln!("error: cannot write {}: {e}", path.display());
            return ExitCode::FAILURE;
        }
    }
    for (config, _, _) in &configs {
        let rows: Vec<&Row> = outputs
            .iter()
            .filter(|o| o.feasible && o.row.config == *config)
            .map(|o| &o.row)
            .collect();
        for line in aggregate(&rows, config) {
            csv.push_str(&line);
            csv.push('\n');
        }
    }
    if let Err(e) = std::fs::write(&args.out, &csv) {
        eprintln!("error: cannot write {}: {e}", args.out.display());
        return ExitCode::FAILURE;
    }
    println!("wrote {} rows to {}", outputs.len(), args.out.display());

    if args.suite == Suite::Operators {
        let path = args.operators_out.clone().unwrap_or_else(|| {
            let mut p = args.out.clone();
            p.set_extension("operators.csv");
            p
        });
        let mut report = String::from("instance,seed,operator,usage,new_best,performance_pct\n");
        for output in outputs.iter().filter(|o| o.feasible) {
            for (name, usage, new_best) in &output.operator_stats {
                let performance = if *usage > 0 {
                    100.0 * *new_best as f64 / *usage as f64
                } else {
                    0.0
                };
                report.push_str(&format!(
                    "{},{},{},{},{},{:.4}\n",
                    output.row.instance, output.row.seed, name, usage, new_best, performance
                ));
            }
        }
        if let Err(e) = std::fs::write(&path, report) {
            eprintln!("error: cannot write {}: {e}", path.display());
            return ExitCode::FAILURE;
        }
        println!("wrote operator report to {}", path.display());
    }

    if all_feasible {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
