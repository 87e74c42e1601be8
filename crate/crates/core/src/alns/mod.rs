//! Adaptive large neighborhood search: destroy/repair cycle with roulette
//! operator selection, simulated-annealing acceptance, segment-based weight
//! adaptation and a fixed-routes intensification step on every new best.

mod bank;
mod destroy;
mod repair;

pub use bank::{DestroyOp, OperatorBank, RepairOp, DESTROY_OPS};
pub use destroy::{apply_destroy, DestroyOutcome, PositionHistory};
pub use repair::apply_repair;

use std::time::Duration;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::instance::Instance;
use crate::oracle::optimize_fixed_routes;
use crate::schedule::{check_feasible, evaluate, ModelVariant, Solution};

/// Search parameters; `new(n)` applies the tuned defaults for an instance of
/// `n` spray nodes (iteration budget `100 n`, removal share 5-10%).
#[derive(Debug, Clone)]
pub struct AlnsConfig {
    pub iter_max: usize,
    pub removal_min: f64,
    pub removal_max: f64,
    pub segment_length: usize,
    pub lambda: f64,
    pub psi: [f64; 4],
    pub rho: f64,
    pub cooling: f64,
    pub max_no_improve: usize,
    pub zone_radius: f64,
    pub proximity_fraction: f64,
    pub ls_budget: Duration,
    pub seed: u64,
}

impl AlnsConfig {
    pub fn new(n: usize) -> Self {
        AlnsConfig {
            iter_max: 100 * n,
            removal_min: 0.05,
            removal_max: 0.10,
            segment_length: 100,
            lambda: 0.8,
            psi: [7.0, 4.0, 2.0, 1.0],
            rho: 0.05,
            cooling: 0.9995,
            max_no_improve: 500,
            zone_radius: 0.25,
            proximity_fraction: 0.05,
            ls_budget: Duration::from_secs(60),
            seed: 0,
        }
    }

    /// Inclusive removal-size bounds `[ceil(pMin n), floor(pMax n)]`, clamped
    /// to stay a nonempty range of at least one node.
    pub fn removal_bounds(&self, n: usize) -> (usize, usize) {
        let lo = ((self.removal_min * n as f64).ceil() as usize).clamp(1, n.max(1));
        let hi = ((self.removal_max * n as f64).floor() as usize).clamp(lo, n.max(1));
        (lo, hi)
    }

    /// Repeat count of the proximity operator, `ceil(0.05 n)` by default.
    pub fn proximity_repeats(&self, n: usize) -> usize {
        ((self.proximity_fraction * n as f64).ceil() as usize).max(1)
    }
}

/// Simulated-annealing acceptance probability for a worsening step.
pub fn acceptance_probability(delta: f64, temperature: f64) -> f64 {
    if delta <= 0.0 {
        return 1.0;
    }
    if temperature <= 0.0 {
        return 0.0;
    }
    (-delta / temperature).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// Better than the global best.
    NewBest,
    /// Better than the current solution.
    Better,
    /// Worse but accepted by the annealing criterion.
    AcceptedWorse,
    Rejected,
}

impl Outcome {
    pub fn name(self) -> &'static str {
        match self {
            Outcome::NewBest => "best",
            Outcome::Better => "better",
            Outcome::AcceptedWorse => "accepted",
            Outcome::Rejected => "rejected",
        }
    }

    fn psi_index(self) -> usize {
        match self {
            Outcome::NewBest => 0,
            Outcome::Better => 1,
            Outcome::AcceptedWorse => 2,
            Outcome::Rejected => 3,
        }
    }
}

/// Acceptance decision for a candidate objective.
pub fn accept(
    f_new: f64,
    f_current: f64,
    f_best: f64,
    temperature: f64,
    rng: &mut ChaCha8Rng,
) -> Outcome {
    if f_new < f_best {
        Outcome::NewBest
    } else if f_new < f_current {
        Outcome::Better
    } else if rng.random::<f64>() < acceptance_probability(f_new - f_current, temperature) {
        Outcome::AcceptedWorse
    } else {
        Outcome::Rejected
    }
}

#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iter: usize,
    pub destroy: DestroyOp,
    pub repair: RepairOp,
    /// Candidate objective; `None` when the repair aborted.
    pub objective: Option<f64>,
    pub best: f64,
    pub temperature: f64,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Default)]
pub struct Trace {
    pub records: Vec<IterationRecord>,
}

impl Trace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,operator,repair,objective,best,temp,outcome\n");
        for r in &self.records {
            let objective = r.objective.map(|o| o.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.iter,
                r.destroy.name(),
                r.repair.name(),
                objective,
                r.best,
                r.temperature,
                r.outcome.name()
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OperatorStat {
    pub operator: DestroyOp,
    pub usage: u64,
    pub new_best: u64,
}

#[derive(Debug, Clone)]
pub struct AlnsResult {
    pub best: Solution,
    pub initial_objective: f64,
    pub best_objective: f64,
    pub trace: Trace,
    pub operator_stats: Vec<OperatorStat>,
}

impl AlnsResult {
    /// Relative improvement over the initial solution, in percent.
    pub fn improvement_pct(&self) -> f64 {
        if self.initial_objective == 0.0 {
            return 0.0;
        }
        100.0 * (self.initial_objective - self.best_objective) / self.initial_objective
    }
}

#[derive(Debug, Error)]
pub enum AlnsError {
    #[error("initial solution infeasible: {0}")]
    InfeasibleStart(String),
}

/// Runs the full search from a feasible starting solution.
pub fn run_alns(
    inst: &Instance,
    start: &Solution,
    cfg: &AlnsConfig,
    variant: ModelVariant,
) -> Result<AlnsResult, AlnsError> {
    let violations = check_feasible(inst, start);
    if !violations.is_empty() {
        return Err(AlnsError::InfeasibleStart(
            violations
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("; "),
        ));
    }

    let n = inst.spray_count();
    let (p_lo, p_hi) = cfg.removal_bounds(n);
    let f0 = evaluate(inst, start, variant);
    let mut best = start.clone();
    let mut f_best = f0;
    let mut current = start.clone();
    let mut f_current = f0;
    let mut temperature = cfg.rho * f0;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut bank = OperatorBank::new();
    let mut history = PositionHistory::new(inst.nodes.len());
    let mut trace = Trace::default();
    let mut no_improve = 0usize;

    for iter in 0..cfg.iter_max {
        history.observe(inst, &current);
        let destroy_op = bank.select_destroy(&mut rng);
        let repair_op = bank.select_repair(&mut rng);
        bank.note_usage(destroy_op);
        let p = rng.random_range(p_lo..=p_hi);

        let destroyed = apply_destroy(destroy_op, inst, &current, p, cfg, &history, &mut rng);
        let candidate = apply_repair(repair_op, inst, destroyed.routes, &destroyed.removed, variant)
            .filter(|sol| check_feasible(inst, sol).is_empty());

        let (outcome, objective) = match candidate {
            None => (Outcome::Rejected, None),
            Some(sol) => {
                let f_new = evaluate(inst, &sol, variant);
                let outcome = accept(f_new, f_current, f_best, temperature, &mut rng);
                match outcome {
                    Outcome::NewBest => {
                        best = sol.clone();
                        f_best = f_new;
                        current = sol;
                        f_current = f_new;
                        bank.note_new_best(destroy_op);
                        no_improve = 0;
                        // intensify: re-optimize refills and tanker sequencing
                        // over the fixed routes of the new best
                        let tuned = optimize_fixed_routes(inst, &best, cfg.ls_budget, variant);
                        let f_tuned = evaluate(inst, &tuned, variant);
                        if f_tuned < f_best {
                            best = tuned;
                            f_best = f_tuned;
                        }
                    }
                    Outcome::Better | Outcome::AcceptedWorse => {
                        current = sol;
                        f_current = f_new;
                        no_improve += 1;
                    }
                    Outcome::Rejected => {
                        no_improve += 1;
                    }
                }
                (outcome, Some(f_new))
            }
        };
        if objective.is_none() {
            no_improve += 1;
        }
        bank.credit(destroy_op, cfg.psi[outcome.psi_index()]);
        trace.records.push(IterationRecord {
            iter,
            destroy: destroy_op,
            repair: repair_op,
            objective,
            best: f_best,
            temperature,
            outcome,
        });

        temperature *= cfg.cooling;
        if (iter + 1) % cfg.segment_length == 0 {
            bank.update_weights(cfg.lambda);
        }
        if no_improve >= cfg.max_no_improve {
            current = best.clone();
            f_current = f_best;
            no_improve = 0;
        }
    }

    let operator_stats = DESTROY_OPS
        .iter()
        .map(|&op| OperatorStat {
            operator: op,
            usage: bank.total_usage[op.index()],
            new_best: bank.new_best[op.index()],
        })
        .collect();
    Ok(AlnsResult {
        best,
        initial_objective: f0,
        best_objective: f_best,
        trace,
        operator_stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construction::build_initial;
    use crate::fixtures;
    use crate::instance::{generate_instance, GeneratorConfig};
    use crate::oracle::brute_force_optimum;

    #[test]
    fn acceptance_probability_matches_formula() {
        assert_eq!(acceptance_probability(0.0, 1.0), 1.0);
        assert!((acceptance_probability(1.0, 1.0) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((acceptance_probability(2.5, 5.0) - (-0.5f64).exp()).abs() < 1e-15);
        assert_eq!(acceptance_probability(1.0, 0.0), 0.0);
    }

    #[test]
    fn accept_outcomes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(accept(1.0, 5.0, 2.0, 1.0, &mut rng), Outcome::NewBest);
        assert_eq!(accept(3.0, 5.0, 2.0, 1.0, &mut rng), Outcome::Better);
        // temperature near zero: a worse solution is rejected almost surely
        for _ in 0..100 {
            assert_eq!(accept(6.0, 5.0, 2.0, 1e-300, &mut rng), Outcome::Rejected);
        }
    }

    #[test]
    fn removal_bounds_clamp_small_instances() {
        let cfg = AlnsConfig::new(6);
        assert_eq!(cfg.removal_bounds(6), (1, 1));
        assert_eq!(cfg.removal_bounds(20), (1, 2));
        assert_eq!(cfg.removal_bounds(30), (2, 3));
        assert_eq!(cfg.removal_bounds(60), (3, 6));
    }

    #[test]
    fn zero_iterations_returns_start() {
        let inst = fixtures::f1();
        let start = build_initial(&inst, 1).unwrap();
        let mut cfg = AlnsConfig::new(inst.spray_count());
        cfg.iter_max = 0;
        let result = run_alns(&inst, &start, &cfg, ModelVariant::Model1).unwrap();
        assert_eq!(result.best, start);
        assert!(result.trace.records.is_empty());
    }

    #[test]
    fn best_objective_never_increases_along_the_trace() {
        let inst = generate_instance(&GeneratorConfig::new(12, 2, 3)).unwrap();
        let start = build_initial(&inst, 0).unwrap();
        let mut cfg = AlnsConfig::new(12);
        cfg.iter_max = 300;
        cfg.ls_budget = Duration::from_millis(200);
        let result = run_alns(&inst, &start, &cfg, ModelVariant::Model1).unwrap();
        let mut previous = f64::INFINITY;
        for record in &result.trace.records {
            assert!(record.best <= previous + 1e-12);
            previous = record.best;
        }
        assert!(result.best_objective <= result.initial_objective + 1e-12);
        assert!(check_feasible(&inst, &result.best).is_empty());
    }

    #[test]
    fn deterministic_traces_and_solutions() {
        let inst = generate_instance(&GeneratorConfig::new(10, 2, 5)).unwrap();
        let start = build_initial(&inst, 2).unwrap();
        let mut cfg = AlnsConfig::new(10);
        cfg.iter_max = 200;
        cfg.ls_budget = Duration::from_millis(100);
        cfg.seed = 42;
        let a = run_alns(&inst, &start, &cfg, ModelVariant::Model1).unwrap();
        let b = run_alns(&inst, &start, &cfg, ModelVariant::Model1).unwrap();
        assert_eq!(a.trace.to_csv(), b.trace.to_csv());
        assert_eq!(a.best, b.best);
        assert_eq!(a.best.to_json_string(), b.best.to_json_string());
    }

    #[test]
    fn f1_reaches_the_oracle_optimum() {
        let inst = fixtures::f1();
        let start = build_initial(&inst, 1).unwrap();
        let mut cfg = AlnsConfig::new(inst.spray_count());
        cfg.ls_budget = Duration::from_secs(1);
        let result = run_alns(&inst, &start, &cfg, ModelVariant::Model1).unwrap();
        let optimum = brute_force_optimum(&inst, ModelVariant::Model1).unwrap();
        let f_opt = evaluate(&inst, &optimum, ModelVariant::Model1);
        assert!(
            (result.best_objective - f_opt).abs() < 1e-9,
            "ALNS {} vs oracle {}",
            result.best_objective,
            f_opt
        );
    }

    #[test]
    fn infeasible_start_is_an_error() {
        let inst = fixtures::f1();
        let start = build_initial(&inst, 1).unwrap();
        let mut tight = inst.clone();
        tight.horizon = 1.0;
        let cfg = AlnsConfig::new(6);
        assert!(matches!(
            run_alns(&tight, &start, &cfg, ModelVariant::Model1),
            Err(AlnsError::InfeasibleStart(_))
        ));
    }
}
