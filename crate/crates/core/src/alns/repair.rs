//! Repair operators: greedy best-position insertion and regret-2 insertion.
//!
//! Insertion costs are full objective evaluations of the re-synchronized
//! partial solution. A node with no feasible position aborts the repair; the
//! caller treats the iteration as rejected.

use crate::instance::Instance;
use crate::schedule::{
    self, check_feasible, evaluate, FeasibilityViolation, ModelVariant, Solution, SprayerRoute,
};

use super::bank::RepairOp;

/// Horizon/tank/trip feasibility for a partially repaired solution; unserved
/// nodes and empty routes are expected mid-repair.
fn partial_feasible(inst: &Instance, sol: &Solution) -> bool {
    check_feasible(inst, sol).iter().all(|v| {
        matches!(
            v,
            FeasibilityViolation::NodeUnserved { .. } | FeasibilityViolation::EmptyRoute { .. }
        )
    })
}

fn evaluate_insertion(
    inst: &Instance,
    routes: &[SprayerRoute],
    variant: ModelVariant,
) -> Option<(Solution, f64)> {
    let sol = schedule::schedule_routes(inst, routes).ok()?;
    if !partial_feasible(inst, &sol) {
        return None;
    }
    let objective = evaluate(inst, &sol, variant);
    Some((sol, objective))
}

struct InsertionScan {
    best: Option<(f64, usize, usize, Solution)>,
    second_cost: f64,
}

/// Scans every position of every route for `node`; first-found wins ties.
fn scan_positions(
    inst: &Instance,
    routes: &[SprayerRoute],
    node: usize,
    variant: ModelVariant,
) -> InsertionScan {
    let mut scan = InsertionScan {
        best: None,
        second_cost: f64::INFINITY,
    };
    let mut work = routes.to_vec();
    for route_ix in 0..routes.len() {
        for pos in 0..=routes[route_ix].nodes.len() {
            work[route_ix].nodes.insert(pos, node);
            if let Some((sol, cost)) = evaluate_insertion(inst, &work, variant) {
                let improves = match &scan.best {
                    Some((best_cost, _, _, _)) => cost < *best_cost - 1e-12,
                    None => true,
                };
                if improves {
                    if let Some((prev, _, _, _)) = &scan.best {
                        scan.second_cost = *prev;
                    }
                    scan.best = Some((cost, route_ix, pos, sol));
                } else if cost < scan.second_cost {
                    scan.second_cost = cost;
                }
            }
            work[route_ix].nodes.remove(pos);
        }
    }
    scan
}

fn greedy_repair(
    inst: &Instance,
    mut routes: Vec<SprayerRoute>,
    removed: &[usize],
    variant: ModelVariant,
) -> Option<Solution> {
    let mut last: Option<Solution> = None;
    for &node in removed {
        let scan = scan_positions(inst, &routes, node, variant);
        let (_, route_ix, pos, sol) = scan.best?;
        routes[route_ix].nodes.insert(pos, node);
        last = Some(sol);
    }
    match last {
        Some(sol) => Some(sol),
        None => schedule::schedule_routes(inst, &routes).ok(),
    }
}

/// Regret-2: repeatedly inserts the node with the largest gap between its
/// best and second-best insertion cost; a node with a single feasible
/// position has infinite regret and goes first. Ties go to the lower id.
fn regret_repair(
    inst: &Instance,
    mut routes: Vec<SprayerRoute>,
    removed: &[usize],
    variant: ModelVariant,
) -> Option<Solution> {
    let mut pending: Vec<usize> = removed.to_vec();
    let mut last: Option<Solution> = None;
    while !pending.is_empty() {
        let mut choice: Option<(f64, usize, usize, usize, Solution)> = None;
        for &node in &pending {
            let scan = scan_positions(inst, &routes, node, variant);
            let (cost, route_ix, pos, sol) = scan.best?;
            let regret = if scan.second_cost.is_finite() {
                scan.second_cost - cost
            } else {
                f64::INFINITY
            };
            let better = match &choice {
                None => true,
                Some((r, n, _, _, _)) => {
                    let tie = regret == *r || (regret - *r).abs() <= 1e-12;
                    (regret.is_infinite() && r.is_finite())
                        || (!tie && regret > *r)
                        || (tie && node < *n)
                }
            };
            if better {
                choice = Some((regret, node, route_ix, pos, sol));
            }
        }
        let (_, node, route_ix, pos, sol) = choice?;
        routes[route_ix].nodes.insert(pos, node);
        pending.retain(|&n| n != node);
        last = Some(sol);
    }
    match last {
        Some(sol) => Some(sol),
        None => schedule::schedule_routes(inst, &routes).ok(),
    }
}

/// Reinserts the removal list into the partial routes. Returns `None` when
/// some node has no feasible position (the whole iteration is rejected).
pub fn apply_repair(
    op: RepairOp,
    inst: &Instance,
    routes: Vec<SprayerRoute>,
    removed: &[usize],
    variant: ModelVariant,
) -> Option<Solution> {
    match op {
        RepairOp::Greedy => greedy_repair(inst, routes, removed, variant),
        RepairOp::Regret => regret_repair(inst, routes, removed, variant),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::schedule::schedule_routes;

    #[test]
    fn empty_removal_list_returns_input_solution() {
        let inst = fixtures::f1();
        let routes = vec![SprayerRoute { sprayer: 0, nodes: vec![1, 2, 3, 4, 5, 6] }];
        let sol = schedule_routes(&inst, &routes).unwrap();
        let repaired =
            apply_repair(RepairOp::Greedy, &inst, routes, &[], ModelVariant::Model1).unwrap();
        assert_eq!(repaired, sol);
    }

    #[test]
    fn greedy_matches_position_brute_force() {
        let inst = fixtures::f1();
        // remove node 3 from the perimeter and let greedy put it back
        let partial = vec![SprayerRoute { sprayer: 0, nodes: vec![1, 2, 4, 5, 6] }];
        let repaired = apply_repair(
            RepairOp::Greedy,
            &inst,
            partial.clone(),
            &[3],
            ModelVariant::Model1,
        )
        .unwrap();

        // oracle: evaluate every insertion position directly
        let mut best = f64::INFINITY;
        for pos in 0..=5 {
            let mut nodes = partial[0].nodes.clone();
            nodes.insert(pos, 3);
            let routes = vec![SprayerRoute { sprayer: 0, nodes }];
            let sol = schedule_routes(&inst, &routes).unwrap();
            best = best.min(evaluate(&inst, &sol, ModelVariant::Model1));
        }
        assert!((evaluate(&inst, &repaired, ModelVariant::Model1) - best).abs() < 1e-9);
    }

    #[test]
    fn repaired_solution_is_feasible_partition() {
        let inst = fixtures::two_sprayer_wait();
        let partial = vec![
            SprayerRoute { sprayer: 0, nodes: vec![1] },
            SprayerRoute { sprayer: 1, nodes: vec![3] },
        ];
        let repaired = apply_repair(
            RepairOp::Regret,
            &inst,
            partial,
            &[2, 4],
            ModelVariant::Model1,
        )
        .unwrap();
        assert!(check_feasible(&inst, &repaired).is_empty());
    }

    #[test]
    fn single_node_regret_equals_greedy() {
        let inst = fixtures::f1();
        let partial = vec![SprayerRoute { sprayer: 0, nodes: vec![1, 2, 4, 5, 6] }];
        let greedy = apply_repair(
            RepairOp::Greedy,
            &inst,
            partial.clone(),
            &[3],
            ModelVariant::Model1,
        )
        .unwrap();
        let regret =
            apply_repair(RepairOp::Regret, &inst, partial, &[3], ModelVariant::Model1).unwrap();
        assert_eq!(greedy, regret);
    }

    #[test]
    fn infeasible_horizon_aborts_repair() {
        let mut inst = fixtures::f1();
        inst.horizon = 3.0;
        let partial = vec![SprayerRoute { sprayer: 0, nodes: vec![1] }];
        let out = apply_repair(
            RepairOp::Greedy,
            &inst,
            partial,
            &[2, 3, 4, 5, 6],
            ModelVariant::Model1,
        );
        assert!(out.is_none());
    }
}
