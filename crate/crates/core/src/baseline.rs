//! The route-first cluster-second field practice: capacitated routes sized to
//! the sprayer tank, chained into sprayer tours with refills at the
//! junctions, tanker visits ordered by estimated service end.

use thiserror::Error;

use crate::construction::two_opt;
use crate::instance::Instance;
use crate::schedule::{
    self, check_feasible, refills_from_set, ScheduleError, Solution, SprayerRoute,
};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("more sprayers ({sprayers}) than capacitated routes ({routes})")]
    TooFewRoutes { sprayers: usize, routes: usize },
    #[error("baseline solution infeasible: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

/// Clarke-Wright savings routes with vehicle capacity `Qs`, each polished
/// with 2-opt. Deterministic: savings ties break on the node pair.
pub fn cvrp_routes(inst: &Instance) -> Vec<Vec<usize>> {
    let n = inst.spray_count();
    let mut route_of: Vec<usize> = (0..=n).collect();
    let mut routes: Vec<Option<Vec<usize>>> = (0..=n).map(|i| Some(vec![i])).collect();
    let mut load: Vec<f64> = (0..=n).map(|i| inst.nodes[i].demand).collect();

    let mut savings: Vec<(f64, usize, usize)> = Vec::new();
    for i in 1..=n {
        for j in (i + 1)..=n {
            let value = inst.travel(0, i) + inst.travel(0, j) - inst.travel(i, j);
            savings.push((value, i, j));
        }
    }
    savings.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });

    for (_, i, j) in savings {
        let ri = route_of[i];
        let rj = route_of[j];
        if ri == rj {
            continue;
        }
        let (Some(route_i), Some(route_j)) = (routes[ri].as_ref(), routes[rj].as_ref()) else {
            continue;
        };
        if load[ri] + load[rj] > inst.sprayer_capacity {
            continue;
        }
        // merge only across route endpoints, orienting both routes so that
        // i ends the first and j starts the second
        let i_first = route_i.first() == Some(&i);
        let i_last = route_i.last() == Some(&i);
        let j_first = route_j.first() == Some(&j);
        let j_last = route_j.last() == Some(&j);
        if !(i_first || i_last) || !(j_first || j_last) {
            continue;
        }
        let mut left = routes[ri].take().unwrap();
        let mut right = routes[rj].take().unwrap();
        if i_first && !i_last {
            left.reverse();
        }
        if j_last && !j_first {
            right.reverse();
        }
        left.extend(right);
        for &node in &left {
            route_of[node] = ri;
        }
        load[ri] += load[rj];
        routes[ri] = Some(left);
    }

    let mut out: Vec<Vec<usize>> = routes
        .into_iter()
        .skip(1)
        .flatten()
        .filter(|r| !r.is_empty())
        .collect();
    for route in &mut out {
        two_opt(inst, route);
    }
    out.sort_by_key(|r| r[0]);
    out
}

/// Chains capacitated routes into `numSp` sprayer tours, round-robin, each
/// sprayer taking the unassigned route with the nearest endpoint (routes are
/// reversed as needed). Every junction between consecutive segments becomes a
/// forced refill.
pub fn chain_routes(
    inst: &Instance,
    mut segments: Vec<Vec<usize>>,
    num_sprayers: usize,
) -> Result<(Vec<SprayerRoute>, Vec<bool>), BaselineError> {
    if segments.len() < num_sprayers {
        return Err(BaselineError::TooFewRoutes {
            sprayers: num_sprayers,
            routes: segments.len(),
        });
    }
    let mut tours: Vec<Vec<usize>> = vec![Vec::new(); num_sprayers];
    let mut refill = vec![false; inst.nodes.len()];
    let mut sprayer = 0usize;
    while !segments.is_empty() {
        let tail = tours[sprayer].last().copied().unwrap_or(0);
        let mut pick = (0usize, false, f64::INFINITY);
        for (ix, segment) in segments.iter().enumerate() {
            let head_dist = inst.travel(tail, segment[0]);
            if head_dist < pick.2 {
                pick = (ix, false, head_dist);
            }
            let back_dist = inst.travel(tail, *segment.last().unwrap());
            if back_dist < pick.2 {
                pick = (ix, true, back_dist);
            }
        }
        let mut segment = segments.remove(pick.0);
        if pick.1 {
            segment.reverse();
        }
        if let Some(&junction) = tours[sprayer].last() {
            refill[junction] = true;
        }
        tours[sprayer].extend(segment);
        sprayer = (sprayer + 1) % num_sprayers;
    }
    let routes = tours
        .into_iter()
        .enumerate()
        .map(|(sprayer, nodes)| SprayerRoute { sprayer, nodes })
        .collect();
    Ok((routes, refill))
}

/// Full two-stage baseline: capacitated routes, chaining with junction
/// refills, tanker sequencing by estimated service end, synchronization.
pub fn run_baseline(inst: &Instance) -> Result<Solution, BaselineError> {
    let segments = cvrp_routes(inst);
    let (routes, refill_set) = chain_routes(inst, segments, inst.num_sprayers)?;
    let refills = refills_from_set(inst, &routes, &refill_set)?;
    let rf = schedule::order_refill_list(inst, &routes, &refills);
    let plan = schedule::build_tanker_plan(inst, &rf, &refills)?;
    let solution = schedule::synchronize(inst, &routes, &refills, &plan);
    let violations = check_feasible(inst, &solution);
    if !violations.is_empty() {
        return Err(BaselineError::Infeasible(
            violations
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("; "),
        ));
    }
    Ok(solution)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::instance::{generate_instance, GeneratorConfig, Node};
    use crate::milp::{build_model, validate_solution};
    use crate::schedule::ModelVariant;

    /// Five well-separated groups of four unit-demand nodes: capacity 8 with
    /// demand 2 forces exactly five routes of four nodes.
    fn five_cluster_instance() -> Instance {
        let mut nodes = vec![Node { id: 0, x: 0.0, y: 0.0, demand: 0.0, service: 0.0 }];
        let centers = [(10.0, 0.0), (0.0, 10.0), (-10.0, 0.0), (0.0, -10.0), (7.0, 7.0)];
        let offsets = [(0.0, 0.0), (0.5, 0.0), (0.0, 0.5), (0.5, 0.5)];
        let mut id = 1;
        for (cx, cy) in centers {
            for (dx, dy) in offsets {
                nodes.push(Node {
                    id,
                    x: cx + dx,
                    y: cy + dy,
                    demand: 2.0,
                    service: 1.0,
                });
                id += 1;
            }
        }
        Instance::new(nodes, 2, 8.0, 30.0, 0.5, 1.0, 1000.0, 1.0).unwrap()
    }

    #[test]
    fn savings_routes_respect_capacity() {
        let inst = generate_instance(&GeneratorConfig::new(30, 2, 6)).unwrap();
        let routes = cvrp_routes(&inst);
        for route in &routes {
            let load: f64 = route.iter().map(|&n| inst.nodes[n].demand).sum();
            assert!(load <= inst.sprayer_capacity + 1e-9);
        }
        let served: usize = routes.iter().map(|r| r.len()).sum();
        assert_eq!(served, 30);
    }

    #[test]
    fn clustered_instance_yields_five_routes_of_four() {
        let inst = five_cluster_instance();
        let routes = cvrp_routes(&inst);
        assert_eq!(routes.len(), 5);
        for route in &routes {
            assert_eq!(route.len(), 4);
        }
    }

    #[test]
    fn single_node_is_a_single_route() {
        let inst = generate_instance(&GeneratorConfig::new(1, 1, 2)).unwrap();
        let routes = cvrp_routes(&inst);
        assert_eq!(routes, vec![vec![1]]);
    }

    #[test]
    fn chaining_five_routes_onto_two_sprayers() {
        let inst = five_cluster_instance();
        let segments = cvrp_routes(&inst);
        let (routes, refill) = chain_routes(&inst, segments, 2).unwrap();
        let sizes: Vec<usize> = routes.iter().map(|r| r.nodes.len()).collect();
        // tours of 3 and 2 segments of four nodes each
        assert_eq!(sizes.iter().sum::<usize>(), 20);
        assert!(sizes.contains(&12) && sizes.contains(&8));
        // refill count = segments - sprayers
        assert_eq!(refill.iter().filter(|&&r| r).count(), 3);
        // junctions are segment-final nodes inside a tour, never tour ends
        for route in &routes {
            assert!(!refill[*route.nodes.last().unwrap()]);
        }
    }

    #[test]
    fn chaining_degenerates_without_spare_routes() {
        let inst = five_cluster_instance();
        let segments = cvrp_routes(&inst);
        let (_, refill) = chain_routes(&inst, segments.clone(), 5).unwrap();
        assert_eq!(refill.iter().filter(|&&r| r).count(), 0);
        assert!(chain_routes(&inst, segments, 6).is_err());
    }

    #[test]
    fn baseline_is_feasible_and_certified() {
        let inst = generate_instance(&GeneratorConfig::new(30, 2, 4)).unwrap();
        let sol = run_baseline(&inst).unwrap();
        assert!(check_feasible(&inst, &sol).is_empty());
        let cs = build_model(&inst, ModelVariant::Model1);
        let cert = validate_solution(&inst, &cs, &sol).unwrap();
        assert!(
            cert.is_clean(),
            "violations: {:?}",
            cert.violations.iter().map(|v| &v.row).collect::<Vec<_>>()
        );
        assert!(sol.objective.waiting >= 0.0);
    }

    #[test]
    fn segment_demand_between_refills_fits_the_tank() {
        let inst = generate_instance(&GeneratorConfig::new(40, 3, 9)).unwrap();
        let sol = run_baseline(&inst).unwrap();
        for route in &sol.routes {
            let mut segment_demand = 0.0;
            for &node in &route.nodes {
                segment_demand += inst.nodes[node].demand;
                assert!(segment_demand <= inst.sprayer_capacity + 1e-9);
                if sol.timeline[node].refilled {
                    segment_demand = 0.0;
                }
            }
        }
    }

    #[test]
    fn f1_baseline_runs() {
        let inst = fixtures::f1();
        let sol = run_baseline(&inst).unwrap();
        assert!(check_feasible(&inst, &sol).is_empty());
    }
}
