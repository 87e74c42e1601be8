//! Initial feasible solutions: k-means clustering, per-cluster TSP routing
//! and the busiest-route feasibility fix.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::instance::Instance;
use crate::schedule::{self, ScheduleError, Solution, SprayerRoute};

#[derive(Debug, Error)]
pub enum ConstructionError {
    #[error("k = {k} clusters requested for {nodes} spray nodes")]
    TooManyClusters { k: usize, nodes: usize },
    #[error("no feasible solution within the move budget: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

/// Assignment of spray nodes to `k` clusters plus the final centroids.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    /// Cluster index per node id; the depot entry is unused.
    pub assignment: Vec<usize>,
    pub centroids: Vec<(f64, f64)>,
}

fn sq_dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    let dx = a.0 - b.0;
    let dy = a.1 - b.1;
    dx * dx + dy * dy
}

/// Lloyd's iterations with farthest-point seeding. Empty clusters are
/// repaired by stealing the point farthest from its own centroid.
pub fn kmeans(
    inst: &Instance,
    k: usize,
    rng: &mut ChaCha8Rng,
    max_iter: usize,
) -> Result<Clustering, ConstructionError> {
    let points: Vec<(usize, (f64, f64))> = inst
        .spray_nodes()
        .map(|id| (id, (inst.nodes[id].x, inst.nodes[id].y)))
        .collect();
    if k == 0 || k > points.len() {
        return Err(ConstructionError::TooManyClusters {
            k,
            nodes: points.len(),
        });
    }

    // Farthest-point seeding: a random first center, then repeatedly the
    // point farthest from its nearest chosen center (ties to the lower id).
    let mut centroids: Vec<(f64, f64)> = Vec::with_capacity(k);
    let first = rng.random_range(0..points.len());
    centroids.push(points[first].1);
    while centroids.len() < k {
        let mut best = (0usize, -1.0f64);
        for (ix, &(_, p)) in points.iter().enumerate() {
            let near = centroids
                .iter()
                .map(|&c| sq_dist(p, c))
                .fold(f64::INFINITY, f64::min);
            if near > best.1 {
                best = (ix, near);
            }
        }
        centroids.push(points[best.0].1);
    }

    let mut assignment = vec![usize::MAX; inst.nodes.len()];
    for _ in 0..max_iter {
        let mut changed = false;
        for &(id, p) in &points {
            let mut cluster = 0;
            let mut dist = sq_dist(p, centroids[0]);
            for (cx, &c) in centroids.iter().enumerate().skip(1) {
                let d = sq_dist(p, c);
                if d < dist {
                    dist = d;
                    cluster = cx;
                }
            }
            if assignment[id] != cluster {
                assignment[id] = cluster;
                changed = true;
            }
        }

        // Repair empty clusters before recomputing centroids.
        loop {
            let mut sizes = vec![0usize; k];
            for &(id, _) in &points {
                sizes[assignment[id]] += 1;
            }
            let Some(empty) = sizes.iter().position(|&s| s == 0) else {
                break;
            };
            let mut donor = (usize::MAX, -1.0f64);
            for &(id, p) in &points {
                let c = assignment[id];
                if sizes[c] < 2 {
                    continue;
                }
                let d = sq_dist(p, centroids[c]);
                if d > donor.1 {
                    donor = (id, d);
                }
            }
            assignment[donor.0] = empty;
            changed = true;
        }

        let mut sums = vec![(0.0f64, 0.0f64, 0usize); k];
        for &(id, p) in &points {
            let c = assignment[id];
            sums[c].0 += p.0;
            sums[c].1 += p.1;
            sums[c].2 += 1;
        }
        for (c, sum) in sums.iter().enumerate() {
            centroids[c] = (sum.0 / sum.2 as f64, sum.1 / sum.2 as f64);
        }

        if !changed {
            break;
        }
    }

    Ok(Clustering {
        assignment,
        centroids,
    })
}

/// Within-cluster sum of squared distances.
pub fn clustering_cost(inst: &Instance, clustering: &Clustering) -> f64 {
    inst.spray_nodes()
        .map(|id| {
            let c = clustering.assignment[id];
            sq_dist(
                (inst.nodes[id].x, inst.nodes[id].y),
                clustering.centroids[c],
            )
        })
        .sum()
}

/// First-improvement 2-opt on a depot-anchored path, swept until no move
/// improves.
pub fn two_opt(inst: &Instance, nodes: &mut Vec<usize>) {
    let n = nodes.len();
    if n < 2 {
        return;
    }
    loop {
        let mut improved = false;
        for i in 0..n - 1 {
            for j in i + 1..n {
                let prev = if i == 0 { 0 } else { nodes[i - 1] };
                let next = if j == n - 1 { 0 } else { nodes[j + 1] };
                let delta = inst.travel(prev, nodes[j]) + inst.travel(nodes[i], next)
                    - inst.travel(prev, nodes[i])
                    - inst.travel(nodes[j], next);
                if delta < -1e-12 {
                    nodes[i..=j].reverse();
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
}

/// Nearest-neighbor tour from the depot over the given nodes, polished with
/// 2-opt. Ties go to the lower node id.
pub fn tsp_route(inst: &Instance, members: &[usize], sprayer: usize) -> SprayerRoute {
    let mut remaining: Vec<usize> = members.to_vec();
    remaining.sort_unstable();
    let mut nodes = Vec::with_capacity(remaining.len());
    let mut current = 0usize;
    while !remaining.is_empty() {
        let mut pick = 0usize;
        let mut best = f64::INFINITY;
        for (ix, &cand) in remaining.iter().enumerate() {
            let d = inst.travel(current, cand);
            if d < best {
                best = d;
                pick = ix;
            }
        }
        current = remaining.remove(pick);
        nodes.push(current);
    }
    two_opt(inst, &mut nodes);
    SprayerRoute { sprayer, nodes }
}

fn standalone_duration(inst: &Instance, route: &SprayerRoute) -> Result<f64, ScheduleError> {
    let routes = std::slice::from_ref(route);
    let refills = schedule::derive_refills(inst, routes)?;
    let times = schedule::zero_wait_times(inst, routes, &refills);
    Ok(times.route_return[0])
}

fn centroid_of(inst: &Instance, nodes: &[usize]) -> (f64, f64) {
    let mut x = 0.0;
    let mut y = 0.0;
    for &node in nodes {
        x += inst.nodes[node].x;
        y += inst.nodes[node].y;
    }
    let n = nodes.len() as f64;
    (x / n, y / n)
}

fn cheapest_insertion(inst: &Instance, nodes: &[usize], node: usize) -> usize {
    let mut best = (0usize, f64::INFINITY);
    for pos in 0..=nodes.len() {
        let prev = if pos == 0 { 0 } else { nodes[pos - 1] };
        let next = if pos == nodes.len() { 0 } else { nodes[pos] };
        let delta = inst.travel(prev, node) + inst.travel(node, next) - inst.travel(prev, next);
        if delta < best.1 {
            best = (pos, delta);
        }
    }
    best.0
}

/// Moves nodes out of horizon-violating routes until every route's
/// standalone (zero-wait) duration fits in `tMax`. Each move sends the node
/// nearest to another route's centroid into that route at its cheapest
/// insertion position, re-optimizing both routes.
pub fn fix_feasibility(
    inst: &Instance,
    mut routes: Vec<SprayerRoute>,
) -> Result<Vec<SprayerRoute>, ConstructionError> {
    let budget = 10 * inst.spray_count();
    for _ in 0..=budget {
        let mut durations = Vec::with_capacity(routes.len());
        for route in &routes {
            durations.push(standalone_duration(inst, route)?);
        }
        let Some(worst) = (0..routes.len())
            .filter(|&r| durations[r] > inst.horizon + 1e-9)
            .max_by(|&a, &b| durations[a].partial_cmp(&durations[b]).unwrap())
        else {
            return Ok(routes);
        };
        if routes.len() < 2 {
            return Err(ConstructionError::Infeasible(format!(
                "single route exceeds tMax ({:.3} > {:.3})",
                durations[worst], inst.horizon
            )));
        }

        let mut best: Option<(usize, usize, f64)> = None;
        for (target_ix, target) in routes.iter().enumerate() {
            if target_ix == worst {
                continue;
            }
            // an empty route is seeded from the depot
            let centroid = if target.nodes.is_empty() {
                (inst.nodes[0].x, inst.nodes[0].y)
            } else {
                centroid_of(inst, &target.nodes)
            };
            for &node in &routes[worst].nodes {
                let d = sq_dist((inst.nodes[node].x, inst.nodes[node].y), centroid);
                if best.map_or(true, |(_, _, cur)| d < cur) {
                    best = Some((node, target_ix, d));
                }
            }
        }
        let Some((node, target_ix, _)) = best else {
            return Err(ConstructionError::Infeasible(
                "no receiving route for overloaded nodes".into(),
            ));
        };

        routes[worst].nodes.retain(|&n| n != node);
        let pos = cheapest_insertion(inst, &routes[target_ix].nodes, node);
        routes[target_ix].nodes.insert(pos, node);
        two_opt(inst, &mut routes[worst].nodes);
        two_opt(inst, &mut routes[target_ix].nodes);
        if routes[worst].nodes.is_empty() {
            return Err(ConstructionError::Infeasible(
                "route emptied while fixing horizon violations".into(),
            ));
        }
    }
    Err(ConstructionError::Infeasible(
        "move budget exhausted".into(),
    ))
}

/// Cluster-first route-second construction: k-means into one cluster per
/// sprayer, per-cluster TSP, the horizon fix, then the full schedule
/// pipeline. The result always passes `check_feasible`.
pub fn build_initial(inst: &Instance, seed: u64) -> Result<Solution, ConstructionError> {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clustering = kmeans(inst, inst.num_sprayers, &mut rng, 100)?;
    let mut routes = Vec::with_capacity(inst.num_sprayers);
    for cluster in 0..inst.num_sprayers {
        let members: Vec<usize> = inst
            .spray_nodes()
            .filter(|&id| clustering.assignment[id] == cluster)
            .collect();
        routes.push(tsp_route(inst, &members, cluster));
    }
    let routes = fix_feasibility(inst, routes)?;
    let solution = schedule::schedule_routes(inst, &routes)?;
    let violations = schedule::check_feasible(inst, &solution);
    if !violations.is_empty() {
        return Err(ConstructionError::Infeasible(
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
    use crate::schedule::{check_feasible, evaluate, ModelVariant};
    use rand::SeedableRng;

    fn route_length(inst: &Instance, nodes: &[usize]) -> f64 {
        if nodes.is_empty() {
            return 0.0;
        }
        let mut total = inst.travel(0, nodes[0]);
        for pair in nodes.windows(2) {
            total += inst.travel(pair[0], pair[1]);
        }
        total + inst.travel(*nodes.last().unwrap(), 0)
    }

    #[test]
    fn kmeans_every_node_assigned_no_empty_cluster() {
        let inst = generate_instance(&GeneratorConfig::new(21, 2, 11)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let clustering = kmeans(&inst, 2, &mut rng, 100).unwrap();
        let mut sizes = [0usize; 2];
        for id in inst.spray_nodes() {
            sizes[clustering.assignment[id]] += 1;
        }
        assert!(sizes[0] > 0 && sizes[1] > 0);
        assert_eq!(sizes[0] + sizes[1], 21);
    }

    #[test]
    fn kmeans_k_equals_n_gives_singletons() {
        let inst = generate_instance(&GeneratorConfig::new(6, 1, 3)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let clustering = kmeans(&inst, 6, &mut rng, 100).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for id in inst.spray_nodes() {
            assert!(seen.insert(clustering.assignment[id]));
        }
    }

    #[test]
    fn kmeans_duplicate_points_single_cluster() {
        let nodes = vec![
            Node { id: 0, x: 0.0, y: 0.0, demand: 0.0, service: 0.0 },
            Node { id: 1, x: 1.5, y: 2.5, demand: 2.0, service: 1.0 },
            Node { id: 2, x: 1.5, y: 2.5, demand: 2.0, service: 1.0 },
        ];
        let inst = crate::Instance::new(nodes, 1, 5.0, 10.0, 0.5, 1.0, 100.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let clustering = kmeans(&inst, 1, &mut rng, 100).unwrap();
        assert_eq!(clustering.centroids[0], (1.5, 2.5));
    }

    #[test]
    fn kmeans_cost_non_increasing() {
        let inst = generate_instance(&GeneratorConfig::new(40, 3, 9)).unwrap();
        let mut previous = f64::INFINITY;
        for iters in 1..8 {
            let mut rng = ChaCha8Rng::seed_from_u64(17);
            let clustering = kmeans(&inst, 3, &mut rng, iters).unwrap();
            let cost = clustering_cost(&inst, &clustering);
            assert!(cost <= previous + 1e-9, "iter {iters}: {cost} > {previous}");
            previous = cost;
        }
    }

    #[test]
    fn kmeans_rejects_oversized_k() {
        let inst = generate_instance(&GeneratorConfig::new(4, 1, 3)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(kmeans(&inst, 5, &mut rng, 100).is_err());
    }

    #[test]
    fn tsp_collinear_nodes_in_order() {
        let nodes = vec![
            Node { id: 0, x: 0.0, y: 0.0, demand: 0.0, service: 0.0 },
            Node { id: 1, x: 1.0, y: 0.0, demand: 2.0, service: 1.0 },
            Node { id: 2, x: 2.0, y: 0.0, demand: 2.0, service: 1.0 },
            Node { id: 3, x: 3.0, y: 0.0, demand: 2.0, service: 1.0 },
        ];
        let inst = crate::Instance::new(nodes, 1, 10.0, 20.0, 0.5, 1.0, 100.0, 1.0).unwrap();
        let route = tsp_route(&inst, &[2, 3, 1], 0);
        assert_eq!(route.nodes, vec![1, 2, 3]);
    }

    #[test]
    fn tsp_single_node() {
        let inst = fixtures::f1();
        assert_eq!(tsp_route(&inst, &[4], 0).nodes, vec![4]);
    }

    #[test]
    fn tsp_f1_matches_permutation_brute_force() {
        let inst = fixtures::f1();
        let route = tsp_route(&inst, &[1, 2, 3, 4, 5, 6], 0);

        // independent oracle: best of all 720 permutations
        let mut ids = vec![1, 2, 3, 4, 5, 6];
        let mut best = f64::INFINITY;
        permute(&mut ids, 0, &mut |perm| {
            best = best.min(route_length(&inst, perm));
        });
        assert!((best - (6.0 + std::f64::consts::SQRT_2)).abs() < 1e-9);
        assert!((route_length(&inst, &route.nodes) - best).abs() < 1e-9);
        assert_eq!(route.nodes, vec![1, 2, 3, 4, 5, 6]);
    }

    fn permute(ids: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
        if k == ids.len() {
            visit(ids);
            return;
        }
        for i in k..ids.len() {
            ids.swap(k, i);
            permute(ids, k + 1, visit);
            ids.swap(k, i);
        }
    }

    #[test]
    fn two_opt_leaves_no_improving_move() {
        let inst = generate_instance(&GeneratorConfig::new(25, 1, 2)).unwrap();
        let route = tsp_route(&inst, &inst.spray_nodes().collect::<Vec<_>>(), 0);
        let base = route_length(&inst, &route.nodes);
        let n = route.nodes.len();
        for i in 0..n - 1 {
            for j in i + 1..n {
                let mut changed = route.nodes.clone();
                changed[i..=j].reverse();
                assert!(route_length(&inst, &changed) >= base - 1e-9);
            }
        }
    }

    #[test]
    fn fix_is_noop_when_fitting() {
        let inst = fixtures::f1();
        let routes = vec![SprayerRoute { sprayer: 0, nodes: vec![1, 2, 3, 4, 5, 6] }];
        let fixed = fix_feasibility(&inst, routes.clone()).unwrap();
        assert_eq!(fixed, routes);
    }

    #[test]
    fn fix_moves_load_off_the_busiest_route() {
        let mut inst = generate_instance(&GeneratorConfig::new(20, 2, 5)).unwrap();
        // initial lopsided split: one sprayer owns everything
        let all: Vec<usize> = inst.spray_nodes().collect();
        let routes = vec![
            tsp_route(&inst, &all, 0),
            SprayerRoute { sprayer: 1, nodes: vec![] },
        ];
        let full = standalone_duration(&inst, &routes[0]).unwrap();
        inst.horizon = full * 0.7;
        let fixed = fix_feasibility(&inst, routes);
        match fixed {
            Ok(fixed) => {
                for route in &fixed {
                    assert!(standalone_duration(&inst, route).unwrap() <= inst.horizon + 1e-9);
                    assert!(!route.nodes.is_empty());
                }
            }
            Err(err) => panic!("fix should succeed with two sprayers: {err}"),
        }
    }

    #[test]
    fn fix_single_sprayer_over_horizon_fails() {
        let mut inst = fixtures::f1();
        inst.horizon = 5.0;
        let routes = vec![SprayerRoute { sprayer: 0, nodes: vec![1, 2, 3, 4, 5, 6] }];
        assert!(matches!(
            fix_feasibility(&inst, routes),
            Err(ConstructionError::Infeasible(_))
        ));
    }

    #[test]
    fn initial_solution_on_f1_hits_the_perimeter() {
        let inst = fixtures::f1();
        let sol = build_initial(&inst, 7).unwrap();
        let objective = evaluate(&inst, &sol, ModelVariant::Model1);
        assert!((objective - (7.0 + std::f64::consts::SQRT_2)).abs() < 1e-9);
        assert!(check_feasible(&inst, &sol).is_empty());
    }

    #[test]
    fn initial_solution_feasible_and_deterministic() {
        let inst = generate_instance(&GeneratorConfig::new(30, 2, 7)).unwrap();
        let a = build_initial(&inst, 3).unwrap();
        let b = build_initial(&inst, 3).unwrap();
        assert_eq!(a, b);
        assert!(check_feasible(&inst, &a).is_empty());
    }
}
