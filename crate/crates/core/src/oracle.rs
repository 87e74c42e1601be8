//! Ground truth: brute-force optima for tiny instances and the fixed-routes
//! subproblem optimizer used as the intensification step.

use std::time::{Duration, Instant};

use thiserror::Error;

use crate::instance::Instance;
use crate::schedule::{
    self, build_tanker_plan, check_feasible, evaluate, refills_from_set, synchronize,
    ModelVariant, Solution, SprayerRoute,
};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("brute force limited to n <= 9 and at most 2 sprayers (got n = {n}, sprayers = {sprayers})")]
    ScaleGuard { n: usize, sprayers: usize },
    #[error("no feasible solution exists for this instance")]
    Infeasible,
}

/// Upper bound on the exhaustively enumerated (refill subset, stop order)
/// states before the subproblem optimizer falls back to local search.
const EXHAUSTIVE_STATE_LIMIT: f64 = 1e6;

fn route_travel(inst: &Instance, nodes: &[usize]) -> f64 {
    if nodes.is_empty() {
        return 0.0;
    }
    let mut total = inst.travel(0, nodes[0]);
    for pair in nodes.windows(2) {
        total += inst.travel(pair[0], pair[1]);
    }
    total + inst.travel(*nodes.last().unwrap(), 0)
}

/// Evaluates one fixed-routes configuration: an explicit refill set plus a
/// tanker stop order (already consistent with per-route order), greedy trip
/// split. Returns the synchronized solution when feasible.
fn eval_config(
    inst: &Instance,
    routes: &[SprayerRoute],
    set: &[bool],
    order: &[usize],
    variant: ModelVariant,
) -> Option<(Solution, f64)> {
    let refills = refills_from_set(inst, routes, set).ok()?;
    let plan = build_tanker_plan(inst, order, &refills).ok()?;
    let sol = synchronize(inst, routes, &refills, &plan);
    if !check_feasible(inst, &sol).is_empty() {
        return None;
    }
    let objective = evaluate(inst, &sol, variant);
    Some((sol, objective))
}

/// Evaluates a configuration with explicit trip boundaries instead of the
/// greedy split. `starts` lists the order indices that open a new trip.
fn eval_config_with_boundaries(
    inst: &Instance,
    routes: &[SprayerRoute],
    set: &[bool],
    order: &[usize],
    starts: &[usize],
    variant: ModelVariant,
) -> Option<(Solution, f64)> {
    let refills = refills_from_set(inst, routes, set).ok()?;
    let mut trips: Vec<Vec<usize>> = Vec::new();
    for (ix, &node) in order.iter().enumerate() {
        if starts.contains(&ix) || trips.is_empty() {
            trips.push(Vec::new());
        }
        trips.last_mut().unwrap().push(node);
    }
    let budget = inst.min_trips().max_trips;
    if trips.len() > budget {
        return None;
    }
    for trip in &trips {
        let volume: f64 = trip.iter().map(|&n| refills.quantity[n]).sum();
        if volume > inst.tanker_capacity + 1e-9 {
            return None;
        }
    }
    let plan = schedule::TankerPlan { trips };
    let sol = synchronize(inst, routes, &refills, &plan);
    if !check_feasible(inst, &sol).is_empty() {
        return None;
    }
    let objective = evaluate(inst, &sol, variant);
    Some((sol, objective))
}

/// Number of (subset, interleaving) states for the exhaustive subproblem:
/// sum over subset-size vectors of `prod C(c_i, k_i) * (sum k)! / prod k_i!`.
fn state_count(candidate_counts: &[usize]) -> f64 {
    // polynomial DP over coefficients a[k] = sum of prod C(c_i,k_i)/k_i!
    let mut coef = vec![1.0f64];
    for &c in candidate_counts {
        let mut term = Vec::with_capacity(c + 1);
        let mut binom = 1.0f64;
        let mut fact = 1.0f64;
        for k in 0..=c {
            if k > 0 {
                binom = binom * (c - k + 1) as f64 / k as f64;
                fact *= k as f64;
            }
            term.push(binom / fact);
        }
        let mut next = vec![0.0f64; coef.len() + c];
        for (i, &a) in coef.iter().enumerate() {
            for (j, &b) in term.iter().enumerate() {
                next[i + j] += a * b;
            }
        }
        coef = next;
    }
    let mut total = 0.0;
    let mut fact = 1.0f64;
    for (k, &a) in coef.iter().enumerate() {
        if k > 0 {
            fact *= k as f64;
        }
        total += fact * a;
        if total > 1e18 {
            return f64::INFINITY;
        }
    }
    total
}

struct Exhaustive<'a> {
    inst: &'a Instance,
    routes: &'a [SprayerRoute],
    variant: ModelVariant,
    deadline: Option<Instant>,
    evals: usize,
    timed_out: bool,
    best: Option<(Solution, f64)>,
}

impl<'a> Exhaustive<'a> {
    fn consider(&mut self, set: &[bool], order: &[usize]) {
        self.evals += 1;
        if self.evals % 256 == 0 {
            if let Some(deadline) = self.deadline {
                if Instant::now() >= deadline {
                    self.timed_out = true;
                }
            }
        }
        if let Some((sol, obj)) = eval_config(self.inst, self.routes, set, order, self.variant) {
            if self.best.as_ref().map_or(true, |(_, b)| obj < *b - 1e-12) {
                self.best = Some((sol, obj));
            }
        }
    }

    fn orders(&mut self, set: &[bool], lists: &[Vec<usize>], fronts: &mut Vec<usize>, order: &mut Vec<usize>) {
        if self.timed_out {
            return;
        }
        if order.len() == lists.iter().map(|l| l.len()).sum::<usize>() {
            self.consider(set, order);
            return;
        }
        for route_ix in 0..lists.len() {
            if fronts[route_ix] < lists[route_ix].len() {
                order.push(lists[route_ix][fronts[route_ix]]);
                fronts[route_ix] += 1;
                self.orders(set, lists, fronts, order);
                fronts[route_ix] -= 1;
                order.pop();
            }
        }
    }

    fn run(&mut self, candidates: &[Vec<usize>]) {
        let route_count = candidates.len();
        let mut masks = vec![0usize; route_count];
        loop {
            if self.timed_out {
                return;
            }
            let mut set = vec![false; self.inst.nodes.len()];
            let mut lists: Vec<Vec<usize>> = Vec::with_capacity(route_count);
            for (route_ix, cands) in candidates.iter().enumerate() {
                let mut list = Vec::new();
                for (bit, &node) in cands.iter().enumerate() {
                    if masks[route_ix] & (1 << bit) != 0 {
                        set[node] = true;
                        list.push(node);
                    }
                }
                lists.push(list);
            }
            if refills_from_set(self.inst, self.routes, &set).is_ok() {
                let mut fronts = vec![0usize; route_count];
                let mut order = Vec::new();
                self.orders(&set, &lists, &mut fronts, &mut order);
            }

            // odometer over per-route masks
            let mut carry = 0;
            loop {
                if carry == route_count {
                    return;
                }
                masks[carry] += 1;
                if masks[carry] < (1usize << candidates[carry].len()) {
                    break;
                }
                masks[carry] = 0;
                carry += 1;
            }
        }
    }
}

fn refill_candidates(routes: &[SprayerRoute]) -> Vec<Vec<usize>> {
    routes
        .iter()
        .map(|r| {
            if r.nodes.len() < 2 {
                Vec::new()
            } else {
                r.nodes[..r.nodes.len() - 1].to_vec()
            }
        })
        .collect()
}

/// Exhaustive search over the full fixed-routes space (refill subsets and
/// tanker stop interleavings, greedy trip split). Returns the best feasible
/// configuration, if any.
fn exhaustive_best(
    inst: &Instance,
    routes: &[SprayerRoute],
    variant: ModelVariant,
    deadline: Option<Instant>,
    seed_best: Option<(Solution, f64)>,
) -> Option<(Solution, f64)> {
    let candidates = refill_candidates(routes);
    let mut search = Exhaustive {
        inst,
        routes,
        variant,
        deadline,
        evals: 0,
        timed_out: false,
        best: seed_best,
    };
    search.run(&candidates);
    search.best
}

#[derive(Clone)]
struct SubState {
    set: Vec<bool>,
    order: Vec<usize>,
    trip_starts: Vec<usize>,
}

impl SubState {
    fn from_solution(sol: &Solution) -> SubState {
        let set: Vec<bool> = sol.timeline.iter().map(|t| t.refilled).collect();
        let mut order = Vec::new();
        let mut trip_starts = Vec::new();
        for trip in &sol.trips {
            trip_starts.push(order.len());
            for stop in &trip.stops {
                order.push(stop.node);
            }
        }
        SubState {
            set,
            order,
            trip_starts,
        }
    }
}

/// Greedy trip starts for a stop order: open a new trip exactly when the
/// remaining tank cannot cover the next stop.
fn greedy_starts(inst: &Instance, routes: &[SprayerRoute], set: &[bool], order: &[usize]) -> Option<Vec<usize>> {
    let refills = refills_from_set(inst, routes, set).ok()?;
    let mut starts = Vec::new();
    let mut tank = 0.0;
    for (ix, &node) in order.iter().enumerate() {
        let needed = refills.quantity[node];
        if ix == 0 || needed > tank + 1e-9 {
            starts.push(ix);
            tank = inst.tanker_capacity;
        }
        tank -= needed;
    }
    Some(starts)
}

/// Best-improvement local search over {toggle refill node, swap adjacent
/// tanker stops, shift trip boundary} until no move improves or the deadline
/// passes.
fn local_search_best(
    inst: &Instance,
    routes: &[SprayerRoute],
    variant: ModelVariant,
    deadline: Instant,
    start: (Solution, f64),
) -> (Solution, f64) {
    let mut owner = vec![usize::MAX; inst.nodes.len()];
    let mut position = vec![usize::MAX; inst.nodes.len()];
    for (route_ix, route) in routes.iter().enumerate() {
        for (pos, &node) in route.nodes.iter().enumerate() {
            owner[node] = route_ix;
            position[node] = pos;
        }
    }
    let candidates = refill_candidates(routes);

    let mut state = SubState::from_solution(&start.0);
    let mut best = start;

    loop {
        if Instant::now() >= deadline {
            return best;
        }
        let mut improving: Option<(SubState, Solution, f64)> = None;
        let consider = |cand: SubState, improving: &mut Option<(SubState, Solution, f64)>| {
            if let Some((sol, obj)) = eval_config_with_boundaries(
                inst,
                routes,
                &cand.set,
                &cand.order,
                &cand.trip_starts,
                variant,
            ) {
                let target = improving.as_ref().map_or(best.1, |(_, _, o)| *o);
                if obj < target - 1e-12 {
                    *improving = Some((cand, sol, obj));
                }
            }
        };

        // toggle a refill on/off at any non-final route node
        for cands in &candidates {
            for &node in cands {
                let mut set = state.set.clone();
                set[node] = !set[node];
                let mut order: Vec<usize> = state.order.iter().copied().filter(|&n| n != node).collect();
                if set[node] {
                    // earliest slot that keeps the owner's stops in route order
                    let mut slot = order.len();
                    for (ix, &other) in order.iter().enumerate() {
                        if owner[other] == owner[node] && position[other] > position[node] {
                            slot = ix;
                            break;
                        }
                    }
                    order.insert(slot, node);
                }
                let Some(trip_starts) = greedy_starts(inst, routes, &set, &order) else {
                    continue;
                };
                consider(
                    SubState {
                        set,
                        order,
                        trip_starts,
                    },
                    &mut improving,
                );
            }
        }

        // swap adjacent stops of different sprayers
        for ix in 0..state.order.len().saturating_sub(1) {
            let a = state.order[ix];
            let b = state.order[ix + 1];
            if owner[a] == owner[b] {
                continue;
            }
            let mut order = state.order.clone();
            order.swap(ix, ix + 1);
            let Some(trip_starts) = greedy_starts(inst, routes, &state.set, &order) else {
                continue;
            };
            consider(
                SubState {
                    set: state.set.clone(),
                    order,
                    trip_starts,
                },
                &mut improving,
            );
        }

        // shift, insert or drop a trip boundary
        let stops = state.order.len();
        for boundary_ix in 1..state.trip_starts.len() {
            let at = state.trip_starts[boundary_ix];
            for shifted in [at.wrapping_sub(1), at + 1] {
                if shifted == 0 || shifted >= stops {
                    continue;
                }
                let mut trip_starts = state.trip_starts.clone();
                trip_starts[boundary_ix] = shifted;
                trip_starts.sort_unstable();
                trip_starts.dedup();
                consider(
                    SubState {
                        set: state.set.clone(),
                        order: state.order.clone(),
                        trip_starts,
                    },
                    &mut improving,
                );
            }
            let mut trip_starts = state.trip_starts.clone();
            trip_starts.remove(boundary_ix);
            consider(
                SubState {
                    set: state.set.clone(),
                    order: state.order.clone(),
                    trip_starts,
                },
                &mut improving,
            );
        }
        for cut in 1..stops {
            if state.trip_starts.contains(&cut) {
                continue;
            }
            let mut trip_starts = state.trip_starts.clone();
            trip_starts.push(cut);
            trip_starts.sort_unstable();
            consider(
                SubState {
                    set: state.set.clone(),
                    order: state.order.clone(),
                    trip_starts,
                },
                &mut improving,
            );
        }

        match improving {
            Some((next_state, sol, obj)) => {
                state = next_state;
                best = (sol, obj);
            }
            None => return best,
        }
    }
}

/// Fixed-routes subproblem: holding the sprayer routes of `sol` fixed,
/// searches refill placements, tanker stop orders and trip boundaries for
/// the minimum objective. Exhaustive when the space is small, otherwise
/// best-improvement local search within the budget. Never returns a worse
/// solution than the input.
pub fn optimize_fixed_routes(
    inst: &Instance,
    sol: &Solution,
    budget: Duration,
    variant: ModelVariant,
) -> Solution {
    if budget.is_zero() {
        return sol.clone();
    }
    let deadline = Instant::now() + budget;
    let input_obj = evaluate(inst, sol, variant);
    let incumbent = (sol.clone(), input_obj);

    let candidate_counts: Vec<usize> = refill_candidates(&sol.routes)
        .iter()
        .map(|c| c.len())
        .collect();
    let result = if state_count(&candidate_counts) <= EXHAUSTIVE_STATE_LIMIT {
        exhaustive_best(inst, &sol.routes, variant, Some(deadline), Some(incumbent))
    } else {
        Some(local_search_best(inst, &sol.routes, variant, deadline, incumbent))
    };
    match result {
        Some((best, obj)) if obj <= input_obj => best,
        _ => sol.clone(),
    }
}

struct BruteForce<'a> {
    inst: &'a Instance,
    variant: ModelVariant,
    best: Option<(Solution, f64)>,
    halve_symmetry: bool,
}

impl<'a> BruteForce<'a> {
    fn route_bound(&self, nodes: &[usize], complete: bool) -> (f64, f64) {
        // (travel bound, zero-wait duration bound) for one route
        let inst = self.inst;
        if nodes.is_empty() {
            return (0.0, 0.0);
        }
        let mut travel = inst.travel(0, nodes[0]);
        let mut service = 0.0;
        for (ix, &node) in nodes.iter().enumerate() {
            if ix > 0 {
                travel += inst.travel(nodes[ix - 1], node);
            }
            service += inst.nodes[node].service;
        }
        let tail = inst.travel(*nodes.last().unwrap(), 0);
        let travel_total = travel + tail;
        let _ = complete;
        (travel_total, travel_total + service)
    }

    fn lower_bound(&self, routes: &[Vec<usize>]) -> f64 {
        match self.variant {
            ModelVariant::Model1 | ModelVariant::Model3 => routes
                .iter()
                .map(|r| self.route_bound(r, false).0)
                .sum(),
            ModelVariant::Model2 => routes
                .iter()
                .map(|r| self.route_bound(r, false).1)
                .fold(0.0, f64::max),
        }
    }

    fn consider_routes(&mut self, sequences: &[Vec<usize>]) {
        if sequences.iter().any(|r| r.is_empty()) {
            return;
        }
        let routes: Vec<SprayerRoute> = sequences
            .iter()
            .enumerate()
            .map(|(sprayer, nodes)| SprayerRoute {
                sprayer,
                nodes: nodes.clone(),
            })
            .collect();

        // Cheap lower bound for the whole route set.
        let inst = self.inst;
        let travel: f64 = routes.iter().map(|r| route_travel(inst, &r.nodes)).sum();
        let greedy = schedule::derive_refills(inst, &routes).ok();
        let bound = match (&self.variant, &greedy) {
            (ModelVariant::Model1, Some(refills)) => {
                travel + inst.refill_duration * refills.count() as f64
            }
            (ModelVariant::Model1, None) => travel,
            (ModelVariant::Model3, _) => travel,
            (ModelVariant::Model2, Some(refills)) => {
                let times = schedule::zero_wait_times(inst, &routes, refills);
                times.route_return.iter().fold(0.0f64, |a, &b| a.max(b))
            }
            (ModelVariant::Model2, None) => 0.0,
        };
        if let Some((_, best_obj)) = &self.best {
            if bound >= *best_obj - 1e-12 {
                return;
            }
        }

        // Fast path: the greedy pipeline achieving its own lower bound is
        // optimal for this route set.
        if let Ok(sol) = schedule::schedule_routes(inst, &routes) {
            if check_feasible(inst, &sol).is_empty() {
                let obj = evaluate(inst, &sol, self.variant);
                let optimal_here = matches!(self.variant, ModelVariant::Model1 | ModelVariant::Model3)
                    && (obj - bound).abs() <= 1e-12;
                if optimal_here {
                    if self.best.as_ref().map_or(true, |(_, b)| obj < *b - 1e-12) {
                        self.best = Some((sol, obj));
                    }
                    return;
                }
            }
        }

        let seed = self.best.take();
        self.best = exhaustive_best(inst, &routes, self.variant, None, seed);
    }

    fn extend(&mut self, routes: &mut Vec<Vec<usize>>, active: usize, unassigned: &mut Vec<usize>) {
        if self.lower_bound(routes) >= self.best.as_ref().map_or(f64::INFINITY, |(_, b)| *b) {
            return;
        }
        if unassigned.is_empty() {
            if active == routes.len() - 1 && !routes[active].is_empty() {
                self.consider_routes(routes);
            }
            return;
        }
        // close the active route first so ties resolve lexicographically
        if !routes[active].is_empty() && active + 1 < routes.len() {
            // symmetry halving for two interchangeable sprayers: the first
            // route keeps the lowest-numbered spray node
            let keep = !self.halve_symmetry || active > 0 || routes[0].contains(&1);
            if keep {
                self.extend(routes, active + 1, unassigned);
            }
        }
        for ix in 0..unassigned.len() {
            let node = unassigned.remove(ix);
            routes[active].push(node);
            self.extend(routes, active, unassigned);
            routes[active].pop();
            unassigned.insert(ix, node);
        }
    }
}

/// Enumerates every ordered partition of the spray nodes into `numSp`
/// nonempty routes together with every tank-feasible refill placement and
/// tanker stop order, returning the global optimum for the variant. Guarded
/// to `n <= 9`, `numSp <= 2`; ties resolve lexicographically on the route
/// sequences.
pub fn brute_force_optimum(
    inst: &Instance,
    variant: ModelVariant,
) -> Result<Solution, OracleError> {
    let n = inst.spray_count();
    if n > 9 || inst.num_sprayers > 2 {
        return Err(OracleError::ScaleGuard {
            n,
            sprayers: inst.num_sprayers,
        });
    }
    let mut search = BruteForce {
        inst,
        variant,
        best: None,
        halve_symmetry: inst.num_sprayers == 2,
    };
    let mut routes = vec![Vec::new(); inst.num_sprayers];
    let mut unassigned: Vec<usize> = inst.spray_nodes().collect();
    search.extend(&mut routes, 0, &mut unassigned);
    search.best.map(|(sol, _)| sol).ok_or(OracleError::Infeasible)
}
