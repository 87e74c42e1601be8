//! Timetable engine: refill derivation, tanker trips, synchronization and
//! objective evaluation over fixed sprayer routes.
//!
//! Everything here is deterministic and pure. Routes go in, a fully timed
//! [`Solution`] comes out; the same inputs always produce the same timetable.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::Instance;

/// Objective variants.
///
/// - `Model1`: sprayer travel + waiting + refill time
/// - `Model2`: latest sprayer depot return (makespan)
/// - `Model3`: sprayer travel only
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelVariant {
    Model1,
    Model2,
    Model3,
}

impl ModelVariant {
    pub fn from_index(ix: u8) -> Option<ModelVariant> {
        match ix {
            1 => Some(ModelVariant::Model1),
            2 => Some(ModelVariant::Model2),
            3 => Some(ModelVariant::Model3),
            _ => None,
        }
    }
}

impl std::fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelVariant::Model1 => write!(f, "Model1"),
            ModelVariant::Model2 => write!(f, "Model2"),
            ModelVariant::Model3 => write!(f, "Model3"),
        }
    }
}

/// Ordered visit sequence of one sprayer; depot start and end are implicit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SprayerRoute {
    pub sprayer: usize,
    pub nodes: Vec<usize>,
}

/// Refill decisions along fixed routes, indexed by node id.
#[derive(Debug, Clone, PartialEq)]
pub struct Refills {
    pub refilled: Vec<bool>,
    pub quantity: Vec<f64>,
    /// Sprayer tank level on arrival at each node.
    pub level: Vec<f64>,
}

impl Refills {
    pub fn refill_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.refilled
            .iter()
            .enumerate()
            .filter_map(|(node, &r)| r.then_some(node))
    }

    pub fn count(&self) -> usize {
        self.refilled.iter().filter(|&&r| r).count()
    }
}

/// Tanker stop sequence per trip, before timing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TankerPlan {
    pub trips: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TankerStop {
    pub node: usize,
    /// Tanker arrival time.
    #[serde(rename = "theta")]
    pub arrival: f64,
    /// Refill start time, `max(arrival, sprayer service end)`.
    #[serde(rename = "w")]
    pub start: f64,
    /// Tanker tank level on arrival.
    #[serde(rename = "h")]
    pub tank: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TankerTrip {
    pub departure: f64,
    #[serde(rename = "return")]
    pub return_time: f64,
    pub stops: Vec<TankerStop>,
}

/// Per spray node timing and tank record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeTiming {
    pub node: usize,
    /// Sprayer arrival time (spraying starts on arrival).
    #[serde(rename = "y")]
    pub arrival: f64,
    /// Sprayer waiting time for the tanker.
    #[serde(rename = "m")]
    pub wait: f64,
    /// Refill quantity.
    #[serde(rename = "v")]
    pub quantity: f64,
    #[serde(rename = "delta")]
    pub refilled: bool,
    /// Sprayer tank level on arrival.
    #[serde(rename = "l")]
    pub level: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub routing: f64,
    pub waiting: f64,
    pub refill: f64,
    pub makespan: f64,
}

/// A fully synchronized solution: routes, per-node timetable, tanker trips
/// and objective components.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub routes: Vec<SprayerRoute>,
    /// Indexed by node id; the depot entry is a zero placeholder.
    pub timeline: Vec<NodeTiming>,
    pub trips: Vec<TankerTrip>,
    pub objective: Objective,
}

#[derive(Serialize, Deserialize)]
struct SolutionData {
    routes: Vec<Vec<usize>>,
    timeline: Vec<NodeTiming>,
    trips: Vec<TankerTrip>,
    objective: Objective,
}

impl Serialize for Solution {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        SolutionData {
            routes: self.routes.iter().map(|r| r.nodes.clone()).collect(),
            timeline: self.timeline.iter().skip(1).copied().collect(),
            trips: self.trips.clone(),
            objective: self.objective,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Solution {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let data = SolutionData::deserialize(deserializer)?;
        let mut timeline = vec![NodeTiming {
            node: 0,
            arrival: 0.0,
            wait: 0.0,
            quantity: 0.0,
            refilled: false,
            level: 0.0,
        }];
        timeline.extend(data.timeline);
        Ok(Solution {
            routes: data
                .routes
                .into_iter()
                .enumerate()
                .map(|(sprayer, nodes)| SprayerRoute { sprayer, nodes })
                .collect(),
            timeline,
            trips: data.trips,
            objective: data.objective,
        })
    }
}

impl Solution {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("solution serialization")
    }

    /// Depot return time of one sprayer; 0 for an empty route.
    pub fn sprayer_return(&self, inst: &Instance, sprayer: usize) -> f64 {
        let route = &self.routes[sprayer].nodes;
        match route.last() {
            None => 0.0,
            Some(&last) => {
                let t = &self.timeline[last];
                let refill_pause = if t.refilled {
                    t.wait + inst.refill_duration
                } else {
                    0.0
                };
                t.arrival + inst.nodes[last].service + refill_pause + inst.travel(last, 0)
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("demand at node {node} exceeds sprayer capacity")]
    DemandExceedsCapacity { node: usize },
    #[error("refill set leaves the sprayer tank short at node {node}")]
    TankUnderflow { node: usize },
    #[error("tanker plan needs {used} trips, budget is {budget}")]
    TripBudgetExceeded { used: usize, budget: usize },
}

/// One feasibility violation found by [`check_feasible`].
#[derive(Debug, Clone, PartialEq)]
pub enum FeasibilityViolation {
    EmptyRoute { sprayer: usize },
    NodeUnserved { node: usize },
    NodeRepeated { node: usize },
    SprayerOverHorizon { sprayer: usize, return_time: f64 },
    TankerOverHorizon { trip: usize, return_time: f64 },
    TripBudgetExceeded { used: usize, budget: usize },
    TankShort { node: usize, level: f64 },
    TankOverCapacity { node: usize, level: f64 },
    RefillInconsistent { node: usize },
    TankerShort { trip: usize, node: usize },
}

impl std::fmt::Display for FeasibilityViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        use FeasibilityViolation::*;
        match self {
            EmptyRoute { sprayer } => write!(f, "sprayer {sprayer} has an empty route"),
            NodeUnserved { node } => write!(f, "node {node} appears in no route"),
            NodeRepeated { node } => write!(f, "node {node} appears more than once"),
            SprayerOverHorizon { sprayer, return_time } => {
                write!(f, "sprayer {sprayer} exceeds tMax (returns at {return_time:.3})")
            }
            TankerOverHorizon { trip, return_time } => {
                write!(f, "tanker trip {trip} exceeds tMax (returns at {return_time:.3})")
            }
            TripBudgetExceeded { used, budget } => {
                write!(f, "trip budget exceeded: {used} trips > K = {budget}")
            }
            TankShort { node, level } => {
                write!(f, "sprayer tank short at node {node} (level {level:.3})")
            }
            TankOverCapacity { node, level } => {
                write!(f, "sprayer tank above capacity at node {node} (level {level:.3})")
            }
            RefillInconsistent { node } => {
                write!(f, "refill flag/quantity inconsistent at node {node}")
            }
            TankerShort { trip, node } => {
                write!(f, "tanker short of fertilizer at trip {trip}, node {node}")
            }
        }
    }
}

const EPS: f64 = 1e-9;

/// Walks fixed routes with an explicit refill set: records tank levels and
/// fill-to-full quantities, failing if the set leaves a node unservable.
pub fn refills_from_set(
    inst: &Instance,
    routes: &[SprayerRoute],
    refill_set: &[bool],
) -> Result<Refills, ScheduleError> {
    let count = inst.nodes.len();
    let mut refills = Refills {
        refilled: vec![false; count],
        quantity: vec![0.0; count],
        level: vec![0.0; count],
    };
    for route in routes {
        let mut tank = inst.sprayer_capacity;
        for &node in &route.nodes {
            let demand = inst.nodes[node].demand;
            if demand > inst.sprayer_capacity + EPS {
                return Err(ScheduleError::DemandExceedsCapacity { node });
            }
            refills.level[node] = tank;
            if tank < demand - EPS {
                return Err(ScheduleError::TankUnderflow { node });
            }
            tank -= demand;
            if refill_set[node] {
                let quantity = inst.sprayer_capacity - tank;
                refills.refilled[node] = true;
                refills.quantity[node] = quantity;
                tank = inst.sprayer_capacity;
            }
        }
    }
    Ok(refills)
}

/// Greedy refill derivation: leave the depot full and refill at a node only
/// when the remainder would not cover the next node's demand. The final node
/// of a route never hosts a refill.
pub fn derive_refills(inst: &Instance, routes: &[SprayerRoute]) -> Result<Refills, ScheduleError> {
    let count = inst.nodes.len();
    let mut set = vec![false; count];
    for route in routes {
        let mut tank = inst.sprayer_capacity;
        for (ix, &node) in route.nodes.iter().enumerate() {
            let demand = inst.nodes[node].demand;
            if demand > inst.sprayer_capacity + EPS {
                return Err(ScheduleError::DemandExceedsCapacity { node });
            }
            tank -= demand;
            if let Some(&next) = route.nodes.get(ix + 1) {
                if tank < inst.nodes[next].demand {
                    set[node] = true;
                    tank = inst.sprayer_capacity;
                }
            }
        }
    }
    refills_from_set(inst, routes, &set)
}

/// Zero-wait timetable estimate: arrival and service-end times assuming the
/// tanker is always ready, refill pauses included.
pub struct ZeroWaitTimes {
    /// Estimated service end per node id.
    pub service_end: Vec<f64>,
    /// Estimated depot return per route, in input order.
    pub route_return: Vec<f64>,
}

pub fn zero_wait_times(inst: &Instance, routes: &[SprayerRoute], refills: &Refills) -> ZeroWaitTimes {
    let mut service_end = vec![0.0; inst.nodes.len()];
    let mut route_return = vec![0.0; routes.len()];
    for (route_ix, route) in routes.iter().enumerate() {
        let mut clock = 0.0;
        let mut last = 0usize;
        for &node in &route.nodes {
            let arrival = clock + inst.travel(last, node);
            let end = arrival + inst.nodes[node].service;
            service_end[node] = end;
            clock = end;
            if refills.refilled[node] {
                clock += inst.refill_duration;
            }
            last = node;
        }
        route_return[route_ix] = clock + inst.travel(last, 0);
    }
    ZeroWaitTimes {
        service_end,
        route_return,
    }
}

/// Orders the refill nodes by estimated (zero-wait) service end, ties broken
/// by sprayer id then node id.
pub fn order_refill_list(
    inst: &Instance,
    routes: &[SprayerRoute],
    refills: &Refills,
) -> Vec<usize> {
    let estimates = zero_wait_times(inst, routes, refills);
    let mut owner = vec![0usize; inst.nodes.len()];
    for route in routes {
        for &node in &route.nodes {
            owner[node] = route.sprayer;
        }
    }
    let mut rf: Vec<usize> = refills.refill_nodes().collect();
    rf.sort_by(|&a, &b| {
        estimates.service_end[a]
            .partial_cmp(&estimates.service_end[b])
            .unwrap()
            .then(owner[a].cmp(&owner[b]))
            .then(a.cmp(&b))
    });
    rf
}

/// Groups the ordered refill list into tanker trips: a trip closes when the
/// remaining tank cannot cover the next stop, and the tanker reloads at the
/// depot before the next trip.
pub fn build_tanker_plan(
    inst: &Instance,
    rf: &[usize],
    refills: &Refills,
) -> Result<TankerPlan, ScheduleError> {
    let budget = inst.min_trips().max_trips;
    let mut trips: Vec<Vec<usize>> = Vec::new();
    let mut tank = 0.0;
    for &node in rf {
        let needed = refills.quantity[node];
        if trips.is_empty() || needed > tank + EPS {
            trips.push(Vec::new());
            tank = inst.tanker_capacity;
        }
        trips.last_mut().unwrap().push(node);
        tank -= needed;
    }
    if trips.len() > budget {
        return Err(ScheduleError::TripBudgetExceeded {
            used: trips.len(),
            budget,
        });
    }
    Ok(TankerPlan { trips })
}

struct Cursor {
    pos: usize,
    clock: f64,
    last: usize,
}

/// Single forward pass over the tanker stops producing the synchronized
/// timetable. Refilling starts at `max(tanker arrival, sprayer service end)`;
/// the shortfall on the sprayer side is charged as waiting, tanker idle time
/// is free. Within each sprayer the stop order must follow the route order.
pub fn synchronize(
    inst: &Instance,
    routes: &[SprayerRoute],
    refills: &Refills,
    plan: &TankerPlan,
) -> Solution {
    let count = inst.nodes.len();
    let mut timeline: Vec<NodeTiming> = (0..count)
        .map(|node| NodeTiming {
            node,
            arrival: 0.0,
            wait: 0.0,
            quantity: refills.quantity[node],
            refilled: refills.refilled[node],
            level: refills.level[node],
        })
        .collect();

    let mut owner = vec![usize::MAX; count];
    for (route_ix, route) in routes.iter().enumerate() {
        for &node in &route.nodes {
            owner[node] = route_ix;
        }
    }
    let mut cursors: Vec<Cursor> = routes
        .iter()
        .map(|_| Cursor {
            pos: 0,
            clock: 0.0,
            last: 0,
        })
        .collect();

    // Advance a sprayer through its route up to and including `stop`,
    // returning the service end there. Intermediate nodes never host refills.
    let advance = |cursor: &mut Cursor,
                   route: &SprayerRoute,
                   timeline: &mut Vec<NodeTiming>,
                   stop: usize|
     -> f64 {
        loop {
            let node = route.nodes[cursor.pos];
            let arrival = cursor.clock + inst.travel(cursor.last, node);
            timeline[node].arrival = arrival;
            let end = arrival + inst.nodes[node].service;
            cursor.pos += 1;
            cursor.last = node;
            if node == stop {
                return end;
            }
            debug_assert!(!refills.refilled[node], "refill stop visited out of order");
            cursor.clock = end;
        }
    };

    let mut trips = Vec::with_capacity(plan.trips.len());
    let mut previous_return = 0.0;
    for (trip_ix, stops) in plan.trips.iter().enumerate() {
        let departure = if trip_ix == 0 {
            0.0
        } else {
            previous_return + inst.reload_duration
        };
        let mut chain = departure;
        let mut location = 0usize;
        let mut tank = inst.tanker_capacity;
        let mut timed_stops = Vec::with_capacity(stops.len());
        for &node in stops {
            let arrival = chain + inst.travel(location, node);
            let route_ix = owner[node];
            let service_end = advance(&mut cursors[route_ix], &routes[route_ix], &mut timeline, node);
            let start = arrival.max(service_end);
            timeline[node].wait = (arrival - service_end).max(0.0);
            timed_stops.push(TankerStop {
                node,
                arrival,
                start,
                tank,
            });
            tank -= refills.quantity[node];
            cursors[route_ix].clock = start + inst.refill_duration;
            chain = start + inst.refill_duration;
            location = node;
        }
        let return_time = chain + inst.travel(location, 0);
        previous_return = return_time;
        trips.push(TankerTrip {
            departure,
            return_time,
            stops: timed_stops,
        });
    }

    // Flush every sprayer to its route end and collect depot returns.
    let mut makespan = 0.0f64;
    let mut routing = 0.0;
    for (route_ix, route) in routes.iter().enumerate() {
        let cursor = &mut cursors[route_ix];
        while cursor.pos < route.nodes.len() {
            let node = route.nodes[cursor.pos];
            debug_assert!(!refills.refilled[node], "refill stop missing from plan");
            let arrival = cursor.clock + inst.travel(cursor.last, node);
            timeline[node].arrival = arrival;
            cursor.clock = arrival + inst.nodes[node].service;
            cursor.last = node;
            cursor.pos += 1;
        }
        if !route.nodes.is_empty() {
            makespan = makespan.max(cursor.clock + inst.travel(cursor.last, 0));
        }
        let mut last = 0usize;
        for &node in &route.nodes {
            routing += inst.travel(last, node);
            last = node;
        }
        if !route.nodes.is_empty() {
            routing += inst.travel(last, 0);
        }
    }

    let waiting = timeline.iter().map(|t| t.wait).sum();
    let refill = inst.refill_duration * refills.count() as f64;
    Solution {
        routes: routes.to_vec(),
        timeline,
        trips,
        objective: Objective {
            routing,
            waiting,
            refill,
            makespan,
        },
    }
}

/// Full pipeline over fixed routes: greedy refills, refill ordering, trip
/// construction and synchronization.
pub fn schedule_routes(inst: &Instance, routes: &[SprayerRoute]) -> Result<Solution, ScheduleError> {
    let refills = derive_refills(inst, routes)?;
    let rf = order_refill_list(inst, routes, &refills);
    let plan = build_tanker_plan(inst, &rf, &refills)?;
    Ok(synchronize(inst, routes, &refills, &plan))
}

/// Checks horizon, trip-budget, tank and partition invariants of a
/// synchronized solution.
pub fn check_feasible(inst: &Instance, sol: &Solution) -> Vec<FeasibilityViolation> {
    let mut out = Vec::new();
    let count = inst.nodes.len();

    let mut seen = vec![0usize; count];
    for route in &sol.routes {
        if route.nodes.is_empty() {
            out.push(FeasibilityViolation::EmptyRoute {
                sprayer: route.sprayer,
            });
        }
        for &node in &route.nodes {
            seen[node] += 1;
        }
    }
    for node in 1..count {
        match seen[node] {
            0 => out.push(FeasibilityViolation::NodeUnserved { node }),
            1 => {}
            _ => out.push(FeasibilityViolation::NodeRepeated { node }),
        }
    }

    for route in &sol.routes {
        if route.nodes.is_empty() {
            continue;
        }
        let return_time = sol.sprayer_return(inst, route.sprayer);
        if return_time > inst.horizon + EPS {
            out.push(FeasibilityViolation::SprayerOverHorizon {
                sprayer: route.sprayer,
                return_time,
            });
        }
        for &node in &route.nodes {
            let t = &sol.timeline[node];
            if t.level < inst.nodes[node].demand - EPS {
                out.push(FeasibilityViolation::TankShort {
                    node,
                    level: t.level,
                });
            }
            if t.level > inst.sprayer_capacity + EPS {
                out.push(FeasibilityViolation::TankOverCapacity {
                    node,
                    level: t.level,
                });
            }
            let consistent = if t.refilled {
                t.quantity > EPS && t.quantity <= inst.sprayer_capacity + EPS
            } else {
                t.quantity.abs() <= EPS && t.wait.abs() <= EPS
            };
            if !consistent {
                out.push(FeasibilityViolation::RefillInconsistent { node });
            }
        }
    }

    let budget = inst.min_trips().max_trips;
    if sol.trips.len() > budget {
        out.push(FeasibilityViolation::TripBudgetExceeded {
            used: sol.trips.len(),
            budget,
        });
    }
    for (trip_ix, trip) in sol.trips.iter().enumerate() {
        if trip.return_time > inst.horizon + EPS {
            out.push(FeasibilityViolation::TankerOverHorizon {
                trip: trip_ix,
                return_time: trip.return_time,
            });
        }
        let mut tank = inst.tanker_capacity;
        for stop in &trip.stops {
            if (stop.tank - tank).abs() > EPS || tank < sol.timeline[stop.node].quantity - EPS {
                out.push(FeasibilityViolation::TankerShort {
                    trip: trip_ix,
                    node: stop.node,
                });
            }
            tank -= sol.timeline[stop.node].quantity;
        }
    }
    out
}

/// Objective value of a synchronized solution under the chosen variant.
pub fn evaluate(inst: &Instance, sol: &Solution, variant: ModelVariant) -> f64 {
    let _ = inst;
    match variant {
        ModelVariant::Model1 => {
            sol.objective.routing + sol.objective.waiting + sol.objective.refill
        }
        ModelVariant::Model2 => sol.objective.makespan,
        ModelVariant::Model3 => sol.objective.routing,
    }
}
