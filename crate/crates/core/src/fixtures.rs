//! Small hand-checkable instances shared by the test suites and examples.

use crate::instance::{Instance, Node};

fn node(id: usize, x: f64, y: f64, demand: f64, service: f64) -> Node {
    Node {
        id,
        x,
        y,
        demand,
        service,
    }
}

/// Six nodes on a 3x1 perimeter, unit demands of 2 and a 5-unit tank: the
/// perimeter tour refills at nodes 2 and 4 with 4 units each.
pub fn f1() -> Instance {
    let nodes = vec![
        node(0, 0.0, 0.0, 0.0, 0.0),
        node(1, 1.0, 0.0, 2.0, 1.0),
        node(2, 2.0, 0.0, 2.0, 1.0),
        node(3, 3.0, 0.0, 2.0, 1.0),
        node(4, 3.0, 1.0, 2.0, 1.0),
        node(5, 2.0, 1.0, 2.0, 1.0),
        node(6, 1.0, 1.0, 2.0, 1.0),
    ];
    Instance::new(nodes, 1, 5.0, 100.0, 0.5, 1.0, 100.0, 1.0).unwrap()
}

/// Two sprayers whose refill requests end at 3.0 and 3.1 at nodes two miles
/// apart; serving the first on time makes the second wait 2.4.
pub fn two_sprayer_wait() -> Instance {
    let nodes = vec![
        node(0, 0.0, 0.0, 0.0, 0.0),
        node(1, 1.0, 0.0, 3.0, 2.0),
        node(2, 1.0, 1.0, 3.0, 1.0),
        node(3, 3.0, 0.0, 3.0, 0.1),
        node(4, 3.0, 1.0, 3.0, 1.0),
    ];
    Instance::new(nodes, 2, 4.0, 100.0, 0.5, 1.0, 100.0, 1.0).unwrap()
}

/// Two sprayers where the greedy refill placement forces 2.5 units of
/// waiting but moving the second sprayer's refill one node earlier removes
/// all waiting. Routes: sprayer 0 -> [1, 2], sprayer 1 -> [3, 4, 5].
pub fn intensify_gain() -> Instance {
    let nodes = vec![
        node(0, 0.0, 0.0, 0.0, 0.0),
        node(1, 2.0, 0.0, 3.0, 5.0),
        node(2, 2.0, 1.0, 3.0, 1.0),
        node(3, 4.0, 0.0, 2.0, 0.5),
        node(4, 5.0, 0.0, 2.0, 0.5),
        node(5, 6.0, 0.0, 2.0, 0.5),
    ];
    Instance::new(nodes, 2, 4.0, 100.0, 0.5, 1.0, 100.0, 1.0).unwrap()
}
