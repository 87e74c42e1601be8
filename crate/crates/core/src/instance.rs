//! Problem instances: spray nodes, fleet parameters, generation and JSON I/O.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A location in the field. Node 0 is the depot; nodes `1..=n` are spray nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    /// Fertilizer demand; 0 for the depot.
    #[serde(rename = "q")]
    pub demand: f64,
    /// Spraying duration; 0 for the depot.
    #[serde(rename = "s")]
    pub service: f64,
}

/// Maximum number of tanker trips made available to the models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TripBudget {
    pub max_trips: usize,
}

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("schema error in {path}: {source}")]
    Schema {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid instance: {0}")]
    Invalid(String),
    #[error("unknown node id {0}")]
    UnknownNode(usize),
    #[error("node count must be at least 1")]
    EmptyInstance,
}

/// One invariant violation found by [`Instance::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Serialize, Deserialize)]
struct InstanceData {
    nodes: Vec<Node>,
    #[serde(rename = "numSp")]
    num_sprayers: usize,
    #[serde(rename = "Qs")]
    sprayer_capacity: f64,
    #[serde(rename = "Qt")]
    tanker_capacity: f64,
    #[serde(rename = "xi")]
    refill_duration: f64,
    #[serde(rename = "gamma")]
    reload_duration: f64,
    #[serde(rename = "tMax")]
    horizon: f64,
    speed: f64,
}

/// An immutable problem instance with a cached travel-time matrix.
///
/// Travel times are Euclidean distances divided by `speed`, so with the
/// default speed of 1 time and distance coincide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstanceData", into = "InstanceData")]
pub struct Instance {
    pub nodes: Vec<Node>,
    pub num_sprayers: usize,
    pub sprayer_capacity: f64,
    pub tanker_capacity: f64,
    pub refill_duration: f64,
    pub reload_duration: f64,
    pub horizon: f64,
    pub speed: f64,
    travel: Vec<f64>,
}

impl TryFrom<InstanceData> for Instance {
    type Error = InstanceError;

    fn try_from(d: InstanceData) -> Result<Self, Self::Error> {
        Instance::new(
            d.nodes,
            d.num_sprayers,
            d.sprayer_capacity,
            d.tanker_capacity,
            d.refill_duration,
            d.reload_duration,
            d.horizon,
            d.speed,
        )
    }
}

impl From<Instance> for InstanceData {
    fn from(inst: Instance) -> Self {
        InstanceData {
            nodes: inst.nodes,
            num_sprayers: inst.num_sprayers,
            sprayer_capacity: inst.sprayer_capacity,
            tanker_capacity: inst.tanker_capacity,
            refill_duration: inst.refill_duration,
            reload_duration: inst.reload_duration,
            horizon: inst.horizon,
            speed: inst.speed,
        }
    }
}

impl Instance {
    /// Builds an instance and its travel matrix. Fails only on structural
    /// impossibilities (no nodes, nonpositive speed); all other invariants are
    /// reported by [`Instance::validate`] instead.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        nodes: Vec<Node>,
        num_sprayers: usize,
        sprayer_capacity: f64,
        tanker_capacity: f64,
        refill_duration: f64,
        reload_duration: f64,
        horizon: f64,
        speed: f64,
    ) -> Result<Self, InstanceError> {
        if nodes.is_empty() {
            return Err(InstanceError::EmptyInstance);
        }
        if !(speed > 0.0) {
            return Err(InstanceError::Invalid("speed must be positive".into()));
        }
        let count = nodes.len();
        let mut travel = vec![0.0; count * count];
        for i in 0..count {
            for j in (i + 1)..count {
                let dx = nodes[i].x - nodes[j].x;
                let dy = nodes[i].y - nodes[j].y;
                let t = (dx * dx + dy * dy).sqrt() / speed;
                travel[i * count + j] = t;
                travel[j * count + i] = t;
            }
        }
        Ok(Instance {
            nodes,
            num_sprayers,
            sprayer_capacity,
            tanker_capacity,
            refill_duration,
            reload_duration,
            horizon,
            speed,
            travel,
        })
    }

    /// Number of spray nodes (the depot excluded).
    pub fn spray_count(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Ids of all spray nodes, `1..=n`.
    pub fn spray_nodes(&self) -> impl Iterator<Item = usize> {
        1..self.nodes.len()
    }

    /// Travel time between two nodes; symmetric, zero on the diagonal.
    #[inline]
    pub fn travel(&self, i: usize, j: usize) -> f64 {
        self.travel[i * self.nodes.len() + j]
    }

    /// Checked variant of [`Instance::travel`].
    pub fn travel_time(&self, i: usize, j: usize) -> Result<f64, InstanceError> {
        let count = self.nodes.len();
        if i >= count {
            return Err(InstanceError::UnknownNode(i));
        }
        if j >= count {
            return Err(InstanceError::UnknownNode(j));
        }
        Ok(self.travel(i, j))
    }

    /// Total fertilizer demand over all spray nodes.
    pub fn total_demand(&self) -> f64 {
        self.nodes.iter().skip(1).map(|n| n.demand).sum()
    }

    /// Trip budget `K = 2 * ceil(sum(q) / Qt)`.
    pub fn min_trips(&self) -> TripBudget {
        let max_trips = 2 * (self.total_demand() / self.tanker_capacity).ceil() as usize;
        TripBudget { max_trips }
    }

    /// Checks every instance invariant and returns all violations found.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut violation = |field: &str, message: String| {
            out.push(Violation {
                field: field.to_string(),
                message,
            });
        };
        let depot = &self.nodes[0];
        if depot.id != 0 {
            violation("nodes[0].id", "depot must have id 0".into());
        }
        if depot.demand != 0.0 {
            violation("nodes[0].q", "depot demand must be 0".into());
        }
        if depot.service != 0.0 {
            violation("nodes[0].s", "depot service must be 0".into());
        }
        for (pos, node) in self.nodes.iter().enumerate().skip(1) {
            if node.id != pos {
                violation(
                    &format!("nodes[{pos}].id"),
                    format!("expected id {pos}, found {}", node.id),
                );
            }
            if node.demand < 1.0 {
                violation(
                    &format!("nodes[{pos}].q"),
                    "spray node demand must be at least 1".into(),
                );
            }
            if node.service <= 0.0 {
                violation(
                    &format!("nodes[{pos}].s"),
                    "spray node service time must be positive".into(),
                );
            }
            if node.demand > self.sprayer_capacity {
                violation(
                    &format!("nodes[{pos}].q"),
                    "demand exceeds sprayer capacity".into(),
                );
            }
        }
        if self.tanker_capacity <= self.sprayer_capacity {
            violation("Qt", "Qt must exceed Qs".into());
        }
        if self.num_sprayers < 1 {
            violation("numSp", "at least one sprayer required".into());
        }
        if !(self.horizon > 0.0) {
            violation("tMax", "horizon must be positive".into());
        }
        if !(self.speed > 0.0) {
            violation("speed", "speed must be positive".into());
        }
        if self.refill_duration < 0.0 {
            violation("xi", "refill duration must be nonnegative".into());
        }
        if self.reload_duration < 0.0 {
            violation("gamma", "tanker reload duration must be nonnegative".into());
        }
        out
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Instance, InstanceError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| InstanceError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let inst: Instance =
            serde_json::from_str(&text).map_err(|source| InstanceError::Schema {
                path: path.display().to_string(),
                source,
            })?;
        Ok(inst)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<(), InstanceError> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("instance serialization");
        fs::write(path, text).map_err(|source| InstanceError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Parameters for random instance generation. Spray-node coordinates are
/// uniform on `[0, field_size]^2`, demands are integer uniform on `[2, 5]`
/// and service times scale linearly with demand.
#[derive(Debug, Clone)]
pub struct GeneratorConfig {
    pub n: usize,
    pub num_sprayers: usize,
    pub seed: u64,
    pub field_size: f64,
    pub service_factor: f64,
    pub sprayer_capacity: f64,
    pub tanker_capacity: f64,
    pub refill_duration: f64,
    pub reload_duration: f64,
    pub speed: f64,
    pub horizon: f64,
}

impl GeneratorConfig {
    pub fn new(n: usize, num_sprayers: usize, seed: u64) -> Self {
        GeneratorConfig {
            n,
            num_sprayers,
            seed,
            field_size: 3.0,
            service_factor: 0.5,
            sprayer_capacity: 25.0,
            tanker_capacity: 100.0,
            refill_duration: 0.5,
            reload_duration: 1.0,
            speed: 1.0,
            horizon: 480.0,
        }
    }
}

/// Deterministically generates an instance from a seeded generator. The depot
/// sits at the field center.
pub fn generate_instance(cfg: &GeneratorConfig) -> Result<Instance, InstanceError> {
    if cfg.n < 1 {
        return Err(InstanceError::EmptyInstance);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut nodes = Vec::with_capacity(cfg.n + 1);
    nodes.push(Node {
        id: 0,
        x: cfg.field_size / 2.0,
        y: cfg.field_size / 2.0,
        demand: 0.0,
        service: 0.0,
    });
    for id in 1..=cfg.n {
        let x = rng.random_range(0.0..cfg.field_size);
        let y = rng.random_range(0.0..cfg.field_size);
        let demand = rng.random_range(2..=5) as f64;
        nodes.push(Node {
            id,
            x,
            y,
            demand,
            service: demand * cfg.service_factor,
        });
    }
    Instance::new(
        nodes,
        cfg.num_sprayers,
        cfg.sprayer_capacity,
        cfg.tanker_capacity,
        cfg.refill_duration,
        cfg.reload_duration,
        cfg.horizon,
        cfg.speed,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_valid() -> Instance {
        let nodes = vec![
            Node { id: 0, x: 0.0, y: 0.0, demand: 0.0, service: 0.0 },
            Node { id: 1, x: 1.0, y: 0.0, demand: 2.0, service: 1.0 },
            Node { id: 2, x: 2.0, y: 0.0, demand: 2.0, service: 1.0 },
            Node { id: 3, x: 3.0, y: 0.0, demand: 2.0, service: 1.0 },
            Node { id: 4, x: 3.0, y: 1.0, demand: 2.0, service: 1.0 },
            Node { id: 5, x: 2.0, y: 1.0, demand: 2.0, service: 1.0 },
        ];
        Instance::new(nodes, 1, 5.0, 100.0, 0.5, 1.0, 100.0, 1.0).unwrap()
    }

    #[test]
    fn valid_instance_has_no_violations() {
        assert!(small_valid().validate().is_empty());
    }

    #[test]
    fn equal_capacities_flagged() {
        let mut inst = small_valid();
        inst.tanker_capacity = inst.sprayer_capacity;
        let violations = inst.validate();
        assert!(violations.iter().any(|v| v.field == "Qt" && v.message.contains("exceed Qs")));
    }

    #[test]
    fn oversized_demand_flagged() {
        let mut inst = small_valid();
        inst.nodes[3].demand = inst.sprayer_capacity + 1.0;
        let violations = inst.validate();
        assert!(violations
            .iter()
            .any(|v| v.field == "nodes[3].q" && v.message.contains("exceeds sprayer capacity")));
    }

    #[test]
    fn min_trips_examples() {
        let mut inst = small_valid();
        // sum q = 150, Qt = 100 -> K = 4
        inst.nodes[1].demand = 142.0;
        inst.sprayer_capacity = 150.0;
        inst.tanker_capacity = 100.0;
        assert_eq!(inst.min_trips().max_trips, 4);
        // boundary: sum q = 100, Qt = 100 -> K = 2
        inst.nodes[1].demand = 92.0;
        assert_eq!(inst.min_trips().max_trips, 2);
        // illustration scale: sum q = 12, Qt = 30 -> K = 2
        inst.nodes[1].demand = 4.0;
        inst.tanker_capacity = 30.0;
        assert_eq!(inst.min_trips().max_trips, 2);
    }

    #[test]
    fn travel_time_examples() {
        let nodes = vec![
            Node { id: 0, x: 0.0, y: 0.0, demand: 0.0, service: 0.0 },
            Node { id: 1, x: 3.0, y: 4.0, demand: 2.0, service: 1.0 },
            Node { id: 2, x: 1.0, y: 1.0, demand: 2.0, service: 1.0 },
        ];
        let inst = Instance::new(nodes.clone(), 1, 5.0, 10.0, 0.5, 1.0, 100.0, 1.0).unwrap();
        assert_eq!(inst.travel_time(0, 1).unwrap(), 5.0);
        assert_eq!(inst.travel_time(1, 1).unwrap(), 0.0);
        assert!(inst.travel_time(0, 9).is_err());

        let fast = Instance::new(nodes, 1, 5.0, 10.0, 0.5, 1.0, 100.0, 2.0).unwrap();
        assert!((fast.travel_time(0, 2).unwrap() - std::f64::consts::SQRT_2 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn generation_is_deterministic_and_valid() {
        let cfg = GeneratorConfig::new(30, 2, 7);
        let a = generate_instance(&cfg).unwrap();
        let b = generate_instance(&cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.validate().is_empty());
        assert_eq!(a.min_trips().max_trips % 2, 0);
        assert!(a.min_trips().max_trips >= 2);
    }

    #[test]
    fn generated_demands_in_paper_range() {
        let inst = generate_instance(&GeneratorConfig::new(50, 3, 1)).unwrap();
        for node in inst.nodes.iter().skip(1) {
            assert!([2.0, 3.0, 4.0, 5.0].contains(&node.demand));
            assert!((node.service - node.demand * 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_nodes_rejected() {
        assert!(generate_instance(&GeneratorConfig::new(0, 1, 1)).is_err());
    }

    #[test]
    fn json_round_trip() {
        let dir = std::env::temp_dir().join("synchro_instance_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("inst.json");
        let inst = generate_instance(&GeneratorConfig::new(12, 2, 3)).unwrap();
        inst.write_json(&path).unwrap();
        let back = Instance::read_json(&path).unwrap();
        assert_eq!(inst, back);
    }

    #[test]
    fn missing_field_names_it() {
        let text = r#"{"nodes":[{"id":0,"x":0.0,"y":0.0,"q":0.0,"s":0.0}],"numSp":1,"Qs":5.0,"xi":0.5,"gamma":1.0,"tMax":100.0,"speed":1.0}"#;
        let err = serde_json::from_str::<Instance>(text).unwrap_err();
        assert!(err.to_string().contains("Qt"), "error should name Qt: {err}");
    }

    #[test]
    fn negative_coordinates_accepted() {
        let nodes = vec![
            Node { id: 0, x: 0.0, y: 0.0, demand: 0.0, service: 0.0 },
            Node { id: 1, x: -1.5, y: -2.0, demand: 2.0, service: 1.0 },
        ];
        let inst = Instance::new(nodes, 1, 5.0, 10.0, 0.5, 1.0, 100.0, 1.0).unwrap();
        assert!(inst.validate().is_empty());
    }
}
