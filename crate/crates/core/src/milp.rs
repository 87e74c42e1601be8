//! Symbolic MILP: model construction, LP-format export/import and exact
//! validation of solutions against every constraint row.
//!
//! The builder emits one row per printed constraint family, with the print
//! defects normalized (index-set typos, the waiting-row activation term, the
//! per-trip tanker reload). Every normalization is recorded in a
//! machine-readable deviation log exported alongside the LP file.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::Instance;
use crate::schedule::{ModelVariant, Solution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Binary,
    Continuous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

impl Sense {
    fn token(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub name: String,
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// One normalization of the printed model, recorded for the export sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub id: String,
    pub description: String,
}

#[derive(Debug, Error)]
pub enum MilpError {
    #[error("solution cannot be mapped onto the model: {0}")]
    Unmappable(String),
    #[error("lp parse error: {0}")]
    Parse(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// The full symbolic model: variables, linear rows, objective and big-M
/// values, paired with the deviation log.
#[derive(Debug, Clone)]
pub struct ConstraintSystem {
    pub variant: ModelVariant,
    pub trips: usize,
    pub spray_count: usize,
    pub variables: Vec<Variable>,
    pub rows: Vec<Row>,
    pub objective: Vec<(usize, f64)>,
    pub big_m_time: f64,
    pub big_m_qty: f64,
    pub deviations: Vec<Deviation>,
    index: HashMap<String, usize>,
}

fn x_name(i: usize, j: usize) -> String {
    format!("x_{i}_{j}")
}
fn g_name(i: usize, j: usize, k: usize) -> String {
    format!("g_{i}_{j}_{k}")
}
fn delta_name(i: usize) -> String {
    format!("delta_{i}")
}
fn z_name(k: usize, r: usize) -> String {
    format!("z_{k}_{r}")
}
fn theta_name(i: usize, k: usize) -> String {
    format!("theta_{i}_{k}")
}
fn y_name(i: usize) -> String {
    format!("y_{i}")
}
fn a_name(i: usize) -> String {
    format!("a_{i}")
}
fn w_name(i: usize, k: usize) -> String {
    format!("w_{i}_{k}")
}
fn h_name(i: usize, k: usize) -> String {
    format!("h_{i}_{k}")
}
fn l_name(i: usize) -> String {
    format!("l_{i}")
}
fn m_name(i: usize) -> String {
    format!("m_{i}")
}
fn v_name(i: usize) -> String {
    format!("v_{i}")
}

struct Builder {
    variables: Vec<Variable>,
    rows: Vec<Row>,
    index: HashMap<String, usize>,
}

impl Builder {
    fn var(&mut self, name: String, kind: VarKind) -> usize {
        let ix = self.variables.len();
        self.index.insert(name.clone(), ix);
        self.variables.push(Variable { name, kind });
        ix
    }

    fn ix(&self, name: &str) -> usize {
        self.index[name]
    }

    fn row(&mut self, name: String, terms: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        debug_assert!(!terms.is_empty(), "empty row {name}");
        self.rows.push(Row {
            name,
            terms,
            sense,
            rhs,
        });
    }
}

/// Builds the MILP for an instance and objective variant. The trip count K
/// comes from the instance's trip budget.
pub fn build_model(inst: &Instance, variant: ModelVariant) -> ConstraintSystem {
    let n = inst.spray_count();
    let trips = inst.min_trips().max_trips;
    let dummy = n + 1;
    let max_t = (0..=n)
        .flat_map(|i| (0..=n).map(move |j| (i, j)))
        .map(|(i, j)| inst.travel(i, j))
        .fold(0.0f64, f64::max);
    // idle trip slots sit gamma apart behind the last used trip, so the time
    // big-M must absorb the whole K-slot chain
    let m_time = inst.horizon
        + max_t
        + inst.refill_duration
        + trips as f64 * inst.reload_duration;
    let m_qty = inst.tanker_capacity;

    let mut b = Builder {
        variables: Vec::new(),
        rows: Vec::new(),
        index: HashMap::new(),
    };

    // variables, in catalog order: binaries first
    for i in 0..=n {
        for j in 0..=n {
            if i != j {
                b.var(x_name(i, j), VarKind::Binary);
            }
        }
    }
    for k in 1..=trips {
        for i in 0..=n {
            for j in 0..=n {
                if i != j {
                    b.var(g_name(i, j, k), VarKind::Binary);
                }
            }
        }
    }
    for i in 1..=n {
        b.var(delta_name(i), VarKind::Binary);
    }
    for k in 1..=trips {
        for r in (k + 1)..=trips {
            b.var(z_name(k, r), VarKind::Binary);
        }
    }
    for k in 1..=trips {
        b.var(theta_name(0, k), VarKind::Continuous);
        for i in 1..=n {
            b.var(theta_name(i, k), VarKind::Continuous);
        }
        b.var(theta_name(dummy, k), VarKind::Continuous);
    }
    for i in 1..=n {
        b.var(y_name(i), VarKind::Continuous);
    }
    for i in 1..=n {
        b.var(a_name(i), VarKind::Continuous);
    }
    for k in 1..=trips {
        for i in 1..=n {
            b.var(w_name(i, k), VarKind::Continuous);
        }
    }
    for k in 1..=trips {
        b.var(h_name(0, k), VarKind::Continuous);
        for i in 1..=n {
            b.var(h_name(i, k), VarKind::Continuous);
        }
    }
    for i in 0..=n {
        b.var(l_name(i), VarKind::Continuous);
    }
    for i in 1..=n {
        b.var(m_name(i), VarKind::Continuous);
    }
    for i in 1..=n {
        b.var(v_name(i), VarKind::Continuous);
    }
    if variant == ModelVariant::Model2 {
        b.var("alpha".to_string(), VarKind::Continuous);
    }

    // objective
    let mut objective: Vec<(usize, f64)> = Vec::new();
    match variant {
        ModelVariant::Model1 => {
            for i in 0..=n {
                for j in 0..=n {
                    if i != j {
                        objective.push((b.ix(&x_name(i, j)), inst.travel(i, j)));
                    }
                }
            }
            for i in 1..=n {
                objective.push((b.ix(&m_name(i)), 1.0));
            }
            for i in 1..=n {
                objective.push((b.ix(&delta_name(i)), inst.refill_duration));
            }
        }
        ModelVariant::Model2 => {
            objective.push((b.ix("alpha"), 1.0));
        }
        ModelVariant::Model3 => {
            for i in 0..=n {
                for j in 0..=n {
                    if i != j {
                        objective.push((b.ix(&x_name(i, j)), inst.travel(i, j)));
                    }
                }
            }
        }
    }

    // visit: each spray node entered exactly once by a sprayer
    for j in 1..=n {
        let terms = (0..=n)
            .filter(|&i| i != j)
            .map(|i| (b.ix(&x_name(i, j)), 1.0))
            .collect();
        b.row(format!("visit_{j}"), terms, Sense::Eq, 1.0);
    }
    // flow conservation for sprayers, every node
    for j in 0..=n {
        let mut terms: Vec<(usize, f64)> = Vec::new();
        for i in 0..=n {
            if i != j {
                terms.push((b.ix(&x_name(i, j)), 1.0));
                terms.push((b.ix(&x_name(j, i)), -1.0));
            }
        }
        b.row(format!("flow_{j}"), terms, Sense::Eq, 0.0);
    }
    // fleet size: numSp departures and returns
    let out_terms = (1..=n).map(|i| (b.ix(&x_name(0, i)), 1.0)).collect();
    b.row("fleet_out".into(), out_terms, Sense::Eq, inst.num_sprayers as f64);
    let in_terms = (1..=n).map(|i| (b.ix(&x_name(i, 0)), 1.0)).collect();
    b.row("fleet_in".into(), in_terms, Sense::Eq, inst.num_sprayers as f64);
    // tanker flow conservation per trip
    for k in 1..=trips {
        for j in 0..=n {
            let mut terms: Vec<(usize, f64)> = Vec::new();
            for i in 0..=n {
                if i != j {
                    terms.push((b.ix(&g_name(i, j, k)), 1.0));
                    terms.push((b.ix(&g_name(j, i, k)), -1.0));
                }
            }
            b.row(format!("tflow_{j}_{k}"), terms, Sense::Eq, 0.0);
        }
    }
    // a refill happens exactly where the tanker stops
    for i in 1..=n {
        let mut terms = vec![(b.ix(&delta_name(i)), 1.0)];
        for k in 1..=trips {
            for j in 0..=n {
                if j != i {
                    terms.push((b.ix(&g_name(j, i, k)), -1.0));
                }
            }
        }
        b.row(format!("refill_link_{i}"), terms, Sense::Eq, 0.0);
    }
    // single tanker: all K trip slots chain into one sequence
    {
        let mut terms = Vec::new();
        for k in 1..=trips {
            for r in (k + 1)..=trips {
                terms.push((b.ix(&z_name(k, r)), 1.0));
            }
        }
        if !terms.is_empty() {
            b.row("chain_count".into(), terms, Sense::Eq, trips as f64 - 1.0);
        }
        for k in 2..=trips {
            let terms = (1..k).map(|r| (b.ix(&z_name(r, k)), 1.0)).collect();
            b.row(format!("chain_in_{k}"), terms, Sense::Le, 1.0);
        }
        for k in 1..trips {
            let terms = ((k + 1)..=trips).map(|r| (b.ix(&z_name(k, r)), 1.0)).collect();
            b.row(format!("chain_out_{k}"), terms, Sense::Le, 1.0);
        }
    }
    // refilling starts after spraying completes and after the tanker arrives
    for k in 1..=trips {
        for i in 1..=n {
            b.row(
                format!("service_first_{i}_{k}"),
                vec![(b.ix(&y_name(i)), 1.0), (b.ix(&w_name(i, k)), -1.0)],
                Sense::Le,
                -inst.nodes[i].service,
            );
            b.row(
                format!("arrive_first_{i}_{k}"),
                vec![(b.ix(&theta_name(i, k)), 1.0), (b.ix(&w_name(i, k)), -1.0)],
                Sense::Le,
                0.0,
            );
        }
    }
    // sprayer arrival recursion along active arcs
    for i in 1..=n {
        for j in 1..=n {
            if i == j {
                continue;
            }
            let coupled = inst.nodes[i].service + inst.travel(i, j);
            b.row(
                format!("arr_lo_{i}_{j}"),
                vec![
                    (b.ix(&y_name(j)), 1.0),
                    (b.ix(&y_name(i)), -1.0),
                    (b.ix(&x_name(i, j)), -(coupled + m_time)),
                    (b.ix(&delta_name(i)), -inst.refill_duration),
                    (b.ix(&m_name(i)), -1.0),
                ],
                Sense::Ge,
                -m_time,
            );
            b.row(
                format!("arr_hi_{i}_{j}"),
                vec![
                    (b.ix(&y_name(j)), 1.0),
                    (b.ix(&y_name(i)), -1.0),
                    (b.ix(&x_name(i, j)), -(coupled - m_time)),
                    (b.ix(&delta_name(i)), -inst.refill_duration),
                    (b.ix(&m_name(i)), -1.0),
                ],
                Sense::Le,
                m_time,
            );
        }
    }
    // arrival after leaving the depot
    for i in 1..=n {
        b.row(
            format!("depart_{i}"),
            vec![
                (b.ix(&y_name(i)), 1.0),
                (b.ix(&x_name(0, i)), -inst.travel(0, i)),
            ],
            Sense::Ge,
            0.0,
        );
    }
    // trip return time at the dummy depot
    for k in 1..=trips {
        for i in 1..=n {
            b.row(
                format!("trip_return_{i}_{k}"),
                vec![
                    (b.ix(&w_name(i, k)), 1.0),
                    (b.ix(&g_name(i, 0, k)), inst.travel(i, 0) + m_time),
                    (b.ix(&delta_name(i)), inst.refill_duration),
                    (b.ix(&theta_name(n + 1, k)), -1.0),
                ],
                Sense::Le,
                m_time,
            );
        }
    }
    // chained trips depart after the previous return plus the reload
    for k in 1..=trips {
        for r in (k + 1)..=trips {
            b.row(
                format!("trip_chain_{k}_{r}"),
                vec![
                    (b.ix(&theta_name(n + 1, k)), 1.0),
                    (b.ix(&theta_name(0, r)), -1.0),
                    (b.ix(&z_name(k, r)), m_time),
                ],
                Sense::Le,
                m_time - inst.reload_duration,
            );
        }
    }
    // horizon for sprayers and tanker
    for i in 1..=n {
        b.row(
            format!("sprayer_horizon_{i}"),
            vec![
                (b.ix(&y_name(i)), 1.0),
                (b.ix(&x_name(i, 0)), inst.travel(i, 0)),
            ],
            Sense::Le,
            inst.horizon - inst.nodes[i].service,
        );
    }
    for k in 1..=trips {
        for i in 1..=n {
            b.row(
                format!("tanker_horizon_{i}_{k}"),
                vec![
                    (b.ix(&theta_name(i, k)), 1.0),
                    (b.ix(&g_name(i, 0, k)), inst.travel(i, 0)),
                ],
                Sense::Le,
                inst.horizon,
            );
        }
    }
    // tanker arrival recursion along its trip arcs
    for k in 1..=trips {
        for i in 1..=n {
            for j in 1..=n {
                if i == j {
                    continue;
                }
                b.row(
                    format!("tanker_leg_{i}_{j}_{k}"),
                    vec![
                        (b.ix(&w_name(i, k)), 1.0),
                        (
                            b.ix(&g_name(i, j, k)),
                            inst.travel(i, j) + inst.refill_duration + m_time,
                        ),
                        (b.ix(&theta_name(j, k)), -1.0),
                    ],
                    Sense::Le,
                    m_time,
                );
            }
        }
    }
    // first stop of a trip linked to the trip departure
    for k in 1..=trips {
        for j in 1..=n {
            b.row(
                format!("tanker_depart_{j}_{k}"),
                vec![
                    (b.ix(&theta_name(j, k)), 1.0),
                    (b.ix(&theta_name(0, k)), -1.0),
                    (b.ix(&g_name(0, j, k)), -(inst.travel(0, j) + m_time)),
                ],
                Sense::Ge,
                -m_time,
            );
        }
    }
    // waiting time, active only at visited stops
    for k in 1..=trips {
        for i in 1..=n {
            let mut terms = vec![
                (b.ix(&m_name(i)), 1.0),
                (b.ix(&theta_name(i, k)), -1.0),
                (b.ix(&y_name(i)), 1.0),
            ];
            for j in 0..=n {
                if j != i {
                    terms.push((b.ix(&g_name(j, i, k)), -m_time));
                }
            }
            b.row(
                format!("waiting_{i}_{k}"),
                terms,
                Sense::Ge,
                -inst.nodes[i].service - m_time,
            );
        }
    }
    // sprayer tank recursion
    for i in 1..=n {
        for j in 1..=n {
            if i == j {
                continue;
            }
            b.row(
                format!("tank_chain_{i}_{j}"),
                vec![
                    (b.ix(&l_name(j)), 1.0),
                    (b.ix(&l_name(i)), -1.0),
                    (b.ix(&x_name(i, j)), inst.nodes[i].demand + m_qty),
                    (b.ix(&v_name(i)), -1.0),
                ],
                Sense::Le,
                m_qty,
            );
        }
    }
    // tanker tank recursion
    for k in 1..=trips {
        for j in 1..=n {
            for i in 0..=n {
                if i == j {
                    continue;
                }
                let mut terms = vec![
                    (b.ix(&h_name(j, k)), 1.0),
                    (b.ix(&h_name(i, k)), -1.0),
                    (b.ix(&g_name(i, j, k)), m_qty),
                ];
                if i >= 1 {
                    terms.push((b.ix(&v_name(i)), 1.0));
                }
                b.row(format!("tanker_chain_{i}_{j}_{k}"), terms, Sense::Le, m_qty);
            }
        }
    }
    // fill-to-full cap and the refill flag coupling
    for i in 1..=n {
        let mut terms = vec![
            (b.ix(&v_name(i)), 1.0),
            (b.ix(&delta_name(i)), inst.sprayer_capacity),
            (b.ix(&l_name(i)), 1.0),
        ];
        for j in 0..=n {
            if j != i {
                terms.push((b.ix(&x_name(j, i)), -inst.nodes[i].demand));
            }
        }
        b.row(
            format!("refill_cap_{i}"),
            terms,
            Sense::Le,
            2.0 * inst.sprayer_capacity,
        );
        b.row(
            format!("refill_flag_{i}"),
            vec![
                (b.ix(&v_name(i)), 1.0),
                (b.ix(&delta_name(i)), -inst.sprayer_capacity),
            ],
            Sense::Le,
            0.0,
        );
    }
    // full tanks at the depot
    b.row(
        "depot_tank".into(),
        vec![(b.ix(&l_name(0)), 1.0)],
        Sense::Eq,
        inst.sprayer_capacity,
    );
    for k in 1..=trips {
        b.row(
            format!("depot_tanker_{k}"),
            vec![(b.ix(&h_name(0, k)), 1.0)],
            Sense::Eq,
            inst.tanker_capacity,
        );
    }
    // capacity bounds
    for j in 1..=n {
        b.row(
            format!("tank_cap_{j}"),
            vec![(b.ix(&l_name(j)), 1.0)],
            Sense::Le,
            inst.sprayer_capacity,
        );
    }
    for k in 1..=trips {
        for j in 1..=n {
            b.row(
                format!("tanker_cap_{j}_{k}"),
                vec![(b.ix(&h_name(j, k)), 1.0)],
                Sense::Le,
                inst.tanker_capacity,
            );
        }
    }
    // first visited node is served on a full tank
    for i in 1..=n {
        b.row(
            format!("full_start_{i}"),
            vec![
                (b.ix(&l_name(i)), 1.0),
                (b.ix(&x_name(0, i)), -inst.sprayer_capacity),
            ],
            Sense::Ge,
            0.0,
        );
    }
    // spraying starts on arrival
    for i in 1..=n {
        b.row(
            format!("spray_start_{i}"),
            vec![(b.ix(&a_name(i)), 1.0), (b.ix(&y_name(i)), -1.0)],
            Sense::Eq,
            0.0,
        );
    }
    // latest-arrival rows for the makespan variant
    if variant == ModelVariant::Model2 {
        for i in 1..=n {
            b.row(
                format!("latest_{i}"),
                vec![
                    (b.ix("alpha"), 1.0),
                    (b.ix(&y_name(i)), -1.0),
                    (b.ix(&x_name(i, 0)), -inst.travel(i, 0)),
                ],
                Sense::Ge,
                inst.nodes[i].service,
            );
        }
    }

    let deviations = vec![
        Deviation {
            id: "flow-sums-over-all-nodes".into(),
            description: "sprayer and tanker flow conservation sums run over all nodes including the depot; the printed sums omit it".into(),
        },
        Deviation {
            id: "chain-forall-k".into(),
            description: "the trip-chain in-degree rows are emitted for every trip k; the printed quantifier names an undeclared index s".into(),
        },
        Deviation {
            id: "waiting-activation".into(),
            description: "the waiting rows activate via M(1 - sum_j g_jik) so waiting is only enforced at visited stops; the printed term multiplies the continuous arrival time".into(),
        },
        Deviation {
            id: "trip-chain-all-slots".into(),
            description: "the chain-count row keeps its printed right-hand side K-1, so all K trip slots form one chain; unused slots idle at the depot, one reload apart".into(),
        },
        Deviation {
            id: "per-trip-tanker-reload".into(),
            description: "the depot tanker level h_0 = Qt is applied per trip as h_0_k = Qt since every trip starts after a full reload".into(),
        },
        Deviation {
            id: "missing-index-sets".into(),
            description: "node quantifiers missing from the printed arrive-first, tanker-horizon and capacity rows are restored".into(),
        },
        Deviation {
            id: "tanker-depart-link".into(),
            description: "rows linking a trip's first stop arrival to its depot departure are added; the prose describes them but no printed row couples theta_jk to theta_0k".into(),
        },
        Deviation {
            id: "spray-start-equals-arrival".into(),
            description: "a_i is declared but never constrained in print; it is pinned to a_i = y_i".into(),
        },
        Deviation {
            id: "big-m-time".into(),
            description: "the time big-M is tMax + max t + xi + K*gamma; the extra reloads cover the forced chain of unused trip slots".into(),
        },
    ];

    ConstraintSystem {
        variant,
        trips,
        spray_count: n,
        variables: b.variables,
        rows: b.rows,
        objective,
        big_m_time: m_time,
        big_m_qty: m_qty,
        deviations,
        index: b.index,
    }
}

fn append_terms(out: &mut String, terms: &[(usize, f64)], variables: &[Variable]) {
    for (pos, &(var, coef)) in terms.iter().enumerate() {
        if pos == 0 {
            if coef < 0.0 {
                out.push_str(&format!("-{} {}", -coef, variables[var].name));
            } else {
                out.push_str(&format!("{} {}", coef, variables[var].name));
            }
        } else if coef < 0.0 {
            out.push_str(&format!(" - {} {}", -coef, variables[var].name));
        } else {
            out.push_str(&format!(" + {} {}", coef, variables[var].name));
        }
    }
}

fn write_lp(variables: &[Variable], rows: &[Row], objective: &[(usize, f64)]) -> String {
    let mut out = String::from("Minimize\n obj: ");
    append_terms(&mut out, objective, variables);
    out.push_str("\nSubject To\n");
    for row in rows {
        out.push_str(&format!(" {}: ", row.name));
        append_terms(&mut out, &row.terms, variables);
        out.push_str(&format!(" {} {}\n", row.sense.token(), row.rhs));
    }
    out.push_str("Bounds\n");
    for var in variables {
        if var.kind == VarKind::Continuous {
            out.push_str(&format!(" 0 <= {}\n", var.name));
        }
    }
    out.push_str("Binaries\n");
    for var in variables {
        if var.kind == VarKind::Binary {
            out.push_str(&format!(" {}\n", var.name));
        }
    }
    out.push_str("End\n");
    out
}

impl ConstraintSystem {
    pub fn lp_text(&self) -> String {
        write_lp(&self.variables, &self.rows, &self.objective)
    }

    /// Writes the LP file plus a `.deviations.json` sidecar with the
    /// normalization log.
    pub fn export_lp(&self, path: impl AsRef<Path>) -> Result<(), MilpError> {
        let path = path.as_ref();
        fs::write(path, self.lp_text()).map_err(|source| MilpError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let sidecar = path.with_extension("deviations.json");
        let log = serde_json::to_string_pretty(&self.deviations).expect("deviation log");
        fs::write(&sidecar, log).map_err(|source| MilpError::Io {
            path: sidecar.display().to_string(),
            source,
        })
    }
}

/// A model read back from LP text; binary variables precede continuous ones
/// in catalog order, matching the builder.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedLp {
    pub variables: Vec<Variable>,
    pub rows: Vec<Row>,
    pub objective: Vec<(usize, f64)>,
}

impl ParsedLp {
    pub fn lp_text(&self) -> String {
        write_lp(&self.variables, &self.rows, &self.objective)
    }
}

fn parse_terms(
    tokens: &[&str],
    index: &HashMap<String, usize>,
) -> Result<Vec<(usize, f64)>, MilpError> {
    let mut terms = Vec::new();
    let mut sign = 1.0;
    let mut pending: Option<f64> = None;
    for &tok in tokens {
        match tok {
            "+" => sign = 1.0,
            "-" => sign = -1.0,
            _ => {
                if let Some(coef) = pending.take() {
                    let var = *index
                        .get(tok)
                        .ok_or_else(|| MilpError::Parse(format!("unknown variable {tok}")))?;
                    terms.push((var, sign * coef));
                    sign = 1.0;
                } else if let Some(rest) = tok.strip_prefix('-') {
                    pending = Some(-rest
                        .parse::<f64>()
                        .map_err(|_| MilpError::Parse(format!("bad coefficient {tok}")))?);
                } else {
                    pending = Some(
                        tok.parse::<f64>()
                            .map_err(|_| MilpError::Parse(format!("bad coefficient {tok}")))?,
                    );
                }
            }
        }
    }
    if pending.is_some() {
        return Err(MilpError::Parse("dangling coefficient".into()));
    }
    Ok(terms)
}

/// Parses the module's canonical LP format back into a model.
pub fn parse_lp(text: &str) -> Result<ParsedLp, MilpError> {
    #[derive(PartialEq)]
    enum Section {
        Start,
        Objective,
        Rows,
        Bounds,
        Binaries,
        Done,
    }
    let mut section = Section::Start;
    let mut objective_tokens: Vec<String> = Vec::new();
    let mut row_lines: Vec<String> = Vec::new();
    let mut continuous: Vec<String> = Vec::new();
    let mut binaries: Vec<String> = Vec::new();
    for line in text.lines() {
        let trimmed = line.trim();
        match trimmed {
            "Minimize" => {
                section = Section::Objective;
                continue;
            }
            "Subject To" => {
                section = Section::Rows;
                continue;
            }
            "Bounds" => {
                section = Section::Bounds;
                continue;
            }
            "Binaries" => {
                section = Section::Binaries;
                continue;
            }
            "End" => {
                section = Section::Done;
                continue;
            }
            _ => {}
        }
        if trimmed.is_empty() {
            continue;
        }
        match section {
            Section::Objective => objective_tokens.push(trimmed.to_string()),
            Section::Rows => row_lines.push(trimmed.to_string()),
            Section::Bounds => {
                let name = trimmed
                    .strip_prefix("0 <= ")
                    .ok_or_else(|| MilpError::Parse(format!("bad bound line: {trimmed}")))?;
                continuous.push(name.to_string());
            }
            Section::Binaries => binaries.push(trimmed.to_string()),
            Section::Start | Section::Done => {
                return Err(MilpError::Parse(format!("unexpected line: {trimmed}")))
            }
        }
    }
    if section != Section::Done {
        return Err(MilpError::Parse("missing End".into()));
    }

    let mut variables = Vec::with_capacity(binaries.len() + continuous.len());
    let mut index = HashMap::new();
    for name in binaries {
        index.insert(name.clone(), variables.len());
        variables.push(Variable {
            name,
            kind: VarKind::Binary,
        });
    }
    for name in continuous {
        index.insert(name.clone(), variables.len());
        variables.push(Variable {
            name,
            kind: VarKind::Continuous,
        });
    }

    let objective_line = objective_tokens.join(" ");
    let objective_body = objective_line
        .strip_prefix("obj:")
        .ok_or_else(|| MilpError::Parse("missing obj label".into()))?
        .trim();
    let objective = parse_terms(&objective_body.split_whitespace().collect::<Vec<_>>(), &index)?;

    let mut rows = Vec::with_capacity(row_lines.len());
    for line in row_lines {
        let (name, body) = line
            .split_once(':')
            .ok_or_else(|| MilpError::Parse(format!("missing row label: {line}")))?;
        let tokens: Vec<&str> = body.split_whitespace().collect();
        let (sense_pos, sense) = tokens
            .iter()
            .enumerate()
            .find_map(|(ix, &t)| match t {
                "<=" => Some((ix, Sense::Le)),
                ">=" => Some((ix, Sense::Ge)),
                "=" => Some((ix, Sense::Eq)),
                _ => None,
            })
            .ok_or_else(|| MilpError::Parse(format!("missing sense: {line}")))?;
        let rhs: f64 = tokens[sense_pos + 1..]
            .join("")
            .parse()
            .map_err(|_| MilpError::Parse(format!("bad rhs: {line}")))?;
        rows.push(Row {
            name: name.trim().to_string(),
            terms: parse_terms(&tokens[..sense_pos], &index)?,
            sense,
            rhs,
        });
    }
    Ok(ParsedLp {
        variables,
        rows,
        objective,
    })
}

/// Violation of one row by an assignment, with the signed slack.
#[derive(Debug, Clone, PartialEq)]
pub struct RowViolation {
    pub row: String,
    pub family: &'static str,
    pub slack: f64,
}

/// Per-family satisfaction report plus the recomputed objective.
#[derive(Debug, Clone)]
pub struct AssignmentCertificate {
    pub row_count: usize,
    pub violations: Vec<RowViolation>,
    pub integrality_violations: Vec<String>,
    pub objective: f64,
}

impl AssignmentCertificate {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty() && self.integrality_violations.is_empty()
    }

    /// (family, total rows, violated rows), ordered by family name.
    pub fn family_summary(&self, cs: &ConstraintSystem) -> Vec<(String, usize, usize)> {
        let mut totals: std::collections::BTreeMap<&'static str, (usize, usize)> =
            std::collections::BTreeMap::new();
        for row in &cs.rows {
            totals.entry(family_of(&row.name)).or_default().0 += 1;
        }
        for violation in &self.violations {
            totals.entry(violation.family).or_default().1 += 1;
        }
        totals
            .into_iter()
            .map(|(family, (rows, violated))| (family.to_string(), rows, violated))
            .collect()
    }
}

fn family_of(row_name: &str) -> &'static str {
    const FAMILIES: [(&str, &str); 16] = [
        ("visit_", "visit"),
        ("flow_", "sprayer_flow"),
        ("fleet_", "fleet"),
        ("tflow_", "tanker_flow"),
        ("refill_link_", "refill_link"),
        ("chain_", "trip_chain"),
        ("trip_chain_", "trip_chain"),
        ("trip_return_", "sync"),
        ("service_first_", "sync"),
        ("arrive_first_", "sync"),
        ("tanker_leg_", "sync"),
        ("tanker_depart_", "sync"),
        ("arr_", "arrival"),
        ("depart_", "arrival"),
        ("waiting_", "waiting"),
        ("latest_", "latest"),
    ];
    for (prefix, family) in FAMILIES {
        if row_name.starts_with(prefix) {
            return family;
        }
    }
    if row_name.starts_with("sprayer_horizon_") || row_name.starts_with("tanker_horizon_") {
        "horizon"
    } else if row_name.starts_with("tank_chain_")
        || row_name.starts_with("tank_cap_")
        || row_name.starts_with("full_start_")
        || row_name == "depot_tank"
    {
        "sprayer_tank"
    } else if row_name.starts_with("tanker_chain_")
        || row_name.starts_with("tanker_cap_")
        || row_name.starts_with("depot_tanker_")
    {
        "tanker_tank"
    } else if row_name.starts_with("refill_cap_") || row_name.starts_with("refill_flag_") {
        "refill_quantity"
    } else if row_name.starts_with("spray_start_") {
        "spray_start"
    } else {
        "other"
    }
}

const ROW_TOL: f64 = 1e-6;
const INT_TOL: f64 = 1e-9;

/// Maps a synchronized solution onto the model's variables.
fn map_assignment(
    inst: &Instance,
    cs: &ConstraintSystem,
    sol: &Solution,
) -> Result<Vec<f64>, MilpError> {
    let n = cs.spray_count;
    let trips = cs.trips;
    let dummy = n + 1;
    if inst.spray_count() != n {
        return Err(MilpError::Unmappable(format!(
            "instance has {} spray nodes, model expects {n}",
            inst.spray_count()
        )));
    }
    if sol.trips.len() > trips {
        return Err(MilpError::Unmappable(format!(
            "solution uses {} trips, model provides {trips} slots",
            sol.trips.len()
        )));
    }
    let mut values = vec![0.0f64; cs.variables.len()];
    let mut set = |name: String, value: f64| -> Result<(), MilpError> {
        match cs.index.get(&name) {
            Some(&ix) => {
                values[ix] = value;
                Ok(())
            }
            None => Err(MilpError::Unmappable(format!("no variable {name}"))),
        }
    };

    // sprayer routing arcs
    for route in &sol.routes {
        let mut prev = 0usize;
        for &node in &route.nodes {
            if node > n {
                return Err(MilpError::Unmappable(format!("node {node} out of range")));
            }
            set(x_name(prev, node), 1.0)?;
            prev = node;
        }
        if !route.nodes.is_empty() {
            set(x_name(prev, 0), 1.0)?;
        }
    }
    // timeline
    for i in 1..=n {
        let t = &sol.timeline[i];
        set(y_name(i), t.arrival)?;
        set(a_name(i), t.arrival)?;
        set(m_name(i), t.wait)?;
        set(v_name(i), t.quantity)?;
        set(l_name(i), t.level)?;
        set(delta_name(i), if t.refilled { 1.0 } else { 0.0 })?;
    }
    set(l_name(0), inst.sprayer_capacity)?;

    // defaults for unvisited tanker stops: the refill window stays open and
    // the tank reads full so the inactive chain rows keep their slack
    for k in 1..=trips {
        set(h_name(0, k), inst.tanker_capacity)?;
        for i in 1..=n {
            let end = sol.timeline[i].arrival + inst.nodes[i].service;
            set(w_name(i, k), end)?;
            set(theta_name(i, k), 0.0)?;
            set(h_name(i, k), inst.tanker_capacity)?;
        }
    }

    // used trips
    let mut last_return = 0.0f64;
    for (trip_ix, trip) in sol.trips.iter().enumerate() {
        let k = trip_ix + 1;
        set(theta_name(0, k), trip.departure)?;
        set(theta_name(dummy, k), trip.return_time)?;
        let mut prev = 0usize;
        for stop in &trip.stops {
            set(g_name(prev, stop.node, k), 1.0)?;
            set(theta_name(stop.node, k), stop.arrival)?;
            set(w_name(stop.node, k), stop.start)?;
            set(h_name(stop.node, k), stop.tank)?;
            prev = stop.node;
        }
        if !trip.stops.is_empty() {
            set(g_name(prev, 0, k), 1.0)?;
        }
        last_return = trip.return_time;
    }
    // idle trip slots chain behind the last used trip, one reload apart
    for k in (sol.trips.len() + 1)..=trips {
        let depart = if k == 1 {
            0.0
        } else {
            last_return + inst.reload_duration
        };
        set(theta_name(0, k), depart)?;
        set(theta_name(dummy, k), depart)?;
        last_return = depart;
    }
    // chain all K slots in index order
    for k in 1..trips {
        set(z_name(k, k + 1), 1.0)?;
    }
    if cs.variant == ModelVariant::Model2 {
        set("alpha".to_string(), sol.objective.makespan)?;
    }
    Ok(values)
}

/// Maps the solution onto the model and evaluates every row, returning the
/// violation certificate and the objective recomputed from the assignment.
pub fn validate_solution(
    inst: &Instance,
    cs: &ConstraintSystem,
    sol: &Solution,
) -> Result<AssignmentCertificate, MilpError> {
    let values = map_assignment(inst, cs, sol)?;

    let mut violations = Vec::new();
    for row in &cs.rows {
        let lhs: f64 = row.terms.iter().map(|&(var, coef)| coef * values[var]).sum();
        let slack = match row.sense {
            Sense::Le => row.rhs - lhs,
            Sense::Ge => lhs - row.rhs,
            Sense::Eq => -(lhs - row.rhs).abs(),
        };
        if slack < -ROW_TOL {
            violations.push(RowViolation {
                row: row.name.clone(),
                family: family_of(&row.name),
                slack,
            });
        }
    }

    let mut integrality_violations = Vec::new();
    for (var, value) in cs.variables.iter().zip(&values) {
        if var.kind == VarKind::Binary && (value - value.round()).abs() > INT_TOL {
            integrality_violations.push(var.name.clone());
        }
    }

    let objective = cs
        .objective
        .iter()
        .map(|&(var, coef)| coef * values[var])
        .sum();
    Ok(AssignmentCertificate {
        row_count: cs.rows.len(),
        violations,
        integrality_violations,
        objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::instance::{generate_instance, GeneratorConfig};
    use crate::schedule::{evaluate, schedule_routes, SprayerRoute};

    fn two_node_instance() -> Instance {
        let nodes = vec![
            crate::instance::Node { id: 0, x: 0.0, y: 0.0, demand: 0.0, service: 0.0 },
            crate::instance::Node { id: 1, x: 1.0, y: 0.0, demand: 2.0, service: 1.0 },
            crate::instance::Node { id: 2, x: 0.0, y: 1.0, demand: 2.0, service: 1.0 },
        ];
        // sum q = 4, Qt = 3 -> K = 2·ceil(4/3) = 4? keep Qt big enough for K = 2
        Instance::new(nodes, 1, 3.0, 4.0, 0.5, 1.0, 100.0, 1.0).unwrap()
    }

    #[test]
    fn tiny_model_variable_and_row_counts() {
        let inst = two_node_instance();
        assert_eq!(inst.min_trips().max_trips, 2);
        let cs = build_model(&inst, ModelVariant::Model1);
        // hand count for n = 2, K = 2:
        // x 6, g 12, delta 2, z 1, theta 8, y 2, a 2, w 4, h 6, l 3, m 2, v 2
        assert_eq!(cs.variables.len(), 50);
        assert_eq!(cs.rows.len(), 82);

        let cs2 = build_model(&inst, ModelVariant::Model2);
        assert_eq!(cs2.variables.len(), 51);
        assert_eq!(cs2.rows.len(), 84);
        assert_eq!(cs2.objective.len(), 1);
    }

    #[test]
    fn model3_objective_is_travel_only() {
        let inst = two_node_instance();
        let cs = build_model(&inst, ModelVariant::Model3);
        // 6 arcs, no waiting or refill terms
        assert_eq!(cs.objective.len(), 6);
        for &(var, _) in &cs.objective {
            assert!(cs.variables[var].name.starts_with("x_"));
        }
    }

    #[test]
    fn export_is_deterministic_and_round_trips() {
        let inst = two_node_instance();
        let cs = build_model(&inst, ModelVariant::Model1);
        let text = cs.lp_text();
        assert_eq!(text, cs.lp_text());

        let parsed = parse_lp(&text).unwrap();
        assert_eq!(parsed.variables, cs.variables);
        assert_eq!(parsed.rows, cs.rows);
        assert_eq!(parsed.objective, cs.objective);
        assert_eq!(parsed.lp_text(), text);
    }

    #[test]
    fn export_writes_sidecar() {
        let dir = std::env::temp_dir().join("synchro_milp_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("tiny.lp");
        let cs = build_model(&two_node_instance(), ModelVariant::Model1);
        cs.export_lp(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, cs.lp_text());
        let sidecar = std::fs::read_to_string(dir.join("tiny.deviations.json")).unwrap();
        let log: Vec<Deviation> = serde_json::from_str(&sidecar).unwrap();
        assert_eq!(log, cs.deviations);
    }

    #[test]
    fn f1_solution_maps_to_a_clean_certificate() {
        let inst = fixtures::f1();
        let routes = vec![SprayerRoute { sprayer: 0, nodes: vec![1, 2, 3, 4, 5, 6] }];
        let sol = schedule_routes(&inst, &routes).unwrap();
        let cs = build_model(&inst, ModelVariant::Model1);
        let cert = validate_solution(&inst, &cs, &sol).unwrap();
        assert!(
            cert.is_clean(),
            "violations: {:?}",
            cert.violations.iter().map(|v| &v.row).collect::<Vec<_>>()
        );
        let f = evaluate(&inst, &sol, ModelVariant::Model1);
        assert!((cert.objective - f).abs() < 1e-6);
    }

    #[test]
    fn tampered_waiting_is_flagged_in_the_waiting_family() {
        let inst = fixtures::two_sprayer_wait();
        let routes = vec![
            SprayerRoute { sprayer: 0, nodes: vec![1, 2] },
            SprayerRoute { sprayer: 1, nodes: vec![3, 4] },
        ];
        let mut sol = schedule_routes(&inst, &routes).unwrap();
        let cs = build_model(&inst, ModelVariant::Model1);
        assert!(validate_solution(&inst, &cs, &sol).unwrap().is_clean());

        sol.timeline[3].wait -= 0.1;
        let cert = validate_solution(&inst, &cs, &sol).unwrap();
        assert!(!cert.is_clean());
        assert!(cert.violations.iter().any(|v| v.family == "waiting"));
    }

    #[test]
    fn model2_certificate_clean_with_alpha() {
        let inst = fixtures::f1();
        let routes = vec![SprayerRoute { sprayer: 0, nodes: vec![1, 2, 3, 4, 5, 6] }];
        let sol = schedule_routes(&inst, &routes).unwrap();
        let cs = build_model(&inst, ModelVariant::Model2);
        let cert = validate_solution(&inst, &cs, &sol).unwrap();
        assert!(cert.is_clean());
        assert!((cert.objective - sol.objective.makespan).abs() < 1e-9);
    }

    #[test]
    fn multi_trip_solution_validates() {
        let mut inst = fixtures::f1();
        inst.tanker_capacity = 6.0;
        let routes = vec![SprayerRoute { sprayer: 0, nodes: vec![1, 2, 3, 4, 5, 6] }];
        let sol = schedule_routes(&inst, &routes).unwrap();
        assert_eq!(sol.trips.len(), 2);
        let cs = build_model(&inst, ModelVariant::Model1);
        let cert = validate_solution(&inst, &cs, &sol).unwrap();
        assert!(
            cert.is_clean(),
            "violations: {:?}",
            cert.violations.iter().map(|v| &v.row).collect::<Vec<_>>()
        );
    }

    #[test]
    fn generated_instances_validate_cleanly() {
        for seed in 0..3 {
            let inst = generate_instance(&GeneratorConfig::new(12, 2, seed)).unwrap();
            let sol = crate::construction::build_initial(&inst, seed).unwrap();
            let cs = build_model(&inst, ModelVariant::Model1);
            let cert = validate_solution(&inst, &cs, &sol).unwrap();
            assert!(
                cert.is_clean(),
                "seed {seed} violations: {:?}",
                cert.violations.iter().map(|v| &v.row).collect::<Vec<_>>()
            );
            assert!((cert.objective - evaluate(&inst, &sol, ModelVariant::Model1)).abs() < 1e-6);
        }
    }

    #[test]
    fn unmappable_when_trips_exceed_slots() {
        let inst = fixtures::f1();
        let routes = vec![SprayerRoute { sprayer: 0, nodes: vec![1, 2, 3, 4, 5, 6] }];
        let mut sol = schedule_routes(&inst, &routes).unwrap();
        let cs = build_model(&inst, ModelVariant::Model1);
        sol.trips = vec![sol.trips[0].clone(); 3];
        assert!(matches!(
            validate_solution(&inst, &cs, &sol),
            Err(MilpError::Unmappable(_))
        ));
    }
}
