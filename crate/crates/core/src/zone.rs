//! Static zone description and PTDF sensitivities.
//!
//! Sign conventions used throughout the crate: a positive nodal injection is
//! net generation, and the flow on a line `from-to` is positive when power
//! moves from `from` towards `to`. `PTDF(l, n)` is the flow on line `l` when
//! node `n` produces 1 MW and the slack node consumes it.

use std::collections::{HashSet, VecDeque};
use std::fmt;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Absolute slack on the `[-1, 1]` PTDF range check.
const PTDF_RANGE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ZoneError {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("line {0} has no positive reactance")]
    MissingReactance(String),
    #[error("network is disconnected: {} not reachable from slack `{slack}`", .isolated.join(", "))]
    Disconnected { slack: String, isolated: Vec<String> },
    #[error("reduced susceptance matrix is singular")]
    Singular,
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid zone: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
}

/// An oriented transmission line.
#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub from: String,
    pub to: String,
    /// Series reactance in per-unit; only needed when PTDFs are computed.
    pub reactance: Option<f64>,
    /// MW.
    pub thermal_limit: f64,
}

impl Line {
    pub fn new(from: &str, to: &str, reactance: Option<f64>, thermal_limit: f64) -> Self {
        Self {
            from: from.to_string(),
            to: to.to_string(),
            reactance,
            thermal_limit,
        }
    }

    /// `from-to`, used as the line identifier in files and logs.
    pub fn id(&self) -> String {
        format!("{}-{}", self.from, self.to)
    }
}

/// One broken zone invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// The controlled zone. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Zone {
    pub nodes: Vec<String>,
    pub lines: Vec<Line>,
    pub battery_nodes: Vec<String>,
    pub curtailable_nodes: Vec<String>,
    /// May lie outside `nodes` when the PTDFs come from a larger network.
    pub slack_node: String,
    /// `lines.len()` rows by `nodes.len()` columns, MW/MW.
    pub ptdf: DMatrix<f64>,
}

impl Zone {
    /// Builds a zone from explicit PTDFs and checks every invariant.
    pub fn new(
        nodes: Vec<String>,
        lines: Vec<Line>,
        battery_nodes: Vec<String>,
        curtailable_nodes: Vec<String>,
        slack_node: String,
        ptdf: DMatrix<f64>,
    ) -> Result<Self, ZoneError> {
        let zone = Self {
            nodes,
            lines,
            battery_nodes,
            curtailable_nodes,
            slack_node,
            ptdf,
        };
        let violations = validate_zone(&zone);
        if violations.is_empty() {
            Ok(zone)
        } else {
            Err(ZoneError::Invalid(violations))
        }
    }

    /// Builds a zone whose PTDFs are computed by DC power flow.
    pub fn from_reactances(
        nodes: Vec<String>,
        lines: Vec<Line>,
        battery_nodes: Vec<String>,
        curtailable_nodes: Vec<String>,
        slack_node: String,
    ) -> Result<Self, ZoneError> {
        let ptdf = compute_ptdf(&nodes, &lines, &slack_node)?;
        Self::new(
            nodes,
            lines,
            battery_nodes,
            curtailable_nodes,
            slack_node,
            ptdf,
        )
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_lines(&self) -> usize {
        self.lines.len()
    }

    pub fn n_batteries(&self) -> usize {
        self.battery_nodes.len()
    }

    pub fn n_curtailable(&self) -> usize {
        self.curtailable_nodes.len()
    }

    pub fn node_index(&self, node: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == node)
    }

    pub fn line_index(&self, id: &str) -> Option<usize> {
        self.lines.iter().position(|l| l.id() == id)
    }

    /// PTDF columns of the given node subset, in subset order.
    pub fn ptdf_columns(&self, subset: &[String]) -> DMatrix<f64> {
        let cols: Vec<usize> = subset
            .iter()
            .map(|n| self.node_index(n).expect("subset validated against nodes"))
            .collect();
        self.ptdf.select_columns(cols.iter())
    }
}

/// Lists every broken invariant; empty iff the zone is well formed.
pub fn validate_zone(zone: &Zone) -> Vec<Violation> {
    let mut out = Vec::new();
    let node_set: HashSet<&str> = zone.nodes.iter().map(String::as_str).collect();

    let mut seen = HashSet::new();
    for n in &zone.nodes {
        if !seen.insert(n.as_str()) {
            out.push(Violation::new("nodes", format!("duplicate node `{n}`")));
        }
    }
    if zone.nodes.is_empty() {
        out.push(Violation::new("nodes", "zone has no nodes"));
    }

    let mut seen = HashSet::new();
    for line in &zone.lines {
        let id = line.id();
        for end in [&line.from, &line.to] {
            if !node_set.contains(end.as_str()) {
                out.push(Violation::new(
                    "lines",
                    format!("line {id} references unknown node `{end}`"),
                ));
            }
        }
        if line.from == line.to {
            out.push(Violation::new(
                "lines",
                format!("line {id} has identical endpoints"),
            ));
        }
        if !(line.thermal_limit > 0.0 && line.thermal_limit.is_finite()) {
            out.push(Violation::new(
                "lines",
                format!("line {id} thermal_limit must be > 0, got {}", line.thermal_limit),
            ));
        }
        if let Some(x) = line.reactance {
            if !(x > 0.0 && x.is_finite()) {
                out.push(Violation::new(
                    "lines",
                    format!("line {id} reactance must be > 0, got {x}"),
                ));
            }
        }
        if !seen.insert(id.clone()) {
            out.push(Violation::new("lines", format!("duplicate line {id}")));
        }
    }

    for (field, subset) in [
        ("battery_nodes", &zone.battery_nodes),
        ("curtailable_nodes", &zone.curtailable_nodes),
    ] {
        let mut seen = HashSet::new();
        for n in subset {
            if !node_set.contains(n.as_str()) {
                out.push(Violation::new(field, format!("node `{n}` is not in the zone")));
            }
            if !seen.insert(n.as_str()) {
                out.push(Violation::new(field, format!("duplicate node `{n}`")));
            }
        }
    }

    let (rows, cols) = zone.ptdf.shape();
    if rows != zone.lines.len() || cols != zone.nodes.len() {
        out.push(Violation::new(
            "ptdf",
            format!(
                "expected {}x{} (lines x nodes), got {rows}x{cols}",
                zone.lines.len(),
                zone.nodes.len()
            ),
        ));
        return out;
    }
    for (l, line) in zone.lines.iter().enumerate() {
        for (n, node) in zone.nodes.iter().enumerate() {
            let v = zone.ptdf[(l, n)];
            if !v.is_finite() || v.abs() > 1.0 + PTDF_RANGE_TOL {
                out.push(Violation::new(
                    "ptdf",
                    format!("entry for line {} at node `{node}` is {v}, outside [-1, 1]", line.id()),
                ));
            }
        }
    }
    if let Some(s) = zone.node_index(&zone.slack_node) {
        if zone.ptdf.column(s).iter().any(|v| *v != 0.0) {
            out.push(Violation::new(
                "ptdf",
                format!("column of slack node `{}` is not zero", zone.slack_node),
            ));
        }
    }
    out
}

/// DC power-flow PTDFs: `nodes.len()` columns, one per injection node, with
/// the slack node absorbing the transfer.
pub fn compute_ptdf(nodes: &[String], lines: &[Line], slack: &str) -> Result<DMatrix<f64>, ZoneError> {
    let n = nodes.len();
    let index = |name: &str| {
        nodes
            .iter()
            .position(|x| x == name)
            .ok_or_else(|| ZoneError::UnknownNode(name.to_string()))
    };
    let slack_idx = index(slack)?;

    let mut branches = Vec::with_capacity(lines.len());
    for line in lines {
        let x = line
            .reactance
            .filter(|x| *x > 0.0 && x.is_finite())
            .ok_or_else(|| ZoneError::MissingReactance(line.id()))?;
        branches.push((index(&line.from)?, index(&line.to)?, 1.0 / x));
    }

    // Connectivity from the slack.
    let mut adjacency = vec![Vec::new(); n];
    for &(i, j, _) in &branches {
        adjacency[i].push(j);
        adjacency[j].push(i);
    }
    let mut reached = vec![false; n];
    reached[slack_idx] = true;
    let mut queue = VecDeque::from([slack_idx]);
    while let Some(i) = queue.pop_front() {
        for &j in &adjacency[i] {
            if !reached[j] {
                reached[j] = true;
                queue.push_back(j);
            }
        }
    }
    let isolated: Vec<String> = nodes
        .iter()
        .zip(&reached)
        .filter(|(_, r)| !**r)
        .map(|(name, _)| name.clone())
        .collect();
    if !isolated.is_empty() {
        return Err(ZoneError::Disconnected {
            slack: slack.to_string(),
            isolated,
        });
    }

    // Reduced nodal susceptance matrix, slack row and column removed.
    let reduced = |i: usize| if i < slack_idx { i } else { i - 1 };
    let m = n - 1;
    let mut b_red = DMatrix::<f64>::zeros(m, m);
    for &(i, j, b) in &branches {
        if i != slack_idx {
            b_red[(reduced(i), reduced(i))] += b;
        }
        if j != slack_idx {
            b_red[(reduced(j), reduced(j))] += b;
        }
        if i != slack_idx && j != slack_idx {
            b_red[(reduced(i), reduced(j))] -= b;
            b_red[(reduced(j), reduced(i))] -= b;
        }
    }
    // Column c of the inverse holds the angles for +1 MW at node c.
    let angles = if m == 0 {
        DMatrix::zeros(0, 0)
    } else {
        b_red
            .cholesky()
            .ok_or(ZoneError::Singular)?
            .solve(&DMatrix::identity(m, m))
    };

    let theta = |node: usize, inj: usize| -> f64 {
        if node == slack_idx {
            0.0
        } else {
            angles[(reduced(node), reduced(inj))]
        }
    };
    let mut ptdf = DMatrix::zeros(lines.len(), n);
    for (l, &(i, j, b)) in branches.iter().enumerate() {
        for inj in 0..n {
            if inj != slack_idx {
                ptdf[(l, inj)] = b * (theta(i, inj) - theta(j, inj));
            }
        }
    }
    Ok(ptdf)
}

/// Linearized flows after a set of injection changes: `F0 + PTDF * delta`.
pub fn flow_update(
    base_flows: &DVector<f64>,
    ptdf: &DMatrix<f64>,
    delta_injections: &DVector<f64>,
) -> Result<DVector<f64>, ZoneError> {
    if base_flows.len() != ptdf.nrows() {
        return Err(ZoneError::Dimension {
            what: "base flows",
            expected: ptdf.nrows(),
            got: base_flows.len(),
        });
    }
    if delta_injections.len() != ptdf.ncols() {
        return Err(ZoneError::Dimension {
            what: "injection deltas",
            expected: ptdf.ncols(),
            got: delta_injections.len(),
        });
    }
    Ok(base_flows + ptdf * delta_injections)
}
