//! Fixed-capacity network model: links, flows, the M/M/1 average packet delay
//! and the analytic water-filling optimum used as ground truth.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Text of the bundled 13-link example network.
pub const REFERENCE_NET_TOPO: &str = include_str!("../../../data/paper_net.topo");

/// Relative budget tolerance used when labelling a flow vector feasible.
pub const BUDGET_TOLERANCE: f64 = 1e-3;

const KKT_MAX_ITERATIONS: usize = 200;
const KKT_RESIDUAL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct LinkSpec {
    pub id: usize,
    pub node_a: u32,
    pub node_b: u32,
    pub capacity_kbps: f64,
}

/// An immutable set of links numbered `1..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTopology {
    links: Vec<LinkSpec>,
    node_count: usize,
}

impl NetworkTopology {
    /// Builds a topology, checking ids are `1..=N` in order, capacities are
    /// positive and no link is a self-loop.
    pub fn new(links: Vec<LinkSpec>) -> Result<Self> {
        if links.is_empty() {
            return Err(Error::Domain("topology has no links".into()));
        }
        let mut nodes = BTreeSet::new();
        for (idx, link) in links.iter().enumerate() {
            if link.id != idx + 1 {
                return Err(Error::Domain(format!(
                    "link ids must be contiguous from 1: expected {}, found {}",
                    idx + 1,
                    link.id
                )));
            }
            if link.node_a == link.node_b {
                return Err(Error::Domain(format!("link {} is a self-loop", link.id)));
            }
            if !(link.capacity_kbps.is_finite() && link.capacity_kbps > 0.0) {
                return Err(Error::Domain(format!(
                    "link {} has non-positive capacity",
                    link.id
                )));
            }
            nodes.insert(link.node_a);
            nodes.insert(link.node_b);
        }
        Ok(NetworkTopology {
            links,
            node_count: nodes.len(),
        })
    }

    /// A chain topology (`1-2`, `2-3`, ...) with the given capacities.
    pub fn from_capacities(capacities: &[f64]) -> Result<Self> {
        let links = capacities
            .iter()
            .enumerate()
            .map(|(i, &c)| LinkSpec {
                id: i + 1,
                node_a: i as u32 + 1,
                node_b: i as u32 + 2,
                capacity_kbps: c,
            })
            .collect();
        Self::new(links)
    }

    /// The bundled 13-link example network.
    pub fn reference_network() -> Self {
        parse_topology(REFERENCE_NET_TOPO).expect("bundled topology is valid")
    }

    pub fn links(&self) -> &[LinkSpec] {
        &self.links
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn capacities(&self) -> Vec<f64> {
        self.links.iter().map(|l| l.capacity_kbps).collect()
    }

    pub fn total_capacity(&self) -> f64 {
        total_capacity(self)
    }

    pub fn min_capacity(&self) -> f64 {
        self.links
            .iter()
            .map(|l| l.capacity_kbps)
            .fold(f64::INFINITY, f64::min)
    }
}

impl FromStr for NetworkTopology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_topology(s)
    }
}

impl fmt::Display for NetworkTopology {
    /// Writes the topology in the line format accepted by [`parse_topology`].
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.links {
            writeln!(
                f,
                "link {} {} {} {}",
                l.id, l.node_a, l.node_b, l.capacity_kbps
            )?;
        }
        Ok(())
    }
}

/// Parses the `link <id> <node_a> <node_b> <capacity_kbps>` line format.
///
/// Blank lines and lines starting with `#` are skipped. Errors carry the
/// 1-based line number of the offending line.
pub fn parse_topology(text: &str) -> Result<NetworkTopology> {
    let mut links: Vec<LinkSpec> = Vec::new();
    let mut nodes = BTreeSet::new();
    for (idx, raw) in text.split('\n').enumerate() {
        let lineno = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(' ').collect();
        if fields.len() != 5 || fields[0] != "link" {
            return Err(Error::parse(
                lineno,
                "expected `link <id> <node_a> <node_b> <capacity_kbps>`",
            ));
        }
        let id: usize = fields[1]
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad link id {:?}", fields[1])))?;
        let node_a: u32 = fields[2]
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad node id {:?}", fields[2])))?;
        let node_b: u32 = fields[3]
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad node id {:?}", fields[3])))?;
        let capacity_kbps: f64 = fields[4]
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad capacity {:?}", fields[4])))?;

        if links.iter().any(|l| l.id == id) {
            return Err(Error::parse(lineno, format!("duplicate link id {id}")));
        }
        if id != links.len() + 1 {
            return Err(Error::parse(
                lineno,
                format!(
                    "link ids must be contiguous from 1: expected {}, found {id}",
                    links.len() + 1
                ),
            ));
        }
        if node_a == node_b {
            return Err(Error::parse(lineno, format!("link {id} is a self-loop")));
        }
        if !(capacity_kbps.is_finite() && capacity_kbps > 0.0) {
            return Err(Error::parse(
                lineno,
                format!("link {id} has non-positive capacity"),
            ));
        }
        nodes.insert(node_a);
        nodes.insert(node_b);
        links.push(LinkSpec {
            id,
            node_a,
            node_b,
            capacity_kbps,
        });
    }
    if links.is_empty() {
        return Err(Error::parse(0, "topology has no links"));
    }
    Ok(NetworkTopology {
        links,
        node_count: nodes.len(),
    })
}

pub fn total_capacity(topology: &NetworkTopology) -> f64 {
    topology.links.iter().map(|l| l.capacity_kbps).sum()
}

/// Per-link flows in kbps.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowVector(pub Vec<f64>);

impl FlowVector {
    pub fn new(flows_kbps: Vec<f64>) -> Self {
        FlowVector(flows_kbps)
    }

    pub fn flows(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Total load carried, γ.
    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    /// `0 <= f_i < C_i` on every link and `|Σf - load| <= 1e-3 * load`.
    pub fn is_feasible(&self, topology: &NetworkTopology, load_kbps: f64) -> bool {
        self.len() == topology.link_count()
            && self
                .0
                .iter()
                .zip(topology.links())
                .all(|(&f, l)| f >= 0.0 && f < l.capacity_kbps)
            && (self.total() - load_kbps).abs() <= BUDGET_TOLERANCE * load_kbps
    }

    /// Relative budget residual `|Σf - load| / load`.
    pub fn budget_residual(&self, load_kbps: f64) -> f64 {
        (self.total() - load_kbps).abs() / load_kbps
    }
}

impl From<Vec<f64>> for FlowVector {
    fn from(v: Vec<f64>) -> Self {
        FlowVector(v)
    }
}

fn check_flows(topology: &NetworkTopology, flow: &FlowVector) -> Result<()> {
    if flow.len() != topology.link_count() {
        return Err(Error::DimensionMismatch {
            expected: topology.link_count(),
            found: flow.len(),
        });
    }
    for (&f, l) in flow.0.iter().zip(topology.links()) {
        if f.is_nan() || f < 0.0 {
            return Err(Error::NegativeFlow {
                link: l.id,
                flow: f,
            });
        }
        if f >= l.capacity_kbps {
            return Err(Error::InfeasibleFlow {
                link: l.id,
                flow: f,
                capacity: l.capacity_kbps,
            });
        }
    }
    Ok(())
}

/// Average packet delay in milliseconds:
/// `1000 / Σf · Σ f_i / (C_i - f_i)` with flows and capacities in kbps.
pub fn delay_msec(topology: &NetworkTopology, flow: &FlowVector) -> Result<f64> {
    check_flows(topology, flow)?;
    let total = flow.total();
    if total <= 0.0 {
        return Err(Error::UndefinedDelay);
    }
    let sum: f64 = flow
        .0
        .iter()
        .zip(topology.links())
        .map(|(&f, l)| f / (l.capacity_kbps - f))
        .sum();
    Ok(1000.0 * sum / total)
}

/// Mean of `f_i / C_i` over all links.
pub fn mean_link_utilization(topology: &NetworkTopology, flow: &FlowVector) -> Result<f64> {
    check_flows(topology, flow)?;
    let n = topology.link_count() as f64;
    Ok(flow
        .0
        .iter()
        .zip(topology.links())
        .map(|(&f, l)| f / l.capacity_kbps)
        .sum::<f64>()
        / n)
}

fn water_fill(capacities: &[f64], lambda: f64) -> impl Iterator<Item = f64> + '_ {
    capacities
        .iter()
        .map(move |&c| (c - (c / lambda).sqrt()).max(0.0))
}

/// Exact delay-minimizing flow for a total load.
///
/// Every loaded link carries `C_i - sqrt(C_i / λ)`, i.e. the same marginal
/// delay `C_i / (C_i - f_i)^2 = λ`; links for which that would be negative
/// carry nothing. λ is found by geometric bisection on the budget residual.
pub fn kkt_optimal_flow(topology: &NetworkTopology, load_kbps: f64) -> Result<FlowVector> {
    let total = topology.total_capacity();
    if !(load_kbps > 0.0 && load_kbps < total) {
        return Err(Error::Domain(format!(
            "load {load_kbps} kbps outside (0, {total}) kbps"
        )));
    }
    let caps = topology.capacities();
    let budget = |lambda: f64| water_fill(&caps, lambda).sum::<f64>();

    // Below 1/max(C) every link is priced out; grow hi until it carries the load.
    let mut lo = 1.0 / caps.iter().cloned().fold(f64::MIN, f64::max);
    let mut hi = lo * 2.0;
    while budget(hi) < load_kbps {
        lo = hi;
        hi *= 2.0;
    }

    let mut lambda = hi;
    for _ in 0..KKT_MAX_ITERATIONS {
        lambda = (lo * hi).sqrt();
        let residual = budget(lambda) - load_kbps;
        if residual.abs() <= KKT_RESIDUAL_TOL {
            break;
        }
        if residual > 0.0 {
            hi = lambda;
        } else {
            lo = lambda;
        }
    }
    Ok(FlowVector(water_fill(&caps, lambda).collect()))
}
