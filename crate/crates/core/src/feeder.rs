//! Radial feeder description: loading, validation and per-unit normalisation.
//!
//! Node 0 of the internal indexing is always the root (substation bus). Every
//! other node `j` owns exactly one line, the one connecting it to its parent,
//! so line quantities are indexed by the child node.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::thermal::TransformerThermalParams;
use crate::units::PerUnitBase;

/// External node identifier as it appears in data files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Squared-voltage bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoltageLimits {
    pub v_min: f64,
    pub v_max: f64,
}

impl VoltageLimits {
    pub fn from_magnitudes(min_pu: f64, max_pu: f64) -> Result<Self> {
        if !(min_pu > 0.0 && min_pu < max_pu) {
            return Err(Error::InvalidFeeder(format!(
                "voltage limits must satisfy 0 < min < max, got [{min_pu}, {max_pu}]"
            )));
        }
        Ok(Self {
            v_min: min_pu * min_pu,
            v_max: max_pu * max_pu,
        })
    }

    pub fn min_magnitude(&self) -> f64 {
        self.v_min.sqrt()
    }

    pub fn max_magnitude(&self) -> f64 {
        self.v_max.sqrt()
    }
}

impl Default for VoltageLimits {
    fn default() -> Self {
        Self::from_magnitudes(0.95, 1.05).expect("default limits are valid")
    }
}

/// Aggregated base load hosted at a node, expressed through a load profile class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadSpec {
    /// Profile class; the trajectories file carries a `<class>_pct` column.
    pub class: String,
    /// Nameplate the profile percentage refers to.
    pub kva: f64,
    /// Lagging power factor.
    pub pf: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub load: Option<LoadSpec>,
}

/// The line feeding a non-root node.
#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub r: f64,
    pub x: f64,
    /// Upper bound on squared current, pu.
    pub ampacity: Option<f64>,
    pub transformer: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transformer {
    pub name: String,
    /// Index of the secondary node; the transformer sits on the line feeding it.
    pub node: usize,
    pub kva: f64,
    pub thermal: TransformerThermalParams,
}

impl Transformer {
    pub fn nominal_sq_current(&self) -> f64 {
        self.thermal.nominal_sq_current
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Feeder {
    pub name: String,
    pub base: PerUnitBase,
    /// Root voltage magnitude, pu.
    pub root_voltage: f64,
    pub limits: VoltageLimits,
    nodes: Vec<Node>,
    lines: Vec<Option<Line>>,
    transformers: Vec<Transformer>,
    index: HashMap<NodeId, usize>,
    order: Vec<usize>,
}

impl Feeder {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, idx: usize) -> &Node {
        &self.nodes[idx]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Number of non-root nodes (= number of lines).
    pub fn line_count(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn line(&self, idx: usize) -> Option<&Line> {
        self.lines[idx].as_ref()
    }

    /// Line into a non-root node.
    ///
    /// # Panics
    ///
    /// Panics when called for the root.
    pub fn line_into(&self, idx: usize) -> &Line {
        self.lines[idx].as_ref().expect("the root has no incoming line")
    }

    pub fn parent(&self, idx: usize) -> Option<usize> {
        self.nodes[idx].parent
    }

    pub fn children(&self, idx: usize) -> &[usize] {
        &self.nodes[idx].children
    }

    pub fn transformers(&self) -> &[Transformer] {
        &self.transformers
    }

    pub fn transformer_at(&self, idx: usize) -> Option<usize> {
        self.lines[idx].as_ref().and_then(|l| l.transformer)
    }

    pub fn index_of(&self, id: NodeId) -> Result<usize> {
        self.index.get(&id).copied().ok_or(Error::UnknownNode(id.0))
    }

    pub fn id_of(&self, idx: usize) -> NodeId {
        self.nodes[idx].id
    }

    /// Squared root voltage.
    pub fn root_v(&self) -> f64 {
        self.root_voltage * self.root_voltage
    }

    /// Internal indices, parents before children, root first.
    pub fn topological_order(&self) -> &[usize] {
        &self.order
    }

    /// Non-root nodes in topological order.
    pub fn branch_order(&self) -> &[usize] {
        &self.order[1..]
    }

    pub fn depth(&self) -> usize {
        let mut depth = vec![0usize; self.nodes.len()];
        for &j in self.branch_order() {
            depth[j] = depth[self.nodes[j].parent.unwrap()] + 1;
        }
        depth.into_iter().max().unwrap_or(0)
    }

    pub fn from_file(file: FeederFile) -> Result<Self> {
        build(file)
    }

    /// Serialises back to the file schema, with impedances and ampacities in pu.
    pub fn to_file(&self) -> FeederFile {
        let nodes = self
            .nodes
            .iter()
            .map(|n| NodeRecord {
                id: n.id,
                load: n.load.clone(),
            })
            .collect();
        let lines = self
            .order
            .iter()
            .skip(1)
            .map(|&j| {
                let line = self.line_into(j);
                LineRecord {
                    from: self.nodes[self.nodes[j].parent.unwrap()].id,
                    to: self.nodes[j].id,
                    r_pu: Some(line.r),
                    x_pu: Some(line.x),
                    r_ohm: None,
                    x_ohm: None,
                    ampacity_sq_pu: line.ampacity,
                    ampacity_a: None,
                }
            })
            .collect();
        let transformers = self
            .transformers
            .iter()
            .map(|t| TransformerRecord {
                id: t.name.clone(),
                line: self.nodes[t.node].id,
                kva: t.kva,
                nominal_sq_current_pu: Some(t.thermal.nominal_sq_current),
                thermal: ThermalRecord {
                    loss_ratio: t.thermal.loss_ratio,
                    top_oil_rise_c: t.thermal.top_oil_rise,
                    hot_spot_rise_c: t.thermal.hot_spot_rise,
                    decay: t.thermal.decay,
                    cost_per_hour: t.thermal.cost_per_hour,
                },
            })
            .collect();
        FeederFile {
            name: self.name.clone(),
            base: BaseRecord {
                power_kva: self.base.power_kva,
                voltage_kv: self.base.voltage_kv,
                root_voltage_pu: self.root_voltage,
            },
            voltage_limits: Some(LimitsRecord {
                min_pu: self.limits.min_magnitude(),
                max_pu: self.limits.max_magnitude(),
            }),
            nodes,
            lines,
            transformers,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("feeder serialises")
    }
}

/// Reads and validates a feeder file.
pub fn load_feeder(path: impl AsRef<Path>) -> Result<Feeder> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_feeder(&text)
}

pub fn parse_feeder(text: &str) -> Result<Feeder> {
    let file: FeederFile = serde_json::from_str(text)?;
    build(file)
}

/// Parents precede children, root first; siblings keep file order.
pub fn topological_order(feeder: &Feeder) -> Vec<usize> {
    feeder.order.clone()
}

// ---------------------------------------------------------------------------
// File schema

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeederFile {
    #[serde(default)]
    pub name: String,
    pub base: BaseRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voltage_limits: Option<LimitsRecord>,
    pub nodes: Vec<NodeRecord>,
    pub lines: Vec<LineRecord>,
    #[serde(default)]
    pub transformers: Vec<TransformerRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaseRecord {
    pub power_kva: f64,
    pub voltage_kv: f64,
    #[serde(default = "one")]
    pub root_voltage_pu: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimitsRecord {
    pub min_pu: f64,
    pub max_pu: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: NodeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub load: Option<LoadSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LineRecord {
    pub from: NodeId,
    pub to: NodeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_pu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_pu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_ohm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_ohm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ampacity_sq_pu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ampacity_a: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransformerRecord {
    pub id: String,
    /// Secondary node of the transformer line.
    pub line: NodeId,
    pub kva: f64,
    /// Defaults to `(kva / base)^2`, i.e. rated current at 1 pu voltage.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nominal_sq_current_pu: Option<f64>,
    pub thermal: ThermalRecord,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThermalRecord {
    pub loss_ratio: f64,
    pub top_oil_rise_c: f64,
    pub hot_spot_rise_c: f64,
    #[serde(default = "default_decay")]
    pub decay: f64,
    #[serde(default = "default_cost")]
    pub cost_per_hour: f64,
}

fn default_decay() -> f64 {
    0.75
}

fn default_cost() -> f64 {
    1.0
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidFeeder(msg.into())
}

fn build(file: FeederFile) -> Result<Feeder> {
    let FeederFile {
        name,
        base,
        voltage_limits,
        nodes: node_records,
        lines: line_records,
        transformers: transformer_records,
    } = file;

    if !(base.power_kva > 0.0 && base.voltage_kv > 0.0) {
        return Err(invalid("base power and voltage must be positive"));
    }
    if !(base.root_voltage_pu > 0.0) {
        return Err(invalid("root voltage must be positive"));
    }
    let pu_base = PerUnitBase::new(base.power_kva, base.voltage_kv);
    let limits = match voltage_limits {
        Some(l) => VoltageLimits::from_magnitudes(l.min_pu, l.max_pu)?,
        None => VoltageLimits::default(),
    };

    let mut file_index = HashMap::new();
    for (k, n) in node_records.iter().enumerate() {
        if file_index.insert(n.id, k).is_some() {
            return Err(invalid(format!("duplicate node id {}", n.id)));
        }
        if let Some(load) = &n.load {
            if !(load.kva >= 0.0 && load.pf > 0.0 && load.pf <= 1.0) {
                return Err(invalid(format!("node {}: invalid load record", n.id)));
            }
        }
    }

    let mut parent_of: Vec<Option<usize>> = vec![None; node_records.len()];
    let mut line_of: Vec<Option<Line>> = vec![None; node_records.len()];
    for rec in &line_records {
        let from = *file_index
            .get(&rec.from)
            .ok_or_else(|| invalid(format!("line references unknown node {}", rec.from)))?;
        let to = *file_index
            .get(&rec.to)
            .ok_or_else(|| invalid(format!("line references unknown node {}", rec.to)))?;
        if from == to {
            return Err(invalid(format!("cycle: node {} is its own parent", rec.to)));
        }
        if parent_of[to].is_some() {
            return Err(invalid(format!("node {} has more than one parent", rec.to)));
        }
        let (r, x) = match (rec.r_pu, rec.x_pu, rec.r_ohm, rec.x_ohm) {
            (Some(r), Some(x), None, None) => (r, x),
            (None, None, Some(r), Some(x)) => (pu_base.ohm_to_pu(r), pu_base.ohm_to_pu(x)),
            _ => {
                return Err(invalid(format!(
                    "line {}->{}: give exactly one of (r_pu, x_pu) or (r_ohm, x_ohm)",
                    rec.from, rec.to
                )))
            }
        };
        if !(r >= 0.0 && x >= 0.0) || (r == 0.0 && x == 0.0) || !r.is_finite() || !x.is_finite() {
            return Err(invalid(format!(
                "line {}->{}: impedance must be non-negative with r or x positive",
                rec.from, rec.to
            )));
        }
        let ampacity = match (rec.ampacity_sq_pu, rec.ampacity_a) {
            (Some(_), Some(_)) => {
                return Err(invalid(format!(
                    "line {}->{}: give ampacity either in amperes or squared pu",
                    rec.from, rec.to
                )))
            }
            (Some(a), None) => Some(a),
            (None, Some(a)) => Some(pu_base.amps_to_sq_pu(a)),
            (None, None) => None,
        };
        if let Some(a) = ampacity {
            if !(a > 0.0) {
                return Err(invalid(format!("line {}->{}: ampacity must be positive", rec.from, rec.to)));
            }
        }
        parent_of[to] = Some(from);
        line_of[to] = Some(Line {
            r,
            x,
            ampacity,
            transformer: None,
        });
    }

    let roots: Vec<usize> = (0..node_records.len()).filter(|&k| parent_of[k].is_none()).collect();
    match roots.len() {
        0 => return Err(invalid("cycle: no root node (every node has a parent)")),
        1 => {}
        _ => {
            return Err(invalid(format!(
                "orphan node {}: not connected to the root {}",
                node_records[roots[1]].id, node_records[roots[0]].id
            )))
        }
    }
    let root = roots[0];

    // Internal indexing: root first, then file order.
    let mut to_internal = vec![0usize; node_records.len()];
    let mut next = 1;
    for k in 0..node_records.len() {
        if k == root {
            continue;
        }
        to_internal[k] = next;
        next += 1;
    }
    let n = node_records.len();
    let mut nodes: Vec<Option<Node>> = vec![None; n];
    let mut lines: Vec<Option<Line>> = vec![None; n];
    for (k, rec) in node_records.iter().enumerate() {
        nodes[to_internal[k]] = Some(Node {
            id: rec.id,
            parent: parent_of[k].map(|p| to_internal[p]),
            children: Vec::new(),
            load: rec.load.clone(),
        });
        lines[to_internal[k]] = line_of[k].take();
    }
    let mut nodes: Vec<Node> = nodes.into_iter().map(|n| n.unwrap()).collect();
    // children in line-file order
    for rec in &line_records {
        let p = to_internal[file_index[&rec.from]];
        let c = to_internal[file_index[&rec.to]];
        nodes[p].children.push(c);
    }

    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(j) = queue.pop_front() {
        order.push(j);
        for &c in &nodes[j].children {
            if !seen[c] {
                seen[c] = true;
                queue.push_back(c);
            }
        }
    }
    if order.len() != n {
        let stuck = (0..n).find(|&k| !seen[k]).unwrap();
        return Err(invalid(format!("cycle through node {}", nodes[stuck].id)));
    }

    let index: HashMap<NodeId, usize> = nodes.iter().enumerate().map(|(k, nd)| (nd.id, k)).collect();

    let mut transformers = Vec::with_capacity(transformer_records.len());
    let mut names = HashSet::new();
    for rec in transformer_records {
        if !names.insert(rec.id.clone()) {
            return Err(invalid(format!("duplicate transformer id {}", rec.id)));
        }
        let node = *index
            .get(&rec.line)
            .ok_or_else(|| invalid(format!("transformer {} references unknown node {}", rec.id, rec.line)))?;
        if node == 0 {
            return Err(invalid(format!("transformer {} placed on the root", rec.id)));
        }
        let line = lines[node].as_mut().unwrap();
        if line.transformer.is_some() {
            return Err(invalid(format!(
                "duplicate transformer on line into node {} ({})",
                rec.line, rec.id
            )));
        }
        if !(rec.kva > 0.0) {
            return Err(invalid(format!("transformer {}: nameplate must be positive", rec.id)));
        }
        let nominal = rec
            .nominal_sq_current_pu
            .unwrap_or_else(|| pu_base.kva_to_pu(rec.kva).powi(2));
        let thermal = TransformerThermalParams {
            loss_ratio: rec.thermal.loss_ratio,
            top_oil_rise: rec.thermal.top_oil_rise_c,
            hot_spot_rise: rec.thermal.hot_spot_rise_c,
            decay: rec.thermal.decay,
            cost_per_hour: rec.thermal.cost_per_hour,
            nominal_sq_current: nominal,
        };
        thermal
            .validate()
            .map_err(|e| invalid(format!("transformer {}: {e}", rec.id)))?;
        line.transformer = Some(transformers.len());
        transformers.push(Transformer {
            name: rec.id,
            node,
            kva: rec.kva,
            thermal,
        });
    }

    Ok(Feeder {
        name,
        base: pu_base,
        root_voltage: base.root_voltage_pu,
        limits,
        nodes,
        lines,
        transformers,
        index,
        order,
    })
}
