//! Unbundling of nodal real/reactive marginal costs into additive components.
//!
//! For a perturbation of net demand at node `j`, hour `t`, with network
//! sensitivities `s = d(P, Q, v, l)/d(demand)` and root balance duals
//! `lambda^P_0`, `lambda^Q_0`, stationarity of the network variables gives
//!
//! ```text
//! lambda_j = lambda^P_0 dP_0 + lambda^Q_0 dQ_0
//!          + sum_k (mu_up - mu_lo)_k dv_k + sum_k nu_k dl_k + sum_y pi_y dl_y
//! ```
//!
//! which is split as energy (`lambda_0`), real losses, reactive losses,
//! voltage, ampacity and transformer degradation. The transformer multiplier
//! `pi_{y,t}` is further split into the same-hour winding and top-oil terms,
//! the top-oil carry-over into later hours, and the carry-over past the
//! horizon priced by the periodicity dual `rho_y`.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feeder::{Feeder, NodeId};
use crate::opf::OpfSolution;
use crate::sensitivity::{HourSensitivities, Perturbation, SensitivityBlock};
use crate::thermal::{AgingPwl, CoefficientMode, ThermalCoefficients};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    P,
    Q,
}

impl Side {
    pub fn perturbation(self) -> Perturbation {
        match self {
            Side::P => Perturbation::Real,
            Side::Q => Perturbation::Reactive,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Side::P => "P",
            Side::Q => "Q",
        }
    }
}

/// Which transformers contribute to a node's transformer component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TransformerAttribution {
    /// Every transformer, weighted by its current sensitivity; keeps the breakdown additive.
    #[default]
    AllTransformers,
    /// Only the transformer feeding the node itself; other transformers' terms are dropped.
    CoLocated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DlmcOptions {
    pub attribution: TransformerAttribution,
    pub coefficients: CoefficientMode,
    /// Largest acceptable cone residual at the operating point, pu.
    pub exactness_tolerance: f64,
    /// Largest acceptable `|sum - dual| / max(|dual|, lambda_0)`.
    pub additivity_tolerance: f64,
}

impl Default for DlmcOptions {
    fn default() -> Self {
        Self {
            attribution: TransformerAttribution::AllTransformers,
            coefficients: CoefficientMode::Model,
            exactness_tolerance: 1e-6,
            additivity_tolerance: 1e-4,
        }
    }
}

/// One node, hour and side; all values in $/MWh (or $/MVArh).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DlmcComponents {
    pub node: NodeId,
    pub hour: usize,
    pub side: Side,
    pub energy: f64,
    pub loss_p: f64,
    pub loss_q: f64,
    pub voltage: f64,
    pub ampacity: f64,
    pub transformer: f64,
    pub total: f64,
    /// Balance-row dual the components should reproduce.
    pub dual: f64,
}

impl DlmcComponents {
    /// Additivity error relative to `max(|dual|, scale)`.
    pub fn relative_error(&self, scale: f64) -> f64 {
        (self.total - self.dual).abs() / self.dual.abs().max(scale).max(f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DlmcReport {
    pub rows: Vec<DlmcComponents>,
    /// Worst additivity error and where it occurs.
    pub worst_error: f64,
    pub worst: Option<(NodeId, usize, Side)>,
}

impl DlmcReport {
    pub fn get(&self, node: NodeId, hour: usize, side: Side) -> Option<&DlmcComponents> {
        self.rows.iter().find(|r| r.node == node && r.hour == hour && r.side == side)
    }

    /// Hourly rows of one node and side, in hour order.
    pub fn series(&self, node: NodeId, side: Side) -> Vec<DlmcComponents> {
        let mut rows: Vec<_> = self
            .rows
            .iter()
            .filter(|r| r.node == node && r.side == side)
            .copied()
            .collect();
        rows.sort_by_key(|r| r.hour);
        rows
    }

    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record([
            "node",
            "hour",
            "side",
            "energy",
            "loss_p",
            "loss_q",
            "voltage",
            "ampacity",
            "transformer",
            "total",
        ])?;
        for r in &self.rows {
            wtr.write_record(dlmc_record(r))?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// CSV fields of one row (hours written 1-based).
pub fn dlmc_record(r: &DlmcComponents) -> Vec<String> {
    vec![
        r.node.to_string(),
        (r.hour + 1).to_string(),
        r.side.label().to_string(),
        format!("{:.6}", r.energy),
        format!("{:.6}", r.loss_p),
        format!("{:.6}", r.loss_q),
        format!("{:.6}", r.voltage),
        format!("{:.6}", r.ampacity),
        format!("{:.6}", r.transformer),
        format!("{:.6}", r.total),
    ]
}

/// Components of one node/hour/side from its sensitivity block.
pub fn components(
    feeder: &Feeder,
    sol: &OpfSolution,
    block: &SensitivityBlock,
    attribution: TransformerAttribution,
) -> DlmcComponents {
    let t = block.hour;
    let j = block.node;
    let lp0 = sol.lambda_p[t][0];
    let lq0 = sol.lambda_q[t][0];
    let (side, energy, loss_p, loss_q, dual) = match block.kind {
        Perturbation::Real => (
            Side::P,
            lp0,
            lp0 * (block.root_p() - 1.0),
            lq0 * block.root_q(),
            sol.lambda_p[t][j],
        ),
        Perturbation::Reactive => (
            Side::Q,
            lq0,
            lp0 * block.root_p(),
            lq0 * (block.root_q() - 1.0),
            sol.lambda_q[t][j],
        ),
    };
    let n = feeder.node_count();
    let voltage: f64 = (1..n).map(|k| (sol.mu_upper[t][k] - sol.mu_lower[t][k]) * block.dv[k]).sum();
    let ampacity: f64 = (1..n).map(|k| sol.nu[t][k] * block.dl[k]).sum();
    let transformer: f64 = feeder
        .transformers()
        .iter()
        .enumerate()
        .filter(|(_, tf)| attribution == TransformerAttribution::AllTransformers || tf.node == j)
        .map(|(y, tf)| sol.pi.get(y).map_or(0.0, |pi| pi[t]) * block.dl[tf.node])
        .sum();
    DlmcComponents {
        node: feeder.id_of(j),
        hour: t,
        side,
        energy,
        loss_p,
        loss_q,
        voltage,
        ampacity,
        transformer,
        total: energy + loss_p + loss_q + voltage + ampacity + transformer,
        dual,
    }
}

/// Unbundles every non-root node, hour and side. With
/// [`TransformerAttribution::AllTransformers`] the component sums are checked
/// against the balance duals.
pub fn unbundle(feeder: &Feeder, sol: &OpfSolution, sens: &[HourSensitivities], options: &DlmcOptions) -> Result<DlmcReport> {
    let mut rows = Vec::with_capacity(2 * sens.len() * (feeder.node_count() - 1));
    let mut worst_error = 0.0;
    let mut worst = None;
    for hs in sens {
        for side in [Side::P, Side::Q] {
            for j in 1..feeder.node_count() {
                let c = components(feeder, sol, hs.block(j, side.perturbation()), options.attribution);
                let err = c.relative_error(sol.lambda_p[hs.hour][0].abs());
                if err > worst_error {
                    worst_error = err;
                    worst = Some((c.node, c.hour, side));
                }
                rows.push(c);
            }
        }
    }
    rows.sort_by_key(|r| (r.hour, r.side == Side::Q, r.node));
    let report = DlmcReport {
        rows,
        worst_error,
        worst,
    };
    if options.attribution == TransformerAttribution::AllTransformers && worst_error > options.additivity_tolerance {
        let (node, hour, side) = worst.unwrap();
        return Err(Error::Inconsistent {
            node: node.0,
            hour,
            side: side.label().to_string(),
            error: worst_error,
        });
    }
    Ok(report)
}

/// Split of one transformer's contribution to a node's transformer component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformerComponentDecomposition {
    pub node: NodeId,
    pub hour: usize,
    pub transformer: usize,
    pub side: Side,
    /// `d l_{y,t} / d demand`, pu.
    pub sensitivity: f64,
    /// Same-hour winding (hot-spot over top-oil) term.
    pub winding: f64,
    /// Same-hour top-oil term.
    pub top_oil: f64,
    /// Top-oil carry-over into later hours of the horizon.
    pub subsequent: f64,
    /// Carry-over past the horizon, priced by the periodicity dual.
    pub beyond_horizon: f64,
    /// Individual later-hour summands, `tau = 1, 2, ...`.
    pub subsequent_terms: Vec<f64>,
    /// Top-oil carry-over coefficients `a^tau`, `tau = 1, 2, ...`.
    pub decay_coefficients: Vec<f64>,
    /// Adjusted aging slopes for hours `t..T`.
    pub adjusted_slopes: Vec<f64>,
    /// `pi_{y,t} * sensitivity` from the thermal duals.
    pub component: f64,
}

impl TransformerComponentDecomposition {
    pub fn sum(&self) -> f64 {
        self.winding + self.top_oil + self.subsequent + self.beyond_horizon
    }

    /// Share of the beyond-horizon term in the sum of the four terms.
    pub fn beyond_horizon_share(&self) -> f64 {
        let s = self.sum();
        if s == 0.0 {
            0.0
        } else {
            self.beyond_horizon / s
        }
    }
}

pub fn decompose_transformer_component(
    feeder: &Feeder,
    sol: &OpfSolution,
    aging: &AgingPwl,
    block: &SensitivityBlock,
    transformer: usize,
    mode: CoefficientMode,
) -> TransformerComponentDecomposition {
    let tf = &feeder.transformers()[transformer];
    let coef = ThermalCoefficients::new(&tf.thermal, mode);
    let t = block.hour;
    let horizon = sol.horizon;
    let s = block.dl[tf.node];
    let scale = s / sol.base_mva;
    let g: Vec<f64> = sol.xi[transformer]
        .iter()
        .map(|xi| xi.iter().zip(aging.segments()).map(|(z, seg)| z * seg.slope).sum())
        .collect();
    let decay_coefficients: Vec<f64> = (1..horizon - t).map(|tau| coef.decay.powi(tau as i32)).collect();
    let subsequent_terms: Vec<f64> = decay_coefficients
        .iter()
        .enumerate()
        .map(|(k, a)| coef.top_oil * a * g[t + k + 1] * scale)
        .collect();
    let c = tf.thermal.cost_per_hour;
    TransformerComponentDecomposition {
        node: feeder.id_of(block.node),
        hour: t,
        transformer,
        side: match block.kind {
            Perturbation::Real => Side::P,
            Perturbation::Reactive => Side::Q,
        },
        sensitivity: s,
        winding: coef.winding * g[t] * scale,
        top_oil: coef.top_oil * g[t] * scale,
        subsequent: subsequent_terms.iter().sum(),
        beyond_horizon: coef.top_oil * coef.decay.powi((horizon - 1 - t) as i32) * sol.rho[transformer] * scale,
        subsequent_terms,
        decay_coefficients,
        adjusted_slopes: g[t..].iter().map(|v| if c > 0.0 { v / c } else { 0.0 }).collect(),
        component: sol.pi[transformer][t] * s,
    }
}

/// Decomposition CSV header.
pub const DECOMPOSITION_HEADER: [&str; 12] = [
    "node",
    "hour",
    "side",
    "transformer",
    "sensitivity",
    "winding",
    "top_oil",
    "subsequent",
    "beyond_horizon",
    "sum",
    "component",
    "adjusted_slope",
];

pub fn decomposition_record(feeder: &Feeder, d: &TransformerComponentDecomposition) -> Vec<String> {
    vec![
        d.node.to_string(),
        (d.hour + 1).to_string(),
        d.side.label().to_string(),
        feeder.transformers()[d.transformer].name.clone(),
        format!("{:.9e}", d.sensitivity),
        format!("{:.6}", d.winding),
        format!("{:.6}", d.top_oil),
        format!("{:.6}", d.subsequent),
        format!("{:.6}", d.beyond_horizon),
        format!("{:.6}", d.sum()),
        format!("{:.6}", d.component),
        format!("{:.6}", d.adjusted_slopes[0]),
    ]
}

/// Posted nodal prices, $/MWh, indexed `[node][hour]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSignals {
    pub horizon: usize,
    pub nodes: Vec<NodeId>,
    pub lambda_p: Vec<Vec<f64>>,
    pub lambda_q: Vec<Vec<f64>>,
}

impl PriceSignals {
    pub fn at(&self, node: NodeId) -> Option<(&[f64], &[f64])> {
        let k = self.nodes.iter().position(|&n| n == node)?;
        Some((&self.lambda_p[k], &self.lambda_q[k]))
    }

    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["node", "hour", "lambda_p", "lambda_q"])?;
        for (k, node) in self.nodes.iter().enumerate() {
            for t in 0..self.horizon {
                wtr.write_record([
                    node.to_string(),
                    (t + 1).to_string(),
                    format!("{:.12}", self.lambda_p[k][t]),
                    format!("{:.12}", self.lambda_q[k][t]),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            node: u32,
            hour: usize,
            lambda_p: f64,
            lambda_q: f64,
        }
        let mut nodes: Vec<NodeId> = Vec::new();
        let mut map: HashMap<NodeId, Vec<(usize, f64, f64)>> = HashMap::new();
        for rec in csv::Reader::from_reader(r).deserialize() {
            let row: Row = rec?;
            let node = NodeId(row.node);
            if !map.contains_key(&node) {
                nodes.push(node);
            }
            map.entry(node).or_default().push((row.hour, row.lambda_p, row.lambda_q));
        }
        let horizon = map.values().map(|v| v.len()).max().unwrap_or(0);
        let mut out = PriceSignals {
            horizon,
            nodes: nodes.clone(),
            lambda_p: Vec::new(),
            lambda_q: Vec::new(),
        };
        for node in &nodes {
            let mut rows = map.remove(node).unwrap();
            rows.sort_by_key(|r| r.0);
            if rows.len() != horizon || rows.iter().enumerate().any(|(k, r)| r.0 != k + 1) {
                return Err(Error::Parse(format!(
                    "price file: node {node} does not cover hours 1..={horizon}"
                )));
            }
            out.lambda_p.push(rows.iter().map(|r| r.1).collect());
            out.lambda_q.push(rows.iter().map(|r| r.2).collect());
        }
        Ok(out)
    }
}

/// Hourly P- and Q-DLMCs of every node (root included).
pub fn export_price_signals(feeder: &Feeder, sol: &OpfSolution) -> PriceSignals {
    let n = feeder.node_count();
    PriceSignals {
        horizon: sol.horizon,
        nodes: (0..n).map(|j| feeder.id_of(j)).collect(),
        lambda_p: (0..n)
            .map(|j| (0..sol.horizon).map(|t| sol.lambda_p[t][j]).collect())
            .collect(),
        lambda_q: (0..n)
            .map(|j| (0..sol.horizon).map(|t| sol.lambda_q[t][j]).collect())
            .collect(),
    }
}
