//! Backward/forward sweep power flow on the exact DistFlow equations.
//!
//! Given nodal net demand and the root voltage, iterates
//! `P_j = sum_k P_k + r l_j + p_j`, `v_j = v_i - 2 (r P_j + x Q_j) + (r^2 + x^2) l_j`,
//! `l_j = (P_j^2 + Q_j^2) / v_i` to a fixed point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feeder::Feeder;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowState {
    /// Per node; the root entry holds the root injection.
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// Squared voltage; the root entry is the root voltage.
    pub v: Vec<f64>,
    /// Squared current of the line into each node; zero at the root.
    pub l: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-15,
            max_iterations: 200,
        }
    }
}

/// Solves the radial power flow for one hour. `net_p`, `net_q` are indexed by node (pu).
pub fn solve_power_flow(feeder: &Feeder, net_p: &[f64], net_q: &[f64], settings: &SweepSettings) -> Result<PowerFlowState> {
    let n = feeder.node_count();
    assert!(
        net_p.len() == n && net_q.len() == n,
        "net demand length differs from node count"
    );
    let order = feeder.topological_order();
    let v0 = feeder.root_v();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut v = vec![v0; n];
    let mut l = vec![0.0; n];
    let mut last_update = f64::INFINITY;
    for it in 1..=settings.max_iterations {
        for &j in order.iter().rev() {
            let mut pj = net_p[j];
            let mut qj = net_q[j];
            for &k in feeder.children(j) {
                pj += p[k];
                qj += q[k];
            }
            if j != 0 {
                let line = feeder.line_into(j);
                pj += line.r * l[j];
                qj += line.x * l[j];
            }
            p[j] = pj;
            q[j] = qj;
        }
        let mut update = 0.0f64;
        for &j in &order[1..] {
            let i = feeder.parent(j).unwrap();
            let line = feeder.line_into(j);
            let vj = v[i] - 2.0 * (line.r * p[j] + line.x * q[j]) + (line.r * line.r + line.x * line.x) * l[j];
            if !(vj > 0.0) {
                return Err(Error::PowerFlow {
                    iterations: it,
                    last_update: f64::NAN,
                });
            }
            update = update.max((vj - v[j]).abs());
            v[j] = vj;
        }
        for &j in &order[1..] {
            let i = feeder.parent(j).unwrap();
            let lj = (p[j] * p[j] + q[j] * q[j]) / v[i];
            update = update.max((lj - l[j]).abs());
            l[j] = lj;
        }
        if update <= settings.tolerance || (update >= last_update && update < 1e3 * settings.tolerance) {
            // final backward pass with converged currents
            for &j in order.iter().rev() {
                let mut pj = net_p[j];
                let mut qj = net_q[j];
                for &k in feeder.children(j) {
                    pj += p[k];
                    qj += q[k];
                }
                if j != 0 {
                    let line = feeder.line_into(j);
                    pj += line.r * l[j];
                    qj += line.x * l[j];
                }
                p[j] = pj;
                q[j] = qj;
            }
            return Ok(PowerFlowState {
                p,
                q,
                v,
                l,
                iterations: it,
            });
        }
        last_update = update;
    }
    Err(Error::PowerFlow {
        iterations: settings.max_iterations,
        last_update,
    })
}
