//! Sensitivities of the network state to nodal net demand.
//!
//! Differentiating the DistFlow equations at an operating point gives, per
//! hour, a `4N x 4N` linear system in `(dP_j, dQ_j, dv_j, dl_j)` for the `N`
//! non-root nodes. Rows of node `j` (parent `i`, children `k`):
//!
//! ```text
//! dP_j - sum_k dP_k - r dl_j                          = b^P_j
//! dQ_j - sum_k dQ_k - x dl_j                          = b^Q_j
//! 2r dP_j + 2x dQ_j + dv_j - dv_i - (r^2 + x^2) dl_j  = 0      (dv_i absent when i = root)
//! -2P dP_j - 2Q dQ_j + v_i dl_j + l_j dv_i            = 0      (dv_i absent when i = root)
//! ```
//!
//! The system is block-tree structured: each 4x4 diagonal block couples only
//! to its children (through `dP_k, dQ_k`) and to its parent (through `dv_i`).
//! Eliminating leaves towards the root produces no fill-in outside the
//! diagonal blocks, so one factorization per hour costs `O(N)` and each
//! right-hand side another `O(N)`.
//!
//! Dense layout used by [`SensitivitySystem::triplets`] and
//! [`SensitivitySystem::to_dense`]: unknowns `[P | Q | v | l]`, each of
//! length `N`, node `j` at offset `j - 1`; rows in the same order.

use nalgebra::{DMatrix, Matrix4, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feeder::Feeder;
use crate::opf::OpfSolution;
use crate::powerflow::{solve_power_flow, PowerFlowState, SweepSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Perturbation {
    Real,
    Reactive,
}

impl Perturbation {
    pub fn label(self) -> &'static str {
        match self {
            Perturbation::Real => "P",
            Perturbation::Reactive => "Q",
        }
    }
}

/// Network state of one hour, indexed by node (root entries as in [`OpfSolution`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub hour: usize,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub v: Vec<f64>,
    pub l: Vec<f64>,
}

impl OperatingPoint {
    pub fn from_solution(sol: &OpfSolution, hour: usize) -> Self {
        Self {
            hour,
            p: sol.p[hour].clone(),
            q: sol.q[hour].clone(),
            v: sol.v[hour].clone(),
            l: sol.l[hour].clone(),
        }
    }

    pub fn from_power_flow(state: &PowerFlowState, hour: usize) -> Self {
        Self {
            hour,
            p: state.p.clone(),
            q: state.q.clone(),
            v: state.v.clone(),
            l: state.l.clone(),
        }
    }

    /// Worst `|l_j v_i - P_j^2 - Q_j^2|` and the node where it occurs.
    pub fn cone_residual(&self, feeder: &Feeder) -> (f64, usize) {
        (1..feeder.node_count())
            .map(|j| {
                let i = feeder.parent(j).unwrap();
                ((self.l[j] * self.v[i] - self.p[j].powi(2) - self.q[j].powi(2)).abs(), j)
            })
            .fold((0.0, 0), |a, b| if b.0 > a.0 { b } else { a })
    }
}

/// Derivatives of every network variable with respect to the net demand of
/// one node in one hour. Vectors are indexed by node; the root entries of
/// `dp`, `dq` hold the derivative of the root injection and `dv[0] = dl[0] = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityBlock {
    pub hour: usize,
    pub node: usize,
    pub kind: Perturbation,
    pub dp: Vec<f64>,
    pub dq: Vec<f64>,
    pub dv: Vec<f64>,
    pub dl: Vec<f64>,
}

impl SensitivityBlock {
    pub fn root_p(&self) -> f64 {
        self.dp[0]
    }

    pub fn root_q(&self) -> f64 {
        self.dq[0]
    }

    pub fn write_csv<W: std::io::Write>(&self, feeder: &Feeder, w: W) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["node", "dP", "dQ", "dv", "dl"])?;
        for j in 0..self.dp.len() {
            wtr.write_record([
                feeder.id_of(j).to_string(),
                format!("{:.12e}", self.dp[j]),
                format!("{:.12e}", self.dq[j]),
                format!("{:.12e}", self.dv[j]),
                format!("{:.12e}", self.dl[j]),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Assembled and factorized sensitivity system of one hour.
#[derive(Debug, Clone)]
pub struct SensitivitySystem {
    pub hour: usize,
    order: Vec<usize>,
    parent: Vec<Option<usize>>,
    children_root: Vec<usize>,
    triplets: Vec<(usize, usize, f64)>,
    /// Inverse of each Schur-updated diagonal block.
    inv: Vec<Matrix4<f64>>,
    /// `inv_j * u_j` where `u_j` couples node `j` rows to its parent's `dv`.
    w: Vec<Vector4<f64>>,
    pivot_ratio: f64,
}

fn diagonal_block(r: f64, x: f64, p: f64, q: f64, v_parent: f64) -> Matrix4<f64> {
    Matrix4::new(
        1.0,
        0.0,
        0.0,
        -r, //
        0.0,
        1.0,
        0.0,
        -x, //
        2.0 * r,
        2.0 * x,
        1.0,
        -(r * r + x * x), //
        -2.0 * p,
        -2.0 * q,
        0.0,
        v_parent,
    )
}

/// Builds and factorizes the system at an operating point. Refuses points
/// whose branch cones are not tight within `exactness_tolerance`.
pub fn assemble_system(feeder: &Feeder, op: &OperatingPoint, exactness_tolerance: f64) -> Result<SensitivitySystem> {
    let n = feeder.node_count();
    let lines = n - 1;
    let (residual, worst) = op.cone_residual(feeder);
    if residual > exactness_tolerance {
        return Err(Error::NotExact {
            node: feeder.id_of(worst).0,
            hour: op.hour,
            residual,
        });
    }
    let pos = |j: usize| j - 1;
    let mut triplets = Vec::with_capacity(16 * lines);
    let mut diag = vec![Matrix4::zeros(); n];
    let mut u = vec![Vector4::zeros(); n];
    let mut parent = vec![None; n];
    for j in 1..n {
        let line = feeder.line_into(j);
        let i = feeder.parent(j).unwrap();
        let (r, x) = (line.r, line.x);
        diag[j] = diagonal_block(r, x, op.p[j], op.q[j], op.v[i]);
        let d = &diag[j];
        for a in 0..4 {
            for b in 0..4 {
                if d[(a, b)] != 0.0 {
                    triplets.push((a * lines + pos(j), b * lines + pos(j), d[(a, b)]));
                }
            }
        }
        for &k in feeder.children(j) {
            triplets.push((pos(j), pos(k), -1.0));
            triplets.push((lines + pos(j), lines + pos(k), -1.0));
        }
        if i != 0 {
            parent[j] = Some(i);
            u[j] = Vector4::new(0.0, 0.0, -1.0, op.l[j]);
            triplets.push((2 * lines + pos(j), 2 * lines + pos(i), -1.0));
            if op.l[j] != 0.0 {
                triplets.push((3 * lines + pos(j), 2 * lines + pos(i), op.l[j]));
            }
        }
    }

    let order = feeder.topological_order().to_vec();
    let mut inv = vec![Matrix4::zeros(); n];
    let mut w = vec![Vector4::zeros(); n];
    let (mut min_pivot, mut max_pivot) = (f64::INFINITY, 0.0f64);
    for &j in order[1..].iter().rev() {
        let lu = diag[j].lu();
        let uu = lu.u();
        for k in 0..4 {
            let piv = uu[(k, k)].abs();
            min_pivot = min_pivot.min(piv);
            max_pivot = max_pivot.max(piv);
        }
        let Some(dinv) = lu.try_inverse() else {
            return Err(Error::SingularSystem {
                hour: op.hour,
                pivot_ratio: 0.0,
            });
        };
        inv[j] = dinv;
        if let Some(i) = parent[j] {
            w[j] = dinv * u[j];
            diag[i][(0, 2)] += w[j][0];
            diag[i][(1, 2)] += w[j][1];
        }
    }
    let pivot_ratio = if max_pivot > 0.0 { min_pivot / max_pivot } else { 0.0 };
    if !(pivot_ratio > 1e-14) {
        return Err(Error::SingularSystem {
            hour: op.hour,
            pivot_ratio,
        });
    }
    Ok(SensitivitySystem {
        hour: op.hour,
        order,
        parent,
        children_root: feeder.children(0).to_vec(),
        triplets,
        inv,
        w,
        pivot_ratio,
    })
}

impl SensitivitySystem {
    /// Number of non-root nodes.
    pub fn lines(&self) -> usize {
        self.order.len() - 1
    }

    /// Smallest over largest pivot magnitude of the block factorization.
    pub fn pivot_ratio(&self) -> f64 {
        self.pivot_ratio
    }

    /// Nonzeros `(row, col, value)` in the dense layout.
    pub fn triplets(&self) -> &[(usize, usize, f64)] {
        &self.triplets
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let m = 4 * self.lines();
        let mut a = DMatrix::zeros(m, m);
        for &(r, c, v) in &self.triplets {
            a[(r, c)] += v;
        }
        a
    }

    /// Right-hand side in the dense layout.
    pub fn rhs(&self, node: usize, kind: Perturbation) -> Vec<f64> {
        let mut b = vec![0.0; 4 * self.lines()];
        let row = match kind {
            Perturbation::Real => node - 1,
            Perturbation::Reactive => self.lines() + node - 1,
        };
        b[row] = 1.0;
        b
    }

    /// Solution of the block system in the dense layout.
    pub fn solve_rhs(&self, b: &[f64]) -> Vec<f64> {
        let lines = self.lines();
        let n = lines + 1;
        let mut bt = vec![Vector4::zeros(); n];
        for j in 1..n {
            bt[j] = Vector4::new(b[j - 1], b[lines + j - 1], b[2 * lines + j - 1], b[3 * lines + j - 1]);
        }
        let mut y = vec![Vector4::zeros(); n];
        for &j in self.order[1..].iter().rev() {
            y[j] = self.inv[j] * bt[j];
            if let Some(i) = self.parent[j] {
                bt[i][0] += y[j][0];
                bt[i][1] += y[j][1];
            }
        }
        let mut x = vec![Vector4::zeros(); n];
        for &j in &self.order[1..] {
            x[j] = match self.parent[j] {
                Some(i) => y[j] - self.w[j] * x[i][2],
                None => y[j],
            };
        }
        let mut out = vec![0.0; 4 * lines];
        for j in 1..n {
            for k in 0..4 {
                out[k * lines + j - 1] = x[j][k];
            }
        }
        out
    }

    /// Sensitivities to the net demand of `node` (not the root).
    pub fn solve_block(&self, node: usize, kind: Perturbation) -> Result<SensitivityBlock> {
        if node == 0 || node > self.lines() {
            return Err(Error::InvalidArgument(format!(
                "cannot perturb node index {node}: the root is the slack bus"
            )));
        }
        let x = self.solve_rhs(&self.rhs(node, kind));
        let lines = self.lines();
        let mut block = SensitivityBlock {
            hour: self.hour,
            node,
            kind,
            dp: vec![0.0; lines + 1],
            dq: vec![0.0; lines + 1],
            dv: vec![0.0; lines + 1],
            dl: vec![0.0; lines + 1],
        };
        for j in 1..=lines {
            block.dp[j] = x[j - 1];
            block.dq[j] = x[lines + j - 1];
            block.dv[j] = x[2 * lines + j - 1];
            block.dl[j] = x[3 * lines + j - 1];
        }
        block.dp[0] = self.children_root.iter().map(|&k| block.dp[k]).sum();
        block.dq[0] = self.children_root.iter().map(|&k| block.dq[k]).sum();
        Ok(block)
    }

    /// `max |A x - b|` of a block against this system.
    pub fn residual(&self, block: &SensitivityBlock) -> f64 {
        let lines = self.lines();
        let mut x = vec![0.0; 4 * lines];
        for j in 1..=lines {
            x[j - 1] = block.dp[j];
            x[lines + j - 1] = block.dq[j];
            x[2 * lines + j - 1] = block.dv[j];
            x[3 * lines + j - 1] = block.dl[j];
        }
        let mut ax = self.rhs(block.node, block.kind);
        ax.iter_mut().for_each(|v| *v = -*v);
        for &(r, c, v) in &self.triplets {
            ax[r] += v * x[c];
        }
        ax.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Real and reactive blocks for every non-root node of one hour (index 0 unused).
#[derive(Debug, Clone)]
pub struct HourSensitivities {
    pub hour: usize,
    pub real: Vec<SensitivityBlock>,
    pub reactive: Vec<SensitivityBlock>,
}

impl HourSensitivities {
    pub fn block(&self, node: usize, kind: Perturbation) -> &SensitivityBlock {
        match kind {
            Perturbation::Real => &self.real[node - 1],
            Perturbation::Reactive => &self.reactive[node - 1],
        }
    }
}

pub fn hour_sensitivities(
    feeder: &Feeder,
    sol: &OpfSolution,
    hour: usize,
    exactness_tolerance: f64,
) -> Result<HourSensitivities> {
    let sys = assemble_system(feeder, &OperatingPoint::from_solution(sol, hour), exactness_tolerance)?;
    let n = feeder.node_count();
    let solve = |kind| (1..n).map(|j| sys.solve_block(j, kind)).collect::<Result<Vec<_>>>();
    Ok(HourSensitivities {
        hour,
        real: solve(Perturbation::Real)?,
        reactive: solve(Perturbation::Reactive)?,
    })
}

/// Sensitivities of all hours, computed in parallel.
pub fn all_sensitivities(feeder: &Feeder, sol: &OpfSolution, exactness_tolerance: f64) -> Result<Vec<HourSensitivities>> {
    (0..sol.horizon)
        .into_par_iter()
        .map(|t| hour_sensitivities(feeder, sol, t, exactness_tolerance))
        .collect()
}

/// Relative discrepancy between analytic sensitivities and central finite differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiniteDifferenceReport {
    /// `||fd - analytic||_inf / ||analytic||_inf` per variable group `P, Q, v, l`.
    pub errors: [f64; 4],
}

impl FiniteDifferenceReport {
    pub fn max_error(&self) -> f64 {
        self.errors.iter().copied().fold(0.0, f64::max)
    }
}

/// Re-solves the power flow with the net demand of `node` perturbed by `+-h`
/// (controls fixed) and compares central differences with the analytic block.
/// The analytic block is evaluated at the power-flow solution of the
/// unperturbed net demand.
pub fn finite_difference_check(
    feeder: &Feeder,
    sol: &OpfSolution,
    hour: usize,
    node: usize,
    kind: Perturbation,
    h: f64,
) -> Result<FiniteDifferenceReport> {
    if node == 0 {
        return Err(Error::InvalidArgument(
            "the root is the slack bus and cannot be perturbed".into(),
        ));
    }
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("perturbation size must be positive, got {h}")));
    }
    let settings = SweepSettings::default();
    let (np, nq) = (&sol.net_p[hour], &sol.net_q[hour]);
    let base = solve_power_flow(feeder, np, nq, &settings)?;
    let sys = assemble_system(feeder, &OperatingPoint::from_power_flow(&base, hour), f64::INFINITY)?;
    let an = sys.solve_block(node, kind)?;
    let perturbed = |delta: f64| {
        let (mut p, mut q) = (np.clone(), nq.clone());
        match kind {
            Perturbation::Real => p[node] += delta,
            Perturbation::Reactive => q[node] += delta,
        }
        solve_power_flow(feeder, &p, &q, &settings)
    };
    let up = perturbed(h)?;
    let dn = perturbed(-h)?;
    let group = |fd_up: &[f64], fd_dn: &[f64], an: &[f64]| {
        let mut num = 0.0f64;
        let mut den = 0.0f64;
        for j in 0..an.len() {
            num = num.max(((fd_up[j] - fd_dn[j]) / (2.0 * h) - an[j]).abs());
            den = den.max(an[j].abs());
        }
        if den > 0.0 {
            num / den
        } else {
            num
        }
    };
    Ok(FiniteDifferenceReport {
        errors: [
            group(&up.p, &dn.p, &an.dp),
            group(&up.q, &dn.q, &an.dq),
            group(&up.v, &dn.v, &an.dv),
            group(&up.l, &dn.l, &an.dl),
        ],
    })
}
