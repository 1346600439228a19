//! Linear + second-order-cone programs with semantically tagged rows.
//!
//! Every variable and every constraint carries a tag so that primal values and
//! duals can be pulled back out by meaning (`BalanceP { node, hour }`, ...)
//! instead of by position. The solver backend is Clarabel; the program itself
//! does not depend on it and can also be written out in CBF.
//!
//! Dual convention: for a linear row `a'x (= | <=) b` the stored multiplier
//! `z` satisfies `dV/db = -z`, so `z >= 0` on inequality rows.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::time::Instant;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RowId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConeId(pub usize);

/// Variable tags. `node` is the internal node index; line quantities use the
/// index of the line's child node. Hours are zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarTag {
    RootP {
        hour: usize,
    },
    RootQ {
        hour: usize,
    },
    RootQImport {
        hour: usize,
    },
    RootQExport {
        hour: usize,
    },
    P {
        node: usize,
        hour: usize,
    },
    Q {
        node: usize,
        hour: usize,
    },
    V {
        node: usize,
        hour: usize,
    },
    L {
        node: usize,
        hour: usize,
    },
    EvP {
        ev: usize,
        hour: usize,
    },
    EvQ {
        ev: usize,
        hour: usize,
    },
    /// State of charge at the end of `hour`; `hour = 0` is the initial state.
    EvSoc {
        ev: usize,
        hour: usize,
    },
    PvP {
        pv: usize,
        hour: usize,
    },
    PvQ {
        pv: usize,
        hour: usize,
    },
    /// Top-oil temperature at the end of `hour`; `hour = 0` is the initial state.
    TopOil {
        transformer: usize,
        hour: usize,
    },
    HotSpot {
        transformer: usize,
        hour: usize,
    },
    Aging {
        transformer: usize,
        hour: usize,
    },
}

impl fmt::Display for VarTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use VarTag::*;
        match *self {
            RootP { hour } => write!(f, "P0[{hour}]"),
            RootQ { hour } => write!(f, "Q0[{hour}]"),
            RootQImport { hour } => write!(f, "Q0+[{hour}]"),
            RootQExport { hour } => write!(f, "Q0-[{hour}]"),
            P { node, hour } => write!(f, "P[{node},{hour}]"),
            Q { node, hour } => write!(f, "Q[{node},{hour}]"),
            V { node, hour } => write!(f, "v[{node},{hour}]"),
            L { node, hour } => write!(f, "l[{node},{hour}]"),
            EvP { ev, hour } => write!(f, "p_ev[{ev},{hour}]"),
            EvQ { ev, hour } => write!(f, "q_ev[{ev},{hour}]"),
            EvSoc { ev, hour } => write!(f, "soc[{ev},{hour}]"),
            PvP { pv, hour } => write!(f, "p_pv[{pv},{hour}]"),
            PvQ { pv, hour } => write!(f, "q_pv[{pv},{hour}]"),
            TopOil { transformer, hour } => write!(f, "theta_to[{transformer},{hour}]"),
            HotSpot { transformer, hour } => write!(f, "theta_h[{transformer},{hour}]"),
            Aging { transformer, hour } => write!(f, "aging[{transformer},{hour}]"),
        }
    }
}

/// Constraint tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RowTag {
    RootBalanceP {
        hour: usize,
    },
    RootBalanceQ {
        hour: usize,
    },
    BalanceP {
        node: usize,
        hour: usize,
    },
    BalanceQ {
        node: usize,
        hour: usize,
    },
    VoltageDrop {
        node: usize,
        hour: usize,
    },
    VoltageUpper {
        node: usize,
        hour: usize,
    },
    VoltageLower {
        node: usize,
        hour: usize,
    },
    Ampacity {
        node: usize,
        hour: usize,
    },
    BranchCone {
        node: usize,
        hour: usize,
    },
    EvRate {
        ev: usize,
        hour: usize,
    },
    EvCone {
        ev: usize,
        hour: usize,
    },
    SocRecursion {
        ev: usize,
        hour: usize,
    },
    SocUpper {
        ev: usize,
        hour: usize,
    },
    EvDeparture {
        ev: usize,
    },
    EvPeriodicity {
        ev: usize,
    },
    PvAvailable {
        pv: usize,
        hour: usize,
    },
    PvCone {
        pv: usize,
        hour: usize,
    },
    TopOilRecurrence {
        transformer: usize,
        hour: usize,
    },
    HotSpotDefinition {
        transformer: usize,
        hour: usize,
    },
    AgingSegment {
        transformer: usize,
        hour: usize,
        segment: usize,
    },
    ThermalPeriodicity {
        transformer: usize,
    },
    /// Generic `x >= 0` bound.
    NonNegative(VarTag),
    /// Fixes a variable to a given value.
    Pin(VarTag),
}

impl fmt::Display for RowTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Eq,
    Le,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub tag: RowTag,
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// `constant + sum(coef * x)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Affine {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl Affine {
    pub fn var(v: VarId, coef: f64) -> Self {
        Self {
            terms: vec![(v, coef)],
            constant: 0.0,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn terms(terms: Vec<(VarId, f64)>, constant: f64) -> Self {
        Self { terms, constant }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * x[v.0]).sum::<f64>()
    }
}

/// `|| tail || <= head`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeRow {
    pub tag: RowTag,
    pub head: Affine,
    pub tail: Vec<Affine>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub tol_gap_abs: f64,
    pub tol_gap_rel: f64,
    pub tol_feas: f64,
    pub max_iter: u32,
    pub verbose: bool,
    /// Treat Clarabel's reduced-accuracy termination as a usable solution.
    pub accept_reduced_accuracy: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol_gap_abs: 1e-9,
            tol_gap_rel: 1e-9,
            tol_feas: 1e-9,
            max_iter: 300,
            verbose: false,
            accept_reduced_accuracy: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    ReducedAccuracy,
    Infeasible,
    Unbounded,
    IterationLimit,
    NumericalError,
}

impl SolveStatus {
    pub fn is_usable(self, settings: &SolverSettings) -> bool {
        match self {
            SolveStatus::Optimal => true,
            SolveStatus::ReducedAccuracy => settings.accept_reduced_accuracy,
            _ => false,
        }
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::ReducedAccuracy => "optimal (reduced accuracy)",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::IterationLimit => "iteration limit",
            SolveStatus::NumericalError => "numerical error",
        };
        f.write_str(s)
    }
}

impl From<SolverStatus> for SolveStatus {
    fn from(s: SolverStatus) -> Self {
        match s {
            SolverStatus::Solved => SolveStatus::Optimal,
            SolverStatus::AlmostSolved => SolveStatus::ReducedAccuracy,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
            SolverStatus::MaxIterations | SolverStatus::MaxTime => SolveStatus::IterationLimit,
            _ => SolveStatus::NumericalError,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ConvexProgram {
    vars: Vec<VarTag>,
    var_index: HashMap<VarTag, VarId>,
    cost: Vec<f64>,
    rows: Vec<LinearRow>,
    row_index: HashMap<RowTag, RowId>,
    cones: Vec<ConeRow>,
    cone_index: HashMap<RowTag, ConeId>,
}

impl ConvexProgram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a free variable.
    ///
    /// # Panics
    ///
    /// Panics if the tag is already in use.
    pub fn add_var(&mut self, tag: VarTag) -> VarId {
        let id = VarId(self.vars.len());
        let prev = self.var_index.insert(tag, id);
        assert!(prev.is_none(), "duplicate variable {tag}");
        self.vars.push(tag);
        self.cost.push(0.0);
        id
    }

    pub fn var(&self, tag: VarTag) -> Option<VarId> {
        self.var_index.get(&tag).copied()
    }

    pub fn var_tag(&self, v: VarId) -> VarTag {
        self.vars[v.0]
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn add_cost(&mut self, v: VarId, c: f64) {
        self.cost[v.0] += c;
    }

    pub fn cost(&self) -> &[f64] {
        &self.cost
    }

    fn push_row(&mut self, tag: RowTag, terms: Vec<(VarId, f64)>, sense: Sense, rhs: f64) -> RowId {
        let id = RowId(self.rows.len());
        let prev = self.row_index.insert(tag, id);
        assert!(prev.is_none(), "duplicate row {tag}");
        self.rows.push(LinearRow {
            tag,
            terms: merge_terms(terms),
            sense,
            rhs,
        });
        id
    }

    /// `sum(terms) = rhs`
    pub fn add_eq(&mut self, tag: RowTag, terms: Vec<(VarId, f64)>, rhs: f64) -> RowId {
        self.push_row(tag, terms, Sense::Eq, rhs)
    }

    /// `sum(terms) <= rhs`
    pub fn add_le(&mut self, tag: RowTag, terms: Vec<(VarId, f64)>, rhs: f64) -> RowId {
        self.push_row(tag, terms, Sense::Le, rhs)
    }

    /// `x >= 0`
    pub fn add_nonneg(&mut self, v: VarId) -> RowId {
        let tag = RowTag::NonNegative(self.vars[v.0]);
        self.add_le(tag, vec![(v, -1.0)], 0.0)
    }

    pub fn add_soc(&mut self, tag: RowTag, head: Affine, tail: Vec<Affine>) -> ConeId {
        let id = ConeId(self.cones.len());
        let prev = self.cone_index.insert(tag, id);
        assert!(prev.is_none(), "duplicate cone {tag}");
        self.cones.push(ConeRow {
            tag,
            head: Affine::terms(merge_terms(head.terms), head.constant),
            tail: tail
                .into_iter()
                .map(|a| Affine::terms(merge_terms(a.terms), a.constant))
                .collect(),
        });
        id
    }

    pub fn row(&self, tag: RowTag) -> Option<RowId> {
        self.row_index.get(&tag).copied()
    }

    pub fn cone(&self, tag: RowTag) -> Option<ConeId> {
        self.cone_index.get(&tag).copied()
    }

    pub fn rows(&self) -> &[LinearRow] {
        &self.rows
    }

    pub fn cones(&self) -> &[ConeRow] {
        &self.cones
    }

    /// Number of linear rows and cones whose tag satisfies the predicate.
    pub fn count(&self, pred: impl Fn(&RowTag) -> bool) -> usize {
        self.rows.iter().filter(|r| pred(&r.tag)).count() + self.cones.iter().filter(|c| pred(&c.tag)).count()
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.cost.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest violation of any linear row or cone at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for r in &self.rows {
            let lhs: f64 = r.terms.iter().map(|&(v, c)| c * x[v.0]).sum();
            let viol = match r.sense {
                Sense::Eq => (lhs - r.rhs).abs(),
                Sense::Le => (lhs - r.rhs).max(0.0),
            };
            worst = worst.max(viol);
        }
        for c in &self.cones {
            let head = c.head.eval(x);
            let norm = c.tail.iter().map(|a| a.eval(x).powi(2)).sum::<f64>().sqrt();
            worst = worst.max(norm - head);
        }
        worst
    }

    pub fn solve(&self, settings: &SolverSettings) -> Result<ProgramSolution> {
        let n = self.vars.len();
        let eq: Vec<usize> = (0..self.rows.len()).filter(|&k| self.rows[k].sense == Sense::Eq).collect();
        let le: Vec<usize> = (0..self.rows.len()).filter(|&k| self.rows[k].sense == Sense::Le).collect();

        let mut ii = Vec::new();
        let mut jj = Vec::new();
        let mut vv = Vec::new();
        let mut b = Vec::new();
        let mut row_pos = vec![0usize; self.rows.len()];
        for &k in eq.iter().chain(le.iter()) {
            let r = &self.rows[k];
            row_pos[k] = b.len();
            for &(v, c) in &r.terms {
                ii.push(b.len());
                jj.push(v.0);
                vv.push(c);
            }
            b.push(r.rhs);
        }
        let mut cone_pos = Vec::with_capacity(self.cones.len());
        for c in &self.cones {
            cone_pos.push(b.len());
            for a in std::iter::once(&c.head).chain(c.tail.iter()) {
                for &(v, coef) in &a.terms {
                    ii.push(b.len());
                    jj.push(v.0);
                    vv.push(-coef);
                }
                b.push(a.constant);
            }
        }
        let m = b.len();

        let mut cones = Vec::new();
        if !eq.is_empty() {
            cones.push(SupportedConeT::ZeroConeT(eq.len()));
        }
        if !le.is_empty() {
            cones.push(SupportedConeT::NonnegativeConeT(le.len()));
        }
        for c in &self.cones {
            cones.push(SupportedConeT::SecondOrderConeT(1 + c.tail.len()));
        }

        let p = CscMatrix::<f64>::zeros((n, n));
        let a = CscMatrix::new_from_triplets(m, n, ii, jj, vv);
        let clarabel_settings = DefaultSettingsBuilder::default()
            .verbose(settings.verbose)
            .max_iter(settings.max_iter)
            .tol_gap_abs(settings.tol_gap_abs)
            .tol_gap_rel(settings.tol_gap_rel)
            .tol_feas(settings.tol_feas)
            .presolve_enable(false)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("solver settings: {e:?}")))?;

        let start = Instant::now();
        let mut solver = DefaultSolver::new(&p, &self.cost, &a, &b, &cones, clarabel_settings)
            .map_err(|e| Error::InvalidArgument(format!("malformed program: {e:?}")))?;
        solver.solve();
        let elapsed = start.elapsed().as_secs_f64();
        let sol = &solver.solution;

        let row_duals = (0..self.rows.len()).map(|k| sol.z[row_pos[k]]).collect();
        let cone_duals = self
            .cones
            .iter()
            .zip(&cone_pos)
            .map(|(c, &start)| sol.z[start..start + 1 + c.tail.len()].to_vec())
            .collect();
        Ok(ProgramSolution {
            status: sol.status.into(),
            x: sol.x.clone(),
            row_duals,
            cone_duals,
            primal_objective: sol.obj_val,
            dual_objective: sol.obj_val_dual,
            iterations: sol.iterations,
            solve_time: elapsed,
        })
    }

    /// Writes the program in Conic Benchmark Format (version 3).
    pub fn write_cbf<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "# {} variables, {} linear rows, {} cones",
            self.vars.len(),
            self.rows.len(),
            self.cones.len()
        )?;
        writeln!(w, "VER\n3\n")?;
        writeln!(w, "OBJSENSE\nMIN\n")?;
        writeln!(w, "VAR\n{} 1\nF {}\n", self.vars.len(), self.vars.len())?;

        // CBF rows are `A x + b in K`.
        struct Entry {
            coeffs: Vec<(usize, f64)>,
            b: f64,
        }
        let mut blocks: Vec<(&str, Vec<Entry>)> = Vec::new();
        let mut eq = Vec::new();
        let mut le = Vec::new();
        for r in &self.rows {
            match r.sense {
                Sense::Eq => eq.push(Entry {
                    coeffs: r.terms.iter().map(|&(v, c)| (v.0, c)).collect(),
                    b: -r.rhs,
                }),
                Sense::Le => le.push(Entry {
                    coeffs: r.terms.iter().map(|&(v, c)| (v.0, -c)).collect(),
                    b: r.rhs,
                }),
            }
        }
        if !eq.is_empty() {
            blocks.push(("L=", eq));
        }
        if !le.is_empty() {
            blocks.push(("L+", le));
        }
        for c in &self.cones {
            let entries = std::iter::once(&c.head)
                .chain(c.tail.iter())
                .map(|a| Entry {
                    coeffs: a.terms.iter().map(|&(v, k)| (v.0, k)).collect(),
                    b: a.constant,
                })
                .collect();
            blocks.push(("Q", entries));
        }
        let total: usize = blocks.iter().map(|(_, e)| e.len()).sum();
        writeln!(w, "CON\n{} {}", total, blocks.len())?;
        for (kind, entries) in &blocks {
            writeln!(w, "{kind} {}", entries.len())?;
        }
        writeln!(w)?;

        let obj: Vec<(usize, f64)> = self
            .cost
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(j, c)| (j, *c))
            .collect();
        writeln!(w, "OBJACOORD\n{}", obj.len())?;
        for (j, c) in obj {
            writeln!(w, "{j} {c:e}")?;
        }
        writeln!(w)?;

        let mut acoord = Vec::new();
        let mut bcoord = Vec::new();
        let mut row = 0usize;
        for (_, entries) in &blocks {
            for e in entries {
                for &(j, c) in &e.coeffs {
                    acoord.push((row, j, c));
                }
                if e.b != 0.0 {
                    bcoord.push((row, e.b));
                }
                row += 1;
            }
        }
        writeln!(w, "ACOORD\n{}", acoord.len())?;
        for (i, j, c) in acoord {
            writeln!(w, "{i} {j} {c:e}")?;
        }
        writeln!(w)?;
        writeln!(w, "BCOORD\n{}", bcoord.len())?;
        for (i, b) in bcoord {
            writeln!(w, "{i} {b:e}")?;
        }
        Ok(())
    }
}

fn merge_terms(mut terms: Vec<(VarId, f64)>) -> Vec<(VarId, f64)> {
    terms.sort_by_key(|t| t.0);
    let mut out: Vec<(VarId, f64)> = Vec::with_capacity(terms.len());
    for (v, c) in terms {
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 += c,
            _ => out.push((v, c)),
        }
    }
    out.retain(|&(_, c)| c != 0.0);
    out
}

#[derive(Debug, Clone)]
pub struct ProgramSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub row_duals: Vec<f64>,
    pub cone_duals: Vec<Vec<f64>>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub iterations: u32,
    pub solve_time: f64,
}

impl ProgramSolution {
    pub fn value(&self, v: VarId) -> f64 {
        self.x[v.0]
    }

    pub fn dual(&self, r: RowId) -> f64 {
        self.row_duals[r.0]
    }

    /// Relative primal-dual objective gap.
    pub fn duality_gap(&self) -> f64 {
        (self.primal_objective - self.dual_objective).abs() / self.primal_objective.abs().max(1.0)
    }
}
