//! Day-ahead distribution pricing for radial feeders with EVs, PV inverters
//! and thermally monitored service transformers.
//!
//! The pipeline is:
//!
//! 1. [`opf`] builds a second-order cone relaxation of the branch-flow model
//!    over a 24 hour horizon, optionally with transformer top-oil and hot-spot
//!    dynamics and a piecewise-linear aging epigraph, and solves it.
//! 2. [`sensitivity`] differentiates the power-flow equations at the solved
//!    operating point to obtain `dP, dQ, dv, dl` per unit change of nodal demand.
//! 3. [`dlmc`] splits every nodal balance dual into energy, real and reactive
//!    loss, voltage, ampacity and transformer components, and splits the
//!    transformer component into same-hour, later-hour and beyond-horizon terms.
//! 4. [`selfsched`] posts the nodal prices back to each device and checks that
//!    the co-optimized dispatch is the device's own optimum.
//! 5. [`runner`] runs a grid of EV/PV penetrations and scheduling options and
//!    persists the results.
//!
//! ```no_run
//! use std::sync::Arc;
//! use dlmc_core::{reference, run_matrix, MatrixConfig};
//!
//! let feeder = Arc::new(reference::feeder());
//! let traj = Arc::new(reference::trajectories(&feeder));
//! let results = run_matrix(feeder, traj, &reference::fleet_template(), &MatrixConfig::default())?;
//! assert_eq!(results.failed(), 0);
//! # Ok::<(), dlmc_core::Error>(())
//! ```

pub mod der;
pub mod dlmc;
pub mod error;
pub mod feeder;
pub mod opf;
pub mod powerflow;
pub mod program;
pub mod reference;
pub mod runner;
pub mod scenario;
pub mod selfsched;
pub mod sensitivity;
pub mod thermal;
pub mod trajectories;
pub mod units;

pub use der::{DerFleet, DerSchedule, Ev, FleetTemplate, Pv};
pub use dlmc::{
    DlmcComponents, DlmcOptions, DlmcReport, PriceSignals, Side, TransformerAttribution, TransformerComponentDecomposition,
};
pub use error::{Error, Result};
pub use feeder::{Feeder, NodeId};
pub use opf::{AmpacityMode, OpfOptions, OpfSolution, ReactiveCost};
pub use program::SolverSettings;
pub use runner::{run_matrix, CellKey, MatrixConfig, ResultSet};
pub use scenario::{ScenarioCase, SchedulingOption};
pub use selfsched::VerificationReport;
pub use thermal::{AgingPwl, CoefficientMode};
pub use trajectories::ExogenousTrajectories;
pub use units::PerUnitBase;
