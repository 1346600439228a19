//! Transformer top-oil / hot-spot dynamics and piecewise-linear insulation aging.
//!
//! Hourly recurrence with load ratio `k_t = l_t / l_N` (squared current over
//! nominal squared current):
//!
//! ```text
//! theta_to[t] = a * theta_to[t-1] + (1 - a) * (theta_amb[t] + dTO * (1 + R k_t) / (1 + R))
//! theta_h[t]  = theta_to[t] + dH * k_t
//! F[t]        = PWL(theta_h[t])          (aging at end-of-hour hot spot)
//! ```
//!
//! State index 0 is the initial top-oil temperature; hourly quantities use
//! hours `0..T`, and `theta_to` hour `t` ends at state index `t + 1`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::program::{ConvexProgram, RowTag, VarId, VarTag};

/// Arrhenius constant of the thermally upgraded paper aging curve.
const ARRHENIUS_B: f64 = 15000.0;
/// Reference hot-spot temperature at which the aging factor is 1.
pub const REFERENCE_HOT_SPOT: f64 = 110.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformerThermalParams {
    /// Rated load losses over no-load losses.
    pub loss_ratio: f64,
    /// Top-oil rise over ambient at rated load, degC.
    pub top_oil_rise: f64,
    /// Hot-spot rise over top oil at rated load, degC.
    pub hot_spot_rise: f64,
    /// Hourly top-oil decay factor.
    pub decay: f64,
    /// Cost of one hour of loss of life, $.
    pub cost_per_hour: f64,
    /// Nominal squared current, pu.
    pub nominal_sq_current: f64,
}

impl TransformerThermalParams {
    /// Reference parameters with the given nominal squared current.
    pub fn reference(nominal_sq_current: f64) -> Self {
        Self {
            loss_ratio: 5.0,
            top_oil_rise: 55.0,
            hot_spot_rise: 25.0,
            decay: 0.75,
            cost_per_hour: 1.0,
            nominal_sq_current,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.loss_ratio > 0.0) {
            return Err(format!("loss ratio must be positive, got {}", self.loss_ratio));
        }
        if !(self.top_oil_rise > 0.0 && self.hot_spot_rise > 0.0) {
            return Err("temperature rises must be positive".into());
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(format!("decay must lie in (0, 1), got {}", self.decay));
        }
        if !(self.cost_per_hour >= 0.0) || !self.cost_per_hour.is_finite() {
            return Err(format!("cost per hour must be nonnegative, got {}", self.cost_per_hour));
        }
        if !(self.nominal_sq_current > 0.0) {
            return Err("nominal squared current must be positive".into());
        }
        Ok(())
    }

    /// `d theta_to[t] / d l[t]` within the same hour, degC per pu of squared current.
    pub fn top_oil_gain(&self) -> f64 {
        let r = self.loss_ratio;
        (1.0 - self.decay) * self.top_oil_rise * r / ((1.0 + r) * self.nominal_sq_current)
    }

    /// `d (theta_h - theta_to) / d l`, degC per pu of squared current.
    pub fn winding_gain(&self) -> f64 {
        self.hot_spot_rise / self.nominal_sq_current
    }

    /// Load-independent forcing of the top-oil recurrence at a given ambient.
    pub fn top_oil_offset(&self, ambient: f64) -> f64 {
        (1.0 - self.decay) * (ambient + self.top_oil_rise / (1.0 + self.loss_ratio))
    }

    /// Steady-state top-oil input `u_t` for load `l` and ambient.
    pub fn top_oil_input(&self, l: f64, ambient: f64) -> f64 {
        let r = self.loss_ratio;
        ambient + self.top_oil_rise * (1.0 + r * l / self.nominal_sq_current) / (1.0 + r)
    }

    /// Winding over same-hour top-oil marginal contribution.
    pub fn same_hour_ratio(&self) -> f64 {
        self.winding_gain() / self.top_oil_gain()
    }
}

/// How the same-hour and propagated top-oil coefficients are obtained when
/// the transformer component is decomposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CoefficientMode {
    /// Derived from the recurrence: `(1-a) dTO R / (1+R)` and `dH`.
    #[default]
    Model,
    /// Fixed published constants 55/6 (top oil) and 20 (winding).
    ReferenceConstants,
}

/// Marginal temperature coefficients, already divided by the nominal squared current.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalCoefficients {
    pub top_oil: f64,
    pub winding: f64,
    pub decay: f64,
}

impl ThermalCoefficients {
    pub fn new(params: &TransformerThermalParams, mode: CoefficientMode) -> Self {
        match mode {
            CoefficientMode::Model => Self {
                top_oil: params.top_oil_gain(),
                winding: params.winding_gain(),
                decay: params.decay,
            },
            CoefficientMode::ReferenceConstants => Self {
                top_oil: 55.0 / 6.0 / params.nominal_sq_current,
                winding: 20.0 / params.nominal_sq_current,
                decay: params.decay,
            },
        }
    }

    pub fn ratio(&self) -> f64 {
        self.winding / self.top_oil
    }
}

/// Exact Arrhenius aging acceleration factor (1 at 110 degC).
pub fn arrhenius_aging(hot_spot: f64) -> f64 {
    (ARRHENIUS_B / (REFERENCE_HOT_SPOT + 273.0) - ARRHENIUS_B / (hot_spot + 273.0)).exp()
}

/// Derivative of [`arrhenius_aging`] with respect to the hot spot.
pub fn arrhenius_slope(hot_spot: f64) -> f64 {
    let k = hot_spot + 273.0;
    arrhenius_aging(hot_spot) * ARRHENIUS_B / (k * k)
}

/// Hot spot at which the Arrhenius slope equals `slope` (slope is increasing on [0, 1000] degC).
fn hot_spot_for_slope(slope: f64) -> f64 {
    let (mut lo, mut hi) = (-50.0f64, 1000.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if arrhenius_slope(mid) < slope {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgingSegment {
    pub slope: f64,
    pub intercept: f64,
    /// Temperature at which the segment touches the Arrhenius curve.
    pub tangent_at: f64,
}

impl AgingSegment {
    pub fn eval(&self, hot_spot: f64) -> f64 {
        self.intercept + self.slope * hot_spot
    }
}

/// Convex piecewise-linear aging factor: `max(0, max_k(b_k + alpha_k theta))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgingPwl {
    segments: Vec<AgingSegment>,
}

impl AgingPwl {
    pub const DEFAULT_SEGMENTS: usize = 8;
    pub const LOWEST_SLOPE: f64 = 0.009;
    pub const HIGHEST_SLOPE: f64 = 22.37;

    /// Eight tangents to the Arrhenius curve with slopes spaced geometrically
    /// from 0.009 to 22.37; the tangent closest (in log slope) to the 110 degC
    /// reference is moved onto it so that the PWL is exactly 1 there.
    pub fn calibrated() -> Self {
        Self::tangents(Self::DEFAULT_SEGMENTS, Self::LOWEST_SLOPE, Self::HIGHEST_SLOPE)
    }

    /// `count >= 2` tangents with geometric slopes between `lowest` and `highest`.
    pub fn tangents(count: usize, lowest: f64, highest: f64) -> Self {
        assert!(count >= 2 && lowest > 0.0 && highest > lowest);
        let ratio = (highest / lowest).powf(1.0 / (count - 1) as f64);
        let mut points: Vec<f64> = (0..count)
            .map(|k| hot_spot_for_slope(lowest * ratio.powi(k as i32)))
            .collect();
        let reference_slope = arrhenius_slope(REFERENCE_HOT_SPOT).ln();
        let nearest = (1..count - 1)
            .min_by(|&a, &b| {
                let da = (arrhenius_slope(points[a]).ln() - reference_slope).abs();
                let db = (arrhenius_slope(points[b]).ln() - reference_slope).abs();
                da.total_cmp(&db)
            })
            .expect("at least one interior tangent");
        if points[nearest - 1] < REFERENCE_HOT_SPOT && REFERENCE_HOT_SPOT < points[nearest + 1] {
            points[nearest] = REFERENCE_HOT_SPOT;
        }
        Self::from_tangent_points(&points)
    }

    /// Tangents to the Arrhenius curve at the given increasing temperatures.
    pub fn from_tangent_points(points: &[f64]) -> Self {
        let segments = points
            .iter()
            .map(|&p| {
                let slope = arrhenius_slope(p);
                AgingSegment {
                    slope,
                    intercept: arrhenius_aging(p) - slope * p,
                    tangent_at: p,
                }
            })
            .collect();
        Self { segments }
    }

    pub fn segments(&self) -> &[AgingSegment] {
        &self.segments
    }

    pub fn slopes(&self) -> Vec<f64> {
        self.segments.iter().map(|s| s.slope).collect()
    }

    pub fn evaluate(&self, hot_spot: f64) -> f64 {
        self.segments.iter().map(|s| s.eval(hot_spot)).fold(0.0, f64::max)
    }

    /// Index of the active segment, or `None` on the zero floor. Ties go to the steeper segment.
    pub fn active_segment(&self, hot_spot: f64) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (k, s) in self.segments.iter().enumerate() {
            let v = s.eval(hot_spot);
            let tol = 1e-12 * v.abs().max(1.0);
            if best.is_none_or(|(_, b)| v >= b - tol) {
                best = Some((k, v));
            }
        }
        best.filter(|&(_, v)| v > 0.0).map(|(k, _)| k)
    }

    /// Slope of the active piece (0 on the floor).
    pub fn slope_at(&self, hot_spot: f64) -> f64 {
        self.active_segment(hot_spot).map_or(0.0, |k| self.segments[k].slope)
    }

    /// Temperatures where consecutive segments intersect; the first entry is
    /// where the lowest segment leaves the zero floor.
    pub fn breakpoints(&self) -> Vec<f64> {
        let first = &self.segments[0];
        std::iter::once(-first.intercept / first.slope)
            .chain(
                self.segments
                    .windows(2)
                    .map(|w| (w[0].intercept - w[1].intercept) / (w[1].slope - w[0].slope)),
            )
            .collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["segment", "slope", "intercept", "tangent_at_c", "starts_at_c"])?;
        for (k, (s, b)) in self.segments.iter().zip(self.breakpoints()).enumerate() {
            wtr.write_record([
                (k + 1).to_string(),
                format!("{:.6}", s.slope),
                format!("{:.6}", s.intercept),
                format!("{:.4}", s.tangent_at),
                format!("{b:.4}"),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

impl Default for AgingPwl {
    fn default() -> Self {
        Self::calibrated()
    }
}

/// Initial top-oil temperature for a simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InitialTopOil {
    /// Fixed point of the daily cycle.
    Periodic,
    Given(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalTrajectory {
    /// Top oil at state indices `0..=T`.
    pub top_oil: Vec<f64>,
    /// Hot spot at state indices `0..=T`; index 0 uses the last hour's load (daily cycle).
    pub hot_spot: Vec<f64>,
    /// Aging factor for hours `0..T` (end-of-hour hot spot).
    pub aging: Vec<f64>,
    /// Loss of life per hour, hours.
    pub loss_of_life: Vec<f64>,
}

impl ThermalTrajectory {
    pub fn total_loss_of_life(&self) -> f64 {
        self.loss_of_life.iter().sum()
    }

    pub fn peak_hot_spot(&self) -> f64 {
        self.hot_spot[1..].iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Top-oil temperature at state 0 that reproduces itself after one cycle.
pub fn solve_periodic_initial(params: &TransformerThermalParams, load: &[f64], ambient: &[f64]) -> f64 {
    assert_eq!(load.len(), ambient.len());
    let a = params.decay;
    let t = load.len() as i32;
    // theta_T = a^T theta_0 + sum_t a^(T-t) (1-a) u_t
    let forced: f64 = load
        .iter()
        .zip(ambient)
        .enumerate()
        .map(|(k, (&l, &amb))| a.powi(t - 1 - k as i32) * (1.0 - a) * params.top_oil_input(l, amb))
        .sum();
    forced / (1.0 - a.powi(t))
}

pub fn simulate_temperatures(
    params: &TransformerThermalParams,
    aging: &AgingPwl,
    load: &[f64],
    ambient: &[f64],
    initial: InitialTopOil,
) -> ThermalTrajectory {
    assert_eq!(load.len(), ambient.len(), "load and ambient lengths differ");
    assert!(!load.is_empty(), "empty horizon");
    let a = params.decay;
    let theta0 = match initial {
        InitialTopOil::Periodic => solve_periodic_initial(params, load, ambient),
        InitialTopOil::Given(v) => v,
    };
    let kh = params.winding_gain();
    let mut top_oil = Vec::with_capacity(load.len() + 1);
    let mut hot_spot = Vec::with_capacity(load.len() + 1);
    top_oil.push(theta0);
    hot_spot.push(theta0 + kh * load[load.len() - 1]);
    for (&l, &amb) in load.iter().zip(ambient) {
        let prev = *top_oil.last().unwrap();
        let to = a * prev + (1.0 - a) * params.top_oil_input(l, amb);
        top_oil.push(to);
        hot_spot.push(to + kh * l);
    }
    let f: Vec<f64> = hot_spot[1..].iter().map(|&h| aging.evaluate(h)).collect();
    ThermalTrajectory {
        top_oil,
        hot_spot,
        loss_of_life: f.clone(),
        aging: f,
    }
}

/// Variables created for one transformer by [`emit_thermal_block`].
#[derive(Debug, Clone)]
pub struct ThermalVars {
    /// State indices `0..=T`.
    pub top_oil: Vec<VarId>,
    /// Hours `0..T`.
    pub hot_spot: Vec<VarId>,
    /// Hours `0..T`.
    pub aging: Vec<VarId>,
}

/// Adds the thermal rows of one transformer to a program:
/// top-oil recurrence (equality), hot-spot definition (equality), one
/// epigraph row per PWL segment, `F >= 0`, top-oil periodicity, and the
/// objective term `c_y * sum_t F_t`.
///
/// `load[t]` is the squared-current variable of the transformer line at hour `t`.
pub fn emit_thermal_block(
    prog: &mut ConvexProgram,
    transformer: usize,
    params: &TransformerThermalParams,
    aging: &AgingPwl,
    load: &[VarId],
    ambient: &[f64],
    periodic: bool,
) -> ThermalVars {
    assert_eq!(load.len(), ambient.len());
    let horizon = load.len();
    let a = params.decay;
    let k_to = params.top_oil_gain();
    let k_h = params.winding_gain();

    let top_oil: Vec<VarId> = (0..=horizon)
        .map(|hour| prog.add_var(VarTag::TopOil { transformer, hour }))
        .collect();
    let hot_spot: Vec<VarId> = (0..horizon)
        .map(|hour| prog.add_var(VarTag::HotSpot { transformer, hour }))
        .collect();
    let f: Vec<VarId> = (0..horizon)
        .map(|hour| prog.add_var(VarTag::Aging { transformer, hour }))
        .collect();

    for t in 0..horizon {
        prog.add_eq(
            RowTag::TopOilRecurrence { transformer, hour: t },
            vec![(top_oil[t + 1], 1.0), (top_oil[t], -a), (load[t], -k_to)],
            params.top_oil_offset(ambient[t]),
        );
        prog.add_eq(
            RowTag::HotSpotDefinition { transformer, hour: t },
            vec![(hot_spot[t], 1.0), (top_oil[t + 1], -1.0), (load[t], -k_h)],
            0.0,
        );
        for (segment, s) in aging.segments().iter().enumerate() {
            prog.add_le(
                RowTag::AgingSegment {
                    transformer,
                    hour: t,
                    segment,
                },
                vec![(hot_spot[t], s.slope), (f[t], -1.0)],
                -s.intercept,
            );
        }
        prog.add_nonneg(f[t]);
        prog.add_cost(f[t], params.cost_per_hour);
    }
    if periodic {
        prog.add_eq(
            RowTag::ThermalPeriodicity { transformer },
            vec![(top_oil[horizon], 1.0), (top_oil[0], -1.0)],
            0.0,
        );
    }
    ThermalVars {
        top_oil,
        hot_spot,
        aging: f,
    }
}
