//! Hourly exogenous data: prices, ambient temperature, PV availability and base loads.
//!
//! CSV layout: one row per hour with columns `hour, lmp, q_price, ambient,
//! pv_factor`, then load columns. A node's load comes from explicit
//! `p_kw_<id>` / `q_kvar_<id>` columns when present, otherwise from the
//! `<class>_pct` profile column of its load class (percent of nameplate,
//! converted with the node power factor). A blank `q_price` means the
//! default fraction of the LMP.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feeder::Feeder;

pub const DEFAULT_REACTIVE_PRICE_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExogenousTrajectories {
    pub horizon: usize,
    /// Root LMP, $/MWh.
    pub lmp: Vec<f64>,
    /// Root reactive opportunity price, $/MVArh.
    pub q_price: Vec<f64>,
    /// Ambient temperature, degC.
    pub ambient: Vec<f64>,
    /// PV availability factor in [0, 1].
    pub pv_factor: Vec<f64>,
    /// Base real load, pu, indexed `[hour][node]`.
    pub load_p: Vec<Vec<f64>>,
    /// Base reactive load, pu, indexed `[hour][node]`.
    pub load_q: Vec<Vec<f64>>,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidTrajectories(msg.into())
}

impl ExogenousTrajectories {
    /// Trajectories without any base load; mostly useful for small studies and tests.
    pub fn unloaded(feeder: &Feeder, lmp: Vec<f64>, ambient: Vec<f64>, pv_factor: Vec<f64>) -> Result<Self> {
        let horizon = lmp.len();
        let q_price = lmp.iter().map(|l| DEFAULT_REACTIVE_PRICE_FRACTION * l).collect();
        let zeros = vec![vec![0.0; feeder.node_count()]; horizon];
        let t = Self {
            horizon,
            lmp,
            q_price,
            ambient,
            pv_factor,
            load_p: zeros.clone(),
            load_q: zeros,
        };
        t.validate(feeder)?;
        Ok(t)
    }

    /// Sets the base load of one node (pu) for every hour.
    pub fn with_load(mut self, node: usize, p: &[f64], q: &[f64]) -> Result<Self> {
        if p.len() != self.horizon || q.len() != self.horizon {
            return Err(invalid("load series length differs from horizon"));
        }
        for t in 0..self.horizon {
            self.load_p[t][node] = p[t];
            self.load_q[t][node] = q[t];
        }
        Ok(self)
    }

    pub fn with_reactive_fraction(mut self, fraction: f64) -> Self {
        self.q_price = self.lmp.iter().map(|l| fraction * l).collect();
        self
    }

    pub fn validate(&self, feeder: &Feeder) -> Result<()> {
        let t = self.horizon;
        if t == 0 {
            return Err(invalid("empty horizon"));
        }
        for (name, series) in [
            ("lmp", &self.lmp),
            ("q_price", &self.q_price),
            ("ambient", &self.ambient),
            ("pv_factor", &self.pv_factor),
        ] {
            if series.len() != t {
                return Err(invalid(format!("{name} has {} entries, expected {t}", series.len())));
            }
            if series.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("{name} contains non-finite values")));
            }
        }
        if let Some(r) = self.pv_factor.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(invalid(format!("pv_factor {r} outside [0, 1]")));
        }
        for loads in [&self.load_p, &self.load_q] {
            if loads.len() != t || loads.iter().any(|row| row.len() != feeder.node_count()) {
                return Err(invalid("load matrix shape does not match horizon x nodes"));
            }
        }
        Ok(())
    }

    /// Net base demand of the whole feeder at an hour (pu).
    pub fn total_load(&self, hour: usize) -> (f64, f64) {
        (self.load_p[hour].iter().sum(), self.load_q[hour].iter().sum())
    }
}

/// Reads trajectories from CSV, resolving node load columns against the feeder.
pub fn load_trajectories(path: impl AsRef<Path>, feeder: &Feeder, q_fraction: f64) -> Result<ExogenousTrajectories> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_trajectories(file, feeder, q_fraction)
}

pub fn read_trajectories<R: Read>(reader: R, feeder: &Feeder, q_fraction: f64) -> Result<ExogenousTrajectories> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col: HashMap<&str, usize> = headers.iter().enumerate().map(|(k, h)| (h, k)).collect();
    for required in ["hour", "lmp", "ambient", "pv_factor"] {
        if !col.contains_key(required) {
            return Err(invalid(format!("missing column `{required}`")));
        }
    }

    let mut rows: Vec<csv::StringRecord> = Vec::new();
    for rec in rdr.records() {
        rows.push(rec?);
    }
    let horizon = rows.len();
    let num = |row: &csv::StringRecord, c: usize, name: &str| -> Result<f64> {
        row.get(c)
            .unwrap_or("")
            .parse::<f64>()
            .map_err(|_| invalid(format!("column `{name}`: cannot parse `{}`", row.get(c).unwrap_or(""))))
    };

    let mut lmp = Vec::with_capacity(horizon);
    let mut q_price = Vec::with_capacity(horizon);
    let mut ambient = Vec::with_capacity(horizon);
    let mut pv_factor = Vec::with_capacity(horizon);
    for (k, row) in rows.iter().enumerate() {
        let hour = num(row, col["hour"], "hour")?;
        if hour as usize != k + 1 {
            return Err(invalid(format!("row {} has hour {hour}, expected {}", k + 1, k + 1)));
        }
        let l = num(row, col["lmp"], "lmp")?;
        lmp.push(l);
        let q = match col.get("q_price").and_then(|&c| row.get(c)) {
            Some(s) if !s.is_empty() => num(row, col["q_price"], "q_price")?,
            _ => q_fraction * l,
        };
        q_price.push(q);
        ambient.push(num(row, col["ambient"], "ambient")?);
        pv_factor.push(num(row, col["pv_factor"], "pv_factor")?);
    }

    let base = feeder.base;
    let mut load_p = vec![vec![0.0; feeder.node_count()]; horizon];
    let mut load_q = vec![vec![0.0; feeder.node_count()]; horizon];
    for (j, node) in feeder.nodes().iter().enumerate() {
        let p_col = col.get(format!("p_kw_{}", node.id).as_str()).copied();
        let q_col = col.get(format!("q_kvar_{}", node.id).as_str()).copied();
        if p_col.is_some() || q_col.is_some() {
            for (t, row) in rows.iter().enumerate() {
                if let Some(c) = p_col {
                    load_p[t][j] = base.kva_to_pu(num(row, c, "p_kw")?);
                }
                if let Some(c) = q_col {
                    load_q[t][j] = base.kva_to_pu(num(row, c, "q_kvar")?);
                }
            }
            continue;
        }
        if let Some(load) = &node.load {
            let name = format!("{}_pct", load.class);
            let c = *col
                .get(name.as_str())
                .ok_or_else(|| invalid(format!("node {} needs profile column `{name}`", node.id)))?;
            let qf = (1.0 - load.pf * load.pf).max(0.0).sqrt();
            for (t, row) in rows.iter().enumerate() {
                let s = num(row, c, &name)? / 100.0 * base.kva_to_pu(load.kva);
                load_p[t][j] = s * load.pf;
                load_q[t][j] = s * qf;
            }
        }
    }

    let traj = ExogenousTrajectories {
        horizon,
        lmp,
        q_price,
        ambient,
        pv_factor,
        load_p,
        load_q,
    };
    traj.validate(feeder)?;
    Ok(traj)
}
