//! Run settings: command-line flags merged with an optional TOML file.
//! Values present in the file override the flags.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use dlmc_core::opf::AmpacityMode;
use dlmc_core::{CoefficientMode, MatrixConfig, SchedulingOption, TransformerAttribution};

/// Keys accepted in a `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub feeder: Option<PathBuf>,
    pub trajectories: Option<PathBuf>,
    pub fleet_template: Option<PathBuf>,
    pub q_fraction: Option<f64>,
    pub evs: Option<Vec<usize>>,
    pub pv_kva: Option<Vec<f64>>,
    pub options: Option<Vec<String>>,
    pub node: Option<u32>,
    pub protection: Option<bool>,
    pub jobs: Option<usize>,
    pub attribution: Option<String>,
    pub coefficients: Option<String>,
    pub verify: Option<bool>,
    pub unbundle: Option<bool>,
    pub out: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }
}

/// Fully resolved settings of one `run` invocation.
#[derive(Debug, Clone)]
pub struct RunSettings {
    pub feeder: Option<PathBuf>,
    pub trajectories: Option<PathBuf>,
    pub fleet_template: Option<PathBuf>,
    pub q_fraction: f64,
    pub node: Option<u32>,
    pub out: PathBuf,
    pub matrix: MatrixConfig,
}

pub fn parse_attribution(s: &str) -> Result<TransformerAttribution> {
    match s.trim().to_ascii_lowercase().as_str() {
        "all" | "all-transformers" => Ok(TransformerAttribution::AllTransformers),
        "co-located" | "colocated" | "local" => Ok(TransformerAttribution::CoLocated),
        other => bail!("unknown attribution {other:?} (expected all or co-located)"),
    }
}

pub fn parse_coefficients(s: &str) -> Result<CoefficientMode> {
    match s.trim().to_ascii_lowercase().as_str() {
        "model" => Ok(CoefficientMode::Model),
        "reference" | "reference-constants" => Ok(CoefficientMode::ReferenceConstants),
        other => bail!("unknown coefficient mode {other:?} (expected model or reference)"),
    }
}

pub fn parse_options(list: &[String]) -> Result<Vec<SchedulingOption>> {
    list.iter()
        .flat_map(|s| s.split(','))
        .filter(|s| !s.trim().is_empty())
        .map(|s| SchedulingOption::from_str(s).map_err(Into::into))
        .collect()
}

fn parse_list<T: FromStr>(key: &str, values: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    values
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<T>()
                .map_err(|e| anyhow::anyhow!("grid {key}: cannot parse {v:?}: {e}"))
        })
        .collect()
}

/// Parses `evs=0,3,6 pv=0,30,60` grid terms.
pub fn parse_grid(terms: &[String]) -> Result<(Option<Vec<usize>>, Option<Vec<f64>>)> {
    let (mut evs, mut pv) = (None, None);
    for term in terms {
        let Some((key, values)) = term.split_once('=') else {
            bail!("grid term {term:?} is not key=values");
        };
        match key.trim() {
            "evs" | "ev" => evs = Some(parse_list(key, values)?),
            "pv" | "pv_kva" | "pv-kva" => pv = Some(parse_list(key, values)?),
            other => bail!("unknown grid dimension {other:?} (expected evs or pv)"),
        }
    }
    Ok((evs, pv))
}

/// Flag values of `run` before the config file is applied.
#[derive(Debug, Default, Clone)]
pub struct RunFlags {
    pub feeder: Option<PathBuf>,
    pub trajectories: Option<PathBuf>,
    pub fleet_template: Option<PathBuf>,
    pub q_fraction: Option<f64>,
    pub grid: Vec<String>,
    pub options: Vec<String>,
    pub evs: Option<usize>,
    pub pv_kva: Option<f64>,
    pub option: Option<String>,
    pub node: Option<u32>,
    pub protection: bool,
    pub jobs: Option<usize>,
    pub attribution: Option<String>,
    pub coefficients: Option<String>,
    pub no_verify: bool,
    pub no_unbundle: bool,
    pub out: Option<PathBuf>,
}

pub fn resolve(flags: RunFlags, file: FileConfig) -> Result<RunSettings> {
    let mut m = MatrixConfig::default();
    let (grid_evs, grid_pv) = parse_grid(&flags.grid)?;
    if let Some(v) = file.evs.or(flags.evs.map(|n| vec![n])).or(grid_evs) {
        m.evs = v;
    }
    if let Some(v) = file.pv_kva.or(flags.pv_kva.map(|k| vec![k])).or(grid_pv) {
        m.pv_kva = v;
    }
    let options = match (file.options, &flags.option) {
        (Some(list), _) => Some(parse_options(&list)?),
        (None, Some(one)) => Some(parse_options(std::slice::from_ref(one))?),
        (None, None) if !flags.options.is_empty() => Some(parse_options(&flags.options)?),
        _ => None,
    };
    if let Some(o) = options {
        m.options = o;
    }
    if m.evs.is_empty() || m.pv_kva.is_empty() || m.options.is_empty() {
        bail!("the scenario grid is empty");
    }
    if m.pv_kva.iter().any(|k| !k.is_finite() || *k < 0.0) {
        bail!("PV capacities must be finite and nonnegative");
    }
    if file.protection.unwrap_or(flags.protection) {
        m.opf.transformer_ampacity = AmpacityMode::PROTECTION;
    }
    m.jobs = file.jobs.or(flags.jobs).unwrap_or(0);
    if let Some(a) = file.attribution.or(flags.attribution) {
        m.dlmc.attribution = parse_attribution(&a)?;
    }
    if let Some(c) = file.coefficients.or(flags.coefficients) {
        m.dlmc.coefficients = parse_coefficients(&c)?;
    }
    m.verify = file.verify.unwrap_or(!flags.no_verify);
    m.unbundle = file.unbundle.unwrap_or(!flags.no_unbundle);
    let q_fraction = file
        .q_fraction
        .or(flags.q_fraction)
        .unwrap_or(dlmc_core::trajectories::DEFAULT_REACTIVE_PRICE_FRACTION);
    if !(q_fraction.is_finite() && q_fraction >= 0.0) {
        bail!("reactive price fraction must be nonnegative");
    }
    let out = file.out.or(flags.out).context("an output directory is required (--out)")?;
    Ok(RunSettings {
        feeder: file.feeder.or(flags.feeder),
        trajectories: file.trajectories.or(flags.trajectories),
        fleet_template: file.fleet_template.or(flags.fleet_template),
        q_fraction,
        node: file.node.or(flags.node),
        out,
        matrix: m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags() -> RunFlags {
        RunFlags {
            out: Some("out".into()),
            ..RunFlags::default()
        }
    }

    #[test]
    fn grid_terms() {
        let (e, p) = parse_grid(&["evs=0,9,12".into(), "pv=0,90,120".into()]).unwrap();
        assert_eq!(e.unwrap(), vec![0, 9, 12]);
        assert_eq!(p.unwrap(), vec![0.0, 90.0, 120.0]);
        assert!(parse_grid(&["evs".into()]).is_err());
        assert!(parse_grid(&["wind=1".into()]).is_err());
        assert!(parse_grid(&["evs=1,x".into()]).is_err());
    }

    #[test]
    fn defaults_are_the_full_grid() {
        let s = resolve(flags(), FileConfig::default()).unwrap();
        assert_eq!(s.matrix.evs, vec![0, 3, 6]);
        assert_eq!(s.matrix.pv_kva, vec![0.0, 30.0, 60.0]);
        assert_eq!(s.matrix.options.len(), 4);
        assert_eq!(s.matrix.opf.transformer_ampacity, AmpacityMode::Off);
    }

    #[test]
    fn single_cell_flags_narrow_the_grid() {
        let f = RunFlags {
            evs: Some(6),
            pv_kva: Some(0.0),
            option: Some("full-opt".into()),
            protection: true,
            ..flags()
        };
        let s = resolve(f, FileConfig::default()).unwrap();
        assert_eq!(
            (s.matrix.evs, s.matrix.pv_kva, s.matrix.options),
            (vec![6], vec![0.0], vec![SchedulingOption::FullOpt])
        );
        assert_eq!(s.matrix.opf.transformer_ampacity, AmpacityMode::PROTECTION);
    }

    #[test]
    fn file_values_override_flags() {
        let file: FileConfig = toml::from_str(
            r#"evs = [9, 12]
               options = ["pq", "full"]
               attribution = "co-located"
               jobs = 3"#,
        )
        .unwrap();
        let f = RunFlags {
            grid: vec!["evs=0,3".into()],
            jobs: Some(8),
            ..flags()
        };
        let s = resolve(f, file).unwrap();
        assert_eq!(s.matrix.evs, vec![9, 12]);
        assert_eq!(s.matrix.options, vec![SchedulingOption::PqOpt, SchedulingOption::FullOpt]);
        assert_eq!(s.matrix.dlmc.attribution, TransformerAttribution::CoLocated);
        assert_eq!(s.matrix.jobs, 3);
    }

    #[test]
    fn bad_settings_are_rejected() {
        assert!(toml::from_str::<FileConfig>("colour = 1").is_err());
        let f = RunFlags {
            options: vec!["bau,cheap".into()],
            ..flags()
        };
        assert!(resolve(f, FileConfig::default()).is_err());
        assert!(resolve(RunFlags::default(), FileConfig::default()).is_err());
    }
}
