//! Experiment configuration: TOML sections with key = value entries,
//! coefficient expressions in the small arithmetic grammar, and field-level
//! validation.

use anyhow::{bail, Context, Result};
use paraobs_core::mesh::{CoefficientSet, Grid};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;

use crate::expr::Expr;

/// A value that may be pinned or left to the runner ("auto").
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum AutoOr {
    Auto(String),
    Value(f64),
}

impl AutoOr {
    pub fn resolve(&self, auto: impl FnOnce() -> f64) -> Result<f64> {
        match self {
            AutoOr::Value(v) => Ok(*v),
            AutoOr::Auto(tag) if tag == "auto" => Ok(auto()),
            AutoOr::Auto(tag) => bail!("expected a number or \"auto\", got {tag:?}"),
        }
    }

    fn validate(&self, field: &str) -> Result<()> {
        if let AutoOr::Auto(tag) = self {
            if tag != "auto" {
                bail!("{field}: expected a number or \"auto\", got {tag:?}");
            }
        }
        Ok(())
    }
}

impl Default for AutoOr {
    fn default() -> Self {
        AutoOr::Auto("auto".into())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DomainConfig {
    /// "interval" or "rectangle"
    pub kind: String,
    pub x: [f64; 2],
    #[serde(default)]
    pub y: Option<[f64; 2]>,
    /// nodes per axis: a single value applies to both axes
    pub n: usize,
    #[serde(default)]
    pub ny: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TimeConfig {
    pub t_final: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CoefficientConfig {
    /// expression for the principal coefficient (xx entry; isotropic default)
    pub principal: String,
    /// optional yy entry in 2D (defaults to `principal`)
    #[serde(default)]
    pub principal_y: Option<String>,
    pub drift: String,
    #[serde(default)]
    pub drift_y: Option<String>,
    pub potential: String,
    pub ellipticity: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RegionConfig {
    /// observation core ω̃ as an x-interval (and y-interval in 2D)
    pub obs_tilde: [f64; 2],
    #[serde(default)]
    pub obs_tilde_y: Option<[f64; 2]>,
    /// enclosing observation region ω
    pub omega: [f64; 2],
    #[serde(default)]
    pub omega_y: Option<[f64; 2]>,
    /// E as a finite union of disjoint open intervals in (0, T)
    pub time_set: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CarlemanConfig {
    /// weight strength s; "auto" picks s*/2
    #[serde(default)]
    pub s: AutoOr,
    pub h: f64,
    /// stage-4 gap factor l > 1
    pub l: f64,
    /// stage-4 exponent M; "auto" uses the computed threshold M_l
    #[serde(default)]
    pub m: AutoOr,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunConfig {
    /// cosine modes k = 1..modes as initial data
    pub modes: usize,
    /// additional random nodal initial data
    pub random: usize,
    /// held-out random initial data for fit validation
    pub holdout_random: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CheckConfig {
    /// any of: solve, energy, weights, identities, frequency, interpolation,
    /// observability
    pub suites: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub dir: String,
    #[serde(default = "default_format")]
    pub format: String,
}

fn default_out_dir() -> String {
    "out".into()
}

fn default_format() -> String {
    "json".into()
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_out_dir(), format: default_format() }
    }
}

pub const SUITE_NAMES: [&str; 7] =
    ["solve", "energy", "weights", "identities", "frequency", "interpolation", "observability"];

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExperimentConfig {
    pub domain: DomainConfig,
    pub time: TimeConfig,
    pub coefficients: CoefficientConfig,
    pub regions: RegionConfig,
    pub carleman: CarlemanConfig,
    pub runs: RunConfig,
    pub checks: CheckConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).context("parsing config")?;
        Ok(cfg)
    }

    /// Field-level validation; returns the first offending field by name.
    pub fn validate(&self) -> Result<()> {
        let d = &self.domain;
        match d.kind.as_str() {
            "interval" => {}
            "rectangle" => {
                if d.y.is_none() {
                    bail!("domain.y: rectangle domains need a y extent");
                }
            }
            other => bail!("domain.kind: expected \"interval\" or \"rectangle\", got {other:?}"),
        }
        if d.x[1] <= d.x[0] {
            bail!("domain.x: degenerate extent [{}, {}]", d.x[0], d.x[1]);
        }
        if d.n < 8 {
            bail!("domain.n: at least 8 nodes required, got {}", d.n);
        }
        if self.time.t_final <= 0.0 {
            bail!("time.t_final: must be positive");
        }
        if self.time.dt <= 0.0 {
            bail!("time.dt: must be positive");
        }
        let steps = self.time.t_final / self.time.dt;
        if (steps - steps.round()).abs() > 1e-8 * steps {
            bail!("time.dt: {} does not divide t_final = {}", self.time.dt, self.time.t_final);
        }

        Expr::parse(&self.coefficients.principal).context("coefficients.principal")?;
        Expr::parse(&self.coefficients.drift).context("coefficients.drift")?;
        Expr::parse(&self.coefficients.potential).context("coefficients.potential")?;
        if let Some(p) = &self.coefficients.principal_y {
            Expr::parse(p).context("coefficients.principal_y")?;
        }
        if let Some(p) = &self.coefficients.drift_y {
            Expr::parse(p).context("coefficients.drift_y")?;
        }
        if self.coefficients.ellipticity < 1.0 {
            bail!("coefficients.ellipticity: must be ≥ 1");
        }

        let inside = |r: [f64; 2], lo: f64, hi: f64| r[0] > lo && r[1] < hi && r[0] < r[1];
        if !inside(self.regions.obs_tilde, d.x[0], d.x[1]) {
            bail!(
                "regions.obs_tilde: [{}, {}] is not strictly inside the domain [{}, {}]",
                self.regions.obs_tilde[0],
                self.regions.obs_tilde[1],
                d.x[0],
                d.x[1]
            );
        }
        if !inside(self.regions.omega, d.x[0], d.x[1]) {
            bail!("regions.omega: not strictly inside the domain");
        }
        if self.regions.obs_tilde[0] < self.regions.omega[0]
            || self.regions.obs_tilde[1] > self.regions.omega[1]
        {
            bail!("regions.obs_tilde: must be contained in regions.omega");
        }
        let mut prev_end = 0.0;
        let mut sorted = self.regions.time_set.clone();
        if sorted.is_empty() {
            bail!("regions.time_set: must contain at least one interval");
        }
        sorted.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
        for (i, iv) in sorted.iter().enumerate() {
            if iv[0] < 0.0 || iv[1] > self.time.t_final || iv[0] >= iv[1] {
                bail!(
                    "regions.time_set: interval {i} = [{}, {}] is not inside (0, {})",
                    iv[0],
                    iv[1],
                    self.time.t_final
                );
            }
            if iv[0] < prev_end {
                bail!("regions.time_set: intervals overlap");
            }
            prev_end = iv[1];
        }

        if !(self.carleman.h > 0.0 && self.carleman.h <= 1.0) {
            bail!("carleman.h: must lie in (0, 1]");
        }
        if self.carleman.l <= 1.0 {
            bail!("carleman.l: must exceed 1");
        }
        self.carleman.s.validate("carleman.s")?;
        if let AutoOr::Value(s) = self.carleman.s {
            if !(s > 0.0 && s <= 1.0) {
                bail!("carleman.s: must lie in (0, 1]");
            }
        }
        self.carleman.m.validate("carleman.m")?;

        if self.runs.modes + self.runs.random == 0 {
            bail!("runs: need at least one initial datum");
        }

        if self.checks.suites.is_empty() {
            bail!("checks.suites: at least one suite required");
        }
        for s in &self.checks.suites {
            if !SUITE_NAMES.contains(&s.as_str()) {
                bail!("checks.suites: unknown suite {s:?} (known: {SUITE_NAMES:?})");
            }
        }
        match self.output.format.as_str() {
            "json" | "csv" => {}
            other => bail!("output.format: expected \"json\" or \"csv\", got {other:?}"),
        }
        Ok(())
    }

    pub fn build_grid(&self) -> Result<Arc<Grid>> {
        let d = &self.domain;
        let grid = match d.kind.as_str() {
            "interval" => Grid::interval(d.x[0], d.x[1], d.n)?,
            _ => {
                let y = d.y.expect("validated");
                Grid::rectangle((d.x[0], d.x[1]), (y[0], y[1]), (d.n, d.ny.unwrap_or(d.n)))?
            }
        };
        Ok(grid)
    }

    pub fn build_coefficients(&self, grid: &Arc<Grid>) -> Result<CoefficientSet> {
        let axx = Expr::parse(&self.coefficients.principal)?;
        let ayy = match &self.coefficients.principal_y {
            Some(p) => Expr::parse(p)?,
            None => axx.clone(),
        };
        let bx = Expr::parse(&self.coefficients.drift)?;
        let by = match &self.coefficients.drift_y {
            Some(p) => Expr::parse(p)?,
            None => Expr::parse("0")?,
        };
        let pot = Expr::parse(&self.coefficients.potential)?;
        let dim = grid.dim();
        let coef = CoefficientSet::from_fns(
            grid.clone(),
            |p| {
                let mut m = [0.0; 4];
                m[0] = axx.eval(p[0], p[1]);
                if dim == 2 {
                    m[3] = ayy.eval(p[0], p[1]);
                }
                m
            },
            |p| [bx.eval(p[0], p[1]), if dim == 2 { by.eval(p[0], p[1]) } else { 0.0 }],
            |p| pot.eval(p[0], p[1]),
            self.coefficients.ellipticity,
        )?;
        Ok(coef)
    }

    /// Node mask of an axis-aligned open box.
    pub fn region_mask(&self, grid: &Arc<Grid>, x_range: [f64; 2], y_range: Option<[f64; 2]>) -> Vec<bool> {
        (0..grid.len())
            .map(|i| {
                let p = grid.coords(i);
                let in_x = p[0] > x_range[0] && p[0] < x_range[1];
                let in_y = match (grid.dim(), y_range) {
                    (2, Some(r)) => p[1] > r[0] && p[1] < r[1],
                    (2, None) => true,
                    _ => true,
                };
                in_x && in_y
            })
            .collect()
    }

    pub fn obs_tilde_mask(&self, grid: &Arc<Grid>) -> Vec<bool> {
        self.region_mask(grid, self.regions.obs_tilde, self.regions.obs_tilde_y)
    }

    pub fn omega_mask(&self, grid: &Arc<Grid>) -> Vec<bool> {
        self.region_mask(grid, self.regions.omega, self.regions.omega_y)
    }
}

/// A ready-made 1D heat configuration used by tests and as a template.
pub fn example_config() -> ExperimentConfig {
    ExperimentConfig {
        domain: DomainConfig { kind: "interval".into(), x: [0.0, 1.0], y: None, n: 129, ny: None },
        time: TimeConfig { t_final: 1.0, dt: 2e-3 },
        coefficients: CoefficientConfig {
            principal: "1".into(),
            principal_y: None,
            drift: "0".into(),
            drift_y: None,
            potential: "0".into(),
            ellipticity: 1.0,
        },
        regions: RegionConfig {
            obs_tilde: [0.4, 0.6],
            obs_tilde_y: None,
            omega: [0.3, 0.7],
            omega_y: None,
            time_set: vec![[0.0, 0.5]],
        },
        carleman: CarlemanConfig {
            s: AutoOr::Auto("auto".into()),
            h: 0.25,
            l: 2.0,
            m: AutoOr::Auto("auto".into()),
        },
        runs: RunConfig { modes: 8, random: 4, holdout_random: 4, seed: 42 },
        checks: CheckConfig { suites: SUITE_NAMES.iter().map(|s| s.to_string()).collect() },
        output: OutputConfig::default(),
    }
}
