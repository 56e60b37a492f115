use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::sorption::SorptionParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquationKind {
    Advection,
    Burgers,
    DiffusionSorption,
    Darcy,
}

impl EquationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EquationKind::Advection => "advection",
            EquationKind::Burgers => "burgers",
            EquationKind::DiffusionSorption => "diffusion_sorption",
            EquationKind::Darcy => "darcy",
        }
    }

    /// The parameter a mixed-parameter dataset cycles through.
    pub fn sweep_param(self) -> &'static str {
        match self {
            EquationKind::Advection | EquationKind::Darcy => "beta",
            EquationKind::Burgers => "nu",
            EquationKind::DiffusionSorption => "D",
        }
    }

    fn param_names(self) -> &'static [&'static str] {
        match self {
            EquationKind::Advection | EquationKind::Darcy => &["beta"],
            EquationKind::Burgers => &["nu"],
            EquationKind::DiffusionSorption => &["phi", "rho_s", "k", "n_f", "D"],
        }
    }

    pub fn spatial_dims(self) -> usize {
        if self == EquationKind::Darcy {
            2
        } else {
            1
        }
    }
}

impl fmt::Display for EquationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EquationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "advection" => Ok(EquationKind::Advection),
            "burgers" => Ok(EquationKind::Burgers),
            "diffusion_sorption" => Ok(EquationKind::DiffusionSorption),
            "darcy" => Ok(EquationKind::Darcy),
            "navier_stokes" | "shallow_water" => Err(Error::Unsupported(format!("no generator for equation `{s}`"))),
            _ => Err(Error::Config(format!("unknown equation `{s}`"))),
        }
    }
}

/// Everything that determines a generated dataset, apart from the sample count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquationSpec {
    pub kind: EquationKind,
    pub params: BTreeMap<String, f64>,
    pub grid: Vec<usize>,
    pub t_end: f64,
    pub n_steps: usize,
    pub seed: u64,
}

impl EquationSpec {
    /// Defaults per equation: 1-D runs on 256 points over `t in [0, 1]`,
    /// diffusion-sorption on 1024 cells over `t in [0, 500]`, Darcy on a
    /// 128 x 128 interior grid. All with 100 output steps except Darcy.
    pub fn default_for(kind: EquationKind) -> Self {
        let mut params = BTreeMap::new();
        let (grid, t_end, n_steps) = match kind {
            EquationKind::Advection => {
                params.insert("beta".into(), 1.0);
                (vec![256], 1.0, 100)
            }
            EquationKind::Burgers => {
                params.insert("nu".into(), 0.01);
                (vec![256], 1.0, 100)
            }
            EquationKind::DiffusionSorption => {
                let p = SorptionParams::default();
                params.insert("phi".into(), p.phi);
                params.insert("rho_s".into(), p.rho_s);
                params.insert("k".into(), p.k);
                params.insert("n_f".into(), p.n_f);
                params.insert("D".into(), p.d);
                (vec![1024], 500.0, 100)
            }
            EquationKind::Darcy => {
                params.insert("beta".into(), 1.0);
                (vec![128, 128], 1.0, 1)
            }
        };
        Self {
            kind,
            params,
            grid,
            t_end,
            n_steps,
            seed: 0,
        }
    }

    pub fn param(&self, name: &str) -> Result<f64> {
        self.params
            .get(name)
            .copied()
            .ok_or_else(|| Error::Config(format!("{} requires parameter `{name}`", self.kind)))
    }

    pub fn sorption_params(&self) -> Result<SorptionParams> {
        Ok(SorptionParams {
            phi: self.param("phi")?,
            rho_s: self.param("rho_s")?,
            k: self.param("k")?,
            n_f: self.param("n_f")?,
            d: self.param("D")?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let names = self.kind.param_names();
        for (name, &v) in &self.params {
            if !names.contains(&name.as_str()) {
                return Err(Error::Config(format!("{} has no parameter `{name}`", self.kind)));
            }
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("parameter `{name}` must be positive, got {v}")));
            }
        }
        for name in names {
            self.param(name)?;
        }
        if self.kind == EquationKind::DiffusionSorption && self.param("phi")? >= 1.0 {
            return Err(Error::Config("porosity must be below 1".into()));
        }
        if self.n_steps == 0 {
            return Err(Error::Config("n_steps must be at least 1".into()));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!("t_end must be positive, got {}", self.t_end)));
        }
        if self.grid.len() != self.kind.spatial_dims() {
            return Err(Error::Config(format!(
                "{} needs a {}-D grid, got {:?}",
                self.kind,
                self.kind.spatial_dims(),
                self.grid
            )));
        }
        match self.kind {
            EquationKind::Advection | EquationKind::Burgers => super::check_power_of_two(self.grid[0])?,
            EquationKind::DiffusionSorption if self.grid[0] < 2 => {
                return Err(Error::Config("diffusion-sorption needs at least 2 cells".into()))
            }
            EquationKind::Darcy if self.n_steps != 1 => {
                return Err(Error::Config("Darcy datasets hold one (source, pressure) pair: n_steps = 1".into()))
            }
            EquationKind::Darcy if self.grid.iter().any(|&n| n < 2) => {
                return Err(Error::Config("Darcy grid needs at least 2 x 2 nodes".into()))
            }
            _ => {}
        }
        Ok(())
    }

    /// Grid spacing along the first axis.
    pub fn dx(&self) -> f64 {
        match self.kind {
            EquationKind::Advection | EquationKind::Burgers => std::f64::consts::TAU / self.grid[0] as f64,
            EquationKind::DiffusionSorption => 1.0 / self.grid[0] as f64,
            EquationKind::Darcy => 1.0 / (self.grid[0] + 1) as f64,
        }
    }

    /// Spacing between stored frames.
    pub fn dt(&self) -> f64 {
        self.t_end / self.n_steps as f64
    }

    /// Number of stored frames per sample.
    pub fn frames(&self) -> usize {
        self.n_steps + 1
    }
}
