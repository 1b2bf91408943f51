//! Scenario configuration files (TOML).
//!
//! A scenario bundles the grid, the energy coefficients, the load
//! schedule, the initial plastic strain, run controls and audit
//! tolerances.  Parsing is strict (`deny_unknown_fields`), serialization
//! round-trips, and `build` turns the description into solver inputs.
//!
//! ```toml
//! [grid]
//! nx = 8; ny = 8; nz = 8
//! hx = 0.125; hy = 0.125; hz = 0.125
//! topology = "periodic"            # or "box" with dirichlet_face = "x_min"
//!
//! [energy]          # stress-like units; defaults shown
//! mu = 1.0          # shear coefficient of Q
//! visc = 1.0        # viscosity a of R = (a/2)|q|^2  [stress * time]
//! delta = 0.0       # weight of |grad p|^r
//! r = 2.0
//!
//! [load]
//! preset = "ramp"                  # zero | constant | ramp | sine | tabulated
//! rate = 1.0                       # ramp slope   [force / time]
//! horizon = 1.0                    # T            [time]
//! spatial = [{ component = 0, wave = [1, 0, 0], amplitude = 1.0 }]
//!
//! [initial]
//! kind = "zero"                    # zero | file | mode
//!
//! [run]
//! n_steps = 32
//! tol = 1e-10
//! seed = 42
//! out_dir = "out"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::energies::EnergyConfig;
use crate::field::{mode_matrix, mode_vector, MatrixField, VectorField};
use crate::grid::{make_grid, Grid, GridSpec};
use crate::operators::OperatorContext;
use crate::snapshot::read_snapshot;
use crate::stepper::{LoadSchedule, TimeProfile};
use crate::verify::AuditTolerances;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergySection {
    pub mu: f64,
    pub lam: f64,
    pub visc: f64,
    pub hp_coeff: f64,
    pub he_coeff: f64,
    pub delta: f64,
    pub r: f64,
    pub q_quartic: f64,
    pub r_quartic: f64,
    /// Smoothing parameter of the non-quadratic gradient term.
    pub smoothing_eps: f64,
}

impl Default for EnergySection {
    fn default() -> Self {
        EnergySection {
            mu: 1.0,
            lam: 0.0,
            visc: 1.0,
            hp_coeff: 0.0,
            he_coeff: 0.0,
            delta: 0.0,
            r: 2.0,
            q_quartic: 0.0,
            r_quartic: 0.0,
            smoothing_eps: 1e-8,
        }
    }
}

/// One spatial Fourier mode of a vector field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorModeSpec {
    pub component: usize,
    pub wave: [i32; 3],
    #[serde(default)]
    pub cosine: bool,
    #[serde(default = "one")]
    pub amplitude: f64,
}

/// One spatial Fourier mode of a matrix field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixModeSpec {
    pub row: usize,
    pub col: usize,
    pub wave: [i32; 3],
    #[serde(default)]
    pub cosine: bool,
    #[serde(default = "one")]
    pub amplitude: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "lowercase")]
pub enum LoadPreset {
    Zero,
    Constant,
    Ramp,
    Sine,
    Tabulated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadSection {
    pub preset: LoadPreset,
    /// Time horizon `T`.
    pub horizon: f64,
    #[serde(default)]
    pub spatial: Vec<VectorModeSpec>,
    /// Constant / sine amplitude.
    #[serde(default = "one")]
    pub amplitude: f64,
    /// Ramp slope.
    #[serde(default = "one")]
    pub rate: f64,
    /// Sine angular frequency.
    #[serde(default = "one")]
    pub omega: f64,
    /// Knot file for tabulated schedules: CSV rows `t,scale`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "lowercase")]
pub enum InitialKind {
    Zero,
    File,
    Mode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub kind: InitialKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default)]
    pub modes: Vec<MatrixModeSpec>,
}

impl Default for InitialSection {
    fn default() -> Self {
        InitialSection {
            kind: InitialKind::Zero,
            file: None,
            modes: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub n_steps: usize,
    pub tol: f64,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Evaluate the divergence identity (needs delta = 0, H_e = H_p = 0).
    pub delta_zero_certificate: bool,
    /// Write per-step field snapshots next to the ledger.
    pub snapshots: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            n_steps: 16,
            tol: 1e-10,
            seed: 42,
            out_dir: PathBuf::from("out"),
            delta_zero_certificate: false,
            snapshots: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub grid: GridSpec,
    #[serde(default)]
    pub energy: EnergySection,
    pub load: LoadSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub tolerances: AuditTolerances,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        let s: Scenario =
            toml::from_str(text).map_err(|e| Error::Scenario(format!("parse error: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(&path)?;
        let mut s = Self::parse(&text)?;
        // referenced files resolve relative to the scenario file
        if let Some(dir) = path.as_ref().parent() {
            if let Some(f) = &s.load.file {
                if f.is_relative() {
                    s.load.file = Some(dir.join(f));
                }
            }
            if let Some(f) = &s.initial.file {
                if f.is_relative() {
                    s.initial.file = Some(dir.join(f));
                }
            }
        }
        s.validate_files()?;
        Ok(s)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Scenario(format!("serialize: {e}")))
    }

    /// Cross-field consistency checks.
    pub fn validate(&self) -> Result<()> {
        let cfg = self.energy_config();
        cfg.validate()?;
        if self.run.delta_zero_certificate
            && (self.energy.delta != 0.0
                || self.energy.hp_coeff != 0.0
                || self.energy.he_coeff != 0.0)
        {
            return Err(Error::Scenario(
                "delta_zero_certificate requires delta = 0 and H_e = H_p = 0".into(),
            ));
        }
        if !(self.load.horizon > 0.0) {
            return Err(Error::Scenario("load horizon must be positive".into()));
        }
        if self.load.preset == LoadPreset::Tabulated && self.load.file.is_none() {
            return Err(Error::Scenario("tabulated load needs a file".into()));
        }
        if self.initial.kind == InitialKind::File && self.initial.file.is_none() {
            return Err(Error::Scenario("initial kind 'file' needs a file".into()));
        }
        for m in &self.load.spatial {
            if m.component > 2 {
                return Err(Error::Scenario("load mode component out of range".into()));
            }
        }
        for m in &self.initial.modes {
            if m.row > 2 || m.col > 2 {
                return Err(Error::Scenario("initial mode indices out of range".into()));
            }
        }
        Ok(())
    }

    fn validate_files(&self) -> Result<()> {
        for f in [&self.load.file, &self.initial.file].into_iter().flatten() {
            if !f.exists() {
                return Err(Error::Scenario(format!(
                    "referenced file {} does not exist",
                    f.display()
                )));
            }
        }
        Ok(())
    }

    pub fn energy_config(&self) -> EnergyConfig<f64> {
        EnergyConfig {
            mu: self.energy.mu,
            lam: self.energy.lam,
            visc: self.energy.visc,
            hp_coeff: self.energy.hp_coeff,
            he_coeff: self.energy.he_coeff,
            delta: self.energy.delta,
            r: self.energy.r,
            q_quartic: self.energy.q_quartic,
            r_quartic: self.energy.r_quartic,
        }
    }

    pub fn build_grid(&self) -> Result<Grid<f64>> {
        make_grid(&self.grid)
    }

    pub fn build_context(&self) -> Result<OperatorContext<f64>> {
        let grid = self.build_grid()?;
        let scheme = match grid.topology() {
            crate::Topology::Periodic => crate::Scheme::Spectral,
            crate::Topology::Box => crate::Scheme::Centered,
        };
        OperatorContext::new(grid, scheme, self.energy.smoothing_eps)
    }

    fn spatial_field(&self, grid: &Grid<f64>) -> VectorField<f64> {
        let mut f = VectorField::zeros(grid);
        for m in &self.load.spatial {
            f.axpy(
                1.0,
                &mode_vector(grid, m.component, m.wave, m.cosine, m.amplitude),
            );
        }
        f
    }

    pub fn build_schedule(&self, grid: &Grid<f64>) -> Result<LoadSchedule<f64>> {
        let horizon = self.load.horizon;
        let spatial = self.spatial_field(grid);
        Ok(match self.load.preset {
            LoadPreset::Zero => LoadSchedule::zero(grid, horizon),
            LoadPreset::Constant => LoadSchedule::Analytic {
                spatial,
                profile: TimeProfile::Constant {
                    value: self.load.amplitude,
                },
                horizon,
            },
            LoadPreset::Ramp => LoadSchedule::Analytic {
                spatial,
                profile: TimeProfile::Ramp {
                    rate: self.load.rate,
                },
                horizon,
            },
            LoadPreset::Sine => LoadSchedule::Analytic {
                spatial,
                profile: TimeProfile::Sine {
                    amplitude: self.load.amplitude,
                    omega: self.load.omega,
                },
                horizon,
            },
            LoadPreset::Tabulated => {
                let path = self.load.file.as_ref().expect("validated");
                let knots = read_knots(path)?;
                LoadSchedule::tabulated(spatial, knots, horizon)?
            }
        })
    }

    pub fn build_initial(&self, grid: &Grid<f64>) -> Result<MatrixField<f64>> {
        Ok(match self.initial.kind {
            InitialKind::Zero => MatrixField::zeros(grid),
            InitialKind::Mode => {
                let mut p = MatrixField::zeros(grid);
                for m in &self.initial.modes {
                    p.axpy(
                        1.0,
                        &mode_matrix(grid, m.row, m.col, m.wave, m.cosine, m.amplitude),
                    );
                }
                p
            }
            InitialKind::File => {
                let raw = read_snapshot(self.initial.file.as_ref().expect("validated"))?;
                raw.into_field(grid)?
            }
        })
    }
}

/// Parse `t,scale` CSV rows (comments with `#`, blank lines allowed).
fn read_knots(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path)?;
    let mut knots = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split(',');
        let parse = |s: Option<&str>| -> Result<f64> {
            s.ok_or_else(|| Error::Scenario(format!("{}: missing column", lineno + 1)))?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Scenario(format!("{}: {e}", lineno + 1)))
        };
        let t = parse(it.next())?;
        let scale = parse(it.next())?;
        knots.push((t, scale));
    }
    Ok(knots)
}
