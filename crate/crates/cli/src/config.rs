//! Run configuration: a TOML file with one table per concern.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use roughwall::analysis::SweepConfig;
use roughwall::corrector::CellOptions;
use roughwall::geometry::{
    check_epsilon, make_profile, BoundaryProfile, CosineMode, Grading, ProfileKind, ProfileSpec, StripMeshOptions,
};
use roughwall::steady::{FlowCase, FlowMode, MeshPolicy, SolverOptions};
use roughwall::unsteady::{InitialKind, UnsteadyConfig};

/// Invalid configuration; maps to exit code 1.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Output directory.
    pub out: PathBuf,
    /// Worker threads.
    pub workers: usize,
    /// Seed for the vortex placement.
    pub seed: u64,
    pub profile: ProfileSection,
    pub flow: FlowSection,
    pub mesh: MeshSection,
    pub solver: SolverSection,
    pub cell: CellSection,
    pub sweep: SweepSection,
    pub unsteady: UnsteadySection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            out: PathBuf::from("out"),
            workers: 1,
            seed: 0,
            profile: ProfileSection::default(),
            flow: FlowSection::default(),
            mesh: MeshSection::default(),
            solver: SolverSection::default(),
            cell: CellSection::default(),
            sweep: SweepSection::default(),
            unsteady: UnsteadySection::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ProfileName {
    Flat,
    ShiftedFlat,
    Cosine,
    SumOfCosines,
    CustomSamples,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModeSection {
    pub wavenumber: u32,
    pub amplitude: f64,
}

/// Keys other than `kind`, `phase` and `lipschitz_bound` apply to one kind each:
/// `amplitude` (cosine, default 0.25), `depth`/`pin_collar` (shifted_flat),
/// `modes` (sum_of_cosines), `values` (custom_samples).
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default = "ProfileSection::bare")]
pub struct ProfileSection {
    pub kind: ProfileName,
    pub phase: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lipschitz_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pin_collar: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub modes: Option<Vec<ModeSection>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

const DEFAULT_AMPLITUDE: f64 = 0.25;

impl Default for ProfileSection {
    fn default() -> Self {
        Self { amplitude: Some(DEFAULT_AMPLITUDE), ..Self::bare() }
    }
}

impl ProfileSection {
    /// Fill-in for keys missing from a `[profile]` table.
    fn bare() -> Self {
        Self {
            kind: ProfileName::Cosine,
            phase: 0.0,
            lipschitz_bound: None,
            amplitude: None,
            depth: None,
            pin_collar: None,
            modes: None,
            values: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Stokes,
    NavierStokes,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct FlowSection {
    pub epsilon: f64,
    pub p0: f64,
    pub p1: f64,
    pub mode: ModeName,
}

impl Default for FlowSection {
    fn default() -> Self {
        Self { epsilon: 0.125, p0: 0.0, p1: -1.0, mode: ModeName::Stokes }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum GradingName {
    Uniform,
    Boundary,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct MeshSection {
    pub cells_per_period: usize,
    pub ny: usize,
    pub grading: GradingName,
    /// Share of layers in the near-wall band; boundary grading only.
    pub fine_fraction: f64,
    pub min_cells_per_period: usize,
}

impl Default for MeshSection {
    fn default() -> Self {
        let p = MeshPolicy::default();
        let (grading, fine_fraction) = match p.grading {
            Grading::Uniform => (GradingName::Uniform, 0.4),
            Grading::Boundary { fine_fraction } => (GradingName::Boundary, fine_fraction),
        };
        Self { cells_per_period: p.cells_per_period, ny: p.ny, grading, fine_fraction, min_cells_per_period: p.min_cells_per_period }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub tol: f64,
    pub max_iters: usize,
    pub damping: f64,
    pub smallness_threshold: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let s = SolverOptions::default();
        Self { tol: s.tol, max_iters: s.max_iters, damping: s.damping, smallness_threshold: s.smallness_threshold }
    }
}

/// With `matched = true` the strip copies columns and near-wall rows from the
/// channel mesh policy and `nx`, `near_layers`, `near_ratio` are ignored.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct CellSection {
    pub height: f64,
    pub matched: bool,
    pub nx: usize,
    pub near_layers: usize,
    pub near_ratio: f64,
    pub far_ratio: f64,
    pub far_max_height: f64,
    pub samples_per_level: usize,
}

impl Default for CellSection {
    fn default() -> Self {
        let c = CellOptions::default();
        Self {
            height: 10.0,
            matched: true,
            nx: c.strip.nx,
            near_layers: c.strip.near_layers,
            near_ratio: c.strip.near_ratio,
            far_ratio: c.strip.far_ratio,
            far_max_height: c.strip.far_max_height,
            samples_per_level: c.samples_per_level,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub epsilons: Vec<f64>,
    /// Side-layer cutoff length.
    pub ell: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { epsilons: vec![0.125, 0.0625, 0.03125], ell: 0.25 }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum InitialName {
    SteadyExact,
    Poiseuille,
    PoiseuilleVortex,
}

/// `vortex_center` is drawn from `seed` when absent.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct UnsteadySection {
    pub initial: InitialName,
    pub dt: f64,
    pub t_end: f64,
    pub delta: f64,
    pub g_n: f64,
    /// Stop once the energy falls below this; 0 disables.
    pub stop_below: f64,
    pub vortex_amplitude: f64,
    pub vortex_radius: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vortex_center: Option<[f64; 2]>,
}

impl Default for UnsteadySection {
    fn default() -> Self {
        Self {
            initial: InitialName::PoiseuilleVortex,
            dt: 0.01,
            t_end: 30.0,
            delta: 0.5,
            g_n: 2.0,
            stop_below: 1e-20,
            vortex_amplitude: 0.05,
            vortex_radius: 0.2,
            vortex_center: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| bad(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| bad(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn profile(&self) -> Result<BoundaryProfile, ConfigError> {
        let p = &self.profile;
        let unused = |key: &str, set: bool| -> Result<(), ConfigError> {
            if set {
                Err(bad(format!("profile.{key} does not apply to kind {:?}", p.kind)))
            } else {
                Ok(())
            }
        };
        let need = |key: &str| bad(format!("profile.{key} is required for kind {:?}", p.kind));
        let kind = match p.kind {
            ProfileName::Flat => ProfileKind::Flat,
            ProfileName::ShiftedFlat => {
                ProfileKind::ShiftedFlat { depth: p.depth.ok_or_else(|| need("depth"))?, pin_collar: p.pin_collar }
            }
            ProfileName::Cosine => ProfileKind::Cosine { amplitude: p.amplitude.unwrap_or(DEFAULT_AMPLITUDE) },
            ProfileName::SumOfCosines => ProfileKind::SumOfCosines {
                modes: p
                    .modes
                    .as_ref()
                    .ok_or_else(|| need("modes"))?
                    .iter()
                    .map(|m| CosineMode { wavenumber: m.wavenumber, amplitude: m.amplitude })
                    .collect(),
            },
            ProfileName::CustomSamples => ProfileKind::CustomSamples { values: p.values.clone().ok_or_else(|| need("values"))? },
        };
        unused("amplitude", p.amplitude.is_some() && p.kind != ProfileName::Cosine)?;
        unused("depth", p.depth.is_some() && p.kind != ProfileName::ShiftedFlat)?;
        unused("pin_collar", p.pin_collar.is_some() && p.kind != ProfileName::ShiftedFlat)?;
        unused("modes", p.modes.is_some() && p.kind != ProfileName::SumOfCosines)?;
        unused("values", p.values.is_some() && p.kind != ProfileName::CustomSamples)?;
        let spec = ProfileSpec { kind, phase: p.phase, lipschitz_bound: p.lipschitz_bound };
        make_profile(&spec).map_err(|e| bad(format!("profile: {e}")))
    }

    pub fn mesh_policy(&self) -> Result<MeshPolicy, ConfigError> {
        let m = &self.mesh;
        if m.cells_per_period == 0 || m.ny == 0 {
            return Err(bad("mesh.cells_per_period and mesh.ny must be positive"));
        }
        let grading = match m.grading {
            GradingName::Uniform => Grading::Uniform,
            GradingName::Boundary => {
                if !(m.fine_fraction > 0.0 && m.fine_fraction < 1.0) {
                    return Err(bad(format!("mesh.fine_fraction = {} must lie in (0, 1)", m.fine_fraction)));
                }
                Grading::Boundary { fine_fraction: m.fine_fraction }
            }
        };
        Ok(MeshPolicy { cells_per_period: m.cells_per_period, ny: m.ny, grading, min_cells_per_period: m.min_cells_per_period })
    }

    pub fn solver(&self) -> Result<SolverOptions, ConfigError> {
        let s = &self.solver;
        if !(s.tol > 0.0) || s.max_iters == 0 {
            return Err(bad("solver.tol must be positive and solver.max_iters at least 1"));
        }
        if !(s.damping > 0.0 && s.damping <= 1.0) {
            return Err(bad(format!("solver.damping = {} must lie in (0, 1]", s.damping)));
        }
        Ok(SolverOptions { tol: s.tol, max_iters: s.max_iters, damping: s.damping, smallness_threshold: s.smallness_threshold })
    }

    fn mode(&self) -> FlowMode {
        match self.flow.mode {
            ModeName::Stokes => FlowMode::Stokes,
            ModeName::NavierStokes => FlowMode::NavierStokes,
        }
    }

    pub fn flow_case(&self) -> Result<FlowCase, ConfigError> {
        check_epsilon(self.flow.epsilon).map_err(|e| bad(format!("flow.epsilon: {e}")))?;
        let case = FlowCase::new(self.profile()?, self.flow.epsilon, self.flow.p0, self.flow.p1, self.mode());
        case.validate().map_err(|e| bad(format!("flow: {e}")))?;
        Ok(case)
    }

    /// Cell-problem options; `None` requests the strip matched to the mesh policy.
    pub fn cell_options(&self) -> Result<Option<CellOptions>, ConfigError> {
        let c = &self.cell;
        if !(c.height >= 2.0) {
            return Err(bad(format!("cell.height = {} must be at least 2", c.height)));
        }
        if c.samples_per_level == 0 {
            return Err(bad("cell.samples_per_level must be positive"));
        }
        if c.matched && self.mesh.grading == GradingName::Boundary {
            return Ok(None);
        }
        let strip = StripMeshOptions {
            nx: c.nx,
            near_layers: c.near_layers,
            far_ratio: c.far_ratio,
            near_ratio: c.near_ratio,
            far_max_height: c.far_max_height,
            matched: None,
        };
        Ok(Some(CellOptions { strip, samples_per_level: c.samples_per_level }))
    }

    /// Resolved cell options, falling back to the explicit strip keys when no
    /// matched strip exists.
    pub fn resolved_cell_options(&self, profile: &BoundaryProfile) -> Result<CellOptions, ConfigError> {
        let samples = self.cell.samples_per_level;
        match self.cell_options()? {
            Some(c) => Ok(c),
            None => Ok(CellOptions::matched_to(&self.mesh_policy()?, profile)
                .map(|c| CellOptions { samples_per_level: samples, ..c })
                .unwrap_or_default()),
        }
    }

    pub fn sweep_config(&self) -> Result<SweepConfig, ConfigError> {
        let s = &self.sweep;
        if s.epsilons.len() < 3 {
            return Err(bad(format!("sweep.epsilons: need >=3 for rate fit, got {}", s.epsilons.len())));
        }
        for &e in &s.epsilons {
            check_epsilon(e).map_err(|err| bad(format!("sweep.epsilons: {err}")))?;
        }
        if !(s.ell > 0.0 && s.ell < 0.5) {
            return Err(bad(format!("sweep.ell = {} must lie in (0, 1/2)", s.ell)));
        }
        let profile = self.profile()?;
        let mut cfg = SweepConfig::new(profile.clone(), s.epsilons.clone());
        cfg.p0 = self.flow.p0;
        cfg.p1 = self.flow.p1;
        cfg.mode = self.mode();
        cfg.mesh = self.mesh_policy()?;
        cfg.solver = self.solver()?;
        cfg.cell_height = self.cell.height;
        cfg.cell = Some(self.resolved_cell_options(&profile)?);
        cfg.ell = s.ell;
        cfg.workers = self.workers.max(1);
        Ok(cfg)
    }

    pub fn unsteady_config(&self) -> Result<UnsteadyConfig, ConfigError> {
        let u = &self.unsteady;
        let initial = match u.initial {
            InitialName::SteadyExact => InitialKind::SteadyExact,
            InitialName::Poiseuille => InitialKind::Poiseuille,
            InitialName::PoiseuilleVortex => {
                let r = u.vortex_radius;
                if !(r > 0.0 && r < 0.5) {
                    return Err(bad(format!("unsteady.vortex_radius = {r} must lie in (0, 1/2)")));
                }
                let center = match u.vortex_center {
                    Some(c) => c,
                    None => {
                        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                        let lo = r + 0.01;
                        let hi = 1.0 - r - 0.01;
                        [rng.random_range(lo..hi), rng.random_range(lo..hi)]
                    }
                };
                InitialKind::PoiseuilleVortex { amplitude: u.vortex_amplitude, center, radius: r }
            }
        };
        let mut cfg = UnsteadyConfig::new(self.flow_case()?, initial);
        cfg.dt = u.dt;
        cfg.t_end = u.t_end;
        cfg.delta = u.delta;
        cfg.g_n = u.g_n;
        cfg.stop_below = (u.stop_below > 0.0).then_some(u.stop_below);
        cfg.mesh = self.mesh_policy()?;
        cfg.solver = self.solver()?;
        cfg.validate().map_err(|e| bad(format!("unsteady: {e}")))?;
        Ok(cfg)
    }
}
