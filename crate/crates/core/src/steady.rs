//! Stationary rough-channel flow driven by a pressure drop.

use std::io::{self, Write};
use std::sync::Arc;

use crate::discretization::{
    boundary_pressure_load, build_space, divergence_metric, Constraints, DiscretizationError, MixedField,
    MixedSpace, SaddleOperator, SaddleTerms,
};
use crate::fields::poiseuille;
use crate::geometry::{
    build_channel_mesh, check_epsilon, BoundaryProfile, ChannelMeshOptions, GeometryError, Grading, QuadMesh,
};
use crate::analysis::NormMatrices;

/// Below this velocity H¹ norm Picard updates are measured in absolute terms.
const SCALE_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlowMode {
    NavierStokes,
    Stokes,
}

impl FlowMode {
    pub fn name(self) -> &'static str {
        match self {
            FlowMode::NavierStokes => "navier_stokes",
            FlowMode::Stokes => "stokes",
        }
    }
}

#[derive(Clone, Debug)]
pub struct FlowCase {
    pub p0: f64,
    pub p1: f64,
    pub epsilon: f64,
    pub profile: BoundaryProfile,
    pub mode: FlowMode,
}

impl FlowCase {
    pub fn new(profile: BoundaryProfile, epsilon: f64, p0: f64, p1: f64, mode: FlowMode) -> Self {
        Self { p0, p1, epsilon, profile, mode }
    }

    pub fn validate(&self) -> Result<(), SteadyError> {
        check_epsilon(self.epsilon)?;
        if !(self.p0.is_finite() && self.p1.is_finite()) {
            return Err(SteadyError::InvalidCase("pressures must be finite".into()));
        }
        Ok(())
    }

    /// Parameters for file headers.
    pub fn describe(&self) -> Vec<(String, String)> {
        vec![
            ("p0".into(), format!("{:.16e}", self.p0)),
            ("p1".into(), format!("{:.16e}", self.p1)),
            ("epsilon".into(), format!("{:.16e}", self.epsilon)),
            ("mode".into(), self.mode.name().into()),
            ("profile".into(), self.profile.descriptor()),
        ]
    }
}

/// Channel resolution policy: a fixed number of cells per roughness period.
#[derive(Clone, Debug)]
pub struct MeshPolicy {
    pub cells_per_period: usize,
    pub ny: usize,
    pub grading: Grading,
    pub min_cells_per_period: usize,
}

impl Default for MeshPolicy {
    fn default() -> Self {
        Self { cells_per_period: 16, ny: 40, grading: Grading::default(), min_cells_per_period: 4 }
    }
}

impl MeshPolicy {
    pub fn options(&self, epsilon: f64) -> Result<ChannelMeshOptions, GeometryError> {
        let periods = check_epsilon(epsilon)?;
        Ok(ChannelMeshOptions {
            nx: self.cells_per_period * periods,
            ny: self.ny,
            grading: self.grading,
            min_cells_per_period: self.min_cells_per_period,
        })
    }

    pub fn build(&self, profile: &BoundaryProfile, epsilon: f64) -> Result<QuadMesh, GeometryError> {
        build_channel_mesh(profile, epsilon, &self.options(epsilon)?)
    }
}

#[derive(Clone, Debug)]
pub struct SolverOptions {
    /// Relative H¹ tolerance on Picard updates.
    pub tol: f64,
    pub max_iters: usize,
    /// Relaxation factor in `(0, 1]`.
    pub damping: f64,
    /// Warn above this `|p₁ − p₀|` in Navier–Stokes mode.
    pub smallness_threshold: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iters: 50, damping: 1.0, smallness_threshold: 1.0 }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SteadyError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Discretization(#[from] DiscretizationError),
    #[error("invalid flow case: {0}")]
    InvalidCase(String),
    #[error("Picard iteration did not converge in {} iterations (last update {:.3e})", .history.len(), .history.last().copied().unwrap_or(f64::NAN))]
    NotConverged { history: Vec<f64> },
    #[error("Picard iteration diverged after {} iterations", .history.len())]
    Diverged { history: Vec<f64> },
}

#[derive(Clone, Debug)]
pub struct SteadySolution {
    pub case: FlowCase,
    pub mesh: Arc<QuadMesh>,
    pub field: MixedField,
    /// Relative H¹ norms of the Picard updates.
    pub update_norms: Vec<f64>,
    /// Relative nonlinear residuals after each Picard step.
    pub residual_norms: Vec<f64>,
    pub divergence: f64,
}

impl SteadySolution {
    pub fn space(&self) -> &Arc<MixedSpace> {
        self.field.space()
    }

    /// `∫_{Σ₁} U₁`.
    pub fn outflow_flux(&self) -> f64 {
        outflow_flux(&self.field)
    }
}

/// Integral of `u₁` over the outflow side `x₁ = 1`, `x₂ ∈ (0, 1)`.
pub fn outflow_flux(field: &MixedField) -> f64 {
    let mesh = field.mesh();
    let rule = crate::discretization::GaussRule::new(3);
    let mut flux = 0.0;
    for (ci, cell) in mesh.cells().iter().enumerate() {
        if cell.col != mesh.nx() - 1 || cell.region != crate::geometry::Region::Omega0 {
            continue;
        }
        for (&t, &w) in rule.points().iter().zip(rule.weights()) {
            let mp = mesh.map(ci, [1.0, t]);
            flux += w * mp.jac[1][1] * field.eval_ref(ci, [1.0, t]).u[0];
        }
    }
    flux
}

/// Solves the steady problem by Picard iteration started from the Stokes solution.
pub fn solve_steady(case: &FlowCase, mesh_policy: &MeshPolicy, opts: &SolverOptions) -> Result<SteadySolution, SteadyError> {
    case.validate()?;
    let mesh = Arc::new(mesh_policy.build(&case.profile, case.epsilon)?);
    solve_steady_on(case, mesh, opts)
}

/// As [`solve_steady`] on a prebuilt channel mesh.
pub fn solve_steady_on(case: &FlowCase, mesh: Arc<QuadMesh>, opts: &SolverOptions) -> Result<SteadySolution, SteadyError> {
    case.validate()?;
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(SteadyError::InvalidCase(format!("damping {} outside (0, 1]", opts.damping)));
    }
    if case.mode == FlowMode::NavierStokes && (case.p1 - case.p0).abs() > opts.smallness_threshold {
        log::warn!(
            "|p1 - p0| = {} exceeds the small-data threshold {}",
            (case.p1 - case.p0).abs(),
            opts.smallness_threshold
        );
    }
    let space = build_space(mesh.clone(), &Constraints::channel())?;
    let load = boundary_pressure_load(&space, case.p0, case.p1)?;
    let mut op = SaddleOperator::new(&space);
    let base = SaddleTerms { load: Some(&load), ..Default::default() };
    let sys = op.assemble(&base)?;
    let factor = op.factorize(sys.values)?;
    let mut field = MixedField::from_free(&space, &op.solve(&factor, &sys.rhs)?);
    drop(factor);
    let mut update_norms = Vec::new();
    let mut residual_norms = Vec::new();
    if case.mode == FlowMode::NavierStokes {
        let gram = NormMatrices::new(&space)?;
        let mut growth = 0;
        loop {
            let terms = SaddleTerms { advecting: Some(&field.u), ..base };
            let sys = op.assemble(&terms)?;
            let factor = op.factorize(sys.values)?;
            let oseen = MixedField::from_free(&space, &op.solve(&factor, &sys.rhs)?);
            let next = if opts.damping < 1.0 { oseen.combine(opts.damping, &field, 1.0 - opts.damping) } else { oseen };
            let diff: Vec<f64> = next.u.iter().zip(&field.u).map(|(a, b)| a - b).collect();
            let scale = gram.h1(&next.u);
            let rel = if scale > SCALE_FLOOR { gram.h1(&diff) / scale } else { gram.h1(&diff) };
            if update_norms.last().is_some_and(|&last| rel > last) {
                growth += 1;
            } else {
                growth = 0;
            }
            update_norms.push(rel);
            field = next;
            let check = op.assemble(&SaddleTerms { advecting: Some(&field.u), ..base })?;
            let x = field.to_free();
            let r = op.apply(&check.values, &x);
            let rn: f64 = r.iter().zip(&check.rhs).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let bn: f64 = check.rhs.iter().map(|b| b * b).sum::<f64>().sqrt();
            residual_norms.push(if bn > 0.0 { rn / bn } else { rn });
            log::debug!("picard {} update {rel:.3e}", update_norms.len());
            if rel <= opts.tol {
                break;
            }
            if growth >= 3 {
                return Err(SteadyError::Diverged { history: update_norms });
            }
            if update_norms.len() >= opts.max_iters {
                return Err(SteadyError::NotConverged { history: update_norms });
            }
        }
    }
    let divergence = divergence_metric(&field);
    Ok(SteadySolution { case: case.clone(), mesh, field, update_norms, residual_norms, divergence })
}

/// Interpolant of `U_ε − U₀` (Poiseuille extended by zero below `x₂ = 0`).
pub fn perturbation_field(sol: &SteadySolution) -> MixedField {
    let base = poiseuille(sol.case.p0, sol.case.p1);
    let u0 = MixedField::interpolate(sol.space(), |x| {
        let s = base.eval(x);
        (s.u, s.p)
    }, false);
    sol.field.combine(1.0, &u0, -1.0)
}

/// Writes a field file: a header with the mesh hash and parameters, then
/// per-node velocity and per-corner pressure values.
pub fn write_field_file<W: Write>(field: &MixedField, params: &[(String, String)], mut out: W) -> io::Result<()> {
    let mesh = field.mesh();
    writeln!(out, "# mesh_hash {:016x}", mesh.fingerprint())?;
    for (k, v) in params {
        writeln!(out, "# {k} {v}")?;
    }
    writeln!(out, "# velocity {}", mesh.nodes().len())?;
    for (n, x) in mesh.nodes().iter().enumerate() {
        let u = field.node_velocity(n);
        writeln!(out, "{n} {:.16e} {:.16e} {:.16e} {:.16e}", x[0], x[1], u[0], u[1])?;
    }
    writeln!(out, "# pressure {}", mesh.corner_nodes().len())?;
    for (k, x) in mesh.corner_nodes().iter().enumerate() {
        writeln!(out, "{k} {:.16e} {:.16e} {:.16e}", x[0], x[1], field.p[k])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_profile, ProfileSpec};

    fn small_policy() -> MeshPolicy {
        MeshPolicy { cells_per_period: 4, ny: 12, ..Default::default() }
    }

    #[test]
    fn flat_navier_stokes_is_poiseuille() {
        let p = make_profile(&ProfileSpec::flat()).unwrap();
        let case = FlowCase::new(p, 0.25, 0.0, -1.0, FlowMode::NavierStokes);
        let sol = solve_steady(&case, &small_policy(), &SolverOptions::default()).unwrap();
        assert!(sol.update_norms.len() <= 2, "{:?}", sol.update_norms);
        let s = sol.field.eval([0.37, 0.5]).unwrap();
        assert!((s.u[0] - 0.125).abs() < 1e-10);
        assert!((sol.outflow_flux() - 1.0 / 12.0).abs() < 1e-10);
        let w = perturbation_field(&sol);
        assert!(w.u.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn equal_pressures_give_rest() {
        let p = make_profile(&ProfileSpec::cosine(0.25)).unwrap();
        let case = FlowCase::new(p, 0.25, 0.7, 0.7, FlowMode::NavierStokes);
        let sol = solve_steady(&case, &small_policy(), &SolverOptions::default()).unwrap();
        assert!(sol.field.u.iter().all(|v| v.abs() < 1e-12));
        assert!(sol.field.p.iter().all(|v| (v - 0.7).abs() < 1e-10));
    }

    #[test]
    fn rough_flux_lies_between_flat_and_widened_channels() {
        let p = make_profile(&ProfileSpec::cosine(0.25)).unwrap();
        let case = FlowCase::new(p, 0.25, 0.0, -1.0, FlowMode::Stokes);
        let sol = solve_steady(&case, &small_policy(), &SolverOptions::default()).unwrap();
        let q = sol.outflow_flux();
        // The flux over Σ₁ (which has height one) lies between the no-slip
        // channel and the channel widened by the full bump depth.
        let h: f64 = 1.0 + 0.25 * 0.25;
        let wide = h.powi(3) / 12.0;
        assert!(q > 1.0 / 12.0 && q < wide, "{q}");
        assert!(sol.divergence < 1e-9);
        // Top-boundary values of the perturbation vanish.
        let w = perturbation_field(&sol);
        for (n, t) in sol.mesh.node_tags().iter().enumerate() {
            if t.contains(crate::geometry::BoundaryTag::Gamma1) {
                assert_eq!(w.node_velocity(n), [0.0, 0.0]);
            }
        }
    }
}
