//! Norms over tagged regions, trace/Poincaré ratios, rate fits and ε-sweeps.

mod norms;
mod sweep;

pub use norms::{norm, Difference, MeshField, NormKind, NormMatrices, NormRegion, NormRequest};
pub use sweep::{run_sweep, Column, SlopeFit, SweepConfig, SweepReport, SweepRow};

use crate::discretization::MixedField;
use crate::fields::FieldError;
use crate::geometry::BoundaryTag;
use norms::{integrate, Integrand};

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("unsupported norm request: {0}")]
    Unsupported(&'static str),
    #[error("field is tied to a different mesh")]
    MeshMismatch,
    #[error("rate fit needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("rate fit needs positive errors, got {0:e}")]
    NonPositive(f64),
    #[error("field does not vanish on the rough boundary (max {0:e})")]
    NotVanishing(f64),
    #[error("invalid sweep: {0}")]
    Sweep(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Cell(#[from] crate::corrector::CellError),
    #[error(transparent)]
    Steady(#[from] crate::steady::SteadyError),
}

/// Least-squares line through `(log ε, log error)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn fit_rate(points: &[(f64, f64)]) -> Result<FitResult, AnalysisError> {
    if points.len() < 3 {
        return Err(AnalysisError::TooFewPoints(points.len()));
    }
    if let Some(&(_, e)) = points.iter().find(|p| !(p.1 > 0.0) || !(p.0 > 0.0)) {
        return Err(AnalysisError::NonPositive(e));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let (slope, intercept, r2) = crate::corrector::least_squares(&logs);
    Ok(FitResult { slope, intercept, r2 })
}

/// Tolerance for the vanishing check on the rough boundary.
const GAMMA_EPS_TOL: f64 = 1e-8;

/// `(r1, r2, r3)`: rough-layer Poincaré, interface trace and interface `L¹`
/// ratios of a field vanishing on the rough boundary. `0/0` gives 0.
pub fn interface_ratios(field: &MixedField, epsilon: f64) -> Result<[f64; 3], AnalysisError> {
    let mesh = field.mesh();
    let mut worst: f64 = 0.0;
    for (n, tags) in mesh.node_tags().iter().enumerate() {
        if tags.contains(BoundaryTag::GammaEps) {
            let u = field.node_velocity(n);
            worst = worst.max(u[0].abs().max(u[1].abs()));
        }
    }
    if worst > GAMMA_EPS_TOL {
        return Err(AnalysisError::NotVanishing(worst));
    }
    if mesh.profile().is_flat() {
        return Ok([0.0; 3]);
    }
    let rough = NormRegion::RoughLayer;
    let l2 = integrate(mesh, field, rough, Integrand::Power(2))?.sqrt();
    let grad = integrate(mesh, field, rough, Integrand::GradSquared)?.sqrt();
    let d2 = integrate(mesh, field, rough, Integrand::D2Squared)?.sqrt();
    let t2 = integrate(mesh, field, NormRegion::Gamma0, Integrand::Power(2))?.sqrt();
    let t1 = integrate(mesh, field, NormRegion::Gamma0, Integrand::Power(1))?;
    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
    let se = epsilon.sqrt();
    Ok([ratio(l2, epsilon * grad), ratio(t2, se * grad), ratio(t1, se * d2)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    use crate::discretization::{build_space, Constraints};
    use crate::fields::poiseuille;
    use crate::geometry::{build_channel_mesh, make_profile, ChannelMeshOptions, ProfileSpec, QuadMesh};

    fn channel(spec: ProfileSpec, eps: f64, nx: usize, ny: usize) -> Arc<QuadMesh> {
        let p = make_profile(&spec).unwrap();
        Arc::new(build_channel_mesh(&p, eps, &ChannelMeshOptions::new(nx, ny)).unwrap())
    }

    #[test]
    fn fit_rate_exact_power_laws() {
        let f = fit_rate(&[(0.125, 1.0 / 64.0), (0.0625, 1.0 / 256.0), (0.03125, 1.0 / 1024.0)]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.r2 - 1.0).abs() < 1e-12);
        let c = 3.0;
        let pts: Vec<(f64, f64)> = [8.0f64, 16.0, 32.0].iter().map(|n| (1.0 / n, c * n.powf(-1.5))).collect();
        assert!((fit_rate(&pts).unwrap().slope - 1.5).abs() < 1e-12);
        assert!(matches!(fit_rate(&pts[..2]), Err(AnalysisError::TooFewPoints(2))));
        assert!(matches!(fit_rate(&[(0.5, 1.0), (0.25, 0.0), (0.125, 1.0)]), Err(AnalysisError::NonPositive(_))));
    }

    #[test]
    fn unit_square_norms() {
        let mesh = channel(ProfileSpec::cosine(0.25), 0.25, 16, 12);
        let one = crate::fields::AnalyticField::new(crate::fields::FieldKind::Composite, |_| {
            crate::discretization::Sample { u: [1.0, 0.0], ..Default::default() }
        });
        let l2 = norm(&mesh, &one, NormRequest::new(NormRegion::Omega0, NormKind::L2)).unwrap();
        let l1 = norm(&mesh, &one, NormRequest::new(NormRegion::Omega0, NormKind::L1)).unwrap();
        assert!((l2 - 1.0).abs() < 1e-13 && (l1 - 1.0).abs() < 1e-13);
        let t = norm(&mesh, &one, NormRequest::new(NormRegion::Gamma0, NormKind::L1)).unwrap();
        assert!((t - 1.0).abs() < 1e-13);
        // rough layer area = mean depth ε·a/2
        let r = norm(&mesh, &one, NormRequest::new(NormRegion::RoughLayer, NormKind::L1)).unwrap();
        assert!((r - 0.25 * 0.125).abs() < 1e-6, "{r}");
        assert!(matches!(
            norm(&mesh, &one, NormRequest::new(NormRegion::Gamma0, NormKind::H1Semi)),
            Err(AnalysisError::Unsupported(_))
        ));
    }

    #[test]
    fn poiseuille_l2_norm() {
        // ∫₀¹ (x(1-x)/2)² dx = 1/120
        let mesh = channel(ProfileSpec::flat(), 0.25, 16, 8);
        let n = norm(&mesh, &poiseuille(0.0, -1.0), NormRequest::new(NormRegion::Omega0, NormKind::L2)).unwrap();
        assert!((n - (1.0f64 / 120.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn mismatched_mesh_is_rejected() {
        let a = channel(ProfileSpec::flat(), 0.25, 16, 8);
        let b = channel(ProfileSpec::flat(), 0.25, 32, 8);
        let sp = build_space(b, &Constraints::channel()).unwrap();
        let f = MixedField::zeros(&sp);
        assert!(matches!(
            norm(&a, &f, NormRequest::new(NormRegion::Omega0, NormKind::L2)),
            Err(AnalysisError::MeshMismatch)
        ));
    }

    #[test]
    fn interface_ratios_degenerate_cases() {
        let mesh = channel(ProfileSpec::cosine(0.25), 0.25, 16, 12);
        let sp = build_space(mesh, &Constraints::channel()).unwrap();
        assert_eq!(interface_ratios(&MixedField::zeros(&sp), 0.25).unwrap(), [0.0; 3]);
        let ones = MixedField::interpolate(&sp, |_| ([1.0, 0.0], 0.0), false);
        assert!(matches!(interface_ratios(&ones, 0.25), Err(AnalysisError::NotVanishing(_))));
        let flat = channel(ProfileSpec::flat(), 0.25, 16, 8);
        let sp = build_space(flat, &Constraints::channel()).unwrap();
        let bump = MixedField::interpolate(&sp, |x| ([x[1] * (1.0 - x[1]), 0.0], 0.0), false);
        assert_eq!(interface_ratios(&bump, 0.25).unwrap(), [0.0; 3]);
    }

    #[test]
    fn interface_ratios_finite_for_wall_vanishing_field() {
        let mesh = channel(ProfileSpec::cosine(0.25), 0.25, 16, 12);
        let sp = build_space(mesh, &Constraints::channel()).unwrap();
        let prof = sp.mesh().profile().clone();
        // vanishes on x₂ = εη(x₁/ε)
        let f = MixedField::interpolate(&sp, |x| ([x[1] - 0.25 * prof.eval(x[0] / 0.25), 0.0], 0.0), false);
        let r = interface_ratios(&f, 0.25).unwrap();
        assert!(r.iter().all(|v| v.is_finite() && *v > 0.0 && *v < 10.0), "{r:?}");
    }
}
