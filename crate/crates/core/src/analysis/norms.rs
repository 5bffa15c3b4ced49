//! Quadrature norms over tagged regions.

use rayon::prelude::*;

use crate::discretization::{
    apply_componentwise, assemble, DiscretizationError, GaussRule, MixedField, MixedSpace, Sample, CsrMatrix,
};
use crate::fields::{AnalyticField, CompositeErrorField};
use crate::geometry::{QuadMesh, Region};

use super::AnalysisError;

/// Scalar stiffness and mass matrices for discrete H¹ and L² norms of full
/// interleaved velocity vectors.
#[derive(Clone, Debug)]
pub struct NormMatrices {
    stiffness: CsrMatrix,
    mass: CsrMatrix,
}

impl NormMatrices {
    pub fn new(space: &MixedSpace) -> Result<Self, DiscretizationError> {
        let sys = assemble(space, None, true)?;
        Ok(Self { stiffness: sys.stiffness, mass: sys.mass.expect("mass requested") })
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    pub fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    fn quad(m: &CsrMatrix, u: &[f64]) -> f64 {
        let mu = apply_componentwise(m, u);
        mu.iter().zip(u).map(|(a, b)| a * b).sum::<f64>().max(0.0)
    }

    pub fn l2_squared(&self, u: &[f64]) -> f64 {
        Self::quad(&self.mass, u)
    }

    pub fn h1_semi_squared(&self, u: &[f64]) -> f64 {
        Self::quad(&self.stiffness, u)
    }

    pub fn l2(&self, u: &[f64]) -> f64 {
        self.l2_squared(u).sqrt()
    }

    /// Full H¹ norm.
    pub fn h1(&self, u: &[f64]) -> f64 {
        (self.l2_squared(u) + self.h1_semi_squared(u)).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NormRegion {
    Omega0,
    OmegaEps,
    RoughLayer,
    /// `Ω_ε` without `([0, εℓ] ∪ [1−εℓ, 1]) × (−ε, 0)`.
    OmegaEpsMinusSideStrips { ell: f64 },
    /// The rough-layer parts of the two side strips.
    SideStrips { ell: f64 },
    /// The interface `x₂ = 0`.
    Gamma0,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormKind {
    L1,
    L2,
    L4,
    H1Semi,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormRequest {
    pub region: NormRegion,
    pub norm: NormKind,
}

impl NormRequest {
    pub fn new(region: NormRegion, norm: NormKind) -> Self {
        Self { region, norm }
    }
}

/// A field that can be sampled at quadrature points of a mesh.
pub trait MeshField: Sync {
    fn sample(&self, mesh: &QuadMesh, cell: usize, xi: [f64; 2]) -> Result<Sample, AnalysisError>;

    /// Fingerprint of the mesh the field is tied to, if any.
    fn mesh_fingerprint(&self) -> Option<u64> {
        None
    }
}

impl MeshField for MixedField {
    fn sample(&self, _: &QuadMesh, cell: usize, xi: [f64; 2]) -> Result<Sample, AnalysisError> {
        Ok(self.eval_ref(cell, xi))
    }

    fn mesh_fingerprint(&self) -> Option<u64> {
        Some(self.mesh().fingerprint())
    }
}

impl MeshField for AnalyticField {
    fn sample(&self, mesh: &QuadMesh, cell: usize, xi: [f64; 2]) -> Result<Sample, AnalysisError> {
        Ok(self.eval(mesh.map(cell, xi).x))
    }
}

impl MeshField for CompositeErrorField {
    fn sample(&self, _: &QuadMesh, cell: usize, xi: [f64; 2]) -> Result<Sample, AnalysisError> {
        Ok(self.eval_ref(cell, xi)?)
    }

    fn mesh_fingerprint(&self) -> Option<u64> {
        Some(self.solution().mesh.fingerprint())
    }
}

/// Pointwise `a − b`.
pub struct Difference<'a>(pub &'a dyn MeshField, pub &'a dyn MeshField);

impl MeshField for Difference<'_> {
    fn sample(&self, mesh: &QuadMesh, cell: usize, xi: [f64; 2]) -> Result<Sample, AnalysisError> {
        let a = self.0.sample(mesh, cell, xi)?;
        let b = self.1.sample(mesh, cell, xi)?;
        let mut s = a;
        for i in 0..2 {
            s.u[i] -= b.u[i];
            for j in 0..2 {
                s.grad[i][j] -= b.grad[i][j];
            }
        }
        s.p -= b.p;
        Ok(s)
    }

    fn mesh_fingerprint(&self) -> Option<u64> {
        self.0.mesh_fingerprint().or_else(|| self.1.mesh_fingerprint())
    }
}

/// Velocity-only integrand at one sample.
#[derive(Clone, Copy)]
pub(crate) enum Integrand {
    Power(i32),
    GradSquared,
    D2Squared,
}

impl Integrand {
    fn value(self, s: &Sample) -> f64 {
        match self {
            Integrand::Power(p) => s.u[0].hypot(s.u[1]).powi(p),
            Integrand::GradSquared => s.grad.iter().flatten().map(|v| v * v).sum(),
            Integrand::D2Squared => s.grad[0][1] * s.grad[0][1] + s.grad[1][1] * s.grad[1][1],
        }
    }
}

fn mask(region: NormRegion, mesh: &QuadMesh, cell_region: Region, x: [f64; 2]) -> bool {
    let rough = cell_region == Region::RoughLayer;
    let in_side = |ell: f64| {
        let w = mesh.epsilon().unwrap_or(0.0) * ell;
        x[0] < w || x[0] > 1.0 - w
    };
    match region {
        NormRegion::Omega0 => cell_region == Region::Omega0,
        NormRegion::OmegaEps => true,
        NormRegion::RoughLayer => rough,
        NormRegion::OmegaEpsMinusSideStrips { ell } => !(rough && in_side(ell)),
        NormRegion::SideStrips { ell } => rough && in_side(ell),
        NormRegion::Gamma0 => false,
    }
}

/// `∫_region integrand` with 3×3 Gauss points per cell.
pub(crate) fn integrate(
    mesh: &QuadMesh,
    field: &dyn MeshField,
    region: NormRegion,
    integrand: Integrand,
) -> Result<f64, AnalysisError> {
    if let Some(h) = field.mesh_fingerprint() {
        if h != mesh.fingerprint() {
            return Err(AnalysisError::MeshMismatch);
        }
    }
    let g = GaussRule::new(3);
    if region == NormRegion::Gamma0 {
        let Some(row) = mesh.interface_row() else {
            return Err(AnalysisError::Unsupported("Gamma0 on a mesh without an interface"));
        };
        let parts = (0..mesh.nx())
            .into_par_iter()
            .map(|col| {
                let cell = row * mesh.nx() + col;
                let mut acc = 0.0;
                for (t, w) in g.points().iter().zip(g.weights()) {
                    let s = field.sample(mesh, cell, [*t, 0.0])?;
                    acc += w * mesh.cell_width() * integrand.value(&s);
                }
                Ok(acc)
            })
            .collect::<Result<Vec<f64>, AnalysisError>>()?;
        return Ok(parts.iter().sum());
    }
    let parts = (0..mesh.cells().len())
        .into_par_iter()
        .map(|c| {
            let cr = mesh.cells()[c].region;
            if matches!(region, NormRegion::Omega0) && cr != Region::Omega0
                || matches!(region, NormRegion::RoughLayer | NormRegion::SideStrips { .. }) && cr != Region::RoughLayer
            {
                return Ok(0.0);
            }
            let mut acc = 0.0;
            for (xi, w) in g.tensor_points() {
                let mp = mesh.map(c, xi);
                if !mask(region, mesh, cr, mp.x) {
                    continue;
                }
                let s = field.sample(mesh, c, xi)?;
                acc += w * mp.det * integrand.value(&s);
            }
            Ok(acc)
        })
        .collect::<Result<Vec<f64>, AnalysisError>>()?;
    Ok(parts.iter().sum())
}

/// Velocity norm of `field` over `request.region`.
pub fn norm(mesh: &QuadMesh, field: &dyn MeshField, request: NormRequest) -> Result<f64, AnalysisError> {
    let (integrand, root) = match request.norm {
        NormKind::L1 => (Integrand::Power(1), 1),
        NormKind::L2 => (Integrand::Power(2), 2),
        NormKind::L4 => (Integrand::Power(4), 4),
        NormKind::H1Semi => {
            if request.region == NormRegion::Gamma0 {
                return Err(AnalysisError::Unsupported("H1 seminorm on the Gamma0 trace"));
            }
            (Integrand::GradSquared, 2)
        }
    };
    let v = integrate(mesh, field, request.region, integrand)?;
    Ok(match root {
        1 => v,
        2 => v.sqrt(),
        _ => v.sqrt().sqrt(),
    })
}
