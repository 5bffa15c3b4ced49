//! Steady error minus first-order correctors.

use std::sync::Arc;

use crate::corrector::CellCorrector;
use crate::discretization::Sample;
use crate::steady::SteadySolution;

use super::side::SideLayers;
use super::{chi_c, poiseuille, wall_shear, AnalyticField, FieldError};

/// Which correction terms are subtracted from `U_ε − U₀`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct CompositeFlags {
    /// `ε(V(x/ε) − α)·m`.
    pub corrector: bool,
    /// `x₂·I_{x₂≤0}·m·e₁`.
    pub interface: bool,
    /// `εα₁χ_c·m`.
    pub chi: bool,
    /// `(S^{in,ε} + S^{out,ε})·m`, added.
    pub side: bool,
}

impl CompositeFlags {
    pub fn none() -> Self {
        Self::default()
    }

    /// The field `W̃` without side layers.
    pub fn tilde() -> Self {
        Self { corrector: true, interface: true, chi: true, side: false }
    }

    /// The side-layer corrected field `𝒲`.
    pub fn full() -> Self {
        Self { side: true, ..Self::tilde() }
    }
}

/// `U_ε − U₀ − ε(V(x/ε)−α)m − x₂I_{x₂≤0}m e₁ − εα₁χ_c m + S m` with the terms
/// selected by [`CompositeFlags`], `m = ∂₂U₀,₁(0)`.
#[derive(Clone)]
pub struct CompositeErrorField {
    sol: Arc<SteadySolution>,
    corr: Arc<CellCorrector>,
    flags: CompositeFlags,
    side: SideLayers,
    base: AnalyticField,
    chi: AnalyticField,
    multiplier: f64,
}

impl std::fmt::Debug for CompositeErrorField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CompositeErrorField").field("flags", &self.flags).finish()
    }
}

pub fn compose(
    sol: Arc<SteadySolution>,
    corr: Arc<CellCorrector>,
    flags: CompositeFlags,
    ell: f64,
) -> Result<CompositeErrorField, FieldError> {
    let (a, b) = (sol.case.profile.fingerprint(), corr.profile().fingerprint());
    if a != b {
        return Err(FieldError::ProfileMismatch { steady: a, cell: b });
    }
    let side = SideLayers::new(&corr, sol.case.epsilon, ell)?;
    let base = poiseuille(sol.case.p0, sol.case.p1);
    let multiplier = wall_shear(sol.case.p0, sol.case.p1);
    Ok(CompositeErrorField { sol, corr, flags, side, base, chi: chi_c(), multiplier })
}

impl CompositeErrorField {
    pub fn flags(&self) -> CompositeFlags {
        self.flags
    }

    pub fn solution(&self) -> &SteadySolution {
        &self.sol
    }

    pub fn corrector(&self) -> &CellCorrector {
        &self.corr
    }

    pub fn side_layers(&self) -> &SideLayers {
        &self.side
    }

    pub fn multiplier(&self) -> f64 {
        self.multiplier
    }

    /// Evaluates at reference point `xi` of a cell of the steady mesh.
    pub fn eval_ref(&self, cell: usize, xi: [f64; 2]) -> Result<Sample, FieldError> {
        let x = self.sol.mesh.map(cell, xi).x;
        let s = self.sol.field.eval_ref(cell, xi);
        self.correct(x, s)
    }

    /// Evaluates at a physical point of the steady mesh.
    pub fn eval(&self, x: [f64; 2]) -> Result<Sample, FieldError> {
        let (cell, xi) = self.sol.mesh.locate(x).ok_or(FieldError::Outside(x[0], x[1]))?;
        self.eval_ref(cell, xi)
    }

    fn correct(&self, x: [f64; 2], mut s: Sample) -> Result<Sample, FieldError> {
        let m = self.multiplier;
        let eps = self.sol.case.epsilon;
        let b = self.base.eval(x);
        sub(&mut s, &b, 1.0);
        if self.flags.corrector {
            let v = self.corr.evaluate_scaled(x, eps)?;
            s.u[0] -= eps * (v.u[0] - self.corr.alpha1()) * m;
            s.u[1] -= eps * v.u[1] * m;
            for i in 0..2 {
                for j in 0..2 {
                    s.grad[i][j] -= v.grad[i][j] * m;
                }
            }
            s.p -= v.p * m;
        }
        if self.flags.interface && x[1] <= 0.0 {
            s.u[0] -= x[1] * m;
            s.grad[0][1] -= m;
        }
        if self.flags.chi {
            sub(&mut s, &self.chi.eval(x), eps * self.corr.alpha1() * m);
        }
        if self.flags.side {
            sub(&mut s, &self.side.eval_sum(x), -m);
        }
        Ok(s)
    }
}

fn sub(s: &mut Sample, t: &Sample, c: f64) {
    for i in 0..2 {
        s.u[i] -= c * t.u[i];
        for j in 0..2 {
            s.grad[i][j] -= c * t.grad[i][j];
        }
    }
    s.p -= c * t.p;
}
