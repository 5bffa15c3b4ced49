//! Closed-form channel fields.

use std::sync::Arc;

use crate::discretization::Sample;

use super::FieldError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldKind {
    Poiseuille,
    Effective,
    ChiC,
    SideIn,
    SideOut,
    Composite,
}

/// Pointwise evaluator of velocity, velocity gradient and pressure.
#[derive(Clone)]
pub struct AnalyticField {
    kind: FieldKind,
    eval: Arc<dyn Fn([f64; 2]) -> Sample + Send + Sync>,
}

impl std::fmt::Debug for AnalyticField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AnalyticField").field("kind", &self.kind).finish()
    }
}

impl AnalyticField {
    pub fn new(kind: FieldKind, eval: impl Fn([f64; 2]) -> Sample + Send + Sync + 'static) -> Self {
        Self { kind, eval: Arc::new(eval) }
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn eval(&self, x: [f64; 2]) -> Sample {
        (self.eval)(x)
    }
}

/// `∂₂U₁(0)` of the Poiseuille profile, the multiplier of every corrector.
pub fn wall_shear(p0: f64, p1: f64) -> f64 {
    -0.5 * (p1 - p0)
}

/// Poiseuille flow `U₁ = ½(p₁−p₀)x₂(x₂−1)`, `P = (p₁−p₀)x₁ + p₀`, with the
/// velocity extended by zero below `x₂ = 0`.
pub fn poiseuille(p0: f64, p1: f64) -> AnalyticField {
    let k = 0.5 * (p1 - p0);
    AnalyticField::new(FieldKind::Poiseuille, move |x| {
        let p = (p1 - p0) * x[0] + p0;
        if x[1] < 0.0 {
            return Sample { p, ..Sample::default() };
        }
        Sample {
            u: [k * x[1] * (x[1] - 1.0), 0.0],
            grad: [[0.0, k * (2.0 * x[1] - 1.0)], [0.0, 0.0]],
            p,
        }
    })
}

/// Wall-law profile `U₁ = ((p₁−p₀)/2)(x₂² − (x₂+εα₁)/(1+εα₁))` on `Ω₀`.
pub fn effective(p0: f64, p1: f64, epsilon: f64, alpha1: f64) -> Result<AnalyticField, FieldError> {
    let s = 1.0 + epsilon * alpha1;
    if !(s > 0.0) {
        return Err(FieldError::SlipLength { value: s });
    }
    let k = 0.5 * (p1 - p0);
    let ea = epsilon * alpha1;
    Ok(AnalyticField::new(FieldKind::Effective, move |x| Sample {
        u: [k * (x[1] * x[1] - (x[1] + ea) / s), 0.0],
        grad: [[0.0, k * (2.0 * x[1] - 1.0 / s)], [0.0, 0.0]],
        p: (p1 - p0) * x[0] + p0,
    }))
}

/// `χ_c = (1 − x₂, 0)` on `Ω₀`, `(1, 0)` below, with zero pressure.
pub fn chi_c() -> AnalyticField {
    AnalyticField::new(FieldKind::ChiC, |x| {
        if x[1] < 0.0 {
            Sample { u: [1.0, 0.0], ..Sample::default() }
        } else {
            Sample { u: [1.0 - x[1], 0.0], grad: [[0.0, -1.0], [0.0, 0.0]], p: 0.0 }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poiseuille_values() {
        let f = poiseuille(0.0, -1.0);
        assert!((f.eval([0.3, 0.5]).u[0] - 0.125).abs() < 1e-15);
        assert_eq!(f.eval([0.3, 0.0]).u[0], 0.0);
        assert_eq!(f.eval([0.3, 1.0]).u[0], 0.0);
        assert_eq!(f.eval([0.0, 0.4]).p, 0.0);
        assert_eq!(f.eval([1.0, 0.4]).p, -1.0);
        assert_eq!(f.eval([0.5, -0.01]).u, [0.0, 0.0]);
    }

    #[test]
    fn effective_values() {
        let f = effective(0.0, -1.0, 0.1, 0.5).unwrap();
        assert!((f.eval([0.2, 0.0]).u[0] - 0.5 * 0.05 / 1.05).abs() < 1e-15);
        assert!(f.eval([0.2, 1.0]).u[0].abs() < 1e-15);
        let g = effective(0.0, -1.0, 0.1, 0.0).unwrap();
        let p = poiseuille(0.0, -1.0);
        for x2 in [0.1, 0.37, 0.8] {
            assert!((g.eval([0.5, x2]).u[0] - p.eval([0.5, x2]).u[0]).abs() < 1e-15);
        }
        assert!(effective(0.0, -1.0, 0.5, -3.0).is_err());
    }

    #[test]
    fn chi_c_values() {
        let c = chi_c();
        assert_eq!(c.eval([0.4, 0.25]).u, [0.75, 0.0]);
        assert_eq!(c.eval([0.4, 1.0]).u, [0.0, 0.0]);
        assert_eq!(c.eval([0.4, -0.01]).u, [1.0, 0.0]);
    }

    #[test]
    fn gradients_match_differences() {
        let h = 1e-6;
        for f in [poiseuille(0.3, -0.7), effective(0.3, -0.7, 0.125, 0.2).unwrap(), chi_c()] {
            let x = [0.4, 0.6];
            let g = f.eval(x).grad;
            let up = f.eval([x[0], x[1] + h]).u;
            let dn = f.eval([x[0], x[1] - h]).u;
            assert!(((up[0] - dn[0]) / (2.0 * h) - g[0][1]).abs() < 1e-8);
        }
    }
}
