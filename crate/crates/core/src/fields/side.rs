//! Cut-off side layers that restore zero normal velocity on the inflow and
//! outflow sides.

use std::sync::Arc;

use crate::corrector::{CellCorrector, SeamTrace};
use crate::discretization::{GaussRule, Sample};

use super::{AnalyticField, FieldError, FieldKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Inner,
    Outer,
}

/// Both side layers for one `ε` and cut-off width `ℓ`.
#[derive(Clone, Debug)]
pub struct SideLayers {
    seam: Arc<SeamTrace>,
    height: f64,
    epsilon: f64,
    ell: f64,
}

/// Norms of `S^ε = S^{in,ε} + S^{out,ε}` over the channel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SideLayerNorms {
    pub q: f64,
    pub value: f64,
    pub gradient: f64,
}

/// True in the parts of the side strips below `x₂ = 0`, where the side layers
/// are set to zero instead of being extended.
pub fn in_unmodeled_extension(x: [f64; 2], epsilon: f64, ell: f64) -> bool {
    x[1] < 0.0 && (x[0] < epsilon * ell || x[0] > 1.0 - epsilon * ell)
}

impl SideLayers {
    pub fn new(corr: &CellCorrector, epsilon: f64, ell: f64) -> Result<Self, FieldError> {
        if !(ell > 0.0 && ell <= 0.5) {
            return Err(FieldError::Cutoff(ell));
        }
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(FieldError::Epsilon(epsilon));
        }
        Ok(Self { seam: Arc::new(corr.seam().clone()), height: corr.height(), epsilon, ell })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn ell(&self) -> f64 {
        self.ell
    }

    /// `S^{in,ε}` or `S^{out,ε}` at `x`; zero outside its strip and below `x₂ = 0`.
    pub fn eval(&self, side: Side, x: [f64; 2]) -> Sample {
        let (e, l) = (self.epsilon, self.ell);
        let w = e * l;
        if x[1] < 0.0 {
            return Sample::default();
        }
        let (t, dir) = match side {
            Side::Inner if x[0] < w => (x[0] / w, 1.0),
            Side::Outer if x[0] > 1.0 - w => ((1.0 - x[0]) / w, -1.0),
            _ => return Sample::default(),
        };
        let [v, d, dv, dd] = self.seam.eval_with_derivatives(x[1] / e);
        let c = 1.0 - t;
        // dir = +1: S₁ = -ε(ℓ/3)c³d, dir = -1: S₁ = +ε(ℓ/3)c³d; S₂ = εc²v in both.
        Sample {
            u: [-dir * w / 3.0 * c * c * c * d, e * c * c * v],
            grad: [
                [c * c * d, -dir * l / 3.0 * c * c * c * dd],
                [-dir * 2.0 * c * v / l, c * c * dv],
            ],
            p: 0.0,
        }
    }

    pub fn field(&self, side: Side) -> AnalyticField {
        let me = self.clone();
        let kind = match side {
            Side::Inner => FieldKind::SideIn,
            Side::Outer => FieldKind::SideOut,
        };
        AnalyticField::new(kind, move |x| me.eval(side, x))
    }

    /// Sum of both layers.
    pub fn eval_sum(&self, x: [f64; 2]) -> Sample {
        let a = self.eval(Side::Inner, x);
        let b = self.eval(Side::Outer, x);
        Sample {
            u: [a.u[0] + b.u[0], a.u[1] + b.u[1]],
            grad: [
                [a.grad[0][0] + b.grad[0][0], a.grad[0][1] + b.grad[0][1]],
                [a.grad[1][0] + b.grad[1][0], a.grad[1][1] + b.grad[1][1]],
            ],
            p: 0.0,
        }
    }

    /// `‖S^ε‖_{L^q}` and `‖∇S^ε‖_{L^q}` by composite Gauss quadrature over the
    /// two strips, with breakpoints every 1/16 in `y₂` up to the truncation height.
    pub fn norms(&self, q: f64) -> SideLayerNorms {
        let (e, l) = (self.epsilon, self.ell);
        let w = e * l;
        let g = GaussRule::new(5);
        let top = (self.height * e).min(1.0);
        let n2 = ((top / e) * 16.0).ceil() as usize;
        let n1 = 8;
        let (mut sv, mut sg) = (0.0, 0.0);
        for (side, x0) in [(Side::Inner, 0.0), (Side::Outer, 1.0 - w)] {
            for i in 0..n1 {
                for j in 0..n2 {
                    let (a1, h1) = (x0 + w * i as f64 / n1 as f64, w / n1 as f64);
                    let (a2, h2) = (top * j as f64 / n2 as f64, top / n2 as f64);
                    for (pi, wi) in g.points().iter().zip(g.weights()) {
                        for (pj, wj) in g.points().iter().zip(g.weights()) {
                            let s = self.eval(side, [a1 + pi * h1, a2 + pj * h2]);
                            let dx = wi * wj * h1 * h2;
                            sv += dx * s.u[0].hypot(s.u[1]).powf(q);
                            let gn = s.grad.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
                            sg += dx * gn.powf(q);
                        }
                    }
                }
            }
        }
        SideLayerNorms { q, value: sv.powf(1.0 / q), gradient: sg.powf(1.0 / q) }
    }
}

/// `(S^{in,ε}, S^{out,ε})` built from the corrector's seam trace.
pub fn side_layers(corr: &CellCorrector, epsilon: f64, ell: f64) -> Result<(AnalyticField, AnalyticField), FieldError> {
    let s = SideLayers::new(corr, epsilon, ell)?;
    Ok((s.field(Side::Inner), s.field(Side::Outer)))
}

/// `‖S^ε‖_{L^q(Ω_ε)}` and `‖∇S^ε‖_{L^q(Ω_ε)}` for `q ∈ {1, 2, 4}`.
pub fn side_layer_norms(corr: &CellCorrector, epsilon: f64, ell: f64, q: u32) -> Result<SideLayerNorms, FieldError> {
    if ![1, 2, 4].contains(&q) {
        return Err(FieldError::Exponent(q));
    }
    Ok(SideLayers::new(corr, epsilon, ell)?.norms(q as f64))
}
