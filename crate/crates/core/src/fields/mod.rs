//! Closed-form channel fields, side layers and composite error fields.

mod analytic;
mod composite;
mod side;

use std::io::{self, Write};

pub use analytic::{chi_c, effective, poiseuille, wall_shear, AnalyticField, FieldKind};
pub use composite::{compose, CompositeErrorField, CompositeFlags};
pub use side::{in_unmodeled_extension, side_layer_norms, side_layers, Side, SideLayerNorms, SideLayers};

use crate::corrector::CellError;
use crate::discretization::Sample;

#[derive(Debug, thiserror::Error)]
pub enum FieldError {
    #[error("1 + ε·α₁ = {value} must be positive")]
    SlipLength { value: f64 },
    #[error("steady solution (profile {steady:016x}) and corrector (profile {cell:016x}) use different profiles")]
    ProfileMismatch { steady: u64, cell: u64 },
    #[error("cut-off width {0} outside (0, 1/2]")]
    Cutoff(f64),
    #[error("epsilon {0} outside (0, 1]")]
    Epsilon(f64),
    #[error("norm exponent {0} not in {{1, 2, 4}}")]
    Exponent(u32),
    #[error("point ({0}, {1}) outside the mesh")]
    Outside(f64, f64),
    #[error(transparent)]
    Cell(#[from] CellError),
}

/// Samples `f` on an `n1 × n2` grid of `[x₁ lo, hi] × [x₂ lo, hi]` and writes
/// `x1,x2,u1,u2,p` rows; points where `f` returns `None` are skipped.
pub fn write_grid_csv<W, F>(f: F, x1: (f64, f64), x2: (f64, f64), n: (usize, usize), mut out: W) -> io::Result<()>
where
    W: Write,
    F: Fn([f64; 2]) -> Option<Sample>,
{
    writeln!(out, "x1,x2,u1,u2,p")?;
    for j in 0..n.1 {
        let b = x2.0 + (x2.1 - x2.0) * j as f64 / (n.1.max(2) - 1) as f64;
        for i in 0..n.0 {
            let a = x1.0 + (x1.1 - x1.0) * i as f64 / (n.0.max(2) - 1) as f64;
            if let Some(s) = f([a, b]) {
                writeln!(out, "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}", a, b, s.u[0], s.u[1], s.p)?;
            }
        }
    }
    Ok(())
}
