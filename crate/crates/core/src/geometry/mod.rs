//! Rough-boundary profiles and structured meshes of the rough channel and the cell strip.

mod mesh;
mod profile;
mod spline;

use std::io::{self, Write};

pub use mesh::{
    MatchedLayers,
    build_channel_mesh, build_strip_mesh, check_epsilon, BoundaryTag, Cell, ChannelMeshOptions,
    Curve, Grading, MapPoint, MeshDomain, QuadMesh, Region, StripMeshOptions, TagSet,
};
pub use profile::{
    make_profile, BoundaryProfile, CosineMode, ProfileKind, ProfileSpec, MAX_CUSTOM_CURVATURE,
};
pub use spline::{NaturalSpline, PeriodicSpline};

#[derive(Debug, thiserror::Error)]
pub enum GeometryError {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("profile leaves the band -1 <= eta <= 0: eta({y}) = {value}")]
    OutOfBand { y: f64, value: f64 },
    #[error("profile is not C2: {0}")]
    NotC2(String),
    #[error("epsilon = {0} is not the reciprocal of a positive integer")]
    Epsilon(f64),
    #[error("nx = {nx} does not give an integer number (>= {min}) of cells per period for {periods} periods")]
    PeriodDivisibility { nx: usize, periods: usize, min: usize },
    #[error("truncation height H = {0} must be at least 2")]
    TruncationHeight(f64),
    #[error("mesh resolution: {0}")]
    Resolution(String),
    #[error("non-positive Jacobian {det} in cell {cell}")]
    NonPositiveJacobian { cell: usize, det: f64 },
}

/// Writes the plain-text node/element dump of a mesh.
///
/// Node lines: `index x1 x2`. Cell lines: `index n0 .. n8 region`, nodes in
/// tensor order of the biquadratic element.
pub fn write_mesh<W: Write>(mesh: &QuadMesh, mut out: W) -> io::Result<()> {
    writeln!(out, "# nodes {}", mesh.nodes().len())?;
    for (i, p) in mesh.nodes().iter().enumerate() {
        writeln!(out, "{i} {:.16e} {:.16e}", p[0], p[1])?;
    }
    writeln!(out, "# cells {}", mesh.cells().len())?;
    for (i, c) in mesh.cells().iter().enumerate() {
        write!(out, "{i}")?;
        for n in c.nodes {
            write!(out, " {n}")?;
        }
        writeln!(out, " {}", c.region.name())?;
    }
    Ok(())
}
