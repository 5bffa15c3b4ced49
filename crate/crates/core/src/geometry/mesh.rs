//! Structured curvilinear quadrilateral meshes built from a vertical shear map.
//!
//! Every cell is the image of the unit square under
//! `x₁ = x_a + ξ h`, `x₂ = L(x₁)(1 - σ) + U(x₁) σ`, with `σ` affine in the
//! second reference coordinate and `L`, `U` the lower/upper curves of the
//! vertical block the cell belongs to. The map is evaluated exactly, so the
//! rough boundary is represented without geometric approximation.

use std::hash::Hasher;

use super::profile::{BoundaryProfile, Fnv1a};
use super::GeometryError;

/// Boundary and interface tags carried by velocity nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    /// Rough bottom boundary (the profile curve; bottom of a strip mesh).
    GammaEps,
    /// Flat top boundary (`x₂ = 1`, or `y₂ = H` on a strip).
    Gamma1,
    /// Inflow side `x₁ = 0`.
    Sigma0,
    /// Outflow side `x₁ = 1`.
    Sigma1,
    /// Internal interface `x₂ = 0`.
    Gamma0,
}

impl BoundaryTag {
    pub const ALL: [BoundaryTag; 5] = [
        BoundaryTag::GammaEps,
        BoundaryTag::Gamma1,
        BoundaryTag::Sigma0,
        BoundaryTag::Sigma1,
        BoundaryTag::Gamma0,
    ];

    fn bit(self) -> u8 {
        match self {
            BoundaryTag::GammaEps => 1,
            BoundaryTag::Gamma1 => 2,
            BoundaryTag::Sigma0 => 4,
            BoundaryTag::Sigma1 => 8,
            BoundaryTag::Gamma0 => 16,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BoundaryTag::GammaEps => "GammaEps",
            BoundaryTag::Gamma1 => "Gamma1",
            BoundaryTag::Sigma0 => "Sigma0",
            BoundaryTag::Sigma1 => "Sigma1",
            BoundaryTag::Gamma0 => "Gamma0",
        }
    }
}

/// Set of [`BoundaryTag`]s.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TagSet(u8);

impl TagSet {
    pub fn contains(self, tag: BoundaryTag) -> bool {
        self.0 & tag.bit() != 0
    }

    pub fn insert(&mut self, tag: BoundaryTag) {
        self.0 |= tag.bit();
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: TagSet) -> TagSet {
        TagSet(self.0 | other.0)
    }
}

/// Region a cell belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Region {
    /// Channel cells below `x₂ = 0`.
    RoughLayer,
    /// Channel cells in `(0,1) × (0,1)`.
    Omega0,
    /// Strip cells between the profile and `y₂ = 1`.
    StripNear,
    /// Strip cells between `y₂ = 1` and the truncation height.
    StripFar,
}

impl Region {
    pub fn name(self) -> &'static str {
        match self {
            Region::RoughLayer => "rough",
            Region::Omega0 => "omega0",
            Region::StripNear => "strip_near",
            Region::StripFar => "strip_far",
        }
    }
}

/// Lower or upper curve of a vertical block.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Curve {
    Constant(f64),
    /// `s η(x₁ / s)` for a scale `s` (ε for channels, 1 for strips).
    Profile { scale: f64 },
}

#[derive(Clone, Debug)]
struct Block {
    lower: Curve,
    upper: Curve,
    region: Region,
    /// Cell rows `[first, last)` of the block.
    rows: (usize, usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MeshDomain {
    Channel { epsilon: f64 },
    Strip { height: f64 },
}

/// One mesh cell: 9 biquadratic nodes, 4 bilinear (corner) nodes.
///
/// Local node `a + 3b` sits at reference point `(a/2, b/2)`; corner `c`
/// follows the same tensor order over `{0,1}²`.
#[derive(Clone, Copy, Debug)]
pub struct Cell {
    pub col: usize,
    pub row: usize,
    pub nodes: [u32; 9],
    pub corners: [u32; 4],
    pub region: Region,
}

/// A point of the cell map with its Jacobian.
#[derive(Clone, Copy, Debug)]
pub struct MapPoint {
    pub x: [f64; 2],
    /// `jac[i][j] = ∂xᵢ/∂ξⱼ`.
    pub jac: [[f64; 2]; 2],
    pub det: f64,
}

/// Vertical layer distribution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Grading {
    /// Equal layers in every block.
    Uniform,
    /// Boundary-concentrated layers; at least `fine_fraction` of all layers lie
    /// in the band `(-ε, 2ε)` for channels, or below `y₂ = 1` for strips.
    Boundary { fine_fraction: f64 },
}

impl Default for Grading {
    fn default() -> Self {
        Grading::Boundary { fine_fraction: 0.4 }
    }
}

#[derive(Clone, Debug)]
pub struct ChannelMeshOptions {
    pub nx: usize,
    pub ny: usize,
    pub grading: Grading,
    /// Smallest accepted number of cells per roughness period.
    pub min_cells_per_period: usize,
}

impl ChannelMeshOptions {
    pub fn new(nx: usize, ny: usize) -> Self {
        Self { nx, ny, grading: Grading::default(), min_cells_per_period: 4 }
    }
}

#[derive(Clone, Debug)]
pub struct StripMeshOptions {
    pub nx: usize,
    /// Layers between the profile and `y₂ = 1`.
    pub near_layers: usize,
    /// Geometric growth of layer height between `y₂ = 1` and `H`.
    pub far_ratio: f64,
    /// Growth of layer height away from the bottom inside the near block.
    pub near_ratio: f64,
    /// Largest layer height above `y₂ = 1`.
    pub far_max_height: f64,
    /// Replaces the near block by rows copied from a channel mesh.
    pub matched: Option<MatchedLayers>,
}

impl Default for StripMeshOptions {
    fn default() -> Self {
        Self { nx: 64, near_layers: 24, far_ratio: 1.12, near_ratio: 1.04, far_max_height: 0.15, matched: None }
    }
}

/// Near-wall rows of a channel mesh in cell units: `rough` equal layers
/// between the profile and `y₂ = 0`, `band` equal layers in `(0, band_height)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchedLayers {
    pub rough: usize,
    pub band: usize,
    pub band_height: f64,
}

impl ChannelMeshOptions {
    /// The near-wall layout of this channel mesh scaled to cell units, when
    /// the grading has one.
    pub fn matched_layers(&self, profile: &BoundaryProfile) -> Option<MatchedLayers> {
        let Grading::Boundary { fine_fraction } = self.grading else { return None };
        let n_fine = ((fine_fraction * self.ny as f64).ceil() as usize).max(2);
        let rough = if profile.is_flat() { 0 } else { (n_fine / 4).max(1) };
        Some(MatchedLayers { rough, band: n_fine - rough, band_height: 2.0 })
    }
}

/// A structured quadrilateral mesh of a rough channel or a periodic cell strip.
#[derive(Clone, Debug)]
pub struct QuadMesh {
    profile: BoundaryProfile,
    domain: MeshDomain,
    nx: usize,
    blocks: Vec<Block>,
    /// `row_sigma[j]..row_sigma[j+1]` spans cell row `j` in its block's σ.
    row_sigma: Vec<(f64, f64)>,
    row_block: Vec<usize>,
    nodes: Vec<[f64; 2]>,
    node_tags: Vec<TagSet>,
    corner_nodes: Vec<[f64; 2]>,
    cells: Vec<Cell>,
    lattice: Vec<u32>,
    corner_lattice: Vec<u32>,
    interface_row: Option<usize>,
}

fn geometric_levels(n: usize, ratio: f64) -> Vec<f64> {
    // n layers with heights h, hr, hr², ... normalized to [0, 1].
    let mut levels = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    let mut h = 1.0;
    levels.push(0.0);
    for _ in 0..n {
        acc += h;
        levels.push(acc);
        h *= ratio;
    }
    let total = acc;
    levels.iter_mut().for_each(|l| *l /= total);
    *levels.last_mut().unwrap() = 1.0;
    levels
}

/// Ratio `r` so that `n` layers starting at `first` (growth `r`) sum to `total`.
fn growth_ratio(first: f64, n: usize, total: f64) -> f64 {
    let sum = |r: f64| {
        if (r - 1.0).abs() < 1e-12 {
            first * n as f64
        } else {
            first * (r.powi(n as i32) - 1.0) / (r - 1.0)
        }
    };
    let (mut lo, mut hi) = (1e-3, 1.0);
    while sum(hi) < total {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sum(mid) < total {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

impl QuadMesh {
    pub fn profile(&self) -> &BoundaryProfile {
        &self.profile
    }

    pub fn domain(&self) -> MeshDomain {
        self.domain
    }

    pub fn epsilon(&self) -> Option<f64> {
        match self.domain {
            MeshDomain::Channel { epsilon } => Some(epsilon),
            MeshDomain::Strip { .. } => None,
        }
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self.domain, MeshDomain::Strip { .. })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.row_block.len()
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn corner_nodes(&self) -> &[[f64; 2]] {
        &self.corner_nodes
    }

    pub fn node_tags(&self) -> &[TagSet] {
        &self.node_tags
    }

    /// First cell row of `Ω₀` (channels only).
    pub fn interface_row(&self) -> Option<usize> {
        self.interface_row
    }

    pub fn cell_width(&self) -> f64 {
        1.0 / self.nx as f64
    }

    /// Velocity node id at lattice position `(i, j)`, `0 ≤ i ≤ 2nx`, `0 ≤ j ≤ 2ny`.
    pub fn lattice_node(&self, i: usize, j: usize) -> u32 {
        self.lattice[j * (2 * self.nx + 1) + i]
    }

    /// Heights of the cell row boundaries along the vertical line at `x₁`.
    pub fn row_levels_at(&self, x1: f64) -> Vec<f64> {
        let mut out: Vec<f64> = (0..self.ny()).map(|r| self.map_row_point(r, x1, 0.0)).collect();
        out.push(self.map_row_point(self.ny() - 1, x1, 1.0));
        out
    }

    /// Pairs of lattice columns identified by periodicity (strip meshes): node ids
    /// on the left column equal those on the right column.
    pub fn periodic_pairs(&self) -> Vec<(u32, u32)> {
        if !self.is_periodic() {
            return Vec::new();
        }
        (0..=2 * self.ny())
            .map(|j| (self.lattice_node(0, j), self.lattice_node(2 * self.nx, j)))
            .collect()
    }

    fn curve(&self, c: Curve, x1: f64) -> (f64, f64) {
        match c {
            Curve::Constant(v) => (v, 0.0),
            Curve::Profile { scale } => {
                let [v, d1, _] = self.profile.eval3(x1 / scale);
                (scale * v, d1)
            }
        }
    }

    fn map_row_point(&self, row: usize, x1: f64, t: f64) -> f64 {
        let b = &self.blocks[self.row_block[row]];
        let (s0, s1) = self.row_sigma[row];
        let sigma = s0 + t * (s1 - s0);
        let (lo, _) = self.curve(b.lower, x1);
        let (up, _) = self.curve(b.upper, x1);
        lo * (1.0 - sigma) + up * sigma
    }

    /// Evaluates the cell map at reference point `xi ∈ [0,1]²`.
    pub fn map(&self, cell: usize, xi: [f64; 2]) -> MapPoint {
        let c = &self.cells[cell];
        let h = self.cell_width();
        let x1 = (c.col as f64 + xi[0]) * h;
        let b = &self.blocks[self.row_block[c.row]];
        let (s0, s1) = self.row_sigma[c.row];
        let sigma = s0 + xi[1] * (s1 - s0);
        let (lo, dlo) = self.curve(b.lower, x1);
        let (up, dup) = self.curve(b.upper, x1);
        let x2 = lo * (1.0 - sigma) + up * sigma;
        let dx2_dxi = h * (dlo * (1.0 - sigma) + dup * sigma);
        let dx2_dt = (s1 - s0) * (up - lo);
        MapPoint {
            x: [x1, x2],
            jac: [[h, 0.0], [dx2_dxi, dx2_dt]],
            det: h * dx2_dt,
        }
    }

    /// Locates a physical point: returns the cell and reference coordinates.
    pub fn locate(&self, x: [f64; 2]) -> Option<(usize, [f64; 2])> {
        let h = self.cell_width();
        if !(-1e-12..=1.0 + 1e-12).contains(&x[0]) {
            return None;
        }
        let x1 = x[0].clamp(0.0, 1.0);
        let col = ((x1 / h).floor() as usize).min(self.nx - 1);
        let xi0 = (x1 / h - col as f64).clamp(0.0, 1.0);
        for b in &self.blocks {
            let (lo, _) = self.curve(b.lower, x1);
            let (up, _) = self.curve(b.upper, x1);
            let tol = 1e-12 * (1.0 + up.abs());
            if x[1] < lo - tol || x[1] > up + tol {
                continue;
            }
            let thick = up - lo;
            if thick <= tol {
                continue;
            }
            let sigma = ((x[1] - lo) / thick).clamp(0.0, 1.0);
            let rows = b.rows.0..b.rows.1;
            let row = rows
                .clone()
                .find(|&r| sigma <= self.row_sigma[r].1)
                .unwrap_or(rows.end - 1);
            let (s0, s1) = self.row_sigma[row];
            let t = ((sigma - s0) / (s1 - s0)).clamp(0.0, 1.0);
            return Some((row * self.nx + col, [xi0, t]));
        }
        None
    }

    /// Physical area by 3×3 Gauss quadrature of the cell maps.
    pub fn area(&self) -> f64 {
        let g = crate::discretization::quadrature::GaussRule::new(3);
        (0..self.cells.len())
            .map(|c| {
                let mut a = 0.0;
                for (p, w) in g.tensor_points() {
                    a += w * self.map(c, p).det;
                }
                a
            })
            .sum()
    }

    /// Stable hash of node coordinates and connectivity.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv1a::default();
        for p in &self.nodes {
            h.write(&p[0].to_bits().to_le_bytes());
            h.write(&p[1].to_bits().to_le_bytes());
        }
        for c in &self.cells {
            for n in c.nodes {
                h.write(&n.to_le_bytes());
            }
        }
        h.finish()
    }

    /// Minimum Jacobian determinant over the given reference points of every cell.
    pub fn min_jacobian(&self, points: &[[f64; 2]]) -> f64 {
        let mut m = f64::INFINITY;
        for c in 0..self.cells.len() {
            for p in points {
                m = m.min(self.map(c, *p).det);
            }
        }
        m
    }

    fn assemble(
        profile: BoundaryProfile,
        domain: MeshDomain,
        nx: usize,
        blocks: Vec<Block>,
        row_sigma: Vec<(f64, f64)>,
        row_block: Vec<usize>,
        interface_row: Option<usize>,
    ) -> Result<Self, GeometryError> {
        let ny = row_block.len();
        let periodic = matches!(domain, MeshDomain::Strip { .. });
        let mut mesh = QuadMesh {
            profile,
            domain,
            nx,
            blocks,
            row_sigma,
            row_block,
            nodes: Vec::new(),
            node_tags: Vec::new(),
            corner_nodes: Vec::new(),
            cells: Vec::new(),
            lattice: Vec::new(),
            corner_lattice: Vec::new(),
            interface_row,
        };
        let li = 2 * nx + 1;
        let lj = 2 * ny + 1;
        let h = mesh.cell_width();

        // Lattice row -> (cell row, t) used to evaluate coordinates.
        let row_of = |j: usize| -> (usize, f64) {
            if j == 2 * ny {
                (ny - 1, 1.0)
            } else {
                (j / 2, 0.5 * (j % 2) as f64)
            }
        };

        // Collapsed columns: blocks whose thickness vanishes at a lattice column
        // map all their lattice rows onto the block top.
        let mut canon = vec![0usize; li * lj];
        for j in 0..lj {
            for i in 0..li {
                let mut ci = i;
                if periodic && i == 2 * nx {
                    ci = 0;
                }
                let mut cj = j;
                let x1 = ci as f64 * 0.5 * h;
                for b in &mesh.blocks {
                    let (j0, j1) = (2 * b.rows.0, 2 * b.rows.1);
                    if cj >= j0 && cj < j1 {
                        let (lo, _) = mesh.curve(b.lower, x1);
                        let (up, _) = mesh.curve(b.upper, x1);
                        if up - lo <= 1e-14 * (1.0 + up.abs()) {
                            cj = j1;
                        }
                    }
                }
                canon[j * li + i] = cj * li + ci;
            }
        }
        let mut id_of = vec![u32::MAX; li * lj];
        mesh.lattice = vec![0; li * lj];
        for k in 0..li * lj {
            let c = canon[k];
            if id_of[c] == u32::MAX {
                id_of[c] = mesh.nodes.len() as u32;
                let (i, j) = (c % li, c / li);
                let (row, t) = row_of(j);
                let x1 = i as f64 * 0.5 * h;
                mesh.nodes.push([x1, mesh.map_row_point(row, x1, t)]);
                mesh.node_tags.push(TagSet::default());
            }
            mesh.lattice[k] = id_of[c];
        }

        // Corner lattice (pressure nodes) shares the canonicalization.
        let ci_n = nx + 1;
        let cj_n = ny + 1;
        let mut corner_id = vec![u32::MAX; li * lj];
        mesh.corner_lattice = vec![0; ci_n * cj_n];
        for j in 0..cj_n {
            for i in 0..ci_n {
                let c = canon[(2 * j) * li + 2 * i];
                if corner_id[c] == u32::MAX {
                    corner_id[c] = mesh.corner_nodes.len() as u32;
                    mesh.corner_nodes.push(mesh.nodes[id_of[c] as usize]);
                }
                mesh.corner_lattice[j * ci_n + i] = corner_id[c];
            }
        }

        // Tags.
        for j in 0..lj {
            for i in 0..li {
                let id = mesh.lattice[j * li + i] as usize;
                let mut tags = TagSet::default();
                if j == 0 {
                    tags.insert(BoundaryTag::GammaEps);
                }
                if j == lj - 1 {
                    tags.insert(BoundaryTag::Gamma1);
                }
                if !periodic && (i == 0 || i == li - 1) {
                    let in_rough = interface_row.is_some_and(|r| j < 2 * r);
                    if in_rough {
                        tags.insert(BoundaryTag::GammaEps);
                    } else if i == 0 {
                        tags.insert(BoundaryTag::Sigma0);
                    } else {
                        tags.insert(BoundaryTag::Sigma1);
                    }
                }
                if !periodic && j == 2 * interface_row.unwrap_or(0) {
                    tags.insert(BoundaryTag::Gamma0);
                }
                mesh.node_tags[id] = mesh.node_tags[id].union(tags);
            }
        }

        for row in 0..ny {
            let region = mesh.blocks[mesh.row_block[row]].region;
            for col in 0..nx {
                let mut nodes = [0u32; 9];
                for b in 0..3 {
                    for a in 0..3 {
                        nodes[a + 3 * b] = mesh.lattice[(2 * row + b) * li + 2 * col + a];
                    }
                }
                let mut corners = [0u32; 4];
                for b in 0..2 {
                    for a in 0..2 {
                        corners[a + 2 * b] = mesh.corner_lattice[(row + b) * ci_n + col + a];
                    }
                }
                mesh.cells.push(Cell { col, row, nodes, corners, region });
            }
        }

        let g = crate::discretization::quadrature::GaussRule::new(3);
        let pts: Vec<[f64; 2]> = g.tensor_points().map(|(p, _)| p).collect();
        for c in 0..mesh.cells.len() {
            for p in &pts {
                let det = mesh.map(c, *p).det;
                if !(det > 0.0) {
                    return Err(GeometryError::NonPositiveJacobian { cell: c, det });
                }
            }
        }
        Ok(mesh)
    }
}

/// Builds the shear-mapped mesh of the rough channel `Ω_ε`.
///
/// A mesh line lies exactly on `x₂ = 0`; the rough layer below it is meshed
/// by shearing between `ε η(x₁/ε)` and `0`.
pub fn build_channel_mesh(
    profile: &BoundaryProfile,
    epsilon: f64,
    opts: &ChannelMeshOptions,
) -> Result<QuadMesh, GeometryError> {
    let periods = check_epsilon(epsilon)?;
    let ChannelMeshOptions { nx, ny, grading, min_cells_per_period } = *opts;
    if nx % periods != 0 || nx / periods < min_cells_per_period {
        return Err(GeometryError::PeriodDivisibility { nx, periods, min: min_cells_per_period });
    }
    let eps = 1.0 / periods as f64;
    let has_rough = !profile.is_flat();
    let (n_rough, upper_levels) = channel_levels(ny, eps, has_rough, grading)?;

    let mut blocks = Vec::new();
    let mut row_sigma = Vec::new();
    let mut row_block = Vec::new();
    if has_rough {
        blocks.push(Block {
            lower: Curve::Profile { scale: eps },
            upper: Curve::Constant(0.0),
            region: Region::RoughLayer,
            rows: (0, n_rough),
        });
        let lv = geometric_levels(n_rough, 1.0);
        for k in 0..n_rough {
            row_sigma.push((lv[k], lv[k + 1]));
            row_block.push(0);
        }
    }
    let b = blocks.len();
    blocks.push(Block {
        lower: Curve::Constant(0.0),
        upper: Curve::Constant(1.0),
        region: Region::Omega0,
        rows: (n_rough, ny),
    });
    for k in 0..upper_levels.len() - 1 {
        row_sigma.push((upper_levels[k], upper_levels[k + 1]));
        row_block.push(b);
    }
    QuadMesh::assemble(
        profile.clone(),
        MeshDomain::Channel { epsilon: eps },
        nx,
        blocks,
        row_sigma,
        row_block,
        Some(n_rough),
    )
}

/// Validates `1/ε ∈ ℕ` and returns `1/ε`.
pub fn check_epsilon(epsilon: f64) -> Result<usize, GeometryError> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(GeometryError::Epsilon(epsilon));
    }
    let inv = 1.0 / epsilon;
    let n = inv.round();
    if (inv - n).abs() > 1e-9 * n {
        return Err(GeometryError::Epsilon(epsilon));
    }
    Ok(n as usize)
}

fn channel_levels(
    ny: usize,
    eps: f64,
    has_rough: bool,
    grading: Grading,
) -> Result<(usize, Vec<f64>), GeometryError> {
    match grading {
        Grading::Uniform => {
            let n_rough = if has_rough { (ny / 8).max(1) } else { 0 };
            if ny <= n_rough {
                return Err(GeometryError::Resolution(format!("ny={ny} too small")));
            }
            Ok((n_rough, geometric_levels(ny - n_rough, 1.0)))
        }
        Grading::Boundary { fine_fraction } => {
            if !(0.0..1.0).contains(&fine_fraction) {
                return Err(GeometryError::Resolution(format!(
                    "fine fraction {fine_fraction} must lie in [0, 1)"
                )));
            }
            let n_fine = ((fine_fraction * ny as f64).ceil() as usize).max(2);
            let n_rough = if has_rough { (n_fine / 4).max(1) } else { 0 };
            let n_near = n_fine - n_rough;
            if ny < n_fine + 1 || 2.0 * eps >= 1.0 {
                return Err(GeometryError::Resolution(format!(
                    "ny={ny} too small for boundary grading at eps={eps}"
                )));
            }
            let n_far = ny - n_fine;
            let band = 2.0 * eps;
            let h_near = band / n_near as f64;
            let mut levels: Vec<f64> = (0..=n_near).map(|k| k as f64 * h_near).collect();
            let r = growth_ratio(h_near, n_far, 1.0 - band);
            let mut h = h_near;
            let mut acc = band;
            for _ in 0..n_far {
                h *= r;
                acc += h;
                levels.push(acc);
            }
            // Exact end point and a rescale of the far part for rounding.
            let scale = (1.0 - band) / (acc - band);
            for l in levels.iter_mut().skip(n_near + 1) {
                *l = band + (*l - band) * scale;
            }
            *levels.last_mut().unwrap() = 1.0;
            Ok((n_rough, levels))
        }
    }
}

/// Builds the periodic strip mesh of `{0 < y₁ < 1, η(y₁) < y₂ < H}`.
///
/// The strip is split at `y₂ = 1` (or at the top of the matched band); the
/// cells below do not depend on `H`, so meshes for different truncation
/// heights agree near the boundary.
pub fn build_strip_mesh(
    profile: &BoundaryProfile,
    height: f64,
    opts: &StripMeshOptions,
) -> Result<QuadMesh, GeometryError> {
    if !(height >= 2.0) {
        return Err(GeometryError::TruncationHeight(height));
    }
    if opts.nx < 8 {
        return Err(GeometryError::Resolution(format!("strip nx={} < 8", opts.nx)));
    }
    if opts.near_layers < 1
        || !(opts.far_ratio >= 1.0)
        || !(opts.near_ratio >= 1.0)
        || !(opts.far_max_height > 0.0)
    {
        return Err(GeometryError::Resolution("invalid strip layer options".into()));
    }
    // (lower, upper, levels) of the blocks below the far block
    let mut lower_blocks: Vec<(Curve, Curve, Vec<f64>)> = Vec::new();
    let (split, h_top) = match opts.matched {
        None => {
            let near = geometric_levels(opts.near_layers, opts.near_ratio);
            let depth = 1.0 - profile.min_value();
            let h_top = (near[opts.near_layers] - near[opts.near_layers - 1]) * depth;
            lower_blocks.push((Curve::Profile { scale: 1.0 }, Curve::Constant(1.0), near));
            (1.0, h_top)
        }
        Some(m) => {
            if m.band < 1 || !(m.band_height > 0.0) || m.rough == 0 && !profile.is_flat() {
                return Err(GeometryError::Resolution("invalid matched strip layers".into()));
            }
            if m.rough > 0 && !profile.is_flat() {
                lower_blocks.push((Curve::Profile { scale: 1.0 }, Curve::Constant(0.0), geometric_levels(m.rough, 1.0)));
            }
            lower_blocks.push((Curve::Constant(0.0), Curve::Constant(m.band_height), geometric_levels(m.band, 1.0)));
            (m.band_height, m.band_height / m.band as f64)
        }
    };
    if !(height >= split + 1.0) {
        return Err(GeometryError::TruncationHeight(height));
    }
    let far_len = height - split;
    let mut heights = Vec::new();
    let (mut h, mut acc) = (h_top.min(opts.far_max_height), 0.0);
    while acc < far_len - 1e-9 * far_len {
        h = (h * opts.far_ratio).min(opts.far_max_height);
        heights.push(h);
        acc += h;
    }
    // Absorb the overshoot into the layers proportionally.
    let scale = far_len / acc;
    let mut far = vec![0.0];
    let mut run = 0.0;
    for hk in &heights {
        run += hk * scale / far_len;
        far.push(run);
    }
    *far.last_mut().unwrap() = 1.0;
    lower_blocks.push((Curve::Constant(split), Curve::Constant(height), far));

    let n_blocks = lower_blocks.len();
    let mut blocks = Vec::new();
    let mut row_sigma = Vec::new();
    let mut row_block = Vec::new();
    for (b, (lower, upper, levels)) in lower_blocks.into_iter().enumerate() {
        let first = row_sigma.len();
        for k in 0..levels.len() - 1 {
            row_sigma.push((levels[k], levels[k + 1]));
            row_block.push(b);
        }
        let region = if b + 1 == n_blocks { Region::StripFar } else { Region::StripNear };
        blocks.push(Block { lower, upper, region, rows: (first, row_sigma.len()) });
    }
    QuadMesh::assemble(
        profile.clone(),
        MeshDomain::Strip { height },
        opts.nx,
        blocks,
        row_sigma,
        row_block,
        None,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::profile::{make_profile, ProfileSpec};

    fn cosine() -> BoundaryProfile {
        make_profile(&ProfileSpec::cosine(0.25)).unwrap()
    }

    #[test]
    fn flat_channel_is_unit_square() {
        let p = make_profile(&ProfileSpec::flat()).unwrap();
        let m = build_channel_mesh(&p, 0.125, &ChannelMeshOptions::new(64, 32)).unwrap();
        assert_eq!(m.cells().len(), 2048);
        assert!((m.area() - 1.0).abs() < 1e-13);
        let min_y = m.nodes().iter().map(|n| n[1]).fold(f64::INFINITY, f64::min);
        assert_eq!(min_y, 0.0);
        // Bottom nodes carry both the rough-boundary and interface tags.
        let bottom = m.lattice_node(5, 0) as usize;
        assert!(m.node_tags()[bottom].contains(BoundaryTag::GammaEps));
        assert!(m.node_tags()[bottom].contains(BoundaryTag::Gamma0));
    }

    #[test]
    fn cosine_channel_bottom_matches_profile() {
        let p = cosine();
        let eps = 0.125;
        let m = build_channel_mesh(&p, eps, &ChannelMeshOptions::new(64, 24)).unwrap();
        let min_y = m.nodes().iter().map(|n| n[1]).fold(f64::INFINITY, f64::min);
        assert!((min_y + 0.03125).abs() < 1e-15);
        for i in 0..=128 {
            let n = m.nodes()[m.lattice_node(i, 0) as usize];
            assert!((n[1] - eps * p.eval(n[0] / eps)).abs() < 1e-12);
        }
    }

    #[test]
    fn period_divisibility_is_enforced() {
        let p = cosine();
        let mut opts = ChannelMeshOptions::new(64, 24);
        assert!(build_channel_mesh(&p, 1.0 / 16.0, &opts).is_ok());
        opts.min_cells_per_period = 8;
        assert!(matches!(
            build_channel_mesh(&p, 1.0 / 16.0, &opts),
            Err(GeometryError::PeriodDivisibility { .. })
        ));
        assert!(build_channel_mesh(&p, 1.0 / 16.0, &ChannelMeshOptions::new(60, 24)).is_err());
        assert!(matches!(check_epsilon(0.3), Err(GeometryError::Epsilon(_))));
    }

    #[test]
    fn interface_line_is_complete() {
        let m = build_channel_mesh(&cosine(), 0.125, &ChannelMeshOptions::new(64, 24)).unwrap();
        let r = m.interface_row().unwrap();
        for i in 0..=128 {
            let n = m.nodes()[m.lattice_node(i, 2 * r) as usize];
            assert_eq!(n[1], 0.0);
        }
    }

    #[test]
    fn boundary_grading_puts_a_quarter_of_layers_near_wall() {
        let eps = 1.0 / 16.0;
        let m = build_channel_mesh(&cosine(), eps, &ChannelMeshOptions::new(64, 30)).unwrap();
        let levels = m.row_levels_at(0.5 * eps);
        let near = levels.windows(2).filter(|w| w[0] >= -eps && w[1] <= 2.0 * eps + 1e-14).count();
        assert!(near * 4 >= m.ny(), "{near} of {}", m.ny());
    }

    #[test]
    fn channel_area_matches_integral() {
        // ∫(1 - εη(x/ε)) = 1 + ε a / 2 for the cosine profile.
        let eps = 0.125;
        let m = build_channel_mesh(&cosine(), eps, &ChannelMeshOptions::new(64, 24)).unwrap();
        let exact = 1.0 + eps * 0.25 / 2.0;
        assert!(((m.area() - exact) / exact).abs() < 1e-10, "{}", m.area());
    }

    #[test]
    fn strip_meshes() {
        let flat = make_profile(&ProfileSpec::flat()).unwrap();
        let m = build_strip_mesh(&flat, 8.0, &StripMeshOptions::default()).unwrap();
        assert!((m.area() - 8.0).abs() < 1e-12);
        let sh = make_profile(&ProfileSpec::shifted_flat(0.5)).unwrap();
        let m = build_strip_mesh(&sh, 8.0, &StripMeshOptions::default()).unwrap();
        assert!((m.area() - 8.5).abs() < 1e-12);
        for (l, r) in m.periodic_pairs() {
            assert_eq!(l, r);
        }
        let c = cosine();
        let opts = StripMeshOptions { nx: 32, ..Default::default() };
        let m = build_strip_mesh(&c, 10.0, &opts).unwrap();
        for i in 0..=64 {
            let n = m.nodes()[m.lattice_node(i, 0) as usize];
            assert!((n[1] - c.eval(n[0])).abs() < 1e-12);
        }
        assert!(build_strip_mesh(&c, 1.5, &opts).is_err());
    }

    #[test]
    fn strip_near_block_is_independent_of_height() {
        let c = cosine();
        let opts = StripMeshOptions::default();
        let a = build_strip_mesh(&c, 8.0, &opts).unwrap();
        let b = build_strip_mesh(&c, 12.0, &opts).unwrap();
        for j in 0..=2 * opts.near_layers {
            for i in 0..=2 * opts.nx {
                assert_eq!(a.nodes()[a.lattice_node(i, j) as usize], b.nodes()[b.lattice_node(i, j) as usize]);
            }
        }
    }

    #[test]
    fn locate_inverts_map() {
        let m = build_channel_mesh(&cosine(), 0.125, &ChannelMeshOptions::new(64, 24)).unwrap();
        for (c, xi) in [(5usize, [0.3, 0.7]), (900, [0.1, 0.2]), (1500, [0.9, 0.95])] {
            let x = m.map(c, xi).x;
            let (c2, xi2) = m.locate(x).unwrap();
            let x2 = m.map(c2, xi2).x;
            assert!((x[0] - x2[0]).abs() < 1e-12 && (x[1] - x2[1]).abs() < 1e-12);
        }
        assert!(m.locate([0.5, 1.1]).is_none());
        assert!(m.locate([0.5 * 0.125, -0.2]).is_none());
    }

    #[test]
    fn mid_edge_bottom_deviation_shrinks_with_refinement() {
        // The exact map keeps every boundary point on the curve; compare the
        // quadratic interpolant of bottom nodes instead.
        let c = cosine();
        let dev = |nx: usize| {
            let m = build_strip_mesh(&c, 4.0, &StripMeshOptions { nx, ..Default::default() }).unwrap();
            let mut worst: f64 = 0.0;
            for col in 0..nx {
                let ys: Vec<f64> =
                    (0..3).map(|a| m.nodes()[m.lattice_node(2 * col + a, 0) as usize][1]).collect();
                let x = (col as f64 + 0.25) / nx as f64;
                let (l0, l1, l2) = (0.375, 0.75, -0.125);
                let interp = l0 * ys[0] + l1 * ys[1] + l2 * ys[2];
                worst = worst.max((interp - c.eval(x)).abs());
            }
            worst
        };
        let (a, b) = (dev(16), dev(32));
        assert!(b < a / 4.0, "{a} {b}");
    }
}
