//! Element kernels and full-dof operator assembly.

use std::io::{self, Write};

use rayon::prelude::*;

use crate::geometry::{BoundaryTag, QuadMesh};

use super::element::PointData;
use super::quadrature::GaussRule;
use super::space::{MixedField, MixedSpace};
use super::DiscretizationError;

/// Compressed sparse row matrix.
#[derive(Clone, Debug)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<u32>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Sums duplicate entries.
    pub fn from_triplets(nrows: usize, ncols: usize, mut t: Vec<(u32, u32, f64)>) -> Self {
        t.sort_unstable_by_key(|e| (e.0, e.1));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(t.len());
        let mut values: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(u32, u32)> = None;
        for (r, c, v) in t {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r as usize + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { nrows, ncols, row_ptr, col_idx, values }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&(j as u32)) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.nrows)
            .map(|i| {
                (self.row_ptr[i]..self.row_ptr[i + 1])
                    .map(|k| self.values[k] * x[self.col_idx[k] as usize])
                    .sum()
            })
            .collect()
    }

    pub fn transpose_matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols];
        for i in 0..self.nrows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                y[self.col_idx[k] as usize] += self.values[k] * x[i];
            }
        }
        y
    }

    /// Largest `|a_ij - a_ji|` relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let mut worst: f64 = 0.0;
        for i in 0..self.nrows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k] as usize;
                worst = worst.max((self.values[k] - self.get(j, i)).abs());
            }
        }
        worst / scale
    }

    /// Writes `row col value` lines.
    pub fn write_coo<W: Write>(&self, mut out: W) -> io::Result<()> {
        for i in 0..self.nrows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                writeln!(out, "{i} {} {:.16e}", self.col_idx[k], self.values[k])?;
            }
        }
        Ok(())
    }
}

/// Local matrices of one cell.
#[derive(Clone, Debug)]
pub(crate) struct CellMatrices {
    pub stiff: [[f64; 9]; 9],
    pub mass: [[f64; 9]; 9],
    pub conv: [[f64; 9]; 9],
    /// `div[k][2a + c] = -∫ ψ_k ∂_c φ_a`.
    pub div: [[f64; 18]; 4],
}

pub(crate) fn cell_points(mesh: &QuadMesh, rule: &GaussRule, cell: usize) -> Vec<PointData> {
    rule.tensor_points().map(|(xi, w)| PointData::new(&mesh.map(cell, xi), xi, w)).collect()
}

/// Local operators; `advect` holds the advecting velocity at the 9 nodes.
pub(crate) fn cell_matrices(pts: &[PointData], advect: Option<&[[f64; 2]; 9]>, want_mass: bool) -> CellMatrices {
    let mut m = CellMatrices {
        stiff: [[0.0; 9]; 9],
        mass: [[0.0; 9]; 9],
        conv: [[0.0; 9]; 9],
        div: [[0.0; 18]; 4],
    };
    for pd in pts {
        let dx = pd.dx;
        for i in 0..9 {
            for j in 0..9 {
                m.stiff[i][j] += dx * (pd.dphi[i][0] * pd.dphi[j][0] + pd.dphi[i][1] * pd.dphi[j][1]);
            }
        }
        if want_mass {
            for i in 0..9 {
                for j in 0..9 {
                    m.mass[i][j] += dx * pd.phi[i] * pd.phi[j];
                }
            }
        }
        if let Some(w) = advect {
            let mut wq = [0.0; 2];
            for a in 0..9 {
                wq[0] += w[a][0] * pd.phi[a];
                wq[1] += w[a][1] * pd.phi[a];
            }
            for j in 0..9 {
                let adv = wq[0] * pd.dphi[j][0] + wq[1] * pd.dphi[j][1];
                for i in 0..9 {
                    m.conv[i][j] += dx * adv * pd.phi[i];
                }
            }
        }
        for k in 0..4 {
            for a in 0..9 {
                m.div[k][2 * a] -= dx * pd.psi[k] * pd.dphi[a][0];
                m.div[k][2 * a + 1] -= dx * pd.psi[k] * pd.dphi[a][1];
            }
        }
    }
    m
}

pub(crate) fn nodal_velocity(mesh: &QuadMesh, cell: usize, u: &[f64]) -> [[f64; 2]; 9] {
    let c = &mesh.cells()[cell];
    let mut w = [[0.0; 2]; 9];
    for a in 0..9 {
        let n = c.nodes[a] as usize;
        w[a] = [u[2 * n], u[2 * n + 1]];
    }
    w
}

/// Full-dof operators (constraints not applied).
///
/// The scalar blocks act componentwise on interleaved velocity vectors:
/// the viscous block is `A = K ⊗ I₂`, the mass block `M ⊗ I₂`, the
/// convection block `N(w) ⊗ I₂`.
#[derive(Clone, Debug)]
pub struct AssembledSystem {
    /// `K_ij = ∫ ∇φ_i · ∇φ_j` over velocity nodes.
    pub stiffness: CsrMatrix,
    pub mass: Option<CsrMatrix>,
    /// `N(w)_ij = ∫ (w · ∇φ_j) φ_i`.
    pub convection: Option<CsrMatrix>,
    /// `B_kj = -∫ q_k div φ_j`, pressure dofs × velocity dofs.
    pub divergence: CsrMatrix,
}

impl AssembledSystem {
    /// `(K ⊗ I₂) u` on an interleaved velocity vector.
    pub fn apply_viscous(&self, u: &[f64]) -> Vec<f64> {
        apply_componentwise(&self.stiffness, u)
    }

    pub fn apply_mass(&self, u: &[f64]) -> Option<Vec<f64>> {
        self.mass.as_ref().map(|m| apply_componentwise(m, u))
    }
}

pub fn apply_componentwise(m: &CsrMatrix, u: &[f64]) -> Vec<f64> {
    let n = m.nrows;
    let (u1, u2): (Vec<f64>, Vec<f64>) = (0..n).map(|i| (u[2 * i], u[2 * i + 1])).unzip();
    let (y1, y2) = (m.matvec(&u1), m.matvec(&u2));
    let mut out = vec![0.0; 2 * n];
    for i in 0..n {
        out[2 * i] = y1[i];
        out[2 * i + 1] = y2[i];
    }
    out
}

/// Assembles the full-dof operators with 3×3 Gauss quadrature.
pub fn assemble(
    space: &MixedSpace,
    advecting: Option<&MixedField>,
    need_mass: bool,
) -> Result<AssembledSystem, DiscretizationError> {
    let mesh = space.mesh();
    let rule = GaussRule::new(3);
    let ncell = mesh.cells().len();
    let locals: Vec<CellMatrices> = (0..ncell)
        .into_par_iter()
        .map(|c| {
            let pts = cell_points(mesh, &rule, c);
            if let Some(bad) = pts.iter().find(|p| !(p.dx > 0.0)) {
                return Err(DiscretizationError::Jacobian { cell: c, det: bad.dx });
            }
            let w = advecting.map(|f| nodal_velocity(mesh, c, &f.u));
            Ok(cell_matrices(&pts, w.as_ref(), need_mass))
        })
        .collect::<Result<_, _>>()?;
    let nv = space.n_vel_nodes();
    let mut ks = Vec::with_capacity(ncell * 81);
    let mut ms = Vec::new();
    let mut ns = Vec::new();
    let mut bs = Vec::with_capacity(ncell * 72);
    for (c, m) in locals.iter().enumerate() {
        let cell = &mesh.cells()[c];
        for i in 0..9 {
            for j in 0..9 {
                let (gi, gj) = (cell.nodes[i], cell.nodes[j]);
                ks.push((gi, gj, m.stiff[i][j]));
                if need_mass {
                    ms.push((gi, gj, m.mass[i][j]));
                }
                if advecting.is_some() {
                    ns.push((gi, gj, m.conv[i][j]));
                }
            }
        }
        for k in 0..4 {
            for a in 0..9 {
                for comp in 0..2 {
                    bs.push((cell.corners[k], 2 * cell.nodes[a] + comp as u32, m.div[k][2 * a + comp]));
                }
            }
        }
    }
    Ok(AssembledSystem {
        stiffness: CsrMatrix::from_triplets(nv, nv, ks),
        mass: need_mass.then(|| CsrMatrix::from_triplets(nv, nv, ms)),
        convection: advecting.map(|_| CsrMatrix::from_triplets(nv, nv, ns)),
        divergence: CsrMatrix::from_triplets(space.n_pres_dofs(), 2 * nv, bs),
    })
}

/// Boundary functional `f(φ) = p₀∫_{Σ₀} φ₁ − p₁∫_{Σ₁} φ₁` as a full velocity-dof vector,
/// evaluated through the divergence theorem.
pub fn boundary_pressure_load(space: &MixedSpace, p0: f64, p1: f64) -> Result<Vec<f64>, DiscretizationError> {
    let mesh = space.mesh();
    let has = |tag| mesh.node_tags().iter().any(|t| t.contains(tag));
    if !has(BoundaryTag::Sigma0) || !has(BoundaryTag::Sigma1) {
        return Err(DiscretizationError::MissingTag("Sigma0/Sigma1"));
    }
    // Volume form of the boundary term with the lift L = p0 + (p1 - p0) x1,
    // using the divergence quadrature so that equal pressures give rest exactly.
    let mut f = vec![0.0; space.n_vel_dofs()];
    let rule = GaussRule::new(3);
    let dl = p1 - p0;
    for (ci, cell) in mesh.cells().iter().enumerate() {
        for pd in cell_points(mesh, &rule, ci) {
            let l = p0 + dl * pd.x[0];
            for a in 0..9 {
                let n = cell.nodes[a] as usize;
                f[2 * n] -= pd.dx * (l * pd.dphi[a][0] + dl * pd.phi[a]);
                f[2 * n + 1] -= pd.dx * l * pd.dphi[a][1];
            }
        }
    }
    Ok(f)
}

/// `(−K L, −B L)` for a full velocity vector `L`, as full velocity- and
/// pressure-dof vectors. Both operators annihilate constants, so each cell
/// works with `L` minus its first node's value to keep rounding at the scale
/// of the cell variation of `L`.
pub fn lifting_load(space: &MixedSpace, lift: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mesh = space.mesh();
    let rule = GaussRule::new(3);
    let locals: Vec<([[f64; 2]; 9], [f64; 4])> = (0..mesh.cells().len())
        .into_par_iter()
        .map(|c| {
            let m = cell_matrices(&cell_points(mesh, &rule, c), None, false);
            let mut l = nodal_velocity(mesh, c, lift);
            let base = l[0];
            l.iter_mut().for_each(|v| {
                v[0] -= base[0];
                v[1] -= base[1];
            });
            let mut fv = [[0.0; 2]; 9];
            for a in 0..9 {
                for b in 0..9 {
                    fv[a][0] -= m.stiff[a][b] * l[b][0];
                    fv[a][1] -= m.stiff[a][b] * l[b][1];
                }
            }
            let mut fp = [0.0; 4];
            for k in 0..4 {
                for b in 0..9 {
                    fp[k] -= m.div[k][2 * b] * l[b][0] + m.div[k][2 * b + 1] * l[b][1];
                }
            }
            (fv, fp)
        })
        .collect();
    let mut fv = vec![0.0; space.n_vel_dofs()];
    let mut fp = vec![0.0; space.n_pres_dofs()];
    for (c, (v, p)) in locals.iter().enumerate() {
        let cell = &mesh.cells()[c];
        for a in 0..9 {
            fv[2 * cell.nodes[a] as usize] += v[a][0];
            fv[2 * cell.nodes[a] as usize + 1] += v[a][1];
        }
        for k in 0..4 {
            fp[cell.corners[k] as usize] += p[k];
        }
    }
    (fv, fp)
}

/// `∫ ((w·∇)w)·φ` for every velocity dof, as a full interleaved vector.
pub fn convection_load(space: &MixedSpace, w: &[f64]) -> Vec<f64> {
    let mesh = space.mesh();
    let rule = GaussRule::new(3);
    let locals: Vec<[[f64; 2]; 9]> = (0..mesh.cells().len())
        .into_par_iter()
        .map(|c| {
            let nw = nodal_velocity(mesh, c, w);
            let mut out = [[0.0; 2]; 9];
            for pd in cell_points(mesh, &rule, c) {
                let mut u = [0.0; 2];
                let mut g = [[0.0; 2]; 2];
                for a in 0..9 {
                    for i in 0..2 {
                        u[i] += nw[a][i] * pd.phi[a];
                        g[i][0] += nw[a][i] * pd.dphi[a][0];
                        g[i][1] += nw[a][i] * pd.dphi[a][1];
                    }
                }
                let adv = [u[0] * g[0][0] + u[1] * g[0][1], u[0] * g[1][0] + u[1] * g[1][1]];
                for a in 0..9 {
                    out[a][0] += pd.dx * adv[0] * pd.phi[a];
                    out[a][1] += pd.dx * adv[1] * pd.phi[a];
                }
            }
            out
        })
        .collect();
    let mut f = vec![0.0; space.n_vel_dofs()];
    for (c, out) in locals.iter().enumerate() {
        for (a, &n) in mesh.cells()[c].nodes.iter().enumerate() {
            f[2 * n as usize] += out[a][0];
            f[2 * n as usize + 1] += out[a][1];
        }
    }
    f
}

/// `max_q |∫ q div u| / (‖q‖_{L²} ‖u‖_{H¹})` over the pressure basis functions.
pub fn divergence_metric(field: &MixedField) -> f64 {
    let space = field.space();
    let mesh = space.mesh();
    let rule = GaussRule::new(3);
    let np = space.n_pres_dofs();
    let mut dq = vec![0.0; np];
    let mut qq = vec![0.0; np];
    let mut h1 = 0.0;
    for c in 0..mesh.cells().len() {
        let cell = &mesh.cells()[c];
        let w = nodal_velocity(mesh, c, &field.u);
        for pd in cell_points(mesh, &rule, c) {
            let mut div = 0.0;
            let mut u = [0.0; 2];
            let mut g = [[0.0; 2]; 2];
            for a in 0..9 {
                div += w[a][0] * pd.dphi[a][0] + w[a][1] * pd.dphi[a][1];
                for i in 0..2 {
                    u[i] += w[a][i] * pd.phi[a];
                    for j in 0..2 {
                        g[i][j] += w[a][i] * pd.dphi[a][j];
                    }
                }
            }
            h1 += pd.dx * (u[0] * u[0] + u[1] * u[1] + g.iter().flatten().map(|v| v * v).sum::<f64>());
            for k in 0..4 {
                let q = cell.corners[k] as usize;
                dq[q] += pd.dx * pd.psi[k] * div;
                qq[q] += pd.dx * pd.psi[k] * pd.psi[k];
            }
        }
    }
    let h1 = h1.sqrt();
    if h1 == 0.0 {
        return 0.0;
    }
    dq.iter().zip(&qq).map(|(d, q)| d.abs() / (q.sqrt() * h1)).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::discretization::space::{build_space, Constraints};
    use crate::geometry::{build_channel_mesh, make_profile, ChannelMeshOptions, ProfileSpec};

    fn cosine_space() -> Arc<MixedSpace> {
        let p = make_profile(&ProfileSpec::cosine(0.25)).unwrap();
        let mesh = build_channel_mesh(&p, 0.25, &ChannelMeshOptions::new(16, 12)).unwrap();
        build_space(Arc::new(mesh), &Constraints::channel()).unwrap()
    }

    #[test]
    fn stiffness_symmetric_and_mass_positive() {
        let sp = cosine_space();
        let sys = assemble(&sp, None, true).unwrap();
        assert!(sys.stiffness.asymmetry() < 1e-12);
        let m = sys.mass.as_ref().unwrap();
        assert!(m.asymmetry() < 1e-12);
        // Total mass equals the area.
        let ones = vec![1.0; sp.n_vel_nodes()];
        let area: f64 = m.matvec(&ones).iter().sum();
        assert!((area - sp.mesh().area()).abs() < 1e-12);
    }

    #[test]
    fn zero_advection_gives_zero_convection() {
        let sp = cosine_space();
        let w = MixedField::zeros(&sp);
        let sys = assemble(&sp, Some(&w), false).unwrap();
        assert!(sys.convection.unwrap().values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn linear_field_is_harmonic_in_interior_rows() {
        let sp = cosine_space();
        let sys = assemble(&sp, None, false).unwrap();
        let f = MixedField::interpolate(&sp, |x| ([2.0 * x[0] - x[1], 0.5 + x[1]], 0.0), false);
        let r = sys.apply_viscous(&f.u);
        // Cells above x₂ = 0 are affine images of the reference square.
        for (n, tags) in sp.mesh().node_tags().iter().enumerate() {
            if tags.is_empty() && sp.mesh().nodes()[n][1] > 0.0 {
                assert!(r[2 * n].abs() < 1e-12 && r[2 * n + 1].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn divergence_of_solenoidal_polynomial_vanishes() {
        let p = make_profile(&ProfileSpec::flat()).unwrap();
        let mesh = build_channel_mesh(&p, 0.25, &ChannelMeshOptions::new(16, 12)).unwrap();
        let sp = build_space(Arc::new(mesh), &Constraints::channel()).unwrap();
        let sys = assemble(&sp, None, false).unwrap();
        let f = MixedField::interpolate(&sp, |x| ([x[0], -x[1]], 0.0), false);
        let ones = vec![1.0; sp.n_pres_dofs()];
        let total: f64 = sys.divergence.transpose_matvec(&ones).iter().zip(&f.u).map(|(b, u)| b * u).sum();
        assert!(total.abs() < 1e-12);
        assert!(divergence_metric(&f) < 1e-12);
    }

    #[test]
    fn constant_pressure_gives_boundary_flux() {
        // -∫ div u = -∮ u·n for u = (x₁², 0): Σ₁ contributes 1 and the rough
        // bottom h(x₁) = εη(x₁/ε) contributes ∫ x₁² h' = -2∫ x₁ h = εa/2.
        let sp = cosine_space();
        let sys = assemble(&sp, None, false).unwrap();
        let f = MixedField::interpolate(&sp, |x| ([x[0] * x[0], 0.0], 0.0), false);
        let ones = vec![1.0; sp.n_pres_dofs()];
        let total: f64 = sys.divergence.transpose_matvec(&ones).iter().zip(&f.u).map(|(b, u)| b * u).sum();
        let expected = -(1.0 + 0.25 * 0.25 / 2.0);
        assert!((total - expected).abs() < 1e-10, "{total}");
    }

    #[test]
    fn pressure_load_line_integral() {
        let p = make_profile(&ProfileSpec::flat()).unwrap();
        let mesh = build_channel_mesh(&p, 0.25, &ChannelMeshOptions::new(16, 12)).unwrap();
        let sp = build_space(Arc::new(mesh), &Constraints::channel()).unwrap();
        let f = boundary_pressure_load(&sp, 0.0, -1.0).unwrap();
        let g = MixedField::interpolate(&sp, |x| ([x[1] * (1.0 - x[1]), 0.0], 0.0), false);
        let val: f64 = f.iter().zip(&g.u).map(|(a, b)| a * b).sum();
        assert!((val - 1.0 / 6.0).abs() < 1e-13);
        let c = boundary_pressure_load(&sp, 2.0, 2.0).unwrap();
        let val: f64 = c.iter().zip(&g.u).map(|(a, b)| a * b).sum();
        assert!(val.abs() < 1e-13);
    }

    #[test]
    fn lifting_load_matches_assembled_operators() {
        let sp = cosine_space();
        let l = MixedField::interpolate(&sp, |x| ([x[1] * x[1] + x[0], x[0] * x[1]], 0.0), false);
        let sys = assemble(&sp, None, false).unwrap();
        let (fv, fp) = lifting_load(&sp, &l.u);
        let kv = sys.apply_viscous(&l.u);
        let bv = sys.divergence.matvec(&l.u);
        assert!(fv.iter().zip(&kv).all(|(a, b)| (a + b).abs() < 1e-12));
        assert!(fp.iter().zip(&bv).all(|(a, b)| (a + b).abs() < 1e-12));
    }

    #[test]
    fn convection_load_matches_matrix_form() {
        let sp = cosine_space();
        let w = MixedField::interpolate(&sp, |x| ([x[1] * (1.0 - x[1]) + 0.3 * x[0], (x[0] * 3.0).sin()], 0.0), false);
        let sys = assemble(&sp, Some(&w), false).unwrap();
        let a = apply_componentwise(sys.convection.as_ref().unwrap(), &w.u);
        let b = convection_load(&sp, &w.u);
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-14));
    }

    #[test]
    fn equal_pressure_load_is_constant_pressure_gradient() {
        let sp = cosine_space();
        let sys = assemble(&sp, None, false).unwrap();
        let f = boundary_pressure_load(&sp, 0.7, 0.7).unwrap();
        let b = sys.divergence.transpose_matvec(&vec![0.7; sp.n_pres_dofs()]);
        assert!(f.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-14));
    }
}
