//! Assembly of the constrained saddle-point system and its direct solve.
//!
//! Unknowns are the free velocity dofs followed by the free pressure dofs:
//!
//! ```text
//! [ νK + N(w) + cM   Bᵀ ] [u]   [f]
//! [ B                0  ] [p] = [0]
//! ```
//!
//! with constrained values moved to the right-hand side.

use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::MatMut;
use rayon::prelude::*;

use super::assembly::{cell_matrices, cell_points, nodal_velocity, CellMatrices};
use super::quadrature::GaussRule;
use super::space::{MixedField, MixedSpace, NONE};
use super::DiscretizationError;

/// Body force as a function of position.
pub type BodyForce<'a> = &'a (dyn Fn([f64; 2]) -> [f64; 2] + Sync);

/// Coefficients of one linear saddle problem.
#[derive(Clone, Copy)]
pub struct SaddleTerms<'a> {
    pub viscosity: f64,
    /// Coefficient `c` of the mass block (e.g. `1/dt`).
    pub mass_coeff: f64,
    /// Full interleaved velocity vector of the advecting field.
    pub advecting: Option<&'a [f64]>,
    /// Adds `c M v` to the right-hand side for this full velocity vector.
    pub mass_rhs: Option<&'a [f64]>,
    pub body_force: Option<BodyForce<'a>>,
    /// Full velocity-dof load vector (e.g. the pressure-drop functional).
    pub load: Option<&'a [f64]>,
    /// Full pressure-dof vector added to the continuity rows.
    pub pressure_load: Option<&'a [f64]>,
}

impl Default for SaddleTerms<'_> {
    fn default() -> Self {
        Self {
            viscosity: 1.0,
            mass_coeff: 0.0,
            advecting: None,
            mass_rhs: None,
            body_force: None,
            load: None,
            pressure_load: None,
        }
    }
}

/// Numerical values of an assembled saddle system.
#[derive(Clone, Debug)]
pub struct SaddleSystem {
    pub values: Vec<f64>,
    pub rhs: Vec<f64>,
}

/// Sparsity pattern and cached symbolic factorization for a space.
pub struct SaddleOperator {
    space: Arc<MixedSpace>,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    symbolic: Option<SymbolicLu<usize>>,
}

/// Numeric factorization tied to the operator's pattern.
pub struct SaddleFactor {
    lu: Lu<usize, f64>,
    values: Vec<f64>,
}

const CHUNK: usize = 2048;
/// Upper bound on iterative refinement steps.
const MAX_REFINE: usize = 6;

impl SaddleOperator {
    pub fn new(space: &Arc<MixedSpace>) -> Self {
        let n = space.n_free();
        let mesh = space.mesh();
        let vf = space.vel_free_raw();
        let pf = space.pres_free_raw();
        let nfv = space.n_free_vel();
        let mut cols: Vec<Vec<u32>> = vec![Vec::new(); n];
        for cell in mesh.cells() {
            let mut vel = [[NONE; 9]; 2];
            for a in 0..9 {
                for c in 0..2 {
                    vel[c][a] = vf[2 * cell.nodes[a] as usize + c];
                }
            }
            let pres: Vec<u32> =
                cell.corners.iter().filter_map(|&k| (pf[k as usize] != NONE).then(|| nfv as u32 + pf[k as usize])).collect();
            for c in 0..2 {
                for &j in vel[c].iter().filter(|&&j| j != NONE) {
                    cols[j as usize].extend(vel[c].iter().filter(|&&i| i != NONE));
                    cols[j as usize].extend(&pres);
                }
            }
            for &k in &pres {
                for c in 0..2 {
                    cols[k as usize].extend(vel[c].iter().filter(|&&i| i != NONE));
                }
            }
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for mut col in cols {
            col.sort_unstable();
            col.dedup();
            row_idx.extend(col.iter().map(|&r| r as usize));
            col_ptr.push(row_idx.len());
        }
        Self { space: space.clone(), col_ptr, row_idx, symbolic: None }
    }

    pub fn space(&self) -> &Arc<MixedSpace> {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.col_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    fn position(&self, row: u32, col: u32) -> usize {
        let (s, e) = (self.col_ptr[col as usize], self.col_ptr[col as usize + 1]);
        s + self.row_idx[s..e].binary_search(&(row as usize)).expect("entry outside pattern")
    }

    /// Assembles matrix values and right-hand side.
    pub fn assemble(&self, terms: &SaddleTerms<'_>) -> Result<SaddleSystem, DiscretizationError> {
        let space = &self.space;
        let mesh = space.mesh();
        let rule = GaussRule::new(3);
        let vf = space.vel_free_raw();
        let pf = space.pres_free_raw();
        let vfix = space.vel_fixed();
        let pfix = space.pres_fixed();
        let nfv = space.n_free_vel() as u32;
        let want_mass = terms.mass_coeff != 0.0;
        let mut values = vec![0.0; self.nnz()];
        let mut rhs = vec![0.0; self.dim()];
        let ncell = mesh.cells().len();
        for start in (0..ncell).step_by(CHUNK) {
            let end = (start + CHUNK).min(ncell);
            let locals: Vec<(CellMatrices, [[f64; 2]; 9])> = (start..end)
                .into_par_iter()
                .map(|c| {
                    let pts = cell_points(mesh, &rule, c);
                    if let Some(bad) = pts.iter().find(|p| !(p.dx > 0.0)) {
                        return Err(DiscretizationError::Jacobian { cell: c, det: bad.dx });
                    }
                    let w = terms.advecting.map(|u| nodal_velocity(mesh, c, u));
                    let m = cell_matrices(&pts, w.as_ref(), want_mass);
                    let mut force = [[0.0; 2]; 9];
                    if let Some(f) = terms.body_force {
                        for pd in &pts {
                            let fx = f(pd.x);
                            for a in 0..9 {
                                force[a][0] += pd.dx * fx[0] * pd.phi[a];
                                force[a][1] += pd.dx * fx[1] * pd.phi[a];
                            }
                        }
                    }
                    Ok((m, force))
                })
                .collect::<Result<_, _>>()?;
            for (off, (m, force)) in locals.iter().enumerate() {
                let cell = &mesh.cells()[start + off];
                let prev = terms.mass_rhs.map(|u| nodal_velocity(mesh, start + off, u));
                for a in 0..9 {
                    for c in 0..2 {
                        let da = 2 * cell.nodes[a] as usize + c;
                        let row = vf[da];
                        if row == NONE {
                            continue;
                        }
                        let mut r = force[a][c];
                        if let Some(prev) = &prev {
                            for b in 0..9 {
                                r += terms.mass_coeff * m.mass[a][b] * prev[b][c];
                            }
                        }
                        for b in 0..9 {
                            let db = 2 * cell.nodes[b] as usize + c;
                            let v = terms.viscosity * m.stiff[a][b]
                                + if want_mass { terms.mass_coeff * m.mass[a][b] } else { 0.0 }
                                + if terms.advecting.is_some() { m.conv[a][b] } else { 0.0 };
                            let col = vf[db];
                            if col == NONE {
                                r -= v * vfix[db];
                            } else {
                                values[self.position(row, col)] += v;
                            }
                        }
                        for k in 0..4 {
                            let q = cell.corners[k] as usize;
                            let v = m.div[k][2 * a + c];
                            if pf[q] == NONE {
                                r -= v * pfix[q];
                            } else {
                                values[self.position(row, nfv + pf[q])] += v;
                            }
                        }
                        rhs[row as usize] += r;
                    }
                }
                for k in 0..4 {
                    let q = cell.corners[k] as usize;
                    if pf[q] == NONE {
                        continue;
                    }
                    let row = nfv + pf[q];
                    for a in 0..9 {
                        for c in 0..2 {
                            let da = 2 * cell.nodes[a] as usize + c;
                            let v = m.div[k][2 * a + c];
                            if vf[da] == NONE {
                                rhs[row as usize] -= v * vfix[da];
                            } else {
                                values[self.position(row, vf[da])] += v;
                            }
                        }
                    }
                }
            }
        }
        if let Some(load) = terms.load {
            for (d, &f) in vf.iter().enumerate() {
                if f != NONE {
                    rhs[f as usize] += load[d];
                }
            }
        }
        if let Some(load) = terms.pressure_load {
            for (q, &f) in pf.iter().enumerate() {
                if f != NONE {
                    rhs[(nfv + f) as usize] += load[q];
                }
            }
        }
        Ok(SaddleSystem { values, rhs })
    }

    fn matrix<'a>(&'a self, values: &'a [f64]) -> SparseColMatRef<'a, usize, f64> {
        let n = self.dim();
        let sym = SymbolicSparseColMatRef::new_checked(n, n, &self.col_ptr, None, &self.row_idx);
        SparseColMatRef::new(sym, values)
    }

    /// LU factorization; the symbolic phase is computed once per operator.
    pub fn factorize(&mut self, values: Vec<f64>) -> Result<SaddleFactor, DiscretizationError> {
        if self.symbolic.is_none() {
            let sym = SymbolicLu::try_new(self.matrix(&values).symbolic())
                .map_err(|e| DiscretizationError::Factorization(format!("{e:?}")))?;
            self.symbolic = Some(sym);
        }
        let lu = Lu::try_new_with_symbolic(self.symbolic.clone().unwrap(), self.matrix(&values))
            .map_err(|e| DiscretizationError::Factorization(format!("{e:?}")))?;
        Ok(SaddleFactor { lu, values })
    }

    /// `y = S x` for the assembled values.
    pub fn apply(&self, values: &[f64], x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        for j in 0..self.dim() {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                y[self.row_idx[k]] += values[k] * xj;
            }
        }
        y
    }

    /// `b − S x` with compensated accumulation, accurate to about one rounding
    /// of the exact value.
    fn residual(&self, values: &[f64], x: &[f64], b: &[f64]) -> Vec<f64> {
        let mut hi = b.to_vec();
        let mut lo = vec![0.0; b.len()];
        for j in 0..self.dim() {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                let i = self.row_idx[k];
                let p = values[k] * xj;
                let pe = values[k].mul_add(xj, -p);
                let s = hi[i] - p;
                let bb = s - hi[i];
                let e = (hi[i] - (s - bb)) + (-p - bb);
                hi[i] = s;
                lo[i] += e - pe;
            }
        }
        hi.iter().zip(&lo).map(|(h, l)| h + l).collect()
    }

    /// Solves with iterative refinement on compensated residuals until the
    /// correction stagnates; fails when the relative residual stays above `1e-10`.
    pub fn solve(&self, factor: &SaddleFactor, rhs: &[f64]) -> Result<Vec<f64>, DiscretizationError> {
        let n = self.dim();
        let bnorm = norm(rhs);
        if bnorm == 0.0 {
            return Ok(vec![0.0; n]);
        }
        let mut x = rhs.to_vec();
        factor.lu.solve_in_place(MatMut::from_column_major_slice_mut(&mut x, n, 1));
        let mut rel = f64::INFINITY;
        let mut last_step = f64::INFINITY;
        for _ in 0..MAX_REFINE {
            let mut r = self.residual(&factor.values, &x, rhs);
            rel = norm(&r) / bnorm;
            if !rel.is_finite() || rel == 0.0 {
                break;
            }
            factor.lu.solve_in_place(MatMut::from_column_major_slice_mut(&mut r, n, 1));
            let step = norm(&r);
            if step > 0.5 * last_step {
                break;
            }
            x.iter_mut().zip(&r).for_each(|(xi, ri)| *xi += ri);
            last_step = step;
            if step <= f64::EPSILON * norm(&x) {
                break;
            }
        }
        if !(rel <= 1e-10) {
            return Err(DiscretizationError::Residual { relative: rel });
        }
        Ok(x)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Assembles, factorizes and solves one saddle problem.
pub fn solve_saddle(space: &Arc<MixedSpace>, terms: &SaddleTerms<'_>) -> Result<MixedField, DiscretizationError> {
    let mut op = SaddleOperator::new(space);
    let sys = op.assemble(terms)?;
    let factor = op.factorize(sys.values)?;
    let x = op.solve(&factor, &sys.rhs)?;
    Ok(MixedField::from_free(space, &x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::assembly::boundary_pressure_load;
    use crate::discretization::space::{build_space, Constraints};
    use crate::geometry::{build_channel_mesh, make_profile, ChannelMeshOptions, ProfileSpec};

    #[test]
    fn zero_rhs_gives_zero_field() {
        let p = make_profile(&ProfileSpec::cosine(0.25)).unwrap();
        let mesh = build_channel_mesh(&p, 0.25, &ChannelMeshOptions::new(16, 12)).unwrap();
        let sp = build_space(Arc::new(mesh), &Constraints::channel()).unwrap();
        let f = solve_saddle(&sp, &SaddleTerms::default()).unwrap();
        assert!(f.u.iter().chain(&f.p).all(|v| *v == 0.0));
    }

    #[test]
    fn flat_channel_reproduces_poiseuille() {
        let p = make_profile(&ProfileSpec::flat()).unwrap();
        let mesh = build_channel_mesh(&p, 0.25, &ChannelMeshOptions::new(16, 10)).unwrap();
        let sp = build_space(Arc::new(mesh), &Constraints::channel()).unwrap();
        let load = boundary_pressure_load(&sp, 0.0, -1.0).unwrap();
        let f = solve_saddle(&sp, &SaddleTerms { load: Some(&load), ..Default::default() }).unwrap();
        for (n, x) in sp.mesh().nodes().iter().enumerate() {
            let u = f.node_velocity(n);
            assert!((u[0] - 0.5 * x[1] * (1.0 - x[1])).abs() < 1e-10);
            assert!(u[1].abs() < 1e-10);
        }
        for (k, x) in sp.mesh().corner_nodes().iter().enumerate() {
            assert!((f.p[k] + x[0]).abs() < 1e-9);
        }
    }
}
