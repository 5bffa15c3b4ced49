//! Degree-of-freedom numbering, constraints and discrete fields.

use std::sync::Arc;

use crate::geometry::{BoundaryTag, QuadMesh};

use super::element::{physical_gradients, q1, q2};
use super::DiscretizationError;

/// Prescribed boundary value as a function of position.
pub type BoundaryValue = Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>;

/// Velocity constraint on all nodes carrying `tag`.
#[derive(Clone)]
pub struct VelocityConstraint {
    pub tag: BoundaryTag,
    /// Which components are prescribed. Both components make a Dirichlet
    /// constraint, which takes precedence over single-component ones.
    pub components: [bool; 2],
    pub value: BoundaryValue,
}

impl std::fmt::Debug for VelocityConstraint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VelocityConstraint")
            .field("tag", &self.tag)
            .field("components", &self.components)
            .finish()
    }
}

/// Fixes the pressure at the corner node closest to `near`.
#[derive(Clone, Copy, Debug)]
pub struct PressurePin {
    pub near: [f64; 2],
    pub value: f64,
}

#[derive(Clone, Debug, Default)]
pub struct Constraints {
    pub velocity: Vec<VelocityConstraint>,
    pub pressure_pin: Option<PressurePin>,
}

fn zero_value() -> BoundaryValue {
    Arc::new(|_| [0.0, 0.0])
}

impl Constraints {
    /// No-slip on the rough bottom and the top; zero normal velocity on the
    /// inflow and outflow sides (pressure enters through the boundary load).
    pub fn channel() -> Self {
        let full = |tag| VelocityConstraint { tag, components: [true, true], value: zero_value() };
        let normal = |tag| VelocityConstraint { tag, components: [false, true], value: zero_value() };
        Self {
            velocity: vec![
                full(BoundaryTag::GammaEps),
                full(BoundaryTag::Gamma1),
                normal(BoundaryTag::Sigma0),
                normal(BoundaryTag::Sigma1),
            ],
            pressure_pin: None,
        }
    }

    /// Boundary-layer cell problem on a strip of height `height`, written for
    /// `Y = V + (y₂, 0) − L`, with `L` the nodal interpolant of `(y₂, 0)`:
    /// `Y = (−y₂, 0)` on the bottom curve, `Y₂ = 0` on the top, pressure
    /// fixed at the top-left corner.
    pub fn cell_problem(height: f64) -> Self {
        Self {
            velocity: vec![
                VelocityConstraint {
                    tag: BoundaryTag::GammaEps,
                    components: [true, true],
                    value: Arc::new(|x| [-x[1], 0.0]),
                },
                VelocityConstraint { tag: BoundaryTag::Gamma1, components: [false, true], value: zero_value() },
            ],
            pressure_pin: Some(PressurePin { near: [0.0, height], value: 0.0 }),
        }
    }

    /// Dirichlet data `value` on every boundary tag.
    pub fn dirichlet_everywhere(value: BoundaryValue) -> Self {
        let tags = [BoundaryTag::GammaEps, BoundaryTag::Gamma1, BoundaryTag::Sigma0, BoundaryTag::Sigma1];
        Self {
            velocity: tags
                .into_iter()
                .map(|tag| VelocityConstraint { tag, components: [true, true], value: value.clone() })
                .collect(),
            pressure_pin: None,
        }
    }

    pub fn with_pressure_pin(mut self, pin: PressurePin) -> Self {
        self.pressure_pin = Some(pin);
        self
    }
}

pub(crate) const NONE: u32 = u32::MAX;

/// Mixed biquadratic/bilinear space on a mesh.
///
/// Velocity dof `2n + c` is component `c` at velocity node `n`; pressure dof
/// `k` is the value at corner node `k`. Free unknowns are numbered velocity
/// first, then pressure.
#[derive(Debug)]
pub struct MixedSpace {
    mesh: Arc<QuadMesh>,
    vel_free: Vec<u32>,
    vel_fixed: Vec<f64>,
    pres_free: Vec<u32>,
    pres_fixed: Vec<f64>,
    n_free_vel: usize,
    n_free_pres: usize,
}

impl MixedSpace {
    pub fn mesh(&self) -> &Arc<QuadMesh> {
        &self.mesh
    }

    pub fn n_vel_nodes(&self) -> usize {
        self.mesh.nodes().len()
    }

    pub fn n_vel_dofs(&self) -> usize {
        2 * self.n_vel_nodes()
    }

    pub fn n_pres_dofs(&self) -> usize {
        self.mesh.corner_nodes().len()
    }

    pub fn n_free_vel(&self) -> usize {
        self.n_free_vel
    }

    pub fn n_free_pres(&self) -> usize {
        self.n_free_pres
    }

    pub fn n_free(&self) -> usize {
        self.n_free_vel + self.n_free_pres
    }

    /// Free index of a velocity dof, `None` if constrained.
    pub fn vel_free(&self, dof: usize) -> Option<usize> {
        let f = self.vel_free[dof];
        (f != NONE).then_some(f as usize)
    }

    /// Free index (offset by the velocity block) of a pressure dof.
    pub fn pres_free(&self, dof: usize) -> Option<usize> {
        let f = self.pres_free[dof];
        (f != NONE).then(|| self.n_free_vel + f as usize)
    }

    pub(crate) fn vel_free_raw(&self) -> &[u32] {
        &self.vel_free
    }

    pub(crate) fn pres_free_raw(&self) -> &[u32] {
        &self.pres_free
    }

    pub fn vel_fixed(&self) -> &[f64] {
        &self.vel_fixed
    }

    pub fn pres_fixed(&self) -> &[f64] {
        &self.pres_fixed
    }
}

/// Numbers the degrees of freedom of `mesh` under `constraints`.
pub fn build_space(mesh: Arc<QuadMesh>, constraints: &Constraints) -> Result<Arc<MixedSpace>, DiscretizationError> {
    let nv = mesh.nodes().len();
    // Per dof: (priority, value); priority 2 = Dirichlet, 1 = single component.
    let mut prescribed: Vec<Option<(u8, f64)>> = vec![None; 2 * nv];
    for con in &constraints.velocity {
        let priority = if con.components == [true, true] { 2 } else { 1 };
        for (n, tags) in mesh.node_tags().iter().enumerate() {
            if !tags.contains(con.tag) {
                continue;
            }
            let val = (con.value)(mesh.nodes()[n]);
            for c in 0..2 {
                if !con.components[c] {
                    continue;
                }
                let slot = &mut prescribed[2 * n + c];
                match *slot {
                    Some((p, v)) if p == priority => {
                        if (v - val[c]).abs() > 1e-12 * (1.0 + v.abs()) {
                            return Err(DiscretizationError::ConflictingConstraints {
                                node: n,
                                detail: format!("component {c}: {v} vs {}", val[c]),
                            });
                        }
                    }
                    Some((p, _)) if p > priority => {}
                    _ => *slot = Some((priority, val[c])),
                }
            }
        }
    }
    let mut vel_free = vec![NONE; 2 * nv];
    let mut vel_fixed = vec![0.0; 2 * nv];
    let mut n_free_vel = 0usize;
    for (d, p) in prescribed.iter().enumerate() {
        match p {
            Some((_, v)) => vel_fixed[d] = *v,
            None => {
                vel_free[d] = n_free_vel as u32;
                n_free_vel += 1;
            }
        }
    }
    let np = mesh.corner_nodes().len();
    let pinned = constraints.pressure_pin.map(|pin| {
        let k = mesh
            .corner_nodes()
            .iter()
            .enumerate()
            .min_by(|a, b| {
                let da = (a.1[0] - pin.near[0]).hypot(a.1[1] - pin.near[1]);
                let db = (b.1[0] - pin.near[0]).hypot(b.1[1] - pin.near[1]);
                da.total_cmp(&db)
            })
            .map(|(k, _)| k)
            .unwrap_or(0);
        (k, pin.value)
    });
    let mut pres_free = vec![NONE; np];
    let mut pres_fixed = vec![0.0; np];
    let mut n_free_pres = 0usize;
    for k in 0..np {
        match pinned {
            Some((kp, v)) if kp == k => pres_fixed[k] = v,
            _ => {
                pres_free[k] = n_free_pres as u32;
                n_free_pres += 1;
            }
        }
    }
    Ok(Arc::new(MixedSpace { mesh, vel_free, vel_fixed, pres_free, pres_fixed, n_free_vel, n_free_pres }))
}

/// Velocity and pressure evaluated at a point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Sample {
    pub u: [f64; 2],
    /// `grad[i][j] = ∂uᵢ/∂xⱼ`.
    pub grad: [[f64; 2]; 2],
    pub p: f64,
}

/// Discrete velocity/pressure pair.
#[derive(Clone, Debug)]
pub struct MixedField {
    space: Arc<MixedSpace>,
    /// Interleaved nodal velocity `[u₁, u₂]` per velocity node.
    pub u: Vec<f64>,
    /// Pressure per corner node.
    pub p: Vec<f64>,
}

impl MixedField {
    /// The field holding the prescribed values on constrained dofs and zero elsewhere.
    pub fn lifting(space: &Arc<MixedSpace>) -> Self {
        Self { space: space.clone(), u: space.vel_fixed.clone(), p: space.pres_fixed.clone() }
    }

    pub fn zeros(space: &Arc<MixedSpace>) -> Self {
        Self { space: space.clone(), u: vec![0.0; space.n_vel_dofs()], p: vec![0.0; space.n_pres_dofs()] }
    }

    /// Nodal interpolant of `f(x) = (u, p)`; constrained entries are overwritten
    /// with their prescribed values when `respect_constraints` is set.
    pub fn interpolate<F>(space: &Arc<MixedSpace>, f: F, respect_constraints: bool) -> Self
    where
        F: Fn([f64; 2]) -> ([f64; 2], f64),
    {
        let mesh = space.mesh();
        let mut u = vec![0.0; space.n_vel_dofs()];
        for (n, x) in mesh.nodes().iter().enumerate() {
            let (v, _) = f(*x);
            u[2 * n] = v[0];
            u[2 * n + 1] = v[1];
        }
        let p = mesh.corner_nodes().iter().map(|x| f(*x).1).collect();
        let mut field = Self { space: space.clone(), u, p };
        if respect_constraints {
            field.apply_constraints();
        }
        field
    }

    /// Builds a field from a vector of free unknowns.
    pub fn from_free(space: &Arc<MixedSpace>, x: &[f64]) -> Self {
        assert_eq!(x.len(), space.n_free());
        let mut field = Self::lifting(space);
        for (d, &f) in space.vel_free.iter().enumerate() {
            if f != NONE {
                field.u[d] = x[f as usize];
            }
        }
        for (k, &f) in space.pres_free.iter().enumerate() {
            if f != NONE {
                field.p[k] = x[space.n_free_vel + f as usize];
            }
        }
        field
    }

    /// Free-unknown vector of this field.
    pub fn to_free(&self) -> Vec<f64> {
        let sp = &self.space;
        let mut x = vec![0.0; sp.n_free()];
        for (d, &f) in sp.vel_free.iter().enumerate() {
            if f != NONE {
                x[f as usize] = self.u[d];
            }
        }
        for (k, &f) in sp.pres_free.iter().enumerate() {
            if f != NONE {
                x[sp.n_free_vel + f as usize] = self.p[k];
            }
        }
        x
    }

    pub fn apply_constraints(&mut self) {
        let sp = self.space.clone();
        for (d, &f) in sp.vel_free.iter().enumerate() {
            if f == NONE {
                self.u[d] = sp.vel_fixed[d];
            }
        }
        for (k, &f) in sp.pres_free.iter().enumerate() {
            if f == NONE {
                self.p[k] = sp.pres_fixed[k];
            }
        }
    }

    /// Largest deviation of a constrained entry from its prescribed value.
    pub fn constraint_violation(&self) -> f64 {
        let sp = &self.space;
        let mut worst: f64 = 0.0;
        for (d, &f) in sp.vel_free.iter().enumerate() {
            if f == NONE {
                worst = worst.max((self.u[d] - sp.vel_fixed[d]).abs());
            }
        }
        for (k, &f) in sp.pres_free.iter().enumerate() {
            if f == NONE {
                worst = worst.max((self.p[k] - sp.pres_fixed[k]).abs());
            }
        }
        worst
    }

    pub fn space(&self) -> &Arc<MixedSpace> {
        &self.space
    }

    pub fn mesh(&self) -> &QuadMesh {
        self.space.mesh()
    }

    /// Velocity node value.
    pub fn node_velocity(&self, n: usize) -> [f64; 2] {
        [self.u[2 * n], self.u[2 * n + 1]]
    }

    /// Evaluates the field inside `cell` at reference point `xi`.
    pub fn eval_ref(&self, cell: usize, xi: [f64; 2]) -> Sample {
        let mesh = self.space.mesh();
        let c = &mesh.cells()[cell];
        let mp = mesh.map(cell, xi);
        let (phi, g) = q2(xi);
        let dphi = physical_gradients(&mp, &g);
        let (psi, _) = q1(xi);
        let mut s = Sample::default();
        for a in 0..9 {
            let n = c.nodes[a] as usize;
            for i in 0..2 {
                let v = self.u[2 * n + i];
                s.u[i] += v * phi[a];
                s.grad[i][0] += v * dphi[a][0];
                s.grad[i][1] += v * dphi[a][1];
            }
        }
        for k in 0..4 {
            s.p += self.p[c.corners[k] as usize] * psi[k];
        }
        s
    }

    /// Evaluates at a physical point, `None` outside the mesh.
    pub fn eval(&self, x: [f64; 2]) -> Option<Sample> {
        let (cell, xi) = self.space.mesh().locate(x)?;
        Some(self.eval_ref(cell, xi))
    }

    /// Linear combination `a·self + b·other` on the same space.
    pub fn combine(&self, a: f64, other: &MixedField, b: f64) -> MixedField {
        assert!(Arc::ptr_eq(&self.space, &other.space), "fields live on different spaces");
        MixedField {
            space: self.space.clone(),
            u: self.u.iter().zip(&other.u).map(|(x, y)| a * x + b * y).collect(),
            p: self.p.iter().zip(&other.p).map(|(x, y)| a * x + b * y).collect(),
        }
    }
}
