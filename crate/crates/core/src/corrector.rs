//! Boundary-layer cell corrector on a truncated periodic strip.

use std::io::{self, Write};
use std::sync::Arc;

use rayon::prelude::*;

use crate::discretization::{
    build_space, lifting_load, solve_saddle, Constraints, DiscretizationError, GaussRule, MixedField, Sample, SaddleTerms,
};
use crate::geometry::{
    build_strip_mesh, BoundaryProfile, ChannelMeshOptions, GeometryError, NaturalSpline, QuadMesh, StripMeshOptions,
};
use crate::steady::MeshPolicy;

/// Values below this are treated as zero by the decay fit.
pub const DECAY_FLOOR: f64 = 1e-12;
/// Relative growth tolerated between consecutive decay-table rows.
const MONOTONE_SLACK: f64 = 0.05;
/// Roundoff level of the decay table relative to its first row.
const RELATIVE_NOISE: f64 = 1e-7;
/// Log-decrement ratio below which the decay fit treats the table as stalled.
const STAGNATION: f64 = 0.5;

#[derive(Debug, thiserror::Error)]
pub enum CellError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Discretization(#[from] DiscretizationError),
    #[error("point ({0}, {1}) lies below the rough boundary")]
    BelowBoundary(f64, f64),
    #[error("invalid truncation heights: {0}")]
    Heights(String),
    #[error("tail constant differences do not shrink: {0:?}")]
    UnderResolved(Vec<f64>),
}

#[derive(Clone, Debug)]
pub struct CellOptions {
    pub strip: StripMeshOptions,
    /// Horizontal samples per level for the decay table.
    pub samples_per_level: usize,
}

impl Default for CellOptions {
    fn default() -> Self {
        Self { strip: StripMeshOptions::default(), samples_per_level: 256 }
    }
}

impl CellOptions {
    /// Strip whose columns and near-wall rows are those of the channel meshes
    /// built by `policy`, in cell units. `None` without boundary grading.
    pub fn matched_to(policy: &MeshPolicy, profile: &BoundaryProfile) -> Option<Self> {
        let channel = ChannelMeshOptions {
            nx: policy.cells_per_period,
            ny: policy.ny,
            grading: policy.grading,
            min_cells_per_period: policy.min_cells_per_period,
        };
        let layers = channel.matched_layers(profile)?;
        let strip = StripMeshOptions { nx: policy.cells_per_period, matched: Some(layers), ..Default::default() };
        Some(Self { strip, ..Default::default() })
    }
}

/// Suprema over `y₁` at one height.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayRow {
    pub level: f64,
    pub sup_v: f64,
    pub sup_grad: f64,
    pub sup_p: f64,
}

/// `∫|V−α|ᵖ`, `∫|∇V|ᵖ`, `∫|Π|ᵖ` over the strip.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LpRow {
    pub p: u32,
    pub v: f64,
    pub grad: f64,
    pub pressure: f64,
}

impl LpRow {
    pub fn total(&self) -> f64 {
        self.v + self.grad + self.pressure
    }
}

/// `V₂(0, y₂)` along the periodic seam as a spline in `y₂`.
#[derive(Clone, Debug)]
pub struct SeamTrace {
    spline: NaturalSpline,
    top: f64,
    /// Largest gap between `−∂₂V₂` and the discrete `∂₁V₁` averaged across the seam.
    pub gradient_mismatch: f64,
}

impl SeamTrace {
    /// `(V₂, ∂₁V₁)` at height `y₂` on the seam; `∂₁V₁` is taken as `−∂₂V₂` so
    /// the side layers built from it are exactly solenoidal.
    pub fn eval(&self, y2: f64) -> [f64; 2] {
        if y2 >= self.top {
            return [0.0, 0.0];
        }
        let [v, d, _] = self.spline.eval3(y2);
        [v, -d]
    }

    /// `(V₂, ∂₁V₁, ∂₂V₂, ∂₂∂₁V₁)`.
    pub fn eval_with_derivatives(&self, y2: f64) -> [f64; 4] {
        if y2 >= self.top {
            return [0.0; 4];
        }
        let [v, d, dd] = self.spline.eval3(y2);
        [v, -d, d, -dd]
    }
}

/// Solved cell problem.
#[derive(Clone, Debug)]
pub struct CellCorrector {
    field: MixedField,
    alpha1: f64,
    height: f64,
    decay_table: Vec<DecayRow>,
    lp_table: Vec<LpRow>,
    monotone: bool,
    seam: SeamTrace,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayFit {
    /// Fitted rate `λ` in `sup|∇V| ~ e^{−λy₂}`; infinite when identically small.
    pub rate: f64,
    pub r2: f64,
    pub levels_used: usize,
    pub identically_small: bool,
}

#[derive(Clone, Debug)]
pub struct AlphaTable {
    pub rows: Vec<(f64, f64)>,
    pub extrapolated: f64,
}

/// Solves the cell problem on a strip of height `height`.
///
/// The unknown is `Z = V + (y₂, 0)`, which vanishes on the bottom curve and
/// carries unit tangential traction on the top; this is the form in which
/// the shear flow near a rough channel wall is discretized.
pub fn solve_cell(profile: &BoundaryProfile, height: f64, opts: &CellOptions) -> Result<CellCorrector, CellError> {
    let mesh = Arc::new(build_strip_mesh(profile, height, &opts.strip)?);
    let space = build_space(mesh.clone(), &Constraints::cell_problem(height))?;
    // Solve for Z − L with L the interpolant of (y₂, 0); Z itself is O(H) and
    // loses digits to rounding in the assembled residual.
    let lift = MixedField::interpolate(&space, |x| ([x[1], 0.0], 0.0), false);
    let (lift_vel, lift_pres) = lifting_load(&space, &lift.u);
    let mut load = top_traction(&mesh);
    load.iter_mut().zip(&lift_vel).for_each(|(f, l)| *f += l);
    let terms = SaddleTerms { load: Some(&load), pressure_load: Some(&lift_pres), ..Default::default() };
    let mut field = solve_saddle(&space, &terms)?;
    let alpha1 = top_average(&field, height);
    field.u.iter_mut().zip(&lift.u).for_each(|(z, l)| *z += l);
    let decay_table = decay_table(&field, alpha1, height, opts.samples_per_level);
    let monotone = is_monotone(&decay_table);
    if !monotone {
        log::warn!("cell corrector decay table not monotone for {}; mesh may be too coarse", profile.descriptor());
    }
    let lp_table = vec![lp_row(&field, alpha1, 1), lp_row(&field, alpha1, 2)];
    let seam = seam_trace(&field, height);
    log::debug!("cell problem H={height}: alpha1={alpha1:.12e}");
    Ok(CellCorrector { field, alpha1, height, decay_table, lp_table, monotone, seam })
}

/// `∫_{y₂=H} φ₁` as a full velocity-dof vector.
fn top_traction(mesh: &QuadMesh) -> Vec<f64> {
    let g = GaussRule::new(3);
    let mut f = vec![0.0; 2 * mesh.nodes().len()];
    let top = mesh.ny() - 1;
    for col in 0..mesh.nx() {
        let cell = &mesh.cells()[top * mesh.nx() + col];
        for (t, w) in g.points().iter().zip(g.weights()) {
            let (phi, _) = crate::discretization::element::q2([*t, 1.0]);
            for a in 0..9 {
                f[2 * cell.nodes[a] as usize] += w * mesh.cell_width() * phi[a];
            }
        }
    }
    f
}

/// `V` from a sample of `Z` at height `y₂`.
fn to_v(mut s: Sample, y2: f64) -> Sample {
    s.u[0] -= y2;
    s.grad[0][1] -= 1.0;
    s
}

/// Mean of `u₁` over the top edge at `y₂ = height`.
fn top_average(field: &MixedField, height: f64) -> f64 {
    let mesh = field.mesh();
    let g = GaussRule::new(3);
    let top = mesh.ny() - 1;
    let mut sum = 0.0;
    for col in 0..mesh.nx() {
        let cell = top * mesh.nx() + col;
        debug_assert!((mesh.map(cell, [0.5, 1.0]).x[1] - height).abs() < 1e-12);
        for (xi, w) in g.points().iter().zip(g.weights()) {
            sum += w * mesh.cell_width() * field.eval_ref(cell, [*xi, 1.0]).u[0];
        }
    }
    sum
}

fn decay_table(field: &MixedField, alpha1: f64, height: f64, samples: usize) -> Vec<DecayRow> {
    let top = height.floor() as usize;
    let top = if (top as f64) < height { top } else { top - 1 };
    (1..=top)
        .map(|level| {
            let y2 = level as f64;
            let mut row = DecayRow { level: y2, sup_v: 0.0, sup_grad: 0.0, sup_p: 0.0 };
            for j in 0..samples {
                let y1 = (j as f64 + 0.5) / samples as f64;
                let s = to_v(field.eval([y1, y2]).expect("level inside strip"), y2);
                row.sup_v = row.sup_v.max((s.u[0] - alpha1).hypot(s.u[1]));
                row.sup_grad = row.sup_grad.max(frobenius(&s.grad));
                row.sup_p = row.sup_p.max(s.p.abs());
            }
            row
        })
        .collect()
}

fn frobenius(g: &[[f64; 2]; 2]) -> f64 {
    (g[0][0] * g[0][0] + g[0][1] * g[0][1] + g[1][0] * g[1][0] + g[1][1] * g[1][1]).sqrt()
}

fn is_monotone(rows: &[DecayRow]) -> bool {
    let Some(first) = rows.first() else { return true };
    let ok = |a: f64, b: f64, top: f64| b <= (1.0 + MONOTONE_SLACK) * a + DECAY_FLOOR.max(RELATIVE_NOISE * top);
    rows.windows(2).all(|w| {
        ok(w[0].sup_v, w[1].sup_v, first.sup_v)
            && ok(w[0].sup_grad, w[1].sup_grad, first.sup_grad)
            && ok(w[0].sup_p, w[1].sup_p, first.sup_p)
    })
}

fn lp_row(field: &MixedField, alpha1: f64, p: u32) -> LpRow {
    let mesh = field.mesh();
    let g = GaussRule::new(3);
    let parts: Vec<[f64; 3]> = (0..mesh.cells().len())
        .into_par_iter()
        .map(|c| {
            let mut acc = [0.0; 3];
            for (xi, w) in g.tensor_points() {
                let mp = mesh.map(c, xi);
                let dx = w * mp.det;
                let s = to_v(field.eval_ref(c, xi), mp.x[1]);
                acc[0] += dx * (s.u[0] - alpha1).hypot(s.u[1]).powi(p as i32);
                acc[1] += dx * frobenius(&s.grad).powi(p as i32);
                acc[2] += dx * s.p.abs().powi(p as i32);
            }
            acc
        })
        .collect();
    let mut sum = [0.0; 3];
    for a in parts {
        for k in 0..3 {
            sum[k] += a[k];
        }
    }
    LpRow { p, v: sum[0], grad: sum[1], pressure: sum[2] }
}

fn seam_trace(field: &MixedField, height: f64) -> SeamTrace {
    let mesh = field.mesh();
    let nodes = mesh.nodes();
    let mut knots = Vec::new();
    let mut values = Vec::new();
    let mut last = u32::MAX;
    for j in 0..=2 * mesh.ny() {
        let id = mesh.lattice_node(0, j);
        // collapsed rows repeat the same node
        if id == last {
            continue;
        }
        last = id;
        let n = id as usize;
        knots.push(nodes[n][1]);
        values.push(field.u[2 * n + 1]);
    }
    let spline = NaturalSpline::new(knots, values);
    let mut seam = SeamTrace { spline, top: height, gradient_mismatch: 0.0 };
    seam.gradient_mismatch = seam_mismatch(field, &seam);
    seam
}

/// Compares `−∂₂V₂` from the trace with the discrete `∂₁V₁`, averaged over the
/// cells on both sides of the seam, at the cell mid-heights.
fn seam_mismatch(field: &MixedField, seam: &SeamTrace) -> f64 {
    let mesh = field.mesh();
    let nx = mesh.nx();
    let mut worst: f64 = 0.0;
    for row in 0..mesh.ny() {
        let left = field.eval_ref(row * nx, [0.0, 0.5]);
        let right = field.eval_ref(row * nx + nx - 1, [1.0, 0.5]);
        let y2 = mesh.map(row * nx, [0.0, 0.5]).x[1];
        let discrete = 0.5 * (left.grad[0][0] + right.grad[0][0]);
        worst = worst.max((discrete - seam.eval(y2)[1]).abs());
    }
    worst
}

impl CellCorrector {
    pub fn alpha1(&self) -> f64 {
        self.alpha1
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    /// The discrete `Z = V + (y₂, 0)`.
    pub fn field(&self) -> &MixedField {
        &self.field
    }

    /// `V` at velocity node `n` of the strip mesh.
    pub fn node_velocity(&self, n: usize) -> [f64; 2] {
        let z = self.field.node_velocity(n);
        [z[0] - self.mesh().nodes()[n][1], z[1]]
    }

    pub fn mesh(&self) -> &QuadMesh {
        self.field.mesh()
    }

    pub fn profile(&self) -> &BoundaryProfile {
        self.field.mesh().profile()
    }

    pub fn decay_table(&self) -> &[DecayRow] {
        &self.decay_table
    }

    pub fn lp_table(&self) -> &[LpRow] {
        &self.lp_table
    }

    /// Whether the decay table is nonincreasing within tolerance.
    pub fn is_monotone(&self) -> bool {
        self.monotone
    }

    pub fn seam(&self) -> &SeamTrace {
        &self.seam
    }

    /// Velocity, `y`-gradient and pressure at cell coordinates `y`; `y₁` is
    /// reduced modulo 1 and the tail value `(α₁, 0)` is returned for `y₂ ≥ H`.
    pub fn eval_cell(&self, y: [f64; 2]) -> Result<Sample, CellError> {
        if y[1] >= self.height {
            return Ok(Sample { u: [self.alpha1, 0.0], ..Sample::default() });
        }
        let y1 = y[0].rem_euclid(1.0);
        let floor = self.profile().eval(y1);
        if y[1] < floor - 1e-9 {
            return Err(CellError::BelowBoundary(y[0], y[1]));
        }
        let y2 = y[1].max(floor);
        let z = self.field.eval([y1, y2]).ok_or(CellError::BelowBoundary(y[0], y[1]))?;
        Ok(to_v(z, y2))
    }

    /// `V(x/ε)` with its gradient with respect to `y` (multiply by `1/ε` for `∇ₓ`).
    pub fn evaluate_scaled(&self, x: [f64; 2], epsilon: f64) -> Result<Sample, CellError> {
        self.eval_cell([x[0] / epsilon, x[1] / epsilon])
    }

    /// Summary: descriptor, H, α₁, decay rate, then the decay table.
    pub fn write_summary<W: Write>(&self, mut out: W) -> io::Result<()> {
        let fit = decay_fit(self);
        writeln!(out, "# profile: {}", self.profile().descriptor())?;
        writeln!(out, "# H: {:.16e}", self.height)?;
        writeln!(out, "# alpha1: {:.16e}", self.alpha1)?;
        writeln!(out, "# lambda_dec: {:.16e}", fit.rate)?;
        writeln!(out, "# decay_r2: {:.16e}", fit.r2)?;
        writeln!(out, "# monotone: {}", self.monotone)?;
        for r in &self.lp_table {
            writeln!(out, "# lp{}: v={:.16e} grad={:.16e} p={:.16e}", r.p, r.v, r.grad, r.pressure)?;
        }
        writeln!(out, "level,sup_v_minus_alpha,sup_grad_v,sup_pressure")?;
        for r in &self.decay_table {
            writeln!(out, "{:.16e},{:.16e},{:.16e},{:.16e}", r.level, r.sup_v, r.sup_grad, r.sup_p)?;
        }
        Ok(())
    }
}

/// Least-squares exponential rate of `sup|∇V|` over the levels above the
/// floor. The fit stops where roundoff takes over: at the first level that
/// does not decrease, or whose log-decrement falls below half of the
/// previous one.
pub fn decay_fit(corr: &CellCorrector) -> DecayFit {
    let mut pts: Vec<(f64, f64)> = Vec::new();
    let mut last_drop = f64::INFINITY;
    for r in &corr.decay_table {
        if r.sup_grad <= DECAY_FLOOR {
            break;
        }
        let y = r.sup_grad.ln();
        if let Some(p) = pts.last() {
            let drop = p.1 - y;
            if drop <= 0.0 || (last_drop.is_finite() && drop < STAGNATION * last_drop) {
                break;
            }
            last_drop = drop;
        }
        pts.push((r.level, y));
    }
    if pts.len() < 2 {
        return DecayFit { rate: f64::INFINITY, r2: 1.0, levels_used: pts.len(), identically_small: true };
    }
    let (slope, _, r2) = least_squares(&pts);
    DecayFit { rate: (-slope).max(0.0), r2, levels_used: pts.len(), identically_small: false }
}

/// Slope, intercept and coefficient of determination of a line fit.
pub(crate) fn least_squares(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    (slope, intercept, r2)
}

/// Differences below this are roundoff and exempt from the shrinking check.
const ALPHA_FLOOR: f64 = 1e-12;

/// `α₁` for each truncation height, checking that the changes shrink.
pub fn alpha_stability(profile: &BoundaryProfile, heights: &[f64], opts: &CellOptions) -> Result<AlphaTable, CellError> {
    if heights.len() < 2 {
        return Err(CellError::Heights("need at least two heights".into()));
    }
    if heights.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(CellError::Heights(format!("{heights:?} not increasing")));
    }
    let alphas = heights
        .par_iter()
        .map(|&h| solve_cell(profile, h, opts).map(|c| c.alpha1))
        .collect::<Result<Vec<_>, _>>()?;
    let diffs: Vec<f64> = alphas.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    if diffs.windows(2).any(|d| d[1] >= d[0] && d[1] > ALPHA_FLOOR) {
        return Err(CellError::UnderResolved(diffs));
    }
    let n = alphas.len();
    let last = alphas[n - 1];
    let extrapolated = if n >= 3 && diffs[n - 2] > ALPHA_FLOOR {
        let (a, b, c) = (alphas[n - 3], alphas[n - 2], last);
        let denom = c - 2.0 * b + a;
        if denom.abs() > ALPHA_FLOOR {
            c - (c - b).powi(2) / denom
        } else {
            last
        }
    } else {
        last
    };
    Ok(AlphaTable { rows: heights.iter().copied().zip(alphas).collect(), extrapolated })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_profile, ProfileSpec};

    fn small() -> CellOptions {
        CellOptions {
            strip: StripMeshOptions { nx: 16, near_layers: 10, far_max_height: 0.4, ..Default::default() },
            samples_per_level: 32,
        }
    }

    #[test]
    fn flat_profile_gives_zero() {
        let flat = make_profile(&ProfileSpec::flat()).unwrap();
        let c = solve_cell(&flat, 4.0, &small()).unwrap();
        assert!(c.alpha1().abs() < 1e-10);
        assert!((0..c.mesh().nodes().len()).all(|n| c.node_velocity(n).iter().all(|v| v.abs() < 1e-10)));
        assert!(decay_fit(&c).identically_small);
    }

    #[test]
    fn shifted_flat_is_constant() {
        let p = make_profile(&ProfileSpec::shifted_flat(0.5)).unwrap();
        let c = solve_cell(&p, 4.0, &small()).unwrap();
        assert!((c.alpha1() - 0.5).abs() < 1e-8);
        for n in 0..c.mesh().nodes().len() {
            let v = c.node_velocity(n);
            assert!((v[0] - 0.5).abs() < 1e-8 && v[1].abs() < 1e-8);
        }
    }

    #[test]
    fn cosine_tail_and_seam() {
        let p = make_profile(&ProfileSpec::cosine(0.25)).unwrap();
        let c = solve_cell(&p, 5.0, &small()).unwrap();
        assert!(c.alpha1() > 0.0 && c.alpha1() < 0.5);
        assert!(c.is_monotone());
        let fit = decay_fit(&c);
        assert!(fit.rate > 0.5, "{fit:?}");
        // tail convention and periodic extension
        let eps = 0.125;
        assert_eq!(c.evaluate_scaled([0.3, 5.0 * eps], eps).unwrap().u, [c.alpha1(), 0.0]);
        let a = c.evaluate_scaled([0.03, 0.07], eps).unwrap();
        let b = c.evaluate_scaled([0.03 + 3.0 * eps, 0.07], eps).unwrap();
        assert!((a.u[0] - b.u[0]).abs() < 1e-12 && (a.u[1] - b.u[1]).abs() < 1e-12);
        assert!(matches!(c.eval_cell([0.5, -0.6]), Err(CellError::BelowBoundary(..))));
        assert_eq!(c.seam().eval(6.0), [0.0, 0.0]);
        assert!(c.seam().gradient_mismatch < 0.05, "{}", c.seam().gradient_mismatch);
    }

    #[test]
    fn boundary_values_are_reproduced() {
        let p = make_profile(&ProfileSpec::cosine(0.25)).unwrap();
        let c = solve_cell(&p, 4.0, &small()).unwrap();
        for y1 in [0.1, 0.37, 0.5, 0.81] {
            let y2 = p.eval(y1);
            let s = c.eval_cell([y1, y2]).unwrap();
            assert!((s.u[0] + y2).abs() < 1e-6 && s.u[1].abs() < 1e-6);
        }
    }

    #[test]
    fn alpha_stability_checks_inputs() {
        let p = make_profile(&ProfileSpec::shifted_flat(0.5)).unwrap();
        assert!(matches!(alpha_stability(&p, &[4.0], &small()), Err(CellError::Heights(_))));
        assert!(matches!(alpha_stability(&p, &[6.0, 4.0], &small()), Err(CellError::Heights(_))));
        let t = alpha_stability(&p, &[4.0, 8.0], &small()).unwrap();
        assert!((t.rows[0].1 - 0.5).abs() < 1e-8 && (t.rows[1].1 - 0.5).abs() < 1e-8);
        assert!((t.extrapolated - 0.5).abs() < 1e-8);
    }

    #[test]
    fn least_squares_exact_line() {
        let (s, i, r2) = least_squares(&[(0.0, 1.0), (1.0, 3.0), (2.0, 5.0)]);
        assert!((s - 2.0).abs() < 1e-14 && (i - 1.0).abs() < 1e-14 && (r2 - 1.0).abs() < 1e-14);
    }
}
