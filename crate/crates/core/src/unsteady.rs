//! Implicit Euler integration of the time-dependent problem and decay of the
//! perturbation from the steady state.

use std::io::{self, Write};
use std::sync::Arc;

use crate::analysis::{norm, Difference, NormKind, NormMatrices, NormRegion, NormRequest};
use crate::corrector::least_squares;
use crate::discretization::{
    apply_componentwise, assemble, boundary_pressure_load, convection_load, CsrMatrix, DiscretizationError, MixedField,
    MixedSpace, SaddleFactor, SaddleOperator, SaddleTerms,
};
use crate::fields::{effective, poiseuille, FieldError};
use crate::steady::{solve_steady, FlowCase, FlowMode, MeshPolicy, SolverOptions, SteadyError, SteadySolution};

/// Below this velocity norm inner updates are measured in absolute terms.
const SCALE_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitialKind {
    /// The steady solution itself.
    SteadyExact,
    /// Poiseuille flow, zero below the interface.
    Poiseuille,
    /// Poiseuille flow plus `a·curl ψ`, `ψ = aR(1−s²)⁴` with `s = |x−c|/R`.
    PoiseuilleVortex { amplitude: f64, center: [f64; 2], radius: f64 },
}

impl InitialKind {
    pub fn name(&self) -> &'static str {
        match self {
            InitialKind::SteadyExact => "steady_exact",
            InitialKind::Poiseuille => "poiseuille",
            InitialKind::PoiseuilleVortex { .. } => "poiseuille_plus_vortex",
        }
    }
}

#[derive(Clone, Debug)]
pub struct UnsteadyConfig {
    pub case: FlowCase,
    pub initial: InitialKind,
    pub dt: f64,
    pub t_end: f64,
    /// Margin in the smallness threshold `(1 − δ/2)/G_N²`.
    pub delta: f64,
    /// Gagliardo–Nirenberg constant, used only for the smallness flag.
    pub g_n: f64,
    pub mesh: MeshPolicy,
    pub solver: SolverOptions,
    /// Integration stops once `E` falls below this value (after one step).
    pub stop_below: Option<f64>,
    /// Tail constant for the distance to the effective flow; skipped if `None`.
    pub alpha1: Option<f64>,
}

impl UnsteadyConfig {
    pub fn new(case: FlowCase, initial: InitialKind) -> Self {
        Self {
            case,
            initial,
            dt: 0.01,
            t_end: 30.0,
            delta: 0.5,
            g_n: 2.0,
            mesh: MeshPolicy::default(),
            solver: SolverOptions::default(),
            stop_below: Some(1e-20),
            alpha1: None,
        }
    }

    pub fn smallness_threshold(&self) -> f64 {
        (1.0 - 0.5 * self.delta) / (self.g_n * self.g_n)
    }

    pub fn validate(&self) -> Result<(), UnsteadyError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(UnsteadyError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(UnsteadyError::Config(format!("t_end must be non-negative, got {}", self.t_end)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(UnsteadyError::Config(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.g_n > 0.0) {
            return Err(UnsteadyError::Config(format!("G_N must be positive, got {}", self.g_n)));
        }
        if let InitialKind::PoiseuilleVortex { center, radius, amplitude } = self.initial {
            let inside = radius > 0.0
                && center[0] - radius > 0.0
                && center[0] + radius < 1.0
                && center[1] - radius > 0.0
                && center[1] + radius < 1.0;
            if !inside {
                return Err(UnsteadyError::VortexSupport { center, radius });
            }
            if !amplitude.is_finite() {
                return Err(UnsteadyError::Config("vortex amplitude must be finite".into()));
            }
        }
        self.case.validate()?;
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum UnsteadyError {
    #[error("invalid unsteady configuration: {0}")]
    Config(String),
    #[error("vortex of radius {radius} at {center:?} is not strictly inside the unit square")]
    VortexSupport { center: [f64; 2], radius: f64 },
    #[error("inner Picard iteration failed at t = {time} after halving dt (last update {last:.3e})")]
    NotConverged { time: f64, last: f64 },
    #[error(transparent)]
    Steady(#[from] SteadyError),
    #[error(transparent)]
    Discretization(#[from] DiscretizationError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Analysis(#[from] crate::analysis::AnalysisError),
}

/// Velocity of `curl ψ` for the compactly supported bump.
fn vortex_velocity(x: [f64; 2], amplitude: f64, center: [f64; 2], radius: f64) -> [f64; 2] {
    let d = [x[0] - center[0], x[1] - center[1]];
    let s2 = (d[0] * d[0] + d[1] * d[1]) / (radius * radius);
    if s2 >= 1.0 {
        return [0.0; 2];
    }
    let f = 8.0 * amplitude * (1.0 - s2).powi(3) / radius;
    [-f * d[1], f * d[0]]
}

/// Initial velocity on the steady solution's space.
pub fn make_initial(cfg: &UnsteadyConfig, steady: &SteadySolution) -> Result<MixedField, UnsteadyError> {
    cfg.validate()?;
    let space = steady.space();
    let base = poiseuille(cfg.case.p0, cfg.case.p1);
    let pois = MixedField::interpolate(space, |x| (base.eval(x).u, 0.0), false);
    match cfg.initial {
        InitialKind::SteadyExact => Ok(steady.field.clone()),
        InitialKind::Poiseuille => Ok(pois),
        InitialKind::PoiseuilleVortex { amplitude, center, radius } => {
            let raw = MixedField::interpolate(space, |x| (vortex_velocity(x, amplitude, center, radius), 0.0), true);
            // Discrete L² projection onto weakly divergence-free fields.
            let projected = crate::discretization::solve_saddle(
                space,
                &SaddleTerms { viscosity: 0.0, mass_coeff: 1.0, mass_rhs: Some(&raw.u), ..Default::default() },
            )?;
            let mut v = pois.combine(1.0, &projected, 1.0);
            v.p.iter_mut().for_each(|p| *p = 0.0);
            Ok(v)
        }
    }
}

/// Implicit Euler stepper; the matrix `M/dt + A` is factored once and
/// convection is resolved by an inner fixed-point iteration.
pub struct Stepper {
    op: SaddleOperator,
    factor: SaddleFactor,
    mass: CsrMatrix,
    load: Vec<f64>,
    /// Right-hand side without the previous-step mass term.
    base_rhs: Vec<f64>,
    mode: FlowMode,
    dt: f64,
    halved: bool,
    tol: f64,
    max_iters: usize,
    /// Inner iterations of the last step.
    pub last_iterations: usize,
}

impl Stepper {
    pub fn new(space: &Arc<MixedSpace>, case: &FlowCase, dt: f64, solver: &SolverOptions) -> Result<Self, UnsteadyError> {
        let load = boundary_pressure_load(space, case.p0, case.p1)?;
        let mass = assemble(space, None, true)?.mass.expect("mass requested");
        let (op, factor, base_rhs) = Self::factor(space, dt, &load)?;
        Ok(Self {
            op,
            factor,
            mass,
            load,
            base_rhs,
            mode: case.mode,
            dt,
            halved: false,
            tol: solver.tol,
            max_iters: solver.max_iters,
            last_iterations: 0,
        })
    }

    fn factor(
        space: &Arc<MixedSpace>,
        dt: f64,
        load: &[f64],
    ) -> Result<(SaddleOperator, SaddleFactor, Vec<f64>), UnsteadyError> {
        let mut op = SaddleOperator::new(space);
        let sys = op.assemble(&SaddleTerms { mass_coeff: 1.0 / dt, load: Some(load), ..Default::default() })?;
        let factor = op.factorize(sys.values)?;
        Ok((op, factor, sys.rhs))
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Solves with `M u_prev / dt − extra` added to the base load.
    fn solve_with(&self, prev: &MixedField, extra: Option<&[f64]>) -> Result<MixedField, UnsteadyError> {
        let space = self.op.space();
        let mu = apply_componentwise(&self.mass, &prev.u);
        let mut rhs = self.base_rhs.clone();
        for (d, m) in mu.iter().enumerate() {
            if let Some(f) = space.vel_free(d) {
                rhs[f] += m / self.dt - extra.map_or(0.0, |e| e[d]);
            }
        }
        let x = self.op.solve(&self.factor, &rhs)?;
        Ok(MixedField::from_free(space, &x))
    }

    /// One step without retry; `Err(last update)` when the inner iteration stalls.
    fn try_step(&mut self, prev: &MixedField) -> Result<Result<MixedField, f64>, UnsteadyError> {
        if self.mode == FlowMode::Stokes {
            self.last_iterations = 1;
            return Ok(Ok(self.solve_with(prev, None)?));
        }
        let space = self.op.space().clone();
        let mut iterate = prev.clone();
        let mut last = f64::INFINITY;
        for it in 1..=self.max_iters {
            let nw = convection_load(&space, &iterate.u);
            let next = self.solve_with(prev, Some(&nw))?;
            let diff = next.u.iter().zip(&iterate.u).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let scale = next.u.iter().map(|a| a * a).sum::<f64>().sqrt();
            let rel = if scale > SCALE_FLOOR { diff / scale } else { diff };
            iterate = next;
            if rel <= self.tol {
                self.last_iterations = it;
                return Ok(Ok(iterate));
            }
            if !rel.is_finite() {
                return Ok(Err(rel));
            }
            last = rel;
        }
        Ok(Err(last))
    }

    /// Advances by `dt`; on inner non-convergence halves `dt` once and retries.
    pub fn step(&mut self, prev: &MixedField, time: f64) -> Result<MixedField, UnsteadyError> {
        match self.try_step(prev)? {
            Ok(f) => Ok(f),
            Err(last) if self.halved => Err(UnsteadyError::NotConverged { time, last }),
            Err(last) => {
                log::warn!("inner iteration stalled at t = {time} (update {last:.3e}); halving dt");
                self.dt *= 0.5;
                self.halved = true;
                let (op, factor, rhs) = Self::factor(self.op.space(), self.dt, &self.load)?;
                self.op = op;
                self.factor = factor;
                self.base_rhs = rhs;
                self.try_step(prev)?.map_err(|last| UnsteadyError::NotConverged { time, last })
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    /// `‖u − u_S‖²` over the whole domain.
    pub energy: f64,
    /// `‖∇(u − u_S)‖²`.
    pub dissipation: f64,
    /// `‖u − u_S‖ ≤ (1 − δ/2)/G_N²`.
    pub small: bool,
    /// `‖u − U₀‖²` over the whole domain, Poiseuille extended by zero.
    pub dist_poiseuille: f64,
    /// `‖u − U_eff‖²` over the smooth channel.
    pub dist_effective: Option<f64>,
}

/// `λ` in `E ≈ C e^{−λt}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateFit {
    pub rate: f64,
    pub r2: f64,
    pub points: usize,
}

#[derive(Clone, Debug)]
pub struct DecayTrace {
    pub rows: Vec<TraceRow>,
    pub fit: Option<RateFit>,
    pub threshold: f64,
    /// Final step size (halved once if the inner iteration stalled).
    pub dt: f64,
    pub stopped_early: bool,
    pub steady: Arc<SteadySolution>,
    pub final_field: MixedField,
}

impl DecayTrace {
    /// `E` never grows after the first step, up to roundoff.
    pub fn is_monotone(&self) -> bool {
        self.rows.windows(2).skip(1).all(|w| w[1].energy <= w[0].energy * (1.0 + 1e-12) + 1e-30)
    }

    pub fn initial_energy(&self) -> f64 {
        self.rows.first().map_or(0.0, |r| r.energy)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,E,D,smallness_flag,dist_poiseuille,dist_effective")?;
        for r in &self.rows {
            let eff = r.dist_effective.map(|v| format!("{v:.16e}")).unwrap_or_default();
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{},{:.16e},{eff}",
                r.t, r.energy, r.dissipation, r.small as u8, r.dist_poiseuille
            )?;
        }
        Ok(())
    }
}

/// Least-squares rate of `log E` over the rows where `E` is below half its
/// initial value and above `floor`.
pub fn fit_decay_rate(rows: &[TraceRow], floor: f64) -> Option<RateFit> {
    let e0 = rows.first()?.energy;
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.energy < 0.5 * e0 && r.energy > floor)
        .map(|r| (r.t, r.energy.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let (slope, _, r2) = least_squares(&pts);
    Some(RateFit { rate: -slope, r2, points: pts.len() })
}

struct Diagnostics {
    gram: NormMatrices,
    steady: Arc<SteadySolution>,
    poiseuille: MixedField,
    effective: Option<crate::fields::AnalyticField>,
    threshold: f64,
}

impl Diagnostics {
    fn row(&self, t: f64, u: &MixedField) -> Result<TraceRow, UnsteadyError> {
        let d: Vec<f64> = u.u.iter().zip(&self.steady.field.u).map(|(a, b)| a - b).collect();
        let energy = self.gram.l2_squared(&d);
        let dissipation = self.gram.h1_semi_squared(&d);
        let dp: Vec<f64> = u.u.iter().zip(&self.poiseuille.u).map(|(a, b)| a - b).collect();
        let dist_effective = match &self.effective {
            Some(eff) => {
                let diff = Difference(u, eff);
                Some(norm(u.mesh(), &diff, NormRequest::new(NormRegion::Omega0, NormKind::L2))?.powi(2))
            }
            None => None,
        };
        Ok(TraceRow {
            t,
            energy,
            dissipation,
            small: energy.sqrt() <= self.threshold,
            dist_poiseuille: self.gram.l2_squared(&dp),
            dist_effective,
        })
    }
}

/// Solves the steady problem, then integrates from the configured initial
/// data and records the decay of `E(t)`.
pub fn run_decay(cfg: &UnsteadyConfig) -> Result<DecayTrace, UnsteadyError> {
    cfg.validate()?;
    let steady = Arc::new(solve_steady(&cfg.case, &cfg.mesh, &cfg.solver)?);
    run_decay_from(cfg, steady)
}

/// As [`run_decay`] with a precomputed steady solution.
pub fn run_decay_from(cfg: &UnsteadyConfig, steady: Arc<SteadySolution>) -> Result<DecayTrace, UnsteadyError> {
    cfg.validate()?;
    let space = steady.space().clone();
    let base = poiseuille(cfg.case.p0, cfg.case.p1);
    let diag = Diagnostics {
        gram: NormMatrices::new(&space)?,
        poiseuille: MixedField::interpolate(&space, |x| (base.eval(x).u, 0.0), false),
        effective: cfg.alpha1.map(|a| effective(cfg.case.p0, cfg.case.p1, cfg.case.epsilon, a)).transpose()?,
        steady: steady.clone(),
        threshold: cfg.smallness_threshold(),
    };
    let mut u = make_initial(cfg, &steady)?;
    let mut rows = vec![diag.row(0.0, &u)?];
    if !rows[0].small {
        log::warn!(
            "initial perturbation {:.3e} exceeds the smallness threshold {:.3e}",
            rows[0].energy.sqrt(),
            diag.threshold
        );
    }
    let mut stepper = Stepper::new(&space, &cfg.case, cfg.dt, &cfg.solver)?;
    let mut t = 0.0;
    let mut stopped_early = false;
    while t < cfg.t_end - 1e-12 * cfg.t_end.max(1.0) {
        let next = stepper.step(&u, t)?;
        t += stepper.dt();
        u = next;
        let row = diag.row(t, &u)?;
        rows.push(row);
        if cfg.stop_below.is_some_and(|floor| row.energy < floor) {
            stopped_early = true;
            break;
        }
    }
    let floor = cfg.stop_below.unwrap_or(0.0);
    Ok(DecayTrace {
        fit: fit_decay_rate(&rows, floor),
        rows,
        threshold: diag.threshold,
        dt: stepper.dt(),
        stopped_early,
        steady,
        final_field: u,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::divergence_metric;
    use crate::geometry::{make_profile, ProfileSpec};

    fn small_policy() -> MeshPolicy {
        MeshPolicy { cells_per_period: 4, ny: 12, ..Default::default() }
    }

    fn case(spec: ProfileSpec, p1: f64, mode: FlowMode) -> FlowCase {
        FlowCase::new(make_profile(&spec).unwrap(), 0.25, 0.0, p1, mode)
    }

    fn vortex(a: f64) -> InitialKind {
        InitialKind::PoiseuilleVortex { amplitude: a, center: [0.5, 0.5], radius: 0.3 }
    }

    #[test]
    fn cached_rhs_matches_full_assembly() {
        let c = case(ProfileSpec::cosine(0.25), -1.0, FlowMode::Stokes);
        let steady = solve_steady(&c, &small_policy(), &SolverOptions::default()).unwrap();
        let sp = steady.space();
        let st = Stepper::new(sp, &c, 0.1, &SolverOptions::default()).unwrap();
        let prev = MixedField::interpolate(sp, |x| ([x[1] * (1.0 - x[1]), 0.1 * x[0]], 0.0), true);
        let fast = st.solve_with(&prev, None).unwrap();
        let load = boundary_pressure_load(sp, 0.0, -1.0).unwrap();
        let terms = SaddleTerms { mass_coeff: 10.0, mass_rhs: Some(&prev.u), load: Some(&load), ..Default::default() };
        let slow = crate::discretization::solve_saddle(sp, &terms).unwrap();
        assert!(fast.u.iter().zip(&slow.u).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn vortex_support_is_checked() {
        let mut cfg = UnsteadyConfig::new(case(ProfileSpec::flat(), -1.0, FlowMode::Stokes), vortex(0.1));
        cfg.initial = InitialKind::PoiseuilleVortex { amplitude: 0.1, center: [0.5, 0.2], radius: 0.3 };
        assert!(matches!(cfg.validate(), Err(UnsteadyError::VortexSupport { .. })));
        cfg.initial = vortex(0.1);
        cfg.dt = 0.0;
        assert!(matches!(cfg.validate(), Err(UnsteadyError::Config(_))));
    }

    #[test]
    fn projected_vortex_is_divergence_free() {
        let c = case(ProfileSpec::cosine(0.25), -1.0, FlowMode::Stokes);
        let steady = solve_steady(&c, &small_policy(), &SolverOptions::default()).unwrap();
        let cfg = UnsteadyConfig { mesh: small_policy(), ..UnsteadyConfig::new(c, vortex(0.1)) };
        let u0 = make_initial(&cfg, &steady).unwrap();
        assert!(divergence_metric(&u0) < 1e-10);
        assert!(u0.constraint_violation() < 1e-14);
    }

    #[test]
    fn steady_state_is_a_fixed_point() {
        for mode in [FlowMode::Stokes, FlowMode::NavierStokes] {
            let c = case(ProfileSpec::cosine(0.25), -1.0, mode);
            let mut cfg = UnsteadyConfig::new(c, InitialKind::SteadyExact);
            cfg.mesh = small_policy();
            cfg.t_end = 0.05;
            cfg.stop_below = None;
            let tr = run_decay(&cfg).unwrap();
            assert_eq!(tr.rows.len(), 6);
            assert!(tr.rows.iter().all(|r| r.energy <= 1e-16), "{:?}", tr.rows);
            assert!(tr.fit.is_none());
        }
    }

    #[test]
    fn flat_poiseuille_is_stationary() {
        let c = case(ProfileSpec::flat(), -1.0, FlowMode::NavierStokes);
        let steady = Arc::new(solve_steady(&c, &small_policy(), &SolverOptions::default()).unwrap());
        let cfg = UnsteadyConfig::new(c.clone(), InitialKind::Poiseuille);
        let u0 = make_initial(&cfg, &steady).unwrap();
        let mut st = Stepper::new(steady.space(), &c, 0.01, &SolverOptions::default()).unwrap();
        let u1 = st.step(&u0, 0.0).unwrap();
        let d = u1.u.iter().zip(&u0.u).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(d < 1e-10, "{d}");
    }

    #[test]
    fn stokes_energy_decreases_without_pressure_drop() {
        let c = case(ProfileSpec::cosine(0.25), 0.0, FlowMode::Stokes);
        let mut cfg = UnsteadyConfig::new(c, vortex(0.1));
        cfg.mesh = small_policy();
        cfg.t_end = 0.5;
        cfg.dt = 0.05;
        let tr = run_decay(&cfg).unwrap();
        assert!(tr.rows.windows(2).all(|w| w[1].energy < w[0].energy));
        assert!(tr.fit.unwrap().rate > 0.0);
        assert!(tr.rows[0].small);
    }

    #[test]
    fn navier_stokes_rate_close_to_stokes() {
        let mut rates = Vec::new();
        for mode in [FlowMode::Stokes, FlowMode::NavierStokes] {
            let c = case(ProfileSpec::cosine(0.25), -1.0, mode);
            let mut cfg = UnsteadyConfig::new(c, vortex(0.05));
            cfg.mesh = small_policy();
            cfg.t_end = 1.0;
            cfg.dt = 0.02;
            rates.push(run_decay(&cfg).unwrap().fit.unwrap().rate);
        }
        assert!((rates[1] / rates[0] - 1.0).abs() < 0.2, "{rates:?}");
    }

    #[test]
    fn decay_fit_uses_post_halving_window() {
        let rows: Vec<TraceRow> = (0..10)
            .map(|i| TraceRow {
                t: i as f64,
                energy: (-(i as f64) * 0.7).exp(),
                dissipation: 0.0,
                small: true,
                dist_poiseuille: 0.0,
                dist_effective: None,
            })
            .collect();
        let f = fit_decay_rate(&rows, 0.0).unwrap();
        assert!((f.rate - 0.7).abs() < 1e-12 && f.points == 9);
        assert!(fit_decay_rate(&rows[..3], 0.0).is_none());
    }
}
