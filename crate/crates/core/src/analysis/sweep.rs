//! ε-sweeps: steady solves, wall-law and composite error norms, slope fits.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::sync::Arc;

use rayon::prelude::*;

use crate::corrector::{solve_cell, CellCorrector, CellOptions};
use crate::discretization::GaussRule;
use crate::fields::{compose, effective, poiseuille, side_layer_norms, CompositeFlags};
use crate::geometry::{check_epsilon, BoundaryProfile, Region};
use crate::steady::{perturbation_field, solve_steady, FlowCase, FlowMode, MeshPolicy, SolverOptions};

use super::{fit_rate, interface_ratios, norm, AnalysisError, Difference, NormKind, NormRegion, NormRequest};

#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub profile: BoundaryProfile,
    pub epsilons: Vec<f64>,
    pub p0: f64,
    pub p1: f64,
    pub mode: FlowMode,
    pub mesh: MeshPolicy,
    pub solver: SolverOptions,
    pub cell_height: f64,
    /// Cell-problem options; `None` matches the strip to the channel meshes.
    pub cell: Option<CellOptions>,
    pub ell: f64,
    pub workers: usize,
}

impl SweepConfig {
    pub fn new(profile: BoundaryProfile, epsilons: Vec<f64>) -> Self {
        Self {
            profile,
            epsilons,
            p0: 0.0,
            p1: -1.0,
            mode: FlowMode::Stokes,
            mesh: MeshPolicy::default(),
            solver: SolverOptions::default(),
            cell_height: 10.0,
            cell: None,
            ell: 0.25,
            workers: 1,
        }
    }
}

/// Report columns, in CSV order after `epsilon`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Column {
    Alpha1,
    /// `‖U_ε − U_eff‖_{L²(Ω₀)}`.
    L2Eff,
    /// `‖U_ε − U_eff‖_{L¹(Ω₀)}`.
    L1Eff,
    /// `‖𝒲‖_{L²(Ω₀)}`.
    L2W,
    /// `‖∇𝒲‖_{L²}` over `Ω_ε` without the rough side strips.
    H1W,
    /// `‖∇𝒲‖_{L²}` over the rough side strips.
    H1WStrips,
    /// `‖U_ε − U₀‖²_{L²(Ω_ε)}`.
    L2SqSteady,
    /// `‖∇(U_ε − U₀)‖²_{L²(Ω_ε)}`.
    H1SqSteady,
    SideL1,
    SideGradL1,
    SideL2,
    SideGradL2,
    PoincareRatio,
    TraceRatio,
    L1Ratio,
    /// `sup_{Γ₁} |𝒲|`.
    TopW,
    /// `sup_{Γ_ε} |W̃|` at the boundary nodes.
    BottomWTilde,
}

impl Column {
    pub const ALL: [Column; 17] = [
        Column::Alpha1,
        Column::L2Eff,
        Column::L1Eff,
        Column::L2W,
        Column::H1W,
        Column::H1WStrips,
        Column::L2SqSteady,
        Column::H1SqSteady,
        Column::SideL1,
        Column::SideGradL1,
        Column::SideL2,
        Column::SideGradL2,
        Column::PoincareRatio,
        Column::TraceRatio,
        Column::L1Ratio,
        Column::TopW,
        Column::BottomWTilde,
    ];

    /// Columns whose ε-dependence is fitted.
    pub const FITTED: [Column; 11] = [
        Column::L2Eff,
        Column::L1Eff,
        Column::L2W,
        Column::H1W,
        Column::L2SqSteady,
        Column::H1SqSteady,
        Column::SideL1,
        Column::SideGradL1,
        Column::SideL2,
        Column::SideGradL2,
        Column::H1WStrips,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Column::Alpha1 => "alpha1",
            Column::L2Eff => "e_l2_eff",
            Column::L1Eff => "e_l1_eff",
            Column::L2W => "e_l2_w",
            Column::H1W => "e_h1_w",
            Column::H1WStrips => "e_h1_w_strips",
            Column::L2SqSteady => "e_l2sq_steady",
            Column::H1SqSteady => "e_h1sq_steady",
            Column::SideL1 => "side_l1",
            Column::SideGradL1 => "side_grad_l1",
            Column::SideL2 => "side_l2",
            Column::SideGradL2 => "side_grad_l2",
            Column::PoincareRatio => "ratio_poincare",
            Column::TraceRatio => "ratio_trace",
            Column::L1Ratio => "ratio_l1",
            Column::TopW => "top_sup_w",
            Column::BottomWTilde => "bottom_sup_wtilde",
        }
    }

    fn describe(self) -> &'static str {
        match self {
            Column::Alpha1 => "tail constant used for the effective profile",
            Column::L2Eff => "L2(Omega0) norm of U_eps - U_eff",
            Column::L1Eff => "L1(Omega0) norm of U_eps - U_eff",
            Column::L2W => "L2(Omega0) norm of the side-layer corrected error field",
            Column::H1W => "L2 norm of its gradient over Omega_eps minus the rough side strips",
            Column::H1WStrips => "L2 norm of its gradient over the rough side strips",
            Column::L2SqSteady => "squared L2(Omega_eps) norm of U_eps - U_0",
            Column::H1SqSteady => "squared L2(Omega_eps) norm of grad(U_eps - U_0)",
            Column::SideL1 => "L1 norm of the side layers",
            Column::SideGradL1 => "L1 norm of the side-layer gradient",
            Column::SideL2 => "L2 norm of the side layers",
            Column::SideGradL2 => "L2 norm of the side-layer gradient",
            Column::PoincareRatio => "rough-layer Poincare ratio of U_eps - U_0",
            Column::TraceRatio => "interface trace ratio",
            Column::L1Ratio => "interface L1 ratio",
            Column::TopW => "sup of the corrected error field on the top wall",
            Column::BottomWTilde => "sup of the uncorrected error field at rough-wall nodes",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub epsilon: f64,
    pub values: Vec<f64>,
}

impl SweepRow {
    pub fn get(&self, c: Column) -> f64 {
        self.values[Column::ALL.iter().position(|&x| x == c).unwrap()]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SlopeFit {
    Fit { slope: f64, r2: f64, without_largest: Option<f64> },
    /// All values at roundoff level.
    Degenerate,
    Insufficient(usize),
}

#[derive(Clone, Debug)]
pub struct SweepReport {
    pub profile: String,
    pub mode: FlowMode,
    pub alpha1: f64,
    pub rows: Vec<SweepRow>,
    pub missing: Vec<(f64, String)>,
    pub slopes: Vec<(Column, SlopeFit)>,
}

/// Values at or below this are treated as exact zeros by the slope fits.
const DEGENERATE: f64 = 1e-13;

impl SweepReport {
    pub fn slope(&self, c: Column) -> Option<&SlopeFit> {
        self.slopes.iter().find(|(x, _)| *x == c).map(|(_, f)| f)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "# profile: {}", self.profile)?;
        writeln!(out, "# mode: {}", self.mode.name())?;
        writeln!(out, "# columns:")?;
        writeln!(out, "#   epsilon: roughness period")?;
        for c in Column::ALL {
            writeln!(out, "#   {}: {}", c.name(), c.describe())?;
        }
        for (e, why) in &self.missing {
            writeln!(out, "# missing epsilon={e:.16e}: {why}")?;
        }
        let names: Vec<&str> = Column::ALL.iter().map(|c| c.name()).collect();
        writeln!(out, "epsilon,{}", names.join(","))?;
        for r in &self.rows {
            let vals: Vec<String> = r.values.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(out, "{:.16e},{}", r.epsilon, vals.join(","))?;
        }
        Ok(())
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "profile {} ({}), alpha1 = {:.10e}", self.profile, self.mode.name(), self.alpha1);
        let _ = writeln!(s, "rows: {}, missing: {}", self.rows.len(), self.missing.len());
        for (c, f) in &self.slopes {
            let _ = match f {
                SlopeFit::Fit { slope, r2, without_largest } => {
                    let drop = without_largest.map(|v| format!(", without largest eps {v:.4}")).unwrap_or_default();
                    writeln!(s, "slope {:<16} {slope:.4} (R2 {r2:.5}{drop})", c.name())
                }
                SlopeFit::Degenerate => writeln!(s, "slope {:<16} degenerate", c.name()),
                SlopeFit::Insufficient(n) => writeln!(s, "slope {:<16} not fitted ({n} rows)", c.name()),
            };
        }
        s
    }
}

/// Runs the sweep; one cell corrector is shared by every row.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepReport, AnalysisError> {
    if cfg.epsilons.len() < 3 {
        return Err(AnalysisError::Sweep(format!("need >=3 epsilon values for rate fit, got {}", cfg.epsilons.len())));
    }
    for &e in &cfg.epsilons {
        check_epsilon(e).map_err(|err| AnalysisError::Sweep(err.to_string()))?;
    }
    let cell = cfg
        .cell
        .clone()
        .or_else(|| CellOptions::matched_to(&cfg.mesh, &cfg.profile))
        .unwrap_or_default();
    let corr = Arc::new(solve_cell(&cfg.profile, cfg.cell_height, &cell)?);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()
        .map_err(|e| AnalysisError::Sweep(e.to_string()))?;
    let results: Vec<Result<SweepRow, AnalysisError>> =
        pool.install(|| cfg.epsilons.par_iter().map(|&e| sweep_row(cfg, &corr, e)).collect());
    let mut rows = Vec::new();
    let mut missing = Vec::new();
    for (e, r) in cfg.epsilons.iter().zip(results) {
        match r {
            Ok(row) => rows.push(row),
            Err(err) => {
                log::error!("sweep row epsilon={e} failed: {err}");
                missing.push((*e, err.to_string()));
            }
        }
    }
    rows.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
    let slopes = Column::FITTED.iter().map(|&c| (c, fit_column(&rows, c))).collect();
    Ok(SweepReport {
        profile: cfg.profile.descriptor(),
        mode: cfg.mode,
        alpha1: corr.alpha1(),
        rows,
        missing,
        slopes,
    })
}

fn fit_column(rows: &[SweepRow], c: Column) -> SlopeFit {
    if rows.len() < 3 {
        return SlopeFit::Insufficient(rows.len());
    }
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.epsilon, r.get(c))).collect();
    if pts.iter().all(|p| p.1.abs() <= DEGENERATE) {
        return SlopeFit::Degenerate;
    }
    match fit_rate(&pts) {
        Ok(f) => {
            let without_largest = (pts.len() >= 4).then(|| fit_rate(&pts[1..]).map(|g| g.slope).ok()).flatten();
            SlopeFit::Fit { slope: f.slope, r2: f.r2, without_largest }
        }
        Err(_) => SlopeFit::Degenerate,
    }
}

fn sweep_row(cfg: &SweepConfig, corr: &Arc<CellCorrector>, epsilon: f64) -> Result<SweepRow, AnalysisError> {
    let case = FlowCase::new(cfg.profile.clone(), epsilon, cfg.p0, cfg.p1, cfg.mode);
    let sol = Arc::new(solve_steady(&case, &cfg.mesh, &cfg.solver)?);
    let mesh = &*sol.mesh;
    let alpha1 = corr.alpha1();
    let ueff = effective(cfg.p0, cfg.p1, epsilon, alpha1)?;
    let u0 = poiseuille(cfg.p0, cfg.p1);
    let req = NormRequest::new;
    let e_eff = Difference(&sol.field, &ueff);
    let l2_eff = norm(mesh, &e_eff, req(NormRegion::Omega0, NormKind::L2))?;
    let l1_eff = norm(mesh, &e_eff, req(NormRegion::Omega0, NormKind::L1))?;
    let w = compose(sol.clone(), corr.clone(), CompositeFlags::full(), cfg.ell)?;
    let l2_w = norm(mesh, &w, req(NormRegion::Omega0, NormKind::L2))?;
    let ell = cfg.ell;
    let h1_w = norm(mesh, &w, req(NormRegion::OmegaEpsMinusSideStrips { ell }, NormKind::H1Semi))?;
    let h1_w_strips = norm(mesh, &w, req(NormRegion::SideStrips { ell }, NormKind::H1Semi))?;
    let e0 = Difference(&sol.field, &u0);
    let l2sq = norm(mesh, &e0, req(NormRegion::OmegaEps, NormKind::L2))?.powi(2);
    let h1sq = norm(mesh, &e0, req(NormRegion::OmegaEps, NormKind::H1Semi))?.powi(2);
    let s1 = side_layer_norms(corr, epsilon, ell, 1)?;
    let s2 = side_layer_norms(corr, epsilon, ell, 2)?;
    let ratios = interface_ratios(&perturbation_field(&sol), epsilon)?;
    let top = top_sup(&w)?;
    let wt = compose(sol.clone(), corr.clone(), CompositeFlags::tilde(), ell)?;
    let bottom = bottom_sup(&wt)?;
    let values = vec![
        alpha1, l2_eff, l1_eff, l2_w, h1_w, h1_w_strips, l2sq, h1sq, s1.value, s1.gradient, s2.value, s2.gradient,
        ratios[0], ratios[1], ratios[2], top, bottom,
    ];
    log::info!("sweep row epsilon={epsilon}: e_l2_eff={l2_eff:.3e} e_l2_w={l2_w:.3e} e_h1_w={h1_w:.3e}");
    Ok(SweepRow { epsilon, values })
}

fn top_sup(w: &crate::fields::CompositeErrorField) -> Result<f64, AnalysisError> {
    let mesh = &*w.solution().mesh;
    let g = GaussRule::new(3);
    let row = mesh.ny() - 1;
    let mut sup: f64 = 0.0;
    for col in 0..mesh.nx() {
        for t in std::iter::once(0.0).chain(g.points().iter().copied()) {
            let s = w.eval_ref(row * mesh.nx() + col, [t, 1.0])?;
            sup = sup.max(s.u[0].hypot(s.u[1]));
        }
    }
    Ok(sup)
}

fn bottom_sup(w: &crate::fields::CompositeErrorField) -> Result<f64, AnalysisError> {
    let mesh = &*w.solution().mesh;
    let mut sup: f64 = 0.0;
    for (c, cell) in mesh.cells().iter().enumerate() {
        if cell.row != 0 || cell.region != Region::RoughLayer {
            continue;
        }
        for xi0 in [0.0, 0.5] {
            let s = w.eval_ref(c, [xi0, 0.0])?;
            sup = sup.max(s.u[0].hypot(s.u[1]));
        }
    }
    Ok(sup)
}
