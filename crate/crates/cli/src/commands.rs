//! Subcommand drivers. Each returns the files it wrote.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;

use roughwall::analysis::{run_sweep, Column, SlopeFit, SweepReport};
use roughwall::corrector::{decay_fit, solve_cell, CellCorrector};
use roughwall::geometry::{build_strip_mesh, write_mesh};
use roughwall::steady::{solve_steady, write_field_file, SteadySolution};
use roughwall::unsteady::{run_decay, DecayTrace};

use crate::config::{ConfigError, RunConfig};
use crate::svg::{slope_guide, Chart, Series};

pub enum Failure {
    Config(ConfigError),
    Numerical(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Numerical(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Numerical(e.into())
    }
}

pub type Outcome = Result<Vec<PathBuf>, Failure>;

fn write_file(dir: &Path, name: &str, fill: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> anyhow::Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let mut out = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
    fill(&mut out).and_then(|_| out.flush()).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

pub fn cmd_cell(cfg: &RunConfig) -> Outcome {
    let profile = cfg.profile()?;
    let opts = cfg.resolved_cell_options(&profile)?;
    let corr = solve_cell(&profile, cfg.cell.height, &opts).context("cell problem")?;
    let fit = decay_fit(&corr);
    println!("alpha1 = {:.16e}", corr.alpha1());
    println!("decay rate = {:.6} (R2 {:.5}, {} levels)", fit.rate, fit.r2, fit.levels_used);
    let mut files = vec![write_file(&cfg.out, "cell_summary.csv", |w| corr.write_summary(w))?];
    files.push(write_file(&cfg.out, "cell_decay.svg", |w| w.write_all(decay_chart(&corr).render().as_bytes()))?);
    Ok(files)
}

fn decay_chart(corr: &CellCorrector) -> Chart {
    let table = corr.decay_table();
    let series = |name: &str, f: fn(&roughwall::corrector::DecayRow) -> f64| Series {
        name: name.into(),
        points: table.iter().map(|r| (r.level, f(r))).collect(),
        guide: false,
    };
    Chart {
        title: format!("cell corrector decay, {}", corr.profile().descriptor()),
        x_label: "y2".into(),
        y_label: "sup over y1".into(),
        log_x: false,
        series: vec![
            series("|V - alpha|", |r| r.sup_v),
            series("|grad V|", |r| r.sup_grad),
            series("|p|", |r| r.sup_p),
        ],
    }
}

pub fn cmd_steady(cfg: &RunConfig) -> Outcome {
    let case = cfg.flow_case()?;
    let policy = cfg.mesh_policy()?;
    let solver = cfg.solver()?;
    let sol = solve_steady(&case, &policy, &solver).context("steady solve")?;
    let flux = sol.outflow_flux();
    println!("flux = {flux:.16e}");
    println!("divergence = {:.3e}, picard iterations = {}", sol.divergence, sol.update_norms.len());
    let mut files = vec![write_file(&cfg.out, "steady_summary.csv", |w| steady_summary(&sol, w))?];
    files.push(write_file(&cfg.out, "steady_field.txt", |w| write_field_file(&sol.field, &case.describe(), w))?);
    files.push(write_file(&cfg.out, "mesh.txt", |w| write_mesh(&sol.mesh, w))?);
    Ok(files)
}

fn steady_summary(sol: &SteadySolution, w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "# profile: {}", sol.case.profile.descriptor())?;
    writeln!(w, "# mode: {}", sol.case.mode.name())?;
    writeln!(w, "quantity,value")?;
    writeln!(w, "epsilon,{:.16e}", sol.case.epsilon)?;
    writeln!(w, "flux,{:.16e}", sol.outflow_flux())?;
    writeln!(w, "divergence,{:.16e}", sol.divergence)?;
    writeln!(w, "picard_iterations,{}", sol.update_norms.len())?;
    writeln!(w, "nodes,{}", sol.mesh.nodes().len())?;
    writeln!(w, "cells,{}", sol.mesh.cells().len())
}

pub fn cmd_unsteady(cfg: &RunConfig) -> Outcome {
    let ucfg = cfg.unsteady_config()?;
    let trace = run_decay(&ucfg).context("unsteady run")?;
    let last = trace.rows.last().map(|r| (r.t, r.energy)).unwrap_or((0.0, 0.0));
    println!("initial energy = {:.6e}, final energy = {:.6e} at t = {:.4}", trace.initial_energy(), last.1, last.0);
    match &trace.fit {
        Some(f) => println!("decay rate = {:.6} (R2 {:.5}, {} points)", f.rate, f.r2, f.points),
        None => println!("decay rate not fitted"),
    }
    if !trace.is_monotone() {
        log::warn!("energy trace is not monotone");
    }
    let mut files = vec![write_file(&cfg.out, "unsteady_trace.csv", |w| trace.write_csv(w))?];
    files.push(write_file(&cfg.out, "unsteady_energy.svg", |w| w.write_all(energy_chart(&trace).render().as_bytes()))?);
    files.push(write_file(&cfg.out, "unsteady_final_field.txt", |w| {
        write_field_file(&trace.final_field, &ucfg.case.describe(), w)
    })?);
    Ok(files)
}

fn energy_chart(trace: &DecayTrace) -> Chart {
    Chart {
        title: "perturbation energy".into(),
        x_label: "t".into(),
        y_label: "E, D".into(),
        log_x: false,
        series: vec![
            Series { name: "E".into(), points: trace.rows.iter().map(|r| (r.t, r.energy)).collect(), guide: false },
            Series { name: "D".into(), points: trace.rows.iter().map(|r| (r.t, r.dissipation)).collect(), guide: false },
        ],
    }
}

pub fn cmd_sweep(cfg: &RunConfig) -> Outcome {
    let scfg = cfg.sweep_config()?;
    let report = run_sweep(&scfg).context("sweep")?;
    print!("{}", report.summary());
    let mut files = vec![write_file(&cfg.out, "sweep_report.csv", |w| report.write_csv(w))?];
    files.push(write_file(&cfg.out, "sweep_slopes.csv", |w| slopes_csv(&report, w))?);
    for c in Column::FITTED {
        let name = format!("sweep_{}.svg", c.name());
        files.push(write_file(&cfg.out, &name, |w| w.write_all(sweep_chart(&report, c).render().as_bytes()))?);
    }
    if !report.missing.is_empty() {
        let eps: Vec<String> = report.missing.iter().map(|(e, _)| e.to_string()).collect();
        return Err(Failure::Numerical(anyhow::anyhow!(
            "sweep rows failed for epsilon {}; partial report written",
            eps.join(", ")
        )));
    }
    Ok(files)
}

fn slopes_csv(report: &SweepReport, w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "column,status,slope,r2,slope_without_largest")?;
    for (c, f) in &report.slopes {
        match f {
            SlopeFit::Fit { slope, r2, without_largest } => {
                let drop = without_largest.map(|v| format!("{v:.16e}")).unwrap_or_default();
                writeln!(w, "{},fit,{slope:.16e},{r2:.16e},{drop}", c.name())?
            }
            SlopeFit::Degenerate => writeln!(w, "{},degenerate,,,", c.name())?,
            SlopeFit::Insufficient(_) => writeln!(w, "{},insufficient,,,", c.name())?,
        }
    }
    Ok(())
}

fn sweep_chart(report: &SweepReport, c: Column) -> Chart {
    let points: Vec<(f64, f64)> = report.rows.iter().map(|r| (r.epsilon, r.get(c))).collect();
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let mut series = vec![Series { name: c.name().into(), points: points.clone(), guide: false }];
    if let Some(&anchor) = points.iter().filter(|p| p.1 > 0.0).last() {
        series.push(slope_guide("slope 1.5", 1.5, anchor, &xs));
        series.push(slope_guide("slope 2", 2.0, anchor, &xs));
    }
    Chart {
        title: format!("{} vs epsilon, {}", c.name(), report.profile),
        x_label: "epsilon".into(),
        y_label: c.name().into(),
        log_x: true,
        series,
    }
}

/// Validates every section and builds the meshes without solving.
pub fn cmd_check(cfg: &RunConfig) -> Outcome {
    let profile = cfg.profile()?;
    let case = cfg.flow_case()?;
    let policy = cfg.mesh_policy()?;
    cfg.solver()?;
    let sweep = cfg.sweep_config()?;
    let ucfg = cfg.unsteady_config()?;
    let mut eps = vec![case.epsilon];
    eps.extend(sweep.epsilons.iter().filter(|&&e| e != case.epsilon));
    for e in eps {
        let mesh = policy.build(&profile, e).map_err(|err| ConfigError(format!("mesh for epsilon = {e}: {err}")))?;
        println!("# channel mesh epsilon={e}: {} cells, {} nodes", mesh.cells().len(), mesh.nodes().len());
    }
    let cell = cfg.resolved_cell_options(&profile)?;
    let strip = build_strip_mesh(&profile, cfg.cell.height, &cell.strip)
        .map_err(|err| ConfigError(format!("cell strip mesh: {err}")))?;
    println!("# cell strip mesh: {} cells, {} nodes", strip.cells().len(), strip.nodes().len());
    println!("# profile: {}", profile.descriptor());
    println!("# unsteady initial: {:?}", ucfg.initial);
    print!("{}", cfg.to_toml());
    Ok(Vec::new())
}
