//! The four subcommands. Each writes its tables into the output directory
//! and returns a short text summary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use xdiff_core::entropy::{EntropyDensity, GluedEntropy};
use xdiff_core::grid::Trajectory;
use xdiff_core::model::{CrossDiffusion, Model};
use xdiff_core::probe::candidate_lattice;
use xdiff_core::solver::{entropy_report, monotonicity_violations, simulate, space_convergence, time_convergence};
use xdiff_core::verify::{glue_ladder, glue_search_with, CertificationReport, Subspace};
use xdiff_core::Error;

use crate::config::{ConfigError, Epsilon, Loaded, Refine};
use crate::parallel;
use crate::probing::probe_tables;
use crate::report::{self, Table};
use crate::trajfile::{self, TrajectoryFileError};

pub const TRAJECTORY_FILE: &str = "trajectory.xdif";

/// Tolerance of the entropy monitor.
pub const MONOTONICITY_TOL: f64 = 1e-10;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{}: {source}", path.display())]
    Trajectory { path: PathBuf, source: TrajectoryFileError },
    #[error("{}: {source}", path.display())]
    Output { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Domain(_) => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Options {
    pub out: PathBuf,
    pub threads: usize,
    pub skip_certify: bool,
}

fn output(path: &Path, table: &Table) -> Result<(), CliError> {
    table.write(path).map_err(|e| CliError::Output { path: path.into(), source: std::io::Error::other(e.to_string()) })
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Output { path: path.into(), source })
}

fn prepare(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|source| CliError::Output { path: out.into(), source })
}

fn domain(e: impl std::fmt::Display) -> CliError {
    CliError::Domain(e.to_string())
}

/// Result of the certification step.
pub struct Certification {
    pub reports: Vec<CertificationReport>,
    pub glued: Option<GluedEntropy>,
    pub passed: bool,
    pub note: String,
}

fn base_entropy(loaded: &Loaded, model: &Model) -> Result<EntropyDensity, CliError> {
    model.entropy().map_err(|e| loaded.invalid("model", "name", e.to_string()).into())
}

pub fn certification(loaded: &Loaded, model: &Model, threads: usize) -> Result<Certification, CliError> {
    let e = &loaded.config.entropy;
    let sub = Subspace::for_model(model);
    let base = base_entropy(loaded, model)?;
    match loaded.epsilon()? {
        Epsilon::Raw => {
            let r = parallel::certify(model, &base, &sub, e.resolution, e.target, threads).map_err(domain)?;
            let passed = r.passed;
            Ok(Certification { reports: vec![r], glued: None, passed, note: "raw entropy".into() })
        }
        Epsilon::Fixed(eps) => {
            let glued = GluedEntropy::new(base, eps).map_err(|err| loaded.invalid("entropy", "epsilon", err.to_string()))?;
            let r = parallel::certify_glued(model, &glued, &sub, e.resolution, e.target, threads).map_err(domain)?;
            let passed = r.passed;
            Ok(Certification { reports: vec![r], glued: Some(glued), passed, note: format!("fixed epsilon {eps}") })
        }
        Epsilon::Search => {
            let mut reports = Vec::new();
            let found = glue_search_with(model, &base, e.target, |g| {
                let r = parallel::certify_glued(model, g, &sub, e.resolution, e.target, threads)?;
                reports.push(r.clone());
                Ok(r)
            });
            match found {
                Ok((eps, _)) => {
                    let glued = GluedEntropy::new(base, eps).map_err(domain)?;
                    Ok(Certification { reports, glued: Some(glued), passed: true, note: format!("search selected epsilon {eps}") })
                }
                Err(Error::NoAdmissibleEpsilon { best_margin, best_epsilon }) => Ok(Certification {
                    reports,
                    glued: None,
                    passed: false,
                    note: format!("no admissible epsilon (best margin {best_margin} at epsilon {best_epsilon})"),
                }),
                Err(err) => Err(domain(err)),
            }
        }
    }
}

fn certification_summary(model: &Model, c: &Certification) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "model: {}", model.name());
    let _ = writeln!(s, "entropy: {}", c.note);
    if let Some(r) = c.reports.last() {
        let _ = writeln!(s, "condition: {}", r.condition());
        let _ = writeln!(s, "min margin: {:.6e} (target {:.3e}) at {:?}", r.min_margin, r.target, r.argmin);
        let _ = writeln!(s, "hessian bounds: [{:.6e}, {:.6e}]", r.hessian_bounds.0, r.hessian_bounds.1);
        if let Some((bound, mu)) = r.near_diagonal {
            let _ = writeln!(s, "near-diagonal: bound {bound:.6e}, mu {mu:.6e}");
        }
        let _ = writeln!(s, "lipschitz slack: {:.6e}", r.lipschitz_slack);
    }
    let _ = writeln!(s, "result: {}", if c.passed { "PASS" } else { "FAIL" });
    s
}

fn run_certification(loaded: &Loaded, model: &Model, opts: &Options) -> Result<Certification, CliError> {
    let c = certification(loaded, model, opts.threads)?;
    output(&opts.out.join("certification.csv"), &report::certification(&c.reports))?;
    write_text(&opts.out.join("certification.txt"), &certification_summary(model, &c))?;
    Ok(c)
}

pub fn cmd_certify(loaded: &Loaded, opts: &Options) -> Result<String, CliError> {
    let model = loaded.model()?;
    prepare(&opts.out)?;
    let c = run_certification(loaded, &model, opts)?;
    let summary = certification_summary(&model, &c);
    if c.passed {
        Ok(summary)
    } else {
        Err(CliError::Domain(format!("{summary}certification failed")))
    }
}

/// Glued entropy for monitoring when certification did not provide one.
fn monitor_entropy(loaded: &Loaded, model: &Model, threads: usize) -> Result<(GluedEntropy, String), CliError> {
    let base = base_entropy(loaded, model)?;
    let fallback = |base: EntropyDensity| -> Result<(GluedEntropy, String), CliError> {
        let eps = glue_ladder(model.upper())[0];
        Ok((GluedEntropy::new(base, eps).map_err(domain)?, format!("uncertified epsilon {eps}")))
    };
    match loaded.epsilon()? {
        Epsilon::Fixed(eps) => {
            let g = GluedEntropy::new(base, eps).map_err(|err| loaded.invalid("entropy", "epsilon", err.to_string()))?;
            Ok((g, format!("fixed epsilon {eps}")))
        }
        Epsilon::Raw => fallback(base),
        Epsilon::Search => match certification(loaded, model, threads)?.glued {
            Some(g) => {
                let eps = g.epsilon();
                Ok((g, format!("search selected epsilon {eps}")))
            }
            None => fallback(base),
        },
    }
}

pub fn cmd_simulate(loaded: &Loaded, opts: &Options) -> Result<String, CliError> {
    let model = loaded.model()?;
    let mesh = loaded.mesh()?;
    let (cfg, spec) = loaded.solver()?;
    let initial = loaded.initial(&model)?;
    prepare(&opts.out)?;
    let mut summary = String::new();
    let mut lambda = 0.0;
    let certified = if opts.skip_certify {
        let _ = writeln!(summary, "certification skipped");
        None
    } else {
        let c = run_certification(loaded, &model, opts)?;
        if !c.passed {
            return Err(CliError::Domain(format!(
                "{}certification failed; rerun with --skip-certify to simulate anyway",
                certification_summary(&model, &c)
            )));
        }
        lambda = c.reports.last().map(|r| r.min_margin).unwrap_or(0.0);
        let _ = writeln!(summary, "certification: PASS ({})", c.note);
        c.glued
    };
    let run = match simulate(&model, &mesh, &initial, cfg, spec, None) {
        Ok(run) => run,
        Err(f) => {
            let grid = mesh.grid(cfg.dt, 0.0, 1, model.n()).map_err(domain)?;
            let path = opts.out.join("failure_state.csv");
            output(&path, &report::state_dump(&grid, &model, &f.state))?;
            return Err(CliError::Domain(format!(
                "solver failed at step {} (t = {}): {}; last accepted state written to {}",
                f.step,
                f.time,
                f.error,
                path.display()
            )));
        }
    };
    let traj = &run.trajectory;
    let tpath = opts.out.join(TRAJECTORY_FILE);
    trajfile::write(traj, &tpath).map_err(|source| CliError::Output { path: tpath.clone(), source })?;
    output(&opts.out.join("newton.csv"), &report::newton(&run.stats, spec.t_start, cfg.dt))?;
    let (glued, note) = match certified {
        Some(g) => {
            let eps = g.epsilon();
            (g, format!("certified epsilon {eps}"))
        }
        None => monitor_entropy(loaded, &model, opts.threads)?,
    };
    let rows = entropy_report(&model, &glued, traj, lambda).map_err(domain)?;
    output(&opts.out.join("entropy.csv"), &report::entropy(&rows))?;
    let violations = monotonicity_violations(&rows, MONOTONICITY_TOL);
    let _ = writeln!(summary, "model: {}", model.name());
    let _ = writeln!(summary, "steps: {} (dt {}), snapshots: {}", spec.steps, cfg.dt, traj.grid().snapshots());
    let _ = writeln!(summary, "max newton iterations: {}", run.stats.iter().map(|s| s.iterations).max().unwrap_or(0));
    let _ = writeln!(summary, "entropy monitor: {note}, {} increase(s) beyond tolerance", violations.len());
    let _ = writeln!(summary, "trajectory: {}", tpath.display());
    write_text(&opts.out.join("simulate.txt"), &summary)?;
    Ok(summary)
}

fn load_trajectory(loaded: &Loaded, opts: &Options) -> Result<(PathBuf, Trajectory), CliError> {
    let path = match &loaded.config.probe.trajectory {
        Some(p) if p.is_absolute() => p.clone(),
        Some(p) => loaded.base_dir().join(p),
        None => opts.out.join(TRAJECTORY_FILE),
    };
    let traj = trajfile::read(&path).map_err(|source| CliError::Trajectory { path: path.clone(), source })?;
    Ok((path, traj))
}

pub fn cmd_probe(loaded: &Loaded, opts: &Options) -> Result<String, CliError> {
    let model = loaded.model()?;
    let (path, traj) = load_trajectory(loaded, opts)?;
    let grid = traj.grid();
    if grid.n_species() != model.n() {
        return Err(CliError::Usage(format!(
            "{}: trajectory has {} species, model {} has {}",
            path.display(),
            grid.n_species(),
            model.name(),
            model.n()
        )));
    }
    let h = (0..grid.dim()).map(|a| grid.cell_size(a)).fold(f64::INFINITY, f64::min);
    let cfg = loaded.probe(h)?;
    let p = &loaded.config.probe;
    let t0 = p.t0.unwrap_or_else(|| grid.t_end());
    let smallest = *cfg.radii.last().expect("validated radii");
    if t0 - smallest * smallest < grid.t_start() - 1e-12 || t0 > grid.t_end() + 1e-12 {
        return Err(loaded.invalid("probe", "t0", format!("cylinders of radius {smallest} ending at t = {t0} leave the trajectory")).into());
    }
    let centers = candidate_lattice(&traj, smallest, p.stride);
    if centers.is_empty() {
        return Err(loaded.invalid("probe", "radii", format!("no lattice point admits radius {smallest}")).into());
    }
    let frozen = if p.frozen { Some(monitor_entropy(loaded, &model, opts.threads)?.0) } else { None };
    prepare(&opts.out)?;
    let tables = probe_tables(&traj, &model, &cfg, &centers, t0, frozen.as_ref(), opts.threads).map_err(domain)?;
    output(&opts.out.join("probe_ratios.csv"), &tables.ratios)?;
    output(&opts.out.join("probe_candidates.csv"), &tables.candidates)?;
    output(&opts.out.join("probe_slopes.csv"), &tables.slopes)?;
    let mut summary = String::new();
    let _ = writeln!(summary, "trajectory: {}", path.display());
    let _ = writeln!(summary, "radii: {:?}", cfg.radii);
    let _ = writeln!(summary, "thresholds: eps0 {} eps1 {} (defaults are tuning knobs)", cfg.eps0, cfg.eps1);
    let _ = writeln!(summary, "reverse Hölder exponent: {}", cfg.p);
    let _ = writeln!(summary, "lattice points: {}, flagged: {}", centers.len(), tables.flagged);
    write_text(&opts.out.join("probe.txt"), &summary)?;
    Ok(summary)
}

pub fn cmd_convergence(loaded: &Loaded, opts: &Options) -> Result<String, CliError> {
    let model = loaded.model()?;
    let mesh = loaded.mesh()?;
    let (cfg, _) = loaded.solver()?;
    let (profile, section) = loaded.manufactured(&model)?;
    let target = |x: &xdiff_core::grid::Point, t: f64, out: &mut [f64]| profile.eval(x, t, out);
    prepare(&opts.out)?;
    let (label, table) = match section.refine {
        Refine::Time => {
            let dts = section.dts.as_deref().expect("validated");
            ("time", time_convergence(&model, &mesh, &target, cfg, dts, section.t_end))
        }
        Refine::Space => {
            let cells = section.cells.as_deref().expect("validated");
            ("space", space_convergence(&model, mesh.dim, &mesh.extent[..mesh.dim], cells, &target, cfg, section.t_end))
        }
    };
    let table = table.map_err(|f| CliError::Domain(format!("solver failed at step {} (t = {}): {}", f.step, f.time, f.error)))?;
    output(&opts.out.join("convergence.csv"), &report::convergence(label, mesh.extent[0], &table))?;
    let mut summary = String::new();
    let _ = writeln!(summary, "model: {}", model.name());
    let _ = writeln!(summary, "refinement: {label}");
    let _ = writeln!(summary, "fitted order: {:.4}", table.order);
    write_text(&opts.out.join("convergence.txt"), &summary)?;
    Ok(summary)
}
