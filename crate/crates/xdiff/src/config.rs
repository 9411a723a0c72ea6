//! Run configuration: a TOML file with one level of sections.
//!
//! ```toml
//! [model]
//! name = "skt"
//! alpha = [[1.0, 1.0, 1.0], [1.0, 1.0, 1.0]]
//!
//! [grid]
//! dim = 1
//! cells = 64
//!
//! [solver]
//! dt = 1e-3
//! t_end = 0.1
//!
//! [initial]
//! mean = [0.5, 0.5]
//! amplitude = [0.1, 0.1]
//! mode = [1, 2]
//! ```

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use xdiff_core::grid::Point;
use xdiff_core::linalg::Matrix;
use xdiff_core::model::{Constraint, CrossDiffusion, Model};
use xdiff_core::probe::{dyadic_radii, ProbeConfig};
use xdiff_core::solver::{JacobianMode, Mesh, RunSpec, SolverConfig};
use xdiff_core::verify::DEFAULT_TARGET;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("{}:{line}: key `{key}`: {message}", path.display())]
    Invalid { path: PathBuf, line: usize, key: String, message: String },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub solver: SolverSection,
    pub initial: Option<InitialSection>,
    #[serde(default)]
    pub entropy: EntropySection,
    #[serde(default)]
    pub probe: ProbeSection,
    pub convergence: Option<ConvergenceSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSection {
    Heat {
        #[serde(default = "one")]
        species: usize,
    },
    Constant {
        a: Vec<Vec<f64>>,
        upper: Option<Vec<f64>>,
    },
    Skt {
        alpha: [[f64; 3]; 2],
        #[serde(default)]
        reaction: [[f64; 3]; 2],
        upper: Option<Vec<f64>>,
    },
    Semiconductor {
        mu1: f64,
        mu2: f64,
        upper: Option<Vec<f64>>,
    },
    #[serde(alias = "maxwell-stefan")]
    MaxwellStefan { d: Vec<Vec<f64>> },
    #[serde(alias = "size-exclusion")]
    SizeExclusion { k: Vec<Vec<f64>> },
    #[serde(alias = "keller-segel")]
    KellerSegel {
        delta: f64,
        mu: f64,
        beta: f64,
        upper: Option<Vec<f64>>,
    },
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub dim: usize,
    pub extent: Option<Vec<f64>>,
    pub cells: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { dim: 1, extent: None, cells: 64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianChoice {
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub dt: f64,
    pub t_end: f64,
    pub save_every: usize,
    pub jacobian: JacobianChoice,
    pub newton_tol: f64,
    pub newton_max_iters: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        SolverSection {
            dt: d.dt,
            t_end: 0.1,
            save_every: 10,
            jacobian: JacobianChoice::Analytic,
            newton_tol: d.newton_tol,
            newton_max_iters: d.newton_max_iters,
        }
    }
}

/// `u_i(x) = mean_i + amplitude_i · Π_a cos(mode_i π x_a / L_a)`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub mean: Vec<f64>,
    pub amplitude: Option<Vec<f64>>,
    pub mode: Option<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum EpsilonSetting {
    Value(f64),
    Keyword(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Epsilon {
    Search,
    Raw,
    Fixed(f64),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EntropySection {
    /// A number, `"search"` or `"none"` (raw entropy).
    pub epsilon: EpsilonSetting,
    pub target: f64,
    pub resolution: usize,
}

impl Default for EntropySection {
    fn default() -> Self {
        EntropySection { epsilon: EpsilonSetting::Keyword("search".into()), target: DEFAULT_TARGET, resolution: 32 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeSection {
    pub trajectory: Option<PathBuf>,
    pub radii: Option<Vec<f64>>,
    /// Largest dyadic radius, in cells; used when `radii` is absent.
    pub largest_cells: f64,
    pub eps0: f64,
    pub eps1: f64,
    pub p: f64,
    pub tau: f64,
    /// Lattice stride in cells.
    pub stride: usize,
    pub t0: Option<f64>,
    pub frozen: bool,
}

impl Default for ProbeSection {
    fn default() -> Self {
        ProbeSection {
            trajectory: None,
            radii: None,
            largest_cells: 32.0,
            eps0: 1e-2,
            eps1: 1e-2,
            p: 2.5,
            tau: 1.0 / 16.0,
            stride: 1,
            t0: None,
            frozen: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Refine {
    Time,
    Space,
}

/// Manufactured solution
/// `u*_i = mean_i + amplitude_i · e^{−rate_i t} · Π_a cos(mode_i π x_a / L_a)`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSection {
    pub refine: Refine,
    pub dts: Option<Vec<f64>>,
    pub cells: Option<Vec<usize>>,
    pub t_end: f64,
    pub mean: Vec<f64>,
    pub amplitude: Vec<f64>,
    pub mode: Vec<u32>,
    pub rate: Vec<f64>,
}

/// A loaded configuration with its source text for error context.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub path: PathBuf,
    pub text: String,
    pub config: RunConfig,
}

/// Line of `key` inside `[section]`, or of the section header, or 1.
fn line_of(text: &str, section: &str, key: &str) -> usize {
    let mut current = String::new();
    let mut header = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            if current == section {
                header = Some(i + 1);
            }
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return i + 1;
                }
            }
        }
    }
    header.unwrap_or(1)
}

impl Loaded {
    pub fn read(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        Self::parse(path, text)
    }

    pub fn parse(path: &Path, text: String) -> Result<Self, ConfigError> {
        let config: RunConfig =
            toml::from_str(&text).map_err(|e| ConfigError::Parse { path: path.into(), message: e.to_string().trim_end().to_string() })?;
        let loaded = Loaded { path: path.into(), text, config };
        loaded.validate()?;
        Ok(loaded)
    }

    pub fn invalid(&self, section: &str, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError::Invalid {
            path: self.path.clone(),
            line: line_of(&self.text, section, key),
            key: format!("{section}.{key}"),
            message: message.into(),
        }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let model = self.model()?;
        self.mesh()?;
        self.solver()?;
        self.epsilon()?;
        if self.config.initial.is_some() {
            self.initial(&model)?;
        }
        let e = &self.config.entropy;
        if !(e.target > 0.0) {
            return Err(self.invalid("entropy", "target", "must be positive"));
        }
        if e.resolution < 2 {
            return Err(self.invalid("entropy", "resolution", "must be at least 2"));
        }
        self.probe_thresholds()?;
        if self.config.convergence.is_some() {
            self.manufactured(&model)?;
        }
        Ok(())
    }

    fn matrix(&self, key: &str, rows: &[Vec<f64>]) -> Result<Matrix, ConfigError> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(self.invalid("model", key, "must be a square matrix"));
        }
        Ok(Matrix::from_rows(rows))
    }

    fn uppers(&self, upper: &Option<Vec<f64>>, n: usize) -> Vec<f64> {
        upper.clone().unwrap_or_else(|| vec![1.0; n])
    }

    pub fn model(&self) -> Result<Model, ConfigError> {
        let built = match &self.config.model {
            ModelSection::Heat { species } => {
                if *species == 0 {
                    return Err(self.invalid("model", "species", "must be positive"));
                }
                Ok(Model::heat(*species))
            }
            ModelSection::Constant { a, upper } => {
                let a = self.matrix("a", a)?;
                let n = a.rows();
                Model::constant(a, &self.uppers(upper, n))
            }
            ModelSection::Skt { alpha, reaction, upper } => Model::skt(*alpha, *reaction, &self.uppers(upper, 2)),
            ModelSection::Semiconductor { mu1, mu2, upper } => Model::semiconductor(*mu1, *mu2, &self.uppers(upper, 2)),
            ModelSection::MaxwellStefan { d } => Model::maxwell_stefan(self.matrix("d", d)?),
            ModelSection::SizeExclusion { k } => Model::hopf_burger(self.matrix("k", k)?),
            ModelSection::KellerSegel { delta, mu, beta, upper } => Model::pks(*delta, *mu, *beta, &self.uppers(upper, 2)),
        };
        built.map_err(|e| self.invalid("model", "name", e.to_string()))
    }

    pub fn mesh(&self) -> Result<Mesh, ConfigError> {
        let g = &self.config.grid;
        if !(1..=2).contains(&g.dim) {
            return Err(self.invalid("grid", "dim", "must be 1 or 2"));
        }
        let extent = g.extent.clone().unwrap_or_else(|| vec![1.0; g.dim]);
        if extent.len() != g.dim || extent.iter().any(|e| !(*e > 0.0)) {
            return Err(self.invalid("grid", "extent", format!("needs {} positive entries", g.dim)));
        }
        if g.cells < 4 {
            return Err(self.invalid("grid", "cells", "must be at least 4"));
        }
        if let ModelSection::KellerSegel { .. } = self.config.model {
            if g.dim != 2 {
                return Err(self.invalid("grid", "dim", "the Keller-Segel model is posed in two dimensions"));
            }
        }
        Mesh::new(g.dim, &extent, g.cells).map_err(|e| self.invalid("grid", "cells", e.to_string()))
    }

    pub fn solver(&self) -> Result<(SolverConfig, RunSpec), ConfigError> {
        let s = &self.config.solver;
        if !(s.dt > 0.0) || !s.dt.is_finite() {
            return Err(self.invalid("solver", "dt", "must be positive"));
        }
        if !(s.t_end > 0.0) {
            return Err(self.invalid("solver", "t_end", "must be positive"));
        }
        if s.save_every == 0 {
            return Err(self.invalid("solver", "save_every", "must be positive"));
        }
        if !(s.newton_tol > 0.0) {
            return Err(self.invalid("solver", "newton_tol", "must be positive"));
        }
        if s.newton_max_iters == 0 {
            return Err(self.invalid("solver", "newton_max_iters", "must be positive"));
        }
        let steps = (s.t_end / s.dt).round() as usize;
        if steps == 0 || ((steps as f64) * s.dt - s.t_end).abs() > 1e-9 * s.t_end {
            return Err(self.invalid("solver", "t_end", "must be a positive multiple of dt"));
        }
        let cfg = SolverConfig {
            dt: s.dt,
            newton_tol: s.newton_tol,
            newton_max_iters: s.newton_max_iters,
            jacobian: match s.jacobian {
                JacobianChoice::Analytic => JacobianMode::Analytic,
                JacobianChoice::FiniteDifference => JacobianMode::FiniteDifference,
            },
            ..SolverConfig::default()
        };
        Ok((cfg, RunSpec { t_start: 0.0, steps, save_every: s.save_every }))
    }

    pub fn epsilon(&self) -> Result<Epsilon, ConfigError> {
        match &self.config.entropy.epsilon {
            EpsilonSetting::Value(v) if *v > 0.0 => Ok(Epsilon::Fixed(*v)),
            EpsilonSetting::Value(v) => Err(self.invalid("entropy", "epsilon", format!("{v} must be positive"))),
            EpsilonSetting::Keyword(k) if k == "search" => Ok(Epsilon::Search),
            EpsilonSetting::Keyword(k) if k == "none" => Ok(Epsilon::Raw),
            EpsilonSetting::Keyword(k) => {
                Err(self.invalid("entropy", "epsilon", format!("expected a number, \"search\" or \"none\", found \"{k}\"")))
            }
        }
    }

    fn species_vec<T: Clone>(&self, section: &str, key: &str, v: &Option<Vec<T>>, n: usize, default: T) -> Result<Vec<T>, ConfigError> {
        match v {
            None => Ok(vec![default; n]),
            Some(v) if v.len() == n => Ok(v.clone()),
            Some(v) => Err(self.invalid(section, key, format!("has {} entries, the model has {n} species", v.len()))),
        }
    }

    /// Initial state sampled on the mesh, checked against the domain.
    pub fn initial(&self, model: &Model) -> Result<Vec<f64>, ConfigError> {
        let Some(init) = &self.config.initial else {
            return Err(self.invalid("initial", "mean", "section [initial] is required"));
        };
        let n = model.n();
        let mean = self.species_vec("initial", "mean", &Some(init.mean.clone()), n, 0.0)?;
        let amp = self.species_vec("initial", "amplitude", &init.amplitude, n, 0.0)?;
        let mode = self.species_vec("initial", "mode", &init.mode, n, 1)?;
        let mesh = self.mesh()?;
        let profile = CosineProfile { mean, amplitude: amp, mode, rate: vec![0.0; n], extent: mesh.extent, dim: mesh.dim };
        let u = mesh.sample(n, |x, out| profile.eval(x, 0.0, out));
        for chunk in u.chunks(n) {
            if !model.admissible(chunk, 0.0) {
                return Err(self.invalid("initial", "mean", format!("initial state {chunk:?} leaves the domain")));
            }
            if model.constraint() == Constraint::VolumeFilling && (chunk.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(self.invalid("initial", "mean", format!("initial state {chunk:?} does not sum to 1")));
            }
        }
        Ok(u)
    }

    pub fn probe_thresholds(&self) -> Result<(), ConfigError> {
        let p = &self.config.probe;
        if !(p.eps0 > 0.0) {
            return Err(self.invalid("probe", "eps0", "must be positive"));
        }
        if !(p.eps1 > 0.0) {
            return Err(self.invalid("probe", "eps1", "must be positive"));
        }
        if !(p.p > 2.0) {
            return Err(self.invalid("probe", "p", "must exceed 2"));
        }
        if !(p.tau > 0.0 && p.tau <= 1.0 / 16.0) {
            return Err(self.invalid("probe", "tau", "must lie in (0, 1/16]"));
        }
        if p.stride == 0 {
            return Err(self.invalid("probe", "stride", "must be positive"));
        }
        if !(p.largest_cells >= 4.0) {
            return Err(self.invalid("probe", "largest_cells", "must be at least 4"));
        }
        if let Some(r) = &p.radii {
            if r.is_empty() || r.iter().any(|v| !(*v > 0.0)) || r.windows(2).any(|w| !(w[0] > w[1])) {
                return Err(self.invalid("probe", "radii", "must be positive and strictly descending"));
            }
        }
        Ok(())
    }

    /// Probe configuration for a trajectory with smallest cell size `h`.
    pub fn probe(&self, h: f64) -> Result<ProbeConfig, ConfigError> {
        let p = &self.config.probe;
        let radii = match &p.radii {
            Some(r) => r.clone(),
            None => dyadic_radii(p.largest_cells * h, h),
        };
        let cfg = ProbeConfig { radii, eps0: p.eps0, eps1: p.eps1, p: p.p, tau: p.tau };
        cfg.validate().map_err(|e| self.invalid("probe", "radii", e.to_string()))?;
        Ok(cfg)
    }

    pub fn manufactured(&self, model: &Model) -> Result<(CosineProfile, &ConvergenceSection), ConfigError> {
        let Some(c) = &self.config.convergence else {
            return Err(self.invalid("convergence", "refine", "section [convergence] is required"));
        };
        let n = model.n();
        let mean = self.species_vec("convergence", "mean", &Some(c.mean.clone()), n, 0.0)?;
        let amplitude = self.species_vec("convergence", "amplitude", &Some(c.amplitude.clone()), n, 0.0)?;
        let mode = self.species_vec("convergence", "mode", &Some(c.mode.clone()), n, 1)?;
        let rate = self.species_vec("convergence", "rate", &Some(c.rate.clone()), n, 0.0)?;
        if !(c.t_end > 0.0) {
            return Err(self.invalid("convergence", "t_end", "must be positive"));
        }
        match c.refine {
            Refine::Time => match &c.dts {
                Some(d) if d.len() >= 2 && d.iter().all(|v| *v > 0.0) => {}
                _ => return Err(self.invalid("convergence", "dts", "time refinement needs at least two positive steps")),
            },
            Refine::Space => match &c.cells {
                Some(d) if d.len() >= 2 && d.iter().all(|v| *v >= 4) => {}
                _ => return Err(self.invalid("convergence", "cells", "space refinement needs at least two meshes of 4+ cells")),
            },
        }
        let mesh = self.mesh()?;
        let profile = CosineProfile { mean, amplitude, mode, rate, extent: mesh.extent, dim: mesh.dim };
        Ok((profile, c))
    }

    /// Directory of the config file, for resolving relative paths.
    pub fn base_dir(&self) -> &Path {
        self.path.parent().unwrap_or(Path::new("."))
    }
}

/// Separable cosine profile with exponential decay per species.
#[derive(Debug, Clone, PartialEq)]
pub struct CosineProfile {
    pub mean: Vec<f64>,
    pub amplitude: Vec<f64>,
    pub mode: Vec<u32>,
    pub rate: Vec<f64>,
    pub extent: Point,
    pub dim: usize,
}

impl CosineProfile {
    pub fn eval(&self, x: &Point, t: f64, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let mut shape = 1.0;
            for a in 0..self.dim {
                shape *= (self.mode[i] as f64 * PI * x[a] / self.extent[a]).cos();
            }
            *o = self.mean[i] + self.amplitude[i] * (-self.rate[i] * t).exp() * shape;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Loaded, ConfigError> {
        Loaded::parse(Path::new("test.toml"), text.to_string())
    }

    #[test]
    fn minimal_skt() {
        let l = parse("[model]\nname = \"skt\"\nalpha = [[1.0, 1.0, 1.0], [1.0, 1.0, 1.0]]\n").unwrap();
        assert_eq!(l.model().unwrap().name(), "skt");
        assert_eq!(l.epsilon().unwrap(), Epsilon::Search);
    }

    #[test]
    fn unknown_key_is_rejected_with_line() {
        let err = parse("[model]\nname = \"heat\"\n\n[grid]\ncels = 3\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("cels") && msg.contains("line 5"), "{msg}");
    }

    #[test]
    fn semantic_error_carries_key_and_line() {
        let err = parse("[model]\nname = \"heat\"\n\n[solver]\ndt = -1.0\n").unwrap_err();
        assert_eq!(err.to_string(), "test.toml:5: key `solver.dt`: must be positive");
        let err = parse("[model]\nname = \"semiconductor\"\nmu1 = 0.0\nmu2 = 1.0\n").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { ref key, .. } if key == "model.name"));
    }

    #[test]
    fn initial_must_stay_in_domain() {
        let err = parse("[model]\nname = \"heat\"\n[initial]\nmean = [0.9]\namplitude = [0.2]\n").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { ref key, line: 4, .. } if key == "initial.mean"), "{err}");
    }

    #[test]
    fn epsilon_keywords() {
        let l = parse("[model]\nname = \"heat\"\n[entropy]\nepsilon = 0.125\n").unwrap();
        assert_eq!(l.epsilon().unwrap(), Epsilon::Fixed(0.125));
        let l = parse("[model]\nname = \"heat\"\n[entropy]\nepsilon = \"none\"\n").unwrap();
        assert_eq!(l.epsilon().unwrap(), Epsilon::Raw);
        assert!(parse("[model]\nname = \"heat\"\n[entropy]\nepsilon = \"auto\"\n").is_err());
    }
}
