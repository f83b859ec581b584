//! Line-oriented experiment configs.
//!
//! ```text
//! # comment
//! seed = 7
//! [manifold]
//! kind = circle
//! [integrand]
//! family = weighted
//! space_dim = 1
//! a = sine:2,1,0
//! [tfhom]
//! point = 1, 0
//! slope = 0; 1
//! ```
//!
//! Keys inside `[section]` are addressed as `section.key`. Lists are comma
//! separated, matrix rows are separated by `;`. Every key must be consumed
//! by the selected command; leftovers are reported as unknown.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use mvhom_core::bv_rep::{fixtures, BvRecipe, Quadrature};
use mvhom_core::cell_solver::{default_recession_scales, CellConfig};
use mvhom_core::gamma_lab::{BoundaryCondition, GammaTolerances, ProjectionConfig, MIN_NODES_PER_PERIOD};
use mvhom_core::integrand::{Coefficient, Family, Integrand, RadialProfile, SamplerConfig};
use mvhom_core::interface_solver::InterfaceConfig;
use mvhom_core::linalg::Matrix;
use mvhom_core::manifold::ManifoldHandle;
use mvhom_core::optim::{Method, OptimConfig};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("config error at line {line}, key `{key}`: {message}")]
pub struct ConfigError {
    pub key: String,
    /// 0 when the key is missing.
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Tfhom,
    Theta,
    FhomEval,
    GammaSweep,
    Certify,
    Probes,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Tfhom,
        Command::Theta,
        Command::FhomEval,
        Command::GammaSweep,
        Command::Certify,
        Command::Probes,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Tfhom => "tfhom",
            Command::Theta => "theta",
            Command::FhomEval => "fhom-eval",
            Command::GammaSweep => "gamma-sweep",
            Command::Certify => "certify",
            Command::Probes => "probes",
        }
    }

    /// Config section of the command block.
    pub fn section(self) -> &'static str {
        match self {
            Command::Tfhom => "tfhom",
            Command::Theta => "theta",
            Command::FhomEval => "fhom",
            Command::GammaSweep => "gamma",
            Command::Certify => "certify",
            Command::Probes => "probes",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }
}

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

/// Parsed key/value pairs with usage tracking.
#[derive(Debug)]
pub struct RawConfig {
    entries: BTreeMap<String, Entry>,
    used: RefCell<BTreeSet<String>>,
}

fn err(key: &str, line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError {
        key: key.to_string(),
        line,
        message: message.into(),
    }
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| err(content, line, "unterminated section header"))?
                    .trim();
                if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                    return Err(err(name, line, "invalid section name"));
                }
                section = name.to_string();
                continue;
            }
            let (k, v) = content
                .split_once('=')
                .ok_or_else(|| err(content, line, "expected `key = value`"))?;
            let k = k.trim();
            if k.is_empty() || !k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.') {
                return Err(err(k, line, "invalid key"));
            }
            let key = if section.is_empty() {
                k.to_string()
            } else {
                format!("{section}.{k}")
            };
            let entry = Entry {
                value: v.trim().to_string(),
                line,
            };
            if let Some(prev) = entries.insert(key.clone(), entry) {
                return Err(err(&key, line, format!("duplicate key, first set at line {}", prev.line)));
            }
        }
        Ok(Self {
            entries,
            used: RefCell::new(BTreeSet::new()),
        })
    }

    fn entry(&self, key: &str) -> Option<&Entry> {
        let e = self.entries.get(key);
        if e.is_some() {
            self.used.borrow_mut().insert(key.to_string());
        }
        e
    }

    pub fn has(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn has_section(&self, section: &str) -> bool {
        let prefix = format!("{section}.");
        self.entries.keys().any(|k| k.starts_with(&prefix))
    }

    fn parsed<T>(&self, key: &str, f: impl FnOnce(&str) -> Result<T, String>) -> Result<Option<T>, ConfigError> {
        match self.entry(key) {
            None => Ok(None),
            Some(e) => f(&e.value).map(Some).map_err(|m| err(key, e.line, m)),
        }
    }

    fn required<T>(&self, key: &str, v: Option<T>) -> Result<T, ConfigError> {
        v.ok_or_else(|| err(key, 0, "missing required key"))
    }

    pub fn str_opt(&self, key: &str) -> Option<String> {
        self.entry(key).map(|e| e.value.clone())
    }

    pub fn str(&self, key: &str) -> Result<String, ConfigError> {
        let v = self.str_opt(key);
        self.required(key, v)
    }

    pub fn f64_opt(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.parsed(key, parse_f64)
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.f64_opt(key)?.unwrap_or(default))
    }

    pub fn usize_opt(&self, key: &str) -> Result<Option<usize>, ConfigError> {
        self.parsed(key, |s| s.parse::<usize>().map_err(|_| format!("`{s}` is not a nonnegative integer")))
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        Ok(self.usize_opt(key)?.unwrap_or(default))
    }

    pub fn u64_opt(&self, key: &str) -> Result<Option<u64>, ConfigError> {
        self.parsed(key, |s| s.parse::<u64>().map_err(|_| format!("`{s}` is not a u64")))
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool, ConfigError> {
        Ok(self
            .parsed(key, |s| match s {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                _ => Err(format!("`{s}` is not a boolean")),
            })?
            .unwrap_or(default))
    }

    pub fn vec_opt(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        self.parsed(key, parse_list)
    }

    pub fn vec(&self, key: &str) -> Result<Vec<f64>, ConfigError> {
        let v = self.vec_opt(key)?;
        self.required(key, v)
    }

    pub fn usize_list_opt(&self, key: &str) -> Result<Option<Vec<usize>>, ConfigError> {
        self.parsed(key, |s| {
            s.split(',')
                .map(|t| t.trim().parse::<usize>().map_err(|_| format!("`{t}` is not a nonnegative integer")))
                .collect()
        })
    }

    /// Rows separated by `;`, entries by `,`.
    pub fn matrix(&self, key: &str) -> Result<Matrix, ConfigError> {
        let m = self.parsed(key, |s| {
            let rows: Vec<Vec<f64>> = s.split(';').map(parse_list).collect::<Result<_, _>>()?;
            let cols = rows[0].len();
            if rows.iter().any(|r| r.len() != cols) {
                return Err("matrix rows have different lengths".into());
            }
            let columns: Vec<Vec<f64>> = (0..cols).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
            Ok(Matrix::from_columns(&columns))
        })?;
        self.required(key, m)
    }

    pub fn line_of(&self, key: &str) -> usize {
        self.entries.get(key).map_or(0, |e| e.line)
    }

    /// First key that was never read.
    pub fn check_all_used(&self) -> Result<(), ConfigError> {
        let used = self.used.borrow();
        match self.entries.iter().find(|(k, _)| !used.contains(*k)) {
            None => Ok(()),
            Some((k, e)) => Err(err(k, e.line, "unknown key for this command")),
        }
    }
}

fn parse_f64(s: &str) -> Result<f64, String> {
    let v = s.trim().parse::<f64>().map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    let v: Vec<f64> = s.split(',').map(parse_f64).collect::<Result<_, _>>()?;
    if v.is_empty() {
        Err("empty list".into())
    } else {
        Ok(v)
    }
}

/// Densities used by commands that evaluate F_hom.
#[derive(Debug, Clone)]
pub enum DensityChoice {
    Closed { bulk_scale: f64, surface_scale: f64 },
    Solver { cell: CellConfig, interface: InterfaceConfig, max_slope: f64 },
}

#[derive(Debug, Clone)]
pub enum ProbeKind {
    Convexity {
        point: Vec<f64>,
        slope: Matrix,
        direction: Vec<f64>,
        nu: Vec<f64>,
        lambdas: Vec<f64>,
        tol: f64,
        cell: CellConfig,
    },
    Basis {
        a: Vec<f64>,
        b: Vec<f64>,
        nu: Vec<f64>,
        interface: InterfaceConfig,
    },
    Regularity {
        pairs: usize,
        nu: Vec<f64>,
        interface: InterfaceConfig,
        refine: bool,
        max_lipschitz: f64,
        max_ratio: f64,
        refinement_tol: f64,
    },
    Projection {
        cells: usize,
        dip: f64,
        projection: ProjectionConfig,
    },
}

#[derive(Debug, Clone)]
pub enum CommandBlock {
    Tfhom {
        point: Vec<f64>,
        slope: Matrix,
        cell: CellConfig,
        recession: bool,
        scales: Vec<f64>,
    },
    Theta {
        a: Vec<f64>,
        b: Vec<f64>,
        nu: Vec<f64>,
        interface: InterfaceConfig,
    },
    FhomEval {
        recipe: BvRecipe,
        densities: DensityChoice,
        quadrature: Quadrature,
    },
    GammaSweep {
        eps: Vec<f64>,
        nodes_per_period: usize,
        boundary: BoundaryCondition,
        recipe: BvRecipe,
        densities: DensityChoice,
        perturbation: f64,
        width_exponent: f64,
        tolerances: GammaTolerances,
    },
    Certify {
        sampler: SamplerConfig,
    },
    Probes {
        probe: ProbeKind,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PlotKind {
    Trace,
    Field1d,
    Interface2d,
}

impl PlotKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "trace" => Some(PlotKind::Trace),
            "field-1d" => Some(PlotKind::Field1d),
            "interface-2d" => Some(PlotKind::Interface2d),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PlotKind::Trace => "trace",
            PlotKind::Field1d => "field-1d",
            PlotKind::Interface2d => "interface-2d",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub command: Command,
    pub seed: u64,
    pub manifold: ManifoldHandle,
    pub integrand: Integrand,
    pub optim: OptimConfig,
    pub block: CommandBlock,
    pub plots: Vec<PlotKind>,
    pub out_dir: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    /// Parses `text` for `command`. `seed` overrides the config seed; one
    /// of the two must be present. Relative paths resolve against `base`.
    pub fn parse(text: &str, command: Command, seed: Option<u64>, base: &Path) -> Result<Self, ConfigError> {
        let raw = RawConfig::parse(text)?;
        let cfg = build(&raw, command, seed, base)?;
        raw.check_all_used()?;
        Ok(cfg)
    }
}

fn build(raw: &RawConfig, command: Command, seed_override: Option<u64>, base: &Path) -> Result<ExperimentConfig, ConfigError> {
    if let Some(c) = raw.str_opt("command") {
        if c != command.name() {
            return Err(err("command", raw.line_of("command"), format!("config is for `{c}`, not `{}`", command.name())));
        }
    }
    let seed = match (seed_override, raw.u64_opt("seed")?) {
        (Some(s), _) | (None, Some(s)) => s,
        (None, None) => return Err(err("seed", 0, "a seed is mandatory")),
    };
    let manifold = manifold(raw)?;
    let integrand = integrand(raw, manifold.ambient_dim(), base)?;
    let optim = optim(raw)?;
    let section = command.section();
    if !raw.has_section(section) && command != Command::Certify {
        return Err(err(section, 0, "missing command section"));
    }
    let n = integrand.space_dim();
    let d = manifold.ambient_dim();
    let key = |k: &str| format!("{section}.{k}");
    let cell = |prefix: &str| -> Result<CellConfig, ConfigError> {
        let mut c = CellConfig::default_for(n);
        c.n = raw.usize_or(&format!("{prefix}.n"), c.n)?;
        if let Some(s) = raw.usize_list_opt(&format!("{prefix}.schedule"))? {
            c.schedule = s;
        }
        c.optim = optim.clone();
        Ok(c)
    };
    let interface = |prefix: &str| -> Result<InterfaceConfig, ConfigError> {
        let mut c = InterfaceConfig::default_for(n);
        c.n = raw.usize_or(&format!("{prefix}.n"), c.n)?;
        if let Some(s) = raw.usize_list_opt(&format!("{prefix}.schedule"))? {
            c.schedule = s;
        }
        c.cross_check = raw.bool_or(&format!("{prefix}.cross_check"), c.cross_check)?;
        c.cross_tol = raw.f64_or(&format!("{prefix}.cross_tol"), c.cross_tol)?;
        c.optim = optim.clone();
        Ok(c)
    };
    let vec_dim = |k: &str, len: usize| -> Result<Vec<f64>, ConfigError> {
        let v = raw.vec(k)?;
        if v.len() != len {
            return Err(err(k, raw.line_of(k), format!("expected {len} entries, got {}", v.len())));
        }
        Ok(v)
    };
    let densities = |prefix: &str| -> Result<DensityChoice, ConfigError> {
        let k = format!("{prefix}.densities");
        match raw.str_opt(&k).as_deref().unwrap_or("closed") {
            "closed" => Ok(DensityChoice::Closed {
                bulk_scale: raw.f64_or(&format!("{prefix}.bulk_scale"), 1.0)?,
                surface_scale: raw.f64_or(&format!("{prefix}.surface_scale"), 1.0)?,
            }),
            "solver" => Ok(DensityChoice::Solver {
                cell: cell(&format!("{prefix}.cell"))?,
                interface: interface(&format!("{prefix}.interface"))?,
                max_slope: raw.f64_or(&format!("{prefix}.max_slope"), 100.0)?,
            }),
            other => Err(err(&k, raw.line_of(&k), format!("unknown densities `{other}`"))),
        }
    };
    let recipe = |prefix: &str| -> Result<BvRecipe, ConfigError> {
        let k = format!("{prefix}.recipe");
        let line = raw.line_of(&k);
        let spec = raw.str(&k)?;
        let fail = |m: String| err(&k, line, m);
        match spec.split_once(':').map_or((spec.as_str(), ""), |(a, b)| (a, b)) {
            ("builtin", name) => match name {
                "full-turn" => Ok(fixtures::full_turn(n, d)),
                "staircase" => Ok(fixtures::staircase_turn(
                    n,
                    d,
                    raw.usize_or(&format!("{prefix}.depth"), mvhom_core::bv_rep::DEFAULT_CANTOR_DEPTH as usize)? as u32,
                )),
                "jump" => Ok(fixtures::single_jump(
                    n,
                    vec_dim(&format!("{prefix}.a"), d)?,
                    vec_dim(&format!("{prefix}.b"), d)?,
                )),
                "normal-gradient" => Ok(fixtures::normal_gradient(n, d)),
                other => Err(fail(format!("unknown builtin recipe `{other}`"))),
            },
            ("file", path) => {
                let p = base.join(path.trim());
                let text = std::fs::read_to_string(&p).map_err(|e| fail(format!("cannot read {}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| fail(format!("invalid recipe JSON: {e}")))
            }
            _ => Err(fail("expected `builtin:<name>` or `file:<path>`".into())),
        }
    };
    let block = match command {
        Command::Tfhom => {
            let slope = raw.matrix(&key("slope"))?;
            if slope.rows() != d || slope.cols() != n {
                return Err(err(&key("slope"), raw.line_of(&key("slope")), format!("expected a {d}×{n} matrix")));
            }
            CommandBlock::Tfhom {
                point: vec_dim(&key("point"), d)?,
                slope,
                cell: cell(section)?,
                recession: raw.bool_or(&key("recession"), false)?,
                scales: raw.vec_opt(&key("scales"))?.unwrap_or_else(default_recession_scales),
            }
        }
        Command::Theta => CommandBlock::Theta {
            a: vec_dim(&key("a"), d)?,
            b: vec_dim(&key("b"), d)?,
            nu: vec_dim(&key("nu"), n)?,
            interface: interface(section)?,
        },
        Command::FhomEval => {
            let mut q = Quadrature::default();
            q.points_1d = raw.usize_or(&key("points_1d"), q.points_1d)?;
            q.points_per_axis_2d = raw.usize_or(&key("points_per_axis_2d"), q.points_per_axis_2d)?;
            CommandBlock::FhomEval {
                recipe: recipe(section)?,
                densities: densities(section)?,
                quadrature: q,
            }
        }
        Command::GammaSweep => {
            let kb = key("boundary");
            let boundary = match raw.str_opt(&kb).as_deref().unwrap_or("dirichlet") {
                "dirichlet" => BoundaryCondition::Dirichlet {
                    a: vec_dim(&key("a"), d)?,
                    b: vec_dim(&key("b"), d)?,
                },
                "free" => BoundaryCondition::Free,
                other => return Err(err(&kb, raw.line_of(&kb), format!("unknown boundary `{other}`"))),
            };
            let defaults = GammaTolerances::default();
            CommandBlock::GammaSweep {
                eps: raw.vec(&key("eps"))?,
                nodes_per_period: raw.usize_or(&key("nodes_per_period"), MIN_NODES_PER_PERIOD)?,
                boundary,
                recipe: recipe(section)?,
                densities: densities(section)?,
                perturbation: raw.f64_or(&key("perturbation"), 1e-3)?,
                width_exponent: raw.f64_or(&key("width_exponent"), 0.5)?,
                tolerances: GammaTolerances {
                    monotone: raw.f64_or(&key("tol_monotone"), defaults.monotone)?,
                    limit: raw.f64_or(&key("tol_limit"), defaults.limit)?,
                    lower_bound: raw.f64_or(&key("tol_lower_bound"), defaults.lower_bound)?,
                    recovery: raw.f64_or(&key("tol_recovery"), defaults.recovery)?,
                },
            }
        }
        Command::Certify => {
            let defaults = SamplerConfig::default();
            CommandBlock::Certify {
                sampler: SamplerConfig {
                    seed,
                    samples: raw.usize_or(&key("samples"), defaults.samples)?,
                    max_norm: raw.f64_or(&key("max_norm"), defaults.max_norm)?,
                },
            }
        }
        Command::Probes => {
            let kk = key("kind");
            let probe = match raw.str(&kk)?.as_str() {
                "convexity" => {
                    let slope = raw.matrix(&key("slope"))?;
                    if slope.rows() != d || slope.cols() != n {
                        return Err(err(&key("slope"), raw.line_of(&key("slope")), format!("expected a {d}×{n} matrix")));
                    }
                    ProbeKind::Convexity {
                        point: vec_dim(&key("point"), d)?,
                        slope,
                        direction: vec_dim(&key("direction"), d)?,
                        nu: vec_dim(&key("nu"), n)?,
                        lambdas: raw.vec_opt(&key("lambdas"))?.unwrap_or_else(|| vec![-1.0, -0.5, 0.0, 0.5, 1.0]),
                        tol: raw.f64_or(&key("tol"), 0.01)?,
                        cell: cell(section)?,
                    }
                }
                "basis" => ProbeKind::Basis {
                    a: vec_dim(&key("a"), d)?,
                    b: vec_dim(&key("b"), d)?,
                    nu: vec_dim(&key("nu"), n)?,
                    interface: interface(section)?,
                },
                "regularity" => ProbeKind::Regularity {
                    pairs: raw.usize_or(&key("pairs"), 10)?,
                    nu: vec_dim(&key("nu"), n)?,
                    interface: interface(section)?,
                    refine: raw.bool_or(&key("refine"), true)?,
                    max_lipschitz: raw.f64_or(&key("max_lipschitz"), 1e3)?,
                    max_ratio: raw.f64_or(&key("max_ratio"), 1e3)?,
                    refinement_tol: raw.f64_or(&key("refinement_tol"), 0.2)?,
                },
                "projection" => ProbeKind::Projection {
                    cells: raw.usize_or(&key("cells"), 32)?,
                    dip: raw.f64_or(&key("dip"), 0.5)?,
                    projection: ProjectionConfig {
                        shifts: raw.usize_or(&key("shifts"), 64)?,
                        radius: raw.f64_or(&key("radius"), 0.5)?,
                        seed,
                    },
                },
                other => return Err(err(&kk, raw.line_of(&kk), format!("unknown probe `{other}`"))),
            };
            CommandBlock::Probes { probe }
        }
    };
    let plots = match raw.str_opt("output.plots") {
        None => vec![],
        Some(s) => s
            .split(',')
            .map(|t| {
                PlotKind::parse(t.trim())
                    .ok_or_else(|| err("output.plots", raw.line_of("output.plots"), format!("unknown plot kind `{}`", t.trim())))
            })
            .collect::<Result<_, _>>()?,
    };
    Ok(ExperimentConfig {
        command,
        seed,
        manifold,
        integrand,
        optim,
        block,
        plots,
        out_dir: raw.str_opt("output.dir").map(|p| base.join(p)),
        threads: raw.usize_opt("threads")?,
    })
}

fn manifold(raw: &RawConfig) -> Result<ManifoldHandle, ConfigError> {
    let line = raw.line_of("manifold.kind");
    match raw.str("manifold.kind")?.as_str() {
        "circle" => Ok(ManifoldHandle::circle()),
        "sphere" => {
            let dim = raw.usize_opt("manifold.ambient_dim")?.ok_or_else(|| err("manifold.ambient_dim", 0, "missing required key"))?;
            ManifoldHandle::sphere(dim).map_err(|e| err("manifold.ambient_dim", raw.line_of("manifold.ambient_dim"), e.to_string()))
        }
        other => Err(err("manifold.kind", line, format!("unknown manifold `{other}`"))),
    }
}

fn coefficient(raw: &RawConfig, key: &str, default: Option<&str>, base: &Path) -> Result<Coefficient, ConfigError> {
    let line = raw.line_of(key);
    let text = match (raw.str_opt(key), default) {
        (Some(t), _) => t,
        (None, Some(d)) => d.to_string(),
        (None, None) => return Err(err(key, 0, "missing required key")),
    };
    let text = match text.strip_prefix("lattice:") {
        Some(p) => format!("lattice:{}", base.join(p.trim()).display()),
        None => text,
    };
    Coefficient::parse(&text).map_err(|e| err(key, line, e.to_string()))
}

fn integrand(raw: &RawConfig, target_dim: usize, base: &Path) -> Result<Integrand, ConfigError> {
    let n = raw.usize_opt("integrand.space_dim")?.ok_or_else(|| err("integrand.space_dim", 0, "missing required key"))?;
    let family_line = raw.line_of("integrand.family");
    let a = coefficient(raw, "integrand.a", Some("const:1"), base)?;
    let family = match raw.str("integrand.family")?.as_str() {
        "weighted" => Family::WeightedNorm { a },
        "anisotropic" => Family::Anisotropic {
            a,
            b: coefficient(raw, "integrand.b", None, base)?,
            direction: Arc::new(raw.vec("integrand.direction")?),
        },
        "nonconvex" => Family::SmoothedNonconvex {
            a,
            bump: raw.f64_or("integrand.bump", 0.5)?,
        },
        "tabulated" => {
            let line = raw.line_of("integrand.profile");
            let knots = raw.str("integrand.profile")?;
            let pairs: Result<Vec<(f64, f64)>, String> = knots
                .split(',')
                .map(|kv| {
                    let (r, h) = kv.split_once(':').ok_or_else(|| format!("knot `{kv}` is not `r:h`"))?;
                    Ok((parse_f64(r)?, parse_f64(h)?))
                })
                .collect();
            let pairs = pairs.map_err(|m| err("integrand.profile", line, m))?;
            let profile = RadialProfile::new(pairs).map_err(|e| err("integrand.profile", line, e.to_string()))?;
            Family::Tabulated {
                a,
                profile: Arc::new(profile),
            }
        }
        other => return Err(err("integrand.family", family_line, format!("unknown family `{other}`"))),
    };
    let offset = raw.f64_or("integrand.offset", 0.0)?;
    Integrand::new(family, n, target_dim)
        .map(|f| f.with_offset(offset))
        .map_err(|e| err("integrand.family", family_line, e.to_string()))
}

fn optim(raw: &RawConfig) -> Result<OptimConfig, ConfigError> {
    let mut o = OptimConfig::default();
    if let Some(m) = raw.str_opt("optim.method") {
        o.method = match m.as_str() {
            "lbfgs" => Method::Lbfgs,
            "accelerated" => Method::Accelerated,
            other => return Err(err("optim.method", raw.line_of("optim.method"), format!("unknown method `{other}`"))),
        };
    }
    o.mu = raw.f64_or("optim.mu", o.mu)?;
    o.mu_start = raw.f64_or("optim.mu_start", o.mu_start)?;
    o.max_iter = raw.usize_or("optim.max_iter", o.max_iter)?;
    o.rel_tol = raw.f64_or("optim.rel_tol", o.rel_tol)?;
    o.grad_tol = raw.f64_or("optim.grad_tol", o.grad_tol)?;
    o.window = raw.usize_or("optim.window", o.window)?;
    if !(o.mu > 0.0) || o.max_iter == 0 {
        return Err(err("optim.mu", raw.line_of("optim.mu"), "mu must be positive and max_iter nonzero"));
    }
    Ok(o)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_prefix_keys_and_comments_are_stripped() {
        let raw = RawConfig::parse("seed = 3 # trailing\n[tfhom]\npoint = 1, 0\n").unwrap();
        assert_eq!(raw.u64_opt("seed").unwrap(), Some(3));
        assert_eq!(raw.vec("tfhom.point").unwrap(), vec![1.0, 0.0]);
        assert!(raw.check_all_used().is_ok());
    }

    #[test]
    fn malformed_lines_name_the_key_and_line() {
        let e = RawConfig::parse("seed = 1\n[theta]\nn 12\n").unwrap_err();
        assert_eq!(e.line, 3);
        let e = RawConfig::parse("a = 1\na = 2\n").unwrap_err();
        assert_eq!((e.key.as_str(), e.line), ("a", 2));
        let raw = RawConfig::parse("[theta]\nn = twelve\n").unwrap();
        let e = raw.usize_opt("theta.n").unwrap_err();
        assert_eq!((e.key.as_str(), e.line), ("theta.n", 2));
    }

    #[test]
    fn matrices_are_read_by_rows() {
        let raw = RawConfig::parse("m = 1, 2; 3, 4; 5, 6\n").unwrap();
        let m = raw.matrix("m").unwrap();
        assert_eq!((m.rows(), m.cols()), (3, 2));
        assert_eq!(m.get(2, 1), 6.0);
    }
}
