//! TOML run configuration: parsing, defaults and validation.
//!
//! Sections mirror the library modules: `[grid]`, `[physics]`, `[qode]`,
//! `[initial]`, `[time]`, `[integrator]`, `[reference]`, `[sweep]`, `[run]`
//! and `[output]`. Validation collects every violation before reporting.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use vlasov_carleman::carleman::{DEFAULT_MAX_D_A, DEFAULT_NNZ_BUDGET};
use vlasov_carleman::integrator::DEFAULT_ENCODING_NNZ_BUDGET;
use vlasov_carleman::physics::{self, CollisionProfile, MaxwellianNormalization, PhysicalConstants};
use vlasov_carleman::Coupling;

/// Environment variable that overrides the output directory.
pub const OUT_DIR_ENV: &str = "VLASOV_CARLEMAN_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Analyze,
    Feasibility,
    RunCarleman,
    RunReference,
    Compare,
    Sweep,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Analyze => "analyze",
            Mode::Feasibility => "feasibility",
            Mode::RunCarleman => "run-carleman",
            Mode::RunReference => "run-reference",
            Mode::Compare => "compare",
            Mode::Sweep => "sweep",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [Mode::Analyze, Mode::Feasibility, Mode::RunCarleman, Mode::RunReference, Mode::Compare, Mode::Sweep]
            .into_iter()
            .find(|m| m.name() == s)
    }
}

/// All violations found while validating a config.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub violations: Vec<String>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "invalid configuration ({} problem{}):",
            self.violations.len(),
            if self.violations.len() == 1 { "" } else { "s" }
        )?;
        for v in &self.violations {
            write!(f, "\n  - {v}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

// ---- raw TOML layer ----

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum NumOrWord {
    Num(f64),
    Word(String),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    grid: Option<RawGrid>,
    physics: Option<RawPhysics>,
    qode: Option<RawQode>,
    initial: Option<RawInitial>,
    time: Option<RawTime>,
    integrator: Option<RawIntegrator>,
    reference: Option<RawReference>,
    sweep: Option<RawSweep>,
    run: Option<RawRun>,
    output: Option<RawOutput>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    nx: Option<i64>,
    nv: Option<i64>,
    x_max: Option<f64>,
    v_max: Option<NumOrWord>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPhysics {
    normalized: Option<bool>,
    ncal: Option<f64>,
    b: Option<f64>,
    temperature: Option<f64>,
    nu0: Option<NumOrWord>,
    nbar: Option<f64>,
    log_lambda: Option<f64>,
    collision: Option<NumOrWord>,
    maxwellian: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQode {
    coupling: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    kind: Option<String>,
    j: Option<i64>,
    path: Option<PathBuf>,
    perturbation: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTime {
    t: Option<f64>,
    eps_q: Option<f64>,
    eps_c: Option<f64>,
    nc: Option<i64>,
    k: Option<i64>,
    tau: Option<f64>,
    norm_a: Option<String>,
    u_t_norm: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIntegrator {
    solver: Option<String>,
    max_d_a: Option<i64>,
    max_nnz: Option<i64>,
    max_encoding_nnz: Option<i64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReference {
    order: Option<i64>,
    tolerance: Option<f64>,
    steps: Option<i64>,
    snapshots: Option<i64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    variable: Option<String>,
    values: Option<Vec<i64>>,
    grids: Option<Vec<Vec<i64>>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    mode: Option<String>,
    seed: Option<i64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
    formats: Option<Vec<String>>,
}

// ---- validated layer ----

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VMaxPolicy {
    Fixed,
    /// `10/√b`.
    Thermal,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridConfig {
    pub nx: usize,
    pub nv: usize,
    pub x_max: f64,
    pub v_max: f64,
    pub v_max_policy: VMaxPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhysicsConfig {
    pub normalized: bool,
    pub ncal: f64,
    pub b: f64,
    /// Derived from `b` when not given.
    pub temperature: f64,
    pub nu0: f64,
    pub nu0_from_model: bool,
    pub nbar: Option<f64>,
    pub log_lambda: f64,
    pub collision: CollisionProfile,
    pub maxwellian: MaxwellianNormalization,
}

impl PhysicsConfig {
    pub fn constants(&self) -> PhysicalConstants {
        if self.normalized {
            PhysicalConstants::normalized()
        } else {
            PhysicalConstants::SI
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialKind {
    TwoBeam { j: usize },
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitialConfig {
    #[serde(flatten)]
    pub kind: InitialKind,
    /// Relative amplitude of seeded multiplicative noise.
    pub perturbation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NormAPolicy {
    Bound,
    Computed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UtNormPolicy {
    /// From a reference solve of the rescaled system.
    Measured,
    /// From the Maxwellian target.
    Maxwellian,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeConfig {
    pub t: f64,
    pub eps_q: f64,
    pub eps_c: f64,
    pub nc: Option<usize>,
    pub k: Option<usize>,
    pub tau: Option<f64>,
    pub norm_a: NormAPolicy,
    pub u_t_norm: UtNormPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Iterative,
    Encoding,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegratorConfig {
    pub solver: Solver,
    pub max_d_a: usize,
    pub max_nnz: usize,
    pub max_encoding_nnz: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceConfig {
    pub order: usize,
    /// Richardson target relative to `‖u_in‖`.
    pub tolerance: f64,
    /// Fixed step count; refinement is used when absent.
    pub steps: Option<usize>,
    pub snapshots: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "variable", rename_all = "snake_case")]
pub enum SweepConfig {
    Nc { values: Vec<usize> },
    Grid { grids: Vec<(usize, usize)> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
    Txt,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub formats: BTreeSet<Format>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub mode: Mode,
    pub seed: u64,
    pub grid: GridConfig,
    pub physics: PhysicsConfig,
    pub coupling: Coupling,
    pub initial: InitialConfig,
    pub time: Option<TimeConfig>,
    pub integrator: IntegratorConfig,
    pub reference: ReferenceConfig,
    pub sweep: Option<SweepConfig>,
    #[serde(skip)]
    pub output: OutputConfig,
}

impl RunConfig {
    /// The `[time]` section; validation guarantees it for modes that need it.
    pub fn time(&self) -> &TimeConfig {
        self.time.as_ref().expect("validated config has a [time] section for this mode")
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub seed: Option<u64>,
    pub normalized: bool,
    pub out: Option<PathBuf>,
    /// Value of [`OUT_DIR_ENV`], passed in so parsing stays pure.
    pub env_out: Option<PathBuf>,
}

struct Check {
    violations: Vec<String>,
}

impl Check {
    fn fail(&mut self, msg: impl Into<String>) {
        self.violations.push(msg.into());
    }

    fn required<T>(&mut self, v: Option<T>, key: &str) -> Option<T> {
        if v.is_none() {
            self.fail(format!("missing key {key}"));
        }
        v
    }

    fn positive(&mut self, v: Option<f64>, key: &str) -> Option<f64> {
        match v {
            Some(x) if x.is_finite() && x > 0.0 => Some(x),
            Some(x) => {
                self.fail(format!("{key} must be a positive number (got {x})"));
                None
            }
            None => None,
        }
    }

    fn count(&mut self, v: Option<i64>, key: &str, min: i64) -> Option<usize> {
        match v {
            Some(x) if x >= min => Some(x as usize),
            Some(x) => {
                self.fail(format!("{key} must be at least {min} (got {x})"));
                None
            }
            None => None,
        }
    }

    fn word<T>(&mut self, v: Option<&str>, key: &str, default: T, choices: &[(&str, T)]) -> Option<T>
    where
        T: Copy,
    {
        let Some(s) = v else { return Some(default) };
        match choices.iter().find(|(name, _)| *name == s) {
            Some(&(_, t)) => Some(t),
            None => {
                let names: Vec<&str> = choices.iter().map(|(n, _)| *n).collect();
                self.fail(format!("{key} must be one of {} (got \"{s}\")", names.join(", ")));
                None
            }
        }
    }
}

/// Reads and validates the config at `path`. Relative CSV paths resolve
/// against the config's directory.
pub fn parse_config(path: &Path, ov: &Overrides) -> anyhow::Result<RunConfig> {
    let text =
        std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("config: cannot read {}: {e}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(parse_str(&text, base, ov)?)
}

pub fn parse_str(text: &str, base: &Path, ov: &Overrides) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig =
        toml::from_str(text).map_err(|e| ConfigError { violations: vec![format!("config syntax: {e}")] })?;
    validate(raw, base, ov)
}

fn validate(raw: RawConfig, base: &Path, ov: &Overrides) -> Result<RunConfig, ConfigError> {
    let mut c = Check { violations: Vec::new() };
    let run = raw.run.unwrap_or_default();

    let mode = match (ov.mode, run.mode.as_deref()) {
        (Some(m), _) => Some(m),
        (None, Some(s)) => {
            let m = Mode::parse(s);
            if m.is_none() {
                c.fail(format!(
                    "run.mode must be one of analyze, feasibility, run-carleman, run-reference, compare, sweep (got \"{s}\")"
                ));
            }
            m
        }
        (None, None) => {
            c.fail("missing key run.mode (or pass a subcommand)");
            None
        }
    };
    let seed = match (ov.seed, run.seed) {
        (Some(s), _) => s,
        (None, Some(s)) if s >= 0 => s as u64,
        (None, Some(s)) => {
            c.fail(format!("run.seed must be nonnegative (got {s})"));
            0
        }
        (None, None) => 0,
    };

    // physics first: the thermal v_max policy needs b
    let ph = raw.physics.unwrap_or_default();
    let normalized = ov.normalized || ph.normalized.unwrap_or(false);
    let constants = if normalized { PhysicalConstants::normalized() } else { PhysicalConstants::SI };
    let ncal = c.required(ph.ncal, "physics.ncal").and_then(|v| c.positive(Some(v), "physics.ncal"));
    let temperature_in = c.positive(ph.temperature, "physics.temperature");
    let b_in = c.positive(ph.b, "physics.b");
    let b = match (b_in, temperature_in, ph.b.is_some(), ph.temperature.is_some()) {
        (_, _, true, true) => {
            c.fail("physics.b and physics.temperature are mutually exclusive");
            None
        }
        (Some(b), _, _, _) => Some(b),
        (_, Some(t), _, _) => physics::decay_factor(&constants, t).ok(),
        (_, _, false, false) => {
            c.fail("missing key physics.b (or physics.temperature)");
            None
        }
        _ => None,
    };
    let temperature = b.map(|b| constants.m_e / (2.0 * constants.k_b * b));
    let log_lambda = c.positive(ph.log_lambda.or(Some(10.0)), "physics.log_lambda").unwrap_or(10.0);
    let nbar = c.positive(ph.nbar, "physics.nbar");
    let (nu0, nu0_from_model) = match ph.nu0 {
        Some(NumOrWord::Num(x)) => (c.positive(Some(x), "physics.nu0"), false),
        Some(NumOrWord::Word(w)) if w == "model" => match (nbar, temperature) {
            (Some(n), Some(t)) => (physics::collision_frequency_model(&constants, n, t, log_lambda).ok(), true),
            (None, _) => {
                c.fail("physics.nu0 = \"model\" needs physics.nbar");
                (None, true)
            }
            _ => (None, true),
        },
        Some(NumOrWord::Word(w)) => {
            c.fail(format!("physics.nu0 must be a positive number or \"model\" (got \"{w}\")"));
            (None, false)
        }
        None => {
            c.fail("missing key physics.nu0");
            (None, false)
        }
    };
    let maxwellian = c.word(
        ph.maxwellian.as_deref(),
        "physics.maxwellian",
        MaxwellianNormalization::HalfMass,
        &[("half_mass", MaxwellianNormalization::HalfMass), ("unit_mass", MaxwellianNormalization::UnitMass)],
    );

    let gr = raw.grid.unwrap_or_default();
    let nx = c.required(gr.nx, "grid.nx").and_then(|v| c.count(Some(v), "grid.nx", 1));
    let nv = c.required(gr.nv, "grid.nv").and_then(|v| c.count(Some(v), "grid.nv", 2));
    if let Some(n) = nv {
        if !n.is_multiple_of(2) {
            c.fail(format!("grid.nv must be even so the velocity grid excludes v = 0 (got {n})"));
        }
    }
    let x_max = c.required(gr.x_max, "grid.x_max").and_then(|v| c.positive(Some(v), "grid.x_max"));
    let (v_max, v_max_policy) = match gr.v_max {
        Some(NumOrWord::Num(x)) => (c.positive(Some(x), "grid.v_max"), VMaxPolicy::Fixed),
        Some(NumOrWord::Word(w)) if w == "thermal" => (b.map(physics::thermal_v_max), VMaxPolicy::Thermal),
        Some(NumOrWord::Word(w)) => {
            c.fail(format!("grid.v_max must be a positive number or \"thermal\" (got \"{w}\")"));
            (None, VMaxPolicy::Fixed)
        }
        None => {
            c.fail("missing key grid.v_max");
            (None, VMaxPolicy::Fixed)
        }
    };

    let collision = match ph.collision {
        None => Some(CollisionProfile::Zero),
        Some(NumOrWord::Word(w)) if w == "zero" => Some(CollisionProfile::Zero),
        Some(NumOrWord::Word(w)) if w == "default" => match (nu0, v_max) {
            (Some(n), Some(v)) => Some(CollisionProfile::default_for(n, v)),
            _ => None,
        },
        Some(NumOrWord::Num(x)) if x.is_finite() && x >= 0.0 => Some(CollisionProfile::Quadratic { coefficient: x }),
        Some(NumOrWord::Num(x)) => {
            c.fail(format!("physics.collision coefficient must be nonnegative (got {x})"));
            None
        }
        Some(NumOrWord::Word(w)) => {
            c.fail(format!("physics.collision must be \"zero\", \"default\" or a coefficient (got \"{w}\")"));
            None
        }
    };

    let coupling = c.word(
        raw.qode.unwrap_or_default().coupling.as_deref(),
        "qode.coupling",
        Coupling::Gauss,
        &[("gauss", Coupling::Gauss), ("ampere", Coupling::Ampere)],
    );
    if coupling == Some(Coupling::Ampere) {
        let needs_carleman = matches!(mode, Some(Mode::RunCarleman | Mode::Compare))
            || (mode == Some(Mode::Sweep) && raw.sweep.as_ref().and_then(|s| s.variable.as_deref()) == Some("nc"));
        if needs_carleman {
            c.fail(format!(
                "qode.coupling = \"ampere\" cannot be used with mode {}: the field components give F1 zero columns, so mu(F1) >= 0 and the Carleman series does not converge (use mode analyze for the diagnosis)",
                mode.map_or("?", |m| m.name())
            ));
        }
    }

    let ini = raw.initial.unwrap_or_default();
    let kind = match ini.kind.as_deref().unwrap_or("two_beam") {
        "two_beam" => {
            if ini.path.is_some() {
                c.fail("initial.path is only used with initial.kind = \"csv\"");
            }
            let j = c.count(ini.j.or(Some(1)), "initial.j", 1);
            if let (Some(j), Some(nv)) = (j, nv) {
                if j > nv / 2 {
                    c.fail(format!("initial.j must be in 1..={} for N_v = {nv} (got {j})", nv / 2));
                }
            }
            j.map(|j| InitialKind::TwoBeam { j })
        }
        "csv" => {
            if ini.j.is_some() {
                c.fail("initial.j is only used with initial.kind = \"two_beam\"");
            }
            c.required(ini.path, "initial.path")
                .map(|p| InitialKind::Csv { path: if p.is_absolute() { p } else { base.join(p) } })
        }
        other => {
            c.fail(format!("initial.kind must be \"two_beam\" or \"csv\" (got \"{other}\")"));
            None
        }
    };
    let perturbation = match ini.perturbation {
        None => 0.0,
        Some(a) if a.is_finite() && (0.0..1.0).contains(&a) => a,
        Some(a) => {
            c.fail(format!("initial.perturbation must be in [0, 1) (got {a})"));
            0.0
        }
    };

    let needs_time = !matches!(mode, Some(Mode::Feasibility) | None);
    let time = match raw.time {
        None if needs_time => {
            c.fail("missing section [time] (needs at least time.t)");
            None
        }
        None => None,
        Some(tm) => {
            let t = c.required(tm.t, "time.t").and_then(|v| c.positive(Some(v), "time.t"));
            let eps_q = c.positive(tm.eps_q.or(Some(0.1)), "time.eps_q");
            let eps_c = c.positive(tm.eps_c.or(Some(0.1)), "time.eps_c");
            let nc = c.count(tm.nc, "time.nc", 1);
            let k = c.count(tm.k, "time.k", 1);
            let tau = c.positive(tm.tau, "time.tau");
            let norm_a = c.word(
                tm.norm_a.as_deref(),
                "time.norm_a",
                NormAPolicy::Bound,
                &[("bound", NormAPolicy::Bound), ("computed", NormAPolicy::Computed)],
            );
            let u_t_norm = c.word(
                tm.u_t_norm.as_deref(),
                "time.u_t_norm",
                UtNormPolicy::Measured,
                &[("measured", UtNormPolicy::Measured), ("maxwellian", UtNormPolicy::Maxwellian)],
            );
            match (t, eps_q, eps_c, norm_a, u_t_norm) {
                (Some(t), Some(eps_q), Some(eps_c), Some(norm_a), Some(u_t_norm)) => {
                    Some(TimeConfig { t, eps_q, eps_c, nc, k, tau, norm_a, u_t_norm })
                }
                _ => None,
            }
        }
    };

    let ig = raw.integrator.unwrap_or_default();
    let solver = c.word(
        ig.solver.as_deref(),
        "integrator.solver",
        Solver::Iterative,
        &[("iterative", Solver::Iterative), ("encoding", Solver::Encoding)],
    );
    let max_d_a = c.count(ig.max_d_a.or(Some(DEFAULT_MAX_D_A as i64)), "integrator.max_d_a", 1);
    let max_nnz = c.count(ig.max_nnz.or(Some(DEFAULT_NNZ_BUDGET as i64)), "integrator.max_nnz", 1);
    let max_encoding_nnz =
        c.count(ig.max_encoding_nnz.or(Some(DEFAULT_ENCODING_NNZ_BUDGET as i64)), "integrator.max_encoding_nnz", 1);

    let rf = raw.reference.unwrap_or_default();
    let order = match rf.order.unwrap_or(4) {
        o @ (1 | 2 | 4) => Some(o as usize),
        o => {
            c.fail(format!("reference.order must be 1, 2 or 4 (got {o})"));
            None
        }
    };
    let tolerance = c.positive(rf.tolerance.or(Some(1e-10)), "reference.tolerance");
    let steps = c.count(rf.steps, "reference.steps", 1);
    let snapshots = c.count(rf.snapshots.or(Some(100)), "reference.snapshots", 1);

    let sweep = match (mode, raw.sweep) {
        (Some(Mode::Sweep), None) => {
            c.fail("missing section [sweep] for mode sweep");
            None
        }
        (_, None) => None,
        (_, Some(sw)) => match sw.variable.as_deref() {
            Some("nc") => {
                let vals = c.required(sw.values, "sweep.values").unwrap_or_default();
                if sw.grids.is_some() {
                    c.fail("sweep.grids is only used with sweep.variable = \"grid\"");
                }
                let mut values = Vec::new();
                for v in vals {
                    if let Some(v) = c.count(Some(v), "sweep.values entry", 1) {
                        values.push(v);
                    }
                }
                values.sort_unstable();
                values.dedup();
                if values.is_empty() {
                    c.fail("sweep.values must list at least one N_C");
                }
                Some(SweepConfig::Nc { values })
            }
            Some("grid") => {
                let raw_grids = c.required(sw.grids, "sweep.grids").unwrap_or_default();
                if sw.values.is_some() {
                    c.fail("sweep.values is only used with sweep.variable = \"nc\"");
                }
                let mut grids = Vec::new();
                for g in raw_grids {
                    match g.as_slice() {
                        &[gx, gv] if gx >= 1 && gv >= 2 && gv % 2 == 0 => grids.push((gx as usize, gv as usize)),
                        _ => c.fail(format!("sweep.grids entries must be [N_x >= 1, even N_v >= 2] (got {g:?})")),
                    }
                }
                grids.sort_unstable();
                grids.dedup();
                if grids.is_empty() {
                    c.fail("sweep.grids must list at least one grid");
                }
                Some(SweepConfig::Grid { grids })
            }
            Some(other) => {
                c.fail(format!("sweep.variable must be \"nc\" or \"grid\" (got \"{other}\")"));
                None
            }
            None => {
                c.fail("missing key sweep.variable");
                None
            }
        },
    };

    let out = raw.output.unwrap_or_default();
    let mut formats = BTreeSet::new();
    for f in out.formats.unwrap_or_else(|| vec!["json".into(), "csv".into(), "txt".into()]) {
        match f.as_str() {
            "json" => {
                formats.insert(Format::Json);
            }
            "csv" => {
                formats.insert(Format::Csv);
            }
            "txt" => {
                formats.insert(Format::Txt);
            }
            other => c.fail(format!("output.formats entries must be json, csv or txt (got \"{other}\")")),
        }
    }
    let dir = ov.out.clone().or_else(|| ov.env_out.clone()).or(out.dir).unwrap_or_else(|| PathBuf::from("out"));

    if !c.violations.is_empty() {
        return Err(ConfigError { violations: c.violations });
    }
    // every Option below is Some once no violation was recorded
    let physics = PhysicsConfig {
        normalized,
        ncal: ncal.unwrap(),
        b: b.unwrap(),
        temperature: temperature.unwrap(),
        nu0: nu0.unwrap(),
        nu0_from_model,
        nbar,
        log_lambda,
        collision: collision.unwrap(),
        maxwellian: maxwellian.unwrap(),
    };
    Ok(RunConfig {
        mode: mode.unwrap(),
        seed,
        grid: GridConfig {
            nx: nx.unwrap(),
            nv: nv.unwrap(),
            x_max: x_max.unwrap(),
            v_max: v_max.unwrap(),
            v_max_policy,
        },
        physics,
        coupling: coupling.unwrap(),
        initial: InitialConfig { kind: kind.unwrap(), perturbation },
        time,
        integrator: IntegratorConfig {
            solver: solver.unwrap(),
            max_d_a: max_d_a.unwrap(),
            max_nnz: max_nnz.unwrap(),
            max_encoding_nnz: max_encoding_nnz.unwrap(),
        },
        reference: ReferenceConfig {
            order: order.unwrap(),
            tolerance: tolerance.unwrap(),
            steps,
            snapshots: snapshots.unwrap(),
        },
        sweep,
        output: OutputConfig { dir, formats },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[grid]
nx = 4
nv = 4
x_max = 1.0
v_max = 1.5

[physics]
ncal = 1.0
b = 0.1
nu0 = 5.0

[time]
t = 0.5

[run]
mode = "analyze"
"#;

    fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        parse_str(text, Path::new("."), &Overrides::default())
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = parse(MINIMAL).unwrap();
        assert!(!cfg.physics.normalized);
        assert_eq!(cfg.mode, Mode::Analyze);
        assert_eq!(cfg.coupling, Coupling::Gauss);
        assert_eq!(cfg.initial.kind, InitialKind::TwoBeam { j: 1 });
        assert_eq!(cfg.physics.collision, CollisionProfile::Zero);
        assert_eq!(cfg.physics.maxwellian, MaxwellianNormalization::HalfMass);
        assert_eq!(cfg.physics.log_lambda, 10.0);
        let t = cfg.time();
        assert_eq!((t.eps_q, t.eps_c), (0.1, 0.1));
        assert_eq!((t.nc, t.k, t.tau), (None, None, None));
        assert_eq!(t.u_t_norm, UtNormPolicy::Measured);
        assert_eq!(cfg.integrator.solver, Solver::Iterative);
        assert_eq!(cfg.integrator.max_d_a, 1_000_000);
        assert_eq!(cfg.reference.order, 4);
        assert_eq!(cfg.output.dir, PathBuf::from("out"));
        assert_eq!(cfg.output.formats.len(), 3);
        assert_eq!(cfg.seed, 0);
    }

    #[test]
    fn odd_nv_names_the_rule() {
        let err = parse(&MINIMAL.replace("nv = 4", "nv = 5")).unwrap_err();
        assert!(err.violations.iter().any(|v| v.contains("grid.nv must be even")), "{err}");
    }

    #[test]
    fn all_violations_are_collected() {
        let text = MINIMAL.replace("nv = 4", "nv = 5").replace("x_max = 1.0\n", "").replace("nu0 = 5.0", "nu0 = -1.0");
        let err = parse(&text).unwrap_err();
        assert_eq!(err.violations.len(), 3, "{err}");
        assert!(err.to_string().contains("missing key grid.x_max"));
        assert!(err.to_string().contains("physics.nu0 must be a positive number"));
    }

    #[test]
    fn beam_column_out_of_range() {
        let text = format!("{MINIMAL}\n[initial]\nj = 3\n");
        let err = parse(&text).unwrap_err();
        assert!(err.violations[0].contains("initial.j must be in 1..=2"), "{err}");
        assert!(parse(&format!("{MINIMAL}\n[initial]\nj = 2\n")).is_ok());
    }

    #[test]
    fn ampere_carleman_is_rejected_with_reason() {
        let text = format!("{MINIMAL}\n[qode]\ncoupling = \"ampere\"\n");
        assert!(parse(&text).is_ok());
        let ov = Overrides { mode: Some(Mode::RunCarleman), ..Default::default() };
        let err = parse_str(&text, Path::new("."), &ov).unwrap_err();
        assert!(err.violations[0].contains("does not converge"), "{err}");
        assert!(err.violations[0].contains("mu(F1) >= 0"));
        let ov = Overrides { mode: Some(Mode::Compare), ..Default::default() };
        assert!(parse_str(&text, Path::new("."), &ov).is_err());
    }

    #[test]
    fn overrides_take_precedence() {
        let ov = Overrides {
            mode: Some(Mode::Feasibility),
            seed: Some(7),
            normalized: true,
            out: None,
            env_out: Some(PathBuf::from("/tmp/env")),
        };
        let cfg = parse_str(&format!("{MINIMAL}\n[output]\ndir = \"file\"\n"), Path::new("."), &ov).unwrap();
        assert_eq!(cfg.mode, Mode::Feasibility);
        assert_eq!(cfg.seed, 7);
        assert!(cfg.physics.normalized);
        assert_eq!(cfg.output.dir, PathBuf::from("/tmp/env"));
        let ov = Overrides { out: Some(PathBuf::from("flag")), ..ov };
        let cfg = parse_str(MINIMAL, Path::new("."), &ov).unwrap();
        assert_eq!(cfg.output.dir, PathBuf::from("flag"));
    }

    #[test]
    fn temperature_policies() {
        let text = MINIMAL.replace("b = 0.1", "temperature = 8000.0").replace("v_max = 1.5", "v_max = \"thermal\"");
        let cfg = parse(&text).unwrap();
        let b = physics::decay_factor(&PhysicalConstants::SI, 8000.0).unwrap();
        assert!((cfg.physics.b - b).abs() <= 1e-15 * b);
        assert!((cfg.physics.temperature - 8000.0).abs() < 1e-9);
        assert!((cfg.grid.v_max - 10.0 / b.sqrt()).abs() <= 1e-12 * cfg.grid.v_max);
        assert_eq!(cfg.grid.v_max_policy, VMaxPolicy::Thermal);

        let both = MINIMAL.replace("b = 0.1", "b = 0.1\ntemperature = 10.0");
        assert!(parse(&both).unwrap_err().to_string().contains("mutually exclusive"));
    }

    #[test]
    fn nu0_model_needs_density() {
        let text = MINIMAL.replace("nu0 = 5.0", "nu0 = \"model\"");
        assert!(parse(&text).unwrap_err().to_string().contains("physics.nbar"));
        let cfg = parse(&text.replace("ncal = 1.0", "ncal = 1.0\nnbar = 1e20")).unwrap();
        assert!(cfg.physics.nu0_from_model && cfg.physics.nu0 > 0.0);
    }

    #[test]
    fn feasibility_needs_no_time_section() {
        let text = MINIMAL.replace("[time]\nt = 0.5\n", "").replace("\"analyze\"", "\"feasibility\"");
        let cfg = parse(&text).unwrap();
        assert!(cfg.time.is_none());
        assert!(parse(&text.replace("\"feasibility\"", "\"analyze\"")).is_err());
    }

    #[test]
    fn sweep_values_are_sorted() {
        let text = format!("{MINIMAL}\n[sweep]\nvariable = \"nc\"\nvalues = [3, 1, 2, 1]\n")
            .replace("\"analyze\"", "\"sweep\"");
        let cfg = parse(&text).unwrap();
        assert_eq!(cfg.sweep, Some(SweepConfig::Nc { values: vec![1, 2, 3] }));
        let text = format!("{MINIMAL}\n[sweep]\nvariable = \"grid\"\ngrids = [[4, 4], [2, 6], [2, 4]]\n")
            .replace("\"analyze\"", "\"sweep\"");
        let cfg = parse(&text).unwrap();
        assert_eq!(cfg.sweep, Some(SweepConfig::Grid { grids: vec![(2, 4), (2, 6), (4, 4)] }));
    }

    #[test]
    fn unknown_keys_and_bad_words_are_rejected() {
        assert!(parse(&MINIMAL.replace("nu0 = 5.0", "nu0 = 5.0\nnuu = 1")).unwrap_err().to_string().contains("nuu"));
        let err = parse(&format!("{MINIMAL}\n[integrator]\nsolver = \"magic\"\n")).unwrap_err();
        assert!(err.to_string().contains("integrator.solver must be one of iterative, encoding"));
    }

    #[test]
    fn integer_literals_are_accepted_for_reals() {
        let cfg = parse(&MINIMAL.replace("x_max = 1.0", "x_max = 2").replace("nu0 = 5.0", "nu0 = 5")).unwrap();
        assert_eq!(cfg.grid.x_max, 2.0);
        assert_eq!(cfg.physics.nu0, 5.0);
    }
}
