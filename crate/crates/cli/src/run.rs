//! Mode orchestration. Every number placed in the report comes straight
//! from a library call; this module only sequences them.

use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use vlasov_carleman::analysis::convergence::{eta, maxwellian_state_norm, r_closed_form};
use vlasov_carleman::analysis::{
    ampere_diagnosis, asymptotic_r, complexity_accounting, convergence_r_with_norms, plan_truncation,
    rescale_with_norms, spectral_norm, system_norms, AmpereDiagnosis, ComplexityReport, ConvergenceReport,
    EigenOptions, PlanInputs, PlanOverrides, Rescaled, TruncationPlan,
};
use vlasov_carleman::carleman::{build_carleman_with_limits, build_z0, CarlemanLimits, CarlemanSystem};
use vlasov_carleman::integrator::{
    build_linear_encoding_with_budget, encoding_condition_number, evolve_iterative, extract_solution, solve_encoding,
    EvolveResult, ExtractedSolution, StepParams, DENSE_LIMIT,
};
use vlasov_carleman::physics::{
    self, collision_frequency_model, feasibility_product_bound, nv_feasibility_bound, BeamSpec,
};
use vlasov_carleman::qode::{DirectRhs, RhsOracle};
use vlasov_carleman::reference::{
    compare_solutions, integrate, integrate_to_tolerance, particle_number, Order, Trajectory,
};
use vlasov_carleman::{norm2, Coupling, DistributionMatrix, GridSpec, PlasmaParams, QuadraticOde};

use crate::config::{InitialKind, Mode, NormAPolicy, RunConfig, Solver, SweepConfig, TimeConfig, UtNormPolicy};

/// One sweep point as ordered `(column, value)` pairs.
type Row = Vec<(String, Value)>;

/// Report schema tag.
pub const SCHEMA: &str = "report_v1";

/// A CSV table with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    /// `f(T)` from the Carleman path.
    pub f_carleman: Option<DistributionMatrix>,
    /// `f(T)` from the explicit reference.
    pub f_reference: Option<DistributionMatrix>,
    pub tables: Vec<Table>,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Map<String, Value>,
    pub feasible: bool,
    pub verdict: String,
    pub artifacts: Artifacts,
    /// Wall-clock seconds per stage; left out of canonical reports.
    pub timings: Vec<(String, f64)>,
}

/// JSON number, with non-finite values spelled out as strings.
pub fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else if x.is_nan() {
        json!("nan")
    } else if x > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

fn opt_num(x: Option<f64>) -> Value {
    x.map_or(Value::Null, num)
}

fn big(n: u128) -> Value {
    u64::try_from(n).map_or_else(|_| json!(n.to_string()), |v| json!(v))
}

/// Plain decimal text for CSV cells.
pub fn cell(x: f64) -> String {
    if x.is_finite() {
        format!("{x:?}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

#[derive(Debug, Default)]
pub struct Stopwatch {
    laps: Vec<(String, f64)>,
}

impl Stopwatch {
    fn time<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.laps.push((name.to_string(), start.elapsed().as_secs_f64()));
        out
    }
}

/// Assembled inputs for one grid.
#[derive(Debug, Clone)]
pub struct Problem {
    pub params: PlasmaParams,
    pub grid: GridSpec,
    pub ode: QuadraticOde,
    /// Row-major `f(0)`.
    pub f_in: Vec<f64>,
    /// `f(0)` extended with zero field components under Ampère coupling.
    pub u_in: Vec<f64>,
    pub opts: EigenOptions,
}

pub fn plasma_params(cfg: &RunConfig) -> Result<PlasmaParams> {
    let ph = &cfg.physics;
    let mut p = PlasmaParams::new(ph.constants(), ph.ncal, ph.b, ph.nu0)
        .context("physics")?
        .with_collision(ph.collision)
        .context("physics")?
        .with_normalization(ph.maxwellian);
    p.log_lambda = ph.log_lambda;
    p.nbar = ph.nbar;
    Ok(p)
}

fn read_initial_csv(path: &std::path::Path, g: &GridSpec) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("initial: cannot open {}", path.display()))?;
    let mut f = Vec::with_capacity(g.n_points());
    let mut rows = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.with_context(|| format!("initial: {}", path.display()))?;
        if rec.len() != g.nv() {
            bail!("initial: row {} of {} has {} columns, expected N_v = {}", i + 1, path.display(), rec.len(), g.nv());
        }
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| anyhow!("initial: bad number \"{field}\" at row {}, column {}", i + 1, j + 1))?;
            if !v.is_finite() {
                bail!("initial: non-finite value at row {}, column {}", i + 1, j + 1);
            }
            f.push(v);
        }
        rows += 1;
    }
    if rows != g.nx() {
        bail!("initial: {} has {rows} rows, expected N_x = {}", path.display(), g.nx());
    }
    Ok(f)
}

pub fn build_problem(cfg: &RunConfig, nx: usize, nv: usize) -> Result<Problem> {
    let params = plasma_params(cfg)?;
    let grid = GridSpec::new(nx, nv, cfg.grid.x_max, cfg.grid.v_max).context("grid")?;
    let ode = QuadraticOde::build(&params, &grid, cfg.coupling).context("qode")?;
    let mut f_in = match &cfg.initial.kind {
        InitialKind::TwoBeam { j } => {
            let beams = BeamSpec::new(&grid, *j).context("initial")?;
            physics::two_beam_initial(&params, &grid, beams).context("initial")?
        }
        InitialKind::Csv { path } => read_initial_csv(path, &grid)?,
    };
    if cfg.initial.perturbation > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for v in f_in.iter_mut() {
            *v *= 1.0 + cfg.initial.perturbation * (2.0 * rng.gen::<f64>() - 1.0);
        }
    }
    if norm2(&f_in) == 0.0 {
        bail!("initial: f(0) is identically zero");
    }
    let mut u_in = f_in.clone();
    u_in.resize(ode.dim, 0.0);
    let opts = EigenOptions { seed: cfg.seed, ..EigenOptions::default() };
    Ok(Problem { params, grid, ode, f_in, u_in, opts })
}

fn reference_trajectory<R: RhsOracle + ?Sized>(
    cfg: &RunConfig,
    rhs: &R,
    u: &[f64],
    t: f64,
    record: bool,
) -> Result<(Trajectory, Option<f64>)> {
    let order = Order::from_order(cfg.reference.order)?;
    let (steps, estimate) = match cfg.reference.steps {
        Some(s) => (s, None),
        None => {
            let target = cfg.reference.tolerance * norm2(u);
            let (traj, est) = integrate_to_tolerance(rhs, u, t, order, target, 16, 1 << 24).context("reference")?;
            if !record {
                return Ok((traj, Some(est)));
            }
            (traj.steps, Some(est))
        }
    };
    let every = record.then(|| (steps / cfg.reference.snapshots).max(1));
    Ok((integrate(rhs, u, t, steps, order, every).context("reference")?, estimate))
}

/// Gauss-coupled analysis beyond the convergence parameter.
#[derive(Debug, Clone)]
pub struct GaussAnalysis {
    pub rescaled: Rescaled,
    pub norm_u_bar_t: f64,
    /// `ū(T)` when measured.
    pub u_bar_t: Option<Vec<f64>>,
    pub reference_steps: Option<usize>,
    pub plan: TruncationPlan,
    pub norm_a_used: f64,
    pub complexity: ComplexityReport,
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub conv: ConvergenceReport,
    pub r_closed: Option<f64>,
    pub ampere: Option<AmpereDiagnosis>,
    pub gauss: Option<GaussAnalysis>,
    pub feasible: bool,
    pub verdict: String,
}

fn limits(cfg: &RunConfig) -> CarlemanLimits {
    CarlemanLimits { max_d_a: cfg.integrator.max_d_a, max_nnz: cfg.integrator.max_nnz }
}

fn plan_inputs(time: &TimeConfig, resc: &Rescaled, norm_u_bar_t: f64) -> PlanInputs {
    PlanInputs {
        t: time.t,
        eps_q: time.eps_q,
        eps_c: time.eps_c,
        norm_f0_bar: resc.norms.norm_f0.unwrap_or(0.0),
        norm_f1: resc.norms.norm_f1,
        norm_f2_bar: resc.norms.norm_f2.unwrap_or(0.0),
        norm_u_bar_in: resc.norm_u_bar,
        norm_u_bar_t,
    }
}

/// Plan for a given `N_C` (or the chosen one), honouring the `‖A‖` policy.
fn plan_for(
    cfg: &RunConfig,
    prob: &Problem,
    ga_in: &PlanInputs,
    resc: &Rescaled,
    nc: Option<usize>,
) -> Result<(TruncationPlan, f64)> {
    let time = cfg.time();
    let mut ov = PlanOverrides { nc: nc.or(time.nc), k: time.k, tau: time.tau, norm_a: None };
    let plan = plan_truncation(ga_in, &ov).context("analysis.plan_truncation")?;
    if time.norm_a == NormAPolicy::Bound {
        return Ok((plan, plan.norm_a_bound));
    }
    let sys = build_carleman_with_limits(&resc.ode, plan.nc, limits(cfg)).context("time.norm_a = \"computed\"")?;
    let norm_a = spectral_norm(&sys.a, &prob.opts).context("analysis.spectral_norm")?;
    ov.norm_a = Some(norm_a);
    Ok((plan_truncation(ga_in, &ov).context("analysis.plan_truncation")?, norm_a))
}

pub fn analyze(cfg: &RunConfig, prob: &Problem, sw: &mut Stopwatch) -> Result<Analysis> {
    let time = cfg.time();
    let norms = sw.time("norms", || system_norms(&prob.ode, &prob.opts)).context("analysis.system_norms")?;
    let mut conv = convergence_r_with_norms(cfg.coupling, &norms, &prob.u_in).context("analysis.convergence_r")?;
    conv.r_asymptotic = Some(asymptotic_r(&prob.params, &prob.grid));
    conv.eta = Some(eta(time.t, time.eps_q, time.eps_c));
    let r_closed = (cfg.coupling == Coupling::Gauss && prob.grid.nx() >= 2)
        .then(|| r_closed_form(&prob.params, &prob.grid).ok())
        .flatten();

    if cfg.coupling == Coupling::Ampere {
        let diag = sw
            .time("ampere_diagnosis", || ampere_diagnosis(&prob.ode, &prob.opts))
            .context("analysis.ampere_diagnosis")?;
        let verdict = diag.verdict.clone();
        return Ok(Analysis { conv, r_closed, ampere: Some(diag), gauss: None, feasible: false, verdict });
    }
    if !conv.feasible {
        let verdict = if conv.mu_f1 >= 0.0 {
            format!("not convergent: mu(F1) = {:.4e} is not negative", conv.mu_f1)
        } else {
            format!("not convergent: R = {:.4} >= 1", conv.r)
        };
        return Ok(Analysis { conv, r_closed, ampere: None, gauss: None, feasible: false, verdict });
    }
    let resc = rescale_with_norms(&prob.ode, &prob.u_in, &norms).context("analysis.rescale")?;
    if !resc.unit_ball {
        let verdict = format!("not convergent: rescaled |u_in| = {:.4} is not below 1", resc.norm_u_bar);
        return Ok(Analysis { conv, r_closed, ampere: None, gauss: None, feasible: false, verdict });
    }
    let (norm_u_bar_t, u_bar_t, reference_steps) = match time.u_t_norm {
        UtNormPolicy::Measured => {
            let (traj, _) =
                sw.time("reference_rescaled", || reference_trajectory(cfg, &resc.ode, &resc.u_bar, time.t, false))?;
            (norm2(&traj.u_t), Some(traj.u_t.clone()), Some(traj.steps))
        }
        UtNormPolicy::Maxwellian => (maxwellian_state_norm(&prob.params, &prob.grid) / resc.gamma, None, None),
    };
    conv.g_u = Some(resc.norm_u_bar / norm_u_bar_t);
    let inputs = plan_inputs(time, &resc, norm_u_bar_t);
    let (plan, norm_a_used) = sw.time("plan", || plan_for(cfg, prob, &inputs, &resc, None))?;
    let complexity = complexity_accounting(&plan, &resc.ode, plan.nc);
    let verdict = format!("convergent: R = {:.4} < 1", conv.r);
    Ok(Analysis {
        conv,
        r_closed,
        ampere: None,
        gauss: Some(GaussAnalysis {
            rescaled: resc,
            norm_u_bar_t,
            u_bar_t,
            reference_steps,
            plan,
            norm_a_used,
            complexity,
        }),
        feasible: true,
        verdict,
    })
}

#[derive(Debug, Clone)]
pub struct EncodingSummary {
    pub total_dim: usize,
    pub nnz: usize,
    pub condition_number: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct CarlemanRun {
    pub plan: TruncationPlan,
    pub d_a: usize,
    pub nnz_a: usize,
    pub max_row_nnz: usize,
    pub result: EvolveResult,
    pub extracted: ExtractedSolution,
    pub encoding: Option<EncodingSummary>,
}

fn evolve(
    cfg: &RunConfig,
    sys: &CarlemanSystem,
    z0: &[f64],
    sp: &StepParams,
) -> Result<(EvolveResult, Option<EncodingSummary>)> {
    match cfg.integrator.solver {
        Solver::Iterative => Ok((evolve_iterative(sys, z0, sp).context("integrator.evolve")?, None)),
        Solver::Encoding => {
            let enc = build_linear_encoding_with_budget(sys, z0, sp, cfg.integrator.max_encoding_nnz)
                .context("integrator.build_linear_encoding")?;
            let result = solve_encoding(&enc).context("integrator.solve_encoding")?;
            let condition_number = (enc.total_dim <= DENSE_LIMIT)
                .then(|| encoding_condition_number(&enc))
                .transpose()
                .context("integrator.condition")?;
            Ok((result, Some(EncodingSummary { total_dim: enc.total_dim, nnz: enc.l.nnz(), condition_number })))
        }
    }
}

pub fn carleman_run(cfg: &RunConfig, prob: &Problem, ga: &GaussAnalysis, plan: TruncationPlan) -> Result<CarlemanRun> {
    let resc = &ga.rescaled;
    let sys = build_carleman_with_limits(&resc.ode, plan.nc, limits(cfg)).with_context(|| {
        format!("carleman.build (N_C = {}; lower time.nc or raise integrator.max_d_a / max_nnz)", plan.nc)
    })?;
    let z0 = build_z0(&resc.u_bar, plan.nc).context("carleman.build_z0")?;
    info!("evolving d_A = {} for m = {} steps with k = {}", sys.d_a, plan.m, plan.k);
    let (result, encoding) = evolve(cfg, &sys, &z0.z, &StepParams::from(&plan))?;
    let extracted = extract_solution(&result, resc.gamma, &prob.grid).context("integrator.extract_solution")?;
    Ok(CarlemanRun {
        d_a: sys.d_a,
        nnz_a: sys.a.nnz(),
        max_row_nnz: sys.max_row_nnz(),
        plan,
        result,
        extracted,
        encoding,
    })
}

fn convergence_json(a: &Analysis) -> Value {
    let c = &a.conv;
    json!({
        "coupling": c.coupling.name(),
        "mu": num(c.mu_f1),
        "norm_F1": num(c.norm_f1),
        "norm_F2": opt_num(c.norm_f2),
        "norm_F0": opt_num(c.norm_f0),
        "norm_u_in": num(c.norm_uin),
        "R": num(c.r),
        "R_asymptotic": opt_num(c.r_asymptotic),
        "R_closed_form": opt_num(a.r_closed),
        "r_plus": opt_num(c.r_plus),
        "gamma": opt_num(c.gamma),
        "g_u": opt_num(c.g_u),
        "eta": opt_num(c.eta),
        "feasible": c.feasible,
    })
}

fn plan_json(p: &TruncationPlan, norm_a_used: f64, time: &TimeConfig) -> Value {
    json!({
        "T": num(p.t),
        "N_C": p.nc,
        "N_C_source": if time.nc.is_some() { "override" } else { "chosen" },
        "k": p.k,
        "k_source": if time.k.is_some() { "override" } else { "chosen" },
        "Omega": num(p.omega),
        "delta": num(p.delta),
        "delta_prime": num(p.delta_prime),
        "delta_implied": num(p.delta_implied),
        "eps_q": num(p.eps_q),
        "eps_c": num(p.eps_c),
        "tau": num(p.tau),
        "m": p.m,
        "p": p.p,
        "norm_A_bound": num(p.norm_a_bound),
        "norm_A_used": num(norm_a_used),
        "norm_A_policy": match time.norm_a { NormAPolicy::Bound => "bound", NormAPolicy::Computed => "computed" },
    })
}

fn complexity_json(c: &ComplexityReport) -> Value {
    json!({
        "d": c.d,
        "N_C": c.nc,
        "s": c.s,
        "s_A": c.s_a,
        "d_A": c.d_a.map_or(json!("inf"), |v| json!(v)),
        "d_A_saturated": c.d_a_saturated,
        "m": c.m,
        "p": c.p,
        "k": c.k,
        "Omega": num(c.omega),
        "kappaL_bound": num(c.kappa_bound),
        "classical_ops": big(c.classical_ops),
    })
}

fn ampere_json(d: &AmpereDiagnosis) -> Value {
    json!({
        "dim": d.dim,
        "N_x": d.nx,
        "zero_columns": d.zero_columns,
        "mu_F1": num(d.mu_f1),
        "norm_F1": num(d.norm_f1),
        "spectral_abscissa_F1": opt_num(d.alpha_f1),
        "structure_confirmed": d.structure_confirmed,
        "converges": d.converges,
        "verdict": d.verdict,
    })
}

fn rescaling_json(ga: &GaussAnalysis) -> Value {
    let r = &ga.rescaled;
    json!({
        "gamma": num(r.gamma),
        "r_plus": num(r.r_plus),
        "norm_u_bar_in": num(r.norm_u_bar),
        "norm_u_bar_T": num(ga.norm_u_bar_t),
        "reference_steps": ga.reference_steps,
        "norm_F2_bar": opt_num(r.norms.norm_f2),
        "norm_F0_bar": opt_num(r.norms.norm_f0),
        "unit_ball": r.unit_ball,
        "dissipation_margin": r.dissipation_margin,
    })
}

fn evolve_json(cfg: &RunConfig, g: &GridSpec, run: &CarlemanRun) -> Result<Value> {
    let r = &run.result;
    let max_step = r.step_norms.iter().copied().fold(0.0, f64::max);
    let mut v = json!({
        "solver": match cfg.integrator.solver { Solver::Iterative => "iterative", Solver::Encoding => "encoding" },
        "N_C": run.plan.nc,
        "d_A": run.d_a,
        "nnz_A": run.nnz_a,
        "max_row_nnz_A": run.max_row_nnz,
        "m": run.plan.m,
        "k": run.plan.k,
        "tau": num(run.plan.tau),
        "max_step_norm": num(max_step),
        "final_norm": num(r.step_norms.last().copied().unwrap_or(f64::NAN)),
        "padding_deviation": opt_num(r.padding_deviation),
        "residual": opt_num(r.residual),
        "negative_entries": run.extracted.negative_entries,
        "min_entry": num(run.extracted.min_entry),
        "particle_number": num(particle_number(g, &run.extracted.y1m)?),
    });
    if let Some(e) = &run.encoding {
        v["encoding"] = json!({
            "total_dim": e.total_dim,
            "nnz_L": e.nnz,
            "condition_number": opt_num(e.condition_number),
            "kappaL_bound": num(vlasov_carleman::analysis::diagnostics::kappa_bound(run.plan.m, run.plan.p, run.plan.delta)),
        });
    }
    Ok(v)
}

fn headline(report: &mut Map<String, Value>, a: Option<&Analysis>, feasible: bool, verdict: &str) {
    let c = a.map(|a| &a.conv);
    let ga = a.and_then(|a| a.gauss.as_ref());
    let cx = ga.map(|g| &g.complexity);
    let plan = ga.map(|g| &g.plan);
    let h = json!({
        "mu": c.map_or(Value::Null, |c| num(c.mu_f1)),
        "norms": {
            "F2": c.map_or(Value::Null, |c| opt_num(c.norm_f2)),
            "F1": c.map_or(Value::Null, |c| num(c.norm_f1)),
            "F0": c.map_or(Value::Null, |c| opt_num(c.norm_f0)),
            "u_in": c.map_or(Value::Null, |c| num(c.norm_uin)),
        },
        "R": c.map_or(Value::Null, |c| num(c.r)),
        "gamma": c.map_or(Value::Null, |c| opt_num(c.gamma)),
        "N_C": plan.map_or(Value::Null, |p| json!(p.nc)),
        "k": plan.map_or(Value::Null, |p| json!(p.k)),
        "Omega": plan.map_or(Value::Null, |p| num(p.omega)),
        "m": plan.map_or(Value::Null, |p| json!(p.m)),
        "tau": plan.map_or(Value::Null, |p| num(p.tau)),
        "d_A": cx.map_or(Value::Null, |c| c.d_a.map_or(json!("inf"), |v| json!(v))),
        "s": cx.map_or(Value::Null, |c| json!(c.s)),
        "s_A": cx.map_or(Value::Null, |c| json!(c.s_a)),
        "kappaL_bound": cx.map_or(Value::Null, |c| num(c.kappa_bound)),
        "feasible": feasible,
        "verdict": verdict,
    });
    if let Value::Object(m) = h {
        report.extend(m);
    }
}

fn base_report(cfg: &RunConfig) -> Result<Map<String, Value>> {
    let mut r = Map::new();
    r.insert("schema".into(), json!(SCHEMA));
    r.insert("mode".into(), json!(cfg.mode.name()));
    r.insert("config".into(), serde_json::to_value(cfg).context("report: config echo")?);
    Ok(r)
}

fn state_matrix(g: &GridSpec, u: &[f64]) -> Result<DistributionMatrix> {
    Ok(DistributionMatrix::from_state(g, &u[..g.n_points()])?)
}

fn trajectory_table(g: &GridSpec, traj: &Trajectory, scale: f64) -> Result<Table> {
    let mut rows = Vec::with_capacity(traj.snapshots.len());
    for (t, u) in &traj.snapshots {
        let f: Vec<f64> = u[..g.n_points()].iter().map(|v| v * scale).collect();
        let min = f.iter().copied().fold(f64::INFINITY, f64::min);
        rows.push(vec![cell(*t), cell(norm2(&f)), cell(particle_number(g, &f)?), cell(min)]);
    }
    Ok(Table {
        name: "trajectory".into(),
        header: ["t", "norm_f", "particle_number", "min_f"].map(String::from).to_vec(),
        rows,
    })
}

/// Executes the configured mode.
pub fn run(cfg: &RunConfig) -> Result<Outcome> {
    let mut sw = Stopwatch::default();
    let mut report = base_report(cfg)?;
    let mut artifacts = Artifacts::default();
    let (feasible, verdict) = match cfg.mode {
        Mode::Feasibility => feasibility(cfg, &mut report)?,
        Mode::RunReference => run_reference(cfg, &mut report, &mut artifacts, &mut sw)?,
        Mode::Analyze | Mode::RunCarleman | Mode::Compare => {
            let prob = sw.time("assemble", || build_problem(cfg, cfg.grid.nx, cfg.grid.nv))?;
            let a = analyze(cfg, &prob, &mut sw)?;
            report.insert("convergence".into(), convergence_json(&a));
            if let Some(d) = &a.ampere {
                report.insert("ampere".into(), ampere_json(d));
            }
            if let Some(ga) = &a.gauss {
                report.insert("rescaling".into(), rescaling_json(ga));
                report.insert("plan".into(), plan_json(&ga.plan, ga.norm_a_used, cfg.time()));
                report.insert("complexity".into(), complexity_json(&ga.complexity));
            }
            report.insert("sparsity".into(), serde_json::to_value(prob.ode.sparsity()).context("report: sparsity")?);
            let mut verdict = a.verdict.clone();
            if let (Some(ga), true) = (&a.gauss, cfg.mode != Mode::Analyze) {
                let run = sw.time("carleman", || carleman_run(cfg, &prob, ga, ga.plan))?;
                report.insert("evolve".into(), evolve_json(cfg, &prob.grid, &run)?);
                if cfg.mode == Mode::Compare {
                    let (cmp, f_ref) = sw.time("compare", || compare(cfg, &prob, ga, &run))?;
                    if cmp["within_budget"] == json!(false) {
                        verdict.push_str("; Carleman error exceeds the delta + delta' budget");
                    }
                    report.insert("comparison".into(), cmp);
                    artifacts.f_reference = Some(f_ref);
                }
                artifacts.f_carleman = Some(run.extracted.f_t);
            }
            headline(&mut report, Some(&a), a.feasible, &verdict);
            (a.feasible, verdict)
        }
        Mode::Sweep => sweep(cfg, &mut report, &mut artifacts, &mut sw)?,
    };
    if !report.contains_key("verdict") {
        headline(&mut report, None, feasible, &verdict);
    }
    Ok(Outcome { report, feasible, verdict, artifacts, timings: sw.laps })
}

fn feasibility(cfg: &RunConfig, report: &mut Map<String, Value>) -> Result<(bool, String)> {
    let ph = &cfg.physics;
    let c = ph.constants();
    let (x_max, temp, nv) = (cfg.grid.x_max, ph.temperature, cfg.grid.nv);
    let nv_bound = nv_feasibility_bound(&c, x_max, temp).context("physics.nv_feasibility_bound")?;
    let product_bound = feasibility_product_bound(&c, nv as f64).context("physics.feasibility_product_bound")?;
    let nu0_model =
        ph.nbar.map(|n| collision_frequency_model(&c, n, temp, ph.log_lambda)).transpose().context("physics")?;
    let p = plasma_params(cfg)?;
    let g = GridSpec::new(cfg.grid.nx, nv, x_max, cfg.grid.v_max).context("grid")?;
    let feasible = (nv as f64) < nv_bound;
    let verdict = if feasible {
        format!("feasible: N_v = {nv} is below the bound {nv_bound:.4e}")
    } else if nv_bound < 2.0 {
        format!("infeasible: N_v must stay below {nv_bound:.4e}, so no grid with N_v >= 2 gives R < 1")
    } else {
        format!("infeasible: N_v = {nv} is not below the bound {nv_bound:.4e}")
    };
    report.insert(
        "feasibility".into(),
        json!({
            "x_max": num(x_max),
            "temperature": num(temp),
            "N_v": nv,
            "N_v_bound": num(nv_bound),
            "x_max_T_bound": num(product_bound),
            "x_max_T": num(x_max * temp),
            "nu0_model": opt_num(nu0_model),
            "R_asymptotic": num(asymptotic_r(&p, &g)),
            "v_max": num(cfg.grid.v_max),
            "v_max_thermal": num(physics::thermal_v_max(ph.b)),
        }),
    );
    Ok((feasible, verdict))
}

fn run_reference(
    cfg: &RunConfig,
    report: &mut Map<String, Value>,
    artifacts: &mut Artifacts,
    sw: &mut Stopwatch,
) -> Result<(bool, String)> {
    let prob = sw.time("assemble", || build_problem(cfg, cfg.grid.nx, cfg.grid.nv))?;
    let g = &prob.grid;
    let t = cfg.time().t;
    // the direct right-hand side is coupling-independent
    let rhs = DirectRhs::new(&prob.params, g);
    let (traj, estimate) = sw.time("reference", || reference_trajectory(cfg, &rhs, &prob.f_in, t, true))?;
    let n0 = particle_number(g, &prob.f_in)?;
    let n_t = particle_number(g, &traj.u_t)?;
    let min = traj.u_t.iter().copied().fold(f64::INFINITY, f64::min);
    report.insert(
        "reference".into(),
        json!({
            "T": num(t),
            "order": traj.order.order(),
            "steps": traj.steps,
            "richardson_estimate": opt_num(estimate),
            "norm_f_in": num(norm2(&prob.f_in)),
            "norm_f_T": num(norm2(&traj.u_t)),
            "particle_number_in": num(n0),
            "particle_number_T": num(n_t),
            "particle_drift": num((n_t - n0).abs() / n0.abs()),
            "min_entry": num(min),
        }),
    );
    artifacts.tables.push(trajectory_table(g, &traj, 1.0)?);
    artifacts.f_reference = Some(state_matrix(g, &traj.u_t)?);
    Ok((true, format!("reference solution computed with {} steps", traj.steps)))
}

/// Reference `ū(T)` for the rescaled system, reusing the analysis solve.
fn rescaled_reference(cfg: &RunConfig, ga: &GaussAnalysis) -> Result<Vec<f64>> {
    match &ga.u_bar_t {
        Some(u) => Ok(u.clone()),
        None => Ok(reference_trajectory(cfg, &ga.rescaled.ode, &ga.rescaled.u_bar, cfg.time().t, false)?.0.u_t),
    }
}

fn compare(
    cfg: &RunConfig,
    prob: &Problem,
    ga: &GaussAnalysis,
    run: &CarlemanRun,
) -> Result<(Value, DistributionMatrix)> {
    let u_ref = rescaled_reference(cfg, ga)?;
    let f_ref: Vec<f64> = u_ref.iter().map(|v| v * ga.rescaled.gamma).collect();
    let e = compare_solutions(&f_ref, &run.extracted.y1m).context("reference.compare_solutions")?;
    let plan = &run.plan;
    let budget = plan.delta + plan.delta_prime;
    let implied = plan.delta_implied + plan.delta_prime;
    let v = json!({
        "relative_l2": num(e.relative_l2),
        "max_abs_cell": num(e.max_abs_cell),
        "normalized_state_error": num(e.normalized_state_error),
        "reference_norm": num(e.reference_norm),
        "budget": num(budget),
        "implied_bound": num(implied),
        "within_budget": e.relative_l2 <= budget,
        "within_implied_bound": e.relative_l2 <= implied,
    });
    Ok((v, state_matrix(&prob.grid, &f_ref)?))
}

fn sweep(
    cfg: &RunConfig,
    report: &mut Map<String, Value>,
    artifacts: &mut Artifacts,
    sw: &mut Stopwatch,
) -> Result<(bool, String)> {
    match cfg.sweep.as_ref().ok_or_else(|| anyhow!("sweep: missing [sweep] section"))? {
        SweepConfig::Nc { values } => sweep_nc(cfg, values, report, artifacts, sw),
        SweepConfig::Grid { grids } => sweep_grid(cfg, grids, report, artifacts, sw),
    }
}

fn sweep_nc(
    cfg: &RunConfig,
    values: &[usize],
    report: &mut Map<String, Value>,
    artifacts: &mut Artifacts,
    sw: &mut Stopwatch,
) -> Result<(bool, String)> {
    let prob = sw.time("assemble", || build_problem(cfg, cfg.grid.nx, cfg.grid.nv))?;
    let a = analyze(cfg, &prob, sw)?;
    report.insert("convergence".into(), convergence_json(&a));
    let Some(ga) = &a.gauss else {
        headline(report, Some(&a), false, &a.verdict);
        return Ok((false, a.verdict));
    };
    report.insert("rescaling".into(), rescaling_json(ga));
    let u_ref = rescaled_reference(cfg, ga)?;
    let inputs = plan_inputs(cfg.time(), &ga.rescaled, ga.norm_u_bar_t);
    let points: Vec<Result<Row>> = sw.time("sweep", || {
        values
            .par_iter()
            .map(|&nc| {
                let (plan, _) = plan_for(cfg, &prob, &inputs, &ga.rescaled, Some(nc))?;
                let run = carleman_run(cfg, &prob, ga, plan)?;
                let y1: Vec<f64> = run.extracted.y1m.iter().map(|v| v / ga.rescaled.gamma).collect();
                let err = compare_solutions(&u_ref, &y1)?.relative_l2;
                let p = &run.plan;
                Ok(vec![
                    ("N_C".into(), json!(nc)),
                    ("d_A".into(), json!(run.d_a)),
                    ("nnz_A".into(), json!(run.nnz_a)),
                    ("k".into(), json!(p.k)),
                    ("m".into(), json!(p.m)),
                    ("tau".into(), num(p.tau)),
                    ("relative_error".into(), num(err)),
                    ("delta_implied".into(), num(p.delta_implied)),
                    ("delta_prime".into(), num(p.delta_prime)),
                    ("within_bound".into(), json!(err <= p.delta_implied + p.delta_prime)),
                ])
            })
            .collect()
    });
    let rows = points.into_iter().collect::<Result<Vec<_>>>()?;
    artifacts.tables.push(rows_to_table("sweep_nc", &rows));
    report.insert("sweep".into(), json!({ "variable": "N_C", "rows": rows_to_json(&rows) }));
    let verdict = format!("{}; swept N_C over {:?}", a.verdict, values);
    headline(report, Some(&a), true, &verdict);
    Ok((true, verdict))
}

fn sweep_grid(
    cfg: &RunConfig,
    grids: &[(usize, usize)],
    report: &mut Map<String, Value>,
    artifacts: &mut Artifacts,
    sw: &mut Stopwatch,
) -> Result<(bool, String)> {
    let points: Vec<Result<(bool, Row)>> = sw.time("sweep", || {
        grids
            .par_iter()
            .map(|&(nx, nv)| {
                let prob = build_problem(cfg, nx, nv).with_context(|| format!("sweep grid ({nx}, {nv})"))?;
                let norms = system_norms(&prob.ode, &prob.opts).context("analysis.system_norms")?;
                let c = convergence_r_with_norms(cfg.coupling, &norms, &prob.u_in)?;
                let closed = (cfg.coupling == Coupling::Gauss && nx >= 2)
                    .then(|| r_closed_form(&prob.params, &prob.grid).ok())
                    .flatten();
                Ok((
                    c.feasible,
                    vec![
                        ("N_x".into(), json!(nx)),
                        ("N_v".into(), json!(nv)),
                        ("d".into(), json!(prob.ode.dim)),
                        ("mu".into(), num(c.mu_f1)),
                        ("norm_F2".into(), opt_num(c.norm_f2)),
                        ("norm_F1".into(), num(c.norm_f1)),
                        ("norm_F0".into(), opt_num(c.norm_f0)),
                        ("norm_u_in".into(), num(c.norm_uin)),
                        ("R".into(), num(c.r)),
                        ("R_closed_form".into(), opt_num(closed)),
                        ("R_asymptotic".into(), num(asymptotic_r(&prob.params, &prob.grid))),
                        ("gamma".into(), opt_num(c.gamma)),
                        ("feasible".into(), json!(c.feasible)),
                    ],
                ))
            })
            .collect()
    });
    let points = points.into_iter().collect::<Result<Vec<_>>>()?;
    let n_ok = points.iter().filter(|(f, _)| *f).count();
    let rows: Vec<_> = points.into_iter().map(|(_, r)| r).collect();
    artifacts.tables.push(rows_to_table("sweep_grid", &rows));
    report.insert("sweep".into(), json!({ "variable": "grid", "rows": rows_to_json(&rows) }));
    let feasible = n_ok == rows.len();
    let verdict = format!("R < 1 on {n_ok} of {} grids", rows.len());
    headline(report, None, feasible, &verdict);
    Ok((feasible, verdict))
}

fn rows_to_json(rows: &[Row]) -> Value {
    Value::Array(rows.iter().map(|r| Value::Object(r.iter().cloned().collect())).collect())
}

fn rows_to_table(name: &str, rows: &[Row]) -> Table {
    let header = rows.first().map(|r| r.iter().map(|(k, _)| k.clone()).collect()).unwrap_or_default();
    let text = |v: &Value| match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    };
    Table { name: name.into(), header, rows: rows.iter().map(|r| r.iter().map(|(_, v)| text(v)).collect()).collect() }
}
