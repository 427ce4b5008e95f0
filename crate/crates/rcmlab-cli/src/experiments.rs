//! Parameter sets and runners, one per experiment kind.

use std::sync::Arc;

use rayon::prelude::*;
use rcmlab::environment::{
    field_sidecar, field_table, make_dynamic, make_speed, sample_iid, ConductanceField, ConductanceLaw, DynamicEnvironment, DynamicSpec, SpeedMeasure,
    SpeedSpec,
};
use rcmlab::glmodel::{
    brascamp_lieb_check, cov_direct, cov_hs, cov_scaling_curve, covariance_table, default_dt, evolve, gff_test, hs_integrals, omega_moment,
    sample_gibbs, CovRow, DirichletBasis, GffSpec, GibbsMode, GibbsParams, HsParams, InterfaceField, LangevinParams, Potential, PotentialSpec,
    TestFunction, Trajectory,
};
use rcmlab::heatkernel::{kernel_table, solve_dynamic, solve_static, Observe, SolverParams};
use rcmlab::io::{fmt_f64, Table};
use rcmlab::lattice::{Boundary, LatticeBox};
use rcmlab::llt::{
    annealed_curve, annealed_curve_dynamic, ball_vertices, diag_bounds, holder_exponent, oscillation_measure, quenched_curve,
    quenched_curve_dynamic, DynamicEnsemble, GaussianKernel, LltErrorCurve, LltWindow, StaticEnsemble,
};
use rcmlab::regularity::{calibrate, CalibrationSpec};
use rcmlab::rng;
use rcmlab::row;
use rcmlab::special::linear_fit;
use rcmlab::walker::{estimate_sigma, path_table, simulate_dynamic, simulate_static, thinning_bound, EnsembleSpec};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::{CliError, CliResult, Context, Experiment, Output};

fn ensure(ok: bool, path: &str, reason: &str) -> CliResult<()> {
    if ok {
        Ok(())
    } else {
        Err(CliError::config(path, reason))
    }
}

fn check_box(d: usize, side: usize, min_d: usize) -> CliResult<()> {
    ensure(d >= min_d, "params.d", &format!("dimension must be at least {min_d}"))?;
    ensure(d <= 6, "params.d", "dimension above 6 is not supported")?;
    ensure(side >= 3 && side % 2 == 1, "params.side", "side must be odd and at least 3")
}

fn check_law(law: &ConductanceLaw, path: &str) -> CliResult<()> {
    law.validate().map_err(|e| CliError::config(path, e.to_string()))
}

fn check_speed(speed: &SpeedSpec) -> CliResult<()> {
    match speed {
        SpeedSpec::Custom { law, .. } => check_law(law, "params.speed.law"),
        _ => Ok(()),
    }
}

fn check_dynamic(spec: &DynamicSpec, path: &str) -> CliResult<()> {
    match spec {
        DynamicSpec::StaticLift { law } => check_law(law, &format!("{path}.law")),
        DynamicSpec::Resampling { law, rate } => {
            check_law(law, &format!("{path}.law"))?;
            ensure(*rate > 0.0 && rate.is_finite(), &format!("{path}.rate"), "rate must be positive")
        }
    }
}

fn check_ns(ns: &[usize]) -> CliResult<()> {
    ensure(!ns.is_empty(), "params.n_list", "must not be empty")?;
    ensure(ns.iter().all(|&n| n >= 1), "params.n_list", "scales must be positive")?;
    ensure(ns.windows(2).all(|w| w[0] < w[1]), "params.n_list", "scales must be strictly increasing")
}

fn check_solver(s: &SolverParams) -> CliResult<()> {
    s.validate().map_err(|e| CliError::config("params.solver", e.to_string()))
}

fn lattice(d: usize, side: usize, boundary: Boundary) -> CliResult<Arc<LatticeBox>> {
    Ok(Arc::new(LatticeBox::new(d, side, boundary)?))
}

fn vertex(lat: &LatticeBox, x0: &Option<Vec<i64>>) -> CliResult<usize> {
    match x0 {
        None => Ok(lat.origin()),
        Some(z) => {
            ensure(z.len() == lat.dim(), "params.x0", "needs one coordinate per dimension")?;
            lat.vertex(z).map_err(|e| CliError::config("params.x0", e.to_string()))
        }
    }
}

/// Speed measure with the custom-law seed drawn below the experiment seed.
fn speed_for(ctx: &Context, field: &ConductanceField, spec: &SpeedSpec) -> CliResult<SpeedMeasure> {
    let spec = match spec {
        SpeedSpec::Custom { law, seed } => SpeedSpec::Custom { law: law.clone(), seed: rng::derive(ctx.seed(&["speed"]), &[*seed]) },
        s => s.clone(),
    };
    Ok(make_speed(field, &spec)?)
}

fn log_uniform() -> ConductanceLaw {
    ConductanceLaw::LogUniform { a: 0.5, b: 2.0 }
}

fn unit_law() -> ConductanceLaw {
    ConductanceLaw::Constant { value: 1.0 }
}

fn coord_header(d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("x{i}")).collect()
}

/// `(Sigma^2, a)` of the limiting kernel. The VSRW diffusivity is known in
/// closed form for constant laws and, in `d = 2`, for log-uniform laws
/// (invariant under `omega -> ab/omega`).
pub fn gaussian_for(d: usize, law: &ConductanceLaw, speed: &SpeedSpec, sigma2: &Option<Vec<Vec<f64>>>, a: Option<f64>) -> CliResult<GaussianKernel> {
    let mean_theta = match speed {
        SpeedSpec::Vsrw => 1.0,
        SpeedSpec::Csrw => 2.0 * d as f64 * law.mean(),
        SpeedSpec::Custom { law, .. } => law.mean(),
    };
    let a = a.unwrap_or(1.0 / mean_theta);
    if let Some(rows) = sigma2 {
        return GaussianKernel::from_rows(rows, a).map_err(|e| CliError::config("params.sigma2", e.to_string()));
    }
    let vsrw = match *law {
        ConductanceLaw::Constant { value } => 2.0 * value,
        ConductanceLaw::LogUniform { a, b } if d == 2 => 2.0 * (a * b).sqrt(),
        _ => return Err(CliError::config("params.sigma2", "required: no closed form for this law")),
    };
    Ok(GaussianKernel::isotropic(d, vsrw / mean_theta, a)?)
}

fn llt_summary(curve: &LltErrorCurve, gk: &GaussianKernel) -> CliResult<Value> {
    let origin = vec![0.0; gk.dim()];
    let scale = gk.a * gk.k(curve.window.t1, &origin)?;
    Ok(json!({
        "strictly_decreasing": curve.strictly_decreasing(),
        "sup_error": curve.sup_error,
        "a_k_t1_0": scale,
        "relative_last": curve.sup_error.last().map(|e| e / scale),
    }))
}

fn default_window() -> LltWindow {
    LltWindow { k: 1.0, t1: 0.5, t2: 1.0 }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSample {
    pub d: usize,
    pub side: usize,
    pub boundary: Boundary,
    pub law: ConductanceLaw,
    pub speed: SpeedSpec,
}

impl Default for EnvSample {
    fn default() -> Self {
        EnvSample { d: 2, side: 33, boundary: Boundary::Periodic, law: log_uniform(), speed: SpeedSpec::Vsrw }
    }
}

impl Experiment for EnvSample {
    fn validate(&self) -> CliResult<()> {
        check_box(self.d, self.side, 2)?;
        check_law(&self.law, "params.law")?;
        check_speed(&self.speed)
    }

    fn run(&self, ctx: &Context) -> CliResult<Output> {
        let lat = lattice(self.d, self.side, self.boundary)?;
        let field = sample_iid(lat.clone(), &self.law, ctx.seed(&["field"]))?;
        let speed = speed_for(ctx, &field, &self.speed)?;
        let mut theta = Table::new(coord_header(self.d).into_iter().chain(["theta".to_string()]));
        for (v, &t) in speed.theta.iter().enumerate() {
            let mut r: Vec<String> = lat.coords(v).iter().map(|c| c.to_string()).collect();
            r.push(fmt_f64(t));
            theta.push(r);
        }
        let sidecar: Value = serde_json::from_str(&field_sidecar(&field)?).map_err(rcmlab::Error::from)?;
        let n = field.omega.len() as f64;
        Ok(Output {
            tables: vec![("env".into(), field_table(&field)), ("speed".into(), theta)],
            documents: vec![("env".into(), sidecar)],
            summary: json!({
                "n_edges": field.omega.len(),
                "mean_omega": field.omega.iter().sum::<f64>() / n,
                "min_omega": field.omega.iter().cloned().fold(f64::INFINITY, f64::min),
                "max_omega": field.max(),
                "mean_theta": speed.mean(),
            }),
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Walk {
    pub d: usize,
    pub side: usize,
    pub boundary: Boundary,
    pub law: ConductanceLaw,
    pub speed: SpeedSpec,
    /// Time-dependent conductances (VSRW only) instead of `law`.
    pub dynamic: Option<DynamicSpec>,
    pub x0: Option<Vec<i64>>,
    pub t_end: f64,
    pub n_paths: usize,
}

impl Default for Walk {
    fn default() -> Self {
        Walk {
            d: 2,
            side: 33,
            boundary: Boundary::Periodic,
            law: log_uniform(),
            speed: SpeedSpec::Vsrw,
            dynamic: None,
            x0: None,
            t_end: 10.0,
            n_paths: 5,
        }
    }
}

impl Experiment for Walk {
    fn validate(&self) -> CliResult<()> {
        check_box(self.d, self.side, 2)?;
        check_law(&self.law, "params.law")?;
        check_speed(&self.speed)?;
        if let Some(spec) = &self.dynamic {
            check_dynamic(spec, "params.dynamic")?;
            ensure(self.speed == SpeedSpec::Vsrw, "params.speed", "dynamic walks are variable speed")?;
        }
        ensure(self.t_end >= 0.0 && self.t_end.is_finite(), "params.t_end", "must be nonnegative")?;
        ensure(self.n_paths >= 1, "params.n_paths", "must be positive")
    }

    fn run(&self, ctx: &Context) -> CliResult<Output> {
        let lat = lattice(self.d, self.side, self.boundary)?;
        let x0 = vertex(&lat, &self.x0)?;
        let base = ctx.seed(&["path"]);
        let seeds: Vec<u64> = (0..self.n_paths).map(|i| rng::derive(base, &[i as u64])).collect();
        let paths = match &self.dynamic {
            Some(spec) => {
                let env = make_dynamic(lat.clone(), spec, self.t_end, ctx.seed(&["environment"]))?;
                let bound = thinning_bound(&env);
                seeds.par_iter().map(|&s| simulate_dynamic(&env, x0, 0.0, self.t_end, bound, s)).collect::<rcmlab::Result<Vec<_>>>()?
            }
            None => {
                let field = sample_iid(lat.clone(), &self.law, ctx.seed(&["field"]))?;
                let speed = speed_for(ctx, &field, &self.speed)?;
                seeds.par_iter().map(|&s| simulate_static(&field, &speed, x0, self.t_end, s)).collect::<rcmlab::Result<Vec<_>>>()?
            }
        };
        let jumps: usize = paths.iter().map(|p| p.jumps.len()).sum();
        let killed = paths.iter().filter(|p| p.killed()).count();
        Ok(Output {
            tables: vec![("paths".into(), path_table(&lat, &paths))],
            documents: vec![],
            summary: json!({ "mean_jumps": jumps as f64 / paths.len() as f64, "killed": killed }),
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HkSolve {
    pub d: usize,
    pub side: usize,
    pub boundary: Boundary,
    pub law: ConductanceLaw,
    pub speed: SpeedSpec,
    pub dynamic: Option<DynamicSpec>,
    pub x0: Option<Vec<i64>>,
    /// Start time of a dynamic kernel.
    pub s: f64,
    pub times: Vec<f64>,
    /// Observe only the ball of this radius around `x0`.
    pub radius: Option<f64>,
    pub solver: SolverParams,
}

impl Default for HkSolve {
    fn default() -> Self {
        HkSolve {
            d: 2,
            side: 33,
            boundary: Boundary::Periodic,
            law: log_uniform(),
            speed: SpeedSpec::Vsrw,
            dynamic: None,
            x0: None,
            s: 0.0,
            times: vec![1.0, 2.0, 4.0],
            radius: None,
            solver: SolverParams::default(),
        }
    }
}

impl Experiment for HkSolve {
    fn validate(&self) -> CliResult<()> {
        check_box(self.d, self.side, 2)?;
        check_law(&self.law, "params.law")?;
        check_speed(&self.speed)?;
        check_solver(&self.solver)?;
        if let Some(spec) = &self.dynamic {
            check_dynamic(spec, "params.dynamic")?;
            ensure(self.speed == SpeedSpec::Vsrw, "params.speed", "dynamic kernels are variable speed")?;
        }
        ensure(!self.times.is_empty(), "params.times", "must not be empty")?;
        ensure(self.times.windows(2).all(|w| w[0] <= w[1]), "params.times", "must be sorted")?;
        ensure(self.times[0] >= self.s, "params.times", "must not precede the start time s")?;
        ensure(self.s >= 0.0, "params.s", "must be nonnegative")?;
        ensure(self.radius.map_or(true, |r| r >= 0.0), "params.radius", "must be nonnegative")
    }

    fn run(&self, ctx: &Context) -> CliResult<Output> {
        let lat = lattice(self.d, self.side, self.boundary)?;
        let x0 = vertex(&lat, &self.x0)?;
        let observe = match self.radius {
            Some(r) => Observe::Subset(ball_vertices(&lat, x0, r)?),
            None => Observe::All,
        };
        let hk = match &self.dynamic {
            Some(spec) => {
                let env = make_dynamic(lat.clone(), spec, *self.times.last().unwrap(), ctx.seed(&["environment"]))?;
                solve_dynamic(&env, self.s, x0, &self.times, &self.solver, &observe)?
            }
            None => {
                let field = sample_iid(lat.clone(), &self.law, ctx.seed(&["field"]))?;
                let speed = speed_for(ctx, &field, &self.speed)?;
                solve_static(&field, &speed, x0, &self.times, &self.solver, &observe)?
            }
        };
        let mass: Vec<f64> = hk.prob.values.iter().map(|r| r.iter().sum()).collect();
        let meta = json!({
            "lambda": hk.meta.lambda,
            "k_max": hk.meta.k_max,
            "eps_trunc": hk.meta.eps_trunc,
            "tail_bound": hk.meta.tail_bound,
            "dt": hk.meta.dt,
            "steps": hk.meta.steps,
        });
        Ok(Output {
            tables: vec![("kernel".into(), kernel_table(&hk))],
            documents: vec![("kernel".into(), meta.clone())],
            summary: json!({ "observed_mass": mass, "meta": meta }),
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LltQuenched {
    pub d: usize,
    pub law: ConductanceLaw,
    pub speed: SpeedSpec,
    pub window: LltWindow,
    pub n_list: Vec<usize>,
    /// Limiting covariance; derived when a closed form exists.
    pub sigma2: Option<Vec<Vec<f64>>>,
    pub a: Option<f64>,
    pub solver: SolverParams,
}

impl Default for LltQuenched {
    fn default() -> Self {
        LltQuenched {
            d: 2,
            law: unit_law(),
            speed: SpeedSpec::Vsrw,
            window: default_window(),
            n_list: vec![8, 16, 32],
            sigma2: None,
            a: None,
            solver: SolverParams::default(),
        }
    }
}

fn check_llt(d: usize, law: &ConductanceLaw, speed: &SpeedSpec, window: &LltWindow, ns: &[usize], solver: &SolverParams) -> CliResult<()> {
    check_box(d, 3, 2)?;
    check_law(law, "params.law")?;
    check_speed(speed)?;
    window.validate().map_err(|e| CliError::config("params.window", e.to_string()))?;
    check_ns(ns)?;
    check_solver(solver)
}

impl Experiment for LltQuenched {
    fn validate(&self) -> CliResult<()> {
        check_llt(self.d, &self.law, &self.speed, &self.window, &self.n_list, &self.solver)?;
        gaussian_for(self.d, &self.law, &self.speed, &self.sigma2, self.a).map(|_| ())
    }

    fn run(&self, ctx: &Context) -> CliResult<Output> {
        let gk = gaussian_for(self.d, &self.law, &self.speed, &self.sigma2, self.a)?;
        let nmax = *self.n_list.last().unwrap();
        let lat = lattice(self.d, self.window.required_side(nmax), Boundary::Periodic)?;
        let field = sample_iid(lat, &self.law, ctx.seed(&["field"]))?;
        let speed = speed_for(ctx, &field, &self.speed)?;
        let curve = quenched_curve(&field, &speed, &gk, &self.window, &self.n_list, &self.solver)?;
        Ok(Output { tables: vec![("llt".into(), curve.table())], documents: vec![], summary: llt_summary(&curve, &gk)? })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LltAnnealed {
    pub d: usize,
    pub law: ConductanceLaw,
    pub speed: SpeedSpec,
    pub window: LltWindow,
    pub n_list: Vec<usize>,
    pub m_envs: usize,
    pub sigma2: Option<Vec<Vec<f64>>>,
    pub a: Option<f64>,
    pub solver: SolverParams,
}

impl Default for LltAnnealed {
    fn default() -> Self {
        LltAnnealed {
            d: 2,
            law: log_uniform(),
            speed: SpeedSpec::Vsrw,
            window: default_window(),
            n_list: vec![8, 16, 32],
            m_envs: 16,
            sigma2: None,
            a: None,
            solver: SolverParams::default(),
        }
    }
}

impl Experiment for LltAnnealed {
    fn validate(&self) -> CliResult<()> {
        check_llt(self.d, &self.law, &self.speed, &self.window, &self.n_list, &self.solver)?;
        ensure(self.m_envs >= 1, "params.m_envs", "must be positive")?;
        gaussian_for(self.d, &self.law, &self.speed, &self.sigma2, self.a).map(|_| ())
    }

    fn run(&self, ctx: &Context) -> CliResult<Output> {
        let gk = gaussian_for(self.d, &self.law, &self.speed, &self.sigma2, self.a)?;
        let ens = StaticEnsemble { d: self.d, law: self.law.clone(), speed: self.speed.clone(), m_envs: self.m_envs, seed: ctx.seed(&["environments"]) };
        let curve = annealed_curve(&ens, &gk, &self.window, &self.n_list, &self.solver)?;
        Ok(Output { tables: vec![("llt".into(), curve.table())], documents: vec![], summary: llt_summary(&curve, &gk)? })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LltDynamic {
    pub d: usize,
    pub spec: DynamicSpec,
    pub window: LltWindow,
    pub n_list: Vec<usize>,
    /// Average over `m_envs` environments; a single quenched environment otherwise.
    pub annealed: bool,
    pub m_envs: usize,
    /// Estimated from kernel second moments when absent.
    pub sigma2: Option<Vec<Vec<f64>>>,
    pub solver: SolverParams,
}

impl Default for LltDynamic {
    fn default() -> Self {
        LltDynamic {
            d: 2,
            spec: DynamicSpec::Resampling { law: log_uniform(), rate: 0.05 },
            window: default_window(),
            n_list: vec![8, 16, 32],
            annealed: true,
            m_envs: 16,
            sigma2: None,
            solver: SolverParams { dt: 4.0, ..SolverParams::default() },
        }
    }
}

impl Experiment for LltDynamic {
    fn validate(&self) -> CliResult<()> {
        check_box(self.d, 3, 2)?;
        check_dynamic(&self.spec, "params.spec")?;
        self.window.validate().map_err(|e| CliError::config("params.window", e.to_string()))?;
        check_ns(&self.n_list)?;
        check_solver(&self.solver)?;
        ensure(self.m_envs >= 1, "params.m_envs", "must be positive")?;
        if let Some(rows) = &self.sigma2 {
            GaussianKernel::from_rows(rows, 1.0).map_err(|e| CliError::config("params.sigma2", e.to_string()))?;
        }
        Ok(())
    }

    fn run(&self, ctx: &Context) -> CliResult<Output> {
        let gk = self.sigma2.as_ref().map(|rows| GaussianKernel::from_rows(rows, 1.0)).transpose()?;
        let curve = if self.annealed {
            let ens = DynamicEnsemble { d: self.d, spec: self.spec.clone(), m_envs: self.m_envs, seed: ctx.seed(&["environments"]) };
            annealed_curve_dynamic(&ens, gk.as_ref(), &self.window, &self.n_list, &self.solver)?
        } else {
            let nmax = *self.n_list.last().unwrap();
            let lat = lattice(self.d, self.window.required_side(nmax), Boundary::Periodic)?;
            let horizon = (nmax * nmax) as f64 * self.window.t2;
            let env = make_dynamic(lat, &self.spec, horizon, ctx.seed(&["environment"]))?;
            quenched_curve_dynamic(&env, gk.as_ref(), &self.window, &self.n_list, &self.solver)?
        };
        let used = GaussianKernel::from_rows(&curve.sigma2, curve.a)?;
        Ok(Output { tables: vec![("llt".into(), curve.table())], documents: vec![], summary: llt_summary(&curve, &used)? })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sigma {
    pub d: usize,
    pub side: usize,
    pub law: ConductanceLaw,
    pub speed: SpeedSpec,
    pub n_envs: usize,
    pub paths_per_env: usize,
    pub t: f64,
}

impl Default for Sigma {
    fn default() -> Self {
        Sigma { d: 2, side: 201, law: log_uniform(), speed: SpeedSpec::Vsrw, n_envs: 10, paths_per_env: 1000, t: 50.0 }
    }
}

impl Experiment for Sigma {
    fn validate(&self) -> CliResult<()> {
        check_box(self.d, self.side, 2)?;
        check_law(&self.law, "params.law")?;
        check_speed(&self.speed)?;
        ensure(self.n_envs >= 1, "params.n_envs", "must be positive")?;
        ensure(self.paths_per_env >= 1, "params.paths_per_env", "must be positive")?;
        ensure(self.t > 0.0 && self.t.is_finite(), "params.t", "must be positive")
    }

    fn run(&self, ctx: &Context) -> CliResult<Output> {
        let speed = match &self.speed {
            SpeedSpec::Custom { law, seed } => SpeedSpec::Custom { law: law.clone(), seed: rng::derive(ctx.seed(&["speed"]), &[*seed]) },
            s => s.clone(),
        };
        let spec = EnsembleSpec {
            d: self.d,
            side: self.side,
            law: self.law.clone(),
            speed,
            n_envs: self.n_envs,
            paths_per_env: self.paths_per_env,
            seed: ctx.seed(&["ensemble"]),
        };
        let est = estimate_sigma(&spec, self.t)?;
        let predicted = est.predicted();
        let mut table = Table::new(["i", "j", "t", "sigma2", "stderr", "sigma2_vsrw", "stderr_vsrw", "predicted", "a_hat", "n_samples"]);
        for i in 0..self.d {
            for j in 0..self.d {
                table.push(row![
                    i + 1,
                    j + 1,
                    self.t,
                    est.sigma2[i][j],
                    est.sigma2_stderr[i][j],
                    est.sigma2_vsrw[i][j],
                    est.sigma2_vsrw_stderr[i][j],
                    predicted[i][j],
                    est.a_hat,
                    est.n_samples
                ]);
            }
        }
        Ok(Output { tables: vec![("sigma".into(), table)], documents: vec![], summary: json!({ "mean_jumps": est.mean_jumps, "a_hat": est.a_hat }) })
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegCheck {
    pub calibration: CalibrationSpec,
}

impl Experiment for RegCheck {
    fn validate(&self) -> CliResult<()> {
        check_box(self.calibration.d, 3, 2).map_err(|e| match e {
            CliError::Config { reason, .. } => CliError::config("params.calibration.d", reason),
            e => e,
        })?;
        check_law(&self.calibration.law, "params.calibration.law")?;
        self.calibration.validate().map_err(|e| CliError::config("params.calibration", e.to_string()))?;
        Ok(())
    }

    fn run(&self, ctx: &Context) -> CliResult<Output> {
        let spec = CalibrationSpec { seed: rng::derive(ctx.seed(&["calibration"]), &[self.calibration.seed]), ..self.calibration.clone() };
        let report = calibrate(&spec)?;
        let mut summary = Table::new(["inequality", "c_min", "c_max", "ratio", "valid_fraction", "stable"]);
        for s in &report.summaries {
            summary.push(row![s.kind.name(), s.c_min, s.c_max, s.ratio, s.valid_fraction, s.stable]);
        }
        Ok(Output {
            tables: vec![("regularity".into(), report.table()), ("regularity_summary".into(), summary)],
            documents: vec![("exponents".into(), serde_json::to_value(&report.bundle).map_err(rcmlab::Error::from)?)],
            summary: json!({ "pass": report.pass(), "pooled_fraction": report.pooled_fraction, "level": report.level }),
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlSim {
    pub d: usize,
    pub side: usize,
    pub boundary: Boundary,
    pub potential: PotentialSpec,
    pub sampler: GibbsMode,
    pub gibbs: GibbsParams,
}

impl Default for GlSim {
    fn default() -> Self {
        GlSim {
            d: 3,
            side: 9,
            boundary: Boundary::Absorbing,
            potential: PotentialSpec::Quadratic { stiffness: 1.0 },
            sampler: GibbsMode::LangevinBurnin,
            gibbs: GibbsParams::new(4),
        }
    }
}

fn potential(spec: &PotentialSpec) -> CliResult<Potential> {
    Potential::new(spec.clone()).map_err(|e| CliError::config("params.potential", e.to_string()))
}

impl Experiment for GlSim {
    fn validate(&self) -> CliResult<()> {
        check_box(self.d, self.side, 2)?;
        potential(&self.potential)?;
        ensure(self.gibbs.n_samples >= 1, "params.gibbs.n_samples", "must be positive")?;
        ensure(self.gibbs.mass >= 0.0, "params.gibbs.mass", "must be nonnegative")?;
        ensure(self.gibbs.dt.map_or(true, |dt| dt > 0.0), "params.gibbs.dt", "must be positive")
    }

    fn run(&self, ctx: &Context) -> CliResult<Output> {
        let lat = lattice(self.d, self.side, self.boundary)?;
        let pot = potential(&self.potential)?;
        let samples = sample_gibbs(&lat, &pot, self.sampler, &self.gibbs, ctx.seed(&["gibbs"]))?;
        let mut table = Table::new(["sample".to_string()].into_iter().chain(coord_header(self.d)).chain(["phi".to_string()]));
        for (i, s) in samples.iter().enumerate() {
            let t = s.table();
            for r in t.rows {
                let mut cells = vec![i.to_string()];
                cells.extend(r);
                table.push(cells);
            }
        }
        let o = lat.origin();
        let second = samples.iter().map(|s| s.phi[o] * s.phi[o]).sum::<f64>() / samples.len() as f64;
        Ok(Output { tables: vec![("snapshots".into(), table)], documents: vec![], summary: json!({ "mean_phi0_squared": second }) })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovPoint {
    pub t: f64,
    pub x: Vec<i64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlCov {
    pub d: usize,
    pub side: usize,
    pub potential: PotentialSpec,
    pub chains: usize,
    /// Euler-Maruyama step; a potential-dependent default when absent.
    pub dt: Option<f64>,
    /// Defaults to 20 relaxation times `1/(c_- lambda_1)`.
    pub burn_in: Option<f64>,
    pub t_end: f64,
    pub record_every: f64,
    /// Start quadratic chains from exact Gibbs samples instead of zero.
    pub exact_start: bool,
    pub points: Vec<CovPoint>,
    /// Extra lags at `x = 0` for the decay fit of `cov(phi_0(0), phi_t(0))`.
    pub decay_times: Vec<f64>,
    pub hs: HsParams,
}

impl Default for GlCov {
    fn default() -> Self {
        GlCov {
            d: 3,
            side: 7,
            potential: PotentialSpec::Anharmonic { lambda: 0.1 },
            chains: 20,
            dt: None,
            burn_in: None,
            t_end: 300.0,
            record_every: 0.05,
            exact_start: false,
            points: vec![
                CovPoint { t: 1.0, x: vec![0, 0, 0] },
                CovPoint { t: 1.0, x: vec![1, 0, 0] },
                CovPoint { t: 4.0, x: vec![0, 0, 0] },
            ],
            decay_times: vec![1.0, 2.0, 4.0, 8.0, 16.0],
            hs: HsParams { start_every: 4.0, ..HsParams::default() },
        }
    }
}

/// Ensemble of Langevin chains with direct and kernel-integral covariances.
#[derive(Clone, Debug)]
pub struct CovarianceRun {
    pub rows: Vec<CovRow>,
    /// Standard errors of the kernel-integral estimates.
    pub hs_stderr: Vec<f64>,
    pub z_scores: Vec<f64>,
    pub decay: Vec<(f64, f64)>,
    pub decay_slope: Option<f64>,
    pub brascamp_lieb: Option<rcmlab::glmodel::BrascampLieb>,
    pub min_omega: Option<f64>,
    pub omega_moment: Option<rcmlab::glmodel::OmegaMoment>,
}

impl GlCov {
    fn grid_multiple(&self, x: f64, path: &str) -> CliResult<()> {
        let k = (x / self.hs.h).round();
        ensure((k * self.hs.h - x).abs() < 1e-9 * x.max(1.0) && x >= 0.0, path, "must be a nonnegative multiple of hs.h")?;
        let k = (x / self.record_every).round();
        ensure((k * self.record_every - x).abs() < 1e-9 * x.max(1.0), path, "must be a multiple of record_every")
    }

    pub fn compute(&self, ctx: &Context) -> CliResult<CovarianceRun> {
        let lat = lattice(self.d, self.side, Boundary::Absorbing)?;
        let pot = potential(&self.potential)?;
        let basis = DirichletBasis::new(lat.clone())?;
        let gap = pot.c_minus() * basis.lambda_min();
        let dt = self.dt.unwrap_or_else(|| default_dt(&pot));
        let quadratic = pot.is_quadratic();
        let exact = self.exact_start && quadratic;
        let burn_in = if exact { 0.0 } else { self.burn_in.unwrap_or(20.0 / gap) };
        let burn_in = (burn_in / dt - 1e-9).ceil().max(1.0) * dt;
        let burn_in = if exact { 0.0 } else { burn_in };
        let o = lat.origin();
        let mut record: Vec<usize> = vec![o];
        for p in &self.points {
            record.push(lat.vertex(&p.x).map_err(|e| CliError::config("params.points", e.to_string()))?);
        }
        let starts: Vec<InterfaceField> = if exact {
            sample_gibbs(&lat, &pot, GibbsMode::ExactGaussian, &GibbsParams::new(self.chains), ctx.seed(&["start"]))?
        } else {
            vec![InterfaceField::zero(lat.clone()); self.chains]
        };
        let lp = LangevinParams {
            burn_in,
            record_every: self.record_every,
            record: quadratic.then_some(record),
            ..LangevinParams::new(dt, self.t_end)
        };
        let base = ctx.seed(&["chain"]);
        let trajs: Vec<Trajectory> = starts
            .par_iter()
            .enumerate()
            .map(|(i, phi0)| evolve(phi0, &pot, &lp, rng::derive(base, &[i as u64])))
            .collect::<rcmlab::Result<_>>()?;
        let mut all: Vec<(f64, Vec<i64>)> = self.points.iter().map(|p| (p.t, p.x.clone())).collect();
        let zero = vec![0i64; self.d];
        for &t in &self.decay_times {
            if !all.iter().any(|(s, x)| *s == t && *x == zero) {
                all.push((t, zero.clone()));
            }
        }
        let (hs_values, hs_stderr, tails): (Vec<f64>, Vec<f64>, Vec<f64>) = if quadratic {
            let s = pot.stiffness();
            let field = ConductanceField::constant(lat.clone(), s)?;
            let env = DynamicEnvironment::static_lift(field, (0.0, f64::INFINITY));
            let r = hs_integrals(&env, 0.0, &all, s, &self.hs)?;
            (r.values, vec![0.0; all.len()], r.tails)
        } else {
            let est = cov_hs(&trajs, &pot, &all, &self.hs)?;
            (est.iter().map(|e| e.value).collect(), est.iter().map(|e| e.stderr).collect(), est.iter().map(|e| e.tail_bound).collect())
        };
        let mut rows = Vec::new();
        let mut z_scores = Vec::new();
        for (i, p) in self.points.iter().enumerate() {
            let direct = cov_direct(&trajs, &p.x, p.t)?;
            let target = quadratic.then(|| basis.cov_time(p.t, o, lat.vertex(&p.x).unwrap(), pot.stiffness()));
            let reference = target.unwrap_or(hs_values[i]);
            let sigma = (direct.stderr.powi(2) + hs_stderr[i].powi(2)).sqrt();
            z_scores.push((direct.value - reference) / sigma);
            rows.push(CovRow {
                n: None,
                t: p.t,
                x: p.x.clone(),
                cov_mc: Some(direct.value),
                stderr: Some(direct.stderr),
                cov_hs: Some(hs_values[i]),
                tail_bound: Some(tails[i]),
                target,
            });
        }
        let decay: Vec<(f64, f64)> = self
            .decay_times
            .iter()
            .map(|&t| {
                let i = all.iter().position(|(s, x)| *s == t && *x == zero).unwrap();
                (t, hs_values[i])
            })
            .collect();
        let positive: Vec<&(f64, f64)> = decay.iter().filter(|(_, v)| *v > 0.0).collect();
        let decay_slope = (positive.len() >= 2).then(|| {
            let xs: Vec<f64> = positive.iter().map(|(t, _)| t.ln()).collect();
            let ys: Vec<f64> = positive.iter().map(|(_, v)| v.ln()).collect();
            linear_fit(&xs, &ys).1
        });
        let (brascamp_lieb, min_omega, omega) = if quadratic {
            (None, None, None)
        } else {
            let mut nu = vec![0.0; lat.n_vertices()];
            nu[o] = 1.0;
            let pooled: Vec<Vec<f64>> = trajs.iter().flat_map(|tr| tr.snapshots.iter().cloned()).collect();
            let bl = brascamp_lieb_check(&lat, &pot, &nu, &pooled)?;
            let om = omega_moment(&trajs, &pot, rcmlab::glmodel::pbar(self.d))?;
            (Some(bl), Some(om.min_omega), Some(om))
        };
        Ok(CovarianceRun { rows, hs_stderr: hs_stderr[..self.points.len()].to_vec(), z_scores, decay, decay_slope, brascamp_lieb, min_omega, omega_moment: omega })
    }
}

impl Experiment for GlCov {
    fn validate(&self) -> CliResult<()> {
        check_box(self.d, self.side, 3)?;
        potential(&self.potential)?;
        ensure(self.chains >= 2, "params.chains", "need at least two chains")?;
        ensure(self.dt.map_or(true, |dt| dt > 0.0), "params.dt", "must be positive")?;
        ensure(self.t_end > 0.0, "params.t_end", "must be positive")?;
        ensure(self.record_every > 0.0, "params.record_every", "must be positive")?;
        ensure(self.hs.h > 0.0, "params.hs.h", "must be positive")?;
        ensure(self.hs.start_every > 0.0, "params.hs.start_every", "must be positive")?;
        ensure(!self.points.is_empty(), "params.points", "must not be empty")?;
        let half = (self.side / 2) as i64;
        for (i, p) in self.points.iter().enumerate() {
            ensure(p.x.len() == self.d, &format!("params.points[{i}].x"), "needs one coordinate per dimension")?;
            ensure(p.x.iter().all(|c| c.abs() <= half), &format!("params.points[{i}].x"), "outside the box")?;
            self.grid_multiple(p.t, &format!("params.points[{i}].t"))?;
        }
        for (i, &t) in self.decay_times.iter().enumerate() {
            ensure(t > 0.0, &format!("params.decay_times[{i}]"), "must be positive")?;
            self.grid_multiple(t, &format!("params.decay_times[{i}]"))?;
        }
        Ok(())
    }

    fn run(&self, ctx: &Context) -> CliResult<Output> {
        let r = self.compute(ctx)?;
        Ok(Output {
            tables: vec![("covariance".into(), covariance_table(self.d, &r.rows))],
            documents: vec![],
            summary: json!({
                "z_scores": r.z_scores,
                "hs_stderr": r.hs_stderr,
                "decay": r.decay,
                "decay_slope": r.decay_slope,
                "brascamp_lieb": r.brascamp_lieb,
                "min_omega": r.min_omega,
                "omega_moment": r.omega_moment,
            }),
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlScaling {
    pub potential: PotentialSpec,
    pub x: Vec<f64>,
    pub t: f64,
    pub n_list: Vec<usize>,
}

impl Default for GlScaling {
    fn default() -> Self {
        GlScaling { potential: PotentialSpec::Quadratic { stiffness: 1.0 }, x: vec![0.0; 3], t: 1.0, n_list: vec![2, 4, 8] }
    }
}

impl Experiment for GlScaling {
    fn validate(&self) -> CliResult<()> {
        let pot = potential(&self.potential)?;
        ensure(pot.is_quadratic(), "params.potential", "the lattice kernel target needs a quadratic potential")?;
        ensure(self.x.len() >= 3, "params.x", "needs d >= 3 coordinates")?;
        ensure(self.t > 0.0, "params.t", "must be positive")?;
        check_ns(&self.n_list)
    }

    fn run(&self, _ctx: &Context) -> CliResult<Output> {
        let curve = cov_scaling_curve(&potential(&self.potential)?, &self.x, self.t, &self.n_list)?;
        let rows: Vec<CovRow> = curve
            .points
            .iter()
            .map(|p| CovRow {
                n: Some(p.n),
                t: self.t,
                x: self.x.iter().map(|c| (p.n as f64 * c).floor() as i64).collect(),
                cov_hs: Some(p.value),
                target: Some(curve.target),
                ..CovRow::default()
            })
            .collect();
        let errors: Vec<f64> = curve.points.iter().map(|p| p.rel_error).collect();
        Ok(Output {
            tables: vec![("covariance".into(), covariance_table(self.x.len(), &rows))],
            documents: vec![],
            summary: json!({ "target": curve.target, "rel_errors": errors, "decreasing": curve.errors_decreasing() }),
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlGff {
    pub potential: PotentialSpec,
    pub f: TestFunction,
    pub lambdas: Vec<f64>,
    pub n_list: Vec<usize>,
    pub n_samples: usize,
}

impl Default for GlGff {
    fn default() -> Self {
        GlGff {
            potential: PotentialSpec::Quadratic { stiffness: 1.0 },
            f: TestFunction::Bump { radius: 1.0 },
            lambdas: vec![-8.0, -6.0, -4.0, -2.0, 0.0, 2.0, 4.0, 6.0, 8.0],
            n_list: vec![2, 4, 8],
            n_samples: 20000,
        }
    }
}

impl Experiment for GlGff {
    fn validate(&self) -> CliResult<()> {
        let pot = potential(&self.potential)?;
        ensure(pot.is_quadratic(), "params.potential", "the Gaussian test needs a quadratic potential")?;
        let TestFunction::Bump { radius } = self.f;
        ensure(radius > 0.0, "params.f.radius", "must be positive")?;
        ensure(self.lambdas.len() >= 3, "params.lambdas", "need at least three points for the quadratic fit")?;
        ensure(self.n_samples >= 2, "params.n_samples", "need at least two samples")?;
        check_ns(&self.n_list)
    }

    fn run(&self, ctx: &Context) -> CliResult<Output> {
        let spec = GffSpec { f: self.f.clone(), lambdas: self.lambdas.clone(), ns: self.n_list.clone(), n_samples: self.n_samples, seed: ctx.seed(&["samples"]) };
        let rec = gff_test(&potential(&self.potential)?, &spec)?;
        let last = rec.levels.last().unwrap();
        Ok(Output {
            tables: vec![("gff".into(), rec.table())],
            documents: vec![],
            summary: json!({
                "limit_variance": rec.limit_variance,
                "variance": rec.levels.iter().map(|l| l.variance).collect::<Vec<_>>(),
                "rel_error_last": last.rel_error,
                "r2": rec.levels.iter().map(|l| l.r2).collect::<Vec<_>>(),
            }),
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagBounds {
    pub d: usize,
    pub law: ConductanceLaw,
    pub speed: SpeedSpec,
    pub dynamic: Option<DynamicSpec>,
    pub times: Vec<f64>,
    pub lambda: f64,
    pub n_envs: usize,
    /// Torus side; large enough for `6 sqrt(t_max)` when absent.
    pub side: Option<usize>,
    pub solver: SolverParams,
}

impl Default for DiagBounds {
    fn default() -> Self {
        DiagBounds {
            d: 2,
            law: log_uniform(),
            speed: SpeedSpec::Vsrw,
            dynamic: None,
            times: (0..=8).map(|i| 4.0 * 64f64.powf(i as f64 / 8.0)).collect(),
            lambda: 1.0,
            n_envs: 10,
            side: None,
            solver: SolverParams::default(),
        }
    }
}

/// Per-environment diagonal fits.
#[derive(Clone, Debug, Serialize)]
pub struct DiagRun {
    pub bounds: Vec<rcmlab::llt::DiagBounds>,
}

impl DiagBounds {
    pub fn compute(&self, ctx: &Context) -> CliResult<DiagRun> {
        let t_max = *self.times.last().unwrap();
        let side = self.side.unwrap_or(2 * (6.0 * t_max.sqrt()).ceil() as usize + 1);
        let lat = lattice(self.d, side, Boundary::Periodic)?;
        let o = lat.origin();
        let verts = ball_vertices(&lat, o, self.lambda.max(1.0) * t_max.sqrt())?;
        let base = ctx.seed(&["environment"]);
        let bounds = (0..self.n_envs)
            .into_par_iter()
            .map(|e| -> CliResult<_> {
                let seed = rng::derive(base, &[e as u64]);
                let hk = match &self.dynamic {
                    Some(spec) => {
                        let env = make_dynamic(lat.clone(), spec, t_max, seed)?;
                        solve_dynamic(&env, 0.0, o, &self.times, &self.solver, &Observe::Subset(verts.clone()))?
                    }
                    None => {
                        let field = sample_iid(lat.clone(), &self.law, seed)?;
                        let speed = match &self.speed {
                            SpeedSpec::Custom { law, seed: s } => SpeedSpec::Custom { law: law.clone(), seed: rng::derive(seed, &[*s]) },
                            s => s.clone(),
                        };
                        let speed = make_speed(&field, &speed)?;
                        solve_static(&field, &speed, o, &self.times, &self.solver, &Observe::Subset(verts.clone()))?
                    }
                };
                Ok(diag_bounds(&hk, self.lambda)?)
            })
            .collect::<CliResult<Vec<_>>>()?;
        Ok(DiagRun { bounds })
    }
}

impl Experiment for DiagBounds {
    fn validate(&self) -> CliResult<()> {
        check_box(self.d, 3, 2)?;
        check_law(&self.law, "params.law")?;
        check_speed(&self.speed)?;
        check_solver(&self.solver)?;
        if let Some(spec) = &self.dynamic {
            check_dynamic(spec, "params.dynamic")?;
            ensure(self.speed == SpeedSpec::Vsrw, "params.speed", "dynamic kernels are variable speed")?;
        }
        ensure(self.times.len() >= 2, "params.times", "need at least two times")?;
        ensure(self.times[0] > 0.0 && self.times.windows(2).all(|w| w[0] < w[1]), "params.times", "must be positive and increasing")?;
        ensure(self.lambda > 0.0, "params.lambda", "must be positive")?;
        ensure(self.n_envs >= 1, "params.n_envs", "must be positive")?;
        if let Some(s) = self.side {
            check_box(self.d, s, 2)?;
        }
        Ok(())
    }

    fn run(&self, ctx: &Context) -> CliResult<Output> {
        let run = self.compute(ctx)?;
        let mut values = Table::new(["env", "t", "sup_value", "inf_value"]);
        let mut fits = Table::new(["env", "upper_slope", "upper_const", "lower_slope", "lower_const"]);
        for (e, b) in run.bounds.iter().enumerate() {
            for i in 0..b.times.len() {
                values.push(row![e, b.times[i], b.sup_values[i], b.inf_values[i]]);
            }
            fits.push(row![e, b.upper_slope, b.upper_const, b.lower_slope, b.lower_const]);
        }
        let half = self.d as f64 / 2.0;
        let worst = run.bounds.iter().map(|b| (b.upper_slope + half).abs()).fold(0.0, f64::max);
        let min_lower = run.bounds.iter().map(|b| b.lower_const).fold(f64::INFINITY, f64::min);
        Ok(Output {
            tables: vec![("diag".into(), values), ("diag_fit".into(), fits)],
            documents: vec![],
            summary: json!({ "max_slope_deviation": worst, "min_lower_const": min_lower }),
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Osc {
    pub d: usize,
    pub side: usize,
    pub law: ConductanceLaw,
    pub speed: SpeedSpec,
    pub n: usize,
    pub n_envs: usize,
    pub n_anchors: usize,
    /// Distance of the anchors from the source; `2n` when absent.
    pub anchor_distance: Option<f64>,
    pub time_step: f64,
    pub solver: SolverParams,
}

impl Default for Osc {
    fn default() -> Self {
        Osc {
            d: 2,
            side: 257,
            law: log_uniform(),
            speed: SpeedSpec::Custom { law: ConductanceLaw::Uniform { a: 0.5, b: 2.0 }, seed: 0 },
            n: 32,
            n_envs: 5,
            n_anchors: 8,
            anchor_distance: None,
            time_step: 8.0,
            solver: SolverParams::default(),
        }
    }
}

/// One oscillation draw.
#[derive(Clone, Debug, Serialize)]
pub struct OscDraw {
    pub env: usize,
    pub record: rcmlab::llt::OscillationRecord,
    pub holder: Option<f64>,
}

impl Osc {
    /// Axis directions first, then diagonals of the first two axes.
    fn anchors(&self, lat: &LatticeBox) -> CliResult<Vec<usize>> {
        let r = self.anchor_distance.unwrap_or(2.0 * self.n as f64);
        let mut dirs: Vec<Vec<f64>> = Vec::new();
        for i in 0..self.d {
            for s in [1.0, -1.0] {
                let mut v = vec![0.0; self.d];
                v[i] = s;
                dirs.push(v);
            }
        }
        for (a, b) in [(1.0, 1.0), (-1.0, 1.0), (1.0, -1.0), (-1.0, -1.0)] {
            let mut v = vec![0.0; self.d];
            v[0] = a / 2f64.sqrt();
            v[1] = b / 2f64.sqrt();
            dirs.push(v);
        }
        dirs.iter()
            .take(self.n_anchors)
            .map(|v| {
                let z: Vec<i64> = v.iter().map(|c| (c * r).round() as i64).collect();
                lat.vertex(&z).map_err(|e| CliError::config("params.anchor_distance", e.to_string()))
            })
            .collect()
    }

    pub fn compute(&self, ctx: &Context) -> CliResult<Vec<OscDraw>> {
        let lat = lattice(self.d, self.side, Boundary::Periodic)?;
        let anchors = self.anchors(&lat)?;
        let n = self.n as f64;
        let mut verts = Vec::new();
        for &a in &anchors {
            verts.extend(ball_vertices(&lat, a, n)?);
        }
        let t0 = n * n;
        let steps = (t0 / self.time_step).round() as usize;
        let times: Vec<f64> = (0..=steps).map(|i| i as f64 * t0 / steps as f64).collect();
        let radii: Vec<f64> = [n / 8.0, n / 4.0, n / 2.0, n].into_iter().filter(|r| *r >= 1.0).collect();
        let base = ctx.seed(&["environment"]);
        let per_env = (0..self.n_envs)
            .into_par_iter()
            .map(|e| -> CliResult<Vec<OscDraw>> {
                let field = sample_iid(lat.clone(), &self.law, rng::derive(base, &[e as u64]))?;
                let speed = match &self.speed {
                    SpeedSpec::Custom { law, seed } => SpeedSpec::Custom { law: law.clone(), seed: rng::derive(base, &[e as u64, *seed]) },
                    s => s.clone(),
                };
                let speed = make_speed(&field, &speed)?;
                let hk = solve_static(&field, &speed, lat.origin(), &times, &self.solver, &Observe::Subset(verts.clone()))?;
                anchors
                    .iter()
                    .map(|&a| {
                        Ok(OscDraw {
                            env: e,
                            record: oscillation_measure(&hk.density, t0, a, n)?,
                            holder: holder_exponent(&hk.density, t0, a, &radii).ok(),
                        })
                    })
                    .collect()
            })
            .collect::<CliResult<Vec<_>>>()?;
        Ok(per_env.into_iter().flatten().collect())
    }
}

impl Experiment for Osc {
    fn validate(&self) -> CliResult<()> {
        check_box(self.d, self.side, 2)?;
        check_law(&self.law, "params.law")?;
        check_speed(&self.speed)?;
        check_solver(&self.solver)?;
        ensure(self.n >= 4, "params.n", "must be at least 4")?;
        ensure(self.n_envs >= 1, "params.n_envs", "must be positive")?;
        ensure(self.n_anchors >= 1 && self.n_anchors <= 2 * self.d + 4, "params.n_anchors", "between 1 and 2d + 4")?;
        ensure(self.time_step > 0.0, "params.time_step", "must be positive")?;
        let r = self.anchor_distance.unwrap_or(2.0 * self.n as f64);
        ensure(r >= 0.0 && r + self.n as f64 <= (self.side / 2) as f64, "params.side", "anchor balls must fit in the torus")
    }

    fn run(&self, ctx: &Context) -> CliResult<Output> {
        let draws = self.compute(ctx)?;
        let mut header: Vec<String> = vec!["env".into()];
        header.extend(coord_header(self.d).into_iter().map(|h| format!("anchor_{h}")));
        header.extend(["t0", "n", "osc_n", "osc_quarter", "gamma", "rho", "holder"].map(String::from));
        let mut table = Table::new(header);
        for dr in &draws {
            let r = &dr.record;
            let mut cells = vec![dr.env.to_string()];
            cells.extend(r.x0.iter().map(|c| c.to_string()));
            cells.extend(row![r.t0, r.n, r.osc_n, r.osc_quarter, r.gamma, r.rho, dr.holder]);
            table.push(cells);
        }
        let below = draws.iter().filter(|d| d.record.gamma.is_some_and(|g| g < 1.0)).count();
        Ok(Output {
            tables: vec![("osc".into(), table)],
            documents: vec![],
            summary: json!({ "draws": draws.len(), "gamma_below_one": below, "fraction": below as f64 / draws.len() as f64 }),
        })
    }
}
