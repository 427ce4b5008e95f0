//! Calibration/validation protocol for the inequality suite: implied
//! constants are calibrated on one set of environments and the inequalities
//! are then tested with the largest calibrated constant on a disjoint set.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::{make_dynamic, make_speed, sample_iid, ConductanceLaw, DynamicSpec, SpeedSpec};
use crate::heatkernel::{solve_dynamic, solve_static, Observe, SolverParams};
use crate::io::Table;
use crate::lattice::{Boundary, LatticeBox};
use crate::rng::{derive, label};
use crate::row;
use crate::{Error, Result};

use super::exponents::{exponents, Exponent, ExponentBundle};
use super::functionals::LocalData;
use super::inequalities::{
    check_energy, check_maximal, check_poincare, check_sobolev, default_cutoffs, EnergyInput, InequalityKind, InequalityReport, MaximalEnv, MaximalInput,
};

fn default_law() -> ConductanceLaw {
    ConductanceLaw::LogUniform { a: 0.5, b: 2.0 }
}

fn default_speed() -> SpeedSpec {
    SpeedSpec::Custom { law: ConductanceLaw::Uniform { a: 0.5, b: 2.0 }, seed: 0 }
}

fn four() -> Exponent {
    Exponent(4.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSpec {
    #[serde(default = "two")]
    pub d: usize,
    #[serde(default = "sixteen")]
    pub n: usize,
    #[serde(default = "default_law")]
    pub law: ConductanceLaw,
    /// For `custom`, the seed is replaced by a per-environment seed.
    #[serde(default = "default_speed")]
    pub speed: SpeedSpec,
    #[serde(default = "four")]
    pub p: Exponent,
    #[serde(default = "four")]
    pub q: Exponent,
    #[serde(default = "four")]
    pub r: Exponent,
    #[serde(default = "default_rate")]
    pub resampling_rate: f64,
    #[serde(default = "twenty")]
    pub n_calibration: usize,
    #[serde(default = "twenty")]
    pub n_validation: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub sigma: f64,
    #[serde(default = "half")]
    pub sigma_prime: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// Time grid points per `n^2`.
    #[serde(default = "default_grid")]
    pub grid_per_n2: usize,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default = "default_ratio")]
    pub max_ratio: f64,
}

fn two() -> usize {
    2
}
fn sixteen() -> usize {
    16
}
fn twenty() -> usize {
    20
}
fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn default_rate() -> f64 {
    0.05
}
fn default_delta() -> f64 {
    0.4
}
fn default_eps() -> f64 {
    0.1
}
fn default_grid() -> usize {
    64
}
fn default_level() -> f64 {
    0.95
}
fn default_ratio() -> f64 {
    10.0
}

impl Default for CalibrationSpec {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

impl CalibrationSpec {
    pub fn validate(&self) -> Result<ExponentBundle> {
        self.law.validate()?;
        if self.d < 2 {
            return Err(Error::invalid("d", "dimension must be at least 2"));
        }
        if self.n < 8 {
            return Err(Error::invalid("n", "scale must be at least 8"));
        }
        if self.n_calibration < 2 || self.n_validation < 1 {
            return Err(Error::invalid("n_calibration", "need at least two calibration and one validation environment"));
        }
        if self.grid_per_n2 < 8 {
            return Err(Error::invalid("grid_per_n2", "need at least 8 grid points per n^2"));
        }
        if !(self.level > 0.0 && self.level <= 1.0) {
            return Err(Error::invalid("level", "must lie in (0, 1]"));
        }
        let b = exponents(self.d, self.p, self.q, self.r, None)?;
        if !b.static_condition || !b.dynamic_condition {
            return Err(Error::invalid("p", "exponents violate the static or dynamic moment condition"));
        }
        Ok(b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Calibration,
    Validation,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Calibration => "calibration",
            Phase::Validation => "validation",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CalibrationRow {
    pub phase: Phase,
    pub seed: u64,
    pub report: InequalityReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KindSummary {
    pub kind: InequalityKind,
    pub c_min: f64,
    pub c_max: f64,
    pub ratio: f64,
    pub valid_fraction: f64,
    /// `ratio < max_ratio`.
    pub stable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub bundle: ExponentBundle,
    pub summaries: Vec<KindSummary>,
    /// Fraction of all (inequality, validation environment) checks that hold.
    pub pooled_fraction: f64,
    pub level: f64,
    pub rows: Vec<CalibrationRow>,
}

impl CalibrationReport {
    pub fn pass(&self) -> bool {
        self.summaries.iter().all(|s| s.stable) && self.pooled_fraction >= self.level
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new([
            "inequality", "n", "seed", "lhs", "rhs", "c_hat", "A1", "A2", "A3", "A4", "A5", "p", "q", "r", "kappa", "kappa_prime_static",
            "kappa_prime_dyn", "phase",
        ]);
        let b = &self.bundle;
        for r in &self.rows {
            let f = &r.report.functionals;
            t.push(row![
                r.report.kind.name(),
                r.report.n,
                r.seed,
                r.report.lhs,
                r.report.rhs,
                r.report.c_hat,
                f.a1,
                f.a2,
                f.a3,
                f.a4,
                f.a5,
                b.p.to_string(),
                b.q.to_string(),
                b.r.to_string(),
                b.kappa,
                b.kappa_prime_static,
                b.kappa_prime_dyn,
                r.phase.name(),
            ]);
        }
        t
    }
}

/// Grid `0, h, 2h, ...` up to `t_end` with `h = n^2 / per`, plus `extra` points.
fn grid(n: usize, per: usize, t_end: f64, extra: &[f64]) -> Vec<f64> {
    let h = (n * n) as f64 / per as f64;
    let k = (t_end / h).round() as usize;
    let mut g: Vec<f64> = (1..=k).map(|i| i as f64 * h).collect();
    g.push(0.0);
    g.extend(extra.iter().copied().filter(|&t| t >= 0.0));
    g.sort_by(f64::total_cmp);
    g.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    g
}

/// All inequality reports for one environment.
pub fn environment_reports(spec: &CalibrationSpec, bundle: &ExponentBundle, seed: u64) -> Result<Vec<InequalityReport>> {
    let n = spec.n;
    let nf = n as f64;
    let n2 = nf * nf;
    let lat = Arc::new(LatticeBox::new(spec.d, 2 * n + 3, Boundary::Periodic)?);
    let x0 = lat.origin();
    let field = sample_iid(lat.clone(), &spec.law, seed)?;
    let speed_spec = match &spec.speed {
        SpeedSpec::Custom { law, .. } => SpeedSpec::Custom { law: law.clone(), seed: derive(seed, &[label("speed")]) },
        s => s.clone(),
    };
    let speed = make_speed(&field, &speed_spec)?;
    let ball = lat.ball(x0, n as u64)?;
    let mut out = Vec::with_capacity(InequalityKind::ALL.len());

    let mut bump = vec![0.0; lat.n_vertices()];
    for &x in &ball.members {
        bump[x] = nf - lat.distance(x0, x)? as f64;
    }
    let mut r = check_sobolev(&field, &speed, &ball, &bump, spec.q)?;
    r.test_function = "bump (n - |x|)_+".into();
    out.push(r);

    let coord: Vec<f64> = (0..lat.n_vertices()).map(|x| lat.coord(x, 0) as f64).collect();
    let mut r = check_poincare(&field, &speed, &ball, &coord, None, spec.q, spec.r)?;
    r.test_function = "x_1".into();
    out.push(r);
    let half = lat.ball(x0, (n / 2) as u64)?;
    let mut r = check_poincare(&field, &speed, &ball, &coord, Some(&half.members), spec.q, spec.r)?;
    r.test_function = "x_1, set B(n/2)".into();
    out.push(r);

    // Static heat kernel from x0; the backward cylinders end at 5n^2/4.
    let t0 = 1.25 * n2;
    let (s, sp) = (spec.sigma, spec.sigma_prime);
    let edges = [t0 - s * n2, t0 - sp * n2, t0, (1.0 - s) * spec.eps * n2, n2 - (1.0 - s) * spec.eps * n2, (1.0 - sp) * spec.eps * n2, n2 - (1.0 - sp) * spec.eps * n2];
    let times = grid(n, spec.grid_per_n2, t0, &edges);
    let hk = solve_static(&field, &speed, x0, &times, &SolverParams::default(), &Observe::Subset(ball.members.clone()))?;
    let u = &hk.density;

    let cut = default_cutoffs(&lat, t0, x0, nf, s, sp)?;
    let outer = lat.ball(x0, crate::lattice::radius_of(s * nf))?;
    let energy = EnergyInput { field: &field, speed: &speed, u, interval: (t0 - s * n2, t0), ball: &outer, cutoffs: &cut, k: 0.0, p: spec.p };
    let mut r = check_energy(&energy)?;
    r.test_function = "heat kernel, k=0".into();
    out.push(r);

    let data = LocalData::new(&field, &speed);
    let base = MaximalInput { u, env: MaximalEnv::Static(&data), t0, x0, n: nf, sigma: s, sigma_prime: sp, h: 0.0, delta: spec.delta, eps: spec.eps, bundle };
    out.push(check_maximal(&base, InequalityKind::MaximalStatic)?);
    let l1 = MaximalInput { t0: 0.0, ..base };
    out.push(check_maximal(&l1, InequalityKind::MaximalL1)?);

    // Dynamic kernel under a resampling environment, forward cylinders from n^2/4.
    let td = 0.25 * n2;
    let horizon = td + n2;
    let env = make_dynamic(lat.clone(), &DynamicSpec::Resampling { law: spec.law.clone(), rate: spec.resampling_rate }, horizon, derive(seed, &[label("dynamic")]))?;
    let times = grid(n, spec.grid_per_n2, horizon, &[td, td + sp * n2, td + s * n2]);
    let mut params = SolverParams::default();
    params.dt = 0.5;
    let dk = solve_dynamic(&env, 0.0, x0, &times, &params, &Observe::Subset(ball.members.clone()))?;
    let dyn_in = MaximalInput { u: &dk.prob, env: MaximalEnv::Dynamic(&env), t0: td, ..base };
    out.push(check_maximal(&dyn_in, InequalityKind::MaximalDynamic)?);
    Ok(out)
}

pub fn calibrate(spec: &CalibrationSpec) -> Result<CalibrationReport> {
    let bundle = spec.validate()?;
    let total = spec.n_calibration + spec.n_validation;
    let per_env: Vec<(Phase, u64, Vec<InequalityReport>)> = (0..total)
        .into_par_iter()
        .map(|k| {
            let (phase, idx) = if k < spec.n_calibration { (Phase::Calibration, k) } else { (Phase::Validation, k - spec.n_calibration) };
            let seed = derive(spec.seed, &[label("regularity"), label(phase.name()), idx as u64]);
            environment_reports(spec, &bundle, seed).map(|r| (phase, seed, r))
        })
        .collect::<Result<_>>()?;
    let mut summaries = Vec::new();
    let (mut held, mut checks) = (0usize, 0usize);
    for (i, &kind) in InequalityKind::ALL.iter().enumerate() {
        let cal: Vec<f64> = per_env.iter().filter(|e| e.0 == Phase::Calibration).filter_map(|e| e.2[i].c_hat).collect();
        if cal.is_empty() {
            return Err(Error::Degenerate(format!("{}: no calibration environment has a positive right side", kind.name())));
        }
        let c_min = cal.iter().copied().fold(f64::INFINITY, f64::min);
        let c_max = cal.iter().copied().fold(0.0, f64::max);
        let ratio = if c_min > 0.0 { c_max / c_min } else { f64::INFINITY };
        let valid: Vec<bool> = per_env.iter().filter(|e| e.0 == Phase::Validation).map(|e| e.2[i].holds_with(c_max)).collect();
        let ok = valid.iter().filter(|&&v| v).count();
        held += ok;
        checks += valid.len();
        let valid_fraction = ok as f64 / valid.len() as f64;
        summaries.push(KindSummary { kind, c_min, c_max, ratio, valid_fraction, stable: ratio < spec.max_ratio });
    }
    let rows = per_env
        .into_iter()
        .flat_map(|(phase, seed, reports)| reports.into_iter().map(move |report| CalibrationRow { phase, seed, report }))
        .collect();
    Ok(CalibrationReport { bundle, summaries, pooled_fraction: held as f64 / checks as f64, level: spec.level, rows })
}
