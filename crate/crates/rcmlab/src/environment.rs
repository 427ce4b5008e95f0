//! Conductance fields, speed measures, dynamic environments and moment
//! diagnostics.

use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::glmodel::Potential;
use crate::lattice::{Boundary, LatticeBox};
use crate::regularity::{exponents, Exponent};
use crate::rng::{self, Rng};
use crate::{Error, Result};

/// Single-edge conductance law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ConductanceLaw {
    Constant { value: f64 },
    /// `exp(U)` with `U` uniform on `[ln a, ln b]`.
    LogUniform { a: f64, b: f64 },
    Uniform { a: f64, b: f64 },
    /// Density `alpha x_min^alpha / x^(alpha+1)` on `[x_min, inf)`.
    Pareto { alpha: f64, x_min: f64 },
    /// Reciprocal of a Pareto draw; heavy tail towards zero.
    InversePareto { alpha: f64, x_min: f64 },
}

impl ConductanceLaw {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ConductanceLaw::Constant { value } => value > 0.0 && value.is_finite(),
            ConductanceLaw::LogUniform { a, b } | ConductanceLaw::Uniform { a, b } => {
                a > 0.0 && b >= a && b.is_finite()
            }
            ConductanceLaw::Pareto { alpha, x_min } | ConductanceLaw::InversePareto { alpha, x_min } => {
                alpha > 0.0 && x_min > 0.0 && x_min.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("law", format!("parameters must be positive: {self:?}")))
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> f64 {
        match *self {
            ConductanceLaw::Constant { value } => value,
            ConductanceLaw::LogUniform { a, b } => {
                let u: f64 = rng.gen();
                (a.ln() + u * (b.ln() - a.ln())).exp()
            }
            ConductanceLaw::Uniform { a, b } => a + (b - a) * rng.gen::<f64>(),
            ConductanceLaw::Pareto { alpha, x_min } => {
                let u = 1.0 - rng.gen::<f64>();
                x_min * u.powf(-1.0 / alpha)
            }
            ConductanceLaw::InversePareto { alpha, x_min } => {
                let u = 1.0 - rng.gen::<f64>();
                u.powf(1.0 / alpha) / x_min
            }
        }
    }

    /// Closed-form `E[w^p]` for any real `p`; `None` when infinite.
    pub fn moment(&self, p: f64) -> Option<f64> {
        match *self {
            ConductanceLaw::Constant { value } => Some(value.powf(p)),
            ConductanceLaw::LogUniform { a, b } => {
                if a == b || p == 0.0 {
                    Some(a.powf(p))
                } else {
                    Some((b.powf(p) - a.powf(p)) / (p * (b / a).ln()))
                }
            }
            ConductanceLaw::Uniform { a, b } => {
                if a == b {
                    Some(a.powf(p))
                } else if p == -1.0 {
                    Some((b / a).ln() / (b - a))
                } else {
                    Some((b.powf(p + 1.0) - a.powf(p + 1.0)) / ((p + 1.0) * (b - a)))
                }
            }
            ConductanceLaw::Pareto { alpha, x_min } => {
                (p < alpha).then(|| alpha * x_min.powf(p) / (alpha - p))
            }
            ConductanceLaw::InversePareto { alpha, x_min } => {
                (-p < alpha).then(|| alpha * x_min.powf(-p) / (alpha + p))
            }
        }
    }

    pub fn mean(&self) -> f64 {
        self.moment(1.0).unwrap_or(f64::INFINITY)
    }

    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            ConductanceLaw::Constant { value } => value,
            ConductanceLaw::LogUniform { a, b } => (a.ln() + u * (b.ln() - a.ln())).exp(),
            ConductanceLaw::Uniform { a, b } => a + (b - a) * u,
            ConductanceLaw::Pareto { alpha, x_min } => x_min * (1.0 - u).powf(-1.0 / alpha),
            ConductanceLaw::InversePareto { alpha, x_min } => u.powf(1.0 / alpha) / x_min,
        }
    }

    /// Supremum of the support (may be infinite).
    pub fn sup(&self) -> f64 {
        match *self {
            ConductanceLaw::Constant { value } => value,
            ConductanceLaw::LogUniform { b, .. } | ConductanceLaw::Uniform { b, .. } => b,
            ConductanceLaw::Pareto { .. } => f64::INFINITY,
            ConductanceLaw::InversePareto { x_min, .. } => 1.0 / x_min,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub law: ConductanceLaw,
    pub seed: u64,
}

/// Positive conductances on the edges of a box.
#[derive(Clone, Debug)]
pub struct ConductanceField {
    pub lattice: Arc<LatticeBox>,
    pub omega: Vec<f64>,
    pub spec: Option<FieldSpec>,
}

impl ConductanceField {
    pub fn from_values(lattice: Arc<LatticeBox>, omega: Vec<f64>) -> Result<Self> {
        if omega.len() != lattice.n_edges() {
            return Err(Error::invalid("omega", format!("{} values for {} edges", omega.len(), lattice.n_edges())));
        }
        if let Some(e) = omega.iter().position(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::invalid("omega", format!("edge {e} has nonpositive conductance {}", omega[e])));
        }
        Ok(ConductanceField { lattice, omega, spec: None })
    }

    pub fn constant(lattice: Arc<LatticeBox>, value: f64) -> Result<Self> {
        sample_iid(lattice, &ConductanceLaw::Constant { value }, 0)
    }

    pub fn max(&self) -> f64 {
        self.omega.iter().cloned().fold(0.0, f64::max)
    }
}

pub fn sample_iid(lattice: Arc<LatticeBox>, law: &ConductanceLaw, seed: u64) -> Result<ConductanceField> {
    law.validate()?;
    let mut rng = rng::stream(seed, &[rng::label("conductances")]);
    let omega = (0..lattice.n_edges()).map(|_| law.sample(&mut rng)).collect();
    Ok(ConductanceField {
        lattice,
        omega,
        spec: Some(FieldSpec { law: law.clone(), seed }),
    })
}

/// Vertex sums of conductances and of inverse conductances over incident edges.
pub fn mu_nu(field: &ConductanceField) -> (Vec<f64>, Vec<f64>) {
    let lat = &field.lattice;
    let mut mu = vec![0.0; lat.n_vertices()];
    let mut nu = vec![0.0; lat.n_vertices()];
    for (e, edge) in lat.edges().iter().enumerate() {
        let w = field.omega[e];
        for v in [edge.x, edge.y].into_iter().flatten() {
            mu[v] += w;
            nu[v] += 1.0 / w;
        }
    }
    (mu, nu)
}

pub fn mu(field: &ConductanceField) -> Vec<f64> {
    mu_nu(field).0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SpeedSpec {
    Csrw,
    Vsrw,
    /// i.i.d. vertex weights drawn from `law`.
    Custom {
        law: ConductanceLaw,
        #[serde(default)]
        seed: u64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpeedKind {
    Csrw,
    Vsrw,
    Custom,
}

#[derive(Clone, Debug)]
pub struct SpeedMeasure {
    pub kind: SpeedKind,
    pub theta: Vec<f64>,
}

impl SpeedMeasure {
    pub fn vsrw(n: usize) -> Self {
        SpeedMeasure { kind: SpeedKind::Vsrw, theta: vec![1.0; n] }
    }

    pub fn mean(&self) -> f64 {
        self.theta.iter().sum::<f64>() / self.theta.len() as f64
    }
}

pub fn make_speed(field: &ConductanceField, spec: &SpeedSpec) -> Result<SpeedMeasure> {
    let n = field.lattice.n_vertices();
    Ok(match spec {
        SpeedSpec::Csrw => SpeedMeasure { kind: SpeedKind::Csrw, theta: mu(field) },
        SpeedSpec::Vsrw => SpeedMeasure::vsrw(n),
        SpeedSpec::Custom { law, seed } => {
            law.validate()?;
            let mut rng = rng::stream(*seed, &[rng::label("speed")]);
            SpeedMeasure {
                kind: SpeedKind::Custom,
                theta: (0..n).map(|_| law.sample(&mut rng)).collect(),
            }
        }
    })
}

pub fn custom_speed(theta: Vec<f64>) -> Result<SpeedMeasure> {
    if theta.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(Error::invalid("theta", "speed measure must be positive"));
    }
    Ok(SpeedMeasure { kind: SpeedKind::Custom, theta })
}

/// Empirical moment with a stability flag: the estimate on the first half of
/// the sample and on the full sample agree within 20%.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub order: Exponent,
    pub value: f64,
    pub half_sample: f64,
    pub stable: bool,
}

fn moment_estimate(values: &[f64], weights: Option<&[f64]>, order: Exponent) -> MomentEstimate {
    let eval = |k: usize| -> f64 {
        if order.is_inf() {
            values[..k].iter().cloned().fold(0.0, f64::max)
        } else {
            let s: f64 = match weights {
                Some(w) => values[..k].iter().zip(w).map(|(v, w)| v.powf(order.0) * w).sum(),
                None => values[..k].iter().map(|v| v.powf(order.0)).sum(),
            };
            s / k as f64
        }
    };
    let n = values.len();
    let value = eval(n);
    let half_sample = eval((n / 2).max(1));
    let stable = value.is_finite() && (value - half_sample).abs() <= 0.2 * value.abs().max(f64::MIN_POSITIVE);
    MomentEstimate { order, value, half_sample, stable }
}

#[derive(Clone, Debug, Serialize)]
pub struct AnnealedRequirement {
    /// Required orders of `E[w^a]` and `E[w^-b]`.
    pub positive_order: f64,
    pub negative_order: f64,
    pub positive: MomentEstimate,
    pub negative: MomentEstimate,
    pub stable: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentReport {
    pub d: usize,
    pub sample_edges: usize,
    pub sample_vertices: usize,
    pub omega_p: MomentEstimate,
    pub omega_neg_q: MomentEstimate,
    pub theta_r: MomentEstimate,
    pub theta_neg_r1: MomentEstimate,
    pub mu_over_theta_p_weighted: MomentEstimate,
    pub nu_q: MomentEstimate,
    pub static_condition: bool,
    pub dynamic_condition: bool,
    pub annealed: Option<AnnealedRequirement>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MomentOrders {
    pub p: Exponent,
    pub q: Exponent,
    pub r: Exponent,
    pub r1: Exponent,
}

pub fn check_moments(field: &ConductanceField, speed: &SpeedMeasure, orders: MomentOrders) -> Result<MomentReport> {
    let MomentOrders { p, q, r, r1 } = orders;
    for (name, e) in [("p", p), ("q", q), ("r", r), ("r1", r1)] {
        e.require_above_one(name)?;
    }
    let d = field.lattice.dim();
    let (mu, nu) = mu_nu(field);
    let inv_omega: Vec<f64> = field.omega.iter().map(|w| 1.0 / w).collect();
    let inv_theta: Vec<f64> = speed.theta.iter().map(|t| 1.0 / t).collect();
    let ratio: Vec<f64> = mu.iter().zip(&speed.theta).map(|(m, t)| m / t).collect();
    let annealed = match speed.kind {
        SpeedKind::Vsrw | SpeedKind::Csrw => {
            let (a, b) = if speed.kind == SpeedKind::Vsrw {
                let kp = exponents::exponents(d, p, q, Exponent::INF, None)?.kappa_prime_static;
                kp.map(|k| (2.0 * k.max(p.0), 2.0 * k.max(q.0)))
            } else {
                let kp = exponents::exponents(d, Exponent::INF, q, p, None)?.kappa_prime_static;
                kp.map(|k| ((4.0 * k).max(2.0 * p.0), (4.0 * k + 2.0).max(2.0 * q.0)))
            }
            .unwrap_or((f64::INFINITY, f64::INFINITY));
            let positive = moment_estimate(&field.omega, None, Exponent(a));
            let negative = moment_estimate(&inv_omega, None, Exponent(b));
            let stable = positive.stable && negative.stable;
            Some(AnnealedRequirement { positive_order: a, negative_order: b, positive, negative, stable })
        }
        SpeedKind::Custom => None,
    };
    Ok(MomentReport {
        d,
        sample_edges: field.omega.len(),
        sample_vertices: speed.theta.len(),
        omega_p: moment_estimate(&field.omega, None, p),
        omega_neg_q: moment_estimate(&inv_omega, None, q),
        theta_r: moment_estimate(&speed.theta, None, r),
        theta_neg_r1: moment_estimate(&inv_theta, None, r1),
        mu_over_theta_p_weighted: moment_estimate(&ratio, Some(&speed.theta), p),
        nu_q: moment_estimate(&nu, None, q),
        static_condition: exponents::static_condition(d, p, q, r),
        dynamic_condition: exponents::dynamic_condition(d, p, q),
        annealed,
    })
}

/// `(tau_z omega)(x, y) = omega(x + z, y + z)` on a torus.
pub fn shift(field: &ConductanceField, z: &[i64]) -> Result<ConductanceField> {
    let lat = &field.lattice;
    if !lat.is_periodic() {
        return Err(Error::NotPeriodic);
    }
    if z.len() != lat.dim() {
        return Err(Error::invalid("z", "shift has wrong dimension"));
    }
    let d = lat.dim();
    let mut omega = vec![0.0; lat.n_edges()];
    for v in 0..lat.n_vertices() {
        let w = lat.translate(v, z).expect("torus translation");
        for i in 0..d {
            omega[lat.plus_edge(v, i)] = field.omega[lat.plus_edge(w, i)];
        }
    }
    Ok(ConductanceField { lattice: field.lattice.clone(), omega, spec: None })
}

/// Blocks of length `1/rate` are generated independently from keyed streams,
/// so the value of an edge at any time is a pure function of the seed.
struct BlockEvents {
    rng: Rng,
    t: f64,
    end: f64,
    rate: f64,
}

impl BlockEvents {
    fn new(seed: u64, edge: usize, block: i64, rate: f64) -> Self {
        let len = 1.0 / rate;
        BlockEvents {
            rng: rng::stream(seed, &[edge as u64, block as u64]),
            t: block as f64 * len,
            end: (block + 1) as f64 * len,
            rate,
        }
    }

    fn next(&mut self, law: &ConductanceLaw) -> Option<(f64, f64)> {
        let u = 1.0 - self.rng.gen::<f64>();
        self.t += -u.ln() / self.rate;
        if self.t >= self.end {
            return None;
        }
        Some((self.t, law.sample(&mut self.rng)))
    }
}

/// Each edge redraws its conductance from `law` at the events of an
/// independent Poisson clock of rate `rate`.
#[derive(Clone, Debug)]
pub struct ResamplingEnv {
    pub lattice: Arc<LatticeBox>,
    pub law: ConductanceLaw,
    pub rate: f64,
    pub seed: u64,
    pub horizon: f64,
}

const INITIAL_KEY: u64 = u64::MAX;

impl ResamplingEnv {
    fn block_of(&self, t: f64) -> i64 {
        (t * self.rate).floor() as i64
    }

    fn initial(&self, e: usize) -> f64 {
        self.law.sample(&mut rng::stream(self.seed, &[e as u64, INITIAL_KEY]))
    }

    fn value(&self, e: usize, t: f64) -> f64 {
        let mut block = self.block_of(t);
        while block >= 0 {
            let mut ev = BlockEvents::new(self.seed, e, block, self.rate);
            let mut last = None;
            while let Some((s, w)) = ev.next(&self.law) {
                if s > t {
                    break;
                }
                last = Some(w);
            }
            if let Some(w) = last {
                return w;
            }
            block -= 1;
        }
        self.initial(e)
    }

    /// Event times of all edges inside `(t0, t1)`, sorted.
    fn events(&self, t0: f64, t1: f64) -> Vec<f64> {
        let mut out = Vec::new();
        for e in 0..self.lattice.n_edges() {
            for block in self.block_of(t0).max(0)..=self.block_of(t1) {
                let mut ev = BlockEvents::new(self.seed, e, block, self.rate);
                while let Some((s, _)) = ev.next(&self.law) {
                    if s > t0 && s < t1 {
                        out.push(s);
                    }
                }
            }
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }
}

/// Conductances `V''(phi_t(y) - phi_t(x))` read off a recorded interface
/// trajectory, piecewise constant on its time grid. Outside an absorbing box
/// the height is pinned at zero.
#[derive(Clone, Debug)]
pub struct InterfaceEnv {
    pub lattice: Arc<LatticeBox>,
    pub potential: Potential,
    pub times: Arc<Vec<f64>>,
    pub snapshots: Arc<Vec<Vec<f64>>>,
}

impl InterfaceEnv {
    fn index(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t).saturating_sub(1)
    }

    fn edge_value(&self, phi: &[f64], e: usize) -> f64 {
        let edge = self.lattice.edge(e);
        let a = edge.x.map_or(0.0, |v| phi[v]);
        let b = edge.y.map_or(0.0, |v| phi[v]);
        self.potential.d2v(b - a)
    }
}

#[derive(Clone, Debug)]
pub enum DynamicEnvironment {
    StaticLift { field: ConductanceField, horizon: (f64, f64) },
    Resampling(ResamplingEnv),
    Interface(InterfaceEnv),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DynamicSpec {
    StaticLift { law: ConductanceLaw },
    Resampling { law: ConductanceLaw, rate: f64 },
}

pub fn make_dynamic(lattice: Arc<LatticeBox>, spec: &DynamicSpec, horizon: f64, seed: u64) -> Result<DynamicEnvironment> {
    if !(horizon >= 0.0) {
        return Err(Error::invalid("horizon", "must be nonnegative"));
    }
    match spec {
        DynamicSpec::StaticLift { law } => Ok(DynamicEnvironment::StaticLift {
            field: sample_iid(lattice, law, seed)?,
            horizon: (0.0, horizon),
        }),
        DynamicSpec::Resampling { law, rate } => {
            law.validate()?;
            if !(*rate > 0.0 && rate.is_finite()) {
                return Err(Error::invalid("rate", "resampling rate must be positive"));
            }
            Ok(DynamicEnvironment::Resampling(ResamplingEnv {
                lattice,
                law: law.clone(),
                rate: *rate,
                seed,
                horizon,
            }))
        }
    }
}

impl DynamicEnvironment {
    pub fn static_lift(field: ConductanceField, horizon: (f64, f64)) -> Self {
        DynamicEnvironment::StaticLift { field, horizon }
    }

    pub fn interface(lattice: Arc<LatticeBox>, potential: Potential, times: Vec<f64>, snapshots: Vec<Vec<f64>>) -> Result<Self> {
        if times.is_empty() || times.len() != snapshots.len() {
            return Err(Error::invalid("trajectory", "time grid and snapshots must be nonempty and of equal length"));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("trajectory", "time grid must be increasing"));
        }
        Ok(DynamicEnvironment::Interface(InterfaceEnv {
            lattice,
            potential,
            times: Arc::new(times),
            snapshots: Arc::new(snapshots),
        }))
    }

    pub fn lattice(&self) -> &Arc<LatticeBox> {
        match self {
            DynamicEnvironment::StaticLift { field, .. } => &field.lattice,
            DynamicEnvironment::Resampling(r) => &r.lattice,
            DynamicEnvironment::Interface(i) => &i.lattice,
        }
    }

    pub fn horizon(&self) -> (f64, f64) {
        match self {
            DynamicEnvironment::StaticLift { horizon, .. } => *horizon,
            DynamicEnvironment::Resampling(r) => (0.0, r.horizon),
            DynamicEnvironment::Interface(i) => (i.times[0], *i.times.last().unwrap()),
        }
    }

    pub fn check_time(&self, t: f64) -> Result<()> {
        let (start, end) = self.horizon();
        let tol = 1e-9 * (1.0 + end.abs());
        if t < start - tol || t > end + tol {
            Err(Error::OutsideHorizon { t, start, end })
        } else {
            Ok(())
        }
    }

    pub fn query(&self, e: usize, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok(match self {
            DynamicEnvironment::StaticLift { field, .. } => field.omega[e],
            DynamicEnvironment::Resampling(r) => r.value(e, t),
            DynamicEnvironment::Interface(i) => i.edge_value(&i.snapshots[i.index(t)], e),
        })
    }

    /// Fill `out` with all edge conductances at time `t`.
    pub fn snapshot(&self, t: f64, out: &mut [f64]) -> Result<()> {
        self.check_time(t)?;
        match self {
            DynamicEnvironment::StaticLift { field, .. } => out.copy_from_slice(&field.omega),
            DynamicEnvironment::Resampling(r) => {
                for (e, o) in out.iter_mut().enumerate() {
                    *o = r.value(e, t);
                }
            }
            DynamicEnvironment::Interface(i) => {
                let phi = &i.snapshots[i.index(t)];
                for (e, o) in out.iter_mut().enumerate() {
                    *o = i.edge_value(phi, e);
                }
            }
        }
        Ok(())
    }

    /// Sequential reader for nondecreasing query times.
    pub fn sweep(&self) -> EnvSweep<'_> {
        EnvSweep { env: self, state: None }
    }

    /// Times in `(t0, t1)` at which some conductance may jump, if the
    /// environment is piecewise constant with at most `limit` such times.
    pub fn breakpoints(&self, t0: f64, t1: f64, limit: usize) -> Option<Vec<f64>> {
        match self {
            DynamicEnvironment::StaticLift { .. } => Some(Vec::new()),
            DynamicEnvironment::Resampling(r) => {
                let expected = r.lattice.n_edges() as f64 * r.rate * (t1 - t0);
                if expected > limit as f64 {
                    return None;
                }
                let ev = r.events(t0, t1);
                (ev.len() <= limit).then_some(ev)
            }
            DynamicEnvironment::Interface(i) => {
                let pts: Vec<f64> = i.times.iter().cloned().filter(|&s| s > t0 && s < t1).collect();
                (pts.len() <= limit).then_some(pts)
            }
        }
    }

    /// Upper bound on the total exit rate `mu_t(x)` over the horizon. For
    /// unbounded resampling laws a far quantile is used, and simulations
    /// re-validate it.
    pub fn dominating_rate(&self) -> f64 {
        let two_d = 2.0 * self.lattice().dim() as f64;
        match self {
            DynamicEnvironment::StaticLift { field, .. } => mu(field).into_iter().fold(0.0, f64::max),
            DynamicEnvironment::Resampling(r) => {
                let cap = r.law.sup();
                let cap = if cap.is_finite() { cap } else { r.law.quantile(1.0 - 1e-12) };
                two_d * cap
            }
            DynamicEnvironment::Interface(i) => {
                let mut m: f64 = 0.0;
                let mut buf = vec![0.0; i.lattice.n_edges()];
                for phi in i.snapshots.iter() {
                    for (e, b) in buf.iter_mut().enumerate() {
                        *b = i.edge_value(phi, e);
                    }
                    let field = ConductanceField { lattice: i.lattice.clone(), omega: buf.clone(), spec: None };
                    m = m.max(mu(&field).into_iter().fold(0.0, f64::max));
                }
                m
            }
        }
    }

    /// Exact time average of `omega_t(e)` over `[t0, t1]`.
    pub fn time_average(&self, e: usize, t0: f64, t1: f64) -> Result<f64> {
        self.check_time(t0)?;
        self.check_time(t1)?;
        if t1 <= t0 {
            return self.query(e, t0);
        }
        let integral = match self {
            DynamicEnvironment::StaticLift { field, .. } => field.omega[e] * (t1 - t0),
            DynamicEnvironment::Resampling(r) => {
                let mut current = r.value(e, t0);
                let mut last = t0;
                let mut acc = 0.0;
                for block in r.block_of(t0).max(0)..=r.block_of(t1) {
                    let mut ev = BlockEvents::new(r.seed, e, block, r.rate);
                    while let Some((s, w)) = ev.next(&r.law) {
                        if s <= t0 {
                            continue;
                        }
                        if s > t1 {
                            break;
                        }
                        acc += current * (s - last);
                        current = w;
                        last = s;
                    }
                }
                acc + current * (t1 - last)
            }
            DynamicEnvironment::Interface(i) => {
                let mut acc = 0.0;
                let mut k = i.index(t0);
                let mut a = t0;
                while a < t1 {
                    let b = i.times.get(k + 1).copied().unwrap_or(f64::INFINITY).min(t1);
                    acc += i.edge_value(&i.snapshots[k], e) * (b - a);
                    a = b;
                    k += 1;
                }
                acc
            }
        };
        Ok(integral / (t1 - t0))
    }
}

/// Cursor over a dynamic environment for nondecreasing times. Resampling
/// environments advance edge clocks incrementally instead of re-deriving
/// each block.
pub struct EnvSweep<'a> {
    env: &'a DynamicEnvironment,
    state: Option<SweepState>,
}

struct SweepState {
    t: f64,
    value: Vec<f64>,
    next: Vec<(f64, f64)>,
    block: Vec<i64>,
    clocks: Vec<BlockEvents>,
}

impl EnvSweep<'_> {
    pub fn at(&mut self, t: f64, out: &mut [f64]) -> Result<()> {
        let DynamicEnvironment::Resampling(r) = self.env else {
            return self.env.snapshot(t, out);
        };
        self.env.check_time(t)?;
        let fresh = !matches!(&self.state, Some(st) if st.t <= t);
        if fresh {
            let n = r.lattice.n_edges();
            let mut st = SweepState {
                t,
                value: Vec::with_capacity(n),
                next: Vec::with_capacity(n),
                block: Vec::with_capacity(n),
                clocks: Vec::with_capacity(n),
            };
            let b = r.block_of(t);
            for e in 0..n {
                st.value.push(r.value(e, t));
                let mut clock = BlockEvents::new(r.seed, e, b, r.rate);
                let mut nb = b;
                let next = loop {
                    match clock.next(&r.law) {
                        Some((s, w)) if s > t => break (s, w),
                        Some(_) => continue,
                        None => {
                            nb += 1;
                            clock = BlockEvents::new(r.seed, e, nb, r.rate);
                        }
                    }
                };
                st.next.push(next);
                st.block.push(nb);
                st.clocks.push(clock);
            }
            self.state = Some(st);
        }
        let st = self.state.as_mut().expect("sweep state initialised");
        for e in 0..st.value.len() {
            while st.next[e].0 <= t {
                st.value[e] = st.next[e].1;
                st.next[e] = loop {
                    match st.clocks[e].next(&r.law) {
                        Some(ev) => break ev,
                        None => {
                            st.block[e] += 1;
                            st.clocks[e] = BlockEvents::new(r.seed, e, st.block[e], r.rate);
                        }
                    }
                };
            }
        }
        st.t = t;
        out.copy_from_slice(&st.value);
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    d: usize,
    side: usize,
    boundary: Boundary,
    spec: Option<FieldSpec>,
}

fn fmt_coords(lat: &LatticeBox, v: Option<usize>) -> String {
    match v {
        Some(v) => lat.coords(v).iter().map(|c| c.to_string()).collect::<Vec<_>>().join(";"),
        None => "outside".to_string(),
    }
}

/// Rows `(edge_id, x, y, omega)`; coordinates are `;`-separated.
pub fn field_table(field: &ConductanceField) -> crate::io::Table {
    let lat = &field.lattice;
    let mut t = crate::io::Table::new(["edge_id", "x", "y", "omega"]);
    for (e, edge) in lat.edges().iter().enumerate() {
        t.push(vec![e.to_string(), fmt_coords(lat, edge.x), fmt_coords(lat, edge.y), crate::io::fmt_f64(field.omega[e])]);
    }
    t
}

/// JSON sidecar with the box and generator spec.
pub fn field_sidecar(field: &ConductanceField) -> Result<String> {
    let lat = &field.lattice;
    let side = Sidecar { d: lat.dim(), side: lat.side(), boundary: lat.boundary(), spec: field.spec.clone() };
    Ok(serde_json::to_string_pretty(&side)?)
}

/// Write the field table and its sidecar next to it.
pub fn export_csv(field: &ConductanceField, csv_path: &std::path::Path) -> Result<()> {
    field_table(field).write(csv_path)?;
    std::fs::write(csv_path.with_extension("json"), field_sidecar(field)?)?;
    Ok(())
}

pub fn import_csv(csv_path: &std::path::Path) -> Result<ConductanceField> {
    let side: Sidecar = serde_json::from_str(&std::fs::read_to_string(csv_path.with_extension("json"))?)?;
    let lat = Arc::new(LatticeBox::new(side.d, side.side, side.boundary)?);
    let mut omega = vec![0.0; lat.n_edges()];
    let mut seen = vec![false; lat.n_edges()];
    let mut r = csv::Reader::from_path(csv_path)?;
    for rec in r.records() {
        let rec = rec?;
        let e: usize = rec[0].parse().map_err(|_| Error::invalid("edge_id", rec[0].to_string()))?;
        let w: f64 = rec[3].parse().map_err(|_| Error::invalid("omega", rec[3].to_string()))?;
        if e >= omega.len() {
            return Err(Error::invalid("edge_id", format!("{e} out of range")));
        }
        omega[e] = w;
        seen[e] = true;
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::invalid("omega", "missing edges in snapshot"));
    }
    let mut field = ConductanceField::from_values(lat, omega)?;
    field.spec = side.spec;
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn torus(d: usize, side: usize) -> Arc<LatticeBox> {
        Arc::new(LatticeBox::new(d, side, Boundary::Periodic).unwrap())
    }

    #[test]
    fn constant_fields_and_mu_nu() {
        let lat = torus(2, 5);
        let f = ConductanceField::constant(lat.clone(), 1.0).unwrap();
        assert!(f.omega.iter().all(|&w| w == 1.0));
        let (mu, nu) = mu_nu(&f);
        assert!(mu.iter().all(|&m| m == 4.0) && nu.iter().all(|&n| n == 4.0));
        let f2 = ConductanceField::constant(lat.clone(), 2.0).unwrap();
        let (mu, nu) = mu_nu(&f2);
        assert!(mu.iter().all(|&m| m == 8.0) && nu.iter().all(|&n| n == 2.0));
        let mut g = f.clone();
        g.omega[7] = 10.0;
        let edge = lat.edge(7);
        let mu = super::mu(&g);
        assert_eq!(mu[edge.x.unwrap()], 13.0);
        assert_eq!(mu[edge.y.unwrap()], 13.0);
    }

    #[test]
    fn speeds() {
        let lat = torus(2, 5);
        let f = ConductanceField::constant(lat, 1.0).unwrap();
        assert!(make_speed(&f, &SpeedSpec::Csrw).unwrap().theta.iter().all(|&t| t == 4.0));
        assert!(make_speed(&f, &SpeedSpec::Vsrw).unwrap().theta.iter().all(|&t| t == 1.0));
        assert!(custom_speed(vec![1.0, 0.0]).is_err());
        let bad = SpeedSpec::Custom { law: ConductanceLaw::Uniform { a: -1.0, b: 2.0 }, seed: 1 };
        assert!(make_speed(&f, &bad).is_err());
    }

    #[test]
    fn rejects_nonpositive_laws() {
        let lat = torus(2, 5);
        assert!(sample_iid(lat.clone(), &ConductanceLaw::Constant { value: 0.0 }, 1).is_err());
        assert!(sample_iid(lat, &ConductanceLaw::Pareto { alpha: -1.0, x_min: 1.0 }, 1).is_err());
    }

    #[test]
    fn moment_condition_arithmetic() {
        let lat = torus(2, 9);
        let f = ConductanceField::constant(lat, 1.0).unwrap();
        let s = make_speed(&f, &SpeedSpec::Vsrw).unwrap();
        let inf = MomentOrders { p: Exponent::INF, q: Exponent::INF, r: Exponent::INF, r1: Exponent::INF };
        assert!(check_moments(&f, &s, inf).unwrap().static_condition);
        let four = MomentOrders { p: Exponent(4.0), q: Exponent(4.0), r: Exponent(4.0), r1: Exponent(4.0) };
        let rep = check_moments(&f, &s, four).unwrap();
        assert!(rep.static_condition);
        assert!(rep.annealed.unwrap().stable);
        let bad = MomentOrders { p: Exponent(1.0), ..four };
        assert!(check_moments(&f, &s, bad).is_err());
    }

    #[test]
    fn shift_group_law() {
        let lat = torus(2, 7);
        let f = sample_iid(lat, &ConductanceLaw::LogUniform { a: 0.5, b: 2.0 }, 3).unwrap();
        assert_eq!(shift(&f, &[0, 0]).unwrap().omega, f.omega);
        let once = shift(&shift(&f, &[1, -2]).unwrap(), &[1, -2]).unwrap();
        assert_eq!(once.omega, shift(&f, &[2, -4]).unwrap().omega);
        let abs = Arc::new(LatticeBox::new(2, 5, Boundary::Absorbing).unwrap());
        let g = ConductanceField::constant(abs, 1.0).unwrap();
        assert!(matches!(shift(&g, &[1, 0]), Err(Error::NotPeriodic)));
    }

    #[test]
    fn resampling_queries_are_pure_and_match_sweep() {
        let lat = torus(2, 5);
        let spec = DynamicSpec::Resampling { law: ConductanceLaw::LogUniform { a: 0.5, b: 2.0 }, rate: 1.3 };
        let env = make_dynamic(lat.clone(), &spec, 20.0, 11).unwrap();
        let mut sweep = env.sweep();
        let mut buf = vec![0.0; lat.n_edges()];
        for k in 0..80 {
            let t = k as f64 * 0.25;
            sweep.at(t, &mut buf).unwrap();
            for e in 0..lat.n_edges() {
                assert_eq!(buf[e], env.query(e, t).unwrap());
            }
        }
        assert!(matches!(env.query(0, 21.0), Err(Error::OutsideHorizon { .. })));
        let bp = env.breakpoints(0.0, 2.0, 10_000).unwrap();
        for w in bp.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            for e in 0..lat.n_edges() {
                assert_eq!(env.query(e, mid).unwrap(), env.query(e, w[0]).unwrap());
            }
        }
    }

    #[test]
    fn static_lift_is_constant_in_time() {
        let lat = torus(2, 5);
        let f = ConductanceField::constant(lat, 1.0).unwrap();
        let env = DynamicEnvironment::static_lift(f, (0.0, 10.0));
        for t in [0.0, 3.3, 10.0] {
            assert_eq!(env.query(4, t).unwrap(), 1.0);
        }
    }

    #[test]
    fn csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let lat = torus(2, 5);
        let f = sample_iid(lat, &ConductanceLaw::LogUniform { a: 0.5, b: 2.0 }, 9).unwrap();
        let path = dir.path().join("env.csv");
        export_csv(&f, &path).unwrap();
        let g = import_csv(&path).unwrap();
        assert_eq!(g.omega, f.omega);
        assert_eq!(g.spec, f.spec);
    }
}
