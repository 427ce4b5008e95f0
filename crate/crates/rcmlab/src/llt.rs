//! Local limit theorem diagnostics: the Gaussian limit kernel, quenched and
//! annealed sup-error curves, oscillation and Harnack measurements and
//! diagonal heat kernel bounds.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::{make_dynamic, make_speed, sample_iid, ConductanceField, ConductanceLaw, DynamicEnvironment, DynamicSpec, SpeedMeasure, SpeedSpec};
use crate::heatkernel::{run_dynamic, DynamicRecord, solve_static, HeatKernelField, Observe, SolverParams, SpaceTimeField};
use crate::io::{fmt_f64, Table};
use crate::lattice::{Boundary, LatticeBox};
use crate::rng;
use crate::special::{linear_fit, mean, stderr};
use crate::{Error, Result};

/// `a k_t(x)` with `k_t` the centred Gaussian density of covariance `t Sigma^2`.
#[derive(Clone, Debug)]
pub struct GaussianKernel {
    pub sigma2: DMatrix<f64>,
    pub a: f64,
    inv: DMatrix<f64>,
    det: f64,
}

impl GaussianKernel {
    pub fn new(sigma2: DMatrix<f64>, a: f64) -> Result<Self> {
        if !sigma2.is_square() || sigma2.nrows() == 0 {
            return Err(Error::invalid("sigma2", "must be a square matrix"));
        }
        if (&sigma2 - sigma2.transpose()).abs().max() > 1e-12 * sigma2.abs().max() {
            return Err(Error::invalid("sigma2", "must be symmetric"));
        }
        let chol = sigma2.clone().cholesky().ok_or_else(|| Error::invalid("sigma2", "must be positive definite"))?;
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::invalid("a", "must be positive"));
        }
        let det = chol.determinant();
        let inv = chol.inverse();
        Ok(GaussianKernel { sigma2, a, inv, det })
    }

    /// `sigma2 = s I`.
    pub fn isotropic(d: usize, s: f64, a: f64) -> Result<Self> {
        Self::new(DMatrix::identity(d, d) * s, a)
    }

    pub fn from_rows(rows: &[Vec<f64>], a: f64) -> Result<Self> {
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("sigma2", "must be a square matrix"));
        }
        Self::new(DMatrix::from_fn(d, d, |i, j| rows[i][j]), a)
    }

    pub fn dim(&self) -> usize {
        self.sigma2.nrows()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim()).map(|i| (0..self.dim()).map(|j| self.sigma2[(i, j)]).collect()).collect()
    }

    /// `k_t(x)` without the factor `a`.
    pub fn k(&self, t: f64, x: &[f64]) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::invalid("t", "Gaussian kernel needs t > 0"));
        }
        if x.len() != self.dim() {
            return Err(Error::invalid("x", "dimension mismatch"));
        }
        let v = DVector::from_column_slice(x);
        let q = (v.transpose() * &self.inv * &v)[(0, 0)];
        let d = self.dim() as f64;
        Ok((2.0 * std::f64::consts::PI * t).powf(-d / 2.0) / self.det.sqrt() * (-q / (2.0 * t)).exp())
    }

    pub fn k_eval(&self, t: f64, x: &[f64]) -> Result<f64> {
        self.k(t, x)
    }
}

/// `floor(n x)` componentwise.
pub fn floor_scale(n: usize, x: &[f64]) -> Vec<i64> {
    x.iter().map(|c| (n as f64 * c).floor() as i64).collect()
}

/// The compact window `{|x| <= K} x [T1, T2]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LltWindow {
    pub k: f64,
    pub t1: f64,
    pub t2: f64,
}

impl LltWindow {
    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0 && self.t1 > 0.0 && self.t2 >= self.t1) {
            return Err(Error::invalid("window", "need K > 0 and 0 < T1 <= T2"));
        }
        Ok(())
    }

    /// Smallest odd torus side keeping `6 sqrt(T2) n` and `K n` below the half-side.
    pub fn required_side(&self, n: usize) -> usize {
        let half = (6.0 * self.t2.sqrt() * n as f64).max(self.k * n as f64 + 1.0).ceil() as usize;
        2 * half + 1
    }

    /// Integer times `n^2 t` with `t` in `[T1, T2]`.
    pub fn steps(&self, n: usize) -> Vec<f64> {
        let n2 = (n * n) as f64;
        let lo = (n2 * self.t1 - 1e-9).ceil() as i64;
        let hi = (n2 * self.t2 + 1e-9).floor() as i64;
        (lo..=hi).map(|m| m as f64).collect()
    }

    /// Vertices `z` with `|z| <= K n`, relative to the origin.
    pub fn vertices(&self, lat: &LatticeBox, n: usize) -> Result<Vec<usize>> {
        let r = self.k * n as f64;
        if r + 1.0 > lat.half() as f64 {
            return Err(Error::BoxTooSmall { side: lat.side(), required: self.required_side(n) });
        }
        let ri = r.floor() as i64;
        let d = lat.dim();
        let mut out = Vec::new();
        let mut z = vec![-ri; d];
        loop {
            let norm2: i64 = z.iter().map(|c| c * c).sum();
            if (norm2 as f64) <= r * r + 1e-9 {
                out.push(lat.vertex(&z)?);
            }
            let mut i = 0;
            while i < d {
                z[i] += 1;
                if z[i] <= ri {
                    break;
                }
                z[i] = -ri;
                i += 1;
            }
            if i == d {
                break;
            }
        }
        out.sort_unstable();
        Ok(out)
    }

    fn check_box(&self, lat: &LatticeBox, n: usize) -> Result<()> {
        let required = self.required_side(n);
        if !lat.is_periodic() || lat.side() < required {
            return Err(Error::BoxTooSmall { side: lat.side(), required });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LltMode {
    QuenchedStatic,
    AnnealedStatic,
    QuenchedDynamic,
    AnnealedDynamic,
}

impl LltMode {
    pub fn name(self) -> &'static str {
        match self {
            LltMode::QuenchedStatic => "quenched-static",
            LltMode::AnnealedStatic => "annealed-static",
            LltMode::QuenchedDynamic => "quenched-dynamic",
            LltMode::AnnealedDynamic => "annealed-dynamic",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LltErrorCurve {
    pub mode: LltMode,
    pub window: LltWindow,
    pub n: Vec<usize>,
    pub sup_error: Vec<f64>,
    /// Standard error over environments; zero for quenched curves.
    pub stderr: Vec<f64>,
    pub m_envs: usize,
    pub dx: Vec<f64>,
    pub dt: Vec<f64>,
    pub sigma2: Vec<Vec<f64>>,
    pub a: f64,
    /// Per-environment errors, `per_env[e][i]` for `n[i]`.
    pub per_env: Vec<Vec<f64>>,
}

impl LltErrorCurve {
    fn from_errors(mode: LltMode, window: LltWindow, n: &[usize], per_env: Vec<Vec<f64>>, gk: &GaussianKernel) -> Self {
        let m = per_env.len();
        let cols: Vec<Vec<f64>> = (0..n.len()).map(|i| per_env.iter().map(|e| e[i]).collect()).collect();
        LltErrorCurve {
            mode,
            window,
            n: n.to_vec(),
            sup_error: cols.iter().map(|c| mean(c)).collect(),
            stderr: cols.iter().map(|c| if m > 1 { stderr(c) } else { 0.0 }).collect(),
            m_envs: m,
            dx: n.iter().map(|&k| 1.0 / k as f64).collect(),
            dt: n.iter().map(|&k| 1.0 / (k * k) as f64).collect(),
            sigma2: gk.rows(),
            a: gk.a,
            per_env,
        }
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.sup_error.windows(2).all(|w| w[1] < w[0])
    }

    pub fn table(&self) -> Table {
        let d = self.sigma2.len();
        let mut header: Vec<String> = ["mode", "n", "K", "T1", "T2", "sup_error", "stderr", "m_envs"].iter().map(|s| s.to_string()).collect();
        for i in 0..d {
            for j in 0..d {
                header.push(format!("sigma2_{}{}", i + 1, j + 1));
            }
        }
        header.push("a".into());
        let mut t = Table::new(header);
        for (i, &n) in self.n.iter().enumerate() {
            let mut row = vec![
                self.mode.name().to_string(),
                n.to_string(),
                fmt_f64(self.window.k),
                fmt_f64(self.window.t1),
                fmt_f64(self.window.t2),
                fmt_f64(self.sup_error[i]),
                fmt_f64(self.stderr[i]),
                self.m_envs.to_string(),
            ];
            row.extend(self.sigma2.iter().flatten().map(|v| fmt_f64(*v)));
            row.push(fmt_f64(self.a));
            t.push(row);
        }
        t
    }
}

/// Union of the observation grids for a list of scales.
fn grids(lat: &LatticeBox, window: &LltWindow, ns: &[usize]) -> Result<(Vec<f64>, Vec<usize>)> {
    let mut times: Vec<f64> = ns.iter().flat_map(|&n| window.steps(n)).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut verts: Vec<usize> = Vec::new();
    for &n in ns {
        verts.extend(window.vertices(lat, n)?);
    }
    verts.sort_unstable();
    verts.dedup();
    Ok((times, verts))
}

/// `sup |n^d p(n^2 t, 0, z) - a k_t(z / n)|` over the window grid of scale `n`.
pub fn sup_error(density: &SpaceTimeField, gk: &GaussianKernel, n: usize, window: &LltWindow) -> Result<f64> {
    let lat = &density.lattice;
    let d = lat.dim();
    let nf = n as f64;
    let scale = nf.powi(d as i32);
    let verts = window.vertices(lat, n)?;
    let xs: Vec<Vec<f64>> = verts.iter().map(|&v| lat.coords(v).iter().map(|&c| c as f64 / nf).collect()).collect();
    let cols: Vec<usize> = verts
        .iter()
        .map(|&v| density.index_of(v).ok_or_else(|| Error::invalid("window", "vertex not observed")))
        .collect::<Result<_>>()?;
    let mut sup: f64 = 0.0;
    for m in window.steps(n) {
        let ti = density.time_index(m).ok_or_else(|| Error::invalid("window", format!("time {m} not observed")))?;
        let t = m / (nf * nf);
        let row = &density.values[ti];
        for (x, &j) in xs.iter().zip(&cols) {
            let err = (scale * row[j] - gk.a * gk.k(t, x)?).abs();
            sup = sup.max(err);
        }
    }
    Ok(sup)
}

/// Sup errors of one static environment for every scale in `ns`, from a
/// single solve on the union of the grids.
pub fn static_errors(field: &ConductanceField, speed: &SpeedMeasure, gk: &GaussianKernel, window: &LltWindow, ns: &[usize], params: &SolverParams) -> Result<Vec<f64>> {
    window.validate()?;
    let lat = &field.lattice;
    let nmax = *ns.iter().max().ok_or_else(|| Error::invalid("n_list", "empty"))?;
    window.check_box(lat, nmax)?;
    let (times, verts) = grids(lat, window, ns)?;
    let hk = solve_static(field, speed, lat.origin(), &times, params, &Observe::Subset(verts))?;
    ns.iter().map(|&n| sup_error(&hk.density, gk, n, window)).collect()
}

pub fn quenched_curve(field: &ConductanceField, speed: &SpeedMeasure, gk: &GaussianKernel, window: &LltWindow, ns: &[usize], params: &SolverParams) -> Result<LltErrorCurve> {
    let errs = static_errors(field, speed, gk, window, ns, params)?;
    Ok(LltErrorCurve::from_errors(LltMode::QuenchedStatic, *window, ns, vec![errs], gk))
}

/// i.i.d. environments for annealed curves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StaticEnsemble {
    pub d: usize,
    pub law: ConductanceLaw,
    pub speed: SpeedSpec,
    pub m_envs: usize,
    pub seed: u64,
}

pub fn annealed_curve(ens: &StaticEnsemble, gk: &GaussianKernel, window: &LltWindow, ns: &[usize], params: &SolverParams) -> Result<LltErrorCurve> {
    if ens.m_envs == 0 {
        return Err(Error::invalid("m_envs", "must be positive"));
    }
    let nmax = *ns.iter().max().ok_or_else(|| Error::invalid("n_list", "empty"))?;
    let lat = Arc::new(LatticeBox::new(ens.d, window.required_side(nmax), Boundary::Periodic)?);
    let per_env = (0..ens.m_envs)
        .into_par_iter()
        .map(|e| {
            let seed = rng::derive(ens.seed, &[rng::label("llt-env"), e as u64]);
            let field = sample_iid(lat.clone(), &ens.law, seed)?;
            let speed = match &ens.speed {
                SpeedSpec::Custom { law, .. } => SpeedSpec::Custom { law: law.clone(), seed: rng::derive(seed, &[rng::label("speed")]) },
                s => s.clone(),
            };
            let speed = make_speed(&field, &speed)?;
            static_errors(&field, &speed, gk, window, ns, params)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LltErrorCurve::from_errors(LltMode::AnnealedStatic, *window, ns, per_env, gk))
}

/// Second-moment matrix `sum_y P(y) z z^T` about the origin.
pub fn second_moment(lat: &LatticeBox, prob: &[f64]) -> DMatrix<f64> {
    let d = lat.dim();
    let mut m = DMatrix::zeros(d, d);
    for (v, &p) in prob.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let z = lat.coords(v);
        for i in 0..d {
            for j in 0..d {
                m[(i, j)] += p * (z[i] * z[j]) as f64;
            }
        }
    }
    m
}

/// Kernels of one dynamic environment on every scale's grid, plus the
/// second moments at `n_max^2 T1` and `n_max^2 T2`.
struct DynamicRun {
    density: SpaceTimeField,
    moments: [DMatrix<f64>; 2],
    span: f64,
}

fn dynamic_run(env: &DynamicEnvironment, window: &LltWindow, ns: &[usize], params: &SolverParams) -> Result<DynamicRun> {
    window.validate()?;
    let lat = env.lattice().clone();
    let nmax = *ns.iter().max().ok_or_else(|| Error::invalid("n_list", "empty"))?;
    window.check_box(&lat, nmax)?;
    let (times, verts) = grids(&lat, window, ns)?;
    let n2 = (nmax * nmax) as f64;
    let marks = [(n2 * window.t1).ceil(), (n2 * window.t2).floor()];
    let mut values = vec![Vec::new(); times.len()];
    let d = lat.dim();
    let mut moments = [DMatrix::zeros(d, d), DMatrix::zeros(d, d)];
    let mut init = vec![0.0; lat.n_vertices()];
    init[lat.origin()] = 1.0;
    let rec = DynamicRecord { obs_times: &times, observe: &verts, full_times: &marks };
    run_dynamic(env, 0.0, init, params, &rec, |i, v| values[i] = v, |k, v| moments[k] = second_moment(&lat, v))?;
    Ok(DynamicRun {
        density: SpaceTimeField { lattice: lat, times, vertices: verts, values },
        moments,
        span: marks[1] - marks[0],
    })
}

/// `Sigma^2` from the growth of second moments between two times.
pub fn sigma_from_moments(m1: &DMatrix<f64>, m2: &DMatrix<f64>, span: f64) -> DMatrix<f64> {
    let s = (m2 - m1) / span;
    (&s + s.transpose()) * 0.5
}

/// Quenched dynamic curve. Without a kernel, `Sigma^2` is read off the
/// second moments of the same run (VSRW, `a = 1`).
pub fn quenched_curve_dynamic(env: &DynamicEnvironment, gk: Option<&GaussianKernel>, window: &LltWindow, ns: &[usize], params: &SolverParams) -> Result<LltErrorCurve> {
    let run = dynamic_run(env, window, ns, params)?;
    let gk = match gk {
        Some(g) => g.clone(),
        None => GaussianKernel::new(sigma_from_moments(&run.moments[0], &run.moments[1], run.span), 1.0)?,
    };
    let errs = ns.iter().map(|&n| sup_error(&run.density, &gk, n, window)).collect::<Result<Vec<_>>>()?;
    Ok(LltErrorCurve::from_errors(LltMode::QuenchedDynamic, *window, ns, vec![errs], &gk))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicEnsemble {
    pub d: usize,
    pub spec: DynamicSpec,
    pub m_envs: usize,
    pub seed: u64,
}

/// Annealed dynamic curve. Without a kernel, `Sigma^2` is the environment
/// average of the second-moment estimates.
pub fn annealed_curve_dynamic(ens: &DynamicEnsemble, gk: Option<&GaussianKernel>, window: &LltWindow, ns: &[usize], params: &SolverParams) -> Result<LltErrorCurve> {
    if ens.m_envs == 0 {
        return Err(Error::invalid("m_envs", "must be positive"));
    }
    let nmax = *ns.iter().max().ok_or_else(|| Error::invalid("n_list", "empty"))?;
    let lat = Arc::new(LatticeBox::new(ens.d, window.required_side(nmax), Boundary::Periodic)?);
    let horizon = (nmax * nmax) as f64 * window.t2;
    let runs = (0..ens.m_envs)
        .into_par_iter()
        .map(|e| {
            let env = make_dynamic(lat.clone(), &ens.spec, horizon, rng::derive(ens.seed, &[rng::label("llt-env"), e as u64]))?;
            dynamic_run(&env, window, ns, params)
        })
        .collect::<Result<Vec<_>>>()?;
    let gk = match gk {
        Some(g) => g.clone(),
        None => {
            let d = ens.d;
            let mut s = DMatrix::zeros(d, d);
            for r in &runs {
                s += sigma_from_moments(&r.moments[0], &r.moments[1], r.span);
            }
            GaussianKernel::new(s / runs.len() as f64, 1.0)?
        }
    };
    let per_env = runs
        .iter()
        .map(|r| ns.iter().map(|&n| sup_error(&r.density, &gk, n, window)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(LltErrorCurve::from_errors(LltMode::AnnealedDynamic, *window, ns, per_env, &gk))
}

/// Values of `u` on `[a, b] x B(x0, r)`, restricted to the observed grid.
fn cylinder_values(u: &SpaceTimeField, x0: usize, r: f64, a: f64, b: f64) -> Result<Vec<f64>> {
    let lat = &u.lattice;
    let ball = lat.ball(x0, r.floor() as u64)?;
    let cols: Vec<usize> = ball
        .members
        .iter()
        .map(|&v| u.index_of(v).ok_or_else(|| Error::invalid("solution", "cylinder not observed")))
        .collect::<Result<_>>()?;
    let ts = u.times_in(a, b);
    if ts.is_empty() {
        return Err(Error::invalid("solution", "no observed times in the cylinder"));
    }
    Ok(ts.iter().flat_map(|&i| cols.iter().map(move |&j| u.values[i][j])).collect())
}

fn osc(vals: &[f64]) -> f64 {
    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    max - min
}

#[derive(Clone, Debug, Serialize)]
pub struct OscillationRecord {
    pub t0: f64,
    pub x0: Vec<i64>,
    pub n: f64,
    pub max_n: f64,
    pub min_n: f64,
    pub osc_n: f64,
    pub osc_quarter: f64,
    /// `osc_{Q(n/4)} / osc_{Q(n)}`; `None` when `u` is constant on `Q(n)`.
    pub gamma: Option<f64>,
    pub rho: Option<f64>,
    pub degenerate: bool,
}

/// Oscillation ratio between `Q(n/4)` and `Q(n) = [t0 - n^2, t0] x B(x0, n)`.
pub fn oscillation_measure(u: &SpaceTimeField, t0: f64, x0: usize, n: f64) -> Result<OscillationRecord> {
    let big = cylinder_values(u, x0, n, t0 - n * n, t0)?;
    let q = n / 4.0;
    let small = cylinder_values(u, x0, q, t0 - q * q, t0)?;
    let osc_n = osc(&big);
    let osc_quarter = osc(&small);
    let degenerate = osc_n <= 0.0;
    let gamma = (!degenerate).then(|| osc_quarter / osc_n);
    Ok(OscillationRecord {
        t0,
        x0: u.lattice.coords(x0),
        n,
        max_n: big.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        min_n: big.iter().cloned().fold(f64::INFINITY, f64::min),
        osc_n,
        osc_quarter,
        gamma,
        rho: gamma.filter(|g| *g > 0.0).map(|g| g.ln() / 0.25f64.ln()),
        degenerate,
    })
}

/// Hoelder exponent read off directly: slope of `ln osc_{Q(r)}` against
/// `ln r` over the given radii.
pub fn holder_exponent(u: &SpaceTimeField, t0: f64, x0: usize, radii: &[f64]) -> Result<f64> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &r in radii {
        let o = osc(&cylinder_values(u, x0, r, t0 - r * r, t0)?);
        if o > 0.0 {
            xs.push(r.ln());
            ys.push(o.ln());
        }
    }
    if xs.len() < 2 {
        return Err(Error::Degenerate("oscillation vanishes on the radii".into()));
    }
    Ok(linear_fit(&xs, &ys).1)
}

#[derive(Clone, Debug, Serialize)]
pub struct HarnackReport {
    /// Time average of the `eta^2 theta` weighted density of `{u >= eps}`.
    pub premise_value: f64,
    pub premise_holds: bool,
    /// Minimum of `u` over `[t0 - n^2/8, t0] x B(x0, n/4)`.
    pub min_half: f64,
    /// `min_half / max_{Q(n)} u`.
    pub ratio: f64,
}

pub fn harnack_check(u: &SpaceTimeField, theta: &[f64], t0: f64, x0: usize, n: f64, eps: f64) -> Result<HarnackReport> {
    let lat = &u.lattice;
    let ball = lat.ball(x0, n.floor() as u64)?;
    let ts = u.times_in(t0 - n * n, t0);
    if ts.len() < 2 {
        return Err(Error::invalid("solution", "need at least two observed times in Q(n)"));
    }
    let weights: Vec<(usize, f64)> = ball
        .members
        .iter()
        .map(|&v| {
            let eta = (1.0 - 2.0 * lat.distance(x0, v).unwrap() as f64 / n).max(0.0);
            let j = u.index_of(v).ok_or_else(|| Error::invalid("solution", "ball not observed"))?;
            Ok((j, eta * eta * theta[v]))
        })
        .collect::<Result<_>>()?;
    let total: f64 = weights.iter().map(|(_, w)| w).sum();
    let times: Vec<f64> = ts.iter().map(|&i| u.times[i]).collect();
    let dens: Vec<f64> = ts
        .iter()
        .map(|&i| weights.iter().filter(|(j, _)| u.values[i][*j] >= eps).map(|(_, w)| w).sum::<f64>() / total)
        .collect();
    let premise_value = crate::special::trapezoid_clipped(&times, &dens, t0 - n * n, t0) / (n * n);
    let half = cylinder_values(u, x0, n / 4.0, t0 - n * n / 8.0, t0)?;
    let min_half = half.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_n = cylinder_values(u, x0, n, t0 - n * n, t0)?.into_iter().fold(f64::NEG_INFINITY, f64::max);
    Ok(HarnackReport { premise_value, premise_holds: premise_value >= 0.5, min_half, ratio: min_half / max_n })
}

#[derive(Clone, Debug, Serialize)]
pub struct DiagBounds {
    pub times: Vec<f64>,
    /// `sup_{y in B(x0, lambda sqrt t)} p(t, x0, y)`.
    pub sup_values: Vec<f64>,
    /// `inf_{y in B(x0, sqrt t)} p(t, x0, y)`.
    pub inf_values: Vec<f64>,
    pub upper_slope: f64,
    pub upper_const: f64,
    pub lower_slope: f64,
    pub lower_const: f64,
}

/// Diagonal and near-diagonal bounds from a kernel field observed on balls
/// around its source.
pub fn diag_bounds(hk: &HeatKernelField, lambda: f64) -> Result<DiagBounds> {
    let u = &hk.density;
    let lat = &u.lattice;
    let d = lat.dim() as f64;
    let mut times = Vec::new();
    let mut sup_values = Vec::new();
    let mut inf_values = Vec::new();
    for (i, &t) in u.times.iter().enumerate() {
        let tau = t - hk.s;
        if tau <= 0.0 {
            continue;
        }
        let pick = |r: f64| -> Result<Vec<f64>> {
            let ball = lat.ball(hk.x0, r.floor() as u64)?;
            ball.members.iter().map(|&v| u.get(i, v).ok_or_else(|| Error::invalid("kernel", "ball not observed"))).collect()
        };
        sup_values.push(pick(lambda * tau.sqrt())?.into_iter().fold(0.0, f64::max));
        inf_values.push(pick(tau.sqrt())?.into_iter().fold(f64::INFINITY, f64::min));
        times.push(tau);
    }
    if times.len() < 2 {
        return Err(Error::invalid("t_list", "need at least two positive times"));
    }
    let lt: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let ls: Vec<f64> = sup_values.iter().map(|p| p.ln()).collect();
    let li: Vec<f64> = inf_values.iter().map(|p| p.max(f64::MIN_POSITIVE).ln()).collect();
    let scaled = |vals: &[f64]| -> Vec<f64> { vals.iter().zip(&times).map(|(p, t)| p * t.powf(d / 2.0)).collect() };
    Ok(DiagBounds {
        upper_slope: linear_fit(&lt, &ls).1,
        lower_slope: linear_fit(&lt, &li).1,
        upper_const: scaled(&sup_values).into_iter().fold(0.0, f64::max),
        lower_const: scaled(&inf_values).into_iter().fold(f64::INFINITY, f64::min),
        times,
        sup_values,
        inf_values,
    })
}

/// Vertices within `radius` of `x0`, for observing kernels near their source.
pub fn ball_vertices(lat: &LatticeBox, x0: usize, radius: f64) -> Result<Vec<usize>> {
    Ok(lat.ball(x0, radius.floor() as u64)?.members)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_values() {
        let g = GaussianKernel::isotropic(2, 2.0, 1.0).unwrap();
        assert!((g.k(1.0, &[0.0, 0.0]).unwrap() - 1.0 / (4.0 * std::f64::consts::PI)).abs() < 1e-15);
        let g = GaussianKernel::isotropic(2, 1.0, 1.0).unwrap();
        assert!((g.k(1.0, &[0.0, 0.0]).unwrap() - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-15);
        assert_eq!(g.k(0.7, &[0.3, -1.1]).unwrap(), g.k(0.7, &[-0.3, 1.1]).unwrap());
        assert!(g.k(0.0, &[0.0, 0.0]).is_err());
        assert!(GaussianKernel::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]], 1.0).is_err());
    }

    #[test]
    fn floor_mapping() {
        assert_eq!(floor_scale(4, &[0.7, -0.3]), vec![2, -2]);
    }

    #[test]
    fn window_grids() {
        let w = LltWindow { k: 1.0, t1: 0.5, t2: 1.0 };
        assert_eq!(w.steps(8).len(), 33);
        assert_eq!(w.required_side(32), 385);
        let lat = LatticeBox::new(2, 25, Boundary::Periodic).unwrap();
        let v = w.vertices(&lat, 2).unwrap();
        assert_eq!(v.len(), 13);
    }

    #[test]
    fn constant_solution_is_degenerate() {
        let lat = Arc::new(LatticeBox::new(2, 21, Boundary::Periodic).unwrap());
        let u = SpaceTimeField::from_fn(lat.clone(), (0..=20).map(|t| t as f64).collect(), (0..lat.n_vertices()).collect(), |_, _| 3.0);
        let rec = oscillation_measure(&u, 16.0, lat.origin(), 4.0).unwrap();
        assert!(rec.degenerate && rec.gamma.is_none());
        let h = harnack_check(&u, &vec![1.0; lat.n_vertices()], 16.0, lat.origin(), 4.0, 1.0).unwrap();
        assert!(h.premise_holds);
        assert_eq!(h.min_half, 3.0);
        let h = harnack_check(&u, &vec![1.0; lat.n_vertices()], 16.0, lat.origin(), 4.0, 5.0).unwrap();
        assert!(!h.premise_holds);
    }
}
