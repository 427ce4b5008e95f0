//! Space-time covariances of the interface: direct Monte Carlo and the
//! random-walk representation through the induced conductances.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::field::require_absorbing;
use super::{DirichletBasis, Potential, Trajectory};
use crate::environment::DynamicEnvironment;
use crate::heatkernel::{solve_dynamic, Observe, SolverParams};
use crate::io::Table;
use crate::special::{batch_means_stderr, mean, simpson, stderr};
use crate::{row, Error, Result};

/// `omega_t(x, y) = V''(phi_t(y) - phi_t(x))`, piecewise constant on the
/// recorded grid.
pub fn induced_env(traj: &Trajectory, potential: &Potential) -> Result<DynamicEnvironment> {
    if !traj.is_full() {
        return Err(Error::invalid("trajectory", "the induced environment needs full snapshots"));
    }
    DynamicEnvironment::interface(traj.lattice.clone(), potential.clone(), traj.times.clone(), traj.snapshots.clone())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CovarianceEstimate {
    pub t: f64,
    pub x: Vec<i64>,
    pub value: f64,
    pub stderr: f64,
    pub tail_bound: f64,
    pub samples: usize,
}

impl CovarianceEstimate {
    /// `|a - b|` in units of the combined standard error.
    pub fn z_score(&self, other: &CovarianceEstimate) -> f64 {
        let s = (self.stderr.powi(2) + other.stderr.powi(2)).sqrt();
        (self.value - other.value).abs() / s
    }
}

fn lag(t: f64, h: f64) -> Result<usize> {
    let k = (t / h).round();
    if t < 0.0 || (k * h - t).abs() > 1e-9 * t.max(1.0) {
        return Err(Error::invalid("t", format!("{t} is not a nonnegative multiple of the grid step {h}")));
    }
    Ok(k as usize)
}

fn ensemble_stderr(per_traj: &[f64], pooled: &[f64]) -> f64 {
    if per_traj.len() >= 2 {
        stderr(per_traj)
    } else {
        batch_means_stderr(pooled, 20)
    }
}

/// `cov(phi_s(0), phi_{s+t}(x))` averaged over time origins `s` and
/// trajectories. Standard error across trajectories, or by batch means for a
/// single one.
pub fn cov_direct(trajs: &[Trajectory], x: &[i64], t: f64) -> Result<CovarianceEstimate> {
    let first = trajs.first().ok_or_else(|| Error::invalid("trajectories", "empty ensemble"))?;
    if trajs.iter().any(|tr| !tr.stationary) {
        return Err(Error::invalid("trajectories", "nonstationary start: add burn-in or start from a Gibbs sample"));
    }
    let lat = &first.lattice;
    let o = lat.origin();
    let xv = lat.vertex(x)?;
    let k = lag(t, first.record_every)?;
    let cols: Vec<(usize, usize)> = trajs.iter().map(|tr| Ok((tr.column(o)?, tr.column(xv)?))).collect::<Result<_>>()?;
    let all_a: Vec<f64> = trajs.iter().zip(&cols).flat_map(|(tr, &(a, _))| tr.snapshots.iter().map(move |s| s[a])).collect();
    let all_b: Vec<f64> = trajs.iter().zip(&cols).flat_map(|(tr, &(_, b))| tr.snapshots.iter().map(move |s| s[b])).collect();
    let (ma, mb) = (mean(&all_a), mean(&all_b));
    let mut pooled = Vec::new();
    let mut per_traj = Vec::new();
    for (tr, &(a, b)) in trajs.iter().zip(&cols) {
        if tr.snapshots.len() <= k {
            return Err(Error::invalid("t", "lag exceeds the recorded window"));
        }
        let prods: Vec<f64> = (0..tr.snapshots.len() - k).map(|i| (tr.snapshots[i][a] - ma) * (tr.snapshots[i + k][b] - mb)).collect();
        per_traj.push(mean(&prods));
        pooled.extend(prods);
    }
    Ok(CovarianceEstimate {
        t,
        x: x.to_vec(),
        value: mean(&per_traj),
        stderr: ensemble_stderr(&per_traj, &pooled),
        tail_bound: 0.0,
        samples: pooled.len(),
    })
}

fn default_h() -> f64 {
    0.01
}

fn default_tail_tol() -> f64 {
    1e-6
}

fn default_start_every() -> f64 {
    2.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HsParams {
    /// Quadrature step in `s`.
    #[serde(default = "default_h")]
    pub h: f64,
    /// Truncation point; chosen from the spectral tail bound when absent.
    #[serde(default)]
    pub s_max: Option<f64>,
    #[serde(default = "default_tail_tol")]
    pub tail_tol: f64,
    /// Spacing of the time origins along each trajectory.
    #[serde(default = "default_start_every")]
    pub start_every: f64,
    #[serde(default)]
    pub solver: SolverParams,
}

impl Default for HsParams {
    fn default() -> Self {
        HsParams { h: default_h(), s_max: None, tail_tol: default_tail_tol(), start_every: default_start_every(), solver: SolverParams::default() }
    }
}

/// Time integrals `int_0^U p(s0, s0 + t + s, 0, x) ds` for each `(t, x)` in
/// `points`, with the truncation tail bound.
#[derive(Clone, Debug, PartialEq)]
pub struct HsIntegrals {
    pub values: Vec<f64>,
    pub tails: Vec<f64>,
    pub s_max: f64,
}

/// Truncation point and spectral tail `e^{-c lambda_1 (t + U)} / (c lambda_1)`.
fn truncation(params: &HsParams, gap: f64, t_min: f64) -> Result<f64> {
    let auto = ((1.0 / (params.tail_tol * gap)).ln() / gap - t_min).max(params.h);
    let auto = (auto / params.h).ceil() * params.h;
    let u = params.s_max.unwrap_or(auto);
    let spectral = (-gap * (t_min + u)).exp() / gap;
    if spectral > params.tail_tol {
        return Err(Error::TailBound { bound: spectral, tol: params.tail_tol });
    }
    Ok(u)
}

/// Kernel integrals on a dynamic environment over an absorbing box whose
/// conductances are bounded below by `c_minus`.
pub fn hs_integrals(env: &DynamicEnvironment, s0: f64, points: &[(f64, Vec<i64>)], c_minus: f64, params: &HsParams) -> Result<HsIntegrals> {
    let lat = env.lattice().clone();
    require_absorbing(&lat, "the covariance representation")?;
    let d = lat.dim();
    if d < 3 {
        return Err(Error::invalid("d", "the time integral of the kernel is used for d >= 3"));
    }
    if points.is_empty() {
        return Err(Error::invalid("points", "nothing to compute"));
    }
    let gap = c_minus * DirichletBasis::new(lat.clone())?.lambda_min();
    let lags: Vec<usize> = points.iter().map(|(t, _)| lag(*t, params.h)).collect::<Result<_>>()?;
    let t_min = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let u = truncation(params, gap, t_min)?;
    let m = {
        let m = (u / params.h).ceil() as usize;
        m + m % 2
    };
    let s_max = m as f64 * params.h;
    let j_max = lags.iter().max().unwrap() + m;
    let times: Vec<f64> = (0..=j_max).map(|j| s0 + j as f64 * params.h).collect();
    let verts: Vec<usize> = points.iter().map(|(_, x)| lat.vertex(x)).collect::<Result<_>>()?;
    let hk = solve_dynamic(env, s0, lat.origin(), &times, &params.solver, &Observe::Subset(verts.clone()))?;
    let mut values = Vec::with_capacity(points.len());
    let mut tails = Vec::with_capacity(points.len());
    for ((t, _), (&k, &v)) in points.iter().zip(lags.iter().zip(&verts)) {
        let series: Vec<f64> = (k..=k + m).map(|j| hk.prob.get(j, v).unwrap()).collect();
        values.push(simpson(&series, params.h));
        let spectral = (-gap * (t + s_max)).exp() / gap;
        // Power-law bound with the constant measured on the computed window.
        let c19 = series
            .iter()
            .enumerate()
            .map(|(i, p)| (t + i as f64 * params.h).max(1.0).powf(d as f64 / 2.0) * p)
            .fold(0.0, f64::max);
        let power = c19 * (t + s_max).max(1.0).powf(1.0 - d as f64 / 2.0) / (d as f64 / 2.0 - 1.0);
        tails.push(spectral.min(power));
    }
    Ok(HsIntegrals { values, tails, s_max })
}

/// `cov(phi_0(0), phi_t(x)) = int_0^inf E[p(0, t + s, 0, x)] ds`, averaged over
/// time origins spaced `start_every` along each trajectory.
pub fn cov_hs(trajs: &[Trajectory], potential: &Potential, points: &[(f64, Vec<i64>)], params: &HsParams) -> Result<Vec<CovarianceEstimate>> {
    if trajs.is_empty() {
        return Err(Error::invalid("trajectories", "empty ensemble"));
    }
    if trajs.iter().any(|tr| !tr.stationary) {
        return Err(Error::invalid("trajectories", "nonstationary start: add burn-in or start from a Gibbs sample"));
    }
    let lat = trajs[0].lattice.clone();
    require_absorbing(&lat, "the covariance representation")?;
    let c_minus = potential.c_minus();
    let gap = c_minus * DirichletBasis::new(lat.clone())?.lambda_min();
    let t_min = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let t_max = points.iter().map(|p| p.0).fold(0.0, f64::max);
    let u = truncation(params, gap, t_min)?;
    let span = t_max + u + 2.0 * params.h;
    let envs: Vec<DynamicEnvironment> = trajs.iter().map(|tr| induced_env(tr, potential)).collect::<Result<_>>()?;
    let mut tasks = Vec::new();
    for (i, tr) in trajs.iter().enumerate() {
        let (a, b) = (tr.times[0], *tr.times.last().unwrap());
        let mut k = 0;
        loop {
            let s0 = a + k as f64 * params.start_every;
            if s0 + span > b {
                break;
            }
            tasks.push((i, s0));
            k += 1;
        }
    }
    if tasks.is_empty() {
        return Err(Error::invalid("trajectories", format!("recorded window shorter than t + s_max = {span}")));
    }
    let results: Vec<HsIntegrals> = tasks
        .par_iter()
        .map(|&(i, s0)| hs_integrals(&envs[i], s0, points, c_minus, params))
        .collect::<Result<_>>()?;
    Ok(points
        .iter()
        .enumerate()
        .map(|(p, (t, x))| {
            let pooled: Vec<f64> = results.iter().map(|r| r.values[p]).collect();
            let per_traj: Vec<f64> = (0..trajs.len())
                .filter_map(|i| {
                    let v: Vec<f64> = tasks.iter().zip(&results).filter(|((j, _), _)| *j == i).map(|(_, r)| r.values[p]).collect();
                    (!v.is_empty()).then(|| mean(&v))
                })
                .collect();
            let tail = results.iter().map(|r| r.tails[p]).fold(0.0, f64::max);
            CovarianceEstimate {
                t: *t,
                x: x.clone(),
                value: mean(&per_traj),
                stderr: ensemble_stderr(&per_traj, &pooled),
                tail_bound: tail,
                samples: pooled.len(),
            }
        })
        .collect())
}

/// One row of the covariance CSV.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CovRow {
    pub n: Option<usize>,
    pub t: f64,
    pub x: Vec<i64>,
    pub cov_mc: Option<f64>,
    pub stderr: Option<f64>,
    pub cov_hs: Option<f64>,
    pub tail_bound: Option<f64>,
    pub target: Option<f64>,
}

/// `(n, t, x1.., cov_mc, stderr, cov_hs, tail_bound, target)`.
pub fn covariance_table(d: usize, rows: &[CovRow]) -> Table {
    let mut header = vec!["n".to_string(), "t".to_string()];
    header.extend((1..=d).map(|i| format!("x{i}")));
    header.extend(["cov_mc", "stderr", "cov_hs", "tail_bound", "target"].map(String::from));
    let mut table = Table::new(header);
    for r in rows {
        let mut cells = row![r.n, r.t];
        cells.extend(r.x.iter().map(|c| c.to_string()));
        cells.extend(row![r.cov_mc, r.stderr, r.cov_hs, r.tail_bound, r.target]);
        table.push(cells);
    }
    table
}

/// Empirical `E[omega^p]` of the induced conductances over all edges and
/// recorded times, with the estimate from the first half of each trajectory.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OmegaMoment {
    pub p: f64,
    pub full: f64,
    pub half: f64,
    pub min_omega: f64,
    pub stable: bool,
}

pub fn omega_moment(trajs: &[Trajectory], potential: &Potential, p: f64) -> Result<OmegaMoment> {
    let (mut full, mut half) = ((0.0, 0usize), (0.0, 0usize));
    let mut min_omega = f64::INFINITY;
    for tr in trajs {
        if !tr.is_full() {
            return Err(Error::invalid("trajectory", "needs full snapshots"));
        }
        let n = tr.snapshots.len();
        for (i, phi) in tr.snapshots.iter().enumerate() {
            for e in tr.lattice.edges() {
                let a = e.x.map_or(0.0, |v| phi[v]);
                let b = e.y.map_or(0.0, |v| phi[v]);
                let w = potential.d2v(b - a);
                min_omega = min_omega.min(w);
                let wp = w.powf(p);
                full.0 += wp;
                full.1 += 1;
                if 2 * i < n {
                    half.0 += wp;
                    half.1 += 1;
                }
            }
        }
    }
    if full.1 == 0 {
        return Err(Error::invalid("trajectories", "empty ensemble"));
    }
    let (f, h) = (full.0 / full.1 as f64, half.0 / half.1 as f64);
    Ok(OmegaMoment { p, full: f, half: h, min_omega, stable: (f - h).abs() <= 0.2 * f })
}
