//! Exact single-source heat kernels by uniformization.
//!
//! A generator `L f(x) = theta(x)^-1 sum_y w(x,y) (f(y) - f(x))` is turned into
//! the stochastic matrix `P = I + L / Lambda`, and the distribution at time `t`
//! is the Poisson(`Lambda t`) mixture of `delta P^k`. Vectors are propagated
//! forward (row vectors), which is also what the time-inhomogeneous case needs.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::environment::{mu, ConductanceField, DynamicEnvironment, SpeedMeasure};
use crate::io::{fmt_f64, Table};
use crate::lattice::LatticeBox;
use crate::special::{poisson_weights, PoissonWeights};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverParams {
    pub eps_trunc: f64,
    /// Multiplier on the maximal exit rate when choosing `Lambda`.
    pub lambda_safety: f64,
    /// Step for time-dependent environments without usable breakpoints.
    pub dt: f64,
    /// Freeze each dynamic step at its midpoint (otherwise at its left end).
    pub midpoint: bool,
    /// Align dynamic steps to environment jump times when there are few.
    pub align_events: bool,
    pub align_limit: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            eps_trunc: 1e-12,
            lambda_safety: 1.0,
            dt: 0.05,
            midpoint: true,
            align_events: true,
            align_limit: 20_000,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_trunc > 0.0 && self.eps_trunc <= 1e-6) {
            return Err(Error::invalid("solver.eps_trunc", "must lie in (0, 1e-6]"));
        }
        if !(self.dt > 0.0) {
            return Err(Error::invalid("solver.dt", "must be positive"));
        }
        if !(self.lambda_safety >= 1.0) {
            return Err(Error::invalid("solver.lambda_safety", "must be at least 1"));
        }
        Ok(())
    }
}

/// Matrix-free form of `P = I + L / Lambda` acting on row vectors.
///
/// Conductances are stored per axis, `w[i][v]` for the edge `v -- v + e_i`.
/// The product is evaluated in pull form row by row along axis 0, with the
/// neighbouring rows along the other axes precomputed.
pub struct Stencil {
    lattice: Arc<LatticeBox>,
    w: Vec<Vec<f64>>,
    inv_rate: Vec<f64>,
    stay: Vec<f64>,
    /// Per row and axis `i >= 1`: start of the row at `+e_i` and at `-e_i`.
    rows: Vec<[usize; 2]>,
    pub lambda: f64,
}

const NONE: usize = usize::MAX;

impl Stencil {
    pub fn new(lattice: Arc<LatticeBox>, omega: &[f64], theta: &[f64], safety: f64) -> Self {
        let n = lattice.n_vertices();
        let d = lattice.dim();
        let mut m = vec![0.0; n];
        for (e, edge) in lattice.edges().iter().enumerate() {
            for v in [edge.x, edge.y].into_iter().flatten() {
                m[v] += omega[e];
            }
        }
        let lambda = m.iter().zip(theta).map(|(a, t)| a / t).fold(0.0, f64::max) * safety;
        let inv_rate: Vec<f64> = theta.iter().map(|t| 1.0 / (t * lambda)).collect();
        let stay = m.iter().zip(&inv_rate).map(|(a, g)| (1.0 - a * g).max(0.0)).collect();
        let mut w: Vec<Vec<f64>> = (0..d).map(|i| (0..n).map(|v| omega[v * d + i]).collect()).collect();
        // A plus-edge leaving an absorbing box carries no flow into the box.
        for (i, wi) in w.iter_mut().enumerate() {
            for (v, x) in wi.iter_mut().enumerate() {
                if lattice.step(v, i, 1).is_none() {
                    *x = 0.0;
                }
            }
        }
        let side = lattice.side();
        let mut rows = Vec::with_capacity(n / side * (d - 1));
        for r in (0..n).step_by(side) {
            for i in 1..d {
                rows.push([lattice.step(r, i, 1).unwrap_or(NONE), lattice.step(r, i, -1).unwrap_or(NONE)]);
            }
        }
        Stencil { lattice, w, inv_rate, stay, rows, lambda }
    }

    /// `out = pi P`; `h` is scratch space.
    pub fn push(&self, pi: &[f64], out: &mut [f64], h: &mut [f64]) {
        let n = pi.len();
        assert!(out.len() == n && h.len() == n);
        for ((hh, p), g) in h.iter_mut().zip(pi).zip(&self.inv_rate) {
            *hh = p * g;
        }
        let h = &*h;
        let side = self.lattice.side();
        let d = self.lattice.dim();
        let periodic = self.lattice.is_periodic();
        let w0 = &self.w[0];
        for (ri, r) in (0..n).step_by(side).enumerate() {
            let o = &mut out[r..r + side];
            let hr = &h[r..r + side];
            let wr = &w0[r..r + side];
            for ((ok, p), s) in o.iter_mut().zip(&pi[r..r + side]).zip(&self.stay[r..r + side]) {
                *ok = p * s;
            }
            for ((ok, wk), hk) in o[..side - 1].iter_mut().zip(&wr[..side - 1]).zip(&hr[1..]) {
                *ok += wk * hk;
            }
            for ((ok, wk), hk) in o[1..].iter_mut().zip(&wr[..side - 1]).zip(&hr[..side - 1]) {
                *ok += wk * hk;
            }
            if periodic {
                o[side - 1] += wr[side - 1] * hr[0];
                o[0] += wr[side - 1] * hr[side - 1];
            }
            for i in 1..d {
                let [up, down] = self.rows[ri * (d - 1) + i - 1];
                let wi = &self.w[i];
                if up != NONE {
                    for ((ok, wk), hu) in o.iter_mut().zip(&wi[r..r + side]).zip(&h[up..up + side]) {
                        *ok += wk * hu;
                    }
                }
                if down != NONE {
                    for ((ok, wk), hd) in o.iter_mut().zip(&wi[down..down + side]).zip(&h[down..down + side]) {
                        *ok += wk * hd;
                    }
                }
            }
        }
    }

    /// Distribution after time `tau`, starting from `pi`.
    pub fn advance(&self, pi: &[f64], tau: f64, eps: f64) -> Result<(Vec<f64>, PoissonWeights)> {
        let w = poisson_weights(self.lambda * tau, eps)?;
        let n = pi.len();
        let mut acc = vec![0.0; n];
        let mut v = pi.to_vec();
        let mut next = vec![0.0; n];
        let mut h = vec![0.0; n];
        for k in 0..=w.right() {
            let wk = w.get(k);
            if wk > 0.0 {
                for (a, x) in acc.iter_mut().zip(&v) {
                    *a += wk * x;
                }
            }
            if k < w.right() {
                self.push(&v, &mut next, &mut h);
                std::mem::swap(&mut v, &mut next);
            }
        }
        Ok((acc, w))
    }

    /// Values on `observe` at each of the durations `taus`, from one sweep
    /// of powers of `P`.
    pub fn advance_observed(&self, pi: &[f64], taus: &[f64], observe: &[usize], eps: f64) -> Result<(Vec<Vec<f64>>, usize)> {
        let req: Vec<(f64, bool)> = taus.iter().map(|&t| (t, false)).collect();
        let sweep = self.advance_multi(pi, &req, observe, eps)?;
        Ok((sweep.values, sweep.k_max))
    }

    /// One sweep serving several durations. Each request `(tau, full)` yields
    /// the full distribution when `full`, otherwise its values on `observe`.
    pub fn advance_multi(&self, pi: &[f64], requests: &[(f64, bool)], observe: &[usize], eps: f64) -> Result<MultiSweep> {
        let weights: Vec<PoissonWeights> = requests.iter().map(|&(t, _)| poisson_weights(self.lambda * t, eps)).collect::<Result<_>>()?;
        let k_max = weights.iter().map(|w| w.right()).max().unwrap_or(0);
        let n = pi.len();
        let mut values: Vec<Vec<f64>> = requests.iter().map(|&(_, full)| vec![0.0; if full { n } else { observe.len() }]).collect();
        let mut v = pi.to_vec();
        let mut next = vec![0.0; n];
        let mut h = vec![0.0; n];
        let mut gathered = vec![0.0; observe.len()];
        for k in 0..=k_max {
            let mut have_gather = false;
            for ((w, out), &(_, full)) in weights.iter().zip(values.iter_mut()).zip(requests) {
                let wk = w.get(k);
                if wk <= 1e-300 {
                    continue;
                }
                if full {
                    for (o, x) in out.iter_mut().zip(&v) {
                        *o += wk * x;
                    }
                } else {
                    if !have_gather {
                        for (g, &x) in gathered.iter_mut().zip(observe) {
                            *g = v[x];
                        }
                        have_gather = true;
                    }
                    for (o, g) in out.iter_mut().zip(&gathered) {
                        *o += wk * g;
                    }
                }
            }
            if k < k_max {
                self.push(&v, &mut next, &mut h);
                std::mem::swap(&mut v, &mut next);
            }
        }
        let tail_bound = weights.iter().map(|w| w.tail_bound).fold(0.0, f64::max);
        Ok(MultiSweep { values, k_max, tail_bound })
    }
}

pub struct MultiSweep {
    pub values: Vec<Vec<f64>>,
    pub k_max: usize,
    pub tail_bound: f64,
}

/// Values `u(t_i, v_j)` on a time grid and a vertex set.
#[derive(Clone, Debug)]
pub struct SpaceTimeField {
    pub lattice: Arc<LatticeBox>,
    pub times: Vec<f64>,
    /// Sorted vertex ids.
    pub vertices: Vec<usize>,
    pub values: Vec<Vec<f64>>,
}

impl SpaceTimeField {
    pub fn from_fn(lattice: Arc<LatticeBox>, times: Vec<f64>, vertices: Vec<usize>, f: impl Fn(f64, usize) -> f64) -> Self {
        let values = times.iter().map(|&t| vertices.iter().map(|&v| f(t, v)).collect()).collect();
        SpaceTimeField { lattice, times, vertices, values }
    }

    pub fn index_of(&self, v: usize) -> Option<usize> {
        self.vertices.binary_search(&v).ok()
    }

    pub fn time_index(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&s| (s - t).abs() <= 1e-9 * (1.0 + t.abs()))
    }

    pub fn get(&self, ti: usize, v: usize) -> Option<f64> {
        self.index_of(v).map(|j| self.values[ti][j])
    }

    /// Indices of grid times inside `[a, b]`.
    pub fn times_in(&self, a: f64, b: f64) -> Vec<usize> {
        let tol = 1e-9 * (1.0 + b.abs());
        (0..self.times.len()).filter(|&i| self.times[i] >= a - tol && self.times[i] <= b + tol).collect()
    }

    /// Restriction to a vertex subset, in the subset's order.
    pub fn slice(&self, ti: usize, verts: &[usize]) -> Result<Vec<f64>> {
        verts
            .iter()
            .map(|&v| self.get(ti, v).ok_or_else(|| Error::invalid("vertex", format!("{v} not observed"))))
            .collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SolverMeta {
    pub lambda: f64,
    pub k_max: usize,
    pub eps_trunc: f64,
    pub tail_bound: f64,
    pub dt: Option<f64>,
    pub steps: usize,
}

#[derive(Clone, Debug)]
pub struct HeatKernelField {
    pub s: f64,
    pub x0: usize,
    /// `P(X_t = y)`.
    pub prob: SpaceTimeField,
    /// `P(X_t = y) / theta(y)`.
    pub density: SpaceTimeField,
    pub meta: SolverMeta,
}

#[derive(Clone, Debug, Default)]
pub enum Observe {
    #[default]
    All,
    Subset(Vec<usize>),
}

impl Observe {
    fn vertices(&self, lat: &LatticeBox) -> Result<Vec<usize>> {
        match self {
            Observe::All => Ok((0..lat.n_vertices()).collect()),
            Observe::Subset(v) => {
                let mut v = v.clone();
                v.sort_unstable();
                v.dedup();
                for &x in &v {
                    lat.check_vertex(x)?;
                }
                Ok(v)
            }
        }
    }
}

fn check_times(times: &[f64], start: f64) -> Result<()> {
    if times.is_empty() {
        return Err(Error::invalid("times", "empty time grid"));
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times[0] < start {
        return Err(Error::invalid("times", "times must be sorted and not before the start time"));
    }
    Ok(())
}

fn delta(n: usize, x0: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[x0] = 1.0;
    v
}

fn assemble(lattice: Arc<LatticeBox>, s: f64, x0: usize, times: Vec<f64>, vertices: Vec<usize>, prob: Vec<Vec<f64>>, theta: &[f64], meta: SolverMeta) -> HeatKernelField {
    let density = prob.iter().map(|row| row.iter().zip(&vertices).map(|(p, &v)| p / theta[v]).collect()).collect();
    HeatKernelField {
        s,
        x0,
        prob: SpaceTimeField { lattice: lattice.clone(), times: times.clone(), vertices: vertices.clone(), values: prob },
        density: SpaceTimeField { lattice, times, vertices, values: density },
        meta,
    }
}

/// Static kernel `p_theta(t, x0, .)` for all `t` in `times`.
pub fn solve_static(field: &ConductanceField, speed: &SpeedMeasure, x0: usize, times: &[f64], params: &SolverParams, observe: &Observe) -> Result<HeatKernelField> {
    params.validate()?;
    let lat = field.lattice.clone();
    lat.check_vertex(x0)?;
    check_times(times, 0.0)?;
    let stencil = Stencil::new(lat.clone(), &field.omega, &speed.theta, params.lambda_safety);
    let vertices = observe.vertices(&lat)?;
    let n = lat.n_vertices();
    let init = delta(n, x0);
    let mut meta = SolverMeta { lambda: stencil.lambda, eps_trunc: params.eps_trunc, ..Default::default() };
    let prob = match observe {
        Observe::Subset(_) => {
            let (vals, kmax) = stencil.advance_observed(&init, times, &vertices, params.eps_trunc)?;
            meta.k_max = kmax;
            meta.tail_bound = params.eps_trunc;
            meta.steps = 1;
            vals
        }
        Observe::All => {
            let req: Vec<(f64, bool)> = times.iter().map(|&t| (t, true)).collect();
            let sweep = stencil.advance_multi(&init, &req, &[], params.eps_trunc)?;
            meta.k_max = sweep.k_max;
            meta.tail_bound = sweep.tail_bound;
            meta.steps = 1;
            sweep.values
        }
    };
    Ok(assemble(lat, 0.0, x0, times.to_vec(), vertices, prob, &speed.theta, meta))
}

/// Propagate a distribution under the static generator for time `tau`.
pub fn propagate_static(field: &ConductanceField, speed: &SpeedMeasure, init: &[f64], tau: f64, params: &SolverParams) -> Result<Vec<f64>> {
    let stencil = Stencil::new(field.lattice.clone(), &field.omega, &speed.theta, params.lambda_safety);
    Ok(stencil.advance(init, tau, params.eps_trunc)?.0)
}

/// Step boundaries for a dynamic solve on `[s, t_end]`.
fn step_grid(env: &DynamicEnvironment, s: f64, t_end: f64, params: &SolverParams) -> (Vec<f64>, Option<f64>) {
    let mut pts = vec![s, t_end];
    let aligned = if params.align_events { env.breakpoints(s, t_end, params.align_limit) } else { None };
    let dt = match aligned {
        Some(bp) => {
            pts.extend(bp);
            None
        }
        None => {
            let k = ((t_end - s) / params.dt).ceil() as usize;
            pts.extend((1..k).map(|i| s + i as f64 * params.dt));
            Some(params.dt)
        }
    };
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
    (pts, dt)
}

/// What a dynamic run reports: values on `observe` at `obs_times` and full
/// distributions at `full_times`. Both lists are sorted.
pub struct DynamicRecord<'a> {
    pub obs_times: &'a [f64],
    pub observe: &'a [usize],
    pub full_times: &'a [f64],
}

/// Propagate `init` from `s` under the dynamic VSRW generator. Reported
/// times inside a frozen step are read off the same uniformization sweep.
pub fn run_dynamic(
    env: &DynamicEnvironment,
    s: f64,
    init: Vec<f64>,
    params: &SolverParams,
    rec: &DynamicRecord,
    mut on_obs: impl FnMut(usize, Vec<f64>),
    mut on_full: impl FnMut(usize, &[f64]),
) -> Result<SolverMeta> {
    params.validate()?;
    let t_end = rec.obs_times.last().copied().unwrap_or(s).max(rec.full_times.last().copied().unwrap_or(s));
    if !rec.obs_times.is_empty() {
        check_times(rec.obs_times, s)?;
    }
    if !rec.full_times.is_empty() {
        check_times(rec.full_times, s)?;
    }
    env.check_time(s)?;
    env.check_time(t_end)?;
    let lat = env.lattice().clone();
    let theta = vec![1.0; lat.n_vertices()];
    let (grid, dt) = step_grid(env, s, t_end, params);
    let mut meta = SolverMeta { eps_trunc: params.eps_trunc, dt, ..Default::default() };
    let mut omega = vec![0.0; lat.n_edges()];
    let mut sweep = env.sweep();
    let mut cur = init;
    let tol = |t: f64| 1e-12 * (1.0 + t.abs());
    let (mut oi, mut fi) = (0, 0);
    while oi < rec.obs_times.len() && rec.obs_times[oi] <= s + tol(s) {
        on_obs(oi, rec.observe.iter().map(|&x| cur[x]).collect());
        oi += 1;
    }
    while fi < rec.full_times.len() && rec.full_times[fi] <= s + tol(s) {
        on_full(fi, &cur);
        fi += 1;
    }
    for w in grid.windows(2) {
        let (a, b) = (w[0], w[1]);
        let freeze = if params.midpoint { 0.5 * (a + b) } else { a };
        sweep.at(freeze, &mut omega)?;
        let stencil = Stencil::new(lat.clone(), &omega, &theta, params.lambda_safety);
        let mut req = Vec::new();
        let o0 = oi;
        while oi < rec.obs_times.len() && rec.obs_times[oi] <= b + tol(b) {
            req.push((rec.obs_times[oi] - a, false));
            oi += 1;
        }
        let f0 = fi;
        while fi < rec.full_times.len() && rec.full_times[fi] <= b + tol(b) {
            req.push((rec.full_times[fi] - a, true));
            fi += 1;
        }
        req.push((b - a, true));
        let out = stencil.advance_multi(&cur, &req, rec.observe, params.eps_trunc)?;
        meta.lambda = meta.lambda.max(stencil.lambda);
        meta.k_max = meta.k_max.max(out.k_max);
        meta.tail_bound += out.tail_bound;
        meta.steps += 1;
        let mut values = out.values.into_iter();
        for i in o0..oi {
            on_obs(i, values.next().unwrap());
        }
        for i in f0..fi {
            on_full(i, &values.next().unwrap());
        }
        cur = values.next().unwrap();
    }
    Ok(meta)
}

/// Dynamic VSRW kernel `p(s, t, x0, .)` for `t` in `times`.
pub fn solve_dynamic(env: &DynamicEnvironment, s: f64, x0: usize, times: &[f64], params: &SolverParams, observe: &Observe) -> Result<HeatKernelField> {
    let lat = env.lattice().clone();
    lat.check_vertex(x0)?;
    check_times(times, s)?;
    let vertices = observe.vertices(&lat)?;
    let mut prob = vec![Vec::new(); times.len()];
    let rec = DynamicRecord { obs_times: times, observe: &vertices, full_times: &[] };
    let meta = run_dynamic(env, s, delta(lat.n_vertices(), x0), params, &rec, |i, v| prob[i] = v, |_, _| {})?;
    let theta = vec![1.0; lat.n_vertices()];
    Ok(assemble(lat, s, x0, times.to_vec(), vertices, prob, &theta, meta))
}

/// Propagate a distribution under the dynamic generator from `s` to `t`.
pub fn propagate_dynamic(env: &DynamicEnvironment, init: Vec<f64>, s: f64, t: f64, params: &SolverParams) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    let rec = DynamicRecord { obs_times: &[], observe: &[], full_times: &[t] };
    run_dynamic(env, s, init, params, &rec, |_, _| {}, |_, v| out = v.to_vec())?;
    Ok(out)
}

/// Max-abs gap between `delta P(s,t)` and `delta P(s,u) P(u,t)`.
pub fn chapman_kolmogorov_static(field: &ConductanceField, speed: &SpeedMeasure, x0: usize, s: f64, u: f64, t: f64, params: &SolverParams) -> Result<f64> {
    if !(s <= u && u <= t) {
        return Err(Error::invalid("times", "need s <= u <= t"));
    }
    let init = delta(field.lattice.n_vertices(), x0);
    let direct = propagate_static(field, speed, &init, t - s, params)?;
    let mid = propagate_static(field, speed, &init, u - s, params)?;
    let composed = propagate_static(field, speed, &mid, t - u, params)?;
    Ok(max_gap(&direct, &composed))
}

pub fn chapman_kolmogorov_dynamic(env: &DynamicEnvironment, x0: usize, s: f64, u: f64, t: f64, params: &SolverParams) -> Result<f64> {
    if !(s <= u && u <= t) {
        return Err(Error::invalid("times", "need s <= u <= t"));
    }
    let init = delta(env.lattice().n_vertices(), x0);
    let direct = propagate_dynamic(env, init.clone(), s, t, params)?;
    let mid = propagate_dynamic(env, init, s, u, params)?;
    let composed = propagate_dynamic(env, mid, u, t, params)?;
    Ok(max_gap(&direct, &composed))
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Maximal exit rate `max mu / theta` of a static field.
pub fn max_exit_rate(field: &ConductanceField, speed: &SpeedMeasure) -> f64 {
    mu(field).iter().zip(&speed.theta).map(|(m, t)| m / t).fold(0.0, f64::max)
}

/// Kernel dump rows `(t, x_1..x_d, P, p_theta)`.
pub fn kernel_table(hk: &HeatKernelField) -> Table {
    let lat = &hk.prob.lattice;
    let mut header = vec!["t".to_string()];
    header.extend((1..=lat.dim()).map(|i| format!("x{i}")));
    header.extend(["P".to_string(), "p_theta".to_string()]);
    let mut table = Table::new(header);
    for (ti, &t) in hk.prob.times.iter().enumerate() {
        for (j, &v) in hk.prob.vertices.iter().enumerate() {
            let mut row = vec![fmt_f64(t)];
            row.extend(lat.coords(v).iter().map(|c| c.to_string()));
            row.push(fmt_f64(hk.prob.values[ti][j]));
            row.push(fmt_f64(hk.density.values[ti][j]));
            table.push(row);
        }
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{make_speed, sample_iid, ConductanceLaw, SpeedSpec};
    use crate::lattice::Boundary;

    fn torus(side: usize) -> Arc<LatticeBox> {
        Arc::new(LatticeBox::new(2, side, Boundary::Periodic).unwrap())
    }

    #[test]
    fn zero_time_is_delta() {
        let lat = torus(9);
        let f = ConductanceField::constant(lat.clone(), 1.0).unwrap();
        let s = make_speed(&f, &SpeedSpec::Csrw).unwrap();
        let hk = solve_static(&f, &s, lat.origin(), &[0.0], &SolverParams::default(), &Observe::All).unwrap();
        for (j, &v) in hk.prob.vertices.iter().enumerate() {
            let expect = if v == lat.origin() { 1.0 } else { 0.0 };
            assert_eq!(hk.prob.values[0][j], expect);
        }
        assert_eq!(hk.density.get(0, lat.origin()), Some(0.25));
    }

    #[test]
    fn time_rescaling_under_constant_conductance() {
        let lat = torus(15);
        let f1 = ConductanceField::constant(lat.clone(), 1.0).unwrap();
        let f3 = ConductanceField::constant(lat.clone(), 3.0).unwrap();
        let v = SpeedMeasure::vsrw(lat.n_vertices());
        let p = SolverParams::default();
        let a = solve_static(&f3, &v, lat.origin(), &[0.7], &p, &Observe::All).unwrap();
        let b = solve_static(&f1, &v, lat.origin(), &[2.1], &p, &Observe::All).unwrap();
        assert!(max_gap(&a.prob.values[0], &b.prob.values[0]) < 1e-12);
    }

    #[test]
    fn observed_mode_matches_full_vectors() {
        let lat = torus(21);
        let f = sample_iid(lat.clone(), &ConductanceLaw::LogUniform { a: 0.5, b: 2.0 }, 4).unwrap();
        let s = make_speed(&f, &SpeedSpec::Csrw).unwrap();
        let times = [0.0, 0.5, 1.0, 3.0, 3.5];
        let obs: Vec<usize> = (0..lat.n_vertices()).step_by(7).collect();
        let p = SolverParams::default();
        let full = solve_static(&f, &s, lat.origin(), &times, &p, &Observe::All).unwrap();
        let part = solve_static(&f, &s, lat.origin(), &times, &p, &Observe::Subset(obs.clone())).unwrap();
        for ti in 0..times.len() {
            for &v in &obs {
                let a = full.density.get(ti, v).unwrap();
                let b = part.density.get(ti, v).unwrap();
                assert!((a - b).abs() < 1e-12, "t={} v={v}", times[ti]);
            }
        }
    }

    #[test]
    fn static_lift_matches_static_solver() {
        let lat = torus(15);
        let f = sample_iid(lat.clone(), &ConductanceLaw::LogUniform { a: 0.5, b: 2.0 }, 1).unwrap();
        let v = SpeedMeasure::vsrw(lat.n_vertices());
        let env = DynamicEnvironment::static_lift(f.clone(), (0.0, 10.0));
        let p = SolverParams::default();
        let times = [1.0, 2.5, 4.0];
        let a = solve_static(&f, &v, lat.origin(), &times, &p, &Observe::All).unwrap();
        let b = solve_dynamic(&env, 0.0, lat.origin(), &times, &p, &Observe::All).unwrap();
        for ti in 0..times.len() {
            assert!(max_gap(&a.prob.values[ti], &b.prob.values[ti]) < 1e-10);
        }
    }

    #[test]
    fn absorbing_box_loses_mass() {
        let lat = Arc::new(LatticeBox::new(2, 5, Boundary::Absorbing).unwrap());
        let f = ConductanceField::constant(lat.clone(), 1.0).unwrap();
        let v = SpeedMeasure::vsrw(lat.n_vertices());
        let hk = solve_static(&f, &v, lat.origin(), &[1.0, 5.0], &SolverParams::default(), &Observe::All).unwrap();
        let m1: f64 = hk.prob.values[0].iter().sum();
        let m5: f64 = hk.prob.values[1].iter().sum();
        assert!(m1 < 1.0 && m5 < m1 && m5 > 0.0);
    }

    #[test]
    fn rejects_bad_params_and_times() {
        let lat = torus(5);
        let f = ConductanceField::constant(lat.clone(), 1.0).unwrap();
        let v = SpeedMeasure::vsrw(lat.n_vertices());
        let bad = SolverParams { eps_trunc: 1e-3, ..Default::default() };
        assert!(solve_static(&f, &v, 0, &[1.0], &bad, &Observe::All).is_err());
        assert!(solve_static(&f, &v, 0, &[2.0, 1.0], &SolverParams::default(), &Observe::All).is_err());
        assert!(matches!(
            solve_static(&f, &v, 0, &[1e6], &SolverParams::default(), &Observe::All),
            Err(Error::PoissonOverflow(_))
        ));
    }
}
