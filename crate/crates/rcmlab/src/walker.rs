//! Monte Carlo random walks in static and dynamic environments, and the
//! diffusive covariance estimator.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::{make_speed, mu, sample_iid, ConductanceField, ConductanceLaw, DynamicEnvironment, SpeedMeasure, SpeedSpec};
use crate::io::{fmt_f64, Table};
use crate::lattice::{Boundary, LatticeBox};
use crate::rng::{self, Rng};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jump {
    pub time: f64,
    pub from: usize,
    /// `None` when the walk leaves an absorbing box.
    pub to: Option<usize>,
    pub axis: usize,
    pub sign: i8,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WalkPath {
    pub start: usize,
    pub s: f64,
    pub end: f64,
    pub seed: u64,
    pub jumps: Vec<Jump>,
}

impl WalkPath {
    /// Vertex at time `t`, or `None` once the walk was killed.
    pub fn position(&self, t: f64) -> Option<usize> {
        let k = self.jumps.partition_point(|j| j.time <= t);
        if k == 0 {
            Some(self.start)
        } else {
            self.jumps[k - 1].to
        }
    }

    /// Displacement in the universal cover at time `t`.
    pub fn unwrapped(&self, d: usize, t: f64) -> Vec<i64> {
        let mut z = vec![0i64; d];
        for j in self.jumps.iter().take_while(|j| j.time <= t) {
            z[j.axis] += j.sign as i64;
        }
        z
    }

    pub fn killed(&self) -> bool {
        self.jumps.last().is_some_and(|j| j.to.is_none())
    }
}

/// Outcome of a walk when the path itself is not kept.
#[derive(Clone, Debug)]
struct Endpoint {
    vertex: Option<usize>,
    displacement: Vec<i64>,
    jumps: u64,
}

trait Recorder {
    fn jump(&mut self, j: Jump);
}

impl Recorder for Vec<Jump> {
    fn jump(&mut self, j: Jump) {
        self.push(j);
    }
}

struct Counter<'a> {
    z: &'a mut [i64],
    n: u64,
}

impl Recorder for Counter<'_> {
    fn jump(&mut self, j: Jump) {
        self.z[j.axis] += j.sign as i64;
        self.n += 1;
    }
}

fn exp_sample(rng: &mut Rng, rate: f64) -> f64 {
    -(1.0 - rng.gen::<f64>()).ln() / rate
}

/// The `2d` directed moves out of a vertex as `(edge, neighbour, axis, sign)`.
fn moves(lat: &LatticeBox, v: usize) -> impl Iterator<Item = (usize, Option<usize>, usize, i8)> + '_ {
    (0..lat.dim()).flat_map(move |i| {
        [
            (lat.plus_edge(v, i), lat.step(v, i, 1), i, 1i8),
            (lat.minus_edge(v, i), lat.step(v, i, -1), i, -1i8),
        ]
    })
}

/// Jump tables of a static walk: exit rates and cumulative move weights.
pub struct StaticWalker {
    lattice: Arc<LatticeBox>,
    rate: Vec<f64>,
    cum: Vec<f64>,
    targets: Vec<(Option<usize>, usize, i8)>,
}

impl StaticWalker {
    pub fn new(field: &ConductanceField, speed: &SpeedMeasure) -> Result<Self> {
        let lat = field.lattice.clone();
        if speed.theta.len() != lat.n_vertices() {
            return Err(Error::invalid("speed", "length differs from vertex count"));
        }
        let k = 2 * lat.dim();
        let mut rate = Vec::with_capacity(lat.n_vertices());
        let mut cum = Vec::with_capacity(lat.n_vertices() * k);
        let mut targets = Vec::with_capacity(lat.n_vertices() * k);
        for v in 0..lat.n_vertices() {
            let mut acc = 0.0;
            for (e, y, axis, sign) in moves(&lat, v) {
                acc += field.omega[e];
                cum.push(acc);
                targets.push((y, axis, sign));
            }
            rate.push(acc / speed.theta[v]);
        }
        Ok(StaticWalker { lattice: lat, rate, cum, targets })
    }

    pub fn max_rate(&self) -> f64 {
        self.rate.iter().cloned().fold(0.0, f64::max)
    }

    fn run(&self, x0: usize, t_end: f64, rng: &mut Rng, rec: &mut impl Recorder) -> Option<usize> {
        let k = 2 * self.lattice.dim();
        let mut x = x0;
        let mut t = 0.0;
        loop {
            t += exp_sample(rng, self.rate[x]);
            if t > t_end {
                return Some(x);
            }
            let row = &self.cum[x * k..(x + 1) * k];
            let u = rng.gen::<f64>() * row[k - 1];
            let j = row.partition_point(|&c| c <= u).min(k - 1);
            let (y, axis, sign) = self.targets[x * k + j];
            rec.jump(Jump { time: t, from: x, to: y, axis, sign });
            match y {
                Some(y) => x = y,
                None => return None,
            }
        }
    }

    fn endpoint(&self, x0: usize, t_end: f64, rng: &mut Rng) -> Endpoint {
        let mut z = vec![0; self.lattice.dim()];
        let mut c = Counter { z: &mut z, n: 0 };
        let vertex = self.run(x0, t_end, rng, &mut c);
        let jumps = c.n;
        Endpoint { vertex, displacement: z, jumps }
    }
}

/// Exact path of the static walk on `[0, t_end]`.
pub fn simulate_static(field: &ConductanceField, speed: &SpeedMeasure, x0: usize, t_end: f64, seed: u64) -> Result<WalkPath> {
    field.lattice.check_vertex(x0)?;
    if !(t_end >= 0.0) {
        return Err(Error::invalid("T", "must be nonnegative"));
    }
    let w = StaticWalker::new(field, speed)?;
    let mut jumps = Vec::new();
    w.run(x0, t_end, &mut rng::stream(seed, &[rng::label("walk")]), &mut jumps);
    Ok(WalkPath { start: x0, s: 0.0, end: t_end, seed, jumps })
}

fn run_dynamic(env: &DynamicEnvironment, x0: usize, s: f64, t_end: f64, bound: f64, rng: &mut Rng, rec: &mut impl Recorder) -> Result<Option<usize>> {
    let lat = env.lattice().clone();
    let k = 2 * lat.dim();
    let mut w = vec![0.0; k];
    let mut mv: Vec<(Option<usize>, usize, i8)> = Vec::with_capacity(k);
    let mut x = x0;
    let mut t = s;
    loop {
        t += exp_sample(rng, bound);
        if t > t_end {
            return Ok(Some(x));
        }
        mv.clear();
        let mut total = 0.0;
        for (j, (e, y, axis, sign)) in moves(&lat, x).enumerate() {
            w[j] = env.query(e, t)?;
            total += w[j];
            mv.push((y, axis, sign));
        }
        if total > bound {
            return Err(Error::DominationViolated { rate: total, bound, t });
        }
        let u = rng.gen::<f64>() * bound;
        if u >= total {
            continue;
        }
        let mut acc = 0.0;
        let mut j = k - 1;
        for (i, wi) in w.iter().enumerate() {
            acc += wi;
            if u < acc {
                j = i;
                break;
            }
        }
        let (y, axis, sign) = mv[j];
        rec.jump(Jump { time: t, from: x, to: y, axis, sign });
        match y {
            Some(y) => x = y,
            None => return Ok(None),
        }
    }
}

/// Dynamic VSRW on `[s, t_end]` by thinning a rate-`bound` Poisson clock.
pub fn simulate_dynamic(env: &DynamicEnvironment, x0: usize, s: f64, t_end: f64, bound: f64, seed: u64) -> Result<WalkPath> {
    env.lattice().check_vertex(x0)?;
    env.check_time(s)?;
    env.check_time(t_end)?;
    if !(t_end >= s) || !(bound > 0.0) {
        return Err(Error::invalid("simulate_dynamic", "need t_end >= s and a positive dominating rate"));
    }
    let mut jumps = Vec::new();
    run_dynamic(env, x0, s, t_end, bound, &mut rng::stream(seed, &[rng::label("walk")]), &mut jumps)?;
    Ok(WalkPath { start: x0, s, end: t_end, seed, jumps })
}

/// Environments and path counts for Monte Carlo estimates. A quenched
/// ensemble has one environment and many paths, an annealed one many
/// environments with few paths each.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub d: usize,
    pub side: usize,
    pub law: ConductanceLaw,
    pub speed: SpeedSpec,
    pub n_envs: usize,
    pub paths_per_env: usize,
    pub seed: u64,
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        self.law.validate()?;
        if self.n_envs == 0 || self.paths_per_env == 0 {
            return Err(Error::invalid("ensemble", "need at least one environment and one path"));
        }
        Ok(())
    }

    pub fn lattice(&self) -> Result<Arc<LatticeBox>> {
        Ok(Arc::new(LatticeBox::new(self.d, self.side, Boundary::Periodic)?))
    }

    /// Field and speed measure of environment `k`.
    pub fn environment(&self, lattice: &Arc<LatticeBox>, k: usize) -> Result<(ConductanceField, SpeedMeasure)> {
        let field = sample_iid(lattice.clone(), &self.law, rng::derive(self.seed, &[rng::label("env"), k as u64]))?;
        let speed = match &self.speed {
            SpeedSpec::Custom { law, seed } => SpeedSpec::Custom { law: law.clone(), seed: rng::derive(*seed, &[k as u64]) },
            other => other.clone(),
        };
        let speed = make_speed(&field, &speed)?;
        Ok((field, speed))
    }

    fn path_seed(&self, tag: &str, env: usize, path: usize) -> u64 {
        rng::derive(self.seed, &[rng::label(tag), env as u64, path as u64])
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SigmaEstimate {
    pub d: usize,
    pub t: f64,
    /// Covariance of `X_T / sqrt(T)` for the walk with the given speed.
    pub sigma2: Vec<Vec<f64>>,
    pub sigma2_stderr: Vec<Vec<f64>>,
    /// Same for the VSRW on the same environments.
    pub sigma2_vsrw: Vec<Vec<f64>>,
    pub sigma2_vsrw_stderr: Vec<Vec<f64>>,
    /// `1 / E[theta]` from the sampled speed measures.
    pub a_hat: f64,
    pub n_samples: usize,
    pub mean_jumps: f64,
}

impl SigmaEstimate {
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.d, self.d, |i, j| self.sigma2[i][j])
    }

    /// `a_hat * Sigma_vsrw`, the prediction for `sigma2`.
    pub fn predicted(&self) -> Vec<Vec<f64>> {
        self.sigma2_vsrw.iter().map(|r| r.iter().map(|v| v * self.a_hat).collect()).collect()
    }
}

fn covariance(samples: &[Vec<f64>], d: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = samples.len() as f64;
    let mean: Vec<f64> = (0..d).map(|i| samples.iter().map(|s| s[i]).sum::<f64>() / n).collect();
    let mut cov = vec![vec![0.0; d]; d];
    let mut se = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            let prods: Vec<f64> = samples.iter().map(|s| (s[i] - mean[i]) * (s[j] - mean[j])).collect();
            let m = prods.iter().sum::<f64>() / n;
            let var = prods.iter().map(|p| (p - m) * (p - m)).sum::<f64>() / (n - 1.0);
            cov[i][j] = m * n / (n - 1.0);
            se[i][j] = (var / n).sqrt();
        }
    }
    (cov, se)
}

/// Empirical `Sigma^2` from unwrapped displacements at time `T`.
pub fn estimate_sigma(spec: &EnsembleSpec, t: f64) -> Result<SigmaEstimate> {
    spec.validate()?;
    if !(t > 0.0) {
        return Err(Error::invalid("T", "must be positive"));
    }
    let lat = spec.lattice()?;
    let d = lat.dim();
    let x0 = lat.origin();
    let per_env: Vec<(Vec<Endpoint>, Vec<Endpoint>, f64)> = (0..spec.n_envs)
        .into_par_iter()
        .map(|k| -> Result<_> {
            let (field, speed) = spec.environment(&lat, k)?;
            let general = StaticWalker::new(&field, &speed)?;
            let vsrw = StaticWalker::new(&field, &SpeedMeasure::vsrw(lat.n_vertices()))?;
            let lambda = general.max_rate().max(vsrw.max_rate());
            if 6.0 * (lambda * t).sqrt() >= lat.side() as f64 {
                return Err(Error::DiffusiveScaleTooLarge { lambda, t, side: lat.side() });
            }
            let run = |w: &StaticWalker, tag: &str| -> Vec<Endpoint> {
                (0..spec.paths_per_env)
                    .into_par_iter()
                    .map(|p| w.endpoint(x0, t, &mut rng::stream(spec.path_seed(tag, k, p), &[])))
                    .collect()
            };
            Ok((run(&general, "sigma"), run(&vsrw, "sigma-vsrw"), speed.mean()))
        })
        .collect::<Result<_>>()?;
    let scale = 1.0 / t.sqrt();
    let to_samples = |pick: fn(&(Vec<Endpoint>, Vec<Endpoint>, f64)) -> &Vec<Endpoint>| -> Vec<Vec<f64>> {
        per_env.iter().flat_map(|e| pick(e).iter().map(|p| p.displacement.iter().map(|&z| z as f64 * scale).collect())).collect()
    };
    let general = to_samples(|e| &e.0);
    let vsrw = to_samples(|e| &e.1);
    let (sigma2, sigma2_stderr) = covariance(&general, d);
    let (sigma2_vsrw, sigma2_vsrw_stderr) = covariance(&vsrw, d);
    let mean_theta = per_env.iter().map(|e| e.2).sum::<f64>() / per_env.len() as f64;
    let jumps: u64 = per_env.iter().flat_map(|e| e.0.iter().map(|p| p.jumps)).sum();
    Ok(SigmaEstimate {
        d,
        t,
        sigma2,
        sigma2_stderr,
        sigma2_vsrw,
        sigma2_vsrw_stderr,
        a_hat: 1.0 / mean_theta,
        n_samples: general.len(),
        mean_jumps: jumps as f64 / general.len() as f64,
    })
}

/// Monte Carlo estimate of `p_theta(t, x0, .)` with binomial standard errors.
#[derive(Clone, Debug)]
pub struct EmpiricalKernel {
    pub t: f64,
    pub x0: usize,
    pub n_paths: usize,
    pub counts: Vec<u64>,
    pub density: Vec<f64>,
    pub stderr: Vec<f64>,
}

pub fn empirical_kernel(field: &ConductanceField, speed: &SpeedMeasure, t: f64, x0: usize, n_paths: usize, seed: u64) -> Result<EmpiricalKernel> {
    field.lattice.check_vertex(x0)?;
    if n_paths == 0 || !(t >= 0.0) {
        return Err(Error::invalid("empirical_kernel", "need paths and a nonnegative time"));
    }
    let w = StaticWalker::new(field, speed)?;
    let n = field.lattice.n_vertices();
    let ends: Vec<Option<usize>> = (0..n_paths)
        .into_par_iter()
        .map(|p| w.endpoint(x0, t, &mut rng::stream(rng::derive(seed, &[rng::label("kernel"), p as u64]), &[])).vertex)
        .collect();
    let mut counts = vec![0u64; n];
    for v in ends.into_iter().flatten() {
        counts[v] += 1;
    }
    let np = n_paths as f64;
    let density = counts.iter().zip(&speed.theta).map(|(&c, th)| c as f64 / np / th).collect();
    let stderr = counts
        .iter()
        .zip(&speed.theta)
        .map(|(&c, th)| {
            let p = c as f64 / np;
            (p * (1.0 - p) / np).sqrt() / th
        })
        .collect();
    Ok(EmpiricalKernel { t, x0, n_paths, counts, density, stderr })
}

/// Endpoints of dynamic walks, used for kernel and covariance estimates.
pub fn dynamic_endpoints(env: &DynamicEnvironment, x0: usize, s: f64, t_end: f64, bound: f64, n_paths: usize, seed: u64) -> Result<Vec<(Option<usize>, Vec<i64>)>> {
    env.check_time(s)?;
    env.check_time(t_end)?;
    let d = env.lattice().dim();
    (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = rng::stream(rng::derive(seed, &[rng::label("dyn-walk"), p as u64]), &[]);
            let mut z = vec![0; d];
            let mut c = Counter { z: &mut z, n: 0 };
            let v = run_dynamic(env, x0, s, t_end, bound, &mut rng, &mut c)?;
            Ok((v, z))
        })
        .collect()
}

/// Dominating rate for thinning: `max_x mu(x)` for a static lift, else the
/// environment's declared bound.
pub fn thinning_bound(env: &DynamicEnvironment) -> f64 {
    match env {
        DynamicEnvironment::StaticLift { field, .. } => mu(field).into_iter().fold(0.0, f64::max),
        other => other.dominating_rate(),
    }
}

/// Path dump rows `(path_id, event_index, time, x..., unwrapped...)`.
pub fn path_table(lattice: &LatticeBox, paths: &[WalkPath]) -> Table {
    let d = lattice.dim();
    let mut header = vec!["path_id".to_string(), "event_index".into(), "time".into()];
    header.extend((1..=d).map(|i| format!("x{i}")));
    header.extend((1..=d).map(|i| format!("u{i}")));
    let mut table = Table::new(header);
    for (pid, path) in paths.iter().enumerate() {
        let mut z = vec![0i64; d];
        let mut emit = |k: usize, t: f64, v: Option<usize>, z: &[i64]| {
            let mut row = vec![pid.to_string(), k.to_string(), fmt_f64(t)];
            match v {
                Some(v) => row.extend(lattice.coords(v).iter().map(|c| c.to_string())),
                None => row.extend((0..d).map(|_| "outside".to_string())),
            }
            row.extend(z.iter().map(|c| c.to_string()));
            table.push(row);
        };
        emit(0, path.s, Some(path.start), &z);
        for (k, j) in path.jumps.iter().enumerate() {
            z[j.axis] += j.sign as i64;
            emit(k + 1, j.time, j.to, &z);
        }
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::{mean, stderr};

    fn torus(d: usize, side: usize) -> Arc<LatticeBox> {
        Arc::new(LatticeBox::new(d, side, Boundary::Periodic).unwrap())
    }

    #[test]
    fn zero_time_has_no_jumps() {
        let lat = torus(2, 7);
        let f = ConductanceField::constant(lat.clone(), 1.0).unwrap();
        let p = simulate_static(&f, &SpeedMeasure::vsrw(lat.n_vertices()), lat.origin(), 0.0, 3).unwrap();
        assert!(p.jumps.is_empty());
        assert_eq!(p.position(0.0), Some(lat.origin()));
    }

    #[test]
    fn jump_counts_match_rates() {
        let lat = torus(2, 31);
        let f = ConductanceField::constant(lat.clone(), 1.0).unwrap();
        let t = 3.0;
        for (spec, rate) in [(SpeedSpec::Csrw, 1.0), (SpeedSpec::Vsrw, 4.0)] {
            let speed = make_speed(&f, &spec).unwrap();
            let n: Vec<f64> = (0..4000)
                .map(|s| simulate_static(&f, &speed, lat.origin(), t, s).unwrap().jumps.len() as f64)
                .collect();
            assert!((mean(&n) - rate * t).abs() < 3.0 * stderr(&n) + 1e-9, "{spec:?}");
        }
    }

    #[test]
    fn paths_are_adjacent_and_reproducible() {
        let lat = torus(3, 9);
        let f = sample_iid(lat.clone(), &ConductanceLaw::LogUniform { a: 0.5, b: 2.0 }, 2).unwrap();
        let speed = make_speed(&f, &SpeedSpec::Csrw).unwrap();
        let a = simulate_static(&f, &speed, 5, 20.0, 11).unwrap();
        let b = simulate_static(&f, &speed, 5, 20.0, 11).unwrap();
        assert_eq!(a, b);
        let mut x = 5;
        for j in &a.jumps {
            assert_eq!(j.from, x);
            let y = j.to.unwrap();
            assert_eq!(lat.distance(x, y).unwrap(), 1);
            x = y;
        }
        assert!(a.jumps.windows(2).all(|w| w[0].time < w[1].time));
    }

    #[test]
    fn constant_dynamic_rate() {
        let lat = torus(2, 31);
        let f = ConductanceField::constant(lat.clone(), 0.5).unwrap();
        let env = DynamicEnvironment::static_lift(f, (0.0, 5.0));
        let n: Vec<f64> = (0..3000)
            .map(|s| simulate_dynamic(&env, lat.origin(), 1.0, 5.0, 3.0, s).unwrap().jumps.len() as f64)
            .collect();
        assert!((mean(&n) - 2.0 * 2.0 * 0.5 * 4.0).abs() < 3.0 * stderr(&n));
    }

    #[test]
    fn domination_violation_aborts() {
        let lat = torus(2, 7);
        let f = ConductanceField::constant(lat.clone(), 1.0).unwrap();
        let env = DynamicEnvironment::static_lift(f, (0.0, 100.0));
        assert!(matches!(
            simulate_dynamic(&env, 0, 0.0, 100.0, 2.0, 1),
            Err(Error::DominationViolated { .. })
        ));
    }

    #[test]
    fn diffusive_guard() {
        let spec = EnsembleSpec {
            d: 2,
            side: 11,
            law: ConductanceLaw::Constant { value: 1.0 },
            speed: SpeedSpec::Vsrw,
            n_envs: 1,
            paths_per_env: 10,
            seed: 0,
        };
        assert!(matches!(estimate_sigma(&spec, 10.0), Err(Error::DiffusiveScaleTooLarge { .. })));
    }

    #[test]
    fn kernel_at_time_zero_and_mass() {
        let lat = torus(2, 9);
        let f = ConductanceField::constant(lat.clone(), 1.0).unwrap();
        let speed = make_speed(&f, &SpeedSpec::Csrw).unwrap();
        let k = empirical_kernel(&f, &speed, 0.0, 3, 100, 1).unwrap();
        assert_eq!(k.density[3], 0.25);
        let k = empirical_kernel(&f, &speed, 2.0, 3, 1000, 1).unwrap();
        let mass: f64 = k.density.iter().zip(&speed.theta).map(|(p, t)| p * t).sum();
        assert!((mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn path_table_layout() {
        let lat = torus(2, 7);
        let f = ConductanceField::constant(lat.clone(), 1.0).unwrap();
        let p = simulate_static(&f, &SpeedMeasure::vsrw(lat.n_vertices()), lat.origin(), 2.0, 4).unwrap();
        let t = path_table(&lat, &[p.clone()]);
        assert_eq!(t.rows.len(), p.jumps.len() + 1);
        assert_eq!(t.header.len(), 3 + 4);
    }
}
