//! Numerical verifiers for the Sobolev, Poincare, energy and maximal
//! inequalities. Each check returns both sides with the constant stripped.

use serde::{Deserialize, Serialize};

use crate::environment::{ConductanceField, DynamicEnvironment, SpeedMeasure};
use crate::heatkernel::SpaceTimeField;
use crate::lattice::{make_cylinder, radius_of, Ball, CylinderKind, CylinderParams, LatticeBox, SpaceTimeCylinder};
use crate::{Error, Result};

use super::exponents::{rho, schedule_values, Exponent, ExponentBundle, Schedule};
use super::functionals::{a5, Functionals, LocalData};
use super::norms::{dirichlet, grad_sup, local_energy, norm_on, space_norm, space_time_norm, weighted_mean, Weight};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InequalityKind {
    Sobolev,
    Poincare,
    PoincareSet,
    Energy,
    MaximalStatic,
    MaximalL1,
    MaximalDynamic,
}

impl InequalityKind {
    pub const ALL: [InequalityKind; 7] = [
        InequalityKind::Sobolev,
        InequalityKind::Poincare,
        InequalityKind::PoincareSet,
        InequalityKind::Energy,
        InequalityKind::MaximalStatic,
        InequalityKind::MaximalL1,
        InequalityKind::MaximalDynamic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InequalityKind::Sobolev => "sobolev",
            InequalityKind::Poincare => "poincare",
            InequalityKind::PoincareSet => "poincare-set",
            InequalityKind::Energy => "energy",
            InequalityKind::MaximalStatic => "maximal-static",
            InequalityKind::MaximalL1 => "maximal-l1",
            InequalityKind::MaximalDynamic => "maximal-dynamic",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InequalityReport {
    pub kind: InequalityKind,
    pub n: f64,
    pub lhs: f64,
    /// Right-hand side without the unknown constant.
    pub rhs: f64,
    /// `lhs / rhs`, absent when `rhs = 0`.
    pub c_hat: Option<f64>,
    pub functionals: Functionals,
    pub test_function: String,
}

impl InequalityReport {
    fn new(kind: InequalityKind, n: f64, lhs: f64, rhs: f64, functionals: Functionals, test_function: impl Into<String>) -> Result<Self> {
        if !lhs.is_finite() || !rhs.is_finite() {
            return Err(Error::NonFinite(format!("{} inequality sides", kind.name())));
        }
        let c_hat = (rhs > 0.0).then(|| lhs / rhs);
        Ok(InequalityReport { kind, n, lhs, rhs, c_hat, functionals, test_function: test_function.into() })
    }

    /// `lhs <= c rhs` up to rounding.
    pub fn holds_with(&self, c: f64) -> bool {
        self.lhs <= c * self.rhs * (1.0 + 1e-12) + 1e-300
    }
}

/// Vertices of the ball with a lattice neighbour outside it.
pub fn inner_boundary(lat: &LatticeBox, ball: &Ball) -> Vec<usize> {
    ball.members
        .iter()
        .copied()
        .filter(|&x| {
            (0..lat.dim()).any(|a| [-1, 1].iter().any(|&s| lat.step(x, a, s).map_or(true, |y| !ball.contains(y))))
        })
        .collect()
}

/// `||v^2||_{rho,B} <= c |B|^{2/d} ||nu||_{q,B} ||theta||_{1,B} E(v) / theta(B)` for `v = 0` on the
/// inner boundary and outside `B`.
pub fn check_sobolev(field: &ConductanceField, speed: &SpeedMeasure, ball: &Ball, v: &[f64], q: Exponent) -> Result<InequalityReport> {
    let lat = &field.lattice;
    q.require_above_one("q")?;
    if v.len() != lat.n_vertices() {
        return Err(Error::invalid("v", "length differs from the lattice"));
    }
    let boundary = inner_boundary(lat, ball);
    let bad = (0..lat.n_vertices()).any(|x| v[x] != 0.0 && (!ball.contains(x) || boundary.binary_search(&x).is_ok()));
    if bad {
        return Err(Error::invalid("v", "test function must vanish on the inner boundary and outside the ball"));
    }
    let data = LocalData::new(field, speed);
    let b = &ball.members;
    let d = lat.dim() as f64;
    let r = rho(lat.dim(), q);
    let r = if r.is_infinite() { Exponent::INF } else { Exponent(r) };
    let v2: Vec<f64> = v.iter().map(|x| x * x).collect();
    let lhs = norm_on(&v2, b, r, Weight::Unit)?;
    let theta_b: f64 = b.iter().map(|&x| data.theta[x]).sum();
    let rhs = (b.len() as f64).powf(2.0 / d)
        * norm_on(&data.nu, b, q, Weight::Unit)?
        * norm_on(&data.theta, b, Exponent(1.0), Weight::Unit)?
        * dirichlet(field, v, v)
        / theta_b;
    InequalityReport::new(InequalityKind::Sobolev, ball.radius as f64, lhs, rhs, Functionals::default(), "bump")
}

/// Weighted Poincare inequality on `B(x0, n)`; with `set`, the mean is taken
/// over that set and the right side carries `(1 + theta(B)/theta(N))^2`.
pub fn check_poincare(
    field: &ConductanceField,
    speed: &SpeedMeasure,
    ball: &Ball,
    u: &[f64],
    set: Option<&[usize]>,
    q: Exponent,
    r: Exponent,
) -> Result<InequalityReport> {
    let lat = &field.lattice;
    if u.len() != lat.n_vertices() {
        return Err(Error::invalid("u", "length differs from the lattice"));
    }
    let data = LocalData::new(field, speed);
    let b = &ball.members;
    let n = ball.radius.max(1) as f64;
    let (kind, mean, factor) = match set {
        None => (InequalityKind::Poincare, weighted_mean(u, b, &data.theta)?, 1.0),
        Some(s) => {
            if s.is_empty() {
                return Err(Error::invalid("set", "must be nonempty"));
            }
            if s.iter().any(|&x| !ball.contains(x)) {
                return Err(Error::invalid("set", "must lie inside the ball"));
            }
            let tb: f64 = b.iter().map(|&x| data.theta[x]).sum();
            let tn: f64 = s.iter().map(|&x| data.theta[x]).sum();
            (InequalityKind::PoincareSet, weighted_mean(u, s, &data.theta)?, (1.0 + tb / tn).powi(2))
        }
    };
    let dev: Vec<f64> = b.iter().map(|&x| u[x] - mean).collect();
    let l1 = space_norm(&dev, b, Exponent(1.0), Weight::Normalized(&data.theta))?;
    let a1 = data.a1(b, q, r)?;
    let rhs = a1 * factor * n * n / b.len() as f64 * local_energy(field, u, b);
    let f = Functionals { a1: Some(a1), ..Default::default() };
    InequalityReport::new(kind, n, l1 * l1, rhs, f, "caller")
}

/// Space and time cutoffs for the energy estimate.
#[derive(Clone, Debug)]
pub struct Cutoffs {
    /// Vertex-indexed, values in `[0, 1]`.
    pub eta: Vec<f64>,
    /// Time cutoff and its Lipschitz constant.
    pub xi_start: f64,
    pub xi_ramp: f64,
}

impl Cutoffs {
    pub fn xi(&self, t: f64) -> f64 {
        ((t - self.xi_start) / self.xi_ramp).clamp(0.0, 1.0)
    }

    pub fn xi_lip(&self) -> f64 {
        1.0 / self.xi_ramp
    }
}

/// Linear decay from 1 on `B(x0, sigma' n)` to 0 on the boundary of
/// `B(x0, sigma n)`, and a linear time ramp over `[t0 - sigma n^2, t0 - sigma' n^2]`.
pub fn default_cutoffs(lat: &LatticeBox, t0: f64, x0: usize, n: f64, sigma: f64, sigma_prime: f64) -> Result<Cutoffs> {
    if !(sigma > sigma_prime && sigma_prime > 0.0 && sigma <= 1.0) {
        return Err(Error::invalid("sigma_prime", format!("need 0 < sigma' < sigma <= 1, got {sigma_prime}, {sigma}")));
    }
    let outer = radius_of(sigma * n);
    let inner = radius_of(sigma_prime * n);
    if outer <= inner {
        return Err(Error::invalid("n", format!("balls of radii {}n and {}n coincide", sigma, sigma_prime)));
    }
    let ball = lat.ball(x0, outer)?;
    let mut eta = vec![0.0; lat.n_vertices()];
    for &x in &ball.members {
        let dist = lat.distance(x0, x)? as f64;
        eta[x] = ((outer as f64 - dist) / (outer - inner) as f64).clamp(0.0, 1.0);
    }
    Ok(Cutoffs { eta, xi_start: t0 - sigma * n * n, xi_ramp: (sigma - sigma_prime) * n * n })
}

/// Input for the energy estimate on `Q = I x B`.
pub struct EnergyInput<'a> {
    pub field: &'a ConductanceField,
    pub speed: &'a SpeedMeasure,
    /// A nonnegative subsolution observed on a grid covering `Q`.
    pub u: &'a SpaceTimeField,
    pub interval: (f64, f64),
    pub ball: &'a Ball,
    pub cutoffs: &'a Cutoffs,
    pub k: f64,
    pub p: Exponent,
}

pub fn check_energy(inp: &EnergyInput) -> Result<InequalityReport> {
    let lat = &inp.field.lattice;
    let b = &inp.ball.members;
    let c = inp.cutoffs;
    inp.p.require_above_one("p")?;
    if c.eta.len() != lat.n_vertices() || c.eta.iter().any(|e| !(0.0..=1.0).contains(e)) {
        return Err(Error::invalid("eta", "cutoff must take values in [0, 1]"));
    }
    let boundary = inner_boundary(lat, inp.ball);
    if (0..lat.n_vertices()).any(|x| c.eta[x] != 0.0 && (!inp.ball.contains(x) || boundary.binary_search(&x).is_ok())) {
        return Err(Error::invalid("eta", "cutoff must vanish on the inner boundary and outside the ball"));
    }
    let (s1, s2) = inp.interval;
    if !(s2 > s1) {
        return Err(Error::invalid("interval", "must have positive length"));
    }
    if c.xi(s1) != 0.0 || !(c.xi_ramp > 0.0) {
        return Err(Error::invalid("xi", "time cutoff must vanish at the start of the interval"));
    }
    let idx = inp.u.times_in(s1, s2);
    if idx.len() < 2 {
        return Err(Error::Degenerate("fewer than two grid times inside the interval".into()));
    }
    let theta = &inp.speed.theta;
    let theta_b: f64 = b.iter().map(|&x| theta[x]).sum();
    let len = s2 - s1;
    let p_star = Exponent(inp.p.conj());
    let mut sup_term: f64 = 0.0;
    let mut times = Vec::with_capacity(idx.len());
    let mut energy = Vec::with_capacity(idx.len());
    let mut sq_slices = Vec::with_capacity(idx.len());
    let mut ev = vec![0.0; lat.n_vertices()];
    for &ti in &idx {
        let t = inp.u.times[ti];
        let vals = inp.u.slice(ti, b)?;
        if vals.iter().any(|&x| x < 0.0) {
            return Err(Error::invalid("u", "must be nonnegative"));
        }
        let v: Vec<f64> = vals.iter().map(|&x| (x - inp.k).max(0.0)).collect();
        let xi = c.xi(t);
        let weighted: f64 = b.iter().zip(&v).map(|(&x, &vx)| xi * c.eta[x].powi(2) * vx * vx * theta[x]).sum();
        sup_term = sup_term.max(weighted / theta_b);
        ev.iter_mut().for_each(|e| *e = 0.0);
        for (&x, &vx) in b.iter().zip(&v) {
            ev[x] = c.eta[x] * vx;
        }
        energy.push(xi * dirichlet(inp.field, &ev, &ev) / theta_b);
        sq_slices.push(v.iter().map(|x| x * x).collect::<Vec<f64>>());
        times.push(t);
    }
    let mut energy_int = 0.0;
    for i in 1..times.len() {
        energy_int += 0.5 * (times[i] - times[i - 1]) * (energy[i] + energy[i - 1]);
    }
    let lhs = sup_term / len + energy_int / len;
    let data = LocalData::new(inp.field, inp.speed);
    let ratio: Vec<f64> = (0..lat.n_vertices()).map(|x| data.mu[x] / theta[x]).collect();
    let mu_theta = norm_on(&ratio, b, inp.p, Weight::Normalized(theta))?;
    let grad = grad_sup(lat, &c.eta);
    let norm = space_time_norm(&times, &sq_slices, b, p_star, Exponent(1.0), Weight::Normalized(theta))?;
    let rhs = (mu_theta * grad * grad + c.xi_lip()) * norm;
    InequalityReport::new(InequalityKind::Energy, inp.ball.radius as f64, lhs, rhs, Functionals::default(), format!("k={}", inp.k))
}

/// Environment data for the maximal inequalities.
pub enum MaximalEnv<'a> {
    Static(&'a LocalData),
    Dynamic(&'a DynamicEnvironment),
}

/// Input for the maximal inequalities on cylinders anchored at `(t0, x0)`.
pub struct MaximalInput<'a> {
    pub u: &'a SpaceTimeField,
    pub env: MaximalEnv<'a>,
    pub t0: f64,
    pub x0: usize,
    pub n: f64,
    pub sigma: f64,
    pub sigma_prime: f64,
    pub h: f64,
    /// Scale exponent with `sigma - sigma' > n^{-delta}`.
    pub delta: f64,
    /// Time margin of the interior cylinders.
    pub eps: f64,
    pub bundle: &'a ExponentBundle,
}

fn cylinder_data(u: &SpaceTimeField, cyl: &SpaceTimeCylinder) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let idx = u.times_in(cyl.interval.0, cyl.interval.1);
    if idx.is_empty() {
        return Err(Error::Degenerate("no grid time inside the cylinder".into()));
    }
    let times = idx.iter().map(|&i| u.times[i]).collect();
    let slices = idx.iter().map(|&i| u.slice(i, &cyl.ball.members)).collect::<Result<_>>()?;
    Ok((times, slices))
}

fn max_of(slices: &[Vec<f64>]) -> f64 {
    slices.iter().flatten().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
}

pub fn check_maximal(inp: &MaximalInput, which: InequalityKind) -> Result<InequalityReport> {
    let (sigma, sp, n) = (inp.sigma, inp.sigma_prime, inp.n);
    if !(sigma > sp) {
        return Err(Error::invalid("sigma_prime", format!("sigma {sigma} must exceed sigma' {sp}")));
    }
    if !(sp >= 0.5 && sigma <= 1.0) {
        return Err(Error::invalid("sigma", "need 1/2 <= sigma' < sigma <= 1"));
    }
    let lat = inp.u.lattice.clone();
    let b = inp.bundle;
    let gap2 = (sigma - sp).powi(2);
    let params = |s: f64| CylinderParams { sigma: s, tau: s, eps: inp.eps };
    let big = lat.ball(inp.x0, radius_of(n))?;
    match which {
        InequalityKind::MaximalStatic => {
            let MaximalEnv::Static(data) = inp.env else {
                return Err(Error::invalid("env", "static maximal inequality needs a static environment"));
            };
            if sigma - sp <= n.powf(-inp.delta) {
                return Err(Error::invalid("sigma", format!("sigma - sigma' must exceed n^-{}", inp.delta)));
            }
            let kappa = b.kappa.ok_or_else(|| Error::Degenerate("static exponent condition fails".into()))?;
            let inner = make_cylinder(&lat, CylinderKind::Backward, inp.t0, inp.x0, n, params(sp))?;
            let outer = make_cylinder(&lat, CylinderKind::Backward, inp.t0, inp.x0, n, params(sigma))?;
            let (_, s_in) = cylinder_data(inp.u, &inner)?;
            let (t_out, s_out) = cylinder_data(inp.u, &outer)?;
            let lhs = (max_of(&s_in) - inp.h).max(0.0);
            let excess: Vec<Vec<f64>> = s_out.iter().map(|s| s.iter().map(|&v| (v - inp.h).max(0.0)).collect()).collect();
            let norm = space_time_norm(&t_out, &excess, &outer.ball.members, Exponent(2.0 * b.p_star), Exponent(2.0), Weight::Normalized(&data.theta))?;
            let a2 = data.a2(&big.members, b.p, b.q, b.r)?;
            let rhs = (a2 / gap2).powf(kappa) * norm;
            let f = Functionals { a2: Some(a2), ..Default::default() };
            InequalityReport::new(which, n, lhs, rhs, f, format!("h={}", inp.h))
        }
        InequalityKind::MaximalL1 => {
            let MaximalEnv::Static(data) = inp.env else {
                return Err(Error::invalid("env", "L1 maximal inequality needs a static environment"));
            };
            let kp = b.kappa_prime_static.ok_or_else(|| Error::Degenerate("static exponent condition fails".into()))?;
            let inner = make_cylinder(&lat, CylinderKind::Interior, inp.t0, inp.x0, n, params(sp))?;
            let outer = make_cylinder(&lat, CylinderKind::Interior, inp.t0, inp.x0, n, params(sigma))?;
            let (_, s_in) = cylinder_data(inp.u, &inner)?;
            let (t_out, s_out) = cylinder_data(inp.u, &outer)?;
            let lhs = max_of(&s_in).max(0.0);
            let norm = space_time_norm(&t_out, &s_out, &outer.ball.members, Exponent(1.0), Exponent(1.0 / b.p_star), Weight::Volume(&data.theta))?;
            let a4 = data.a4(&big.members, b.p, b.q, b.r)?;
            let inv: Vec<f64> = data.theta.iter().map(|t| (1.0 / t).max(1.0)).collect();
            let pre = norm_on(&inv, &big.members, Exponent(1.0), Weight::Unit)?;
            let rhs = pre * (a4 / (inp.eps * gap2)).powf(kp) * norm;
            let f = Functionals { a4: Some(a4), ..Default::default() };
            InequalityReport::new(which, n, lhs, rhs, f, "heat kernel")
        }
        InequalityKind::MaximalDynamic => {
            let MaximalEnv::Dynamic(env) = inp.env else {
                return Err(Error::invalid("env", "dynamic maximal inequality needs a dynamic environment"));
            };
            if sigma - sp <= n.powf(-inp.delta) {
                return Err(Error::invalid("sigma", format!("sigma - sigma' must exceed n^-{}", inp.delta)));
            }
            let kp = b.kappa_prime_dyn.ok_or_else(|| Error::Degenerate("dynamic exponent condition fails".into()))?;
            let sched = schedule_values(b.vartheta, &Schedule { n, delta: inp.delta, sigma, sigma_prime: sp })?;
            let inner = make_cylinder(&lat, CylinderKind::Forward, inp.t0, inp.x0, n, params(sp))?;
            let outer = make_cylinder(&lat, CylinderKind::Forward, inp.t0, inp.x0, n, params(sigma))?;
            let full = make_cylinder(&lat, CylinderKind::Forward, inp.t0, inp.x0, n, params(1.0))?;
            let (_, s_in) = cylinder_data(inp.u, &inner)?;
            let (t_out, s_out) = cylinder_data(inp.u, &outer)?;
            let (t_full, _) = cylinder_data(inp.u, &full)?;
            let lhs = max_of(&s_in).max(0.0);
            let norm = space_time_norm(&t_out, &s_out, &outer.ball.members, Exponent(1.0), Exponent(1.0), Weight::Unit)?;
            let a5v = a5(env, &full.ball.members, &t_full, b.p, b.q)?;
            let rhs = (a5v / gap2).powf(kp) * norm.powf(sched.beta_n);
            let f = Functionals { a5: Some(a5v), ..Default::default() };
            InequalityReport::new(which, n, lhs, rhs, f, format!("beta_n={}", sched.beta_n))
        }
        _ => Err(Error::invalid("which", format!("{} is not a maximal inequality", which.name()))),
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::environment::{sample_iid, ConductanceLaw};
    use crate::lattice::Boundary;

    fn setup(seed: u64) -> (Arc<LatticeBox>, ConductanceField, SpeedMeasure) {
        let lat = Arc::new(LatticeBox::new(2, 21, Boundary::Periodic).unwrap());
        let f = sample_iid(lat.clone(), &ConductanceLaw::LogUniform { a: 0.5, b: 2.0 }, seed).unwrap();
        let s = SpeedMeasure::vsrw(lat.n_vertices());
        (lat, f, s)
    }

    fn bump(lat: &LatticeBox, ball: &Ball, scale: f64) -> Vec<f64> {
        let mut v = vec![0.0; lat.n_vertices()];
        for &x in &ball.members {
            v[x] = scale * (ball.radius as f64 - lat.distance(ball.center, x).unwrap() as f64);
        }
        v
    }

    #[test]
    fn sobolev_homogeneity_and_zero() {
        let (lat, f, s) = setup(1);
        let ball = lat.ball(lat.origin(), 8).unwrap();
        let a = check_sobolev(&f, &s, &ball, &bump(&lat, &ball, 1.0), Exponent(4.0)).unwrap();
        let b = check_sobolev(&f, &s, &ball, &bump(&lat, &ball, 2.0), Exponent(4.0)).unwrap();
        assert!((a.c_hat.unwrap() - b.c_hat.unwrap()).abs() < 1e-12 * a.c_hat.unwrap());
        let z = check_sobolev(&f, &s, &ball, &vec![0.0; lat.n_vertices()], Exponent(4.0)).unwrap();
        assert_eq!((z.lhs, z.rhs, z.c_hat), (0.0, 0.0, None));
        let mut bad = bump(&lat, &ball, 1.0);
        bad[inner_boundary(&lat, &ball)[0]] = 1.0;
        assert!(check_sobolev(&f, &s, &ball, &bad, Exponent(4.0)).is_err());
    }

    #[test]
    fn poincare_cases() {
        let (lat, f, s) = setup(2);
        let ball = lat.ball(lat.origin(), 6).unwrap();
        let c = vec![1.5; lat.n_vertices()];
        let r = check_poincare(&f, &s, &ball, &c, None, Exponent(4.0), Exponent(4.0)).unwrap();
        assert_eq!(r.lhs, 0.0);
        let u: Vec<f64> = (0..lat.n_vertices()).map(|x| lat.coord(x, 0) as f64).collect();
        let m = check_poincare(&f, &s, &ball, &u, None, Exponent(4.0), Exponent(4.0)).unwrap();
        let whole = check_poincare(&f, &s, &ball, &u, Some(&ball.members), Exponent(4.0), Exponent(4.0)).unwrap();
        assert!((whole.rhs / m.rhs - 4.0).abs() < 1e-12);
        assert!((whole.lhs - m.lhs).abs() < 1e-12);
        assert!(check_poincare(&f, &s, &ball, &u, Some(&[]), Exponent(4.0), Exponent(4.0)).is_err());
    }

    #[test]
    fn energy_trivial_cases() {
        let (lat, f, s) = setup(3);
        let n = 8.0;
        let t0 = 80.0;
        let ball = lat.ball(lat.origin(), 8).unwrap();
        let times: Vec<f64> = (0..=40).map(|i| 16.0 + i as f64 * 1.6).collect();
        let u = SpaceTimeField::from_fn(lat.clone(), times, ball.members.clone(), |t, x| (1.0 + (x as f64).cos()) / t);
        let cut = default_cutoffs(&lat, t0, lat.origin(), n, 1.0, 0.5).unwrap();
        let inp = EnergyInput { field: &f, speed: &s, u: &u, interval: (t0 - 64.0, t0), ball: &ball, cutoffs: &cut, k: 1.0, p: Exponent(4.0) };
        let r = check_energy(&inp).unwrap();
        assert_eq!(r.lhs, 0.0);
        let zero = Cutoffs { eta: cut.eta.clone(), xi_start: 1e9, xi_ramp: 1.0 };
        let inp = EnergyInput { cutoffs: &zero, k: 0.0, ..inp };
        assert_eq!(check_energy(&inp).unwrap().lhs, 0.0);
    }
}
