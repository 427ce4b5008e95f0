//! Environment functionals entering the inequality constants.

use serde::Serialize;

use crate::environment::{mu_nu, ConductanceField, DynamicEnvironment, SpeedMeasure};
use crate::lattice::{radius_of, LatticeBox};
use crate::Result;

use super::exponents::Exponent;
use super::norms::{norm_on, space_time_norm, Weight};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Functionals {
    pub a1: Option<f64>,
    pub a2: Option<f64>,
    pub a3: Option<f64>,
    pub a4: Option<f64>,
    pub a5: Option<f64>,
}

/// Vertex data `mu`, `nu`, `theta` of a static environment.
pub struct LocalData {
    pub mu: Vec<f64>,
    pub nu: Vec<f64>,
    pub theta: Vec<f64>,
}

impl LocalData {
    pub fn new(field: &ConductanceField, speed: &SpeedMeasure) -> Self {
        let (mu, nu) = mu_nu(field);
        LocalData { mu, nu, theta: speed.theta.clone() }
    }

    fn map(&self, f: impl Fn(usize) -> f64) -> Vec<f64> {
        (0..self.theta.len()).map(f).collect()
    }

    /// `||1/theta||^2_{1,B} ||theta||^2_{r,B} ||nu||_{q,B}`
    pub fn a1(&self, ball: &[usize], q: Exponent, r: Exponent) -> Result<f64> {
        let inv = self.map(|x| 1.0 / self.theta[x]);
        let a = norm_on(&inv, ball, Exponent(1.0), Weight::Unit)?;
        let b = norm_on(&self.theta, ball, r, Weight::Unit)?;
        let c = norm_on(&self.nu, ball, q, Weight::Unit)?;
        Ok(a * a * b * b * c)
    }

    /// `||1 v mu/theta||_{p,B,theta} ||1 v nu||_{q,B} ||1 v theta||^2_{r,B} ||1 v 1/theta||_{1,B}`
    pub fn a2(&self, ball: &[usize], p: Exponent, q: Exponent, r: Exponent) -> Result<f64> {
        let m = self.map(|x| (self.mu[x] / self.theta[x]).max(1.0));
        let a = norm_on(&m, ball, p, Weight::Normalized(&self.theta))?;
        let b = norm_on(&self.map(|x| self.nu[x].max(1.0)), ball, q, Weight::Unit)?;
        let c = norm_on(&self.map(|x| self.theta[x].max(1.0)), ball, r, Weight::Unit)?;
        let e = norm_on(&self.map(|x| (1.0 / self.theta[x]).max(1.0)), ball, Exponent(1.0), Weight::Unit)?;
        Ok(a * b * c * c * e)
    }

    /// `||1/theta||_{1,B(n/4)} ||theta||_{1,B(n/2)}`
    pub fn a3(&self, lat: &LatticeBox, x0: usize, n: f64) -> Result<f64> {
        let quarter = lat.ball(x0, radius_of(n / 4.0))?;
        let half = lat.ball(x0, radius_of(n / 2.0))?;
        let inv = self.map(|x| 1.0 / self.theta[x]);
        Ok(norm_on(&inv, &quarter.members, Exponent(1.0), Weight::Unit)? * norm_on(&self.theta, &half.members, Exponent(1.0), Weight::Unit)?)
    }

    /// Volume-normalized `||1 v mu/theta||_{p,B,theta}` times `||1 v nu||_{q,B} ||1 v theta||_{r,B} ||1 v 1/theta||_{q,B}`
    pub fn a4(&self, ball: &[usize], p: Exponent, q: Exponent, r: Exponent) -> Result<f64> {
        let m = self.map(|x| (self.mu[x] / self.theta[x]).max(1.0));
        let a = norm_on(&m, ball, p, Weight::Volume(&self.theta))?;
        let b = norm_on(&self.map(|x| self.nu[x].max(1.0)), ball, q, Weight::Unit)?;
        let c = norm_on(&self.map(|x| self.theta[x].max(1.0)), ball, r, Weight::Unit)?;
        let e = norm_on(&self.map(|x| (1.0 / self.theta[x]).max(1.0)), ball, q, Weight::Unit)?;
        Ok(a * b * c * e)
    }

    /// All static functionals for the ball `B(x0, n)`.
    pub fn functionals(&self, lat: &LatticeBox, x0: usize, n: f64, p: Exponent, q: Exponent, r: Exponent) -> Result<Functionals> {
        let ball = lat.ball(x0, radius_of(n))?;
        let b = &ball.members;
        Ok(Functionals {
            a1: Some(self.a1(b, q, r)?),
            a2: Some(self.a2(b, p, q, r)?),
            a3: if n >= 4.0 { Some(self.a3(lat, x0, n)?) } else { None },
            a4: Some(self.a4(b, p, q, r)?),
            a5: None,
        })
    }
}

/// `||1 v mu||_{p,p,Q} ||1 v nu||_{q,q,Q}` over `Q = [t0, t1] x ball`, the
/// environment sampled at `times`.
pub fn a5(env: &DynamicEnvironment, ball: &[usize], times: &[f64], p: Exponent, q: Exponent) -> Result<f64> {
    let lat = env.lattice().clone();
    let mut omega = vec![0.0; lat.n_edges()];
    let mut sweep = env.sweep();
    let mut mus = Vec::with_capacity(times.len());
    let mut nus = Vec::with_capacity(times.len());
    for &t in times {
        sweep.at(t, &mut omega)?;
        let field = ConductanceField::from_values(lat.clone(), omega.clone())?;
        let (mu, nu) = mu_nu(&field);
        mus.push(ball.iter().map(|&x| mu[x].max(1.0)).collect::<Vec<f64>>());
        nus.push(ball.iter().map(|&x| nu[x].max(1.0)).collect::<Vec<f64>>());
    }
    Ok(space_time_norm(times, &mus, ball, p, p, Weight::Unit)? * space_time_norm(times, &nus, ball, q, q, Weight::Unit)?)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::environment::SpeedMeasure;
    use crate::lattice::Boundary;

    #[test]
    fn constant_environment_values() {
        let lat = Arc::new(LatticeBox::new(2, 21, Boundary::Periodic).unwrap());
        let field = ConductanceField::constant(lat.clone(), 1.0).unwrap();
        let data = LocalData::new(&field, &SpeedMeasure::vsrw(lat.n_vertices()));
        let f = data.functionals(&lat, lat.origin(), 8.0, Exponent(4.0), Exponent(4.0), Exponent(4.0)).unwrap();
        // mu = nu = 4, theta = 1.
        assert!((f.a1.unwrap() - 4.0).abs() < 1e-12);
        assert!((f.a2.unwrap() - 16.0).abs() < 1e-12);
        assert!((f.a3.unwrap() - 1.0).abs() < 1e-12);
        assert!((f.a4.unwrap() - 16.0).abs() < 1e-12);
        let env = DynamicEnvironment::static_lift(field, (0.0, 10.0));
        let ball = lat.ball(lat.origin(), 8).unwrap();
        let v = a5(&env, &ball.members, &[0.0, 5.0, 10.0], Exponent(3.0), Exponent::INF).unwrap();
        assert!((v - 16.0).abs() < 1e-12);
    }
}
