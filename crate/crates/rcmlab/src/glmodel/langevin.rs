//! Euler-Maruyama discretization of `d phi = -dH/dphi dt + sqrt(2) dW`.

use std::sync::Arc;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::field::force;
use super::{InterfaceField, Potential};
use crate::lattice::LatticeBox;
use crate::rng::{label, stream};
use crate::{Error, Result};

fn default_record_every() -> f64 {
    0.05
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LangevinParams {
    pub dt: f64,
    /// Length of the recorded window after burn-in.
    pub t_end: f64,
    #[serde(default)]
    pub burn_in: f64,
    #[serde(default = "default_record_every")]
    pub record_every: f64,
    #[serde(default)]
    pub mass: f64,
    /// Drift only.
    #[serde(default)]
    pub zero_noise: bool,
    /// Use the negated noise increments.
    #[serde(default)]
    pub mirror: bool,
    /// Recorded vertices; all when absent.
    #[serde(default)]
    pub record: Option<Vec<usize>>,
}

impl LangevinParams {
    pub fn new(dt: f64, t_end: f64) -> Self {
        LangevinParams {
            dt,
            t_end,
            burn_in: 0.0,
            record_every: default_record_every(),
            mass: 0.0,
            zero_noise: false,
            mirror: false,
            record: None,
        }
    }

    fn steps(&self, span: f64, name: &str) -> Result<usize> {
        let k = (span / self.dt).round();
        if (k * self.dt - span).abs() > 1e-9 * span.max(1.0) {
            return Err(Error::invalid(name, format!("{span} is not a multiple of dt = {}", self.dt)));
        }
        Ok(k as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("dt", "must be positive"));
        }
        if !(self.t_end >= 0.0 && self.burn_in >= 0.0 && self.record_every > 0.0 && self.mass >= 0.0) {
            return Err(Error::invalid("langevin", "t_end, burn_in, mass must be nonnegative and record_every positive"));
        }
        self.steps(self.record_every, "record_every")?;
        self.steps(self.burn_in, "burn_in")?;
        Ok(())
    }
}

/// Default step for a potential: small against both `1/c_-` and the
/// curvature at five typical gradient scales.
pub fn default_dt(potential: &Potential) -> f64 {
    let c = potential.c_minus();
    (0.01 / c).min(0.1 / potential.d2v(5.0 / c.sqrt()))
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub lattice: Arc<LatticeBox>,
    pub times: Vec<f64>,
    pub vertices: Vec<usize>,
    /// Heights on `vertices` at each recorded time.
    pub snapshots: Vec<Vec<f64>>,
    pub record_every: f64,
    pub stationary: bool,
    /// Largest `V''` seen along the run.
    pub max_curvature: f64,
    pub last: InterfaceField,
}

impl Trajectory {
    pub fn is_full(&self) -> bool {
        self.vertices.len() == self.lattice.n_vertices()
    }

    pub fn column(&self, v: usize) -> Result<usize> {
        self.vertices
            .binary_search(&v)
            .map_err(|_| Error::invalid("vertex", format!("vertex {v} was not recorded")))
    }

    pub fn field_at(&self, i: usize) -> Result<InterfaceField> {
        if !self.is_full() {
            return Err(Error::invalid("trajectory", "only a vertex subset was recorded"));
        }
        let mut f = InterfaceField::new(self.lattice.clone(), self.snapshots[i].clone(), self.times[i])?;
        f.stationary = self.stationary;
        Ok(f)
    }
}

pub fn evolve(phi0: &InterfaceField, potential: &Potential, params: &LangevinParams, seed: u64) -> Result<Trajectory> {
    params.validate()?;
    let lat = phi0.lattice.clone();
    let n = lat.n_vertices();
    let vertices = match &params.record {
        None => (0..n).collect(),
        Some(v) => {
            let mut v = v.clone();
            v.sort_unstable();
            v.dedup();
            for &x in &v {
                lat.check_vertex(x)?;
            }
            v
        }
    };
    let burn = params.steps(params.burn_in, "burn_in")?;
    let per = params.steps(params.record_every, "record_every")?;
    let n_rec = (params.t_end / params.record_every + 1e-9).floor() as usize;
    let amp = if params.zero_noise { 0.0 } else { (2.0 * params.dt).sqrt() * if params.mirror { -1.0 } else { 1.0 } };
    let mut rng = stream(seed, &[label("langevin")]);
    let mut phi = phi0.phi.clone();
    let mut grad = vec![0.0; n];
    let mut max_curv: f64 = 0.0;
    let m2 = params.mass * params.mass;
    let mut step = |phi: &mut Vec<f64>| -> Result<()> {
        let worst = force(&lat, phi, potential, params.mass, &mut grad);
        let curv = potential.d2v(worst) + m2;
        max_curv = max_curv.max(curv);
        if params.dt * curv > 0.1 {
            return Err(Error::StabilityGuard { dt: params.dt, bound: 0.1 / curv });
        }
        for (p, g) in phi.iter_mut().zip(&grad) {
            let z: f64 = rng.sample(StandardNormal);
            *p += -params.dt * g + amp * z;
        }
        Ok(())
    };
    let check = |phi: &[f64]| -> Result<()> {
        if phi.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite("Langevin heights".into()))
        }
    };
    for _ in 0..burn {
        step(&mut phi)?;
    }
    check(&phi)?;
    let start = phi0.time + params.burn_in;
    let mut times = Vec::with_capacity(n_rec + 1);
    let mut snapshots = Vec::with_capacity(n_rec + 1);
    for k in 0..=n_rec {
        if k > 0 {
            for _ in 0..per {
                step(&mut phi)?;
            }
            check(&phi)?;
        }
        times.push(start + k as f64 * params.record_every);
        snapshots.push(vertices.iter().map(|&v| phi[v]).collect());
    }
    let stationary = phi0.stationary || params.burn_in > 0.0;
    let end = *times.last().unwrap();
    let mut last = InterfaceField::new(lat.clone(), phi, end)?;
    last.stationary = stationary;
    Ok(Trajectory {
        lattice: lat,
        times,
        vertices,
        snapshots,
        record_every: params.record_every,
        stationary,
        max_curvature: max_curv,
        last,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Boundary;

    fn start(lat: &Arc<LatticeBox>) -> InterfaceField {
        let phi = (0..lat.n_vertices()).map(|v| (v as f64 * 0.7).cos()).collect();
        InterfaceField::new(lat.clone(), phi, 0.0).unwrap()
    }

    #[test]
    fn mirrored_noise_negates() {
        let lat = Arc::new(LatticeBox::new(3, 3, Boundary::Absorbing).unwrap());
        let pot = Potential::anharmonic(0.1).unwrap();
        let f = start(&lat);
        let mut g = f.clone();
        g.phi.iter_mut().for_each(|x| *x = -*x);
        let p = LangevinParams { mirror: false, ..LangevinParams::new(0.005, 1.0) };
        let a = evolve(&f, &pot, &p, 3).unwrap();
        let b = evolve(&g, &pot, &LangevinParams { mirror: true, ..p }, 3).unwrap();
        for (x, y) in a.snapshots.iter().flatten().zip(b.snapshots.iter().flatten()) {
            assert_eq!(*x, -*y);
        }
    }

    #[test]
    fn gradient_flow_decays() {
        let lat = Arc::new(LatticeBox::new(3, 5, Boundary::Absorbing).unwrap());
        let p = LangevinParams { zero_noise: true, ..LangevinParams::new(0.01, 5.0) };
        let tr = evolve(&start(&lat), &Potential::quadratic(), &p, 0).unwrap();
        let norms: Vec<f64> = tr.snapshots.iter().map(|s| s.iter().map(|x| x * x).sum()).collect();
        assert!(norms.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn guard_trips() {
        let lat = Arc::new(LatticeBox::new(2, 3, Boundary::Absorbing).unwrap());
        let err = evolve(&start(&lat), &Potential::quadratic(), &LangevinParams { record_every: 0.2, ..LangevinParams::new(0.2, 1.0) }, 0).unwrap_err();
        assert!(err.is_guard());
        assert_eq!(evolve(&start(&lat), &Potential::quadratic(), &LangevinParams::new(0.01, 1.0), 0).unwrap().times.len(), 21);
    }
}
