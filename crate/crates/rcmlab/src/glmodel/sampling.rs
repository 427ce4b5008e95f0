use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::field::require_absorbing;
use super::langevin::{default_dt, evolve, LangevinParams};
use super::{DirichletBasis, InterfaceField, Potential};
use crate::lattice::{Boundary, LatticeBox};
use crate::rng::{label, stream};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GibbsMode {
    LangevinBurnin,
    ExactGaussian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GibbsParams {
    pub n_samples: usize,
    #[serde(default)]
    pub dt: Option<f64>,
    /// Defaults to 20 relaxation times.
    #[serde(default)]
    pub burn_in: Option<f64>,
    /// Defaults to one relaxation time.
    #[serde(default)]
    pub thin: Option<f64>,
    #[serde(default)]
    pub mass: f64,
}

impl GibbsParams {
    pub fn new(n_samples: usize) -> Self {
        GibbsParams { n_samples, dt: None, burn_in: None, thin: None, mass: 0.0 }
    }
}

/// Relaxation time of the slowest mode: exact `1/(s lambda_1)` for a quadratic
/// potential on an absorbing box, `L^2/c_-` otherwise.
pub fn relaxation_time(lattice: &Arc<LatticeBox>, potential: &Potential) -> Result<f64> {
    if potential.is_quadratic() && lattice.boundary() == Boundary::Absorbing {
        Ok(1.0 / (potential.stiffness() * DirichletBasis::new(lattice.clone())?.lambda_min()))
    } else {
        Ok((lattice.side() * lattice.side()) as f64 / potential.c_minus())
    }
}

fn round_up(x: f64, dt: f64) -> f64 {
    (x / dt - 1e-9).ceil().max(0.0) * dt
}

pub fn sample_gibbs(lattice: &Arc<LatticeBox>, potential: &Potential, mode: GibbsMode, params: &GibbsParams, seed: u64) -> Result<Vec<InterfaceField>> {
    if params.n_samples == 0 {
        return Err(Error::invalid("n_samples", "must be positive"));
    }
    match mode {
        GibbsMode::ExactGaussian => {
            if !potential.is_quadratic() {
                return Err(Error::invalid("mode", "exact Gaussian sampling needs a quadratic potential"));
            }
            if params.mass != 0.0 {
                return Err(Error::invalid("mass", "exact Gaussian sampling is massless"));
            }
            require_absorbing(lattice, "exact Gaussian sampling")?;
            let basis = DirichletBasis::new(lattice.clone())?;
            (0..params.n_samples)
                .map(|i| {
                    let mut rng = stream(seed, &[label("gibbs-exact"), i as u64]);
                    let mut f = InterfaceField::new(lattice.clone(), basis.sample(&mut rng, potential.stiffness()), 0.0)?;
                    f.stationary = true;
                    Ok(f)
                })
                .collect()
        }
        GibbsMode::LangevinBurnin => {
            let dt = params.dt.unwrap_or_else(|| default_dt(potential));
            let tau = relaxation_time(lattice, potential)?;
            let burn_in = round_up(params.burn_in.unwrap_or(20.0 * tau), dt).max(dt);
            let thin = round_up(params.thin.unwrap_or(tau), dt).max(dt);
            let lp = LangevinParams {
                burn_in,
                record_every: thin,
                mass: params.mass,
                ..LangevinParams::new(dt, thin * (params.n_samples - 1) as f64)
            };
            let tr = evolve(&InterfaceField::zero(lattice.clone()), potential, &lp, seed)?;
            (0..params.n_samples).map(|i| tr.field_at(i)).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::{mean, variance};

    #[test]
    fn exact_gaussian_matches_green() {
        let lat = Arc::new(LatticeBox::new(3, 5, Boundary::Absorbing).unwrap());
        let samples = sample_gibbs(&lat, &Potential::quadratic(), GibbsMode::ExactGaussian, &GibbsParams::new(20000), 9).unwrap();
        let basis = DirichletBasis::new(lat.clone()).unwrap();
        let (o, x) = (lat.origin(), lat.origin() + 1);
        for (a, b) in [(o, o), (o, x)] {
            let prod: Vec<f64> = samples.iter().map(|s| s.phi[a] * s.phi[b]).collect();
            let exact = basis.green(a, b, 1.0);
            assert!((mean(&prod) - exact).abs() < 4.0 * (variance(&prod) / prod.len() as f64).sqrt());
        }
    }
}
