use std::sync::Arc;

use serde::Serialize;

use super::field::require_absorbing;
use super::{sample_gibbs, DirichletBasis, GibbsMode, GibbsParams, Potential};
use crate::lattice::{Boundary, LatticeBox};
use crate::rng::{derive, label};
use crate::special::{batch_means_stderr, mean};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BrascampLieb {
    /// `E exp(|<nu, phi - E phi>|)`.
    pub lhs: f64,
    pub lhs_stderr: f64,
    /// `2 exp(Var/2)` under the Gaussian measure with `V*(x) = c_- x^2/2`.
    pub rhs: f64,
    pub gaussian_variance: f64,
    pub pass: bool,
}

/// Exponential-moment comparison for samples listed in chain order
/// (standard error by batch means).
pub fn brascamp_lieb_check(lattice: &Arc<LatticeBox>, potential: &Potential, nu: &[f64], samples: &[Vec<f64>]) -> Result<BrascampLieb> {
    require_absorbing(lattice, "the Brascamp-Lieb check")?;
    if nu.len() != lattice.n_vertices() || samples.len() < 2 {
        return Err(Error::invalid("nu", "weights must cover the box and at least two samples are needed"));
    }
    let basis = DirichletBasis::new(lattice.clone())?;
    let c = potential.c_minus();
    let g = basis.apply(nu, |l| 1.0 / (c * l));
    let gaussian_variance: f64 = nu.iter().zip(&g).map(|(a, b)| a * b).sum();
    let xs: Vec<f64> = samples.iter().map(|phi| nu.iter().zip(phi).map(|(a, b)| a * b).sum()).collect();
    let m = mean(&xs);
    let e: Vec<f64> = xs.iter().map(|x| (x - m).abs().exp()).collect();
    let lhs = mean(&e);
    let lhs_stderr = batch_means_stderr(&e, 20);
    let rhs = 2.0 * (0.5 * gaussian_variance).exp();
    Ok(BrascampLieb { lhs, lhs_stderr, rhs, gaussian_variance, pass: lhs <= rhs + 3.0 * lhs_stderr })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentRow {
    pub side: usize,
    pub p: f64,
    pub estimate: f64,
    pub stderr: f64,
    /// Exact value for `p = 2` with a quadratic potential.
    pub exact: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentReport {
    pub rows: Vec<MomentRow>,
    /// Per `p`: spread across box sizes relative to the mean, below 25%.
    pub stable: Vec<(f64, bool)>,
}

/// `E|phi(0)|^p` across Dirichlet boxes of the given sides.
pub fn moment_check(d: usize, potential: &Potential, ps: &[f64], sides: &[usize], mode: GibbsMode, params: &GibbsParams, seed: u64) -> Result<MomentReport> {
    if ps.iter().any(|&p| !(0.0..=8.0).contains(&p)) {
        return Err(Error::invalid("ps", "moments are checked for 0 <= p <= 8"));
    }
    let mut rows = Vec::new();
    for &side in sides {
        let lat = Arc::new(LatticeBox::new(d, side, Boundary::Absorbing)?);
        let samples = sample_gibbs(&lat, potential, mode, params, derive(seed, &[label("moments"), side as u64]))?;
        let o = lat.origin();
        let exact_var = if potential.is_quadratic() { Some(DirichletBasis::new(lat.clone())?.green(o, o, potential.stiffness())) } else { None };
        for &p in ps {
            let v: Vec<f64> = samples.iter().map(|s| s.phi[o].abs().powf(p)).collect();
            rows.push(MomentRow {
                side,
                p,
                estimate: mean(&v),
                stderr: batch_means_stderr(&v, 20),
                exact: exact_var.filter(|_| p == 2.0),
            });
        }
    }
    let stable = ps
        .iter()
        .map(|&p| {
            let v: Vec<f64> = rows.iter().filter(|r| r.p == p).map(|r| r.estimate).collect();
            let hi = v.iter().cloned().fold(f64::MIN, f64::max);
            let lo = v.iter().cloned().fold(f64::MAX, f64::min);
            (p, (hi - lo) <= 0.25 * mean(&v))
        })
        .collect();
    Ok(MomentReport { rows, stable })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_and_gaussian_headroom() {
        let lat = Arc::new(LatticeBox::new(3, 5, Boundary::Absorbing).unwrap());
        let q = Potential::quadratic();
        let samples: Vec<Vec<f64>> = sample_gibbs(&lat, &q, GibbsMode::ExactGaussian, &GibbsParams::new(4000), 2)
            .unwrap()
            .into_iter()
            .map(|f| f.phi)
            .collect();
        let zero = brascamp_lieb_check(&lat, &q, &vec![0.0; 125], &samples).unwrap();
        assert_eq!(zero.lhs, 1.0);
        assert!(zero.pass);
        let mut nu = vec![0.0; 125];
        nu[lat.origin()] = 1.0;
        let r = brascamp_lieb_check(&lat, &q, &nu, &samples).unwrap();
        assert!(r.pass && r.lhs < 0.75 * r.rhs);
    }

    #[test]
    fn quadratic_second_moment() {
        let rep = moment_check(3, &Potential::quadratic(), &[0.0, 2.0], &[5, 7], GibbsMode::ExactGaussian, &GibbsParams::new(8000), 3).unwrap();
        for r in &rep.rows {
            if r.p == 0.0 {
                assert_eq!(r.estimate, 1.0);
            } else {
                assert!((r.estimate - r.exact.unwrap()).abs() < 4.0 * r.stderr);
            }
        }
        assert!(rep.stable.iter().all(|s| s.1));
    }
}
