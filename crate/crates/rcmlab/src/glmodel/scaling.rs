//! Diffusive scaling of the space-time covariance for a quadratic potential,
//! evaluated on the infinite lattice.

use std::f64::consts::PI;

use serde::Serialize;

use super::Potential;
use crate::special::{bessel_i_scaled, integrate_to_inf};
use crate::{Error, Result};

/// Moment threshold `(2 + d)(1 + 2/d + sqrt(1 + 1/d^2))`.
pub fn pbar(d: usize) -> f64 {
    let d = d as f64;
    (2.0 + d) * (1.0 + 2.0 / d + (1.0 + 1.0 / (d * d)).sqrt())
}

/// Simple-walk kernel `P(X_u = z)` on `Z^d` with unit conductances.
pub fn lattice_kernel(z: &[i64], u: f64) -> f64 {
    z.iter().map(|&c| bessel_i_scaled(c.unsigned_abs() as u32, 2.0 * u)).product()
}

/// `int_a^inf P(X_u = z) du` for unit conductances.
pub fn lattice_kernel_integral(z: &[i64], a: f64) -> f64 {
    integrate_to_inf(|u| lattice_kernel(z, u), a, 1e-12)
}

/// Gaussian density `k_t(x)` with covariance `t sigma2 I`.
pub fn gaussian_kernel(x: &[f64], t: f64, sigma2: f64) -> f64 {
    let d = x.len() as f64;
    let r2: f64 = x.iter().map(|c| c * c).sum();
    (2.0 * PI * sigma2 * t).powf(-d / 2.0) * (-r2 / (2.0 * sigma2 * t)).exp()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingPoint {
    pub n: usize,
    /// `n^{d-2} cov(phi_0(0), phi_{n^2 t}(floor(n x)))`.
    pub value: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingCurve {
    pub t: f64,
    pub x: Vec<f64>,
    pub sigma2: f64,
    /// `int_0^inf k_{t+s}(x) ds`.
    pub target: f64,
    pub points: Vec<ScalingPoint>,
}

impl ScalingCurve {
    pub fn errors_decreasing(&self) -> bool {
        self.points.windows(2).all(|w| w[1].rel_error < w[0].rel_error)
    }
}

/// Covariance scaling curve for `V(x) = s x^2/2`. The induced conductances are
/// identically `s`, so `cov(phi_0(0), phi_T(y)) = int_T^inf P(X_{su} = y) du`
/// and `Sigma^2 = 2 s I`.
pub fn cov_scaling_curve(potential: &Potential, x: &[f64], t: f64, ns: &[usize]) -> Result<ScalingCurve> {
    let d = x.len();
    if d < 3 {
        return Err(Error::invalid("x", "covariance scaling needs d >= 3"));
    }
    if !potential.is_quadratic() {
        return Err(Error::invalid("potential", "the exact covariance curve needs a quadratic potential"));
    }
    if !(t > 0.0) || ns.is_empty() || ns.contains(&0) {
        return Err(Error::invalid("t", "need t > 0 and positive scales"));
    }
    let s = potential.stiffness();
    let sigma2 = 2.0 * s;
    let target = integrate_to_inf(|u| gaussian_kernel(x, u, sigma2), t, 1e-12);
    let points = ns
        .iter()
        .map(|&n| {
            let nf = n as f64;
            let y: Vec<i64> = x.iter().map(|c| (nf * c).floor() as i64).collect();
            // Substituting u -> u/s turns the conductance-s kernel into the unit one.
            let cov = lattice_kernel_integral(&y, s * nf * nf * t) / s;
            let value = nf.powi(d as i32 - 2) * cov;
            ScalingPoint { n, value, rel_error: (value - target).abs() / target }
        })
        .collect();
    Ok(ScalingCurve { t, x: x.to_vec(), sigma2, target, points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glmodel::PotentialSpec;

    #[test]
    fn pbar_value() {
        assert!((pbar(3) - 5.0 * (1.0 + 2.0 / 3.0 + 10f64.sqrt() / 3.0)).abs() < 1e-12);
        assert!((pbar(3) - 13.604).abs() < 1e-3);
    }

    #[test]
    fn watson_constant() {
        // Green function at the origin of the unit-conductance walk on Z^3.
        assert!((lattice_kernel_integral(&[0, 0, 0], 0.0) - 0.252_731_009_858_663).abs() < 1e-9);
    }

    #[test]
    fn quadrature_target() {
        let c = cov_scaling_curve(&Potential::quadratic(), &[0.0; 3], 1.0, &[2, 4, 8]).unwrap();
        assert!((c.target - 2.0 / (4.0 * PI).powf(1.5)).abs() < 1e-10);
        assert!(c.errors_decreasing());
        let stiff = Potential::new(PotentialSpec::Quadratic { stiffness: 2.0 }).unwrap();
        let c2 = cov_scaling_curve(&stiff, &[0.0; 3], 1.0, &[4]).unwrap();
        assert!((c2.target - 2.0 / (8.0 * PI).powf(1.5)).abs() < 1e-10);
        let far = cov_scaling_curve(&Potential::quadratic(), &[5.0, 0.0, 0.0], 0.1, &[2]).unwrap();
        assert!(far.target < 0.5 * c.target && (far.points[0].value / far.target - 1.0).abs() < 0.2);
    }
}
