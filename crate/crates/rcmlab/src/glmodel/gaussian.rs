//! Sine eigenbasis of the Dirichlet Laplacian on an absorbing box.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::lattice::{Boundary, LatticeBox};
use crate::{Error, Result};

/// Eigenpairs of `A = -Laplacian` with zero boundary values. The one-dimensional
/// sine matrix `S` is symmetric and orthogonal, so the tensor transform is its
/// own inverse and maps vertex layout to mode layout and back.
#[derive(Clone, Debug)]
pub struct DirichletBasis {
    pub lattice: Arc<LatticeBox>,
    sine: Vec<f64>,
    mu: Vec<f64>,
    lambda: Vec<f64>,
}

impl DirichletBasis {
    pub fn new(lattice: Arc<LatticeBox>) -> Result<Self> {
        if lattice.boundary() != Boundary::Absorbing {
            return Err(Error::invalid("boundary", "the sine basis needs an absorbing box"));
        }
        let l = lattice.side();
        let norm = (2.0 / (l + 1) as f64).sqrt();
        let mut sine = vec![0.0; l * l];
        for j in 0..l {
            for k in 0..l {
                sine[j * l + k] = norm * (PI * ((j + 1) * (k + 1)) as f64 / (l + 1) as f64).sin();
            }
        }
        let mu: Vec<f64> = (0..l).map(|k| 2.0 * (1.0 - (PI * (k + 1) as f64 / (l + 1) as f64).cos())).collect();
        let lambda = (0..lattice.n_vertices())
            .map(|v| (0..lattice.dim()).map(|i| mu[(v / lattice.strides()[i]) % l]).sum())
            .collect();
        Ok(DirichletBasis { lattice, sine, mu, lambda })
    }

    /// Eigenvalues in mode layout.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.lambda
    }

    pub fn lambda_min(&self) -> f64 {
        self.lattice.dim() as f64 * self.mu[0]
    }

    pub fn lambda_max(&self) -> f64 {
        self.lattice.dim() as f64 * self.mu[self.mu.len() - 1]
    }

    /// Apply `S` along every axis in place.
    pub fn transform(&self, v: &mut [f64]) {
        let l = self.lattice.side();
        let n = self.lattice.n_vertices();
        let mut line = vec![0.0; l];
        for &s in self.lattice.strides() {
            for base in 0..n {
                if (base / s) % l != 0 {
                    continue;
                }
                for (j, slot) in line.iter_mut().enumerate() {
                    *slot = v[base + j * s];
                }
                for j in 0..l {
                    let row = &self.sine[j * l..(j + 1) * l];
                    v[base + j * s] = row.iter().zip(&line).map(|(a, b)| a * b).sum();
                }
            }
        }
    }

    /// `g(A) f` for a spectral multiplier `g`.
    pub fn apply(&self, f: &[f64], g: impl Fn(f64) -> f64) -> Vec<f64> {
        let mut v = f.to_vec();
        self.transform(&mut v);
        for (c, &lam) in v.iter_mut().zip(&self.lambda) {
            *c *= g(lam);
        }
        self.transform(&mut v);
        v
    }

    /// `g(A)(x, y)`.
    pub fn kernel(&self, x: usize, y: usize, g: impl Fn(f64) -> f64) -> f64 {
        let l = self.lattice.side();
        let d = self.lattice.dim();
        let (cx, cy): (Vec<usize>, Vec<usize>) =
            self.lattice.strides().iter().map(|&s| ((x / s) % l, (y / s) % l)).unzip();
        let mut total = 0.0;
        for m in 0..self.lattice.n_vertices() {
            let mut w = 1.0;
            for i in 0..d {
                let k = (m / self.lattice.strides()[i]) % l;
                w *= self.sine[cx[i] * l + k] * self.sine[cy[i] * l + k];
            }
            total += w * g(self.lambda[m]);
        }
        total
    }

    /// Stationary covariance `(sA)^{-1}(x, y)` of the field with `V(x) = s x^2/2`.
    pub fn green(&self, x: usize, y: usize, stiffness: f64) -> f64 {
        self.kernel(x, y, |l| 1.0 / (stiffness * l))
    }

    /// Space-time covariance `(e^{-tsA} (sA)^{-1})(x, y)` of the Gaussian Langevin dynamics.
    pub fn cov_time(&self, t: f64, x: usize, y: usize, stiffness: f64) -> f64 {
        self.kernel(x, y, |l| (-t * stiffness * l).exp() / (stiffness * l))
    }

    /// Killed simple-walk kernel `(e^{-tA})(x, y)`.
    pub fn heat(&self, t: f64, x: usize, y: usize) -> f64 {
        self.kernel(x, y, |l| (-t * l).exp())
    }

    /// Exact draw from the Gaussian measure with covariance `(sA)^{-1}`.
    pub fn sample<R: Rng>(&self, rng: &mut R, stiffness: f64) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .lambda
            .iter()
            .map(|&l| rng.sample::<f64, _>(StandardNormal) / (stiffness * l).sqrt())
            .collect();
        self.transform(&mut v);
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn laplacian(lat: &LatticeBox) -> DMatrix<f64> {
        let n = lat.n_vertices();
        let mut a = DMatrix::zeros(n, n);
        for e in lat.edges() {
            for v in [e.x, e.y].into_iter().flatten() {
                a[(v, v)] += 1.0;
            }
            if let (Some(x), Some(y)) = (e.x, e.y) {
                a[(x, y)] -= 1.0;
                a[(y, x)] -= 1.0;
            }
        }
        a
    }

    #[test]
    fn matches_dense_inverse() {
        let lat = Arc::new(LatticeBox::new(3, 5, Boundary::Absorbing).unwrap());
        let basis = DirichletBasis::new(lat.clone()).unwrap();
        let inv = laplacian(&lat).try_inverse().unwrap();
        for (x, y) in [(0, 0), (lat.origin(), lat.origin()), (3, 17), (lat.origin(), 40)] {
            assert!((basis.green(x, y, 1.0) - inv[(x, y)]).abs() < 1e-12);
            assert!((basis.green(x, y, 2.0) - 0.5 * inv[(x, y)]).abs() < 1e-12);
        }
        let f: Vec<f64> = (0..lat.n_vertices()).map(|v| (v as f64 * 0.37).sin()).collect();
        let g = basis.apply(&f, |l| 1.0 / l);
        let back = laplacian(&lat) * DMatrix::from_column_slice(f.len(), 1, &g);
        for (a, b) in back.iter().zip(&f) {
            assert!((a - b).abs() < 1e-10);
        }
        let lo = laplacian(&lat).symmetric_eigen().eigenvalues.min();
        assert!((basis.lambda_min() - lo).abs() < 1e-12);
    }

    #[test]
    fn heat_is_exponential_of_laplacian() {
        let lat = Arc::new(LatticeBox::new(2, 7, Boundary::Absorbing).unwrap());
        let basis = DirichletBasis::new(lat.clone()).unwrap();
        let eig = laplacian(&lat).symmetric_eigen();
        let o = lat.origin();
        let exact: f64 = (0..lat.n_vertices()).map(|k| eig.eigenvectors[(o, k)].powi(2) * (-1.5 * eig.eigenvalues[k]).exp()).sum();
        assert!((basis.heat(1.5, o, o) - exact).abs() < 1e-12);
    }
}
