//! Gaussian free field limit of smeared heights for a quadratic potential.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scaling::lattice_kernel_integral;
use super::{DirichletBasis, Potential};
use crate::lattice::{Boundary, LatticeBox};
use crate::io::Table;
use crate::rng::{label, stream};
use crate::special::{integrate, mean};
use crate::{row, Error, Result};

/// Smooth radial test function with compact support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TestFunction {
    /// `exp(-1/(1 - |x|^2/R^2))` inside the ball of radius `R`.
    Bump { radius: f64 },
}

impl TestFunction {
    pub fn radius(&self) -> f64 {
        match self {
            TestFunction::Bump { radius } => *radius,
        }
    }

    pub fn radial(&self, r: f64) -> f64 {
        match self {
            TestFunction::Bump { radius } => {
                let q = r * r / (radius * radius);
                if q < 1.0 {
                    (-1.0 / (1.0 - q)).exp()
                } else {
                    0.0
                }
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.radial(x.iter().map(|c| c * c).sum::<f64>().sqrt())
    }

    fn validate(&self) -> Result<()> {
        if !(self.radius() > 0.0 && self.radius().is_finite()) {
            return Err(Error::invalid("f.radius", "must be positive"));
        }
        Ok(())
    }
}

/// `V(f) = int |f^(xi)|^2 / (xi.Sigma^2 xi / 2) dxi / (2 pi)^3` for
/// `Sigma^2 = sigma2 I`, by radial Fourier quadrature.
pub fn limit_variance(f: &TestFunction, sigma2: f64) -> f64 {
    let r = f.radius();
    let fhat = |k: f64| {
        if k < 1e-8 {
            4.0 * PI * integrate(|s| s * s * f.radial(s), 0.0, r, 1e-13)
        } else {
            4.0 * PI / k * integrate(|s| s * f.radial(s) * (k * s).sin(), 0.0, r, 1e-13)
        }
    };
    // The transform oscillates, so the k-integral runs over short panels
    // until they stop contributing.
    let width = PI / r;
    let (mut total, mut quiet) = (0.0, 0);
    let mut j = 0;
    while quiet < 3 && j < 100_000 {
        let a = j as f64 * width;
        let part = integrate(|k| fhat(k).powi(2), a, a + width, 1e-14);
        total += part;
        quiet = if part.abs() < 1e-17 * total { quiet + 1 } else { 0 };
        j += 1;
    }
    total / (PI * PI * sigma2)
}

/// Green function of the unit-conductance walk on `Z^d`, tabulated for
/// offsets with `|z_i| <= max`.
pub struct GreenTable {
    d: usize,
    max: usize,
    values: Vec<f64>,
}

impl GreenTable {
    pub fn new(d: usize, max: usize) -> Self {
        let w = max + 1;
        let size = w.pow(d as u32);
        let key = |idx: usize| -> Vec<i64> { (0..d).map(|i| ((idx / w.pow(i as u32)) % w) as i64).collect() };
        // Only sorted offsets are integrated; the rest follow by symmetry.
        let sorted: Vec<usize> = (0..size).filter(|&i| key(i).windows(2).all(|p| p[0] <= p[1])).collect();
        let unique: Vec<f64> = sorted.par_iter().map(|&i| lattice_kernel_integral(&key(i), 0.0)).collect();
        let mut values = vec![0.0; size];
        for i in 0..size {
            let mut k = key(i);
            k.sort_unstable();
            let j: usize = k.iter().enumerate().map(|(a, &c)| c as usize * w.pow(a as u32)).sum();
            values[i] = unique[sorted.binary_search(&j).unwrap()];
        }
        GreenTable { d, max, values }
    }

    pub fn get(&self, z: &[i64]) -> f64 {
        let w = self.max + 1;
        let idx: usize = z.iter().enumerate().map(|(i, &c)| c.unsigned_abs() as usize * w.pow(i as u32)).sum();
        debug_assert!(z.len() == self.d && z.iter().all(|c| c.unsigned_abs() as usize <= self.max));
        self.values[idx]
    }
}

/// Lattice points and weights `f(z/n)` of the smeared field.
fn support(f: &TestFunction, d: usize, n: usize) -> Vec<(Vec<i64>, f64)> {
    let reach = (f.radius() * n as f64).ceil() as i64;
    let width = (2 * reach + 1) as usize;
    (0..width.pow(d as u32))
        .filter_map(|idx| {
            let z: Vec<i64> = (0..d).map(|i| ((idx / width.pow(i as u32)) % width) as i64 - reach).collect();
            let x: Vec<f64> = z.iter().map(|&c| c as f64 / n as f64).collect();
            let w = f.eval(&x);
            (w > 0.0).then_some((z, w))
        })
        .collect()
}

/// `Var(phi(f_n))` on `Z^d` for `phi(f_n) = n^{-(1+d/2)} sum_z f(z/n) phi(z)`.
pub fn smeared_variance(f: &TestFunction, d: usize, n: usize, stiffness: f64, table: &GreenTable) -> f64 {
    let pts = support(f, d, n);
    let mut total = 0.0;
    for (z, a) in &pts {
        for (w, b) in &pts {
            let diff: Vec<i64> = z.iter().zip(w).map(|(p, q)| p - q).collect();
            total += a * b * table.get(&diff);
        }
    }
    total / stiffness / (n as f64).powi(2 + d as i32)
}

fn default_samples() -> usize {
    20_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GffSpec {
    pub f: TestFunction,
    pub lambdas: Vec<f64>,
    pub ns: Vec<usize>,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LaplacePoint {
    pub lambda: f64,
    pub estimate: f64,
    pub stderr: f64,
    /// `exp(lambda^2 Var / 2)` for the sampled box field.
    pub exact: f64,
    /// `exp(lambda^2 V(f) / 2)`.
    pub target: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GffLevel {
    pub n: usize,
    /// Exact `Var(phi(f_n))` on the infinite lattice.
    pub variance: f64,
    pub rel_error: f64,
    /// Exact variance on the sampling box.
    pub box_variance: f64,
    pub box_side: usize,
    pub laplace: Vec<LaplacePoint>,
    /// Fit of `log E exp(lambda phi(f_n))` by a quadratic in `lambda`.
    pub r2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GffTestRecord {
    pub f: TestFunction,
    pub sigma2: f64,
    pub limit_variance: f64,
    pub levels: Vec<GffLevel>,
}

impl GffTestRecord {
    /// `(n, lambda, estimate, stderr, exact, target, variance, limit_variance, r2)`.
    pub fn table(&self) -> Table {
        let mut t = Table::new(["n", "lambda", "estimate", "stderr", "exact", "target", "variance", "limit_variance", "r2"]);
        for l in &self.levels {
            for p in &l.laplace {
                t.push(row![l.n, p.lambda, p.estimate, p.stderr, p.exact, p.target, l.variance, self.limit_variance, l.r2]);
            }
        }
        t
    }
}

/// Mean and block-jackknife standard error of `exp(lambda X)`.
fn laplace(xs: &[f64], lambda: f64) -> (f64, f64) {
    let e: Vec<f64> = xs.iter().map(|x| (lambda * x).exp()).collect();
    let m = mean(&e);
    let blocks = 20.min(e.len());
    let len = e.len() / blocks;
    let total: f64 = e[..blocks * len].iter().sum();
    let loo: Vec<f64> = (0..blocks).map(|b| (total - e[b * len..(b + 1) * len].iter().sum::<f64>()) / ((blocks - 1) * len) as f64).collect();
    let lm = mean(&loo);
    let var = (blocks - 1) as f64 / blocks as f64 * loo.iter().map(|v| (v - lm).powi(2)).sum::<f64>();
    (m, var.sqrt())
}

fn quadratic_r2(x: &[f64], y: &[f64]) -> f64 {
    let a = DMatrix::from_fn(x.len(), 3, |i, j| x[i].powi(j as i32));
    let b = DVector::from_column_slice(y);
    let coef = a.clone().svd(true, true).solve(&b, 1e-14).expect("least squares");
    let fit = a * coef;
    let my = mean(y);
    let ss_res: f64 = y.iter().zip(fit.iter()).map(|(a, b)| (a - b).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|a| (a - my).powi(2)).sum();
    if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    }
}

/// Exact variances on `Z^3` against the Fourier limit, and Monte Carlo
/// Laplace functionals from exact Gaussian samples on a Dirichlet box of side
/// `4 ceil(nR) + 1`.
pub fn gff_test(potential: &Potential, spec: &GffSpec) -> Result<GffTestRecord> {
    const D: usize = 3;
    if !potential.is_quadratic() {
        return Err(Error::invalid("potential", "the GFF test runs on the Gaussian (quadratic) model"));
    }
    spec.f.validate()?;
    if spec.ns.is_empty() || spec.ns.contains(&0) || spec.lambdas.is_empty() || spec.n_samples < 20 {
        return Err(Error::invalid("spec", "need positive scales, a lambda list and at least 20 samples"));
    }
    let s = potential.stiffness();
    let sigma2 = 2.0 * s;
    let limit = limit_variance(&spec.f, sigma2);
    let max_n = *spec.ns.iter().max().unwrap();
    let table = GreenTable::new(D, 2 * (spec.f.radius() * max_n as f64).ceil() as usize);
    let levels = spec
        .ns
        .iter()
        .map(|&n| {
            let variance = smeared_variance(&spec.f, D, n, s, &table);
            let side = 4 * (spec.f.radius() * n as f64).ceil() as usize + 1;
            let lat = Arc::new(LatticeBox::new(D, side, Boundary::Absorbing)?);
            let basis = DirichletBasis::new(lat.clone())?;
            let mut weights = vec![0.0; lat.n_vertices()];
            let scale = (n as f64).powf(-(1.0 + D as f64 / 2.0));
            for (z, w) in support(&spec.f, D, n) {
                weights[lat.vertex(&z)?] = scale * w;
            }
            // phi(f_n) = sum_K (S w)_K g_K / sqrt(s lambda_K) for i.i.d. normal g.
            basis.transform(&mut weights);
            let coef: Vec<f64> = weights.iter().zip(basis.eigenvalues()).map(|(c, l)| c / (s * l).sqrt()).collect();
            let box_variance: f64 = coef.iter().map(|c| c * c).sum();
            let xs: Vec<f64> = (0..spec.n_samples)
                .into_par_iter()
                .map(|i| {
                    let mut rng = stream(spec.seed, &[label("gff"), n as u64, i as u64]);
                    coef.iter().map(|c| c * rng.sample::<f64, _>(StandardNormal)).sum()
                })
                .collect();
            let laplace_pts = spec
                .lambdas
                .iter()
                .map(|&lambda| {
                    let (estimate, stderr) = laplace(&xs, lambda);
                    if stderr / estimate > 0.2 {
                        return Err(Error::VarianceBlowUp(stderr / estimate));
                    }
                    Ok(LaplacePoint {
                        lambda,
                        estimate,
                        stderr,
                        exact: (0.5 * lambda * lambda * box_variance).exp(),
                        target: (0.5 * lambda * lambda * limit).exp(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let lam: Vec<f64> = laplace_pts.iter().map(|p| p.lambda).collect();
            let logs: Vec<f64> = laplace_pts.iter().map(|p| p.estimate.ln()).collect();
            let r2 = if lam.len() >= 4 { quadratic_r2(&lam, &logs) } else { f64::NAN };
            Ok(GffLevel { n, variance, rel_error: (variance - limit).abs() / limit, box_variance, box_side: side, laplace: laplace_pts, r2 })
        })
        .collect::<Result<_>>()?;
    Ok(GffTestRecord { f: spec.f.clone(), sigma2, limit_variance: limit, levels })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fourier_matches_newton_potential() {
        let f = TestFunction::Bump { radius: 1.0 };
        // Real-space form int int f f / (4 pi |x - y|) with sigma2 = 2.
        let u = |r: f64| integrate(|p| p * p * f.radial(p), 0.0, r, 1e-13) / r + integrate(|p| p * f.radial(p), r, 1.0, 1e-13);
        let direct = integrate(|r| 4.0 * PI * r * r * f.radial(r) * u(r), 1e-9, 1.0, 1e-11);
        let v = limit_variance(&f, 2.0);
        assert!((v - direct).abs() < 1e-8 * direct, "{v} {direct}");
        assert!((limit_variance(&f, 4.0) - 0.5 * v).abs() < 1e-12);
    }

    #[test]
    fn table_symmetry() {
        let t = GreenTable::new(3, 3);
        assert!((t.get(&[0, 0, 0]) - 0.252_731_009_858_663).abs() < 1e-9);
        assert_eq!(t.get(&[1, -2, 0]), t.get(&[0, 2, 1]));
        assert!(t.get(&[3, 3, 3]) < t.get(&[1, 0, 0]));
    }

    #[test]
    fn lambda_zero_is_one() {
        let spec = GffSpec { f: TestFunction::Bump { radius: 1.0 }, lambdas: vec![-1.0, 0.0, 1.0], ns: vec![2], n_samples: 200, seed: 1 };
        let rec = gff_test(&Potential::quadratic(), &spec).unwrap();
        let l = &rec.levels[0].laplace;
        assert_eq!(l[1].estimate, 1.0);
        assert!(rec.levels[0].box_variance < rec.levels[0].variance);
    }
}
