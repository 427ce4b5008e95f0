use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialSpec {
    /// `V(x) = s x^2 / 2`
    Quadratic {
        #[serde(default = "unit")]
        stiffness: f64,
    },
    /// `V(x) = x^2 + lambda x^4`
    Anharmonic { lambda: f64 },
    /// `V(x) = sum_k c_k x^(2k)`, k = 1, 2, ...
    Polynomial { coeffs: Vec<f64> },
}

fn unit() -> f64 {
    1.0
}

/// Even polynomial potential with nonnegative coefficients; convexity and the
/// lower bound `V'' >= 2 c_1` follow from the coefficient signs.
#[derive(Clone, Debug, PartialEq)]
pub struct Potential {
    pub spec: PotentialSpec,
    coeffs: Vec<f64>,
}

impl Potential {
    pub fn new(spec: PotentialSpec) -> Result<Self> {
        let coeffs = match &spec {
            PotentialSpec::Quadratic { stiffness } => vec![stiffness / 2.0],
            PotentialSpec::Anharmonic { lambda } => vec![1.0, *lambda],
            PotentialSpec::Polynomial { coeffs } => coeffs.clone(),
        };
        if coeffs.is_empty() || !(coeffs[0] > 0.0) {
            return Err(Error::invalid("potential", "quadratic coefficient must be positive"));
        }
        if coeffs.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::invalid("potential", "coefficients must be finite and nonnegative"));
        }
        Ok(Potential { spec, coeffs })
    }

    pub fn quadratic() -> Self {
        Potential::new(PotentialSpec::Quadratic { stiffness: 1.0 }).unwrap()
    }

    pub fn anharmonic(lambda: f64) -> Result<Self> {
        Potential::new(PotentialSpec::Anharmonic { lambda })
    }

    pub fn is_quadratic(&self) -> bool {
        self.coeffs[1..].iter().all(|&c| c == 0.0)
    }

    /// Curvature of the quadratic part, `V''(0)`.
    pub fn stiffness(&self) -> f64 {
        2.0 * self.coeffs[0]
    }

    /// Certified lower bound on `V''`.
    pub fn c_minus(&self) -> f64 {
        2.0 * self.coeffs[0]
    }

    pub fn v(&self, x: f64) -> f64 {
        let x2 = x * x;
        let mut pow = x2;
        let mut s = 0.0;
        for &c in &self.coeffs {
            s += c * pow;
            pow *= x2;
        }
        s
    }

    pub fn dv(&self, x: f64) -> f64 {
        let x2 = x * x;
        let mut pow = x;
        let mut s = 0.0;
        for (k, &c) in self.coeffs.iter().enumerate() {
            s += 2.0 * (k + 1) as f64 * c * pow;
            pow *= x2;
        }
        s
    }

    pub fn d2v(&self, x: f64) -> f64 {
        let x2 = x * x;
        let mut pow = 1.0;
        let mut s = 0.0;
        for (k, &c) in self.coeffs.iter().enumerate() {
            let m = 2.0 * (k + 1) as f64;
            s += m * (m - 1.0) * c * pow;
            pow *= x2;
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives() {
        let v = Potential::anharmonic(0.1).unwrap();
        for &x in &[-2.0, -0.3, 0.0, 0.7, 3.0] {
            assert!((v.v(x) - (x * x + 0.1 * x.powi(4))).abs() < 1e-12);
            assert!((v.dv(x) - (2.0 * x + 0.4 * x.powi(3))).abs() < 1e-12);
            assert!((v.d2v(x) - (2.0 + 1.2 * x * x)).abs() < 1e-12);
            assert_eq!(v.v(x), v.v(-x));
            assert!(v.d2v(x) >= v.c_minus());
        }
        let q = Potential::quadratic();
        assert_eq!((q.v(2.0), q.dv(2.0), q.d2v(5.0), q.c_minus()), (2.0, 2.0, 1.0, 1.0));
        assert!(q.is_quadratic() && !v.is_quadratic());
        assert!(Potential::new(PotentialSpec::Polynomial { coeffs: vec![1.0, -1.0] }).is_err());
    }
}
