//! Sup over a ball family of the deviation of local averages from the mean.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::{make_dynamic, make_speed, mu_nu, sample_iid, ConductanceLaw, DynamicSpec, SpeedSpec};
use crate::lattice::{Boundary, LatticeBox};
use crate::rng::{derive, label};
use crate::special::median;
use crate::{Error, Result};

/// Local functional `f` whose averages are tested.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LocalFunctional {
    /// `omega(x, x + e_1)`
    Omega,
    /// `nu(x) = sum of 1/omega over incident edges`
    Nu,
    /// i.i.d. speed measure `theta(x)` drawn from `law`.
    Theta { law: ConductanceLaw },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErgodicSpec {
    pub d: usize,
    pub law: ConductanceLaw,
    pub functional: LocalFunctional,
    pub ns: Vec<usize>,
    pub n_seeds: usize,
    pub seed: u64,
    /// Resampling rate for the space-time version; static when absent.
    #[serde(default)]
    pub rate: Option<f64>,
    #[serde(default)]
    pub t0: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErgodicRow {
    pub n: usize,
    pub median_deviation: f64,
    pub deviations: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErgodicReport {
    pub expected: f64,
    pub rows: Vec<ErgodicRow>,
}

impl ErgodicReport {
    pub fn decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].median_deviation < w[0].median_deviation)
    }
}

fn expected(spec: &ErgodicSpec) -> Result<f64> {
    let m = match &spec.functional {
        LocalFunctional::Omega => spec.law.moment(1.0),
        LocalFunctional::Nu => spec.law.moment(-1.0).map(|v| 2.0 * spec.d as f64 * v),
        LocalFunctional::Theta { law } => law.moment(1.0),
    };
    m.ok_or_else(|| Error::invalid("law", "the functional has infinite mean"))
}

/// Deviation `max_r |avg_{B(0,r)} f - E f|` over radii `ceil(n/2)..=n`.
fn sup_deviation(lat: &LatticeBox, values: &[f64], n: usize, mean: f64) -> Result<f64> {
    let ball = lat.ball(lat.origin(), n as u64)?;
    let mut by_radius = vec![(0.0, 0usize); n + 1];
    for &x in &ball.members {
        let r = lat.distance(lat.origin(), x)? as usize;
        by_radius[r].0 += values[x];
        by_radius[r].1 += 1;
    }
    let (mut s, mut c) = (0.0, 0usize);
    let mut worst: f64 = 0.0;
    for (r, (sr, cr)) in by_radius.into_iter().enumerate() {
        s += sr;
        c += cr;
        if 2 * r >= n {
            worst = worst.max((s / c as f64 - mean).abs());
        }
    }
    Ok(worst)
}

fn one_seed(spec: &ErgodicSpec, n: usize, k: usize, mean: f64) -> Result<f64> {
    let side = 2 * n + 3;
    let lat = Arc::new(LatticeBox::new(spec.d, side, Boundary::Periodic)?);
    let seed = derive(spec.seed, &[label("ergodic"), n as u64, k as u64]);
    let values: Vec<f64> = match (spec.rate, &spec.functional) {
        (None, LocalFunctional::Theta { law }) => {
            let field = sample_iid(lat.clone(), &spec.law, seed)?;
            make_speed(&field, &SpeedSpec::Custom { law: law.clone(), seed })?.theta
        }
        (None, f) => {
            let field = sample_iid(lat.clone(), &spec.law, seed)?;
            match f {
                LocalFunctional::Omega => (0..lat.n_vertices()).map(|x| field.omega[lat.plus_edge(x, 0)]).collect(),
                _ => mu_nu(&field).1,
            }
        }
        (Some(rate), LocalFunctional::Omega) => {
            let t1 = spec.t0 + (n * n) as f64;
            let env = make_dynamic(lat.clone(), &DynamicSpec::Resampling { law: spec.law.clone(), rate }, t1, seed)?;
            (0..lat.n_vertices()).map(|x| env.time_average(lat.plus_edge(x, 0), spec.t0, t1)).collect::<Result<_>>()?
        }
        (Some(_), _) => return Err(Error::invalid("functional", "the space-time version supports omega only")),
    };
    sup_deviation(&lat, &values, n, mean)
}

pub fn ergodic_sup_check(spec: &ErgodicSpec) -> Result<ErgodicReport> {
    spec.law.validate()?;
    if spec.d < 1 || spec.ns.is_empty() || spec.n_seeds == 0 {
        return Err(Error::invalid("spec", "need d >= 1, nonempty n list and at least one seed"));
    }
    let mean = expected(spec)?;
    let rows = spec
        .ns
        .iter()
        .map(|&n| {
            if n < 1 {
                return Err(Error::invalid("ns", "radii must be positive"));
            }
            let deviations: Vec<f64> = (0..spec.n_seeds).into_par_iter().map(|k| one_seed(spec, n, k, mean)).collect::<Result<_>>()?;
            Ok(ErgodicRow { n, median_deviation: median(&deviations), deviations })
        })
        .collect::<Result<_>>()?;
    Ok(ErgodicReport { expected: mean, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_field_has_no_deviation() {
        let spec = ErgodicSpec {
            d: 2,
            law: ConductanceLaw::Constant { value: 1.3 },
            functional: LocalFunctional::Nu,
            ns: vec![4, 8],
            n_seeds: 3,
            seed: 1,
            rate: None,
            t0: 0.0,
        };
        let r = ergodic_sup_check(&spec).unwrap();
        assert!(r.rows.iter().all(|row| row.median_deviation < 1e-12));
    }

    #[test]
    fn log_uniform_deviation_decreases() {
        let law = ConductanceLaw::LogUniform { a: 0.5, b: 2.0 };
        let spec = ErgodicSpec { d: 2, law, functional: LocalFunctional::Omega, ns: vec![8, 16, 32], n_seeds: 50, seed: 4, rate: None, t0: 0.0 };
        assert!(ergodic_sup_check(&spec).unwrap().decreasing());
        let spec = ErgodicSpec { rate: Some(0.05), n_seeds: 20, ..spec };
        assert!(ergodic_sup_check(&spec).unwrap().decreasing());
    }
}
