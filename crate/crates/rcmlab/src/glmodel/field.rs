use std::sync::Arc;

use super::Potential;
use crate::io::Table;
use crate::lattice::{Boundary, LatticeBox};
use crate::{Error, Result};

/// Heights on a box. On an absorbing box the heights outside are pinned at 0.
#[derive(Clone, Debug)]
pub struct InterfaceField {
    pub lattice: Arc<LatticeBox>,
    pub phi: Vec<f64>,
    pub time: f64,
    /// Drawn from (or run into) the Gibbs measure.
    pub stationary: bool,
}

impl InterfaceField {
    pub fn new(lattice: Arc<LatticeBox>, phi: Vec<f64>, time: f64) -> Result<Self> {
        if phi.len() != lattice.n_vertices() {
            return Err(Error::invalid("phi", format!("{} heights for {} vertices", phi.len(), lattice.n_vertices())));
        }
        if phi.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("interface heights".into()));
        }
        Ok(InterfaceField { lattice, phi, time, stationary: false })
    }

    pub fn zero(lattice: Arc<LatticeBox>) -> Self {
        let n = lattice.n_vertices();
        InterfaceField { lattice, phi: vec![0.0; n], time: 0.0, stationary: false }
    }

    /// Snapshot table `(x1, .., xd, phi)`.
    pub fn table(&self) -> Table {
        let d = self.lattice.dim();
        let mut header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
        header.push("phi".into());
        let mut t = Table::new(header);
        for (v, &p) in self.phi.iter().enumerate() {
            let mut row: Vec<String> = self.lattice.coords(v).iter().map(|c| c.to_string()).collect();
            row.push(crate::io::fmt_f64(p));
            t.push(row);
        }
        t
    }
}

/// `sum_edges V(grad phi) + m^2/2 sum phi^2`, boundary edges included on an
/// absorbing box.
pub fn hamiltonian(lattice: &LatticeBox, phi: &[f64], potential: &Potential, mass: f64) -> f64 {
    let mut h = 0.0;
    for e in lattice.edges() {
        let a = e.x.map_or(0.0, |v| phi[v]);
        let b = e.y.map_or(0.0, |v| phi[v]);
        h += potential.v(b - a);
    }
    h + 0.5 * mass * mass * phi.iter().map(|x| x * x).sum::<f64>()
}

/// Writes `dH/dphi` into `out` and returns the largest absolute gradient.
pub fn force(lattice: &LatticeBox, phi: &[f64], potential: &Potential, mass: f64, out: &mut [f64]) -> f64 {
    let m2 = mass * mass;
    for (o, &p) in out.iter_mut().zip(phi) {
        *o = m2 * p;
    }
    let mut worst: f64 = 0.0;
    for e in lattice.edges() {
        let a = e.x.map_or(0.0, |v| phi[v]);
        let b = e.y.map_or(0.0, |v| phi[v]);
        worst = worst.max((b - a).abs());
        let f = potential.dv(b - a);
        if let Some(x) = e.x {
            out[x] -= f;
        }
        if let Some(y) = e.y {
            out[y] += f;
        }
    }
    worst
}

pub(crate) fn require_absorbing(lattice: &LatticeBox, what: &str) -> Result<()> {
    if lattice.boundary() != Boundary::Absorbing {
        return Err(Error::invalid("boundary", format!("{what} needs an absorbing (Dirichlet) box")));
    }
    Ok(())
}
