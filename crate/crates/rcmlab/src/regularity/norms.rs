//! Space-averaged and space-time norms, Dirichlet forms.

use crate::environment::ConductanceField;
use crate::lattice::LatticeBox;
use crate::{Error, Result};

use super::exponents::Exponent;

/// How a space average is normalized.
#[derive(Clone, Copy, Debug)]
pub enum Weight<'a> {
    /// `(|B|^{-1} sum |f|^p)^{1/p}`
    Unit,
    /// `(phi(B)^{-1} sum |f|^p phi)^{1/p}`
    Normalized(&'a [f64]),
    /// `(|B|^{-1} sum |f|^p phi)^{1/p}`
    Volume(&'a [f64]),
}

/// Norm of `values`, listed in the order of `verts`. `phi` is indexed by vertex id.
pub fn space_norm(values: &[f64], verts: &[usize], p: Exponent, weight: Weight) -> Result<f64> {
    if verts.is_empty() {
        return Err(Error::Degenerate("norm over an empty set".into()));
    }
    if values.len() != verts.len() {
        return Err(Error::invalid("values", "length differs from the vertex set"));
    }
    if !(p.0 > 0.0) {
        return Err(Error::invalid("p", format!("{} must be positive", p.0)));
    }
    let w = |i: usize| match weight {
        Weight::Unit => 1.0,
        Weight::Normalized(phi) | Weight::Volume(phi) => phi[verts[i]],
    };
    if p.is_inf() {
        // The essential sup ignores the weight as long as it is positive.
        return Ok(values.iter().fold(0.0, |m, v| m.max(v.abs())));
    }
    let total = match weight {
        Weight::Normalized(phi) => verts.iter().map(|&x| phi[x]).sum(),
        _ => verts.len() as f64,
    };
    let s: f64 = values.iter().enumerate().map(|(i, v)| v.abs().powf(p.0) * w(i)).sum();
    Ok((s / total).powf(1.0 / p.0))
}

/// Convenience: norm of a vertex-indexed function over `verts`.
pub fn norm_on(f: &[f64], verts: &[usize], p: Exponent, weight: Weight) -> Result<f64> {
    let vals: Vec<f64> = verts.iter().map(|&x| f[x]).collect();
    space_norm(&vals, verts, p, weight)
}

/// `(|I|^{-1} int_I ||u_t||_p^{p'} dt)^{1/p'}` with the time integral by
/// trapezoid on `times`; `p' = inf` gives the max over the grid.
pub fn space_time_norm(times: &[f64], slices: &[Vec<f64>], verts: &[usize], p: Exponent, p_time: Exponent, weight: Weight) -> Result<f64> {
    if times.is_empty() || times.len() != slices.len() {
        return Err(Error::Degenerate("space-time norm needs one slice per grid time".into()));
    }
    let norms: Vec<f64> = slices.iter().map(|s| space_norm(s, verts, p, weight)).collect::<Result<_>>()?;
    if p_time.is_inf() {
        return Ok(norms.iter().fold(0.0, |m, &v| m.max(v)));
    }
    if times.len() == 1 {
        return Ok(norms[0]);
    }
    let span = times[times.len() - 1] - times[0];
    if !(span > 0.0) {
        return Err(Error::Degenerate("time grid has zero length".into()));
    }
    let pw: Vec<f64> = norms.iter().map(|v| v.powf(p_time.0)).collect();
    let mut integral = 0.0;
    for i in 1..times.len() {
        integral += 0.5 * (times[i] - times[i - 1]) * (pw[i] + pw[i - 1]);
    }
    Ok((integral / span).powf(1.0 / p_time.0))
}

fn ends(lat: &LatticeBox, e: usize) -> (Option<usize>, Option<usize>) {
    let edge = lat.edge(e);
    (edge.x, edge.y)
}

fn at(f: &[f64], v: Option<usize>) -> f64 {
    v.map_or(0.0, |v| f[v])
}

/// `sum_e omega(e) grad f(e) grad g(e)`; functions vanish off the box.
pub fn dirichlet(field: &ConductanceField, f: &[f64], g: &[f64]) -> f64 {
    let lat = &field.lattice;
    (0..lat.n_edges())
        .map(|e| {
            let (x, y) = ends(lat, e);
            field.omega[e] * (at(f, y) - at(f, x)) * (at(g, y) - at(g, x))
        })
        .sum()
}

/// Dirichlet form with edge weights `min(eta^2(x), eta^2(y))`.
pub fn dirichlet_cut(field: &ConductanceField, f: &[f64], eta: &[f64]) -> f64 {
    let lat = &field.lattice;
    (0..lat.n_edges())
        .map(|e| {
            let (x, y) = ends(lat, e);
            let w = at(eta, x).powi(2).min(at(eta, y).powi(2));
            let df = at(f, y) - at(f, x);
            w * field.omega[e] * df * df
        })
        .sum()
}

/// `sum_{x,y in B, x~y} omega(x,y) (f(x)-f(y))^2`, with `members` sorted.
pub fn local_energy(field: &ConductanceField, f: &[f64], members: &[usize]) -> f64 {
    let lat = &field.lattice;
    let inside = |v: usize| members.binary_search(&v).is_ok();
    let mut s = 0.0;
    for &x in members {
        for axis in 0..lat.dim() {
            if let Some(y) = lat.step(x, axis, 1) {
                if inside(y) {
                    let df = f[y] - f[x];
                    s += field.omega[lat.plus_edge(x, axis)] * df * df;
                }
            }
        }
    }
    s
}

/// `max over edges {x,y} with eta(x) != 0 of (eta(y)/eta(x)) v 1`.
pub fn osr(lat: &LatticeBox, eta: &[f64]) -> f64 {
    let mut m: f64 = 1.0;
    for e in 0..lat.n_edges() {
        let (x, y) = ends(lat, e);
        let (a, b) = (at(eta, x), at(eta, y));
        if a != 0.0 {
            m = m.max(b / a);
        }
        if b != 0.0 {
            m = m.max(a / b);
        }
    }
    m
}

/// `max_e |grad eta(e)|`.
pub fn grad_sup(lat: &LatticeBox, eta: &[f64]) -> f64 {
    (0..lat.n_edges())
        .map(|e| {
            let (x, y) = ends(lat, e);
            (at(eta, y) - at(eta, x)).abs()
        })
        .fold(0.0, f64::max)
}

/// Weighted average `(u)_{B,phi}`.
pub fn weighted_mean(u: &[f64], verts: &[usize], phi: &[f64]) -> Result<f64> {
    let w: f64 = verts.iter().map(|&x| phi[x]).sum();
    if !(w > 0.0) {
        return Err(Error::Degenerate("weighted mean over a null set".into()));
    }
    Ok(verts.iter().map(|&x| u[x] * phi[x]).sum::<f64>() / w)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::lattice::Boundary;

    fn e(v: f64) -> Exponent {
        Exponent(v)
    }

    #[test]
    fn constant_function_norms() {
        let verts = vec![0, 3, 7];
        let vals = vec![-2.0; 3];
        let phi = vec![0.5, 1.0, 2.0, 3.0, 1.0, 1.0, 1.0, 4.0];
        for p in [0.5, 1.0, 2.0, 7.0, f64::INFINITY] {
            assert!((space_norm(&vals, &verts, e(p), Weight::Unit).unwrap() - 2.0).abs() < 1e-14);
            assert!((space_norm(&vals, &verts, e(p), Weight::Normalized(&phi)).unwrap() - 2.0).abs() < 1e-14);
        }
        let vals = vec![1.0, -5.0, 2.0];
        assert_eq!(space_norm(&vals, &verts, Exponent::INF, Weight::Unit).unwrap(), 5.0);
        let ones = vec![1.0; 8];
        let a = space_norm(&vals, &verts, e(3.0), Weight::Unit).unwrap();
        assert!((space_norm(&vals, &verts, e(3.0), Weight::Normalized(&ones)).unwrap() - a).abs() < 1e-14);
        assert!((space_norm(&vals, &verts, e(3.0), Weight::Volume(&ones)).unwrap() - a).abs() < 1e-14);
        assert!(space_norm(&[], &[], e(2.0), Weight::Unit).is_err());
    }

    #[test]
    fn space_time_norm_of_linear_in_time() {
        // ||u_t|| = t on [0, 2], p' = 2: (1/2 int t^2)^{1/2} = sqrt(4/3), trapezoid on a fine grid.
        let times: Vec<f64> = (0..=2000).map(|i| i as f64 / 1000.0).collect();
        let slices: Vec<Vec<f64>> = times.iter().map(|&t| vec![t, t]).collect();
        let v = space_time_norm(&times, &slices, &[0, 1], e(2.0), e(2.0), Weight::Unit).unwrap();
        assert!((v - (4.0f64 / 3.0).sqrt()).abs() < 1e-6);
        let m = space_time_norm(&times, &slices, &[0, 1], e(2.0), Exponent::INF, Weight::Unit).unwrap();
        assert_eq!(m, 2.0);
    }

    #[test]
    fn dirichlet_examples() {
        let lat = Arc::new(LatticeBox::new(2, 9, Boundary::Periodic).unwrap());
        let field = ConductanceField::constant(lat.clone(), 1.0).unwrap();
        let c = vec![3.0; lat.n_vertices()];
        assert_eq!(dirichlet(&field, &c, &c), 0.0);
        let mut delta = vec![0.0; lat.n_vertices()];
        delta[lat.origin()] = 1.0;
        assert_eq!(dirichlet(&field, &delta, &delta), 4.0);
        let ones = vec![1.0; lat.n_vertices()];
        let f: Vec<f64> = (0..lat.n_vertices()).map(|v| (v as f64).sin()).collect();
        assert!((dirichlet_cut(&field, &f, &ones) - dirichlet(&field, &f, &f)).abs() < 1e-12);
        assert_eq!(osr(&lat, &ones), 1.0);
    }
}
