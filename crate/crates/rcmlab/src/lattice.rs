//! Finite windows of Z^d: tori and absorbing boxes, balls, cubes and
//! space-time cylinders.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    Periodic,
    Absorbing,
}

/// Undirected edge `x -- x + e_axis`. On an absorbing box one endpoint may
/// lie outside the box, in which case it is `None`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    pub x: Option<usize>,
    pub y: Option<usize>,
    pub axis: usize,
}

#[derive(Clone, Debug)]
pub struct LatticeBox {
    d: usize,
    side: usize,
    boundary: Boundary,
    half: i64,
    strides: Vec<usize>,
    n_vertices: usize,
    edges: Vec<Edge>,
    minus_edge: Vec<usize>,
}

impl LatticeBox {
    pub fn new(d: usize, side: usize, boundary: Boundary) -> Result<Self> {
        if d < 2 {
            return Err(Error::invalid("d", format!("dimension must be at least 2, got {d}")));
        }
        if side < 3 {
            return Err(Error::invalid("side", format!("side must be at least 3, got {side}")));
        }
        if side % 2 == 0 {
            return Err(Error::EvenSide(side));
        }
        let n_vertices = side
            .checked_pow(d as u32)
            .filter(|&n| n < u32::MAX as usize)
            .ok_or_else(|| Error::invalid("side", "box too large"))?;
        let mut strides = vec![1usize; d];
        for i in 1..d {
            strides[i] = strides[i - 1] * side;
        }
        let mut lat = LatticeBox {
            d,
            side,
            boundary,
            half: (side as i64 - 1) / 2,
            strides,
            n_vertices,
            edges: Vec::new(),
            minus_edge: vec![0; n_vertices * d],
        };
        let mut edges = Vec::with_capacity(n_vertices * d);
        for v in 0..n_vertices {
            for i in 0..d {
                edges.push(Edge { x: Some(v), y: lat.step(v, i, 1), axis: i });
            }
        }
        for v in 0..n_vertices {
            for i in 0..d {
                lat.minus_edge[v * d + i] = match lat.step(v, i, -1) {
                    Some(u) => u * d + i,
                    None => {
                        edges.push(Edge { x: None, y: Some(v), axis: i });
                        edges.len() - 1
                    }
                };
            }
        }
        lat.edges = edges;
        Ok(lat)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn is_periodic(&self) -> bool {
        self.boundary == Boundary::Periodic
    }

    pub fn half(&self) -> i64 {
        self.half
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> Edge {
        self.edges[e]
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    /// Edge joining `v` and `v + e_axis`.
    pub fn plus_edge(&self, v: usize, axis: usize) -> usize {
        v * self.d + axis
    }

    /// Edge joining `v - e_axis` and `v`.
    pub fn minus_edge(&self, v: usize, axis: usize) -> usize {
        self.minus_edge[v * self.d + axis]
    }

    /// Edges incident to `v`, paired with the neighbour across each of them.
    pub fn incident(&self, v: usize) -> impl Iterator<Item = (usize, Option<usize>)> + '_ {
        (0..self.d).flat_map(move |i| {
            [
                (self.plus_edge(v, i), self.step(v, i, 1)),
                (self.minus_edge(v, i), self.step(v, i, -1)),
            ]
        })
    }

    pub fn coord(&self, v: usize, axis: usize) -> i64 {
        ((v / self.strides[axis]) % self.side) as i64 - self.half
    }

    pub fn coords(&self, v: usize) -> Vec<i64> {
        (0..self.d).map(|i| self.coord(v, i)).collect()
    }

    pub fn origin(&self) -> usize {
        self.vertex(&vec![0; self.d]).expect("origin lies in every box")
    }

    /// Vertex id of a coordinate vector. Periodic boxes wrap, absorbing
    /// boxes reject coordinates outside `[-half, half]^d`.
    pub fn vertex(&self, x: &[i64]) -> Result<usize> {
        if x.len() != self.d {
            return Err(Error::VertexOutside(format!("{x:?} has wrong dimension")));
        }
        let l = self.side as i64;
        let mut id = 0usize;
        for (i, &c) in x.iter().enumerate() {
            let k = match self.boundary {
                Boundary::Periodic => (c + self.half).rem_euclid(l),
                Boundary::Absorbing => {
                    if c.abs() > self.half {
                        return Err(Error::VertexOutside(format!("{x:?}")));
                    }
                    c + self.half
                }
            };
            id += k as usize * self.strides[i];
        }
        Ok(id)
    }

    pub fn check_vertex(&self, v: usize) -> Result<()> {
        if v < self.n_vertices {
            Ok(())
        } else {
            Err(Error::VertexOutside(format!("id {v} of {}", self.n_vertices)))
        }
    }

    /// Neighbour of `v` one step along `axis` in direction `sign`.
    pub fn step(&self, v: usize, axis: usize, sign: i64) -> Option<usize> {
        let c = self.coord(v, axis);
        let s = self.strides[axis];
        if sign > 0 {
            if c < self.half {
                Some(v + s)
            } else if self.is_periodic() {
                Some(v + s - self.side * s)
            } else {
                None
            }
        } else if c > -self.half {
            Some(v - s)
        } else if self.is_periodic() {
            Some(v + self.side * s - s)
        } else {
            None
        }
    }

    /// `v + z`, or `None` when it leaves an absorbing box.
    pub fn translate(&self, v: usize, z: &[i64]) -> Option<usize> {
        let x: Vec<i64> = (0..self.d).map(|i| self.coord(v, i) + z[i]).collect();
        self.vertex(&x).ok()
    }

    fn axis_distance(&self, a: i64, b: i64) -> u64 {
        let diff = (a - b).unsigned_abs();
        if self.is_periodic() {
            diff.min(self.side as u64 - diff)
        } else {
            diff
        }
    }

    /// Graph distance: l1 distance, with wrap-around on the torus.
    pub fn distance(&self, x: usize, y: usize) -> Result<u64> {
        self.check_vertex(x)?;
        self.check_vertex(y)?;
        Ok((0..self.d)
            .map(|i| self.axis_distance(self.coord(x, i), self.coord(y, i)))
            .sum())
    }

    /// Sup-norm distance, with wrap-around on the torus.
    pub fn sup_distance(&self, x: usize, y: usize) -> u64 {
        (0..self.d)
            .map(|i| self.axis_distance(self.coord(x, i), self.coord(y, i)))
            .max()
            .unwrap_or(0)
    }

    pub fn ball(&self, center: usize, radius: u64) -> Result<Ball> {
        self.check_vertex(center)?;
        let members = self.collect_within(center, radius, |lat, x, y| lat.distance(x, y).unwrap());
        Ok(Ball { center, radius, members })
    }

    /// Axis-aligned cube of half-width `half` around `center`.
    pub fn cube(&self, center: usize, half: u64) -> Result<Vec<usize>> {
        self.check_vertex(center)?;
        Ok(self.collect_within(center, half, |lat, x, y| lat.sup_distance(x, y)))
    }

    fn collect_within(
        &self,
        center: usize,
        radius: u64,
        dist: impl Fn(&Self, usize, usize) -> u64,
    ) -> Vec<usize> {
        let width = 2 * radius + 1;
        let mut out = Vec::new();
        if width >= self.side as u64 {
            out.extend((0..self.n_vertices).filter(|&v| dist(self, center, v) <= radius));
            return out;
        }
        let r = radius as i64;
        let mut z = vec![-r; self.d];
        loop {
            if let Some(v) = self.translate(center, &z) {
                if dist(self, center, v) <= radius {
                    out.push(v);
                }
            }
            let mut i = 0;
            loop {
                if i == self.d {
                    out.sort_unstable();
                    return out;
                }
                z[i] += 1;
                if z[i] <= r {
                    break;
                }
                z[i] = -r;
                i += 1;
            }
        }
    }

    /// Whether the ball `B(center, radius)` sits inside the box without
    /// wrapping onto itself or touching the outside.
    pub fn ball_fits(&self, center: usize, radius: u64) -> bool {
        match self.boundary {
            Boundary::Periodic => 2 * radius < self.side as u64,
            Boundary::Absorbing => (0..self.d).all(|i| {
                let c = self.coord(center, i);
                c.unsigned_abs() + radius <= self.half as u64
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ball {
    pub center: usize,
    pub radius: u64,
    /// Sorted vertex ids.
    pub members: Vec<usize>,
}

impl Ball {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, v: usize) -> bool {
        self.members.binary_search(&v).is_ok()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CylinderKind {
    /// `[t0 - tau n^2, t0] x B(x0, sigma n)`
    Backward,
    /// `[t0 + (1-sigma) eps n^2, t0 + n^2 - (1-sigma) eps n^2] x B(x0, sigma n)`
    Interior,
    /// `[t0, t0 + sigma n^2] x B(x0, sigma n)`
    Forward,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylinderParams {
    pub sigma: f64,
    #[serde(default = "one")]
    pub tau: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn one() -> f64 {
    1.0
}

fn default_eps() -> f64 {
    0.1
}

impl CylinderParams {
    pub fn sigma(sigma: f64) -> Self {
        CylinderParams { sigma, tau: 1.0, eps: 0.1 }
    }
}

#[derive(Clone, Debug)]
pub struct SpaceTimeCylinder {
    pub kind: CylinderKind,
    pub t0: f64,
    pub x0: usize,
    pub n: f64,
    pub params: CylinderParams,
    pub interval: (f64, f64),
    pub ball: Ball,
}

/// Integer radius `floor(s)`, tolerant to rounding in products like `0.5 * 4`.
pub fn radius_of(s: f64) -> u64 {
    (s + 1e-9).floor().max(0.0) as u64
}

pub fn make_cylinder(
    lat: &LatticeBox,
    kind: CylinderKind,
    t0: f64,
    x0: usize,
    n: f64,
    params: CylinderParams,
) -> Result<SpaceTimeCylinder> {
    let CylinderParams { sigma, tau, eps } = params;
    if !(sigma > 0.0 && sigma <= 1.0) {
        return Err(Error::invalid("sigma", format!("{sigma} not in (0,1]")));
    }
    if !(n > 0.0) {
        return Err(Error::invalid("n", format!("{n} must be positive")));
    }
    let n2 = n * n;
    let interval = match kind {
        CylinderKind::Backward => {
            if !(tau > 0.0 && tau <= 1.0) {
                return Err(Error::invalid("tau", format!("{tau} not in (0,1]")));
            }
            (t0 - tau * n2, t0)
        }
        CylinderKind::Interior => {
            if !(eps > 0.0 && eps < 0.25) {
                return Err(Error::invalid("eps", format!("{eps} not in (0,1/4)")));
            }
            let shift = (1.0 - sigma) * eps * n2;
            (t0 + shift, t0 + n2 - shift)
        }
        CylinderKind::Forward => (t0, t0 + sigma * n2),
    };
    let radius = radius_of(sigma * n);
    lat.check_vertex(x0)?;
    if !lat.ball_fits(x0, radius) {
        return Err(Error::BallExceedsBox { center: format!("{:?}", lat.coords(x0)), radius });
    }
    let ball = lat.ball(x0, radius)?;
    Ok(SpaceTimeCylinder { kind, t0, x0, n, params, interval, ball })
}

impl SpaceTimeCylinder {
    pub fn contains(&self, t: f64, v: usize) -> bool {
        let tol = 1e-12 * (1.0 + self.interval.1.abs());
        t >= self.interval.0 - tol && t <= self.interval.1 + tol && self.ball.contains(v)
    }

    pub fn duration(&self) -> f64 {
        self.interval.1 - self.interval.0
    }

    /// Same convention and anchor, different sigma.
    pub fn with_sigma(&self, lat: &LatticeBox, sigma: f64) -> Result<SpaceTimeCylinder> {
        make_cylinder(lat, self.kind, self.t0, self.x0, self.n, CylinderParams { sigma, ..self.params })
    }
}
