//! Browser demo: a heat-kernel field, a quenched local limit curve and an
//! interface snapshot, each returned as a JSON string.

use std::sync::Arc;

use rcmlab::environment::{make_speed, sample_iid, ConductanceLaw, SpeedSpec};
use rcmlab::glmodel::{sample_gibbs, GibbsMode, GibbsParams, Potential, PotentialSpec};
use rcmlab::heatkernel::{solve_static, Observe, SolverParams};
use rcmlab::lattice::{Boundary, LatticeBox};
use rcmlab::llt::{quenched_curve, GaussianKernel, LltWindow};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const MAX_SIDE: usize = 129;

fn law(a: f64, b: f64) -> Result<ConductanceLaw, String> {
    let law = if a == b { ConductanceLaw::Constant { value: a } } else { ConductanceLaw::LogUniform { a, b } };
    law.validate().map_err(|e| e.to_string())?;
    Ok(law)
}

fn square(side: usize, boundary: Boundary) -> Result<Arc<LatticeBox>, String> {
    if side > MAX_SIDE {
        return Err(format!("side {side} exceeds {MAX_SIDE}"));
    }
    LatticeBox::new(2, side, boundary).map(Arc::new).map_err(|e| e.to_string())
}

/// Rows of `values` indexed by vertex, laid out as a `side x side` grid.
fn grid(lat: &LatticeBox, values: impl Fn(usize) -> f64) -> Vec<Vec<f64>> {
    let h = lat.half();
    (-h..=h).map(|y| (-h..=h).map(|x| values(lat.vertex(&[x, y]).unwrap())).collect()).collect()
}

/// `P(t, 0, x)` on a `side x side` torus with log-uniform `[a, b]` conductances.
pub fn heat_kernel_field(side: usize, a: f64, b: f64, t: f64, seed: u64) -> Result<Value, String> {
    if !(t > 0.0 && t.is_finite()) {
        return Err("t must be positive".into());
    }
    let lat = square(side, Boundary::Periodic)?;
    let field = sample_iid(lat.clone(), &law(a, b)?, seed).map_err(|e| e.to_string())?;
    let speed = make_speed(&field, &SpeedSpec::Vsrw).map_err(|e| e.to_string())?;
    let hk = solve_static(&field, &speed, lat.origin(), &[t], &SolverParams::default(), &Observe::All).map_err(|e| e.to_string())?;
    let values = grid(&lat, |v| hk.prob.get(0, v).unwrap());
    let max = values.iter().flatten().cloned().fold(0.0, f64::max);
    Ok(json!({ "side": side, "t": t, "max": max, "values": values }))
}

/// Quenched sup-error against the Gaussian limit on `K = 1`, `[0.5, 1]`.
pub fn llt_curve(a: f64, b: f64, ns: &[usize], seed: u64) -> Result<Value, String> {
    if ns.is_empty() || ns.windows(2).any(|w| w[0] >= w[1]) || ns[0] == 0 || *ns.last().unwrap() > 32 {
        return Err("scales must increase within 1..=32".into());
    }
    let law = law(a, b)?;
    let gk = GaussianKernel::isotropic(2, 2.0 * (a * b).sqrt(), 1.0).map_err(|e| e.to_string())?;
    let window = LltWindow { k: 1.0, t1: 0.5, t2: 1.0 };
    let lat = square(window.required_side(*ns.last().unwrap()), Boundary::Periodic)?;
    let field = sample_iid(lat, &law, seed).map_err(|e| e.to_string())?;
    let speed = make_speed(&field, &SpeedSpec::Vsrw).map_err(|e| e.to_string())?;
    let curve = quenched_curve(&field, &speed, &gk, &window, ns, &SolverParams::default()).map_err(|e| e.to_string())?;
    Ok(json!({ "n": curve.n, "sup_error": curve.sup_error, "decreasing": curve.strictly_decreasing() }))
}

/// One Gibbs sample of the interface on a `side x side` Dirichlet box with
/// `V(x) = x^2 + lambda x^4` (`x^2 / 2` when `lambda = 0`).
pub fn gl_snapshot(side: usize, lambda: f64, seed: u64) -> Result<Value, String> {
    let lat = square(side, Boundary::Absorbing)?;
    let spec = if lambda == 0.0 { PotentialSpec::Quadratic { stiffness: 1.0 } } else { PotentialSpec::Anharmonic { lambda } };
    let pot = Potential::new(spec).map_err(|e| e.to_string())?;
    let mode = if pot.is_quadratic() { GibbsMode::ExactGaussian } else { GibbsMode::LangevinBurnin };
    let sample = sample_gibbs(&lat, &pot, mode, &GibbsParams::new(1), seed).map_err(|e| e.to_string())?;
    let phi = &sample[0].phi;
    let values = grid(&lat, |v| phi[v]);
    let bound = phi.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(json!({ "side": side, "lambda": lambda, "max_abs": bound, "values": values }))
}

fn to_js(r: Result<Value, String>) -> Result<String, String> {
    r.map(|v| v.to_string())
}

#[wasm_bindgen(js_name = heatKernelField)]
pub fn heat_kernel_field_js(side: usize, a: f64, b: f64, t: f64, seed: u32) -> Result<String, String> {
    to_js(heat_kernel_field(side, a, b, t, seed as u64))
}

#[wasm_bindgen(js_name = lltCurve)]
pub fn llt_curve_js(a: f64, b: f64, ns: Vec<u32>, seed: u32) -> Result<String, String> {
    let ns: Vec<usize> = ns.into_iter().map(|n| n as usize).collect();
    to_js(llt_curve(a, b, &ns, seed as u64))
}

#[wasm_bindgen(js_name = glSnapshot)]
pub fn gl_snapshot_js(side: usize, lambda: f64, seed: u32) -> Result<String, String> {
    to_js(gl_snapshot(side, lambda, seed as u64))
}
