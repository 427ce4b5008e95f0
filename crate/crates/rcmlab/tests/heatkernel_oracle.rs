use std::sync::Arc;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rcmlab::environment::{custom_speed, make_dynamic, sample_iid, ConductanceField, ConductanceLaw, DynamicEnvironment, DynamicSpec, SpeedMeasure};
use rcmlab::heatkernel::{solve_dynamic, solve_static, Observe, SolverParams};
use rcmlab::lattice::{Boundary, LatticeBox};

fn generator(field: &ConductanceField, theta: &[f64]) -> DMatrix<f64> {
    let lat = &field.lattice;
    let n = lat.n_vertices();
    let mut l = DMatrix::zeros(n, n);
    for (e, edge) in lat.edges().iter().enumerate() {
        let w = field.omega[e];
        match (edge.x, edge.y) {
            (Some(x), Some(y)) => {
                l[(x, y)] += w / theta[x];
                l[(x, x)] -= w / theta[x];
                l[(y, x)] += w / theta[y];
                l[(y, y)] -= w / theta[y];
            }
            (Some(v), None) | (None, Some(v)) => l[(v, v)] -= w / theta[v],
            (None, None) => {}
        }
    }
    l
}

fn field(lat: &Arc<LatticeBox>, seed: u64) -> ConductanceField {
    sample_iid(lat.clone(), &ConductanceLaw::LogUniform { a: 0.2, b: 5.0 }, seed).unwrap()
}

#[test]
fn static_kernel_matches_matrix_exponential() {
    for boundary in [Boundary::Periodic, Boundary::Absorbing] {
        let lat = Arc::new(LatticeBox::new(2, 5, boundary).unwrap());
        let f = field(&lat, 11);
        let theta: Vec<f64> = (0..lat.n_vertices()).map(|v| 0.5 + (v % 3) as f64 * 0.5).collect();
        let speed = custom_speed(theta.clone()).unwrap();
        let l = generator(&f, &theta);
        let x0 = lat.origin();
        let times = [0.3, 1.0, 2.5];
        let hk = solve_static(&f, &speed, x0, &times, &SolverParams::default(), &Observe::All).unwrap();
        for (i, &t) in times.iter().enumerate() {
            let p = (l.clone() * t).exp();
            for y in 0..lat.n_vertices() {
                assert!((hk.prob.get(i, y).unwrap() - p[(x0, y)]).abs() < 1e-11, "t={t} y={y}");
            }
        }
    }
}

#[test]
fn dynamic_kernel_matches_product_of_exponentials() {
    let lat = Arc::new(LatticeBox::new(2, 5, Boundary::Periodic).unwrap());
    let env = make_dynamic(lat.clone(), &DynamicSpec::Resampling { law: ConductanceLaw::Uniform { a: 0.5, b: 2.0 }, rate: 0.3 }, 3.0, 5).unwrap();
    let (s, t) = (0.5, 2.5);
    let bps = env.breakpoints(s, t, 10_000).unwrap();
    let mut grid = vec![s];
    grid.extend(bps);
    grid.push(t);
    grid.dedup();
    let n = lat.n_vertices();
    let mut p: DMatrix<f64> = DMatrix::identity(n, n);
    let mut omega = vec![0.0; lat.n_edges()];
    for w in grid.windows(2) {
        env.snapshot(0.5 * (w[0] + w[1]), &mut omega).unwrap();
        let f = ConductanceField::from_values(lat.clone(), omega.clone()).unwrap();
        p *= (generator(&f, &vec![1.0; n]) * (w[1] - w[0])).exp();
    }
    let x0 = lat.origin();
    let hk = solve_dynamic(&env, s, x0, &[t], &SolverParams::default(), &Observe::All).unwrap();
    for y in 0..n {
        assert!((hk.prob.get(0, y).unwrap() - p[(x0, y)]).abs() < 1e-10);
    }
}

#[test]
fn static_lift_agrees_with_static_solver() {
    let lat = Arc::new(LatticeBox::new(2, 7, Boundary::Periodic).unwrap());
    let f = field(&lat, 3);
    let env = DynamicEnvironment::static_lift(f.clone(), (0.0, 10.0));
    let a = solve_static(&f, &SpeedMeasure::vsrw(lat.n_vertices()), 3, &[1.0, 4.0], &SolverParams::default(), &Observe::All).unwrap();
    let b = solve_dynamic(&env, 0.0, 3, &[1.0, 4.0], &SolverParams::default(), &Observe::All).unwrap();
    for i in 0..2 {
        for y in 0..lat.n_vertices() {
            assert!((a.prob.get(i, y).unwrap() - b.prob.get(i, y).unwrap()).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn kernel_invariants(seed in 0u64..10_000, side in prop::sample::select(vec![3usize, 5, 7]), t in 0.1f64..3.0) {
        let lat = Arc::new(LatticeBox::new(2, side, Boundary::Periodic).unwrap());
        let f = field(&lat, seed);
        let theta: Vec<f64> = (0..lat.n_vertices()).map(|v| 0.5 + ((v as u64 * 7 + seed) % 5) as f64 * 0.3).collect();
        let speed = custom_speed(theta.clone()).unwrap();
        let params = SolverParams::default();
        let (x, y) = (0, lat.n_vertices() - 1);
        let from_x = solve_static(&f, &speed, x, &[t], &params, &Observe::All).unwrap();
        let from_y = solve_static(&f, &speed, y, &[t], &params, &Observe::All).unwrap();
        let mass: f64 = (0..lat.n_vertices()).map(|v| from_x.prob.get(0, v).unwrap()).sum();
        prop_assert!((mass - 1.0).abs() <= 2.0 * params.eps_trunc);
        prop_assert!((0..lat.n_vertices()).all(|v| from_x.prob.get(0, v).unwrap() >= 0.0));
        let pxy = from_x.density.get(0, y).unwrap();
        let pyx = from_y.density.get(0, x).unwrap();
        prop_assert!((pxy - pyx).abs() <= 4.0 * params.eps_trunc / theta[x].min(theta[y]));
    }
}
