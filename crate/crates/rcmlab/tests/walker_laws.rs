use std::sync::Arc;

use rcmlab::environment::{custom_speed, make_dynamic, sample_iid, ConductanceLaw, DynamicSpec};
use rcmlab::heatkernel::{solve_dynamic, Observe, SolverParams};
use rcmlab::lattice::{Boundary, LatticeBox};
use rcmlab::walker::{dynamic_endpoints, simulate_static, thinning_bound};

fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn holding_time_and_first_step_laws() {
    let lat = Arc::new(LatticeBox::new(2, 7, Boundary::Periodic).unwrap());
    let field = sample_iid(lat.clone(), &ConductanceLaw::LogUniform { a: 0.2, b: 5.0 }, 4).unwrap();
    let theta: Vec<f64> = (0..lat.n_vertices()).map(|v| 0.5 + (v % 4) as f64 * 0.25).collect();
    let speed = custom_speed(theta.clone()).unwrap();
    let x0 = lat.origin();
    let incident: Vec<usize> = (0..2).flat_map(|i| [lat.plus_edge(x0, i), lat.minus_edge(x0, i)]).collect();
    let total: f64 = incident.iter().map(|&e| field.omega[e]).sum();
    let rate = total / theta[x0];
    let n = 4000;
    let mut holds = Vec::with_capacity(n);
    let mut counts = vec![0usize; incident.len()];
    for seed in 0..n as u64 {
        let path = simulate_static(&field, &speed, x0, 40.0 / rate, seed).unwrap();
        let j = path.jumps[0];
        holds.push(j.time);
        counts[2 * j.axis + usize::from(j.sign < 0)] += 1;
    }
    let d = ks_statistic(holds, |x| 1.0 - (-rate * x).exp());
    assert!(d < 1.36 / (n as f64).sqrt(), "KS distance {d}");
    let chi2: f64 = incident
        .iter()
        .zip(&counts)
        .map(|(&e, &c)| {
            let expect = n as f64 * field.omega[e] / total;
            (c as f64 - expect).powi(2) / expect
        })
        .sum();
    // 99.9% quantile of chi-square with 3 degrees of freedom.
    assert!(chi2 < 16.27, "chi2 {chi2}");
}

#[test]
fn dynamic_walk_matches_dynamic_solver() {
    let lat = Arc::new(LatticeBox::new(2, 9, Boundary::Periodic).unwrap());
    let spec = DynamicSpec::Resampling { law: ConductanceLaw::Uniform { a: 0.5, b: 2.0 }, rate: 0.5 };
    let env = make_dynamic(lat.clone(), &spec, 3.0, 8).unwrap();
    let x0 = lat.origin();
    let (s, t) = (0.5, 2.5);
    let hk = solve_dynamic(&env, s, x0, &[t], &SolverParams::default(), &Observe::All).unwrap();
    let n = 40_000;
    let ends = dynamic_endpoints(&env, x0, s, t, thinning_bound(&env), n, 21).unwrap();
    for y in [x0, lat.step(x0, 0, 1).unwrap(), lat.step(x0, 1, -1).unwrap()] {
        let p = hk.prob.get(0, y).unwrap();
        let hits = ends.iter().filter(|(v, _)| *v == Some(y)).count() as f64 / n as f64;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((hits - p).abs() < 4.0 * sigma, "y={y} mc={hits} exact={p}");
    }
}
