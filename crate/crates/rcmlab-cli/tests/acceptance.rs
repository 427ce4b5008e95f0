//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use rcmlab::environment::{make_speed, sample_iid, ConductanceLaw, DynamicSpec, SpeedMeasure, SpeedSpec};
use rcmlab::glmodel::{cov_scaling_curve, gff_test, GffSpec, Potential, PotentialSpec, TestFunction};
use rcmlab::heatkernel::{solve_static, Observe, SolverParams};
use rcmlab::lattice::{Boundary, LatticeBox};
use rcmlab::llt::{annealed_curve, annealed_curve_dynamic, quenched_curve, DynamicEnsemble, LltWindow, StaticEnsemble};
use rcmlab::regularity::exponents::exponents;
use rcmlab::regularity::gfun::{cbar, cbar_residual};
use rcmlab::regularity::{calibrate, CalibrationSpec, Exponent};
use rcmlab::walker::{empirical_kernel, estimate_sigma, EnsembleSpec};
use rcmlab_cli::experiments::{gaussian_for, CovPoint, DiagBounds, GlCov, Osc};
use rcmlab_cli::{Context, Kind};

type Check = Result<String, String>;

fn verdict(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn log_uniform() -> ConductanceLaw {
    ConductanceLaw::LogUniform { a: 0.5, b: 2.0 }
}

fn torus(d: usize, side: usize) -> Arc<LatticeBox> {
    Arc::new(LatticeBox::new(d, side, Boundary::Periodic).unwrap())
}

fn ctx(kind: Kind) -> Context {
    Context { kind, master_seed: 2024 }
}

/// `I_0(z)` by direct power series summation.
fn bessel_i0(z: f64) -> f64 {
    let h2 = z * z / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= h2 / (k * k) as f64;
        sum += term;
        if term < 1e-20 * sum {
            break;
        }
    }
    sum
}

fn solver_oracle() -> Check {
    let start = Instant::now();
    let lat = torus(2, 65);
    let field = sample_iid(lat.clone(), &ConductanceLaw::Constant { value: 1.0 }, 0).unwrap();
    let speed = SpeedMeasure::vsrw(lat.n_vertices());
    let o = lat.origin();
    let times = [0.5, 1.0, 2.0];
    let hk = solve_static(&field, &speed, o, &times, &SolverParams::default(), &Observe::Subset(vec![o])).unwrap();
    let mut worst: f64 = 0.0;
    for (i, &t) in times.iter().enumerate() {
        let exact = ((-2.0 * t).exp() * bessel_i0(2.0 * t)).powi(2);
        worst = worst.max((hk.prob.get(i, o).unwrap() - exact).abs());
    }
    let elapsed = start.elapsed();
    verdict(worst < 1e-8 && elapsed < Duration::from_secs(10), format!("max error {worst:.2e}, {:.2}s", elapsed.as_secs_f64()))
}

fn kernel_properties() -> Check {
    let lat = torus(2, 33);
    let n = lat.n_vertices();
    let (t1, t2) = (0.5, 1.0);
    let times = [t1, t2, t1 + t2];
    let params = SolverParams::default();
    let eps = params.eps_trunc;
    let (mut sym, mut mass_low, mut mass_high, mut ck, mut negatives) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0usize);
    for e in 0..10u64 {
        let field = sample_iid(lat.clone(), &log_uniform(), 300 + e).unwrap();
        let speed = make_speed(&field, &SpeedSpec::Custom { law: ConductanceLaw::Uniform { a: 0.5, b: 2.0 }, seed: e }).unwrap();
        let solves: Vec<_> = (0..n)
            .into_par_iter()
            .map(|x| solve_static(&field, &speed, x, &times, &params, &Observe::All).unwrap())
            .collect();
        let dense = |ti: usize, f: &dyn Fn(&rcmlab::heatkernel::HeatKernelField) -> &rcmlab::heatkernel::SpaceTimeField| -> Vec<Vec<f64>> {
            solves.iter().map(|hk| (0..n).map(|y| f(hk).get(ti, y).unwrap()).collect()).collect()
        };
        let p: Vec<Vec<Vec<f64>>> = (0..3).map(|ti| dense(ti, &|hk| &hk.prob)).collect();
        let q: Vec<Vec<Vec<f64>>> = (0..3).map(|ti| dense(ti, &|hk| &hk.density)).collect();
        for ti in 0..3 {
            for x in 0..n {
                let m: f64 = p[ti][x].iter().sum();
                mass_low = mass_low.max(1.0 - m);
                mass_high = mass_high.max(m - 1.0);
                negatives += p[ti][x].iter().filter(|&&v| v < 0.0).count();
                for y in 0..x {
                    sym = sym.max((q[ti][x][y] - q[ti][y][x]).abs());
                }
            }
        }
        let worst_ck = (0..n)
            .into_par_iter()
            .map(|x| {
                let mut composed = vec![0.0; n];
                for y in 0..n {
                    let a = p[0][x][y];
                    for (c, b) in composed.iter_mut().zip(&p[1][y]) {
                        *c += a * b;
                    }
                }
                composed.iter().zip(&p[2][x]).map(|(c, d)| (c - d).abs()).fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max);
        ck = ck.max(worst_ck);
    }
    verdict(
        sym <= 2.0 * eps && mass_low <= eps && mass_high <= 0.0 && ck <= 1e-8 && negatives == 0,
        format!("symmetry {sym:.1e}, mass deficit {mass_low:.1e}, excess {mass_high:.1e}, CK {ck:.1e}, negatives {negatives} (eps {eps:.0e})"),
    )
}

fn mc_vs_solver() -> Check {
    let lat = torus(2, 33);
    let field = sample_iid(lat.clone(), &log_uniform(), 11).unwrap();
    let speed = make_speed(&field, &SpeedSpec::Vsrw).unwrap();
    let o = lat.origin();
    let t = 4.0;
    let hk = solve_static(&field, &speed, o, &[t], &SolverParams::default(), &Observe::All).unwrap();
    let mut order: Vec<usize> = (0..lat.n_vertices()).collect();
    order.sort_by(|&a, &b| hk.prob.get(0, b).unwrap().total_cmp(&hk.prob.get(0, a).unwrap()).then(a.cmp(&b)));
    let ek = empirical_kernel(&field, &speed, t, o, 100_000, 13).unwrap();
    let mut worst: f64 = 0.0;
    for &v in &order[..20] {
        let z = (ek.density[v] - hk.density.get(0, v).unwrap()) / ek.stderr[v];
        worst = worst.max(z.abs());
    }
    verdict(worst <= 3.0, format!("max |z| {worst:.2} over 20 vertices"))
}

fn sigma_identities() -> Check {
    let unit = ConductanceLaw::Constant { value: 1.0 };
    let spec = |law: ConductanceLaw, speed: SpeedSpec, seed| EnsembleSpec { d: 2, side: 201, law, speed, n_envs: 10, paths_per_env: 2000, seed };
    let z_max = |s: &Vec<Vec<f64>>, se: &Vec<Vec<f64>>, target: f64| {
        let mut w: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { target } else { 0.0 };
                w = w.max(((s[i][j] - want) / se[i][j]).abs());
            }
        }
        w
    };
    let v = estimate_sigma(&spec(unit.clone(), SpeedSpec::Vsrw, 1), 50.0).unwrap();
    let zv = z_max(&v.sigma2, &v.sigma2_stderr, 2.0);
    let c = estimate_sigma(&spec(unit, SpeedSpec::Csrw, 2), 50.0).unwrap();
    let zc = z_max(&c.sigma2, &c.sigma2_stderr, 0.5);
    let r = estimate_sigma(&spec(log_uniform(), SpeedSpec::Custom { law: ConductanceLaw::Uniform { a: 0.5, b: 2.0 }, seed: 3 }, 3), 50.0).unwrap();
    let pred = r.predicted();
    let rel = (0..2).map(|i| (r.sigma2[i][i] / pred[i][i] - 1.0).abs()).fold(0.0, f64::max);
    verdict(zv <= 3.0 && zc <= 3.0 && rel <= 0.05, format!("VSRW |z| {zv:.2}, CSRW |z| {zc:.2}, random speed rel {:.2}%", 100.0 * rel))
}

fn window() -> LltWindow {
    LltWindow { k: 1.0, t1: 0.5, t2: 1.0 }
}

fn quenched_llt() -> Check {
    let start = Instant::now();
    let ns = [8, 16, 32];
    let w = window();
    let side = w.required_side(32);
    let mut details = Vec::new();
    let mut ok = true;
    for (name, law) in [("constant", ConductanceLaw::Constant { value: 1.0 }), ("log-uniform", log_uniform())] {
        let gk = gaussian_for(2, &law, &SpeedSpec::Vsrw, &None, None).unwrap();
        let field = sample_iid(torus(2, side), &law, 21).unwrap();
        let speed = make_speed(&field, &SpeedSpec::Vsrw).unwrap();
        let curve = quenched_curve(&field, &speed, &gk, &w, &ns, &SolverParams::default()).unwrap();
        let bound = 0.05 * gk.a * gk.k(w.t1, &[0.0, 0.0]).unwrap();
        let last = *curve.sup_error.last().unwrap();
        ok &= curve.strictly_decreasing() && last < bound;
        details.push(format!("{name} {:.2e}/{:.2e}/{:.2e} (bound {bound:.2e})", curve.sup_error[0], curve.sup_error[1], last));
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(600);
    verdict(ok, format!("{}, {:.0}s", details.join("; "), elapsed.as_secs_f64()))
}

fn annealed_llt() -> Check {
    let ns = [8, 16, 32];
    let w = window();
    let gk = gaussian_for(2, &log_uniform(), &SpeedSpec::Vsrw, &None, None).unwrap();
    let ens = StaticEnsemble { d: 2, law: log_uniform(), speed: SpeedSpec::Vsrw, m_envs: 16, seed: 31 };
    let s = annealed_curve(&ens, &gk, &w, &ns, &SolverParams::default()).unwrap();
    let dens = DynamicEnsemble { d: 2, spec: DynamicSpec::Resampling { law: log_uniform(), rate: 0.05 }, m_envs: 16, seed: 32 };
    let dyn_params = SolverParams { dt: 4.0, ..SolverParams::default() };
    let d = annealed_curve_dynamic(&dens, None, &w, &ns, &dyn_params).unwrap();
    let fmt = |e: &[f64]| e.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>().join("/");
    verdict(
        s.strictly_decreasing() && d.strictly_decreasing(),
        format!("static {}, dynamic {}", fmt(&s.sup_error), fmt(&d.sup_error)),
    )
}

fn diagonal_bounds() -> Check {
    let st = DiagBounds::default().compute(&ctx(Kind::DiagBounds)).unwrap();
    let dy = DiagBounds { dynamic: Some(DynamicSpec::Resampling { law: log_uniform(), rate: 0.05 }), ..DiagBounds::default() }
        .compute(&ctx(Kind::DiagBounds))
        .unwrap();
    let dev = |r: &rcmlab_cli::experiments::DiagRun| r.bounds.iter().map(|b| (b.upper_slope + 1.0).abs()).fold(0.0, f64::max);
    let low = |r: &rcmlab_cli::experiments::DiagRun| r.bounds.iter().map(|b| b.lower_const).fold(f64::INFINITY, f64::min);
    let (ds, dd) = (dev(&st), dev(&dy));
    let (ls, ld) = (low(&st), low(&dy));
    verdict(
        ds <= 0.1 && dd <= 0.1 && ls > 0.0 && ld > 0.0 && st.bounds.len() == 10 && dy.bounds.len() == 10,
        format!("slope deviation static {ds:.3} dynamic {dd:.3}; min lower const static {ls:.3} dynamic {ld:.3}"),
    )
}

fn oscillation() -> Check {
    let draws = Osc::default().compute(&ctx(Kind::Osc)).unwrap();
    let below = draws.iter().filter(|d| d.record.gamma.is_some_and(|g| g < 1.0)).count();
    let rho_ok = draws.iter().all(|d| d.record.rho.is_some_and(|r| r > 0.0));
    let gmax = draws.iter().filter_map(|d| d.record.gamma).fold(0.0, f64::max);
    verdict(
        draws.len() == 40 && below as f64 >= 0.95 * 40.0 && rho_ok,
        format!("gamma < 1 in {below}/{} draws (max {gmax:.3}), rho positive: {rho_ok}", draws.len()),
    )
}

fn rational(x: f64) -> BigRational {
    BigRational::from_float(x).unwrap()
}

/// Bundle exponents recomputed in exact rational arithmetic.
fn exact_bundle(d: usize, p: f64, q: f64, r: f64) -> Vec<(&'static str, Option<BigRational>)> {
    let one = BigRational::one();
    let two = BigRational::from_integer(BigInt::from(2));
    let dd = BigRational::from_integer(BigInt::from(d));
    let (p, q, r) = (rational(p), rational(q), rational(r));
    let p_star = &p / (&p - &one);
    let r_star = &r / (&r - &one);
    let rho = &q * &dd / (&q * (&dd - &two) + &dd);
    let gap = &rho - &p_star * &r_star;
    let (kappa, kappa_s) = if gap > BigRational::zero() {
        (Some(&one + &p_star * &rho / (&two * &gap)), Some(&p_star + &p_star * &p_star * &rho / &gap))
    } else {
        (None, None)
    };
    let alpha = (&one / &p_star) * (&one + (&one - &one / &rho) * (&q / (&q + &one)));
    let kappa_d = (alpha > one).then(|| &alpha * &alpha * &p_star / (&alpha - &one));
    let vartheta = &one / (&two * &alpha * &p_star);
    vec![
        ("p_star", Some(p_star)),
        ("r_star", Some(r_star)),
        ("rho", Some(rho)),
        ("kappa", kappa),
        ("kappa_prime_static", kappa_s),
        ("alpha", Some(alpha)),
        ("kappa_prime_dyn", kappa_d),
        ("vartheta", Some(vartheta)),
    ]
}

fn inequality_suite() -> Check {
    let report = calibrate(&CalibrationSpec::default()).unwrap();
    let values = [1.5, 2.0, 3.0, 4.0, 7.0, 10.0, 16.5];
    let mut worst: f64 = 0.0;
    let mut mismatched = 0;
    for d in 2..=4 {
        for &p in &values {
            for &q in &values {
                for &r in &values {
                    let b = exponents(d, Exponent(p), Exponent(q), Exponent(r), None).unwrap();
                    let got = [
                        Some(b.p_star),
                        Some(b.r_star),
                        Some(b.rho),
                        b.kappa,
                        b.kappa_prime_static,
                        Some(b.alpha),
                        b.kappa_prime_dyn,
                        Some(b.vartheta),
                    ];
                    for ((_, want), got) in exact_bundle(d, p, q, r).into_iter().zip(got) {
                        match (want, got) {
                            (Some(w), Some(g)) => {
                                let diff = (rational(g) - &w).to_f64().unwrap().abs() / w.to_f64().unwrap().abs().max(1.0);
                                worst = worst.max(diff);
                            }
                            (None, None) => {}
                            _ => mismatched += 1,
                        }
                    }
                }
            }
        }
    }
    let residual = cbar_residual(cbar()).abs();
    verdict(
        report.pass() && worst <= 1e-12 && mismatched == 0 && residual < 1e-12,
        format!(
            "calibration pooled {:.3} pass {}; exponent error {worst:.1e}, {mismatched} mismatches; cbar residual {residual:.1e}",
            report.pooled_fraction,
            report.pass()
        ),
    )
}

fn gl_gaussian() -> Check {
    let start = Instant::now();
    let cfg = GlCov {
        side: 9,
        potential: PotentialSpec::Quadratic { stiffness: 1.0 },
        chains: 60,
        dt: Some(0.0025),
        t_end: 200.0,
        exact_start: true,
        decay_times: vec![],
        ..GlCov::default()
    };
    let run = cfg.compute(&ctx(Kind::GlCov)).unwrap();
    let z = run.z_scores.iter().map(|z| z.abs()).fold(0.0, f64::max);
    let hs = run.rows.iter().map(|r| (r.cov_hs.unwrap() - r.target.unwrap()).abs()).fold(0.0, f64::max);
    let elapsed = start.elapsed();
    verdict(
        z <= 3.0 && hs <= 1e-6 && elapsed < Duration::from_secs(300),
        format!("max |z| {z:.2}, kernel integral error {hs:.1e}, {:.0}s", elapsed.as_secs_f64()),
    )
}

fn gl_anharmonic() -> Check {
    let cfg = GlCov { dt: Some(0.0025), ..GlCov::default() };
    assert_eq!(cfg.points, vec![
        CovPoint { t: 1.0, x: vec![0, 0, 0] },
        CovPoint { t: 1.0, x: vec![1, 0, 0] },
        CovPoint { t: 4.0, x: vec![0, 0, 0] },
    ]);
    let run = cfg.compute(&ctx(Kind::GlCov)).unwrap();
    let z = run.z_scores.iter().map(|z| z.abs()).fold(0.0, f64::max);
    let bl = run.brascamp_lieb.as_ref().is_some_and(|b| b.pass);
    let slope = run.decay_slope.unwrap_or(f64::INFINITY);
    let min_omega = run.min_omega.unwrap_or(0.0);
    verdict(
        z <= 3.0 && bl && slope <= 1.0 - 1.5 + 0.15 && min_omega >= 2.0,
        format!("max |z| {z:.2}, Brascamp-Lieb {bl}, decay exponent {slope:.2}, min omega {min_omega}"),
    )
}

fn cov_scaling() -> Check {
    let curve = cov_scaling_curve(&Potential::new(PotentialSpec::Quadratic { stiffness: 1.0 }).unwrap(), &[0.0; 3], 1.0, &[2, 4, 8]).unwrap();
    let errs: Vec<f64> = curve.points.iter().map(|p| p.rel_error).collect();
    verdict(
        curve.errors_decreasing() && errs[2] < 0.15,
        format!("relative errors {}", errs.iter().map(|e| format!("{e:.4}")).collect::<Vec<_>>().join("/")),
    )
}

fn gff() -> Check {
    let spec = GffSpec {
        f: TestFunction::Bump { radius: 1.0 },
        lambdas: (-4..=4).map(|i| 2.0 * i as f64).collect(),
        ns: vec![2, 4, 8],
        n_samples: 20000,
        seed: 41,
    };
    let rec = gff_test(&Potential::new(PotentialSpec::Quadratic { stiffness: 1.0 }).unwrap(), &spec).unwrap();
    let last = rec.levels.last().unwrap();
    let at_zero = rec.levels.iter().flat_map(|l| &l.laplace).filter(|p| p.lambda == 0.0).all(|p| p.estimate == 1.0);
    let r2 = rec.levels.iter().map(|l| l.r2).fold(1.0, f64::min);
    verdict(
        last.rel_error < 0.1 && at_zero && r2 > 0.999,
        format!("variance error at n=8 {:.2}%, lambda=0 exact {at_zero}, min R^2 {r2:.5}", 100.0 * last.rel_error),
    )
}

fn run_cli(kind: &str, cfg: &Path, out: &Path, jobs: &str) -> Vec<(String, Vec<u8>)> {
    let status = Command::new(env!("CARGO_BIN_EXE_rcmlab"))
        .args([kind, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--jobs", jobs])
        .output()
        .unwrap();
    assert!(status.status.success(), "{kind}: {}", String::from_utf8_lossy(&status.stderr));
    let mut files: Vec<_> = std::fs::read_dir(out)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("walk", r#"{"master_seed":5,"params":{"side":21,"n_paths":16,"t_end":8}}"#),
        ("hk-solve", r#"{"params":{"side":21,"dynamic":{"kind":"resampling","law":{"kind":"uniform","a":0.5,"b":2},"rate":0.5}}}"#),
        ("llt-annealed", r#"{"params":{"n_list":[4,8],"m_envs":4}}"#),
        ("sigma", r#"{"params":{"side":101,"n_envs":4,"paths_per_env":200,"t":20}}"#),
        ("diag-bounds", r#"{"params":{"n_envs":3,"times":[2,4,8]}}"#),
        ("gl-cov", r#"{"params":{"side":3,"chains":4,"t_end":40,"dt":0.005}}"#),
        ("gl-gff", r#"{"params":{"n_samples":500,"n_list":[2,4]}}"#),
    ];
    let mut bad = Vec::new();
    for (kind, body) in cases {
        let cfg = dir.path().join(format!("{kind}.json"));
        std::fs::write(&cfg, body).unwrap();
        let a = run_cli(kind, &cfg, &dir.path().join(format!("{kind}-1")), "1");
        let b = run_cli(kind, &cfg, &dir.path().join(format!("{kind}-8")), "8");
        let c = run_cli(kind, &cfg, &dir.path().join(format!("{kind}-8b")), "8");
        if a != b || b != c {
            bad.push(kind);
        }
    }
    verdict(bad.is_empty(), format!("{} experiments, jobs 1/8/8 byte-identical; differing: {bad:?}", cases.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 14] = [
        ("solver oracle", solver_oracle),
        ("kernel properties", kernel_properties),
        ("Monte Carlo vs solver", mc_vs_solver),
        ("diffusivity identities", sigma_identities),
        ("quenched local limit", quenched_llt),
        ("annealed local limit", annealed_llt),
        ("diagonal bounds", diagonal_bounds),
        ("oscillation decay", oscillation),
        ("inequality suite", inequality_suite),
        ("Gaussian interface oracle", gl_gaussian),
        ("anharmonic interface", gl_anharmonic),
        ("covariance scaling", cov_scaling),
        ("free field scaling", gff),
        ("determinism", determinism),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if only.is_some_and(|k| k != i + 1) {
            continue;
        }
        let start = Instant::now();
        let result = std::panic::catch_unwind(f).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(d) => println!("criterion {:>2} PASS {name}: {d} [{secs:.1}s]", i + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name}: {d} [{secs:.1}s]", i + 1);
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} criteria failed");
        std::process::exit(1);
    }
}
