use rcmlab_web::{gl_snapshot, gl_snapshot_js, heat_kernel_field, heat_kernel_field_js, llt_curve};
use serde_json::Value;

fn grid(v: &Value) -> Vec<Vec<f64>> {
    v["values"].as_array().unwrap().iter().map(|r| r.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()).collect()
}

#[test]
fn heat_kernel_is_a_distribution() {
    let v = heat_kernel_field(21, 0.5, 2.0, 3.0, 1).unwrap();
    let g = grid(&v);
    assert_eq!(g.len(), 21);
    assert!(g.iter().all(|r| r.len() == 21));
    let mass: f64 = g.iter().flatten().sum();
    assert!((mass - 1.0).abs() < 1e-10);
    assert!(g.iter().flatten().all(|&p| p >= 0.0));
    assert_eq!(v["max"].as_f64().unwrap(), g.iter().flatten().cloned().fold(0.0, f64::max));
}

#[test]
fn constant_field_is_symmetric() {
    let g = grid(&heat_kernel_field(11, 1.0, 1.0, 1.0, 0).unwrap());
    for y in 0..11 {
        for x in 0..11 {
            assert!((g[y][x] - g[x][y]).abs() < 1e-14);
            assert!((g[y][x] - g[10 - y][x]).abs() < 1e-14);
        }
    }
}

#[test]
fn llt_curve_decreases() {
    let v = llt_curve(1.0, 1.0, &[2, 4, 8], 0).unwrap();
    assert!(v["decreasing"].as_bool().unwrap());
    assert_eq!(v["n"].as_array().unwrap().len(), 3);
    assert!(llt_curve(1.0, 1.0, &[4, 2], 0).is_err());
    assert!(llt_curve(1.0, 1.0, &[64], 0).is_err());
}

#[test]
fn snapshot_vanishes_outside_and_is_seeded() {
    let a = gl_snapshot(9, 0.0, 3).unwrap();
    let b = gl_snapshot(9, 0.0, 3).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, gl_snapshot(9, 0.0, 4).unwrap());
    assert_eq!(grid(&a).len(), 9);
    let anh = gl_snapshot(7, 0.1, 1).unwrap();
    assert!(anh["max_abs"].as_f64().unwrap().is_finite());
}

#[test]
fn wrappers_return_json_or_message() {
    let s = gl_snapshot_js(5, 0.0, 2).unwrap();
    let v: Value = serde_json::from_str(&s).unwrap();
    assert_eq!(v["side"], 5);
    assert!(heat_kernel_field_js(10, 0.5, 2.0, 1.0, 0).is_err());
    assert!(heat_kernel_field_js(11, 0.5, 2.0, -1.0, 0).is_err());
    assert!(heat_kernel_field_js(11, 2.0, 0.5, 1.0, 0).is_err());
}
