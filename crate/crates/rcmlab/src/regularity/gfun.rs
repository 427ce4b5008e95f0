//! A C^1 convex surrogate for `(-ln z)_+`.

use std::sync::OnceLock;

use crate::{Error, Result};

/// `2c ln(1/c) - (1 - c)`.
pub fn cbar_residual(c: f64) -> f64 {
    2.0 * c * (1.0 / c).ln() - (1.0 - c)
}

/// Smallest root of `2c ln(1/c) = 1 - c`, located by bisection on `[1/4, 1/3]`.
pub fn cbar() -> f64 {
    static CBAR: OnceLock<f64> = OnceLock::new();
    *CBAR.get_or_init(|| {
        let (mut lo, mut hi) = (0.25f64, 1.0f64 / 3.0);
        debug_assert!(cbar_residual(lo) < 0.0 && cbar_residual(hi) > 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if cbar_residual(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if cbar_residual(lo).abs() <= cbar_residual(hi).abs() {
            lo
        } else {
            hi
        }
    })
}

pub fn g_function(z: f64) -> Result<f64> {
    if !(z > 0.0) {
        return Err(Error::invalid("z", format!("{z} must be positive")));
    }
    let c = cbar();
    Ok(if z <= c {
        -z.ln()
    } else if z <= 1.0 {
        (z - 1.0).powi(2) / (2.0 * c * (1.0 - c))
    } else {
        0.0
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cbar_root() {
        let c = cbar();
        assert!(cbar_residual(c).abs() < 1e-12);
        assert!((c - 0.284_668_137_040_838).abs() < 1e-12);
        assert!((-c.ln() - (1.0 - c) / (2.0 * c)).abs() < 1e-12);
    }

    #[test]
    fn shape() {
        assert_eq!(g_function(1.5).unwrap(), 0.0);
        assert!(g_function(0.0).is_err());
        let c = cbar();
        // Continuity and matching slopes at cbar and at 1.
        let h = 1e-7;
        let g = |z| g_function(z).unwrap();
        assert!((g(c - h) - g(c + h)).abs() < 1e-6);
        assert!(((g(c) - g(c - h)) / h - (g(c + h) - g(c)) / h).abs() < 1e-4);
        assert!((g(1.0 + h) - g(1.0 - h)).abs() < 1e-12);
        let zs: Vec<f64> = (0..400).map(|i| 10f64.powf(-3.0 + i as f64 * 0.01)).collect();
        for w in zs.windows(3) {
            assert!(g(w[1]) <= g(w[0]) + 1e-15);
            let (h1, h2) = (w[1] - w[0], w[2] - w[1]);
            let second = (g(w[2]) - g(w[1])) / h2 - (g(w[1]) - g(w[0])) / h1;
            assert!(second >= -1e-9, "convexity at {}", w[1]);
        }
    }
}
