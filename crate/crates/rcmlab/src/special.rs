//! Poisson weights for uniformization, scaled modified Bessel functions,
//! quadrature helpers and small statistics utilities.

use crate::{Error, Result};

/// Largest Poisson mean accepted by the uniformization solvers.
pub const MAX_POISSON_MEAN: f64 = 1e6;

/// Truncated Poisson(m) probabilities `w[k - left]` for `left <= k <= right`,
/// with an upper bound on the discarded mass.
#[derive(Clone, Debug)]
pub struct PoissonWeights {
    pub left: usize,
    pub weights: Vec<f64>,
    pub tail_bound: f64,
}

impl PoissonWeights {
    pub fn right(&self) -> usize {
        self.left + self.weights.len() - 1
    }

    pub fn get(&self, k: usize) -> f64 {
        if k < self.left {
            0.0
        } else {
            self.weights.get(k - self.left).copied().unwrap_or(0.0)
        }
    }
}

fn ln_factorial(k: usize) -> f64 {
    if k < 20 {
        (2..=k).map(|i| (i as f64).ln()).sum()
    } else {
        let x = k as f64;
        x * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI * x).ln() + 1.0 / (12.0 * x) - 1.0 / (360.0 * x.powi(3))
            + 1.0 / (1260.0 * x.powi(5))
    }
}

/// `ln P(N = k)` for `N ~ Poisson(m)`, accurate near the mode.
fn ln_poisson_pmf(m: f64, k: usize) -> f64 {
    if k == 0 {
        return -m;
    }
    if k < 20 {
        return k as f64 * m.ln() - m - ln_factorial(k);
    }
    let x = k as f64;
    // k ln(m/k) + k - m - (ln k! - k ln k + k)
    x * ((m - x) / x).ln_1p() + (x - m) - 0.5 * (2.0 * std::f64::consts::PI * x).ln() - 1.0 / (12.0 * x)
        + 1.0 / (360.0 * x.powi(3))
        - 1.0 / (1260.0 * x.powi(5))
}

pub fn poisson_weights(m: f64, eps: f64) -> Result<PoissonWeights> {
    if !(m >= 0.0) || !m.is_finite() {
        return Err(Error::invalid("poisson mean", format!("{m}")));
    }
    if m > MAX_POISSON_MEAN {
        return Err(Error::PoissonOverflow(m));
    }
    if m == 0.0 {
        return Ok(PoissonWeights { left: 0, weights: vec![1.0], tail_bound: 0.0 });
    }
    let mode = m.floor() as usize;
    let w_mode = ln_poisson_pmf(m, mode).exp();
    // Right side: stop once the geometric bound on the remaining tail is below eps/2.
    let mut right = vec![w_mode];
    let mut k = mode;
    let right_tail = loop {
        let next = right.last().unwrap() * m / (k + 1) as f64;
        let ratio = m / (k + 2) as f64;
        let bound = if ratio < 1.0 { next / (1.0 - ratio) } else { f64::INFINITY };
        if bound < 0.5 * eps {
            break bound;
        }
        right.push(next);
        k += 1;
    };
    // Left side: the ratio k/m < 1 going down, same geometric bound.
    let mut left = Vec::new();
    let mut k = mode;
    let mut w = w_mode;
    let left_tail = loop {
        if k == 0 {
            break 0.0;
        }
        let prev = w * k as f64 / m;
        let ratio = (k - 1) as f64 / m;
        let bound = prev / (1.0 - ratio);
        if bound < 0.5 * eps {
            break bound;
        }
        left.push(prev);
        w = prev;
        k -= 1;
    };
    let lo = mode - left.len();
    left.reverse();
    left.extend(right);
    Ok(PoissonWeights { left: lo, weights: left, tail_bound: left_tail + right_tail })
}

/// `exp(-z) I_k(z)` for integer order and `z >= 0`.
pub fn bessel_i_scaled(k: u32, z: f64) -> f64 {
    assert!(z >= 0.0, "bessel argument must be nonnegative");
    let kf = k as f64;
    if z == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if z < 25.0 {
        let h = 0.5 * z;
        let mut term = (kf * h.ln() - ln_factorial(k as usize)).exp();
        let mut sum = term;
        let mut m = 0.0;
        while term > 1e-18 * sum {
            m += 1.0;
            term *= h * h / (m * (m + kf));
            sum += term;
        }
        return sum * (-z).exp();
    }
    if z > 60.0_f64.max(2.0 * kf * kf) {
        let mu = 4.0 * kf * kf;
        let mut term = 1.0;
        let mut sum = 1.0;
        for j in 1..40 {
            let jf = j as f64;
            let next = -term * (mu - (2.0 * jf - 1.0).powi(2)) / (jf * 8.0 * z);
            if next.abs() > term.abs() {
                break;
            }
            term = next;
            sum += term;
            if term.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        return sum / (2.0 * std::f64::consts::PI * z).sqrt();
    }
    // Periodic trapezoid rule for (1/2pi) int exp(z(cos t - 1)) cos(kt) dt.
    let n = (kf + 9.0 * z.sqrt() + 16.0).ceil() as usize;
    let mut sum = 0.0;
    for j in 0..n {
        let t = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
        sum += (z * (t.cos() - 1.0)).exp() * (kf * t).cos();
    }
    sum / n as f64
}

/// Integral of `f` over `[a, b]` by double-exponential quadrature.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    quadrature::double_exponential::integrate(f, a, b, tol).integral
}

/// Integral of `f` over `[a, inf)` through the substitution
/// `x = a + (s/(1-s))^2`, which keeps `x^{-3/2}` tails smooth.
pub fn integrate_to_inf(f: impl Fn(f64) -> f64, a: f64, tol: f64) -> f64 {
    integrate(
        |s| {
            if s >= 1.0 {
                return 0.0;
            }
            let r = s / (1.0 - s);
            let x = a + r * r;
            let jac = 2.0 * s / (1.0 - s).powi(3);
            let v = f(x) * jac;
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        tol,
    )
}

/// Composite Simpson rule on a uniform grid (odd number of points), falling
/// back to the trapezoid rule for the last interval when the count is even.
pub fn simpson(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = if n % 2 == 1 { n } else { n - 1 };
    let mut s = 0.0;
    if m >= 3 {
        s = values[0] + values[m - 1];
        for (i, v) in values[1..m - 1].iter().enumerate() {
            s += if i % 2 == 0 { 4.0 * v } else { 2.0 * v };
        }
        s *= h / 3.0;
    }
    if m != n {
        s += 0.5 * h * (values[n - 2] + values[n - 1]);
    }
    s
}

/// Integral over `[a, b]` of the piecewise-linear interpolant of
/// `(times, values)`, clipped to the sampled range.
pub fn trapezoid_clipped(times: &[f64], values: &[f64], a: f64, b: f64) -> f64 {
    let mut acc = 0.0;
    for i in 1..times.len() {
        let (t0, t1) = (times[i - 1], times[i]);
        let lo = t0.max(a);
        let hi = t1.min(b);
        if hi <= lo {
            continue;
        }
        let lerp = |t: f64| values[i - 1] + (values[i] - values[i - 1]) * (t - t0) / (t1 - t0);
        acc += 0.5 * (lerp(lo) + lerp(hi)) * (hi - lo);
    }
    acc
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn stderr(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Least-squares line `y = a + b x`; returns `(a, b, r2)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (a, b, r2)
}

/// Standard error of the mean of a correlated series by batch means.
pub fn batch_means_stderr(xs: &[f64], n_batches: usize) -> f64 {
    let n_batches = n_batches.max(2).min(xs.len());
    let len = xs.len() / n_batches;
    let means: Vec<f64> = (0..n_batches).map(|b| mean(&xs[b * len..(b + 1) * len])).collect();
    stderr(&means)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn i0_series(z: f64) -> f64 {
        let mut term = 1.0;
        let mut s = 1.0;
        for m in 1..1000 {
            term *= (z / 2.0).powi(2) / (m as f64 * m as f64);
            s += term;
        }
        s
    }

    #[test]
    fn poisson_mass_and_tail() {
        for &m in &[0.3, 1.0, 7.5, 80.0, 3000.0, 2.5e5] {
            let w = poisson_weights(m, 1e-12).unwrap();
            let total: f64 = w.weights.iter().sum();
            assert!(total <= 1.0 + 1e-12, "m={m} total={total}");
            assert!(1.0 - total <= 1e-12 + 1e-13, "m={m} missing {}", 1.0 - total);
            assert!(w.tail_bound < 1e-12);
            let mean: f64 = w.weights.iter().enumerate().map(|(i, p)| (w.left + i) as f64 * p).sum();
            assert!((mean - m).abs() < 1e-9 * m.max(1.0));
        }
        assert!(matches!(poisson_weights(2e6, 1e-12), Err(Error::PoissonOverflow(_))));
    }

    #[test]
    fn bessel_regimes_agree() {
        for &z in &[0.5f64, 4.0, 24.0, 26.0, 70.0, 300.0] {
            let series = (-z).exp() * i0_series(z);
            assert!((bessel_i_scaled(0, z) - series).abs() < 1e-13, "z={z}");
        }
        // Recurrence I_{k-1} - I_{k+1} = (2k/z) I_k across regime boundaries.
        for &z in &[3.0, 30.0, 90.0, 1000.0] {
            for k in 1..8u32 {
                let lhs = bessel_i_scaled(k - 1, z) - bessel_i_scaled(k + 1, z);
                let rhs = 2.0 * k as f64 / z * bessel_i_scaled(k, z);
                assert!((lhs - rhs).abs() < 1e-12, "z={z} k={k}");
            }
        }
    }

    #[test]
    fn quadrature_helpers() {
        let v = integrate_to_inf(|x| (-x).exp(), 0.0, 1e-12);
        assert!((v - 1.0).abs() < 1e-10);
        let xs: Vec<f64> = (0..=10).map(|i| (i as f64 * 0.1).powi(3)).collect();
        assert!((simpson(&xs, 0.1) - 0.25).abs() < 1e-14);
        let t = [0.0, 1.0, 2.0];
        let y = [0.0, 1.0, 2.0];
        assert!((trapezoid_clipped(&t, &y, 0.5, 1.5) - 1.0).abs() < 1e-15);
    }
}
