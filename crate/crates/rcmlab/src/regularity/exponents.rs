use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result};

/// An integrability exponent in `(0, inf]`. Infinity is kept symbolic and
/// serialized as the string `"inf"`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Exponent(pub f64);

impl Exponent {
    pub const INF: Exponent = Exponent(f64::INFINITY);

    pub fn is_inf(self) -> bool {
        self.0.is_infinite()
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `1/p`, zero at infinity.
    pub fn recip(self) -> f64 {
        if self.is_inf() {
            0.0
        } else {
            1.0 / self.0
        }
    }

    /// Hoelder conjugate `p/(p-1)`; the conjugate of infinity is 1.
    pub fn conj(self) -> f64 {
        if self.is_inf() {
            1.0
        } else {
            self.0 / (self.0 - 1.0)
        }
    }

    pub fn require_above_one(self, name: &str) -> Result<()> {
        if self.0 > 1.0 {
            Ok(())
        } else {
            Err(Error::invalid(name, format!("exponent {} must exceed 1", self.0)))
        }
    }
}

impl From<f64> for Exponent {
    fn from(v: f64) -> Self {
        Exponent(v)
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_inf() {
            write!(f, "inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.is_inf() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Exponent(v)),
            Raw::Str(s) if matches!(s.as_str(), "inf" | "infinity" | "Infinity") => Ok(Exponent::INF),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("expected number or \"inf\", got {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub n: f64,
    pub delta: f64,
    pub sigma: f64,
    pub sigma_prime: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScheduleValues {
    pub k_n: i64,
    pub beta_n: f64,
}

/// Every exponent derived from `(d, p, q, r)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExponentBundle {
    pub d: usize,
    pub p: Exponent,
    pub q: Exponent,
    pub r: Exponent,
    pub p_star: f64,
    pub r_star: f64,
    pub rho: f64,
    /// `None` when `rho <= p* r*`, i.e. when the static condition fails.
    pub kappa: Option<f64>,
    pub kappa_prime_static: Option<f64>,
    pub alpha: f64,
    /// `None` unless `alpha > 1`.
    pub kappa_prime_dyn: Option<f64>,
    pub vartheta: f64,
    pub static_condition: bool,
    pub dynamic_condition: bool,
    pub schedule: Option<ScheduleValues>,
}

pub fn rho(d: usize, q: Exponent) -> f64 {
    let d = d as f64;
    if q.is_inf() {
        if d == 2.0 {
            f64::INFINITY
        } else {
            d / (d - 2.0)
        }
    } else {
        q.0 * d / (q.0 * (d - 2.0) + d)
    }
}

/// `1/r + (1/p)(r-1)/r + 1/q < 2/d`.
pub fn static_condition(d: usize, p: Exponent, q: Exponent, r: Exponent) -> bool {
    r.recip() + p.recip() * (1.0 - r.recip()) + q.recip() < 2.0 / d as f64
}

/// `1/(p-1) + 1/((p-1) q) + 1/q < 2/d`.
pub fn dynamic_condition(d: usize, p: Exponent, q: Exponent) -> bool {
    let a = if p.is_inf() { 0.0 } else { 1.0 / (p.0 - 1.0) };
    a + a * q.recip() + q.recip() < 2.0 / d as f64
}

pub fn schedule_values(vartheta: f64, s: &Schedule) -> Result<ScheduleValues> {
    if s.sigma <= s.sigma_prime {
        return Err(Error::invalid("sigma_prime", format!("sigma {} must exceed sigma' {}", s.sigma, s.sigma_prime)));
    }
    let k_n = ((s.delta * s.n.ln() - (s.sigma - s.sigma_prime).ln()) / std::f64::consts::LN_2).floor() as i64;
    let mut beta_n = 0.0;
    let mut pow = 1.0;
    for _ in 0..k_n.max(0) {
        beta_n += pow;
        pow *= 1.0 - vartheta;
    }
    Ok(ScheduleValues { k_n, beta_n: vartheta * beta_n })
}

pub fn exponents(d: usize, p: Exponent, q: Exponent, r: Exponent, schedule: Option<&Schedule>) -> Result<ExponentBundle> {
    if d < 2 {
        return Err(Error::invalid("d", "dimension must be at least 2"));
    }
    p.require_above_one("p")?;
    q.require_above_one("q")?;
    r.require_above_one("r")?;
    let p_star = p.conj();
    let r_star = r.conj();
    let rho = rho(d, q);
    let inv_rho = if rho.is_infinite() { 0.0 } else { 1.0 / rho };
    let gap = rho - p_star * r_star;
    let (kappa, kappa_prime_static) = if gap > 0.0 {
        if rho.is_infinite() {
            (Some(1.0 + p_star / 2.0), Some(p_star + p_star * p_star))
        } else {
            (
                Some(1.0 + p_star * rho / (2.0 * gap)),
                Some(p_star + p_star * p_star * rho / gap),
            )
        }
    } else {
        (None, None)
    };
    let q_frac = if q.is_inf() { 1.0 } else { q.0 / (q.0 + 1.0) };
    let alpha = 1.0 / p_star + (1.0 / p_star) * (1.0 - inv_rho) * q_frac;
    let kappa_prime_dyn = (alpha > 1.0).then(|| alpha * alpha * p_star / (alpha - 1.0));
    let vartheta = 1.0 / (2.0 * alpha * p_star);
    let schedule = schedule.map(|s| schedule_values(vartheta, s)).transpose()?;
    Ok(ExponentBundle {
        d,
        p,
        q,
        r,
        p_star,
        r_star,
        rho,
        kappa,
        kappa_prime_static,
        alpha,
        kappa_prime_dyn,
        vartheta,
        static_condition: static_condition(d, p, q, r),
        dynamic_condition: dynamic_condition(d, p, q),
        schedule,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(v: f64) -> Exponent {
        Exponent(v)
    }

    #[test]
    fn worked_values() {
        assert!((rho(3, e(2.0)) - 1.2).abs() < 1e-15);
        assert_eq!(Exponent::INF.conj(), 1.0);
        let b = exponents(2, e(4.0), e(4.0), e(4.0), None).unwrap();
        assert!(b.static_condition);
        assert!((b.rho - 4.0).abs() < 1e-15);
        assert!((b.kappa.unwrap() - 2.2).abs() < 1e-12);
        let b = exponents(3, e(2.0), e(2.0), e(2.0), None).unwrap();
        assert!(!b.static_condition);
        assert!(b.kappa.is_none());
        let b = exponents(2, Exponent::INF, Exponent::INF, Exponent::INF, None).unwrap();
        assert!(b.static_condition && b.dynamic_condition);
        assert_eq!(b.kappa, Some(1.5));
    }

    #[test]
    fn guard_on_degenerate_gap() {
        // d=3, q=3: rho = 9/6 = 1.5 and p* r* = 1.5 for p=inf, r=3.
        let b = exponents(3, Exponent::INF, e(3.0), e(3.0), None).unwrap();
        assert!(b.kappa.is_none());
        assert!(!b.static_condition);
        assert!(exponents(2, e(1.0), e(2.0), e(2.0), None).is_err());
    }

    #[test]
    fn serde_roundtrip() {
        let v: Vec<Exponent> = serde_json::from_str(r#"[2.5, "inf"]"#).unwrap();
        assert_eq!(v, vec![e(2.5), Exponent::INF]);
        assert_eq!(serde_json::to_string(&v).unwrap(), r#"[2.5,"inf"]"#);
    }
}
