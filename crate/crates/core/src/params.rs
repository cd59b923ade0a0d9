//! Problem parameters and the closed-form exponents derived from them.

use num_complex::Complex64;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// f(V) = |V|^{p-1} V
    #[default]
    Monotone,
    /// f(V) = |V|^p
    NonMonotone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn of_index(l: u32) -> Parity {
        if l % 2 == 0 {
            Parity::Even
        } else {
            Parity::Odd
        }
    }

    pub fn matches(self, l: u32) -> bool {
        Parity::of_index(l) == self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams {
    pub m: u32,
    pub n: u32,
    pub p: f64,
    pub alpha: f64,
    pub variant: Variant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedExponents {
    pub beta: f64,
    pub p0: f64,
    pub c1: f64,
    pub v_plus: f64,
    pub decay_power: f64,
}

impl ProblemParams {
    pub fn new(m: u32, n: u32, p: f64, alpha: f64, variant: Variant) -> Result<Self> {
        let params = ProblemParams { m, n, p, alpha, variant };
        params.validate()?;
        Ok(params)
    }

    pub fn monotone(m: u32, n: u32, p: f64, alpha: f64) -> Result<Self> {
        Self::new(m, n, p, alpha, Variant::Monotone)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 1 || self.n < 1 {
            return Err(Error::InvalidParams(format!("m = {}, N = {} must be >= 1", self.m, self.n)));
        }
        if !(self.p.is_finite() && self.p > 1.0) {
            return Err(Error::InvalidParams(format!("p = {} must exceed 1", self.p)));
        }
        if !(self.alpha.is_finite() && self.alpha > -1.0) {
            return Err(Error::InvalidParams(format!("alpha = {} must exceed -1", self.alpha)));
        }
        Ok(())
    }

    pub fn with_p(mut self, p: f64) -> Self {
        self.p = p;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn beta(&self) -> f64 {
        beta(self.p, self.alpha)
    }

    pub fn p0(&self) -> f64 {
        critical_p(0, self.m, self.n, self.alpha)
    }

    pub fn c1(&self) -> f64 {
        let m2 = 2.0 * self.m as f64;
        self.n as f64 * (self.p0() - self.p) / (m2 * (self.p - 1.0))
    }

    pub fn v_plus(&self) -> f64 {
        self.beta().powf(1.0 / (self.p - 1.0))
    }

    pub fn derived(&self) -> DerivedExponents {
        DerivedExponents {
            beta: self.beta(),
            p0: self.p0(),
            c1: self.c1(),
            v_plus: self.v_plus(),
            decay_power: decay_power(self.m),
        }
    }

    /// f(V) for this variant.
    #[inline]
    pub fn f(&self, v: f64) -> f64 {
        let a = v.abs();
        match self.variant {
            Variant::Monotone => a.powf(self.p - 1.0) * v,
            Variant::NonMonotone => a.powf(self.p),
        }
    }

    /// f'(V).
    #[inline]
    pub fn df(&self, v: f64) -> f64 {
        let a = v.abs();
        match self.variant {
            Variant::Monotone => self.p * a.powf(self.p - 1.0),
            Variant::NonMonotone => self.p * a.powf(self.p - 1.0) * v.signum(),
        }
    }

    /// ∂f/∂p.
    #[inline]
    pub fn df_dp(&self, v: f64) -> f64 {
        let a = v.abs();
        if a == 0.0 {
            return 0.0;
        }
        self.f(v) * a.ln()
    }
}

pub fn beta(p: f64, alpha: f64) -> f64 {
    (1.0 + alpha) / (p - 1.0)
}

/// p_l = 1 + 2m(1+α)/(N+l).
pub fn critical_p(l: u32, m: u32, n: u32, alpha: f64) -> f64 {
    1.0 + 2.0 * m as f64 * (1.0 + alpha) / (n as f64 + l as f64)
}

/// α_l = (p-1)(N+l)/(2m) - 1.
pub fn critical_alpha(l: u32, m: u32, n: u32, p: f64) -> f64 {
    (p - 1.0) * (n as f64 + l as f64) / (2.0 * m as f64) - 1.0
}

pub fn decay_power(m: u32) -> f64 {
    let m2 = 2.0 * m as f64;
    m2 / (m2 - 1.0)
}

pub type Rational = Ratio<i64>;

/// Exact p_l for rational α.
pub fn critical_p_exact(l: u32, m: u32, n: u32, alpha: Rational) -> Rational {
    let one = Rational::from_integer(1);
    one + Rational::from_integer(2 * m as i64) * (one + alpha) / Rational::from_integer(n as i64 + l as i64)
}

/// Exact α_l for rational p.
pub fn critical_alpha_exact(l: u32, m: u32, n: u32, p: Rational) -> Rational {
    let one = Rational::from_integer(1);
    (p - one) * Rational::from_integer(n as i64 + l as i64) / Rational::from_integer(2 * m as i64) - one
}

/// Number of l of the given parity with α_l ≤ alpha_max.
pub fn count_basic_profiles(alpha_max: f64, parity: Parity, m: u32, n: u32, p: f64) -> usize {
    if alpha_max <= -1.0 {
        return 0;
    }
    let tol = 1e-12 * alpha_max.abs().max(1.0);
    let mut count = 0;
    let mut l = 0u32;
    while critical_alpha(l, m, n, p) <= alpha_max + tol {
        if parity.matches(l) {
            count += 1;
        }
        l += 1;
    }
    count
}

/// Pohozaev ratio γ₀ = (3p+5)/(4(p+1)).
pub fn gamma0(p: f64) -> f64 {
    (3.0 * p + 5.0) / (4.0 * (p + 1.0))
}

/// Far-field rates for m = 2: V ~ e^{a y^{4/3}} with a³ = (1/4)(3/4)³.
pub fn wkbj_rates(m: u32) -> Result<(f64, [Complex64; 2])> {
    if m != 2 {
        return Err(Error::UnsupportedOrder(m));
    }
    let a0 = 0.75 * 4f64.powf(-1.0 / 3.0);
    let s = 3f64.sqrt() / 2.0;
    Ok((a0, [Complex64::new(-0.5 * a0, s * a0), Complex64::new(-0.5 * a0, -s * a0)]))
}

/// Slowest decay rate d of e^{-d y^{2m/(2m-1)}} for general m, from the
/// frozen-coefficient balance of V^(2m) against yV'/(2m).
pub fn tail_decay_rate(m: u32) -> f64 {
    let m2 = 2.0 * m as f64;
    let q = decay_power(m);
    let a0 = (1.0 / (m2 * q.powf(m2 - 1.0))).powf(1.0 / (m2 - 1.0));
    let sign_neg = m % 2 == 1;
    let mut slowest = f64::NEG_INFINITY;
    for j in 0..(2 * m - 1) {
        let base = if sign_neg { std::f64::consts::PI } else { 0.0 };
        let theta = (base + 2.0 * std::f64::consts::PI * j as f64) / (m2 - 1.0);
        let re = a0 * theta.cos();
        if re < -1e-12 && re > slowest {
            slowest = re;
        }
    }
    -slowest
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_examples() {
        assert_eq!(beta(2.0, 0.0), 1.0);
        assert_eq!(beta(2.0, 4.0), 5.0);
        assert_eq!(beta(1.5, 7.0), 16.0);
    }

    #[test]
    fn critical_p_examples() {
        assert_eq!(critical_p(0, 2, 1, 1.0), 9.0);
        assert!((critical_p(2, 2, 1, 1.0) - 11.0 / 3.0).abs() < 1e-15);
        for n in 1..6 {
            assert!((critical_p(0, 1, n, 0.0) - (1.0 + 2.0 / n as f64)).abs() < 1e-15);
        }
    }

    #[test]
    fn rational_path() {
        let r = |a, b| Rational::new(a, b);
        assert_eq!(critical_p_exact(0, 2, 1, r(1, 1)), r(9, 1));
        assert_eq!(critical_p_exact(1, 2, 1, r(1, 1)), r(5, 1));
        assert_eq!(critical_p_exact(2, 2, 1, r(1, 1)), r(11, 3));
        assert_eq!(critical_alpha_exact(0, 2, 1, r(2, 1)), r(-3, 4));
        assert_eq!(critical_alpha_exact(18, 2, 1, r(2, 1)), r(15, 4));
    }

    #[test]
    fn critical_alpha_examples() {
        assert_eq!(critical_alpha(0, 2, 1, 2.0), -0.75);
        assert_eq!(critical_alpha(18, 2, 1, 2.0), 3.75);
    }

    #[test]
    fn counts() {
        assert_eq!(count_basic_profiles(40.0, Parity::Even, 2, 1, 1.5), 164);
        assert_eq!(count_basic_profiles(4.0, Parity::Even, 2, 1, 2.0), 10);
        assert_eq!(count_basic_profiles(-1.0, Parity::Even, 2, 1, 2.0), 0);
        assert_eq!(count_basic_profiles(-1.0, Parity::Odd, 2, 1, 2.0), 0);
    }

    #[test]
    fn gamma0_examples() {
        assert!((gamma0(1.0 + 1e-12) - 1.0).abs() < 1e-11);
        assert_eq!(gamma0(3.0), 7.0 / 8.0);
        assert!((gamma0(1.5) - 0.95).abs() < 1e-15);
    }

    #[test]
    fn wkbj() {
        let (a0, [ap, am]) = wkbj_rates(2).unwrap();
        assert!((a0.powi(3) - 0.25 * 0.75f64.powi(3)).abs() < 1e-15);
        assert!((a0 - 0.47247).abs() < 1e-5);
        assert!((ap.re + 0.23623).abs() < 1e-5);
        assert!((ap.norm() - a0).abs() < 1e-14);
        assert_eq!(ap.conj(), am);
        assert!(matches!(wkbj_rates(3), Err(Error::UnsupportedOrder(3))));
        assert!((tail_decay_rate(2) - a0 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn derived_invariants() {
        let pp = ProblemParams::monotone(2, 1, 2.0, 4.0).unwrap();
        let d = pp.derived();
        assert_eq!(d.v_plus, 5.0);
        assert!((d.decay_power - 4.0 / 3.0).abs() < 1e-15);
        let at_p0 = pp.with_p(pp.p0());
        assert!(at_p0.c1().abs() < 1e-15);
        assert!((pp.c1() - (pp.beta() - 0.25)).abs() < 1e-12);
        assert!(ProblemParams::monotone(2, 1, 1.0, 0.0).is_err());
        assert!(ProblemParams::monotone(2, 1, 2.0, -1.0).is_err());
    }
}
