//! Poly-harmonic kernel F, eigenfunctions ψ_l = ((-1)^l/√l!) F^(l), adjoint
//! polynomials ψ*_l and the pairing quantities built from them (1D).

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{self, critical_p, tail_decay_rate};
use crate::quad::{composite_gl, trapezoid};

/// Gauss–Legendre rule for the Fourier integral of ξ^l e^{-ξ^{2m}}.
#[derive(Debug, Clone)]
pub struct KernelQuadrature {
    pub m: u32,
    pub xi_cutoff: f64,
    pub nodes: usize,
    pub panels: usize,
    xi: Vec<f64>,
    ln_xi: Vec<f64>,
    /// w_i e^{-ξ_i^{2m}}
    wexp: Vec<f64>,
}

/// Smallest ξ past the peak of ξ^l e^{-ξ^{2m}} where it drops to `rel` of the peak.
pub fn default_cutoff(m: u32, l: u32, rel: f64) -> f64 {
    let m2 = 2.0 * m as f64;
    let lf = l as f64;
    let g = |x: f64| if lf > 0.0 { lf * x.ln() - x.powf(m2) } else { -x.powf(m2) };
    let peak_x = if l > 0 { (lf / m2).powf(1.0 / m2) } else { 0.0 };
    let peak = if l > 0 { g(peak_x) } else { 0.0 };
    let target = peak + rel.ln();
    let (mut lo, mut hi) = (peak_x, peak_x + 1.0);
    while g(hi) > target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

impl KernelQuadrature {
    /// 512 nodes over 8 panels, cutoff where the l_max integrand falls below 1e-18 of its peak.
    pub fn new(m: u32, l_max: u32) -> Self {
        Self::with_cutoff(m, default_cutoff(m, l_max, 1e-18), 512, 8)
    }

    pub fn with_cutoff(m: u32, xi_cutoff: f64, nodes: usize, panels: usize) -> Self {
        let (xi, w) = composite_gl(0.0, xi_cutoff, nodes, panels);
        let m2 = 2 * m as i32;
        let wexp = xi.iter().zip(&w).map(|(x, w)| w * (-x.powi(m2)).exp()).collect();
        let ln_xi = xi.iter().map(|x| x.ln()).collect();
        KernelQuadrature { m, xi_cutoff, nodes, panels, xi, ln_xi, wexp }
    }

    /// Checks that the neglected tail of ξ^l e^{-ξ^{2m}} is below 1e-16 relative.
    pub fn check_tail(&self, l: u32) -> Result<()> {
        let m2 = 2.0 * self.m as f64;
        let lf = l as f64;
        let g = |x: f64| if l > 0 { lf * x.ln() - x.powf(m2) } else { -x.powf(m2) };
        let peak_x = if l > 0 { (lf / m2).powf(1.0 / m2) } else { 0.0 };
        let peak = if l > 0 { g(peak_x) } else { 0.0 };
        if self.xi_cutoff <= peak_x || g(self.xi_cutoff) - peak > (1e-16f64).ln() {
            return Err(Error::Quadrature(format!(
                "cutoff {} too small for derivative order {l} (m = {})",
                self.xi_cutoff, self.m
            )));
        }
        Ok(())
    }

    /// F^(l)(y) = (1/π) ∫₀^∞ ξ^l cos(yξ + lπ/2) e^{-ξ^{2m}} dξ.
    pub fn derivative(&self, y: f64, l: u32) -> f64 {
        let lf = l as f64;
        let mut s = 0.0;
        for i in 0..self.xi.len() {
            let (sn, cs) = (y * self.xi[i]).sin_cos();
            let trig = match l % 4 {
                0 => cs,
                1 => -sn,
                2 => -cs,
                _ => sn,
            };
            let pw = if l == 0 { 1.0 } else { (lf * self.ln_xi[i]).exp() };
            s += self.wexp[i] * pw * trig;
        }
        s / PI
    }

    /// F^(l)(y) for l = l0..l0+count in one pass.
    pub fn derivatives(&self, y: f64, l0: u32, count: usize) -> Vec<f64> {
        let mut out = vec![0.0; count];
        for i in 0..self.xi.len() {
            let (sn, cs) = (y * self.xi[i]).sin_cos();
            let mut pw = (l0 as f64 * self.ln_xi[i]).exp() * self.wexp[i];
            for (j, o) in out.iter_mut().enumerate() {
                let trig = match (l0 as usize + j) % 4 {
                    0 => cs,
                    1 => -sn,
                    2 => -cs,
                    _ => sn,
                };
                *o += pw * trig;
                pw *= self.xi[i];
            }
        }
        out.iter_mut().for_each(|v| *v /= PI);
        out
    }
}

/// F^(l)(y) with the default quadrature; checks the tail bound.
pub fn kernel_derivative(y: f64, l: u32, m: u32, quadrature: &KernelQuadrature) -> Result<f64> {
    if quadrature.m != m {
        return Err(Error::Quadrature(format!("quadrature built for m = {}, asked for m = {m}", quadrature.m)));
    }
    quadrature.check_tail(l)?;
    Ok(quadrature.derivative(y, l))
}

pub fn ln_factorial(l: u32) -> f64 {
    (2..=l).map(|k| (k as f64).ln()).sum()
}

/// Scale (-1)^l / √l! of ψ_l relative to F^(l).
pub fn eigen_scale(l: u32) -> f64 {
    let s = (-0.5 * ln_factorial(l)).exp();
    if l % 2 == 0 {
        s
    } else {
        -s
    }
}

/// (ψ_l, ψ_l', ..., ψ_l^(order-1)) at y.
pub fn eigenfunction_state(quadrature: &KernelQuadrature, l: u32, y: f64, order: usize) -> Vec<f64> {
    let s = eigen_scale(l);
    quadrature.derivatives(y, l, order).into_iter().map(|v| s * v).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjointPolynomial {
    pub l: u32,
    /// coefficients[k] multiplies y^k
    pub coefficients: Vec<f64>,
}

impl AdjointPolynomial {
    pub fn eval(&self, y: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * y + c)
    }
}

/// ψ*_l = (1/√l!) [ y^l + Σ_j (1/j!) (-1)^{mj} D^{2mj} y^l ].
pub fn adjoint_poly(l: u32, m: u32) -> AdjointPolynomial {
    let mut c = vec![0.0; l as usize + 1];
    let norm = (-0.5 * ln_factorial(l)).exp();
    c[l as usize] = norm;
    let step = 2 * m;
    let mut j = 1u32;
    while j * step <= l {
        let k = j * step;
        // D^k y^l = l!/(l-k)! y^{l-k}
        let ln_falling = ln_factorial(l) - ln_factorial(l - k);
        let sign = if (m * j) % 2 == 0 { 1.0 } else { -1.0 };
        c[(l - k) as usize] += sign * (ln_falling - ln_factorial(j)).exp() * norm;
        j += 1;
    }
    AdjointPolynomial { l, coefficients: c }
}

/// Sampled F^(l)(y) on y = i·h, i = 0..n, for l = 0..=l_max.
#[derive(Debug, Clone)]
pub struct KernelTable {
    pub m: u32,
    pub h: f64,
    pub y_max: f64,
    pub l_max: u32,
    pub quadrature: KernelQuadrature,
    /// values[l][i] = F^(l)(i·h)
    pub values: Vec<Vec<f64>>,
}

/// Half-width where the stretched-exponential tail e^{-d y^q} drops below 1e-18.
/// Going further only adds quadrature round-off weighted by the adjoint polynomials.
pub fn default_extent(m: u32, _l_max: u32) -> f64 {
    let d = tail_decay_rate(m);
    let q = params::decay_power(m);
    let mut y = 4.0;
    while d * f64::powf(y, q) < 18.0 * std::f64::consts::LN_10 {
        y += 1.0;
    }
    y
}

impl KernelTable {
    pub fn new(m: u32, l_max: u32) -> Self {
        Self::with_grid(m, l_max, 0.01, default_extent(m, l_max))
    }

    pub fn with_grid(m: u32, l_max: u32, h: f64, y_max: f64) -> Self {
        let quadrature = KernelQuadrature::new(m, l_max);
        let n = (y_max / h).round() as usize;
        let rows: Vec<Vec<f64>> = (0..=n)
            .into_par_iter()
            .map(|i| quadrature.derivatives(i as f64 * h, 0, l_max as usize + 1))
            .collect();
        let values = (0..=l_max as usize).map(|l| rows.iter().map(|r| r[l]).collect()).collect();
        KernelTable { m, h, y_max: n as f64 * h, l_max, quadrature, values }
    }

    pub fn len(&self) -> usize {
        self.values[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.values[0].is_empty()
    }

    /// Symmetric grid -y_max..y_max.
    pub fn full_grid(&self) -> Vec<f64> {
        let n = self.len() as isize - 1;
        (-n..=n).map(|i| i as f64 * self.h).collect()
    }

    /// F^(l) on the symmetric grid, extended by parity.
    pub fn full_values(&self, l: u32) -> Result<Vec<f64>> {
        if l > self.l_max {
            return Err(Error::Quadrature(format!("l = {l} exceeds table l_max = {}", self.l_max)));
        }
        let v = &self.values[l as usize];
        let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
        let mut out: Vec<f64> = v[1..].iter().rev().map(|x| sign * x).collect();
        out.extend_from_slice(v);
        Ok(out)
    }

    /// ψ_l on the symmetric grid.
    pub fn eigenfunction(&self, l: u32) -> Result<Vec<f64>> {
        let s = eigen_scale(l);
        Ok(self.full_values(l)?.into_iter().map(|v| s * v).collect())
    }

    pub fn integral_f(&self) -> f64 {
        trapezoid(&self.full_grid(), &self.full_values(0).expect("l = 0 always present"))
    }

    /// Fails if F has not decayed at the grid edge.
    pub fn check_extent(&self, tol: f64) -> Result<()> {
        for l in 0..=self.l_max as usize {
            let edge = self.values[l].last().copied().unwrap_or(0.0).abs() * self.y_max.powi(self.l_max as i32);
            if edge > tol {
                return Err(Error::Quadrature(format!("grid too short: |y^l F^({l})| = {edge:e} at y = {}", self.y_max)));
            }
        }
        Ok(())
    }
}

/// ∫ ψ_β ψ*_γ over ℝ.
pub fn pairing(beta: u32, gamma: u32, kernel: &KernelTable, poly: &AdjointPolynomial) -> Result<f64> {
    if poly.l != gamma {
        return Err(Error::Quadrature(format!("adjoint polynomial has l = {}, expected {gamma}", poly.l)));
    }
    let y = kernel.full_grid();
    let psi = kernel.eigenfunction(beta)?;
    let g: Vec<f64> = y.iter().zip(&psi).map(|(y, v)| v * poly.eval(*y)).collect();
    Ok(trapezoid(&y, &g))
}

/// κ_l = ∫ |ψ_l|^{p-1} ψ_l ψ*_l.
pub fn kappa(l: u32, p: f64, kernel: &KernelTable, poly: &AdjointPolynomial) -> Result<f64> {
    if poly.l != l {
        return Err(Error::Quadrature(format!("adjoint polynomial has l = {}, expected {l}", poly.l)));
    }
    let y = kernel.full_grid();
    let psi = kernel.eigenfunction(l)?;
    let g: Vec<f64> = y.iter().zip(&psi).map(|(y, v)| v.abs().powf(p - 1.0) * v * poly.eval(*y)).collect();
    Ok(trapezoid(&y, &g))
}

/// ĉ_l = (N+l)² / (4m²(1+α)κ_l).
pub fn c_hat(l: u32, _p: f64, alpha: f64, m: u32, n: u32, kappa_val: f64) -> Result<f64> {
    if !(kappa_val > 0.0) {
        return Err(Error::NonPositiveKappa(kappa_val));
    }
    let nl = n as f64 + l as f64;
    let m = m as f64;
    Ok(nl * nl / (4.0 * m * m * (1.0 + alpha) * kappa_val))
}

/// μ₀ = (N²/(4m²(1+α))) ∫ (1 - (p₀/κ₀)|F|^{p₀-1}) F.
pub fn mu0(m: u32, n: u32, alpha: f64, kernel: &KernelTable) -> Result<f64> {
    if n != 1 {
        return Err(Error::InvalidParams("kernel quadrature is one-dimensional (N = 1)".into()));
    }
    let p0 = critical_p(0, m, n, alpha);
    let k0 = kappa(0, p0, kernel, &adjoint_poly(0, m))?;
    if !(k0 > 0.0) {
        return Err(Error::NonPositiveKappa(k0));
    }
    let y = kernel.full_grid();
    let f = kernel.full_values(0)?;
    let g: Vec<f64> = f.iter().map(|v| (1.0 - p0 / k0 * v.abs().powf(p0 - 1.0)) * v).collect();
    let nf = n as f64;
    let mf = m as f64;
    Ok(nf * nf / (4.0 * mf * mf * (1.0 + alpha)) * trapezoid(&y, &g))
}

pub fn eigenvalue(l: u32, m: u32) -> f64 {
    -(l as f64) / (2.0 * m as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralSummary {
    pub m: u32,
    pub n: u32,
    pub p: f64,
    pub alpha: f64,
    pub kappa: Vec<(u32, f64)>,
    pub c_hat: Vec<(u32, Option<f64>)>,
    pub eigenvalues: Vec<(u32, f64)>,
    pub ortho_matrix: Vec<Vec<f64>>,
    pub mu0: f64,
}

pub fn summary(kernel: &KernelTable, p: f64, alpha: f64) -> Result<SpectralSummary> {
    let (m, n) = (kernel.m, 1);
    let polys: Vec<AdjointPolynomial> = (0..=kernel.l_max).map(|l| adjoint_poly(l, m)).collect();
    let mut ortho = vec![vec![0.0; polys.len()]; polys.len()];
    for b in 0..=kernel.l_max {
        for g in 0..=kernel.l_max {
            ortho[b as usize][g as usize] = pairing(b, g, kernel, &polys[g as usize])?;
        }
    }
    let mut kap = Vec::new();
    let mut ch = Vec::new();
    for l in 0..=kernel.l_max {
        let k = kappa(l, p, kernel, &polys[l as usize])?;
        kap.push((l, k));
        ch.push((l, c_hat(l, p, alpha, m, n, k).ok()));
    }
    Ok(SpectralSummary {
        m,
        n,
        p,
        alpha,
        kappa: kap,
        c_hat: ch,
        eigenvalues: (0..=kernel.l_max).map(|l| (l, eigenvalue(l, m))).collect(),
        ortho_matrix: ortho,
        mu0: mu0(m, n, alpha, kernel)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(y: f64) -> f64 {
        (4.0 * PI).powf(-0.5) * (-y * y / 4.0).exp()
    }

    #[test]
    fn gaussian_kernel() {
        let q = KernelQuadrature::new(1, 0);
        assert!((kernel_derivative(0.0, 0, 1, &q).unwrap() - 0.282095).abs() < 1e-6);
        assert!((kernel_derivative(2.0, 0, 1, &q).unwrap() - 0.103777).abs() < 1e-6);
        for i in -80..=80 {
            let y = i as f64 * 0.1;
            assert!((q.derivative(y, 0) - gaussian(y)).abs() < 1e-12);
        }
    }

    #[test]
    fn m2_kernel_ode() {
        // F''' = yF/4
        let q = KernelQuadrature::new(2, 3);
        for i in 0..=60 {
            let y = i as f64 * 0.1;
            let r = q.derivative(y, 3) - y * q.derivative(y, 0) / 4.0;
            assert!(r.abs() < 1e-12, "y={y} r={r}");
        }
    }

    #[test]
    fn derivatives_batch_matches_single() {
        let q = KernelQuadrature::new(2, 8);
        let b = q.derivatives(1.3, 2, 5);
        for j in 0..5 {
            assert!((b[j] - q.derivative(1.3, 2 + j as u32)).abs() < 1e-14);
        }
    }

    #[test]
    fn cutoff_and_tail_check() {
        let c = default_cutoff(2, 0, 1e-18);
        assert!((c.powi(4) - 1e18f64.ln()).abs() < 1e-9);
        let q = KernelQuadrature::with_cutoff(2, 1.5, 512, 8);
        assert!(q.check_tail(0).is_err());
        assert!(KernelQuadrature::new(2, 10).check_tail(10).is_ok());
    }

    #[test]
    fn odd_derivatives_vanish_at_origin() {
        let q = KernelQuadrature::new(2, 7);
        for l in [1, 3, 5, 7] {
            assert!(q.derivative(0.0, l).abs() < 1e-15);
        }
    }

    #[test]
    fn adjoint_examples() {
        assert_eq!(adjoint_poly(0, 2).coefficients, vec![1.0]);
        assert_eq!(adjoint_poly(1, 2).coefficients, vec![0.0, 1.0]);
        let p4 = adjoint_poly(4, 2);
        let s = 24f64.sqrt();
        let want = [24.0 / s, 0.0, 0.0, 0.0, 1.0 / s];
        for k in 0..5 {
            assert!((p4.coefficients[k] - want[k]).abs() < 1e-14);
        }
        // m = 1 gives probabilists' Hermite-type polynomials with y² - (-2) = y² + 2
        let h2 = adjoint_poly(2, 1);
        let s2 = 2f64.sqrt();
        assert!((h2.coefficients[0] + 2.0 / s2).abs() < 1e-14);
        assert!((h2.coefficients[2] - 1.0 / s2).abs() < 1e-14);
    }

    #[test]
    fn hermite_orthonormality_m1() {
        let k = KernelTable::new(1, 6);
        for b in 0..=6 {
            for g in 0..=6 {
                let v = pairing(b, g, &k, &adjoint_poly(g, 1)).unwrap();
                let want = if b == g { 1.0 } else { 0.0 };
                assert!((v - want).abs() < 1e-8, "({b},{g}) = {v}");
            }
        }
    }

    #[test]
    fn gaussian_kappa() {
        let k = KernelTable::new(1, 0);
        let v = kappa(0, 3.0, &k, &adjoint_poly(0, 1)).unwrap();
        // (4π)^{-3/2} ∫ e^{-3y²/4} = 1/(4√3 π)
        assert!((v - 1.0 / (4.0 * 3f64.sqrt() * PI)).abs() < 1e-10);
        let c = c_hat(0, 3.0, 0.0, 1, 1, v).unwrap();
        assert!((c - 1.0 / (4.0 * v)).abs() < 1e-12);
        assert!((kappa(0, 1.0 + 1e-9, &k, &adjoint_poly(0, 1)).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn c_hat_structure() {
        assert_eq!(c_hat(0, 2.0, 0.0, 2, 1, 1.0).unwrap(), 1.0 / 16.0);
        let a = c_hat(3, 2.0, 1.0, 2, 1, 0.3).unwrap() * 2.0;
        let b = c_hat(3, 2.0, 4.0, 2, 1, 0.3).unwrap() * 5.0;
        assert!((a - b).abs() < 1e-14);
        assert!(matches!(c_hat(0, 2.0, 0.0, 2, 1, -0.1), Err(Error::NonPositiveKappa(_))));
    }

    #[test]
    fn mu0_examples() {
        let k1 = KernelTable::new(1, 0);
        assert!((mu0(1, 1, 0.0, &k1).unwrap() + 0.5).abs() < 1e-8);
        let k2 = KernelTable::new(2, 0);
        assert!((mu0(2, 1, 0.0, &k2).unwrap() + 0.25).abs() < 1e-8);
        assert!((mu0(2, 1, 1.0, &k2).unwrap() + 0.25).abs() < 1e-8);
    }

    #[test]
    fn eigenvalue_table() {
        assert_eq!(eigenvalue(0, 2), 0.0);
        assert_eq!(eigenvalue(3, 2), -0.75);
    }
}
