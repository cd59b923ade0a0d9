//! Oscillatory blow-up of V'''' = -|V|^{p-1}V: singularity location,
//! envelope exponent and the geometric zero ladder.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::odesys::{blowup_rhs, integrate_system, oscillatory_mu, oscillatory_rhs, IntegratorConfig, OdeSystem, Outcome, Sampling, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowupConfig {
    pub integrator: IntegratorConfig,
    /// Give up when no overflow occurs before this point.
    pub y_max: f64,
    /// Number of trailing extrema used in the envelope fit.
    pub fit_extrema: usize,
    /// Relative disagreement between the two y₀ estimates that flags the orbit.
    pub agreement_tol: f64,
}

impl Default for BlowupConfig {
    fn default() -> Self {
        BlowupConfig {
            integrator: IntegratorConfig { rtol: 1e-12, atol: 1e-14, max_step: 0.05, overflow_guard: 1e40, ..Default::default() },
            y_max: 200.0,
            fit_extrema: 10,
            agreement_tol: 1e-2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioStats {
    pub mean: f64,
    pub stddev: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlowupOrbit {
    pub p: f64,
    pub trajectory: Trajectory,
    pub y0_est: f64,
    /// y₀ from the geometric limit of the last three zeros.
    pub y0_ladder: f64,
    pub mu_fit: f64,
    pub fit_residual: f64,
    pub zeros: Vec<f64>,
    pub extrema: Vec<(f64, f64)>,
    pub ratio_stats: RatioStats,
    /// The two y₀ estimates disagree beyond tolerance.
    pub flagged: bool,
}

impl BlowupOrbit {
    pub fn mu_expected(&self) -> f64 {
        oscillatory_mu(self.p)
    }
}

struct BlowupSystem {
    p: f64,
}

impl OdeSystem for BlowupSystem {
    fn dim(&self) -> usize {
        4
    }

    fn rhs(&self, y: f64, x: &[f64], dx: &mut [f64]) {
        dx.copy_from_slice(&blowup_rhs(y, x, self.p));
    }
}

/// Sign changes of V, located by cubic Taylor steps from the left sample.
fn zeros_of(t: &Trajectory) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 1..t.len() {
        let (a, b) = (&t.states[i - 1], &t.states[i]);
        if a[0] == 0.0 || a[0] * b[0] < 0.0 {
            let (ya, yb) = (t.ys[i - 1], t.ys[i]);
            let mut z = ya + (yb - ya) * a[0] / (a[0] - b[0]);
            // two Newton corrections on the local Taylor polynomial
            for _ in 0..2 {
                let d = z - ya;
                let v = a[0] + d * (a[1] + d * (a[2] / 2.0 + d * a[3] / 6.0));
                let dv = a[1] + d * (a[2] + d * a[3] / 2.0);
                if dv != 0.0 {
                    z -= v / dv;
                }
            }
            if z.is_finite() && z >= ya && z <= yb {
                out.push(z);
            } else {
                out.push(ya + (yb - ya) * a[0] / (a[0] - b[0]));
            }
        }
    }
    out.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    out
}

/// Local extrema (y, |V|) where V' changes sign.
fn extrema_of(t: &Trajectory) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for i in 1..t.len() {
        let (a, b) = (&t.states[i - 1], &t.states[i]);
        if a[1] * b[1] < 0.0 {
            let (ya, yb) = (t.ys[i - 1], t.ys[i]);
            let ye = ya + (yb - ya) * a[1] / (a[1] - b[1]);
            let d = ye - ya;
            let v = a[0] + d * (a[1] + d * (a[2] / 2.0 + d * a[3] / 6.0));
            out.push((ye, v.abs()));
        }
    }
    out
}

fn linfit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let ssr: f64 = x.iter().zip(y).map(|(a, b)| (b - icpt - slope * a).powi(2)).sum();
    (slope, icpt, ssr)
}

/// Fit log|V_k| = c + μ log(y₀ - y_k) with y₀ a free parameter.
pub fn fit_envelope(ext: &[(f64, f64)], y_end: f64) -> Option<(f64, f64, f64)> {
    if ext.len() < 3 {
        return None;
    }
    let ly: Vec<f64> = ext.iter().map(|e| e.1.ln()).collect();
    let ssr_at = |x0: f64| -> (f64, f64) {
        let y0 = y_end + x0;
        let lx: Vec<f64> = ext.iter().map(|e| (y0 - e.0).ln()).collect();
        let (s, _, r) = linfit(&lx, &ly);
        (r, s)
    };
    let span = y_end - ext[0].0;
    // coarse log scan of the offset y₀ - y_end, then golden section
    let (lo, hi) = ((span * 1e-12).ln(), (span * 10.0).ln());
    let n = 400;
    let mut best = (f64::INFINITY, lo);
    for i in 0..=n {
        let u = lo + (hi - lo) * i as f64 / n as f64;
        let (r, _) = ssr_at(u.exp());
        if r < best.0 {
            best = (r, u);
        }
    }
    let du = (hi - lo) / n as f64;
    let (mut a, mut b) = (best.1 - du, best.1 + du);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..80 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if ssr_at(c.exp()).0 < ssr_at(d.exp()).0 {
            b = d;
        } else {
            a = c;
        }
    }
    let x0 = (0.5 * (a + b)).exp();
    let (r, mu) = ssr_at(x0);
    Some((y_end + x0, mu, (r / ext.len() as f64).sqrt()))
}

/// Geometric limit of the last three zeros.
pub fn ladder_limit(zeros: &[f64]) -> Option<f64> {
    let n = zeros.len();
    if n < 3 {
        return None;
    }
    let (z1, z2, z3) = (zeros[n - 3], zeros[n - 2], zeros[n - 1]);
    let r = (z3 - z2) / (z2 - z1);
    if !(r > 0.0 && r < 1.0) {
        return None;
    }
    Some(z3 + (z3 - z2) * r / (1.0 - r))
}

/// Mean and standard deviation of (y₀ - z_{k+1})/(y₀ - z_k) over the last `count` zeros.
pub fn ratio_stats(zeros: &[f64], y0: f64, count: usize) -> RatioStats {
    let tail = &zeros[zeros.len().saturating_sub(count)..];
    let r: Vec<f64> = tail.windows(2).map(|w| (y0 - w[1]) / (y0 - w[0])).collect();
    if r.is_empty() {
        return RatioStats { mean: f64::NAN, stddev: f64::NAN };
    }
    let mean = r.iter().sum::<f64>() / r.len() as f64;
    let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / r.len() as f64;
    RatioStats { mean, stddev: var.sqrt() }
}

/// Integrate from `init` at y = 0 until overflow and analyse the orbit.
pub fn run_blowup(p: f64, init: &[f64; 4], cfg: &BlowupConfig) -> Result<BlowupOrbit> {
    run_blowup_from(p, 0.0, init, cfg)
}

pub fn run_blowup_from(p: f64, y_start: f64, init: &[f64; 4], cfg: &BlowupConfig) -> Result<BlowupOrbit> {
    if !(p > 1.0) {
        return Err(Error::InvalidParams(format!("p = {p} must exceed 1")));
    }
    let sys = BlowupSystem { p };
    let out = integrate_system(&sys, y_start, y_start + cfg.y_max, init, &cfg.integrator, Sampling::EveryStep)?;
    let traj = match out {
        Outcome::Completed(_) => return Err(Error::NoBlowup(y_start + cfg.y_max)),
        Outcome::Blowup { trajectory, .. } => trajectory,
    };
    let y_end = *traj.ys.last().unwrap();
    let zeros = zeros_of(&traj);
    let extrema = extrema_of(&traj);
    let fit_set = &extrema[extrema.len().saturating_sub(cfg.fit_extrema)..];
    let (y0_est, mu_fit, fit_residual) =
        fit_envelope(fit_set, y_end).ok_or_else(|| Error::UnreliableBlowup(format!("only {} extrema before overflow", extrema.len())))?;
    let y0_ladder = ladder_limit(&zeros).unwrap_or(f64::NAN);
    let scale = (y0_est - y_start).abs().max(f64::MIN_POSITIVE);
    let flagged = !((y0_est - y0_ladder).abs() <= cfg.agreement_tol * scale);
    let stats = ratio_stats(&zeros, y0_est, 5);
    Ok(BlowupOrbit { p, trajectory: traj, y0_est, y0_ladder, mu_fit, fit_residual, zeros, extrema, ratio_stats: stats, flagged })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OscillatoryFrame {
    pub mu: f64,
    pub s: Vec<f64>,
    /// (φ, φ', φ'', φ''') at each s.
    pub phi: Vec<[f64; 4]>,
    /// Relative residual of φ'''' against the autonomous equation.
    pub residual: Vec<f64>,
    pub mid_window_residual: f64,
    /// Zeros of V mapped to s = ln(y₀ - z).
    pub zero_s: Vec<f64>,
}

/// φ(s) = (y₀ - y)^{-μ} V(y), s = ln(y₀ - y), with derivatives from the chain rule.
pub fn to_oscillatory_frame(orbit: &BlowupOrbit) -> Result<OscillatoryFrame> {
    if orbit.flagged || !orbit.y0_est.is_finite() {
        return Err(Error::UnreliableBlowup(format!("y0 estimates {} and {} disagree", orbit.y0_est, orbit.y0_ladder)));
    }
    let p = orbit.p;
    let mu = oscillatory_mu(p);
    let y0 = orbit.y0_est;
    // g^(k)(s) = Σ_j a[k][j] x^j V^(j), with g(s) = V(y₀ - e^s)
    let mut a = vec![vec![0.0; 5]; 5];
    a[0][0] = 1.0;
    for k in 0..4 {
        for j in 0..5 {
            let mut v = j as f64 * a[k][j];
            if j > 0 {
                v -= a[k][j - 1];
            }
            a[k + 1][j] = v;
        }
    }
    let binom = |n: usize, k: usize| -> f64 { (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64) };
    let mut s_out = Vec::new();
    let mut phi = Vec::new();
    let mut residual = Vec::new();
    for (y, st) in orbit.trajectory.ys.iter().zip(&orbit.trajectory.states) {
        let x = y0 - y;
        if !(x > 0.0) {
            continue;
        }
        let v4 = -st[0].abs().powf(p - 1.0) * st[0];
        let w = [st[0], st[1], st[2], st[3], v4];
        let g: Vec<f64> = (0..5).map(|k| (0..5).map(|j| a[k][j] * x.powi(j as i32) * w[j]).sum()).collect();
        let e = x.powf(-mu);
        let d: Vec<f64> = (0..5).map(|n| e * (0..=n).map(|k| binom(n, k) * (-mu).powi((n - k) as i32) * g[k]).sum::<f64>()).collect();
        let s = x.ln();
        let rhs = oscillatory_rhs(s, &d[..4], p);
        let c = oscillatory_coefficients(mu);
        let scale = d[4].abs() + c[3].abs() * d[3].abs() + c[2].abs() * d[2].abs() + c[1].abs() * d[1].abs() + c[0].abs() * d[0].abs() + d[0].abs().powf(p);
        residual.push((d[4] - rhs[3]).abs() / scale.max(f64::MIN_POSITIVE));
        s_out.push(s);
        phi.push([d[0], d[1], d[2], d[3]]);
    }
    let n = residual.len();
    let mid = &residual[n / 3..(2 * n / 3).max(n / 3 + 1).min(n)];
    let mid_window_residual = mid.iter().fold(0.0f64, |a, v| a.max(*v));
    let zero_s = orbit.zeros.iter().filter(|z| **z < y0).map(|z| (y0 - z).ln()).collect();
    Ok(OscillatoryFrame { mu, s: s_out, phi, residual, mid_window_residual, zero_s })
}

/// (c0, c1, c2, c3) of the autonomous φ equation.
pub fn oscillatory_coefficients(mu: f64) -> [f64; 4] {
    [
        -mu * (mu - 1.0) * (mu - 2.0) * (mu - 3.0),
        -2.0 * (2.0 * mu.powi(3) - 9.0 * mu * mu + 11.0 * mu - 3.0),
        -(6.0 * mu * mu - 18.0 * mu + 11.0),
        -2.0 * (2.0 * mu - 3.0),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rest_point_does_not_blow_up() {
        let cfg = BlowupConfig { y_max: 20.0, ..Default::default() };
        assert!(matches!(run_blowup(2.0, &[0.0; 4], &cfg), Err(Error::NoBlowup(_))));
    }

    #[test]
    fn envelope_fit_recovers_power_law() {
        let (y0, mu) = (3.0, -4.0);
        let ext: Vec<(f64, f64)> = (0..12).map(|k| {
            let x = 0.5 * 0.6f64.powi(k);
            (y0 - x, 2.0 * x.powf(mu))
        }).collect();
        let y_end = ext.last().unwrap().0 + 1e-4;
        let (y0f, muf, _) = fit_envelope(&ext, y_end).unwrap();
        assert!((y0f - y0).abs() < 1e-6);
        assert!((muf - mu).abs() < 1e-6);
    }

    #[test]
    fn ladder_of_geometric_zeros() {
        let zeros: Vec<f64> = (0..8).map(|k| 5.0 - 0.7f64.powi(k)).collect();
        assert!((ladder_limit(&zeros).unwrap() - 5.0).abs() < 1e-12);
        let st = ratio_stats(&zeros, 5.0, 5);
        assert!((st.mean - 0.7).abs() < 1e-12 && st.stddev < 1e-12);
    }

    #[test]
    fn frame_amplification_at_p2() {
        assert_eq!(oscillatory_mu(2.0), -4.0);
        let c = oscillatory_coefficients(-4.0);
        let direct = oscillatory_rhs(0.0, &[1.0, 0.0, 0.0, 0.0], 2.0);
        assert!((direct[3] - (c[0] - 1.0)).abs() < 1e-12);
    }
}
