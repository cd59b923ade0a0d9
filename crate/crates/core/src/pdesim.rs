//! u_t = -u_xxxx - t^α f(u) on [-A, A], linearly implicit in the stiff part.

use serde::{Deserialize, Serialize};

use crate::banded::{BandLu, BandMatrix};
use crate::error::{Error, Result};
use crate::params::ProblemParams;
use crate::shoot::ProfileSolution;
use crate::spectral::KernelQuadrature;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    /// u = u_xx = 0 at ±A.
    Hinged,
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdeGrid {
    pub half_width: f64,
    pub n: usize,
    /// dt = dt_rel·t.
    pub dt_rel: f64,
    pub boundary: Boundary,
}

impl Default for PdeGrid {
    fn default() -> Self {
        PdeGrid { half_width: 40.0, n: 2048, dt_rel: 1e-3, boundary: Boundary::Hinged }
    }
}

impl PdeGrid {
    pub fn validate(&self) -> Result<()> {
        if self.n < 256 {
            return Err(Error::Config(format!("n = {} must be at least 256", self.n)));
        }
        if !(self.half_width > 0.0 && self.dt_rel > 0.0) {
            return Err(Error::Config("half-width and dt must be positive".into()));
        }
        Ok(())
    }

    pub fn h(&self) -> f64 {
        match self.boundary {
            Boundary::Hinged => 2.0 * self.half_width / (self.n - 1) as f64,
            Boundary::Periodic => 2.0 * self.half_width / self.n as f64,
        }
    }

    pub fn x(&self) -> Vec<f64> {
        let h = self.h();
        (0..self.n).map(|i| -self.half_width + i as f64 * h).collect()
    }
}

/// Factorised I + dt·D₄ for one step size.
pub struct Implicit {
    boundary: Boundary,
    lu: BandLu,
    /// Woodbury data for the periodic corners.
    corner: Option<(Vec<Vec<f64>>, nalgebra::Matrix4<f64>, f64)>,
    n: usize,
}

impl Implicit {
    pub fn new(grid: &PdeGrid, dt: f64) -> Result<Self> {
        let h = grid.h();
        let c = dt / h.powi(4);
        match grid.boundary {
            Boundary::Hinged => {
                let n = grid.n - 2;
                let mut a = BandMatrix::zeros(n, 2, 2);
                for i in 0..n {
                    let mut d = 1.0 + 6.0 * c;
                    // ghost u_{-1} = -u_1 at both ends
                    if i == 0 || i + 1 == n {
                        d -= c;
                    }
                    a.set(i, i, d);
                    if i >= 1 {
                        a.set(i, i - 1, -4.0 * c);
                    }
                    if i >= 2 {
                        a.set(i, i - 2, c);
                    }
                    if i + 1 < n {
                        a.set(i, i + 1, -4.0 * c);
                    }
                    if i + 2 < n {
                        a.set(i, i + 2, c);
                    }
                }
                Ok(Implicit { boundary: Boundary::Hinged, lu: a.factor()?, corner: None, n })
            }
            Boundary::Periodic => {
                let n = grid.n;
                let mut a = BandMatrix::zeros(n, 2, 2);
                for i in 0..n {
                    a.set(i, i, 1.0 + 6.0 * c);
                    if i >= 1 {
                        a.set(i, i - 1, -4.0 * c);
                    }
                    if i >= 2 {
                        a.set(i, i - 2, c);
                    }
                    if i + 1 < n {
                        a.set(i, i + 1, -4.0 * c);
                    }
                    if i + 2 < n {
                        a.set(i, i + 2, c);
                    }
                }
                let lu = a.factor()?;
                // corners: A = B + U Vᵀ with U columns e_0, e_1, e_{n-2}, e_{n-1}
                let idx = [0, 1, n - 2, n - 1];
                let mut z = Vec::with_capacity(4);
                for &k in &idx {
                    let mut e = vec![0.0; n];
                    e[k] = 1.0;
                    lu.solve(&mut e);
                    z.push(e);
                }
                // Vᵀ rows: row 0 has c at n-2 and -4c at n-1; row 1 has c at n-1;
                // row n-2 has c at 0; row n-1 has -4c at 0 and c at 1
                let vt = |r: usize, x: &[f64]| -> f64 {
                    match r {
                        0 => c * x[n - 2] - 4.0 * c * x[n - 1],
                        1 => c * x[n - 1],
                        2 => c * x[0],
                        _ => -4.0 * c * x[0] + c * x[1],
                    }
                };
                let mut cap = nalgebra::Matrix4::<f64>::identity();
                for r in 0..4 {
                    for (col, zc) in z.iter().enumerate() {
                        cap[(r, col)] += vt(r, zc);
                    }
                }
                let inv = cap.try_inverse().ok_or(Error::Singular)?;
                Ok(Implicit { boundary: Boundary::Periodic, lu, corner: Some((z, inv, c)), n })
            }
        }
    }

    /// Solve (I + dt D₄) x = b in place on the unknowns.
    pub fn solve(&self, b: &mut [f64]) {
        self.lu.solve(b);
        if let Some((z, inv, c)) = &self.corner {
            let n = self.n;
            let c = *c;
            let w = [c * b[n - 2] - 4.0 * c * b[n - 1], c * b[n - 1], c * b[0], -4.0 * c * b[0] + c * b[1]];
            let w = nalgebra::Vector4::from(w);
            let y = inv * w;
            for (k, zk) in z.iter().enumerate() {
                for i in 0..n {
                    b[i] -= y[k] * zk[i];
                }
            }
        }
    }
}

/// One linearly implicit step from t to t + dt.
pub fn step(u: &[f64], t: f64, dt: f64, params: &ProblemParams, grid: &PdeGrid) -> Result<Vec<f64>> {
    let imp = Implicit::new(grid, dt)?;
    step_with(&imp, u, t, dt, params, true)
}

/// Step with a prepared factorisation; `absorb` switches the nonlinear term.
pub fn step_with(imp: &Implicit, u: &[f64], t: f64, dt: f64, params: &ProblemParams, absorb: bool) -> Result<Vec<f64>> {
    if params.m != 2 {
        return Err(Error::UnsupportedOrder(params.m));
    }
    if !(t > 0.0) {
        return Err(Error::InvalidParams(format!("t = {t} must be positive")));
    }
    let h = t.powf(params.alpha);
    let src = |v: f64| if absorb { v - dt * h * params.f(v) } else { v };
    let out = match imp.boundary {
        Boundary::Hinged => {
            let n = u.len();
            let mut b: Vec<f64> = u[1..n - 1].iter().map(|v| src(*v)).collect();
            imp.solve(&mut b);
            let mut out = vec![0.0; n];
            out[1..n - 1].copy_from_slice(&b);
            out
        }
        Boundary::Periodic => {
            let mut b: Vec<f64> = u.iter().map(|v| src(*v)).collect();
            imp.solve(&mut b);
            b
        }
    };
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { y: t + dt });
    }
    Ok(out)
}

/// Evolve from t0 to each observation time; calls `observe(t, u)` there.
pub fn evolve<F: FnMut(f64, &[f64])>(
    u0: &[f64],
    t0: f64,
    times: &[f64],
    params: &ProblemParams,
    grid: &PdeGrid,
    absorb: bool,
    mut observe: F,
) -> Result<Vec<f64>> {
    grid.validate()?;
    let mut u = u0.to_vec();
    let mut t = t0;
    let mut cached: Option<(f64, Implicit)> = None;
    for &target in times {
        while t < target * (1.0 - 1e-14) {
            // refactor only when the wanted step drifts by more than 1%
            let want = grid.dt_rel * t;
            if cached.as_ref().is_none_or(|(d, _)| (d - want).abs() > 0.01 * want) {
                cached = Some((want, Implicit::new(grid, want)?));
            }
            let (dtc, imp) = cached.as_ref().unwrap();
            if t + dtc > target {
                let dt = target - t;
                u = step_with(&Implicit::new(grid, dt)?, &u, t, dt, params, absorb)?;
                t = target;
            } else {
                u = step_with(imp, &u, t, *dtc, params, absorb)?;
                t += dtc;
            }
        }
        t = target;
        observe(t, &u);
    }
    Ok(u)
}

/// w(y) = t^β u(y t^{1/2m}, t) on the given y-grid, by linear interpolation.
pub fn rescale_to_similarity(u: &[f64], t: f64, params: &ProblemParams, grid: &PdeGrid, ys: &[f64]) -> Result<Vec<f64>> {
    if !(t > 0.0) {
        return Err(Error::InvalidParams(format!("t = {t} must be positive")));
    }
    let s = t.powf(1.0 / (2.0 * params.m as f64));
    let amp = t.powf(params.beta());
    let x = grid.x();
    let h = grid.h();
    let xmax = *x.last().unwrap();
    ys.iter()
        .map(|y| {
            let xq = y * s;
            if xq < x[0] - 1e-12 || xq > xmax + 1e-12 {
                return Err(Error::DomainExhausted(format!("y = {y} maps to x = {xq} outside the domain at t = {t}")));
            }
            let r = ((xq - x[0]) / h).clamp(0.0, (x.len() - 1) as f64);
            let i = (r.floor() as usize).min(x.len() - 2);
            let f = r - i as f64;
            Ok(amp * (u[i] * (1.0 - f) + u[i + 1] * f))
        })
        .collect()
}

/// Near-Dirac data: the kernel b(x, t₀) = t₀^{-1/4} F(x t₀^{-1/4}).
pub fn near_dirac(grid: &PdeGrid, t0: f64, mass: f64, q: &KernelQuadrature) -> Vec<f64> {
    let s = t0.powf(0.25);
    let mut u: Vec<f64> = grid.x().iter().map(|x| mass / s * q.derivative(x.abs() / s, 0)).collect();
    if grid.boundary == Boundary::Hinged {
        let n = u.len();
        u[0] = 0.0;
        u[n - 1] = 0.0;
    }
    u
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Perturbation {
    /// u = V₀(1 + ε).
    Uniform,
    /// u = V₀(1 + ε cos(k x)).
    Cosine(f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityRecord {
    pub perturbation_size: f64,
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
    /// d(t₀)/d(t₁).
    pub reduction: f64,
    pub passed: bool,
}

/// Evolve V₀(1 + perturbation) from t = 1 and track ‖w(·, t) - V₀‖_∞.
pub fn stability_experiment(
    profile: &ProfileSolution,
    size: f64,
    shape: Perturbation,
    t1: f64,
    samples: usize,
    grid: &PdeGrid,
) -> Result<StabilityRecord> {
    let params = profile.params;
    if params.m != 2 {
        return Err(Error::UnsupportedOrder(params.m));
    }
    let x = grid.x();
    let mut u0: Vec<f64> = x
        .iter()
        .map(|x| {
            let v = profile.state_at(x.abs())[0];
            let v = if x < &0.0 && profile.parity == crate::params::Parity::Odd { -v } else { v };
            let pert = match shape {
                Perturbation::Uniform => size,
                Perturbation::Cosine(k) => size * (k * x).cos(),
            };
            v * (1.0 + pert)
        })
        .collect();
    if grid.boundary == Boundary::Hinged {
        let n = u0.len();
        u0[0] = 0.0;
        u0[n - 1] = 0.0;
    }
    let y_max = grid.half_width / t1.powf(0.25);
    let ys: Vec<f64> = profile.grid.iter().copied().filter(|y| *y <= y_max).collect();
    if ys.len() < 2 {
        return Err(Error::DomainExhausted("profile grid does not fit the domain".into()));
    }
    let v0: Vec<f64> = ys.iter().map(|y| profile.state_at(*y)[0]).collect();
    let times: Vec<f64> = (0..=samples).map(|k| t1.powf(k as f64 / samples as f64)).collect();
    let mut distances = Vec::new();
    let mut err = None;
    evolve(&u0, 1.0, &times, &params, grid, true, |t, u| match rescale_to_similarity(u, t, &params, grid, &ys) {
        Ok(w) => distances.push(w.iter().zip(&v0).fold(0.0f64, |a, (w, v)| a.max((w - v).abs()))),
        Err(e) => err = Some(e),
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    let reduction = distances[0] / distances.last().unwrap();
    Ok(StabilityRecord { perturbation_size: size, times, distances, reduction, passed: reduction >= 3.0 })
}

/// Trapezoid mass of grid data.
pub fn mass(u: &[f64], grid: &PdeGrid) -> f64 {
    let h = grid.h();
    match grid.boundary {
        Boundary::Hinged => h * (u.iter().sum::<f64>() - 0.5 * (u[0] + u[u.len() - 1])),
        Boundary::Periodic => h * u.iter().sum::<f64>(),
    }
}
