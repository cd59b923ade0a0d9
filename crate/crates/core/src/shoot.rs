//! Profile boundary-value problem on [0, L]: symmetry data at the origin,
//! decay at L. Solved by multiple shooting with variational Jacobians.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::banded::BandMatrix;
use crate::error::{Error, Result};
use crate::odesys::{integrate_system, profile_coefficients, sign_m, IntegratorConfig, OdeForm, OdeSystem, Outcome, Sampling, Trajectory};
use crate::params::{decay_power, tail_decay_rate, Parity, ProblemParams};
use crate::spectral::{eigenfunction_state, KernelQuadrature};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonConfig {
    pub max_iter: usize,
    pub damping_min: f64,
    pub residual_tol: f64,
    /// Accepted when Levenberg-Marquardt stalls at the integration noise floor.
    pub stall_tol: f64,
    /// Relative step for finite-difference checks.
    pub jacobian_fd_step: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig { max_iter: 40, damping_min: 1.0 / 64.0, residual_tol: 1e-10, stall_tol: 1e-8, jacobian_fd_step: 1e-7 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootConfig {
    pub form: OdeForm,
    pub integrator: IntegratorConfig,
    pub newton: NewtonConfig,
    /// Truncation length; automatic when None.
    pub length: Option<f64>,
    /// Largest modal growth e^{growth} allowed across one shooting segment.
    pub segment_growth: f64,
    pub max_segment: f64,
    /// Required ratio (aL)^{2m/(2m-1)} / |b| for the far-field projection.
    pub asymptotic_ratio: f64,
    /// max|V| on the last tenth of [0, L], relative to the amplitude.
    pub tail_tol: f64,
    pub max_extensions: usize,
    /// Reject profiles failing the integral identity at 1e-6.
    pub identity_gate: bool,
}

impl Default for ShootConfig {
    fn default() -> Self {
        ShootConfig {
            form: OdeForm::ProfileOriginal,
            integrator: IntegratorConfig { max_step: 0.5, rtol: 1e-12, atol: 1e-14, ..Default::default() },
            newton: NewtonConfig::default(),
            length: None,
            segment_growth: 2.5,
            max_segment: 2.0,
            asymptotic_ratio: 10.0,
            tail_tol: 1e-6,
            max_extensions: 5,
            identity_gate: true,
        }
    }
}

/// Which parameter the extra unknown λ stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContParam {
    P,
    Alpha,
}

impl ContParam {
    pub fn value(self, params: &ProblemParams) -> f64 {
        match self {
            ContParam::P => params.p,
            ContParam::Alpha => params.alpha,
        }
    }

    pub fn apply(self, params: &ProblemParams, lam: f64) -> ProblemParams {
        match self {
            ContParam::P => params.with_p(lam),
            ContParam::Alpha => params.with_alpha(lam),
        }
    }

    pub fn in_domain(self, lam: f64) -> bool {
        match self {
            ContParam::P => lam > 1.0,
            ContParam::Alpha => lam > -1.0,
        }
    }
}

/// Spec-level bundle of a shooting problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShootSpec {
    pub parity: Parity,
    pub free_params: Vec<f64>,
    pub config: ShootConfig,
}

/// (c₁, 0, c₂, 0, ...) for Even, (0, c₁, 0, c₂, ...) for Odd.
pub fn initial_state(parity: Parity, free_params: &[f64], m: u32) -> Result<Vec<f64>> {
    let m = m as usize;
    if free_params.len() != m {
        return Err(Error::InvalidParams(format!("expected {m} free parameters, got {}", free_params.len())));
    }
    let off = match parity {
        Parity::Even => 0,
        Parity::Odd => 1,
    };
    let mut s = vec![0.0; 2 * m];
    for (j, c) in free_params.iter().enumerate() {
        s[2 * j + off] = *c;
    }
    Ok(s)
}

/// The free parameters read back from a state at the origin.
pub fn free_params_of(parity: Parity, state: &[f64]) -> Vec<f64> {
    let off = match parity {
        Parity::Even => 0,
        Parity::Odd => 1,
    };
    state.iter().skip(off).step_by(2).copied().collect()
}

/// (V(L), ..., V^(m-1)(L)) / max(1, max|V|).
pub fn terminal_residual(trajectory: &Trajectory, l: f64, m: u32, scale: Option<f64>) -> Result<Vec<f64>> {
    let last_y = *trajectory.ys.last().ok_or_else(|| Error::Overflow { y: 0.0 })?;
    if (last_y - l).abs() > 1e-9 * l.max(1.0) {
        return Err(Error::Overflow { y: last_y });
    }
    let scale = scale.unwrap_or_else(|| {
        trajectory.states.iter().fold(1.0f64, |a, s| a.max(s[0].abs()))
    });
    Ok(trajectory.last_state()[..m as usize].iter().map(|v| v / scale).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecayKind {
    Exponential,
    Algebraic,
    Undetermined,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayEstimate {
    pub kind: DecayKind,
    pub fitted_rate: f64,
    pub fit_window: (f64, f64),
    pub fit_residual: f64,
}

impl DecayEstimate {
    fn undetermined(window: (f64, f64)) -> Self {
        DecayEstimate { kind: DecayKind::Undetermined, fitted_rate: f64::NAN, fit_window: window, fit_residual: f64::NAN }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileSolution {
    pub params: ProblemParams,
    pub form: OdeForm,
    pub parity: Parity,
    pub length: f64,
    pub grid: Vec<f64>,
    /// values[i] = (V, V', ..., V^(2m-1)) at grid[i]
    pub values: Vec<Vec<f64>>,
    /// ∫₀^y V and ∫₀^y f(V) at grid points.
    pub cum_v: Vec<f64>,
    pub cum_f: Vec<f64>,
    pub shooting_params: Vec<f64>,
    pub amplitude: f64,
    pub sup_norm: f64,
    pub tail: DecayEstimate,
    pub residual_norm: f64,
    /// Shooting nodes and the converged unknown vector (for restarts).
    pub mesh: Vec<f64>,
    #[serde(skip)]
    pub unknowns: Vec<f64>,
}

impl ProfileSolution {
    pub fn m(&self) -> u32 {
        self.params.m
    }

    pub fn v(&self) -> Vec<f64> {
        self.values.iter().map(|s| s[0]).collect()
    }

    /// (y, V) on [-L, L].
    pub fn symmetric_extension(&self) -> (Vec<f64>, Vec<f64>) {
        let sign = match self.parity {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
        };
        let n = self.grid.len();
        let mut y = Vec::with_capacity(2 * n - 1);
        let mut v = Vec::with_capacity(2 * n - 1);
        for i in (1..n).rev() {
            y.push(-self.grid[i]);
            v.push(sign * self.values[i][0]);
        }
        for i in 0..n {
            y.push(self.grid[i]);
            v.push(self.values[i][0]);
        }
        (y, v)
    }

    /// State at y ≥ 0 by Taylor expansion from the nearest grid point; zero beyond L.
    pub fn state_at(&self, y: f64) -> Vec<f64> {
        let n = self.values[0].len();
        if y > self.length {
            return vec![0.0; n];
        }
        let h = self.grid.get(1).map(|g| g - self.grid[0]).unwrap_or(1.0);
        let i = ((y / h).round() as usize).min(self.grid.len() - 1);
        let dy = y - self.grid[i];
        let s = &self.values[i];
        (0..n)
            .map(|j| {
                let mut acc = 0.0;
                let mut term = 1.0;
                for k in 0..(n - j) {
                    acc += s[j + k] * term;
                    term *= dy / (k + 1) as f64;
                }
                acc
            })
            .collect()
    }

    /// Length of the region where |V| > 0.05·max|V| on the full line.
    pub fn support_width(&self) -> f64 {
        let thr = 0.05 * self.sup_norm;
        let last = self.values.iter().rposition(|s| s[0].abs() > thr);
        last.map(|i| 2.0 * self.grid[i]).unwrap_or(0.0)
    }

    pub fn negated(&self) -> ProfileSolution {
        let mut s = self.clone();
        for v in s.values.iter_mut() {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        s.cum_v.iter_mut().for_each(|x| *x = -*x);
        s.cum_f.iter_mut().for_each(|x| *x = -*x);
        s.shooting_params.iter_mut().for_each(|x| *x = -*x);
        s.amplitude = -s.amplitude;
        s
    }
}

/// Initial guess for the shooting unknowns.
pub enum Guess<'a> {
    /// Free parameters at the origin; node states come from a capped forward shot.
    Params(Vec<f64>),
    /// amplitude·ψ_l.
    Eigen { quadrature: &'a KernelQuadrature, l: u32, amplitude: f64 },
    /// A previously computed profile (possibly at other parameters).
    Profile(&'a ProfileSolution),
}

/// Amplitude [ĉ_l (p_l - p)]^{1/(p-1)} of the bifurcating branch.
pub fn bifurcation_amplitude(c_hat: f64, p_l: f64, p: f64) -> Result<f64> {
    if !(p < p_l) {
        return Err(Error::InvalidParams(format!("p = {p} must lie below p_l = {p_l}")));
    }
    Ok((c_hat * (p_l - p)).powf(1.0 / (p - 1.0)))
}

/// Free parameters of A·ψ_l at the origin.
pub fn seed_from_bifurcation(l: u32, p: f64, p_l: f64, c_hat: f64, m: u32, quadrature: &KernelQuadrature) -> Result<Vec<f64>> {
    let a = bifurcation_amplitude(c_hat, p_l, p)?;
    if a == 0.0 {
        return Err(Error::TrivialSolution { amplitude: 0.0 });
    }
    let st = eigenfunction_state(quadrature, l, 0.0, 2 * m as usize);
    Ok(free_params_of(Parity::of_index(l), &st).into_iter().map(|v| a * v).collect())
}

pub fn amplitude_floor(params: &ProblemParams) -> f64 {
    1e-4 * params.v_plus().max(1.0)
}

/// Roots of k^{2m} = (-1)^m (aLk + b), the frozen far-field modes at y = L.
pub fn far_field_roots(m: u32, a: f64, b: f64, l: f64) -> Vec<num_complex::Complex64> {
    let n = 2 * m as usize;
    // companion matrix of k^n - s·aL·k - s·b
    let s = sign_m(m);
    let mut c = DMatrix::<f64>::zeros(n, n);
    for i in 0..n - 1 {
        c[(i + 1, i)] = 1.0;
    }
    c[(0, n - 1)] = s * b;
    c[(1, n - 1)] = s * a * l;
    c.complex_eigenvalues().iter().copied().collect()
}

/// Rows W with W·X = 0 exactly on the span of the decaying far-field modes.
pub fn decaying_projection(m: u32, a: f64, b: f64, l: f64) -> Result<Vec<Vec<f64>>> {
    use num_complex::Complex64;
    let mu = m as usize;
    let mut roots = far_field_roots(m, a, b, l);
    // the algebraic mode has the root of smallest modulus
    roots.sort_by(|x, y| x.norm().partial_cmp(&y.norm()).unwrap());
    let mut rest: Vec<Complex64> = roots[1..].to_vec();
    rest.sort_by(|x, y| x.re.partial_cmp(&y.re).unwrap());
    let decaying: Vec<Complex64> = rest.iter().take(mu).copied().collect();
    if decaying.iter().filter(|k| k.re < 0.0).count() != mu {
        return Err(Error::Continuation(format!("far field at L = {l} is not asymptotic")));
    }
    // q(D) = Π (D - k_j)
    let mut q = vec![Complex64::new(1.0, 0.0)];
    for k in &decaying {
        let mut nq = vec![Complex64::new(0.0, 0.0); q.len() + 1];
        for (i, c) in q.iter().enumerate() {
            nq[i + 1] += c;
            nq[i] -= c * k;
        }
        q = nq;
    }
    let qr: Vec<f64> = q.iter().map(|c| c.re).collect();
    let norm = qr.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut w = vec![vec![0.0; 2 * mu]; mu];
    for (i, row) in w.iter_mut().enumerate() {
        for (j, qj) in qr.iter().enumerate() {
            row[i + j] = qj / norm;
        }
    }
    Ok(w)
}

/// Smallest L at which the far-field root structure is asymptotic.
pub fn asymptotic_length(m: u32, a: f64, b: f64, ratio: f64) -> f64 {
    let q = decay_power(m);
    (ratio * b.abs()).powf(1.0 / q) / a
}

/// State, fundamental matrix and parameter sensitivity of the profile ODE.
struct VarSystem {
    params: ProblemParams,
    form: OdeForm,
    cont: ContParam,
    m: usize,
    with_var: bool,
    with_quad: bool,
    /// Absolute-tolerance factor for the state and its λ-sensitivity.
    state_atol: f64,
}

impl VarSystem {
    fn coefs(&self) -> (f64, f64, f64, f64, f64) {
        let (a, b) = profile_coefficients(&self.params, self.form);
        let beta = self.params.beta();
        let dbeta = match self.cont {
            ContParam::P => -beta / (self.params.p - 1.0),
            ContParam::Alpha => 1.0 / (self.params.p - 1.0),
        };
        let (da, db) = match self.form {
            OdeForm::ProfileRescaled => (-a * dbeta / beta, 0.0),
            _ => (0.0, dbeta),
        };
        (a, b, da, db, sign_m(self.params.m))
    }
}

impl OdeSystem for VarSystem {
    fn atol_scale(&self, i: usize) -> f64 {
        let n = 2 * self.m;
        if i < n || (self.with_var && i >= n + n * n && i < n + n * n + n) {
            self.state_atol
        } else {
            1.0
        }
    }

    fn dim(&self) -> usize {
        let n = 2 * self.m;
        let mut d = n;
        if self.with_var {
            d += n * n + n;
        }
        if self.with_quad {
            d += 2;
        }
        d
    }

    fn guard_dims(&self) -> usize {
        2 * self.m
    }

    fn rhs(&self, y: f64, x: &[f64], dx: &mut [f64]) {
        let n = 2 * self.m;
        let (a, b, da, db, s) = self.coefs();
        let v = x[0];
        let fv = self.params.f(v);
        dx[..n - 1].copy_from_slice(&x[1..n]);
        dx[n - 1] = s * (a * y * x[1] + b * v - fv);
        let mut off = n;
        if self.with_var {
            let r0 = s * (b - self.params.df(v));
            let r1 = s * a * y;
            // Φ stored column-major: column j at off + j·n
            for j in 0..=n {
                let col = &x[off + j * n..off + (j + 1) * n];
                let d = &mut dx[off + j * n..off + (j + 1) * n];
                d[..n - 1].copy_from_slice(&col[1..]);
                d[n - 1] = r0 * col[0] + r1 * col[1];
            }
            // last column is the λ-sensitivity with forcing ∂g/∂λ
            let dfl = match self.cont {
                ContParam::P => self.params.df_dp(v),
                ContParam::Alpha => 0.0,
            };
            dx[off + n * n + n - 1] += s * (da * y * x[1] + db * v - dfl);
            off += n * n + n;
        }
        if self.with_quad {
            dx[off] = v;
            dx[off + 1] = fv;
        }
    }
}

/// A linear side condition g·(c, λ) = rhs closing the shooting system.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub grad_c: Vec<f64>,
    pub grad_lam: f64,
    pub rhs: f64,
}

impl Constraint {
    pub fn fix_param(lam: f64, m: u32) -> Self {
        Constraint { grad_c: vec![0.0; m as usize], grad_lam: 1.0, rhs: lam }
    }

    fn eval(&self, c: &[f64], lam: f64) -> f64 {
        self.grad_c.iter().zip(c).map(|(g, c)| g * c).sum::<f64>() + self.grad_lam * lam - self.rhs
    }
}

/// Multiple-shooting discretisation on a fixed mesh.
#[derive(Debug, Clone)]
pub struct MsProblem {
    pub base: ProblemParams,
    pub cont: ContParam,
    pub form: OdeForm,
    pub parity: Parity,
    pub mesh: Vec<f64>,
    pub config: ShootConfig,
}

struct SegmentResult {
    end: Vec<f64>,
    phi: Vec<f64>,
}

impl MsProblem {
    pub fn m(&self) -> usize {
        self.base.m as usize
    }

    fn block(&self) -> usize {
        2 * self.m() + 1
    }

    pub fn segments(&self) -> usize {
        self.mesh.len() - 1
    }

    pub fn n_unknowns(&self) -> usize {
        self.m() + 1 + self.block() * (self.segments() - 1)
    }

    pub fn length(&self) -> f64 {
        *self.mesh.last().unwrap()
    }

    fn offset(&self, k: usize) -> usize {
        if k == 0 {
            0
        } else {
            self.m() + 1 + self.block() * (k - 1)
        }
    }

    pub fn lam(&self, z: &[f64]) -> f64 {
        z[self.m()]
    }

    pub fn c<'a>(&self, z: &'a [f64]) -> &'a [f64] {
        &z[..self.m()]
    }

    /// Start state of segment k.
    fn start_state(&self, z: &[f64], k: usize) -> Vec<f64> {
        if k == 0 {
            initial_state(self.parity, self.c(z), self.base.m).expect("length checked")
        } else {
            let o = self.offset(k);
            z[o..o + 2 * self.m()].to_vec()
        }
    }

    fn seg_lam(&self, z: &[f64], k: usize) -> f64 {
        if k == 0 {
            z[self.m()]
        } else {
            z[self.offset(k) + 2 * self.m()]
        }
    }

    pub fn params_at(&self, lam: f64) -> ProblemParams {
        self.cont.apply(&self.base, lam)
    }

    fn integrate_segment(&self, z: &[f64], k: usize, with_var: bool) -> Result<SegmentResult> {
        let n = 2 * self.m();
        let lam = self.seg_lam(z, k);
        if !self.cont.in_domain(lam) {
            return Err(Error::InvalidParams(format!("parameter {lam} left its domain")));
        }
        let mut x0 = self.start_state(z, k);
        // absolute tolerance follows the local solution size
        let state_atol = x0.iter().fold(0.0f64, |a, v| a.max(v.abs())).clamp(1e-250, 1.0);
        let sys = VarSystem { params: self.params_at(lam), form: self.form, cont: self.cont, m: self.m(), with_var, with_quad: false, state_atol };
        if with_var {
            x0.resize(n + n * n + n, 0.0);
            for j in 0..n {
                x0[n + j * n + j] = 1.0;
            }
        }
        let mut cfg = self.config.integrator;
        cfg.overflow_guard = f64::INFINITY;

        let out = integrate_system(&sys, self.mesh[k], self.mesh[k + 1], &x0, &cfg, Sampling::EndOnly)?;
        match out {
            Outcome::Completed(t) => {
                let last = t.last_state();
                Ok(SegmentResult { end: last[..n].to_vec(), phi: last[n..].to_vec() })
            }
            Outcome::Blowup { y_est, .. } => Err(Error::BlowupInShot { y: y_est }),
        }
    }

    /// Row scales: each continuity and terminal block is measured against the local state size.
    pub fn scales(&self, z: &[f64]) -> Vec<f64> {
        let n = 2 * self.m();
        let s = self.block();
        let kseg = self.segments();
        let size = |k: usize| self.start_state(z, k).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let sizes: Vec<f64> = (0..kseg).map(size).collect();
        let floor = sizes.iter().fold(0.0f64, |a, v| a.max(*v)).max(1.0) * 1e-8;
        let mut sc = vec![1.0; self.n_unknowns()];
        for k in 1..kseg {
            let row0 = 1 + s * (k - 1);
            sc[row0..row0 + n].fill(sizes[k].max(floor));
        }
        let row0 = 1 + s * (kseg - 1);
        sc[row0..row0 + self.m()].fill(sizes[kseg - 1].max(floor));
        sc
    }

    fn far_projection(&self, lam: f64) -> Result<Vec<Vec<f64>>> {
        let p = self.params_at(lam);
        let (a, b) = profile_coefficients(&p, self.form);
        decaying_projection(self.base.m, a, b, self.length())
    }

    /// Residual and (optionally) the banded Jacobian, rows divided by `sc`.
    pub fn eval(&self, z: &[f64], constraint: &Constraint, sc: &[f64], with_jac: bool) -> Result<(Vec<f64>, Option<BandMatrix>)> {
        let (mut r, mut jac) = self.eval_raw(z, constraint, with_jac)?;
        apply_scales(&mut r, jac.as_mut(), sc);
        Ok((r, jac))
    }

    fn eval_raw(&self, z: &[f64], constraint: &Constraint, with_jac: bool) -> Result<(Vec<f64>, Option<BandMatrix>)> {
        let m = self.m();
        let n = 2 * m;
        let s = self.block();
        let kseg = self.segments();
        let segs: Vec<Result<SegmentResult>> = (0..kseg).into_par_iter().map(|k| self.integrate_segment(z, k, with_jac)).collect();
        let segs: Vec<SegmentResult> = segs.into_iter().collect::<Result<_>>()?;
        let nu = self.n_unknowns();
        let mut r = vec![0.0; nu];
        let mut jac = if with_jac { Some(BandMatrix::zeros(nu, 3 * m + 2, 3 * m + 1)) } else { None };
        r[0] = constraint.eval(self.c(z), self.lam(z));
        if let Some(j) = jac.as_mut() {
            for (i, g) in constraint.grad_c.iter().enumerate() {
                j.set(0, i, *g);
            }
            j.set(0, m, constraint.grad_lam);
        }
        let even_off = match self.parity {
            Parity::Even => 0,
            Parity::Odd => 1,
        };
        // d(end)/d(block k unknowns) written into rows `row0..` with an optional left projection
        let write_block = |j: &mut BandMatrix, row0: usize, k: usize, seg: &SegmentResult, w: Option<&Vec<Vec<f64>>>| {
            let phi = |i: usize, col: usize| seg.phi[col * n + i];
            let nrows = w.map(|w| w.len()).unwrap_or(n);
            let proj = |i: usize, col: usize| -> f64 {
                match w {
                    Some(w) => (0..n).map(|q| w[i][q] * phi(q, col)).sum(),
                    None => phi(i, col),
                }
            };
            let o = self.offset(k);
            for i in 0..nrows {
                if k == 0 {
                    for cj in 0..m {
                        j.set(row0 + i, o + cj, proj(i, 2 * cj + even_off));
                    }
                    j.set(row0 + i, o + m, proj(i, n));
                } else {
                    for cj in 0..n {
                        j.set(row0 + i, o + cj, proj(i, cj));
                    }
                    j.set(row0 + i, o + n, proj(i, n));
                }
            }
        };
        for k in 1..kseg {
            let row0 = 1 + s * (k - 1);
            let xk = &z[self.offset(k)..self.offset(k) + n];
            for i in 0..n {
                r[row0 + i] = segs[k - 1].end[i] - xk[i];
            }
            r[row0 + n] = self.seg_lam(z, k - 1) - self.seg_lam(z, k);
            if let Some(j) = jac.as_mut() {
                write_block(j, row0, k - 1, &segs[k - 1], None);
                for i in 0..n {
                    j.set(row0 + i, self.offset(k) + i, -1.0);
                }
                let lam_prev = if k - 1 == 0 { m } else { self.offset(k - 1) + n };
                j.set(row0 + n, lam_prev, 1.0);
                j.set(row0 + n, self.offset(k) + n, -1.0);
            }
        }
        let w = self.far_projection(self.seg_lam(z, kseg - 1))?;
        let row0 = 1 + s * (kseg - 1);
        let end = &segs[kseg - 1].end;
        for i in 0..m {
            r[row0 + i] = w[i].iter().zip(end).map(|(a, b)| a * b).sum::<f64>();
        }
        if let Some(j) = jac.as_mut() {
            write_block(j, row0, kseg - 1, &segs[kseg - 1], Some(&w));
            // the projection itself moves with λ
            let lam = self.seg_lam(z, kseg - 1);
            let h = 1e-7 * (1.0 + lam.abs());
            let wp = self.far_projection(lam + h)?;
            let col = if kseg == 1 { m } else { self.offset(kseg - 1) + n };
            for i in 0..m {
                let d: f64 = (0..n).map(|q| (wp[i][q] - w[i][q]) / h * end[q]).sum();
                j.add(row0 + i, col, d);
            }
        }
        Ok((r, jac))
    }

    pub fn residual_norm(r: &[f64]) -> f64 {
        r.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    /// Damped Newton, then Levenberg-Marquardt when the Jacobian is nearly singular.
    pub fn newton(&self, z0: &[f64], constraint: &Constraint) -> Result<(Vec<f64>, f64, usize)> {
        match self.damped_newton(z0, constraint) {
            Err(Error::NewtonDiverged { .. }) | Err(Error::Singular) => self.levenberg_marquardt(z0, constraint),
            other => other,
        }
    }

    /// Damped Newton with backtracking; row scales follow the iterate.
    fn damped_newton(&self, z0: &[f64], constraint: &Constraint) -> Result<(Vec<f64>, f64, usize)> {
        let cfg = self.config.newton;
        let mut z = z0.to_vec();
        let (mut r_raw, mut j_raw) = self.eval_raw(&z, constraint, true)?;
        for it in 0..=cfg.max_iter {
            let sc = self.scales(&z);
            let mut r = r_raw.clone();
            let mut jac = j_raw.take().expect("jacobian requested");
            apply_scales(&mut r, Some(&mut jac), &sc);
            let norm = Self::residual_norm(&r);
            if norm <= cfg.residual_tol {
                return Ok((z, norm, it));
            }
            if it == cfg.max_iter {
                return Err(Error::NewtonDiverged { iters: it, residual: norm });
            }
            let lu = jac.factor()?;
            let mut dz: Vec<f64> = r.iter().map(|v| -v).collect();
            lu.solve(&mut dz);
            let mut t = 1.0;
            let mut accepted = false;
            while t >= cfg.damping_min {
                let trial: Vec<f64> = z.iter().zip(&dz).map(|(a, d)| a + t * d).collect();
                if let Ok((rt, jt)) = self.eval_raw(&trial, constraint, true) {
                    let nt = rt.iter().zip(&sc).fold(0.0f64, |a, (v, s)| a.max((v / s).abs()));
                    if nt.is_finite() && nt < norm {
                        z = trial;
                        r_raw = rt;
                        j_raw = jt;
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !accepted {
                return Err(Error::NewtonDiverged { iters: it + 1, residual: norm });
            }
        }
        unreachable!()
    }

    /// Column scales: node unknowns measured against the node state size.
    fn col_scales(&self, z: &[f64]) -> Vec<f64> {
        let n = 2 * self.m();
        let mut cs = vec![1.0; self.n_unknowns()];
        let c = self.c(z).iter().fold(1.0f64, |a, v| a.max(v.abs()));
        cs[..self.m()].fill(c);
        let global = (0..self.segments()).map(|k| self.start_state(z, k)).flatten().fold(1.0f64, |a, v| a.max(v.abs()));
        for k in 1..self.segments() {
            let o = self.offset(k);
            let size = z[o..o + n].iter().fold(0.0f64, |a, v| a.max(v.abs()));
            cs[o..o + n].fill(size.max(1e-8 * global));
        }
        cs
    }

    fn levenberg_marquardt(&self, z0: &[f64], constraint: &Constraint) -> Result<(Vec<f64>, f64, usize)> {
        let cfg = self.config.newton;
        let mut z = z0.to_vec();
        let mut mu = 1e-4;
        let sumsq = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();
        let mut norm = f64::INFINITY;
        for it in 0..4 * cfg.max_iter {
            let sc = self.scales(&z);
            let (mut r, jac) = self.eval_raw(&z, constraint, true)?;
            let mut jac = jac.expect("jacobian requested");
            apply_scales(&mut r, Some(&mut jac), &sc);
            norm = Self::residual_norm(&r);
            if norm <= cfg.residual_tol {
                return Ok((z, norm, it));
            }
            let cs = self.col_scales(&z);
            let (ata, g) = jac.normal_equations(&r, &cs);
            let f0 = sumsq(&r);
            let mut accepted = false;
            while mu < 1e10 {
                let mut a = ata.clone();
                for i in 0..a.dim() {
                    let d = a.get(i, i);
                    a.set(i, i, d + mu * (d + 1e-12));
                }
                let mut step: Vec<f64> = g.iter().map(|v| -v).collect();
                if let Ok(lu) = a.factor() {
                    lu.solve(&mut step);
                    let trial: Vec<f64> = z.iter().zip(&step).zip(&cs).map(|((z, d), c)| z + d * c).collect();
                    if let Ok((rt, _)) = self.eval_raw(&trial, constraint, false) {
                        let rt: Vec<f64> = rt.iter().zip(&sc).map(|(v, s)| v / s).collect();
                        if sumsq(&rt) < f0 {
                            z = trial;
                            mu = (mu / 3.0).max(1e-12);
                            accepted = true;
                            break;
                        }
                    }
                }
                mu *= 4.0;
            }
            if !accepted {
                if norm <= cfg.stall_tol {
                    return Ok((z, norm, it));
                }
                break;
            }
        }
        Err(Error::NewtonDiverged { iters: 4 * cfg.max_iter, residual: norm })
    }

    /// Dense output of a converged unknown vector.
    pub fn assemble(&self, z: &[f64], residual_norm: f64) -> Result<ProfileSolution> {
        let n = 2 * self.m();
        let lam = self.lam(z);
        let params = self.params_at(lam);
        let ds = self.config.integrator.dense_step;
        let pieces: Vec<Result<Trajectory>> = (0..self.segments())
            .into_par_iter()
            .map(|k| {
                let sys = VarSystem { params, form: self.form, cont: self.cont, m: self.m(), with_var: false, with_quad: true, state_atol: 1.0 };
                let mut x0 = self.start_state(z, k);
                x0.extend([0.0, 0.0]);
                let mut cfg = self.config.integrator;
                cfg.overflow_guard = f64::INFINITY;
                integrate_system(&sys, self.mesh[k], self.mesh[k + 1], &x0, &cfg, Sampling::Grid(ds))?.into_completed()
            })
            .collect();
        let mut grid = Vec::new();
        let mut values = Vec::new();
        let mut cum_v = Vec::new();
        let mut cum_f = Vec::new();
        let (mut qv, mut qf) = (0.0, 0.0);
        for (k, piece) in pieces.into_iter().enumerate() {
            let t = piece?;
            let skip = usize::from(k > 0);
            for (y, st) in t.ys.iter().zip(&t.states).skip(skip) {
                grid.push(*y);
                values.push(st[..n].to_vec());
                cum_v.push(qv + st[n]);
                cum_f.push(qf + st[n + 1]);
            }
            let last = t.last_state();
            qv += last[n];
            qf += last[n + 1];
        }
        let sup = values.iter().fold(0.0f64, |a, s| a.max(s[0].abs()));
        let amplitude = match self.parity {
            Parity::Even => values[0][0],
            Parity::Odd => {
                let i = values.iter().enumerate().max_by(|a, b| a.1[0].abs().partial_cmp(&b.1[0].abs()).unwrap()).unwrap().0;
                values[i][0]
            }
        };
        let mut sol = ProfileSolution {
            params,
            form: self.form,
            parity: self.parity,
            length: self.length(),
            grid,
            values,
            cum_v,
            cum_f,
            shooting_params: self.c(z).to_vec(),
            amplitude,
            sup_norm: sup,
            tail: DecayEstimate::undetermined((0.0, 0.0)),
            residual_norm,
            mesh: self.mesh.clone(),
            unknowns: z.to_vec(),
        };
        sol.tail = classify_decay(&sol);
        Ok(sol)
    }

    /// Node states for a guess.
    pub fn initial_unknowns(&self, guess: &Guess, lam: f64) -> Result<Vec<f64>> {
        let m = self.m();
        let n = 2 * m;
        let mut z = vec![0.0; self.n_unknowns()];
        let node_state: Box<dyn Fn(f64) -> Vec<f64> + Sync> = match guess {
            Guess::Params(c) => {
                let x0 = initial_state(self.parity, c, self.base.m)?;
                let cap = 2.0 * c.iter().fold(1.0f64, |a, v| a.max(v.abs())).max(self.params_at(lam).v_plus());
                let sys = VarSystem { params: self.params_at(lam), form: self.form, cont: self.cont, m, with_var: false, with_quad: false, state_atol: 1.0 };
                let cfg = IntegratorConfig { overflow_guard: cap, ..self.config.integrator };
                let t = match integrate_system(&sys, 0.0, self.length(), &x0, &cfg, Sampling::Grid(cfg.dense_step))? {
                    Outcome::Completed(t) => t,
                    Outcome::Blowup { mut trajectory, .. } => {
                        // drop the runaway part
                        let keep = trajectory.states.iter().position(|s| s[0].abs() > 0.5 * cap).unwrap_or(trajectory.len());
                        trajectory.ys.truncate(keep.max(1));
                        trajectory.states.truncate(keep.max(1));
                        trajectory
                    }
                };
                Box::new(move |y: f64| {
                    let h = t.ys.get(1).map(|v| v - t.ys[0]).unwrap_or(1.0);
                    let i = (y / h).round() as usize;
                    if i < t.len() {
                        t.states[i].clone()
                    } else {
                        vec![0.0; n]
                    }
                })
            }
            Guess::Eigen { quadrature, l, amplitude } => {
                let (q, l, a) = (*quadrature, *l, *amplitude);
                Box::new(move |y: f64| eigenfunction_state(q, l, y, n).into_iter().map(|v| a * v).collect())
            }
            Guess::Profile(sol) => {
                let s = *sol;
                Box::new(move |y: f64| s.state_at(y))
            }
        };
        let st0 = node_state(0.0);
        z[..m].copy_from_slice(&free_params_of(self.parity, &st0));
        z[m] = lam;
        let nodes: Vec<(usize, Vec<f64>)> = (1..self.segments()).into_par_iter().map(|k| (k, node_state(self.mesh[k]))).collect();
        for (k, st) in nodes {
            let o = self.offset(k);
            z[o..o + n].copy_from_slice(&st);
            z[o + n] = lam;
        }
        Ok(z)
    }

    /// Overwrite every copy of λ.
    pub fn set_lam(&self, z: &mut [f64], lam: f64) {
        let n = 2 * self.m();
        z[self.m()] = lam;
        for k in 1..self.segments() {
            let o = self.offset(k);
            z[o + n] = lam;
        }
    }

    /// Unknowns sampled from a dense profile at this mesh's nodes.
    pub fn unknowns_from(&self, sol: &ProfileSolution, lam: f64) -> Vec<f64> {
        let n = 2 * self.m();
        let mut z = vec![0.0; self.n_unknowns()];
        z[..self.m()].copy_from_slice(&sol.shooting_params);
        for k in 1..self.segments() {
            let o = self.offset(k);
            z[o..o + n].copy_from_slice(&sol.state_at(self.mesh[k]));
        }
        self.set_lam(&mut z, lam);
        z
    }

    /// Map unknowns from a mesh that is a prefix of this one; new nodes get zero states.
    pub fn extend_unknowns(&self, old: &MsProblem, z_old: &[f64]) -> Vec<f64> {
        let n = 2 * self.m();
        let mut z = vec![0.0; self.n_unknowns()];
        let lam = old.lam(z_old);
        let copy = old.n_unknowns();
        z[..copy].copy_from_slice(z_old);
        for k in old.segments()..self.segments() {
            let o = self.offset(k);
            z[o + n] = lam;
        }
        z
    }
}

/// Shooting nodes on [0, L], multiples of `ds`, sized by the local modal growth.
pub fn build_mesh(m: u32, a: f64, b: f64, amp: f64, p: f64, l: f64, cfg: &ShootConfig) -> Vec<f64> {
    let ds = cfg.integrator.dense_step;
    let m2 = 2.0 * m as f64;
    let nl = (p * amp.max(1.0).powf(p - 1.0) + b.abs()).powf(1.0 / m2);
    let n_total = (l / ds).round() as usize;
    let mut nodes = vec![0usize];
    while *nodes.last().unwrap() < n_total {
        let y = *nodes.last().unwrap() as f64 * ds;
        let k = nl.max((a * (y + 1.0)).powf(1.0 / (m2 - 1.0)));
        let h = (cfg.segment_growth / k).min(cfg.max_segment);
        let steps = ((h / ds).floor() as usize).max(1);
        nodes.push((nodes.last().unwrap() + steps).min(n_total));
    }
    nodes.into_iter().map(|i| i as f64 * ds).collect()
}

/// Full-line width of the region where |ψ_l| > 0.05·max.
pub fn eigen_width(q: &KernelQuadrature, l: u32) -> f64 {
    let ys: Vec<f64> = (0..1200).map(|i| i as f64 * 0.1).collect();
    let v: Vec<f64> = ys.par_iter().map(|y| q.derivative(*y, l).abs()).collect();
    let sup = v.iter().fold(0.0f64, |a, x| a.max(*x));
    v.iter().rposition(|x| *x > 0.05 * sup).map(|i| 2.0 * ys[i]).unwrap_or(0.0)
}

/// Automatic truncation length.
pub fn default_length(params: &ProblemParams, form: OdeForm, width: f64, cfg: &ShootConfig) -> f64 {
    let (a, b) = profile_coefficients(params, form);
    let m = params.m;
    let l_asym = asymptotic_length(m, a, b, cfg.asymptotic_ratio);
    // distance over which e^{-d (a·2m·y)^q} drops by e^{-36}
    let d = tail_decay_rate(m);
    let scale = (a * 2.0 * m as f64).powf(1.0 / (2.0 * m as f64 - 1.0));
    let l_decay = (36.0 / d).powf(1.0 / decay_power(m)) / scale;
    let l = (1.5 * width + 10.0).max(12.0).max(l_asym).max(0.5 * width + l_decay);
    let ds = cfg.integrator.dense_step;
    (l / ds).ceil() * ds
}

/// Solve the profile problem at fixed parameters.
pub fn solve_profile(params: &ProblemParams, parity: Parity, guess: &Guess, cfg: &ShootConfig) -> Result<ProfileSolution> {
    params.validate()?;
    cfg.integrator.validate()?;
    if let Guess::Params(c) = guess {
        if c.len() != params.m as usize || c.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("guess must hold m finite values".into()));
        }
    }
    let (a, b) = profile_coefficients(params, cfg.form);
    let width = match guess {
        Guess::Profile(s) => s.support_width(),
        Guess::Eigen { quadrature, l, .. } => eigen_width(quadrature, *l),
        _ => 0.0,
    };
    let amp_guess = match guess {
        Guess::Params(c) => c.iter().fold(0.0f64, |x, v| x.max(v.abs())),
        Guess::Eigen { amplitude, .. } => amplitude.abs(),
        Guess::Profile(s) => s.sup_norm,
    };
    let mut l = cfg.length.unwrap_or_else(|| default_length(params, cfg.form, width, cfg));
    let cont = ContParam::P;
    let constraint = Constraint::fix_param(params.p, params.m);
    let mut prob = MsProblem {
        base: *params,
        cont,
        form: cfg.form,
        parity,
        mesh: build_mesh(params.m, a, b, amp_guess, params.p, l, cfg),
        config: *cfg,
    };
    let mut z = prob.initial_unknowns(guess, params.p)?;
    let mut ext = 0;
    loop {
        let (zc, res, _) = prob.newton(&z, &constraint)?;
        let sol = prob.assemble(&zc, res)?;
        let floor = amplitude_floor(params);
        if sol.sup_norm < floor {
            return Err(Error::TrivialSolution { amplitude: sol.sup_norm });
        }
        if cfg.length.is_none() && ext < cfg.max_extensions && !tail_decayed(&sol, cfg.tail_tol) {
            ext += 1;
            l = (l * 1.25 / cfg.integrator.dense_step).ceil() * cfg.integrator.dense_step;
            let old = prob.clone();
            prob.mesh = extend_mesh(&old.mesh, params.m, a, b, sol.sup_norm, params.p, l, cfg);
            z = prob.extend_unknowns(&old, &zc);
            continue;
        }
        return accept(sol, cfg);
    }
}

fn apply_scales(r: &mut [f64], jac: Option<&mut BandMatrix>, sc: &[f64]) {
    for (v, s) in r.iter_mut().zip(sc) {
        *v /= s;
    }
    if let Some(j) = jac {
        for (i, s) in sc.iter().enumerate() {
            j.scale_row(i, 1.0 / s);
        }
    }
}

pub fn tail_decayed(sol: &ProfileSolution, tol: f64) -> bool {
    let start = 0.9 * sol.length;
    let tail = sol.grid.iter().zip(&sol.values).filter(|(y, _)| **y >= start).fold(0.0f64, |a, (_, s)| a.max(s[0].abs()));
    tail <= tol * sol.sup_norm.max(f64::MIN_POSITIVE)
}

/// Keep the old nodes and append new ones up to `l`.
#[allow(clippy::too_many_arguments)]
pub fn extend_mesh(old: &[f64], m: u32, a: f64, b: f64, amp: f64, p: f64, l: f64, cfg: &ShootConfig) -> Vec<f64> {
    let full = build_mesh(m, a, b, amp, p, l, cfg);
    let old_end = *old.last().unwrap();
    let mut mesh = old.to_vec();
    mesh.extend(full.into_iter().filter(|y| *y > old_end + 1e-9));
    if *mesh.last().unwrap() < l - 1e-9 {
        mesh.push(l);
    }
    mesh
}

/// Gates every accepted profile: algebraic tails and identity failures are rejected.
pub fn accept(sol: ProfileSolution, cfg: &ShootConfig) -> Result<ProfileSolution> {
    if sol.tail.kind == DecayKind::Algebraic {
        return Err(Error::AlgebraicTail);
    }
    if cfg.identity_gate {
        let rep = crate::classify::mass_identity(&sol)?;
        if rep.mass_identity_residual > 1e-6 {
            return Err(Error::IdentityViolated(rep.mass_identity_residual));
        }
    }
    Ok(sol)
}

fn local_extrema(ys: &[f64], vs: &[f64]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for i in 1..vs.len().saturating_sub(1) {
        let (a, b, c) = (vs[i - 1].abs(), vs[i].abs(), vs[i + 1].abs());
        if b > a && b >= c && b > 0.0 {
            out.push((ys[i], b));
        }
    }
    out
}

fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let rms = (x.iter().zip(y).map(|(a, b)| (b - icpt - slope * a).powi(2)).sum::<f64>() / n).sqrt();
    (slope, icpt, rms)
}

/// Fit the tail envelope on the window [0.6, 0.95] of the effective support.
pub fn classify_decay(profile: &ProfileSolution) -> DecayEstimate {
    let v = profile.v();
    classify_decay_samples(&profile.grid, &v, profile.params.m, profile.params.p)
}

/// The effective end is where |V| last exceeds 1e-11 of its maximum, so that
/// the fit sees signal rather than the solver's noise floor.
pub fn classify_decay_samples(ys: &[f64], vs: &[f64], m: u32, p: f64) -> DecayEstimate {
    let sup = vs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let end = vs.iter().rposition(|v| v.abs() > 1e-11 * sup).map(|i| ys[i]).unwrap_or(0.0);
    let window = (0.6 * end, 0.95 * end);
    let idx: Vec<usize> = (0..ys.len()).filter(|&i| ys[i] >= window.0 && ys[i] <= window.1).collect();
    if idx.len() < 5 {
        return DecayEstimate::undetermined(window);
    }
    let wy: Vec<f64> = idx.iter().map(|&i| ys[i]).collect();
    let wv: Vec<f64> = idx.iter().map(|&i| vs[i]).collect();
    let ext = local_extrema(&wy, &wv);
    if ext.len() < 4 {
        return DecayEstimate::undetermined(window);
    }
    let sign_changes = wv.windows(2).filter(|w| w[0] * w[1] < 0.0).count();
    let q = decay_power(m);
    let logv: Vec<f64> = ext.iter().map(|e| e.1.ln()).collect();
    let xe: Vec<f64> = ext.iter().map(|e| e.0.powf(q)).collect();
    let xa: Vec<f64> = ext.iter().map(|e| e.0.ln()).collect();
    let (se, _, re) = linear_fit(&xe, &logv);
    let (sa, _, ra) = linear_fit(&xa, &logv);
    let alg_slope = -2.0 * m as f64 / (p - 1.0);
    if ra < re {
        if (sa - alg_slope).abs() <= 0.2 * alg_slope.abs() {
            return DecayEstimate { kind: DecayKind::Algebraic, fitted_rate: sa, fit_window: window, fit_residual: ra };
        }
        return DecayEstimate { kind: DecayKind::Undetermined, fitted_rate: sa, fit_window: window, fit_residual: ra };
    }
    if -se > 0.0 && sign_changes >= 3 {
        DecayEstimate { kind: DecayKind::Exponential, fitted_rate: -se, fit_window: window, fit_residual: re }
    } else {
        DecayEstimate { kind: DecayKind::Undetermined, fitted_rate: -se, fit_window: window, fit_residual: re }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::KernelQuadrature;

    #[test]
    fn initial_state_examples() {
        assert_eq!(initial_state(Parity::Even, &[1.0, -0.5], 2).unwrap(), vec![1.0, 0.0, -0.5, 0.0]);
        assert_eq!(initial_state(Parity::Odd, &[0.3, 0.1], 2).unwrap(), vec![0.0, 0.3, 0.0, 0.1]);
        assert_eq!(initial_state(Parity::Even, &[0.0, 0.0], 2).unwrap(), vec![0.0; 4]);
        assert!(initial_state(Parity::Even, &[1.0], 2).is_err());
        assert_eq!(free_params_of(Parity::Odd, &[0.0, 0.3, 0.0, 0.1]), vec![0.3, 0.1]);
    }

    #[test]
    fn terminal_residual_examples() {
        let t = Trajectory { ys: vec![0.0, 1.0], states: vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0; 4]] };
        assert_eq!(terminal_residual(&t, 1.0, 2, None).unwrap(), vec![0.0, 0.0]);
        let vp = 5.0;
        let t = Trajectory { ys: vec![0.0, 2.0], states: vec![vec![vp, 0.0, 0.0, 0.0]; 2] };
        assert_eq!(terminal_residual(&t, 2.0, 2, None).unwrap(), vec![1.0, 0.0]);
        assert!(matches!(terminal_residual(&t, 3.0, 2, None), Err(Error::Overflow { .. })));
    }

    #[test]
    fn projection_annihilates_decaying_modes() {
        let (a, b, l) = (0.25, 1.0, 40.0);
        let w = decaying_projection(2, a, b, l).unwrap();
        let mut roots = far_field_roots(2, a, b, l);
        roots.sort_by(|x, y| x.re.partial_cmp(&y.re).unwrap());
        for k in roots.iter().take(2) {
            for row in &w {
                let s: num_complex::Complex64 = row.iter().enumerate().map(|(j, c)| k.powu(j as u32) * c).sum();
                assert!(s.norm() < 1e-10);
            }
        }
        let alg = roots.iter().min_by(|x, y| x.norm().partial_cmp(&y.norm()).unwrap()).unwrap();
        assert!((alg.re + b / (a * l)).abs() < 0.2 * b / (a * l));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let params = ProblemParams::monotone(2, 1, 3.0, 0.0).unwrap();
        let cfg = ShootConfig::default();
        let prob = MsProblem {
            base: params,
            cont: ContParam::P,
            form: OdeForm::ProfileOriginal,
            parity: Parity::Even,
            mesh: vec![0.0, 1.0, 2.0, 3.5, 5.0, 7.0],
            config: cfg,
        };
        let q = KernelQuadrature::new(2, 4);
        let mut z = prob.initial_unknowns(&Guess::Eigen { quadrature: &q, l: 0, amplitude: 1.3 }, 3.0).unwrap();
        z.iter_mut().enumerate().for_each(|(i, v)| *v += 1e-3 * (i as f64).sin());
        let con = Constraint { grad_c: vec![0.3, -0.2], grad_lam: 0.7, rhs: 0.1 };
        let sc = prob.scales(&z);
        let (r0, j) = prob.eval(&z, &con, &sc, true).unwrap();
        let j = j.unwrap();
        for col in 0..z.len() {
            let h = 1e-6 * (1.0 + z[col].abs());
            let mut zp = z.clone();
            zp[col] += h;
            let (rp, _) = prob.eval(&zp, &con, &sc, false).unwrap();
            for row in 0..z.len() {
                let fd = (rp[row] - r0[row]) / h;
                let an = j.get(row, col);
                assert!((fd - an).abs() < 1e-4 * (1.0 + an.abs()), "row {row} col {col}: fd {fd} an {an}");
            }
        }
    }

    #[test]
    fn mesh_nodes_on_dense_grid() {
        let cfg = ShootConfig::default();
        let mesh = build_mesh(2, 0.25, 1.0, 2.0, 3.0, 30.0, &cfg);
        assert_eq!(mesh[0], 0.0);
        assert!((mesh.last().unwrap() - 30.0).abs() < 1e-12);
        for w in mesh.windows(2) {
            assert!(w[1] > w[0]);
            let r = w[1] / cfg.integrator.dense_step;
            assert!((r - r.round()).abs() < 1e-9);
        }
    }

    #[test]
    fn algebraic_synthetic_tail() {
        let ys: Vec<f64> = (1..4000).map(|i| i as f64 * 0.01).collect();
        let vs: Vec<f64> = ys.iter().map(|y| y.powf(-2.0) * (1.0 + 0.3 * (3.0 * y).cos())).collect();
        let d = classify_decay_samples(&ys, &vs, 2, 3.0);
        assert_eq!(d.kind, DecayKind::Algebraic);
    }

    #[test]
    fn kernel_tail_is_exponential() {
        let q = KernelQuadrature::new(2, 0);
        let ys: Vec<f64> = (0..=1200).map(|i| i as f64 * 0.025).collect();
        let vs: Vec<f64> = ys.iter().map(|y| q.derivative(*y, 0)).collect();
        let d = classify_decay_samples(&ys, &vs, 2, 3.0);
        assert_eq!(d.kind, DecayKind::Exponential);
        assert!(d.fitted_rate > 0.0);
    }
}
