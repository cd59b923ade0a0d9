//! Right-hand sides of the profile, blow-up and oscillatory-component ODEs,
//! and an adaptive Dormand–Prince 8(5,3) integrator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ProblemParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OdeForm {
    ProfileOriginal,
    ProfileRescaled,
    BlowupCore,
    OscillatoryComponent,
}

impl OdeForm {
    pub fn dim(self, m: u32) -> usize {
        match self {
            OdeForm::ProfileOriginal | OdeForm::ProfileRescaled => 2 * m as usize,
            OdeForm::BlowupCore | OdeForm::OscillatoryComponent => 4,
        }
    }
}

/// Coefficients (a, b) of V^(2m) = (-1)^m [ a·yV' + bV - f(V) ].
pub fn profile_coefficients(params: &ProblemParams, form: OdeForm) -> (f64, f64) {
    let m2 = 2.0 * params.m as f64;
    match form {
        OdeForm::ProfileRescaled => (1.0 / (params.beta() * m2), 1.0),
        _ => (1.0 / m2, params.beta()),
    }
}

#[inline]
pub fn sign_m(m: u32) -> f64 {
    if m % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Derivative of the profile state (V, V', ..., V^(2m-1)).
pub fn profile_rhs(y: f64, state: &[f64], params: &ProblemParams, form: OdeForm) -> Vec<f64> {
    let (a, b) = profile_coefficients(params, form);
    let n = state.len();
    let mut d = vec![0.0; n];
    d[..n - 1].copy_from_slice(&state[1..]);
    d[n - 1] = sign_m(params.m) * (a * y * state[1] + b * state[0] - params.f(state[0]));
    d
}

/// V'''' = -|V|^{p-1} V.
pub fn blowup_rhs(_y: f64, state: &[f64], p: f64) -> [f64; 4] {
    let v = state[0];
    [state[1], state[2], state[3], -v.abs().powf(p - 1.0) * v]
}

pub fn oscillatory_mu(p: f64) -> f64 {
    -4.0 / (p - 1.0)
}

/// Autonomous equation for φ(s) where V = (y0 - y)^μ φ(ln(y0 - y)).
pub fn oscillatory_rhs(_s: f64, state: &[f64], p: f64) -> [f64; 4] {
    let mu = oscillatory_mu(p);
    let [f0, f1, f2, f3] = [state[0], state[1], state[2], state[3]];
    let c3 = -2.0 * (2.0 * mu - 3.0);
    let c2 = -(6.0 * mu * mu - 18.0 * mu + 11.0);
    let c1 = -2.0 * (2.0 * mu.powi(3) - 9.0 * mu * mu + 11.0 * mu - 3.0);
    let c0 = -mu * (mu - 1.0) * (mu - 2.0) * (mu - 3.0);
    [f1, f2, f3, c3 * f3 + c2 * f2 + c1 * f1 + c0 * f0 - f0.abs().powf(p - 1.0) * f0]
}

/// A first-order system x' = g(y, x).
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, y: f64, x: &[f64], dx: &mut [f64]);
    /// Leading components watched by the overflow guard.
    fn guard_dims(&self) -> usize {
        self.dim()
    }
    /// Factor on the absolute tolerance of component i.
    fn atol_scale(&self, _i: usize) -> f64 {
        1.0
    }
}

/// The systems named by [`OdeForm`].
#[derive(Debug, Clone, Copy)]
pub struct FormSystem {
    pub form: OdeForm,
    pub params: ProblemParams,
}

impl OdeSystem for FormSystem {
    fn dim(&self) -> usize {
        self.form.dim(self.params.m)
    }

    fn rhs(&self, y: f64, x: &[f64], dx: &mut [f64]) {
        match self.form {
            OdeForm::ProfileOriginal | OdeForm::ProfileRescaled => {
                let (a, b) = profile_coefficients(&self.params, self.form);
                let n = x.len();
                dx[..n - 1].copy_from_slice(&x[1..]);
                dx[n - 1] = sign_m(self.params.m) * (a * y * x[1] + b * x[0] - self.params.f(x[0]));
            }
            OdeForm::BlowupCore => dx.copy_from_slice(&blowup_rhs(y, x, self.params.p)),
            OdeForm::OscillatoryComponent => dx.copy_from_slice(&oscillatory_rhs(y, x, self.params.p)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    pub overflow_guard: f64,
    pub dense_step: f64,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rtol: 1e-10,
            atol: 1e-12,
            max_step: 1.0,
            overflow_guard: 1e8,
            dense_step: 0.05,
            max_steps: 2_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.atol > 0.0 && self.overflow_guard > 0.0 && self.max_step > 0.0) {
            return Err(Error::Config("integrator tolerances, max_step and guard must be positive".into()));
        }
        if !(self.dense_step > 0.0) {
            return Err(Error::Config("dense_step must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sampling {
    /// Points y_start + k·step; steps are clamped to land on them.
    Grid(f64),
    EveryStep,
    EndOnly,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub ys: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn last_state(&self) -> &[f64] {
        self.states.last().map(|s| s.as_slice()).unwrap_or(&[])
    }

    pub fn component(&self, i: usize) -> Vec<f64> {
        self.states.iter().map(|s| s[i]).collect()
    }

    fn push(&mut self, y: f64, x: &[f64]) {
        self.ys.push(y);
        self.states.push(x.to_vec());
    }
}

#[derive(Debug, Clone)]
pub enum Outcome {
    Completed(Trajectory),
    /// Guard exceeded; `y_est` is the truncation point.
    Blowup { y_est: f64, trajectory: Trajectory },
}

impl Outcome {
    pub fn trajectory(&self) -> &Trajectory {
        match self {
            Outcome::Completed(t) => t,
            Outcome::Blowup { trajectory, .. } => trajectory,
        }
    }

    pub fn into_completed(self) -> Result<Trajectory> {
        match self {
            Outcome::Completed(t) => Ok(t),
            Outcome::Blowup { y_est, .. } => Err(Error::Overflow { y: y_est }),
        }
    }
}

/// Integrate a named form (the profile, blow-up or oscillatory equation).
pub fn integrate(
    form: OdeForm,
    params: &ProblemParams,
    y_start: f64,
    y_end: f64,
    init: &[f64],
    config: &IntegratorConfig,
) -> Result<Outcome> {
    if init.len() != form.dim(params.m) {
        return Err(Error::InvalidParams(format!(
            "state length {} does not match system order {}",
            init.len(),
            form.dim(params.m)
        )));
    }
    if !(y_start < y_end) {
        return Err(Error::InvalidParams("integration interval must satisfy y_start < y_end".into()));
    }
    let sys = FormSystem { form, params: *params };
    integrate_system(&sys, y_start, y_end, init, config, Sampling::Grid(config.dense_step))
}

/// Integrate any system from y_start to y_end (either direction).
pub fn integrate_system<S: OdeSystem + ?Sized>(
    sys: &S,
    y_start: f64,
    y_end: f64,
    init: &[f64],
    config: &IntegratorConfig,
    sampling: Sampling,
) -> Result<Outcome> {
    config.validate()?;
    let n = sys.dim();
    assert_eq!(init.len(), n, "state length does not match system dimension");
    if init.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { y: y_start });
    }
    let mut traj = Trajectory::default();
    traj.push(y_start, init);
    if y_start == y_end {
        return Ok(Outcome::Completed(traj));
    }
    let dir = (y_end - y_start).signum();
    let span = (y_end - y_start).abs();
    let mut stepper = Dop853::new(n);
    let mut x = init.to_vec();
    let mut y = y_start;
    stepper.k1_eval(sys, y, &x);
    let mut h = dir * stepper.initial_step(sys, y, &x, config, span);
    let mut grid_k = 1usize;
    let grid_step = match sampling {
        Sampling::Grid(s) => {
            if !(s > 0.0) {
                return Err(Error::Config("grid step must be positive".into()));
            }
            s
        }
        _ => f64::INFINITY,
    };
    let next_grid = |k: usize| {
        let t = y_start + dir * k as f64 * grid_step;
        if dir * (t - y_end) > 0.0 || (t - y_end).abs() < 1e-9 * grid_step {
            y_end
        } else {
            t
        }
    };
    let guard_dims = sys.guard_dims();
    let mut steps = 0usize;
    let mut reject_streak = 0usize;
    loop {
        let target = if grid_step.is_finite() { next_grid(grid_k) } else { y_end };
        let mut hstep = h;
        let mut hits_target = false;
        if dir * (y + hstep - target) >= 0.0 || (target - y - hstep).abs() <= 1e-12 * y.abs().max(1.0) {
            hstep = target - y;
            hits_target = true;
        }
        let hmin = 1e-14 * y.abs().max(1.0);
        if hstep.abs() < hmin && !hits_target {
            return Err(Error::StepUnderflow { y });
        }
        steps += 1;
        if steps > config.max_steps {
            return Err(Error::StepUnderflow { y });
        }
        let err = stepper.step(sys, y, &x, hstep, config);
        let fac11 = if err.is_finite() { err.powf(0.125) } else { f64::INFINITY };
        if err.is_finite() && err <= 1.0 {
            let y_new = if hits_target { target } else { y + hstep };
            x.copy_from_slice(&stepper.y_new);
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { y: y_new });
            }
            y = y_new;
            stepper.k1_eval(sys, y, &x);
            let norm = x[..guard_dims].iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let done = hits_target && target == y_end;
            match sampling {
                Sampling::Grid(_) if hits_target => {
                    traj.push(y, &x);
                    grid_k += 1;
                }
                Sampling::EveryStep => traj.push(y, &x),
                Sampling::EndOnly if done => traj.push(y, &x),
                _ => {}
            }
            if norm > config.overflow_guard {
                if !traj.ys.last().is_some_and(|&l| l == y) {
                    traj.push(y, &x);
                }
                return Ok(Outcome::Blowup { y_est: y, trajectory: traj });
            }
            if done {
                return Ok(Outcome::Completed(traj));
            }
            let fac = (fac11 / 0.9).clamp(1.0 / 6.0, 3.0);
            let hnew = hstep.abs() / fac;
            let hnew = if reject_streak > 0 { hnew.min(hstep.abs()) } else { hnew };
            if !hits_target || hnew < h.abs() {
                h = dir * hnew.min(config.max_step);
            }
            reject_streak = 0;
        } else {
            reject_streak += 1;
            let shrink = if err.is_finite() { (fac11 / 0.9).min(3.0) } else { 4.0 };
            h = hstep / shrink.max(1.0 + 1e-3);
            if h.abs() < hmin {
                return Err(Error::StepUnderflow { y });
            }
        }
    }
}

struct Dop853 {
    k: [Vec<f64>; 10],
    tmp: Vec<f64>,
    y_new: Vec<f64>,
    upd: Vec<f64>,
}

impl Dop853 {
    fn new(n: usize) -> Self {
        Dop853 {
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
            y_new: vec![0.0; n],
            upd: vec![0.0; n],
        }
    }

    fn k1_eval<S: OdeSystem + ?Sized>(&mut self, sys: &S, y: f64, x: &[f64]) {
        sys.rhs(y, x, &mut self.k[0]);
    }

    fn initial_step<S: OdeSystem + ?Sized>(
        &mut self,
        sys: &S,
        y: f64,
        x: &[f64],
        cfg: &IntegratorConfig,
        span: f64,
    ) -> f64 {
        let n = x.len() as f64;
        let sk = |i: usize, v: f64| cfg.atol * sys.atol_scale(i) + cfg.rtol * v.abs();
        let dnf = (x.iter().zip(&self.k[0]).enumerate().map(|(i, (x, f))| (f / sk(i, *x)).powi(2)).sum::<f64>() / n).sqrt();
        let dny = (x.iter().enumerate().map(|(i, x)| (x / sk(i, *x)).powi(2)).sum::<f64>() / n).sqrt();
        let mut h = if dnf <= 1e-10 || dny <= 1e-10 { 1e-6 } else { 0.01 * dny / dnf };
        h = h.min(cfg.max_step).min(span);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + h * self.k[0][i];
        }
        let mut f1 = vec![0.0; x.len()];
        sys.rhs(y + h, &self.tmp, &mut f1);
        let der2 = (f1
            .iter()
            .zip(&self.k[0])
            .zip(x)
            .enumerate()
            .map(|(i, ((a, b), x))| ((a - b) / sk(i, *x)).powi(2))
            .sum::<f64>()
            / n)
            .sqrt()
            / h;
        let der12 = der2.abs().max(dnf);
        let h1 = if der12 <= 1e-15 { (h * 1e-3).max(1e-6) } else { (0.01 / der12).powf(1.0 / 8.0) };
        let h = (100.0 * h).min(h1).min(cfg.max_step).min(span);
        if h.is_finite() && h > 0.0 {
            h
        } else {
            1e-6f64.min(span)
        }
    }

    /// One trial step from (y, x) with size h; returns the scaled error norm.
    fn step<S: OdeSystem + ?Sized>(&mut self, sys: &S, y: f64, x: &[f64], h: f64, cfg: &IntegratorConfig) -> f64 {
        use tableau::*;
        let n = x.len();
        let [k1, k2, k3, k4, k5, k6, k7, k8, k9, k10] = &mut self.k;
        let tmp = &mut self.tmp;
        macro_rules! stage {
            ($out:expr, $c:expr, $( $a:expr => $k:expr ),+ ) => {{
                for i in 0..n {
                    tmp[i] = x[i] + h * (0.0 $( + $a * $k[i] )+);
                }
                sys.rhs(y + $c * h, tmp, $out);
            }};
        }
        stage!(k2, C2, A21 => k1);
        stage!(k3, C3, A31 => k1, A32 => k2);
        stage!(k4, C4, A41 => k1, A43 => k3);
        stage!(k5, C5, A51 => k1, A53 => k3, A54 => k4);
        stage!(k6, C6, A61 => k1, A64 => k4, A65 => k5);
        stage!(k7, C7, A71 => k1, A74 => k4, A75 => k5, A76 => k6);
        stage!(k8, C8, A81 => k1, A84 => k4, A85 => k5, A86 => k6, A87 => k7);
        stage!(k9, C9, A91 => k1, A94 => k4, A95 => k5, A96 => k6, A97 => k7, A98 => k8);
        stage!(k10, C10, A101 => k1, A104 => k4, A105 => k5, A106 => k6, A107 => k7, A108 => k8, A109 => k9);
        stage!(k2, C11, A111 => k1, A114 => k4, A115 => k5, A116 => k6, A117 => k7, A118 => k8, A119 => k9, A1110 => k10);
        stage!(k3, 1.0, A121 => k1, A124 => k4, A125 => k5, A126 => k6, A127 => k7, A128 => k8, A129 => k9, A1210 => k10, A1211 => k2);
        let upd = &mut self.upd;
        let mut err = 0.0;
        let mut err2 = 0.0;
        for i in 0..n {
            upd[i] = B1 * k1[i] + B6 * k6[i] + B7 * k7[i] + B8 * k8[i] + B9 * k9[i] + B10 * k10[i] + B11 * k2[i] + B12 * k3[i];
            self.y_new[i] = x[i] + h * upd[i];
            let sk = cfg.atol * sys.atol_scale(i) + cfg.rtol * x[i].abs().max(self.y_new[i].abs());
            let e2 = upd[i] - BHH1 * k1[i] - BHH2 * k9[i] - BHH3 * k3[i];
            err2 += (e2 / sk).powi(2);
            let e1 = ER1 * k1[i] + ER6 * k6[i] + ER7 * k7[i] + ER8 * k8[i] + ER9 * k9[i] + ER10 * k10[i] + ER11 * k2[i] + ER12 * k3[i];
            err += (e1 / sk).powi(2);
        }
        let mut deno = err + 0.01 * err2;
        if deno <= 0.0 {
            deno = 1.0;
        }
        let e = h.abs() * err * (1.0 / (n as f64 * deno)).sqrt();
        if self.y_new.iter().any(|v| !v.is_finite()) {
            f64::INFINITY
        } else {
            e
        }
    }
}

#[allow(clippy::excessive_precision, clippy::unreadable_literal)]
mod tableau {
    pub const C2: f64 = 0.526001519587677318785587544488E-01;
    pub const C3: f64 = 0.789002279381515978178381316732E-01;
    pub const C4: f64 = 0.118350341907227396726757197510E+00;
    pub const C5: f64 = 0.281649658092772603273242802490E+00;
    pub const C6: f64 = 0.333333333333333333333333333333E+00;
    pub const C7: f64 = 0.25E+00;
    pub const C8: f64 = 0.307692307692307692307692307692E+00;
    pub const C9: f64 = 0.651282051282051282051282051282E+00;
    pub const C10: f64 = 0.6E+00;
    pub const C11: f64 = 0.857142857142857142857142857142E+00;

    pub const A21: f64 = 5.26001519587677318785587544488E-2;
    pub const A31: f64 = 1.97250569845378994544595329183E-2;
    pub const A32: f64 = 5.91751709536136983633785987549E-2;
    pub const A41: f64 = 2.95875854768068491816892993775E-2;
    pub const A43: f64 = 8.87627564304205475450678981324E-2;
    pub const A51: f64 = 2.41365134159266685502369798665E-1;
    pub const A53: f64 = -8.84549479328286085344864962717E-1;
    pub const A54: f64 = 9.24834003261792003115737966543E-1;
    pub const A61: f64 = 3.7037037037037037037037037037E-2;
    pub const A64: f64 = 1.70828608729473871279604482173E-1;
    pub const A65: f64 = 1.25467687566822425016691814123E-1;
    pub const A71: f64 = 3.7109375E-2;
    pub const A74: f64 = 1.70252211019544039314978060272E-1;
    pub const A75: f64 = 6.02165389804559606850219397283E-2;
    pub const A76: f64 = -1.7578125E-2;
    pub const A81: f64 = 3.70920001185047927108779319836E-2;
    pub const A84: f64 = 1.70383925712239993810214054705E-1;
    pub const A85: f64 = 1.07262030446373284651809199168E-1;
    pub const A86: f64 = -1.53194377486244017527936158236E-2;
    pub const A87: f64 = 8.27378916381402288758473766002E-3;
    pub const A91: f64 = 6.24110958716075717114429577812E-1;
    pub const A94: f64 = -3.36089262944694129406857109825E0;
    pub const A95: f64 = -8.68219346841726006818189891453E-1;
    pub const A96: f64 = 2.75920996994467083049415600797E1;
    pub const A97: f64 = 2.01540675504778934086186788979E1;
    pub const A98: f64 = -4.34898841810699588477366255144E1;
    pub const A101: f64 = 4.77662536438264365890433908527E-1;
    pub const A104: f64 = -2.48811461997166764192642586468E0;
    pub const A105: f64 = -5.90290826836842996371446475743E-1;
    pub const A106: f64 = 2.12300514481811942347288949897E1;
    pub const A107: f64 = 1.52792336328824235832596922938E1;
    pub const A108: f64 = -3.32882109689848629194453265587E1;
    pub const A109: f64 = -2.03312017085086261358222928593E-2;
    pub const A111: f64 = -9.3714243008598732571704021658E-1;
    pub const A114: f64 = 5.18637242884406370830023853209E0;
    pub const A115: f64 = 1.09143734899672957818500254654E0;
    pub const A116: f64 = -8.14978701074692612513997267357E0;
    pub const A117: f64 = -1.85200656599969598641566180701E1;
    pub const A118: f64 = 2.27394870993505042818970056734E1;
    pub const A119: f64 = 2.49360555267965238987089396762E0;
    pub const A1110: f64 = -3.0467644718982195003823669022E0;
    pub const A121: f64 = 2.27331014751653820792359768449E0;
    pub const A124: f64 = -1.05344954667372501984066689879E1;
    pub const A125: f64 = -2.00087205822486249909675718444E0;
    pub const A126: f64 = -1.79589318631187989172765950534E1;
    pub const A127: f64 = 2.79488845294199600508499808837E1;
    pub const A128: f64 = -2.85899827713502369474065508674E0;
    pub const A129: f64 = -8.87285693353062954433549289258E0;
    pub const A1210: f64 = 1.23605671757943030647266201528E1;
    pub const A1211: f64 = 6.43392746015763530355970484046E-1;

    pub const B1: f64 = 5.42937341165687622380535766363E-2;
    pub const B6: f64 = 4.45031289275240888144113950566E0;
    pub const B7: f64 = 1.89151789931450038304281599044E0;
    pub const B8: f64 = -5.8012039600105847814672114227E0;
    pub const B9: f64 = 3.1116436695781989440891606237E-1;
    pub const B10: f64 = -1.52160949662516078556178806805E-1;
    pub const B11: f64 = 2.01365400804030348374776537501E-1;
    pub const B12: f64 = 4.47106157277725905176885569043E-2;

    pub const BHH1: f64 = 0.244094488188976377952755905512E+00;
    pub const BHH2: f64 = 0.733846688281611857341361741547E+00;
    pub const BHH3: f64 = 0.220588235294117647058823529412E-01;

    pub const ER1: f64 = 0.1312004499419488073250102996E-01;
    pub const ER6: f64 = -0.1225156446376204440720569753E+01;
    pub const ER7: f64 = -0.4957589496572501915214079952E+00;
    pub const ER8: f64 = 0.1664377182454986536961530415E+01;
    pub const ER9: f64 = -0.3503288487499736816886487290E+00;
    pub const ER10: f64 = 0.3341791187130174790297318841E+00;
    pub const ER11: f64 = 0.8192320648511571246570742613E-01;
    pub const ER12: f64 = -0.2235530786388629525884427845E-01;
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Harmonic;
    impl OdeSystem for Harmonic {
        fn dim(&self) -> usize {
            2
        }
        fn rhs(&self, _y: f64, x: &[f64], dx: &mut [f64]) {
            dx[0] = x[1];
            dx[1] = -x[0];
        }
    }

    fn pp(p: f64, alpha: f64) -> ProblemParams {
        ProblemParams::monotone(2, 1, p, alpha).unwrap()
    }

    #[test]
    fn profile_rhs_examples() {
        let d = profile_rhs(3.0, &[1.0, 0.0, 0.0, 0.0], &pp(2.0, 4.0), OdeForm::ProfileRescaled);
        assert_eq!(d[3], 0.0);
        let d = profile_rhs(1.7, &[5.0, 0.0, 0.0, 0.0], &pp(2.0, 4.0), OdeForm::ProfileOriginal);
        assert_eq!(d[3], 0.0);
        let d = profile_rhs(0.0, &[1.0, 0.0, 0.0, 0.0], &pp(2.0, 4.0), OdeForm::ProfileOriginal);
        assert_eq!(d[3], 4.0);
        // m = 1 flips the sign of the top equation
        let p1 = ProblemParams::monotone(1, 1, 2.0, 0.0).unwrap();
        let d = profile_rhs(0.0, &[2.0, 0.0], &p1, OdeForm::ProfileOriginal);
        assert_eq!(d[1], -(2.0 - 4.0));
    }

    #[test]
    fn monotone_oddness_and_nonmonotone_failure() {
        let s = [0.7, -0.2, 0.3, 1.1];
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        let p = pp(2.5, 0.0);
        let a = profile_rhs(0.9, &s, &p, OdeForm::ProfileOriginal);
        let b = profile_rhs(0.9, &neg, &p, OdeForm::ProfileOriginal);
        for i in 0..4 {
            assert!((a[i] + b[i]).abs() < 1e-15);
        }
        let mut q = p;
        q.variant = crate::params::Variant::NonMonotone;
        let a = profile_rhs(0.9, &s, &q, OdeForm::ProfileOriginal);
        let b = profile_rhs(0.9, &neg, &q, OdeForm::ProfileOriginal);
        assert!((a[3] + b[3]).abs() > 1e-3);
    }

    #[test]
    fn blowup_and_oscillatory_examples() {
        assert_eq!(blowup_rhs(0.0, &[0.0; 4], 2.0), [0.0; 4]);
        assert_eq!(blowup_rhs(0.0, &[1.0, 0.0, 0.0, 0.0], 2.0)[3], -1.0);
        assert_eq!(blowup_rhs(0.0, &[-1.0, 0.0, 0.0, 0.0], 2.0)[3], 1.0);
        assert_eq!(oscillatory_rhs(0.0, &[0.0; 4], 2.0), [0.0; 4]);
        assert_eq!(oscillatory_mu(2.0), -4.0);
    }

    #[test]
    fn harmonic_accuracy() {
        let cfg = IntegratorConfig::default();
        let out = integrate_system(&Harmonic, 0.0, 10.0, &[1.0, 0.0], &cfg, Sampling::Grid(0.5)).unwrap();
        let t = out.into_completed().unwrap();
        assert_eq!(t.len(), 21);
        for (y, s) in t.ys.iter().zip(&t.states) {
            assert!((s[0] - y.cos()).abs() < 1e-9, "y={y}");
        }
        assert_eq!(*t.ys.last().unwrap(), 10.0);
    }

    #[test]
    fn forward_backward_roundtrip() {
        let cfg = IntegratorConfig::default();
        let fwd = integrate_system(&Harmonic, 0.0, 5.0, &[0.3, -0.4], &cfg, Sampling::EndOnly)
            .unwrap()
            .into_completed()
            .unwrap();
        let back = integrate_system(&Harmonic, 5.0, 0.0, fwd.last_state(), &cfg, Sampling::EndOnly)
            .unwrap()
            .into_completed()
            .unwrap();
        assert!((back.last_state()[0] - 0.3).abs() < 10.0 * cfg.rtol);
        assert!((back.last_state()[1] + 0.4).abs() < 10.0 * cfg.rtol);
    }

    #[test]
    fn equilibrium_preserved() {
        let p = pp(2.0, 4.0);
        let t = integrate(OdeForm::ProfileOriginal, &p, 0.0, 20.0, &[5.0, 0.0, 0.0, 0.0], &Default::default())
            .unwrap()
            .into_completed()
            .unwrap();
        for s in &t.states {
            assert!((s[0] - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn blowup_detected() {
        let p = pp(2.0, 0.0);
        let out = integrate(OdeForm::BlowupCore, &p, 0.0, 100.0, &[1.0, 0.0, 0.0, 0.0], &Default::default()).unwrap();
        match out {
            Outcome::Blowup { y_est, .. } => assert!(y_est > 0.0 && y_est < 100.0),
            Outcome::Completed(_) => panic!("expected blow-up"),
        }
    }

    #[test]
    fn halving_tolerance_converges() {
        let p = pp(3.0, 0.0);
        let run = |rtol: f64| {
            let cfg = IntegratorConfig { rtol, atol: rtol * 1e-2, ..Default::default() };
            integrate(OdeForm::ProfileOriginal, &p, 0.0, 3.0, &[0.5, 0.0, -0.1, 0.0], &cfg)
                .unwrap()
                .into_completed()
                .unwrap()
                .last_state()
                .to_vec()
        };
        let a = run(1e-8);
        let b = run(5e-9);
        for i in 0..4 {
            assert!((a[i] - b[i]).abs() < 1e-8 * (1.0 + a[i].abs()));
        }
    }

    #[test]
    fn rejects_bad_interval() {
        let p = pp(2.0, 0.0);
        assert!(integrate(OdeForm::ProfileOriginal, &p, 1.0, 0.0, &[0.0; 4], &Default::default()).is_err());
        assert!(integrate(OdeForm::ProfileOriginal, &p, 0.0, 1.0, &[0.0; 3], &Default::default()).is_err());
    }
}
