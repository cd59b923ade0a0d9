//! Pseudo-arclength continuation of profile families in p or α.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{self, taxonomy, ProfileTaxonomy};
use crate::error::{Error, Result};
use crate::odesys::profile_coefficients;
use crate::params::{critical_alpha, critical_p, Parity, ProblemParams};
use crate::shoot::{
    accept, amplitude_floor, build_mesh, default_length, solve_profile, tail_decayed, Constraint, ContParam, Guess, MsProblem,
    ProfileSolution, ShootConfig,
};
use crate::spectral::{adjoint_poly, kappa, KernelQuadrature, KernelTable};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BranchKind {
    /// Continuation in p at fixed α.
    InP { alpha: f64 },
    /// Continuation in α at fixed p.
    InAlpha { p: f64 },
}

impl BranchKind {
    pub fn cont(self) -> ContParam {
        match self {
            BranchKind::InP { .. } => ContParam::P,
            BranchKind::InAlpha { .. } => ContParam::Alpha,
        }
    }

    /// Critical value of the continuation parameter for index l.
    pub fn critical(self, l: u32, params: &ProblemParams) -> f64 {
        match self {
            BranchKind::InP { alpha } => critical_p(l, params.m, params.n, alpha),
            BranchKind::InAlpha { p } => critical_alpha(l, params.m, params.n, p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    pub initial: f64,
    pub min: f64,
    pub max: f64,
    pub max_steps: usize,
    pub param_min: f64,
    pub param_max: f64,
    pub closed_loop_tol: f64,
    /// Parameter values at which profiles are stored.
    pub targets: Vec<f64>,
    /// Refine folds to this step before locating the vertex.
    pub fold_step: f64,
    /// End the run at the first turning point.
    pub stop_at_fold: bool,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            initial: 1e-2,
            min: 1e-6,
            max: 0.25,
            max_steps: 4000,
            param_min: f64::NEG_INFINITY,
            param_max: f64::INFINITY,
            closed_loop_tol: 1e-3,
            targets: Vec::new(),
            fold_step: 1e-3,
            stop_at_fold: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub param: f64,
    pub shooting_params: Vec<f64>,
    pub amplitude: f64,
    pub support_width: f64,
    pub residual_norm: f64,
    pub identity_residual: f64,
    pub dominant_extrema: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BranchEvent {
    TurningPoint(f64),
    ZeroAmplitudeEnd { param: f64, matched_l: Option<u32> },
    ParamLimit(f64),
    SolverLoss(f64),
    ClosedLoop(f64),
    StepLimit(f64),
    /// Endpoint without a critical exponent nearby.
    Anomaly(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Branch {
    pub kind: BranchKind,
    pub points: Vec<BranchPoint>,
    pub events: Vec<BranchEvent>,
    /// Profiles landed exactly on the requested targets.
    pub snapshots: Vec<ProfileSolution>,
    /// Profile at the extreme point of each fold.
    #[serde(skip)]
    pub fold_profiles: Vec<ProfileSolution>,
    /// Last converged profile.
    #[serde(skip)]
    pub last_profile: Option<ProfileSolution>,
}

impl Branch {
    pub fn turning_points(&self) -> Vec<f64> {
        self.events
            .iter()
            .filter_map(|e| match e {
                BranchEvent::TurningPoint(p) => Some(*p),
                _ => None,
            })
            .collect()
    }

    pub fn zero_amplitude_end(&self) -> Option<(f64, Option<u32>)> {
        self.events.iter().find_map(|e| match e {
            BranchEvent::ZeroAmplitudeEnd { param, matched_l } => Some((*param, *matched_l)),
            _ => None,
        })
    }

    pub fn has_anomaly(&self) -> bool {
        self.events.iter().any(|e| matches!(e, BranchEvent::Anomaly(_)))
    }
}

/// A^{p-1}, linear in the parameter near a bifurcation.
fn bif_measure(sol: &ProfileSolution) -> f64 {
    sol.sup_norm.powf(sol.params.p - 1.0)
}

fn point_of(sol: &ProfileSolution, cont: ContParam) -> Result<BranchPoint> {
    let id = classify::mass_identity(sol)?;
    Ok(BranchPoint {
        param: cont.value(&sol.params),
        shooting_params: sol.shooting_params.iter().map(|c| c * sol.amplitude.signum()).collect(),
        amplitude: sol.sup_norm,
        support_width: sol.support_width(),
        residual_norm: sol.residual_norm,
        identity_residual: id.mass_identity_residual,
        dominant_extrema: classify::dominant_extrema(sol, classify::DEFAULT_DELTA),
    })
}

/// Weighted distance in (λ, c).
fn metric_dist(a: &[f64], la: f64, b: &[f64], lb: f64, w: &[f64]) -> f64 {
    let mut s = (la - lb).powi(2);
    for i in 0..a.len() {
        s += ((a[i] - b[i]) * w[i]).powi(2);
    }
    s.sqrt()
}

fn weights(c: &[f64]) -> Vec<f64> {
    c.iter().map(|v| 1.0 / v.abs().max(1.0)).collect()
}

/// One continuation state: problem, unknowns and the dense profile.
#[derive(Clone)]
struct State {
    prob: MsProblem,
    z: Vec<f64>,
    sol: ProfileSolution,
}

impl State {
    fn lam(&self) -> f64 {
        self.prob.lam(&self.z)
    }

    fn c(&self) -> &[f64] {
        self.prob.c(&self.z)
    }
}

/// Rebuild the mesh when the profile outgrew it; returns the new problem.
fn adapted_problem(prob: &MsProblem, sol: &ProfileSolution) -> Option<MsProblem> {
    let cfg = &prob.config;
    let params = &sol.params;
    let (a, b) = profile_coefficients(params, prob.form);
    let need = default_length(params, prob.form, sol.support_width(), cfg);
    let l = prob.length();
    let too_short = l < 0.95 * need || !tail_decayed(sol, cfg.tail_tol);
    let new_l = if too_short { need.max(1.25 * l) } else { l };
    let new_l = (new_l / cfg.integrator.dense_step).ceil() * cfg.integrator.dense_step;
    let ideal = build_mesh(params.m, a, b, sol.sup_norm, params.p, new_l, cfg);
    let coarse = ideal.len() as f64 > 1.3 * prob.mesh.len() as f64 * (new_l / l);
    if !too_short && !coarse {
        return None;
    }
    let mut p = prob.clone();
    p.mesh = ideal;
    Some(p)
}

fn remesh(state: &State, prob: &MsProblem) -> State {
    let z = prob.unknowns_from(&state.sol, state.lam());
    State { prob: prob.clone(), z, sol: state.sol.clone() }
}

/// Solve with constraint, assemble and gate.
fn correct(prob: &MsProblem, z0: &[f64], con: &Constraint) -> Result<(State, usize)> {
    let (z, res, iters) = prob.newton(z0, con)?;
    let sol = prob.assemble(&z, res)?;
    let sol = accept(sol, &prob.config)?;
    if sol.sup_norm < amplitude_floor(&sol.params) {
        return Err(Error::TrivialSolution { amplitude: sol.sup_norm });
    }
    Ok((State { prob: prob.clone(), z, sol }, iters))
}

/// Land on a fixed parameter value between two states.
fn land(a: &State, b: &State, target: f64) -> Result<ProfileSolution> {
    let (la, lb) = (a.lam(), b.lam());
    let t = (target - la) / (lb - la);
    let prob = &b.prob;
    let za = prob.unknowns_from(&a.sol, la);
    let mut z: Vec<f64> = za.iter().zip(&b.z).map(|(x, y)| x + t * (y - x)).collect();
    prob.set_lam(&mut z, target);
    let con = Constraint::fix_param(target, prob.base.m);
    Ok(correct(prob, &z, &con)?.0.sol)
}

/// Predictor and arclength constraint from the secant a → b.
fn predict(a: &State, b: &State, ds: f64) -> Option<(Vec<f64>, Constraint)> {
    let prob = &b.prob;
    let za = prob.unknowns_from(&a.sol, a.lam());
    let w = weights(b.c());
    let d = metric_dist(a.c(), a.lam(), b.c(), b.lam(), &w);
    if !(d > 0.0) {
        return None;
    }
    let zp: Vec<f64> = b.z.iter().zip(&za).map(|(zb, za)| zb + ds * (zb - za) / d).collect();
    let m = prob.m();
    let tc: Vec<f64> = (0..m).map(|i| (b.c()[i] - a.c()[i]) / d).collect();
    let tl = (b.lam() - a.lam()) / d;
    let grad_c: Vec<f64> = (0..m).map(|i| tc[i] * w[i] * w[i]).collect();
    let rhs = grad_c.iter().zip(&zp[..m]).map(|(g, c)| g * c).sum::<f64>() + tl * zp[m];
    Some((zp, Constraint { grad_c, grad_lam: tl, rhs }))
}

/// Vertex of the parabola through three (s, λ) points.
pub fn parabola_vertex(s: [f64; 3], l: [f64; 3]) -> f64 {
    let d1 = (l[1] - l[0]) / (s[1] - s[0]);
    let d2 = (l[2] - l[1]) / (s[2] - s[1]);
    let a = (d2 - d1) / (s[2] - s[0]);
    if a == 0.0 {
        return l[1];
    }
    let b = d1 - a * (s[0] + s[1]);
    let sv = -b / (2.0 * a);
    let c = l[0] - a * s[0] * s[0] - b * s[0];
    a * sv * sv + b * sv + c
}

/// Parameter values where Δparam changes sign, located by parabolic vertices
/// in cumulative arclength.
pub fn detect_turning_points(points: &[BranchPoint]) -> Vec<f64> {
    if points.len() < 3 {
        return Vec::new();
    }
    let mut s = vec![0.0];
    for i in 1..points.len() {
        let w = weights(&points[i - 1].shooting_params);
        let d = metric_dist(&points[i].shooting_params, points[i].param, &points[i - 1].shooting_params, points[i - 1].param, &w);
        s.push(s[i - 1] + d);
    }
    let mut out = Vec::new();
    for i in 1..points.len() - 1 {
        let d0 = points[i].param - points[i - 1].param;
        let d1 = points[i + 1].param - points[i].param;
        if d0 * d1 < 0.0 {
            out.push(parabola_vertex([s[i - 1], s[i], s[i + 1]], [points[i - 1].param, points[i].param, points[i + 1].param]));
        }
    }
    out
}

/// Re-trace a fold with small steps and return the vertex.
fn refine_fold(a: &State, b: &State, ctrl: &StepControl) -> Option<f64> {
    let mut prev = a.clone();
    let mut cur = b.clone();
    let ds = ctrl.fold_step;
    let dir0 = cur.lam() - prev.lam();
    let mut hist: Vec<(f64, f64)> = vec![(0.0, prev.lam()), (ds, cur.lam())];
    let mut s = ds;
    for _ in 0..2000 {
        let (zp, con) = predict(&prev, &cur, ds)?;
        let (next, _) = correct(&cur.prob, &zp, &con).ok()?;
        s += ds;
        hist.push((s, next.lam()));
        let flipped = (next.lam() - cur.lam()) * dir0 < 0.0;
        prev = cur;
        cur = next;
        if flipped {
            let n = hist.len();
            let (s3, l3): (Vec<f64>, Vec<f64>) = hist[n - 3..].iter().copied().unzip();
            return Some(parabola_vertex([s3[0], s3[1], s3[2]], [l3[0], l3[1], l3[2]]));
        }
    }
    None
}

/// Nearest critical index of the branch parity within 1e-2.
pub fn match_endpoint(kind: BranchKind, param: f64, params: &ProblemParams, parity: Parity, l_max: u32) -> Option<u32> {
    (0..=l_max)
        .filter(|l| parity.matches(*l))
        .map(|l| (l, (kind.critical(l, params) - param).abs()))
        .filter(|(_, d)| *d <= 1e-2)
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .map(|(l, _)| l)
}

/// Pseudo-arclength continuation from a converged profile.
pub fn continue_branch(start: &ProfileSolution, kind: BranchKind, direction: f64, ctrl: &StepControl, cfg: &ShootConfig) -> Result<Branch> {
    let cont = kind.cont();
    let mut base = start.params;
    match kind {
        BranchKind::InP { alpha } => base.alpha = alpha,
        BranchKind::InAlpha { p } => base.p = p,
    }
    let lam0 = cont.value(&start.params);
    let mut prob = MsProblem { base, cont, form: start.form, parity: start.parity, mesh: start.mesh.clone(), config: *cfg };
    if start.mesh.len() < 2 {
        let (a, b) = profile_coefficients(&start.params, start.form);
        prob.mesh = build_mesh(base.m, a, b, start.sup_norm, start.params.p, start.length, cfg);
    }
    let z0 = prob.unknowns_from(start, lam0);
    // re-converge in this parametrisation
    let (first, _) = correct(&prob, &z0, &Constraint::fix_param(lam0, base.m)).map_err(|e| Error::Continuation(format!("start point did not converge: {e}")))?;
    let mut branch = Branch { kind, points: vec![point_of(&first.sol, cont)?], events: Vec::new(), snapshots: Vec::new(), fold_profiles: Vec::new(), last_profile: None };
    let mut ds = ctrl.initial;
    let mut g_max = bif_measure(&first.sol);

    // first step: natural parameter
    let mut second = None;
    while ds >= ctrl.min {
        let lam = lam0 + direction.signum() * ds;
        let mut z = first.z.clone();
        prob.set_lam(&mut z, lam);
        match correct(&first.prob, &z, &Constraint::fix_param(lam, base.m)) {
            Ok((st, _)) => {
                second = Some(st);
                break;
            }
            Err(_) => ds *= 0.5,
        }
    }
    let Some(second) = second else {
        return Err(Error::Continuation("immediate corrector failure".into()));
    };
    let mut prev = first;
    let mut cur = second;
    branch.points.push(point_of(&cur.sol, cont)?);
    let start_c = prev.c().to_vec();
    let start_lam = prev.lam();
    let mut g_prev = bif_measure(&prev.sol);

    for step in 0..ctrl.max_steps {
        if let Some(np) = adapted_problem(&cur.prob, &cur.sol) {
            prev = remesh(&prev, &np);
            cur = remesh(&cur, &np);
        }
        let lam_cur = cur.lam();
        // exits
        if lam_cur < ctrl.param_min || lam_cur > ctrl.param_max {
            branch.events.push(BranchEvent::ParamLimit(lam_cur));
            break;
        }
        let g = bif_measure(&cur.sol);
        g_max = g_max.max(g);
        if g < g_prev && g < 0.02 * g_max {
            let lp = prev.lam();
            let end = lam_cur - g * (lam_cur - lp) / (g - g_prev);
            let l_max = 64;
            let matched = match_endpoint(kind, end, &cur.sol.params, cur.prob.parity, l_max);
            branch.events.push(BranchEvent::ZeroAmplitudeEnd { param: end, matched_l: matched });
            if matched.is_none() {
                branch.events.push(BranchEvent::Anomaly(format!("endpoint {end} matches no critical exponent")));
            }
            break;
        }
        if step >= 10 {
            let w = weights(&start_c);
            if metric_dist(cur.c(), lam_cur, &start_c, start_lam, &w) < ctrl.closed_loop_tol.max(0.5 * ds) {
                branch.events.push(BranchEvent::ClosedLoop(lam_cur));
                break;
            }
        }
        // predictor-corrector
        let mut next = None;
        while ds >= ctrl.min {
            let Some((zp, con)) = predict(&prev, &cur, ds) else { break };
            match correct(&cur.prob, &zp, &con) {
                Ok((st, iters)) => {
                    let w = weights(cur.c());
                    let d = metric_dist(st.c(), st.lam(), cur.c(), cur.lam(), &w);
                    if d > 2.0 * ds + 1e-12 {
                        ds *= 0.5;
                        continue;
                    }
                    next = Some(st);
                    if iters <= 4 {
                        ds = (2.0 * ds).min(ctrl.max);
                    }
                    break;
                }
                Err(Error::TrivialSolution { .. }) if g < 0.2 * g_max => {
                    // heading into the trivial branch: the end is near
                    ds *= 0.5;
                }
                Err(_) => ds *= 0.5,
            }
        }
        let Some(next) = next else {
            branch.events.push(BranchEvent::SolverLoss(lam_cur));
            break;
        };
        // targets crossed
        for &t in &ctrl.targets {
            if (t - lam_cur) * (t - next.lam()) < 0.0 || t == next.lam() {
                if let Ok(s) = land(&cur, &next, t) {
                    branch.snapshots.push(s);
                }
            }
        }
        // folds
        let d0 = cur.lam() - prev.lam();
        let d1 = next.lam() - cur.lam();
        if d0 * d1 < 0.0 {
            let v = refine_fold(&prev, &cur, ctrl).unwrap_or_else(|| {
                parabola_vertex([0.0, 1.0, 2.0], [prev.lam(), cur.lam(), next.lam()])
            });
            branch.events.push(BranchEvent::TurningPoint(v));
            branch.fold_profiles.push(cur.sol.clone());
            if ctrl.stop_at_fold {
                branch.points.push(point_of(&next.sol, cont)?);
                break;
            }
        }
        g_prev = g;
        branch.points.push(point_of(&next.sol, cont)?);
        prev = cur;
        cur = next;
        if step + 1 == ctrl.max_steps {
            branch.events.push(BranchEvent::StepLimit(cur.lam()));
        }
    }
    branch.last_profile = Some(cur.sol);
    Ok(branch)
}

/// Amplitude of the bifurcating branch at distance `offset` from the critical value,
/// valid for either sign of κ_l.
pub fn bifurcation_start_amplitude(kind: BranchKind, l: u32, params: &ProblemParams, kernel: &KernelTable, lam: f64) -> Result<f64> {
    let p = params.p;
    let k = kappa(l, p, kernel, &adjoint_poly(l, params.m))?;
    let nl = params.n as f64 + l as f64;
    let mf = params.m as f64;
    let chat = nl * nl / (4.0 * mf * mf * (1.0 + params.alpha) * k);
    let dp = match kind {
        BranchKind::InP { alpha } => critical_p(l, params.m, params.n, alpha) - lam,
        BranchKind::InAlpha { .. } => 2.0 * mf * (lam - critical_alpha(l, params.m, params.n, p)) / nl,
    };
    let g = chat * dp;
    if !(g > 0.0) {
        return Err(Error::NonPositiveKappa(k));
    }
    Ok(g.powf(1.0 / (p - 1.0)))
}

/// Side of λ_l on which the branch exists: +1 when it bifurcates to larger λ.
pub fn bifurcation_side(kind: BranchKind, l: u32, params: &ProblemParams, kernel: &KernelTable) -> Result<f64> {
    let k = kappa(l, params.p, kernel, &adjoint_poly(l, params.m))?;
    if k == 0.0 {
        return Err(Error::NonPositiveKappa(k));
    }
    Ok(match kind {
        BranchKind::InP { .. } => -k.signum(),
        BranchKind::InAlpha { .. } => k.signum(),
    })
}

/// Solve the profile near the critical value of index l, a relative offset away.
pub fn start_from_bifurcation(
    kind: BranchKind,
    l: u32,
    base: &ProblemParams,
    kernel: &KernelTable,
    quadrature: &KernelQuadrature,
    offset: f64,
    cfg: &ShootConfig,
) -> Result<ProfileSolution> {
    let crit = match kind {
        BranchKind::InP { alpha } => critical_p(l, base.m, base.n, alpha),
        BranchKind::InAlpha { p } => critical_alpha(l, base.m, base.n, p),
    };
    let scale = match kind {
        BranchKind::InP { .. } => crit - 1.0,
        BranchKind::InAlpha { .. } => 1.0 + crit,
    };
    let mut params = kind.cont().apply(base, crit);
    match kind {
        BranchKind::InP { alpha } => params.alpha = alpha,
        BranchKind::InAlpha { p } => params.p = p,
    }
    let side = bifurcation_side(kind, l, &params, kernel)?;
    let lam = crit + side * offset * scale;
    let params = kind.cont().apply(&params, lam);
    params.validate()?;
    let amp = bifurcation_start_amplitude(kind, l, &params, kernel, lam)?;
    solve_profile(&params, Parity::of_index(l), &Guess::Eigen { quadrature, l, amplitude: amp }, cfg)
}

/// Profile at `params` on the p-branch born at index `l`.
pub fn profile_from_bifurcation(params: &ProblemParams, l: u32, step: &StepControl, cfg: &ShootConfig) -> Result<ProfileSolution> {
    let kind = BranchKind::InP { alpha: params.alpha };
    let kernel = KernelTable::new(params.m, l + 2);
    let quad = KernelQuadrature::new(params.m, l + 2 * params.m + 2);
    let start = [2e-2, 6e-3, 2e-3]
        .iter()
        .map(|o| start_from_bifurcation(kind, l, params, &kernel, &quad, *o, cfg))
        .reduce(|a, b| a.or(b))
        .expect("non-empty ladder")?;
    let lam0 = start.params.p;
    let mut ctrl = step.clone();
    ctrl.targets = vec![params.p];
    ctrl.param_min = params.p.min(lam0) - 0.1;
    ctrl.param_max = params.p.max(lam0) + 0.1;
    let br = continue_branch(&start, kind, (params.p - lam0).signum(), &ctrl, cfg)?;
    br.snapshots.into_iter().next().ok_or_else(|| Error::Continuation(format!("p = {} not reached: {:?}", params.p, br.events)))
}

/// Solve just beyond a fold, toward `target`, from the fold profile.
pub fn jump_past_fold(kind: BranchKind, fold: &ProfileSolution, target: f64, cfg: &ShootConfig) -> Option<ProfileSolution> {
    let cont = kind.cont();
    let lf = cont.value(&fold.params);
    let dir = (target - lf).signum();
    [0.005, 0.01, 0.02, 0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.6, 0.8].iter().map(|h| h * lf.abs().max(1.0)).filter(|h| *h < (target - lf).abs()).find_map(|h| {
        let params = cont.apply(&fold.params, lf + dir * h);
        solve_profile(&params, fold.parity, &Guess::Profile(fold), cfg)
            .or_else(|_| solve_profile(&params, fold.parity, &Guess::Params(fold.shooting_params.clone()), cfg))
            .ok()
    })
}

/// Natural-parameter stepping from `start` to `target`; the step halves on failure down to `step/64`.
/// Returns the profiles at every accepted parameter value.
pub fn march(kind: BranchKind, start: &ProfileSolution, target: f64, step: f64, cfg: &ShootConfig) -> Result<Vec<ProfileSolution>> {
    let cont = kind.cont();
    let mut lam = cont.value(&start.params);
    let dir = (target - lam).signum();
    let mut h = step.abs();
    let mut prev = start.clone();
    let mut out = Vec::new();
    while (target - lam) * dir > 1e-12 {
        let next = if (target - lam).abs() <= h { target } else { lam + dir * h };
        let params = cont.apply(&prev.params, next);
        match solve_profile(&params, prev.parity, &Guess::Profile(&prev), cfg) {
            Ok(s) if s.sup_norm > 1e-8 => {
                lam = next;
                prev = s;
                out.push(prev.clone());
                h = (h * 1.5).min(step.abs());
            }
            Ok(_) => return Err(Error::Continuation(format!("collapsed to the trivial solution at {next}"))),
            Err(e) => {
                h *= 0.5;
                if h < step.abs() / 64.0 {
                    return Err(Error::Continuation(format!("stalled at {lam}: {e}")));
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CensusEntry {
    pub profile: ProfileSolution,
    pub taxonomy: ProfileTaxonomy,
    pub source: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Census {
    pub params: ProblemParams,
    pub parity: Parity,
    pub entries: Vec<CensusEntry>,
    /// (seed description, failure).
    pub failures: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusOptions {
    pub l_max: u32,
    pub bif_offset: f64,
    pub alpha_branches: bool,
    pub p_branches: bool,
    pub step: StepControl,
    /// Natural-parameter jumps past folds that turn away from the target.
    pub max_jumps: usize,
    /// Natural-parameter step used after a solver loss.
    pub march_step: f64,
}

impl Default for CensusOptions {
    fn default() -> Self {
        CensusOptions { l_max: 24, bif_offset: 1e-2, alpha_branches: true, p_branches: true, step: StepControl::default(), max_jumps: 8, march_step: 0.05 }
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

/// Relative amplitude tolerance for calling two census profiles the same.
/// Wider than the solver tolerance: the decay condition at infinity pins the
/// profile only weakly once β is large, and converged shapes of one family spread by a few percent.
pub const CENSUS_AMPLITUDE_TOL: f64 = 0.1;

fn same_profile(a: &ProfileSolution, b: &ProfileSolution, ta: &ProfileTaxonomy, tb: &ProfileTaxonomy) -> bool {
    ta.dominant_extrema == tb.dominant_extrema && ta.multiindex == tb.multiindex && rel_close(a.sup_norm, b.sup_norm, CENSUS_AMPLITUDE_TOL)
}

/// Profiles at `params` reached from every bifurcation seed of the given parity,
/// plus extra seeds given as free parameters.
pub fn sweep_profile_census(params: &ProblemParams, parity: Parity, extra: &[Vec<f64>], opts: &CensusOptions, cfg: &ShootConfig) -> Result<Census> {
    params.validate()?;
    let kernel = KernelTable::new(params.m, opts.l_max);
    let quad = KernelQuadrature::new(params.m, opts.l_max + 2 * params.m);
    let mut jobs: Vec<(BranchKind, u32)> = Vec::new();
    for l in (0..=opts.l_max).filter(|l| parity.matches(*l)) {
        if opts.alpha_branches && critical_alpha(l, params.m, params.n, params.p) < params.alpha {
            jobs.push((BranchKind::InAlpha { p: params.p }, l));
        }
        if opts.p_branches && critical_p(l, params.m, params.n, params.alpha) > params.p {
            jobs.push((BranchKind::InP { alpha: params.alpha }, l));
        }
    }
    let results: Vec<(String, Result<Vec<ProfileSolution>>)> = jobs
        .par_iter()
        .map(|&(kind, l)| {
            let label = match kind {
                BranchKind::InP { .. } => format!("p-branch l={l}"),
                BranchKind::InAlpha { .. } => format!("alpha-branch l={l}"),
            };
            let run = || -> Result<Vec<ProfileSolution>> {
                let mut start = [1.0, 0.3, 0.1, 0.03]
                    .iter()
                    .map(|f| start_from_bifurcation(kind, l, params, &kernel, &quad, f * opts.bif_offset, cfg))
                    .reduce(|a, b| a.or(b))
                    .expect("non-empty ladder")?;
                let target = kind.cont().value(params);
                let mut ctrl = opts.step.clone();
                ctrl.targets = vec![target];
                ctrl.stop_at_fold = opts.max_jumps > 0;
                let lo = target.min(kind.cont().value(&start.params));
                let hi = target.max(kind.cont().value(&start.params));
                ctrl.param_min = ctrl.param_min.max(lo - 0.5);
                ctrl.param_max = ctrl.param_max.min(hi + 0.5);
                let mut ends = Vec::new();
                for _ in 0..=opts.max_jumps {
                    let lam0 = kind.cont().value(&start.params);
                    let br = continue_branch(&start, kind, (target - lam0).signum(), &ctrl, cfg)?;
                    if !br.snapshots.is_empty() {
                        return Ok(br.snapshots);
                    }
                    ends.push(format!("{:?}", br.events.last()));
                    if let (Some(BranchEvent::SolverLoss(_)), Some(last)) = (br.events.last(), &br.last_profile) {
                        // near-singular stretch: natural-parameter stepping
                        match march(kind, last, target, opts.march_step, cfg) {
                            Ok(sols) => return Ok(sols.last().cloned().into_iter().collect()),
                            Err(e) => ends.push(e.to_string()),
                        }
                    }
                    let Some(fold) = br.fold_profiles.last() else { break };
                    match jump_past_fold(kind, fold, target, cfg) {
                        Some(s) => start = s,
                        None => break,
                    }
                }
                Err(Error::Continuation(format!("branch did not reach the target: {}", ends.join(", "))))
            };
            (label, run())
        })
        .collect();
    let mut extra_results: Vec<(String, Result<Vec<ProfileSolution>>)> = extra
        .par_iter()
        .map(|c| (format!("seed {c:?}"), solve_profile(params, parity, &Guess::Params(c.clone()), cfg).map(|s| vec![s])))
        .collect();
    let mut census = Census { params: *params, parity, entries: Vec::new(), failures: Vec::new() };
    let mut all = results;
    all.append(&mut extra_results);
    for (label, r) in all {
        match r {
            Ok(sols) if sols.is_empty() => census.failures.push((label, "branch did not reach the target".into())),
            Ok(sols) => {
                for s in sols {
                    let s = if s.amplitude < 0.0 && params.variant == crate::params::Variant::Monotone { s.negated() } else { s };
                    let t = taxonomy(&s, classify::DEFAULT_DELTA);
                    if !census.entries.iter().any(|e| same_profile(&e.profile, &s, &e.taxonomy, &t)) {
                        census.entries.push(CensusEntry { profile: s, taxonomy: t, source: label.clone() });
                    }
                }
            }
            Err(e) => census.failures.push((label, e.to_string())),
        }
    }
    census.entries.sort_by(|a, b| a.taxonomy.index.cmp(&b.taxonomy.index).then(a.profile.sup_norm.partial_cmp(&b.profile.sup_norm).unwrap()));
    Ok(census)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(param: f64, c: f64) -> BranchPoint {
        BranchPoint {
            param,
            shooting_params: vec![c, 0.0],
            amplitude: c,
            support_width: 1.0,
            residual_norm: 0.0,
            identity_residual: 0.0,
            dominant_extrema: 1,
        }
    }

    #[test]
    fn parabola_vertex_exact() {
        let f = |s: f64| 3.0 - 2.0 * (s - 0.7).powi(2);
        assert!((parabola_vertex([0.0, 0.5, 1.5], [f(0.0), f(0.5), f(1.5)]) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn synthetic_fold() {
        // λ = 2 - c², traversed in c
        let pts: Vec<BranchPoint> = (0..21).map(|i| {
            let c = -1.0 + 0.1 * i as f64;
            pt(2.0 - c * c, c)
        }).collect();
        let tp = detect_turning_points(&pts);
        assert_eq!(tp.len(), 1);
        assert!((tp[0] - 2.0).abs() < 1e-3);
    }

    #[test]
    fn monotone_list_has_no_folds() {
        let pts: Vec<BranchPoint> = (0..10).map(|i| pt(5.0 - 0.1 * i as f64, i as f64)).collect();
        assert!(detect_turning_points(&pts).is_empty());
    }

    #[test]
    fn endpoint_matching() {
        let params = ProblemParams::monotone(2, 1, 3.0, 1.0).unwrap();
        let kind = BranchKind::InP { alpha: 1.0 };
        assert_eq!(match_endpoint(kind, 11.0 / 3.0 + 0.004, &params, Parity::Even, 10), Some(2));
        assert_eq!(match_endpoint(kind, 9.0, &params, Parity::Even, 10), Some(0));
        // nearest p_l to 2.0 at α=1 with even l: p_6 = 1 + 8/7 ≈ 2.14
        assert_eq!(match_endpoint(kind, 2.0, &params, Parity::Even, 10), None);
        let k2 = BranchKind::InP { alpha: 0.0 };
        // p_l = 1 + 4/(1+l): 2.2 is not critical, nearest even-l value away from 2.0
        assert_eq!(match_endpoint(k2, 2.0, &params, Parity::Even, 2), None);
    }
}
