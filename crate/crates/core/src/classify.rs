//! Taxonomy of computed profiles and the integral identities they must satisfy.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::odesys::{profile_coefficients, OdeForm};
use crate::params::{gamma0, Parity, ProblemParams, Variant};
use crate::quad::trapezoid;
use crate::shoot::{DecayKind, ProfileSolution};

/// Threshold for dominant extrema, relative to max|V|.
pub const DEFAULT_DELTA: f64 = 0.5;
/// Threshold for effective crossings, relative to V₊.
pub const CROSSING_DELTA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Band {
    Plus,
    Zero,
    Minus,
}

/// Effective crossings of one equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub band: Band,
    pub count: usize,
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.band {
            Band::Plus => write!(f, "+{}", self.count),
            Band::Zero => write!(f, "{}", self.count),
            Band::Minus => write!(f, "-{}", self.count),
        }
    }
}

pub fn format_multiindex(tokens: &[Token]) -> String {
    let parts: Vec<String> = tokens.iter().map(|t| t.to_string()).collect();
    format!("{{{}}}", parts.join(","))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    Basic(usize),
    Sigma1,
    Sigma2,
    Sigma3,
    Unclassified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileTaxonomy {
    pub dominant_extrema: usize,
    pub index: usize,
    pub multiindex: Vec<Token>,
    pub family: Family,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PohozaevReport {
    pub lhs1: f64,
    pub lhs2: f64,
    pub ratio: f64,
    pub gamma0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    /// |(b - Na)∫V - ∫f(V)| / scale on the full line.
    pub mass_identity_residual: f64,
    pub integral_v: f64,
    pub integral_f: f64,
    pub coefficient: f64,
    pub passed: bool,
}

/// Interior extrema of V with |V| ≥ delta·max|V|; plateaus count once.
pub fn dominant_extrema_samples(v: &[f64], delta: f64) -> usize {
    let sup = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if sup == 0.0 {
        return 0;
    }
    let thr = delta * sup;
    // collapse equal neighbours, then look for slope sign changes
    let mut pts: Vec<f64> = Vec::with_capacity(v.len());
    for &x in v {
        if pts.last() != Some(&x) {
            pts.push(x);
        }
    }
    let mut count = 0;
    for w in pts.windows(3) {
        let is_max = w[1] > w[0] && w[1] > w[2];
        let is_min = w[1] < w[0] && w[1] < w[2];
        if (is_max || is_min) && w[1].abs() >= thr {
            count += 1;
        }
    }
    count
}

/// Dominant extrema on the symmetric extension to [-L, L].
pub fn dominant_extrema(profile: &ProfileSolution, delta: f64) -> usize {
    let (_, v) = profile.symmetric_extension();
    dominant_extrema_samples(&v, delta)
}

/// Index k of V_k: dominant extrema on the full line minus one, for both parities.
pub fn basic_index(dominant: usize) -> usize {
    dominant.saturating_sub(1)
}

/// Equilibrium V₊ used for the bands.
pub fn band_scale(params: &ProblemParams, form: OdeForm) -> f64 {
    match form {
        OdeForm::ProfileRescaled => 1.0,
        _ => params.v_plus(),
    }
}

fn band_of(v: f64, vp: f64, variant: Variant) -> Band {
    let candidates: &[(Band, f64)] = match variant {
        Variant::Monotone => &[(Band::Plus, 1.0), (Band::Zero, 0.0), (Band::Minus, -1.0)],
        Variant::NonMonotone => &[(Band::Plus, 1.0), (Band::Zero, 0.0)],
    };
    candidates
        .iter()
        .min_by(|a, b| (v - a.1 * vp).abs().partial_cmp(&(v - b.1 * vp).abs()).unwrap())
        .unwrap()
        .0
}

fn band_level(b: Band, vp: f64) -> f64 {
    match b {
        Band::Plus => vp,
        Band::Zero => 0.0,
        Band::Minus => -vp,
    }
}

/// Sign alternations of v - e, ignoring excursions smaller than `thr`.
fn effective_crossings(v: &[f64], e: f64, thr: f64) -> usize {
    let mut pieces: Vec<(f64, f64)> = Vec::new(); // (sign, peak)
    for &x in v {
        let d = x - e;
        if d == 0.0 {
            continue;
        }
        let s = d.signum();
        match pieces.last_mut() {
            Some(last) if last.0 == s => last.1 = last.1.max(d.abs()),
            _ => pieces.push((s, d.abs())),
        }
    }
    let kept: Vec<f64> = pieces.into_iter().filter(|p| p.1 >= thr).map(|p| p.0).collect();
    kept.windows(2).filter(|w| w[0] != w[1]).count()
}

/// Token sequence on y ≥ 0 from half-line samples.
pub fn multiindex_samples(v: &[f64], vp: f64, variant: Variant, delta: f64) -> Vec<Token> {
    let sup = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if sup == 0.0 || vp <= 0.0 {
        return Vec::new();
    }
    let mut runs: Vec<(Band, usize, usize)> = Vec::new();
    for (i, &x) in v.iter().enumerate() {
        let b = band_of(x, vp, variant);
        match runs.last_mut() {
            Some(r) if r.0 == b => r.2 = i + 1,
            _ => runs.push((b, i, i + 1)),
        }
    }
    let thr = delta * vp;
    let mut tokens: Vec<Token> = runs
        .iter()
        .map(|&(b, s, e)| {
            // include the neighbouring samples so boundary passages register
            let lo = s.saturating_sub(1);
            let hi = (e + 1).min(v.len());
            Token { band: b, count: effective_crossings(&v[lo..hi], band_level(b, vp), thr) }
        })
        .collect();
    // the decaying tail is implicit
    if tokens.len() > 1 {
        if let Some(t) = tokens.last() {
            if t.band == Band::Zero && t.count == 0 {
                tokens.pop();
            }
        }
    }
    // merge repeated bands (a run interrupted by a short excursion)
    let mut merged: Vec<Token> = Vec::new();
    for t in tokens {
        match merged.last_mut() {
            Some(last) if last.band == t.band => last.count += t.count + 1,
            _ => merged.push(t),
        }
    }
    merged
}

pub fn multiindex(profile: &ProfileSolution, delta: f64) -> Vec<Token> {
    let vp = band_scale(&profile.params, profile.form);
    multiindex_samples(&profile.v(), vp, profile.params.variant, delta)
}

pub fn family_of(tokens: &[Token], index: usize) -> Family {
    if tokens.is_empty() {
        return Family::Unclassified;
    }
    let flip = tokens[0].band == Band::Minus;
    let bands: Vec<Band> = tokens
        .iter()
        .map(|t| match (t.band, flip) {
            (Band::Plus, true) => Band::Minus,
            (Band::Minus, true) => Band::Plus,
            (b, _) => b,
        })
        .collect();
    use Band::*;
    match bands.as_slice() {
        [_] => Family::Basic(index),
        [Plus, Zero, Minus] => Family::Sigma1,
        [Plus, Zero, Minus, Zero, Plus] => {
            if tokens[0].count >= 1 {
                Family::Sigma2
            } else {
                Family::Sigma3
            }
        }
        _ => Family::Unclassified,
    }
}

pub fn taxonomy(profile: &ProfileSolution, delta: f64) -> ProfileTaxonomy {
    let dominant = dominant_extrema(profile, delta);
    let index = basic_index(dominant);
    let tokens = multiindex(profile, CROSSING_DELTA);
    let family = family_of(&tokens, index);
    ProfileTaxonomy { dominant_extrema: dominant, index, multiindex: tokens, family }
}

/// Full-line integrals of V and f(V) from their half-line values.
fn full_line(parity: Parity, variant: Variant, half_v: f64, half_f: f64) -> (f64, f64) {
    match parity {
        Parity::Even => (2.0 * half_v, 2.0 * half_f),
        Parity::Odd => match variant {
            Variant::Monotone => (0.0, 0.0),
            Variant::NonMonotone => (0.0, 2.0 * half_f),
        },
    }
}

fn identity_report(coef: f64, iv: f64, iff: f64, abs_v: f64, abs_f: f64) -> IdentityReport {
    let scale = (coef.abs() * abs_v).max(abs_f).max(f64::MIN_POSITIVE);
    let r = (coef * iv - iff).abs() / scale;
    IdentityReport { mass_identity_residual: r, integral_v: iv, integral_f: iff, coefficient: coef, passed: r <= 1e-6 }
}

/// Mass identity on samples over [0, L] by the trapezoid rule.
pub fn mass_identity_samples(y: &[f64], v: &[f64], params: &ProblemParams, form: OdeForm, parity: Parity) -> IdentityReport {
    let (a, b) = profile_coefficients(params, form);
    let coef = b - params.n as f64 * a;
    let fv: Vec<f64> = v.iter().map(|x| params.f(*x)).collect();
    let (iv, iff) = full_line(parity, params.variant, trapezoid(y, v), trapezoid(y, &fv));
    let av: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    let af: Vec<f64> = fv.iter().map(|x| x.abs()).collect();
    identity_report(coef, iv, iff, 2.0 * trapezoid(y, &av), 2.0 * trapezoid(y, &af))
}

/// Mass identity from the solver's integrated quadrature components.
pub fn mass_identity(profile: &ProfileSolution) -> Result<IdentityReport> {
    if profile.tail.kind == DecayKind::Algebraic {
        return Err(Error::AlgebraicTail);
    }
    let params = &profile.params;
    let (a, b) = profile_coefficients(params, profile.form);
    let coef = b - params.n as f64 * a;
    let hv = *profile.cum_v.last().ok_or_else(|| Error::Quadrature("empty profile".into()))?;
    let hf = *profile.cum_f.last().unwrap();
    let (iv, iff) = full_line(profile.parity, params.variant, hv, hf);
    let v = profile.v();
    let av: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    let af: Vec<f64> = v.iter().map(|x| params.f(*x).abs()).collect();
    Ok(identity_report(coef, iv, iff, 2.0 * trapezoid(&profile.grid, &av), 2.0 * trapezoid(&profile.grid, &af)))
}

/// Pohozaev quantities of a candidate W on [0, ∞) sampled on a uniform grid.
pub fn pohozaev_check(y: &[f64], w: &[f64], p: f64) -> Result<PohozaevReport> {
    let n = w.len();
    if n < 5 || y.len() != n {
        return Err(Error::Quadrature("need at least five samples".into()));
    }
    let sup = w.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if sup > 0.0 && w[n - 1].abs() > 1e-3 * sup {
        return Err(Error::Quadrature("candidate does not decay at the window end".into()));
    }
    let h = y[1] - y[0];
    // W'' by central differences, even extension at the origin
    let w2: Vec<f64> = (0..n)
        .map(|i| {
            let wm = if i == 0 { w[1] } else { w[i - 1] };
            let wp = if i + 1 == n { 0.0 } else { w[i + 1] };
            (wp - 2.0 * w[i] + wm) / (h * h)
        })
        .collect();
    let sq = |g: &[f64]| -> Vec<f64> { g.iter().map(|x| x * x).collect() };
    let i_w2 = trapezoid(y, &sq(&w2));
    let i_sq = trapezoid(y, &sq(w));
    let pw: Vec<f64> = w.iter().map(|x| x.abs().powf(p + 1.0)).collect();
    let i_p = trapezoid(y, &pw);
    let lhs1 = -i_w2 + i_sq - i_p;
    let lhs2 = -1.5 * i_w2 - 0.5 * i_sq + i_p / (p + 1.0);
    let ratio = if i_p > 0.0 { i_sq / i_p } else { f64::NAN };
    Ok(PohozaevReport { lhs1, lhs2, ratio, gamma0: gamma0(p) })
}

/// Smoothed step of plateau length `l`: the manufactured candidate.
pub fn step_candidate(l: f64, width: f64, h: f64) -> (Vec<f64>, Vec<f64>) {
    let n = ((l + 20.0 * width) / h).ceil() as usize;
    let y: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
    let w: Vec<f64> = y.iter().map(|y| 0.5 * (1.0 - ((y - l) / width).tanh())).collect();
    (y, w)
}

/// ∫W²/∫|W|^{p+1} over the support of a rescaled profile.
pub fn support_ratio(profile: &ProfileSolution) -> f64 {
    let v = profile.v();
    let scale = band_scale(&profile.params, profile.form);
    let p = profile.params.p;
    let w: Vec<f64> = v.iter().map(|x| x / scale).collect();
    let a: Vec<f64> = w.iter().map(|x| x * x).collect();
    let b: Vec<f64> = w.iter().map(|x| x.abs().powf(p + 1.0)).collect();
    trapezoid(&profile.grid, &a) / trapezoid(&profile.grid, &b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_bump_has_one_extremum() {
        let v: Vec<f64> = (-400..=400).map(|i| (-(i as f64 * 0.02).powi(2)).exp()).collect();
        assert_eq!(dominant_extrema_samples(&v, 0.1), 1);
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        assert_eq!(dominant_extrema_samples(&neg, 0.1), 1);
        assert_eq!(basic_index(1), 0);
    }

    #[test]
    fn small_wiggles_are_not_dominant() {
        let v: Vec<f64> = (0..2000).map(|i| {
            let y = i as f64 * 0.01 - 10.0;
            (-y * y).exp() + 0.02 * (5.0 * y).sin()
        }).collect();
        assert_eq!(dominant_extrema_samples(&v, 0.1), 1);
    }

    #[test]
    fn trivial_profile_has_no_tokens() {
        assert!(multiindex_samples(&[0.0; 10], 1.0, Variant::Monotone, 0.1).is_empty());
        assert_eq!(family_of(&[], 0), Family::Unclassified);
    }

    #[test]
    fn oscillation_about_v_plus_is_basic() {
        let vp = 5.0;
        let v: Vec<f64> = (0..3000)
            .map(|i| {
                let y = i as f64 * 0.01;
                let env = 0.5 * (1.0 - ((y - 15.0) / 0.5).tanh());
                env * (vp + 0.8 * (2.0 * y).cos())
            })
            .collect();
        let t = multiindex_samples(&v, vp, Variant::Monotone, 0.1);
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].band, Band::Plus);
        assert!(t[0].count >= 8);
        assert_eq!(family_of(&t, 3), Family::Basic(3));
    }

    #[test]
    fn sigma1_pattern() {
        let vp = 2.0;
        // +V₊ plateau, one crossing of 0, then -V₊ with oscillation, then decay
        let v: Vec<f64> = (0..4000)
            .map(|i| {
                let y = i as f64 * 0.01;
                let s1 = 0.5 * (1.0 - ((y - 8.0) / 0.4).tanh());
                let s2 = 0.5 * (1.0 - ((y - 30.0) / 0.4).tanh());
                vp * s1 + (-vp - 0.5 * (1.5 * y).cos()) * (s2 - s1).max(0.0)
            })
            .collect();
        let t = multiindex_samples(&v, vp, Variant::Monotone, 0.1);
        assert_eq!(format_multiindex(&t[..2]), "{+0,1}");
        assert_eq!(t[2].band, Band::Minus);
        assert!(t[2].count >= 4);
        assert_eq!(family_of(&t, 0), Family::Sigma1);
    }

    #[test]
    fn sigma2_and_sigma3_patterns() {
        let tk = |band, count| Token { band, count };
        let s2 = [tk(Band::Plus, 1), tk(Band::Zero, 1), tk(Band::Minus, 2), tk(Band::Zero, 1), tk(Band::Plus, 5)];
        assert_eq!(family_of(&s2, 0), Family::Sigma2);
        let s3 = [tk(Band::Minus, 0), tk(Band::Zero, 1), tk(Band::Plus, 2), tk(Band::Zero, 1), tk(Band::Minus, 5)];
        assert_eq!(family_of(&s3, 0), Family::Sigma3);
        assert_eq!(format_multiindex(&s3), "{-0,1,+2,1,-5}");
    }

    #[test]
    fn constant_window_violates_identity() {
        let params = ProblemParams::monotone(2, 1, 2.0, 4.0).unwrap();
        let y: Vec<f64> = (0..=1000).map(|i| i as f64 * 0.01).collect();
        let v = vec![params.v_plus(); y.len()];
        let r = mass_identity_samples(&y, &v, &params, OdeForm::ProfileOriginal, Parity::Even);
        assert!(!r.passed);
        assert!(r.mass_identity_residual > 1e-2);
    }

    #[test]
    fn zero_candidate_pohozaev() {
        let y: Vec<f64> = (0..100).map(|i| i as f64 * 0.1).collect();
        let r = pohozaev_check(&y, &vec![0.0; 100], 1.5).unwrap();
        assert_eq!(r.lhs1, 0.0);
        assert_eq!(r.lhs2, 0.0);
    }

    #[test]
    fn step_candidate_ratio_near_one() {
        let (y, w) = step_candidate(50.0, 1.0, 0.01);
        let r = pohozaev_check(&y, &w, 1.5).unwrap();
        assert!((r.ratio - 1.0).abs() < 0.05, "ratio {}", r.ratio);
        assert!((r.gamma0 - 0.95).abs() < 1e-15);
        assert!(r.lhs1.abs() > 1e-3 && r.lhs2.abs() > 1e-3);
    }

    #[test]
    fn non_decaying_candidate_rejected() {
        let y: Vec<f64> = (0..100).map(|i| i as f64 * 0.1).collect();
        assert!(pohozaev_check(&y, &vec![1.0; 100], 1.5).is_err());
    }
}
