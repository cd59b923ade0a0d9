//! `vss` command line: drivers for every module with CSV/JSON/SVG output.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::blowup::{run_blowup, BlowupConfig};
use crate::branch::{continue_branch, profile_from_bifurcation, start_from_bifurcation, sweep_profile_census, BranchKind, BranchEvent, CensusOptions, StepControl};
use crate::classify::{self, format_multiindex, mass_identity, support_ratio, taxonomy};
use crate::error::{Error, Result};
use crate::io::{load_ini, IniMap, LinePlot, Manifest, OutputDir, Table};
use crate::params::{critical_alpha, critical_alpha_exact, critical_p, critical_p_exact, Parity, ProblemParams, Variant};
use crate::pdesim::{stability_experiment, PdeGrid, Perturbation};
use crate::shoot::{solve_profile, Guess, ProfileSolution, ShootConfig};
use crate::spectral::{summary, KernelQuadrature, KernelTable};

#[derive(Debug, Parser)]
#[command(name = "vss", version, about = "Very singular self-similar profiles of u_t = -(-Δ)^m u - t^α f(u)")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum VariantArg {
    Monotone,
    Nonmonotone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum ParityArg {
    Even,
    Odd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum ContArg {
    P,
    Alpha,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Order of the poly-harmonic operator.
    #[arg(short = 'm')]
    pub m: Option<u32>,
    /// Space dimension.
    #[arg(short = 'N')]
    pub n: Option<u32>,
    #[arg(short = 'p', long = "p")]
    pub p: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// INI-style run config; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Also write an SVG figure.
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Table of critical exponents p_l (given α) or α_l (given p).
    Critical {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10)]
        lmax: u32,
        /// Flag values inside [lo, hi].
        #[arg(long, num_args = 2, allow_negative_numbers = true)]
        range: Option<Vec<f64>>,
    },
    /// Solve one profile.
    Profile {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "even")]
        parity: ParityArg,
        /// Start from the branch born at this critical index and continue to the requested parameters.
        #[arg(long)]
        from_bif: Option<u32>,
        /// Free parameters at the origin.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        guess: Option<Vec<f64>>,
    },
    /// Follow the branch born at a critical exponent.
    Branch {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        from_bif: u32,
        /// Continuation parameter; defaults to p when --alpha is given.
        #[arg(long = "in", value_enum)]
        cont: Option<ContArg>,
        /// Follow the branch away from the critical value in this direction (+1 or -1).
        #[arg(long, allow_negative_numbers = true)]
        direction: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        min: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        max: Option<f64>,
    },
    /// All profiles reachable from the bifurcation branches at given (p, α).
    Census {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "even")]
        parity: ParityArg,
        #[arg(long, default_value_t = 24)]
        lmax: u32,
    },
    /// Oscillatory blow-up of V'''' = -|V|^{p-1}V.
    Blowup {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "1,0,0,0", allow_negative_numbers = true)]
        init: Vec<f64>,
    },
    /// Kernel, pairing matrix, κ_l, ĉ_l and μ₀.
    Spectral {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 6)]
        lmax: u32,
    },
    /// Direct evolution of the PDE.
    Pde {
        #[command(flatten)]
        common: Common,
        /// Perturb V₀ and measure the return toward it.
        #[arg(long)]
        stability: bool,
        #[arg(long, default_value_t = 0.05)]
        size: f64,
        /// Wave number of a cosine perturbation; uniform when absent.
        #[arg(long)]
        wave: Option<f64>,
        #[arg(long, default_value_t = 10.0)]
        t1: f64,
    },
    /// Integral identity, taxonomy and Pohozaev ratio of one profile.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "even")]
        parity: ParityArg,
        #[arg(long, default_value_t = 0)]
        from_bif: u32,
    },
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub m: u32,
    pub n: u32,
    pub p: Option<f64>,
    pub alpha: Option<f64>,
    pub variant: VariantArg,
    pub shoot: ShootConfig,
    pub step: StepControl,
    pub out: PathBuf,
    pub svg: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { m: 2, n: 1, p: None, alpha: None, variant: VariantArg::Monotone, shoot: ShootConfig::default(), step: StepControl::default(), out: PathBuf::from("out"), svg: false }
    }
}

fn get<T: std::str::FromStr>(ini: &IniMap, sec: &str, key: &str) -> Result<Option<T>> {
    match ini.get(sec).and_then(|s| s.get(key)) {
        None => Ok(None),
        Some(v) => v.parse().map(Some).map_err(|_| Error::Config(format!("[{sec}] {key} = {v} is not valid"))),
    }
}

impl RunConfig {
    pub fn from_ini(ini: &IniMap) -> Result<Self> {
        let known: &[(&str, &[&str])] = &[
            ("params", &["m", "n", "p", "alpha", "variant"]),
            ("integrator", &["rtol", "atol", "max_step"]),
            ("shooting", &["length", "residual_tol", "max_iter"]),
            ("continuation", &["initial", "min", "max", "max_steps"]),
            ("output", &["dir", "svg"]),
        ];
        for (sec, keys) in ini {
            let Some((_, allowed)) = known.iter().find(|(s, _)| s == sec) else {
                return Err(Error::Config(format!("unknown section [{sec}]")));
            };
            if let Some(k) = keys.keys().find(|k| !allowed.contains(&k.as_str())) {
                return Err(Error::Config(format!("unknown key {k} in [{sec}]")));
            }
        }
        let mut c = RunConfig::default();
        if let Some(v) = get(ini, "params", "m")? {
            c.m = v;
        }
        if let Some(v) = get(ini, "params", "n")? {
            c.n = v;
        }
        c.p = get(ini, "params", "p")?;
        c.alpha = get(ini, "params", "alpha")?;
        if let Some(v) = get::<String>(ini, "params", "variant")? {
            c.variant = VariantArg::from_str(&v, true).map_err(|_| Error::Config(format!("unknown variant {v}")))?;
        }
        let i = &mut c.shoot.integrator;
        i.rtol = get(ini, "integrator", "rtol")?.unwrap_or(i.rtol);
        i.atol = get(ini, "integrator", "atol")?.unwrap_or(i.atol);
        i.max_step = get(ini, "integrator", "max_step")?.unwrap_or(i.max_step);
        c.shoot.length = get(ini, "shooting", "length")?.or(c.shoot.length);
        c.shoot.newton.residual_tol = get(ini, "shooting", "residual_tol")?.unwrap_or(c.shoot.newton.residual_tol);
        c.shoot.newton.max_iter = get(ini, "shooting", "max_iter")?.unwrap_or(c.shoot.newton.max_iter);
        let s = &mut c.step;
        s.initial = get(ini, "continuation", "initial")?.unwrap_or(s.initial);
        s.min = get(ini, "continuation", "min")?.unwrap_or(s.min);
        s.max = get(ini, "continuation", "max")?.unwrap_or(s.max);
        s.max_steps = get(ini, "continuation", "max_steps")?.unwrap_or(s.max_steps);
        if let Some(d) = get::<String>(ini, "output", "dir")? {
            c.out = PathBuf::from(d);
        }
        c.svg = get(ini, "output", "svg")?.unwrap_or(false);
        Ok(c)
    }

    pub fn resolve(common: &Common) -> Result<Self> {
        let mut c = match &common.config {
            Some(path) => RunConfig::from_ini(&load_ini(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?)?,
            None => RunConfig::default(),
        };
        c.m = common.m.unwrap_or(c.m);
        c.n = common.n.unwrap_or(c.n);
        c.p = common.p.or(c.p);
        c.alpha = common.alpha.or(c.alpha);
        c.variant = common.variant.unwrap_or(c.variant);
        if let Some(o) = &common.out {
            c.out = o.clone();
        }
        c.svg |= common.svg;
        if c.m == 0 || c.n == 0 {
            return Err(Error::Config("m and N must be positive".into()));
        }
        c.shoot.integrator.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(c)
    }

    fn variant(&self) -> Variant {
        match self.variant {
            VariantArg::Monotone => Variant::Monotone,
            VariantArg::Nonmonotone => Variant::NonMonotone,
        }
    }

    pub fn params(&self) -> Result<ProblemParams> {
        let p = self.p.ok_or_else(|| Error::Config("p is required".into()))?;
        let alpha = self.alpha.ok_or_else(|| Error::Config("alpha is required".into()))?;
        ProblemParams::new(self.m, self.n, p, alpha, self.variant())
    }

    fn manifest(&self, command: &str, figure: Option<&str>) -> Result<OutputDir> {
        let cfg = serde_json::to_value(self)?;
        Ok(OutputDir::new(self.out.clone(), Manifest::new(command, figure, cfg)))
    }
}

fn parity(p: ParityArg) -> Parity {
    match p {
        ParityArg::Even => Parity::Even,
        ParityArg::Odd => Parity::Odd,
    }
}

fn profile_table(s: &ProfileSolution) -> Table {
    let n = s.values.first().map_or(0, Vec::len);
    let mut header = vec!["y".to_string(), "V".to_string()];
    header.extend((1..n).map(|k| format!("d{k}V")));
    let mut t = Table::new(header);
    for (y, v) in s.grid.iter().zip(&s.values) {
        let mut row = vec![*y];
        row.extend(v);
        t.push(row);
    }
    t
}

#[derive(Serialize)]
struct ProfileMeta<'a> {
    params: &'a ProblemParams,
    parity: Parity,
    length: f64,
    shooting_params: &'a [f64],
    amplitude: f64,
    sup_norm: f64,
    support_width: f64,
    residual_norm: f64,
    tail: &'a crate::shoot::DecayEstimate,
    taxonomy: classify::ProfileTaxonomy,
    identity: Option<classify::IdentityReport>,
}

fn profile_meta(s: &ProfileSolution) -> ProfileMeta<'_> {
    ProfileMeta {
        params: &s.params,
        parity: s.parity,
        length: s.length,
        shooting_params: &s.shooting_params,
        amplitude: s.amplitude,
        sup_norm: s.sup_norm,
        support_width: s.support_width(),
        residual_norm: s.residual_norm,
        tail: &s.tail,
        taxonomy: taxonomy(s, classify::DEFAULT_DELTA),
        identity: mass_identity(s).ok(),
    }
}

fn profile_plot(title: &str, sols: &[&ProfileSolution]) -> LinePlot {
    let mut plot = LinePlot::new(title, "y", "V");
    for (k, s) in sols.iter().enumerate() {
        let pts = s.grid.iter().zip(&s.values).filter(|(y, _)| **y <= 0.6 * s.length).map(|(y, v)| (*y, v[0])).collect();
        plot = plot.line(&format!("{k}"), pts);
    }
    plot
}

fn profile_from_bif(params: &ProblemParams, l: u32, cfg: &RunConfig) -> Result<ProfileSolution> {
    profile_from_bifurcation(params, l, &cfg.step, &cfg.shoot)
}

fn cmd_critical(common: &Common, lmax: u32, range: Option<&[f64]>) -> Result<()> {
    let cfg = RunConfig::resolve(common)?;
    let (name, col): (&str, Box<dyn Fn(u32) -> (f64, String)>) = match (cfg.alpha, cfg.p) {
        (Some(a), _) => {
            let exact = num_rational::Ratio::approximate_float(a).filter(|r: &num_rational::Rational64| (*r.numer() as f64 / *r.denom() as f64) == a);
            ("p_l", Box::new(move |l| (critical_p(l, cfg.m, cfg.n, a), exact.map(|r| critical_p_exact(l, cfg.m, cfg.n, r).to_string()).unwrap_or_default())))
        }
        (None, Some(p)) => {
            let exact = num_rational::Ratio::approximate_float(p).filter(|r: &num_rational::Rational64| (*r.numer() as f64 / *r.denom() as f64) == p);
            ("alpha_l", Box::new(move |l| (critical_alpha(l, cfg.m, cfg.n, p), exact.map(|r| critical_alpha_exact(l, cfg.m, cfg.n, r).to_string()).unwrap_or_default())))
        }
        (None, None) => return Err(Error::Config("give --alpha (for p_l) or -p (for alpha_l)".into())),
    };
    let mut t = Table::new(["l", name, "in_range"]);
    println!("{:>4}  {:>22}  {:>10}", "l", name, "exact");
    for l in 0..=lmax {
        let (v, exact) = col(l);
        let inside = range.is_some_and(|r| v >= r[0].min(r[1]) && v <= r[0].max(r[1]));
        println!("{l:>4}  {v:>22}  {exact:>10}{}", if inside { "  *" } else { "" });
        t.push(vec![l as f64, v, if inside { 1.0 } else { 0.0 }]);
    }
    if common.out.is_some() || common.config.is_some() {
        let mut out = cfg.manifest("critical", None)?;
        out.csv("critical.csv", &t)?;
        out.finish()?;
    }
    Ok(())
}

fn cmd_profile(common: &Common, par: ParityArg, from_bif: Option<u32>, guess: Option<Vec<f64>>) -> Result<()> {
    let cfg = RunConfig::resolve(common)?;
    let params = cfg.params()?;
    let sol = match (guess, from_bif) {
        (Some(c), _) => solve_profile(&params, parity(par), &Guess::Params(c), &cfg.shoot)?,
        (None, Some(l)) => profile_from_bif(&params, l, &cfg)?,
        (None, None) => profile_from_bif(&params, if par == ParityArg::Even { 0 } else { 1 }, &cfg)?,
    };
    let mut out = cfg.manifest("profile", None)?;
    out.csv("profile.csv", &profile_table(&sol))?;
    out.json("profile.json", &profile_meta(&sol))?;
    if cfg.svg {
        out.write("profile.svg", profile_plot(&format!("profile at p = {}, alpha = {}", params.p, params.alpha), &[&sol]).to_svg().as_bytes())?;
    }
    out.finish()?;
    println!("V(0) = {}  sup = {}  residual = {:e}", sol.amplitude, sol.sup_norm, sol.residual_norm);
    Ok(())
}

fn cmd_branch(common: &Common, l: u32, cont: Option<ContArg>, direction: Option<f64>, min: Option<f64>, max: Option<f64>) -> Result<()> {
    let cfg = RunConfig::resolve(common)?;
    let cont = cont.unwrap_or(if cfg.alpha.is_some() { ContArg::P } else { ContArg::Alpha });
    let (kind, base, figure) = match cont {
        ContArg::P => {
            let alpha = cfg.alpha.ok_or_else(|| Error::Config("--alpha is required for a p-branch".into()))?;
            let fig = match (l, alpha) {
                (0, a) if a == 0.0 => Some("monotone p0-branch, alpha = 0"),
                (0, a) if a == 1.0 => Some("closed p0-branch, alpha = 1"),
                _ => None,
            };
            (BranchKind::InP { alpha }, ProblemParams::new(cfg.m, cfg.n, critical_p(l, cfg.m, cfg.n, alpha), alpha, cfg.variant())?, fig)
        }
        ContArg::Alpha => {
            let p = cfg.p.ok_or_else(|| Error::Config("-p is required for an alpha-branch".into()))?;
            (BranchKind::InAlpha { p }, ProblemParams::new(cfg.m, cfg.n, p, critical_alpha(l, cfg.m, cfg.n, p).max(0.0), cfg.variant())?, None)
        }
    };
    let kernel = KernelTable::new(cfg.m, l + 2);
    let quad = KernelQuadrature::new(cfg.m, l + 2 * cfg.m + 2);
    let start = [2e-2, 6e-3, 2e-3, 1e-1]
        .iter()
        .map(|o| start_from_bifurcation(kind, l, &base, &kernel, &quad, *o, &cfg.shoot))
        .reduce(|a, b| a.or(b))
        .expect("non-empty")?;
    let lam0 = kind.cont().value(&start.params);
    let crit = kind.critical(l, &base);
    let dir = direction.unwrap_or((lam0 - crit).signum());
    let mut ctrl = cfg.step.clone();
    if let Some(v) = min {
        ctrl.param_min = v;
    }
    if let Some(v) = max {
        ctrl.param_max = v;
    }
    if matches!(kind, BranchKind::InP { .. }) {
        ctrl.param_min = ctrl.param_min.max(1.0 + 1e-3);
    }
    let br = continue_branch(&start, kind, dir, &ctrl, &cfg.shoot)?;
    let mut t = Table::new(["param", "amplitude", "support_width", "residual_norm", "identity_residual", "dominant_extrema"]);
    for p in &br.points {
        t.push(vec![p.param, p.amplitude, p.support_width, p.residual_norm, p.identity_residual, p.dominant_extrema as f64]);
    }
    let mut out = cfg.manifest("branch", figure)?;
    out.csv("branch.csv", &t)?;
    out.json("events.json", &br.events)?;
    if cfg.svg {
        let xl = if matches!(kind, BranchKind::InP { .. }) { "p" } else { "alpha" };
        let mut plot = LinePlot::new(&format!("branch from l = {l}"), xl, "V(0)").line("V(0)", br.points.iter().map(|p| (p.param, p.amplitude)).collect());
        for e in &br.events {
            if let BranchEvent::TurningPoint(v) = e {
                plot = plot.marker(*v, &format!("fold {v:.4}"));
            }
        }
        out.write("branch.svg", plot.to_svg().as_bytes())?;
    }
    out.finish()?;
    for e in &br.events {
        println!("{e:?}");
    }
    if br.has_anomaly() {
        return Err(Error::Anomaly("branch endpoint matches no critical exponent".into()));
    }
    if br.events.iter().any(|e| matches!(e, BranchEvent::SolverLoss(_))) {
        return Err(Error::Continuation("corrector lost the branch".into()));
    }
    Ok(())
}

fn cmd_census(common: &Common, par: ParityArg, lmax: u32) -> Result<()> {
    let cfg = RunConfig::resolve(common)?;
    let params = cfg.params()?;
    let opts = CensusOptions { l_max: lmax, step: cfg.step.clone(), ..Default::default() };
    let census = sweep_profile_census(&params, parity(par), &[], &opts, &cfg.shoot)?;
    let figure = match (par, params.p, params.alpha) {
        (ParityArg::Even, p, a) if p == 2.0 && a == 4.0 => Some("even profiles, p = 2, alpha = 4"),
        (ParityArg::Odd, p, a) if p == 1.5 && a == 7.0 => Some("odd profiles, p = 1.5, alpha = 7"),
        _ => None,
    };
    let mut out = cfg.manifest("census", figure)?;
    let mut t = Table::new(["entry", "amplitude", "sup_norm", "support_width", "dominant_extrema", "index"]);
    for (k, e) in census.entries.iter().enumerate() {
        t.push(vec![k as f64, e.profile.amplitude, e.profile.sup_norm, e.profile.support_width(), e.taxonomy.dominant_extrema as f64, e.taxonomy.index as f64]);
        out.csv(&format!("profile_{k:02}.csv"), &profile_table(&e.profile))?;
        println!("{k:>3}  V(0) = {:<12.6} index {:>2}  {}  ({})", e.profile.amplitude, e.taxonomy.index, format_multiindex(&e.taxonomy.multiindex), e.source);
    }
    out.csv("census.csv", &t)?;
    out.json("census.json", &census)?;
    if cfg.svg {
        let sols: Vec<&ProfileSolution> = census.entries.iter().map(|e| &e.profile).collect();
        out.write("census.svg", profile_plot(&format!("profiles at p = {}, alpha = {}", params.p, params.alpha), &sols).to_svg().as_bytes())?;
    }
    out.finish()?;
    println!("{} distinct profiles, {} failed seeds", census.entries.len(), census.failures.len());
    for (seed, why) in &census.failures {
        println!("  {seed}: {why}");
    }
    Ok(())
}

fn cmd_blowup(common: &Common, init: &[f64]) -> Result<()> {
    let cfg = RunConfig::resolve(common)?;
    let p = cfg.p.ok_or_else(|| Error::Config("-p is required".into()))?;
    let init: [f64; 4] = init.try_into().map_err(|_| Error::Config("--init takes four values".into()))?;
    let orbit = run_blowup(p, &init, &BlowupConfig::default())?;
    let mut t = Table::new(["y", "V", "log_abs_V"]);
    for (y, s) in orbit.trajectory.ys.iter().zip(&orbit.trajectory.states) {
        t.push(vec![*y, s[0], s[0].abs().ln()]);
    }
    let mut out = cfg.manifest("blowup", Some("oscillatory blow-up, log|V| against y"))?;
    out.csv("orbit.csv", &t)?;
    if let Ok(frame) = crate::blowup::to_oscillatory_frame(&orbit) {
        let mut f = Table::new(["s", "phi", "d1phi", "d2phi", "d3phi"]);
        for (s, v) in frame.s.iter().zip(&frame.phi) {
            f.push(vec![*s, v[0], v[1], v[2], v[3]]);
        }
        out.csv("oscillatory.csv", &f)?;
    }
    #[derive(Serialize)]
    struct Summary<'a> {
        p: f64,
        y0_est: f64,
        y0_ladder: f64,
        mu_fit: f64,
        mu_expected: f64,
        ratio_stats: &'a crate::blowup::RatioStats,
        zeros: &'a [f64],
        flagged: bool,
    }
    out.json("blowup.json", &Summary { p, y0_est: orbit.y0_est, y0_ladder: orbit.y0_ladder, mu_fit: orbit.mu_fit, mu_expected: orbit.mu_expected(), ratio_stats: &orbit.ratio_stats, zeros: &orbit.zeros, flagged: orbit.flagged })?;
    if cfg.svg {
        out.write("blowup.svg", LinePlot::new(&format!("blow-up, p = {p}"), "y", "log|V|").line("log|V|", t.rows.iter().map(|r| (r[0], r[2])).collect()).to_svg().as_bytes())?;
    }
    out.finish()?;
    println!("y0 = {}  mu_fit = {} (expected {})  zero ratio {} ± {}", orbit.y0_est, orbit.mu_fit, orbit.mu_expected(), orbit.ratio_stats.mean, orbit.ratio_stats.stddev);
    if orbit.flagged {
        return Err(Error::UnreliableBlowup(format!("y0 estimates {} and {} disagree", orbit.y0_est, orbit.y0_ladder)));
    }
    Ok(())
}

fn cmd_spectral(common: &Common, lmax: u32) -> Result<()> {
    let cfg = RunConfig::resolve(common)?;
    let (p, alpha) = (cfg.p.unwrap_or(2.0), cfg.alpha.unwrap_or(0.0));
    let kernel = KernelTable::new(cfg.m, lmax);
    let s = summary(&kernel, p, alpha)?;
    let mut out = cfg.manifest("spectral", None)?;
    let mut header = vec!["y".to_string()];
    header.extend((0..=lmax).map(|l| format!("F{l}")));
    let mut t = Table::new(header);
    let grid = kernel.full_grid();
    let cols: Vec<Vec<f64>> = (0..=lmax).map(|l| kernel.full_values(l)).collect::<Result<_>>()?;
    for (i, y) in grid.iter().enumerate() {
        let mut row = vec![*y];
        row.extend(cols.iter().map(|c| c[i]));
        t.push(row);
    }
    out.csv("kernel.csv", &t)?;
    out.json("spectral.json", &s)?;
    if cfg.svg {
        out.write("kernel.svg", LinePlot::new(&format!("kernel F, m = {}", cfg.m), "y", "F").line("F", grid.iter().zip(&cols[0]).map(|(y, f)| (*y, *f)).collect()).to_svg().as_bytes())?;
    }
    out.finish()?;
    println!("mu0 = {}", s.mu0);
    for ((l, k), (_, c)) in s.kappa.iter().zip(&s.c_hat) {
        println!("l = {l:>2}  kappa = {k:<22} c_hat = {}", c.map_or("-".into(), |c| c.to_string()));
    }
    Ok(())
}

fn cmd_pde(common: &Common, stability: bool, size: f64, wave: Option<f64>, t1: f64) -> Result<()> {
    let cfg = RunConfig::resolve(common)?;
    let params = cfg.params()?;
    if !stability {
        return Err(Error::Config("only --stability runs are available".into()));
    }
    let v0 = profile_from_bif(&params, 0, &cfg)?;
    let shape = wave.map_or(Perturbation::Uniform, Perturbation::Cosine);
    let rec = stability_experiment(&v0, size, shape, t1, 10, &PdeGrid::default())?;
    let mut out = cfg.manifest("pde", None)?;
    let mut t = Table::new(["t", "distance"]);
    for (a, b) in rec.times.iter().zip(&rec.distances) {
        t.push(vec![*a, *b]);
    }
    out.csv("distance.csv", &t)?;
    out.json("stability.json", &rec)?;
    if cfg.svg {
        out.write("distance.svg", LinePlot::new("distance to V0", "t", "sup |w - V0|").line("d", t.rows.iter().map(|r| (r[0], r[1])).collect()).to_svg().as_bytes())?;
    }
    out.finish()?;
    println!("reduction {:.3}  {}", rec.reduction, if rec.passed { "PASS" } else { "FAIL" });
    Ok(())
}

fn cmd_verify(common: &Common, par: ParityArg, l: u32) -> Result<()> {
    let cfg = RunConfig::resolve(common)?;
    let params = cfg.params()?;
    let mut shoot = cfg.shoot;
    shoot.identity_gate = false;
    let sol = profile_from_bif(&params, l, &RunConfig { shoot, ..cfg.clone() })?;
    if sol.parity != parity(par) {
        return Err(Error::Config(format!("index {l} does not have the requested parity")));
    }
    let id = mass_identity(&sol)?;
    let tax = taxonomy(&sol, classify::DEFAULT_DELTA);
    #[derive(Serialize)]
    struct Report<'a> {
        identity: &'a classify::IdentityReport,
        taxonomy: &'a classify::ProfileTaxonomy,
        support_ratio: f64,
    }
    let ratio = support_ratio(&sol);
    let mut out = cfg.manifest("verify", None)?;
    out.json("verify.json", &Report { identity: &id, taxonomy: &tax, support_ratio: ratio })?;
    out.finish()?;
    println!("identity residual {:e}  index {}  {}  ratio {ratio}", id.mass_identity_residual, tax.index, format_multiindex(&tax.multiindex));
    if !id.passed {
        return Err(Error::IdentityViolated(id.mass_identity_residual));
    }
    Ok(())
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Critical { common, lmax, range } => cmd_critical(&common, lmax, range.as_deref()),
        Command::Profile { common, parity, from_bif, guess } => cmd_profile(&common, parity, from_bif, guess),
        Command::Branch { common, from_bif, cont, direction, min, max } => cmd_branch(&common, from_bif, cont, direction, min, max),
        Command::Census { common, parity, lmax } => cmd_census(&common, parity, lmax),
        Command::Blowup { common, init } => cmd_blowup(&common, &init),
        Command::Spectral { common, lmax } => cmd_spectral(&common, lmax),
        Command::Pde { common, stability, size, wave, t1 } => cmd_pde(&common, stability, size, wave, t1),
        Command::Verify { common, parity, from_bif } => cmd_verify(&common, parity, from_bif),
    }
}

/// Parse, run, and map errors to exit codes.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 3 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
