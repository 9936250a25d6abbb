//! Exact negative eigenvalues of a separable d = 3 model and their geometric ladder.
//!
//! The model is V(r, ω) = f(r)P(ω)/r² + w(r) with f = 1 and w = 0 for r ≥ r₀.
//! Each retained angular sector reduces to
//!
//! r²Y″ + 2rY′ + (μ_eff(r) − r²(w(r) + λ))Y = 0,  μ_eff = f μ_i − (1 − f) ν_i,
//!
//! where −μ_i is the exterior angular eigenvalue and ν_i = l(l+1) + W the
//! interior one. For constant P this is exact separation of variables.
//! Eigenvalues −λ come from matching the regular interior solution to the
//! decaying exterior solution at trial λ (Wronskian bisection); brackets are
//! centred on the predicted ξ_n and validated by Sturm node counts.

use std::f64::consts::{LN_2, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::angular::AngularMode;
use crate::error::{Error, Result};
use crate::exterior::{self, ExteriorOptions, DEFAULT_FIT_WINDOW};
use crate::numerics::{bisect, fit_log_cosine, fit_line, wrap_angle};
use crate::ode::{Dopri5, Flow, Tolerances};
use crate::oscillation::{prufer, FnQ, PLATEAU_SPAN};
use crate::potential::PiecewisePoly;

/// Interior start radius as a fraction of r₀.
const START_FRACTION: f64 = 1e-6;
const RESCALE_ABOVE: f64 = 1e100;

/// μ₁ = 1/4 + (2π/ln 2)², the coupling whose ladder ratio is exactly 2.
pub fn sigma_half_mu1() -> f64 {
    0.25 + (2.0 * PI / LN_2).powi(2)
}

/// σ = exp(−2π/√(μ₁ − 1/4)).
pub fn sigma(mu1: f64) -> f64 {
    (-2.0 * PI / (mu1 - 0.25).sqrt()).exp()
}

/// One angular sector of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorMode {
    pub mode: AngularMode,
    /// Degree whose l(l+1) (plus the interior shift W) acts where f < 1.
    pub l: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteriorModel {
    pub r0: f64,
    /// Radial coupling on [0, r₀]; taken as 1 beyond.
    pub f: PiecewisePoly,
    /// Radial offset on [0, r₀]; taken as 0 beyond.
    pub w: PiecewisePoly,
    /// Interior angular shift W in ν_i = l(l+1) + W.
    pub angular_shift: f64,
    /// Retained sectors, lowest μ first is not required; the critical one is found.
    pub sectors: Vec<SectorMode>,
}

impl InteriorModel {
    /// P ≡ −μ₁ on the s-wave sector with the quintic ramp f(r) = smoothstep(r/r₀), w ≡ 0.
    pub fn constant_coupling(mu1: f64, r0: f64) -> Result<Self> {
        if !(r0 > 0.0) {
            return Err(Error::InvalidInput(format!("r0 must be positive, got {r0}")));
        }
        let (a3, a4, a5) = (10.0 / r0.powi(3), -15.0 / r0.powi(4), 6.0 / r0.powi(5));
        let f = PiecewisePoly::new(vec![0.0, r0], vec![vec![0.0, 0.0, 0.0, a3, a4, a5]])?;
        let m = Self {
            r0,
            f,
            w: PiecewisePoly::constant(0.0, r0, 0.0),
            angular_shift: 0.0,
            sectors: vec![SectorMode {
                mode: AngularMode::from_mu(0, mu1, 1, 3),
                l: 0,
            }],
        };
        m.validate()?;
        Ok(m)
    }

    /// The σ = 1/2 test model with r₀ = 1.
    pub fn sigma_half() -> Self {
        Self::constant_coupling(sigma_half_mu1(), 1.0).expect("fixed parameters are valid")
    }

    /// Adds the degree-l sector of the constant-P model (μ = μ₁ − l(l+1)).
    pub fn with_degree(mut self, l: usize) -> Self {
        let mu1 = self.sectors[0].mode.mu;
        let idx = self.sectors.len();
        let mu = mu1 - (l * (l + 1)) as f64;
        self.sectors.push(SectorMode {
            mode: AngularMode::from_mu(idx, mu, 2 * l + 1, 3),
            l,
        });
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.f.validate()?;
        self.w.validate()?;
        if !(self.r0 > 0.0) {
            return Err(Error::InvalidInput("r0 must be positive".into()));
        }
        let (a, b) = self.f.domain();
        if a != 0.0 || (b - self.r0).abs() > 1e-12 * self.r0 {
            return Err(Error::InvalidInput("f must be given on [0, r0]".into()));
        }
        if self.f.eval(0.0).abs() > 1e-12 || self.f.derivative(0.0, 1).abs() > 1e-12 {
            return Err(Error::InvalidInput("f must vanish to second order at r = 0".into()));
        }
        if (self.f.eval(self.r0) - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput("f must reach 1 at r0".into()));
        }
        if self.sectors.is_empty() {
            return Err(Error::InvalidInput("model has no angular sectors".into()));
        }
        Ok(())
    }

    pub fn ramp(&self, r: f64) -> f64 {
        if r >= self.r0 {
            1.0
        } else {
            self.f.eval(r.max(0.0))
        }
    }

    pub fn offset(&self, r: f64) -> f64 {
        if r >= self.r0 {
            0.0
        } else {
            self.w.eval(r.max(0.0))
        }
    }

    pub fn nu(&self, sector: usize) -> f64 {
        let l = self.sectors[sector].l as f64;
        l * (l + 1.0) + self.angular_shift
    }

    pub fn effective_coupling(&self, sector: usize, r: f64) -> f64 {
        let f = self.ramp(r);
        f * self.sectors[sector].mode.mu - (1.0 - f) * self.nu(sector)
    }

    /// Regular Frobenius exponent at r = 0.
    pub fn regular_exponent(&self, sector: usize) -> f64 {
        -0.5 + (0.25 + self.nu(sector).max(-0.25)).sqrt()
    }

    /// The unique critical sector, or a hypothesis violation.
    pub fn critical_sector(&self) -> Result<usize> {
        let crit: Vec<usize> = (0..self.sectors.len()).filter(|&i| self.sectors[i].mode.critical).collect();
        match crit.as_slice() {
            [i] => Ok(*i),
            _ => Err(Error::HypothesisViolation(format!(
                "exactly one critical sector required, found {}",
                crit.len()
            ))),
        }
    }

    /// Upper bound for λ of any bound state in the sector: sup (μ_eff/r² − w).
    pub fn lambda_ceiling(&self, sector: usize) -> f64 {
        let mut m: f64 = 0.0;
        for k in 1..=4000 {
            let r = self.r0 * 4.0 * k as f64 / 4000.0;
            m = m.max(self.effective_coupling(sector, r) / (r * r) - self.offset(r));
        }
        1.05 * m + 1e-9
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderOptions {
    pub ode_tol: f64,
    pub count_tol: f64,
    /// Relative width at which eigenvalue bisection stops.
    pub root_tol: f64,
    /// Matching radius; r₀ when absent.
    pub match_radius: Option<f64>,
    pub exterior: ExteriorOptions,
}

impl Default for LadderOptions {
    fn default() -> Self {
        Self {
            ode_tol: 1e-12,
            count_tol: 1e-10,
            root_tol: 1e-12,
            match_radius: None,
            exterior: ExteriorOptions::default(),
        }
    }
}

/// Regular interior solution sampled at ascending radii.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InteriorSolution {
    pub sector: usize,
    pub lambda: f64,
    pub r: Vec<f64>,
    pub y: Vec<f64>,
    pub dy: Vec<f64>,
    /// Y ≈ (r/r₀)^β near the origin, β the regular exponent.
    pub normalization: String,
}

fn interior_rhs<'a>(model: &'a InteriorModel, sector: usize, lambda: f64) -> impl Fn(f64, &[f64; 2]) -> [f64; 2] + 'a {
    move |t, y| {
        let r = t.exp();
        let c = model.effective_coupling(sector, r) - r * r * (model.offset(r) + lambda);
        [y[1], -y[1] - c * y[0]]
    }
}

fn interior_start(model: &InteriorModel, sector: usize) -> (f64, [f64; 2]) {
    let beta = model.regular_exponent(sector);
    let y = START_FRACTION.powf(beta);
    ((START_FRACTION * model.r0).ln(), [y, beta * y])
}

fn check_sector(model: &InteriorModel, sector: usize) -> Result<()> {
    if sector >= model.sectors.len() {
        return Err(Error::InvalidInput(format!("sector {sector} out of range")));
    }
    Ok(())
}

/// Interior solution (Y, Y′) on `grid` (ascending, within (0, ∞)).
pub fn interior_solution(model: &InteriorModel, sector: usize, lambda: f64, grid: &[f64], tol: f64) -> Result<InteriorSolution> {
    check_sector(model, sector)?;
    if !(lambda >= 0.0) {
        return Err(Error::InvalidInput(format!("lambda must be non-negative, got {lambda}")));
    }
    let (t0, y0) = interior_start(model, sector);
    if grid.is_empty() || grid[0] <= t0.exp() || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("interior grid must be ascending and above the start radius".into()));
    }
    let ode = Dopri5::new(Tolerances::new(tol, tol * 1e-3));
    let f = interior_rhs(model, sector, lambda);
    let mut t = t0;
    let mut y = y0;
    let (mut ys, mut dys) = (Vec::with_capacity(grid.len()), Vec::with_capacity(grid.len()));
    for &r in grid {
        let target = r.ln();
        y = ode.integrate(&f, t, y, target, |_| Flow::Continue)?.y;
        t = target;
        if !y[0].is_finite() || y[0].abs() > 1e250 {
            return Err(Error::Integrator {
                r,
                reason: "interior solution overflow; lower the grid's upper end".into(),
            });
        }
        ys.push(y[0]);
        dys.push(y[1] / r);
    }
    Ok(InteriorSolution {
        sector,
        lambda,
        r: grid.to_vec(),
        y: ys,
        dy: dys,
        normalization: format!("Y ~ (r/r0)^{:.6} at r = {:.1e} r0", model.regular_exponent(sector), START_FRACTION),
    })
}

/// (Y, rY′) at radius r, up to a positive factor.
pub fn interior_state(model: &InteriorModel, sector: usize, lambda: f64, r: f64, tol: f64) -> Result<[f64; 2]> {
    check_sector(model, sector)?;
    let (t0, mut y) = interior_start(model, sector);
    let target = r.ln();
    if target <= t0 {
        return Err(Error::InvalidInput(format!("radius {r} below the interior start")));
    }
    let ode = Dopri5::new(Tolerances::new(tol, tol * 1e-3));
    let f = interior_rhs(model, sector, lambda);
    let mut t = t0;
    while t < target {
        let next = (t + 2.0).min(target);
        y = ode.integrate(&f, t, y, next, |_| Flow::Continue)?.y;
        t = next;
        let amp = y[0].abs().max(y[1].abs());
        if amp > RESCALE_ABOVE {
            y = [y[0] / amp, y[1] / amp];
        }
    }
    Ok(y)
}

/// Eigenvalues of the sector above −λ (Sturm count of zeros of the regular solution).
pub fn node_count(model: &InteriorModel, sector: usize, lambda: f64, tol: f64) -> Result<u64> {
    check_sector(model, sector)?;
    if !(lambda > 0.0) {
        return Err(Error::InvalidInput("node count needs lambda > 0".into()));
    }
    let mu = model.sectors[sector].mode.mu;
    let q = FnQ {
        f: |s: f64| {
            let r = s.exp();
            model.effective_coupling(sector, r) - 0.25 - r * r * (model.offset(r) + lambda)
        },
        onset: Some(model.r0.ln().max(0.5 * ((mu + 0.75).max(1.0) / lambda).ln())),
    };
    let s0 = (START_FRACTION * model.r0).ln();
    let theta0 = (0.5 + model.regular_exponent(sector)).atan();
    let s_max = q.onset.unwrap() + PLATEAU_SPAN + 10.0;
    Ok(prufer(&q, s0, theta0, s_max, tol)?.zero_count)
}

/// Phase constant c of r^{1/2} Y(r; λ = 0) ≈ A cos(τ ln r + c) for r ≥ r₀.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseConstantC {
    pub c_value: f64,
    pub amplitude: f64,
    pub fit_window: (f64, f64),
    pub fit_residual: f64,
}

/// Two periods starting half a unit of ln r past r₀.
pub fn default_c_window(model: &InteriorModel, tau: f64) -> (f64, f64) {
    let a = model.r0 * 0.5f64.exp();
    (a, a * (4.0 * PI / tau).exp())
}

pub fn phase_constant_c(model: &InteriorModel, fit_window: Option<(f64, f64)>, tol: f64) -> Result<PhaseConstantC> {
    let sector = model.critical_sector()?;
    let tau = model.sectors[sector].mode.tau;
    let (lo, hi) = fit_window.unwrap_or_else(|| default_c_window(model, tau));
    if !(lo >= model.r0) || !(hi > lo) {
        return Err(Error::InvalidInput(format!("c window [{lo}, {hi}] must lie in r >= r0")));
    }
    let n = 160;
    let grid: Vec<f64> = (0..n).map(|i| (lo.ln() + (hi / lo).ln() * i as f64 / (n - 1) as f64).exp()).collect();
    let sol = interior_solution(model, sector, 0.0, &grid, tol)?;
    let y: Vec<f64> = grid.iter().zip(&sol.y).map(|(r, y)| r.sqrt() * y).collect();
    let (amplitude, c_value, fit_residual) = fit_log_cosine(tau, &grid, &y, false)?;
    if fit_residual > exterior::FIT_RESIDUAL_LIMIT {
        return Err(Error::WindowResidual {
            residual: fit_residual,
            limit: exterior::FIT_RESIDUAL_LIMIT,
            lo,
            hi,
        });
    }
    Ok(PhaseConstantC {
        c_value,
        amplitude,
        fit_window: (lo, hi),
        fit_residual,
    })
}

/// ξ_n = exp((−2πn − C)/√(μ₁ − 1/4)) with C = 2(d − c).
pub fn predicted_xi(n: i64, c: f64, d: f64, mu1: f64) -> f64 {
    xi_with_constant(n, 2.0 * (d - c), mu1)
}

pub fn xi_with_constant(n: i64, big_c: f64, mu1: f64) -> f64 {
    ((-2.0 * PI * n as f64 - big_c) / (mu1 - 0.25).sqrt()).exp()
}

/// Normalized Wronskian sin(angle) between interior and exterior states at r.
pub fn matching_function(model: &InteriorModel, sector: usize, lambda: f64, r: f64, opts: &LadderOptions) -> Result<f64> {
    let [uy, vy] = interior_state(model, sector, lambda, r, opts.ode_tol)?;
    let ([ux, vx], _) = exterior::exterior_state(model.sectors[sector].mode.mu, 3, lambda, r, &opts.exterior)?;
    Ok((vy * ux - uy * vx) / (uy.hypot(vy) * ux.hypot(vx)))
}

/// Root of the matching function in (lo, hi); exactly one sign change required.
pub fn match_eigenvalue(model: &InteriorModel, sector: usize, bracket: (f64, f64), opts: &LadderOptions) -> Result<f64> {
    let (lo, hi) = bracket;
    if !(lo > 0.0) || !(hi > lo) {
        return Err(Error::InvalidInput(format!("bad bracket [{lo}, {hi}]")));
    }
    let r = opts.match_radius.unwrap_or(model.r0);
    if r < model.r0 {
        return Err(Error::InvalidInput("matching radius must be at least r0".into()));
    }
    let f = |lam: f64| matching_function(model, sector, lam, r, opts);
    let probes = 9;
    let mut signs = 0;
    let mut prev = f(lo)?;
    for k in 1..probes {
        let lam = lo * (hi / lo).powf(k as f64 / (probes - 1) as f64);
        let v = f(lam)?;
        if v * prev < 0.0 {
            signs += 1;
        }
        prev = v;
    }
    match signs {
        0 => Err(Error::EmptyBracket { lo, hi }),
        1 => bisect(f, lo, hi, opts.root_tol),
        _ => Err(Error::MultipleRoots { lo, hi }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BracketSource {
    Xi,
    XiWidened,
    NodeCount,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenLadder {
    pub sector: usize,
    pub mu1: f64,
    /// Labels n = 1, 2, ...; λ_n is the n-th deepest eigenvalue of the sector.
    pub n: Vec<usize>,
    pub lambda: Vec<f64>,
    /// λ_n / λ_{n+1}.
    pub ratios: Vec<f64>,
    pub sigma: f64,
    pub a_estimates: Vec<f64>,
    pub xi: Vec<f64>,
    pub phase: PhaseData,
    pub bracket_source: Vec<BracketSource>,
    /// Smallest n from which every ξ_n bracket held exactly one root.
    pub xi_onset: Option<usize>,
}

impl EigenLadder {
    pub fn lambda_at(&self, n: usize) -> Option<f64> {
        self.n.iter().position(|&k| k == n).map(|i| self.lambda[i])
    }

    /// Slope of ln λ_n against n over [n_lo, n_hi].
    pub fn log_slope(&self, n_lo: usize, n_hi: usize) -> Result<f64> {
        let (x, y): (Vec<f64>, Vec<f64>) = self
            .n
            .iter()
            .zip(&self.lambda)
            .filter(|(n, _)| **n >= n_lo && **n <= n_hi)
            .map(|(n, l)| (*n as f64, l.ln()))
            .unzip();
        Ok(fit_line(&x, &y)?.slope)
    }
}

/// Bracket containing exactly the n-th eigenvalue, found by node counts.
fn node_bracket(model: &InteriorModel, sector: usize, n: usize, opts: &LadderOptions) -> Result<(f64, f64)> {
    let count = |lam: f64| node_count(model, sector, lam, opts.count_tol);
    let mut hi = model.lambda_ceiling(sector);
    if count(hi)? >= n as u64 {
        return Err(Error::InvalidInput("node count above the potential ceiling".into()));
    }
    let mut lo = hi;
    let mut steps = 0;
    while count(lo)? < n as u64 {
        lo *= 0.25;
        steps += 1;
        if steps > 200 {
            return Err(Error::EmptyBracket { lo, hi });
        }
    }
    // Shrink until the bracket holds exactly λ_n.
    for _ in 0..200 {
        let (nl, nh) = (count(lo)?, count(hi)?);
        if nl == n as u64 && nh == n as u64 - 1 {
            return Ok((lo, hi));
        }
        let mid = (lo * hi).sqrt();
        if count(mid)? >= n as u64 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::EmptyBracket { lo, hi })
}

fn exact_one(model: &InteriorModel, sector: usize, n: usize, lo: f64, hi: f64, opts: &LadderOptions) -> Result<bool> {
    Ok(node_count(model, sector, lo, opts.count_tol)? == n as u64 && node_count(model, sector, hi, opts.count_tol)? + 1 == n as u64)
}

/// Phase constants and the ξ_n branch of a model's critical sector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseData {
    pub sector: usize,
    pub mu1: f64,
    pub tau: f64,
    pub sigma: f64,
    pub c: PhaseConstantC,
    pub d: exterior::PhaseConstantD,
    /// C = 2(d − c) − 2π·shift, chosen so the ξ_n bracket holds the n-th eigenvalue.
    pub xi_constant: f64,
    pub branch_shift: i64,
}

impl PhaseData {
    /// Fits c and d, then fixes the branch with a node count near ξ_m, m = `probe_n`.
    pub fn new(model: &InteriorModel, probe_n: usize, opts: &LadderOptions) -> Result<Self> {
        model.validate()?;
        let sector = model.critical_sector()?;
        let mu1 = model.sectors[sector].mode.mu;
        let tau = model.sectors[sector].mode.tau;
        let sig = sigma(mu1);
        let c = phase_constant_c(model, None, opts.ode_tol)?;
        let d = exterior::phase_constant_d_with(tau, DEFAULT_FIT_WINDOW, &opts.exterior)?;
        let raw_c = 2.0 * (d.d_value - c.c_value);
        let m = probe_n.max(1) as i64;
        let probe = xi_with_constant(m, raw_c, mu1);
        let j = node_count(model, sector, probe * (1.0 - 0.5 * (1.0 - sig)), opts.count_tol)? as i64;
        let shift = j - m;
        Ok(Self {
            sector,
            mu1,
            tau,
            sigma: sig,
            c,
            d,
            xi_constant: raw_c - 2.0 * PI * shift as f64,
            branch_shift: shift,
        })
    }

    pub fn xi(&self, n: usize) -> f64 {
        xi_with_constant(n as i64, self.xi_constant, self.mu1)
    }

    /// Half-width factor (1 − σ)/2 of the ξ_n brackets.
    pub fn bracket_width(&self) -> f64 {
        0.5 * (1.0 - self.sigma)
    }
}

/// λ_1 … λ_{n_max} of the critical sector.
pub fn compute_ladder(model: &InteriorModel, n_max: usize, opts: &LadderOptions) -> Result<EigenLadder> {
    if n_max == 0 {
        return Err(Error::InvalidInput("n_max must be at least 1".into()));
    }
    let pd = PhaseData::new(model, n_max.min(12), opts)?;
    let (sector, mu1, sig, width) = (pd.sector, pd.mu1, pd.sigma, pd.bracket_width());
    let big_c = pd.xi_constant;
    let results: Vec<Result<(f64, BracketSource)>> = (1..=n_max)
        .into_par_iter()
        .map(|n| {
            let xi = xi_with_constant(n as i64, big_c, mu1);
            let tries = [(width, BracketSource::Xi), (1.5 * width, BracketSource::XiWidened)];
            for (w, src) in tries {
                let (lo, hi) = (xi * (1.0 - w), xi * (1.0 + w));
                if exact_one(model, sector, n, lo, hi, opts)? {
                    if let Ok(lam) = match_eigenvalue(model, sector, (lo, hi), opts) {
                        return Ok((lam, src));
                    }
                }
            }
            let br = node_bracket(model, sector, n, opts)?;
            let lam = match_eigenvalue(model, sector, br, opts).map_err(|e| Error::Ladder { n, source: Box::new(e) })?;
            Ok((lam, BracketSource::NodeCount))
        })
        .collect();
    let mut lambda = Vec::with_capacity(n_max);
    let mut source = Vec::with_capacity(n_max);
    for (k, r) in results.into_iter().enumerate() {
        let (l, s) = r.map_err(|e| match e {
            Error::Ladder { .. } => e,
            other => Error::Ladder {
                n: k + 1,
                source: Box::new(other),
            },
        })?;
        lambda.push(l);
        source.push(s);
    }
    if lambda.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::HypothesisViolation("ladder eigenvalues are not strictly decreasing".into()));
    }
    let ns: Vec<usize> = (1..=n_max).collect();
    let ratios = lambda.windows(2).map(|w| w[0] / w[1]).collect();
    let a_estimates = ns.iter().zip(&lambda).map(|(n, l)| l / sig.powi(*n as i32)).collect();
    let xi = ns.iter().map(|&n| xi_with_constant(n as i64, big_c, mu1)).collect();
    let xi_onset = (0..n_max)
        .rev()
        .take_while(|&i| source[i] == BracketSource::Xi)
        .last()
        .map(|i| i + 1);
    Ok(EigenLadder {
        sector,
        mu1,
        n: ns,
        lambda,
        ratios,
        sigma: sig,
        a_estimates,
        xi,
        phase: pd,
        bracket_source: source,
        xi_onset,
    })
}

/// Mass of the n-th eigenfunction in an annulus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub n: usize,
    pub lambda: f64,
    pub epsilon: f64,
    pub mass_fraction: f64,
    pub annulus: (f64, f64),
    pub c_minus: f64,
    pub c_plus: f64,
    /// Fraction of the mass in r ≤ r₀.
    pub interior_fraction: f64,
}

/// Radial density r²Y² on a log grid, with the cumulative mass fraction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadialProfile {
    pub r: Vec<f64>,
    /// Eigenfunction values, continuous at the matching radius.
    pub y: Vec<f64>,
    pub cumulative: Vec<f64>,
}

impl RadialProfile {
    pub fn mass_between(&self, a: f64, b: f64) -> f64 {
        self.cumulative_at(b) - self.cumulative_at(a)
    }

    pub fn cumulative_at(&self, r: f64) -> f64 {
        if r <= self.r[0] {
            return 0.0;
        }
        let last = self.r.len() - 1;
        if r >= self.r[last] {
            return 1.0;
        }
        let i = self.r.partition_point(|&x| x < r);
        let (r0, r1) = (self.r[i - 1].ln(), self.r[i].ln());
        let w = (r.ln() - r0) / (r1 - r0);
        self.cumulative[i - 1] * (1.0 - w) + self.cumulative[i] * w
    }

    /// Smallest r with cumulative fraction ≥ q.
    pub fn quantile(&self, q: f64) -> f64 {
        let i = self.cumulative.partition_point(|&c| c < q);
        if i == 0 {
            return self.r[0];
        }
        if i >= self.r.len() {
            return *self.r.last().unwrap();
        }
        let (c0, c1) = (self.cumulative[i - 1], self.cumulative[i]);
        let w = if c1 > c0 { (q - c0) / (c1 - c0) } else { 0.0 };
        (self.r[i - 1].ln() * (1.0 - w) + self.r[i].ln() * w).exp()
    }
}

/// Eigenfunction of the sector at an exact λ: interior on [r_start, r₀], exterior beyond.
pub fn eigenfunction_profile(model: &InteriorModel, sector: usize, lambda: f64, opts: &LadderOptions) -> Result<RadialProfile> {
    let per_unit = 200.0;
    let r_a = START_FRACTION * model.r0 * 10.0;
    let r_m = model.r0;
    let r_b = (exterior::DEFAULT_SEED_X / lambda.sqrt()).max(2.0 * r_m);
    let log_grid = |a: f64, b: f64| -> Vec<f64> {
        let n = (((b / a).ln() * per_unit).ceil() as usize).max(8);
        (0..=n).map(|i| (a.ln() + (b / a).ln() * i as f64 / n as f64).exp()).collect()
    };
    let inner = log_grid(r_a, r_m);
    let outer = log_grid(r_m, r_b);
    let yi = interior_solution(model, sector, lambda, &inner, opts.ode_tol)?;
    let xo = exterior::evaluate_exterior_on(model.sectors[sector].mode.mu, 3, lambda, &outer, &opts.exterior)?;
    let scale = yi.y.last().unwrap() / xo.mantissa[0];
    let mut r = inner.clone();
    let mut y = yi.y.clone();
    r.extend_from_slice(&outer[1..]);
    y.extend(xo.mantissa[1..].iter().map(|u| u * scale));
    // Trapezoid in t = ln r on the density r³ Y².
    let mut cumulative = vec![0.0; r.len()];
    for i in 1..r.len() {
        let dt = (r[i] / r[i - 1]).ln();
        let a = r[i - 1].powi(3) * y[i - 1] * y[i - 1];
        let b = r[i].powi(3) * y[i] * y[i];
        cumulative[i] = cumulative[i - 1] + 0.5 * dt * (a + b);
    }
    let total = *cumulative.last().unwrap();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Integrator {
            r: r_m,
            reason: "eigenfunction mass is not finite".into(),
        });
    }
    for c in &mut cumulative {
        *c /= total;
    }
    Ok(RadialProfile { r, y, cumulative })
}

/// Equal-tail annulus holding 1 − ε of the n-th eigenfunction's mass, in units of σ^{−n/2}.
pub fn localization(model: &InteriorModel, ladder: &EigenLadder, n: usize, epsilon: f64, opts: &LadderOptions) -> Result<LocalizationReport> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidInput(format!("epsilon must be in (0, 1), got {epsilon}")));
    }
    let lambda = ladder
        .lambda_at(n)
        .ok_or_else(|| Error::InvalidInput(format!("ladder has no eigenvalue with label {n}")))?;
    let prof = eigenfunction_profile(model, ladder.sector, lambda, opts)?;
    // Tails of ε/2 each, shaved by 1e-9 so the annulus holds at least 1 − ε after rounding.
    let tail = 0.5 * epsilon * (1.0 - 1e-9);
    let lo = prof.quantile(tail);
    let hi = prof.quantile(1.0 - tail);
    let unit = ladder.sigma.powf(-(n as f64) / 2.0);
    Ok(LocalizationReport {
        n,
        lambda,
        epsilon,
        mass_fraction: prof.mass_between(lo, hi),
        annulus: (lo, hi),
        c_minus: lo / unit,
        c_plus: hi / unit,
        interior_fraction: prof.cumulative_at(model.r0),
    })
}

/// Mass fraction of the n-th eigenfunction in C₋σ^{−n/2} ≤ r ≤ C₊σ^{−n/2}.
pub fn annulus_mass(model: &InteriorModel, ladder: &EigenLadder, n: usize, c_minus: f64, c_plus: f64, opts: &LadderOptions) -> Result<f64> {
    let lambda = ladder
        .lambda_at(n)
        .ok_or_else(|| Error::InvalidInput(format!("ladder has no eigenvalue with label {n}")))?;
    let prof = eigenfunction_profile(model, ladder.sector, lambda, opts)?;
    let unit = ladder.sigma.powf(-(n as f64) / 2.0);
    Ok(prof.mass_between(c_minus * unit, c_plus * unit))
}

/// Constants valid for every report: (min C₋, max C₊).
pub fn stabilized_constants(reports: &[LocalizationReport]) -> (f64, f64) {
    let cm = reports.iter().map(|r| r.c_minus).fold(f64::INFINITY, f64::min);
    let cp = reports.iter().map(|r| r.c_plus).fold(0.0, f64::max);
    (cm, cp)
}

/// Canonical phase of a fitted constant, in [0, 2π).
pub fn canonical_phase(x: f64) -> f64 {
    wrap_angle(x)
}
