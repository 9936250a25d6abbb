//! Bound-state counting per angular mode.
//!
//! For a mode with angular eigenvalue −μ and envelope perturbation t, the
//! radial equation r²X″ + (d−1)rX′ + (μ ∓ t − Er²)X = 0 on r ≥ 1 becomes,
//! with X = r^{−(d−2)/2} h and g(s) = h(e^s),
//!
//! ```text
//! g″ + Q(s) g = 0,   Q(s) = μ − (d−2)²/4 − E e^{2s} ± T(s),   T(s) = t(e^s),
//! ```
//!
//! with the Dirichlet condition g(0) = 0. The number of eigenvalues below −E
//! in the mode is the number of zeros of g on (0, ∞). [`count_zeros`]
//! integrates the Prüfer phase (g, g′) = ρ(cos θ, sin θ),
//!
//! ```text
//! θ′ = −(Q cos²θ + sin²θ),   θ(0) = π/2,
//! ```
//!
//! whose zero lines θ ≡ π/2 (mod π) are only ever crossed downward, so the
//! count is read off the final phase. Two independent oracles are provided:
//! direct RK4 sign counting on g and the Sturm inertia of a finite-difference
//! discretization.

use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::angular::{threshold, AngularMode, AngularSpectrum};
use crate::error::{Error, Result};
use crate::numerics::{fit_line, LineFit};
use crate::ode::{rk4_step, Dopri5, Flow, Tolerances};
use crate::potential::RadialPerturbation;

/// Default relative tolerance for the phase integration.
pub const DEFAULT_ODE_TOL: f64 = 1e-10;
/// Q must stay below −1 over this log-radius span before the run may stop.
pub const PLATEAU_SPAN: f64 = 5.0;
/// A final phase this close above the next zero line flags a possible tail zero.
pub const TAIL_MARGIN: f64 = 1e-3;
/// Phase slack (in units of π) for a zero that lands on `r_max`.
const LINE_SLACK: f64 = 1e-9;

/// Coefficient Q of g″ + Q g = 0 on s ≥ 0.
pub trait Coefficient: Sync {
    fn q(&self, s: f64) -> f64;

    /// A point beyond which Q < −1 for all larger s, when one is known.
    fn decay_onset(&self) -> Option<f64>;
}

/// Constant coefficient; mainly for checks against sin/sinh solutions.
#[derive(Debug, Clone, Copy)]
pub struct ConstantQ(pub f64);

impl Coefficient for ConstantQ {
    fn q(&self, _s: f64) -> f64 {
        self.0
    }

    fn decay_onset(&self) -> Option<f64> {
        (self.0 < -1.0).then_some(0.0)
    }
}

/// Coefficient given by a closure, with an optional decay onset.
pub struct FnQ<F: Fn(f64) -> f64 + Sync> {
    pub f: F,
    pub onset: Option<f64>,
}

impl<F: Fn(f64) -> f64 + Sync> Coefficient for FnQ<F> {
    fn q(&self, s: f64) -> f64 {
        (self.f)(s)
    }

    fn decay_onset(&self) -> Option<f64> {
        self.onset
    }
}

/// Q for one mode, energy E and perturbation t.
#[derive(Debug, Clone)]
pub struct QProfile {
    pub mu: f64,
    pub d: usize,
    pub e: f64,
    pub t: RadialPerturbation,
}

impl QProfile {
    pub fn new(mu: f64, d: usize, e: f64, t: RadialPerturbation) -> Result<Self> {
        if !(e > 0.0) || !e.is_finite() {
            return Err(Error::InvalidInput(format!("E must be positive and finite, got {e}")));
        }
        if d < 3 {
            return Err(Error::InvalidInput(format!("dimension must be >= 3, got {d}")));
        }
        Ok(Self { mu, d, e, t })
    }

    /// Profile for an angular mode.
    pub fn for_mode(mode: &AngularMode, d: usize, e: f64, t: RadialPerturbation) -> Result<Self> {
        Self::new(mode.mu, d, e, t)
    }

    /// Effective coupling μ − (d−2)²/4.
    pub fn coupling(&self) -> f64 {
        self.mu - threshold(self.d)
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.coupling() - self.e * (2.0 * s).exp() + self.t.q_term(s)
    }

    /// Last sign change of Q on [0, ∞), if Q is ever non-negative.
    pub fn turning_point(&self) -> Option<f64> {
        let hi = self.decay_onset()?;
        let n = ((hi * 200.0).ceil() as usize).max(200);
        let ds = hi / n as f64;
        let mut k = n;
        while k > 0 && self.eval(k as f64 * ds) < 0.0 {
            k -= 1;
        }
        if k == n {
            return Some(hi);
        }
        if k == 0 && self.eval(0.0) < 0.0 {
            return None;
        }
        let (mut a, mut b) = (k as f64 * ds, (k + 1) as f64 * ds);
        for _ in 0..80 {
            let m = 0.5 * (a + b);
            if self.eval(m) >= 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        Some(0.5 * (a + b))
    }
}

impl Coefficient for QProfile {
    fn q(&self, s: f64) -> f64 {
        self.eval(s)
    }

    /// E e^{2s} ≥ max(μ − (d−2)²/4, 0) + sup|t| + 1 guarantees Q < −1.
    fn decay_onset(&self) -> Option<f64> {
        let need = self.coupling().max(0.0) + self.t.sup_norm() + 1.0;
        Some((0.5 * (need / self.e).ln()).max(0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    PhasePlateau,
    RMax,
}

/// Record of one phase integration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PruferTrace {
    pub zero_count: u64,
    pub theta_samples: Vec<(f64, f64)>,
    pub r_end: f64,
    pub theta_end: f64,
    pub terminated_by: Termination,
    pub tail_zero_possible: bool,
}

fn lines_below(theta: f64) -> f64 {
    ((FRAC_PI_2 - theta) / PI + LINE_SLACK).floor()
}

/// Whether g g′ > 0 with a margin, i.e. θ mod π ∈ (0, π/2).
fn in_growth_basin(theta: f64) -> bool {
    let u = theta.rem_euclid(PI);
    u > 1e-6 && u < FRAC_PI_2 - 1e-6
}

/// Distance of θ above the next zero line below it.
fn gap_to_next_line(theta: f64) -> f64 {
    let k = lines_below(theta);
    theta - (FRAC_PI_2 - (k + 1.0) * PI)
}

/// Zeros of the solution with g(0) = 0, g′(0) = 1 on (0, r_max].
pub fn count_zeros<Q: Coefficient + ?Sized>(q: &Q, r_max: f64, tol: f64) -> Result<PruferTrace> {
    prufer(q, 0.0, FRAC_PI_2, r_max, tol)
}

/// Prüfer integration from `(r_start, theta0)`; counts zero lines crossed.
///
/// The run stops once Q < −1 has held over [`PLATEAU_SPAN`], the decay onset
/// is passed and g g′ > 0; no zero can follow. Otherwise it runs to `r_max`.
pub fn prufer<Q: Coefficient + ?Sized>(q: &Q, r_start: f64, theta0: f64, r_max: f64, tol: f64) -> Result<PruferTrace> {
    if !(r_max > r_start) {
        return Err(Error::InvalidInput(format!("r_max = {r_max} must exceed r_start = {r_start}")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("integrator tolerance must be positive".into()));
    }
    let onset = q.decay_onset().unwrap_or(f64::INFINITY);
    let ode = Dopri5::new(Tolerances::new(tol, tol * 1e-2));
    let rhs = |s: f64, y: &[f64; 1]| {
        let (sn, cs) = y[0].sin_cos();
        [-(q.q(s) * cs * cs + sn * sn)]
    };
    let mut samples = vec![(r_start, theta0)];
    let mut neg_since: Option<f64> = None;
    let mut plateau = false;
    let out = ode.integrate(rhs, r_start, [theta0], r_max, |step| {
        let (s1, th1) = (step.t1, step.y1[0]);
        samples.push((s1, th1));
        // Q is sampled at the step end and midpoint.
        let qm = q.q(0.5 * (step.t0 + s1)).max(q.q(s1));
        if qm < -1.0 {
            neg_since.get_or_insert(step.t0);
        } else {
            neg_since = None;
        }
        let held = neg_since.is_some_and(|a| s1 - a >= PLATEAU_SPAN);
        if held && s1 >= onset && in_growth_basin(th1) {
            plateau = true;
            Flow::Stop
        } else {
            Flow::Continue
        }
    })?;
    let theta_end = out.y[0];
    let zero_count = (lines_below(theta_end) - lines_below(theta0)).max(0.0) as u64;
    let terminated_by = if plateau { Termination::PhasePlateau } else { Termination::RMax };
    if terminated_by == Termination::RMax {
        log::warn!("phase still advancing at r_max = {r_max}; count {zero_count} is a lower bound");
    }
    let tail_zero_possible = !plateau || gap_to_next_line(theta_end) < TAIL_MARGIN;
    Ok(PruferTrace {
        zero_count,
        theta_samples: samples,
        r_end: out.t,
        theta_end,
        terminated_by,
        tail_zero_possible,
    })
}

/// Default integration end: ten units past the decay onset.
pub fn default_r_max<Q: Coefficient + ?Sized>(q: &Q) -> Result<f64> {
    q.decay_onset()
        .map(|o| o + PLATEAU_SPAN + 10.0)
        .ok_or_else(|| Error::InvalidInput("coefficient has no decay onset; pass r_max explicitly".into()))
}

/// Count sign changes of g from fixed-step RK4 on (g, g′).
///
/// The step is min(h, 0.25/√(|Q|+1)); (g, g′) is rescaled whenever it grows
/// large, which leaves signs untouched. The run stops past the decay onset
/// once g g′ > 0, or at `r_max`. A final |g| below 10⁻⁸ of the local
/// amplitude counts as a zero at `r_max`.
pub fn sign_change_oracle<Q: Coefficient + ?Sized>(q: &Q, r_max: f64, h: f64) -> Result<u64> {
    if !(h > 0.0) || !(r_max > 0.0) {
        return Err(Error::InvalidInput("oracle needs positive step and r_max".into()));
    }
    let onset = q.decay_onset().unwrap_or(f64::INFINITY);
    let mut rhs = |s: f64, y: &[f64; 2]| [y[1], -q.q(s) * y[0]];
    let mut y = [0.0, 1.0];
    let mut s = 0.0;
    let mut count = 0u64;
    let mut last_sign = 0.0f64;
    while s < r_max {
        let local = 0.25 / (q.q(s).abs() + 1.0).sqrt();
        let step = h.min(local).min(r_max - s);
        let y1 = rk4_step(&mut rhs, s, &y, step);
        s += step;
        if !y1[0].is_finite() || !y1[1].is_finite() {
            return Err(Error::Integrator {
                r: s,
                reason: "oracle state overflow".into(),
            });
        }
        y = y1;
        if y[0] != 0.0 {
            let sg = y[0].signum();
            if last_sign != 0.0 && sg != last_sign {
                count += 1;
            }
            last_sign = sg;
        }
        let amp = y[0].abs() + y[1].abs();
        if amp > 1e100 {
            y = [y[0] / amp, y[1] / amp];
        }
        if s > onset && y[0] * y[1] > 0.0 {
            return Ok(count);
        }
    }
    let amp = (y[0] * y[0] + y[1] * y[1] / (q.q(s).abs() + 1.0)).sqrt();
    if y[0].abs() < 1e-8 * amp {
        count += 1;
    }
    Ok(count)
}

/// Negative eigenvalues of the Dirichlet finite-difference operator −d²/ds² − Q.
pub fn sturm_negative_count(diag: &[f64], off: f64) -> u64 {
    let mut count = 0;
    let mut dprev = 1.0;
    let off2 = off * off;
    for (i, &a) in diag.iter().enumerate() {
        let mut di = if i == 0 { a } else { a - off2 / dprev };
        if di == 0.0 {
            di = -f64::EPSILON * (a.abs() + off.abs()).max(f64::MIN_POSITIVE);
        }
        if di < 0.0 {
            count += 1;
        }
        dprev = di;
    }
    count
}

fn inertia_on<Q: Coefficient + ?Sized>(q: &Q, s_end: f64, n: usize) -> u64 {
    let h = s_end / (n + 1) as f64;
    let inv_h2 = 1.0 / (h * h);
    let diag: Vec<f64> = (1..=n).map(|i| 2.0 * inv_h2 - q.q(i as f64 * h)).collect();
    sturm_negative_count(&diag, -inv_h2)
}

/// Eigenvalues below −E of the mode operator on [1, R_max] with Dirichlet
/// ends, by Sturm inertia of its second-order discretization in s = ln r.
///
/// Doubling R_max (keeping the mesh width) must leave the count unchanged.
pub fn inertia_oracle(mode: &AngularMode, d: usize, e: f64, t: &RadialPerturbation, r_max: f64, n_grid: usize) -> Result<u64> {
    let q = QProfile::new(mode.mu, d, e, t.clone())?;
    inertia_oracle_q(&q, r_max, n_grid)
}

/// [`inertia_oracle`] for an arbitrary coefficient; `r_max` is a physical radius.
pub fn inertia_oracle_q<Q: Coefficient + ?Sized>(q: &Q, r_max: f64, n_grid: usize) -> Result<u64> {
    if !(r_max > 1.0) || n_grid < 2 {
        return Err(Error::InvalidInput("inertia oracle needs R_max > 1 and n_grid >= 2".into()));
    }
    let s_end = r_max.ln();
    let base = inertia_on(q, s_end, n_grid);
    let s2 = s_end + std::f64::consts::LN_2;
    let n2 = ((n_grid + 1) as f64 * s2 / s_end).round() as usize - 1;
    let doubled = inertia_on(q, s2, n2);
    if base != doubled {
        return Err(Error::GridNotConverged(format!(
            "inertia count changed from {base} to {doubled} when R_max doubled to {}",
            2.0 * r_max
        )));
    }
    Ok(base)
}

/// (ln(1/E)/2π) Σ multiplicity·τ over critical modes.
pub fn predicted_count(modes: &[AngularMode], e: f64, d: usize) -> Result<f64> {
    let thr = threshold(d);
    let mut sum = 0.0;
    for m in modes {
        if !(m.mu > thr) || m.borderline {
            return Err(Error::InvalidInput(format!(
                "mode {} with mu = {} is not critical",
                m.index, m.mu
            )));
        }
        sum += m.multiplicity as f64 * (m.mu - thr).sqrt();
    }
    Ok((1.0 / e).ln() / (2.0 * PI) * sum)
}

/// Count for one mode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeCount {
    pub index: usize,
    pub mu: f64,
    pub multiplicity: usize,
    pub count: u64,
    pub tail_zero_possible: bool,
    pub terminated_by: Termination,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountOptions {
    pub tol: f64,
    /// Include non-critical modes.
    pub exhaustive: bool,
}

impl Default for CountOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_ODE_TOL,
            exhaustive: false,
        }
    }
}

/// Σ multiplicity × zero count over the selected modes.
pub fn count_bound_states(
    spectrum: &AngularSpectrum,
    e: f64,
    t: &RadialPerturbation,
    opts: CountOptions,
) -> Result<(u64, Vec<ModeCount>)> {
    let d = spectrum.dimension;
    let selected: Vec<&AngularMode> = spectrum
        .modes
        .iter()
        .filter(|m| opts.exhaustive || m.critical)
        .collect();
    let per_mode: Vec<ModeCount> = selected
        .par_iter()
        .map(|m| {
            let q = QProfile::for_mode(m, d, e, t.clone())?;
            let trace = count_zeros(&q, default_r_max(&q)?, opts.tol)?;
            Ok(ModeCount {
                index: m.index,
                mu: m.mu,
                multiplicity: m.multiplicity,
                count: trace.zero_count,
                tail_zero_possible: trace.tail_zero_possible,
                terminated_by: trace.terminated_by,
            })
        })
        .collect::<Result<_>>()?;
    let total = per_mode.iter().map(|c| c.count * c.multiplicity as u64).sum();
    Ok((total, per_mode))
}

/// Counts over an E grid with the log-law prediction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CountReport {
    pub e_grid: Vec<f64>,
    pub mode_indices: Vec<usize>,
    pub multiplicities: Vec<usize>,
    /// `per_mode_counts[i][j]`: mode i at E_j.
    pub per_mode_counts: Vec<Vec<u64>>,
    pub totals: Vec<u64>,
    pub predicted: Vec<f64>,
    pub slope_fit: Option<LineFit>,
}

/// Default grid {10^{−2k} : k = 1..6}.
pub fn default_e_grid() -> Vec<f64> {
    (1..=6).map(|k| format!("1e-{}", 2 * k).parse().expect("literal")).collect()
}

pub fn count_report(spectrum: &AngularSpectrum, t: &RadialPerturbation, e_grid: &[f64], opts: CountOptions) -> Result<CountReport> {
    if e_grid.is_empty() {
        return Err(Error::InvalidInput("empty E grid".into()));
    }
    let d = spectrum.dimension;
    let runs: Vec<(u64, Vec<ModeCount>)> = e_grid
        .par_iter()
        .map(|&e| count_bound_states(spectrum, e, t, opts))
        .collect::<Result<_>>()?;
    let mode_indices: Vec<usize> = runs[0].1.iter().map(|c| c.index).collect();
    let multiplicities: Vec<usize> = runs[0].1.iter().map(|c| c.multiplicity).collect();
    let per_mode_counts = (0..mode_indices.len())
        .map(|i| runs.iter().map(|(_, pm)| pm[i].count).collect())
        .collect();
    let critical: Vec<AngularMode> = spectrum.critical().cloned().collect();
    let predicted = e_grid
        .iter()
        .map(|&e| predicted_count(&critical, e, d))
        .collect::<Result<_>>()?;
    let mut report = CountReport {
        e_grid: e_grid.to_vec(),
        mode_indices,
        multiplicities,
        per_mode_counts,
        totals: runs.iter().map(|(t, _)| *t).collect(),
        predicted,
        slope_fit: None,
    };
    if e_grid.len() >= 5 {
        report.slope_fit = slope_fit(&report).ok();
    }
    Ok(report)
}

/// Least-squares line of total count against ln(1/E).
pub fn slope_fit(report: &CountReport) -> Result<LineFit> {
    slope_fit_raw(&report.e_grid, &report.totals.iter().map(|&t| t as f64).collect::<Vec<_>>())
}

/// Requires ≥ 5 points spanning ≥ 6 decades of E.
pub fn slope_fit_raw(e_grid: &[f64], totals: &[f64]) -> Result<LineFit> {
    if e_grid.len() < 5 {
        return Err(Error::InvalidInput(format!("slope fit needs >= 5 E values, got {}", e_grid.len())));
    }
    let x: Vec<f64> = e_grid.iter().map(|e| (1.0 / e).ln()).collect();
    let span = x.iter().copied().fold(f64::NEG_INFINITY, f64::max) - x.iter().copied().fold(f64::INFINITY, f64::min);
    if span < 6.0 * std::f64::consts::LN_10 - 1e-9 {
        return Err(Error::InvalidInput(format!(
            "E grid spans {:.2} decades; at least 6 are needed",
            span / std::f64::consts::LN_10
        )));
    }
    fit_line(&x, totals)
}

/// Predicted slope (1/2π) Σ multiplicity·τ of the log-law.
pub fn predicted_slope(spectrum: &AngularSpectrum) -> f64 {
    spectrum
        .critical()
        .map(|m| m.multiplicity as f64 * m.tau)
        .sum::<f64>()
        / (2.0 * PI)
}
