//! Decaying exterior solutions of r²X″ + (d−1)rX′ + (μ − λr²)X = 0.
//!
//! Solutions are normalized as X^λ(r) = x^{−(d−2)/2} K_ν(x) with x = r√λ and
//! ν² = (d−2)²/4 − μ, so that X^λ(r) = X^1(r√λ). For critical modes ν is
//! imaginary and K_ν is the real MacDonald function of imaginary order.
//!
//! Everything is obtained by inward integration in t = ln r from an
//! asymptotic seed at x₀ = 30 (or further out). Inward is the stable
//! direction for the decaying solution: any error in the seed excites the
//! growing solution, which decays relative to X like e^{−2(x₀−x)}.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::angular::{threshold, AngularMode};
use crate::error::{Error, Result};
use crate::numerics::{fit_log_cosine, wrap_angle};
use crate::ode::{Dopri5, Flow, Tolerances};

/// Default seed point in x = r√λ.
pub const DEFAULT_SEED_X: f64 = 30.0;
/// Default fit window in x for the phase constant.
pub const DEFAULT_FIT_WINDOW: (f64, f64) = (1e-4, 1e-2);
/// Largest admissible relative RMS residual of a phase fit.
pub const FIT_RESIDUAL_LIMIT: f64 = 1e-4;
const RESCALE_ABOVE: f64 = 1e100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExteriorOptions {
    pub tol: f64,
    pub seed_x: f64,
    /// Points of the log-spaced output grid.
    pub points: usize,
}

impl Default for ExteriorOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            seed_x: DEFAULT_SEED_X,
            points: 200,
        }
    }
}

impl ExteriorOptions {
    fn integrator(&self) -> Dopri5 {
        Dopri5::new(Tolerances::new(self.tol, self.tol * 1e-3))
    }
}

/// Hankel asymptotic series of K_ν at large x, with ν² given.
///
/// Returns (ln K_ν(x), x K_ν′(x)/K_ν(x)). The series is summed until its
/// terms drop below 1e-17 or start diverging past k = 2x.
pub fn macdonald_asymptotic(nu_sq: f64, x: f64) -> (f64, f64) {
    let mut term = 1.0;
    let mut s = 1.0;
    let mut xs = 0.0;
    let k_max = (2.0 * x).ceil() as usize + 8;
    let mut prev = f64::INFINITY;
    for k in 1..=k_max {
        let odd = (2 * k - 1) as f64;
        term *= (4.0 * nu_sq - odd * odd) / (8.0 * k as f64 * x);
        if k as f64 > 2.0 * x && term.abs() > prev {
            break;
        }
        prev = term.abs();
        s += term;
        xs -= k as f64 * term;
        if term.abs() < 1e-17 * s.abs() {
            break;
        }
    }
    let ln_k = 0.5 * (PI / (2.0 * x)).ln() - x + s.abs().ln();
    let logder = -0.5 - x + xs / s;
    (ln_k, logder)
}

/// Sampled exterior solution in the canonical normalization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExteriorSolution {
    pub mu: f64,
    pub dimension: usize,
    pub lambda: f64,
    /// Ascending radii.
    pub r: Vec<f64>,
    /// X(r) = `mantissa · e^{log_scale}`.
    pub mantissa: Vec<f64>,
    /// r X′(r), on the same scale as `mantissa`.
    pub r_derivative: Vec<f64>,
    pub log_scale: f64,
    pub seed_radius: f64,
    /// ln X at the seed radius (the seed itself has mantissa 1).
    pub seed_log_amplitude: f64,
}

impl ExteriorSolution {
    pub fn value(&self, i: usize) -> f64 {
        self.mantissa[i] * self.log_scale.exp()
    }

    pub fn derivative(&self, i: usize) -> f64 {
        self.r_derivative[i] * self.log_scale.exp() / self.r[i]
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.r.len()).map(|i| self.value(i)).collect()
    }

    pub fn derivatives(&self) -> Vec<f64> {
        (0..self.r.len()).map(|i| self.derivative(i)).collect()
    }

    pub fn log_derivatives(&self) -> Vec<f64> {
        self.r
            .iter()
            .zip(self.mantissa.iter().zip(&self.r_derivative))
            .map(|(r, (u, v))| v / (u * r))
            .collect()
    }

    /// Sign changes of X along the grid.
    pub fn sign_changes(&self) -> usize {
        self.mantissa.windows(2).filter(|w| w[0] * w[1] < 0.0).count()
    }
}

fn check_inputs(mu: f64, d: usize, lambda: f64) -> Result<()> {
    if d < 3 {
        return Err(Error::InvalidInput(format!("dimension must be >= 3, got {d}")));
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidInput(format!("lambda must be positive and finite, got {lambda}")));
    }
    if !mu.is_finite() {
        return Err(Error::InvalidInput("mu must be finite".into()));
    }
    Ok(())
}

/// Seed (t₀, [u, v], ln X(R)) at R = max(seed_x, r_hi √λ)/√λ, with u = 1.
fn seed(mu: f64, d: usize, lambda: f64, r_hi: f64, seed_x: f64) -> (f64, [f64; 2], f64) {
    let sl = lambda.sqrt();
    let x0 = seed_x.max(r_hi * sl);
    let a = (d as f64 - 2.0) / 2.0;
    let (ln_k, logder) = macdonald_asymptotic(a * a - mu, x0);
    let ln_x = -a * x0.ln() + ln_k;
    ((x0 / sl).ln(), [1.0, -a + logder], ln_x)
}

fn rhs(mu: f64, d: usize, lambda: f64) -> impl Fn(f64, &[f64; 2]) -> [f64; 2] {
    let dm2 = d as f64 - 2.0;
    move |t, y| {
        let r2 = (2.0 * t).exp();
        [y[1], -dm2 * y[1] + (lambda * r2 - mu) * y[0]]
    }
}

/// Exterior solution for `mode` on `points` log-spaced radii in [r_lo, r_hi].
pub fn evaluate_exterior(
    mode: &AngularMode,
    d: usize,
    lambda: f64,
    r_lo: f64,
    r_hi: f64,
    opts: &ExteriorOptions,
) -> Result<ExteriorSolution> {
    if !(r_lo > 0.0) || !(r_hi > r_lo) {
        return Err(Error::InvalidInput(format!("need 0 < r_lo < r_hi, got [{r_lo}, {r_hi}]")));
    }
    let n = opts.points.max(2);
    let (a, b) = (r_lo.ln(), r_hi.ln());
    let grid: Vec<f64> = (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect();
    evaluate_exterior_on(mode.mu, d, lambda, &grid, opts)
}

/// Exterior solution for coupling `mu` on an ascending grid of radii.
pub fn evaluate_exterior_on(mu: f64, d: usize, lambda: f64, grid: &[f64], opts: &ExteriorOptions) -> Result<ExteriorSolution> {
    check_inputs(mu, d, lambda)?;
    if grid.is_empty() || grid[0] <= 0.0 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("exterior grid must be positive and strictly ascending".into()));
    }
    let r_hi = *grid.last().unwrap();
    let (t_seed, y_seed, seed_log) = seed(mu, d, lambda, r_hi, opts.seed_x);
    let ode = opts.integrator();
    let f = rhs(mu, d, lambda);

    let m = grid.len();
    let mut u = vec![0.0; m];
    let mut v = vec![0.0; m];
    let mut y = y_seed;
    let mut t = t_seed;
    let mut shift = 0.0;
    for i in (0..m).rev() {
        let target = grid[i].ln();
        if target < t {
            y = ode.integrate(&f, t, y, target, |_| Flow::Continue)?.y;
            t = target;
        }
        let amp = y[0].abs().max(y[1].abs());
        if amp > RESCALE_ABOVE {
            y = [y[0] / amp, y[1] / amp];
            for k in i + 1..m {
                u[k] /= amp;
                v[k] /= amp;
            }
            shift += amp.ln();
        }
        u[i] = y[0];
        v[i] = y[1];
    }
    let peak = u.iter().chain(&v).fold(0.0f64, |acc, x| acc.max(x.abs()));
    if !(peak > 0.0) || !peak.is_finite() {
        return Err(Error::Integrator {
            r: grid[0],
            reason: "exterior solution vanished or overflowed".into(),
        });
    }
    for k in 0..m {
        u[k] /= peak;
        v[k] /= peak;
    }
    Ok(ExteriorSolution {
        mu,
        dimension: d,
        lambda,
        r: grid.to_vec(),
        mantissa: u,
        r_derivative: v,
        log_scale: seed_log + shift + peak.ln(),
        seed_radius: t_seed.exp(),
        seed_log_amplitude: seed_log,
    })
}

/// Batch evaluation over (μ, λ) pairs on a shared grid; output order follows input.
pub fn evaluate_batch(pairs: &[(f64, f64)], d: usize, grid: &[f64], opts: &ExteriorOptions) -> Result<Vec<ExteriorSolution>> {
    pairs
        .par_iter()
        .map(|&(mu, lambda)| evaluate_exterior_on(mu, d, lambda, grid, opts))
        .collect()
}

/// State (X, rX′) at radius ρ, up to a positive common factor, plus its log scale.
pub fn exterior_state(mu: f64, d: usize, lambda: f64, rho: f64, opts: &ExteriorOptions) -> Result<([f64; 2], f64)> {
    check_inputs(mu, d, lambda)?;
    if !(rho > 0.0) {
        return Err(Error::InvalidInput(format!("rho must be positive, got {rho}")));
    }
    let (t_seed, y_seed, seed_log) = seed(mu, d, lambda, rho, opts.seed_x);
    let target = rho.ln();
    if target >= t_seed {
        return Ok((y_seed, seed_log));
    }
    let ode = opts.integrator();
    let f = rhs(mu, d, lambda);
    let mut shift = 0.0;
    let mut y = y_seed;
    let mut t = t_seed;
    // Unit chunks in ln r keep the state representable without rescaling inside a step.
    while t > target {
        let next = (t - 1.0).max(target);
        y = ode.integrate(&f, t, y, next, |_| Flow::Continue)?.y;
        t = next;
        let amp = y[0].abs().max(y[1].abs());
        if amp > RESCALE_ABOVE {
            y = [y[0] / amp, y[1] / amp];
            shift += amp.ln();
        }
    }
    Ok((y, seed_log + shift))
}

/// X′(ρ)/X(ρ) for the decaying solution.
pub fn log_derivative(mode: &AngularMode, d: usize, lambda: f64, rho: f64, opts: &ExteriorOptions) -> Result<f64> {
    log_derivative_mu(mode.mu, d, lambda, rho, opts)
}

pub fn log_derivative_mu(mu: f64, d: usize, lambda: f64, rho: f64, opts: &ExteriorOptions) -> Result<f64> {
    let ([u, v], _) = exterior_state(mu, d, lambda, rho, opts)?;
    if u.abs() <= 1e-12 * (u.abs() + v.abs()) {
        return Err(Error::NodeAtMatchingRadius(rho));
    }
    Ok(v / (u * rho))
}

/// The exponent K = min(2, min over non-critical α of (−1/2 − α)) governing
/// how fast ρX′/X approaches α as ρ√λ → 0.
pub fn convergence_exponent(alphas: &[f64]) -> f64 {
    alphas.iter().map(|a| -0.5 - a).fold(2.0, f64::min)
}

/// ∫_ρ^∞ X(r)² r^{d−1} dr, canonical normalization.
pub fn tail_mass(mode: &AngularMode, d: usize, lambda: f64, rho: f64, opts: &ExteriorOptions) -> Result<f64> {
    tail_mass_mu(mode.mu, d, lambda, rho, opts)
}

pub fn tail_mass_mu(mu: f64, d: usize, lambda: f64, rho: f64, opts: &ExteriorOptions) -> Result<f64> {
    check_inputs(mu, d, lambda)?;
    if !(rho > 0.0) {
        return Err(Error::InvalidInput(format!("rho must be positive, got {rho}")));
    }
    let (t_seed, y_seed, seed_log) = seed(mu, d, lambda, rho, opts.seed_x);
    let x0 = t_seed.exp() * lambda.sqrt();
    // Leading-order mass beyond the seed: λ^{−d/2} (π/4) e^{−2x₀}.
    let beyond = (-(d as f64) / 2.0 * lambda.ln() + (PI / 4.0).ln() - 2.0 * x0).exp();
    let target = rho.ln();
    if target >= t_seed {
        return Ok(beyond);
    }
    let dd = d as f64;
    let f = rhs(mu, d, lambda);
    // m accumulates ∫ u² r^d dt inward, in the seed's scale.
    let aug = |t: f64, y: &[f64; 3]| {
        let [du, dv] = f(t, &[y[0], y[1]]);
        [du, dv, -y[0] * y[0] * (dd * t).exp()]
    };
    let ode = Dopri5::new(Tolerances::new(opts.tol, opts.tol * 1e-3));
    let mut y = [y_seed[0], y_seed[1], 0.0];
    let mut t = t_seed;
    let mut log_sq = 2.0 * seed_log;
    while t > target {
        let next = (t - 1.0).max(target);
        y = ode.integrate(aug, t, y, next, |_| Flow::Continue)?.y;
        t = next;
        let amp = y[0].abs().max(y[1].abs());
        if amp > RESCALE_ABOVE {
            y = [y[0] / amp, y[1] / amp, y[2] / (amp * amp)];
            log_sq += 2.0 * amp.ln();
        }
    }
    let mass = y[2] * log_sq.exp() + beyond;
    if !mass.is_finite() || mass < 0.0 {
        return Err(Error::Integrator {
            r: rho,
            reason: format!("tail mass quadrature failed ({mass})"),
        });
    }
    Ok(mass)
}

/// Fitted phase constant d of the critical exterior solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseConstantD {
    pub tau: f64,
    /// In [0, 2π).
    pub d_value: f64,
    pub amplitude: f64,
    pub fit_window: (f64, f64),
    /// RMS residual relative to the amplitude.
    pub fit_residual: f64,
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Phase constant of x^{1/2} X(x) ≈ A cos(τ ln x + d) for the d = 3 critical
/// mode with μ = 1/4 + τ², fitted on `window` in x = r√λ.
pub fn phase_constant_d(tau: f64, fit_window: (f64, f64)) -> Result<PhaseConstantD> {
    phase_constant_d_with(tau, fit_window, &ExteriorOptions::default())
}

pub fn phase_constant_d_with(tau: f64, fit_window: (f64, f64), opts: &ExteriorOptions) -> Result<PhaseConstantD> {
    let (lo, hi) = fit_window;
    if !(tau > 0.0) || !(lo > 0.0) || !(hi > lo) {
        return Err(Error::InvalidInput(format!("bad phase fit input: tau {tau}, window [{lo}, {hi}]")));
    }
    let grid = log_grid(lo, hi, 160);
    let sol = evaluate_exterior_on(0.25 + tau * tau, 3, 1.0, &grid, opts)?;
    let y: Vec<f64> = (0..grid.len()).map(|i| grid[i].sqrt() * sol.value(i)).collect();
    let (amplitude, d_value, fit_residual) = fit_log_cosine(tau, &grid, &y, true)?;
    if fit_residual > FIT_RESIDUAL_LIMIT {
        return Err(Error::WindowResidual {
            residual: fit_residual,
            limit: FIT_RESIDUAL_LIMIT,
            lo,
            hi,
        });
    }
    Ok(PhaseConstantD {
        tau,
        d_value,
        amplitude,
        fit_window,
        fit_residual,
    })
}

/// The same constant read off the derivative: x^{3/2} X′(x) ≈ A(−½cos − τ sin)(τ ln x + d).
pub fn phase_constant_d_from_derivative(tau: f64, fit_window: (f64, f64), opts: &ExteriorOptions) -> Result<PhaseConstantD> {
    let (lo, hi) = fit_window;
    if !(tau > 0.0) || !(lo > 0.0) || !(hi > lo) {
        return Err(Error::InvalidInput(format!("bad phase fit input: tau {tau}, window [{lo}, {hi}]")));
    }
    let grid = log_grid(lo, hi, 160);
    let sol = evaluate_exterior_on(0.25 + tau * tau, 3, 1.0, &grid, opts)?;
    let y: Vec<f64> = (0..grid.len()).map(|i| grid[i].powf(1.5) * sol.derivative(i)).collect();
    // −½cos θ − τ sin θ = R cos(θ + δ) with R cos δ = −½, R sin δ = τ.
    let (amp, shifted, res) = fit_log_cosine(tau, &grid, &y, true)?;
    let d_value = wrap_angle(shifted - tau.atan2(-0.5));
    if res > FIT_RESIDUAL_LIMIT {
        return Err(Error::WindowResidual {
            residual: res,
            limit: FIT_RESIDUAL_LIMIT,
            lo,
            hi,
        });
    }
    Ok(PhaseConstantD {
        tau,
        d_value,
        amplitude: amp / (0.25 + tau * tau).sqrt(),
        fit_window,
        fit_residual: res,
    })
}

/// Decaying exponent α = −(d−2)/2 − √((d−2)²/4 − μ) of a non-critical coupling.
pub fn decaying_exponent(mu: f64, d: usize) -> Option<f64> {
    let a = (d as f64 - 2.0) / 2.0;
    let disc = threshold(d) - mu;
    (disc >= 0.0).then(|| -a - disc.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn k32_canonical(x: f64) -> f64 {
        // x^{-1/2} K_{3/2}(x) = √(π/2) e^{−x}(1/x + 1/x²).
        (PI / 2.0).sqrt() * (-x).exp() * (1.0 / x + 1.0 / (x * x))
    }

    #[test]
    fn closed_form_three_halves() {
        let opts = ExteriorOptions::default();
        let sol = evaluate_exterior_on(-2.0, 3, 1.0, &log_grid(1e-3, 20.0, 80), &opts).unwrap();
        for i in 0..sol.r.len() {
            let x = sol.r[i];
            assert_relative_eq!(sol.value(i), k32_canonical(x), max_relative = 1e-8);
            let dk = -(PI / 2.0).sqrt() * (-x).exp() * (1.0 / x + 2.0 / (x * x) + 2.0 / (x * x * x));
            assert_relative_eq!(sol.derivative(i), dk, max_relative = 1e-8);
        }
    }

    #[test]
    fn asymptotic_series_matches_closed_form() {
        let (lnk, ld) = macdonald_asymptotic(2.25, 12.0);
        let k = (PI / 24.0).sqrt() * (-12f64).exp() * (1.0 + 1.0 / 12.0);
        assert_relative_eq!(lnk, k.ln(), epsilon = 1e-14);
        // x K'/K for K_{3/2}: −x − 1/2 − 1/(x+1).
        assert_relative_eq!(ld, -12.0 - 0.5 - 1.0 / 13.0, epsilon = 1e-13);
    }

    #[test]
    fn non_critical_mode_has_no_zeros() {
        let mode = AngularMode::from_mu(0, -3.7, 1, 3);
        let sol = evaluate_exterior(&mode, 3, 1.0, 1e-3, 30.0, &ExteriorOptions::default()).unwrap();
        assert_eq!(sol.sign_changes(), 0);
        assert!(sol.mantissa.iter().all(|u| *u > 0.0));
    }

    #[test]
    fn critical_mode_oscillates_with_log_period() {
        let tau = 1.0;
        let sol = evaluate_exterior_on(1.25, 3, 1.0, &log_grid(1e-6, 1e-1, 4000), &ExteriorOptions::default()).unwrap();
        let zeros: Vec<f64> = (1..sol.r.len())
            .filter(|&i| sol.mantissa[i - 1] * sol.mantissa[i] < 0.0)
            .map(|i| sol.r[i].ln())
            .collect();
        assert!(zeros.len() >= 3);
        for w in zeros.windows(2) {
            assert!((w[1] - w[0] - PI / tau).abs() < 0.02, "{:?}", w);
        }
    }

    #[test]
    fn log_derivative_approaches_alpha() {
        let opts = ExteriorOptions::default();
        let mode = AngularMode::from_mu(0, -2.0, 1, 3);
        let g = log_derivative(&mode, 3, 1e-8, 1.0, &opts).unwrap();
        assert!((g / -2.0 - 1.0).abs() < 2e-4, "{g}");
    }

    #[test]
    fn tail_mass_matches_closed_form() {
        // ∫_a^∞ e^{−2x}(1 + 2/x + 1/x²) dx · (π/2) = (π/2) e^{−2a}(1/2 + 1/a); λ = 1.
        let opts = ExteriorOptions::default();
        for a in [0.05, 0.5, 3.0] {
            let m = tail_mass_mu(-2.0, 3, 1.0, a, &opts).unwrap();
            let exact = PI / 2.0 * (-2.0 * a).exp() * (0.5 + 1.0 / a);
            assert_relative_eq!(m, exact, max_relative = 1e-8);
        }
    }

    #[test]
    fn phase_fit_rejects_wide_window() {
        assert!(matches!(phase_constant_d(1.0, (1e-2, 2.0)), Err(Error::WindowResidual { .. })));
    }

    #[test]
    fn exponent_k() {
        assert_eq!(convergence_exponent(&[-4.0]), 2.0);
        assert_relative_eq!(convergence_exponent(&[-1.2, -6.0]), 0.7);
        assert_relative_eq!(decaying_exponent(-2.0, 3).unwrap(), -2.0);
        assert!(decaying_exponent(1.0, 3).is_none());
    }
}
