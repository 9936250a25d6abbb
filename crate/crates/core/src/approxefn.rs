//! Approximate eigenfunctions Φ built from a zero mode inside a ball of radius
//! ρ = λ^{−1/2+δ/2} and decaying exterior solutions outside, joined C¹ with a
//! smoothing bump h(r/ρ).
//!
//! In sector i the exterior part is φ_i X_i^λ(r) + χ_i h(r/ρ) with
//! φ_i = Y_i(ρ)/X_i^λ(ρ) and χ_i = ρ(Y_i′(ρ) − φ_i X_i^λ′(ρ)). The critical
//! sector uses the regular λ = 0 solution of the model, normalized so that
//! r^{1/2}Y₁ → cos(τ ln r + c). Non-critical sectors use Y_i = ψ_i r^{α_i} on
//! [r₀, ρ]; the model has no regular zero-energy solution of that form, so
//! their r < r₀ completion is not represented.

use serde::{Deserialize, Serialize};

use crate::counterexamples::hermite_quintic;
use crate::error::{Error, Result};
use crate::exterior::{self, ExteriorOptions};
use crate::ladder::{self, InteriorModel, LadderOptions, PhaseData};
use crate::numerics::{bisect, GaussRule};
use crate::potential::PiecewisePoly;

/// Default δ in ρ = λ^{−1/2+δ/2}.
pub const DEFAULT_DELTA: f64 = 0.2;
/// Sectors whose |X(ρ)| falls below this are dropped.
const UNDERFLOW_FLOOR: f64 = 1e-280;
const PANEL: f64 = 0.25;
const NODES: usize = 10;

/// h on [1, 2]: t − 1 on [1, 1.5], then a C² quintic down to 0 at 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingBump {
    pub poly: PiecewisePoly,
    /// Largest jump in (h, h′, h″) at t = 1.5.
    pub join_defect: [f64; 3],
    /// (h, h′, h″) at t = 2.
    pub end_values: [f64; 3],
}

impl SmoothingBump {
    pub fn eval(&self, t: f64) -> f64 {
        self.derivative(t, 0)
    }

    /// k-th derivative; zero outside [1, 2].
    pub fn derivative(&self, t: f64, k: usize) -> f64 {
        if !(1.0..=2.0).contains(&t) {
            0.0
        } else {
            self.poly.derivative(t, k)
        }
    }
}

/// The default bump (quintic join on [1.5, 2]).
pub fn make_smoothing() -> SmoothingBump {
    let q = hermite_quintic(1.5, 2.0, [0.5, 1.0, 0.0], [0.0, 0.0, 0.0]).expect("fixed junction system is regular");
    let poly = PiecewisePoly::new(vec![1.0, 1.5, 2.0], vec![vec![0.0, 1.0], q]).expect("valid pieces");
    let join_defect = [poly.continuity_defect(0), poly.continuity_defect(1), poly.continuity_defect(2)];
    let end_values = [poly.derivative(2.0, 0), poly.derivative(2.0, 1), poly.derivative(2.0, 2)];
    SmoothingBump {
        poly,
        join_defect,
        end_values,
    }
}

/// ρ = λ^{−1/2+δ/2}.
pub fn matching_radius(lambda: f64, delta: f64) -> f64 {
    lambda.powf(-0.5 + 0.5 * delta)
}

/// Largest admissible δ: min(1/4, −α₂/(1 − 2α₂)) over the model's non-critical sectors.
pub fn delta_limit(model: &InteriorModel) -> f64 {
    model
        .sectors
        .iter()
        .filter(|s| !s.mode.critical)
        .map(|s| {
            let a = s.mode.alpha.re;
            -a / (1.0 - 2.0 * a)
        })
        .fold(0.25, f64::min)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiConfig {
    pub delta: f64,
    /// Number of retained sectors, critical sector first.
    pub mode_cut: usize,
    /// ψ_i per retained sector; missing entries are 0, ψ₁ defaults to 1.
    pub psi: Vec<f64>,
}

impl Default for PhiConfig {
    fn default() -> Self {
        Self {
            delta: DEFAULT_DELTA,
            mode_cut: 1,
            psi: vec![1.0],
        }
    }
}

/// Approximate eigenvalue from the principal-term matching.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproxEigen {
    pub n: usize,
    pub lambda: f64,
    pub rho: f64,
    pub xi: f64,
}

fn check_delta(model: &InteriorModel, delta: f64) -> Result<()> {
    let lim = delta_limit(model);
    if !(delta > 0.0 && delta < lim) {
        return Err(Error::InvalidInput(format!("delta = {delta} must lie in (0, {lim:.6})")));
    }
    Ok(())
}

/// (Ŷ₁, ρŶ₁′) at ρ for the λ = 0 critical solution, amplitude-normalized.
fn critical_zero_state(model: &InteriorModel, pd: &PhaseData, rho: f64, opts: &LadderOptions) -> Result<[f64; 2]> {
    let [u, v] = ladder::interior_state(model, pd.sector, 0.0, rho, opts.ode_tol)?;
    let a = pd.c.amplitude;
    Ok([u / a, v / a])
}

/// Root of (X₁^λ)′(ρ)Y₁(ρ) − Y₁′(ρ)X₁^λ(ρ) with Y₁ frozen at λ = 0 and ρ = ρ(λ),
/// searched in the ξ_n bracket.
pub fn solve_approx_lambda(model: &InteriorModel, pd: &PhaseData, n: usize, delta: f64, opts: &LadderOptions) -> Result<ApproxEigen> {
    check_delta(model, delta)?;
    let xi = pd.xi(n);
    let w = pd.bracket_width();
    let (lo, hi) = (xi * (1.0 - w), xi * (1.0 + w));
    if matching_radius(hi, delta) <= model.r0 {
        return Err(Error::InvalidInput(format!(
            "matching radius {:.4} for n = {n} does not exceed r0 = {}",
            matching_radius(hi, delta),
            model.r0
        )));
    }
    let mu1 = pd.mu1;
    let g = |ln_lam: f64| -> Result<f64> {
        let lam = ln_lam.exp();
        let rho = matching_radius(lam, delta);
        let [uy, vy] = critical_zero_state(model, pd, rho, opts)?;
        let ([ux, vx], _) = exterior::exterior_state(mu1, 3, lam, rho, &opts.exterior)?;
        Ok((vx * uy - vy * ux) / (uy.hypot(vy) * ux.hypot(vx)))
    };
    let (a, b) = (lo.ln(), hi.ln());
    let mut changes = 0;
    let mut prev = g(a)?;
    for k in 1..=8 {
        let v = g(a + (b - a) * k as f64 / 8.0)?;
        if v * prev < 0.0 {
            changes += 1;
        }
        prev = v;
    }
    match changes {
        0 => return Err(Error::EmptyBracket { lo, hi }),
        1 => {}
        _ => return Err(Error::MultipleRoots { lo, hi }),
    }
    let root = bisect(g, a, b, 1e-15)?;
    let lambda = root.exp();
    Ok(ApproxEigen {
        n,
        lambda,
        rho: matching_radius(lambda, delta),
        xi,
    })
}

/// Per-sector data of Φ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiSector {
    pub sector: usize,
    pub mu: f64,
    pub critical: bool,
    pub psi: f64,
    pub phi: f64,
    pub chi: f64,
    pub y_rho: f64,
    pub dy_rho: f64,
    /// ‖interior part‖² (over [0, ρ] for the critical sector, [r₀, ρ] otherwise).
    pub interior_mass: f64,
    /// ‖φX + χh‖² over r ≥ ρ.
    pub exterior_mass: f64,
    /// ‖χ (L + λ) h(r/ρ)‖² over [ρ, 2ρ].
    pub bump_defect: f64,
    /// Relative C¹ mismatches at ρ from independent re-evaluation: (value, derivative).
    pub interface_mismatch: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiFunction {
    pub lambda: f64,
    pub rho: f64,
    pub delta: f64,
    pub sectors: Vec<PhiSector>,
    /// Sectors dropped because X(ρ) underflowed.
    pub dropped: Vec<usize>,
    pub bump: SmoothingBump,
}

impl PhiFunction {
    pub fn norm(&self) -> f64 {
        self.sectors.iter().map(|s| s.interior_mass + s.exterior_mass).sum::<f64>().sqrt()
    }

    /// ‖Φ − φ₁X₁^λJ₁‖ outside the ball.
    pub fn nonprincipal_norm(&self) -> f64 {
        self.sectors
            .iter()
            .map(|s| if s.critical { s.chi * s.chi * self.bump_l2_sq() } else { s.exterior_mass })
            .sum::<f64>()
            .sqrt()
    }

    /// ∫_ρ^{2ρ} h(r/ρ)² r² dr.
    fn bump_l2_sq(&self) -> f64 {
        let g = GaussRule::new(16);
        let rho = self.rho;
        g.integrate(rho, 1.5 * rho, |r| (self.bump.eval(r / rho) * r).powi(2))
            + g.integrate(1.5 * rho, 2.0 * rho, |r| (self.bump.eval(r / rho) * r).powi(2))
    }

    pub fn critical(&self) -> Option<&PhiSector> {
        self.sectors.iter().find(|s| s.critical)
    }
}

fn log_panels(a: f64, b: f64, breaks: &[f64]) -> Vec<(f64, f64)> {
    let mut cuts: Vec<f64> = vec![a.ln()];
    cuts.extend(breaks.iter().filter(|x| **x > a && **x < b).map(|x| x.ln()));
    cuts.push(b.ln());
    let mut out = Vec::new();
    for w in cuts.windows(2) {
        let n = ((w[1] - w[0]) / PANEL).ceil().max(1.0) as usize;
        for k in 0..n {
            out.push((w[0] + (w[1] - w[0]) * k as f64 / n as f64, w[0] + (w[1] - w[0]) * (k + 1) as f64 / n as f64));
        }
    }
    out
}

/// Gauss nodes and weights in t = ln r for ∫ F(r) dr = ∫ F(e^t) e^t dt.
fn log_nodes(panels: &[(f64, f64)]) -> (Vec<f64>, Vec<f64>) {
    let g = GaussRule::new(NODES);
    let mut r = Vec::new();
    let mut w = Vec::new();
    for &(a, b) in panels {
        let mut nodes: Vec<(f64, f64)> = g.mapped(a, b).collect();
        nodes.sort_by(|x, y| x.0.total_cmp(&y.0));
        for (t, wt) in nodes {
            r.push(t.exp());
            w.push(wt * t.exp());
        }
    }
    (r, w)
}

/// Mode defect F″ + 2F′/r + (μ/r² − λ)F of F(r) = h(r/ρ).
fn bump_defect(bump: &SmoothingBump, mu: f64, lambda: f64, rho: f64, r: f64) -> f64 {
    let t = r / rho;
    let (h0, h1, h2) = (bump.derivative(t, 0), bump.derivative(t, 1), bump.derivative(t, 2));
    h2 / (rho * rho) + 2.0 * h1 / (r * rho) + (mu / (r * r) - lambda) * h0
}

/// Assembles Φ at `lambda` for the first `mode_cut` sectors (critical first).
pub fn build_phi(model: &InteriorModel, pd: &PhaseData, lambda: f64, cfg: &PhiConfig, opts: &LadderOptions) -> Result<PhiFunction> {
    check_delta(model, cfg.delta)?;
    if cfg.mode_cut == 0 {
        return Err(Error::InvalidInput("mode_cut must be at least 1".into()));
    }
    let rho = matching_radius(lambda, cfg.delta);
    if rho <= model.r0 {
        return Err(Error::InvalidInput(format!("matching radius {rho} does not exceed r0 = {}", model.r0)));
    }
    let bump = make_smoothing();
    let mut order: Vec<usize> = vec![pd.sector];
    order.extend((0..model.sectors.len()).filter(|&i| i != pd.sector));
    order.truncate(cfg.mode_cut);

    let r_far = exterior::DEFAULT_SEED_X / lambda.sqrt();
    let ext_panels = log_panels(rho, r_far.max(3.0 * rho), &[1.5 * rho, 2.0 * rho]);
    let (re, we) = log_nodes(&ext_panels);
    let g16 = GaussRule::new(16);

    let mut sectors = Vec::new();
    let mut dropped = Vec::new();
    for (slot, &i) in order.iter().enumerate() {
        let psi = cfg.psi.get(slot).copied().unwrap_or(if slot == 0 { 1.0 } else { 0.0 });
        let mu = model.sectors[i].mode.mu;
        let critical = i == pd.sector;
        let (y_rho, dy_rho, interior_mass) = if critical {
            let [u, v] = critical_zero_state(model, pd, rho, opts)?;
            let lo = model.r0 * 1e-5;
            let (ri, wi) = log_nodes(&log_panels(lo, rho, &[model.r0]));
            let sol = ladder::interior_solution(model, i, 0.0, &ri, opts.ode_tol)?;
            let a = pd.c.amplitude;
            let m: f64 = ri.iter().zip(&wi).zip(&sol.y).map(|((r, w), y)| w * (psi * y / a * r).powi(2)).sum();
            (psi * u, psi * v / rho, m)
        } else {
            let alpha = model.sectors[i].mode.alpha.re;
            let p = 2.0 * alpha + 3.0;
            let m = psi * psi * (rho.powf(p) - model.r0.powf(p)) / p;
            (psi * rho.powf(alpha), psi * alpha * rho.powf(alpha - 1.0), m)
        };
        let ext = exterior::evaluate_exterior_on(mu, 3, lambda, &re, &opts.exterior)?;
        let ([ux, vx], ls) = exterior::exterior_state(mu, 3, lambda, rho, &opts.exterior)?;
        let x_rho = ux * ls.exp();
        let dx_rho = vx * ls.exp() / rho;
        if x_rho.abs() < UNDERFLOW_FLOOR || !x_rho.is_finite() {
            log::warn!("sector {i}: X(rho) = {x_rho:e} below the floor; dropped");
            dropped.push(i);
            continue;
        }
        let phi = y_rho / x_rho;
        let chi = rho * (dy_rho - phi * dx_rho);
        let exterior_mass: f64 = (0..re.len())
            .map(|k| {
                let r = re[k];
                let val = phi * ext.value(k) + chi * bump.eval(r / rho);
                we[k] * (val * r).powi(2)
            })
            .sum();
        let defect = |r: f64| (chi * bump_defect(&bump, mu, lambda, rho, r) * r).powi(2);
        let bump_sq = g16.integrate(rho, 1.5 * rho, defect) + g16.integrate(1.5 * rho, 2.0 * rho, defect);

        // Interface check: Y from the gridded interior solver, X from the gridded exterior solver.
        let x_at = exterior::evaluate_exterior_on(mu, 3, lambda, &[rho, 1.5 * rho], &opts.exterior)?;
        let (y_chk, dy_chk) = if critical {
            let sol = ladder::interior_solution(model, i, 0.0, &[rho], opts.ode_tol)?;
            (psi * sol.y[0] / pd.c.amplitude, psi * sol.dy[0] / pd.c.amplitude)
        } else {
            (y_rho, dy_rho)
        };
        let scale_v = y_chk.abs().max(rho * dy_chk.abs()).max(1e-300);
        let outer_val = phi * x_at.value(0);
        let outer_der = phi * x_at.derivative(0) + chi * bump.derivative(1.0, 1) / rho;
        let mismatch = ((outer_val - y_chk).abs() / scale_v, rho * (outer_der - dy_chk).abs() / scale_v);

        sectors.push(PhiSector {
            sector: i,
            mu,
            critical,
            psi,
            phi,
            chi,
            y_rho,
            dy_rho,
            interior_mass,
            exterior_mass,
            bump_defect: bump_sq,
            interface_mismatch: mismatch,
        });
    }
    if sectors.iter().all(|s| !s.critical) {
        return Err(Error::InvalidInput("critical sector dropped; lambda too small for double precision".into()));
    }
    Ok(PhiFunction {
        lambda,
        rho,
        delta: cfg.delta,
        sectors,
        dropped,
        bump,
    })
}

/// ‖(L + λ)Φ‖ and its ratio to ‖Φ‖.
///
/// Inside the ball (L + λ)Φ = λΨ, so that part is λ‖Ψ‖; outside only the
/// bumps contribute.
pub fn residual_norm(phi: &PhiFunction) -> (f64, f64) {
    let l = phi.lambda;
    let sq: f64 = phi.sectors.iter().map(|s| l * l * s.interior_mass + s.bump_defect).sum();
    let num = sq.sqrt();
    (num, num / phi.norm())
}

/// [λ − ratio, λ + ratio], which meets the spectrum of the model.
pub fn localize_spectrum(phi: &PhiFunction) -> (f64, f64) {
    let (_, ratio) = residual_norm(phi);
    (phi.lambda - ratio, phi.lambda + ratio)
}

/// ‖Φ/‖Φ‖ − v‖ for the exact normalized eigenfunction v of the critical sector at `lambda_exact`
/// (sign of v chosen to minimize the distance).
pub fn eigenfunction_distance(model: &InteriorModel, pd: &PhaseData, phi: &PhiFunction, lambda_exact: f64, opts: &LadderOptions) -> Result<f64> {
    let crit = phi
        .critical()
        .ok_or_else(|| Error::InvalidInput("Φ has no critical sector".into()))?;
    let prof = ladder::eigenfunction_profile(model, pd.sector, lambda_exact, opts)?;
    let rho = phi.rho;
    let inner: Vec<f64> = prof.r.iter().copied().filter(|&r| r <= rho).collect();
    let outer: Vec<f64> = prof.r.iter().copied().filter(|&r| r > rho).collect();
    let mut vals = Vec::with_capacity(prof.r.len());
    if !inner.is_empty() {
        let sol = ladder::interior_solution(model, pd.sector, 0.0, &inner, opts.ode_tol)?;
        vals.extend(sol.y.iter().map(|y| crit.psi * y / pd.c.amplitude));
    }
    if !outer.is_empty() {
        let ext = exterior::evaluate_exterior_on(crit.mu, 3, phi.lambda, &outer, &opts.exterior)?;
        vals.extend((0..outer.len()).map(|k| crit.phi * ext.value(k) + crit.chi * phi.bump.eval(outer[k] / rho)));
    }
    // Simpson-free trapezoid in t on r³ f g; both densities are smooth on the grid.
    let dot = |a: &[f64], b: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 1..prof.r.len() {
            let dt = (prof.r[i] / prof.r[i - 1]).ln();
            let f0 = prof.r[i - 1].powi(3) * a[i - 1] * b[i - 1];
            let f1 = prof.r[i].powi(3) * a[i] * b[i];
            s += 0.5 * dt * (f0 + f1);
        }
        s
    };
    let vv = dot(&prof.y, &prof.y);
    let pv = dot(&vals, &prof.y);
    let overlap = pv.abs() / (vv.sqrt() * phi.norm());
    Ok((2.0 - 2.0 * overlap).max(0.0).sqrt())
}

/// One row of a residual sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub n: usize,
    pub lambda: f64,
    pub rho: f64,
    pub xi: f64,
    pub residual: f64,
    pub ratio: f64,
    pub phi1: f64,
    pub norm: f64,
    pub chi1: f64,
}

/// solve_approx_lambda + build_phi + residual_norm over a range of n.
pub fn residual_sweep(model: &InteriorModel, pd: &PhaseData, ns: &[usize], cfg: &PhiConfig, opts: &LadderOptions) -> Result<Vec<ResidualRow>> {
    use rayon::prelude::*;
    ns.par_iter()
        .map(|&n| {
            let ae = solve_approx_lambda(model, pd, n, cfg.delta, opts)?;
            let phi = build_phi(model, pd, ae.lambda, cfg, opts)?;
            let (residual, ratio) = residual_norm(&phi);
            let c = phi.critical().expect("critical sector present");
            Ok(ResidualRow {
                n,
                lambda: ae.lambda,
                rho: ae.rho,
                xi: ae.xi,
                residual,
                ratio,
                phi1: c.phi,
                norm: phi.norm(),
                chi1: c.chi,
            })
        })
        .collect()
}

/// Default options for this module; the exterior is evaluated at tighter tolerance
/// because φ₁ divides by the exponentially small X₁(ρ).
pub fn default_options() -> LadderOptions {
    LadderOptions {
        exterior: ExteriorOptions {
            tol: 1e-12,
            ..ExteriorOptions::default()
        },
        ..LadderOptions::default()
    }
}
