//! The two contrast constructions.
//!
//! A multiplicatively periodic g with g(4t) = g(t) gives T = −g″/g = O(t⁻²),
//! i.e. a perturbation t(R) = T(ln R) decaying only like (log R)⁻²; at
//! critical coupling it produces unboundedly many bound states. The
//! hemisphere pair P_ev, P_odd has one potential with a critical mode and
//! one without.

use std::sync::Arc;

use nalgebra::{Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use crate::angular::{angular_spectrum, basis_convergence, build_angular_operator, AngularSpectrum};
use crate::error::{Error, Result};
use crate::oscillation::{count_report, count_zeros, default_r_max, CountOptions, QProfile};
use crate::potential::{Envelope, Parity, PiecewisePoly, RadialPerturbation, SpherePotential};

/// Shape of g on [1, 4]: zero locations, slopes at the zeros, and the
/// half-width (in ln t) of the linear zones around them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GShape {
    pub z1: f64,
    pub z2: f64,
    pub slope1: f64,
    pub slope2: f64,
    pub half_width: f64,
}

impl Default for GShape {
    fn default() -> Self {
        Self {
            z1: 1.5,
            z2: 3.0,
            slope1: -4.0,
            slope2: 1.2,
            half_width: 0.05,
        }
    }
}

/// Quintic on [a, b] (local variable x − a) with prescribed value, slope and
/// curvature at both ends.
pub(crate) fn hermite_quintic(a: f64, b: f64, left: [f64; 3], right: [f64; 3]) -> Result<Vec<f64>> {
    let h = b - a;
    let mut m = Matrix6::zeros();
    let mut rhs = Vector6::zeros();
    for k in 0..3 {
        // k-th derivative at x = 0 and x = h.
        for j in 0..6 {
            if j >= k {
                let fall: f64 = (0..k).map(|i| (j - i) as f64).product();
                m[(k, j)] = if j == k { fall } else { 0.0 };
                m[(3 + k, j)] = fall * h.powi((j - k) as i32);
            }
        }
        rhs[k] = left[k];
        rhs[3 + k] = right[k];
    }
    let c = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidInput(format!("singular junction system on [{a}, {b}]")))?;
    Ok(c.iter().copied().collect())
}

/// g on [1, 4], extended by g(4t) = g(t).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicG {
    pub shape: GShape,
    pub base: PiecewisePoly,
}

impl PeriodicG {
    pub fn build(shape: GShape) -> Result<Self> {
        let GShape {
            z1,
            z2,
            slope1,
            slope2,
            half_width: w,
        } = shape;
        let mut violated = Vec::new();
        let (a1, b1) = (z1 * (-w).exp(), z1 * w.exp());
        let (a2, b2) = (z2 * (-w).exp(), z2 * w.exp());
        if !(w > 0.0) {
            violated.push("half_width > 0".to_string());
        }
        if !(a1 > 1.0 && b1 < 2.0) {
            violated.push(format!("linear zone around z1 must lie in (1, 2): [{a1:.4}, {b1:.4}]"));
        }
        if !(a2 > 2.0 && b2 < 4.0) {
            violated.push(format!("linear zone around z2 must lie in (2, 4): [{a2:.4}, {b2:.4}]"));
        }
        if !(slope1 < 0.0) {
            violated.push("g decreasing on (1, 2): slope1 < 0".into());
        }
        if !(slope2 > 0.0) {
            violated.push("g increasing on (2, 4): slope2 > 0".into());
        }
        if !violated.is_empty() {
            return Err(Error::InvalidInput(format!("infeasible g shape: {}", violated.join("; "))));
        }
        let lin = |s: f64, z: f64, x: f64| [s * (x - z), s, 0.0];
        let breaks = vec![1.0, a1, b1, 2.0, a2, b2, 4.0];
        let coeffs = vec![
            hermite_quintic(1.0, a1, [1.0, 0.0, 0.0], lin(slope1, z1, a1))?,
            vec![slope1 * (a1 - z1), slope1],
            hermite_quintic(b1, 2.0, lin(slope1, z1, b1), [-1.0, 0.0, 0.0])?,
            hermite_quintic(2.0, a2, [-1.0, 0.0, 0.0], lin(slope2, z2, a2))?,
            vec![slope2 * (a2 - z2), slope2],
            hermite_quintic(b2, 4.0, lin(slope2, z2, b2), [1.0, 0.0, 0.0])?,
        ];
        let base = PiecewisePoly::new(breaks, coeffs)?;
        let g = Self { shape, base };
        g.check_monotone()?;
        Ok(g)
    }

    fn check_monotone(&self) -> Result<()> {
        let n = 4000;
        for (lo, hi, sign) in [(1.0, 2.0, -1.0), (2.0, 4.0, 1.0)] {
            for i in 1..n {
                let t = lo + (hi - lo) * i as f64 / n as f64;
                if sign * self.base.derivative(t, 1) <= 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "g is not strictly monotone near t = {t:.4}; adjust the slopes"
                    )));
                }
            }
        }
        Ok(())
    }

    fn reduce(t: f64) -> (f64, i32) {
        let mut u = t;
        let mut k = 0;
        while u >= 4.0 {
            u /= 4.0;
            k += 1;
        }
        (u, k)
    }

    /// k-th derivative of g at t ≥ 1.
    pub fn derivative(&self, t: f64, k: usize) -> f64 {
        let (u, p) = Self::reduce(t);
        self.base.derivative(u, k) / 4f64.powi(p * k as i32)
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.derivative(t, 0)
    }

    /// Interior zeros of g on [1, 4).
    pub fn zeros(&self) -> [f64; 2] {
        [self.shape.z1, self.shape.z2]
    }

    /// Largest mismatch of (g, 4g′, 16g″) between t = 4 and t = 1.
    pub fn junction_defect(&self) -> f64 {
        let b = &self.base;
        let d0 = (b.derivative(4.0, 0) - b.derivative(1.0, 0)).abs();
        let d1 = (4.0 * b.derivative(4.0, 1) - b.derivative(1.0, 1)).abs();
        let d2 = (16.0 * b.derivative(4.0, 2) - b.derivative(1.0, 2)).abs();
        d0.max(d1).max(d2)
    }
}

/// T = −g″/g on r ≥ 1, zero on [0, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleT {
    pub g: PeriodicG,
    /// sup t²|T(t)| over one period.
    pub decay_constant: f64,
    pub sup: f64,
}

/// |g| below this inside a linear zone means g″ must vanish there.
const DIVISION_GUARD: f64 = 1e-3;

impl CounterexampleT {
    pub fn build(g: PeriodicG) -> Result<Self> {
        let n = 20_000;
        let (mut c, mut sup) = (0.0f64, 0.0f64);
        for i in 0..=n {
            let t = 1.0 + 3.0 * i as f64 / n as f64;
            let gv = g.eval(t);
            let g2 = g.derivative(t, 2);
            if gv.abs() < DIVISION_GUARD && g2 != 0.0 {
                return Err(Error::InvalidInput(format!("g'' = {g2:e} where |g| is small (t = {t})")));
            }
            let tv = if g2 == 0.0 { 0.0 } else { -g2 / gv };
            c = c.max(t * t * tv.abs());
            sup = sup.max(tv.abs());
        }
        Ok(Self {
            g,
            decay_constant: c,
            sup,
        })
    }

    pub fn default_construction() -> Result<Self> {
        Self::build(PeriodicG::build(GShape::default())?)
    }

    pub fn eval(&self, r: f64) -> f64 {
        if r < 1.0 {
            return 0.0;
        }
        let g2 = self.g.derivative(r, 2);
        if g2 == 0.0 {
            0.0
        } else {
            -g2 / self.g.eval(r)
        }
    }

    /// The perturbation entering Q with a plus sign.
    pub fn perturbation(&self) -> RadialPerturbation {
        let me = self.clone();
        RadialPerturbation::custom("periodic counterexample", Arc::new(move |r| me.eval(r)), self.sup, Envelope::Minus)
    }
}

/// Zero counts at critical coupling for each E.
pub fn sharpness_experiment(t: &RadialPerturbation, d: usize, e_grid: &[f64], tol: f64) -> Result<Vec<u64>> {
    if e_grid.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidInput("E grid must be strictly decreasing".into()));
    }
    let mu = crate::angular::threshold(d);
    e_grid
        .iter()
        .map(|&e| {
            let q = QProfile::new(mu, d, e, t.clone())?;
            Ok(count_zeros(&q, default_r_max(&q)?, tol)?.zero_count)
        })
        .collect()
}

/// Outcome of the hemisphere comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HemisphereReport {
    pub epsilon: f64,
    pub basis: usize,
    pub lambda_min_even: f64,
    pub lambda_min_odd: f64,
    pub critical_even: usize,
    pub critical_odd: usize,
    /// Change of critical μ values when the basis is doubled.
    pub convergence_even: f64,
    pub convergence_odd: f64,
    /// |λ_min(m = 0 block) − λ_min(full matrix)| for P_odd.
    pub odd_block_defect: f64,
    pub e_grid: Vec<f64>,
    pub counts_even: Vec<u64>,
    pub counts_odd: Vec<u64>,
    pub predicted_even: Vec<f64>,
}

/// Default E grid for the hemisphere contrast: {10^{−4k} : k = 1..8}.
pub fn hemisphere_e_grid() -> Vec<f64> {
    (1..=8).map(|k| format!("1e-{}", 4 * k).parse().expect("literal")).collect()
}

pub fn hemisphere_experiment(epsilon: f64, e_grid: &[f64], basis: usize, tol: f64) -> Result<HemisphereReport> {
    let ev = SpherePotential::hemisphere(epsilon, Parity::Even)?;
    let od = SpherePotential::hemisphere(epsilon, Parity::Odd)?;
    let se: AngularSpectrum = angular_spectrum(&ev, basis, 1e-8)?;
    let so: AngularSpectrum = angular_spectrum(&od, basis, 1e-8)?;
    let t = RadialPerturbation::zero();
    let opts = CountOptions { tol, exhaustive: false };
    let re = count_report(&se, &t, e_grid, opts)?;
    let ro = count_report(&so, &t, e_grid, opts)?;

    let check_basis = basis.min(20);
    let op = build_angular_operator(&od, check_basis)?;
    let block0 = nalgebra::SymmetricEigen::new(op.block(0).expect("m = 0 block").matrix.clone())
        .eigenvalues
        .min();
    let full = nalgebra::SymmetricEigen::new(op.to_dense()).eigenvalues.min();

    Ok(HemisphereReport {
        epsilon,
        basis,
        lambda_min_even: se.lowest(),
        lambda_min_odd: so.lowest(),
        critical_even: se.critical().map(|m| m.multiplicity).sum(),
        critical_odd: so.critical().map(|m| m.multiplicity).sum(),
        convergence_even: basis_convergence(&ev, basis, 1e-8)?,
        convergence_odd: basis_convergence(&od, basis, 1e-8)?,
        odd_block_defect: (block0 - full).abs(),
        e_grid: e_grid.to_vec(),
        counts_even: re.totals,
        counts_odd: ro.totals,
        predicted_even: re.predicted,
    })
}
