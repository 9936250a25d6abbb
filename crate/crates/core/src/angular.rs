//! Spectrum of Δ_{S^{d−1}} + P.
//!
//! Axisymmetric potentials on S² are discretized in real spherical harmonics
//! up to degree `l_max`; the matrix splits into one block per azimuthal order
//! m, and blocks with m > 0 carry multiplicity 2 (cos mφ and sin mφ). Δ is
//! the non-negative Laplace–Beltrami operator, so its part is the exact
//! diagonal l(l+1); the potential part is composite Gauss–Legendre
//! quadrature in θ, split at the profile breakpoints. Constant potentials in any dimension use the
//! closed form l(l+d−2) + c.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::GaussRule;
use crate::potential::{SphereKind, SpherePotential};

/// Relative tolerance for merging eigenvalues into one multiplicity class.
pub const DEGENERACY_TOL: f64 = 1e-8;
/// Pairs closer than this (relative) but not merged are flagged.
pub const NEAR_DEGENERACY_TOL: f64 = 1e-5;
/// |μ − (d−2)²/4| below this is reported as borderline.
pub const BORDERLINE_TOL: f64 = 1e-9;
/// Quadrature acceptance: potential entries at n and 2n nodes must agree to this.
pub const QUADRATURE_TOL: f64 = 1e-10;

/// Default maximal degree of the spherical-harmonic basis.
pub const DEFAULT_BASIS: usize = 32;

/// Normalized associated Legendre functions P̄_l^m(x), l = m..=l_max, with
/// ∫_{−1}^{1} P̄_l^m(x)² dx = 1.
pub fn normalized_legendre(l_max: usize, m: usize, x: f64) -> Vec<f64> {
    if m > l_max {
        return Vec::new();
    }
    let s = (1.0 - x * x).max(0.0).sqrt();
    let mut pmm = std::f64::consts::FRAC_1_SQRT_2;
    for k in 1..=m {
        let kf = k as f64;
        pmm *= ((2.0 * kf + 1.0) / (2.0 * kf)).sqrt() * s;
    }
    let mut out = Vec::with_capacity(l_max - m + 1);
    out.push(pmm);
    if l_max == m {
        return out;
    }
    let mf = m as f64;
    out.push((2.0 * mf + 3.0).sqrt() * x * pmm);
    for l in (m + 2)..=l_max {
        let lf = l as f64;
        let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
        let b = (((lf - 1.0).powi(2) - mf * mf) / (4.0 * (lf - 1.0).powi(2) - 1.0)).sqrt();
        let k = out.len();
        out.push(a * (x * out[k - 1] - b * out[k - 2]));
    }
    out
}

/// One invariant block of the discretized operator.
#[derive(Debug, Clone)]
pub struct AngularBlock {
    /// Azimuthal order (S² only); `None` for closed-form degree blocks.
    pub m: Option<usize>,
    /// Degrees spanned by the block, in order.
    pub degrees: Vec<usize>,
    /// Copies of the block in the full operator.
    pub multiplicity: usize,
    pub matrix: DMatrix<f64>,
}

/// Discretized Δ_{S^{d−1}} + P.
#[derive(Debug, Clone)]
pub struct AngularOperator {
    pub dimension: usize,
    pub l_max: usize,
    pub blocks: Vec<AngularBlock>,
    /// Largest entry change when the quadrature node count is doubled.
    pub quadrature_defect: f64,
}

impl AngularOperator {
    /// Size of the full discretized space, counting multiplicities.
    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|b| b.multiplicity * b.degrees.len()).sum()
    }

    pub fn block(&self, m: usize) -> Option<&AngularBlock> {
        self.blocks.iter().find(|b| b.m == Some(m))
    }

    /// Full matrix in the basis ordered by block, then copy, then degree.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut a = DMatrix::zeros(n, n);
        let mut off = 0;
        for b in &self.blocks {
            let k = b.degrees.len();
            for _ in 0..b.multiplicity {
                a.view_mut((off, off), (k, k)).copy_from(&b.matrix);
                off += k;
            }
        }
        a
    }

    /// Rayleigh quotient of a coefficient vector supported in block `m`.
    pub fn rayleigh(&self, m: usize, coeffs: &[f64]) -> Result<f64> {
        let b = self
            .block(m)
            .ok_or_else(|| Error::InvalidInput(format!("no block with m = {m}")))?;
        if coeffs.len() != b.degrees.len() {
            return Err(Error::InvalidInput("coefficient length does not match block".into()));
        }
        let v = DVector::from_column_slice(coeffs);
        let nn = v.norm_squared();
        if nn == 0.0 {
            return Err(Error::InvalidInput("zero test function".into()));
        }
        Ok(v.dot(&(&b.matrix * &v)) / nn)
    }
}

fn multiplicity_sd(l: usize, d: usize) -> usize {
    fn binom(n: usize, k: usize) -> usize {
        let k = k.min(n - k.min(n));
        let mut acc: u128 = 1;
        for i in 0..k {
            acc = acc * (n - i) as u128 / (i + 1) as u128;
        }
        acc as usize
    }
    let top = binom(l + d - 1, d - 1);
    let low = if l >= 2 { binom(l + d - 3, d - 1) } else { 0 };
    top - low
}

/// Dimension of degree-`l` spherical harmonics on S^{d−1}.
pub fn harmonic_multiplicity(l: usize, d: usize) -> usize {
    multiplicity_sd(l, d)
}

fn potential_block(p: &SpherePotential, m: usize, l_max: usize, nodes: usize) -> DMatrix<f64> {
    let k = l_max - m + 1;
    let rule = GaussRule::new(nodes);
    let mut a = DMatrix::zeros(k, k);
    let breaks = p.breakpoints();
    for w in breaks.windows(2) {
        for (th, wt) in rule.mapped(w[0], w[1]) {
            let pv = p.eval(th);
            if pv == 0.0 {
                continue;
            }
            let leg = normalized_legendre(l_max, m, th.cos());
            let s = wt * th.sin() * pv;
            for i in 0..k {
                let si = s * leg[i];
                for j in i..k {
                    a[(i, j)] += si * leg[j];
                }
            }
        }
    }
    for i in 0..k {
        for j in 0..i {
            a[(i, j)] = a[(j, i)];
        }
    }
    a
}

/// Build the operator matrix up to degree `basis_size`.
pub fn build_angular_operator(p: &SpherePotential, basis_size: usize) -> Result<AngularOperator> {
    if basis_size < 1 {
        return Err(Error::InvalidInput("basis_size must be >= 1".into()));
    }
    let d = p.dimension;
    let l_max = basis_size;
    if let Some(c) = p.constant_value() {
        let blocks = (0..=l_max)
            .map(|l| AngularBlock {
                m: None,
                degrees: vec![l],
                multiplicity: harmonic_multiplicity(l, d),
                matrix: DMatrix::from_element(1, 1, (l * (l + d - 2)) as f64 + c),
            })
            .collect();
        return Ok(AngularOperator {
            dimension: d,
            l_max,
            blocks,
            quadrature_defect: 0.0,
        });
    }
    if d != 3 {
        return Err(Error::Unsupported(format!(
            "non-constant potentials are discretized on S^2 only (dimension {d})"
        )));
    }
    if !matches!(p.kind, SphereKind::Axisymmetric(_) | SphereKind::Hemisphere { .. }) {
        return Err(Error::Unsupported("only axisymmetric profiles are discretized".into()));
    }
    let nodes = 4 * l_max + 16;
    let built: Vec<(AngularBlock, f64)> = (0..=l_max)
        .into_par_iter()
        .map(|m| {
            let pot = potential_block(p, m, l_max, nodes);
            let pot2 = potential_block(p, m, l_max, 2 * nodes);
            let defect = (&pot - &pot2).amax();
            let mut matrix = pot2;
            for (i, l) in (m..=l_max).enumerate() {
                matrix[(i, i)] += (l * (l + 1)) as f64;
            }
            (
                AngularBlock {
                    m: Some(m),
                    degrees: (m..=l_max).collect(),
                    multiplicity: if m == 0 { 1 } else { 2 },
                    matrix,
                },
                defect,
            )
        })
        .collect();
    let quadrature_defect = built.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    let scale = p.sup_norm().max(1.0);
    if quadrature_defect > QUADRATURE_TOL * scale {
        return Err(Error::QuadratureNonConvergence {
            what: "potential matrix entries".into(),
            nodes,
            doubled: 2 * nodes,
            difference: quadrature_defect,
        });
    }
    Ok(AngularOperator {
        dimension: d,
        l_max,
        blocks: built.into_iter().map(|(b, _)| b).collect(),
        quadrature_defect,
    })
}

/// Indicial exponents α ≤ β (real parts) of r² X″ + (d−1) r X′ + μ X = 0.
pub fn indicial_exponents(mu: f64, d: usize) -> (Complex64, Complex64) {
    let a = (d as f64 - 2.0) / 2.0;
    let disc = a * a - mu;
    if disc >= 0.0 {
        let s = disc.sqrt();
        (Complex64::new(-a - s, 0.0), Complex64::new(-a + s, 0.0))
    } else {
        let s = (-disc).sqrt();
        (Complex64::new(-a, -s), Complex64::new(-a, s))
    }
}

/// Critical coupling (d−2)²/4.
pub fn threshold(d: usize) -> f64 {
    let a = (d as f64 - 2.0) / 2.0;
    a * a
}

/// One eigenvalue class −μ of Δ + P.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngularMode {
    pub index: usize,
    pub eigenvalue: f64,
    pub mu: f64,
    pub multiplicity: usize,
    pub alpha: Complex64,
    pub beta: Complex64,
    pub critical: bool,
    pub borderline: bool,
    pub tau: f64,
    /// Block of the representative eigenvector, if the operator was blocked by m.
    pub block_m: Option<usize>,
    /// Representative eigenvector coefficients over the block's degrees.
    pub degrees: Vec<usize>,
    pub coefficients: Vec<f64>,
}

impl AngularMode {
    /// Mode with given μ and multiplicity, classified for dimension `d`.
    pub fn from_mu(index: usize, mu: f64, multiplicity: usize, d: usize) -> Self {
        let thr = threshold(d);
        let (alpha, beta) = indicial_exponents(mu, d);
        let borderline = (mu - thr).abs() < BORDERLINE_TOL;
        let critical = !borderline && mu > thr;
        Self {
            index,
            eigenvalue: -mu,
            mu,
            multiplicity,
            alpha,
            beta,
            critical,
            borderline,
            tau: if critical { (mu - thr).sqrt() } else { 0.0 },
            block_m: None,
            degrees: Vec::new(),
            coefficients: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngularSpectrum {
    pub dimension: usize,
    pub modes: Vec<AngularMode>,
    pub basis_size: usize,
    pub galerkin_residual: f64,
    /// Index pairs of adjacent classes closer than the near-degeneracy tolerance.
    pub near_degenerate: Vec<(usize, usize)>,
}

impl AngularSpectrum {
    pub fn lowest(&self) -> f64 {
        self.modes.first().map(|m| m.eigenvalue).unwrap_or(f64::NAN)
    }

    pub fn critical(&self) -> impl Iterator<Item = &AngularMode> {
        self.modes.iter().filter(|m| m.critical)
    }
}

struct RawPair {
    value: f64,
    multiplicity: usize,
    m: Option<usize>,
    degrees: Vec<usize>,
    vector: Vec<f64>,
}

/// Diagonalize every block and merge eigenvalues into multiplicity classes.
pub fn angular_eigenvalues(op: &AngularOperator, tolerance: f64) -> Result<AngularSpectrum> {
    let solved: Vec<Result<(Vec<RawPair>, f64)>> = op
        .blocks
        .par_iter()
        .map(|b| {
            let eig = SymmetricEigen::try_new(b.matrix.clone(), 1e-15, 10_000)
                .ok_or_else(|| Error::EigenFailure(format!("block {:?} did not converge", b.m)))?;
            let mut worst: f64 = 0.0;
            let mut out = Vec::with_capacity(b.degrees.len());
            for k in 0..eig.eigenvalues.len() {
                let v = eig.eigenvectors.column(k).into_owned();
                let lam = eig.eigenvalues[k];
                let res = (&b.matrix * &v - &v * lam).norm();
                worst = worst.max(res);
                out.push(RawPair {
                    value: lam,
                    multiplicity: b.multiplicity,
                    m: b.m,
                    degrees: b.degrees.clone(),
                    vector: v.iter().copied().collect(),
                });
            }
            Ok((out, worst))
        })
        .collect();
    let mut pairs = Vec::new();
    let mut residual: f64 = 0.0;
    for r in solved {
        let (p, w) = r?;
        residual = residual.max(w);
        pairs.extend(p);
    }
    if residual > tolerance {
        return Err(Error::EigenFailure(format!(
            "Galerkin residual {residual:e} above tolerance {tolerance:e}"
        )));
    }
    pairs.sort_by(|a, b| {
        a.value
            .total_cmp(&b.value)
            .then(a.m.unwrap_or(0).cmp(&b.m.unwrap_or(0)))
    });

    let d = op.dimension;
    let mut modes: Vec<AngularMode> = Vec::new();
    let mut near = Vec::new();
    for p in pairs {
        if let Some(last) = modes.last_mut() {
            let gap = (p.value - last.eigenvalue).abs() / last.eigenvalue.abs().max(1.0);
            if gap <= DEGENERACY_TOL {
                last.multiplicity += p.multiplicity;
                continue;
            }
            if gap <= NEAR_DEGENERACY_TOL {
                near.push((last.index, last.index + 1));
            }
        }
        let mut mode = AngularMode::from_mu(modes.len() + 1, -p.value, p.multiplicity, d);
        mode.block_m = p.m;
        mode.degrees = p.degrees;
        mode.coefficients = p.vector;
        modes.push(mode);
    }
    if !near.is_empty() {
        log::info!("{} near-degenerate eigenvalue pairs left unmerged", near.len());
    }
    Ok(AngularSpectrum {
        dimension: d,
        modes,
        basis_size: op.l_max,
        galerkin_residual: residual,
        near_degenerate: near,
    })
}

/// Build and diagonalize in one call.
pub fn angular_spectrum(p: &SpherePotential, basis_size: usize, tolerance: f64) -> Result<AngularSpectrum> {
    angular_eigenvalues(&build_angular_operator(p, basis_size)?, tolerance)
}

/// Critical modes (μ > (d−2)²/4). With `strict`, a borderline mode is an error.
pub fn critical_modes(spectrum: &AngularSpectrum, d: usize, strict: bool) -> Result<Vec<AngularMode>> {
    let thr = threshold(d);
    if strict {
        if let Some(b) = spectrum.modes.iter().find(|m| (m.mu - thr).abs() < BORDERLINE_TOL) {
            return Err(Error::ThresholdEigenvalue {
                mu: b.mu,
                threshold: thr,
                tolerance: BORDERLINE_TOL,
            });
        }
    }
    Ok(spectrum
        .modes
        .iter()
        .filter(|m| (m.mu - thr).abs() >= BORDERLINE_TOL && m.mu > thr)
        .map(|m| AngularMode::from_mu(m.index, m.mu, m.multiplicity, d))
        .map(|mut c| {
            let src = &spectrum.modes[c.index - 1];
            c.block_m = src.block_m;
            c.degrees = src.degrees.clone();
            c.coefficients = src.coefficients.clone();
            c
        })
        .collect())
}

/// Largest change of the critical μ values between `basis_size` and `2·basis_size`.
pub fn basis_convergence(p: &SpherePotential, basis_size: usize, tolerance: f64) -> Result<f64> {
    let a = angular_spectrum(p, basis_size, tolerance)?;
    let b = angular_spectrum(p, 2 * basis_size, tolerance)?;
    let thr = threshold(p.dimension);
    let ca: Vec<f64> = a.modes.iter().filter(|m| m.mu > thr).map(|m| m.mu).collect();
    let cb: Vec<f64> = b.modes.iter().filter(|m| m.mu > thr).map(|m| m.mu).collect();
    if ca.len() != cb.len() {
        return Ok(f64::INFINITY);
    }
    Ok(ca.iter().zip(&cb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{Parity, PiecewisePoly};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn legendre_is_orthonormal() {
        let g = GaussRule::new(64);
        for m in [0usize, 1, 3, 7] {
            let l_max = 12;
            let k = l_max - m + 1;
            let mut gram = DMatrix::<f64>::zeros(k, k);
            for (x, w) in g.mapped(-1.0, 1.0) {
                let p = normalized_legendre(l_max, m, x);
                for i in 0..k {
                    for j in 0..k {
                        gram[(i, j)] += w * p[i] * p[j];
                    }
                }
            }
            assert!((gram - DMatrix::identity(k, k)).amax() < 1e-12, "m = {m}");
        }
    }

    #[test]
    fn free_laplacian_on_s2() {
        let s = angular_spectrum(&SpherePotential::constant(3, 0.0).unwrap(), 8, 1e-10).unwrap();
        for (l, mode) in s.modes.iter().enumerate() {
            assert_eq!(mode.eigenvalue, (l * (l + 1)) as f64);
            assert_eq!(mode.multiplicity, 2 * l + 1);
        }
    }

    #[test]
    fn constant_shift_gives_two_critical_modes() {
        let s = angular_spectrum(&SpherePotential::constant(3, -5.0).unwrap(), 8, 1e-10).unwrap();
        let c = critical_modes(&s, 3, true).unwrap();
        assert_eq!(c.len(), 2);
        assert_relative_eq!(c[0].mu, 5.0);
        assert_eq!(c[0].multiplicity, 1);
        assert_relative_eq!(c[0].tau, 4.75f64.sqrt());
        assert_relative_eq!(c[1].mu, 3.0);
        assert_eq!(c[1].multiplicity, 3);
        assert_relative_eq!(c[1].tau, 2.75f64.sqrt());
    }

    #[test]
    fn exponents() {
        let m = AngularMode::from_mu(1, 1.25, 1, 3);
        assert!(m.critical);
        assert_relative_eq!(m.tau, 1.0);
        assert_relative_eq!(m.alpha.re, -0.5);
        assert_relative_eq!(m.alpha.im.abs(), 1.0);
        let n = AngularMode::from_mu(1, -2.0, 1, 3);
        assert!(!n.critical);
        assert_relative_eq!(n.alpha.re, -2.0);
        assert_relative_eq!(n.beta.re, 1.0);
        let b = AngularMode::from_mu(1, 0.25, 1, 3);
        assert!(b.borderline && !b.critical);
    }

    #[test]
    fn borderline_rejected_in_strict_mode() {
        let s = angular_spectrum(&SpherePotential::constant(3, -0.25).unwrap(), 4, 1e-10).unwrap();
        assert!(matches!(critical_modes(&s, 3, true), Err(Error::ThresholdEigenvalue { .. })));
        assert!(critical_modes(&s, 3, false).unwrap().is_empty());
    }

    #[test]
    fn general_dimension_closed_form() {
        let s = angular_spectrum(&SpherePotential::constant(5, 0.0).unwrap(), 4, 1e-10).unwrap();
        let expect = [(0.0, 1), (4.0, 5), (10.0, 14), (18.0, 30), (28.0, 55)];
        for (mode, (ev, mult)) in s.modes.iter().zip(expect) {
            assert_eq!(mode.eigenvalue, ev);
            assert_eq!(mode.multiplicity, mult);
        }
        assert_eq!(harmonic_multiplicity(3, 3), 7);
    }

    #[test]
    fn axisymmetric_constant_profile_matches_closed_form() {
        let p = SpherePotential::axisymmetric(PiecewisePoly::constant(0.0, PI, -2.0)).unwrap();
        let s = angular_spectrum(&p, 10, 1e-9).unwrap();
        for l in 0..=10usize {
            let ev = (l * (l + 1)) as f64 - 2.0;
            let mode = s.modes.iter().find(|m| (m.eigenvalue - ev).abs() < 1e-9).unwrap();
            assert_eq!(mode.multiplicity, 2 * l + 1);
        }
    }

    #[test]
    fn cos_theta_potential_is_symmetric_and_couples_neighbours() {
        // P(θ) = θ − π/2 is odd under reflection in the equator.
        let prof = PiecewisePoly::new(vec![0.0, PI], vec![vec![-PI / 2.0, 1.0]]).unwrap();
        let op = build_angular_operator(&SpherePotential::axisymmetric(prof).unwrap(), 6).unwrap();
        let b = op.block(0).unwrap();
        assert!((&b.matrix - b.matrix.transpose()).amax() < 1e-14);
        // Odd potential: no coupling between degrees of equal parity.
        assert!(b.matrix[(0, 2)].abs() < 1e-12);
        assert!(b.matrix[(0, 1)].abs() > 1e-3);
    }

    #[test]
    fn hemisphere_constant_rayleigh_quotient() {
        let eps = 0.01;
        let op = build_angular_operator(&SpherePotential::hemisphere(eps, Parity::Even).unwrap(), 16).unwrap();
        let mut c = vec![0.0; 17];
        c[0] = 1.0;
        let q = op.rayleigh(0, &c).unwrap();
        // The quotient on the constant is the mean of P.
        assert!((q + 1.0 / 3.0).abs() < 2.0 * eps, "{q}");
        assert!(q > -1.0 / 3.0);
    }

    #[test]
    fn dense_assembly_has_same_minimum() {
        let op = build_angular_operator(&SpherePotential::hemisphere(0.01, Parity::Odd).unwrap(), 10).unwrap();
        let s = angular_eigenvalues(&op, 1e-9).unwrap();
        let dense = SymmetricEigen::new(op.to_dense());
        let min = dense.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        assert_relative_eq!(min, s.lowest(), epsilon = 1e-10);
        assert_eq!(op.dim(), 121);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn constant_shift_covariance(c in -20.0..20.0f64, eps in 0.002..0.01f64) {
            let base = SpherePotential::hemisphere(eps, Parity::Even).unwrap();
            let prof = base.profile().unwrap().clone();
            let shifted = PiecewisePoly {
                breaks: prof.breaks.clone(),
                coeffs: prof.coeffs.iter().map(|p| { let mut q = p.clone(); q[0] += c; q }).collect(),
            };
            let a = angular_spectrum(&base, 8, 1e-9).unwrap();
            let b = angular_spectrum(&SpherePotential::axisymmetric(shifted).unwrap(), 8, 1e-9).unwrap();
            let expand = |s: &AngularSpectrum| -> Vec<f64> {
                s.modes.iter().flat_map(|m| std::iter::repeat_n(m.eigenvalue, m.multiplicity)).collect()
            };
            let (ea, eb) = (expand(&a), expand(&b));
            prop_assert_eq!(ea.len(), eb.len());
            for (x, y) in ea.iter().zip(&eb) {
                // Merged classes carry the value of their first member.
                let tol = 2.0 * DEGENERACY_TOL * x.abs().max(y.abs()).max(1.0) + 1e-10 * (1.0 + c.abs());
                prop_assert!((x + c - y).abs() < tol, "{} + {} vs {}", x, c, y);
            }
        }

        #[test]
        fn rayleigh_bound_random_band_limited(seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let op = build_angular_operator(&SpherePotential::hemisphere(0.01, Parity::Even).unwrap(), 8).unwrap();
            let s = angular_eigenvalues(&op, 1e-9).unwrap();
            let m = rng.random_range(0..=8usize);
            let k = 9 - m;
            let c: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
            prop_assume!(c.iter().any(|v| v.abs() > 1e-3));
            let q = op.rayleigh(m, &c).unwrap();
            prop_assert!(s.lowest() <= q + 1e-12);
        }
    }
}
