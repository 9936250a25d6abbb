//! Angular profiles P(ω) and radial perturbations t(r).

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Piecewise polynomial on `breaks[0] < ... < breaks[n]`; piece `k` is
/// `Σ_j coeffs[k][j] (x - breaks[k])^j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewisePoly {
    pub breaks: Vec<f64>,
    pub coeffs: Vec<Vec<f64>>,
}

impl PiecewisePoly {
    pub fn new(breaks: Vec<f64>, coeffs: Vec<Vec<f64>>) -> Result<Self> {
        let p = Self { breaks, coeffs };
        p.validate()?;
        Ok(p)
    }

    pub fn constant(a: f64, b: f64, c: f64) -> Self {
        Self {
            breaks: vec![a, b],
            coeffs: vec![vec![c]],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.breaks.len() < 2 || self.coeffs.len() + 1 != self.breaks.len() {
            return Err(Error::InvalidInput(format!(
                "piecewise polynomial needs n+1 breaks for n pieces (got {} breaks, {} pieces)",
                self.breaks.len(),
                self.coeffs.len()
            )));
        }
        if self.breaks.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("breaks must be strictly increasing".into()));
        }
        if self.breaks.iter().chain(self.coeffs.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite break or coefficient".into()));
        }
        if self.coeffs.iter().any(|c| c.is_empty()) {
            return Err(Error::InvalidInput("empty polynomial piece".into()));
        }
        Ok(())
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.breaks[0], *self.breaks.last().unwrap())
    }

    fn piece(&self, x: f64) -> usize {
        let n = self.coeffs.len();
        match self.breaks[1..n].iter().position(|&b| x < b) {
            Some(k) => k,
            None => n - 1,
        }
    }

    /// `k`-th derivative at `x`; the end pieces extend past the domain.
    pub fn derivative(&self, x: f64, k: usize) -> f64 {
        let i = self.piece(x);
        let c = &self.coeffs[i];
        let u = x - self.breaks[i];
        let mut acc = 0.0;
        for j in (k..c.len()).rev() {
            let mut fall = 1.0;
            for m in 0..k {
                fall *= (j - m) as f64;
            }
            acc = acc * u + c[j] * fall;
        }
        acc
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.derivative(x, 0)
    }

    /// Largest |value| over 256 samples per piece plus the breaks.
    pub fn sampled_sup(&self) -> f64 {
        let mut m: f64 = 0.0;
        for (k, w) in self.breaks.windows(2).enumerate() {
            for j in 0..=256 {
                let x = w[0] + (w[1] - w[0]) * j as f64 / 256.0;
                let u = x - w[0];
                let v = self.coeffs[k].iter().rev().fold(0.0, |a, c| a * u + c);
                m = m.max(v.abs());
            }
        }
        m
    }

    /// Largest jump in the `k`-th derivative across interior breaks.
    pub fn continuity_defect(&self, k: usize) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 1..self.coeffs.len() {
            let b = self.breaks[i];
            let left = {
                let c = &self.coeffs[i - 1];
                let u = b - self.breaks[i - 1];
                let mut acc = 0.0;
                for j in (k..c.len()).rev() {
                    let fall: f64 = (0..k).map(|m| (j - m) as f64).product();
                    acc = acc * u + c[j] * fall;
                }
                acc
            };
            let right = self.derivative(b, k);
            worst = worst.max((left - right).abs());
        }
        worst
    }
}

/// Quintic C² step from 0 at `u = 0` to 1 at `u = 1`.
pub fn smoothstep5(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * u * (10.0 + u * (-15.0 + 6.0 * u))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SphereKind {
    Constant(f64),
    /// Profile in the polar angle θ ∈ [0, π].
    Axisymmetric(PiecewisePoly),
    Hemisphere { epsilon: f64, parity: Parity },
}

/// Potential P on S^{d−1}.
#[derive(Debug, Clone, PartialEq)]
pub struct SpherePotential {
    pub dimension: usize,
    pub kind: SphereKind,
    profile: Option<PiecewisePoly>,
}

impl SpherePotential {
    pub fn constant(dimension: usize, c: f64) -> Result<Self> {
        Self::build(dimension, SphereKind::Constant(c))
    }

    pub fn axisymmetric(profile: PiecewisePoly) -> Result<Self> {
        Self::build(3, SphereKind::Axisymmetric(profile))
    }

    pub fn hemisphere(epsilon: f64, parity: Parity) -> Result<Self> {
        Self::build(3, SphereKind::Hemisphere { epsilon, parity })
    }

    pub fn build(dimension: usize, kind: SphereKind) -> Result<Self> {
        if dimension < 3 {
            return Err(Error::InvalidInput(format!("dimension must be >= 3, got {dimension}")));
        }
        let profile = match &kind {
            SphereKind::Constant(c) => {
                if !c.is_finite() {
                    return Err(Error::InvalidInput("constant potential is not finite".into()));
                }
                None
            }
            SphereKind::Axisymmetric(p) => {
                if dimension != 3 {
                    return Err(Error::Unsupported("axisymmetric profiles are supported on S^2 only".into()));
                }
                p.validate()?;
                let (a, b) = p.domain();
                if a.abs() > 1e-12 || (b - PI).abs() > 1e-12 {
                    return Err(Error::InvalidInput(format!("profile must cover [0, pi], got [{a}, {b}]")));
                }
                Some(p.clone())
            }
            SphereKind::Hemisphere { epsilon, parity } => {
                if dimension != 3 {
                    return Err(Error::Unsupported("hemisphere potentials are supported on S^2 only".into()));
                }
                if !(*epsilon > 0.0 && *epsilon <= 0.01) {
                    return Err(Error::InvalidInput(format!("hemisphere epsilon must lie in (0, 0.01], got {epsilon}")));
                }
                Some(hemisphere_profile(*epsilon, *parity))
            }
        };
        Ok(Self {
            dimension,
            kind,
            profile,
        })
    }

    /// Value at polar angle θ.
    pub fn eval(&self, theta: f64) -> f64 {
        match (&self.kind, &self.profile) {
            (SphereKind::Constant(c), _) => *c,
            (_, Some(p)) => p.eval(theta.clamp(0.0, PI)),
            _ => unreachable!("non-constant potentials carry a profile"),
        }
    }

    pub fn profile(&self) -> Option<&PiecewisePoly> {
        self.profile.as_ref()
    }

    pub fn constant_value(&self) -> Option<f64> {
        match self.kind {
            SphereKind::Constant(c) => Some(c),
            _ => None,
        }
    }

    /// Polar-angle breakpoints (including 0 and π) where P may lose smoothness.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.profile {
            Some(p) => p.breaks.clone(),
            None => vec![0.0, PI],
        }
    }

    pub fn sup_norm(&self) -> f64 {
        match (&self.kind, &self.profile) {
            (SphereKind::Constant(c), _) => c.abs(),
            (_, Some(p)) => p.sampled_sup(),
            _ => unreachable!(),
        }
    }

    /// Whether the potential is even (`Some(Even)`) or odd under θ ↦ π − θ.
    pub fn parity(&self) -> Option<Parity> {
        match &self.kind {
            SphereKind::Constant(_) => Some(Parity::Even),
            SphereKind::Hemisphere { parity, .. } => Some(*parity),
            SphereKind::Axisymmetric(_) => None,
        }
    }
}

/// Upper-hemisphere profile −1/3 near the pole, 0 near the equator, with a
/// quintic join on [π/2 − 2ε, π/2 − ε]; continued evenly or oddly.
fn hemisphere_profile(eps: f64, parity: Parity) -> PiecewisePoly {
    let third = 1.0 / 3.0;
    let a = FRAC_PI_2 - 2.0 * eps;
    let b = FRAC_PI_2 - eps;
    let e3 = eps.powi(3);
    let e4 = e3 * eps;
    let e5 = e4 * eps;
    // S(x/ε) in the local variable x.
    let step = [0.0, 0.0, 0.0, 10.0 / e3, -15.0 / e4, 6.0 / e5];
    let scaled = |s: f64, offset: f64| -> Vec<f64> {
        let mut c: Vec<f64> = step.iter().map(|v| s * v).collect();
        c[0] += offset;
        c
    };
    let sign = match parity {
        Parity::Even => -1.0,
        Parity::Odd => 1.0,
    };
    PiecewisePoly {
        breaks: vec![0.0, a, b, PI - b, PI - a, PI],
        coeffs: vec![
            vec![-third],
            scaled(third, -third),
            vec![0.0],
            scaled(sign * third, 0.0),
            vec![sign * third],
        ],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Envelope {
    /// V₊ = P/r² + t: contributes −t to Q.
    Plus,
    /// V₋ = P/r² − t: contributes +t to Q.
    Minus,
}

impl Envelope {
    pub fn sign(self) -> f64 {
        match self {
            Envelope::Plus => -1.0,
            Envelope::Minus => 1.0,
        }
    }
}

/// Which decay hypothesis a perturbation is checked against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hypothesis {
    /// No critical threshold eigenvalue; t = O((log r)^{−1−ε}).
    I,
    /// Threshold allowed; t = O((log r)^{−2−ε}).
    Ii,
}

#[derive(Clone)]
pub enum RadialKind {
    Zero,
    /// t(r) = C (1 + ln r)^{−p} for r ≥ 1.
    LogPower { c: f64, p: f64 },
    /// t(e^s) = T(s), with T given on [0, s_end] and zero beyond.
    Tabulated(PiecewisePoly),
    /// t(e^s) = f(s) for s ≥ 0, with a stated sup bound.
    Custom {
        label: String,
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        sup: f64,
    },
}

impl fmt::Debug for RadialKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RadialKind::Zero => write!(f, "Zero"),
            RadialKind::LogPower { c, p } => write!(f, "LogPower {{ c: {c}, p: {p} }}"),
            RadialKind::Tabulated(t) => write!(f, "Tabulated({} pieces)", t.coeffs.len()),
            RadialKind::Custom { label, sup, .. } => write!(f, "Custom({label}, sup {sup})"),
        }
    }
}

/// Radial perturbation t with its envelope sign.
#[derive(Debug, Clone)]
pub struct RadialPerturbation {
    pub kind: RadialKind,
    pub envelope: Envelope,
}

impl Default for RadialPerturbation {
    fn default() -> Self {
        Self::zero()
    }
}

impl RadialPerturbation {
    pub fn zero() -> Self {
        Self {
            kind: RadialKind::Zero,
            envelope: Envelope::Minus,
        }
    }

    pub fn log_power(c: f64, p: f64, envelope: Envelope) -> Result<Self> {
        if !c.is_finite() || !(p > 0.0) || !p.is_finite() {
            return Err(Error::InvalidInput(format!("log_power needs finite C and p > 0, got C={c}, p={p}")));
        }
        Ok(Self {
            kind: RadialKind::LogPower { c, p },
            envelope,
        })
    }

    pub fn tabulated(t: PiecewisePoly, envelope: Envelope) -> Result<Self> {
        t.validate()?;
        let (a, b) = t.domain();
        if a > 0.0 {
            return Err(Error::InvalidInput(format!("tabulated T must start at s <= 0, starts at {a}")));
        }
        let scale = t.sampled_sup().max(1.0);
        let defect = t.continuity_defect(0);
        if defect > 1e-9 * scale {
            return Err(Error::InvalidInput(format!("tabulated T is discontinuous (jump {defect:e})")));
        }
        let end = t.eval(b);
        if end.abs() > 1e-9 * scale {
            return Err(Error::InvalidInput(format!(
                "tabulated T must decay to 0 at its last break (T({b}) = {end})"
            )));
        }
        Ok(Self {
            kind: RadialKind::Tabulated(t),
            envelope,
        })
    }

    pub fn custom(label: impl Into<String>, f: Arc<dyn Fn(f64) -> f64 + Send + Sync>, sup: f64, envelope: Envelope) -> Self {
        Self {
            kind: RadialKind::Custom {
                label: label.into(),
                f,
                sup,
            },
            envelope,
        }
    }

    /// T(s) = t(e^s) for s ≥ 0, before the envelope sign.
    pub fn t_log(&self, s: f64) -> f64 {
        match &self.kind {
            RadialKind::Zero => 0.0,
            RadialKind::LogPower { c, p } => c * (1.0 + s.max(0.0)).powf(-p),
            RadialKind::Tabulated(t) => {
                let (_, b) = t.domain();
                if s >= b {
                    0.0
                } else {
                    t.eval(s)
                }
            }
            RadialKind::Custom { f, .. } => f(s),
        }
    }

    /// Signed contribution ±T(s) to Q.
    pub fn q_term(&self, s: f64) -> f64 {
        self.envelope.sign() * self.t_log(s)
    }

    pub fn sup_norm(&self) -> f64 {
        match &self.kind {
            RadialKind::Zero => 0.0,
            RadialKind::LogPower { c, .. } => c.abs(),
            RadialKind::Tabulated(t) => t.sampled_sup(),
            RadialKind::Custom { sup, .. } => *sup,
        }
    }

    /// Smallest s* with |T(s)| ≤ `level` for all s ≥ s*, or an upper bound for it.
    pub fn decay_radius(&self, level: f64) -> f64 {
        match &self.kind {
            RadialKind::Zero => 0.0,
            RadialKind::LogPower { c, p } => {
                if c.abs() <= level {
                    0.0
                } else {
                    (c.abs() / level).powf(1.0 / p) - 1.0
                }
            }
            RadialKind::Tabulated(t) => t.domain().1.max(0.0),
            RadialKind::Custom { f, sup, .. } => {
                if *sup <= level {
                    return 0.0;
                }
                // Scan outward for the last exceedance on a geometric grid.
                let mut last = 0.0;
                let mut s = 0.0;
                while s < 1e6 {
                    if f(s).abs() > level {
                        last = s;
                    }
                    s += 0.01 * (1.0 + s);
                }
                last * 1.02 + 0.05
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, RadialKind::Zero)
    }

    /// Decay check against the stated hypothesis.
    pub fn check_hypothesis(&self, h: Hypothesis) -> Result<()> {
        let need = match h {
            Hypothesis::I => 1.0,
            Hypothesis::Ii => 2.0,
        };
        match &self.kind {
            RadialKind::LogPower { p, .. } if *p <= need => Err(Error::HypothesisViolation(format!(
                "log_power exponent p = {p} must exceed {need} under hypothesis {h:?}"
            ))),
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn piecewise_eval_and_derivatives() {
        let p = PiecewisePoly::new(vec![0.0, 1.0, 3.0], vec![vec![1.0, 2.0, 3.0], vec![6.0, 8.0]]).unwrap();
        assert_relative_eq!(p.eval(0.5), 1.0 + 1.0 + 0.75);
        assert_relative_eq!(p.derivative(0.5, 1), 2.0 + 3.0);
        assert_relative_eq!(p.derivative(0.5, 2), 6.0);
        assert_relative_eq!(p.eval(2.0), 14.0);
        assert_relative_eq!(p.continuity_defect(0), 0.0);
        assert_relative_eq!(p.continuity_defect(1), 0.0);
        assert!(PiecewisePoly::new(vec![0.0, 0.0], vec![vec![1.0]]).is_err());
        assert!(PiecewisePoly::new(vec![0.0, 1.0], vec![]).is_err());
    }

    #[test]
    fn hemisphere_profile_values() {
        let eps = 0.01;
        for parity in [Parity::Even, Parity::Odd] {
            let p = SpherePotential::hemisphere(eps, parity).unwrap();
            assert_relative_eq!(p.eval(0.3), -1.0 / 3.0);
            assert_relative_eq!(p.eval(FRAC_PI_2 - 2.0 * eps - 1e-9), -1.0 / 3.0, epsilon = 1e-12);
            assert_eq!(p.eval(FRAC_PI_2 - 0.5 * eps), 0.0);
            let prof = p.profile().unwrap();
            for k in 0..3 {
                assert!(prof.continuity_defect(k) < 1e-6 * eps.powi(-(k as i32)), "C{k} defect");
            }
            let mut prev = p.eval(0.0);
            for j in 0..=200 {
                let th = FRAC_PI_2 - 2.0 * eps + eps * j as f64 / 200.0;
                let v = p.eval(th);
                assert!(v >= prev - 1e-15);
                prev = v;
            }
        }
        assert!(SpherePotential::hemisphere(0.02, Parity::Even).is_err());
        assert_relative_eq!(SpherePotential::hemisphere(eps, Parity::Even).unwrap().sup_norm(), 1.0 / 3.0);
    }

    proptest! {
        #[test]
        fn hemisphere_reflection_symmetry(th in 0.0..PI, eps in 1e-4..0.01f64) {
            let ev = SpherePotential::hemisphere(eps, Parity::Even).unwrap();
            let od = SpherePotential::hemisphere(eps, Parity::Odd).unwrap();
            prop_assert!((ev.eval(PI - th) - ev.eval(th)).abs() < 1e-12);
            prop_assert!((od.eval(PI - th) + od.eval(th)).abs() < 1e-12);
        }
    }

    #[test]
    fn radial_forms() {
        let t = RadialPerturbation::log_power(1.0, 1.5, Envelope::Minus).unwrap();
        assert_relative_eq!(t.q_term(0.0), 1.0);
        assert_relative_eq!(t.t_log(3.0), 4f64.powf(-1.5));
        let plus = RadialPerturbation::log_power(1.0, 1.5, Envelope::Plus).unwrap();
        assert_relative_eq!(plus.q_term(0.0), -1.0);
        assert_relative_eq!(t.decay_radius(0.125), 3.0, epsilon = 1e-12);
        assert!(t.check_hypothesis(Hypothesis::I).is_ok());
        assert!(t.check_hypothesis(Hypothesis::Ii).is_err());
        assert_eq!(RadialPerturbation::zero().q_term(5.0), 0.0);
    }

    #[test]
    fn tabulated_requires_continuity_and_decay() {
        let good = PiecewisePoly::new(vec![0.0, 1.0, 2.0], vec![vec![1.0], vec![1.0, -1.0]]).unwrap();
        let t = RadialPerturbation::tabulated(good, Envelope::Minus).unwrap();
        assert_relative_eq!(t.t_log(1.5), 0.5);
        assert_eq!(t.t_log(7.0), 0.0);
        let jump = PiecewisePoly::new(vec![0.0, 1.0, 2.0], vec![vec![1.0], vec![0.5, -0.5]]).unwrap();
        assert!(RadialPerturbation::tabulated(jump, Envelope::Minus).is_err());
        let no_decay = PiecewisePoly::constant(0.0, 1.0, 1.0);
        assert!(RadialPerturbation::tabulated(no_decay, Envelope::Minus).is_err());
    }
}
