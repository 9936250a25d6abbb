//! Small numerical utilities shared by the pipelines.

use gauss_quad::legendre::GaussLegendre;

use crate::error::{Error, Result};

/// Gauss–Legendre rule on [-1, 1], mapped on demand.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pairs: Vec<(f64, f64)>,
}

impl GaussRule {
    pub fn new(nodes: usize) -> Self {
        let n = nodes.max(2);
        let rule = GaussLegendre::new(n).expect("degree >= 2");
        Self {
            pairs: rule.as_node_weight_pairs().to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Nodes and weights mapped to [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        self.pairs.iter().map(move |&(x, w)| (mid + half * x, half * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

/// Ordinary least-squares line `y = slope * x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub max_abs_residual: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "line fit needs two or more paired points, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("line fit abscissae are all equal".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_abs_residual = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - slope * a - intercept).abs())
        .fold(0.0, f64::max);
    Ok(LineFit {
        slope,
        intercept,
        max_abs_residual,
    })
}

/// Linear least squares `min |A c - y|` for a handful of basis columns.
/// Returns the coefficients and the RMS residual.
pub fn least_squares(columns: &[Vec<f64>], y: &[f64]) -> Result<(Vec<f64>, f64)> {
    let m = y.len();
    let k = columns.len();
    if k == 0 || m < k || columns.iter().any(|c| c.len() != m) {
        return Err(Error::InvalidInput("ill-shaped least-squares problem".into()));
    }
    let a = nalgebra::DMatrix::from_fn(m, k, |i, j| columns[j][i]);
    let b = nalgebra::DVector::from_column_slice(y);
    let svd = a.clone().svd(true, true);
    let c = svd
        .solve(&b, 1e-14)
        .map_err(|e| Error::InvalidInput(format!("least squares failed: {e}")))?;
    let r = &a * &c - &b;
    let rms = (r.norm_squared() / m as f64).sqrt();
    Ok((c.iter().copied().collect(), rms))
}

/// Bisection for a sign change of `f` on [lo, hi]; `f(lo)` and `f(hi)` must
/// have opposite signs. Stops at relative width `rel_tol`.
pub fn bisect<F: FnMut(f64) -> Result<f64>>(mut f: F, mut lo: f64, mut hi: f64, rel_tol: f64) -> Result<f64> {
    let mut flo = f(lo)?;
    let fhi = f(hi)?;
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::EmptyBracket { lo, hi });
    }
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() <= rel_tol * mid.abs().max(f64::MIN_POSITIVE) {
            return Ok(mid);
        }
        let fm = f(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Fits y(x) ≈ A cos(τ ln x + φ), optionally plus x²(p cos + q sin)(τ ln x),
/// and returns (A ≥ 0, φ ∈ [0, 2π), RMS residual / A).
pub fn fit_log_cosine(tau: f64, x: &[f64], y: &[f64], x2_terms: bool) -> Result<(f64, f64, f64)> {
    let c: Vec<f64> = x.iter().map(|v| (tau * v.ln()).cos()).collect();
    let s: Vec<f64> = x.iter().map(|v| (tau * v.ln()).sin()).collect();
    let mut cols = vec![c.clone(), s.clone()];
    if x2_terms {
        cols.push(x.iter().zip(&c).map(|(v, c)| v * v * c).collect());
        cols.push(x.iter().zip(&s).map(|(v, s)| v * v * s).collect());
    }
    let (k, rms) = least_squares(&cols, y)?;
    // A cos(φ₀ + φ) = A cos φ cos φ₀ − A sin φ sin φ₀.
    let amp = k[0].hypot(k[1]);
    if !(amp > 0.0) {
        return Err(Error::InvalidInput("log-cosine fit has zero amplitude".into()));
    }
    Ok((amp, wrap_angle((-k[1]).atan2(k[0])), rms / amp))
}

/// Wrap an angle into [0, 2π).
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let w = a.rem_euclid(two_pi);
    if w >= two_pi {
        0.0
    } else {
        w
    }
}

/// Signed distance between two angles, in (-π, π].
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = wrap_angle(a - b);
    if d > std::f64::consts::PI {
        d - std::f64::consts::TAU
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_rule_is_exact_for_polynomials() {
        let g = GaussRule::new(6);
        assert_relative_eq!(g.integrate(0.0, 2.0, |x| x.powi(11)), 2f64.powi(12) / 12.0, max_relative = 1e-13);
    }

    #[test]
    fn line_fit_recovers_exact_line() {
        let x = [0.0, 1.0, 2.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
        let f = fit_line(&x, &y).unwrap();
        assert_relative_eq!(f.slope, 3.0, epsilon = 1e-12);
        assert_relative_eq!(f.intercept, -1.0, epsilon = 1e-12);
        assert!(f.max_abs_residual < 1e-12);
        assert!(fit_line(&[1.0], &[2.0]).is_err());
    }

    #[test]
    fn least_squares_two_columns() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.3).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v.cos() - 0.5 * v.sin()).collect();
        let cols = vec![x.iter().map(|v| v.cos()).collect(), x.iter().map(|v| v.sin()).collect()];
        let (c, rms) = least_squares(&cols, &y).unwrap();
        assert_relative_eq!(c[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(c[1], -0.5, epsilon = 1e-12);
        assert!(rms < 1e-12);
    }

    #[test]
    fn bisection_finds_root_and_rejects_empty_bracket() {
        let r = bisect(|x| Ok(x * x - 2.0), 0.0, 2.0, 1e-14).unwrap();
        assert_relative_eq!(r, 2f64.sqrt(), epsilon = 1e-13);
        assert!(matches!(bisect(|x| Ok(x * x + 1.0), 0.0, 2.0, 1e-12), Err(Error::EmptyBracket { .. })));
    }

    #[test]
    fn angles_wrap() {
        assert_relative_eq!(wrap_angle(-0.5), std::f64::consts::TAU - 0.5);
        assert_relative_eq!(angle_diff(0.1, std::f64::consts::TAU - 0.1), 0.2, epsilon = 1e-14);
    }
}
