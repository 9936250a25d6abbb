use std::f64::consts::PI;
use std::sync::OnceLock;

use invsq_core::ladder::*;
use invsq_core::oscillation::{count_zeros, default_r_max, sturm_negative_count, QProfile};
use invsq_core::potential::{PiecewisePoly, RadialPerturbation};

fn model() -> &'static InteriorModel {
    static M: OnceLock<InteriorModel> = OnceLock::new();
    M.get_or_init(InteriorModel::sigma_half)
}

fn ladder() -> &'static EigenLadder {
    static L: OnceLock<EigenLadder> = OnceLock::new();
    L.get_or_init(|| compute_ladder(model(), 25, &LadderOptions::default()).unwrap())
}

#[test]
fn sigma_half_ratios() {
    let l = ladder();
    assert!((l.sigma - 0.5).abs() < 1e-15);
    for n in 15..25 {
        let r = l.ratios[n - 1];
        assert!((r - 2.0).abs() <= 1e-4, "n {n}: {r}");
    }
    assert!((l.ratios[19] - 2.0).abs() < 1e-4);
}

#[test]
fn ratios_approach_two_monotonically_past_onset() {
    let l = ladder();
    let dev: Vec<f64> = l.ratios.iter().map(|r| (r - 2.0).abs()).collect();
    for n in 8..dev.len() {
        assert!(dev[n] < dev[n - 1], "n {}: {:?}", n + 1, &dev[n - 1..=n]);
    }
}

#[test]
fn a_estimates_are_cauchy() {
    let a = &ladder().a_estimates;
    let rel: Vec<f64> = a.windows(2).map(|w| ((w[1] - w[0]) / w[0]).abs()).collect();
    for k in 10..rel.len() {
        assert!(rel[k] < rel[k - 1], "k {k}: {:?}", &rel[k - 1..=k]);
    }
    assert!(rel.last().unwrap() < &1e-6);
}

#[test]
fn log_slope_matches_ln_sigma() {
    let l = ladder();
    let s = l.log_slope(15, 25).unwrap();
    assert!((s - 0.5f64.ln()).abs() < 1e-5, "{s}");
    // Over [10, 25] the O(λ_n) shift of a_n is visible; removing it with a λ_n column restores the slope.
    let (x, y): (Vec<f64>, Vec<f64>) = (10..=25).map(|n| (n as f64, l.lambda_at(n).unwrap().ln())).unzip();
    let cols = vec![vec![1.0; x.len()], x.clone(), (10..=25).map(|n| l.lambda_at(n).unwrap()).collect()];
    let (coef, _) = invsq_core::numerics::least_squares(&cols, &y).unwrap();
    assert!((coef[1] - 0.5f64.ln()).abs() < 1e-5, "{}", coef[1]);
}

#[test]
fn eigenvalues_strictly_decreasing_and_xi_brackets_hold_past_onset() {
    let l = ladder();
    assert!(l.lambda.windows(2).all(|w| w[1] < w[0]));
    let onset = l.xi_onset.expect("xi brackets hold eventually");
    assert!(onset <= 10, "onset {onset}");
    let w = l.phase.bracket_width();
    for n in onset..=25 {
        let xi = l.phase.xi(n);
        let lam = l.lambda_at(n).unwrap();
        assert!(lam > xi * (1.0 - w) && lam < xi * (1.0 + w), "n {n}");
    }
}

#[test]
fn xi_halves_each_step() {
    let pd = &ladder().phase;
    for n in 1..30 {
        assert!((pd.xi(n + 1) / pd.xi(n) - 0.5).abs() < 1e-14);
    }
    assert!((predicted_xi(3, 0.4, 1.1, sigma_half_mu1()) / predicted_xi(2, 0.4, 1.1, sigma_half_mu1()) - 0.5).abs() < 1e-14);
}

#[test]
fn xi_error_decreases_with_n() {
    let l = ladder();
    let err: Vec<f64> = (12..=25).map(|n| (l.lambda_at(n).unwrap() / l.phase.xi(n) - 1.0).abs()).collect();
    assert!(err.windows(2).all(|w| w[1] < w[0]), "{err:?}");
}

#[test]
fn matching_radius_does_not_move_the_root() {
    let m = model();
    let l = ladder();
    let w = l.phase.bracket_width();
    for n in [12, 20] {
        let xi = l.phase.xi(n);
        let base = l.lambda_at(n).unwrap();
        for r in [1.5, 3.0] {
            let opts = LadderOptions {
                match_radius: Some(r),
                ..LadderOptions::default()
            };
            let lam = match_eigenvalue(m, 0, (xi * (1.0 - w), xi * (1.0 + w)), &opts).unwrap();
            assert!((lam / base - 1.0).abs() < 1e-10, "n {n} r {r}: {lam} vs {base}");
        }
    }
}

#[test]
fn matching_function_is_normalization_free() {
    let m = model();
    let opts = LadderOptions::default();
    // The normalized Wronskian only sees directions; rescaling either state cannot change it.
    let [uy, vy] = interior_state(m, 0, 0.01, 1.0, 1e-12).unwrap();
    let f = matching_function(m, 0, 0.01, 1.0, &opts).unwrap();
    let ([ux, vx], _) = invsq_core::exterior::exterior_state(m.sectors[0].mode.mu, 3, 0.01, 1.0, &opts.exterior).unwrap();
    let (sy, sx) = (3.7, 1e-40);
    let g = ((sy * vy) * (sx * ux) - (sy * uy) * (sx * vx)) / ((sy * uy).hypot(sy * vy) * (sx * ux).hypot(sx * vx));
    assert!((f - g).abs() < 1e-13);
}

#[test]
fn empty_and_crowded_brackets_are_reported() {
    let m = model();
    let l = ladder();
    let opts = LadderOptions::default();
    let lam = l.lambda_at(14).unwrap();
    let e = match_eigenvalue(m, 0, (lam * 1.05, lam * 1.3), &opts).unwrap_err();
    assert!(matches!(e, invsq_core::error::Error::EmptyBracket { .. }), "{e}");
    let e = match_eigenvalue(m, 0, (lam * 0.3, lam * 1.2), &opts).unwrap_err();
    assert!(matches!(e, invsq_core::error::Error::MultipleRoots { .. }), "{e}");
}

#[test]
fn zero_mode_fits_log_cosine() {
    let m = model();
    let c = phase_constant_c(m, None, 1e-12).unwrap();
    assert!(c.fit_residual < 1e-6, "{}", c.fit_residual);
    assert!((0.0..2.0 * PI).contains(&c.c_value));
}

#[test]
fn phase_constant_c_is_window_independent() {
    let m = model();
    let tau = m.sectors[0].mode.tau;
    let p = (2.0 * PI / tau).exp();
    let a = phase_constant_c(m, Some((1.5, 1.5 * p * p)), 1e-12).unwrap();
    let b = phase_constant_c(m, Some((6.0, 6.0 * p * p)), 1e-12).unwrap();
    let shifted = phase_constant_c(m, Some((1.5 * p, 1.5 * p * p * p)), 1e-12).unwrap();
    let dist = |x: f64, y: f64| {
        let d = (x - y).rem_euclid(2.0 * PI);
        d.min(2.0 * PI - d)
    };
    assert!(dist(a.c_value, b.c_value) < 1e-6);
    assert!(dist(a.c_value, shifted.c_value) < 1e-6);
    assert!((a.amplitude / b.amplitude - 1.0).abs() < 1e-6);
}

#[test]
fn noncritical_zero_mode_is_a_power_combination() {
    // l = 9 sector: μ = μ₁ − 90 < 1/4, so Y = a r^α + b r^β beyond r₀.
    let m = InteriorModel::sigma_half().with_degree(9);
    let mode = &m.sectors[1].mode;
    let (al, be) = (mode.alpha.re, mode.beta.re);
    let r: Vec<f64> = (0..40).map(|i| 1.0 + 0.25 * i as f64).collect();
    let sol = interior_solution(&m, 1, 0.0, &r, 1e-12).unwrap();
    let cols = vec![r.iter().map(|x| x.powf(al)).collect::<Vec<_>>(), r.iter().map(|x| x.powf(be)).collect()];
    let (_, resid) = invsq_core::numerics::least_squares(&cols, &sol.y).unwrap();
    let scale = sol.y.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(resid / scale < 1e-8, "{resid} / {scale}");
}

/// j_l(x) by its power series.
fn spherical_bessel_series(l: usize, x: f64) -> f64 {
    let mut dfact = 1.0;
    for k in 0..=l {
        dfact *= (2 * k + 1) as f64;
    }
    let mut term = x.powi(l as i32) / dfact;
    let mut sum = term;
    for m in 1..60 {
        term *= -x * x / (2.0 * m as f64 * (2 * l + 2 * m + 1) as f64);
        sum += term;
    }
    sum
}

#[test]
fn constant_well_matches_power_series() {
    // f ≡ 0 on [0, 1/2], w ≡ −κ on [0, r₀]: inside r < 1/2 the sector equation is that of a
    // free particle with k² = κ − λ, solved by j_l(kr).
    let r0 = 1.0;
    let h = 0.5;
    let f = PiecewisePoly::new(
        vec![0.0, h, r0],
        vec![vec![0.0], vec![0.0, 0.0, 0.0, 10.0 / h.powi(3), -15.0 / h.powi(4), 6.0 / h.powi(5)]],
    )
    .unwrap();
    for (l, kappa, lambda) in [(0usize, 40.0, 3.0), (1, 25.0, 0.0), (2, 60.0, 10.0)] {
        let mut m = InteriorModel::sigma_half();
        m.f = f.clone();
        m.w = PiecewisePoly::constant(0.0, r0, -kappa);
        m.sectors[0].l = l;
        m.validate().unwrap();
        let k = (kappa - lambda).sqrt();
        let grid: Vec<f64> = (1..=20).map(|i| 0.024 * i as f64).collect();
        let sol = interior_solution(&m, 0, lambda, &grid, 1e-12).unwrap();
        let ratio0 = sol.y[0] / spherical_bessel_series(l, k * grid[0]);
        for (i, &r) in grid.iter().enumerate() {
            let j = spherical_bessel_series(l, k * r);
            if j.abs() > 1e-3 * (k * r).powi(l as i32) {
                assert!((sol.y[i] / j / ratio0 - 1.0).abs() < 1e-7, "l {l} r {r}");
            }
        }
    }
}

#[test]
fn counts_agree_with_the_oscillation_pipeline() {
    let l = ladder();
    let mu1 = model().sectors[0].mode.mu;
    // The oscillation count sees only r ≥ 1; the gap is the interior's bounded contribution.
    let mut gaps = Vec::new();
    for e in [1e-1, 1e-2, 1e-3, 1e-4] {
        let ladder_count = l.lambda.iter().filter(|&&x| x > e).count() as i64;
        let q = QProfile::new(mu1, 3, e, RadialPerturbation::zero()).unwrap();
        let osc = count_zeros(&q, default_r_max(&q).unwrap(), 1e-10).unwrap().zero_count as i64;
        gaps.push(ladder_count - osc);
    }
    let (lo, hi) = (*gaps.iter().min().unwrap(), *gaps.iter().max().unwrap());
    assert!(hi - lo <= 1, "{gaps:?}");
    assert!(hi.abs() <= 4, "{gaps:?}");
}

#[test]
fn inertia_count_between_consecutive_eigenvalues() {
    // Finite differences for −u″ − Q u in s = ln r, u = r^{1/2} Y, Dirichlet ends.
    let m = model();
    let l = ladder();
    for n in [3usize, 6, 9] {
        let lam = (l.lambda_at(n).unwrap() * l.lambda_at(n + 1).unwrap()).sqrt();
        let (sa, sb) = ((1e-4f64).ln(), (40.0 / lam.sqrt()).ln());
        let h = 2e-3;
        let npts = ((sb - sa) / h) as usize;
        let diag: Vec<f64> = (1..=npts)
            .map(|i| {
                let r = (sa + h * i as f64).exp();
                let q = m.effective_coupling(0, r) - 0.25 - r * r * (m.offset(r) + lam);
                2.0 / (h * h) - q
            })
            .collect();
        let count = sturm_negative_count(&diag, -1.0 / (h * h));
        assert_eq!(count, n as u64, "between λ_{n} and λ_{}", n + 1);
    }
}

#[test]
fn localization_constants_stabilize() {
    let m = model();
    let l = ladder();
    let opts = LadderOptions::default();
    let reps: Vec<LocalizationReport> = (10..=25).map(|n| localization(m, l, n, 0.1, &opts).unwrap()).collect();
    let last = reps.last().unwrap();
    for r in &reps {
        assert!((r.c_minus / last.c_minus - 1.0).abs() < 0.05, "n {}", r.n);
        assert!((r.c_plus / last.c_plus - 1.0).abs() < 0.05, "n {}", r.n);
        assert!(r.mass_fraction >= 0.9 - 1e-9);
    }
    let (cm, cp) = stabilized_constants(&reps);
    for n in 10..=25 {
        let mass = annulus_mass(m, l, n, cm, cp, &opts).unwrap();
        assert!(mass >= 0.9, "n {n}: {mass}");
    }
    // Mass inside r₀ halves with each step of the ladder.
    let inner: Vec<f64> = reps.iter().map(|r| r.interior_fraction).collect();
    assert!(inner.windows(2).all(|w| w[1] < w[0]));
    assert!(inner.last().unwrap() < &1e-6);
}

#[test]
fn hypothesis_violation_with_two_critical_sectors() {
    let m = InteriorModel::sigma_half().with_degree(1);
    assert!(compute_ladder(&m, 3, &LadderOptions::default()).is_err());
}
