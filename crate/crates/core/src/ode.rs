//! Explicit Runge–Kutta integrators on fixed-size real state vectors.
//!
//! [`Dopri5`] is the adaptive Dormand–Prince 5(4) pair used by every
//! pipeline that needs a trusted integrator. Each accepted step is handed to an
//! observer together with cubic Hermite dense output, which is what the
//! crossing detectors and grid samplers use.

use crate::error::{Error, Result};

/// Relative/absolute local error tolerances.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
        }
    }
}

impl Tolerances {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Self { rtol, atol }
    }
}

/// One accepted step, with derivatives at both ends.
#[derive(Debug, Clone, Copy)]
pub struct Step<const N: usize> {
    pub t0: f64,
    pub y0: [f64; N],
    pub f0: [f64; N],
    pub t1: f64,
    pub y1: [f64; N],
    pub f1: [f64; N],
}

impl<const N: usize> Step<N> {
    /// Cubic Hermite interpolant of the step, valid for `t` between `t0` and `t1`.
    pub fn interpolate(&self, t: f64) -> [f64; N] {
        let h = self.t1 - self.t0;
        let s = (t - self.t0) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let mut out = [0.0; N];
        for i in 0..N {
            out[i] = h00 * self.y0[i] + h10 * h * self.f0[i] + h01 * self.y1[i] + h11 * h * self.f1[i];
        }
        out
    }
}

/// Observer verdict after each accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Stop,
}

#[derive(Debug, Clone, Copy)]
pub struct Outcome<const N: usize> {
    pub t: f64,
    pub y: [f64; N],
    pub steps: usize,
    pub stopped_early: bool,
}

/// Dormand–Prince 5(4) with FSAL and a standard step-size controller.
#[derive(Debug, Clone, Copy)]
pub struct Dopri5 {
    pub tol: Tolerances,
    pub max_steps: usize,
    pub h_max: f64,
}

impl Default for Dopri5 {
    fn default() -> Self {
        Self::new(Tolerances::default())
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[inline]
fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        if *c == 0.0 {
            continue;
        }
        for i in 0..N {
            out[i] += h * c * k[i];
        }
    }
    out
}

impl Dopri5 {
    pub fn new(tol: Tolerances) -> Self {
        Self {
            tol,
            max_steps: 2_000_000,
            h_max: f64::INFINITY,
        }
    }

    pub fn with_h_max(mut self, h_max: f64) -> Self {
        self.h_max = h_max;
        self
    }

    /// Integrate `y' = rhs(t, y)` from `t0` to `t_end` (either direction).
    ///
    /// The observer sees every accepted step and may stop the integration.
    pub fn integrate<const N: usize, F, O>(
        &self,
        mut rhs: F,
        t0: f64,
        y0: [f64; N],
        t_end: f64,
        mut observer: O,
    ) -> Result<Outcome<N>>
    where
        F: FnMut(f64, &[f64; N]) -> [f64; N],
        O: FnMut(&Step<N>) -> Flow,
    {
        let span = t_end - t0;
        if span == 0.0 {
            return Ok(Outcome {
                t: t0,
                y: y0,
                steps: 0,
                stopped_early: false,
            });
        }
        if !span.is_finite() || y0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Integrator {
                r: t0,
                reason: "non-finite initial data or span".into(),
            });
        }
        let dir = span.signum();
        let mut t = t0;
        let mut y = y0;
        let mut k1 = rhs(t, &y);
        let mut h = self.initial_step(&mut rhs, t, &y, &k1, dir, span.abs().min(self.h_max));
        let h_min = 1e-14 * span.abs().max(t0.abs()).max(1.0);
        let mut steps = 0usize;
        let mut rejects_in_row = 0usize;

        loop {
            if steps >= self.max_steps {
                return Err(Error::Integrator {
                    r: t,
                    reason: format!("step budget of {} exhausted", self.max_steps),
                });
            }
            let remaining = (t_end - t) * dir;
            let last = h >= remaining;
            let hs = if last { remaining } else { h } * dir;

            let k2 = rhs(t + C2 * hs, &axpy(&y, hs, &[(A21, &k1)]));
            let k3 = rhs(t + C3 * hs, &axpy(&y, hs, &[(A31, &k1), (A32, &k2)]));
            let k4 = rhs(t + C4 * hs, &axpy(&y, hs, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
            let k5 = rhs(
                t + C5 * hs,
                &axpy(&y, hs, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
            );
            let k6 = rhs(
                t + hs,
                &axpy(&y, hs, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
            );
            let y_new = axpy(&y, hs, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
            let t_new = if last { t_end } else { t + hs };
            let k7 = rhs(t_new, &y_new);

            let mut err = 0.0;
            for i in 0..N {
                let e = hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = self.tol.atol + self.tol.rtol * y[i].abs().max(y_new[i].abs());
                err += (e / sc) * (e / sc);
            }
            let err = (err / N as f64).sqrt();

            if !err.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
                rejects_in_row += 1;
                h *= 0.1;
                if h < h_min || rejects_in_row > 60 {
                    return Err(Error::Integrator {
                        r: t,
                        reason: "non-finite state".into(),
                    });
                }
                continue;
            }

            if err <= 1.0 {
                steps += 1;
                rejects_in_row = 0;
                let step = Step {
                    t0: t,
                    y0: y,
                    f0: k1,
                    t1: t_new,
                    y1: y_new,
                    f1: k7,
                };
                t = t_new;
                y = y_new;
                k1 = k7;
                if observer(&step) == Flow::Stop {
                    return Ok(Outcome {
                        t,
                        y,
                        steps,
                        stopped_early: true,
                    });
                }
                if last {
                    return Ok(Outcome {
                        t,
                        y,
                        steps,
                        stopped_early: false,
                    });
                }
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                h = (h * fac).min(self.h_max);
            } else {
                rejects_in_row += 1;
                h *= (0.9 * err.powf(-0.25)).clamp(0.1, 0.9);
                if h < h_min {
                    return Err(Error::Integrator {
                        r: t,
                        reason: format!("step size underflow (h = {h:e})"),
                    });
                }
            }
        }
    }

    fn initial_step<const N: usize, F>(&self, rhs: &mut F, t: f64, y: &[f64; N], f0: &[f64; N], dir: f64, cap: f64) -> f64
    where
        F: FnMut(f64, &[f64; N]) -> [f64; N],
    {
        let sc = |i: usize| self.tol.atol + self.tol.rtol * y[i].abs();
        let d0 = (0..N).map(|i| (y[i] / sc(i)).powi(2)).sum::<f64>().sqrt();
        let d1 = (0..N).map(|i| (f0[i] / sc(i)).powi(2)).sum::<f64>().sqrt();
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 }.min(cap);
        let y1 = axpy(y, h0 * dir, &[(1.0, f0)]);
        let f1 = rhs(t + h0 * dir, &y1);
        let d2 = (0..N).map(|i| ((f1[i] - f0[i]) / sc(i)).powi(2)).sum::<f64>().sqrt() / h0;
        let h1 = if !d2.is_finite() {
            h0
        } else if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(cap)
    }

    /// Integrate and record the state at every point of `grid` (monotone, first
    /// entry equal to the start). Used by samplers that need values at exact
    /// abscissae rather than interpolated ones.
    pub fn sample<const N: usize, F>(&self, mut rhs: F, grid: &[f64], y0: [f64; N]) -> Result<Vec<[f64; N]>>
    where
        F: FnMut(f64, &[f64; N]) -> [f64; N],
    {
        let mut out = Vec::with_capacity(grid.len());
        if grid.is_empty() {
            return Ok(out);
        }
        let mut y = y0;
        out.push(y);
        for w in grid.windows(2) {
            let o = self.integrate(&mut rhs, w[0], y, w[1], |_| Flow::Continue)?;
            y = o.y;
            out.push(y);
        }
        Ok(out)
    }
}

/// One classical RK4 step.
pub fn rk4_step<const N: usize, F>(rhs: &mut F, t: f64, y: &[f64; N], h: f64) -> [f64; N]
where
    F: FnMut(f64, &[f64; N]) -> [f64; N] + ?Sized,
{
    let k1 = rhs(t, y);
    let k2 = rhs(t + 0.5 * h, &axpy(y, h, &[(0.5, &k1)]));
    let k3 = rhs(t + 0.5 * h, &axpy(y, h, &[(0.5, &k2)]));
    let k4 = rhs(t + h, &axpy(y, h, &[(1.0, &k3)]));
    axpy(y, h, &[(1.0 / 6.0, &k1), (1.0 / 3.0, &k2), (1.0 / 3.0, &k3), (1.0 / 6.0, &k4)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn harmonic_oscillator_forward_and_backward() {
        let ode = Dopri5::default();
        let rhs = |_t: f64, y: &[f64; 2]| [y[1], -y[0]];
        let out = ode.integrate(rhs, 0.0, [0.0, 1.0], 10.0, |_| Flow::Continue).unwrap();
        assert_relative_eq!(out.y[0], 10f64.sin(), epsilon = 1e-8);
        let back = ode.integrate(rhs, 10.0, out.y, 0.0, |_| Flow::Continue).unwrap();
        assert!(back.y[0].abs() < 1e-8);
        assert_relative_eq!(back.y[1], 1.0, epsilon = 1e-8);
    }

    #[test]
    fn dense_output_is_accurate_between_steps() {
        let ode = Dopri5::new(Tolerances::new(1e-11, 1e-13));
        let mut worst: f64 = 0.0;
        ode.integrate(|_t, y: &[f64; 1]| [y[0]], 0.0, [1.0], 3.0, |s| {
            let tm = 0.5 * (s.t0 + s.t1);
            worst = worst.max((s.interpolate(tm)[0] - tm.exp()).abs() / tm.exp());
            Flow::Continue
        })
        .unwrap();
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn observer_can_stop() {
        let ode = Dopri5::default();
        let out = ode
            .integrate(|_t, _y: &[f64; 1]| [1.0], 0.0, [0.0], 100.0, |s| {
                if s.t1 > 1.0 {
                    Flow::Stop
                } else {
                    Flow::Continue
                }
            })
            .unwrap();
        assert!(out.stopped_early && out.t > 1.0 && out.t < 100.0);
    }

    #[test]
    fn sample_hits_grid_points() {
        let ode = Dopri5::default();
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.25).collect();
        let ys = ode.sample(|_t, y: &[f64; 2]| [y[1], -y[0]], &grid, [1.0, 0.0]).unwrap();
        for (t, y) in grid.iter().zip(&ys) {
            assert_relative_eq!(y[0], t.cos(), epsilon = 1e-9);
        }
    }

    #[test]
    fn rk4_fourth_order() {
        let mut rhs = |_t: f64, y: &[f64; 1]| [-y[0]];
        let run = |h: f64, rhs: &mut dyn FnMut(f64, &[f64; 1]) -> [f64; 1]| {
            let mut y = [1.0];
            let n = (1.0 / h).round() as usize;
            for i in 0..n {
                y = rk4_step(rhs, i as f64 * h, &y, h);
            }
            (y[0] - (-1f64).exp()).abs()
        };
        let e1 = run(0.1, &mut rhs);
        let e2 = run(0.05, &mut rhs);
        assert!((e1 / e2).log2() > 3.8);
    }
}
