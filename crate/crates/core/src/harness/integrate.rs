//! Adaptive Dormand–Prince 5(4) integration of autonomous systems.

use crate::error::{invalid, Error, Result};

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Error tolerances of the integrator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    pub atol: f64,
    pub rtol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { atol: 1e-12, rtol: 1e-12 }
    }
}

/// Integrates `ẋ = f(x)` from `x0` and returns the states at `times`
/// (row-major). Steps land exactly on every requested time.
pub fn integrate<F>(f: F, x0: &[f64], times: &[f64], tol: Tolerances) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64]),
{
    let d = x0.len();
    if times.is_empty() {
        return Ok(Vec::new());
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("sample times must be strictly increasing"));
    }
    if !(tol.atol > 0.0 && tol.rtol >= 0.0) {
        return Err(invalid("tolerances must be positive"));
    }
    let mut out = Vec::with_capacity(times.len() * d);
    out.extend_from_slice(x0);
    let mut x = x0.to_vec();
    let mut t = times[0];
    let mut k = vec![vec![0.0; d]; 7];
    let mut y = vec![0.0; d];
    let mut x5 = vec![0.0; d];
    f(&x, &mut k[0]);
    let span = times[times.len() - 1] - times[0];
    let mut h = (span / times.len() as f64).min(1e-3 * span.max(1.0)).max(1e-8);

    for &target in &times[1..] {
        while t < target {
            let last = target - t <= h;
            let step = if last { target - t } else { h };
            if step < 16.0 * f64::EPSILON * t.abs().max(1.0) && !last {
                return Err(Error::StepUnderflow { t });
            }
            for s in 1..7 {
                for i in 0..d {
                    let mut acc = 0.0;
                    for j in 0..s {
                        acc += A[s][j] * k[j][i];
                    }
                    y[i] = x[i] + step * acc;
                }
                f(&y, &mut k[s]);
            }
            let mut err = 0.0;
            for i in 0..d {
                let mut s5 = 0.0;
                let mut s4 = 0.0;
                for j in 0..7 {
                    s5 += B5[j] * k[j][i];
                    s4 += B4[j] * k[j][i];
                }
                x5[i] = x[i] + step * s5;
                let sc = tol.atol + tol.rtol * x[i].abs().max(x5[i].abs());
                let e = step * (s5 - s4) / sc;
                err += e * e;
            }
            let err = (err / d.max(1) as f64).sqrt();
            if !err.is_finite() {
                h = step * 0.1;
                if h < 16.0 * f64::EPSILON * t.abs().max(1.0) {
                    return Err(Error::StepUnderflow { t });
                }
                continue;
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 {
                t = if last { target } else { t + step };
                x.copy_from_slice(&x5);
                // FSAL: the seventh stage is f at the new point
                let k7 = k[6].clone();
                k[0].copy_from_slice(&k7);
                if !last || factor < 1.0 {
                    h = step * factor;
                }
            } else {
                h = step * factor.min(1.0);
                if h < 16.0 * f64::EPSILON * t.abs().max(1.0) {
                    return Err(Error::StepUnderflow { t });
                }
            }
        }
        out.extend_from_slice(&x);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_flow() {
        let r = integrate(|_, o| o.iter_mut().for_each(|v| *v = 0.0), &[1.5, -2.0], &[0.0, 1.0, 2.0], Tolerances::default()).unwrap();
        assert_eq!(r, vec![1.5, -2.0, 1.5, -2.0, 1.5, -2.0]);
    }

    #[test]
    fn exponential_decay() {
        let times: Vec<f64> = (0..=10).map(|i| 0.1 * i as f64).collect();
        let r = integrate(|x, o| o[0] = -x[0], &[1.0], &times, Tolerances::default()).unwrap();
        assert!((r[10] - (-1.0f64).exp()).abs() < 1e-10);
        for (i, t) in times.iter().enumerate() {
            assert!((r[i] - (-t).exp()).abs() < 1e-11);
        }
    }

    #[test]
    fn harmonic_oscillator_period() {
        let times = [0.0, std::f64::consts::PI, 2.0 * std::f64::consts::PI];
        let r = integrate(|x, o| {
            o[0] = x[1];
            o[1] = -x[0];
        }, &[1.0, 0.0], &times, Tolerances::default())
        .unwrap();
        assert!((r[2] + 1.0).abs() < 1e-10 && r[3].abs() < 1e-10);
        assert!((r[4] - 1.0).abs() < 1e-10 && r[5].abs() < 1e-10);
    }
}
