//! Adaptive Dormand–Prince 5(4) for complex systems `y' = f(y)`.

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-10;
const MAX_STEPS: usize = 1_000_000;

// Autonomous systems only, so the nodes c_i are not needed.
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

/// Integrates from `t = 0` to `t = t_end` (either sign) with mixed
/// absolute/relative tolerance `tol`.
pub fn dopri5(
    mut f: impl FnMut(&[Complex64], &mut [Complex64]),
    y0: &[Complex64],
    t_end: f64,
    tol: f64,
) -> Result<Vec<Complex64>> {
    let n = y0.len();
    let mut y = y0.to_vec();
    if t_end == 0.0 || n == 0 {
        return Ok(y);
    }
    let dir = t_end.signum();
    let span = t_end.abs();
    let mut t = 0.0;
    let mut h = (0.01 * span).min(0.1);
    let mut k = vec![vec![Complex64::default(); n]; 7];
    let mut stage = vec![Complex64::default(); n];
    let mut y5 = vec![Complex64::default(); n];
    f(&y, &mut k[0]);

    for _ in 0..MAX_STEPS {
        if t >= span {
            return Ok(y);
        }
        h = h.min(span - t);
        let hs = dir * h;
        for s in 1..7 {
            for i in 0..n {
                let mut acc = y[i];
                for (l, a) in A[s].iter().enumerate().take(s) {
                    if *a != 0.0 {
                        acc += k[l][i] * (hs * a);
                    }
                }
                stage[i] = acc;
            }
            f(&stage, &mut k[s]);
        }
        // Stage 7 is evaluated at the fifth-order solution (FSAL).
        let mut err: f64 = 0.0;
        for i in 0..n {
            let mut d5 = Complex64::default();
            let mut d4 = Complex64::default();
            for s in 0..7 {
                d5 += k[s][i] * B5[s];
                d4 += k[s][i] * B4[s];
            }
            y5[i] = y[i] + d5 * hs;
            let scale = tol * (1.0 + y[i].norm().max(y5[i].norm()));
            err = err.max(((d5 - d4) * hs).norm() / scale);
        }
        if !err.is_finite() {
            return Err(Error::FlowIntegrationFailure(format!("non-finite state at t = {}", dir * t)));
        }
        if err <= 1.0 {
            t += h;
            std::mem::swap(&mut y, &mut y5);
            k.swap(0, 6);
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h < 1e-14 * span.max(1.0) {
            return Err(Error::FlowIntegrationFailure(format!(
                "step size underflow at t = {}",
                dir * t
            )));
        }
    }
    Err(Error::FlowIntegrationFailure(format!(
        "more than {MAX_STEPS} steps without reaching t = {t_end}"
    )))
}
