//! Adaptive Dormand-Prince 5(4) integration of autonomous systems `y' = f(y)`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub absolute: f64,
    pub relative: f64,
    pub max_steps: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            absolute: 1e-10,
            relative: 1e-10,
            max_steps: 5_000_000,
        }
    }
}

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Fifth-order weights minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates from `y0` at time 0 to `t_end`. `rate_hint` is a scale for the
/// fastest rate in the system, used only for the first step size.
pub fn integrate<F>(rhs: F, y0: &[f64], t_end: f64, rate_hint: f64, tol: Tolerance) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64]),
{
    let dim = y0.len();
    let mut y = y0.to_vec();
    if t_end == 0.0 || dim == 0 {
        return Ok(y);
    }
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; dim]; 7];
    let mut stage = vec![0.0; dim];
    let mut y_new = vec![0.0; dim];
    rhs(&y, &mut k[0]);

    let mut t = 0.0;
    let mut h = if rate_hint > 0.0 {
        (0.01 / rate_hint).min(t_end)
    } else {
        t_end
    };
    let mut steps = 0usize;
    let mut rejected = 0usize;
    while t < t_end {
        if steps + rejected >= tol.max_steps {
            return Err(Error::Numerical(format!(
                "step budget of {} exhausted at t = {t} of {t_end} (step {h:e}, {rejected} rejected)",
                tol.max_steps
            )));
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        for s in 1..7 {
            for i in 0..dim {
                let mut acc = y[i];
                for (j, kj) in k.iter().enumerate().take(s) {
                    let a = A[s][j];
                    if a != 0.0 {
                        acc += h * a * kj[i];
                    }
                }
                stage[i] = acc;
            }
            rhs(&stage, &mut k[s]);
            if s == 6 {
                y_new.copy_from_slice(&stage);
            }
        }
        let mut err = 0.0f64;
        for i in 0..dim {
            let mut e = 0.0;
            for (s, ks) in k.iter().enumerate() {
                e += E[s] * ks[i];
            }
            let scale = tol.absolute + tol.relative * y[i].abs().max(y_new[i].abs());
            err = err.max((h * e).abs() / scale);
        }
        if !err.is_finite() {
            return Err(Error::Numerical(format!("non-finite error estimate at t = {t}")));
        }
        if err <= 1.0 {
            t = if last { t_end } else { t + h };
            std::mem::swap(&mut y, &mut y_new);
            // First-same-as-last: the final stage is the next step's first.
            let (first, rest) = k.split_at_mut(6);
            first[0].copy_from_slice(&rest[0]);
            steps += 1;
        } else {
            rejected += 1;
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h *= factor;
        if h <= f64::EPSILON * t.max(1.0) {
            return Err(Error::Numerical(format!("step size underflow at t = {t}")));
        }
    }
    Ok(y)
}
