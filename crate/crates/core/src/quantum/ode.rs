//! Dormand–Prince 5(4) integrator with dense output for complex state vectors.

use crate::error::{Error, Result};

use super::C;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; chosen automatically when `None`.
    pub h_init: Option<f64>,
    pub h_max: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-11,
            h_init: None,
            h_max: f64::INFINITY,
            h_min: 1e-12,
            max_steps: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

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
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const C2: f64 = 0.2;
const C3: f64 = 0.3;
const C4: f64 = 0.8;
const C5: f64 = 8.0 / 9.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Integrate `dy/dt = f(t, y)` from `t0` through every time in `outputs`
/// (non-decreasing, all ≥ `t0`), calling `on_output(k, t_k, y(t_k))` with the
/// dense-output interpolant. Returns the state at the last output time.
pub fn dopri5<F, O>(
    mut f: F,
    t0: f64,
    y0: &[C],
    outputs: &[f64],
    opts: &OdeOptions,
    mut on_output: O,
) -> Result<(Vec<C>, OdeStats)>
where
    F: FnMut(f64, &[C], &mut [C]) -> Result<()>,
    O: FnMut(usize, f64, &[C]) -> Result<()>,
{
    let n = y0.len();
    let mut stats = OdeStats::default();
    let mut y = y0.to_vec();
    if outputs.is_empty() {
        return Ok((y, stats));
    }
    let t_end = *outputs.last().unwrap();
    if outputs[0] < t0 || outputs.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Domain("output times must be sorted and >= t0".into()));
    }
    let mut next_out = 0;
    while next_out < outputs.len() && outputs[next_out] <= t0 {
        on_output(next_out, outputs[next_out], &y)?;
        next_out += 1;
    }
    if next_out == outputs.len() {
        return Ok((y, stats));
    }

    let mut k1 = vec![C::default(); n];
    let mut k2 = k1.clone();
    let mut k3 = k1.clone();
    let mut k4 = k1.clone();
    let mut k5 = k1.clone();
    let mut k6 = k1.clone();
    let mut k7 = k1.clone();
    let mut tmp = k1.clone();
    let mut ynew = k1.clone();
    let mut dense = [k1.clone(), k1.clone(), k1.clone(), k1.clone(), k1.clone()];
    let mut yout = k1.clone();

    let mut t = t0;
    f(t, &y, &mut k1)?;
    stats.evaluations += 1;

    let span = t_end - t0;
    let mut h = match opts.h_init {
        Some(h) => h,
        None => initial_step(&mut f, t, &y, &k1, opts, &mut stats)?,
    }
    .min(opts.h_max)
    .min(span);
    let mut fac_old: f64 = 1e-4;

    loop {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(Error::TooManySteps {
                steps: opts.max_steps,
                t_target: t_end,
            });
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        for i in 0..n {
            tmp[i] = y[i] + k1[i] * (h * A21);
        }
        f(t + C2 * h, &tmp, &mut k2)?;
        for i in 0..n {
            tmp[i] = y[i] + (k1[i] * A31 + k2[i] * A32) * h;
        }
        f(t + C3 * h, &tmp, &mut k3)?;
        for i in 0..n {
            tmp[i] = y[i] + (k1[i] * A41 + k2[i] * A42 + k3[i] * A43) * h;
        }
        f(t + C4 * h, &tmp, &mut k4)?;
        for i in 0..n {
            tmp[i] = y[i] + (k1[i] * A51 + k2[i] * A52 + k3[i] * A53 + k4[i] * A54) * h;
        }
        f(t + C5 * h, &tmp, &mut k5)?;
        for i in 0..n {
            tmp[i] = y[i]
                + (k1[i] * A61 + k2[i] * A62 + k3[i] * A63 + k4[i] * A64 + k5[i] * A65) * h;
        }
        let t_new = if last { t_end } else { t + h };
        f(t_new, &tmp, &mut k6)?;
        for i in 0..n {
            ynew[i] = y[i]
                + (k1[i] * A71 + k3[i] * A73 + k4[i] * A74 + k5[i] * A75 + k6[i] * A76) * h;
        }
        f(t_new, &ynew, &mut k7)?;
        stats.evaluations += 6;

        let mut err = 0.0;
        for i in 0..n {
            let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7)
                * h;
            let sk = opts.atol + opts.rtol * y[i].norm().max(ynew[i].norm());
            err += (e.norm() / sk).powi(2);
        }
        let err = (err / n.max(1) as f64).sqrt();

        if err <= 1.0 {
            stats.accepted += 1;
            for i in 0..n {
                let dy = ynew[i] - y[i];
                let bspl = k1[i] * h - dy;
                dense[0][i] = y[i];
                dense[1][i] = dy;
                dense[2][i] = bspl;
                dense[3][i] = dy - k7[i] * h - bspl;
                dense[4][i] =
                    (k1[i] * D1 + k3[i] * D3 + k4[i] * D4 + k5[i] * D5 + k6[i] * D6 + k7[i] * D7)
                        * h;
            }
            while next_out < outputs.len() && (outputs[next_out] <= t_new || last) {
                let to = outputs[next_out];
                if to == t_new {
                    on_output(next_out, to, &ynew)?;
                } else {
                    let th = (to - t) / h;
                    let th1 = 1.0 - th;
                    for i in 0..n {
                        yout[i] = dense[0][i]
                            + (dense[1][i]
                                + (dense[2][i] + (dense[3][i] + dense[4][i] * th1) * th) * th1)
                                * th;
                    }
                    on_output(next_out, to, &yout)?;
                }
                next_out += 1;
            }
            std::mem::swap(&mut y, &mut ynew);
            std::mem::swap(&mut k1, &mut k7);
            t = t_new;
            if last || next_out == outputs.len() {
                return Ok((y, stats));
            }
            // PI step-size control (Hairer's beta = 0.04).
            let fac11 = err.max(1e-16).powf(0.2 - 0.04 * 0.75);
            let fac = (fac11 / fac_old.powf(0.04) / 0.9).clamp(0.1, 5.0);
            fac_old = err.max(1e-4);
            h = (h / fac).min(opts.h_max);
        } else {
            stats.rejected += 1;
            let fac = (err.powf(0.2) / 0.9).min(10.0);
            h /= fac;
        }
        if h < opts.h_min {
            return Err(Error::StepUnderflow { t, h });
        }
    }
}

fn initial_step<F>(
    f: &mut F,
    t: f64,
    y: &[C],
    f0: &[C],
    opts: &OdeOptions,
    stats: &mut OdeStats,
) -> Result<f64>
where
    F: FnMut(f64, &[C], &mut [C]) -> Result<()>,
{
    let n = y.len();
    let sk: Vec<f64> = y.iter().map(|v| opts.atol + opts.rtol * v.norm()).collect();
    let rms = |v: &[C]| {
        (v.iter().zip(&sk).map(|(a, s)| (a.norm() / s).powi(2)).sum::<f64>() / n.max(1) as f64)
            .sqrt()
    };
    let d0 = rms(y);
    let d1 = rms(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(opts.h_max);
    let y1: Vec<C> = y.iter().zip(f0).map(|(a, b)| a + b * h0).collect();
    let mut f1 = vec![C::default(); n];
    f(t + h0, &y1, &mut f1)?;
    stats.evaluations += 1;
    let diff: Vec<C> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    Ok((100.0 * h0).min(h1))
}
