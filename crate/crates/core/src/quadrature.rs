//! Adaptive Simpson quadrature, used to check that the closed-form channel
//! conserves mass.

use crate::channel::{impulse_concentration, ChannelParams};
use crate::error::Result;

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    // Start from a few panels so a narrow peak is not missed by the first
    // three-point estimate.
    const PANELS: usize = 8;
    let h = (b - a) / PANELS as f64;
    (0..PANELS)
        .map(|i| {
            let lo = a + i as f64 * h;
            let hi = lo + h;
            let fa = f(lo);
            let fm = f(0.5 * (lo + hi));
            let fb = f(hi);
            let whole = h / 6.0 * (fa + 4.0 * fm + fb);
            simpson_step(&f, lo, hi, fa, fm, fb, whole, tol / PANELS as f64, 40)
        })
        .sum()
}

/// Total molecules of the closed-form plume at time `t`, integrated over a
/// box of ±`half_widths` standard deviations around the drifting centre.
pub fn mass_integral(p: &ChannelParams, t: f64, half_widths: f64) -> Result<f64> {
    // validates p and t
    impulse_concentration([0.0; 3], t, p)?;
    let sd = (2.0 * p.diffusivity * t).sqrt();
    let c = [p.drift[0] * t, p.drift[1] * t, p.drift[2] * t];
    let w = half_widths * sd;
    let tol = 1e-6 * p.molecules_per_burst.max(f64::MIN_POSITIVE);
    let density = |x: f64, y: f64, z: f64| impulse_concentration([x, y, z], t, p).unwrap_or(0.0);
    Ok(adaptive_simpson(
        |x| {
            adaptive_simpson(
                |y| adaptive_simpson(|z| density(x, y, z), c[2] - w, c[2] + w, tol),
                c[1] - w,
                c[1] + w,
                tol,
            )
        },
        c[0] - w,
        c[0] + w,
        tol,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        let v = adaptive_simpson(|x| x * x * x - 2.0 * x, 0.0, 2.0, 1e-12);
        assert!((v - 0.0).abs() < 1e-12);
        let v = adaptive_simpson(|x| x * x, -1.0, 2.0, 1e-12);
        assert!((v - 3.0).abs() < 1e-12);
    }

    #[test]
    fn integrates_gaussian() {
        let v = adaptive_simpson(|x| (-x * x).exp(), -10.0, 10.0, 1e-10);
        assert!((v - std::f64::consts::PI.sqrt()).abs() < 1e-8);
    }
}
