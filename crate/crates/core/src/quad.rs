//! Adaptive Simpson quadrature.
//!
//! Integrands in this crate are smooth apart from a handful of known kinks
//! (ReLU bumps, soft indicators). Callers pass those kink locations as
//! breakpoints so that every panel handed to the adaptive rule is smooth.

use crate::error::{Error, Result};

/// Maximum number of interval subdivisions for a single integral.
pub const MAX_SUBDIVISIONS: usize = 20_000;

/// Default absolute tolerance.
pub const DEFAULT_TOL: f64 = 1e-8;

const INITIAL_PANELS: usize = 4;
const MAX_DEPTH: u32 = 60;

struct Panel {
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
}

#[inline]
fn simpson_rule(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    integrate_with_breaks(f, &[a, b], tol)
}

/// Integrates `f` over `[points[0], points[last]]`, treating every interior
/// point as a panel boundary. `points` must be nondecreasing.
///
/// The tolerance budget is shared between segments in proportion to their
/// length.
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(f: F, points: &[f64], tol: f64) -> Result<f64> {
    if points.len() < 2 {
        return Ok(0.0);
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("quadrature tolerance must be positive, got {tol}")));
    }
    if points.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(Error::InvalidParameter("quadrature breakpoints must be nondecreasing".into()));
    }
    let span = points[points.len() - 1] - points[0];
    if span == 0.0 {
        return Ok(0.0);
    }
    if !span.is_finite() {
        return Err(Error::InvalidParameter("quadrature interval must be finite".into()));
    }

    let mut stack: Vec<Panel> = Vec::with_capacity(64);
    for w in points.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if hi == lo {
            continue;
        }
        let seg_tol = tol * (hi - lo) / span;
        let h = (hi - lo) / INITIAL_PANELS as f64;
        for i in 0..INITIAL_PANELS {
            let a = lo + h * i as f64;
            let b = if i + 1 == INITIAL_PANELS { hi } else { lo + h * (i + 1) as f64 };
            let m = 0.5 * (a + b);
            let (fa, fm, fb) = (f(a), f(m), f(b));
            stack.push(Panel {
                a,
                b,
                fa,
                fm,
                fb,
                whole: simpson_rule(a, b, fa, fm, fb),
                tol: seg_tol / INITIAL_PANELS as f64,
                depth: 0,
            });
        }
    }

    let mut total = 0.0;
    let mut comp = 0.0;
    let mut subdivisions = 0usize;
    while let Some(p) = stack.pop() {
        let m = 0.5 * (p.a + p.b);
        let lm = 0.5 * (p.a + m);
        let rm = 0.5 * (m + p.b);
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson_rule(p.a, m, p.fa, flm, p.fm);
        let right = simpson_rule(m, p.b, p.fm, frm, p.fb);
        let delta = left + right - p.whole;
        if !delta.is_finite() {
            return Err(Error::NumericFailure(format!(
                "non-finite integrand on [{}, {}]",
                p.a, p.b
            )));
        }
        if delta.abs() <= 15.0 * p.tol || p.depth >= MAX_DEPTH {
            // Kahan summation keeps many tiny panel contributions exact.
            let y = left + right + delta / 15.0 - comp;
            let t = total + y;
            comp = (t - total) - y;
            total = t;
            continue;
        }
        subdivisions += 1;
        if subdivisions > MAX_SUBDIVISIONS {
            return Err(Error::NumericFailure(format!(
                "adaptive quadrature exceeded {MAX_SUBDIVISIONS} subdivisions on [{}, {}]",
                points[0],
                points[points.len() - 1]
            )));
        }
        let half_tol = 0.5 * p.tol;
        stack.push(Panel { a: p.a, b: m, fa: p.fa, fm: flm, fb: p.fm, whole: left, tol: half_tol, depth: p.depth + 1 });
        stack.push(Panel { a: m, b: p.b, fa: p.fm, fm: frm, fb: p.fb, whole: right, tol: half_tol, depth: p.depth + 1 });
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let v = integrate(|x| x * x * x - 2.0 * x, 0.0, 3.0, 1e-12).unwrap();
        assert!((v - (81.0 / 4.0 - 9.0)).abs() < 1e-12);
    }

    #[test]
    fn gaussian_integral() {
        let v = integrate(|x| (-x * x).exp(), -10.0, 10.0, 1e-12).unwrap();
        assert!((v - std::f64::consts::PI.sqrt()).abs() < 1e-11);
    }

    #[test]
    fn kink_at_breakpoint() {
        let f = |x: f64| (1.0 - x.abs()).max(0.0);
        let v = integrate_with_breaks(f, &[-3.0, -1.0, 0.0, 1.0, 3.0], 1e-12).unwrap();
        assert!((v - 1.0).abs() < 1e-14);
    }

    #[test]
    fn subdivision_cap_reports_numeric_failure() {
        let err = integrate(|x| (1.0 / x).sin(), 1e-9, 1.0, 1e-15).unwrap_err();
        assert!(matches!(err, Error::NumericFailure(_)));
    }

    #[test]
    fn rejects_bad_tolerance() {
        assert!(integrate(|x| x, 0.0, 1.0, 0.0).is_err());
    }
}
