//! Truncated periodic sums of bump units ("waves").
//!
//! The raw wave is `F⁽ᵐ⁾(x) = Σ_{|k|≤m} ψ(x − kθ)`; the emitted wave is
//! `scale · F⁽ᵐ⁾(x) + offset`, rescaled so that it stays inside `[−1, 1]`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activation::{tail_integral, BumpUnit, Gate};
use crate::dist::InputDist1D;
use crate::error::{invalid, Error, Result};
use crate::quad;
use crate::seed::{chunks, stream_rng};

/// Largest truncation half-width `choose_truncation` will return.
pub const DEFAULT_M_CAP: usize = 100_000;
/// Default minimum variance of the emitted wave over one period.
pub const DEFAULT_V_MIN: f64 = 1e-3;
/// Default constant in the shift-effect bound.
pub const DEFAULT_SHIFT_C: f64 = 4.0;
/// Grid points per period used for sup estimation.
const SUP_GRID_PER_PERIOD: usize = 512;
/// Grid points per period used for defect estimation.
const DEFECT_GRID_PER_PERIOD: usize = 64;
const DEFECT_GRID_MAX: usize = 400_000;
/// Relative size below which remaining exponentially decaying terms are dropped.
const EARLY_STOP_REL: f64 = 1e-20;
const VARIANCE_TOL: f64 = 1e-13;

/// A truncated wave with its output calibration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveSpec {
    pub psi: BumpUnit,
    pub theta: f64,
    pub m: usize,
    pub scale: f64,
    pub offset: f64,
    /// Measured `sup |F⁽ᵐ⁾|`.
    pub sup_raw: f64,
}

impl WaveSpec {
    /// Raw `F⁽ᵐ⁾(x)`.
    #[inline]
    pub fn raw(&self, x: f64) -> f64 {
        let m = self.m as i64;
        sum_range(&self.psi, self.theta, x.abs(), -m, m)
    }

    /// Emitted value `scale · F⁽ᵐ⁾(x) + offset`.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.scale * self.raw(x) + self.offset
    }

    /// The same wave without rescaling (scale 1, offset 0).
    pub fn with_raw_scaling(mut self) -> Self {
        self.scale = 1.0;
        self.offset = 0.0;
        self
    }

    /// Upper bound `‖ψ‖₁/θ + sup ψ` on `sup F⁽ᵐ⁾` for a nonnegative
    /// unimodal bump.
    pub fn sup_bound(&self) -> f64 {
        self.psi.l1_norm / self.theta + self.psi.eval(0.0)
    }

    /// Ratio `sup|F⁽ᵐ⁾| / (‖ψ‖₁/θ)`.
    pub fn sup_constant(&self) -> f64 {
        self.sup_raw * self.theta / self.psi.l1_norm
    }

    /// Number of hidden units needed to compute the wave exactly.
    pub fn hidden_units(&self) -> usize {
        self.psi.terms.len() * (2 * self.m + 1)
    }

    /// Kinks of the raw wave inside `(lo, hi)`.
    pub(crate) fn kinks_in(&self, lo: f64, hi: f64) -> Vec<f64> {
        let base = self.psi.kinks_symmetric();
        if base.is_empty() {
            return Vec::new();
        }
        let m = self.m as i64;
        let mut out = Vec::new();
        for k in -m..=m {
            let c = k as f64 * self.theta;
            if c + base[base.len() - 1] <= lo || c + base[0] >= hi {
                continue;
            }
            out.extend(base.iter().map(|b| c + b).filter(|&p| p > lo && p < hi));
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// Fails when the emitted variance over one period is below `v_min`.
    pub fn check_variance(&self, v_min: f64) -> Result<f64> {
        let v = wave_variance(self)?;
        if v < v_min {
            return Err(invalid(format!("wave variance {v:.3e} is below the required {v_min:.3e}")));
        }
        Ok(v)
    }
}

/// `Σ_{k=klo}^{khi} ψ(x − kθ)`, adding terms nearest to `x` first.
fn sum_range(psi: &BumpUnit, theta: f64, x: f64, klo: i64, khi: i64) -> f64 {
    if klo > khi {
        return 0.0;
    }
    let early_stop = psi.kind.gate != Gate::Softsign;
    let k0 = ((x / theta).round() as i64).clamp(klo, khi);
    let term = |k: i64| psi.eval(x - k as f64 * theta);
    let dist = |k: i64| (x - k as f64 * theta).abs();
    let mut sum = term(k0);
    let (mut lo, mut hi) = (k0 - 1, k0 + 1);
    while lo >= klo || hi <= khi {
        let take_hi = if lo < klo {
            true
        } else if hi > khi {
            false
        } else {
            dist(hi) <= dist(lo)
        };
        let k = if take_hi {
            hi += 1;
            hi - 1
        } else {
            lo -= 1;
            lo + 1
        };
        let t = term(k);
        if early_stop && t.abs() <= EARLY_STOP_REL * sum.abs() {
            break;
        }
        sum += t;
    }
    sum
}

/// Smallest `m` with `tail(mθ/2) < 4δr` and `mθ/2 ≥ M`, capped at
/// [`DEFAULT_M_CAP`].
pub fn choose_truncation(psi: &BumpUnit, theta: f64, big_m: f64, delta: f64) -> Result<usize> {
    choose_truncation_capped(psi, theta, big_m, delta, DEFAULT_M_CAP)
}

/// [`choose_truncation`] with an explicit cap.
pub fn choose_truncation_capped(psi: &BumpUnit, theta: f64, big_m: f64, delta: f64, cap: usize) -> Result<usize> {
    if !(big_m > 0.0) || !(delta > 0.0) {
        return Err(invalid(format!("M and delta must be positive, got M={big_m}, delta={delta}")));
    }
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(invalid(format!("theta must be positive and finite, got {theta}")));
    }
    let target = 4.0 * delta * psi.essential_radius;
    let m_range = (2.0 * big_m / theta).ceil();
    if m_range > cap as f64 {
        return Err(Error::ResourceLimit(format!("truncation needs m = {m_range} to cover M = {big_m}, above the cap {cap}")));
    }
    let m_range = m_range as usize;
    let ok = |m: usize| -> Result<bool> { Ok(tail_integral(psi, m as f64 * theta / 2.0)? < target) };

    if ok(m_range)? {
        return Ok(m_range);
    }
    // Tail mass is nonincreasing in m: double, then bisect.
    let mut lo = m_range;
    let mut hi = m_range.max(1);
    loop {
        hi = hi.saturating_mul(2);
        if hi > cap {
            if ok(cap)? {
                hi = cap;
                break;
            }
            return Err(Error::ResourceLimit(format!(
                "truncation needs m {} for delta = {delta}, above the cap {cap}",
                required_m_hint(psi, theta, target)
            )));
        }
        if ok(hi)? {
            break;
        }
        lo = hi;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

fn required_m_hint(psi: &BumpUnit, theta: f64, target: f64) -> String {
    match psi.kind.gate {
        // tail(a) = 2 ln(1 + 2/a) for a ≥ 16.
        Gate::Softsign => {
            let a = 2.0 / (0.5 * target).exp_m1();
            format!("≈ {:.0}", (2.0 * a / theta).ceil())
        }
        _ => "beyond the cap".to_string(),
    }
}

/// Builds the wave and rescales it by its measured sup so the emitted range
/// is `[0, 1]`.
pub fn make_wave(psi: &BumpUnit, theta: f64, m: usize) -> Result<WaveSpec> {
    if !(psi.l1_norm >= 1e-12) {
        return Err(invalid(format!("degenerate bump with L1 norm {}", psi.l1_norm)));
    }
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(invalid(format!("theta must be positive and finite, got {theta}")));
    }
    let mut w = WaveSpec { psi: psi.clone(), theta, m, scale: 1.0, offset: 0.0, sup_raw: f64::NAN };
    let sup = central_sup(&w);
    if !(sup > 0.0 && sup.is_finite()) {
        return Err(Error::NumericFailure(format!("wave sup estimate {sup} is not positive")));
    }
    w.sup_raw = sup;
    // Guard against the refinement missing the true peak by a few ulps.
    w.scale = (1.0 - 1e-12) / sup;
    Ok(w)
}

/// Wave with period `4 · essential_radius`.
pub fn make_canonical_wave(psi: &BumpUnit, m: usize) -> Result<WaveSpec> {
    make_wave(psi, 4.0 * psi.essential_radius, m)
}

/// `sup F⁽ᵐ⁾` over `[0, θ/2]`. For a nonnegative bump that is nonincreasing
/// in `|x|`, every other period is dominated by the central one.
fn central_sup(w: &WaveSpec) -> f64 {
    let half = 0.5 * w.theta;
    let mut xs: Vec<f64> = (0..=SUP_GRID_PER_PERIOD / 2)
        .map(|i| half * i as f64 / (SUP_GRID_PER_PERIOD / 2) as f64)
        .collect();
    xs.extend(w.kinks_in(0.0, half));
    xs.sort_by(f64::total_cmp);
    let vals: Vec<f64> = xs.iter().map(|&x| w.raw(x)).collect();
    let (best, &best_val) = vals
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("grid is nonempty");
    let lo = xs[best.saturating_sub(1)];
    let hi = xs[(best + 1).min(xs.len() - 1)];
    best_val.max(golden_max(|x| w.raw(x), lo, hi))
}

/// Golden-section search for the maximum of a unimodal `f` on `[a, b]`.
fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    let mut best = fc.max(fd);
    for _ in 0..100 {
        if (b - a).abs() <= 1e-15 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
        best = best.max(fc).max(fd);
    }
    best
}

/// Variance of the emitted wave for `x ~ U(0, θ)`.
pub fn wave_variance(w: &WaveSpec) -> Result<f64> {
    let mut pts = vec![0.0];
    pts.extend(w.kinks_in(0.0, w.theta));
    pts.push(w.theta);
    let tol = VARIANCE_TOL * w.theta;
    let mean = quad::integrate_with_breaks(|x| w.raw(x), &pts, tol)? / w.theta;
    let var = quad::integrate_with_breaks(|x| (w.raw(x) - mean).powi(2), &pts, tol * mean.abs().max(1e-3))? / w.theta;
    Ok(w.scale * w.scale * var)
}

/// `∫_I |F⁽ᵐ⁾|` over the period `I = [a, a + θ]`.
pub fn period_mass(w: &WaveSpec, a: f64) -> Result<f64> {
    let mut pts = vec![a];
    pts.extend(w.kinks_in(a, a + w.theta));
    pts.push(a + w.theta);
    quad::integrate_with_breaks(|x| w.raw(x).abs(), &pts, VARIANCE_TOL * w.theta)
}

/// Reference truncation used as the periodic oracle on `[−M, M]`.
pub fn reference_m(w: &WaveSpec, big_m: f64) -> usize {
    (4 * w.m).max(w.m + (4.0 * big_m / w.theta).ceil() as usize)
}

/// `sup_{|x|≤M} |F⁽ᵐ⁾(x) − F⁽ᵐʳᵉᶠ⁾(x)|` in raw units, over a grid of at least
/// 64 points per period.
pub fn quasiperiodicity_defect(w: &WaveSpec, big_m: f64) -> Result<f64> {
    if !(big_m > 0.0 && big_m.is_finite()) {
        return Err(invalid(format!("M must be positive and finite, got {big_m}")));
    }
    let m_ref = reference_m(w, big_m) as i64;
    let m = w.m as i64;
    let points = ((DEFECT_GRID_PER_PERIOD as f64 * big_m / w.theta).ceil() as usize).clamp(1024, DEFECT_GRID_MAX);
    let worst = (0..=points)
        .into_par_iter()
        .map(|i| {
            let x = big_m * i as f64 / points as f64;
            sum_range(&w.psi, w.theta, x, m + 1, m_ref) + sum_range(&w.psi, w.theta, x, -m_ref, -m - 1)
        })
        .reduce(|| 0.0, f64::max);
    Ok(worst)
}

/// Monte Carlo comparison of `E φ(x − z)` with `E φ(x)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftEffect {
    pub effect: f64,
    pub bound: f64,
    /// Defect of the emitted wave on `[−mθ/2, mθ/2]`.
    pub delta_meas: f64,
    pub mean_abs: f64,
}

/// Estimates `|E φ(x − z) − E φ(x)|` with common random numbers and the
/// bound `C · (δ + (θ/σ) · E|φ|)`.
pub fn shift_effect(w: &WaveSpec, dist: &InputDist1D, z: f64, n_mc: usize, seed: u64, c: f64) -> Result<ShiftEffect> {
    if n_mc < 10_000 {
        return Err(invalid(format!("shift effect needs at least 10^4 samples, got {n_mc}")));
    }
    if !z.is_finite() {
        return Err(invalid("shift must be finite"));
    }
    let parts: Vec<(f64, f64)> = chunks(n_mc)
        .into_par_iter()
        .map(|(stream, range)| {
            let mut rng = stream_rng(seed, stream);
            let (mut diff, mut abs) = (0.0, 0.0);
            for _ in range {
                let x = dist.sample(&mut rng);
                let base = w.eval(x);
                diff += w.eval(x - z) - base;
                abs += base.abs();
            }
            (diff, abs)
        })
        .collect();
    let (diff, abs) = parts.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
    let effect = (diff / n_mc as f64).abs();
    let mean_abs = abs / n_mc as f64;
    let big_m = (w.m as f64 * w.theta / 2.0).max(w.theta / 2.0);
    let delta_meas = w.scale * quasiperiodicity_defect(w, big_m)?;
    let bound = c * (delta_meas + w.theta / dist.std_dev() * mean_abs);
    Ok(ShiftEffect { effect, bound, delta_meas, mean_abs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::{logistic, make_bump, ActivationKind};
    use proptest::prelude::*;

    fn bump(gate: Gate, s: f64) -> BumpUnit {
        make_bump(ActivationKind::new(gate, s).unwrap()).unwrap()
    }

    /// The sigmoid wave with period 4/s written out term by term.
    fn literal_sigmoid_wave(s: f64, m: i64, x: f64) -> f64 {
        let mut v = -(2 * m + 1) as f64;
        for k in -m..=m {
            let k = k as f64;
            v += logistic(s * x - 4.0 * k + 1.0) + logistic(-s * x + 4.0 * k + 1.0);
        }
        v
    }

    #[test]
    fn single_sigmoid_bump_at_zero() {
        let w = make_wave(&bump(Gate::Sigmoid, 1.0), 4.0, 0).unwrap();
        let e = std::f64::consts::E;
        assert!((w.raw(0.0) - (e - 1.0) / (e + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn matches_literal_sigmoid_sum() {
        for (s, m) in [(1.0, 3), (0.5, 5), (2.0, 0)] {
            let w = make_wave(&bump(Gate::Sigmoid, s), 4.0 / s, m as usize).unwrap();
            for i in 0..400 {
                let x = -30.0 + 0.15 * i as f64 + 0.01;
                let lit = literal_sigmoid_wave(s, m, x);
                assert!((w.raw(x) - lit).abs() <= 1e-12, "s={s} m={m} x={x}: {} vs {lit}", w.raw(x));
            }
        }
    }

    #[test]
    fn relu_m0_is_the_tent() {
        let psi = bump(Gate::Relu, 2.0);
        let w = make_canonical_wave(&psi, 0).unwrap();
        for i in 0..=100 {
            let x = -w.theta / 2.0 + w.theta * i as f64 / 100.0;
            assert_eq!(w.raw(x), (1.0 - 2.0 * x.abs()).max(0.0));
        }
    }

    #[test]
    fn emitted_range_within_unit_interval() {
        for (gate, s) in [(Gate::Sigmoid, 1.0), (Gate::Relu, 0.7), (Gate::Softplus, 3.0), (Gate::Softsign, 1.0)] {
            let w = make_canonical_wave(&bump(gate, s), 6).unwrap();
            let span = (w.m as f64 + 2.0) * w.theta;
            let worst = (0..100_000)
                .map(|i| w.eval(-span + 2.0 * span * i as f64 / 99_999.0).abs())
                .fold(0.0, f64::max);
            assert!(worst <= 1.0, "{gate:?}: {worst}");
            assert!(worst > 0.999, "{gate:?}: {worst}");
        }
    }

    #[test]
    fn sup_respects_bound() {
        for gate in [Gate::Sigmoid, Gate::Relu, Gate::Softplus, Gate::Softsign] {
            let w = make_canonical_wave(&bump(gate, 1.0), 10).unwrap();
            assert!(w.sup_raw <= w.sup_bound() * (1.0 + 1e-12), "{gate:?}");
            assert!(w.sup_constant() > 0.0);
        }
    }

    #[test]
    fn far_outside_support_is_tiny() {
        let psi = bump(Gate::Sigmoid, 1.0);
        let w = make_wave(&psi, 4.0, 2).unwrap();
        for x in [3.0f64 * 4.0 + 10.5, 3.0 * 4.0 + 20.0, -40.0] {
            let bound = 2.0 * tail_integral(&psi, x.abs() - 8.0).unwrap() * w.scale;
            assert!(w.eval(x).abs() < bound, "x={x}");
        }
        assert!(w.eval(32.0).abs() < 1e-6);
    }

    #[test]
    fn telescoping_shift_bound() {
        let psi = bump(Gate::Sigmoid, 1.0);
        let w = make_wave(&psi, 4.0, 8).unwrap();
        let bound = 2.0 * tail_integral(&psi, 7.0 * 4.0 / 2.0).unwrap();
        for i in 0..50 {
            let x = -2.0 + 0.08 * i as f64;
            assert!((w.raw(x + 4.0) - w.raw(x)).abs() <= bound);
        }
    }

    #[test]
    fn truncation_relu_covers_range_only() {
        let psi = bump(Gate::Relu, 1.0);
        let theta = 4.0 * psi.essential_radius;
        for (big_m, delta) in [(10.0, 1e-9), (3.0, 0.5), (0.1, 1e3)] {
            let m = choose_truncation(&psi, theta, big_m, delta).unwrap();
            assert_eq!(m, (2.0 * big_m / theta).ceil() as usize);
        }
    }

    #[test]
    fn truncation_sigmoid_satisfies_postcondition_minimally() {
        let psi = bump(Gate::Sigmoid, 1.0);
        let theta = 4.0 * psi.essential_radius;
        let (big_m, delta) = (10.0, 1e-4);
        let m = choose_truncation(&psi, theta, big_m, delta).unwrap();
        let target = 4.0 * delta * psi.essential_radius;
        let ok = |m: usize| tail_integral(&psi, m as f64 * theta / 2.0).unwrap() < target && m as f64 * theta / 2.0 >= big_m;
        assert!(ok(m));
        assert!(!ok(m - 1));
        // Exponential tail inverted by hand: 2·e·e^{-a}·2 ≥ tail(a).
        let a_needed = (4.0 * std::f64::consts::E / target).ln();
        assert!(m as f64 * theta / 2.0 <= a_needed.max(big_m) + theta);
    }

    #[test]
    fn truncation_huge_delta_is_range_bound() {
        let psi = bump(Gate::Softplus, 2.0);
        let theta = 4.0 * psi.essential_radius;
        assert_eq!(choose_truncation(&psi, theta, 5.0, 1e12).unwrap(), (10.0 / theta).ceil() as usize);
    }

    #[test]
    fn truncation_cap_is_resource_limit() {
        let psi = bump(Gate::Softsign, 1.0);
        let theta = 4.0 * psi.essential_radius;
        let err = choose_truncation_capped(&psi, theta, 1.0, 1e-9, 1000).unwrap_err();
        assert!(matches!(err, Error::ResourceLimit(_)), "{err}");
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn variance_relu_closed_form() {
        for s in [0.5, 1.0, 3.0] {
            let psi = bump(Gate::Relu, s);
            let w = make_canonical_wave(&psi, 20).unwrap();
            let th = w.theta;
            // Non-overlapping tents: E F = 1/(sθ), E F² = 2/(3sθ).
            let raw_var = 2.0 / (3.0 * s * th) - 1.0 / (s * s * th * th);
            let expect = w.scale * w.scale * raw_var;
            let got = wave_variance(&w).unwrap();
            assert!((got - expect).abs() <= 1e-8, "s={s}: {got} vs {expect}");
        }
    }

    #[test]
    fn variance_sigmoid_positive_and_stable_in_m() {
        let psi = bump(Gate::Sigmoid, 1.0);
        let theta = 4.0 * psi.essential_radius;
        let m0 = choose_truncation(&psi, theta, 10.0, 1e-4).unwrap();
        let v0 = wave_variance(&make_wave(&psi, theta, m0).unwrap()).unwrap();
        assert!(v0 > DEFAULT_V_MIN);
        for m in [m0 + 1, 2 * m0, 4 * m0] {
            let v = wave_variance(&make_wave(&psi, theta, m).unwrap()).unwrap();
            assert!((v - v0).abs() <= 0.01 * v0, "m={m}: {v} vs {v0}");
        }
    }

    #[test]
    fn defect_zero_for_relu_inside_range() {
        let psi = bump(Gate::Relu, 1.0);
        let theta = 4.0 * psi.essential_radius;
        let big_m = 6.0;
        let m = choose_truncation(&psi, theta, big_m + 1.0, 1e-6).unwrap();
        let w = make_wave(&psi, theta, m).unwrap();
        assert_eq!(quasiperiodicity_defect(&w, big_m).unwrap(), 0.0);
    }

    #[test]
    fn defect_bounded_by_tail_and_decreasing() {
        let psi = bump(Gate::Sigmoid, 1.0);
        let theta = 4.0 * psi.essential_radius;
        let mut prev = f64::INFINITY;
        for m in 1..=10usize {
            let w = make_wave(&psi, theta, m).unwrap();
            let big_m = m as f64 * theta / 2.0;
            let d = quasiperiodicity_defect(&w, big_m).unwrap();
            let tail = tail_integral(&psi, big_m).unwrap();
            assert!(d <= 2.0 / theta * tail + 1e-12, "m={m}: {d} vs {}", 2.0 / theta * tail);
            assert!(d <= prev + 2.0 * tail / theta);
            prev = d;
        }
    }

    #[test]
    fn period_mass_at_most_l1() {
        for gate in [Gate::Sigmoid, Gate::Relu, Gate::Softplus] {
            let psi = bump(gate, 1.3);
            let w = make_canonical_wave(&psi, 30).unwrap();
            for a in [-0.3, 0.0, 1.7] {
                assert!(period_mass(&w, a).unwrap() <= psi.l1_norm + 1e-9, "{gate:?}");
            }
        }
    }

    #[test]
    fn shift_zero_has_no_effect() {
        let w = make_canonical_wave(&bump(Gate::Sigmoid, 1.0), 4).unwrap();
        let r = shift_effect(&w, &InputDist1D::gaussian(), 0.0, 20_000, 3, DEFAULT_SHIFT_C).unwrap();
        assert_eq!(r.effect, 0.0);
    }

    #[test]
    fn shift_effect_within_bound_gaussian() {
        let s = 4.0 / 0.25;
        let w = make_wave(&bump(Gate::Sigmoid, s), 0.25, 40).unwrap();
        for z in [-2.0, -0.5, 0.5, 2.0] {
            let r = shift_effect(&w, &InputDist1D::gaussian(), z, 1_000_000, 17, DEFAULT_SHIFT_C).unwrap();
            assert!(r.effect <= r.bound, "z={z}: {r:?}");
        }
    }

    #[test]
    fn shift_effect_grows_with_period() {
        // Under Gaussian inputs the effect is exponentially small in σ/θ and
        // drowns in sampling noise; Laplace inputs keep it measurable.
        let dist = InputDist1D::laplace();
        let median = |theta: f64| {
            let psi = bump(Gate::Sigmoid, 4.0 / theta);
            let w = make_wave(&psi, theta, (40.0 / theta) as usize).unwrap();
            let mut effects: Vec<f64> = [-2.0, -0.5, 0.5, 2.0]
                .iter()
                .map(|&z| shift_effect(&w, &dist, z, 2_000_000, 9, DEFAULT_SHIFT_C).unwrap().effect)
                .collect();
            effects.sort_by(f64::total_cmp);
            0.5 * (effects[1] + effects[2])
        };
        let ratio = median(2.0) / median(1.0);
        assert!((1.3..=3.0).contains(&ratio), "{ratio}");
    }

    proptest! {
        #[test]
        fn wave_is_even(x in -50.0f64..50.0, m in 0usize..6, gi in 0usize..4) {
            let gate = [Gate::Sigmoid, Gate::Relu, Gate::Softplus, Gate::Softsign][gi];
            let w = make_canonical_wave(&bump(gate, 0.8), m).unwrap();
            prop_assert_eq!(w.eval(x), w.eval(-x));
        }

        #[test]
        fn defect_matches_direct_difference(big_m in 0.5f64..20.0) {
            let psi = bump(Gate::Sigmoid, 1.0);
            let m = 4;
            let w = make_wave(&psi, 4.0 * psi.essential_radius, m).unwrap();
            let w_ref = make_wave(&psi, w.theta, reference_m(&w, big_m)).unwrap();
            let direct = (0..=200).map(|i| {
                let x = big_m * i as f64 / 200.0;
                (w.raw(x) - w_ref.raw(x)).abs()
            }).fold(0.0, f64::max);
            prop_assert!(direct <= quasiperiodicity_defect(&w, big_m).unwrap() * (1.0 + 1e-9) + 1e-15);
        }
    }
}
