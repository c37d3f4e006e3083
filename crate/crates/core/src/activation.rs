//! Activation gates and the integrable bump units built from them.
//!
//! A bump unit `ψ` is an affine combination of shifted and reflected gates,
//! `ψ(x) = Σ c_j σ(±x + b_j) + c_0`, chosen so that `ψ ∈ L¹(ℝ)`. All shipped
//! bumps are even, nonnegative and nonincreasing on `[0, ∞)`, which the
//! quadrature routines below rely on: every integral over `ℝ` is computed as
//! twice an integral over the positive half-line.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quad;

/// Absolute tolerance used for the cached L¹ norm.
pub const CACHE_L1_TOL: f64 = 1e-11;
/// Relative tolerance used for the cached essential radius.
pub const CACHE_RADIUS_TOL: f64 = 1e-10;
/// Fraction of the L¹ mass inside the essential radius.
pub const ESSENTIAL_MASS: f64 = 5.0 / 6.0;

const TAIL_TOL: f64 = 1e-13;
const SOFTSIGN_WINDOW: f64 = 16.0;

/// Gate family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gate {
    Sigmoid,
    Relu,
    Softplus,
    Softsign,
}

impl Gate {
    pub fn name(self) -> &'static str {
        match self {
            Gate::Sigmoid => "sigmoid",
            Gate::Relu => "relu",
            Gate::Softplus => "softplus",
            Gate::Softsign => "softsign",
        }
    }

    pub fn code(self) -> u32 {
        match self {
            Gate::Sigmoid => 0,
            Gate::Relu => 1,
            Gate::Softplus => 2,
            Gate::Softsign => 3,
        }
    }

    pub fn from_code(code: u32) -> Option<Gate> {
        match code {
            0 => Some(Gate::Sigmoid),
            1 => Some(Gate::Relu),
            2 => Some(Gate::Softplus),
            3 => Some(Gate::Softsign),
            _ => None,
        }
    }
}

impl std::str::FromStr for Gate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sigmoid" => Ok(Gate::Sigmoid),
            "relu" => Ok(Gate::Relu),
            "softplus" => Ok(Gate::Softplus),
            "softsign" => Ok(Gate::Softsign),
            other => Err(invalid(format!("unknown activation '{other}'"))),
        }
    }
}

/// A gate together with its sharpness `s`.
///
/// `Sigmoid(s)(z) = 1/(1+e^{-sz})`, `ReLU(s)(z) = max(0, sz)`,
/// `Softplus(s)(z) = log(1+e^{sz})`, `Softsign(z) = z/(|z|+1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivationKind {
    pub gate: Gate,
    pub sharpness: f64,
}

/// Numerically stable logistic function.
#[inline]
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `log(1 + e^z)`.
#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl ActivationKind {
    pub fn new(gate: Gate, sharpness: f64) -> Result<Self> {
        if !(sharpness > 0.0 && sharpness.is_finite()) {
            return Err(invalid(format!("sharpness must be positive and finite, got {sharpness}")));
        }
        Ok(ActivationKind { gate, sharpness })
    }

    pub fn sigmoid(s: f64) -> Result<Self> {
        Self::new(Gate::Sigmoid, s)
    }

    pub fn relu(s: f64) -> Result<Self> {
        Self::new(Gate::Relu, s)
    }

    pub fn softplus(s: f64) -> Result<Self> {
        Self::new(Gate::Softplus, s)
    }

    pub fn softsign() -> Self {
        ActivationKind { gate: Gate::Softsign, sharpness: 1.0 }
    }

    /// Evaluates the gate at `z`.
    #[inline]
    pub fn eval(&self, z: f64) -> f64 {
        let s = self.sharpness;
        match self.gate {
            Gate::Sigmoid => logistic(s * z),
            Gate::Relu => (s * z).max(0.0),
            Gate::Softplus => softplus(s * z),
            Gate::Softsign => z / (z.abs() + 1.0),
        }
    }

    /// Derivative of the gate at `z`. The ReLU subgradient at the kink is 0.
    #[inline]
    pub fn derivative(&self, z: f64) -> f64 {
        let s = self.sharpness;
        match self.gate {
            Gate::Sigmoid => {
                let p = logistic(s * z);
                s * p * (1.0 - p)
            }
            Gate::Relu => {
                if z > 0.0 {
                    s
                } else {
                    0.0
                }
            }
            Gate::Softplus => s * logistic(s * z),
            Gate::Softsign => {
                let d = z.abs() + 1.0;
                1.0 / (d * d)
            }
        }
    }
}

/// One gate term `coeff · σ(sign · x + shift)` of a bump unit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BumpTerm {
    pub coeff: f64,
    pub sign: f64,
    pub shift: f64,
}

/// An integrable affine combination of gates, with cached L¹ norm and
/// essential radius.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BumpUnit {
    pub kind: ActivationKind,
    pub terms: Vec<BumpTerm>,
    pub constant_offset: f64,
    pub l1_norm: f64,
    pub essential_radius: f64,
}

/// Builds the canonical bump for `kind` and caches its L¹ norm and
/// essential radius.
///
/// * Sigmoid: `σ(x + 1/s) + σ(1/s − x) − 1`
/// * ReLU, Softplus: `σ(x + 1/s) − σ(x) + σ(−x + 1/s) − σ(−x) − 1`
/// * Softsign: `σ(x + 1) + σ(−x + 1)`
pub fn make_bump(kind: ActivationKind) -> Result<BumpUnit> {
    let kind = ActivationKind::new(kind.gate, kind.sharpness)?;
    let inv_s = 1.0 / kind.sharpness;
    let t = |coeff: f64, sign: f64, shift: f64| BumpTerm { coeff, sign, shift };
    let (terms, constant_offset) = match kind.gate {
        Gate::Sigmoid => (vec![t(1.0, 1.0, inv_s), t(1.0, -1.0, inv_s)], -1.0),
        Gate::Relu | Gate::Softplus => (
            vec![t(1.0, 1.0, inv_s), t(-1.0, 1.0, 0.0), t(1.0, -1.0, inv_s), t(-1.0, -1.0, 0.0)],
            -1.0,
        ),
        Gate::Softsign => (vec![t(1.0, 1.0, 1.0), t(1.0, -1.0, 1.0)], 0.0),
    };
    let mut psi = BumpUnit { kind, terms, constant_offset, l1_norm: f64::NAN, essential_radius: f64::NAN };
    psi.l1_norm = l1_norm(&psi, CACHE_L1_TOL)?;
    psi.essential_radius = essential_radius(&psi, CACHE_RADIUS_TOL)?;
    Ok(psi)
}

impl BumpUnit {
    /// Evaluates `ψ(x)` through a cancellation-free closed form of the
    /// canonical combination.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let s = self.kind.sharpness;
        match self.kind.gate {
            Gate::Sigmoid => {
                let u = s * x.abs();
                logistic(1.0 - u) - logistic(-1.0 - u)
            }
            Gate::Relu => (1.0 - s * x.abs()).max(0.0),
            Gate::Softplus => {
                let u = s * x.abs();
                softplus(-u - 1.0) + softplus(1.0 - u) - 2.0 * softplus(-u)
            }
            Gate::Softsign => {
                let a = x.abs();
                if a > 1.0 {
                    2.0 / (a * (a + 2.0))
                } else {
                    (a + 1.0) / (a + 2.0) + (1.0 - a) / (2.0 - a)
                }
            }
        }
    }

    /// Evaluates `ψ(x)` literally from its gate terms.
    pub fn eval_terms(&self, x: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coeff * self.kind.eval(t.sign * x + t.shift))
            .sum::<f64>()
            + self.constant_offset
    }

    /// Kinks of `ψ` on `[0, ∞)`.
    fn kinks(&self) -> Vec<f64> {
        match self.kind.gate {
            Gate::Relu => vec![0.0, 1.0 / self.kind.sharpness],
            Gate::Softsign => vec![0.0, 1.0],
            Gate::Sigmoid | Gate::Softplus => vec![],
        }
    }

    /// Kinks of `ψ` over the whole line.
    pub fn kinks_symmetric(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.kinks().iter().flat_map(|&k| [-k, k]).collect();
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// End of the support on `[0, ∞)`, when compact.
    pub fn support_radius(&self) -> Option<f64> {
        match self.kind.gate {
            Gate::Relu => Some(1.0 / self.kind.sharpness),
            _ => None,
        }
    }

    /// Distance beyond which the two-sided tail mass is below `tol / 10`.
    /// Softsign tails are handled in closed form instead.
    fn tail_window(&self, tol: f64) -> f64 {
        let s = self.kind.sharpness;
        let e = std::f64::consts::E;
        match self.kind.gate {
            // ψ(x) ≤ e · e^{-sx}
            Gate::Sigmoid => ((20.0 * e / (s * tol)).ln() / s).max(1.0 / s),
            // ψ(x) ≤ (e + 1/e) · e^{-sx}
            Gate::Softplus => ((20.0 * (e + 1.0 / e) / (s * tol)).ln() / s).max(1.0 / s),
            Gate::Relu => 1.0 / s,
            Gate::Softsign => SOFTSIGN_WINDOW,
        }
    }

    /// Closed-form two-sided tail mass beyond `a` not covered by quadrature.
    fn analytic_tail(&self, a: f64) -> f64 {
        match self.kind.gate {
            // ψ(x) = 2/(x(x+2)) for x ≥ 1.
            Gate::Softsign => 2.0 * ((a + 2.0) / a).ln(),
            _ => 0.0,
        }
    }

    /// `∫_lo^hi |ψ|` for `0 ≤ lo ≤ hi`, splitting at kinks.
    fn half_line_mass(&self, lo: f64, hi: f64, tol: f64) -> Result<f64> {
        if hi <= lo {
            return Ok(0.0);
        }
        let mut pts = vec![lo];
        pts.extend(self.kinks().into_iter().filter(|&k| k > lo && k < hi));
        pts.push(hi);
        quad::integrate_with_breaks(|x| self.eval(x).abs(), &pts, tol)
    }

    /// `∫_{-r}^{r} |ψ|`.
    pub fn central_mass(&self, r: f64, tol: f64) -> Result<f64> {
        Ok(2.0 * self.half_line_mass(0.0, r.max(0.0), 0.5 * tol)?)
    }
}

/// `‖ψ‖₁` to absolute accuracy `tol`.
pub fn l1_norm(psi: &BumpUnit, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(invalid(format!("tolerance must be positive, got {tol}")));
    }
    let w = psi.tail_window(tol);
    Ok(2.0 * psi.half_line_mass(0.0, w, 0.4 * tol)? + psi.analytic_tail(w))
}

/// The radius `r` with `∫_{-r}^{r}|ψ| = (5/6)‖ψ‖₁`, found by bisection on the
/// cumulative mass. `tol` is relative to the cached `‖ψ‖₁`.
pub fn essential_radius(psi: &BumpUnit, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(invalid(format!("tolerance must be positive, got {tol}")));
    }
    let l1 = psi.l1_norm;
    if !(l1 > 0.0) {
        return Err(invalid("essential radius requires a computed, positive L1 norm"));
    }
    let target = ESSENTIAL_MASS * l1;
    let step_tol = 1e-3 * tol * l1;

    // Bracket: grow hi until the mass passes the target.
    let mut lo = 0.0;
    let mut mass_lo = 0.0;
    let mut hi = match psi.kind.gate {
        Gate::Softsign => 1.0,
        _ => 1.0 / psi.kind.sharpness,
    };
    let mut mass_hi = 2.0 * psi.half_line_mass(0.0, hi, step_tol)?;
    let mut doublings = 0;
    while mass_hi < target {
        doublings += 1;
        if doublings > 64 {
            return Err(Error::NumericFailure(format!(
                "cumulative mass {mass_hi} never reached 5/6 of {l1}"
            )));
        }
        lo = hi;
        mass_lo = mass_hi;
        hi *= 2.0;
        mass_hi = mass_lo + 2.0 * psi.half_line_mass(lo, hi, step_tol)?;
    }

    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let mass_mid = mass_lo + 2.0 * psi.half_line_mass(lo, mid, step_tol)?;
        if (mass_mid - target).abs() <= 0.5 * tol * l1 {
            return Ok(mid);
        }
        if mass_mid < target {
            lo = mid;
            mass_lo = mass_mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            return Ok(0.5 * (lo + hi));
        }
    }
    Err(Error::NumericFailure("essential radius bisection did not converge".into()))
}

/// `∫_a^∞ (|ψ(x)| + |ψ(−x)|) dx` for `a ≥ 0`.
pub fn tail_integral(psi: &BumpUnit, a: f64) -> Result<f64> {
    if !(a >= 0.0) {
        return Err(invalid(format!("tail start must be nonnegative, got {a}")));
    }
    let upper = match psi.kind.gate {
        Gate::Relu => psi.tail_window(TAIL_TOL).max(a),
        Gate::Softsign => SOFTSIGN_WINDOW.max(a),
        Gate::Sigmoid | Gate::Softplus => a + psi.tail_window(TAIL_TOL),
    };
    Ok(2.0 * psi.half_line_mass(a, upper, 0.4 * TAIL_TOL)? + psi.analytic_tail(upper))
}

/// Largest ratio of `|ψ(x)|` to its local average `(1/2ε)∫_{x−ε}^{x+ε}|ψ|`
/// over `grid`. Points where both sides vanish contribute 0.
pub fn check_mean_bound(psi: &BumpUnit, grid: &[f64], eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(invalid(format!("eps must be positive, got {eps}")));
    }
    let kinks = psi.kinks_symmetric();
    let mut worst: f64 = 0.0;
    for &x in grid {
        let num = psi.eval(x).abs();
        let (lo, hi) = (x - eps, x + eps);
        let mut pts = vec![lo];
        pts.extend(kinks.iter().copied().filter(|&k| k > lo && k < hi));
        pts.push(hi);
        let local = quad::integrate_with_breaks(|t| psi.eval(t).abs(), &pts, 1e-12 * eps.max(1e-3))?;
        let den = local / (2.0 * eps);
        let ratio = if num == 0.0 {
            0.0
        } else if den <= 0.0 {
            f64::INFINITY
        } else {
            num / den
        };
        worst = worst.max(ratio);
    }
    Ok(worst)
}
