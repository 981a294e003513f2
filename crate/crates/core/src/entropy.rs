//! Entropy/pressure calculus: U, P, Q, R, Z, the McCann class, pressure
//! regularization, distortion coefficients and Green-function convexity
//! tools.
//!
//! The dictionary is `P(r) = r U'(r) - U(r)`, `Q(r) = P(r)/r`,
//! `R(r) = r P'(r) - P(r)`, `Z(r) = ∫_0^r P'(s)/√s ds`; the normalized
//! entropy is recovered from the pressure by `U(r) = r ∫_1^r P(s)/s² ds`.
//! A pressure is *regular* when `a <= P' <= 1/a` for some `a > 0`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::report::{CheckReport, Verdict, Witness};

/// Scalar function with derivative, used for custom pressures.
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Family {
    /// P(r) = r, U(r) = r log r.
    Linear,
    /// P(r) = r^{1-1/N}, U(r) = N r (1 - r^{-1/N}); not regular near 0.
    Power { n: f64 },
    /// P(r+eps) - P(eps) of the power family, extended linearly above `cap`.
    RegularizedPower { n: f64, eps: f64, cap: f64 },
    /// User-supplied pressure with derivative and regularity constant.
    Custom { p: ScalarFn, dp: ScalarFn, a: f64 },
}

/// Entropy model: the pressure `P` together with everything derived from it.
#[derive(Clone)]
pub struct EntropyModel {
    family: Family,
}

impl fmt::Debug for EntropyModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.family {
            Family::Linear => write!(f, "EntropyModel(linear)"),
            Family::Power { n } => write!(f, "EntropyModel(power, N={n})"),
            Family::RegularizedPower { n, eps, cap } => {
                write!(f, "EntropyModel(regularized power, N={n}, eps={eps}, M={cap})")
            }
            Family::Custom { a, .. } => write!(f, "EntropyModel(custom, a={a})"),
        }
    }
}

impl EntropyModel {
    /// Linear pressure `P(r) = r` (logarithmic entropy `U = r log r`).
    pub fn linear() -> Self {
        EntropyModel { family: Family::Linear }
    }

    /// Power family `U_N(r) = N r (1 - r^{-1/N})`, `P_N(r) = r^{1-1/N}`,
    /// `N > 1`.
    pub fn power(n: f64) -> Result<Self> {
        if !(n > 1.0) {
            return Err(Error::InvalidInput(format!("power family needs N > 1, got {n}")));
        }
        Ok(EntropyModel { family: Family::Power { n } })
    }

    /// Regularized power family, `0 < eps < cap`.
    pub fn regularized_power(n: f64, eps: f64, cap: f64) -> Result<Self> {
        EntropyModel::power(n)?.regularize(eps, cap)
    }

    /// Custom regular pressure: `p`, its derivative `dp`, and a regularity
    /// constant with `a <= p' <= 1/a` on the range of interest.
    pub fn custom(p: ScalarFn, dp: ScalarFn, a: f64) -> Result<Self> {
        if !(a > 0.0 && a <= 1.0) {
            return Err(Error::InvalidInput("regularity constant must satisfy 0 < a <= 1".into()));
        }
        Ok(EntropyModel { family: Family::Custom { p, dp, a } })
    }

    /// Pressure regularization `P_eps(r) = P(r+eps) - P(eps)` with linear
    /// extension above `cap`. For the linear family the shift cancels and the
    /// model is returned unchanged.
    pub fn regularize(&self, eps: f64, cap: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < cap) {
            return Err(Error::InvalidInput(format!(
                "regularization needs 0 < eps < M, got eps={eps}, M={cap}"
            )));
        }
        match &self.family {
            Family::Linear => Ok(self.clone()),
            Family::Power { n } => Ok(EntropyModel {
                family: Family::RegularizedPower { n: *n, eps, cap },
            }),
            Family::RegularizedPower { n, .. } => Ok(EntropyModel {
                family: Family::RegularizedPower { n: *n, eps, cap },
            }),
            Family::Custom { p, dp, .. } => {
                let (p0, dp0) = (p.clone(), dp.clone());
                let dp1 = dp.clone();
                let pe: ScalarFn = Arc::new(move |r: f64| {
                    if r <= cap {
                        p0(r + eps) - p0(eps)
                    } else {
                        p0(cap + eps) - p0(eps) + (r - cap) * dp0(cap + eps)
                    }
                });
                let dpe: ScalarFn =
                    Arc::new(move |r: f64| if r <= cap { dp1(r + eps) } else { dp1(cap + eps) });
                // Derivative range on [0, cap] sampled on a grid; P' is
                // continuous so this pins the regularity constant well
                // enough for solver safeguards.
                let mut lo = f64::INFINITY;
                let mut hi: f64 = 0.0;
                for k in 0..=2048 {
                    let r = cap * k as f64 / 2048.0;
                    let v = dpe(r);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                let a = lo.min(1.0 / hi);
                EntropyModel::custom(pe, dpe, a)
            }
        }
    }

    /// Pressure `P(r)`, extended oddly to negative arguments.
    pub fn p(&self, r: f64) -> f64 {
        if r < 0.0 {
            return -self.p(-r);
        }
        match &self.family {
            Family::Linear => r,
            Family::Power { n } => r.powf(1.0 - 1.0 / n),
            Family::RegularizedPower { n, eps, cap } => {
                let base = |s: f64| s.powf(1.0 - 1.0 / n);
                if r <= *cap {
                    base(r + eps) - base(*eps)
                } else {
                    base(cap + eps) - base(*eps)
                        + (r - cap) * (1.0 - 1.0 / n) * (cap + eps).powf(-1.0 / n)
                }
            }
            Family::Custom { p, .. } => p(r),
        }
    }

    /// Derivative `P'(r)` (even extension, consistent with the odd `P`).
    pub fn dp(&self, r: f64) -> f64 {
        let r = r.abs();
        match &self.family {
            Family::Linear => 1.0,
            Family::Power { n } => {
                let e = 1.0 - 1.0 / n;
                if r == 0.0 {
                    f64::INFINITY
                } else {
                    e * r.powf(-1.0 / n)
                }
            }
            Family::RegularizedPower { n, eps, cap } => {
                let e = 1.0 - 1.0 / n;
                let arg = if r <= *cap { r + eps } else { cap + eps };
                e * arg.powf(-1.0 / n)
            }
            Family::Custom { dp, .. } => dp(r),
        }
    }

    /// Normalized entropy `U(r) = r ∫_1^r P(s)/s² ds`, `U(1) = 0`.
    ///
    /// Closed form for the linear and power families; adaptive Simpson
    /// quadrature after the substitution `s = e^u` otherwise (the integrand
    /// has a `1/s` singularity at the origin).
    pub fn u(&self, r: f64) -> f64 {
        debug_assert!(r >= 0.0, "entropy evaluated at negative density");
        match &self.family {
            Family::Linear => {
                if r == 0.0 {
                    0.0
                } else {
                    r * r.ln()
                }
            }
            Family::Power { n } => {
                if r == 0.0 {
                    0.0
                } else {
                    n * r * (1.0 - r.powf(-1.0 / n))
                }
            }
            _ => {
                if r == 0.0 {
                    // U(0) = 0 because P(s) <= s/a makes s ∫ P/s² vanish.
                    return 0.0;
                }
                if (r - 1.0).abs() < 1e-300 {
                    return 0.0;
                }
                // r ∫_1^r P(s)/s² ds = r ∫_0^{ln r} P(e^u) e^{-u} du
                let integrand = |u: f64| self.p(u.exp()) * (-u).exp();
                r * adaptive_simpson(&integrand, 0.0, r.ln(), 1e-12)
            }
        }
    }

    /// `Q(r) = P(r)/r`, continuously extended by `P'(0)` at zero.
    pub fn q(&self, r: f64) -> f64 {
        match &self.family {
            Family::Linear => 1.0,
            Family::Power { n } => {
                if r == 0.0 {
                    f64::INFINITY
                } else {
                    r.powf(-1.0 / n)
                }
            }
            _ => {
                if r == 0.0 {
                    self.dp(0.0)
                } else {
                    self.p(r) / r
                }
            }
        }
    }

    /// Defect `R(r) = r P'(r) - P(r)`; McCann's class MC(N) is
    /// `R >= -P/N`.
    pub fn r_defect(&self, r: f64) -> f64 {
        match &self.family {
            Family::Linear => 0.0,
            Family::Power { n } => -self.p(r) / n,
            _ => r * self.dp(r) - self.p(r),
        }
    }

    /// `Z(r) = ∫_0^r P'(s)/√s ds` via the substitution `s = v²`; for regular
    /// pressures `2a√r <= Z(r) <= 2√r/a`.
    pub fn z(&self, r: f64) -> f64 {
        debug_assert!(r >= 0.0);
        if r == 0.0 {
            return 0.0;
        }
        match &self.family {
            Family::Linear => 2.0 * r.sqrt(),
            Family::Power { n } => {
                // ∫ (1-1/N) s^{-1/N-1/2} ds, finite only for N > 2.
                if *n > 2.0 {
                    let e = 0.5 - 1.0 / n;
                    (1.0 - 1.0 / n) / e * r.powf(e)
                } else {
                    f64::INFINITY
                }
            }
            _ => {
                let integrand = |v: f64| 2.0 * self.dp(v * v);
                adaptive_simpson(&integrand, 0.0, r.sqrt(), 1e-12)
            }
        }
    }

    /// Inverse pressure `P^{-1}(z)` (odd extension for negative arguments).
    ///
    /// Closed form for the linear and (regularized) power families; for
    /// custom pressures a safeguarded scalar Newton on the bracket
    /// `[a z, z/a]` provided by regularity.
    pub fn p_inv(&self, z: f64) -> f64 {
        if z < 0.0 {
            return -self.p_inv(-z);
        }
        match &self.family {
            Family::Linear => z,
            Family::Power { n } => z.powf(n / (n - 1.0)),
            Family::RegularizedPower { n, eps, cap } => {
                let e = 1.0 - 1.0 / n;
                let p_eps = eps.powf(e);
                let p_cap = (cap + eps).powf(e) - p_eps;
                if z <= p_cap {
                    (z + p_eps).powf(1.0 / e) - eps
                } else {
                    cap + (z - p_cap) / (e * (cap + eps).powf(-1.0 / n))
                }
            }
            Family::Custom { a, .. } => {
                if z == 0.0 {
                    return 0.0;
                }
                let (mut lo, mut hi) = (a * z, z / a);
                let mut r = z; // a <= P' <= 1/a keeps the true root inside
                for _ in 0..200 {
                    let val = self.p(r) - z;
                    if val.abs() <= 1e-15 * (1.0 + z.abs()) {
                        return r;
                    }
                    if val > 0.0 {
                        hi = r;
                    } else {
                        lo = r;
                    }
                    let step = val / self.dp(r);
                    r -= step;
                    if !(lo..=hi).contains(&r) {
                        r = 0.5 * (lo + hi);
                    }
                }
                r
            }
        }
    }

    /// Regularity constant `a` with `a <= P' <= 1/a`, or `None` for models
    /// that are not regular (pure power families).
    pub fn regularity(&self) -> Option<f64> {
        match &self.family {
            Family::Linear => Some(1.0),
            Family::Power { .. } => None,
            Family::RegularizedPower { n, eps, cap } => {
                let e = 1.0 - 1.0 / n;
                let hi = e * eps.powf(-1.0 / n);
                let lo = e * (cap + eps).powf(-1.0 / n);
                Some(lo.min(1.0 / hi))
            }
            Family::Custom { a, .. } => Some(*a),
        }
    }

    /// Range of `Q = P/r` over `(0, ∞)`: `Q(0) = P'(0)` down to the terminal
    /// slope. Used for `Λ = inf_r K Q(r)`.
    pub fn q_range(&self) -> (f64, f64) {
        match &self.family {
            Family::Linear => (1.0, 1.0),
            Family::Power { .. } => (0.0, f64::INFINITY),
            Family::RegularizedPower { n, eps, cap } => {
                // P concave increasing: Q decreases from P'(0) to the cap slope.
                let e = 1.0 - 1.0 / n;
                (e * (cap + eps).powf(-1.0 / n), e * eps.powf(-1.0 / n))
            }
            Family::Custom { .. } => {
                let mut lo = f64::INFINITY;
                let mut hi: f64 = 0.0;
                for k in -60..=60 {
                    let r = 10f64.powf(k as f64 / 10.0);
                    let v = self.q(r);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                let v0 = self.q(0.0);
                (lo.min(v0), hi.max(v0))
            }
        }
    }

    /// `Λ = inf_{r>0} K Q(r)`.
    pub fn lambda(&self, k: f64) -> f64 {
        let (qmin, qmax) = self.q_range();
        if k >= 0.0 {
            k * qmin
        } else {
            k * qmax
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.family, Family::Linear)
    }

    /// (family name, N, eps, M, a) for config records.
    pub fn describe(&self) -> (&'static str, Option<f64>, Option<f64>, Option<f64>, Option<f64>) {
        match &self.family {
            Family::Linear => ("linear", None, None, None, Some(1.0)),
            Family::Power { n } => ("power", Some(*n), None, None, None),
            Family::RegularizedPower { n, eps, cap } => {
                ("regularized-power", Some(*n), Some(*eps), Some(*cap), self.regularity())
            }
            Family::Custom { a, .. } => ("custom", None, None, None, Some(*a)),
        }
    }
}

/// Entropy-level regularization `U_eps`:
/// `U_eps(r) = (r+eps) ∫_0^r P(s)/(s+eps)² ds - r ∫_0^1 P(s)/(s+eps)² ds`,
/// which satisfies `U_eps(0) = 0` and `U_eps''(r) = P'(r)/(r+eps)`.
pub fn u_eps(model: &EntropyModel, eps: f64, r: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::InvalidInput("u_eps needs eps > 0".into()));
    }
    if r < 0.0 {
        return Err(Error::InvalidInput("u_eps needs r >= 0".into()));
    }
    let integrand = |s: f64| model.p(s) / ((s + eps) * (s + eps));
    let head = if r == 0.0 { 0.0 } else { adaptive_simpson(&integrand, 0.0, r, 1e-12) };
    let unit = adaptive_simpson(&integrand, 0.0, 1.0, 1e-12);
    Ok((r + eps) * head - r * unit)
}

/// Distortion coefficient `σ_κ^{(t)}(δ)`.
///
/// `+∞` exactly when `κδ² >= π²` (flagged, not an error); elsewhere the
/// endpoint-normalized solution of `v'' + κδ² v = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaCoefficient {
    pub kappa: f64,
    pub t: f64,
    pub delta: f64,
    /// `None` encodes the `+∞` branch.
    pub value: Option<f64>,
}

impl SigmaCoefficient {
    pub fn is_infinite(&self) -> bool {
        self.value.is_none()
    }

    /// Finite value; panics on the `+∞` branch.
    pub fn finite(&self) -> f64 {
        self.value.expect("sigma coefficient is +infinity")
    }
}

/// Compute `σ_κ^{(t)}(δ)` for `t ∈ [0,1]`, `δ >= 0`.
pub fn sigma_coeff(kappa: f64, t: f64, delta: f64) -> Result<SigmaCoefficient> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidInput(format!("sigma needs t in [0,1], got {t}")));
    }
    if !(delta >= 0.0) {
        return Err(Error::InvalidInput(format!("sigma needs delta >= 0, got {delta}")));
    }
    let kd2 = kappa * delta * delta;
    let value = if kd2 >= PI * PI - 1e-12 {
        None
    } else if kd2 > 0.0 {
        let omega = kd2.sqrt();
        Some((omega * t).sin() / omega.sin())
    } else if kd2 == 0.0 {
        Some(t)
    } else {
        let omega = (-kd2).sqrt();
        Some((omega * t).sinh() / omega.sinh())
    };
    Ok(SigmaCoefficient { kappa, t, delta, value })
}

/// Green function of `-d²/ds²` on `(0,1)` with zero boundary values:
/// `g(t,s) = (1-t)s` for `s <= t`, `t(1-s)` for `s >= t`;
/// `∫_0^1 g(t,s) ds = t(1-t)/2`.
pub fn green_weight(t: f64, s: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) || !(0.0..=1.0).contains(&s) {
        return Err(Error::InvalidInput(format!("green_weight needs (t,s) in [0,1]², got ({t},{s})")));
    }
    Ok(if s <= t { (1.0 - t) * s } else { t * (1.0 - s) })
}

/// McCann-class check `R(r) >= -P(r)/N` on a grid of positive densities.
///
/// Failure is a verdict, not an error; the report carries the worst margin
/// and its witness `r`.
pub fn mccann_check(model: &EntropyModel, n: f64, r_grid: &[f64]) -> Result<CheckReport> {
    if r_grid.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::InvalidInput("mccann_check needs positive grid values".into()));
    }
    let mut worst = f64::INFINITY;
    let mut witness = 0.0;
    let mut residuals = Vec::with_capacity(r_grid.len());
    for &r in r_grid {
        let margin = model.r_defect(r) + model.p(r) / n;
        residuals.push(margin);
        if margin < worst {
            worst = margin;
            witness = r;
        }
    }
    Ok(
        CheckReport::new("mccann", Verdict::from_bool(worst >= -1e-12), worst)
            .with_witness(Witness::scalar(witness))
            .with_residuals(residuals),
    )
}

/// Integral formulation of `u'' >= f` (Green-kernel form): for grid points
/// `r0 = x_i < x_l < x_j` and `t = (l-i)/(j-i)`,
/// `u(x_l) <= (1-t)u(x_i) + t u(x_j) - (x_j-x_i)² ∫ f((1-s)x_i + s x_j) g(t,s) ds`
/// with the trapezoid rule on the aligned `s`-grid. Exact for affine data and,
/// because the kernel kink sits on a node, for constant `f`.
pub fn weighted_convexity_check(
    u_samples: &[f64],
    f_samples: &[f64],
    grid: &[f64],
) -> Result<CheckReport> {
    let n = grid.len();
    if n < 3 || u_samples.len() != n || f_samples.len() != n {
        return Err(Error::InvalidInput(
            "weighted_convexity_check needs >= 3 aligned samples".into(),
        ));
    }
    let mut worst = f64::INFINITY;
    let mut wit = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 2..n {
            let gap = grid[j] - grid[i];
            for l in i + 1..j {
                let t = (grid[l] - grid[i]) / gap;
                let steps = j - i;
                // trapezoid over s_q = q/steps; f evaluated on the grid
                let mut integral = 0.0;
                for q in 0..=steps {
                    let s = q as f64 / steps as f64;
                    let weight = if q == 0 || q == steps { 0.5 } else { 1.0 };
                    integral += weight * f_samples[i + q] * green_weight(t, s)?;
                }
                integral /= steps as f64;
                let rhs = (1.0 - t) * u_samples[i] + t * u_samples[j] - gap * gap * integral;
                let margin = rhs - u_samples[l];
                if margin < worst {
                    worst = margin;
                    wit = (grid[i], grid[j], t);
                }
            }
        }
    }
    Ok(
        CheckReport::new("weighted-convexity", Verdict::from_bool(worst >= -1e-8), worst)
            .with_witness(Witness::triple(wit.0, wit.1, wit.2)),
    )
}

/// σ-concavity check `u(r_t) >= σ^{(1-t)}_κ(r1-r0) u(r0) + σ^{(t)}_κ(r1-r0) u(r1)`
/// over aligned grid triples with `κ(r1-r0)² < π²`.
pub fn sigma_concavity_check(u_samples: &[f64], kappa: f64, grid: &[f64]) -> Result<CheckReport> {
    let n = grid.len();
    if n < 3 || u_samples.len() != n {
        return Err(Error::InvalidInput("sigma_concavity_check needs >= 3 aligned samples".into()));
    }
    if u_samples.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidInput("sigma_concavity_check needs u >= 0".into()));
    }
    let mut worst = f64::INFINITY;
    let mut wit = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 2..n {
            let delta = grid[j] - grid[i];
            if kappa * delta * delta >= PI * PI - 1e-12 {
                continue;
            }
            for l in i + 1..j {
                let t = (grid[l] - grid[i]) / delta;
                let s_lo = sigma_coeff(kappa, 1.0 - t, delta)?;
                let s_hi = sigma_coeff(kappa, t, delta)?;
                let margin = u_samples[l] - s_lo.finite() * u_samples[i] - s_hi.finite() * u_samples[j];
                if margin < worst {
                    worst = margin;
                    wit = (grid[i], grid[j], t);
                }
            }
        }
    }
    Ok(
        CheckReport::new("sigma-concavity", Verdict::from_bool(worst >= -1e-10), worst)
            .with_witness(Witness::triple(wit.0, wit.1, wit.2)),
    )
}

/// Adaptive Simpson quadrature with absolute tolerance.
pub(crate) fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(a: f64, fa: f64, b: f64, fb: f64, fm: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: usize,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(a, fa, m, fm, flm);
        let right = simpson(m, fm, b, fb, frm);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            rec(f, a, fa, m, fm, flm, left, tol / 2.0, depth - 1)
                + rec(f, m, fm, b, fb, frm, right, tol / 2.0, depth - 1)
        }
    }
    if a == b {
        return 0.0;
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let (fa, fb, fm) = (f(lo), f(hi), f(0.5 * (lo + hi)));
    let whole = simpson(lo, fa, hi, fb, fm);
    sign * rec(f, lo, fa, hi, fb, fm, whole, tol, 48)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn power_two_values() {
        let m = EntropyModel::power(2.0).unwrap();
        assert_abs_diff_eq!(m.p(4.0), 2.0, epsilon = 1e-14);
        // U_2(4) = 2*4*(1 - 4^{-1/2}) = 4
        assert_abs_diff_eq!(m.u(4.0), 4.0, epsilon = 1e-14);
        assert_abs_diff_eq!(m.r_defect(4.0), -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(m.q(4.0), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn linear_values() {
        let m = EntropyModel::linear();
        assert_abs_diff_eq!(m.u(2.0), 2.0 * 2f64.ln(), epsilon = 1e-14);
        assert_eq!(m.q(0.3), 1.0);
        assert_eq!(m.r_defect(5.0), 0.0);
        assert_eq!(m.u(1.0), 0.0);
        assert_eq!(m.u(0.0), 0.0);
    }

    #[test]
    fn normalization_holds_for_all_families() {
        let models = [
            EntropyModel::linear(),
            EntropyModel::power(3.0).unwrap(),
            EntropyModel::regularized_power(2.0, 0.01, 10.0).unwrap(),
        ];
        for m in &models {
            assert_abs_diff_eq!(m.u(1.0), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn quadrature_matches_closed_form_u() {
        // Custom model with the linear pressure must reproduce r log r.
        let m = EntropyModel::custom(Arc::new(|r| r), Arc::new(|_| 1.0), 1.0).unwrap();
        for &r in &[0.1, 0.5, 1.0, 2.0, 7.5] {
            assert_abs_diff_eq!(m.u(r), EntropyModel::linear().u(r), epsilon = 1e-11);
        }
    }

    #[test]
    fn regularized_linear_is_unchanged() {
        let m = EntropyModel::linear().regularize(0.05, 4.0).unwrap();
        for &r in &[0.0, 0.3, 1.7, 9.0] {
            assert_abs_diff_eq!(m.p(r), r, epsilon = 1e-14);
        }
    }

    #[test]
    fn regularized_power_cap_freezes_slope() {
        let m = EntropyModel::regularized_power(2.0, 0.01, 3.0).unwrap();
        let slope = m.dp(3.0);
        for &r in &[3.5, 5.0, 42.0] {
            assert_abs_diff_eq!(m.dp(r), slope, epsilon = 1e-15);
        }
        // continuity at the cap
        assert_abs_diff_eq!(m.p(3.0 + 1e-9), m.p(3.0), epsilon = 1e-8);
    }

    #[test]
    fn eq92_sandwich_on_grid() {
        // -(1/N) P_{N,eps}(r) + (1-1/N) eps^{1-1/N} >= R >= -(1/N) P_{N,eps}(r)
        let n = 2.0;
        let eps = 0.01;
        let m = EntropyModel::regularized_power(n, eps, 20.0).unwrap();
        let upper_shift = (1.0 - 1.0 / n) * eps.powf(1.0 - 1.0 / n);
        let mut r = 0.0;
        while r <= 10.0 + 1e-9 {
            let lower = -m.p(r) / n;
            let upper = lower + upper_shift;
            let defect = m.r_defect(r);
            assert!(defect >= lower - 1e-12, "lower fails at r={r}");
            assert!(defect <= upper + 1e-12, "upper fails at r={r}");
            r += 0.01;
        }
    }

    #[test]
    fn eq83_identity_for_regularized_power() {
        let n = 2.0;
        let eps = 0.05;
        let m = EntropyModel::regularized_power(n, eps, 50.0).unwrap();
        for k in 0..400 {
            let r = k as f64 * 0.1;
            let expect = -m.p(r) / n + eps * (m.dp(0.0) - m.dp(r));
            assert_abs_diff_eq!(m.r_defect(r), expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn regularity_bounds_hold() {
        let m = EntropyModel::regularized_power(2.0, 0.01, 10.0).unwrap();
        let a = m.regularity().unwrap();
        assert!(a > 0.0);
        for k in 0..1000 {
            let r = k as f64 * 0.02;
            let d = m.dp(r);
            assert!(d >= a - 1e-12 && d <= 1.0 / a + 1e-12, "P' out of [a,1/a] at r={r}");
        }
        // Z bounds 2a√r <= Z(r) <= 2√r/a for regular models
        for &r in &[0.04, 0.3, 1.0, 4.0] {
            let z = m.z(r);
            assert!(z >= 2.0 * a * r.sqrt() - 1e-10);
            assert!(z <= 2.0 / a * r.sqrt() + 1e-10);
        }
    }

    #[test]
    fn u47bis_log_envelope() {
        let m = EntropyModel::regularized_power(3.0, 0.1, 5.0).unwrap();
        let a = m.regularity().unwrap();
        for &r in &[0.2f64, 0.5, 2.0, 4.0] {
            let bound = (r * r.ln()).abs();
            let u = m.u(r).abs();
            assert!(u >= a * bound - 1e-9, "lower envelope fails at {r}");
            assert!(u <= bound / a + 1e-9, "upper envelope fails at {r}");
        }
    }

    #[test]
    fn u_eps_second_derivative() {
        let m = EntropyModel::linear();
        let eps = 0.2;
        assert_abs_diff_eq!(u_eps(&m, eps, 0.0).unwrap(), 0.0, epsilon = 1e-12);
        let h = 1e-4;
        for &r in &[0.5, 1.0, 2.0] {
            let fd = (u_eps(&m, eps, r + h).unwrap() - 2.0 * u_eps(&m, eps, r).unwrap()
                + u_eps(&m, eps, r - h).unwrap())
                / (h * h);
            assert_abs_diff_eq!(fd, m.dp(r) / (r + eps), epsilon = 1e-5);
        }
    }

    #[test]
    fn mccann_power_family() {
        let grid: Vec<f64> = (1..200).map(|k| k as f64 * 0.05).collect();
        // equality at its own N
        let m2 = EntropyModel::power(2.0).unwrap();
        let rep = mccann_check(&m2, 2.0, &grid).unwrap();
        assert!(rep.passed());
        assert_abs_diff_eq!(rep.margin.0, 0.0, epsilon = 1e-13);
        // linear passes any finite N with positive margin
        let rep = mccann_check(&EntropyModel::linear(), 4.0, &grid).unwrap();
        assert!(rep.passed());
        assert!(rep.margin.0 > 0.0);
        // power-2 lies in MC(N') exactly for N' <= 2: margin at r is P(r)(1/N' - 1/2)
        let pass = mccann_check(&m2, 1.5, &grid).unwrap();
        assert!(pass.passed());
        let fail = mccann_check(&m2, 3.0, &grid).unwrap();
        assert!(!fail.passed());
        assert!(fail.margin.0 < 0.0);
        // oracle at r = 1: R + P/N = -1/2 + 1/3
        let at_one = mccann_check(&m2, 3.0, &[1.0]).unwrap();
        assert_abs_diff_eq!(at_one.margin.0, 1.0 / 3.0 - 0.5, epsilon = 1e-14);
    }

    #[test]
    fn sigma_branch_values() {
        assert_eq!(sigma_coeff(0.0, 0.37, 2.0).unwrap().finite(), 0.37);
        // κδ² = π²/4, t = 1/2: sin(π/4)/sin(π/2) = √2/2
        let s = sigma_coeff(PI * PI / 4.0, 0.5, 1.0).unwrap();
        assert_abs_diff_eq!(s.finite(), 0.5f64.sqrt(), epsilon = 1e-12);
        // κδ² = -1, t = 1: sinh(1)/sinh(1) = 1
        let s = sigma_coeff(-1.0, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(s.finite(), 1.0, epsilon = 1e-14);
        assert!(sigma_coeff(PI * PI, 0.5, 1.0).unwrap().is_infinite());
    }

    #[test]
    fn sigma_continuous_at_zero_curvature() {
        for &t in &[0.1, 0.5, 0.9] {
            let plus = sigma_coeff(1e-11, t, 1.0).unwrap().finite();
            let minus = sigma_coeff(-1e-11, t, 1.0).unwrap().finite();
            assert_abs_diff_eq!(plus, t, epsilon = 1e-9);
            assert_abs_diff_eq!(minus, t, epsilon = 1e-9);
        }
    }

    #[test]
    fn sigma_ode_finite_difference() {
        // |σ(t+h) - 2σ(t) + σ(t-h) + κδ²h²σ(t)| = O(h⁴)
        let kappa = 2.0;
        let delta = 1.0;
        let resid = |h: f64| -> f64 {
            let mut worst: f64 = 0.0;
            let interior = (1.0 / h).round() as usize - 1;
            for k in 1..interior {
                let t = k as f64 * h;
                let s = |tt: f64| sigma_coeff(kappa, tt, delta).unwrap().finite();
                let r = s(t + h) - 2.0 * s(t) + s(t - h) + kappa * delta * delta * h * h * s(t);
                worst = worst.max(r.abs());
            }
            worst
        };
        let r1 = resid(1e-2);
        let r2 = resid(5e-3);
        let slope = (r1 / r2).ln() / 2f64.ln();
        assert!(slope > 3.5, "observed order {slope}");
    }

    #[test]
    fn green_values_and_integral() {
        assert_abs_diff_eq!(green_weight(0.5, 0.25).unwrap(), 0.125, epsilon = 0.0);
        assert_eq!(green_weight(0.3, 0.0).unwrap(), 0.0);
        assert_eq!(green_weight(0.3, 1.0).unwrap(), 0.0);
        // trapezoid with 10^4 nodes vs t(1-t)/2
        let t = 0.5;
        let n = 10_000;
        let mut acc = 0.0;
        for q in 0..=n {
            let s = q as f64 / n as f64;
            let w = if q == 0 || q == n { 0.5 } else { 1.0 };
            acc += w * green_weight(t, s).unwrap();
        }
        acc /= n as f64;
        assert_abs_diff_eq!(acc, 0.125, epsilon = 1e-9);
        assert!(green_weight(1.5, 0.0).is_err());
    }

    #[test]
    fn weighted_convexity_quadratic_equality() {
        let n = 51;
        let grid: Vec<f64> = (0..n).map(|k| k as f64 / (n - 1) as f64).collect();
        let u: Vec<f64> = grid.iter().map(|&t| t * t).collect();
        let f = vec![2.0; n];
        let rep = weighted_convexity_check(&u, &f, &grid).unwrap();
        assert!(rep.passed());
        assert!(rep.margin.0.abs() < 1e-12, "margin {}", rep.margin.0);
    }

    #[test]
    fn weighted_convexity_affine_equality() {
        let n = 21;
        let grid: Vec<f64> = (0..n).map(|k| k as f64 / (n - 1) as f64).collect();
        let u: Vec<f64> = grid.clone();
        let f = vec![0.0; n];
        let rep = weighted_convexity_check(&u, &f, &grid).unwrap();
        assert!(rep.margin.0.abs() < 1e-13);
    }

    #[test]
    fn weighted_convexity_detects_concavity() {
        let n = 41;
        let grid: Vec<f64> = (0..n).map(|k| k as f64 / (n - 1) as f64).collect();
        let u: Vec<f64> = grid.iter().map(|&t| -t * t).collect();
        let f = vec![2.0; n];
        let rep = weighted_convexity_check(&u, &f, &grid).unwrap();
        assert!(!rep.passed());
        // margin(r0,r1,t) = -2 t(1-t)(r1-r0)², minimized at (0,1,1/2)
        if let Some(Witness::Triple(r0, r1, _)) = rep.witness {
            assert_eq!((r0.0, r1.0), (0.0, 1.0));
        } else {
            panic!("expected triple witness");
        }
        assert_abs_diff_eq!(rep.margin.0, -0.5, epsilon = 1e-12);
    }

    #[test]
    fn sigma_concavity_sine_equality() {
        let n = 33;
        let grid: Vec<f64> = (0..n).map(|k| k as f64 / (n - 1) as f64).collect();
        let u: Vec<f64> = grid.iter().map(|&t| (PI * t).sin()).collect();
        let rep = sigma_concavity_check(&u, PI * PI, &grid).unwrap();
        assert!(rep.passed());
        assert!(rep.margin.0.abs() < 1e-10, "margin {}", rep.margin.0);
    }

    #[test]
    fn sigma_concavity_constant_and_parabola() {
        let n = 17;
        let grid: Vec<f64> = (0..n).map(|k| k as f64 / (n - 1) as f64).collect();
        let ones = vec![1.0; n];
        let rep = sigma_concavity_check(&ones, 0.0, &grid).unwrap();
        assert!(rep.passed());
        assert!(rep.margin.0.abs() < 1e-14);
        let cap: Vec<f64> = grid.iter().map(|&t| t * (1.0 - t)).collect();
        let rep = sigma_concavity_check(&cap, 0.0, &grid).unwrap();
        assert!(rep.passed());
    }

    proptest! {
        #[test]
        fn sigma_matches_dirichlet_solution(kd2 in -8.0f64..9.5, t in 0.0f64..1.0) {
            // σ^{(1-t)} u0 + σ^{(t)} u1 solves v'' + κδ² v = 0 with v(0)=u0, v(1)=u1
            prop_assume!(kd2 < PI * PI - 0.2);
            let s0 = sigma_coeff(kd2, 1.0 - t, 1.0).unwrap().finite();
            let s1 = sigma_coeff(kd2, t, 1.0).unwrap().finite();
            let (u0, u1) = (0.7, 1.3);
            let v = |tt: f64| {
                sigma_coeff(kd2, 1.0 - tt, 1.0).unwrap().finite() * u0
                    + sigma_coeff(kd2, tt, 1.0).unwrap().finite() * u1
            };
            let h = 1e-4;
            if t > 2.0 * h && t < 1.0 - 2.0 * h {
                let second = (v(t + h) - 2.0 * v(t) + v(t - h)) / (h * h);
                prop_assert!((second + kd2 * (s0 * u0 + s1 * u1)).abs() < 1e-4 * (1.0 + kd2.abs()));
            }
        }

        #[test]
        fn green_symmetry(t in 0.0f64..1.0, s in 0.0f64..1.0) {
            let a = green_weight(t, s).unwrap();
            let b = green_weight(s, t).unwrap();
            prop_assert!((a - b).abs() < 1e-15);
            prop_assert!(a >= 0.0);
        }
    }
}
