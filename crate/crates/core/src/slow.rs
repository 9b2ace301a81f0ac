//! Slow-curve machinery of FW on the quadratic model over the lp ball.
//!
//! In centered coordinates `u = 1 - x_1`, `w = x_2` a FW step is an explicit
//! map `(u, w) -> (u', w')`. The scaled transverse coordinate
//! `y = |w| / u^{1+alpha}` obeys `y' = phi(u, y)`, whose fixed-point curve
//! `y*(u)` starts at `C_p = (p/(p+1))^{1/q}` and attracts slow-start
//! trajectories.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{BallSpec, Vector};
use crate::numeric::{stable_pow1p_m1, Real};

/// Largest `u` accepted by [`fixed_point_y`].
pub const DEFAULT_U_MAX: f64 = 0.5;
/// Half-width of the bisection bracket around `C_p`, relative to `C_p`.
pub const BRACKET_RADIUS: f64 = 0.2;

/// Centered coordinates of a 2-D iterate.
#[derive(Clone, Debug, PartialEq)]
pub struct CenteredState<S> {
    pub u: S,
    pub w: S,
}

impl<S: Real> CenteredState<S> {
    pub fn new(u: S, w: S) -> Self {
        CenteredState { u, w }
    }

    pub fn from_point(x: &Vector<S>) -> Self {
        CenteredState {
            u: x[0].one_like() - x[0].clone(),
            w: x[1].clone(),
        }
    }

    pub fn to_point(&self) -> Vector<S> {
        Vector::new(vec![self.u.one_like() - self.u.clone(), self.w.clone()])
    }

    /// `|w| / u^{1+alpha}`
    pub fn y(&self, p: &S) -> S {
        let alpha = (p.clone() - p.one_like()) / p.clone();
        self.w.abs() / self.u.powf(&(alpha + p.one_like()))
    }
}

/// Intermediate quantities of one centered step.
#[derive(Clone, Debug)]
pub struct StepParts<S> {
    pub v1: S,
    pub v2: S,
    pub d1: S,
    pub d2: S,
    pub gamma: S,
    /// `M - u + h`, the line-search numerator.
    pub numerator: S,
}

fn step_parts<S: Real>(state: &CenteredState<S>, p: &S) -> Result<StepParts<S>> {
    let CenteredState { u, w } = state;
    if !(u > &u.zero_like()) {
        return Err(Error::Domain(format!("centered step needs u > 0, got {}", u.to_f64())));
    }
    let one = p.one_like();
    let q = p.clone() / (p.clone() - one.clone());
    let rho = w.abs() / u.clone();
    // S = rho^q = z u with z = y^q
    let s = rho.powf(&q);
    let neg_inv_p = -(one.clone() / p.clone());
    let v1_m1 = stable_pow1p_m1(&s, &one, &neg_inv_p)?;
    let v1 = v1_m1.clone() + one.clone();
    let v2 = -(w.sign() * rho.powf(&(q.clone() - one.clone())) * v1.clone());
    let d1 = u.clone() + v1_m1;
    let d2 = v2.clone() - w.clone();
    // M - u = u ((1 + S)^{1/q} - 1)
    let m_minus_u = u.clone() * stable_pow1p_m1(&s, &one, &(one.clone() / q))?;
    let h = u.clone() * u.clone() + w.clone() * w.clone();
    let numerator = m_minus_u + h;
    let den = d1.clone() * d1.clone() + d2.clone() * d2.clone();
    if den.is_zero() {
        return Err(Error::DegenerateDirection);
    }
    let gamma = (numerator.clone() / den).clamp_to(one.zero_like(), one);
    Ok(StepParts {
        v1,
        v2,
        d1,
        d2,
        gamma,
        numerator,
    })
}

/// Oracle vertex, direction and step size at `(u, w)`.
pub fn step_details<S: Real>(state: &CenteredState<S>, p: &S) -> Result<StepParts<S>> {
    step_parts(state, p)
}

/// One exact-line-search FW step in centered coordinates.
pub fn one_step_uw<S: Real>(state: &CenteredState<S>, p: &S) -> Result<CenteredState<S>> {
    let parts = step_parts(state, p)?;
    Ok(CenteredState {
        u: state.u.clone() - parts.gamma.clone() * parts.d1,
        w: state.w.clone() + parts.gamma * parts.d2,
    })
}

/// `(u', |w'|)` from the ratio form `u' = |d2| P / (d1^2 + d2^2)`,
/// `|w'| = |d1| P / (d1^2 + d2^2)`, `P = |w|(1 - v1) + u |v2|`.
/// Only valid when the unclamped step lies in `[0, 1]` and `w != 0`.
pub fn ratio_identity_step<S: Real>(state: &CenteredState<S>, p: &S) -> Result<(S, S)> {
    if state.w.is_zero() {
        return Err(Error::Domain("ratio identity needs w != 0".into()));
    }
    let parts = step_parts(state, p)?;
    let one = p.one_like();
    // 1 - v1 = -(v1 - 1), formed without cancellation
    let one_minus_v1 = state.u.clone() - parts.d1.clone();
    let pp = state.w.abs() * one_minus_v1 + state.u.clone() * parts.v2.abs();
    let den = parts.d1.clone() * parts.d1.clone() + parts.d2.clone() * parts.d2.clone();
    let _ = one;
    Ok((
        parts.d2.abs() * pp.clone() / den.clone(),
        parts.d1.abs() * pp / den,
    ))
}

/// `y' = |w'| / (u')^{1+alpha}` for `w = y u^{1+alpha}`.
pub fn phi<S: Real>(u: &S, y: &S, p: &S) -> Result<S> {
    if !(y > &y.zero_like()) {
        return Err(Error::Domain(format!("phi needs y > 0, got {}", y.to_f64())));
    }
    let one = p.one_like();
    let expo = (p.clone() - one.clone()) / p.clone() + one;
    let w = y.clone() * u.powf(&expo);
    let next = one_step_uw(&CenteredState::new(u.clone(), w), p)?;
    if !(next.u > next.u.zero_like()) {
        return Err(Error::Domain("phi: step left the half-plane u > 0".into()));
    }
    Ok(next.w.abs() / next.u.powf(&expo))
}

fn check_positive<S: Real>(y: &S, what: &str) -> Result<()> {
    if y > &y.zero_like() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} needs y > 0, got {}", y.to_f64())))
    }
}

/// Leading term of `phi`: `F(y) = y^{-(q-1)} - y/p`.
pub fn map_f<S: Real>(y: &S, p: &S) -> Result<S> {
    check_positive(y, "F")?;
    let one = p.one_like();
    let q = p.clone() / (p.clone() - one.clone());
    Ok(y.powf(&(one - q)) - y.clone() / p.clone())
}

/// First-order correction of `phi`: `G(y) = y/p + (p-1)/(2p^2) y^{q+1}`.
pub fn map_g<S: Real>(y: &S, p: &S) -> Result<S> {
    check_positive(y, "G")?;
    let one = p.one_like();
    let q = p.clone() / (p.clone() - one.clone());
    let coef = (p.clone() - one.clone()) / (p.lit(2.0) * p.clone() * p.clone());
    Ok(y.clone() / p.clone() + coef * y.powf(&(q + one)))
}

/// Constants of the slow regime at a given exponent.
#[derive(Clone, Debug)]
pub struct SlowConstants<S> {
    pub p: S,
    pub q: S,
    pub alpha: S,
    pub kappa: S,
    /// `y*(0) = (p/(p+1))^{1/q}`
    pub c_p: S,
    /// slope of `y*` at 0: `C_p (p-1)(3p+1) / (2p(p+1)^2)`
    pub d_p: S,
    /// `2 C_p^2`, the contraction-law coefficient
    pub a_p: S,
    /// `p/(p-1)`
    pub rate_exponent: S,
    /// `((p+1)/p)^2 (p/(4(p-1)))^{p/(p-1)}`
    pub thm_constant: S,
    pub in_theorem_scope: bool,
}

#[derive(Serialize)]
struct ConstantsJson {
    p: f64,
    q: f64,
    alpha: f64,
    kappa: f64,
    c_p: f64,
    d_p: f64,
    a_p: f64,
    rate_exponent: f64,
    thm_constant: f64,
    in_theorem_scope: bool,
}

impl<S: Real> SlowConstants<S> {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(ConstantsJson {
            p: self.p.to_f64(),
            q: self.q.to_f64(),
            alpha: self.alpha.to_f64(),
            kappa: self.kappa.to_f64(),
            c_p: self.c_p.to_f64(),
            d_p: self.d_p.to_f64(),
            a_p: self.a_p.to_f64(),
            rate_exponent: self.rate_exponent.to_f64(),
            thm_constant: self.thm_constant.to_f64(),
            in_theorem_scope: self.in_theorem_scope,
        })
        .expect("constants serialize")
    }
}

/// Constants for `p >= 3`.
pub fn slow_constants<S: Real>(p: &S) -> Result<SlowConstants<S>> {
    if !(p >= &p.lit(3.0)) {
        return Err(Error::UnsupportedExponent(p.to_f64()));
    }
    compute_constants(p)
}

/// Constants for any `p > 1`; `in_theorem_scope` is false below 3.
pub fn slow_constants_forced<S: Real>(p: &S) -> Result<SlowConstants<S>> {
    if !(p > &p.one_like()) {
        return Err(Error::Domain(format!("p must exceed 1, got {}", p.to_f64())));
    }
    compute_constants(p)
}

fn compute_constants<S: Real>(p: &S) -> Result<SlowConstants<S>> {
    let ball = BallSpec::new(p.clone())?;
    let one = p.one_like();
    let two = p.lit(2.0);
    let pp1 = p.clone() + one.clone();
    let pm1 = p.clone() - one.clone();
    let c_p = (p.clone() / pp1.clone()).powf(&ball.alpha);
    let d_p = c_p.clone() * pm1.clone() * (p.lit(3.0) * p.clone() + one.clone())
        / (two.clone() * p.clone() * pp1.clone() * pp1.clone());
    let a_p = two.clone() * c_p.clone() * c_p.clone();
    let rate_exponent = p.clone() / pm1.clone();
    let ratio = pp1 / p.clone();
    let thm_constant =
        ratio.clone() * ratio * (p.clone() / (p.lit(4.0) * pm1)).powf(&rate_exponent);
    Ok(SlowConstants {
        p: p.clone(),
        q: ball.q,
        alpha: ball.alpha,
        kappa: ball.kappa,
        c_p,
        d_p,
        a_p,
        rate_exponent,
        thm_constant,
        in_theorem_scope: p >= &p.lit(3.0),
    })
}

/// A point of the slow curve together with `phi(u, y*) - y*`.
#[derive(Clone, Debug)]
pub struct SlowCurvePoint<S> {
    pub u: S,
    pub y_star: S,
    pub residual: S,
}

/// Fixed point of `phi(u, .)` with `u <= 0.5`; see [`fixed_point_y_within`].
pub fn fixed_point_y<S: Real>(u: &S, p: &S, tol: &S) -> Result<SlowCurvePoint<S>> {
    fixed_point_y_within(u, p, tol, &u.lit(DEFAULT_U_MAX))
}

/// Solves `phi(u, y) = y` by bisection on `[0.8 C_p, 1.2 C_p]`.
///
/// `H(y) = phi(u, y) - y` is decreasing on the bracket for small `u`; a
/// missing sign change is reported as [`Error::BracketFailure`].
pub fn fixed_point_y_within<S: Real>(u: &S, p: &S, tol: &S, u_max: &S) -> Result<SlowCurvePoint<S>> {
    if !(u > &u.zero_like()) || u > u_max {
        return Err(Error::Domain(format!(
            "fixed point needs 0 < u <= {}, got {}",
            u_max.to_f64(),
            u.to_f64()
        )));
    }
    if !(tol > &tol.zero_like()) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let ball = BallSpec::new(p.clone())?;
    let c_p = (p.clone() / (p.clone() + p.one_like())).powf(&ball.alpha);
    let radius = p.lit(BRACKET_RADIUS) * c_p.clone();
    fixed_point_in_bracket(u, p, tol, c_p.clone() - radius.clone(), c_p + radius)
}

/// Bisection for `phi(u, y) = y` on an explicit bracket `[lo, hi]`.
pub fn fixed_point_in_bracket<S: Real>(u: &S, p: &S, tol: &S, lo: S, hi: S) -> Result<SlowCurvePoint<S>> {
    if !(tol > &tol.zero_like()) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let (mut lo, mut hi) = (lo, hi);
    let h = |y: &S| -> Result<S> { Ok(phi(u, y, p)? - y.clone()) };
    let h_lo = h(&lo)?;
    let h_hi = h(&hi)?;
    let zero = u.zero_like();
    if !(h_lo > zero && h_hi < zero) {
        return Err(Error::BracketFailure {
            u: u.to_f64(),
            lo: lo.to_f64(),
            hi: hi.to_f64(),
            h_lo: h_lo.to_f64(),
            h_hi: h_hi.to_f64(),
        });
    }
    let half = u.lit(0.5);
    let mut best = (lo.clone(), h_lo);
    // enough halvings to exhaust any significand we support
    let max_halvings = p.precision_bits() + 64;
    for _ in 0..max_halvings {
        let mid = (lo.clone() + hi.clone()) * half.clone();
        if mid <= lo || mid >= hi {
            break;
        }
        let hm = h(&mid)?;
        if hm.abs() < best.1.abs() {
            best = (mid.clone(), hm.clone());
        }
        if hm.abs() <= *tol && hi.clone() - lo.clone() <= tol.clone() {
            break;
        }
        if hm > zero {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (y_star, residual) = best;
    if residual.abs() > *tol {
        return Err(Error::ToleranceNotReached {
            u: u.to_f64(),
            tol: tol.to_f64(),
            residual: residual.to_f64(),
        });
    }
    Ok(SlowCurvePoint {
        u: u.clone(),
        y_star,
        residual,
    })
}

/// Slow-start initial point `(1 - u0) e_1 + (C_p + D_p u0) u0^{1+alpha} e_2`.
pub fn slow_start<S: Real>(u0: &S, p: &S) -> Result<Vector<S>> {
    Ok(slow_start_state(u0, p)?.to_point())
}

/// Centered coordinates of the slow start.
pub fn slow_start_state<S: Real>(u0: &S, p: &S) -> Result<CenteredState<S>> {
    if !(u0 > &u0.zero_like() && u0 < &u0.one_like()) {
        return Err(Error::Domain(format!("slow start needs 0 < u0 < 1, got {}", u0.to_f64())));
    }
    let k = slow_constants_forced(p)?;
    let y0 = k.c_p + k.d_p * u0.clone();
    let w0 = y0 * u0.powf(&(k.alpha + p.one_like()));
    Ok(CenteredState::new(u0.clone(), w0))
}

/// Default central-difference step for [`phi_dy`].
pub fn default_dy_step<S: Real>(u: &S, p: &S) -> S {
    if u.is_extended() {
        return u.lit(1e-20);
    }
    let kappa = p.lit(2.0) * (p.clone() - p.one_like()) / p.clone();
    u.lit(1e-6).max_of(u.powf(&kappa) * u.lit(1e-2))
}

/// Central-difference estimate of `d phi / d y`.
pub fn phi_dy<S: Real>(u: &S, y: &S, p: &S, step: &S) -> Result<S> {
    let up = phi(u, &(y.clone() + step.clone()), p)?;
    let down = phi(u, &(y.clone() - step.clone()), p)?;
    Ok((up - down) / (step.lit(2.0) * step.clone()))
}

/// Geometric grid of `points` values from `u_min` to `u_max` inclusive.
pub fn geometric_grid(u_min: f64, u_max: f64, points: usize) -> Vec<f64> {
    match points {
        0 => vec![],
        1 => vec![u_min],
        n => {
            let (a, b) = (u_min.ln(), u_max.ln());
            (0..n)
                .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
                .collect()
        }
    }
}

/// Writes `u,y_star,residual`.
pub fn write_slow_curve_csv<S: Real, W: Write>(mut out: W, points: &[SlowCurvePoint<S>]) -> Result<()> {
    writeln!(out, "u,y_star,residual")?;
    for pt in points {
        writeln!(
            out,
            "{},{},{}",
            pt.u.to_decimal(),
            pt.y_star.to_decimal(),
            pt.residual.to_decimal()
        )?;
    }
    Ok(())
}
