//! The model objectives, both minimized at the anchor `x* = e_1`:
//! the quadratic `f(x) = ||x - e_1||^2` and its power transform
//! `g(x) = mu^{-1/theta} ||x - e_1||^{1/theta}`.

use crate::error::{Error, Result};
use crate::geometry::Vector;
use crate::numeric::Real;

#[derive(Clone, Debug)]
pub enum Objective<S> {
    Quadratic,
    HebPower { mu: S, theta: S },
}

impl<S: Real> Objective<S> {
    pub fn heb(mu: S, theta: S) -> Result<Self> {
        let half = theta.lit(0.5);
        if !(theta > theta.zero_like() && theta <= half) {
            return Err(Error::InvalidArgument(format!(
                "theta must lie in (0, 1/2], got {}",
                theta.to_f64()
            )));
        }
        if !(mu > mu.zero_like()) {
            return Err(Error::InvalidArgument(format!("mu must be positive, got {}", mu.to_f64())));
        }
        Ok(Objective::HebPower { mu, theta })
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self, Objective::Quadratic)
    }

    /// Objective value as a function of the displacement `r = x - e_1`.
    pub fn value_at_displacement(&self, r: &Vector<S>) -> S {
        let f = r.norm2_sq();
        match self {
            Objective::Quadratic => f,
            Objective::HebPower { mu, theta } => {
                let one = f.one_like();
                let power = one.clone() / (theta.clone() + theta.clone());
                let scaled = if power == one { f } else { f.powf(&power) };
                mu_factor(mu, theta) * scaled
            }
        }
    }

    /// The value as a function of `||x - e_1||^2`, with the constant factors
    /// evaluated once.
    pub fn value_of_sq_dist(&self) -> impl Fn(S) -> S {
        let (scale, power) = match self {
            Objective::Quadratic => (None, None),
            Objective::HebPower { mu, theta } => {
                let one = mu.one_like();
                let power = one.clone() / (theta.clone() + theta.clone());
                (Some(mu_factor(mu, theta)), (power != one).then_some(power))
            }
        };
        move |f: S| {
            let f = match &power {
                Some(e) => f.powf(e),
                None => f,
            };
            match &scale {
                Some(c) => c.clone() * f,
                None => f,
            }
        }
    }

    pub fn value(&self, x: &Vector<S>) -> S {
        self.value_at_displacement(&displacement(x))
    }

    /// Both objectives vanish at `e_1`, so the gap is the value itself.
    pub fn primal_gap(&self, x: &Vector<S>) -> S {
        self.value(x)
    }

    pub fn gradient(&self, x: &Vector<S>) -> Vector<S> {
        let r = displacement(x);
        let two = r[0].lit(2.0);
        let grad_f = r.scale(&two);
        match self {
            Objective::Quadratic => grad_f,
            Objective::HebPower { mu, theta } => {
                if r.is_zero() {
                    return grad_f;
                }
                let one = two.one_like();
                let power = one.clone() / (theta.clone() + theta.clone());
                let f = r.norm2_sq();
                let factor = power.clone() * mu_factor(mu, theta) * f.powf(&(power - one));
                grad_f.scale(&factor)
            }
        }
    }

    /// The same objective with parameters widened to `bits` bits.
    pub fn to_ext(&self, bits: usize) -> Objective<crate::numeric::Ext> {
        match self {
            Objective::Quadratic => Objective::Quadratic,
            Objective::HebPower { mu, theta } => Objective::HebPower {
                mu: mu.to_ext(bits),
                theta: theta.to_ext(bits),
            },
        }
    }

    /// Smoothness constant used by the short-step rule.
    pub fn short_step_constant(&self, proto: &S) -> Result<S> {
        match self {
            Objective::Quadratic => Ok(proto.lit(2.0)),
            Objective::HebPower { .. } => Err(Error::UnsupportedObjective(
                "short steps are only defined for the quadratic objective".into(),
            )),
        }
    }
}

fn mu_factor<S: Real>(mu: &S, theta: &S) -> S {
    mu.powf(&(-(theta.one_like() / theta.clone())))
}

/// `x - e_1`
pub fn displacement<S: Real>(x: &Vector<S>) -> Vector<S> {
    let mut r = x.clone();
    let c = &mut r.coords_mut()[0];
    *c = c.clone() - c.one_like();
    r
}
