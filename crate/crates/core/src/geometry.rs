//! lp-ball geometry: norms, Hölder conjugates, feasibility and the
//! closed-form linear minimization oracle.

use std::ops::Index;

use crate::error::{Error, Result};
use crate::numeric::{stable_pow1p_m1, Real};

/// Dense vector of scalars.
#[derive(Clone, Debug, PartialEq)]
pub struct Vector<S>(Vec<S>);

impl<S: Real> Vector<S> {
    pub fn new(coords: Vec<S>) -> Self {
        Vector(coords)
    }

    pub fn zeros_like(proto: &S, dim: usize) -> Self {
        Vector(vec![proto.zero_like(); dim])
    }

    /// The unit coordinate vector e_{index+1}.
    pub fn unit(proto: &S, dim: usize, index: usize) -> Self {
        let mut v = Self::zeros_like(proto, dim);
        v.0[index] = proto.one_like();
        v
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[S] {
        &self.0
    }

    pub fn coords_mut(&mut self) -> &mut [S] {
        &mut self.0
    }

    pub fn into_coords(self) -> Vec<S> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, S> {
        self.0.iter()
    }

    pub fn dot(&self, other: &Self) -> S {
        let mut acc = self.0[0].zero_like();
        for (a, b) in self.0.iter().zip(&other.0) {
            acc = acc + a.clone() * b.clone();
        }
        acc
    }

    pub fn norm2_sq(&self) -> S {
        self.dot(self)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Vector(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a.clone() - b.clone())
                .collect(),
        )
    }

    pub fn add(&self, other: &Self) -> Self {
        Vector(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a.clone() + b.clone())
                .collect(),
        )
    }

    pub fn scale(&self, c: &S) -> Self {
        Vector(self.0.iter().map(|a| a.clone() * c.clone()).collect())
    }

    /// `self + c * dir`
    pub fn axpy(&self, c: &S, dir: &Self) -> Self {
        Vector(
            self.0
                .iter()
                .zip(&dir.0)
                .map(|(a, d)| a.clone() + c.clone() * d.clone())
                .collect(),
        )
    }

    pub fn max_abs(&self) -> S {
        self.0
            .iter()
            .fold(self.0[0].zero_like(), |m, x| m.max_of(x.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(Real::is_zero)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(Real::is_finite)
    }

    /// Indices of nonzero coordinates.
    pub fn support(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, x)| !x.is_zero())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn to_f64(&self) -> Vector<f64> {
        Vector(self.0.iter().map(Real::to_f64).collect())
    }
}

impl<S> Index<usize> for Vector<S> {
    type Output = S;
    fn index(&self, i: usize) -> &S {
        &self.0[i]
    }
}

impl From<Vec<f64>> for Vector<f64> {
    fn from(v: Vec<f64>) -> Self {
        Vector(v)
    }
}

/// The unit lp ball, carrying its exponent and the derived constants.
#[derive(Clone, Debug)]
pub struct BallSpec<S> {
    pub p: S,
    /// Hölder conjugate p/(p-1).
    pub q: S,
    /// (p-1)/p = 1/q, the scaling exponent of the transverse coordinate.
    pub alpha: S,
    /// 2 * alpha
    pub kappa: S,
}

impl<S: Real> BallSpec<S> {
    pub fn new(p: S) -> Result<Self> {
        if !(p > p.one_like()) || !p.is_finite() {
            return Err(Error::Domain(format!("lp ball needs finite p > 1, got {}", p.to_f64())));
        }
        let one = p.one_like();
        let q = p.clone() / (p.clone() - one.clone());
        let alpha = (p.clone() - one) / p.clone();
        let kappa = alpha.clone() + alpha.clone();
        Ok(BallSpec { p, q, alpha, kappa })
    }
}

/// `(sum |x_i|^p)^{1/p}`, rescaled by the largest magnitude first.
pub fn lp_norm<S: Real>(x: &Vector<S>, p: &S) -> S {
    let m = x.max_abs();
    if m.is_zero() {
        return m;
    }
    let mut acc = m.zero_like();
    for xi in x.iter() {
        acc = acc + (xi.abs() / m.clone()).powf(p);
    }
    acc.powf(&(p.one_like() / p.clone())) * m
}

/// True iff `||x||_p <= 1 - margin`.
pub fn is_strictly_feasible<S: Real>(x: &Vector<S>, spec: &BallSpec<S>, margin: &S) -> bool {
    lp_norm(x, &spec.p) <= spec.p.one_like() - margin.clone()
}

struct DualParts<S> {
    /// g / max|g|
    scaled: Vec<S>,
    /// (sum |g_i / max|g||^q)^{-1/p}
    inv_norm_pow: S,
}

fn dual_parts<S: Real>(g: &Vector<S>, spec: &BallSpec<S>) -> Result<DualParts<S>> {
    let m = g.max_abs();
    if m.is_zero() {
        return Err(Error::ZeroGradient);
    }
    let scaled: Vec<S> = g.iter().map(|gi| gi.clone() / m.clone()).collect();
    let mut n = m.zero_like();
    for gi in &scaled {
        n = n + gi.abs().powf(&spec.q);
    }
    let inv_norm_pow = n.powf(&(-(spec.p.one_like() / spec.p.clone())));
    Ok(DualParts {
        scaled,
        inv_norm_pow,
    })
}

/// Closed-form minimizer of `<g, v>` over the unit lp ball:
/// `v_i = -sign(g_i) |g_i|^{q-1} / ||g||_q^{q-1}` with `sign(0) = 0`.
pub fn lmo<S: Real>(g: &Vector<S>, spec: &BallSpec<S>) -> Result<Vector<S>> {
    let parts = dual_parts(g, spec)?;
    let qm1 = spec.q.clone() - spec.q.one_like();
    Ok(Vector(
        parts
            .scaled
            .iter()
            .map(|gi| -(gi.sign() * gi.abs().powf(&qm1) * parts.inv_norm_pow.clone()))
            .collect(),
    ))
}

/// `lmo(g) - e_1`, with the first coordinate evaluated as
/// `(1 + S)^{-1/p} - 1`, `S = sum_{i>1} |g_i/g_1|^q`, whenever `g_1 < 0`.
///
/// Near the vertex e_1 the oracle output approaches e_1 and the naive
/// difference loses all significant digits of the step direction.
pub fn lmo_offset_from_e1<S: Real>(g: &Vector<S>, spec: &BallSpec<S>) -> Result<Vector<S>> {
    let mut v = lmo(g, spec)?;
    let g1 = &g[0];
    let one = g1.one_like();
    if g1 < &g1.zero_like() {
        let mut s = g1.zero_like();
        for gi in g.iter().skip(1) {
            s = s + (gi.abs() / g1.abs()).powf(&spec.q);
        }
        let e = -(one.clone() / spec.p.clone());
        v.0[0] = stable_pow1p_m1(&s, &one, &e)?;
    } else {
        v.0[0] = v.0[0].clone() - one;
    }
    Ok(v)
}
