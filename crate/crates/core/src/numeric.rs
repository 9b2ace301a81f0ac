//! Scalar arithmetic contract shared by every module.
//!
//! All algorithms are generic over [`Real`], which is implemented for `f64`
//! and for [`Ext`], an arbitrary-precision binary float with a configurable
//! significand. A single run never mixes the two.
//!
//! The stable helpers at the bottom evaluate the cancellation-prone
//! quantities of the lp-ball dynamics (`(1+zu)^e - 1`, `u + (1+zu)^{-1/p} - 1`)
//! through `ln_1p`/`exp_m1` so that they keep full relative accuracy as
//! `u -> 0`.

use std::cell::RefCell;
use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use astro_float::{BigFloat, Consts, Radix, RoundingMode, Sign};

use crate::error::{Error, Result};

/// Default significand width of the extended mode.
pub const DEFAULT_EXTENDED_BITS: usize = 256;
/// Narrowest significand accepted for the extended mode.
pub const MIN_EXTENDED_BITS: usize = 128;

/// Real-number arithmetic used by the solver and the dynamics.
///
/// Constants are produced with [`Real::lit`], which inherits the precision of
/// the receiver; this keeps precision a property of the data rather than of
/// global state.
pub trait Real:
    Clone
    + fmt::Debug
    + fmt::Display
    + PartialOrd
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// The constant `c` at the precision of `self`.
    fn lit(&self, c: f64) -> Self;
    fn abs(&self) -> Self;
    fn sqrt(&self) -> Self;
    fn ln(&self) -> Self;
    fn exp(&self) -> Self;
    fn ln_1p(&self) -> Self;
    fn exp_m1(&self) -> Self;
    /// `self^e` for `self >= 0`.
    fn powf(&self, e: &Self) -> Self;
    fn to_f64(&self) -> f64;
    fn is_finite(&self) -> bool;
    fn is_zero(&self) -> bool;
    /// Sign with `sign(0) = 0`.
    fn sign(&self) -> Self;
    /// Significand width in bits (53 for `f64`).
    fn precision_bits(&self) -> usize;
    /// Full-precision decimal rendering used by the exporters.
    fn to_decimal(&self) -> String;
    /// Exact widening to an extended scalar of at least `bits` bits.
    fn to_ext(&self, bits: usize) -> Ext;
    /// Rounds an extended scalar to the precision of `self`.
    fn from_ext(&self, e: &Ext) -> Self;

    fn zero_like(&self) -> Self {
        self.lit(0.0)
    }

    fn one_like(&self) -> Self {
        self.lit(1.0)
    }

    fn is_extended(&self) -> bool {
        self.precision_bits() > 53
    }

    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    fn min_of(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    fn clamp_to(self, lo: Self, hi: Self) -> Self {
        self.max_of(lo).min_of(hi)
    }
}

impl Real for f64 {
    fn lit(&self, c: f64) -> Self {
        c
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn ln_1p(&self) -> Self {
        f64::ln_1p(*self)
    }
    fn exp_m1(&self) -> Self {
        f64::exp_m1(*self)
    }
    fn powf(&self, e: &Self) -> Self {
        f64::powf(*self, *e)
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn sign(&self) -> Self {
        if *self > 0.0 {
            1.0
        } else if *self < 0.0 {
            -1.0
        } else {
            0.0
        }
    }
    fn precision_bits(&self) -> usize {
        53
    }
    fn to_decimal(&self) -> String {
        format!("{:.16e}", self)
    }
    fn to_ext(&self, bits: usize) -> Ext {
        Ext::from_f64(*self, bits)
    }
    fn from_ext(&self, e: &Ext) -> Self {
        e.to_f64()
    }
}

thread_local! {
    static CONSTS: RefCell<Consts> = RefCell::new(Consts::new().expect("astro-float constant cache"));
}

const RM: RoundingMode = RoundingMode::ToEven;

/// Extended-precision scalar.
#[derive(Clone)]
pub struct Ext {
    v: BigFloat,
    bits: usize,
}

impl Ext {
    pub fn from_f64(x: f64, bits: usize) -> Self {
        Ext {
            v: BigFloat::from_f64(x, bits),
            bits,
        }
    }

    /// Parses a decimal literal at the given precision.
    pub fn parse(s: &str, bits: usize) -> Self {
        let v = CONSTS.with(|cc| BigFloat::parse(s, Radix::Dec, bits, RM, &mut cc.borrow_mut()));
        Ext { v, bits }
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn as_bigfloat(&self) -> &BigFloat {
        &self.v
    }

    fn wrap(&self, v: BigFloat) -> Self {
        Ext { v, bits: self.bits }
    }

    // Binary exponent e with |x| in [2^(e-1), 2^e); None for zero/NaN/inf.
    fn exponent(&self) -> Option<i64> {
        if self.v.is_zero() {
            return None;
        }
        self.v.exponent().map(|e| e as i64)
    }
}

impl fmt::Debug for Ext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Ext({}, {} bits)", self.to_decimal(), self.bits)
    }
}

impl fmt::Display for Ext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_decimal())
    }
}

impl PartialEq for Ext {
    fn eq(&self, other: &Self) -> bool {
        self.v.cmp(&other.v) == Some(0)
    }
}

impl PartialOrd for Ext {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.v.cmp(&other.v).map(|c| c.cmp(&0))
    }
}

macro_rules! ext_binop {
    ($tr:ident, $method:ident) => {
        impl $tr for Ext {
            type Output = Ext;
            fn $method(self, rhs: Ext) -> Ext {
                let bits = self.bits.max(rhs.bits);
                Ext {
                    v: self.v.$method(&rhs.v, bits, RM),
                    bits,
                }
            }
        }
    };
}

ext_binop!(Add, add);
ext_binop!(Sub, sub);
ext_binop!(Mul, mul);
ext_binop!(Div, div);

impl Neg for Ext {
    type Output = Ext;
    fn neg(self) -> Ext {
        Ext {
            v: self.v.neg(),
            bits: self.bits,
        }
    }
}

impl Real for Ext {
    fn lit(&self, c: f64) -> Self {
        Ext::from_f64(c, self.bits)
    }
    fn abs(&self) -> Self {
        self.wrap(self.v.abs())
    }
    fn sqrt(&self) -> Self {
        self.wrap(self.v.sqrt(self.bits, RM))
    }
    fn ln(&self) -> Self {
        let v = CONSTS.with(|cc| self.v.ln(self.bits, RM, &mut cc.borrow_mut()));
        self.wrap(v)
    }
    fn exp(&self) -> Self {
        let v = CONSTS.with(|cc| self.v.exp(self.bits, RM, &mut cc.borrow_mut()));
        self.wrap(v)
    }
    fn ln_1p(&self) -> Self {
        // Guard bits cover the digits of x lost when forming 1 + x.
        let guard = self.exponent().map_or(0, |e| (-e).max(0) as usize) + 64;
        let wp = self.bits + guard;
        let one = BigFloat::from_f64(1.0, wp);
        let v = CONSTS.with(|cc| {
            one.add(&self.v, wp, RM)
                .ln(wp, RM, &mut cc.borrow_mut())
        });
        let mut out = self.wrap(v);
        out.v.set_precision(self.bits, RM).ok();
        out
    }
    fn exp_m1(&self) -> Self {
        let guard = self.exponent().map_or(0, |e| (-e).max(0) as usize) + 64;
        let wp = self.bits + guard;
        let one = BigFloat::from_f64(1.0, wp);
        let v = CONSTS.with(|cc| {
            self.v
                .exp(wp, RM, &mut cc.borrow_mut())
                .sub(&one, wp, RM)
        });
        let mut out = self.wrap(v);
        out.v.set_precision(self.bits, RM).ok();
        out
    }
    fn powf(&self, e: &Self) -> Self {
        if self.v.is_zero() {
            return if e.v.is_zero() {
                self.one_like()
            } else {
                self.clone()
            };
        }
        let bits = self.bits.max(e.bits);
        let v = CONSTS.with(|cc| self.v.pow(&e.v, bits, RM, &mut cc.borrow_mut()));
        Ext { v, bits }
    }
    fn to_f64(&self) -> f64 {
        bigfloat_to_f64(&self.v)
    }
    fn is_finite(&self) -> bool {
        !self.v.is_nan() && !self.v.is_inf()
    }
    fn is_zero(&self) -> bool {
        self.v.is_zero()
    }
    fn sign(&self) -> Self {
        if self.v.is_zero() {
            self.zero_like()
        } else if self.v.is_negative() {
            self.lit(-1.0)
        } else {
            self.lit(1.0)
        }
    }
    fn precision_bits(&self) -> usize {
        self.bits
    }
    fn to_decimal(&self) -> String {
        CONSTS
            .with(|cc| self.v.format(Radix::Dec, RM, &mut cc.borrow_mut()))
            .unwrap_or_else(|_| "NaN".to_string())
    }
    fn to_ext(&self, bits: usize) -> Ext {
        let mut v = self.v.clone();
        let bits = bits.max(self.bits);
        v.set_precision(bits, RM).ok();
        Ext { v, bits }
    }
    fn from_ext(&self, e: &Ext) -> Self {
        let mut v = e.v.clone();
        v.set_precision(self.bits, RM).ok();
        Ext { v, bits: self.bits }
    }
}

/// Rounds a big float to the nearest double (top 64 significand bits, then
/// the hardware conversion).
fn bigfloat_to_f64(v: &BigFloat) -> f64 {
    if v.is_nan() {
        return f64::NAN;
    }
    if v.is_inf() {
        return if v.is_inf_pos() {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        };
    }
    if v.is_zero() {
        return 0.0;
    }
    let Some((words, _, sign, exp, _)) = v.as_raw_parts() else {
        return f64::NAN;
    };
    let Some(&top) = words.last() else {
        return 0.0;
    };
    // Significand is 0.m * 2^exp with the top bit of the top word set.
    let mag = (top as f64) * 2f64.powi(exp - 64);
    match sign {
        Sign::Neg => -mag,
        Sign::Pos => mag,
    }
}

/// Arithmetic mode of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Precision {
    Double,
    Extended { bits: usize },
}

impl Precision {
    /// Parses `double` or `extended:<bits>` (bare `extended` uses 256 bits).
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "double" => Ok(Precision::Double),
            "extended" => Ok(Precision::Extended {
                bits: DEFAULT_EXTENDED_BITS,
            }),
            other => {
                let bits = other
                    .strip_prefix("extended:")
                    .and_then(|b| b.parse::<usize>().ok())
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown precision `{other}`")))?;
                if bits < MIN_EXTENDED_BITS {
                    return Err(Error::InvalidArgument(format!(
                        "extended precision needs at least {MIN_EXTENDED_BITS} bits, got {bits}"
                    )));
                }
                Ok(Precision::Extended { bits })
            }
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Precision::Double => f.write_str("double"),
            Precision::Extended { bits } => write!(f, "extended:{bits}"),
        }
    }
}

/// `(1 + z*u)^e` via `exp(e * ln_1p(z*u))`.
pub fn stable_pow1p<S: Real>(z: &S, u: &S, e: &S) -> Result<S> {
    let zu = z.clone() * u.clone();
    if !(zu > z.lit(-1.0)) {
        return Err(Error::Domain(format!(
            "stable_pow1p: 1 + z*u must be positive (z*u = {})",
            zu.to_f64()
        )));
    }
    Ok((e.clone() * zu.ln_1p()).exp())
}

/// `(1 + z*u)^e - 1` via `exp_m1(e * ln_1p(z*u))`.
pub fn stable_pow1p_m1<S: Real>(z: &S, u: &S, e: &S) -> Result<S> {
    let zu = z.clone() * u.clone();
    if !(zu > z.lit(-1.0)) {
        return Err(Error::Domain(format!(
            "stable_pow1p_m1: 1 + z*u must be positive (z*u = {})",
            zu.to_f64()
        )));
    }
    Ok((e.clone() * zu.ln_1p()).exp_m1())
}

/// `u + (1 + z*u)^{-1/p} - 1`, the first component of the FW direction in
/// centered coordinates.
pub fn stable_d1<S: Real>(u: &S, z: &S, p: &S) -> Result<S> {
    if !(u > &u.zero_like()) {
        return Err(Error::Domain(format!("stable_d1: u must be positive, got {}", u.to_f64())));
    }
    let e = -(p.one_like() / p.clone());
    Ok(u.clone() + stable_pow1p_m1(z, u, &e)?)
}
