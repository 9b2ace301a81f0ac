//! Frank-Wolfe with exact line search or short steps on the unit lp ball.
//!
//! The iterate is carried as its displacement `r = x - e_1` from the common
//! minimizer of the model objectives. Gaps, the centered coordinates
//! `u = -r_1`, `w = r_2` and the step direction are all formed from `r`, so
//! they keep full relative precision as the iterate approaches `e_1`.
//!
//! The oracle is queried with `r` itself: every admissible objective has a
//! gradient that is a positive multiple of `r`, and the lp-ball oracle is
//! invariant under positive scaling. Quadratic and power-transformed runs
//! therefore share their oracle calls and step sizes exactly.

use std::io::Write;

use crate::error::{Error, Result};
use crate::geometry::{lmo_offset_from_e1, lp_norm, BallSpec, Vector};
use crate::numeric::{Ext, Real};
use crate::objective::{displacement, Objective};

/// Tolerance on `||x0||_p - 1` accepted as feasible.
pub const FEASIBILITY_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepRule {
    #[serde(rename = "exact")]
    ExactLineSearch,
    #[serde(rename = "short")]
    ShortStep,
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub rule: StepRule,
    pub max_iters: usize,
    pub gap_tol: f64,
    pub record_every: usize,
    /// Replace the closed-form exact line search by a golden-section search
    /// on the objective itself (cross-validation only).
    pub golden_section: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rule: StepRule::ExactLineSearch,
            max_iters: 1000,
            gap_tol: 0.0,
            record_every: 1,
            golden_section: false,
        }
    }
}

impl SolverConfig {
    pub fn exact(max_iters: usize) -> Self {
        SolverConfig {
            max_iters,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug)]
pub struct Problem<S> {
    pub ball: BallSpec<S>,
    pub objective: Objective<S>,
}

impl<S: Real> Problem<S> {
    pub fn new(p: S, objective: Objective<S>) -> Result<Self> {
        Ok(Problem {
            ball: BallSpec::new(p)?,
            objective,
        })
    }

    pub fn quadratic(p: S) -> Result<Self> {
        Self::new(p, Objective::Quadratic)
    }
}

#[derive(Clone, Debug)]
pub struct TrajectoryRecord<S> {
    pub t: usize,
    pub x: Vector<S>,
    /// Step taken from this iterate; `None` on the terminal row.
    pub gamma: Option<S>,
    /// Primal gap of the run's objective.
    pub h: S,
    /// `1 - x_1`
    pub u: S,
    /// `x_2`
    pub w: S,
    /// `|w| / u^{1+alpha}` when `u > 0`.
    pub y: Option<S>,
    /// `r_{t+1} / r_t` with `r = ||x - e_1||_2`; `None` on the terminal row.
    pub s: Option<S>,
    /// `w` is exactly zero at a non-optimal iterate; the dynamics collapse
    /// onto the `u`-axis.
    pub axis_event: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    /// The iterate equals `e_1` (zero gradient).
    Optimal,
    GapReached,
    MaxIters,
}

#[derive(Clone, Debug)]
pub struct RunOutput<S> {
    pub records: Vec<TrajectoryRecord<S>>,
    /// Number of FW steps performed.
    pub iterations: usize,
    pub final_gap: S,
    pub final_x: Vector<S>,
    pub stop: StopReason,
    /// Steps with `h_{t+1} > h_t`, checked at every step (recorded or not).
    pub monotone_violations: usize,
    pub axis_events: usize,
}

/// One FW step in displacement coordinates.
#[derive(Clone, Debug)]
pub struct Step<S> {
    pub gamma: S,
    /// `v - e_1`
    pub vertex_offset: Vector<S>,
    /// `v - x`
    pub direction: Vector<S>,
    pub next: Vector<S>,
}

/// Exact minimizer over `[0, 1]` of the quadratic along `x -> v`, from
/// `r = x - e_1` and `d = v - x`.
fn closed_form_gamma<S: Real>(r: &Vector<S>, d: &Vector<S>) -> Result<S> {
    let dd = d.norm2_sq();
    if dd.is_zero() {
        return Err(Error::DegenerateDirection);
    }
    let two = dd.lit(2.0);
    // <grad f, x - v> = -2 <r, d>
    let num = -(two.clone() * r.dot(d));
    let g = num / (two * dd);
    Ok(g.clone().clamp_to(g.zero_like(), g.one_like()))
}

fn short_gamma<S: Real>(r: &Vector<S>, d: &Vector<S>, l: &S) -> Result<S> {
    let dd = d.norm2_sq();
    if dd.is_zero() {
        return Err(Error::DegenerateDirection);
    }
    let two = dd.lit(2.0);
    let num = -(two * r.dot(d));
    let g = num / (l.clone() * dd);
    Ok(g.clone().clamp_to(g.zero_like(), g.one_like()))
}

/// Golden-section minimization of `obj(x + gamma d)` over `[0, 1]`.
///
/// Objective values are flat to second order at the minimizer, so the
/// search resolves `gamma` only to about the square root of the working
/// precision. It therefore runs with at least twice the significand of the
/// caller (and never below 128 bits) and rounds the result back.
fn golden_gamma<S: Real>(obj: &Objective<S>, r: &Vector<S>, d: &Vector<S>) -> S {
    let proto = &r[0];
    let bits = (2 * proto.precision_bits() + 22).max(128);
    let widen = |v: &Vector<S>| Vector::new(v.iter().map(|c| c.to_ext(bits)).collect::<Vec<Ext>>());
    let (r, d, obj) = (widen(r), widen(d), obj.to_ext(bits));
    let z = r[0].zero_like();
    let inv_phi = (z.lit(5.0).sqrt() - z.one_like()) / z.lit(2.0);
    let value = obj.value_of_sq_dist();
    let at = |g: &Ext| value(r.axpy(g, &d).norm2_sq());
    let (mut a, mut b) = (z.zero_like(), z.one_like());
    let mut c = b.clone() - inv_phi.clone() * (b.clone() - a.clone());
    let mut e = a.clone() + inv_phi.clone() * (b.clone() - a.clone());
    let (mut fc, mut fe) = (at(&c), at(&e));
    // 2^{-bits/2}, a little above the attainable resolution
    let tol = z.lit(2.0).powf(&z.lit(-((bits / 2 - 4) as f64)));
    for _ in 0..4 * bits {
        if b.clone() - a.clone() <= tol {
            break;
        }
        if fc < fe {
            b = e;
            e = c.clone();
            fe = fc;
            c = b.clone() - inv_phi.clone() * (b.clone() - a.clone());
            fc = at(&c);
        } else {
            a = c;
            c = e.clone();
            fc = fe;
            e = a.clone() + inv_phi.clone() * (b.clone() - a.clone());
            fe = at(&e);
        }
    }
    let mid = (a + b) * z.lit(0.5);
    // endpoints are admissible minimizers too
    let mut best = mid;
    let mut best_val = at(&best);
    for g in [z.zero_like(), z.one_like()] {
        let v = at(&g);
        if v < best_val {
            best_val = v;
            best = g;
        }
    }
    proto.from_ext(&best)
}

/// Exact line-search step size along `x -> v`.
///
/// For both objectives this is the closed-form minimizer of the quadratic:
/// the power transform is a monotone function of the quadratic, so the
/// minimizers on the segment coincide.
pub fn exact_linesearch_gamma<S: Real>(_obj: &Objective<S>, x: &Vector<S>, v: &Vector<S>) -> Result<S> {
    closed_form_gamma(&displacement(x), &v.sub(x))
}

/// `min{1, <grad f(x), x - v> / (L ||x - v||^2)}`, quadratic objective only.
pub fn short_step_gamma<S: Real>(obj: &Objective<S>, x: &Vector<S>, v: &Vector<S>, l: &S) -> Result<S> {
    obj.short_step_constant(l)?;
    short_gamma(&displacement(x), &v.sub(x), l)
}

/// Numerical exact line search on the objective itself.
pub fn golden_section_gamma<S: Real>(obj: &Objective<S>, x: &Vector<S>, v: &Vector<S>) -> Result<S> {
    let d = v.sub(x);
    if d.norm2_sq().is_zero() {
        return Err(Error::DegenerateDirection);
    }
    Ok(golden_gamma(obj, &displacement(x), &d))
}

/// A single FW step from the displacement `r`.
pub fn fw_step<S: Real>(problem: &Problem<S>, r: &Vector<S>, cfg: &SolverConfig) -> Result<Step<S>> {
    let vertex_offset = lmo_offset_from_e1(r, &problem.ball)?;
    let direction = vertex_offset.sub(r);
    let gamma = match cfg.rule {
        StepRule::ExactLineSearch if cfg.golden_section => {
            if direction.norm2_sq().is_zero() {
                return Err(Error::DegenerateDirection);
            }
            golden_gamma(&problem.objective, r, &direction)
        }
        StepRule::ExactLineSearch => closed_form_gamma(r, &direction)?,
        StepRule::ShortStep => {
            let l = problem.objective.short_step_constant(&r[0])?;
            short_gamma(r, &direction, &l)?
        }
    };
    let next = r.axpy(&gamma, &direction);
    Ok(Step {
        gamma,
        vertex_offset,
        direction,
        next,
    })
}

fn make_record<S: Real>(
    t: usize,
    r: &Vector<S>,
    h: S,
    ball: &BallSpec<S>,
    gamma: Option<S>,
    s: Option<S>,
) -> TrajectoryRecord<S> {
    let mut x = r.clone();
    let one = h.one_like();
    x.coords_mut()[0] = r[0].clone() + one.clone();
    let u = r[0].zero_like() - r[0].clone();
    let w = if r.dim() > 1 { r[1].clone() } else { h.zero_like() };
    let y = if u > u.zero_like() {
        Some(w.abs() / u.powf(&(one + ball.alpha.clone())))
    } else {
        None
    };
    let axis_event = w.is_zero() && !r.is_zero();
    TrajectoryRecord {
        t,
        x,
        gamma,
        h,
        u,
        w,
        y,
        s,
        axis_event,
    }
}

/// Runs FW from `x0` until the gap drops to `gap_tol`, the iterate hits the
/// minimizer, or `max_iters` steps were taken.
pub fn run<S: Real>(problem: &Problem<S>, x0: &Vector<S>, cfg: &SolverConfig) -> Result<RunOutput<S>> {
    if x0.dim() < 2 {
        return Err(Error::InvalidArgument("dimension must be at least 2".into()));
    }
    if !x0.is_finite() {
        return Err(Error::InvalidArgument("x0 has non-finite entries".into()));
    }
    if cfg.record_every == 0 || cfg.max_iters == 0 {
        return Err(Error::InvalidArgument("max_iters and record_every must be >= 1".into()));
    }
    if cfg.rule == StepRule::ShortStep {
        problem.objective.short_step_constant(&x0[0])?;
    }
    let norm = lp_norm(x0, &problem.ball.p);
    if norm.to_f64() > 1.0 + FEASIBILITY_SLACK {
        return Err(Error::InfeasibleStart { norm: norm.to_f64() });
    }

    let obj = &problem.objective;
    let tol = x0[0].lit(cfg.gap_tol);
    let mut r = displacement(x0);
    let mut h = obj.value_at_displacement(&r);
    let mut dist_sq = r.norm2_sq();
    let mut records = Vec::new();
    let mut monotone_violations = 0;
    let mut axis_events = 0;
    let mut t = 0;

    let stop = loop {
        let stop = if r.is_zero() {
            Some(StopReason::Optimal)
        } else if h <= tol {
            Some(StopReason::GapReached)
        } else if t >= cfg.max_iters {
            Some(StopReason::MaxIters)
        } else {
            None
        };
        if let Some(stop) = stop {
            let rec = make_record(t, &r, h.clone(), &problem.ball, None, None);
            axis_events += rec.axis_event as usize;
            records.push(rec);
            break stop;
        }

        let step = fw_step(problem, &r, cfg)?;
        let h_next = obj.value_at_displacement(&step.next);
        if !h_next.is_finite() || !step.gamma.is_finite() {
            return Err(Error::Numeric(format!("non-finite iterate at t = {t}")));
        }
        if h_next > h {
            monotone_violations += 1;
        }
        let dist_next = step.next.norm2_sq();
        if t % cfg.record_every == 0 {
            let s = (dist_next.clone() / dist_sq.clone()).sqrt();
            let rec = make_record(t, &r, h.clone(), &problem.ball, Some(step.gamma.clone()), Some(s));
            axis_events += rec.axis_event as usize;
            records.push(rec);
        } else if r.dim() > 1 && r[1].is_zero() {
            axis_events += 1;
        }
        r = step.next;
        h = h_next;
        dist_sq = dist_next;
        t += 1;
    };

    let mut final_x = r.clone();
    final_x.coords_mut()[0] = r[0].clone() + r[0].one_like();
    Ok(RunOutput {
        records,
        iterations: t,
        final_gap: h,
        final_x,
        stop,
        monotone_violations,
        axis_events,
    })
}

pub const TRAJECTORY_HEADER: &str = "t,x1,x2,gamma,h,u,w,y,s";

/// Writes `t,x1,x2,gamma,h,u,w,y,s`, one line per record; missing values are
/// left empty.
pub fn write_trajectory_csv<S: Real, W: Write>(mut out: W, records: &[TrajectoryRecord<S>]) -> Result<()> {
    writeln!(out, "{TRAJECTORY_HEADER}")?;
    let opt = |v: &Option<S>| v.as_ref().map(Real::to_decimal).unwrap_or_default();
    for rec in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            rec.t,
            rec.x[0].to_decimal(),
            rec.x[1].to_decimal(),
            opt(&rec.gamma),
            rec.h.to_decimal(),
            rec.u.to_decimal(),
            rec.w.to_decimal(),
            opt(&rec.y),
            opt(&rec.s),
        )?;
    }
    Ok(())
}
