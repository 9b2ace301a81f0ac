//! Experiment drivers: rate fits, asymptotic constants, contraction and
//! tracking series, iteration-count heatmaps, HEB runs and the structural
//! checks (trajectory coincidence, support confinement).

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{lp_norm, BallSpec, Vector};
use crate::numeric::Real;
use crate::objective::Objective;
use crate::slow::{fixed_point_y_within, phi_dy, default_dy_step, slow_constants, slow_start};
use crate::solver::{run, Problem, RunOutput, SolverConfig, StopReason, TrajectoryRecord};

/// Minimum number of points inside a rate-fit window.
pub const MIN_FIT_POINTS: usize = 50;
/// Default start of the rate-fit window as a fraction of `T`.
pub const DEFAULT_WINDOW_FRACTION: f64 = 0.1;
/// Margin below the unit sphere for sampled and gridded starts.
pub const INTERIOR_MARGIN: f64 = 1e-9;
pub const DEFAULT_HEATMAP_CAP: usize = 1_000_000;

/// Least-squares line through `(log10 t, log10 h_t)`.
#[derive(Clone, Debug, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub window: (usize, usize),
    pub r_squared: f64,
    pub points: usize,
}

/// Fits `log10 h = intercept + slope log10 t` over `t in [fraction T, T]`,
/// where `T` is the largest `t` supplied.
pub fn fit_rate_series(series: &[(usize, f64)], window_fraction: f64) -> Result<RateFit> {
    if !(0.0..1.0).contains(&window_fraction) {
        return Err(Error::InvalidArgument(format!(
            "window fraction must lie in [0, 1), got {window_fraction}"
        )));
    }
    let t_max = series
        .iter()
        .map(|&(t, _)| t)
        .max()
        .ok_or_else(|| Error::InsufficientData("empty series".into()))?;
    let t_lo = ((window_fraction * t_max as f64).ceil() as usize).max(1);
    let window: Vec<(f64, f64)> = series
        .iter()
        .filter(|&&(t, _)| t >= t_lo && t <= t_max)
        .map(|&(t, h)| (t as f64, h))
        .collect();
    if window.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientData(format!(
            "{} points in window [{t_lo}, {t_max}], need {MIN_FIT_POINTS}",
            window.len()
        )));
    }
    if let Some(&(t, h)) = window.iter().find(|&&(_, h)| !(h > 0.0) || !h.is_finite()) {
        return Err(Error::InsufficientData(format!("non-positive gap {h} at t = {t}")));
    }
    let n = window.len() as f64;
    let xs: Vec<f64> = window.iter().map(|&(t, _)| t.log10()).collect();
    let ys: Vec<f64> = window.iter().map(|&(_, h)| h.log10()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return Err(Error::InsufficientData("window spans a single t".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    Ok(RateFit {
        slope,
        intercept: my - slope * mx,
        window: (t_lo, t_max),
        r_squared,
        points: window.len(),
    })
}

/// `(t, h_t)` with `h` rounded to double.
pub fn gap_series<S: Real>(records: &[TrajectoryRecord<S>]) -> Vec<(usize, f64)> {
    records.iter().map(|r| (r.t, r.h.to_f64())).collect()
}

/// Rate fit of the recorded gaps.
pub fn fit_rate<S: Real>(records: &[TrajectoryRecord<S>], window_fraction: f64) -> Result<RateFit> {
    fit_rate_series(&gap_series(records), window_fraction)
}

/// `(t, h_t t^{p/(p-1)})` for `t >= 1`.
pub fn constant_convergence<S: Real>(records: &[TrajectoryRecord<S>], p: f64) -> Vec<(usize, f64)> {
    scaled_gap_series(records, p / (p - 1.0))
}

/// `(t, h_t t^{exponent})` for `t >= 1`.
pub fn scaled_gap_series<S: Real>(records: &[TrajectoryRecord<S>], exponent: f64) -> Vec<(usize, f64)> {
    records
        .iter()
        .filter(|r| r.t >= 1)
        .map(|r| (r.t, r.h.to_f64() * (r.t as f64).powf(exponent)))
        .collect()
}

/// Largest relative spread `(max - min) / mean` of a series over `t >= t_from`.
pub fn relative_oscillation(series: &[(usize, f64)], t_from: usize) -> f64 {
    let tail: Vec<f64> = series.iter().filter(|&&(t, _)| t >= t_from).map(|&(_, v)| v).collect();
    if tail.is_empty() {
        return 0.0;
    }
    let max = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = tail.iter().cloned().fold(f64::INFINITY, f64::min);
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    (max - min) / mean.abs()
}

/// Exact-line-search run on the quadratic from the slow start.
pub fn slow_start_run<S: Real>(p: &S, u0: &S, iters: usize, record_every: usize) -> Result<RunOutput<S>> {
    let problem = Problem::quadratic(p.clone())?;
    let x0 = slow_start(u0, p)?;
    let cfg = SolverConfig {
        max_iters: iters,
        record_every,
        ..Default::default()
    };
    run(&problem, &x0, &cfg)
}

/// `(t, (1 - s_t) / r_t^kappa)` along a quadratic run, `r_t = sqrt(h_t)`.
pub fn contraction_series<S: Real>(records: &[TrajectoryRecord<S>], p: f64) -> Vec<(usize, f64)> {
    let kappa = 2.0 * (p - 1.0) / p;
    records
        .iter()
        .filter_map(|rec| {
            let s = rec.s.as_ref()?;
            let r = rec.h.sqrt();
            let one = s.one_like();
            let r_k = r.powf(&r.lit(kappa));
            if r_k.is_zero() {
                return None;
            }
            Some((rec.t, ((one - s.clone()) / r_k).to_f64()))
        })
        .collect()
}

/// Largest `|v / target - 1|` over `t >= t_from`.
pub fn max_relative_deviation(series: &[(usize, f64)], target: f64, t_from: usize) -> f64 {
    series
        .iter()
        .filter(|&&(t, _)| t >= t_from)
        .map(|&(_, v)| (v / target - 1.0).abs())
        .fold(0.0, f64::max)
}

/// `(t, |y_t - y*(u_t)| / u_t^kappa)` along a recorded run; rows with
/// `u_t > u_max` are skipped.
pub fn tracking_ratios<S: Real>(
    records: &[TrajectoryRecord<S>],
    p: &S,
    tol: &S,
    u_max: &S,
) -> Result<Vec<(usize, f64)>> {
    let ball = BallSpec::new(p.clone())?;
    records
        .iter()
        .filter(|rec| rec.u > rec.u.zero_like() && &rec.u <= u_max && rec.y.is_some())
        .map(|rec| {
            let pt = fixed_point_y_within(&rec.u, p, tol, u_max)?;
            let y = rec.y.clone().expect("filtered");
            let ratio = (y - pt.y_star).abs() / rec.u.powf(&ball.kappa);
            Ok((rec.t, ratio.to_f64()))
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct TrackingSummary {
    pub first_quarter_max: f64,
    pub last_quarter_max: f64,
    pub overall_max: f64,
}

/// Maxima of a tracking series over the first and last quarters of `[0, T]`.
pub fn tracking_summary(series: &[(usize, f64)], horizon: usize) -> TrackingSummary {
    let q1 = horizon / 4;
    let q3 = horizon - horizon / 4;
    let max_over = |lo: usize, hi: usize| {
        series
            .iter()
            .filter(|&&(t, _)| t >= lo && t <= hi)
            .map(|&(_, v)| v)
            .fold(0.0, f64::max)
    };
    TrackingSummary {
        first_quarter_max: max_over(0, q1.saturating_sub(1)),
        last_quarter_max: max_over(q3, horizon),
        overall_max: max_over(0, horizon),
    }
}

/// `d phi / d y` at the fixed point `y*(u)`, with the default step.
pub fn derivative_at_slow_curve<S: Real>(u: &S, p: &S, tol: &S) -> Result<(S, S)> {
    let y = fixed_point_y_within(u, p, tol, &u.lit(crate::slow::DEFAULT_U_MAX))?.y_star;
    let d = phi_dy(u, &y, p, &default_dy_step(u, p))?;
    Ok((y, d))
}

/// Output of [`heb_experiment`].
#[derive(Clone, Debug)]
pub struct HebRun {
    pub output: RunOutput<f64>,
    /// `-p / (2 theta (p - 1))`
    pub lower_slope: f64,
    /// `-p / (p - 2 theta)`
    pub upper_slope: f64,
    pub fit: RateFit,
}

/// Slope of the HEB lower bound, `-p / (2 theta (p - 1))`.
pub fn heb_lower_slope(p: f64, theta: f64) -> f64 {
    -p / (2.0 * theta * (p - 1.0))
}

/// Slope of the HEB upper bound, `-p / (p - 2 theta)`.
pub fn heb_upper_slope(p: f64, theta: f64) -> f64 {
    -p / (p - 2.0 * theta)
}

/// Limit of `g_T T^{p/(2 theta (p-1))}` implied by the quadratic constant.
pub fn heb_constant(p: f64, theta: f64, mu: f64) -> Result<f64> {
    let c = slow_constants(&p)?.thm_constant;
    Ok(mu.powf(-1.0 / theta) * c.powf(1.0 / (2.0 * theta)))
}

/// Exact-line-search FW on the power-transformed objective from the slow
/// start, with the fitted rate over the last `window_fraction` of the run.
pub fn heb_experiment(
    p: f64,
    theta: f64,
    mu: f64,
    u0: f64,
    iters: usize,
    window_fraction: f64,
) -> Result<HebRun> {
    slow_constants(&p)?;
    let objective = Objective::heb(mu, theta)?;
    let problem = Problem::new(p, objective)?;
    let x0 = slow_start(&u0, &p)?;
    let output = run(&problem, &x0, &SolverConfig::exact(iters))?;
    let fit = fit_rate(&output.records, window_fraction)?;
    Ok(HebRun {
        output,
        lower_slope: heb_lower_slope(p, theta),
        upper_slope: heb_upper_slope(p, theta),
        fit,
    })
}

/// Largest `||x_t^f - x_t^g||_inf` between the quadratic run and the HEB run
/// from the same start; `golden_section` switches the HEB run to a numerical
/// line search on `g`. Runs of unequal length count as infinite deviation.
pub fn coincidence_check<S: Real>(
    p: &S,
    theta: &S,
    mu: &S,
    x0: &Vector<S>,
    iters: usize,
    golden_section: bool,
) -> Result<S> {
    let quad = run(&Problem::quadratic(p.clone())?, x0, &SolverConfig::exact(iters))?;
    let cfg = SolverConfig {
        golden_section,
        ..SolverConfig::exact(iters)
    };
    let heb = run(&Problem::new(p.clone(), Objective::heb(mu.clone(), theta.clone())?)?, x0, &cfg)?;
    if quad.records.len() != heb.records.len() {
        return Ok(p.lit(f64::INFINITY));
    }
    let mut dev = p.zero_like();
    for (a, b) in quad.records.iter().zip(&heb.records) {
        dev = dev.max_of(a.x.sub(&b.x).max_abs());
    }
    Ok(dev)
}

/// Largest `|x_{t,i}|` over `i >= 3` (1-based) along an exact-line-search
/// quadratic run.
pub fn confinement_check<S: Real>(p: &S, x0: &Vector<S>, iters: usize) -> Result<S> {
    if x0.dim() < 3 {
        return Err(Error::InvalidArgument("confinement needs dimension >= 3".into()));
    }
    let out = run(&Problem::quadratic(p.clone())?, x0, &SolverConfig::exact(iters))?;
    let mut m = p.zero_like();
    for rec in &out.records {
        for xi in rec.x.iter().skip(2) {
            m = m.max_of(xi.abs());
        }
    }
    Ok(m)
}

/// `x` padded with zeros to dimension `dim`.
pub fn embed<S: Real>(x: &Vector<S>, dim: usize) -> Vector<S> {
    let mut c = x.coords().to_vec();
    c.resize(dim.max(x.dim()), x[0].zero_like());
    Vector::new(c)
}

/// `n` points drawn uniformly from `[-1, 1]^2` with
/// `||x||_p <= 1 - INTERIOR_MARGIN` (rejection sampling).
pub fn random_initializations(p: f64, n: usize, seed: u64) -> Vec<Vector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let x = Vector::from(vec![rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)]);
        if lp_norm(&x, &p) <= 1.0 - INTERIOR_MARGIN {
            out.push(x);
        }
    }
    out
}

/// Iterations of exact-line-search FW on the quadratic until `h <= target`;
/// `None` when `cap` steps do not suffice.
pub fn iterations_to_target(p: f64, x0: &Vector<f64>, target: f64, cap: usize) -> Result<Option<usize>> {
    let cfg = SolverConfig {
        max_iters: cap,
        gap_tol: target,
        record_every: cap,
        ..Default::default()
    };
    let out = run(&Problem::quadratic(p)?, x0, &cfg)?;
    Ok(match out.stop {
        StopReason::MaxIters => None,
        StopReason::GapReached | StopReason::Optimal => Some(out.iterations),
    })
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))
}

/// Nearest-rank percentile of `values` (`pct` in `(0, 100]`).
pub fn percentile(values: &[usize], pct: f64) -> Option<usize> {
    if values.is_empty() || !(pct > 0.0 && pct <= 100.0) {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    let rank = ((pct / 100.0) * v.len() as f64).ceil() as usize;
    Some(v[rank.clamp(1, v.len()) - 1])
}

#[derive(Clone, Debug, Serialize)]
pub struct SlownessReport {
    pub slow_iters: Option<usize>,
    pub random_iters: Vec<Option<usize>>,
    /// Nearest-rank 90th percentile; capped runs count as `cap`.
    pub percentile_90: usize,
    pub seed: u64,
}

/// Iterations to `target` from the slow start and from `n` seeded random
/// starts.
pub fn slow_start_slowness(
    p: f64,
    u0: f64,
    target: f64,
    cap: usize,
    n: usize,
    seed: u64,
    jobs: usize,
) -> Result<SlownessReport> {
    let slow_iters = iterations_to_target(p, &slow_start(&u0, &p)?, target, cap)?;
    let starts = random_initializations(p, n, seed);
    let random_iters: Vec<Option<usize>> = pool(jobs)?.install(|| {
        starts
            .par_iter()
            .map(|x| iterations_to_target(p, x, target, cap))
            .collect::<Result<_>>()
    })?;
    let counts: Vec<usize> = random_iters.iter().map(|c| c.unwrap_or(cap)).collect();
    let percentile_90 = percentile(&counts, 90.0)
        .ok_or_else(|| Error::InsufficientData("no random starts".into()))?;
    Ok(SlownessReport {
        slow_iters,
        random_iters,
        percentile_90,
        seed,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HeatmapCell {
    pub x1: f64,
    pub x2: f64,
    /// `None` when the cap was reached.
    pub iters: Option<usize>,
}

/// `n` evenly spaced points from `-1` to `1` inclusive.
pub fn linspace_unit(n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.0],
        _ => (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Iteration counts over an `n x n` grid on `[-1, 1]^2`, keeping points with
/// `||x||_p <= 1 - INTERIOR_MARGIN`. Cells are ordered by `x1` index, then
/// `x2` index, independently of `jobs` (`0` uses every core).
pub fn heatmap(p: f64, grid_n: usize, target: f64, cap: usize, jobs: usize) -> Result<Vec<HeatmapCell>> {
    if grid_n < 16 {
        return Err(Error::InvalidArgument(format!("grid must be at least 16, got {grid_n}")));
    }
    if !(target > 0.0) || cap == 0 {
        return Err(Error::InvalidArgument("target must be positive and cap >= 1".into()));
    }
    BallSpec::new(p)?;
    let axis = linspace_unit(grid_n);
    let points: Vec<Vector<f64>> = axis
        .iter()
        .flat_map(|&a| axis.iter().map(move |&b| Vector::from(vec![a, b])))
        .filter(|x| lp_norm(x, &p) <= 1.0 - INTERIOR_MARGIN)
        .collect();
    pool(jobs)?.install(|| {
        points
            .par_iter()
            .map(|x| {
                Ok(HeatmapCell {
                    x1: x[0],
                    x2: x[1],
                    iters: iterations_to_target(p, x, target, cap)?,
                })
            })
            .collect()
    })
}

/// Writes `x1,x2,iters` with `-1` for capped cells.
pub fn write_heatmap_csv<W: Write>(mut out: W, cells: &[HeatmapCell]) -> Result<()> {
    writeln!(out, "x1,x2,iters")?;
    for c in cells {
        let iters = c.iters.map_or(-1, |k| k as i64);
        writeln!(out, "{:.16e},{:.16e},{}", c.x1, c.x2, iters)?;
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct BandStats {
    pub cells: usize,
    pub median: f64,
    pub band_cells: usize,
    pub band_mean: f64,
}

/// Compares cells with `| |x2| - y*(u) u^{1+alpha} | <= band`, `0 < u <= u_max`,
/// against the median over all cells. Capped cells count as `cap`.
pub fn heatmap_band_stats(cells: &[HeatmapCell], p: f64, band: f64, u_max: f64, cap: usize) -> Result<BandStats> {
    if cells.is_empty() {
        return Err(Error::InsufficientData("empty heatmap".into()));
    }
    let ball = BallSpec::new(p)?;
    let count = |c: &HeatmapCell| c.iters.unwrap_or(cap) as f64;
    let mut all: Vec<f64> = cells.iter().map(count).collect();
    all.sort_by(|a, b| a.total_cmp(b));
    let n = all.len();
    let median = if n % 2 == 1 {
        all[n / 2]
    } else {
        0.5 * (all[n / 2 - 1] + all[n / 2])
    };
    let mut curve_cache: Vec<(u64, f64)> = Vec::new();
    let mut band_sum = 0.0;
    let mut band_cells = 0;
    for c in cells {
        let u = 1.0 - c.x1;
        if !(u > 0.0 && u <= u_max) {
            continue;
        }
        let key = u.to_bits();
        let w_curve = match curve_cache.iter().find(|(k, _)| *k == key) {
            Some(&(_, w)) => w,
            None => {
                let y = fixed_point_y_within(&u, &p, &1e-12, &u_max)?.y_star;
                let w = y * u.powf(1.0 + ball.alpha);
                curve_cache.push((key, w));
                w
            }
        };
        if (c.x2.abs() - w_curve).abs() <= band {
            band_sum += count(c);
            band_cells += 1;
        }
    }
    Ok(BandStats {
        cells: n,
        median,
        band_cells,
        band_mean: if band_cells > 0 { band_sum / band_cells as f64 } else { f64::NAN },
    })
}

/// Rate report consumed by the plotting scripts.
#[derive(Clone, Debug, Serialize)]
pub struct RatesReport {
    pub p: f64,
    pub theta: f64,
    pub mu: f64,
    pub u0: f64,
    #[serde(rename = "T")]
    pub t: usize,
    pub slope: f64,
    pub expected_slope: f64,
    pub constant_tail: f64,
    pub expected_constant: f64,
    pub upper_bound_slope: Option<f64>,
    pub window: (usize, usize),
    pub window_fraction: f64,
    pub r_squared: f64,
    /// Factors `c` with `c t_lo^slope` equal to the gap at the window start,
    /// for the lower- and upper-bound reference lines.
    pub reference_scale: f64,
    pub upper_reference_scale: Option<f64>,
    pub in_theorem_scope: bool,
}

/// Runs the slow start on the quadratic (`theta = None`) or on the power
/// transform and summarizes rate and constant.
pub fn rates_report(
    p: f64,
    theta: Option<f64>,
    mu: f64,
    u0: f64,
    iters: usize,
    window_fraction: f64,
) -> Result<(RatesReport, RunOutput<f64>)> {
    let k = slow_constants(&p)?;
    let (output, expected_slope, expected_constant, upper, th, m) = match theta {
        None => (
            slow_start_run(&p, &u0, iters, 1)?,
            -k.rate_exponent,
            k.thm_constant,
            None,
            0.5,
            1.0,
        ),
        Some(th) => {
            let r = heb_experiment(p, th, mu, u0, iters, window_fraction)?;
            (r.output, r.lower_slope, heb_constant(p, th, mu)?, Some(r.upper_slope), th, mu)
        }
    };
    let series = gap_series(&output.records);
    let fit = fit_rate_series(&series, window_fraction)?;
    let tail = scaled_gap_series(&output.records, -expected_slope)
        .last()
        .map(|&(_, v)| v)
        .ok_or_else(|| Error::InsufficientData("empty run".into()))?;
    let at_lo = series
        .iter()
        .find(|&&(t, _)| t >= fit.window.0)
        .map(|&(t, h)| (t as f64, h))
        .expect("window is non-empty");
    let scale_for = |slope: f64| at_lo.1 / at_lo.0.powf(slope);
    Ok((
        RatesReport {
            p,
            theta: th,
            mu: m,
            u0,
            t: output.iterations,
            slope: fit.slope,
            expected_slope,
            constant_tail: tail,
            expected_constant,
            upper_bound_slope: upper,
            window: fit.window,
            window_fraction,
            r_squared: fit.r_squared,
            reference_scale: scale_for(expected_slope),
            upper_reference_scale: upper.map(scale_for),
            in_theorem_scope: k.in_theorem_scope,
        },
        output,
    ))
}
