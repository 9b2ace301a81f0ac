//! Exit criteria of the laboratory. Each criterion prints one PASS/FAIL line;
//! the process fails if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use fwlab::experiments::{
    coincidence_check, confinement_check, constant_convergence, contraction_series, derivative_at_slow_curve,
    embed, fit_rate, heatmap, heatmap_band_stats, heb_experiment, max_relative_deviation, random_initializations,
    slow_start_run, slow_start_slowness, tracking_ratios, tracking_summary, DEFAULT_HEATMAP_CAP,
};
use fwlab::geometry::lmo_offset_from_e1;
use fwlab::slow::{fixed_point_y, geometric_grid, phi_dy, ratio_identity_step, slow_constants, slow_start, CenteredState};
use fwlab::solver::{fw_step, RunOutput};
use fwlab::{run, Ext, Problem, Real, SolverConfig, StepRule, Vector};

const T_LONG: usize = 100_000;
const U0: f64 = 0.5;
const WINDOW: f64 = 0.1;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn long_run(p: f64) -> RunOutput<f64> {
    slow_start_run(&p, &U0, T_LONG, 1).expect("slow-start run")
}

fn rate_exponent() -> Outcome {
    let mut pass = true;
    let mut parts = vec![];
    for (p, want) in [(3.0, -1.5), (5.0, -1.25)] {
        let fit = fit_rate(&long_run(p).records, WINDOW).unwrap();
        let ok = (fit.slope - want).abs() <= 0.05;
        pass &= ok;
        parts.push(format!("p={p}: slope {:.4} (want {want} +- 0.05)", fit.slope));
    }
    outcome(pass, parts.join("; "))
}

fn asymptotic_constant() -> Outcome {
    let mut pass = true;
    let mut parts = vec![];
    // stated targets, next to the closed-form constant at full precision
    for (p, stated) in [(3.0, 0.408248), (5.0, 0.33588)] {
        let series = constant_convergence(&long_run(p).records, p);
        let (t, tail) = *series.last().unwrap();
        let exact = slow_constants(&p).unwrap().thm_constant;
        let dev_stated = (tail / stated - 1.0).abs();
        let dev_exact = (tail / exact - 1.0).abs();
        pass &= t == T_LONG && dev_stated <= 0.05 && dev_exact <= 0.05;
        parts.push(format!(
            "p={p}: h_T T^(p/(p-1)) = {tail:.6} vs {stated} ({:.2}%), closed form {exact:.6} ({:.2}%)",
            100.0 * dev_stated,
            100.0 * dev_exact
        ));
    }
    outcome(pass, parts.join("; "))
}

fn heb_exponent() -> Outcome {
    let mut pass = true;
    let mut parts = vec![];
    for (p, theta, want) in [(3.0, 1.0 / 3.0, -2.25), (5.0, 0.25, -2.5)] {
        let run = heb_experiment(p, theta, 1.0, U0, T_LONG, WINDOW).unwrap();
        let ok = (run.fit.slope - want).abs() <= 0.1 && (run.lower_slope - want).abs() < 1e-12;
        pass &= ok;
        parts.push(format!(
            "p={p} theta={theta:.4}: slope {:.4} (want {want} +- 0.1, upper-bound ref {:.4})",
            run.fit.slope, run.upper_slope
        ));
    }
    outcome(pass, parts.join("; "))
}

fn contraction_law() -> Outcome {
    let mut pass = true;
    let mut parts = vec![];
    for p in [3.0, 4.0, 5.0] {
        let a_p = slow_constants(&p).unwrap().a_p;
        let series = contraction_series(&long_run(p).records, p);
        let dev = max_relative_deviation(&series, a_p, T_LONG / 10);
        pass &= dev < 0.02;
        parts.push(format!("p={p}: max dev {:.3e} from a_p={a_p:.6}", dev));
    }
    outcome(pass, parts.join("; "))
}

fn fixed_point_curve() -> Outcome {
    let mut pass = true;
    let mut parts = vec![];
    let tol = 1e-12;
    for p in [3.0, 4.0, 5.0] {
        let worst = geometric_grid(1e-6, 0.1, 60)
            .iter()
            .map(|u| fixed_point_y(u, &p, &tol).map(|pt| pt.residual.abs()))
            .collect::<Result<Vec<_>, _>>();
        let worst = match worst {
            Ok(v) => v.into_iter().fold(0.0, f64::max),
            Err(e) => {
                pass = false;
                parts.push(format!("p={p}: {e}"));
                continue;
            }
        };
        let eps = 1e-4;
        let a = fixed_point_y(&eps, &p, &1e-14).unwrap().y_star;
        let b = fixed_point_y(&(2.0 * eps), &p, &1e-14).unwrap().y_star;
        let d_p = slow_constants(&p).unwrap().d_p;
        let slope = (b - a) / eps;
        let ok = worst <= tol && (slope / d_p - 1.0).abs() <= 0.1;
        pass &= ok;
        parts.push(format!("p={p}: max residual {worst:.1e}, slope {slope:.5} vs D_p {d_p:.5}"));
    }
    let p = 3.0;
    let q = p / (p - 1.0);
    let eps = 1e-4;
    let z = fixed_point_y(&eps, &p, &1e-14).unwrap().y_star.powf(q);
    let drift = (z - p / (p + 1.0)) / eps;
    let ok = (drift / 0.234375 - 1.0).abs() <= 0.1;
    pass &= ok;
    parts.push(format!("z drift at p=3: {drift:.6} vs 0.234375"));
    outcome(pass, parts.join("; "))
}

fn tracking() -> Outcome {
    let horizon = 10_000;
    let mut pass = true;
    let mut parts = vec![];
    for p in [3.0, 4.0, 5.0] {
        for u0 in [0.25, 0.5, 0.75] {
            let out = slow_start_run(&p, &u0, horizon, 1).unwrap();
            let u_max = f64::max(u0, fwlab::slow::DEFAULT_U_MAX);
            let series = tracking_ratios(&out.records, &p, &1e-13, &u_max).unwrap();
            let s = tracking_summary(&series, horizon);
            let ok = s.last_quarter_max <= 1.1 * s.first_quarter_max;
            pass &= ok;
            parts.push(format!(
                "p={p} u0={u0}: {:.3}/{:.3}",
                s.last_quarter_max, s.first_quarter_max
            ));
        }
    }
    outcome(pass, format!("last/first quarter max: {}", parts.join(", ")))
}

fn contraction_derivative() -> Outcome {
    let mut pass = true;
    let mut parts = vec![];
    let p = 4.0;
    let mut worst: f64 = 0.0;
    for u in [1e-3, 1e-4, 1e-5, 1e-6] {
        let (y, _) = derivative_at_slow_curve(&u, &p, &1e-14).unwrap();
        for dy in [-1e-3, 0.0, 1e-3] {
            let yy = y + dy;
            let d = phi_dy(&u, &yy, &p, &fwlab::slow::default_dy_step(&u, &p)).unwrap();
            worst = worst.max(d.abs());
        }
    }
    pass &= worst <= 0.75;
    parts.push(format!("p=4: max |dphi/dy| {worst:.4} (<= 0.75)"));
    for u in [1e-2, 1e-3] {
        let (_, d) = derivative_at_slow_curve(&u, &3.0, &1e-14).unwrap();
        let ratio = (1.0 - d.abs()) / (0.75 * u);
        let ok = (ratio - 1.0).abs() <= 0.15;
        pass &= ok;
        parts.push(format!("p=3 u={u:.0e}: (1-|dphi/dy|)/(0.75u) = {ratio:.4}"));
    }
    // the same ratio at 256 bits, down to small u
    let bits = 256;
    let p3 = Ext::from_f64(3.0, bits);
    let trend: Vec<String> = [1e-2, 1e-3, 1e-4, 1e-6]
        .iter()
        .map(|&u| {
            let ue = Ext::from_f64(u, bits);
            let y = fixed_point_y(&ue, &p3, &Ext::parse("1e-60", bits)).unwrap().y_star;
            let d = phi_dy(&ue, &y, &p3, &fwlab::slow::default_dy_step(&ue, &p3)).unwrap();
            let ratio = (d.one_like() - d.abs()) / (ue.lit(0.75) * ue.clone());
            format!("{u:.0e}: {:.4}", ratio.to_f64())
        })
        .collect();
    parts.push(format!("256-bit ratio {}", trend.join(", ")));
    outcome(pass, parts.join("; "))
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn structural_identities() -> Outcome {
    let mut ratio_worst: f64 = 0.0;
    let mut decrease_worst: f64 = 0.0;
    let mut checked = 0usize;
    let mut starts: Vec<(f64, Vector<f64>)> = vec![];
    for p in [3.0, 4.0, 5.0] {
        starts.push((p, slow_start(&U0, &p).unwrap()));
        starts.extend(random_initializations(p, 5, 11).into_iter().map(|x| (p, x)));
    }
    for (p, x0) in &starts {
        let problem = Problem::quadratic(*p).unwrap();
        let out = run(&problem, x0, &SolverConfig::exact(10_000)).unwrap();
        for pair in out.records.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            let gamma = a.gamma.unwrap();
            if gamma >= 1.0 || b.t != a.t + 1 {
                continue;
            }
            let r = fwlab::objective::displacement(&a.x);
            let d = lmo_offset_from_e1(&r, &problem.ball).unwrap().sub(&r);
            let predicted = r.dot(&d).powi(2) / d.norm2_sq();
            decrease_worst = decrease_worst.max(rel(a.h - b.h, predicted));
            if a.w != 0.0 {
                let (u1, w1) = ratio_identity_step(&CenteredState::new(a.u, a.w), p).unwrap();
                ratio_worst = ratio_worst.max(rel(u1, b.u)).max(rel(w1, b.w.abs()));
            }
            checked += 1;
        }
    }

    // short step vs exact line search
    let mut gamma_worst: f64 = 0.0;
    for (p, x0) in &starts {
        let ex = run(&Problem::quadratic(*p).unwrap(), x0, &SolverConfig::exact(2000)).unwrap();
        let cfg = SolverConfig {
            rule: StepRule::ShortStep,
            ..SolverConfig::exact(2000)
        };
        let sh = run(&Problem::quadratic(*p).unwrap(), x0, &cfg).unwrap();
        for (a, b) in ex.records.iter().zip(&sh.records) {
            if let (Some(ga), Some(gb)) = (a.gamma, b.gamma) {
                gamma_worst = gamma_worst.max((ga - gb).abs());
            }
        }
        let problem = Problem::quadratic(*p).unwrap();
        let r = fwlab::objective::displacement(x0);
        let e = fw_step(&problem, &r, &SolverConfig::exact(1)).unwrap().gamma;
        let s = fw_step(&problem, &r, &cfg).unwrap().gamma;
        gamma_worst = gamma_worst.max((e - s).abs());
    }

    let mut confinement: f64 = 0.0;
    for p in [3.0, 5.0] {
        let x0 = embed(&slow_start(&U0, &p).unwrap(), 5);
        confinement = confinement.max(confinement_check(&p, &x0, 1000).unwrap());
        let x0 = Vector::from(vec![0.0, 0.5, 0.0]);
        confinement = confinement.max(confinement_check(&p, &x0, 100).unwrap());
    }

    let mut coincidence: f64 = 0.0;
    for (p, theta, mu) in [(3.0, 1.0 / 3.0, 1.0), (5.0, 0.25, 2.0), (4.0, 0.1, 0.5), (3.0, 0.5, 1.0)] {
        let mut xs = vec![slow_start(&U0, &p).unwrap()];
        xs.extend(random_initializations(p, 3, 5));
        for x0 in &xs {
            coincidence = coincidence.max(coincidence_check(&p, &theta, &mu, x0, 5000, false).unwrap());
        }
    }

    let pass = ratio_worst <= 1e-10
        && decrease_worst <= 1e-10
        && gamma_worst <= 1e-15
        && confinement == 0.0
        && coincidence == 0.0
        && checked > 0;
    outcome(
        pass,
        format!(
            "{checked} steps: ratio identity {ratio_worst:.1e}, decrease identity {decrease_worst:.1e}; \
             |gamma_exact - gamma_short| {gamma_worst:.1e}; confinement {confinement:e}; coincidence {coincidence:e}"
        ),
    )
}

fn slow_start_slowness_check() -> Outcome {
    let seed = 1;
    let rep = slow_start_slowness(3.0, U0, 1e-4, DEFAULT_HEATMAP_CAP, 200, seed, 0).unwrap();
    let slow = rep.slow_iters.unwrap_or(DEFAULT_HEATMAP_CAP);
    outcome(
        slow >= rep.percentile_90,
        format!(
            "slow start {slow} iterations vs 90th percentile {} of 200 random starts (seed {seed})",
            rep.percentile_90
        ),
    )
}

fn heatmap_structure() -> Outcome {
    let p = 3.0;
    let cells = heatmap(p, 200, 1e-4, DEFAULT_HEATMAP_CAP, 0).unwrap();
    let stats = heatmap_band_stats(&cells, p, 0.01, fwlab::slow::DEFAULT_U_MAX, DEFAULT_HEATMAP_CAP).unwrap();
    outcome(
        stats.band_cells > 0 && stats.band_mean > stats.median,
        format!(
            "{} cells, median {}, {} cells near the slow curve with mean {:.2}",
            stats.cells, stats.median, stats.band_cells, stats.band_mean
        ),
    )
}

fn main() -> ExitCode {
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("rate exponent", rate_exponent),
        ("asymptotic constant", asymptotic_constant),
        ("HEB exponent", heb_exponent),
        ("contraction law", contraction_law),
        ("fixed-point curve", fixed_point_curve),
        ("tracking", tracking),
        ("contraction derivative", contraction_derivative),
        ("structural identities", structural_identities),
        ("slow-start slowness", slow_start_slowness_check),
        ("heatmap structure", heatmap_structure),
    ];
    let results: Vec<(&str, Outcome, f64)> = std::thread::scope(|s| {
        let handles: Vec<_> = criteria
            .iter()
            .map(|&(name, f)| {
                s.spawn(move || {
                    let start = Instant::now();
                    let o = f();
                    (name, o, start.elapsed().as_secs_f64())
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("criterion panicked")).collect()
    });
    let mut failed = 0;
    for (name, o, secs) in &results {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!o.pass);
        println!("{tag} {name} ({secs:.1}s): {}", o.detail);
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
