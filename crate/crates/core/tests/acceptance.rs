//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

mod common;

use std::sync::Arc;
use std::time::Instant;

use krasov_core::assumptions::check_all;
use krasov_core::control::{alpha, potential_via_path, solve_equilibrium_input, PATH_SEGMENTS};
use krasov_core::models::{hvac_default_scenario, HvacModel, HvacParams, RlcModel, RlcParams};
use krasov_core::simulate::{
    passivity_audit, simulate_closed_loop, simulate_driven, simulate_prolonged, DrivenInput, EpsilonCalibration,
    SimulationConfig, SimulationTrace,
};
use krasov_core::system::{g_time_derivative, ControlAffineModel};
use krasov_core::CheckConfig;
use nalgebra::{dvector, DMatrix, DVector};

use common::{central_rates, jacobi_eigenvalues, rng, stamped_conductance, uniform_vec};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn run(model: &HvacModel, cfg: &SimulationConfig) -> Result<SimulationTrace, String> {
    simulate_closed_loop(model, cfg).map_err(|e| e.to_string())
}

fn hvac_assumptions() -> Outcome {
    let start = Instant::now();
    let model = HvacModel::new(HvacParams::default()).map_err(|e| e.to_string())?;
    let report = check_all(&model, &CheckConfig::default());
    let elapsed = start.elapsed().as_secs_f64();
    ensure(report.all_pass(), || format!("assumption report failed: {report:?}"))?;

    let p = model.params();
    let lap = stamped_conductance(p.r13, p.r24, p.r34, p.r10, p.r20);
    let oracle = *jacobi_eigenvalues(&(lap * -2.0)).last().unwrap();
    let worst = report.a1.worst_eig.unwrap();
    ensure((worst - oracle).abs() < 1e-8, || format!("A1 worst eigenvalue {worst} vs oracle {oracle}"))?;
    ensure(elapsed < 5.0, || format!("took {elapsed:.2} s"))?;
    Ok(format!(
        "A1 worst eig {worst:.12} (oracle {oracle:.12}), A2 residual {:.1e}, A3 asymmetry {:.1e}, {elapsed:.2} s",
        report.a2.worst_residual.unwrap(),
        report.a3.worst_asymmetry.unwrap()
    ))
}

fn alpha_cancels_g_rate() -> Outcome {
    let model = HvacModel::new(HvacParams::default()).map_err(|e| e.to_string())?;
    let ts = model.params().t_supply;
    let mut rng = rng(11);
    let mut worst = 0.0f64;
    let mut worst_closed_form = 0.0f64;
    let mut count = 0;
    while count < 100 {
        let x = uniform_vec(&mut rng, &[-30.0, -30.0, -20.0, -20.0], &[20.0, 20.0, 20.0, 20.0]);
        if (x[0] - ts).abs() <= 1.0 || (x[1] - ts).abs() <= 1.0 {
            continue;
        }
        count += 1;
        let u = uniform_vec(&mut rng, &[-2.0, -2.0], &[2.0, 2.0]);
        let xd = model.drift(&x) + model.input_matrix(&x) * &u;
        let a = alpha(&model, &x, &xd).map_err(|e| e.to_string())?;
        let gdot = g_time_derivative(&model, &x, &xd).map_err(|e| e.to_string())?;
        worst = worst.max((gdot + model.input_matrix(&x) * &a).amax());
        for j in 0..2 {
            let closed = xd[j] / (ts - x[j]);
            worst_closed_form = worst_closed_form.max((a[(j, j)] - closed).abs());
        }
    }
    ensure(worst < 1e-9, || format!("|g' + g alpha| = {worst:.3e}"))?;
    ensure(worst_closed_form < 1e-12, || format!("alpha off its diagonal closed form by {worst_closed_form:.3e}"))?;
    Ok(format!("max |g' + g alpha| = {worst:.2e} over 100 states"))
}

fn default_convergence() -> Outcome {
    let start = Instant::now();
    let (model, cfg) = hvac_default_scenario();
    let trace = run(&model, &cfg)?;
    let elapsed = start.elapsed().as_secs_f64();
    let s = &trace.summary;
    let last = trace.last().unwrap();
    let t_conv = s.t_converge.ok_or("band never reached")?;
    ensure(s.converged && t_conv < cfg.t_end, || format!("summary {s:?}"))?;
    ensure((last.x[0] - 2.5).abs() < 0.01 && (last.x[1] - 6.0).abs() < 0.01, || {
        format!("final zones ({}, {})", last.x[0], last.x[1])
    })?;
    ensure(s.peak_abs_u[1] > s.peak_abs_u[0], || format!("peaks {:?}", s.peak_abs_u))?;
    ensure(elapsed < 10.0, || format!("took {elapsed:.2} s"))?;
    Ok(format!(
        "band 0.01 reached at t = {t_conv:.2} of {}, peak |u| = ({:.4}, {:.4}), {elapsed:.2} s",
        cfg.t_end, s.peak_abs_u[0], s.peak_abs_u[1]
    ))
}

fn passivity_audits() -> Outcome {
    let (model, cfg) = hvac_default_scenario();
    let coarse = run(&model, &cfg)?;
    let fine = run(&model, &cfg.clone().with_horizon(cfg.t_end, cfg.dt / 2.0))?;
    let a = passivity_audit(&coarse, &cfg.gains).ok_or("trace too short")?;
    let b = passivity_audit(&fine, &cfg.gains).ok_or("trace too short")?;
    let cal = EpsilonCalibration::fit(cfg.dt, a.slack(), b.slack());
    let eps_fine = cal.constant * (cfg.dt / 2.0).powi(2);
    ensure(a.clean(cal.epsilon), || format!("violation {:.3e} > eps {:.3e}", a.worst_violation(), cal.epsilon))?;
    ensure(b.clean(eps_fine), || format!("fine violation {:.3e} > eps {:.3e}", b.worst_violation(), eps_fine))?;
    ensure(cal.refinement_ratio() >= 3.0, || format!("slack ratio {:.2}", cal.refinement_ratio()))?;

    let mut flipped = cfg.clone().with_horizon(10.0, cfg.dt);
    flipped.gains.kd = -cfg.gains.kd;
    let bad = run(&model, &flipped)?;
    let bad_audit = passivity_audit(&bad, &cfg.gains).ok_or("trace too short")?;
    ensure(!bad_audit.clean(cal.epsilon), || "negated damping went unnoticed".to_string())?;
    Ok(format!(
        "worst residual V {:.2e}, V_d {:.2e}; eps = {:.2e}; slack ratio {:.2}; flipped kd violation {:.2e}",
        a.storage.worst_residual,
        a.shaped.worst_residual,
        cal.epsilon,
        cal.refinement_ratio(),
        bad_audit.worst_violation()
    ))
}

fn gamma_error_along(trace: &SimulationTrace, model: &HvacModel, spacing: f64) -> f64 {
    let p = model.params();
    // Gamma_j = -cp (T_j - Ts)^2 / 2, written out independently of the model.
    let gamma: Vec<[f64; 2]> = trace
        .records
        .iter()
        .map(|r| [0, 1].map(|j| -0.5 * p.cp * (r.x[j] - p.t_supply).powi(2)))
        .collect();
    let mut worst = 0.0f64;
    for j in 0..2 {
        let series: Vec<f64> = gamma.iter().map(|g| g[j]).collect();
        for (k, rate) in central_rates(&series, spacing).into_iter().enumerate() {
            worst = worst.max((rate - trace.records[k + 1].y[j]).abs());
        }
    }
    worst
}

fn gamma_consistency() -> Outcome {
    let (model, cfg) = hvac_default_scenario();
    let spacing = cfg.dt * cfg.log_stride as f64;
    let coarse = run(&model, &cfg)?;
    let fine = run(&model, &cfg.clone().with_horizon(cfg.t_end, cfg.dt / 2.0))?;
    let e1 = gamma_error_along(&coarse, &model, spacing);
    let e2 = gamma_error_along(&fine, &model, spacing / 2.0);
    ensure(e1 / e2 >= 3.0, || format!("Gamma' vs y error ratio {:.2} ({e1:.3e} -> {e2:.3e})", e1 / e2))?;

    let mut rng = rng(5);
    let dom = model.domain();
    let (lo, hi) = (dom.lower.as_slice().to_vec(), dom.upper.as_slice().to_vec());
    let anchor = dom.center();
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let x = uniform_vec(&mut rng, &lo, &hi);
        let closed = model.potential(&x).unwrap() - model.potential(&anchor).unwrap();
        let path = potential_via_path(&model, &x, &anchor, PATH_SEGMENTS).map_err(|e| e.to_string())?;
        worst = worst.max((closed - path).amax());
    }
    ensure(worst < 1e-6, || format!("closed form vs path {worst:.3e}"))?;
    Ok(format!(
        "Gamma' vs y {e1:.2e} -> {e2:.2e} (ratio {:.2}, C = {:.2e}); closed form vs path {worst:.1e}",
        e1 / e2,
        e1 / (spacing * spacing)
    ))
}

fn equilibrium_behavior() -> Outcome {
    let (model, cfg) = hvac_default_scenario();
    let u_star = solve_equilibrium_input(&model, &cfg.x_star).map_err(|e| e.to_string())?;
    let rest = run(&model, &cfg.clone().with_u0(u_star.clone()).with_x0(cfg.x_star.clone()))?;
    let drift = rest
        .records
        .iter()
        .map(|r| (&r.x - &cfg.x_star).amax().max((&r.u - &u_star).amax()))
        .fold(0.0, f64::max);
    ensure(drift < 1e-9, || format!("equilibrium start drifted by {drift:.3e}"))?;

    let mut rng = rng(23);
    let mut worst_u = 0.0f64;
    for _ in 0..3 {
        let x0 = uniform_vec(&mut rng, &[-2.0, -2.0, -2.0, -2.0], &[10.0, 10.0, 10.0, 10.0]);
        let u0 = uniform_vec(&mut rng, &[-0.5, -0.5], &[0.5, 0.5]);
        let trace = run(&model, &cfg.clone().with_u0(u0).with_x0(x0))?;
        worst_u = worst_u.max((&trace.last().unwrap().u - &u_star).amax());
    }
    ensure(worst_u < 1e-4, || format!("final |u - u*| = {worst_u:.3e}"))?;
    Ok(format!(
        "u* = ({:.6}, {:.6}); drift at rest {drift:.1e}; generic starts |u - u*| <= {worst_u:.1e}",
        u_star[0], u_star[1]
    ))
}

/// Series RLC storage `S = (L i'^2 + C v'^2) / 2` from the circuit law
/// `L i' = -R i - v + Vs`, `C v' = i`.
fn series_storage(l: f64, c: f64, r: f64, i: f64, v: f64, vs: f64) -> (f64, f64) {
    let di = (-r * i - v + vs) / l;
    let dv = i / c;
    (0.5 * (l * di * di + c * dv * dv), di)
}

fn rlc_dissipation() -> Outcome {
    let (l, c, r) = (1.0, 1.0, 1.5);
    let model = RlcModel::new(RlcParams::series(l, c, r)).map_err(|e| e.to_string())?;
    let (amp, omega) = (1.0, 2.0);
    let input: DrivenInput =
        Arc::new(move |t: f64| (dvector![amp * (omega * t).sin()], dvector![amp * omega * (omega * t).cos()]));
    let dt = 1e-3;
    let stride = 10;
    let audit_at = |dt: f64| -> Result<(f64, f64), String> {
        let trace =
            simulate_driven(&model, &dvector![0.0, 0.0], &input, dt, 20.0, stride).map_err(|e| e.to_string())?;
        let h = dt * stride as f64;
        let rows: Vec<(f64, f64, f64)> = trace
            .records
            .iter()
            .map(|rec| {
                let (s, di) = series_storage(l, c, r, rec.x[0], rec.x[1], rec.u[0]);
                (s, di * rec.udot[0], rec.storage_rate)
            })
            .collect();
        let s: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let rates = central_rates(&s, h);
        let mut violation = f64::NEG_INFINITY;
        let mut slack = 0.0f64;
        for (k, rate) in rates.iter().enumerate() {
            violation = violation.max(rate - rows[k + 1].1);
            slack = slack.max((rate - rows[k + 1].2).abs());
        }
        Ok((violation, slack))
    };
    let (viol, slack) = audit_at(dt)?;
    let (viol_fine, slack_fine) = audit_at(dt / 2.0)?;
    let cal = EpsilonCalibration::fit(dt, slack, slack_fine);
    ensure(viol <= cal.epsilon, || format!("S' - i'Vs' = {viol:.3e} > eps {:.3e}", cal.epsilon))?;
    ensure(viol_fine <= cal.constant * (dt / 2.0).powi(2), || format!("fine violation {viol_fine:.3e}"))?;

    let zero: DrivenInput = Arc::new(|_| (dvector![0.0], dvector![0.0]));
    let free = simulate_driven(&model, &dvector![1.0, 0.5], &zero, dt, 20.0, 1).map_err(|e| e.to_string())?;
    let storage: Vec<f64> = free.records.iter().map(|rec| series_storage(l, c, r, rec.x[0], rec.x[1], 0.0).0).collect();
    let s0 = storage[0];
    let rise = storage.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    ensure(rise <= 4.0 * f64::EPSILON * s0, || format!("free storage rose by {rise:.3e} (S0 = {s0})"))?;
    Ok(format!(
        "worst S' - i'Vs' = {viol:.2e} (eps {:.2e}); free-run largest step {rise:.2e}",
        cal.epsilon
    ))
}

fn prolonged_passivity() -> Outcome {
    let (model, cfg) = hvac_default_scenario();
    let dx0 = dvector![0.1, 0.0, 0.0, 0.0];
    let coarse = simulate_prolonged(&model, &cfg, &dx0, None).map_err(|e| e.to_string())?;
    let fine = simulate_prolonged(&model, &cfg.clone().with_horizon(cfg.t_end, cfg.dt / 2.0), &dx0, None)
        .map_err(|e| e.to_string())?;
    let rise = coarse.max_storage_increase();
    ensure(rise <= 0.0, || format!("delta storage rose by {rise:.3e}"))?;
    let (a, b) = (coarse.audit.ok_or("trace too short")?, fine.audit.ok_or("trace too short")?);
    let cal = EpsilonCalibration::fit(cfg.dt, a.slack, b.slack);
    ensure(a.holds_within(cal.epsilon), || format!("residual {:.3e} > eps {:.3e}", a.worst_residual, cal.epsilon))?;
    ensure(cal.refinement_ratio() >= 3.0, || format!("slack ratio {:.2}", cal.refinement_ratio()))?;
    Ok(format!(
        "largest delta-storage step {rise:.2e}; worst residual {:.2e}; slack ratio {:.2}",
        a.worst_residual,
        cal.refinement_ratio()
    ))
}

fn integrator_oracle() -> Outcome {
    let (model, cfg) = hvac_default_scenario();
    let coarse = run(&model, &cfg)?;
    let fine = run(&model, &cfg.clone().with_horizon(cfg.t_end, cfg.dt / 10.0).with_log_stride(1000))?;
    let gap = (&coarse.last().unwrap().x - &fine.last().unwrap().x).amax();
    ensure(gap < 1e-6, || format!("dt vs dt/10 final states differ by {gap:.3e}"))?;

    // Free thermal relaxation x' = -C^{-1} L x against exp(A t) x0.
    let p = model.params();
    let lap = stamped_conductance(p.r13, p.r24, p.r34, p.r10, p.r20);
    let c_inv = DMatrix::from_diagonal(&dvector![1.0 / p.c1, 1.0 / p.c2, 1.0 / p.c3, 1.0 / p.c4]);
    let a = -(c_inv * lap);
    let x0 = dvector![3.0, -1.0, 8.0, 2.0];
    let t_end = 5.0;
    let zero: DrivenInput = Arc::new(|_| (DVector::zeros(2), DVector::zeros(2)));
    let trace = simulate_driven(&model, &x0, &zero, 1e-2, t_end, 500).map_err(|e| e.to_string())?;
    let reference = (a * t_end).exp() * &x0;
    let err = (&trace.records.last().unwrap().x - reference).amax();
    ensure(err < 1e-8, || format!("linear drift vs matrix exponential {err:.3e}"))?;
    Ok(format!("dt vs dt/10 gap {gap:.2e}; matrix-exponential error {err:.2e}"))
}

type Criterion = (u32, &'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        (1, "hvac assumption suite", hvac_assumptions),
        (2, "g rate cancelled by alpha", alpha_cancels_g_rate),
        (3, "default scenario convergence", default_convergence),
        (4, "passivity audits", passivity_audits),
        (5, "potential consistency", gamma_consistency),
        (6, "equilibrium behavior", equilibrium_behavior),
        (7, "rlc dissipation inequality", rlc_dissipation),
        (8, "prolonged system passivity", prolonged_passivity),
        (9, "integrator oracle", integrator_oracle),
    ];
    let mut failures = 0;
    for (id, name, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {id} ({name}): {detail} [{secs:.2} s]"),
            Err(detail) => {
                failures += 1;
                println!("FAIL criterion {id} ({name}): {detail} [{secs:.2} s]");
            }
        }
    }
    if failures > 0 {
        println!("{failures} of 9 acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 9 acceptance criteria passed");
}
