//! Per-kind experiment drivers.

use std::fmt::Write as _;

use wavetank_core::dtn::SolverOptions;
use wavetank_core::evolution::{measure_mode_frequency, Evolver, SurfaceState, Trajectory};
use wavetank_core::grid::{build_grid, Grid};
use wavetank_core::observability::{Envelope, InitialDataSpec};
use wavetank_core::{identities, SurfaceField, WaveError};

use crate::config::{Kind, RunConfig};
use crate::emit::{fmt_f64, Records, RunArtifacts, Series};

pub enum RunError {
    /// Invalid configuration (exit 2).
    Config(String),
    /// Numerical failure with the failing stage named (exit 3).
    Numerical { stage: &'static str, message: String },
}

impl RunError {
    fn numerical(stage: &'static str) -> impl FnOnce(WaveError) -> RunError {
        move |e| match e {
            WaveError::Config(msg) | WaveError::InitialData(msg) => RunError::Config(msg),
            other => RunError::Numerical {
                stage,
                message: other.to_string(),
            },
        }
    }
}

pub fn run(cfg: &RunConfig, jobs: usize) -> Result<RunArtifacts, RunError> {
    match cfg.kind {
        Kind::Simulate => simulate(cfg),
        Kind::Dispersion => dispersion(cfg),
        Kind::Pohozaev => pohozaev(cfg),
        Kind::MainIdentity => main_identity(cfg),
        Kind::ObservabilityScan => observability_scan(cfg, jobs),
    }
}

fn resolved_grid(cfg: &RunConfig) -> Result<(Grid, usize), RunError> {
    let mut tank = cfg.tank_config();
    let (dt, steps) = if cfg.tank.dt > 0.0 {
        let t_final = cfg.simulate.periods * 2.0 * std::f64::consts::PI / cfg.mode_omega();
        let mut n = (t_final / cfg.tank.dt).round() as usize;
        if n % 2 == 1 {
            n += 1;
        }
        (cfg.tank.dt, n.max(2))
    } else {
        let omega = cfg.mode_omega();
        if omega > 0.0 {
            let period = 2.0 * std::f64::consts::PI / omega;
            let dt = period / cfg.simulate.steps_per_period as f64;
            let mut n = (cfg.simulate.periods * cfg.simulate.steps_per_period as f64).round()
                as usize;
            if n % 2 == 1 {
                n += 1;
            }
            (dt, n.max(2))
        } else {
            // rest data: fall back to the CFL guideline
            let dt = tank.cfl_dt(cfg.tank.c_cfl);
            (dt, cfg.simulate.steps_per_period.max(2))
        }
    };
    tank.dt = dt;
    let grid = build_grid(tank).map_err(|e| RunError::Config(e.to_string()))?;
    Ok((grid, steps))
}

fn initial_state(cfg: &RunConfig, grid: &Grid) -> SurfaceState {
    let h = grid.h();
    let scale_psi = h * (grid.g() * h).sqrt();
    let sim = &cfg.simulate;
    let eta = SurfaceField::from_shape_fn((grid.ny, grid.nx), |(jy, ix)| {
        let c2 = if grid.d() == 2 {
            (grid.k2[sim.mode_m] * grid.x2[jy]).cos()
        } else {
            1.0
        };
        sim.amplitude * h * (grid.k1[sim.mode_n] * grid.x1[ix]).cos() * c2
    });
    let psi = SurfaceField::from_shape_fn((grid.ny, grid.nx), |(jy, ix)| {
        let c2 = if grid.d() == 2 {
            (grid.k2[sim.mode_m] * grid.x2[jy]).cos()
        } else {
            1.0
        };
        sim.psi_amplitude * scale_psi * (grid.k1[sim.mode_n] * grid.x1[ix]).cos() * c2
    });
    SurfaceState { eta, psi, t: 0.0 }
}

fn integrate(cfg: &RunConfig, grid: &Grid, state: &SurfaceState, steps: usize) -> Result<Trajectory, RunError> {
    let mut ev = Evolver::with_options(
        grid,
        SolverOptions {
            tol: cfg.tolerances.elliptic,
            ..Default::default()
        },
    );
    ev.integrate_steps(state, steps, grid.cfg.dt)
        .map_err(RunError::numerical("time integration"))
}

fn push_trajectory_series(series: &mut Vec<Series>, traj: &Trajectory) {
    let mut s = Series::new(
        "series.dat",
        &[
            "t",
            "energy",
            "theta_wall_gamma",
            "m_wall",
            "theta_corner",
            "corner_formula",
            "sup_grad_eta",
            "l2_grad_psi",
            "mean_eta",
        ],
    );
    for d in &traj.diagnostics {
        s.push(vec![
            d.t,
            d.energy,
            d.theta_gamma,
            d.m_wall,
            d.theta_corner,
            d.corner_formula,
            d.sup_grad_eta,
            d.l2_grad_psi,
            d.mean_eta,
        ]);
    }
    series.push(s);
}

fn simulate(cfg: &RunConfig) -> Result<RunArtifacts, RunError> {
    let (grid, steps) = resolved_grid(cfg)?;
    let state = initial_state(cfg, &grid);
    let traj = integrate(cfg, &grid, &state, steps)?;
    let drift = traj.energy_drift();
    let pass = drift <= cfg.tolerances.energy;

    let mut records = Records::default();
    records.push_str("kind", "simulate");
    records.push_usize("steps", steps);
    records.push_f64("dt", grid.cfg.dt);
    records.push_f64("t_final", traj.t_final());
    records.push_f64("energy_initial", traj.diagnostics[0].energy);
    records.push_f64("energy_drift_rel", drift);
    records.push_f64("tolerance_energy", cfg.tolerances.energy);
    records.push_bool("pass", pass);

    let mut series = Vec::new();
    push_trajectory_series(&mut series, &traj);

    let mut summary = String::new();
    let _ = writeln!(summary, "simulate: {} steps, dt = {}", steps, fmt_f64(grid.cfg.dt));
    let _ = writeln!(
        summary,
        "relative energy drift {} (tolerance {})",
        fmt_f64(drift),
        fmt_f64(cfg.tolerances.energy)
    );
    let _ = writeln!(summary, "verdict: {}", if pass { "pass" } else { "FAIL" });

    Ok(RunArtifacts {
        pass,
        records,
        series,
        summary,
    })
}

fn dispersion(cfg: &RunConfig) -> Result<RunArtifacts, RunError> {
    let (grid, steps) = resolved_grid(cfg)?;
    let state = initial_state(cfg, &grid);
    let traj = integrate(cfg, &grid, &state, steps)?;
    let omega_exact = cfg.mode_omega();
    let measured = measure_mode_frequency(&traj, &grid, cfg.simulate.mode_n);
    let (omega_measured, rel_err) = match measured {
        Some(w) => (w, ((w - omega_exact) / omega_exact).abs()),
        None => (f64::NAN, f64::INFINITY),
    };
    let pass = rel_err <= cfg.tolerances.dispersion;

    let mut records = Records::default();
    records.push_str("kind", "dispersion");
    records.push_usize("mode_n", cfg.simulate.mode_n);
    records.push_f64("omega_exact", omega_exact);
    records.push_f64("omega_measured", omega_measured);
    records.push_f64("relative_error", rel_err);
    records.push_f64("tolerance_dispersion", cfg.tolerances.dispersion);
    records.push_bool("pass", pass);

    let mut series = Vec::new();
    push_trajectory_series(&mut series, &traj);

    let mut summary = String::new();
    let _ = writeln!(
        summary,
        "dispersion: mode {} omega {} vs sqrt(g k tanh(k h)) = {}",
        cfg.simulate.mode_n,
        fmt_f64(omega_measured),
        fmt_f64(omega_exact)
    );
    let _ = writeln!(summary, "relative error {}", fmt_f64(rel_err));
    let _ = writeln!(summary, "verdict: {}", if pass { "pass" } else { "FAIL" });

    Ok(RunArtifacts {
        pass,
        records,
        series,
        summary,
    })
}

fn pohozaev(cfg: &RunConfig) -> Result<RunArtifacts, RunError> {
    let (grid, _) = resolved_grid(cfg)?;
    let h = grid.h();
    let p = &cfg.pohozaev;
    let mut eta = SurfaceField::from_shape_fn((grid.ny, grid.nx), |(_, ix)| {
        p.eta_amplitude * h * (grid.k1[p.eta_mode] * grid.x1[ix]).cos()
    });
    grid.project_zero_mean(&mut eta);
    let psi = SurfaceField::from_shape_fn((grid.ny, grid.nx), |(_, ix)| {
        p.psi_amplitude * (grid.k1[p.psi_mode] * grid.x1[ix]).cos()
    });
    let report = identities::pohozaev(&eta, &psi, &grid)
        .map_err(RunError::numerical("pohozaev evaluation"))?;
    let rel = report.relative_residual();
    let pass = rel <= cfg.tolerances.pohozaev && report.wall_bottom >= 0.0;

    let mut records = Records::default();
    records.push_str("kind", "pohozaev");
    records.push_f64("lhs", report.lhs);
    records.push_f64("wall_bottom", report.wall_bottom);
    records.push_f64("bulk", report.bulk);
    records.push_f64("surface", report.surface);
    records.push_f64("residual", report.residual);
    records.push_f64("reference_scale", report.reference_scale);
    records.push_f64("relative_residual", rel);
    records.push_f64("tolerance_pohozaev", cfg.tolerances.pohozaev);
    records.push_bool("pass", pass);

    let mut summary = String::new();
    let _ = writeln!(summary, "pohozaev identity at fixed time");
    let _ = writeln!(
        summary,
        "lhs {} = wall/bottom {} + bulk {} + surface {} (residual {})",
        fmt_f64(report.lhs),
        fmt_f64(report.wall_bottom),
        fmt_f64(report.bulk),
        fmt_f64(report.surface),
        fmt_f64(report.residual)
    );
    let _ = writeln!(summary, "relative residual {}", fmt_f64(rel));
    let _ = writeln!(summary, "verdict: {}", if pass { "pass" } else { "FAIL" });

    Ok(RunArtifacts {
        pass,
        records,
        series: Vec::new(),
        summary,
    })
}

fn main_identity(cfg: &RunConfig) -> Result<RunArtifacts, RunError> {
    let (grid, steps) = resolved_grid(cfg)?;
    let state = initial_state(cfg, &grid);
    let traj = integrate(cfg, &grid, &state, steps)?;
    let report = identities::main_identity(&traj, &grid)
        .map_err(RunError::numerical("identity assembly"))?;
    let corollary = identities::corollary_bound(&report, &traj, &grid)
        .map_err(RunError::numerical("corollary assembly"))?;
    let rel = report.relative_residual();
    let pass = rel <= cfg.tolerances.identity;

    let mut records = Records::default();
    records.push_str("kind", "main-identity");
    records.push_usize("steps", steps);
    records.push_f64("dt", grid.cfg.dt);
    records.push_f64("bt", report.bt);
    records.push_f64("th_half", report.th_half);
    records.push_f64("p", report.p);
    records.push_f64("i1", report.i1);
    records.push_f64("i2", report.i2);
    records.push_f64("i3", report.i3);
    records.push_f64("residual", report.residual);
    records.push_f64("reference_scale", report.reference_scale);
    records.push_f64("relative_residual", rel);
    records.push_f64("tolerance_identity", cfg.tolerances.identity);
    records.push_f64("a_measured", corollary.a_measured);
    records.push_f64("b_measured", corollary.b_measured);
    records.push_f64("t_required", corollary.t_required);
    records.push_f64("t_used", corollary.t_used);
    records.push_f64("lower_bound", corollary.lower_bound);
    records.push_bool("hypothesis_met", corollary.hypothesis_met);
    records.push_bool("bt_ge_energy", corollary.bt_ge_energy);
    records.push_bool("pass", pass);

    let mut series = Vec::new();
    push_trajectory_series(&mut series, &traj);
    // running accumulation of the identity terms (trapezoid, plot-ready)
    let mut acc = Series::new(
        "identity_accumulation.dat",
        &["t", "bt_partial", "rhs_partial", "residual_partial"],
    );
    let dt = traj.dt;
    let mut bt_acc = 0.0;
    let mut rhs_acc = 0.0;
    for w in report.per_step.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        bt_acc += 0.5 * dt * (a[1] + b[1]);
        let d = grid.d() as f64;
        let rhs_a = 0.5 * a[5] + a[2] + (5.0 + 2.0 * d) / 8.0 * a[3] - (5.0 + 2.0 * d) / 4.0 * a[4];
        let rhs_b = 0.5 * b[5] + b[2] + (5.0 + 2.0 * d) / 8.0 * b[3] - (5.0 + 2.0 * d) / 4.0 * b[4];
        rhs_acc += 0.5 * dt * (rhs_a + rhs_b);
        acc.push(vec![b[0], bt_acc, rhs_acc, bt_acc - rhs_acc]);
    }
    series.push(acc);

    let mut summary = String::new();
    let _ = writeln!(summary, "main identity over T = {}", fmt_f64(traj.t_final()));
    let _ = writeln!(
        summary,
        "B(T) {} = T H/2 {} + P {} + I1 {} + I2 {} + I3 {}",
        fmt_f64(report.bt),
        fmt_f64(report.th_half),
        fmt_f64(report.p),
        fmt_f64(report.i1),
        fmt_f64(report.i2),
        fmt_f64(report.i3)
    );
    let _ = writeln!(
        summary,
        "residual {} relative {} (tolerance {})",
        fmt_f64(report.residual),
        fmt_f64(rel),
        fmt_f64(cfg.tolerances.identity)
    );
    let _ = writeln!(summary, "verdict: {}", if pass { "pass" } else { "FAIL" });

    Ok(RunArtifacts {
        pass,
        records,
        series,
        summary,
    })
}

fn observability_scan(cfg: &RunConfig, jobs: usize) -> Result<RunArtifacts, RunError> {
    let obs = &cfg.observability;
    let n_values = obs.n_values.clone();
    let results: Vec<Result<(usize, wavetank_core::ObservabilityReport), RunError>> =
        if jobs > 1 && n_values.len() > 1 {
            std::thread::scope(|scope| {
                let handles: Vec<_> = n_values
                    .iter()
                    .map(|&n| scope.spawn(move || observability_single(cfg, n)))
                    .collect();
                handles.into_iter().map(|h| h.join().expect("worker")).collect()
            })
        } else {
            n_values
                .iter()
                .map(|&n| observability_single(cfg, n))
                .collect()
        };

    let mut records = Records::default();
    records.push_str("kind", "observability-scan");
    let mut summary = String::new();
    let _ = writeln!(summary, "observability scan over N = {n_values:?}");
    let mut all_pass = true;
    let mut t_prev = 0.0;
    let mut monotone = true;
    let mut series = Series::new(
        "scan.dat",
        &["n", "t_used", "energy", "bt", "margin", "a_measured", "b_measured", "pass"],
    );
    for res in results {
        let (n, rep) = res?;
        all_pass &= rep.pass;
        if rep.t_used < t_prev {
            monotone = false;
        }
        t_prev = rep.t_used;
        let p = format!("n{n}_");
        records.push_usize(&format!("{p}band"), rep.n_band);
        records.push_f64(&format!("{p}energy"), rep.energy);
        records.push_f64(&format!("{p}a_measured"), rep.a_measured);
        records.push_f64(&format!("{p}b_measured"), rep.b_measured);
        records.push_f64(&format!("{p}t_used"), rep.t_used);
        records.push_f64(&format!("{p}bt"), rep.bt);
        records.push_f64(&format!("{p}margin"), rep.margin);
        records.push_bool(&format!("{p}hypothesis_met"), rep.hypothesis_met);
        records.push_bool(&format!("{p}pass"), rep.pass);
        records.push_f64(&format!("{p}max_wall_excursion"), rep.max_wall_excursion);
        records.push_f64(&format!("{p}identity_residual_rel"), rep.identity.relative_residual());
        series.push(vec![
            n as f64,
            rep.t_used,
            rep.energy,
            rep.bt,
            rep.margin,
            rep.a_measured,
            rep.b_measured,
            if rep.pass { 1.0 } else { 0.0 },
        ]);
        let _ = writeln!(
            summary,
            "N = {n}: T = {}, B(T) = {}, H = {}, margin = {}, {}",
            fmt_f64(rep.t_used),
            fmt_f64(rep.bt),
            fmt_f64(rep.energy),
            fmt_f64(rep.margin),
            if rep.pass { "pass" } else { "FAIL" }
        );
    }
    let pass = all_pass && monotone;
    records.push_bool("t_monotone", monotone);
    records.push_bool("pass", pass);
    let _ = writeln!(summary, "horizon monotone in N: {monotone}");
    let _ = writeln!(summary, "verdict: {}", if pass { "pass" } else { "FAIL" });

    Ok(RunArtifacts {
        pass,
        records,
        series: vec![series],
        summary,
    })
}

fn observability_single(
    cfg: &RunConfig,
    n: usize,
) -> Result<(usize, wavetank_core::ObservabilityReport), RunError> {
    let obs = &cfg.observability;
    let mut tank = cfg.tank_config();
    if cfg.tank.dt <= 0.0 {
        tank.dt = tank.cfl_dt(cfg.tank.c_cfl);
    }
    let grid = build_grid(tank).map_err(|e| RunError::Config(e.to_string()))?;
    let mut spec = InitialDataSpec::random(n, obs.c_amp, obs.kappa, cfg.seed ^ (n as u64) << 32);
    if !obs.with_psi {
        for row in spec.a2.iter_mut() {
            row.fill(0.0);
        }
    }
    spec.beta = obs.beta;
    spec.k0 = obs.k0;
    spec.envelope = if obs.envelope == "bump" {
        Envelope::Bump
    } else {
        Envelope::One
    };
    let report = wavetank_core::run_experiment(&spec, &grid)
        .map_err(RunError::numerical("observability run"))?;
    Ok((n, report))
}
