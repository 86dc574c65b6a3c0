//! Acceptance suite: every verification target of the harness, one printed
//! pass/fail line per criterion (run with `--nocapture` to see them on
//! success). Tolerances are pinned in code next to each check.

use std::f64::consts::PI;
use std::time::Instant;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use wavetank_core::dtn::{flat_symbol, SolverOptions};
use wavetank_core::evolution::{measure_mode_frequency, Evolver, SurfaceState, Trajectory};
use wavetank_core::grid::{build_grid, Grid, TankConfig};
use wavetank_core::identities::{
    self, elementary_bottom_exchange, elementary_interior, elementary_pointwise,
    AnalyticTestPair, XParity,
};
use wavetank_core::observability::InitialDataSpec;
use wavetank_core::{DtnSolver, SurfaceField};

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn record(results: &mut Vec<Outcome>, name: &'static str, pass: bool, detail: String) {
    let started = Instant::now();
    let _ = started;
    println!(
        "criterion {name}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
    results.push(Outcome { name, pass, detail });
}

fn grid_1d(n1: usize, nz: usize, dt: f64) -> Grid {
    build_grid(TankConfig::line(PI, 1.0, 9.81, n1, nz, dt)).unwrap()
}

fn mode_field(grid: &Grid, n: usize, a: f64) -> SurfaceField {
    SurfaceField::from_shape_fn((grid.ny, grid.nx), |(_, i)| {
        a * (grid.k1[n] * grid.x1[i]).cos()
    })
}

fn random_field(grid: &Grid, max_mode: usize, scale: f64, rng: &mut ChaCha8Rng) -> SurfaceField {
    let mut f = grid.zero_surface();
    for n in 1..=max_mode {
        let amp = scale * rng.gen_range(-1.0..1.0) / (1.0 + (n * n) as f64 / 4.0);
        for jy in 0..grid.ny {
            for ix in 0..grid.nx {
                f[[jy, ix]] += amp * (grid.k1[n] * grid.x1[ix]).cos();
            }
        }
    }
    f
}

fn normalize(f: &SurfaceField, target: f64) -> SurfaceField {
    let m = f.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    if m == 0.0 {
        f.clone()
    } else {
        f.mapv(|v| v * target / m)
    }
}

fn with_steepness(grid: &Grid, eta: &SurfaceField, target: f64) -> SurfaceField {
    let s = grid.sup_grad(eta);
    if s == 0.0 {
        eta.clone()
    } else {
        eta.mapv(|v| v * target / s)
    }
}

fn lsq_slope(eps: &[f64], err: &[f64]) -> f64 {
    let lx: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let ly: Vec<f64> = err.iter().map(|e| e.max(1e-300).ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let num: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}

fn omega_of(g: f64, k: f64, h: f64) -> f64 {
    (g * k * (k * h).tanh()).sqrt()
}

// --------------------------------------------------------------------------

fn c01_flat_symbol(results: &mut Vec<Outcome>) {
    let t0 = Instant::now();
    let grid = grid_1d(64, 128, 1e-2);
    let eta = grid.zero_surface();
    let mut solver = DtnSolver::new(&grid);
    let mut worst = 0.0f64;
    for n in 1..=21usize {
        let k = grid.k1[n];
        let psi = mode_field(&grid, n, 1.0);
        let g = solver.dtn(&eta, &psi).unwrap();
        let rel = ((g[[0, 0]] - flat_symbol(k, 1.0)) / flat_symbol(k, 1.0)).abs();
        worst = worst.max(rel);
    }
    record(
        results,
        "01 flat-strip symbol",
        worst <= 1e-8,
        format!("worst rel {worst:.2e} <= 1e-8, {:?}", t0.elapsed()),
    );
}

fn c02_self_adjoint(results: &mut Vec<Outcome>) {
    let t0 = Instant::now();
    let grid = grid_1d(32, 64, 1e-2);
    let mut rng = ChaCha8Rng::seed_from_u64(1002);
    let mut solver = DtnSolver::with_options(
        &grid,
        SolverOptions {
            tol: 1e-12,
            ..Default::default()
        },
    );
    let mut worst_asym = 0.0f64;
    let mut min_quad = f64::INFINITY;
    for _ in 0..100 {
        let steep = rng.gen_range(0.02..0.2);
        let eta = with_steepness(&grid, &random_field(&grid, 8, 1.0, &mut rng), steep);
        let u = random_field(&grid, 10, 0.5, &mut rng);
        let v = random_field(&grid, 10, 0.5, &mut rng);
        solver.reset_warm_start();
        let gu = solver.dtn(&eta, &u).unwrap();
        solver.reset_warm_start();
        let gv = solver.dtn(&eta, &v).unwrap();
        let scale = grid.inner(&u, &u).sqrt() * grid.inner(&gv, &gv).sqrt()
            + grid.inner(&v, &v).sqrt() * grid.inner(&gu, &gu).sqrt();
        let asym = (grid.inner(&u, &gv) - grid.inner(&gu, &v)).abs() / scale.max(1e-30);
        worst_asym = worst_asym.max(asym);
        min_quad = min_quad.min(grid.inner(&u, &gu) / scale.max(1e-30));
    }
    let pass = worst_asym <= 1e-9 && min_quad >= -1e-12;
    record(
        results,
        "02 self-adjointness/positivity",
        pass,
        format!(
            "100 triples, asymmetry {worst_asym:.2e} <= 1e-9, min <u,Gu>/scale {min_quad:.2e}, {:?}",
            t0.elapsed()
        ),
    );
}

fn c03_shape_derivative(results: &mut Vec<Outcome>) {
    let t0 = Instant::now();
    // resolution sized so the spatial-truncation floor of the perturbed
    // solves sits well below the O(eps^2) mismatch being measured
    let grid = grid_1d(64, 96, 1e-2);
    let mut rng = ChaCha8Rng::seed_from_u64(1003);
    let opts = SolverOptions {
        tol: 1e-13,
        ..Default::default()
    };
    let eps_set = [1e-3, 5e-4, 2.5e-4];
    let mut worst_dev = 0.0f64;
    for _ in 0..20 {
        let eta = with_steepness(&grid, &random_field(&grid, 5, 1.0, &mut rng), rng.gen_range(0.05..0.15));
        let psi = normalize(&random_field(&grid, 6, 1.0, &mut rng), 0.5);
        let delta = normalize(&random_field(&grid, 4, 1.0, &mut rng), 0.3);
        let mut solver = DtnSolver::with_options(&grid, opts);
        let sd = solver.shape_derivative(&eta, &psi, &delta).unwrap();
        let mut errs = Vec::new();
        for eps in eps_set {
            let ep = SurfaceField::from_shape_fn((1, grid.nx), |(_, i)| eta[[0, i]] + eps * delta[[0, i]]);
            let em = SurfaceField::from_shape_fn((1, grid.nx), |(_, i)| eta[[0, i]] - eps * delta[[0, i]]);
            solver.reset_warm_start();
            let gp = solver.dtn(&ep, &psi).unwrap();
            solver.reset_warm_start();
            let gm = solver.dtn(&em, &psi).unwrap();
            let mut worst = 0.0f64;
            for i in 0..grid.nx {
                let fd = (gp[[0, i]] - gm[[0, i]]) / (2.0 * eps);
                worst = worst.max((fd - sd[[0, i]]).abs());
            }
            errs.push(worst);
        }
        let slope = lsq_slope(&eps_set, &errs);
        worst_dev = worst_dev.max((slope - 2.0).abs());
    }
    record(
        results,
        "03 shape-derivative order",
        worst_dev <= 0.1,
        format!("20 cases, max |slope - 2| = {worst_dev:.3} <= 0.1, {:?}", t0.elapsed()),
    );
}

fn c04_hamiltonian_gradients(results: &mut Vec<Outcome>) {
    let t0 = Instant::now();
    let grid = grid_1d(32, 48, 1e-2);
    let mut rng = ChaCha8Rng::seed_from_u64(1004);
    let eps_set = [4e-2, 2e-2, 1e-2];
    let mut min_slope_eta = f64::INFINITY;
    let mut worst_psi = 0.0f64;
    for _ in 0..20 {
        let eta = with_steepness(&grid, &random_field(&grid, 4, 1.0, &mut rng), rng.gen_range(0.03..0.1));
        let psi = random_field(&grid, 5, 0.4, &mut rng);
        let d_eta = random_field(&grid, 4, 0.2, &mut rng);
        let d_psi = random_field(&grid, 4, 0.2, &mut rng);
        let st = SurfaceState { eta, psi, t: 0.0 };
        let mut errs_eta = Vec::new();
        for eps in eps_set {
            let gc =
                wavetank_core::hamiltonian_gradient_check(&st, &d_eta, &d_psi, eps, &grid).unwrap();
            errs_eta.push(gc.residual_eta);
            // H is exactly quadratic in psi: the central difference agrees
            // with <G psi, d_psi> up to the self-adjointness defect at any eps
            worst_psi = worst_psi.max(gc.residual_psi / gc.scale_psi.max(1e-30));
        }
        min_slope_eta = min_slope_eta.min(lsq_slope(&eps_set, &errs_eta));
    }
    let pass = min_slope_eta >= 1.7 && worst_psi <= 1e-9;
    record(
        results,
        "04 hamiltonian gradients",
        pass,
        format!(
            "20 cases, eta-residual slope >= {min_slope_eta:.2} (target 2), psi-residual <= {worst_psi:.2e} of scale, {:?}",
            t0.elapsed()
        ),
    );
}

fn c05_energy_conservation(results: &mut Vec<Outcome>) {
    let t0 = Instant::now();
    let g = 9.81;
    let omega = omega_of(g, 1.0, 1.0);
    let period = 2.0 * PI / omega;
    let drift_for = |steps_per_period: usize| -> f64 {
        let dt = period / steps_per_period as f64;
        let grid = grid_1d(64, 128, dt);
        let st = SurfaceState {
            eta: mode_field(&grid, 1, 1e-4),
            psi: grid.zero_surface(),
            t: 0.0,
        };
        let mut ev = Evolver::with_options(
            &grid,
            SolverOptions {
                tol: 1e-12,
                ..Default::default()
            },
        );
        let traj = ev
            .integrate_steps_lean(&st, 10 * steps_per_period, dt)
            .unwrap();
        traj.energy_drift()
    };
    let (drift1, drift2) = std::thread::scope(|s| {
        let h1 = s.spawn(|| drift_for(200));
        let h2 = s.spawn(|| drift_for(400));
        (h1.join().unwrap(), h2.join().unwrap())
    });
    let ratio = drift1 / drift2.max(1e-300);
    let pass = drift1 <= 1e-6 && ratio >= 8.0;
    record(
        results,
        "05 energy conservation",
        pass,
        format!(
            "drift {drift1:.2e} <= 1e-6 over 10 periods; dt/2 drift {drift2:.2e}, ratio {ratio:.1} >= 8, {:?}",
            t0.elapsed()
        ),
    );
}

fn c06_dispersion(results: &mut Vec<Outcome>) {
    let t0 = Instant::now();
    let g = 9.81;
    let k = 2.0;
    let omega = omega_of(g, k, 1.0);
    let period = 2.0 * PI / omega;
    let dt = period / 200.0;
    let grid = grid_1d(64, 64, dt);
    let st = SurfaceState {
        eta: mode_field(&grid, 2, 1e-4),
        psi: grid.zero_surface(),
        t: 0.0,
    };
    let mut ev = Evolver::new(&grid);
    let traj = ev.integrate_steps_lean(&st, 6 * 200, dt).unwrap();
    let measured = measure_mode_frequency(&traj, &grid, 2).unwrap();
    let rel = ((measured - omega) / omega).abs();
    record(
        results,
        "06 linear dispersion",
        rel <= 1e-3,
        format!("mode 2: omega {measured:.6} vs {omega:.6}, rel {rel:.2e} <= 1e-3, {:?}", t0.elapsed()),
    );
}

fn c07_pohozaev(results: &mut Vec<Outcome>) {
    let t0 = Instant::now();
    // d = 1 at the working resolution
    let grid = grid_1d(64, 128, 1e-2);
    let mut eta = &mode_field(&grid, 1, 0.05) + &mode_field(&grid, 2, 0.02);
    grid.project_zero_mean(&mut eta);
    let psi = &mode_field(&grid, 2, 0.05) + &mode_field(&grid, 3, 0.02);
    let rep1 = identities::pohozaev(&eta, &psi, &grid).unwrap();

    // d = 2 at the same stated resolution
    let mut cfg2 = TankConfig::line(PI, 1.0, 9.81, 64, 128, 1e-2);
    cfg2.d = 2;
    cfg2.l2 = PI;
    cfg2.n2 = 64;
    let grid2 = build_grid(cfg2).unwrap();
    let mut eta2 = SurfaceField::from_shape_fn((grid2.ny, grid2.nx), |(jy, ix)| {
        0.04 * (grid2.k1[1] * grid2.x1[ix]).cos() * (grid2.k2[1] * grid2.x2[jy]).cos()
            + 0.015 * (grid2.k1[2] * grid2.x1[ix]).cos()
    });
    grid2.project_zero_mean(&mut eta2);
    let psi2 = SurfaceField::from_shape_fn((grid2.ny, grid2.nx), |(jy, ix)| {
        0.05 * (grid2.k1[1] * grid2.x1[ix]).cos() * (grid2.k2[2] * grid2.x2[jy]).cos()
    });
    let rep2 = identities::pohozaev(&eta2, &psi2, &grid2).unwrap();

    // refinement order on a rougher multi-mode state
    let rel_at = |n1: usize, nz: usize| -> f64 {
        let grid = grid_1d(n1, nz, 1e-2);
        let mut eta = grid.zero_surface();
        let mut psi = grid.zero_surface();
        for n in 1..=6 {
            let ae = 0.02 / (n as f64).powi(2);
            let ap = 0.05 / (n as f64).powi(2);
            for i in 0..grid.nx {
                eta[[0, i]] += ae * (grid.k1[n] * grid.x1[i]).cos();
                psi[[0, i]] +=
                    ap * (grid.k1[n] * grid.x1[i]).cos() * if n % 2 == 0 { -1.0 } else { 1.0 };
            }
        }
        grid.project_zero_mean(&mut eta);
        identities::pohozaev(&eta, &psi, &grid).unwrap().relative_residual()
    };
    let coarse = rel_at(16, 12);
    let fine = rel_at(32, 24);
    let order = (coarse / fine.max(1e-300)).log2();

    let pass = rep1.relative_residual() <= 1e-5
        && rep2.relative_residual() <= 1e-5
        && rep1.wall_bottom >= 0.0
        && rep2.wall_bottom >= 0.0
        && order >= 2.0;
    record(
        results,
        "07 pohozaev identity",
        pass,
        format!(
            "d=1 rel {:.2e}, d=2 rel {:.2e} (<= 1e-5); refinement order {order:.1} >= 2, {:?}",
            rep1.relative_residual(),
            rep2.relative_residual(),
            t0.elapsed()
        ),
    );
}

/// Run one main-identity trajectory; returns the report and the trajectory.
fn identity_run(
    d: usize,
    n1: usize,
    nz: usize,
    steps_per_period: usize,
    periods: f64,
    amplitude: f64,
) -> (f64, Trajectory, Grid) {
    let g = 9.81;
    let mut cfg = TankConfig::line(PI, 1.0, g, n1, nz, 1.0);
    let k = if d == 2 {
        cfg.d = 2;
        cfg.l2 = PI;
        cfg.n2 = n1;
        2f64.sqrt()
    } else {
        1.0
    };
    let omega = omega_of(g, k, 1.0);
    let period = 2.0 * PI / omega;
    cfg.dt = period / steps_per_period as f64;
    let grid = build_grid(cfg).unwrap();
    let eta = if d == 2 {
        SurfaceField::from_shape_fn((grid.ny, grid.nx), |(jy, ix)| {
            amplitude * (grid.k1[1] * grid.x1[ix]).cos() * (grid.k2[1] * grid.x2[jy]).cos()
        })
    } else {
        mode_field(&grid, 1, amplitude)
    };
    let st = SurfaceState {
        eta,
        psi: grid.zero_surface(),
        t: 0.0,
    };
    let mut n_steps = (periods * steps_per_period as f64).round() as usize;
    if n_steps % 2 == 1 {
        n_steps += 1;
    }
    let mut ev = Evolver::with_options(
        &grid,
        SolverOptions {
            tol: 1e-11,
            ..Default::default()
        },
    );
    let traj = ev.integrate_steps(&st, n_steps, grid.cfg.dt).unwrap();
    let rel = identities::main_identity(&traj, &grid)
        .unwrap()
        .relative_residual();
    (rel, traj, grid)
}

fn c08_c09_main_identity(results: &mut Vec<Outcome>) {
    let t0 = Instant::now();
    // four runs: pinned-resolution d=1 and d=2, plus a coarse/refined pair
    // whose residual sits above the solver floor so the convergence of the
    // time quadrature is actually visible
    let ((d1, d2), (coarse, refined)) = std::thread::scope(|s| {
        let h_d1 = s.spawn(|| identity_run(1, 64, 128, 400, 2.0, 1e-3));
        let h_d2 = s.spawn(|| identity_run(2, 16, 32, 400, 2.0, 1e-3));
        let h_co = s.spawn(|| identity_run(1, 32, 64, 24, 2.0, 1e-3).0);
        let h_re = s.spawn(|| identity_run(1, 64, 64, 48, 2.0, 1e-3).0);
        (
            (h_d1.join().unwrap(), h_d2.join().unwrap()),
            (h_co.join().unwrap(), h_re.join().unwrap()),
        )
    });
    let (rel_d1, traj_d1, grid_d1) = d1;
    let (rel_d2, _traj_d2, _grid_d2) = d2;
    let improvement = coarse / refined.max(1e-300);
    let pass9 = rel_d1 <= 1e-4 && rel_d2 <= 1e-4 && improvement >= 4.0;
    record(
        results,
        "09 main identity",
        pass9,
        format!(
            "d=1 rel {rel_d1:.2e}, d=2 rel {rel_d2:.2e} (<= 1e-4); refinement {coarse:.2e} -> {refined:.2e} ({improvement:.0}x >= 4), {:?}",
            t0.elapsed()
        ),
    );

    // criterion 8: corner formula at every recorded step of the d=1 run
    let g = 9.81;
    let m_ref = traj_d1
        .diagnostics
        .iter()
        .map(|d| d.m_wall.abs())
        .fold(0.0f64, f64::max);
    let mut worst = 0.0f64;
    for d in &traj_d1.diagnostics {
        let denom = d
            .theta_corner
            .abs()
            .max(d.corner_formula.abs())
            .max(0.5 * g * m_ref * m_ref);
        worst = worst.max((d.theta_corner - d.corner_formula).abs() / denom.max(1e-300));
    }
    let _ = &grid_d1;
    record(
        results,
        "08 corner formula",
        worst <= 1e-9,
        format!(
            "{} steps, worst rel {worst:.2e} <= 1e-9",
            traj_d1.diagnostics.len()
        ),
    );
}

fn c10_elementary(results: &mut Vec<Outcome>) {
    let t0 = Instant::now();
    let grid = grid_1d(32, 64, 1e-2);
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let mut worst_53 = 0.0f64;
    let mut worst_54 = 0.0f64;
    let mut worst_60 = 0.0f64;
    for _ in 0..20 {
        let mut eta = with_steepness(
            &grid,
            &random_field(&grid, 6, 1.0, &mut rng),
            rng.gen_range(0.02..0.12),
        );
        grid.project_zero_mean(&mut eta);
        let psi = random_field(&grid, 7, 0.4, &mut rng);
        let r = elementary_pointwise(&eta, &psi, &grid).unwrap();
        worst_53 = worst_53.max(r.r53 / r.scale);
        worst_54 = worst_54.max(r.r54 / r.scale);
        worst_60 = worst_60.max(r.r60 / r.scale);
    }

    // quadrature identities on analytic pairs
    let mut eta = &mode_field(&grid, 1, 0.08) + &mode_field(&grid, 2, 0.04);
    let e3 = mode_field(&grid, 3, -0.03);
    eta.zip_mut_with(&e3, |a, b| *a += b);
    grid.project_zero_mean(&mut eta);
    let k = grid.k1[1];
    let zero = |_: f64, _: f64, _: f64| 0.0;
    let u_sq = |_: f64, _: f64, y: f64| y * y;
    let u_sq_y = |_: f64, _: f64, y: f64| 2.0 * y;
    let u_cos = move |x: f64, _: f64, y: f64| (k * x).cos() * y * y;
    let u_cos_y = move |x: f64, _: f64, y: f64| 2.0 * (k * x).cos() * y;
    let f_odd = move |x: f64, _: f64, y: f64| (k * x).sin() * (y + 1.0) * (y + 1.0);
    let f_odd_div = move |x: f64, _: f64, y: f64| k * (k * x).cos() * (y + 1.0) * (y + 1.0);
    let u_lin = |_: f64, _: f64, y: f64| y;
    let one = |_: f64, _: f64, _: f64| 1.0;
    let f_even = move |x: f64, _: f64, y: f64| (k * x).cos() * y + 1.0;
    let f_even_div = move |x: f64, _: f64, y: f64| -k * (k * x).sin() * y;
    let pairs: Vec<AnalyticTestPair> = vec![
        AnalyticTestPair {
            u: &u_sq,
            u_y: &u_sq_y,
            f1: &zero,
            f2: &zero,
            div_f: &zero,
            f1_parity: XParity::Odd,
            f2_parity: XParity::Odd,
        },
        AnalyticTestPair {
            u: &u_cos,
            u_y: &u_cos_y,
            f1: &f_odd,
            f2: &zero,
            div_f: &f_odd_div,
            f1_parity: XParity::Odd,
            f2_parity: XParity::Odd,
        },
        AnalyticTestPair {
            u: &u_lin,
            u_y: &one,
            f1: &f_even,
            f2: &zero,
            div_f: &f_even_div,
            f1_parity: XParity::Even,
            f2_parity: XParity::Even,
        },
    ];
    let mut worst_interior = 0.0f64;
    for pair in &pairs {
        let r = elementary_interior(&eta, &grid, pair).unwrap();
        worst_interior = worst_interior
            .max(r.r61.abs() / r.scale)
            .max(r.r62.abs() / r.scale)
            .max(r.r63.abs() / r.scale);
    }

    // bottom/volume exchange on solved potentials
    let grid_fine = grid_1d(64, 96, 1e-2);
    let mut eta_f = &mode_field(&grid_fine, 1, 0.05) + &mode_field(&grid_fine, 2, 0.02);
    grid_fine.project_zero_mean(&mut eta_f);
    let psi_f = &mode_field(&grid_fine, 2, 0.05) + &mode_field(&grid_fine, 4, 0.02);
    let pot = wavetank_core::harmonic_extension(&eta_f, &psi_f, &grid_fine).unwrap();
    let (r65, scale65) = elementary_bottom_exchange(&pot, &grid_fine);
    let rel65 = r65.abs() / scale65;

    let pass = worst_53 <= 1e-9
        && worst_54 <= 1e-9
        && worst_60 <= 1e-8
        && worst_interior <= 1e-10
        && rel65 <= 1e-6;
    record(
        results,
        "10 elementary identities",
        pass,
        format!(
            "(53) {worst_53:.1e} (54) {worst_54:.1e} (60) {worst_60:.1e}; quadrature {worst_interior:.1e} <= 1e-10; exchange {rel65:.1e} <= 1e-6, {:?}",
            t0.elapsed()
        ),
    );
}

fn c11_c12_observability(results: &mut Vec<Outcome>) {
    let t0 = Instant::now();
    let run = |n_band: usize| {
        let cfg = TankConfig::line(PI, 1.0, 9.81, 32, 32, 0.02);
        let grid = build_grid(cfg).unwrap();
        let mut spec = InitialDataSpec::random(n_band, 0.05, 4.0, 1011 + n_band as u64);
        spec.beta = 0.6;
        spec.k0 = 1.5;
        wavetank_core::run_experiment(&spec, &grid).unwrap()
    };
    let reports: Vec<wavetank_core::ObservabilityReport> = std::thread::scope(|s| {
        let handles: Vec<_> = [1usize, 2, 4, 8].iter().map(|&n| s.spawn(move || run(n))).collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });

    // primary N = 1 case: hypothesis from measured sup norms, margin at
    // least ten times the identity residual
    let r1 = &reports[0];
    let margin_floor = 10.0 * r1.identity.residual.abs();
    let primary_ok = r1.hypothesis_met
        && r1.b_measured <= 0.1
        && r1.margin >= margin_floor
        && r1.pass;

    let all_pass = reports.iter().all(|r| r.pass && r.hypothesis_met);
    let monotone = reports.windows(2).all(|w| w[1].t_used > w[0].t_used);
    record(
        results,
        "11 observability inequality",
        primary_ok && all_pass && monotone,
        format!(
            "N=1 margin {:.2e} >= 10x residual {:.1e}; scan N=[1,2,4,8] pass, T = {:?} monotone, {:?}",
            r1.margin,
            margin_floor,
            reports.iter().map(|r| (r.t_used * 10.0).round() / 10.0).collect::<Vec<_>>(),
            t0.elapsed()
        ),
    );

    // unique continuation: nonzero energy must move the contact line; a
    // rest run has neither
    let moving = reports
        .iter()
        .all(|r| r.energy <= 1e-12 || r.max_wall_excursion > 0.0);
    let cfg = TankConfig::line(PI, 1.0, 9.81, 16, 16, 0.05);
    let grid = build_grid(cfg).unwrap();
    let rest = wavetank_core::run_experiment(&InitialDataSpec::empty(1), &grid).unwrap();
    let rest_ok = rest.energy <= 1e-12 && rest.max_wall_excursion <= 1e-12;
    record(
        results,
        "12 unique continuation",
        moving && rest_ok,
        format!(
            "all energetic runs move the wall (min excursion {:.2e}); rest run silent",
            reports
                .iter()
                .map(|r| r.max_wall_excursion)
                .fold(f64::INFINITY, f64::min)
        ),
    );
}

#[test]
fn acceptance_criteria() {
    let mut results = Vec::new();
    c01_flat_symbol(&mut results);
    c02_self_adjoint(&mut results);
    c03_shape_derivative(&mut results);
    c04_hamiltonian_gradients(&mut results);
    c05_energy_conservation(&mut results);
    c06_dispersion(&mut results);
    c07_pohozaev(&mut results);
    c08_c09_main_identity(&mut results);
    c10_elementary(&mut results);
    c11_c12_observability(&mut results);

    let failures: Vec<&Outcome> = results.iter().filter(|o| !o.pass).collect();
    for f in &failures {
        eprintln!("FAILED criterion {}: {}", f.name, f.detail);
    }
    assert!(
        failures.is_empty(),
        "{} acceptance criteria failed",
        failures.len()
    );
}
