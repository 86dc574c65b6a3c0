//! Numerical evaluation of the exact identities satisfied by the water-wave
//! system: the Pohozaev identity for the Dirichlet-to-Neumann operator, the
//! boundary-observability identity `B(T) = T H / 2 + P + I1 + I2 + I3`, the
//! corner formula for the wall trace, the elementary interior identities,
//! and the corollary lower bound.
//!
//! Every evaluator computes both sides of its identity independently and
//! reports the residual together with a reference scale; nothing is clipped.

use crate::dtn::FlattenedPotential;
use crate::evolution::{Evolver, Trajectory};
use crate::grid::{Grid, SurfaceField};
use crate::{Result, WaveError};

/// All terms of the main identity over `[0, T]` together with the residual
/// `B(T) - (T H / 2 + P + I1 + I2 + I3)`.
#[derive(Debug, Clone)]
pub struct IdentityReport {
    /// Boundary functional `B(T)`.
    pub bt: f64,
    /// `T H / 2` (time quadrature of the conserved energy).
    pub th_half: f64,
    /// Positive wall/bottom integral.
    pub p: f64,
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
    pub residual: f64,
    /// Largest magnitude among the assembled terms.
    pub reference_scale: f64,
    /// Per-snapshot integrands `(t, gamma, p, i1, i2, energy)`.
    pub per_step: Vec<[f64; 6]>,
    pub d: usize,
}

impl IdentityReport {
    pub fn relative_residual(&self) -> f64 {
        self.residual.abs() / self.reference_scale.max(f64::MIN_POSITIVE)
    }
}

/// Both sides of the Pohozaev identity at a fixed time.
#[derive(Debug, Clone)]
pub struct PohozaevReport {
    /// `int_Q (G psi)(x . grad psi) dx`.
    pub lhs: f64,
    /// `1/2 int_R |grad phi|^2 (x, y) . n dS` — nonnegative face weights.
    pub wall_bottom: f64,
    /// `-(d-1)/2 int_Omega |grad phi|^2`.
    pub bulk: f64,
    /// `1/2 int_Q (eta - x . grad eta)[V^2 + B^2 - 2 B G psi] dx`.
    pub surface: f64,
    pub residual: f64,
    pub reference_scale: f64,
}

impl PohozaevReport {
    pub fn relative_residual(&self) -> f64 {
        self.residual.abs() / self.reference_scale.max(f64::MIN_POSITIVE)
    }
}

/// Outcome of checking the corollary bound on a trajectory.
#[derive(Debug, Clone)]
pub struct CorollaryReport {
    /// `sup_t ||grad psi||_L2 / sqrt(2 H)`.
    pub a_measured: f64,
    /// `sup_t ||grad eta||_inf`.
    pub b_measured: f64,
    /// Steepness hypothesis `B < 2/(5+2d)` together with the horizon bound.
    pub hypothesis_met: bool,
    /// Horizon demanded by the measured constants.
    pub t_required: f64,
    pub t_used: f64,
    /// Explicit lower bound on `B(T)` implied by the identity.
    pub lower_bound: f64,
    pub bt: f64,
    pub energy: f64,
    /// `B(T) - H`.
    pub margin: f64,
    pub bt_ge_energy: bool,
    pub bt_ge_lower_bound: bool,
}

// ---------------------------------------------------------------------------
// functionals of a flattened potential
// ---------------------------------------------------------------------------

/// `1/2 int_R |grad phi|^2 (x, y).n dS`: wall faces weighted by L1, L2 and
/// the bottom by h; the faces x1 = 0 and x2 = 0 carry weight zero. On each
/// solid face the normal velocity vanishes, so only the tangential gradient
/// enters.
pub fn wall_bottom_flux(pot: &FlattenedPotential, grid: &Grid) -> f64 {
    let nxm = grid.nx - 1;
    let nym = grid.ny - 1;
    let nzm = grid.nz - 1;
    let mut acc = 0.0;

    // wall x1 = L1
    let mut wall1 = 0.0;
    for jy in 0..grid.ny {
        let mut col = 0.0;
        for j in 0..grid.nz {
            let mut t2 = pot.phi_y[[j, jy, nxm]].powi(2);
            if grid.ny > 1 {
                t2 += pot.phi_x2[[j, jy, nxm]].powi(2);
            }
            col += grid.wz[j] * t2;
        }
        wall1 += grid.wx2[jy] * col * pot.jac[[jy, nxm]];
    }
    acc += 0.5 * grid.cfg.l1 * wall1;

    // wall x2 = L2 (d == 2 only)
    if grid.ny > 1 {
        let mut wall2 = 0.0;
        for ix in 0..grid.nx {
            let mut col = 0.0;
            for j in 0..grid.nz {
                let t2 = pot.phi_y[[j, nym, ix]].powi(2) + pot.phi_x1[[j, nym, ix]].powi(2);
                col += grid.wz[j] * t2;
            }
            wall2 += grid.wx1[ix] * col * pot.jac[[nym, ix]];
        }
        acc += 0.5 * grid.cfg.l2 * wall2;
    }

    // bottom y = -h
    let mut bottom = 0.0;
    for jy in 0..grid.ny {
        let mut row = 0.0;
        for ix in 0..grid.nx {
            let mut t2 = pot.phi_x1[[nzm, jy, ix]].powi(2);
            if grid.ny > 1 {
                t2 += pot.phi_x2[[nzm, jy, ix]].powi(2);
            }
            row += grid.wx1[ix] * t2;
        }
        bottom += grid.wx2[jy] * row;
    }
    acc += 0.5 * grid.h() * bottom;

    acc
}

/// `int_Omega |grad phi|^2 dV`.
pub fn dirichlet_energy(pot: &FlattenedPotential, grid: &Grid) -> f64 {
    pot.volume_integral(grid, |j, jy, ix| {
        let mut s = pot.phi_y[[j, jy, ix]].powi(2) + pot.phi_x1[[j, jy, ix]].powi(2);
        if grid.ny > 1 {
            s += pot.phi_x2[[j, jy, ix]].powi(2);
        }
        s
    })
}

/// `int_Q eta |grad_x phi|^2(x, -h) dx` (the I1 integrand).
pub fn bottom_eta_gradsq(pot: &FlattenedPotential, grid: &Grid) -> f64 {
    let nzm = grid.nz - 1;
    let mut acc = 0.0;
    for jy in 0..grid.ny {
        let mut row = 0.0;
        for ix in 0..grid.nx {
            let mut t2 = pot.phi_x1[[nzm, jy, ix]].powi(2);
            if grid.ny > 1 {
                t2 += pot.phi_x2[[nzm, jy, ix]].powi(2);
            }
            row += grid.wx1[ix] * pot.eta[[jy, ix]] * t2;
        }
        acc += grid.wx2[jy] * row;
    }
    acc
}

/// `int_Omega dy(phi) (grad eta . grad_x phi) dV` (the I2 integrand).
pub fn mixed_volume_term(pot: &FlattenedPotential, grid: &Grid) -> f64 {
    pot.volume_integral(grid, |j, jy, ix| {
        let mut s = pot.eta_x1[[jy, ix]] * pot.phi_x1[[j, jy, ix]];
        if grid.ny > 1 {
            s += pot.eta_x2[[jy, ix]] * pot.phi_x2[[j, jy, ix]];
        }
        pot.phi_y[[j, jy, ix]] * s
    })
}

// ---------------------------------------------------------------------------
// per-operation evaluators
// ---------------------------------------------------------------------------

/// `Theta = -eta dt(psi) - (g/2) eta^2` with `dt(psi)` from the evolution
/// equation (never from differencing snapshots).
pub fn theta_field(eta: &SurfaceField, psi: &SurfaceField, grid: &Grid) -> Result<SurfaceField> {
    let mut ev = Evolver::new(grid);
    let stage = ev.stage(eta, psi)?;
    Ok(theta_from_dpsi(eta, &stage.d_psi, grid))
}

pub(crate) fn theta_from_dpsi(
    eta: &SurfaceField,
    d_psi: &SurfaceField,
    grid: &Grid,
) -> SurfaceField {
    let g = grid.g();
    let mut out = grid.zero_surface();
    for jy in 0..grid.ny {
        for ix in 0..grid.nx {
            let e = eta[[jy, ix]];
            out[[jy, ix]] = -e * d_psi[[jy, ix]] - 0.5 * g * e * e;
        }
    }
    out
}

/// Composite-Simpson quadrature over the uniform trajectory grid; the step
/// count must be even.
pub fn simpson(values: &[f64], dt: f64) -> Result<f64> {
    let n = values.len();
    if n < 3 || n % 2 == 0 {
        return Err(WaveError::MissingDiagnostics(format!(
            "Simpson quadrature needs an even step count, got {n} snapshots"
        )));
    }
    let mut acc = values[0] + values[n - 1];
    for (i, v) in values.iter().enumerate().take(n - 1).skip(1) {
        acc += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    Ok(acc * dt / 3.0)
}

/// Boundary functional `B(T)` from the recorded wall traces of `Theta`.
pub fn boundary_functional(traj: &Trajectory) -> Result<f64> {
    let gammas: Vec<f64> = traj.diagnostics.iter().map(|d| d.theta_gamma).collect();
    if gammas.is_empty() {
        return Err(WaveError::MissingDiagnostics(
            "trajectory has no recorded diagnostics".into(),
        ));
    }
    simpson(&gammas, traj.dt)
}

/// Pohozaev identity at fixed time: evaluates all four terms independently.
pub fn pohozaev(eta: &SurfaceField, psi: &SurfaceField, grid: &Grid) -> Result<PohozaevReport> {
    let mut solver = crate::dtn::DtnSolver::new(grid);
    let pot = solver.extend(eta, psi)?;
    let fields = solver.fields_from(&pot);
    let d = grid.d() as f64;

    let psi_x1 = grid.diff1(psi);
    let psi_x2 = grid.diff2(psi);

    // lhs: int (G psi)(x . grad psi); each term pairs an even field with an
    // odd one, so the x-moments are taken spectrally
    let mut lhs = grid.moment_x1(&(&fields.g_psi * &psi_x1));
    if grid.ny > 1 {
        lhs += grid.moment_x2(&(&fields.g_psi * &psi_x2));
    }

    let wall_bottom = wall_bottom_flux(&pot, grid);
    let bulk = -(d - 1.0) / 2.0 * dirichlet_energy(&pot, grid);

    // surface term: 1/2 int (eta - x . grad eta) S, S = V^2 + B^2 - 2 B G psi
    let mut s_field = grid.zero_surface();
    for jy in 0..grid.ny {
        for ix in 0..grid.nx {
            let v2 = fields.v1[[jy, ix]].powi(2) + fields.v2[[jy, ix]].powi(2);
            s_field[[jy, ix]] = v2 + fields.b[[jy, ix]].powi(2)
                - 2.0 * fields.b[[jy, ix]] * fields.g_psi[[jy, ix]];
        }
    }
    let eta_x1 = grid.diff1(eta);
    let mut surface = grid.inner(eta, &s_field);
    surface -= grid.moment_x1(&(&eta_x1 * &s_field));
    if grid.ny > 1 {
        let eta_x2 = grid.diff2(eta);
        surface -= grid.moment_x2(&(&eta_x2 * &s_field));
    }
    surface *= 0.5;

    let residual = lhs - (wall_bottom + bulk + surface);
    let reference_scale = [lhs, wall_bottom, bulk, surface]
        .iter()
        .fold(0.0f64, |a, b| a.max(b.abs()));
    Ok(PohozaevReport {
        lhs,
        wall_bottom,
        bulk,
        surface,
        residual,
        reference_scale,
    })
}

/// Assemble the main identity over a trajectory with full diagnostics.
pub fn main_identity(traj: &Trajectory, grid: &Grid) -> Result<IdentityReport> {
    let n = traj.diagnostics.len();
    if n < 3 {
        return Err(WaveError::MissingDiagnostics(
            "main identity needs at least two steps".into(),
        ));
    }
    if !traj.full_diagnostics {
        return Err(WaveError::MissingDiagnostics(
            "trajectory was integrated without the wall/bottom integrands".into(),
        ));
    }
    let d = grid.d() as f64;
    let dt = traj.dt;

    let gammas: Vec<f64> = traj.diagnostics.iter().map(|s| s.theta_gamma).collect();
    let energies: Vec<f64> = traj.diagnostics.iter().map(|s| s.energy).collect();
    let ps: Vec<f64> = traj.diagnostics.iter().map(|s| s.p_integrand).collect();
    let i1s: Vec<f64> = traj.diagnostics.iter().map(|s| s.i1_integrand).collect();
    let i2s: Vec<f64> = traj.diagnostics.iter().map(|s| s.i2_integrand).collect();

    let bt = simpson(&gammas, dt)?;
    let th_half = 0.5 * simpson(&energies, dt)?;
    let p = simpson(&ps, dt)?;
    let i1 = (5.0 + 2.0 * d) / 8.0 * simpson(&i1s, dt)?;
    let i2 = -(5.0 + 2.0 * d) / 4.0 * simpson(&i2s, dt)?;

    let first = traj.diagnostics.first().expect("nonempty");
    let last = traj.diagnostics.last().expect("nonempty");
    let i3 = -(d / 2.0 - 0.25) * (last.eta_psi - first.eta_psi)
        - (last.eta_x_grad_psi - first.eta_x_grad_psi);

    let residual = bt - (th_half + p + i1 + i2 + i3);
    let reference_scale = [bt, th_half, p, i1, i2, i3]
        .iter()
        .fold(0.0f64, |a, b| a.max(b.abs()));

    let per_step = traj
        .diagnostics
        .iter()
        .map(|s| {
            [
                s.t,
                s.theta_gamma,
                s.p_integrand,
                s.i1_integrand,
                s.i2_integrand,
                s.energy,
            ]
        })
        .collect();

    Ok(IdentityReport {
        bt,
        th_half,
        p,
        i1,
        i2,
        i3,
        residual,
        reference_scale,
        per_step,
        d: grid.d(),
    })
}

/// Check the corollary: measured constants, hypothesis, the explicit lower
/// bound and whether `B(T) >= H` held. A violated hypothesis is reported,
/// not an error.
pub fn corollary_bound(
    report: &IdentityReport,
    traj: &Trajectory,
    grid: &Grid,
) -> Result<CorollaryReport> {
    let d = grid.d() as f64;
    let energy = traj
        .diagnostics
        .first()
        .ok_or_else(|| WaveError::MissingDiagnostics("empty trajectory".into()))?
        .energy;
    let b_measured = traj
        .diagnostics
        .iter()
        .map(|s| s.sup_grad_eta)
        .fold(0.0f64, f64::max);
    let sup_l2 = traj
        .diagnostics
        .iter()
        .map(|s| s.l2_grad_psi)
        .fold(0.0f64, f64::max);
    let a_measured = if energy > 0.0 {
        sup_l2 / (2.0 * energy).sqrt()
    } else {
        0.0
    };
    let t_used = traj.dt * (traj.diagnostics.len().saturating_sub(1)) as f64;
    let max_l = if grid.d() == 2 {
        grid.cfg.l1.max(grid.cfg.l2)
    } else {
        grid.cfg.l1
    };
    let coef = 5.0 + 2.0 * d;
    let steep_ok = b_measured < 2.0 / coef;
    let t_required = if steep_ok {
        4.0 / (2.0 - coef * b_measured)
            * (1.0 + (2.0 * d + 3.0) * max_l / grid.g().sqrt() * a_measured)
    } else {
        f64::INFINITY
    };
    let hypothesis_met = steep_ok && t_used >= t_required;
    let lower_bound = (t_used / 2.0
        - coef / 4.0 * b_measured * t_used
        - (d + 1.5) * max_l * 2.0 / grid.g().sqrt() * a_measured)
        * energy;
    let bt = report.bt;
    let margin = bt - energy;
    // tolerance inherited from the identity evaluation
    let tol = report.residual.abs().max(1e-14 * report.reference_scale);
    Ok(CorollaryReport {
        a_measured,
        b_measured,
        hypothesis_met,
        t_required,
        t_used,
        lower_bound,
        bt,
        energy,
        margin,
        bt_ge_energy: margin >= -tol,
        bt_ge_lower_bound: bt - lower_bound >= -tol,
    })
}

// ---------------------------------------------------------------------------
// elementary identities
// ---------------------------------------------------------------------------

/// Pointwise residuals (max norm) of the algebraic identities tying the
/// surface fields to the evolution equation.
#[derive(Debug, Clone, Copy)]
pub struct PointwiseResiduals {
    /// `1/2 (V^2 + B^2 - 2 B G psi) = -dt(psi) - g eta`.
    pub r53: f64,
    /// `1/2 |grad psi|^2 - (grad eta . grad psi + G psi)^2 / (2(1+|grad eta|^2))
    ///  = 1/2 V^2 + B V . grad eta - 1/2 B^2`.
    pub r54: f64,
    /// The same balance written with the raw traces of the extension, which
    /// makes it a check of the solve rather than of the algebra.
    pub r60: f64,
    /// Scale used to normalize the residuals.
    pub scale: f64,
}

/// Evaluate the pointwise identities over the grid.
pub fn elementary_pointwise(
    eta: &SurfaceField,
    psi: &SurfaceField,
    grid: &Grid,
) -> Result<PointwiseResiduals> {
    let mut ev = Evolver::new(grid);
    let stage = ev.stage(eta, psi)?;
    let f = &stage.fields;
    let psi_x1 = grid.diff1(psi);
    let psi_x2 = grid.diff2(psi);
    let eta_x1 = grid.diff1(eta);
    let eta_x2 = grid.diff2(eta);
    let g = grid.g();

    let mut r53 = 0.0f64;
    let mut r54 = 0.0f64;
    let mut r60 = 0.0f64;
    let mut scale = 0.0f64;
    for jy in 0..grid.ny {
        for ix in 0..grid.nx {
            let b = f.b[[jy, ix]];
            let v2 = f.v1[[jy, ix]].powi(2) + f.v2[[jy, ix]].powi(2);
            let gp = f.g_psi[[jy, ix]];
            let e1 = eta_x1[[jy, ix]];
            let e2 = eta_x2[[jy, ix]];
            let p1 = psi_x1[[jy, ix]];
            let p2 = psi_x2[[jy, ix]];
            let grad_eta2 = e1 * e1 + e2 * e2;
            let grad_psi2 = p1 * p1 + p2 * p2;
            let v_dot_grad_eta = f.v1[[jy, ix]] * e1 + f.v2[[jy, ix]] * e2;

            let lhs53 = 0.5 * (v2 + b * b - 2.0 * b * gp);
            let rhs53 = -stage.d_psi[[jy, ix]] - g * eta[[jy, ix]];
            r53 = r53.max((lhs53 - rhs53).abs());
            scale = scale
                .max(stage.d_psi[[jy, ix]].abs() + g * eta[[jy, ix]].abs())
                .max(lhs53.abs());

            let lhs54 =
                0.5 * grad_psi2 - (e1 * p1 + e2 * p2 + gp).powi(2) / (2.0 * (1.0 + grad_eta2));
            let rhs54 = 0.5 * v2 + b * v_dot_grad_eta - 0.5 * b * b;
            r54 = r54.max((lhs54 - rhs54).abs());

            // raw traces of the solve, independent of the algebraic B, V
            let b_raw = stage.pot.phi_y[[0, jy, ix]];
            let v1_raw = stage.pot.phi_x1[[0, jy, ix]];
            let v2_raw = if grid.ny > 1 {
                stage.pot.phi_x2[[0, jy, ix]]
            } else {
                0.0
            };
            let v_raw2 = v1_raw * v1_raw + v2_raw * v2_raw;
            let v_raw_dot = v1_raw * e1 + v2_raw * e2;
            let lhs60 = -0.5 * grad_psi2 + 0.5 * (1.0 + grad_eta2) * b * b;
            let rhs60 = 0.5 * (b_raw * b_raw - v_raw2 - 2.0 * b_raw * v_raw_dot);
            r60 = r60.max((lhs60 - rhs60).abs());
        }
    }
    Ok(PointwiseResiduals {
        r53,
        r54,
        r60,
        scale: scale.max(f64::MIN_POSITIVE),
    })
}

/// Parity of an analytic test function along a horizontal axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XParity {
    Even,
    Odd,
}

/// Caller-supplied smooth test data `(u, f)` for the interior identities;
/// each function takes `(x1, x2, y)` (with `x2 = 0` when d == 1).
///
/// The declared parities describe the horizontal symmetry of the vector
/// components so the quadratures can treat even and odd integrands exactly;
/// data without a declared parity would be under-determined on half a
/// period. `u` must be even in both horizontal axes.
pub struct AnalyticTestPair<'a> {
    pub u: &'a dyn Fn(f64, f64, f64) -> f64,
    pub u_y: &'a dyn Fn(f64, f64, f64) -> f64,
    pub f1: &'a dyn Fn(f64, f64, f64) -> f64,
    pub f2: &'a dyn Fn(f64, f64, f64) -> f64,
    /// `dx1(f1) + dx2(f2)`.
    pub div_f: &'a dyn Fn(f64, f64, f64) -> f64,
    /// Parity of `f1` in x1 (`f2` must be even in x1; `f2`'s x2-parity below).
    pub f1_parity: XParity,
    pub f2_parity: XParity,
}

/// Residuals of the interior identities for one test pair.
#[derive(Debug, Clone, Copy)]
pub struct InteriorResiduals {
    /// Surface/volume/bottom exchange for the scalar `u`.
    pub r61: f64,
    /// Flux identity for the vector field `f`.
    pub r62: f64,
    /// Their combination.
    pub r63: f64,
    pub scale: f64,
}

/// Evaluate identities (surface trace vs volume + bottom, and the lateral
/// flux balance) on analytic test data over the fluid domain below `eta`.
pub fn elementary_interior(
    eta: &SurfaceField,
    grid: &Grid,
    pair: &AnalyticTestPair<'_>,
) -> Result<InteriorResiduals> {
    let pot = crate::dtn::harmonic_extension(eta, &grid.zero_surface(), grid)?;
    let h = grid.h();

    // (61): int u(x, eta) dx = int dy(u) dV + int u(x, -h) dx
    let surf_u = sample_surface(grid, eta, |x1, x2, y| (pair.u)(x1, x2, y));
    let bot_u = sample_bottom(grid, |x1, x2| (pair.u)(x1, x2, -h));
    let lhs61 = grid.integrate(&surf_u);
    let vol_uy = volume_integral_fn(grid, &pot, |x1, x2, y| (pair.u_y)(x1, x2, y));
    let rhs61 = vol_uy + grid.integrate(&bot_u);
    let r61 = lhs61 - rhs61;

    // (62): int f(x, eta).grad eta dx + int div f dV = int_walls f.nu dS
    let eta_x1 = grid.diff1(eta);
    let eta_x2 = grid.diff2(eta);
    let f1_surf = sample_surface(grid, eta, |x1, x2, y| (pair.f1)(x1, x2, y));
    let mut lhs62 = integrate_with_parity(grid, &(&f1_surf * &eta_x1), flip(pair.f1_parity), 1);
    if grid.ny > 1 {
        let f2_surf = sample_surface(grid, eta, |x1, x2, y| (pair.f2)(x1, x2, y));
        lhs62 += integrate_with_parity(grid, &(&f2_surf * &eta_x2), flip(pair.f2_parity), 2);
    }
    let vol_div = volume_integral_fn_parity(grid, &pot, flip(pair.f1_parity), |x1, x2, y| {
        (pair.div_f)(x1, x2, y)
    });
    let lhs62_total = lhs62 + vol_div;
    let rhs62 = lateral_flux(grid, &pot, pair);
    let r62 = lhs62_total - rhs62;

    let r63 = (lhs61 + lhs62_total) - (rhs61 + rhs62);
    let scale = [lhs61, rhs61, lhs62_total, rhs62]
        .iter()
        .fold(0.0f64, |a, b| a.max(b.abs()))
        .max(f64::MIN_POSITIVE);
    Ok(InteriorResiduals { r61, r62, r63, scale })
}

fn flip(p: XParity) -> XParity {
    match p {
        XParity::Even => XParity::Odd,
        XParity::Odd => XParity::Even,
    }
}

fn integrate_with_parity(grid: &Grid, w: &SurfaceField, parity: XParity, axis: usize) -> f64 {
    match (parity, axis) {
        (XParity::Even, _) => grid.integrate(w),
        (XParity::Odd, 1) => grid.integrate_odd1(w),
        (XParity::Odd, 2) => grid.integrate_odd2(w),
        _ => unreachable!(),
    }
}

fn sample_surface<F>(grid: &Grid, eta: &SurfaceField, f: F) -> SurfaceField
where
    F: Fn(f64, f64, f64) -> f64,
{
    SurfaceField::from_shape_fn((grid.ny, grid.nx), |(jy, ix)| {
        f(grid.x1[ix], grid.x2[jy], eta[[jy, ix]])
    })
}

fn sample_bottom<F>(grid: &Grid, f: F) -> SurfaceField
where
    F: Fn(f64, f64) -> f64,
{
    SurfaceField::from_shape_fn((grid.ny, grid.nx), |(jy, ix)| f(grid.x1[ix], grid.x2[jy]))
}

fn volume_integral_fn<F>(grid: &Grid, pot: &FlattenedPotential, f: F) -> f64
where
    F: Fn(f64, f64, f64) -> f64,
{
    let h = grid.h();
    pot.volume_integral(grid, |j, jy, ix| {
        let sigma = 1.0 + grid.z[j] / h;
        let y = sigma * pot.eta[[jy, ix]] + grid.z[j];
        f(grid.x1[ix], grid.x2[jy], y)
    })
}

fn volume_integral_fn_parity<F>(
    grid: &Grid,
    pot: &FlattenedPotential,
    parity: XParity,
    f: F,
) -> f64
where
    F: Fn(f64, f64, f64) -> f64,
{
    match parity {
        XParity::Even => volume_integral_fn(grid, pot, f),
        XParity::Odd => {
            // per-level odd integral in x1 with the Jacobian folded in
            let h = grid.h();
            let mut acc = 0.0;
            for j in 0..grid.nz {
                let sigma = 1.0 + grid.z[j] / h;
                let plane = SurfaceField::from_shape_fn((grid.ny, grid.nx), |(jy, ix)| {
                    let y = sigma * pot.eta[[jy, ix]] + grid.z[j];
                    f(grid.x1[ix], grid.x2[jy], y) * pot.jac[[jy, ix]]
                });
                acc += grid.wz[j] * grid.integrate_odd1(&plane);
            }
            acc
        }
    }
}

/// `int f . nu dS` over the lateral walls of the fluid domain.
fn lateral_flux(grid: &Grid, pot: &FlattenedPotential, pair: &AnalyticTestPair<'_>) -> f64 {
    let h = grid.h();
    let nxm = grid.nx - 1;
    let mut acc = 0.0;
    // x1 = L1 (nu = +e1) and x1 = 0 (nu = -e1)
    for jy in 0..grid.ny {
        for (ix, sign) in [(nxm, 1.0), (0usize, -1.0)] {
            let mut col = 0.0;
            for j in 0..grid.nz {
                let sigma = 1.0 + grid.z[j] / h;
                let y = sigma * pot.eta[[jy, ix]] + grid.z[j];
                col += grid.wz[j] * (pair.f1)(grid.x1[ix], grid.x2[jy], y);
            }
            acc += sign * grid.wx2[jy] * col * pot.jac[[jy, ix]];
        }
    }
    if grid.ny > 1 {
        let nym = grid.ny - 1;
        for ix in 0..grid.nx {
            for (jy, sign) in [(nym, 1.0), (0usize, -1.0)] {
                let mut col = 0.0;
                for j in 0..grid.nz {
                    let sigma = 1.0 + grid.z[j] / h;
                    let y = sigma * pot.eta[[jy, ix]] + grid.z[j];
                    col += grid.wz[j] * (pair.f2)(grid.x1[ix], grid.x2[jy], y);
                }
                acc += sign * grid.wx1[ix] * col * pot.jac[[jy, ix]];
            }
        }
    }
    acc
}

/// Residual and scale of the bottom/volume exchange identity on a solved
/// potential:
///
/// ```text
/// int (phi_y^2 - |grad_x phi|^2) dV + h int |grad_x phi|^2(x,-h) dx
///   = -int eta |grad_x phi|^2(x,-h) dx + 2 int phi_y (grad eta . grad_x phi) dV
/// ```
pub fn elementary_bottom_exchange(pot: &FlattenedPotential, grid: &Grid) -> (f64, f64) {
    let vol = pot.volume_integral(grid, |j, jy, ix| {
        let mut gx2 = pot.phi_x1[[j, jy, ix]].powi(2);
        if grid.ny > 1 {
            gx2 += pot.phi_x2[[j, jy, ix]].powi(2);
        }
        pot.phi_y[[j, jy, ix]].powi(2) - gx2
    });
    let nzm = grid.nz - 1;
    let mut bottom = 0.0;
    for jy in 0..grid.ny {
        let mut row = 0.0;
        for ix in 0..grid.nx {
            let mut gx2 = pot.phi_x1[[nzm, jy, ix]].powi(2);
            if grid.ny > 1 {
                gx2 += pot.phi_x2[[nzm, jy, ix]].powi(2);
            }
            row += grid.wx1[ix] * gx2;
        }
        bottom += grid.wx2[jy] * row;
    }
    let lhs = vol + grid.h() * bottom;
    let rhs = -bottom_eta_gradsq(pot, grid) + 2.0 * mixed_volume_term(pot, grid);
    let scale = lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
    (lhs - rhs, scale)
}
