//! Time integration of the surface system
//!
//! ```text
//! dt(eta) = G(eta) psi
//! dt(psi) = -g eta - 1/2 |grad psi|^2
//!           + (G(eta)psi + grad eta . grad psi)^2 / (2 (1 + |grad eta|^2))
//! ```
//!
//! with classical fixed-step RK4, plus the conserved energy
//! `H = 1/2 int [g eta^2 + psi G(eta) psi]` and the per-step diagnostics the
//! identity evaluators consume. `dt(psi)` diagnostics always come from the
//! right-hand side formula, never from differencing snapshots.

use crate::dtn::{DtnSolver, FlattenedPotential, SolverOptions, SurfaceFields};
use crate::grid::{Grid, SurfaceField};
use crate::identities;
use crate::{Result, WaveError};

/// The surface unknowns at one instant.
#[derive(Debug, Clone)]
pub struct SurfaceState {
    pub eta: SurfaceField,
    pub psi: SurfaceField,
    pub t: f64,
}

impl SurfaceState {
    pub fn rest(grid: &Grid) -> Self {
        Self {
            eta: grid.zero_surface(),
            psi: grid.zero_surface(),
            t: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.eta.iter().all(|v| v.is_finite()) && self.psi.iter().all(|v| v.is_finite())
    }
}

/// Everything the first evaluation of the right-hand side at a state yields:
/// the harmonic extension, the trace fields, and the undealiased tendencies.
pub struct StageData {
    pub pot: FlattenedPotential,
    pub fields: SurfaceFields,
    /// `dt(eta) = G(eta) psi`, before any truncation.
    pub d_eta: SurfaceField,
    /// `dt(psi)` from the evolution equation, before any truncation.
    pub d_psi: SurfaceField,
}

/// Per-snapshot diagnostics recorded along a trajectory.
#[derive(Debug, Clone, Copy, Default)]
pub struct StepDiagnostics {
    pub t: f64,
    /// Conserved energy `H`.
    pub energy: f64,
    /// Wall functional integrand: `L1 Theta(t, L1)` for d = 1, and the
    /// two-wall combination for d = 2.
    pub theta_gamma: f64,
    /// Contact-line elevation `m(t)` at the observation corner.
    pub m_wall: f64,
    /// `Theta` at the observation corner.
    pub theta_corner: f64,
    /// Corner formula `1/2 [g m^2 - m m'^2]` with `m' = (G(eta)psi)(corner)`.
    pub corner_formula: f64,
    /// Wall/bottom integrand of `P`.
    pub p_integrand: f64,
    /// `int_Q eta |grad_x phi|^2(x,-h) dx`.
    pub i1_integrand: f64,
    /// `int_Omega dy(phi)(grad eta . grad_x phi) dV`.
    pub i2_integrand: f64,
    /// `int_Q eta psi dx`.
    pub eta_psi: f64,
    /// `int_Q eta (x . grad psi) dx`.
    pub eta_x_grad_psi: f64,
    pub sup_grad_eta: f64,
    pub l2_grad_psi: f64,
    pub mean_eta: f64,
    pub max_abs_eta: f64,
    /// Elliptic iterations spent on the diagnostic solve.
    pub solver_iterations: usize,
}

/// Time series of states plus diagnostics at every snapshot.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<SurfaceState>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub dt: f64,
    /// Whether the wall/bottom and volume integrands were recorded (they
    /// need the full harmonic extension at every snapshot).
    pub full_diagnostics: bool,
}

impl Trajectory {
    pub fn t_final(&self) -> f64 {
        self.states.last().map_or(0.0, |s| s.t)
    }

    pub fn initial(&self) -> &SurfaceState {
        &self.states[0]
    }

    pub fn last(&self) -> &SurfaceState {
        self.states.last().expect("trajectory is never empty")
    }

    /// Largest relative energy drift over the run.
    pub fn energy_drift(&self) -> f64 {
        let h0 = self.diagnostics.first().map_or(0.0, |d| d.energy);
        if h0 == 0.0 {
            return self
                .diagnostics
                .iter()
                .map(|d| d.energy.abs())
                .fold(0.0, f64::max);
        }
        self.diagnostics
            .iter()
            .map(|d| ((d.energy - h0) / h0).abs())
            .fold(0.0, f64::max)
    }

    /// `max_t |m(t)|` over the observed contact point.
    pub fn max_wall_excursion(&self) -> f64 {
        self.diagnostics
            .iter()
            .map(|d| d.m_wall.abs())
            .fold(0.0, f64::max)
    }
}

/// Reusable integrator bound to a grid; owns the elliptic solver and its
/// warm-start history. One instance per trajectory (or thread).
pub struct Evolver<'g> {
    grid: &'g Grid,
    solver: DtnSolver<'g>,
}

impl<'g> Evolver<'g> {
    pub fn new(grid: &'g Grid) -> Self {
        Self {
            grid,
            solver: DtnSolver::new(grid),
        }
    }

    pub fn with_options(grid: &'g Grid, opts: SolverOptions) -> Self {
        Self {
            grid,
            solver: DtnSolver::with_options(grid, opts),
        }
    }

    pub fn grid(&self) -> &Grid {
        self.grid
    }

    /// Full right-hand-side evaluation at `(eta, psi)`, returning the
    /// extension and trace fields for diagnostics.
    pub fn stage(&mut self, eta: &SurfaceField, psi: &SurfaceField) -> Result<StageData> {
        let pot = self.solver.extend(eta, psi)?;
        let fields = self.solver.fields_from(&pot);
        let (d_eta, d_psi) = self.tendencies(eta, psi, &fields.g_psi);
        Ok(StageData {
            pot,
            fields,
            d_eta,
            d_psi,
        })
    }

    /// Right-hand side only: one elliptic solve, traces extracted without
    /// the volume derivative fields.
    pub fn rhs(&mut self, eta: &SurfaceField, psi: &SurfaceField) -> Result<(SurfaceField, SurfaceField)> {
        let trace = self.solver.trace_solve(eta, psi)?;
        Ok(self.tendencies(eta, psi, &trace.g_psi))
    }

    fn tendencies(
        &self,
        eta: &SurfaceField,
        psi: &SurfaceField,
        g_psi: &SurfaceField,
    ) -> (SurfaceField, SurfaceField) {
        let grid = self.grid;
        let g = grid.g();
        let psi_x1 = grid.diff1(psi);
        let psi_x2 = grid.diff2(psi);
        let eta_x1 = grid.diff1(eta);
        let eta_x2 = grid.diff2(eta);
        let d_eta = g_psi.clone();
        let mut d_psi = grid.zero_surface();
        for jy in 0..grid.ny {
            for ix in 0..grid.nx {
                let p1 = psi_x1[[jy, ix]];
                let p2 = psi_x2[[jy, ix]];
                let e1 = eta_x1[[jy, ix]];
                let e2 = eta_x2[[jy, ix]];
                let gp = g_psi[[jy, ix]];
                let num = gp + e1 * p1 + e2 * p2;
                d_psi[[jy, ix]] = -g * eta[[jy, ix]] - 0.5 * (p1 * p1 + p2 * p2)
                    + num * num / (2.0 * (1.0 + e1 * e1 + e2 * e2));
            }
        }
        (d_eta, d_psi)
    }

    /// One RK4 step of size `dt` (negative `dt` integrates backwards). The
    /// mean of `eta` is re-projected to zero afterwards; even symmetry is
    /// structural in the cosine representation.
    pub fn step(&mut self, state: &SurfaceState, dt: f64) -> Result<SurfaceState> {
        let (k1e, k1p) = self.rhs(&state.eta, &state.psi)?;
        self.step_from_tendencies(state, dt, k1e, k1p)
    }

    /// Diagnostics at a snapshot; the volume integrands are filled only when
    /// the harmonic extension is supplied.
    #[allow(clippy::too_many_arguments)]
    fn diagnostics(
        &self,
        eta: &SurfaceField,
        psi: &SurfaceField,
        g_psi: &SurfaceField,
        d_psi: &SurfaceField,
        t: f64,
        pot: Option<&FlattenedPotential>,
    ) -> StepDiagnostics {
        let grid = self.grid;
        let g = grid.g();
        let theta = identities::theta_from_dpsi(eta, d_psi, grid);

        // wall functional integrand
        let nxm = grid.nx - 1;
        let nym = grid.ny - 1;
        let theta_gamma = if grid.d() == 1 {
            grid.cfg.l1 * theta[[0, nxm]]
        } else {
            let mut wall1 = 0.0;
            for jy in 0..grid.ny {
                wall1 += grid.wx2[jy] * theta[[jy, nxm]];
            }
            let mut wall2 = 0.0;
            for ix in 0..grid.nx {
                wall2 += grid.wx1[ix] * theta[[nym, ix]];
            }
            grid.cfg.l1 * wall1 + grid.cfg.l2 * wall2
        };

        let m = eta[[0, nxm]];
        let m_prime = g_psi[[0, nxm]];
        let corner_formula = 0.5 * (g * m * m - m * m_prime * m_prime);

        // energy from the same solve
        let mut h_acc = 0.0;
        for jy in 0..grid.ny {
            let mut row = 0.0;
            for ix in 0..grid.nx {
                row += grid.wx1[ix]
                    * (g * eta[[jy, ix]].powi(2) + psi[[jy, ix]] * g_psi[[jy, ix]]);
            }
            h_acc += grid.wx2[jy] * row;
        }
        let energy = 0.5 * h_acc;

        let (p_integrand, i1_integrand, i2_integrand, eta_x_grad_psi, sup_grad_eta, l2_grad_psi, eta_psi) =
            match pot {
                Some(pot) => {
                    let psi_x1 = grid.diff1(psi);
                    let psi_x2 = grid.diff2(psi);
                    let mut moment = grid.moment_x1(&(eta * &psi_x1));
                    if grid.ny > 1 {
                        moment += grid.moment_x2(&(eta * &psi_x2));
                    }
                    (
                        identities::wall_bottom_flux(pot, grid),
                        identities::bottom_eta_gradsq(pot, grid),
                        identities::mixed_volume_term(pot, grid),
                        moment,
                        grid.sup_grad(eta),
                        (grid.inner(&psi_x1, &psi_x1) + grid.inner(&psi_x2, &psi_x2)).sqrt(),
                        grid.inner(eta, psi),
                    )
                }
                None => (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
            };

        StepDiagnostics {
            t,
            energy,
            theta_gamma,
            m_wall: m,
            theta_corner: theta[[0, nxm]],
            corner_formula,
            p_integrand,
            i1_integrand,
            i2_integrand,
            eta_psi,
            eta_x_grad_psi,
            sup_grad_eta,
            l2_grad_psi,
            mean_eta: grid.integrate(eta),
            max_abs_eta: eta.iter().fold(0.0f64, |a, &b| a.max(b.abs())),
            solver_iterations: pot.map_or(0, |p| p.iterations),
        }
    }

    /// Integrate `n_steps` steps of size `dt`, recording full diagnostics at
    /// every snapshot (including both endpoints). Aborts on non-finite
    /// values with the offending step index.
    pub fn integrate_steps(
        &mut self,
        state0: &SurfaceState,
        n_steps: usize,
        dt: f64,
    ) -> Result<Trajectory> {
        self.integrate_steps_mode(state0, n_steps, dt, true)
    }

    /// Like [`Evolver::integrate_steps`] but skipping the volume integrands,
    /// for runs that only track energy and wall traces (e.g. step-refinement
    /// studies). The resulting trajectory cannot feed the main identity.
    pub fn integrate_steps_lean(
        &mut self,
        state0: &SurfaceState,
        n_steps: usize,
        dt: f64,
    ) -> Result<Trajectory> {
        self.integrate_steps_mode(state0, n_steps, dt, false)
    }

    fn integrate_steps_mode(
        &mut self,
        state0: &SurfaceState,
        n_steps: usize,
        dt: f64,
        full: bool,
    ) -> Result<Trajectory> {
        let mut states = Vec::with_capacity(n_steps + 1);
        let mut diagnostics = Vec::with_capacity(n_steps + 1);
        let mut state = state0.clone();
        if !state.is_finite() {
            return Err(WaveError::NonFinite { step: 0 });
        }
        for step_idx in 0..n_steps {
            let (diag, d_eta, d_psi) = self.snapshot_diagnostics(&state, full)?;
            diagnostics.push(diag);
            let next = self.step_from_tendencies(&state, dt, d_eta, d_psi)?;
            states.push(state);
            if !next.is_finite() {
                return Err(WaveError::NonFinite { step: step_idx + 1 });
            }
            state = next;
        }
        let (diag, _, _) = self.snapshot_diagnostics(&state, full)?;
        diagnostics.push(diag);
        states.push(state);
        Ok(Trajectory {
            states,
            diagnostics,
            dt,
            full_diagnostics: full,
        })
    }

    fn snapshot_diagnostics(
        &mut self,
        state: &SurfaceState,
        full: bool,
    ) -> Result<(StepDiagnostics, SurfaceField, SurfaceField)> {
        if full {
            let stage = self.stage(&state.eta, &state.psi)?;
            let diag = self.diagnostics(&state.eta, &state.psi, &stage.fields.g_psi, &stage.d_psi, state.t, Some(&stage.pot));
            Ok((diag, stage.d_eta, stage.d_psi))
        } else {
            let trace = self.solver.trace_solve(&state.eta, &state.psi)?;
            let (d_eta, d_psi) = self.tendencies(&state.eta, &state.psi, &trace.g_psi);
            let diag = self.diagnostics(&state.eta, &state.psi, &trace.g_psi, &d_psi, state.t, None);
            Ok((diag, d_eta, d_psi))
        }
    }

    fn step_from_tendencies(
        &mut self,
        state: &SurfaceState,
        dt: f64,
        k1e_raw: SurfaceField,
        k1p_raw: SurfaceField,
    ) -> Result<SurfaceState> {
        let grid = self.grid;
        let add = |a: &SurfaceField, b: &SurfaceField, s: f64| -> SurfaceField {
            let mut out = a.clone();
            out.zip_mut_with(b, |x, y| *x += s * y);
            out
        };
        let dealias = |mut f: SurfaceField| -> SurfaceField {
            grid.dealias_if_enabled(&mut f);
            f
        };
        let (k1e, k1p) = (dealias(k1e_raw), dealias(k1p_raw));
        let (k2e, k2p) = self.rhs(
            &add(&state.eta, &k1e, 0.5 * dt),
            &add(&state.psi, &k1p, 0.5 * dt),
        )?;
        let (k2e, k2p) = (dealias(k2e), dealias(k2p));
        let (k3e, k3p) = self.rhs(
            &add(&state.eta, &k2e, 0.5 * dt),
            &add(&state.psi, &k2p, 0.5 * dt),
        )?;
        let (k3e, k3p) = (dealias(k3e), dealias(k3p));
        let (k4e, k4p) = self.rhs(&add(&state.eta, &k3e, dt), &add(&state.psi, &k3p, dt))?;
        let (k4e, k4p) = (dealias(k4e), dealias(k4p));
        let sixth = dt / 6.0;
        let mut eta = state.eta.clone();
        let mut psi = state.psi.clone();
        for jy in 0..grid.ny {
            for ix in 0..grid.nx {
                eta[[jy, ix]] += sixth
                    * (k1e[[jy, ix]] + 2.0 * k2e[[jy, ix]] + 2.0 * k3e[[jy, ix]] + k4e[[jy, ix]]);
                psi[[jy, ix]] += sixth
                    * (k1p[[jy, ix]] + 2.0 * k2p[[jy, ix]] + 2.0 * k3p[[jy, ix]] + k4p[[jy, ix]]);
            }
        }
        grid.project_zero_mean(&mut eta);
        Ok(SurfaceState {
            eta,
            psi,
            t: state.t + dt,
        })
    }

    /// Conserved energy at a state (one elliptic solve).
    pub fn energy(&mut self, eta: &SurfaceField, psi: &SurfaceField) -> Result<f64> {
        let g_psi = self.solver.dtn(eta, psi)?;
        let grid = self.grid;
        let g = grid.g();
        let mut acc = 0.0;
        for jy in 0..grid.ny {
            let mut row = 0.0;
            for ix in 0..grid.nx {
                row += grid.wx1[ix]
                    * (g * eta[[jy, ix]].powi(2) + psi[[jy, ix]] * g_psi[[jy, ix]]);
            }
            acc += grid.wx2[jy] * row;
        }
        Ok(0.5 * acc)
    }
}

// ---------------------------------------------------------------------------
// free-function API
// ---------------------------------------------------------------------------

/// Right-hand side of the surface system at a state.
pub fn rhs(state: &SurfaceState, grid: &Grid) -> Result<(SurfaceField, SurfaceField)> {
    Evolver::new(grid).rhs(&state.eta, &state.psi)
}

/// One RK4 step of size `dt`.
pub fn step(state: &SurfaceState, dt: f64, grid: &Grid) -> Result<SurfaceState> {
    Evolver::new(grid).step(state, dt)
}

/// Integrate to `t = state0.t + horizon` with the configured step, recording
/// full diagnostics. `horizon` must be an integer multiple of `cfg.dt`.
pub fn integrate(state0: &SurfaceState, horizon: f64, grid: &Grid) -> Result<Trajectory> {
    let dt = grid.cfg.dt;
    let n = (horizon / dt).round();
    if n < 0.0 || (horizon - n * dt).abs() > 1e-9 * horizon.abs().max(dt) {
        return Err(WaveError::Config(format!(
            "horizon {horizon} is not a multiple of dt = {dt}"
        )));
    }
    Evolver::new(grid).integrate_steps(state0, n as usize, dt)
}

/// Energy `H = 1/2 int [g eta^2 + psi G(eta) psi]`.
pub fn energy(state: &SurfaceState, grid: &Grid) -> Result<f64> {
    Evolver::new(grid).energy(&state.eta, &state.psi)
}

/// Residuals of the variational derivatives of `H`: central differences of
/// the Hamiltonian against the analytic gradients.
#[derive(Debug, Clone, Copy)]
pub struct GradientCheck {
    /// `|[H(eta, psi+eps dpsi) - H(eta, psi-eps dpsi)]/(2 eps) - <G psi, dpsi>|`
    pub residual_psi: f64,
    /// Same for the eta-gradient `g eta + 1/2 |grad psi|^2 - (...)^2/(2(1+..))`.
    pub residual_eta: f64,
    /// Magnitudes of the directional derivatives, for normalization.
    pub scale_psi: f64,
    pub scale_eta: f64,
}

/// Verify the Hamiltonian structure at a state by directional derivatives.
pub fn hamiltonian_gradient_check(
    state: &SurfaceState,
    d_eta: &SurfaceField,
    d_psi: &SurfaceField,
    eps: f64,
    grid: &Grid,
) -> Result<GradientCheck> {
    // the finite differences divide by eps, so solve well below the floor
    // the comparison is expected to resolve
    let mut ev = Evolver::with_options(
        grid,
        SolverOptions {
            tol: 1e-13,
            ..Default::default()
        },
    );

    // analytic gradients at the base state
    let stage = ev.stage(&state.eta, &state.psi)?;
    let grad_psi_dir = grid.inner(&stage.fields.g_psi, d_psi);
    // dH/deta = g eta + 1/2 |grad psi|^2 - (G psi + grad eta.grad psi)^2 / (2(1+|grad eta|^2))
    // which equals -dt(psi)
    let mut grad_eta_field = stage.d_psi.clone();
    grad_eta_field.mapv_inplace(|v| -v);
    let grad_eta_dir = grid.inner(&grad_eta_field, d_eta);

    let shifted = |base: &SurfaceField, dir: &SurfaceField, s: f64| -> SurfaceField {
        let mut out = base.clone();
        out.zip_mut_with(dir, |x, y| *x += s * y);
        out
    };

    let hp = ev.energy(&state.eta, &shifted(&state.psi, d_psi, eps))?;
    let hm = ev.energy(&state.eta, &shifted(&state.psi, d_psi, -eps))?;
    let fd_psi = (hp - hm) / (2.0 * eps);

    let hp_e = ev.energy(&shifted(&state.eta, d_eta, eps), &state.psi)?;
    let hm_e = ev.energy(&shifted(&state.eta, d_eta, -eps), &state.psi)?;
    let fd_eta = (hp_e - hm_e) / (2.0 * eps);

    Ok(GradientCheck {
        residual_psi: (fd_psi - grad_psi_dir).abs(),
        residual_eta: (fd_eta - grad_eta_dir).abs(),
        scale_psi: grad_psi_dir.abs().max(fd_psi.abs()),
        scale_eta: grad_eta_dir.abs().max(fd_eta.abs()),
    })
}

/// Frequency of the x1 cosine mode `n` measured from the zero crossings of
/// its coefficient time series (d == 1 trajectories).
pub fn measure_mode_frequency(traj: &Trajectory, grid: &Grid, mode: usize) -> Option<f64> {
    let series: Vec<(f64, f64)> = traj
        .states
        .iter()
        .map(|s| (s.t, grid.cos_coeffs_row(&s.eta, 0)[mode]))
        .collect();
    let mut crossings = Vec::new();
    for w in series.windows(2) {
        let (t0, v0) = w[0];
        let (t1, v1) = w[1];
        if v0 == 0.0 {
            crossings.push(t0);
        } else if v0 * v1 < 0.0 {
            // linear interpolation of the crossing time
            crossings.push(t0 + (t1 - t0) * v0 / (v0 - v1));
        }
    }
    if crossings.len() < 2 {
        return None;
    }
    let half_periods = (crossings.len() - 1) as f64;
    let span = crossings.last().unwrap() - crossings.first().unwrap();
    Some(std::f64::consts::PI * half_periods / span)
}
