//! Python bindings for the tank solver: grid construction, the
//! Dirichlet-to-Neumann operator, energy, time stepping and the identity
//! evaluators. Fields cross the boundary as flat row-major lists.

use std::collections::HashMap;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use wavetank_core::evolution::{Evolver, SurfaceState};
use wavetank_core::grid::{build_grid, Grid, SurfaceField, TankConfig};
use wavetank_core::identities;
use wavetank_core::observability::{Envelope, InitialDataSpec};
use wavetank_core::WaveError;

fn wave_err(e: WaveError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A rectangular tank with its collocation grid.
#[pyclass]
struct Tank {
    grid: Grid,
}

impl Tank {
    fn field_from(&self, data: Vec<f64>, name: &str) -> PyResult<SurfaceField> {
        let expect = self.grid.ny * self.grid.nx;
        if data.len() != expect {
            return Err(PyValueError::new_err(format!(
                "{name} must have ny*nx = {expect} entries, got {}",
                data.len()
            )));
        }
        SurfaceField::from_shape_vec((self.grid.ny, self.grid.nx), data)
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }
}

fn flat(f: &SurfaceField) -> Vec<f64> {
    f.iter().cloned().collect()
}

#[pymethods]
impl Tank {
    #[new]
    #[pyo3(signature = (l1, h, n1, nz, dt, g = 9.81, d = 1, l2 = 0.0, n2 = 0, dealias = false))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        l1: f64,
        h: f64,
        n1: usize,
        nz: usize,
        dt: f64,
        g: f64,
        d: usize,
        l2: f64,
        n2: usize,
        dealias: bool,
    ) -> PyResult<Self> {
        let cfg = TankConfig {
            l1,
            l2,
            h,
            g,
            d,
            n1,
            n2,
            nz,
            dt,
            dealias,
        };
        Ok(Tank {
            grid: build_grid(cfg).map_err(wave_err)?,
        })
    }

    /// Collocation nodes along x1.
    fn nodes_x1(&self) -> Vec<f64> {
        self.grid.x1.to_vec()
    }

    fn nodes_x2(&self) -> Vec<f64> {
        self.grid.x2.to_vec()
    }

    /// Vertical levels from the surface (0) down to the bottom (-h).
    fn levels_z(&self) -> Vec<f64> {
        self.grid.z.to_vec()
    }

    /// `G(eta) psi` on the surface grid.
    fn dtn_apply(&self, eta: Vec<f64>, psi: Vec<f64>) -> PyResult<Vec<f64>> {
        let eta = self.field_from(eta, "eta")?;
        let psi = self.field_from(psi, "psi")?;
        let g = wavetank_core::dtn_apply(&eta, &psi, &self.grid).map_err(wave_err)?;
        Ok(flat(&g))
    }

    /// Trace fields as a dict with keys `b`, `v1`, `v2`, `g_psi`.
    fn surface_fields(&self, eta: Vec<f64>, psi: Vec<f64>) -> PyResult<HashMap<String, Vec<f64>>> {
        let eta = self.field_from(eta, "eta")?;
        let psi = self.field_from(psi, "psi")?;
        let f = wavetank_core::surface_fields(&eta, &psi, &self.grid).map_err(wave_err)?;
        let mut out = HashMap::new();
        out.insert("b".into(), flat(&f.b));
        out.insert("v1".into(), flat(&f.v1));
        out.insert("v2".into(), flat(&f.v2));
        out.insert("g_psi".into(), flat(&f.g_psi));
        Ok(out)
    }

    /// Lannes shape derivative of `G(eta) psi` along `delta`.
    fn shape_derivative(
        &self,
        eta: Vec<f64>,
        psi: Vec<f64>,
        delta: Vec<f64>,
    ) -> PyResult<Vec<f64>> {
        let eta = self.field_from(eta, "eta")?;
        let psi = self.field_from(psi, "psi")?;
        let delta = self.field_from(delta, "delta")?;
        let sd = wavetank_core::shape_derivative(&eta, &psi, &delta, &self.grid).map_err(wave_err)?;
        Ok(flat(&sd))
    }

    /// Conserved energy `H`.
    fn energy(&self, eta: Vec<f64>, psi: Vec<f64>) -> PyResult<f64> {
        let state = SurfaceState {
            eta: self.field_from(eta, "eta")?,
            psi: self.field_from(psi, "psi")?,
            t: 0.0,
        };
        wavetank_core::energy(&state, &self.grid).map_err(wave_err)
    }

    /// Right-hand side of the surface system: `(dt_eta, dt_psi)`.
    fn rhs(&self, eta: Vec<f64>, psi: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let state = SurfaceState {
            eta: self.field_from(eta, "eta")?,
            psi: self.field_from(psi, "psi")?,
            t: 0.0,
        };
        let (de, dp) = wavetank_core::rhs(&state, &self.grid).map_err(wave_err)?;
        Ok((flat(&de), flat(&dp)))
    }

    /// One RK4 step of the configured dt.
    fn step(&self, eta: Vec<f64>, psi: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let state = SurfaceState {
            eta: self.field_from(eta, "eta")?,
            psi: self.field_from(psi, "psi")?,
            t: 0.0,
        };
        let next = wavetank_core::step(&state, self.grid.cfg.dt, &self.grid).map_err(wave_err)?;
        Ok((flat(&next.eta), flat(&next.psi)))
    }

    /// Integrate `steps` steps, returning per-step diagnostics as a dict of
    /// columns plus the final state.
    fn integrate(
        &self,
        eta: Vec<f64>,
        psi: Vec<f64>,
        steps: usize,
    ) -> PyResult<HashMap<String, Vec<f64>>> {
        let state = SurfaceState {
            eta: self.field_from(eta, "eta")?,
            psi: self.field_from(psi, "psi")?,
            t: 0.0,
        };
        let mut ev = Evolver::new(&self.grid);
        let traj = ev
            .integrate_steps(&state, steps, self.grid.cfg.dt)
            .map_err(wave_err)?;
        let mut out: HashMap<String, Vec<f64>> = HashMap::new();
        let cols: [(&str, fn(&wavetank_core::evolution::StepDiagnostics) -> f64); 6] = [
            ("t", |d| d.t),
            ("energy", |d| d.energy),
            ("theta_gamma", |d| d.theta_gamma),
            ("m_wall", |d| d.m_wall),
            ("sup_grad_eta", |d| d.sup_grad_eta),
            ("l2_grad_psi", |d| d.l2_grad_psi),
        ];
        for (name, f) in cols {
            out.insert(name.into(), traj.diagnostics.iter().map(f).collect());
        }
        out.insert("eta_final".into(), flat(&traj.last().eta));
        out.insert("psi_final".into(), flat(&traj.last().psi));
        Ok(out)
    }

    /// Pohozaev identity at fixed time; returns every term and the residual.
    fn pohozaev(&self, eta: Vec<f64>, psi: Vec<f64>) -> PyResult<HashMap<String, f64>> {
        let eta = self.field_from(eta, "eta")?;
        let psi = self.field_from(psi, "psi")?;
        let rep = identities::pohozaev(&eta, &psi, &self.grid).map_err(wave_err)?;
        let mut out = HashMap::new();
        out.insert("lhs".into(), rep.lhs);
        out.insert("wall_bottom".into(), rep.wall_bottom);
        out.insert("bulk".into(), rep.bulk);
        out.insert("surface".into(), rep.surface);
        out.insert("residual".into(), rep.residual);
        out.insert("reference_scale".into(), rep.reference_scale);
        out.insert("relative_residual".into(), rep.relative_residual());
        Ok(out)
    }

    /// Integrate `steps` steps and assemble the main identity.
    fn main_identity(
        &self,
        eta: Vec<f64>,
        psi: Vec<f64>,
        steps: usize,
    ) -> PyResult<HashMap<String, f64>> {
        let state = SurfaceState {
            eta: self.field_from(eta, "eta")?,
            psi: self.field_from(psi, "psi")?,
            t: 0.0,
        };
        let mut ev = Evolver::new(&self.grid);
        let traj = ev
            .integrate_steps(&state, steps, self.grid.cfg.dt)
            .map_err(wave_err)?;
        let rep = identities::main_identity(&traj, &self.grid).map_err(wave_err)?;
        let mut out = HashMap::new();
        out.insert("bt".into(), rep.bt);
        out.insert("th_half".into(), rep.th_half);
        out.insert("p".into(), rep.p);
        out.insert("i1".into(), rep.i1);
        out.insert("i2".into(), rep.i2);
        out.insert("i3".into(), rep.i3);
        out.insert("residual".into(), rep.residual);
        out.insert("reference_scale".into(), rep.reference_scale);
        out.insert("relative_residual".into(), rep.relative_residual());
        Ok(out)
    }

    /// Band-limited initial data: `(eta0, psi0)` for band `N` with random
    /// coefficients capped at `c N^-kappa`.
    #[pyo3(signature = (n_band, c, kappa, seed, bump = false))]
    fn make_initial_data(
        &self,
        n_band: usize,
        c: f64,
        kappa: f64,
        seed: u64,
        bump: bool,
    ) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let mut spec = InitialDataSpec::random(n_band, c, kappa, seed);
        if bump {
            spec.envelope = Envelope::Bump;
        }
        let st = wavetank_core::make_initial_data(&spec, &self.grid).map_err(wave_err)?;
        Ok((flat(&st.eta), flat(&st.psi)))
    }
}

/// Flat-strip DtN symbol `k tanh(k h)`.
#[pyfunction]
fn flat_symbol(k: f64, h: f64) -> f64 {
    wavetank_core::dtn::flat_symbol(k, h)
}

#[pymodule]
fn wavetank_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Tank>()?;
    m.add_function(wrap_pyfunction!(flat_symbol, m)?)?;
    Ok(())
}
