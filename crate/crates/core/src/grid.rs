//! Collocation grids on the tank cross-section `Q`, even/periodic extension,
//! spectral differentiation and quadrature.
//!
//! Surface fields are stored as `[ny, nx]` arrays of node values on
//! `Q = [0, L1] x [0, L2]` (with `ny = 1` when the surface is
//! one-dimensional). The nodes are the uniform grid of the even 2L-periodic
//! extension restricted to `Q`, including both endpoints, so wall values are
//! grid data. Volume fields are `[nz, ny, nx]` with Chebyshev-Lobatto levels
//! in the vertical.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array1, Array2, Array3};

use crate::transforms::{ChebLine, CosineLine, Work};
use crate::{Result, WaveError};

/// Field sampled on the surface grid, `[ny, nx]`.
pub type SurfaceField = Array2<f64>;
/// Field sampled on the flattened fluid grid, `[nz, ny, nx]`.
pub type VolumeField = Array3<f64>;

/// Physical tank plus discretization parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TankConfig {
    /// Tank length in x1 (m).
    pub l1: f64,
    /// Tank length in x2 (m); ignored when `d == 1`.
    pub l2: f64,
    /// Still-water depth (m).
    pub h: f64,
    /// Gravity (m/s^2).
    pub g: f64,
    /// Dimension of the free surface: 1 or 2.
    pub d: usize,
    /// Cosine modes in x1 (power of two, >= 8); the grid has `n1 + 1` nodes.
    pub n1: usize,
    /// Cosine modes in x2 (d == 2 only).
    pub n2: usize,
    /// Vertical Chebyshev levels (>= 8).
    pub nz: usize,
    /// Time step (s).
    pub dt: f64,
    /// Apply the 2/3-rule truncation after nonlinear products.
    pub dealias: bool,
}

impl TankConfig {
    /// A one-dimensional surface in a tank of length `l1`.
    pub fn line(l1: f64, h: f64, g: f64, n1: usize, nz: usize, dt: f64) -> Self {
        Self {
            l1,
            l2: 0.0,
            h,
            g,
            d: 1,
            n1,
            n2: 0,
            nz,
            dt,
            dealias: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn positive(name: &str, v: f64) -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(WaveError::Config(format!("{name} must be positive, got {v}")))
            }
        }
        positive("l1", self.l1)?;
        positive("h", self.h)?;
        positive("g", self.g)?;
        positive("dt", self.dt)?;
        if self.d != 1 && self.d != 2 {
            return Err(WaveError::Config(format!("d must be 1 or 2, got {}", self.d)));
        }
        if self.d == 2 {
            positive("l2", self.l2)?;
        }
        if !self.n1.is_power_of_two() || self.n1 < 8 {
            return Err(WaveError::Config(format!(
                "n1 must be a power of two >= 8, got {}",
                self.n1
            )));
        }
        if self.d == 2 && (!self.n2.is_power_of_two() || self.n2 < 8) {
            return Err(WaveError::Config(format!(
                "n2 must be a power of two >= 8, got {}",
                self.n2
            )));
        }
        if self.nz < 8 {
            return Err(WaveError::Config(format!("nz must be >= 8, got {}", self.nz)));
        }
        Ok(())
    }

    /// Largest stable RK4 step for the linear dispersion relation,
    /// `c_cfl / sqrt(g k_max tanh(k_max h))`.
    pub fn cfl_dt(&self, c_cfl: f64) -> f64 {
        let mut kmax = PI * self.n1 as f64 / self.l1;
        if self.d == 2 {
            let k2 = PI * self.n2 as f64 / self.l2;
            kmax = (kmax * kmax + k2 * k2).sqrt();
        }
        c_cfl / (self.g * kmax * (kmax * self.h).tanh()).sqrt()
    }
}

/// Precomputed collocation grid: nodes, wavenumbers, quadrature weights and
/// transform plans. Immutable after construction and safe to share across
/// threads.
pub struct Grid {
    pub cfg: TankConfig,
    /// Node count along x1 (`n1 + 1`).
    pub nx: usize,
    /// Node count along x2 (`n2 + 1`, or 1 when d == 1).
    pub ny: usize,
    /// Vertical level count.
    pub nz: usize,
    pub x1: Array1<f64>,
    pub x2: Array1<f64>,
    /// Vertical levels, `z[0] = 0` (surface) down to `z[nz-1] = -h`.
    pub z: Array1<f64>,
    /// Wavenumbers `pi n / L1` of the even extension.
    pub k1: Array1<f64>,
    /// Wavenumbers `pi m / L2` (a single zero when d == 1).
    pub k2: Array1<f64>,
    /// Trapezoid weights along x1 (spectrally exact for even-periodic data).
    pub wx1: Array1<f64>,
    pub wx2: Array1<f64>,
    /// Clenshaw-Curtis weights for `int_{-h}^{0} dz`.
    pub wz: Array1<f64>,
    /// 2/3-rule cutoffs per axis.
    pub cut1: usize,
    pub cut2: usize,
    /// `int_0^L sin(pi p x / L) dx` per mode.
    sin_int1: Array1<f64>,
    sin_int2: Array1<f64>,
    /// `int_0^L x sin(pi p x / L) dx` per mode.
    sin_moment1: Array1<f64>,
    sin_moment2: Array1<f64>,
    pub(crate) line1: Arc<CosineLine>,
    pub(crate) line2: Option<Arc<CosineLine>>,
    pub(crate) cheb: Arc<ChebLine>,
    pub(crate) vertical: Arc<VerticalOps>,
}

/// Dense Chebyshev synthesis matrix, applied to all columns at once when a
/// solved coefficient field needs node values.
pub(crate) struct VerticalOps {
    /// Chebyshev coefficients -> node values, `T_n(zeta_j)`.
    pub values_from_coeffs: Array2<f64>,
}

impl VerticalOps {
    fn build(cheb: &ChebLine) -> Self {
        let nz = cheb.mz + 1;
        let mut scratch = vec![0.0; cheb.scratch_len()];
        let mut val = Array2::zeros((nz, nz));
        let mut buf = vec![0.0; nz];
        for j in 0..nz {
            for (i, b) in buf.iter_mut().enumerate() {
                *b = if i == j { 1.0 } else { 0.0 };
            }
            cheb.values(&mut buf, &mut scratch);
            for n in 0..nz {
                val[[n, j]] = buf[n];
            }
        }
        VerticalOps {
            values_from_coeffs: val,
        }
    }
}

/// Build the grid for a validated configuration.
pub fn build_grid(cfg: TankConfig) -> Result<Grid> {
    cfg.validate()?;
    Ok(Grid::new(cfg))
}

impl Grid {
    fn new(cfg: TankConfig) -> Self {
        let nx = cfg.n1 + 1;
        let ny = if cfg.d == 2 { cfg.n2 + 1 } else { 1 };
        let nz = cfg.nz;
        let mz = nz - 1;

        let x1 = Array1::from_iter((0..nx).map(|i| i as f64 * cfg.l1 / cfg.n1 as f64));
        let k1 = Array1::from_iter((0..nx).map(|n| PI * n as f64 / cfg.l1));
        let (x2, k2) = if cfg.d == 2 {
            (
                Array1::from_iter((0..ny).map(|j| j as f64 * cfg.l2 / cfg.n2 as f64)),
                Array1::from_iter((0..ny).map(|m| PI * m as f64 / cfg.l2)),
            )
        } else {
            (Array1::zeros(1), Array1::zeros(1))
        };

        let wx1 = trapezoid_weights(cfg.n1, cfg.l1);
        let wx2 = if cfg.d == 2 {
            trapezoid_weights(cfg.n2, cfg.l2)
        } else {
            Array1::ones(1)
        };

        let cheb = Arc::new(ChebLine::new(mz));
        let z = Array1::from_iter(
            (0..nz).map(|j| ((PI * j as f64 / mz as f64).cos() - 1.0) * 0.5 * cfg.h),
        );
        let wz = clenshaw_curtis_weights(&cheb, cfg.h);
        let vertical = Arc::new(VerticalOps::build(&cheb));

        let line1 = Arc::new(CosineLine::new(cfg.n1));
        let line2 = if cfg.d == 2 {
            Some(Arc::new(CosineLine::new(cfg.n2)))
        } else {
            None
        };

        let sin_int1 = sine_integrals(cfg.n1, cfg.l1);
        let sin_moment1 = sine_moments(cfg.n1, cfg.l1);
        let (sin_int2, sin_moment2) = if cfg.d == 2 {
            (sine_integrals(cfg.n2, cfg.l2), sine_moments(cfg.n2, cfg.l2))
        } else {
            (Array1::zeros(1), Array1::zeros(1))
        };

        Grid {
            cfg,
            nx,
            ny,
            nz,
            x1,
            x2,
            z,
            k1,
            k2,
            wx1,
            wx2,
            wz,
            cut1: 2 * cfg.n1 / 3,
            cut2: if cfg.d == 2 { 2 * cfg.n2 / 3 } else { 0 },
            sin_int1,
            sin_int2,
            sin_moment1,
            sin_moment2,
            line1,
            line2,
            cheb,
            vertical,
        }
    }

    pub fn d(&self) -> usize {
        self.cfg.d
    }

    pub fn h(&self) -> f64 {
        self.cfg.h
    }

    pub fn g(&self) -> f64 {
        self.cfg.g
    }

    /// Area of `Q` (length when d == 1).
    pub fn area(&self) -> f64 {
        if self.cfg.d == 2 {
            self.cfg.l1 * self.cfg.l2
        } else {
            self.cfg.l1
        }
    }

    pub fn zero_surface(&self) -> SurfaceField {
        SurfaceField::zeros((self.ny, self.nx))
    }

    pub fn zero_volume(&self) -> VolumeField {
        VolumeField::zeros((self.nz, self.ny, self.nx))
    }

    fn work1(&self) -> Work {
        Work::with_capacity(self.nx + 1, self.line1.scratch_len())
    }

    /// Even 2L-periodic extension of `v`, sampled on the full torus grid
    /// (`2 n1` by `2 n2` nodes). Restriction to the leading corner recovers
    /// `v` exactly.
    pub fn even_extend(&self, v: &SurfaceField) -> Array2<f64> {
        let m1 = self.cfg.n1;
        let m2 = if self.cfg.d == 2 { self.cfg.n2 } else { 0 };
        let rows = if m2 == 0 { 1 } else { 2 * m2 };
        let mut out = Array2::zeros((rows, 2 * m1));
        for r in 0..rows {
            let src_j = if m2 == 0 {
                0
            } else if r <= m2 {
                r
            } else {
                2 * m2 - r
            };
            for c in 0..2 * m1 {
                let src_i = if c <= m1 { c } else { 2 * m1 - c };
                out[[r, c]] = v[[src_j, src_i]];
            }
        }
        out
    }

    /// Spectral derivative along x1. Exactly zero on both walls.
    pub fn diff1(&self, v: &SurfaceField) -> SurfaceField {
        let mut out = self.zero_surface();
        let mut work = self.work1();
        let mut row_out = vec![0.0; self.nx];
        for j in 0..self.ny {
            let row: Vec<f64> = v.row(j).to_vec();
            self.line1
                .deriv_even(&row, self.k1.as_slice().unwrap(), &mut row_out, &mut work);
            for i in 0..self.nx {
                out[[j, i]] = row_out[i];
            }
        }
        out
    }

    /// Spectral derivative along x2 (zero field when d == 1).
    pub fn diff2(&self, v: &SurfaceField) -> SurfaceField {
        let mut out = self.zero_surface();
        let line2 = match &self.line2 {
            Some(l) => l,
            None => return out,
        };
        let mut work = Work::with_capacity(self.ny + 1, line2.scratch_len());
        let mut col = vec![0.0; self.ny];
        let mut col_out = vec![0.0; self.ny];
        for i in 0..self.nx {
            for j in 0..self.ny {
                col[j] = v[[j, i]];
            }
            line2.deriv_even(&col, self.k2.as_slice().unwrap(), &mut col_out, &mut work);
            for j in 0..self.ny {
                out[[j, i]] = col_out[j];
            }
        }
        out
    }

    /// Quadrature of an (even-extendable) field over `Q`; spectrally exact
    /// below the Nyquist mode and exact on constants.
    pub fn integrate(&self, v: &SurfaceField) -> f64 {
        let mut acc = 0.0;
        for j in 0..self.ny {
            let mut row = 0.0;
            for i in 0..self.nx {
                row += self.wx1[i] * v[[j, i]];
            }
            acc += self.wx2[j] * row;
        }
        acc
    }

    /// `int_Q u v dx`.
    pub fn inner(&self, u: &SurfaceField, v: &SurfaceField) -> f64 {
        let mut acc = 0.0;
        for j in 0..self.ny {
            let mut row = 0.0;
            for i in 0..self.nx {
                row += self.wx1[i] * u[[j, i]] * v[[j, i]];
            }
            acc += self.wx2[j] * row;
        }
        acc
    }

    /// `int_Q w dx` for a field that is odd in x1 (and even in x2).
    ///
    /// `Q` is half a period of the extension, so this does not vanish; the
    /// integral is evaluated exactly through the sine coefficients.
    pub fn integrate_odd1(&self, w: &SurfaceField) -> f64 {
        self.weighted_sine_integral(w, &self.sin_int1)
    }

    /// `int_Q x1 w dx` for `w` odd in x1, even in x2. Exact for band-limited
    /// `w`; used by every `x . grad` pairing so that the non-periodic factor
    /// `x1` never meets the trapezoid rule.
    pub fn moment_x1(&self, w: &SurfaceField) -> f64 {
        self.weighted_sine_integral(w, &self.sin_moment1)
    }

    fn weighted_sine_integral(&self, w: &SurfaceField, table: &Array1<f64>) -> f64 {
        let m = self.cfg.n1;
        let mut work = self.work1();
        let mut acc = 0.0;
        for j in 0..self.ny {
            work.interior.clear();
            for i in 1..m {
                work.interior.push(w[[j, i]]);
            }
            let mut buf = std::mem::take(&mut work.interior);
            self.line1.sin_coeffs(&mut buf, &mut work.scratch);
            let mut row = 0.0;
            for p in 1..m {
                row += buf[p - 1] * table[p];
            }
            work.interior = buf;
            acc += self.wx2[j] * row;
        }
        acc
    }

    /// `int_Q w dx` for a field odd in x2, even in x1 (d == 2 only).
    pub fn integrate_odd2(&self, w: &SurfaceField) -> f64 {
        self.weighted_sine_integral_axis2(w, &self.sin_int2)
    }

    /// `int_Q x2 w dx` for `w` odd in x2, even in x1.
    pub fn moment_x2(&self, w: &SurfaceField) -> f64 {
        self.weighted_sine_integral_axis2(w, &self.sin_moment2)
    }

    fn weighted_sine_integral_axis2(&self, w: &SurfaceField, table: &Array1<f64>) -> f64 {
        let line2 = match &self.line2 {
            Some(l) => l,
            None => return 0.0,
        };
        let m = self.cfg.n2;
        let mut work = Work::with_capacity(self.ny + 1, line2.scratch_len());
        let mut acc = 0.0;
        for i in 0..self.nx {
            work.interior.clear();
            for j in 1..m {
                work.interior.push(w[[j, i]]);
            }
            let mut buf = std::mem::take(&mut work.interior);
            line2.sin_coeffs(&mut buf, &mut work.scratch);
            let mut col = 0.0;
            for p in 1..m {
                col += buf[p - 1] * table[p];
            }
            work.interior = buf;
            acc += self.wx1[i] * col;
        }
        acc
    }

    /// Subtract the mean so that `integrate(v) == 0`.
    pub fn project_zero_mean(&self, v: &mut SurfaceField) {
        let mean = self.integrate(v) / self.area();
        v.mapv_inplace(|x| x - mean);
    }

    /// 2/3-rule truncation of a surface field, in place.
    pub fn dealias_inplace(&self, v: &mut SurfaceField) {
        let mut work = self.work1();
        let mut row = vec![0.0; self.nx];
        for j in 0..self.ny {
            for i in 0..self.nx {
                row[i] = v[[j, i]];
            }
            self.line1.truncate_even(&mut row, self.cut1, &mut work);
            for i in 0..self.nx {
                v[[j, i]] = row[i];
            }
        }
        if let Some(line2) = &self.line2 {
            let mut work2 = Work::with_capacity(self.ny + 1, line2.scratch_len());
            let mut col = vec![0.0; self.ny];
            for i in 0..self.nx {
                for j in 0..self.ny {
                    col[j] = v[[j, i]];
                }
                line2.truncate_even(&mut col, self.cut2, &mut work2);
                for j in 0..self.ny {
                    v[[j, i]] = col[j];
                }
            }
        }
    }

    /// Apply the dealias rule only when the configuration asks for it.
    pub fn dealias_if_enabled(&self, v: &mut SurfaceField) {
        if self.cfg.dealias {
            self.dealias_inplace(v);
        }
    }

    /// Cosine coefficients of a surface field along x1 for row `j`.
    pub fn cos_coeffs_row(&self, v: &SurfaceField, j: usize) -> Vec<f64> {
        let mut work = self.work1();
        let mut row: Vec<f64> = v.row(j).to_vec();
        self.line1.cos_coeffs(&mut row, &mut work.scratch);
        row
    }

    /// Surface field from per-mode cosine coefficients (d == 1 rows).
    pub fn surface_from_coeffs_1d(&self, coeffs: &[f64]) -> SurfaceField {
        let mut work = self.work1();
        let mut row = coeffs.to_vec();
        assert_eq!(row.len(), self.nx);
        self.line1.cos_values(&mut row, &mut work.scratch);
        let mut out = self.zero_surface();
        for j in 0..self.ny {
            for i in 0..self.nx {
                out[[j, i]] = row[i];
            }
        }
        out
    }

    /// `max |grad eta|` over the nodes.
    pub fn sup_grad(&self, eta: &SurfaceField) -> f64 {
        let e1 = self.diff1(eta);
        let e2 = self.diff2(eta);
        let mut best = 0.0f64;
        for j in 0..self.ny {
            for i in 0..self.nx {
                let s = (e1[[j, i]].powi(2) + e2[[j, i]].powi(2)).sqrt();
                best = best.max(s);
            }
        }
        best
    }

    /// `|| grad psi ||_{L^2(Q)}`.
    pub fn l2_grad(&self, psi: &SurfaceField) -> f64 {
        let p1 = self.diff1(psi);
        let p2 = self.diff2(psi);
        (self.inner(&p1, &p1) + self.inner(&p2, &p2)).sqrt()
    }

    /// Homogeneous Sobolev seminorm `|v|_{H^s}` from the cosine spectrum
    /// (d == 1 only; used by the band-limit diagnostics).
    pub fn sobolev_seminorm_1d(&self, v: &SurfaceField, s: f64) -> f64 {
        let coeffs = self.cos_coeffs_row(v, 0);
        let mut acc = 0.0;
        for n in 1..self.nx {
            let weight = if n == self.cfg.n1 { 1.0 } else { 0.5 };
            acc += weight * self.cfg.l1 * self.k1[n].powf(2.0 * s) * coeffs[n] * coeffs[n];
        }
        acc.sqrt()
    }
}

fn trapezoid_weights(m: usize, l: f64) -> Array1<f64> {
    let dx = l / m as f64;
    let mut w = Array1::from_elem(m + 1, dx);
    w[0] = 0.5 * dx;
    w[m] = 0.5 * dx;
    w
}

/// Clenshaw-Curtis weights on the Lobatto nodes, scaled for `int_{-h}^0 dz`.
fn clenshaw_curtis_weights(cheb: &ChebLine, h: f64) -> Array1<f64> {
    let mz = cheb.mz;
    let nz = mz + 1;
    let mut w = Array1::zeros(nz);
    let mut buf = vec![0.0; nz];
    let mut scratch = vec![0.0; cheb.scratch_len()];
    for j in 0..nz {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = if i == j { 1.0 } else { 0.0 };
        }
        cheb.coeffs(&mut buf, &mut scratch);
        let mut integral = 0.0;
        for n in (0..nz).step_by(2) {
            integral += buf[n] * 2.0 / (1.0 - (n * n) as f64);
        }
        w[j] = integral * 0.5 * h;
    }
    w
}

fn sine_integrals(m: usize, l: f64) -> Array1<f64> {
    // int_0^L sin(pi p x / L) dx = L (1 - (-1)^p) / (pi p)
    let mut out = Array1::zeros(m + 1);
    for p in 1..=m {
        out[p] = l * (1.0 - if p % 2 == 0 { 1.0 } else { -1.0 }) / (PI * p as f64);
    }
    out
}

fn sine_moments(m: usize, l: f64) -> Array1<f64> {
    // int_0^L x sin(pi p x / L) dx = L^2 (-1)^(p+1) / (pi p)
    let mut out = Array1::zeros(m + 1);
    for p in 1..=m {
        let sign = if p % 2 == 0 { -1.0 } else { 1.0 };
        out[p] = l * l * sign / (PI * p as f64);
    }
    out
}
