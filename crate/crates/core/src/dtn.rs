//! Harmonic extension of the surface potential into the fluid domain and the
//! Dirichlet-to-Neumann operator `G(eta)`.
//!
//! The moving domain is flattened by the simple lifting
//! `rho(x, z) = (1 + z/h) eta(x) + z`, which maps the strip
//! `Q x [-h, 0]` onto the fluid domain and satisfies `rho(x, 0) = eta(x)`,
//! `rho(x, -h) = -h` and `dz(rho) = 1 + eta/h` (z-independent). Under the
//! pullback, `Laplace(phi) = 0` becomes the divergence-form equation
//!
//! ```text
//! dx1(J u_x1 - r1 u_z) + dx2(J u_x2 - r2 u_z)
//!     + dz(((1 + r1^2 + r2^2)/J) u_z - r1 u_x1 - r2 u_x2) = 0
//! ```
//!
//! with `J = dz(rho)` and `r_k = dx_k(rho)`, subject to `u = psi` on `z = 0`
//! and the natural condition `dz(u) = 0` on `z = -h` (the lateral closure is
//! the even-periodic symmetry of the cosine basis). The discretization is
//! cosine collocation in x and Chebyshev in z; because the lifting is linear
//! in z, the GMRES iteration runs entirely in vertical coefficient space
//! where `sigma = (1 + zeta)/2` multiplies as a short band, and it is
//! preconditioned by the exact flat-strip inverse, realized per horizontal
//! mode as a quasi-tridiagonal Chebyshev-tau system.

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};

use crate::grid::{Grid, SurfaceField, VolumeField};
use crate::transforms::Work;
use crate::{Result, WaveError};

/// Iteration controls for the elliptic solve.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Relative residual target.
    pub tol: f64,
    /// Hard cap on preconditioned operator applications.
    pub max_iterations: usize,
    /// GMRES restart length.
    pub restart: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iterations: 800,
            restart: 40,
        }
    }
}

/// Harmonic extension of `psi` under the flattening map, together with its
/// flat-grid derivatives and the geometry needed to undo the change of
/// variables. Immutable once constructed.
pub struct FlattenedPotential {
    /// Potential on the flattened grid, `[nz, ny, nx]`.
    pub phi: VolumeField,
    /// True vertical derivative `dy(phi)` (chain rule applied).
    pub phi_y: VolumeField,
    /// True horizontal derivatives at fixed physical height.
    pub phi_x1: VolumeField,
    pub phi_x2: VolumeField,
    pub eta: SurfaceField,
    pub eta_x1: SurfaceField,
    pub eta_x2: SurfaceField,
    pub psi: SurfaceField,
    /// `dz(rho) = 1 + eta/h`, constant in z.
    pub jac: SurfaceField,
    /// Relative residual reached by the iterative solve.
    pub rel_residual: f64,
    pub iterations: usize,
}

impl FlattenedPotential {
    /// `int_{Omega} f dV` evaluated on the flattened grid with the Jacobian.
    pub fn volume_integral<F>(&self, grid: &Grid, f: F) -> f64
    where
        F: Fn(usize, usize, usize) -> f64,
    {
        let mut acc = 0.0;
        for j in 0..grid.nz {
            let mut level = 0.0;
            for jy in 0..grid.ny {
                let mut row = 0.0;
                for ix in 0..grid.nx {
                    row += grid.wx1[ix] * f(j, jy, ix) * self.jac[[jy, ix]];
                }
                level += grid.wx2[jy] * row;
            }
            acc += grid.wz[j] * level;
        }
        acc
    }

    /// Dirichlet-to-Neumann image `G(eta) psi` assembled from the surface
    /// traces of the flattened solution: `dy(phi) - grad(eta) . grad(phi)`.
    pub fn dtn_trace(&self, grid: &Grid) -> SurfaceField {
        let mut out = grid.zero_surface();
        for jy in 0..grid.ny {
            for ix in 0..grid.nx {
                out[[jy, ix]] = self.phi_y[[0, jy, ix]]
                    - self.eta_x1[[jy, ix]] * self.phi_x1[[0, jy, ix]]
                    - self.eta_x2[[jy, ix]] * self.phi_x2[[0, jy, ix]];
            }
        }
        out
    }
}

/// Surface trace velocities and the DtN image.
#[derive(Clone)]
pub struct SurfaceFields {
    /// Vertical trace velocity `B = dy(phi)|_{y=eta}`.
    pub b: SurfaceField,
    /// Horizontal trace velocity `V = grad(psi) - B grad(eta)`.
    pub v1: SurfaceField,
    pub v2: SurfaceField,
    /// `G(eta) psi`.
    pub g_psi: SurfaceField,
}

// ---------------------------------------------------------------------------
// flat-strip tau preconditioner
// ---------------------------------------------------------------------------

/// Thomas factorization of one parity chain of the tau system
/// `(I - mu^2 B2) c = r` plus the influence vector of the low coefficient
/// (`c_0` for the even chain, `c_1` for the odd one).
struct Chain {
    /// first tau row index (2 or 3)
    start: usize,
    /// forward-elimination multipliers
    mul: Vec<f64>,
    /// modified diagonal
    diag: Vec<f64>,
    /// upper band
    upper: Vec<f64>,
    /// chain solution driven by the low coefficient alone
    influence: Vec<f64>,
}

impl Chain {
    fn build(start: usize, mz: usize, mu2: f64) -> Chain {
        let ns: Vec<usize> = (start..=mz).step_by(2).collect();
        let len = ns.len();
        let mut lower = vec![0.0; len];
        let mut diag = vec![0.0; len];
        let mut upper = vec![0.0; len];
        for (t, &n) in ns.iter().enumerate() {
            let nf = n as f64;
            diag[t] = 1.0 + mu2 / (2.0 * (nf * nf - 1.0));
            if t > 0 {
                lower[t] = -mu2 / (4.0 * nf * (nf - 1.0));
            }
            if n + 2 <= mz {
                upper[t] = -mu2 / (4.0 * nf * (nf + 1.0));
            }
        }
        // factor (strictly diagonally dominant, no pivoting needed)
        let mut mul = vec![0.0; len];
        for t in 1..len {
            let w = lower[t] / diag[t - 1];
            mul[t] = w;
            diag[t] -= w * upper[t - 1];
        }
        let mut chain = Chain {
            start,
            mul,
            diag,
            upper,
            influence: Vec::new(),
        };
        // influence of the low coefficient: row at n = start couples it with
        // weight -mu^2 * chat / (4 n (n-1)), chat = 2 for c_0, 1 for c_1
        let chat = if start == 2 { 2.0 } else { 1.0 };
        let nf = start as f64;
        let mut rhs = vec![0.0; len];
        if len > 0 {
            rhs[0] = mu2 * chat / (4.0 * nf * (nf - 1.0));
        }
        chain.solve_in_place(&mut rhs);
        chain.influence = rhs;
        chain
    }

    fn solve_in_place(&self, r: &mut [f64]) {
        let len = r.len();
        for t in 1..len {
            r[t] -= self.mul[t] * r[t - 1];
        }
        if len > 0 {
            r[len - 1] /= self.diag[len - 1];
            for t in (0..len - 1).rev() {
                r[t] = (r[t] - self.upper[t] * r[t + 1]) / self.diag[t];
            }
        }
    }
}

/// Exact flat-strip solver for one horizontal mode.
struct ModeSolver {
    even: Chain,
    odd: Chain,
    /// inverse of the 2x2 boundary system for (c_0, c_1)
    inv: [f64; 4],
}

impl ModeSolver {
    fn build(k2: f64, h: f64, mz: usize) -> ModeSolver {
        let mu2 = k2 * h * h / 4.0;
        let even = Chain::build(2, mz, mu2);
        let odd = Chain::build(3, mz, mu2);
        let two_over_h = 2.0 / h;
        // Dirichlet at the surface: sum of all coefficients.
        let a11 = 1.0 + even.influence.iter().sum::<f64>();
        let a12 = 1.0 + odd.influence.iter().sum::<f64>();
        // Neumann at the bottom: (2/h) * sum (-1)^(n+1) n^2 c_n.
        let a21 = two_over_h * bc_bottom_sum(&even.influence, even.start);
        let a22 = two_over_h * (1.0 + bc_bottom_sum(&odd.influence, odd.start));
        let det = a11 * a22 - a12 * a21;
        ModeSolver {
            even,
            odd,
            inv: [a22 / det, -a12 / det, -a21 / det, a11 / det],
        }
    }

    /// Solve the flat tau system in place: on input `col` carries the
    /// residual rows (slot 0 = surface value, slots 1..mz = tau rows n=2..mz,
    /// slot mz = bottom derivative); on output it carries the Chebyshev
    /// coefficients of the solution.
    fn solve(&self, col: &mut [f64], h: f64, work_e: &mut Vec<f64>, work_o: &mut Vec<f64>) {
        let mz = col.len() - 1;
        let r_surf = col[0];
        let r_bot = col[mz];
        work_e.clear();
        work_o.clear();
        for n in 2..=mz {
            let r = col[n - 1];
            if n % 2 == 0 {
                work_e.push(r);
            } else {
                work_o.push(r);
            }
        }
        self.even.solve_in_place(work_e);
        self.odd.solve_in_place(work_o);
        let two_over_h = 2.0 / h;
        let s_e: f64 = work_e.iter().sum();
        let s_o: f64 = work_o.iter().sum();
        let n_e = bc_bottom_sum(work_e, 2);
        let n_o = bc_bottom_sum(work_o, 3);
        let b1 = r_surf - s_e - s_o;
        let b2 = r_bot - two_over_h * (n_e + n_o);
        let c0 = self.inv[0] * b1 + self.inv[1] * b2;
        let c1 = self.inv[2] * b1 + self.inv[3] * b2;
        col[0] = c0;
        col[1] = c1;
        for (t, v) in work_e.iter().enumerate() {
            col[2 + 2 * t] = v + c0 * self.even.influence[t];
        }
        for (t, v) in work_o.iter().enumerate() {
            col[3 + 2 * t] = v + c1 * self.odd.influence[t];
        }
    }
}

fn bc_bottom_sum(chain_vals: &[f64], start: usize) -> f64 {
    // sum over the chain of (-1)^(n+1) n^2 v_n with n = start, start+2, ...
    let sign = if start % 2 == 0 { -1.0 } else { 1.0 };
    let mut acc = 0.0;
    for (t, v) in chain_vals.iter().enumerate() {
        let n = (start + 2 * t) as f64;
        acc += n * n * v;
    }
    sign * acc
}

// ---------------------------------------------------------------------------
// solver
// ---------------------------------------------------------------------------

/// Reusable Dirichlet-to-Neumann solver bound to a grid.
///
/// Holds the per-mode flat-strip factorizations, preallocated work buffers
/// and a warm-start history; distinct instances may run concurrently.
pub struct DtnSolver<'g> {
    grid: &'g Grid,
    opts: SolverOptions,
    modes: Vec<ModeSolver>,
    /// Tau integration bands for the interior rows, scaled by `(h/2)^2`.
    b2_lo: Vec<f64>,
    b2_di: Vec<f64>,
    b2_up: Vec<f64>,
    warm: Option<Vec<f64>>,
    warm_prev: Option<Vec<f64>>,
    work: Work,
    work2: Work,
    chain_e: Vec<f64>,
    chain_o: Vec<f64>,
    buffers: OperatorBuffers,
    krylov: KrylovPool,
}

impl<'g> DtnSolver<'g> {
    pub fn new(grid: &'g Grid) -> Self {
        Self::with_options(grid, SolverOptions::default())
    }

    pub fn with_options(grid: &'g Grid, opts: SolverOptions) -> Self {
        let mz = grid.nz - 1;
        let h = grid.h();
        let mut modes = Vec::with_capacity(grid.ny * grid.nx);
        for jy in 0..grid.ny {
            for ix in 0..grid.nx {
                let k2 = grid.k1[ix] * grid.k1[ix] + grid.k2[jy] * grid.k2[jy];
                modes.push(ModeSolver::build(k2, h, mz));
            }
        }
        // tau integration bands for rows n = 2..mz, scaled by (h/2)^2
        let s = h * h / 4.0;
        let mut b2_lo = vec![0.0; mz + 1];
        let mut b2_di = vec![0.0; mz + 1];
        let mut b2_up = vec![0.0; mz + 1];
        for n in 2..=mz {
            let nf = n as f64;
            let chat = if n == 2 { 2.0 } else { 1.0 };
            b2_lo[n] = s * chat / (4.0 * nf * (nf - 1.0));
            b2_di[n] = -s / (2.0 * (nf * nf - 1.0));
            if n + 2 <= mz {
                b2_up[n] = s / (4.0 * nf * (nf + 1.0));
            }
        }
        let scratch = grid
            .line1
            .scratch_len()
            .max(grid.cheb.scratch_len())
            .max(grid.line2.as_ref().map_or(0, |l| l.scratch_len()));
        let maxline = grid.nx.max(grid.ny).max(grid.nz) + 1;
        DtnSolver {
            grid,
            opts,
            modes,
            b2_lo,
            b2_di,
            b2_up,
            warm: None,
            warm_prev: None,
            work: Work::with_capacity(maxline, scratch),
            work2: Work::with_capacity(maxline, scratch),
            chain_e: Vec::with_capacity(mz / 2 + 1),
            chain_o: Vec::with_capacity(mz / 2 + 1),
            buffers: OperatorBuffers::new(grid),
            krylov: KrylovPool::default(),
        }
    }

    pub fn options(&self) -> SolverOptions {
        self.opts
    }

    /// Drop the warm-start history (e.g. when jumping to unrelated data).
    pub fn reset_warm_start(&mut self) {
        self.warm = None;
        self.warm_prev = None;
    }

    fn n_total(&self) -> usize {
        self.grid.nz * self.grid.ny * self.grid.nx
    }

    #[inline]
    fn at(&self, j: usize, jy: usize, ix: usize) -> usize {
        (j * self.grid.ny + jy) * self.grid.nx + ix
    }

    /// Solve the flattened Laplace problem for `(eta, psi)`.
    pub fn extend(&mut self, eta: &SurfaceField, psi: &SurfaceField) -> Result<FlattenedPotential> {
        let raw = self.solve_system(eta, psi)?;
        Ok(self.finalize(raw, eta, psi))
    }

    /// Solve and extract only the Dirichlet-to-Neumann trace, skipping the
    /// volume derivative fields. This is what the time stepper uses on the
    /// inner RK4 stages.
    pub fn trace_solve(&mut self, eta: &SurfaceField, psi: &SurfaceField) -> Result<TraceSolution> {
        let raw = self.solve_system(eta, psi)?;
        let grid = self.grid;
        let (ny, nx) = (grid.ny, grid.nx);

        // surface traces directly from the Chebyshev coefficients:
        // value = sum c_n, d/dzeta = sum n^2 c_n at zeta = 1
        let ncols = ny * nx;
        let mut phi_z0 = grid.zero_surface();
        let mut top = grid.zero_surface();
        {
            let dz_scale = 2.0 / grid.h();
            let pz = phi_z0.as_slice_mut().expect("layout");
            let tp = top.as_slice_mut().expect("layout");
            for n in 0..grid.nz {
                let w = dz_scale * (n * n) as f64;
                let row = &raw.coeffs[n * ncols..(n + 1) * ncols];
                for c in 0..ncols {
                    pz[c] += w * row[c];
                    tp[c] += row[c];
                }
            }
        }
        let top_x1 = grid.diff1(&top);
        let top_x2 = grid.diff2(&top);

        let mut g_psi = grid.zero_surface();
        for jy in 0..ny {
            for ix in 0..nx {
                let e1 = raw.eta_x1[[jy, ix]];
                let e2 = raw.eta_x2[[jy, ix]];
                let grad2 = e1 * e1 + e2 * e2;
                g_psi[[jy, ix]] = (1.0 + grad2) * phi_z0[[jy, ix]] / raw.jac[[jy, ix]]
                    - e1 * top_x1[[jy, ix]]
                    - e2 * top_x2[[jy, ix]];
            }
        }
        Ok(TraceSolution {
            g_psi,
            eta_x1: raw.eta_x1,
            eta_x2: raw.eta_x2,
            rel_residual: raw.rel_residual,
            iterations: raw.iterations,
        })
    }

    fn solve_system(&mut self, eta: &SurfaceField, psi: &SurfaceField) -> Result<RawSolution> {
        let grid = self.grid;
        let h = grid.h();
        let min_eta = eta.iter().cloned().fold(f64::INFINITY, f64::min);
        let min_jac = 1.0 + min_eta / h;
        if !(min_jac > 0.5 - 1e-12) {
            return Err(WaveError::Diffeomorphism { min_jac });
        }

        let eta_x1 = grid.diff1(eta);
        let eta_x2 = grid.diff2(eta);
        let jac = eta.mapv(|e| 1.0 + e / h);
        let geom = Geometry {
            eta_x1: &eta_x1,
            eta_x2: &eta_x2,
            jac: &jac,
        };

        let n = self.n_total();
        let mut b = vec![0.0; n];
        for jy in 0..grid.ny {
            for ix in 0..grid.nx {
                b[self.at(0, jy, ix)] = psi[[jy, ix]];
            }
        }

        // left-preconditioned right-hand side; also the flat-strip solution,
        // which is the natural initial guess when no history exists
        let mut bp = b.clone();
        self.precondition(&mut bp);
        let norm_bp = norm(&bp).max(1e-300);

        let mut x = match (&self.warm, &self.warm_prev) {
            (Some(last), Some(prev)) if last.len() == n && prev.len() == n => {
                let mut guess = vec![0.0; n];
                for i in 0..n {
                    guess[i] = 2.0 * last[i] - prev[i];
                }
                guess
            }
            (Some(last), None) if last.len() == n => last.clone(),
            _ => bp.clone(),
        };

        let mut buffers = std::mem::take(&mut self.buffers);
        buffers.ensure(grid);
        let mut pool = std::mem::take(&mut self.krylov);
        pool.scratch.resize(n, 0.0);
        let mut scratch_apply = std::mem::take(&mut pool.scratch);
        let (residual, iterations) = gmres(
            &mut x,
            &bp,
            norm_bp,
            self.opts,
            &mut |v, out, slf: &mut Self| {
                slf.apply_operator(v, out, &geom, &mut buffers);
                slf.precondition(out);
            },
            self,
            &mut scratch_apply,
            &mut pool.basis,
        );
        pool.scratch = scratch_apply;
        self.krylov = pool;
        self.buffers = buffers;
        if !(residual <= self.opts.tol) {
            return Err(WaveError::EllipticDiverged {
                residual,
                iterations,
                tol: self.opts.tol,
            });
        }

        self.warm_prev = self.warm.take();
        self.warm = Some(x.clone());

        Ok(RawSolution {
            coeffs: x,
            eta_x1,
            eta_x2,
            jac,
            rel_residual: residual,
            iterations,
        })
    }

    fn finalize(&mut self, raw: RawSolution, eta: &SurfaceField, psi: &SurfaceField) -> FlattenedPotential {
        let grid = self.grid;
        let (nz, ny, nx) = (grid.nz, grid.ny, grid.nx);
        let ncols = ny * nx;
        let h = grid.h();
        let RawSolution {
            coeffs,
            eta_x1,
            eta_x2,
            jac,
            rel_residual,
            iterations,
        } = raw;

        // node values and flat vertical derivative from the coefficients
        let mut phi = grid.zero_volume();
        let mut du_z = grid.zero_volume();
        {
            let c_view = ArrayView2::from_shape((nz, ncols), coeffs.as_slice()).expect("shape");
            let mut phi_view =
                ArrayViewMut2::from_shape((nz, ncols), phi.as_slice_mut().expect("layout"))
                    .expect("shape");
            general_mat_mul(1.0, &grid.vertical.values_from_coeffs, &c_view, 0.0, &mut phi_view);
            let mut dc = vec![0.0; coeffs.len()];
            dz_coeff_rows(&coeffs, &mut dc, nz, ncols, 2.0 / h);
            let dc_view = ArrayView2::from_shape((nz, ncols), dc.as_slice()).expect("shape");
            let mut duz_view =
                ArrayViewMut2::from_shape((nz, ncols), du_z.as_slice_mut().expect("layout"))
                    .expect("shape");
            general_mat_mul(1.0, &grid.vertical.values_from_coeffs, &dc_view, 0.0, &mut duz_view);
        }
        let mut du_x1 = grid.zero_volume();
        self.dx1_volume_even(&phi, &mut du_x1);
        let mut du_x2 = grid.zero_volume();
        if ny > 1 {
            self.dx2_volume_even(&phi, &mut du_x2);
        }

        // chain rule: dy = dz/J; dx|_y = dx_flat - (sigma eta_x / J) dz
        let mut phi_y = grid.zero_volume();
        let mut phi_x1 = grid.zero_volume();
        let mut phi_x2 = grid.zero_volume();
        for j in 0..nz {
            let sigma = 1.0 + grid.z[j] / h;
            for jy in 0..ny {
                for ix in 0..nx {
                    let jc = jac[[jy, ix]];
                    let uz = du_z[[j, jy, ix]];
                    phi_y[[j, jy, ix]] = uz / jc;
                    phi_x1[[j, jy, ix]] =
                        du_x1[[j, jy, ix]] - sigma * eta_x1[[jy, ix]] / jc * uz;
                    if ny > 1 {
                        phi_x2[[j, jy, ix]] =
                            du_x2[[j, jy, ix]] - sigma * eta_x2[[jy, ix]] / jc * uz;
                    }
                }
            }
        }

        FlattenedPotential {
            phi,
            phi_y,
            phi_x1,
            phi_x2,
            eta: eta.clone(),
            eta_x1,
            eta_x2,
            psi: psi.clone(),
            jac,
            rel_residual,
            iterations,
        }
    }

    /// `G(eta) psi` via the surface traces of the extension.
    pub fn dtn(&mut self, eta: &SurfaceField, psi: &SurfaceField) -> Result<SurfaceField> {
        Ok(self.trace_solve(eta, psi)?.g_psi)
    }

    fn trace_dtn(&self, pot: &FlattenedPotential) -> SurfaceField {
        let grid = self.grid;
        let mut out = grid.zero_surface();
        for jy in 0..grid.ny {
            for ix in 0..grid.nx {
                let e1 = pot.eta_x1[[jy, ix]];
                let e2 = pot.eta_x2[[jy, ix]];
                out[[jy, ix]] = pot.phi_y[[0, jy, ix]]
                    - e1 * pot.phi_x1[[0, jy, ix]]
                    - e2 * pot.phi_x2[[0, jy, ix]];
            }
        }
        out
    }

    /// Surface fields `B`, `V`, `G(eta) psi`; the returned `B` and `V` are
    /// assembled from `G(eta) psi` and `grad(psi)` so that the algebraic
    /// relations `V = grad(psi) - B grad(eta)` and `G = B - V . grad(eta)`
    /// hold at round-off.
    pub fn fields(&mut self, eta: &SurfaceField, psi: &SurfaceField) -> Result<SurfaceFields> {
        let pot = self.extend(eta, psi)?;
        Ok(self.fields_from(&pot))
    }

    pub fn fields_from(&self, pot: &FlattenedPotential) -> SurfaceFields {
        let grid = self.grid;
        let g_psi = self.trace_dtn(pot);
        let psi_x1 = grid.diff1(&pot.psi);
        let psi_x2 = grid.diff2(&pot.psi);
        let mut b = grid.zero_surface();
        let mut v1 = grid.zero_surface();
        let mut v2 = grid.zero_surface();
        for jy in 0..grid.ny {
            for ix in 0..grid.nx {
                let e1 = pot.eta_x1[[jy, ix]];
                let e2 = pot.eta_x2[[jy, ix]];
                let grad2 = e1 * e1 + e2 * e2;
                let bb = (g_psi[[jy, ix]] + e1 * psi_x1[[jy, ix]] + e2 * psi_x2[[jy, ix]])
                    / (1.0 + grad2);
                b[[jy, ix]] = bb;
                v1[[jy, ix]] = psi_x1[[jy, ix]] - bb * e1;
                v2[[jy, ix]] = psi_x2[[jy, ix]] - bb * e2;
            }
        }
        SurfaceFields { b, v1, v2, g_psi }
    }

    /// Lannes shape derivative: the first-order change of `G(eta) psi` under
    /// `eta -> eta + eps * delta`, i.e. `-G(eta)(B delta) - div(V delta)`.
    pub fn shape_derivative(
        &mut self,
        eta: &SurfaceField,
        psi: &SurfaceField,
        delta: &SurfaceField,
    ) -> Result<SurfaceField> {
        let grid = self.grid;
        let f = self.fields(eta, psi)?;
        let b_delta = &f.b * delta;
        let g_b_delta = self.dtn(eta, &b_delta)?;
        let v1_delta = &f.v1 * delta;
        let v2_delta = &f.v2 * delta;
        let mut div = self.dx1_surface_odd(&v1_delta);
        if grid.ny > 1 {
            let d2 = self.dx2_surface_odd(&v2_delta);
            div = &div + &d2;
        }
        let mut out = grid.zero_surface();
        for jy in 0..grid.ny {
            for ix in 0..grid.nx {
                out[[jy, ix]] = -g_b_delta[[jy, ix]] - div[[jy, ix]];
            }
        }
        Ok(out)
    }

    // -- spectral helpers -------------------------------------------------

    fn dx1_surface_odd(&mut self, v: &SurfaceField) -> SurfaceField {
        let grid = self.grid;
        let mut out = grid.zero_surface();
        let mut line_out = vec![0.0; grid.nx];
        for jy in 0..grid.ny {
            let row: Vec<f64> = v.row(jy).to_vec();
            grid.line1.deriv_odd(
                &row,
                grid.k1.as_slice().unwrap(),
                &mut line_out,
                &mut self.work,
            );
            for ix in 0..grid.nx {
                out[[jy, ix]] = line_out[ix];
            }
        }
        out
    }

    fn dx2_surface_odd(&mut self, v: &SurfaceField) -> SurfaceField {
        let grid = self.grid;
        let mut out = grid.zero_surface();
        let line2 = grid.line2.as_ref().expect("d == 2");
        let mut col = vec![0.0; grid.ny];
        let mut col_out = vec![0.0; grid.ny];
        for ix in 0..grid.nx {
            for jy in 0..grid.ny {
                col[jy] = v[[jy, ix]];
            }
            line2.deriv_odd(&col, grid.k2.as_slice().unwrap(), &mut col_out, &mut self.work);
            for jy in 0..grid.ny {
                out[[jy, ix]] = col_out[jy];
            }
        }
        out
    }

    fn dx1_volume_even(&mut self, src: &VolumeField, out: &mut VolumeField) {
        let grid = self.grid;
        let mut line = vec![0.0; grid.nx];
        let mut line_out = vec![0.0; grid.nx];
        for j in 0..grid.nz {
            for jy in 0..grid.ny {
                for ix in 0..grid.nx {
                    line[ix] = src[[j, jy, ix]];
                }
                grid.line1.deriv_even(
                    &line,
                    grid.k1.as_slice().unwrap(),
                    &mut line_out,
                    &mut self.work,
                );
                for ix in 0..grid.nx {
                    out[[j, jy, ix]] = line_out[ix];
                }
            }
        }
    }

    fn dx2_volume_even(&mut self, src: &VolumeField, out: &mut VolumeField) {
        let grid = self.grid;
        let line2 = grid.line2.as_ref().expect("d == 2");
        let mut line = vec![0.0; grid.ny];
        let mut line_out = vec![0.0; grid.ny];
        for j in 0..grid.nz {
            for ix in 0..grid.nx {
                for jy in 0..grid.ny {
                    line[jy] = src[[j, jy, ix]];
                }
                line2.deriv_even(&line, grid.k2.as_slice().unwrap(), &mut line_out, &mut self.work);
                for jy in 0..grid.ny {
                    out[[j, jy, ix]] = line_out[jy];
                }
            }
        }
    }

    // -- operator and preconditioner --------------------------------------

    /// Residual rows of the transformed Laplacian applied to `u`, which is
    /// given as vertical Chebyshev coefficients per horizontal column. The
    /// lifting is linear in z, so every vertical factor (`sigma`, `sigma^2`)
    /// acts as a short band in coefficient space; only the horizontal
    /// derivatives leave it.
    fn apply_operator(&mut self, u: &[f64], out: &mut [f64], geom: &Geometry, buf: &mut OperatorBuffers) {
        let grid = self.grid;
        let (nz, ny, nx) = (grid.nz, grid.ny, grid.nx);
        let ncols = ny * nx;
        let h = grid.h();
        let mz = nz - 1;

        // vertical derivative, in coefficient space
        dz_coeff_rows(u, &mut buf.u_z, nz, ncols, 2.0 / h);

        // horizontal derivatives, row by coefficient row
        for n in 0..nz {
            for jy in 0..ny {
                let base = (n * ny + jy) * nx;
                grid.line1.deriv_even(
                    &u[base..base + nx],
                    grid.k1.as_slice().unwrap(),
                    &mut buf.line_out[..nx],
                    &mut self.work,
                );
                buf.u_x1[base..base + nx].copy_from_slice(&buf.line_out[..nx]);
            }
        }
        if ny > 1 {
            let line2 = grid.line2.as_ref().expect("d == 2");
            for n in 0..nz {
                for ix in 0..nx {
                    for jy in 0..ny {
                        buf.line[jy] = u[(n * ny + jy) * nx + ix];
                    }
                    line2.deriv_even(
                        &buf.line[..ny],
                        grid.k2.as_slice().unwrap(),
                        &mut buf.line_out[..ny],
                        &mut self.work,
                    );
                    for jy in 0..ny {
                        buf.u_x2[(n * ny + jy) * nx + ix] = buf.line_out[jy];
                    }
                }
            }
        }

        // sigma u_z and sigma^2 u_z (tridiagonal in the coefficients)
        mul_sigma_rows(&buf.u_z, &mut buf.t1, nz, ncols);
        mul_sigma_rows(&buf.t1, &mut buf.t2, nz, ncols);

        // fluxes:
        //   f1 = J u_x1 - eta_x1 (sigma u_z)       (same for f2)
        //   fz = u_z / J + (|grad eta|^2 / J)(sigma^2 u_z)
        //        - sigma (eta_x1 u_x1 + eta_x2 u_x2)
        let geo_jac = geom.jac.as_slice().expect("layout");
        let geo_e1 = geom.eta_x1.as_slice().expect("layout");
        let geo_e2 = geom.eta_x2.as_slice().expect("layout");
        for n in 0..nz {
            let base = n * ncols;
            for c in 0..ncols {
                let jc = geo_jac[c];
                let e1 = geo_e1[c];
                let uz = buf.u_z[base + c];
                let ux1 = buf.u_x1[base + c];
                buf.f1[base + c] = jc * ux1 - e1 * buf.t1[base + c];
                let mut s_mix = e1 * ux1;
                let mut grad2 = e1 * e1;
                if ny > 1 {
                    let e2 = geo_e2[c];
                    let ux2 = buf.u_x2[base + c];
                    buf.f2[base + c] = jc * ux2 - e2 * buf.t1[base + c];
                    s_mix += e2 * ux2;
                    grad2 += e2 * e2;
                }
                buf.fz[base + c] = uz / jc + grad2 / jc * buf.t2[base + c];
                // stash the mixed term for the sigma multiplication below
                buf.t1[base + c] = s_mix;
            }
        }
        mul_sigma_rows(&buf.t1, &mut buf.t2, nz, ncols);
        for (fzv, sv) in buf.fz.iter_mut().zip(buf.t2.iter()) {
            *fzv -= sv;
        }

        // E = dx1(f1) + dx2(f2) + dz(fz), assembled in `rows`
        for n in 0..nz {
            for jy in 0..ny {
                let base = (n * ny + jy) * nx;
                grid.line1.deriv_odd(
                    &buf.f1[base..base + nx],
                    grid.k1.as_slice().unwrap(),
                    &mut buf.line_out[..nx],
                    &mut self.work,
                );
                buf.rows[base..base + nx].copy_from_slice(&buf.line_out[..nx]);
            }
        }
        if ny > 1 {
            let line2 = grid.line2.as_ref().expect("d == 2");
            for n in 0..nz {
                for ix in 0..nx {
                    for jy in 0..ny {
                        buf.line[jy] = buf.f2[(n * ny + jy) * nx + ix];
                    }
                    line2.deriv_odd(
                        &buf.line[..ny],
                        grid.k2.as_slice().unwrap(),
                        &mut buf.line_out[..ny],
                        &mut self.work,
                    );
                    for jy in 0..ny {
                        buf.rows[(n * ny + jy) * nx + ix] += buf.line_out[jy];
                    }
                }
            }
        }
        dz_coeff_rows(&buf.fz, &mut buf.t1, nz, ncols, 2.0 / h);
        for (ev, dv) in buf.rows.iter_mut().zip(buf.t1.iter()) {
            *ev += dv;
        }

        // residual rows: tau bands of E in slots 1..mz-1, boundary rows at
        // the ends (surface value, bottom vertical derivative)
        for slot in 1..mz {
            let n = slot + 1;
            let lo = self.b2_lo[n];
            let di = self.b2_di[n];
            let up = self.b2_up[n];
            let (lo_row, di_row) = (&buf.rows[(n - 2) * ncols..(n - 1) * ncols], &buf.rows[n * ncols..(n + 1) * ncols]);
            let out_row = &mut out[slot * ncols..(slot + 1) * ncols];
            if n + 2 <= mz && up != 0.0 {
                for c in 0..ncols {
                    out_row[c] = lo * lo_row[c] + di * di_row[c] + up * buf.rows[(n + 2) * ncols + c];
                }
            } else {
                for c in 0..ncols {
                    out_row[c] = lo * lo_row[c] + di * di_row[c];
                }
            }
        }
        // surface value: sum of coefficients; bottom derivative:
        // (2/h) sum (-1)^(n+1) n^2 c_n
        {
            let (head, _) = out.split_at_mut(ncols);
            head.copy_from_slice(&u[..ncols]);
            for n in 1..nz {
                let row = &u[n * ncols..(n + 1) * ncols];
                for c in 0..ncols {
                    head[c] += row[c];
                }
            }
        }
        {
            let tail = &mut out[mz * ncols..];
            tail.fill(0.0);
            let dz_scale = 2.0 / h;
            for n in 1..nz {
                let sign = if n % 2 == 0 { -1.0 } else { 1.0 };
                let w = dz_scale * sign * (n * n) as f64;
                let row = &u[n * ncols..(n + 1) * ncols];
                for c in 0..ncols {
                    tail[c] += w * row[c];
                }
            }
        }
    }

    /// Exact flat-strip inverse applied to residual rows, in place; the
    /// result is the correction in coefficient space.
    fn precondition(&mut self, r: &mut [f64]) {
        let grid = self.grid;
        let (nz, ny, nx) = (grid.nz, grid.ny, grid.nx);
        let h = grid.h();

        // forward cosine transform of every row-slot plane
        for j in 0..nz {
            for jy in 0..ny {
                let base = (j * ny + jy) * nx;
                self.work.line.clear();
                self.work.line.extend_from_slice(&r[base..base + nx]);
                let mut line = std::mem::take(&mut self.work.line);
                grid.line1.cos_coeffs(&mut line, &mut self.work.scratch);
                r[base..base + nx].copy_from_slice(&line);
                self.work.line = line;
            }
        }
        if ny > 1 {
            let line2 = grid.line2.as_ref().expect("d == 2");
            let mut col = vec![0.0; ny];
            for j in 0..nz {
                for ix in 0..nx {
                    for jy in 0..ny {
                        col[jy] = r[(j * ny + jy) * nx + ix];
                    }
                    line2.cos_coeffs(&mut col, &mut self.work2.scratch);
                    for jy in 0..ny {
                        r[(j * ny + jy) * nx + ix] = col[jy];
                    }
                }
            }
        }

        // per-mode tau solve (columns in mode space); the output stays in
        // vertical coefficient space
        let mut col = vec![0.0; nz];
        for jy in 0..ny {
            for ix in 0..nx {
                for j in 0..nz {
                    col[j] = r[(j * ny + jy) * nx + ix];
                }
                self.modes[jy * nx + ix].solve(&mut col, h, &mut self.chain_e, &mut self.chain_o);
                for j in 0..nz {
                    r[(j * ny + jy) * nx + ix] = col[j];
                }
            }
        }

        // inverse cosine transforms back to physical space
        if ny > 1 {
            let line2 = grid.line2.as_ref().expect("d == 2");
            let mut cbuf = vec![0.0; ny];
            for j in 0..nz {
                for ix in 0..nx {
                    for jy in 0..ny {
                        cbuf[jy] = r[(j * ny + jy) * nx + ix];
                    }
                    line2.cos_values(&mut cbuf, &mut self.work2.scratch);
                    for jy in 0..ny {
                        r[(j * ny + jy) * nx + ix] = cbuf[jy];
                    }
                }
            }
        }
        for j in 0..nz {
            for jy in 0..ny {
                let base = (j * ny + jy) * nx;
                self.work.line.clear();
                self.work.line.extend_from_slice(&r[base..base + nx]);
                let mut line = std::mem::take(&mut self.work.line);
                grid.line1.cos_values(&mut line, &mut self.work.scratch);
                r[base..base + nx].copy_from_slice(&line);
                self.work.line = line;
            }
        }
    }
}

/// Row-wise coefficient-space vertical derivative: `dst = scale d/dzeta src`
/// on `(nz, ncols)` data.
fn dz_coeff_rows(src: &[f64], dst: &mut [f64], nz: usize, ncols: usize, scale: f64) {
    let mz = nz - 1;
    dst[mz * ncols..].fill(0.0);
    if mz >= 1 {
        let w = scale * 2.0 * mz as f64;
        let (lo, hi) = dst.split_at_mut(mz * ncols);
        let _ = hi;
        let dtop = &mut lo[(mz - 1) * ncols..];
        let stop = &src[mz * ncols..];
        for c in 0..ncols {
            dtop[c] = w * stop[c];
        }
    }
    for n in (1..mz).rev() {
        let w = scale * 2.0 * n as f64;
        for c in 0..ncols {
            dst[(n - 1) * ncols + c] = dst[(n + 1) * ncols + c] + w * src[n * ncols + c];
        }
    }
    for v in dst[..ncols].iter_mut() {
        *v *= 0.5;
    }
}

/// Row-wise multiplication by `sigma = (1 + zeta)/2` in coefficient space:
/// `zeta T_n = (T_{n-1} + T_{n+1})/2`, truncated at the top degree.
fn mul_sigma_rows(src: &[f64], dst: &mut [f64], nz: usize, ncols: usize) {
    let mz = nz - 1;
    // dst_0 = s_0/2 + s_1/4 ; dst_1 = s_0/2 + s_1/2 + s_2/4
    for c in 0..ncols {
        dst[c] = 0.5 * src[c] + 0.25 * src[ncols + c];
    }
    if nz > 2 {
        for c in 0..ncols {
            dst[ncols + c] = 0.5 * src[c] + 0.5 * src[ncols + c] + 0.25 * src[2 * ncols + c];
        }
    }
    for n in 2..=mz {
        let up = if n + 1 <= mz { 0.25 } else { 0.0 };
        for c in 0..ncols {
            let mut v = 0.25 * src[(n - 1) * ncols + c] + 0.5 * src[n * ncols + c];
            if up != 0.0 {
                v += up * src[(n + 1) * ncols + c];
            }
            dst[n * ncols + c] = v;
        }
    }
}

struct Geometry<'a> {
    eta_x1: &'a SurfaceField,
    eta_x2: &'a SurfaceField,
    jac: &'a SurfaceField,
}

struct RawSolution {
    /// Solution as vertical Chebyshev coefficients per horizontal column.
    coeffs: Vec<f64>,
    eta_x1: SurfaceField,
    eta_x2: SurfaceField,
    jac: SurfaceField,
    rel_residual: f64,
    iterations: usize,
}

/// Dirichlet-to-Neumann trace without the volume fields.
pub struct TraceSolution {
    pub g_psi: SurfaceField,
    pub eta_x1: SurfaceField,
    pub eta_x2: SurfaceField,
    pub rel_residual: f64,
    pub iterations: usize,
}

#[derive(Default)]
struct OperatorBuffers {
    u_z: Vec<f64>,
    u_x1: Vec<f64>,
    u_x2: Vec<f64>,
    f1: Vec<f64>,
    f2: Vec<f64>,
    fz: Vec<f64>,
    t1: Vec<f64>,
    t2: Vec<f64>,
    rows: Vec<f64>,
    line: Vec<f64>,
    line_out: Vec<f64>,
}

impl OperatorBuffers {
    fn ensure(&mut self, grid: &Grid) {
        let n = grid.nz * grid.ny * grid.nx;
        if self.u_z.len() != n {
            *self = Self::new(grid);
        }
    }

    fn new(grid: &Grid) -> Self {
        let n = grid.nz * grid.ny * grid.nx;
        let two_d = grid.ny > 1;
        let vol = |need: bool| if need { vec![0.0; n] } else { Vec::new() };
        Self {
            u_z: vec![0.0; n],
            u_x1: vec![0.0; n],
            u_x2: vol(two_d),
            f1: vec![0.0; n],
            f2: vol(two_d),
            fz: vec![0.0; n],
            t1: vec![0.0; n],
            t2: vec![0.0; n],
            rows: vec![0.0; n],
            line: vec![0.0; grid.nx.max(grid.ny)],
            line_out: vec![0.0; grid.nx.max(grid.ny)],
        }
    }
}

// ---------------------------------------------------------------------------
// GMRES (restarted, left-preconditioned)
// ---------------------------------------------------------------------------

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Default)]
struct KrylovPool {
    basis: Vec<Vec<f64>>,
    scratch: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn gmres<S>(
    x: &mut Vec<f64>,
    b: &[f64],
    norm_b: f64,
    opts: SolverOptions,
    apply: &mut dyn FnMut(&[f64], &mut [f64], &mut S),
    state: &mut S,
    scratch: &mut [f64],
    pool: &mut Vec<Vec<f64>>,
) -> (f64, usize) {
    let n = b.len();
    let m = opts.restart.max(2);
    let mut total_iters = 0usize;
    let mut best_res = f64::INFINITY;
    let grab = |pool: &mut Vec<Vec<f64>>| -> Vec<f64> {
        let mut v = pool.pop().unwrap_or_default();
        v.resize(n, 0.0);
        v
    };

    loop {
        // r = b - A x
        apply(x, scratch, state);
        let mut r = grab(pool);
        for i in 0..n {
            r[i] = b[i] - scratch[i];
        }
        let beta = norm(&r);
        let rel = beta / norm_b;
        best_res = best_res.min(rel);
        if rel <= opts.tol || total_iters >= opts.max_iterations {
            pool.push(r);
            return (rel, total_iters);
        }

        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        for v in r.iter_mut() {
            *v /= beta;
        }
        basis.push(r);
        let mut hess = vec![vec![0.0f64; m]; m + 1];
        let mut cs = vec![0.0f64; m];
        let mut sn = vec![0.0f64; m];
        let mut g = vec![0.0f64; m + 1];
        g[0] = beta;
        let mut k_used = 0;

        for k in 0..m {
            apply(&basis[k], scratch, state);
            total_iters += 1;
            let mut w = grab(pool);
            w.copy_from_slice(scratch);
            for i in 0..=k {
                let hik: f64 = basis[i].iter().zip(w.iter()).map(|(a, b)| a * b).sum();
                hess[i][k] = hik;
                for (wv, bv) in w.iter_mut().zip(basis[i].iter()) {
                    *wv -= hik * bv;
                }
            }
            let hkk = norm(&w);
            hess[k + 1][k] = hkk;
            if hkk > 0.0 {
                for wv in w.iter_mut() {
                    *wv /= hkk;
                }
            }
            basis.push(w);

            // Givens rotations
            for i in 0..k {
                let t = cs[i] * hess[i][k] + sn[i] * hess[i + 1][k];
                hess[i + 1][k] = -sn[i] * hess[i][k] + cs[i] * hess[i + 1][k];
                hess[i][k] = t;
            }
            let denom = (hess[k][k] * hess[k][k] + hess[k + 1][k] * hess[k + 1][k]).sqrt();
            if denom == 0.0 {
                cs[k] = 1.0;
                sn[k] = 0.0;
            } else {
                cs[k] = hess[k][k] / denom;
                sn[k] = hess[k + 1][k] / denom;
            }
            hess[k][k] = cs[k] * hess[k][k] + sn[k] * hess[k + 1][k];
            hess[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;

            let rel_inner = g[k + 1].abs() / norm_b;
            if rel_inner <= 0.5 * opts.tol || total_iters >= opts.max_iterations {
                break;
            }
        }

        // back-substitution and update
        let mut y = vec![0.0f64; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for jj in i + 1..k_used {
                s -= hess[i][jj] * y[jj];
            }
            y[i] = s / hess[i][i];
        }
        for (i, yi) in y.iter().enumerate() {
            for (xv, bv) in x.iter_mut().zip(basis[i].iter()) {
                *xv += yi * bv;
            }
        }
        pool.append(&mut basis);
    }
}

// ---------------------------------------------------------------------------
// free-function API
// ---------------------------------------------------------------------------

/// One-shot harmonic extension (builds a solver, solves, returns the field).
pub fn harmonic_extension(
    eta: &SurfaceField,
    psi: &SurfaceField,
    grid: &Grid,
) -> Result<FlattenedPotential> {
    DtnSolver::new(grid).extend(eta, psi)
}

/// One-shot `G(eta) psi`.
pub fn dtn_apply(eta: &SurfaceField, psi: &SurfaceField, grid: &Grid) -> Result<SurfaceField> {
    DtnSolver::new(grid).dtn(eta, psi)
}

/// One-shot surface fields `B, V, G(eta) psi`.
pub fn surface_fields(
    eta: &SurfaceField,
    psi: &SurfaceField,
    grid: &Grid,
) -> Result<SurfaceFields> {
    DtnSolver::new(grid).fields(eta, psi)
}

/// One-shot Lannes shape derivative for a surface perturbation `delta`.
pub fn shape_derivative(
    eta: &SurfaceField,
    psi: &SurfaceField,
    delta: &SurfaceField,
    grid: &Grid,
) -> Result<SurfaceField> {
    DtnSolver::new(grid).shape_derivative(eta, psi, delta)
}

/// Flat-strip DtN symbol `k tanh(k h)`.
pub fn flat_symbol(k: f64, h: f64) -> f64 {
    k * (k * h).tanh()
}

/// Vertical eigenprofile of the flat strip, `cosh(k(z+h))/cosh(kh)`,
/// evaluated in a form that stays finite for large `k h`.
pub fn flat_profile(k: f64, h: f64, z: f64) -> f64 {
    if k == 0.0 {
        1.0
    } else {
        // cosh(k(z+h))/cosh(kh) = (e^{kz} + e^{-k(z+2h)}) / (1 + e^{-2kh})
        ((k * z).exp() + (-k * (z + 2.0 * h)).exp()) / (1.0 + (-2.0 * k * h).exp())
    }
}
