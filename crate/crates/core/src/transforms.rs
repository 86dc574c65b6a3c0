//! Real-to-real fast transforms used by the collocation grids.
//!
//! Horizontal fields live on the uniform nodes of an even 2L-periodic
//! extension, so every derivative is a cosine-to-sine (or sine-to-cosine)
//! pairing of DCT-I / DST-I transforms. Vertical fields live on
//! Chebyshev-Lobatto nodes and use the same DCT-I kernel for the
//! values <-> coefficients map. No complex arithmetic leaves this module.

use std::sync::Arc;

use rustdct::{Dct1, DctPlanner, Dst1};

/// Fast transforms along one horizontal axis with `m + 1` nodes on `[0, L]`.
///
/// Cosine modes are indexed `0..=m` with wavenumbers `k_n = pi*n/L`; odd
/// (sine) data is carried on the `m - 1` interior nodes only, since an odd
/// 2L-periodic field vanishes at both walls.
pub struct CosineLine {
    /// Number of intervals; the node count is `m + 1`.
    pub m: usize,
    dct: Arc<dyn Dct1<f64>>,
    dst: Arc<dyn Dst1<f64>>,
    scratch_len: usize,
}

impl CosineLine {
    pub fn new(m: usize) -> Self {
        assert!(m >= 2, "cosine line needs at least 3 nodes");
        let mut planner = DctPlanner::<f64>::new();
        let dct = planner.plan_dct1(m + 1);
        let dst = planner.plan_dst1(m - 1);
        let scratch_len = dct.get_scratch_len().max(dst.get_scratch_len());
        Self {
            m,
            dct,
            dst,
            scratch_len,
        }
    }

    pub fn scratch_len(&self) -> usize {
        self.scratch_len
    }

    /// Values at the `m + 1` nodes -> cosine coefficients `a_0..a_m`, in place.
    pub fn cos_coeffs(&self, buf: &mut [f64], scratch: &mut [f64]) {
        debug_assert_eq!(buf.len(), self.m + 1);
        self.dct
            .process_dct1_with_scratch(buf, &mut scratch[..self.dct.get_scratch_len()]);
        let inv_m = 1.0 / self.m as f64;
        buf[0] *= inv_m;
        buf[self.m] *= inv_m;
        for v in buf[1..self.m].iter_mut() {
            *v *= 2.0 * inv_m;
        }
    }

    /// Cosine coefficients -> values at the nodes, in place.
    pub fn cos_values(&self, buf: &mut [f64], scratch: &mut [f64]) {
        debug_assert_eq!(buf.len(), self.m + 1);
        buf[0] *= 2.0;
        buf[self.m] *= 2.0;
        self.dct
            .process_dct1_with_scratch(buf, &mut scratch[..self.dct.get_scratch_len()]);
    }

    /// Interior values of an odd field -> sine coefficients `b_1..b_{m-1}`.
    ///
    /// `buf` holds the `m - 1` interior node values and is overwritten with
    /// the coefficients (index 0 <-> mode 1).
    pub fn sin_coeffs(&self, buf: &mut [f64], scratch: &mut [f64]) {
        debug_assert_eq!(buf.len(), self.m - 1);
        self.dst
            .process_dst1_with_scratch(buf, &mut scratch[..self.dst.get_scratch_len()]);
        let s = 2.0 / self.m as f64;
        for v in buf.iter_mut() {
            *v *= s;
        }
    }

    /// Sine coefficients -> interior values, in place.
    pub fn sin_values(&self, buf: &mut [f64], scratch: &mut [f64]) {
        debug_assert_eq!(buf.len(), self.m - 1);
        self.dst
            .process_dst1_with_scratch(buf, &mut scratch[..self.dst.get_scratch_len()]);
    }

    /// Derivative of an even field: `values` (m+1) -> `out` (m+1).
    ///
    /// The result is odd, so `out[0] = out[m] = 0` exactly; this realizes the
    /// wall conditions of the tank at machine precision.
    pub fn deriv_even(&self, values: &[f64], wavenumbers: &[f64], out: &mut [f64], work: &mut Work) {
        let m = self.m;
        work.line.clear();
        work.line.extend_from_slice(values);
        self.cos_coeffs(&mut work.line, &mut work.scratch);
        // d/dx cos(k x) = -k sin(k x); the Nyquist mode has no grid-visible derivative
        work.interior.clear();
        for p in 1..m {
            work.interior.push(-wavenumbers[p] * work.line[p]);
        }
        self.sin_values(&mut work.interior, &mut work.scratch);
        out[0] = 0.0;
        out[m] = 0.0;
        out[1..m].copy_from_slice(&work.interior);
    }

    /// Derivative of an odd field given on the full node set (wall entries
    /// ignored): produces an even field on all `m + 1` nodes.
    pub fn deriv_odd(&self, values: &[f64], wavenumbers: &[f64], out: &mut [f64], work: &mut Work) {
        let m = self.m;
        work.interior.clear();
        work.interior.extend_from_slice(&values[1..m]);
        self.sin_coeffs(&mut work.interior, &mut work.scratch);
        // d/dx sin(k x) = k cos(k x)
        work.line.clear();
        work.line.resize(m + 1, 0.0);
        for p in 1..m {
            work.line[p] = wavenumbers[p] * work.interior[p - 1];
        }
        self.cos_values(&mut work.line, &mut work.scratch);
        out.copy_from_slice(&work.line);
    }

    /// Zero every cosine mode above `cut`, in place on node values.
    pub fn truncate_even(&self, values: &mut [f64], cut: usize, work: &mut Work) {
        work.line.clear();
        work.line.extend_from_slice(values);
        self.cos_coeffs(&mut work.line, &mut work.scratch);
        for p in (cut + 1)..=self.m {
            work.line[p] = 0.0;
        }
        self.cos_values(&mut work.line, &mut work.scratch);
        values.copy_from_slice(&work.line);
    }
}

/// Chebyshev transforms along the vertical axis with `mz + 1` Lobatto nodes.
///
/// Node `j` sits at `zeta_j = cos(pi j / mz)`, so `j = 0` is the free surface
/// (`z = 0`) and `j = mz` the bottom (`z = -h`). Values <-> T_n coefficients
/// reuse the DCT-I kernel.
pub struct ChebLine {
    pub mz: usize,
    dct: Arc<dyn Dct1<f64>>,
    scratch_len: usize,
}

impl ChebLine {
    pub fn new(mz: usize) -> Self {
        assert!(mz >= 2);
        let mut planner = DctPlanner::<f64>::new();
        let dct = planner.plan_dct1(mz + 1);
        let scratch_len = dct.get_scratch_len();
        Self {
            mz,
            dct,
            scratch_len,
        }
    }

    pub fn scratch_len(&self) -> usize {
        self.scratch_len
    }

    /// Node values -> Chebyshev coefficients, in place.
    pub fn coeffs(&self, buf: &mut [f64], scratch: &mut [f64]) {
        debug_assert_eq!(buf.len(), self.mz + 1);
        self.dct
            .process_dct1_with_scratch(buf, &mut scratch[..self.dct.get_scratch_len()]);
        let inv = 1.0 / self.mz as f64;
        buf[0] *= inv;
        buf[self.mz] *= inv;
        for v in buf[1..self.mz].iter_mut() {
            *v *= 2.0 * inv;
        }
    }

    /// Chebyshev coefficients -> node values, in place.
    pub fn values(&self, buf: &mut [f64], scratch: &mut [f64]) {
        debug_assert_eq!(buf.len(), self.mz + 1);
        buf[0] *= 2.0;
        buf[self.mz] *= 2.0;
        self.dct
            .process_dct1_with_scratch(buf, &mut scratch[..self.dct.get_scratch_len()]);
    }

    /// Coefficient-space derivative: `d_out = scale * d(c_in)/d(zeta)`.
    #[cfg(test)]
    pub fn deriv_coeffs(c_in: &[f64], out: &mut [f64], scale: f64) {
        let n = c_in.len() - 1;
        out[n] = 0.0;
        if n >= 1 {
            out[n - 1] = scale * 2.0 * n as f64 * c_in[n];
        }
        for k in (1..n).rev() {
            out[k - 1] = out[k + 1] + scale * 2.0 * k as f64 * c_in[k];
        }
        out[0] *= 0.5;
    }

    /// `d/dzeta` at the surface: `T_n'(1) = n^2`.
    #[cfg(test)]
    pub fn deriv_surface(c: &[f64]) -> f64 {
        c.iter()
            .enumerate()
            .map(|(n, v)| (n * n) as f64 * v)
            .sum()
    }
}

/// Reusable per-thread scratch for line transforms.
#[derive(Default)]
pub struct Work {
    pub line: Vec<f64>,
    pub interior: Vec<f64>,
    pub scratch: Vec<f64>,
}

impl Work {
    pub fn with_capacity(max_len: usize, scratch_len: usize) -> Self {
        Self {
            line: Vec::with_capacity(max_len),
            interior: Vec::with_capacity(max_len),
            scratch: vec![0.0; scratch_len],
        }
    }
}
