//! Discrete 2-D convolution of the weight lattice with a value surface.
//!
//! The production path embeds the displacement kernel in a circulant array
//! and computes the convolution with 2-D FFTs; the kernel transform is cached
//! once per pricing run. A literal quadruple-loop summation is kept alongside
//! as an oracle for equivalence testing.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{PricingError, Result};
use crate::kernel::KernelArray;
use crate::model::{GridSpec, TrapezoidWeights};
use crate::pricer::ValueSurface;

/// Circulant embedding strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbedMode {
    /// Embed at exactly `(3N-1, 3J-1)`: one period of the displacement
    /// lattice, so retained interior outputs see no wrap-around.
    Exact,
    /// Zero-pad to the next powers of two at or above `(5N-1, 5J-1)`, making
    /// the cyclic convolution a plain linear convolution everywhere.
    Padded,
}

/// Cached forward transform of the embedded kernel plus reusable FFT plans.
pub struct SpectralKernel {
    /// Kernel spectrum in transposed layout, scaled by `1/(len_x*len_y)`.
    spectrum_t: Vec<Complex64>,
    len_x: usize,
    len_y: usize,
    n: usize,
    j: usize,
    mode: EmbedMode,
    fft_y_fwd: Arc<dyn Fft<f64>>,
    fft_y_inv: Arc<dyn Fft<f64>>,
    fft_x_fwd: Arc<dyn Fft<f64>>,
    fft_x_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SpectralKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralKernel")
            .field("len_x", &self.len_x)
            .field("len_y", &self.len_y)
            .field("n", &self.n)
            .field("j", &self.j)
            .field("mode", &self.mode)
            .finish()
    }
}

impl SpectralKernel {
    /// Embedding dimensions `(L_x, L_y)`.
    pub fn embed_dims(&self) -> (usize, usize) {
        (self.len_x, self.len_y)
    }

    pub fn mode(&self) -> EmbedMode {
        self.mode
    }
}

fn wrap(i: isize, len: usize) -> usize {
    i.rem_euclid(len as isize) as usize
}

/// Runs length-`len` FFTs over every contiguous row of `data` in parallel.
fn fft_rows(data: &mut [Complex64], len: usize, fft: &Arc<dyn Fft<f64>>) {
    let scratch_len = fft.get_inplace_scratch_len();
    data.par_chunks_mut(len).for_each_init(
        || vec![Complex64::new(0.0, 0.0); scratch_len],
        |scratch, row| fft.process_with_scratch(row, scratch),
    );
}

/// Out-of-place transpose of an `rows x cols` row-major array.
fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    dst.par_chunks_mut(rows).enumerate().for_each(|(c, out)| {
        for (r, slot) in out.iter_mut().enumerate() {
            *slot = src[r * cols + c];
        }
    });
}

/// 2-D forward FFT leaving the result in transposed `[ly][lx]` layout.
fn forward_transposed(
    data: &mut Vec<Complex64>,
    scratch: &mut Vec<Complex64>,
    len_x: usize,
    len_y: usize,
    fft_y: &Arc<dyn Fft<f64>>,
    fft_x: &Arc<dyn Fft<f64>>,
) {
    fft_rows(data, len_y, fft_y);
    transpose(data, scratch, len_x, len_y);
    fft_rows(scratch, len_x, fft_x);
    std::mem::swap(data, scratch);
}

/// Inverse of [`forward_transposed`]: takes the transposed spectrum back to
/// the natural `[lx][ly]` layout. Unnormalized.
fn inverse_from_transposed(
    data: &mut Vec<Complex64>,
    scratch: &mut Vec<Complex64>,
    len_x: usize,
    len_y: usize,
    fft_y: &Arc<dyn Fft<f64>>,
    fft_x: &Arc<dyn Fft<f64>>,
) {
    fft_rows(data, len_x, fft_x);
    transpose(data, scratch, len_y, len_x);
    fft_rows(scratch, len_y, fft_y);
    std::mem::swap(data, scratch);
}

/// Embeds the kernel, transforms it once, and returns the cached plan.
pub fn plan(kernel: &KernelArray, grid: &GridSpec, mode: EmbedMode) -> Result<SpectralKernel> {
    if kernel.n() != grid.n || kernel.j() != grid.j {
        return Err(PricingError::InvalidInput(format!(
            "kernel was built for a {}x{} grid but the grid is {}x{}",
            kernel.n(),
            kernel.j(),
            grid.n,
            grid.j
        )));
    }
    let (len_x, len_y) = match mode {
        EmbedMode::Exact => (kernel.len_x(), kernel.len_y()),
        EmbedMode::Padded => (
            (5 * grid.n - 1).next_power_of_two(),
            (5 * grid.j - 1).next_power_of_two(),
        ),
    };

    let mut planner = FftPlanner::new();
    let fft_y_fwd = planner.plan_fft_forward(len_y);
    let fft_y_inv = planner.plan_fft_inverse(len_y);
    let fft_x_fwd = planner.plan_fft_forward(len_x);
    let fft_x_inv = planner.plan_fft_inverse(len_x);

    let mut data = vec![Complex64::new(0.0, 0.0); len_x * len_y];
    let scale = 1.0 / (len_x * len_y) as f64;
    for p in -kernel.half_x()..=kernel.half_x() {
        let row = wrap(p, len_x) * len_y;
        for q in -kernel.half_y()..=kernel.half_y() {
            data[row + wrap(q, len_y)] = Complex64::new(kernel.at(p, q) * scale, 0.0);
        }
    }
    let mut scratch = vec![Complex64::new(0.0, 0.0); len_x * len_y];
    forward_transposed(&mut data, &mut scratch, len_x, len_y, &fft_y_fwd, &fft_x_fwd);

    Ok(SpectralKernel {
        spectrum_t: data,
        len_x,
        len_y,
        n: grid.n,
        j: grid.j,
        mode,
        fft_y_fwd,
        fft_y_inv,
        fft_x_fwd,
        fft_x_inv,
    })
}

fn check_surface(n: usize, j: usize, surface: &ValueSurface) -> Result<f64> {
    if surface.n() != n || surface.j() != j {
        return Err(PricingError::InvalidInput(format!(
            "surface dims {}x{} do not match the kernel dims {}x{}",
            surface.n(),
            surface.j(),
            n,
            j
        )));
    }
    let mut max_abs = 0.0f64;
    for &v in surface.values() {
        if !v.is_finite() {
            return Err(PricingError::Numerical(
                "surface contains non-finite values".to_string(),
            ));
        }
        max_abs = max_abs.max(v.abs());
    }
    Ok(max_abs)
}

/// Continuation values on the interior nodes via the cached FFT plan.
///
/// Returns a row-major `(N-1) x (J-1)` array ordered by the interior index
/// sets. The input surface is not modified.
pub fn convolve_step(
    spec: &SpectralKernel,
    surface: &ValueSurface,
    phi: &TrapezoidWeights,
) -> Result<Vec<f64>> {
    let max_abs = check_surface(spec.n, spec.j, surface)?;
    let (len_x, len_y) = (spec.len_x, spec.len_y);
    let n = spec.n as isize;
    let j = spec.j as isize;

    let mut data = vec![Complex64::new(0.0, 0.0); len_x * len_y];
    for l in -n..=n {
        let row = wrap(l, len_x) * len_y;
        let wl = phi.x[(l + n) as usize];
        for d in -j..=j {
            let v = wl * phi.y[(d + j) as usize] * surface.at(l, d);
            data[row + wrap(d, len_y)] = Complex64::new(v, 0.0);
        }
    }

    let mut scratch = vec![Complex64::new(0.0, 0.0); len_x * len_y];
    forward_transposed(
        &mut data,
        &mut scratch,
        len_x,
        len_y,
        &spec.fft_y_fwd,
        &spec.fft_x_fwd,
    );
    data.par_iter_mut()
        .zip(spec.spectrum_t.par_iter())
        .for_each(|(d, s)| *d *= s);
    inverse_from_transposed(
        &mut data,
        &mut scratch,
        len_x,
        len_y,
        &spec.fft_y_inv,
        &spec.fft_x_inv,
    );

    let half_nx = n / 2 - 1;
    let half_jy = j / 2 - 1;
    let mut out = Vec::with_capacity(((2 * half_nx + 1) * (2 * half_jy + 1)) as usize);
    let mut max_imag = 0.0f64;
    for nn in -half_nx..=half_nx {
        let row = wrap(nn, len_x) * len_y;
        for jj in -half_jy..=half_jy {
            let c = data[row + wrap(jj, len_y)];
            max_imag = max_imag.max(c.im.abs());
            out.push(c.re);
        }
    }
    if max_imag > 1e-10 * max_abs.max(1.0) {
        return Err(PricingError::Numerical(format!(
            "transform left an imaginary residue of {max_imag:e}"
        )));
    }
    Ok(out)
}

/// Literal evaluation of the weighted double sum, kept independent of the
/// FFT path. Quadratic in the node count, so intended for small grids.
pub fn convolve_direct(
    kernel: &KernelArray,
    surface: &ValueSurface,
    phi: &TrapezoidWeights,
) -> Result<Vec<f64>> {
    check_surface(kernel.n(), kernel.j(), surface)?;
    let n = kernel.n() as isize;
    let j = kernel.j() as isize;
    let half_nx = n / 2 - 1;
    let half_jy = j / 2 - 1;
    let rows: Vec<Vec<f64>> = (-half_nx..=half_nx)
        .into_par_iter()
        .map(|nn| {
            let mut row = Vec::with_capacity((2 * half_jy + 1) as usize);
            for jj in -half_jy..=half_jy {
                let mut acc = 0.0;
                for l in -n..=n {
                    let wl = phi.x[(l + n) as usize];
                    let mut inner = 0.0;
                    for d in -j..=j {
                        inner += phi.y[(d + j) as usize]
                            * kernel.at(nn - l, jj - d)
                            * surface.at(l, d);
                    }
                    acc += wl * inner;
                }
                row.push(acc);
            }
            row
        })
        .collect();
    Ok(rows.into_iter().flatten().collect())
}
