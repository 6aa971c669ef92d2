//! Green's-function series evaluation and the rescaled weight lattice.
//!
//! The transition density of the two-asset Merton jump-diffusion over one
//! timestep is a Poisson-weighted mixture of bivariate Gaussians. Every term
//! is nonnegative, so truncating the series keeps the timestepping scheme
//! monotone. The weight array built here folds the mesh area `dx*dy` into
//! each entry once, and is reused across all timesteps of a pricing run.

use std::io::Write;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::error::{PricingError, Result};
use crate::model::{DerivedModel, GridSpec, Sym2, TrapezoidWeights};

/// Hard cap on the series truncation order. The selection test decays
/// superexponentially, so the cap only trips on pathological inputs.
pub const MAX_TRUNCATION: usize = 200;

/// Default series tolerance: `1e-8 * dtau^2`, floored at `1e-14`.
///
/// A tolerance proportional to `dtau^2` keeps the series truncation error at
/// the same order as the quadrature error of the scheme.
pub fn default_epsilon(dtau: f64) -> f64 {
    (1e-8 * dtau * dtau).max(1e-14)
}

/// One Gaussian term of the transition-density series: the diffusion step
/// conditioned on `k` jumps having occurred.
#[derive(Debug, Clone, Copy)]
pub struct SeriesTerm {
    /// Jump count.
    pub k: usize,
    /// Gaussian mean shift, `beta + k * mu_j` (the term peaks at `z = -mean_shift`).
    pub mean_shift: [f64; 2],
    /// Gaussian covariance, `C + k * C_M`.
    pub cov: Sym2,
    /// Poisson factor `(lambda*dtau)^k / k!`.
    pub poisson_weight: f64,
    /// Common exponent offset, `-(r + lambda) * dtau`.
    pub theta: f64,
    inv: Sym2,
    norm: f64,
}

impl SeriesTerm {
    /// Builds the `k`-jump term for one timestep of length `dtau`.
    pub fn new(model: &DerivedModel, dtau: f64, k: usize) -> SeriesTerm {
        let params = &model.params;
        let cov = model.step_cov_with_jumps(dtau, k);
        let drift = model.step_drift(dtau);
        let mean_shift = [
            drift[0] + k as f64 * params.mu_jx,
            drift[1] + k as f64 * params.mu_jy,
        ];
        let mut poisson_weight = 1.0;
        for i in 1..=k {
            poisson_weight *= params.lambda * dtau / i as f64;
        }
        let theta = -(params.r + params.lambda) * dtau;
        let inv = cov.inverse();
        let norm =
            poisson_weight * theta.exp() / (2.0 * std::f64::consts::PI * cov.det().sqrt());
        SeriesTerm {
            k,
            mean_shift,
            cov,
            poisson_weight,
            theta,
            inv,
            norm,
        }
    }

    /// Density contribution of this term at displacement `z`. Always >= 0;
    /// underflow to exactly zero is acceptable.
    pub fn eval(&self, z: (f64, f64)) -> f64 {
        let wx = self.mean_shift[0] + z.0;
        let wy = self.mean_shift[1] + z.1;
        self.norm * (-0.5 * self.inv.quad(wx, wy)).exp()
    }
}

/// Density contribution of the `k`-jump series term at displacement `z`.
pub fn eval_series_term(model: &DerivedModel, dtau: f64, k: usize, z: (f64, f64)) -> f64 {
    SeriesTerm::new(model, dtau, k).eval(z)
}

fn truncation_test(model: &DerivedModel, dtau: f64, k_next: usize) -> f64 {
    let params = &model.params;
    let det_c = dtau * dtau * model.cov_diff.det();
    let prefactor =
        (-(params.r + params.lambda) * dtau).exp() / (2.0 * std::f64::consts::PI * det_c.sqrt());
    let base = std::f64::consts::E * params.lambda * dtau / k_next as f64;
    prefactor * base.powi(k_next as i32)
}

/// Selects the smallest truncation order `K` whose residual test falls below
/// `epsilon`.
///
/// The test bounds the series tail through the Chernoff-Hoeffding Poisson
/// tail estimate; it is evaluated for `k+1` before each increment, so a zero
/// jump intensity yields `K = 0` immediately.
pub fn select_truncation(model: &DerivedModel, dtau: f64, epsilon: f64) -> Result<usize> {
    if !(epsilon > 0.0) {
        return Err(PricingError::InvalidInput(
            "epsilon must be positive".to_string(),
        ));
    }
    if !(dtau > 0.0) {
        return Err(PricingError::InvalidInput(
            "dtau must be positive".to_string(),
        ));
    }
    let mut k = 0usize;
    let mut test = truncation_test(model, dtau, k + 1);
    while !(test < epsilon) {
        if test.is_nan() {
            return Err(PricingError::Numerical(
                "series truncation test is not a number; parameters are degenerate".to_string(),
            ));
        }
        k += 1;
        if k > MAX_TRUNCATION {
            return Err(PricingError::Numerical(format!(
                "series truncation order exceeded the cap of {MAX_TRUNCATION}"
            )));
        }
        test = truncation_test(model, dtau, k + 1);
    }
    Ok(k)
}

/// Rescaled nonnegative convolution weights on the displacement lattice.
///
/// Entry `(p, q)` holds `dx*dy * g(p*dx, q*dy, dtau, K)`; no later operation
/// multiplies by the mesh area again.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelArray {
    weights: Vec<f64>,
    n: usize,
    j: usize,
    /// Series truncation order used for every entry.
    pub truncation: usize,
    /// Tolerance that selected the truncation order.
    pub epsilon: f64,
    /// Timestep the weights were built for.
    pub dtau: f64,
}

impl KernelArray {
    /// Interior interval count along x of the generating grid.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Interior interval count along y of the generating grid.
    pub fn j(&self) -> usize {
        self.j
    }

    /// Lattice size along x, `3N-1`.
    pub fn len_x(&self) -> usize {
        3 * self.n - 1
    }

    /// Lattice size along y, `3J-1`.
    pub fn len_y(&self) -> usize {
        3 * self.j - 1
    }

    /// Largest displacement index along x, `3N/2 - 1`.
    pub fn half_x(&self) -> isize {
        (3 * self.n / 2) as isize - 1
    }

    /// Largest displacement index along y, `3J/2 - 1`.
    pub fn half_y(&self) -> isize {
        (3 * self.j / 2) as isize - 1
    }

    /// Weight at displacement `(p, q)`, `p` in `[-half_x, half_x]`.
    pub fn at(&self, p: isize, q: isize) -> f64 {
        let row = (p + self.half_x()) as usize;
        let col = (q + self.half_y()) as usize;
        self.weights[row * self.len_y() + col]
    }

    /// Raw row-major weights (rows indexed by the x displacement).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Largest entry of the lattice.
    pub fn max_weight(&self) -> f64 {
        self.weights.iter().cloned().fold(0.0, f64::max)
    }

    /// Wraps an externally supplied weight lattice (for tooling and oracle
    /// tests). `weights` is row-major of size `(3n-1) x (3j-1)`.
    pub fn from_weights(weights: Vec<f64>, n: usize, j: usize, dtau: f64) -> Result<KernelArray> {
        if n < 2 || j < 2 || weights.len() != (3 * n - 1) * (3 * j - 1) {
            return Err(PricingError::InvalidInput(format!(
                "weight array of length {} does not match a {}x{} grid",
                weights.len(),
                n,
                j
            )));
        }
        Ok(KernelArray {
            weights,
            n,
            j,
            truncation: 0,
            epsilon: 0.0,
            dtau,
        })
    }

    /// Dumps the lattice as CSV: a header line `n,j,truncation,epsilon,dtau`
    /// followed by one row-major line per x displacement.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "{},{},{},{:e},{:e}",
            self.n, self.j, self.truncation, self.epsilon, self.dtau
        )?;
        for row in self.weights.chunks(self.len_y()) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Builds the rescaled weight array for one timestep of `grid`.
///
/// The truncation order comes from [`select_truncation`] with `epsilon`
/// (default [`default_epsilon`]). The array is built once per
/// `(model, grid, dtau)` and reused across all timesteps.
pub fn build_kernel(
    model: &DerivedModel,
    grid: &GridSpec,
    epsilon: Option<f64>,
) -> Result<KernelArray> {
    let expected = grid.dtau * grid.m as f64;
    if (expected - model.params.maturity).abs() > 1e-9 * model.params.maturity.max(1.0) {
        return Err(PricingError::InvalidInput(format!(
            "grid covers {expected} years but the model maturity is {}",
            model.params.maturity
        )));
    }
    let epsilon = epsilon.unwrap_or_else(|| default_epsilon(grid.dtau));
    let truncation = select_truncation(model, grid.dtau, epsilon)?;
    let terms: Vec<SeriesTerm> = (0..=truncation)
        .map(|k| SeriesTerm::new(model, grid.dtau, k))
        .collect();

    let len_x = grid.ddagger_len_x();
    let len_y = grid.ddagger_len_y();
    let half_x = (3 * grid.n / 2) as isize - 1;
    let half_y = (3 * grid.j / 2) as isize - 1;
    let area = grid.dx * grid.dy;

    let mut weights = vec![0.0; len_x * len_y];
    weights
        .par_chunks_mut(len_y)
        .enumerate()
        .for_each(|(row, out)| {
            let zx = (row as isize - half_x) as f64 * grid.dx;
            for term in &terms {
                let wx = term.mean_shift[0] + zx;
                for (col, slot) in out.iter_mut().enumerate() {
                    let zy = (col as isize - half_y) as f64 * grid.dy;
                    let wy = term.mean_shift[1] + zy;
                    *slot += area * term.norm * (-0.5 * term.inv.quad(wx, wy)).exp();
                }
            }
        });

    Ok(KernelArray {
        weights,
        n: grid.n,
        j: grid.j,
        truncation,
        epsilon,
        dtau: grid.dtau,
    })
}

/// Quadrature mass of the kernel seen from the centre node: the double sum of
/// trapezoid weights times kernel entries over the dagger box.
///
/// Approximates the integral of the transition density, `exp(-r*dtau)`, up to
/// quadrature error; the displacement kernel makes the value identical for
/// every interior centre node.
pub fn kernel_mass(kernel: &KernelArray, weights: &TrapezoidWeights) -> f64 {
    let n = kernel.n as isize;
    let j = kernel.j as isize;
    let mut mass = 0.0;
    for l in -n..=n {
        let wx = weights.x[(l + n) as usize];
        let mut row_sum = 0.0;
        for d in -j..=j {
            row_sum += weights.y[(d + j) as usize] * kernel.at(-l, -d);
        }
        mass += wx * row_sum;
    }
    mass
}

/// Characteristic exponent of the log-price process: the transition density
/// over `dtau` has Fourier transform `exp(psi(eta) * dtau)`.
///
/// Used only for cross-validating the series kernel against the closed form.
pub fn fourier_symbol(model: &DerivedModel, eta: (f64, f64)) -> Complex64 {
    let params = &model.params;
    let diffusion = -0.5 * model.cov_diff.quad(eta.0, eta.1);
    let drift = model.drift[0] * eta.0 + model.drift[1] * eta.1;
    let jump_cf = (Complex64::new(
        -0.5 * model.cov_jump.quad(eta.0, eta.1),
        params.mu_jx * eta.0 + params.mu_jy * eta.1,
    ))
    .exp();
    Complex64::new(diffusion - (params.r + params.lambda), drift) + params.lambda * jump_cf
}

/// Discrete-time Fourier transform of the rescaled weights at frequency `eta`.
///
/// Approximates the continuous transform of the transition density, so it
/// should match `exp(psi(eta) * dtau)` at low frequencies.
pub fn kernel_transform(kernel: &KernelArray, grid: &GridSpec, eta: (f64, f64)) -> Complex64 {
    let mut sum = Complex64::new(0.0, 0.0);
    for p in -kernel.half_x()..=kernel.half_x() {
        let phase_x = -eta.0 * p as f64 * grid.dx;
        let mut row = Complex64::new(0.0, 0.0);
        for q in -kernel.half_y()..=kernel.half_y() {
            let phase = Complex64::new(0.0, phase_x - eta.1 * q as f64 * grid.dy).exp();
            row += kernel.at(p, q) * phase;
        }
        sum += row;
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_grid, validate, ModelParams};
    use approx::assert_relative_eq;

    fn case_i() -> DerivedModel {
        validate(&ModelParams {
            sigma_x: 0.12,
            sigma_y: 0.15,
            rho: 0.30,
            r: 0.05,
            lambda: 0.60,
            mu_jx: -0.10,
            mu_jy: 0.10,
            sigma_jx: 0.17,
            sigma_jy: 0.13,
            rho_j: -0.20,
            maturity: 1.0,
        })
        .unwrap()
    }

    /// Independent rendering of the truncation-test loop used as an oracle.
    fn truncation_oracle(model: &DerivedModel, dtau: f64, epsilon: f64) -> usize {
        let p = &model.params;
        let det_c = dtau * dtau
            * p.sigma_x.powi(2)
            * p.sigma_y.powi(2)
            * (1.0 - p.rho * p.rho);
        let prefactor = (-(p.r + p.lambda) * dtau).exp()
            / (2.0 * std::f64::consts::PI * det_c.sqrt());
        let mut k = 0u32;
        loop {
            let kp1 = k + 1;
            let test = prefactor
                * (std::f64::consts::E * p.lambda * dtau).powi(kp1 as i32)
                / (kp1 as f64).powi(kp1 as i32);
            if test < epsilon {
                return k as usize;
            }
            k += 1;
            assert!(k < 1000, "oracle runaway");
        }
    }

    #[test]
    fn truncation_case_i_level0_is_five() {
        let model = case_i();
        assert_eq!(truncation_oracle(&model, 0.02, 1e-10), 5);
        assert_eq!(select_truncation(&model, 0.02, 1e-10).unwrap(), 5);
    }

    #[test]
    fn truncation_zero_intensity_is_zero() {
        let mut p = case_i().params;
        p.lambda = 0.0;
        let model = validate(&p).unwrap();
        assert_eq!(select_truncation(&model, 0.02, 1e-10).unwrap(), 0);
    }

    #[test]
    fn truncation_grows_slowly_under_refinement() {
        let model = case_i();
        let mut prev = None;
        for level in 0..5 {
            let dtau = 0.02 / (1 << level) as f64;
            let k = select_truncation(&model, dtau, default_epsilon(dtau)).unwrap();
            if let Some(p) = prev {
                // Logarithmic growth: halving dtau adds at most a couple of terms.
                assert!(k <= p + 2, "K jumped from {p} to {k}");
            }
            prev = Some(k);
        }
    }

    #[test]
    fn truncation_rejects_bad_epsilon_and_caps() {
        let model = case_i();
        assert!(select_truncation(&model, 0.02, 0.0).is_err());
        assert!(select_truncation(&model, 0.02, -1.0).is_err());
        // Finite path to the cap: a moderate intensity with an absurd tolerance
        // keeps the test value finite but above epsilon past the cap.
        let mut p = model.params;
        p.lambda = 10.0;
        let slow = validate(&p).unwrap();
        assert!(matches!(
            select_truncation(&slow, 1.0, 1e-300),
            Err(PricingError::Numerical(_))
        ));
    }

    #[test]
    fn series_peak_value_case_i() {
        let model = case_i();
        let dtau = 0.02;
        let beta = model.step_drift(dtau);
        let peak = eval_series_term(&model, dtau, 0, (-beta[0], -beta[1]));
        // exp(-(r+lambda)*dtau) / (2*pi*sqrt(det(dtau^2 * cov_diff))), exponent 0.
        let expected = (-0.013f64).exp()
            / (2.0 * std::f64::consts::PI * (dtau * dtau * model.cov_diff.det()).sqrt());
        assert_relative_eq!(peak, expected, max_relative = 1e-14);
        assert!((peak - 457.46).abs() < 0.01);
    }

    #[test]
    fn series_term_zero_when_intensity_zero() {
        let mut p = case_i().params;
        p.lambda = 0.0;
        let model = validate(&p).unwrap();
        assert_eq!(eval_series_term(&model, 0.02, 1, (0.1, -0.2)), 0.0);
    }

    #[test]
    fn series_term_even_about_its_mean() {
        let model = case_i();
        let dtau = 0.05;
        for k in 0..4usize {
            let term = SeriesTerm::new(&model, dtau, k);
            let c = (-term.mean_shift[0], -term.mean_shift[1]);
            let z = (0.31, -0.17);
            let reflected = (2.0 * c.0 - z.0, 2.0 * c.1 - z.1);
            assert_relative_eq!(term.eval(z), term.eval(reflected), max_relative = 1e-12);
        }
    }

    #[test]
    fn truncation_monotone_in_terms() {
        // Adding a series term never decreases the density approximation.
        let model = case_i();
        let dtau = 0.02;
        for &z in &[(0.0, 0.0), (0.2, -0.3), (-1.0, 0.5)] {
            let mut prev = 0.0;
            for k_max in 0..8usize {
                let total: f64 = (0..=k_max)
                    .map(|k| eval_series_term(&model, dtau, k, z))
                    .sum();
                assert!(total >= prev);
                prev = total;
            }
        }
    }

    #[test]
    fn kernel_entries_nonnegative_and_finite() {
        let model = case_i();
        let grid = build_grid(&model.params, (90.0, 90.0), (1.5, 1.5), 32, 32, 50).unwrap();
        let kernel = build_kernel(&model, &grid, None).unwrap();
        assert_eq!(kernel.weights().len(), 95 * 95);
        for &w in kernel.weights() {
            assert!(w >= 0.0 && w.is_finite());
        }
    }

    #[test]
    fn kernel_build_is_deterministic() {
        let model = case_i();
        let grid = build_grid(&model.params, (90.0, 90.0), (1.5, 1.5), 16, 16, 50).unwrap();
        let a = build_kernel(&model, &grid, None).unwrap();
        let b = build_kernel(&model, &grid, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn kernel_rejects_mismatched_grid() {
        let model = case_i();
        let mut grid = build_grid(&model.params, (90.0, 90.0), (1.5, 1.5), 16, 16, 50).unwrap();
        grid.dtau *= 2.0;
        assert!(build_kernel(&model, &grid, None).is_err());
    }

    #[test]
    fn mass_pure_gaussian_is_one() {
        // r = 0 and lambda = 0: the kernel is a plain Gaussian with mass 1.
        let p = ModelParams {
            sigma_x: 0.3,
            sigma_y: 0.3,
            rho: 0.1,
            r: 0.0,
            lambda: 0.0,
            mu_jx: 0.0,
            mu_jy: 0.0,
            sigma_jx: 0.1,
            sigma_jy: 0.1,
            rho_j: 0.0,
            maturity: 1.0,
        };
        let model = validate(&p).unwrap();
        let grid = build_grid(&p, (100.0, 100.0), (1.0, 1.0), 64, 64, 4).unwrap();
        let kernel = build_kernel(&model, &grid, None).unwrap();
        let phi = crate::model::trapezoid_weights(&grid);
        assert_relative_eq!(kernel_mass(&kernel, &phi), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn symbol_at_origin_is_minus_rate() {
        let model = case_i();
        let psi = fourier_symbol(&model, (0.0, 0.0));
        assert_relative_eq!(psi.re, -model.params.r, max_relative = 1e-15);
        assert_relative_eq!(psi.im, 0.0, epsilon = 1e-18);
    }

    #[test]
    fn symbol_without_jumps_is_quadratic() {
        let mut p = case_i().params;
        p.lambda = 0.0;
        let model = validate(&p).unwrap();
        let eta = (1.3, -0.7);
        let psi = fourier_symbol(&model, eta);
        let expected_re = -0.5 * model.cov_diff.quad(eta.0, eta.1) - p.r;
        let expected_im = model.drift[0] * eta.0 + model.drift[1] * eta.1;
        assert_relative_eq!(psi.re, expected_re, max_relative = 1e-14);
        assert_relative_eq!(psi.im, expected_im, max_relative = 1e-14);
    }

    #[test]
    fn csv_dump_round_trips_header() {
        let model = case_i();
        let grid = build_grid(&model.params, (90.0, 90.0), (1.5, 1.5), 8, 8, 50).unwrap();
        let kernel = build_kernel(&model, &grid, None).unwrap();
        let mut buf = Vec::new();
        kernel.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("8,8,"));
        assert_eq!(lines.count(), kernel.len_x());
    }
}
