//! Backward-in-time pricing loop: payoff initialization, per-step
//! convolution, early-exercise enforcement, and boundary refresh.

use std::io::Write;
use std::time::Instant;

use crate::convolve::{convolve_step, plan, EmbedMode, SpectralKernel};
use crate::error::{PricingError, Result};
use crate::kernel::build_kernel;
use crate::model::{
    trapezoid_weights, validate, GridSpec, ModelParams, Payoff, TrapezoidWeights,
};

/// Exercise style of the contract being priced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptionStyle {
    /// Early exercise enforced at every timestep.
    American,
    /// No early exercise: the timestep keeps the raw continuation value.
    European,
}

/// Option values on every node of the dagger grid at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSurface {
    values: Vec<f64>,
    n: usize,
    j: usize,
    /// Time level `m`; the surface approximates values at `tau = m * dtau`.
    pub time_index: usize,
    /// Timestep of the run this surface belongs to.
    pub dtau: f64,
}

impl ValueSurface {
    /// Wraps raw row-major values of size `(2n+1) x (2j+1)`.
    pub fn from_values(values: Vec<f64>, n: usize, j: usize, dtau: f64) -> Result<ValueSurface> {
        if values.len() != (2 * n + 1) * (2 * j + 1) {
            return Err(PricingError::InvalidInput(format!(
                "surface of length {} does not match a {}x{} grid",
                values.len(),
                n,
                j
            )));
        }
        Ok(ValueSurface {
            values,
            n,
            j,
            time_index: 0,
            dtau,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn j(&self) -> usize {
        self.j
    }

    /// Raw row-major values (rows indexed by `l + N`, columns by `d + J`).
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn idx(&self, l: isize, d: isize) -> usize {
        let row = (l + self.n as isize) as usize;
        let col = (d + self.j as isize) as usize;
        row * (2 * self.j + 1) + col
    }

    /// Value at dagger node `(l, d)`, signed indices in `[-N, N] x [-J, J]`.
    pub fn at(&self, l: isize, d: isize) -> f64 {
        self.values[self.idx(l, d)]
    }

    fn set(&mut self, l: isize, d: isize, v: f64) {
        let i = self.idx(l, d);
        self.values[i] = v;
    }

    /// Largest absolute value over all nodes.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }
}

/// Samples the payoff on every dagger node: the time-zero surface.
pub fn init_surface(payoff: &Payoff, grid: &GridSpec) -> ValueSurface {
    let n = grid.n as isize;
    let j = grid.j as isize;
    let mut values = Vec::with_capacity(grid.dagger_len_x() * grid.dagger_len_y());
    for l in -n..=n {
        let x = grid.x_node(l);
        for d in -j..=j {
            values.push(payoff.eval(x, grid.y_node(d)));
        }
    }
    ValueSurface {
        values,
        n: grid.n,
        j: grid.j,
        time_index: 0,
        dtau: grid.dtau,
    }
}

/// Overwrites every dagger node outside the interior box with the discounted
/// payoff `payoff * exp(-rate * tau)`; interior nodes are untouched.
pub fn apply_boundary(
    surface: &mut ValueSurface,
    payoff_surface: &ValueSurface,
    grid: &GridSpec,
    rate: f64,
    tau: f64,
) {
    let disc = (-rate * tau).exp();
    let n = grid.n as isize;
    let j = grid.j as isize;
    for l in -n..=n {
        for d in -j..=j {
            if !grid.is_interior(l, d) {
                surface.set(l, d, payoff_surface.at(l, d) * disc);
            }
        }
    }
}

fn step_impl(
    state: &mut ValueSurface,
    spec: &SpectralKernel,
    phi: &TrapezoidWeights,
    payoff_surface: &ValueSurface,
    grid: &GridSpec,
    rate: f64,
    style: OptionStyle,
) -> Result<()> {
    let continuation = convolve_step(spec, state, phi)?;
    for &u in &continuation {
        if !u.is_finite() {
            return Err(PricingError::Numerical(
                "continuation values are not finite".to_string(),
            ));
        }
    }
    let half_x = grid.interior_half_x();
    let half_y = grid.interior_half_y();
    let mut it = continuation.into_iter();
    for l in -half_x..=half_x {
        for d in -half_y..=half_y {
            let u = it.next().expect("interior size");
            let v = match style {
                OptionStyle::American => u.max(payoff_surface.at(l, d)),
                OptionStyle::European => u,
            };
            state.set(l, d, v);
        }
    }
    state.time_index += 1;
    let tau = state.time_index as f64 * grid.dtau;
    apply_boundary(state, payoff_surface, grid, rate, tau);
    Ok(())
}

/// One American timestep: convolve, take the maximum against the payoff on
/// the interior, then refresh the outer band for the new time level.
pub fn step_american(
    state: &mut ValueSurface,
    spec: &SpectralKernel,
    phi: &TrapezoidWeights,
    payoff_surface: &ValueSurface,
    grid: &GridSpec,
    rate: f64,
) -> Result<()> {
    step_impl(
        state,
        spec,
        phi,
        payoff_surface,
        grid,
        rate,
        OptionStyle::American,
    )
}

/// One European timestep: identical to the American step without the maximum.
pub fn step_european(
    state: &mut ValueSurface,
    spec: &SpectralKernel,
    phi: &TrapezoidWeights,
    payoff_surface: &ValueSurface,
    grid: &GridSpec,
    rate: f64,
) -> Result<()> {
    step_impl(
        state,
        spec,
        phi,
        payoff_surface,
        grid,
        rate,
        OptionStyle::European,
    )
}

/// Knobs for a pricing run.
#[derive(Debug, Clone)]
pub struct PriceOptions {
    pub style: OptionStyle,
    /// Series tolerance override; `None` uses the `dtau`-scaled default.
    pub epsilon: Option<f64>,
    pub embed: EmbedMode,
    /// Time levels `m` at which to additionally record the surface.
    pub snapshot_steps: Vec<usize>,
}

impl Default for PriceOptions {
    fn default() -> Self {
        PriceOptions {
            style: OptionStyle::American,
            epsilon: None,
            embed: EmbedMode::Padded,
            snapshot_steps: Vec::new(),
        }
    }
}

/// Wall-clock breakdown of a pricing run.
#[derive(Debug, Clone, Copy, Default)]
pub struct Timings {
    /// Seconds spent building and transforming the weight array.
    pub kernel_seconds: f64,
    /// Seconds spent in the timestep loop.
    pub step_seconds: f64,
}

/// Output of a pricing run.
#[derive(Debug, Clone)]
pub struct PriceResult {
    /// Option value at the anchored spot node.
    pub price: f64,
    /// Full surface at `tau = maturity`.
    pub surface: ValueSurface,
    /// Early-exercise mask over interior nodes (American runs only).
    pub exercise: Option<Vec<bool>>,
    /// Series truncation order used by the kernel.
    pub truncation: usize,
    pub style: OptionStyle,
    pub timings: Timings,
    /// Surfaces captured at the requested snapshot time levels.
    pub snapshots: Vec<(usize, ValueSurface)>,
}

/// Relative tolerance (against the strike) deciding that a node is exercised.
pub const EXERCISE_TOL: f64 = 1e-8;

/// Prices the option: builds the kernel once, then runs `M` timesteps of
/// convolution, optional early-exercise enforcement, and boundary refresh.
pub fn price(
    params: &ModelParams,
    payoff: &Payoff,
    grid: &GridSpec,
    options: &PriceOptions,
) -> Result<PriceResult> {
    let model = validate(params)?;
    let clock = Instant::now();
    let kernel = build_kernel(&model, grid, options.epsilon)?;
    let truncation = kernel.truncation;
    let spec = plan(&kernel, grid, options.embed)?;
    let kernel_seconds = clock.elapsed().as_secs_f64();

    let phi = trapezoid_weights(grid);
    let payoff_surface = init_surface(payoff, grid);
    let mut state = payoff_surface.clone();
    let mut snapshots = Vec::new();

    let clock = Instant::now();
    for m in 0..grid.m {
        step_impl(
            &mut state,
            &spec,
            &phi,
            &payoff_surface,
            grid,
            params.r,
            options.style,
        )
        .map_err(|e| PricingError::Numerical(format!("timestep {} failed: {e}", m + 1)))?;
        if options.snapshot_steps.contains(&state.time_index) {
            snapshots.push((state.time_index, state.clone()));
        }
    }
    let step_seconds = clock.elapsed().as_secs_f64();

    let exercise = match options.style {
        OptionStyle::American => Some(exercise_region(&state, payoff, grid, EXERCISE_TOL)),
        OptionStyle::European => None,
    };
    Ok(PriceResult {
        price: state.at(0, 0),
        surface: state,
        exercise,
        truncation,
        style: options.style,
        timings: Timings {
            kernel_seconds,
            step_seconds,
        },
        snapshots,
    })
}

/// Boolean mask over interior nodes marking where the surface sits on the
/// payoff (the exercised region), row-major in the interior index order.
pub fn exercise_region(
    surface: &ValueSurface,
    payoff: &Payoff,
    grid: &GridSpec,
    tol: f64,
) -> Vec<bool> {
    let half_x = grid.interior_half_x();
    let half_y = grid.interior_half_y();
    let threshold = tol * payoff.strike.max(1.0);
    let mut mask = Vec::with_capacity(grid.interior_len_x() * grid.interior_len_y());
    for l in -half_x..=half_x {
        let x = grid.x_node(l);
        for d in -half_y..=half_y {
            mask.push(surface.at(l, d) - payoff.eval(x, grid.y_node(d)) <= threshold);
        }
    }
    mask
}

/// Surface value at spot prices `(x0, y0)`.
///
/// Exact node value when the query hits a node (the anchored case), bilinear
/// interpolation from the four surrounding nodes otherwise. Queries outside
/// the open interior box are rejected.
pub fn value_at(surface: &ValueSurface, grid: &GridSpec, x0: f64, y0: f64) -> Result<f64> {
    if !(x0 > 0.0 && y0 > 0.0) {
        return Err(PricingError::InvalidInput(
            "spot prices must be positive".to_string(),
        ));
    }
    let x = x0.ln();
    let y = y0.ln();
    if !(x > grid.x_min() && x < grid.x_max() && y > grid.y_min() && y < grid.y_max()) {
        return Err(PricingError::InvalidInput(format!(
            "query ({x0}, {y0}) lies outside the interior box"
        )));
    }
    let a = (x - grid.x_hat0) / grid.dx;
    let b = (y - grid.y_hat0) / grid.dy;
    let l0 = a.floor();
    let d0 = b.floor();
    let fx = a - l0;
    let fy = b - d0;
    let l0 = l0 as isize;
    let d0 = d0 as isize;
    if fx == 0.0 && fy == 0.0 {
        return Ok(surface.at(l0, d0));
    }
    let v00 = surface.at(l0, d0);
    let v10 = surface.at(l0 + 1, d0);
    let v01 = surface.at(l0, d0 + 1);
    let v11 = surface.at(l0 + 1, d0 + 1);
    Ok(v00 * (1.0 - fx) * (1.0 - fy)
        + v10 * fx * (1.0 - fy)
        + v01 * (1.0 - fx) * fy
        + v11 * fx * fy)
}

/// Writes the surface as CSV rows `x,y,value` over all dagger nodes.
pub fn write_surface_csv<W: Write>(
    surface: &ValueSurface,
    grid: &GridSpec,
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "x,y,value")?;
    let n = grid.n as isize;
    let j = grid.j as isize;
    for l in -n..=n {
        let x = grid.x_node(l);
        for d in -j..=j {
            writeln!(out, "{x:.12e},{:.12e},{:.12e}", grid.y_node(d), surface.at(l, d))?;
        }
    }
    Ok(())
}

/// Writes an exercise mask as CSV rows `x,y,exercised` over interior nodes.
pub fn write_mask_csv<W: Write>(
    mask: &[bool],
    grid: &GridSpec,
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "x,y,exercised")?;
    let half_x = grid.interior_half_x();
    let half_y = grid.interior_half_y();
    let mut it = mask.iter();
    for l in -half_x..=half_x {
        let x = grid.x_node(l);
        for d in -half_y..=half_y {
            let flag = *it.next().expect("mask size matches interior");
            writeln!(out, "{x:.12e},{:.12e},{}", grid.y_node(d), u8::from(flag))?;
        }
    }
    Ok(())
}

/// Writes an exercise mask as a binary portable graymap (P5).
///
/// Rows run top-down in decreasing y, columns left-right in increasing x;
/// exercised nodes are white.
pub fn write_mask_pgm<W: Write>(
    mask: &[bool],
    grid: &GridSpec,
    mut out: W,
) -> std::io::Result<()> {
    let width = grid.interior_len_x();
    let height = grid.interior_len_y();
    write!(out, "P5\n{width} {height}\n255\n")?;
    let mut row = vec![0u8; width];
    for d_rev in 0..height {
        let d = height - 1 - d_rev;
        for (l, slot) in row.iter_mut().enumerate() {
            *slot = if mask[l * height + d] { 255 } else { 0 };
        }
        out.write_all(&row)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_grid, PayoffKind};
    use approx::assert_relative_eq;

    fn case_i_params() -> ModelParams {
        ModelParams {
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
        }
    }

    fn small_setup(
        n: usize,
        m: usize,
    ) -> (ModelParams, Payoff, GridSpec, TrapezoidWeights, SpectralKernel) {
        let params = case_i_params();
        let payoff = Payoff::new(PayoffKind::PutOnMin, 100.0).unwrap();
        let grid = build_grid(&params, (90.0, 90.0), (1.5, 1.5), n, n, m).unwrap();
        let model = validate(&params).unwrap();
        let kernel = build_kernel(&model, &grid, None).unwrap();
        let spec = plan(&kernel, &grid, EmbedMode::Exact).unwrap();
        let phi = trapezoid_weights(&grid);
        (params, payoff, grid, phi, spec)
    }

    #[test]
    fn init_surface_matches_payoff() {
        let params = case_i_params();
        let payoff = Payoff::new(PayoffKind::PutOnMin, 100.0).unwrap();
        let grid = build_grid(&params, (90.0, 90.0), (1.5, 1.5), 16, 16, 10).unwrap();
        let s = init_surface(&payoff, &grid);
        assert_relative_eq!(s.at(0, 0), 10.0, epsilon = 1e-10);
        assert!(s.max_abs() <= 100.0);
        // Symmetric payoff on a square symmetric grid.
        for l in -16..=16isize {
            for d in -16..=16isize {
                assert_eq!(s.at(l, d), s.at(d, l));
            }
        }
    }

    #[test]
    fn boundary_examples() {
        let params = case_i_params();
        let payoff = Payoff::new(PayoffKind::PutOnMin, 100.0).unwrap();
        let grid = build_grid(&params, (90.0, 90.0), (1.5, 1.5), 8, 8, 10).unwrap();
        let pay0 = init_surface(&payoff, &grid);

        let mut s = ValueSurface::from_values(vec![0.0; 17 * 17], 8, 8, grid.dtau).unwrap();
        apply_boundary(&mut s, &pay0, &grid, 0.05, 0.0);
        assert_eq!(s.at(-8, -8), pay0.at(-8, -8));
        assert_eq!(s.at(0, 0), 0.0, "interior untouched");

        apply_boundary(&mut s, &pay0, &grid, 0.05, 1.0);
        let deep = pay0.at(-8, -8);
        assert_relative_eq!(s.at(-8, -8), deep * (-0.05f64).exp(), max_relative = 1e-15);

        let mut t = ValueSurface::from_values(vec![0.0; 17 * 17], 8, 8, grid.dtau).unwrap();
        apply_boundary(&mut t, &pay0, &grid, 0.0, 0.7);
        assert_eq!(t.at(-8, -8), pay0.at(-8, -8), "r = 0 boundary is time-invariant");
    }

    #[test]
    fn zero_obstacle_makes_american_step_european() {
        let (params, payoff, grid, phi, spec) = small_setup(16, 50);
        let pay0 = init_surface(&payoff, &grid);
        let zeros = ValueSurface::from_values(vec![0.0; 33 * 33], 16, 16, grid.dtau).unwrap();

        let mut a = pay0.clone();
        let mut e = pay0.clone();
        // American step against a zero obstacle (continuation is nonnegative).
        step_american(&mut a, &spec, &phi, &zeros, &grid, params.r).unwrap();
        step_european(&mut e, &spec, &phi, &zeros, &grid, params.r).unwrap();
        let half = grid.interior_half_x();
        for l in -half..=half {
            for d in -half..=half {
                assert_eq!(a.at(l, d), e.at(l, d));
            }
        }
    }

    #[test]
    fn exercise_binds_deep_in_the_money() {
        // Two coarse timesteps keep the kernel well resolved at N = 64.
        let (params, payoff, grid, phi, spec) = small_setup(64, 2);
        let pay0 = init_surface(&payoff, &grid);
        let mut s = pay0.clone();
        step_american(&mut s, &spec, &phi, &pay0, &grid, params.r).unwrap();
        let corner = grid.interior_half_x();
        assert_eq!(
            s.at(-corner, -corner),
            pay0.at(-corner, -corner),
            "deep ITM continuation must not exceed the payoff"
        );
        // American surface dominates the payoff everywhere in the interior.
        for l in -corner..=corner {
            for d in -corner..=corner {
                assert!(s.at(l, d) >= pay0.at(l, d));
            }
        }
    }

    #[test]
    fn price_runs_and_reports_node_value() {
        let params = case_i_params();
        let payoff = Payoff::new(PayoffKind::PutOnMin, 100.0).unwrap();
        let grid = build_grid(&params, (90.0, 90.0), (1.5, 1.5), 32, 32, 10).unwrap();
        let result = price(&params, &payoff, &grid, &PriceOptions::default()).unwrap();
        assert_eq!(result.price, result.surface.at(0, 0));
        assert!(result.price >= 10.0 && result.price < 100.0);
        assert!(result.exercise.is_some());
        assert_eq!(result.surface.time_index, 10);
    }

    #[test]
    fn american_dominates_european_and_stays_bounded() {
        let params = case_i_params();
        let payoff = Payoff::new(PayoffKind::PutOnAverage, 100.0).unwrap();
        let grid = build_grid(&params, (100.0, 100.0), (1.0, 1.0), 32, 32, 4).unwrap();
        let us = price(
            &params,
            &payoff,
            &grid,
            &PriceOptions {
                style: OptionStyle::American,
                ..Default::default()
            },
        )
        .unwrap();
        let eu = price(
            &params,
            &payoff,
            &grid,
            &PriceOptions {
                style: OptionStyle::European,
                ..Default::default()
            },
        )
        .unwrap();
        for (a, e) in us.surface.values().iter().zip(eu.surface.values()) {
            assert!(a + 1e-12 >= *e);
        }
        assert!(us.surface.max_abs() <= 100.0 * (1.0 + 1e-3));
    }

    #[test]
    fn surface_symmetric_for_symmetric_model() {
        let params = ModelParams {
            sigma_x: 0.15,
            sigma_y: 0.15,
            rho: 0.30,
            r: 0.05,
            lambda: 0.60,
            mu_jx: -0.10,
            mu_jy: -0.10,
            sigma_jx: 0.17,
            sigma_jy: 0.17,
            rho_j: -0.20,
            maturity: 1.0,
        };
        let payoff = Payoff::new(PayoffKind::PutOnMin, 100.0).unwrap();
        let grid = build_grid(&params, (90.0, 90.0), (1.5, 1.5), 32, 32, 8).unwrap();
        let result = price(&params, &payoff, &grid, &PriceOptions::default()).unwrap();
        for l in -32..=32isize {
            for d in -32..=32isize {
                assert!(
                    (result.surface.at(l, d) - result.surface.at(d, l)).abs() <= 1e-12,
                    "asymmetry at ({l}, {d})"
                );
            }
        }
    }

    #[test]
    fn exercise_region_examples() {
        let params = case_i_params();
        let payoff = Payoff::new(PayoffKind::PutOnMin, 100.0).unwrap();
        let grid = build_grid(&params, (90.0, 90.0), (1.5, 1.5), 16, 16, 10).unwrap();
        let pay0 = init_surface(&payoff, &grid);
        // At tau = 0 the surface equals the payoff: everything is exercised.
        let mask = exercise_region(&pay0, &payoff, &grid, EXERCISE_TOL);
        assert!(mask.iter().all(|&b| b));

        let result = price(&params, &payoff, &grid, &PriceOptions::default()).unwrap();
        let mask = result.exercise.unwrap();
        // Far OTM corner: both assets expensive, payoff 0 < value.
        assert!(!mask[mask.len() - 1]);
    }

    #[test]
    fn value_at_interpolates() {
        let params = case_i_params();
        let payoff = Payoff::new(PayoffKind::PutOnMin, 100.0).unwrap();
        let grid = build_grid(&params, (90.0, 90.0), (1.5, 1.5), 16, 16, 10).unwrap();
        let s = init_surface(&payoff, &grid);
        // Anchored spot: exact node value.
        assert_eq!(value_at(&s, &grid, 90.0, 90.0).unwrap(), s.at(0, 0));
        // Cell-centre query reproduces the common value of equal corners.
        let flat = ValueSurface::from_values(vec![7.0; 33 * 33], 16, 16, grid.dtau).unwrap();
        let x_mid = (grid.x_node(0) + grid.x_node(1)) / 2.0;
        let y_mid = (grid.y_node(0) + grid.y_node(1)) / 2.0;
        let v = value_at(&flat, &grid, x_mid.exp(), y_mid.exp()).unwrap();
        assert_relative_eq!(v, 7.0, epsilon = 1e-12);
        // Out-of-interior queries are rejected.
        assert!(value_at(&s, &grid, 90.0 * 6.0, 90.0).is_err());
        assert!(value_at(&s, &grid, -1.0, 90.0).is_err());
    }

    #[test]
    fn snapshots_recorded_at_requested_levels() {
        let params = case_i_params();
        let payoff = Payoff::new(PayoffKind::PutOnMin, 100.0).unwrap();
        let grid = build_grid(&params, (90.0, 90.0), (1.5, 1.5), 16, 16, 10).unwrap();
        let result = price(
            &params,
            &payoff,
            &grid,
            &PriceOptions {
                snapshot_steps: vec![5],
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(result.snapshots.len(), 1);
        assert_eq!(result.snapshots[0].0, 5);
        assert_eq!(result.snapshots[0].1.time_index, 5);
    }

    #[test]
    fn mask_pgm_has_expected_header() {
        let params = case_i_params();
        let grid = build_grid(&params, (90.0, 90.0), (1.5, 1.5), 8, 8, 10).unwrap();
        let mask = vec![true; 7 * 7];
        let mut buf = Vec::new();
        write_mask_pgm(&mask, &grid, &mut buf).unwrap();
        assert!(buf.starts_with(b"P5\n7 7\n255\n"));
        assert_eq!(buf.len(), b"P5\n7 7\n255\n".len() + 49);
    }
}
