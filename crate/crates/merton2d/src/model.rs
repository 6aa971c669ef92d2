//! Market model, payoffs, and grid/domain construction.
//!
//! Everything downstream (kernel construction, convolution, timestepping)
//! consumes the validated, precomputed geometry and parameters built here.

use crate::error::{PricingError, Result};

/// Symmetric 2x2 matrix stored by its three distinct entries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sym2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Sym2 {
    /// Determinant via the closed-form cofactor expression.
    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    /// Closed-form inverse. The caller guarantees positive definiteness.
    pub fn inverse(&self) -> Sym2 {
        let det = self.det();
        Sym2 {
            xx: self.yy / det,
            xy: -self.xy / det,
            yy: self.xx / det,
        }
    }

    /// Quadratic form `w' M w` for `w = (wx, wy)`.
    pub fn quad(&self, wx: f64, wy: f64) -> f64 {
        self.xx * wx * wx + 2.0 * self.xy * wx * wy + self.yy * wy * wy
    }

    fn scale(&self, s: f64) -> Sym2 {
        Sym2 {
            xx: self.xx * s,
            xy: self.xy * s,
            yy: self.yy * s,
        }
    }

    fn add_scaled(&self, other: &Sym2, s: f64) -> Sym2 {
        Sym2 {
            xx: self.xx + s * other.xx,
            xy: self.xy + s * other.xy,
            yy: self.yy + s * other.yy,
        }
    }
}

/// Parameters of the two-asset Merton jump-diffusion market model.
///
/// Both asset prices follow correlated geometric jump-diffusions driven by a
/// common Poisson process; the log jump multipliers are bivariate normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Diffusive volatility of the first asset, per sqrt(year). Must be > 0.
    pub sigma_x: f64,
    /// Diffusive volatility of the second asset, per sqrt(year). Must be > 0.
    pub sigma_y: f64,
    /// Correlation of the two Brownian drivers. Must satisfy |rho| < 1.
    pub rho: f64,
    /// Risk-free rate, per year.
    pub r: f64,
    /// Jump intensity of the common Poisson process, per year. Must be >= 0.
    pub lambda: f64,
    /// Mean of the log jump multiplier of the first asset.
    pub mu_jx: f64,
    /// Mean of the log jump multiplier of the second asset.
    pub mu_jy: f64,
    /// Std dev of the log jump multiplier of the first asset. Must be > 0.
    pub sigma_jx: f64,
    /// Std dev of the log jump multiplier of the second asset. Must be > 0.
    pub sigma_jy: f64,
    /// Correlation of the log jump multipliers. Must satisfy |rho_j| < 1.
    pub rho_j: f64,
    /// Option maturity in years. Must be > 0.
    pub maturity: f64,
}

/// Quantities derived from [`ModelParams`] once and reused everywhere.
#[derive(Debug, Clone, Copy)]
pub struct DerivedModel {
    /// The validated inputs.
    pub params: ModelParams,
    /// Jump compensator E[xi_x - 1] of the first asset.
    pub kappa_x: f64,
    /// Jump compensator E[xi_y - 1] of the second asset.
    pub kappa_y: f64,
    /// Diffusion covariance matrix (per year).
    pub cov_diff: Sym2,
    /// Covariance matrix of the log jump multipliers.
    pub cov_jump: Sym2,
    /// Risk-neutral log-price drift vector (per year).
    pub drift: [f64; 2],
}

impl DerivedModel {
    /// Diffusion covariance over one timestep, `dtau * cov_diff`.
    pub fn step_cov(&self, dtau: f64) -> Sym2 {
        self.cov_diff.scale(dtau)
    }

    /// Covariance of the diffusion step plus `k` jumps, `dtau*cov_diff + k*cov_jump`.
    pub fn step_cov_with_jumps(&self, dtau: f64, k: usize) -> Sym2 {
        self.step_cov(dtau).add_scaled(&self.cov_jump, k as f64)
    }

    /// Drift of the log-price increment over one timestep, `dtau * drift`.
    pub fn step_drift(&self, dtau: f64) -> [f64; 2] {
        [self.drift[0] * dtau, self.drift[1] * dtau]
    }
}

fn require(cond: bool, what: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(PricingError::InvalidInput(what.to_string()))
    }
}

/// Validates raw model parameters and precomputes derived quantities.
///
/// The jump compensators use the lognormal closed form
/// `kappa = exp(mu + sigma^2/2) - 1`; they are never estimated at runtime.
pub fn validate(params: &ModelParams) -> Result<DerivedModel> {
    require(params.sigma_x > 0.0, "sigma_x must be positive")?;
    require(params.sigma_y > 0.0, "sigma_y must be positive")?;
    require(params.sigma_jx > 0.0, "sigma_jx must be positive")?;
    require(params.sigma_jy > 0.0, "sigma_jy must be positive")?;
    require(params.maturity > 0.0, "maturity must be positive")?;
    require(params.lambda >= 0.0, "lambda must be nonnegative")?;
    require(params.rho.abs() < 1.0, "rho must satisfy |rho| < 1")?;
    require(params.rho_j.abs() < 1.0, "rho_j must satisfy |rho_j| < 1")?;
    for (name, v) in [
        ("sigma_x", params.sigma_x),
        ("sigma_y", params.sigma_y),
        ("rho", params.rho),
        ("r", params.r),
        ("lambda", params.lambda),
        ("mu_jx", params.mu_jx),
        ("mu_jy", params.mu_jy),
        ("sigma_jx", params.sigma_jx),
        ("sigma_jy", params.sigma_jy),
        ("rho_j", params.rho_j),
        ("maturity", params.maturity),
    ] {
        require(v.is_finite(), &format!("{name} must be finite"))?;
    }

    let kappa_x = (params.mu_jx + 0.5 * params.sigma_jx * params.sigma_jx).exp() - 1.0;
    let kappa_y = (params.mu_jy + 0.5 * params.sigma_jy * params.sigma_jy).exp() - 1.0;
    let cov_diff = Sym2 {
        xx: params.sigma_x * params.sigma_x,
        xy: params.rho * params.sigma_x * params.sigma_y,
        yy: params.sigma_y * params.sigma_y,
    };
    let cov_jump = Sym2 {
        xx: params.sigma_jx * params.sigma_jx,
        xy: params.rho_j * params.sigma_jx * params.sigma_jy,
        yy: params.sigma_jy * params.sigma_jy,
    };
    let drift = [
        params.r - params.lambda * kappa_x - 0.5 * params.sigma_x * params.sigma_x,
        params.r - params.lambda * kappa_y - 0.5 * params.sigma_y * params.sigma_y,
    ];
    Ok(DerivedModel {
        params: *params,
        kappa_x,
        kappa_y,
        cov_diff,
        cov_jump,
        drift,
    })
}

/// Supported put payoffs on two assets. Both are bounded by the strike.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayoffKind {
    /// `max(K - min(exp(x), exp(y)), 0)`.
    PutOnMin,
    /// `max(K - (exp(x) + exp(y)) / 2, 0)`.
    PutOnAverage,
}

/// A payoff function over log prices `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Payoff {
    pub kind: PayoffKind,
    pub strike: f64,
}

impl Payoff {
    pub fn new(kind: PayoffKind, strike: f64) -> Result<Payoff> {
        require(strike > 0.0 && strike.is_finite(), "strike must be positive")?;
        Ok(Payoff { kind, strike })
    }

    /// Evaluates the payoff at log prices `(x, y)`. Total and in `[0, strike]`.
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let v = match self.kind {
            PayoffKind::PutOnMin => self.strike - x.exp().min(y.exp()),
            PayoffKind::PutOnAverage => self.strike - 0.5 * (x.exp() + y.exp()),
        };
        v.max(0.0)
    }
}

/// Per-axis index sets of the nested grids.
///
/// The interior set excludes the boundary nodes of `[z_min, z_max]`; the
/// dagger set spans the enlarged integration box; the double-dagger set is
/// the displacement lattice (differences between interior and dagger
/// indices). Sizes per axis are `N-1`, `2N+1` and `3N-1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexSets {
    pub interior_x: std::ops::RangeInclusive<isize>,
    pub dagger_x: std::ops::RangeInclusive<isize>,
    pub ddagger_x: std::ops::RangeInclusive<isize>,
    pub interior_y: std::ops::RangeInclusive<isize>,
    pub dagger_y: std::ops::RangeInclusive<isize>,
    pub ddagger_y: std::ops::RangeInclusive<isize>,
}

/// Uniform nested grids in log-price space plus the timestep partition.
///
/// The mesh is anchored at `(x_hat0, y_hat0) = (ln X0, ln Y0)` so the spot is
/// exactly a node, and the anchor is the midpoint of every nesting level: the
/// interior box spans `anchor +- w`, the integration (dagger) box
/// `anchor +- 2w`, and the displacement (double-dagger) box `anchor +- 3w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// Interior interval count along x. Even, >= 4.
    pub n: usize,
    /// Interior interval count along y. Even, >= 4.
    pub j: usize,
    /// Number of timesteps.
    pub m: usize,
    /// Grid anchor, `ln X0`.
    pub x_hat0: f64,
    /// Grid anchor, `ln Y0`.
    pub y_hat0: f64,
    /// Interior half-width along x.
    pub half_width_x: f64,
    /// Interior half-width along y.
    pub half_width_y: f64,
    /// Mesh width along x, `2*half_width_x / n`.
    pub dx: f64,
    /// Mesh width along y, `2*half_width_y / j`.
    pub dy: f64,
    /// Timestep, `maturity / m`.
    pub dtau: f64,
}

impl GridSpec {
    /// Log-price of the x node with signed index `l`.
    pub fn x_node(&self, l: isize) -> f64 {
        self.x_hat0 + l as f64 * self.dx
    }

    /// Log-price of the y node with signed index `d`.
    pub fn y_node(&self, d: isize) -> f64 {
        self.y_hat0 + d as f64 * self.dy
    }

    pub fn x_min(&self) -> f64 {
        self.x_hat0 - self.half_width_x
    }

    pub fn x_max(&self) -> f64 {
        self.x_hat0 + self.half_width_x
    }

    pub fn y_min(&self) -> f64 {
        self.y_hat0 - self.half_width_y
    }

    pub fn y_max(&self) -> f64 {
        self.y_hat0 + self.half_width_y
    }

    /// Node count of the dagger grid along x, `2N+1`.
    pub fn dagger_len_x(&self) -> usize {
        2 * self.n + 1
    }

    /// Node count of the dagger grid along y, `2J+1`.
    pub fn dagger_len_y(&self) -> usize {
        2 * self.j + 1
    }

    /// Node count of the displacement lattice along x, `3N-1`.
    pub fn ddagger_len_x(&self) -> usize {
        3 * self.n - 1
    }

    /// Node count of the displacement lattice along y, `3J-1`.
    pub fn ddagger_len_y(&self) -> usize {
        3 * self.j - 1
    }

    /// Node count of the interior along x, `N-1`.
    pub fn interior_len_x(&self) -> usize {
        self.n - 1
    }

    /// Node count of the interior along y, `J-1`.
    pub fn interior_len_y(&self) -> usize {
        self.j - 1
    }

    /// Largest interior index along x; the interior is `-half..=half`.
    pub fn interior_half_x(&self) -> isize {
        self.n as isize / 2 - 1
    }

    /// Largest interior index along y.
    pub fn interior_half_y(&self) -> isize {
        self.j as isize / 2 - 1
    }

    /// True when node `(l, d)` of the dagger grid lies in the open interior box.
    pub fn is_interior(&self, l: isize, d: isize) -> bool {
        l.abs() <= self.interior_half_x() && d.abs() <= self.interior_half_y()
    }

    /// The three nested per-axis index ranges.
    pub fn index_sets(&self) -> IndexSets {
        let n = self.n as isize;
        let j = self.j as isize;
        IndexSets {
            interior_x: -n / 2 + 1..=n / 2 - 1,
            dagger_x: -n..=n,
            ddagger_x: -(3 * n / 2 - 1)..=3 * n / 2 - 1,
            interior_y: -j / 2 + 1..=j / 2 - 1,
            dagger_y: -j..=j,
            ddagger_y: -(3 * j / 2 - 1)..=3 * j / 2 - 1,
        }
    }
}

/// Builds the nested grids anchored at the spot `(X0, Y0)`.
///
/// `half_width` is the interior half-width per axis in log-price units, so
/// the interior box is `[ln X0 - w_x, ln X0 + w_x] x [ln Y0 - w_y, ln Y0 + w_y]`.
pub fn build_grid(
    params: &ModelParams,
    spot: (f64, f64),
    half_width: (f64, f64),
    n: usize,
    j: usize,
    m: usize,
) -> Result<GridSpec> {
    let (x0, y0) = spot;
    let (wx, wy) = half_width;
    require(x0 > 0.0 && y0 > 0.0, "spot prices must be positive")?;
    require(wx > 0.0 && wy > 0.0, "half-widths must be positive")?;
    require(n >= 4 && j >= 4, "N and J must be at least 4")?;
    require(n % 2 == 0 && j % 2 == 0, "N and J must be even")?;
    require(m >= 1, "M must be at least 1")?;
    Ok(GridSpec {
        n,
        j,
        m,
        x_hat0: x0.ln(),
        y_hat0: y0.ln(),
        half_width_x: wx,
        half_width_y: wy,
        dx: 2.0 * wx / n as f64,
        dy: 2.0 * wy / j as f64,
        dtau: params.maturity / m as f64,
    })
}

/// Separable composite-trapezoid weights over the dagger grid.
///
/// Stored as a pair of 1-D vectors (indexed by `l + N` and `d + J`); the 2-D
/// weight of node `(l, d)` is the product of the two entries.
#[derive(Debug, Clone, PartialEq)]
pub struct TrapezoidWeights {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl TrapezoidWeights {
    /// 2-D weight of dagger node `(l, d)`: 1/4 at corners, 1/2 on edges, 1 inside.
    pub fn at(&self, l: isize, d: isize, grid: &GridSpec) -> f64 {
        self.x[(l + grid.n as isize) as usize] * self.y[(d + grid.j as isize) as usize]
    }
}

/// 1-D trapezoid weights on each axis of the dagger box: 1/2 at the two
/// endpoints, 1 everywhere else. The mesh factor `dx*dy` is folded into the
/// kernel weights, not into these.
pub fn trapezoid_weights(grid: &GridSpec) -> TrapezoidWeights {
    let mut x = vec![1.0; grid.dagger_len_x()];
    let mut y = vec![1.0; grid.dagger_len_y()];
    x[0] = 0.5;
    *x.last_mut().expect("nonempty") = 0.5;
    y[0] = 0.5;
    *y.last_mut().expect("nonempty") = 0.5;
    TrapezoidWeights { x, y }
}
