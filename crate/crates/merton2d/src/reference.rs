//! Published benchmark prices embedded as data.
//!
//! Two provenances are kept apart: `fine` values come from a fine-grid run of
//! this monotone-integration scheme (refinement level 4: 4096^2 spatial
//! intervals, 800 timesteps), while `external` values come from an
//! operator-splitting finite-difference solver published to three decimals.
//! Tests load these tables instead of hard-coding prices so tolerances stay
//! configurable in one place.

/// Refinement-level prices of a convergence study plus the external benchmark.
#[derive(Debug, Clone, Copy)]
pub struct ConvergenceReference {
    /// Prices at refinement levels 0..=4.
    pub fine: [f64; 5],
    /// External operator-splitting benchmark price.
    pub external: f64,
}

/// Put-on-min, Case I parameters, spot (90, 90).
pub const PUT_ON_MIN_CASE_I_SPOT_90: ConvergenceReference = ConvergenceReference {
    fine: [16.374702, 16.383298, 16.387210, 16.389079, 16.389991],
    external: 16.390,
};

/// Put-on-average, Case I parameters, spot (100, 100).
pub const PUT_ON_AVG_CASE_I_SPOT_100: ConvergenceReference = ConvergenceReference {
    fine: [3.431959, 3.436727, 3.439096, 3.440278, 3.440868],
    external: 3.442,
};

/// Absolute price differences observed when the interior domain is doubled or
/// halved (with the mesh width preserved), per refinement level.
#[derive(Debug, Clone, Copy)]
pub struct DomainReference {
    pub doubled: [f64; 5],
    pub halved: [f64; 5],
}

/// Domain-size sensitivity of the Case I put-on-min study at spot (90, 90).
pub const DOMAIN_PUT_ON_MIN_CASE_I: DomainReference = DomainReference {
    doubled: [1.64e-8, 1.60e-8, 1.60e-8, 1.62e-8, 1.62e-8],
    halved: [4.92e-4, 4.78e-4, 4.74e-4, 4.74e-4, 4.76e-4],
};

/// Domain-size sensitivity of the Case I put-on-average study at spot (100, 100).
pub const DOMAIN_PUT_ON_AVG_CASE_I: DomainReference = DomainReference {
    doubled: [2.91e-7, 3.09e-7, 3.21e-7, 3.26e-7, 3.29e-7],
    halved: [6.12e-4, 6.37e-4, 6.69e-4, 6.82e-4, 6.91e-4],
};

/// A 3x3 spot grid of prices: rows index the second asset's spot `Y0`,
/// columns the first asset's spot `X0`.
#[derive(Debug, Clone, Copy)]
pub struct SpotTableReference {
    /// Spot levels shared by both axes.
    pub spots: [f64; 3],
    /// Fine-grid prices of this scheme.
    pub fine: [[f64; 3]; 3],
    /// External operator-splitting benchmark prices.
    pub external: [[f64; 3]; 3],
}

/// Comprehensive put-on-min tables for Cases I, II, III.
pub const PUT_ON_MIN_TABLES: [SpotTableReference; 3] = [
    SpotTableReference {
        spots: [90.0, 100.0, 110.0],
        fine: [
            [16.389991, 13.998405, 12.756851],
            [13.020204, 9.619252, 7.876121],
            [11.441389, 7.226153, 5.131663],
        ],
        external: [
            [16.391, 13.999, 12.758],
            [13.021, 9.620, 7.877],
            [11.443, 7.227, 5.132],
        ],
    },
    SpotTableReference {
        spots: [36.0, 40.0, 44.0],
        fine: [
            [15.469776, 14.566197, 13.796032],
            [14.094647, 13.109244, 12.265787],
            [12.924092, 11.879584, 10.984126],
        ],
        external: [
            [15.467, 14.564, 13.794],
            [14.092, 13.107, 12.263],
            [12.921, 11.877, 10.982],
        ],
    },
    SpotTableReference {
        spots: [36.0, 40.0, 44.0],
        fine: [
            [21.750926, 20.917727, 20.176104],
            [21.281139, 20.403611, 19.620525],
            [20.906119, 19.992702, 19.176009],
        ],
        external: [
            [21.742, 20.908, 20.167],
            [21.272, 20.394, 19.611],
            [20.892, 19.983, 19.166],
        ],
    },
];

/// Comprehensive put-on-average tables for Cases I, II, III.
pub const PUT_ON_AVG_TABLES: [SpotTableReference; 3] = [
    SpotTableReference {
        spots: [90.0, 100.0, 110.0],
        fine: [
            [10.000000, 5.987037, 3.440343],
            [6.028929, 3.440868, 1.886527],
            [3.490665, 1.890874, 0.992933],
        ],
        external: [
            [10.003, 5.989, 3.441],
            [6.030, 3.442, 1.877],
            [3.491, 1.891, 0.993],
        ],
    },
    SpotTableReference {
        spots: [36.0, 40.0, 44.0],
        fine: [
            [5.405825, 4.363340, 3.547399],
            [4.213899, 3.338840, 2.669076],
            [3.224979, 2.506688, 1.969401],
        ],
        external: [
            [5.406, 4.363, 3.547],
            [4.214, 3.339, 2.669],
            [3.225, 2.507, 1.969],
        ],
    },
    SpotTableReference {
        spots: [36.0, 40.0, 44.0],
        fine: [
            [12.472058, 11.935904, 11.446078],
            [11.439979, 10.948971, 10.500581],
            [10.499147, 10.049777, 9.639534],
        ],
        external: [
            [12.466, 11.930, 11.440],
            [11.434, 10.943, 10.495],
            [10.493, 10.043, 9.633],
        ],
    },
];
