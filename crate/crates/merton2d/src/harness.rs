//! Validation harness: convergence tables with change/ratio columns,
//! domain-size sensitivity studies, and comprehensive spot-grid tables
//! compared against the embedded benchmark prices.

use std::io::Write;
use std::time::Instant;

use crate::convolve::EmbedMode;
use crate::error::{PricingError, Result};
use crate::model::{build_grid, GridSpec, ModelParams, Payoff, PayoffKind};
use crate::pricer::{price, OptionStyle, PriceOptions, PriceResult};
use crate::reference::{SpotTableReference, PUT_ON_AVG_TABLES, PUT_ON_MIN_TABLES};

/// The three published parameter sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseId {
    CaseI,
    CaseII,
    CaseIII,
}

impl CaseId {
    pub const ALL: [CaseId; 3] = [CaseId::CaseI, CaseId::CaseII, CaseId::CaseIII];

    /// Zero-based position used to index the embedded reference tables.
    pub fn index(self) -> usize {
        match self {
            CaseId::CaseI => 0,
            CaseId::CaseII => 1,
            CaseId::CaseIII => 2,
        }
    }
}

impl std::fmt::Display for CaseId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CaseId::CaseI => write!(f, "case-i"),
            CaseId::CaseII => write!(f, "case-ii"),
            CaseId::CaseIII => write!(f, "case-iii"),
        }
    }
}

/// A parameter set bound to its strike and default domain half-width.
///
/// `id` is set for the three published cases (whose values match the
/// published tables verbatim) and `None` for custom parameter sets.
#[derive(Debug, Clone, Copy)]
pub struct CaseSpec {
    pub id: Option<CaseId>,
    pub params: ModelParams,
    pub strike: f64,
    /// Interior half-width (log-price units) used by the published studies.
    pub half_width: f64,
}

impl CaseSpec {
    /// Wraps a custom parameter set so it can drive the same studies.
    pub fn custom(params: ModelParams, strike: f64, half_width: f64) -> CaseSpec {
        CaseSpec {
            id: None,
            params,
            strike,
            half_width,
        }
    }
}

/// Returns the published parameter set for `id`.
pub fn case(id: CaseId) -> CaseSpec {
    match id {
        CaseId::CaseI => CaseSpec {
            id: Some(id),
            params: ModelParams {
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
            },
            strike: 100.0,
            half_width: 1.5,
        },
        CaseId::CaseII => CaseSpec {
            id,
            params: ModelParams {
                sigma_x: 0.30,
                sigma_y: 0.30,
                rho: 0.50,
                r: 0.05,
                lambda: 2.0,
                mu_jx: -0.50,
                mu_jy: 0.30,
                sigma_jx: 0.40,
                sigma_jy: 0.10,
                rho_j: -0.60,
                maturity: 0.5,
            },
            strike: 40.0,
            half_width: 3.0,
        },
        CaseId::CaseIII => CaseSpec {
            id,
            params: ModelParams {
                sigma_x: 0.20,
                sigma_y: 0.30,
                rho: 0.70,
                r: 0.05,
                lambda: 8.0,
                mu_jx: -0.05,
                mu_jy: -0.20,
                sigma_jx: 0.45,
                sigma_jy: 0.06,
                rho_j: 0.50,
                maturity: 1.0,
            },
            strike: 40.0,
            half_width: 6.0,
        },
    }
}

impl CaseSpec {
    pub fn payoff(&self, kind: PayoffKind) -> Payoff {
        Payoff {
            kind,
            strike: self.strike,
        }
    }

    /// Grid for `level` anchored at `spot` with the published half-widths,
    /// optionally rescaling the domain (and the interval counts with it, so
    /// the mesh width is preserved).
    pub fn grid(&self, spot: (f64, f64), level: usize, width_scale: f64) -> Result<GridSpec> {
        let (n, m) = level_grid(level)?;
        let n = ((n as f64) * width_scale).round() as usize;
        let w = self.half_width * width_scale;
        build_grid(&self.params, spot, (w, w), n, n, m)
    }
}

/// Interval and timestep counts of refinement level `level`:
/// `N = J = 2^(8+level)` and `M = 50 * 2^level`.
pub fn level_grid(level: usize) -> Result<(usize, usize)> {
    if level > 4 {
        return Err(PricingError::InvalidInput(format!(
            "refinement level {level} out of range (0..=4)"
        )));
    }
    Ok((256usize << level, 50usize << level))
}

fn run_price(
    case: &CaseSpec,
    kind: PayoffKind,
    grid: &GridSpec,
    embed: EmbedMode,
) -> Result<PriceResult> {
    let options = PriceOptions {
        style: OptionStyle::American,
        epsilon: None,
        embed,
        snapshot_steps: Vec::new(),
    };
    price(&case.params, &case.payoff(kind), grid, &options)
}

/// One line of a refinement study.
#[derive(Debug, Clone, Copy)]
pub struct ConvergenceRow {
    pub level: usize,
    pub n: usize,
    pub j: usize,
    pub m: usize,
    pub price: f64,
    /// `price(level) - price(level-1)`; defined from level 1 onward.
    pub change: Option<f64>,
    /// `change(level-1) / change(level)`; defined from level 2 onward.
    pub ratio: Option<f64>,
    pub seconds: f64,
}

/// A study outcome plus the external benchmark it is compared against.
#[derive(Debug, Clone)]
pub struct StudyReport {
    pub rows: Vec<ConvergenceRow>,
    /// External benchmark price, when one is embedded for this setup.
    pub reference: Option<f64>,
    /// `|price(final level) - reference|`.
    pub reference_diff: Option<f64>,
}

/// Prices `case` at refinement levels `0..=max_level` on spot-anchored grids
/// and tabulates successive changes and their ratios.
pub fn convergence_study(
    case: &CaseSpec,
    kind: PayoffKind,
    spot: (f64, f64),
    max_level: usize,
    embed: EmbedMode,
) -> Result<StudyReport> {
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(max_level + 1);
    for level in 0..=max_level {
        let grid = case.grid(spot, level, 1.0)?;
        let clock = Instant::now();
        let result = run_price(case, kind, &grid, embed).map_err(|e| {
            PricingError::Numerical(format!("level {level} failed: {e}"))
        })?;
        let seconds = clock.elapsed().as_secs_f64();
        let change = rows.last().map(|prev| result.price - prev.price);
        let ratio = match (rows.last().and_then(|prev| prev.change), change) {
            (Some(prev), Some(cur)) if cur != 0.0 => Some(prev / cur),
            _ => None,
        };
        rows.push(ConvergenceRow {
            level,
            n: grid.n,
            j: grid.j,
            m: grid.m,
            price: result.price,
            change,
            ratio,
            seconds,
        });
    }
    let reference = embedded_reference(case, kind, spot);
    let reference_diff =
        reference.map(|r| (rows.last().expect("at least one level").price - r).abs());
    Ok(StudyReport {
        rows,
        reference,
        reference_diff,
    })
}

fn embedded_reference(case: &CaseSpec, kind: PayoffKind, spot: (f64, f64)) -> Option<f64> {
    let tables = match kind {
        PayoffKind::PutOnMin => &PUT_ON_MIN_TABLES,
        PayoffKind::PutOnAverage => &PUT_ON_AVG_TABLES,
    };
    let table = &tables[case.id.index()];
    let col = table.spots.iter().position(|&s| s == spot.0)?;
    let row = table.spots.iter().position(|&s| s == spot.1)?;
    Some(table.external[row][col])
}

/// Domain rescaling applied by [`domain_study`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainScale {
    /// Halve the interior half-widths (and N, J with them).
    Half,
    /// The published domain, unchanged.
    Base,
    /// Double the interior half-widths (and N, J with them).
    Double,
}

impl DomainScale {
    pub fn factor(self) -> f64 {
        match self {
            DomainScale::Half => 0.5,
            DomainScale::Base => 1.0,
            DomainScale::Double => 2.0,
        }
    }
}

/// One line of a domain-size study.
#[derive(Debug, Clone, Copy)]
pub struct DomainRow {
    pub level: usize,
    pub base_price: f64,
    pub scaled_price: f64,
    pub abs_diff: f64,
    pub seconds: f64,
}

/// Domain-size sensitivity report.
#[derive(Debug, Clone)]
pub struct DomainStudy {
    pub scale: DomainScale,
    pub rows: Vec<DomainRow>,
}

/// Reprices levels `0..=max_level` on a rescaled domain with the mesh width
/// preserved, reporting per-level absolute differences to the base domain.
pub fn domain_study(
    case: &CaseSpec,
    kind: PayoffKind,
    spot: (f64, f64),
    scale: DomainScale,
    max_level: usize,
    embed: EmbedMode,
) -> Result<DomainStudy> {
    let mut rows = Vec::with_capacity(max_level + 1);
    for level in 0..=max_level {
        let clock = Instant::now();
        let base = run_price(case, kind, &case.grid(spot, level, 1.0)?, embed)?;
        let scaled = run_price(case, kind, &case.grid(spot, level, scale.factor())?, embed)?;
        rows.push(DomainRow {
            level,
            base_price: base.price,
            scaled_price: scaled.price,
            abs_diff: (scaled.price - base.price).abs(),
            seconds: clock.elapsed().as_secs_f64(),
        });
    }
    Ok(DomainStudy { scale, rows })
}

/// A computed spot-grid price table with deviations from the embedded
/// benchmarks.
#[derive(Debug, Clone)]
pub struct TableReport {
    pub case_id: CaseId,
    pub kind: PayoffKind,
    pub level: usize,
    pub spots: Vec<f64>,
    /// Computed prices; rows index `Y0`, columns `X0`.
    pub prices: Vec<Vec<f64>>,
    pub reference: SpotTableReference,
    /// Largest absolute deviation from the fine-grid reference prices.
    pub max_diff_fine: f64,
    /// Largest absolute deviation from the external benchmark prices.
    pub max_diff_external: f64,
    pub seconds: f64,
}

/// Prices every spot pair of the published 3x3 table for `case`, each on its
/// own anchored grid at `level`, and compares against the embedded benchmarks.
///
/// Levels above 2 reproduce more digits but take far longer; the published
/// fine-grid values correspond to level 4.
pub fn comprehensive_table(
    case: &CaseSpec,
    kind: PayoffKind,
    level: usize,
    embed: EmbedMode,
) -> Result<TableReport> {
    let reference = match kind {
        PayoffKind::PutOnMin => PUT_ON_MIN_TABLES[case.id.index()],
        PayoffKind::PutOnAverage => PUT_ON_AVG_TABLES[case.id.index()],
    };
    let clock = Instant::now();
    let mut prices = Vec::with_capacity(3);
    let mut max_diff_fine = 0.0f64;
    let mut max_diff_external = 0.0f64;
    for (row, &y0) in reference.spots.iter().enumerate() {
        let mut line = Vec::with_capacity(3);
        for (col, &x0) in reference.spots.iter().enumerate() {
            let grid = case.grid((x0, y0), level, 1.0)?;
            let result = run_price(case, kind, &grid, embed)?;
            max_diff_fine = max_diff_fine.max((result.price - reference.fine[row][col]).abs());
            max_diff_external =
                max_diff_external.max((result.price - reference.external[row][col]).abs());
            line.push(result.price);
        }
        prices.push(line);
    }
    Ok(TableReport {
        case_id: case.id,
        kind,
        level,
        spots: reference.spots.to_vec(),
        prices,
        reference,
        max_diff_fine,
        max_diff_external,
        seconds: clock.elapsed().as_secs_f64(),
    })
}

/// Output format for [`emit_report`] and friends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Text,
}

fn fmt_opt(v: Option<f64>, format: ReportFormat) -> String {
    match (v, format) {
        (Some(v), ReportFormat::Csv) => format!("{v:.6e}"),
        (Some(v), ReportFormat::Text) => format!("{v:>9.2e}"),
        (None, ReportFormat::Csv) => String::new(),
        (None, ReportFormat::Text) => format!("{:>9}", ""),
    }
}

/// Writes a convergence study as CSV (`level,N,J,M,price,change,ratio,seconds`)
/// or as an aligned text table. Output is deterministic for a given report.
pub fn emit_report<W: Write>(
    report: &StudyReport,
    mut out: W,
    format: ReportFormat,
) -> std::io::Result<()> {
    match format {
        ReportFormat::Csv => {
            writeln!(out, "level,N,J,M,price,change,ratio,seconds")?;
            for r in &report.rows {
                writeln!(
                    out,
                    "{},{},{},{},{:.6},{},{},{:.3}",
                    r.level,
                    r.n,
                    r.j,
                    r.m,
                    r.price,
                    fmt_opt(r.change, format),
                    fmt_opt(r.ratio.map(|x| (x * 100.0).round() / 100.0), format),
                    r.seconds
                )?;
            }
        }
        ReportFormat::Text => {
            writeln!(
                out,
                "{:>5} {:>6} {:>6} {:>5} {:>12} {:>9} {:>6} {:>9}",
                "level", "N", "J", "M", "price", "change", "ratio", "seconds"
            )?;
            for r in &report.rows {
                writeln!(
                    out,
                    "{:>5} {:>6} {:>6} {:>5} {:>12.6} {} {} {:>9.2}",
                    r.level,
                    r.n,
                    r.j,
                    r.m,
                    r.price,
                    fmt_opt(r.change, format),
                    match r.ratio {
                        Some(x) => format!("{x:>6.2}"),
                        None => format!("{:>6}", ""),
                    },
                    r.seconds
                )?;
            }
            if let Some(reference) = report.reference {
                writeln!(out, "external benchmark: {reference:.3}")?;
            }
        }
    }
    Ok(())
}

/// Writes a domain study as CSV (`level,base_price,scaled_price,abs_diff,seconds`)
/// or as an aligned text table.
pub fn emit_domain_report<W: Write>(
    study: &DomainStudy,
    mut out: W,
    format: ReportFormat,
) -> std::io::Result<()> {
    match format {
        ReportFormat::Csv => {
            writeln!(out, "level,base_price,scaled_price,abs_diff,seconds")?;
            for r in &study.rows {
                writeln!(
                    out,
                    "{},{:.8},{:.8},{:.3e},{:.3}",
                    r.level, r.base_price, r.scaled_price, r.abs_diff, r.seconds
                )?;
            }
        }
        ReportFormat::Text => {
            writeln!(out, "domain scale: {:?}", study.scale)?;
            writeln!(
                out,
                "{:>5} {:>14} {:>14} {:>10} {:>9}",
                "level", "base", "scaled", "|diff|", "seconds"
            )?;
            for r in &study.rows {
                writeln!(
                    out,
                    "{:>5} {:>14.8} {:>14.8} {:>10.2e} {:>9.2}",
                    r.level, r.base_price, r.scaled_price, r.abs_diff, r.seconds
                )?;
            }
        }
    }
    Ok(())
}

/// Writes a comprehensive price table as CSV (`y0,x0,price,fine,external`)
/// or as an aligned text table with the benchmark rows interleaved.
pub fn emit_table_report<W: Write>(
    report: &TableReport,
    mut out: W,
    format: ReportFormat,
) -> std::io::Result<()> {
    match format {
        ReportFormat::Csv => {
            writeln!(out, "y0,x0,price,fine,external")?;
            for (row, &y0) in report.spots.iter().enumerate() {
                for (col, &x0) in report.spots.iter().enumerate() {
                    writeln!(
                        out,
                        "{y0},{x0},{:.6},{:.6},{:.3}",
                        report.prices[row][col],
                        report.reference.fine[row][col],
                        report.reference.external[row][col]
                    )?;
                }
            }
        }
        ReportFormat::Text => {
            writeln!(
                out,
                "{} {:?} level {}  (rows: Y0, columns: X0)",
                report.case_id, report.kind, report.level
            )?;
            write!(out, "{:>10}", "")?;
            for &x0 in &report.spots {
                write!(out, " {x0:>11}")?;
            }
            writeln!(out)?;
            for (row, &y0) in report.spots.iter().enumerate() {
                write!(out, "{y0:>10}")?;
                for col in 0..report.spots.len() {
                    write!(out, " {:>11.6}", report.prices[row][col])?;
                }
                writeln!(out)?;
            }
            writeln!(
                out,
                "max |diff| vs fine-grid reference: {:.2e}; vs external benchmark: {:.2e}",
                report.max_diff_fine, report.max_diff_external
            )?;
        }
    }
    Ok(())
}
