use std::time::Instant;
use merton2d::convolve::EmbedMode;
use merton2d::model::{build_grid, ModelParams, Payoff, PayoffKind};
use merton2d::pricer::{price, PriceOptions};

fn main() {
    let params = ModelParams {
        sigma_x: 0.12, sigma_y: 0.15, rho: 0.30, r: 0.05, lambda: 0.60,
        mu_jx: -0.10, mu_jy: 0.10, sigma_jx: 0.17, sigma_jy: 0.13, rho_j: -0.20,
        maturity: 1.0,
    };
    let payoff = Payoff::new(PayoffKind::PutOnMin, 100.0).unwrap();
    for (level, mode) in [(0usize, EmbedMode::Exact), (0, EmbedMode::Padded), (1, EmbedMode::Exact)] {
        let n = 256usize << level;
        let m = 50usize << level;
        let grid = build_grid(&params, (90.0, 90.0), (1.5, 1.5), n, n, m).unwrap();
        let t0 = Instant::now();
        let result = price(&params, &payoff, &grid, &PriceOptions { embed: mode, ..Default::default() }).unwrap();
        println!("level {level} {mode:?}: price={:.6} K={} kernel={:.1}s steps={:.1}s total={:.1}s",
            result.price, result.truncation, result.timings.kernel_seconds,
            result.timings.step_seconds, t0.elapsed().as_secs_f64());
    }
}
