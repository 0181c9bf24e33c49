//! Gaussian noise scales for single-step and windowed updates, checked
//! against the empirical variance of drawn noise.
//!
//! `cargo run --release --example noise_calibration`

use dpsgd::linalg::{gaussian_vector, RngStream};
use dpsgd::loss::LossParams;
use dpsgd::privacy::{delta_for, noise_sigma, sensitivity_step, sensitivity_window, PrivacySpec};

fn main() -> dpsgd::Result<()> {
    // Convex MNIST-scale setting: radius 50, lambda 0, 10 nodes x 6000 samples.
    let params = LossParams::new(0.0, 50.0)?;
    let c = params.constants();
    let delta = delta_for(60_000);
    println!("L = {}, mu = {}, delta = {delta:.3e}", c.l, c.mu);

    println!("\nper-step sigma for eta = 0.1");
    println!("{:>8} {:>6} {:>12}", "epsilon", "b", "sigma");
    for eps in [0.1, 0.3, 0.5, 0.999] {
        let spec = PrivacySpec::new(eps, delta)?;
        for b in [10, 50, 100] {
            let s = noise_sigma(&spec, sensitivity_step(0.1, c.l, b));
            println!("{eps:>8} {b:>6} {s:>12.6}");
        }
    }

    // A node that took three local steps before committing: the noise must
    // cover the largest step in its window.
    let window = [(0.05, 50), (0.2, 50), (0.1, 25)];
    let spec = PrivacySpec::new(0.5, delta)?;
    let d2 = sensitivity_window(&window, c.l, c.mu)?;
    println!("\nwindow {window:?}: sensitivity {d2:.5}, sigma {:.6}", noise_sigma(&spec, d2));

    let sigma = noise_sigma(&PrivacySpec::new(0.5, 1e-6)?, 0.004);
    let draws = gaussian_vector(&mut RngStream::new(7), 200_000, sigma)?;
    let var = draws.as_slice().iter().map(|x| x * x).sum::<f64>() / draws.len() as f64;
    println!(
        "\nsigma {sigma:.6}: empirical variance {var:.4e} vs {:.4e} ({:+.2}%)",
        sigma * sigma,
        100.0 * (var / (sigma * sigma) - 1.0)
    );
    Ok(())
}
