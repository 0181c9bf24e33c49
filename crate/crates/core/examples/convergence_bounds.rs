//! Closed-form convergence bounds, term by term, and an empirical check of
//! the strongly convex bound on a small synthetic task.
//!
//! `cargo run --release --example convergence_bounds`

use dpsgd::bounds::{
    bound_convex_adaptive, bound_convex_collaborative, bound_strongly_convex_collaborative, BoundInputs, BoundTerms,
};
use dpsgd::harness::check::{check_strongly_convex_bound, BoundCheckConfig};
use dpsgd::loss::LossParams;
use dpsgd::privacy::{delta_for, PrivacySpec};

fn show(name: &str, t: &BoundTerms) {
    println!(
        "{name:<28} opt {:>10.4} grad {:>10.4} privacy {:>10.4} sampling {:>10.4} total {:>10.4}",
        t.optimization,
        t.gradient,
        t.privacy,
        t.sampling,
        t.total()
    );
}

fn main() -> dpsgd::Result<()> {
    // 10 nodes x 6000 samples, b = 50, one pass.
    let (n, b) = (60_000, 50);
    let steps = n / b;
    let delta = delta_for(n);
    for eps in [0.3, 0.999] {
        println!("epsilon = {eps}");
        let spec = PrivacySpec::new(eps, delta)?;
        let convex = LossParams::new(0.0, 50.0)?;
        let x = BoundInputs::for_loss(&convex, &spec, b, n, steps, 0.1);
        show("collaborative, convex", &bound_convex_collaborative(&x)?);
        let adaptive = BoundInputs {
            nodes: 10,
            global_updates: 0.5 * steps as f64,
            ..x
        };
        show("adaptive, convex (50% global)", &bound_convex_adaptive(&adaptive)?);
        let strong = LossParams::new(1e-2, 100.0)?;
        let x = BoundInputs::for_loss(&strong, &spec, b, n, steps, 0.0);
        show("collaborative, strongly cvx", &bound_strongly_convex_collaborative(&x)?);
    }

    println!("\nmeasured mean suboptimality vs strongly convex bound (d = 5, n = 2000, lambda = 0.1)");
    let cfg = BoundCheckConfig {
        seeds: vec![1, 2, 3],
        ..BoundCheckConfig::default()
    };
    for r in check_strongly_convex_bound(&cfg)? {
        println!(
            "eps {:<6} b {:<3} measured {:.5} bound {:.3} {}",
            r.epsilon,
            r.batch,
            r.measured,
            r.bound,
            if r.holds() { "holds" } else { "VIOLATED" }
        );
    }
    Ok(())
}
