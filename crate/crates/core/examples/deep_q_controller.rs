//! The per-node controller on a toy two-action problem: the better action
//! depends on the sign of the first state coordinate. The controller should
//! pick it far more often once exploration has annealed.
//!
//! `cargo run --release --example deep_q_controller`

use dpsgd::deep_q::{Action, ControllerConfig, QController, Transition};
use dpsgd::linalg::RngStream;

fn main() -> dpsgd::Result<()> {
    let dim = 4;
    let cfg = ControllerConfig {
        anneal_steps: 500,
        ..ControllerConfig::default()
    };
    let mut rng = RngStream::new(3);
    let mut ctl = QController::new(dim, cfg, &mut rng);
    let decisions = 2000;
    let mut window_hits = 0;
    println!("{:>9} {:>9} {:>10}", "decision", "explore", "hit rate");
    for step in 0..decisions {
        let x = 2.0 * rng.uniform() - 1.0;
        let state = vec![x, 0.1 * rng.standard_normal(), 0.5, 1.0];
        let explore = ctl.exploration();
        let d = ctl.select_action(&state, &mut rng)?;
        let best = if x > 0.0 { Action::Global } else { Action::Local };
        let reward = if d.action == best { 1.0 } else { -1.0 };
        window_hits += usize::from(d.action == best);
        ctl.record_and_train(
            Transition {
                state,
                action: d.action,
                reward,
                next_state: Vec::new(),
                terminal: true,
            },
            &mut rng,
        )?;
        if (step + 1) % 250 == 0 {
            println!("{:>9} {:>9.3} {:>10.3}", step + 1, explore, window_hits as f64 / 250.0);
            window_hits = 0;
        }
    }
    let q_pos = ctl.online().forward(&[0.8, 0.0, 0.5, 1.0])?;
    let q_neg = ctl.online().forward(&[-0.8, 0.0, 0.5, 1.0])?;
    println!("Q(x=+0.8) local {:.3} global {:.3}", q_pos[0], q_pos[1]);
    println!("Q(x=-0.8) local {:.3} global {:.3}", q_neg[0], q_neg[1]);
    println!("{} controller updates, target refreshed every {}", ctl.train_steps(), cfg.sync_period);
    Ok(())
}
