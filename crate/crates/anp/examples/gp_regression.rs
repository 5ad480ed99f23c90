//! Train a small attentive neural process on 1D GP curves for a couple
//! of minutes, then plot its predictive mean and uncertainty on one
//! held-out episode as ASCII art.
//!
//! Run with:
//!     cargo run --release --example gp_regression

use anp::attention::AttentionKind;
use anp::config::{Dataset, TrainConfig};
use anp::gp::{sample_episode, EpisodeSpec, HyperMode};
use anp::rng::Stream;
use anp::tensor::Tensor;
use anp::train::Trainer;

fn main() {
    let config = TrainConfig {
        dataset: Dataset::GpFixed,
        attention: AttentionKind::MultiHead { heads: 4 },
        d: 32,
        self_attention_layers: 0,
        batch_size: 16,
        learning_rate: 3e-4,
        iterations: 2_000,
        eval_interval: 500,
        checkpoint_interval: 0,
        seed: 7,
    };
    let mut trainer = Trainer::new(config).unwrap();
    println!("training a d=32 multihead ANP for 2,000 iterations...");
    trainer
        .run(|row| {
            println!(
                "iter {:>5}  loss {:>7.4}  target NLL {:>7.4}",
                row.iteration, row.train_loss, row.tgt_nll
            );
        })
        .unwrap();

    // one held-out episode, predictions on a dense grid
    let spec = EpisodeSpec::gp1d(HyperMode::Fixed);
    let (ep, _) = sample_episode(&spec, &mut Stream::new(1234)).unwrap();
    let grid = Tensor::from_fn(71, 1, |i, _| -2.0 + 4.0 * i as f64 / 70.0);
    let pred = &trainer
        .model
        .predict(&ep.x_c, &ep.y_c, &grid, 1, &mut Stream::new(5))[0];

    println!("\nheld-out episode with {} context points:", ep.num_contexts());
    println!("(o = context point, - = predictive mean, : = +/- 2 std band)\n");
    let rows = 21;
    let (y_lo, y_hi) = (-2.5, 2.5);
    let to_row = |y: f64| -> i64 {
        ((y_hi - y) / (y_hi - y_lo) * (rows as f64 - 1.0)).round() as i64
    };
    let mut canvas = vec![vec![' '; 71]; rows];
    #[allow(clippy::needless_range_loop)] // `c` indexes the inner dimension of `canvas`
    for c in 0..71 {
        let mean = pred.mean.get(c, 0);
        let std = pred.std.get(c, 0);
        for (y, ch) in [(mean + 2.0 * std, ':'), (mean - 2.0 * std, ':'), (mean, '-')] {
            let r = to_row(y);
            if (0..rows as i64).contains(&r) {
                canvas[r as usize][c] = ch;
            }
        }
    }
    for i in 0..ep.num_contexts() {
        let c = ((ep.x_c.get(i, 0) + 2.0) / 4.0 * 70.0).round() as usize;
        let r = to_row(ep.y_c.get(i, 0));
        if (0..rows as i64).contains(&r) {
            canvas[r as usize][c.min(70)] = 'o';
        }
    }
    for row in canvas {
        println!("  |{}|", row.into_iter().collect::<String>());
    }
}
