//! Thompson-sampling Bayesian optimization of GP-sampled objectives,
//! comparing three surrogates: a briefly trained ANP, the exact GP
//! posterior (the oracle the objectives were drawn from), and uniform
//! random search.
//!
//! Run with:
//!     cargo run --release --example thompson_bo

use anp::attention::AttentionKind;
use anp::config::{Dataset, TrainConfig};
use anp::eval::{thompson_bo, Surrogate};
use anp::gp::{sample_curve, GpHyperparams};
use anp::rng::Stream;
use anp::tensor::Tensor;
use anp::train::Trainer;

fn main() {
    println!("training a small ANP surrogate (2,000 iterations)...");
    let config = TrainConfig {
        dataset: Dataset::GpFixed,
        attention: AttentionKind::MultiHead { heads: 4 },
        d: 32,
        self_attention_layers: 0,
        batch_size: 16,
        learning_rate: 3e-4,
        iterations: 2_000,
        eval_interval: 2_000,
        checkpoint_interval: 0,
        seed: 21,
    };
    let mut trainer = Trainer::new(config).unwrap();
    trainer.run(|_| {}).unwrap();

    let hyp = GpHyperparams::fixed();
    let grid_x = Tensor::from_fn(256, 1, |i, _| -2.0 + 4.0 * i as f64 / 255.0);
    let functions = 30;
    let iterations = 20;

    let mut objective_rng = Stream::new(500);
    let mut totals = [vec![0.0; iterations], vec![0.0; iterations], vec![0.0; iterations]];
    for f in 0..functions {
        let grid_y = sample_curve(&hyp, &grid_x, &mut objective_rng).unwrap();
        let surrogates = [
            Surrogate::Anp(&trainer.model),
            Surrogate::OracleGp(&hyp),
            Surrogate::Random,
        ];
        for (t, surrogate) in surrogates.iter().enumerate() {
            let trace = thompson_bo(surrogate, &grid_x, &grid_y, iterations, &mut Stream::new(600 + f)).unwrap();
            for (total, regret) in totals[t].iter_mut().zip(&trace.simple_regret) {
                *total += regret / functions as f64;
            }
        }
    }

    println!(
        "\nmean simple regret over {functions} GP objectives ({} grid points):\n",
        grid_x.rows()
    );
    println!("{:>5} {:>12} {:>12} {:>12}", "iter", "ANP", "oracle GP", "random");
    for i in (0..iterations).step_by(2) {
        println!(
            "{:>5} {:>12.4} {:>12.4} {:>12.4}",
            i + 1,
            totals[0][i],
            totals[1][i],
            totals[2][i]
        );
    }
}
