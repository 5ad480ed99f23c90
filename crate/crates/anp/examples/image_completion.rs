//! 2D regression on the synthetic shapes dataset: train briefly, then
//! reconstruct an image from its top half and map an 8x8 context onto a
//! 16x16 grid (resolution mapping). Prints the images side by side.
//!
//! Run with:
//!     cargo run --release --example image_completion

use anp::attention::AttentionKind;
use anp::config::{Dataset, TrainConfig};
use anp::image::{image_to_regression, make_grid, synthetic_shapes, top_half_episode, write_idx, y_to_intensity};
use anp::rng::Stream;
use anp::train::Trainer;

fn shade(intensity: u8) -> char {
    match intensity / 52 {
        0 => ' ',
        1 => '.',
        2 => ':',
        3 => 'o',
        _ => '#',
    }
}

fn print_rows(blocks: &[(&str, Vec<Vec<u8>>)]) {
    for (label, _) in blocks {
        print!("{label:<20}");
    }
    println!();
    let height = blocks[0].1.len();
    for r in 0..height {
        for (_, img) in blocks {
            let row: String = img[r].iter().map(|&p| shade(p)).collect();
            print!("{row:<20}");
        }
        println!();
    }
}

fn main() {
    let dir = std::env::temp_dir().join("anp-image-example");
    std::fs::create_dir_all(&dir).unwrap();
    let idx = dir.join("shapes.idx");
    let dataset = synthetic_shapes(64, 5);
    write_idx(&idx, &dataset).unwrap();

    let config = TrainConfig {
        dataset: Dataset::Image {
            path: idx.to_string_lossy().into_owned(),
        },
        attention: AttentionKind::MultiHead { heads: 4 },
        d: 32,
        self_attention_layers: 1,
        batch_size: 16,
        learning_rate: 5e-4,
        iterations: 2_000,
        eval_interval: 500,
        checkpoint_interval: 0,
        seed: 3,
    };
    println!("training a stacked-multihead ANP on 8x8 shapes for 2,000 iterations...");
    let mut trainer = Trainer::new(config).unwrap();
    trainer
        .run(|row| println!("iter {:>5}  loss {:>8.4}", row.iteration, row.train_loss))
        .unwrap();

    // completion from the top half of an unseen-at-random image
    let image = 0;
    let ep = top_half_episode(&dataset, image).unwrap();
    let pred = &trainer.model.predict(&ep.x_c, &ep.y_c, &ep.x_t, 1, &mut Stream::new(9))[0];
    let as_image = |values: &dyn Fn(usize) -> u8| -> Vec<Vec<u8>> {
        (0..8).map(|r| (0..8).map(|c| values(r * 8 + c)).collect()).collect()
    };
    let truth = as_image(&|i| dataset.pixel(image, i / 8, i % 8));
    let completed = as_image(&|i| y_to_intensity(pred.mean.get(i, 0)));
    let top_only = as_image(&|i| if i < 32 { dataset.pixel(image, i / 8, i % 8) } else { 0 });

    println!("\ncompletion from the top half:\n");
    print_rows(&[("context (top half)", top_only), ("model mean", completed), ("ground truth", truth)]);

    // resolution mapping: full 8x8 grid as context, 16x16 grid as target
    let all: Vec<usize> = (0..64).collect();
    let (x_c, y_c) = image_to_regression(&dataset, image, &all).unwrap();
    let x_t = make_grid(16, 16);
    let up = &trainer.model.predict(&x_c, &y_c, &x_t, 1, &mut Stream::new(10))[0];
    let upscaled: Vec<Vec<u8>> = (0..16)
        .map(|r| (0..16).map(|c| y_to_intensity(up.mean.get(r * 16 + c, 0))).collect())
        .collect();
    println!("\n8x8 context mapped onto a 16x16 grid:\n");
    print_rows(&[("16x16 prediction", upscaled)]);
}
