//! Mini-batch training loop over pre-sampled crops.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::adam::Adam;
use crate::autograd::Tape;
use crate::dataset::{sample_crops, LoadedImage};
use crate::engine::Engine;
use crate::model::{mse_density_loss, CtnModel};
use crate::params::Gradients;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub crop: usize,
    pub crops_per_image: usize,
    pub seed: u64,
    /// Optional hard cap on optimizer steps across all epochs.
    pub max_iterations: Option<usize>,
}

/// One training pair: normalized image crop and its density target.
struct Sample {
    input: Tensor,
    target: Tensor,
}

/// Per-iteration mean batch loss, in optimizer-step order.
pub struct TrainLog {
    pub losses: Vec<f64>,
}

impl TrainLog {
    pub fn first(&self) -> f64 {
        *self.losses.first().expect("no iterations ran")
    }

    pub fn last(&self) -> f64 {
        *self.losses.last().expect("no iterations ran")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,loss\n");
        for (i, loss) in self.losses.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, loss));
        }
        out
    }
}

/// Trains in place. Crops are sampled once up front (deterministic in
/// `seed`), then visited in a reshuffled order each epoch; every optimizer
/// step averages gradients over one batch.
pub fn train(
    model: &mut CtnModel,
    data: &[LoadedImage],
    settings: &TrainSettings,
    mut on_iteration: impl FnMut(usize, f64),
) -> TrainLog {
    assert!(!data.is_empty(), "train: no images");
    assert!(settings.batch > 0, "train: batch must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);

    let mut samples: Vec<Sample> = Vec::new();
    for img in data {
        for (crop, target) in sample_crops(
            &img.image,
            &img.density,
            settings.crop,
            settings.crops_per_image,
            &mut rng,
        ) {
            samples.push(Sample {
                input: crate::image::normalize(&crop),
                target: target.to_tensor(),
            });
        }
    }

    let mut adam = Adam::new(settings.lr, &model.params);
    let mut losses = Vec::new();
    let mut iteration = 0usize;
    'epochs: for _ in 0..settings.epochs {
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut rng);
        for chunk in order.chunks(settings.batch) {
            let mut grads = Gradients::zeros(&model.params);
            let mut batch_loss = 0.0;
            for &idx in chunk {
                let sample = &samples[idx];
                let mut tape = Tape::new(&model.params);
                let input = tape.leaf(sample.input.clone());
                let target = tape.leaf(sample.target.clone());
                let pred = model.forward(&mut tape, &input);
                let loss = mse_density_loss(&mut tape, &pred, &target);
                batch_loss += tape.value(&loss).data()[0];
                tape.backward(loss);
                grads.add_assign(&tape.param_grads());
            }
            grads.scale(1.0 / chunk.len() as f64);
            batch_loss /= chunk.len() as f64;
            adam.step(&mut model.params, &grads);
            iteration += 1;
            losses.push(batch_loss);
            on_iteration(iteration, batch_loss);
            if settings.max_iterations.is_some_and(|cap| iteration >= cap) {
                break 'epochs;
            }
        }
    }
    TrainLog { losses }
}
