//! Seeded synthetic networks and sampling helpers used by the benchmarks,
//! the oracles and the test suites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::network::{Activation, Layer, Matrix, Network};

pub type SeededRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Fully connected ReLU network with uniform He-style initialisation.
pub fn random_network(inputs: usize, hidden: &[usize], outputs: usize, seed: u64) -> Network {
    let mut rng = rng(seed);
    let mut widths = vec![inputs];
    widths.extend_from_slice(hidden);
    widths.push(outputs);
    let layers = widths
        .windows(2)
        .enumerate()
        .map(|(l, w)| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let scale = (6.0 / fan_in as f64).sqrt();
            let mut weights = Matrix::zeros(fan_out, fan_in);
            for i in 0..fan_out {
                for j in 0..fan_in {
                    weights.set(i, j, rng.gen_range(-scale..scale));
                }
            }
            let bias = (0..fan_out).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let activation = if l + 2 == widths.len() {
                Activation::Linear
            } else {
                Activation::Relu
            };
            Layer::new(weights, bias, activation).expect("consistent shapes")
        })
        .collect();
    Network::new(layers).expect("valid synthetic network")
}

pub fn uniform_vec(rng: &mut impl Rng, lower: &[f64], upper: &[f64]) -> Vec<f64> {
    lower
        .iter()
        .zip(upper)
        .map(|(&lo, &hi)| if hi > lo { rng.gen_range(lo..=hi) } else { lo })
        .collect()
}

/// Target produced by the network itself at a random box point, so that it
/// lies in the reachable set.
pub fn reachable_target(net: &Network, lower: &[f64], upper: &[f64], seed: u64) -> Vec<f64> {
    let mut rng = rng(seed);
    let x = uniform_vec(&mut rng, lower, upper);
    net.output(&x).expect("dimensions match")
}
