use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spikepack_core::dataset::gaussian_blobs;
use spikepack_core::network::{Conv2dGeometry, LayerShape, LayerSpec, NetworkSpec};
use spikepack_core::training::{
    backward, forward_with_tape, init_dense_network, relaxed_forward, train_toy, ForwardMode, TrainHyper,
};

fn random_layer(rng: &mut ChaCha8Rng, shape: LayerShape, hidden: bool, prev_theta: Option<&[f64]>) -> LayerSpec {
    let w = (0..shape.weight_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b = (0..shape.out_channels()).map(|_| rng.random_range(-0.5..0.5)).collect();
    let mut layer = LayerSpec::new(shape, w, b).unwrap();
    if hidden {
        layer.theta_out = (0..layer.shape.out_channels()).map(|_| rng.random_range(0.05..2.0)).collect();
    }
    if let Some(theta) = prev_theta {
        layer.input_scale = theta.to_vec();
    }
    layer
}

/// Random 2 or 3 layer stack, sometimes starting with a small convolution.
fn random_net(rng: &mut ChaCha8Rng) -> NetworkSpec {
    let mut layers: Vec<LayerSpec> = Vec::new();
    let first = if rng.random_bool(0.4) {
        let geom = Conv2dGeometry {
            in_channels: rng.random_range(1..=2),
            in_height: 4,
            in_width: 4,
            out_channels: rng.random_range(1..=3),
            kernel_h: 3,
            kernel_w: 3,
            stride: rng.random_range(1..=2),
            padding: rng.random_range(0..=1),
        };
        LayerShape::Conv2d(geom)
    } else {
        LayerShape::Dense {
            inputs: rng.random_range(2..=6),
            outputs: rng.random_range(2..=6),
        }
    };
    layers.push(random_layer(rng, first, true, None));
    let depth = rng.random_range(2..=3);
    for l in 1..depth {
        let inputs = layers[l - 1].output_len();
        let outputs = if l + 1 == depth { 3 } else { rng.random_range(2..=5) };
        let prev = layers[l - 1].theta_out.clone();
        let prev_spatial = layers[l - 1].shape.out_spatial();
        // Dense consumers see one channel per input neuron.
        let scale: Vec<f64> = (0..inputs).map(|i| prev[i / prev_spatial]).collect();
        let shape = LayerShape::Dense { inputs, outputs };
        layers.push(random_layer(rng, shape, l + 1 < depth, Some(&scale)));
    }
    // The dense consumer's input_scale is per input neuron; the backward pass
    // divides by the producer's per-channel θ, which is the same value.
    NetworkSpec::new(layers, 8, 2.0).unwrap()
}

fn loss(net: &NetworkSpec, x: &[f64], c: &[f64]) -> f64 {
    let z = relaxed_forward(x, net).unwrap();
    // Smooth nonlinear scalar loss: log-sum-exp plus a linear term.
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln() + z.iter().zip(c).map(|(a, b)| a * b).sum::<f64>()
}

fn loss_grad(z: &[f64], c: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().zip(c).map(|(e, c)| e / s + c).collect()
}

fn rel_err(a: f64, f: f64) -> f64 {
    (a - f).abs() / a.abs().max(f.abs()).max(1e-6)
}

#[test]
fn backward_matches_central_differences_of_relaxed_model() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let net = random_net(&mut rng);
        let x: Vec<f64> = (0..net.input_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..net.output_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let tape = forward_with_tape(&x, &net, ForwardMode::Relaxed).unwrap();
        let g = backward(&loss_grad(tape.logits(), &c), &tape, &net).unwrap();
        for l in 0..net.layers.len() {
            for k in 0..net.layers[l].weights.len() {
                let mut plus = net.clone();
                plus.layers[l].weights[k] += h;
                let mut minus = net.clone();
                minus.layers[l].weights[k] -= h;
                let fd = (loss(&plus, &x, &c) - loss(&minus, &x, &c)) / (2.0 * h);
                worst = worst.max(rel_err(g.weights[l][k], fd));
            }
            for k in 0..net.layers[l].bias.len() {
                let mut plus = net.clone();
                plus.layers[l].bias[k] += h;
                let mut minus = net.clone();
                minus.layers[l].bias[k] -= h;
                let fd = (loss(&plus, &x, &c) - loss(&minus, &x, &c)) / (2.0 * h);
                worst = worst.max(rel_err(g.bias[l][k], fd));
            }
        }
        for k in 0..x.len() {
            let mut xp = x.clone();
            xp[k] += h;
            let mut xm = x.clone();
            xm[k] -= h;
            let fd = (loss(&net, &xp, &c) - loss(&net, &xm, &c)) / (2.0 * h);
            worst = worst.max(rel_err(g.input[k], fd));
        }
    }
    assert!(worst < 1e-5, "max relative error {worst:e}");
}

#[test]
fn straight_through_training_reduces_loss_in_most_runs() {
    let data = gaussian_blobs(60, 11);
    let runs = 20;
    let mut improved = 0;
    for seed in 0..runs {
        let net = init_dense_network(&[2, 16, 2], 8, 2.0, seed).unwrap();
        let hyper = TrainHyper { lr: 0.02, epochs: 10, batch: 16, seed };
        let out = train_toy(&net, &data, &hyper).unwrap();
        if out.curve.last().unwrap().loss < out.curve[0].loss {
            improved += 1;
        }
    }
    assert!(improved as f64 / runs as f64 >= 0.95, "{improved}/{runs} runs improved");
}
