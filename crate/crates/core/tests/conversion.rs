use std::sync::OnceLock;

use spikepack_core::converter::{
    ann_accuracy, ann_forward, calibrate, clamped_relaxed_forward, convert, train_ann, AnnModel,
};
use spikepack_core::dataset::{swirl3, Dataset};
use spikepack_core::network::{accuracy, argmax, network_forward};
use spikepack_core::training::TrainHyper;

struct Toy {
    ann: AnnModel,
    calib: Dataset,
    test: Dataset,
}

fn toy() -> &'static Toy {
    static TOY: OnceLock<Toy> = OnceLock::new();
    TOY.get_or_init(|| {
        let train = swirl3(10_000, 21);
        let test = swirl3(1500, 22);
        let init = AnnModel::mlp(&[2, 64, 64, 3], 21).unwrap();
        let hyper = TrainHyper {
            lr: 0.1,
            epochs: 30,
            batch: 32,
            seed: 21,
        };
        let (ann, _) = train_ann(&init, &train, &hyper).unwrap();
        let calib = train.calibration_split(0.1, None);
        Toy { ann, calib, test }
    })
}

#[test]
fn ann_learns_the_task() {
    let t = toy();
    assert!(ann_accuracy(&t.ann, &t.test).unwrap() >= 0.97);
}

#[test]
fn accuracy_rises_with_window_and_reaches_ann_level() {
    let t = toy();
    let ann_acc = ann_accuracy(&t.ann, &t.test).unwrap();
    let mut prev = 0.0;
    for steps in [2, 4, 6, 8] {
        let report = calibrate(&t.ann, &t.calib.features, steps, 2.0, 99.9).unwrap();
        let net = convert(&t.ann, &report, steps, 2.0).unwrap();
        let acc = accuracy(&net, &t.test.features, &t.test.labels).unwrap();
        assert!(acc >= prev, "T={steps}: {acc} after {prev}");
        prev = acc;
    }
    assert!((ann_acc - prev).abs() < 0.01);
}

#[test]
fn single_step_needs_a_lower_clipping_percentile() {
    // One step gives one level per channel; clipping at the median keeps the
    // level inside the bulk of the activations.
    let t = toy();
    let report = calibrate(&t.ann, &t.calib.features, 1, 2.0, 50.0).unwrap();
    let net = convert(&t.ann, &report, 1, 2.0).unwrap();
    let acc = accuracy(&net, &t.test.features, &t.test.labels).unwrap();
    assert!(acc > 1.0 / 3.0 + 0.1, "T=1 accuracy {acc}");
}

#[test]
fn calibration_overflow_stays_small() {
    let t = toy();
    let report = calibrate(&t.ann, &t.calib.features, 8, 2.0, 99.9).unwrap();
    assert_eq!(report.samples, 1000);
    assert!(report.overflow_fraction <= 0.001, "{}", report.overflow_fraction);
    for layer in &report.layers {
        for c in &layer.channels {
            assert!(c.theta > 0.0);
            if !c.fallback {
                assert!(c.percentile_value <= c.observed_max);
            }
        }
    }
}

#[test]
fn spiking_predictions_agree_with_ann_at_eight_steps() {
    let t = toy();
    let report = calibrate(&t.ann, &t.calib.features, 8, 2.0, 99.9).unwrap();
    let net = convert(&t.ann, &report, 8, 2.0).unwrap();
    let agree = t
        .test
        .features
        .iter()
        .filter(|x| argmax(&ann_forward(&t.ann, x).unwrap()) == network_forward(x, &net).unwrap().predicted_class())
        .count();
    assert!(agree as f64 / t.test.len() as f64 >= 0.99, "{agree}/{}", t.test.len());
}

#[test]
fn logit_error_shrinks_as_window_grows() {
    let t = toy();
    let mut prev = f64::INFINITY;
    for steps in [2, 4, 8, 12] {
        let report = calibrate(&t.ann, &t.calib.features, steps, 2.0, 99.9).unwrap();
        let net = convert(&t.ann, &report, steps, 2.0).unwrap();
        let mut err = 0.0;
        let mut count = 0usize;
        for x in t.test.features.iter().take(500) {
            let snn = network_forward(x, &net).unwrap().logits;
            let reference = clamped_relaxed_forward(x, &net).unwrap();
            err += snn.iter().zip(&reference).map(|(a, b)| (a - b).abs()).sum::<f64>();
            count += snn.len();
        }
        let mean = err / count as f64;
        assert!(mean < prev, "T={steps}: {mean} after {prev}");
        prev = mean;
    }
}

#[test]
fn calibration_is_deterministic() {
    let t = toy();
    let a = calibrate(&t.ann, &t.calib.features, 6, 2.0, 99.9).unwrap();
    let b = calibrate(&t.ann, &t.calib.features, 6, 2.0, 99.9).unwrap();
    assert_eq!(a, b);
    assert_eq!(convert(&t.ann, &a, 6, 2.0).unwrap(), convert(&t.ann, &b, 6, 2.0).unwrap());
}

#[test]
fn non_binary_tau_conversion_runs() {
    let t = toy();
    let report = calibrate(&t.ann, &t.calib.features, 6, 1.5, 99.9).unwrap();
    let net = convert(&t.ann, &report, 6, 1.5).unwrap();
    let acc = accuracy(&net, &t.test.features, &t.test.labels).unwrap();
    assert!(acc > 0.9, "{acc}");
}
