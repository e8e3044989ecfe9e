use super::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny() -> ModelConfig {
    ModelConfig {
        input_side: 16,
        widths: vec![2, 2],
        blocks_per_stage: 1,
        classes: 2,
    }
}

fn random_batch<T: Scalar>(n: usize, side: usize, seed: u64) -> (Tensor<T>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * side * side).map(|_| T::of(rng.random())).collect();
    let labels = (0..n).map(|i| i % 2).collect();
    (Tensor::new(vec![n, 1, side, side], data).unwrap(), labels)
}

/// Which ReLU units are active, over the whole batch.
fn relu_pattern(model: &Model<f64>, batch: &Tensor<f64>) -> Vec<bool> {
    (0..batch.dims()[0]).flat_map(|i| model.relu_pattern(batch.row(i))).collect()
}

/// Largest relative gap between analytic and central-difference gradients,
/// and how many coordinates were skipped because the probe crossed a ReLU kink.
fn gradcheck(model: &mut Model<f64>, batch: &Tensor<f64>, labels: &[usize], decay: f64) -> (f64, usize, usize) {
    let h = 1e-4;
    let (_, grads) = model.loss_and_grad(batch, labels, decay).unwrap();
    let mut worst = 0.0f64;
    let (mut skipped, mut total) = (0, 0);
    for p in 0..model.params().len() {
        for i in 0..model.params()[p].len() {
            total += 1;
            let orig = model.params()[p].data()[i];
            model.params_mut()[p].data_mut()[i] = orig + h;
            let plus = model.loss_and_grad(batch, labels, decay).unwrap().0;
            let pattern_plus = relu_pattern(model, batch);
            model.params_mut()[p].data_mut()[i] = orig - h;
            let minus = model.loss_and_grad(batch, labels, decay).unwrap().0;
            let pattern_minus = relu_pattern(model, batch);
            model.params_mut()[p].data_mut()[i] = orig;
            if pattern_plus != pattern_minus {
                skipped += 1;
                continue;
            }
            model.params_mut()[p].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let analytic = grads[p].data()[i];
            let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    (worst, skipped, total)
}

#[test]
fn gradients_match_central_differences() {
    let mut model = Model::<f64>::new(tiny(), 3).unwrap();
    // nonzero biases so every parameter path is exercised
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for p in model.params_mut() {
        for v in p.data_mut() {
            *v += rng.random_range(-0.1..0.1);
        }
    }
    let (batch, labels) = random_batch::<f64>(4, 16, 1);
    let (worst, skipped, total) = gradcheck(&mut model, &batch, &labels, 1e-4);
    assert!(worst < 1e-4, "max relative error {worst}");
    assert!(skipped * 4 < total, "{skipped} of {total} probes crossed a kink");
}

#[test]
fn output_shape_and_bias_only_logits() {
    let mut model = Model::<f64>::new(tiny(), 1).unwrap();
    let (batch, _) = random_batch::<f64>(5, 16, 2);
    assert_eq!(model.forward(&batch).unwrap().dims(), &[5, 2]);
    let fc_bias = model.params().len() - 1;
    for p in model.params_mut() {
        p.data_mut().fill(0.0);
    }
    model.params_mut()[fc_bias].data_mut().copy_from_slice(&[0.25, -1.5]);
    let out = model.forward(&batch).unwrap();
    for i in 0..5 {
        assert_eq!(out.row(i), &[0.25, -1.5]);
    }
    let (wrong, _) = random_batch::<f64>(2, 8, 2);
    assert!(matches!(model.forward(&wrong), Err(CnnError::ShapeMismatch { .. })));
}

#[test]
fn uniform_logits_cost_ln2_plus_decay() {
    let mut model = Model::<f64>::new(tiny(), 1).unwrap();
    let fc_w = model.params().len() - 2;
    model.params_mut()[fc_w].data_mut().fill(0.0);
    let (batch, labels) = random_batch::<f64>(6, 16, 3);
    let decay = 1e-3;
    let (loss, _) = model.loss_and_grad(&batch, &labels, decay).unwrap();
    let want = std::f64::consts::LN_2 + model.decay_term(decay);
    assert!((loss - want).abs() < 1e-12);
}

#[test]
fn weight_decay_gradient_is_lambda_theta() {
    let mut model = Model::<f64>::new(tiny(), 4).unwrap();
    let n = model.params().len();
    model.params_mut()[n - 2].data_mut().fill(0.0);
    model.params_mut()[n - 1].data_mut().fill(0.3);
    // one input under both labels: every data gradient cancels
    let (one, _) = random_batch::<f64>(1, 16, 4);
    let batch = Tensor::new(vec![2, 1, 16, 16], [one.data(), one.data()].concat()).unwrap();
    let decay = 0.01;
    let (_, grads) = model.loss_and_grad(&batch, &[0, 1], decay).unwrap();
    for (g, p) in grads.iter().zip(model.params()) {
        for (gi, pi) in g.data().iter().zip(p.data()) {
            assert!((gi - decay * pi).abs() < 1e-15);
        }
    }
}

#[test]
fn loss_ignores_batch_order() {
    let model = Model::<f64>::new(tiny(), 5).unwrap();
    let (batch, labels) = random_batch::<f64>(6, 16, 5);
    let (a, _) = model.loss_and_grad(&batch, &labels, 1e-4).unwrap();
    let perm = [3, 0, 5, 1, 4, 2];
    let data: Vec<f64> = perm.iter().flat_map(|&i| batch.row(i).to_vec()).collect();
    let shuffled = Tensor::new(vec![6, 1, 16, 16], data).unwrap();
    let labels2: Vec<usize> = perm.iter().map(|&i| labels[i]).collect();
    let (b, _) = model.loss_and_grad(&shuffled, &labels2, 1e-4).unwrap();
    assert!((a - b).abs() < 1e-9);
}

#[test]
fn adam_single_steps() {
    let mut model = Model::<f64>::new(tiny(), 6).unwrap();
    let before = model.clone();
    model.adam_step(&model.zero_grads(), 1e-3);
    assert_eq!(model.params(), before.params());
    assert_eq!(model.step(), 1);

    let mut model = before.clone();
    let lr = 1e-3;
    let grads: Vec<Vec<f64>> = model.params().iter().map(|p| vec![0.37; p.len()]).collect();
    model.adam_step(&grads, lr);
    let expect = lr * 0.37 / (0.37 + ADAM_EPS);
    for (after, prior) in model.params().iter().zip(before.params()) {
        for (a, b) in after.data().iter().zip(prior.data()) {
            assert!(((b - a) - expect).abs() < 1e-15);
        }
    }
    let mut twin = before.clone();
    twin.adam_step(&grads, lr);
    assert_eq!(twin, model);
}

#[test]
fn plateau_drops_every_patience_plus_one_epochs() {
    let mut sched = Plateau::new(1.0, 0.1, 5, 1e-4);
    let lrs: Vec<f64> = (0..20).map(|_| sched.step(0.7)).collect();
    // epoch 0 sets the reference; epochs 1..=6 are the six bad ones
    let drops: Vec<usize> = (1..20).filter(|&i| lrs[i] < lrs[i - 1]).collect();
    assert_eq!(drops, vec![6, 12, 18]);
    assert!((lrs[19] - 1e-3).abs() < 1e-15);
    // improvements above the relative threshold reset the counter
    let mut sched = Plateau::new(1.0, 0.1, 2, 1e-4);
    for m in [1.0, 0.9, 0.8, 0.7, 0.6] {
        assert_eq!(sched.step(m), 1.0);
    }
    assert_eq!(sched.step(0.59999), 1.0);
}

#[test]
fn softmax_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let z: Vec<f64> = (0..2).map(|_| rng.random_range(-30.0..30.0)).collect();
        let p = softmax(&z);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0) || z[0] - z[1] > 30.0 || z[1] - z[0] > 30.0);
        let shifted: Vec<f64> = z.iter().map(|v| v + 123.0).collect();
        let q = softmax(&shifted);
        assert_eq!(p[0] > p[1], q[0] > q[1]);
    }
    assert!((log_sum_exp(&[1000.0f64, 1000.0]) - (1000.0 + std::f64::consts::LN_2)).abs() < 1e-9);
}

#[test]
fn checkpoint_roundtrip_is_bit_exact() {
    let cfg = ModelConfig {
        input_side: 16,
        widths: vec![3, 4],
        blocks_per_stage: 2,
        classes: 2,
    };
    let mut model = Model::<f32>::new(cfg, 9).unwrap();
    let (batch, labels) = random_batch::<f32>(3, 16, 9);
    let (_, grads) = model.loss_and_grad(&batch, &labels, 1e-4).unwrap();
    let grads: Vec<Vec<f32>> = grads.into_iter().map(Tensor::into_data).collect();
    model.adam_step(&grads, 1e-3);
    let mut bytes = Vec::new();
    write_checkpoint(&model, &mut bytes).unwrap();
    let back: Model<f32> = read_checkpoint(&bytes[..]).unwrap();
    assert_eq!(back, model);
    let (a, b) = (model.forward(&batch).unwrap(), back.forward(&batch).unwrap());
    assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    let mut again = Vec::new();
    write_checkpoint(&back, &mut again).unwrap();
    assert_eq!(again, bytes);

    assert!(read_checkpoint::<f64, _>(&bytes[..]).is_err());
    assert!(read_checkpoint::<f32, _>(&bytes[..bytes.len() - 1]).is_err());
}

#[test]
fn config_validation() {
    let mut cfg = ModelConfig::default();
    assert!(cfg.validate().is_ok());
    cfg.input_side = 98;
    assert!(cfg.validate().is_err());
    cfg.input_side = 96;
    cfg.widths.clear();
    assert!(Model::<f32>::new(cfg, 0).is_err());
}

fn memorization_set(n: usize, side: usize) -> Dataset<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let images: Vec<Image<f32>> = (0..n)
        .map(|_| Image::from_fn(side, side, |_, _| if rng.random_bool(0.5) { 1.0 } else { 0.0 }))
        .collect();
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
    Dataset::from_images(&images, &labels, side)
}

fn small_cfg() -> ModelConfig {
    ModelConfig {
        input_side: 24,
        widths: vec![8, 16],
        blocks_per_stage: 1,
        classes: 2,
    }
}

#[test]
fn memorizes_32_random_samples() {
    let data = memorization_set(32, 24);
    let cfg = TrainConfig {
        epochs: 200,
        batch_size: 8,
        lr: 3e-3,
        ..TrainConfig::paper(1)
    };
    let (model, history) = train(&small_cfg(), &cfg, &data, &data, |_| {}).unwrap();
    let (_, acc) = evaluate(&model, &data);
    assert_eq!(acc, 1.0, "best epoch {}", history.best_epoch);
}

#[test]
fn training_is_deterministic() {
    let data = memorization_set(16, 24);
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 4,
        ..TrainConfig::desk(2)
    };
    let (a, ha) = train(&small_cfg(), &cfg, &data, &data, |_| {}).unwrap();
    let (b, hb) = train(&small_cfg(), &cfg, &data, &data, |_| {}).unwrap();
    assert_eq!(a, b);
    assert_eq!(ha, hb);
    let (c, _) = train(&small_cfg(), &TrainConfig { seed: 3, ..cfg }, &data, &data, |_| {}).unwrap();
    assert_ne!(a, c);
}

#[test]
fn diverged_weights_abort_training() {
    let data = memorization_set(4, 24);
    let mut model = Model::<f32>::new(small_cfg(), 0).unwrap();
    let n = model.params().len();
    model.params_mut()[n - 1].data_mut()[0] = f32::NAN;
    let err = train_model(model, &TrainConfig::desk(0), &data, &data, |_| {}).unwrap_err();
    assert!(matches!(err, CnnError::NonFiniteLoss { epoch: 0, .. }), "{err}");
}

#[test]
fn prepare_input_keeps_binary_images_binary() {
    let img = Image::<f64>::from_fn(29, 29, |x, y| ((x / 3 + y / 2) % 2) as f64);
    let v: Vec<f32> = prepare_input(&img, 96);
    assert_eq!(v.len(), 96 * 96);
    assert!(v.iter().all(|&p| p == 0.0 || p == 1.0));
    let gray = img.map(|p| 0.2 + 0.6 * p);
    let g: Vec<f32> = prepare_input(&gray, 96);
    assert!(g.iter().any(|&p| p > 0.21 && p < 0.79));
}
