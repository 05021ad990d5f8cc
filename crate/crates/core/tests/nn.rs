mod common;

use infpos::dataset::{Dataset, DatasetHeader};
use infpos::fading::SignalType;
use infpos::nn::layers::{BatchNorm2d, Conv2d, Dense, GlobalAvgPool, MaxPool2d, Relu, Residual};
use infpos::nn::{
    build_cir_net, build_pg_net, fine_tune, mse_loss, train, Arch, CirNetConfig, Layer, LrSchedule, Mode, Model,
    PgNetConfig, Sequential, Tensor, TrainConfig,
};
use infpos::{rng, Error};
use rand::Rng;
use rand_distr::StandardNormal;

const TOL: f64 = 1e-4;

fn randn(r: &mut impl Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| r.sample(StandardNormal)).collect()).unwrap()
}

fn check_layer<L: Layer<f64>>(layer: L, x: Tensor<f64>, seed: u64) {
    let name = layer.name();
    let e = common::gradient_error(layer, x, seed);
    assert!(e < TOL, "{name}: gradient rel err {e:e}");
}

fn away_from_zero(mut t: Tensor<f64>) -> Tensor<f64> {
    for v in t.data_mut() {
        if v.abs() < 0.05 {
            *v += 0.1_f64.copysign(*v);
        }
    }
    t
}

#[test]
fn gradient_dense() {
    let mut r = rng::stream(10, &[]);
    check_layer(Dense::<f64>::new(&mut r, 5, 4, 1.0), randn(&mut r, &[3, 5]), 1);
}

#[test]
fn gradient_relu_off_kink() {
    let mut r = rng::stream(11, &[]);
    check_layer(Relu::new(), away_from_zero(randn(&mut r, &[4, 6])), 2);
}

#[test]
fn gradient_conv2d_strided_padded() {
    let mut r = rng::stream(12, &[]);
    check_layer(Conv2d::<f64>::new(&mut r, 2, 3, 3, 2, 1, true, 1.0), randn(&mut r, &[2, 2, 5, 7]), 3);
    check_layer(Conv2d::<f64>::new(&mut r, 3, 2, 1, 1, 0, false, 1.0), randn(&mut r, &[1, 3, 4, 4]), 4);
    check_layer(Conv2d::<f64>::new(&mut r, 2, 2, 7, 2, 3, false, 1.0), randn(&mut r, &[2, 2, 1, 9]), 5);
}

#[test]
fn gradient_batchnorm_train_mode() {
    let mut r = rng::stream(13, &[]);
    let mut bn = BatchNorm2d::<f64>::new(3);
    for (i, g) in bn.gamma.value.data_mut().iter_mut().enumerate() {
        *g = 0.5 + i as f64;
    }
    check_layer(bn, randn(&mut r, &[3, 3, 2, 3]), 6);
}

#[test]
fn gradient_pooling() {
    let mut r = rng::stream(14, &[]);
    check_layer(MaxPool2d::new(3, 2, 1), randn(&mut r, &[2, 2, 5, 6]), 7);
    check_layer(GlobalAvgPool::new(), randn(&mut r, &[2, 3, 2, 4]), 8);
}

#[test]
fn gradient_skip_add_with_and_without_projection() {
    let mut r = rng::stream(15, &[]);
    let body = Sequential::new().with(Dense::<f64>::new(&mut r, 4, 4, 1.0)).with(Relu::new());
    check_layer(Residual::new(body, None), randn(&mut r, &[3, 4]), 9);

    let body = Sequential::new()
        .with(Conv2d::<f64>::new(&mut r, 2, 3, 3, 2, 1, false, 1.0))
        .with(BatchNorm2d::new(3));
    let shortcut = Sequential::new().with(Conv2d::<f64>::new(&mut r, 2, 3, 1, 2, 0, false, 1.0));
    check_layer(Residual::new(body, Some(shortcut)), randn(&mut r, &[2, 2, 4, 4]), 10);
}

#[test]
fn gradient_three_layer_net() {
    let mut r = rng::stream(16, &[]);
    let net = Sequential::new()
        .with(Dense::<f64>::new(&mut r, 6, 8, 1.0))
        .with(Relu::new())
        .with(Dense::new(&mut r, 8, 8, 1.0))
        .with(Relu::new())
        .with(Dense::new(&mut r, 8, 2, 1.0));
    check_layer(net, randn(&mut r, &[5, 6]), 11);
}

#[test]
fn gradient_small_cir_net() {
    let cfg = CirNetConfig { n_bs: 2, n_taps: 16, base_width: 2, blocks: [1, 1, 1, 1] };
    let mut r = rng::stream(17, &[]);
    let mut net = build_cir_net::<f64, _>(&cfg, &mut r).unwrap();
    // Non-zero last-BN gammas so every branch contributes.
    for p in net.params_mut() {
        if p.value.data().iter().all(|&v| v == 0.0) && p.value.shape().len() == 1 {
            p.value.fill(0.7);
        }
    }
    check_layer(net, randn(&mut r, &[3, 2, 2, 16]), 12);
}

#[test]
fn pg_param_counts() {
    let mut r = rng::stream(1, &[]);
    let net = build_pg_net::<f32, _>(&PgNetConfig::default(), &mut r).unwrap();
    assert_eq!(net.n_params(), 104_162);
    let cfg8 = PgNetConfig { input_dim: 8, ..Default::default() };
    assert_eq!(build_pg_net::<f32, _>(&cfg8, &mut r).unwrap().n_params(), 102_962);
    assert_eq!(cfg8.param_count(), 102_962);
}

#[test]
fn cir_param_counts() {
    let full = CirNetConfig::default();
    let n = full.param_count();
    assert!((n as f64 / 11.1e6 - 1.0).abs() < 0.02, "{n}");
    let mut r = rng::stream(1, &[]);
    assert_eq!(build_cir_net::<f32, _>(&full, &mut r).unwrap().n_params(), n);
    let quarter = CirNetConfig::scaled(18, 256, 0.25);
    assert_eq!(quarter.base_width, 16);
    assert!(quarter.param_count() < 1_000_000);
}

#[test]
fn cir_head_emits_two_outputs() {
    let mut r = rng::stream(2, &[]);
    for (n_bs, n_taps) in [(1, 256), (18, 64), (3, 8)] {
        let cfg = CirNetConfig { n_bs, n_taps, base_width: 4, blocks: [1, 1, 1, 1] };
        let net = build_cir_net::<f32, _>(&cfg, &mut r).unwrap();
        let y = net.infer(&Tensor::zeros(&[2, 2, n_bs, n_taps])).unwrap();
        assert_eq!(y.shape(), &[2, 2]);
    }
    let tiny = CirNetConfig { n_bs: 1, n_taps: 4, base_width: 4, blocks: [1, 1, 1, 1] };
    assert!(build_cir_net::<f32, _>(&tiny, &mut r).is_err());
}

#[test]
fn zero_weights_give_output_bias() {
    let mut r = rng::stream(3, &[]);
    let mut net = build_pg_net::<f64, _>(&PgNetConfig::default(), &mut r).unwrap();
    let n = net.params().len();
    for (i, p) in net.params_mut().into_iter().enumerate() {
        p.value.fill(0.0);
        if i == n - 1 {
            p.value.data_mut().copy_from_slice(&[0.25, -0.5]);
        }
    }
    let y = net.infer(&randn(&mut r, &[4, 18])).unwrap();
    for row in y.data().chunks(2) {
        assert_eq!(row, &[0.25, -0.5]);
    }
}

#[test]
fn mse_values() {
    let p = Tensor::from_vec(&[1, 2], vec![4.0f64, 6.0]).unwrap();
    let l = Tensor::from_vec(&[1, 2], vec![1.0, 2.0]).unwrap();
    let (loss, grad) = mse_loss(&p, &l).unwrap();
    assert_eq!(loss, 12.5);
    assert_eq!(grad.data(), &[3.0, 4.0]);
    assert_eq!(mse_loss(&p, &p).unwrap().0, 0.0);
    assert!(mse_loss(&p, &Tensor::zeros(&[2, 1])).is_err());
}

#[test]
fn backward_before_forward_is_an_error() {
    let mut r = rng::stream(4, &[]);
    let mut d = Dense::<f32>::new(&mut r, 3, 2, 1.0);
    assert!(matches!(d.backward(&Tensor::zeros(&[1, 2])), Err(Error::BackwardBeforeForward(_))));
    d.forward(&Tensor::zeros(&[1, 3]), Mode::Train).unwrap();
    d.backward(&Tensor::zeros(&[1, 2])).unwrap();
    assert!(d.backward(&Tensor::zeros(&[1, 2])).is_err());
}

#[test]
fn gradients_are_deterministic_and_stationary_at_optimum() {
    let mut r = rng::stream(5, &[]);
    let x = randn(&mut r, &[8, 3]);
    let mut a = Dense::<f64>::new(&mut rng::stream(6, &[]), 3, 2, 1.0);
    let mut b = Dense::<f64>::new(&mut rng::stream(6, &[]), 3, 2, 1.0);
    let ya = a.forward(&x, Mode::Train).unwrap();
    let yb = b.forward(&x, Mode::Train).unwrap();
    let target = randn(&mut r, &[8, 2]);
    a.backward(&mse_loss(&ya, &target).unwrap().1).unwrap();
    b.backward(&mse_loss(&yb, &target).unwrap().1).unwrap();
    assert_eq!(a.weight.grad, b.weight.grad);

    // Targets produced by the layer itself: the least-squares optimum.
    let mut c = Dense::<f64>::new(&mut rng::stream(7, &[]), 3, 2, 1.0);
    let target = c.infer(&x).unwrap();
    let y = c.forward(&x, Mode::Train).unwrap();
    c.backward(&mse_loss(&y, &target).unwrap().1).unwrap();
    assert!(c.weight.grad.data().iter().chain(c.bias.grad.data()).all(|g| g.abs() < 1e-10));
}

/// PG features that are an exact affine function of position.
fn affine_dataset(n: usize, seed: u64) -> Dataset {
    let mut r = rng::stream(seed, &[]);
    let n_bs = 4;
    let coef = [[-0.3, 0.1], [0.2, -0.4], [0.05, 0.3], [-0.1, -0.1]];
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..n {
        let (x, y) = (r.gen::<f64>() * 120.0, r.gen::<f64>() * 60.0);
        for c in &coef {
            features.push((-60.0 + c[0] * x + c[1] * y) as f32);
        }
        labels.push([x as f32, y as f32]);
    }
    let header = DatasetHeader {
        signal: SignalType::Pg,
        n_samples: n,
        n_bs,
        n_taps: 1,
        clutter: [0.6, 6.0, 2.0],
        factory_seed: seed,
        bs_mask: 0b1111,
    };
    Dataset::new(header, features, labels).unwrap()
}

fn rmse(model: &Model, d: &Dataset) -> f64 {
    let p = model.predict_dataset(d).unwrap();
    let se: f64 = p
        .iter()
        .zip(d.labels())
        .map(|(p, l)| (p[0] - l[0] as f64).powi(2) + (p[1] - l[1] as f64).powi(2))
        .sum();
    (se / d.len() as f64).sqrt()
}

#[test]
fn learns_affine_toy_mapping() {
    let d = affine_dataset(1000, 1);
    let arch = Arch::Pg(PgNetConfig { input_dim: 4, ..Default::default() });
    let mut model = Model::new(arch, 3).unwrap();
    let cfg = TrainConfig { epochs: 600, batch_size: 64, min_steps: 0, ..TrainConfig::pg() };
    let report = train(&mut model, &d, &cfg).unwrap();
    assert_eq!(report.epoch_loss.len(), 600);
    let e = rmse(&model, &d);
    assert!(e < 0.1, "rmse {e}");
}

#[test]
fn zero_epochs_leave_parameters_unchanged() {
    let d = affine_dataset(50, 2);
    let arch = Arch::Pg(PgNetConfig { input_dim: 4, ..Default::default() });
    let mut model = Model::new(arch, 4).unwrap();
    let before = model.flat_parameters();
    let cfg = TrainConfig { epochs: 0, min_steps: 0, ..TrainConfig::pg() };
    train(&mut model, &d, &cfg).unwrap();
    assert_eq!(model.flat_parameters(), before);
    fine_tune(&mut model, &d, &TrainConfig { epochs: 0, ..TrainConfig::fine_tune() }).unwrap();
    assert_eq!(model.flat_parameters(), before);
}

#[test]
fn fine_tune_requires_a_fitted_model() {
    let d = affine_dataset(20, 3);
    let mut model = Model::new(Arch::Pg(PgNetConfig { input_dim: 4, ..Default::default() }), 1).unwrap();
    assert!(fine_tune(&mut model, &d, &TrainConfig::fine_tune()).is_err());
    assert!(model.predict_dataset(&d).is_err());
}

#[test]
fn training_is_seeded_and_prediction_pure() {
    let d = affine_dataset(300, 5);
    let arch = Arch::Pg(PgNetConfig { input_dim: 4, width: 16, n_residual_layers: 2 });
    let cfg = TrainConfig { epochs: 5, batch_size: 32, seed: 9, min_steps: 0, ..TrainConfig::pg() };
    let mut a = Model::new(arch.clone(), 1).unwrap();
    let mut b = Model::new(arch.clone(), 1).unwrap();
    train(&mut a, &d, &cfg).unwrap();
    train(&mut b, &d, &cfg).unwrap();
    assert_eq!(a.flat_parameters(), b.flat_parameters());
    assert_eq!(a.predict_dataset(&d).unwrap(), a.predict_dataset(&d).unwrap());

    let mut c = Model::new(arch, 1).unwrap();
    train(&mut c, &d, &TrainConfig { seed: 10, ..cfg }).unwrap();
    assert_ne!(a.flat_parameters(), c.flat_parameters());
}

#[test]
fn divergence_is_reported() {
    let d = affine_dataset(64, 6);
    let mut model = Model::new(Arch::Pg(PgNetConfig { input_dim: 4, ..Default::default() }), 1).unwrap();
    let cfg = TrainConfig { lr: 1e30, epochs: 20, schedule: LrSchedule::Constant, min_steps: 0, ..TrainConfig::pg() };
    assert!(matches!(train(&mut model, &d, &cfg), Err(Error::Divergence { .. })));
}

#[test]
fn rejects_bad_train_config_and_mismatched_data() {
    let d = affine_dataset(10, 7);
    let mut model = Model::new(Arch::Pg(PgNetConfig::default()), 1).unwrap();
    assert!(matches!(train(&mut model, &d, &TrainConfig::pg()), Err(Error::Shape(_))));
    let mut model = Model::new(Arch::Pg(PgNetConfig { input_dim: 4, ..Default::default() }), 1).unwrap();
    assert!(train(&mut model, &d, &TrainConfig { lr: 0.0, min_steps: 0, ..TrainConfig::pg() }).is_err());
    assert!(train(&mut model, &d, &TrainConfig { batch_size: 0, min_steps: 0, ..TrainConfig::pg() }).is_err());
    assert!(model.predict(&[0.0; 7], 2).is_err());
}

#[test]
fn label_normalization_round_trips() {
    let d = affine_dataset(10, 8);
    let arch = Arch::Pg(PgNetConfig { input_dim: 4, ..Default::default() });
    let norm = infpos::nn::Normalizer::fit(&arch, &d, [120.0, 60.0]).unwrap();
    let mut r = rng::stream(8, &[]);
    for _ in 0..1000 {
        let p = [r.gen::<f64>() * 120.0, r.gen::<f64>() * 60.0];
        let q = norm.denormalize_label(norm.normalize_label(p));
        assert!((p[0] - q[0]).abs() < 1e-6 && (p[1] - q[1]).abs() < 1e-6);
    }
}

#[test]
fn checkpoint_round_trip() {
    let d = affine_dataset(100, 9);
    let arch = Arch::Pg(PgNetConfig { input_dim: 4, width: 8, n_residual_layers: 1 });
    let mut model = Model::new(arch, 11).unwrap();
    train(&mut model, &d, &TrainConfig { epochs: 2, min_steps: 0, ..TrainConfig::pg() }).unwrap();
    let bytes = model.to_bytes();
    let back = Model::from_bytes(&bytes).unwrap();
    assert_eq!(back.to_bytes(), bytes);
    assert_eq!(back.predict_dataset(&d).unwrap(), model.predict_dataset(&d).unwrap());
    assert!(Model::from_bytes(&bytes[..bytes.len() - 1]).is_err());

    let cir = Model::new(Arch::Cir(CirNetConfig { n_bs: 2, n_taps: 16, base_width: 2, blocks: [1, 1, 1, 1] }), 5).unwrap();
    let bytes = cir.to_bytes();
    assert_eq!(Model::from_bytes(&bytes).unwrap().to_bytes(), bytes);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    model.save(&path).unwrap();
    assert_eq!(Model::load(&path).unwrap().flat_parameters(), model.flat_parameters());
}
