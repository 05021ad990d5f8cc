//! Measurements shared by the channel tests and the acceptance report.
#![allow(dead_code)]

use infpos::channel::{ClutterConfig, FactoryRealization, LinkState, Position};
use infpos::config::SimConfig;
use infpos::dataset::random_positions;
use infpos::fading::{build_sample, Fingerprint, SignalType};
use infpos::nn::{Layer, Mode, Tensor};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn factory(seed: u64, clutter: ClutterConfig) -> FactoryRealization {
    FactoryRealization::new(&SimConfig::default().with_seed(seed).with_clutter(clutter)).unwrap()
}

/// Path loss written out independently of the library.
pub fn pl_oracle(d_3d: f64, fc_ghz: f64, los: bool) -> f64 {
    let pl_los = 31.84 + 21.5 * d_3d.log10() + 19.0 * fc_ghz.log10();
    if los {
        pl_los
    } else {
        pl_los.max(33.63 + 21.9 * d_3d.log10() + 20.0 * fc_ghz.log10())
    }
}

/// Largest |library - oracle| over `n` random (d, fc, state) triples.
pub fn pl_oracle_max_error(n: usize, seed: u64) -> f64 {
    let mut r = infpos::rng::stream(seed, &[]);
    (0..n)
        .map(|_| {
            let d = 1.0 + r.gen::<f64>() * 599.0;
            let fc = 0.5 + r.gen::<f64>() * 99.5;
            let los = r.gen::<bool>();
            let state = if los { LinkState::Los } else { LinkState::Nlos };
            (infpos::channel::path_loss_db(d, fc, state).unwrap() - pl_oracle(d, fc, los)).abs()
        })
        .fold(0.0, f64::max)
}

/// Largest |10 log10(sum |h|^2) - PG| in dB over at least `n_links` CIR links.
pub fn power_conservation_max_error_db(n_links: usize, seed: u64, clutter: ClutterConfig) -> (usize, f64) {
    let f = factory(seed, clutter);
    let n_pos = n_links.div_ceil(f.n_bs());
    let positions = random_positions(f.topology(), n_pos, seed).unwrap();
    let mut worst = 0.0f64;
    let mut links = 0;
    for pos in positions {
        let s = build_sample(&f, pos, SignalType::Cir).unwrap();
        let Fingerprint::Cir { n_taps, taps } = s.fingerprint else { unreachable!() };
        for (b, link) in taps.chunks(n_taps).enumerate() {
            let power: f64 = link.iter().map(|t| (t.re as f64).powi(2) + (t.im as f64).powi(2)).sum();
            let pg = f.path_gain_db(b, pos).unwrap();
            worst = worst.max((10.0 * power.log10() - pg).abs());
            links += 1;
        }
    }
    (links, worst)
}

/// Exponential correlation distance fitted to the empirical autocorrelation
/// of normalized NLoS shadow fading along both hall axes, pooled over every
/// BS of `seeds.len()` factories. Field nodes sit on a 0.5 m grid, so
/// integer-meter queries read them without interpolation.
pub fn fitted_sf_corr_distance(seeds: &[u64], max_lag: usize) -> (f64, Vec<f64>) {
    let mut sum = vec![0.0; max_lag + 1];
    let mut count = vec![0usize; max_lag + 1];
    for &seed in seeds {
        let f = factory(seed, ClutterConfig::DENSE);
        let sigma = f.large_scale().sf_sigma_nlos_db;
        let (nx, ny) = (f.topology().length as usize + 1, f.topology().width as usize + 1);
        for b in 0..f.n_bs() {
            let v: Vec<f64> = (0..ny)
                .flat_map(|y| (0..nx).map(move |x| (x, y)))
                .map(|(x, y)| f.shadow_fading_db(b, Position::new(x as f64, y as f64), LinkState::Nlos).unwrap() / sigma)
                .collect();
            let at = |x: usize, y: usize| v[y * nx + x];
            for lag in 0..=max_lag {
                for y in 0..ny {
                    for x in 0..nx - lag {
                        sum[lag] += at(x, y) * at(x + lag, y);
                        count[lag] += 1;
                    }
                }
                for x in 0..nx {
                    for y in 0..ny.saturating_sub(lag) {
                        sum[lag] += at(x, y) * at(x, y + lag);
                        count[lag] += 1;
                    }
                }
            }
        }
    }
    let rho: Vec<f64> = sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect();
    // Least squares of ln(rho / rho0) = -lag / d through the origin.
    let (mut num, mut den) = (0.0, 0.0);
    for (lag, &r) in rho.iter().enumerate().skip(1) {
        if r / rho[0] > 0.05 {
            let l = lag as f64;
            num += l * l;
            den -= l * (r / rho[0]).ln();
        }
    }
    (num / den, rho)
}

/// LoS outcome count for links at horizontal distance `d_2d` from their BS,
/// one link per BS per factory (distinct fields, so independent trials).
///
/// The fields use a 2 m grid to keep hundreds of factories cheap; `d_2d`
/// must be a multiple of it so every query lands on a node, where the
/// field marginal is exactly standard normal.
pub fn los_trials(clutter: ClutterConfig, d_2d: f64, seeds: std::ops::Range<u64>) -> (usize, usize, f64) {
    let mut cfg = SimConfig::default().with_clutter(clutter);
    cfg.large_scale.field_spacing = 2.0;
    assert_eq!(d_2d % 2.0, 0.0);
    let (mut hits, mut trials, mut p) = (0, 0, 0.0);
    for seed in seeds {
        let f = FactoryRealization::new(&cfg.clone().with_seed(seed)).unwrap();
        for b in 0..f.n_bs() {
            let bs = f.bs_positions()[b];
            let x = if bs.x + d_2d <= f.topology().length { bs.x + d_2d } else { bs.x - d_2d };
            let pos = Position::new(x, bs.y);
            p = f.los_probability(b, pos).unwrap();
            trials += 1;
            if f.los_state(b, pos).unwrap() == LinkState::Los {
                hits += 1;
            }
        }
    }
    (hits, trials, p)
}

/// Whether `hits / trials` lies in the two-sided 99% normal-approximation
/// binomial interval around `p`.
pub fn within_binomial_99(hits: usize, trials: usize, p: f64) -> (bool, f64, f64) {
    let half = 2.5758 * (p * (1.0 - p) / trials as f64).sqrt();
    let freq = hits as f64 / trials as f64;
    ((freq - p).abs() <= half, freq, half)
}

const FD_STEP: f64 = 1e-5;

/// Scalar objective `sum(w * layer(x))` with fixed random `w`.
fn objective<L: Layer<f64>>(layer: &mut L, x: &Tensor<f64>, w: &[f64]) -> f64 {
    let y = layer.forward(x, Mode::Train).unwrap();
    y.data().iter().zip(w).map(|(a, b)| a * b).sum()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 { diff } else { diff / scale }
}

/// Largest relative error between backprop and central finite differences,
/// over the input gradient and every parameter tensor.
pub fn gradient_error<L: Layer<f64>>(mut layer: L, x: Tensor<f64>, seed: u64) -> f64 {
    let mut r = infpos::rng::stream(seed, &[]);
    let y = layer.forward(&x, Mode::Train).unwrap();
    let w: Vec<f64> = (0..y.len()).map(|_| r.sample(StandardNormal)).collect();
    for p in layer.params_mut() {
        p.zero_grad();
    }
    let dx = layer.backward(&Tensor::from_vec(y.shape(), w.clone()).unwrap()).unwrap();
    let analytic: Vec<Vec<f64>> = layer.params().iter().map(|p| p.grad.data().to_vec()).collect();

    let mut numeric = vec![0.0; x.len()];
    for (i, n) in numeric.iter_mut().enumerate() {
        let mut xp = x.clone();
        xp.data_mut()[i] += FD_STEP;
        let mut xm = x.clone();
        xm.data_mut()[i] -= FD_STEP;
        *n = (objective(&mut layer, &xp, &w) - objective(&mut layer, &xm, &w)) / (2.0 * FD_STEP);
    }
    let mut worst = rel_err(dx.data(), &numeric);

    for (k, grad) in analytic.iter().enumerate() {
        let mut numeric = vec![0.0; grad.len()];
        for (i, n) in numeric.iter_mut().enumerate() {
            let orig = layer.params()[k].value.data()[i];
            layer.params_mut()[k].value.data_mut()[i] = orig + FD_STEP;
            let fp = objective(&mut layer, &x, &w);
            layer.params_mut()[k].value.data_mut()[i] = orig - FD_STEP;
            let fm = objective(&mut layer, &x, &w);
            layer.params_mut()[k].value.data_mut()[i] = orig;
            *n = (fp - fm) / (2.0 * FD_STEP);
        }
        worst = worst.max(rel_err(grad, &numeric));
    }
    worst
}
