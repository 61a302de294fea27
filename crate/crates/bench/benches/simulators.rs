use criterion::{criterion_group, criterion_main, Criterion};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use yoso_core::convert::{quantize_network, QuantSpec};
use yoso_core::sim::{map_network, HwConfig, ProgramImage, System};
use yoso_core::ttfs::{
    itl_encode_continuous, itl_encode_discrete, network_forward_continuous, network_forward_discrete, BiasMode,
    EncodingConfig, TtfsLayer, TtfsNetwork,
};

fn mlp(rng: &mut ChaCha8Rng, widths: &[usize]) -> TtfsNetwork {
    let layers = widths
        .windows(2)
        .map(|w| {
            let lim = (6.0 / (w[0] + w[1]) as f64).sqrt();
            TtfsLayer {
                weights: Array2::from_shape_simple_fn((w[0], w[1]), || rng.gen_range(-lim..lim * 1.5)),
                biases: Array1::zeros(w[1]),
                threshold: 1.0,
                quant: None,
            }
        })
        .collect();
    TtfsNetwork::new(layers).unwrap()
}

fn image(rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..784).map(|_| if rng.gen_bool(0.2) { rng.gen_range(0.1..1.0) } else { 0.0 }).collect()
}

fn bench(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let net = mlp(&mut rng, &[784, 300, 300, 10]);
    let x = image(&mut rng);
    let enc = EncodingConfig { t_max: 1.0, t_in: 4, t_total: 30 };

    let input = itl_encode_continuous(&x, &enc).unwrap();
    c.bench_function("continuous_784_300_300_10", |b| {
        b.iter(|| network_forward_continuous(&net, &input, Some(enc.window_end())).unwrap())
    });

    let q = quantize_network(&net, &QuantSpec::default()).unwrap();
    let fixed = q.to_fixed(enc.ticks_per_unit(), BiasMode::Slope).unwrap();
    let ticks = itl_encode_discrete(&x, &enc).unwrap();
    c.bench_function("discrete_i16_784_300_300_10", |b| {
        b.iter(|| network_forward_discrete(&fixed, &ticks, enc.t_total, false).unwrap())
    });

    let hw = HwConfig::default();
    let image = ProgramImage::build(&fixed, map_network(&fixed, &hw, false).unwrap(), &hw).unwrap();
    let mut sys = System::new(hw).unwrap();
    sys.program(&image).unwrap();
    c.bench_function("hw_inference_784_300_300_10", |b| {
        b.iter(|| sys.run_inference(&ticks, enc.t_total, false).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = bench
}
criterion_main!(benches);
