use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use yoso_core::sim::{map_network, HwConfig, ProgramImage, System};
use yoso_core::ttfs::{network_forward_discrete, BiasMode, DiscreteLayer, DiscreteNetwork};
use yoso_core::SpikeTickVector;

fn random_net(rng: &mut ChaCha8Rng, widths: &[usize]) -> DiscreteNetwork<i16> {
    let layers = widths
        .windows(2)
        .map(|w| DiscreteLayer {
            fan_in: w[0],
            fan_out: w[1],
            weights: (0..w[0] * w[1]).map(|_| rng.gen_range(-60i16..=127)).collect(),
            biases: (0..w[1]).map(|_| rng.gen_range(-20i16..=20)).collect(),
            threshold: rng.gen_range(200i16..=3000),
        })
        .collect();
    DiscreteNetwork { layers, bias_mode: BiasMode::Slope }
}

fn random_input(rng: &mut ChaCha8Rng, n: usize, t_in: u32) -> SpikeTickVector {
    SpikeTickVector::from_vec((0..n).map(|_| rng.gen_bool(0.6).then(|| rng.gen_range(0..t_in))).collect())
}

#[test]
fn small_nets_match_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let hw = HwConfig::default();
    let (mut spikes, mut multi) = (0, 0);
    for case in 0..10 {
        let widths = [rng.gen_range(4..200), rng.gen_range(4..512), rng.gen_range(4..300)];
        let net = random_net(&mut rng, &widths);
        let placement = map_network(&net, &hw, false).unwrap();
        multi += placement.pe_counts().iter().filter(|&&c| c > 1).count();
        let image = ProgramImage::build(&net, placement, &hw).unwrap();
        let mut sys = System::new(hw).unwrap();
        sys.program(&image).unwrap();
        for _ in 0..3 {
            let input = random_input(&mut rng, widths[0], 8);
            let reference = network_forward_discrete(&net, &input, 24, false).unwrap();
            let run = sys.run_inference(&input, 24, false).unwrap();
            assert_eq!(run.layer_spikes, reference.layer_spikes, "case {case} widths {widths:?}");
            assert_eq!(run.final_potentials, reference.output_potentials(), "case {case}");
            spikes += run.output_times().spike_count();
        }
    }
    eprintln!("output spikes {spikes}, multi-PE layers {multi}");
    assert!(spikes > 0 && multi > 0);
}
