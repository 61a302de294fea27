use yoso_core::sim::{
    map_network, pack_neuron, BankId, Coord, HwConfig, Noc, Payload, Pe, ProgramImage, System,
};
use yoso_core::ttfs::{network_forward_discrete, BiasMode, DiscreteLayer, DiscreteNetwork};
use yoso_core::SpikeTickVector;

fn layer(fan_in: usize, fan_out: usize, w: impl Fn(usize, usize) -> i16, b: impl Fn(usize) -> i16, theta: i16) -> DiscreteLayer<i16> {
    DiscreteLayer {
        fan_in,
        fan_out,
        weights: (0..fan_in * fan_out).map(|i| w(i / fan_out, i % fan_out)).collect(),
        biases: (0..fan_out).map(b).collect(),
        threshold: theta,
    }
}

fn boot(net: &DiscreteNetwork<i16>, softmax: bool) -> (System, ProgramImage) {
    let hw = HwConfig::default();
    let placement = map_network(net, &hw, softmax).unwrap();
    let image = ProgramImage::build(net, placement, &hw).unwrap();
    let mut sys = System::new(hw).unwrap();
    sys.program(&image).unwrap();
    (sys, image)
}

fn one_spike(n: usize, at: usize) -> SpikeTickVector {
    let mut v = SpikeTickVector::silent(n);
    v.record(at, 0);
    v
}

#[test]
fn table1_bytes_per_spike_and_per_timestep() {
    // 160 × 256 fills the 40 kB weight bank exactly: one PE with P = 256.
    let net = DiscreteNetwork {
        layers: vec![layer(160, 256, |j, i| ((j + i) % 5) as i16 - 2, |_| 0, 1000)],
        bias_mode: BiasMode::Slope,
    };
    let (mut sys, image) = boot(&net, false);
    assert_eq!(image.placement.pes[0].regs.p, 256);
    let run = sys.run_inference(&one_spike(160, 17), 1, false).unwrap();
    let t = run.counters.total();
    assert_eq!((t.spikes_processed, t.eots_processed), (1, 1));
    assert_eq!((t.spike_read_bytes, t.spike_write_bytes), (768, 512));
    assert_eq!((t.eot_read_bytes, t.eot_write_bytes), (1024, 512));
    let report = run.counters.report(&[256], None);
    assert_eq!(report.per_spike_read_bytes, 768.0);
    assert_eq!(report.per_eot_write_bytes, 512.0);
    assert!(report.energy_uj.is_none());
}

#[test]
fn single_access_spike_hand_trace() {
    let net = DiscreteNetwork {
        layers: vec![layer(1, 1, |_, _| 100, |_| 50, 1000)],
        bias_mode: BiasMode::Slope,
    };
    let (mut sys, _) = boot(&net, false);
    let run = sys.run_inference(&one_spike(1, 0), 1, false).unwrap();
    let t = run.counters.total();
    assert_eq!((t.spike_read_bytes, t.spike_write_bytes), (3, 2));
    assert_eq!(sys.pe(Coord::new(0, 0)).unwrap().bank(BankId::Acc).peek(0) as i16, 150);
    assert_eq!(run.final_potentials, vec![150]);
}

#[test]
fn zero_input_only_cascades_eots() {
    let net = DiscreteNetwork {
        layers: vec![
            layer(4, 300, |_, _| 5, |_| 0, 100),
            layer(300, 3, |_, _| 1, |_| 0, 100),
        ],
        bias_mode: BiasMode::Slope,
    };
    let (mut sys, _) = boot(&net, false);
    let run = sys.run_inference(&SpikeTickVector::silent(4), 5, false).unwrap();
    let t = run.counters.total();
    assert_eq!(t.spikes_processed, 0);
    assert_eq!((t.spike_read_bytes, t.spike_write_bytes, t.lookup_read_bytes), (0, 0, 0));
    // two layer-0 PEs and one layer-1 PE, one timestep each per tick
    assert_eq!(run.counters.ticks, 5);
    assert_eq!(t.eots_processed, 5 * 3);
    assert!(run.layer_spikes.iter().all(|s| s.spike_count() == 0));
}

#[test]
fn threshold_crossing_and_spike_once() {
    // V = 120 + 10 crosses 127 at the first EOT; later ticks keep integrating
    // without a second spike.
    let net = DiscreteNetwork {
        layers: vec![layer(1, 1, |_, _| 0, |_| 10, 127)],
        bias_mode: BiasMode::Slope,
    };
    let hw = HwConfig::default();
    let image = {
        let mut img = ProgramImage::build(&net, map_network(&net, &hw, false).unwrap(), &hw).unwrap();
        img.banks[0][BankId::Neuron as usize][..4].copy_from_slice(&pack_neuron(120, false).to_le_bytes());
        img
    };
    let mut sys = System::new(hw).unwrap();
    sys.program(&image).unwrap();
    let run = sys.run_inference(&SpikeTickVector::silent(1), 3, false).unwrap();
    assert_eq!(run.output_times().get(0), Some(0));
    assert_eq!(run.output_times().spike_count(), 1);
    assert_eq!(run.final_potentials, vec![150]);
}

#[test]
fn softmax_output_picks_the_largest_potential() {
    let biases = [-5i16, 40, 12];
    let net = DiscreteNetwork {
        layers: vec![layer(2, 3, |_, _| 0, |i| biases[i], 127)],
        bias_mode: BiasMode::Slope,
    };
    let (mut sys, _) = boot(&net, true);
    let run = sys.run_inference(&SpikeTickVector::silent(2), 1, false).unwrap();
    assert_eq!(run.final_potentials, vec![-5, 40, 12]);
    assert_eq!(run.output_times().as_slice(), &[None, Some(0), None]);

    let (mut plain, _) = boot(&net, false);
    let run = plain.run_inference(&SpikeTickVector::silent(2), 1, false).unwrap();
    assert_eq!(run.output_times().spike_count(), 0);
}

#[test]
fn softmax_needs_a_single_output_pe() {
    let net = DiscreteNetwork {
        layers: vec![layer(2, 300, |_, _| 0, |_| 0, 127)],
        bias_mode: BiasMode::Slope,
    };
    assert!(map_network(&net, &HwConfig::default(), true).is_err());
}

#[test]
fn programming_reproduces_the_image() {
    let net = DiscreteNetwork {
        layers: vec![
            layer(30, 600, |j, i| ((j * 7 + i) % 200) as i16 - 100, |i| i as i16 - 300, 900),
            layer(600, 10, |j, i| ((j + 3 * i) % 50) as i16 - 25, |_| 3, 400),
        ],
        bias_mode: BiasMode::InitialPotential,
    };
    let (sys, image) = boot(&net, false);
    for (pe, banks) in image.placement.pes.iter().zip(&image.banks) {
        let hw_pe = sys.pe(pe.coord).unwrap();
        assert!(hw_pe.is_running());
        assert_eq!(hw_pe.regs, pe.regs);
        for id in BankId::ALL {
            assert_eq!(hw_pe.bank(id).bytes(), &banks[id as usize][..], "{} bank of {}", id.name(), pe.coord);
        }
    }
}

#[test]
fn faults() {
    let hw = HwConfig::default();
    let mut noc = Noc::new(1);
    let mut pe = Pe::new(0, Coord::new(0, 0), &hw);
    assert!(pe.receive(0, Payload::data_spike(0), &mut noc).is_err());
    pe.receive(0, Payload::prog_commit(), &mut noc).unwrap();
    assert!(pe.is_running());
    assert!(pe.bank(BankId::Weight).bytes().iter().all(|&b| b == 0));
    assert!(pe
        .receive(0, Payload::prog_write(yoso_core::sim::ProgTarget::Bank(BankId::Weight), 0, 1), &mut noc)
        .is_err());

    let mut idle = System::new(hw).unwrap();
    assert!(idle.run_inference(&SpikeTickVector::silent(1), 1, false).is_err());
}

#[test]
fn hop_accounting_on_two_pe_chain() {
    let net = DiscreteNetwork {
        layers: vec![layer(3, 4, |_, _| 60, |_| 0, 100), layer(4, 2, |_, _| 60, |_| 0, 100)],
        bias_mode: BiasMode::Slope,
    };
    let (mut sys, image) = boot(&net, false);
    assert_eq!(image.placement.pes[1].coord, Coord::new(1, 0));
    let input = SpikeTickVector::from_vec(vec![Some(0), Some(1), None]);
    let run = sys.run_inference(&input, 4, false).unwrap();
    let hidden = run.layer_spikes[0].spike_count() as u64;
    let out = run.output_times().spike_count() as u64;
    // host -> (0,0): 0 hops; (0,0) -> (1,0): 1 hop; (1,0) -> host: 1 hop.
    assert_eq!(run.counters.total_hops, (hidden + 4) + (out + 4));
    assert_eq!(run.counters.total_packets, (2 + 4) + (hidden + 4) + (out + 4));
}

#[test]
fn early_stop_matches_reference() {
    let net = DiscreteNetwork {
        layers: vec![layer(3, 5, |j, i| (j * 5 + i) as i16 * 3, |_| 1, 60)],
        bias_mode: BiasMode::Slope,
    };
    let (mut sys, _) = boot(&net, false);
    let input = SpikeTickVector::from_vec(vec![Some(0), Some(2), Some(1)]);
    let reference = network_forward_discrete(&net, &input, 50, true).unwrap();
    let run = sys.run_inference(&input, 50, true).unwrap();
    assert!(reference.ticks < 50);
    assert_eq!(run.ticks, reference.ticks);
    assert_eq!(run.layer_spikes, reference.layer_spikes);
    assert_eq!(run.final_potentials, reference.output_potentials());
}

#[test]
fn repeated_runs_are_identical() {
    let net = DiscreteNetwork {
        layers: vec![layer(20, 300, |j, i| ((j * 31 + i * 17) % 90) as i16 - 30, |_| 2, 500)],
        bias_mode: BiasMode::Slope,
    };
    let (mut sys, _) = boot(&net, false);
    let input = SpikeTickVector::from_vec((0..20).map(|i| Some(i as u32 % 7)).collect());
    let a = sys.run_inference(&input, 20, false).unwrap();
    let b = sys.run_inference(&input, 20, false).unwrap();
    assert_eq!(a, b);
}
