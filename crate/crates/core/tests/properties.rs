use rand::Rng;
use ris_core::optimizer::{grouped_iterative, iterative, SimulatedOracle};
use ris_core::propagation::{sample_channel, Fading, LinkGeometry, LinkParams, PathLossModel};
use ris_core::rng::SeedStream;
use ris_core::surface::{
    config_power, optimal_continuous_power, tile_blocks, BlockLayout, PhaseBitmap,
};
use ris_core::Vec3;

fn channel(seed: u64) -> (ris_core::propagation::ChannelRealization, usize) {
    let layout = BlockLayout::new(3, 3).unwrap();
    let surface = tile_blocks(layout, Vec3::ZERO, Vec3::X).unwrap();
    let geo = LinkGeometry {
        tx_pos: Vec3::new(40.0, 25.0, 3.0),
        ris_center: Vec3::ZERO,
        rx_pos: Vec3::new(9.0, -4.0, -1.0),
        ris_normal: Vec3::X,
        carrier_freq: 3.5e9,
    };
    let model = PathLossModel::default().with_fading(Fading::Rayleigh);
    (
        sample_channel(&geo, &surface, &model, &LinkParams::default(), seed).unwrap(),
        surface.len(),
    )
}

#[test]
fn random_configs_stay_below_the_continuous_bound() {
    let (ch, n) = channel(3);
    let bound = optimal_continuous_power(&ch, 1.0).unwrap();
    let mut rng = SeedStream::new(17).rng();
    for _ in 0..10_000 {
        let cfg = PhaseBitmap::from_bools((0..n).map(|_| rng.random_bool(0.5)).collect());
        assert!(config_power(&ch, &cfg, 1.0).unwrap() <= bound * (1.0 + 1e-9));
    }
}

#[test]
fn sweeps_on_a_large_surface() {
    let (ch, n) = channel(8);
    let bound = optimal_continuous_power(&ch, 1.0).unwrap();
    let start = PhaseBitmap::zeros(n);
    let mut o = SimulatedOracle::new(&ch, 1.0).unwrap();
    let p0 = o.true_power(&start).unwrap();
    let it = iterative(&mut o, n, &start, 3).unwrap();
    let gr = grouped_iterative(&mut o, n, 4, &start, 3).unwrap();
    for t in [&it, &gr] {
        let p = o.true_power(&t.final_config).unwrap();
        assert!(p >= p0 && p <= bound);
        assert_eq!(p, t.final_power_w);
        assert!(t.best_power_sequence().windows(2).all(|w| w[1] >= w[0]));
    }
}
