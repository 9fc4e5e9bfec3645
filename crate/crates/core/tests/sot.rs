use nm_core::gen::{random_model, ModelBounds};
use nm_core::hw::HwConfig;
use nm_core::model::CnnModel;
use nm_core::sot::{compile_sot, load_sot, predict_cycles, save_sot};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TABLE_B: [(usize, u64); 12] = [
    (1, 135_207),
    (2, 45_207),
    (3, 180_207),
    (4, 17_007),
    (5, 180_132),
    (6, 28_257),
    (42, 348),
    (43, 5_100),
    (44, 187),
    (45, 2_299),
    (46, 74),
    (47, 338),
];

#[test]
fn printed_cycle_counts_reproduced() {
    let hw = HwConfig::default();
    let prog = compile_sot(&CnnModel::ssd_mobilenet_v1_300(), &hw).unwrap();
    for (l, b) in TABLE_B {
        assert_eq!(predict_cycles(&prog.rows[l - 1], &hw), b, "layer {}", l);
    }
    let total: u64 = prog.rows.iter().map(|r| predict_cycles(r, &hw)).sum();
    assert_eq!(total, 4_958_821);
    let fps = hw.clock_hz as f64 / total as f64;
    assert!((40.0..=40.7).contains(&fps));
}

#[test]
fn dw_passes_follow_hn_count() {
    let prog = compile_sot(&CnnModel::ssd_mobilenet_v1_300(), &HwConfig::default()).unwrap();
    let r6 = &prog.rows[5];
    assert_eq!((r6.passes_c, r6.passes_f), (1, 5));
}

#[test]
fn unsupported_filter_size_is_a_config_error() {
    let mut model = CnnModel::ssd_mobilenet_v1_300();
    model.layers[0].k = 5;
    let err = compile_sot(&model, &HwConfig::default()).unwrap_err();
    assert!(err.to_string().contains("no hardware configuration for k=5"));
}

proptest! {
    #[test]
    fn binary_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_model(&mut rng, ModelBounds { max_layers: 6, ..ModelBounds::default() });
        let prog = compile_sot(&model, &HwConfig::default()).unwrap();
        prop_assert_eq!(load_sot(&save_sot(&prog)).unwrap(), prog);
    }
}
