use nm_core::gen::random_case;
use nm_core::hw::HwConfig;
use nm_core::model::{Activation, CnnModel, LayerKind, LayerSpec};
use nm_core::numeric::NumericProfile;
use nm_core::oracle::{conv_layer_ref, infer_ref};
use nm_core::sot::{compile_sot, execute, predict_cycles, Machine};
use nm_core::tensor::FeatureMapTensor;
use nm_core::weights::WeightStore;
use proptest::prelude::*;

fn layer(kind: LayerKind, w: usize, h: usize, c: usize, f: usize, stride: usize) -> LayerSpec {
    LayerSpec {
        index: 1,
        kind,
        w_in: w,
        h_in: h,
        w_out: w.div_ceil(stride),
        h_out: h.div_ceil(stride),
        c_in: c,
        f_out: f,
        k: kind.filter_size(),
        stride,
        activation: Activation::None,
        has_bias: false,
        source: None,
    }
}

fn single(l: LayerSpec) -> CnnModel {
    CnnModel {
        name: "one".into(),
        layers: vec![l],
    }
}

fn check_case(model: &CnnModel, weights: &WeightStore, image: &FeatureMapTensor, profile: &NumericProfile) {
    let hw = HwConfig::default();
    let prog = compile_sot(model, &hw).unwrap();
    let (outs, stats) = execute(&prog, weights, image, &hw, profile).unwrap();
    let (refs, _) = infer_ref(model, weights, image, profile).unwrap();
    let mut input = image.clone();
    for (i, l) in model.layers.iter().enumerate() {
        assert_eq!(outs[i], refs[i], "layer {} of {:?}", l.index, l);
        let (_, count) = conv_layer_ref(&input, l, weights, profile).unwrap();
        input = refs[i].clone();
        let s = &stats.layers[i];
        assert_eq!(s.effective_muls_a, count.effective_macs, "layer {}", l.index);
        assert_eq!(s.eq2_muls, count.total_macs);
        assert!(s.partition_holds());
        assert_eq!(s.cycles_b, predict_cycles(&prog.rows[i], &hw));
        assert_eq!(s.peak_muls_c, s.cycles_b * hw.m as u64);
    }
}

#[test]
fn identity_model_passes_image_through() {
    let model = single(layer(LayerKind::Conv1x1, 6, 5, 1, 1, 1));
    let mut weights = WeightStore::zeros(&model);
    weights.layer_mut(1).set_weight(0, 0, 0, 0, 1);
    let image = FeatureMapTensor::from_fn(1, 6, 5, |_, x, y| (x * 7 + y) as i32);
    let hw = HwConfig::default();
    let prog = compile_sot(&model, &hw).unwrap();
    let (outs, stats) = execute(&prog, &weights, &image, &hw, &NumericProfile::wide()).unwrap();
    assert_eq!(outs[0], image);
    assert_eq!(stats.layers[0].cycles_b, 30 + 6 + 57);
}

#[test]
fn fixed_shapes_match_oracle() {
    for profile in [NumericProfile::int8(), NumericProfile::wide()] {
        for &(kind, w, h, c, f, s) in &[
            (LayerKind::Std3x3, 7, 5, 3, 29, 1),
            (LayerKind::Std3x3, 8, 6, 2, 5, 2),
            (LayerKind::Dw3x3, 9, 4, 30, 1, 1),
            (LayerKind::Dw3x3, 5, 7, 57, 1, 2),
            (LayerKind::Conv1x1, 4, 3, 33, 17, 1),
            (LayerKind::Conv1x1, 5, 5, 16, 16, 2),
            (LayerKind::Std3x3, 1, 1, 1, 1, 1),
        ] {
            let model = single(layer(kind, w, h, c, f, s));
            let weights = WeightStore::random(&model, &profile, 11);
            let image = nm_core::gen::random_image(&model, &profile, 12);
            check_case(&model, &weights, &image, &profile);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn random_models_match_oracle(seed in any::<u64>(), wide in any::<bool>()) {
        let profile = if wide { NumericProfile::wide() } else { NumericProfile::int8() };
        let (model, weights, image) = random_case(seed, 0, &profile);
        check_case(&model, &weights, &image, &profile);
    }
}

#[test]
fn second_image_is_unaffected_by_the_first() {
    let profile = NumericProfile::int8();
    let (model, weights, a) = random_case(3, 1, &profile);
    let b = nm_core::gen::random_image(&model, &profile, 99);
    let hw = HwConfig::default();
    let prog = compile_sot(&model, &hw).unwrap();
    let mut machine = Machine::new(&prog, &hw, &profile);
    let first_a = machine.run(&weights, &a).unwrap();
    let then_b = machine.run(&weights, &b).unwrap();
    let again_a = machine.run(&weights, &a).unwrap();
    assert_eq!(first_a.outputs, again_a.outputs);
    assert_eq!(first_a.stats, again_a.stats);
    let fresh_b = Machine::new(&prog, &hw, &profile).run(&weights, &b).unwrap();
    assert_eq!(then_b.outputs, fresh_b.outputs);
}
