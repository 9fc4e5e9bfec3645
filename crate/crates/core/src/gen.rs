//! Seeded generators for small random models, weights and images.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{Activation, CnnModel, LayerKind, LayerSpec};
use crate::numeric::NumericProfile;
use crate::tensor::FeatureMapTensor;
use crate::weights::WeightStore;

/// Bounds for [`random_model`].
#[derive(Debug, Clone, Copy)]
pub struct ModelBounds {
    pub max_layers: usize,
    pub max_channels: usize,
    pub max_size: usize,
}

impl Default for ModelBounds {
    fn default() -> Self {
        ModelBounds {
            max_layers: 3,
            max_channels: 64,
            max_size: 32,
        }
    }
}

pub fn random_model(rng: &mut impl Rng, bounds: ModelBounds) -> CnnModel {
    let n = rng.gen_range(1..=bounds.max_layers);
    let mut c = rng.gen_range(1..=bounds.max_channels);
    let mut w = rng.gen_range(1..=bounds.max_size);
    let mut h = rng.gen_range(1..=bounds.max_size);
    let mut layers = Vec::with_capacity(n);
    for index in 1..=n {
        let kind = [LayerKind::Std3x3, LayerKind::Dw3x3, LayerKind::Conv1x1][rng.gen_range(0..3)];
        let stride = rng.gen_range(1..=2);
        let f_out = if kind == LayerKind::Dw3x3 {
            1
        } else {
            rng.gen_range(1..=bounds.max_channels)
        };
        let activation = [Activation::None, Activation::ReLU, Activation::ReLU6][rng.gen_range(0..3)];
        let layer = LayerSpec {
            index,
            kind,
            w_in: w,
            h_in: h,
            w_out: w.div_ceil(stride),
            h_out: h.div_ceil(stride),
            c_in: c,
            f_out,
            k: kind.filter_size(),
            stride,
            activation,
            has_bias: rng.gen_bool(0.5),
            source: None,
        };
        c = layer.out_maps();
        w = layer.w_out;
        h = layer.h_out;
        layers.push(layer);
    }
    CnnModel {
        name: "random".into(),
        layers,
    }
}

/// Image drawn over the profile's activation range (signed profiles are
/// limited to +-1024 so later layers do not saturate immediately).
pub fn random_image(model: &CnnModel, profile: &NumericProfile, seed: u64) -> FeatureMapTensor {
    let (c, w, h) = model.input_shape().expect("model has layers");
    let (lo, hi) = profile.activation_range();
    let (lo, hi) = (lo.max(-1024), hi.min(1024));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    FeatureMapTensor::from_fn(c, w, h, |_, _, _| rng.gen_range(lo..=hi) as i32)
}

/// 8-bit image suitable for the on-disk image formats.
pub fn random_image_u8(model: &CnnModel, seed: u64) -> FeatureMapTensor {
    let (c, w, h) = model.input_shape().expect("model has layers");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    FeatureMapTensor::from_fn(c, w, h, |_, _, _| rng.gen_range(0..=255))
}

/// Model, weights and image for fuzz case `index` of run `seed`.
pub fn random_case(seed: u64, index: u64, profile: &NumericProfile) -> (CnnModel, WeightStore, FeatureMapTensor) {
    let case_seed = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(index);
    let mut rng = ChaCha8Rng::seed_from_u64(case_seed);
    let model = random_model(&mut rng, ModelBounds::default());
    let weights = WeightStore::random(&model, profile, rng.gen());
    let image = random_image(&model, profile, rng.gen());
    (model, weights, image)
}
