//! Reference convolution: the naive per-output loop over channels and taps,
//! with out-of-range inputs read as zero. The simulator must match it
//! bit for bit.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{CnnModel, LayerSpec};
use crate::numeric::NumericProfile;
use crate::tensor::FeatureMapTensor;
use crate::weights::WeightStore;

/// Multiply-accumulate counts of a convolution.
///
/// `total_macs` includes taps that land on zero padding; `effective_macs`
/// counts only taps inside the input map.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct MacCount {
    pub total_macs: u64,
    pub effective_macs: u64,
}

impl std::ops::AddAssign for MacCount {
    fn add_assign(&mut self, rhs: Self) {
        self.total_macs += rhs.total_macs;
        self.effective_macs += rhs.effective_macs;
    }
}

/// Closed-form multiplication count `C * F * W_out * H_out * k * k`.
///
/// Depthwise layers have `F = 1`, so the same product applies.
pub fn count_mul_eq2(layer: &LayerSpec) -> u64 {
    (layer.c_in * layer.f_out * layer.w_out * layer.h_out * layer.k * layer.k) as u64
}

pub fn conv_layer_ref(
    input: &FeatureMapTensor,
    layer: &LayerSpec,
    weights: &WeightStore,
    profile: &NumericProfile,
) -> Result<(FeatureMapTensor, MacCount)> {
    if input.shape() != (layer.c_in, layer.w_in, layer.h_in) {
        let (c, w, h) = input.shape();
        return Err(Error::shape(
            layer.index,
            format!(
                "input tensor {}x{}x{} does not match layer input {}x{}x{}",
                c, w, h, layer.c_in, layer.w_in, layer.h_in
            ),
        ));
    }
    let lw = weights.layer(layer.index);
    let half = layer.half() as isize;
    let s = layer.stride as isize;
    let (w_in, h_in) = (layer.w_in as isize, layer.h_in as isize);
    let mut out = FeatureMapTensor::zeros(layer.out_maps(), layer.w_out, layer.h_out);
    let mut count = MacCount::default();

    for f in 0..layer.out_maps() {
        let channels: Vec<usize> = if layer.is_depthwise() {
            vec![f]
        } else {
            (0..layer.c_in).collect()
        };
        for y in 0..layer.h_out {
            for x in 0..layer.w_out {
                let mut acc: i128 = 0;
                for (ci, &c) in channels.iter().enumerate() {
                    for j in -half..=half {
                        for i in -half..=half {
                            count.total_macs += 1;
                            let px = s * x as isize + i;
                            let py = s * y as isize + j;
                            if px < 0 || py < 0 || px >= w_in || py >= h_in {
                                continue;
                            }
                            count.effective_macs += 1;
                            let m = input.get(c, px as usize, py as usize) as i128;
                            let w = lw.weight(f, ci, (j + half) as usize, (i + half) as usize) as i128;
                            acc += m * w;
                            if !profile.fits_accumulator(acc) {
                                return Err(Error::Overflow {
                                    layer: layer.index,
                                    value: acc,
                                    bits: profile.accumulator_bits,
                                });
                            }
                        }
                    }
                }
                let v = profile.finish(layer.index, acc as i64, lw.bias(f), layer.activation)?;
                out.set(f, x, y, v);
            }
        }
    }
    Ok((out, count))
}

/// Runs every layer in order; entry `i` of the result is layer `i + 1`'s output.
pub fn infer_ref(
    model: &CnnModel,
    weights: &WeightStore,
    image: &FeatureMapTensor,
    profile: &NumericProfile,
) -> Result<(Vec<FeatureMapTensor>, MacCount)> {
    let mut outputs: Vec<FeatureMapTensor> = Vec::with_capacity(model.len());
    let mut total = MacCount::default();
    for layer in &model.layers {
        let src = layer.source_layer();
        let input = if src == 0 { image } else { &outputs[src - 1] };
        let (out, count) = conv_layer_ref(input, layer, weights, profile)?;
        total += count;
        outputs.push(out);
    }
    Ok((outputs, total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Activation, LayerKind};
    use crate::weights::LayerWeights;

    fn spec(kind: LayerKind, w: usize, h: usize, c: usize, f: usize, stride: usize) -> LayerSpec {
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

    fn single(layer: LayerSpec, fill: i32) -> (CnnModel, WeightStore) {
        let model = CnnModel {
            name: "t".into(),
            layers: vec![layer],
        };
        let mut lw = LayerWeights::zeros(&model.layers[0]);
        lw.weights.iter_mut().for_each(|w| *w = fill);
        let store = WeightStore::new(&model, vec![lw]).unwrap();
        (model, store)
    }

    #[test]
    fn identity_1x1() {
        let (model, store) = single(spec(LayerKind::Conv1x1, 5, 3, 1, 1, 1), 1);
        let img = FeatureMapTensor::from_fn(1, 5, 3, |_, x, y| (x * 10 + y) as i32);
        let (out, n) = conv_layer_ref(&img, &model.layers[0], &store, &NumericProfile::wide()).unwrap();
        assert_eq!(out, img);
        assert_eq!(n.total_macs, 15);
        assert_eq!(n.effective_macs, 15);
    }

    #[test]
    fn all_ones_3x3_on_2x2() {
        // every output sees the whole 2x2 input; 4 of 9 taps are in range
        let (model, store) = single(spec(LayerKind::Std3x3, 2, 2, 1, 1, 1), 1);
        let img = FeatureMapTensor::from_vec(1, 2, 2, vec![1, 2, 3, 4]).unwrap();
        let (out, n) = conv_layer_ref(&img, &model.layers[0], &store, &NumericProfile::wide()).unwrap();
        assert_eq!(out.data(), &[10, 10, 10, 10]);
        assert_eq!(n.effective_macs, 16);
        assert_eq!(n.total_macs, 36);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let (model, store) = single(spec(LayerKind::Conv1x1, 4, 4, 2, 1, 1), 1);
        let img = FeatureMapTensor::zeros(1, 4, 4);
        assert!(matches!(
            conv_layer_ref(&img, &model.layers[0], &store, &NumericProfile::wide()),
            Err(Error::Shape { layer: 1, .. })
        ));
    }

    #[test]
    fn closed_form_counts() {
        let ssd = CnnModel::ssd_mobilenet_v1_300();
        assert_eq!(count_mul_eq2(&ssd.layers[0]), 19_440_000);
        assert_eq!(count_mul_eq2(&ssd.layers[1]), 6_480_000);
        assert_eq!(count_mul_eq2(&ssd.layers[45]), 3_072);
        assert_eq!(count_mul_eq2(&spec(LayerKind::Conv1x1, 4, 4, 1, 1, 1)), 16);
    }

    #[test]
    fn stride_two_centres_on_even_positions() {
        let (model, store) = single(spec(LayerKind::Std3x3, 4, 4, 1, 1, 2), 1);
        let img = FeatureMapTensor::from_fn(1, 4, 4, |_, x, y| (y * 4 + x) as i32);
        let (out, n) = conv_layer_ref(&img, &model.layers[0], &store, &NumericProfile::wide()).unwrap();
        // centre (0,0): rows 0..=1, cols 0..=1 -> 0+1+4+5
        assert_eq!(out.get(0, 0, 0), 10);
        // centre (2,2): rows 1..=3, cols 1..=3
        let expect: i32 = (1..=3).flat_map(|y| (1..=3).map(move |x| y * 4 + x)).sum();
        assert_eq!(out.get(0, 1, 1), expect);
        // per axis 2 outputs x 3 taps minus the one tap at -1
        assert_eq!(n.effective_macs, 5 * 5);
        assert_eq!(n.total_macs, 36);
    }
}
