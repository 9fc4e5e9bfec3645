#![allow(dead_code)]

use nm_core::model::{Activation, CnnModel, LayerKind, LayerSpec};

pub fn layer(kind: LayerKind, w: usize, h: usize, c: usize, f: usize, stride: usize) -> LayerSpec {
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

pub fn single(l: LayerSpec) -> CnnModel {
    CnnModel {
        name: "one".into(),
        layers: vec![l],
    }
}
