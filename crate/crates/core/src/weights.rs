//! Per-layer filter weights and biases plus their binary file format.
//!
//! File layout (little-endian): magic `b"NMW1"`, a version byte, the total
//! file length as `u32`, then for each layer in model order the weights in
//! `[f][c][j][i]` order followed by the biases `[f]` (only when the layer has
//! a bias). Words are two's complement, `ceil(weight_bits / 8)` bytes per
//! weight and `ceil(bias_bits / 8)` bytes per bias.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{CnnModel, LayerSpec};
use crate::numeric::NumericProfile;

pub const WEIGHT_MAGIC: &[u8; 4] = b"NMW1";
pub const WEIGHT_VERSION: u8 = 1;
const HEADER_LEN: usize = 9;

/// Weights of one layer. A depthwise layer stores one single-channel filter
/// per input channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerWeights {
    pub filters: usize,
    pub channels: usize,
    pub k: usize,
    pub weights: Vec<i32>,
    pub biases: Vec<i64>,
}

impl LayerWeights {
    pub fn zeros(layer: &LayerSpec) -> Self {
        let filters = layer.out_maps();
        let channels = layer.filter_channels();
        LayerWeights {
            filters,
            channels,
            k: layer.k,
            weights: vec![0; filters * channels * layer.k * layer.k],
            biases: if layer.has_bias { vec![0; filters] } else { Vec::new() },
        }
    }

    /// The `k*k` taps of filter `f` for input channel `c` (row-major, `j` then `i`).
    #[inline]
    pub fn taps(&self, f: usize, c: usize) -> &[i32] {
        let kk = self.k * self.k;
        let start = (f * self.channels + c) * kk;
        &self.weights[start..start + kk]
    }

    #[inline]
    pub fn weight(&self, f: usize, c: usize, j: usize, i: usize) -> i32 {
        self.taps(f, c)[j * self.k + i]
    }

    pub fn set_weight(&mut self, f: usize, c: usize, j: usize, i: usize, value: i32) {
        let kk = self.k * self.k;
        self.weights[(f * self.channels + c) * kk + j * self.k + i] = value;
    }

    #[inline]
    pub fn bias(&self, f: usize) -> i64 {
        self.biases.get(f).copied().unwrap_or(0)
    }

    fn matches(&self, layer: &LayerSpec) -> bool {
        self.filters == layer.out_maps()
            && self.channels == layer.filter_channels()
            && self.k == layer.k
            && self.weights.len() == self.filters * self.channels * self.k * self.k
            && self.biases.len() == if layer.has_bias { self.filters } else { 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightStore {
    layers: Vec<LayerWeights>,
}

impl WeightStore {
    pub fn new(model: &CnnModel, layers: Vec<LayerWeights>) -> Result<Self> {
        if layers.len() != model.len() {
            return Err(Error::shape(
                0,
                format!("{} weight sets for {} layers", layers.len(), model.len()),
            ));
        }
        for (spec, w) in model.layers.iter().zip(&layers) {
            if !w.matches(spec) {
                return Err(Error::shape(spec.index, "weight array shape does not match layer"));
            }
        }
        Ok(WeightStore { layers })
    }

    pub fn zeros(model: &CnnModel) -> Self {
        WeightStore {
            layers: model.layers.iter().map(LayerWeights::zeros).collect(),
        }
    }

    /// Uniform random weights over the profile's weight range; biases are
    /// drawn from a narrower range so they do not swamp the products.
    pub fn random(model: &CnnModel, profile: &NumericProfile, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (wlo, whi) = profile.weight_range();
        let (blo, bhi) = profile.bias_range();
        let (blo, bhi) = (blo.max(-(1 << 15)), bhi.min(1 << 15));
        let layers = model
            .layers
            .iter()
            .map(|spec| {
                let mut lw = LayerWeights::zeros(spec);
                for w in lw.weights.iter_mut() {
                    *w = rng.gen_range(wlo..=whi) as i32;
                }
                for b in lw.biases.iter_mut() {
                    *b = rng.gen_range(blo..=bhi);
                }
                lw
            })
            .collect();
        WeightStore { layers }
    }

    /// 1-based lookup.
    pub fn layer(&self, index: usize) -> &LayerWeights {
        &self.layers[index - 1]
    }

    pub fn layer_mut(&mut self, index: usize) -> &mut LayerWeights {
        &mut self.layers[index - 1]
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }
}

/// Exact file size implied by `model` and `profile`.
pub fn weight_file_len(model: &CnnModel, profile: &NumericProfile) -> usize {
    HEADER_LEN
        + model
            .layers
            .iter()
            .map(|l| {
                let n = l.out_maps() * l.filter_channels() * l.k * l.k;
                let b = if l.has_bias { l.out_maps() } else { 0 };
                n * profile.weight_bytes() + b * profile.bias_bytes()
            })
            .sum::<usize>()
}

fn read_word(bytes: &[u8]) -> i64 {
    let mut buf = if bytes.last().is_some_and(|b| b & 0x80 != 0) {
        [0xffu8; 8]
    } else {
        [0u8; 8]
    };
    buf[..bytes.len()].copy_from_slice(bytes);
    i64::from_le_bytes(buf)
}

fn write_word(out: &mut Vec<u8>, value: i64, width: usize) {
    out.extend_from_slice(&value.to_le_bytes()[..width]);
}

pub fn load_weights(blob: &[u8], model: &CnnModel, profile: &NumericProfile) -> Result<WeightStore> {
    let expected = weight_file_len(model, profile);
    if blob.len() != expected {
        return Err(Error::Size {
            expected,
            actual: blob.len(),
        });
    }
    if &blob[..4] != WEIGHT_MAGIC {
        return Err(Error::Format("bad weight file magic".into()));
    }
    if blob[4] != WEIGHT_VERSION {
        return Err(Error::Format(format!("unsupported weight file version {}", blob[4])));
    }
    let declared = u32::from_le_bytes(blob[5..9].try_into().unwrap()) as usize;
    if declared != blob.len() {
        return Err(Error::Format(format!(
            "header declares {} bytes, file has {}",
            declared,
            blob.len()
        )));
    }

    let (wlo, whi) = profile.weight_range();
    let (blo, bhi) = profile.bias_range();
    let (wb, bb) = (profile.weight_bytes(), profile.bias_bytes());
    let mut pos = HEADER_LEN;
    let mut layers = Vec::with_capacity(model.len());
    for spec in &model.layers {
        let mut lw = LayerWeights::zeros(spec);
        for w in lw.weights.iter_mut() {
            let v = read_word(&blob[pos..pos + wb]);
            if !(wlo..=whi).contains(&v) {
                return Err(Error::Format(format!(
                    "layer {}: weight {} outside {}-bit range",
                    spec.index, v, profile.weight_bits
                )));
            }
            *w = v as i32;
            pos += wb;
        }
        for b in lw.biases.iter_mut() {
            let v = read_word(&blob[pos..pos + bb]);
            if !(blo..=bhi).contains(&v) {
                return Err(Error::Format(format!(
                    "layer {}: bias {} outside {}-bit range",
                    spec.index, v, profile.bias_bits
                )));
            }
            *b = v;
            pos += bb;
        }
        layers.push(lw);
    }
    Ok(WeightStore { layers })
}

pub fn save_weights(store: &WeightStore, profile: &NumericProfile) -> Vec<u8> {
    let (wb, bb) = (profile.weight_bytes(), profile.bias_bytes());
    let mut out = Vec::new();
    out.extend_from_slice(WEIGHT_MAGIC);
    out.push(WEIGHT_VERSION);
    out.extend_from_slice(&[0; 4]);
    for lw in &store.layers {
        for &w in &lw.weights {
            write_word(&mut out, w as i64, wb);
        }
        for &b in &lw.biases {
            write_word(&mut out, b, bb);
        }
    }
    let len = out.len() as u32;
    out[5..9].copy_from_slice(&len.to_le_bytes());
    out
}
