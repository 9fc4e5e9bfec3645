//! Integer number formats and the post-accumulation path (bias, activation,
//! requantization) shared by the soma unit and the reference convolution.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Activation, Diagnostic, DiagnosticKind, LayerSpec};

/// Multiply-and-shift mapping from the accumulator domain back to activations.
///
/// `relu6_ceiling` is the accumulator-domain value that represents 6.0; ReLU6
/// clamps to `[0, relu6_ceiling]` before requantization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Requant {
    pub multiplier: i32,
    pub shift: u32,
    pub relu6_ceiling: i64,
}

impl Requant {
    pub const IDENTITY: Requant = Requant {
        multiplier: 1,
        shift: 0,
        relu6_ceiling: 6,
    };

    /// Rounds half up: `floor((v * multiplier + 2^(shift-1)) / 2^shift)`.
    pub fn apply(&self, value: i128) -> i128 {
        let scaled = value * self.multiplier as i128;
        if self.shift == 0 {
            scaled
        } else {
            (scaled + (1i128 << (self.shift - 1))) >> self.shift
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericProfile {
    pub name: String,
    pub activation_bits: u32,
    pub signed_activations: bool,
    pub weight_bits: u32,
    pub bias_bits: u32,
    pub accumulator_bits: u32,
    pub requant: Requant,
    /// Per-layer overrides of `requant`, keyed by 1-based layer index.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub layer_requant: BTreeMap<usize, Requant>,
}

impl Default for NumericProfile {
    fn default() -> Self {
        Self::int8()
    }
}

fn signed_range(bits: u32) -> (i128, i128) {
    let half = 1i128 << (bits - 1);
    (-half, half - 1)
}

impl NumericProfile {
    /// 8-bit unsigned activations, 8-bit weights, 24-bit biases, 32-bit
    /// accumulators; ReLU6 maps 6.0 to activation level 255.
    pub fn int8() -> Self {
        NumericProfile {
            name: "int8".to_string(),
            activation_bits: 8,
            signed_activations: false,
            weight_bits: 8,
            bias_bits: 24,
            accumulator_bits: 32,
            requant: Requant {
                multiplier: 1,
                shift: 8,
                relu6_ceiling: 255 << 8,
            },
            layer_requant: BTreeMap::new(),
        }
    }

    /// 32-bit signed activations, 64-bit accumulators, no requantization.
    pub fn wide() -> Self {
        NumericProfile {
            name: "wide".to_string(),
            activation_bits: 32,
            signed_activations: true,
            weight_bits: 8,
            bias_bits: 32,
            accumulator_bits: 64,
            requant: Requant::IDENTITY,
            layer_requant: BTreeMap::new(),
        }
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "int8" => Some(Self::int8()),
            "wide" => Some(Self::wide()),
            _ => None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let profile: NumericProfile =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if let Some(d) = profile.diagnostics().into_iter().next() {
            return Err(Error::Config(d.message));
        }
        Ok(profile)
    }

    pub fn requant_for(&self, layer: usize) -> &Requant {
        self.layer_requant.get(&layer).unwrap_or(&self.requant)
    }

    pub fn activation_range(&self) -> (i64, i64) {
        if self.signed_activations {
            let (lo, hi) = signed_range(self.activation_bits);
            (lo as i64, hi as i64)
        } else {
            (0, ((1i64 << self.activation_bits) - 1))
        }
    }

    pub fn weight_range(&self) -> (i64, i64) {
        let (lo, hi) = signed_range(self.weight_bits);
        (lo as i64, hi as i64)
    }

    pub fn bias_range(&self) -> (i64, i64) {
        let (lo, hi) = signed_range(self.bias_bits);
        (lo as i64, hi as i64)
    }

    pub fn accumulator_range(&self) -> (i128, i128) {
        signed_range(self.accumulator_bits)
    }

    pub fn accumulator_max(&self) -> i128 {
        self.accumulator_range().1
    }

    pub fn fits_accumulator(&self, value: i128) -> bool {
        let (lo, hi) = self.accumulator_range();
        (lo..=hi).contains(&value)
    }

    /// Bytes per weight / bias word in the weight file.
    pub fn weight_bytes(&self) -> usize {
        self.weight_bits.div_ceil(8) as usize
    }

    pub fn bias_bytes(&self) -> usize {
        self.bias_bits.div_ceil(8) as usize
    }

    /// Largest magnitude any partial or final sum (bias included) can reach
    /// on `layer`.
    pub fn accumulation_bound(&self, layer: &LayerSpec) -> i128 {
        let (alo, ahi) = self.activation_range();
        let (wlo, _) = self.weight_range();
        let (blo, _) = self.bias_range();
        let amax = (alo as i128).abs().max(ahi as i128);
        let terms = (layer.k * layer.k * layer.filter_channels()) as i128;
        let bias = if layer.has_bias { (blo as i128).abs() } else { 0 };
        terms * amax * (wlo as i128).abs() + bias
    }

    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        let mut problems = Vec::new();
        let max_act = if self.signed_activations { 32 } else { 31 };
        if !(1..=max_act).contains(&self.activation_bits) {
            problems.push(format!(
                "activation_bits must be in 1..={}, got {}",
                max_act, self.activation_bits
            ));
        }
        if !(2..=32).contains(&self.weight_bits) {
            problems.push(format!("weight_bits must be in 2..=32, got {}", self.weight_bits));
        }
        if !(2..=64).contains(&self.accumulator_bits) {
            problems.push(format!(
                "accumulator_bits must be in 2..=64, got {}",
                self.accumulator_bits
            ));
        }
        if !(2..=64).contains(&self.bias_bits) {
            problems.push(format!("bias_bits must be in 2..=64, got {}", self.bias_bits));
        }
        for (layer, r) in std::iter::once((&0, &self.requant)).chain(self.layer_requant.iter()) {
            if r.shift > 62 {
                problems.push(format!("requant shift {} too large (layer {})", r.shift, layer));
            }
            if r.relu6_ceiling < 0 {
                problems.push(format!("negative relu6 ceiling (layer {})", layer));
            }
        }
        problems
            .into_iter()
            .map(|message| Diagnostic {
                layer: None,
                kind: DiagnosticKind::Profile,
                message,
            })
            .collect()
    }

    /// Bias, activation, requantization and saturation of a final sum.
    pub fn finish(
        &self,
        layer: usize,
        netsum: i64,
        bias: i64,
        activation: Activation,
    ) -> Result<i32> {
        let value = netsum as i128 + bias as i128;
        if !self.fits_accumulator(value) {
            return Err(Error::Overflow {
                layer,
                value,
                bits: self.accumulator_bits,
            });
        }
        let requant = self.requant_for(layer);
        let activated = match activation {
            Activation::None => value,
            Activation::ReLU => value.max(0),
            Activation::ReLU6 => value.clamp(0, requant.relu6_ceiling as i128),
        };
        let (lo, hi) = self.activation_range();
        let out = requant.apply(activated).clamp(lo as i128, hi as i128);
        Ok(out as i32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_path_keeps_netsum() {
        let p = NumericProfile::wide();
        assert_eq!(p.finish(1, -1234, 0, Activation::None).unwrap(), -1234);
    }

    #[test]
    fn relu6_clamps_both_ends() {
        let p = NumericProfile::int8();
        assert_eq!(p.finish(1, -5000, 0, Activation::ReLU6).unwrap(), 0);
        assert_eq!(p.finish(1, 1 << 30, 0, Activation::ReLU6).unwrap(), 255);
        // 6.0 in the wide profile is the raw integer 6
        let w = NumericProfile::wide();
        assert_eq!(w.finish(1, 100, 0, Activation::ReLU6).unwrap(), 6);
        assert_eq!(w.finish(1, 4, 1, Activation::ReLU6).unwrap(), 5);
    }

    #[test]
    fn requant_rounds_half_up() {
        let r = Requant {
            multiplier: 3,
            shift: 2,
            relu6_ceiling: 0,
        };
        assert_eq!(r.apply(2), 2); // 6/4 = 1.5 -> 2
        assert_eq!(r.apply(-2), -1); // -1.5 -> -1
        assert_eq!(r.apply(1), 1); // 0.75 -> 1
    }

    #[test]
    fn final_sum_overflow_is_reported() {
        let mut p = NumericProfile::int8();
        p.accumulator_bits = 16;
        assert!(matches!(
            p.finish(4, 32767, 1, Activation::None),
            Err(Error::Overflow { layer: 4, .. })
        ));
    }

    #[test]
    fn ranges() {
        let p = NumericProfile::int8();
        assert_eq!(p.activation_range(), (0, 255));
        assert_eq!(p.weight_range(), (-128, 127));
        assert_eq!(p.bias_bytes(), 3);
        assert_eq!(NumericProfile::wide().activation_range(), (i32::MIN as i64, i32::MAX as i64));
    }

    #[test]
    fn profile_json_round_trip() {
        let mut p = NumericProfile::int8();
        p.layer_requant.insert(
            3,
            Requant {
                multiplier: 5,
                shift: 10,
                relu6_ceiling: 99,
            },
        );
        let text = serde_json::to_string(&p).unwrap();
        assert_eq!(NumericProfile::from_json(&text).unwrap(), p);
        assert_eq!(p.requant_for(3).multiplier, 5);
        assert_eq!(p.requant_for(2).multiplier, 1);
    }
}
