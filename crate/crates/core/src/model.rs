//! CNN model description: layer shapes, chaining rules and validation.
//!
//! A model is an ordered list of convolution layers. Each layer reads the
//! output of the previous layer unless it names another `source` (used by the
//! SSD prediction heads, which tap intermediate feature maps). `source = 0`
//! denotes the input image.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::NumericProfile;

const SSD_MOBILENET_V1_300: &str = include_str!("../data/ssd_mobilenet_v1_300.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayerKind {
    Std3x3,
    Dw3x3,
    Conv1x1,
}

impl LayerKind {
    pub fn filter_size(self) -> usize {
        match self {
            LayerKind::Std3x3 | LayerKind::Dw3x3 => 3,
            LayerKind::Conv1x1 => 1,
        }
    }

    /// Short label in the style of the reference statistics table.
    pub fn label(self) -> &'static str {
        match self {
            LayerKind::Std3x3 => "3x3",
            LayerKind::Dw3x3 => "DW3x3",
            LayerKind::Conv1x1 => "1x1",
        }
    }

    pub(crate) fn code(self) -> u32 {
        match self {
            LayerKind::Std3x3 => 0,
            LayerKind::Dw3x3 => 1,
            LayerKind::Conv1x1 => 2,
        }
    }

    pub(crate) fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(LayerKind::Std3x3),
            1 => Some(LayerKind::Dw3x3),
            2 => Some(LayerKind::Conv1x1),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Activation {
    None,
    ReLU,
    ReLU6,
}

impl Activation {
    pub(crate) fn code(self) -> u32 {
        match self {
            Activation::None => 0,
            Activation::ReLU => 1,
            Activation::ReLU6 => 2,
        }
    }

    pub(crate) fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Activation::None),
            1 => Some(Activation::ReLU),
            2 => Some(Activation::ReLU6),
            _ => None,
        }
    }
}

/// Shape of one convolution layer.
///
/// For `Dw3x3` layers `f_out` is 1 (one filter per input channel) and the
/// layer produces `c_in` output maps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub index: usize,
    pub kind: LayerKind,
    pub w_in: usize,
    pub h_in: usize,
    pub w_out: usize,
    pub h_out: usize,
    pub c_in: usize,
    pub f_out: usize,
    pub k: usize,
    pub stride: usize,
    pub activation: Activation,
    pub has_bias: bool,
    /// Layer whose output feeds this one; `0` is the input image. Defaults to
    /// the previous layer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<usize>,
}

impl LayerSpec {
    /// Number of feature maps this layer writes.
    pub fn out_maps(&self) -> usize {
        match self.kind {
            LayerKind::Dw3x3 => self.c_in,
            _ => self.f_out,
        }
    }

    /// Input channels combined by one filter.
    pub fn filter_channels(&self) -> usize {
        match self.kind {
            LayerKind::Dw3x3 => 1,
            _ => self.c_in,
        }
    }

    pub fn half(&self) -> usize {
        self.k / 2
    }

    pub fn source_layer(&self) -> usize {
        self.source.unwrap_or(self.index.saturating_sub(1))
    }

    pub fn in_positions(&self) -> usize {
        self.w_in * self.h_in
    }

    pub fn out_positions(&self) -> usize {
        self.w_out * self.h_out
    }

    pub fn is_depthwise(&self) -> bool {
        self.kind == LayerKind::Dw3x3
    }

    /// Checks the layer's own invariants (not its connection to other layers).
    fn local_problems(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.k != self.kind.filter_size() {
            problems.push(format!(
                "kind {:?} requires k={}, got k={}",
                self.kind,
                self.kind.filter_size(),
                self.k
            ));
        }
        if self.stride == 0 {
            problems.push("stride must be at least 1".to_string());
        }
        if self.w_in == 0 || self.h_in == 0 {
            problems.push(format!("empty input map {}x{}", self.w_in, self.h_in));
        }
        if self.stride > 0 {
            let w = self.w_in.div_ceil(self.stride);
            let h = self.h_in.div_ceil(self.stride);
            if (self.w_out, self.h_out) != (w, h) {
                problems.push(format!(
                    "output map {}x{} does not match ceil(input/stride) = {}x{}",
                    self.w_out, self.h_out, w, h
                ));
            }
        }
        if self.c_in == 0 {
            problems.push("c_in must be at least 1".to_string());
        }
        if self.f_out == 0 {
            problems.push("f_out must be at least 1".to_string());
        }
        if self.kind == LayerKind::Dw3x3 && self.f_out != 1 {
            problems.push(format!(
                "depthwise layer must have one filter per channel (f_out=1), got {}",
                self.f_out
            ));
        }
        problems
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CnnModel {
    pub name: String,
    pub layers: Vec<LayerSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DiagnosticKind {
    Shape,
    Overflow,
    Profile,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub layer: Option<usize>,
    pub kind: DiagnosticKind,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.layer {
            Some(layer) => write!(f, "layer {}: {}", layer, self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// Parses a model document without checking layer invariants.
pub fn parse_model(text: &str) -> Result<CnnModel> {
    serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}

/// Parses a model document and checks every layer and chaining invariant.
pub fn load_model(text: &str) -> Result<CnnModel> {
    let model = parse_model(text)?;
    model.check()?;
    Ok(model)
}

/// Returns every problem with `model` under `profile`; empty means the model
/// runs through the oracle and the simulator without overflow.
pub fn validate_model(model: &CnnModel, profile: &NumericProfile) -> Vec<Diagnostic> {
    let mut diags = model.shape_diagnostics();
    diags.extend(profile.diagnostics());
    if diags.iter().any(|d| d.kind == DiagnosticKind::Profile) {
        return diags;
    }
    for layer in &model.layers {
        let bound = profile.accumulation_bound(layer);
        let limit = profile.accumulator_max();
        if bound > limit {
            diags.push(Diagnostic {
                layer: Some(layer.index),
                kind: DiagnosticKind::Overflow,
                message: format!(
                    "worst-case accumulation {} exceeds the {}-bit accumulator limit {}",
                    bound, profile.accumulator_bits, limit
                ),
            });
        }
    }
    diags
}

impl CnnModel {
    /// The reconstructed SSD300 / MobileNetV1 detection network (47 layers).
    pub fn ssd_mobilenet_v1_300() -> Self {
        load_model(SSD_MOBILENET_V1_300).expect("bundled model is well formed")
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// 1-based lookup.
    pub fn layer(&self, index: usize) -> Option<&LayerSpec> {
        index.checked_sub(1).and_then(|i| self.layers.get(i))
    }

    /// Shape `(c, w, h)` of the input image.
    pub fn input_shape(&self) -> Option<(usize, usize, usize)> {
        self.layers.first().map(|l| (l.c_in, l.w_in, l.h_in))
    }

    /// Shape `(c, w, h)` of the tensor produced by `layer` (0 = the image).
    pub fn output_shape(&self, layer: usize) -> Option<(usize, usize, usize)> {
        if layer == 0 {
            return self.input_shape();
        }
        self.layer(layer).map(|l| (l.out_maps(), l.w_out, l.h_out))
    }

    /// For every producer (0 = image, then each layer), the last layer that
    /// reads it, or `None` if nothing does.
    pub fn last_consumers(&self) -> Vec<Option<usize>> {
        let mut last = vec![None; self.layers.len() + 1];
        for layer in &self.layers {
            let src = layer.source_layer();
            if src < last.len() {
                last[src] = Some(layer.index);
            }
        }
        last
    }

    pub fn shape_diagnostics(&self) -> Vec<Diagnostic> {
        let mut diags = Vec::new();
        let mut push = |layer: usize, message: String| {
            diags.push(Diagnostic {
                layer: Some(layer),
                kind: DiagnosticKind::Shape,
                message,
            })
        };
        if self.layers.is_empty() {
            diags.push(Diagnostic {
                layer: None,
                kind: DiagnosticKind::Shape,
                message: "model has no layers".to_string(),
            });
            return diags;
        }
        for (pos, layer) in self.layers.iter().enumerate() {
            let at = pos + 1;
            if layer.index != at {
                push(at, format!("layer index {} out of order", layer.index));
            }
            for problem in layer.local_problems() {
                push(at, problem);
            }
            let src = layer.source_layer();
            if src >= at {
                push(at, format!("source layer {} does not precede it", src));
                continue;
            }
            if at == 1 {
                continue;
            }
            if let Some((c, w, h)) = self.output_shape(src) {
                if c != layer.c_in {
                    push(
                        at,
                        format!(
                            "c_in={} but source {} produces {} maps",
                            layer.c_in,
                            describe_source(src),
                            c
                        ),
                    );
                }
                if (w, h) != (layer.w_in, layer.h_in) {
                    push(
                        at,
                        format!(
                            "input {}x{} but source {} produces {}x{}",
                            layer.w_in,
                            layer.h_in,
                            describe_source(src),
                            w,
                            h
                        ),
                    );
                }
            }
        }
        diags
    }

    pub fn check(&self) -> Result<()> {
        match self.shape_diagnostics().into_iter().next() {
            None => Ok(()),
            Some(d) => Err(Error::shape(d.layer.unwrap_or(0), d.message)),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }
}

fn describe_source(src: usize) -> String {
    if src == 0 {
        "image".to_string()
    } else {
        format!("layer {}", src)
    }
}
