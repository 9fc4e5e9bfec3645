//! Loading of the files named on the command line.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use nm_core::hw::HwConfig;
use nm_core::image::decode_image;
use nm_core::metrics::ResourceModel;
use nm_core::model::{parse_model, CnnModel};
use nm_core::numeric::NumericProfile;
use nm_core::tensor::FeatureMapTensor;
use nm_core::weights::{load_weights, WeightStore};

/// Model argument value that selects the bundled SSD300 / MobileNetV1 model.
pub const BUILTIN_SSD: &str = "builtin:ssd300";

fn read_text(path: &Path, what: &str) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {} file {}", what, path.display()))
}

fn read_bytes(path: &Path, what: &str) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("cannot read {} file {}", what, path.display()))
}

/// Parses the model without checking shapes; the SOT compiler reports
/// missing hardware configurations before shape problems.
pub fn model(path: &Path) -> Result<CnnModel> {
    if path.as_os_str() == BUILTIN_SSD {
        return Ok(CnnModel::ssd_mobilenet_v1_300());
    }
    let text = read_text(path, "model")?;
    parse_model(&text).with_context(|| format!("in model file {}", path.display()))
}

pub fn hw(path: Option<&Path>) -> Result<HwConfig> {
    match path {
        None => Ok(HwConfig::default()),
        Some(p) => {
            let text = read_text(p, "hardware config")?;
            HwConfig::from_json(&text).with_context(|| format!("in hardware config {}", p.display()))
        }
    }
}

/// `int8`, `wide`, or a path to a profile JSON file.
pub fn profile(spec: Option<&str>) -> Result<NumericProfile> {
    let Some(spec) = spec else {
        return Ok(NumericProfile::default());
    };
    if let Some(p) = NumericProfile::builtin(spec) {
        return Ok(p);
    }
    let path = Path::new(spec);
    if !path.exists() {
        bail!("numeric profile {} is neither int8, wide nor an existing file", spec);
    }
    let text = read_text(path, "numeric profile")?;
    NumericProfile::from_json(&text).with_context(|| format!("in numeric profile {}", spec))
}

pub fn resources(path: Option<&Path>) -> Result<ResourceModel> {
    match path {
        None => Ok(ResourceModel::reference_fpga()),
        Some(p) => {
            let text = read_text(p, "resource profile")?;
            ResourceModel::from_json(&text).with_context(|| format!("in resource profile {}", p.display()))
        }
    }
}

pub fn weights(path: &Path, model: &CnnModel, profile: &NumericProfile) -> Result<WeightStore> {
    let blob = read_bytes(path, "weights")?;
    load_weights(&blob, model, profile).with_context(|| format!("in weights file {}", path.display()))
}

pub fn image(path: &Path) -> Result<FeatureMapTensor> {
    let bytes = read_bytes(path, "image")?;
    decode_image(&bytes).with_context(|| format!("in image file {}", path.display()))
}
