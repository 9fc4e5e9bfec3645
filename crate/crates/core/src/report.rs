//! Machine-readable run and prediction reports.

use serde::Serialize;

use crate::error::Result;
use crate::hw::HwConfig;
use crate::metrics::{composition, eff_arch, utilization, OverheadShares, ResourceModel};
use crate::model::CnnModel;
use crate::oracle::count_mul_eq2;
use crate::sot::{predict_cycles, CycleStats, SotProgram};

/// Static per-layer prediction, one row of the cycle table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PredictRow {
    #[serde(rename = "L")]
    pub layer: usize,
    #[serde(rename = "Type")]
    pub kind: &'static str,
    #[serde(rename = "In_W")]
    pub in_w: usize,
    #[serde(rename = "In_H")]
    pub in_h: usize,
    #[serde(rename = "Out_W")]
    pub out_w: usize,
    #[serde(rename = "Out_H")]
    pub out_h: usize,
    #[serde(rename = "C")]
    pub c: usize,
    #[serde(rename = "F")]
    pub f: usize,
    #[serde(rename = "A_eq2")]
    pub a_eq2: u64,
    #[serde(rename = "B")]
    pub b: u64,
    #[serde(rename = "C_peak")]
    pub c_peak: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictReport {
    pub model: String,
    pub total_cycles: u64,
    pub total_eq2: u64,
    pub fps: f64,
    pub layers: Vec<PredictRow>,
}

pub fn predict_report(model: &CnnModel, program: &SotProgram, hw: &HwConfig) -> PredictReport {
    let layers: Vec<PredictRow> = model
        .layers
        .iter()
        .zip(&program.rows)
        .map(|(l, row)| {
            let b = predict_cycles(row, hw);
            PredictRow {
                layer: l.index,
                kind: l.kind.label(),
                in_w: l.w_in,
                in_h: l.h_in,
                out_w: l.w_out,
                out_h: l.h_out,
                c: l.c_in,
                f: l.f_out,
                a_eq2: count_mul_eq2(l),
                b,
                c_peak: b * hw.m as u64,
            }
        })
        .collect();
    let total_cycles = layers.iter().map(|r| r.b).sum();
    PredictReport {
        model: model.name.clone(),
        total_cycles,
        total_eq2: layers.iter().map(|r| r.a_eq2).sum(),
        fps: hw.clock_hz as f64 / total_cycles as f64,
        layers,
    }
}

/// Measured per-layer row: the prediction columns plus effective
/// multiplications and overhead shares of the layer's peak.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerReport {
    #[serde(rename = "L")]
    pub layer: usize,
    #[serde(rename = "Type")]
    pub kind: &'static str,
    #[serde(rename = "In_W")]
    pub in_w: usize,
    #[serde(rename = "In_H")]
    pub in_h: usize,
    #[serde(rename = "Out_W")]
    pub out_w: usize,
    #[serde(rename = "Out_H")]
    pub out_h: usize,
    #[serde(rename = "C")]
    pub c: usize,
    #[serde(rename = "F")]
    pub f: usize,
    #[serde(rename = "A")]
    pub a: u64,
    #[serde(rename = "A_eq2")]
    pub a_eq2: u64,
    #[serde(rename = "B")]
    pub b: u64,
    #[serde(rename = "C_peak")]
    pub c_peak: u64,
    pub internal_fragmentation: f64,
    pub padding: f64,
    pub external_fragmentation: f64,
    pub pipeline: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bit_exact: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub model: String,
    pub image: String,
    pub r_u: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eff_arch: Option<f64>,
    pub total_cycles: u64,
    pub fps: f64,
    pub effective_muls: u64,
    pub eq2_muls: u64,
    pub peak_muls: u64,
    pub overhead_shares: OverheadShares,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bit_exact: Option<bool>,
    pub per_layer: Vec<LayerReport>,
}

/// `bit_exact`, when given, holds one oracle comparison per layer.
pub fn run_report(
    model_name: &str,
    image_name: &str,
    stats: &CycleStats,
    resources: Option<&ResourceModel>,
    bit_exact: Option<&[bool]>,
) -> Result<RunReport> {
    let util = utilization(stats)?;
    let r_c = resources.map(composition);
    let per_layer = stats
        .layers
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let shares = OverheadShares::of(&l.overheads, l.peak_muls_c);
            LayerReport {
                layer: l.layer,
                kind: l.kind,
                in_w: l.w_in,
                in_h: l.h_in,
                out_w: l.w_out,
                out_h: l.h_out,
                c: l.c_in,
                f: l.f_out,
                a: l.effective_muls_a,
                a_eq2: l.eq2_muls,
                b: l.cycles_b,
                c_peak: l.peak_muls_c,
                internal_fragmentation: shares.internal_fragmentation,
                padding: shares.padding,
                external_fragmentation: shares.external_fragmentation,
                pipeline: shares.pipeline,
                bit_exact: bit_exact.map(|b| b[i]),
            }
        })
        .collect();
    Ok(RunReport {
        model: model_name.to_string(),
        image: image_name.to_string(),
        r_u: util.r_u,
        r_c,
        eff_arch: r_c.map(|c| eff_arch(util.r_u, c)),
        total_cycles: stats.total_cycles(),
        fps: stats.fps(),
        effective_muls: util.effective,
        eq2_muls: stats.total_eq2(),
        peak_muls: util.peak,
        overhead_shares: util.shares,
        bit_exact: bit_exact.map(|b| b.iter().all(|&x| x)),
        per_layer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sot::compile_sot;

    #[test]
    fn ssd_prediction_totals() {
        let hw = HwConfig::default();
        let model = CnnModel::ssd_mobilenet_v1_300();
        let rep = predict_report(&model, &compile_sot(&model, &hw).unwrap(), &hw);
        assert_eq!(rep.layers.len(), 47);
        assert_eq!(rep.total_cycles, 4_958_821);
        assert!((rep.fps - 40.33).abs() < 0.01);
        assert!(rep.layers.iter().all(|r| r.c_peak == r.b * 256));
    }
}
