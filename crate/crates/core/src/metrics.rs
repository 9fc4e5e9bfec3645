//! Multiplier composition and utilization metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sot::{CycleStats, Overheads};

const TABLE3: &str = include_str!("../data/table3_resources.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceUnit {
    pub unit: String,
    /// Resources of the unit, multipliers included.
    pub resources: u64,
    /// The part of `resources` spent on multipliers.
    #[serde(default)]
    pub multiplier_resources: u64,
}

/// Resource cost table of a system, e.g. LUTs or transistor counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceModel {
    pub name: String,
    pub units: Vec<ResourceUnit>,
}

impl ResourceModel {
    /// LUT counts of the reference FPGA implementation.
    pub fn reference_fpga() -> Self {
        Self::from_json(TABLE3).expect("bundled resource table is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rm: ResourceModel = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        rm.validate()?;
        Ok(rm)
    }

    pub fn validate(&self) -> Result<()> {
        for u in &self.units {
            if u.multiplier_resources > u.resources {
                return Err(Error::Config(format!(
                    "unit {}: multiplier resources {} exceed total {}",
                    u.unit, u.multiplier_resources, u.resources
                )));
            }
        }
        if self.total() == 0 {
            return Err(Error::Config("resource model has no resources".into()));
        }
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.units.iter().map(|u| u.resources).sum()
    }

    pub fn multiplier_total(&self) -> u64 {
        self.units.iter().map(|u| u.multiplier_resources).sum()
    }
}

/// Share of all resources spent on multipliers, `R_c`.
pub fn composition(rm: &ResourceModel) -> f64 {
    let total = rm.total();
    if total == 0 {
        return 0.0;
    }
    rm.multiplier_total() as f64 / total as f64
}

pub fn eff_arch(r_u: f64, r_c: f64) -> f64 {
    r_u * r_c
}

/// Overhead categories as fractions of peak multiplier-cycles.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct OverheadShares {
    pub internal_fragmentation: f64,
    pub padding: f64,
    pub external_fragmentation: f64,
    pub pipeline: f64,
}

impl OverheadShares {
    pub fn of(o: &Overheads, peak: u64) -> Self {
        let f = |v: u64| if peak == 0 { 0.0 } else { v as f64 / peak as f64 };
        OverheadShares {
            internal_fragmentation: f(o.internal_fragmentation),
            padding: f(o.padding),
            external_fragmentation: f(o.external_fragmentation),
            pipeline: f(o.pipeline),
        }
    }

    pub fn sum(&self) -> f64 {
        self.internal_fragmentation + self.padding + self.external_fragmentation + self.pipeline
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UtilizationReport {
    /// Effective over peak multiplications, `R_u`.
    pub r_u: f64,
    pub effective: u64,
    pub peak: u64,
    pub shares: OverheadShares,
    pub overheads: Overheads,
}

pub fn utilization(stats: &CycleStats) -> Result<UtilizationReport> {
    if stats.layers.is_empty() {
        return Err(Error::EmptyStats);
    }
    let peak = stats.total_peak();
    let effective = stats.total_effective();
    let overheads = stats.total_overheads();
    Ok(UtilizationReport {
        r_u: effective as f64 / peak as f64,
        effective,
        peak,
        shares: OverheadShares::of(&overheads, peak),
        overheads,
    })
}
