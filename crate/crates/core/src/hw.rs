//! Global hardware parameters.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Receptor group width `p` and hardware-neuron count `q` for one filter size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HnShape {
    pub p: usize,
    pub q: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HwConfig {
    /// Multiplier (and adder) pool size.
    pub m: usize,
    /// MAU bank count.
    pub r: usize,
    pub clock_hz: u64,
    /// Filter size `k` to HN partition.
    pub config_table: BTreeMap<usize, HnShape>,
    /// Calibrated per-layer pipeline fill/drain cycles `D`.
    pub pipeline_overhead_const: u64,
    /// Words per MAU bank.
    #[serde(default = "default_bank_depth")]
    pub bank_depth: usize,
}

fn default_bank_depth() -> usize {
    1 << 17
}

impl Default for HwConfig {
    fn default() -> Self {
        HwConfig {
            m: 256,
            r: 32,
            clock_hz: 200_000_000,
            config_table: BTreeMap::from([(3, HnShape { p: 1, q: 28 }), (1, HnShape { p: 16, q: 16 })]),
            pipeline_overhead_const: 57,
            bank_depth: default_bank_depth(),
        }
    }
}

impl HwConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let hw: HwConfig = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        hw.validate()?;
        Ok(hw)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("hardware config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.r == 0 || self.clock_hz == 0 || self.bank_depth == 0 {
            return Err(Error::Config("m, r, clock_hz and bank_depth must be positive".into()));
        }
        for (&k, shape) in &self.config_table {
            check_shape(self.m, self.r, k, *shape)?;
        }
        Ok(())
    }

    pub fn shape_for(&self, k: usize) -> Result<HnShape> {
        self.config_table
            .get(&k)
            .copied()
            .ok_or_else(|| Error::Config(format!("no hardware configuration for k={}", k)))
    }
}

pub(crate) fn check_shape(m: usize, r: usize, k: usize, shape: HnShape) -> Result<()> {
    let HnShape { p, q } = shape;
    if k == 0 || k.is_multiple_of(2) {
        return Err(Error::Config(format!("filter size k={} must be odd", k)));
    }
    if p == 0 || q == 0 {
        return Err(Error::Config(format!("k={}: p and q must be positive", k)));
    }
    let used = q * k * k * p;
    if used > m {
        return Err(Error::Config(format!(
            "k={}: q*k*k*p = {}*{}*{}*{} = {} exceeds {} multipliers",
            k, q, k, k, p, used, m
        )));
    }
    if q > r || p > r {
        return Err(Error::Config(format!(
            "k={}: p={} and q={} must not exceed {} banks",
            k, p, q, r
        )));
    }
    Ok(())
}
