//! Hardware neuron: synapse unit (multipliers with distributed weight
//! memories), dendrite unit (adder tree, accumulator, Netsum memory) and
//! soma unit (bias, activation, requantization).

use crate::error::{Error, Result};
use crate::hw::{check_shape, HnShape, HwConfig};
use crate::model::LayerSpec;
use crate::numeric::NumericProfile;

/// Partition of the multiplier pool for one filter size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HnConfig {
    pub k: usize,
    pub p: usize,
    pub q: usize,
    pub m: usize,
    pub multipliers_used: usize,
}

impl HnConfig {
    /// Leaves of each adder tree.
    pub fn tree_leaves(&self) -> usize {
        self.k * self.k * self.p
    }

    /// Multipliers outside every tree (the external fragmentation source).
    pub fn idle_multipliers(&self) -> usize {
        self.m - self.multipliers_used
    }
}

pub fn configure_hn(hw: &HwConfig, k: usize) -> Result<HnConfig> {
    configure_hn_with(hw, k, hw.shape_for(k)?)
}

/// Like [`configure_hn`] with an explicit `(p, q)` request.
pub fn configure_hn_with(hw: &HwConfig, k: usize, shape: HnShape) -> Result<HnConfig> {
    check_shape(hw.m, hw.r, k, shape)?;
    Ok(HnConfig {
        k,
        p: shape.p,
        q: shape.q,
        m: hw.m,
        multipliers_used: shape.q * k * k * shape.p,
    })
}

/// State of one hardware neuron.
#[derive(Debug, Clone)]
pub struct HnState {
    lanes: usize,
    weight_depth: usize,
    /// `lanes` distributed memories, `weight_depth` words each.
    weight_mem: Vec<i32>,
    pub weight_addr: usize,
    netsum_mem: Vec<i64>,
    bias_mem: Vec<i64>,
}

impl HnState {
    pub fn new(lanes: usize, weight_depth: usize, netsum_depth: usize, bias_depth: usize) -> Self {
        HnState {
            lanes,
            weight_depth,
            weight_mem: vec![0; lanes * weight_depth],
            weight_addr: 0,
            netsum_mem: vec![0; netsum_depth],
            bias_mem: vec![0; bias_depth],
        }
    }

    pub fn lanes(&self) -> usize {
        self.lanes
    }

    /// Tree width for the current layer may be smaller than the memories
    /// provisioned; only the first `lanes` are used.
    pub fn set_lanes(&mut self, lanes: usize) {
        assert!(lanes * self.weight_depth <= self.weight_mem.len());
        self.lanes = lanes;
    }

    pub fn load_weight(&mut self, lane: usize, addr: usize, value: i32) {
        self.weight_mem[lane * self.weight_depth + addr] = value;
    }

    pub fn load_bias(&mut self, addr: usize, value: i64) {
        self.bias_mem[addr] = value;
    }

    pub fn bias(&self, addr: usize) -> i64 {
        self.bias_mem[addr]
    }

    pub fn netsum(&self, pos: usize) -> i64 {
        self.netsum_mem[pos]
    }

    /// Multiplies each input by the word at `weight_addr` of its lane's memory.
    #[inline]
    pub fn snu_step(&self, inputs: &[i32], products: &mut [i64]) {
        let a = self.weight_addr;
        for (lane, (&v, out)) in inputs.iter().zip(products.iter_mut()).enumerate().take(self.lanes) {
            *out = v as i64 * self.weight_mem[lane * self.weight_depth + a] as i64;
        }
    }

    /// Adds the products and folds them into the Netsum memory. Returns the
    /// accumulated value on the last pass only.
    #[inline]
    pub fn du_step(
        &mut self,
        products: &[i64],
        pass: usize,
        last_pass: bool,
        pos: usize,
        profile: &NumericProfile,
        layer: usize,
    ) -> Result<Option<i64>> {
        let tree: i128 = products[..self.lanes].iter().map(|&p| p as i128).sum();
        let acc = if pass == 0 {
            tree
        } else {
            self.netsum_mem[pos] as i128 + tree
        };
        if !profile.fits_accumulator(acc) {
            return Err(Error::Overflow {
                layer,
                value: acc,
                bits: profile.accumulator_bits,
            });
        }
        self.netsum_mem[pos] = acc as i64;
        Ok(last_pass.then_some(acc as i64))
    }

    /// Soma unit for output map whose bias sits at `bias_addr`.
    pub fn su_step(
        &self,
        netsum: i64,
        bias_addr: usize,
        layer: &LayerSpec,
        profile: &NumericProfile,
    ) -> Result<i32> {
        su_step(netsum, self.bias_mem[bias_addr], layer, profile)
    }
}

/// Bias, activation and requantization; pooling is a no-op hook.
pub fn su_step(netsum: i64, bias: i64, layer: &LayerSpec, profile: &NumericProfile) -> Result<i32> {
    profile.finish(layer.index, netsum, bias, layer.activation)
}
