//! Cycle-by-cycle execution of an SOT program over the memory part and the
//! HN pool.

use std::ops::Range;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hn::HnState;
use crate::hw::HwConfig;
use crate::memory::{MemoryArrayUnit, ReceptorUnit};
use crate::numeric::NumericProfile;
use crate::oracle::count_mul_eq2;
use crate::tensor::FeatureMapTensor;
use crate::weights::WeightStore;

use super::program::{predict_cycles, SotProgram, SotRow};

/// Multiplier-cycles lost per category.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Overheads {
    /// HN slots with no output map to produce, plus tree lanes fed by input
    /// channels past `C` on the last channel group.
    pub internal_fragmentation: u64,
    /// Products whose activation was masked to zero.
    pub padding: u64,
    /// Multipliers outside every adder tree.
    pub external_fragmentation: u64,
    /// Charged fill/drain cycles `W_out + D`.
    pub pipeline: u64,
}

impl Overheads {
    pub fn total(&self) -> u64 {
        self.internal_fragmentation + self.padding + self.external_fragmentation + self.pipeline
    }
}

impl std::ops::AddAssign for Overheads {
    fn add_assign(&mut self, o: Self) {
        self.internal_fragmentation += o.internal_fragmentation;
        self.padding += o.padding;
        self.external_fragmentation += o.external_fragmentation;
        self.pipeline += o.pipeline;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LayerStats {
    pub layer: usize,
    pub kind: &'static str,
    pub w_in: usize,
    pub h_in: usize,
    pub w_out: usize,
    pub h_out: usize,
    pub c_in: usize,
    pub f_out: usize,
    /// Cycles that delivered a window to the HNs.
    pub compute_cycles: u64,
    /// Charged cycles: compute plus `W_out + D`.
    pub cycles_b: u64,
    pub peak_muls_c: u64,
    pub effective_muls_a: u64,
    pub eq2_muls: u64,
    pub overheads: Overheads,
    /// Cycles actually stepped, including receptor fill.
    pub simulated_cycles: u64,
    pub memory_reads: u64,
    pub memory_writes: u64,
    /// Values handed from the receptor unit to the HNs.
    pub delivered_values: u64,
}

impl LayerStats {
    /// `effective + overheads == peak`.
    pub fn partition_holds(&self) -> bool {
        self.effective_muls_a + self.overheads.total() == self.peak_muls_c
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CycleStats {
    pub m: usize,
    pub clock_hz: u64,
    pub layers: Vec<LayerStats>,
}

impl CycleStats {
    pub fn total_cycles(&self) -> u64 {
        self.layers.iter().map(|l| l.cycles_b).sum()
    }

    pub fn total_peak(&self) -> u64 {
        self.layers.iter().map(|l| l.peak_muls_c).sum()
    }

    pub fn total_effective(&self) -> u64 {
        self.layers.iter().map(|l| l.effective_muls_a).sum()
    }

    pub fn total_eq2(&self) -> u64 {
        self.layers.iter().map(|l| l.eq2_muls).sum()
    }

    pub fn total_overheads(&self) -> Overheads {
        let mut o = Overheads::default();
        for l in &self.layers {
            o += l.overheads;
        }
        o
    }

    pub fn fps(&self) -> f64 {
        self.clock_hz as f64 / self.total_cycles() as f64
    }
}

/// Faults that can be switched on to check that the test harness notices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// The masking circuit lets one column/row past the right/bottom edge through.
    MaskOffByOne,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReceptorProbe {
    pub layer: usize,
    pub lane: usize,
    /// Cycles relative to the masking epoch; fill cycles are negative.
    pub cycles: Range<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HnProbe {
    pub layer: usize,
    pub hn: usize,
    pub cycles: Range<i64>,
}

#[derive(Debug, Clone, Default)]
pub struct ExecOptions {
    pub fault: Option<Fault>,
    pub receptor_probe: Option<ReceptorProbe>,
    pub hn_probe: Option<HnProbe>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReceptorTraceRow {
    pub t: i64,
    /// Unit entering the receptor this cycle (one value for stride 1).
    pub input: Vec<i32>,
    /// Raw tap registers, `None` where nothing has arrived yet.
    pub registers: Vec<Option<i32>>,
    pub x: Option<usize>,
    pub y: Option<usize>,
    pub output: Option<Vec<i32>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HnTraceRow {
    pub t: i64,
    pub pass: usize,
    pub pos: usize,
    pub weight_addr: usize,
    pub products: Vec<i64>,
    pub tree_sum: i64,
    pub accumulator: i64,
    pub output: Option<i32>,
}

#[derive(Debug, Clone)]
pub struct ExecOutput {
    /// Output tensor of every layer, read back from the MAU.
    pub outputs: Vec<FeatureMapTensor>,
    pub stats: CycleStats,
    pub receptor_trace: Vec<ReceptorTraceRow>,
    pub hn_trace: Vec<HnTraceRow>,
}

/// The accelerator state. MAU contents and HN memories persist from one
/// image to the next, as they would when the SOT wraps around.
pub struct Machine<'a> {
    program: &'a SotProgram,
    hw: &'a HwConfig,
    profile: &'a NumericProfile,
    mau: MemoryArrayUnit,
    hns: Vec<HnState>,
    options: ExecOptions,
}

impl<'a> Machine<'a> {
    pub fn new(program: &'a SotProgram, hw: &'a HwConfig, profile: &'a NumericProfile) -> Self {
        let q = hw.config_table.values().map(|s| s.q).max().unwrap_or(0);
        let lanes = hw
            .config_table
            .iter()
            .map(|(&k, s)| k * k * s.p)
            .chain(std::iter::once(9))
            .max()
            .unwrap_or(0);
        let netsum = program.rows.iter().map(|r| r.w_out * r.h_out).max().unwrap_or(0);
        let hns = (0..q)
            .map(|_| HnState::new(lanes, program.weight_depth(), netsum, program.bias_depth()))
            .collect();
        Machine {
            program,
            hw,
            profile,
            mau: MemoryArrayUnit::new(hw.r, hw.bank_depth),
            hns,
            options: ExecOptions::default(),
        }
    }

    pub fn with_options(mut self, options: ExecOptions) -> Self {
        self.options = options;
        self
    }

    pub fn mau(&self) -> &MemoryArrayUnit {
        &self.mau
    }

    pub fn run(&mut self, weights: &WeightStore, image: &FeatureMapTensor) -> Result<ExecOutput> {
        let mut out = ExecOutput {
            outputs: Vec::with_capacity(self.program.len()),
            stats: CycleStats {
                m: self.hw.m,
                clock_hz: self.hw.clock_hz,
                layers: Vec::with_capacity(self.program.len()),
            },
            receptor_trace: Vec::new(),
            hn_trace: Vec::new(),
        };
        let Some(first) = self.program.rows.first() else {
            return Ok(out);
        };
        if image.shape() != (first.c_in, first.w_in, first.h_in) {
            let (c, w, h) = image.shape();
            return Err(Error::Shape {
                layer: 1,
                message: format!(
                    "image {}x{}x{} does not match input {}x{}x{}",
                    c, w, h, first.c_in, first.w_in, first.h_in
                ),
            });
        }
        if weights.len() != self.program.len() {
            return Err(Error::Shape {
                layer: 0,
                message: format!("{} weight sets for {} SOT rows", weights.len(), self.program.len()),
            });
        }
        self.mau.load_tensor(&first.read_region(), image)?;
        for row in &self.program.rows {
            let stats = self.run_row(row, weights, &mut out)?;
            out.outputs
                .push(self.mau.read_tensor(&row.write_region(), row.out_maps(), row.w_out, row.h_out));
            out.stats.layers.push(stats);
        }
        Ok(out)
    }

    fn preload(&mut self, row: &SotRow, weights: &WeightStore) -> Result<()> {
        let lw = weights.layer(row.layer_index);
        if lw.filters != row.out_maps() || lw.k != row.k || lw.channels != if row.is_depthwise() { 1 } else { row.c_in } {
            return Err(Error::Shape {
                layer: row.layer_index,
                message: "weights do not match SOT row".into(),
            });
        }
        let kk = row.k * row.k;
        let lanes = if row.is_depthwise() { kk } else { kk * row.p };
        for hn in &mut self.hns {
            hn.set_lanes(lanes);
        }
        for g in 0..row.passes_f {
            for (j, hn) in self.hns.iter_mut().enumerate().take(row.q) {
                let f = g * row.q + j;
                if f >= row.out_maps() {
                    continue;
                }
                hn.load_bias(row.bias_base + g, lw.bias(f));
                if row.is_depthwise() {
                    for (tap, &w) in lw.taps(f, 0).iter().enumerate() {
                        hn.load_weight(tap, row.weight_base + g, w);
                    }
                    continue;
                }
                for cp in 0..row.passes_c {
                    let addr = row.weight_base + g * row.passes_c + cp;
                    for lane in 0..row.p {
                        let c = cp * row.p + lane;
                        for tap in 0..kk {
                            let w = if c < row.c_in { lw.taps(f, c)[tap] } else { 0 };
                            hn.load_weight(lane * kk + tap, addr, w);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn run_row(&mut self, row: &SotRow, weights: &WeightStore, out: &mut ExecOutput) -> Result<LayerStats> {
        self.preload(row, weights)?;
        let layer = row.layer_spec();
        let profile = self.profile;
        let dw = row.is_depthwise();
        let (k, p, q, s) = (row.k, row.p, row.q, row.stride);
        let kk = k * k;
        let m = self.hw.m as u64;
        let lanes_read = if dw { q } else { p };
        let npos = row.w_out * row.h_out;
        let units_total = row.passes_c * row.passes_f * npos;
        let (read, write) = (row.read_region(), row.write_region());
        let out_maps = row.out_maps();
        let channel_of = |g: usize, cp: usize, lane: usize| if dw { g * q + lane } else { cp * p + lane };

        let mut ru = ReceptorUnit::new(k, s, lanes_read, row.w_in, row.h_in);
        if self.options.fault == Some(Fault::MaskOffByOne) {
            ru.inject_mask_fault();
        }
        let lead = ru.fill_latency();
        let mut units = vec![vec![0i32; s * s]; lanes_read];
        let mut window = vec![0i32; lanes_read * kk];
        let mut in_bounds = vec![false; lanes_read * kk];
        let mut products = vec![0i64; kk * p];
        let counters_before = self.mau.counters();

        let rprobe = self
            .options
            .receptor_probe
            .clone()
            .filter(|pr| pr.layer == row.layer_index && pr.lane < lanes_read);
        let hprobe = self
            .options
            .hn_probe
            .clone()
            .filter(|pr| pr.layer == row.layer_index && pr.hn < q);

        let mut stats = LayerStats {
            layer: row.layer_index,
            kind: row.kind.label(),
            w_in: row.w_in,
            h_in: row.h_in,
            w_out: row.w_out,
            h_out: row.h_out,
            c_in: row.c_in,
            f_out: row.f_out,
            compute_cycles: 0,
            cycles_b: 0,
            peak_muls_c: 0,
            effective_muls_a: 0,
            eq2_muls: count_mul_eq2(&layer),
            overheads: Overheads::default(),
            simulated_cycles: 0,
            memory_reads: 0,
            memory_writes: 0,
            delivered_values: 0,
        };
        let external = m - (q * kk * p) as u64;

        for cyc in 0..units_total + lead {
            if cyc < units_total {
                let n = cyc / npos;
                let r = cyc % npos;
                let (bx, by) = (r % row.w_out, r / row.w_out);
                let (g, cp) = (n / row.passes_c, n % row.passes_c);
                self.mau.read_select = channel_of(g, cp, 0) % self.hw.r;
                for (lane, unit) in units.iter_mut().enumerate() {
                    let c = channel_of(g, cp, lane);
                    if c < row.c_in {
                        self.mau.read_block(&read, c, bx, by, s, row.w_in, row.h_in, unit)?;
                    } else {
                        unit.fill(0);
                    }
                }
            } else {
                units.iter_mut().for_each(|u| u.fill(0));
            }
            let refs: Vec<&[i32]> = units.iter().map(|u| &u[..]).collect();
            let info = ru.step(&refs, &mut window, &mut in_bounds);
            stats.simulated_cycles += 1;

            if let Some(pr) = &rprobe {
                let t = cyc as i64 - lead as i64;
                if pr.cycles.contains(&t) {
                    let lane = pr.lane;
                    out.receptor_trace.push(ReceptorTraceRow {
                        t,
                        input: units[lane].clone(),
                        registers: ru
                            .receptor(lane)
                            .map(|r| r.registers())
                            .unwrap_or_else(|| vec![Some(units[lane][0])]),
                        x: info.map(|i| i.x),
                        y: info.map(|i| i.y),
                        output: info.map(|_| window[lane * kk..(lane + 1) * kk].to_vec()),
                    });
                }
            }

            let Some(info) = info else {
                self.mau.end_cycle();
                continue;
            };
            stats.compute_cycles += 1;
            stats.delivered_values += (lanes_read * kk) as u64;
            let n = info.map;
            let (g, cp) = (n / row.passes_c, n % row.passes_c);
            let pos = info.y * row.w_out + info.x;
            let last_pass = cp + 1 == row.passes_c;

            // multiplier activity for this cycle
            let inb = |lane: usize| in_bounds[lane * kk..(lane + 1) * kk].iter().filter(|&&b| b).count() as u64;
            let assigned = q.min(out_maps.saturating_sub(g * q));
            let o = &mut stats.overheads;
            o.external_fragmentation += external;
            if dw {
                for j in 0..assigned {
                    let e = inb(j);
                    stats.effective_muls_a += e;
                    o.padding += kk as u64 - e;
                }
                o.internal_fragmentation += ((q - assigned) * kk) as u64;
            } else {
                let valid = p.min(row.c_in - cp * p);
                let e: u64 = (0..valid).map(inb).sum();
                stats.effective_muls_a += assigned as u64 * e;
                o.padding += assigned as u64 * ((valid * kk) as u64 - e);
                o.internal_fragmentation += ((q - assigned) * kk * p + assigned * (p - valid) * kk) as u64;
            }

            for j in 0..assigned {
                let f = g * q + j;
                let hn = &mut self.hns[j];
                hn.weight_addr = row.weight_base + if dw { g } else { g * row.passes_c + cp };
                let inputs = if dw { &window[j * kk..(j + 1) * kk] } else { &window[..kk * p] };
                hn.snu_step(inputs, &mut products);
                let result = hn.du_step(&products, cp, last_pass, pos, profile, row.layer_index)?;
                let value = match result {
                    Some(acc) => {
                        let v = hn.su_step(acc, row.bias_base + g, &layer, profile)?;
                        self.mau.write(&write, f, pos, v).map_err(|e| match e {
                            Error::Capacity { message, .. } => Error::Capacity {
                                layer: row.layer_index,
                                message,
                            },
                            e => e,
                        })?;
                        Some(v)
                    }
                    None => None,
                };
                if let Some(pr) = &hprobe {
                    if pr.hn == j && pr.cycles.contains(&(info.t as i64)) {
                        let lanes = hn.lanes();
                        out.hn_trace.push(HnTraceRow {
                            t: info.t as i64,
                            pass: cp,
                            pos,
                            weight_addr: hn.weight_addr,
                            products: products[..lanes].to_vec(),
                            tree_sum: products[..lanes].iter().sum(),
                            accumulator: hn.netsum(pos),
                            output: value,
                        });
                    }
                }
            }
            self.mau.end_cycle();
        }

        let counters = self.mau.counters();
        stats.memory_reads = counters.reads - counters_before.reads;
        stats.memory_writes = counters.writes - counters_before.writes;
        debug_assert_eq!(stats.compute_cycles, row.compute_cycles());
        stats.cycles_b = stats.compute_cycles + row.w_out as u64 + self.hw.pipeline_overhead_const;
        debug_assert_eq!(stats.cycles_b, predict_cycles(row, self.hw));
        stats.peak_muls_c = stats.cycles_b * m;
        stats.overheads.pipeline = (row.w_out as u64 + self.hw.pipeline_overhead_const) * m;
        Ok(stats)
    }
}

pub fn execute(
    program: &SotProgram,
    weights: &WeightStore,
    image: &FeatureMapTensor,
    hw: &HwConfig,
    profile: &NumericProfile,
) -> Result<(Vec<FeatureMapTensor>, CycleStats)> {
    let out = Machine::new(program, hw, profile).run(weights, image)?;
    Ok((out.outputs, out.stats))
}

pub fn execute_with(
    program: &SotProgram,
    weights: &WeightStore,
    image: &FeatureMapTensor,
    hw: &HwConfig,
    profile: &NumericProfile,
    options: ExecOptions,
) -> Result<ExecOutput> {
    Machine::new(program, hw, profile).with_options(options).run(weights, image)
}
