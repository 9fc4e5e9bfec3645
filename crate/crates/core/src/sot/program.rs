//! Stage operation table: one row of control words per layer, the compiler
//! that produces it, and its binary file format.
//!
//! File layout (little-endian): magic `b"SOT1"`, a version byte, the row
//! count as `u32`, then each row as 19 `u32` words in [`SotRow`] field order.

use crate::error::{Error, Result};
use crate::hn::configure_hn;
use crate::hw::HwConfig;
use crate::memory::MapRegion;
use crate::model::{Activation, CnnModel, LayerKind, LayerSpec};

pub const SOT_MAGIC: &[u8; 4] = b"SOT1";
pub const SOT_VERSION: u8 = 1;
const HEADER_LEN: usize = 9;
const ROW_WORDS: usize = 19;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SotRow {
    pub layer_index: usize,
    pub kind: LayerKind,
    pub k: usize,
    pub p: usize,
    pub q: usize,
    pub stride: usize,
    pub w_in: usize,
    pub h_in: usize,
    pub w_out: usize,
    pub h_out: usize,
    pub c_in: usize,
    pub f_out: usize,
    pub passes_c: usize,
    pub passes_f: usize,
    pub read_base: usize,
    pub write_base: usize,
    pub weight_base: usize,
    pub activation: Activation,
    pub bias_base: usize,
}

impl SotRow {
    pub fn is_depthwise(&self) -> bool {
        self.kind == LayerKind::Dw3x3
    }

    pub fn out_maps(&self) -> usize {
        if self.is_depthwise() {
            self.c_in
        } else {
            self.f_out
        }
    }

    /// Weight memory words each HN needs for this row.
    pub fn weight_words(&self) -> usize {
        self.passes_c * self.passes_f
    }

    pub fn compute_cycles(&self) -> u64 {
        (self.passes_c * self.passes_f * self.w_out * self.h_out) as u64
    }

    pub fn read_region(&self) -> MapRegion {
        MapRegion {
            base: self.read_base,
            map_words: self.w_in * self.h_in,
        }
    }

    pub fn write_region(&self) -> MapRegion {
        MapRegion {
            base: self.write_base,
            map_words: self.w_out * self.h_out,
        }
    }

    /// The layer shape this row encodes (the bias flag is not part of the
    /// control word; absent biases are stored as zeros).
    pub fn layer_spec(&self) -> LayerSpec {
        LayerSpec {
            index: self.layer_index,
            kind: self.kind,
            w_in: self.w_in,
            h_in: self.h_in,
            w_out: self.w_out,
            h_out: self.h_out,
            c_in: self.c_in,
            f_out: self.f_out,
            k: self.k,
            stride: self.stride,
            activation: self.activation,
            has_bias: true,
            source: None,
        }
    }

    fn words(&self) -> [usize; ROW_WORDS] {
        [
            self.layer_index,
            self.kind.code() as usize,
            self.k,
            self.p,
            self.q,
            self.stride,
            self.w_in,
            self.h_in,
            self.w_out,
            self.h_out,
            self.c_in,
            self.f_out,
            self.passes_c,
            self.passes_f,
            self.read_base,
            self.write_base,
            self.weight_base,
            self.activation.code() as usize,
            self.bias_base,
        ]
    }

    fn from_words(w: [u32; ROW_WORDS]) -> Result<Self> {
        let u = |i: usize| w[i] as usize;
        Ok(SotRow {
            layer_index: u(0),
            kind: LayerKind::from_code(w[1]).ok_or_else(|| Error::Format(format!("bad layer kind code {}", w[1])))?,
            k: u(2),
            p: u(3),
            q: u(4),
            stride: u(5),
            w_in: u(6),
            h_in: u(7),
            w_out: u(8),
            h_out: u(9),
            c_in: u(10),
            f_out: u(11),
            passes_c: u(12),
            passes_f: u(13),
            read_base: u(14),
            write_base: u(15),
            weight_base: u(16),
            activation: Activation::from_code(w[17])
                .ok_or_else(|| Error::Format(format!("bad activation code {}", w[17])))?,
            bias_base: u(18),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SotProgram {
    pub rows: Vec<SotRow>,
}

impl SotProgram {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Where the input image is loaded: the read region of the first row.
    pub fn image_region(&self) -> Option<MapRegion> {
        self.rows.first().map(SotRow::read_region)
    }

    /// Weight words per HN memory, covering both halves of the double buffer.
    pub fn weight_depth(&self) -> usize {
        2 * self.rows.iter().map(SotRow::weight_words).max().unwrap_or(0)
    }

    pub fn bias_depth(&self) -> usize {
        2 * self.rows.iter().map(|r| r.passes_f).max().unwrap_or(0)
    }
}

pub fn passes(kind: LayerKind, c_in: usize, f_out: usize, p: usize, q: usize) -> (usize, usize) {
    if kind == LayerKind::Dw3x3 {
        (1, c_in.div_ceil(q))
    } else {
        (c_in.div_ceil(p), f_out.div_ceil(q))
    }
}

/// Closed-form cycle count `passes_c * passes_f * W_out * H_out + W_out + D`.
pub fn predict_cycles(row: &SotRow, hw: &HwConfig) -> u64 {
    row.compute_cycles() + row.w_out as u64 + hw.pipeline_overhead_const
}

/// Bank words a tensor of `maps` maps of `w`×`h` occupies.
fn footprint(maps: usize, w: usize, h: usize, banks: usize) -> usize {
    maps.div_ceil(banks) * w * h
}

/// First-fit allocator over one bank's address range; every bank uses the
/// same layout.
struct BankAllocator {
    depth: usize,
    live: Vec<(usize, usize, usize)>,
}

impl BankAllocator {
    fn alloc(&mut self, owner: usize, size: usize) -> Option<usize> {
        self.live.sort_unstable_by_key(|&(start, _, _)| start);
        let mut cursor = 0;
        for &(start, end, _) in &self.live {
            if start >= cursor + size {
                break;
            }
            cursor = cursor.max(end);
        }
        if cursor + size > self.depth {
            return None;
        }
        self.live.push((cursor, cursor + size, owner));
        Some(cursor)
    }

    fn free(&mut self, owner: usize) {
        self.live.retain(|&(_, _, o)| o != owner);
    }
}

pub fn compile_sot(model: &CnnModel, hw: &HwConfig) -> Result<SotProgram> {
    hw.validate()?;
    for layer in &model.layers {
        configure_hn(hw, layer.k)?;
    }
    model.check()?;

    let mut rows: Vec<SotRow> = model
        .layers
        .iter()
        .map(|l| {
            let shape = hw.shape_for(l.k).expect("checked above");
            let (passes_c, passes_f) = passes(l.kind, l.c_in, l.f_out, shape.p, shape.q);
            SotRow {
                layer_index: l.index,
                kind: l.kind,
                k: l.k,
                p: shape.p,
                q: shape.q,
                stride: l.stride,
                w_in: l.w_in,
                h_in: l.h_in,
                w_out: l.w_out,
                h_out: l.h_out,
                c_in: l.c_in,
                f_out: l.f_out,
                passes_c,
                passes_f,
                read_base: 0,
                write_base: 0,
                weight_base: 0,
                activation: l.activation,
                bias_base: 0,
            }
        })
        .collect();

    // feature-map placement by liveness
    let last = model.last_consumers();
    let mut bank = BankAllocator {
        depth: hw.bank_depth,
        live: Vec::new(),
    };
    let mut bases = vec![0usize; model.len() + 1];
    if let Some((c, w, h)) = model.input_shape() {
        bases[0] = bank.alloc(0, footprint(c, w, h, hw.r)).ok_or_else(|| Error::Capacity {
            layer: 1,
            message: format!("input image needs {} words per bank, depth is {}", footprint(c, w, h, hw.r), hw.bank_depth),
        })?;
    }
    for (layer, row) in model.layers.iter().zip(rows.iter_mut()) {
        let size = footprint(layer.out_maps(), layer.w_out, layer.h_out, hw.r);
        let base = bank.alloc(layer.index, size).ok_or_else(|| Error::Capacity {
            layer: layer.index,
            message: format!(
                "{} output words per bank do not fit beside {} live words (depth {})",
                size,
                bank.live.iter().map(|&(s, e, _)| e - s).sum::<usize>(),
                hw.bank_depth
            ),
        })?;
        bases[layer.index] = base;
        row.read_base = bases[layer.source_layer()];
        row.write_base = base;
        for (producer, consumer) in last.iter().enumerate() {
            if *consumer == Some(layer.index) {
                bank.free(producer);
            }
        }
    }

    // weights and biases alternate between the two halves of the HN memories
    let weight_half = rows.iter().map(SotRow::weight_words).max().unwrap_or(0);
    let bias_half = rows.iter().map(|r| r.passes_f).max().unwrap_or(0);
    for (i, row) in rows.iter_mut().enumerate() {
        row.weight_base = (i % 2) * weight_half;
        row.bias_base = (i % 2) * bias_half;
    }
    Ok(SotProgram { rows })
}

pub fn save_sot(program: &SotProgram) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + program.len() * ROW_WORDS * 4);
    out.extend_from_slice(SOT_MAGIC);
    out.push(SOT_VERSION);
    out.extend_from_slice(&(program.len() as u32).to_le_bytes());
    for row in &program.rows {
        for w in row.words() {
            out.extend_from_slice(&(w as u32).to_le_bytes());
        }
    }
    out
}

pub fn load_sot(bytes: &[u8]) -> Result<SotProgram> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format("truncated SOT header".into()));
    }
    if &bytes[..4] != SOT_MAGIC {
        return Err(Error::Format("bad SOT magic".into()));
    }
    if bytes[4] != SOT_VERSION {
        return Err(Error::Format(format!("unsupported SOT version {}", bytes[4])));
    }
    let count = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let expected = HEADER_LEN + count * ROW_WORDS * 4;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "SOT with {} rows needs {} bytes, file has {}",
            count,
            expected,
            bytes.len()
        )));
    }
    let rows = bytes[HEADER_LEN..]
        .chunks_exact(ROW_WORDS * 4)
        .map(|chunk| {
            let mut words = [0u32; ROW_WORDS];
            for (w, b) in words.iter_mut().zip(chunk.chunks_exact(4)) {
                *w = u32::from_le_bytes(b.try_into().unwrap());
            }
            SotRow::from_words(words)
        })
        .collect::<Result<_>>()?;
    Ok(SotProgram { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trivial() -> CnnModel {
        CnnModel {
            name: "t".into(),
            layers: vec![LayerSpec {
                index: 1,
                kind: LayerKind::Conv1x1,
                w_in: 4,
                h_in: 4,
                w_out: 4,
                h_out: 4,
                c_in: 1,
                f_out: 1,
                k: 1,
                stride: 1,
                activation: Activation::None,
                has_bias: false,
                source: None,
            }],
        }
    }

    #[test]
    fn ssd_rows() {
        let prog = compile_sot(&CnnModel::ssd_mobilenet_v1_300(), &HwConfig::default()).unwrap();
        assert_eq!(prog.len(), 47);
        let r1 = &prog.rows[0];
        assert_eq!((r1.k, r1.p, r1.q, r1.passes_c, r1.passes_f), (3, 1, 28, 3, 2));
        let r3 = &prog.rows[2];
        assert_eq!((r3.p, r3.q, r3.passes_c, r3.passes_f), (16, 16, 2, 4));
    }

    #[test]
    fn trivial_single_row() {
        let prog = compile_sot(&trivial(), &HwConfig::default()).unwrap();
        assert_eq!(prog.len(), 1);
        assert_eq!((prog.rows[0].passes_c, prog.rows[0].passes_f), (1, 1));
        assert_ne!(prog.rows[0].read_base, prog.rows[0].write_base);
    }

    #[test]
    fn predicted_table_rows() {
        let hw = HwConfig::default();
        let prog = compile_sot(&CnnModel::ssd_mobilenet_v1_300(), &hw).unwrap();
        assert_eq!(predict_cycles(&prog.rows[0], &hw), 135_207);
        assert_eq!(predict_cycles(&prog.rows[5], &hw), 28_257);
        assert_eq!(predict_cycles(&prog.rows[42], &hw), 5_100);
    }

    #[test]
    fn regions_disjoint_per_row() {
        let hw = HwConfig::default();
        let prog = compile_sot(&CnnModel::ssd_mobilenet_v1_300(), &hw).unwrap();
        for r in &prog.rows {
            let read = (r.read_base, r.read_base + footprint(r.c_in, r.w_in, r.h_in, hw.r));
            let write = (r.write_base, r.write_base + footprint(r.out_maps(), r.w_out, r.h_out, hw.r));
            assert!(read.1 <= write.0 || write.1 <= read.0, "row {}", r.layer_index);
            assert!(write.1 <= hw.bank_depth);
        }
    }

    #[test]
    fn shallow_banks_are_a_capacity_error() {
        let hw = HwConfig {
            bank_depth: 20,
            ..HwConfig::default()
        };
        assert!(matches!(compile_sot(&trivial(), &hw), Err(Error::Capacity { layer: 1, .. })));
    }

    #[test]
    fn binary_round_trip() {
        let prog = compile_sot(&CnnModel::ssd_mobilenet_v1_300(), &HwConfig::default()).unwrap();
        let bytes = save_sot(&prog);
        assert_eq!(bytes.len(), 9 + 47 * 76);
        assert_eq!(load_sot(&bytes).unwrap(), prog);
    }

    #[test]
    fn empty_program_is_header_only() {
        let bytes = save_sot(&SotProgram::default());
        assert_eq!(bytes.len(), 9);
        assert!(load_sot(&bytes).unwrap().is_empty());
    }

    #[test]
    fn truncated_and_bad_magic_rejected() {
        let mut bytes = save_sot(&compile_sot(&trivial(), &HwConfig::default()).unwrap());
        bytes.pop();
        assert!(matches!(load_sot(&bytes), Err(Error::Format(_))));
        assert!(matches!(load_sot(b"SOT2\x01\0\0\0\0"), Err(Error::Format(_))));
        assert!(matches!(load_sot(b"SOT1\x07\0\0\0\0"), Err(Error::Format(_))));
    }
}
