//! Memory array unit: `R` dual-port banks. Feature map `f` lives in bank
//! `f mod R`; the write-side barrel shifter and read-side selector are
//! modeled as that placement function plus per-cycle port bookkeeping.
//!
//! Writes issued during a cycle are staged and only land in `end_cycle`, so a
//! read in the same cycle sees the old contents.

use crate::error::{Error, Result};
use crate::tensor::FeatureMapTensor;

/// Placement of one tensor's maps: map `c` occupies words
/// `base + (c / R) * map_words ..` of bank `c mod R`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MapRegion {
    pub base: usize,
    pub map_words: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PortCounters {
    pub reads: u64,
    pub writes: u64,
}

#[derive(Debug, Clone)]
pub struct MemoryArrayUnit {
    banks: Vec<Vec<i32>>,
    depth: usize,
    /// Barrel-shifter offset: write lane `j` targets bank `(j + write_shift) mod R`.
    pub write_shift: usize,
    /// First of the consecutive banks currently routed to the read port.
    pub read_select: usize,
    pending: Vec<(usize, usize, i32)>,
    read_busy: Vec<bool>,
    write_busy: Vec<bool>,
    counters: PortCounters,
}

impl MemoryArrayUnit {
    pub fn new(banks: usize, depth: usize) -> Self {
        assert!(banks > 0, "at least one bank");
        MemoryArrayUnit {
            banks: vec![vec![0; depth]; banks],
            depth,
            write_shift: 0,
            read_select: 0,
            pending: Vec::new(),
            read_busy: vec![false; banks],
            write_busy: vec![false; banks],
            counters: PortCounters::default(),
        }
    }

    pub fn bank_count(&self) -> usize {
        self.banks.len()
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    #[inline]
    pub fn bank_of(&self, map: usize) -> usize {
        map % self.banks.len()
    }

    #[inline]
    pub fn address(&self, region: &MapRegion, map: usize, pos: usize) -> usize {
        region.base + (map / self.banks.len()) * region.map_words + pos
    }

    pub fn counters(&self) -> PortCounters {
        self.counters
    }

    fn claim_read(&mut self, bank: usize) -> Result<()> {
        if std::mem::replace(&mut self.read_busy[bank], true) {
            return Err(Error::BankConflict { bank, writes: 0 });
        }
        self.counters.reads += 1;
        Ok(())
    }

    /// Single-word read through the selector.
    pub fn read(&mut self, region: &MapRegion, map: usize, pos: usize) -> Result<i32> {
        let bank = self.bank_of(map);
        self.claim_read(bank)?;
        let addr = self.address(region, map, pos);
        Ok(self.banks[bank][addr])
    }

    /// Wide read of the `stride`×`stride` block at block coordinates
    /// `(bx, by)` of a `w`×`h` map, as one port access. Pixels past the map
    /// edge read as zero.
    #[allow(clippy::too_many_arguments)]
    pub fn read_block(
        &mut self,
        region: &MapRegion,
        map: usize,
        bx: usize,
        by: usize,
        stride: usize,
        w: usize,
        h: usize,
        out: &mut [i32],
    ) -> Result<()> {
        let bank = self.bank_of(map);
        self.claim_read(bank)?;
        let base = self.address(region, map, 0);
        let data = &self.banks[bank];
        for sy in 0..stride {
            for sx in 0..stride {
                let (x, y) = (bx * stride + sx, by * stride + sy);
                out[sy * stride + sx] = if x < w && y < h { data[base + y * w + x] } else { 0 };
            }
        }
        Ok(())
    }

    /// The `p` values the selector presents at scan cycle `t` of a `w`×`h`
    /// map sequence: maps `floor(t / (w*h)) * p + 0..p` at raster position
    /// `t mod (w*h)`. Maps at or past `maps` read as zero without touching a
    /// bank.
    pub fn scan_read(
        &mut self,
        region: &MapRegion,
        w: usize,
        h: usize,
        maps: usize,
        t: usize,
        p: usize,
    ) -> Result<Vec<i32>> {
        let group = t / (w * h);
        let pos = t % (w * h);
        self.read_select = (group * p) % self.banks.len();
        let mut out = Vec::with_capacity(p);
        for lane in 0..p {
            let c = group * p + lane;
            out.push(if c < maps { self.read(region, c, pos)? } else { 0 });
        }
        Ok(out)
    }

    /// Stages a write of map `map`, raster position `pos`.
    pub fn write(&mut self, region: &MapRegion, map: usize, pos: usize, value: i32) -> Result<()> {
        let bank = self.bank_of(map);
        if std::mem::replace(&mut self.write_busy[bank], true) {
            let writes = 1 + self.pending.iter().filter(|(b, _, _)| *b == bank).count();
            return Err(Error::BankConflict { bank, writes });
        }
        let addr = self.address(region, map, pos);
        if addr >= self.depth {
            return Err(Error::Capacity {
                layer: 0,
                message: format!("write address {} beyond bank depth {}", addr, self.depth),
            });
        }
        self.pending.push((bank, addr, value));
        Ok(())
    }

    /// Commits staged writes and frees both ports of every bank.
    pub fn end_cycle(&mut self) {
        for (bank, addr, value) in self.pending.drain(..) {
            self.banks[bank][addr] = value;
            self.counters.writes += 1;
        }
        self.read_busy.iter_mut().for_each(|b| *b = false);
        self.write_busy.iter_mut().for_each(|b| *b = false);
    }

    /// Preloads a tensor outside the cycle model (host DMA).
    pub fn load_tensor(&mut self, region: &MapRegion, tensor: &FeatureMapTensor) -> Result<()> {
        let n = tensor.width() * tensor.height();
        for c in 0..tensor.channels() {
            let bank = self.bank_of(c);
            let addr = self.address(region, c, 0);
            if addr + n > self.depth {
                return Err(Error::Capacity {
                    layer: 0,
                    message: format!("map {} does not fit in bank {}", c, bank),
                });
            }
            self.banks[bank][addr..addr + n].copy_from_slice(tensor.map(c));
        }
        Ok(())
    }

    /// Reads a tensor back through the debug port.
    pub fn read_tensor(&self, region: &MapRegion, maps: usize, w: usize, h: usize) -> FeatureMapTensor {
        let mut out = FeatureMapTensor::zeros(maps, w, h);
        let n = w * h;
        for c in 0..maps {
            let bank = self.bank_of(c);
            let addr = self.address(region, c, 0);
            out.map_mut(c).copy_from_slice(&self.banks[bank][addr..addr + n]);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const REGION: MapRegion = MapRegion {
        base: 0,
        map_words: 16,
    };

    #[test]
    fn map_33_goes_to_bank_1() {
        let mut mau = MemoryArrayUnit::new(32, 64);
        mau.write(&REGION, 33, 5, 9).unwrap();
        mau.end_cycle();
        assert_eq!(mau.bank_of(33), 1);
        assert_eq!(mau.banks[1][16 + 5], 9);
    }

    #[test]
    fn q28_writes_fit_in_32_banks() {
        let mut mau = MemoryArrayUnit::new(32, 64);
        for f in 0..28 {
            mau.write(&REGION, f, 0, f as i32).unwrap();
        }
        mau.end_cycle();
        assert_eq!(mau.counters().writes, 28);
    }

    #[test]
    fn q33_writes_conflict() {
        let mut mau = MemoryArrayUnit::new(32, 64);
        let result: Result<()> = (0..33).try_for_each(|f| mau.write(&REGION, f, 0, 1));
        assert!(matches!(result, Err(Error::BankConflict { bank: 0, writes: 2 })));
    }

    #[test]
    fn read_sees_old_value_in_same_cycle() {
        let mut mau = MemoryArrayUnit::new(4, 8);
        let r = MapRegion { base: 0, map_words: 4 };
        mau.write(&r, 2, 1, 7).unwrap();
        mau.end_cycle();
        mau.write(&r, 2, 1, 8).unwrap();
        assert_eq!(mau.read(&r, 2, 1).unwrap(), 7);
        mau.end_cycle();
        assert_eq!(mau.read(&r, 2, 1).unwrap(), 8);
    }

    #[test]
    fn scan_read_follows_map_groups() {
        let (w, h) = (3, 2);
        let t = FeatureMapTensor::from_fn(40, w, h, |c, x, y| (c * 100 + y * 10 + x) as i32);
        let r = MapRegion { base: 0, map_words: w * h };
        let mut mau = MemoryArrayUnit::new(32, 64);
        mau.load_tensor(&r, &t).unwrap();

        assert_eq!(mau.scan_read(&r, w, h, 40, 0, 1).unwrap(), vec![0]);
        mau.end_cycle();
        // P = 16 at t = w*h: maps 16..31 at (0, 0)
        let v = mau.scan_read(&r, w, h, 40, w * h, 16).unwrap();
        assert_eq!(v, (16..32).map(|c| c * 100).collect::<Vec<_>>());
        assert_eq!(mau.read_select, 16);
        mau.end_cycle();
        // last element of map 0, then map 1 starts on the next cycle
        assert_eq!(mau.scan_read(&r, w, h, 40, w * h - 1, 1).unwrap(), vec![12]);
        mau.end_cycle();
        assert_eq!(mau.scan_read(&r, w, h, 40, w * h, 1).unwrap(), vec![100]);
        mau.end_cycle();
        // maps past the end read as zero and do not use a port
        let before = mau.counters().reads;
        let v = mau.scan_read(&r, w, h, 40, 2 * w * h, 16).unwrap();
        assert_eq!(&v[8..], &[0; 8]);
        assert_eq!(mau.counters().reads - before, 8);
    }

    #[test]
    fn block_read_pads_past_edge() {
        let t = FeatureMapTensor::from_fn(1, 3, 3, |_, x, y| (y * 3 + x + 1) as i32);
        let r = MapRegion { base: 0, map_words: 9 };
        let mut mau = MemoryArrayUnit::new(2, 16);
        mau.load_tensor(&r, &t).unwrap();
        let mut buf = [0; 4];
        mau.read_block(&r, 0, 1, 1, 2, 3, 3, &mut buf).unwrap();
        assert_eq!(buf, [9, 0, 0, 0]);
        assert!(mau.read_block(&r, 0, 0, 0, 2, 3, 3, &mut buf).is_err(), "second read of bank 0");
    }

    #[test]
    fn tensor_round_trip_through_banks() {
        let t = FeatureMapTensor::from_fn(70, 2, 3, |c, x, y| (c * 7 + x * 3 + y) as i32);
        let r = MapRegion { base: 5, map_words: 6 };
        let mut mau = MemoryArrayUnit::new(32, 64);
        mau.load_tensor(&r, &t).unwrap();
        assert_eq!(mau.read_tensor(&r, 70, 2, 3), t);
    }
}
