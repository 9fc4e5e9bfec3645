//! Receptor unit: `P` receptors side by side, or a straight bypass when
//! `k = 1`.

use super::receptor::{Receptor, WindowInfo};

#[derive(Debug, Clone)]
pub struct ReceptorUnit {
    k: usize,
    receptors: Vec<Receptor<i32>>,
    bypass_t: u64,
    units_per_map: u64,
    w_units: usize,
}

impl ReceptorUnit {
    /// `lanes` receptors for a `w_in`×`h_in` map scanned with `stride`.
    pub fn new(k: usize, stride: usize, lanes: usize, w_in: usize, h_in: usize) -> Self {
        let receptors = if k == 1 {
            Vec::new()
        } else {
            (0..lanes).map(|_| Receptor::new(k, stride, w_in, h_in)).collect()
        };
        let w_units = w_in.div_ceil(stride);
        ReceptorUnit {
            k,
            receptors,
            bypass_t: 0,
            units_per_map: (w_units * h_in.div_ceil(stride)) as u64,
            w_units,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn fill_latency(&self) -> usize {
        self.receptors.first().map_or(0, |r| r.fill_latency())
    }

    pub fn receptor(&self, lane: usize) -> Option<&Receptor<i32>> {
        self.receptors.get(lane)
    }

    #[doc(hidden)]
    pub fn inject_mask_fault(&mut self) {
        self.receptors.iter_mut().for_each(|r| r.inject_mask_fault());
    }

    /// Consumes one unit per lane (`units[lane]` is `stride*stride` values)
    /// and writes `k*k` values per lane into `out` and the mask flags into
    /// `in_bounds`. With `k = 1` the first value of each unit passes
    /// straight through and is always in range.
    pub fn step(&mut self, units: &[&[i32]], out: &mut [i32], in_bounds: &mut [bool]) -> Option<WindowInfo> {
        if self.k == 1 {
            for (lane, unit) in units.iter().enumerate() {
                out[lane] = unit[0];
                in_bounds[lane] = true;
            }
            let t = self.bypass_t;
            self.bypass_t += 1;
            let r = (t % self.units_per_map) as usize;
            return Some(WindowInfo {
                t,
                map: (t / self.units_per_map) as usize,
                x: r % self.w_units,
                y: r / self.w_units,
            });
        }
        let kk = self.k * self.k;
        let mut info = None;
        for (lane, (rec, unit)) in self.receptors.iter_mut().zip(units).enumerate() {
            let span = lane * kk..(lane + 1) * kk;
            info = rec.step_into(unit, &mut out[span.clone()], &mut in_bounds[span]);
        }
        info
    }
}
