//! Line-buffer receptor with the zero-padding masking circuit.
//!
//! The receptor takes one input unit per cycle in raster order, maps back to
//! back, and once its line buffer is primed emits one `k`×`k` window per
//! cycle. For stride 1 a unit is a single pixel and the buffer is `k` shift
//! arrays of `W` registers. For stride `s > 1` a unit is the `s`×`s` input
//! block belonging to one output pixel (a wide read from one bank), so the
//! window rate stays one per output pixel.
//!
//! Window `t` is centred on output `(t mod W', floor(t / W') mod H')` of map
//! `floor(t / (W' H'))`, i.e. on input `(s x, s y)`. Taps falling outside
//! the input map are forced to zero; the registers are never cleared between
//! maps, the mask alone separates them.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowInfo {
    /// Cycle index relative to the masking epoch (window 0).
    pub t: u64,
    pub map: usize,
    pub x: usize,
    pub y: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskedWindow<T> {
    pub info: WindowInfo,
    /// Row-major `k`×`k` taps, offsets `-k/2..=k/2` in each axis.
    pub values: Vec<T>,
    pub in_bounds: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct Receptor<T> {
    k: usize,
    half: isize,
    stride: usize,
    w_in: usize,
    h_in: usize,
    w_units: usize,
    h_units: usize,
    lead: usize,
    capacity: usize,
    ring: Vec<T>,
    head: usize,
    fed: u64,
    taps: Vec<(isize, isize)>,
    mask_slack: isize,
}

impl<T: Copy + Default> Receptor<T> {
    pub fn new(k: usize, stride: usize, w_in: usize, h_in: usize) -> Self {
        assert!(k % 2 == 1 && stride >= 1 && w_in >= 1 && h_in >= 1);
        let half = k / 2;
        let w_units = w_in.div_ceil(stride);
        let h_units = h_in.div_ceil(stride);
        let ahead = half / stride;
        let behind = half.div_ceil(stride);
        let lead = ahead * w_units + ahead;
        let needed = lead + behind * (w_units + 1) + 1;
        let capacity = if stride == 1 {
            needed.max(k * w_units)
        } else {
            needed
        };
        let h = half as isize;
        let taps = (-h..=h).flat_map(|dy| (-h..=h).map(move |dx| (dx, dy))).collect();
        Receptor {
            k,
            half: h,
            stride,
            w_in,
            h_in,
            w_units,
            h_units,
            lead,
            capacity,
            ring: vec![T::default(); capacity * stride * stride],
            head: capacity - 1,
            fed: 0,
            taps,
            mask_slack: 0,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Units that must enter before window 0 is complete (`W*floor(k/2) +
    /// floor(k/2)` for stride 1).
    pub fn fill_latency(&self) -> usize {
        self.lead
    }

    /// Registers of the `k` line-buffer rows. Maps narrower than three units
    /// use a few extra slots in the model's ring, never more than
    /// `2 * W + 3` units.
    pub fn register_count(&self) -> usize {
        self.k * self.w_units * self.stride * self.stride
    }

    pub fn units_per_map(&self) -> usize {
        self.w_units * self.h_units
    }

    /// Cycle index of the most recent step relative to the masking epoch.
    pub fn epoch_cycle(&self) -> i64 {
        self.fed as i64 - 1 - self.lead as i64
    }

    pub fn reset(&mut self) {
        self.fed = 0;
        self.head = self.capacity - 1;
    }

    /// Makes the mask treat one column and row past the map edge as valid.
    #[doc(hidden)]
    pub fn inject_mask_fault(&mut self) {
        self.mask_slack = 1;
    }

    fn unit_len(&self) -> usize {
        self.stride * self.stride
    }

    fn push(&mut self, unit: &[T]) {
        let ul = self.unit_len();
        debug_assert_eq!(unit.len(), ul);
        self.head = (self.head + 1) % self.capacity;
        self.ring[self.head * ul..(self.head + 1) * ul].copy_from_slice(unit);
        self.fed += 1;
    }

    #[inline]
    fn unit_at(&self, age: usize) -> &[T] {
        let ul = self.unit_len();
        let idx = (self.head + self.capacity - age) % self.capacity;
        &self.ring[idx * ul..(idx + 1) * ul]
    }

    fn decode(&self, t: u64) -> WindowInfo {
        let per_map = self.units_per_map() as u64;
        let r = (t % per_map) as usize;
        WindowInfo {
            t,
            map: (t / per_map) as usize,
            x: r % self.w_units,
            y: r / self.w_units,
        }
    }

    /// Register holding input pixel `(px, py)` for a window centred on output
    /// `(x, y)`, as (age in units, index inside the unit).
    #[inline]
    fn locate(&self, x: usize, y: usize, px: isize, py: isize) -> Option<(usize, usize)> {
        let s = self.stride as isize;
        let (bx, by) = (px.div_euclid(s), py.div_euclid(s));
        let sub = (py.rem_euclid(s) * s + px.rem_euclid(s)) as usize;
        let age = self.lead as isize + (y as isize - by) * self.w_units as isize + (x as isize - bx);
        if age < 0 || age as u64 >= self.fed || age as usize >= self.capacity {
            return None;
        }
        Some((age as usize, sub))
    }

    #[inline]
    fn in_map(&self, px: isize, py: isize) -> bool {
        px >= 0
            && py >= 0
            && px < self.w_in as isize + self.mask_slack
            && py < self.h_in as isize + self.mask_slack
    }

    /// Input coordinates of every tap of window `info`.
    pub fn tap_positions(&self, info: &WindowInfo) -> Vec<(isize, isize)> {
        let s = self.stride as isize;
        self.taps
            .iter()
            .map(|&(dx, dy)| (s * info.x as isize + dx, s * info.y as isize + dy))
            .collect()
    }

    /// Shifts in one unit; once primed, writes the masked window into `out`
    /// (`k*k` values) and the per-tap in-range flags into `in_bounds`.
    pub fn step_into(&mut self, unit: &[T], out: &mut [T], in_bounds: &mut [bool]) -> Option<WindowInfo> {
        self.push(unit);
        if self.fed <= self.lead as u64 {
            return None;
        }
        let info = self.decode(self.fed - 1 - self.lead as u64);
        let s = self.stride as isize;
        let (cx, cy) = (s * info.x as isize, s * info.y as isize);
        for (n, &(dx, dy)) in self.taps.iter().enumerate() {
            let (px, py) = (cx + dx, cy + dy);
            let valid = self.in_map(px, py);
            in_bounds[n] = valid;
            out[n] = match self.locate(info.x, info.y, px, py) {
                Some((age, sub)) if valid => self.unit_at(age)[sub],
                _ => T::default(),
            };
        }
        Some(info)
    }

    pub fn step(&mut self, unit: &[T]) -> Option<MaskedWindow<T>> {
        let kk = self.k * self.k;
        let mut values = vec![T::default(); kk];
        let mut in_bounds = vec![false; kk];
        self.step_into(unit, &mut values, &mut in_bounds)
            .map(|info| MaskedWindow {
                info,
                values,
                in_bounds,
            })
    }

    /// Raw (unmasked) contents of the `k`×`k` tap registers after the latest
    /// step; `None` where nothing has been shifted in yet.
    pub fn registers(&self) -> Vec<Option<T>> {
        let t = self.epoch_cycle();
        let (x, y) = if t >= 0 {
            let info = self.decode(t as u64);
            (info.x as isize, info.y as isize)
        } else {
            (0, 0)
        };
        let s = self.stride as isize;
        self.taps
            .iter()
            .map(|&(dx, dy)| {
                if t < 0 {
                    // before the epoch only the stride-1 raster view is defined
                    if self.stride != 1 {
                        return None;
                    }
                    let age = self.lead as isize - dy * self.w_units as isize - dx;
                    if age < 0 || age as u64 >= self.fed || age as usize >= self.capacity {
                        return None;
                    }
                    return Some(self.unit_at(age as usize)[0]);
                }
                let (px, py) = (s * x + dx, s * y + dy);
                self.locate(x as usize, y as usize, px, py)
                    .map(|(age, sub)| self.unit_at(age)[sub])
            })
            .collect()
    }

    pub fn half(&self) -> isize {
        self.half
    }
}

/// Symbolic pixel used to trace the receptor: `D { map, x, y }` stands for
/// input value `d_{x,y}` of feature map `map`; `Zero` is a masked tap.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub enum Symbol {
    #[default]
    Zero,
    D {
        map: usize,
        x: usize,
        y: usize,
    },
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::Zero => f.write_str("0"),
            Symbol::D { map, x, y } => write!(f, "m{}:d{},{}", map, x, y),
        }
    }
}

/// Raster stream of symbolic pixels for `maps` maps of `w`×`h`.
pub fn symbolic_stream(maps: usize, w: usize, h: usize) -> impl Iterator<Item = Symbol> {
    (0..maps).flat_map(move |map| (0..h).flat_map(move |y| (0..w).map(move |x| Symbol::D { map, x, y })))
}

/// One cycle of a receptor trace: the unit entering, the raw tap registers,
/// the tap positions and the masked output (once primed).
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow<T> {
    pub t: i64,
    pub input: T,
    pub registers: Vec<Option<T>>,
    pub positions: Option<Vec<(isize, isize)>>,
    pub output: Option<Vec<T>>,
}

/// Feeds `stream` (then default values) into a stride-1 receptor and
/// records every cycle whose epoch-relative index falls in `cycles`.
pub fn trace<T: Copy + Default>(
    k: usize,
    w: usize,
    h: usize,
    stream: impl IntoIterator<Item = T>,
    cycles: std::ops::Range<i64>,
) -> Vec<TraceRow<T>> {
    let mut rec = Receptor::new(k, 1, w, h);
    let mut stream = stream.into_iter();
    let mut rows = Vec::new();
    loop {
        let t = rec.epoch_cycle() + 1;
        if t >= cycles.end {
            break;
        }
        let input = stream.next().unwrap_or_default();
        let win = rec.step(&[input]);
        if cycles.contains(&t) {
            rows.push(TraceRow {
                t,
                input,
                registers: rec.registers(),
                positions: win.as_ref().map(|w| rec.tap_positions(&w.info)),
                output: win.map(|w| w.values),
            });
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(x: usize, y: usize) -> Symbol {
        Symbol::D { map: 0, x, y }
    }

    /// Extracts the expected window directly from the tensor definition.
    fn brute_window(data: &[i32], w: usize, h: usize, k: usize, s: usize, info: &WindowInfo) -> Vec<i32> {
        let half = (k / 2) as isize;
        let mut out = Vec::new();
        for dy in -half..=half {
            for dx in -half..=half {
                let px = (s * info.x) as isize + dx;
                let py = (s * info.y) as isize + dy;
                out.push(if px < 0 || py < 0 || px >= w as isize || py >= h as isize {
                    0
                } else {
                    data[info.map * w * h + py as usize * w + px as usize]
                });
            }
        }
        out
    }

    fn blocks(data: &[i32], maps: usize, w: usize, h: usize, s: usize) -> Vec<Vec<i32>> {
        let (wb, hb) = (w.div_ceil(s), h.div_ceil(s));
        let mut units = Vec::new();
        for m in 0..maps {
            for by in 0..hb {
                for bx in 0..wb {
                    let mut u = vec![0; s * s];
                    for sy in 0..s {
                        for sx in 0..s {
                            let (x, y) = (bx * s + sx, by * s + sy);
                            if x < w && y < h {
                                u[sy * s + sx] = data[m * w * h + y * w + x];
                            }
                        }
                    }
                    units.push(u);
                }
            }
        }
        units
    }

    #[test]
    fn fill_latency_and_register_count() {
        let r: Receptor<i32> = Receptor::new(3, 1, 10, 4);
        assert_eq!(r.fill_latency(), 11);
        assert_eq!(r.register_count(), 30);
        let r: Receptor<i32> = Receptor::new(1, 1, 10, 4);
        assert_eq!(r.fill_latency(), 0);
    }

    #[test]
    fn first_window_masks_top_and_left() {
        let (w, h) = (5, 4);
        let mut r = Receptor::new(3, 1, w, h);
        let stream: Vec<Symbol> = symbolic_stream(1, w, h).collect();
        for s in &stream[..w + 1] {
            assert!(r.step(&[*s]).is_none());
        }
        let win = r.step(&[stream[w + 1]]).unwrap();
        assert_eq!((win.info.t, win.info.x, win.info.y), (0, 0, 0));
        let z = Symbol::Zero;
        assert_eq!(win.values, vec![z, z, z, z, d(0, 0), d(1, 0), z, d(0, 1), d(1, 1)]);
    }

    #[test]
    fn windows_match_brute_force_for_every_cycle() {
        for &(k, s, w, h, maps) in &[
            (3, 1, 5, 4, 3),
            (3, 1, 1, 1, 2),
            (3, 1, 2, 3, 2),
            (3, 2, 7, 5, 2),
            (3, 2, 6, 6, 2),
            (3, 2, 1, 2, 3),
            (1, 1, 4, 3, 2),
            (1, 2, 5, 3, 2),
        ] {
            let data: Vec<i32> = (0..(maps * w * h) as i32).map(|v| v + 1).collect();
            let units = blocks(&data, maps, w, h, s);
            let mut r = Receptor::new(k, s, w, h);
            let zero = vec![0; s * s];
            let mut emitted = 0;
            for cycle in 0..units.len() + r.fill_latency() {
                let unit = units.get(cycle).unwrap_or(&zero);
                if let Some(win) = r.step(unit) {
                    assert_eq!(win.info.t, emitted, "seamless: one window per cycle");
                    let expect = brute_window(&data, w, h, k, s, &win.info);
                    assert_eq!(win.values, expect, "k={k} s={s} {w}x{h} t={}", win.info.t);
                    emitted += 1;
                }
            }
            assert_eq!(emitted as usize, units.len());
        }
    }

    #[test]
    fn mask_fault_leaks_neighbour() {
        let (w, h) = (3, 3);
        let mut r = Receptor::new(3, 1, w, h);
        r.inject_mask_fault();
        let data: Vec<i32> = (1..=9).collect();
        let mut wins = Vec::new();
        for c in 0..9 + r.fill_latency() {
            if let Some(win) = r.step(&[*data.get(c).unwrap_or(&0)]) {
                wins.push(win);
            }
        }
        // centre (2,0): the tap at x=3 should be masked but reads d(0,1)
        assert_eq!(wins[2].values[5], 4);
    }
}
