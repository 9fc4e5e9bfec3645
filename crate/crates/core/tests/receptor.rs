use nm_core::memory::{symbolic_stream, trace, Receptor, Symbol};
use proptest::prelude::*;

const W: usize = 5;
const H: usize = 4;

fn d(map: usize, x: usize, y: usize) -> Option<Symbol> {
    Some(Symbol::D { map, x, y })
}

fn z() -> Symbol {
    Symbol::Zero
}

fn s(map: usize, x: usize, y: usize) -> Symbol {
    Symbol::D { map, x, y }
}

fn table_rows() -> Vec<nm_core::memory::TraceRow<Symbol>> {
    let lead = (W + 1) as i64;
    let mut rows = trace(3, W, H, symbolic_stream(2, W, H), -lead..(W * H + 1) as i64);
    rows.retain(|r| [-lead, -lead + 1, 0, 1, (W - 1) as i64, W as i64, (W * H - 1) as i64, (W * H) as i64].contains(&r.t));
    rows
}

#[test]
fn fill_rows() {
    let rows = table_rows();
    let r = &rows[0];
    assert_eq!(r.t, -6);
    assert_eq!(r.input, s(0, 0, 0));
    assert_eq!(r.output, None);
    assert_eq!(r.registers[8], d(0, 0, 0));
    assert!(r.registers[..8].iter().all(Option::is_none));

    let r = &rows[1];
    assert_eq!(r.input, s(0, 1, 0));
    assert_eq!(&r.registers[6..], &[None, d(0, 0, 0), d(0, 1, 0)]);
    assert!(r.registers[..6].iter().all(Option::is_none));
}

#[test]
fn epoch_row() {
    let r = &table_rows()[2];
    assert_eq!(r.t, 0);
    assert_eq!(r.input, s(0, 1, 1));
    // the register left of d01 holds the previous pixel in raster order, d_{W-1,0}
    assert_eq!(
        r.registers,
        vec![None, None, None, None, d(0, 0, 0), d(0, 1, 0), d(0, 4, 0), d(0, 0, 1), d(0, 1, 1)]
    );
    let pos: Vec<(isize, isize)> = (-1..=1).flat_map(|y| (-1..=1).map(move |x| (x, y))).collect();
    assert_eq!(r.positions.as_deref(), Some(&pos[..]));
    assert_eq!(
        r.output.as_deref(),
        Some(&[z(), z(), z(), z(), s(0, 0, 0), s(0, 1, 0), z(), s(0, 0, 1), s(0, 1, 1)][..])
    );
}

#[test]
fn first_row_edges() {
    let rows = table_rows();
    let r = &rows[3];
    assert_eq!((r.t, r.input), (1, s(0, 2, 1)));
    assert_eq!(
        r.output.as_deref(),
        Some(&[z(), z(), z(), s(0, 0, 0), s(0, 1, 0), s(0, 2, 0), s(0, 0, 1), s(0, 1, 1), s(0, 2, 1)][..])
    );
    let r = &rows[4];
    assert_eq!((r.t, r.input), (4, s(0, 0, 2)));
    assert_eq!(
        r.registers,
        vec![None, None, d(0, 0, 0), d(0, 3, 0), d(0, 4, 0), d(0, 0, 1), d(0, 3, 1), d(0, 4, 1), d(0, 0, 2)]
    );
    assert_eq!(r.positions.as_ref().unwrap()[2], (5, -1));
    assert_eq!(
        r.output.as_deref(),
        Some(&[z(), z(), z(), s(0, 3, 0), s(0, 4, 0), z(), s(0, 3, 1), s(0, 4, 1), z()][..])
    );
    let r = &rows[5];
    assert_eq!((r.t, r.input), (5, s(0, 1, 2)));
    assert_eq!(
        r.registers,
        vec![None, d(0, 0, 0), d(0, 1, 0), d(0, 4, 0), d(0, 0, 1), d(0, 1, 1), d(0, 4, 1), d(0, 0, 2), d(0, 1, 2)]
    );
    assert_eq!(
        r.output.as_deref(),
        Some(&[z(), s(0, 0, 0), s(0, 1, 0), z(), s(0, 0, 1), s(0, 1, 1), z(), s(0, 0, 2), s(0, 1, 2)][..])
    );
}

#[test]
fn seamless_map_transition() {
    let rows = table_rows();
    let r = &rows[6];
    assert_eq!((r.t, r.input), (19, s(1, 0, 1)));
    assert_eq!(
        r.registers,
        vec![d(0, 3, 2), d(0, 4, 2), d(0, 0, 3), d(0, 3, 3), d(0, 4, 3), d(1, 0, 0), d(1, 3, 0), d(1, 4, 0), d(1, 0, 1)]
    );
    assert_eq!(r.positions.as_ref().unwrap()[8], (5, 4));
    assert_eq!(
        r.output.as_deref(),
        Some(&[s(0, 3, 2), s(0, 4, 2), z(), s(0, 3, 3), s(0, 4, 3), z(), z(), z(), z()][..])
    );
    let r = &rows[7];
    assert_eq!((r.t, r.input), (20, s(1, 1, 1)));
    assert_eq!(
        r.registers,
        vec![d(0, 4, 2), d(0, 0, 3), d(0, 1, 3), d(0, 4, 3), d(1, 0, 0), d(1, 1, 0), d(1, 4, 0), d(1, 0, 1), d(1, 1, 1)]
    );
    assert_eq!(
        r.output.as_deref(),
        Some(&[z(), z(), z(), z(), s(1, 0, 0), s(1, 1, 0), z(), s(1, 0, 1), s(1, 1, 1)][..])
    );
}

/// Window `t` straight from the definition of zero-padded convolution input.
fn expected(maps: &[Vec<i64>], w: usize, h: usize, k: usize, s: usize, t: usize) -> Vec<i64> {
    let (wo, ho) = (w.div_ceil(s), h.div_ceil(s));
    let (map, r) = (t / (wo * ho), t % (wo * ho));
    let (x, y) = ((r % wo * s) as isize, (r / wo * s) as isize);
    let half = (k / 2) as isize;
    let mut out = Vec::new();
    for dy in -half..=half {
        for dx in -half..=half {
            let (px, py) = (x + dx, y + dy);
            let inside = px >= 0 && py >= 0 && (px as usize) < w && (py as usize) < h;
            out.push(if inside { maps[map][py as usize * w + px as usize] } else { 0 });
        }
    }
    out
}

proptest! {
    #[test]
    fn receptor_equals_definition(
        w in 1usize..12, h in 1usize..12, maps in 1usize..4, k in prop::sample::select(vec![1usize, 3, 5]),
        stride in 1usize..=2, seed in any::<u64>(),
    ) {
        let data: Vec<Vec<i64>> = (0..maps)
            .map(|m| (0..w * h).map(|i| ((seed >> (i % 48)) as i64 & 0xff) + (m * 1000 + i) as i64 + 1).collect())
            .collect();
        let (wb, hb) = (w.div_ceil(stride), h.div_ceil(stride));
        let mut rec: Receptor<i64> = Receptor::new(k, stride, w, h);
        let mut t = 0usize;
        let total = maps * wb * hb;
        for cycle in 0..total + rec.fill_latency() {
            let mut unit = vec![0i64; stride * stride];
            if cycle < total {
                let (m, r) = (cycle / (wb * hb), cycle % (wb * hb));
                let (bx, by) = (r % wb, r / wb);
                for sy in 0..stride {
                    for sx in 0..stride {
                        let (x, y) = (bx * stride + sx, by * stride + sy);
                        if x < w && y < h {
                            unit[sy * stride + sx] = data[m][y * w + x];
                        }
                    }
                }
            }
            if let Some(win) = rec.step(&unit) {
                prop_assert_eq!(win.info.t as usize, t);
                prop_assert_eq!(win.values, expected(&data, w, h, k, stride, t));
                t += 1;
            }
        }
        // one window per unit, no idle cycles between maps
        prop_assert_eq!(t, total);
    }
}
