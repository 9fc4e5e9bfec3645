//! Receptor and hardware-neuron trace dumps.

use std::fmt::Display;
use std::ops::Range;

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;

/// Parses `a..b` (either end may be negative).
pub fn parse_range(s: &str) -> Result<Range<i64>> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| anyhow!("cycle range {:?} must look like start..end", s))?;
    let a: i64 = a.trim().parse().with_context(|| format!("bad range start in {:?}", s))?;
    let b: i64 = b.trim().parse().with_context(|| format!("bad range end in {:?}", s))?;
    if b < a {
        bail!("empty cycle range {:?}", s);
    }
    Ok(a..b)
}

/// Parses `n1,n2,...,start..end` with `count` leading integers.
pub fn parse_probe(s: &str, count: usize) -> Result<(Vec<usize>, Range<i64>)> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != count + 1 {
        bail!("probe {:?} needs {} comma-separated fields", s, count + 1);
    }
    let nums = parts[..count]
        .iter()
        .map(|p| p.trim().parse::<usize>().with_context(|| format!("bad number {:?} in probe", p)))
        .collect::<Result<Vec<_>>>()?;
    Ok((nums, parse_range(parts[count])?))
}

/// Renders a `k`×`k` grid row by row, cells separated by spaces and rows by `/`.
pub fn grid<T>(cells: &[T], fmt: impl Fn(&T) -> String) -> String {
    let k = (cells.len() as f64).sqrt().round() as usize;
    cells
        .chunks(k.max(1))
        .map(|row| row.iter().map(&fmt).collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join("/")
}

/// One receptor trace row with every column rendered as text.
#[derive(Debug, Clone, Serialize)]
pub struct ReceptorRow {
    pub t: i64,
    pub input: String,
    pub registers: String,
    pub positions: String,
    pub output: String,
}

pub const RECEPTOR_HEADER: [&str; 5] = ["t", "input", "registers", "positions", "output"];

impl ReceptorRow {
    pub fn new<T: Display>(
        t: i64,
        input: String,
        registers: &[Option<T>],
        positions: Option<&[(isize, isize)]>,
        output: Option<&[T]>,
    ) -> Self {
        ReceptorRow {
            t,
            input,
            registers: grid(registers, |r| r.as_ref().map_or("-".to_string(), |v| v.to_string())),
            positions: positions.map_or("-".into(), |p| grid(p, |(x, y)| format!("({};{})", x, y))),
            output: output.map_or("invalid".into(), |o| grid(o, |v| v.to_string())),
        }
    }

    pub fn record(&self) -> Vec<String> {
        vec![
            self.t.to_string(),
            self.input.clone(),
            self.registers.clone(),
            self.positions.clone(),
            self.output.clone(),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!(parse_range("-6..21").unwrap(), -6..21);
        assert!(parse_range("5").is_err());
        assert!(parse_range("4..1").is_err());
        let (n, r) = parse_probe("3,7,0..10", 2).unwrap();
        assert_eq!((n, r), (vec![3, 7], 0..10));
        assert!(parse_probe("3,0..10", 2).is_err());
    }

    #[test]
    fn grid_layout() {
        assert_eq!(grid(&[1, 2, 3, 4, 5, 6, 7, 8, 9], |v| v.to_string()), "1 2 3/4 5 6/7 8 9");
        assert_eq!(grid(&[4], |v| v.to_string()), "4");
    }
}
