use crate::error::{Error, Result};

/// `c` feature maps of `w`×`h` activations, stored channel-major then
/// row-major (`data[(c * h + y) * w + x]`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureMapTensor {
    c: usize,
    w: usize,
    h: usize,
    data: Vec<i32>,
}

impl FeatureMapTensor {
    pub fn zeros(c: usize, w: usize, h: usize) -> Self {
        FeatureMapTensor {
            c,
            w,
            h,
            data: vec![0; c * w * h],
        }
    }

    pub fn from_vec(c: usize, w: usize, h: usize, data: Vec<i32>) -> Result<Self> {
        if data.len() != c * w * h {
            return Err(Error::Size {
                expected: c * w * h,
                actual: data.len(),
            });
        }
        Ok(FeatureMapTensor { c, w, h, data })
    }

    pub fn from_fn(c: usize, w: usize, h: usize, mut f: impl FnMut(usize, usize, usize) -> i32) -> Self {
        let mut data = Vec::with_capacity(c * w * h);
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    data.push(f(ch, x, y));
                }
            }
        }
        FeatureMapTensor { c, w, h, data }
    }

    pub fn channels(&self) -> usize {
        self.c
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.c, self.w, self.h)
    }

    pub fn data(&self) -> &[i32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<i32> {
        self.data
    }

    #[inline]
    fn offset(&self, c: usize, x: usize, y: usize) -> usize {
        assert!(
            c < self.c && x < self.w && y < self.h,
            "index ({c}, {x}, {y}) outside {}x{}x{}",
            self.c,
            self.w,
            self.h
        );
        (c * self.h + y) * self.w + x
    }

    #[inline]
    pub fn get(&self, c: usize, x: usize, y: usize) -> i32 {
        self.data[self.offset(c, x, y)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, x: usize, y: usize, value: i32) {
        let i = self.offset(c, x, y);
        self.data[i] = value;
    }

    /// Row-major slice of one map.
    pub fn map(&self, c: usize) -> &[i32] {
        let n = self.w * self.h;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn map_mut(&mut self, c: usize) -> &mut [i32] {
        let n = self.w * self.h;
        &mut self.data[c * n..(c + 1) * n]
    }
}
