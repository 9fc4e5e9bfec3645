//! Input image files: raw planar `NMI1` and binary PGM/PPM.
//!
//! `NMI1` layout: magic `b"NMI1"`, then `c`, `w`, `h` as little-endian `u32`,
//! then `c*h*w` bytes in channel-major, row-major order.

use crate::error::{Error, Result};
use crate::tensor::FeatureMapTensor;

pub const RAW_MAGIC: &[u8; 4] = b"NMI1";
const RAW_HEADER: usize = 16;

pub fn decode_image(bytes: &[u8]) -> Result<FeatureMapTensor> {
    if bytes.starts_with(RAW_MAGIC) {
        decode_raw(bytes)
    } else if bytes.starts_with(b"P5") || bytes.starts_with(b"P6") {
        decode_pnm(bytes)
    } else {
        Err(Error::Format("unrecognized image format".into()))
    }
}

pub fn encode_raw(image: &FeatureMapTensor) -> Result<Vec<u8>> {
    let (c, w, h) = image.shape();
    let mut out = Vec::with_capacity(RAW_HEADER + c * w * h);
    out.extend_from_slice(RAW_MAGIC);
    for v in [c, w, h] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for &v in image.data() {
        out.push(to_byte(v)?);
    }
    Ok(out)
}

fn to_byte(v: i32) -> Result<u8> {
    u8::try_from(v).map_err(|_| Error::Format(format!("pixel value {} does not fit in 8 bits", v)))
}

fn decode_raw(bytes: &[u8]) -> Result<FeatureMapTensor> {
    if bytes.len() < RAW_HEADER {
        return Err(Error::Format("truncated NMI1 header".into()));
    }
    let field = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (c, w, h) = (field(0), field(1), field(2));
    let expected = RAW_HEADER + c * w * h;
    if bytes.len() != expected {
        return Err(Error::Size {
            expected,
            actual: bytes.len(),
        });
    }
    let data = bytes[RAW_HEADER..].iter().map(|&b| b as i32).collect();
    FeatureMapTensor::from_vec(c, w, h, data)
}

/// Binary PGM (1 channel) or PPM (3 channels, interleaved on disk) with
/// maxval 255.
fn decode_pnm(bytes: &[u8]) -> Result<FeatureMapTensor> {
    let c = if bytes[1] == b'5' { 1 } else { 3 };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        *field = next_pnm_number(bytes, &mut pos)?;
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let [w, h, maxval] = fields;
    if maxval != 255 {
        return Err(Error::Format(format!("unsupported PNM maxval {}", maxval)));
    }
    let raster = bytes.get(pos..).unwrap_or(&[]);
    if raster.len() != c * w * h {
        return Err(Error::Size {
            expected: pos + c * w * h,
            actual: bytes.len(),
        });
    }
    Ok(FeatureMapTensor::from_fn(c, w, h, |ch, x, y| raster[(y * w + x) * c + ch] as i32))
}

fn next_pnm_number(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    loop {
        match bytes.get(*pos) {
            Some(b'#') => {
                while !matches!(bytes.get(*pos), Some(b'\n') | None) {
                    *pos += 1;
                }
            }
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
            None => return Err(Error::Format("truncated PNM header".into())),
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(|b| b.is_ascii_digit()) {
        *pos += 1;
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format("bad number in PNM header".into()))
}

pub fn encode_pnm(image: &FeatureMapTensor) -> Result<Vec<u8>> {
    let (c, w, h) = image.shape();
    let magic = match c {
        1 => "P5",
        3 => "P6",
        _ => return Err(Error::Format(format!("PNM needs 1 or 3 channels, got {}", c))),
    };
    let mut out = format!("{}\n{} {}\n255\n", magic, w, h).into_bytes();
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                out.push(to_byte(image.get(ch, x, y))?);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(c: usize) -> FeatureMapTensor {
        FeatureMapTensor::from_fn(c, 5, 3, |ch, x, y| ((ch * 31 + x * 7 + y * 13) % 256) as i32)
    }

    #[test]
    fn raw_round_trip() {
        let img = sample(3);
        let bytes = encode_raw(&img).unwrap();
        assert_eq!(bytes.len(), 16 + 45);
        assert_eq!(decode_image(&bytes).unwrap(), img);
    }

    #[test]
    fn pnm_round_trip() {
        for c in [1, 3] {
            let img = sample(c);
            assert_eq!(decode_image(&encode_pnm(&img).unwrap()).unwrap(), img);
        }
    }

    #[test]
    fn pgm_with_comment() {
        let mut bytes = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[7, 200]);
        let img = decode_image(&bytes).unwrap();
        assert_eq!(img.shape(), (1, 2, 1));
        assert_eq!(img.data(), &[7, 200]);
    }

    #[test]
    fn truncated_raw_rejected() {
        let mut bytes = encode_raw(&sample(1)).unwrap();
        bytes.pop();
        assert!(matches!(decode_image(&bytes), Err(Error::Size { .. })));
        assert!(decode_image(b"NMI1").is_err());
        assert!(decode_image(b"GIF89a").is_err());
    }
}
