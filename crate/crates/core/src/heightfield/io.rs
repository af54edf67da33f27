//! Height-map files: grayscale PNG (8 or 16 bit) and the RAW-HMAP float format.
//!
//! RAW-HMAP layout: ASCII `HMAP`, little-endian `u32` width, `u32` height, then
//! `width * height` little-endian `f32` values in row-major order.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use super::HeightMap;
use crate::error::{Error, Result};

pub const RAW_MAGIC: &[u8; 4] = b"HMAP";
const PNG_SIGNATURE: &[u8; 8] = b"\x89PNG\r\n\x1a\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BitDepth {
    Eight,
    #[default]
    Sixteen,
}

impl BitDepth {
    pub fn from_bits(bits: u32) -> Result<Self> {
        match bits {
            8 => Ok(BitDepth::Eight),
            16 => Ok(BitDepth::Sixteen),
            other => Err(Error::arg(format!("bit depth must be 8 or 16, got {other}"))),
        }
    }

    pub fn bits(self) -> u32 {
        match self {
            BitDepth::Eight => 8,
            BitDepth::Sixteen => 16,
        }
    }

    pub fn max_code(self) -> u32 {
        (1 << self.bits()) - 1
    }
}

pub fn load_heightmap(path: impl AsRef<Path>) -> Result<HeightMap> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_heightmap(&bytes)
}

/// Decodes either format, picked by the leading magic bytes.
pub fn decode_heightmap(bytes: &[u8]) -> Result<HeightMap> {
    if bytes.starts_with(PNG_SIGNATURE) {
        decode_png(bytes)
    } else if bytes.starts_with(RAW_MAGIC) {
        decode_raw(bytes)
    } else {
        Err(Error::Format(
            "not a PNG or RAW-HMAP file (unrecognized magic bytes)".into(),
        ))
    }
}

fn decode_png(bytes: &[u8]) -> Result<HeightMap> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::Format(format!("PNG decode failed: {e}")))?;
    let (color, depth) = reader.output_color_type();
    match color {
        png::ColorType::Grayscale => {}
        png::ColorType::GrayscaleAlpha => {
            return Err(Error::Format(
                "grayscale PNG with alpha channel; height maps must not carry alpha".into(),
            ))
        }
        png::ColorType::Rgb | png::ColorType::Rgba | png::ColorType::Indexed => {
            return Err(Error::Format(format!(
                "color PNG ({color:?}); height maps must be single-channel grayscale"
            )))
        }
    }
    let max_code = match depth {
        png::BitDepth::Eight => 255.0,
        png::BitDepth::Sixteen => 65535.0,
        other => {
            return Err(Error::Format(format!(
                "unsupported bit depth {} (expected 8 or 16)",
                other as u8
            )))
        }
    };
    let buf_len = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Format("PNG image too large".into()))?;
    let mut buf = vec![0u8; buf_len];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Format(format!("PNG decode failed: {e}")))?;
    let (width, height) = (frame.width as usize, frame.height as usize);
    let mut values = Vec::with_capacity(width * height);
    for row in buf.chunks_exact(frame.line_size).take(height) {
        match depth {
            png::BitDepth::Sixteen => values.extend(
                row[..width * 2]
                    .chunks_exact(2)
                    .map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 / max_code),
            ),
            _ => values.extend(row[..width].iter().map(|&b| b as f64 / max_code)),
        }
    }
    HeightMap::new(width, height, values)
}

fn decode_raw(bytes: &[u8]) -> Result<HeightMap> {
    if bytes.len() < 12 {
        return Err(Error::Format("RAW-HMAP header truncated".into()));
    }
    let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if width == 0 || height == 0 {
        return Err(Error::Format(format!(
            "RAW-HMAP declares empty dimensions {width}x{height}"
        )));
    }
    let body = &bytes[12..];
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format("RAW-HMAP dimensions overflow".into()))?;
    if body.len() != expected {
        return Err(Error::Format(format!(
            "RAW-HMAP body holds {} bytes, {width}x{height} needs {expected}",
            body.len()
        )));
    }
    let mut values = Vec::with_capacity(width * height);
    for (i, chunk) in body.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() || !(0.0..=1.0).contains(&v) {
            return Err(Error::Format(format!(
                "RAW-HMAP value {v} at index {i} outside [0, 1]"
            )));
        }
        values.push(v as f64);
    }
    HeightMap::new(width, height, values)
}

/// Quantizes to `round(v * max_code)` (halves round up), clamping to `[0, 1]` first.
fn quantize(v: f64, max_code: u32) -> u32 {
    (v.clamp(0.0, 1.0) * max_code as f64 + 0.5).floor() as u32
}

pub fn encode_png(map: &HeightMap, depth: BitDepth) -> Result<Vec<u8>> {
    let max_code = depth.max_code();
    let data: Vec<u8> = match depth {
        BitDepth::Eight => map
            .values()
            .iter()
            .map(|&v| quantize(v, max_code) as u8)
            .collect(),
        BitDepth::Sixteen => map
            .values()
            .iter()
            .flat_map(|&v| (quantize(v, max_code) as u16).to_be_bytes())
            .collect(),
    };
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, map.width() as u32, map.height() as u32);
        encoder.set_color(png::ColorType::Grayscale);
        encoder.set_depth(match depth {
            BitDepth::Eight => png::BitDepth::Eight,
            BitDepth::Sixteen => png::BitDepth::Sixteen,
        });
        let mut writer = encoder
            .write_header()
            .map_err(|e| Error::Format(format!("PNG encode failed: {e}")))?;
        writer
            .write_image_data(&data)
            .map_err(|e| Error::Format(format!("PNG encode failed: {e}")))?;
    }
    Ok(out)
}

pub fn save_heightmap(map: &HeightMap, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_png(map, depth)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_raw(map: &HeightMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + map.values().len() * 4);
    out.extend_from_slice(RAW_MAGIC);
    out.extend_from_slice(&(map.width() as u32).to_le_bytes());
    out.extend_from_slice(&(map.height() as u32).to_le_bytes());
    for &v in map.values() {
        out.extend_from_slice(&(v.clamp(0.0, 1.0) as f32).to_le_bytes());
    }
    out
}

pub fn save_raw(map: &HeightMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_raw(map)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn encode_gray(width: u32, height: u32, depth: png::BitDepth, data: &[u8]) -> Vec<u8> {
        encode_with(width, height, png::ColorType::Grayscale, depth, data)
    }

    fn encode_with(
        width: u32,
        height: u32,
        color: png::ColorType,
        depth: png::BitDepth,
        data: &[u8],
    ) -> Vec<u8> {
        let mut out = Vec::new();
        let mut enc = png::Encoder::new(&mut out, width, height);
        enc.set_color(color);
        enc.set_depth(depth);
        enc.write_header().unwrap().write_image_data(data).unwrap();
        out
    }

    #[test]
    fn sixteen_bit_max_is_one() {
        let bytes = encode_gray(3, 2, png::BitDepth::Sixteen, &[0xff; 12]);
        let m = decode_heightmap(&bytes).unwrap();
        assert_eq!(m.dims(), (3, 2));
        assert!(m.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn eight_bit_zero_is_zero() {
        let bytes = encode_gray(2, 1, png::BitDepth::Eight, &[0, 51]);
        let m = decode_heightmap(&bytes).unwrap();
        assert_eq!(m.values(), &[0.0, 0.2]);
    }

    #[test]
    fn rejects_color_and_alpha_and_low_depth() {
        let rgb = encode_with(1, 1, png::ColorType::Rgb, png::BitDepth::Eight, &[1, 2, 3]);
        let err = decode_heightmap(&rgb).unwrap_err().to_string();
        assert!(err.contains("color PNG"), "{err}");

        let ga = encode_with(1, 1, png::ColorType::GrayscaleAlpha, png::BitDepth::Eight, &[1, 2]);
        let err = decode_heightmap(&ga).unwrap_err().to_string();
        assert!(err.contains("alpha"), "{err}");

        let low = encode_gray(8, 1, png::BitDepth::Four, &[0x12, 0x34, 0x56, 0x78]);
        let err = decode_heightmap(&low).unwrap_err().to_string();
        assert!(err.contains("bit depth 4"), "{err}");

        assert!(matches!(decode_heightmap(b"GIF89a"), Err(Error::Format(_))));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_heightmap("/nonexistent/dir/map.png").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn quantization_codes() {
        let one = HeightMap::filled(1, 1, 1.0);
        let png16 = encode_png(&one, BitDepth::Sixteen).unwrap();
        let mut reader = png::Decoder::new(Cursor::new(&png16)).read_info().unwrap();
        let mut buf = vec![0; reader.output_buffer_size().unwrap()];
        reader.next_frame(&mut buf).unwrap();
        assert_eq!(u16::from_be_bytes([buf[0], buf[1]]), 65535);

        // 0.5 * 255 = 127.5 rounds up.
        assert_eq!(quantize(0.5, 255), 128);
        assert_eq!(quantize(0.0, 255), 0);
        assert_eq!(quantize(1.0 / 255.0 * 3.49, 255), 3);
    }

    #[test]
    fn constant_map_decodes_uniform() {
        let m = HeightMap::filled(5, 4, 0.37);
        for depth in [BitDepth::Eight, BitDepth::Sixteen] {
            let back = decode_heightmap(&encode_png(&m, depth).unwrap()).unwrap();
            let first = back.values()[0];
            assert!(back.values().iter().all(|&v| v == first));
        }
    }

    #[test]
    fn raw_layout_is_bit_exact() {
        let m = HeightMap::new(2, 1, vec![0.25, 1.0]).unwrap();
        let bytes = encode_raw(&m);
        let mut expected = b"HMAP".to_vec();
        expected.extend_from_slice(&[2, 0, 0, 0, 1, 0, 0, 0]);
        expected.extend_from_slice(&0.25f32.to_le_bytes());
        expected.extend_from_slice(&1.0f32.to_le_bytes());
        assert_eq!(bytes, expected);
        assert_eq!(decode_heightmap(&bytes).unwrap(), m);
    }

    #[test]
    fn raw_rejects_truncation_and_range() {
        let m = HeightMap::new(2, 2, vec![0.0, 0.1, 0.2, 0.3]).unwrap();
        let bytes = encode_raw(&m);
        assert!(decode_heightmap(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[12..16].copy_from_slice(&2.0f32.to_le_bytes());
        assert!(decode_heightmap(&bad).is_err());
    }

    #[test]
    fn round_trip_hundred_random_maps() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let (w, h) = (rng.random_range(1..24), rng.random_range(1..24));
            let m = HeightMap::from_fn(w, h, |_, _| rng.random::<f64>());
            let back = decode_heightmap(&encode_png(&m, BitDepth::Sixteen).unwrap()).unwrap();
            let worst = m
                .values()
                .iter()
                .zip(back.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(worst <= 1.0 / 65535.0, "worst error {worst}");
        }
    }

    proptest! {
        #[test]
        fn round_trip_within_one_code(
            w in 1usize..12,
            h in 1usize..12,
            seed in any::<u64>(),
            eight in any::<bool>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = HeightMap::from_fn(w, h, |_, _| rng.random::<f64>());
            let depth = if eight { BitDepth::Eight } else { BitDepth::Sixteen };
            let back = decode_heightmap(&encode_png(&m, depth).unwrap()).unwrap();
            prop_assert_eq!(back.dims(), m.dims());
            let tol = 1.0 / depth.max_code() as f64;
            for (a, b) in m.values().iter().zip(back.values()) {
                prop_assert!((a - b).abs() <= tol);
            }
        }
    }
}
