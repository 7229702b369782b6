//! Binary PGM ("P5") depth rasters.

use thiserror::Error;
use walkforge_core::captioning::DepthMap;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PgmError {
    #[error("not a binary PGM")]
    BadMagic,
    #[error("bad header: {0}")]
    BadHeader(&'static str),
    #[error("expected {expected} bytes of samples, found {found}")]
    Truncated { expected: usize, found: usize },
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &'static str) -> Result<usize, PgmError> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or(PgmError::BadHeader(what))
    }
}

/// Decode a P5 raster; sample / maxval becomes the relative depth.
pub fn decode(frame: &str, bytes: &[u8]) -> Result<DepthMap, PgmError> {
    if !bytes.starts_with(b"P5") {
        return Err(PgmError::BadMagic);
    }
    let mut h = Header { bytes, pos: 2 };
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval = h.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(PgmError::BadHeader("empty raster"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(PgmError::BadHeader("maxval"));
    }
    match bytes.get(h.pos) {
        Some(c) if c.is_ascii_whitespace() => h.pos += 1,
        _ => return Err(PgmError::BadHeader("missing separator")),
    }
    let wide = maxval > 255;
    let per = if wide { 2 } else { 1 };
    let expected = width * height * per;
    let data = &bytes[h.pos..];
    if data.len() < expected {
        return Err(PgmError::Truncated { expected, found: data.len() });
    }
    let values = if wide {
        data[..expected]
            .chunks_exact(2)
            .map(|c| (u16::from_be_bytes([c[0], c[1]]) as f64 / maxval as f64).min(1.0))
            .collect()
    } else {
        data[..expected].iter().map(|&v| (v as f64 / maxval as f64).min(1.0)).collect()
    };
    Ok(DepthMap {
        frame: frame.into(),
        width,
        height,
        values,
    })
}

/// Encode at maxval 65535, rounding each depth to the nearest level.
pub fn encode(depth: &DepthMap) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", depth.width, depth.height).into_bytes();
    for &v in &depth.values {
        let level = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
        out.extend_from_slice(&level.to_be_bytes());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_comments_and_8bit() {
        let mut bytes = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 255]);
        let d = decode("f", &bytes).unwrap();
        assert_eq!((d.width, d.height), (2, 1));
        assert_eq!(d.values, [0.0, 1.0]);
    }

    #[test]
    fn errors() {
        assert_eq!(decode("f", b"P2\n1 1\n255\n0"), Err(PgmError::BadMagic));
        assert_eq!(decode("f", b"P5\n2 2\n65535\n\0\0"), Err(PgmError::Truncated { expected: 8, found: 2 }));
        assert!(matches!(decode("f", b"P5\n0 2\n65535\n"), Err(PgmError::BadHeader(_))));
    }

    proptest! {
        #[test]
        fn round_trip_levels(levels in proptest::collection::vec(0u16..=65535, 1..40)) {
            let values: Vec<f64> = levels.iter().map(|&l| l as f64 / 65535.0).collect();
            let d = DepthMap { frame: "f".into(), width: values.len(), height: 1, values };
            prop_assert_eq!(decode("f", &encode(&d)).unwrap(), d);
        }
    }
}
