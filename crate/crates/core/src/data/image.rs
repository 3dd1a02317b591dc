use crate::error::{Error, Result};
use std::path::Path;

/// Row-major 8-bit single-channel raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

/// Row-major 8-bit interleaved RGB raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

macro_rules! raster_common {
    ($ty:ty, $channels:expr) => {
        impl $ty {
            pub const CHANNELS: usize = $channels;

            pub fn new(width: usize, height: usize) -> Self {
                Self {
                    width,
                    height,
                    data: vec![0; width * height * $channels],
                }
            }

            pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
                if data.len() != width * height * $channels {
                    return Err(Error::Format(format!(
                        "{}×{}×{} raster needs {} bytes, got {}",
                        width,
                        height,
                        $channels,
                        width * height * $channels,
                        data.len()
                    )));
                }
                Ok(Self {
                    width,
                    height,
                    data,
                })
            }

            pub fn width(&self) -> usize {
                self.width
            }

            pub fn height(&self) -> usize {
                self.height
            }

            pub fn as_raw(&self) -> &[u8] {
                &self.data
            }

            pub fn as_raw_mut(&mut self) -> &mut [u8] {
                &mut self.data
            }
        }
    };
}

raster_common!(GrayImage, 1);
raster_common!(RgbImage, 3);

impl GrayImage {
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: u8) {
        self.data[row * self.width + col] = v;
    }
}

impl RgbImage {
    pub fn get(&self, row: usize, col: usize) -> [u8; 3] {
        let i = (row * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, row: usize, col: usize, px: [u8; 3]) {
        let i = (row * self.width + col) * 3;
        self.data[i..i + 3].copy_from_slice(&px);
    }

    /// Per-pixel mean of the three channels, as `f32` in `[0, 1]`.
    pub fn gray_f32(&self) -> Vec<f32> {
        self.data
            .chunks_exact(3)
            .map(|p| (p[0] as f32 + p[1] as f32 + p[2] as f32) / (3.0 * 255.0))
            .collect()
    }
}

// ---- binary PGM (P5) / PPM (P6) ------------------------------------------

fn encode_pnm(magic: &str, width: usize, height: usize, data: &[u8]) -> Vec<u8> {
    let mut out = format!("{magic}\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(data);
    out
}

/// Parses a binary PNM header; returns `(width, height, payload offset)`.
fn parse_pnm_header(bytes: &[u8], magic: &[u8; 2]) -> Result<(usize, usize, usize)> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(Error::Format(format!(
            "expected {} image",
            String::from_utf8_lossy(magic)
        )));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(Error::Format("truncated PNM header".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("malformed PNM header field".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|_| Error::Format("PNM header value out of range".into()))?;
    }
    if fields[2] != 255 {
        return Err(Error::Format(format!(
            "unsupported PNM maxval {} (only 255)",
            fields[2]
        )));
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::Format("missing whitespace after PNM header".into())),
    }
    Ok((fields[0], fields[1], pos))
}

fn decode_pnm(bytes: &[u8], magic: &[u8; 2], channels: usize) -> Result<(usize, usize, Vec<u8>)> {
    let (w, h, off) = parse_pnm_header(bytes, magic)?;
    let need = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::Format("PNM dimensions overflow".into()))?;
    if bytes.len() - off != need {
        return Err(Error::Format(format!(
            "PNM payload is {} bytes, expected {need}",
            bytes.len() - off
        )));
    }
    Ok((w, h, bytes[off..].to_vec()))
}

impl GrayImage {
    pub fn to_pgm(&self) -> Vec<u8> {
        encode_pnm("P5", self.width, self.height, &self.data)
    }

    pub fn from_pgm(bytes: &[u8]) -> Result<Self> {
        let (w, h, data) = decode_pnm(bytes, b"P5", 1)?;
        Self::from_raw(w, h, data)
    }
}

impl RgbImage {
    pub fn to_ppm(&self) -> Vec<u8> {
        encode_pnm("P6", self.width, self.height, &self.data)
    }

    pub fn from_ppm(bytes: &[u8]) -> Result<Self> {
        let (w, h, data) = decode_pnm(bytes, b"P6", 3)?;
        Self::from_raw(w, h, data)
    }

    pub fn save_ppm(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_ppm()).map_err(|e| Error::io(path, e))
    }

    pub fn load_ppm(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_ppm(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pnm_round_trip_and_comments() {
        let mut g = GrayImage::new(3, 2);
        g.set(1, 2, 200);
        assert_eq!(GrayImage::from_pgm(&g.to_pgm()).unwrap(), g);
        let mut c = RgbImage::new(2, 2);
        c.set(0, 1, [1, 2, 3]);
        assert_eq!(RgbImage::from_ppm(&c.to_ppm()).unwrap(), c);

        let mut commented = b"P5 # a comment\n3 # w\n 2\n255\n".to_vec();
        commented.extend(g.as_raw());
        assert_eq!(GrayImage::from_pgm(&commented).unwrap(), g);
    }

    #[test]
    fn malformed_pnm_is_rejected() {
        let g = GrayImage::new(4, 4).to_pgm();
        assert!(GrayImage::from_pgm(&g[..g.len() - 1]).is_err());
        assert!(RgbImage::from_ppm(&g).is_err());
        assert!(GrayImage::from_pgm(b"P5\n4 4\n65535\n").is_err());
        assert!(GrayImage::from_pgm(b"P5\n4").is_err());
        assert!(GrayImage::from_pgm(b"").is_err());
        assert!(GrayImage::from_pgm(b"P5\n99999999999999999999999 1\n255\n").is_err());
    }
}
