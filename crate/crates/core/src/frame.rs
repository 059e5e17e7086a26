//! Frames and their lossless I/O (PNG, binary PGM/PPM).

use std::fs;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("unsupported frame format: {0}")]
    Unsupported(String),
    #[error("malformed header: {0}")]
    Header(String),
    #[error("truncated file: data ends at byte offset {offset}, expected {expected} bytes")]
    Truncated { offset: usize, expected: usize },
    #[error("png: {0}")]
    Png(String),
    #[error("invalid frame: {0}")]
    Invalid(String),
}

/// `height × width × channels` intensities, interleaved row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    height: usize,
    width: usize,
    channels: usize,
    bit_depth: u32,
    pixels: Vec<u16>,
}

impl Frame {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        bit_depth: u32,
        pixels: Vec<u16>,
    ) -> Result<Self, FrameError> {
        if channels != 1 && channels != 3 {
            return Err(FrameError::Invalid(format!("{channels} channels (expected 1 or 3)")));
        }
        if !(1..=16).contains(&bit_depth) {
            return Err(FrameError::Invalid(format!("bit depth {bit_depth}")));
        }
        if pixels.len() != height * width * channels {
            return Err(FrameError::Invalid(format!(
                "{} samples for {height}x{width}x{channels}",
                pixels.len()
            )));
        }
        let max = ((1u32 << bit_depth) - 1) as u16;
        if let Some(p) = pixels.iter().find(|&&p| p > max) {
            return Err(FrameError::Invalid(format!("sample {p} exceeds {max}")));
        }
        Ok(Self {
            height,
            width,
            channels,
            bit_depth,
            pixels,
        })
    }

    /// 8-bit frame from a closure over `(row, col, channel)`.
    pub fn from_fn_8bit(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> u8,
    ) -> Self {
        let mut pixels = Vec::with_capacity(height * width * channels);
        for i in 0..height {
            for j in 0..width {
                for c in 0..channels {
                    pixels.push(f(i, j, c) as u16);
                }
            }
        }
        Self::new(height, width, channels, 8, pixels).expect("valid 8-bit frame")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn bit_depth(&self) -> u32 {
        self.bit_depth
    }

    pub fn max_value(&self) -> f64 {
        ((1u32 << self.bit_depth) - 1) as f64
    }

    pub fn pixels(&self) -> &[u16] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, c: usize) -> f64 {
        self.pixels[(i * self.width + j) * self.channels + c] as f64
    }

    /// One channel as a dense row-major plane.
    pub fn plane(&self, c: usize) -> Vec<f64> {
        self.pixels
            .iter()
            .skip(c)
            .step_by(self.channels)
            .map(|&p| p as f64)
            .collect()
    }
}

pub fn load_frame(path: &Path) -> Result<Frame, FrameError> {
    let bytes = fs::read(path).map_err(|source| FrameError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_frame(&bytes)
}

pub fn decode_frame(bytes: &[u8]) -> Result<Frame, FrameError> {
    if bytes.starts_with(b"P5") || bytes.starts_with(b"P6") {
        decode_pnm(bytes)
    } else if bytes.starts_with(&[0x89, b'P', b'N', b'G']) {
        decode_png(bytes)
    } else {
        Err(FrameError::Unsupported("expected PNG or binary PGM/PPM".into()))
    }
}

/// Writes PNG for a `.png` extension, otherwise binary PGM/PPM.
pub fn save_frame(frame: &Frame, path: &Path) -> Result<(), FrameError> {
    let is_png = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
    let bytes = if is_png {
        encode_png(frame)?
    } else {
        encode_pnm(frame)
    };
    fs::write(path, bytes).map_err(|source| FrameError::Io {
        path: path.display().to_string(),
        source,
    })
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize, FrameError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(FrameError::Header(format!("missing {what} at byte offset {start}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| FrameError::Header(format!("bad {what} at byte offset {start}")))
    }
}

fn decode_pnm(bytes: &[u8]) -> Result<Frame, FrameError> {
    let channels = if bytes[1] == b'5' { 1 } else { 3 };
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(FrameError::Header(format!("maxval {maxval} out of range")));
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(FrameError::Truncated { offset: cur.pos, expected: cur.pos + 1 }),
    }
    let sample_bytes = if maxval < 256 { 1 } else { 2 };
    let n = width * height * channels;
    let expected = cur.pos + n * sample_bytes;
    if bytes.len() < expected {
        return Err(FrameError::Truncated {
            offset: bytes.len(),
            expected,
        });
    }
    let raster = &bytes[cur.pos..expected];
    let pixels: Vec<u16> = if sample_bytes == 1 {
        raster.iter().map(|&b| b as u16).collect()
    } else {
        raster
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    };
    let bit_depth = usize::BITS - maxval.leading_zeros();
    Frame::new(height, width, channels, bit_depth, pixels)
}

fn encode_pnm(frame: &Frame) -> Vec<u8> {
    let magic = if frame.channels == 1 { "P5" } else { "P6" };
    let max = frame.max_value() as u32;
    let mut out = format!("{magic}\n{} {}\n{max}\n", frame.width, frame.height).into_bytes();
    if max < 256 {
        out.extend(frame.pixels.iter().map(|&p| p as u8));
    } else {
        for p in &frame.pixels {
            out.extend_from_slice(&p.to_be_bytes());
        }
    }
    out
}

fn decode_png(bytes: &[u8]) -> Result<Frame, FrameError> {
    use image::DynamicImage;
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| FrameError::Png(e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma8(b) => Frame::new(h, w, 1, 8, b.into_raw().into_iter().map(u16::from).collect()),
        DynamicImage::ImageRgb8(b) => Frame::new(h, w, 3, 8, b.into_raw().into_iter().map(u16::from).collect()),
        DynamicImage::ImageLuma16(b) => Frame::new(h, w, 1, 16, b.into_raw()),
        DynamicImage::ImageRgb16(b) => Frame::new(h, w, 3, 16, b.into_raw()),
        other => Err(FrameError::Unsupported(format!("png color type {:?}", other.color()))),
    }
}

fn encode_png(frame: &Frame) -> Result<Vec<u8>, FrameError> {
    use image::{ExtendedColorType, ImageEncoder};
    if frame.bit_depth != 8 && frame.bit_depth != 16 {
        return Err(FrameError::Unsupported(format!(
            "png needs 8 or 16 bit samples, frame has {}",
            frame.bit_depth
        )));
    }
    let color = match (frame.channels, frame.bit_depth) {
        (1, 8) => ExtendedColorType::L8,
        (3, 8) => ExtendedColorType::Rgb8,
        (1, _) => ExtendedColorType::L16,
        _ => ExtendedColorType::Rgb16,
    };
    let raw: Vec<u8> = if frame.bit_depth == 8 {
        frame.pixels.iter().map(|&p| p as u8).collect()
    } else {
        // The PNG encoder takes 16-bit samples in native byte order.
        frame.pixels.iter().flat_map(|p| p.to_ne_bytes()).collect()
    };
    let mut out = Vec::new();
    image::codecs::png::PngEncoder::new(&mut out)
        .write_image(&raw, frame.width as u32, frame.height as u32, color)
        .map_err(|e| FrameError::Png(e.to_string()))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(channels: usize) -> Frame {
        Frame::from_fn_8bit(5, 7, channels, |i, j, c| ((i * 31 + j * 17 + c * 101) % 256) as u8)
    }

    #[test]
    fn round_trips_are_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        for channels in [1, 3] {
            let f = sample(channels);
            for name in ["a.png", "a.pnm"] {
                let path = dir.path().join(name);
                save_frame(&f, &path).unwrap();
                assert_eq!(load_frame(&path).unwrap(), f);
            }
        }
        let f16 = Frame::new(2, 2, 1, 16, vec![0, 1000, 40000, 65535]).unwrap();
        for name in ["b.png", "b.pgm"] {
            let path = dir.path().join(name);
            save_frame(&f16, &path).unwrap();
            assert_eq!(load_frame(&path).unwrap(), f16);
        }
    }

    #[test]
    fn ppm_header_gives_8_bit_rgb() {
        let mut bytes = b"P6\n# comment\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3, 4, 5, 6]);
        let f = decode_frame(&bytes).unwrap();
        assert_eq!((f.height(), f.width(), f.channels(), f.bit_depth()), (1, 2, 3, 8));
        assert_eq!(f.max_value(), 255.0);
        assert_eq!(f.get(0, 1, 2), 6.0);
    }

    #[test]
    fn truncated_raster_reports_offset() {
        let mut bytes = b"P5\n4 4\n255\n".to_vec();
        bytes.extend_from_slice(&[0; 10]);
        match decode_frame(&bytes) {
            Err(FrameError::Truncated { offset, expected }) => {
                assert_eq!(offset, 21);
                assert_eq!(expected, 27);
            }
            other => panic!("expected truncation error, got {other:?}"),
        }
        assert!(decode_frame(b"GIF89a").is_err());
        assert!(decode_frame(b"P5\n4").is_err());
    }
}
