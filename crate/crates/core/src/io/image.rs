use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use png::{BitDepth, ColorType, Transformations};

use super::{format_err, io_err, IoError};
use crate::geometry::{DepthMap, DepthRange, Grid, Mask, ScalarImage};

/// 8-bit RGB, row-major, 3 bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height * 3],
        }
    }

    pub fn pixel(&self, u: usize, v: usize) -> [u8; 3] {
        let i = 3 * (v * self.width + u);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, u: usize, v: usize, rgb: [u8; 3]) {
        let i = 3 * (v * self.width + u);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Rec. 601 luma in `[0, 1]`.
    pub fn to_gray(&self) -> ScalarImage {
        Grid::from_fn(self.width, self.height, |u, v| {
            let [r, g, b] = self.pixel(u, v);
            (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64) / 255.0
        })
    }
}

struct Decoded {
    width: usize,
    height: usize,
    color: ColorType,
    depth: BitDepth,
    bytes: Vec<u8>,
}

fn decode(path: &Path, transformations: Transformations) -> Result<Decoded, IoError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(transformations);
    let mut reader = decoder.read_info().map_err(|e| format_err(path, e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| format_err(path, "image too large"))?;
    let mut bytes = vec![0; size];
    let info = reader.next_frame(&mut bytes).map_err(|e| format_err(path, e.to_string()))?;
    bytes.truncate(info.line_size * info.height as usize);
    Ok(Decoded {
        width: info.width as usize,
        height: info.height as usize,
        color: info.color_type,
        depth: info.bit_depth,
        bytes,
    })
}

fn encode(path: &Path, width: usize, height: usize, color: ColorType, depth: BitDepth, data: &[u8]) -> Result<(), IoError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(color);
    enc.set_depth(depth);
    let png_err = |e: png::EncodingError| format_err(path, e.to_string());
    let mut writer = enc.write_header().map_err(png_err)?;
    writer.write_image_data(data).map_err(png_err)?;
    writer.finish().map_err(png_err)
}

/// A loaded depth map and the number of valid pixels moved into the range.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthLoad {
    pub depth: DepthMap,
    pub clamped: usize,
}

/// Reads a 16-bit single-channel PNG as `stored / scale` meters. Zeros stay
/// invalid; other values are clamped into `range`.
pub fn load_depth_png(path: &Path, scale: f64, range: DepthRange) -> Result<DepthLoad, IoError> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(IoError::Invalid(format!("depth scale must be positive, got {scale}")));
    }
    let img = decode(path, Transformations::IDENTITY)?;
    if img.color != ColorType::Grayscale || img.depth != BitDepth::Sixteen {
        return Err(format_err(
            path,
            format!("depth must be 16-bit grayscale, got {:?} {:?}", img.depth, img.color),
        ));
    }
    let values = img
        .bytes
        .chunks_exact(2)
        .map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 / scale)
        .collect();
    let mut depth = DepthMap::from_vec(img.width, img.height, values)?;
    let clamped = depth.clamp(range);
    if clamped > 0 {
        log::warn!("{}: {clamped} depth values clamped to [{}, {}] m", path.display(), range.min, range.max);
    }
    Ok(DepthLoad { depth, clamped })
}

/// Writes `round(z · scale)` as 16-bit; invalid pixels are stored as 0.
pub fn save_depth_png(path: &Path, depth: &DepthMap, scale: f64) -> Result<(), IoError> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(IoError::Invalid(format!("depth scale must be positive, got {scale}")));
    }
    let mut data = Vec::with_capacity(depth.values().len() * 2);
    for &z in depth.values() {
        let s = if z > 0.0 { (z * scale).round().clamp(0.0, u16::MAX as f64) as u16 } else { 0 };
        data.extend_from_slice(&s.to_be_bytes());
    }
    encode(path, depth.width(), depth.height(), ColorType::Grayscale, BitDepth::Sixteen, &data)
}

/// Reads an 8-bit grayscale PNG; any nonzero value is inside the mask.
pub fn load_mask_png(path: &Path) -> Result<Mask, IoError> {
    let img = decode(path, Transformations::EXPAND)?;
    if img.color != ColorType::Grayscale || img.depth != BitDepth::Eight {
        return Err(format_err(
            path,
            format!("mask must be 8-bit grayscale, got {:?} {:?}", img.depth, img.color),
        ));
    }
    Ok(Grid::from_vec(img.width, img.height, img.bytes.iter().map(|&b| b != 0).collect())?)
}

pub fn save_mask_png(path: &Path, mask: &Mask) -> Result<(), IoError> {
    let data: Vec<u8> = mask.data().iter().map(|&b| if b { 255 } else { 0 }).collect();
    encode(path, mask.width(), mask.height(), ColorType::Grayscale, BitDepth::Eight, &data)
}

/// Reads any 8-bit PNG (gray, gray+alpha, RGB, RGBA or palette) as RGB.
pub fn load_rgb_png(path: &Path) -> Result<RgbImage, IoError> {
    let img = decode(path, Transformations::EXPAND | Transformations::STRIP_16)?;
    let channels = match img.color {
        ColorType::Grayscale => 1,
        ColorType::GrayscaleAlpha => 2,
        ColorType::Rgb => 3,
        ColorType::Rgba => 4,
        ColorType::Indexed => return Err(format_err(path, "palette was not expanded")),
    };
    if img.depth != BitDepth::Eight {
        return Err(format_err(path, format!("expected 8-bit color, got {:?}", img.depth)));
    }
    let mut out = RgbImage::new(img.width, img.height);
    for (i, px) in img.bytes.chunks_exact(channels).enumerate() {
        let rgb = if channels < 3 { [px[0]; 3] } else { [px[0], px[1], px[2]] };
        out.data[3 * i..3 * i + 3].copy_from_slice(&rgb);
    }
    Ok(out)
}

pub fn save_rgb_png(path: &Path, img: &RgbImage) -> Result<(), IoError> {
    encode(path, img.width, img.height, ColorType::Rgb, BitDepth::Eight, &img.data)
}

/// Luma in `[0, 1]` of any 8-bit PNG.
pub fn load_gray_png(path: &Path) -> Result<ScalarImage, IoError> {
    Ok(load_rgb_png(path)?.to_gray())
}
