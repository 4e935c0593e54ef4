use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::MatchError;

/// Stride of each grid relative to the source image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resolution {
    /// 1/8 of the input.
    Coarse,
    /// 1/2 of the input.
    Fine,
}

impl Resolution {
    pub fn stride(self) -> usize {
        match self {
            Resolution::Coarse => 8,
            Resolution::Fine => 2,
        }
    }
}

/// Grid of `channels`-dimensional descriptors stored row-major, channels
/// innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    width: usize,
    height: usize,
    channels: usize,
    resolution: Resolution,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        resolution: Resolution,
        data: Vec<f64>,
    ) -> Result<Self, MatchError> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(MatchError::InvalidInput(format!(
                "empty feature map {width}x{height}x{channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(MatchError::InvalidInput(format!(
                "feature map {width}x{height}x{channels} needs {} values, got {}",
                width * height * channels,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(MatchError::InvalidInput(format!("non-finite descriptor value at {i}")));
        }
        Ok(Self {
            width,
            height,
            channels,
            resolution,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize, channels: usize, resolution: Resolution) -> Self {
        Self {
            width,
            height,
            channels,
            resolution,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn resolution(&self) -> Resolution {
        self.resolution
    }

    /// Number of cells.
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Source image size implied by the grid and its stride.
    pub fn source_size(&self) -> (usize, usize) {
        let s = self.resolution.stride();
        (self.width * s, self.height * s)
    }

    #[inline]
    pub fn cell_index(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.width && y < self.height);
        y * self.width + x
    }

    #[inline]
    pub fn cell_coords(&self, index: usize) -> (usize, usize) {
        (index % self.width, index / self.width)
    }

    #[inline]
    pub fn descriptor(&self, index: usize) -> &[f64] {
        &self.data[index * self.channels..(index + 1) * self.channels]
    }

    #[inline]
    pub fn descriptor_at(&self, x: usize, y: usize) -> &[f64] {
        self.descriptor(self.cell_index(x, y))
    }

    pub(crate) fn descriptor_mut(&mut self, index: usize) -> &mut [f64] {
        &mut self.data[index * self.channels..(index + 1) * self.channels]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn same_layout(&self, other: &FeatureMap) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.channels == other.channels
            && self.resolution == other.resolution
    }

    /// Writes the binary container: `height, width, channels` as little-endian
    /// `u32`, then the values as little-endian `f32`, row-major, channels
    /// innermost.
    pub fn write_container<W: Write>(&self, mut w: W) -> Result<(), MatchError> {
        for dim in [self.height, self.width, self.channels] {
            let dim = u32::try_from(dim).map_err(|_| MatchError::Format(format!("dimension {dim} exceeds u32")))?;
            w.write_all(&dim.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for &x in &self.data {
            buf.extend_from_slice(&(x as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_container<R: Read>(mut r: R, resolution: Resolution) -> Result<Self, MatchError> {
        let mut header = [0u8; 12];
        r.read_exact(&mut header)
            .map_err(|e| MatchError::Format(format!("truncated feature header: {e}")))?;
        let dim = |i: usize| u32::from_le_bytes(header[4 * i..4 * i + 4].try_into().unwrap()) as usize;
        let (height, width, channels) = (dim(0), dim(1), dim(2));
        let n = height
            .checked_mul(width)
            .and_then(|x| x.checked_mul(channels))
            .ok_or_else(|| MatchError::Format("feature dimensions overflow".into()))?;
        let mut body = Vec::new();
        r.read_to_end(&mut body)?;
        if body.len() != 4 * n {
            return Err(MatchError::Format(format!(
                "feature body for {height}x{width}x{channels} needs {} bytes, got {}",
                4 * n,
                body.len()
            )));
        }
        let data = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        Self::new(width, height, channels, resolution, data)
    }
}

/// Coarse and fine descriptors of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePyramid {
    pub coarse: FeatureMap,
    pub fine: FeatureMap,
}

impl FeaturePyramid {
    pub fn new(coarse: FeatureMap, fine: FeatureMap) -> Result<Self, MatchError> {
        if coarse.resolution() != Resolution::Coarse || fine.resolution() != Resolution::Fine {
            return Err(MatchError::InvalidInput("pyramid levels carry wrong resolution tags".into()));
        }
        if coarse.source_size() != fine.source_size() {
            return Err(MatchError::InvalidInput(format!(
                "coarse grid implies source {:?}, fine grid implies {:?}",
                coarse.source_size(),
                fine.source_size()
            )));
        }
        Ok(Self { coarse, fine })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn container_round_trip() {
        let data: Vec<f64> = (0..2 * 3 * 4).map(|i| i as f64 * 0.25 - 1.0).collect();
        let f = FeatureMap::new(3, 2, 4, Resolution::Fine, data).unwrap();
        let mut buf = Vec::new();
        f.write_container(&mut buf).unwrap();
        assert_eq!(&buf[..12], &[2, 0, 0, 0, 3, 0, 0, 0, 4, 0, 0, 0]);
        let g = FeatureMap::read_container(buf.as_slice(), Resolution::Fine).unwrap();
        assert_eq!(f, g);
        assert!(FeatureMap::read_container(&buf[..20], Resolution::Fine).is_err());
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(FeatureMap::new(2, 2, 1, Resolution::Coarse, vec![0.0; 3]).is_err());
        assert!(FeatureMap::new(1, 1, 1, Resolution::Coarse, vec![f64::NAN]).is_err());
        let c = FeatureMap::zeros(4, 4, 2, Resolution::Coarse);
        let f = FeatureMap::zeros(15, 16, 2, Resolution::Fine);
        assert!(FeaturePyramid::new(c, f).is_err());
    }
}
