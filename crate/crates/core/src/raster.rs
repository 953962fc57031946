//! Raster decoding and resizing shared by the inference adapter and the
//! hashing baselines.
//!
//! All resampling goes through one bilinear kernel (half-pixel centers,
//! clamped edges) so every consumer sees identical pixels. The nested-lerp
//! formulation keeps constant regions exactly constant.

use std::path::Path;

use crate::error::{Error, Result};

/// RGB image with f32 channels on the 0..=255 scale, alpha dropped and
/// grayscale replicated at decode time.
#[derive(Debug, Clone)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    /// Interleaved RGB, row-major, length = 3 * width * height.
    pub data: Vec<f32>,
}

impl Raster {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != 3 * width * height {
            return Err(Error::Shape(format!(
                "raster {}x{} needs {} values, got {}",
                width,
                height,
                3 * width * height,
                data.len()
            )));
        }
        Ok(Raster { width, height, data })
    }

    pub fn constant(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(3 * width * height);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Raster { width, height, data }
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn decode_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path)
            .map_err(|e| Error::Decode(format!("{}: {e}", path.display())))?;
        Ok(Self::from_dynamic(img))
    }

    pub fn decode_bytes(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory(bytes)
            .map_err(|e| Error::Decode(e.to_string()))?;
        Ok(Self::from_dynamic(img))
    }

    fn from_dynamic(img: image::DynamicImage) -> Self {
        let rgb = img.to_rgb8();
        let (w, h) = (rgb.width() as usize, rgb.height() as usize);
        let data = rgb.into_raw().into_iter().map(f32::from).collect();
        Raster { width: w, height: h, data }
    }

    /// Bilinear resample to `(dst_w, dst_h)` with half-pixel centers.
    pub fn resize_bilinear(&self, dst_w: usize, dst_h: usize) -> Raster {
        assert!(dst_w > 0 && dst_h > 0);
        if dst_w == self.width && dst_h == self.height {
            return self.clone();
        }
        let sx = self.width as f32 / dst_w as f32;
        let sy = self.height as f32 / dst_h as f32;
        let mut out = Vec::with_capacity(3 * dst_w * dst_h);
        for dy in 0..dst_h {
            let fy = ((dy as f32 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f32);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let ty = fy - y0 as f32;
            for dx in 0..dst_w {
                let fx = ((dx as f32 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f32);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let tx = fx - x0 as f32;
                let p00 = self.pixel(x0, y0);
                let p10 = self.pixel(x1, y0);
                let p01 = self.pixel(x0, y1);
                let p11 = self.pixel(x1, y1);
                for c in 0..3 {
                    let top = lerp(p00[c], p10[c], tx);
                    let bot = lerp(p01[c], p11[c], tx);
                    out.push(lerp(top, bot, ty));
                }
            }
        }
        Raster { width: dst_w, height: dst_h, data: out }
    }
}

#[inline]
fn lerp(a: f32, b: f32, t: f32) -> f32 {
    a + t * (b - a)
}
