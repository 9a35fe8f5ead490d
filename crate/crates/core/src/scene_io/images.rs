//! Depth maps, color images, and occupancy masks with their PNG codecs.

use super::{image_error, SceneIoError};
use crate::geometry::CameraIntrinsics;
use image::{DynamicImage, ImageBuffer, Luma, Rgb};
use std::path::Path;

/// Largest depth the millimeter codec can represent.
pub const MAX_DEPTH_M: f64 = 65.535;

/// A per-pixel depth grid in millimeters; 0 marks an invalid pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepthMap {
    width: u32,
    height: u32,
    data: Vec<u16>,
}

impl DepthMap {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, u: u32, v: u32) -> u16 {
        self.data[self.index(u, v)]
    }

    pub fn set(&mut self, u: u32, v: u32, millimeters: u16) {
        let i = self.index(u, v);
        self.data[i] = millimeters;
    }

    /// Depth in meters, or `None` for invalid pixels.
    pub fn meters(&self, u: u32, v: u32) -> Option<f64> {
        match self.get(u, v) {
            0 => None,
            mm => Some(f64::from(mm) / 1000.0),
        }
    }

    /// Rounds a metric depth to the nearest millimeter; out-of-range values
    /// (including non-finite ones) quantize to invalid.
    pub fn quantize(meters: f64) -> u16 {
        if !meters.is_finite() {
            return 0;
        }
        let mm = (meters * 1000.0).round();
        if mm < 1.0 || mm > 65535.0 {
            0
        } else {
            mm as u16
        }
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|&&mm| mm != 0).count()
    }

    pub fn data(&self) -> &[u16] {
        &self.data
    }

    fn index(&self, u: u32, v: u32) -> usize {
        assert!(u < self.width && v < self.height, "pixel out of bounds");
        v as usize * self.width as usize + u as usize
    }
}

/// An 8-bit RGB image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColorImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl ColorImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0; width as usize * height as usize * 3],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, u: u32, v: u32) -> [u8; 3] {
        let i = self.index(u, v);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, u: u32, v: u32, rgb: [u8; 3]) {
        let i = self.index(u, v);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    fn index(&self, u: u32, v: u32) -> usize {
        assert!(u < self.width && v < self.height, "pixel out of bounds");
        (v as usize * self.width as usize + u as usize) * 3
    }
}

/// A binary mask marking pixels that received at least one projected point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupancyMask {
    width: u32,
    height: u32,
    data: Vec<bool>,
}

impl OccupancyMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![false; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, u: u32, v: u32) -> bool {
        self.data[self.index(u, v)]
    }

    pub fn set(&mut self, u: u32, v: u32, occupied: bool) {
        let i = self.index(u, v);
        self.data[i] = occupied;
    }

    pub fn set_count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    fn index(&self, u: u32, v: u32) -> usize {
        assert!(u < self.width && v < self.height, "pixel out of bounds");
        v as usize * self.width as usize + u as usize
    }
}

/// Loads a 16-bit single-channel PNG depth map and checks it against the
/// camera's expected dimensions.
pub fn load_depth(path: &Path, k: &CameraIntrinsics) -> Result<DepthMap, SceneIoError> {
    let img = image::open(path).map_err(|e| image_error(path, e))?;
    let gray = match img {
        DynamicImage::ImageLuma16(gray) => gray,
        other => {
            return Err(SceneIoError::format(
                path,
                format!(
                    "expected 16-bit single-channel PNG, got {:?}",
                    other.color()
                ),
            ))
        }
    };
    if gray.width() != k.width() || gray.height() != k.height() {
        return Err(SceneIoError::DimensionMismatch {
            path: path.to_path_buf(),
            expected_width: k.width(),
            expected_height: k.height(),
            width: gray.width(),
            height: gray.height(),
        });
    }
    Ok(DepthMap {
        width: gray.width(),
        height: gray.height(),
        data: gray.into_raw(),
    })
}

pub fn save_depth(depth: &DepthMap, path: &Path) -> Result<(), SceneIoError> {
    let buffer: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(depth.width, depth.height, depth.data.clone())
            .expect("depth buffer length matches dimensions");
    buffer.save(path).map_err(|e| image_error(path, e))
}

/// Loads an 8-bit RGB PNG.
pub fn load_color(path: &Path) -> Result<ColorImage, SceneIoError> {
    let img = image::open(path).map_err(|e| image_error(path, e))?;
    let rgb = match img {
        DynamicImage::ImageRgb8(rgb) => rgb,
        other => {
            return Err(SceneIoError::format(
                path,
                format!("expected 8-bit RGB PNG, got {:?}", other.color()),
            ))
        }
    };
    Ok(ColorImage {
        width: rgb.width(),
        height: rgb.height(),
        data: rgb.into_raw(),
    })
}

pub fn save_color(image: &ColorImage, path: &Path) -> Result<(), SceneIoError> {
    let buffer: ImageBuffer<Rgb<u8>, Vec<u8>> =
        ImageBuffer::from_raw(image.width, image.height, image.data.clone())
            .expect("color buffer length matches dimensions");
    buffer.save(path).map_err(|e| image_error(path, e))
}

/// Loads an 8-bit grayscale mask; any non-zero pixel counts as set.
pub fn load_mask(path: &Path) -> Result<OccupancyMask, SceneIoError> {
    let img = image::open(path).map_err(|e| image_error(path, e))?;
    let gray = match img {
        DynamicImage::ImageLuma8(gray) => gray,
        other => {
            return Err(SceneIoError::format(
                path,
                format!("expected 8-bit grayscale PNG, got {:?}", other.color()),
            ))
        }
    };
    Ok(OccupancyMask {
        width: gray.width(),
        height: gray.height(),
        data: gray.into_raw().into_iter().map(|v| v != 0).collect(),
    })
}

/// Saves a mask as an 8-bit grayscale PNG with values 0 and 255.
pub fn save_mask(mask: &OccupancyMask, path: &Path) -> Result<(), SceneIoError> {
    let data: Vec<u8> = mask.data.iter().map(|&b| if b { 255 } else { 0 }).collect();
    let buffer: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::from_raw(mask.width, mask.height, data)
            .expect("mask buffer length matches dimensions");
    buffer.save(path).map_err(|e| image_error(path, e))
}
