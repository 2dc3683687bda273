//! Pixel containers shared by every stage of the pipeline.
//!
//! [`ImageBuffer`] is always interleaved 8-bit R, G, B in row-major order,
//! whatever the on-disk encoding was. [`BinaryMask`] stores one byte per
//! pixel restricted to `{0, 1}`, where 1 marks a change pixel.

use std::path::Path;

use crate::error::{Error, Result};

/// An H×W×3 RGB image with 8-bit channels.
#[derive(Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl std::fmt::Debug for ImageBuffer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ImageBuffer")
            .field("height", &self.height)
            .field("width", &self.width)
            .finish_non_exhaustive()
    }
}

impl ImageBuffer {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::EmptyImage);
        }
        if data.len() != height * width * 3 {
            return Err(Error::BufferLength {
                height,
                width,
                channels: 3,
                actual: data.len(),
            });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, rgb: [u8; 3]) -> Result<Self> {
        let data = rgb.iter().copied().cycle().take(height * width * 3).collect();
        Self::new(height, width, data)
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> [u8; 3],
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(y, x));
            }
        }
        Self::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `(height, width)`.
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    pub fn as_raw_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, y: usize, x: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Luma in `[0, 1]` using the ITU-R BT.601 weights.
    pub fn to_gray_f32(&self) -> Vec<f32> {
        self.data
            .chunks_exact(3)
            .map(|p| (0.299 * p[0] as f32 + 0.587 * p[1] as f32 + 0.114 * p[2] as f32) / 255.0)
            .collect()
    }

    /// Bilinear sample at continuous coordinates where integer values are
    /// pixel centres. Returns `None` outside `[0, w-1] × [0, h-1]`.
    #[inline]
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Option<[f64; 3]> {
        bilinear_rgb(&self.data, self.height, self.width, x, y)
    }

    /// Resizes with bilinear interpolation using half-pixel centres.
    pub fn resize_bilinear(&self, height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::EmptyImage);
        }
        if (height, width) == self.dims() {
            return Ok(self.clone());
        }
        let sy = self.height as f64 / height as f64;
        let sx = self.width as f64 / width as f64;
        Self::from_fn(height, width, |y, x| {
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
            let v = self.sample_bilinear(fx, fy).expect("clamped coordinates");
            [round_u8(v[0]), round_u8(v[1]), round_u8(v[2])]
        })
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        if top + height > self.height || left + width > self.width {
            return Err(Error::CropTooLarge {
                crop: (top + height, left + width),
                image: self.dims(),
            });
        }
        let mut data = Vec::with_capacity(height * width * 3);
        for y in top..top + height {
            let start = (y * self.width + left) * 3;
            data.extend_from_slice(&self.data[start..start + width * 3]);
        }
        Self::new(height, width, data)
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                out.set_pixel(y, x, self.pixel(y, self.width - 1 - x));
            }
        }
        out
    }

    pub fn flip_vertical(&self) -> Self {
        let mut out = self.clone();
        let row = self.width * 3;
        for y in 0..self.height {
            let src = (self.height - 1 - y) * row;
            out.data[y * row..(y + 1) * row].copy_from_slice(&self.data[src..src + row]);
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        let img = open_image(path)?.to_rgb8();
        let (w, h) = img.dimensions();
        Self::new(h as usize, w as usize, img.into_raw())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let img = ::image::RgbImage::from_raw(self.width as u32, self.height as u32, self.data.clone())
            .expect("buffer length checked at construction");
        img.save(path).map_err(|e| Error::Encode(format!("{}: {e}", path.display())))
    }

    pub fn from_dynamic(img: &::image::DynamicImage) -> Result<Self> {
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        Self::new(h as usize, w as usize, rgb.into_raw())
    }
}

/// An H×W change mask with values in `{0, 1}`.
#[derive(Clone, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl std::fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BinaryMask")
            .field("height", &self.height)
            .field("width", &self.width)
            .field("ones", &self.count_ones())
            .finish()
    }
}

impl BinaryMask {
    /// Strict constructor: every value must already be 0 or 1.
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::EmptyImage);
        }
        if data.len() != height * width {
            return Err(Error::BufferLength {
                height,
                width,
                channels: 1,
                actual: data.len(),
            });
        }
        if let Some(&v) = data.iter().find(|&&v| v > 1) {
            return Err(Error::NonBinaryMask(v));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    /// Maps any nonzero stored value to 1.
    pub fn binarize(height: usize, width: usize, raw: &[u8]) -> Result<Self> {
        Self::new(height, width, raw.iter().map(|&v| u8::from(v > 0)).collect())
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, vec![0; height * width])
    }

    pub fn ones(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, vec![1; height * width])
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(u8::from(f(y, x)));
            }
        }
        Self::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, on: bool) {
        self.data[y * self.width + x] = u8::from(on);
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }

    pub fn invert(&self) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| 1 - v).collect(),
        }
    }

    /// Nearest-neighbour resize with half-pixel centres.
    pub fn resize_nearest(&self, height: usize, width: usize) -> Result<Self> {
        if (height, width) == self.dims() {
            return Ok(self.clone());
        }
        let sy = self.height as f64 / height as f64;
        let sx = self.width as f64 / width as f64;
        Self::from_fn(height, width, |y, x| {
            let sy = (((y as f64 + 0.5) * sy) as usize).min(self.height - 1);
            let sx = (((x as f64 + 0.5) * sx) as usize).min(self.width - 1);
            self.get(sy, sx) == 1
        })
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        if top + height > self.height || left + width > self.width {
            return Err(Error::CropTooLarge {
                crop: (top + height, left + width),
                image: self.dims(),
            });
        }
        let mut data = Vec::with_capacity(height * width);
        for y in top..top + height {
            let start = y * self.width + left;
            data.extend_from_slice(&self.data[start..start + width]);
        }
        Self::new(height, width, data)
    }

    pub fn flip_horizontal(&self) -> Self {
        Self::from_fn(self.height, self.width, |y, x| {
            self.get(y, self.width - 1 - x) == 1
        })
        .expect("same dims")
    }

    pub fn flip_vertical(&self) -> Self {
        Self::from_fn(self.height, self.width, |y, x| {
            self.get(self.height - 1 - y, x) == 1
        })
        .expect("same dims")
    }

    /// Loads a single-channel or colour image and binarizes it (nonzero → 1).
    pub fn load(path: &Path) -> Result<Self> {
        let img = open_image(path)?.to_luma8();
        let (w, h) = img.dimensions();
        Self::binarize(h as usize, w as usize, img.as_raw())
    }

    /// Saves as an 8-bit grayscale PNG with change pixels at 255.
    pub fn save(&self, path: &Path) -> Result<()> {
        let img = ::image::GrayImage::from_raw(
            self.width as u32,
            self.height as u32,
            self.data.iter().map(|&v| v * 255).collect(),
        )
        .expect("buffer length checked at construction");
        img.save(path).map_err(|e| Error::Encode(format!("{}: {e}", path.display())))
    }
}

fn open_image(path: &Path) -> Result<::image::DynamicImage> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let reader = ::image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    reader.decode().map_err(|e| Error::DecodeFailure {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

#[inline]
pub(crate) fn round_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Bilinear RGB lookup on an interleaved buffer. Integer coordinates are
/// pixel centres; anything outside `[0, w-1] × [0, h-1]` is out of source.
#[inline]
pub fn bilinear_rgb(data: &[u8], height: usize, width: usize, x: f64, y: f64) -> Option<[f64; 3]> {
    let max_x = (width - 1) as f64;
    let max_y = (height - 1) as f64;
    if !(x >= 0.0 && y >= 0.0 && x <= max_x && y <= max_y) {
        return None;
    }
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let at = |yy: usize, xx: usize, c: usize| data[(yy * width + xx) * 3 + c] as f64;
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let top = at(y0, x0, c) * (1.0 - fx) + at(y0, x1, c) * fx;
        let bottom = at(y1, x0, c) * (1.0 - fx) + at(y1, x1, c) * fx;
        *o = top * (1.0 - fy) + bottom * fy;
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_short_buffers() {
        assert!(matches!(ImageBuffer::new(0, 3, vec![]), Err(Error::EmptyImage)));
        assert!(matches!(
            ImageBuffer::new(2, 2, vec![0; 11]),
            Err(Error::BufferLength { .. })
        ));
    }

    #[test]
    fn strict_mask_rejects_third_value() {
        assert!(matches!(
            BinaryMask::new(1, 3, vec![0, 1, 255]),
            Err(Error::NonBinaryMask(255))
        ));
        let m = BinaryMask::binarize(1, 3, &[0, 7, 255]).unwrap();
        assert_eq!(m.as_raw(), &[0, 1, 1]);
    }

    #[test]
    fn bilinear_at_integer_coordinates_is_exact() {
        let img = ImageBuffer::from_fn(4, 5, |y, x| [(y * 10 + x) as u8, 3, 200]).unwrap();
        for y in 0..4 {
            for x in 0..5 {
                let v = img.sample_bilinear(x as f64, y as f64).unwrap();
                assert_eq!(v, [(y * 10 + x) as f64, 3.0, 200.0]);
            }
        }
        assert!(img.sample_bilinear(4.0001, 0.0).is_none());
        assert!(img.sample_bilinear(-0.1, 0.0).is_none());
    }

    #[test]
    fn flips_are_involutions() {
        let img = ImageBuffer::from_fn(3, 4, |y, x| [y as u8, x as u8, 9]).unwrap();
        assert_eq!(img.flip_horizontal().flip_horizontal(), img);
        assert_eq!(img.flip_vertical().flip_vertical(), img);
        assert_eq!(img.flip_horizontal().pixel(0, 0), [0, 3, 9]);
    }

    #[test]
    fn png_round_trip_keeps_channel_order() {
        let dir = tempfile::tempdir().unwrap();
        let img = ImageBuffer::from_fn(3, 2, |y, x| [255, (y * 40) as u8, (x * 90) as u8]).unwrap();
        let p = dir.path().join("a.png");
        img.save(&p).unwrap();
        assert_eq!(ImageBuffer::load(&p).unwrap(), img);

        let mask = BinaryMask::from_fn(3, 2, |y, x| (x + y) % 2 == 0).unwrap();
        let mp = dir.path().join("m.png");
        mask.save(&mp).unwrap();
        assert_eq!(BinaryMask::load(&mp).unwrap(), mask);
    }

    #[test]
    fn nearest_resize_keeps_binary() {
        let mask = BinaryMask::from_fn(5, 7, |y, x| y > x).unwrap();
        let r = mask.resize_nearest(11, 3).unwrap();
        assert!(r.as_raw().iter().all(|&v| v <= 1));
        assert_eq!(r.dims(), (11, 3));
    }
}
